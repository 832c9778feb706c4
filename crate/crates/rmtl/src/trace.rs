//! Timed event traces and their JSON Lines wire format.
//!
//! One world per line: `{"ts": <int>, "events": [{"pred": <str>, "args":
//! [<str>...]}]}`. Timestamps must be non-negative and non-decreasing;
//! consecutive worlds may share a timestamp.

use std::collections::BTreeSet;
use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::formula::{GroundAtom, PolicySpec, PredKind};

/// One trace element: a timestamp plus the set of ground event atoms that
/// occurred at that world.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TimedState {
    pub ts: i64,
    pub atoms: BTreeSet<GroundAtom>,
}

impl TimedState {
    pub fn new(ts: i64, atoms: impl IntoIterator<Item = GroundAtom>) -> Self {
        TimedState {
            ts,
            atoms: atoms.into_iter().collect(),
        }
    }
}

/// A fully materialized trace, used by the oracle and by tests. The
/// monitor itself never needs one; it consumes events one at a time.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Trace {
    pub states: Vec<TimedState>,
}

impl Trace {
    pub fn new(states: Vec<TimedState>) -> Self {
        Trace { states }
    }

    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    /// State at 1-based world index `i`.
    pub fn state(&self, i: usize) -> &TimedState {
        &self.states[i - 1]
    }

    /// Timestamp at 1-based world index `i`.
    pub fn ts(&self, i: usize) -> i64 {
        self.states[i - 1].ts
    }

    /// Shifts every timestamp by a constant. Verdicts only depend on
    /// timestamp differences, which this preserves.
    pub fn shifted(&self, delta: i64) -> Trace {
        Trace {
            states: self
                .states
                .iter()
                .map(|s| TimedState {
                    ts: s.ts + delta,
                    atoms: s.atoms.clone(),
                })
                .collect(),
        }
    }
}

#[derive(Debug, Error)]
pub enum TraceError {
    #[error("line {line}: malformed trace line: {detail}")]
    MalformedLine { line: u64, detail: String },
    #[error("line {line}: non-monotone timestamp {ts} (previous was {prev})")]
    NonMonotoneTimestamp { line: u64, prev: i64, ts: i64 },
    #[error("line {line}: unknown predicate `{name}`")]
    UnknownPredicate { line: u64, name: String },
    #[error("line {line}: unknown constant `{name}`")]
    UnknownConstant { line: u64, name: String },
    #[error("line {line}: `{pred}` expects {expected} arguments, got {got}")]
    ArityMismatch {
        line: u64,
        pred: String,
        expected: usize,
        got: usize,
    },
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

impl TraceError {
    pub fn line(&self) -> Option<u64> {
        match self {
            TraceError::MalformedLine { line, .. }
            | TraceError::NonMonotoneTimestamp { line, .. }
            | TraceError::UnknownPredicate { line, .. }
            | TraceError::UnknownConstant { line, .. }
            | TraceError::ArityMismatch { line, .. } => Some(*line),
            TraceError::Io(_) => None,
        }
    }
}

#[derive(Serialize, Deserialize)]
struct WireWorld {
    ts: i64,
    events: Vec<WireEvent>,
}

#[derive(Serialize, Deserialize)]
struct WireEvent {
    pred: String,
    args: Vec<String>,
}

/// Streaming trace reader: one world per `next()`, holding only the
/// current line in memory. Validates timestamps and atom well-formedness
/// against the policy specification as it goes.
pub struct TraceReader<'a, R> {
    spec: &'a PolicySpec,
    input: R,
    line_no: u64,
    last_ts: Option<i64>,
    buf: String,
}

impl<'a, R: BufRead> TraceReader<'a, R> {
    pub fn new(spec: &'a PolicySpec, input: R) -> Self {
        TraceReader {
            spec,
            input,
            line_no: 0,
            last_ts: None,
            buf: String::new(),
        }
    }

    fn check_atom(&self, atom: &GroundAtom) -> Result<(), TraceError> {
        let line = self.line_no;
        let decl = match self.spec.predicate(&atom.pred) {
            Some(d) if d.kind == PredKind::Event => d,
            Some(_) => {
                return Err(TraceError::UnknownPredicate {
                    line,
                    name: format!("{} (not an event predicate)", atom.pred),
                })
            }
            None => {
                return Err(TraceError::UnknownPredicate {
                    line,
                    name: atom.pred.clone(),
                })
            }
        };
        if decl.arg_sorts.len() != atom.args.len() {
            return Err(TraceError::ArityMismatch {
                line,
                pred: atom.pred.clone(),
                expected: decl.arg_sorts.len(),
                got: atom.args.len(),
            });
        }
        for (c, sort) in atom.args.iter().zip(&decl.arg_sorts) {
            if !self.spec.domain(sort).iter().any(|d| d == c) {
                return Err(TraceError::UnknownConstant {
                    line,
                    name: c.clone(),
                });
            }
        }
        Ok(())
    }

    fn parse_line(&mut self) -> Result<TimedState, TraceError> {
        let world: WireWorld =
            serde_json::from_str(self.buf.trim_end()).map_err(|e| TraceError::MalformedLine {
                line: self.line_no,
                detail: e.to_string(),
            })?;
        if world.ts < 0 {
            return Err(TraceError::MalformedLine {
                line: self.line_no,
                detail: format!("negative timestamp {}", world.ts),
            });
        }
        if let Some(prev) = self.last_ts {
            if world.ts < prev {
                return Err(TraceError::NonMonotoneTimestamp {
                    line: self.line_no,
                    prev,
                    ts: world.ts,
                });
            }
        }
        let mut atoms = BTreeSet::new();
        for ev in world.events {
            let atom = GroundAtom::new(ev.pred, ev.args);
            self.check_atom(&atom)?;
            atoms.insert(atom);
        }
        self.last_ts = Some(world.ts);
        Ok(TimedState {
            ts: world.ts,
            atoms,
        })
    }
}

impl<R: BufRead> Iterator for TraceReader<'_, R> {
    type Item = Result<TimedState, TraceError>;

    fn next(&mut self) -> Option<Self::Item> {
        loop {
            self.buf.clear();
            self.line_no += 1;
            match self.input.read_line(&mut self.buf) {
                Ok(0) => return None,
                Ok(_) => {
                    if self.buf.trim().is_empty() {
                        continue;
                    }
                    return Some(self.parse_line());
                }
                Err(e) => return Some(Err(e.into())),
            }
        }
    }
}

/// Reads and materializes a whole trace.
pub fn read_trace<R: BufRead>(spec: &PolicySpec, input: R) -> Result<Trace, TraceError> {
    let states: Result<Vec<_>, _> = TraceReader::new(spec, input).collect();
    Ok(Trace::new(states?))
}

/// Serializes one world as its canonical wire line (atoms sorted by
/// predicate name, then arguments), without a trailing newline.
pub fn world_to_line(state: &TimedState) -> String {
    let world = WireWorld {
        ts: state.ts,
        events: state
            .atoms
            .iter()
            .map(|a| WireEvent {
                pred: a.pred.clone(),
                args: a.args.clone(),
            })
            .collect(),
    };
    serde_json::to_string(&world).expect("trace line serialization cannot fail")
}

/// Writes a trace in the JSON Lines format, one world per line.
pub fn write_trace<W: Write>(out: &mut W, trace: &Trace) -> std::io::Result<()> {
    for state in &trace.states {
        writeln!(out, "{}", world_to_line(state))?;
    }
    Ok(())
}

/// Renders a trace to a string, mostly for tests and repro bundles.
pub fn trace_to_string(trace: &Trace) -> String {
    let mut buf = Vec::new();
    write_trace(&mut buf, trace).expect("writing to a Vec cannot fail");
    String::from_utf8(buf).expect("trace lines are valid UTF-8")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dsl;

    fn spec() -> PolicySpec {
        dsl::parse("sort app\nconst a : app\nconst b : app\nevent call(app, app)\nevent ping()\n")
            .unwrap()
    }

    #[test]
    fn reads_example_lines() {
        let spec = spec();
        let input = "{\"ts\":0,\"events\":[{\"pred\":\"call\",\"args\":[\"a\",\"b\"]}]}\n{\"ts\":5,\"events\":[]}\n";
        let trace = read_trace(&spec, input.as_bytes()).unwrap();
        assert_eq!(trace.len(), 2);
        assert_eq!(
            trace.state(1).atoms.iter().next().unwrap(),
            &GroundAtom::new("call", vec!["a".into(), "b".into()])
        );
        assert!(trace.state(2).atoms.is_empty());
        assert_eq!(trace.ts(2), 5);
    }

    #[test]
    fn non_monotone_timestamp_reports_line() {
        let spec = spec();
        let input =
            "{\"ts\":0,\"events\":[]}\n{\"ts\":5,\"events\":[]}\n{\"ts\":3,\"events\":[]}\n";
        let err = read_trace(&spec, input.as_bytes()).unwrap_err();
        match err {
            TraceError::NonMonotoneTimestamp { line, prev, ts } => {
                assert_eq!((line, prev, ts), (3, 5, 3));
            }
            other => panic!("unexpected error: {other}"),
        }
    }

    #[test]
    fn unknown_predicate_and_constant() {
        let spec = spec();
        let bad_pred = "{\"ts\":0,\"events\":[{\"pred\":\"nope\",\"args\":[]}]}\n";
        assert!(matches!(
            read_trace(&spec, bad_pred.as_bytes()),
            Err(TraceError::UnknownPredicate { .. })
        ));
        let bad_const = "{\"ts\":0,\"events\":[{\"pred\":\"call\",\"args\":[\"a\",\"zz\"]}]}\n";
        assert!(matches!(
            read_trace(&spec, bad_const.as_bytes()),
            Err(TraceError::UnknownConstant { .. })
        ));
    }

    #[test]
    fn malformed_line_reports_line_number() {
        let spec = spec();
        let input = "{\"ts\":0,\"events\":[]}\nnot json\n";
        match read_trace(&spec, input.as_bytes()) {
            Err(TraceError::MalformedLine { line, .. }) => assert_eq!(line, 2),
            other => panic!("unexpected result: {other:?}"),
        }
    }

    #[test]
    fn reader_is_lazy_one_line_at_a_time() {
        let spec = spec();
        // Garbage later in the stream must not prevent reading the first
        // world: the reader holds one line at a time.
        let input = "{\"ts\":0,\"events\":[]}\nthis is not json\n";
        let mut reader = TraceReader::new(&spec, input.as_bytes());
        let first = reader.next().unwrap().unwrap();
        assert_eq!(first.ts, 0);
        assert!(matches!(
            reader.next().unwrap(),
            Err(TraceError::MalformedLine { line: 2, .. })
        ));
    }

    #[test]
    fn writer_is_canonical_and_round_trips() {
        let spec = spec();
        let state = TimedState::new(
            7,
            [
                GroundAtom::new("call", vec!["b".into(), "a".into()]),
                GroundAtom::new("call", vec!["a".into(), "b".into()]),
                GroundAtom::new("ping", vec![]),
            ],
        );
        let trace = Trace::new(vec![state]);
        let text = trace_to_string(&trace);
        assert_eq!(
            text,
            "{\"ts\":7,\"events\":[{\"pred\":\"call\",\"args\":[\"a\",\"b\"]},{\"pred\":\"call\",\"args\":[\"b\",\"a\"]},{\"pred\":\"ping\",\"args\":[]}]}\n"
        );
        let back = read_trace(&spec, text.as_bytes()).unwrap();
        assert_eq!(back, trace);
    }

    #[test]
    fn empty_trace_round_trips() {
        let spec = spec();
        let trace = Trace::default();
        let text = trace_to_string(&trace);
        assert_eq!(text, "");
        assert_eq!(read_trace(&spec, text.as_bytes()).unwrap(), trace);
    }
}
