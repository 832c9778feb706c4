//! The incremental monitor.
//!
//! State is two boolean arrays (`prev`, `cur`) and two integer arrays
//! (`mprev`, `mcur`), all indexed by the compiled table, plus the last
//! timestamp and a world counter. Each event is processed by one pass
//! over the table in index order; nothing about the trace's history is
//! retained beyond those arrays, so memory and per-event work depend only
//! on the compiled policy.
//!
//! The integer arrays track, for each metric since/earlier entry, the
//! smallest window bound at which the entry would still hold. That single
//! number is what lets the window checks use only the latest timestamp
//! difference instead of a queue of past timestamps.

use thiserror::Error;

use crate::compile::{CompiledPolicy, NodeKind};
use crate::trace::{TimedState, Trace};

#[derive(Debug, Error, PartialEq, Eq)]
pub enum MonitorError {
    #[error("non-monotone timestamp {ts} after {last_ts}: event stream is corrupt")]
    NonMonotoneTimestamp { last_ts: i64, ts: i64 },
}

/// Verdict for one processed world: per-policy violation flags in the
/// order of [`CompiledPolicy::roots`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Verdict {
    /// 1-based index of the world this verdict describes.
    pub world: u64,
    pub ts: i64,
    pub violated: Vec<bool>,
}

impl Verdict {
    pub fn any_violation(&self) -> bool {
        self.violated.iter().any(|&v| v)
    }
}

/// Deliberate single-comparison breakages of the metric step logic, used
/// by the differential harness and the conformance suite to prove that
/// boundary cases are actually exercised.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StepMutation {
    /// In the metric-since step, `n - delta >= m` becomes `>`.
    SinceWindowGeToGt,
    /// In the metric-earlier step, `delta < n` becomes `<=`.
    EarlierFreshLtToLe,
    /// In the metric-earlier step, `n - delta >= m` becomes `>`.
    EarlierWindowGeToGt,
}

impl StepMutation {
    pub const ALL: [StepMutation; 3] = [
        StepMutation::SinceWindowGeToGt,
        StepMutation::EarlierFreshLtToLe,
        StepMutation::EarlierWindowGeToGt,
    ];
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MonitorState {
    prev: Vec<bool>,
    cur: Vec<bool>,
    mprev: Vec<i64>,
    mcur: Vec<i64>,
    last_ts: i64,
    world_count: u64,
}

impl MonitorState {
    /// Processes the first world of a stream.
    pub fn init(cp: &CompiledPolicy, first: &TimedState) -> (MonitorState, Verdict) {
        let m = cp.table.len();
        debug_assert!(first.ts >= 0, "timestamps are non-negative by contract");
        let mut state = MonitorState {
            prev: vec![false; m],
            cur: vec![false; m],
            mprev: vec![0; m],
            mcur: vec![0; m],
            last_ts: first.ts,
            world_count: 1,
        };
        for (k, node) in cp.table.iter().enumerate() {
            state.cur[k] = match &node.kind {
                NodeKind::Bot => false,
                NodeKind::EventAtom(atom) => first.atoms.contains(atom),
                NodeKind::StaticAtom(truth) => *truth,
                NodeKind::DefAtom { body } => state.cur[*body],
                NodeKind::Neg(a) => !state.cur[*a],
                NodeKind::Or(a, b) => state.cur[*a] || state.cur[*b],
                // Nothing strictly earlier exists at the first world.
                NodeKind::Prev(_)
                | NodeKind::PrevWithin { .. }
                | NodeKind::Earlier(_)
                | NodeKind::EarlierWithin { .. } => false,
                NodeKind::Since { rhs, .. } => state.cur[*rhs],
                NodeKind::SinceWithin { rhs, .. } => {
                    let holds = state.cur[*rhs];
                    state.mcur[k] = i64::from(holds);
                    holds
                }
            };
        }
        let verdict = state.verdict(cp);
        (state, verdict)
    }

    /// Processes one subsequent world.
    pub fn step(
        &mut self,
        cp: &CompiledPolicy,
        event: &TimedState,
    ) -> Result<Verdict, MonitorError> {
        self.step_mutated(cp, event, None)
    }

    /// `step` with an optional injected comparison fault.
    pub fn step_mutated(
        &mut self,
        cp: &CompiledPolicy,
        event: &TimedState,
        mutation: Option<StepMutation>,
    ) -> Result<Verdict, MonitorError> {
        if event.ts < self.last_ts {
            return Err(MonitorError::NonMonotoneTimestamp {
                last_ts: self.last_ts,
                ts: event.ts,
            });
        }
        let delta = event.ts - self.last_ts;
        std::mem::swap(&mut self.prev, &mut self.cur);
        std::mem::swap(&mut self.mprev, &mut self.mcur);
        self.mcur.fill(0);

        let fresh_ok = |bound: i64| {
            if mutation == Some(StepMutation::EarlierFreshLtToLe) {
                delta <= bound
            } else {
                delta < bound
            }
        };
        let since_window_ok = |bound: i64, m: i64| {
            if mutation == Some(StepMutation::SinceWindowGeToGt) {
                bound - delta > m
            } else {
                bound - delta >= m
            }
        };
        let earlier_window_ok = |bound: i64, m: i64| {
            if mutation == Some(StepMutation::EarlierWindowGeToGt) {
                bound - delta > m
            } else {
                bound - delta >= m
            }
        };

        for (k, node) in cp.table.iter().enumerate() {
            self.cur[k] = match &node.kind {
                NodeKind::Bot => false,
                NodeKind::EventAtom(atom) => event.atoms.contains(atom),
                NodeKind::StaticAtom(truth) => *truth,
                NodeKind::DefAtom { body } => self.cur[*body],
                NodeKind::Neg(a) => !self.cur[*a],
                NodeKind::Or(a, b) => self.cur[*a] || self.cur[*b],
                NodeKind::Prev(a) => self.prev[*a],
                NodeKind::PrevWithin { bound, arg } => self.prev[*arg] && delta < *bound,
                NodeKind::Earlier(a) => self.prev[*a] || self.prev[k],
                NodeKind::EarlierWithin { bound, arg } => {
                    let fresh = self.prev[*arg] && fresh_ok(*bound);
                    let carried = self.prev[k] && earlier_window_ok(*bound, self.mprev[k]);
                    self.mcur[k] = if fresh {
                        delta + 1
                    } else if carried {
                        self.mprev[k] + delta
                    } else {
                        0
                    };
                    fresh || carried
                }
                NodeKind::Since { lhs, rhs } => self.cur[*rhs] || (self.cur[*lhs] && self.prev[k]),
                NodeKind::SinceWithin { bound, lhs, rhs } => {
                    let now = self.cur[*rhs];
                    let carried =
                        self.cur[*lhs] && self.prev[k] && since_window_ok(*bound, self.mprev[k]);
                    self.mcur[k] = if now {
                        1
                    } else if carried {
                        self.mprev[k] + delta
                    } else {
                        0
                    };
                    now || carried
                }
            };
        }
        self.last_ts = event.ts;
        self.world_count += 1;
        Ok(self.verdict(cp))
    }

    fn verdict(&self, cp: &CompiledPolicy) -> Verdict {
        Verdict {
            world: self.world_count,
            ts: self.last_ts,
            violated: cp.roots.iter().map(|r| self.cur[r.idx]).collect(),
        }
    }

    /// Truth of table entry `k` at the most recent world.
    pub fn truth(&self, k: usize) -> bool {
        self.cur[k]
    }

    /// Minimal-window value of table entry `k` at the most recent world;
    /// zero for unsatisfied or non-metric entries.
    pub fn minimal_window(&self, k: usize) -> i64 {
        self.mcur[k]
    }

    pub fn world_count(&self) -> u64 {
        self.world_count
    }

    pub fn last_ts(&self) -> i64 {
        self.last_ts
    }

    /// Number of state cells held: the four arrays plus the two scalars.
    /// Constant over the life of the monitor.
    pub fn cell_count(&self) -> usize {
        self.prev.len() + self.cur.len() + self.mprev.len() + self.mcur.len() + 2
    }
}

/// Fixed state-cell count for a compiled policy, independent of how many
/// events will be processed.
pub fn state_cells(cp: &CompiledPolicy) -> usize {
    4 * cp.table.len() + 2
}

/// Batch form: verdicts for every world of a stored trace. The empty
/// trace yields no verdicts.
pub fn run(cp: &CompiledPolicy, trace: &Trace) -> Result<Vec<Verdict>, MonitorError> {
    run_mutated(cp, trace, None)
}

/// See [`run`] and [`MonitorState::step_mutated`].
pub fn run_mutated(
    cp: &CompiledPolicy,
    trace: &Trace,
    mutation: Option<StepMutation>,
) -> Result<Vec<Verdict>, MonitorError> {
    let mut out = Vec::with_capacity(trace.len());
    let mut states = trace.states.iter();
    let Some(first) = states.next() else {
        return Ok(out);
    };
    let (mut ms, v) = MonitorState::init(cp, first);
    out.push(v);
    for event in states {
        out.push(ms.step_mutated(cp, event, mutation)?);
    }
    Ok(out)
}
