//! Differential testing and benchmarking.
//!
//! The harness generates random (specification, trace) pairs, runs the
//! incremental monitor and the reference semantics side by side, and
//! reports the first disagreement as a minimized, replayable bundle. It
//! also measures per-event monitor cost across trace lengths to back the
//! claim that neither memory nor time depends on how much history has
//! been processed.

pub mod gen;
mod shrink;

pub use gen::{gen_policy, gen_trace, GenConfig};

use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicU64, Ordering};
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::compile::{compile, CompileError, NodeKind};
use crate::dsl;
use crate::formula::{GroundAtom, PolicySpec};
use crate::monitor::{self, MonitorState, StepMutation};
use crate::oracle::Evaluator;
use crate::trace::{trace_to_string, TimedState, Trace};

/// A reproducible disagreement between monitor and oracle.
#[derive(Debug, Clone)]
pub struct Counterexample {
    /// Trial index that produced it.
    pub trial: u64,
    /// Seed that regenerates the unshrunk pair.
    pub seed: u64,
    /// Minimized specification, as parseable policy text.
    pub spec_text: String,
    /// Minimized trace, as JSON Lines.
    pub trace_jsonl: String,
    /// Expected-vs-got description of the disagreement.
    pub report: String,
}

impl Counterexample {
    /// Writes `repro.rmtl`, `repro.jsonl` and `report.txt` under `dir`.
    pub fn write_bundle(&self, dir: &Path) -> std::io::Result<(PathBuf, PathBuf, PathBuf)> {
        std::fs::create_dir_all(dir)?;
        let spec_path = dir.join("repro.rmtl");
        let trace_path = dir.join("repro.jsonl");
        let report_path = dir.join("report.txt");
        std::fs::write(&spec_path, &self.spec_text)?;
        std::fs::write(&trace_path, &self.trace_jsonl)?;
        std::fs::write(&report_path, &self.report)?;
        Ok((spec_path, trace_path, report_path))
    }
}

#[derive(Debug)]
pub struct DiffReport {
    pub trials: u64,
    pub worlds_checked: u64,
    pub metric_checks: u64,
    pub counterexample: Option<Counterexample>,
}

impl DiffReport {
    pub fn passed(&self) -> bool {
        self.counterexample.is_none()
    }
}

pub(crate) struct TrialOutcome {
    pub worlds: u64,
    pub metric_checks: u64,
    pub failure: Option<String>,
}

/// Runs monitor and oracle over one pair and reports the first
/// disagreement: a policy verdict differing from the satisfaction
/// relation, a minimal-window cell differing from its brute-force value,
/// or a violation of the recursive-form identity at some world.
pub(crate) fn check_pair(
    spec: &PolicySpec,
    trace: &Trace,
    mutation: Option<StepMutation>,
) -> Result<TrialOutcome, CompileError> {
    let cp = compile(spec)?;
    let mut outcome = TrialOutcome {
        worlds: 0,
        metric_checks: 0,
        failure: None,
    };
    let mut oracle = Evaluator::with_memo(spec, trace);
    let metric_nodes: Vec<usize> = cp
        .table
        .iter()
        .enumerate()
        .filter(|(_, n)| {
            matches!(
                n.kind,
                NodeKind::SinceWithin { .. } | NodeKind::EarlierWithin { .. }
            )
        })
        .map(|(k, _)| k)
        .collect();

    let mut state: Option<MonitorState> = None;
    for i in 1..=trace.len() {
        let event = trace.state(i);
        let verdict = match state.as_mut() {
            None => {
                let (ms, v) = MonitorState::init(&cp, event);
                state = Some(ms);
                v
            }
            Some(ms) => ms
                .step_mutated(&cp, event, mutation)
                .expect("generated timestamps are monotone"),
        };
        outcome.worlds += 1;
        let ms = state.as_ref().expect("initialized above");

        for (j, policy) in spec.policies.iter().enumerate() {
            let want = oracle
                .sat(i, &policy.formula)
                .expect("world index in range");
            if verdict.violated[j] != want {
                outcome.failure = Some(format!(
                    "world {i} (ts {}): policy {} monitor={} oracle={}",
                    event.ts, policy.name, verdict.violated[j], want
                ));
                return Ok(outcome);
            }
        }

        if mutation.is_none() {
            for &k in &metric_nodes {
                let node = &cp.table[k];
                let want = oracle
                    .minimal_window(i, &node.formula)
                    .expect("world index in range");
                let got = ms.minimal_window(k);
                outcome.metric_checks += 1;
                if got != want {
                    outcome.failure = Some(format!(
                        "world {i} (ts {}): minimal window of {} monitor={got} oracle={want}",
                        event.ts,
                        dsl::print_formula(&node.formula)
                    ));
                    return Ok(outcome);
                }
                let bound = node.kind.bound().expect("metric node has a bound");
                if got < 0 || got > bound {
                    outcome.failure = Some(format!(
                        "world {i}: minimal window {got} of {} outside 0..={bound}",
                        dsl::print_formula(&node.formula)
                    ));
                    return Ok(outcome);
                }
                if i > 1 && !recursive_form_holds(&mut oracle, trace, i, &node.formula) {
                    outcome.failure = Some(format!(
                        "world {i}: recursive form violated for {}",
                        dsl::print_formula(&node.formula)
                    ));
                    return Ok(outcome);
                }
            }
        }
    }

    // Guarded recursion bounds evaluation depth by roughly one
    // order-chain per world; a generous multiple of that guards against
    // runaway recursion sneaking in.
    let depth_cap = 4 * (trace.len() + 2) * (cp.table.len() + 4);
    assert!(
        oracle.max_depth() <= depth_cap,
        "oracle recursion depth {} exceeded sanity cap {depth_cap}",
        oracle.max_depth()
    );
    Ok(outcome)
}

/// The two recursive-form identities, evaluated entirely on the oracle
/// side (both directions of the iff, using the brute-force minimal
/// window at the previous world).
fn recursive_form_holds(
    oracle: &mut Evaluator<'_>,
    trace: &Trace,
    i: usize,
    f: &crate::formula::Formula,
) -> bool {
    use crate::formula::Formula;
    let delta = trace.ts(i) - trace.ts(i - 1);
    let lhs = oracle.sat(i, f).expect("in range");
    let rhs = match f {
        Formula::SinceWithin(n, a, b) => {
            let m_prev = oracle.minimal_window(i - 1, f).expect("in range");
            oracle.sat(i, b).expect("in range")
                || (oracle.sat(i, a).expect("in range")
                    && oracle.sat(i - 1, f).expect("in range")
                    && n - delta >= m_prev)
        }
        Formula::EarlierWithin(n, g) => {
            let m_prev = oracle.minimal_window(i - 1, f).expect("in range");
            (oracle.sat(i - 1, g).expect("in range") && delta < *n)
                || (oracle.sat(i - 1, f).expect("in range") && n - delta >= m_prev)
        }
        _ => return true,
    };
    lhs == rhs
}

/// Runs `trials` independent generate-and-compare trials. Trials are
/// pure functions of `(cfg.seed, trial index)` and run in parallel; the
/// reported counterexample is always the lowest-numbered failing trial,
/// minimized and rendered as replayable text.
pub fn differential(cfg: &GenConfig, trials: u64) -> DiffReport {
    differential_mutated(cfg, trials, None)
}

/// `differential` against a deliberately broken monitor step; used to
/// show the harness actually catches boundary faults.
pub fn differential_mutated(
    cfg: &GenConfig,
    trials: u64,
    mutation: Option<StepMutation>,
) -> DiffReport {
    let worlds = AtomicU64::new(0);
    let metric_checks = AtomicU64::new(0);
    let failing = (0..trials)
        .into_par_iter()
        .filter_map(|t| {
            let seed = gen::mix(cfg.seed, 0x5eed_0000 + t);
            let trial_cfg = cfg.with_seed(seed);
            let spec = gen_policy(&trial_cfg);
            let trace = gen_trace(&trial_cfg, &spec);
            let outcome =
                check_pair(&spec, &trace, mutation).expect("generated specs always compile");
            worlds.fetch_add(outcome.worlds, Ordering::Relaxed);
            metric_checks.fetch_add(outcome.metric_checks, Ordering::Relaxed);
            outcome.failure.map(|_| (t, seed, spec, trace))
        })
        .min_by_key(|(t, ..)| *t);

    let counterexample = failing.map(|(trial, seed, spec, trace)| {
        let fails = shrink::mismatch_predicate(mutation);
        let (spec, trace) = shrink::shrink(&spec, &trace, &fails);
        let report = check_pair(&spec, &trace, mutation)
            .map(|o| o.failure.unwrap_or_else(|| "disagreement vanished".into()))
            .unwrap_or_else(|e| format!("shrunk spec failed to compile: {e}"));
        Counterexample {
            trial,
            seed,
            spec_text: dsl::print(&spec),
            trace_jsonl: trace_to_string(&trace),
            report,
        }
    });
    DiffReport {
        trials,
        worlds_checked: worlds.into_inner(),
        metric_checks: metric_checks.into_inner(),
        counterexample,
    }
}

/// Exhaustive verdict comparison: every trace up to `max_len` over the
/// spec's ground event atoms (first timestamp 0, successive gaps drawn
/// from `gaps`), for every given spec.
#[derive(Debug, Default)]
pub struct ExhaustiveOutcome {
    pub specs: usize,
    pub traces_per_spec: u64,
    pub worlds: u64,
    pub verdict_mismatches: u64,
    pub first_mismatch: Option<String>,
}

pub fn exhaustive_check(
    specs: &[PolicySpec],
    max_len: usize,
    gaps: &[i64],
    mutation: Option<StepMutation>,
) -> ExhaustiveOutcome {
    let mut out = ExhaustiveOutcome {
        specs: specs.len(),
        ..ExhaustiveOutcome::default()
    };
    for spec in specs {
        let cp = compile(spec).expect("battery specs compile");
        let universe = gen::event_atom_universe(spec);
        assert!(
            universe.len() <= 3,
            "exhaustive enumeration is exponential in the atom universe"
        );
        let traces = enumerate_traces(&universe, max_len, gaps);
        out.traces_per_spec = traces.len() as u64;
        for trace in &traces {
            let verdicts =
                monitor::run_mutated(&cp, trace, mutation).expect("monotone by construction");
            let mut oracle = Evaluator::new(spec, trace);
            for i in 1..=trace.len() {
                out.worlds += 1;
                for (j, policy) in spec.policies.iter().enumerate() {
                    let want = oracle.sat(i, &policy.formula).expect("in range");
                    if verdicts[i - 1].violated[j] != want {
                        out.verdict_mismatches += 1;
                        if out.first_mismatch.is_none() {
                            out.first_mismatch = Some(format!(
                                "policy {} world {i} of trace {} monitor={} oracle={want}",
                                policy.name,
                                trace_to_string(trace).replace('\n', " | "),
                                verdicts[i - 1].violated[j],
                            ));
                        }
                    }
                }
            }
        }
    }
    out
}

/// Every trace of length `0..=max_len` over subsets of `universe`, with
/// the first world at timestamp 0 and each later world offset by one of
/// `gaps`.
pub fn enumerate_traces(universe: &[GroundAtom], max_len: usize, gaps: &[i64]) -> Vec<Trace> {
    let subsets: Vec<Vec<GroundAtom>> = (0..(1u32 << universe.len()))
        .map(|mask| {
            universe
                .iter()
                .enumerate()
                .filter(|(b, _)| mask & (1 << b) != 0)
                .map(|(_, a)| a.clone())
                .collect()
        })
        .collect();
    let mut out = vec![Trace::default()];
    let mut frontier: Vec<Vec<TimedState>> = vec![vec![]];
    for _ in 0..max_len {
        let mut next = Vec::new();
        for partial in &frontier {
            let ts_choices: Vec<i64> = match partial.last() {
                None => vec![0],
                Some(last) => gaps.iter().map(|g| last.ts + g).collect(),
            };
            for ts in ts_choices {
                for subset in &subsets {
                    let mut ext = partial.clone();
                    ext.push(TimedState::new(ts, subset.iter().cloned()));
                    next.push(ext);
                }
            }
        }
        out.extend(next.iter().map(|w| Trace::new(w.clone())));
        frontier = next;
    }
    out
}

/// Policy battery over a one-predicate, one-constant alphabet, covering
/// every operator (and the metric operators at several bounds, nested
/// both ways) plus recursive definitions under each guard.
pub fn operator_battery() -> Vec<(String, PolicySpec)> {
    const PRELUDE: &str = "sort app\nconst c : app\nevent p(app)\n";
    let sources: Vec<(&str, String)> = vec![
        ("bot", "policy q := false".into()),
        ("atom", "policy q := p(c)".into()),
        ("neg", "policy q := not p(c)".into()),
        ("or", "policy q := p(c) or not p(c)".into()),
        ("and", "policy q := p(c) and prev p(c)".into()),
        ("implies", "policy q := p(c) implies earlier p(c)".into()),
        ("top-since", "policy q := true since p(c)".into()),
        ("prev", "policy q := prev p(c)".into()),
        ("prev-prev", "policy q := prev prev p(c)".into()),
        ("prevw-1", "policy q := prev[1] p(c)".into()),
        ("prevw-2", "policy q := prev[2] p(c)".into()),
        ("once", "policy q := once p(c)".into()),
        ("oncew-2", "policy q := once[2] p(c)".into()),
        ("oncew-3", "policy q := once[3] p(c)".into()),
        ("earlier", "policy q := earlier p(c)".into()),
        ("earlierw-1", "policy q := earlier[1] p(c)".into()),
        ("earlierw-2", "policy q := earlier[2] p(c)".into()),
        ("earlierw-3", "policy q := earlier[3] p(c)".into()),
        ("since", "policy q := not p(c) since p(c)".into()),
        ("sincew-2", "policy q := p(c) since[2] not p(c)".into()),
        ("sincew-3", "policy q := not p(c) since[3] p(c)".into()),
        (
            "sincew-in-earlierw",
            "policy q := earlier[2] (not p(c) since[2] p(c))".into(),
        ),
        (
            "oncew-in-earlierw",
            "policy q := earlier[2] once[2] p(c)".into(),
        ),
        (
            "earlierw-in-earlierw",
            "policy q := earlier[2] earlier[2] p(c)".into(),
        ),
        (
            "sincew-in-sincew",
            "policy q := p(c) since[3] (true since[2] p(c))".into(),
        ),
        ("exists", "policy q := exists x:app. p(x)".into()),
        (
            "forall",
            "policy q := forall x:app. p(x) implies prev p(x)".into(),
        ),
        (
            "recursion-earlierw",
            "def r(x:app) := p(x) or earlier[2] r(x)\npolicy q := r(c)".into(),
        ),
        (
            "recursion-prev",
            "def r(x:app) := p(x) or prev r(x)\npolicy q := r(c)".into(),
        ),
        (
            "recursion-prevw",
            "def r(x:app) := p(x) or prev[1] r(x)\npolicy q := r(c)".into(),
        ),
        (
            "recursion-earlier",
            "def r(x:app) := p(x) or earlier r(x)\npolicy q := r(c)".into(),
        ),
        (
            "recursion-mutual",
            "def r(x:app) := p(x) or prev w(x)\ndef w(x:app) := earlier[2] r(x)\npolicy q := r(c)"
                .into(),
        ),
        (
            "recursion-in-since",
            "def r(x:app) := p(x) or prev r(x)\npolicy q := r(c) since[2] p(c)".into(),
        ),
        (
            "recursion-chain",
            "def t(x:app, y:app) := p(x) or exists z:app. earlier[2] t(x,z) and p(y)\npolicy q := t(c,c)"
                .into(),
        ),
        // Negation over a recursive predicate is legal as long as the
        // occurrence itself is guarded.
        (
            "recursion-negated",
            "def r(x:app) := p(x) or not earlier[2] r(x)\npolicy q := r(c)".into(),
        ),
        (
            "recursion-negated-prev",
            "def r(x:app) := not prev not r(x)\npolicy q := r(c)".into(),
        ),
    ];
    sources
        .into_iter()
        .map(|(name, body)| {
            let src = format!("{PRELUDE}{body}\n");
            let spec = dsl::parse(&src)
                .unwrap_or_else(|e| panic!("battery entry {name} must parse: {e:?}"));
            (name.to_string(), spec)
        })
        .collect()
}

#[derive(Debug, Clone)]
pub struct BenchReport {
    pub policy: String,
    pub trace_length: usize,
    pub median_ns: u64,
    pub p95_ns: u64,
    pub peak_state_cells: usize,
}

/// Streams synthetic traces of each requested length through a fresh
/// monitor, timing each `step` call after a 1000-event warmup. Events are
/// produced outside the timed section and never stored, so the run itself
/// is evidence that memory stays flat.
pub fn bench(
    spec: &PolicySpec,
    lengths: &[usize],
    seed: u64,
) -> Result<Vec<BenchReport>, CompileError> {
    let cp = compile(spec)?;
    let policy = cp
        .roots
        .iter()
        .map(|r| r.name.clone())
        .collect::<Vec<_>>()
        .join(",");
    let universe = gen::event_atom_universe(spec);
    let mut reports = Vec::new();
    for &length in lengths {
        let mut rng = ChaCha8Rng::seed_from_u64(gen::mix(seed, length as u64));
        let mut ts: i64 = 0;
        let next_event = |rng: &mut ChaCha8Rng, ts: &mut i64| {
            *ts += rng.gen_range(0..=3);
            let atoms = universe
                .iter()
                .filter(|_| rng.gen_bool(0.3))
                .cloned()
                .collect::<Vec<_>>();
            TimedState::new(*ts, atoms)
        };
        let (mut ms, _) = MonitorState::init(&cp, &next_event(&mut rng, &mut ts));
        let cells_at_start = ms.cell_count();
        for _ in 0..1000 {
            ms.step(&cp, &next_event(&mut rng, &mut ts))
                .expect("synthetic timestamps are monotone");
        }
        let mut samples = Vec::with_capacity(length);
        for _ in 0..length {
            let event = next_event(&mut rng, &mut ts);
            let started = Instant::now();
            ms.step(&cp, &event)
                .expect("synthetic timestamps are monotone");
            samples.push(started.elapsed().as_nanos() as u64);
        }
        assert_eq!(ms.cell_count(), cells_at_start);
        assert_eq!(ms.cell_count(), monitor::state_cells(&cp));
        samples.sort_unstable();
        reports.push(BenchReport {
            policy: policy.clone(),
            trace_length: length,
            median_ns: percentile(&samples, 0.5),
            p95_ns: percentile(&samples, 0.95),
            peak_state_cells: monitor::state_cells(&cp),
        });
    }
    Ok(reports)
}

fn percentile(sorted: &[u64], frac: f64) -> u64 {
    if sorted.is_empty() {
        return 0;
    }
    let idx = ((sorted.len() as f64 * frac) as usize).min(sorted.len() - 1);
    sorted[idx]
}

/// Strips one guard that is the sole protection of some recursive
/// occurrence in a definition body, yielding a spec that must fail
/// validation. Returns `None` when no definition has a singly-guarded
/// occurrence.
pub fn strip_one_guard(spec: &PolicySpec, choose: u64) -> Option<PolicySpec> {
    use crate::formula::Formula;

    // Paths to guards that protect exactly-once-guarded occurrences.
    fn find(f: &Formula, guards_above: u32, out: &mut Vec<Vec<usize>>, path: &mut Vec<usize>) {
        let is_guard = matches!(
            f,
            Formula::Prev(_)
                | Formula::PrevWithin(..)
                | Formula::Earlier(_)
                | Formula::EarlierWithin(..)
        );
        if is_guard && guards_above == 0 {
            // Would removing this guard expose an occurrence? Only if the
            // subtree has a defined-predicate occurrence with no further
            // guard beneath this one.
            let inner = match f {
                Formula::Prev(g)
                | Formula::PrevWithin(_, g)
                | Formula::Earlier(g)
                | Formula::EarlierWithin(_, g) => g,
                _ => unreachable!(),
            };
            if has_unguarded_defatom(inner) {
                out.push(path.clone());
            }
        }
        let below = guards_above + u32::from(is_guard);
        match f {
            Formula::Bot | Formula::Atom { .. } | Formula::DefAtom { .. } => {}
            Formula::Neg(g)
            | Formula::Once(g)
            | Formula::OnceWithin(_, g)
            | Formula::Exists { body: g, .. } => {
                path.push(0);
                find(g, guards_above, out, path);
                path.pop();
            }
            Formula::Prev(g)
            | Formula::PrevWithin(_, g)
            | Formula::Earlier(g)
            | Formula::EarlierWithin(_, g) => {
                path.push(0);
                find(g, below, out, path);
                path.pop();
            }
            Formula::Or(a, b) | Formula::Since(a, b) | Formula::SinceWithin(_, a, b) => {
                path.push(0);
                find(a, guards_above, out, path);
                path.pop();
                path.push(1);
                find(b, guards_above, out, path);
                path.pop();
            }
        }
    }

    fn has_unguarded_defatom(f: &Formula) -> bool {
        match f {
            Formula::DefAtom { .. } => true,
            Formula::Bot | Formula::Atom { .. } => false,
            Formula::Prev(_)
            | Formula::PrevWithin(..)
            | Formula::Earlier(_)
            | Formula::EarlierWithin(..) => false,
            Formula::Neg(g)
            | Formula::Once(g)
            | Formula::OnceWithin(_, g)
            | Formula::Exists { body: g, .. } => has_unguarded_defatom(g),
            Formula::Or(a, b) | Formula::Since(a, b) | Formula::SinceWithin(_, a, b) => {
                has_unguarded_defatom(a) || has_unguarded_defatom(b)
            }
        }
    }

    fn remove_at(f: &Formula, path: &[usize]) -> Formula {
        if path.is_empty() {
            return match f {
                Formula::Prev(g)
                | Formula::PrevWithin(_, g)
                | Formula::Earlier(g)
                | Formula::EarlierWithin(_, g) => g.as_ref().clone(),
                _ => unreachable!("paths point at guards"),
            };
        }
        let (head, rest) = (path[0], &path[1..]);
        match f {
            Formula::Neg(g) => Formula::neg(remove_at(g, rest)),
            Formula::Once(g) => Formula::once(remove_at(g, rest)),
            Formula::OnceWithin(n, g) => Formula::once_within(*n, remove_at(g, rest)),
            Formula::Exists { var, sort, body } => {
                Formula::exists(var.clone(), sort.clone(), remove_at(body, rest))
            }
            Formula::Prev(g) => Formula::prev(remove_at(g, rest)),
            Formula::PrevWithin(n, g) => Formula::prev_within(*n, remove_at(g, rest)),
            Formula::Earlier(g) => Formula::earlier(remove_at(g, rest)),
            Formula::EarlierWithin(n, g) => Formula::earlier_within(*n, remove_at(g, rest)),
            Formula::Or(a, b) => {
                if head == 0 {
                    Formula::or(remove_at(a, rest), b.as_ref().clone())
                } else {
                    Formula::or(a.as_ref().clone(), remove_at(b, rest))
                }
            }
            Formula::Since(a, b) => {
                if head == 0 {
                    Formula::since(remove_at(a, rest), b.as_ref().clone())
                } else {
                    Formula::since(a.as_ref().clone(), remove_at(b, rest))
                }
            }
            Formula::SinceWithin(n, a, b) => {
                if head == 0 {
                    Formula::since_within(*n, remove_at(a, rest), b.as_ref().clone())
                } else {
                    Formula::since_within(*n, a.as_ref().clone(), remove_at(b, rest))
                }
            }
            Formula::Bot | Formula::Atom { .. } | Formula::DefAtom { .. } => unreachable!(),
        }
    }

    let mut candidates: Vec<(usize, Vec<usize>)> = Vec::new();
    for (d, def) in spec.defs.iter().enumerate() {
        let mut paths = Vec::new();
        find(&def.body, 0, &mut paths, &mut Vec::new());
        for p in paths {
            candidates.push((d, p));
        }
    }
    if candidates.is_empty() {
        return None;
    }
    let (d, path) = &candidates[(choose as usize) % candidates.len()];
    let mut mutated = spec.clone();
    mutated.defs[*d].body = remove_at(&spec.defs[*d].body, path);
    Some(mutated)
}
