//! Reference semantics, evaluated directly over a fully stored trace.
//!
//! This is the ground truth the incremental monitor is tested against, so
//! every operator is evaluated by a straight transcription of its
//! satisfaction clause. Nothing here is incremental; cost grows with the
//! trace and that is fine. An optional memo table (keyed by world and
//! ground formula) makes large differential runs affordable without
//! changing any semantics.

use std::collections::HashMap;

use thiserror::Error;

use crate::formula::{Formula, GroundAtom, PolicySpec, PredKind, Term};
use crate::trace::Trace;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum OracleError {
    #[error("world index {world} out of range 1..={len}")]
    WorldOutOfRange { world: usize, len: usize },
}

/// Evaluates closed formulas over one spec and one trace. Worlds are
/// 1-indexed. Construction is cheap; reuse one evaluator per trace when
/// memoization is on so results are shared across queries.
pub struct Evaluator<'a> {
    spec: &'a PolicySpec,
    trace: &'a Trace,
    memo: Option<Memo>,
    /// Instantiated definition bodies, keyed by the ground head atom.
    inst_cache: HashMap<GroundAtom, Formula>,
    depth: usize,
    max_depth: usize,
}

#[derive(Default)]
struct Memo {
    intern: HashMap<Formula, u32>,
    truth: HashMap<(u32, u32), bool>,
}

impl<'a> Evaluator<'a> {
    pub fn new(spec: &'a PolicySpec, trace: &'a Trace) -> Self {
        Evaluator {
            spec,
            trace,
            memo: None,
            inst_cache: HashMap::new(),
            depth: 0,
            max_depth: 0,
        }
    }

    /// Enables the memo table. Semantics are unchanged; only repeated
    /// subproblems get cheaper.
    pub fn with_memo(spec: &'a PolicySpec, trace: &'a Trace) -> Self {
        let mut e = Evaluator::new(spec, trace);
        e.memo = Some(Memo::default());
        e
    }

    /// Deepest recursion seen so far; the guarded-recursion termination
    /// argument bounds this by the world index times the longest
    /// evaluation-order chain, which tests assert.
    pub fn max_depth(&self) -> usize {
        self.max_depth
    }

    pub fn sat(&mut self, world: usize, f: &Formula) -> Result<bool, OracleError> {
        if world < 1 || world > self.trace.len() {
            return Err(OracleError::WorldOutOfRange {
                world,
                len: self.trace.len(),
            });
        }
        Ok(self.eval(world, f))
    }

    /// Truth of `f` at every world, in trace order.
    pub fn sat_all(&mut self, f: &Formula) -> Vec<bool> {
        (1..=self.trace.len()).map(|i| self.eval(i, f)).collect()
    }

    /// The least bound `m >= 1` at which a satisfied metric formula still
    /// holds, or 0 when the formula does not hold at its own bound. Only
    /// meaningful for metric since/earlier formulas.
    ///
    /// Computed by a linear scan over candidate bounds; this is the
    /// brute-force definition, independent of the monitor's bookkeeping.
    pub fn minimal_window(&mut self, world: usize, f: &Formula) -> Result<i64, OracleError> {
        if world < 1 || world > self.trace.len() {
            return Err(OracleError::WorldOutOfRange {
                world,
                len: self.trace.len(),
            });
        }
        let (n, rebound): (i64, Box<dyn Fn(i64) -> Formula>) = match f {
            Formula::SinceWithin(n, a, b) => {
                let (a, b) = (a.clone(), b.clone());
                (
                    *n,
                    Box::new(move |m| Formula::SinceWithin(m, a.clone(), b.clone())),
                )
            }
            Formula::EarlierWithin(n, g) => {
                let g = g.clone();
                (*n, Box::new(move |m| Formula::EarlierWithin(m, g.clone())))
            }
            other => panic!("minimal_window expects a metric since/earlier formula, got {other:?}"),
        };
        if !self.eval(world, f) {
            return Ok(0);
        }
        for m in 1..=n {
            if self.eval(world, &rebound(m)) {
                return Ok(m);
            }
        }
        unreachable!("a satisfied metric formula holds at its own bound")
    }

    fn eval(&mut self, i: usize, f: &Formula) -> bool {
        if let Some(memo) = &self.memo {
            if let Some(&id) = memo.intern.get(f) {
                if let Some(&v) = memo.truth.get(&(id, i as u32)) {
                    return v;
                }
            }
        }
        self.depth += 1;
        self.max_depth = self.max_depth.max(self.depth);
        let value = self.eval_clause(i, f);
        self.depth -= 1;
        if let Some(memo) = &mut self.memo {
            let next_id = memo.intern.len() as u32;
            let id = *memo.intern.entry(f.clone()).or_insert(next_id);
            memo.truth.insert((id, i as u32), value);
        }
        value
    }

    fn eval_clause(&mut self, i: usize, f: &Formula) -> bool {
        let trace = self.trace;
        let spec = self.spec;
        let tau = |j: usize| trace.ts(j);
        match f {
            Formula::Bot => false,
            Formula::Neg(g) => !self.eval(i, g),
            Formula::Atom { pred, args } => {
                let atom = ground(pred, args);
                match spec.predicate(pred).map(|d| d.kind) {
                    Some(PredKind::Static) => spec.static_facts.contains(&atom),
                    _ => trace.state(i).atoms.contains(&atom),
                }
            }
            Formula::DefAtom { pred, args } => {
                let atom = ground(pred, args);
                let body = match self.inst_cache.get(&atom) {
                    Some(b) => b.clone(),
                    None => {
                        let def = self
                            .spec
                            .def(pred)
                            .expect("validated spec has a definition for every defined predicate");
                        let inst = self.spec.instantiate_def(def, &atom.args);
                        self.inst_cache.insert(atom, inst.clone());
                        inst
                    }
                };
                self.eval(i, &body)
            }
            Formula::Or(a, b) => self.eval(i, a) || self.eval(i, b),
            Formula::Prev(g) => i > 1 && self.eval(i - 1, g),
            Formula::PrevWithin(n, g) => i > 1 && self.eval(i - 1, g) && tau(i) - tau(i - 1) < *n,
            Formula::Once(g) => {
                for j in 1..=i {
                    if self.eval(j, g) {
                        return true;
                    }
                }
                false
            }
            Formula::OnceWithin(n, g) => {
                for j in (1..=i).rev() {
                    if tau(i) - tau(j) >= *n {
                        break;
                    }
                    if self.eval(j, g) {
                        return true;
                    }
                }
                false
            }
            Formula::Earlier(g) => {
                for j in 1..i {
                    if self.eval(j, g) {
                        return true;
                    }
                }
                false
            }
            Formula::EarlierWithin(n, g) => {
                for j in (1..i).rev() {
                    if tau(i) - tau(j) >= *n {
                        break;
                    }
                    if self.eval(j, g) {
                        return true;
                    }
                }
                false
            }
            Formula::Since(a, b) => {
                // Scan witnesses j from the present backwards, tracking
                // whether `a` held at every k in (j, i].
                for j in (1..=i).rev() {
                    if self.eval(j, b) {
                        return true;
                    }
                    if !self.eval(j, a) {
                        return false;
                    }
                }
                false
            }
            Formula::SinceWithin(n, a, b) => {
                for j in (1..=i).rev() {
                    if tau(i) - tau(j) >= *n {
                        return false;
                    }
                    if self.eval(j, b) {
                        return true;
                    }
                    if !self.eval(j, a) {
                        return false;
                    }
                }
                false
            }
            Formula::Exists { var, sort, body } => {
                for c in spec.domain(sort) {
                    let binding = std::collections::BTreeMap::from([(var.clone(), c.clone())]);
                    let inst = body.substitute_unchecked(&binding);
                    if self.eval(i, &inst) {
                        return true;
                    }
                }
                false
            }
        }
    }
}

fn ground(pred: &str, args: &[Term]) -> GroundAtom {
    let consts: Vec<String> = args
        .iter()
        .map(|t| match t {
            Term::Const(c) => c.clone(),
            Term::Var(v) => panic!("oracle requires closed formulas, found free variable `{v}`"),
        })
        .collect();
    GroundAtom::new(pred, consts)
}

/// One-shot satisfaction check, no memoization.
pub fn sat(
    spec: &PolicySpec,
    trace: &Trace,
    world: usize,
    f: &Formula,
) -> Result<bool, OracleError> {
    Evaluator::new(spec, trace).sat(world, f)
}

/// Truth of `f` at every world of the trace.
pub fn sat_all(spec: &PolicySpec, trace: &Trace, f: &Formula) -> Vec<bool> {
    Evaluator::new(spec, trace).sat_all(f)
}

/// See [`Evaluator::minimal_window`].
pub fn minimal_window(
    spec: &PolicySpec,
    trace: &Trace,
    world: usize,
    f: &Formula,
) -> Result<i64, OracleError> {
    Evaluator::new(spec, trace).minimal_window(world, f)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dsl;
    use crate::trace::TimedState;

    fn spec() -> PolicySpec {
        dsl::parse(
            "sort app\n\
             const a : app\n\
             const b : app\n\
             const sink : app\n\
             event call(app, app)\n\
             event p()\n\
             event q()\n\
             def trans(x:app, y:app) := call(x,y) or exists z:app. earlier[10] trans(x,z) and call(z,y)\n",
        )
        .unwrap()
    }

    fn call(x: &str, y: &str) -> GroundAtom {
        GroundAtom::new("call", vec![x.into(), y.into()])
    }

    fn atom0(name: &str) -> GroundAtom {
        GroundAtom::new(name, vec![])
    }

    fn f_atom0(name: &str) -> Formula {
        Formula::atom(name, vec![])
    }

    fn trace(worlds: Vec<(i64, Vec<GroundAtom>)>) -> Trace {
        Trace::new(
            worlds
                .into_iter()
                .map(|(ts, atoms)| TimedState::new(ts, atoms))
                .collect(),
        )
    }

    #[test]
    fn bot_is_never_satisfied() {
        let spec = spec();
        let t = trace(vec![(0, vec![]), (1, vec![])]);
        assert_eq!(sat(&spec, &t, 1, &Formula::Bot), Ok(false));
        assert_eq!(sat(&spec, &t, 2, &Formula::Bot), Ok(false));
    }

    #[test]
    fn world_out_of_range() {
        let spec = spec();
        let t = trace(vec![(0, vec![])]);
        assert_eq!(
            sat(&spec, &t, 0, &Formula::Bot),
            Err(OracleError::WorldOutOfRange { world: 0, len: 1 })
        );
        assert_eq!(
            sat(&spec, &t, 2, &Formula::Bot),
            Err(OracleError::WorldOutOfRange { world: 2, len: 1 })
        );
    }

    #[test]
    fn transitive_call_within_window() {
        let spec = spec();
        let f = Formula::def_atom("trans", vec![Term::constant("a"), Term::constant("sink")]);
        // a calls b, then b calls sink 5 time units later: within the
        // 10-unit window the chain is live.
        let t = trace(vec![
            (0, vec![call("a", "b")]),
            (5, vec![call("b", "sink")]),
        ]);
        assert_eq!(sat(&spec, &t, 2, &f), Ok(true));
        // With a 15-unit gap the earlier[10] link is dead.
        let t = trace(vec![
            (0, vec![call("a", "b")]),
            (15, vec![call("b", "sink")]),
        ]);
        assert_eq!(sat(&spec, &t, 2, &f), Ok(false));
    }

    #[test]
    fn metric_since_window_boundaries() {
        let spec = spec();
        let t = trace(vec![
            (0, vec![atom0("q")]),
            (3, vec![atom0("p")]),
            (6, vec![atom0("p")]),
        ]);
        let s5 = Formula::since_within(5, f_atom0("p"), f_atom0("q"));
        let s7 = Formula::since_within(7, f_atom0("p"), f_atom0("q"));
        assert_eq!(sat(&spec, &t, 3, &s5), Ok(false));
        assert_eq!(sat(&spec, &t, 3, &s7), Ok(true));
    }

    #[test]
    fn sat_all_for_once_and_prev() {
        let spec = spec();
        let t = trace(vec![(0, vec![]), (1, vec![atom0("p")]), (2, vec![])]);
        assert_eq!(
            sat_all(&spec, &t, &Formula::once(f_atom0("p"))),
            vec![false, true, true]
        );
        assert_eq!(
            sat_all(&spec, &t, &Formula::prev(f_atom0("p"))),
            vec![false, false, true]
        );
        let empty = Trace::default();
        assert_eq!(sat_all(&spec, &empty, &f_atom0("p")), Vec::<bool>::new());
    }

    #[test]
    fn minimal_window_examples() {
        let spec = spec();
        let s5 = Formula::since_within(5, f_atom0("p"), f_atom0("q"));
        // q holds right now: the window shrinks to 1.
        let t = trace(vec![(0, vec![atom0("q")])]);
        assert_eq!(minimal_window(&spec, &t, 1, &s5), Ok(1));
        // q one world back with a gap of 3: smallest m with 3 < m is 4.
        let t = trace(vec![(0, vec![atom0("q")]), (3, vec![atom0("p")])]);
        assert_eq!(minimal_window(&spec, &t, 2, &s5), Ok(4));
        // Unsatisfied: 0.
        let t = trace(vec![(0, vec![])]);
        assert_eq!(minimal_window(&spec, &t, 1, &s5), Ok(0));
    }

    #[test]
    fn static_facts_hold_at_every_world() {
        let mut spec = spec();
        spec.predicates.push(crate::formula::PredicateDecl {
            name: "system".into(),
            arg_sorts: vec!["app".into()],
            kind: PredKind::Static,
        });
        spec.static_facts
            .insert(GroundAtom::new("system", vec!["b".into()]));
        let t = trace(vec![(0, vec![]), (9, vec![])]);
        let f = Formula::atom("system", vec![Term::constant("b")]);
        assert_eq!(sat_all(&spec, &t, &f), vec![true, true]);
        let g = Formula::atom("system", vec![Term::constant("a")]);
        assert_eq!(sat_all(&spec, &t, &g), vec![false, false]);
    }

    /// Exhaustively enumerates small traces over the `p` alphabet:
    /// every subset of {p} per world, every gap in `gaps`.
    fn all_traces(max_len: usize, gaps: &[i64]) -> Vec<Trace> {
        let mut out = vec![Trace::default()];
        let mut frontier = vec![Vec::<(i64, bool)>::new()];
        for _ in 0..max_len {
            let mut next = Vec::new();
            for partial in &frontier {
                let last_ts = partial.last().map(|(t, _)| *t);
                let ts_choices: Vec<i64> = match last_ts {
                    None => vec![0],
                    Some(t) => gaps.iter().map(|g| t + g).collect(),
                };
                for ts in ts_choices {
                    for has_p in [false, true] {
                        let mut ext = partial.clone();
                        ext.push((ts, has_p));
                        next.push(ext);
                    }
                }
            }
            for w in &next {
                out.push(trace(
                    w.iter()
                        .map(|(ts, has_p)| (*ts, if *has_p { vec![atom0("p")] } else { vec![] }))
                        .collect(),
                ));
            }
            frontier = next;
        }
        out
    }

    /// The redundant-operator identities, checked exhaustively on small
    /// traces: once f = true since f, earlier f = prev once f,
    /// once[n] f = true since[n] f, and exists as a finite disjunction.
    #[test]
    fn derived_operator_identities() {
        let spec = spec();
        let p = f_atom0("p");
        for t in all_traces(3, &[0, 1, 2, 5]) {
            for i in 1..=t.len() {
                let once = sat(&spec, &t, i, &Formula::once(p.clone())).unwrap();
                let top_since =
                    sat(&spec, &t, i, &Formula::since(Formula::top(), p.clone())).unwrap();
                assert_eq!(once, top_since);

                let earlier = sat(&spec, &t, i, &Formula::earlier(p.clone())).unwrap();
                let prev_once =
                    sat(&spec, &t, i, &Formula::prev(Formula::once(p.clone()))).unwrap();
                assert_eq!(earlier, prev_once);

                for n in [1, 2, 3] {
                    let once_n = sat(&spec, &t, i, &Formula::once_within(n, p.clone())).unwrap();
                    let top_since_n = sat(
                        &spec,
                        &t,
                        i,
                        &Formula::since_within(n, Formula::top(), p.clone()),
                    )
                    .unwrap();
                    assert_eq!(once_n, top_since_n);
                }
            }
        }

        // exists x. call(x, sink) agrees with the disjunction over the domain.
        let ex = Formula::exists(
            "x",
            "app",
            Formula::atom("call", vec![Term::var("x"), Term::constant("sink")]),
        );
        let disjuncts = ["a", "b", "sink"]
            .map(|c| Formula::atom("call", vec![Term::constant(c), Term::constant("sink")]));
        let t = trace(vec![
            (0, vec![call("b", "sink")]),
            (1, vec![]),
            (2, vec![call("sink", "sink")]),
        ]);
        for i in 1..=t.len() {
            let lhs = sat(&spec, &t, i, &ex).unwrap();
            let rhs = disjuncts.iter().any(|d| sat(&spec, &t, i, d).unwrap());
            assert_eq!(lhs, rhs);
        }
    }

    /// Desugaring identities: and/implies/top/forall against their
    /// negation-based definitions.
    #[test]
    fn desugaring_identities() {
        let spec = spec();
        let p = f_atom0("p");
        let q = f_atom0("q");
        for t in all_traces(3, &[0, 2]) {
            for i in 1..=t.len() {
                let and = sat(&spec, &t, i, &Formula::and(p.clone(), q.clone())).unwrap();
                let direct = sat(&spec, &t, i, &p).unwrap() && sat(&spec, &t, i, &q).unwrap();
                assert_eq!(and, direct);

                let imp = sat(&spec, &t, i, &Formula::implies(p.clone(), q.clone())).unwrap();
                let direct = !sat(&spec, &t, i, &p).unwrap() || sat(&spec, &t, i, &q).unwrap();
                assert_eq!(imp, direct);

                assert!(sat(&spec, &t, i, &Formula::top()).unwrap());
            }
        }
    }

    /// Minimality (the least-window function): at the reported window the
    /// formula holds and at every smaller bound it fails; monotonicity:
    /// satisfaction at n implies satisfaction at every larger bound.
    #[test]
    fn minimal_window_is_minimal_and_monotone() {
        let spec = spec();
        let p = f_atom0("p");
        let q = f_atom0("q");
        for t in all_traces(3, &[0, 1, 2]) {
            for i in 1..=t.len() {
                for n in [1, 2, 3, 5] {
                    for f in [
                        Formula::since_within(n, p.clone(), q.clone()),
                        Formula::since_within(n, Formula::top(), p.clone()),
                        Formula::earlier_within(n, p.clone()),
                    ] {
                        let holds = sat(&spec, &t, i, &f).unwrap();
                        let m = minimal_window(&spec, &t, i, &f).unwrap();
                        if holds {
                            assert!(m >= 1 && m <= n);
                            let at = |k: i64| match &f {
                                Formula::SinceWithin(_, a, b) => {
                                    Formula::SinceWithin(k, a.clone(), b.clone())
                                }
                                Formula::EarlierWithin(_, g) => {
                                    Formula::EarlierWithin(k, g.clone())
                                }
                                _ => unreachable!(),
                            };
                            assert!(sat(&spec, &t, i, &at(m)).unwrap());
                            for k in 1..m {
                                assert!(!sat(&spec, &t, i, &at(k)).unwrap());
                            }
                            for extra in [n + 1, n + 3] {
                                assert!(sat(&spec, &t, i, &at(extra)).unwrap());
                            }
                        } else {
                            assert_eq!(m, 0);
                        }
                    }
                }
            }
        }
    }

    /// Recursive forms of the metric operators: satisfaction at world i
    /// decomposes into the current world plus the previous world's truth
    /// and minimal window. Checked exhaustively at every world i > 1.
    #[test]
    fn recursive_forms_hold() {
        let spec = spec();
        let p = f_atom0("p");
        let q = f_atom0("q");
        for t in all_traces(4, &[0, 1, 2]) {
            for i in 2..=t.len() {
                let delta = t.ts(i) - t.ts(i - 1);
                for n in [1, 2, 3] {
                    let since_n = Formula::since_within(n, p.clone(), q.clone());
                    let lhs = sat(&spec, &t, i, &since_n).unwrap();
                    let m_prev = minimal_window(&spec, &t, i - 1, &since_n).unwrap();
                    let rhs = sat(&spec, &t, i, &q).unwrap()
                        || (sat(&spec, &t, i, &p).unwrap()
                            && sat(&spec, &t, i - 1, &since_n).unwrap()
                            && n - delta >= m_prev);
                    assert_eq!(lhs, rhs, "since[{n}] at world {i}");

                    let earlier_n = Formula::earlier_within(n, p.clone());
                    let lhs = sat(&spec, &t, i, &earlier_n).unwrap();
                    let m_prev = minimal_window(&spec, &t, i - 1, &earlier_n).unwrap();
                    let rhs = (sat(&spec, &t, i - 1, &p).unwrap() && delta < n)
                        || (sat(&spec, &t, i - 1, &earlier_n).unwrap() && n - delta >= m_prev);
                    assert_eq!(lhs, rhs, "earlier[{n}] at world {i}");
                }
            }
        }
    }

    #[test]
    fn memoized_evaluator_agrees_with_plain() {
        let spec = spec();
        let f = Formula::def_atom("trans", vec![Term::constant("a"), Term::constant("sink")]);
        let t = trace(vec![
            (0, vec![call("a", "b")]),
            (3, vec![call("b", "sink")]),
            (9, vec![call("a", "sink")]),
            (20, vec![]),
        ]);
        let plain = sat_all(&spec, &t, &f);
        let memo = Evaluator::with_memo(&spec, &t).sat_all(&f);
        assert_eq!(plain, memo);
        assert_eq!(plain, vec![false, true, true, false]);
    }
}
