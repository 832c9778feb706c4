//! Seeded random generation of well-formed specifications and traces.
//!
//! Everything is a pure function of the configuration, so any failing
//! trial can be replayed from its seed. Generated specs always pass
//! validation: atoms are built sort-correct, metric bounds start at 1,
//! policies are closed, and every recursive occurrence inside a
//! definition body is wrapped in a guard chosen from the previous/earlier
//! operators.

use std::collections::BTreeSet;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::formula::{
    Formula, GroundAtom, NamedPolicy, PolicySpec, PredKind, PredicateDecl, RecursiveDef, Term,
};
use crate::trace::{TimedState, Trace};

/// Tuning knobs for the generators. `seed` fully determines both the
/// specification and the trace.
#[derive(Debug, Clone)]
pub struct GenConfig {
    pub seed: u64,
    pub max_formula_depth: u32,
    pub max_bound: i64,
    /// One entry per generated sort: how many constants it gets.
    pub domain_sizes: Vec<usize>,
    /// Maximum trace length; actual length is sampled in `1..=trace_length`.
    pub trace_length: usize,
    pub max_ts_gap: i64,
    /// Probability that any given ground event atom occurs in a world.
    pub event_density: f64,
}

impl Default for GenConfig {
    fn default() -> Self {
        GenConfig {
            seed: 0,
            max_formula_depth: 5,
            max_bound: 8,
            domain_sizes: vec![3],
            trace_length: 50,
            max_ts_gap: 4,
            event_density: 0.3,
        }
    }
}

impl GenConfig {
    pub fn with_seed(&self, seed: u64) -> GenConfig {
        GenConfig {
            seed,
            ..self.clone()
        }
    }
}

/// Stable mixing of a seed and a stream tag, so the policy and trace
/// streams cannot collide.
pub(crate) fn mix(seed: u64, stream: u64) -> u64 {
    let mut z = seed ^ stream.wrapping_mul(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

struct SpecGen<'a> {
    cfg: &'a GenConfig,
    rng: ChaCha8Rng,
    spec: PolicySpec,
    /// Fresh-variable counter for quantifiers.
    next_var: usize,
}

/// Generates a random valid specification.
pub fn gen_policy(cfg: &GenConfig) -> PolicySpec {
    let mut g = SpecGen {
        cfg,
        rng: ChaCha8Rng::seed_from_u64(mix(cfg.seed, 1)),
        spec: PolicySpec::default(),
        next_var: 0,
    };
    g.declare_signature();
    g.declare_defs();
    g.declare_facts();
    let n_policies = g.rng.gen_range(1..=2);
    for i in 0..n_policies {
        let depth = g.rng.gen_range(0..=g.cfg.max_formula_depth);
        let formula = g.gen_formula(depth, &[], false);
        g.spec.policies.push(NamedPolicy {
            name: format!("pol{i}"),
            formula,
        });
    }
    debug_assert!(
        g.spec.validate().is_ok(),
        "generator must produce valid specs: {:?}",
        g.spec.validate().err()
    );
    g.spec
}

impl SpecGen<'_> {
    fn declare_signature(&mut self) {
        for (i, &size) in self.cfg.domain_sizes.iter().enumerate() {
            let sort = format!("s{i}");
            let consts: Vec<String> = (0..size).map(|j| format!("c{i}_{j}")).collect();
            self.spec.sorts.push(sort.clone());
            self.spec.domains.insert(sort, consts);
        }
        let n_events = self.rng.gen_range(1..=3);
        for i in 0..n_events {
            let arity = self.rng.gen_range(0..=2usize);
            let arg_sorts = (0..arity).map(|_| self.random_sort()).collect();
            self.spec.predicates.push(PredicateDecl {
                name: format!("e{i}"),
                arg_sorts,
                kind: PredKind::Event,
            });
        }
        let n_static = self.rng.gen_range(0..=2);
        for i in 0..n_static {
            let arity = self.rng.gen_range(0..=2usize);
            let arg_sorts = (0..arity).map(|_| self.random_sort()).collect();
            self.spec.predicates.push(PredicateDecl {
                name: format!("st{i}"),
                arg_sorts,
                kind: PredKind::Static,
            });
        }
    }

    fn declare_defs(&mut self) {
        let n_defs = self.rng.gen_range(0..=2);
        // Heads first so bodies can reference any defined predicate,
        // including mutual recursion.
        let mut heads = Vec::new();
        for i in 0..n_defs {
            let arity = self.rng.gen_range(0..=2usize);
            let params: Vec<(String, String)> = (0..arity)
                .map(|j| (format!("x{j}"), self.random_sort()))
                .collect();
            self.spec.predicates.push(PredicateDecl {
                name: format!("d{i}"),
                arg_sorts: params.iter().map(|(_, s)| s.clone()).collect(),
                kind: PredKind::Defined,
            });
            heads.push((format!("d{i}"), params));
        }
        for (name, params) in heads {
            let lo = self.cfg.max_formula_depth.min(1);
            let depth = self.rng.gen_range(lo..=self.cfg.max_formula_depth);
            let body = self.gen_formula(depth, &params, true);
            self.spec.defs.push(RecursiveDef { name, params, body });
        }
    }

    fn declare_facts(&mut self) {
        let statics: Vec<PredicateDecl> = self
            .spec
            .predicates
            .iter()
            .filter(|p| p.kind == PredKind::Static)
            .cloned()
            .collect();
        for decl in statics {
            for tuple in self.ground_tuples(&decl.arg_sorts) {
                if self.rng.gen_bool(0.4) {
                    self.spec
                        .static_facts
                        .insert(GroundAtom::new(decl.name.clone(), tuple));
                }
            }
        }
    }

    fn random_sort(&mut self) -> String {
        let i = self.rng.gen_range(0..self.spec.sorts.len().max(1));
        self.spec
            .sorts
            .get(i)
            .cloned()
            .unwrap_or_else(|| "s0".into())
    }

    fn ground_tuples(&self, arg_sorts: &[String]) -> Vec<Vec<String>> {
        let mut out = vec![vec![]];
        for sort in arg_sorts {
            let domain = self.spec.domain(sort);
            let mut next = Vec::new();
            for prefix in &out {
                for c in domain {
                    let mut t = prefix.clone();
                    t.push(c.clone());
                    next.push(t);
                }
            }
            out = next;
        }
        out
    }

    fn random_bound(&mut self) -> i64 {
        self.rng.gen_range(1..=self.cfg.max_bound)
    }

    /// Term of the given sort: an in-scope variable of that sort when one
    /// exists and the coin lands that way, otherwise a random constant.
    fn random_term(&mut self, sort: &str, scope: &[(String, String)]) -> Term {
        let vars: Vec<&String> = scope
            .iter()
            .filter(|(_, s)| s == sort)
            .map(|(v, _)| v)
            .collect();
        if !vars.is_empty() && self.rng.gen_bool(0.6) {
            Term::Var(vars[self.rng.gen_range(0..vars.len())].clone())
        } else {
            let domain = self.spec.domain(sort);
            Term::Const(domain[self.rng.gen_range(0..domain.len())].clone())
        }
    }

    fn random_atom(&mut self, kinds: &[PredKind], scope: &[(String, String)]) -> Option<Formula> {
        let candidates: Vec<PredicateDecl> = self
            .spec
            .predicates
            .iter()
            .filter(|p| kinds.contains(&p.kind))
            .cloned()
            .collect();
        if candidates.is_empty() {
            return None;
        }
        let decl = &candidates[self.rng.gen_range(0..candidates.len())];
        let args: Vec<Term> = decl
            .arg_sorts
            .iter()
            .map(|s| self.random_term(s, scope))
            .collect();
        Some(if decl.kind == PredKind::Defined {
            Formula::def_atom(decl.name.clone(), args)
        } else {
            Formula::atom(decl.name.clone(), args)
        })
    }

    /// Wraps a recursive occurrence in one of the four guards.
    fn guard(&mut self, f: Formula) -> Formula {
        match self.rng.gen_range(0..4) {
            0 => Formula::prev(f),
            1 => Formula::prev_within(self.random_bound(), f),
            2 => Formula::earlier(f),
            _ => Formula::earlier_within(self.random_bound(), f),
        }
    }

    fn gen_leaf(&mut self, scope: &[(String, String)], in_def_body: bool) -> Formula {
        let roll = self.rng.gen_range(0..10);
        if roll == 0 {
            return Formula::Bot;
        }
        if roll == 1 {
            return Formula::top();
        }
        if roll <= 3 {
            // A defined predicate; guarded when inside a definition body,
            // free-standing in policies.
            if let Some(atom) = self.random_atom(&[PredKind::Defined], scope) {
                return if in_def_body { self.guard(atom) } else { atom };
            }
        }
        self.random_atom(&[PredKind::Event, PredKind::Static], scope)
            .expect("at least one event predicate is always declared")
    }

    fn gen_formula(
        &mut self,
        depth: u32,
        scope: &[(String, String)],
        in_def_body: bool,
    ) -> Formula {
        if depth == 0 {
            return self.gen_leaf(scope, in_def_body);
        }
        let d = depth - 1;
        match self.rng.gen_range(0..15) {
            0 => self.gen_leaf(scope, in_def_body),
            1 => Formula::neg(self.gen_formula(d, scope, in_def_body)),
            2 => Formula::or(
                self.gen_formula(d, scope, in_def_body),
                self.gen_formula(d, scope, in_def_body),
            ),
            3 => Formula::and(
                self.gen_formula(d, scope, in_def_body),
                self.gen_formula(d, scope, in_def_body),
            ),
            4 => Formula::prev(self.gen_formula(d, scope, in_def_body)),
            5 => Formula::prev_within(self.random_bound(), self.gen_formula(d, scope, in_def_body)),
            6 => Formula::since(
                self.gen_formula(d, scope, in_def_body),
                self.gen_formula(d, scope, in_def_body),
            ),
            7 => Formula::since_within(
                self.random_bound(),
                self.gen_formula(d, scope, in_def_body),
                self.gen_formula(d, scope, in_def_body),
            ),
            8 => Formula::once(self.gen_formula(d, scope, in_def_body)),
            9 => Formula::once_within(self.random_bound(), self.gen_formula(d, scope, in_def_body)),
            10 => Formula::earlier(self.gen_formula(d, scope, in_def_body)),
            11 => Formula::earlier_within(
                self.random_bound(),
                self.gen_formula(d, scope, in_def_body),
            ),
            12 | 13 => {
                let var = format!("v{}", self.next_var);
                self.next_var += 1;
                let sort = self.random_sort();
                let mut inner = scope.to_vec();
                inner.push((var.clone(), sort.clone()));
                let body = self.gen_formula(d, &inner, in_def_body);
                if self.rng.gen_bool(0.5) {
                    Formula::exists(var, sort, body)
                } else {
                    Formula::forall(var, sort, body)
                }
            }
            _ => Formula::implies(
                self.gen_formula(d, scope, in_def_body),
                self.gen_formula(d, scope, in_def_body),
            ),
        }
    }
}

/// Generates a random trace over the spec's event predicates: timestamps
/// start near zero and advance by uniform gaps in `0..=max_ts_gap`.
pub fn gen_trace(cfg: &GenConfig, spec: &PolicySpec) -> Trace {
    let mut rng = ChaCha8Rng::seed_from_u64(mix(cfg.seed, 2));
    let universe = event_atom_universe(spec);
    let length = rng.gen_range(1..=cfg.trace_length.max(1));
    let mut states = Vec::with_capacity(length);
    let mut ts: i64 = rng.gen_range(0..=cfg.max_ts_gap);
    for _ in 0..length {
        let mut atoms = BTreeSet::new();
        for atom in &universe {
            if rng.gen_bool(cfg.event_density) {
                atoms.insert(atom.clone());
            }
        }
        states.push(TimedState { ts, atoms });
        ts += rng.gen_range(0..=cfg.max_ts_gap);
    }
    Trace::new(states)
}

/// All ground event atoms expressible in the spec's signature.
pub fn event_atom_universe(spec: &PolicySpec) -> Vec<GroundAtom> {
    let mut out = Vec::new();
    for decl in &spec.predicates {
        if decl.kind != PredKind::Event {
            continue;
        }
        let mut tuples = vec![vec![]];
        for sort in &decl.arg_sorts {
            let domain = spec.domain(sort);
            let mut next = Vec::new();
            for prefix in &tuples {
                for c in domain {
                    let mut t: Vec<String> = prefix.clone();
                    t.push(c.clone());
                    next.push(t);
                }
            }
            tuples = next;
        }
        for t in tuples {
            out.push(GroundAtom::new(decl.name.clone(), t));
        }
    }
    out
}

/// Names of the formula constructors present in a spec's definition
/// bodies and policies, for generator-coverage accounting.
pub fn formula_kinds(spec: &PolicySpec) -> BTreeSet<&'static str> {
    let mut kinds = BTreeSet::new();
    let mut visit = |f: &Formula| collect_kinds(f, &mut kinds);
    for d in &spec.defs {
        visit(&d.body);
    }
    for p in &spec.policies {
        visit(&p.formula);
    }
    kinds
}

fn collect_kinds(f: &Formula, out: &mut BTreeSet<&'static str>) {
    let name = match f {
        Formula::Bot => "bot",
        Formula::Atom { .. } => "atom",
        Formula::DefAtom { .. } => "defatom",
        Formula::Neg(_) => "neg",
        Formula::Or(..) => "or",
        Formula::Prev(_) => "prev",
        Formula::PrevWithin(..) => "prev_within",
        Formula::Since(..) => "since",
        Formula::SinceWithin(..) => "since_within",
        Formula::Once(_) => "once",
        Formula::OnceWithin(..) => "once_within",
        Formula::Earlier(_) => "earlier",
        Formula::EarlierWithin(..) => "earlier_within",
        Formula::Exists { .. } => "exists",
    };
    out.insert(name);
    match f {
        Formula::Bot | Formula::Atom { .. } | Formula::DefAtom { .. } => {}
        Formula::Neg(g)
        | Formula::Prev(g)
        | Formula::PrevWithin(_, g)
        | Formula::Once(g)
        | Formula::OnceWithin(_, g)
        | Formula::Earlier(g)
        | Formula::EarlierWithin(_, g) => collect_kinds(g, out),
        Formula::Or(a, b) | Formula::Since(a, b) | Formula::SinceWithin(_, a, b) => {
            collect_kinds(a, out);
            collect_kinds(b, out);
        }
        Formula::Exists { body, .. } => collect_kinds(body, out),
    }
}
