//! Compiles a validated specification into a flat evaluation table.
//!
//! Compilation normalizes each policy formula (quantifiers expanded over
//! the finite domains, `once` rewritten to `since`, sugar already gone),
//! then closes the set of ground subformulas under instantiation of
//! recursive definition bodies, and finally assigns table indices that
//! respect the evaluation order: every same-world operand of a node sits
//! at a smaller index. Operands read through `prev`/`earlier` impose no
//! ordering because the monitor reads them from the previous world's
//! array.

use std::collections::{BTreeMap, VecDeque};
use std::fmt::Write;

use indexmap::IndexMap;
use thiserror::Error;

use crate::formula::{Diagnostic, Formula, GroundAtom, PolicySpec, PredKind, Term};

#[derive(Debug, Error)]
pub enum CompileError {
    #[error("specification failed validation: {}", format_diags(.0))]
    InvalidSpec(Vec<Diagnostic>),
    #[error("internal error: cycle in the ground dependency graph; guarded specs cannot cycle")]
    CycleDetected,
}

fn format_diags(diags: &[Diagnostic]) -> String {
    diags
        .iter()
        .map(|d| d.to_string())
        .collect::<Vec<_>>()
        .join("; ")
}

/// One table entry. Operand indices always point into the same table.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum NodeKind {
    Bot,
    /// Event atom, looked up in the current world.
    EventAtom(GroundAtom),
    /// Static atom with its precomputed truth value.
    StaticAtom(bool),
    /// Ground instance of a defined predicate; evaluates to its
    /// instantiated body.
    DefAtom {
        body: usize,
    },
    Neg(usize),
    Or(usize, usize),
    Prev(usize),
    PrevWithin {
        bound: i64,
        arg: usize,
    },
    Since {
        lhs: usize,
        rhs: usize,
    },
    SinceWithin {
        bound: i64,
        lhs: usize,
        rhs: usize,
    },
    Earlier(usize),
    EarlierWithin {
        bound: i64,
        arg: usize,
    },
}

impl NodeKind {
    /// Metric bound, for the kinds that carry one.
    pub fn bound(&self) -> Option<i64> {
        match self {
            NodeKind::PrevWithin { bound, .. }
            | NodeKind::SinceWithin { bound, .. }
            | NodeKind::EarlierWithin { bound, .. } => Some(*bound),
            _ => None,
        }
    }

    /// Operands that must be evaluated earlier in the same world.
    fn same_world_deps(&self) -> Vec<usize> {
        match self {
            NodeKind::Bot | NodeKind::EventAtom(_) | NodeKind::StaticAtom(_) => vec![],
            NodeKind::DefAtom { body } => vec![*body],
            NodeKind::Neg(a) => vec![*a],
            NodeKind::Or(a, b) => vec![*a, *b],
            NodeKind::Since { lhs, rhs } | NodeKind::SinceWithin { lhs, rhs, .. } => {
                vec![*lhs, *rhs]
            }
            // Guarded: only previous-world values are read.
            NodeKind::Prev(_)
            | NodeKind::PrevWithin { .. }
            | NodeKind::Earlier(_)
            | NodeKind::EarlierWithin { .. } => vec![],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SubformulaNode {
    pub kind: NodeKind,
    /// The ground formula this entry stands for, kept for dumps, tests,
    /// and differential checks against the reference semantics.
    pub formula: Formula,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PolicyRoot {
    pub name: String,
    pub idx: usize,
}

/// The compiled form of a specification: every distinct ground subformula
/// reachable from any policy, ordered so that same-world dependencies
/// come first, plus the table index of each policy's formula.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CompiledPolicy {
    pub table: Vec<SubformulaNode>,
    pub roots: Vec<PolicyRoot>,
    /// Retained for diagnostics and size accounting.
    pub domains: BTreeMap<String, Vec<String>>,
}

impl CompiledPolicy {
    pub fn len(&self) -> usize {
        self.table.len()
    }

    pub fn is_empty(&self) -> bool {
        self.table.is_empty()
    }

    pub fn root(&self, name: &str) -> Option<usize> {
        self.roots.iter().find(|r| r.name == name).map(|r| r.idx)
    }
}

/// Rewrites a formula so only monitorable operators remain: no
/// quantifiers (expanded over the finite domain, empty domain giving
/// `false`), no `once` (turned into `true since`), and no sugar. The
/// `earlier` forms are kept; the monitor handles them natively.
pub fn normalize(spec: &PolicySpec, f: &Formula) -> Formula {
    match f {
        Formula::Bot | Formula::Atom { .. } | Formula::DefAtom { .. } => f.clone(),
        Formula::Neg(g) => Formula::neg(normalize(spec, g)),
        Formula::Or(a, b) => Formula::or(normalize(spec, a), normalize(spec, b)),
        Formula::Prev(g) => Formula::prev(normalize(spec, g)),
        Formula::PrevWithin(n, g) => Formula::prev_within(*n, normalize(spec, g)),
        Formula::Since(a, b) => Formula::since(normalize(spec, a), normalize(spec, b)),
        Formula::SinceWithin(n, a, b) => {
            Formula::since_within(*n, normalize(spec, a), normalize(spec, b))
        }
        Formula::Once(g) => Formula::since(Formula::top(), normalize(spec, g)),
        Formula::OnceWithin(n, g) => Formula::since_within(*n, Formula::top(), normalize(spec, g)),
        Formula::Earlier(g) => Formula::earlier(normalize(spec, g)),
        Formula::EarlierWithin(n, g) => Formula::earlier_within(*n, normalize(spec, g)),
        Formula::Exists { var, sort, body } => {
            let mut disjunction: Option<Formula> = None;
            for c in spec.domain(sort) {
                let binding = BTreeMap::from([(var.clone(), c.clone())]);
                let inst = normalize(spec, &body.substitute_unchecked(&binding));
                disjunction = Some(match disjunction {
                    None => inst,
                    Some(acc) => Formula::or(acc, inst),
                });
            }
            disjunction.unwrap_or(Formula::Bot)
        }
    }
}

/// Compiles a specification. Fails only on an invalid spec; the cycle
/// error is an internal assertion that guardedness makes unreachable.
pub fn compile(spec: &PolicySpec) -> Result<CompiledPolicy, CompileError> {
    if let Err(diags) = spec.validate() {
        return Err(CompileError::InvalidSpec(diags));
    }

    let mut builder = Builder {
        spec,
        ids: IndexMap::new(),
        pending: VecDeque::new(),
        def_bodies: BTreeMap::new(),
    };
    let mut root_discovery = Vec::new();
    for policy in &spec.policies {
        let root = normalize(spec, &policy.formula);
        root_discovery.push((policy.name.clone(), builder.discover(&root)));
    }
    while let Some(id) = builder.pending.pop_front() {
        let (formula, _) = builder.ids.get_index(id).expect("pending id is interned");
        let (pred, args) = match formula {
            Formula::DefAtom { pred, args } => (pred.clone(), const_args(args)),
            _ => unreachable!("only defined-predicate atoms are queued"),
        };
        let def = spec
            .def(&pred)
            .expect("validated spec has a definition for every defined predicate");
        let body = normalize(spec, &spec.instantiate_def(def, &args));
        let body_id = builder.discover(&body);
        builder.def_bodies.insert(id, body_id);
    }

    // Same-world dependency edges on discovery ids.
    let m = builder.ids.len();
    let mut kinds: Vec<NodeKind> = Vec::with_capacity(m);
    for (f, _) in &builder.ids {
        kinds.push(builder.kind_of(f));
    }
    let mut indegree = vec![0usize; m];
    let mut dependents: Vec<Vec<usize>> = vec![Vec::new(); m];
    for (v, kind) in kinds.iter().enumerate() {
        for u in kind.same_world_deps() {
            dependents[u].push(v);
            indegree[v] += 1;
        }
    }

    // Kahn's algorithm; ties broken by first-discovery order so the
    // enumeration is deterministic.
    let mut heap = std::collections::BinaryHeap::new();
    for (v, &deg) in indegree.iter().enumerate() {
        if deg == 0 {
            heap.push(std::cmp::Reverse(v));
        }
    }
    let mut final_of = vec![usize::MAX; m];
    let mut order = Vec::with_capacity(m);
    while let Some(std::cmp::Reverse(v)) = heap.pop() {
        final_of[v] = order.len();
        order.push(v);
        for &w in &dependents[v] {
            indegree[w] -= 1;
            if indegree[w] == 0 {
                heap.push(std::cmp::Reverse(w));
            }
        }
    }
    if order.len() != m {
        return Err(CompileError::CycleDetected);
    }

    let remap = |kind: &NodeKind| -> NodeKind {
        match kind {
            NodeKind::Bot => NodeKind::Bot,
            NodeKind::EventAtom(a) => NodeKind::EventAtom(a.clone()),
            NodeKind::StaticAtom(t) => NodeKind::StaticAtom(*t),
            NodeKind::DefAtom { body } => NodeKind::DefAtom {
                body: final_of[*body],
            },
            NodeKind::Neg(a) => NodeKind::Neg(final_of[*a]),
            NodeKind::Or(a, b) => NodeKind::Or(final_of[*a], final_of[*b]),
            NodeKind::Prev(a) => NodeKind::Prev(final_of[*a]),
            NodeKind::PrevWithin { bound, arg } => NodeKind::PrevWithin {
                bound: *bound,
                arg: final_of[*arg],
            },
            NodeKind::Since { lhs, rhs } => NodeKind::Since {
                lhs: final_of[*lhs],
                rhs: final_of[*rhs],
            },
            NodeKind::SinceWithin { bound, lhs, rhs } => NodeKind::SinceWithin {
                bound: *bound,
                lhs: final_of[*lhs],
                rhs: final_of[*rhs],
            },
            NodeKind::Earlier(a) => NodeKind::Earlier(final_of[*a]),
            NodeKind::EarlierWithin { bound, arg } => NodeKind::EarlierWithin {
                bound: *bound,
                arg: final_of[*arg],
            },
        }
    };
    let mut table = Vec::with_capacity(m);
    for &discovery_id in &order {
        let (formula, _) = builder.ids.get_index(discovery_id).expect("in range");
        table.push(SubformulaNode {
            kind: remap(&kinds[discovery_id]),
            formula: formula.clone(),
        });
    }
    let roots = root_discovery
        .into_iter()
        .map(|(name, id)| PolicyRoot {
            name,
            idx: final_of[id],
        })
        .collect();
    let compiled = CompiledPolicy {
        table,
        roots,
        domains: spec.domains.clone(),
    };
    assert!(
        order_is_sound(&compiled),
        "table order violates the evaluation-order invariant"
    );
    Ok(compiled)
}

/// Every same-world operand of every node sits at a strictly smaller
/// index. Checked on every compile; exposed for tests.
pub fn order_is_sound(cp: &CompiledPolicy) -> bool {
    cp.table.iter().enumerate().all(|(idx, node)| {
        node.kind.same_world_deps().iter().all(|&dep| dep < idx)
            && all_operands(&node.kind)
                .iter()
                .all(|&op| op < cp.table.len())
    })
}

fn all_operands(kind: &NodeKind) -> Vec<usize> {
    match kind {
        NodeKind::Bot | NodeKind::EventAtom(_) | NodeKind::StaticAtom(_) => vec![],
        NodeKind::DefAtom { body } => vec![*body],
        NodeKind::Neg(a)
        | NodeKind::Prev(a)
        | NodeKind::PrevWithin { arg: a, .. }
        | NodeKind::Earlier(a)
        | NodeKind::EarlierWithin { arg: a, .. } => vec![*a],
        NodeKind::Or(a, b)
        | NodeKind::Since { lhs: a, rhs: b }
        | NodeKind::SinceWithin { lhs: a, rhs: b, .. } => vec![*a, *b],
    }
}

struct Builder<'a> {
    spec: &'a PolicySpec,
    /// Ground formula -> discovery id, in first-discovery order.
    ids: IndexMap<Formula, usize>,
    /// Defined-predicate atoms whose bodies still need instantiation.
    pending: VecDeque<usize>,
    /// Discovery id of a defined-predicate atom -> discovery id of its
    /// instantiated body.
    def_bodies: BTreeMap<usize, usize>,
}

impl Builder<'_> {
    fn discover(&mut self, f: &Formula) -> usize {
        if let Some(&id) = self.ids.get(f) {
            return id;
        }
        let id = self.ids.len();
        self.ids.insert(f.clone(), id);
        match f {
            Formula::Bot | Formula::Atom { .. } => {}
            Formula::DefAtom { .. } => self.pending.push_back(id),
            Formula::Neg(g)
            | Formula::Prev(g)
            | Formula::PrevWithin(_, g)
            | Formula::Earlier(g)
            | Formula::EarlierWithin(_, g) => {
                let g = g.as_ref().clone();
                self.discover(&g);
            }
            Formula::Or(a, b) | Formula::Since(a, b) | Formula::SinceWithin(_, a, b) => {
                let (a, b) = (a.as_ref().clone(), b.as_ref().clone());
                self.discover(&a);
                self.discover(&b);
            }
            Formula::Once(_) | Formula::OnceWithin(_, _) | Formula::Exists { .. } => {
                unreachable!("normalize removes once and quantifiers")
            }
        }
        id
    }

    fn kind_of(&self, f: &Formula) -> NodeKind {
        let id_of = |g: &Formula| *self.ids.get(g).expect("operands are discovered");
        match f {
            Formula::Bot => NodeKind::Bot,
            Formula::Atom { pred, args } => {
                let atom = GroundAtom::new(pred.clone(), const_args(args));
                match self.spec.predicate(pred).map(|d| d.kind) {
                    Some(PredKind::Static) => {
                        NodeKind::StaticAtom(self.spec.static_facts.contains(&atom))
                    }
                    _ => NodeKind::EventAtom(atom),
                }
            }
            Formula::DefAtom { .. } => NodeKind::DefAtom {
                body: *self
                    .def_bodies
                    .get(&self.ids[f])
                    .expect("instantiated during closure"),
            },
            Formula::Neg(g) => NodeKind::Neg(id_of(g)),
            Formula::Or(a, b) => NodeKind::Or(id_of(a), id_of(b)),
            Formula::Prev(g) => NodeKind::Prev(id_of(g)),
            Formula::PrevWithin(n, g) => NodeKind::PrevWithin {
                bound: *n,
                arg: id_of(g),
            },
            Formula::Since(a, b) => NodeKind::Since {
                lhs: id_of(a),
                rhs: id_of(b),
            },
            Formula::SinceWithin(n, a, b) => NodeKind::SinceWithin {
                bound: *n,
                lhs: id_of(a),
                rhs: id_of(b),
            },
            Formula::Earlier(g) => NodeKind::Earlier(id_of(g)),
            Formula::EarlierWithin(n, g) => NodeKind::EarlierWithin {
                bound: *n,
                arg: id_of(g),
            },
            Formula::Once(_) | Formula::OnceWithin(_, _) | Formula::Exists { .. } => {
                unreachable!("normalize removes once and quantifiers")
            }
        }
    }
}

fn const_args(args: &[Term]) -> Vec<String> {
    args.iter()
        .map(|t| match t {
            Term::Const(c) => c.clone(),
            Term::Var(v) => panic!("ground formula expected, found variable `{v}`"),
        })
        .collect()
}

/// Renders the table as stable, line-oriented text: one line per node
/// (`idx: kind operands bound formula`) followed by one line per policy
/// root. Output is byte-identical across runs for the same spec.
pub fn dump_table(cp: &CompiledPolicy) -> String {
    let mut out = String::new();
    for (idx, node) in cp.table.iter().enumerate() {
        let (kind, operands) = match &node.kind {
            NodeKind::Bot => ("bot".to_string(), "-".to_string()),
            NodeKind::EventAtom(_) => ("atom".to_string(), "-".to_string()),
            NodeKind::StaticAtom(t) => (format!("static={t}"), "-".to_string()),
            NodeKind::DefAtom { body } => ("def".to_string(), body.to_string()),
            NodeKind::Neg(a) => ("not".to_string(), a.to_string()),
            NodeKind::Or(a, b) => ("or".to_string(), format!("{a},{b}")),
            NodeKind::Prev(a) => ("prev".to_string(), a.to_string()),
            NodeKind::PrevWithin { arg, .. } => ("prev".to_string(), arg.to_string()),
            NodeKind::Since { lhs, rhs } => ("since".to_string(), format!("{lhs},{rhs}")),
            NodeKind::SinceWithin { lhs, rhs, .. } => ("since".to_string(), format!("{lhs},{rhs}")),
            NodeKind::Earlier(a) => ("earlier".to_string(), a.to_string()),
            NodeKind::EarlierWithin { arg, .. } => ("earlier".to_string(), arg.to_string()),
        };
        let bound = node.kind.bound().map_or("-".to_string(), |n| n.to_string());
        let _ = writeln!(
            out,
            "{idx}: {kind} {operands} {bound} {}",
            crate::dsl::print_formula(&node.formula)
        );
    }
    for root in &cp.roots {
        let _ = writeln!(out, "root {} {}", root.name, root.idx);
    }
    out
}
