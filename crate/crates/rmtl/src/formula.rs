//! Abstract syntax for policies: terms, predicates, formulas, recursive
//! definitions, and the well-formedness checks that make the rest of the
//! pipeline safe to run (sorting, variable binding, metric bounds, and
//! guardedness of recursion).

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

/// A term is a constant symbol or a variable. Sorts are not stored on the
/// term itself; they are recovered from predicate declarations and binders
/// during validation.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Term {
    Const(String),
    Var(String),
}

impl Term {
    pub fn constant(name: impl Into<String>) -> Self {
        Term::Const(name.into())
    }

    pub fn var(name: impl Into<String>) -> Self {
        Term::Var(name.into())
    }
}

impl fmt::Display for Term {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Term::Const(n) | Term::Var(n) => write!(f, "{n}"),
        }
    }
}

/// The three flavours of predicate symbol. Event predicates are read from
/// the trace, static predicates from `fact` declarations, and defined
/// predicates unfold through their recursive definition.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum PredKind {
    Event,
    Static,
    Defined,
}

impl fmt::Display for PredKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            PredKind::Event => write!(f, "event"),
            PredKind::Static => write!(f, "static"),
            PredKind::Defined => write!(f, "defined"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PredicateDecl {
    pub name: String,
    pub arg_sorts: Vec<String>,
    pub kind: PredKind,
}

/// A fully instantiated atom: predicate name plus constant arguments.
/// Used for trace events, static facts, and ground subformulas.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct GroundAtom {
    pub pred: String,
    pub args: Vec<String>,
}

impl GroundAtom {
    pub fn new(pred: impl Into<String>, args: Vec<String>) -> Self {
        GroundAtom {
            pred: pred.into(),
            args,
        }
    }
}

impl fmt::Display for GroundAtom {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.args.is_empty() {
            write!(f, "{}", self.pred)
        } else {
            write!(f, "{}({})", self.pred, self.args.join(","))
        }
    }
}

/// Past-time metric temporal formulas.
///
/// Metric operators carry a bound `n >= 1` standing for the half-open
/// window `[0, n)` of timestamp differences. Conjunction, implication,
/// truth, and universal quantification are surface sugar that the parser
/// eliminates through the usual negation identities, so they have no
/// variants here.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum Formula {
    /// The false formula.
    Bot,
    /// An event or static predicate applied to terms.
    Atom {
        pred: String,
        args: Vec<Term>,
    },
    /// A defined (recursive) predicate applied to terms.
    DefAtom {
        pred: String,
        args: Vec<Term>,
    },
    Neg(Box<Formula>),
    Or(Box<Formula>, Box<Formula>),
    /// Holds if the operand held at the immediately preceding world.
    Prev(Box<Formula>),
    /// `Prev` restricted to a timestamp gap `< n`.
    PrevWithin(i64, Box<Formula>),
    /// Unbounded since.
    Since(Box<Formula>, Box<Formula>),
    /// Since restricted to the window `[0, n)`.
    SinceWithin(i64, Box<Formula>, Box<Formula>),
    /// Holds if the operand held at some world `<=` the current one.
    Once(Box<Formula>),
    /// `Once` restricted to the window `[0, n)`.
    OnceWithin(i64, Box<Formula>),
    /// Holds if the operand held at some strictly earlier world.
    Earlier(Box<Formula>),
    /// `Earlier` restricted to the window `[0, n)`.
    EarlierWithin(i64, Box<Formula>),
    Exists {
        var: String,
        sort: String,
        body: Box<Formula>,
    },
}

impl Formula {
    pub fn atom(pred: impl Into<String>, args: Vec<Term>) -> Self {
        Formula::Atom {
            pred: pred.into(),
            args,
        }
    }

    pub fn def_atom(pred: impl Into<String>, args: Vec<Term>) -> Self {
        Formula::DefAtom {
            pred: pred.into(),
            args,
        }
    }

    #[allow(clippy::should_implement_trait)] // constructor, not an operator impl
    pub fn neg(f: Formula) -> Self {
        Formula::Neg(Box::new(f))
    }

    pub fn or(a: Formula, b: Formula) -> Self {
        Formula::Or(Box::new(a), Box::new(b))
    }

    /// `a and b` desugars to `not (not a or not b)`.
    pub fn and(a: Formula, b: Formula) -> Self {
        Formula::neg(Formula::or(Formula::neg(a), Formula::neg(b)))
    }

    /// `a implies b` desugars to `not a or b`.
    pub fn implies(a: Formula, b: Formula) -> Self {
        Formula::or(Formula::neg(a), b)
    }

    /// `true` desugars to `not false`.
    pub fn top() -> Self {
        Formula::neg(Formula::Bot)
    }

    pub fn prev(f: Formula) -> Self {
        Formula::Prev(Box::new(f))
    }

    pub fn prev_within(n: i64, f: Formula) -> Self {
        Formula::PrevWithin(n, Box::new(f))
    }

    pub fn since(a: Formula, b: Formula) -> Self {
        Formula::Since(Box::new(a), Box::new(b))
    }

    pub fn since_within(n: i64, a: Formula, b: Formula) -> Self {
        Formula::SinceWithin(n, Box::new(a), Box::new(b))
    }

    pub fn once(f: Formula) -> Self {
        Formula::Once(Box::new(f))
    }

    pub fn once_within(n: i64, f: Formula) -> Self {
        Formula::OnceWithin(n, Box::new(f))
    }

    pub fn earlier(f: Formula) -> Self {
        Formula::Earlier(Box::new(f))
    }

    pub fn earlier_within(n: i64, f: Formula) -> Self {
        Formula::EarlierWithin(n, Box::new(f))
    }

    pub fn exists(var: impl Into<String>, sort: impl Into<String>, body: Formula) -> Self {
        Formula::Exists {
            var: var.into(),
            sort: sort.into(),
            body: Box::new(body),
        }
    }

    /// `forall x:s. f` desugars to `not exists x:s. not f`.
    pub fn forall(var: impl Into<String>, sort: impl Into<String>, body: Formula) -> Self {
        Formula::neg(Formula::exists(var, sort, Formula::neg(body)))
    }

    pub fn free_vars(&self) -> BTreeSet<String> {
        let mut out = BTreeSet::new();
        self.collect_free_vars(&mut BTreeSet::new(), &mut out);
        out
    }

    fn collect_free_vars(&self, bound: &mut BTreeSet<String>, out: &mut BTreeSet<String>) {
        match self {
            Formula::Bot => {}
            Formula::Atom { args, .. } | Formula::DefAtom { args, .. } => {
                for t in args {
                    if let Term::Var(v) = t {
                        if !bound.contains(v) {
                            out.insert(v.clone());
                        }
                    }
                }
            }
            Formula::Neg(f)
            | Formula::Prev(f)
            | Formula::PrevWithin(_, f)
            | Formula::Once(f)
            | Formula::OnceWithin(_, f)
            | Formula::Earlier(f)
            | Formula::EarlierWithin(_, f) => f.collect_free_vars(bound, out),
            Formula::Or(a, b) | Formula::Since(a, b) | Formula::SinceWithin(_, a, b) => {
                a.collect_free_vars(bound, out);
                b.collect_free_vars(bound, out);
            }
            Formula::Exists { var, body, .. } => {
                let fresh = bound.insert(var.clone());
                body.collect_free_vars(bound, out);
                if fresh {
                    bound.remove(var);
                }
            }
        }
    }

    pub fn is_closed(&self) -> bool {
        self.free_vars().is_empty()
    }

    /// Replaces free variables by constants without consulting the
    /// signature. Bindings map variables to constant names only, so no
    /// capture can occur; a binder simply shadows its own variable.
    pub fn substitute_unchecked(&self, binding: &BTreeMap<String, String>) -> Formula {
        if binding.is_empty() {
            return self.clone();
        }
        let subst_args = |args: &[Term]| -> Vec<Term> {
            args.iter()
                .map(|t| match t {
                    Term::Var(v) => match binding.get(v) {
                        Some(c) => Term::Const(c.clone()),
                        None => t.clone(),
                    },
                    Term::Const(_) => t.clone(),
                })
                .collect()
        };
        match self {
            Formula::Bot => Formula::Bot,
            Formula::Atom { pred, args } => Formula::Atom {
                pred: pred.clone(),
                args: subst_args(args),
            },
            Formula::DefAtom { pred, args } => Formula::DefAtom {
                pred: pred.clone(),
                args: subst_args(args),
            },
            Formula::Neg(f) => Formula::neg(f.substitute_unchecked(binding)),
            Formula::Or(a, b) => Formula::or(
                a.substitute_unchecked(binding),
                b.substitute_unchecked(binding),
            ),
            Formula::Prev(f) => Formula::prev(f.substitute_unchecked(binding)),
            Formula::PrevWithin(n, f) => Formula::prev_within(*n, f.substitute_unchecked(binding)),
            Formula::Since(a, b) => Formula::since(
                a.substitute_unchecked(binding),
                b.substitute_unchecked(binding),
            ),
            Formula::SinceWithin(n, a, b) => Formula::since_within(
                *n,
                a.substitute_unchecked(binding),
                b.substitute_unchecked(binding),
            ),
            Formula::Once(f) => Formula::once(f.substitute_unchecked(binding)),
            Formula::OnceWithin(n, f) => Formula::once_within(*n, f.substitute_unchecked(binding)),
            Formula::Earlier(f) => Formula::earlier(f.substitute_unchecked(binding)),
            Formula::EarlierWithin(n, f) => {
                Formula::earlier_within(*n, f.substitute_unchecked(binding))
            }
            Formula::Exists { var, sort, body } => {
                if binding.contains_key(var) {
                    let mut inner = binding.clone();
                    inner.remove(var);
                    Formula::exists(var.clone(), sort.clone(), body.substitute_unchecked(&inner))
                } else {
                    Formula::exists(
                        var.clone(),
                        sort.clone(),
                        body.substitute_unchecked(binding),
                    )
                }
            }
        }
    }
}

/// A recursive definition `P(x1:s1, ..., xk:sk) := body`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RecursiveDef {
    pub name: String,
    /// Parameter names with their sorts.
    pub params: Vec<(String, String)>,
    pub body: Formula,
}

/// A named deny formula: the monitor reports a violation at every world
/// where the formula is satisfied.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NamedPolicy {
    pub name: String,
    pub formula: Formula,
}

/// A complete policy specification: signature, finite domains, recursive
/// definitions, static facts, and the deny formulas to monitor.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct PolicySpec {
    /// Sort names in declaration order.
    pub sorts: Vec<String>,
    /// Per-sort constants in declaration order. The interpretation is the
    /// term model: domain elements are exactly these constant symbols.
    pub domains: BTreeMap<String, Vec<String>>,
    pub predicates: Vec<PredicateDecl>,
    pub defs: Vec<RecursiveDef>,
    pub static_facts: BTreeSet<GroundAtom>,
    pub policies: Vec<NamedPolicy>,
}

impl PolicySpec {
    pub fn predicate(&self, name: &str) -> Option<&PredicateDecl> {
        self.predicates.iter().find(|p| p.name == name)
    }

    pub fn def(&self, name: &str) -> Option<&RecursiveDef> {
        self.defs.iter().find(|d| d.name == name)
    }

    pub fn domain(&self, sort: &str) -> &[String] {
        self.domains.get(sort).map(Vec::as_slice).unwrap_or(&[])
    }

    /// Sort of a declared constant, searching all domains.
    pub fn const_sort(&self, name: &str) -> Option<&str> {
        self.sorts
            .iter()
            .find(|sort| self.domain(sort).iter().any(|c| c == name))
            .map(String::as_str)
    }

    /// Instantiates a definition body with ground arguments. The caller is
    /// responsible for arity; sorts are assumed checked by `validate`.
    pub fn instantiate_def(&self, def: &RecursiveDef, args: &[String]) -> Formula {
        debug_assert_eq!(def.params.len(), args.len());
        let binding: BTreeMap<String, String> = def
            .params
            .iter()
            .map(|(p, _)| p.clone())
            .zip(args.iter().cloned())
            .collect();
        def.body.substitute_unchecked(&binding)
    }

    /// Checks every well-formedness rule: unique names, declared sorts,
    /// arities and argument sorts, variable binding, positive metric
    /// bounds, ground static facts, closed policies, and guardedness of
    /// every defined-predicate occurrence inside definition bodies.
    pub fn validate(&self) -> Result<(), Vec<Diagnostic>> {
        let mut diags = Vec::new();
        self.check_declarations(&mut diags);
        for def in &self.defs {
            let ctx = format!("def {}", def.name);
            let mut scope: BTreeMap<String, String> = BTreeMap::new();
            for (p, s) in &def.params {
                if scope.insert(p.clone(), s.clone()).is_some() {
                    diags.push(Diagnostic::new(
                        DiagnosticKind::DuplicateDefinition,
                        &ctx,
                        format!("parameter `{p}` repeated"),
                    ));
                }
                if !self.sorts.iter().any(|x| x == s) {
                    diags.push(Diagnostic::new(
                        DiagnosticKind::UnknownSymbol,
                        &ctx,
                        format!("undeclared sort `{s}`"),
                    ));
                }
            }
            self.check_formula(&def.body, &scope, &ctx, &mut diags);
            check_guarded(&def.body, false, &ctx, &mut diags);
        }
        for policy in &self.policies {
            let ctx = format!("policy {}", policy.name);
            self.check_formula(&policy.formula, &BTreeMap::new(), &ctx, &mut diags);
            for v in policy.formula.free_vars() {
                diags.push(Diagnostic::new(
                    DiagnosticKind::UnboundVariable,
                    &ctx,
                    format!("policy formula must be closed, `{v}` is free"),
                ));
            }
        }
        if diags.is_empty() {
            Ok(())
        } else {
            Err(diags)
        }
    }

    fn check_declarations(&self, diags: &mut Vec<Diagnostic>) {
        let ctx = "declarations";
        if self.sorts.is_empty() {
            diags.push(Diagnostic::new(
                DiagnosticKind::UnknownSymbol,
                ctx,
                "at least one sort must be declared",
            ));
        }
        let mut seen_sorts = BTreeSet::new();
        for s in &self.sorts {
            if !seen_sorts.insert(s) {
                diags.push(Diagnostic::new(
                    DiagnosticKind::DuplicateDefinition,
                    ctx,
                    format!("sort `{s}` declared twice"),
                ));
            }
        }
        let mut seen_consts = BTreeSet::new();
        for (sort, consts) in &self.domains {
            if !self.sorts.iter().any(|s| s == sort) {
                diags.push(Diagnostic::new(
                    DiagnosticKind::UnknownSymbol,
                    ctx,
                    format!("constants declared for undeclared sort `{sort}`"),
                ));
            }
            for c in consts {
                if !seen_consts.insert(c) {
                    diags.push(Diagnostic::new(
                        DiagnosticKind::DuplicateDefinition,
                        ctx,
                        format!("constant `{c}` declared twice"),
                    ));
                }
            }
        }
        let mut seen_preds = BTreeSet::new();
        for p in &self.predicates {
            if !seen_preds.insert(&p.name) {
                diags.push(Diagnostic::new(
                    DiagnosticKind::DuplicateDefinition,
                    ctx,
                    format!("predicate `{}` declared twice", p.name),
                ));
            }
            for s in &p.arg_sorts {
                if !self.sorts.iter().any(|x| x == s) {
                    diags.push(Diagnostic::new(
                        DiagnosticKind::UnknownSymbol,
                        ctx,
                        format!("predicate `{}` uses undeclared sort `{s}`", p.name),
                    ));
                }
            }
        }
        let mut seen_defs = BTreeSet::new();
        for d in &self.defs {
            if !seen_defs.insert(&d.name) {
                diags.push(Diagnostic::new(
                    DiagnosticKind::DuplicateDefinition,
                    ctx,
                    format!("predicate `{}` defined twice", d.name),
                ));
            }
            match self.predicate(&d.name) {
                Some(decl) if decl.kind == PredKind::Defined => {
                    if decl.arg_sorts.len() != d.params.len() {
                        diags.push(Diagnostic::new(
                            DiagnosticKind::SortMismatch,
                            ctx,
                            format!(
                                "definition of `{}` takes {} parameters, declaration has {}",
                                d.name,
                                d.params.len(),
                                decl.arg_sorts.len()
                            ),
                        ));
                    } else {
                        for ((p, got), want) in d.params.iter().zip(&decl.arg_sorts) {
                            if got != want {
                                diags.push(Diagnostic::new(
                                    DiagnosticKind::SortMismatch,
                                    ctx,
                                    format!(
                                        "parameter `{p}` of `{}` has sort `{got}`, declared `{want}`",
                                        d.name
                                    ),
                                ));
                            }
                        }
                    }
                }
                Some(_) => diags.push(Diagnostic::new(
                    DiagnosticKind::SortMismatch,
                    ctx,
                    format!(
                        "`{}` has a definition but is not a defined predicate",
                        d.name
                    ),
                )),
                None => diags.push(Diagnostic::new(
                    DiagnosticKind::UnknownSymbol,
                    ctx,
                    format!("definition for undeclared predicate `{}`", d.name),
                )),
            }
        }
        for p in &self.predicates {
            if p.kind == PredKind::Defined && !seen_defs.contains(&p.name) {
                diags.push(Diagnostic::new(
                    DiagnosticKind::UnknownSymbol,
                    ctx,
                    format!("defined predicate `{}` has no definition", p.name),
                ));
            }
        }
        for fact in &self.static_facts {
            match self.predicate(&fact.pred) {
                Some(decl) if decl.kind == PredKind::Static => {
                    if decl.arg_sorts.len() != fact.args.len() {
                        diags.push(Diagnostic::new(
                            DiagnosticKind::SortMismatch,
                            ctx,
                            format!("fact `{fact}` has wrong arity"),
                        ));
                    } else {
                        for (c, sort) in fact.args.iter().zip(&decl.arg_sorts) {
                            match self.const_sort(c) {
                                Some(s) if s == sort => {}
                                Some(s) => diags.push(Diagnostic::new(
                                    DiagnosticKind::SortMismatch,
                                    ctx,
                                    format!(
                                        "fact `{fact}`: `{c}` has sort `{s}`, expected `{sort}`"
                                    ),
                                )),
                                None => diags.push(Diagnostic::new(
                                    DiagnosticKind::UnknownSymbol,
                                    ctx,
                                    format!("fact `{fact}` uses undeclared constant `{c}`"),
                                )),
                            }
                        }
                    }
                }
                Some(_) => diags.push(Diagnostic::new(
                    DiagnosticKind::SortMismatch,
                    ctx,
                    format!("fact `{fact}` requires a static predicate"),
                )),
                None => diags.push(Diagnostic::new(
                    DiagnosticKind::UnknownSymbol,
                    ctx,
                    format!("fact `{fact}` uses undeclared predicate"),
                )),
            }
        }
        let mut seen_policies = BTreeSet::new();
        for p in &self.policies {
            if !seen_policies.insert(&p.name) {
                diags.push(Diagnostic::new(
                    DiagnosticKind::DuplicateDefinition,
                    ctx,
                    format!("policy `{}` declared twice", p.name),
                ));
            }
        }
    }

    fn check_formula(
        &self,
        f: &Formula,
        scope: &BTreeMap<String, String>,
        ctx: &str,
        diags: &mut Vec<Diagnostic>,
    ) {
        match f {
            Formula::Bot => {}
            Formula::Atom { pred, args } | Formula::DefAtom { pred, args } => {
                let is_def_atom = matches!(f, Formula::DefAtom { .. });
                match self.predicate(pred) {
                    None => diags.push(Diagnostic::new(
                        DiagnosticKind::UnknownSymbol,
                        ctx,
                        format!("undeclared predicate `{pred}`"),
                    )),
                    Some(decl) => {
                        let decl_is_def = decl.kind == PredKind::Defined;
                        if decl_is_def != is_def_atom {
                            diags.push(Diagnostic::new(
                                DiagnosticKind::SortMismatch,
                                ctx,
                                format!("predicate `{pred}` is {} but used otherwise", decl.kind),
                            ));
                        }
                        if decl.arg_sorts.len() != args.len() {
                            diags.push(Diagnostic::new(
                                DiagnosticKind::SortMismatch,
                                ctx,
                                format!(
                                    "`{pred}` expects {} arguments, got {}",
                                    decl.arg_sorts.len(),
                                    args.len()
                                ),
                            ));
                        } else {
                            for (t, sort) in args.iter().zip(&decl.arg_sorts) {
                                self.check_term(t, sort, scope, ctx, diags);
                            }
                        }
                    }
                }
            }
            Formula::Neg(g) | Formula::Prev(g) | Formula::Once(g) | Formula::Earlier(g) => {
                self.check_formula(g, scope, ctx, diags)
            }
            Formula::PrevWithin(n, g)
            | Formula::OnceWithin(n, g)
            | Formula::EarlierWithin(n, g) => {
                self.check_bound(*n, ctx, diags);
                self.check_formula(g, scope, ctx, diags);
            }
            Formula::Or(a, b) | Formula::Since(a, b) => {
                self.check_formula(a, scope, ctx, diags);
                self.check_formula(b, scope, ctx, diags);
            }
            Formula::SinceWithin(n, a, b) => {
                self.check_bound(*n, ctx, diags);
                self.check_formula(a, scope, ctx, diags);
                self.check_formula(b, scope, ctx, diags);
            }
            Formula::Exists { var, sort, body } => {
                if !self.sorts.iter().any(|s| s == sort) {
                    diags.push(Diagnostic::new(
                        DiagnosticKind::UnknownSymbol,
                        ctx,
                        format!("quantifier over undeclared sort `{sort}`"),
                    ));
                }
                let mut inner = scope.clone();
                inner.insert(var.clone(), sort.clone());
                self.check_formula(body, &inner, ctx, diags);
            }
        }
    }

    fn check_term(
        &self,
        t: &Term,
        expected_sort: &str,
        scope: &BTreeMap<String, String>,
        ctx: &str,
        diags: &mut Vec<Diagnostic>,
    ) {
        match t {
            Term::Const(c) => match self.const_sort(c) {
                Some(s) if s == expected_sort => {}
                Some(s) => diags.push(Diagnostic::new(
                    DiagnosticKind::SortMismatch,
                    ctx,
                    format!("constant `{c}` has sort `{s}`, expected `{expected_sort}`"),
                )),
                None => diags.push(Diagnostic::new(
                    DiagnosticKind::UnboundVariable,
                    ctx,
                    format!("`{c}` is neither a bound variable nor a declared constant"),
                )),
            },
            Term::Var(v) => match scope.get(v) {
                Some(s) if s == expected_sort => {}
                Some(s) => diags.push(Diagnostic::new(
                    DiagnosticKind::SortMismatch,
                    ctx,
                    format!("variable `{v}` has sort `{s}`, expected `{expected_sort}`"),
                )),
                None => diags.push(Diagnostic::new(
                    DiagnosticKind::UnboundVariable,
                    ctx,
                    format!("`{v}` is neither a bound variable nor a declared constant"),
                )),
            },
        }
    }

    fn check_bound(&self, n: i64, ctx: &str, diags: &mut Vec<Diagnostic>) {
        if n < 1 {
            diags.push(Diagnostic::new(
                DiagnosticKind::NonPositiveBound,
                ctx,
                format!("metric bound must be at least 1, got {n}"),
            ));
        }
    }

    /// Sort-checked substitution of free variables by constants. Every
    /// binding target must be a declared constant whose sort matches each
    /// position the variable occupies.
    pub fn substitute(
        &self,
        f: &Formula,
        binding: &BTreeMap<String, String>,
    ) -> Result<Formula, Vec<Diagnostic>> {
        let mut diags = Vec::new();
        self.check_binding_sorts(f, binding, &mut diags);
        if diags.is_empty() {
            Ok(f.substitute_unchecked(binding))
        } else {
            Err(diags)
        }
    }

    fn check_binding_sorts(
        &self,
        f: &Formula,
        binding: &BTreeMap<String, String>,
        diags: &mut Vec<Diagnostic>,
    ) {
        match f {
            Formula::Bot => {}
            Formula::Atom { pred, args } | Formula::DefAtom { pred, args } => {
                if let Some(decl) = self.predicate(pred) {
                    for (t, sort) in args.iter().zip(&decl.arg_sorts) {
                        if let Term::Var(v) = t {
                            if let Some(c) = binding.get(v) {
                                match self.const_sort(c) {
                                    Some(s) if s == sort => {}
                                    got => diags.push(Diagnostic::new(
                                        DiagnosticKind::SortMismatch,
                                        "substitute",
                                        format!(
                                            "cannot bind `{v}` to `{c}` (sort {}, expected `{sort}`)",
                                            got.map_or("undeclared".to_string(), |s| format!("`{s}`"))
                                        ),
                                    )),
                                }
                            }
                        }
                    }
                }
            }
            Formula::Neg(g)
            | Formula::Prev(g)
            | Formula::PrevWithin(_, g)
            | Formula::Once(g)
            | Formula::OnceWithin(_, g)
            | Formula::Earlier(g)
            | Formula::EarlierWithin(_, g) => self.check_binding_sorts(g, binding, diags),
            Formula::Or(a, b) | Formula::Since(a, b) | Formula::SinceWithin(_, a, b) => {
                self.check_binding_sorts(a, binding, diags);
                self.check_binding_sorts(b, binding, diags);
            }
            Formula::Exists { var, body, .. } => {
                if binding.contains_key(var) {
                    let mut inner = binding.clone();
                    inner.remove(var);
                    self.check_binding_sorts(body, &inner, diags);
                } else {
                    self.check_binding_sorts(body, binding, diags);
                }
            }
        }
    }
}

/// Guardedness: inside a definition body, every occurrence of any defined
/// predicate must have at least one ancestor among the previous/earlier
/// operators. This is what forces recursion to consult strictly earlier
/// worlds only.
fn check_guarded(f: &Formula, guarded: bool, ctx: &str, diags: &mut Vec<Diagnostic>) {
    match f {
        Formula::Bot | Formula::Atom { .. } => {}
        Formula::DefAtom { pred, args } => {
            if !guarded {
                let occurrence = Formula::DefAtom {
                    pred: pred.clone(),
                    args: args.clone(),
                };
                diags.push(Diagnostic::new(
                    DiagnosticKind::UnguardedRecursion,
                    ctx,
                    format!(
                        "occurrence `{}` is not under prev/earlier",
                        crate::dsl::print_formula(&occurrence)
                    ),
                ));
            }
        }
        Formula::Prev(g)
        | Formula::PrevWithin(_, g)
        | Formula::Earlier(g)
        | Formula::EarlierWithin(_, g) => check_guarded(g, true, ctx, diags),
        Formula::Neg(g) | Formula::Once(g) | Formula::OnceWithin(_, g) => {
            check_guarded(g, guarded, ctx, diags)
        }
        Formula::Or(a, b) | Formula::Since(a, b) | Formula::SinceWithin(_, a, b) => {
            check_guarded(a, guarded, ctx, diags);
            check_guarded(b, guarded, ctx, diags);
        }
        Formula::Exists { body, .. } => check_guarded(body, guarded, ctx, diags),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum DiagnosticKind {
    UnguardedRecursion,
    SortMismatch,
    UnboundVariable,
    UnknownSymbol,
    NonPositiveBound,
    DuplicateDefinition,
    /// Produced by the concrete-syntax reader only; `validate` never emits it.
    Syntax,
}

impl fmt::Display for DiagnosticKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            DiagnosticKind::UnguardedRecursion => "unguarded recursion",
            DiagnosticKind::SortMismatch => "sort mismatch",
            DiagnosticKind::UnboundVariable => "unbound variable",
            DiagnosticKind::UnknownSymbol => "unknown symbol",
            DiagnosticKind::NonPositiveBound => "non-positive bound",
            DiagnosticKind::DuplicateDefinition => "duplicate definition",
            DiagnosticKind::Syntax => "syntax error",
        };
        write!(f, "{s}")
    }
}

/// One validation or parse problem. `pos` is filled in when the diagnostic
/// was produced while reading concrete syntax.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Diagnostic {
    pub kind: DiagnosticKind,
    /// Which declaration the problem was found in, e.g. `def trans`.
    pub context: String,
    pub message: String,
    /// 1-based line and column in the source text, when known.
    pub pos: Option<(u32, u32)>,
}

impl Diagnostic {
    pub fn new(
        kind: DiagnosticKind,
        context: impl Into<String>,
        message: impl Into<String>,
    ) -> Self {
        Diagnostic {
            kind,
            context: context.into(),
            message: message.into(),
            pos: None,
        }
    }

    pub fn at(mut self, line: u32, col: u32) -> Self {
        self.pos = Some((line, col));
        self
    }
}

impl fmt::Display for Diagnostic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if let Some((line, col)) = self.pos {
            write!(f, "{line}:{col}: ")?;
        }
        write!(f, "{}: in {}: {}", self.kind, self.context, self.message)
    }
}
