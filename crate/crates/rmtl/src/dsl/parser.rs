use std::collections::BTreeMap;

use crate::dsl::lexer::{lex, Spanned, Tok};
use crate::formula::{
    Diagnostic, DiagnosticKind, Formula, GroundAtom, NamedPolicy, PolicySpec, PredKind,
    PredicateDecl, RecursiveDef, Term,
};

/// Formula shape produced by the grammar, before predicate/constant names
/// are resolved against the full signature. Resolution must wait until all
/// declarations have been read so that mutually recursive definitions can
/// reference each other.
enum Raw {
    Bot,
    App {
        name: String,
        args: Vec<String>,
    },
    Neg(Box<Raw>),
    Or(Box<Raw>, Box<Raw>),
    Prev(Option<i64>, Box<Raw>),
    Since(Option<i64>, Box<Raw>, Box<Raw>),
    Once(Option<i64>, Box<Raw>),
    Earlier(Option<i64>, Box<Raw>),
    Exists {
        var: String,
        sort: String,
        body: Box<Raw>,
    },
}

impl Raw {
    fn neg(f: Raw) -> Raw {
        Raw::Neg(Box::new(f))
    }

    fn or(a: Raw, b: Raw) -> Raw {
        Raw::Or(Box::new(a), Box::new(b))
    }

    fn and(a: Raw, b: Raw) -> Raw {
        Raw::neg(Raw::or(Raw::neg(a), Raw::neg(b)))
    }
}

struct RawDef {
    name: String,
    params: Vec<(String, String)>,
    body: Raw,
    pos: (u32, u32),
}

struct RawPolicy {
    name: String,
    body: Raw,
    pos: (u32, u32),
}

pub struct Parser {
    toks: Vec<Spanned>,
    at: usize,
}

impl Parser {
    pub fn parse(src: &str) -> Result<PolicySpec, Vec<Diagnostic>> {
        let toks = lex(src).map_err(|d| vec![d])?;
        let mut p = Parser { toks, at: 0 };
        p.parse_file()
    }

    fn peek(&self) -> &Tok {
        &self.toks[self.at].0
    }

    fn pos(&self) -> (u32, u32) {
        let (_, l, c) = self.toks[self.at];
        (l, c)
    }

    fn bump(&mut self) -> Tok {
        let t = self.toks[self.at].0.clone();
        if self.at + 1 < self.toks.len() {
            self.at += 1;
        }
        t
    }

    fn error(&self, message: impl Into<String>) -> Diagnostic {
        let (l, c) = self.pos();
        Diagnostic::new(DiagnosticKind::Syntax, "parser", message).at(l, c)
    }

    fn expect(&mut self, want: Tok) -> Result<(), Diagnostic> {
        if *self.peek() == want {
            self.bump();
            Ok(())
        } else {
            Err(self.error(format!(
                "expected {}, found {}",
                want.describe(),
                self.peek().describe()
            )))
        }
    }

    fn ident(&mut self, what: &str) -> Result<String, Diagnostic> {
        match self.peek().clone() {
            Tok::Ident(s) => {
                self.bump();
                Ok(s)
            }
            other => Err(self.error(format!("expected {what}, found {}", other.describe()))),
        }
    }

    fn parse_file(&mut self) -> Result<PolicySpec, Vec<Diagnostic>> {
        let mut sorts: Vec<String> = Vec::new();
        let mut domains: BTreeMap<String, Vec<String>> = BTreeMap::new();
        let mut predicates: Vec<PredicateDecl> = Vec::new();
        let mut facts = Vec::new();
        let mut raw_defs: Vec<RawDef> = Vec::new();
        let mut raw_policies: Vec<RawPolicy> = Vec::new();

        self.parse_decls(
            &mut sorts,
            &mut domains,
            &mut predicates,
            &mut facts,
            &mut raw_defs,
            &mut raw_policies,
        )
        .map_err(|d| vec![d])?;

        // Definitions implicitly declare their head predicate; they go after
        // the explicit declarations so the order is canonical under
        // print-then-parse.
        for d in &raw_defs {
            predicates.push(PredicateDecl {
                name: d.name.clone(),
                arg_sorts: d.params.iter().map(|(_, s)| s.clone()).collect(),
                kind: PredKind::Defined,
            });
        }

        let resolver = Resolver {
            predicates: &predicates,
            domains: &domains,
        };
        let mut spec = PolicySpec {
            sorts,
            domains: domains.clone(),
            predicates: predicates.clone(),
            defs: Vec::new(),
            static_facts: facts.into_iter().collect(),
            policies: Vec::new(),
        };
        let mut decl_pos: Vec<(String, (u32, u32))> = Vec::new();
        for d in raw_defs {
            let mut scope: Vec<String> = d.params.iter().map(|(v, _)| v.clone()).collect();
            let body = resolver.resolve(&d.body, &mut scope);
            decl_pos.push((format!("def {}", d.name), d.pos));
            spec.defs.push(RecursiveDef {
                name: d.name,
                params: d.params,
                body,
            });
        }
        for p in raw_policies {
            let formula = resolver.resolve(&p.body, &mut Vec::new());
            decl_pos.push((format!("policy {}", p.name), p.pos));
            spec.policies.push(NamedPolicy {
                name: p.name,
                formula,
            });
        }

        if let Err(mut diags) = spec.validate() {
            for d in diags.iter_mut() {
                if d.pos.is_none() {
                    if let Some((_, pos)) = decl_pos.iter().find(|(ctx, _)| *ctx == d.context) {
                        d.pos = Some(*pos);
                    }
                }
            }
            return Err(diags);
        }
        Ok(spec)
    }

    #[allow(clippy::too_many_arguments)]
    fn parse_decls(
        &mut self,
        sorts: &mut Vec<String>,
        domains: &mut BTreeMap<String, Vec<String>>,
        predicates: &mut Vec<PredicateDecl>,
        facts: &mut Vec<GroundAtom>,
        raw_defs: &mut Vec<RawDef>,
        raw_policies: &mut Vec<RawPolicy>,
    ) -> Result<(), Diagnostic> {
        loop {
            let pos = self.pos();
            match self.peek() {
                Tok::Eof => break,
                Tok::Sort => {
                    self.bump();
                    let name = self.ident("sort name")?;
                    domains.entry(name.clone()).or_default();
                    sorts.push(name);
                }
                Tok::Const => {
                    self.bump();
                    let name = self.ident("constant name")?;
                    self.expect(Tok::Colon)?;
                    let sort = self.ident("sort name")?;
                    domains.entry(sort).or_default().push(name);
                }
                Tok::Event | Tok::Static => {
                    let kind = if *self.peek() == Tok::Event {
                        PredKind::Event
                    } else {
                        PredKind::Static
                    };
                    self.bump();
                    let name = self.ident("predicate name")?;
                    self.expect(Tok::LParen)?;
                    let mut arg_sorts = Vec::new();
                    if *self.peek() != Tok::RParen {
                        loop {
                            arg_sorts.push(self.ident("sort name")?);
                            if *self.peek() == Tok::Comma {
                                self.bump();
                            } else {
                                break;
                            }
                        }
                    }
                    self.expect(Tok::RParen)?;
                    predicates.push(PredicateDecl {
                        name,
                        arg_sorts,
                        kind,
                    });
                }
                Tok::Fact => {
                    self.bump();
                    let name = self.ident("predicate name")?;
                    self.expect(Tok::LParen)?;
                    let mut args = Vec::new();
                    if *self.peek() != Tok::RParen {
                        loop {
                            args.push(self.ident("constant name")?);
                            if *self.peek() == Tok::Comma {
                                self.bump();
                            } else {
                                break;
                            }
                        }
                    }
                    self.expect(Tok::RParen)?;
                    facts.push(GroundAtom::new(name, args));
                }
                Tok::Def => {
                    self.bump();
                    let name = self.ident("predicate name")?;
                    self.expect(Tok::LParen)?;
                    let mut params = Vec::new();
                    if *self.peek() != Tok::RParen {
                        loop {
                            let var = self.ident("parameter name")?;
                            self.expect(Tok::Colon)?;
                            let sort = self.ident("sort name")?;
                            params.push((var, sort));
                            if *self.peek() == Tok::Comma {
                                self.bump();
                            } else {
                                break;
                            }
                        }
                    }
                    self.expect(Tok::RParen)?;
                    self.expect(Tok::Assign)?;
                    let body = self.parse_formula()?;
                    raw_defs.push(RawDef {
                        name,
                        params,
                        body,
                        pos,
                    });
                }
                Tok::Policy => {
                    self.bump();
                    let name = self.ident("policy name")?;
                    self.expect(Tok::Assign)?;
                    let body = self.parse_formula()?;
                    raw_policies.push(RawPolicy { name, body, pos });
                }
                other => {
                    return Err(self.error(format!(
                        "expected a declaration keyword, found {}",
                        other.describe()
                    )))
                }
            }
        }
        Ok(())
    }

    fn parse_formula(&mut self) -> Result<Raw, Diagnostic> {
        self.parse_since()
    }

    fn parse_since(&mut self) -> Result<Raw, Diagnostic> {
        let mut lhs = self.parse_implies()?;
        while *self.peek() == Tok::Since {
            self.bump();
            let bound = self.parse_bound()?;
            let rhs = self.parse_implies()?;
            lhs = Raw::Since(bound, Box::new(lhs), Box::new(rhs));
        }
        Ok(lhs)
    }

    fn parse_implies(&mut self) -> Result<Raw, Diagnostic> {
        let lhs = self.parse_or()?;
        if *self.peek() == Tok::Implies {
            self.bump();
            let rhs = self.parse_implies()?;
            Ok(Raw::or(Raw::neg(lhs), rhs))
        } else {
            Ok(lhs)
        }
    }

    fn parse_or(&mut self) -> Result<Raw, Diagnostic> {
        let mut lhs = self.parse_and()?;
        while *self.peek() == Tok::Or {
            self.bump();
            let rhs = self.parse_and()?;
            lhs = Raw::or(lhs, rhs);
        }
        Ok(lhs)
    }

    fn parse_and(&mut self) -> Result<Raw, Diagnostic> {
        let mut lhs = self.parse_unary()?;
        while *self.peek() == Tok::And {
            self.bump();
            let rhs = self.parse_unary()?;
            lhs = Raw::and(lhs, rhs);
        }
        Ok(lhs)
    }

    fn parse_bound(&mut self) -> Result<Option<i64>, Diagnostic> {
        if *self.peek() != Tok::LBracket {
            return Ok(None);
        }
        self.bump();
        let n = match self.peek().clone() {
            Tok::Int(n) => {
                self.bump();
                n
            }
            other => {
                return Err(self.error(format!(
                    "expected an integer bound, found {}",
                    other.describe()
                )))
            }
        };
        self.expect(Tok::RBracket)?;
        Ok(Some(n))
    }

    fn parse_unary(&mut self) -> Result<Raw, Diagnostic> {
        match self.peek().clone() {
            Tok::Not => {
                self.bump();
                Ok(Raw::neg(self.parse_unary()?))
            }
            Tok::Prev => {
                self.bump();
                let bound = self.parse_bound()?;
                Ok(Raw::Prev(bound, Box::new(self.parse_unary()?)))
            }
            Tok::Once => {
                self.bump();
                let bound = self.parse_bound()?;
                Ok(Raw::Once(bound, Box::new(self.parse_unary()?)))
            }
            Tok::Earlier => {
                self.bump();
                let bound = self.parse_bound()?;
                Ok(Raw::Earlier(bound, Box::new(self.parse_unary()?)))
            }
            Tok::Exists | Tok::Forall => {
                let universal = *self.peek() == Tok::Forall;
                self.bump();
                let var = self.ident("variable name")?;
                self.expect(Tok::Colon)?;
                let sort = self.ident("sort name")?;
                self.expect(Tok::Dot)?;
                // Quantifier body extends as far right as possible.
                let body = self.parse_formula()?;
                let ex = |b: Raw| Raw::Exists {
                    var: var.clone(),
                    sort: sort.clone(),
                    body: Box::new(b),
                };
                if universal {
                    Ok(Raw::neg(ex(Raw::neg(body))))
                } else {
                    Ok(ex(body))
                }
            }
            _ => self.parse_primary(),
        }
    }

    fn parse_primary(&mut self) -> Result<Raw, Diagnostic> {
        match self.peek().clone() {
            Tok::False => {
                self.bump();
                Ok(Raw::Bot)
            }
            Tok::True => {
                self.bump();
                Ok(Raw::neg(Raw::Bot))
            }
            Tok::LParen => {
                self.bump();
                let f = self.parse_formula()?;
                self.expect(Tok::RParen)?;
                Ok(f)
            }
            Tok::Ident(name) => {
                self.bump();
                let mut args = Vec::new();
                if *self.peek() == Tok::LParen {
                    self.bump();
                    if *self.peek() != Tok::RParen {
                        loop {
                            args.push(self.ident("term")?);
                            if *self.peek() == Tok::Comma {
                                self.bump();
                            } else {
                                break;
                            }
                        }
                    }
                    self.expect(Tok::RParen)?;
                }
                Ok(Raw::App { name, args })
            }
            other => Err(self.error(format!("expected a formula, found {}", other.describe()))),
        }
    }
}

struct Resolver<'a> {
    predicates: &'a [PredicateDecl],
    domains: &'a BTreeMap<String, Vec<String>>,
}

impl Resolver<'_> {
    fn is_const(&self, name: &str) -> bool {
        self.domains.values().any(|cs| cs.iter().any(|c| c == name))
    }

    fn resolve(&self, raw: &Raw, scope: &mut Vec<String>) -> Formula {
        match raw {
            Raw::Bot => Formula::Bot,
            Raw::App { name, args } => {
                let terms: Vec<Term> = args
                    .iter()
                    .map(|a| {
                        if scope.iter().any(|v| v == a) {
                            Term::Var(a.clone())
                        } else if self.is_const(a) {
                            Term::Const(a.clone())
                        } else {
                            // Left as a variable so validation reports it
                            // as unbound rather than silently inventing a
                            // constant.
                            Term::Var(a.clone())
                        }
                    })
                    .collect();
                let defined = self
                    .predicates
                    .iter()
                    .any(|p| p.name == *name && p.kind == PredKind::Defined);
                if defined {
                    Formula::DefAtom {
                        pred: name.clone(),
                        args: terms,
                    }
                } else {
                    Formula::Atom {
                        pred: name.clone(),
                        args: terms,
                    }
                }
            }
            Raw::Neg(f) => Formula::neg(self.resolve(f, scope)),
            Raw::Or(a, b) => Formula::or(self.resolve(a, scope), self.resolve(b, scope)),
            Raw::Prev(None, f) => Formula::prev(self.resolve(f, scope)),
            Raw::Prev(Some(n), f) => Formula::prev_within(*n, self.resolve(f, scope)),
            Raw::Since(None, a, b) => {
                Formula::since(self.resolve(a, scope), self.resolve(b, scope))
            }
            Raw::Since(Some(n), a, b) => {
                Formula::since_within(*n, self.resolve(a, scope), self.resolve(b, scope))
            }
            Raw::Once(None, f) => Formula::once(self.resolve(f, scope)),
            Raw::Once(Some(n), f) => Formula::once_within(*n, self.resolve(f, scope)),
            Raw::Earlier(None, f) => Formula::earlier(self.resolve(f, scope)),
            Raw::Earlier(Some(n), f) => Formula::earlier_within(*n, self.resolve(f, scope)),
            Raw::Exists { var, sort, body } => {
                scope.push(var.clone());
                let resolved = self.resolve(body, scope);
                scope.pop();
                Formula::exists(var.clone(), sort.clone(), resolved)
            }
        }
    }
}
