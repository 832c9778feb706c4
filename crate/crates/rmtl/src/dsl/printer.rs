use std::fmt::Write;

use crate::formula::{Formula, PolicySpec, PredKind, Term};

/// Binding strength used to decide where parentheses are required. Bigger
/// binds tighter. Quantifiers get the weakest level so they are always
/// parenthesized in operand position; their body would otherwise swallow
/// everything to its right.
const LEVEL_EXISTS: u8 = 0;
const LEVEL_SINCE: u8 = 1;
const LEVEL_OR: u8 = 2;
const LEVEL_UNARY: u8 = 3;
const LEVEL_ATOM: u8 = 4;

fn level(f: &Formula) -> u8 {
    match f {
        Formula::Exists { .. } => LEVEL_EXISTS,
        Formula::Since(..) | Formula::SinceWithin(..) => LEVEL_SINCE,
        Formula::Or(..) => LEVEL_OR,
        Formula::Neg(inner) if **inner == Formula::Bot => LEVEL_ATOM, // prints as `true`
        Formula::Neg(..)
        | Formula::Prev(..)
        | Formula::PrevWithin(..)
        | Formula::Once(..)
        | Formula::OnceWithin(..)
        | Formula::Earlier(..)
        | Formula::EarlierWithin(..) => LEVEL_UNARY,
        Formula::Bot | Formula::Atom { .. } | Formula::DefAtom { .. } => LEVEL_ATOM,
    }
}

fn write_child(out: &mut String, f: &Formula, required: u8) {
    if level(f) < required {
        out.push('(');
        write_formula(out, f);
        out.push(')');
    } else {
        write_formula(out, f);
    }
}

fn write_terms(out: &mut String, args: &[Term]) {
    if args.is_empty() {
        return;
    }
    out.push('(');
    for (i, t) in args.iter().enumerate() {
        if i > 0 {
            out.push(',');
        }
        let _ = write!(out, "{t}");
    }
    out.push(')');
}

fn write_formula(out: &mut String, f: &Formula) {
    match f {
        Formula::Bot => out.push_str("false"),
        Formula::Atom { pred, args } | Formula::DefAtom { pred, args } => {
            out.push_str(pred);
            write_terms(out, args);
        }
        Formula::Neg(inner) if **inner == Formula::Bot => out.push_str("true"),
        Formula::Neg(inner) => {
            out.push_str("not ");
            write_child(out, inner, LEVEL_UNARY);
        }
        Formula::Or(a, b) => {
            write_child(out, a, LEVEL_OR);
            out.push_str(" or ");
            write_child(out, b, LEVEL_UNARY);
        }
        Formula::Prev(inner) => {
            out.push_str("prev ");
            write_child(out, inner, LEVEL_UNARY);
        }
        Formula::PrevWithin(n, inner) => {
            let _ = write!(out, "prev[{n}] ");
            write_child(out, inner, LEVEL_UNARY);
        }
        Formula::Once(inner) => {
            out.push_str("once ");
            write_child(out, inner, LEVEL_UNARY);
        }
        Formula::OnceWithin(n, inner) => {
            let _ = write!(out, "once[{n}] ");
            write_child(out, inner, LEVEL_UNARY);
        }
        Formula::Earlier(inner) => {
            out.push_str("earlier ");
            write_child(out, inner, LEVEL_UNARY);
        }
        Formula::EarlierWithin(n, inner) => {
            let _ = write!(out, "earlier[{n}] ");
            write_child(out, inner, LEVEL_UNARY);
        }
        Formula::Since(a, b) => {
            write_child(out, a, LEVEL_SINCE);
            out.push_str(" since ");
            write_child(out, b, LEVEL_OR);
        }
        Formula::SinceWithin(n, a, b) => {
            write_child(out, a, LEVEL_SINCE);
            let _ = write!(out, " since[{n}] ");
            write_child(out, b, LEVEL_OR);
        }
        Formula::Exists { var, sort, body } => {
            let _ = write!(out, "exists {var}:{sort}. ");
            write_formula(out, body);
        }
    }
}

/// Renders a formula as concrete syntax that parses back to the same tree.
pub fn print_formula(f: &Formula) -> String {
    let mut out = String::new();
    write_formula(&mut out, f);
    out
}

/// Renders a whole specification. The output is deterministic and
/// `parse(print(spec)) == spec` for any spec that `parse` can produce.
pub fn print(spec: &PolicySpec) -> String {
    let mut out = String::new();
    for sort in &spec.sorts {
        let _ = writeln!(out, "sort {sort}");
    }
    for sort in &spec.sorts {
        for c in spec.domain(sort) {
            let _ = writeln!(out, "const {c} : {sort}");
        }
    }
    for p in &spec.predicates {
        let kw = match p.kind {
            PredKind::Event => "event",
            PredKind::Static => "static",
            PredKind::Defined => continue, // declared by its `def`
        };
        let _ = writeln!(out, "{kw} {}({})", p.name, p.arg_sorts.join(", "));
    }
    for fact in &spec.static_facts {
        let _ = writeln!(out, "fact {}({})", fact.pred, fact.args.join(", "));
    }
    for def in &spec.defs {
        let params: Vec<String> = def.params.iter().map(|(v, s)| format!("{v}:{s}")).collect();
        let _ = writeln!(
            out,
            "def {}({}) := {}",
            def.name,
            params.join(", "),
            print_formula(&def.body)
        );
    }
    for p in &spec.policies {
        let _ = writeln!(out, "policy {} := {}", p.name, print_formula(&p.formula));
    }
    out
}
