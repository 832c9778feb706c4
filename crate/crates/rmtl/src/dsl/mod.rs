//! Concrete syntax for policy specifications.
//!
//! A policy file is a sequence of declarations:
//!
//! ```text
//! sort app
//! const sink : app
//! event call(app, app)
//! static system(app)
//! fact system(b)
//! def trans(x:app, y:app) := call(x,y) or exists z:app. earlier[10000] trans(x,z) and call(z,y)
//! policy escalation := exists x:app. trans(x,sink) and not system(x)
//! ```
//!
//! Operator precedence, tightest first: unary operators (`not`, `prev`,
//! `once`, `earlier` and their `[n]` variants), `and`, `or`, `implies`,
//! `since`. `since` is left-associative and a quantifier body extends as
//! far right as possible. `#` starts a comment running to end of line.

mod lexer;
mod parser;
mod printer;

pub use printer::{print, print_formula};

use std::io::Read;
use std::path::Path;

use crate::formula::{Diagnostic, PolicySpec};

/// Policy text together with where it came from, for error reporting.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SourcePolicy {
    pub text: String,
    pub origin: String,
}

impl SourcePolicy {
    pub fn new(text: impl Into<String>, origin: impl Into<String>) -> Self {
        SourcePolicy {
            text: text.into(),
            origin: origin.into(),
        }
    }

    pub fn from_path(path: &Path) -> std::io::Result<Self> {
        Ok(SourcePolicy {
            text: std::fs::read_to_string(path)?,
            origin: path.display().to_string(),
        })
    }

    pub fn from_stdin() -> std::io::Result<Self> {
        let mut text = String::new();
        std::io::stdin().read_to_string(&mut text)?;
        Ok(SourcePolicy {
            text,
            origin: "<stdin>".into(),
        })
    }

    pub fn parse(&self) -> Result<PolicySpec, Vec<Diagnostic>> {
        parse(&self.text)
    }
}

/// Parses and validates a policy specification. On failure the result
/// carries every syntax or validation diagnostic, with source positions
/// where they are known.
pub fn parse(src: &str) -> Result<PolicySpec, Vec<Diagnostic>> {
    parser::Parser::parse(src)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::formula::{DiagnosticKind, Formula, Term};

    const PRELUDE: &str = "\
sort app
const a : app
const b : app
const sink : app
event call(app, app)
static system(app)
static trusted(app)
";

    fn var(v: &str) -> Term {
        Term::var(v)
    }

    fn con(c: &str) -> Term {
        Term::constant(c)
    }

    #[test]
    fn parses_direct_call_policy() {
        let src = format!(
            "{PRELUDE}policy p1 := exists x:app. call(x,sink) and not system(x) and not trusted(x)\n"
        );
        let spec = parse(&src).unwrap();
        let expected = Formula::exists(
            "x",
            "app",
            Formula::and(
                Formula::and(
                    Formula::atom("call", vec![var("x"), con("sink")]),
                    Formula::neg(Formula::atom("system", vec![var("x")])),
                ),
                Formula::neg(Formula::atom("trusted", vec![var("x")])),
            ),
        );
        assert_eq!(spec.policies[0].formula, expected);
    }

    #[test]
    fn parses_transitive_call_definition() {
        let src = format!(
            "{PRELUDE}def trans(x:app, y:app) := call(x,y) or exists z:app. earlier[10000] trans(x,z) and call(z,y)\npolicy p := trans(a,sink)\n"
        );
        let spec = parse(&src).unwrap();
        let def = &spec.defs[0];
        let expected = Formula::or(
            Formula::atom("call", vec![var("x"), var("y")]),
            Formula::exists(
                "z",
                "app",
                Formula::and(
                    Formula::earlier_within(
                        10000,
                        Formula::def_atom("trans", vec![var("x"), var("z")]),
                    ),
                    Formula::atom("call", vec![var("z"), var("y")]),
                ),
            ),
        );
        assert_eq!(def.body, expected);
        assert_eq!(
            spec.policies[0].formula,
            Formula::def_atom("trans", vec![con("a"), con("sink")])
        );
    }

    #[test]
    fn zero_bound_is_rejected() {
        let src =
            format!("{PRELUDE}event p(app)\nevent q(app)\npolicy bad := p(a) since[0] q(a)\n");
        let diags = parse(&src).unwrap_err();
        assert!(diags
            .iter()
            .any(|d| d.kind == DiagnosticKind::NonPositiveBound));
        assert!(diags.iter().all(|d| d.pos.is_some()));
    }

    #[test]
    fn syntax_error_has_position() {
        let diags = parse("sort app\npolicy p := or\n").unwrap_err();
        assert_eq!(diags.len(), 1);
        assert_eq!(diags[0].kind, DiagnosticKind::Syntax);
        assert_eq!(diags[0].pos, Some((2, 13)));
    }

    #[test]
    fn unary_binds_tighter_than_or() {
        let src = format!("{PRELUDE}policy p := not system(a) or trusted(b)\n");
        let spec = parse(&src).unwrap();
        let expected = Formula::or(
            Formula::neg(Formula::atom("system", vec![con("a")])),
            Formula::atom("trusted", vec![con("b")]),
        );
        assert_eq!(spec.policies[0].formula, expected);
        // And the printer needs no parentheses around `not system(a)`.
        assert_eq!(
            print_formula(&spec.policies[0].formula),
            "not system(a) or trusted(b)"
        );
    }

    #[test]
    fn since_is_left_associative_and_weakest() {
        let src = format!(
            "{PRELUDE}event p(app)\nevent q(app)\npolicy x := p(a) since q(a) since p(b) or q(b)\n"
        );
        let spec = parse(&src).unwrap();
        let expected = Formula::since(
            Formula::since(
                Formula::atom("p", vec![con("a")]),
                Formula::atom("q", vec![con("a")]),
            ),
            Formula::or(
                Formula::atom("p", vec![con("b")]),
                Formula::atom("q", vec![con("b")]),
            ),
        );
        assert_eq!(spec.policies[0].formula, expected);
    }

    #[test]
    fn implies_desugars() {
        let src = format!("{PRELUDE}policy x := system(a) implies trusted(a)\n");
        let spec = parse(&src).unwrap();
        assert_eq!(
            spec.policies[0].formula,
            Formula::or(
                Formula::neg(Formula::atom("system", vec![con("a")])),
                Formula::atom("trusted", vec![con("a")]),
            )
        );
    }

    #[test]
    fn forall_desugars() {
        let src = format!("{PRELUDE}policy x := forall y:app. system(y)\n");
        let spec = parse(&src).unwrap();
        assert_eq!(
            spec.policies[0].formula,
            Formula::forall("y", "app", Formula::atom("system", vec![var("y")]))
        );
    }

    #[test]
    fn bot_prints_as_false() {
        assert_eq!(print_formula(&Formula::Bot), "false");
        assert_eq!(print_formula(&Formula::top()), "true");
    }

    #[test]
    fn comments_are_ignored() {
        let src = format!("{PRELUDE}# a comment\npolicy x := system(a) # trailing\n");
        assert!(parse(&src).is_ok());
    }

    #[test]
    fn print_parse_round_trip_on_handwritten_spec() {
        let src = format!(
            "{PRELUDE}event p(app)\nfact system(b)\ndef d(x:app) := p(x) or prev[3] d(x)\npolicy one := exists x:app. (d(x) since[7] not p(x)) or once p(a)\npolicy two := forall x:app. p(x) implies earlier[2] p(x)\n"
        );
        let spec = parse(&src).unwrap();
        let printed = print(&spec);
        let reparsed = parse(&printed).unwrap();
        assert_eq!(spec, reparsed, "printed form:\n{printed}");
    }
}
