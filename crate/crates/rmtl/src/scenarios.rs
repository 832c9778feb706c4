//! Bundled policies with golden traces.
//!
//! Each scenario is a policy file, a trace, and the expected per-world
//! verdicts. The expected files are generated by the reference semantics
//! (the `oracle` subcommand reproduces them byte for byte), never typed
//! in by hand; a test regenerates and compares them on every run.

use thiserror::Error;

use crate::formula::PolicySpec;
use crate::trace::{read_trace, Trace, TraceError};

#[derive(Debug, Error)]
#[error("unknown scenario `{0}`")]
pub struct UnknownScenario(pub String);

#[derive(Debug, Clone, Copy)]
pub struct Scenario {
    pub name: &'static str,
    pub policy_text: &'static str,
    pub trace_text: &'static str,
    pub expected_text: &'static str,
}

impl Scenario {
    pub fn spec(&self) -> PolicySpec {
        crate::dsl::parse(self.policy_text).expect("bundled policies are valid")
    }

    pub fn trace(&self) -> Result<Trace, TraceError> {
        read_trace(&self.spec(), self.trace_text.as_bytes())
    }
}

macro_rules! scenario {
    ($name:literal) => {
        Scenario {
            name: $name,
            policy_text: include_str!(concat!("../scenarios/", $name, "/policy.rmtl")),
            trace_text: include_str!(concat!("../scenarios/", $name, "/trace.jsonl")),
            expected_text: include_str!(concat!("../scenarios/", $name, "/expected.txt")),
        }
    };
}

pub const SCENARIOS: &[Scenario] = &[
    scenario!("policy1-direct-call"),
    scenario!("policy2-chain"),
    scenario!("policy2-chain-stale"),
    scenario!("policy3-trusted-chain"),
    scenario!("policy4-contact-then-internet"),
];

pub fn scenario_names() -> Vec<&'static str> {
    SCENARIOS.iter().map(|s| s.name).collect()
}

pub fn load_scenario(name: &str) -> Result<Scenario, UnknownScenario> {
    SCENARIOS
        .iter()
        .find(|s| s.name == name)
        .copied()
        .ok_or_else(|| UnknownScenario(name.to_string()))
}

/// The transitive-escalation policy over a configurable number of app
/// constants: calls chains reaching the sink within `window` time units
/// are flagged unless the source is a system app or already holds the
/// sink permission. Used by the size and flat-cost measurements.
pub fn escalation_spec(domain_size: usize, window: i64) -> PolicySpec {
    assert!(domain_size >= 1);
    let mut src = String::from("sort app\n");
    for i in 0..domain_size - 1 {
        src.push_str(&format!("const a{i} : app\n"));
    }
    src.push_str("const sink : app\n");
    src.push_str("event call(app, app)\n");
    src.push_str("static system(app)\n");
    src.push_str("static hasPermissionToSink(app)\n");
    src.push_str(&format!(
        "def trans(x:app, y:app) := call(x,y) or exists z:app. earlier[{window}] trans(x,z) and call(z,y)\n",
    ));
    src.push_str(
        "policy policy2 := exists x:app. trans(x,sink) and not system(x) and not hasPermissionToSink(x)\n",
    );
    crate::dsl::parse(&src).expect("escalation spec is valid")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::compile::compile;
    use crate::monitor;
    use crate::report;

    #[test]
    fn all_scenarios_parse_compile_and_read() {
        for s in SCENARIOS {
            let spec = s.spec();
            compile(&spec).unwrap_or_else(|e| panic!("{}: {e}", s.name));
            let trace = s.trace().unwrap_or_else(|e| panic!("{}: {e}", s.name));
            assert!(!trace.is_empty(), "{}", s.name);
        }
    }

    #[test]
    fn expected_files_regenerate_byte_identically() {
        for s in SCENARIOS {
            let spec = s.spec();
            let trace = s.trace().unwrap();
            let regenerated = report::oracle_text(&spec, &trace);
            if std::env::var_os("UPDATE_GOLDENS").is_some() {
                let path = std::path::Path::new(env!("CARGO_MANIFEST_DIR"))
                    .join("scenarios")
                    .join(s.name)
                    .join("expected.txt");
                std::fs::write(path, &regenerated).unwrap();
                continue;
            }
            assert_eq!(
                s.expected_text, regenerated,
                "scenario {} golden file is stale; regenerate with UPDATE_GOLDENS=1",
                s.name
            );
        }
    }

    #[test]
    fn monitor_matches_goldens() {
        for s in SCENARIOS {
            let spec = s.spec();
            let cp = compile(&spec).unwrap();
            let trace = s.trace().unwrap();
            let verdicts = monitor::run(&cp, &trace).unwrap();
            assert_eq!(
                report::monitor_text(&cp, &verdicts),
                s.expected_text,
                "scenario {}",
                s.name
            );
        }
    }

    #[test]
    fn bundled_policies_print_canonically() {
        for s in SCENARIOS {
            let spec = s.spec();
            let printed = crate::dsl::print(&spec);
            let reparsed = crate::dsl::parse(&printed).unwrap();
            assert_eq!(spec, reparsed, "scenario {}", s.name);
            // Printing the reparse is a fixed point.
            assert_eq!(printed, crate::dsl::print(&reparsed));
        }
    }

    #[test]
    fn unknown_scenario_is_an_error() {
        assert!(load_scenario("nope").is_err());
        assert!(load_scenario("policy2-chain").is_ok());
    }

    #[test]
    fn chain_scenario_flags_only_the_live_window() {
        let live = load_scenario("policy2-chain").unwrap();
        let text = report::oracle_text(&live.spec(), &live.trace().unwrap());
        assert!(text.lines().any(|l| l.ends_with("VIOLATION")));
        let stale = load_scenario("policy2-chain-stale").unwrap();
        let text = report::oracle_text(&stale.spec(), &stale.trace().unwrap());
        assert!(text.lines().all(|l| l.ends_with("ok")));
    }

    #[test]
    fn escalation_spec_scales_quadratically() {
        let cp3 = compile(&escalation_spec(3, 100)).unwrap();
        let cp6 = compile(&escalation_spec(6, 100)).unwrap();
        let count = |cp: &crate::compile::CompiledPolicy| {
            cp.table
                .iter()
                .filter(|n| {
                    matches!(&n.formula, crate::formula::Formula::DefAtom { pred, .. } if pred == "trans")
                })
                .count()
        };
        assert_eq!(count(&cp3), 9);
        assert_eq!(count(&cp6), 36);
    }
}
