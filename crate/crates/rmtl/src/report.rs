//! Line-oriented verdict output, shared by the incremental and reference
//! evaluation paths so their outputs can be compared with a plain `diff`
//! and frozen as golden files.
//!
//! One line per world per policy: `<worldIdx> <ts> <policyName>
//! <VIOLATION|ok>`.

use std::fmt::Write;

use crate::compile::CompiledPolicy;
use crate::formula::PolicySpec;
use crate::monitor::Verdict;
use crate::oracle::Evaluator;
use crate::trace::Trace;

pub fn verdict_line(world: u64, ts: i64, policy: &str, violated: bool) -> String {
    format!(
        "{world} {ts} {policy} {}",
        if violated { "VIOLATION" } else { "ok" }
    )
}

/// Renders monitor verdicts, one line per policy per world.
pub fn monitor_text(cp: &CompiledPolicy, verdicts: &[Verdict]) -> String {
    let mut out = String::new();
    for v in verdicts {
        for (root, &violated) in cp.roots.iter().zip(&v.violated) {
            let _ = writeln!(out, "{}", verdict_line(v.world, v.ts, &root.name, violated));
        }
    }
    out
}

/// Renders reference-semantics verdicts in the same format, evaluating
/// every policy at every world with the memoized evaluator.
pub fn oracle_text(spec: &PolicySpec, trace: &Trace) -> String {
    let mut evaluator = Evaluator::with_memo(spec, trace);
    let mut out = String::new();
    for i in 1..=trace.len() {
        for policy in &spec.policies {
            let violated = evaluator
                .sat(i, &policy.formula)
                .expect("world index in range");
            let _ = writeln!(
                out,
                "{}",
                verdict_line(i as u64, trace.ts(i), &policy.name, violated)
            );
        }
    }
    out
}
