//! Counterexample minimization: drop trailing worlds, then thin out the
//! atoms in each world, then pull the failing policy formula down toward
//! `false` through its own closed subformulas. Every candidate is
//! re-checked, so whatever comes out still reproduces a disagreement.

use crate::formula::{Formula, PolicySpec};
use crate::monitor::StepMutation;
use crate::trace::Trace;

/// Re-checkable failure predicate: true when the (spec, trace) pair still
/// exhibits a monitor/oracle disagreement.
pub(crate) type StillFails<'a> = dyn Fn(&PolicySpec, &Trace) -> bool + Sync + 'a;

pub(crate) fn shrink(
    spec: &PolicySpec,
    trace: &Trace,
    fails: &StillFails<'_>,
) -> (PolicySpec, Trace) {
    let mut spec = spec.clone();
    let mut trace = trace.clone();

    // 1. Trailing worlds.
    while trace.len() > 1 {
        let mut candidate = trace.clone();
        candidate.states.pop();
        if fails(&spec, &candidate) {
            trace = candidate;
        } else {
            break;
        }
    }

    // 2. Atoms, world by world, to a fixed point.
    loop {
        let mut shrunk = false;
        for w in 0..trace.len() {
            let atoms: Vec<_> = trace.states[w].atoms.iter().cloned().collect();
            for atom in atoms {
                let mut candidate = trace.clone();
                candidate.states[w].atoms.remove(&atom);
                if fails(&spec, &candidate) {
                    trace = candidate;
                    shrunk = true;
                }
            }
        }
        if !shrunk {
            break;
        }
    }

    // 3. Policy formulas toward `false`.
    loop {
        let mut shrunk = false;
        for p in 0..spec.policies.len() {
            let mut candidates: Vec<Formula> = vec![Formula::Bot];
            closed_subformulas(&spec.policies[p].formula, &mut candidates);
            candidates.sort_by_key(size);
            for candidate in candidates {
                if candidate == spec.policies[p].formula
                    || size(&candidate) >= size(&spec.policies[p].formula)
                {
                    continue;
                }
                let mut respec = spec.clone();
                respec.policies[p].formula = candidate;
                if respec.validate().is_ok() && fails(&respec, &trace) {
                    spec = respec;
                    shrunk = true;
                    break;
                }
            }
        }
        if !shrunk {
            break;
        }
    }

    // Drop policies and definitions that no longer matter, re-checking
    // each removal.
    while spec.policies.len() > 1 {
        let mut found = None;
        for p in 0..spec.policies.len() {
            let mut respec = spec.clone();
            respec.policies.remove(p);
            if fails(&respec, &trace) {
                found = Some(respec);
                break;
            }
        }
        match found {
            Some(respec) => spec = respec,
            None => break,
        }
    }

    (spec, trace)
}

/// Predicate used by the public entry points: compile failure never
/// counts as a repro, so shrinking cannot wander off the valid-spec path.
pub(crate) fn mismatch_predicate(
    mutation: Option<StepMutation>,
) -> impl Fn(&PolicySpec, &Trace) -> bool + Sync {
    move |spec, trace| match super::check_pair(spec, trace, mutation) {
        Ok(outcome) => outcome.failure.is_some(),
        Err(_) => false,
    }
}

fn closed_subformulas(f: &Formula, out: &mut Vec<Formula>) {
    if f.is_closed() {
        out.push(f.clone());
    }
    match f {
        Formula::Bot | Formula::Atom { .. } | Formula::DefAtom { .. } => {}
        Formula::Neg(g)
        | Formula::Prev(g)
        | Formula::PrevWithin(_, g)
        | Formula::Once(g)
        | Formula::OnceWithin(_, g)
        | Formula::Earlier(g)
        | Formula::EarlierWithin(_, g) => closed_subformulas(g, out),
        Formula::Or(a, b) | Formula::Since(a, b) | Formula::SinceWithin(_, a, b) => {
            closed_subformulas(a, out);
            closed_subformulas(b, out);
        }
        Formula::Exists { body, .. } => closed_subformulas(body, out),
    }
}

fn size(f: &Formula) -> usize {
    match f {
        Formula::Bot | Formula::Atom { .. } | Formula::DefAtom { .. } => 1,
        Formula::Neg(g)
        | Formula::Prev(g)
        | Formula::PrevWithin(_, g)
        | Formula::Once(g)
        | Formula::OnceWithin(_, g)
        | Formula::Earlier(g)
        | Formula::EarlierWithin(_, g) => 1 + size(g),
        Formula::Or(a, b) | Formula::Since(a, b) | Formula::SinceWithin(_, a, b) => {
            1 + size(a) + size(b)
        }
        Formula::Exists { body, .. } => 1 + size(body),
    }
}
