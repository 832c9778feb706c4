//! Randomized invariants that cut across modules: syntax round-trips,
//! wire-format round-trips, the redundant-operator identities, window
//! monotonicity, and closure completeness.

use proptest::prelude::*;
use rayon::prelude::*;

use rmtl::compile::{compile, normalize};
use rmtl::dsl;
use rmtl::formula::{Formula, GroundAtom, PolicySpec};
use rmtl::harness::{gen_policy, gen_trace, GenConfig};
use rmtl::oracle::Evaluator;
use rmtl::trace::{read_trace, trace_to_string, TimedState, Trace};

/// print then parse is the identity on 10^4 generated specifications.
#[test]
fn print_parse_round_trip_at_scale() {
    let cfg = GenConfig::default();
    let failures: Vec<u64> = (0..10_000u64)
        .into_par_iter()
        .filter(|&seed| {
            let spec = gen_policy(&cfg.with_seed(seed));
            let printed = dsl::print(&spec);
            match dsl::parse(&printed) {
                Ok(reparsed) => reparsed != spec,
                Err(_) => true,
            }
        })
        .collect();
    assert!(
        failures.is_empty(),
        "round-trip failed for seeds {failures:?}"
    );
}

/// Every compiled table is closed: the oracle-side unfolding of any
/// entry (operands, plus the normalized instantiated body of a defined
/// predicate) stays inside the table.
#[test]
fn compiled_tables_are_closed_under_evaluation() {
    let cfg = GenConfig::default();
    (0..300u64).into_par_iter().for_each(|seed| {
        let spec = gen_policy(&cfg.with_seed(seed));
        let cp = compile(&spec).expect("generated specs compile");
        let in_table: std::collections::HashSet<&Formula> =
            cp.table.iter().map(|n| &n.formula).collect();
        for node in &cp.table {
            match &node.formula {
                Formula::DefAtom { pred, args } => {
                    let consts: Vec<String> = args
                        .iter()
                        .map(|t| match t {
                            rmtl::formula::Term::Const(c) => c.clone(),
                            rmtl::formula::Term::Var(_) => unreachable!("table is ground"),
                        })
                        .collect();
                    let def = spec.def(pred).expect("declared");
                    let body = normalize(&spec, &spec.instantiate_def(def, &consts));
                    assert!(in_table.contains(&body), "seed {seed}: body escapes table");
                }
                Formula::Neg(g)
                | Formula::Prev(g)
                | Formula::PrevWithin(_, g)
                | Formula::Earlier(g)
                | Formula::EarlierWithin(_, g) => {
                    assert!(in_table.contains(g.as_ref()), "seed {seed}");
                }
                Formula::Or(a, b) | Formula::Since(a, b) | Formula::SinceWithin(_, a, b) => {
                    assert!(in_table.contains(a.as_ref()), "seed {seed}");
                    assert!(in_table.contains(b.as_ref()), "seed {seed}");
                }
                _ => {}
            }
        }
    });
}

/// The redundant-operator identities on randomly generated formulas and
/// traces: once = true-since, within-once = within-true-since, earlier =
/// prev once, and quantifier expansion agrees with the quantifier clause.
#[test]
fn derived_operator_identities_on_random_pairs() {
    let cfg = GenConfig {
        trace_length: 20,
        ..GenConfig::default()
    };
    (0..300u64).into_par_iter().for_each(|seed| {
        let cfg = cfg.with_seed(seed);
        let spec = gen_policy(&cfg);
        let trace = gen_trace(&cfg, &spec);
        let mut oracle = Evaluator::with_memo(&spec, &trace);
        for policy in &spec.policies {
            let f = &policy.formula;
            let pairs = [
                (
                    Formula::once(f.clone()),
                    Formula::since(Formula::top(), f.clone()),
                ),
                (
                    Formula::once_within(3, f.clone()),
                    Formula::since_within(3, Formula::top(), f.clone()),
                ),
                (
                    Formula::earlier(f.clone()),
                    Formula::prev(Formula::once(f.clone())),
                ),
            ];
            for i in 1..=trace.len() {
                for (lhs, rhs) in &pairs {
                    assert_eq!(
                        oracle.sat(i, lhs).unwrap(),
                        oracle.sat(i, rhs).unwrap(),
                        "seed {seed} world {i}: {} vs {}",
                        dsl::print_formula(lhs),
                        dsl::print_formula(rhs)
                    );
                }
                // Quantifier clause vs its finite expansion.
                let expanded = normalize(&spec, f);
                assert_eq!(
                    oracle.sat(i, f).unwrap(),
                    oracle.sat(i, &expanded).unwrap(),
                    "seed {seed} world {i}: quantifier expansion"
                );
            }
        }
    });
}

/// Window monotonicity on random instances: satisfaction at bound n
/// implies satisfaction at every larger sampled bound.
#[test]
fn metric_satisfaction_is_monotone_in_the_bound() {
    let cfg = GenConfig {
        trace_length: 20,
        ..GenConfig::default()
    };
    (0..300u64).into_par_iter().for_each(|seed| {
        let cfg = cfg.with_seed(seed);
        let spec = gen_policy(&cfg);
        let trace = gen_trace(&cfg, &spec);
        let mut oracle = Evaluator::with_memo(&spec, &trace);
        let f = spec.policies[0].formula.clone();
        let g = spec
            .policies
            .get(1)
            .map(|p| p.formula.clone())
            .unwrap_or(Formula::top());
        for n in [1i64, 3, 5] {
            let candidates = [
                Formula::since_within(n, g.clone(), f.clone()),
                Formula::earlier_within(n, f.clone()),
                Formula::prev_within(n, f.clone()),
            ];
            for base in candidates {
                for i in 1..=trace.len() {
                    if oracle.sat(i, &base).unwrap() {
                        for extra in [1i64, 4, 20] {
                            let wider = match &base {
                                Formula::SinceWithin(_, a, b) => {
                                    Formula::SinceWithin(n + extra, a.clone(), b.clone())
                                }
                                Formula::EarlierWithin(_, h) => {
                                    Formula::EarlierWithin(n + extra, h.clone())
                                }
                                Formula::PrevWithin(_, h) => {
                                    Formula::PrevWithin(n + extra, h.clone())
                                }
                                _ => unreachable!(),
                            };
                            assert!(
                                oracle.sat(i, &wider).unwrap(),
                                "seed {seed} world {i} bound {n}+{extra}"
                            );
                        }
                    }
                }
            }
        }
    });
}

fn fixed_spec() -> PolicySpec {
    dsl::parse(
        "sort app\nconst a : app\nconst b : app\nconst c : app\n\
         event call(app, app)\nevent ping(app)\nevent tick()\n",
    )
    .unwrap()
}

fn atom_strategy() -> impl Strategy<Value = GroundAtom> {
    let constant = prop_oneof![Just("a"), Just("b"), Just("c")];
    prop_oneof![
        (constant.clone(), constant.clone())
            .prop_map(|(x, y)| GroundAtom::new("call", vec![x.into(), y.into()])),
        constant.prop_map(|x| GroundAtom::new("ping", vec![x.into()])),
        Just(GroundAtom::new("tick", vec![])),
    ]
}

fn trace_strategy() -> impl Strategy<Value = Trace> {
    (
        proptest::collection::vec(
            proptest::collection::btree_set(atom_strategy(), 0..4),
            0..12,
        ),
        proptest::collection::vec(0i64..5, 0..12),
    )
        .prop_map(|(atom_sets, gaps)| {
            let mut ts = 0i64;
            let states = atom_sets
                .into_iter()
                .zip(gaps.into_iter().chain(std::iter::repeat(1)))
                .map(|(atoms, gap)| {
                    ts += gap;
                    TimedState { ts, atoms }
                })
                .collect();
            Trace::new(states)
        })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    /// JSONL write then read is the identity, and the wire form itself is
    /// canonical: re-serializing what was read gives identical bytes.
    #[test]
    fn trace_round_trip(trace in trace_strategy()) {
        let spec = fixed_spec();
        let text = trace_to_string(&trace);
        let back = read_trace(&spec, text.as_bytes()).unwrap();
        prop_assert_eq!(&back, &trace);
        prop_assert_eq!(trace_to_string(&back), text);
    }

    /// Monitor verdicts are invariant under shifting all timestamps.
    #[test]
    fn verdicts_shift_invariant(trace in trace_strategy(), shift in 0i64..1_000_000) {
        let spec = dsl::parse(
            "sort app\nconst a : app\nconst b : app\nconst c : app\n\
             event call(app, app)\nevent ping(app)\nevent tick()\n\
             policy w := tick() since[3] exists x:app. ping(x)\n",
        ).unwrap();
        let cp = compile(&spec).unwrap();
        let base: Vec<_> = rmtl::monitor::run(&cp, &trace).unwrap()
            .into_iter().map(|v| v.violated).collect();
        let moved: Vec<_> = rmtl::monitor::run(&cp, &trace.shifted(shift)).unwrap()
            .into_iter().map(|v| v.violated).collect();
        prop_assert_eq!(base, moved);
    }
}
