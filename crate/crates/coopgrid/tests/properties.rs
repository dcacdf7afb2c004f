//! Property-based checks against independent oracles.

use std::sync::OnceLock;

use approx::assert_relative_eq;
use proptest::prelude::*;

use coopgrid::fixtures;
use coopgrid::games::{
    self, BenefitAllocation, CoalitionValueTable, LeastCoreConfig, Mechanism, TableSeparator, ValueKind, ValueOracle,
};
use coopgrid::markets::{self, Surplus};
use coopgrid::model::{CaseData, Coalition};
use coopgrid::preemptive::{self, PreemptiveConfig, PreemptiveSolution};
use coopgrid::solver::Solver;
use coopgrid::synthetic::{self, SyntheticConfig};

mod common;

fn solver() -> &'static Solver {
    static S: OnceLock<Solver> = OnceLock::new();
    S.get_or_init(Solver::default)
}

fn base() -> &'static CaseData {
    static C: OnceLock<CaseData> = OnceLock::new();
    C.get_or_init(fixtures::three_area_base)
}

fn base_oracle() -> &'static ValueOracle<'static> {
    static O: OnceLock<ValueOracle<'static>> = OnceLock::new();
    O.get_or_init(|| ValueOracle::new(base(), solver(), PreemptiveConfig::default()))
}

fn base_grand() -> &'static PreemptiveSolution {
    static P: OnceLock<PreemptiveSolution> = OnceLock::new();
    P.get_or_init(|| {
        preemptive::solve_preemptive(base(), Coalition::all(3), &PreemptiveConfig::default(), solver()).unwrap()
    })
}

fn names(n: usize) -> Vec<String> {
    (1..=n).map(|a| format!("a{a}")).collect()
}

/// Random table with values in [0, 100]; singletons are zero by construction.
fn table_strategy(n: usize) -> impl Strategy<Value = CoalitionValueTable> {
    proptest::collection::vec(0.0..100.0f64, 1 << n)
        .prop_map(move |vals| CoalitionValueTable::from_fn(ValueKind::Expected, names(n), |c| vals[c.0 as usize]))
}

fn floor_residual(surplus: &[Surplus], cost: f64) -> f64 {
    (surplus.iter().map(Surplus::total).sum::<f64>() + cost).abs()
}

#[test]
fn fixtures_round_trip_through_json() {
    for name in fixtures::NAMES {
        let c = fixtures::by_name(name).unwrap();
        let back = CaseData::from_json(&c.to_json()).unwrap();
        assert_eq!(c, back, "{name}");
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn synthetic_round_trip(seed in 0u64..1000, k in 4usize..9, scen in 1usize..6) {
        let cfg = SyntheticConfig { seed, nodes_per_area: k, scenarios: scen, ..Default::default() };
        let c = synthetic::generate_case(&cfg).unwrap();
        prop_assert_eq!(CaseData::from_json(&c.to_json()).unwrap(), c);
    }

    #[test]
    fn reserve_requirements_ignore_scenario_order(seed in 0u64..1000, rot in 0usize..5) {
        let cfg = SyntheticConfig { seed, scenarios: 5, ..Default::default() };
        let mut f = synthetic::generate(&cfg);
        let a = CaseData::from_file(f.clone()).unwrap().reserve_requirements();
        f.scenarios.rotate_left(rot);
        f.scenarios.reverse();
        let b = CaseData::from_file(f).unwrap().reserve_requirements();
        for (x, y) in a.up.iter().chain(&a.down).zip(b.up.iter().chain(&b.down)) {
            prop_assert!((x - y).abs() < 1e-9, "{x} vs {y}");
        }
    }

    /// Scaling by scenario grand values keeps the expected allocation.
    #[test]
    fn scenario_split_recovers_expectation(
        shares in proptest::collection::vec(0.0..1.0f64, 4),
        raw_p in proptest::collection::vec(0.05..1.0f64, 3),
        grands in proptest::collection::vec(-50.0..500.0f64, 3),
    ) {
        let psum: f64 = raw_p.iter().sum();
        let p: Vec<f64> = raw_p.iter().map(|x| x / psum).collect();
        let grand: f64 = p.iter().zip(&grands).map(|(a, b)| a * b).sum();
        prop_assume!(grand.abs() > 1.0);
        prop_assume!(grand > 0.0);
        let ssum: f64 = shares.iter().sum::<f64>().max(1e-9);
        let beta: Vec<f64> = shares.iter().map(|s| s / ssum * grand).collect();
        let alloc = BenefitAllocation {
            mechanism: Mechanism::LeastCore,
            beta: beta.clone(),
            epsilon: None,
            criterion: None,
            iterations: 0,
            family: Vec::new(),
            log: Vec::new(),
        };
        let mut mean = vec![0.0; 4];
        for (ps, gs) in p.iter().zip(&grands) {
            let split = games::scenario_allocation(&alloc, grand, *gs).unwrap();
            prop_assert!((split.total() - gs).abs() < 1e-6 * gs.abs().max(1.0));
            for (m, b) in mean.iter_mut().zip(&split.beta) {
                *m += ps * b;
            }
        }
        for (m, b) in mean.iter().zip(&beta) {
            prop_assert!((m - b).abs() < 1e-6 * grand.max(1.0), "{m} vs {b}");
        }
    }

    /// Constraint generation reaches the enumerated least-core selection.
    #[test]
    fn least_core_matches_enumeration(t in table_strategy(3), crit_eq in any::<bool>()) {
        let target = if crit_eq {
            games::equal_shares(&t).unwrap().beta
        } else {
            games::marginal_contribution(&t).unwrap().beta
        };
        let cg = games::least_core_select(&t, &TableSeparator(&t), &target, "x", &LeastCoreConfig::default(), solver()).unwrap();
        let (eps, beta) = common::brute_force_least_core(&t, &target);
        prop_assert!((cg.epsilon.unwrap() - eps).abs() < 1e-6, "{:?} vs {eps}", cg.epsilon);
        for (x, y) in cg.beta.iter().zip(&beta) {
            prop_assert!((x - y).abs() < 1e-6, "{:?} vs {beta:?}", cg.beta);
        }
    }

    #[test]
    fn least_core_matches_enumeration_four_areas(t in table_strategy(4)) {
        let target = games::equal_shares(&t).unwrap().beta;
        let cg = games::least_core_select(&t, &TableSeparator(&t), &target, "equal", &LeastCoreConfig::default(), solver()).unwrap();
        let (eps, beta) = common::brute_force_least_core(&t, &target);
        prop_assert!((cg.epsilon.unwrap() - eps).abs() < 1e-6);
        for (x, y) in cg.beta.iter().zip(&beta) {
            prop_assert!((x - y).abs() < 1e-6, "{:?} vs {beta:?}", cg.beta);
        }
    }

    /// Shapley: efficient, and symmetric areas get equal shares.
    #[test]
    fn shapley_efficient_and_symmetric(vals in proptest::collection::vec(0.0..100.0f64, 4)) {
        // v depends only on |C|, so every area is symmetric.
        let t = CoalitionValueTable::from_fn(ValueKind::Expected, names(4), |c| vals[c.len().saturating_sub(1)]);
        let s = games::shapley(&t).unwrap();
        let grand = t.get(Coalition::all(4)).unwrap();
        prop_assert!((s.total() - grand).abs() < 1e-9);
        for b in &s.beta {
            prop_assert!((b - grand / 4.0).abs() < 1e-9);
        }
    }

    /// On convex games the nucleolus lies in the core.
    #[test]
    fn nucleolus_in_core_of_convex_games(w in proptest::collection::vec(0.1..10.0f64, 4)) {
        let t = CoalitionValueTable::from_fn(ValueKind::Expected, names(4), |c| {
            // Sum of pairwise products: zero on singletons and supermodular.
            let s: f64 = c.members().map(|a| w[a]).sum();
            let q: f64 = c.members().map(|a| w[a] * w[a]).sum();
            s * s - q
        });
        let nuc = games::nucleolus(&t, solver()).unwrap();
        let (e, _) = games::max_excess(&t, &nuc.beta).unwrap();
        prop_assert!(e <= 1e-6, "max excess {e}");
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(8))]

    /// The separation MILP finds the largest violation of the enumerated table.
    #[test]
    fn separation_matches_enumeration(raw in proptest::collection::vec(0.0..1.0f64, 3)) {
        let o = base_oracle();
        let t = o.expected_table(1).unwrap();
        let grand = t.get(Coalition::all(3)).unwrap();
        let sum: f64 = raw.iter().sum::<f64>().max(1e-9);
        let beta: Vec<f64> = raw.iter().map(|x| x / sum * grand).collect();
        let sep = preemptive::solve_separation(base(), &beta, o.j_empty().unwrap(), &PreemptiveConfig::default(), solver()).unwrap();
        let best = Coalition::all_subsets(3)
            .map(|c| t.get(c).unwrap() - c.members().map(|a| beta[a]).sum::<f64>())
            .fold(f64::NEG_INFINITY, f64::max);
        prop_assert!((sep.violation - best).abs() < 1e-4 * grand, "{} vs {best}", sep.violation);
    }

    /// Markets close their budget on every floor at any allocation.
    #[test]
    fn budget_balance_at_any_chi(x in 0.0..1.0f64, y in 0.0..0.3f64, grand in any::<bool>()) {
        let c = base();
        let coal = if grand { Coalition::all(3) } else { Coalition::EMPTY };
        let Ok(out) = markets::run_sequential(c, &[x, y], coal, solver()) else {
            return Ok(());
        };
        let a = markets::decompose_surpluses(c, &out);
        prop_assert!(floor_residual(&a.reserve, out.reserve.cost) < 1e-6);
        prop_assert!(floor_residual(&a.day_ahead, out.day_ahead.cost) < 1e-6);
        for (f, b) in a.balancing.iter().zip(&out.balancing) {
            prop_assert!(floor_residual(f, b.cost) < 1e-6);
        }
    }

    /// No allocation beats the preemptive optimum.
    #[test]
    fn preemptive_optimum_is_a_lower_bound(dx in -0.3..0.3f64, dy in -0.3..0.3f64) {
        let c = base();
        let sol = base_grand();
        let chi = [(sol.chi[0] + dx).clamp(0.0, 1.0), (sol.chi[1] + dy).clamp(0.0, 1.0)];
        if let Ok(out) = markets::run_sequential(c, &chi, Coalition::all(3), solver()) {
            prop_assert!(out.expected_cost >= sol.expected_cost - 1e-6 * sol.expected_cost);
        }
    }
}

/// The consistency check must notice when the markets are re-cleared at an
/// allocation other than the one the MILP chose: at the status quo the
/// reserve floor costs 194.0 instead of 191.6.
#[test]
fn consistency_check_detects_moved_chi() {
    let sol = base_grand();
    let r = preemptive::consistency_at(base(), sol, &[0.0, 0.0], solver()).unwrap();
    assert!(r.reserve_resolved - r.reserve_embedded > 2.0, "{r:?}");
    assert!(r.max_gap() > 1e-3, "{r:?}");
    let same = preemptive::consistency_at(base(), sol, &sol.chi, solver()).unwrap();
    assert!(same.max_gap() < 1e-6, "{same:?}");
}

#[test]
fn base_values_are_reproducible() {
    let o = base_oracle();
    let a = o.expected_table(1).unwrap();
    let fresh = ValueOracle::new(base(), solver(), PreemptiveConfig::default());
    let b = fresh.expected_table(1).unwrap();
    for c in Coalition::all_subsets(3) {
        assert_relative_eq!(a.get(c).unwrap(), b.get(c).unwrap(), epsilon = 1e-6);
    }
}
