use proptest::prelude::*;

use swipt_ee::baselines::{solve_scheme, Scheme, DEFAULT_GRID_SIZE};
use swipt_ee::dinkelbach::{solve_p1, SolveSettings};
use swipt_ee::eh_model::EhCurve;
use swipt_ee::link_model::{check_constraints, evaluate};
use swipt_ee::oracle::{grid_search, GridSpec};
use swipt_ee::par::Exec;
use swipt_ee::scenario::{dbm_to_watts, realize_channel, watts_to_dbm, SystemParams};
use swipt_ee::subproblem::{f1, f2};

const UW: f64 = 1e-6;

proptest! {
    #[test]
    fn dbm_round_trip(dbm in -150.0f64..60.0) {
        let back = watts_to_dbm(dbm_to_watts(dbm));
        prop_assert!((back - dbm).abs() <= 1e-9 * dbm.abs().max(1.0));
    }

    #[test]
    fn harvest_is_monotone_and_bounded(a in 0.0f64..3000.0, b in 0.0f64..3000.0) {
        let c = EhCurve::reference();
        let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
        let (h_lo, h_hi) = (c.harvested_power(lo * UW).unwrap(), c.harvested_power(hi * UW).unwrap());
        prop_assert!(h_lo <= h_hi);
        prop_assert!(h_lo >= 0.0);
        prop_assert!(h_hi <= 250.0 * UW * 1.005);
    }

    #[test]
    fn rate_term_is_concave(p in 1e-6f64..1.0, frac in 1e-6f64..0.999_999, g in 1e-3f64..20.0) {
        let params = SystemParams::default();
        let e = f1(p, p * frac, g * 5f64.powi(-3), &params).unwrap();
        prop_assert!(e.curvature_ratio() <= 1e-8);
    }

    #[test]
    fn relay_term_is_concave(
        t in 1e-4f64..1e4,
        x_a in 0.0f64..1.0,
        x_b in 0.0f64..1.0,
        ca in -1.0f64..1.0,
        cb in -1.0f64..1.0,
        c1 in 0.0f64..10.0,
    ) {
        prop_assume!(ca * x_a + cb * x_b + c1 > -0.9 * t);
        let e = f2(t, x_a, x_b, [ca, cb, c1]).unwrap();
        prop_assert!(e.curvature_ratio() <= 1e-8);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    /// Over random channels the winner is exactly feasible, its link-model
    /// EE matches q*, and every cell's q sequence is nondecreasing.
    #[test]
    fn solver_output_is_consistent(g2_a in 0.05f64..5.0, g2_b in 0.05f64..5.0) {
        let p = SystemParams::default();
        let c = EhCurve::reference();
        let ch = realize_channel(&p, g2_a, g2_b).unwrap();
        let out = solve_p1(&p, &ch, &c, &SolveSettings::default()).unwrap();
        for cell in &out.cells {
            prop_assert!(cell.trace.windows(2).all(|w| w[1].q >= w[0].q));
        }
        if let Some(sol) = out.best_solution() {
            prop_assert!(check_constraints(&sol.allocation, &ch, &p, &c, p.min_rate_bps).unwrap().all());
            let ee = evaluate(&sol.allocation, &ch, &p, &c).unwrap().ee_bits_per_joule;
            prop_assert!((ee / sol.q - 1.0).abs() <= 1e-6);
        }
    }
}

/// With identical links the optimum is still asymmetric: one source feeds
/// the harvester and the other barely does. Equal power therefore loses, and
/// the unrestricted grid search agrees with the proposed value.
#[test]
fn symmetric_network_prefers_unequal_powers() {
    let p = SystemParams {
        dist_b_m: 5.0,
        ..SystemParams::default()
    };
    let c = EhCurve::reference();
    let s = SolveSettings::default();
    let ch = realize_channel(&p, 1.0, 1.0).unwrap();
    let proposed = solve_p1(&p, &ch, &c, &s).unwrap();
    let q = proposed.best_q().unwrap();
    let sol = proposed.best_solution().unwrap();
    assert!((sol.allocation.p_a_w / sol.allocation.p_b_w - 1.0).abs() > 1e-3);

    let equal_power = solve_scheme(Scheme::EqualPower, &p, &ch, &c, &s, DEFAULT_GRID_SIZE).unwrap();
    let eq = equal_power.best_ee().unwrap();
    assert!(eq < q * (1.0 - 1e-3), "equal power {eq} vs proposed {q}");

    let oracle = grid_search(&p, &ch, &c, &GridSpec::default(), Exec::default()).unwrap().unwrap();
    assert!(oracle.ee <= q * (1.0 + 1e-6));
    assert!(oracle.ee >= q * 0.98);
    assert!(oracle.ee > eq, "grid {} should beat equal power {eq}", oracle.ee);
}
