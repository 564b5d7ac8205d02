use dualmarket::dynamics::{step_market, DynamicsOptions, MarketState};
use dualmarket::equilibrium::{compare_regimes, run_to_steady_state, solve_fixed_point_direct, RunOptions};
use dualmarket::forms::{AbilityDist, WageCurve};
use dualmarket::tlm::{PriorMode, StatDisc};
use dualmarket::{HiringRegime, Model};
use proptest::prelude::*;

/// Symmetric parity map written out for uniform ability and the exponential
/// wage curve, independent of the library's threshold code.
fn parity_map(model: &Model, g: f64) -> f64 {
    let p = &model.params;
    let f = &model.forms;
    let WageCurve::Exponential { slope } = f.wage_curve else { panic!("needs exponential wage") };
    let mass = p.sigma_b * p.ell;
    let pi = (mass * g).clamp(0.0, 1.0);
    let w = p.w_min + (p.w_max - p.w_min) * (-slope * p.ell * g).exp();
    let theta_bar = 1.0 - p.ell;
    let eta = w * (theta_bar + f.invest_cost.theta0) / (1.0 + f.invest_cost.beta * (1.0 - pi));
    let gamma = 1.0 - (-f.qual_prob.rate * eta).exp();
    let share = |kappa: f64, p_low: f64| {
        let cut = (kappa / (w * (p.p_h - p_low)) - f.effort_cost.theta0).clamp(0.0, 1.0);
        (cut - theta_bar).max(0.0) / (1.0 - theta_bar)
    };
    let lq = share(f.effort_cost.kappa_q, p.p_q);
    let lu = share(f.effort_cost.kappa_u, p.p_u);
    p.p_h * (1.0 - lq * gamma - lu * (1.0 - gamma)) + p.p_q * lq * gamma + p.p_u * lu * (1.0 - gamma)
}

#[test]
fn direct_fixed_point_matches_dense_grid_scan() {
    let mut model = Model::default();
    // Interior effort shares so the map is not constant.
    model.forms.effort_cost.kappa_q = 0.2;
    model.forms.effort_cost.kappa_u = 0.5;
    let fp = solve_fixed_point_direct(
        &model,
        &HiringRegime::StatisticalParity,
        &DynamicsOptions::default(),
        [0.5, 0.5],
        0.5,
    )
    .unwrap();
    let (best, _) = (0..=100_000)
        .map(|i| i as f64 * 1e-5)
        .map(|g| (g, (parity_map(&model, g) - g).abs()))
        .fold((0.0, f64::INFINITY), |acc, x| if x.1 < acc.1 { x } else { acc });
    assert!((fp.g[0] - best).abs() <= 2e-5, "direct {} grid {best}", fp.g[0]);
    assert!((fp.g[0] - fp.g[1]).abs() < 1e-12);
    assert!(fp.residual < 1e-10);
    let (_, rep) = run_to_steady_state(
        &model,
        &HiringRegime::StatisticalParity,
        &DynamicsOptions::default(),
        [0.2, 0.7],
        &RunOptions::default(),
    )
    .unwrap();
    assert!((rep.g_tilde[0] - fp.g[0]).abs() < 1e-6);
}

#[test]
fn certain_qualification_without_shirking_gives_p_h() {
    let mut model = Model::default();
    model.forms.qual_prob.rate = 1e9;
    model.forms.effort_cost.kappa_q = 1e-4;
    let fp = solve_fixed_point_direct(
        &model,
        &HiringRegime::StatisticalParity,
        &DynamicsOptions::default(),
        [0.3, 0.6],
        1.0,
    )
    .unwrap();
    assert!((fp.g[0] - model.params.p_h).abs() < 1e-12);
    assert!((fp.g[1] - model.params.p_h).abs() < 1e-12);
}

fn interior_model() -> Model {
    let mut model = Model::default();
    model.forms.effort_cost.kappa_q = 0.2;
    model.forms.effort_cost.kappa_u = 0.5;
    model.forms.invest_cost.beta = 3.0;
    model
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn parity_steady_state_is_unique(gb in 0.0f64..1.0, gw in 0.0f64..1.0) {
        let model = interior_model();
        let regime = HiringRegime::StatisticalParity;
        let opts = RunOptions::default();
        let d = DynamicsOptions::default();
        let (_, reference) = run_to_steady_state(&model, &regime, &d, [0.5, 0.5], &opts).unwrap();
        let (_, rep) = run_to_steady_state(&model, &regime, &d, [gb, gw], &opts).unwrap();
        prop_assert!(rep.converged && rep.symmetric);
        prop_assert!((rep.g_tilde[0] - reference.g_tilde[0]).abs() < 1e-6);
        prop_assert!((rep.g_tilde[1] - reference.g_tilde[1]).abs() < 1e-6);
    }

    #[test]
    fn parity_gap_never_grows_at_fixed_wage(gb in 0.0f64..1.0, gw in 0.0f64..1.0, w in 0.3f64..1.0) {
        let model = interior_model();
        let regime = HiringRegime::StatisticalParity;
        let d = DynamicsOptions { fixed_wage: Some(w), ..Default::default() };
        let mut state = MarketState::initial(&model, &regime, &d, [gb, gw]).unwrap();
        let mut gap = (gb - gw).abs();
        for _ in 0..200 {
            let (next, rec) = step_market(&state, &model, &regime, &d, None).unwrap();
            let g = (rec.g[0] - rec.g[1]).abs();
            prop_assert!(g <= gap + 1e-12, "gap grew from {} to {}", gap, g);
            gap = g;
            state = next;
        }
    }

    #[test]
    fn blind_thresholds_reproduce_parity_at_steady_state(gb in 0.0f64..1.0, gw in 0.0f64..1.0) {
        let model = interior_model();
        let (_, rep) = run_to_steady_state(
            &model, &HiringRegime::StatisticalParity, &DynamicsOptions::default(), [gb, gw], &RunOptions::default(),
        ).unwrap();
        let blind = HiringRegime::GroupBlind.thresholds(&model, rep.pi_tilde, rep.w_tilde).unwrap();
        prop_assert!(blind.max_abs_diff(&rep.thresholds) < 1e-6);
    }

    #[test]
    fn dominance_implies_no_worse_off_mass(
        a in prop::sample::select(vec![5.0, 20.0, 40.0]),
        beta in prop::sample::select(vec![1.0, 5.0, 10.0]),
        kq in prop::sample::select(vec![0.1, 0.2, 0.25]),
        noise in prop::sample::select(vec![0.02, 0.1, 1.0]),
        blind in any::<bool>(),
    ) {
        let mut model = Model::default();
        model.forms.ability = AbilityDist::Beta { a, b: a };
        model.forms.invest_cost.beta = beta;
        model.forms.effort_cost.kappa_q = kq;
        model.forms.effort_cost.kappa_u = 3.0 * kq;
        model.forms.wage_curve = WageCurve::Pinned;
        let regime = if blind {
            HiringRegime::GroupBlind
        } else {
            HiringRegime::StatisticalDiscrimination(StatDisc { noise, priors: PriorMode::Static, ..Default::default() })
        };
        let d = DynamicsOptions { norm: dualmarket::dynamics::ReputationNorm::PerCapita, ..Default::default() };
        let v = compare_regimes(&model, &regime, &d, [0.1, 0.8], &RunOptions::default()).unwrap();
        prop_assert_eq!(v.dominates, v.group_b_better_off_mass > 0.0 && v.group_w_worse_off_mass == 0.0 && v.applicable);
        if v.dominates {
            prop_assert_eq!(v.group_w_worse_off_mass, 0.0);
        }
    }
}
