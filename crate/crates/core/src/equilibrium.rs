//! Steady states, contraction diagnostics and regime comparison.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dynamics::{
    contraction_factor, effort_shares, group_outcome, reputation, step_market, DynamicsOptions,
    MarketState, StepRecord,
};
use crate::error::{Error, Result};
use crate::forms::{quantile, Cdf};
use crate::params::{Group, Model, Qualification};
use crate::plm::{effort_cutoffs, EffortCutoffs};
use crate::tlm::{HiringRegime, ThresholdSet};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RunOptions {
    pub tol: f64,
    pub max_t: u64,
    /// Reputation gap below which a steady state counts as symmetric.
    pub symmetry_tol: f64,
    /// Seed for the random wage clock.
    pub seed: u64,
}

impl Default for RunOptions {
    fn default() -> Self {
        Self {
            tol: 1e-8,
            max_t: 100_000,
            symmetry_tol: 1e-6,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub records: Vec<StepRecord>,
    pub final_state: MarketState,
}

impl Trajectory {
    pub fn last(&self) -> &StepRecord {
        self.records.last().expect("trajectory has at least one step")
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SteadyStateReport {
    pub regime: String,
    pub g_tilde: [f64; 2],
    pub pi_tilde: [f64; 2],
    pub w_tilde: f64,
    pub converged: bool,
    /// First step at which the convergence criterion held.
    pub t_convergence: Option<u64>,
    pub steps: u64,
    /// Largest ratio of the outcome gap to the window-mean gap that produced it.
    pub empirical_lipschitz: f64,
    pub symmetric: bool,
    /// Largest change over the final step.
    pub residual: f64,
    pub thresholds: ThresholdSet,
    pub cutoffs: EffortCutoffs,
}

fn step_change(prev: &StepRecord, cur: &StepRecord) -> f64 {
    let gap = |r: &StepRecord| r.g[0] - r.g[1];
    [
        (cur.g[0] - prev.g[0]).abs(),
        (cur.g[1] - prev.g[1]).abs(),
        (gap(cur) - gap(prev)).abs(),
        (cur.pi[0] - prev.pi[0]).abs(),
        (cur.pi[1] - prev.pi[1]).abs(),
    ]
    .into_iter()
    .fold(0.0, f64::max)
}

/// Iterates the market until every per-step change and the wage mismatch
/// fall below `tol`, or `max_t` steps elapse. Non-convergence is reported in
/// the returned report rather than as an error.
pub fn run_to_steady_state(
    model: &Model,
    regime: &HiringRegime,
    dyn_opts: &DynamicsOptions,
    init_g: [f64; 2],
    opts: &RunOptions,
) -> Result<(Trajectory, SteadyStateReport)> {
    if !(opts.tol > 0.0) {
        return Err(Error::RangeViolation(format!("tol = {} must be > 0", opts.tol)));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let mut state = MarketState::initial(model, regime, dyn_opts, init_g)?;
    let mut records: Vec<StepRecord> = Vec::new();
    let mut gaps: Vec<f64> = state.groups[0]
        .g_history
        .iter()
        .zip(state.groups[1].g_history.iter())
        .map(|(b, w)| b - w)
        .collect();
    let window = model.params.tau + 1;
    let mut lipschitz: f64 = 0.0;
    let mut converged_at = None;
    let mut residual = f64::INFINITY;
    while state.t < opts.max_t {
        let (next, rec) = step_market(&state, model, regime, dyn_opts, Some(&mut rng))?;
        let gap_in = gaps[gaps.len() - window..].iter().sum::<f64>() / window as f64;
        let gap_out = rec.g[0] - rec.g[1];
        if gap_in.abs() > 1e-9 {
            lipschitz = lipschitz.max(gap_out.abs() / gap_in.abs());
        }
        gaps.push(gap_out);
        if let Some(prev) = records.last() {
            residual = step_change(prev, &rec);
            let wage_gap = match dyn_opts.fixed_wage {
                Some(_) => 0.0,
                None => (rec.w - model.wage(rec.g_aggregate)?).abs(),
            };
            if residual < opts.tol && wage_gap < opts.tol {
                converged_at = Some(rec.t);
            }
        }
        records.push(rec);
        state = next;
        if converged_at.is_some() {
            break;
        }
    }
    let last = *records.last().ok_or_else(|| {
        Error::RangeViolation("max_t must allow at least one step".into())
    })?;
    let report = SteadyStateReport {
        regime: regime.name().to_string(),
        g_tilde: last.g,
        pi_tilde: last.pi,
        w_tilde: last.w,
        converged: converged_at.is_some(),
        t_convergence: converged_at,
        steps: last.t,
        empirical_lipschitz: lipschitz,
        symmetric: (last.pi[0] - last.pi[1]).abs() < opts.symmetry_tol,
        residual,
        thresholds: last.thresholds,
        cutoffs: last.cutoffs,
    };
    Ok((
        Trajectory {
            records,
            final_state: state,
        },
        report,
    ))
}

/// Stationary point of the market: constant windows, wage consistent with
/// aggregate supply.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FixedPoint {
    pub g: [f64; 2],
    pub mass: [f64; 2],
    pub pi: [f64; 2],
    pub w: f64,
    pub thresholds: ThresholdSet,
    pub cutoffs: EffortCutoffs,
    pub residual: f64,
    pub iterations: usize,
}

/// State of the stationary map: outcome shares and hired masses per group.
type StationaryState = [f64; 4];

struct Evaluated {
    next: StationaryState,
    pi: [f64; 2],
    w: f64,
    thresholds: ThresholdSet,
    cutoffs: EffortCutoffs,
}

fn stationary_map(
    model: &Model,
    regime: &HiringRegime,
    dyn_opts: &DynamicsOptions,
    x: &StationaryState,
) -> Result<Evaluated> {
    let p = &model.params;
    let mut pi = [0.0; 2];
    for g in Group::ALL {
        let i = g.index();
        pi[i] = reputation(std::iter::once((&x[i], &x[2 + i])), p.share(g), dyn_opts.norm);
    }
    let w = match dyn_opts.fixed_wage {
        Some(w) => w,
        None => model.wage(x[2] * x[0] + x[3] * x[1])?,
    };
    let thresholds = regime.thresholds(model, pi, w)?;
    let cutoffs = effort_cutoffs(model, w);
    let mut next = [0.0; 4];
    for g in Group::ALL {
        let i = g.index();
        let gamma = model.forms.qual_prob.prob(thresholds.eta_hat(g));
        let (lq, lu) = effort_shares(&model.forms.ability, &cutoffs, thresholds.theta_star(g));
        next[i] = group_outcome(gamma, lq, lu, p);
        next[2 + i] = thresholds.mass(g);
    }
    Ok(Evaluated {
        next,
        pi,
        w,
        thresholds,
        cutoffs,
    })
}

/// Damped iteration `x <- (1 - d) x + d T(x)` on the stationary map, started
/// from outcome shares `init_g` and parity masses.
pub fn solve_fixed_point_direct(
    model: &Model,
    regime: &HiringRegime,
    dyn_opts: &DynamicsOptions,
    init_g: [f64; 2],
    damping: f64,
) -> Result<FixedPoint> {
    if !(damping > 0.0 && damping <= 1.0) {
        return Err(Error::RangeViolation(format!("damping = {damping} must lie in (0, 1]")));
    }
    const MAX_ITER: usize = 1_000_000;
    const TOL: f64 = 1e-12;
    let p = &model.params;
    let mut x = [
        init_g[0],
        init_g[1],
        p.share(Group::B) * p.ell,
        p.share(Group::W) * p.ell,
    ];
    let mut residual = f64::INFINITY;
    for it in 1..=MAX_ITER {
        let ev = stationary_map(model, regime, dyn_opts, &x)?;
        residual = x
            .iter()
            .zip(ev.next.iter())
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        if residual < TOL {
            return Ok(FixedPoint {
                g: [ev.next[0], ev.next[1]],
                mass: [ev.next[2], ev.next[3]],
                pi: ev.pi,
                w: ev.w,
                thresholds: ev.thresholds,
                cutoffs: ev.cutoffs,
                residual,
                iterations: it,
            });
        }
        for (xi, ti) in x.iter_mut().zip(ev.next.iter()) {
            *xi = (1.0 - damping) * *xi + damping * ti;
        }
    }
    Err(Error::NonConvergence {
        iterations: MAX_ITER,
        residual,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ContractionReport {
    pub w: f64,
    pub cutoffs: EffortCutoffs,
    /// Parity ability cutoff.
    pub theta_bar: f64,
    pub low_q: f64,
    pub low_u: f64,
    /// Closed-form slope of the outcome map in the qualified share.
    pub epsilon: f64,
    pub lip_phi: f64,
    pub lip_psi: f64,
    pub lip_xi: f64,
    /// Reputation-map expansion `max(k_B / sigma_B, (1 - k_B) / (1 - sigma_B))`
    /// at the reference reputations (non-parity regimes only).
    pub expansion_factor: Option<f64>,
    /// Spectral radius of the stationary map's Jacobian at the symmetric fixed
    /// point for the fixed wage (non-parity regimes only).
    pub spectral_radius: Option<f64>,
    pub contractive: bool,
}

const GRID_STEP: f64 = 1e-3;

fn max_slope(f: impl Fn(f64) -> Result<f64>) -> Result<f64> {
    let n = (1.0 / GRID_STEP).round() as usize;
    let mut prev = f(0.0)?;
    let mut worst: f64 = 0.0;
    for i in 1..=n {
        let x = i as f64 * GRID_STEP;
        let y = f(x)?;
        worst = worst.max((y - prev).abs() / GRID_STEP);
        prev = y;
    }
    Ok(worst)
}

/// Lipschitz estimates of the outcome map `phi: gamma -> g`, the feedback map
/// `psi: g -> gamma` and their composite at a fixed wage.
pub fn contraction_diagnostics(
    model: &Model,
    regime: &HiringRegime,
    dyn_opts: &DynamicsOptions,
    w_fixed: f64,
    pi_ref: [f64; 2],
) -> Result<ContractionReport> {
    let p = &model.params;
    let f = &model.forms.ability;
    let cutoffs = effort_cutoffs(model, w_fixed);
    let theta_bar = quantile(f, 1.0 - p.ell)?;
    let (low_q, low_u) = effort_shares(f, &cutoffs, theta_bar);
    let epsilon = contraction_factor(low_q, low_u, p);
    let phi = |gamma: f64| Ok(group_outcome(gamma, low_q, low_u, p));
    let lip_phi = max_slope(phi)?;
    let psi = |g: f64, group: Group| -> Result<f64> {
        let mass = p.share(group) * p.ell;
        let pi = reputation(std::iter::once((&g, &mass)), p.share(group), dyn_opts.norm);
        let t = HiringRegime::StatisticalParity.thresholds(model, [pi, pi], w_fixed)?;
        Ok(model.forms.qual_prob.prob(t.eta_hat(group)))
    };
    let mut lip_psi: f64 = 0.0;
    let mut lip_xi: f64 = 0.0;
    for group in Group::ALL {
        lip_psi = lip_psi.max(max_slope(|g| psi(g, group))?);
        lip_xi = lip_xi.max(max_slope(|g| psi(g, group).and_then(phi))?);
    }
    let (expansion_factor, spectral_radius, contractive) = match regime {
        HiringRegime::StatisticalParity => (None, None, lip_xi < 1.0),
        _ => {
            let t = regime.thresholds(model, pi_ref, w_fixed)?;
            let s = p.sigma_b;
            let expansion = (t.k_b / s).max((1.0 - t.k_b) / (1.0 - s));
            let fixed = DynamicsOptions {
                fixed_wage: Some(w_fixed),
                ..*dyn_opts
            };
            let sym = solve_fixed_point_direct(model, &HiringRegime::StatisticalParity, &fixed, [0.5, 0.5], 1.0)?;
            let x0 = [sym.g[0], sym.g[1], sym.mass[0], sym.mass[1]];
            let radius = spectral_radius(|x| Ok(stationary_map(model, regime, &fixed, x)?.next), &x0)?;
            (Some(expansion), Some(radius), radius < 1.0)
        }
    };
    Ok(ContractionReport {
        w: w_fixed,
        cutoffs,
        theta_bar,
        low_q,
        low_u,
        epsilon,
        lip_phi,
        lip_psi,
        lip_xi,
        expansion_factor,
        spectral_radius,
        contractive,
    })
}

/// Spectral radius of the finite-difference Jacobian of `map` at `x0`, by
/// power iteration with a geometric-mean growth estimate.
fn spectral_radius(
    map: impl Fn(&StationaryState) -> Result<StationaryState>,
    x0: &StationaryState,
) -> Result<f64> {
    const H: f64 = 1e-6;
    let mut jac = [[0.0; 4]; 4];
    for j in 0..4 {
        let mut xp = *x0;
        let mut xm = *x0;
        xp[j] += H;
        xm[j] -= H;
        let fp = map(&xp)?;
        let fm = map(&xm)?;
        for i in 0..4 {
            jac[i][j] = (fp[i] - fm[i]) / (2.0 * H);
        }
    }
    let mut v = [1.0, -0.7, 0.3, -0.2];
    let mut log_growth = 0.0;
    const BURN: usize = 200;
    const ITERS: usize = 400;
    for it in 0..(BURN + ITERS) {
        let mut nv = [0.0; 4];
        for i in 0..4 {
            for j in 0..4 {
                nv[i] += jac[i][j] * v[j];
            }
        }
        let norm = nv.iter().map(|a| a * a).sum::<f64>().sqrt();
        if norm == 0.0 {
            return Ok(0.0);
        }
        if it >= BURN {
            log_growth += norm.ln();
        }
        for i in 0..4 {
            v[i] = nv[i] / norm;
        }
    }
    Ok((log_growth / ITERS as f64).exp())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WelfareSummary {
    pub parity: [f64; 2],
    pub unconstrained: [f64; 2],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParetoVerdict {
    pub regime_pair: [String; 2],
    pub applicable: bool,
    pub reason: Option<String>,
    /// `(theta_tilde_W, theta_bar, theta_tilde_B)`.
    pub theta_ordering: [f64; 3],
    pub theta_hat_q: f64,
    pub ordering_holds: bool,
    pub group_b_better_off_mass: f64,
    pub group_w_worse_off_mass: f64,
    pub dominates: bool,
    pub parity_pi: [f64; 2],
    pub unconstrained_pi: [f64; 2],
    pub unconstrained_converged: bool,
    pub welfare: Option<WelfareSummary>,
}

impl ParetoVerdict {
    fn inapplicable(regime: &HiringRegime, reason: &str) -> Self {
        Self {
            regime_pair: ["parity".into(), regime.name().into()],
            applicable: false,
            reason: Some(reason.into()),
            theta_ordering: [f64::NAN; 3],
            theta_hat_q: f64::NAN,
            ordering_holds: false,
            group_b_better_off_mass: 0.0,
            group_w_worse_off_mass: 0.0,
            dominates: false,
            parity_pi: [f64::NAN; 2],
            unconstrained_pi: [f64::NAN; 2],
            unconstrained_converged: false,
            welfare: None,
        }
    }
}

/// Steady-state welfare per group: wage premium net of effort cost for
/// workers who earn it, minus the investment cost, averaged over the group.
fn group_welfare(model: &Model, t: &ThresholdSet, cut: &EffortCutoffs, pi: [f64; 2], w: f64) -> [f64; 2] {
    const CELLS: usize = 4000;
    let f = &model.forms.ability;
    let mut out = [0.0; 2];
    for g in Group::ALL {
        let eta = t.eta_hat(g);
        if !eta.is_finite() {
            continue;
        }
        let gamma = model.forms.qual_prob.prob(eta);
        let mut total = 0.0;
        for c in 0..CELLS {
            let lo = c as f64 / CELLS as f64;
            let hi = (c + 1) as f64 / CELLS as f64;
            let theta = 0.5 * (lo + hi);
            if theta < t.theta_star(g) {
                continue;
            }
            let weight = f.cdf(hi) - f.cdf(lo);
            let earn = |rho: Qualification| {
                if theta >= cut.get(rho) {
                    w - model.forms.effort_cost.cost(rho, theta)
                } else {
                    0.0
                }
            };
            let value = gamma * earn(Qualification::Q) + (1.0 - gamma) * earn(Qualification::U)
                - model.forms.invest_cost.cost(pi[g.index()], theta, eta);
            total += weight * value;
        }
        out[g.index()] = total;
    }
    out
}

/// Runs parity and `unconstrained` from the same initial condition and
/// compares their steady-state hiring sets. Requires a pinned wage and an
/// initial reputation ordering `pi_B < pi_W`; otherwise the verdict is
/// marked inapplicable.
pub fn compare_regimes(
    model: &Model,
    unconstrained: &HiringRegime,
    dyn_opts: &DynamicsOptions,
    init_g: [f64; 2],
    opts: &RunOptions,
) -> Result<ParetoVerdict> {
    if !model.forms.wage_curve.is_pinned() {
        return Ok(ParetoVerdict::inapplicable(unconstrained, "wage is not pinned at w_max"));
    }
    if matches!(unconstrained, HiringRegime::StatisticalParity) {
        return Ok(ParetoVerdict::inapplicable(unconstrained, "regimes coincide"));
    }
    let start = MarketState::initial(model, unconstrained, dyn_opts, init_g)?;
    if !(start.groups[0].pi < start.groups[1].pi) {
        return Ok(ParetoVerdict::inapplicable(
            unconstrained,
            "initial reputations do not satisfy pi_B < pi_W",
        ));
    }
    let (_, par) = run_to_steady_state(model, &HiringRegime::StatisticalParity, dyn_opts, init_g, opts)?;
    let (_, unc) = run_to_steady_state(model, unconstrained, dyn_opts, init_g, opts)?;
    if unc.symmetric {
        let mut v = ParetoVerdict::inapplicable(unconstrained, "unconstrained regime reached a symmetric steady state");
        v.parity_pi = par.pi_tilde;
        v.unconstrained_pi = unc.pi_tilde;
        v.unconstrained_converged = unc.converged;
        return Ok(v);
    }
    let f = &model.forms.ability;
    let theta_bar = par.thresholds.theta_star_b;
    let theta_b = unc.thresholds.theta_star_b;
    let theta_w = unc.thresholds.theta_star_w;
    let theta_hat_q = unc.cutoffs.theta_hat_q;
    let better = (f.cdf(theta_b) - f.cdf(theta_hat_q.max(theta_bar))).max(0.0);
    let worse = (f.cdf(theta_bar) - f.cdf(theta_w.max(theta_hat_q))).max(0.0);
    let welfare = WelfareSummary {
        parity: group_welfare(model, &par.thresholds, &par.cutoffs, par.pi_tilde, par.w_tilde),
        unconstrained: group_welfare(model, &unc.thresholds, &unc.cutoffs, unc.pi_tilde, unc.w_tilde),
    };
    Ok(ParetoVerdict {
        regime_pair: ["parity".into(), unconstrained.name().into()],
        applicable: true,
        reason: None,
        theta_ordering: [theta_w, theta_bar, theta_b],
        theta_hat_q,
        ordering_holds: theta_w < theta_bar && theta_bar < theta_b,
        group_b_better_off_mass: better,
        group_w_worse_off_mass: worse,
        dominates: better > 0.0 && worse == 0.0,
        parity_pi: par.pi_tilde,
        unconstrained_pi: unc.pi_tilde,
        unconstrained_converged: unc.converged,
        welfare: Some(welfare),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::forms::WageCurve;

    #[test]
    fn parity_symmetric_start_converges_quickly() {
        let m = Model::default();
        let (_, r) = run_to_steady_state(
            &m,
            &HiringRegime::StatisticalParity,
            &DynamicsOptions::default(),
            [0.6, 0.6],
            &RunOptions::default(),
        )
        .unwrap();
        assert!(r.converged && r.symmetric);
        assert!(r.t_convergence.unwrap() < 5_000);
    }

    #[test]
    fn parity_is_independent_of_initial_order() {
        let m = Model::default();
        let run = |g0| {
            run_to_steady_state(
                &m,
                &HiringRegime::StatisticalParity,
                &DynamicsOptions::default(),
                g0,
                &RunOptions::default(),
            )
            .unwrap()
            .1
        };
        let a = run([0.1, 0.8]);
        let b = run([0.8, 0.1]);
        assert!(a.converged && b.converged && a.symmetric && b.symmetric);
        assert!((a.g_tilde[0] - b.g_tilde[0]).abs() < 1e-6);
    }

    #[test]
    fn direct_solver_matches_trajectory() {
        let m = Model::default();
        let regime = HiringRegime::StatisticalParity;
        let d = DynamicsOptions::default();
        let fp = solve_fixed_point_direct(&m, &regime, &d, [0.5, 0.5], 1.0).unwrap();
        let (_, r) = run_to_steady_state(&m, &regime, &d, [0.3, 0.7], &RunOptions::default()).unwrap();
        assert!((fp.g[0] - r.g_tilde[0]).abs() < 1e-6, "{fp:?} {r:?}");
        assert!(fp.residual < 1e-10);
    }

    #[test]
    fn direct_solver_rejects_bad_damping() {
        let m = Model::default();
        let e = solve_fixed_point_direct(
            &m,
            &HiringRegime::StatisticalParity,
            &DynamicsOptions::default(),
            [0.5, 0.5],
            0.0,
        );
        assert!(matches!(e, Err(Error::RangeViolation(_))));
    }

    #[test]
    fn phi_lipschitz_matches_epsilon() {
        let m = Model::default();
        let d = contraction_diagnostics(
            &m,
            &HiringRegime::StatisticalParity,
            &DynamicsOptions::default(),
            0.6,
            [0.2, 0.2],
        )
        .unwrap();
        assert!((d.lip_phi - d.epsilon.abs()).abs() < 1e-6);
        assert!(d.epsilon.abs() < 1.0);
        assert!(d.contractive);
        assert!(d.expansion_factor.is_none());
    }

    #[test]
    fn blind_diagnostics_report_expansion() {
        let m = Model::default();
        let d = contraction_diagnostics(
            &m,
            &HiringRegime::GroupBlind,
            &DynamicsOptions::default(),
            0.6,
            [0.1, 0.2],
        )
        .unwrap();
        assert!(d.expansion_factor.unwrap() > 1.0);
        assert!(d.spectral_radius.unwrap() >= 0.0);
    }

    #[test]
    fn compare_requires_pinned_wage() {
        let m = Model::default();
        let v = compare_regimes(
            &m,
            &HiringRegime::GroupBlind,
            &DynamicsOptions::default(),
            [0.2, 0.8],
            &RunOptions::default(),
        )
        .unwrap();
        assert!(!v.applicable && !v.dominates);
    }

    #[test]
    fn compare_symmetric_scenario_does_not_dominate() {
        let mut m = Model::default();
        m.forms.wage_curve = WageCurve::Pinned;
        let v = compare_regimes(
            &m,
            &HiringRegime::GroupBlind,
            &DynamicsOptions::default(),
            [0.5, 0.5],
            &RunOptions::default(),
        )
        .unwrap();
        assert!(!v.dominates);
    }
}
