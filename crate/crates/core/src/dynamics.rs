//! Deterministic group-level recursion: outcomes, lagged reputation,
//! reputational feedback into qualification and wage updates.

use std::collections::VecDeque;
use std::io::Write;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::forms::{AbilityDist, Cdf};
use crate::params::{Group, Model, ModelParams};
use crate::plm::{effort_cutoffs, EffortCutoffs};
use crate::tlm::{HiringRegime, ThresholdSet};

/// Normalization of the group reputation average.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReputationNorm {
    /// Window mean of hired mass times outcome share; parity gives `sigma ell g`.
    #[default]
    Paper,
    /// The same average divided by the group's population share.
    PerCapita,
}

/// When wage updates fire.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WageClock {
    /// Every `ceil(1 / wage_update_prob)` steps.
    #[default]
    Deterministic,
    /// Bernoulli(`wage_update_prob`) each step, drawn from the run's seed.
    Random,
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct DynamicsOptions {
    pub norm: ReputationNorm,
    pub clock: WageClock,
    /// Holds the wage at this value for the whole run when set.
    pub fixed_wage: Option<f64>,
}

/// `g = p_H [1 - l_Q gamma - l_U (1 - gamma)] + p_Q l_Q gamma + p_U l_U (1 - gamma)`,
/// where `l_rho` is the share of type `rho` exerting low effort.
pub fn group_outcome(gamma: f64, l_q: f64, l_u: f64, p: &ModelParams) -> f64 {
    let low_q = l_q * gamma;
    let low_u = l_u * (1.0 - gamma);
    p.p_h * (1.0 - low_q - low_u) + p.p_q * low_q + p.p_u * low_u
}

/// [`group_outcome`] with low-effort shares `F(theta_hat_Q)`, `F(theta_hat_U)`.
pub fn step_group_outcome(
    gamma: f64,
    theta_hat_q: f64,
    theta_hat_u: f64,
    p: &ModelParams,
    f: &AbilityDist,
) -> f64 {
    group_outcome(gamma, f.cdf(theta_hat_q), f.cdf(theta_hat_u), p)
}

/// Low-effort shares among hired workers, whose abilities follow `F`
/// truncated below at the TLM cutoff `theta_star`.
pub fn effort_shares(f: &AbilityDist, cut: &EffortCutoffs, theta_star: f64) -> (f64, f64) {
    let base = f.cdf(theta_star);
    let share = |theta_hat: f64| {
        if base >= 1.0 {
            0.0
        } else {
            ((f.cdf(theta_hat) - base).max(0.0) / (1.0 - base)).min(1.0)
        }
    };
    (share(cut.theta_hat_q), share(cut.theta_hat_u))
}

/// Slope of the outcome map in `gamma`: `l_U (p_H - p_U) + l_Q (p_Q - p_H)`.
pub fn contraction_factor(l_q: f64, l_u: f64, p: &ModelParams) -> f64 {
    l_u * (p.p_h - p.p_u) + l_q * (p.p_q - p.p_h)
}

/// Reputation from the window of `(g_j, M_j)` pairs, clamped to `[0, 1]`.
pub fn reputation<'a>(
    window: impl Iterator<Item = (&'a f64, &'a f64)>,
    share: f64,
    norm: ReputationNorm,
) -> f64 {
    let mut sum = 0.0;
    let mut count = 0usize;
    for (g, m) in window {
        sum += g * m;
        count += 1;
    }
    if count == 0 {
        return 0.0;
    }
    let mut pi = sum / count as f64;
    if norm == ReputationNorm::PerCapita {
        pi /= share;
    }
    pi.clamp(0.0, 1.0)
}

/// Parity reputation `clamp(sigma ell * mean(window))`.
pub fn update_reputation(g_window: &[f64], sigma_mu: f64, ell: f64) -> f64 {
    if g_window.is_empty() {
        return 0.0;
    }
    let mean = g_window.iter().sum::<f64>() / g_window.len() as f64;
    (sigma_mu * ell * mean).clamp(0.0, 1.0)
}

/// Qualified share implied by reputations and wage under `regime`.
pub fn update_gamma(model: &Model, regime: &HiringRegime, pi: [f64; 2], w: f64) -> Result<[f64; 2]> {
    let t = regime.thresholds(model, pi, w)?;
    let q = &model.forms.qual_prob;
    Ok([q.prob(t.eta_hat_b), q.prob(t.eta_hat_w)])
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupState {
    /// Last `tau + 1` outcome shares, oldest first.
    pub g_history: VecDeque<f64>,
    /// Hired mass that produced each entry of `g_history`.
    pub mass_history: VecDeque<f64>,
    pub pi: f64,
    pub gamma: f64,
}

impl GroupState {
    fn reputation(&self, share: f64, norm: ReputationNorm) -> f64 {
        reputation(self.g_history.iter().zip(self.mass_history.iter()), share, norm)
    }

    fn push(&mut self, g: f64, mass: f64) {
        self.g_history.pop_front();
        self.mass_history.pop_front();
        self.g_history.push_back(g);
        self.mass_history.push_back(mass);
    }

    pub fn last_g(&self) -> f64 {
        *self.g_history.back().expect("history is never empty")
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MarketState {
    pub groups: [GroupState; 2],
    pub w_current: f64,
    pub g_aggregate: f64,
    pub t: u64,
    pub last_wage_update: u64,
}

impl MarketState {
    /// Start-up state: each window is filled with the initial outcome share and
    /// the parity hired mass.
    pub fn initial(
        model: &Model,
        regime: &HiringRegime,
        opts: &DynamicsOptions,
        init_g: [f64; 2],
    ) -> Result<Self> {
        let p = &model.params;
        for g in init_g {
            if !(0.0..=1.0).contains(&g) {
                return Err(Error::RangeViolation(format!("initial g = {g} outside [0, 1]")));
            }
        }
        let len = p.tau + 1;
        let make = |g: Group| {
            let mass = p.share(g) * p.ell;
            GroupState {
                g_history: VecDeque::from(vec![init_g[g.index()]; len]),
                mass_history: VecDeque::from(vec![mass; len]),
                pi: 0.0,
                gamma: 0.0,
            }
        };
        let mut groups = [make(Group::B), make(Group::W)];
        let g_aggregate: f64 = Group::ALL
            .iter()
            .map(|&g| p.share(g) * p.ell * init_g[g.index()])
            .sum();
        let w = match opts.fixed_wage {
            Some(w) => w,
            None => model.wage(g_aggregate)?,
        };
        for g in Group::ALL {
            groups[g.index()].pi = groups[g.index()].reputation(p.share(g), opts.norm);
        }
        let gamma = update_gamma(model, regime, [groups[0].pi, groups[1].pi], w)?;
        groups[0].gamma = gamma[0];
        groups[1].gamma = gamma[1];
        Ok(Self {
            groups,
            w_current: w,
            g_aggregate,
            t: 0,
            last_wage_update: 0,
        })
    }

    pub fn pi(&self) -> [f64; 2] {
        [self.groups[0].pi, self.groups[1].pi]
    }

    pub fn g(&self) -> [f64; 2] {
        [self.groups[0].last_g(), self.groups[1].last_g()]
    }
}

/// Everything computed during one step.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub t: u64,
    pub g: [f64; 2],
    pub pi: [f64; 2],
    pub gamma: [f64; 2],
    /// Wage in force during the step.
    pub w: f64,
    pub thresholds: ThresholdSet,
    pub cutoffs: EffortCutoffs,
    pub low_q: [f64; 2],
    pub low_u: [f64; 2],
    pub epsilon: [f64; 2],
    pub g_aggregate: f64,
    pub wage_updated: bool,
}

/// Trajectory CSV header.
pub const TRAJECTORY_HEADER: &str = "t,g_B,g_W,pi_B,pi_W,gamma_B,gamma_W,w,eta_hat_B,eta_hat_W,k_B";

impl StepRecord {
    pub fn csv_row(&self) -> String {
        format!(
            "{},{},{},{},{},{},{},{},{},{},{}",
            self.t,
            self.g[0],
            self.g[1],
            self.pi[0],
            self.pi[1],
            self.gamma[0],
            self.gamma[1],
            self.w,
            self.thresholds.eta_hat_b,
            self.thresholds.eta_hat_w,
            self.thresholds.k_b
        )
    }
}

pub fn write_trajectory_csv<W: Write>(records: &[StepRecord], mut out: W) -> Result<()> {
    writeln!(out, "{TRAJECTORY_HEADER}")?;
    for r in records {
        writeln!(out, "{}", r.csv_row())?;
    }
    Ok(())
}

fn wage_period(q: f64) -> u64 {
    ((1.0 / q).ceil() as u64).max(1)
}

/// One synchronous update: reputation, thresholds and qualification,
/// effort cutoffs, outcomes, aggregate supply, then a possible wage update.
///
/// `rng` is only consulted with [`WageClock::Random`].
pub fn step_market(
    ms: &MarketState,
    model: &Model,
    regime: &HiringRegime,
    opts: &DynamicsOptions,
    rng: Option<&mut ChaCha8Rng>,
) -> Result<(MarketState, StepRecord)> {
    let p = &model.params;
    let f = &model.forms.ability;
    let mut next = ms.clone();
    next.t = ms.t + 1;
    let w = ms.w_current;

    let mut pi = [0.0; 2];
    for g in Group::ALL {
        pi[g.index()] = ms.groups[g.index()].reputation(p.share(g), opts.norm);
    }
    let thresholds = regime.thresholds(model, pi, w)?;
    let gamma = [
        model.forms.qual_prob.prob(thresholds.eta_hat_b),
        model.forms.qual_prob.prob(thresholds.eta_hat_w),
    ];
    let cutoffs = effort_cutoffs(model, w);

    let mut g_new = [0.0; 2];
    let mut low_q = [0.0; 2];
    let mut low_u = [0.0; 2];
    let mut epsilon = [0.0; 2];
    for g in Group::ALL {
        let i = g.index();
        let (lq, lu) = effort_shares(f, &cutoffs, thresholds.theta_star(g));
        low_q[i] = lq;
        low_u[i] = lu;
        epsilon[i] = contraction_factor(lq, lu, p);
        g_new[i] = group_outcome(gamma[i], lq, lu, p);
        let state = &mut next.groups[i];
        state.push(g_new[i], thresholds.mass(g));
        state.pi = pi[i];
        state.gamma = gamma[i];
    }
    let g_aggregate = thresholds.mass_b * g_new[0] + thresholds.mass_w * g_new[1];
    next.g_aggregate = g_aggregate;

    let fires = match (opts.fixed_wage, opts.clock) {
        (Some(_), _) => false,
        (None, WageClock::Deterministic) => next.t % wage_period(p.wage_update_prob) == 0,
        (None, WageClock::Random) => match rng {
            Some(r) => r.gen::<f64>() < p.wage_update_prob,
            None => {
                return Err(Error::RangeViolation(
                    "random wage clock needs a random number generator".into(),
                ))
            }
        },
    };
    if fires {
        next.w_current = model.wage(g_aggregate)?;
        next.last_wage_update = next.t;
    }

    let record = StepRecord {
        t: next.t,
        g: g_new,
        pi,
        gamma,
        w,
        thresholds,
        cutoffs,
        low_q,
        low_u,
        epsilon,
        g_aggregate,
        wage_updated: fires,
    };
    Ok((next, record))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    fn p() -> ModelParams {
        ModelParams::default()
    }

    #[test]
    fn outcome_examples() {
        let p = p();
        assert!((group_outcome(1.0, 0.0, 0.7, &p) - p.p_h).abs() < 1e-15);
        assert!((group_outcome(0.0, 0.3, 1.0, &p) - p.p_u).abs() < 1e-15);
        assert!((group_outcome(0.5, 0.2, 0.6, &p) - 0.69).abs() < 1e-12);
        let f = AbilityDist::Uniform;
        assert!((step_group_outcome(0.5, 0.2, 0.6, &p, &f) - 0.69).abs() < 1e-12);
    }

    #[test]
    fn reputation_examples() {
        assert!((update_reputation(&[0.5], 0.5, 0.5) - 0.125).abs() < 1e-15);
        assert_eq!(update_reputation(&[0.0; 6], 0.5, 0.5), 0.0);
        assert!((update_reputation(&[0.2, 0.4, 0.6, 0.8], 1.0, 1.0) - 0.5).abs() < 1e-15);
        let g = [0.2, 0.4];
        let m = [0.25, 0.25];
        let pc = reputation(g.iter().zip(m.iter()), 0.5, ReputationNorm::PerCapita);
        assert!((pc - 0.15).abs() < 1e-15);
    }

    #[test]
    fn contraction_factor_examples() {
        let p = p();
        assert!((contraction_factor(0.0, 1.0, &p) - 0.6).abs() < 1e-15);
        assert_eq!(contraction_factor(0.0, 0.0, &p), 0.0);
    }

    #[test]
    fn effort_shares_truncate() {
        let f = AbilityDist::Uniform;
        let cut = EffortCutoffs {
            theta_hat_q: 0.6,
            theta_hat_u: 0.4,
        };
        let (lq, lu) = effort_shares(&f, &cut, 0.5);
        assert!((lq - 0.2).abs() < 1e-15);
        assert_eq!(lu, 0.0);
    }

    #[test]
    fn gamma_symmetric_and_monotone() {
        let m = Model::default();
        for regime in [HiringRegime::StatisticalParity, HiringRegime::GroupBlind] {
            let g = update_gamma(&m, &regime, [0.3, 0.3], 0.9).unwrap();
            assert_eq!(g[0], g[1]);
        }
        let lo = update_gamma(&m, &HiringRegime::StatisticalParity, [0.2, 0.2], 1.0).unwrap();
        let hi = update_gamma(&m, &HiringRegime::StatisticalParity, [0.6, 0.6], 1.0).unwrap();
        assert!(hi[0] >= lo[0]);
    }

    #[test]
    fn gamma_fixture() {
        // eta = w (theta + theta0) / (1 + beta (1 - pi)) = 0.6 / 1.7; gamma = 1 - exp(-2 eta).
        let m = Model::default();
        let g = update_gamma(&m, &HiringRegime::StatisticalParity, [0.3, 0.3], 1.0).unwrap();
        let eta: f64 = 0.6 / 1.7;
        assert!((g[0] - (1.0 - (-2.0 * eta).exp())).abs() < 1e-9);
        assert!((g[0] - 0.506_327).abs() < 1e-6);
    }

    #[test]
    fn symmetric_state_stays_symmetric() {
        let m = Model::default();
        let regime = HiringRegime::GroupBlind;
        let opts = DynamicsOptions::default();
        let mut s = MarketState::initial(&m, &regime, &opts, [0.6, 0.6]).unwrap();
        for _ in 0..50 {
            let (n, r) = step_market(&s, &m, &regime, &opts, None).unwrap();
            assert_eq!(r.g[0], r.g[1]);
            assert_eq!(r.pi[0], r.pi[1]);
            s = n;
        }
    }

    #[test]
    fn step_does_not_mutate_input() {
        let m = Model::default();
        let regime = HiringRegime::StatisticalParity;
        let opts = DynamicsOptions::default();
        let s = MarketState::initial(&m, &regime, &opts, [0.2, 0.7]).unwrap();
        let copy = s.clone();
        let _ = step_market(&s, &m, &regime, &opts, None).unwrap();
        assert_eq!(s, copy);
    }

    #[test]
    fn wage_updates_follow_clock() {
        let m = Model::default();
        let regime = HiringRegime::StatisticalParity;
        let opts = DynamicsOptions::default();
        let mut s = MarketState::initial(&m, &regime, &opts, [0.5, 0.5]).unwrap();
        for _ in 0..30 {
            let (n, r) = step_market(&s, &m, &regime, &opts, None).unwrap();
            assert_eq!(r.wage_updated, r.t % 10 == 0);
            if r.wage_updated {
                assert!((n.w_current - m.wage(r.g_aggregate).unwrap()).abs() < 1e-15);
            }
            s = n;
        }
    }

    #[test]
    fn random_clock_needs_rng_and_is_seeded() {
        let m = Model::default();
        let regime = HiringRegime::StatisticalParity;
        let opts = DynamicsOptions {
            clock: WageClock::Random,
            ..DynamicsOptions::default()
        };
        let s = MarketState::initial(&m, &regime, &opts, [0.5, 0.5]).unwrap();
        assert!(step_market(&s, &m, &regime, &opts, None).is_err());
        let run = |seed| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut st = s.clone();
            let mut fired = Vec::new();
            for _ in 0..100 {
                let (n, r) = step_market(&st, &m, &regime, &opts, Some(&mut rng)).unwrap();
                fired.push(r.wage_updated);
                st = n;
            }
            fired
        };
        assert_eq!(run(7), run(7));
    }

    #[test]
    fn rejects_bad_initial_share() {
        let m = Model::default();
        let e = MarketState::initial(
            &m,
            &HiringRegime::StatisticalParity,
            &DynamicsOptions::default(),
            [1.2, 0.5],
        );
        assert!(e.is_err());
    }
}
