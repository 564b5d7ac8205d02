//! TLM investment thresholds under the three hiring regimes.
//!
//! Every solver works on the generic [`InvestCost`](crate::forms::InvestCost)
//! and ability CDF through bisection; closed forms for the default forms are
//! used only as test oracles.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::forms::{quantile, Cdf};
use crate::params::{Group, Model};
use crate::root::{expand_upper, Bisection};

/// How statistical-discrimination priors evolve.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PriorMode {
    /// Priors track the lagged group reputation each period.
    SelfConfirming,
    /// Priors stay at the configured values.
    Static,
}

/// Parameters of the statistical-discrimination firm.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StatDisc {
    pub xi_b: f64,
    pub xi_w: f64,
    /// Standard deviation of the Gaussian noise on the observed investment.
    pub noise: f64,
    /// Posterior probability of qualification required to hire.
    pub cutoff: f64,
    pub priors: PriorMode,
    /// Largest investment level searched for the posterior cutoff.
    pub eta_max: f64,
}

impl Default for StatDisc {
    fn default() -> Self {
        Self {
            xi_b: 0.3,
            xi_w: 0.7,
            noise: 1.0,
            cutoff: 0.5,
            priors: PriorMode::Static,
            eta_max: 50.0,
        }
    }
}

/// Clamp used for self-confirming priors so the posterior stays informative.
const PRIOR_CLAMP: f64 = 1e-6;

impl StatDisc {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [("statdisc.xi_B", self.xi_b), ("statdisc.xi_W", self.xi_w)] {
            if !(v > 0.0 && v < 1.0) {
                return Err(Error::RangeViolation(format!("{name} = {v} must lie in (0, 1)")));
            }
        }
        if !(self.cutoff > 0.0 && self.cutoff < 1.0) {
            return Err(Error::RangeViolation(format!(
                "statdisc.cutoff = {} must lie in (0, 1)",
                self.cutoff
            )));
        }
        if !(self.noise > 0.0 && self.noise.is_finite()) {
            return Err(Error::RangeViolation(format!(
                "statdisc.noise = {} must be > 0",
                self.noise
            )));
        }
        if !(self.eta_max > 0.0 && self.eta_max.is_finite()) {
            return Err(Error::RangeViolation(format!(
                "statdisc.eta_max = {} must be > 0",
                self.eta_max
            )));
        }
        Ok(())
    }

    /// Prior used for `group` given current reputations.
    pub fn prior(&self, group: Group, pi: [f64; 2]) -> f64 {
        match self.priors {
            PriorMode::Static => match group {
                Group::B => self.xi_b,
                Group::W => self.xi_w,
            },
            PriorMode::SelfConfirming => pi[group.index()].clamp(PRIOR_CLAMP, 1.0 - PRIOR_CLAMP),
        }
    }

    fn density(&self, x: f64) -> f64 {
        let z = x / self.noise;
        (-0.5 * z * z).exp() / (self.noise * (2.0 * std::f64::consts::PI).sqrt())
    }

    /// Signal likelihoods `(p_Q(eta), p_U(eta))` at observed signal `eta`.
    ///
    /// Within a group a share `ell` invests `eta` and the rest invest 0;
    /// investors qualify with probability `gamma(eta)`. The firm observes the
    /// investment plus Gaussian noise and evaluates the signal at `eta`.
    pub fn likelihoods(&self, model: &Model, eta: f64) -> (f64, f64) {
        let s = model.params.ell;
        let g = model.forms.qual_prob.prob(eta);
        let at_invest = self.density(0.0);
        let at_zero = self.density(eta);
        let p_q = at_invest;
        let p_u = (s * (1.0 - g) * at_invest + (1.0 - s) * at_zero) / (1.0 - s * g);
        (p_q, p_u)
    }

    /// Posterior qualification probability of a worker signalling `eta`.
    pub fn posterior(&self, model: &Model, prior: f64, eta: f64) -> Result<f64> {
        let (p_q, p_u) = self.likelihoods(model, eta);
        bayes_posterior(prior, p_q, p_u)
    }

    /// Smallest investment whose posterior reaches the cutoff.
    pub fn min_investment(&self, model: &Model, prior: f64) -> Result<f64> {
        let reaches = |eta: f64| {
            self.posterior(model, prior, eta)
                .map(|q| q >= self.cutoff)
                .unwrap_or(false)
        };
        if reaches(0.0) {
            return Ok(0.0);
        }
        if !reaches(self.eta_max) {
            return Err(Error::CutoffUnreachable(self.cutoff));
        }
        Bisection::default().first_true(reaches, 0.0, self.eta_max)
    }
}

/// `p_Q xi / (p_Q xi + (1 - xi) p_U)`.
pub fn bayes_posterior(prior: f64, p_q: f64, p_u: f64) -> Result<f64> {
    if p_q <= 0.0 && p_u <= 0.0 {
        return Err(Error::DegenerateLikelihood(prior));
    }
    let num = p_q * prior;
    Ok(num / (num + (1.0 - prior) * p_u))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum HiringRegime {
    StatisticalParity,
    GroupBlind,
    StatisticalDiscrimination(StatDisc),
}

impl Default for HiringRegime {
    fn default() -> Self {
        HiringRegime::StatisticalParity
    }
}

impl HiringRegime {
    pub fn name(&self) -> &'static str {
        match self {
            HiringRegime::StatisticalParity => "parity",
            HiringRegime::GroupBlind => "blind",
            HiringRegime::StatisticalDiscrimination(_) => "statdisc",
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            HiringRegime::StatisticalDiscrimination(sd) => sd.validate(),
            _ => Ok(()),
        }
    }

    /// Thresholds for reputations `pi = [pi_B, pi_W]` at wage `w`.
    pub fn thresholds(&self, model: &Model, pi: [f64; 2], w: f64) -> Result<ThresholdSet> {
        match self {
            HiringRegime::StatisticalParity => parity_thresholds(model, pi, w),
            HiringRegime::GroupBlind => group_blind_threshold(model, pi, w),
            HiringRegime::StatisticalDiscrimination(sd) => stat_disc_thresholds(model, sd, pi, w),
        }
    }
}

/// Investment thresholds, implied ability cutoffs and the TLM composition.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ThresholdSet {
    pub eta_hat_b: f64,
    pub eta_hat_w: f64,
    pub theta_star_b: f64,
    pub theta_star_w: f64,
    /// Share of the TLM belonging to group B.
    pub k_b: f64,
    /// Hired mass of each group as a fraction of the whole population.
    pub mass_b: f64,
    pub mass_w: f64,
}

impl ThresholdSet {
    pub fn eta_hat(&self, g: Group) -> f64 {
        match g {
            Group::B => self.eta_hat_b,
            Group::W => self.eta_hat_w,
        }
    }

    pub fn theta_star(&self, g: Group) -> f64 {
        match g {
            Group::B => self.theta_star_b,
            Group::W => self.theta_star_w,
        }
    }

    pub fn mass(&self, g: Group) -> f64 {
        match g {
            Group::B => self.mass_b,
            Group::W => self.mass_w,
        }
    }

    /// Largest absolute difference over all finite fields.
    pub fn max_abs_diff(&self, other: &ThresholdSet) -> f64 {
        let a = [
            self.eta_hat_b,
            self.eta_hat_w,
            self.theta_star_b,
            self.theta_star_w,
            self.k_b,
            self.mass_b,
            self.mass_w,
        ];
        let b = [
            other.eta_hat_b,
            other.eta_hat_w,
            other.theta_star_b,
            other.theta_star_w,
            other.k_b,
            other.mass_b,
            other.mass_w,
        ];
        a.iter()
            .zip(b.iter())
            .map(|(x, y)| {
                if x == y {
                    0.0
                } else {
                    (x - y).abs()
                }
            })
            .fold(0.0, f64::max)
    }

    fn assemble(model: &Model, eta: [f64; 2], theta: [f64; 2]) -> Self {
        let f = &model.forms.ability;
        let mass_b = model.params.share(Group::B) * (1.0 - f.cdf(theta[0]));
        let mass_w = model.params.share(Group::W) * (1.0 - f.cdf(theta[1]));
        let total = mass_b + mass_w;
        let k_b = if total > 0.0 { mass_b / total } else { 0.0 };
        Self {
            eta_hat_b: eta[0],
            eta_hat_w: eta[1],
            theta_star_b: theta[0],
            theta_star_w: theta[1],
            k_b,
            mass_b,
            mass_w,
        }
    }
}

fn check_wage(w: f64) -> Result<()> {
    if w > 0.0 && w.is_finite() {
        Ok(())
    } else {
        Err(Error::RootNotBracketed { lo: 0.0, hi: 0.0 })
    }
}

/// Ability at which investing `eta` costs exactly `w`; workers at or above it
/// invest. Clamped to the support of `F`.
pub fn ability_cutoff(model: &Model, pi: f64, eta: f64, w: f64) -> f64 {
    let (lo, hi) = model.forms.ability.support();
    if !eta.is_finite() {
        return hi;
    }
    model
        .forms
        .invest_cost
        .ability_at(pi, eta, w)
        .clamp(lo, hi)
}

/// Investment level at which a worker of ability `theta` is exactly
/// indifferent: `c_pi(theta, eta) = w`.
pub fn indifferent_investment(model: &Model, pi: f64, theta: f64, w: f64) -> Result<f64> {
    check_wage(w)?;
    Ok(model.forms.invest_cost.investment_at(pi, theta, w))
}

/// Parity hiring: both groups face the ability cutoff `F^{-1}(1 - ell)`.
pub fn parity_thresholds(model: &Model, pi: [f64; 2], w: f64) -> Result<ThresholdSet> {
    check_wage(w)?;
    let theta = quantile(&model.forms.ability, 1.0 - model.params.ell)?;
    let eta_b = indifferent_investment(model, pi[0], theta, w)?;
    let eta_w = indifferent_investment(model, pi[1], theta, w)?;
    let mut set = ThresholdSet::assemble(model, [eta_b, eta_w], [theta, theta]);
    // Exact by construction; avoid round-off in the composition.
    set.k_b = model.params.sigma_b;
    Ok(set)
}

/// Total hired mass when both groups face investment threshold `eta`.
fn blind_mass(model: &Model, pi: [f64; 2], eta: f64, w: f64) -> f64 {
    let f = &model.forms.ability;
    Group::ALL
        .iter()
        .map(|&g| {
            let theta = ability_cutoff(model, pi[g.index()], eta, w);
            model.params.share(g) * (1.0 - f.cdf(theta))
        })
        .sum()
}

/// Group-blind hiring: one investment threshold, total hired mass `ell`.
pub fn group_blind_threshold(model: &Model, pi: [f64; 2], w: f64) -> Result<ThresholdSet> {
    check_wage(w)?;
    let ell = model.params.ell;
    let hi = expand_upper(|eta| blind_mass(model, pi, eta, w) < ell, 0.0, 1.0, 200)?;
    let eta = Bisection::default().solve(|eta| blind_mass(model, pi, eta, w) - ell, 0.0, hi)?;
    let theta = [
        ability_cutoff(model, pi[0], eta, w),
        ability_cutoff(model, pi[1], eta, w),
    ];
    Ok(ThresholdSet::assemble(model, [eta, eta], theta))
}

/// Statistical discrimination: per-group minimal investment that lifts the
/// posterior to the firm's cutoff. Excluded groups get `eta = +inf`.
pub fn stat_disc_thresholds(
    model: &Model,
    sd: &StatDisc,
    pi: [f64; 2],
    w: f64,
) -> Result<ThresholdSet> {
    check_wage(w)?;
    let mut eta = [0.0; 2];
    let mut theta = [0.0; 2];
    for g in Group::ALL {
        let i = g.index();
        eta[i] = match sd.min_investment(model, sd.prior(g, pi)) {
            Ok(e) => e,
            Err(Error::CutoffUnreachable(_)) => f64::INFINITY,
            Err(e) => return Err(e),
        };
        theta[i] = ability_cutoff(model, pi[i], eta[i], w);
    }
    Ok(ThresholdSet::assemble(model, eta, theta))
}

/// A worker's TLM investment choice.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Investment {
    Invest(f64),
    Abstain,
}

/// Invest at the group threshold iff doing so costs at most `w`.
pub fn invest_decision(
    model: &Model,
    theta: f64,
    group: Group,
    thresholds: &ThresholdSet,
    pi: f64,
    w: f64,
) -> Investment {
    let eta = thresholds.eta_hat(group);
    if eta.is_finite() && model.forms.invest_cost.cost(pi, theta, eta) <= w {
        Investment::Invest(eta)
    } else {
        Investment::Abstain
    }
}
