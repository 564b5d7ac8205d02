//! Functional forms: ability distribution, investment and effort costs,
//! qualification probability and the wage curve.
//!
//! Defaults:
//!
//! | form | default |
//! |------|---------|
//! | ability CDF `F` | Uniform[0, 1] (or Beta(a, b)) |
//! | investment cost | `eta * (1 + beta * (1 - pi)) / (theta + theta0)` |
//! | qualification | `1 - exp(-rate * eta)` |
//! | effort cost | `kappa_rho / (theta + theta0)` |
//! | wage | `w_min + (w_max - w_min) * exp(-slope * g)`, or pinned at `w_max` |

use serde::{Deserialize, Serialize};
use statrs::distribution::{Beta, ContinuousCDF};

use crate::error::{Error, Result};
use crate::params::Qualification;
use crate::root::Bisection;

/// A continuous, nondecreasing CDF on a bounded support.
pub trait Cdf {
    fn cdf(&self, x: f64) -> f64;
    fn support(&self) -> (f64, f64);
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum AbilityDist {
    Uniform,
    Beta { a: f64, b: f64 },
}

impl Default for AbilityDist {
    fn default() -> Self {
        AbilityDist::Uniform
    }
}

impl Cdf for AbilityDist {
    fn cdf(&self, x: f64) -> f64 {
        if x.is_nan() {
            return f64::NAN;
        }
        if x <= 0.0 {
            return 0.0;
        }
        if x >= 1.0 {
            return 1.0;
        }
        match *self {
            AbilityDist::Uniform => x,
            AbilityDist::Beta { a, b } => match Beta::new(a, b) {
                Ok(d) => d.cdf(x),
                Err(_) => f64::NAN,
            },
        }
    }

    fn support(&self) -> (f64, f64) {
        (0.0, 1.0)
    }
}

impl AbilityDist {
    pub fn validate(&self) -> Result<()> {
        match *self {
            AbilityDist::Uniform => Ok(()),
            AbilityDist::Beta { a, b } => {
                if a > 0.0 && b > 0.0 && a.is_finite() && b.is_finite() {
                    Ok(())
                } else {
                    Err(Error::RangeViolation(format!(
                        "Beta ability parameters must be positive (a = {a}, b = {b})"
                    )))
                }
            }
        }
    }
}

/// Generalized inverse `inf { theta : F(theta) >= q }`.
///
/// Fails with [`Error::NonInvertible`] when `F` is flat at level `q`, i.e.
/// the preimage of `q` is a nondegenerate interval.
pub fn quantile<C: Cdf + ?Sized>(dist: &C, q: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&q) {
        return Err(Error::RangeViolation(format!("quantile level {q} outside [0, 1]")));
    }
    let (lo, hi) = dist.support();
    let solver = Bisection {
        tol: 1e-14,
        max_iter: 200,
    };
    let lower = solver.first_true(|x| dist.cdf(x) >= q, lo, hi)?;
    if q > 0.0 && q < 1.0 {
        let upper = solver.first_true(|x| dist.cdf(x) > q, lo, hi).unwrap_or(hi);
        if upper - lower > 1e-9 {
            return Err(Error::NonInvertible(q));
        }
    }
    Ok(lower)
}

/// `c_pi(theta, eta) = eta * (1 + beta * (1 - pi)) / (theta + theta0)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InvestCost {
    pub beta: f64,
    pub theta0: f64,
}

impl Default for InvestCost {
    fn default() -> Self {
        Self {
            beta: 1.0,
            theta0: 0.1,
        }
    }
}

impl InvestCost {
    pub fn cost(&self, pi: f64, theta: f64, eta: f64) -> f64 {
        eta * self.reputation_factor(pi) / (theta + self.theta0)
    }

    fn reputation_factor(&self, pi: f64) -> f64 {
        1.0 + self.beta * (1.0 - pi)
    }

    /// Investment with `cost(pi, theta, eta) = budget`.
    pub fn investment_at(&self, pi: f64, theta: f64, budget: f64) -> f64 {
        budget * (theta + self.theta0) / self.reputation_factor(pi)
    }

    /// Ability with `cost(pi, theta, eta) = budget` (unclamped).
    pub fn ability_at(&self, pi: f64, eta: f64, budget: f64) -> f64 {
        eta * self.reputation_factor(pi) / budget - self.theta0
    }
}

/// `gamma(eta) = 1 - exp(-rate * eta)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QualProb {
    pub rate: f64,
}

impl Default for QualProb {
    fn default() -> Self {
        Self { rate: 2.0 }
    }
}

impl QualProb {
    pub fn prob(&self, eta: f64) -> f64 {
        if eta <= 0.0 {
            return 0.0;
        }
        if eta.is_infinite() {
            return 1.0;
        }
        -(-self.rate * eta).exp_m1()
    }
}

/// `e_rho(theta) = kappa_rho / (theta + theta0)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EffortCost {
    pub kappa_q: f64,
    pub kappa_u: f64,
    pub theta0: f64,
}

impl Default for EffortCost {
    fn default() -> Self {
        Self {
            kappa_q: 0.1,
            kappa_u: 0.3,
            theta0: 0.1,
        }
    }
}

impl EffortCost {
    pub fn cost(&self, rho: Qualification, theta: f64) -> f64 {
        let kappa = match rho {
            Qualification::Q => self.kappa_q,
            Qualification::U => self.kappa_u,
        };
        kappa / (theta + self.theta0)
    }

    /// Ability with `cost(rho, theta) = budget` (unclamped; infinite for a zero budget).
    pub fn ability_at(&self, rho: Qualification, budget: f64) -> f64 {
        let kappa = match rho {
            Qualification::Q => self.kappa_q,
            Qualification::U => self.kappa_u,
        };
        kappa / budget - self.theta0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum WageCurve {
    /// `w_min + (w_max - w_min) * exp(-slope * g)`.
    Exponential { slope: f64 },
    /// Unsaturated demand: the wage stays at `w_max`.
    Pinned,
}

impl Default for WageCurve {
    fn default() -> Self {
        WageCurve::Exponential { slope: 2.0 }
    }
}

impl WageCurve {
    pub fn eval(&self, g: f64, w_min: f64, w_max: f64) -> Result<f64> {
        if g < 0.0 || g.is_nan() {
            return Err(Error::NegativeSupply(g));
        }
        Ok(match *self {
            WageCurve::Exponential { slope } => w_min + (w_max - w_min) * (-slope * g).exp(),
            WageCurve::Pinned => w_max,
        })
    }

    pub fn is_pinned(&self) -> bool {
        matches!(self, WageCurve::Pinned)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct FunctionalForms {
    pub ability: AbilityDist,
    pub invest_cost: InvestCost,
    pub qual_prob: QualProb,
    pub effort_cost: EffortCost,
    pub wage_curve: WageCurve,
}

impl FunctionalForms {
    pub fn validate(&self) -> Result<()> {
        self.ability.validate()?;
        let c = &self.invest_cost;
        if !(c.beta > 0.0 && c.theta0 > 0.0) {
            return Err(Error::RangeViolation(format!(
                "investment cost needs beta > 0 and theta0 > 0 (beta = {}, theta0 = {})",
                c.beta, c.theta0
            )));
        }
        if !(self.qual_prob.rate > 0.0) {
            return Err(Error::RangeViolation(format!(
                "qualification rate {} must be > 0",
                self.qual_prob.rate
            )));
        }
        let e = &self.effort_cost;
        if !(e.kappa_q > 0.0 && e.theta0 > 0.0) {
            return Err(Error::RangeViolation(
                "effort cost needs kappa_Q > 0 and theta0 > 0".into(),
            ));
        }
        if !(e.kappa_u > e.kappa_q) {
            return Err(Error::OrderingViolation(format!(
                "kappa_U = {} must exceed kappa_Q = {}",
                e.kappa_u, e.kappa_q
            )));
        }
        if let WageCurve::Exponential { slope } = self.wage_curve {
            if !(slope > 0.0) {
                return Err(Error::RangeViolation(format!("wage slope {slope} must be > 0")));
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    const W_MIN: f64 = 0.2;
    const W_MAX: f64 = 1.0;

    #[test]
    fn wage_endpoints() {
        let curve = WageCurve::Exponential { slope: 2.0 };
        assert_eq!(curve.eval(0.0, W_MIN, W_MAX).unwrap(), W_MAX);
        assert!((curve.eval(1e6, W_MIN, W_MAX).unwrap() - W_MIN).abs() < 1e-6);
        assert!(matches!(curve.eval(-0.1, W_MIN, W_MAX), Err(Error::NegativeSupply(_))));
    }

    #[test]
    fn wage_half_point() {
        // w(ln 2 / s) = (w_max + w_min) / 2; cross-check by bisecting w(g) = midpoint.
        let s = 2.0;
        let curve = WageCurve::Exponential { slope: s };
        let g = std::f64::consts::LN_2 / s;
        let mid = 0.5 * (W_MAX + W_MIN);
        assert!((curve.eval(g, W_MIN, W_MAX).unwrap() - mid).abs() < 1e-14);
        let root = Bisection::default()
            .solve(|x| curve.eval(x, W_MIN, W_MAX).unwrap() - mid, 0.0, 10.0)
            .unwrap();
        assert!((root - g).abs() < 1e-9);
    }

    #[test]
    fn pinned_wage_is_flat() {
        assert_eq!(WageCurve::Pinned.eval(0.7, W_MIN, W_MAX).unwrap(), W_MAX);
    }

    #[test]
    fn uniform_quantiles() {
        let u = AbilityDist::Uniform;
        assert!((quantile(&u, 0.5).unwrap() - 0.5).abs() < 1e-12);
        assert_eq!(quantile(&u, 0.0).unwrap(), 0.0);
        assert!((quantile(&u, 1.0).unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn beta_median_is_half() {
        let b = AbilityDist::Beta { a: 2.0, b: 2.0 };
        let q = quantile(&b, 0.5).unwrap();
        assert!((q - 0.5).abs() < 1e-10);
        // Independent check: Beta(2,2) CDF is 3x^2 - 2x^3; bisect it directly.
        let oracle = Bisection::default()
            .solve(|x| 3.0 * x * x - 2.0 * x * x * x - 0.5, 0.0, 1.0)
            .unwrap();
        assert!((q - oracle).abs() < 1e-9);
        assert!((b.cdf(0.3) - (3.0 * 0.09 - 2.0 * 0.027)).abs() < 1e-12);
    }

    struct Stepped;
    impl Cdf for Stepped {
        fn cdf(&self, x: f64) -> f64 {
            // Flat at 0.5 on [0.4, 0.6].
            if x < 0.4 {
                x / 0.8
            } else if x <= 0.6 {
                0.5
            } else {
                0.5 + (x - 0.6) / 0.8
            }
            .clamp(0.0, 1.0)
        }
        fn support(&self) -> (f64, f64) {
            (0.0, 1.0)
        }
    }

    #[test]
    fn flat_cdf_is_non_invertible() {
        assert!(matches!(quantile(&Stepped, 0.5), Err(Error::NonInvertible(_))));
        assert!(quantile(&Stepped, 0.25).is_ok());
    }

    #[test]
    fn quantile_rejects_out_of_range() {
        assert!(quantile(&AbilityDist::Uniform, 1.5).is_err());
    }

    #[test]
    fn effort_cost_ordering() {
        let e = EffortCost::default();
        for i in 0..=100 {
            let th = i as f64 / 100.0;
            assert!(e.cost(Qualification::U, th) > e.cost(Qualification::Q, th));
        }
    }

    #[test]
    fn qualification_prob_shape() {
        let q = QualProb::default();
        assert_eq!(q.prob(0.0), 0.0);
        assert_eq!(q.prob(f64::INFINITY), 1.0);
        assert!(q.prob(0.3) < q.prob(0.4) && q.prob(10.0) <= 1.0);
    }

    #[test]
    fn default_forms_validate() {
        assert!(FunctionalForms::default().validate().is_ok());
        let mut f = FunctionalForms::default();
        f.effort_cost.kappa_u = 0.05;
        assert!(matches!(f.validate(), Err(Error::OrderingViolation(_))));
    }

    #[test]
    fn cost_inverses_match_bisection() {
        let c = InvestCost { beta: 1.5, theta0: 0.1 };
        let b = Bisection::default();
        let eta = c.investment_at(0.3, 0.5, 0.8);
        let eta_bis = b.solve(|e| c.cost(0.3, 0.5, e) - 0.8, 0.0, 10.0).unwrap();
        assert!((eta - eta_bis).abs() < 1e-9);
        let th = c.ability_at(0.3, 0.4, 0.8);
        let th_bis = b.solve(|t| c.cost(0.3, t, 0.4) - 0.8, 0.0, 1.0).unwrap();
        assert!((th - th_bis).abs() < 1e-9);
        let e = EffortCost::default();
        let th = e.ability_at(Qualification::U, 0.5);
        let th_bis = b.solve(|t| e.cost(Qualification::U, t) - 0.5, 0.0, 1.0).unwrap();
        assert!((th - th_bis).abs() < 1e-9);
    }

    proptest! {
        #[test]
        fn quantile_round_trip(q in 0.0f64..=1.0, a in 0.5f64..20.0, b in 0.5f64..20.0) {
            for dist in [AbilityDist::Uniform, AbilityDist::Beta { a, b }] {
                let x = quantile(&dist, q).unwrap();
                prop_assert!((dist.cdf(x) - q).abs() < 1e-8);
            }
        }

        #[test]
        fn invest_cost_monotone(theta in 0.0f64..1.0, eta in 0.01f64..5.0, pi in 0.0f64..0.99) {
            let c = InvestCost { beta: 1.5, theta0: 0.1 };
            let h = 1e-3;
            let base = c.cost(pi, theta, eta);
            prop_assert!(c.cost(pi, theta + h, eta) < base);
            prop_assert!(c.cost(pi, theta, eta + h) > base);
            prop_assert!(c.cost(pi + h, theta, eta) < base);
        }

        #[test]
        fn wage_monotone(g1 in 0.0f64..50.0, dg in 0.0f64..10.0) {
            let curve = WageCurve::Exponential { slope: 2.0 };
            let w1 = curve.eval(g1, W_MIN, W_MAX).unwrap();
            let w2 = curve.eval(g1 + dg, W_MIN, W_MAX).unwrap();
            prop_assert!(w1 >= w2);
            prop_assert!((W_MIN..=W_MAX).contains(&w2));
        }
    }
}
