//! Scalar model parameters and their validation.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::forms::FunctionalForms;

/// The two social groups.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Group {
    B,
    W,
}

impl Group {
    pub const ALL: [Group; 2] = [Group::B, Group::W];

    pub fn index(self) -> usize {
        match self {
            Group::B => 0,
            Group::W => 1,
        }
    }

    pub fn other(self) -> Group {
        match self {
            Group::B => Group::W,
            Group::W => Group::B,
        }
    }
}

/// Hidden qualification type.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Qualification {
    Q,
    U,
}

impl Qualification {
    pub const ALL: [Qualification; 2] = [Qualification::Q, Qualification::U];
}

/// All scalar parameters of the market.
///
/// `p_h` is the good-outcome probability under high effort for either
/// qualification; `p_q` and `p_u` are the low-effort probabilities for
/// qualified and unqualified workers.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    pub sigma_b: f64,
    pub ell: f64,
    pub m: f64,
    pub kappa: f64,
    pub lambda_exit: f64,
    pub tau: usize,
    pub p_h: f64,
    pub p_q: f64,
    pub p_u: f64,
    pub w_max: f64,
    pub w_min: f64,
    pub wage_update_prob: f64,
    pub horizon_n: usize,
}

impl Default for ModelParams {
    fn default() -> Self {
        Self {
            sigma_b: 0.5,
            ell: 0.5,
            m: 0.5,
            kappa: 0.1,
            lambda_exit: 0.05,
            tau: 5,
            p_h: 0.9,
            p_q: 0.6,
            p_u: 0.3,
            w_max: 1.0,
            w_min: 0.2,
            wage_update_prob: 0.1,
            horizon_n: 50,
        }
    }
}

fn open_unit(name: &str, v: f64) -> Result<()> {
    if v > 0.0 && v < 1.0 {
        Ok(())
    } else {
        Err(Error::RangeViolation(format!("{name} = {v} must lie in (0, 1)")))
    }
}

impl ModelParams {
    /// Population share of `group`.
    pub fn share(&self, group: Group) -> f64 {
        match group {
            Group::B => self.sigma_b,
            Group::W => 1.0 - self.sigma_b,
        }
    }

    /// Low-effort good-outcome probability for a qualification.
    pub fn p_low(&self, rho: Qualification) -> f64 {
        match rho {
            Qualification::Q => self.p_q,
            Qualification::U => self.p_u,
        }
    }

    /// Checks every invariant, reporting the first violation in field order.
    pub fn validate(&self) -> Result<()> {
        open_unit("sigma_B", self.sigma_b)?;
        open_unit("ell", self.ell)?;
        open_unit("m", self.m)?;
        if !(self.kappa > 0.0 && self.kappa.is_finite()) {
            return Err(Error::RangeViolation(format!("kappa = {} must be > 0", self.kappa)));
        }
        if !(self.lambda_exit > 0.0 && self.lambda_exit.is_finite()) {
            return Err(Error::RangeViolation(format!(
                "lambda_exit = {} must be > 0",
                self.lambda_exit
            )));
        }
        if self.tau < 1 {
            return Err(Error::RangeViolation("tau must be >= 1".into()));
        }
        open_unit("p_H", self.p_h)?;
        open_unit("p_Q", self.p_q)?;
        open_unit("p_U", self.p_u)?;
        if !(self.w_max > 0.0 && self.w_max.is_finite()) {
            return Err(Error::RangeViolation(format!("w_max = {} must be > 0", self.w_max)));
        }
        if !(self.w_min >= 0.0) {
            return Err(Error::RangeViolation(format!("w_min = {} must be >= 0", self.w_min)));
        }
        if !(self.wage_update_prob > 0.0 && self.wage_update_prob <= 1.0) {
            return Err(Error::RangeViolation(format!(
                "wage_update_prob = {} must lie in (0, 1]",
                self.wage_update_prob
            )));
        }
        if self.horizon_n < 1 {
            return Err(Error::RangeViolation("horizon_N must be >= 1".into()));
        }
        if !(self.p_h > self.p_q) {
            return Err(Error::OrderingViolation(format!(
                "p_H = {} must exceed p_Q = {}",
                self.p_h, self.p_q
            )));
        }
        if !(self.p_q > self.p_u) {
            return Err(Error::OrderingViolation(format!(
                "p_Q = {} must exceed p_U = {}",
                self.p_q, self.p_u
            )));
        }
        if !(self.w_max > self.w_min) {
            return Err(Error::OrderingViolation(format!(
                "w_max = {} must exceed w_min = {}",
                self.w_max, self.w_min
            )));
        }
        Ok(())
    }
}

/// Parameters together with the functional forms they are used with.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct Model {
    pub params: ModelParams,
    pub forms: FunctionalForms,
}

impl Model {
    pub fn new(params: ModelParams, forms: FunctionalForms) -> Self {
        Self { params, forms }
    }

    pub fn validate(&self) -> Result<()> {
        self.params.validate()?;
        self.forms.validate()
    }

    /// Wage premium at good-worker supply `g`.
    pub fn wage(&self, g: f64) -> Result<f64> {
        self.forms
            .wage_curve
            .eval(g, self.params.w_min, self.params.w_max)
    }
}
