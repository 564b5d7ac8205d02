//! Scenario files: flat `key = value` text with `#` comments.
//!
//! ```text
//! # parity run with a steeper wage curve
//! regime = parity
//! form.wage.slope = 3
//! init.g_B = 0.2
//! init.g_W = 0.8
//! ```
//!
//! Unknown keys and malformed values are errors carrying the line number.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::abm::{AbmSettings, EffortRule};
use crate::dynamics::{DynamicsOptions, ReputationNorm, WageClock};
use crate::equilibrium::RunOptions;
use crate::error::{Error, Result};
use crate::forms::{AbilityDist, WageCurve};
use crate::params::Model;
use crate::plm::DeltaSchedule;
use crate::tlm::{HiringRegime, PriorMode, StatDisc};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RegimeKind {
    #[default]
    Parity,
    Blind,
    Statdisc,
}

/// A complete run description.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub model: Model,
    pub regime: RegimeKind,
    pub statdisc: StatDisc,
    pub dynamics: DynamicsOptions,
    pub init_g: [f64; 2],
    pub schedule: DeltaSchedule,
    pub abm: AbmSettings,
    pub dp_state_budget: usize,
    pub run: RunOptions,
}

impl Default for Scenario {
    fn default() -> Self {
        Self {
            model: Model::default(),
            regime: RegimeKind::Parity,
            statdisc: StatDisc::default(),
            dynamics: DynamicsOptions::default(),
            init_g: [0.5, 0.5],
            schedule: DeltaSchedule::default(),
            abm: AbmSettings::default(),
            dp_state_budget: 20_000_000,
            run: RunOptions::default(),
        }
    }
}

/// Every accepted key, in echo order.
pub const KEYS: &[&str] = &[
    "sigma_B",
    "ell",
    "m",
    "kappa",
    "lambda_exit",
    "tau",
    "p_H",
    "p_Q",
    "p_U",
    "w_max",
    "w_min",
    "wage_update_prob",
    "horizon_N",
    "form.ability.kind",
    "form.ability.a",
    "form.ability.b",
    "form.cost.beta",
    "form.cost.theta0",
    "form.qual.rate",
    "form.effort.kappa_Q",
    "form.effort.kappa_U",
    "form.effort.theta0",
    "form.wage.kind",
    "form.wage.slope",
    "form.delta.c",
    "regime",
    "statdisc.xi_B",
    "statdisc.xi_W",
    "statdisc.noise",
    "statdisc.cutoff",
    "statdisc.priors",
    "statdisc.eta_max",
    "reputation_norm",
    "wage_clock",
    "init.g_B",
    "init.g_W",
    "abm.n",
    "abm.steps",
    "abm.effort",
    "abm.event_log",
    "dp.state_budget",
    "run.tol",
    "run.max_t",
    "seed",
];

fn num(key: &str, value: &str) -> std::result::Result<f64, String> {
    value
        .parse::<f64>()
        .ok()
        .filter(|v| v.is_finite())
        .ok_or_else(|| format!("invalid number '{value}' for key '{key}'"))
}

fn int<T: std::str::FromStr>(key: &str, value: &str) -> std::result::Result<T, String> {
    value
        .parse::<T>()
        .map_err(|_| format!("invalid integer '{value}' for key '{key}'"))
}

fn choice<T: Copy>(key: &str, value: &str, options: &[(&str, T)]) -> std::result::Result<T, String> {
    options
        .iter()
        .find(|(name, _)| *name == value)
        .map(|(_, v)| *v)
        .ok_or_else(|| {
            let names: Vec<&str> = options.iter().map(|(n, _)| *n).collect();
            format!("invalid value '{value}' for key '{key}' (expected one of {})", names.join(", "))
        })
}

/// Beta parameters remembered while the ability kind is uniform.
fn beta_params(a: &AbilityDist) -> (f64, f64) {
    match *a {
        AbilityDist::Beta { a, b } => (a, b),
        AbilityDist::Uniform => (1.0, 1.0),
    }
}

impl Scenario {
    /// The hiring regime selected by `regime`.
    pub fn hiring_regime(&self) -> HiringRegime {
        match self.regime {
            RegimeKind::Parity => HiringRegime::StatisticalParity,
            RegimeKind::Blind => HiringRegime::GroupBlind,
            RegimeKind::Statdisc => HiringRegime::StatisticalDiscrimination(self.statdisc),
        }
    }

    /// Parses scenario text; `source_name` labels error messages.
    pub fn parse(text: &str, source_name: &str) -> Result<Self> {
        let mut s = Scenario::default();
        for (i, raw) in text.lines().enumerate() {
            let line = i + 1;
            let content = raw.split('#').next().unwrap_or("").trim();
            if content.is_empty() {
                continue;
            }
            let (key, value) = content
                .split_once('=')
                .ok_or_else(|| Error::config(line, format!("expected 'key = value', found '{content}'")))
                .map_err(|e| e.with_source_name(source_name))?;
            s.set(key.trim(), value.trim())
                .map_err(|m| Error::config(line, m).with_source_name(source_name))?;
        }
        s.validate()
            .map_err(|e| Error::config(0, e.to_string()).with_source_name(source_name))?;
        Ok(s)
    }

    /// Reads and parses a scenario file.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Io(format!("cannot read config '{}': {e}", path.display())))?;
        Self::parse(&text, &path.display().to_string())
    }

    /// Applies `key=value` overrides in order, then re-validates.
    pub fn apply_overrides(&mut self, overrides: &[(String, String)]) -> Result<()> {
        for (k, v) in overrides {
            self.set(k, v)
                .map_err(|m| Error::config(0, m).with_source_name("--set"))?;
        }
        self.validate()
            .map_err(|e| Error::config(0, e.to_string()).with_source_name("--set"))
    }

    pub fn validate(&self) -> Result<()> {
        self.model.validate()?;
        self.schedule.validate()?;
        self.statdisc.validate()?;
        for g in self.init_g {
            if !(0.0..=1.0).contains(&g) {
                return Err(Error::RangeViolation(format!("initial g = {g} outside [0, 1]")));
            }
        }
        if !(self.run.tol > 0.0) {
            return Err(Error::RangeViolation("run.tol must be > 0".into()));
        }
        if self.run.max_t < 1 {
            return Err(Error::RangeViolation("run.max_t must be >= 1".into()));
        }
        if self.abm.n < 100 {
            return Err(Error::RangeViolation(format!("abm.n = {} must be >= 100", self.abm.n)));
        }
        Ok(())
    }

    /// Sets one key from its text value.
    pub fn set(&mut self, key: &str, value: &str) -> std::result::Result<(), String> {
        let p = &mut self.model.params;
        let f = &mut self.model.forms;
        match key {
            "sigma_B" => p.sigma_b = num(key, value)?,
            "ell" => p.ell = num(key, value)?,
            "m" => p.m = num(key, value)?,
            "kappa" => p.kappa = num(key, value)?,
            "lambda_exit" => p.lambda_exit = num(key, value)?,
            "tau" => p.tau = int(key, value)?,
            "p_H" => p.p_h = num(key, value)?,
            "p_Q" => p.p_q = num(key, value)?,
            "p_U" => p.p_u = num(key, value)?,
            "w_max" => p.w_max = num(key, value)?,
            "w_min" => p.w_min = num(key, value)?,
            "wage_update_prob" => p.wage_update_prob = num(key, value)?,
            "horizon_N" => p.horizon_n = int(key, value)?,
            "form.ability.kind" => {
                let (a, b) = beta_params(&f.ability);
                f.ability = choice(
                    key,
                    value,
                    &[("uniform", AbilityDist::Uniform), ("beta", AbilityDist::Beta { a, b })],
                )?;
            }
            "form.ability.a" | "form.ability.b" => {
                let (mut a, mut b) = beta_params(&f.ability);
                let v = num(key, value)?;
                if key.ends_with(".a") {
                    a = v;
                } else {
                    b = v;
                }
                f.ability = AbilityDist::Beta { a, b };
            }
            "form.cost.beta" => f.invest_cost.beta = num(key, value)?,
            "form.cost.theta0" => f.invest_cost.theta0 = num(key, value)?,
            "form.qual.rate" => f.qual_prob.rate = num(key, value)?,
            "form.effort.kappa_Q" => f.effort_cost.kappa_q = num(key, value)?,
            "form.effort.kappa_U" => f.effort_cost.kappa_u = num(key, value)?,
            "form.effort.theta0" => f.effort_cost.theta0 = num(key, value)?,
            "form.wage.kind" => {
                let slope = match f.wage_curve {
                    WageCurve::Exponential { slope } => slope,
                    WageCurve::Pinned => 2.0,
                };
                f.wage_curve = choice(
                    key,
                    value,
                    &[
                        ("exponential", WageCurve::Exponential { slope }),
                        ("pinned", WageCurve::Pinned),
                    ],
                )?;
            }
            "form.wage.slope" => {
                let slope = num(key, value)?;
                if let WageCurve::Exponential { .. } = f.wage_curve {
                    f.wage_curve = WageCurve::Exponential { slope };
                } else {
                    return Err("form.wage.slope requires form.wage.kind = exponential".into());
                }
            }
            "form.delta.c" => self.schedule.c = num(key, value)?,
            "regime" => {
                self.regime = choice(
                    key,
                    value,
                    &[
                        ("parity", RegimeKind::Parity),
                        ("blind", RegimeKind::Blind),
                        ("statdisc", RegimeKind::Statdisc),
                    ],
                )?
            }
            "statdisc.xi_B" => self.statdisc.xi_b = num(key, value)?,
            "statdisc.xi_W" => self.statdisc.xi_w = num(key, value)?,
            "statdisc.noise" => self.statdisc.noise = num(key, value)?,
            "statdisc.cutoff" => self.statdisc.cutoff = num(key, value)?,
            "statdisc.priors" => {
                self.statdisc.priors = choice(
                    key,
                    value,
                    &[
                        ("static", PriorMode::Static),
                        ("self_confirming", PriorMode::SelfConfirming),
                    ],
                )?
            }
            "statdisc.eta_max" => self.statdisc.eta_max = num(key, value)?,
            "reputation_norm" => {
                self.dynamics.norm = choice(
                    key,
                    value,
                    &[("paper", ReputationNorm::Paper), ("per_capita", ReputationNorm::PerCapita)],
                )?
            }
            "wage_clock" => {
                self.dynamics.clock = choice(
                    key,
                    value,
                    &[("deterministic", WageClock::Deterministic), ("random", WageClock::Random)],
                )?
            }
            "init.g_B" => self.init_g[0] = num(key, value)?,
            "init.g_W" => self.init_g[1] = num(key, value)?,
            "abm.n" => self.abm.n = int(key, value)?,
            "abm.steps" => self.abm.steps = int(key, value)?,
            "abm.effort" => {
                self.abm.effort = choice(
                    key,
                    value,
                    &[("stationary", EffortRule::Stationary), ("dp", EffortRule::Dp)],
                )?
            }
            "abm.event_log" => {
                self.abm.event_log = choice(key, value, &[("true", true), ("false", false)])?
            }
            "dp.state_budget" => self.dp_state_budget = int(key, value)?,
            "run.tol" => self.run.tol = num(key, value)?,
            "run.max_t" => self.run.max_t = int(key, value)?,
            "seed" => self.run.seed = int(key, value)?,
            _ => return Err(format!("unknown key '{key}'")),
        }
        Ok(())
    }

    /// Text value of one key, in a form `set` accepts back.
    pub fn get(&self, key: &str) -> Option<String> {
        let p = &self.model.params;
        let f = &self.model.forms;
        let (a, b) = beta_params(&f.ability);
        let v = match key {
            "sigma_B" => p.sigma_b.to_string(),
            "ell" => p.ell.to_string(),
            "m" => p.m.to_string(),
            "kappa" => p.kappa.to_string(),
            "lambda_exit" => p.lambda_exit.to_string(),
            "tau" => p.tau.to_string(),
            "p_H" => p.p_h.to_string(),
            "p_Q" => p.p_q.to_string(),
            "p_U" => p.p_u.to_string(),
            "w_max" => p.w_max.to_string(),
            "w_min" => p.w_min.to_string(),
            "wage_update_prob" => p.wage_update_prob.to_string(),
            "horizon_N" => p.horizon_n.to_string(),
            "form.ability.kind" => match f.ability {
                AbilityDist::Uniform => "uniform".into(),
                AbilityDist::Beta { .. } => "beta".into(),
            },
            "form.ability.a" => a.to_string(),
            "form.ability.b" => b.to_string(),
            "form.cost.beta" => f.invest_cost.beta.to_string(),
            "form.cost.theta0" => f.invest_cost.theta0.to_string(),
            "form.qual.rate" => f.qual_prob.rate.to_string(),
            "form.effort.kappa_Q" => f.effort_cost.kappa_q.to_string(),
            "form.effort.kappa_U" => f.effort_cost.kappa_u.to_string(),
            "form.effort.theta0" => f.effort_cost.theta0.to_string(),
            "form.wage.kind" => match f.wage_curve {
                WageCurve::Exponential { .. } => "exponential".into(),
                WageCurve::Pinned => "pinned".into(),
            },
            "form.wage.slope" => match f.wage_curve {
                WageCurve::Exponential { slope } => slope.to_string(),
                WageCurve::Pinned => "none".into(),
            },
            "form.delta.c" => self.schedule.c.to_string(),
            "regime" => match self.regime {
                RegimeKind::Parity => "parity".into(),
                RegimeKind::Blind => "blind".into(),
                RegimeKind::Statdisc => "statdisc".into(),
            },
            "statdisc.xi_B" => self.statdisc.xi_b.to_string(),
            "statdisc.xi_W" => self.statdisc.xi_w.to_string(),
            "statdisc.noise" => self.statdisc.noise.to_string(),
            "statdisc.cutoff" => self.statdisc.cutoff.to_string(),
            "statdisc.priors" => match self.statdisc.priors {
                PriorMode::Static => "static".into(),
                PriorMode::SelfConfirming => "self_confirming".into(),
            },
            "statdisc.eta_max" => self.statdisc.eta_max.to_string(),
            "reputation_norm" => match self.dynamics.norm {
                ReputationNorm::Paper => "paper".into(),
                ReputationNorm::PerCapita => "per_capita".into(),
            },
            "wage_clock" => match self.dynamics.clock {
                WageClock::Deterministic => "deterministic".into(),
                WageClock::Random => "random".into(),
            },
            "init.g_B" => self.init_g[0].to_string(),
            "init.g_W" => self.init_g[1].to_string(),
            "abm.n" => self.abm.n.to_string(),
            "abm.steps" => self.abm.steps.to_string(),
            "abm.effort" => match self.abm.effort {
                EffortRule::Stationary => "stationary".into(),
                EffortRule::Dp => "dp".into(),
            },
            "abm.event_log" => self.abm.event_log.to_string(),
            "dp.state_budget" => self.dp_state_budget.to_string(),
            "run.tol" => self.run.tol.to_string(),
            "run.max_t" => self.run.max_t.to_string(),
            "seed" => self.run.seed.to_string(),
            _ => return None,
        };
        Some(v)
    }

    /// Every key with its effective value.
    pub fn effective(&self) -> BTreeMap<String, String> {
        KEYS.iter()
            .map(|k| (k.to_string(), self.get(k).expect("every listed key has a value")))
            .collect()
    }

    /// Renders the scenario back to config text.
    pub fn to_config_text(&self) -> String {
        let mut out = String::new();
        for k in KEYS {
            let v = self.get(k).expect("every listed key has a value");
            if *k == "form.wage.slope" && v == "none" {
                continue;
            }
            if (*k == "form.ability.a" || *k == "form.ability.b")
                && matches!(self.model.forms.ability, AbilityDist::Uniform)
            {
                continue;
            }
            out.push_str(&format!("{k} = {v}\n"));
        }
        out
    }
}

/// Splits `key=value`.
pub fn parse_assignment(s: &str) -> Result<(String, String)> {
    s.split_once('=')
        .map(|(k, v)| (k.trim().to_string(), v.trim().to_string()))
        .ok_or_else(|| Error::config(0, format!("expected key=value, found '{s}'")).with_source_name("--set"))
}
