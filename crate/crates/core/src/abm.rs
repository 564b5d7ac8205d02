//! Seeded agent-level simulation of the same market, plus the Monte Carlo
//! check of the PLM hiring rule's enforceability.

use std::collections::{HashMap, VecDeque};
use std::io::Write;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dynamics::{reputation, DynamicsOptions, StepRecord, WageClock, TRAJECTORY_HEADER};
use crate::error::{Error, Result};
use crate::forms::{quantile, AbilityDist};
use crate::params::{Group, Model, Qualification};
use crate::plm::{
    effort_cutoffs, lil_bound, plm_hire, solve_dp, stationary_effort, DeltaSchedule, DpOptions, Effort,
    ReputationState, ValueTable,
};
use crate::tlm::{invest_decision, HiringRegime, Investment};

/// Effort rule used by PLM agents.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EffortRule {
    /// High effort iff `e_rho(theta) <= w (p_H - p_rho)`.
    #[default]
    Stationary,
    /// Receding-horizon play of the worker's dynamic program.
    Dp,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AbmSettings {
    pub n: usize,
    pub steps: u64,
    pub effort: EffortRule,
    pub event_log: bool,
}

impl Default for AbmSettings {
    fn default() -> Self {
        Self {
            n: 10_000,
            steps: 500,
            effort: EffortRule::Stationary,
            event_log: false,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Location {
    PreTlm,
    Tlm,
    Plm,
    Exited,
    Excluded,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WorkerAgent {
    pub id: u64,
    pub group: Group,
    pub theta: f64,
    pub rho: Option<Qualification>,
    pub location: Location,
    pub reputation: ReputationState,
    pub eta: f64,
}

impl WorkerAgent {
    fn in_pipeline(&self) -> bool {
        matches!(self.location, Location::Tlm | Location::Plm)
    }
}

/// Macro state the simulation starts from.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AbmStart {
    pub g: [f64; 2],
    pub mass: [f64; 2],
    pub w: f64,
}

impl AbmStart {
    /// Initial outcome shares with parity masses and the wage they imply.
    pub fn from_init_g(model: &Model, g: [f64; 2]) -> Result<Self> {
        let p = &model.params;
        let mass = [p.share(Group::B) * p.ell, p.share(Group::W) * p.ell];
        let w = model.wage(mass[0] * g[0] + mass[1] * g[1])?;
        Ok(Self { g, mass, w })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    pub n: usize,
    pub seed: u64,
    pub steps: u64,
    pub model: Model,
    pub regime: HiringRegime,
    pub dynamics: DynamicsOptions,
    pub schedule: DeltaSchedule,
    pub effort: EffortRule,
    pub event_log: bool,
    pub start: AbmStart,
}

impl SimConfig {
    /// Flow rates are per-step probabilities and must lie in `[0, 1)`; zero
    /// rates are allowed here to freeze the population.
    pub fn validate(&self) -> Result<()> {
        let mut p = self.model.params.clone();
        for (name, rate) in [("kappa", p.kappa), ("lambda_exit", p.lambda_exit)] {
            if !(0.0..1.0).contains(&rate) {
                return Err(Error::RangeViolation(format!(
                    "{name} = {rate} must lie in [0, 1) for the agent simulation"
                )));
            }
        }
        p.kappa = 0.5;
        p.lambda_exit = 0.5;
        p.validate()?;
        self.model.forms.validate()?;
        self.regime.validate()?;
        self.schedule.validate()?;
        if self.n < 100 {
            return Err(Error::RangeViolation(format!("n = {} must be >= 100", self.n)));
        }
        Ok(())
    }
}

/// One step of empirical aggregates.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AbmRow {
    pub t: u64,
    pub g: [f64; 2],
    pub pi: [f64; 2],
    /// Qualified share among each group's pipeline workers.
    pub gamma: [f64; 2],
    pub w: f64,
    pub eta_hat: [f64; 2],
    /// Group B share of the pipeline.
    pub k_b: f64,
    pub pipeline: [usize; 2],
    pub population: [usize; 2],
    /// Share of PLM workers passing the hiring rule this step.
    pub plm_hire_rate: f64,
    pub wage_updated: bool,
}

impl AbmRow {
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
            self.eta_hat[0],
            self.eta_hat[1],
            self.k_b
        )
    }
}

pub fn write_abm_csv<W: Write>(rows: &[AbmRow], mut out: W) -> Result<()> {
    writeln!(out, "{TRAJECTORY_HEADER}")?;
    for r in rows {
        writeln!(out, "{}", r.csv_row())?;
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AbmSummary {
    pub steps: u64,
    /// Mean outcome share per group over the second half of the run.
    pub mean_g: [f64; 2],
    pub mean_plm_hire_rate: f64,
    pub final_population: [usize; 2],
    pub final_pipeline: [usize; 2],
    pub births: u64,
    pub wage_updates: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AbmOutput {
    pub rows: Vec<AbmRow>,
    pub summary: AbmSummary,
    /// `t,agent_id,event,payload` lines when the event log is enabled.
    pub events: Vec<String>,
}

/// Inverse-CDF ability draw.
fn draw_ability(f: &AbilityDist, rng: &mut ChaCha8Rng) -> Result<f64> {
    let u: f64 = rng.gen();
    match f {
        AbilityDist::Uniform => Ok(u),
        _ => quantile(f, u),
    }
}

fn bernoulli(rng: &mut ChaCha8Rng, p: f64) -> bool {
    rng.gen::<f64>() < p
}

struct DpCache {
    tables: HashMap<(u32, Qualification, u64), ValueTable>,
    opts: DpOptions,
}

const DP_THETA_BINS: f64 = 100.0;

impl DpCache {
    fn effort(
        &mut self,
        model: &Model,
        schedule: &DeltaSchedule,
        agent: &WorkerAgent,
        rho: Qualification,
        w: f64,
    ) -> Result<Effort> {
        let n = agent.reputation.length as usize;
        let bin = (agent.theta * DP_THETA_BINS).floor().min(DP_THETA_BINS - 1.0) as u32;
        let key = (bin, rho, w.to_bits());
        if !self.tables.contains_key(&key) {
            let theta = (bin as f64 + 0.5) / DP_THETA_BINS;
            let table = solve_dp(model, theta, rho, w, schedule, &self.opts)?;
            self.tables.insert(key, table);
        }
        let table = &self.tables[&key];
        let k = table.horizon;
        if table.covers(k, n) {
            Ok(table.effort(k, n, agent.reputation.successes as usize))
        } else {
            Ok(stationary_effort(model, agent.theta, rho, w))
        }
    }
}

struct World<'a> {
    cfg: &'a SimConfig,
    rng: ChaCha8Rng,
    agents: Vec<WorkerAgent>,
    next_id: u64,
    events: Vec<String>,
    births: u64,
}

impl World<'_> {
    fn log(&mut self, t: u64, id: Option<u64>, event: &str, payload: String) {
        if self.cfg.event_log {
            let id = id.map_or_else(|| "-".to_string(), |i| i.to_string());
            self.events.push(format!("{t},{id},{event},{payload}"));
        }
    }

    fn newborn(&mut self, group: Group) -> Result<WorkerAgent> {
        let theta = draw_ability(&self.cfg.model.forms.ability, &mut self.rng)?;
        let id = self.next_id;
        self.next_id += 1;
        Ok(WorkerAgent {
            id,
            group,
            theta,
            rho: None,
            location: Location::PreTlm,
            reputation: ReputationState::default(),
            eta: 0.0,
        })
    }

    fn draw_qualification(&mut self, eta: f64) -> Qualification {
        if bernoulli(&mut self.rng, self.cfg.model.forms.qual_prob.prob(eta)) {
            Qualification::Q
        } else {
            Qualification::U
        }
    }
}

fn wage_period(q: f64) -> u64 {
    ((1.0 / q).ceil() as u64).max(1)
}

/// Runs the agent simulation. Identical configurations produce identical output.
pub fn simulate(cfg: &SimConfig) -> Result<AbmOutput> {
    cfg.validate()?;
    let model = &cfg.model;
    let p = &model.params;
    let norm = cfg.dynamics.norm;
    let window = p.tau + 1;
    let mut world = World {
        cfg,
        rng: ChaCha8Rng::seed_from_u64(cfg.seed),
        agents: Vec::with_capacity(cfg.n),
        next_id: 0,
        events: Vec::new(),
        births: 0,
    };

    let mut g_hist: [VecDeque<f64>; 2] = [
        VecDeque::from(vec![cfg.start.g[0]; window]),
        VecDeque::from(vec![cfg.start.g[1]; window]),
    ];
    let mut m_hist: [VecDeque<f64>; 2] = [
        VecDeque::from(vec![cfg.start.mass[0]; window]),
        VecDeque::from(vec![cfg.start.mass[1]; window]),
    ];
    let pi_of = |g_hist: &[VecDeque<f64>; 2], m_hist: &[VecDeque<f64>; 2]| {
        let mut pi = [0.0; 2];
        for g in Group::ALL {
            let i = g.index();
            pi[i] = reputation(g_hist[i].iter().zip(m_hist[i].iter()), p.share(g), norm);
        }
        pi
    };
    let mut w = cfg.dynamics.fixed_wage.unwrap_or(cfg.start.w);

    // Initial population: hired workers split between TLM and PLM in
    // proportion `m`, the rest excluded.
    let n_b = ((p.sigma_b * cfg.n as f64).round() as usize).clamp(1, cfg.n - 1);
    let pi0 = pi_of(&g_hist, &m_hist);
    let t0 = cfg.regime.thresholds(model, pi0, w)?;
    for i in 0..cfg.n {
        let group = if i < n_b { Group::B } else { Group::W };
        let mut a = world.newborn(group)?;
        match invest_decision(model, a.theta, group, &t0, pi0[group.index()], w) {
            Investment::Invest(eta) => {
                a.eta = eta;
                a.rho = Some(world.draw_qualification(eta));
                a.location = if bernoulli(&mut world.rng, p.m) {
                    Location::Tlm
                } else {
                    Location::Plm
                };
            }
            Investment::Abstain => a.location = Location::Excluded,
        }
        world.agents.push(a);
    }

    let mut dp_cache = DpCache {
        tables: HashMap::new(),
        opts: DpOptions {
            horizon: p.horizon_n,
            start_lengths: 4 * wage_period(p.wage_update_prob) as usize,
            state_budget: 20_000_000,
        },
    };
    let mut rows = Vec::with_capacity(cfg.steps as usize);
    let mut wage_updates = 0u64;
    let period = wage_period(p.wage_update_prob);

    for t in 1..=cfg.steps {
        let pi = pi_of(&g_hist, &m_hist);
        let thresholds = cfg.regime.thresholds(model, pi, w)?;

        // Flows: entry decisions, promotions, exits with same-group births.
        for idx in 0..world.agents.len() {
            let loc = world.agents[idx].location;
            match loc {
                Location::PreTlm => {
                    let (theta, group, id) = {
                        let a = &world.agents[idx];
                        (a.theta, a.group, a.id)
                    };
                    match invest_decision(model, theta, group, &thresholds, pi[group.index()], w) {
                        Investment::Invest(eta) => {
                            let rho = world.draw_qualification(eta);
                            let a = &mut world.agents[idx];
                            a.eta = eta;
                            a.rho = Some(rho);
                            a.location = Location::Tlm;
                            world.log(t, Some(id), "invest", format!("{eta};{rho:?}"));
                        }
                        Investment::Abstain => {
                            world.agents[idx].location = Location::Excluded;
                            world.log(t, Some(id), "exclude", String::new());
                        }
                    }
                }
                Location::Tlm => {
                    if bernoulli(&mut world.rng, p.kappa) {
                        let id = world.agents[idx].id;
                        let a = &mut world.agents[idx];
                        a.location = Location::Plm;
                        a.reputation.reset();
                        world.log(t, Some(id), "promote", String::new());
                    }
                }
                Location::Plm | Location::Excluded => {
                    if bernoulli(&mut world.rng, p.lambda_exit) {
                        let (group, id) = (world.agents[idx].group, world.agents[idx].id);
                        world.agents[idx].location = Location::Exited;
                        let baby = world.newborn(group)?;
                        world.log(t, Some(id), "exit", format!("replaced_by={}", baby.id));
                        world.agents[idx] = baby;
                        world.births += 1;
                    }
                }
                Location::Exited => {}
            }
        }

        // Outcomes for every pipeline worker.
        let mut good = [0usize; 2];
        let mut total = [0usize; 2];
        let mut qualified = [0usize; 2];
        let mut plm_seen = 0usize;
        let mut plm_hired = 0usize;
        for idx in 0..world.agents.len() {
            if !world.agents[idx].in_pipeline() {
                continue;
            }
            let a = world.agents[idx].clone();
            let rho = a.rho.expect("pipeline workers have a qualification");
            let effort = match (cfg.effort, a.location) {
                (EffortRule::Dp, Location::Plm) => dp_cache.effort(model, &cfg.schedule, &a, rho, w)?,
                _ => stationary_effort(model, a.theta, rho, w),
            };
            let p_good = match effort {
                Effort::H => p.p_h,
                Effort::L => p.p_low(rho),
            };
            let outcome = bernoulli(&mut world.rng, p_good);
            let i = a.group.index();
            total[i] += 1;
            good[i] += outcome as usize;
            qualified[i] += (rho == Qualification::Q) as usize;
            if a.location == Location::Plm {
                plm_seen += 1;
                plm_hired += plm_hire(&a.reputation, p.p_h, &cfg.schedule) as usize;
                world.agents[idx].reputation.record(outcome);
            }
        }

        let mut g_hat = [0.0; 2];
        let mut gamma_hat = [0.0; 2];
        for i in 0..2 {
            g_hat[i] = if total[i] > 0 {
                good[i] as f64 / total[i] as f64
            } else {
                *g_hist[i].back().expect("window is never empty")
            };
            gamma_hat[i] = if total[i] > 0 {
                qualified[i] as f64 / total[i] as f64
            } else {
                0.0
            };
            g_hist[i].pop_front();
            m_hist[i].pop_front();
            g_hist[i].push_back(g_hat[i]);
            m_hist[i].push_back(thresholds.mass(if i == 0 { Group::B } else { Group::W }));
        }
        let g_agg = thresholds.mass_b * g_hat[0] + thresholds.mass_w * g_hat[1];

        let w_in_force = w;
        let fires = match (cfg.dynamics.fixed_wage, cfg.dynamics.clock) {
            (Some(_), _) => false,
            (None, WageClock::Deterministic) => t % period == 0,
            (None, WageClock::Random) => bernoulli(&mut world.rng, p.wage_update_prob),
        };
        if fires {
            w = model.wage(g_agg)?;
            wage_updates += 1;
            for a in world.agents.iter_mut() {
                a.reputation.reset();
            }
            world.log(t, None, "wage_update", format!("{w}"));
        }

        let pipeline_total = total[0] + total[1];
        let population = [n_b, cfg.n - n_b];
        rows.push(AbmRow {
            t,
            g: g_hat,
            pi,
            gamma: gamma_hat,
            w: w_in_force,
            eta_hat: [thresholds.eta_hat_b, thresholds.eta_hat_w],
            k_b: if pipeline_total > 0 {
                total[0] as f64 / pipeline_total as f64
            } else {
                0.0
            },
            pipeline: total,
            population,
            plm_hire_rate: if plm_seen > 0 {
                plm_hired as f64 / plm_seen as f64
            } else {
                1.0
            },
            wage_updated: fires,
        });
    }

    let half = &rows[rows.len() / 2..];
    let denom = half.len().max(1) as f64;
    let mean_g = [
        half.iter().map(|r| r.g[0]).sum::<f64>() / denom,
        half.iter().map(|r| r.g[1]).sum::<f64>() / denom,
    ];
    let mut final_population = [0usize; 2];
    let mut final_pipeline = [0usize; 2];
    for a in &world.agents {
        final_population[a.group.index()] += 1;
        final_pipeline[a.group.index()] += a.in_pipeline() as usize;
    }
    let summary = AbmSummary {
        steps: cfg.steps,
        mean_g,
        mean_plm_hire_rate: half.iter().map(|r| r.plm_hire_rate).sum::<f64>() / denom,
        final_population,
        final_pipeline,
        births: world.births,
        wage_updates,
    };
    Ok(AbmOutput {
        rows,
        summary,
        events: world.events,
    })
}

/// Largest share of steps at which an agent run falls outside
/// `3 sqrt(g (1 - g) / n_mu)` of reference outcome shares.
pub fn within_binomial_band(rows: &[AbmRow], reference: &[[f64; 2]]) -> f64 {
    let mut inside = 0usize;
    let mut checked = 0usize;
    for (r, g_ref) in rows.iter().zip(reference.iter()) {
        for i in 0..2 {
            if r.pipeline[i] == 0 {
                continue;
            }
            let se = (g_ref[i] * (1.0 - g_ref[i]) / r.pipeline[i] as f64).sqrt();
            checked += 1;
            inside += ((r.g[i] - g_ref[i]).abs() <= 3.0 * se) as usize;
        }
    }
    if checked == 0 {
        0.0
    } else {
        inside as f64 / checked as f64
    }
}

/// Mean-field reference for an agent run: the deterministic outcome shares
/// of each logged step, with the agent run's own reputations and wage.
pub fn deterministic_reference(model: &Model, regime: &HiringRegime, rows: &[AbmRow]) -> Result<Vec<[f64; 2]>> {
    use crate::dynamics::{effort_shares, group_outcome};
    rows.iter()
        .map(|r| {
            let t = regime.thresholds(model, r.pi, r.w)?;
            let cut = effort_cutoffs(model, r.w);
            let mut out = [0.0; 2];
            for g in Group::ALL {
                let gamma = model.forms.qual_prob.prob(t.eta_hat(g));
                let (lq, lu) = effort_shares(&model.forms.ability, &cut, t.theta_star(g));
                out[g.index()] = group_outcome(gamma, lq, lu, &model.params);
            }
            Ok(out)
        })
        .collect()
}

/// Converts deterministic step records to the reference format.
pub fn reference_from_records(records: &[StepRecord]) -> Vec<[f64; 2]> {
    records.iter().map(|r| r.g).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LilConfig {
    pub p_h: f64,
    /// Good-outcome probability of the always-low-effort worker.
    pub p_low: f64,
    pub steps: u32,
    pub replicas: usize,
    pub seed: u64,
    pub schedule: DeltaSchedule,
    /// History length at which the always-low worker is checked.
    pub check_length: u32,
}

impl Default for LilConfig {
    fn default() -> Self {
        Self {
            p_h: 0.9,
            p_low: 0.5,
            steps: 1000,
            replicas: 10_000,
            seed: 0,
            schedule: DeltaSchedule::default(),
            check_length: 50,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LilRow {
    pub tau: u32,
    pub lil_bound: f64,
    pub delta: f64,
    /// Share of always-high replicas with `|Pi - p_H|` above the bound.
    pub exceedance: f64,
    /// Share of always-high replicas failing the hiring rule at this length.
    pub rejection: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LilReport {
    pub config: LilConfig,
    pub rows: Vec<LilRow>,
    /// Share of all periods (history lengths `0..steps`) in which always-high
    /// workers were hired.
    pub always_high_hire_rate: f64,
    /// Share of always-low replicas rejected at `check_length`.
    pub always_low_rejected: f64,
}

/// Log-spaced history lengths from 3 up to `steps`.
pub fn log_grid(steps: u32) -> Vec<u32> {
    let mut out = Vec::new();
    let mut decade = 1u32;
    while decade <= steps {
        for m in [1u32, 2, 3, 5] {
            let v = m * decade;
            if (3..=steps).contains(&v) {
                out.push(v);
            }
        }
        decade = match decade.checked_mul(10) {
            Some(d) => d,
            None => break,
        };
    }
    if out.last() != Some(&steps) && steps >= 3 {
        out.push(steps);
    }
    out
}

fn replica_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Monte Carlo of always-high and always-low workers under the hiring rule.
pub fn lil_experiment(cfg: &LilConfig) -> Result<LilReport> {
    if cfg.replicas < 1000 {
        return Err(Error::RangeViolation(format!(
            "replicas = {} must be >= 1000",
            cfg.replicas
        )));
    }
    for (name, v) in [("p_H", cfg.p_h), ("p_low", cfg.p_low)] {
        if !(0.0..=1.0).contains(&v) {
            return Err(Error::RangeViolation(format!("{name} = {v} outside [0, 1]")));
        }
    }
    cfg.schedule.validate()?;
    let grid = log_grid(cfg.steps);
    let zero = || (0u64, vec![0u64; grid.len()], vec![0u64; grid.len()], 0u64);
    let (hired, exceed, reject, low_rejected) = (0..cfg.replicas as u64)
        .into_par_iter()
        .map(|r| {
            let mut rng = replica_rng(cfg.seed, 2 * r);
            let mut rep = ReputationState::default();
            let mut hired = 0u64;
            let mut exceed = vec![0u64; grid.len()];
            let mut reject = vec![0u64; grid.len()];
            let mut gi = 0;
            for _ in 0..cfg.steps {
                hired += plm_hire(&rep, cfg.p_h, &cfg.schedule) as u64;
                rep.record(rng.gen::<f64>() < cfg.p_h);
                if gi < grid.len() && rep.length == grid[gi] {
                    let dev = (rep.value() - cfg.p_h).abs();
                    exceed[gi] += (dev > lil_bound(rep.length)) as u64;
                    reject[gi] += (!plm_hire(&rep, cfg.p_h, &cfg.schedule)) as u64;
                    gi += 1;
                }
            }
            let mut rng = replica_rng(cfg.seed, 2 * r + 1);
            let mut low = ReputationState::default();
            for _ in 0..cfg.check_length {
                low.record(rng.gen::<f64>() < cfg.p_low);
            }
            let low_rej = (!plm_hire(&low, cfg.p_h, &cfg.schedule)) as u64;
            (hired, exceed, reject, low_rej)
        })
        .reduce(zero, |mut a, b| {
            a.0 += b.0;
            for i in 0..a.1.len() {
                a.1[i] += b.1[i];
                a.2[i] += b.2[i];
            }
            a.3 += b.3;
            a
        });
    let n = cfg.replicas as f64;
    let rows = grid
        .iter()
        .enumerate()
        .map(|(i, &tau)| LilRow {
            tau,
            lil_bound: lil_bound(tau),
            delta: cfg.schedule.delta(tau),
            exceedance: exceed[i] as f64 / n,
            rejection: reject[i] as f64 / n,
        })
        .collect();
    Ok(LilReport {
        config: *cfg,
        rows,
        always_high_hire_rate: hired as f64 / (n * cfg.steps as f64),
        always_low_rejected: low_rejected as f64 / n,
    })
}
