//! PLM effort economics: effort cutoffs, reputation-threshold hiring, the
//! forgiveness schedule and the worker's finite-horizon dynamic program.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::forms::Cdf;
use crate::params::{Model, Qualification};

/// Effort level in a PLM period.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Effort {
    H,
    L,
}

/// Abilities below which each qualification exerts low effort.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EffortCutoffs {
    pub theta_hat_q: f64,
    pub theta_hat_u: f64,
}

impl EffortCutoffs {
    pub fn get(&self, rho: Qualification) -> f64 {
        match rho {
            Qualification::Q => self.theta_hat_q,
            Qualification::U => self.theta_hat_u,
        }
    }
}

/// `theta_hat_rho = e_rho^{-1}(w (p_H - p_rho))`, clamped to the ability
/// support: the lower end when everyone works, the upper end when nobody does.
pub fn effort_cutoff(model: &Model, rho: Qualification, w: f64) -> f64 {
    let (lo, hi) = model.forms.ability.support();
    let budget = w * (model.params.p_h - model.params.p_low(rho));
    if budget <= 0.0 {
        return hi;
    }
    model.forms.effort_cost.ability_at(rho, budget).clamp(lo, hi)
}

pub fn effort_cutoffs(model: &Model, w: f64) -> EffortCutoffs {
    EffortCutoffs {
        theta_hat_q: effort_cutoff(model, Qualification::Q, w),
        theta_hat_u: effort_cutoff(model, Qualification::U, w),
    }
}

/// Stationary rule: high effort iff `cost <= w (p_H - p_rho)`.
pub fn one_shot_effort(effort_cost: f64, w: f64, p_h: f64, p_rho: f64) -> Effort {
    if effort_cost <= w * (p_h - p_rho) {
        Effort::H
    } else {
        Effort::L
    }
}

/// [`one_shot_effort`] for a worker of ability `theta` and type `rho`.
pub fn stationary_effort(model: &Model, theta: f64, rho: Qualification, w: f64) -> Effort {
    one_shot_effort(
        model.forms.effort_cost.cost(rho, theta),
        w,
        model.params.p_h,
        model.params.p_low(rho),
    )
}

/// Count of good outcomes over the history since the last wage update.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct ReputationState {
    pub successes: u32,
    pub length: u32,
}

impl ReputationState {
    pub fn new(successes: u32, length: u32) -> Self {
        assert!(successes <= length, "successes exceed history length");
        Self { successes, length }
    }

    /// `Pi = successes / length`, with `Pi = 0` for an empty history.
    pub fn value(&self) -> f64 {
        if self.length == 0 {
            0.0
        } else {
            self.successes as f64 / self.length as f64
        }
    }

    pub fn record(&mut self, good: bool) {
        self.length += 1;
        self.successes += good as u32;
    }

    pub fn reset(&mut self) {
        *self = Self::default();
    }
}

/// `Delta_t = sqrt(0.5 ln ln(t + e) / (t + 1)) + c / (t + 1)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DeltaSchedule {
    pub c: f64,
}

impl Default for DeltaSchedule {
    fn default() -> Self {
        Self { c: 2.0 }
    }
}

impl DeltaSchedule {
    pub fn delta(&self, t: u32) -> f64 {
        let t = t as f64;
        (0.5 * (t + std::f64::consts::E).ln().ln() / (t + 1.0)).sqrt() + self.c / (t + 1.0)
    }

    /// Reputation needed for a PLM hire after `t` outcomes.
    pub fn threshold(&self, t: u32, p_h: f64) -> f64 {
        p_h - self.delta(t)
    }

    /// First `t` with `Delta_t < eps`.
    pub fn first_below(&self, eps: f64) -> u32 {
        let mut t = 0u32;
        while self.delta(t) >= eps {
            t += 1;
        }
        t
    }

    pub fn validate(&self) -> Result<()> {
        if self.c > 0.0 && self.c.is_finite() {
            Ok(())
        } else {
            Err(Error::RangeViolation(format!("form.delta.c = {} must be > 0", self.c)))
        }
    }
}

/// Iterated-logarithm deviation bound `sqrt(0.5 ln ln t / t)`, defined for `t >= 3`.
pub fn lil_bound(t: u32) -> f64 {
    let t = t as f64;
    (0.5 * t.ln().ln() / t).sqrt()
}

/// Hire iff `Pi >= p_H - Delta_t`; fresh histories are always hired.
pub fn plm_hire(rep: &ReputationState, p_h: f64, schedule: &DeltaSchedule) -> bool {
    rep.length == 0 || rep.value() >= schedule.threshold(rep.length, p_h)
}

/// Options for [`solve_dp`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DpOptions {
    /// Look-ahead depth `N`.
    pub horizon: usize,
    /// Largest history length at which a decision with `N` steps left is
    /// tabulated (for receding-horizon play).
    pub start_lengths: usize,
    /// Maximum number of tabulated states.
    pub state_budget: usize,
}

impl DpOptions {
    pub fn new(horizon: usize) -> Self {
        Self {
            horizon,
            start_lengths: 0,
            state_budget: 20_000_000,
        }
    }
}

/// Value and policy of the worker's dynamic program, indexed by
/// `(steps_remaining, length, successes)`.
#[derive(Debug, Clone, PartialEq)]
pub struct ValueTable {
    pub horizon: usize,
    pub max_length: usize,
    pub theta: f64,
    pub rho: Qualification,
    pub w: f64,
    values: Vec<f64>,
    policy: Vec<u8>,
    layer: usize,
    row: usize,
}

impl ValueTable {
    fn index(&self, k: usize, n: usize, s: usize) -> usize {
        k * self.layer + n * self.row + s
    }

    /// Whether `(k, n)` is tabulated.
    pub fn covers(&self, k: usize, n: usize) -> bool {
        k <= self.horizon && n + k <= self.max_length
    }

    pub fn value(&self, k: usize, n: usize, s: usize) -> f64 {
        assert!(self.covers(k, n) && s <= n);
        self.values[self.index(k, n, s)]
    }

    /// Probability of high effort (0 or 1; ties resolve to 1).
    pub fn effort_prob(&self, k: usize, n: usize, s: usize) -> f64 {
        assert!(k >= 1 && self.covers(k, n) && s <= n);
        self.policy[self.index(k, n, s)] as f64
    }

    pub fn effort(&self, k: usize, n: usize, s: usize) -> Effort {
        if self.effort_prob(k, n, s) == 1.0 {
            Effort::H
        } else {
            Effort::L
        }
    }

    /// Number of tabulated states.
    pub fn state_count(&self) -> usize {
        state_count(self.horizon, self.max_length)
    }

    /// Writes `length,successes,steps_remaining,value,effort_prob` rows.
    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "length,successes,steps_remaining,value,effort_prob")?;
        for k in 0..=self.horizon {
            for n in 0..=(self.max_length - k) {
                for s in 0..=n {
                    let eps = if k == 0 { 0.0 } else { self.effort_prob(k, n, s) };
                    writeln!(out, "{n},{s},{k},{},{eps}", self.value(k, n, s))?;
                }
            }
        }
        Ok(())
    }
}

fn state_count(horizon: usize, max_length: usize) -> usize {
    (0..=horizon)
        .map(|k| {
            let n = max_length - k + 1;
            n * (n + 1) / 2
        })
        .sum()
}

/// Per-model constants of the worker's Bellman equation.
#[derive(Debug, Clone, Copy)]
pub struct DpProblem {
    pub effort_cost: f64,
    pub p_h: f64,
    pub p_rho: f64,
    pub survival: f64,
    pub w: f64,
    pub schedule: DeltaSchedule,
}

impl DpProblem {
    pub fn new(model: &Model, theta: f64, rho: Qualification, w: f64, schedule: DeltaSchedule) -> Self {
        Self {
            effort_cost: model.forms.effort_cost.cost(rho, theta),
            p_h: model.params.p_h,
            p_rho: model.params.p_low(rho),
            survival: 1.0 - model.params.lambda_exit,
            w,
            schedule,
        }
    }

    fn reward(&self, n: usize, s: usize) -> f64 {
        let rep = ReputationState::new(s as u32, n as u32);
        if plm_hire(&rep, self.p_h, &self.schedule) {
            self.w
        } else {
            0.0
        }
    }

    /// Values of both actions `(H, L)` given continuation values after G and B.
    fn action_values(&self, n: usize, s: usize, v_good: f64, v_bad: f64) -> (f64, f64) {
        let r = self.reward(n, s);
        let q = |p_g: f64| self.survival * (p_g * v_good + (1.0 - p_g) * v_bad);
        (r - self.effort_cost + q(self.p_h), r + q(self.p_rho))
    }
}

/// Backward induction for a worker of ability `theta` and type `rho` at the
/// frozen wage `w`.
///
/// `V_0 = 0`; each period pays `w` when currently hired, costs the effort
/// cost under high effort, and continues with survival `1 - lambda` to the
/// history extended by the realized outcome.
pub fn solve_dp(
    model: &Model,
    theta: f64,
    rho: Qualification,
    w: f64,
    schedule: &DeltaSchedule,
    opts: &DpOptions,
) -> Result<ValueTable> {
    if opts.horizon < 1 {
        return Err(Error::RangeViolation("horizon_N must be >= 1".into()));
    }
    let max_length = opts.horizon + opts.start_lengths;
    let states = state_count(opts.horizon, max_length);
    if states > opts.state_budget {
        return Err(Error::HorizonTooLarge {
            states,
            budget: opts.state_budget,
        });
    }
    let problem = DpProblem::new(model, theta, rho, w, *schedule);
    let row = max_length + 1;
    let layer = row * row;
    let size = (opts.horizon + 1) * layer;
    let mut table = ValueTable {
        horizon: opts.horizon,
        max_length,
        theta,
        rho,
        w,
        values: vec![0.0; size],
        policy: vec![0; size],
        layer,
        row,
    };
    for k in 1..=opts.horizon {
        for n in 0..=(max_length - k) {
            for s in 0..=n {
                let v_good = table.values[table.index(k - 1, n + 1, s + 1)];
                let v_bad = table.values[table.index(k - 1, n + 1, s)];
                let (h, l) = problem.action_values(n, s, v_good, v_bad);
                let idx = table.index(k, n, s);
                if h >= l {
                    table.values[idx] = h;
                    table.policy[idx] = 1;
                } else {
                    table.values[idx] = l;
                }
            }
        }
    }
    Ok(table)
}

/// Largest violation of the Bellman equation over every tabulated state.
pub fn bellman_residual(model: &Model, table: &ValueTable, schedule: &DeltaSchedule) -> f64 {
    let problem = DpProblem::new(model, table.theta, table.rho, table.w, *schedule);
    let mut worst: f64 = 0.0;
    for k in 0..=table.horizon {
        for n in 0..=(table.max_length - k) {
            for s in 0..=n {
                let v = table.value(k, n, s);
                let target = if k == 0 {
                    0.0
                } else {
                    let (h, l) = problem.action_values(
                        n,
                        s,
                        table.value(k - 1, n + 1, s + 1),
                        table.value(k - 1, n + 1, s),
                    );
                    h.max(l)
                };
                worst = worst.max((v - target).abs());
            }
        }
    }
    worst
}

/// States visited with positive probability when the worker always acts as
/// if `N` steps remained, starting from an empty history, for `steps` periods.
/// Returns `(length, successes, action)` triples.
pub fn on_path_actions(table: &ValueTable, steps: usize) -> Vec<(usize, usize, Effort)> {
    let k = table.horizon;
    assert!(table.covers(k, steps.saturating_sub(1)), "table too short for {steps} steps");
    let mut out = Vec::new();
    let mut frontier = vec![0usize];
    for n in 0..steps {
        let mut next = vec![false; n + 2];
        for &s in &frontier {
            let a = table.effort(k, n, s);
            out.push((n, s, a));
            next[s] = true;
            next[s + 1] = true;
        }
        frontier = (0..next.len()).filter(|&s| next[s]).collect();
    }
    out
}

/// Exact expected payoff from an empty history of a deterministic Markov
/// policy `policy[(n, s)]` over `horizon` periods.
pub fn evaluate_markov_policy(problem: &DpProblem, horizon: usize, policy: &dyn Fn(usize, usize) -> bool) -> f64 {
    // Forward pass over the reachable distribution of (n, s).
    let mut dist = vec![1.0f64];
    let mut total = 0.0;
    let mut discount = 1.0;
    for n in 0..horizon {
        let mut next = vec![0.0; n + 2];
        for (s, &mass) in dist.iter().enumerate() {
            if mass == 0.0 {
                continue;
            }
            let high = policy(n, s);
            let p_g = if high { problem.p_h } else { problem.p_rho };
            let cost = if high { problem.effort_cost } else { 0.0 };
            total += discount * mass * (problem.reward(n, s) - cost);
            next[s + 1] += mass * p_g;
            next[s] += mass * (1.0 - p_g);
        }
        dist = next;
        discount *= problem.survival;
    }
    total
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::root::Bisection;

    fn model() -> Model {
        Model::default()
    }

    #[test]
    fn closed_form_effort_cutoff() {
        let m = model();
        let w = 0.8;
        let got = effort_cutoff(&m, Qualification::Q, w);
        let closed = 0.1 / (w * (0.9 - 0.6)) - 0.1;
        assert!((got - closed).abs() < 1e-9);
        let bis = Bisection::default()
            .solve(|t| 0.1 / (t + 0.1) - w * 0.3, 0.0, 1.0)
            .unwrap();
        assert!((got - bis).abs() < 1e-9);
    }

    #[test]
    fn everyone_works_when_cost_is_low() {
        let mut m = model();
        m.forms.effort_cost.kappa_q = 0.001;
        assert_eq!(effort_cutoff(&m, Qualification::Q, 1.0), 0.0);
    }

    #[test]
    fn zero_wage_means_low_effort() {
        let m = model();
        let c = effort_cutoffs(&m, 0.0);
        assert_eq!(c.theta_hat_q, 1.0);
        assert_eq!(c.theta_hat_u, 1.0);
        assert_eq!(stationary_effort(&m, 1.0, Qualification::Q, 0.0), Effort::L);
    }

    #[test]
    fn qualified_cutoff_below_unqualified() {
        let m = model();
        for w in [0.3, 0.6, 1.0] {
            let c = effort_cutoffs(&m, w);
            assert!(c.theta_hat_q <= c.theta_hat_u);
        }
    }

    #[test]
    fn one_shot_examples() {
        assert_eq!(one_shot_effort(0.3, 1.0, 0.9, 0.5), Effort::H);
        assert_eq!(one_shot_effort(0.5, 1.0, 0.9, 0.5), Effort::L);
        // 0.4 <= 1.0 * (0.9 - 0.5) in binary: both sides computed identically.
        let boundary = 1.0 * (0.9 - 0.5);
        assert_eq!(one_shot_effort(boundary, 1.0, 0.9, 0.5), Effort::H);
    }

    #[test]
    fn delta_above_lil_bound() {
        let d = DeltaSchedule::default();
        let bound = (0.5 * 100f64.ln().ln() / 100.0).sqrt();
        assert!((bound - 0.0874).abs() < 1e-4);
        assert!((lil_bound(100) - bound).abs() < 1e-15);
        assert!(d.delta(100) > bound);
        for t in 3..5000 {
            assert!(d.delta(t) > lil_bound(t), "t = {t}");
        }
    }

    #[test]
    fn delta_is_decreasing() {
        let d = DeltaSchedule::default();
        for t in 0..1000 {
            assert!(d.delta(t) > d.delta(t + 1));
        }
        let t_delta = d.first_below(1e-2);
        assert!(d.delta(t_delta) < 1e-2 && d.delta(t_delta - 1) >= 1e-2);
    }

    #[test]
    fn hiring_examples() {
        let d = DeltaSchedule::default();
        let p_h = 0.9;
        assert!(plm_hire(&ReputationState::new(9, 10), p_h, &d));
        assert!(!plm_hire(&ReputationState::new(0, 500), p_h, &d));
        assert!(plm_hire(&ReputationState::default(), p_h, &d));
        // Weak inequality at the threshold itself.
        let n = 40;
        let thr = d.threshold(n, p_h);
        let below = ReputationState::new(((thr * n as f64).ceil() - 1.0) as u32, n);
        let at = ReputationState::new((thr * n as f64).ceil() as u32, n);
        assert!(!plm_hire(&below, p_h, &d));
        assert!(plm_hire(&at, p_h, &d));
    }

    #[test]
    fn terminal_values_are_zero() {
        let m = model();
        let t = solve_dp(&m, 0.5, Qualification::Q, 1.0, &DeltaSchedule::default(), &DpOptions::new(5)).unwrap();
        for n in 0..=5 {
            for s in 0..=n {
                assert_eq!(t.value(0, n, s), 0.0);
            }
        }
    }

    #[test]
    fn one_period_horizon_is_low_effort() {
        let m = model();
        let t = solve_dp(&m, 0.9, Qualification::Q, 1.0, &DeltaSchedule::default(), &DpOptions::new(1)).unwrap();
        assert_eq!(t.effort(1, 0, 0), Effort::L);
        assert_eq!(t.value(1, 0, 0), 1.0);
    }

    #[test]
    fn bellman_residual_is_tiny() {
        let m = model();
        let d = DeltaSchedule::default();
        let mut opts = DpOptions::new(30);
        opts.start_lengths = 10;
        let t = solve_dp(&m, 0.7, Qualification::U, 0.8, &d, &opts).unwrap();
        assert!(bellman_residual(&m, &t, &d) < 1e-12);
    }

    #[test]
    fn value_nondecreasing_in_successes() {
        let m = model();
        let d = DeltaSchedule::default();
        let t = solve_dp(&m, 0.6, Qualification::Q, 0.9, &d, &DpOptions::new(25)).unwrap();
        for k in 0..=25 {
            for n in 0..=(25 - k) {
                for s in 0..n {
                    assert!(t.value(k, n, s + 1) >= t.value(k, n, s) - 1e-12);
                }
            }
        }
    }

    #[test]
    fn horizon_budget_enforced() {
        let m = model();
        let opts = DpOptions {
            horizon: 50,
            start_lengths: 0,
            state_budget: 100,
        };
        assert!(matches!(
            solve_dp(&m, 0.5, Qualification::Q, 1.0, &DeltaSchedule::default(), &opts),
            Err(Error::HorizonTooLarge { .. })
        ));
    }

    #[test]
    fn csv_dump_has_all_states() {
        let m = model();
        let t = solve_dp(&m, 0.5, Qualification::Q, 1.0, &DeltaSchedule::default(), &DpOptions::new(3)).unwrap();
        let mut buf = Vec::new();
        t.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("length,successes,steps_remaining,value,effort_prob\n"));
        assert_eq!(text.lines().count(), 1 + t.state_count());
    }

    #[test]
    fn markov_evaluation_of_dp_policy_matches_value() {
        let m = model();
        let d = DeltaSchedule::default();
        let n = 8;
        let t = solve_dp(&m, 0.4, Qualification::Q, 0.7, &d, &DpOptions::new(n)).unwrap();
        let problem = DpProblem::new(&m, 0.4, Qualification::Q, 0.7, d);
        let v = evaluate_markov_policy(&problem, n, &|len, s| t.effort(n - len, len, s) == Effort::H);
        assert!((v - t.value(n, 0, 0)).abs() < 1e-12);
    }
}
