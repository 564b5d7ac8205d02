//! Command-line runner: scenario loading, mode dispatch, sweeps and artifacts.
//!
//! Every artifact is a pure function of the effective scenario, so identical
//! inputs produce byte-identical files.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use rayon::prelude::*;
use serde::Serialize;
use serde_json::{json, Value};

use crate::abm::{self, AbmStart, LilConfig, SimConfig};
use crate::config::{parse_assignment, Scenario, KEYS};
use crate::dynamics::write_trajectory_csv;
use crate::equilibrium::{
    compare_regimes, contraction_diagnostics, run_to_steady_state, solve_fixed_point_direct,
};
use crate::error::{Error, Result};
use crate::params::Qualification;
use crate::plm::{self, DpOptions};
use crate::tlm::HiringRegime;

/// Damping used by the direct fixed-point solve in steady-state mode.
const DIRECT_DAMPING: f64 = 0.5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Mode {
    Dynamics,
    Abm,
    SteadyState,
    Compare,
    Diagnose,
}

impl Mode {
    pub fn name(self) -> &'static str {
        match self {
            Mode::Dynamics => "dynamics",
            Mode::Abm => "abm",
            Mode::SteadyState => "steady-state",
            Mode::Compare => "compare",
            Mode::Diagnose => "diagnose",
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "dualmarket", version, about = "Dual labor market reputation simulator")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run a scenario in one mode, optionally over a parameter grid.
    Run(RunArgs),
    /// Monte Carlo of always-high and always-low workers under the hiring rule.
    Lil(LilArgs),
    /// Solve the worker's dynamic program and dump the value table.
    DpDump(DpArgs),
}

#[derive(Debug, Clone, Args)]
pub struct ScenarioArgs {
    /// Scenario file (`key = value` lines); defaults apply when omitted.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Output directory, created if missing.
    #[arg(long, default_value = "out")]
    pub out: PathBuf,
    /// Override a config key; repeatable, applied after the file.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    pub set: Vec<String>,
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Debug, Args)]
pub struct RunArgs {
    #[arg(long, value_enum)]
    pub mode: Mode,
    #[command(flatten)]
    pub scenario: ScenarioArgs,
    /// Grid axis `key=v1,v2,...`; repeatable.
    #[arg(long = "sweep", value_name = "KEY=V1,V2,...")]
    pub sweep: Vec<String>,
    #[arg(long)]
    pub max_t: Option<u64>,
    #[arg(long)]
    pub tol: Option<f64>,
}

#[derive(Debug, Args)]
pub struct LilArgs {
    #[command(flatten)]
    pub scenario: ScenarioArgs,
    /// Good-outcome probability under low effort.
    #[arg(long, default_value_t = 0.5)]
    pub p_low: f64,
    #[arg(long, default_value_t = 1000)]
    pub steps: u32,
    #[arg(long, default_value_t = 10_000)]
    pub replicas: usize,
    #[arg(long, default_value_t = 50)]
    pub check_length: u32,
}

#[derive(Debug, Args)]
pub struct DpArgs {
    #[command(flatten)]
    pub scenario: ScenarioArgs,
    #[arg(long)]
    pub theta: f64,
    /// Qualification: `q` or `u`.
    #[arg(long, default_value = "q")]
    pub rho: String,
    /// Frozen wage; defaults to `w_max`.
    #[arg(long)]
    pub w: Option<f64>,
    /// Look-ahead depth; defaults to `horizon_N`.
    #[arg(long)]
    pub horizon: Option<usize>,
}

/// Fully resolved request for [`run`].
#[derive(Debug, Clone)]
pub struct RunSpec {
    pub mode: Mode,
    pub config: Option<PathBuf>,
    pub out: PathBuf,
    pub overrides: Vec<(String, String)>,
    pub seed: Option<u64>,
    pub sweep: Vec<(String, Vec<String>)>,
    pub max_t: Option<u64>,
    pub tol: Option<f64>,
}

impl RunSpec {
    pub fn new(mode: Mode, out: impl Into<PathBuf>) -> Self {
        Self {
            mode,
            config: None,
            out: out.into(),
            overrides: Vec::new(),
            seed: None,
            sweep: Vec::new(),
            max_t: None,
            tol: None,
        }
    }

    /// File values, then `--set` overrides, then the dedicated flags.
    pub fn scenario(&self) -> Result<Scenario> {
        let mut s = match &self.config {
            Some(p) => Scenario::load(p)?,
            None => Scenario::default(),
        };
        let mut ov = self.overrides.clone();
        if let Some(seed) = self.seed {
            ov.push(("seed".into(), seed.to_string()));
        }
        if let Some(t) = self.max_t {
            ov.push(("run.max_t".into(), t.to_string()));
        }
        if let Some(t) = self.tol {
            ov.push(("run.tol".into(), t.to_string()));
        }
        s.apply_overrides(&ov)?;
        Ok(s)
    }
}

/// Result of a command: exit code plus the one-line summary.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Outcome {
    pub exit_code: i32,
    pub summary: String,
}

/// Everything one mode produces for one scenario.
#[derive(Debug, Clone)]
pub struct Evaluation {
    /// `(file name, contents)` pairs.
    pub artifacts: Vec<(String, Vec<u8>)>,
    pub summary: String,
    /// Compact result used for sweep lines.
    pub record: Value,
    /// `Some(false)` when a steady-state run hit `max_t`.
    pub converged: Option<bool>,
}

fn json_bytes(v: &Value) -> Vec<u8> {
    let mut s = serde_json::to_string_pretty(v).expect("json values serialize");
    s.push('\n');
    s.into_bytes()
}

fn to_value<T: Serialize>(v: &T) -> Value {
    serde_json::to_value(v).expect("report types serialize")
}

fn report(mode: Mode, s: &Scenario, result: Value) -> Value {
    json!({ "mode": mode.name(), "config": s.effective(), "result": result })
}

fn csv_bytes(f: impl FnOnce(&mut Vec<u8>) -> Result<()>) -> Result<Vec<u8>> {
    let mut buf = Vec::new();
    f(&mut buf)?;
    Ok(buf)
}

/// Runs `mode` on a resolved scenario without touching the filesystem.
pub fn evaluate(mode: Mode, s: &Scenario) -> Result<Evaluation> {
    let model = &s.model;
    let regime = s.hiring_regime();
    match mode {
        Mode::Dynamics | Mode::SteadyState => {
            let (traj, rep) = run_to_steady_state(model, &regime, &s.dynamics, s.init_g, &s.run)?;
            let mut result = json!({ "steady_state": to_value(&rep) });
            if mode == Mode::SteadyState {
                result["direct"] = match solve_fixed_point_direct(model, &regime, &s.dynamics, s.init_g, DIRECT_DAMPING) {
                    Ok(fp) => to_value(&fp),
                    Err(e) => json!({ "error": e.to_string() }),
                };
            }
            let summary = format!(
                "{}: converged={} T={} g=({:.6}, {:.6}) symmetric={}",
                mode.name(),
                rep.converged,
                rep.t_convergence.map_or("none".to_string(), |t| t.to_string()),
                rep.g_tilde[0],
                rep.g_tilde[1],
                rep.symmetric
            );
            Ok(Evaluation {
                artifacts: vec![
                    ("trajectory.csv".into(), csv_bytes(|b| write_trajectory_csv(&traj.records, b))?),
                    ("report.json".into(), json_bytes(&report(mode, s, result.clone()))),
                ],
                summary,
                record: result,
                converged: (mode == Mode::SteadyState).then_some(rep.converged),
            })
        }
        Mode::Abm => {
            let cfg = SimConfig {
                n: s.abm.n,
                seed: s.run.seed,
                steps: s.abm.steps,
                model: model.clone(),
                regime,
                dynamics: s.dynamics,
                schedule: s.schedule,
                effort: s.abm.effort,
                event_log: s.abm.event_log,
                start: AbmStart::from_init_g(model, s.init_g)?,
            };
            let out = abm::simulate(&cfg)?;
            let reference = abm::deterministic_reference(model, &regime, &out.rows)?;
            let band = abm::within_binomial_band(&out.rows, &reference);
            let result = json!({ "summary": to_value(&out.summary), "share_within_binomial_band": band });
            let mut artifacts = vec![
                ("trajectory.csv".into(), csv_bytes(|b| abm::write_abm_csv(&out.rows, b))?),
                ("report.json".into(), json_bytes(&report(mode, s, result.clone()))),
            ];
            if s.abm.event_log {
                let mut log = out.events.join("\n");
                if !log.is_empty() {
                    log.push('\n');
                }
                artifacts.push(("events.log".into(), log.into_bytes()));
            }
            let summary = format!(
                "abm: steps={} mean_g=({:.6}, {:.6}) within_band={:.4}",
                out.summary.steps, out.summary.mean_g[0], out.summary.mean_g[1], band
            );
            Ok(Evaluation {
                artifacts,
                summary,
                record: result,
                converged: None,
            })
        }
        Mode::Compare => {
            let (traj, parity) =
                run_to_steady_state(model, &HiringRegime::StatisticalParity, &s.dynamics, s.init_g, &s.run)?;
            let verdicts = [HiringRegime::GroupBlind, HiringRegime::StatisticalDiscrimination(s.statdisc)]
                .iter()
                .map(|r| compare_regimes(model, r, &s.dynamics, s.init_g, &s.run))
                .collect::<Result<Vec<_>>>()?;
            let summary = format!(
                "compare: {}",
                verdicts
                    .iter()
                    .map(|v| format!("{} dominates={} applicable={}", v.regime_pair[1], v.dominates, v.applicable))
                    .collect::<Vec<_>>()
                    .join("; ")
            );
            let result = json!({ "verdicts": to_value(&verdicts) });
            let pareto = json!({ "config": s.effective(), "verdicts": to_value(&verdicts) });
            let parity_report = json!({ "steady_state": to_value(&parity) });
            Ok(Evaluation {
                artifacts: vec![
                    ("trajectory.csv".into(), csv_bytes(|b| write_trajectory_csv(&traj.records, b))?),
                    ("report.json".into(), json_bytes(&report(mode, s, parity_report))),
                    ("pareto.json".into(), json_bytes(&pareto)),
                ],
                summary,
                record: result,
                converged: None,
            })
        }
        Mode::Diagnose => {
            let (traj, rep) = run_to_steady_state(model, &regime, &s.dynamics, s.init_g, &s.run)?;
            let w = s.dynamics.fixed_wage.unwrap_or(rep.w_tilde);
            let diag = contraction_diagnostics(model, &regime, &s.dynamics, w, rep.pi_tilde)?;
            let result = json!({ "steady_state": to_value(&rep), "contraction": to_value(&diag) });
            let summary = format!(
                "diagnose: w={w:.6} epsilon={:.6} lip_phi={:.6} lip_xi={:.6} contractive={}",
                diag.epsilon, diag.lip_phi, diag.lip_xi, diag.contractive
            );
            Ok(Evaluation {
                artifacts: vec![
                    ("trajectory.csv".into(), csv_bytes(|b| write_trajectory_csv(&traj.records, b))?),
                    ("report.json".into(), json_bytes(&report(mode, s, json!({ "steady_state": to_value(&rep) })))),
                    (
                        "diagnostics.json".into(),
                        json_bytes(&json!({ "config": s.effective(), "contraction": to_value(&diag) })),
                    ),
                ],
                summary,
                record: result,
                converged: None,
            })
        }
    }
}

/// Grid points in lexicographic key order; the last key varies fastest.
/// An empty grid yields one empty point.
pub fn grid_points(grid: &[(String, Vec<String>)]) -> Result<Vec<Vec<(String, String)>>> {
    let mut axes: BTreeMap<&str, &[String]> = BTreeMap::new();
    for (k, vals) in grid {
        if !KEYS.contains(&k.as_str()) {
            return Err(Error::config(0, format!("unknown key '{k}'")).with_source_name("--sweep"));
        }
        if vals.is_empty() {
            return Err(Error::config(0, format!("no values for '{k}'")).with_source_name("--sweep"));
        }
        if axes.insert(k, vals).is_some() {
            return Err(Error::config(0, format!("duplicate axis '{k}'")).with_source_name("--sweep"));
        }
    }
    let mut points = vec![Vec::new()];
    for (k, vals) in axes {
        points = points
            .into_iter()
            .flat_map(|p: Vec<(String, String)>| {
                vals.iter().map(move |v| {
                    let mut q = p.clone();
                    q.push((k.to_string(), v.clone()));
                    q
                })
            })
            .collect();
    }
    Ok(points)
}

/// Evaluates every grid point in parallel and returns the JSON lines in grid
/// order, plus whether any steady-state point failed to converge.
pub fn sweep(mode: Mode, base: &Scenario, grid: &[(String, Vec<String>)]) -> Result<(String, bool)> {
    let points = grid_points(grid)?;
    let scenarios = points
        .iter()
        .map(|p| {
            let mut s = base.clone();
            s.apply_overrides(p)?;
            Ok(s)
        })
        .collect::<Result<Vec<_>>>()?;
    let lines: Vec<(String, bool)> = points
        .par_iter()
        .zip(scenarios.par_iter())
        .map(|(p, s)| {
            let point: BTreeMap<&str, &str> = p.iter().map(|(k, v)| (k.as_str(), v.as_str())).collect();
            let (result, failed) = match evaluate(mode, s) {
                Ok(e) => (e.record, e.converged == Some(false)),
                Err(e) => (json!({ "error": e.to_string() }), false),
            };
            let line = json!({ "mode": mode.name(), "point": point, "config": s.effective(), "result": result });
            (serde_json::to_string(&line).expect("json values serialize"), failed)
        })
        .collect();
    let nonconverged = lines.iter().any(|(_, f)| *f);
    let mut text = String::new();
    for (l, _) in lines {
        text.push_str(&l);
        text.push('\n');
    }
    Ok((text, nonconverged))
}

fn write_artifacts(dir: &Path, artifacts: &[(String, Vec<u8>)]) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::Io(format!("cannot create '{}': {e}", dir.display())))?;
    for (name, bytes) in artifacts {
        let path = dir.join(name);
        fs::write(&path, bytes).map_err(|e| Error::Io(format!("cannot write '{}': {e}", path.display())))?;
    }
    Ok(())
}

/// Runs a spec and writes its artifacts. Exit code 2 signals a steady-state
/// run that hit `max_t`.
pub fn run(spec: &RunSpec) -> Result<Outcome> {
    let scenario = spec.scenario()?;
    if !spec.sweep.is_empty() {
        let (text, nonconverged) = sweep(spec.mode, &scenario, &spec.sweep)?;
        write_artifacts(&spec.out, &[("sweep.jsonl".into(), text.clone().into_bytes())])?;
        return Ok(Outcome {
            exit_code: if nonconverged { 2 } else { 0 },
            summary: format!("sweep {}: {} points", spec.mode.name(), text.lines().count()),
        });
    }
    let eval = evaluate(spec.mode, &scenario)?;
    write_artifacts(&spec.out, &eval.artifacts)?;
    Ok(Outcome {
        exit_code: if eval.converged == Some(false) { 2 } else { 0 },
        summary: eval.summary,
    })
}

/// Parses `key=v1,v2,...`.
pub fn parse_sweep_axis(s: &str) -> Result<(String, Vec<String>)> {
    let (k, v) = parse_assignment(s)?;
    let vals: Vec<String> = v.split(',').map(|x| x.trim().to_string()).filter(|x| !x.is_empty()).collect();
    Ok((k, vals))
}

fn overrides(args: &ScenarioArgs) -> Result<Vec<(String, String)>> {
    args.set.iter().map(|s| parse_assignment(s)).collect()
}

fn scenario_for(args: &ScenarioArgs) -> Result<Scenario> {
    let mut spec = RunSpec::new(Mode::Dynamics, args.out.clone());
    spec.config = args.config.clone();
    spec.overrides = overrides(args)?;
    spec.seed = args.seed;
    spec.scenario()
}

fn run_lil(args: &LilArgs) -> Result<Outcome> {
    let s = scenario_for(&args.scenario)?;
    let cfg = LilConfig {
        p_h: s.model.params.p_h,
        p_low: args.p_low,
        steps: args.steps,
        replicas: args.replicas,
        seed: s.run.seed,
        schedule: s.schedule,
        check_length: args.check_length,
    };
    let rep = abm::lil_experiment(&cfg)?;
    let mut csv = String::from("tau,lil_bound,delta,exceedance,rejection\n");
    for r in &rep.rows {
        csv.push_str(&format!("{},{},{},{},{}\n", r.tau, r.lil_bound, r.delta, r.exceedance, r.rejection));
    }
    write_artifacts(
        &args.scenario.out,
        &[
            ("lil.csv".into(), csv.into_bytes()),
            ("lil.json".into(), json_bytes(&to_value(&rep))),
        ],
    )?;
    Ok(Outcome {
        exit_code: 0,
        summary: format!(
            "lil: always_high_hire_rate={:.6} always_low_rejected={:.6}",
            rep.always_high_hire_rate, rep.always_low_rejected
        ),
    })
}

fn run_dp(args: &DpArgs) -> Result<Outcome> {
    let s = scenario_for(&args.scenario)?;
    let rho = match args.rho.to_ascii_lowercase().as_str() {
        "q" => Qualification::Q,
        "u" => Qualification::U,
        other => return Err(Error::config(0, format!("--rho must be q or u, found '{other}'"))),
    };
    let w = args.w.unwrap_or(s.model.params.w_max);
    let mut opts = DpOptions::new(args.horizon.unwrap_or(s.model.params.horizon_n));
    opts.state_budget = s.dp_state_budget;
    let table = plm::solve_dp(&s.model, args.theta, rho, w, &s.schedule, &opts)?;
    let root = table.value(opts.horizon, 0, 0);
    let root_effort = if opts.horizon > 0 { Some(table.effort(opts.horizon, 0, 0)) } else { None };
    let stationary = plm::stationary_effort(&s.model, args.theta, rho, w);
    let meta = json!({
        "config": s.effective(),
        "theta": args.theta,
        "rho": to_value(&rho),
        "w": w,
        "horizon": opts.horizon,
        "states": table.state_count(),
        "root_value": root,
        "root_effort": to_value(&root_effort),
        "stationary_effort": to_value(&stationary),
    });
    write_artifacts(
        &args.scenario.out,
        &[
            ("dp.csv".into(), csv_bytes(|b| table.write_csv(b))?),
            ("dp.json".into(), json_bytes(&meta)),
        ],
    )?;
    Ok(Outcome {
        exit_code: 0,
        summary: format!(
            "dp-dump: states={} root_value={root:.6} root_effort={root_effort:?} stationary={stationary:?}",
            table.state_count()
        ),
    })
}

/// Dispatches a parsed command line.
pub fn execute(cli: &Cli) -> Result<Outcome> {
    match &cli.command {
        Command::Run(a) => {
            let spec = RunSpec {
                mode: a.mode,
                config: a.scenario.config.clone(),
                out: a.scenario.out.clone(),
                overrides: overrides(&a.scenario)?,
                seed: a.scenario.seed,
                sweep: a.sweep.iter().map(|s| parse_sweep_axis(s)).collect::<Result<_>>()?,
                max_t: a.max_t,
                tol: a.tol,
            };
            run(&spec)
        }
        Command::Lil(a) => run_lil(a),
        Command::DpDump(a) => run_dp(a),
    }
}

/// Entry point shared by the binary and tests: prints the summary or the
/// error and returns the process exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match execute(&cli) {
        Ok(o) => {
            println!("{}", o.summary);
            o.exit_code
        }
        Err(e) => {
            eprintln!("error: {e}");
            1
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn axis(k: &str, v: &[&str]) -> (String, Vec<String>) {
        (k.into(), v.iter().map(|s| s.to_string()).collect())
    }

    #[test]
    fn empty_grid_is_one_point() {
        assert_eq!(grid_points(&[]).unwrap(), vec![Vec::<(String, String)>::new()]);
    }

    #[test]
    fn grid_is_lexicographic_odometer() {
        let pts = grid_points(&[axis("tau", &["1", "2"]), axis("ell", &["0.3", "0.4"])]).unwrap();
        let flat: Vec<String> = pts
            .iter()
            .map(|p| p.iter().map(|(k, v)| format!("{k}={v}")).collect::<Vec<_>>().join(" "))
            .collect();
        assert_eq!(flat, ["ell=0.3 tau=1", "ell=0.3 tau=2", "ell=0.4 tau=1", "ell=0.4 tau=2"]);
    }

    #[test]
    fn grid_rejects_unknown_and_duplicate_keys() {
        assert!(matches!(grid_points(&[axis("nope", &["1"])]), Err(Error::Config { .. })));
        assert!(grid_points(&[axis("tau", &["1"]), axis("tau", &["2"])]).is_err());
        assert!(grid_points(&[axis("tau", &[])]).is_err());
    }

    #[test]
    fn sweep_axis_parses_values() {
        assert_eq!(parse_sweep_axis("form.cost.beta=0.5, 1,2").unwrap(), axis("form.cost.beta", &["0.5", "1", "2"]));
    }

    #[test]
    fn flags_beat_overrides_beat_defaults() {
        let mut spec = RunSpec::new(Mode::Dynamics, "unused");
        spec.overrides = vec![("seed".into(), "3".into()), ("tau".into(), "4".into())];
        spec.seed = Some(9);
        spec.tol = Some(1e-6);
        let s = spec.scenario().unwrap();
        assert_eq!(s.run.seed, 9);
        assert_eq!(s.model.params.tau, 4);
        assert_eq!(s.run.tol, 1e-6);
    }

    #[test]
    fn steady_state_mode_flags_nonconvergence() {
        let mut s = Scenario::default();
        s.init_g = [0.1, 0.8];
        s.run.max_t = 2;
        let e = evaluate(Mode::SteadyState, &s).unwrap();
        assert_eq!(e.converged, Some(false));
        let e = evaluate(Mode::Dynamics, &s).unwrap();
        assert_eq!(e.converged, None);
    }

    #[test]
    fn cli_parses_repeatable_flags() {
        let cli = Cli::try_parse_from([
            "dualmarket", "run", "--mode", "steady-state", "--set", "tau=3", "--set", "ell=0.4", "--sweep",
            "m=0.2,0.3", "--max-t", "50",
        ])
        .unwrap();
        let Command::Run(a) = cli.command else { panic!("expected run") };
        assert_eq!(a.mode, Mode::SteadyState);
        assert_eq!(a.scenario.set.len(), 2);
        assert_eq!(a.max_t, Some(50));
    }
}
