//! Running configurations and writing their artifacts.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use asyncfo_core::engine::{run, EpochContext, RunOptions, RunTrace, StepRule};
use asyncfo_core::metrics::{check_lemma_invariants, compute_series, CheckReport, InequalityCheck, MetricSeries};
use asyncfo_core::model::OutputMap;
use asyncfo_core::objective::{epoch_constants, ConstantsOptions, EpochConstants, PreviousEpoch};
use asyncfo_core::schedule::{generate_schedule, EventSchedule};
use asyncfo_core::theory::{
    auto_gamma, check_bounds_on_trace, constants_report, evaluate_epoch, ladder, LadderDims, TheoryConstants,
};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::{EpochSourceKind, SimConfig, StepKind};
use crate::error::{io_err, Context, HarnessError, Result};
use crate::setup::{build, Setup};

/// Outcome of the theorem-level bound checks.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "status")]
pub enum BoundVerdict {
    NotRun,
    /// The constants could not be evaluated or a step size exceeds its cap.
    Refused { reason: String },
    Checked { report: CheckReport },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OutputError {
    pub tick: usize,
    /// `‖ξ(k) − ξ*‖` over all aircraft.
    pub altitude: f64,
    /// `‖v̇(k) − v̇*‖` over all aircraft.
    pub acceleration: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentSummary {
    pub name: String,
    pub config_hash: String,
    pub seed: u64,
    pub horizon: usize,
    pub gammas: Vec<f64>,
    pub alpha_at_eta: Vec<f64>,
    pub alpha_after_change: Vec<f64>,
    /// Mean of `α(k)` over `k = 0..=horizon`.
    pub mean_alpha: f64,
    pub lemma_checks: Option<CheckReport>,
    pub bound_checks: BoundVerdict,
    pub output_error: Option<OutputError>,
    pub wall_time_s: f64,
}

pub struct Experiment {
    pub config: SimConfig,
    pub setup: Setup,
    pub schedule: EventSchedule,
    pub trace: RunTrace,
    pub series: MetricSeries,
    pub constants: Vec<EpochConstants>,
    pub theory: Option<std::result::Result<TheoryConstants, String>>,
    pub summary: ExperimentSummary,
}

impl Experiment {
    pub fn map(&self) -> &OutputMap {
        &self.setup.problem.map
    }

    pub fn dims(&self) -> LadderDims {
        ladder_dims(&self.setup, &self.config)
    }
}

fn ladder_dims(setup: &Setup, cfg: &SimConfig) -> LadderDims {
    LadderDims {
        b: cfg.b,
        agents: cfg.agents(),
        m: cfg.m(),
        norm_c: setup.problem.map.norm(),
        diam: setup.problem.set.diameter(),
    }
}

fn constants_options(cfg: &SimConfig) -> ConstantsOptions {
    ConstantsOptions {
        lambda_eb: cfg.lambda_eb,
        seed: cfg.seed,
        ..Default::default()
    }
}

/// Per-epoch constants for a finished trace.
pub fn trace_constants(setup: &Setup, cfg: &SimConfig, trace: &RunTrace) -> Result<Vec<EpochConstants>> {
    let opts = constants_options(cfg);
    let mut out = Vec::with_capacity(trace.epochs.len());
    for (ell, rec) in trace.epochs.iter().enumerate() {
        let prev = ell.checked_sub(1).map(|p| PreviousEpoch {
            epoch: &trace.epochs[p].epoch,
            x_star: &trace.epochs[p].solution.x_star,
        });
        out.push(
            epoch_constants(&rec.epoch, &rec.solution.x_star, prev, &setup.problem.set, &setup.problem.map, &opts)
                .context(format!("constants of epoch {ell}"))?,
        );
    }
    Ok(out)
}

/// Runs a configuration in memory, including checks when enabled.
pub fn simulate(cfg: &SimConfig) -> Result<Experiment> {
    let started = Instant::now();
    let setup = build(cfg)?;
    let schedule =
        generate_schedule(&setup.async_cfg, &setup.problem.layout, setup.epochs.horizon()).context("schedule")?;
    let dims = ladder_dims(&setup, cfg);
    let rs = setup.epochs.r().to_vec();

    let mut auto_constants: Vec<EpochConstants> = Vec::new();
    let trace = {
        let steps = match cfg.step {
            StepKind::Constant => StepRule::Constant(cfg.gamma[0]),
            StepKind::PerEpoch => StepRule::PerEpoch(cfg.gamma.clone()),
            StepKind::Auto => {
                let store = &mut auto_constants;
                let (set, map) = (&setup.problem.set, &setup.problem.map);
                let opts = constants_options(cfg);
                let fraction = cfg.gamma_fraction;
                let mut carry = None;
                StepRule::Auto(Box::new(move |ctx: &EpochContext<'_>| {
                    let prev = ctx.previous.map(|(epoch, sol)| PreviousEpoch {
                        epoch,
                        x_star: &sol.x_star,
                    });
                    let ec = epoch_constants(ctx.epoch, &ctx.solution.x_star, prev, set, map, &opts)?;
                    let r = rs[ctx.ell];
                    let gamma = auto_gamma(&ec, r, &dims, carry, fraction)?;
                    carry = Some(evaluate_epoch(ctx.ell, &ec, gamma, r, &dims, carry)?.carry());
                    store.push(ec);
                    Ok(gamma)
                }))
            }
        };
        run(&setup.problem, &schedule, &setup.epochs, &setup.init, steps, &RunOptions::default()).context("run")?
    };
    let series = compute_series(&trace, &setup.problem.map).context("metric series")?;

    let constants = if auto_constants.len() == trace.epochs.len() {
        auto_constants
    } else if cfg.checks {
        trace_constants(&setup, cfg, &trace)?
    } else {
        Vec::new()
    };

    let (lemma_checks, theory, bound_checks) = if cfg.checks {
        let lemma = check_lemma_invariants(&trace, &series, &setup.problem.set, constants.first());
        let gammas: Vec<f64> = trace.epochs.iter().map(|e| e.gamma).collect();
        let theory = ladder(&constants, &gammas, setup.epochs.r(), &dims).map_err(|e| e.to_string());
        let verdict = match &theory {
            Err(reason) => BoundVerdict::Refused { reason: reason.clone() },
            Ok(tc) => match check_bounds_on_trace(&trace, &series, tc) {
                Ok(report) => BoundVerdict::Checked { report },
                Err(e) => BoundVerdict::Refused { reason: e.to_string() },
            },
        };
        (Some(lemma), Some(theory), verdict)
    } else {
        (None, None, BoundVerdict::NotRun)
    };

    let output_error = (cfg.epoch_source == EpochSourceKind::Aircraft && trace.horizon > 0)
        .then(|| aircraft_output_error(&trace, &setup.problem.map, trace.horizon - 1));

    let summary = ExperimentSummary {
        name: cfg.name.clone(),
        config_hash: cfg.hash(),
        seed: cfg.seed,
        horizon: trace.horizon,
        gammas: trace.epochs.iter().map(|e| e.gamma).collect(),
        alpha_at_eta: (0..trace.epochs.len()).map(|l| series.alpha_at_eta(l)).collect(),
        alpha_after_change: (0..trace.epochs.len()).map(|l| series.alpha_after_change(l)).collect(),
        mean_alpha: series.alpha.iter().sum::<f64>() / series.alpha.len() as f64,
        lemma_checks,
        bound_checks,
        output_error,
        wall_time_s: started.elapsed().as_secs_f64(),
    };
    Ok(Experiment {
        config: cfg.clone(),
        setup,
        schedule,
        trace,
        series,
        constants,
        theory,
        summary,
    })
}

/// Altitude and acceleration errors of the true outputs at tick `k` against
/// the minimizer of the epoch owning `k`.
pub fn aircraft_output_error(trace: &RunTrace, map: &OutputMap, k: usize) -> OutputError {
    let y = map.apply(&trace.x[k]);
    let y_star = &trace.epochs[trace.epoch_of_state(k)].solution.y_star;
    let (mut alt, mut acc) = (0.0, 0.0);
    for i in 0..y.len() / 2 {
        acc += (y[2 * i] - y_star[2 * i]).powi(2);
        alt += (y[2 * i + 1] - y_star[2 * i + 1]).powi(2);
    }
    OutputError {
        tick: k,
        altitude: alt.sqrt(),
        acceleration: acc.sqrt(),
    }
}

/// Runs a configuration and writes its artifacts into `dir`.
pub fn run_experiment(cfg: &SimConfig, dir: &Path) -> Result<ExperimentSummary> {
    let exp = simulate(cfg)?;
    write_artifacts(&exp, dir)?;
    Ok(exp.summary)
}

fn write(dir: &Path, name: &str, text: &str) -> Result<()> {
    let path = dir.join(name);
    fs::write(&path, text).map_err(io_err(path))
}

pub const METRICS_HEADER: &str = "k,ell,alpha,beta,delta,norm_s,norm_q,events_u,events_m,events_c";

/// `metrics.csv`: one row per tick `k < η_T` (every `thin`-th tick).
pub fn metrics_csv(exp: &Experiment) -> String {
    let (t, s) = (&exp.trace, &exp.series);
    let mut out = String::from(METRICS_HEADER);
    out.push('\n');
    for k in (0..t.horizon).step_by(exp.config.thin) {
        let ev = &t.events[k];
        let _ = writeln!(
            out,
            "{k},{},{:e},{:e},{:e},{:e},{:e},{},{},{}",
            t.epoch_of_state(k),
            s.alpha[k],
            s.beta[k],
            s.delta[k],
            s.norm_s[k],
            s.norm_q[k],
            ev.updates,
            ev.measures,
            ev.deliveries
        );
    }
    out
}

/// `epochs.csv`: `ell,eta,alpha_at_eta,alpha_post_change,x_star_0,…`.
pub fn epochs_csv(exp: &Experiment) -> String {
    let n = exp.trace.layout.n();
    let mut out = String::from("ell,eta,alpha_at_eta,alpha_post_change");
    for j in 0..n {
        let _ = write!(out, ",x_star_{j}");
    }
    out.push('\n');
    for (ell, rec) in exp.trace.epochs.iter().enumerate() {
        let _ = write!(
            out,
            "{ell},{},{:e},{:e}",
            rec.eta,
            exp.series.alpha_at_eta(ell),
            exp.series.alpha_after_change(ell)
        );
        for v in rec.solution.x_star.iter() {
            let _ = write!(out, ",{v:e}");
        }
        out.push('\n');
    }
    out
}

/// `trace.csv`: the true input vector every `thin`-th tick, plus the last.
pub fn trace_csv(exp: &Experiment) -> String {
    let t = &exp.trace;
    let mut out = String::from("k");
    for j in 0..t.layout.n() {
        let _ = write!(out, ",x_{j}");
    }
    out.push('\n');
    let mut ticks: Vec<usize> = (0..=t.horizon).step_by(exp.config.thin).collect();
    if ticks.last() != Some(&t.horizon) {
        ticks.push(t.horizon);
    }
    for k in ticks {
        let _ = write!(out, "{k}");
        for v in t.x[k].iter() {
            let _ = write!(out, ",{v:e}");
        }
        out.push('\n');
    }
    out
}

fn constants_text(exp: &Experiment) -> String {
    let mut out = String::new();
    for (ell, ec) in exp.constants.iter().enumerate() {
        let _ = writeln!(
            out,
            "epoch.{ell}.L_x = {:e}\nepoch.{ell}.L_y = {:e}\nepoch.{ell}.L = {:e}\nepoch.{ell}.L_J = {:e}\n\
             epoch.{ell}.M_x = {:e}\nepoch.{ell}.M_y = {:e}\nepoch.{ell}.p = {:e}\nepoch.{ell}.sigma = {:e}\n\
             epoch.{ell}.L_t = {:e}\nepoch.{ell}.Delta = {:e}\nepoch.{ell}.lambda = {:e}",
            ec.l_x, ec.l_y, ec.l, ec.l_j, ec.m_x, ec.m_y, ec.p_strong, ec.sigma, ec.l_t, ec.delta, ec.lambda_eb
        );
    }
    match &exp.theory {
        Some(Ok(tc)) => out.push_str(&constants_report(tc, &exp.dims())),
        Some(Err(e)) => {
            let _ = writeln!(out, "ladder_error = {e}");
        }
        None => {}
    }
    out
}

fn checks_text(summary: &ExperimentSummary) -> String {
    let mut out = String::new();
    if let Some(l) = &summary.lemma_checks {
        out.push_str("# lemma invariants\n");
        out.push_str(&l.to_text());
    }
    out.push_str("# rate bounds\n");
    match &summary.bound_checks {
        BoundVerdict::NotRun => out.push_str("not run\n"),
        BoundVerdict::Refused { reason } => {
            let _ = writeln!(out, "refused: {reason}");
        }
        BoundVerdict::Checked { report } => out.push_str(&report.to_text()),
    }
    out
}

pub fn write_artifacts(exp: &Experiment, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(io_err(dir))?;
    write(dir, "config.toml", &exp.config.to_toml())?;
    write(dir, "metrics.csv", &metrics_csv(exp))?;
    write(dir, "epochs.csv", &epochs_csv(exp))?;
    write(dir, "trace.csv", &trace_csv(exp))?;
    write(dir, "schedule.txt", &exp.schedule.to_text())?;
    if exp.config.checks {
        write(dir, "constants.txt", &constants_text(exp))?;
        write(dir, "checks.txt", &checks_text(&exp.summary))?;
    }
    write(dir, "summary.json", &serde_json::to_string_pretty(&exp.summary)?)?;
    Ok(())
}

/// Result of re-verifying a stored run.
#[derive(Clone, Debug, PartialEq)]
pub struct Verification {
    pub schedule_violations: Vec<String>,
    pub failed_checks: Vec<String>,
}

impl Verification {
    pub fn passed(&self) -> bool {
        self.schedule_violations.is_empty()
    }
}

/// Re-checks `schedule.txt` of a run directory against the delay bound and
/// collects the failed inequality checks recorded in `summary.json`.
pub fn verify_run(dir: &Path) -> Result<Verification> {
    let path = dir.join("schedule.txt");
    let text = fs::read_to_string(&path).map_err(io_err(&path))?;
    let schedule = EventSchedule::parse_text(&text).context("schedule.txt")?;
    let schedule_violations = asyncfo_core::schedule::verify_schedule(&schedule)
        .into_iter()
        .map(|v| format!("{v:?}"))
        .collect();
    let mut failed_checks = Vec::new();
    let spath = dir.join("summary.json");
    if spath.exists() {
        let text = fs::read_to_string(&spath).map_err(io_err(&spath))?;
        let summary: ExperimentSummary = serde_json::from_str(&text)?;
        let mut collect = |report: &CheckReport| {
            failed_checks.extend(report.failures().into_iter().map(|c: &InequalityCheck| c.name.clone()))
        };
        if let Some(l) = &summary.lemma_checks {
            collect(l);
        }
        if let BoundVerdict::Checked { report } = &summary.bound_checks {
            collect(report);
        }
    }
    Ok(Verification {
        schedule_violations,
        failed_checks,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SweepParam {
    /// Delay bound; `delay_max` follows as `B − 1`.
    B,
    Gamma,
    /// All three event probabilities at once.
    Probability,
}

impl std::str::FromStr for SweepParam {
    type Err = HarnessError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "B" | "b" => Ok(SweepParam::B),
            "gamma" => Ok(SweepParam::Gamma),
            "p" => Ok(SweepParam::Probability),
            other => Err(HarnessError::Config(format!("unknown sweep parameter `{other}`"))),
        }
    }
}

pub fn apply_param(cfg: &mut SimConfig, param: SweepParam, value: f64) -> Result<()> {
    match param {
        SweepParam::B => {
            if !(value >= 1.0 && value.fract() == 0.0) {
                return Err(HarnessError::Config(format!("B = {value} is not a positive integer")));
            }
            cfg.b = value as usize;
            cfg.delay_max = cfg.b - 1;
        }
        SweepParam::Gamma => {
            cfg.step = StepKind::Constant;
            cfg.gamma = vec![value];
        }
        SweepParam::Probability => {
            cfg.p_update = value;
            cfg.p_measure = value;
            cfg.p_communicate = value;
        }
    }
    cfg.validate()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub value: f64,
    /// Per-seed mean tracking error, in seed order.
    pub per_seed: Vec<f64>,
    pub mean_alpha: f64,
}

/// Runs `base(seed)` with `param = value` for every value and seed
/// `0..seeds`, in parallel. Each run writes to `out/<param>=<value>/seed=<s>`
/// when `out` is given.
pub fn sweep(
    base: &(dyn Fn(u64) -> SimConfig + Sync),
    param: SweepParam,
    values: &[f64],
    seeds: u64,
    out: Option<&Path>,
) -> Result<Vec<SweepRow>> {
    let jobs: Vec<(usize, u64)> = (0..values.len()).flat_map(|v| (0..seeds).map(move |s| (v, s))).collect();
    let results: Vec<Result<f64>> = jobs
        .par_iter()
        .map(|&(vi, seed)| {
            let mut cfg = base(seed);
            apply_param(&mut cfg, param, values[vi])?;
            let exp = simulate(&cfg)?;
            if let Some(root) = out {
                let dir: PathBuf = root.join(format!("{param:?}={}", values[vi])).join(format!("seed={seed}"));
                write_artifacts(&exp, &dir)?;
            }
            Ok(exp.summary.mean_alpha)
        })
        .collect();
    let mut rows: Vec<SweepRow> = values
        .iter()
        .map(|v| SweepRow {
            value: *v,
            per_seed: Vec::new(),
            mean_alpha: 0.0,
        })
        .collect();
    for ((vi, _), r) in jobs.iter().zip(results) {
        rows[*vi].per_seed.push(r?);
    }
    for row in &mut rows {
        row.mean_alpha = row.per_seed.iter().sum::<f64>() / row.per_seed.len().max(1) as f64;
    }
    if let Some(root) = out {
        fs::create_dir_all(root).map_err(io_err(root))?;
        write(root, "sweep.csv", &sweep_csv(param, &rows))?;
    }
    Ok(rows)
}

pub fn sweep_csv(param: SweepParam, rows: &[SweepRow]) -> String {
    let mut out = format!("{param:?},seeds,mean_alpha\n");
    for r in rows {
        let _ = writeln!(out, "{},{},{:e}", r.value, r.per_seed.len(), r.mean_alpha);
    }
    out
}

/// `V_∞` and `1 − ρ_∞` of a configuration's ladder, after running it.
pub fn ladder_of(cfg: &SimConfig) -> Result<(Experiment, TheoryConstants)> {
    let mut cfg = cfg.clone();
    cfg.checks = true;
    let exp = simulate(&cfg)?;
    let tc = match &exp.theory {
        Some(Ok(tc)) => tc.clone(),
        Some(Err(e)) => return Err(HarnessError::Runtime(format!("bound constants unavailable: {e}"))),
        None => unreachable!("checks enabled"),
    };
    Ok((exp, tc))
}
