use std::path::{Path, PathBuf};
use std::process::ExitCode;

use asyncfo::config::SimConfig;
use asyncfo::error::{HarnessError, Result};
use asyncfo::experiment::{apply_param, ladder_of, run_experiment, sweep, sweep_csv, verify_run, SweepParam};
use asyncfo::presets::{preset_aircraft, preset_qp};
use asyncfo_core::theory::{asymptotic_bound, constants_report, r_min_from_gap, RMinMode};
use clap::{Parser, Subcommand, ValueEnum};

/// Root for run directories when `--out` is omitted.
const OUT_ENV: &str = "ASYNCFO_OUT_DIR";

#[derive(Parser)]
#[command(name = "asyncfo", version, about = "Asynchronous feedback optimization simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum Preset {
    Qp,
    Aircraft,
}

#[derive(Clone, Copy, ValueEnum)]
enum Mode {
    Finite,
    Asymptotic,
}

#[derive(Subcommand)]
enum Command {
    /// Run a configuration file.
    Run {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run a built-in experiment.
    Preset {
        preset: Preset,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long = "B")]
        b: Option<usize>,
        #[arg(long)]
        gamma: Option<f64>,
        #[arg(long)]
        epochs: Option<usize>,
        /// Skip lemma and bound checks.
        #[arg(long)]
        no_checks: bool,
        /// Print the configuration instead of running it.
        #[arg(long)]
        print_config: bool,
    },
    /// Run a preset over several parameter values and seeds.
    Sweep {
        #[arg(long)]
        param: String,
        #[arg(long, value_delimiter = ',')]
        values: Vec<f64>,
        #[arg(long, default_value_t = 10)]
        seeds: u64,
        #[arg(long, value_enum, default_value = "qp")]
        preset: Preset,
        #[arg(long)]
        epochs: Option<usize>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Print every bound constant of a configuration.
    Constants {
        #[arg(long)]
        config: PathBuf,
    },
    /// Re-verify a run directory.
    Verify {
        #[arg(long)]
        trace: PathBuf,
    },
    /// Smallest number of operations per epoch reaching a target error.
    Rmin {
        #[arg(long)]
        phi: f64,
        #[arg(long, value_enum)]
        mode: Mode,
        #[arg(long)]
        config: PathBuf,
    },
}

fn preset_config(p: Preset, seed: u64) -> SimConfig {
    match p {
        Preset::Qp => preset_qp(seed),
        Preset::Aircraft => preset_aircraft(seed),
    }
}

fn out_dir(out: Option<PathBuf>, cfg: &SimConfig) -> PathBuf {
    out.unwrap_or_else(|| {
        let root = std::env::var_os(OUT_ENV).map_or_else(|| PathBuf::from("runs"), PathBuf::from);
        root.join(format!("{}-seed{}-{}", cfg.name, cfg.seed, &cfg.hash()[..12]))
    })
}

fn report_run(cfg: &SimConfig, dir: &Path) -> Result<()> {
    let summary = run_experiment(cfg, dir)?;
    println!("wrote {}", dir.display());
    println!("config_hash = {}", summary.config_hash);
    println!("mean_alpha = {:e}", summary.mean_alpha);
    if let Some(a) = summary.alpha_at_eta.last() {
        println!("alpha_at_final_eta = {a:e}");
    }
    if let Some(e) = &summary.output_error {
        println!("altitude_error(k={}) = {:.3}", e.tick, e.altitude);
        println!("acceleration_error(k={}) = {:.4}", e.tick, e.acceleration);
    }
    if let Some(l) = &summary.lemma_checks {
        print!("{}", l.to_text());
    }
    match &summary.bound_checks {
        asyncfo::experiment::BoundVerdict::Checked { report } => print!("{}", report.to_text()),
        asyncfo::experiment::BoundVerdict::Refused { reason } => println!("bound checks refused: {reason}"),
        asyncfo::experiment::BoundVerdict::NotRun => {}
    }
    Ok(())
}

fn execute(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Run { config, seed, out } => {
            let mut cfg = SimConfig::load(&config)?;
            if let Some(s) = seed {
                cfg.seed = s;
            }
            cfg.validate()?;
            let dir = out_dir(out.or_else(|| cfg.out_dir.clone()), &cfg);
            report_run(&cfg, &dir)
        }
        Command::Preset {
            preset,
            seed,
            out,
            b,
            gamma,
            epochs,
            no_checks,
            print_config,
        } => {
            let mut cfg = preset_config(preset, seed);
            if let Some(b) = b {
                apply_param(&mut cfg, SweepParam::B, b as f64)?;
            }
            if let Some(g) = gamma {
                apply_param(&mut cfg, SweepParam::Gamma, g)?;
            }
            if let Some(e) = epochs {
                cfg.epoch_count = e;
            }
            cfg.checks = !no_checks;
            cfg.validate()?;
            if print_config {
                print!("{}", cfg.to_toml());
                return Ok(());
            }
            let dir = out_dir(out, &cfg);
            report_run(&cfg, &dir)
        }
        Command::Sweep {
            param,
            values,
            seeds,
            preset,
            epochs,
            out,
        } => {
            let param: SweepParam = param.parse()?;
            if values.is_empty() {
                return Err(HarnessError::Config("`--values` is empty".into()));
            }
            let base = move |seed: u64| {
                let mut cfg = preset_config(preset, seed);
                if let Some(e) = epochs {
                    cfg.epoch_count = e;
                }
                cfg.checks = false;
                cfg
            };
            let rows = sweep(&base, param, &values, seeds, out.as_deref())?;
            print!("{}", sweep_csv(param, &rows));
            Ok(())
        }
        Command::Constants { config } => {
            let cfg = SimConfig::load(&config)?;
            let (exp, tc) = ladder_of(&cfg)?;
            print!("{}", constants_report(&tc, &exp.dims()));
            Ok(())
        }
        Command::Verify { trace } => {
            let v = verify_run(&trace)?;
            for s in &v.schedule_violations {
                println!("schedule violation: {s}");
            }
            for c in &v.failed_checks {
                println!("recorded check failure: {c}");
            }
            if v.passed() {
                println!("schedule ok");
                Ok(())
            } else {
                Err(HarnessError::Config(format!(
                    "{} schedule violations",
                    v.schedule_violations.len()
                )))
            }
        }
        Command::Rmin { phi, mode, config } => {
            let cfg = SimConfig::load(&config)?;
            let (_, tc) = ladder_of(&cfg)?;
            let mode = match mode {
                Mode::Asymptotic => RMinMode::Asymptotic,
                Mode::Finite => RMinMode::Finite(cfg.epoch_count as u64 - 1),
            };
            let r = r_min_from_gap(phi, mode, tc.v_inf, tc.gap_inf).map_err(|e| HarnessError::Core {
                context: "r_min".into(),
                source: e,
            })?;
            println!("V_inf = {:e}", tc.v_inf);
            println!("rho_inf = 1 - {:e}", tc.gap_inf);
            if let Ok(a) = asymptotic_bound(&tc) {
                println!("asymptotic_bound = {a:e}");
            }
            println!("r_min = {r}");
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    match execute(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
