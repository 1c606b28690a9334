//! `qkdsim`: runs the simulation and analysis pipeline, either end to end
//! (`run`, `sweep`) or one stage at a time, each stage reading the files the
//! previous one wrote.
//!
//! Exit status: 0 on success, 1 on I/O failure, 2 on invalid configuration
//! or input data, 3 when the window optimization cannot meet its QBER target.

use clap::{Args, Parser, Subcommand};
use qkd_core::basis::BasisPlan;
use qkd_core::coincidence::{
    histograms_from_text, histograms_to_text, optimize_windows, DetectorPair, WindowFile,
};
use qkd_core::config::{ConfigError, RunConfig};
use qkd_core::photon::{Party, PS_PER_S};
use qkd_core::pipeline::{
    analyze, plan_stage, replay, run_pipeline, session_stage, sweep, sweep_table, tomography_stage,
    PipelineError, ReplayInputs, SweepParam, WindowChoice,
};
use qkd_core::report::{PlanReport, SessionReport, StateReport};
use qkd_core::tomography::{reconstruct, CountsTable};
use qkd_core::{coincidence, ttag};
use std::fmt::Display;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

#[derive(Parser)]
#[command(
    name = "qkdsim",
    version,
    about = "Entanglement-based QKD session simulator"
)]
struct Cli {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Configuration file of `key = value` lines.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Master seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Override one configuration key, e.g. `--set source.mixing_p=0.8`.
    #[arg(long = "set", value_name = "KEY=VALUE", global = true)]
    overrides: Vec<String>,
    /// Session length in seconds.
    #[arg(long, global = true)]
    duration: Option<f64>,
    /// Werner weight of the source state.
    #[arg(long, global = true)]
    mixing_p: Option<f64>,
    /// Window mode: fixed, overall or per-basis.
    #[arg(long, global = true)]
    window_mode: Option<String>,
    /// Fixed window half-width in picoseconds.
    #[arg(long, global = true)]
    half_width: Option<u64>,
    /// Run on the calling thread only.
    #[arg(long, global = true)]
    sequential: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate both parties' time-tags.
    Simulate {
        /// Bob's plan; computed from a tomography run when absent.
        #[arg(long)]
        plan: Option<PathBuf>,
    },
    /// Simulate tomography counts, or reconstruct from recorded ones.
    Tomography {
        #[arg(long)]
        counts: Option<PathBuf>,
    },
    /// Compute Bob's measurement bases from a counts table.
    Plan {
        #[arg(long)]
        counts: Option<PathBuf>,
    },
    /// Cross-correlate the same-basis detector pairs.
    Correlate {
        #[arg(long)]
        alice: Option<PathBuf>,
        #[arg(long)]
        bob: Option<PathBuf>,
    },
    /// Choose coincidence windows from histograms.
    Optimize {
        #[arg(long)]
        histograms: Option<PathBuf>,
        #[arg(long)]
        plan: Option<PathBuf>,
    },
    /// Count coincidences in given windows and sift the key.
    Sift {
        #[command(flatten)]
        files: SessionFiles,
    },
    /// Full pipeline.
    Run,
    /// One full run per parameter value.
    Sweep {
        /// mixing_p, channel-rotation, half-width, mode or seed.
        #[arg(long)]
        param: String,
        /// Comma-separated values.
        #[arg(long, value_delimiter = ',', num_args = 0..)]
        values: Vec<String>,
        /// Only write the summary table.
        #[arg(long)]
        table_only: bool,
    },
    /// Re-analyze recorded time-tags with a given plan and window set.
    Replay {
        #[command(flatten)]
        files: SessionFiles,
        #[arg(long)]
        counts: Option<PathBuf>,
    },
}

#[derive(Args)]
struct SessionFiles {
    #[arg(long)]
    alice: Option<PathBuf>,
    #[arg(long)]
    bob: Option<PathBuf>,
    #[arg(long)]
    plan: Option<PathBuf>,
    #[arg(long)]
    windows: Option<PathBuf>,
}

enum Failure {
    Io(String),
    Invalid(String),
    Infeasible(String),
}

impl Failure {
    fn invalid(e: impl Display) -> Self {
        Failure::Invalid(e.to_string())
    }
}

impl From<PipelineError> for Failure {
    fn from(e: PipelineError) -> Self {
        if e.is_validation() {
            Failure::Invalid(e.to_string())
        } else {
            Failure::Io(e.to_string())
        }
    }
}

impl From<ConfigError> for Failure {
    fn from(e: ConfigError) -> Self {
        Failure::Invalid(format!("config: {e}"))
    }
}

fn read(path: &Path) -> Result<String, Failure> {
    std::fs::read_to_string(path).map_err(|e| Failure::Io(format!("{}: {e}", path.display())))
}

fn write(path: &Path, text: &str) -> Result<(), Failure> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir).map_err(|e| Failure::Io(format!("{}: {e}", dir.display())))?;
    }
    std::fs::write(path, text).map_err(|e| Failure::Io(format!("{}: {e}", path.display())))
}

fn load_config(c: &Common) -> Result<RunConfig, Failure> {
    let mut cfg = match &c.config {
        Some(p) => RunConfig::parse(&read(p)?)?,
        None => RunConfig::calibrated(),
    };
    if let Some(s) = c.seed {
        cfg.seed = s;
    }
    if let Some(o) = &c.out {
        cfg.out = o.clone();
    }
    if let Some(d) = c.duration {
        cfg.duration_s = d;
    }
    if let Some(p) = c.mixing_p {
        cfg.mixing_p = p;
    }
    if let Some(m) = &c.window_mode {
        cfg.set("window.mode", m)?;
    }
    if let Some(h) = c.half_width {
        cfg.set("window.half_width_ps", &h.to_string())?;
    }
    if c.sequential {
        cfg.execution = qkd_core::Execution::Sequential;
    }
    for kv in &c.overrides {
        let (k, v) = kv
            .split_once('=')
            .ok_or_else(|| Failure::Invalid(format!("--set expects KEY=VALUE, got {kv}")))?;
        cfg.set(k.trim(), v.trim())?;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn load_plan(path: &Path) -> Result<BasisPlan, Failure> {
    BasisPlan::from_record(&read(path)?)
        .map_err(|e| Failure::Invalid(format!("{}: {e}", path.display())))
}

fn load_stream(
    path: &Path,
    party: Party,
    duration_ps: u64,
) -> Result<qkd_core::photon::TimestampStream, Failure> {
    ttag::read_stream(path, party, duration_ps).map_err(|e| match e {
        ttag::TtagError::Io(io) => Failure::Io(format!("{}: {io}", path.display())),
        other => Failure::Invalid(format!("{}: {other}", path.display())),
    })
}

fn print_json<T: serde::Serialize>(value: &T) {
    println!(
        "{}",
        serde_json::to_string_pretty(value).expect("serializable")
    );
}

fn infeasible(report: &SessionReport) -> Failure {
    Failure::Infeasible(format!(
        "no window set meets the {:.2}% QBER target (forecast {:.2}%)",
        100.0 * report.windows.target_qber,
        100.0 * report.windows.forecast.qber_overall
    ))
}

fn run(cli: Cli) -> Result<(), Failure> {
    let cfg = load_config(&cli.common)?;
    let out = cfg.out.clone();
    let duration_ps = (cfg.duration_s * PS_PER_S).round() as u64;
    let or = |p: &Option<PathBuf>, name: &str| p.clone().unwrap_or_else(|| out.join(name));
    match &cli.command {
        Command::Simulate { plan } => {
            let (state, counts, estimate) = tomography_stage(&cfg)?;
            let plan = match plan {
                Some(p) => load_plan(p)?,
                None => {
                    write(&out.join("counts.txt"), &counts.to_text())?;
                    let plan = plan_stage(cfg.plan_mode, &estimate)?;
                    write(&out.join("plan.txt"), &plan.to_record())?;
                    plan
                }
            };
            let session = session_stage(&cfg, &state, &plan)?;
            std::fs::create_dir_all(&out)
                .map_err(|e| Failure::Io(format!("{}: {e}", out.display())))?;
            for (name, s) in [("alice.ttag", &session.alice), ("bob.ttag", &session.bob)] {
                let path = out.join(name);
                ttag::write_stream(&path, s)
                    .map_err(|e| Failure::Io(format!("{}: {e}", path.display())))?;
            }
            write(&out.join("config.txt"), &cfg.to_text())?;
            println!(
                "{} pairs emitted, alice {} events, bob {} events",
                session.emitted_pairs,
                session.alice.events.len(),
                session.bob.events.len()
            );
        }
        Command::Tomography { counts } => {
            let table = match counts {
                Some(p) => CountsTable::from_text(&read(p)?).map_err(Failure::invalid)?,
                None => {
                    let (_, table, _) = tomography_stage(&cfg)?;
                    write(&out.join("counts.txt"), &table.to_text())?;
                    table
                }
            };
            let rho = reconstruct(&table).map_err(Failure::invalid)?;
            print_json(&StateReport::of(&rho));
        }
        Command::Plan { counts } => {
            let table = CountsTable::from_text(&read(&or(counts, "counts.txt"))?)
                .map_err(Failure::invalid)?;
            let rho = reconstruct(&table).map_err(Failure::invalid)?;
            let plan = plan_stage(cfg.plan_mode, &rho)?;
            write(&out.join("plan.txt"), &plan.to_record())?;
            print_json(&PlanReport::of(&plan, Some(&rho)));
        }
        Command::Correlate { alice, bob } => {
            let a = load_stream(&or(alice, "alice.ttag"), Party::Alice, duration_ps)?;
            let b = load_stream(&or(bob, "bob.ttag"), Party::Bob, duration_ps)?;
            let hists = coincidence::correlate_pairs(
                &a,
                &b,
                &DetectorPair::same_basis(),
                cfg.bin_width_ps,
                cfg.histogram_range(),
                cfg.execution,
            )
            .map_err(Failure::invalid)?;
            write(&out.join("histograms.txt"), &histograms_to_text(&hists))?;
            for h in &hists {
                let peak = coincidence::find_peak(h).unwrap_or((0, 0));
                println!(
                    "{}  {} pairs, peak {} at {} ps",
                    h.pair,
                    h.total(),
                    peak.1,
                    peak.0
                );
            }
        }
        Command::Optimize { histograms, plan } => {
            let hists = histograms_from_text(&read(&or(histograms, "histograms.txt"))?)
                .map_err(Failure::invalid)?;
            let plan = load_plan(&or(plan, "plan.txt"))?;
            let opt = optimize_windows(
                &hists,
                &plan,
                cfg.duration_s,
                &cfg.optimizer(),
                cfg.execution,
            )
            .map_err(Failure::invalid)?;
            let first = hists
                .first()
                .ok_or_else(|| Failure::Invalid("no histograms".into()))?;
            let file = WindowFile {
                mode: opt.mode.name().into(),
                target_qber: opt.target_qber,
                feasible: opt.feasible,
                duration_ps,
                bin_width_ps: first.bin_width_ps,
                range_ps: first.range_ps,
                windows: opt.windows.clone(),
            };
            write(&out.join("windows.txt"), &file.to_text())?;
            let f = &opt.forecast;
            let q = f.qber_per_basis();
            println!(
                "{} windows, half-widths {:?} ps: forecast qber {:.3}% (z {:.3}%, x {:.3}%), {:.1} bit/s",
                opt.mode.name(),
                opt.half_widths_ps,
                100.0 * f.qber_overall(),
                100.0 * q[0],
                100.0 * q[1],
                f.key_rate_bps()
            );
            if !opt.feasible {
                return Err(Failure::Infeasible(format!(
                    "no window set meets the {:.2}% QBER target",
                    100.0 * opt.target_qber
                )));
            }
        }
        Command::Sift { files } => {
            let windows = WindowFile::from_text(&read(&or(&files.windows, "windows.txt"))?)
                .map_err(Failure::invalid)?;
            let plan = load_plan(&or(&files.plan, "plan.txt"))?;
            let a = load_stream(
                &or(&files.alice, "alice.ttag"),
                Party::Alice,
                windows.duration_ps,
            )?;
            let b = load_stream(&or(&files.bob, "bob.ttag"), Party::Bob, windows.duration_ps)?;
            let (bw, range) = (windows.bin_width_ps, windows.range_ps);
            let analysis = analyze(
                &a,
                &b,
                &plan,
                None,
                WindowChoice::Given(windows),
                bw,
                range,
                cfg.execution,
            )?;
            write(&out.join("messages.log"), &analysis.messages.to_text())?;
            write(&out.join("report.json"), &analysis.report.to_json())?;
            write(&out.join("report.txt"), &analysis.report.to_text())?;
            print!("{}", analysis.report.to_text());
        }
        Command::Run => {
            let report = run_pipeline(&cfg)?;
            print!("{}", report.to_text());
            if !report.windows.feasible {
                return Err(infeasible(&report));
            }
        }
        Command::Sweep {
            param,
            values,
            table_only,
        } => {
            let p = SweepParam::parse(param)
                .ok_or_else(|| Failure::Invalid(format!("unknown sweep parameter {param}")))?;
            let values: Vec<String> = values.iter().filter(|v| !v.is_empty()).cloned().collect();
            let rows = sweep(&cfg, p, &values, !table_only)?;
            let table = sweep_table(p, &rows);
            if *table_only {
                write(&out.join("sweep.tsv"), &table)?;
            }
            print!("{table}");
        }
        Command::Replay { files, counts } => {
            let [a, b, plan, windows] = [
                or(&files.alice, "alice.ttag"),
                or(&files.bob, "bob.ttag"),
                or(&files.plan, "plan.txt"),
                or(&files.windows, "windows.txt"),
            ];
            let report = replay(
                &ReplayInputs {
                    alice: &a,
                    bob: &b,
                    plan: &plan,
                    windows: &windows,
                    counts: counts.as_deref(),
                },
                cfg.execution,
            )?;
            print!("{}", report.to_json());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            let (code, msg) = match f {
                Failure::Io(m) => (1, m),
                Failure::Invalid(m) => (2, m),
                Failure::Infeasible(m) => (3, m),
            };
            eprintln!("qkdsim: {msg}");
            ExitCode::from(code)
        }
    }
}
