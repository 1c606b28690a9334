//! End-to-end runs: tomography, plan, session, correlation, window choice,
//! sifting and reporting, plus parameter sweeps and replay of recorded
//! time-tags.
//!
//! Every stage draws from its own sub-seed (`seed::derive(master, label)`
//! with labels `tomography` and `session`), so identical configurations
//! produce byte-identical output trees.

use crate::basis::{optimal_bases, BasisPlan};
use crate::coincidence::{
    correlate_pairs, count_in_windows, forecast_for_windows, histograms_to_text, optimize_windows,
    sift, CorrelationHistogram, DetectorPair, OptimizationResult, OptimizerConfig, PairCounts,
    SiftResult, WindowFile, WindowMode,
};
use crate::config::{ConfigError, PlanMode, RunConfig};
use crate::messages::{Direction, MessageLog, Payload};
use crate::par::Execution;
use crate::photon::{build_state, channel_role, generate_session, Party, Session, TimestampStream};
use crate::quantum::{apply_local, DensityMatrix4};
use crate::report::{
    sig6, PlanReport, SessionReport, SiftReport, StateReport, StreamReport, WindowReport,
};
use crate::tomography::{reconstruct, simulate_counts, CountsTable};
use crate::{seed, ttag};
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("config: {0}")]
    Config(#[from] ConfigError),
    #[error("{stage}: {message}")]
    Stage {
        stage: &'static str,
        message: String,
    },
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
}

impl PipelineError {
    /// True for bad configuration or bad input data, as opposed to I/O
    /// failures.
    pub fn is_validation(&self) -> bool {
        !matches!(self, PipelineError::Io { .. })
    }
}

fn at<E: std::fmt::Display>(stage: &'static str) -> impl Fn(E) -> PipelineError {
    move |e| PipelineError::Stage {
        stage,
        message: e.to_string(),
    }
}

fn write_file(path: &Path, contents: &str) -> Result<(), PipelineError> {
    std::fs::write(path, contents).map_err(|source| PipelineError::Io {
        path: path.to_path_buf(),
        source,
    })
}

fn read_file(path: &Path) -> Result<String, PipelineError> {
    std::fs::read_to_string(path).map_err(|source| PipelineError::Io {
        path: path.to_path_buf(),
        source,
    })
}

/// Where the coincidence windows come from.
pub enum WindowChoice {
    Optimize(OptimizerConfig),
    Given(WindowFile),
}

/// Everything downstream of the two time-tag streams.
pub struct Analysis {
    pub histograms: Vec<CorrelationHistogram>,
    pub optimization: Option<OptimizationResult>,
    pub windows: WindowFile,
    pub counts: PairCounts,
    pub sift: SiftResult,
    pub messages: MessageLog,
    pub report: SessionReport,
}

/// Correlates, picks windows, sifts and reports. Run and replay share this
/// path, so a replay of a run's files reproduces the run's report.
#[allow(clippy::too_many_arguments)]
pub fn analyze(
    alice: &TimestampStream,
    bob: &TimestampStream,
    plan: &BasisPlan,
    estimate: Option<&DensityMatrix4>,
    choice: WindowChoice,
    bin_width_ps: u64,
    range_ps: (i64, i64),
    exec: Execution,
) -> Result<Analysis, PipelineError> {
    let duration_ps = alice.duration_ps.max(bob.duration_ps);
    let duration_s = duration_ps as f64 / crate::photon::PS_PER_S;
    let pairs = DetectorPair::same_basis();
    let histograms = correlate_pairs(alice, bob, &pairs, bin_width_ps, range_ps, exec)
        .map_err(at("correlate"))?;

    let (optimization, windows) = match choice {
        WindowChoice::Optimize(cfg) => {
            let opt = optimize_windows(&histograms, plan, duration_s, &cfg, exec)
                .map_err(at("optimize"))?;
            let file = WindowFile {
                mode: cfg.mode.name().into(),
                target_qber: cfg.target_qber,
                feasible: opt.feasible,
                duration_ps,
                bin_width_ps,
                range_ps,
                windows: opt.windows.clone(),
            };
            (Some(opt), file)
        }
        WindowChoice::Given(file) => (None, file),
    };
    let fixed_hw = windows.windows.first().map_or(1, |w| w.half_width_ps);
    let mode =
        WindowMode::from_name(&windows.mode, fixed_hw).ok_or_else(|| PipelineError::Stage {
            stage: "windows",
            message: format!("unknown window mode {}", windows.mode),
        })?;
    let forecast = forecast_for_windows(&histograms, &windows.windows, plan, duration_s);
    let feasible = forecast.violation(mode, windows.target_qber) == 0.0;
    let windows = WindowFile {
        feasible,
        ..windows
    };

    let counts = count_in_windows(alice, bob, &windows.windows, exec).map_err(at("count"))?;
    let sifted = sift(&counts, plan).map_err(at("sift"))?;
    let messages = public_messages(alice, &sifted, bob);

    let report = SessionReport {
        state: estimate.map(StateReport::of),
        plan: PlanReport::of(plan, estimate),
        streams: StreamReport {
            duration_s: sig6(duration_s),
            alice_events: alice.events.len() as u64,
            bob_events: bob.events.len() as u64,
        },
        windows: WindowReport::of(&windows, &forecast),
        sift: SiftReport::of(&sifted),
        simulation: None,
    };
    Ok(Analysis {
        histograms,
        optimization,
        windows,
        counts,
        sift: sifted,
        messages,
        report,
    })
}

/// The public exchange: Alice's click times and bases, Bob's bases on the
/// coincident clicks, and the list of Alice's clicks that carry no key bit.
pub fn public_messages(
    alice: &TimestampStream,
    sifted: &SiftResult,
    bob: &TimestampStream,
) -> MessageLog {
    let mut log = MessageLog::default();
    let times: Vec<u64> = alice.events.iter().map(|e| e.time_ps).collect();
    log.append(Direction::AliceToBob, Payload::Timestamps(&times));
    drop(times);
    let alice_bases: Vec<(u64, u8)> = alice
        .events
        .iter()
        .enumerate()
        .map(|(i, e)| (i as u64, channel_role(e.channel).0 as u8))
        .collect();
    log.append(Direction::AliceToBob, Payload::BasisTags(&alice_bases));
    drop(alice_bases);
    let bob_bases: Vec<(u64, u8)> = sifted
        .matched_pair_tags
        .iter()
        .map(|t| {
            (
                t.alice_index as u64,
                channel_role(bob.events[t.bob_index].channel).0 as u8,
            )
        })
        .collect();
    log.append(Direction::BobToAlice, Payload::BasisTags(&bob_bases));
    log.append(
        Direction::BobToAlice,
        Payload::DiscardList(&discard_list(alice, sifted)),
    );
    log
}

/// Indices of Alice's clicks that do not contribute a sifted bit.
pub fn discard_list(alice: &TimestampStream, sifted: &SiftResult) -> Vec<u64> {
    let mut keep = vec![false; alice.events.len()];
    for t in &sifted.matched_pair_tags {
        keep[t.alice_index] = true;
    }
    keep.iter()
        .enumerate()
        .filter(|(_, &k)| !k)
        .map(|(i, _)| i as u64)
        .collect()
}

/// Alice's key from her private click record and the public discard list:
/// surviving clicks in time order, `H`/`D` → 0, `V`/`A` → 1.
pub fn alice_key_from_discards(alice: &TimestampStream, discards: &[u64]) -> Vec<u8> {
    let mut drop = vec![false; alice.events.len()];
    for &i in discards {
        drop[i as usize] = true;
    }
    alice
        .events
        .iter()
        .zip(drop)
        .filter(|(_, d)| !d)
        .map(|(e, _)| channel_role(e.channel).1 as u8)
        .collect()
}

/// In-memory products of a full run.
pub struct Artifacts {
    pub config_text: String,
    pub tomography: CountsTable,
    pub estimate: DensityMatrix4,
    pub plan: BasisPlan,
    pub session: Session,
    pub analysis: Analysis,
    pub report: SessionReport,
}

/// Source state, simulated tomography counts and the reconstructed estimate.
pub fn tomography_stage(
    cfg: &RunConfig,
) -> Result<(DensityMatrix4, CountsTable, DensityMatrix4), PipelineError> {
    cfg.validate()?;
    let state = build_state(&cfg.source()).map_err(at("source"))?;
    let counts = simulate_counts(
        &state,
        &cfg.channel(),
        cfg.tomography_shots,
        seed::derive(cfg.seed, "tomography"),
        cfg.execution,
    )
    .map_err(at("tomography"))?;
    let estimate = reconstruct(&counts).map_err(at("tomography"))?;
    Ok((state, counts, estimate))
}

/// Bob's plan for `mode`, normalized to exactly what the plan file holds.
pub fn plan_stage(mode: PlanMode, estimate: &DensityMatrix4) -> Result<BasisPlan, PipelineError> {
    let plan = match mode {
        PlanMode::Optimal => optimal_bases(estimate).map_err(at("plan"))?,
        PlanMode::Fixed => BasisPlan::conventional(),
    };
    BasisPlan::from_record(&plan.to_record()).map_err(at("plan"))
}

/// Time-tagged clicks of both parties for a given plan.
pub fn session_stage(
    cfg: &RunConfig,
    state: &DensityMatrix4,
    plan: &BasisPlan,
) -> Result<Session, PipelineError> {
    generate_session(
        state,
        &cfg.channel(),
        &cfg.detector(),
        plan,
        cfg.pair_rate_hz,
        cfg.duration_s,
        seed::derive(cfg.seed, "session"),
    )
    .map_err(at("session"))
}

/// Runs every stage in memory.
pub fn execute(cfg: &RunConfig) -> Result<Artifacts, PipelineError> {
    let exec = cfg.execution;
    let (state, tomography, estimate) = tomography_stage(cfg)?;
    let plan = plan_stage(cfg.plan_mode, &estimate)?;
    let session = session_stage(cfg, &state, &plan)?;
    let channel = cfg.channel();
    let analysis = analyze(
        &session.alice,
        &session.bob,
        &plan,
        Some(&estimate),
        WindowChoice::Optimize(cfg.optimizer()),
        cfg.bin_width_ps,
        cfg.histogram_range(),
        exec,
    )?;
    let received = apply_local(&state, &channel.u_alice, &channel.u_bob).map_err(at("source"))?;
    let report = analysis.report.clone().with_simulation(
        match cfg.plan_mode {
            PlanMode::Optimal => "optimal",
            PlanMode::Fixed => "fixed",
        },
        session.emitted_pairs,
        &received,
        analysis
            .optimization
            .as_ref()
            .expect("windows were optimized"),
    );
    Ok(Artifacts {
        config_text: cfg.to_text(),
        tomography,
        estimate,
        plan,
        session,
        analysis,
        report,
    })
}

pub const ARTIFACT_FILES: &[&str] = &[
    "config.txt",
    "counts.txt",
    "plan.txt",
    "alice.ttag",
    "bob.ttag",
    "histograms.txt",
    "windows.txt",
    "messages.log",
    "report.json",
    "report.txt",
];

pub fn write_artifacts(art: &Artifacts, dir: &Path) -> Result<(), PipelineError> {
    std::fs::create_dir_all(dir).map_err(|source| PipelineError::Io {
        path: dir.to_path_buf(),
        source,
    })?;
    let ttag = |name: &str, s: &TimestampStream| {
        let path = dir.join(name);
        ttag::write_stream(&path, s).map_err(|e| PipelineError::Stage {
            stage: "write",
            message: format!("{}: {e}", path.display()),
        })
    };
    write_file(&dir.join("config.txt"), &art.config_text)?;
    write_file(&dir.join("counts.txt"), &art.tomography.to_text())?;
    write_file(&dir.join("plan.txt"), &art.plan.to_record())?;
    ttag("alice.ttag", &art.session.alice)?;
    ttag("bob.ttag", &art.session.bob)?;
    write_file(
        &dir.join("histograms.txt"),
        &histograms_to_text(&art.analysis.histograms),
    )?;
    write_file(&dir.join("windows.txt"), &art.analysis.windows.to_text())?;
    write_file(&dir.join("messages.log"), &art.analysis.messages.to_text())?;
    write_file(&dir.join("report.json"), &art.report.to_json())?;
    write_file(&dir.join("report.txt"), &art.report.to_text())?;
    Ok(())
}

/// Executes all stages and writes the output tree to `cfg.out`.
pub fn run_pipeline(cfg: &RunConfig) -> Result<SessionReport, PipelineError> {
    let art = execute(cfg)?;
    write_artifacts(&art, &cfg.out)?;
    Ok(art.report)
}

/// Inputs for [`replay`].
pub struct ReplayInputs<'a> {
    pub alice: &'a Path,
    pub bob: &'a Path,
    pub plan: &'a Path,
    pub windows: &'a Path,
    pub counts: Option<&'a Path>,
}

/// Re-analyzes recorded time-tags with a given plan and window set.
pub fn replay(inputs: &ReplayInputs<'_>, exec: Execution) -> Result<SessionReport, PipelineError> {
    let windows = WindowFile::from_text(&read_file(inputs.windows)?).map_err(at("windows"))?;
    let plan = BasisPlan::from_record(&read_file(inputs.plan)?).map_err(at("plan"))?;
    let estimate = match inputs.counts {
        Some(p) => {
            let table = CountsTable::from_text(&read_file(p)?).map_err(at("tomography"))?;
            Some(reconstruct(&table).map_err(at("tomography"))?)
        }
        None => None,
    };
    let load = |path: &Path, party: Party| {
        ttag::read_stream(path, party, windows.duration_ps).map_err(|e| PipelineError::Stage {
            stage: "ttag",
            message: format!("{}: {e}", path.display()),
        })
    };
    let alice = load(inputs.alice, Party::Alice)?;
    let bob = load(inputs.bob, Party::Bob)?;
    let (bw, range) = (windows.bin_width_ps, windows.range_ps);
    let a = analyze(
        &alice,
        &bob,
        &plan,
        estimate.as_ref(),
        WindowChoice::Given(windows),
        bw,
        range,
        exec,
    )?;
    Ok(a.report)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SweepParam {
    MixingP,
    /// Bob's fibre rotation angle in degrees about `channel.bob_axis`.
    ChannelRotation,
    /// Fixed-window half-width in picoseconds.
    HalfWidth,
    Mode,
    Seed,
}

impl SweepParam {
    pub fn parse(s: &str) -> Option<Self> {
        Some(match s {
            "mixing_p" => SweepParam::MixingP,
            "channel-rotation" => SweepParam::ChannelRotation,
            "half-width" => SweepParam::HalfWidth,
            "mode" => SweepParam::Mode,
            "seed" => SweepParam::Seed,
            _ => return None,
        })
    }

    pub fn name(self) -> &'static str {
        match self {
            SweepParam::MixingP => "mixing_p",
            SweepParam::ChannelRotation => "channel-rotation",
            SweepParam::HalfWidth => "half-width",
            SweepParam::Mode => "mode",
            SweepParam::Seed => "seed",
        }
    }

    pub fn apply(self, cfg: &RunConfig, value: &str) -> Result<RunConfig, ConfigError> {
        let mut c = cfg.clone();
        match self {
            SweepParam::MixingP => c.set("source.mixing_p", value)?,
            SweepParam::ChannelRotation => c.set("channel.bob_angle_deg", value)?,
            SweepParam::HalfWidth => c.set("window.half_width_ps", value)?,
            SweepParam::Mode => c.set("window.mode", value)?,
            SweepParam::Seed => c.set("run.seed", value)?,
        }
        c.validate()?;
        Ok(c)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SweepRow {
    pub value: String,
    pub report: SessionReport,
}

/// Runs one pipeline per value, each into `out/point_NNN` when `write` is
/// set, and writes the plot-ready `out/sweep.tsv`. Points share the master
/// seed, so equal values give equal rows.
pub fn sweep(
    cfg: &RunConfig,
    param: SweepParam,
    values: &[String],
    write: bool,
) -> Result<Vec<SweepRow>, PipelineError> {
    let points: Vec<(usize, RunConfig, String)> = values
        .iter()
        .enumerate()
        .map(|(k, v)| {
            let mut c = param.apply(cfg, v)?;
            c.out = cfg.out.join(format!("point_{k:03}"));
            Ok((k, c, v.clone()))
        })
        .collect::<Result<_, ConfigError>>()?;
    let rows = cfg
        .execution
        .map_owned(points, |(_, c, value)| {
            let art = execute(&c)?;
            if write {
                write_artifacts(&art, &c.out)?;
            }
            Ok(SweepRow {
                value,
                report: art.report,
            })
        })
        .into_iter()
        .collect::<Result<Vec<_>, PipelineError>>()?;
    if write {
        std::fs::create_dir_all(&cfg.out).map_err(|source| PipelineError::Io {
            path: cfg.out.clone(),
            source,
        })?;
        write_file(&cfg.out.join("sweep.tsv"), &sweep_table(param, &rows))?;
    }
    Ok(rows)
}

pub fn sweep_table(param: SweepParam, rows: &[SweepRow]) -> String {
    let mut s = format!(
        "{}\tfidelity\tconcurrence\ttrue_fidelity\tqber\tqber_z\tqber_x\tkey_rate_bps\tbits\tfeasible\n",
        param.name()
    );
    for r in rows {
        let st = r.report.state.as_ref();
        let truth = r.report.simulation.as_ref().map(|s| &s.true_state);
        let k = &r.report.sift;
        writeln!(
            s,
            "{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}",
            r.value,
            st.map_or(f64::NAN, |x| x.fidelity_psi1),
            st.map_or(f64::NAN, |x| x.concurrence),
            truth.map_or(f64::NAN, |x| x.fidelity_psi1),
            k.qber_overall,
            k.qber_per_basis[0],
            k.qber_per_basis[1],
            k.key_rate_bps,
            k.bits,
            r.report.windows.feasible
        )
        .unwrap();
    }
    s
}
