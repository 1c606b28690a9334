//! Run configuration: flat `key = value` lines with dotted section prefixes.
//!
//! Unknown keys are rejected. Lists (per-channel efficiencies and dark rates)
//! are comma separated; a single value applies to all eight channels.

use crate::coincidence::{OptimizerConfig, WindowMode};
use crate::linalg::{Mat2, Mat4, C64};
use crate::par::Execution;
use crate::photon::{ChannelConfig, DetectorConfig, SourceConfig, CHANNELS};
use std::fmt::Write as _;
use std::path::PathBuf;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ConfigError {
    #[error("line {line}: expected key = value")]
    Syntax { line: usize },
    #[error("unknown key {0}")]
    UnknownKey(String),
    #[error("bad value for {key}: {reason}")]
    BadValue { key: String, reason: String },
}

/// How Bob's measurement bases are chosen.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PlanMode {
    /// From the nearest pure state of the tomographic estimate.
    Optimal,
    /// `σ_3` / `σ_1` with the signs of an undisturbed `|ψ_1⟩`.
    Fixed,
}

/// Polarization rotation of one fibre: axis on the Bloch sphere and angle.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Rotation {
    pub axis: [f64; 3],
    pub angle_deg: f64,
}

impl Rotation {
    pub fn none() -> Self {
        Rotation {
            axis: [0.0, 1.0, 0.0],
            angle_deg: 0.0,
        }
    }

    pub fn matrix(&self) -> Mat2 {
        Mat2::rotation(self.axis, self.angle_deg.to_radians())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    pub mixing_p: f64,
    /// Explicit source state, row-major; replaces the Werner family.
    pub density: Option<Mat4>,
    pub pair_rate_hz: f64,
    pub alice_rotation: Rotation,
    pub bob_rotation: Rotation,
    pub efficiency: [f64; CHANNELS],
    pub dark_rate_hz: [f64; CHANNELS],
    pub jitter_ps: f64,
    pub dead_time_ps: u64,
    pub tomography_shots: u64,
    pub duration_s: f64,
    pub plan_mode: PlanMode,
    pub window_mode: WindowMode,
    pub target_qber: f64,
    pub bin_width_ps: u64,
    /// Histograms span `±range_ps` around zero delay (rounded out to whole bins).
    pub range_ps: u64,
    pub max_half_width_ps: u64,
    pub grid_steps: usize,
    pub seed: u64,
    pub out: PathBuf,
    pub execution: Execution,
}

const KEYS: &[&str] = &[
    "source.mixing_p",
    "source.density",
    "source.pair_rate_hz",
    "channel.alice_axis",
    "channel.alice_angle_deg",
    "channel.bob_axis",
    "channel.bob_angle_deg",
    "detector.efficiency",
    "detector.dark_rate_hz",
    "detector.jitter_ps",
    "detector.dead_time_ps",
    "tomography.shots",
    "session.duration_s",
    "plan.mode",
    "window.mode",
    "window.half_width_ps",
    "window.target_qber",
    "window.bin_width_ps",
    "window.range_ps",
    "window.max_half_width_ps",
    "window.grid_steps",
    "run.seed",
    "run.out",
    "run.execution",
];

impl RunConfig {
    /// Fitted to a laboratory link with ~0.94 source fidelity: roughly 5% QBER
    /// at 1 ns full-width windows, 10% at 4 ns. Dark and background counts
    /// are concentrated on the diagonal-basis detectors, whose free-space
    /// path picks up more stray light.
    pub fn calibrated() -> Self {
        RunConfig {
            mixing_p: 0.92,
            density: None,
            pair_rate_hz: 9.4e5,
            alice_rotation: Rotation::none(),
            bob_rotation: Rotation::none(),
            efficiency: [0.3; CHANNELS],
            dark_rate_hz: [2.0e3, 2.0e3, 5.5e5, 5.5e5, 2.0e3, 2.0e3, 5.5e5, 5.5e5],
            jitter_ps: 282.0,
            dead_time_ps: 0,
            tomography_shots: 100_000,
            duration_s: 10.0,
            plan_mode: PlanMode::Optimal,
            window_mode: WindowMode::PerBasis,
            target_qber: 0.11,
            bin_width_ps: 100,
            range_ps: 10_000,
            max_half_width_ps: 8000,
            grid_steps: 24,
            seed: 1,
            out: PathBuf::from("out"),
            execution: Execution::Parallel,
        }
    }

    /// Pure `|ψ_1⟩`, lossless noiseless detectors.
    pub fn ideal() -> Self {
        RunConfig {
            mixing_p: 1.0,
            pair_rate_hz: 1e5,
            efficiency: [1.0; CHANNELS],
            dark_rate_hz: [0.0; CHANNELS],
            jitter_ps: 0.0,
            duration_s: 0.1,
            window_mode: WindowMode::Fixed { half_width_ps: 50 },
            ..RunConfig::calibrated()
        }
    }

    pub fn source(&self) -> SourceConfig {
        SourceConfig {
            mixing_p: self.mixing_p,
            density: self.density,
            pair_rate_hz: self.pair_rate_hz,
            seed: self.seed,
        }
    }

    pub fn channel(&self) -> ChannelConfig {
        ChannelConfig {
            u_alice: self.alice_rotation.matrix(),
            u_bob: self.bob_rotation.matrix(),
        }
    }

    pub fn detector(&self) -> DetectorConfig {
        DetectorConfig {
            efficiency: self.efficiency,
            dark_rate_hz: self.dark_rate_hz,
            jitter_sigma_ps: self.jitter_ps,
            dead_time_ps: self.dead_time_ps,
        }
    }

    pub fn optimizer(&self) -> OptimizerConfig {
        OptimizerConfig {
            mode: self.window_mode,
            target_qber: self.target_qber,
            max_half_width_ps: self.max_half_width_ps,
            grid_steps: self.grid_steps,
            ..OptimizerConfig::default()
        }
    }

    /// Histogram range: `±range_ps` widened so that zero delay sits at a bin
    /// center.
    pub fn histogram_range(&self) -> (i64, i64) {
        let w = self.bin_width_ps as i64;
        let k = (self.range_ps as i64 + w - 1) / w;
        let half = k * w + w / 2;
        (-half, half)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let bad = |key: &str, reason: &str| {
            Err(ConfigError::BadValue {
                key: key.into(),
                reason: reason.into(),
            })
        };
        self.source()
            .validate()
            .or_else(|e| bad("source", &e.to_string()))?;
        self.channel()
            .validate()
            .or_else(|e| bad("channel", &e.to_string()))?;
        self.detector()
            .validate()
            .or_else(|e| bad("detector", &e.to_string()))?;
        if self.tomography_shots == 0 {
            return bad("tomography.shots", "must be positive");
        }
        if !(self.duration_s > 0.0 && self.duration_s.is_finite()) {
            return bad("session.duration_s", "must be positive");
        }
        if self.bin_width_ps < 2 || !self.bin_width_ps.is_multiple_of(2) {
            return bad("window.bin_width_ps", "must be a positive even number");
        }
        if !(self.target_qber > 0.0 && self.target_qber <= 0.5) {
            return bad("window.target_qber", "must lie in (0, 0.5]");
        }
        if let WindowMode::Fixed { half_width_ps } = self.window_mode {
            if half_width_ps == 0 {
                return bad("window.half_width_ps", "must be positive");
            }
        }
        if self.max_half_width_ps < self.bin_width_ps / 2 {
            return bad("window.max_half_width_ps", "must be at least half a bin");
        }
        if self.range_ps < self.max_half_width_ps {
            return bad("window.range_ps", "must cover the largest window");
        }
        Ok(())
    }

    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let mut cfg = RunConfig::calibrated();
        cfg.apply_text(text)?;
        Ok(cfg)
    }

    pub fn apply_text(&mut self, text: &str) -> Result<(), ConfigError> {
        for (i, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or(ConfigError::Syntax { line: i + 1 })?;
            self.set(k.trim(), v.trim())?;
        }
        Ok(())
    }

    pub fn set(&mut self, key: &str, value: &str) -> Result<(), ConfigError> {
        let bad = |reason: String| ConfigError::BadValue {
            key: key.into(),
            reason,
        };
        let f = |v: &str| v.parse::<f64>().map_err(|e| bad(e.to_string()));
        let u = |v: &str| v.parse::<u64>().map_err(|e| bad(e.to_string()));
        let list = |v: &str| -> Result<[f64; CHANNELS], ConfigError> {
            let vals = v
                .split(',')
                .map(|x| f(x.trim()))
                .collect::<Result<Vec<_>, _>>()?;
            match vals.len() {
                1 => Ok([vals[0]; CHANNELS]),
                CHANNELS => Ok(vals.try_into().unwrap()),
                n => Err(bad(format!("expected 1 or {CHANNELS} values, got {n}"))),
            }
        };
        let axis = |v: &str| -> Result<[f64; 3], ConfigError> {
            let vals = v
                .split(',')
                .map(|x| f(x.trim()))
                .collect::<Result<Vec<_>, _>>()?;
            <[f64; 3]>::try_from(vals).map_err(|_| bad("expected three components".into()))
        };
        // 16 entries, each `re` or `re:im`
        let matrix = |v: &str| -> Result<Mat4, ConfigError> {
            let vals = v
                .split(',')
                .map(|x| {
                    let (re, im) = x.trim().split_once(':').unwrap_or((x.trim(), "0"));
                    Ok(C64::new(f(re.trim())?, f(im.trim())?))
                })
                .collect::<Result<Vec<_>, ConfigError>>()?;
            let n = vals.len();
            <[C64; 16]>::try_from(vals)
                .map(Mat4)
                .map_err(|_| bad(format!("expected 16 entries, got {n}")))
        };
        match key {
            "source.mixing_p" => self.mixing_p = f(value)?,
            "source.density" => {
                self.density = match value {
                    "none" => None,
                    v => Some(matrix(v)?),
                }
            }
            "source.pair_rate_hz" => self.pair_rate_hz = f(value)?,
            "channel.alice_axis" => self.alice_rotation.axis = axis(value)?,
            "channel.alice_angle_deg" => self.alice_rotation.angle_deg = f(value)?,
            "channel.bob_axis" => self.bob_rotation.axis = axis(value)?,
            "channel.bob_angle_deg" => self.bob_rotation.angle_deg = f(value)?,
            "detector.efficiency" => self.efficiency = list(value)?,
            "detector.dark_rate_hz" => self.dark_rate_hz = list(value)?,
            "detector.jitter_ps" => self.jitter_ps = f(value)?,
            "detector.dead_time_ps" => self.dead_time_ps = u(value)?,
            "tomography.shots" => self.tomography_shots = u(value)?,
            "session.duration_s" => self.duration_s = f(value)?,
            "plan.mode" => {
                self.plan_mode = match value {
                    "optimal" => PlanMode::Optimal,
                    "fixed" => PlanMode::Fixed,
                    other => return Err(bad(format!("unknown plan mode {other}"))),
                }
            }
            "window.mode" => {
                self.window_mode = match value {
                    "fixed" => WindowMode::Fixed {
                        half_width_ps: match self.window_mode {
                            WindowMode::Fixed { half_width_ps } => half_width_ps,
                            _ => 500,
                        },
                    },
                    "overall" => WindowMode::OverallOnly,
                    "per-basis" => WindowMode::PerBasis,
                    other => return Err(bad(format!("unknown window mode {other}"))),
                }
            }
            "window.half_width_ps" => {
                self.window_mode = WindowMode::Fixed {
                    half_width_ps: u(value)?,
                }
            }
            "window.target_qber" => self.target_qber = f(value)?,
            "window.bin_width_ps" => self.bin_width_ps = u(value)?,
            "window.range_ps" => self.range_ps = u(value)?,
            "window.max_half_width_ps" => self.max_half_width_ps = u(value)?,
            "window.grid_steps" => self.grid_steps = u(value)? as usize,
            "run.seed" => self.seed = u(value)?,
            "run.out" => self.out = PathBuf::from(value),
            "run.execution" => {
                self.execution = match value {
                    "parallel" => Execution::Parallel,
                    "sequential" => Execution::Sequential,
                    other => return Err(bad(format!("unknown execution {other}"))),
                }
            }
            other => return Err(ConfigError::UnknownKey(other.into())),
        }
        Ok(())
    }

    /// Canonical text form; `parse(to_text())` restores the configuration.
    /// `run.out` and `run.execution` are left out so that the written copy
    /// does not depend on where or how a run was launched.
    pub fn to_text(&self) -> String {
        let join = |v: &[f64]| {
            v.iter()
                .map(|x| x.to_string())
                .collect::<Vec<_>>()
                .join(",")
        };
        let mut s = String::new();
        let mut kv = |k: &str, v: String| writeln!(s, "{k} = {v}").unwrap();
        kv("source.mixing_p", self.mixing_p.to_string());
        if let Some(m) = &self.density {
            let entries: Vec<String> = m.0.iter().map(|z| format!("{}:{}", z.re, z.im)).collect();
            kv("source.density", entries.join(","));
        }
        kv("source.pair_rate_hz", self.pair_rate_hz.to_string());
        kv("channel.alice_axis", join(&self.alice_rotation.axis));
        kv(
            "channel.alice_angle_deg",
            self.alice_rotation.angle_deg.to_string(),
        );
        kv("channel.bob_axis", join(&self.bob_rotation.axis));
        kv(
            "channel.bob_angle_deg",
            self.bob_rotation.angle_deg.to_string(),
        );
        kv("detector.efficiency", join(&self.efficiency));
        kv("detector.dark_rate_hz", join(&self.dark_rate_hz));
        kv("detector.jitter_ps", self.jitter_ps.to_string());
        kv("detector.dead_time_ps", self.dead_time_ps.to_string());
        kv("tomography.shots", self.tomography_shots.to_string());
        kv("session.duration_s", self.duration_s.to_string());
        kv(
            "plan.mode",
            match self.plan_mode {
                PlanMode::Optimal => "optimal",
                PlanMode::Fixed => "fixed",
            }
            .into(),
        );
        kv("window.mode", self.window_mode.name().into());
        if let WindowMode::Fixed { half_width_ps } = self.window_mode {
            kv("window.half_width_ps", half_width_ps.to_string());
        }
        kv("window.target_qber", self.target_qber.to_string());
        kv("window.bin_width_ps", self.bin_width_ps.to_string());
        kv("window.range_ps", self.range_ps.to_string());
        kv(
            "window.max_half_width_ps",
            self.max_half_width_ps.to_string(),
        );
        kv("window.grid_steps", self.grid_steps.to_string());
        kv("run.seed", self.seed.to_string());
        s
    }

    pub fn known_keys() -> &'static [&'static str] {
        KEYS
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn text_round_trip() {
        let mut cfg = RunConfig::calibrated();
        cfg.set("channel.bob_angle_deg", "37.5").unwrap();
        cfg.set("window.half_width_ps", "2000").unwrap();
        cfg.set("detector.efficiency", "0.1,0.2,0.3,0.4,0.5,0.6,0.7,0.8")
            .unwrap();
        let back = RunConfig::parse(&cfg.to_text()).unwrap();
        assert_eq!(back, cfg);
        for k in KEYS {
            let listed = cfg.to_text().contains(k)
                || [
                    "run.out",
                    "run.execution",
                    "window.half_width_ps",
                    "source.density",
                ]
                .contains(k);
            assert!(listed, "{k}");
        }
    }

    #[test]
    fn explicit_density_matrix() {
        let mut cfg = RunConfig::calibrated();
        // |ψ_1⟩⟨ψ_1| with a small imaginary coherence
        let rho = "0,0,0,0, 0,0.5,-0.5:0.1,0, 0,-0.5:-0.1,0.5,0, 0,0,0,0";
        cfg.set("source.density", rho).unwrap();
        assert!(cfg.validate().is_err(), "not positive");
        cfg.set(
            "source.density",
            "0.25,0,0,0, 0,0.25,0:0.1,0, 0,0:-0.1,0.25,0, 0,0,0,0.25",
        )
        .unwrap();
        cfg.validate().unwrap();
        assert_eq!(RunConfig::parse(&cfg.to_text()).unwrap(), cfg);
        let state = crate::photon::build_state(&cfg.source()).unwrap();
        assert_eq!(state.matrix().get(1, 2), C64::new(0.0, 0.1));
        assert!(cfg.set("source.density", "1,0,0").is_err());
        cfg.set("source.density", "none").unwrap();
        assert_eq!(cfg.density, None);
    }

    #[test]
    fn rejects_unknown_and_malformed() {
        assert_eq!(
            RunConfig::parse("source.colour = 3"),
            Err(ConfigError::UnknownKey("source.colour".into()))
        );
        assert_eq!(
            RunConfig::parse("\n\nsource.mixing_p 3"),
            Err(ConfigError::Syntax { line: 3 })
        );
        assert!(RunConfig::parse("detector.dark_rate_hz = 1,2").is_err());
        assert!(RunConfig::parse("window.mode = sideways").is_err());
        let mut cfg = RunConfig::calibrated();
        cfg.mixing_p = 1.5;
        assert!(cfg.validate().is_err());
        assert!(RunConfig::calibrated().validate().is_ok());
        assert!(RunConfig::ideal().validate().is_ok());
    }

    #[test]
    fn histogram_range_centers_zero() {
        let cfg = RunConfig::calibrated();
        let (lo, hi) = cfg.histogram_range();
        assert_eq!((hi - lo) % cfg.bin_width_ps as i64, 0);
        assert_eq!(lo, -10_050);
        assert_eq!(hi, 10_050);
    }
}
