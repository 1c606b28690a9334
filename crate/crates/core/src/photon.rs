//! Synthetic time-tagged detector clicks for both parties.
//!
//! Eight detectors: Alice owns channels 0–3 (`H`, `V`, `D`, `A`), Bob owns
//! 4–7 (`φ_H`, `φ_H^⊥`, `φ_D`, `φ_D^⊥`). Each party picks its basis with a
//! 50:50 splitter, the joint outcome follows the Born rule on the rotated
//! state, and the clicks then pass through detector efficiency, Gaussian
//! timing jitter, per-channel dark counts and dead time.
//!
//! Random draws happen in a fixed order from a single `ChaCha8Rng`:
//! emission times, basis choices, outcomes, efficiency thinning, jitter,
//! dark counts (channel 0 through 7). Jitter draws are skipped when
//! `jitter_sigma_ps` is zero.

use crate::basis::{alice_bases, BasisPlan};
use crate::linalg::{Mat2, Mat4};
use crate::quantum::{apply_local, bell_state, joint_probabilities, DensityMatrix4, QuantumError};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp, Normal};
use thiserror::Error;

pub const CHANNELS: usize = 8;
pub const PS_PER_S: f64 = 1e12;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PhotonError {
    #[error(transparent)]
    Quantum(#[from] QuantumError),
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("channel {channel} does not belong to {party:?}")]
    WrongParty { channel: u8, party: Party },
    #[error("events out of time order at index {0}")]
    Unordered(usize),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Party {
    Alice,
    Bob,
}

impl Party {
    pub fn owns(self, channel: u8) -> bool {
        match self {
            Party::Alice => channel < 4,
            Party::Bob => (4..8).contains(&channel),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Party::Alice => "alice",
            Party::Bob => "bob",
        }
    }
}

/// Alice's channel for basis `0` (`σ_3`) or `1` (`σ_1`) and outcome `0`
/// (plus) or `1` (minus).
#[inline]
pub fn alice_channel(basis: usize, outcome: usize) -> u8 {
    (2 * basis + outcome) as u8
}

/// Bob's channel for plan basis `0` (`basis_z`) or `1` (`basis_x`).
#[inline]
pub fn bob_channel(basis: usize, outcome: usize) -> u8 {
    (4 + 2 * basis + outcome) as u8
}

/// Basis index (0 = z, 1 = x) and outcome (0 = plus, 1 = minus) of a channel.
#[inline]
pub fn channel_role(channel: u8) -> (usize, usize) {
    let local = (channel % 4) as usize;
    (local / 2, local % 2)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SourceConfig {
    /// Werner weight toward `|ψ_1⟩`.
    pub mixing_p: f64,
    /// Explicit state; overrides `mixing_p` when set.
    pub density: Option<Mat4>,
    pub pair_rate_hz: f64,
    pub seed: u64,
}

impl SourceConfig {
    pub fn validate(&self) -> Result<(), PhotonError> {
        if !(0.0..=1.0).contains(&self.mixing_p) {
            return Err(PhotonError::InvalidConfig(format!(
                "mixing_p {} outside [0, 1]",
                self.mixing_p
            )));
        }
        if !(self.pair_rate_hz > 0.0 && self.pair_rate_hz.is_finite()) {
            return Err(PhotonError::InvalidConfig(format!(
                "pair_rate_hz {} must be positive",
                self.pair_rate_hz
            )));
        }
        if let Some(m) = self.density {
            DensityMatrix4::new(m)?;
        }
        Ok(())
    }
}

/// `p·|ψ_1⟩⟨ψ_1| + (1−p)·I/4`, or the explicit matrix when one is given.
pub fn build_state(cfg: &SourceConfig) -> Result<DensityMatrix4, PhotonError> {
    cfg.validate()?;
    match cfg.density {
        Some(m) => Ok(DensityMatrix4::new(m)?),
        None => Ok(DensityMatrix4::werner(cfg.mixing_p, &bell_state(1)?)),
    }
}

/// Polarization rotations picked up in the two fibres.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ChannelConfig {
    pub u_alice: Mat2,
    pub u_bob: Mat2,
}

impl ChannelConfig {
    pub fn identity() -> Self {
        ChannelConfig {
            u_alice: Mat2::identity(),
            u_bob: Mat2::identity(),
        }
    }

    pub fn validate(&self) -> Result<(), PhotonError> {
        for (name, u) in [("alice", &self.u_alice), ("bob", &self.u_bob)] {
            let dev = (*u * u.adjoint()).max_abs_diff(&Mat2::identity());
            if dev > 1e-10 {
                return Err(PhotonError::InvalidConfig(format!(
                    "{name} channel is not unitary (deviation {dev:.3e})"
                )));
            }
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DetectorConfig {
    pub efficiency: [f64; CHANNELS],
    pub dark_rate_hz: [f64; CHANNELS],
    pub jitter_sigma_ps: f64,
    pub dead_time_ps: u64,
}

impl DetectorConfig {
    pub fn ideal() -> Self {
        DetectorConfig {
            efficiency: [1.0; CHANNELS],
            dark_rate_hz: [0.0; CHANNELS],
            jitter_sigma_ps: 0.0,
            dead_time_ps: 0,
        }
    }

    pub fn uniform(efficiency: f64, dark_rate_hz: f64, jitter_sigma_ps: f64) -> Self {
        DetectorConfig {
            efficiency: [efficiency; CHANNELS],
            dark_rate_hz: [dark_rate_hz; CHANNELS],
            jitter_sigma_ps,
            dead_time_ps: 0,
        }
    }

    pub fn validate(&self) -> Result<(), PhotonError> {
        for (ch, &e) in self.efficiency.iter().enumerate() {
            if !(e > 0.0 && e <= 1.0) {
                return Err(PhotonError::InvalidConfig(format!(
                    "efficiency {e} on channel {ch} outside (0, 1]"
                )));
            }
        }
        for (ch, &d) in self.dark_rate_hz.iter().enumerate() {
            if !(d >= 0.0 && d.is_finite()) {
                return Err(PhotonError::InvalidConfig(format!(
                    "dark rate {d} on channel {ch} must be non-negative"
                )));
            }
        }
        if !(self.jitter_sigma_ps >= 0.0 && self.jitter_sigma_ps.is_finite()) {
            return Err(PhotonError::InvalidConfig(
                "jitter must be non-negative".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct EventRecord {
    pub time_ps: u64,
    pub channel: u8,
}

/// One party's click record.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TimestampStream {
    pub party: Party,
    pub events: Vec<EventRecord>,
    pub duration_ps: u64,
}

impl TimestampStream {
    pub fn new(
        party: Party,
        events: Vec<EventRecord>,
        duration_ps: u64,
    ) -> Result<Self, PhotonError> {
        let s = TimestampStream {
            party,
            events,
            duration_ps,
        };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<(), PhotonError> {
        for (i, e) in self.events.iter().enumerate() {
            if !self.party.owns(e.channel) {
                return Err(PhotonError::WrongParty {
                    channel: e.channel,
                    party: self.party,
                });
            }
            if i > 0 && self.events[i - 1].time_ps > e.time_ps {
                return Err(PhotonError::Unordered(i));
            }
        }
        Ok(())
    }

    /// Sorted click times on one channel.
    pub fn channel_times(&self, channel: u8) -> Vec<u64> {
        self.events
            .iter()
            .filter(|e| e.channel == channel)
            .map(|e| e.time_ps)
            .collect()
    }

    pub fn split_channels(&self) -> [Vec<u64>; CHANNELS] {
        let mut out: [Vec<u64>; CHANNELS] = Default::default();
        for e in &self.events {
            out[e.channel as usize].push(e.time_ps);
        }
        out
    }

    pub fn count(&self, channel: u8) -> usize {
        self.events.iter().filter(|e| e.channel == channel).count()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SessionStatus {
    Ok,
    /// The configuration produces no expected events; streams are empty.
    EmptySession,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Session {
    pub alice: TimestampStream,
    pub bob: TimestampStream,
    pub status: SessionStatus,
    pub emitted_pairs: u64,
}

/// Simulates one key-generation session.
pub fn generate_session(
    state: &DensityMatrix4,
    channel: &ChannelConfig,
    detector: &DetectorConfig,
    plan: &BasisPlan,
    pair_rate_hz: f64,
    duration_s: f64,
    seed: u64,
) -> Result<Session, PhotonError> {
    channel.validate()?;
    detector.validate()?;
    if !(pair_rate_hz > 0.0 && pair_rate_hz.is_finite()) {
        return Err(PhotonError::InvalidConfig(
            "pair rate must be positive".into(),
        ));
    }
    if !(duration_s >= 0.0 && duration_s.is_finite()) {
        return Err(PhotonError::InvalidConfig(
            "duration must be non-negative".into(),
        ));
    }
    let duration_ps = (duration_s * PS_PER_S).round() as u64;
    if duration_ps == 0 {
        return Ok(Session {
            alice: TimestampStream::new(Party::Alice, Vec::new(), 0)?,
            bob: TimestampStream::new(Party::Bob, Vec::new(), 0)?,
            status: SessionStatus::EmptySession,
            emitted_pairs: 0,
        });
    }

    let rotated = apply_local(state, &channel.u_alice, &channel.u_bob)?;
    let alice = alice_bases();
    let bob = plan.bases();
    // cumulative outcome tables indexed by alice_basis * 2 + bob_basis
    let mut cumulative = [[0.0f64; 4]; 4];
    for ab in 0..2 {
        for bb in 0..2 {
            let p = joint_probabilities(&rotated, alice[ab].states(), bob[bb].states());
            let total: f64 = p.iter().sum();
            let mut acc = 0.0;
            for k in 0..4 {
                acc += p[k] / total;
                cumulative[2 * ab + bb][k] = acc;
            }
            cumulative[2 * ab + bb][3] = 1.0;
        }
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    // emission times
    let emission =
        Exp::new(pair_rate_hz / PS_PER_S).map_err(|e| PhotonError::InvalidConfig(e.to_string()))?;
    let expected = (pair_rate_hz * duration_s) as usize;
    let mut times: Vec<u64> = Vec::with_capacity(expected + expected / 64 + 16);
    let mut t = 0.0f64;
    loop {
        t += emission.sample(&mut rng);
        if t >= duration_ps as f64 {
            break;
        }
        times.push(t as u64);
    }
    let n = times.len();

    // basis choices: bit 0 Alice, bit 1 Bob
    let bases: Vec<u8> = (0..n)
        .map(|_| {
            let a = rng.random::<bool>() as u8;
            let b = rng.random::<bool>() as u8;
            a | (b << 1)
        })
        .collect();

    // joint outcomes: bit 1 Alice, bit 0 Bob (cell index of ++, +−, −+, −−)
    let outcomes: Vec<u8> = bases
        .iter()
        .map(|&b| {
            let table = &cumulative[(2 * (b & 1) + (b >> 1)) as usize];
            let u: f64 = rng.random();
            table.iter().position(|&c| u < c).unwrap_or(3) as u8
        })
        .collect();

    // efficiency thinning: bit 0 Alice detected, bit 1 Bob detected
    let detected: Vec<u8> = (0..n)
        .map(|i| {
            let (a_ch, b_ch) = pair_channels(bases[i], outcomes[i]);
            let a = rng.random::<f64>() < detector.efficiency[a_ch as usize];
            let b = rng.random::<f64>() < detector.efficiency[b_ch as usize];
            (a as u8) | ((b as u8) << 1)
        })
        .collect();

    let mut alice_events = Vec::with_capacity(n / 2);
    let mut bob_events = Vec::with_capacity(n / 2);
    let jitter = if detector.jitter_sigma_ps > 0.0 {
        Some(
            Normal::new(0.0, detector.jitter_sigma_ps)
                .map_err(|e| PhotonError::InvalidConfig(e.to_string()))?,
        )
    } else {
        None
    };
    let jittered = |t: u64, rng: &mut ChaCha8Rng| -> u64 {
        match &jitter {
            Some(dist) => {
                let dt = dist.sample(rng).round() as i64;
                (t as i64).saturating_add(dt).max(0) as u64
            }
            None => t,
        }
    };
    for i in 0..n {
        let (a_ch, b_ch) = pair_channels(bases[i], outcomes[i]);
        if detected[i] & 1 != 0 {
            let t = jittered(times[i], &mut rng);
            alice_events.push(EventRecord {
                time_ps: t,
                channel: a_ch,
            });
        }
        if detected[i] & 2 != 0 {
            let t = jittered(times[i], &mut rng);
            bob_events.push(EventRecord {
                time_ps: t,
                channel: b_ch,
            });
        }
    }
    drop((times, bases, outcomes, detected));

    // dark counts, one Poisson process per channel
    for ch in 0..CHANNELS {
        let rate = detector.dark_rate_hz[ch];
        if rate <= 0.0 {
            continue;
        }
        let dist =
            Exp::new(rate / PS_PER_S).map_err(|e| PhotonError::InvalidConfig(e.to_string()))?;
        let target = if ch < 4 {
            &mut alice_events
        } else {
            &mut bob_events
        };
        let mut t = 0.0f64;
        loop {
            t += dist.sample(&mut rng);
            if t >= duration_ps as f64 {
                break;
            }
            target.push(EventRecord {
                time_ps: t as u64,
                channel: ch as u8,
            });
        }
    }

    let alice_events = finish(alice_events, detector.dead_time_ps);
    let bob_events = finish(bob_events, detector.dead_time_ps);
    Ok(Session {
        alice: TimestampStream::new(Party::Alice, alice_events, duration_ps)?,
        bob: TimestampStream::new(Party::Bob, bob_events, duration_ps)?,
        status: SessionStatus::Ok,
        emitted_pairs: n as u64,
    })
}

#[inline]
fn pair_channels(bases: u8, outcome: u8) -> (u8, u8) {
    let ab = (bases & 1) as usize;
    let bb = (bases >> 1) as usize;
    let ao = (outcome >> 1) as usize;
    let bo = (outcome & 1) as usize;
    (alice_channel(ab, ao), bob_channel(bb, bo))
}

/// Sorts by `(time, channel)` and drops clicks inside a channel's dead time.
fn finish(mut events: Vec<EventRecord>, dead_time_ps: u64) -> Vec<EventRecord> {
    events.sort_unstable();
    if dead_time_ps == 0 {
        return events;
    }
    let mut last: [Option<u64>; CHANNELS] = [None; CHANNELS];
    events.retain(|e| {
        let slot = &mut last[e.channel as usize];
        match *slot {
            Some(prev) if e.time_ps - prev < dead_time_ps => false,
            _ => {
                *slot = Some(e.time_ps);
                true
            }
        }
    });
    events
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::basis::optimal_bases;

    fn psi1() -> DensityMatrix4 {
        DensityMatrix4::from_pure(&bell_state(1).unwrap())
    }

    #[test]
    fn build_state_examples() {
        let cfg = |p| SourceConfig {
            mixing_p: p,
            density: None,
            pair_rate_hz: 1.0,
            seed: 0,
        };
        let one = build_state(&cfg(1.0)).unwrap();
        assert!(one.matrix().max_abs_diff(psi1().matrix()) < 1e-15);
        let zero = build_state(&cfg(0.0)).unwrap();
        assert!(
            zero.matrix()
                .max_abs_diff(DensityMatrix4::maximally_mixed().matrix())
                < 1e-15
        );
        let w = build_state(&cfg(0.92)).unwrap();
        let b1 = bell_state(1).unwrap();
        assert!((crate::quantum::fidelity_pure(&w, &b1) - 0.94).abs() < 1e-12);
        assert!((crate::quantum::concurrence(&w) - 0.88).abs() < 1e-9);
        assert!(build_state(&cfg(1.5)).is_err());
    }

    #[test]
    fn ideal_session_is_perfectly_correlated() {
        let rho = psi1();
        let plan = optimal_bases(&rho).unwrap();
        let s = generate_session(
            &rho,
            &ChannelConfig::identity(),
            &DetectorConfig::ideal(),
            &plan,
            1e5,
            0.05,
            1,
        )
        .unwrap();
        assert_eq!(s.status, SessionStatus::Ok);
        assert_eq!(s.alice.events.len(), s.emitted_pairs as usize);
        assert_eq!(s.bob.events.len(), s.emitted_pairs as usize);
        // each emission time appears once per party unless two pairs collide
        let mut by_time = std::collections::HashMap::new();
        for e in &s.bob.events {
            by_time
                .entry(e.time_ps)
                .or_insert_with(Vec::new)
                .push(e.channel);
        }
        for e in &s.alice.events {
            let bob = &by_time[&e.time_ps];
            if bob.len() != 1 {
                continue;
            }
            let (ab, ao) = channel_role(e.channel);
            let (bb, bo) = channel_role(bob[0]);
            if ab == bb {
                assert_eq!(ao, bo, "matched-basis error at {}", e.time_ps);
            }
        }
    }

    #[test]
    fn seeds_reproduce_streams() {
        let rho = DensityMatrix4::werner(0.9, &bell_state(1).unwrap());
        let plan = optimal_bases(&rho).unwrap();
        let det = DetectorConfig::uniform(0.5, 1000.0, 50.0);
        let run = |seed| {
            generate_session(
                &rho,
                &ChannelConfig::identity(),
                &det,
                &plan,
                1e5,
                0.02,
                seed,
            )
            .unwrap()
        };
        assert_eq!(run(9), run(9));
        assert_ne!(run(9).alice.events, run(10).alice.events);
    }

    #[test]
    fn zero_duration_is_empty_session() {
        let rho = psi1();
        let s = generate_session(
            &rho,
            &ChannelConfig::identity(),
            &DetectorConfig::ideal(),
            &BasisPlan::conventional(),
            1e5,
            0.0,
            1,
        )
        .unwrap();
        assert_eq!(s.status, SessionStatus::EmptySession);
        assert!(s.alice.events.is_empty());
    }

    #[test]
    fn dead_time_drops_close_clicks() {
        let ev = |t, c| EventRecord {
            time_ps: t,
            channel: c,
        };
        let out = finish(vec![ev(100, 0), ev(0, 0), ev(50, 1), ev(250, 0)], 120);
        assert_eq!(out, vec![ev(0, 0), ev(50, 1), ev(250, 0)]);
    }

    #[test]
    fn rejects_bad_configs() {
        let mut det = DetectorConfig::ideal();
        det.efficiency[3] = 0.0;
        assert!(det.validate().is_err());
        let ch = ChannelConfig {
            u_alice: Mat2::from_real(1.0, 1.0, 0.0, 1.0),
            u_bob: Mat2::identity(),
        };
        assert!(ch.validate().is_err());
        assert!(TimestampStream::new(
            Party::Alice,
            vec![EventRecord {
                time_ps: 1,
                channel: 5
            }],
            10
        )
        .is_err());
        assert_eq!(
            TimestampStream::new(
                Party::Bob,
                vec![
                    EventRecord {
                        time_ps: 5,
                        channel: 5
                    },
                    EventRecord {
                        time_ps: 1,
                        channel: 4
                    }
                ],
                10
            ),
            Err(PhotonError::Unordered(1))
        );
    }
}
