//! Coincidence analysis: cross-correlation histograms, windowed matching,
//! sifting, and window-span optimization.
//!
//! Delays are `t_bob − t_alice` in picoseconds. Only the eight same-basis
//! detector pairs enter sifting; for each Alice detector the two Bob
//! detectors of the matching basis form a *group* that shares one window
//! half-width, so a window can never accept one outcome class while
//! rejecting the other.

use crate::basis::{BasisPlan, CorrelationSign};
use crate::par::Execution;
use crate::photon::{channel_role, PhotonError, TimestampStream, CHANNELS, PS_PER_S};
use std::cmp::Ordering;
use std::fmt::Write as _;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CoincidenceError {
    #[error("invalid detector pair ({alice}, {bob})")]
    InvalidPair { alice: u8, bob: u8 },
    #[error("invalid binning: {0}")]
    InvalidBinning(String),
    #[error("window half-width must be positive for pair {0}")]
    ZeroWidth(DetectorPair),
    #[error("overlapping windows for pair {0}")]
    OverlappingWindows(DetectorPair),
    #[error("no same-basis coincidences to sift")]
    NoSiftedBits,
    #[error("missing histogram for pair {0}")]
    MissingHistogram(DetectorPair),
    #[error("histograms do not share one binning")]
    MixedBinning,
    #[error("duration must be positive")]
    ZeroDuration,
    #[error("target QBER {0} outside (0, 0.5]")]
    BadTarget(f64),
    #[error(transparent)]
    Stream(#[from] PhotonError),
    #[error("malformed {what} file at line {line}: {reason}")]
    Parse {
        what: &'static str,
        line: usize,
        reason: String,
    },
}

/// An (Alice channel, Bob channel) combination.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct DetectorPair {
    pub alice: u8,
    pub bob: u8,
}

impl std::fmt::Display for DetectorPair {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}-{}", self.alice, self.bob)
    }
}

impl DetectorPair {
    pub fn new(alice: u8, bob: u8) -> Result<Self, CoincidenceError> {
        if alice >= 4 || !(4..CHANNELS as u8).contains(&bob) {
            return Err(CoincidenceError::InvalidPair { alice, bob });
        }
        Ok(DetectorPair { alice, bob })
    }

    /// Basis index (0 = z, 1 = x) when both detectors sit in the same basis.
    pub fn shared_basis(&self) -> Option<usize> {
        let (ab, _) = channel_role(self.alice);
        let (bb, _) = channel_role(self.bob);
        (ab == bb).then_some(ab)
    }

    /// True if the two outcomes encode equal key bits under `signs`.
    pub fn is_signal(&self, signs: [CorrelationSign; 2]) -> Option<bool> {
        let basis = self.shared_basis()?;
        let (_, ao) = channel_role(self.alice);
        let (_, bo) = channel_role(self.bob);
        Some(bob_bit(bo, signs[basis]) == ao as u8)
    }

    /// The eight same-basis pairs, ordered by Alice channel then Bob channel.
    pub fn same_basis() -> [DetectorPair; 8] {
        std::array::from_fn(|k| {
            let alice = (k / 2) as u8;
            let bob = 4 + 2 * (alice / 2) + (k % 2) as u8;
            DetectorPair { alice, bob }
        })
    }

    /// All sixteen pairs.
    pub fn all() -> [DetectorPair; 16] {
        std::array::from_fn(|k| DetectorPair {
            alice: (k / 4) as u8,
            bob: 4 + (k % 4) as u8,
        })
    }
}

#[inline]
fn bob_bit(outcome: usize, sign: CorrelationSign) -> u8 {
    match sign {
        CorrelationSign::Correlated => outcome as u8,
        CorrelationSign::Anticorrelated => 1 - outcome as u8,
    }
}

/// Delay histogram for one detector pair. Bin `k` covers
/// `[min + k·w, min + (k+1)·w)`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CorrelationHistogram {
    pub pair: DetectorPair,
    pub bin_width_ps: u64,
    pub range_ps: (i64, i64),
    pub bins: Vec<u64>,
}

impl CorrelationHistogram {
    pub fn empty(
        pair: DetectorPair,
        bin_width_ps: u64,
        range_ps: (i64, i64),
    ) -> Result<Self, CoincidenceError> {
        let (min, max) = range_ps;
        if bin_width_ps == 0 {
            return Err(CoincidenceError::InvalidBinning("bin width is zero".into()));
        }
        if max <= min {
            return Err(CoincidenceError::InvalidBinning(format!(
                "range ({min}, {max}) is empty"
            )));
        }
        let span = (max - min) as u64;
        if !span.is_multiple_of(bin_width_ps) {
            return Err(CoincidenceError::InvalidBinning(format!(
                "range span {span} is not a multiple of bin width {bin_width_ps}"
            )));
        }
        Ok(CorrelationHistogram {
            pair,
            bin_width_ps,
            range_ps,
            bins: vec![0; (span / bin_width_ps) as usize],
        })
    }

    /// Delay at the middle of bin `k`.
    pub fn bin_center(&self, k: usize) -> i64 {
        self.range_ps.0 + (k as u64 * self.bin_width_ps + self.bin_width_ps / 2) as i64
    }

    pub fn total(&self) -> u64 {
        self.bins.iter().sum()
    }

    /// Sum of bins whose centers lie in `[center − half_width, center + half_width]`.
    pub fn sum_within(&self, center: i64, half_width: u64) -> u64 {
        let lo = center - half_width as i64;
        let hi = center + half_width as i64;
        self.bins
            .iter()
            .enumerate()
            .filter(|&(k, _)| (lo..=hi).contains(&self.bin_center(k)))
            .map(|(_, &c)| c)
            .sum()
    }

    fn same_binning(&self, other: &CorrelationHistogram) -> bool {
        self.bin_width_ps == other.bin_width_ps
            && self.range_ps == other.range_ps
            && self.bins.len() == other.bins.len()
    }
}

/// Histogram of `b − a` over all event pairs whose delay falls inside
/// `range_ps`. Both slices must be sorted; the sweep is linear in the number
/// of events plus the number of in-range pairs.
pub fn cross_correlate_times(
    a: &[u64],
    b: &[u64],
    pair: DetectorPair,
    bin_width_ps: u64,
    range_ps: (i64, i64),
) -> Result<CorrelationHistogram, CoincidenceError> {
    let mut h = CorrelationHistogram::empty(pair, bin_width_ps, range_ps)?;
    let (min, max) = range_ps;
    let width = bin_width_ps as i64;
    let mut lo = 0usize;
    for &ta in a {
        let ta = ta as i64;
        let start = ta + min;
        while lo < b.len() && (b[lo] as i64) < start {
            lo += 1;
        }
        for &tb in &b[lo..] {
            let d = tb as i64 - ta;
            if d >= max {
                break;
            }
            h.bins[((d - min) / width) as usize] += 1;
        }
    }
    Ok(h)
}

pub fn cross_correlate(
    a: &TimestampStream,
    b: &TimestampStream,
    pair: DetectorPair,
    bin_width_ps: u64,
    range_ps: (i64, i64),
) -> Result<CorrelationHistogram, CoincidenceError> {
    cross_correlate_times(
        &a.channel_times(pair.alice),
        &b.channel_times(pair.bob),
        pair,
        bin_width_ps,
        range_ps,
    )
}

/// Histograms for several pairs; pairs are independent and run under `exec`.
pub fn correlate_pairs(
    a: &TimestampStream,
    b: &TimestampStream,
    pairs: &[DetectorPair],
    bin_width_ps: u64,
    range_ps: (i64, i64),
    exec: Execution,
) -> Result<Vec<CorrelationHistogram>, CoincidenceError> {
    CorrelationHistogram::empty(DetectorPair { alice: 0, bob: 4 }, bin_width_ps, range_ps)?;
    let at = a.split_channels();
    let bt = b.split_channels();
    exec.map(pairs, |p| {
        cross_correlate_times(
            &at[p.alice as usize],
            &bt[p.bob as usize],
            *p,
            bin_width_ps,
            range_ps,
        )
    })
    .into_iter()
    .collect()
}

/// Delay and height of the tallest bin; ties go to the smallest `|delay|`,
/// then to the earlier bin.
pub fn find_peak(h: &CorrelationHistogram) -> Option<(i64, u64)> {
    let mut best: Option<(i64, u64)> = None;
    for (k, &c) in h.bins.iter().enumerate() {
        let d = h.bin_center(k);
        best = match best {
            None => Some((d, c)),
            Some((bd, bc)) if c > bc || (c == bc && d.abs() < bd.abs()) => Some((d, c)),
            keep => keep,
        };
    }
    best
}

/// Mean count per bin over the bins whose centers lie more than
/// `exclusion_ps` from `center`: the flat floor of uncorrelated pairs.
pub fn accidental_floor(h: &CorrelationHistogram, center: i64, exclusion_ps: u64) -> Option<f64> {
    let (sum, n) = h
        .bins
        .iter()
        .enumerate()
        .filter(|&(k, _)| (h.bin_center(k) - center).unsigned_abs() > exclusion_ps)
        .fold((0u64, 0u64), |(s, n), (_, &c)| (s + c, n + 1));
    (n > 0).then(|| sum as f64 / n as f64)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct CoincidenceWindow {
    pub pair: DetectorPair,
    pub center_delay_ps: i64,
    pub half_width_ps: u64,
}

impl CoincidenceWindow {
    fn bounds(&self) -> (i64, i64) {
        (
            self.center_delay_ps - self.half_width_ps as i64,
            self.center_delay_ps + self.half_width_ps as i64,
        )
    }
}

/// One matched click pair; indices point into the parties' event lists.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord)]
pub struct Coincidence {
    pub alice_time_ps: u64,
    pub bob_time_ps: u64,
    pub alice_index: usize,
    pub bob_index: usize,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PairTally {
    pub pair: DetectorPair,
    pub windows: Vec<CoincidenceWindow>,
    pub coincidences: Vec<Coincidence>,
}

impl PairTally {
    pub fn count(&self) -> u64 {
        self.coincidences.len() as u64
    }
}

/// Windowed coincidences per detector pair, sorted by pair.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PairCounts {
    pub tallies: Vec<PairTally>,
    pub duration_ps: u64,
}

impl PairCounts {
    pub fn count(&self, pair: DetectorPair) -> u64 {
        self.tallies
            .iter()
            .find(|t| t.pair == pair)
            .map_or(0, PairTally::count)
    }

    /// Same-basis pairs whose outcomes agree under `signs`.
    pub fn signal(&self, signs: [CorrelationSign; 2]) -> Vec<&PairTally> {
        self.tallies
            .iter()
            .filter(|t| t.pair.is_signal(signs) == Some(true))
            .collect()
    }

    /// Same-basis pairs whose outcomes disagree under `signs`.
    pub fn noise(&self, signs: [CorrelationSign; 2]) -> Vec<&PairTally> {
        self.tallies
            .iter()
            .filter(|t| t.pair.is_signal(signs) == Some(false))
            .collect()
    }

    pub fn total(&self) -> u64 {
        self.tallies.iter().map(PairTally::count).sum()
    }
}

fn group_windows(
    windows: &[CoincidenceWindow],
) -> Result<Vec<(DetectorPair, Vec<CoincidenceWindow>)>, CoincidenceError> {
    let mut sorted = windows.to_vec();
    sorted.sort_by_key(|w| (w.pair, w.center_delay_ps));
    let mut out: Vec<(DetectorPair, Vec<CoincidenceWindow>)> = Vec::new();
    for w in sorted {
        DetectorPair::new(w.pair.alice, w.pair.bob)?;
        if w.half_width_ps == 0 {
            return Err(CoincidenceError::ZeroWidth(w.pair));
        }
        match out.last_mut() {
            Some((p, ws)) if *p == w.pair => {
                if ws.last().unwrap().bounds().1 >= w.bounds().0 {
                    return Err(CoincidenceError::OverlappingWindows(w.pair));
                }
                ws.push(w);
            }
            _ => out.push((w.pair, vec![w])),
        }
    }
    Ok(out)
}

/// Greedy earliest-first matching: Alice clicks are taken in time order and
/// each claims the earliest unclaimed Bob click whose delay falls in one of
/// the pair's windows.
fn match_pair(
    a: &[(u64, usize)],
    b: &[(u64, usize)],
    windows: &[CoincidenceWindow],
) -> Vec<Coincidence> {
    let bounds: Vec<(i64, i64)> = windows.iter().map(CoincidenceWindow::bounds).collect();
    let lo_all = bounds.iter().map(|w| w.0).min().unwrap_or(0);
    let hi_all = bounds.iter().map(|w| w.1).max().unwrap_or(-1);
    let accept = |d: i64| bounds.iter().any(|&(lo, hi)| lo <= d && d <= hi);
    let mut consumed = vec![false; b.len()];
    let mut p = 0usize;
    let mut out = Vec::new();
    for &(ta, ia) in a {
        let ta_i = ta as i64;
        while p < b.len() && ((b[p].0 as i64) < ta_i + lo_all || consumed[p]) {
            p += 1;
        }
        let mut j = p;
        while j < b.len() {
            let d = b[j].0 as i64 - ta_i;
            if d > hi_all {
                break;
            }
            if !consumed[j] && accept(d) {
                consumed[j] = true;
                out.push(Coincidence {
                    alice_time_ps: ta,
                    bob_time_ps: b[j].0,
                    alice_index: ia,
                    bob_index: b[j].1,
                });
                break;
            }
            j += 1;
        }
    }
    out
}

fn indexed_channels(s: &TimestampStream) -> [Vec<(u64, usize)>; CHANNELS] {
    let mut out: [Vec<(u64, usize)>; CHANNELS] = Default::default();
    for (i, e) in s.events.iter().enumerate() {
        out[e.channel as usize].push((e.time_ps, i));
    }
    out
}

/// Counts coincidences per pair inside the given windows. Several
/// non-overlapping windows may share a pair; each click is used at most once
/// per pair.
pub fn count_in_windows(
    a: &TimestampStream,
    b: &TimestampStream,
    windows: &[CoincidenceWindow],
    exec: Execution,
) -> Result<PairCounts, CoincidenceError> {
    a.validate()?;
    b.validate()?;
    let groups = group_windows(windows)?;
    let at = indexed_channels(a);
    let bt = indexed_channels(b);
    let tallies = exec.map(&groups, |(pair, ws)| PairTally {
        pair: *pair,
        windows: ws.clone(),
        coincidences: match_pair(&at[pair.alice as usize], &bt[pair.bob as usize], ws),
    });
    Ok(PairCounts {
        tallies,
        duration_ps: a.duration_ps.max(b.duration_ps),
    })
}

/// Which basis a sifted bit came from, with its source events.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct SiftedTag {
    pub basis: u8,
    pub alice_index: usize,
    pub bob_index: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SiftResult {
    pub key_bits_alice: Vec<u8>,
    pub key_bits_bob: Vec<u8>,
    pub matched_pair_tags: Vec<SiftedTag>,
    pub duration_s: f64,
    pub bits_per_basis: [u64; 2],
    pub errors_per_basis: [u64; 2],
    pub qber_overall: f64,
    pub qber_per_basis: [f64; 2],
    pub key_rate_bps: f64,
    /// Coincidences dropped because one of their clicks took part in
    /// another same-basis coincidence.
    pub ambiguous_dropped: u64,
}

impl SiftResult {
    pub fn bit_count(&self) -> u64 {
        self.key_bits_alice.len() as u64
    }
}

fn ratio(num: u64, den: u64) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

/// Keeps same-basis coincidences and turns them into key bits. Alice reads
/// `H`/`D` as 0 and `V`/`A` as 1; Bob's plus outcome reads as 0 when the
/// basis pair is correlated and as 1 otherwise. A click that appears in
/// more than one same-basis coincidence carries no definite bit, so every
/// coincidence it belongs to is dropped. Bits follow the order of Alice's
/// event list.
pub fn sift(counts: &PairCounts, plan: &BasisPlan) -> Result<SiftResult, CoincidenceError> {
    let signs = plan.signs();
    let mut rows: Vec<(Coincidence, u8, u8, u8)> = Vec::new();
    for t in &counts.tallies {
        let Some(basis) = t.pair.shared_basis() else {
            continue;
        };
        let (_, ao) = channel_role(t.pair.alice);
        let (_, bo) = channel_role(t.pair.bob);
        let bb = bob_bit(bo, signs[basis]);
        rows.extend(
            t.coincidences
                .iter()
                .map(|c| (*c, basis as u8, ao as u8, bb)),
        );
    }
    if counts.duration_ps == 0 {
        return Err(CoincidenceError::ZeroDuration);
    }
    rows.sort_by_key(|r| (r.0.alice_index, r.0.bob_index));
    let before = rows.len();
    let mut bob_order: Vec<usize> = rows.iter().map(|r| r.0.bob_index).collect();
    bob_order.sort_unstable();
    let repeated = |sorted: &[usize], x: usize| {
        let i = sorted.partition_point(|&y| y < x);
        sorted.get(i + 1) == Some(&x)
    };
    let alice_order: Vec<usize> = {
        let mut v: Vec<usize> = rows.iter().map(|r| r.0.alice_index).collect();
        v.sort_unstable();
        v
    };
    rows.retain(|r| {
        !repeated(&alice_order, r.0.alice_index) && !repeated(&bob_order, r.0.bob_index)
    });
    let ambiguous_dropped = (before - rows.len()) as u64;
    if rows.is_empty() {
        return Err(CoincidenceError::NoSiftedBits);
    }
    let mut bits = [0u64; 2];
    let mut errors = [0u64; 2];
    let mut out = SiftResult {
        key_bits_alice: Vec::with_capacity(rows.len()),
        key_bits_bob: Vec::with_capacity(rows.len()),
        matched_pair_tags: Vec::with_capacity(rows.len()),
        duration_s: counts.duration_ps as f64 / PS_PER_S,
        bits_per_basis: [0; 2],
        errors_per_basis: [0; 2],
        qber_overall: 0.0,
        qber_per_basis: [0.0; 2],
        key_rate_bps: 0.0,
        ambiguous_dropped,
    };
    for (c, basis, ab, bb) in rows {
        bits[basis as usize] += 1;
        errors[basis as usize] += (ab != bb) as u64;
        out.key_bits_alice.push(ab);
        out.key_bits_bob.push(bb);
        out.matched_pair_tags.push(SiftedTag {
            basis,
            alice_index: c.alice_index,
            bob_index: c.bob_index,
        });
    }
    let total = bits[0] + bits[1];
    out.bits_per_basis = bits;
    out.errors_per_basis = errors;
    out.qber_per_basis = [ratio(errors[0], bits[0]), ratio(errors[1], bits[1])];
    out.qber_overall = ratio(errors[0] + errors[1], total);
    out.key_rate_bps = total as f64 / out.duration_s;
    Ok(out)
}

/// How window spans are chosen.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum WindowMode {
    /// Every window gets the same half-width.
    Fixed { half_width_ps: u64 },
    /// Maximize key rate with only the overall QBER bounded.
    OverallOnly,
    /// Maximize key rate with the overall and each basis QBER bounded.
    PerBasis,
}

impl WindowMode {
    pub fn name(&self) -> &'static str {
        match self {
            WindowMode::Fixed { .. } => "fixed",
            WindowMode::OverallOnly => "overall",
            WindowMode::PerBasis => "per-basis",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct OptimizerConfig {
    pub mode: WindowMode,
    pub target_qber: f64,
    pub max_half_width_ps: u64,
    /// Number of geometric steps between `bin_width/2` and the maximum
    /// before snapping to odd bin counts.
    pub grid_steps: usize,
    /// Exhaustive search is used when the candidate count is at most this.
    pub exhaustive_limit: usize,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        OptimizerConfig {
            mode: WindowMode::PerBasis,
            target_qber: 0.11,
            max_half_width_ps: 8000,
            grid_steps: 24,
            exhaustive_limit: 10_000,
        }
    }
}

/// Histogram-derived estimate of the sift outcome for a window set.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Forecast {
    pub signal: [u64; 2],
    pub noise: [u64; 2],
    pub duration_s: f64,
}

impl Forecast {
    pub fn bits(&self) -> u64 {
        self.signal.iter().chain(self.noise.iter()).sum()
    }

    pub fn qber_per_basis(&self) -> [f64; 2] {
        [0, 1].map(|b| ratio(self.noise[b], self.signal[b] + self.noise[b]))
    }

    pub fn qber_overall(&self) -> f64 {
        ratio(self.noise[0] + self.noise[1], self.bits())
    }

    pub fn key_rate_bps(&self) -> f64 {
        self.bits() as f64 / self.duration_s
    }

    /// Largest amount by which a constrained QBER exceeds `target`.
    pub fn violation(&self, mode: WindowMode, target: f64) -> f64 {
        let mut worst = self.qber_overall() - target;
        if mode == WindowMode::PerBasis {
            for q in self.qber_per_basis() {
                worst = worst.max(q - target);
            }
        }
        worst.max(0.0)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct OptimizationResult {
    pub mode: WindowMode,
    pub target_qber: f64,
    pub feasible: bool,
    /// One half-width per Alice detector (group).
    pub half_widths_ps: [u64; 4],
    pub windows: Vec<CoincidenceWindow>,
    pub forecast: Forecast,
    pub candidates_evaluated: u64,
}

/// Half-width candidates `(2k+1)·w/2`, geometrically spaced from `w/2` to
/// `max`.
pub fn half_width_grid(bin_width_ps: u64, max_half_width_ps: u64, steps: usize) -> Vec<u64> {
    let w = bin_width_ps as f64;
    let k_max = (max_half_width_ps as f64 / w - 0.5).floor().max(0.0) as u64;
    let snap = |hw: f64| {
        let k = ((hw / w - 0.5).round().max(0.0) as u64).min(k_max);
        (2 * k + 1) * bin_width_ps / 2
    };
    let lo = w / 2.0;
    let hi = (max_half_width_ps as f64).max(lo);
    let steps = steps.max(1);
    let mut out: Vec<u64> = (0..=steps)
        .map(|i| snap(lo * (hi / lo).powf(i as f64 / steps as f64)))
        .collect();
    out.dedup();
    out
}

struct GroupTable {
    basis: usize,
    center: i64,
    signal: Vec<u64>,
    noise: Vec<u64>,
    pairs: [DetectorPair; 2],
}

#[derive(Clone, Copy, Debug)]
struct Score {
    feasible: bool,
    violation: f64,
    bits: u64,
    width: u64,
}

impl Score {
    /// `Less` means better.
    fn rank(&self, other: &Score) -> Ordering {
        other
            .feasible
            .cmp(&self.feasible)
            .then_with(|| {
                if self.feasible {
                    Ordering::Equal
                } else {
                    self.violation.total_cmp(&other.violation)
                }
            })
            .then_with(|| other.bits.cmp(&self.bits))
            .then_with(|| self.width.cmp(&other.width))
    }
}

/// Picks per-group half-widths around the groups' peak centers. Candidate
/// sets are ranked by feasibility, then key rate, then smaller total width;
/// infeasible sets rank by how far they overshoot the target. The search is
/// exhaustive when the grid is small enough, coordinate descent otherwise.
pub fn optimize_windows(
    histograms: &[CorrelationHistogram],
    plan: &BasisPlan,
    duration_s: f64,
    cfg: &OptimizerConfig,
    exec: Execution,
) -> Result<OptimizationResult, CoincidenceError> {
    if duration_s.is_nan() || duration_s <= 0.0 {
        return Err(CoincidenceError::ZeroDuration);
    }
    if !(cfg.target_qber > 0.0 && cfg.target_qber <= 0.5) {
        return Err(CoincidenceError::BadTarget(cfg.target_qber));
    }
    let signs = plan.signs();
    let find = |p: DetectorPair| {
        histograms
            .iter()
            .find(|h| h.pair == p)
            .ok_or(CoincidenceError::MissingHistogram(p))
    };
    let pairs = DetectorPair::same_basis();
    let first = find(pairs[0])?;
    let grid = match cfg.mode {
        WindowMode::Fixed { half_width_ps } => vec![half_width_ps.max(1)],
        _ => half_width_grid(first.bin_width_ps, cfg.max_half_width_ps, cfg.grid_steps),
    };

    let mut groups = Vec::with_capacity(4);
    for g in 0..4 {
        let pa = pairs[2 * g];
        let pb = pairs[2 * g + 1];
        let (ha, hb) = (find(pa)?, find(pb)?);
        if !ha.same_binning(first) || !hb.same_binning(first) {
            return Err(CoincidenceError::MixedBinning);
        }
        let mut combined = ha.clone();
        for (c, x) in combined.bins.iter_mut().zip(&hb.bins) {
            *c += x;
        }
        let center = find_peak(&combined).map_or(0, |p| p.0);
        let (sig, noi) = if pa.is_signal(signs) == Some(true) {
            (ha, hb)
        } else {
            (hb, ha)
        };
        groups.push(GroupTable {
            basis: g / 2,
            center,
            signal: grid.iter().map(|&w| sig.sum_within(center, w)).collect(),
            noise: grid.iter().map(|&w| noi.sum_within(center, w)).collect(),
            pairs: [pa, pb],
        });
    }

    let forecast_of = |idx: &[usize; 4]| {
        let mut f = Forecast {
            signal: [0; 2],
            noise: [0; 2],
            duration_s,
        };
        for (g, &j) in groups.iter().zip(idx) {
            f.signal[g.basis] += g.signal[j];
            f.noise[g.basis] += g.noise[j];
        }
        f
    };
    let score_of = |idx: &[usize; 4]| {
        let f = forecast_of(idx);
        let violation = f.violation(cfg.mode, cfg.target_qber);
        Score {
            feasible: violation == 0.0,
            violation,
            bits: f.bits(),
            width: idx.iter().map(|&j| grid[j]).sum(),
        }
    };
    let better = |a: &(Score, [usize; 4]), b: &(Score, [usize; 4])| {
        a.0.rank(&b.0).then_with(|| a.1.cmp(&b.1)) == Ordering::Less
    };

    let n = grid.len();
    let total = n.pow(4);
    let mut evaluated = 0u64;
    let best_idx = if total <= cfg.exhaustive_limit {
        let candidates: Vec<[usize; 4]> = (0..total)
            .map(|k| [k / (n * n * n), (k / (n * n)) % n, (k / n) % n, k % n])
            .collect();
        evaluated += candidates.len() as u64;
        let scored = exec.map(&candidates, |c| (score_of(c), *c));
        let mut best = scored[0];
        for s in &scored[1..] {
            if better(s, &best) {
                best = *s;
            }
        }
        best.1
    } else {
        let mut cur = [0usize; 4];
        let mut cur_score = (score_of(&cur), cur);
        evaluated += 1;
        let steps: Vec<usize> = (0..n).collect();
        for _sweep in 0..64 {
            let mut changed = false;
            for g in 0..4 {
                let scored = exec.map(&steps, |&j| {
                    let mut c = cur;
                    c[g] = j;
                    (score_of(&c), c)
                });
                evaluated += n as u64;
                for s in scored {
                    if better(&s, &cur_score) {
                        cur_score = s;
                        changed = true;
                    }
                }
                cur = cur_score.1;
            }
            if !changed {
                break;
            }
        }
        cur
    };

    let forecast = forecast_of(&best_idx);
    let half_widths_ps = best_idx.map(|j| grid[j]);
    let windows = groups
        .iter()
        .zip(half_widths_ps)
        .flat_map(|(g, hw)| {
            g.pairs.map(|pair| CoincidenceWindow {
                pair,
                center_delay_ps: g.center,
                half_width_ps: hw,
            })
        })
        .collect();
    Ok(OptimizationResult {
        mode: cfg.mode,
        target_qber: cfg.target_qber,
        feasible: forecast.violation(cfg.mode, cfg.target_qber) == 0.0,
        half_widths_ps,
        windows,
        forecast,
        candidates_evaluated: evaluated,
    })
}

/// Histogram forecast for an explicit window set (pairs without a window
/// contribute nothing).
pub fn forecast_for_windows(
    histograms: &[CorrelationHistogram],
    windows: &[CoincidenceWindow],
    plan: &BasisPlan,
    duration_s: f64,
) -> Forecast {
    let signs = plan.signs();
    let mut f = Forecast {
        signal: [0; 2],
        noise: [0; 2],
        duration_s,
    };
    for w in windows {
        let (Some(h), Some(basis)) = (
            histograms.iter().find(|h| h.pair == w.pair),
            w.pair.shared_basis(),
        ) else {
            continue;
        };
        let c = h.sum_within(w.center_delay_ps, w.half_width_ps);
        if w.pair.is_signal(signs) == Some(true) {
            f.signal[basis] += c;
        } else {
            f.noise[basis] += c;
        }
    }
    f
}

impl WindowMode {
    /// Inverse of [`WindowMode::name`]; `fixed` takes its width from
    /// `fixed_half_width_ps`.
    pub fn from_name(name: &str, fixed_half_width_ps: u64) -> Option<Self> {
        match name {
            "fixed" => Some(WindowMode::Fixed {
                half_width_ps: fixed_half_width_ps,
            }),
            "overall" => Some(WindowMode::OverallOnly),
            "per-basis" => Some(WindowMode::PerBasis),
            _ => None,
        }
    }
}

fn parse_err(what: &'static str, line: usize, reason: impl Into<String>) -> CoincidenceError {
    CoincidenceError::Parse {
        what,
        line,
        reason: reason.into(),
    }
}

fn parse_num<T: std::str::FromStr>(
    what: &'static str,
    line: usize,
    tok: &str,
) -> Result<T, CoincidenceError>
where
    T::Err: std::fmt::Display,
{
    tok.parse::<T>()
        .map_err(|e| parse_err(what, line, format!("{tok:?}: {e}")))
}

/// `# HIST1` text table: one line per pair,
/// `alice bob bin_width_ps min_ps max_ps count…`.
pub fn histograms_to_text(hists: &[CorrelationHistogram]) -> String {
    let mut s = String::from("# HIST1 cross-correlation histograms, delay = t_bob - t_alice\n");
    s.push_str("# alice bob bin_width_ps min_ps max_ps counts...\n");
    for h in hists {
        write!(
            s,
            "{} {} {} {} {}",
            h.pair.alice, h.pair.bob, h.bin_width_ps, h.range_ps.0, h.range_ps.1
        )
        .unwrap();
        for c in &h.bins {
            write!(s, " {c}").unwrap();
        }
        s.push('\n');
    }
    s
}

pub fn histograms_from_text(text: &str) -> Result<Vec<CorrelationHistogram>, CoincidenceError> {
    const W: &str = "histogram";
    let mut out = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let tok: Vec<&str> = line.split_whitespace().collect();
        if tok.len() < 5 {
            return Err(parse_err(W, i + 1, "expected at least five fields"));
        }
        let pair = DetectorPair::new(parse_num(W, i + 1, tok[0])?, parse_num(W, i + 1, tok[1])?)
            .map_err(|e| parse_err(W, i + 1, e.to_string()))?;
        let mut h = CorrelationHistogram::empty(
            pair,
            parse_num(W, i + 1, tok[2])?,
            (parse_num(W, i + 1, tok[3])?, parse_num(W, i + 1, tok[4])?),
        )
        .map_err(|e| parse_err(W, i + 1, e.to_string()))?;
        if tok.len() - 5 != h.bins.len() {
            return Err(parse_err(
                W,
                i + 1,
                format!("expected {} bins, found {}", h.bins.len(), tok.len() - 5),
            ));
        }
        for (b, t) in h.bins.iter_mut().zip(&tok[5..]) {
            *b = parse_num(W, i + 1, t)?;
        }
        out.push(h);
    }
    Ok(out)
}

/// Window set as written to and read from `windows.txt`.
#[derive(Clone, Debug, PartialEq)]
pub struct WindowFile {
    pub mode: String,
    pub target_qber: f64,
    pub feasible: bool,
    pub duration_ps: u64,
    pub bin_width_ps: u64,
    pub range_ps: (i64, i64),
    pub windows: Vec<CoincidenceWindow>,
}

impl WindowFile {
    pub fn to_text(&self) -> String {
        let mut s = String::from("# WIN1 coincidence windows\n");
        writeln!(s, "mode = {}", self.mode).unwrap();
        writeln!(s, "target_qber = {}", self.target_qber).unwrap();
        writeln!(s, "feasible = {}", self.feasible).unwrap();
        writeln!(s, "duration_ps = {}", self.duration_ps).unwrap();
        writeln!(s, "bin_width_ps = {}", self.bin_width_ps).unwrap();
        writeln!(s, "range_ps = {} {}", self.range_ps.0, self.range_ps.1).unwrap();
        s.push_str("# alice bob center_ps half_width_ps\n");
        for w in &self.windows {
            writeln!(
                s,
                "{} {} {} {}",
                w.pair.alice, w.pair.bob, w.center_delay_ps, w.half_width_ps
            )
            .unwrap();
        }
        s
    }

    pub fn from_text(text: &str) -> Result<Self, CoincidenceError> {
        const W: &str = "window";
        let mut mode = None;
        let mut target = None;
        let mut feasible = None;
        let mut duration = None;
        let mut bin_width = None;
        let mut range = None;
        let mut windows = Vec::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            if let Some((k, v)) = line.split_once('=') {
                let v = v.trim();
                match k.trim() {
                    "mode" => mode = Some(v.to_string()),
                    "target_qber" => target = Some(parse_num::<f64>(W, i + 1, v)?),
                    "feasible" => feasible = Some(parse_num::<bool>(W, i + 1, v)?),
                    "duration_ps" => duration = Some(parse_num::<u64>(W, i + 1, v)?),
                    "bin_width_ps" => bin_width = Some(parse_num::<u64>(W, i + 1, v)?),
                    "range_ps" => {
                        let (lo, hi) = v
                            .split_once(' ')
                            .ok_or_else(|| parse_err(W, i + 1, "expected two bounds"))?;
                        range = Some((parse_num(W, i + 1, lo)?, parse_num(W, i + 1, hi.trim())?));
                    }
                    other => return Err(parse_err(W, i + 1, format!("unknown key {other}"))),
                }
                continue;
            }
            let tok: Vec<&str> = line.split_whitespace().collect();
            if tok.len() != 4 {
                return Err(parse_err(W, i + 1, "expected alice bob center half_width"));
            }
            let pair =
                DetectorPair::new(parse_num(W, i + 1, tok[0])?, parse_num(W, i + 1, tok[1])?)
                    .map_err(|e| parse_err(W, i + 1, e.to_string()))?;
            windows.push(CoincidenceWindow {
                pair,
                center_delay_ps: parse_num(W, i + 1, tok[2])?,
                half_width_ps: parse_num(W, i + 1, tok[3])?,
            });
        }
        Ok(WindowFile {
            mode: mode.ok_or_else(|| parse_err(W, 0, "missing mode"))?,
            target_qber: target.ok_or_else(|| parse_err(W, 0, "missing target_qber"))?,
            feasible: feasible.ok_or_else(|| parse_err(W, 0, "missing feasible"))?,
            duration_ps: duration.ok_or_else(|| parse_err(W, 0, "missing duration_ps"))?,
            bin_width_ps: bin_width.ok_or_else(|| parse_err(W, 0, "missing bin_width_ps"))?,
            range_ps: range.ok_or_else(|| parse_err(W, 0, "missing range_ps"))?,
            windows,
        })
    }
}
