//! Nine-setting Pauli tomography: simulated counts and linear-inversion
//! reconstruction with a physicality projection.

use crate::basis::MeasBasis;
use crate::par::Execution;
use crate::photon::ChannelConfig;
use crate::quantum::{apply_local, joint_probabilities, pauli, DensityMatrix4, QuantumError};
use crate::{seed, Mat4, C64};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Binomial, Distribution};
use std::fmt::Write as _;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TomographyError {
    #[error(transparent)]
    Quantum(#[from] QuantumError),
    #[error("shots must be positive")]
    NoShots,
    #[error("setting {0} has no counts")]
    EmptySetting(String),
    #[error("counts table is incomplete: missing {0}")]
    Missing(String),
    #[error("malformed counts table at line {line}: {reason}")]
    Parse { line: usize, reason: String },
}

const AXIS: [char; 4] = ['I', 'X', 'Y', 'Z'];

/// Counts for one Pauli pair, cells ordered `(++, +−, −+, −−)`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct TomographySetting {
    pub alice_basis: u8,
    pub bob_basis: u8,
    pub outcome_counts: [u64; 4],
}

impl TomographySetting {
    pub fn label(&self) -> String {
        format!(
            "{}{}",
            AXIS[self.alice_basis as usize], AXIS[self.bob_basis as usize]
        )
    }

    pub fn total(&self) -> u64 {
        self.outcome_counts.iter().sum()
    }
}

/// All nine Pauli-pair settings, Alice-major (`XX, XY, XZ, YX, …, ZZ`).
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CountsTable {
    pub settings: [TomographySetting; 9],
    pub shots_per_setting: u64,
}

fn setting_pairs() -> [(u8, u8); 9] {
    std::array::from_fn(|k| ((k / 3 + 1) as u8, (k % 3 + 1) as u8))
}

fn born_table(rho: &DensityMatrix4) -> [[f64; 4]; 9] {
    setting_pairs().map(|(a, b)| {
        let ba = MeasBasis::pauli(a as usize).unwrap();
        let bb = MeasBasis::pauli(b as usize).unwrap();
        joint_probabilities(rho, ba.states(), bb.states())
    })
}

fn multinomial(n: u64, probs: &[f64; 4], rng: &mut ChaCha8Rng) -> [u64; 4] {
    let mut out = [0u64; 4];
    let mut remaining = n;
    let mut mass = probs.iter().sum::<f64>();
    for k in 0..3 {
        if remaining == 0 || mass <= 0.0 {
            break;
        }
        let p = (probs[k] / mass).clamp(0.0, 1.0);
        let draw = Binomial::new(remaining, p)
            .expect("p in [0, 1]")
            .sample(rng);
        out[k] = draw;
        remaining -= draw;
        mass -= probs[k];
    }
    out[3] = remaining;
    out
}

/// Multinomial counts for every setting; setting `k` draws from its own
/// stream seeded by `derive(seed, "tomography/<label>")`.
pub fn simulate_counts(
    state: &DensityMatrix4,
    channel: &ChannelConfig,
    shots: u64,
    seed: u64,
    exec: Execution,
) -> Result<CountsTable, TomographyError> {
    if shots == 0 {
        return Err(TomographyError::NoShots);
    }
    let rotated = apply_local(state, &channel.u_alice, &channel.u_bob)?;
    let table = born_table(&rotated);
    let jobs: Vec<(usize, (u8, u8))> = setting_pairs().into_iter().enumerate().collect();
    let settings = exec.map(&jobs, |&(k, (a, b))| {
        let label = format!("tomography/{}{}", AXIS[a as usize], AXIS[b as usize]);
        let mut rng = ChaCha8Rng::seed_from_u64(seed::derive(seed, &label));
        TomographySetting {
            alice_basis: a,
            bob_basis: b,
            outcome_counts: multinomial(shots, &table[k], &mut rng),
        }
    });
    Ok(CountsTable {
        settings: settings.try_into().expect("nine settings"),
        shots_per_setting: shots,
    })
}

/// Counts equal to `shots × probability`, rounded; the noiseless limit.
pub fn expected_counts(
    state: &DensityMatrix4,
    channel: &ChannelConfig,
    shots: u64,
) -> Result<CountsTable, TomographyError> {
    let rotated = apply_local(state, &channel.u_alice, &channel.u_bob)?;
    let table = born_table(&rotated);
    let pairs = setting_pairs();
    Ok(CountsTable {
        settings: std::array::from_fn(|k| TomographySetting {
            alice_basis: pairs[k].0,
            bob_basis: pairs[k].1,
            outcome_counts: table[k].map(|p| (p * shots as f64).round() as u64),
        }),
        shots_per_setting: shots,
    })
}

/// Two-qubit Pauli correlators `T[a][b] = ⟨σ_a ⊗ σ_b⟩`, with the
/// single-qubit terms averaged over the three settings that contain them.
pub fn correlators(counts: &CountsTable) -> Result<[[f64; 4]; 4], TomographyError> {
    let mut t = [[0.0f64; 4]; 4];
    let mut seen = [[false; 4]; 4];
    t[0][0] = 1.0;
    for s in &counts.settings {
        let (a, b) = (s.alice_basis as usize, s.bob_basis as usize);
        if !(1..=3).contains(&a) || !(1..=3).contains(&b) {
            return Err(TomographyError::Missing(format!(
                "valid basis in {}",
                s.label()
            )));
        }
        let n = s.total();
        if n == 0 {
            return Err(TomographyError::EmptySetting(s.label()));
        }
        let n = n as f64;
        let [pp, pm, mp, mm] = s.outcome_counts.map(|c| c as f64);
        t[a][b] = (pp - pm - mp + mm) / n;
        t[a][0] += (pp + pm - mp - mm) / n / 3.0;
        t[0][b] += (pp - pm + mp - mm) / n / 3.0;
        seen[a][b] = true;
    }
    for a in 1..4 {
        for b in 1..4 {
            if !seen[a][b] {
                return Err(TomographyError::Missing(format!("{}{}", AXIS[a], AXIS[b])));
            }
        }
    }
    Ok(t)
}

/// Linear inversion `ρ = ¼ Σ T_ab σ_a⊗σ_b`, then eigenvalue clipping and
/// trace renormalization.
pub fn reconstruct(counts: &CountsTable) -> Result<DensityMatrix4, TomographyError> {
    let t = correlators(counts)?;
    let mut m = Mat4::zero();
    for (a, row) in t.iter().enumerate() {
        for (b, &tab) in row.iter().enumerate() {
            if tab != 0.0 {
                m = m + Mat4::kron(&pauli(a)?, &pauli(b)?).scale(C64::from(tab / 4.0));
            }
        }
    }
    Ok(DensityMatrix4::project_physical(&m)?)
}

impl CountsTable {
    pub fn to_text(&self) -> String {
        let mut s = String::from("# COUNTS1 two-qubit Pauli tomography\n");
        writeln!(s, "shots_per_setting = {}", self.shots_per_setting).unwrap();
        s.push_str("# setting n++ n+- n-+ n--\n");
        for st in &self.settings {
            let c = st.outcome_counts;
            writeln!(s, "{} {} {} {} {}", st.label(), c[0], c[1], c[2], c[3]).unwrap();
        }
        s
    }

    pub fn from_text(text: &str) -> Result<Self, TomographyError> {
        let mut shots = None;
        let mut found: [Option<TomographySetting>; 9] = [None; 9];
        let parse_err = |line: usize, reason: String| TomographyError::Parse { line, reason };
        for (idx, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            if let Some((k, v)) = line.split_once('=') {
                if k.trim() != "shots_per_setting" {
                    return Err(parse_err(idx + 1, format!("unknown key {}", k.trim())));
                }
                shots = Some(
                    v.trim()
                        .parse::<u64>()
                        .map_err(|e| parse_err(idx + 1, e.to_string()))?,
                );
                continue;
            }
            let tokens: Vec<&str> = line.split_whitespace().collect();
            if tokens.len() != 5 {
                return Err(parse_err(idx + 1, "expected label and four counts".into()));
            }
            let label: Vec<char> = tokens[0].chars().collect();
            let axis = |c: char| AXIS[1..].iter().position(|&x| x == c).map(|p| p as u8 + 1);
            let (a, b) = match (label.as_slice(), label.len()) {
                (&[x, y], 2) => (axis(x), axis(y)),
                _ => (None, None),
            };
            let (Some(a), Some(b)) = (a, b) else {
                return Err(parse_err(
                    idx + 1,
                    format!("bad setting label {}", tokens[0]),
                ));
            };
            let mut counts = [0u64; 4];
            for (k, tok) in tokens[1..].iter().enumerate() {
                counts[k] = tok
                    .parse()
                    .map_err(|e: std::num::ParseIntError| parse_err(idx + 1, e.to_string()))?;
            }
            let slot = ((a - 1) * 3 + (b - 1)) as usize;
            if found[slot].is_some() {
                return Err(parse_err(
                    idx + 1,
                    format!("duplicate setting {}", tokens[0]),
                ));
            }
            found[slot] = Some(TomographySetting {
                alice_basis: a,
                bob_basis: b,
                outcome_counts: counts,
            });
        }
        let shots = shots.ok_or_else(|| TomographyError::Missing("shots_per_setting".into()))?;
        let mut settings = [TomographySetting {
            alice_basis: 0,
            bob_basis: 0,
            outcome_counts: [0; 4],
        }; 9];
        for (k, (a, b)) in setting_pairs().into_iter().enumerate() {
            settings[k] = found[k].ok_or_else(|| {
                TomographyError::Missing(format!("{}{}", AXIS[a as usize], AXIS[b as usize]))
            })?;
        }
        Ok(CountsTable {
            settings,
            shots_per_setting: shots,
        })
    }
}
