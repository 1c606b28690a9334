//! Bob's measurement bases from a reconstructed two-qubit state.
//!
//! Local rotations on both arms of a Bell pair fold into a single rotation on
//! Bob's side ([`fold_unitaries`]). The folded rotation is read off the
//! nearest pure state of the tomographic density matrix, and Bob's two bases
//! are the states conditioned on Alice finding `H` (and `D`).

use crate::linalg::{Mat2, C64};
use crate::quantum::{
    concurrence_pure, eigh, joint_probabilities, pauli, DensityMatrix4, PureState1Q, PureState2Q,
    QuantumError,
};
use std::fmt::Write as _;
use thiserror::Error;

/// Top-two eigenvalue gap below which the nearest pure state is ill-defined.
pub const DEGENERACY_GAP: f64 = 1e-6;

/// A conditional branch with squared norm below this is considered vanished.
pub const BRANCH_THRESHOLD: f64 = 1e-9;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum BasisError {
    #[error(transparent)]
    Quantum(#[from] QuantumError),
    #[error("top eigenvalue is degenerate (gap {gap:.3e})")]
    DegenerateTop { gap: f64 },
    #[error("conditional branch for Alice outcome {branch} vanishes")]
    BranchVanishes { branch: &'static str },
    #[error("basis vectors are not orthogonal (overlap {0:.3e})")]
    NotOrthogonal(f64),
    #[error("malformed plan record at line {line}: {reason}")]
    Parse { line: usize, reason: String },
}

/// Which outcome pairing carries the key in a given basis pair.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum CorrelationSign {
    /// Alice-plus pairs with Bob-plus.
    Correlated,
    /// Alice-plus pairs with Bob-minus.
    Anticorrelated,
}

impl CorrelationSign {
    pub fn value(self) -> i8 {
        match self {
            CorrelationSign::Correlated => 1,
            CorrelationSign::Anticorrelated => -1,
        }
    }

    pub fn from_value(v: i64) -> Option<Self> {
        match v {
            1 => Some(CorrelationSign::Correlated),
            -1 => Some(CorrelationSign::Anticorrelated),
            _ => None,
        }
    }
}

/// Orthonormal two-outcome measurement.
#[derive(Clone, Debug, PartialEq)]
pub struct MeasBasis {
    pub plus: PureState1Q,
    pub minus: PureState1Q,
    pub label: String,
}

impl MeasBasis {
    pub fn new(
        plus: PureState1Q,
        minus: PureState1Q,
        label: impl Into<String>,
    ) -> Result<Self, BasisError> {
        let ov = plus.inner(&minus).norm();
        if ov > 1e-10 {
            return Err(BasisError::NotOrthogonal(ov));
        }
        Ok(MeasBasis {
            plus: plus.canonical(),
            minus: minus.canonical(),
            label: label.into(),
        })
    }

    /// Completes `plus` with its orthogonal partner.
    pub fn from_plus(plus: PureState1Q, label: impl Into<String>) -> Self {
        MeasBasis {
            plus: plus.canonical(),
            minus: plus.orthogonal(),
            label: label.into(),
        }
    }

    /// Eigenbasis of `σ_i` for `i ∈ {1, 2, 3}`: `{D,A}`, `{R,L}`, `{H,V}`.
    pub fn pauli(i: usize) -> Result<Self, BasisError> {
        let (plus, minus, label) = match i {
            1 => (PureState1Q::d(), PureState1Q::a(), "sigma1"),
            2 => (PureState1Q::r(), PureState1Q::l(), "sigma2"),
            3 => (PureState1Q::h(), PureState1Q::v(), "sigma3"),
            _ => return Err(QuantumError::IndexOutOfRange(i).into()),
        };
        Ok(MeasBasis {
            plus,
            minus,
            label: label.into(),
        })
    }

    pub fn states(&self) -> [&PureState1Q; 2] {
        [&self.plus, &self.minus]
    }
}

/// Alice's fixed bases: `σ_3` pairs with Bob's `basis_z`, `σ_1` with `basis_x`.
pub fn alice_bases() -> [MeasBasis; 2] {
    [MeasBasis::pauli(3).unwrap(), MeasBasis::pauli(1).unwrap()]
}

/// Bob's measurement plan for one key session.
#[derive(Clone, Debug, PartialEq)]
pub struct BasisPlan {
    pub basis_z: MeasBasis,
    pub basis_x: MeasBasis,
    pub correlation_sign_z: CorrelationSign,
    pub correlation_sign_x: CorrelationSign,
    pub source_concurrence: f64,
}

impl BasisPlan {
    pub fn bases(&self) -> [&MeasBasis; 2] {
        [&self.basis_z, &self.basis_x]
    }

    pub fn signs(&self) -> [CorrelationSign; 2] {
        [self.correlation_sign_z, self.correlation_sign_x]
    }

    /// Bob measures in `σ_bob_z` / `σ_bob_x` eigenbases. Correlation signs are
    /// taken from `reference` so the pairing matches the expected state.
    pub fn pauli(
        bob_z: usize,
        bob_x: usize,
        reference: &DensityMatrix4,
    ) -> Result<Self, BasisError> {
        let basis_z = MeasBasis::pauli(bob_z)?;
        let basis_x = MeasBasis::pauli(bob_x)?;
        let [az, ax] = alice_bases();
        let sign = |alice: &MeasBasis, bob: &MeasBasis| {
            let p = joint_probabilities(reference, alice.states(), bob.states());
            if p[0] + p[3] >= p[1] + p[2] {
                CorrelationSign::Correlated
            } else {
                CorrelationSign::Anticorrelated
            }
        };
        Ok(BasisPlan {
            correlation_sign_z: sign(&az, &basis_z),
            correlation_sign_x: sign(&ax, &basis_x),
            basis_z,
            basis_x,
            source_concurrence: crate::quantum::concurrence(reference),
        })
    }

    /// Conventional `σ_3` / `σ_1` plan with signs fixed for `|ψ_1⟩`.
    pub fn conventional() -> Self {
        BasisPlan {
            basis_z: MeasBasis::pauli(3).unwrap(),
            basis_x: MeasBasis::pauli(1).unwrap(),
            correlation_sign_z: CorrelationSign::Anticorrelated,
            correlation_sign_x: CorrelationSign::Correlated,
            source_concurrence: 1.0,
        }
    }

    /// Plain-text record: one `key = value` per line, complex amplitudes as
    /// real/imaginary pairs with 12 significant digits.
    pub fn to_record(&self) -> String {
        let mut s = String::from("# PLAN1 measurement plan for Bob\n");
        for (name, b) in [("basis_z", &self.basis_z), ("basis_x", &self.basis_x)] {
            writeln!(s, "{name}.label = {}", b.label).unwrap();
            for (which, st) in [("plus", &b.plus), ("minus", &b.minus)] {
                let a = st.amplitudes();
                writeln!(
                    s,
                    "{name}.{which} = {} {} {} {}",
                    fmt12(a[0].re),
                    fmt12(a[0].im),
                    fmt12(a[1].re),
                    fmt12(a[1].im)
                )
                .unwrap();
            }
        }
        writeln!(
            s,
            "correlation_sign_z = {}",
            self.correlation_sign_z.value()
        )
        .unwrap();
        writeln!(
            s,
            "correlation_sign_x = {}",
            self.correlation_sign_x.value()
        )
        .unwrap();
        writeln!(s, "source_concurrence = {}", fmt12(self.source_concurrence)).unwrap();
        s
    }

    pub fn from_record(text: &str) -> Result<Self, BasisError> {
        let mut fields = std::collections::BTreeMap::new();
        for (idx, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (k, v) = line.split_once('=').ok_or_else(|| BasisError::Parse {
                line: idx + 1,
                reason: "expected key = value".into(),
            })?;
            fields.insert(k.trim().to_string(), (idx + 1, v.trim().to_string()));
        }
        let get = |key: &str| {
            fields.get(key).ok_or_else(|| BasisError::Parse {
                line: 0,
                reason: format!("missing {key}"),
            })
        };
        let state = |key: &str| -> Result<PureState1Q, BasisError> {
            let (line, v) = get(key)?;
            let nums = v
                .split_whitespace()
                .map(|t| t.parse::<f64>())
                .collect::<Result<Vec<_>, _>>()
                .map_err(|e| BasisError::Parse {
                    line: *line,
                    reason: e.to_string(),
                })?;
            if nums.len() != 4 {
                return Err(BasisError::Parse {
                    line: *line,
                    reason: "expected 4 numbers".into(),
                });
            }
            Ok(PureState1Q::verbatim([
                C64::new(nums[0], nums[1]),
                C64::new(nums[2], nums[3]),
            ])?)
        };
        let sign = |key: &str| -> Result<CorrelationSign, BasisError> {
            let (line, v) = get(key)?;
            v.parse::<i64>()
                .ok()
                .and_then(CorrelationSign::from_value)
                .ok_or_else(|| BasisError::Parse {
                    line: *line,
                    reason: "sign must be 1 or -1".into(),
                })
        };
        let basis = |name: &str| -> Result<MeasBasis, BasisError> {
            let plus = state(&format!("{name}.plus"))?;
            let minus = state(&format!("{name}.minus"))?;
            // 12 significant digits: orthogonality holds to ~1e-12
            let ov = plus.inner(&minus).norm();
            if ov > 1e-9 {
                return Err(BasisError::NotOrthogonal(ov));
            }
            Ok(MeasBasis {
                plus,
                minus,
                label: get(&format!("{name}.label"))?.1.clone(),
            })
        };
        let (line, conc) = get("source_concurrence")?;
        let source_concurrence = conc.parse::<f64>().map_err(|e| BasisError::Parse {
            line: *line,
            reason: e.to_string(),
        })?;
        Ok(BasisPlan {
            basis_z: basis("basis_z")?,
            basis_x: basis("basis_x")?,
            correlation_sign_z: sign("correlation_sign_z")?,
            correlation_sign_x: sign("correlation_sign_x")?,
            source_concurrence,
        })
    }
}

pub(crate) fn fmt12(x: f64) -> String {
    format!("{:.11e}", x)
}

/// `W = V σ_i Uᵀ σ_i`, so that `(U⊗V)|ψ_i⟩ = (1⊗W)|ψ_i⟩`.
pub fn fold_unitaries(u: &Mat2, v: &Mat2, i: usize) -> Result<Mat2, BasisError> {
    for m in [u, v] {
        let dev = (*m * m.adjoint()).max_abs_diff(&Mat2::identity());
        if dev > 1e-10 {
            return Err(QuantumError::NotUnitary(dev).into());
        }
    }
    let s = pauli(i)?;
    Ok(*v * s * u.transpose() * s)
}

/// Top eigenvector of `rho` and the gap `λ₁ − λ₂`.
pub fn nearest_pure(rho: &DensityMatrix4) -> Result<(PureState2Q, f64), BasisError> {
    let e = eigh(rho);
    let gap = e.pairs[0].0 - e.pairs[1].0;
    if gap < DEGENERACY_GAP {
        return Err(BasisError::DegenerateTop { gap });
    }
    Ok((e.pairs[0].1, gap))
}

/// Bob's states conditioned on Alice's `H` and `V` outcomes.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ConditionalStates {
    pub phi_h: PureState1Q,
    /// Keeps its phase relative to `phi_h`; not canonicalized.
    pub phi_v: PureState1Q,
    pub weight_h: f64,
}

pub fn conditional_states(psi: &PureState2Q) -> Result<ConditionalStates, BasisError> {
    let a = psi.amplitudes();
    let h_branch = [a[0], a[1]];
    let v_branch = [a[2], a[3]];
    let weight_h = h_branch.iter().map(|z| z.norm_sqr()).sum::<f64>();
    let weight_v = v_branch.iter().map(|z| z.norm_sqr()).sum::<f64>();
    if weight_h < BRANCH_THRESHOLD {
        return Err(BasisError::BranchVanishes { branch: "H" });
    }
    if weight_v < BRANCH_THRESHOLD {
        return Err(BasisError::BranchVanishes { branch: "V" });
    }
    Ok(ConditionalStates {
        phi_h: PureState1Q::phase_referenced(h_branch)?,
        phi_v: PureState1Q::phase_referenced(v_branch)?,
        weight_h,
    })
}

/// Bob's optimal plan derived from the nearest pure state of `rho`.
///
/// `basis_z = {φ_H, φ_H^⊥}`; `basis_x = {φ_D, φ_D^⊥}` with
/// `φ_D ∝ φ_H + φ_V`. When `φ_H` and `φ_V` are not orthogonal the `φ_A`
/// partner is Gram–Schmidt orthogonalized against `φ_D`. Both signs are
/// `Correlated` by construction.
pub fn optimal_bases(rho: &DensityMatrix4) -> Result<BasisPlan, BasisError> {
    let (psi, _gap) = nearest_pure(rho)?;
    let cond = conditional_states(&psi)?;
    let h = cond.phi_h.amplitudes();
    let v = cond.phi_v.amplitudes();

    let d_raw = [h[0] + v[0], h[1] + v[1]];
    let phi_d = PureState1Q::phase_referenced(d_raw)
        .map_err(|_| BasisError::BranchVanishes { branch: "D" })?;
    let a_raw = [h[0] - v[0], h[1] - v[1]];
    let phi_a = match PureState1Q::phase_referenced(a_raw) {
        Ok(a) => {
            let proj = phi_d.inner(&a);
            let d = phi_d.amplitudes();
            let r = [
                a.amplitudes()[0] - d[0] * proj,
                a.amplitudes()[1] - d[1] * proj,
            ];
            PureState1Q::phase_referenced(r).unwrap_or_else(|_| phi_d.orthogonal())
        }
        Err(_) => phi_d.orthogonal(),
    };

    Ok(BasisPlan {
        basis_z: MeasBasis::from_plus(cond.phi_h, "phi_H"),
        basis_x: MeasBasis {
            plus: phi_d.canonical(),
            minus: phi_a.canonical(),
            label: "phi_D".into(),
        },
        correlation_sign_z: CorrelationSign::Correlated,
        correlation_sign_x: CorrelationSign::Correlated,
        source_concurrence: concurrence_pure(&psi),
    })
}

/// Ideal-detector error probability for the `z` and `x` basis pairs.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct QberForecast {
    pub z: f64,
    pub x: f64,
}

impl QberForecast {
    pub fn mean(&self) -> f64 {
        0.5 * (self.z + self.x)
    }
}

/// Born-rule mass on the wrong-bit outcomes in each matched basis pair.
pub fn predicted_qber(rho: &DensityMatrix4, plan: &BasisPlan) -> QberForecast {
    let [az, ax] = alice_bases();
    let err = |alice: &MeasBasis, bob: &MeasBasis, sign: CorrelationSign| {
        let p = joint_probabilities(rho, alice.states(), bob.states());
        let total: f64 = p.iter().sum();
        let wrong = match sign {
            CorrelationSign::Correlated => p[1] + p[2],
            CorrelationSign::Anticorrelated => p[0] + p[3],
        };
        wrong / total
    };
    QberForecast {
        z: err(&az, &plan.basis_z, plan.correlation_sign_z),
        x: err(&ax, &plan.basis_x, plan.correlation_sign_x),
    }
}

/// Best plan restricted to Pauli eigenbases for Bob: every ordered pair of
/// distinct axes is scored by mean predicted QBER; ties keep the first in
/// `(3,1), (3,2), (1,3), (1,2), (2,3), (2,1)` order.
pub fn best_pauli_plan(rho: &DensityMatrix4) -> Result<BasisPlan, BasisError> {
    let order = [(3, 1), (3, 2), (1, 3), (1, 2), (2, 3), (2, 1)];
    let mut best: Option<(f64, BasisPlan)> = None;
    for (z, x) in order {
        let plan = BasisPlan::pauli(z, x, rho)?;
        let q = predicted_qber(rho, &plan).mean();
        if best.as_ref().is_none_or(|(bq, _)| q < *bq - 1e-15) {
            best = Some((q, plan));
        }
    }
    Ok(best.expect("non-empty candidate list").1)
}
