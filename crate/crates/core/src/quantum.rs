//! Two-qubit states and the standard quantities computed on them.

use crate::linalg::{inner, norm, Mat2, Mat4, C64, I, ONE, ZERO};
use std::f64::consts::FRAC_1_SQRT_2;
use thiserror::Error;

/// Amplitudes with modulus at or below this are treated as zero when fixing
/// the global phase.
pub const PHASE_THRESHOLD: f64 = 1e-9;

const HERMITIAN_TOL: f64 = 1e-10;
const TRACE_TOL: f64 = 1e-10;
const PSD_TOL: f64 = 1e-9;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum QuantumError {
    #[error("index {0} out of range 0..=3")]
    IndexOutOfRange(usize),
    #[error("matrix is not Hermitian (max deviation {0:.3e})")]
    NotHermitian(f64),
    #[error("trace {0} differs from 1")]
    TraceNotUnit(f64),
    #[error("matrix is not positive semidefinite (min eigenvalue {0:.3e})")]
    NotPositive(f64),
    #[error("matrix is not unitary (max deviation {0:.3e})")]
    NotUnitary(f64),
    #[error("state vector has zero norm")]
    ZeroNorm,
    #[error("non-finite amplitude")]
    NonFinite,
}

fn canonical_phase<const N: usize>(v: &mut [C64; N]) {
    if let Some(first) = v.iter().find(|z| z.norm() > PHASE_THRESHOLD) {
        let phase = first.conj() / first.norm();
        for z in v.iter_mut() {
            *z *= phase;
        }
    }
}

fn normalized<const N: usize>(mut v: [C64; N]) -> Result<[C64; N], QuantumError> {
    if v.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
        return Err(QuantumError::NonFinite);
    }
    let n = norm(&v);
    if n < 1e-300 {
        return Err(QuantumError::ZeroNorm);
    }
    for z in v.iter_mut() {
        *z /= n;
    }
    Ok(v)
}

/// Normalized single-qubit pure state.
///
/// `new` fixes the global phase so the first non-negligible amplitude is real
/// and positive. [`PureState1Q::phase_referenced`] keeps the caller's phase,
/// which matters when two states are later superposed.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PureState1Q([C64; 2]);

impl PureState1Q {
    pub fn new(amplitudes: [C64; 2]) -> Result<Self, QuantumError> {
        let mut v = normalized(amplitudes)?;
        canonical_phase(&mut v);
        Ok(PureState1Q(v))
    }

    pub fn phase_referenced(amplitudes: [C64; 2]) -> Result<Self, QuantumError> {
        Ok(PureState1Q(normalized(amplitudes)?))
    }

    /// Keeps amplitudes verbatim when already normalized to within `1e-9`;
    /// used when reading serialized states so that rewriting them is exact.
    pub(crate) fn verbatim(amplitudes: [C64; 2]) -> Result<Self, QuantumError> {
        if (norm(&amplitudes) - 1.0).abs() < 1e-9 {
            Ok(PureState1Q(amplitudes))
        } else {
            PureState1Q::new(amplitudes)
        }
    }

    pub fn amplitudes(&self) -> &[C64; 2] {
        &self.0
    }

    pub fn h() -> Self {
        PureState1Q([ONE, ZERO])
    }

    pub fn v() -> Self {
        PureState1Q([ZERO, ONE])
    }

    pub fn d() -> Self {
        PureState1Q([C64::from(FRAC_1_SQRT_2), C64::from(FRAC_1_SQRT_2)])
    }

    pub fn a() -> Self {
        PureState1Q([C64::from(FRAC_1_SQRT_2), C64::from(-FRAC_1_SQRT_2)])
    }

    pub fn r() -> Self {
        PureState1Q([C64::from(FRAC_1_SQRT_2), I * FRAC_1_SQRT_2])
    }

    pub fn l() -> Self {
        PureState1Q([C64::from(FRAC_1_SQRT_2), -I * FRAC_1_SQRT_2])
    }

    /// The state orthogonal to `self`, in canonical phase.
    pub fn orthogonal(&self) -> Self {
        let [a, b] = self.0;
        let mut v = [-b.conj(), a.conj()];
        canonical_phase(&mut v);
        PureState1Q(v)
    }

    pub fn canonical(&self) -> Self {
        let mut v = self.0;
        canonical_phase(&mut v);
        PureState1Q(v)
    }

    pub fn inner(&self, other: &PureState1Q) -> C64 {
        inner(&self.0, &other.0)
    }

    /// `|⟨self|other⟩|²`, insensitive to global phase.
    pub fn overlap(&self, other: &PureState1Q) -> f64 {
        self.inner(other).norm_sqr()
    }

    pub fn apply(&self, u: &Mat2) -> Result<Self, QuantumError> {
        PureState1Q::phase_referenced(u.apply(&self.0))
    }
}

/// Normalized two-qubit pure state in canonical global phase.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PureState2Q([C64; 4]);

impl PureState2Q {
    pub fn new(amplitudes: [C64; 4]) -> Result<Self, QuantumError> {
        let mut v = normalized(amplitudes)?;
        canonical_phase(&mut v);
        Ok(PureState2Q(v))
    }

    pub fn amplitudes(&self) -> &[C64; 4] {
        &self.0
    }

    pub fn inner(&self, other: &PureState2Q) -> C64 {
        inner(&self.0, &other.0)
    }

    /// `|⟨self|other⟩|²`
    pub fn overlap(&self, other: &PureState2Q) -> f64 {
        self.inner(other).norm_sqr()
    }

    /// Distance between the two states after aligning their global phases.
    pub fn phase_distance(&self, other: &PureState2Q) -> f64 {
        let ov = self.inner(other);
        let phase = if ov.norm() > 0.0 { ov / ov.norm() } else { ONE };
        self.0
            .iter()
            .zip(other.0.iter())
            .map(|(a, b)| (a * phase - b).norm_sqr())
            .sum::<f64>()
            .sqrt()
    }

    pub fn apply(&self, op: &Mat4) -> Result<Self, QuantumError> {
        PureState2Q::new(op.apply(&self.0))
    }

    pub fn apply_local(&self, u: &Mat2, v: &Mat2) -> Result<Self, QuantumError> {
        self.apply(&Mat4::kron(u, v))
    }

    pub fn projector(&self) -> Mat4 {
        Mat4::outer(&self.0)
    }
}

/// Validated two-qubit density matrix.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DensityMatrix4(Mat4);

impl DensityMatrix4 {
    /// Checks Hermiticity, unit trace and positivity.
    pub fn new(m: Mat4) -> Result<Self, QuantumError> {
        if m.0.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
            return Err(QuantumError::NonFinite);
        }
        let herm = m.max_abs_diff(&m.adjoint());
        if herm > HERMITIAN_TOL {
            return Err(QuantumError::NotHermitian(herm));
        }
        let tr = m.trace();
        if (tr.re - 1.0).abs() > TRACE_TOL || tr.im.abs() > TRACE_TOL {
            return Err(QuantumError::TraceNotUnit(tr.re));
        }
        let min_eig = jacobi_eigen(&m).0[3];
        if min_eig < -PSD_TOL {
            return Err(QuantumError::NotPositive(min_eig));
        }
        Ok(DensityMatrix4(m))
    }

    pub fn from_pure(psi: &PureState2Q) -> Self {
        DensityMatrix4(psi.projector())
    }

    pub fn maximally_mixed() -> Self {
        DensityMatrix4(Mat4::identity().scale(C64::from(0.25)))
    }

    /// `p·|ψ⟩⟨ψ| + (1−p)·I/4`
    pub fn werner(p: f64, psi: &PureState2Q) -> Self {
        let pure = psi.projector().scale(C64::from(p));
        let mixed = Mat4::identity().scale(C64::from((1.0 - p) / 4.0));
        DensityMatrix4(pure + mixed)
    }

    pub fn matrix(&self) -> &Mat4 {
        &self.0
    }

    /// Accepts a Hermitian matrix and returns the closest density matrix
    /// obtained by clipping negative eigenvalues and renormalizing the trace.
    pub fn project_physical(m: &Mat4) -> Result<Self, QuantumError> {
        let herm = m.max_abs_diff(&m.adjoint());
        if herm > HERMITIAN_TOL {
            return Err(QuantumError::NotHermitian(herm));
        }
        let sym = (*m + m.adjoint()).scale(C64::from(0.5));
        let (vals, vecs) = jacobi_eigen(&sym);
        let clipped = vals.map(|l| l.max(0.0));
        let total: f64 = clipped.iter().sum();
        if total <= 0.0 {
            return Err(QuantumError::NotPositive(vals[0]));
        }
        let mut out = Mat4::zero();
        for (k, &l) in clipped.iter().enumerate() {
            if l > 0.0 {
                out = out + Mat4::outer(&vecs[k]).scale(C64::from(l / total));
            }
        }
        // restore exact Hermiticity lost to rounding
        let out = (out + out.adjoint()).scale(C64::from(0.5));
        Ok(DensityMatrix4(out))
    }
}

/// Spectrum of a density matrix, sorted by descending eigenvalue.
#[derive(Clone, Debug, PartialEq)]
pub struct EigenDecomposition {
    pub pairs: Vec<(f64, PureState2Q)>,
}

impl EigenDecomposition {
    pub fn eigenvalues(&self) -> Vec<f64> {
        self.pairs.iter().map(|(l, _)| *l).collect()
    }

    pub fn top(&self) -> &(f64, PureState2Q) {
        &self.pairs[0]
    }

    pub fn reconstruct(&self) -> Mat4 {
        self.pairs.iter().fold(Mat4::zero(), |acc, (l, v)| {
            acc + v.projector().scale(C64::from(*l))
        })
    }
}

/// `σ_0 = 1`, `σ_1 = X`, `σ_2 = Y`, `σ_3 = Z`.
pub fn pauli(i: usize) -> Result<Mat2, QuantumError> {
    Ok(match i {
        0 => Mat2::identity(),
        1 => Mat2::new(ZERO, ONE, ONE, ZERO),
        2 => Mat2::new(ZERO, -I, I, ZERO),
        3 => Mat2::new(ONE, ZERO, ZERO, -ONE),
        _ => return Err(QuantumError::IndexOutOfRange(i)),
    })
}

/// Indexed Bell states `|ψ_i⟩ = (1 ⊗ σ_i)|ψ_0⟩` with `|ψ_0⟩ = (|00⟩+|11⟩)/√2`.
///
/// The result is stored in canonical phase, so `|ψ_2⟩` carries an overall
/// factor relative to `(1 ⊗ σ_2)|ψ_0⟩`.
pub fn bell_state(i: usize) -> Result<PureState2Q, QuantumError> {
    let s = C64::from(FRAC_1_SQRT_2);
    let psi0 = [s, ZERO, ZERO, s];
    let sigma = pauli(i)?;
    PureState2Q::new(Mat4::kron(&Mat2::identity(), &sigma).apply(&psi0))
}

/// `⟨ψ|ρ|ψ⟩`
pub fn fidelity_pure(rho: &DensityMatrix4, psi: &PureState2Q) -> f64 {
    rho.matrix()
        .expectation(psi.amplitudes())
        .re
        .clamp(0.0, 1.0)
}

/// Uhlmann fidelity `(Tr √(√ρ σ √ρ))²`.
pub fn fidelity(rho: &DensityMatrix4, sigma: &DensityMatrix4) -> f64 {
    let sqrt_rho = psd_sqrt(rho.matrix());
    let m = sqrt_rho * *sigma.matrix() * sqrt_rho;
    let m = (m + m.adjoint()).scale(C64::from(0.5));
    let (vals, _) = jacobi_eigen(&m);
    let t: f64 = vals.iter().map(|l| l.max(0.0).sqrt()).sum();
    (t * t).clamp(0.0, 1.0)
}

fn psd_sqrt(m: &Mat4) -> Mat4 {
    let (vals, vecs) = jacobi_eigen(m);
    let mut out = Mat4::zero();
    for (k, &l) in vals.iter().enumerate() {
        if l > 0.0 {
            out = out + Mat4::outer(&vecs[k]).scale(C64::from(l.sqrt()));
        }
    }
    out
}

/// `Tr(ρ²)`
pub fn purity(rho: &DensityMatrix4) -> f64 {
    let m = rho.matrix();
    // Tr(ρ²) = Σ |ρ_ij|² for Hermitian ρ
    m.0.iter().map(|z| z.norm_sqr()).sum()
}

/// Wootters concurrence.
///
/// Uses the Hermitian form `R = √ρ ρ̃ √ρ`, whose eigenvalues are the squares
/// of the decreasing sequence `μ_i` of the usual definition.
pub fn concurrence(rho: &DensityMatrix4) -> f64 {
    let yy = Mat4::kron(&pauli(2).unwrap(), &pauli(2).unwrap());
    let m = rho.matrix();
    let tilde = yy * m.conj() * yy;
    let sqrt_rho = psd_sqrt(m);
    let r = sqrt_rho * tilde * sqrt_rho;
    let r = (r + r.adjoint()).scale(C64::from(0.5));
    let (rv, _) = jacobi_eigen(&r);
    let mu = rv.map(|l| l.max(0.0).sqrt());
    (mu[0] - mu[1] - mu[2] - mu[3]).clamp(0.0, 1.0)
}

/// Concurrence of a pure state, `|⟨ψ|σ_y⊗σ_y|ψ*⟩|`.
pub fn concurrence_pure(psi: &PureState2Q) -> f64 {
    let a = psi.amplitudes();
    (2.0 * (a[0] * a[3] - a[1] * a[2]).norm()).clamp(0.0, 1.0)
}

/// Hermitian eigendecomposition, eigenvalues descending.
pub fn eigh(rho: &DensityMatrix4) -> EigenDecomposition {
    eigh_matrix(rho.matrix()).expect("density matrices are Hermitian")
}

/// Eigendecomposition of any Hermitian 4×4 matrix.
pub fn eigh_matrix(m: &Mat4) -> Result<EigenDecomposition, QuantumError> {
    let herm = m.max_abs_diff(&m.adjoint());
    if herm > HERMITIAN_TOL {
        return Err(QuantumError::NotHermitian(herm));
    }
    let (vals, vecs) = jacobi_eigen(m);
    let pairs = vals
        .iter()
        .zip(vecs.iter())
        .map(|(&l, v)| Ok((l, PureState2Q::new(*v)?)))
        .collect::<Result<Vec<_>, QuantumError>>()?;
    Ok(EigenDecomposition { pairs })
}

/// `(U⊗V) ρ (U⊗V)†`
pub fn apply_local(
    rho: &DensityMatrix4,
    u: &Mat2,
    v: &Mat2,
) -> Result<DensityMatrix4, QuantumError> {
    for m in [u, v] {
        let dev = (*m * m.adjoint()).max_abs_diff(&Mat2::identity());
        if dev > 1e-10 {
            return Err(QuantumError::NotUnitary(dev));
        }
    }
    let k = Mat4::kron(u, v);
    let out = k * *rho.matrix() * k.adjoint();
    Ok(DensityMatrix4((out + out.adjoint()).scale(C64::from(0.5))))
}

/// Born-rule probabilities of the four joint outcomes `(++, +−, −+, −−)` when
/// Alice measures `{a_plus, a_minus}` and Bob measures `{b_plus, b_minus}`.
pub fn joint_probabilities(
    rho: &DensityMatrix4,
    alice: [&PureState1Q; 2],
    bob: [&PureState1Q; 2],
) -> [f64; 4] {
    let mut out = [0.0; 4];
    for (ia, a) in alice.iter().enumerate() {
        for (ib, b) in bob.iter().enumerate() {
            let aa = a.amplitudes();
            let bb = b.amplitudes();
            let v = [aa[0] * bb[0], aa[0] * bb[1], aa[1] * bb[0], aa[1] * bb[1]];
            out[2 * ia + ib] = rho.matrix().expectation(&v).re.max(0.0);
        }
    }
    out
}

/// Cyclic complex Jacobi for Hermitian 4×4 matrices.
///
/// Returns eigenvalues in descending order (stable for ties) and the matching
/// orthonormal eigenvectors.
pub(crate) fn jacobi_eigen(m: &Mat4) -> ([f64; 4], [[C64; 4]; 4]) {
    let mut a = *m;
    let mut v = Mat4::identity();
    let scale = m.0.iter().map(|z| z.norm_sqr()).sum::<f64>().max(1e-300);

    for _sweep in 0..64 {
        if a.off_diagonal_norm_sqr() <= 1e-32 * scale {
            break;
        }
        for p in 0..3 {
            for q in (p + 1)..4 {
                let apq = a.get(p, q);
                let r = apq.norm();
                if r <= 1e-300 {
                    continue;
                }
                let app = a.get(p, p).re;
                let aqq = a.get(q, q).re;
                let phase = apq / r;
                // real symmetric 2×2 [[app, r], [r, aqq]] after removing the phase
                let tau = (aqq - app) / (2.0 * r);
                let t = if tau >= 0.0 {
                    1.0 / (tau + (1.0 + tau * tau).sqrt())
                } else {
                    -1.0 / (-tau + (1.0 + tau * tau).sqrt())
                };
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = t * c;
                // G = diag(1, e^{-iφ}) · [[c, s], [-s, c]] on the (p, q) plane
                let pc = phase.conj();
                let gpp = C64::from(c);
                let gpq = C64::from(s);
                let gqp = pc * (-s);
                let gqq = pc * c;

                // A ← A·G (columns p, q)
                for k in 0..4 {
                    let akp = a.get(k, p);
                    let akq = a.get(k, q);
                    a.set(k, p, akp * gpp + akq * gqp);
                    a.set(k, q, akp * gpq + akq * gqq);
                }
                // A ← G†·A (rows p, q)
                for k in 0..4 {
                    let apk = a.get(p, k);
                    let aqk = a.get(q, k);
                    a.set(p, k, gpp.conj() * apk + gqp.conj() * aqk);
                    a.set(q, k, gpq.conj() * apk + gqq.conj() * aqk);
                }
                a.set(p, q, ZERO);
                a.set(q, p, ZERO);
                let (pp, qq) = (a.get(p, p).re, a.get(q, q).re);
                a.set(p, p, C64::from(pp));
                a.set(q, q, C64::from(qq));
                // V ← V·G
                for k in 0..4 {
                    let vkp = v.get(k, p);
                    let vkq = v.get(k, q);
                    v.set(k, p, vkp * gpp + vkq * gqp);
                    v.set(k, q, vkp * gpq + vkq * gqq);
                }
            }
        }
    }

    let mut order = [0usize, 1, 2, 3];
    let diag: [f64; 4] = std::array::from_fn(|i| a.get(i, i).re);
    order.sort_by(|&x, &y| diag[y].total_cmp(&diag[x]));
    let vals = order.map(|i| diag[i]);
    let vecs = order.map(|i| std::array::from_fn(|r| v.get(r, i)));
    (vals, vecs)
}

/// Seeded random states and unitaries for tests and sweeps.
pub mod random {
    use super::*;
    use rand::Rng;
    use rand_distr::StandardNormal;

    fn gaussian(rng: &mut impl Rng) -> C64 {
        C64::new(rng.sample(StandardNormal), rng.sample(StandardNormal))
    }

    /// Haar-random 2×2 unitary (QR of a complex Ginibre matrix with the
    /// diagonal phase fix).
    pub fn unitary2(rng: &mut impl Rng) -> Mat2 {
        let c0 = [gaussian(rng), gaussian(rng)];
        let c1 = [gaussian(rng), gaussian(rng)];
        let n0 = norm(&c0);
        let q0 = [c0[0] / n0, c0[1] / n0];
        let proj = inner(&q0, &c1);
        let r1 = [c1[0] - q0[0] * proj, c1[1] - q0[1] * proj];
        let n1 = norm(&r1);
        let q1 = [r1[0] / n1, r1[1] / n1];
        // random global phase on the second column keeps the measure Haar
        let phase = gaussian(rng);
        let phase = phase / phase.norm();
        Mat2::new(q0[0], q1[0] * phase, q0[1], q1[1] * phase)
    }

    pub fn pure2(rng: &mut impl Rng) -> PureState2Q {
        PureState2Q::new(std::array::from_fn(|_| gaussian(rng))).expect("gaussian vector")
    }

    /// Ginibre ensemble: `G G† / Tr(G G†)`.
    pub fn density(rng: &mut impl Rng) -> DensityMatrix4 {
        let g = Mat4(std::array::from_fn(|_| gaussian(rng)));
        let w = g * g.adjoint();
        let tr = w.trace().re;
        let w = w.scale(C64::from(1.0 / tr));
        DensityMatrix4((w + w.adjoint()).scale(C64::from(0.5)))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    const S: f64 = FRAC_1_SQRT_2;

    fn werner(p: f64) -> DensityMatrix4 {
        DensityMatrix4::werner(p, &bell_state(1).unwrap())
    }

    #[test]
    fn uhlmann_fidelity_special_cases() {
        let mut rng = ChaCha8Rng::seed_from_u64(41);
        for _ in 0..50 {
            let rho = random::density(&mut rng);
            let sigma = random::density(&mut rng);
            let psi = random::pure2(&mut rng);
            assert!((fidelity(&rho, &rho) - 1.0).abs() < 1e-6);
            assert!((fidelity(&rho, &sigma) - fidelity(&sigma, &rho)).abs() < 1e-6);
            let pure = DensityMatrix4::from_pure(&psi);
            assert!((fidelity(&rho, &pure) - fidelity_pure(&rho, &psi)).abs() < 1e-6);
        }
        // commuting states: classical Bhattacharyya overlap squared
        let diag = |p: [f64; 4]| {
            DensityMatrix4::new(Mat4::from_fn(
                |r, c| if r == c { C64::from(p[r]) } else { ZERO },
            ))
            .unwrap()
        };
        let (p, q): ([f64; 4], [f64; 4]) = ([0.1, 0.2, 0.3, 0.4], [0.25, 0.25, 0.4, 0.1]);
        let bc: f64 = p.iter().zip(q).map(|(a, b)| (a * b).sqrt()).sum();
        assert!((fidelity(&diag(p), &diag(q)) - bc * bc).abs() < 1e-12);
        assert!((fidelity(&werner(0.92), &werner(0.92)) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn bell_states_match_table() {
        let b0 = bell_state(0).unwrap();
        let b1 = bell_state(1).unwrap();
        let expect0 = [C64::from(S), ZERO, ZERO, C64::from(S)];
        let expect1 = [ZERO, C64::from(S), C64::from(S), ZERO];
        for k in 0..4 {
            assert!((b0.amplitudes()[k] - expect0[k]).norm() < 1e-15);
            assert!((b1.amplitudes()[k] - expect1[k]).norm() < 1e-15);
        }
        assert_eq!(bell_state(4), Err(QuantumError::IndexOutOfRange(4)));
    }

    #[test]
    fn bell_states_are_pauli_images_of_psi0() {
        let psi0 = bell_state(0).unwrap();
        for i in 0..4 {
            let via = psi0
                .apply_local(&Mat2::identity(), &pauli(i).unwrap())
                .unwrap();
            assert!(via.phase_distance(&bell_state(i).unwrap()) < 1e-14);
            // and back, by self-inverse Paulis
            let back = bell_state(i)
                .unwrap()
                .apply_local(&Mat2::identity(), &pauli(i).unwrap())
                .unwrap();
            assert!(back.phase_distance(&psi0) < 1e-14);
        }
    }

    #[test]
    fn pauli_algebra() {
        assert_eq!(pauli(0).unwrap(), Mat2::identity());
        for i in 0..4 {
            let p = pauli(i).unwrap();
            assert!((p * p).max_abs_diff(&Mat2::identity()) < 1e-15);
            assert!(p.is_unitary(1e-15) && p.is_hermitian(1e-15));
        }
        let xy = pauli(1).unwrap() * pauli(2).unwrap();
        assert!(xy.max_abs_diff(&pauli(3).unwrap().scale(I)) < 1e-15);
        assert!(pauli(7).is_err());
    }

    #[test]
    fn fidelity_examples() {
        let b1 = bell_state(1).unwrap();
        assert!((fidelity_pure(&DensityMatrix4::from_pure(&b1), &b1) - 1.0).abs() < 1e-12);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let x = random::pure2(&mut rng);
        assert!((fidelity_pure(&DensityMatrix4::maximally_mixed(), &x) - 0.25).abs() < 1e-12);
        assert!((fidelity_pure(&werner(0.92), &b1) - 0.94).abs() < 1e-12);
    }

    #[test]
    fn concurrence_examples() {
        for i in 0..4 {
            let rho = DensityMatrix4::from_pure(&bell_state(i).unwrap());
            assert!((concurrence(&rho) - 1.0).abs() < 1e-7, "bell {i}");
        }
        assert!(concurrence(&DensityMatrix4::maximally_mixed()).abs() < 1e-12);
        assert!((concurrence(&werner(0.92)) - 0.88).abs() < 1e-9);
        // product state
        let prod = PureState2Q::new([ONE, ZERO, ZERO, ZERO]).unwrap();
        assert!(concurrence(&DensityMatrix4::from_pure(&prod)) < 1e-7);
    }

    #[test]
    fn concurrence_pure_agrees_with_mixed_formula() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..50 {
            let psi = random::pure2(&mut rng);
            let a = concurrence_pure(&psi);
            let b = concurrence(&DensityMatrix4::from_pure(&psi));
            assert!((a - b).abs() < 1e-6, "{a} vs {b}");
        }
    }

    #[test]
    fn purity_examples() {
        let b1 = bell_state(1).unwrap();
        assert!((purity(&DensityMatrix4::from_pure(&b1)) - 1.0).abs() < 1e-12);
        assert!((purity(&DensityMatrix4::maximally_mixed()) - 0.25).abs() < 1e-12);
        assert!((purity(&werner(0.92)) - 0.8848).abs() < 1e-12);
    }

    #[test]
    fn eigh_examples() {
        let b1 = bell_state(1).unwrap();
        let e = eigh(&DensityMatrix4::from_pure(&b1));
        let vals = e.eigenvalues();
        assert!((vals[0] - 1.0).abs() < 1e-12);
        assert!(vals[1..].iter().all(|l| l.abs() < 1e-12));
        assert!(e.top().1.overlap(&b1) > 1.0 - 1e-12);

        let e = eigh(&DensityMatrix4::maximally_mixed());
        assert!(e.eigenvalues().iter().all(|l| (l - 0.25).abs() < 1e-12));

        let e = eigh(&werner(0.92));
        let vals = e.eigenvalues();
        assert!((vals[0] - 0.94).abs() < 1e-12);
        assert!(vals[1..].iter().all(|l| (l - 0.02).abs() < 1e-12));
    }

    #[test]
    fn eigh_rejects_non_hermitian() {
        let mut m = Mat4::identity().scale(C64::from(0.25));
        m.set(0, 1, C64::new(0.1, 0.0));
        assert!(matches!(
            eigh_matrix(&m),
            Err(QuantumError::NotHermitian(_))
        ));
    }

    #[test]
    fn eigh_reconstructs_random_states() {
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        for _ in 0..1000 {
            let rho = random::density(&mut rng);
            let e = eigh(&rho);
            assert!(e.reconstruct().max_abs_diff(rho.matrix()) < 1e-9);
            let vals = e.eigenvalues();
            assert!((vals.iter().sum::<f64>() - 1.0).abs() < 1e-9);
            assert!(vals.windows(2).all(|w| w[0] >= w[1]));
            for i in 0..4 {
                for j in 0..4 {
                    let ip = e.pairs[i].1.inner(&e.pairs[j].1).norm();
                    let want = if i == j { 1.0 } else { 0.0 };
                    assert!((ip - want).abs() < 1e-9);
                }
            }
        }
    }

    #[test]
    fn top_eigenvector_maximizes_fidelity() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..10 {
            let rho = random::density(&mut rng);
            let top = eigh(&rho).top().1;
            let best = fidelity_pure(&rho, &top);
            for _ in 0..1000 {
                let x = random::pure2(&mut rng);
                assert!(best >= fidelity_pure(&rho, &x) - 1e-12);
            }
        }
    }

    #[test]
    fn apply_local_examples() {
        let rho = werner(0.7);
        let same = apply_local(&rho, &Mat2::identity(), &Mat2::identity()).unwrap();
        assert!(same.matrix().max_abs_diff(rho.matrix()) < 1e-15);

        let psi0 = DensityMatrix4::from_pure(&bell_state(0).unwrap());
        let x = pauli(1).unwrap();
        let out = apply_local(&psi0, &x, &x).unwrap();
        assert!(out.matrix().max_abs_diff(psi0.matrix()) < 1e-15);

        let bad = Mat2::from_real(1.0, 1.0, 0.0, 1.0);
        assert!(matches!(
            apply_local(&rho, &bad, &Mat2::identity()),
            Err(QuantumError::NotUnitary(_))
        ));
    }

    #[test]
    fn local_unitaries_preserve_spectrum_and_concurrence() {
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        for _ in 0..200 {
            let rho = random::density(&mut rng);
            let u = random::unitary2(&mut rng);
            let v = random::unitary2(&mut rng);
            let out = apply_local(&rho, &u, &v).unwrap();
            assert!((out.matrix().trace().re - 1.0).abs() < 1e-10);
            let a = eigh(&rho).eigenvalues();
            let b = eigh(&out).eigenvalues();
            for (x, y) in a.iter().zip(b.iter()) {
                assert!((x - y).abs() < 1e-10);
            }
            assert!((concurrence(&rho) - concurrence(&out)).abs() < 1e-9);
        }
    }

    #[test]
    fn density_validation() {
        assert!(DensityMatrix4::new(Mat4::identity()).is_err());
        let mut m = Mat4::zero();
        m.set(0, 0, C64::from(1.5));
        m.set(1, 1, C64::from(-0.5));
        assert!(matches!(
            DensityMatrix4::new(m),
            Err(QuantumError::NotPositive(_))
        ));
        assert!(DensityMatrix4::new(*werner(0.3).matrix()).is_ok());
    }

    #[test]
    fn canonical_phase_rule() {
        let psi = PureState2Q::new([ZERO, C64::new(0.0, -1.0), ZERO, ZERO]).unwrap();
        assert_eq!(psi.amplitudes()[1], ONE);
        let q = PureState1Q::new([C64::new(0.0, 3.0), C64::new(4.0, 0.0)]).unwrap();
        assert!((q.amplitudes()[0] - C64::from(0.6)).norm() < 1e-15);
        assert!((q.amplitudes()[1] - C64::new(0.0, -0.8)).norm() < 1e-15);
        assert_eq!(PureState1Q::new([ZERO, ZERO]), Err(QuantumError::ZeroNorm));
    }
}
