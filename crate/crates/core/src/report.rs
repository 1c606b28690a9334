//! Session report: one JSON document plus a plain-text summary. Every real
//! number is rounded to six significant digits before it is stored.

use crate::basis::{predicted_qber, BasisPlan, MeasBasis};
use crate::coincidence::{Forecast, OptimizationResult, SiftResult, WindowFile};
use crate::quantum::{bell_state, concurrence, eigh, fidelity_pure, purity, DensityMatrix4};
use serde::{Deserialize, Serialize};
use std::fmt::Write as _;

/// Rounds to six significant digits.
pub fn sig6(x: f64) -> f64 {
    if x == 0.0 || !x.is_finite() {
        return x;
    }
    format!("{x:.5e}").parse().unwrap()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StateReport {
    pub fidelity_psi1: f64,
    pub concurrence: f64,
    pub purity: f64,
    /// Gap between the two largest eigenvalues.
    pub nearest_pure_gap: f64,
    pub nearest_pure_weight: f64,
}

impl StateReport {
    pub fn of(rho: &DensityMatrix4) -> Self {
        let e = eigh(rho);
        let psi1 = bell_state(1).expect("index 1 is valid");
        StateReport {
            fidelity_psi1: sig6(fidelity_pure(rho, &psi1)),
            concurrence: sig6(concurrence(rho)),
            purity: sig6(purity(rho)),
            nearest_pure_gap: sig6(e.pairs[0].0 - e.pairs[1].0),
            nearest_pure_weight: sig6(e.pairs[0].0),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BasisReport {
    pub label: String,
    /// `[re, im]` amplitudes of the plus state in the `H`/`V` basis.
    pub plus: [[f64; 2]; 2],
    pub sign: i8,
}

impl BasisReport {
    fn of(b: &MeasBasis, sign: i8) -> Self {
        let a = b.plus.amplitudes();
        BasisReport {
            label: b.label.clone(),
            plus: [
                [sig6(a[0].re), sig6(a[0].im)],
                [sig6(a[1].re), sig6(a[1].im)],
            ],
            sign,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PlanReport {
    pub basis_z: BasisReport,
    pub basis_x: BasisReport,
    /// Born-rule QBER of the plan on the tomographic estimate, `[z, x]`.
    pub predicted_qber: Option<[f64; 2]>,
}

impl PlanReport {
    pub fn of(plan: &BasisPlan, estimate: Option<&DensityMatrix4>) -> Self {
        PlanReport {
            basis_z: BasisReport::of(&plan.basis_z, plan.correlation_sign_z.value()),
            basis_x: BasisReport::of(&plan.basis_x, plan.correlation_sign_x.value()),
            predicted_qber: estimate.map(|rho| {
                let q = predicted_qber(rho, plan);
                [sig6(q.z), sig6(q.x)]
            }),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StreamReport {
    pub duration_s: f64,
    pub alice_events: u64,
    pub bob_events: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WindowEntry {
    pub alice: u8,
    pub bob: u8,
    pub center_ps: i64,
    pub half_width_ps: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ForecastReport {
    pub bits: u64,
    pub qber_overall: f64,
    pub qber_per_basis: [f64; 2],
    pub key_rate_bps: f64,
}

impl ForecastReport {
    pub fn of(f: &Forecast) -> Self {
        let q = f.qber_per_basis();
        ForecastReport {
            bits: f.bits(),
            qber_overall: sig6(f.qber_overall()),
            qber_per_basis: [sig6(q[0]), sig6(q[1])],
            key_rate_bps: sig6(f.key_rate_bps()),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WindowReport {
    pub mode: String,
    pub target_qber: f64,
    pub feasible: bool,
    pub windows: Vec<WindowEntry>,
    pub forecast: ForecastReport,
}

impl WindowReport {
    pub fn of(file: &WindowFile, forecast: &Forecast) -> Self {
        WindowReport {
            mode: file.mode.clone(),
            target_qber: sig6(file.target_qber),
            feasible: file.feasible,
            windows: file
                .windows
                .iter()
                .map(|w| WindowEntry {
                    alice: w.pair.alice,
                    bob: w.pair.bob,
                    center_ps: w.center_delay_ps,
                    half_width_ps: w.half_width_ps,
                })
                .collect(),
            forecast: ForecastReport::of(forecast),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SiftReport {
    pub bits: u64,
    pub bits_per_basis: [u64; 2],
    pub errors_per_basis: [u64; 2],
    pub ambiguous_dropped: u64,
    pub qber_overall: f64,
    pub qber_per_basis: [f64; 2],
    pub key_rate_bps: f64,
}

impl SiftReport {
    pub fn of(s: &SiftResult) -> Self {
        SiftReport {
            bits: s.bit_count(),
            bits_per_basis: s.bits_per_basis,
            errors_per_basis: s.errors_per_basis,
            ambiguous_dropped: s.ambiguous_dropped,
            qber_overall: sig6(s.qber_overall),
            qber_per_basis: [sig6(s.qber_per_basis[0]), sig6(s.qber_per_basis[1])],
            key_rate_bps: sig6(s.key_rate_bps),
        }
    }
}

/// Facts only the simulator knows; absent from replayed reports.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SimulationReport {
    pub plan_mode: String,
    pub emitted_pairs: u64,
    pub true_state: StateReport,
    pub optimizer_candidates: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SessionReport {
    /// Diagnostics of the tomographic estimate; absent without counts.
    pub state: Option<StateReport>,
    pub plan: PlanReport,
    pub streams: StreamReport,
    pub windows: WindowReport,
    pub sift: SiftReport,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub simulation: Option<SimulationReport>,
}

impl SessionReport {
    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("report serializes");
        s.push('\n');
        s
    }

    pub fn from_json(text: &str) -> serde_json::Result<Self> {
        serde_json::from_str(text)
    }

    /// Attaches simulator-only facts; `opt` is the optimizer run, if any.
    pub fn with_simulation(
        mut self,
        plan_mode: &str,
        emitted_pairs: u64,
        true_state: &DensityMatrix4,
        opt: &OptimizationResult,
    ) -> Self {
        self.simulation = Some(SimulationReport {
            plan_mode: plan_mode.into(),
            emitted_pairs,
            true_state: StateReport::of(true_state),
            optimizer_candidates: opt.candidates_evaluated,
        });
        self
    }

    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let pct = |x: f64| format!("{:.3}%", 100.0 * x);
        if let Some(st) = &self.state {
            writeln!(
                s,
                "state      fidelity {:.4}  concurrence {:.4}  purity {:.4}  gap {:.4}",
                st.fidelity_psi1, st.concurrence, st.purity, st.nearest_pure_gap
            )
            .unwrap();
        }
        writeln!(
            s,
            "plan       z: {} ({:+})  x: {} ({:+})",
            self.plan.basis_z.label,
            self.plan.basis_z.sign,
            self.plan.basis_x.label,
            self.plan.basis_x.sign
        )
        .unwrap();
        if let Some([qz, qx]) = self.plan.predicted_qber {
            writeln!(s, "predicted  qber z {}  x {}", pct(qz), pct(qx)).unwrap();
        }
        writeln!(
            s,
            "streams    {:.3} s  alice {} events  bob {} events",
            self.streams.duration_s, self.streams.alice_events, self.streams.bob_events
        )
        .unwrap();
        let w = &self.windows;
        writeln!(
            s,
            "windows    mode {}  target {}  feasible {}",
            w.mode,
            pct(w.target_qber),
            w.feasible
        )
        .unwrap();
        for e in &w.windows {
            writeln!(
                s,
                "           {}-{}  center {} ps  half-width {} ps",
                e.alice, e.bob, e.center_ps, e.half_width_ps
            )
            .unwrap();
        }
        writeln!(
            s,
            "forecast   qber {} (z {}, x {})  key rate {:.1} bit/s",
            pct(w.forecast.qber_overall),
            pct(w.forecast.qber_per_basis[0]),
            pct(w.forecast.qber_per_basis[1]),
            w.forecast.key_rate_bps
        )
        .unwrap();
        let k = &self.sift;
        writeln!(
            s,
            "sifted     {} bits (z {}, x {}), {} ambiguous dropped",
            k.bits, k.bits_per_basis[0], k.bits_per_basis[1], k.ambiguous_dropped
        )
        .unwrap();
        writeln!(
            s,
            "qber       {} (z {}, x {})",
            pct(k.qber_overall),
            pct(k.qber_per_basis[0]),
            pct(k.qber_per_basis[1])
        )
        .unwrap();
        writeln!(s, "key rate   {:.1} bit/s", k.key_rate_bps).unwrap();
        s
    }
}
