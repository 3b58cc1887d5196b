//! Device-level calculators: zero-point normalizations, overlap couplings,
//! transmon levels, mechanical Q budget and cooperativities.
//!
//! All rates and frequencies here are ordinary frequencies (Hz).

mod profile;

pub use profile::{FieldCell, FieldProfile, PiezoTensor, Voigt, PROFILE_COLUMNS, PROFILE_MAGIC};

use nalgebra::{Matrix3, Vector3};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Planck constant (J·s).
pub const PLANCK: f64 = 6.626_070_15e-34;

/// Grid positions of paired profiles must agree to this (m).
pub const GRID_TOL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SystemRates {
    pub f_sc: f64,
    pub f_p: f64,
    pub f_e: f64,
    pub kappa_sc: f64,
    pub kappa_p: f64,
    pub kappa_e: f64,
    pub g_scp: f64,
    pub g_pe: f64,
}

impl SystemRates {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [("f_sc", self.f_sc), ("f_p", self.f_p), ("f_e", self.f_e)] {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::invalid(format!("rates.{name} must be > 0, got {v}")));
            }
        }
        for (name, v) in [
            ("kappa_sc", self.kappa_sc),
            ("kappa_p", self.kappa_p),
            ("kappa_e", self.kappa_e),
            ("g_scp", self.g_scp),
            ("g_pe", self.g_pe),
        ] {
            if !(v.is_finite() && v >= 0.0) {
                return Err(Error::invalid(format!("rates.{name} must be >= 0, got {v}")));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CapacitanceSet {
    pub c_s: f64,
    pub c_j: f64,
    pub c_idt: f64,
    pub v_app: f64,
}

impl CapacitanceSet {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [("c_s", self.c_s), ("c_j", self.c_j), ("c_idt", self.c_idt)] {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::invalid(format!("capacitance {name} must be > 0, got {v}")));
            }
        }
        if !(self.v_app.is_finite() && self.v_app > 0.0) {
            return Err(Error::invalid(format!("v_app must be > 0, got {}", self.v_app)));
        }
        Ok(())
    }

    pub fn total(&self) -> f64 {
        self.c_s + self.c_j + self.c_idt
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TlsChannel {
    pub participation: f64,
    pub q_tls: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct QBudget {
    pub q_c: f64,
    #[serde(default)]
    pub tls: Vec<TlsChannel>,
    /// Absent means the Akhiezer term is dropped.
    #[serde(default)]
    pub q_a: Option<f64>,
}

impl QBudget {
    pub fn validate(&self) -> Result<()> {
        let positive = |name: &str, v: f64| {
            if v.is_finite() && v > 0.0 {
                Ok(())
            } else {
                Err(Error::invalid(format!("{name} must be > 0, got {v}")))
            }
        };
        positive("q_c", self.q_c)?;
        if let Some(q_a) = self.q_a {
            positive("q_a", q_a)?;
        }
        let mut sum = 0.0;
        for (i, ch) in self.tls.iter().enumerate() {
            positive(&format!("tls[{i}].q_tls"), ch.q_tls)?;
            if !(0.0..=1.0).contains(&ch.participation) {
                return Err(Error::invalid(format!(
                    "tls[{i}].participation must lie in [0, 1], got {}",
                    ch.participation
                )));
            }
            sum += ch.participation;
        }
        if sum > 1.0 + 1e-9 {
            return Err(Error::invalid(format!(
                "TLS participations sum to {sum} > 1"
            )));
        }
        Ok(())
    }
}

/// Harmonic sum of clamping, participation-weighted TLS and Akhiezer losses.
pub fn q_total(budget: &QBudget) -> Result<f64> {
    budget.validate()?;
    let inv = 1.0 / budget.q_c
        + budget
            .tls
            .iter()
            .map(|ch| ch.participation / ch.q_tls)
            .sum::<f64>()
        + budget.q_a.map_or(0.0, |q| 1.0 / q);
    Ok(1.0 / inv)
}

/// κ = f/Q. Infinite Q gives 0.
pub fn kappa_from_q(f: f64, q: f64) -> Result<f64> {
    if q.is_nan() || q <= 0.0 {
        return Err(Error::invalid(format!("Q must be > 0, got {q}")));
    }
    if !(f.is_finite() && f > 0.0) {
        return Err(Error::invalid(format!("frequency must be > 0, got {f}")));
    }
    Ok(f / q)
}

/// C = 4g²/(κ_a κ_b).
pub fn cooperativity(g: f64, kappa_a: f64, kappa_b: f64) -> Result<f64> {
    if !(g.is_finite() && g >= 0.0) {
        return Err(Error::invalid(format!("coupling must be >= 0, got {g}")));
    }
    if !(kappa_a > 0.0 && kappa_b > 0.0) {
        return Err(Error::invalid(format!(
            "cooperativity needs positive decay rates, got {kappa_a} and {kappa_b}"
        )));
    }
    Ok(4.0 * g * g / (kappa_a * kappa_b))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ModeElimination {
    pub induced_rate: f64,
    pub negligible: bool,
}

/// Loss a spectator mechanical mode at detuning Δ imparts: g(g²/(g²+Δ²))².
pub fn mode_elimination_check(g: f64, delta: f64, kappa_p0: f64) -> ModeElimination {
    let g2 = g * g;
    let ratio = if g2 == 0.0 { 0.0 } else { g2 / (g2 + delta * delta) };
    let induced_rate = g * ratio * ratio;
    ModeElimination {
        induced_rate,
        negligible: induced_rate < kappa_p0,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TransmonLevels {
    pub f01: f64,
    pub anharmonicity: f64,
    /// E_J/E_C ≥ 20.
    pub transmon_regime: bool,
}

/// f01 = √(8 E_J E_C) − E_C, anharmonicity −E_C.
pub fn transmon_frequency(e_j: f64, e_c: f64) -> Result<TransmonLevels> {
    if !(e_c.is_finite() && e_c > 0.0 && e_j.is_finite() && e_j > 0.0) {
        return Err(Error::invalid(format!(
            "E_J and E_C must be > 0, got {e_j} and {e_c}"
        )));
    }
    let ratio = e_j / e_c;
    if ratio <= 1.0 {
        return Err(Error::NonTransmonRegime { ratio });
    }
    let transmon_regime = ratio >= 20.0;
    if !transmon_regime {
        log::warn!("E_J/E_C = {ratio:.3} is below 20; two-level transmon picture is approximate");
    }
    Ok(TransmonLevels {
        f01: (8.0 * e_j * e_c).sqrt() - e_c,
        anharmonicity: -e_c,
        transmon_regime,
    })
}

/// √(h f / (C_total V²/2)), the zero-point scale of the IDT field.
pub fn photon_prefactor(caps: &CapacitanceSet, f_sc: f64) -> Result<f64> {
    caps.validate()?;
    if !(f_sc.is_finite() && f_sc > 0.0) {
        return Err(Error::invalid(format!("f_sc must be > 0, got {f_sc}")));
    }
    Ok(zero_point_energy_prefactor(PLANCK * f_sc, caps.total(), caps.v_app))
}

fn zero_point_energy_prefactor(energy: f64, c_total: f64, v_app: f64) -> f64 {
    (energy / (0.5 * c_total * v_app * v_app)).sqrt()
}

#[derive(Debug, Clone, PartialEq)]
pub struct Normalized {
    pub profile: FieldProfile,
    pub prefactor: f64,
}

/// Scales every E field to a single microwave photon. Strains are untouched.
pub fn normalize_photon_field(
    profile: &FieldProfile,
    caps: &CapacitanceSet,
    f_sc: f64,
) -> Result<Normalized> {
    profile.validate()?;
    let prefactor = photon_prefactor(caps, f_sc)?;
    if (profile.frequency - f_sc).abs() > 0.01 * f_sc {
        return Err(Error::invalid(format!(
            "profile exported at {} Hz, more than 1% from f_sc = {f_sc} Hz",
            profile.frequency
        )));
    }
    let mut out = profile.clone();
    for c in &mut out.cells {
        c.e_field *= Complex64::new(prefactor, 0.0);
    }
    Ok(Normalized {
        profile: out,
        prefactor,
    })
}

/// Scales strains to a single phonon; compliance weights scale by the square
/// so the output integrates to 2hf and renormalizing it is a no-op.
pub fn normalize_phonon_strain(profile: &FieldProfile, f_p: f64) -> Result<Normalized> {
    profile.validate()?;
    if !(f_p.is_finite() && f_p > 0.0) {
        return Err(Error::invalid(format!("f_p must be > 0, got {f_p}")));
    }
    let integral = profile.strain_energy_integral();
    if integral.is_nan() || integral <= 0.0 {
        return Err(Error::invalid(format!(
            "strain-energy integral must be > 0, got {integral}"
        )));
    }
    let prefactor = (PLANCK * f_p / (0.5 * integral)).sqrt();
    let mut out = profile.clone();
    for c in &mut out.cells {
        c.strain *= Complex64::new(prefactor, 0.0);
        c.compliance_weight *= prefactor * prefactor;
    }
    Ok(Normalized {
        profile: out,
        prefactor,
    })
}

/// Overlap integral (1/2ħ)∫(t*·dᵀ·e + e*·d·t) dV, returned in Hz.
pub fn electromechanical_coupling(
    e_profile: &FieldProfile,
    t_profile: &FieldProfile,
    piezo: &PiezoTensor,
) -> Result<f64> {
    if e_profile.cells.len() != t_profile.cells.len() {
        return Err(Error::GridMismatch {
            cell: e_profile.cells.len().min(t_profile.cells.len()),
            reason: format!(
                "cell counts differ ({} vs {})",
                e_profile.cells.len(),
                t_profile.cells.len()
            ),
        });
    }
    let d = piezo.d.map(|v| Complex64::new(v, 0.0));
    let mut sum = Complex64::new(0.0, 0.0);
    let mut magnitude = 0.0;
    for (i, (ce, ct)) in e_profile.cells.iter().zip(&t_profile.cells).enumerate() {
        let offset = (ce.position - ct.position).amax();
        if offset > GRID_TOL {
            return Err(Error::GridMismatch {
                cell: i,
                reason: format!("positions differ by {offset:e} m"),
            });
        }
        let dt: Vector3<Complex64> = d * ct.strain;
        let dte: nalgebra::SVector<Complex64, 6> = d.transpose() * ce.e_field;
        let forward = ce.e_field.dotc(&dt);
        let backward = ct.strain.dotc(&dte);
        let term = (forward + backward) * ce.volume;
        magnitude += term.norm();
        sum += term;
    }
    if sum.im.abs() > 1e-9 * magnitude.max(sum.norm()) {
        return Err(Error::NumericalIntegrity(format!(
            "overlap integral has imaginary residual {:e} against magnitude {:e}",
            sum.im, magnitude
        )));
    }
    Ok(sum.re / (2.0 * PLANCK))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SpinCouplingPoint {
    pub position: [f64; 3],
    /// |χ_eff (ε′_xx − ε′_yy)| (Hz).
    pub g_pe: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SpinCouplingMap {
    pub points: Vec<SpinCouplingPoint>,
    pub argmax: usize,
}

impl SpinCouplingMap {
    pub fn max(&self) -> &SpinCouplingPoint {
        &self.points[self.argmax]
    }
}

/// Per-cell spin-phonon coupling with strain rotated into the emitter frame.
pub fn spin_coupling_map(
    t_profile: &FieldProfile,
    chi_eff: f64,
    rotation: &Matrix3<f64>,
) -> Result<SpinCouplingMap> {
    t_profile.validate()?;
    let defect = (rotation.transpose() * rotation - Matrix3::identity()).amax();
    if defect > 1e-10 || !defect.is_finite() {
        return Err(Error::invalid(format!(
            "emitter rotation is not orthogonal (defect {defect:e})"
        )));
    }
    let r = rotation.map(|v| Complex64::new(v, 0.0));
    let points: Vec<SpinCouplingPoint> = t_profile
        .cells
        .iter()
        .map(|c| {
            let rotated = r * c.strain_tensor() * r.transpose();
            let g = (rotated[(0, 0)] - rotated[(1, 1)]) * chi_eff;
            SpinCouplingPoint {
                position: [c.position.x, c.position.y, c.position.z],
                g_pe: g.norm(),
            }
        })
        .collect();
    let argmax = points
        .iter()
        .enumerate()
        .max_by(|a, b| a.1.g_pe.total_cmp(&b.1.g_pe))
        .map(|(i, _)| i)
        .unwrap_or(0);
    Ok(SpinCouplingMap { points, argmax })
}

/// Commonly quoted cooperativity estimates for this device class.
pub const QUOTED_C_SCP: f64 = 4e4;
pub const QUOTED_C_PE: f64 = 1e5;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CooperativityReport {
    pub c_scp: f64,
    pub c_pe: f64,
    pub quoted_c_scp: f64,
    pub quoted_c_pe: f64,
    pub note: String,
}

/// Evaluates 4g²/(κκ) for both links and sets it against the quoted estimates.
pub fn cooperativity_report(rates: &SystemRates) -> Result<CooperativityReport> {
    rates.validate()?;
    let c_scp = cooperativity(rates.g_scp, rates.kappa_sc, rates.kappa_p)?;
    let c_pe = cooperativity(rates.g_pe, rates.kappa_p, rates.kappa_e)?;
    let note = format!(
        "C = 4g^2/(kappa_a kappa_b) evaluated directly gives C_scp = {c_scp:.3e} and C_pe = {c_pe:.3e}; \
         the quoted estimates ~{QUOTED_C_SCP:.0e} and ~{QUOTED_C_PE:.0e} do not follow from the same formula \
         and rates. The formula values are reported; the discrepancy is not reconciled."
    );
    Ok(CooperativityReport {
        c_scp,
        c_pe,
        quoted_c_scp: QUOTED_C_SCP,
        quoted_c_pe: QUOTED_C_PE,
        note,
    })
}
