//! Group-IV color-center ground manifold: spin-orbit + Zeeman Hamiltonian,
//! its closed-form eigensystem, and spin-strain coupling.
//!
//! Matrices are written in the orbital-major basis
//! `{|e_x↑⟩, |e_x↓⟩, |e_y↑⟩, |e_y↓⟩}` (index = 2·orbital + spin). In this basis
//! the spin-orbit term is `λ σ_y ⊗ σ_z`, the Zeeman term is
//! `γ_s (B_z I ⊗ σ_z + B_x I ⊗ σ_x)`, and transverse strain enters as
//! `α σ_z ⊗ I + β σ_x ⊗ I`. Because `σ_y ⊗ I` commutes with everything
//! but strain, the spectrum splits into two orbital sectors, each a spin-½ in
//! an effective field `(γ_s B_x, γ_s B_z ± λ)`.
//!
//! All energies are ordinary frequencies (Hz); fields in tesla.

use std::f64::consts::FRAC_PI_2;

use nalgebra::{Matrix3, Matrix4, Vector2, Vector4};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::qops::{CMatrix, Operator};

const I: Complex64 = Complex64::new(0.0, 1.0);

fn re(x: f64) -> Complex64 {
    Complex64::new(x, 0.0)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SpinParams {
    /// Ground-state spin-orbit coupling λ_g (Hz).
    pub lambda_g: f64,
    /// Spin gyromagnetic ratio (Hz/T); Zeeman splitting is 2·γ_s·B.
    pub gamma_s: f64,
    /// Orbital gyromagnetic ratio (Hz/T).
    pub gamma_l: f64,
    /// Orbital quenching factor.
    #[serde(default)]
    pub q: f64,
    #[serde(default)]
    pub b_x: f64,
    #[serde(default)]
    pub b_z: f64,
}

impl SpinParams {
    pub fn validate(&self) -> Result<()> {
        let all = [self.lambda_g, self.gamma_s, self.gamma_l, self.q, self.b_x, self.b_z];
        if all.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("spin parameters must be finite"));
        }
        if self.lambda_g <= 0.0 {
            return Err(Error::invalid(format!("lambda_g must be > 0, got {}", self.lambda_g)));
        }
        if self.gamma_s <= 0.0 {
            return Err(Error::invalid(format!("gamma_s must be > 0, got {}", self.gamma_s)));
        }
        if !(0.0..=1.0).contains(&self.q) {
            return Err(Error::invalid(format!("q must lie in [0, 1], got {}", self.q)));
        }
        if self.effective_lambda() <= 0.0 {
            return Err(Error::invalid(format!(
                "effective spin-orbit coupling λ_g − qγ_L B_z = {} must be > 0",
                self.effective_lambda()
            )));
        }
        Ok(())
    }

    pub fn with_field(self, b_x: f64, b_z: f64) -> Self {
        Self { b_x, b_z, ..self }
    }

    /// λ = λ_g − q·γ_L·B_z.
    pub fn effective_lambda(&self) -> f64 {
        self.lambda_g - self.q * self.gamma_l * self.b_z
    }

    /// λ_− = λ − γ_s B_z.
    pub fn lambda_minus(&self) -> f64 {
        self.effective_lambda() - self.gamma_s * self.b_z
    }

    /// λ_+ = λ + γ_s B_z.
    pub fn lambda_plus(&self) -> f64 {
        self.effective_lambda() + self.gamma_s * self.b_z
    }

    pub fn field_magnitude(&self) -> f64 {
        self.b_x.hypot(self.b_z)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SpinEigenSystem {
    /// ν_1..ν_4 (Hz): ν_1,ν_2 = ∓√(γ_s²B_x² + λ_−²), ν_3,ν_4 = ∓√(γ_s²B_x² + λ_+²).
    pub eigenvalues: [f64; 4],
    /// ψ_1..ψ_4, normalized.
    pub eigenvectors: [Vector4<Complex64>; 4],
}

impl SpinEigenSystem {
    /// Matrix whose columns are ψ_1..ψ_4.
    pub fn m_matrix(&self) -> Matrix4<Complex64> {
        Matrix4::from_columns(&self.eigenvectors)
    }

    /// |ν_3 − ν_1|: the transition driven by transverse strain.
    pub fn splitting(&self) -> f64 {
        (self.eigenvalues[2] - self.eigenvalues[0]).abs()
    }
}

/// H_SO + H_Z in the orbital-major basis.
///
/// The (4,4) diagonal entry is −γ_s B_z. With +γ_s B_z there the matrix is
/// not traceless and its spectrum no longer takes the ±√(γ_s²B_x² + λ_∓²) form.
pub fn build_spin_hamiltonian(params: &SpinParams) -> Result<Operator> {
    params.validate()?;
    let z = re(params.gamma_s * params.b_z);
    let x = re(params.gamma_s * params.b_x);
    let l = params.effective_lambda();
    let zero = re(0.0);
    #[rustfmt::skip]
    let m = CMatrix::from_row_slice(4, 4, &[
        z,        x,        -I * l,   zero,
        x,        -z,       zero,     I * l,
        I * l,    zero,     z,        x,
        zero,     -I * l,   x,        -z,
    ]);
    Operator::local(m)
}

/// Lower (sign = −1) or upper (+1) eigenvector of `a σ_z + b σ_x`, real entries.
fn spin_half_eigenvector(a: f64, b: f64, sign: f64) -> Vector2<f64> {
    let r = a.hypot(b);
    // pick the branch whose normalization avoids cancellation
    let v = match (sign < 0.0, a >= 0.0) {
        (true, true) => Vector2::new(b, -(a + r)),
        (true, false) => Vector2::new(-(r - a), b),
        (false, true) => Vector2::new(a + r, b),
        (false, false) => Vector2::new(b, r - a),
    };
    v / v.norm()
}

/// Closed-form eigenpairs, labelled as ψ_1..ψ_4 by orbital sector.
pub fn analytic_eigensystem(params: &SpinParams) -> Result<SpinEigenSystem> {
    params.validate()?;
    let b = params.gamma_s * params.b_x;
    let (lm, lp) = (params.lambda_minus(), params.lambda_plus());
    let (r_minus, r_plus) = (b.hypot(lm), b.hypot(lp));
    if r_minus == 0.0 || r_plus == 0.0 {
        return Err(Error::DegenerateConfiguration(format!(
            "B_x = 0 with λ_− = {lm} or λ_+ = {lp} vanishing"
        )));
    }

    let s = std::f64::consts::FRAC_1_SQRT_2;
    // σ_y eigenvectors over (e_x, e_y)
    let orbital_minus = [re(s), -I * s];
    let orbital_plus = [re(s), I * s];

    let product = |orb: [Complex64; 2], spin: Vector2<f64>| {
        Vector4::new(
            orb[0] * spin[0],
            orb[0] * spin[1],
            orb[1] * spin[0],
            orb[1] * spin[1],
        )
    };

    // sector σ_y = −1 sees a = γ_s B_z − λ = −λ_−; sector +1 sees a = λ_+
    let psi1 = product(orbital_minus, spin_half_eigenvector(-lm, b, -1.0));
    let psi2 = product(orbital_minus, spin_half_eigenvector(-lm, b, 1.0));
    let psi3 = product(orbital_plus, spin_half_eigenvector(lp, b, -1.0));
    let psi4 = product(orbital_plus, spin_half_eigenvector(lp, b, 1.0));

    Ok(SpinEigenSystem {
        eigenvalues: [-r_minus, r_minus, -r_plus, r_plus],
        eigenvectors: [psi1, psi2, psi3, psi4],
    })
}

/// Eigenvalues of a Hermitian operator by dense diagonalization, ascending.
pub fn numeric_eigenvalues(op: &Operator) -> Vec<f64> {
    let mut ev: Vec<f64> = op.matrix().clone().symmetric_eigenvalues().iter().copied().collect();
    ev.sort_by(|a, b| a.total_cmp(b));
    ev
}

/// Transverse-strain Hamiltonian with α on the e_x block and −α on e_y.
pub fn strain_hamiltonian(alpha: f64, beta: f64) -> Operator {
    let (a, b, z) = (re(alpha), re(beta), re(0.0));
    #[rustfmt::skip]
    let m = CMatrix::from_row_slice(4, 4, &[
        a, z, b, z,
        z, a, z, b,
        b, z, -a, z,
        z, b, z, -a,
    ]);
    Operator::local(m).expect("4x4")
}

/// g_pe = |⟨ψ_3|H_strain|ψ_1⟩| (Hz).
///
/// This is the (3,1) element of M†·H_strain·M; with orthonormal eigenvector
/// columns M⁻¹ = M†.
pub fn spin_phonon_coupling(eigsys: &SpinEigenSystem, h_strain: &Operator) -> Result<f64> {
    if h_strain.dim() != 4 {
        return Err(Error::DimensionMismatch {
            expected: 4,
            actual: h_strain.dim(),
        });
    }
    let m = eigsys.m_matrix();
    let unitarity = (m.adjoint() * m - Matrix4::identity()).norm();
    if !unitarity.is_finite() || unitarity > 1e-8 {
        return Err(Error::DegenerateConfiguration(format!(
            "eigenvector matrix is not unitary (‖M†M − I‖ = {unitarity:e})"
        )));
    }
    let h = h_strain.matrix();
    let (psi1, psi3) = (&eigsys.eigenvectors[0], &eigsys.eigenvectors[2]);
    let mut element = Complex64::new(0.0, 0.0);
    for i in 0..4 {
        for j in 0..4 {
            element += psi3[i].conj() * h[(i, j)] * psi1[j];
        }
    }
    Ok(element.norm())
}

/// Strain susceptibilities of the D3d ground state (Hz per unit strain).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StrainCoupling {
    pub t_perp: f64,
    pub t_par: f64,
    pub d: f64,
    pub f: f64,
    /// Effective transverse susceptibility used for g_pe(r) maps.
    pub chi_eff: f64,
}

impl StrainCoupling {
    pub fn validate(&self) -> Result<()> {
        if [self.t_perp, self.t_par, self.d, self.f, self.chi_eff]
            .iter()
            .any(|v| !v.is_finite())
        {
            return Err(Error::invalid("strain susceptibilities must be finite"));
        }
        if self.chi_eff <= 0.0 {
            return Err(Error::invalid(format!("chi_eff must be > 0, got {}", self.chi_eff)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct StrainTerms {
    /// A_1g (longitudinal) term.
    pub alpha: f64,
    /// E_gx term.
    pub beta: f64,
    /// E_gy term.
    pub gamma: f64,
}

/// Decomposes an emitter-frame strain tensor into the A_1g, E_gx and E_gy energies.
pub fn strain_components(strain: &Matrix3<f64>, sus: &StrainCoupling) -> Result<StrainTerms> {
    let scale = strain.amax();
    let asym = (strain - strain.transpose()).amax();
    if asym > 1e-12 * scale {
        return Err(Error::invalid(format!(
            "strain tensor is not symmetric (max |ε_ij − ε_ji| = {asym:e})"
        )));
    }
    let e = |i: usize, j: usize| strain[(i, j)];
    Ok(StrainTerms {
        alpha: sus.t_perp * (e(0, 0) + e(1, 1)) + sus.t_par * e(2, 2),
        beta: sus.d * (e(0, 0) - e(1, 1)) + sus.f * e(2, 0),
        gamma: -2.0 * sus.d * e(0, 1) + sus.f * e(1, 2),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct FieldSolution {
    pub b_x: f64,
    pub b_z: f64,
    /// Polar angle from the emitter z axis (rad).
    pub theta: f64,
    /// Achieved |ν_3 − ν_1| (Hz).
    pub splitting: f64,
}

/// |ν_3 − ν_1| for the given field, without building eigenvectors.
fn splitting_at(params: &SpinParams) -> f64 {
    let b = params.gamma_s * params.b_x;
    (b.hypot(params.lambda_plus()) - b.hypot(params.lambda_minus())).abs()
}

/// Finds (B_x, B_z) with |B| = `b_max` giving |ν_3 − ν_1| = `target_splitting`.
///
/// Bisects the polar angle over [0, π/2]. The splitting falls monotonically
/// from its pure-B_z value as the field tilts, so the root is unique there and
/// is the largest-B_x solution with both components non-negative.
pub fn field_for_splitting(
    target_splitting: f64,
    b_max: f64,
    params_sans_b: &SpinParams,
) -> Result<FieldSolution> {
    if !(b_max.is_finite() && b_max >= 0.0) {
        return Err(Error::invalid(format!("B_max must be finite and ≥ 0, got {b_max}")));
    }
    if !(target_splitting.is_finite() && target_splitting > 0.0) {
        return Err(Error::invalid(format!(
            "target splitting must be > 0, got {target_splitting}"
        )));
    }
    let at = |theta: f64| params_sans_b.with_field(b_max * theta.sin(), b_max * theta.cos());
    at(0.0).validate()?;
    at(FRAC_PI_2).validate()?;

    let f = |theta: f64| splitting_at(&at(theta)) - target_splitting;
    let (s_z, s_x) = (f(0.0) + target_splitting, f(FRAC_PI_2) + target_splitting);
    let unachievable = || Error::UnachievableSplitting {
        target_hz: target_splitting,
        b_max_t: b_max,
        min_hz: s_z.min(s_x),
        max_hz: s_z.max(s_x),
    };
    let slack = 1e-12 * s_z.max(s_x);
    if target_splitting < s_z.min(s_x) - slack || target_splitting > s_z.max(s_x) + slack {
        return Err(unachievable());
    }
    if (s_z - target_splitting).abs() <= slack {
        let p = at(0.0);
        return Ok(FieldSolution { b_x: p.b_x, b_z: p.b_z, theta: 0.0, splitting: s_z });
    }

    let (mut lo, mut hi) = (0.0, FRAC_PI_2);
    let f_lo = f(lo);
    let mut theta = 0.5 * (lo + hi);
    for _ in 0..200 {
        theta = 0.5 * (lo + hi);
        let v = f(theta);
        if v == 0.0 || hi - lo < 1e-16 {
            break;
        }
        if (v > 0.0) == (f_lo > 0.0) {
            lo = theta;
        } else {
            hi = theta;
        }
    }
    let p = at(theta);
    let splitting = splitting_at(&p);
    if (splitting - target_splitting).abs() > 1e3 {
        return Err(unachievable());
    }
    Ok(FieldSolution {
        b_x: p.b_x,
        b_z: p.b_z,
        theta,
        splitting,
    })
}

/// One row of a field sweep at fixed splitting.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SpinFieldPoint {
    pub b_mag: f64,
    pub b_x: f64,
    pub b_z: f64,
    pub nu1: f64,
    pub nu3: f64,
    pub splitting: f64,
    pub g_pe: f64,
}

/// Field search at |B| = `b_mag`, then the ψ_1 ↔ ψ_3 coupling driven by
/// `strain_hamiltonian(alpha, beta)`.
pub fn spin_field_point(
    params: &SpinParams,
    alpha: f64,
    beta: f64,
    target_splitting: f64,
    b_mag: f64,
) -> Result<SpinFieldPoint> {
    let sol = field_for_splitting(target_splitting, b_mag, params)?;
    let es = analytic_eigensystem(&params.with_field(sol.b_x, sol.b_z))?;
    let g_pe = spin_phonon_coupling(&es, &strain_hamiltonian(alpha, beta))?;
    Ok(SpinFieldPoint {
        b_mag,
        b_x: sol.b_x,
        b_z: sol.b_z,
        nu1: es.eigenvalues[0],
        nu3: es.eigenvalues[2],
        splitting: es.splitting(),
        g_pe,
    })
}
