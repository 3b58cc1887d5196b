//! Dense operator algebra on the SC ⊗ phonon ⊗ spin Hilbert space.
//!
//! Composite indices are row-major over the layout: for dims `[d0, d1, d2]`
//! the basis state `|n0, n1, n2⟩` sits at `n0·d1·d2 + n1·d2 + n2`. Two-level
//! subsystems use `|0⟩` = ground and `|1⟩` = excited.

use std::ops::{Add, Mul, Sub};

use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type CMatrix = DMatrix<Complex64>;

/// Position of the superconducting qubit in the tripartite layout.
pub const SC: usize = 0;
/// Position of the phonon mode in the tripartite layout.
pub const PHONON: usize = 1;
/// Position of the spin qubit in the tripartite layout.
pub const SPIN: usize = 2;

/// Tolerance on relative Frobenius norms for matrix comparisons.
pub const MATRIX_TOL: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct SpaceLayout {
    dims: Vec<usize>,
}

impl SpaceLayout {
    pub fn new(dims: Vec<usize>) -> Result<Self> {
        if dims.is_empty() {
            return Err(Error::InvalidDimension("layout needs at least one subsystem".into()));
        }
        if let Some(&d) = dims.iter().find(|&&d| d < 2) {
            return Err(Error::InvalidDimension(format!(
                "subsystem dimension {d} < 2"
            )));
        }
        Ok(Self { dims })
    }

    /// SC qubit ⊗ phonon truncated at `n_ph` levels ⊗ spin qubit.
    pub fn tripartite(n_ph: usize) -> Result<Self> {
        Self::new(vec![2, n_ph, 2])
    }

    pub fn single(n: usize) -> Result<Self> {
        Self::new(vec![n])
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn total_dim(&self) -> usize {
        self.dims.iter().product()
    }

    pub fn index_of(&self, labels: &[usize]) -> Result<usize> {
        if labels.len() != self.dims.len() {
            return Err(Error::DimensionMismatch {
                expected: self.dims.len(),
                actual: labels.len(),
            });
        }
        let mut index = 0;
        for (position, (&label, &dim)) in labels.iter().zip(&self.dims).enumerate() {
            if label >= dim {
                return Err(Error::LabelOutOfRange {
                    position,
                    label,
                    dim,
                });
            }
            index = index * dim + label;
        }
        Ok(index)
    }

    pub fn labels_of(&self, mut index: usize) -> Vec<usize> {
        let mut labels = vec![0; self.dims.len()];
        for (slot, &dim) in labels.iter_mut().zip(&self.dims).rev() {
            *slot = index % dim;
            index /= dim;
        }
        labels
    }
}

/// ‖a − b‖_F / max(‖a‖_F, ‖b‖_F); zero when both vanish.
pub fn relative_frobenius(a: &CMatrix, b: &CMatrix) -> f64 {
    let scale = a.norm().max(b.norm());
    if scale == 0.0 {
        0.0
    } else {
        (a - b).norm() / scale
    }
}

fn hermiticity_defect(m: &CMatrix) -> f64 {
    relative_frobenius(m, &m.adjoint())
}

#[derive(Debug, Clone, PartialEq)]
pub struct Operator {
    matrix: CMatrix,
    layout: SpaceLayout,
}

impl Operator {
    pub fn new(matrix: CMatrix, layout: SpaceLayout) -> Result<Self> {
        let n = layout.total_dim();
        if !matrix.is_square() {
            return Err(Error::InvalidDimension(format!(
                "operator matrix is {}x{}",
                matrix.nrows(),
                matrix.ncols()
            )));
        }
        if matrix.nrows() != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                actual: matrix.nrows(),
            });
        }
        Ok(Self { matrix, layout })
    }

    /// Local operator on a single `n`-level subsystem.
    pub fn local(matrix: CMatrix) -> Result<Self> {
        let layout = SpaceLayout::single(matrix.nrows())?;
        Self::new(matrix, layout)
    }

    pub fn identity(layout: &SpaceLayout) -> Self {
        let n = layout.total_dim();
        Self {
            matrix: CMatrix::identity(n, n),
            layout: layout.clone(),
        }
    }

    pub fn zeros(layout: &SpaceLayout) -> Self {
        let n = layout.total_dim();
        Self {
            matrix: CMatrix::zeros(n, n),
            layout: layout.clone(),
        }
    }

    pub fn matrix(&self) -> &CMatrix {
        &self.matrix
    }

    pub fn into_matrix(self) -> CMatrix {
        self.matrix
    }

    pub fn layout(&self) -> &SpaceLayout {
        &self.layout
    }

    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn adjoint(&self) -> Self {
        Self {
            matrix: self.matrix.adjoint(),
            layout: self.layout.clone(),
        }
    }

    pub fn hermiticity_defect(&self) -> f64 {
        hermiticity_defect(&self.matrix)
    }

    pub fn is_hermitian(&self, tol: f64) -> bool {
        self.hermiticity_defect() <= tol
    }

    pub fn trace(&self) -> Complex64 {
        self.matrix.trace()
    }

    pub fn scale(&self, factor: f64) -> Self {
        Self {
            matrix: &self.matrix * Complex64::new(factor, 0.0),
            layout: self.layout.clone(),
        }
    }

    /// Largest singular value.
    pub fn spectral_norm(&self) -> f64 {
        self.matrix
            .clone()
            .singular_values()
            .iter()
            .cloned()
            .fold(0.0, f64::max)
    }

    fn assert_same_layout(&self, other: &Self) {
        assert_eq!(
            self.layout, other.layout,
            "operator layouts differ: {:?} vs {:?}",
            self.layout, other.layout
        );
    }
}

impl Add for &Operator {
    type Output = Operator;
    fn add(self, rhs: &Operator) -> Operator {
        self.assert_same_layout(rhs);
        Operator {
            matrix: &self.matrix + &rhs.matrix,
            layout: self.layout.clone(),
        }
    }
}

impl Sub for &Operator {
    type Output = Operator;
    fn sub(self, rhs: &Operator) -> Operator {
        self.assert_same_layout(rhs);
        Operator {
            matrix: &self.matrix - &rhs.matrix,
            layout: self.layout.clone(),
        }
    }
}

impl Mul for &Operator {
    type Output = Operator;
    fn mul(self, rhs: &Operator) -> Operator {
        self.assert_same_layout(rhs);
        Operator {
            matrix: &self.matrix * &rhs.matrix,
            layout: self.layout.clone(),
        }
    }
}

/// Truncated ladder operator: ⟨m|a|n⟩ = √n δ_{m,n−1}.
pub fn annihilator(n_levels: usize) -> Result<Operator> {
    if n_levels < 2 {
        return Err(Error::InvalidDimension(format!(
            "annihilator needs at least 2 levels, got {n_levels}"
        )));
    }
    let mut m = CMatrix::zeros(n_levels, n_levels);
    for n in 1..n_levels {
        m[(n - 1, n)] = Complex64::new((n as f64).sqrt(), 0.0);
    }
    Operator::local(m)
}

/// diag(−1, +1): +1 on the excited state.
pub fn sigma_z() -> Operator {
    let m = CMatrix::from_diagonal(&nalgebra::DVector::from_vec(vec![
        Complex64::new(-1.0, 0.0),
        Complex64::new(1.0, 0.0),
    ]));
    Operator::local(m).expect("2x2")
}

pub fn local_identity(n: usize) -> Result<Operator> {
    Ok(Operator::identity(&SpaceLayout::single(n)?))
}

/// I ⊗ … ⊗ `local_op` ⊗ … ⊗ I in layout order.
pub fn embed(local_op: &Operator, subsystem_index: usize, layout: &SpaceLayout) -> Result<Operator> {
    let dims = layout.dims();
    if subsystem_index >= dims.len() {
        return Err(Error::IndexOutOfRange {
            index: subsystem_index,
            len: dims.len(),
        });
    }
    if local_op.dim() != dims[subsystem_index] {
        return Err(Error::DimensionMismatch {
            expected: dims[subsystem_index],
            actual: local_op.dim(),
        });
    }
    let left: usize = dims[..subsystem_index].iter().product();
    let right: usize = dims[subsystem_index + 1..].iter().product();
    let m = CMatrix::identity(left, left)
        .kronecker(local_op.matrix())
        .kronecker(&CMatrix::identity(right, right));
    Operator::new(m, layout.clone())
}

#[derive(Debug, Clone, PartialEq)]
pub struct DensityMatrix {
    matrix: CMatrix,
    layout: SpaceLayout,
}

impl DensityMatrix {
    /// Validates shape, Hermiticity (1e-10) and unit trace (1e-8).
    pub fn new(matrix: CMatrix, layout: SpaceLayout) -> Result<Self> {
        let op = Operator::new(matrix, layout)?;
        let defect = op.hermiticity_defect();
        if defect > MATRIX_TOL {
            return Err(Error::NumericalIntegrity(format!(
                "density matrix not Hermitian (relative defect {defect:e})"
            )));
        }
        let tr = op.trace();
        if (tr.re - 1.0).abs() > 1e-8 || tr.im.abs() > 1e-8 {
            return Err(Error::NumericalIntegrity(format!(
                "density matrix trace {tr} differs from 1"
            )));
        }
        Ok(Self {
            matrix: op.matrix,
            layout: op.layout,
        })
    }

    /// Wraps a matrix produced by the integrators; callers own the invariants.
    pub(crate) fn from_raw(matrix: CMatrix, layout: SpaceLayout) -> Self {
        debug_assert_eq!(matrix.nrows(), layout.total_dim());
        Self { matrix, layout }
    }

    pub fn maximally_mixed(layout: &SpaceLayout) -> Self {
        let n = layout.total_dim();
        Self {
            matrix: CMatrix::identity(n, n) * Complex64::new(1.0 / n as f64, 0.0),
            layout: layout.clone(),
        }
    }

    pub fn matrix(&self) -> &CMatrix {
        &self.matrix
    }

    pub fn layout(&self) -> &SpaceLayout {
        &self.layout
    }

    pub fn trace(&self) -> Complex64 {
        self.matrix.trace()
    }

    pub fn trace_error(&self) -> f64 {
        (self.trace() - Complex64::new(1.0, 0.0)).norm()
    }

    pub fn hermiticity_defect(&self) -> f64 {
        hermiticity_defect(&self.matrix)
    }

    /// Re tr(ρ·op).
    pub fn expectation(&self, op: &Operator) -> f64 {
        assert_eq!(op.layout(), &self.layout, "expectation: layout mismatch");
        // tr(ρ A) = Σ_ij ρ_ij A_ji
        let mut acc = Complex64::new(0.0, 0.0);
        for i in 0..self.matrix.nrows() {
            for j in 0..self.matrix.ncols() {
                acc += self.matrix[(i, j)] * op.matrix()[(j, i)];
            }
        }
        acc.re
    }

    /// Most negative (or smallest) eigenvalue of the Hermitian part.
    pub fn min_eigenvalue(&self) -> f64 {
        let herm = (&self.matrix + self.matrix.adjoint()) * Complex64::new(0.5, 0.0);
        herm.symmetric_eigenvalues()
            .iter()
            .cloned()
            .fold(f64::INFINITY, f64::min)
    }

    /// ρ ← (ρ + ρ†)/2.
    pub fn symmetrize(&mut self) {
        let adj = self.matrix.adjoint();
        self.matrix = (&self.matrix + adj) * Complex64::new(0.5, 0.0);
    }
}

/// Rank-1 projector onto a product basis state.
pub fn basis_ket(labels: &[usize], layout: &SpaceLayout) -> Result<DensityMatrix> {
    let idx = layout.index_of(labels)?;
    let n = layout.total_dim();
    let mut m = CMatrix::zeros(n, n);
    m[(idx, idx)] = Complex64::new(1.0, 0.0);
    Ok(DensityMatrix {
        matrix: m,
        layout: layout.clone(),
    })
}

/// ⟨x|ρ|x⟩ for the product basis state `x`.
pub fn fidelity_pure(rho: &DensityMatrix, target_labels: &[usize]) -> Result<f64> {
    let defect = rho.hermiticity_defect();
    if defect > MATRIX_TOL {
        return Err(Error::NumericalIntegrity(format!(
            "ρ not Hermitian (relative defect {defect:e})"
        )));
    }
    let idx = rho.layout.index_of(target_labels)?;
    let element = rho.matrix[(idx, idx)];
    if element.im.abs() > 1e-10 {
        return Err(Error::NumericalIntegrity(format!(
            "diagonal element has imaginary part {:e}",
            element.im
        )));
    }
    Ok(element.re)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn c(re: f64) -> Complex64 {
        Complex64::new(re, 0.0)
    }

    #[test]
    fn annihilator_entries() {
        let a2 = annihilator(2).unwrap();
        assert_eq!(a2.matrix()[(0, 1)], c(1.0));
        assert_eq!(a2.matrix()[(1, 0)], c(0.0));
        assert_eq!(a2.matrix()[(0, 0)], c(0.0));
        assert_eq!(a2.matrix()[(1, 1)], c(0.0));

        let a3 = annihilator(3).unwrap();
        assert_relative_eq!(a3.matrix()[(1, 2)].re, 2f64.sqrt());

        let n = &a3.adjoint() * &a3;
        assert_relative_eq!(n.matrix()[(2, 2)].re, 2.0, epsilon = 1e-15);
        assert!(matches!(annihilator(1), Err(Error::InvalidDimension(_))));
    }

    #[test]
    fn embed_identity_and_errors() {
        let layout = SpaceLayout::new(vec![2, 3, 2]).unwrap();
        let e = embed(&local_identity(2).unwrap(), 0, &layout).unwrap();
        assert_eq!(e.matrix(), &CMatrix::identity(12, 12));
        assert!(matches!(
            embed(&local_identity(2).unwrap(), 3, &layout),
            Err(Error::IndexOutOfRange { .. })
        ));
        assert!(matches!(
            embed(&local_identity(2).unwrap(), 1, &layout),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn embedded_sigma_z_acts_on_spin_only() {
        let layout = SpaceLayout::new(vec![2, 2, 2]).unwrap();
        let z = embed(&sigma_z(), SPIN, &layout).unwrap();
        let rho = basis_ket(&[0, 0, 0], &layout).unwrap();
        assert_relative_eq!(rho.expectation(&z), -1.0);
        let rho = basis_ket(&[1, 1, 1], &layout).unwrap();
        assert_relative_eq!(rho.expectation(&z), 1.0);
    }

    #[test]
    fn trace_of_product_of_embeddings_factorizes() {
        // tr(A⊗B⊗I) = tr(A)·tr(B)·d_rest, checked entrywise against a direct product.
        let layout = SpaceLayout::new(vec![2, 3, 2]).unwrap();
        let a = Operator::local(CMatrix::from_row_slice(
            2,
            2,
            &[c(1.0), Complex64::new(0.5, 0.2), c(-0.3), c(2.0)],
        ))
        .unwrap();
        let b = Operator::local(CMatrix::from_fn(3, 3, |i, j| {
            Complex64::new((i + 2 * j) as f64, (i as f64) - (j as f64))
        }))
        .unwrap();
        let prod = &embed(&a, 0, &layout).unwrap() * &embed(&b, 1, &layout).unwrap();
        let expected = a.trace() * b.trace() * c(2.0);
        assert_relative_eq!(prod.trace().re, expected.re, epsilon = 1e-12);
        assert_relative_eq!(prod.trace().im, expected.im, epsilon = 1e-12);
    }

    #[test]
    fn basis_ket_index_and_trace() {
        let layout = SpaceLayout::new(vec![2, 3, 2]).unwrap();
        let rho = basis_ket(&[1, 0, 0], &layout).unwrap();
        assert_eq!(rho.matrix()[(6, 6)], c(1.0));
        assert_relative_eq!(rho.matrix().norm(), 1.0);
        assert_eq!(basis_ket(&[0, 0, 0], &layout).unwrap().matrix()[(0, 0)], c(1.0));
        assert!(matches!(
            basis_ket(&[0, 3, 0], &layout),
            Err(Error::LabelOutOfRange { position: 1, .. })
        ));
        assert_eq!(layout.labels_of(6), vec![1, 0, 0]);
        assert_eq!(layout.labels_of(11), vec![1, 2, 1]);
    }

    #[test]
    fn fidelity_examples() {
        let layout = SpaceLayout::new(vec![2, 2, 2]).unwrap();
        let rho = basis_ket(&[1, 0, 0], &layout).unwrap();
        assert_eq!(fidelity_pure(&rho, &[1, 0, 0]).unwrap(), 1.0);
        assert_eq!(fidelity_pure(&rho, &[0, 0, 1]).unwrap(), 0.0);
        let mixed = DensityMatrix::maximally_mixed(&layout);
        assert_relative_eq!(fidelity_pure(&mixed, &[0, 1, 1]).unwrap(), 0.125);
    }

    #[test]
    fn fidelity_rejects_non_hermitian() {
        let layout = SpaceLayout::new(vec![2, 2, 2]).unwrap();
        let mut m = CMatrix::identity(8, 8) * c(0.125);
        m[(0, 1)] = c(0.1);
        let rho = DensityMatrix::from_raw(m, layout);
        assert!(matches!(
            fidelity_pure(&rho, &[0, 0, 0]),
            Err(Error::NumericalIntegrity(_))
        ));
    }

    #[test]
    fn density_matrix_validation() {
        let layout = SpaceLayout::new(vec![2, 2]).unwrap();
        assert!(DensityMatrix::new(CMatrix::identity(4, 4), layout.clone()).is_err());
        let ok = DensityMatrix::new(CMatrix::identity(4, 4) * c(0.25), layout).unwrap();
        assert_relative_eq!(ok.min_eigenvalue(), 0.25, epsilon = 1e-14);
    }

    #[test]
    fn canonical_commutator_below_truncation_edge() {
        let n_ph = 5;
        let layout = SpaceLayout::tripartite(n_ph).unwrap();
        let a = embed(&annihilator(n_ph).unwrap(), PHONON, &layout).unwrap();
        let comm = &(&a * &a.adjoint()) - &(&a.adjoint() * &a);
        for idx in 0..layout.total_dim() {
            let labels = layout.labels_of(idx);
            let diag = comm.matrix()[(idx, idx)].re;
            if labels[PHONON] < n_ph - 1 {
                assert_relative_eq!(diag, 1.0, epsilon = 1e-12);
            }
        }
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        fn hermitian(n: usize) -> impl Strategy<Value = CMatrix> {
            proptest::collection::vec(-1.0f64..1.0, 2 * n * n).prop_map(move |v| {
                let m = CMatrix::from_fn(n, n, |i, j| {
                    Complex64::new(v[2 * (i * n + j)], v[2 * (i * n + j) + 1])
                });
                (&m + m.adjoint()) * Complex64::new(0.5, 0.0)
            })
        }

        proptest! {
            #[test]
            fn embed_preserves_hermiticity_and_norm(h in hermitian(3), idx in 0usize..3) {
                let dims = match idx { 0 => vec![3, 2, 2], 1 => vec![2, 3, 2], _ => vec![2, 2, 3] };
                let layout = SpaceLayout::new(dims).unwrap();
                let local = Operator::local(h).unwrap();
                let big = embed(&local, idx, &layout).unwrap();
                prop_assert!(big.is_hermitian(1e-12));
                let (a, b) = (local.spectral_norm(), big.spectral_norm());
                prop_assert!((a - b).abs() <= 1e-10 * a.max(1e-300));
            }
        }
    }
}
