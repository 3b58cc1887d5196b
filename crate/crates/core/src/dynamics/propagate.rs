use std::sync::OnceLock;

use nalgebra::{DVector, Dyn};
use num_complex::Complex64;
use ode_solvers::dop_shared::IntegrationError;
use ode_solvers::{Dopri5, OutputType, System};

use super::{build_rotating_hamiltonian, c, jump_operators, LindbladModel, Method, SimOptions};
use crate::error::{Error, Result};
use crate::qops::{CMatrix, DensityMatrix, Operator, SpaceLayout};

type CVector = DVector<Complex64>;

/// Taylor substeps keep ‖L‖₁·h at or below this.
const TAYLOR_STEP_NORM: f64 = 0.5;
const TAYLOR_MAX_TERMS: usize = 40;

/// Adaptive steps run in nanoseconds.
const NS: f64 = 1e-9;

/// Column-major superoperator of −i[H,·] + Σ D[c].
pub fn liouvillian(h: &Operator, jumps: &[Operator]) -> CMatrix {
    let n = h.dim();
    let id = CMatrix::identity(n, n);
    let mi = Complex64::new(0.0, -1.0);
    let hm = h.matrix();
    let mut l = (id.kronecker(hm) - hm.transpose().kronecker(&id)) * mi;
    for jump in jumps {
        let cm = jump.matrix();
        let cdc = cm.adjoint() * cm;
        l += cm.conjugate().kronecker(cm);
        l -= (id.kronecker(&cdc) + cdc.transpose().kronecker(&id)) * c(0.5);
    }
    l
}

struct Generator {
    t_start: f64,
    t_end: f64,
    l: CMatrix,
    norm1: f64,
    sample_step: OnceLock<CMatrix>,
}

/// Piecewise-constant Liouvillians of a model, ready to advance states
/// between arbitrary times.
pub struct Propagator {
    layout: SpaceLayout,
    method: Method,
    rel_tol: f64,
    sample_dt: f64,
    generators: Vec<Generator>,
}

impl Propagator {
    pub fn new(model: &LindbladModel, options: &SimOptions) -> Result<Self> {
        options.validate()?;
        let jumps = jump_operators(&model.rates, &model.layout, options.spin_loss)?;
        let generators = model
            .schedule
            .segments()
            .iter()
            .map(|seg| {
                let h = build_rotating_hamiltonian(&model.rates, seg.detunings(), &model.layout)?;
                let l = liouvillian(&h, &jumps);
                let norm1 = (0..l.ncols())
                    .map(|j| l.column(j).iter().map(|v| v.norm()).sum::<f64>())
                    .fold(0.0, f64::max);
                Ok(Generator {
                    t_start: seg.t_start,
                    t_end: seg.t_end,
                    l,
                    norm1,
                    sample_step: OnceLock::new(),
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            layout: model.layout.clone(),
            method: options.method,
            rel_tol: options.rel_tol,
            sample_dt: options.sample_dt,
            generators,
        })
    }

    pub fn horizon(&self) -> f64 {
        self.generators.last().map_or(0.0, |g| g.t_end)
    }

    /// ρ(t1) from ρ(t0), symmetrized.
    pub fn step(&self, rho: &DensityMatrix, t0: f64, t1: f64) -> Result<DensityMatrix> {
        let n = self.layout.total_dim();
        let mut v = CVector::from_column_slice(rho.matrix().as_slice());
        self.advance(&mut v, t0, t1)?;
        let mut out = DensityMatrix::from_raw(CMatrix::from_column_slice(n, n, v.as_slice()), self.layout.clone());
        out.symmetrize();
        Ok(out)
    }

    fn advance(&self, v: &mut CVector, t0: f64, t1: f64) -> Result<()> {
        if !(t0 <= t1 && t0 >= 0.0 && t1 <= self.horizon() * (1.0 + 1e-12)) {
            return Err(Error::invalid(format!(
                "cannot propagate from {t0} to {t1} within horizon {}",
                self.horizon()
            )));
        }
        let mut t = t0;
        while t < t1 {
            let gen = self
                .generators
                .iter()
                .rev()
                .find(|g| g.t_start <= t)
                .unwrap_or(&self.generators[0]);
            let last = std::ptr::eq(gen, self.generators.last().expect("nonempty"));
            let t_next = if last { t1 } else { t1.min(gen.t_end) };
            self.apply(gen, v, t, t_next - t)?;
            t = t_next;
        }
        Ok(())
    }

    fn apply(&self, gen: &Generator, v: &mut CVector, t: f64, tau: f64) -> Result<()> {
        match self.method {
            Method::PiecewiseExponential => {
                if (tau - self.sample_dt).abs() <= 1e-9 * self.sample_dt {
                    let p = self.sample_step(gen, t)?;
                    *v = p * &*v;
                } else {
                    taylor_expmv(&gen.l, gen.norm1, v, tau);
                }
                if v.iter().any(|x| !(x.re.is_finite() && x.im.is_finite())) {
                    return Err(Error::IntegrationFailure {
                        t_s: t + tau,
                        reason: "propagated state overflowed".into(),
                    });
                }
                Ok(())
            }
            Method::Adaptive => adaptive(&gen.l, v, t, tau, self.rel_tol),
        }
    }

    fn sample_step<'a>(&self, gen: &'a Generator, t: f64) -> Result<&'a CMatrix> {
        if let Some(p) = gen.sample_step.get() {
            return Ok(p);
        }
        let p = (&gen.l * c(self.sample_dt)).exp();
        if p.iter().any(|x| !(x.re.is_finite() && x.im.is_finite())) {
            return Err(Error::IntegrationFailure {
                t_s: t,
                reason: "superoperator exponential overflowed".into(),
            });
        }
        Ok(gen.sample_step.get_or_init(|| p))
    }
}

/// v ← exp(Lτ)v by truncated Taylor series over scaled substeps.
fn taylor_expmv(l: &CMatrix, norm1: f64, v: &mut CVector, tau: f64) {
    if tau == 0.0 {
        return;
    }
    let substeps = ((norm1 * tau / TAYLOR_STEP_NORM).ceil() as usize).max(1);
    let h = tau / substeps as f64;
    let mut term = v.clone();
    for _ in 0..substeps {
        term.copy_from(v);
        for k in 1..=TAYLOR_MAX_TERMS {
            term = l * &term * c(h / k as f64);
            *v += &term;
            if term.norm() <= 1e-17 * v.norm() {
                break;
            }
        }
    }
}

struct Rhs<'a> {
    l: &'a CMatrix,
}

impl System<f64, DVector<f64>> for Rhs<'_> {
    fn system(&self, _x: f64, y: &DVector<f64>, dy: &mut DVector<f64>) {
        let n = y.len() / 2;
        let v = CVector::from_fn(n, |i, _| Complex64::new(y[i], y[n + i]));
        let d = self.l * v;
        for i in 0..n {
            dy[i] = d[i].re * NS;
            dy[n + i] = d[i].im * NS;
        }
    }
}

fn adaptive(l: &CMatrix, v: &mut CVector, t: f64, tau: f64, rel_tol: f64) -> Result<()> {
    if tau == 0.0 {
        return Ok(());
    }
    let n = v.len();
    let y0 = DVector::<f64>::from_fn_generic(Dyn(2 * n), nalgebra::Const::<1>, |i, _| {
        if i < n {
            v[i].re
        } else {
            v[i - n].im
        }
    });
    let span = tau / NS;
    let mut solver = Dopri5::new(Rhs { l }, 0.0, span, span, y0, rel_tol, rel_tol * 1e-3);
    solver.set_output(OutputType::Sparse);
    solver.integrate().map_err(|e| {
        let (x, reason) = match e {
            IntegrationError::MaxNumStepReached { x, n_step } => {
                (x, format!("step budget of {n_step} exhausted"))
            }
            IntegrationError::StepSizeUnderflow { x } => (x, "step size underflow".into()),
            IntegrationError::StiffnessDetected { x } => (x, "problem became stiff".into()),
        };
        Error::IntegrationFailure {
            t_s: t + x * NS,
            reason,
        }
    })?;
    let y = solver
        .y_out()
        .last()
        .ok_or_else(|| Error::IntegrationFailure {
            t_s: t,
            reason: "integrator produced no output".into(),
        })?;
    for i in 0..n {
        v[i] = Complex64::new(y[i], y[n + i]);
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::{Detunings, DetuningSchedule};
    use crate::device::SystemRates;
    use crate::qops::relative_frobenius;
    use proptest::prelude::*;

    fn rates(g1: f64, g2: f64, k: [f64; 3]) -> SystemRates {
        SystemRates {
            f_sc: 4.31e9, f_p: 4.31e9, f_e: 4.31e9,
            kappa_sc: k[0], kappa_p: k[1], kappa_e: k[2],
            g_scp: g1, g_pe: g2,
        }
    }

    fn random_state(layout: &SpaceLayout, seed: &[f64]) -> DensityMatrix {
        let n = layout.total_dim();
        let a = CMatrix::from_fn(n, n, |i, j| {
            let k = (i * n + j) % seed.len();
            Complex64::new(seed[k] * (1.0 + i as f64), seed[(k + 1) % seed.len()] - j as f64 * 0.1)
        });
        let m = &a * a.adjoint();
        let tr = m.trace();
        DensityMatrix::new(m / tr, layout.clone()).unwrap()
    }

    fn model(r: SystemRates, d: Detunings, horizon: f64, n_ph: usize) -> LindbladModel {
        LindbladModel::new(r, SpaceLayout::tripartite(n_ph).unwrap(), DetuningSchedule::constant(horizon, d).unwrap()).unwrap()
    }

    #[test]
    fn zero_duration_is_identity() {
        let m = model(rates(3e6, 3e6, [1e5, 1e5, 1e6]), Detunings::default(), 1e-6, 2);
        let opts = SimOptions { n_ph: 2, ..Default::default() };
        let rho = random_state(&m.layout, &[0.3, -0.2, 0.9, 0.1]);
        for method in [Method::PiecewiseExponential, Method::Adaptive] {
            let p = Propagator::new(&m, &SimOptions { method, ..opts }).unwrap();
            let out = p.step(&rho, 2e-7, 2e-7).unwrap();
            assert!(relative_frobenius(out.matrix(), rho.matrix()) < 1e-15);
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(16))]
        #[test]
        fn unitary_route_matches_superoperator(
            g1 in 0.1e6..20e6f64,
            g2 in 0.1e6..20e6f64,
            dsc in -1e9..1e9f64,
            de in -1e9..1e9f64,
            dp in -1e8..1e8f64,
            tau in 1e-10..3e-7f64,
            seed in proptest::collection::vec(-1.0..1.0f64, 5),
        ) {
            let d = Detunings { sc: dsc, e: de, p: dp };
            let m = model(rates(g1, g2, [0.0; 3]), d, tau, 3);
            let rho = random_state(&m.layout, &seed);
            let h = build_rotating_hamiltonian(&m.rates, d, &m.layout).unwrap();
            let eig = h.matrix().clone().symmetric_eigen();
            let phases = CMatrix::from_diagonal(&eig.eigenvalues.map(|w| Complex64::from_polar(1.0, -w * tau)));
            let u = &eig.eigenvectors * phases * eig.eigenvectors.adjoint();
            let oracle = &u * rho.matrix() * u.adjoint();

            let opts = SimOptions { sample_dt: tau, ..Default::default() };
            let cached = Propagator::new(&m, &opts).unwrap().step(&rho, 0.0, tau).unwrap();
            prop_assert!(relative_frobenius(cached.matrix(), &oracle) < 1e-10);
            let taylor = Propagator::new(&m, &SimOptions { sample_dt: 2.0 * tau, ..opts }).unwrap().step(&rho, 0.0, tau).unwrap();
            prop_assert!(relative_frobenius(taylor.matrix(), &oracle) < 1e-10);
        }

        #[test]
        fn adaptive_agrees_with_exponential(
            g1 in 1e6..10e6f64,
            g2 in 1e6..10e6f64,
            dsc in -3e7..3e7f64,
            tau in 1e-8..1e-7f64,
        ) {
            let m = model(rates(g1, g2, [1e5, 4.31e4, 1e6]), Detunings { sc: dsc, e: 0.0, p: 0.0 }, tau, 2);
            let rho = random_state(&m.layout, &[0.5, 0.1, -0.7]);
            let rel_tol = 1e-8;
            let opts = SimOptions { n_ph: 2, rel_tol, sample_dt: tau, ..Default::default() };
            let a = Propagator::new(&m, &opts).unwrap().step(&rho, 0.0, tau).unwrap();
            let b = Propagator::new(&m, &SimOptions { method: Method::Adaptive, ..opts }).unwrap().step(&rho, 0.0, tau).unwrap();
            prop_assert!(relative_frobenius(a.matrix(), b.matrix()) < 10.0 * rel_tol);
        }
    }

    #[test]
    fn decay_segment_closed_form() {
        let kappa = 43.1e3;
        let tau = 5e-6;
        let m = model(rates(0.0, 0.0, [0.0, kappa, 0.0]), Detunings::default(), tau, 3);
        let rho = crate::qops::basis_ket(&[0, 1, 0], &m.layout).unwrap();
        let out = Propagator::new(&m, &SimOptions { sample_dt: tau, ..Default::default() }).unwrap().step(&rho, 0.0, tau).unwrap();
        let i = m.layout.index_of(&[0, 1, 0]).unwrap();
        let exact = (-std::f64::consts::TAU * kappa * tau).exp();
        assert!((out.matrix()[(i, i)].re - exact).abs() < 1e-12);
    }
}
