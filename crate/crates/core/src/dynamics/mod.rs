//! Lindblad evolution of the qubit ⊗ phonon ⊗ spin system in the frame
//! rotating at the phonon frequency.
//!
//! Dissipators are in standard form D[c]ρ = cρc† − ½{c†c, ρ}, with c scaled
//! so that a lone excitation decays as exp(−2πκt).

mod propagate;
mod trajectory;

pub use propagate::{liouvillian, Propagator};
pub use trajectory::{Trajectory, STANDARD_TARGETS, TRAJECTORY_HEADER};

use std::f64::consts::TAU;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::device::SystemRates;
use crate::error::{Error, Result};
use crate::qops::{annihilator, embed, sigma_z, DensityMatrix, Operator, SpaceLayout, PHONON, SC, SPIN};

/// Detunings from the phonon frame (Hz).
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Detunings {
    #[serde(default)]
    pub sc: f64,
    #[serde(default)]
    pub e: f64,
    #[serde(default)]
    pub p: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DetuningSegment {
    pub t_start: f64,
    pub t_end: f64,
    pub delta_sc: f64,
    pub delta_e: f64,
    pub delta_p: f64,
}

impl DetuningSegment {
    pub fn detunings(&self) -> Detunings {
        Detunings {
            sc: self.delta_sc,
            e: self.delta_e,
            p: self.delta_p,
        }
    }

    pub fn duration(&self) -> f64 {
        self.t_end - self.t_start
    }
}

/// Piecewise-constant detunings; segments tile [0, horizon] exactly.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetuningSchedule {
    segments: Vec<DetuningSegment>,
}

impl DetuningSchedule {
    pub fn new(segments: Vec<DetuningSegment>) -> Result<Self> {
        let first = segments
            .first()
            .ok_or_else(|| Error::invalid("schedule needs at least one segment"))?;
        if first.t_start != 0.0 {
            return Err(Error::invalid(format!(
                "schedule must start at t = 0, starts at {}",
                first.t_start
            )));
        }
        for (i, s) in segments.iter().enumerate() {
            let finite = [s.t_start, s.t_end, s.delta_sc, s.delta_e, s.delta_p]
                .iter()
                .all(|v| v.is_finite());
            if !finite || s.t_start >= s.t_end {
                return Err(Error::invalid(format!(
                    "segment {i}: need finite values and t_start < t_end"
                )));
            }
            if i > 0 && segments[i - 1].t_end != s.t_start {
                return Err(Error::invalid(format!(
                    "segment {i} starts at {} but the previous one ends at {}",
                    s.t_start,
                    segments[i - 1].t_end
                )));
            }
        }
        Ok(Self { segments })
    }

    pub fn constant(duration: f64, deltas: Detunings) -> Result<Self> {
        Self::from_durations(&[(duration, deltas)])
    }

    /// Consecutive segments of the given durations starting at t = 0.
    pub fn from_durations(parts: &[(f64, Detunings)]) -> Result<Self> {
        let mut t = 0.0;
        let segments = parts
            .iter()
            .map(|&(duration, d)| {
                let s = DetuningSegment {
                    t_start: t,
                    t_end: t + duration,
                    delta_sc: d.sc,
                    delta_e: d.e,
                    delta_p: d.p,
                };
                t = s.t_end;
                s
            })
            .collect();
        Self::new(segments)
    }

    pub fn segments(&self) -> &[DetuningSegment] {
        &self.segments
    }

    pub fn horizon(&self) -> f64 {
        self.segments.last().map_or(0.0, |s| s.t_end)
    }

    /// Index of the segment containing t; boundaries belong to the later segment.
    pub fn segment_at(&self, t: f64) -> usize {
        self.segments
            .iter()
            .rposition(|s| s.t_start <= t)
            .unwrap_or(0)
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    #[default]
    PiecewiseExponential,
    Adaptive,
}

/// Channel through which κ_e acts on the spin.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SpinLoss {
    /// Jump σ⁻.
    #[default]
    Decay,
    /// Jump √(1/2)·σ_z, coherence lifetime 1/(2πκ_e).
    Dephasing,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SimOptions {
    pub method: Method,
    pub rel_tol: f64,
    pub n_ph: usize,
    /// Output sampling interval (s).
    pub sample_dt: f64,
    pub spin_loss: SpinLoss,
}

impl Default for SimOptions {
    fn default() -> Self {
        Self {
            method: Method::PiecewiseExponential,
            rel_tol: 1e-8,
            n_ph: 3,
            sample_dt: 1e-9,
            spin_loss: SpinLoss::Decay,
        }
    }
}

impl SimOptions {
    pub fn validate(&self) -> Result<()> {
        if !(self.rel_tol > 0.0 && self.rel_tol <= 1e-4) {
            return Err(Error::invalid(format!(
                "sim.rel_tol must lie in (0, 1e-4], got {}",
                self.rel_tol
            )));
        }
        if !(2..=8).contains(&self.n_ph) {
            return Err(Error::invalid(format!(
                "sim.n_ph must lie in [2, 8], got {}",
                self.n_ph
            )));
        }
        if !(self.sample_dt.is_finite() && self.sample_dt > 0.0) {
            return Err(Error::invalid(format!(
                "sim.sample_dt must be > 0, got {}",
                self.sample_dt
            )));
        }
        Ok(())
    }

    pub fn layout(&self) -> Result<SpaceLayout> {
        SpaceLayout::tripartite(self.n_ph)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LindbladModel {
    pub rates: SystemRates,
    pub layout: SpaceLayout,
    pub schedule: DetuningSchedule,
}

impl LindbladModel {
    pub fn new(rates: SystemRates, layout: SpaceLayout, schedule: DetuningSchedule) -> Result<Self> {
        rates.validate()?;
        check_tripartite(&layout)?;
        Ok(Self {
            rates,
            layout,
            schedule,
        })
    }
}

fn check_tripartite(layout: &SpaceLayout) -> Result<()> {
    let dims = layout.dims();
    if dims.len() != 3 || dims[SC] != 2 || dims[SPIN] != 2 || dims[PHONON] < 2 {
        return Err(Error::InvalidDimension(format!(
            "expected qubit ⊗ phonon(N ≥ 2) ⊗ qubit, got {dims:?}"
        )));
    }
    Ok(())
}

/// Raising operator σ⁺ = |1⟩⟨0| on a qubit.
fn sigma_plus() -> Operator {
    annihilator(2).expect("two levels").adjoint()
}

/// (σ⁻_sc, a, σ⁻_e) on the full space.
pub(crate) fn lowering_operators(layout: &SpaceLayout) -> Result<[Operator; 3]> {
    let lower = annihilator(2)?;
    Ok([
        embed(&lower, SC, layout)?,
        embed(&annihilator(layout.dims()[PHONON])?, PHONON, layout)?,
        embed(&lower, SPIN, layout)?,
    ])
}

/// Excitation-number operators (n_sc, n_p, n_e).
pub(crate) fn number_operators(layout: &SpaceLayout) -> Result<[Operator; 3]> {
    let [s, a, e] = lowering_operators(layout)?;
    Ok([&s.adjoint() * &s, &a.adjoint() * &a, &e.adjoint() * &e])
}

/// 2π[Δ_sc/2 σz_sc + Δ_e/2 σz_e + Δ_p a†a + g_scp(σ⁺_sc a + h.c.) + g_pe(σ⁺_e a + h.c.)].
pub fn build_rotating_hamiltonian(
    rates: &SystemRates,
    deltas: Detunings,
    layout: &SpaceLayout,
) -> Result<Operator> {
    check_tripartite(layout)?;
    let a = embed(&annihilator(layout.dims()[PHONON])?, PHONON, layout)?;
    let sp_sc = embed(&sigma_plus(), SC, layout)?;
    let sp_e = embed(&sigma_plus(), SPIN, layout)?;
    let sz_sc = embed(&sigma_z(), SC, layout)?;
    let sz_e = embed(&sigma_z(), SPIN, layout)?;

    let exchange = |sp: &Operator| {
        let x = sp * &a;
        &x + &x.adjoint()
    };
    let h = &(&(&sz_sc.scale(0.5 * deltas.sc) + &sz_e.scale(0.5 * deltas.e))
        + &(&a.adjoint() * &a).scale(deltas.p))
        + &(&exchange(&sp_sc).scale(rates.g_scp) + &exchange(&sp_e).scale(rates.g_pe));
    Ok(h.scale(TAU))
}

/// Jump operators with rates folded in.
pub(crate) fn jump_operators(
    rates: &SystemRates,
    layout: &SpaceLayout,
    spin_loss: SpinLoss,
) -> Result<Vec<Operator>> {
    let [s, a, e] = lowering_operators(layout)?;
    let mut jumps = Vec::with_capacity(3);
    let mut push = |op: Operator, kappa: f64| {
        if kappa > 0.0 {
            jumps.push(op.scale((TAU * kappa).sqrt()));
        }
    };
    push(s, rates.kappa_sc);
    push(a, rates.kappa_p);
    match spin_loss {
        SpinLoss::Decay => push(e, rates.kappa_e),
        SpinLoss::Dephasing => push(
            embed(&sigma_z(), SPIN, layout)?.scale(std::f64::consts::FRAC_1_SQRT_2),
            rates.kappa_e,
        ),
    }
    Ok(jumps)
}

/// Integrates the master equation from ρ0 across the whole schedule, sampling
/// at `options.sample_dt` and at every segment boundary.
pub fn evolve(
    model: &LindbladModel,
    rho0: &DensityMatrix,
    options: &SimOptions,
    targets: &[Vec<usize>],
) -> Result<Trajectory> {
    options.validate()?;
    if rho0.layout() != &model.layout {
        return Err(Error::DimensionMismatch {
            expected: model.layout.total_dim(),
            actual: rho0.layout().total_dim(),
        });
    }
    if model.layout.dims()[PHONON] != options.n_ph {
        return Err(Error::DimensionMismatch {
            expected: options.n_ph,
            actual: model.layout.dims()[PHONON],
        });
    }
    let target_idx = targets
        .iter()
        .map(|t| model.layout.index_of(t))
        .collect::<Result<Vec<_>>>()?;
    let numbers = number_operators(&model.layout)?;
    let propagator = Propagator::new(model, options)?;
    let times = sample_times(&model.schedule, options.sample_dt);

    let mut traj = Trajectory::empty(targets.to_vec());
    let mut rho = rho0.clone();
    traj.record(times[0], &rho, &numbers, &target_idx);
    for w in times.windows(2) {
        rho = propagator.step(&rho, w[0], w[1])?;
        traj.record(w[1], &rho, &numbers, &target_idx);
    }
    if traj.trace_error > 1e-8 {
        return Err(Error::NumericalIntegrity(format!(
            "trace drifted by {:e}",
            traj.trace_error
        )));
    }
    Ok(traj)
}

/// Union of the uniform grid and the segment boundaries, strictly increasing.
fn sample_times(schedule: &DetuningSchedule, dt: f64) -> Vec<f64> {
    let horizon = schedule.horizon();
    let mut marks: Vec<(f64, bool)> = schedule
        .segments()
        .iter()
        .map(|s| (s.t_start, true))
        .chain(std::iter::once((horizon, true)))
        .collect();
    let n = (horizon / dt).floor() as usize;
    marks.extend((1..=n).map(|k| (k as f64 * dt, false)));
    marks.sort_by(|a, b| a.0.total_cmp(&b.0));

    let merge = 1e-6 * dt;
    let mut out: Vec<(f64, bool)> = Vec::with_capacity(marks.len());
    for (t, boundary) in marks {
        if t > horizon {
            continue;
        }
        match out.last_mut() {
            Some(last) if t - last.0 <= merge => {
                if boundary && !last.1 {
                    *last = (t, true);
                }
            }
            _ => out.push((t, boundary)),
        }
    }
    out.into_iter().map(|(t, _)| t).collect()
}

pub(crate) fn c(re: f64) -> Complex64 {
    Complex64::new(re, 0.0)
}
