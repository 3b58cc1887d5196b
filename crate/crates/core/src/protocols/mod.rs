//! The three transfer protocols, each started from an excitation in the
//! transmon: resonant exchange (1), virtual phonon exchange (2) and two
//! sequential Rabi swaps (3).

mod sweep;

pub use sweep::{
    protocol_hierarchy, sweep, Crossover, HierarchyParams, HierarchyReport, PointSummary,
    SweepFamily, SweepPoint, SweepTable, HIERARCHY_BEST_HEADER, SWEEP_HEADER,
};

use serde::{Deserialize, Serialize};

use crate::device::SystemRates;
use crate::dynamics::{
    evolve, number_operators, DetuningSchedule, Detunings, LindbladModel, Propagator, SimOptions,
    Trajectory, STANDARD_TARGETS,
};
use crate::error::{Error, Result};
use crate::qops::{basis_ket, DensityMatrix};

/// Coarse samples per horizon before refinement.
pub const COARSE_SAMPLES: f64 = 2000.0;
/// Peak refinement stops below this bracket width (s).
pub const PEAK_RESOLUTION: f64 = 1e-12;
/// Virtual exchange is flagged below |Δ_p| = 5·max(g).
pub const DISPERSIVE_RATIO: f64 = 5.0;
const EDGE_FRACTION: f64 = 0.05;
const MAX_HORIZON_RETRIES: usize = 3;

const F_E: usize = 2;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum ProtocolKind {
    Resonant,
    VirtualPhonon { delta_p: f64 },
    DoubleRabi { delta_i: f64 },
}

impl ProtocolKind {
    /// 1, 2 or 3.
    pub fn index(&self) -> u8 {
        match self {
            ProtocolKind::Resonant => 1,
            ProtocolKind::VirtualPhonon { .. } => 2,
            ProtocolKind::DoubleRabi { .. } => 3,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            ProtocolKind::Resonant => "resonant",
            ProtocolKind::VirtualPhonon { .. } => "virtual-phonon",
            ProtocolKind::DoubleRabi { .. } => "double-rabi",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProtocolSpec {
    pub kind: ProtocolKind,
    pub rates: SystemRates,
    /// Overrides the per-kind default (s).
    pub horizon: Option<f64>,
}

impl ProtocolSpec {
    pub fn validate(&self) -> Result<()> {
        self.rates.validate()?;
        if let Some(h) = self.horizon {
            if !(h.is_finite() && h > 0.0) {
                return Err(Error::invalid(format!("protocol.horizon must be > 0, got {h}")));
            }
        }
        match self.kind {
            ProtocolKind::Resonant => {}
            ProtocolKind::VirtualPhonon { delta_p } => {
                if !(delta_p.is_finite() && delta_p != 0.0) {
                    return Err(Error::invalid(format!(
                        "protocol.delta_p must be finite and nonzero, got {delta_p}"
                    )));
                }
            }
            ProtocolKind::DoubleRabi { delta_i } => {
                if !(delta_i.is_finite() && delta_i >= 0.0) {
                    return Err(Error::invalid(format!(
                        "protocol.delta_i must be >= 0, got {delta_i}"
                    )));
                }
                if self.rates.g_scp <= 0.0 || self.rates.g_pe <= 0.0 {
                    return Err(Error::invalid("double Rabi needs both couplings > 0"));
                }
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct ProtocolResult {
    pub f_e_max: f64,
    /// Time of the peak (s).
    pub t_opt: f64,
    /// F_e at the end of the horizon.
    pub f_e_end: f64,
    pub horizon: f64,
    pub trajectory: Trajectory,
    pub spec_echo: ProtocolSpec,
    pub warnings: Vec<String>,
}

pub fn run(spec: &ProtocolSpec, options: &SimOptions) -> Result<ProtocolResult> {
    spec.validate()?;
    match spec.kind {
        ProtocolKind::Resonant => run_resonant_with(spec, options),
        ProtocolKind::VirtualPhonon { delta_p } => run_virtual_with(spec, delta_p, options),
        ProtocolKind::DoubleRabi { delta_i } => run_double_rabi_with(spec, delta_i, options),
    }
}

pub fn run_resonant(rates: &SystemRates, options: &SimOptions) -> Result<ProtocolResult> {
    run(
        &ProtocolSpec {
            kind: ProtocolKind::Resonant,
            rates: *rates,
            horizon: None,
        },
        options,
    )
}

pub fn run_virtual(rates: &SystemRates, delta_p: f64, options: &SimOptions) -> Result<ProtocolResult> {
    run(
        &ProtocolSpec {
            kind: ProtocolKind::VirtualPhonon { delta_p },
            rates: *rates,
            horizon: None,
        },
        options,
    )
}

pub fn run_double_rabi(rates: &SystemRates, delta_i: f64, options: &SimOptions) -> Result<ProtocolResult> {
    run(
        &ProtocolSpec {
            kind: ProtocolKind::DoubleRabi { delta_i },
            rates: *rates,
            horizon: None,
        },
        options,
    )
}

fn run_resonant_with(spec: &ProtocolSpec, options: &SimOptions) -> Result<ProtocolResult> {
    let r = &spec.rates;
    let horizon = match spec.horizon {
        Some(h) => h,
        None => {
            let g_min = r.g_scp.min(r.g_pe);
            if g_min <= 0.0 {
                return Err(Error::invalid(
                    "resonant default horizon needs both couplings > 0; set protocol.horizon",
                ));
            }
            3.0 / (2.0 * g_min)
        }
    };
    let schedule = DetuningSchedule::constant(horizon, Detunings::default())?;
    finish(spec, schedule, options, Vec::new())
}

fn run_virtual_with(spec: &ProtocolSpec, delta_p: f64, options: &SimOptions) -> Result<ProtocolResult> {
    let r = &spec.rates;
    let mut warnings = Vec::new();
    let g_max = r.g_scp.max(r.g_pe);
    if delta_p.abs() < DISPERSIVE_RATIO * g_max {
        warnings.push(format!(
            "dispersive validity: |delta_p| = {:e} Hz is below {DISPERSIVE_RATIO}·max(g) = {:e} Hz",
            delta_p.abs(),
            DISPERSIVE_RATIO * g_max
        ));
    }
    let deltas = Detunings {
        p: delta_p,
        ..Detunings::default()
    };
    if let Some(h) = spec.horizon {
        return finish(spec, DetuningSchedule::constant(h, deltas)?, options, warnings);
    }
    let g2 = r.g_scp * r.g_pe;
    if g2 <= 0.0 {
        return Err(Error::invalid(
            "virtual default horizon needs both couplings > 0; set protocol.horizon",
        ));
    }
    // Three effective swaps of g_eff = g²/Δ_p.
    let mut horizon = 3.0 * delta_p.abs() / (4.0 * g2);
    for attempt in 0..=MAX_HORIZON_RETRIES {
        let result = finish(spec, DetuningSchedule::constant(horizon, deltas)?, options, warnings.clone())?;
        if result.t_opt < (1.0 - EDGE_FRACTION) * horizon {
            return Ok(result);
        }
        if attempt == MAX_HORIZON_RETRIES {
            let mut result = result;
            result.warnings.push(format!(
                "peak still within {}% of the horizon after {MAX_HORIZON_RETRIES} doublings",
                EDGE_FRACTION * 100.0
            ));
            return Ok(result);
        }
        horizon *= 2.0;
    }
    unreachable!("loop returns on its final iteration")
}

fn run_double_rabi_with(spec: &ProtocolSpec, delta_i: f64, options: &SimOptions) -> Result<ProtocolResult> {
    let r = &spec.rates;
    let t1 = 1.0 / (4.0 * r.g_scp);
    let t2 = 1.0 / (4.0 * r.g_pe);
    let schedule = DetuningSchedule::from_durations(&[
        (t1, Detunings { sc: 0.0, e: delta_i, p: 0.0 }),
        (t2, Detunings { sc: delta_i, e: 0.0, p: 0.0 }),
    ])?;
    let mut warnings = Vec::new();
    if spec.horizon.is_some() {
        warnings.push("protocol.horizon ignored: the double Rabi schedule fixes its own length".into());
    }
    finish(spec, schedule, options, warnings)
}

/// Evolves from |100⟩ on a coarse grid, then refines the F_e peak.
fn finish(
    spec: &ProtocolSpec,
    schedule: DetuningSchedule,
    options: &SimOptions,
    warnings: Vec<String>,
) -> Result<ProtocolResult> {
    options.validate()?;
    let horizon = schedule.horizon();
    let opts = SimOptions {
        sample_dt: options.sample_dt.min(horizon / COARSE_SAMPLES),
        ..*options
    };
    let layout = opts.layout()?;
    let model = LindbladModel::new(spec.rates, layout.clone(), schedule)?;
    let rho0 = basis_ket(&STANDARD_TARGETS[0], &layout)?;
    let targets: Vec<Vec<usize>> = STANDARD_TARGETS.iter().map(|t| t.to_vec()).collect();
    let mut trajectory = evolve(&model, &rho0, &opts, &targets)?;

    // Refined peaks are uncertain by ~F''·resolution².
    let tie = (curvature_bound(&trajectory) * (PEAK_RESOLUTION / opts.sample_dt).powi(2)).max(1e-15);
    let mut refined = Vec::new();
    for k in peak_candidates(&trajectory) {
        if let Some(found) = refine_peak(&model, &opts, &trajectory, k)? {
            refined.push(found);
        }
    }
    let idx: Vec<usize> = targets
        .iter()
        .map(|t| layout.index_of(t))
        .collect::<Result<_>>()?;
    let numbers = number_operators(&layout)?;
    for (t, rho) in refined {
        trajectory.insert(t, &rho, &numbers, &idx)?;
    }
    let k = first_peak(&trajectory, tie);
    let f_e_max = trajectory.fidelity_column(F_E).into_iter().fold(f64::MIN, f64::max);
    let t_opt = trajectory.times[k];
    let f_e_end = trajectory.fidelities.last().expect("nonempty")[F_E];
    Ok(ProtocolResult {
        f_e_max,
        t_opt,
        f_e_end,
        horizon,
        trajectory,
        spec_echo: *spec,
        warnings,
    })
}

/// Earliest sample within `tie` of the maximum F_e, so equal revivals
/// resolve to the first one.
fn first_peak(trajectory: &Trajectory, tie: f64) -> usize {
    let column = trajectory.fidelity_column(F_E);
    let max = column.iter().copied().fold(f64::MIN, f64::max);
    column.iter().position(|&f| f >= max - tie).unwrap_or(0)
}

/// Largest |second difference| of the F_e column, ≈ max|F''|·dt².
fn curvature_bound(trajectory: &Trajectory) -> f64 {
    trajectory
        .fidelity_column(F_E)
        .windows(3)
        .map(|w| (w[0] - 2.0 * w[1] + w[2]).abs())
        .fold(0.0, f64::max)
}

/// Local maxima of the coarse F_e column that could hide the global peak:
/// those within the largest second difference (a bound on the sampling
/// deficit) of the best sample.
fn peak_candidates(trajectory: &Trajectory) -> Vec<usize> {
    let f = trajectory.fidelity_column(F_E);
    let n = f.len();
    let max = f.iter().copied().fold(f64::MIN, f64::max);
    let deficit = curvature_bound(trajectory);
    (0..n)
        .filter(|&i| {
            let left = i == 0 || f[i] >= f[i - 1];
            let right = i + 1 == n || f[i] >= f[i + 1];
            left && right && f[i] >= max - deficit
        })
        .collect()
}

/// Golden-section search for the F_e maximum between the neighbours of
/// sample k; returns a state only if it beats the sample.
fn refine_peak(
    model: &LindbladModel,
    options: &SimOptions,
    trajectory: &Trajectory,
    k: usize,
) -> Result<Option<(f64, DensityMatrix)>> {
    let last = trajectory.len() - 1;
    let lo = k.saturating_sub(1);
    let hi = (k + 1).min(last);
    if lo == hi {
        return Ok(None);
    }
    let propagator = Propagator::new(model, options)?;
    let origin = &trajectory.states[lo];
    let t_origin = trajectory.times[lo];
    let e_idx = model.layout.index_of(&STANDARD_TARGETS[F_E])?;
    let eval = |t: f64| -> Result<(f64, DensityMatrix)> {
        let rho = propagator.step(origin, t_origin, t)?;
        Ok((rho.matrix()[(e_idx, e_idx)].re, rho))
    };

    let inv_phi = (5f64.sqrt() - 1.0) / 2.0;
    let (mut a, mut b) = (trajectory.times[lo], trajectory.times[hi]);
    let mut x1 = b - inv_phi * (b - a);
    let mut x2 = a + inv_phi * (b - a);
    let (mut f1, mut r1) = eval(x1)?;
    let (mut f2, mut r2) = eval(x2)?;
    let mut best = (trajectory.fidelities[k][F_E], None);
    while b - a > PEAK_RESOLUTION {
        if f1 > f2 {
            if f1 > best.0 {
                best = (f1, Some((x1, r1.clone())));
            }
            b = x2;
            (x2, f2, r2) = (x1, f1, r1.clone());
            x1 = b - inv_phi * (b - a);
            (f1, r1) = eval(x1)?;
        } else {
            if f2 > best.0 {
                best = (f2, Some((x2, r2.clone())));
            }
            a = x1;
            (x1, f1, r1) = (x2, f2, r2.clone());
            x2 = a + inv_phi * (b - a);
            (f2, r2) = eval(x2)?;
        }
    }
    for (x, f, r) in [(x1, f1, r1), (x2, f2, r2)] {
        if f > best.0 {
            best = (f, Some((x, r)));
        }
    }
    Ok(best.1)
}
