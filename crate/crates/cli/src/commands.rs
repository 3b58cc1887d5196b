use std::io::Write;

use nalgebra::Matrix3;
use serde::Serialize;
use transduce_core::device::{
    cooperativity_report, electromechanical_coupling, kappa_from_q, mode_elimination_check,
    normalize_phonon_strain, normalize_photon_field, q_total, spin_coupling_map, transmon_frequency,
    FieldProfile, PiezoTensor, SystemRates, TransmonLevels,
};
use transduce_core::protocols::{self, protocol_hierarchy, sweep, ProtocolSpec};
use transduce_core::spin::{spin_field_point, strain_components};
use transduce_core::Error;

use crate::config::{require, DeviceSection, RunConfig, SweepSection};
use crate::error::{CliError, CliResult};
use crate::output::Artifacts;

pub const SPIN_FIELD_HEADER: &str = "B_mag_T,B_x_T,B_z_T,nu1_Hz,nu3_Hz,splitting_Hz,g_pe_Hz";
pub const G_PE_MAP_HEADER: &str = "x_m,y_m,z_m,g_pe_Hz";

/// Input errors raised by the core while checking a request become config errors.
fn as_config(e: Error) -> CliError {
    match e {
        Error::InvalidInput(msg) => CliError::Config(msg),
        other => CliError::Core(other),
    }
}

#[derive(Serialize)]
struct SimulateSummary {
    protocol: u8,
    protocol_name: &'static str,
    f_e_max: f64,
    t_opt_s: f64,
    f_e_end: f64,
    horizon_s: f64,
    samples: usize,
    trace_error: f64,
    min_eigenvalue: f64,
    spec: ProtocolSpec,
    warnings: Vec<String>,
}

pub fn simulate(cfg: &RunConfig, art: &mut Artifacts) -> CliResult<()> {
    let rates = cfg.require_rates()?;
    let p = require(&cfg.protocol, "[protocol]")?;
    let spec = ProtocolSpec {
        kind: p.kind(),
        rates: *rates,
        horizon: p.horizon(),
    };
    spec.validate().map_err(as_config)?;
    let r = protocols::run(&spec, &cfg.sim)?;
    art.add("trajectory.csv", |w| r.trajectory.write_csv(w))?;
    art.add_json(
        "result.json",
        &SimulateSummary {
            protocol: spec.kind.index(),
            protocol_name: spec.kind.name(),
            f_e_max: r.f_e_max,
            t_opt_s: r.t_opt,
            f_e_end: r.f_e_end,
            horizon_s: r.horizon,
            samples: r.trajectory.len(),
            trace_error: r.trajectory.trace_error,
            min_eigenvalue: r.trajectory.min_eigenvalue,
            spec: r.spec_echo,
            warnings: r.warnings.clone(),
        },
    )?;
    art.warnings.extend(r.warnings);
    Ok(())
}

pub fn run_sweep(cfg: &RunConfig, art: &mut Artifacts) -> CliResult<()> {
    let rates = cfg.require_rates()?;
    let section = require(&cfg.sweep, "[sweep]")?;
    match section {
        SweepSection::Hierarchy { q_grid, params } => {
            let q = q_grid.values("sweep.q_grid")?;
            let report = protocol_hierarchy(rates, &q, params, &cfg.sim).map_err(as_config)?;
            art.add("hierarchy.csv", |w| report.write_csv(w))?;
            art.add("hierarchy_best.csv", |w| report.write_best_csv(w))?;
            art.add_json("summary.json", &report)?;
            art.warnings.extend(report.warnings);
        }
        SweepSection::DeltaG { grid } | SweepSection::DeltaP { grid } | SweepSection::DeltaI { grid } => {
            let family = section.family().expect("one-parameter family");
            let values = grid.values("sweep.grid")?;
            let table = sweep(family, rates, &values, &cfg.sim).map_err(as_config)?;
            art.add("sweep.csv", |w| table.write_csv(w))?;
            art.add_json("summary.json", &table)?;
            for p in &table.points {
                if let Some(e) = &p.error {
                    art.warn(format!("param = {:e}: point failed: {e}", p.param));
                }
                if let Some(s) = &p.summary {
                    for w in &s.warnings {
                        art.warn(format!("param = {:e}: {w}", p.param));
                    }
                }
            }
            if table.succeeded() == 0 {
                art.failure = Some(CliError::AllPointsFailed(table.points.len()));
            }
        }
    }
    Ok(())
}

pub fn spin_field(cfg: &RunConfig, art: &mut Artifacts) -> CliResult<()> {
    let s = cfg.require_spin()?;
    let grid = require(&s.b_grid_t, "spin.b_grid_t")?.values("spin.b_grid_t")?;
    // Hamiltonian coefficients of the two orbital operators.
    let (alpha, beta) = match (s.strain_difference, s.strain_tensor) {
        (Some(d), None) => (require(&s.strain, "spin.strain")?.chi_eff * d, 0.0),
        (None, Some(t)) => {
            let sus = require(&s.strain, "spin.strain")?;
            let terms = strain_components(&Matrix3::from_fn(|i, j| t[i][j]), sus).map_err(as_config)?;
            (terms.beta, terms.gamma)
        }
        _ => {
            return Err(CliError::config(
                "missing required key spin.strain_difference (or spin.strain_tensor)",
            ))
        }
    };

    let mut rows = Vec::with_capacity(grid.len());
    for &b in &grid {
        match spin_field_point(&s.params, alpha, beta, s.target_splitting_hz, b) {
            Ok(pt) => rows.push([pt.b_mag, pt.b_x, pt.b_z, pt.nu1, pt.nu3, pt.splitting, pt.g_pe]),
            Err(e @ Error::UnachievableSplitting { .. }) => {
                art.warn(format!("|B| = {b} T flagged: {e}"));
                rows.push([b, f64::NAN, f64::NAN, f64::NAN, f64::NAN, f64::NAN, f64::NAN]);
            }
            Err(e) => return Err(as_config(e)),
        }
    }
    let solved: Vec<&[f64; 7]> = rows.iter().filter(|r| !r[6].is_nan()).collect();
    if solved.windows(2).any(|w| w[1][6] < w[0][6]) {
        art.warn("g_pe is not monotone in |B| across the solved rows");
    }
    art.add("spin_field.csv", |w| {
        writeln!(w, "{SPIN_FIELD_HEADER}")?;
        for r in &rows {
            let cells: Vec<String> = r.iter().map(|v| format!("{v:.16e}")).collect();
            writeln!(w, "{}", cells.join(","))?;
        }
        Ok(())
    })
}

#[derive(Serialize)]
struct GpeMax {
    g_pe_hz: f64,
    position_m: [f64; 3],
    cell: usize,
}

#[derive(Serialize)]
struct SpectatorRow {
    label: String,
    g: f64,
    delta: f64,
    induced_rate: f64,
    kappa_p0: f64,
    negligible: bool,
}

#[derive(Serialize)]
struct CouplingReport {
    g_scp_hz: f64,
    photon_prefactor: f64,
    phonon_prefactor: f64,
    f_sc_hz: f64,
    f_p_hz: f64,
    cells: usize,
    g_pe_max: Option<GpeMax>,
    mode_elimination: Vec<SpectatorRow>,
    transmon: Option<TransmonLevels>,
}

fn transmon(d: &DeviceSection, art: &mut Artifacts) -> CliResult<Option<TransmonLevels>> {
    let Some(t) = d.transmon else {
        return Ok(None);
    };
    let levels = transmon_frequency(t.e_j, t.e_c).map_err(as_config)?;
    if !levels.transmon_regime {
        art.warn(format!(
            "E_J/E_C = {:.3} is below 20; the two-level transmon picture is approximate",
            t.e_j / t.e_c
        ));
    }
    Ok(Some(levels))
}

pub fn coupling(cfg: &RunConfig, art: &mut Artifacts) -> CliResult<()> {
    let d = cfg.require_device()?;
    let caps = require(&d.capacitance, "device.capacitance")?;
    let photon = FieldProfile::read(require(&d.photon_profile, "device.photon_profile")?)?;
    let phonon = FieldProfile::read(require(&d.phonon_profile, "device.phonon_profile")?)?;
    let piezo = PiezoTensor::read(require(&d.piezo, "device.piezo")?)?;

    let f_sc = d.f_sc_hz.unwrap_or(photon.frequency);
    let f_p = d.f_p_hz.unwrap_or(phonon.frequency);
    let e = normalize_photon_field(&photon, caps, f_sc).map_err(as_config)?;
    let t = normalize_phonon_strain(&phonon, f_p).map_err(as_config)?;
    let g_scp = electromechanical_coupling(&e.profile, &t.profile, &piezo)?;

    let sus = cfg.spin.as_ref().and_then(|s| s.strain);
    let g_pe_max = match sus {
        Some(sus) => {
            let rot = d
                .emitter_rotation
                .map_or_else(Matrix3::identity, |r| Matrix3::from_fn(|i, j| r[i][j]));
            let map = spin_coupling_map(&t.profile, sus.chi_eff, &rot).map_err(as_config)?;
            art.add("g_pe_map.csv", |w| {
                writeln!(w, "{G_PE_MAP_HEADER}")?;
                for p in &map.points {
                    let [x, y, z] = p.position;
                    writeln!(w, "{x:.16e},{y:.16e},{z:.16e},{:.16e}", p.g_pe)?;
                }
                Ok(())
            })?;
            let m = map.max();
            Some(GpeMax {
                g_pe_hz: m.g_pe,
                position_m: m.position,
                cell: map.argmax,
            })
        }
        None => {
            art.warn("no [spin.strain] section; the g_pe map was skipped");
            None
        }
    };

    let mut mode_elimination = Vec::new();
    if !d.spectator_modes.is_empty() {
        let kappa_p0 = d
            .kappa_p0
            .or(cfg.rates.map(|r| r.kappa_p))
            .ok_or_else(|| CliError::config("missing required key device.kappa_p0 (or [rates])"))?;
        for m in &d.spectator_modes {
            let r = mode_elimination_check(m.g, m.delta, kappa_p0);
            if !r.negligible {
                art.warn(format!(
                    "spectator mode {} adds {:.3e} Hz of loss, above kappa_p0 = {kappa_p0:.3e} Hz",
                    m.label, r.induced_rate
                ));
            }
            mode_elimination.push(SpectatorRow {
                label: m.label.clone(),
                g: m.g,
                delta: m.delta,
                induced_rate: r.induced_rate,
                kappa_p0,
                negligible: r.negligible,
            });
        }
    }

    let report = CouplingReport {
        g_scp_hz: g_scp,
        photon_prefactor: e.prefactor,
        phonon_prefactor: t.prefactor,
        f_sc_hz: f_sc,
        f_p_hz: f_p,
        cells: photon.cells.len(),
        g_pe_max,
        mode_elimination,
        transmon: transmon(d, art)?,
    };
    art.add_json("coupling.json", &report)
}

#[derive(Serialize)]
struct QBudgetReport {
    q_mech: f64,
    f_p_hz: f64,
    kappa_p_hz: f64,
    c_scp: f64,
    c_pe: f64,
    quoted_c_scp: f64,
    quoted_c_pe: f64,
    note: String,
    transmon: Option<TransmonLevels>,
}

pub fn qbudget(cfg: &RunConfig, art: &mut Artifacts) -> CliResult<()> {
    let d = cfg.require_device()?;
    let budget = require(&d.q_budget, "device.q_budget")?;
    let rates = cfg.require_rates()?;
    let q_mech = q_total(budget).map_err(as_config)?;
    let kappa_p = kappa_from_q(rates.f_p, q_mech).map_err(as_config)?;
    if (rates.kappa_p - kappa_p).abs() > 0.01 * kappa_p {
        art.warn(format!(
            "rates.kappa_p = {:e} Hz differs from the budget value {kappa_p:e} Hz; the budget value is used",
            rates.kappa_p
        ));
    }
    let coop = cooperativity_report(&SystemRates { kappa_p, ..*rates }).map_err(as_config)?;
    let report = QBudgetReport {
        q_mech,
        f_p_hz: rates.f_p,
        kappa_p_hz: kappa_p,
        c_scp: coop.c_scp,
        c_pe: coop.c_pe,
        quoted_c_scp: coop.quoted_c_scp,
        quoted_c_pe: coop.quoted_c_pe,
        note: coop.note,
        transmon: transmon(d, art)?,
    };
    art.add_json("qbudget.json", &report)
}
