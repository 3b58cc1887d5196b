use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{run, ProtocolKind, ProtocolSpec};
use crate::device::{kappa_from_q, SystemRates};
use crate::dynamics::SimOptions;
use crate::error::{Error, Result};

pub const SWEEP_HEADER: &str = "param,f_e_max,t_opt_s,protocol";
pub const HIERARCHY_BEST_HEADER: &str = "param,best_protocol,f_e_best,f_e_p1,f_e_p2,f_e_p3";

/// One-parameter protocol families.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SweepFamily {
    /// Resonant protocol with g_scp = g_pe + param.
    DeltaG,
    /// Virtual protocol with Δ_p = param.
    DeltaP,
    /// Double Rabi with Δ_i = param.
    DeltaI,
}

impl SweepFamily {
    pub fn spec(&self, base: &SystemRates, param: f64) -> ProtocolSpec {
        let (kind, rates) = match self {
            SweepFamily::DeltaG => (
                ProtocolKind::Resonant,
                SystemRates {
                    g_scp: base.g_pe + param,
                    ..*base
                },
            ),
            SweepFamily::DeltaP => (ProtocolKind::VirtualPhonon { delta_p: param }, *base),
            SweepFamily::DeltaI => (ProtocolKind::DoubleRabi { delta_i: param }, *base),
        };
        ProtocolSpec {
            kind,
            rates,
            horizon: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PointSummary {
    pub f_e_max: f64,
    pub t_opt: f64,
    pub f_e_end: f64,
    pub protocol: u8,
    pub warnings: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepPoint {
    pub param: f64,
    pub protocol: u8,
    pub summary: Option<PointSummary>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepTable {
    pub family: SweepFamily,
    pub points: Vec<SweepPoint>,
}

impl SweepTable {
    pub fn succeeded(&self) -> usize {
        self.points.iter().filter(|p| p.summary.is_some()).count()
    }

    /// Failed points are written with NaN values.
    pub fn write_csv(&self, out: impl Write) -> Result<()> {
        write_rows(out, self.points.iter())
    }
}

fn write_rows<'a>(mut out: impl Write, points: impl Iterator<Item = &'a SweepPoint>) -> Result<()> {
    writeln!(out, "{SWEEP_HEADER}")?;
    for p in points {
        let (f, t) = p
            .summary
            .as_ref()
            .map_or((f64::NAN, f64::NAN), |s| (s.f_e_max, s.t_opt));
        writeln!(out, "{:.16e},{:.16e},{:.16e},{}", p.param, f, t, p.protocol)?;
    }
    Ok(())
}

fn run_point(spec: &ProtocolSpec, param: f64, options: &SimOptions) -> SweepPoint {
    let protocol = spec.kind.index();
    match run(spec, options) {
        Ok(r) => SweepPoint {
            param,
            protocol,
            summary: Some(PointSummary {
                f_e_max: r.f_e_max,
                t_opt: r.t_opt,
                f_e_end: r.f_e_end,
                protocol,
                warnings: r.warnings,
            }),
            error: None,
        },
        Err(e) => SweepPoint {
            param,
            protocol,
            summary: None,
            error: Some(e.to_string()),
        },
    }
}

/// Runs every grid point (in parallel on the current rayon pool); rows keep
/// grid order and failures are recorded per point.
pub fn sweep(family: SweepFamily, base: &SystemRates, grid: &[f64], options: &SimOptions) -> Result<SweepTable> {
    if grid.is_empty() {
        return Err(Error::invalid("sweep grid is empty"));
    }
    base.validate()?;
    options.validate()?;
    let points = grid
        .par_iter()
        .map(|&param| run_point(&family.spec(base, param), param, options))
        .collect();
    Ok(SweepTable { family, points })
}

/// Fixed protocol parameters compared across mechanical Q.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct HierarchyParams {
    pub delta_p: f64,
    pub delta_i: f64,
}

impl Default for HierarchyParams {
    fn default() -> Self {
        Self {
            delta_p: 30e6,
            delta_i: 1e9,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Crossover {
    /// Log-interpolated Q where the lead changes.
    pub q: f64,
    pub from: u8,
    pub to: u8,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct HierarchyReport {
    pub q_grid: Vec<f64>,
    pub params: HierarchyParams,
    /// f_e_max for protocols 1, 2, 3 at each Q.
    pub fidelities: Vec<[f64; 3]>,
    pub t_opt: Vec<[f64; 3]>,
    pub best_protocol: Vec<u8>,
    pub crossovers: Vec<Crossover>,
    pub warnings: Vec<String>,
}

impl HierarchyReport {
    pub fn write_csv(&self, out: impl Write) -> Result<()> {
        let points: Vec<SweepPoint> = self
            .q_grid
            .iter()
            .enumerate()
            .flat_map(|(i, &q)| {
                (0..3).map(move |p| SweepPoint {
                    param: q,
                    protocol: p as u8 + 1,
                    summary: Some(PointSummary {
                        f_e_max: self.fidelities[i][p],
                        t_opt: self.t_opt[i][p],
                        f_e_end: f64::NAN,
                        protocol: p as u8 + 1,
                        warnings: Vec::new(),
                    }),
                    error: None,
                })
            })
            .collect();
        write_rows(out, points.iter())
    }

    pub fn write_best_csv(&self, mut out: impl Write) -> Result<()> {
        writeln!(out, "{HIERARCHY_BEST_HEADER}")?;
        for (i, &q) in self.q_grid.iter().enumerate() {
            let f = self.fidelities[i];
            let b = self.best_protocol[i];
            writeln!(
                out,
                "{:.16e},{},{:.16e},{:.16e},{:.16e},{:.16e}",
                q,
                b,
                f[b as usize - 1],
                f[0],
                f[1],
                f[2]
            )?;
        }
        Ok(())
    }
}

/// Argmax with ties resolved toward the lower protocol number.
fn best_of(f: &[f64; 3]) -> u8 {
    let mut best = 0;
    for i in 1..3 {
        if f[i] > f[best] {
            best = i;
        }
    }
    best as u8 + 1
}

/// Protocols 1–3 at each Q with κ_p = f_p/Q; couplings and the other
/// rates come from `base`.
pub fn protocol_hierarchy(
    base: &SystemRates,
    q_grid: &[f64],
    params: &HierarchyParams,
    options: &SimOptions,
) -> Result<HierarchyReport> {
    if q_grid.is_empty() {
        return Err(Error::invalid("hierarchy Q grid is empty"));
    }
    if let Some(q) = q_grid.iter().find(|q| !(q.is_finite() && **q > 0.0)) {
        return Err(Error::invalid(format!("hierarchy Q values must be > 0, got {q}")));
    }
    base.validate()?;
    options.validate()?;
    let kinds = [
        ProtocolKind::Resonant,
        ProtocolKind::VirtualPhonon {
            delta_p: params.delta_p,
        },
        ProtocolKind::DoubleRabi {
            delta_i: params.delta_i,
        },
    ];
    let jobs: Vec<(usize, usize)> = (0..q_grid.len()).flat_map(|i| (0..3).map(move |p| (i, p))).collect();
    let results = jobs
        .par_iter()
        .map(|&(i, p)| {
            let rates = SystemRates {
                kappa_p: kappa_from_q(base.f_p, q_grid[i])?,
                ..*base
            };
            run(
                &ProtocolSpec {
                    kind: kinds[p],
                    rates,
                    horizon: None,
                },
                options,
            )
            .map(|r| (r.f_e_max, r.t_opt, r.warnings))
        })
        .collect::<Result<Vec<_>>>()?;

    let mut fidelities = vec![[0.0; 3]; q_grid.len()];
    let mut t_opt = vec![[0.0; 3]; q_grid.len()];
    let mut warnings = Vec::new();
    for (&(i, p), (f, t, w)) in jobs.iter().zip(results) {
        fidelities[i][p] = f;
        t_opt[i][p] = t;
        warnings.extend(w.into_iter().map(|w| format!("Q = {:e}, protocol {}: {w}", q_grid[i], p + 1)));
    }
    warnings.dedup();
    let best_protocol: Vec<u8> = fidelities.iter().map(best_of).collect();

    let mut crossovers = Vec::new();
    for i in 1..q_grid.len() {
        let (from, to) = (best_protocol[i - 1], best_protocol[i]);
        if from == to {
            continue;
        }
        let d0 = fidelities[i - 1][from as usize - 1] - fidelities[i - 1][to as usize - 1];
        let d1 = fidelities[i][from as usize - 1] - fidelities[i][to as usize - 1];
        let (l0, l1) = (q_grid[i - 1].ln(), q_grid[i].ln());
        let frac = if d0 - d1 != 0.0 { (d0 / (d0 - d1)).clamp(0.0, 1.0) } else { 0.5 };
        crossovers.push(Crossover {
            q: (l0 + frac * (l1 - l0)).exp(),
            from,
            to,
        });
    }

    Ok(HierarchyReport {
        q_grid: q_grid.to_vec(),
        params: *params,
        fidelities,
        t_opt,
        best_protocol,
        crossovers,
        warnings,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::protocols::tests::rates;
    use crate::protocols::{run_double_rabi, run_virtual};

    const LOSSES: [f64; 3] = [100e3, 43.1e3, 1e6];

    #[test]
    fn ties_break_low() {
        assert_eq!(best_of(&[0.5, 0.5, 0.5]), 1);
        assert_eq!(best_of(&[0.4, 0.5, 0.5]), 2);
        assert_eq!(best_of(&[0.4, 0.5, 0.6]), 3);
    }

    #[test]
    fn empty_grid_rejected() {
        let opts = SimOptions::default();
        assert!(sweep(SweepFamily::DeltaI, &rates(10e6, 3e6, LOSSES), &[], &opts).is_err());
        assert!(protocol_hierarchy(&rates(3e6, 3e6, LOSSES), &[], &HierarchyParams::default(), &opts).is_err());
        assert!(protocol_hierarchy(&rates(3e6, 3e6, LOSSES), &[0.0], &HierarchyParams::default(), &opts).is_err());
    }

    #[test]
    fn singleton_matches_single_run() {
        let opts = SimOptions { n_ph: 2, ..Default::default() };
        let base = rates(10e6, 3e6, LOSSES);
        let t = sweep(SweepFamily::DeltaI, &base, &[0.8e9], &opts).unwrap();
        let r = run_double_rabi(&base, 0.8e9, &opts).unwrap();
        let s = t.points[0].summary.as_ref().unwrap();
        assert_eq!(s.f_e_max, r.f_e_max);
        assert_eq!(s.t_opt, r.t_opt);
    }

    #[test]
    fn delta_i_sweep_monotone() {
        let opts = SimOptions { n_ph: 2, ..Default::default() };
        let t = sweep(SweepFamily::DeltaI, &rates(10e6, 3e6, LOSSES), &[0.1e9, 0.5e9, 1.0e9], &opts).unwrap();
        let f: Vec<f64> = t.points.iter().map(|p| p.summary.as_ref().unwrap().f_e_end).collect();
        assert!(f[0] <= f[1] && f[1] <= f[2], "{f:?}");
    }

    #[test]
    fn delta_p_sweep_even_when_lossless() {
        let opts = SimOptions { n_ph: 2, ..Default::default() };
        let t = sweep(SweepFamily::DeltaP, &rates(3e6, 3e6, [0.0; 3]), &[-40e6, 40e6], &opts).unwrap();
        let f: Vec<f64> = t.points.iter().map(|p| p.summary.as_ref().unwrap().f_e_max).collect();
        assert!((f[0] - f[1]).abs() < 1e-9);
        let direct = run_virtual(&rates(3e6, 3e6, [0.0; 3]), 40e6, &opts).unwrap();
        assert_eq!(f[1], direct.f_e_max);
    }

    #[test]
    fn failed_points_are_recorded() {
        let opts = SimOptions { n_ph: 2, ..Default::default() };
        let t = sweep(SweepFamily::DeltaP, &rates(3e6, 3e6, [0.0; 3]), &[0.0, 60e6], &opts).unwrap();
        assert!(t.points[0].error.is_some());
        assert_eq!(t.succeeded(), 1);
        let mut buf = Vec::new();
        t.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with(SWEEP_HEADER));
        assert!(text.lines().nth(1).unwrap().contains("NaN"));
    }

    #[test]
    fn delta_g_uses_fixed_g_pe() {
        let spec = SweepFamily::DeltaG.spec(&rates(5e6, 3e6, LOSSES), 2e6);
        assert_eq!(spec.rates.g_scp, 5e6);
        assert_eq!(spec.rates.g_pe, 3e6);
        assert_eq!(spec.kind, ProtocolKind::Resonant);
    }

    #[test]
    fn hierarchy_best_is_argmax() {
        let opts = SimOptions { n_ph: 2, ..Default::default() };
        let h = protocol_hierarchy(&rates(3e6, 3e6, [100e3, 0.0, 1e6]), &[1e4, 1e6], &HierarchyParams::default(), &opts).unwrap();
        for (f, b) in h.fidelities.iter().zip(&h.best_protocol) {
            assert_eq!(*b, best_of(f));
        }
        for c in &h.crossovers {
            assert!(c.q >= 1e4 && c.q <= 1e6);
        }
        let mut buf = Vec::new();
        h.write_csv(&mut buf).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap().lines().count(), 1 + 6);
    }
}
