use std::io::Write;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::qops::{DensityMatrix, Operator};

pub const TRAJECTORY_HEADER: &str = "t_s,P_sc,P_p,P_e,F_sc,F_p,F_e,trace_err";

/// Single-excitation product states |100⟩, |010⟩, |001⟩.
pub const STANDARD_TARGETS: [[usize; 3]; 3] = [[1, 0, 0], [0, 1, 0], [0, 0, 1]];

#[derive(Debug, Clone, Serialize)]
pub struct Trajectory {
    pub times: Vec<f64>,
    /// (P_sc, P_p, P_e) per sample.
    pub populations: Vec<[f64; 3]>,
    pub targets: Vec<Vec<usize>>,
    /// ⟨target|ρ|target⟩ per sample, one column per target.
    pub fidelities: Vec<Vec<f64>>,
    pub trace_errors: Vec<f64>,
    /// max |tr ρ − 1| over samples.
    pub trace_error: f64,
    /// Most negative eigenvalue seen at any sample.
    pub min_eigenvalue: f64,
    #[serde(skip)]
    pub states: Vec<DensityMatrix>,
}

impl Trajectory {
    pub(crate) fn empty(targets: Vec<Vec<usize>>) -> Self {
        Self {
            times: Vec::new(),
            populations: Vec::new(),
            targets,
            fidelities: Vec::new(),
            trace_errors: Vec::new(),
            trace_error: 0.0,
            min_eigenvalue: f64::INFINITY,
            states: Vec::new(),
        }
    }

    pub(crate) fn record(&mut self, t: f64, rho: &DensityMatrix, numbers: &[Operator; 3], target_idx: &[usize]) {
        let err = rho.trace_error();
        self.times.push(t);
        self.populations.push(numbers.each_ref().map(|n| rho.expectation(n)));
        self.fidelities
            .push(target_idx.iter().map(|&i| rho.matrix()[(i, i)].re).collect());
        self.trace_errors.push(err);
        self.trace_error = self.trace_error.max(err);
        self.min_eigenvalue = self.min_eigenvalue.min(rho.min_eigenvalue());
        self.states.push(rho.clone());
    }

    /// Inserts an extra sample keeping times strictly increasing.
    pub(crate) fn insert(&mut self, t: f64, rho: &DensityMatrix, numbers: &[Operator; 3], target_idx: &[usize]) -> Result<usize> {
        let pos = self.times.partition_point(|&x| x < t);
        if self.times.get(pos) == Some(&t) {
            return Ok(pos);
        }
        let mut one = Trajectory::empty(self.targets.clone());
        one.record(t, rho, numbers, target_idx);
        self.times.insert(pos, t);
        self.populations.insert(pos, one.populations[0]);
        self.fidelities.insert(pos, one.fidelities.swap_remove(0));
        self.trace_errors.insert(pos, one.trace_errors[0]);
        self.trace_error = self.trace_error.max(one.trace_error);
        self.min_eigenvalue = self.min_eigenvalue.min(one.min_eigenvalue);
        self.states.insert(pos, one.states.swap_remove(0));
        if self.trace_error > 1e-8 {
            return Err(Error::NumericalIntegrity(format!("trace drifted by {:e}", self.trace_error)));
        }
        Ok(pos)
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn fidelity_column(&self, target: usize) -> Vec<f64> {
        self.fidelities.iter().map(|row| row[target]).collect()
    }

    /// Index of the sample with the largest fidelity for `target`; earliest on ties.
    pub fn argmax(&self, target: usize) -> Option<usize> {
        let mut best: Option<(usize, f64)> = None;
        for (i, row) in self.fidelities.iter().enumerate() {
            if best.is_none_or(|(_, v)| row[target] > v) {
                best = Some((i, row[target]));
            }
        }
        best.map(|(i, _)| i)
    }

    /// Writes the fixed-header CSV; targets must be the standard three.
    pub fn write_csv(&self, mut out: impl Write) -> Result<()> {
        let standard = self.targets.len() == 3
            && self
                .targets
                .iter()
                .zip(STANDARD_TARGETS)
                .all(|(t, s)| t.as_slice() == s);
        if !standard {
            return Err(Error::invalid(
                "trajectory CSV needs the |100>, |010>, |001> fidelity targets",
            ));
        }
        writeln!(out, "{TRAJECTORY_HEADER}")?;
        for i in 0..self.len() {
            let p = self.populations[i];
            let f = &self.fidelities[i];
            writeln!(
                out,
                "{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e}",
                self.times[i], p[0], p[1], p[2], f[0], f[1], f[2], self.trace_errors[i]
            )?;
        }
        Ok(())
    }
}
