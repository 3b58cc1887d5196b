//! Run configuration: one TOML file per run, parsed strictly.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use transduce_core::device::{CapacitanceSet, QBudget, SystemRates};
use transduce_core::dynamics::SimOptions;
use transduce_core::protocols::{HierarchyParams, ProtocolKind, SweepFamily};
use transduce_core::spin::{SpinParams, StrainCoupling};

use crate::error::{CliError, CliResult};

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub rates: Option<SystemRates>,
    pub spin: Option<SpinSection>,
    pub device: Option<DeviceSection>,
    pub protocol: Option<ProtocolSection>,
    pub sweep: Option<SweepSection>,
    #[serde(default)]
    pub sim: SimOptions,
    #[serde(default)]
    pub output: OutputSection,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SpinSection {
    pub params: SpinParams,
    pub strain: Option<StrainCoupling>,
    /// Transverse strain ε_xx − ε_yy driving the transition; the coupling
    /// coefficient is `strain.chi_eff` times this.
    pub strain_difference: Option<f64>,
    /// Full emitter-frame strain tensor, used instead of `strain_difference`.
    pub strain_tensor: Option<[[f64; 3]; 3]>,
    #[serde(default = "default_splitting")]
    pub target_splitting_hz: f64,
    pub b_grid_t: Option<Grid>,
}

fn default_splitting() -> f64 {
    4.31e9
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DeviceSection {
    pub capacitance: Option<CapacitanceSet>,
    pub q_budget: Option<QBudget>,
    pub photon_profile: Option<PathBuf>,
    pub phonon_profile: Option<PathBuf>,
    pub piezo: Option<PathBuf>,
    /// Lab-to-emitter rotation, row-major.
    pub emitter_rotation: Option<[[f64; 3]; 3]>,
    /// Overrides the profile's own frequency for photon normalization.
    pub f_sc_hz: Option<f64>,
    /// Overrides the profile's own frequency for phonon normalization.
    pub f_p_hz: Option<f64>,
    /// Reference loss for the mode-elimination table; falls back to `rates.kappa_p`.
    pub kappa_p0: Option<f64>,
    #[serde(default)]
    pub spectator_modes: Vec<SpectatorMode>,
    pub transmon: Option<TransmonSection>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SpectatorMode {
    pub label: String,
    pub g: f64,
    pub delta: f64,
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TransmonSection {
    pub e_j: f64,
    pub e_c: f64,
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum ProtocolSection {
    Resonant {
        horizon: Option<f64>,
    },
    VirtualPhonon {
        delta_p: f64,
        horizon: Option<f64>,
    },
    DoubleRabi {
        delta_i: f64,
        horizon: Option<f64>,
    },
}

impl ProtocolSection {
    pub fn kind(&self) -> ProtocolKind {
        match *self {
            ProtocolSection::Resonant { .. } => ProtocolKind::Resonant,
            ProtocolSection::VirtualPhonon { delta_p, .. } => ProtocolKind::VirtualPhonon { delta_p },
            ProtocolSection::DoubleRabi { delta_i, .. } => ProtocolKind::DoubleRabi { delta_i },
        }
    }

    pub fn horizon(&self) -> Option<f64> {
        match *self {
            ProtocolSection::Resonant { horizon }
            | ProtocolSection::VirtualPhonon { horizon, .. }
            | ProtocolSection::DoubleRabi { horizon, .. } => horizon,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "kebab-case", deny_unknown_fields)]
pub enum SweepSection {
    DeltaG {
        grid: Grid,
    },
    DeltaP {
        grid: Grid,
    },
    DeltaI {
        grid: Grid,
    },
    /// Protocols 1–3 compared over mechanical Q.
    Hierarchy {
        q_grid: Grid,
        #[serde(default)]
        params: HierarchyParams,
    },
}

impl SweepSection {
    pub fn family(&self) -> Option<SweepFamily> {
        match self {
            SweepSection::DeltaG { .. } => Some(SweepFamily::DeltaG),
            SweepSection::DeltaP { .. } => Some(SweepFamily::DeltaP),
            SweepSection::DeltaI { .. } => Some(SweepFamily::DeltaI),
            SweepSection::Hierarchy { .. } => None,
        }
    }
}

/// Either explicit values or `points` values spaced linearly or
/// logarithmically from `start` to `stop` inclusive.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Grid {
    Values(Vec<f64>),
    Range(GridRange),
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridRange {
    pub start: f64,
    pub stop: f64,
    pub points: usize,
    #[serde(default)]
    pub log: bool,
}

impl Grid {
    pub fn values(&self, key: &str) -> CliResult<Vec<f64>> {
        let v = match self {
            Grid::Values(v) => v.clone(),
            Grid::Range(r) => {
                if r.points == 0 {
                    Vec::new()
                } else if r.points == 1 {
                    vec![r.start]
                } else {
                    if r.log && !(r.start > 0.0 && r.stop > 0.0) {
                        return Err(CliError::config(format!("{key}: log grid needs positive bounds")));
                    }
                    let n = (r.points - 1) as f64;
                    (0..r.points)
                        .map(|k| {
                            let u = k as f64 / n;
                            if r.log {
                                let (a, b) = (r.start.log10(), r.stop.log10());
                                10f64.powf(a + u * (b - a))
                            } else {
                                r.start + u * (r.stop - r.start)
                            }
                        })
                        .collect()
                }
            }
        };
        if v.is_empty() {
            return Err(CliError::config(format!("{key} is empty")));
        }
        if let Some(x) = v.iter().find(|x| !x.is_finite()) {
            return Err(CliError::config(format!("{key} contains non-finite value {x}")));
        }
        Ok(v)
    }
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSection {
    /// Relative to the working directory; `--out` takes precedence.
    pub dir: Option<PathBuf>,
}

impl RunConfig {
    /// Parses, resolves file paths against the config's directory and checks
    /// every section that is present. Nothing is computed here.
    pub fn load(path: &Path) -> CliResult<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| match e.kind() {
            std::io::ErrorKind::NotFound => CliError::config(format!("config file not found: {}", path.display())),
            _ => CliError::io(path, e),
        })?;
        let mut cfg = Self::parse(&text)?;
        let base = path.parent().unwrap_or(Path::new("."));
        cfg.resolve_paths(base)?;
        Ok(cfg)
    }

    pub fn parse(text: &str) -> CliResult<Self> {
        let cfg: RunConfig = toml::from_str(text).map_err(|e| CliError::config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    fn validate(&self) -> CliResult<()> {
        let wrap = |section: &str, r: transduce_core::Result<()>| {
            r.map_err(|e| CliError::config(format!("[{section}] {e}")))
        };
        if let Some(r) = &self.rates {
            wrap("rates", r.validate())?;
        }
        wrap("sim", self.sim.validate())?;
        if let Some(s) = &self.spin {
            wrap("spin", s.params.validate())?;
            if let Some(st) = &s.strain {
                wrap("spin.strain", st.validate())?;
            }
            if s.strain_difference.is_some() && s.strain_tensor.is_some() {
                return Err(CliError::config(
                    "[spin] give either strain_difference or strain_tensor, not both",
                ));
            }
        }
        if let Some(d) = &self.device {
            if let Some(c) = &d.capacitance {
                wrap("device.capacitance", c.validate())?;
            }
            if let Some(q) = &d.q_budget {
                wrap("device.q_budget", q.validate())?;
            }
        }
        if let Some(p) = &self.protocol {
            if let Some(h) = p.horizon() {
                if !(h.is_finite() && h > 0.0) {
                    return Err(CliError::config(format!("[protocol] horizon must be > 0, got {h}")));
                }
            }
        }
        Ok(())
    }

    fn resolve_paths(&mut self, base: &Path) -> CliResult<()> {
        let Some(d) = &mut self.device else {
            return Ok(());
        };
        for (key, slot) in [
            ("device.photon_profile", &mut d.photon_profile),
            ("device.phonon_profile", &mut d.phonon_profile),
            ("device.piezo", &mut d.piezo),
        ] {
            if let Some(p) = slot {
                let full = base.join(&*p);
                if !full.is_file() {
                    return Err(CliError::config(format!("{key}: file not found: {}", full.display())));
                }
                *p = full;
            }
        }
        Ok(())
    }

    pub fn require_rates(&self) -> CliResult<&SystemRates> {
        self.rates.as_ref().ok_or_else(|| CliError::config("missing [rates] section"))
    }

    pub fn require_device(&self) -> CliResult<&DeviceSection> {
        self.device.as_ref().ok_or_else(|| CliError::config("missing [device] section"))
    }

    pub fn require_spin(&self) -> CliResult<&SpinSection> {
        self.spin.as_ref().ok_or_else(|| CliError::config("missing [spin] section"))
    }
}

pub fn require<'a, T>(slot: &'a Option<T>, key: &str) -> CliResult<&'a T> {
    slot.as_ref().ok_or_else(|| CliError::config(format!("missing required key {key}")))
}
