//! Discretized field profiles and the piezoelectric tensor, with their text formats.
//!
//! Field-profile file layout:
//!
//! ```text
//! # transduce field-profile v1
//! # source = <free text>            (optional)
//! # frequency_hz = 4.31e9
//! # units = SI
//! # voigt = engineering
//! # cells = <N>
//! # columns = x y z volume re_ex im_ex re_ey im_ey re_ez im_ez s1 s2 s3 s4 s5 s6 compliance_weight permittivity
//! <N whitespace-separated records of 18 numbers>
//! ```
//!
//! Strain is Voigt with engineering shear (s4 = 2ε_yz, s5 = 2ε_zx, s6 = 2ε_xy).
//! Piezo-tensor files hold 3 rows × 6 columns; `#` lines are comments, and a
//! `# voigt = …` line, if present, must say `engineering`.

use std::io::{BufRead, Write};
use std::path::Path;

use nalgebra::{Matrix3, SMatrix, SVector, Vector3};
use num_complex::Complex64;

use crate::error::{Error, Result};

pub const PROFILE_MAGIC: &str = "# transduce field-profile v1";
pub const PROFILE_COLUMNS: &str = "x y z volume re_ex im_ex re_ey im_ey re_ez im_ez s1 s2 s3 s4 s5 s6 compliance_weight permittivity";
const N_COLUMNS: usize = 18;

pub type Voigt = SVector<Complex64, 6>;

#[derive(Debug, Clone, PartialEq)]
pub struct FieldCell {
    /// Cell centre (m).
    pub position: Vector3<f64>,
    /// Cell volume (m³).
    pub volume: f64,
    /// Electric field (V/m).
    pub e_field: Vector3<Complex64>,
    /// Voigt strain, engineering shear.
    pub strain: Voigt,
    /// s(r)|T(r)|² integrand of the strain-energy normalization.
    pub compliance_weight: f64,
    /// Permittivity (F/m).
    pub permittivity: f64,
}

impl FieldCell {
    /// Symmetric strain tensor with tensor (not engineering) shear components.
    pub fn strain_tensor(&self) -> Matrix3<Complex64> {
        let s = &self.strain;
        let h = Complex64::new(0.5, 0.0);
        Matrix3::new(
            s[0], s[5] * h, s[4] * h,
            s[5] * h, s[1], s[3] * h,
            s[4] * h, s[3] * h, s[2],
        )
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FieldProfile {
    pub source: String,
    /// Mode frequency the profile was exported at (Hz).
    pub frequency: f64,
    pub cells: Vec<FieldCell>,
}

impl FieldProfile {
    pub fn validate(&self) -> Result<()> {
        if self.cells.is_empty() {
            return Err(Error::invalid("field profile has no cells"));
        }
        if !(self.frequency.is_finite() && self.frequency > 0.0) {
            return Err(Error::invalid(format!(
                "profile frequency must be > 0, got {}",
                self.frequency
            )));
        }
        for (i, c) in self.cells.iter().enumerate() {
            if !(c.volume.is_finite() && c.volume > 0.0) {
                return Err(Error::invalid(format!("cell {i}: volume must be > 0")));
            }
            let finite = c.position.iter().all(|v| v.is_finite())
                && c.e_field.iter().all(|v| v.re.is_finite() && v.im.is_finite())
                && c.strain.iter().all(|v| v.re.is_finite() && v.im.is_finite())
                && c.compliance_weight.is_finite()
                && c.permittivity.is_finite();
            if !finite {
                return Err(Error::invalid(format!("cell {i}: non-finite entry")));
            }
        }
        Ok(())
    }

    /// Σ volume · compliance_weight.
    pub fn strain_energy_integral(&self) -> f64 {
        self.cells.iter().map(|c| c.volume * c.compliance_weight).sum()
    }

    pub fn read(path: &Path) -> Result<Self> {
        let file = std::fs::File::open(path)?;
        Self::parse(std::io::BufReader::new(file), &path.display().to_string())
    }

    pub fn parse(reader: impl BufRead, origin: &str) -> Result<Self> {
        let err = |line: usize, reason: String| Error::Parse {
            path: origin.to_string(),
            line,
            reason,
        };
        let mut source = String::new();
        let mut frequency = None;
        let mut units = None;
        let mut voigt = None;
        let mut n_cells: Option<usize> = None;
        let mut columns = None;
        let mut cells = Vec::new();
        let mut saw_magic = false;

        for (idx, line) in reader.lines().enumerate() {
            let lineno = idx + 1;
            let line = line?;
            let trimmed = line.trim();
            if !saw_magic {
                if trimmed != PROFILE_MAGIC {
                    return Err(err(lineno, format!("expected `{PROFILE_MAGIC}`")));
                }
                saw_magic = true;
                continue;
            }
            if trimmed.is_empty() {
                continue;
            }
            if let Some(header) = trimmed.strip_prefix('#') {
                if !cells.is_empty() {
                    return Err(err(lineno, "header line after cell records".into()));
                }
                let (key, value) = header
                    .split_once('=')
                    .ok_or_else(|| err(lineno, "header lines must be `# key = value`".into()))?;
                let (key, value) = (key.trim(), value.trim());
                let number = |v: &str| {
                    v.parse::<f64>()
                        .map_err(|e| err(lineno, format!("{key}: {e}")))
                };
                match key {
                    "source" => source = value.to_string(),
                    "frequency_hz" => frequency = Some(number(value)?),
                    "units" => units = Some(value.to_string()),
                    "voigt" => voigt = Some(value.to_string()),
                    "cells" => {
                        n_cells = Some(
                            value
                                .parse()
                                .map_err(|e| err(lineno, format!("cells: {e}")))?,
                        )
                    }
                    "columns" => columns = Some(value.split_whitespace().collect::<Vec<_>>().join(" ")),
                    other => return Err(err(lineno, format!("unknown header `{other}`"))),
                }
                continue;
            }
            let values: Vec<f64> = trimmed
                .split_whitespace()
                .map(|t| t.parse::<f64>().map_err(|e| err(lineno, format!("`{t}`: {e}"))))
                .collect::<Result<_>>()?;
            if values.len() != N_COLUMNS {
                return Err(err(
                    lineno,
                    format!("expected {N_COLUMNS} columns, found {}", values.len()),
                ));
            }
            let v = |i: usize| values[i];
            let cx = |i: usize| Complex64::new(values[i], values[i + 1]);
            cells.push(FieldCell {
                position: Vector3::new(v(0), v(1), v(2)),
                volume: v(3),
                e_field: Vector3::new(cx(4), cx(6), cx(8)),
                strain: Voigt::from_iterator((10..16).map(|i| Complex64::new(values[i], 0.0))),
                compliance_weight: v(16),
                permittivity: v(17),
            });
        }

        if !saw_magic {
            return Err(err(1, "empty file".into()));
        }
        let missing = |k: &str| err(0, format!("missing header `{k}`"));
        let frequency = frequency.ok_or_else(|| missing("frequency_hz"))?;
        match units.as_deref() {
            Some("SI") => {}
            Some(u) => return Err(err(0, format!("unsupported units `{u}` (only SI)"))),
            None => return Err(missing("units")),
        }
        match voigt.as_deref() {
            Some("engineering") => {}
            Some(v) => {
                return Err(err(
                    0,
                    format!("unsupported Voigt convention `{v}` (only engineering shear)"),
                ))
            }
            None => return Err(missing("voigt")),
        }
        match columns.as_deref() {
            Some(c) if c == PROFILE_COLUMNS => {}
            Some(c) => return Err(err(0, format!("unexpected column layout `{c}`"))),
            None => return Err(missing("columns")),
        }
        let n_cells = n_cells.ok_or_else(|| missing("cells"))?;
        if n_cells != cells.len() {
            return Err(err(
                0,
                format!("header declares {n_cells} cells, found {}", cells.len()),
            ));
        }
        let profile = FieldProfile {
            source,
            frequency,
            cells,
        };
        profile.validate()?;
        Ok(profile)
    }

    /// Writes the text format. Strains must be real.
    pub fn write(&self, mut out: impl Write) -> Result<()> {
        if self
            .cells
            .iter()
            .any(|c| c.strain.iter().any(|s| s.im != 0.0))
        {
            return Err(Error::invalid("file format stores real strain only"));
        }
        writeln!(out, "{PROFILE_MAGIC}")?;
        if !self.source.is_empty() {
            writeln!(out, "# source = {}", self.source)?;
        }
        writeln!(out, "# frequency_hz = {:e}", self.frequency)?;
        writeln!(out, "# units = SI")?;
        writeln!(out, "# voigt = engineering")?;
        writeln!(out, "# cells = {}", self.cells.len())?;
        writeln!(out, "# columns = {PROFILE_COLUMNS}")?;
        for c in &self.cells {
            let mut row: Vec<f64> = vec![c.position.x, c.position.y, c.position.z, c.volume];
            for e in c.e_field.iter() {
                row.extend([e.re, e.im]);
            }
            row.extend(c.strain.iter().map(|s| s.re));
            row.extend([c.compliance_weight, c.permittivity]);
            let line: Vec<String> = row.iter().map(|v| format!("{v:e}")).collect();
            writeln!(out, "{}", line.join(" "))?;
        }
        Ok(())
    }
}

/// Piezoelectric coefficients d_ij (3 × 6, Voigt, engineering shear).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PiezoTensor {
    pub d: SMatrix<f64, 3, 6>,
}

impl PiezoTensor {
    pub fn new(d: SMatrix<f64, 3, 6>) -> Result<Self> {
        if d.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("piezo tensor has non-finite entries"));
        }
        Ok(Self { d })
    }

    pub fn read(path: &Path) -> Result<Self> {
        let file = std::fs::File::open(path)?;
        Self::parse(std::io::BufReader::new(file), &path.display().to_string())
    }

    pub fn parse(reader: impl BufRead, origin: &str) -> Result<Self> {
        let err = |line: usize, reason: String| Error::Parse {
            path: origin.to_string(),
            line,
            reason,
        };
        let mut rows: Vec<Vec<f64>> = Vec::new();
        for (idx, line) in reader.lines().enumerate() {
            let lineno = idx + 1;
            let line = line?;
            let trimmed = line.trim();
            if trimmed.is_empty() {
                continue;
            }
            if let Some(comment) = trimmed.strip_prefix('#') {
                if let Some((key, value)) = comment.split_once('=') {
                    if key.trim() == "voigt" && value.trim() != "engineering" {
                        return Err(err(
                            lineno,
                            format!("unsupported Voigt convention `{}`", value.trim()),
                        ));
                    }
                }
                continue;
            }
            let row: Vec<f64> = trimmed
                .split(|c: char| c.is_whitespace() || c == ',')
                .filter(|t| !t.is_empty())
                .map(|t| t.parse::<f64>().map_err(|e| err(lineno, format!("`{t}`: {e}"))))
                .collect::<Result<_>>()?;
            if row.len() != 6 {
                return Err(err(lineno, format!("expected 6 columns, found {}", row.len())));
            }
            rows.push(row);
        }
        if rows.len() != 3 {
            return Err(err(0, format!("expected 3 rows, found {}", rows.len())));
        }
        let d = SMatrix::<f64, 3, 6>::from_fn(|i, j| rows[i][j]);
        Self::new(d)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> FieldProfile {
        FieldProfile {
            source: "unit".into(),
            frequency: 4.31e9,
            cells: vec![FieldCell {
                position: Vector3::new(0.0, 1e-7, -2.5e-7),
                volume: 1e-21,
                e_field: Vector3::new(
                    Complex64::new(1.0, -2.0),
                    Complex64::new(0.0, 0.5),
                    Complex64::new(3e5, 0.0),
                ),
                strain: Voigt::from_iterator([1e-9, -1e-9, 0.0, 0.0, 2e-10, 0.0].map(|v| Complex64::new(v, 0.0))),
                compliance_weight: 3.2e-3,
                permittivity: 8.854e-12 * 10.0,
            }],
        }
    }

    #[test]
    fn profile_round_trip() {
        let p = sample();
        let mut buf = Vec::new();
        p.write(&mut buf).unwrap();
        let q = FieldProfile::parse(buf.as_slice(), "mem").unwrap();
        assert_eq!(p, q);
    }

    #[test]
    fn unknown_header_rejected() {
        let mut buf = Vec::new();
        sample().write(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap().replace("# units = SI", "# units = SI\n# mesh = fine");
        let e = FieldProfile::parse(text.as_bytes(), "mem").unwrap_err();
        assert!(e.to_string().contains("unknown header `mesh`"), "{e}");
    }

    #[test]
    fn tensor_shear_convention_rejected() {
        let mut buf = Vec::new();
        sample().write(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap().replace("voigt = engineering", "voigt = tensor");
        assert!(FieldProfile::parse(text.as_bytes(), "mem").is_err());
    }

    #[test]
    fn cell_count_must_match() {
        let mut buf = Vec::new();
        sample().write(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap().replace("# cells = 1", "# cells = 2");
        assert!(FieldProfile::parse(text.as_bytes(), "mem").is_err());
    }

    #[test]
    fn strain_tensor_halves_shear() {
        let c = &sample().cells[0];
        let t = c.strain_tensor();
        assert_eq!(t[(0, 2)].re, 1e-10);
        assert_eq!(t[(2, 0)].re, 1e-10);
        assert_eq!(t[(0, 0)].re, 1e-9);
    }

    #[test]
    fn piezo_parse() {
        let text = "# voigt = engineering\n0 0 0 0 -0.2 0\n0,0,0,-0.2,0,0\n0.1 0.1 0.9 0 0 0\n";
        let p = PiezoTensor::parse(text.as_bytes(), "mem").unwrap();
        assert_eq!(p.d[(2, 2)], 0.9);
        assert_eq!(p.d[(1, 3)], -0.2);
        assert!(PiezoTensor::parse("1 2 3\n".as_bytes(), "mem").is_err());
        assert!(PiezoTensor::parse("# voigt = tensor\n".as_bytes(), "mem").is_err());
    }
}
