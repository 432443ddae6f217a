//! Atomic structure: level scheme, transition lines, hyperfine structure and
//! the dipole angular factors used by the polarizability and scattering-rate
//! sums.
//!
//! Angular momenta are doubled integers throughout (`two_j = 2j`). Level
//! energies from the data file are cm^-1; they are converted to Hz at load
//! time and stay Hz everywhere else.

use crate::angular::{wigner_3j, wigner_6j};
use crate::constants::{transition_wavelength_nm, wavenumber_cm_to_hz, AMU, CS133_TWO_I};
use std::collections::BTreeMap;

#[derive(Debug, thiserror::Error)]
pub enum AtomsError {
    #[error("data file is empty or has no `version` header")]
    MissingVersion,
    #[error("unsupported data file version {0} (this reader understands 1)")]
    UnsupportedVersion(u32),
    #[error("line {line_no}: {msg}")]
    Parse { line_no: usize, msg: String },
    #[error("duplicate level label `{0}`")]
    DuplicateLevel(String),
    #[error("transition references unknown level `{0}`")]
    UnknownLevel(String),
    #[error("level scheme has no transition lines")]
    NoLines,
    #[error(
        "line {lower}->{upper}: file wavelength {file_nm} nm disagrees with level \
         energies ({energy_nm:.3} nm) by more than 0.1%"
    )]
    WavelengthMismatch { lower: String, upper: String, file_nm: f64, energy_nm: f64 },
    #[error("line {lower}->{upper} is not ordered by energy")]
    LineNotOrdered { lower: String, upper: String },
    #[error("reduced dipole for {lower}->{upper} must be positive")]
    NonPositiveDipole { lower: String, upper: String },
    #[error("D-line anchor check failed: {0}")]
    AnchorFailed(String),
    #[error("quantum numbers invalid: {0}")]
    BadQuantumNumbers(String),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

/// One fine-structure level.
#[derive(Debug, Clone, PartialEq)]
pub struct Level {
    pub label: String,
    pub two_j: i32,
    /// Level energy above the ground state, Hz.
    pub energy_hz: f64,
    /// Magnetic-dipole hyperfine constant A, Hz.
    pub hyperfine_a_hz: f64,
    /// Electric-quadrupole hyperfine constant B, Hz.
    pub hyperfine_b_hz: f64,
}

/// One electric-dipole transition line between fine-structure levels.
#[derive(Debug, Clone, PartialEq)]
pub struct Line {
    pub lower: String,
    pub upper: String,
    pub wavelength_nm: f64,
    /// Reduced dipole matrix element |<J||d||J'>|, units of e*a0
    /// (symmetric convention, |<J||d||J'>| = |<J'||d||J>|).
    pub reduced_dipole_ea0: f64,
    pub source: String,
}

/// Full level scheme: levels, lines, nuclear spin and mass.
#[derive(Debug, Clone)]
pub struct LevelScheme {
    pub version: u32,
    pub two_i: i32,
    pub mass_kg: f64,
    levels: Vec<Level>,
    lines: Vec<Line>,
    index: BTreeMap<String, usize>,
}

impl LevelScheme {
    /// Parse a scheme from data-file text.
    pub fn parse(text: &str) -> Result<Self, AtomsError> {
        let mut version: Option<u32> = None;
        let mut two_i: Option<i32> = None;
        let mut mass_kg: Option<f64> = None;
        let mut levels: Vec<Level> = Vec::new();
        let mut lines: Vec<Line> = Vec::new();
        let mut index = BTreeMap::new();

        for (i, raw) in text.lines().enumerate() {
            let line_no = i + 1;
            let trimmed = raw.trim();
            if trimmed.is_empty() || trimmed.starts_with('#') {
                continue;
            }
            let fields: Vec<&str> = trimmed.split_whitespace().collect();
            let parse_err = |msg: String| AtomsError::Parse { line_no, msg };
            match fields[0] {
                "version" => {
                    let v = fields
                        .get(1)
                        .and_then(|s| s.parse::<u32>().ok())
                        .ok_or_else(|| parse_err("expected `version <n>`".into()))?;
                    version = Some(v);
                }
                "nuclear_spin" => {
                    let v = fields
                        .get(1)
                        .and_then(|s| parse_two_j(s))
                        .ok_or_else(|| parse_err("expected `nuclear_spin <j>`".into()))?;
                    two_i = Some(v);
                }
                "mass_amu" => {
                    let v = fields
                        .get(1)
                        .and_then(|s| s.parse::<f64>().ok())
                        .ok_or_else(|| parse_err("expected `mass_amu <u>`".into()))?;
                    mass_kg = Some(v * AMU);
                }
                "level" => {
                    if version.is_none() {
                        return Err(AtomsError::MissingVersion);
                    }
                    if fields.len() < 6 {
                        return Err(parse_err("expected `level <label> <J> <E_cm> <A_MHz> <B_MHz>`".into()));
                    }
                    let label = fields[1].to_string();
                    let two_j = parse_two_j(fields[2])
                        .ok_or_else(|| parse_err(format!("bad J `{}`", fields[2])))?;
                    let e_cm: f64 = fields[3]
                        .parse()
                        .map_err(|_| parse_err(format!("bad energy `{}`", fields[3])))?;
                    let a_mhz: f64 = fields[4]
                        .parse()
                        .map_err(|_| parse_err(format!("bad A `{}`", fields[4])))?;
                    let b_mhz: f64 = fields[5]
                        .parse()
                        .map_err(|_| parse_err(format!("bad B `{}`", fields[5])))?;
                    if index.contains_key(&label) {
                        return Err(AtomsError::DuplicateLevel(label));
                    }
                    index.insert(label.clone(), levels.len());
                    levels.push(Level {
                        label,
                        two_j,
                        energy_hz: wavenumber_cm_to_hz(e_cm),
                        hyperfine_a_hz: a_mhz * 1.0e6,
                        hyperfine_b_hz: b_mhz * 1.0e6,
                    });
                }
                "line" => {
                    if version.is_none() {
                        return Err(AtomsError::MissingVersion);
                    }
                    if fields.len() < 5 {
                        return Err(parse_err("expected `line <lower> <upper> <nm> <d_ea0> [source]`".into()));
                    }
                    let wavelength_nm: f64 = fields[3]
                        .parse()
                        .map_err(|_| parse_err(format!("bad wavelength `{}`", fields[3])))?;
                    let reduced_dipole_ea0: f64 = fields[4]
                        .parse()
                        .map_err(|_| parse_err(format!("bad dipole `{}`", fields[4])))?;
                    lines.push(Line {
                        lower: fields[1].to_string(),
                        upper: fields[2].to_string(),
                        wavelength_nm,
                        reduced_dipole_ea0,
                        source: fields.get(5).copied().unwrap_or("").to_string(),
                    });
                }
                other => {
                    return Err(parse_err(format!("unknown directive `{other}`")));
                }
            }
        }

        let version = version.ok_or(AtomsError::MissingVersion)?;
        if version != 1 {
            return Err(AtomsError::UnsupportedVersion(version));
        }
        if lines.is_empty() {
            return Err(AtomsError::NoLines);
        }

        let scheme = LevelScheme {
            version,
            two_i: two_i.unwrap_or(CS133_TWO_I),
            mass_kg: mass_kg.unwrap_or(132.905_451_961 * AMU),
            levels,
            lines,
            index,
        };
        scheme.validate()?;
        Ok(scheme)
    }

    fn validate(&self) -> Result<(), AtomsError> {
        for line in &self.lines {
            let lo = self
                .level(&line.lower)
                .ok_or_else(|| AtomsError::UnknownLevel(line.lower.clone()))?;
            let up = self
                .level(&line.upper)
                .ok_or_else(|| AtomsError::UnknownLevel(line.upper.clone()))?;
            if up.energy_hz <= lo.energy_hz {
                return Err(AtomsError::LineNotOrdered {
                    lower: line.lower.clone(),
                    upper: line.upper.clone(),
                });
            }
            if line.reduced_dipole_ea0 <= 0.0 {
                return Err(AtomsError::NonPositiveDipole {
                    lower: line.lower.clone(),
                    upper: line.upper.clone(),
                });
            }
            let energy_nm = transition_wavelength_nm(up.energy_hz - lo.energy_hz);
            if (energy_nm - line.wavelength_nm).abs() / energy_nm > 1.0e-3 {
                return Err(AtomsError::WavelengthMismatch {
                    lower: line.lower.clone(),
                    upper: line.upper.clone(),
                    file_nm: line.wavelength_nm,
                    energy_nm,
                });
            }
        }
        Ok(())
    }

    /// Parse and additionally require the cesium D-line anchors; used for the
    /// bundled data set and any file meant to describe Cs.
    pub fn parse_cs(text: &str) -> Result<Self, AtomsError> {
        let scheme = Self::parse(text)?;
        let d2 = scheme
            .line_between("6S1/2", "6P3/2")
            .ok_or_else(|| AtomsError::AnchorFailed("no 6S1/2->6P3/2 line".into()))?;
        if (d2.wavelength_nm - 852.4).abs() > 0.5 {
            return Err(AtomsError::AnchorFailed(format!(
                "D2 wavelength {} nm not near 852.4 nm",
                d2.wavelength_nm
            )));
        }
        let d1 = scheme
            .line_between("6S1/2", "6P1/2")
            .ok_or_else(|| AtomsError::AnchorFailed("no 6S1/2->6P1/2 line".into()))?;
        if (d1.wavelength_nm - 894.6).abs() > 0.5 {
            return Err(AtomsError::AnchorFailed(format!(
                "D1 wavelength {} nm not near 894.6 nm",
                d1.wavelength_nm
            )));
        }
        Ok(scheme)
    }

    /// The bundled cesium-133 data set.
    pub fn cs133() -> Self {
        Self::parse_cs(include_str!("../data/cs133.dat")).expect("bundled cs133 data is valid")
    }

    /// Load from a file path (with Cs anchor checks).
    pub fn load(path: &std::path::Path) -> Result<Self, AtomsError> {
        let text = std::fs::read_to_string(path)?;
        Self::parse_cs(&text)
    }

    pub fn level(&self, label: &str) -> Option<&Level> {
        self.index.get(label).map(|&i| &self.levels[i])
    }

    pub fn levels(&self) -> &[Level] {
        &self.levels
    }

    pub fn lines(&self) -> &[Line] {
        &self.lines
    }

    /// All lines that have `label` as one of their endpoints.
    pub fn lines_touching<'a>(&'a self, label: &'a str) -> impl Iterator<Item = &'a Line> {
        self.lines.iter().filter(move |l| l.lower == label || l.upper == label)
    }

    pub fn line_between(&self, a: &str, b: &str) -> Option<&Line> {
        self.lines
            .iter()
            .find(|l| (l.lower == a && l.upper == b) || (l.lower == b && l.upper == a))
    }

    /// Hyperfine F values (doubled) of a level.
    pub fn f_values(&self, level: &Level) -> Vec<i32> {
        let lo = (level.two_j - self.two_i).abs();
        let hi = level.two_j + self.two_i;
        (lo..=hi).step_by(2).collect()
    }

    /// Hyperfine energy offset of |level, F> from the level centroid, Hz.
    pub fn hyperfine_shift_hz(&self, level: &Level, two_f: i32) -> f64 {
        hyperfine_shift(level.hyperfine_a_hz, level.hyperfine_b_hz, self.two_i, level.two_j, two_f)
    }
}

/// Parse "7/2", "3" or "1/2" style angular momenta into doubled integers.
fn parse_two_j(s: &str) -> Option<i32> {
    if let Some((num, den)) = s.split_once('/') {
        let n: i32 = num.parse().ok()?;
        let d: i32 = den.parse().ok()?;
        if d == 2 {
            Some(n)
        } else if d == 1 {
            Some(2 * n)
        } else {
            None
        }
    } else {
        s.parse::<i32>().ok().map(|n| 2 * n)
    }
}

/// Magnetic-dipole + electric-quadrupole hyperfine shift of |J, F> from the
/// fine-structure centroid.
pub fn hyperfine_shift(a_hz: f64, b_hz: f64, two_i: i32, two_j: i32, two_f: i32) -> f64 {
    let i = two_i as f64 / 2.0;
    let j = two_j as f64 / 2.0;
    let f = two_f as f64 / 2.0;
    let k = f * (f + 1.0) - i * (i + 1.0) - j * (j + 1.0);
    let mut shift = 0.5 * a_hz * k;
    if two_i > 1 && two_j > 1 {
        let num = 1.5 * k * (k + 1.0) - 2.0 * i * (i + 1.0) * j * (j + 1.0);
        let den = 2.0 * i * (2.0 * i - 1.0) * 2.0 * j * (2.0 * j - 1.0);
        shift += b_hz * num / den;
    }
    shift
}

/// Hyperfine dipole angular factor for one fine-structure line.
///
/// Defined as `<F' m'|d_q|F m> * sqrt(2J+1) / <J||d||J'>`, so that for fixed
/// (F, m_F) the squares summed over every (F', m_F', q) reachable on the line
/// equal exactly 1. Returns 0 when a selection rule (|ΔF| <= 1, m' = m + q,
/// triangle rules) forbids the transition.
pub fn angular_factor(
    two_j: i32,
    two_jp: i32,
    two_i: i32,
    two_f: i32,
    two_mf: i32,
    two_fp: i32,
    two_mfp: i32,
    q: i32,
) -> Result<f64, AtomsError> {
    for (tj, tm, name) in [(two_f, two_mf, "F"), (two_fp, two_mfp, "F'")] {
        if tj < 0 || tm.abs() > tj || (tj - tm) % 2 != 0 {
            return Err(AtomsError::BadQuantumNumbers(format!(
                "{name}: two_f={tj}, two_m={tm}"
            )));
        }
    }
    if q.abs() > 1 {
        return Err(AtomsError::BadQuantumNumbers(format!("polarization q={q}")));
    }
    // F must couple J with I on both ends.
    for (tj, tf) in [(two_j, two_f), (two_jp, two_fp)] {
        if two_f_invalid(tj, two_i, tf) {
            return Err(AtomsError::BadQuantumNumbers(format!(
                "F={} incompatible with J={}, I={}",
                tf as f64 / 2.0,
                tj as f64 / 2.0,
                two_i as f64 / 2.0
            )));
        }
    }
    if two_mfp != two_mf + 2 * q {
        return Ok(0.0);
    }
    let three_j = wigner_3j(two_fp, 2, two_f, -two_mfp, 2 * q, two_mf);
    let six_j = wigner_6j(two_jp, two_fp, two_i, two_f, two_j, 2);
    let dim = (((two_fp + 1) * (two_f + 1) * (two_j + 1)) as f64).sqrt();
    // Full Wigner-Eckart phase (-1)^(F'-m') * (-1)^(J'+I+F+1); the relative
    // signs between intermediate sublevels drive the interference in the
    // scattering-amplitude sums, so they must be exact.
    let ph2 = (two_fp - two_mfp) + (two_jp + two_i) + two_f + 2;
    debug_assert!(ph2 % 2 == 0, "phase exponent must be an integer");
    let phase = if (ph2 / 2) % 2 == 0 { 1.0 } else { -1.0 };
    Ok(phase * dim * three_j * six_j)
}

fn two_f_invalid(two_j: i32, two_i: i32, two_f: i32) -> bool {
    two_f < (two_j - two_i).abs() || two_f > two_j + two_i || (two_j + two_i - two_f) % 2 != 0
}

/// All nonzero angular factors from a fixed (F, m_F) lower sublevel across
/// one fine-structure line, for q in {-1, 0, +1}.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AngularFactor {
    pub two_f: i32,
    pub two_mf: i32,
    pub two_fp: i32,
    pub two_mfp: i32,
    pub q: i32,
    pub value: f64,
}

pub fn line_angular_factors(
    two_j: i32,
    two_jp: i32,
    two_i: i32,
    two_f: i32,
    two_mf: i32,
) -> Result<Vec<AngularFactor>, AtomsError> {
    let mut out = Vec::new();
    let fp_lo = (two_jp - two_i).abs();
    let fp_hi = two_jp + two_i;
    for two_fp in (fp_lo..=fp_hi).step_by(2) {
        for q in -1..=1 {
            let two_mfp = two_mf + 2 * q;
            if two_mfp.abs() > two_fp {
                continue;
            }
            let value = angular_factor(two_j, two_jp, two_i, two_f, two_mf, two_fp, two_mfp, q)?;
            if value != 0.0 {
                out.push(AngularFactor { two_f, two_mf, two_fp, two_mfp, q, value });
            }
        }
    }
    Ok(out)
}
