//! AC-Stark shifts of cesium hyperfine sublevels in linearly polarized light,
//! magic-wavelength location, and the intracavity dipole-trap geometry built
//! on top of them.
//!
//! Shifts are second-order sums over the tabulated dipole lines with both
//! rotating and counter-rotating denominators kept, so one routine serves from
//! the quasi-static regime out past the trap resonances. Polarization is fixed
//! linear (π) with the quantization axis along it; elliptical fields matter
//! only for optical pumping and live in the scattering-rate module.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::atoms::{angular_factor, AtomsError, Level, LevelScheme};
use crate::constants::{
    omega_of_wavelength_nm, C_LIGHT, EA0, EPSILON_0, H_PLANCK, HBAR, K_BOLTZMANN,
};

pub const GROUND: &str = "6S1/2";
pub const EXCITED_D2: &str = "6P3/2";

/// Half-width of the region around each resonance component inside which
/// trap-wavelength scans refuse to evaluate.
pub const POLE_EXCLUSION_NM: f64 = 0.01;

#[derive(Debug, Error)]
pub enum StarkError {
    #[error("unknown level `{0}`")]
    UnknownLevel(String),
    #[error("no hyperfine sublevel F={f}, m_F={m} on {level}")]
    BadSublevel { level: String, f: f64, m: f64 },
    #[error("{0}")]
    BadArgument(String),
    #[error(
        "wavelength range touches the {lower}-{upper} resonance at {resonance_nm:.4} nm \
         (exclusion ±{exclusion_nm} nm)"
    )]
    NearResonance { lower: String, upper: String, resonance_nm: f64, exclusion_nm: f64 },
    #[error("no crossing of the matched-shift condition in [{lo_nm} nm, {hi_nm} nm]")]
    NoCrossing { lo_nm: f64, hi_nm: f64 },
    #[error("{count} crossings in [{lo_nm} nm, {hi_nm} nm]; narrow the window to isolate one")]
    AmbiguousCrossing { lo_nm: f64, hi_nm: f64, count: usize },
    #[error(transparent)]
    Atoms(#[from] AtomsError),
}

/// How detunings are taken when summing over intermediate states.
///
/// `FineStructure` measures every detuning from the fine-structure centroid of
/// the partner level; in this mode all sublevels of a J = 1/2 level shift
/// identically. `HyperfineResolved` keeps the hyperfine offsets of both the
/// state and each intermediate component in the denominators.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum DetuningMode {
    FineStructure,
    HyperfineResolved,
}

fn check_sublevel(
    scheme: &LevelScheme,
    level: &Level,
    two_f: i32,
    two_mf: i32,
) -> Result<(), StarkError> {
    let ok = scheme.f_values(level).contains(&two_f)
        && two_mf.abs() <= two_f
        && (two_f - two_mf) % 2 == 0;
    if ok {
        Ok(())
    } else {
        Err(StarkError::BadSublevel {
            level: level.label.clone(),
            f: two_f as f64 / 2.0,
            m: two_mf as f64 / 2.0,
        })
    }
}

/// AC-Stark shift (Hz, signed; trapping is negative) of one hyperfine
/// sublevel in π-polarized light of the given intensity (W/m²).
pub fn sublevel_shift_hz(
    scheme: &LevelScheme,
    level_label: &str,
    two_f: i32,
    two_mf: i32,
    wavelength_nm: f64,
    intensity_w_m2: f64,
    mode: DetuningMode,
) -> Result<f64, StarkError> {
    let level = scheme
        .level(level_label)
        .ok_or_else(|| StarkError::UnknownLevel(level_label.to_string()))?;
    check_sublevel(scheme, level, two_f, two_mf)?;
    if wavelength_nm <= 0.0 {
        return Err(StarkError::BadArgument(format!(
            "wavelength must be positive, got {wavelength_nm} nm"
        )));
    }
    if intensity_w_m2 < 0.0 {
        return Err(StarkError::BadArgument(format!(
            "intensity must be nonnegative, got {intensity_w_m2} W/m^2"
        )));
    }

    let omega = omega_of_wavelength_nm(wavelength_nm);
    let e0_sq = 2.0 * intensity_w_m2 / (EPSILON_0 * C_LIGHT);
    let mut sum = 0.0;
    for line in scheme.lines_touching(level_label) {
        let partner_label = if line.lower == level_label { &line.upper } else { &line.lower };
        let partner = scheme.level(partner_label).expect("line endpoints are validated on parse");
        // |<b|d_z|a>|^2 = factor^2 * d_red^2 / (2J+1), J of the state itself.
        let d_sq = (line.reduced_dipole_ea0 * EA0).powi(2) / (level.two_j + 1) as f64;
        for &two_fb in &scheme.f_values(partner) {
            // π light preserves m_F; manifolds too small to hold it don't couple.
            if two_mf.abs() > two_fb {
                continue;
            }
            let af = angular_factor(
                level.two_j,
                partner.two_j,
                scheme.two_i,
                two_f,
                two_mf,
                two_fb,
                two_mf,
                0,
            )?;
            if af == 0.0 {
                continue;
            }
            let delta_e_hz = match mode {
                DetuningMode::FineStructure => partner.energy_hz - level.energy_hz,
                DetuningMode::HyperfineResolved => {
                    (partner.energy_hz + scheme.hyperfine_shift_hz(partner, two_fb))
                        - (level.energy_hz + scheme.hyperfine_shift_hz(level, two_f))
                }
            };
            // 1/(ω_ba−ω) + 1/(ω_ba+ω); ω_ba < 0 for downward partners, which
            // flips the sign of the whole term as it must.
            let omega_ba = 2.0 * std::f64::consts::PI * delta_e_hz;
            let disp = 2.0 * omega_ba / (omega_ba * omega_ba - omega * omega);
            sum += af * af * d_sq * disp;
        }
    }
    Ok(-(e0_sq / 4.0) * sum / HBAR / H_PLANCK)
}

/// Ground-state (6S1/2) shift; in `FineStructure` mode it is the scalar shift
/// shared by all ground sublevels.
pub fn ground_shift_hz(
    scheme: &LevelScheme,
    wavelength_nm: f64,
    intensity_w_m2: f64,
    mode: DetuningMode,
) -> Result<f64, StarkError> {
    sublevel_shift_hz(scheme, GROUND, 8, 0, wavelength_nm, intensity_w_m2, mode)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SublevelShift {
    pub two_f: i32,
    pub two_mf: i32,
    pub shift_hz: f64,
    /// Shift relative to the ground shift at the same wavelength and
    /// intensity; 1 means state-insensitive.
    pub normalized: f64,
}

/// Shifts of every hyperfine sublevel of `level_label`, with their ratios to
/// the ground shift.
pub fn manifold_shifts(
    scheme: &LevelScheme,
    level_label: &str,
    wavelength_nm: f64,
    intensity_w_m2: f64,
    mode: DetuningMode,
) -> Result<Vec<SublevelShift>, StarkError> {
    let level = scheme
        .level(level_label)
        .ok_or_else(|| StarkError::UnknownLevel(level_label.to_string()))?;
    // Shifts are exactly linear in intensity, so the ratio is taken at unit
    // intensity and stays finite even when the requested intensity is zero.
    let ground_per_unit = ground_shift_hz(scheme, wavelength_nm, 1.0, mode)?;
    let mut out = Vec::new();
    for &two_f in &scheme.f_values(level) {
        for two_mf in (-two_f..=two_f).step_by(2) {
            let per_unit = sublevel_shift_hz(
                scheme,
                level_label,
                two_f,
                two_mf,
                wavelength_nm,
                1.0,
                mode,
            )?;
            out.push(SublevelShift {
                two_f,
                two_mf,
                shift_hz: per_unit * intensity_w_m2,
                normalized: per_unit / ground_per_unit,
            });
        }
    }
    Ok(out)
}

/// Mean of the normalized shifts over one F manifold (π light leaves ±m
/// degenerate, so this is also the mean over distinct |m|).
pub fn manifold_mean_normalized(
    scheme: &LevelScheme,
    level_label: &str,
    two_f: i32,
    wavelength_nm: f64,
    mode: DetuningMode,
) -> Result<f64, StarkError> {
    let i_ref = 1.0e9;
    let ground = ground_shift_hz(scheme, wavelength_nm, i_ref, mode)?;
    let mut acc = 0.0;
    let mut n = 0;
    for two_mf in (-two_f..=two_f).step_by(2) {
        acc += sublevel_shift_hz(scheme, level_label, two_f, two_mf, wavelength_nm, i_ref, mode)?;
        n += 1;
    }
    Ok(acc / (n as f64) / ground)
}

/// Which matched-shift condition defines the magic wavelength.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum MagicCriterion {
    /// Mean shift of the 6P3/2 F'=4 manifold equals the ground shift.
    MeanF4,
    /// One particular 6P3/2 sublevel equals the ground shift.
    Sublevel { two_f: i32, two_mf: i32 },
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct MagicPoint {
    pub wavelength_nm: f64,
    /// Ground shift per unit intensity at the crossing, Hz/(W/m²).
    pub ground_shift_per_intensity: f64,
    /// Extremes of the normalized F'=4 sublevel shifts at the crossing.
    pub normalized_min: f64,
    pub normalized_max: f64,
}

/// All resonance components of lines touching `labels` that fall inside
/// [lo_nm, hi_nm] (padded by the pole exclusion).
fn resonance_in_window(
    scheme: &LevelScheme,
    labels: &[&str],
    lo_nm: f64,
    hi_nm: f64,
    mode: DetuningMode,
) -> Option<(String, String, f64)> {
    let lo = lo_nm - POLE_EXCLUSION_NM;
    let hi = hi_nm + POLE_EXCLUSION_NM;
    for label in labels {
        for line in scheme.lines_touching(label) {
            let lower = scheme.level(&line.lower).expect("validated on parse");
            let upper = scheme.level(&line.upper).expect("validated on parse");
            let mut offsets = vec![(0.0, 0.0)];
            if mode == DetuningMode::HyperfineResolved {
                offsets.clear();
                for &two_fl in &scheme.f_values(lower) {
                    for &two_fu in &scheme.f_values(upper) {
                        offsets.push((
                            scheme.hyperfine_shift_hz(lower, two_fl),
                            scheme.hyperfine_shift_hz(upper, two_fu),
                        ));
                    }
                }
            }
            for (off_l, off_u) in offsets {
                let de = (upper.energy_hz + off_u) - (lower.energy_hz + off_l);
                let lambda = 1e9 * C_LIGHT / de;
                if lambda >= lo && lambda <= hi {
                    return Some((line.lower.clone(), line.upper.clone(), lambda));
                }
            }
        }
    }
    None
}

/// Error when any resonance of lines touching `labels` falls inside the
/// pole-padded window [lo_nm, hi_nm]; dispersive formulas diverge there.
pub fn check_clear_of_resonances(
    scheme: &LevelScheme,
    labels: &[&str],
    lo_nm: f64,
    hi_nm: f64,
    mode: DetuningMode,
) -> Result<(), StarkError> {
    if let Some((lower, upper, resonance_nm)) =
        resonance_in_window(scheme, labels, lo_nm, hi_nm, mode)
    {
        return Err(StarkError::NearResonance {
            lower,
            upper,
            resonance_nm,
            exclusion_nm: POLE_EXCLUSION_NM,
        });
    }
    Ok(())
}

/// Count sign changes of `f` on a uniform grid and return the bracketing
/// interval when there is exactly one.
fn bracket_single_root(
    f: &mut dyn FnMut(f64) -> Result<f64, StarkError>,
    lo: f64,
    hi: f64,
    n: usize,
) -> Result<Result<(f64, f64), usize>, StarkError> {
    let mut brackets = Vec::new();
    let mut prev_x = lo;
    let mut prev_y = f(lo)?;
    for i in 1..=n {
        let x = lo + (hi - lo) * (i as f64) / (n as f64);
        let y = f(x)?;
        if prev_y == 0.0 || prev_y.signum() != y.signum() {
            brackets.push((prev_x, x));
        }
        prev_x = x;
        prev_y = y;
    }
    if brackets.len() == 1 {
        Ok(Ok(brackets[0]))
    } else {
        Ok(Err(brackets.len()))
    }
}

/// Locate the magic wavelength inside [lo_nm, hi_nm] by grid scan plus
/// bisection. Errors if the window touches a resonance, if the condition
/// never crosses zero, or if it crosses more than once.
pub fn find_magic_wavelength(
    scheme: &LevelScheme,
    lo_nm: f64,
    hi_nm: f64,
    criterion: MagicCriterion,
    mode: DetuningMode,
) -> Result<MagicPoint, StarkError> {
    if !(lo_nm > 0.0 && hi_nm > lo_nm) {
        return Err(StarkError::BadArgument(format!(
            "need 0 < lo < hi, got [{lo_nm}, {hi_nm}] nm"
        )));
    }
    check_clear_of_resonances(scheme, &[GROUND, EXCITED_D2], lo_nm, hi_nm, mode)?;

    let i_ref = 1.0e9;
    let mut f = |lambda: f64| -> Result<f64, StarkError> {
        let ground = ground_shift_hz(scheme, lambda, i_ref, mode)?;
        let excited = match criterion {
            MagicCriterion::MeanF4 => {
                let mut acc = 0.0;
                for two_mf in (-8..=8).step_by(2) {
                    acc +=
                        sublevel_shift_hz(scheme, EXCITED_D2, 8, two_mf, lambda, i_ref, mode)?;
                }
                acc / 9.0
            }
            MagicCriterion::Sublevel { two_f, two_mf } => {
                sublevel_shift_hz(scheme, EXCITED_D2, two_f, two_mf, lambda, i_ref, mode)?
            }
        };
        Ok(excited / ground - 1.0)
    };

    let n = (((hi_nm - lo_nm) / 0.05).ceil() as usize).max(80);
    let (mut a, mut b) = match bracket_single_root(&mut f, lo_nm, hi_nm, n)? {
        Ok(pair) => pair,
        Err(0) => return Err(StarkError::NoCrossing { lo_nm, hi_nm }),
        Err(count) => return Err(StarkError::AmbiguousCrossing { lo_nm, hi_nm, count }),
    };

    let mut fa = f(a)?;
    for _ in 0..100 {
        if b - a < 1e-9 {
            break;
        }
        let mid = 0.5 * (a + b);
        let fm = f(mid)?;
        if fa.signum() == fm.signum() {
            a = mid;
            fa = fm;
        } else {
            b = mid;
        }
    }
    let root = 0.5 * (a + b);

    let shifts = manifold_shifts(scheme, EXCITED_D2, root, i_ref, mode)?;
    let f4: Vec<f64> =
        shifts.iter().filter(|s| s.two_f == 8).map(|s| s.normalized).collect();
    let normalized_min = f4.iter().cloned().fold(f64::INFINITY, f64::min);
    let normalized_max = f4.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    Ok(MagicPoint {
        wavelength_nm: root,
        ground_shift_per_intensity: ground_shift_hz(scheme, root, 1.0, mode)?,
        normalized_min,
        normalized_max,
    })
}

/// Cavity-mode waist at a new wavelength, for fixed mirror geometry the waist
/// of a near-planar symmetric resonator grows as sqrt(λ).
pub fn scaled_waist_m(waist_ref_m: f64, lambda_ref_nm: f64, lambda_nm: f64) -> f64 {
    waist_ref_m * (lambda_nm / lambda_ref_nm).sqrt()
}

/// The trapping beam inside the cavity: wavelength, transverse mode waist and
/// the peak intensity at an antinode.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FortBeam {
    pub wavelength_nm: f64,
    pub waist_m: f64,
    pub peak_intensity_w_m2: f64,
}

impl FortBeam {
    pub fn from_peak_intensity(
        wavelength_nm: f64,
        waist_m: f64,
        peak_intensity_w_m2: f64,
    ) -> Result<Self, StarkError> {
        if wavelength_nm <= 0.0 || waist_m <= 0.0 || peak_intensity_w_m2 < 0.0 {
            return Err(StarkError::BadArgument(format!(
                "need positive wavelength and waist and nonnegative intensity, got \
                 λ={wavelength_nm} nm, w={waist_m} m, I={peak_intensity_w_m2} W/m^2"
            )));
        }
        Ok(FortBeam { wavelength_nm, waist_m, peak_intensity_w_m2 })
    }

    /// Standing-wave antinode intensity from the one-way circulating power:
    /// four times the traveling-wave peak 2P/(πw²).
    pub fn from_circulating_power(
        wavelength_nm: f64,
        waist_m: f64,
        circulating_power_w: f64,
    ) -> Result<Self, StarkError> {
        if circulating_power_w < 0.0 {
            return Err(StarkError::BadArgument(format!(
                "circulating power must be nonnegative, got {circulating_power_w} W"
            )));
        }
        let peak = 8.0 * circulating_power_w / (std::f64::consts::PI * waist_m * waist_m);
        Self::from_peak_intensity(wavelength_nm, waist_m, peak)
    }

    /// Resonant buildup of an impedance-matched cavity: P_circ = P_in · F/π.
    pub fn from_input_power(
        wavelength_nm: f64,
        waist_m: f64,
        input_power_w: f64,
        finesse: f64,
    ) -> Result<Self, StarkError> {
        if input_power_w < 0.0 || finesse <= 0.0 {
            return Err(StarkError::BadArgument(format!(
                "need nonnegative power and positive finesse, got P={input_power_w} W, \
                 F={finesse}"
            )));
        }
        let circulating = input_power_w * finesse / std::f64::consts::PI;
        Self::from_circulating_power(wavelength_nm, waist_m, circulating)
    }

    /// Invert the scalar ground shift to reach a target trap depth (Hz > 0).
    pub fn from_depth(
        scheme: &LevelScheme,
        wavelength_nm: f64,
        waist_m: f64,
        depth_hz: f64,
    ) -> Result<Self, StarkError> {
        if depth_hz <= 0.0 {
            return Err(StarkError::BadArgument(format!(
                "trap depth must be positive, got {depth_hz} Hz"
            )));
        }
        check_clear_of_resonances(
            scheme,
            &[GROUND],
            wavelength_nm,
            wavelength_nm,
            DetuningMode::FineStructure,
        )?;
        let per_intensity = ground_shift_hz(scheme, wavelength_nm, 1.0, DetuningMode::FineStructure)?;
        if per_intensity >= 0.0 {
            return Err(StarkError::BadArgument(format!(
                "ground shift at {wavelength_nm} nm is not trapping ({per_intensity:.3e} Hz \
                 per W/m^2)"
            )));
        }
        Self::from_peak_intensity(wavelength_nm, waist_m, depth_hz / -per_intensity)
    }

    /// Scalar trap depth (Hz, positive) seen by the ground state.
    pub fn depth_hz(&self, scheme: &LevelScheme) -> Result<f64, StarkError> {
        let shift = ground_shift_hz(
            scheme,
            self.wavelength_nm,
            self.peak_intensity_w_m2,
            DetuningMode::FineStructure,
        )?;
        Ok(-shift)
    }

    /// Freeze the depth into a closed-form potential for the integrators.
    pub fn trap(&self, scheme: &LevelScheme) -> Result<FortTrap, StarkError> {
        let depth_hz = self.depth_hz(scheme)?;
        if depth_hz <= 0.0 {
            return Err(StarkError::BadArgument(format!(
                "beam at {} nm does not trap the ground state",
                self.wavelength_nm
            )));
        }
        Ok(FortTrap {
            depth_j: depth_hz * H_PLANCK,
            wavelength_nm: self.wavelength_nm,
            waist_m: self.waist_m,
        })
    }
}

/// Standing-wave Gaussian trap, U(x, ρ) = −U₀ cos²(kx) exp(−2ρ²/w²), with x
/// along the cavity axis measured from an antinode. The mode Rayleigh range
/// is millimetres against a 45 µm cavity, so divergence is ignored.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FortTrap {
    pub depth_j: f64,
    pub wavelength_nm: f64,
    pub waist_m: f64,
}

impl FortTrap {
    pub fn new(depth_j: f64, wavelength_nm: f64, waist_m: f64) -> Self {
        FortTrap { depth_j, wavelength_nm, waist_m }
    }

    pub fn wavenumber(&self) -> f64 {
        2.0 * std::f64::consts::PI / (self.wavelength_nm * 1e-9)
    }

    /// Local intensity as a fraction of the antinode peak.
    pub fn intensity_fraction(&self, x_m: f64, rho_m: f64) -> f64 {
        let c = (self.wavenumber() * x_m).cos();
        let w = self.waist_m;
        c * c * (-2.0 * rho_m * rho_m / (w * w)).exp()
    }

    pub fn potential_j(&self, x_m: f64, rho_m: f64) -> f64 {
        -self.depth_j * self.intensity_fraction(x_m, rho_m)
    }

    /// −∇U at (x, y, z), newtons; x is the cavity axis.
    pub fn force_n(&self, pos: [f64; 3]) -> [f64; 3] {
        let [x, y, z] = pos;
        let k = self.wavenumber();
        let w_sq = self.waist_m * self.waist_m;
        let gauss = (-2.0 * (y * y + z * z) / w_sq).exp();
        let c = (k * x).cos();
        let transverse = -4.0 * self.depth_j * c * c * gauss / w_sq;
        [
            -self.depth_j * k * (2.0 * k * x).sin() * gauss,
            transverse * y,
            transverse * z,
        ]
    }

    pub fn depth_hz(&self) -> f64 {
        self.depth_j / H_PLANCK
    }

    pub fn depth_kelvin(&self) -> f64 {
        self.depth_j / K_BOLTZMANN
    }

    /// Small-oscillation frequency along the standing wave, Hz.
    pub fn axial_frequency_hz(&self, mass_kg: f64) -> f64 {
        let k = self.wavenumber();
        (2.0 * self.depth_j * k * k / mass_kg).sqrt() / (2.0 * std::f64::consts::PI)
    }

    /// Small-oscillation frequency across the Gaussian waist, Hz.
    pub fn radial_frequency_hz(&self, mass_kg: f64) -> f64 {
        (4.0 * self.depth_j / (mass_kg * self.waist_m * self.waist_m)).sqrt()
            / (2.0 * std::f64::consts::PI)
    }
}
