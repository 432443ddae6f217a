//! Classical Monte Carlo motion of one atom: free fall into the mode,
//! capture by a triggered cooling pulse, confined oscillation in the trap,
//! per-channel heating, escape, and survival statistics.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::constants::{G_STANDARD, HBAR, K_BOLTZMANN};
use crate::stark::FortTrap;

#[derive(Debug, Error)]
pub enum MotionError {
    #[error("invalid configuration: {0}")]
    BadConfig(String),
    #[error("step {dt_s:.3e} s exceeds 1/(50 ν_axial) = {max_s:.3e} s")]
    StepTooLarge { dt_s: f64, max_s: f64 },
    #[error("negative rate: {0}")]
    NegativeRate(String),
    #[error("no captures in {trials} trials: {hint}")]
    EmptyCurve { trials: usize, hint: String },
}

/// How atoms arrive and how the triggered cooling pulse acts on them.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LoadingConfig {
    pub drop_height_m: f64,
    pub arrival_window_s: f64,
    /// Mean number of atoms in the mode during loading.
    pub n_bar: f64,
    /// Duration of the triggered cooling pulse.
    pub cooling_pulse_s: f64,
    /// Cooling-light detuning (metadata for the record headers).
    pub cooling_detuning_rad_s: f64,
    /// Exponential time constant of energy removal during the pulse.
    pub cooling_time_constant_s: f64,
    /// Energy floor the pulse cools toward, measured above the local
    /// potential minimum, in kelvin.
    pub cooling_floor_k: f64,
}

impl Default for LoadingConfig {
    fn default() -> Self {
        LoadingConfig {
            drop_height_m: 5.0e-3,
            arrival_window_s: 10.0e-3,
            n_bar: 0.30,
            cooling_pulse_s: 100.0e-6,
            cooling_detuning_rad_s: -2.0 * std::f64::consts::PI * 41.0e6,
            cooling_time_constant_s: 8.0e-6,
            cooling_floor_k: 0.3e-3,
        }
    }
}

impl LoadingConfig {
    pub fn validate(&self) -> Result<(), MotionError> {
        if self.drop_height_m < 0.0 {
            return Err(MotionError::BadConfig(format!(
                "drop height must be nonnegative, got {} m",
                self.drop_height_m
            )));
        }
        if self.arrival_window_s <= 0.0
            || self.cooling_pulse_s <= 0.0
            || self.cooling_time_constant_s <= 0.0
        {
            return Err(MotionError::BadConfig("durations must be positive".into()));
        }
        if self.n_bar < 0.0 || self.cooling_floor_k < 0.0 {
            return Err(MotionError::BadConfig("rates and floors must be nonnegative".into()));
        }
        Ok(())
    }
}

/// Free-fall arrival kinematics: speed at the mode, kinetic energy, and the
/// transit time 2w0/v across the waist. Returns infinite transit time for a
/// release at zero height.
pub fn free_fall_arrival(
    config: &LoadingConfig,
    mass_kg: f64,
    waist_m: f64,
) -> Result<(f64, f64, f64), MotionError> {
    config.validate()?;
    if mass_kg <= 0.0 || waist_m <= 0.0 {
        return Err(MotionError::BadConfig("mass and waist must be positive".into()));
    }
    let v = (2.0 * G_STANDARD * config.drop_height_m).sqrt();
    let e_k = 0.5 * mass_kg * v * v;
    let transit = if v > 0.0 { 2.0 * waist_m / v } else { f64::INFINITY };
    Ok((v, e_k, transit))
}

/// Exponential heating rate of a harmonically trapped atom driven by
/// fractional intensity noise: π²ν²S_ε(2ν), with S_ε the one-sided power
/// spectral density of δI/I.
pub fn parametric_heating_rate(
    s_epsilon: impl Fn(f64) -> f64,
    nu_hz: f64,
) -> Result<f64, MotionError> {
    if nu_hz <= 0.0 {
        return Err(MotionError::BadConfig(format!("need positive frequency, got {nu_hz} Hz")));
    }
    let s = s_epsilon(2.0 * nu_hz);
    if s < 0.0 || !s.is_finite() {
        return Err(MotionError::NegativeRate(format!("S_ε(2ν) = {s}")));
    }
    Ok(std::f64::consts::PI.powi(2) * nu_hz * nu_hz * s)
}

/// Stochastic energy channels acting on a trapped atom.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct HeatingBudget {
    /// Photon-recoil heating, kelvin per second.
    pub recoil_k_per_s: f64,
    /// Exponential energy growth from intensity noise, s⁻¹.
    pub parametric_rate_per_s: f64,
    /// Exponential energy growth from inelastic trap-photon scattering, s⁻¹.
    pub raman_rate_per_s: f64,
    /// Poisson rate of the discrete scattering events carrying the Raman
    /// growth (the physical state-changing scattering rate).
    pub raman_event_rate_per_s: f64,
    /// Background-gas loss, s⁻¹.
    pub background_rate_per_s: f64,
}

impl HeatingBudget {
    pub fn off() -> Self {
        HeatingBudget {
            recoil_k_per_s: 0.0,
            parametric_rate_per_s: 0.0,
            raman_rate_per_s: 0.0,
            raman_event_rate_per_s: 5.8,
            background_rate_per_s: 0.0,
        }
    }

    /// Operating-point defaults: recoil 11 µK/s, parametric 1/1.6 s,
    /// background 1/30 s; Raman growth left to the caller's estimate.
    pub fn nominal() -> Self {
        HeatingBudget {
            recoil_k_per_s: 11.0e-6,
            parametric_rate_per_s: 1.0 / 1.6,
            raman_rate_per_s: 0.0,
            raman_event_rate_per_s: 5.8,
            background_rate_per_s: 1.0 / 30.0,
        }
    }

    pub fn tau_p_s(&self) -> f64 {
        1.0 / self.parametric_rate_per_s
    }

    pub fn validate(&self) -> Result<(), MotionError> {
        for (name, v) in [
            ("recoil", self.recoil_k_per_s),
            ("parametric", self.parametric_rate_per_s),
            ("raman", self.raman_rate_per_s),
            ("raman event", self.raman_event_rate_per_s),
            ("background", self.background_rate_per_s),
        ] {
            if v < 0.0 || !v.is_finite() {
                return Err(MotionError::NegativeRate(format!("{name} rate = {v}")));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Integrator {
    /// Fourth-order position-extended Forest-Ruth (four force evaluations).
    Pefrl,
    /// Velocity Verlet (one fresh force evaluation per step).
    VelocityVerlet,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StepControl {
    pub dt_s: f64,
    pub sample_stride: usize,
    pub integrator: Integrator,
    pub seed: u64,
}

impl StepControl {
    /// The mandated ceiling: fifty steps per axial oscillation.
    pub fn max_step_s(trap: &FortTrap, mass_kg: f64) -> f64 {
        1.0 / (50.0 * trap.axial_frequency_hz(mass_kg))
    }

    pub fn at_limit(trap: &FortTrap, mass_kg: f64, integrator: Integrator, seed: u64) -> Self {
        StepControl {
            dt_s: Self::max_step_s(trap, mass_kg) * (1.0 - 1e-9),
            sample_stride: 1,
            integrator,
            seed,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct Trajectory {
    pub times_s: Vec<f64>,
    pub positions_m: Vec<[f64; 3]>,
    pub velocities_m_s: Vec<[f64; 3]>,
    /// Total mechanical energy, referenced to zero at infinity.
    pub energies_j: Vec<f64>,
    pub bound: bool,
    pub escape_time_s: Option<f64>,
}

const PEFRL_XI: f64 = 0.178_617_895_844_809_1;
const PEFRL_LAMBDA: f64 = -0.212_341_831_062_605_4;
const PEFRL_CHI: f64 = -0.066_264_582_669_818_49;

/// Integrate one atom in the trap with the configured heating channels.
/// The conservative part is symplectic; recoil and Raman events arrive at
/// Poisson times as momentum kicks; the parametric channel multiplies the
/// potential by (1 + ε) with white ε of the implied spectral density.
pub fn integrate_trajectory(
    trap: &FortTrap,
    mass_kg: f64,
    x0: [f64; 3],
    v0: [f64; 3],
    heating: &HeatingBudget,
    duration_s: f64,
    ctrl: &StepControl,
) -> Result<Trajectory, MotionError> {
    heating.validate()?;
    if mass_kg <= 0.0 || duration_s <= 0.0 || ctrl.sample_stride == 0 {
        return Err(MotionError::BadConfig(
            "need positive mass, duration, and sample stride".into(),
        ));
    }
    let max_s = StepControl::max_step_s(trap, mass_kg);
    if ctrl.dt_s > max_s || ctrl.dt_s <= 0.0 {
        return Err(MotionError::StepTooLarge { dt_s: ctrl.dt_s, max_s });
    }

    let dt = ctrl.dt_s;
    let n_steps = (duration_s / dt).ceil() as u64;
    let mut rng = ChaCha8Rng::seed_from_u64(ctrl.seed);

    // Parametric channel: white fractional-intensity noise whose one-sided
    // PSD reproduces the requested exponential rate at this trap's axial
    // frequency; per-step variance S0/(2dt) fills the band up to Nyquist.
    let nu_ax = trap.axial_frequency_hz(mass_kg);
    let eps_sigma = if heating.parametric_rate_per_s > 0.0 {
        let s0 = heating.parametric_rate_per_s / (std::f64::consts::PI.powi(2) * nu_ax * nu_ax);
        (s0 / (2.0 * dt)).sqrt()
    } else {
        0.0
    };
    let normal = Normal::new(0.0, 1.0).expect("unit normal");

    // Recoil: each scattering event delivers one absorption kick along ±x̂
    // and one isotropic emission kick of the same magnitude ħk.
    let hbar_k = HBAR * trap.wavenumber();
    let recoil_energy_j = hbar_k * hbar_k / (2.0 * mass_kg);
    let recoil_rate = if heating.recoil_k_per_s > 0.0 {
        heating.recoil_k_per_s * K_BOLTZMANN / (2.0 * recoil_energy_j)
    } else {
        0.0
    };
    // Raman: at each event the speed rescales so the ensemble energy e-folds
    // at the configured rate (kinetic energy is half the oscillation energy
    // on average).
    let raman_rate = if heating.raman_rate_per_s > 0.0 {
        heating.raman_event_rate_per_s
    } else {
        0.0
    };
    let raman_factor = if raman_rate > 0.0 {
        (1.0 + 2.0 * heating.raman_rate_per_s / heating.raman_event_rate_per_s).sqrt()
    } else {
        1.0
    };
    let exp_wait = |rng: &mut ChaCha8Rng, rate: f64| -> f64 {
        if rate > 0.0 {
            -rng.gen::<f64>().max(f64::MIN_POSITIVE).ln() / rate
        } else {
            f64::INFINITY
        }
    };
    let mut next_recoil = exp_wait(&mut rng, recoil_rate);
    let mut next_raman = exp_wait(&mut rng, raman_rate);

    let escape_radius = 3.0 * trap.waist_m;
    let energy = |x: &[f64; 3], v: &[f64; 3]| -> f64 {
        let rho = (x[1] * x[1] + x[2] * x[2]).sqrt();
        0.5 * mass_kg * (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]) + trap.potential_j(x[0], rho)
    };

    let mut x = x0;
    let mut v = v0;
    let mut traj = Trajectory {
        times_s: Vec::new(),
        positions_m: Vec::new(),
        velocities_m_s: Vec::new(),
        energies_j: Vec::new(),
        bound: true,
        escape_time_s: None,
    };
    let mut record = |t: f64, x: &[f64; 3], v: &[f64; 3], e: f64| {
        traj.times_s.push(t);
        traj.positions_m.push(*x);
        traj.velocities_m_s.push(*v);
        traj.energies_j.push(e);
    };
    record(0.0, &x, &v, energy(&x, &v));

    let accel = |x: &[f64; 3], scale: f64| -> [f64; 3] {
        let f = trap.force_n(*x);
        [f[0] * scale / mass_kg, f[1] * scale / mass_kg, f[2] * scale / mass_kg]
    };
    let mut eps = if eps_sigma > 0.0 { eps_sigma * normal.sample(&mut rng) } else { 0.0 };
    let mut a_cached = accel(&x, 1.0 + eps);

    for step in 1..=n_steps {
        let t = step as f64 * dt;
        match ctrl.integrator {
            Integrator::VelocityVerlet => {
                // Kick-drift-kick; the closing half-kick shares its noise
                // sample with the next step's opening half-kick, so one
                // fresh force evaluation per step suffices.
                for k in 0..3 {
                    v[k] += a_cached[k] * 0.5 * dt;
                    x[k] += v[k] * dt;
                }
                if eps_sigma > 0.0 {
                    eps = eps_sigma * normal.sample(&mut rng);
                }
                a_cached = accel(&x, 1.0 + eps);
                for k in 0..3 {
                    v[k] += a_cached[k] * 0.5 * dt;
                }
            }
            Integrator::Pefrl => {
                if eps_sigma > 0.0 {
                    eps = eps_sigma * normal.sample(&mut rng);
                }
                let scale = 1.0 + eps;
                let drift = |x: &mut [f64; 3], v: &[f64; 3], c: f64| {
                    for k in 0..3 {
                        x[k] += v[k] * c * dt;
                    }
                };
                let kick = |x: &[f64; 3], v: &mut [f64; 3], c: f64| {
                    let a = accel(x, scale);
                    for k in 0..3 {
                        v[k] += a[k] * c * dt;
                    }
                };
                drift(&mut x, &v, PEFRL_XI);
                kick(&x, &mut v, 0.5 * (1.0 - 2.0 * PEFRL_LAMBDA));
                drift(&mut x, &v, PEFRL_CHI);
                kick(&x, &mut v, PEFRL_LAMBDA);
                drift(&mut x, &v, 1.0 - 2.0 * (PEFRL_CHI + PEFRL_XI));
                kick(&x, &mut v, PEFRL_LAMBDA);
                drift(&mut x, &v, PEFRL_CHI);
                kick(&x, &mut v, 0.5 * (1.0 - 2.0 * PEFRL_LAMBDA));
                drift(&mut x, &v, PEFRL_XI);
            }
        }

        while t >= next_recoil {
            let sign = if rng.gen::<bool>() { 1.0 } else { -1.0 };
            v[0] += sign * hbar_k / mass_kg;
            // Isotropic emission direction.
            let cos_t: f64 = rng.gen_range(-1.0..1.0);
            let sin_t = (1.0 - cos_t * cos_t).sqrt();
            let phi = rng.gen::<f64>() * std::f64::consts::TAU;
            let kick = hbar_k / mass_kg;
            v[0] += kick * cos_t;
            v[1] += kick * sin_t * phi.cos();
            v[2] += kick * sin_t * phi.sin();
            next_recoil += exp_wait(&mut rng, recoil_rate);
            a_cached = accel(&x, 1.0 + eps);
        }
        while t >= next_raman {
            for vk in v.iter_mut() {
                *vk *= raman_factor;
            }
            next_raman += exp_wait(&mut rng, raman_rate);
        }

        let sampling = step % ctrl.sample_stride as u64 == 0 || step == n_steps;
        let checking = step % 64 == 0 || sampling;
        if checking {
            let e = energy(&x, &v);
            let rho = (x[1] * x[1] + x[2] * x[2]).sqrt();
            if e > 0.0 && rho > escape_radius {
                record(t, &x, &v, e);
                traj.bound = false;
                traj.escape_time_s = Some(t);
                break;
            }
            if sampling {
                record(t, &x, &v, e);
            }
        }
    }
    Ok(traj)
}

/// Conservative bound on the chance a second atom was trapped alongside the
/// triggered one; meaningful only for N̄ ≪ 1, warned otherwise.
pub fn second_atom_bound(n_bar: f64) -> Result<(f64, Option<String>), MotionError> {
    if n_bar < 0.0 || !n_bar.is_finite() {
        return Err(MotionError::BadConfig(format!("mean atom number must be ≥ 0, got {n_bar}")));
    }
    let warning = if n_bar > 0.25 {
        Some(format!("bound N̄/2 assumes N̄ ≪ 1; N̄ = {n_bar} is marginal"))
    } else {
        None
    };
    Ok((n_bar / 2.0, warning))
}

#[derive(Debug, Clone, Serialize)]
pub struct SurvivalPoint {
    pub delay_s: f64,
    pub trials: usize,
    pub successes: usize,
    pub survival: f64,
    /// Binomial standard error.
    pub error: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct SurvivalCurve {
    pub points: Vec<SurvivalPoint>,
    pub fitted_tau_s: f64,
    pub tau_sigma_s: f64,
    pub p0: f64,
    /// Loss times of every captured atom (for distribution tests).
    pub escape_times_s: Vec<f64>,
    pub capture_probability: f64,
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct DetectionModel {
    pub redetect_efficiency: f64,
}

impl Default for DetectionModel {
    fn default() -> Self {
        DetectionModel { redetect_efficiency: 1.0 }
    }
}

/// Event-based trap-lifetime experiment: each trial triggers on an arriving
/// atom, applies the cooling pulse, holds in the dark for the delay, and
/// redetects. Energies evolve by the closed-form growth laws of the heating
/// budget between events; trap oscillation itself is not re-integrated, so
/// ensembles of 10⁵ trials cost milliseconds.
#[allow(clippy::too_many_arguments)]
pub fn survival_experiment(
    ensemble: usize,
    loading: &LoadingConfig,
    trap: &FortTrap,
    mass_kg: f64,
    heating: &HeatingBudget,
    delays_s: &[f64],
    detection: &DetectionModel,
    seed: u64,
) -> Result<SurvivalCurve, MotionError> {
    loading.validate()?;
    heating.validate()?;
    if ensemble < 100 {
        return Err(MotionError::BadConfig(format!(
            "need at least 100 trials per delay, got {ensemble}"
        )));
    }
    if delays_s.is_empty() || delays_s.iter().any(|&d| d < 0.0) {
        return Err(MotionError::BadConfig("need nonnegative delays".into()));
    }
    if !(0.0..=1.0).contains(&detection.redetect_efficiency) {
        return Err(MotionError::BadConfig("efficiency must lie in [0, 1]".into()));
    }

    let (_, e_kin, transit_s) = free_fall_arrival(loading, mass_kg, trap.waist_m)?;
    let u0 = -trap.potential_j(0.0, 0.0);
    let floor_above_bottom = K_BOLTZMANN * loading.cooling_floor_k;
    // Cooling only acts while the atom is inside the mode, so a fast atom
    // cannot use the full pulse.
    let t_cool = loading.cooling_pulse_s.min(transit_s);
    let cool_frac = (-t_cool / loading.cooling_time_constant_s).exp();
    let growth = heating.parametric_rate_per_s + heating.raman_rate_per_s;
    let recoil_power = heating.recoil_k_per_s * K_BOLTZMANN;

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut points = Vec::with_capacity(delays_s.len());
    let mut escape_times = Vec::new();
    let mut captures = 0usize;
    let mut trials_total = 0usize;

    for (d_idx, &delay) in delays_s.iter().enumerate() {
        let mut successes = 0usize;
        for trial in 0..ensemble {
            rng.set_stream((d_idx * ensemble + trial) as u64 + 1);
            trials_total += 1;
            // Where along the standing wave and how far off axis the
            // triggering atom is caught.
            let axial = rng.gen::<f64>() * std::f64::consts::PI;
            let rho_frac: f64 = rng.gen::<f64>() * 0.5;
            let u = axial.cos().powi(2) * (-2.0 * rho_frac * rho_frac).exp();
            let e_before = e_kin; // total energy, zero at infinity
            let local_floor = -u * u0 + floor_above_bottom;
            let e_after = local_floor + (e_before - local_floor) * cool_frac;
            if e_after >= 0.0 {
                continue; // pulse did not bind this atom
            }
            captures += 1;

            // Energy above the well bottom grows exponentially plus the
            // linear recoil feed; escape when it reaches the full depth.
            let eps0 = e_after + u0;
            let t_heat = if growth > 0.0 {
                let b = recoil_power / growth;
                ((u0 + b) / (eps0 + b)).ln() / growth
            } else if recoil_power > 0.0 {
                (u0 - eps0) / recoil_power
            } else {
                f64::INFINITY
            };
            let t_bg = if heating.background_rate_per_s > 0.0 {
                -rng.gen::<f64>().max(f64::MIN_POSITIVE).ln() / heating.background_rate_per_s
            } else {
                f64::INFINITY
            };
            let t_loss = t_heat.min(t_bg);
            if t_loss.is_finite() {
                escape_times.push(t_loss);
            }
            if delay < t_loss && rng.gen::<f64>() < detection.redetect_efficiency {
                successes += 1;
            }
        }
        let p = successes as f64 / ensemble as f64;
        points.push(SurvivalPoint {
            delay_s: delay,
            trials: ensemble,
            successes,
            survival: p,
            error: (p * (1.0 - p) / ensemble as f64).sqrt(),
        });
    }

    if captures == 0 {
        return Err(MotionError::EmptyCurve {
            trials: trials_total,
            hint: "cooling pulse never binds an atom; lengthen the pulse, deepen the trap, \
                   or lower the drop height"
                .into(),
        });
    }

    let (tau, sigma, p0) = fit_survival(&points);
    Ok(SurvivalCurve {
        points,
        fitted_tau_s: tau,
        tau_sigma_s: sigma,
        p0,
        escape_times_s: escape_times,
        capture_probability: captures as f64 / trials_total as f64,
    })
}

/// Weighted least squares of P(t) = P0 exp(−t/τ): P0 closed form per τ,
/// golden-section over τ, uncertainty from the χ² curvature.
fn fit_survival(points: &[SurvivalPoint]) -> (f64, f64, f64) {
    let chi2 = |tau: f64| -> (f64, f64) {
        let (mut swe2, mut swpe) = (0.0, 0.0);
        for p in points {
            let w = 1.0 / p.error.max(1e-3).powi(2);
            let e = (-p.delay_s / tau).exp();
            swe2 += w * e * e;
            swpe += w * p.survival * e;
        }
        let p0 = (swpe / swe2).clamp(0.0, 1.0);
        let mut c = 0.0;
        for p in points {
            let w = 1.0 / p.error.max(1e-3).powi(2);
            let r = p.survival - p0 * (-p.delay_s / tau).exp();
            c += w * r * r;
        }
        (c, p0)
    };
    let d_max = points.iter().map(|p| p.delay_s).fold(0.0, f64::max).max(1e-6);
    let (mut lo, mut hi) = ((d_max / 100.0).ln(), (d_max * 100.0).ln());
    let phi = 0.5 * (5.0_f64.sqrt() - 1.0);
    let mut x1 = hi - phi * (hi - lo);
    let mut x2 = lo + phi * (hi - lo);
    let mut f1 = chi2(x1.exp()).0;
    let mut f2 = chi2(x2.exp()).0;
    for _ in 0..200 {
        if hi - lo < 1e-9 {
            break;
        }
        if f1 < f2 {
            hi = x2;
            x2 = x1;
            f2 = f1;
            x1 = hi - phi * (hi - lo);
            f1 = chi2(x1.exp()).0;
        } else {
            lo = x1;
            x1 = x2;
            f1 = f2;
            x2 = lo + phi * (hi - lo);
            f2 = chi2(x2.exp()).0;
        }
    }
    let tau = (0.5 * (lo + hi)).exp();
    let (c0, p0) = chi2(tau);
    // Curvature from a symmetric difference; σ_τ where χ² rises by 1.
    let h = tau * 1e-3;
    let cpp = (chi2(tau + h).0 - 2.0 * c0 + chi2(tau - h).0) / (h * h);
    let sigma = if cpp > 0.0 { (2.0 / cpp).sqrt() } else { f64::INFINITY };
    (tau, sigma, p0)
}

/// Kolmogorov–Smirnov test of `times` against Exp(rate): returns the
/// statistic and its asymptotic p-value.
pub fn ks_exponential(times: &[f64], rate: f64) -> Result<(f64, f64), MotionError> {
    if times.is_empty() || rate <= 0.0 {
        return Err(MotionError::BadConfig("need samples and a positive rate".into()));
    }
    let mut sorted: Vec<f64> = times.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len() as f64;
    let mut d: f64 = 0.0;
    for (i, &t) in sorted.iter().enumerate() {
        let f = 1.0 - (-rate * t).exp();
        let lo = i as f64 / n;
        let hi = (i + 1) as f64 / n;
        d = d.max((f - lo).abs()).max((hi - f).abs());
    }
    let lambda = (n.sqrt() + 0.12 + 0.11 / n.sqrt()) * d;
    let mut p = 0.0;
    for k in 1..=100 {
        let term = (-2.0 * (k as f64 * lambda).powi(2)).exp();
        p += if k % 2 == 1 { 2.0 * term } else { -2.0 * term };
    }
    Ok((d, p.clamp(0.0, 1.0)))
}
