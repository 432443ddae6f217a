//! Spontaneous scattering of trap photons: sublevel-to-sublevel Raman rates,
//! ground-state repumping dynamics, and the two competing estimates of the
//! heating that state-changing scattering causes.
//!
//! Rates come from second-order scattering amplitudes summed coherently over
//! every hyperfine component of both D-line excited states (plus the weaker
//! higher lines), with both time orders kept. The interference is the
//! physics: F-changing channels survive only to the extent that the two
//! fine-structure routes and their hyperfine substructure fail to cancel.

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::atoms::{angular_factor, AtomsError, LevelScheme};
use crate::constants::{C_LIGHT, EA0, EPSILON_0, HBAR, H_PLANCK};
use crate::stark::{FortBeam, StarkError, DetuningMode, GROUND};

#[derive(Debug, Error)]
pub enum PumpingError {
    #[error("ellipticity must lie in [0, 1], got {0}")]
    BadEllipticity(f64),
    #[error("invalid population state: {0}")]
    BadState(String),
    #[error("negative transfer rate {rate:.3e}/s on channel {from:?} -> {to:?}")]
    NegativeRate { from: (i32, i32), to: (i32, i32), rate: f64 },
    #[error("{0}")]
    BadArgument(String),
    #[error(transparent)]
    Stark(#[from] StarkError),
    #[error(transparent)]
    Atoms(#[from] AtomsError),
}

/// Ground sublevels in fixed order: F=3 (m = −3..3), then F=4 (m = −4..4).
pub fn ground_basis() -> Vec<(i32, i32)> {
    let mut basis = Vec::with_capacity(16);
    for two_f in [6, 8] {
        for two_m in (-two_f..=two_f).step_by(2) {
            basis.push((two_f, two_m));
        }
    }
    basis
}

/// Spherical components of the trap polarization ε̂ = (ẑ + iη ŷ)/√(1+η²):
/// c_q for q = −1, 0, +1. Real by construction.
fn polarization_components(eta: f64) -> [f64; 3] {
    let norm = (1.0 + eta * eta).sqrt();
    [-eta / (std::f64::consts::SQRT_2 * norm), 1.0 / norm, -eta / (std::f64::consts::SQRT_2 * norm)]
}

/// One excited hyperfine component as the scattering sums see it.
struct Intermediate {
    two_je: i32,
    two_fe: i32,
    /// Reduced dipole of its line to the ground state, SI.
    d_red: f64,
    /// Energy above the ground-state centroid, Hz.
    energy_hz: f64,
}

fn intermediates(scheme: &LevelScheme) -> Vec<Intermediate> {
    let mut out = Vec::new();
    for line in scheme.lines_touching(GROUND) {
        let partner_label = if line.lower == GROUND { &line.upper } else { &line.lower };
        let partner = scheme.level(partner_label).expect("validated on parse");
        for &two_fe in &scheme.f_values(partner) {
            out.push(Intermediate {
                two_je: partner.two_j,
                two_fe,
                d_red: line.reduced_dipole_ea0 * EA0,
                energy_hz: partner.energy_hz + scheme.hyperfine_shift_hz(partner, two_fe),
            });
        }
    }
    out
}

/// <ground F,m|d_q|e> via hermiticity: (−1)^q <e|d_{−q}|ground>, in units of
/// d_red/√(2J_g+1). Zero when selection rules forbid it.
fn downward_factor(
    scheme: &LevelScheme,
    e: &Intermediate,
    two_f: i32,
    two_m: i32,
    q: i32,
) -> Result<f64, AtomsError> {
    let two_me = two_m - 2 * q;
    if two_me.abs() > e.two_fe {
        return Ok(0.0);
    }
    let af = angular_factor(1, e.two_je, scheme.two_i, two_f, two_m, e.two_fe, two_me, -q)?;
    Ok(if q % 2 == 0 { af } else { -af })
}

/// <e|d_q|ground F,m>, same units.
fn upward_factor(
    scheme: &LevelScheme,
    e: &Intermediate,
    two_f: i32,
    two_m: i32,
    q: i32,
) -> Result<f64, AtomsError> {
    let two_me = two_m + 2 * q;
    if two_me.abs() > e.two_fe {
        return Ok(0.0);
    }
    angular_factor(1, e.two_je, scheme.two_i, two_f, two_m, e.two_fe, two_me, q)
}

/// Second-order amplitude (dipole units, real) for scattering |i⟩ → |f⟩ with
/// emitted polarization q_s, driving field strength e0 (V/m) at ω_l, emitted
/// frequency ω_s (both rad/s).
#[allow(clippy::too_many_arguments)]
fn scattering_amplitude(
    scheme: &LevelScheme,
    inter: &[Intermediate],
    c_q: &[f64; 3],
    i_state: (i32, i32),
    f_state: (i32, i32),
    q_s: i32,
    e0: f64,
    omega_l: f64,
    omega_s: f64,
    e_initial_hz: f64,
) -> Result<f64, PumpingError> {
    let (two_fi, two_mi) = i_state;
    let (two_ff, two_mf) = f_state;
    let mut amp = 0.0;
    for e in inter {
        let omega_ei = 2.0 * std::f64::consts::PI * (e.energy_hz - e_initial_hz);
        // d_red²/(2J_g+1) with J_g = 1/2.
        let d_sq = e.d_red * e.d_red / 2.0;
        for (idx, &c) in c_q.iter().enumerate() {
            if c == 0.0 {
                continue;
            }
            let q = idx as i32 - 1;
            // Both time orders move the atom by q + q_s in total.
            if two_mf != two_mi + 2 * q + 2 * q_s {
                continue;
            }
            // Absorb q, then emit q_s.
            let t1 = downward_factor(scheme, e, two_ff, two_mf, q_s)?
                * upward_factor(scheme, e, two_fi, two_mi, q)?;
            if t1 != 0.0 {
                amp += c * t1 * d_sq / (HBAR * (omega_ei - omega_l));
            }
            // Emission vertex acts first (counter-rotating time order).
            let t2 = downward_factor(scheme, e, two_ff, two_mf, q)?
                * upward_factor(scheme, e, two_fi, two_mi, q_s)?;
            if t2 != 0.0 {
                amp += c * t2 * d_sq / (HBAR * (omega_ei + omega_s));
            }
        }
    }
    Ok(0.5 * e0 * amp)
}

/// Per-channel spontaneous scattering rates of trap photons across the 16
/// ground sublevels.
///
/// The aggregates average over an unpolarized F=3 ensemble — the state the
/// repumping measurements prepare. The per-sublevel outflows spread widely
/// around them (the total inelastic rate is m-independent, but its split
/// between F-changing and m-changing swings from ~7:1 at the stretched
/// states to ~0.6:1 at m=0); use `channels` or `f_changing_from` when the
/// distribution matters.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ScatteringRates {
    pub basis: Vec<(i32, i32)>,
    /// channels[i][j]: rate basis[i] → basis[j], s⁻¹; the diagonal holds the
    /// elastic Rayleigh rate (no state change).
    pub channels: Vec<Vec<f64>>,
    /// Mean F-changing outflow of an unpolarized F=3 ensemble.
    pub f_changing_aggregate: f64,
    /// Mean outflow that changes m_F but not F, same ensemble.
    pub m_changing_aggregate: f64,
    /// Mean elastic rate over all sublevels (it is nearly uniform).
    pub rayleigh_total: f64,
    pub ellipticity: f64,
    pub wavelength_nm: f64,
    pub peak_intensity_w_m2: f64,
}

impl ScatteringRates {
    pub fn index_of(&self, two_f: i32, two_m: i32) -> Option<usize> {
        self.basis.iter().position(|&b| b == (two_f, two_m))
    }

    /// Mean over initial sublevels of the total outflow into the other F.
    pub fn f_changing_from(&self, two_f: i32) -> f64 {
        let rows: Vec<usize> = (0..self.basis.len()).filter(|&i| self.basis[i].0 == two_f).collect();
        let mut acc = 0.0;
        for &i in &rows {
            for (j, &(fj, _)) in self.basis.iter().enumerate() {
                if fj != two_f {
                    acc += self.channels[i][j];
                }
            }
        }
        acc / rows.len() as f64
    }

    /// Population-transfer generator: columns sum to zero, Rayleigh excluded.
    pub fn generator(&self) -> DMatrix<f64> {
        let n = self.basis.len();
        let mut g = DMatrix::zeros(n, n);
        for i in 0..n {
            for j in 0..n {
                if i != j {
                    g[(j, i)] += self.channels[i][j];
                    g[(i, i)] -= self.channels[i][j];
                }
            }
        }
        g
    }

    pub fn validate(&self) -> Result<(), PumpingError> {
        for (i, row) in self.channels.iter().enumerate() {
            for (j, &r) in row.iter().enumerate() {
                if r < 0.0 || !r.is_finite() {
                    return Err(PumpingError::NegativeRate {
                        from: self.basis[i],
                        to: self.basis[j],
                        rate: r,
                    });
                }
            }
        }
        Ok(())
    }
}

/// Kramers–Heisenberg scattering rates at the FORT peak intensity.
/// `ellipticity` is the amplitude ratio of the circular admixture,
/// ε̂ ∝ ẑ + iη ŷ; 0 is the ideal linear trap.
pub fn raman_scattering_rates(
    scheme: &LevelScheme,
    fort: &FortBeam,
    ellipticity: f64,
) -> Result<ScatteringRates, PumpingError> {
    if !(0.0..=1.0).contains(&ellipticity) {
        return Err(PumpingError::BadEllipticity(ellipticity));
    }
    crate::stark::check_clear_of_resonances(
        scheme,
        &[GROUND],
        fort.wavelength_nm,
        fort.wavelength_nm,
        DetuningMode::HyperfineResolved,
    )?;

    let basis = ground_basis();
    let ground = scheme.level(GROUND).expect("cesium scheme has a ground state");
    let inter = intermediates(scheme);
    let c_q = polarization_components(ellipticity);
    let e0 = (2.0 * fort.peak_intensity_w_m2 / (EPSILON_0 * C_LIGHT)).sqrt();
    let omega_l = crate::constants::omega_of_wavelength_nm(fort.wavelength_nm);

    let n = basis.len();
    let mut channels = vec![vec![0.0; n]; n];
    for (i, &(two_fi, two_mi)) in basis.iter().enumerate() {
        let e_i = ground.energy_hz + scheme.hyperfine_shift_hz(ground, two_fi);
        for (j, &(two_ff, two_mf)) in basis.iter().enumerate() {
            let e_f = ground.energy_hz + scheme.hyperfine_shift_hz(ground, two_ff);
            // Energy conservation fixes the emitted frequency.
            let omega_s = omega_l + 2.0 * std::f64::consts::PI * (e_i - e_f);
            let mut rate = 0.0;
            for q_s in -1..=1 {
                let amp = scattering_amplitude(
                    scheme,
                    &inter,
                    &c_q,
                    (two_fi, two_mi),
                    (two_ff, two_mf),
                    q_s,
                    e0,
                    omega_l,
                    omega_s,
                    e_i,
                )?;
                rate += omega_s.powi(3) * amp * amp
                    / (3.0 * std::f64::consts::PI * EPSILON_0 * HBAR * C_LIGHT.powi(3));
            }
            channels[i][j] = rate;
        }
    }

    let mut f_changing = 0.0;
    let mut m_changing = 0.0;
    let mut f3_states = 0.0;
    let mut rayleigh = 0.0;
    for (i, &(fi, _)) in basis.iter().enumerate() {
        rayleigh += channels[i][i];
        if fi != 6 {
            continue;
        }
        f3_states += 1.0;
        for (j, &(fj, _)) in basis.iter().enumerate() {
            if i == j {
                continue;
            }
            if fi != fj {
                f_changing += channels[i][j];
            } else {
                m_changing += channels[i][j];
            }
        }
    }
    let rates = ScatteringRates {
        basis,
        channels,
        f_changing_aggregate: f_changing / f3_states,
        m_changing_aggregate: m_changing / f3_states,
        rayleigh_total: rayleigh / n as f64,
        ellipticity,
        wavelength_nm: fort.wavelength_nm,
        peak_intensity_w_m2: fort.peak_intensity_w_m2,
    };
    rates.validate()?;
    Ok(rates)
}

/// Populations over the 16 ground sublevels.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PumpingState {
    populations: Vec<f64>,
}

impl PumpingState {
    pub fn new(populations: Vec<f64>) -> Result<Self, PumpingError> {
        if populations.len() != 16 {
            return Err(PumpingError::BadState(format!(
                "need 16 populations, got {}",
                populations.len()
            )));
        }
        let sum: f64 = populations.iter().sum();
        if (sum - 1.0).abs() > 1e-12 {
            return Err(PumpingError::BadState(format!("populations sum to {sum}, not 1")));
        }
        if populations.iter().any(|&p| !(0.0..=1.0).contains(&p)) {
            return Err(PumpingError::BadState("population outside [0, 1]".into()));
        }
        Ok(PumpingState { populations })
    }

    /// Uniform across the seven F=3 sublevels.
    pub fn unpolarized_f3() -> Self {
        let mut p = vec![1.0 / 7.0; 7];
        p.extend(vec![0.0; 9]);
        PumpingState { populations: p }
    }

    /// Uniform across the nine F=4 sublevels.
    pub fn unpolarized_f4() -> Self {
        let mut p = vec![0.0; 7];
        p.extend(vec![1.0 / 9.0; 9]);
        PumpingState { populations: p }
    }

    pub fn populations(&self) -> &[f64] {
        &self.populations
    }

    /// Fractional population in F=4.
    pub fn f4_fraction(&self) -> f64 {
        self.populations[7..].iter().sum()
    }
}

/// Reduced two-level picture of the hyperfine pumping.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct TwoLevelReduction {
    pub gamma_3_to_4: f64,
    pub gamma_4_to_3: f64,
    /// 1/(Γ₃→₄ + Γ₄→₃).
    pub tau_r_s: f64,
    pub f4_equilibrium: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct RepumpCurve {
    pub times_s: Vec<f64>,
    pub f4: Vec<f64>,
    pub final_populations: Vec<f64>,
    /// τ_R from an exponential-approach fit to the 16-level f₄(t).
    pub fitted_tau_s: f64,
    pub fitted_f4_equilibrium: f64,
    pub two_level: TwoLevelReduction,
}

fn two_level_reduction(rates: &ScatteringRates) -> TwoLevelReduction {
    let gamma_3_to_4 = rates.f_changing_from(6);
    let gamma_4_to_3 = rates.f_changing_from(8);
    let total = gamma_3_to_4 + gamma_4_to_3;
    TwoLevelReduction {
        gamma_3_to_4,
        gamma_4_to_3,
        tau_r_s: 1.0 / total,
        f4_equilibrium: gamma_3_to_4 / total,
    }
}

/// Least-squares fit of y ≈ a + b·exp(−t/τ) with τ found by golden-section
/// search and (a, b) profiled out linearly.
fn fit_exponential_approach(times: &[f64], values: &[f64], tau_lo: f64, tau_hi: f64) -> (f64, f64) {
    let sse = |tau: f64| -> (f64, f64) {
        let n = times.len() as f64;
        let (mut se, mut sy, mut see, mut sey) = (0.0, 0.0, 0.0, 0.0);
        for (&t, &y) in times.iter().zip(values) {
            let e = (-t / tau).exp();
            se += e;
            sy += y;
            see += e * e;
            sey += e * y;
        }
        let det = n * see - se * se;
        if det.abs() < 1e-30 {
            return (f64::INFINITY, sy / n);
        }
        let b = (n * sey - se * sy) / det;
        let a = (sy - b * se) / n;
        let mut err = 0.0;
        for (&t, &y) in times.iter().zip(values) {
            let r = y - a - b * (-t / tau).exp();
            err += r * r;
        }
        (err, a)
    };
    let phi = 0.5 * (5.0_f64.sqrt() - 1.0);
    let (mut lo, mut hi) = (tau_lo.ln(), tau_hi.ln());
    let mut x1 = hi - phi * (hi - lo);
    let mut x2 = lo + phi * (hi - lo);
    let (mut f1, _) = sse(x1.exp());
    let (mut f2, _) = sse(x2.exp());
    for _ in 0..200 {
        if hi - lo < 1e-10 {
            break;
        }
        if f1 < f2 {
            hi = x2;
            x2 = x1;
            f2 = f1;
            x1 = hi - phi * (hi - lo);
            f1 = sse(x1.exp()).0;
        } else {
            lo = x1;
            x1 = x2;
            f1 = f2;
            x2 = lo + phi * (hi - lo);
            f2 = sse(x2.exp()).0;
        }
    }
    let tau = (0.5 * (lo + hi)).exp();
    let (_, a) = sse(tau);
    (tau, a)
}

/// Evolve the 16-level rate system and report f₄(t) on a uniform grid, with
/// both the fitted and the reduced-two-level time constants.
pub fn repump_dynamics(
    rates: &ScatteringRates,
    initial: &PumpingState,
    duration_s: f64,
    n_points: usize,
) -> Result<RepumpCurve, PumpingError> {
    if duration_s <= 0.0 || n_points < 4 {
        return Err(PumpingError::BadArgument(format!(
            "need positive duration and ≥ 4 points, got {duration_s} s, {n_points}"
        )));
    }
    rates.validate()?;
    let g = rates.generator();
    let mut p = nalgebra::DVector::from_column_slice(initial.populations());

    // Fixed-step classical Runge–Kutta; linear system, so the only demands
    // are stability and the exact conservation of the linear invariant.
    let rate_scale = g.diagonal().amax().max(1e-12);
    let dt_stable = 0.01 / rate_scale;
    let sample_dt = duration_s / n_points as f64;
    let substeps = (sample_dt / dt_stable).ceil().max(1.0) as usize;
    let dt = sample_dt / substeps as f64;

    let mut times = Vec::with_capacity(n_points + 1);
    let mut f4 = Vec::with_capacity(n_points + 1);
    let f4_of = |v: &nalgebra::DVector<f64>| v.iter().skip(7).sum::<f64>();
    times.push(0.0);
    f4.push(f4_of(&p));
    for k in 1..=n_points {
        for _ in 0..substeps {
            let k1 = &g * &p;
            let k2 = &g * (&p + &k1 * (dt / 2.0));
            let k3 = &g * (&p + &k2 * (dt / 2.0));
            let k4 = &g * (&p + &k3 * dt);
            p += (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (dt / 6.0);
        }
        times.push(k as f64 * sample_dt);
        f4.push(f4_of(&p));
    }

    let (fitted_tau_s, fitted_f4_equilibrium) =
        fit_exponential_approach(&times, &f4, duration_s / 100.0, duration_s * 10.0);
    Ok(RepumpCurve {
        times_s: times,
        f4,
        final_populations: p.iter().cloned().collect(),
        fitted_tau_s,
        fitted_f4_equilibrium,
        two_level: two_level_reduction(rates),
    })
}

/// The coarse upper-limit estimate: a fraction 0.2 of the scattering rate
/// drives energy growth when every event toggles between two potentials.
pub fn raman_heating_two_state(gamma_s: f64) -> Result<f64, PumpingError> {
    if gamma_s < 0.0 || !gamma_s.is_finite() {
        return Err(PumpingError::BadArgument(format!(
            "scattering rate must be nonnegative, got {gamma_s}"
        )));
    }
    Ok(0.2 * gamma_s)
}

/// Trap depth seen by each ground sublevel, from the light-shift operator of
/// the elliptically polarized trap diagonalized within each F manifold.
#[derive(Debug, Clone, Serialize)]
pub struct SublevelDepths {
    pub basis: Vec<(i32, i32)>,
    pub depth_hz: Vec<f64>,
}

pub fn ground_sublevel_depths(
    scheme: &LevelScheme,
    fort: &FortBeam,
    ellipticity: f64,
) -> Result<SublevelDepths, PumpingError> {
    if !(0.0..=1.0).contains(&ellipticity) {
        return Err(PumpingError::BadEllipticity(ellipticity));
    }
    let ground = scheme.level(GROUND).expect("cesium scheme has a ground state");
    let inter = intermediates(scheme);
    let c_q = polarization_components(ellipticity);
    let e0_sq = 2.0 * fort.peak_intensity_w_m2 / (EPSILON_0 * C_LIGHT);
    let omega_l = crate::constants::omega_of_wavelength_nm(fort.wavelength_nm);

    let mut basis = Vec::new();
    let mut depth_hz = Vec::new();
    for two_f in [6, 8] {
        let ms: Vec<i32> = (-two_f..=two_f).step_by(2).collect();
        let dim = ms.len();
        let e_g = ground.energy_hz + scheme.hyperfine_shift_hz(ground, two_f);
        let mut h = DMatrix::<f64>::zeros(dim, dim);
        for e in &inter {
            let omega_eg = 2.0 * std::f64::consts::PI * (e.energy_hz - e_g);
            let d_sq = e.d_red * e.d_red / 2.0;
            for (r, &m_r) in ms.iter().enumerate() {
                for (c, &m_c) in ms.iter().enumerate() {
                    // ⟨r|(d·ε̂)†|e⟩⟨e|d·ε̂|c⟩/(ω_eg−ω) + ⟨r|d·ε̂|e⟩⟨e|(d·ε̂)†|c⟩/(ω_eg+ω),
                    // each pair of vertices sharing one intermediate m_e.
                    let mut rot = 0.0;
                    let mut cr = 0.0;
                    for (i1, &c1) in c_q.iter().enumerate() {
                        let q1 = i1 as i32 - 1;
                        if c1 == 0.0 {
                            continue;
                        }
                        for (i2, &c2) in c_q.iter().enumerate() {
                            let q2 = i2 as i32 - 1;
                            if c2 == 0.0 {
                                continue;
                            }
                            if m_r + 2 * q1 == m_c + 2 * q2 {
                                rot += c1 * c2
                                    * upward_factor(scheme, e, two_f, m_r, q1)?
                                    * upward_factor(scheme, e, two_f, m_c, q2)?;
                            }
                            if m_r - 2 * q1 == m_c - 2 * q2 {
                                cr += c1 * c2
                                    * downward_factor(scheme, e, two_f, m_r, q1)?
                                    * downward_factor(scheme, e, two_f, m_c, q2)?;
                            }
                        }
                    }
                    h[(r, c)] += -(e0_sq / 4.0)
                        * d_sq
                        * (rot / (omega_eg - omega_l) + cr / (omega_eg + omega_l))
                        / HBAR;
                }
            }
        }
        let sym_err = (&h - h.transpose()).amax();
        debug_assert!(sym_err < h.amax() * 1e-10, "light-shift block must be symmetric");
        // Adiabatic labels: each eigenvector claims the basis state it
        // overlaps most; exact at zero ellipticity, smooth continuation
        // for the small ellipticities of interest.
        let eig = nalgebra::SymmetricEigen::new(h);
        let mut shift_for = vec![f64::NAN; dim];
        let mut taken = vec![false; dim];
        for k in 0..dim {
            let v = eig.eigenvectors.column(k);
            let mut best = usize::MAX;
            let mut best_w = -1.0;
            for (idx, &t) in taken.iter().enumerate() {
                let w = v[idx] * v[idx];
                if !t && w > best_w {
                    best_w = w;
                    best = idx;
                }
            }
            taken[best] = true;
            shift_for[best] = eig.eigenvalues[k];
        }
        for (&m, ev) in ms.iter().zip(shift_for) {
            basis.push((two_f, m));
            depth_hz.push(-ev / H_PLANCK);
        }
    }
    Ok(SublevelDepths { basis, depth_hz })
}

#[derive(Debug, Clone, Serialize)]
pub struct HeatingEstimate {
    /// Growth rate of the ensemble-mean energy, d ln⟨E⟩/dt in s⁻¹.
    pub rate_per_s: f64,
    pub std_error: f64,
    pub samples: usize,
    pub warning: Option<String>,
}

/// Monte Carlo energy growth from state-changing scattering: jump times from
/// the rate matrix, and on each jump the potential energy re-scales by the
/// depth ratio of the new sublevel at a random oscillation phase. Start
/// states are drawn from `initial` with stratified sampling.
pub fn raman_heating_from_depths(
    rates: &ScatteringRates,
    depths: &SublevelDepths,
    initial: &PumpingState,
    samples: usize,
    duration_s: f64,
    seed: u64,
) -> Result<HeatingEstimate, PumpingError> {
    rates.validate()?;
    if samples == 0 || duration_s <= 0.0 {
        return Err(PumpingError::BadArgument(format!(
            "need samples ≥ 1 and positive duration, got {samples}, {duration_s} s"
        )));
    }
    if depths.basis != rates.basis {
        return Err(PumpingError::BadArgument(
            "depth table and rate matrix use different sublevel bases".into(),
        ));
    }
    let n = rates.basis.len();
    let out_rate: Vec<f64> = (0..n)
        .map(|i| (0..n).filter(|&j| j != i).map(|j| rates.channels[i][j]).sum())
        .collect();
    let start_state = |u: f64| -> usize {
        let mut acc = 0.0;
        for (idx, &p) in initial.populations().iter().enumerate() {
            acc += p;
            if u < acc {
                return idx;
            }
        }
        n - 1
    };

    // One ChaCha stream per trajectory: results are independent of the
    // thread count.
    let energies: Vec<f64> = (0..samples)
        .into_par_iter()
        .map(|traj| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(traj as u64);
            let mut state = start_state((traj as f64 + 0.5) / samples as f64);
            let mut energy: f64 = 1.0;
            let mut t = 0.0;
            loop {
                let r = out_rate[state];
                if r <= 0.0 {
                    break;
                }
                t += -rng.gen::<f64>().max(f64::MIN_POSITIVE).ln() / r;
                if t >= duration_s {
                    break;
                }
                // Pick the destination proportionally to channel rates.
                let mut pick = rng.gen::<f64>() * r;
                let mut dest = state;
                for j in 0..n {
                    if j == state {
                        continue;
                    }
                    pick -= rates.channels[state][j];
                    if pick <= 0.0 {
                        dest = j;
                        break;
                    }
                }
                let phase = rng.gen::<f64>() * std::f64::consts::TAU;
                let du =
                    (depths.depth_hz[dest] - depths.depth_hz[state]) / depths.depth_hz[state];
                energy *= 1.0 + phase.sin().powi(2) * du;
                state = dest;
            }
            energy
        })
        .collect();

    let mean: f64 = energies.iter().sum::<f64>() / samples as f64;
    let var: f64 = energies.iter().map(|e| (e - mean).powi(2)).sum::<f64>()
        / (samples.max(2) - 1) as f64;
    let rate = mean.ln() / duration_s;
    let mut std_error = (var / samples as f64).sqrt() / mean / duration_s;
    let warning = if samples < 1000 {
        std_error *= 2.0;
        Some(format!("ensemble of {samples} < 1000 trajectories; error bar widened"))
    } else {
        None
    };
    Ok(HeatingEstimate { rate_per_s: rate, std_error, samples, warning })
}

/// Full multilevel Raman-heating estimate: rates and sublevel depths both
/// evaluated for the same trap and ellipticity, starting from the isotropic
/// mixture (which is also the stationary state of the pumping).
pub fn raman_heating_multilevel(
    scheme: &LevelScheme,
    rates: &ScatteringRates,
    fort: &FortBeam,
    samples: usize,
    duration_s: f64,
    seed: u64,
) -> Result<HeatingEstimate, PumpingError> {
    let depths = ground_sublevel_depths(scheme, fort, rates.ellipticity)?;
    let isotropic = PumpingState::new(vec![1.0 / 16.0; 16]).expect("uniform is valid");
    raman_heating_from_depths(rates, &depths, &isotropic, samples, duration_s, seed)
}
