//! Python bindings: the main types and operations of the fortcav toolkit,
//! with keyword defaults matching the CLI scenario defaults.

use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;

use fortcav::atoms;
use fortcav::cavity;
use fortcav::constants::{CS133_MASS, H_PLANCK, K_BOLTZMANN};
use fortcav::motion;
use fortcav::pumping;
use fortcav::records;
use fortcav::stark;

fn err(e: impl std::fmt::Display) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn detuning_mode(resolve_hyperfine: bool) -> stark::DetuningMode {
    if resolve_hyperfine {
        stark::DetuningMode::HyperfineResolved
    } else {
        stark::DetuningMode::FineStructure
    }
}

/// Atomic level data: energies, linewidths, line strengths.
#[pyclass(frozen)]
struct LevelScheme {
    inner: atoms::LevelScheme,
}

#[pymethods]
impl LevelScheme {
    /// The built-in Cs-133 scheme.
    #[staticmethod]
    fn cs133() -> Self {
        LevelScheme { inner: atoms::LevelScheme::cs133() }
    }

    #[staticmethod]
    fn load(path: &str) -> PyResult<Self> {
        Ok(LevelScheme { inner: atoms::LevelScheme::load(std::path::Path::new(path)).map_err(err)? })
    }

    #[staticmethod]
    fn parse(text: &str) -> PyResult<Self> {
        Ok(LevelScheme { inner: atoms::LevelScheme::parse(text).map_err(err)? })
    }
}

/// The trapping beam: wavelength, waist, antinode intensity.
#[pyclass(frozen)]
struct FortBeam {
    inner: stark::FortBeam,
}

#[pymethods]
impl FortBeam {
    /// Invert the ground light shift to hit a trap depth given in mK.
    #[staticmethod]
    #[pyo3(signature = (scheme, depth_mk, wavelength_nm=935.6, waist_m=None))]
    fn from_depth_mk(
        scheme: &LevelScheme,
        depth_mk: f64,
        wavelength_nm: f64,
        waist_m: Option<f64>,
    ) -> PyResult<Self> {
        let waist = waist_m.unwrap_or_else(|| stark::scaled_waist_m(23.9e-6, 852.4, wavelength_nm));
        let depth_hz = depth_mk * 1.0e-3 * K_BOLTZMANN / H_PLANCK;
        Ok(FortBeam {
            inner: stark::FortBeam::from_depth(&scheme.inner, wavelength_nm, waist, depth_hz)
                .map_err(err)?,
        })
    }

    /// Resonant buildup of the input power through the cavity finesse.
    #[staticmethod]
    fn from_input_power(
        scheme: &LevelScheme,
        wavelength_nm: f64,
        waist_m: f64,
        input_power_w: f64,
        finesse: f64,
    ) -> PyResult<Self> {
        let beam = stark::FortBeam::from_input_power(wavelength_nm, waist_m, input_power_w, finesse)
            .map_err(err)?;
        // Touch the shift once so an untrappable wavelength errors here, not
        // at first use.
        beam.depth_hz(&scheme.inner).map_err(err)?;
        Ok(FortBeam { inner: beam })
    }

    #[getter]
    fn wavelength_nm(&self) -> f64 {
        self.inner.wavelength_nm
    }

    #[getter]
    fn waist_m(&self) -> f64 {
        self.inner.waist_m
    }

    #[getter]
    fn peak_intensity_w_m2(&self) -> f64 {
        self.inner.peak_intensity_w_m2
    }

    fn depth_hz(&self, scheme: &LevelScheme) -> PyResult<f64> {
        self.inner.depth_hz(&scheme.inner).map_err(err)
    }

    fn trap(&self, scheme: &LevelScheme) -> PyResult<FortTrap> {
        Ok(FortTrap { inner: self.inner.trap(&scheme.inner).map_err(err)? })
    }
}

/// The standing-wave trap the beam produces.
#[pyclass(frozen)]
struct FortTrap {
    inner: stark::FortTrap,
}

#[pymethods]
impl FortTrap {
    #[getter]
    fn depth_j(&self) -> f64 {
        self.inner.depth_j
    }

    fn depth_hz(&self) -> f64 {
        self.inner.depth_hz()
    }

    fn depth_kelvin(&self) -> f64 {
        self.inner.depth_kelvin()
    }

    #[pyo3(signature = (mass_kg=CS133_MASS))]
    fn axial_frequency_hz(&self, mass_kg: f64) -> f64 {
        self.inner.axial_frequency_hz(mass_kg)
    }

    #[pyo3(signature = (mass_kg=CS133_MASS))]
    fn radial_frequency_hz(&self, mass_kg: f64) -> f64 {
        self.inner.radial_frequency_hz(mass_kg)
    }

    fn potential_j(&self, x_m: f64, rho_m: f64) -> f64 {
        self.inner.potential_j(x_m, rho_m)
    }
}

/// Cavity QED parameters (g₀, κ, γ) and geometry.
#[pyclass(frozen)]
struct CavitySystem {
    inner: cavity::CavitySystem,
}

#[pymethods]
impl CavitySystem {
    #[new]
    fn new(
        g0_hz: f64,
        kappa_hz: f64,
        gamma_hz: f64,
        length_m: f64,
        wavelength_nm: f64,
        waist_m: f64,
    ) -> PyResult<Self> {
        Ok(CavitySystem {
            inner: cavity::CavitySystem::new(
                g0_hz, kappa_hz, gamma_hz, length_m, wavelength_nm, waist_m,
            )
            .map_err(err)?,
        })
    }

    /// The strongly coupled Cs D2 cavity: (g₀, κ, γ)/2π = (24, 4.2, 2.6) MHz.
    #[staticmethod]
    fn cs_d2_default() -> Self {
        CavitySystem { inner: cavity::CavitySystem::cs_d2_default() }
    }

    #[getter]
    fn g0_hz(&self) -> f64 {
        self.inner.g0_hz
    }

    #[getter]
    fn kappa_hz(&self) -> f64 {
        self.inner.kappa_hz
    }

    #[getter]
    fn gamma_hz(&self) -> f64 {
        self.inner.gamma_hz
    }

    fn critical_photon_number(&self) -> f64 {
        self.inner.critical_photon_number()
    }

    fn critical_atom_number(&self) -> f64 {
        self.inner.critical_atom_number()
    }

    fn cooperativity(&self) -> f64 {
        self.inner.cooperativity()
    }

    fn finesse(&self) -> f64 {
        self.inner.finesse()
    }
}

/// State-insensitive crossing of ground and excited light shifts.
#[pyclass(frozen)]
struct MagicPoint {
    #[pyo3(get)]
    wavelength_nm: f64,
    #[pyo3(get)]
    ground_shift_per_intensity: f64,
    #[pyo3(get)]
    normalized_min: f64,
    #[pyo3(get)]
    normalized_max: f64,
}

#[pyfunction]
#[pyo3(signature = (scheme, lo_nm=925.0, hi_nm=945.0, resolve_hyperfine=false))]
fn magic_wavelength(
    scheme: &LevelScheme,
    lo_nm: f64,
    hi_nm: f64,
    resolve_hyperfine: bool,
) -> PyResult<MagicPoint> {
    let p = stark::find_magic_wavelength(
        &scheme.inner,
        lo_nm,
        hi_nm,
        stark::MagicCriterion::MeanF4,
        detuning_mode(resolve_hyperfine),
    )
    .map_err(err)?;
    Ok(MagicPoint {
        wavelength_nm: p.wavelength_nm,
        ground_shift_per_intensity: p.ground_shift_per_intensity,
        normalized_min: p.normalized_min,
        normalized_max: p.normalized_max,
    })
}

#[pyfunction]
#[pyo3(signature = (scheme, wavelength_nm, intensity_w_m2=1.0, resolve_hyperfine=false))]
fn ground_shift_hz(
    scheme: &LevelScheme,
    wavelength_nm: f64,
    intensity_w_m2: f64,
    resolve_hyperfine: bool,
) -> PyResult<f64> {
    stark::ground_shift_hz(
        &scheme.inner,
        wavelength_nm,
        intensity_w_m2,
        detuning_mode(resolve_hyperfine),
    )
    .map_err(err)
}

/// 6P3/2 sublevel shifts as (f, m_f, shift_hz) triples.
#[pyfunction]
#[pyo3(signature = (scheme, wavelength_nm, intensity_w_m2=1.0, resolve_hyperfine=false))]
fn manifold_shifts(
    scheme: &LevelScheme,
    wavelength_nm: f64,
    intensity_w_m2: f64,
    resolve_hyperfine: bool,
) -> PyResult<Vec<(f64, f64, f64)>> {
    let shifts = stark::manifold_shifts(
        &scheme.inner,
        stark::EXCITED_D2,
        wavelength_nm,
        intensity_w_m2,
        detuning_mode(resolve_hyperfine),
    )
    .map_err(err)?;
    Ok(shifts
        .iter()
        .map(|s| (s.two_f as f64 / 2.0, s.two_mf as f64 / 2.0, s.shift_hz))
        .collect())
}

/// Weak-drive transmission scan; returns a dict of equal-length lists.
#[pyfunction]
#[pyo3(signature = (lo_hz=-50.0e6, hi_hz=50.0e6, points=201, atoms=1, m_bar_empty=0.01))]
fn transmission_scan(
    py: Python<'_>,
    lo_hz: f64,
    hi_hz: f64,
    points: usize,
    atoms: usize,
    m_bar_empty: f64,
) -> PyResult<Py<pyo3::types::PyDict>> {
    if points < 2 {
        return Err(PyValueError::new_err("points: need at least 2"));
    }
    let system = cavity::CavitySystem::cs_d2_default();
    let mut detunings = Vec::with_capacity(points);
    let mut mean_photon = Vec::with_capacity(points);
    let mut flux = Vec::with_capacity(points);
    let mut relative = Vec::with_capacity(points);
    for i in 0..points {
        let d = lo_hz + (hi_hz - lo_hz) * i as f64 / (points - 1) as f64;
        let drive = cavity::DriveConfig {
            probe_detuning_hz: d,
            drive_amp_hz: system.kappa_hz * m_bar_empty.sqrt(),
        };
        let coupled = vec![cavity::AtomCoupling { g_hz: system.g0_hz, detuning_hz: d }; atoms];
        let resp = cavity::transmission_weak_drive(&system, &drive, &coupled).map_err(err)?;
        detunings.push(d);
        mean_photon.push(resp.mean_photon);
        flux.push(resp.photon_flux_per_s);
        relative.push(resp.relative_transmission);
    }
    let dict = pyo3::types::PyDict::new(py);
    dict.set_item("probe_detuning_hz", detunings)?;
    dict.set_item("mean_photon", mean_photon)?;
    dict.set_item("photon_flux_per_s", flux)?;
    dict.set_item("relative_transmission", relative)?;
    Ok(dict.unbind())
}

/// Transmission plateaus for 0..=n_max atoms as
/// (atoms, mean_photon, flux_per_s, relative_transmission) rows.
#[pyfunction]
#[pyo3(signature = (n_max=3, g_hz=None, m_bar_empty=0.01))]
fn staircase_levels(
    n_max: usize,
    g_hz: Option<f64>,
    m_bar_empty: f64,
) -> PyResult<Vec<(usize, f64, f64, f64)>> {
    let system = cavity::CavitySystem::cs_d2_default();
    let drive = cavity::DriveConfig {
        probe_detuning_hz: 0.0,
        drive_amp_hz: system.kappa_hz * m_bar_empty.sqrt(),
    };
    let atom = cavity::AtomCoupling { g_hz: g_hz.unwrap_or(system.g0_hz), detuning_hz: 0.0 };
    let levels = cavity::staircase_levels(&system, &drive, atom, n_max).map_err(err)?;
    Ok(levels
        .iter()
        .enumerate()
        .map(|(n, l)| (n, l.mean_photon, l.photon_flux_per_s, l.relative_transmission))
        .collect())
}

/// Free-fall arrival at the cavity: (speed_m_s, kinetic_j, transit_s).
#[pyfunction]
#[pyo3(signature = (drop_height_m=5.0e-3, mass_kg=CS133_MASS, waist_m=25.04e-6))]
fn free_fall_arrival(drop_height_m: f64, mass_kg: f64, waist_m: f64) -> PyResult<(f64, f64, f64)> {
    let loading = motion::LoadingConfig { drop_height_m, ..motion::LoadingConfig::default() };
    motion::free_fall_arrival(&loading, mass_kg, waist_m).map_err(err)
}

/// A survival curve with its fit.
#[pyclass(frozen)]
struct SurvivalCurve {
    #[pyo3(get)]
    delays_s: Vec<f64>,
    #[pyo3(get)]
    successes: Vec<usize>,
    #[pyo3(get)]
    trials: Vec<usize>,
    #[pyo3(get)]
    fitted_tau_s: f64,
    #[pyo3(get)]
    tau_sigma_s: f64,
    #[pyo3(get)]
    p0: f64,
    #[pyo3(get)]
    capture_probability: f64,
    #[pyo3(get)]
    escape_times_s: Vec<f64>,
}

/// Simulated trap-lifetime experiment (capture, heating, redetection).
#[pyfunction]
#[pyo3(signature = (scheme, delays_s, ensemble=400, seed=1, depth_mk=2.3, wavelength_nm=935.6,
                    n_bar=0.30, cooling_pulse_s=100.0e-6, recoil_uk_per_s=11.0, tau_p_s=1.6,
                    raman_rate_per_s=0.0, background_rate_per_s=1.0/30.0,
                    redetect_efficiency=1.0))]
#[allow(clippy::too_many_arguments)]
fn survival_experiment(
    scheme: &LevelScheme,
    delays_s: Vec<f64>,
    ensemble: usize,
    seed: u64,
    depth_mk: f64,
    wavelength_nm: f64,
    n_bar: f64,
    cooling_pulse_s: f64,
    recoil_uk_per_s: f64,
    tau_p_s: f64,
    raman_rate_per_s: f64,
    background_rate_per_s: f64,
    redetect_efficiency: f64,
) -> PyResult<SurvivalCurve> {
    let waist = stark::scaled_waist_m(23.9e-6, 852.4, wavelength_nm);
    let depth_hz = depth_mk * 1.0e-3 * K_BOLTZMANN / H_PLANCK;
    let beam = stark::FortBeam::from_depth(&scheme.inner, wavelength_nm, waist, depth_hz)
        .map_err(err)?;
    let trap = beam.trap(&scheme.inner).map_err(err)?;
    let loading = motion::LoadingConfig {
        n_bar,
        cooling_pulse_s,
        ..motion::LoadingConfig::default()
    };
    let heating = motion::HeatingBudget {
        recoil_k_per_s: recoil_uk_per_s * 1.0e-6,
        parametric_rate_per_s: if tau_p_s > 0.0 { 1.0 / tau_p_s } else { 0.0 },
        raman_rate_per_s,
        background_rate_per_s,
        ..motion::HeatingBudget::off()
    };
    let detection = motion::DetectionModel { redetect_efficiency };
    let curve = motion::survival_experiment(
        ensemble, &loading, &trap, CS133_MASS, &heating, &delays_s, &detection, seed,
    )
    .map_err(err)?;
    Ok(SurvivalCurve {
        delays_s: curve.points.iter().map(|p| p.delay_s).collect(),
        successes: curve.points.iter().map(|p| p.successes).collect(),
        trials: curve.points.iter().map(|p| p.trials).collect(),
        fitted_tau_s: curve.fitted_tau_s,
        tau_sigma_s: curve.tau_sigma_s,
        p0: curve.p0,
        capture_probability: curve.capture_probability,
        escape_times_s: curve.escape_times_s,
    })
}

/// Ground-hyperfine repumping curve with both time constants.
#[pyclass(frozen)]
struct RepumpCurve {
    #[pyo3(get)]
    times_s: Vec<f64>,
    #[pyo3(get)]
    f4: Vec<f64>,
    #[pyo3(get)]
    fitted_tau_s: f64,
    #[pyo3(get)]
    fitted_f4_equilibrium: f64,
    #[pyo3(get)]
    two_level_tau_s: f64,
    #[pyo3(get)]
    two_level_f4_equilibrium: f64,
}

#[pyfunction]
#[pyo3(signature = (scheme, duration_s=0.5, points=100, ellipticity=0.0, depth_mk=2.3,
                    wavelength_nm=935.6, initial="unpolarized-f3"))]
fn repump_dynamics(
    scheme: &LevelScheme,
    duration_s: f64,
    points: usize,
    ellipticity: f64,
    depth_mk: f64,
    wavelength_nm: f64,
    initial: &str,
) -> PyResult<RepumpCurve> {
    let state = match initial.to_ascii_lowercase().as_str() {
        "unpolarized-f3" => pumping::PumpingState::unpolarized_f3(),
        "unpolarized-f4" => pumping::PumpingState::unpolarized_f4(),
        other => {
            return Err(PyValueError::new_err(format!(
                "initial: expected unpolarized-f3 or unpolarized-f4, got '{other}'"
            )))
        }
    };
    let waist = stark::scaled_waist_m(23.9e-6, 852.4, wavelength_nm);
    let depth_hz = depth_mk * 1.0e-3 * K_BOLTZMANN / H_PLANCK;
    let beam = stark::FortBeam::from_depth(&scheme.inner, wavelength_nm, waist, depth_hz)
        .map_err(err)?;
    let rates = pumping::raman_scattering_rates(&scheme.inner, &beam, ellipticity).map_err(err)?;
    let curve = pumping::repump_dynamics(&rates, &state, duration_s, points).map_err(err)?;
    Ok(RepumpCurve {
        times_s: curve.times_s,
        f4: curve.f4,
        fitted_tau_s: curve.fitted_tau_s,
        fitted_f4_equilibrium: curve.fitted_f4_equilibrium,
        two_level_tau_s: curve.two_level.tau_r_s,
        two_level_f4_equilibrium: curve.two_level.f4_equilibrium,
    })
}

/// Multilevel Raman heating estimate next to its coarse two-state bound:
/// (rate_per_s, std_error, two_state_bound_per_s).
#[pyfunction]
#[pyo3(signature = (scheme, ellipticity=0.0, depth_mk=2.3, wavelength_nm=935.6,
                    samples=2000, duration_s=4.0, seed=1))]
fn raman_heating(
    scheme: &LevelScheme,
    ellipticity: f64,
    depth_mk: f64,
    wavelength_nm: f64,
    samples: usize,
    duration_s: f64,
    seed: u64,
) -> PyResult<(f64, f64, f64)> {
    let waist = stark::scaled_waist_m(23.9e-6, 852.4, wavelength_nm);
    let depth_hz = depth_mk * 1.0e-3 * K_BOLTZMANN / H_PLANCK;
    let beam = stark::FortBeam::from_depth(&scheme.inner, wavelength_nm, waist, depth_hz)
        .map_err(err)?;
    let rates = pumping::raman_scattering_rates(&scheme.inner, &beam, ellipticity).map_err(err)?;
    let bound = pumping::raman_heating_two_state(
        rates.m_changing_aggregate + rates.f_changing_aggregate,
    )
    .map_err(err)?;
    let estimate =
        pumping::raman_heating_multilevel(&scheme.inner, &rates, &beam, samples, duration_s, seed)
            .map_err(err)?;
    Ok((estimate.rate_per_s, estimate.std_error, bound))
}

/// A binned photon-counting record.
#[pyclass(frozen)]
struct PhotonRecord {
    inner: records::PhotonRecord,
}

#[pymethods]
impl PhotonRecord {
    #[getter]
    fn bin_width_s(&self) -> f64 {
        self.inner.bin_width_s
    }

    #[getter]
    fn counts(&self) -> Vec<u64> {
        self.inner.counts.clone()
    }

    fn duration_s(&self) -> f64 {
        self.inner.duration_s()
    }

    fn mean_flux(&self, from_bin: usize, to_bin: usize) -> f64 {
        self.inner.mean_flux(from_bin, to_bin)
    }

    fn write_csv(&self, path: &str) -> PyResult<()> {
        self.inner.write_csv(std::path::Path::new(path)).map_err(err)
    }

    #[staticmethod]
    fn read_csv(path: &str) -> PyResult<Self> {
        Ok(PhotonRecord {
            inner: records::PhotonRecord::read_csv(std::path::Path::new(path)).map_err(err)?,
        })
    }
}

#[pyfunction]
#[pyo3(signature = (levels_flux_per_s, loss_times_s, duration_s, bin_width_s=1.0e-3,
                    quantum_efficiency=1.0, seed=1))]
fn synthesize_record(
    levels_flux_per_s: Vec<f64>,
    loss_times_s: Vec<f64>,
    duration_s: f64,
    bin_width_s: f64,
    quantum_efficiency: f64,
    seed: u64,
) -> PyResult<PhotonRecord> {
    Ok(PhotonRecord {
        inner: records::synthesize_record(
            &levels_flux_per_s,
            &loss_times_s,
            duration_s,
            bin_width_s,
            quantum_efficiency,
            seed,
        )
        .map_err(err)?,
    })
}

/// Plateau segmentation of a stepped record.
#[pyclass(frozen)]
struct Segmentation {
    #[pyo3(get)]
    change_points: Vec<usize>,
    #[pyo3(get)]
    change_times_s: Vec<f64>,
    #[pyo3(get)]
    segment_flux_per_s: Vec<f64>,
    #[pyo3(get)]
    atom_numbers: Option<Vec<usize>>,
}

#[pyfunction]
#[pyo3(signature = (record, levels_flux_per_s=None, penalty=None, min_segment_bins=3))]
fn segment_staircase(
    record: &PhotonRecord,
    levels_flux_per_s: Option<Vec<f64>>,
    penalty: Option<f64>,
    min_segment_bins: usize,
) -> PyResult<Segmentation> {
    let policy = records::PenaltyPolicy { penalty, min_segment_bins };
    let seg = records::segment_staircase(&record.inner, &policy, levels_flux_per_s.as_deref())
        .map_err(err)?;
    Ok(Segmentation {
        change_points: seg.change_points,
        change_times_s: seg.change_times_s,
        segment_flux_per_s: seg.segment_flux_per_s,
        atom_numbers: seg.atom_numbers,
    })
}

/// Binomial survival fit: (tau_s, tau_sigma_s, p0, deviance).
#[pyfunction]
fn fit_lifetime(
    delays_s: Vec<f64>,
    successes: Vec<f64>,
    trials: Vec<u64>,
) -> PyResult<(f64, f64, f64, f64)> {
    if delays_s.len() != successes.len() || delays_s.len() != trials.len() {
        return Err(PyValueError::new_err("delays, successes, trials must have equal length"));
    }
    let data: Vec<records::SurvivalDatum> = delays_s
        .iter()
        .zip(&successes)
        .zip(&trials)
        .map(|((d, s), t)| records::SurvivalDatum { delay_s: *d, successes: *s, trials: *t })
        .collect();
    let fit = records::fit_lifetime(&data).map_err(err)?;
    Ok((fit.tau_s, fit.tau_sigma_s, fit.p0, fit.deviance))
}

#[pymodule]
fn fortcav_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("CS133_MASS", CS133_MASS)?;
    m.add("K_BOLTZMANN", K_BOLTZMANN)?;
    m.add("H_PLANCK", H_PLANCK)?;
    m.add_class::<LevelScheme>()?;
    m.add_class::<FortBeam>()?;
    m.add_class::<FortTrap>()?;
    m.add_class::<CavitySystem>()?;
    m.add_class::<MagicPoint>()?;
    m.add_class::<SurvivalCurve>()?;
    m.add_class::<RepumpCurve>()?;
    m.add_class::<PhotonRecord>()?;
    m.add_class::<Segmentation>()?;
    m.add_function(wrap_pyfunction!(magic_wavelength, m)?)?;
    m.add_function(wrap_pyfunction!(ground_shift_hz, m)?)?;
    m.add_function(wrap_pyfunction!(manifold_shifts, m)?)?;
    m.add_function(wrap_pyfunction!(transmission_scan, m)?)?;
    m.add_function(wrap_pyfunction!(staircase_levels, m)?)?;
    m.add_function(wrap_pyfunction!(free_fall_arrival, m)?)?;
    m.add_function(wrap_pyfunction!(survival_experiment, m)?)?;
    m.add_function(wrap_pyfunction!(repump_dynamics, m)?)?;
    m.add_function(wrap_pyfunction!(raman_heating, m)?)?;
    m.add_function(wrap_pyfunction!(synthesize_record, m)?)?;
    m.add_function(wrap_pyfunction!(segment_staircase, m)?)?;
    m.add_function(wrap_pyfunction!(fit_lifetime, m)?)?;
    Ok(())
}
