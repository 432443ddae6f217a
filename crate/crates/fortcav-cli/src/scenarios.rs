//! One function per scenario tag. Each returns fully materialized artifacts;
//! nothing here touches the filesystem except the record-analysis input.

use crate::{module, Artifact, CliError, HeatingBudgetParams, LifetimeParams, MagicParams,
            RepumpParams, StaircaseLevelsParams, StaircaseParams, StarkScanParams,
            TransmitParams};
use fortcav::atoms::LevelScheme;
use fortcav::cavity::{staircase_levels, transmission_weak_drive, AtomCoupling, CavitySystem,
                      DriveConfig};
use fortcav::constants::{CS133_MASS, H_PLANCK, K_BOLTZMANN};
use fortcav::motion::{survival_experiment, DetectionModel, HeatingBudget, LoadingConfig};
use fortcav::pumping::{raman_heating_multilevel, raman_heating_two_state,
                       raman_scattering_rates, repump_dynamics};
use fortcav::records::{fit_lifetime, read_survival_csv, segment_staircase, synthesize_record,
                       PenaltyPolicy, PhotonRecord};
use fortcav::stark::{find_magic_wavelength, ground_shift_hz, manifold_shifts, scaled_waist_m,
                     FortBeam, EXCITED_D2};

/// The cavity mode waist and wavelength the trap beam inherits its geometry
/// from when no waist is given explicitly.
const REF_WAIST_M: f64 = 23.9e-6;
const REF_LAMBDA_NM: f64 = 852.4;

fn csv(head: &str, header: &str, rows: &[String]) -> String {
    let mut s = String::with_capacity(head.len() + header.len() + rows.len() * 32);
    s.push_str(head);
    s.push_str(header);
    s.push('\n');
    for r in rows {
        s.push_str(r);
        s.push('\n');
    }
    s
}

fn depth_hz_of_mk(depth_mk: f64) -> f64 {
    depth_mk * 1.0e-3 * K_BOLTZMANN / H_PLANCK
}

fn trap_beam(
    scheme: &LevelScheme,
    depth_mk: f64,
    wavelength_nm: f64,
    waist_um: Option<f64>,
) -> Result<FortBeam, CliError> {
    let waist_m = match waist_um {
        Some(w) => w * 1.0e-6,
        None => scaled_waist_m(REF_WAIST_M, REF_LAMBDA_NM, wavelength_nm),
    };
    FortBeam::from_depth(scheme, wavelength_nm, waist_m, depth_hz_of_mk(depth_mk))
        .map_err(module)
}

/// Drive amplitude that puts `m_bar` photons in the empty cavity on
/// resonance: |⟨a⟩|² = (ε/κ)² there.
fn drive_for(m_bar_empty: f64, probe_detuning_hz: f64, system: &CavitySystem) -> DriveConfig {
    DriveConfig {
        probe_detuning_hz,
        drive_amp_hz: system.kappa_hz * m_bar_empty.sqrt(),
    }
}

pub fn stark_scan(
    p: &StarkScanParams,
    scheme: &LevelScheme,
    head: &str,
) -> Result<Vec<Artifact>, CliError> {
    let mode = p.detuning_mode();
    let norm = ground_shift_hz(scheme, p.reference_nm, 1.0, mode).map_err(module)?;
    let template = manifold_shifts(scheme, EXCITED_D2, p.reference_nm, 1.0, mode).map_err(module)?;

    let mut header = String::from("wavelength_nm,d6s_hat");
    for s in &template {
        header.push_str(&format!(",d6p_f{}_m{}", s.two_f / 2, s.two_mf / 2));
    }

    let (lo, hi) = (p.scan[0], p.scan[1]);
    let mut rows = Vec::with_capacity(p.points);
    for i in 0..p.points {
        let lambda = lo + (hi - lo) * i as f64 / (p.points - 1) as f64;
        let ground = ground_shift_hz(scheme, lambda, 1.0, mode).map_err(module)?;
        let shifts = manifold_shifts(scheme, EXCITED_D2, lambda, 1.0, mode).map_err(module)?;
        let mut row = format!("{lambda},{}", ground / norm);
        for s in &shifts {
            row.push_str(&format!(",{}", s.shift_hz / norm));
        }
        rows.push(row);
    }
    Ok(vec![Artifact::new("stark_scan.csv", csv(head, &header, &rows))])
}

pub fn magic(p: &MagicParams, scheme: &LevelScheme, head: &str) -> Result<Vec<Artifact>, CliError> {
    let criterion = p.parsed_criterion()?;
    let point = find_magic_wavelength(scheme, p.bracket[0], p.bracket[1], criterion, p.detuning_mode())
        .map_err(module)?;
    let rows = vec![format!(
        "{},{},{},{}",
        point.wavelength_nm,
        point.ground_shift_per_intensity,
        point.normalized_min,
        point.normalized_max
    )];
    Ok(vec![Artifact::new(
        "magic.csv",
        csv(
            head,
            "wavelength_nm,ground_shift_hz_per_w_m2,normalized_min,normalized_max",
            &rows,
        ),
    )])
}

pub fn transmit(p: &TransmitParams, head: &str) -> Result<Vec<Artifact>, CliError> {
    let system = CavitySystem::cs_d2_default();
    let (lo, hi) = (p.detuning_scan[0] * 1.0e6, p.detuning_scan[1] * 1.0e6);
    let atom_offset_hz = p.atom_offset_mhz * 1.0e6;

    let mut header = String::from(
        "probe_detuning_hz,mean_photon,photon_flux_per_s,relative_transmission",
    );
    if p.master_equation {
        header.push_str(",me_mean_photon,me_photon_flux_per_s");
    }

    let mut rows = Vec::with_capacity(p.points);
    for i in 0..p.points {
        let detuning = lo + (hi - lo) * i as f64 / (p.points - 1) as f64;
        let drive = drive_for(p.m_bar_empty, detuning, &system);
        let atoms = vec![
            AtomCoupling { g_hz: system.g0_hz, detuning_hz: detuning - atom_offset_hz };
            p.atoms
        ];
        let resp = transmission_weak_drive(&system, &drive, &atoms).map_err(module)?;
        let mut row = format!(
            "{detuning},{},{},{}",
            resp.mean_photon, resp.photon_flux_per_s, resp.relative_transmission
        );
        if p.master_equation {
            let me = fortcav::cavity::steady_state(&system, &drive, &atoms, 6).map_err(module)?;
            row.push_str(&format!(",{},{}", me.mean_photon, me.photon_flux_per_s));
        }
        rows.push(row);
    }
    Ok(vec![Artifact::new("transmit.csv", csv(head, &header, &rows))])
}

pub fn staircase_levels_table(
    p: &StaircaseLevelsParams,
    head: &str,
) -> Result<Vec<Artifact>, CliError> {
    let system = CavitySystem::cs_d2_default();
    let detuning = p.probe_detuning_mhz * 1.0e6;
    let drive = drive_for(p.m_bar_empty, detuning, &system);
    let atom = AtomCoupling { g_hz: p.g_hz.unwrap_or(system.g0_hz), detuning_hz: detuning };
    let levels = staircase_levels(&system, &drive, atom, p.n_max).map_err(module)?;
    let rows: Vec<String> = levels
        .iter()
        .enumerate()
        .map(|(n, l)| {
            format!(
                "{n},{},{},{}",
                l.mean_photon, l.photon_flux_per_s, l.relative_transmission
            )
        })
        .collect();
    Ok(vec![Artifact::new(
        "staircase_levels.csv",
        csv(head, "atoms,mean_photon,photon_flux_per_s,relative_transmission", &rows),
    )])
}

pub fn lifetime(
    p: &LifetimeParams,
    scheme: &LevelScheme,
    seed: u64,
    head: &str,
) -> Result<Vec<Artifact>, CliError> {
    let beam = trap_beam(scheme, p.depth_mk, p.wavelength_nm, p.waist_um)?;
    let trap = beam.trap(scheme).map_err(module)?;
    let loading = LoadingConfig {
        n_bar: p.n_bar,
        cooling_pulse_s: p.cooling_pulse_us * 1.0e-6,
        ..LoadingConfig::default()
    };
    let heating = HeatingBudget {
        recoil_k_per_s: p.recoil_uk_per_s * 1.0e-6,
        parametric_rate_per_s: if p.tau_p_s > 0.0 { 1.0 / p.tau_p_s } else { 0.0 },
        raman_rate_per_s: p.raman_rate_per_s,
        background_rate_per_s: p.background_rate_per_s,
        ..HeatingBudget::off()
    };
    let detection = DetectionModel { redetect_efficiency: p.redetect_efficiency };
    let curve = survival_experiment(
        p.ensemble, &loading, &trap, CS133_MASS, &heating, &p.delays, &detection, seed,
    )
    .map_err(module)?;

    let survival_rows: Vec<String> = curve
        .points
        .iter()
        .map(|pt| format!("{},{},{}", pt.delay_s, pt.successes, pt.trials))
        .collect();
    let fit_row = vec![format!(
        "{},{},{},{}",
        curve.fitted_tau_s, curve.tau_sigma_s, curve.p0, curve.capture_probability
    )];

    let mut artifacts = vec![
        Artifact::new("survival.csv", csv(head, "delay_s,successes,trials", &survival_rows)),
        Artifact::new(
            "lifetime_fit.csv",
            csv(head, "tau_s,tau_sigma_s,p0,capture_probability", &fit_row),
        ),
    ];
    if p.dump_escapes {
        let rows: Vec<String> = curve.escape_times_s.iter().map(|t| format!("{t}")).collect();
        artifacts.push(Artifact::new("escape_times.csv", csv(head, "escape_time_s", &rows)));
    }
    Ok(artifacts)
}

pub fn repump(p: &RepumpParams, scheme: &LevelScheme, head: &str) -> Result<Vec<Artifact>, CliError> {
    let initial = p.parsed_initial()?;
    let beam = trap_beam(scheme, p.depth_mk, p.wavelength_nm, p.waist_um)?;
    let rates = raman_scattering_rates(scheme, &beam, p.ellipticity).map_err(module)?;
    let curve = repump_dynamics(&rates, &initial, p.duration, p.points).map_err(module)?;

    let rows: Vec<String> = curve
        .times_s
        .iter()
        .zip(&curve.f4)
        .map(|(t, f)| format!("{t},{f}"))
        .collect();
    let fit_row = vec![format!(
        "{},{},{},{},{},{}",
        curve.fitted_tau_s,
        curve.fitted_f4_equilibrium,
        curve.two_level.tau_r_s,
        curve.two_level.f4_equilibrium,
        curve.two_level.gamma_3_to_4,
        curve.two_level.gamma_4_to_3
    )];
    Ok(vec![
        Artifact::new("repump.csv", csv(head, "t_d_s,f4", &rows)),
        Artifact::new(
            "repump_fit.csv",
            csv(
                head,
                "tau_r_s,f4_equilibrium,two_level_tau_r_s,two_level_f4_equilibrium,\
                 gamma_3_to_4_per_s,gamma_4_to_3_per_s",
                &fit_row,
            ),
        ),
    ])
}

fn segments_artifact(
    record: &PhotonRecord,
    policy: &PenaltyPolicy,
    levels: Option<&[f64]>,
    head: &str,
) -> Result<Artifact, CliError> {
    let seg = segment_staircase(record, policy, levels).map_err(module)?;
    let mut starts = vec![0usize];
    starts.extend(&seg.change_points);
    let rows: Vec<String> = starts
        .iter()
        .enumerate()
        .map(|(k, &bin)| {
            let atoms = seg
                .atom_numbers
                .as_ref()
                .map(|a| a[k].to_string())
                .unwrap_or_default();
            format!(
                "{k},{bin},{},{},{atoms}",
                bin as f64 * record.bin_width_s,
                seg.segment_flux_per_s[k]
            )
        })
        .collect();
    Ok(Artifact::new(
        "segments.csv",
        csv(head, "segment,start_bin,start_time_s,flux_per_s,atoms", &rows),
    ))
}

pub fn staircase(p: &StaircaseParams, seed: u64, head: &str) -> Result<Vec<Artifact>, CliError> {
    let policy = PenaltyPolicy { penalty: p.penalty, min_segment_bins: p.min_segment_bins };

    if let Some(input) = &p.input {
        let record = PhotonRecord::read_csv(input).map_err(module)?;
        let levels = record.truth.as_ref().map(|t| t.levels_flux_per_s.clone());
        let segments = segments_artifact(&record, &policy, levels.as_deref(), head)?;
        return Ok(vec![segments]);
    }

    // Plateau fluxes from the cavity response of 0..=N identically coupled
    // atoms, rescaled so the empty cavity sits at the requested flux.
    let system = CavitySystem::cs_d2_default();
    let drive = drive_for(0.01, 0.0, &system);
    let atom = AtomCoupling { g_hz: p.g_eff_hz, detuning_hz: 0.0 };
    let levels: Vec<f64> = staircase_levels(&system, &drive, atom, p.loss_times.len())
        .map_err(module)?
        .iter()
        .map(|l| p.empty_flux_per_s * l.relative_transmission)
        .collect();

    let record = synthesize_record(
        &levels,
        &p.loss_times,
        p.duration,
        p.bin_width,
        p.quantum_efficiency,
        seed,
    )
    .map_err(module)?;

    let mut record_rows = Vec::with_capacity(record.counts.len());
    for (i, c) in record.counts.iter().enumerate() {
        record_rows.push(format!("{:.6},{c}", i as f64 * record.bin_width_s));
    }
    // Mirror the sidecar the library itself writes so the record can be
    // re-analyzed with `staircase --in`.
    let meta = serde_json::json!({
        "bin_width_s": record.bin_width_s,
        "noise_model": record.noise_model,
        "quantum_efficiency": record.quantum_efficiency,
        "truth": record.truth,
    });
    let meta_text = serde_json::to_string_pretty(&meta).map_err(module)? + "\n";

    let segments = segments_artifact(&record, &policy, Some(&levels), head)?;
    Ok(vec![
        Artifact::new("record.csv", csv(head, "time_s,counts", &record_rows)),
        Artifact::new("record.csv.meta.json", meta_text),
        segments,
    ])
}

pub fn heating_budget(
    p: &HeatingBudgetParams,
    scheme: &LevelScheme,
    seed: u64,
    head: &str,
) -> Result<Vec<Artifact>, CliError> {
    let beam = trap_beam(scheme, p.depth_mk, p.wavelength_nm, p.waist_um)?;
    let rates = raman_scattering_rates(scheme, &beam, p.ellipticity).map_err(module)?;
    let state_changing = rates.m_changing_aggregate + rates.f_changing_aggregate;
    let total_scattering = rates.rayleigh_total + state_changing;
    // Only state-changing events toggle the potential, so they alone feed
    // the coarse two-state bound.
    let two_state = raman_heating_two_state(state_changing).map_err(module)?;
    let multilevel =
        raman_heating_multilevel(scheme, &rates, &beam, p.samples, p.duration, seed)
            .map_err(module)?;
    let parametric = if p.tau_p_s > 0.0 { 1.0 / p.tau_p_s } else { 0.0 };

    let inverse = |r: f64| if r > 0.0 { 1.0 / r } else { f64::INFINITY };
    let rows = vec![
        format!("rayleigh_rate_per_s,{},1/s", rates.rayleigh_total),
        format!("m_changing_rate_per_s,{},1/s", rates.m_changing_aggregate),
        format!("f_changing_rate_per_s,{},1/s", rates.f_changing_aggregate),
        format!("state_changing_rate_per_s,{state_changing},1/s"),
        format!("total_scattering_rate_per_s,{total_scattering},1/s"),
        format!("raman_two_state_rate_per_s,{two_state},1/s"),
        format!("raman_two_state_time_s,{},s", inverse(two_state)),
        format!("raman_multilevel_rate_per_s,{},1/s", multilevel.rate_per_s),
        format!("raman_multilevel_stderr_per_s,{},1/s", multilevel.std_error),
        format!("raman_multilevel_time_s,{},s", inverse(multilevel.rate_per_s)),
        format!("recoil_heating_k_per_s,{},K/s", p.recoil_uk_per_s * 1.0e-6),
        format!("parametric_rate_per_s,{parametric},1/s"),
        format!("background_rate_per_s,{},1/s", p.background_rate_per_s),
    ];
    let mut text = csv(head, "quantity,value,unit", &rows);
    if let Some(w) = &multilevel.warning {
        text.push_str(&format!("# warning: {w}\n"));
    }
    Ok(vec![Artifact::new("heating_budget.csv", text)])
}

pub fn fit_lifetime_file(
    p: &crate::FitLifetimeParams,
    head: &str,
) -> Result<Vec<Artifact>, CliError> {
    let data = read_survival_csv(&p.input).map_err(module)?;
    let fit = fit_lifetime(&data).map_err(module)?;
    let rows = vec![format!(
        "{},{},{},{}",
        fit.tau_s, fit.tau_sigma_s, fit.p0, fit.deviance
    )];
    Ok(vec![Artifact::new(
        "lifetime_fit.csv",
        csv(head, "tau_s,tau_sigma_s,p0,deviance", &rows),
    )])
}
