//! Scenario runner: binds the fortcav modules into seeded, reproducible
//! command-line experiments that emit plot-ready CSV artifacts.
//!
//! Every run follows the same contract: validate the full configuration
//! first (exit 2 on failure, nothing written), compute all artifacts in
//! memory (module errors exit 1, surfaced verbatim), then write everything
//! at the end. Each CSV starts with a provenance header carrying the tool
//! version, scenario tag, seed, and a SHA-256 of the canonical config, so a
//! data file can always be traced back to the exact invocation.

use std::path::{Path, PathBuf};

use clap::Args;
use fortcav::atoms::LevelScheme;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

pub mod scenarios;

pub const VERSION: &str = env!("CARGO_PKG_VERSION");
pub const DEFAULT_SEED: u64 = 1;

const SCENARIO_TAGS: &str =
    "stark-scan, magic, transmit, lifetime, repump, staircase, heating-budget";

#[derive(Debug)]
pub enum CliError {
    /// The configuration never validated; nothing was written. Exit 2.
    Validation(String),
    /// A module failed while computing. Exit 1.
    Module(String),
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Validation(m) => write!(f, "config error: {m}"),
            CliError::Module(m) => write!(f, "{m}"),
        }
    }
}

impl std::error::Error for CliError {}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Validation(_) => 2,
            CliError::Module(_) => 1,
        }
    }
}

fn invalid(field: &str, message: impl std::fmt::Display) -> CliError {
    CliError::Validation(format!("{field}: {message}"))
}

pub(crate) fn module(e: impl std::fmt::Display) -> CliError {
    CliError::Module(e.to_string())
}

/// One emitted file, fully materialized before anything touches disk.
#[derive(Debug, Clone)]
pub struct Artifact {
    pub name: String,
    pub text: String,
}

impl Artifact {
    pub fn new(name: &str, text: String) -> Self {
        Artifact { name: name.to_string(), text }
    }
}

// ---------------------------------------------------------------------------
// Scenario parameter blocks. Each struct doubles as the clap argument set of
// its subcommand and as the `params` block of a JSON config, so the two entry
// points cannot drift apart.
// ---------------------------------------------------------------------------

/// Light-shift scan of 6S and every 6P3/2 (F′, m_F′) sublevel, each shift
/// normalized to the ground shift at the reference wavelength.
#[derive(Debug, Clone, Serialize, Deserialize, Args)]
#[serde(default, deny_unknown_fields)]
pub struct StarkScanParams {
    /// Scan window, nm.
    #[arg(long = "scan", num_args = 2, value_names = ["LO_NM", "HI_NM"],
          default_values_t = [925.0, 945.0])]
    pub scan: Vec<f64>,
    /// Number of wavelength samples.
    #[arg(long, default_value_t = 201)]
    pub points: usize,
    /// Wavelength whose ground shift defines the normalization.
    #[arg(long, default_value_t = 935.6)]
    pub reference_nm: f64,
    /// Resolve hyperfine detunings instead of fine-structure ones.
    #[arg(long, default_value_t = false)]
    pub resolve_hyperfine: bool,
}

impl Default for StarkScanParams {
    fn default() -> Self {
        StarkScanParams {
            scan: vec![925.0, 945.0],
            points: 201,
            reference_nm: 935.6,
            resolve_hyperfine: false,
        }
    }
}

/// Locate the wavelength where the mean excited-state shift crosses the
/// ground-state shift.
#[derive(Debug, Clone, Serialize, Deserialize, Args)]
#[serde(default, deny_unknown_fields)]
pub struct MagicParams {
    /// Search bracket, nm.
    #[arg(long = "bracket", num_args = 2, value_names = ["A_NM", "B_NM"],
          default_values_t = [925.0, 945.0])]
    pub bracket: Vec<f64>,
    /// Crossing criterion: `f4-mean` or a single sublevel `f4-m0`..`f4-m4`.
    #[arg(long, default_value = "f4-mean")]
    pub criterion: String,
    /// Resolve hyperfine detunings instead of fine-structure ones.
    #[arg(long, default_value_t = false)]
    pub resolve_hyperfine: bool,
}

impl Default for MagicParams {
    fn default() -> Self {
        MagicParams {
            bracket: vec![925.0, 945.0],
            criterion: "f4-mean".to_string(),
            resolve_hyperfine: false,
        }
    }
}

/// Weak-drive transmission spectrum of the coupled atom–cavity system.
#[derive(Debug, Clone, Serialize, Deserialize, Args)]
#[serde(default, deny_unknown_fields)]
pub struct TransmitParams {
    /// Probe-detuning window, MHz.
    #[arg(long = "detuning-scan", num_args = 2, value_names = ["LO_MHZ", "HI_MHZ"],
          default_values_t = [-50.0, 50.0], allow_negative_numbers = true)]
    pub detuning_scan: Vec<f64>,
    /// Number of detuning samples.
    #[arg(long, default_value_t = 201)]
    pub points: usize,
    /// Number of identically coupled atoms.
    #[arg(long, default_value_t = 1)]
    pub atoms: usize,
    /// Empty-cavity resonant mean photon number; sets the drive strength.
    #[arg(long, default_value_t = 0.01)]
    pub m_bar_empty: f64,
    /// Atom frequency minus cavity frequency, MHz.
    #[arg(long, default_value_t = 0.0, allow_negative_numbers = true)]
    pub atom_offset_mhz: f64,
    /// Add master-equation cross-check columns (≤ 2 atoms).
    #[arg(long, default_value_t = false)]
    pub master_equation: bool,
}

impl Default for TransmitParams {
    fn default() -> Self {
        TransmitParams {
            detuning_scan: vec![-50.0, 50.0],
            points: 201,
            atoms: 1,
            m_bar_empty: 0.01,
            atom_offset_mhz: 0.0,
            master_equation: false,
        }
    }
}

/// Transmission plateaus for 0..=N identically coupled atoms.
#[derive(Debug, Clone, Serialize, Deserialize, Args)]
#[serde(default, deny_unknown_fields)]
pub struct StaircaseLevelsParams {
    /// Largest atom number tabulated.
    #[arg(long = "n-max", default_value_t = 3)]
    pub n_max: usize,
    /// Empty-cavity resonant mean photon number; sets the drive strength.
    #[arg(long, default_value_t = 0.01)]
    pub m_bar_empty: f64,
    /// Probe detuning from the common atom/cavity resonance, MHz.
    #[arg(long, default_value_t = 0.0, allow_negative_numbers = true)]
    pub probe_detuning_mhz: f64,
    /// Coupling of each atom, Hz; defaults to the antinode g₀.
    #[arg(long)]
    pub g_hz: Option<f64>,
}

impl Default for StaircaseLevelsParams {
    fn default() -> Self {
        StaircaseLevelsParams {
            n_max: 3,
            m_bar_empty: 0.01,
            probe_detuning_mhz: 0.0,
            g_hz: None,
        }
    }
}

/// Simulated trap-lifetime experiment: capture, delayed redetection, and a
/// survival-curve fit.
#[derive(Debug, Clone, Serialize, Deserialize, Args)]
#[serde(default, deny_unknown_fields)]
pub struct LifetimeParams {
    /// Redetection delays, s (comma separated).
    #[arg(long, value_delimiter = ',',
          default_value = "0.05,0.4,0.8,1.6,2.4,3.6")]
    pub delays: Vec<f64>,
    /// Loading attempts per delay.
    #[arg(long, default_value_t = 400)]
    pub ensemble: usize,
    /// Mean atom number in the mode during loading.
    #[arg(long, default_value_t = 0.30)]
    pub n_bar: f64,
    /// Triggered cooling-pulse duration, µs.
    #[arg(long, default_value_t = 100.0)]
    pub cooling_pulse_us: f64,
    /// Trap depth, mK.
    #[arg(long, default_value_t = 2.3)]
    pub depth_mk: f64,
    /// Trap wavelength, nm.
    #[arg(long, default_value_t = 935.6)]
    pub wavelength_nm: f64,
    /// Trap waist, µm; defaults to the cavity mode waist at the trap
    /// wavelength.
    #[arg(long)]
    pub waist_um: Option<f64>,
    /// Photon-recoil heating, µK/s.
    #[arg(long, default_value_t = 11.0)]
    pub recoil_uk_per_s: f64,
    /// Parametric-heating time constant, s; 0 disables the channel.
    #[arg(long, default_value_t = 1.6)]
    pub tau_p_s: f64,
    /// Exponential energy growth from inelastic trap-light scattering, 1/s.
    #[arg(long, default_value_t = 0.0)]
    pub raman_rate_per_s: f64,
    /// Background-gas loss rate, 1/s.
    #[arg(long, default_value_t = 1.0 / 30.0)]
    pub background_rate_per_s: f64,
    /// Probability that a surviving atom is actually redetected.
    #[arg(long, default_value_t = 1.0)]
    pub redetect_efficiency: f64,
    /// Also write every captured atom's escape time.
    #[arg(long, default_value_t = false)]
    pub dump_escapes: bool,
}

impl Default for LifetimeParams {
    fn default() -> Self {
        LifetimeParams {
            delays: vec![0.05, 0.4, 0.8, 1.6, 2.4, 3.6],
            ensemble: 400,
            n_bar: 0.30,
            cooling_pulse_us: 100.0,
            depth_mk: 2.3,
            wavelength_nm: 935.6,
            waist_um: None,
            recoil_uk_per_s: 11.0,
            tau_p_s: 1.6,
            raman_rate_per_s: 0.0,
            background_rate_per_s: 1.0 / 30.0,
            redetect_efficiency: 1.0,
            dump_escapes: false,
        }
    }
}

/// Ground-hyperfine repumping driven by trap-light scattering.
#[derive(Debug, Clone, Serialize, Deserialize, Args)]
#[serde(default, deny_unknown_fields)]
pub struct RepumpParams {
    /// Starting population: `unpolarized-F3` or `unpolarized-F4`.
    #[arg(long, default_value = "unpolarized-F3")]
    pub initial: String,
    /// Evolution span, s.
    #[arg(long, default_value_t = 0.5)]
    pub duration: f64,
    /// Number of sample times after t = 0.
    #[arg(long, default_value_t = 100)]
    pub points: usize,
    /// Trap-light polarization ellipticity in [0, 1].
    #[arg(long, default_value_t = 0.0)]
    pub ellipticity: f64,
    /// Trap depth, mK.
    #[arg(long, default_value_t = 2.3)]
    pub depth_mk: f64,
    /// Trap wavelength, nm.
    #[arg(long, default_value_t = 935.6)]
    pub wavelength_nm: f64,
    /// Trap waist, µm; defaults to the cavity mode waist at the trap
    /// wavelength.
    #[arg(long)]
    pub waist_um: Option<f64>,
}

impl Default for RepumpParams {
    fn default() -> Self {
        RepumpParams {
            initial: "unpolarized-F3".to_string(),
            duration: 0.5,
            points: 100,
            ellipticity: 0.0,
            depth_mk: 2.3,
            wavelength_nm: 935.6,
            waist_um: None,
        }
    }
}

/// Synthesize a stepped photon-counting record and/or segment one into
/// plateaus and loss times.
#[derive(Debug, Clone, Serialize, Deserialize, Args)]
#[serde(default, deny_unknown_fields)]
pub struct StaircaseParams {
    /// Segment an existing record instead of synthesizing one.
    #[arg(long = "in", value_name = "RECORD_CSV")]
    pub input: Option<PathBuf>,
    /// Loss times of the synthetic record, s (comma separated, ascending).
    #[arg(long, value_delimiter = ',', default_value = "0.25,0.5,0.75")]
    pub loss_times: Vec<f64>,
    /// Synthetic record span, s.
    #[arg(long, default_value_t = 1.0)]
    pub duration: f64,
    /// Counting-bin width, s.
    #[arg(long, default_value_t = 1.0e-3)]
    pub bin_width: f64,
    /// Effective atom–cavity coupling behind the plateaus, Hz.
    #[arg(long, default_value_t = 3.0e6)]
    pub g_eff_hz: f64,
    /// Detected flux with no atom, photons/s.
    #[arg(long, default_value_t = 5.28e5)]
    pub empty_flux_per_s: f64,
    /// Detection efficiency folded into the synthetic counts.
    #[arg(long, default_value_t = 1.0)]
    pub quantum_efficiency: f64,
    /// Segmentation penalty on the variance-stabilized scale; default 3·ln n.
    #[arg(long)]
    pub penalty: Option<f64>,
    /// Smallest admissible plateau, bins.
    #[arg(long, default_value_t = 3)]
    pub min_segment_bins: usize,
}

impl Default for StaircaseParams {
    fn default() -> Self {
        StaircaseParams {
            input: None,
            loss_times: vec![0.25, 0.5, 0.75],
            duration: 1.0,
            bin_width: 1.0e-3,
            g_eff_hz: 3.0e6,
            empty_flux_per_s: 5.28e5,
            quantum_efficiency: 1.0,
            penalty: None,
            min_segment_bins: 3,
        }
    }
}

/// Tabulate every heating and loss channel at one operating point.
#[derive(Debug, Clone, Serialize, Deserialize, Args)]
#[serde(default, deny_unknown_fields)]
pub struct HeatingBudgetParams {
    /// Trap depth, mK.
    #[arg(long, default_value_t = 2.3)]
    pub depth_mk: f64,
    /// Trap wavelength, nm.
    #[arg(long, default_value_t = 935.6)]
    pub wavelength_nm: f64,
    /// Trap waist, µm; defaults to the cavity mode waist at the trap
    /// wavelength.
    #[arg(long)]
    pub waist_um: Option<f64>,
    /// Trap-light polarization ellipticity in [0, 1].
    #[arg(long, default_value_t = 0.0)]
    pub ellipticity: f64,
    /// Monte Carlo trajectories for the multilevel Raman estimate.
    #[arg(long, default_value_t = 4000)]
    pub samples: usize,
    /// Span of each Monte Carlo trajectory, s.
    #[arg(long, default_value_t = 4.0)]
    pub duration: f64,
    /// Photon-recoil heating, µK/s.
    #[arg(long, default_value_t = 11.0)]
    pub recoil_uk_per_s: f64,
    /// Parametric-heating time constant, s; 0 disables the channel.
    #[arg(long, default_value_t = 1.6)]
    pub tau_p_s: f64,
    /// Background-gas loss rate, 1/s.
    #[arg(long, default_value_t = 1.0 / 30.0)]
    pub background_rate_per_s: f64,
}

impl Default for HeatingBudgetParams {
    fn default() -> Self {
        HeatingBudgetParams {
            depth_mk: 2.3,
            wavelength_nm: 935.6,
            waist_um: None,
            ellipticity: 0.0,
            samples: 4000,
            duration: 4.0,
            recoil_uk_per_s: 11.0,
            tau_p_s: 1.6,
            background_rate_per_s: 1.0 / 30.0,
        }
    }
}

/// Fit a lifetime to an existing survival CSV.
#[derive(Debug, Clone, Serialize, Args)]
pub struct FitLifetimeParams {
    /// Survival data: delay_s,successes,trials.
    #[arg(long = "in", value_name = "SURVIVAL_CSV")]
    pub input: PathBuf,
}

// ---------------------------------------------------------------------------
// Dispatch
// ---------------------------------------------------------------------------

#[derive(Debug, Clone)]
pub enum ScenarioParams {
    StarkScan(StarkScanParams),
    Magic(MagicParams),
    Transmit(TransmitParams),
    StaircaseLevels(StaircaseLevelsParams),
    Lifetime(LifetimeParams),
    Repump(RepumpParams),
    Staircase(StaircaseParams),
    HeatingBudget(HeatingBudgetParams),
    FitLifetime(FitLifetimeParams),
}

impl ScenarioParams {
    pub fn tag(&self) -> &'static str {
        match self {
            ScenarioParams::StarkScan(_) => "stark-scan",
            ScenarioParams::Magic(_) => "magic",
            ScenarioParams::Transmit(_) => "transmit",
            ScenarioParams::StaircaseLevels(_) => "staircase-levels",
            ScenarioParams::Lifetime(_) => "lifetime",
            ScenarioParams::Repump(_) => "repump",
            ScenarioParams::Staircase(_) => "staircase",
            ScenarioParams::HeatingBudget(_) => "heating-budget",
            ScenarioParams::FitLifetime(_) => "fit-lifetime",
        }
    }

    fn to_json(&self) -> serde_json::Value {
        match self {
            ScenarioParams::StarkScan(p) => serde_json::to_value(p),
            ScenarioParams::Magic(p) => serde_json::to_value(p),
            ScenarioParams::Transmit(p) => serde_json::to_value(p),
            ScenarioParams::StaircaseLevels(p) => serde_json::to_value(p),
            ScenarioParams::Lifetime(p) => serde_json::to_value(p),
            ScenarioParams::Repump(p) => serde_json::to_value(p),
            ScenarioParams::Staircase(p) => serde_json::to_value(p),
            ScenarioParams::HeatingBudget(p) => serde_json::to_value(p),
            ScenarioParams::FitLifetime(p) => serde_json::to_value(p),
        }
        .expect("parameter blocks serialize")
    }

    fn validate(&self) -> Result<(), CliError> {
        match self {
            ScenarioParams::StarkScan(p) => p.validate(),
            ScenarioParams::Magic(p) => p.validate(),
            ScenarioParams::Transmit(p) => p.validate(),
            ScenarioParams::StaircaseLevels(p) => p.validate(),
            ScenarioParams::Lifetime(p) => p.validate(),
            ScenarioParams::Repump(p) => p.validate(),
            ScenarioParams::Staircase(p) => p.validate(),
            ScenarioParams::HeatingBudget(p) => p.validate(),
            ScenarioParams::FitLifetime(p) => p.validate(),
        }
    }
}

/// Everything outside the parameter block: seed, output directory, line data.
#[derive(Debug, Clone)]
pub struct RunContext {
    pub seed: u64,
    pub out: PathBuf,
    pub atom_data: Option<PathBuf>,
}

/// A JSON scenario config: `{"scenario": tag, "seed": n, "out": dir,
/// "atom_data": path|null, "params": {...}}`. Only `scenario` is required.
#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    pub scenario: String,
    #[serde(default)]
    pub seed: Option<u64>,
    #[serde(default)]
    pub out: Option<PathBuf>,
    #[serde(default)]
    pub atom_data: Option<PathBuf>,
    #[serde(default)]
    pub params: Option<serde_json::Value>,
}

pub fn load_file_config(path: &Path) -> Result<FileConfig, CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| invalid("config", format!("{}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| invalid("config", e))
}

pub fn params_from_tag(tag: &str, raw: serde_json::Value) -> Result<ScenarioParams, CliError> {
    fn de<T: serde::de::DeserializeOwned>(v: serde_json::Value) -> Result<T, CliError> {
        serde_json::from_value(v).map_err(|e| invalid("params", e))
    }
    match tag {
        "stark-scan" => Ok(ScenarioParams::StarkScan(de(raw)?)),
        "magic" => Ok(ScenarioParams::Magic(de(raw)?)),
        "transmit" => Ok(ScenarioParams::Transmit(de(raw)?)),
        "lifetime" => Ok(ScenarioParams::Lifetime(de(raw)?)),
        "repump" => Ok(ScenarioParams::Repump(de(raw)?)),
        "staircase" => Ok(ScenarioParams::Staircase(de(raw)?)),
        "heating-budget" => Ok(ScenarioParams::HeatingBudget(de(raw)?)),
        other => Err(invalid(
            "scenario",
            format!("expected one of {SCENARIO_TAGS}; got '{other}'"),
        )),
    }
}

/// The documented config schema: the envelope plus the full default
/// parameter block of every scenario tag.
pub fn schema_json() -> serde_json::Value {
    serde_json::json!({
        "envelope": {
            "scenario": format!("<one of: {SCENARIO_TAGS}>"),
            "seed": DEFAULT_SEED,
            "out": ".",
            "atom_data": null,
            "params": "<scenario-specific block; defaults below>",
        },
        "params_defaults": {
            "stark-scan": StarkScanParams::default(),
            "magic": MagicParams::default(),
            "transmit": TransmitParams::default(),
            "lifetime": LifetimeParams::default(),
            "repump": RepumpParams::default(),
            "staircase": StaircaseParams::default(),
            "heating-budget": HeatingBudgetParams::default(),
        },
    })
}

fn sha256_hex(bytes: &[u8]) -> String {
    let digest = Sha256::digest(bytes);
    let mut s = String::with_capacity(64);
    for b in digest {
        s.push_str(&format!("{b:02x}"));
    }
    s
}

/// Canonical config digest: scenario tag, seed, parameter block, and the
/// hash of any external line-data file (so swapping data changes the hash).
fn config_digest(params: &ScenarioParams, ctx: &RunContext, atom_hash: Option<&str>) -> String {
    let canonical = serde_json::json!({
        "atom_data_sha256": atom_hash,
        "params": params.to_json(),
        "scenario": params.tag(),
        "seed": ctx.seed,
    });
    sha256_hex(&serde_json::to_vec(&canonical).expect("canonical config serializes"))
}

fn provenance(tag: &str, seed: u64, digest: &str) -> String {
    format!(
        "# fortcav {VERSION}\n# scenario: {tag}\n# seed: {seed}\n# config-sha256: {digest}\n"
    )
}

fn load_scheme(ctx: &RunContext) -> Result<(LevelScheme, Option<String>), CliError> {
    match &ctx.atom_data {
        None => Ok((LevelScheme::cs133(), None)),
        Some(path) => {
            let bytes = std::fs::read(path)
                .map_err(|e| invalid("atom-data", format!("{}: {e}", path.display())))?;
            let text = String::from_utf8(bytes.clone())
                .map_err(|e| invalid("atom-data", format!("{}: {e}", path.display())))?;
            let scheme = LevelScheme::parse(&text)
                .map_err(|e| invalid("atom-data", format!("{}: {e}", path.display())))?;
            Ok((scheme, Some(sha256_hex(&bytes))))
        }
    }
}

/// Validate, compute every artifact in memory, then write. Returns the paths
/// written, in emission order.
pub fn run_scenario(params: &ScenarioParams, ctx: &RunContext) -> Result<Vec<PathBuf>, CliError> {
    let (scheme, atom_hash) = load_scheme(ctx)?;
    params.validate()?;
    let digest = config_digest(params, ctx, atom_hash.as_deref());
    let head = provenance(params.tag(), ctx.seed, &digest);

    let artifacts = match params {
        ScenarioParams::StarkScan(p) => scenarios::stark_scan(p, &scheme, &head)?,
        ScenarioParams::Magic(p) => scenarios::magic(p, &scheme, &head)?,
        ScenarioParams::Transmit(p) => scenarios::transmit(p, &head)?,
        ScenarioParams::StaircaseLevels(p) => scenarios::staircase_levels_table(p, &head)?,
        ScenarioParams::Lifetime(p) => scenarios::lifetime(p, &scheme, ctx.seed, &head)?,
        ScenarioParams::Repump(p) => scenarios::repump(p, &scheme, &head)?,
        ScenarioParams::Staircase(p) => scenarios::staircase(p, ctx.seed, &head)?,
        ScenarioParams::HeatingBudget(p) => scenarios::heating_budget(p, &scheme, ctx.seed, &head)?,
        ScenarioParams::FitLifetime(p) => scenarios::fit_lifetime_file(p, &head)?,
    };

    std::fs::create_dir_all(&ctx.out)
        .map_err(|e| CliError::Module(format!("creating {}: {e}", ctx.out.display())))?;
    let mut paths = Vec::with_capacity(artifacts.len());
    for a in &artifacts {
        let path = ctx.out.join(&a.name);
        std::fs::write(&path, &a.text)
            .map_err(|e| CliError::Module(format!("writing {}: {e}", path.display())))?;
        paths.push(path);
    }
    Ok(paths)
}

// ---------------------------------------------------------------------------
// Field-level validation
// ---------------------------------------------------------------------------

fn check_window(field: &str, w: &[f64]) -> Result<(f64, f64), CliError> {
    if w.len() != 2 {
        return Err(invalid(field, format!("need exactly two values, got {}", w.len())));
    }
    if !(w[0].is_finite() && w[1].is_finite() && w[0] < w[1]) {
        return Err(invalid(field, format!("need lo < hi, got {} and {}", w[0], w[1])));
    }
    Ok((w[0], w[1]))
}

fn check_positive(field: &str, v: f64) -> Result<(), CliError> {
    if !(v.is_finite() && v > 0.0) {
        return Err(invalid(field, format!("must be positive, got {v}")));
    }
    Ok(())
}

fn check_nonnegative(field: &str, v: f64) -> Result<(), CliError> {
    if !(v.is_finite() && v >= 0.0) {
        return Err(invalid(field, format!("must be nonnegative, got {v}")));
    }
    Ok(())
}

fn check_unit_interval(field: &str, v: f64) -> Result<(), CliError> {
    if !(v.is_finite() && (0.0..=1.0).contains(&v)) {
        return Err(invalid(field, format!("must lie in [0, 1], got {v}")));
    }
    Ok(())
}

fn check_waist(waist_um: Option<f64>) -> Result<(), CliError> {
    if let Some(w) = waist_um {
        check_positive("waist-um", w)?;
    }
    Ok(())
}

impl StarkScanParams {
    pub fn detuning_mode(&self) -> fortcav::stark::DetuningMode {
        if self.resolve_hyperfine {
            fortcav::stark::DetuningMode::HyperfineResolved
        } else {
            fortcav::stark::DetuningMode::FineStructure
        }
    }

    fn validate(&self) -> Result<(), CliError> {
        let (lo, _) = check_window("scan", &self.scan)?;
        check_positive("scan", lo)?;
        check_positive("reference-nm", self.reference_nm)?;
        if self.points < 2 {
            return Err(invalid("points", format!("need at least 2, got {}", self.points)));
        }
        Ok(())
    }
}

impl MagicParams {
    pub fn detuning_mode(&self) -> fortcav::stark::DetuningMode {
        if self.resolve_hyperfine {
            fortcav::stark::DetuningMode::HyperfineResolved
        } else {
            fortcav::stark::DetuningMode::FineStructure
        }
    }

    pub fn parsed_criterion(&self) -> Result<fortcav::stark::MagicCriterion, CliError> {
        use fortcav::stark::MagicCriterion;
        let c = self.criterion.to_ascii_lowercase();
        if c == "f4-mean" {
            return Ok(MagicCriterion::MeanF4);
        }
        if let Some(m) = c.strip_prefix("f4-m") {
            if let Ok(m) = m.parse::<i32>() {
                if (0..=4).contains(&m) {
                    return Ok(MagicCriterion::Sublevel { two_f: 8, two_mf: 2 * m });
                }
            }
        }
        Err(invalid(
            "criterion",
            format!("expected f4-mean or f4-m0..f4-m4, got '{}'", self.criterion),
        ))
    }

    fn validate(&self) -> Result<(), CliError> {
        let (a, _) = check_window("bracket", &self.bracket)?;
        check_positive("bracket", a)?;
        self.parsed_criterion()?;
        Ok(())
    }
}

impl TransmitParams {
    fn validate(&self) -> Result<(), CliError> {
        check_window("detuning-scan", &self.detuning_scan)?;
        if self.points < 2 {
            return Err(invalid("points", format!("need at least 2, got {}", self.points)));
        }
        check_positive("m-bar-empty", self.m_bar_empty)?;
        if self.m_bar_empty >= fortcav::cavity::WEAK_DRIVE_LIMIT {
            return Err(invalid(
                "m-bar-empty",
                format!(
                    "must stay below the weak-drive limit {}, got {}",
                    fortcav::cavity::WEAK_DRIVE_LIMIT,
                    self.m_bar_empty
                ),
            ));
        }
        if self.master_equation && self.atoms > 2 {
            return Err(invalid(
                "master-equation",
                format!("cross-check supports at most 2 atoms, got {}", self.atoms),
            ));
        }
        Ok(())
    }
}

impl StaircaseLevelsParams {
    fn validate(&self) -> Result<(), CliError> {
        check_positive("m-bar-empty", self.m_bar_empty)?;
        if self.m_bar_empty >= fortcav::cavity::WEAK_DRIVE_LIMIT {
            return Err(invalid(
                "m-bar-empty",
                format!(
                    "must stay below the weak-drive limit {}, got {}",
                    fortcav::cavity::WEAK_DRIVE_LIMIT,
                    self.m_bar_empty
                ),
            ));
        }
        if let Some(g) = self.g_hz {
            check_positive("g-hz", g)?;
        }
        Ok(())
    }
}

impl LifetimeParams {
    fn validate(&self) -> Result<(), CliError> {
        if self.delays.is_empty() {
            return Err(invalid("delays", "need at least one delay"));
        }
        for (i, d) in self.delays.iter().enumerate() {
            if !(d.is_finite() && *d > 0.0) {
                return Err(invalid("delays", format!("entry {i} must be positive, got {d}")));
            }
        }
        if self.ensemble < 100 {
            return Err(invalid(
                "ensemble",
                format!("need at least 100 attempts per delay, got {}", self.ensemble),
            ));
        }
        check_nonnegative("n-bar", self.n_bar)?;
        check_nonnegative("cooling-pulse-us", self.cooling_pulse_us)?;
        check_positive("depth-mk", self.depth_mk)?;
        check_positive("wavelength-nm", self.wavelength_nm)?;
        check_waist(self.waist_um)?;
        check_nonnegative("recoil-uk-per-s", self.recoil_uk_per_s)?;
        check_nonnegative("tau-p-s", self.tau_p_s)?;
        check_nonnegative("raman-rate-per-s", self.raman_rate_per_s)?;
        check_nonnegative("background-rate-per-s", self.background_rate_per_s)?;
        if !(self.redetect_efficiency > 0.0 && self.redetect_efficiency <= 1.0) {
            return Err(invalid(
                "redetect-efficiency",
                format!("must lie in (0, 1], got {}", self.redetect_efficiency),
            ));
        }
        Ok(())
    }
}

impl RepumpParams {
    pub fn parsed_initial(&self) -> Result<fortcav::pumping::PumpingState, CliError> {
        match self.initial.to_ascii_lowercase().as_str() {
            "unpolarized-f3" => Ok(fortcav::pumping::PumpingState::unpolarized_f3()),
            "unpolarized-f4" => Ok(fortcav::pumping::PumpingState::unpolarized_f4()),
            other => Err(invalid(
                "initial",
                format!("expected unpolarized-F3 or unpolarized-F4, got '{other}'"),
            )),
        }
    }

    fn validate(&self) -> Result<(), CliError> {
        self.parsed_initial()?;
        check_positive("duration", self.duration)?;
        if self.points < 4 {
            return Err(invalid("points", format!("need at least 4, got {}", self.points)));
        }
        check_unit_interval("ellipticity", self.ellipticity)?;
        check_positive("depth-mk", self.depth_mk)?;
        check_positive("wavelength-nm", self.wavelength_nm)?;
        check_waist(self.waist_um)
    }
}

impl StaircaseParams {
    fn validate(&self) -> Result<(), CliError> {
        if let Some(input) = &self.input {
            if !input.is_file() {
                return Err(invalid("in", format!("no such file: {}", input.display())));
            }
        } else {
            check_positive("duration", self.duration)?;
            check_positive("bin-width", self.bin_width)?;
            check_positive("g-eff-hz", self.g_eff_hz)?;
            check_nonnegative("empty-flux-per-s", self.empty_flux_per_s)?;
            check_unit_interval("quantum-efficiency", self.quantum_efficiency)?;
            for (i, w) in self.loss_times.windows(2).enumerate() {
                if w[1] < w[0] {
                    return Err(invalid(
                        "loss-times",
                        format!("must be ascending; entries {i} and {} reversed", i + 1),
                    ));
                }
            }
            for (i, t) in self.loss_times.iter().enumerate() {
                if !(t.is_finite() && *t >= 0.0) {
                    return Err(invalid(
                        "loss-times",
                        format!("entry {i} must be nonnegative, got {t}"),
                    ));
                }
            }
        }
        if let Some(p) = self.penalty {
            check_positive("penalty", p)?;
        }
        if self.min_segment_bins == 0 {
            return Err(invalid("min-segment-bins", "must be at least 1"));
        }
        Ok(())
    }
}

impl HeatingBudgetParams {
    fn validate(&self) -> Result<(), CliError> {
        check_positive("depth-mk", self.depth_mk)?;
        check_positive("wavelength-nm", self.wavelength_nm)?;
        check_waist(self.waist_um)?;
        check_unit_interval("ellipticity", self.ellipticity)?;
        if self.samples == 0 {
            return Err(invalid("samples", "need at least one trajectory"));
        }
        check_positive("duration", self.duration)?;
        check_nonnegative("recoil-uk-per-s", self.recoil_uk_per_s)?;
        check_nonnegative("tau-p-s", self.tau_p_s)?;
        check_nonnegative("background-rate-per-s", self.background_rate_per_s)
    }
}

impl FitLifetimeParams {
    fn validate(&self) -> Result<(), CliError> {
        if !self.input.is_file() {
            return Err(invalid("in", format!("no such file: {}", self.input.display())));
        }
        Ok(())
    }
}
