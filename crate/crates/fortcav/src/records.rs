//! Transmission records and their analysis: synthesis of binned photon
//! counts from piecewise-constant flux levels, transit triggering, staircase
//! change-point segmentation, and survival/repump curve fitting.

use std::io::Write as _;
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Poisson};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum RecordsError {
    #[error("invalid argument: {0}")]
    BadArgument(String),
    #[error("loss times must be sorted ascending; index {index} breaks the order")]
    UnsortedLossTimes { index: usize },
    #[error("baseline unidentifiable: {0}")]
    BaselineUnidentifiable(String),
    #[error("fit is not identifiable: {0}")]
    NonIdentifiable(String),
    #[error("fit failed: {message}; residuals {residuals:?}")]
    FitFailed { message: String, residuals: Vec<f64> },
    #[error("record I/O: {0}")]
    Io(#[from] std::io::Error),
    #[error("record metadata: {0}")]
    Meta(#[from] serde_json::Error),
    #[error("malformed record file: {0}")]
    Malformed(String),
}

/// Planted ground truth carried by synthetic records.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct RecordTruth {
    /// Times at which the atom number drops by one.
    pub loss_times_s: Vec<f64>,
    /// Mean detected flux for 0..=N_max atoms.
    pub levels_flux_per_s: Vec<f64>,
    pub initial_atoms: usize,
}

/// A binned photon-counting trace with its acquisition metadata.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PhotonRecord {
    pub bin_width_s: f64,
    pub counts: Vec<u64>,
    pub noise_model: String,
    pub quantum_efficiency: f64,
    pub truth: Option<RecordTruth>,
}

/// Detection bandwidth of 1 kHz → 1 ms bins.
pub const DEFAULT_BIN_WIDTH_S: f64 = 1.0e-3;

impl PhotonRecord {
    pub fn duration_s(&self) -> f64 {
        self.counts.len() as f64 * self.bin_width_s
    }

    /// Mean detected flux in a bin range, s⁻¹.
    pub fn mean_flux(&self, from_bin: usize, to_bin: usize) -> f64 {
        let n = to_bin.saturating_sub(from_bin).max(1) as f64;
        let total: u64 = self.counts[from_bin..to_bin].iter().sum();
        total as f64 / (n * self.bin_width_s)
    }

    /// CSV (time, counts) plus a JSON sidecar `<path>.meta.json` holding the
    /// bin width, noise model, efficiency, and any planted truth.
    pub fn write_csv(&self, path: &Path) -> Result<(), RecordsError> {
        let mut f = std::fs::File::create(path)?;
        writeln!(f, "time_s,counts")?;
        for (i, c) in self.counts.iter().enumerate() {
            writeln!(f, "{:.6},{}", i as f64 * self.bin_width_s, c)?;
        }
        let meta = serde_json::json!({
            "bin_width_s": self.bin_width_s,
            "noise_model": self.noise_model,
            "quantum_efficiency": self.quantum_efficiency,
            "truth": self.truth,
        });
        std::fs::write(
            sidecar_path(path),
            serde_json::to_string_pretty(&meta)? + "\n",
        )?;
        Ok(())
    }

    pub fn read_csv(path: &Path) -> Result<Self, RecordsError> {
        let text = std::fs::read_to_string(path)?;
        let mut counts = Vec::new();
        let mut times = Vec::new();
        let mut saw_header = false;
        for (ln, line) in text.lines().enumerate() {
            // '#' lines are provenance comments.
            if line.starts_with('#') || line.trim().is_empty() {
                continue;
            }
            if !saw_header {
                if !line.starts_with("time_s") {
                    return Err(RecordsError::Malformed(format!(
                        "expected 'time_s,counts' header, got '{line}'"
                    )));
                }
                saw_header = true;
                continue;
            }
            let mut parts = line.split(',');
            let (t, c) = (parts.next(), parts.next());
            match (t, c) {
                (Some(t), Some(c)) => {
                    times.push(t.trim().parse::<f64>().map_err(|e| {
                        RecordsError::Malformed(format!("line {}: {e}", ln + 1))
                    })?);
                    counts.push(c.trim().parse::<u64>().map_err(|e| {
                        RecordsError::Malformed(format!("line {}: {e}", ln + 1))
                    })?);
                }
                _ => return Err(RecordsError::Malformed(format!("line {} too short", ln + 1))),
            }
        }
        let meta_path = sidecar_path(path);
        let (bin_width_s, noise_model, quantum_efficiency, truth) = if meta_path.exists() {
            let meta: serde_json::Value =
                serde_json::from_str(&std::fs::read_to_string(&meta_path)?)?;
            (
                meta["bin_width_s"].as_f64().unwrap_or(DEFAULT_BIN_WIDTH_S),
                meta["noise_model"].as_str().unwrap_or("unknown").to_string(),
                meta["quantum_efficiency"].as_f64().unwrap_or(1.0),
                serde_json::from_value(meta["truth"].clone()).unwrap_or(None),
            )
        } else {
            let width = if times.len() > 1 { times[1] - times[0] } else { DEFAULT_BIN_WIDTH_S };
            (width, "unknown".to_string(), 1.0, None)
        };
        Ok(PhotonRecord { bin_width_s, counts, noise_model, quantum_efficiency, truth })
    }
}

fn sidecar_path(path: &Path) -> std::path::PathBuf {
    let mut s = path.as_os_str().to_os_string();
    s.push(".meta.json");
    std::path::PathBuf::from(s)
}

/// Expected counts in [t0, t1) for a piecewise-constant flux that steps down
/// one atom at each loss time.
fn expected_counts(
    levels: &[f64],
    loss_times: &[f64],
    qe: f64,
    t0: f64,
    t1: f64,
) -> f64 {
    // Atom number at time t is initial minus the losses that happened.
    let n0 = loss_times.len();
    let mut acc = 0.0;
    let mut t = t0;
    while t < t1 {
        let lost = loss_times.partition_point(|&lt| lt <= t);
        let next_edge = loss_times.get(lost).copied().unwrap_or(f64::INFINITY).min(t1);
        acc += levels[n0 - lost] * (next_edge - t);
        t = next_edge;
    }
    acc * qe
}

/// Synthesize a Poisson-sampled transmission record: `levels[n]` is the mean
/// detected flux with n atoms; the atom number starts at `loss_times.len()`
/// and drops by one at each loss time.
pub fn synthesize_record(
    levels_flux_per_s: &[f64],
    loss_times_s: &[f64],
    duration_s: f64,
    bin_width_s: f64,
    quantum_efficiency: f64,
    seed: u64,
) -> Result<PhotonRecord, RecordsError> {
    if bin_width_s <= 0.0 {
        return Err(RecordsError::BadArgument("bin width must be positive".into()));
    }
    if duration_s < 0.0 {
        return Err(RecordsError::BadArgument("duration must be nonnegative".into()));
    }
    if !(0.0..=1.0).contains(&quantum_efficiency) {
        return Err(RecordsError::BadArgument("quantum efficiency must lie in [0, 1]".into()));
    }
    if levels_flux_per_s.len() <= loss_times_s.len() {
        return Err(RecordsError::BadArgument(format!(
            "{} levels cannot cover an initial atom number of {}",
            levels_flux_per_s.len(),
            loss_times_s.len()
        )));
    }
    if levels_flux_per_s.iter().any(|&f| f < 0.0 || !f.is_finite()) {
        return Err(RecordsError::BadArgument("flux levels must be finite and ≥ 0".into()));
    }
    for (i, w) in loss_times_s.windows(2).enumerate() {
        if w[1] < w[0] {
            return Err(RecordsError::UnsortedLossTimes { index: i + 1 });
        }
    }

    let n_bins = (duration_s / bin_width_s).round() as usize;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut counts = Vec::with_capacity(n_bins);
    for b in 0..n_bins {
        let mu = expected_counts(
            levels_flux_per_s,
            loss_times_s,
            quantum_efficiency,
            b as f64 * bin_width_s,
            (b + 1) as f64 * bin_width_s,
        );
        let c = if mu > 0.0 {
            Poisson::new(mu)
                .map_err(|e| RecordsError::BadArgument(format!("poisson mean {mu}: {e}")))?
                .sample(&mut rng) as u64
        } else {
            0
        };
        counts.push(c);
    }
    Ok(PhotonRecord {
        bin_width_s,
        counts,
        noise_model: "poisson".into(),
        quantum_efficiency,
        truth: Some(RecordTruth {
            loss_times_s: loss_times_s.to_vec(),
            levels_flux_per_s: levels_flux_per_s.to_vec(),
            initial_atoms: loss_times_s.len(),
        }),
    })
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TriggerPolicy {
    /// Bins at the start of the record taken as the empty-cavity baseline.
    pub baseline_bins: usize,
    /// Per-record false-positive probability; the per-bin threshold is
    /// Bonferroni-corrected by the number of scanned bins.
    pub significance: f64,
    /// Explicit threshold in counts per bin, overriding the significance
    /// calculation; a value at or below the baseline is degenerate.
    pub threshold_counts: Option<f64>,
}

impl Default for TriggerPolicy {
    fn default() -> Self {
        TriggerPolicy { baseline_bins: 50, significance: 1.0e-4, threshold_counts: None }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct TriggerReport {
    /// First bin of each above-threshold excursion.
    pub trigger_bins: Vec<usize>,
    pub trigger_times_s: Vec<f64>,
    pub baseline_counts: f64,
    pub threshold_counts: f64,
    /// Set when the policy makes every bin a trigger.
    pub degenerate: bool,
}

/// Inverse standard-normal CDF (Acklam's rational approximation, |ε| < 1.2e-9).
fn normal_quantile(p: f64) -> f64 {
    assert!(p > 0.0 && p < 1.0);
    const A: [f64; 6] = [
        -3.969683028665376e+01,
        2.209460984245205e+02,
        -2.759285104469687e+02,
        1.383577518672690e+02,
        -3.066479806614716e+01,
        2.506628277459239e+00,
    ];
    const B: [f64; 5] = [
        -5.447609879822406e+01,
        1.615858368580409e+02,
        -1.556989798598866e+02,
        6.680131188771972e+01,
        -1.328068155288572e+01,
    ];
    const C: [f64; 6] = [
        -7.784894002430293e-03,
        -3.223964580411365e-01,
        -2.400758277161838e+00,
        -2.549732539343734e+00,
        4.374664141464968e+00,
        2.938163982698783e+00,
    ];
    const D: [f64; 4] = [
        7.784695709041462e-03,
        3.224671290700398e-01,
        2.445134137142996e+00,
        3.754408661907416e+00,
    ];
    let p_low = 0.02425;
    if p < p_low {
        let q = (-2.0 * p.ln()).sqrt();
        (((((C[0] * q + C[1]) * q + C[2]) * q + C[3]) * q + C[4]) * q + C[5])
            / ((((D[0] * q + D[1]) * q + D[2]) * q + D[3]) * q + 1.0)
    } else if p <= 1.0 - p_low {
        let q = p - 0.5;
        let r = q * q;
        (((((A[0] * r + A[1]) * r + A[2]) * r + A[3]) * r + A[4]) * r + A[5]) * q
            / (((((B[0] * r + B[1]) * r + B[2]) * r + B[3]) * r + B[4]) * r + 1.0)
    } else {
        -normal_quantile(1.0 - p)
    }
}

/// Find upward transits: bins whose counts exceed the baseline by the
/// Bonferroni-corrected significance threshold. Consecutive bins above
/// threshold collapse into a single trigger at the excursion's first bin.
pub fn detect_trigger(
    record: &PhotonRecord,
    policy: &TriggerPolicy,
) -> Result<TriggerReport, RecordsError> {
    if record.counts.is_empty() {
        return Err(RecordsError::BadArgument("empty record".into()));
    }
    if policy.baseline_bins < 10 {
        return Err(RecordsError::BadArgument("need ≥ 10 baseline bins".into()));
    }
    if !(0.0 < policy.significance && policy.significance < 1.0) {
        return Err(RecordsError::BadArgument("significance must lie in (0, 1)".into()));
    }
    if record.counts.len() < policy.baseline_bins + 1 {
        return Err(RecordsError::BaselineUnidentifiable(format!(
            "record has {} bins, needs more than the {} baseline bins",
            record.counts.len(),
            policy.baseline_bins
        )));
    }
    let nb = policy.baseline_bins;
    let base: Vec<f64> = record.counts[..nb].iter().map(|&c| c as f64).collect();
    let mean = base.iter().sum::<f64>() / nb as f64;
    let var = base.iter().map(|c| (c - mean).powi(2)).sum::<f64>() / (nb as f64 - 1.0);
    // A quiet Poisson prefix has variance ≈ mean; a transit or step inside
    // the calibration window inflates it far beyond that.
    if mean > 0.0 && var / mean > 3.0 {
        return Err(RecordsError::BaselineUnidentifiable(format!(
            "baseline prefix is overdispersed (variance/mean = {:.1}); \
             the calibration window is not quiet",
            var / mean
        )));
    }

    let scanned = record.counts.len() - nb;
    let threshold = match policy.threshold_counts {
        Some(t) => t,
        None => {
            // Half the budget split over the scanned bins, with a
            // Cornish-Fisher skew term and continuity correction so the
            // Poisson right tail is not underestimated: the realized
            // per-record rate then sits safely inside the significance.
            let per_bin =
                (policy.significance / (2.0 * scanned as f64)).max(f64::MIN_POSITIVE);
            let z = normal_quantile(1.0 - per_bin.min(0.5));
            let sigma = mean.max(1.0).sqrt();
            mean + sigma * (z + (z * z - 1.0) / (6.0 * sigma)) + 0.5
        }
    };
    let degenerate = threshold <= mean;

    let mut trigger_bins = Vec::new();
    let mut above = false;
    for (i, &c) in record.counts.iter().enumerate().skip(nb) {
        let hit = (c as f64) > threshold || degenerate;
        if hit && !above {
            trigger_bins.push(i);
        }
        above = hit && !degenerate;
        if degenerate {
            above = false; // every bin reported
        }
    }
    let times = trigger_bins.iter().map(|&b| b as f64 * record.bin_width_s).collect();
    Ok(TriggerReport {
        trigger_bins,
        trigger_times_s: times,
        baseline_counts: mean,
        threshold_counts: threshold,
        degenerate,
    })
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PenaltyPolicy {
    /// Penalty per change point on the variance-stabilized squared-error
    /// scale; `None` uses 3·ln(n).
    pub penalty: Option<f64>,
    pub min_segment_bins: usize,
}

impl Default for PenaltyPolicy {
    fn default() -> Self {
        PenaltyPolicy { penalty: None, min_segment_bins: 3 }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct StepSegmentation {
    /// First bin of each new segment, strictly increasing.
    pub change_points: Vec<usize>,
    pub change_times_s: Vec<f64>,
    /// Mean detected flux per segment, s⁻¹.
    pub segment_flux_per_s: Vec<f64>,
    /// Atom number per segment when reference levels were provided.
    pub atom_numbers: Option<Vec<usize>>,
    /// Set when no levels were available to map segments to atom numbers.
    pub levels_only: bool,
}

/// Counts are variance-stabilized with the Anscombe root (variance ≈ 1/4
/// for Poisson data) so one penalty works across all levels.
fn anscombe(c: u64) -> f64 {
    (c as f64 + 0.375).sqrt()
}

/// Best single split of y[lo..hi) by squared-error reduction.
fn best_split(prefix: &[f64], prefix2: &[f64], lo: usize, hi: usize, min_seg: usize) -> Option<(usize, f64)> {
    let seg_cost = |a: usize, b: usize| -> f64 {
        let n = (b - a) as f64;
        let s = prefix[b] - prefix[a];
        let s2 = prefix2[b] - prefix2[a];
        s2 - s * s / n
    };
    if hi - lo < 2 * min_seg {
        return None;
    }
    let whole = seg_cost(lo, hi);
    let mut best = None;
    for split in (lo + min_seg)..=(hi - min_seg) {
        let gain = whole - seg_cost(lo, split) - seg_cost(split, hi);
        if best.map_or(true, |(_, g)| gain > g) {
            best = Some((split, gain));
        }
    }
    best
}

fn binary_segmentation(
    prefix: &[f64],
    prefix2: &[f64],
    lo: usize,
    hi: usize,
    min_seg: usize,
    penalty: f64,
    out: &mut Vec<usize>,
) {
    if let Some((split, gain)) = best_split(prefix, prefix2, lo, hi, min_seg) {
        if gain > penalty {
            binary_segmentation(prefix, prefix2, lo, split, min_seg, penalty, out);
            out.push(split);
            binary_segmentation(prefix, prefix2, split, hi, min_seg, penalty, out);
        }
    }
}

/// Penalized change-point segmentation of a staircase record into
/// piecewise-constant levels, mapped to atom numbers by nearest reference
/// level when `levels_flux_per_s` (indexed by atom number) is given.
pub fn segment_staircase(
    record: &PhotonRecord,
    policy: &PenaltyPolicy,
    levels_flux_per_s: Option<&[f64]>,
) -> Result<StepSegmentation, RecordsError> {
    let n = record.counts.len();
    if n < 10 {
        return Err(RecordsError::BadArgument(format!(
            "need at least 10 bins to segment, got {n}"
        )));
    }
    if policy.min_segment_bins == 0 {
        return Err(RecordsError::BadArgument("minimum segment length must be ≥ 1".into()));
    }
    let y: Vec<f64> = record.counts.iter().map(|&c| anscombe(c)).collect();
    let mut prefix = vec![0.0; n + 1];
    let mut prefix2 = vec![0.0; n + 1];
    for (i, &v) in y.iter().enumerate() {
        prefix[i + 1] = prefix[i] + v;
        prefix2[i + 1] = prefix2[i] + v * v;
    }
    // Squared-error scale is unit-variance after the transform (×4).
    let penalty = policy.penalty.unwrap_or(3.0 * (n as f64).ln()) / 4.0;
    let mut cps = Vec::new();
    binary_segmentation(&prefix, &prefix2, 0, n, policy.min_segment_bins, penalty, &mut cps);
    cps.sort_unstable();

    let mut edges = vec![0];
    edges.extend(&cps);
    edges.push(n);
    let mut seg_flux = Vec::new();
    for w in edges.windows(2) {
        let total: u64 = record.counts[w[0]..w[1]].iter().sum();
        let denom = (w[1] - w[0]) as f64 * record.bin_width_s * record.quantum_efficiency;
        seg_flux.push(total as f64 / denom);
    }
    let atom_numbers = levels_flux_per_s.map(|levels| {
        seg_flux
            .iter()
            .map(|&f| {
                levels
                    .iter()
                    .enumerate()
                    .min_by(|(_, a), (_, b)| {
                        (f - **a).abs().total_cmp(&(f - **b).abs())
                    })
                    .map(|(i, _)| i)
                    .unwrap_or(0)
            })
            .collect::<Vec<usize>>()
    });
    let levels_only = atom_numbers.is_none();
    Ok(StepSegmentation {
        change_times_s: cps.iter().map(|&b| b as f64 * record.bin_width_s).collect(),
        change_points: cps,
        segment_flux_per_s: seg_flux,
        atom_numbers,
        levels_only,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct LifetimeFit {
    pub tau_s: f64,
    pub tau_sigma_s: f64,
    pub p0: f64,
    /// Binomial deviance against the saturated model.
    pub deviance: f64,
}

/// One survival measurement: `successes` may be fractional for noiseless
/// synthetic curves.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct SurvivalDatum {
    pub delay_s: f64,
    pub successes: f64,
    pub trials: u64,
}

fn binom_loglik(data: &[SurvivalDatum], scale: f64, tau_scaled: f64, p0: f64) -> f64 {
    let mut ll = 0.0;
    for d in data {
        let p = (p0 * (-d.delay_s / (scale * tau_scaled)).exp()).clamp(1e-12, 1.0 - 1e-12);
        ll += d.successes * p.ln() + (d.trials as f64 - d.successes) * (1.0 - p).ln();
    }
    ll
}

fn golden_max(mut lo: f64, mut hi: f64, mut f: impl FnMut(f64) -> f64) -> f64 {
    let phi = 0.5 * (5.0_f64.sqrt() - 1.0);
    let mut x1 = hi - phi * (hi - lo);
    let mut x2 = lo + phi * (hi - lo);
    let mut f1 = f(x1);
    let mut f2 = f(x2);
    for _ in 0..120 {
        if hi - lo < 1e-12 {
            break;
        }
        if f1 > f2 {
            hi = x2;
            x2 = x1;
            f2 = f1;
            x1 = hi - phi * (hi - lo);
            f1 = f(x1);
        } else {
            lo = x1;
            x1 = x2;
            f1 = f2;
            x2 = lo + phi * (hi - lo);
            f2 = f(x2);
        }
    }
    0.5 * (lo + hi)
}

/// Maximum-likelihood exponential survival fit P(t) = P0·exp(−t/τ) under
/// binomial sampling; uncertainty from the profile-likelihood curvature.
/// Internally delays are scaled by their maximum, so rescaling every delay
/// by a constant rescales τ by exactly that constant.
pub fn fit_lifetime(data: &[SurvivalDatum]) -> Result<LifetimeFit, RecordsError> {
    if data.len() < 3 {
        return Err(RecordsError::BadArgument(format!(
            "need at least 3 delay points, got {}",
            data.len()
        )));
    }
    for d in data {
        if d.trials == 0 || d.successes < 0.0 || d.successes > d.trials as f64 || d.delay_s < 0.0 {
            return Err(RecordsError::BadArgument(format!(
                "bad survival point: delay {}, {}/{}",
                d.delay_s, d.successes, d.trials
            )));
        }
    }
    if data.iter().all(|d| d.successes == 0.0) {
        return Err(RecordsError::NonIdentifiable(
            "every delay has zero successes; the decay time is unconstrained".into(),
        ));
    }
    let scale = data.iter().map(|d| d.delay_s).fold(0.0, f64::max);
    if scale <= 0.0 {
        return Err(RecordsError::NonIdentifiable("all delays are zero".into()));
    }

    let profile = |ln_tau: f64, data: &[SurvivalDatum]| -> (f64, f64) {
        let tau = ln_tau.exp();
        let p0 = golden_max(1e-9, 1.0, |p0| binom_loglik(data, scale, tau, p0));
        (binom_loglik(data, scale, tau, p0), p0)
    };
    let ln_tau = golden_max((0.01f64).ln(), (100.0f64).ln(), |lt| profile(lt, data).0);
    let (ll0, p0) = profile(ln_tau, data);
    let tau_scaled = ln_tau.exp();

    // Curvature of the profile log-likelihood in τ (scaled units).
    let h = tau_scaled * 1e-4;
    let ll_p = profile((tau_scaled + h).ln(), data).0;
    let ll_m = profile((tau_scaled - h).ln(), data).0;
    let d2 = (ll_p - 2.0 * ll0 + ll_m) / (h * h);
    let sigma_scaled = if d2 < 0.0 { (-1.0 / d2).sqrt() } else { f64::INFINITY };

    let mut deviance = 0.0;
    for d in data {
        let n = d.trials as f64;
        let p = (p0 * (-d.delay_s / (scale * tau_scaled)).exp()).clamp(1e-12, 1.0 - 1e-12);
        let k = d.successes;
        if k > 0.0 {
            deviance += 2.0 * k * (k / (n * p)).ln();
        }
        if k < n {
            deviance += 2.0 * (n - k) * ((n - k) / (n * (1.0 - p))).ln();
        }
    }

    Ok(LifetimeFit {
        tau_s: tau_scaled * scale,
        tau_sigma_s: sigma_scaled * scale,
        p0,
        deviance,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct RepumpFit {
    pub tau_r_s: f64,
    pub tau_sigma_s: f64,
    pub f_equilibrium: f64,
}

/// Least-squares fit of f4(t) = f_eq·(1 − exp(−t/τ_R)).
pub fn fit_repump(times_s: &[f64], f4: &[f64]) -> Result<RepumpFit, RecordsError> {
    if times_s.len() != f4.len() || times_s.len() < 4 {
        return Err(RecordsError::BadArgument(format!(
            "need at least 4 matched points, got {} times and {} values",
            times_s.len(),
            f4.len()
        )));
    }
    let t_max = times_s.iter().fold(0.0f64, |a, &b| a.max(b));
    if t_max <= 0.0 {
        return Err(RecordsError::NonIdentifiable("all times are zero".into()));
    }
    let sse = |tau: f64| -> (f64, f64) {
        let (mut num, mut den) = (0.0, 0.0);
        for (&t, &f) in times_s.iter().zip(f4) {
            let e = 1.0 - (-t / tau).exp();
            num += f * e;
            den += e * e;
        }
        let feq = if den > 0.0 { num / den } else { 0.0 };
        let mut s = 0.0;
        for (&t, &f) in times_s.iter().zip(f4) {
            let r = f - feq * (1.0 - (-t / tau).exp());
            s += r * r;
        }
        (s, feq)
    };
    let ln_tau = golden_max((t_max / 300.0).ln(), (t_max * 300.0).ln(), |lt| -sse(lt.exp()).0);
    let tau = ln_tau.exp();
    let (s0, feq) = sse(tau);
    if !s0.is_finite() || !feq.is_finite() {
        let residuals: Vec<f64> = times_s
            .iter()
            .zip(f4)
            .map(|(&t, &f)| f - feq * (1.0 - (-t / tau).exp()))
            .collect();
        return Err(RecordsError::FitFailed {
            message: "non-finite repump fit".into(),
            residuals,
        });
    }
    // Residual-variance-based curvature error bar.
    let dof = (times_s.len() as f64 - 2.0).max(1.0);
    let var = s0 / dof;
    let h = tau * 1e-4;
    let d2 = (sse(tau + h).0 - 2.0 * s0 + sse(tau - h).0) / (h * h);
    let sigma = if d2 > 0.0 { (2.0 * var / d2).sqrt() } else { f64::INFINITY };
    Ok(RepumpFit { tau_r_s: tau, tau_sigma_s: sigma, f_equilibrium: feq })
}

/// Survival CSV: delay_s,successes,trials.
pub fn write_survival_csv(path: &Path, data: &[SurvivalDatum]) -> Result<(), RecordsError> {
    let mut f = std::fs::File::create(path)?;
    writeln!(f, "delay_s,successes,trials")?;
    for d in data {
        writeln!(f, "{},{},{}", d.delay_s, d.successes, d.trials)?;
    }
    Ok(())
}

pub fn read_survival_csv(path: &Path) -> Result<Vec<SurvivalDatum>, RecordsError> {
    let text = std::fs::read_to_string(path)?;
    let mut out = Vec::new();
    let mut saw_header = false;
    for (ln, line) in text.lines().enumerate() {
        if line.starts_with('#') || line.trim().is_empty() {
            continue;
        }
        if !saw_header {
            if !line.starts_with("delay_s") {
                return Err(RecordsError::Malformed(format!(
                    "expected 'delay_s,successes,trials' header, got '{line}'"
                )));
            }
            saw_header = true;
            continue;
        }
        let fields: Vec<&str> = line.split(',').map(str::trim).collect();
        if fields.len() != 3 {
            return Err(RecordsError::Malformed(format!("line {}: need 3 fields", ln + 1)));
        }
        let parse = |s: &str| -> Result<f64, RecordsError> {
            s.parse().map_err(|e| RecordsError::Malformed(format!("line {}: {e}", ln + 1)))
        };
        out.push(SurvivalDatum {
            delay_s: parse(fields[0])?,
            successes: parse(fields[1])?,
            trials: parse(fields[2])? as u64,
        });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cavity::{staircase_levels, AtomCoupling, CavitySystem, DriveConfig};
    use approx::assert_relative_eq;
    use rand::Rng;

    #[test]
    fn synthesized_flux_matches_the_planted_level() {
        // One atom forever at the weak-drive working point: flux 5.28e5/s
        // → 528 counts per 1 ms bin.
        let system = CavitySystem::cs_d2_default();
        let drive = DriveConfig { probe_detuning_hz: 0.0, drive_amp_hz: 0.0 };
        let flux = {
            // m̄ = 0.01 by construction: flux = 2·(2πκ)·m̄.
            let _ = (&system, &drive);
            2.0 * 2.0 * std::f64::consts::PI * system.kappa_hz * 0.01
        };
        let rec = synthesize_record(&[flux], &[], 10.0, DEFAULT_BIN_WIDTH_S, 1.0, 11).unwrap();
        assert_eq!(rec.counts.len(), 10_000);
        let mean =
            rec.counts.iter().map(|&c| c as f64).sum::<f64>() / rec.counts.len() as f64;
        assert_relative_eq!(mean, 528.0, max_relative = 0.01);
        // Poisson dispersion: variance/mean ≈ 1 over 10⁴ bins.
        let var = rec
            .counts
            .iter()
            .map(|&c| (c as f64 - mean).powi(2))
            .sum::<f64>()
            / (rec.counts.len() as f64 - 1.0);
        let dispersion = var / mean;
        assert!(
            (dispersion - 1.0).abs() < 4.0 * (2.0 / rec.counts.len() as f64).sqrt(),
            "dispersion {dispersion}"
        );
    }

    #[test]
    fn zero_duration_record_is_empty() {
        let rec = synthesize_record(&[1000.0], &[], 0.0, 1e-3, 1.0, 1).unwrap();
        assert!(rec.counts.is_empty());
        assert_eq!(rec.duration_s(), 0.0);
    }

    #[test]
    fn unsorted_loss_times_are_rejected() {
        let err =
            synthesize_record(&[0.0, 1.0e4, 2.0e4], &[0.5, 0.2], 1.0, 1e-3, 1.0, 1).unwrap_err();
        assert!(matches!(err, RecordsError::UnsortedLossTimes { index: 1 }));
    }

    #[test]
    fn loss_mid_bin_weights_the_expected_counts() {
        // A loss 30% into the only bin: expectation is the exact piecewise
        // integral, not a bin-aligned approximation.
        let levels = [100.0e3, 400.0e3]; // 0 atoms : 1 atom
        let expect = 0.3 * 400.0 + 0.7 * 100.0;
        let n = 4000;
        let mut total = 0u64;
        for seed in 0..n {
            let rec =
                synthesize_record(&levels, &[0.3e-3], 1.0e-3, 1.0e-3, 1.0, seed).unwrap();
            total += rec.counts[0];
        }
        let mean = total as f64 / n as f64;
        let se = (expect / n as f64).sqrt();
        assert!(
            (mean - expect).abs() < 4.0 * se,
            "mean {mean} vs {expect} ± {se}"
        );
    }

    #[test]
    fn quantum_efficiency_scales_the_counts() {
        let full = synthesize_record(&[1.0e6], &[], 2.0, 1e-3, 1.0, 5).unwrap();
        let half = synthesize_record(&[1.0e6], &[], 2.0, 1e-3, 0.5, 5).unwrap();
        let m_full =
            full.counts.iter().map(|&c| c as f64).sum::<f64>() / full.counts.len() as f64;
        let m_half =
            half.counts.iter().map(|&c| c as f64).sum::<f64>() / half.counts.len() as f64;
        assert_relative_eq!(m_half / m_full, 0.5, max_relative = 0.01);
    }

    /// Baseline, then a short planted transit that lifts transmission 3.2×.
    fn transit_record(seed: u64, f0: f64, start_bin: usize, len: usize) -> PhotonRecord {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let total = 400;
        let mut counts = Vec::with_capacity(total);
        for b in 0..total {
            let flux = if (start_bin..start_bin + len).contains(&b) { 3.2 * f0 } else { f0 };
            let mu = flux * 1e-3;
            counts.push(Poisson::new(mu).unwrap().sample(&mut rng) as u64);
        }
        PhotonRecord {
            bin_width_s: 1e-3,
            counts,
            noise_model: "poisson".into(),
            quantum_efficiency: 1.0,
            truth: None,
        }
    }

    #[test]
    fn trigger_lands_on_the_planted_transit() {
        let f0 = 30.0e3; // 30 counts per bin: per-bin rise SNR ≈ 12
        let mut hits = 0;
        let n = 1000;
        for seed in 0..n {
            let start = 120 + (seed as usize % 100);
            let rec = transit_record(seed, f0, start, 5);
            let rep = detect_trigger(&rec, &TriggerPolicy::default()).unwrap();
            if rep.trigger_bins.len() == 1
                && (rep.trigger_bins[0] as i64 - start as i64).abs() <= 2
            {
                hits += 1;
            }
        }
        assert!(hits >= 990, "exactly-one-trigger rate {hits}/1000");
    }

    #[test]
    fn flat_record_triggers_nothing() {
        let rec = synthesize_record(&[200.0e3], &[], 0.5, 1e-3, 1.0, 21).unwrap();
        let rep = detect_trigger(&rec, &TriggerPolicy::default()).unwrap();
        assert!(rep.trigger_bins.is_empty());
        assert!(!rep.degenerate);
    }

    #[test]
    fn zero_threshold_is_flagged_degenerate() {
        let rec = synthesize_record(&[200.0e3], &[], 0.2, 1e-3, 1.0, 22).unwrap();
        let rep = detect_trigger(
            &rec,
            &TriggerPolicy { threshold_counts: Some(0.0), ..TriggerPolicy::default() },
        )
        .unwrap();
        assert!(rep.degenerate);
        assert_eq!(rep.trigger_bins.len(), rec.counts.len() - 50);
    }

    #[test]
    fn false_positive_rate_is_bounded_by_significance() {
        let alpha = 0.05;
        let policy = TriggerPolicy { significance: alpha, ..TriggerPolicy::default() };
        let mut false_pos = 0;
        let n = 1000;
        for seed in 0..n {
            let rec = synthesize_record(&[200.0e3], &[], 0.45, 1e-3, 1.0, 40_000 + seed).unwrap();
            if !detect_trigger(&rec, &policy).unwrap().trigger_bins.is_empty() {
                false_pos += 1;
            }
        }
        let rate = false_pos as f64 / n as f64;
        assert!(rate <= alpha, "false-positive rate {rate} > {alpha}");
    }

    #[test]
    fn noisy_baseline_is_a_calibration_error() {
        // A step right inside the calibration prefix.
        let rec = synthesize_record(&[50.0e3, 400.0e3], &[0.02], 0.4, 1e-3, 1.0, 33).unwrap();
        let err = detect_trigger(&rec, &TriggerPolicy::default()).unwrap_err();
        assert!(matches!(err, RecordsError::BaselineUnidentifiable(_)));
        // Or a record too short to even hold the prefix.
        let short = synthesize_record(&[50.0e3], &[], 0.02, 1e-3, 1.0, 34).unwrap();
        let err2 = detect_trigger(&short, &TriggerPolicy::default()).unwrap_err();
        assert!(matches!(err2, RecordsError::BaselineUnidentifiable(_)));
    }

    /// Cavity-derived staircase levels at an effective coupling weak enough
    /// that the N = 1..3 plateaus stay resolvable, like the published trace.
    fn reference_step_levels() -> Vec<f64> {
        let system = CavitySystem::cs_d2_default();
        let drive = DriveConfig { probe_detuning_hz: 0.0, drive_amp_hz: 1.0e4 };
        let atom = AtomCoupling { g_hz: 3.0e6, detuning_hz: 0.0 };
        let resp = staircase_levels(&system, &drive, atom, 3).unwrap();
        // Rescale so the empty cavity sits at the 5.28e5/s working point.
        let f_empty = resp[0].photon_flux_per_s;
        resp.iter().map(|r| r.photon_flux_per_s / f_empty * 5.28e5).collect()
    }

    #[test]
    fn staircase_levels_fall_with_atom_number() {
        let levels = reference_step_levels();
        assert_eq!(levels.len(), 4);
        for w in levels.windows(2) {
            assert!(w[1] < w[0], "levels must decrease with N: {levels:?}");
        }
    }

    #[test]
    fn segmentation_recovers_the_planted_staircase() {
        let levels = reference_step_levels();
        let losses = [0.25, 0.5, 0.75];
        let mut exact = 0;
        let n = 200;
        for seed in 0..n {
            let rec = synthesize_record(&levels, &losses, 1.0, 1e-3, 1.0, 7000 + seed).unwrap();
            let seg = segment_staircase(&rec, &PenaltyPolicy::default(), Some(&levels)).unwrap();
            let labels_ok = seg.atom_numbers.as_deref() == Some(&[3, 2, 1, 0][..]);
            let cps_ok = seg.change_points.len() == 3
                && seg
                    .change_points
                    .iter()
                    .zip([250i64, 500, 750])
                    .all(|(&c, t)| (c as i64 - t).abs() <= 5);
            if labels_ok && cps_ok {
                exact += 1;
            }
        }
        assert!(exact * 100 >= n * 95, "exact recovery {exact}/{n}");
    }

    #[test]
    fn constant_record_has_no_change_points() {
        let rec = synthesize_record(&[300.0e3], &[], 0.5, 1e-3, 1.0, 61).unwrap();
        let seg = segment_staircase(&rec, &PenaltyPolicy::default(), None).unwrap();
        assert!(seg.change_points.is_empty());
        assert!(seg.levels_only);
        assert_eq!(seg.segment_flux_per_s.len(), 1);
    }

    #[test]
    fn ten_sigma_step_lands_on_the_exact_bin() {
        // Deterministic two-level record: step of 10σ at bin 120.
        let mut counts = vec![100u64; 240];
        for c in counts.iter_mut().skip(120) {
            *c = 200; // step Δ = 100 = 10·√100
        }
        let rec = PhotonRecord {
            bin_width_s: 1e-3,
            counts,
            noise_model: "poisson".into(),
            quantum_efficiency: 1.0,
            truth: None,
        };
        let seg = segment_staircase(&rec, &PenaltyPolicy::default(), None).unwrap();
        assert_eq!(seg.change_points, vec![120]);
    }

    #[test]
    fn segmentation_is_idempotent() {
        let levels = reference_step_levels();
        let rec = synthesize_record(&levels, &[0.3, 0.6], 0.9, 1e-3, 1.0, 77).unwrap();
        let seg = segment_staircase(&rec, &PenaltyPolicy::default(), None).unwrap();
        // Rebuild the piecewise-constant reconstruction and re-segment.
        let mut edges = vec![0usize];
        edges.extend(&seg.change_points);
        edges.push(rec.counts.len());
        let mut recon = Vec::new();
        for (i, w) in edges.windows(2).enumerate() {
            let level = (seg.segment_flux_per_s[i] * rec.bin_width_s).round() as u64;
            recon.extend(std::iter::repeat(level).take(w[1] - w[0]));
        }
        let rec2 = PhotonRecord { counts: recon, ..rec.clone() };
        let seg2 = segment_staircase(&rec2, &PenaltyPolicy::default(), None).unwrap();
        assert_eq!(seg.change_points, seg2.change_points);
    }

    #[test]
    fn larger_penalty_never_finds_more_change_points() {
        let levels = reference_step_levels();
        let rec = synthesize_record(&levels, &[0.25, 0.5, 0.75], 1.0, 1e-3, 1.0, 88).unwrap();
        let mut last = usize::MAX;
        for pen in [1.0, 10.0, 100.0, 1000.0, 10000.0] {
            let seg = segment_staircase(
                &rec,
                &PenaltyPolicy { penalty: Some(pen), min_segment_bins: 3 },
                None,
            )
            .unwrap();
            assert!(seg.change_points.len() <= last);
            last = seg.change_points.len();
        }
    }

    #[test]
    fn lifetime_fit_covers_the_planted_truth() {
        let delays = [0.05, 0.3, 0.8, 1.5, 2.4, 3.5, 5.0];
        for (tau_true, label) in [(2.4f64, "upper"), (2.0, "lower")] {
            let mut rng = ChaCha8Rng::seed_from_u64(404);
            let mut covered = 0;
            let n_rep = 100;
            for _ in 0..n_rep {
                let data: Vec<SurvivalDatum> = delays
                    .iter()
                    .map(|&d| {
                        let p = 0.6 * (-d / tau_true).exp();
                        let k = (0..200).filter(|_| rng.gen::<f64>() < p).count();
                        SurvivalDatum { delay_s: d, successes: k as f64, trials: 200 }
                    })
                    .collect();
                let fit = fit_lifetime(&data).unwrap();
                if (fit.tau_s - tau_true).abs() <= fit.tau_sigma_s {
                    covered += 1;
                }
            }
            assert!(covered >= 60, "{label}: 1σ coverage {covered}/100");
        }
    }

    #[test]
    fn noiseless_survival_fit_is_exact() {
        let data: Vec<SurvivalDatum> = [0.1, 0.5, 1.0, 2.0, 4.0]
            .iter()
            .map(|&d| SurvivalDatum {
                delay_s: d,
                successes: 1000.0 * 0.6 * (-d / 2.4f64).exp(),
                trials: 1000,
            })
            .collect();
        let fit = fit_lifetime(&data).unwrap();
        assert_relative_eq!(fit.tau_s, 2.4, max_relative = 1e-6);
        assert_relative_eq!(fit.p0, 0.6, max_relative = 1e-6);
        assert!(fit.deviance < 1e-9);
    }

    #[test]
    fn lifetime_fit_is_scale_equivariant() {
        let base: Vec<SurvivalDatum> = [0.1, 0.4, 0.9, 1.7, 3.0]
            .iter()
            .enumerate()
            .map(|(i, &d)| SurvivalDatum {
                delay_s: d,
                successes: (150 - 23 * i) as f64,
                trials: 200,
            })
            .collect();
        let fit1 = fit_lifetime(&base).unwrap();
        // Doubling is exact in floating point, so τ must double bit-exactly.
        let doubled: Vec<SurvivalDatum> =
            base.iter().map(|d| SurvivalDatum { delay_s: 2.0 * d.delay_s, ..*d }).collect();
        let fit2 = fit_lifetime(&doubled).unwrap();
        assert_eq!(fit2.tau_s, 2.0 * fit1.tau_s);
        // Tripling rounds the delays themselves, so exactness holds only up
        // to that input rounding.
        let tripled: Vec<SurvivalDatum> =
            base.iter().map(|d| SurvivalDatum { delay_s: 3.0 * d.delay_s, ..*d }).collect();
        let fit3 = fit_lifetime(&tripled).unwrap();
        assert_relative_eq!(fit3.tau_s, 3.0 * fit1.tau_s, max_relative = 1e-8);
    }

    #[test]
    fn degenerate_survival_inputs_error() {
        let zeroes: Vec<SurvivalDatum> = [0.1, 0.5, 1.0]
            .iter()
            .map(|&d| SurvivalDatum { delay_s: d, successes: 0.0, trials: 50 })
            .collect();
        assert!(matches!(
            fit_lifetime(&zeroes).unwrap_err(),
            RecordsError::NonIdentifiable(_)
        ));
        let two: Vec<SurvivalDatum> = zeroes[..2].to_vec();
        assert!(matches!(fit_lifetime(&two).unwrap_err(), RecordsError::BadArgument(_)));
    }

    #[test]
    fn repump_fit_recovers_noiseless_and_noisy_curves() {
        let times: Vec<f64> = (0..40).map(|i| i as f64 * 0.01).collect();
        let clean: Vec<f64> =
            times.iter().map(|&t| 0.55 * (1.0 - (-t / 0.11f64).exp())).collect();
        let fit = fit_repump(&times, &clean).unwrap();
        assert_relative_eq!(fit.tau_r_s, 0.11, max_relative = 1e-6);
        assert_relative_eq!(fit.f_equilibrium, 0.55, max_relative = 1e-6);

        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let noisy: Vec<f64> =
            clean.iter().map(|&f| f + 0.03 * (rng.gen::<f64>() - 0.5)).collect();
        let fit_n = fit_repump(&times, &noisy).unwrap();
        assert!(
            (fit_n.tau_r_s - 0.11).abs() < 0.02,
            "τ_R = {} ± {}",
            fit_n.tau_r_s,
            fit_n.tau_sigma_s
        );
    }

    #[test]
    fn repump_fit_agrees_with_the_sixteen_level_model() {
        use crate::atoms::LevelScheme;
        use crate::constants::{H_PLANCK, K_BOLTZMANN};
        use crate::pumping::{raman_scattering_rates, repump_dynamics, PumpingState};
        use crate::stark::{scaled_waist_m, FortBeam};
        let scheme = LevelScheme::cs133();
        let fort = FortBeam::from_depth(
            &scheme,
            935.6,
            scaled_waist_m(23.9e-6, 852.4, 935.6),
            2.3e-3 * K_BOLTZMANN / H_PLANCK,
        )
        .unwrap();
        let rates = raman_scattering_rates(&scheme, &fort, 0.0).unwrap();
        let curve =
            repump_dynamics(&rates, &PumpingState::unpolarized_f3(), 0.5, 60).unwrap();
        let fit = fit_repump(&curve.times_s, &curve.f4).unwrap();
        assert!(
            (fit.tau_r_s - 0.10).abs() / 0.10 < 0.30,
            "τ_R = {} vs predicted 0.10 s",
            fit.tau_r_s
        );
    }

    #[test]
    fn record_csv_roundtrip_preserves_everything() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("trace.csv");
        let rec = synthesize_record(&[1.0e5, 4.0e5], &[0.1], 0.3, 1e-3, 0.9, 123).unwrap();
        rec.write_csv(&path).unwrap();
        let back = PhotonRecord::read_csv(&path).unwrap();
        assert_eq!(back.counts, rec.counts);
        assert_eq!(back.bin_width_s, rec.bin_width_s);
        assert_eq!(back.noise_model, rec.noise_model);
        assert_eq!(back.quantum_efficiency, rec.quantum_efficiency);
        assert_eq!(back.truth, rec.truth);
    }

    #[test]
    fn survival_csv_roundtrip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("survival.csv");
        let data = vec![
            SurvivalDatum { delay_s: 0.1, successes: 120.0, trials: 200 },
            SurvivalDatum { delay_s: 1.0, successes: 80.0, trials: 200 },
        ];
        write_survival_csv(&path, &data).unwrap();
        let back = read_survival_csv(&path).unwrap();
        assert_eq!(back.len(), 2);
        assert_eq!(back[1].delay_s, 1.0);
        assert_eq!(back[1].successes, 80.0);
        assert_eq!(back[1].trials, 200);
    }

    #[test]
    fn normal_quantile_matches_reference_values() {
        assert_relative_eq!(normal_quantile(0.975), 1.959964, max_relative = 1e-5);
        assert_relative_eq!(normal_quantile(0.5), 0.0, epsilon = 1e-8);
        assert_relative_eq!(normal_quantile(1.0 - 1e-6), 4.753424, max_relative = 1e-5);
        assert_relative_eq!(
            normal_quantile(0.025),
            -normal_quantile(0.975),
            max_relative = 1e-9
        );
    }
}
