//! Experiment plumbing shared by the CLI and the acceptance suite: run
//! configuration, per-trial seeding, recovery metrics, Monte-Carlo
//! calibration of the noise model and reference-vs-hardware cross checks.

use std::collections::HashSet;
use std::str::FromStr;

use num_complex::Complex64;
use rayon::prelude::*;

use crate::datapath::{part1_pipeline, reconstruct_hardware, threshold_fixed, FixedThresholdTrace};
use crate::error::{Error, Result};
use crate::io::fmt_f64;
use crate::recon::{
    detect_positions, detection_level, initial_dft, missing_noise_variance, reconstruct,
    threshold, AmpMode, ReconstructionResult, ThresholdConfig, ThresholdVariant,
};
use crate::signal::{random_pattern, sample, sum_sq_amplitudes, synthesize, SparseSpec, Tone};

/// Mixes a master seed with a trial index (SplitMix64 finalizer), so every
/// trial's randomness is independent of execution order and thread count.
pub fn derive_seed(master: u64, index: u64) -> u64 {
    let mut z = master ^ index.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// `--tones` argument: explicit `A@k[,A@k...]` or `random:K:lo:hi`.
#[derive(Debug, Clone, PartialEq)]
pub enum ToneSource {
    Explicit(Vec<Tone>),
    Random { k: usize, lo: f64, hi: f64 },
}

impl ToneSource {
    pub fn spec(&self, n: usize, seed: u64) -> Result<SparseSpec> {
        match self {
            ToneSource::Explicit(tones) => SparseSpec::new(n, tones.clone()),
            ToneSource::Random { k, lo, hi } => SparseSpec::random(n, *k, *lo, *hi, seed),
        }
    }

    pub fn k(&self) -> usize {
        match self {
            ToneSource::Explicit(tones) => tones.len(),
            ToneSource::Random { k, .. } => *k,
        }
    }
}

impl FromStr for ToneSource {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let bad = |what: &str| Error::InvalidArgument(format!("bad --tones `{s}`: {what}"));
        if let Some(rest) = s.strip_prefix("random:") {
            let parts: Vec<&str> = rest.split(':').collect();
            let [k, lo, hi] = parts.as_slice() else {
                return Err(bad("expected random:K:lo:hi"));
            };
            return Ok(ToneSource::Random {
                k: k.parse().map_err(|_| bad("K is not an integer"))?,
                lo: lo.parse().map_err(|_| bad("lo is not a number"))?,
                hi: hi.parse().map_err(|_| bad("hi is not a number"))?,
            });
        }
        let tones = s
            .split(',')
            .map(|item| {
                let (a, k) = item.trim().split_once('@').ok_or_else(|| bad("expected A@k"))?;
                Ok(Tone {
                    amplitude: a.parse().map_err(|_| bad("amplitude is not a number"))?,
                    bin: k.parse().map_err(|_| bad("bin is not an integer"))?,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(ToneSource::Explicit(tones))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum PathKind {
    #[default]
    Reference,
    Hardware,
}

impl FromStr for PathKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "reference" => Ok(Self::Reference),
            "hardware" => Ok(Self::Hardware),
            other => Err(Error::InvalidArgument(format!("unknown path `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub n: usize,
    pub n_a: usize,
    pub tones: ToneSource,
    pub threshold: ThresholdConfig,
    pub seed: u64,
    pub path: PathKind,
    pub trials: usize,
}

impl RunConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n < 2 {
            return Err(Error::InvalidArgument(format!("--n {} must be at least 2", self.n)));
        }
        if self.n_a == 0 || self.n_a > self.n {
            return Err(Error::InvalidArgument(format!(
                "--na {} must lie in [1, {}]",
                self.n_a, self.n
            )));
        }
        if self.trials == 0 {
            return Err(Error::InvalidArgument("--trials must be positive".into()));
        }
        // surfaces bad bins/amplitudes/K before any work is done
        self.tones.spec(self.n, self.seed)?;
        Ok(())
    }

    /// Signal spec and sampling-pattern seed for trial `index`.
    pub fn trial_inputs(&self, index: usize) -> Result<(SparseSpec, u64)> {
        let trial_seed = derive_seed(self.seed, index as u64);
        let spec = self.tones.spec(self.n, derive_seed(trial_seed, 0))?;
        Ok((spec, derive_seed(trial_seed, 1)))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Metrics {
    pub support_exact: bool,
    pub precision: f64,
    pub recall: f64,
    pub rel_mse_time: f64,
    pub threshold: f64,
    pub variance: f64,
    pub n_detected: usize,
}

impl Metrics {
    pub const HEADER: [&'static str; 7] = [
        "support_exact",
        "precision",
        "recall",
        "rel_mse_time",
        "threshold",
        "variance",
        "n_detected",
    ];

    pub fn compute(truth: &[Complex64], true_support: &[usize], result: &ReconstructionResult) -> Self {
        let detected: HashSet<usize> = result.detection.positions.iter().copied().collect();
        let actual: HashSet<usize> = true_support.iter().copied().collect();
        let hits = detected.intersection(&actual).count() as f64;
        let precision = if detected.is_empty() { 1.0 } else { hits / detected.len() as f64 };
        let recall = if actual.is_empty() { 1.0 } else { hits / actual.len() as f64 };
        Self {
            support_exact: detected == actual,
            precision,
            recall,
            rel_mse_time: relative_mse(&result.time_signal, truth),
            threshold: result.detection.threshold,
            variance: result.detection.variance,
            n_detected: detected.len(),
        }
    }

    pub fn row(&self) -> Vec<String> {
        vec![
            self.support_exact.to_string(),
            fmt_f64(self.precision),
            fmt_f64(self.recall),
            fmt_f64(self.rel_mse_time),
            fmt_f64(self.threshold),
            fmt_f64(self.variance),
            self.n_detected.to_string(),
        ]
    }
}

/// `Σ|x̂ - x|² / Σ|x|²`.
pub fn relative_mse(estimate: &[Complex64], truth: &[Complex64]) -> f64 {
    let err: f64 = estimate.iter().zip(truth).map(|(a, b)| (a - b).norm_sqr()).sum();
    let energy: f64 = truth.iter().map(|b| b.norm_sqr()).sum();
    if energy == 0.0 {
        if err == 0.0 {
            0.0
        } else {
            f64::INFINITY
        }
    } else {
        err / energy
    }
}

/// Nonzero bins of a full-length signal and its mean power, for inputs read from disk.
pub fn support_from_signal(x: &[Complex64]) -> (Vec<usize>, f64) {
    let n = x.len();
    let full = crate::signal::SamplingPattern::full(n)
        .and_then(|p| crate::signal::Measurement::new(x.to_vec(), p))
        .and_then(|m| initial_dft(&m));
    let Ok(spectrum) = full else {
        return (Vec::new(), 0.0);
    };
    let peak = spectrum.magnitudes().fold(0.0, f64::max);
    let support = detect_positions(&spectrum, 1e-9 * peak);
    let power = x.iter().map(|s| s.norm_sqr()).sum::<f64>() / n as f64;
    (support, power)
}

/// Outcome of one reconstruction run.
#[derive(Debug, Clone)]
pub struct ReconRun {
    pub result: ReconstructionResult,
    pub metrics: Metrics,
    pub trace: Option<FixedThresholdTrace>,
}

/// Samples `truth` with a pattern drawn from `pattern_seed` and reconstructs it.
pub fn run_reconstruction(
    truth: &[Complex64],
    true_support: &[usize],
    sum_sq: f64,
    n_a: usize,
    pattern_seed: u64,
    cfg: &ThresholdConfig,
    path: PathKind,
) -> Result<ReconRun> {
    let x = crate::signal::TimeSignal::new(truth.to_vec());
    let pattern = random_pattern(x.len(), n_a, pattern_seed)?;
    let meas = sample(&x, &pattern)?;
    let (result, trace) = match path {
        PathKind::Reference => (reconstruct(&meas, Some(sum_sq), cfg)?, None),
        PathKind::Hardware => {
            let (r, t) = reconstruct_hardware(&meas, Some(sum_sq), cfg)?;
            (r, Some(t))
        }
    };
    let metrics = Metrics::compute(truth, true_support, &result);
    Ok(ReconRun {
        result,
        metrics,
        trace,
    })
}

/// One seeded trial: synthesize, sample, reconstruct, score.
pub fn recovery_trial(cfg: &RunConfig, index: usize) -> Result<Metrics> {
    let (spec, pattern_seed) = cfg.trial_inputs(index)?;
    let x = synthesize(&spec);
    let run = run_reconstruction(
        x.samples(),
        &spec.support(),
        sum_sq_amplitudes(&spec),
        cfg.n_a,
        pattern_seed,
        &cfg.threshold,
        cfg.path,
    )?;
    Ok(run.metrics)
}

#[derive(Debug, Clone, PartialEq)]
pub struct CalibrationTrial {
    pub trial: usize,
    pub pattern_seed: u64,
    /// Mean `|V(f)|²` over this trial's non-signal bins.
    pub noise_power: f64,
    pub max_noise: f64,
    pub threshold: f64,
    pub model_variance: f64,
    pub all_below: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CalibrationSummary {
    pub trials: usize,
    pub empirical_variance: f64,
    pub model_variance: f64,
    pub variance_ratio: f64,
    pub p_hat: f64,
    pub p_target: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CalibrationReport {
    pub rows: Vec<CalibrationTrial>,
    pub summary: CalibrationSummary,
}

impl CalibrationReport {
    pub const TRIAL_HEADER: [&'static str; 7] = [
        "trial",
        "pattern_seed",
        "noise_power",
        "max_noise",
        "threshold",
        "model_variance",
        "all_below",
    ];
    pub const SUMMARY_HEADER: [&'static str; 6] = [
        "trials",
        "empirical_variance",
        "model_variance",
        "variance_ratio",
        "p_hat",
        "p_target",
    ];

    pub fn trial_rows(&self) -> Vec<Vec<String>> {
        self.rows
            .iter()
            .map(|r| {
                vec![
                    r.trial.to_string(),
                    r.pattern_seed.to_string(),
                    fmt_f64(r.noise_power),
                    fmt_f64(r.max_noise),
                    fmt_f64(r.threshold),
                    fmt_f64(r.model_variance),
                    r.all_below.to_string(),
                ]
            })
            .collect()
    }

    pub fn summary_row(&self) -> Vec<String> {
        let s = &self.summary;
        vec![
            s.trials.to_string(),
            fmt_f64(s.empirical_variance),
            fmt_f64(s.model_variance),
            fmt_f64(s.variance_ratio),
            fmt_f64(s.p_hat),
            fmt_f64(s.p_target),
        ]
    }
}

fn calibration_trial(cfg: &RunConfig, index: usize) -> Result<CalibrationTrial> {
    let (spec, pattern_seed) = cfg.trial_inputs(index)?;
    let x = synthesize(&spec);
    let meas = sample(&x, &random_pattern(cfg.n, cfg.n_a, pattern_seed)?)?;
    let v = initial_dft(&meas)?;
    let sum_sq = match cfg.threshold.amp_mode {
        AmpMode::Oracle => sum_sq_amplitudes(&spec),
        AmpMode::Estimate => meas.mean_power(),
    };
    let model_variance = missing_noise_variance(cfg.n, cfg.n_a, sum_sq)?;
    let t = threshold(model_variance, cfg.n, &cfg.threshold);
    let level = detection_level(t, &meas);

    let support: HashSet<usize> = spec.support().into_iter().collect();
    let noise: Vec<f64> = v
        .magnitudes()
        .enumerate()
        .filter(|(f, _)| !support.contains(f))
        .map(|(_, m)| m)
        .collect();
    let noise_power = noise.iter().map(|m| m * m).sum::<f64>() / noise.len() as f64;
    let max_noise = noise.iter().copied().fold(0.0, f64::max);
    Ok(CalibrationTrial {
        trial: index,
        pattern_seed,
        noise_power,
        max_noise,
        threshold: t,
        model_variance,
        all_below: max_noise < level,
    })
}

/// Monte-Carlo check of the noise-variance model and the threshold's coverage probability.
pub fn calibrate(cfg: &RunConfig) -> Result<CalibrationReport> {
    cfg.validate()?;
    let rows = (0..cfg.trials)
        .into_par_iter()
        .map(|i| calibration_trial(cfg, i))
        .collect::<Result<Vec<_>>>()?;
    let count = rows.len() as f64;
    let empirical_variance = rows.iter().map(|r| r.noise_power).sum::<f64>() / count;
    let model_variance = rows.iter().map(|r| r.model_variance).sum::<f64>() / count;
    let variance_ratio = if model_variance == 0.0 {
        if empirical_variance < 1e-18 { 1.0 } else { f64::INFINITY }
    } else {
        empirical_variance / model_variance
    };
    let p_hat = rows.iter().filter(|r| r.all_below).count() as f64 / count;
    Ok(CalibrationReport {
        summary: CalibrationSummary {
            trials: rows.len(),
            empirical_variance,
            model_variance,
            variance_ratio,
            p_hat,
            p_target: cfg.threshold.p(),
        },
        rows,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct XcheckTrial {
    pub trial: usize,
    pub t_reference: f64,
    pub t_fixed: f64,
    pub rel_err: f64,
    pub support_agree: bool,
    /// Disagreeing bins all lie within the threshold error band.
    pub within_band: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct XcheckSummary {
    pub trials: usize,
    pub max_rel_err: f64,
    pub agreement_rate: f64,
    pub grid_points: usize,
    pub grid_max_rel_err: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct XcheckReport {
    pub rows: Vec<XcheckTrial>,
    pub summary: XcheckSummary,
}

impl XcheckReport {
    pub const TRIAL_HEADER: [&'static str; 6] =
        ["trial", "t_reference", "t_fixed", "rel_err", "support_agree", "within_band"];
    pub const SUMMARY_HEADER: [&'static str; 5] =
        ["trials", "max_rel_err", "agreement_rate", "grid_points", "grid_max_rel_err"];

    pub fn trial_rows(&self) -> Vec<Vec<String>> {
        self.rows
            .iter()
            .map(|r| {
                vec![
                    r.trial.to_string(),
                    fmt_f64(r.t_reference),
                    fmt_f64(r.t_fixed),
                    fmt_f64(r.rel_err),
                    r.support_agree.to_string(),
                    r.within_band.to_string(),
                ]
            })
            .collect()
    }

    pub fn summary_row(&self) -> Vec<String> {
        let s = &self.summary;
        vec![
            s.trials.to_string(),
            fmt_f64(s.max_rel_err),
            fmt_f64(s.agreement_rate),
            s.grid_points.to_string(),
            fmt_f64(s.grid_max_rel_err),
        ]
    }
}

/// Relative difference, defined as 0 when both values are 0.
pub fn rel_diff(got: f64, want: f64) -> f64 {
    if got == want {
        0.0
    } else {
        ((got - want) / want).abs()
    }
}

/// Relative band around the threshold inside which the two paths may disagree.
pub const XCHECK_BAND: f64 = 1e-3;

fn xcheck_trial(cfg: &RunConfig, index: usize) -> Result<XcheckTrial> {
    let (spec, pattern_seed) = cfg.trial_inputs(index)?;
    let x = synthesize(&spec);
    let meas = sample(&x, &random_pattern(cfg.n, cfg.n_a, pattern_seed)?)?;
    let sum_sq = match cfg.threshold.amp_mode {
        AmpMode::Oracle => sum_sq_amplitudes(&spec),
        AmpMode::Estimate => meas.mean_power(),
    };
    let hw = part1_pipeline(&meas, Some(sum_sq), &cfg.threshold)?;
    let var = missing_noise_variance(cfg.n, cfg.n_a, sum_sq)?;
    let t_ref = threshold(var, cfg.n, &cfg.threshold);
    let reference = detect_positions(&hw.spectrum, detection_level(t_ref, &meas));
    let hardware = hw.bits.positions();

    let ref_set: HashSet<usize> = reference.iter().copied().collect();
    let hw_set: HashSet<usize> = hardware.iter().copied().collect();
    let within_band = ref_set.symmetric_difference(&hw_set).all(|&f| {
        let mag = hw.spectrum.bins()[f].norm();
        (mag - t_ref).abs() <= XCHECK_BAND * t_ref
    });
    Ok(XcheckTrial {
        trial: index,
        t_reference: t_ref,
        t_fixed: hw.trace.t_fixed,
        rel_err: rel_diff(hw.trace.t_fixed, t_ref),
        support_agree: reference == hardware,
        within_band,
    })
}

/// `(var, P, N)` grid for comparing the fixed-point and reference thresholds:
/// one variance per decade over `[1e-3, 1e9]`.
pub fn threshold_grid() -> Vec<(f64, f64, usize)> {
    let mut grid = Vec::new();
    for e in -3..=9 {
        for p in [0.5, 0.9, 0.99, 0.999] {
            for n in [64, 256, 1024] {
                grid.push((10f64.powi(e), p, n));
            }
        }
    }
    grid
}

/// Fixed-point vs reference threshold at one grid point, with `N_a = N/2`.
pub fn grid_point_error(var: f64, p: f64, n: usize, variant: ThresholdVariant) -> Result<f64> {
    let n_a = n / 2;
    let factor = missing_noise_variance(n, n_a, 1.0)?;
    let sum_sq = var / factor;
    let cfg = ThresholdConfig::new(p, variant, AmpMode::Oracle)?;
    let t_ref = threshold(missing_noise_variance(n, n_a, sum_sq)?, n, &cfg);
    let t_fixed = threshold_fixed(n, n_a, sum_sq, p, variant)?.t_fixed;
    Ok(rel_diff(t_fixed, t_ref))
}

/// Runs the detection cross check over `cfg.trials` trials plus the threshold grid.
pub fn xcheck(cfg: &RunConfig) -> Result<XcheckReport> {
    cfg.validate()?;
    let rows = (0..cfg.trials)
        .into_par_iter()
        .map(|i| xcheck_trial(cfg, i))
        .collect::<Result<Vec<_>>>()?;
    let grid = threshold_grid();
    let grid_errors = grid
        .iter()
        .map(|&(var, p, n)| grid_point_error(var, p, n, cfg.threshold.variant))
        .collect::<Result<Vec<_>>>()?;
    let max_rel_err = rows.iter().map(|r| r.rel_err).fold(0.0, f64::max);
    let agreement_rate =
        rows.iter().filter(|r| r.support_agree).count() as f64 / rows.len() as f64;
    Ok(XcheckReport {
        summary: XcheckSummary {
            trials: rows.len(),
            max_rel_err,
            agreement_rate,
            grid_points: grid.len(),
            grid_max_rel_err: grid_errors.iter().copied().fold(0.0, f64::max),
        },
        rows,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg(n: usize, n_a: usize, tones: &str, p: f64, trials: usize) -> RunConfig {
        RunConfig {
            n,
            n_a,
            tones: tones.parse().unwrap(),
            threshold: ThresholdConfig::new(p, ThresholdVariant::Ref10, AmpMode::Oracle).unwrap(),
            seed: 7,
            path: PathKind::Reference,
            trials,
        }
    }

    #[test]
    fn tone_grammar() {
        assert_eq!(
            "2@1,0.5@7".parse::<ToneSource>().unwrap(),
            ToneSource::Explicit(vec![
                Tone { amplitude: 2.0, bin: 1 },
                Tone { amplitude: 0.5, bin: 7 }
            ])
        );
        assert_eq!(
            "random:3:1:2".parse::<ToneSource>().unwrap(),
            ToneSource::Random { k: 3, lo: 1.0, hi: 2.0 }
        );
        for bad in ["", "2", "2@x", "random:3:1", "random:a:1:2"] {
            assert!(bad.parse::<ToneSource>().is_err(), "{bad}");
        }
    }

    #[test]
    fn derived_seeds_differ() {
        let seeds: HashSet<u64> = (0..1000).map(|i| derive_seed(42, i)).collect();
        assert_eq!(seeds.len(), 1000);
        assert_ne!(derive_seed(1, 0), derive_seed(2, 0));
    }

    #[test]
    fn validation() {
        assert!(cfg(8, 9, "1@0", 0.9, 1).validate().is_err());
        assert!(cfg(8, 4, "1@8", 0.9, 1).validate().is_err());
        assert!(cfg(8, 4, "1@2,1@2", 0.9, 1).validate().is_err());
        assert!(cfg(8, 4, "1@0", 0.9, 0).validate().is_err());
        assert!(cfg(8, 4, "1@0", 0.9, 1).validate().is_ok());
    }

    #[test]
    fn metrics_consistency() {
        let truth = vec![Complex64::new(1.0, 0.0); 4];
        let result = ReconstructionResult {
            status: crate::recon::ReconStatus::Recovered,
            amplitudes: vec![],
            spectrum: crate::recon::Spectrum::zeros(4),
            time_signal: vec![Complex64::new(0.0, 0.0); 4],
            detection: crate::recon::DetectionResult {
                threshold: 1.0,
                variance: 2.0,
                positions: vec![0, 2],
            },
            initial: crate::recon::Spectrum::zeros(4),
        };
        let m = Metrics::compute(&truth, &[0], &result);
        assert!(!m.support_exact);
        assert_eq!(m.precision, 0.5);
        assert_eq!(m.recall, 1.0);
        assert_eq!(m.rel_mse_time, 1.0);
        let m = Metrics::compute(&truth, &[0, 2], &result);
        assert!(m.support_exact && m.precision == 1.0 && m.recall == 1.0);
    }

    #[test]
    fn calibration_without_missing_samples() {
        let report = calibrate(&cfg(64, 64, "random:1:1:1", 0.9, 100)).unwrap();
        assert_eq!(report.summary.model_variance, 0.0);
        assert!(report.summary.empirical_variance < 1e-18);
        assert_eq!(report.summary.p_hat, 1.0);
    }

    #[test]
    fn calibration_is_deterministic() {
        let c = cfg(64, 32, "random:1:1:1", 0.9, 120);
        assert_eq!(calibrate(&c).unwrap(), calibrate(&c).unwrap());
    }

    #[test]
    fn xcheck_zero_variance() {
        let report = xcheck(&cfg(64, 64, "random:2:1:2", 0.9, 20)).unwrap();
        assert!(report.rows.iter().all(|r| r.t_reference == 0.0 && r.t_fixed == 0.0));
        assert_eq!(report.summary.agreement_rate, 1.0);
    }

    #[test]
    fn support_from_disk_signal() {
        let spec = SparseSpec::new(
            32,
            vec![Tone { amplitude: 1.0, bin: 3 }, Tone { amplitude: 2.0, bin: 9 }],
        )
        .unwrap();
        let (support, power) = support_from_signal(synthesize(&spec).samples());
        assert_eq!(support, vec![3, 9]);
        assert!((power - 5.0).abs() < 1e-12);
    }
}
