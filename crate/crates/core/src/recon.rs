//! Double-precision reference reconstruction.
//!
//! Pipeline: initial DFT of the available samples, missing-sample noise
//! variance, threshold, support detection, partial DFT matrix, normal
//! equations solved by QR, spectral positioning and inverse DFT.
//!
//! Scale convention: spectra are unnormalized DFTs (`X(f) = Σ x(n)·e^{-j2πfn/N}`)
//! and the CS matrix is the matching synthesis operator
//! `A_CS[m][i] = (1/N)·e^{+j2π·P_v[m]·pos[i]/N}`, so `v = A_CS·X` holds exactly
//! and the solved amplitudes are directly comparable to the initial DFT.

use std::f64::consts::{LN_10, PI};
use std::str::FromStr;

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::linalg::{qr_solve, CMatrix};
use crate::signal::{Measurement, SamplingPattern};

/// `e^{sign·j2πk/N}` for `k = 0..N-1`.
pub(crate) fn twiddles(n: usize, sign: f64) -> Vec<Complex64> {
    (0..n)
        .map(|k| Complex64::from_polar(1.0, sign * 2.0 * PI * k as f64 / n as f64))
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct Spectrum {
    bins: Vec<Complex64>,
}

impl Spectrum {
    pub fn new(bins: Vec<Complex64>) -> Self {
        Self { bins }
    }

    pub fn zeros(n: usize) -> Self {
        Self::new(vec![Complex64::new(0.0, 0.0); n])
    }

    pub fn bins(&self) -> &[Complex64] {
        &self.bins
    }

    pub fn len(&self) -> usize {
        self.bins.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bins.is_empty()
    }

    pub fn magnitudes(&self) -> impl Iterator<Item = f64> + '_ {
        self.bins.iter().map(|b| b.norm())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ThresholdVariant {
    /// `T = (1/N)·sqrt(-var²·log10(1 - P^{1/N}))`, exactly as printed.
    Paper,
    /// `T = sqrt(-var·ln(1 - P^{1/N}))`, the exponential-tail form of the noise model.
    #[default]
    Ref10,
}

impl FromStr for ThresholdVariant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "paper" => Ok(Self::Paper),
            "ref10" => Ok(Self::Ref10),
            other => Err(Error::InvalidArgument(format!("unknown threshold variant `{other}`"))),
        }
    }
}

/// Where `Σ A_i²` comes from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum AmpMode {
    /// Supplied by the caller, as the amplitudes feed the threshold adders.
    #[default]
    Oracle,
    /// `(1/N_a)·Σ|v(a)|²` from the measurements.
    Estimate,
}

impl FromStr for AmpMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "oracle" => Ok(Self::Oracle),
            "estimate" => Ok(Self::Estimate),
            other => Err(Error::InvalidArgument(format!("unknown amplitude mode `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ThresholdConfig {
    p: f64,
    pub variant: ThresholdVariant,
    pub amp_mode: AmpMode,
}

impl ThresholdConfig {
    pub fn new(p: f64, variant: ThresholdVariant, amp_mode: AmpMode) -> Result<Self> {
        if !(p > 0.0 && p < 1.0) {
            return Err(Error::InvalidArgument(format!("probability {p} outside (0, 1)")));
        }
        Ok(Self {
            p,
            variant,
            amp_mode,
        })
    }

    pub fn p(&self) -> f64 {
        self.p
    }
}

impl Default for ThresholdConfig {
    fn default() -> Self {
        Self {
            p: 0.99,
            variant: ThresholdVariant::default(),
            amp_mode: AmpMode::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DetectionResult {
    pub threshold: f64,
    pub variance: f64,
    pub positions: Vec<usize>,
}

/// Initial DFT from the available samples placed at their original time positions:
/// `V(f) = Σ_a v(a)·e^{-j2π·f·P_v[a]/N}`, `f = 0..N-1`.
pub fn initial_dft(meas: &Measurement) -> Result<Spectrum> {
    let pattern = meas.pattern();
    let n = pattern.n();
    if meas.values().is_empty() {
        return Err(Error::InvalidArgument("empty measurement".into()));
    }
    let w = twiddles(n, -1.0);
    let bins = (0..n)
        .map(|f| {
            meas.values()
                .iter()
                .zip(pattern.positions())
                .map(|(v, &p)| v * w[(f * p) % n])
                .sum()
        })
        .collect();
    Ok(Spectrum::new(bins))
}

/// Variance of the spectral noise caused by missing samples:
/// `(N - N_a)·N_a/(N - 1)·Σ A_i²`.
pub fn missing_noise_variance(n: usize, n_a: usize, sum_sq_amp: f64) -> Result<f64> {
    if n < 2 {
        return Err(Error::InvalidArgument(format!("signal length {n} must be at least 2")));
    }
    if n_a == 0 || n_a > n {
        return Err(Error::InvalidArgument(format!(
            "need 1 <= N_a <= N, got N_a={n_a}, N={n}"
        )));
    }
    if !(sum_sq_amp.is_finite() && sum_sq_amp >= 0.0) {
        return Err(Error::InvalidArgument(format!(
            "sum of squared amplitudes {sum_sq_amp} must be finite and non-negative"
        )));
    }
    let missing = (n - n_a) as f64;
    Ok(missing * n_a as f64 / (n - 1) as f64 * sum_sq_amp)
}

/// `1 - P^{1/N}`, evaluated without cancellation.
pub fn nth_root_complement(p: f64, n: usize) -> f64 {
    -(p.ln() / n as f64).exp_m1()
}

pub fn threshold(var: f64, n: usize, cfg: &ThresholdConfig) -> f64 {
    let q = nth_root_complement(cfg.p(), n);
    match cfg.variant {
        ThresholdVariant::Paper => (-(var * var) * q.log10()).sqrt() / n as f64,
        ThresholdVariant::Ref10 => (-var * q.log10() * LN_10).sqrt(),
    }
}

/// Relative size of the round-off floor under which initial-DFT bins are not detected.
pub const ROUNDOFF_FLOOR: f64 = 1e-12;

/// Magnitude below which a bin of `initial_dft(meas)` is indistinguishable from
/// summation round-off. Only matters when the threshold itself is ~0 (full sampling).
pub fn roundoff_floor(meas: &Measurement) -> f64 {
    ROUNDOFF_FLOOR * meas.values().iter().map(|v| v.norm()).sum::<f64>()
}

/// Comparison level actually applied to `|V(f)|`: the threshold, raised to the
/// round-off floor when it is smaller.
pub fn detection_level(t: f64, meas: &Measurement) -> f64 {
    t.max(roundoff_floor(meas))
}

/// Bins with `|V(f)| > t`, ascending.
pub fn detect_positions(v_spec: &Spectrum, t: f64) -> Vec<usize> {
    v_spec
        .magnitudes()
        .enumerate()
        .filter_map(|(f, mag)| (mag > t).then_some(f))
        .collect()
}

/// Partial DFT synthesis matrix: rows are available time positions, columns detected bins.
#[derive(Debug, Clone, PartialEq)]
pub struct CsMatrix {
    matrix: CMatrix,
    positions: Vec<usize>,
}

impl CsMatrix {
    pub fn matrix(&self) -> &CMatrix {
        &self.matrix
    }

    /// Column bins, in column order.
    pub fn positions(&self) -> &[usize] {
        &self.positions
    }

    pub fn rows(&self) -> usize {
        self.matrix.rows()
    }

    pub fn cols(&self) -> usize {
        self.matrix.cols()
    }
}

pub fn build_cs_matrix(n: usize, pattern: &SamplingPattern, pos: &[usize]) -> Result<CsMatrix> {
    if pattern.n() != n {
        return Err(Error::InvalidArgument(format!(
            "pattern length {} does not match N={n}",
            pattern.n()
        )));
    }
    if pos.is_empty() {
        return Err(Error::EmptySupport);
    }
    if pos.len() > pattern.n_a() {
        return Err(Error::Underdetermined {
            rows: pattern.n_a(),
            cols: pos.len(),
        });
    }
    if let Some(&bad) = pos.iter().find(|&&f| f >= n) {
        return Err(Error::InvalidArgument(format!("bin {bad} outside [0, {n})")));
    }
    let w = twiddles(n, 1.0);
    let scale = 1.0 / n as f64;
    let rows = pattern.positions();
    let matrix = CMatrix::from_fn(rows.len(), pos.len(), |r, c| w[(rows[r] * pos[c]) % n] * scale);
    Ok(CsMatrix {
        matrix,
        positions: pos.to_vec(),
    })
}

pub fn hermitian(mtx: &CMatrix) -> CMatrix {
    mtx.hermitian()
}

/// Normal-equation operands `A_P = A_CS^H·A_CS` and `X_P = A_CS^H·v`.
#[derive(Debug, Clone, PartialEq)]
pub struct NormalEquations {
    pub a_p: CMatrix,
    pub x_p: Vec<Complex64>,
}

pub fn normal_equations(a_cs: &CsMatrix, v: &[Complex64]) -> Result<NormalEquations> {
    if v.len() != a_cs.rows() {
        return Err(Error::InvalidArgument(format!(
            "{} measurements for a {}-row CS matrix",
            v.len(),
            a_cs.rows()
        )));
    }
    if a_cs.rows() < a_cs.cols() {
        return Err(Error::Underdetermined {
            rows: a_cs.rows(),
            cols: a_cs.cols(),
        });
    }
    let a_h = hermitian(a_cs.matrix());
    Ok(NormalEquations {
        a_p: a_h.matmul(a_cs.matrix())?,
        x_p: a_h.matvec(v)?,
    })
}

/// `X_TP = (A_CS^H·A_CS)^{-1}·(A_CS^H·v)`, solving `A_P·X_TP = X_P` by QR.
pub fn ls_solve(a_cs: &CsMatrix, v: &[Complex64]) -> Result<Vec<Complex64>> {
    let ne = normal_equations(a_cs, v)?;
    qr_solve(&ne.a_p, &ne.x_p)
}

/// Places `x_tp[i]` at bin `pos[i]` and zero-fills the rest.
pub fn spectral_positioning(x_tp: &[Complex64], pos: &[usize], n: usize) -> Result<Spectrum> {
    if x_tp.len() != pos.len() {
        return Err(Error::InvalidArgument(format!(
            "{} amplitudes for {} positions",
            x_tp.len(),
            pos.len()
        )));
    }
    let mut spectrum = Spectrum::zeros(n);
    for (&amp, &f) in x_tp.iter().zip(pos) {
        if f >= n {
            return Err(Error::InvalidArgument(format!("bin {f} outside [0, {n})")));
        }
        spectrum.bins[f] = amp;
    }
    Ok(spectrum)
}

/// `x(n) = (1/N)·Σ_f X(f)·e^{+j2πfn/N}`.
pub fn idft(x_spec: &Spectrum) -> Vec<Complex64> {
    let n = x_spec.len();
    let w = twiddles(n, 1.0);
    let scale = 1.0 / n as f64;
    (0..n)
        .map(|t| {
            x_spec
                .bins()
                .iter()
                .enumerate()
                .filter(|(_, b)| b.re != 0.0 || b.im != 0.0)
                .map(|(f, b)| b * w[(f * t) % n])
                .sum::<Complex64>()
                * scale
        })
        .collect()
}

/// `Σ A_i²` per the configured amplitude mode.
pub fn resolve_sum_sq(meas: &Measurement, oracle: Option<f64>, mode: AmpMode) -> Result<f64> {
    match mode {
        AmpMode::Oracle => oracle.ok_or_else(|| {
            Error::InvalidArgument("oracle amplitude mode needs the sum of squared amplitudes".into())
        }),
        AmpMode::Estimate => Ok(meas.mean_power()),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReconStatus {
    Recovered,
    /// Nothing above threshold; the spectrum is all zeros.
    EmptySupport,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReconstructionResult {
    pub status: ReconStatus,
    pub amplitudes: Vec<Complex64>,
    pub spectrum: Spectrum,
    pub time_signal: Vec<Complex64>,
    pub detection: DetectionResult,
    pub initial: Spectrum,
}

/// Single-iteration reconstruction of the full signal from `meas`.
///
/// `oracle_sum_sq` is required in [`AmpMode::Oracle`] and ignored otherwise.
/// Underdetermined and singular systems are returned as errors; an empty
/// support is a successful result with [`ReconStatus::EmptySupport`].
pub fn reconstruct(
    meas: &Measurement,
    oracle_sum_sq: Option<f64>,
    cfg: &ThresholdConfig,
) -> Result<ReconstructionResult> {
    let pattern = meas.pattern();
    let n = pattern.n();
    let initial = initial_dft(meas)?;
    let sum_sq = resolve_sum_sq(meas, oracle_sum_sq, cfg.amp_mode)?;
    let variance = missing_noise_variance(n, pattern.n_a(), sum_sq)?;
    let t = threshold(variance, n, cfg);
    let positions = detect_positions(&initial, detection_level(t, meas));
    let detection = DetectionResult {
        threshold: t,
        variance,
        positions,
    };
    solve_detected(meas, initial, detection)
}

/// Matrix formation, least squares, positioning and inverse DFT for an
/// already-detected support.
pub fn solve_detected(
    meas: &Measurement,
    initial: Spectrum,
    detection: DetectionResult,
) -> Result<ReconstructionResult> {
    let n = meas.pattern().n();
    if detection.positions.is_empty() {
        return Ok(ReconstructionResult {
            status: ReconStatus::EmptySupport,
            amplitudes: Vec::new(),
            spectrum: Spectrum::zeros(n),
            time_signal: vec![Complex64::new(0.0, 0.0); n],
            detection,
            initial,
        });
    }

    let a_cs = build_cs_matrix(n, meas.pattern(), &detection.positions)?;
    let amplitudes = ls_solve(&a_cs, meas.values())?;
    let spectrum = spectral_positioning(&amplitudes, &detection.positions, n)?;
    let time_signal = idft(&spectrum);
    Ok(ReconstructionResult {
        status: ReconStatus::Recovered,
        amplitudes,
        spectrum,
        time_signal,
        detection,
        initial,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::signal::{random_pattern, sample, synthesize, SparseSpec, Tone};

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    fn tone_spec(n: usize, tones: &[(f64, usize)]) -> SparseSpec {
        SparseSpec::new(
            n,
            tones.iter().map(|&(amplitude, bin)| Tone { amplitude, bin }).collect(),
        )
        .unwrap()
    }

    #[test]
    fn initial_dft_full_sampling_is_orthogonal() {
        let x = synthesize(&tone_spec(8, &[(1.0, 2)]));
        let meas = sample(&x, &SamplingPattern::full(8).unwrap()).unwrap();
        let v = initial_dft(&meas).unwrap();
        for (f, b) in v.bins().iter().enumerate() {
            let want = if f == 2 { c(8.0, 0.0) } else { c(0.0, 0.0) };
            assert!((b - want).norm() < 1e-12, "bin {f}: {b}");
        }
    }

    #[test]
    fn initial_dft_single_sample_at_origin() {
        let pattern = SamplingPattern::new(4, vec![0]).unwrap();
        let meas = Measurement::new(vec![c(1.5, -0.5)], pattern).unwrap();
        let v = initial_dft(&meas).unwrap();
        assert!(v.bins().iter().all(|&b| b == c(1.5, -0.5)));
    }

    #[test]
    fn variance_examples() {
        assert_eq!(missing_noise_variance(256, 256, 3.0).unwrap(), 0.0);
        let v = missing_noise_variance(256, 128, 1.0).unwrap();
        assert!((v - 128.0 * 128.0 / 255.0).abs() < 1e-12);
        assert!((v - 64.2510).abs() < 1e-4);
        assert!(missing_noise_variance(1, 1, 1.0).is_err());
        assert!(missing_noise_variance(8, 9, 1.0).is_err());
        assert!(missing_noise_variance(8, 4, -1.0).is_err());
    }

    #[test]
    fn threshold_examples() {
        let paper = ThresholdConfig::new(0.99, ThresholdVariant::Paper, AmpMode::Oracle).unwrap();
        let ref10 = ThresholdConfig::new(0.99, ThresholdVariant::Ref10, AmpMode::Oracle).unwrap();
        assert_eq!(threshold(0.0, 256, &paper), 0.0);
        assert_eq!(threshold(0.0, 256, &ref10), 0.0);
        // frozen from a 50-digit evaluation of both formulas
        let t = threshold(64.2510, 256, &paper);
        assert!((t - 0.526_823_961_395_866_3).abs() < 1e-12, "{t}");
        let t = threshold(192.753, 256, &ref10);
        assert!((t - 44.221_555_100_530_58).abs() < 1e-10, "{t}");
    }

    #[test]
    fn config_rejects_bad_probability() {
        for p in [0.0, 1.0, -0.1, f64::NAN] {
            assert!(ThresholdConfig::new(p, ThresholdVariant::Ref10, AmpMode::Oracle).is_err());
        }
    }

    #[test]
    fn detection_is_strict() {
        let v = Spectrum::new(vec![c(0.0, 0.0), c(10.0, 0.0), c(0.0, 0.0), c(0.0, 0.0)]);
        assert_eq!(detect_positions(&v, 5.0), vec![1]);
        assert!(detect_positions(&v, 10.0).is_empty());
        assert!(detect_positions(&v, 50.0).is_empty());
        assert!(detect_positions(&Spectrum::zeros(4), 0.0).is_empty());
    }

    #[test]
    fn cs_matrix_examples() {
        let full = build_cs_matrix(4, &SamplingPattern::full(4).unwrap(), &[0, 1, 2, 3]).unwrap();
        for r in 0..4 {
            for k in 0..4 {
                let want = Complex64::from_polar(0.25, 2.0 * PI * (r * k) as f64 / 4.0);
                assert!((full.matrix()[(r, k)] - want).norm() < 1e-15);
            }
        }
        let half = build_cs_matrix(4, &SamplingPattern::new(4, vec![0, 2]).unwrap(), &[1]).unwrap();
        assert!((half.matrix()[(0, 0)] - c(0.25, 0.0)).norm() < 1e-15);
        assert!((half.matrix()[(1, 0)] - c(-0.25, 0.0)).norm() < 1e-15);

        let pattern = random_pattern(64, 32, 3).unwrap();
        let m = build_cs_matrix(64, &pattern, &[1, 5, 9, 20, 33]).unwrap();
        assert_eq!((m.rows(), m.cols()), (32, 5));
    }

    #[test]
    fn cs_matrix_errors() {
        let pattern = SamplingPattern::new(4, vec![0, 2]).unwrap();
        assert_eq!(build_cs_matrix(4, &pattern, &[]), Err(Error::EmptySupport));
        assert!(matches!(
            build_cs_matrix(4, &pattern, &[0, 1, 2]),
            Err(Error::Underdetermined { rows: 2, cols: 3 })
        ));
    }

    #[test]
    fn ls_solve_closed_form() {
        let x = synthesize(&tone_spec(4, &[(3.0, 1)]));
        let full = SamplingPattern::full(4).unwrap();
        let meas = sample(&x, &full).unwrap();
        let a = build_cs_matrix(4, &full, &[1]).unwrap();
        let sol = ls_solve(&a, meas.values()).unwrap();
        assert!((sol[0] - c(12.0, 0.0)).norm() < 1e-12);

        let half = SamplingPattern::new(4, vec![0, 2]).unwrap();
        let meas = sample(&x, &half).unwrap();
        let a = build_cs_matrix(4, &half, &[1]).unwrap();
        let sol = ls_solve(&a, meas.values()).unwrap();
        assert!((sol[0] - c(12.0, 0.0)).norm() < 1e-12);
    }

    #[test]
    fn ls_solve_reports_aliasing_as_singular() {
        // positions {0, 2} cannot tell bins 0 and 2 apart at N = 4
        let pattern = SamplingPattern::new(4, vec![0, 2]).unwrap();
        let a = build_cs_matrix(4, &pattern, &[0, 2]).unwrap();
        let v = [c(1.0, 0.0), c(1.0, 0.0)];
        assert!(matches!(ls_solve(&a, &v), Err(Error::Singular { .. })));
    }

    #[test]
    fn positioning_examples() {
        let x = spectral_positioning(&[c(12.0, 0.0)], &[1], 4).unwrap();
        assert_eq!(x.bins(), &[c(0.0, 0.0), c(12.0, 0.0), c(0.0, 0.0), c(0.0, 0.0)]);
        assert_eq!(spectral_positioning(&[], &[], 4).unwrap(), Spectrum::zeros(4));
        let vals = [c(1.0, 0.0), c(2.0, 1.0), c(0.0, -3.0), c(4.0, 4.0)];
        assert_eq!(spectral_positioning(&vals, &[0, 1, 2, 3], 4).unwrap().bins(), &vals);
        assert!(spectral_positioning(&vals, &[0], 4).is_err());
    }

    #[test]
    fn idft_examples() {
        let x = idft(&Spectrum::new(vec![c(0.0, 0.0), c(12.0, 0.0), c(0.0, 0.0), c(0.0, 0.0)]));
        for (t, s) in x.iter().enumerate() {
            let want = Complex64::from_polar(3.0, 2.0 * PI * t as f64 / 4.0);
            assert!((s - want).norm() < 1e-12);
        }
        assert!(idft(&Spectrum::zeros(8)).iter().all(|s| s.norm() == 0.0));
    }

    #[test]
    fn reconstruct_full_sampling_is_exact() {
        let spec = tone_spec(32, &[(1.0, 3), (0.5, 7), (2.0, 30)]);
        let x = synthesize(&spec);
        let meas = sample(&x, &SamplingPattern::full(32).unwrap()).unwrap();
        let res = reconstruct(&meas, Some(5.25), &ThresholdConfig::default()).unwrap();
        assert_eq!(res.detection.variance, 0.0);
        assert_eq!(res.detection.threshold, 0.0);
        assert_eq!(res.detection.positions, spec.support());
        for (a, b) in res.time_signal.iter().zip(x.samples()) {
            assert!((a - b).norm() < 1e-9);
        }
    }

    #[test]
    fn reconstruct_half_sampling_recovers_support() {
        let spec = tone_spec(256, &[(1.0, 10), (1.0, 77), (1.0, 200)]);
        let x = synthesize(&spec);
        let meas = sample(&x, &random_pattern(256, 128, 1).unwrap()).unwrap();
        let res = reconstruct(&meas, Some(3.0), &ThresholdConfig::default()).unwrap();
        assert_eq!(res.status, ReconStatus::Recovered);
        assert_eq!(res.detection.positions, vec![10, 77, 200]);
        for (a, b) in res.time_signal.iter().zip(x.samples()) {
            assert!((a - b).norm() < 1e-9);
        }
    }

    #[test]
    fn reconstruct_empty_support_is_a_status() {
        let x = synthesize(&tone_spec(64, &[(1.0, 5)]));
        let meas = sample(&x, &random_pattern(64, 8, 2).unwrap()).unwrap();
        // absurd oracle power pushes the threshold above every bin
        let res = reconstruct(&meas, Some(1e6), &ThresholdConfig::default()).unwrap();
        assert_eq!(res.status, ReconStatus::EmptySupport);
        assert_eq!(res.spectrum, Spectrum::zeros(64));
    }

    #[test]
    fn oracle_mode_needs_amplitudes() {
        let x = synthesize(&tone_spec(16, &[(1.0, 5)]));
        let meas = sample(&x, &random_pattern(16, 8, 2).unwrap()).unwrap();
        assert!(reconstruct(&meas, None, &ThresholdConfig::default()).is_err());
        let est = ThresholdConfig::new(0.99, ThresholdVariant::Ref10, AmpMode::Estimate).unwrap();
        assert!(reconstruct(&meas, None, &est).is_ok());
    }
}
