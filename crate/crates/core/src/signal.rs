//! Sparse multitone signals and random positional subsampling.
//!
//! A signal is a sum of `K` on-grid complex exponentials of length `N`.
//! Measurements are the samples found at a random subset of time positions;
//! the subset is drawn without replacement from a seeded generator so that
//! every run is reproducible from its seed alone.

use std::collections::HashSet;
use std::f64::consts::PI;

use num_complex::Complex64;
use rand::seq::index;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

/// One on-grid tone `amplitude · exp(j·2π·bin·n/N)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Tone {
    pub amplitude: f64,
    pub bin: usize,
}

/// Definition of a `K`-sparse multitone signal of length `N`.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseSpec {
    n: usize,
    tones: Vec<Tone>,
}

impl SparseSpec {
    pub fn new(n: usize, tones: Vec<Tone>) -> Result<Self> {
        if tones.is_empty() {
            return Err(Error::InvalidSpec("at least one tone is required".into()));
        }
        if tones.len() >= n {
            return Err(Error::InvalidSpec(format!(
                "tone count {} must be below the signal length {}",
                tones.len(),
                n
            )));
        }
        let mut seen = HashSet::with_capacity(tones.len());
        for tone in &tones {
            if tone.bin >= n {
                return Err(Error::InvalidSpec(format!(
                    "bin {} outside [0, {})",
                    tone.bin, n
                )));
            }
            if !(tone.amplitude.is_finite() && tone.amplitude > 0.0) {
                return Err(Error::InvalidSpec(format!(
                    "amplitude {} must be positive and finite",
                    tone.amplitude
                )));
            }
            if !seen.insert(tone.bin) {
                return Err(Error::InvalidSpec(format!("duplicate bin {}", tone.bin)));
            }
        }
        Ok(Self { n, tones })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn k(&self) -> usize {
        self.tones.len()
    }

    pub fn tones(&self) -> &[Tone] {
        &self.tones
    }

    /// Frequency bins of the tones, sorted ascending.
    pub fn support(&self) -> Vec<usize> {
        let mut bins: Vec<usize> = self.tones.iter().map(|t| t.bin).collect();
        bins.sort_unstable();
        bins
    }

    /// Same bins with every amplitude multiplied by `factor`.
    pub fn scaled(&self, factor: f64) -> Result<Self> {
        let tones = self
            .tones
            .iter()
            .map(|t| Tone {
                amplitude: t.amplitude * factor,
                bin: t.bin,
            })
            .collect();
        Self::new(self.n, tones)
    }

    /// Draw `k` distinct bins uniformly and amplitudes uniform in `[lo, hi]`.
    pub fn random(n: usize, k: usize, lo: f64, hi: f64, seed: u64) -> Result<Self> {
        if !(lo > 0.0 && hi >= lo && hi.is_finite()) {
            return Err(Error::InvalidSpec(format!(
                "amplitude range [{lo}, {hi}] must be positive and ordered"
            )));
        }
        if k == 0 || k >= n {
            return Err(Error::InvalidSpec(format!("need 1 <= K < N, got K={k}, N={n}")));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let bins = index::sample(&mut rng, n, k);
        let tones = bins
            .iter()
            .map(|bin| {
                let u: f64 = rand::Rng::gen(&mut rng);
                Tone {
                    amplitude: lo + (hi - lo) * u,
                    bin,
                }
            })
            .collect();
        Self::new(n, tones)
    }
}

/// Full-length time-domain signal `x(n)`, `n = 0..N-1`.
#[derive(Debug, Clone, PartialEq)]
pub struct TimeSignal {
    samples: Vec<Complex64>,
}

impl TimeSignal {
    pub fn new(samples: Vec<Complex64>) -> Self {
        Self { samples }
    }

    pub fn samples(&self) -> &[Complex64] {
        &self.samples
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn into_samples(self) -> Vec<Complex64> {
        self.samples
    }

    /// Mean power `(1/N)·Σ|x(n)|²`; equals `Σ A_i²` for distinct on-grid tones.
    pub fn mean_power(&self) -> f64 {
        if self.samples.is_empty() {
            return 0.0;
        }
        self.samples.iter().map(|s| s.norm_sqr()).sum::<f64>() / self.samples.len() as f64
    }
}

/// Ordered set of available time positions.
///
/// `n_a` counts the available samples and `m_missing = n - n_a` the omitted
/// ones. The bare symbol `M` is never used: it means "available" in the
/// measurement model and "missing" in the noise-variance model.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SamplingPattern {
    n: usize,
    positions: Vec<usize>,
}

impl SamplingPattern {
    pub fn new(n: usize, positions: Vec<usize>) -> Result<Self> {
        if positions.is_empty() || positions.len() > n {
            return Err(Error::InvalidArgument(format!(
                "need 1 <= N_a <= N, got N_a={}, N={}",
                positions.len(),
                n
            )));
        }
        let mut seen = vec![false; n];
        for &p in &positions {
            if p >= n {
                return Err(Error::InvalidArgument(format!("position {p} outside [0, {n})")));
            }
            if std::mem::replace(&mut seen[p], true) {
                return Err(Error::InvalidArgument(format!("duplicate position {p}")));
            }
        }
        Ok(Self { n, positions })
    }

    /// Every position, in order.
    pub fn full(n: usize) -> Result<Self> {
        Self::new(n, (0..n).collect())
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn positions(&self) -> &[usize] {
        &self.positions
    }

    pub fn n_a(&self) -> usize {
        self.positions.len()
    }

    pub fn m_missing(&self) -> usize {
        self.n - self.positions.len()
    }
}

/// Uniform selection of `n_a` of `n` positions without replacement, in draw order.
pub fn random_pattern(n: usize, n_a: usize, seed: u64) -> Result<SamplingPattern> {
    if n_a == 0 || n_a > n {
        return Err(Error::InvalidArgument(format!(
            "need 1 <= N_a <= N, got N_a={n_a}, N={n}"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let positions = index::sample(&mut rng, n, n_a).into_vec();
    SamplingPattern::new(n, positions)
}

/// Available samples `v` together with the pattern that produced them.
#[derive(Debug, Clone, PartialEq)]
pub struct Measurement {
    values: Vec<Complex64>,
    pattern: SamplingPattern,
}

impl Measurement {
    pub fn new(values: Vec<Complex64>, pattern: SamplingPattern) -> Result<Self> {
        if values.len() != pattern.n_a() {
            return Err(Error::InvalidArgument(format!(
                "{} values for {} positions",
                values.len(),
                pattern.n_a()
            )));
        }
        Ok(Self { values, pattern })
    }

    pub fn values(&self) -> &[Complex64] {
        &self.values
    }

    pub fn pattern(&self) -> &SamplingPattern {
        &self.pattern
    }

    /// `(1/N_a)·Σ|v(a)|²`, an estimate of `Σ A_i²` that needs no amplitude knowledge.
    pub fn mean_power(&self) -> f64 {
        self.values.iter().map(|v| v.norm_sqr()).sum::<f64>() / self.values.len() as f64
    }
}

pub fn synthesize(spec: &SparseSpec) -> TimeSignal {
    let n = spec.n();
    let samples = (0..n)
        .map(|t| {
            spec.tones()
                .iter()
                .map(|tone| {
                    // reduce the phase index mod N first to keep the angle small
                    let phase = 2.0 * PI * ((tone.bin * t) % n) as f64 / n as f64;
                    Complex64::from_polar(tone.amplitude, phase)
                })
                .sum()
        })
        .collect();
    TimeSignal::new(samples)
}

pub fn sample(x: &TimeSignal, pattern: &SamplingPattern) -> Result<Measurement> {
    if pattern.n() != x.len() {
        return Err(Error::InvalidArgument(format!(
            "pattern length {} does not match signal length {}",
            pattern.n(),
            x.len()
        )));
    }
    let values = pattern.positions().iter().map(|&p| x.samples()[p]).collect();
    Measurement::new(values, pattern.clone())
}

pub fn sum_sq_amplitudes(spec: &SparseSpec) -> f64 {
    spec.tones().iter().map(|t| t.amplitude * t.amplitude).sum()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    fn close(a: Complex64, b: Complex64, tol: f64) -> bool {
        (a - b).norm() <= tol
    }

    #[test]
    fn dc_tone_is_constant() {
        let spec = SparseSpec::new(8, vec![Tone { amplitude: 1.0, bin: 0 }]).unwrap();
        let x = synthesize(&spec);
        assert!(x.samples().iter().all(|&s| close(s, c(1.0, 0.0), 1e-15)));
    }

    #[test]
    fn quarter_turn_rotation() {
        let spec = SparseSpec::new(4, vec![Tone { amplitude: 2.0, bin: 1 }]).unwrap();
        let x = synthesize(&spec);
        let want = [c(2.0, 0.0), c(0.0, 2.0), c(-2.0, 0.0), c(0.0, -2.0)];
        for (got, want) in x.samples().iter().zip(want) {
            assert!(close(*got, want, 1e-12), "{got} vs {want}");
        }
    }

    #[test]
    fn spec_rejects_bad_input() {
        let dup = vec![
            Tone { amplitude: 1.0, bin: 3 },
            Tone { amplitude: 2.0, bin: 3 },
        ];
        assert!(matches!(SparseSpec::new(8, dup), Err(Error::InvalidSpec(_))));
        assert!(SparseSpec::new(8, vec![]).is_err());
        assert!(SparseSpec::new(8, vec![Tone { amplitude: 0.0, bin: 1 }]).is_err());
        assert!(SparseSpec::new(8, vec![Tone { amplitude: 1.0, bin: 8 }]).is_err());
        let full: Vec<Tone> = (0..4).map(|bin| Tone { amplitude: 1.0, bin }).collect();
        assert!(SparseSpec::new(4, full).is_err());
    }

    #[test]
    fn sum_of_squares() {
        let one = SparseSpec::new(8, vec![Tone { amplitude: 1.0, bin: 1 }]).unwrap();
        assert_eq!(sum_sq_amplitudes(&one), 1.0);
        let three = SparseSpec::new(
            8,
            vec![
                Tone { amplitude: 1.0, bin: 0 },
                Tone { amplitude: 2.0, bin: 1 },
                Tone { amplitude: 3.0, bin: 5 },
            ],
        )
        .unwrap();
        assert_eq!(sum_sq_amplitudes(&three), 14.0);
    }

    #[test]
    fn full_pattern_is_a_permutation() {
        for seed in 0..20 {
            let p = random_pattern(4, 4, seed).unwrap();
            let mut sorted = p.positions().to_vec();
            sorted.sort_unstable();
            assert_eq!(sorted, vec![0, 1, 2, 3]);
            assert_eq!(p.m_missing(), 0);
        }
    }

    #[test]
    fn pattern_is_deterministic() {
        assert_eq!(random_pattern(8, 4, 42).unwrap(), random_pattern(8, 4, 42).unwrap());
        assert_eq!(random_pattern(8, 4, 42).unwrap().n_a(), 4);
    }

    #[test]
    fn pattern_rejects_bad_counts() {
        assert!(matches!(random_pattern(4, 5, 0), Err(Error::InvalidArgument(_))));
        assert!(random_pattern(4, 0, 0).is_err());
        assert!(SamplingPattern::new(4, vec![0, 0]).is_err());
        assert!(SamplingPattern::new(4, vec![4]).is_err());
    }

    #[test]
    fn sample_selects_positions() {
        let x = TimeSignal::new(vec![c(2.0, 0.0), c(0.0, 2.0), c(-2.0, 0.0), c(0.0, -2.0)]);
        let m = sample(&x, &SamplingPattern::new(4, vec![0, 2]).unwrap()).unwrap();
        assert_eq!(m.values(), &[c(2.0, 0.0), c(-2.0, 0.0)]);

        let all = sample(&x, &SamplingPattern::full(4).unwrap()).unwrap();
        assert_eq!(all.values(), x.samples());

        let wrong = SamplingPattern::full(5).unwrap();
        assert!(matches!(sample(&x, &wrong), Err(Error::InvalidArgument(_))));
    }

    #[test]
    fn random_spec_is_valid_and_reproducible() {
        let a = SparseSpec::random(256, 14, 1.0, 2.0, 9).unwrap();
        let b = SparseSpec::random(256, 14, 1.0, 2.0, 9).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.k(), 14);
        assert!(a.tones().iter().all(|t| (1.0..=2.0).contains(&t.amplitude)));
    }
}
