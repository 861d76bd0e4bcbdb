//! Hardware-model path for the first part of the architecture: fixed-point
//! threshold unit, magnitude comparator and the combined detection stage.
//!
//! Adders and multipliers are modeled at value level. The logarithm goes
//! through the 4096-entry table and the square root through the 32-bit
//! non-restoring unit, with the radicand normalized by an even power of two
//! so that its integer image fills the top of the 32-bit word.

use std::f64::consts::LN_10;

use crate::error::{Error, Result};
use crate::hw::{decompose, lut_log2, nr_sqrt, FixedLog, SqrtResult};
use crate::recon::{
    detection_level, initial_dft, missing_noise_variance, nth_root_complement, resolve_sum_sq,
    solve_detected, DetectionResult, ReconstructionResult, Spectrum, ThresholdConfig,
    ThresholdVariant,
};
use crate::signal::Measurement;

/// Fraction bits of the variance register.
pub const VAR_FRAC_BITS: u32 = 32;

/// Target position of the radicand's leading one (bit 30 or 31).
const RADICAND_TOP_BIT: i32 = 30;

#[derive(Debug, Clone, PartialEq)]
pub struct FixedThresholdTrace {
    /// Variance register, unsigned Q32.32.
    pub var_fixed: u64,
    /// `1 - P^{1/N}` from the host model.
    pub root_complement: f64,
    /// `log2(1 - P^{1/N})` from the table.
    pub log_term: FixedLog,
    /// Value-level radicand before normalization.
    pub radicand: f64,
    pub root_in: u32,
    pub root_out: SqrtResult,
    /// Even exponent `s` with `root_in ≈ radicand · 2^s`.
    pub scale_shift: i32,
    pub t_fixed: f64,
}

impl FixedThresholdTrace {
    pub fn variance(&self) -> f64 {
        self.var_fixed as f64 / f64::powi(2.0, VAR_FRAC_BITS as i32)
    }

    pub fn log10_term(&self) -> f64 {
        self.log_term.value() / std::f64::consts::LOG2_10
    }

    /// Square root recovered from the integer unit: `root / 2^{s/2}`.
    pub fn root_value(&self) -> f64 {
        scale_by_pow2(f64::from(self.root_out.root), -self.scale_shift / 2)
    }

    /// `(stage, raw, scaled)` rows in datapath order.
    pub fn stages(&self) -> Vec<(&'static str, f64, f64)> {
        vec![
            ("variance", self.var_fixed as f64, self.variance()),
            ("root_complement", self.root_complement, self.root_complement),
            ("log10", self.log_term.raw as f64, self.log10_term()),
            ("radicand", self.radicand, self.radicand),
            (
                "sqrt_in",
                f64::from(self.root_in),
                scale_by_pow2(f64::from(self.root_in), -self.scale_shift),
            ),
            ("sqrt_out", f64::from(self.root_out.root), self.root_value()),
            ("sqrt_remainder", f64::from(self.root_out.remainder), f64::from(self.root_out.remainder)),
            ("threshold", self.t_fixed, self.t_fixed),
        ]
    }
}

/// `x · 2^e` without overflowing the intermediate power of two.
fn scale_by_pow2(x: f64, e: i32) -> f64 {
    let half = e / 2;
    x * f64::powi(2.0, half) * f64::powi(2.0, e - half)
}

/// Normalizes a positive radicand to `[2^30, 2^32)` by an even shift and takes its root.
fn normalized_root(radicand: f64) -> Result<(u32, SqrtResult, i32)> {
    if radicand == 0.0 {
        return Ok((0, nr_sqrt(0), 0));
    }
    let d = decompose(radicand).map_err(|_| Error::Range(format!("radicand {radicand}")))?;
    let mut shift = RADICAND_TOP_BIT - d.exponent;
    if shift % 2 != 0 {
        shift += 1;
    }
    let mut scaled = scale_by_pow2(d.mantissa, d.exponent + shift).round();
    if scaled > f64::from(u32::MAX) {
        // rounding carried into bit 32
        shift -= 2;
        scaled = scale_by_pow2(d.mantissa, d.exponent + shift).round();
    }
    if !(0.0..=f64::from(u32::MAX)).contains(&scaled) {
        return Err(Error::Range(format!("radicand {radicand} does not fit 32 bits")));
    }
    let root_in = scaled as u32;
    Ok((root_in, nr_sqrt(root_in), shift))
}

/// Fixed-point threshold unit.
pub fn threshold_fixed(
    n: usize,
    n_a: usize,
    sum_sq_amp: f64,
    p: f64,
    variant: ThresholdVariant,
) -> Result<FixedThresholdTrace> {
    if !(p > 0.0 && p < 1.0) {
        return Err(Error::InvalidArgument(format!("probability {p} outside (0, 1)")));
    }
    let var = missing_noise_variance(n, n_a, sum_sq_amp)?;
    let var_scaled = scale_by_pow2(var, VAR_FRAC_BITS as i32).round();
    if var_scaled > u64::MAX as f64 {
        return Err(Error::Range(format!("variance {var} exceeds the Q32.32 register")));
    }
    let var_fixed = var_scaled as u64;
    let var_q = var_fixed as f64 / f64::powi(2.0, VAR_FRAC_BITS as i32);

    let root_complement = nth_root_complement(p, n);
    let log_term = lut_log2(root_complement)?;
    let neg_log10 = -log_term.value() / std::f64::consts::LOG2_10;

    let radicand = match variant {
        ThresholdVariant::Paper => var_q * var_q * neg_log10,
        ThresholdVariant::Ref10 => var_q * neg_log10 * LN_10,
    };
    let (root_in, root_out, scale_shift) = normalized_root(radicand)?;
    let root = scale_by_pow2(f64::from(root_out.root), -scale_shift / 2);
    let t_fixed = match variant {
        ThresholdVariant::Paper => root / n as f64,
        ThresholdVariant::Ref10 => root,
    };
    Ok(FixedThresholdTrace {
        var_fixed,
        root_complement,
        log_term,
        radicand,
        root_in,
        root_out,
        scale_shift,
        t_fixed,
    })
}

/// Comparator output vector: one bit per bin.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ComparatorBits {
    bits: Vec<u8>,
    count_ones: usize,
}

impl ComparatorBits {
    pub fn bits(&self) -> &[u8] {
        &self.bits
    }

    pub fn count_ones(&self) -> usize {
        self.count_ones
    }

    /// Indices of the set bits, i.e. the column-selection list.
    pub fn positions(&self) -> Vec<usize> {
        self.bits
            .iter()
            .enumerate()
            .filter_map(|(f, &b)| (b == 1).then_some(f))
            .collect()
    }
}

pub fn comparator(v_spec: &Spectrum, t: f64) -> ComparatorBits {
    let bits: Vec<u8> = v_spec.magnitudes().map(|m| u8::from(m > t)).collect();
    let count_ones = bits.iter().filter(|&&b| b == 1).count();
    ComparatorBits { bits, count_ones }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Part1Output {
    pub bits: ComparatorBits,
    pub trace: FixedThresholdTrace,
    pub spectrum: Spectrum,
}

/// Initial DFT, fixed-point threshold and comparator.
pub fn part1_pipeline(
    meas: &Measurement,
    oracle_sum_sq: Option<f64>,
    cfg: &ThresholdConfig,
) -> Result<Part1Output> {
    let pattern = meas.pattern();
    let spectrum = initial_dft(meas)?;
    let sum_sq = resolve_sum_sq(meas, oracle_sum_sq, cfg.amp_mode)?;
    let trace = threshold_fixed(pattern.n(), pattern.n_a(), sum_sq, cfg.p(), cfg.variant)?;
    let bits = comparator(&spectrum, detection_level(trace.t_fixed, meas));
    Ok(Part1Output {
        bits,
        trace,
        spectrum,
    })
}

/// Full reconstruction with support taken from the comparator bits of the
/// fixed-point path; Parts 2 and 3 are shared with the reference pipeline.
pub fn reconstruct_hardware(
    meas: &Measurement,
    oracle_sum_sq: Option<f64>,
    cfg: &ThresholdConfig,
) -> Result<(ReconstructionResult, FixedThresholdTrace)> {
    let part1 = part1_pipeline(meas, oracle_sum_sq, cfg)?;
    let detection = DetectionResult {
        threshold: part1.trace.t_fixed,
        variance: part1.trace.variance(),
        positions: part1.bits.positions(),
    };
    let result = solve_detected(meas, part1.spectrum, detection)?;
    Ok((result, part1.trace))
}
