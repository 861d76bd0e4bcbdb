//! Bit-exact models of the FPGA numeric primitives used by the threshold path.
//!
//! * Logarithm: `x = x_m · 2^x_e` with `x_m ∈ [1, 2)`, so
//!   `log2 x = x_e + log2 x_m` and the mantissa term comes from a 4096-entry
//!   table of `round(2^15 · log2(1 + i/2^12))`, addressed by the top 12
//!   fraction bits (truncation, no interpolation).
//! * Square root: digit-by-digit non-restoring recurrence over a 32-bit
//!   radicand, producing a 16-bit root and a 17-bit remainder.

use std::sync::OnceLock;

use crate::error::{Error, Result};

/// Fraction bits of a [`FixedLog`] value.
pub const LOG_SCALE_BITS: u32 = 15;
/// Address width of the mantissa table.
pub const LUT_INDEX_BITS: u32 = 12;
pub const LUT_LEN: usize = 1 << LUT_INDEX_BITS;

const F64_MANTISSA_BITS: u32 = 52;
const F64_EXP_BIAS: i32 = 1023;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FloatDecomposition {
    pub mantissa: f64,
    pub exponent: i32,
}

/// Splits a positive finite `x` into `mantissa · 2^exponent`, `1 <= mantissa < 2`.
///
/// Subnormals are renormalized, so the split is exact over the whole
/// positive range of `f64`.
pub fn decompose(x: f64) -> Result<FloatDecomposition> {
    if !(x.is_finite() && x > 0.0) {
        return Err(Error::Domain(format!("logarithm of non-positive or non-finite {x}")));
    }
    let (x, bias_shift) = if x.is_normal() {
        (x, 0)
    } else {
        // 2^64 lifts every subnormal into the normal range exactly
        (x * f64::powi(2.0, 64), 64)
    };
    let bits = x.to_bits();
    let biased = ((bits >> F64_MANTISSA_BITS) & 0x7ff) as i32;
    let frac = bits & ((1u64 << F64_MANTISSA_BITS) - 1);
    let mantissa = f64::from_bits((F64_EXP_BIAS as u64) << F64_MANTISSA_BITS | frac);
    Ok(FloatDecomposition {
        mantissa,
        exponent: biased - F64_EXP_BIAS - bias_shift,
    })
}

/// Q-scaled logarithm: represents `raw / 2^15`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub struct FixedLog {
    pub raw: i64,
}

impl FixedLog {
    pub fn value(self) -> f64 {
        self.raw as f64 / f64::from(1u32 << LOG_SCALE_BITS)
    }
}

#[derive(Debug, Clone)]
pub struct LogLut {
    entries: Vec<i32>,
}

impl LogLut {
    pub fn build() -> Self {
        let scale = f64::from(1u32 << LOG_SCALE_BITS);
        let entries = (0..LUT_LEN)
            .map(|i| {
                let xm = 1.0 + i as f64 / LUT_LEN as f64;
                (scale * xm.log2()).round() as i32
            })
            .collect();
        Self { entries }
    }

    /// Process-wide table, built on first use.
    pub fn shared() -> &'static LogLut {
        static LUT: OnceLock<LogLut> = OnceLock::new();
        LUT.get_or_init(LogLut::build)
    }

    pub fn entries(&self) -> &[i32] {
        &self.entries
    }

    /// Table address for a mantissa in `[1, 2)`: its top 12 fraction bits.
    pub fn index_of(mantissa: f64) -> usize {
        // exact: x_m has at most 52 fraction bits and the scale is a power of two
        let idx = ((mantissa - 1.0) * LUT_LEN as f64).floor() as usize;
        idx.min(LUT_LEN - 1)
    }

    pub fn lookup(&self, mantissa: f64) -> i32 {
        self.entries[Self::index_of(mantissa)]
    }
}

pub fn lut_log2(x: f64) -> Result<FixedLog> {
    lut_log2_with(LogLut::shared(), x)
}

pub fn lut_log2_with(lut: &LogLut, x: f64) -> Result<FixedLog> {
    let d = decompose(x)?;
    let raw = (i64::from(d.exponent) << LOG_SCALE_BITS) + i64::from(lut.lookup(d.mantissa));
    Ok(FixedLog { raw })
}

/// `log10 x = log2 x / log2 10`, with `log2 x` from the table.
pub fn lut_log10(x: f64) -> Result<f64> {
    Ok(lut_log2(x)?.value() / std::f64::consts::LOG2_10)
}

/// Root `W` (16 bits) and remainder `R` (17 bits) of a 32-bit radicand.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SqrtResult {
    pub root: u16,
    pub remainder: u32,
}

/// Non-restoring digit-by-digit square root.
///
/// Each of the 16 iterations brings down two radicand bits,
/// `r ← 4·r + B[2i+1..2i]`, then subtracts `4·w + 1` when the previous
/// partial remainder was non-negative or adds `4·w + 3` when it was negative.
/// The sign of the new remainder is the next root bit. A negative final
/// remainder is corrected once by adding `2·w + 1`.
pub fn nr_sqrt(b: u32) -> SqrtResult {
    // 18 bits of signed remainder are enough; i64 leaves plenty of headroom
    let mut r: i64 = 0;
    let mut w: u32 = 0;
    for i in (0..16).rev() {
        let pair = i64::from((b >> (2 * i)) & 0b11);
        let shifted = (r << 2) | pair;
        r = if r >= 0 {
            shifted - i64::from((w << 2) | 0b01)
        } else {
            shifted + i64::from((w << 2) | 0b11)
        };
        w = if r >= 0 { (w << 1) | 1 } else { w << 1 };
    }
    if r < 0 {
        r += i64::from((w << 1) | 1);
    }
    debug_assert!((0..1 << 17).contains(&r));
    SqrtResult {
        root: w as u16,
        remainder: r as u32,
    }
}

/// Real square root through the 32-bit integer unit:
/// `nr_sqrt(round(x · 4^frac_bits)).root / 2^frac_bits`.
pub fn fixed_sqrt_real(x: f64, frac_bits: u32) -> Result<f64> {
    if !(x.is_finite() && x >= 0.0) {
        return Err(Error::Domain(format!("square root of {x}")));
    }
    if frac_bits > 16 {
        return Err(Error::Range(format!("{frac_bits} fraction bits leave no integer part")));
    }
    let scaled = (x * f64::powi(2.0, 2 * frac_bits as i32)).round();
    if scaled > f64::from(u32::MAX) {
        return Err(Error::Range(format!(
            "{x} scaled by 2^{} does not fit 32 bits",
            2 * frac_bits
        )));
    }
    let root = nr_sqrt(scaled as u32).root;
    Ok(f64::from(root) / f64::powi(2.0, frac_bits as i32))
}
