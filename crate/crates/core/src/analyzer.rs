//! Closed-form cost model for MAD versus element-wise LUT mpGEMM.
//!
//! Costs use a unit machine: one multiply-add or one table lookup is one
//! compute unit, one element touched is one memory unit. All quantities are
//! exact rationals.

use num_rational::Ratio;

use crate::error::{Error, Result};

pub type Rational = Ratio<u128>;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct MadComplexity {
    pub compute: u128,
    pub memory: u128,
    /// Activation quantization, reported separately.
    pub preprocess: u128,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ElutComplexity {
    pub pre_compute: Rational,
    pub pre_memory: Rational,
    pub acc_compute: Rational,
    pub acc_memory: Rational,
    pub overall_compute: Rational,
}

/// How the mirrored table size is counted.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TableModel {
    /// Whole entries: `⌈C^g / 2⌉` with mirror.
    Exact,
    /// The big-O model: `C^g / 2` with mirror, no rounding.
    Asymptotic,
}

fn check_dims(m: u64, n: u64, k: u64) -> Result<()> {
    if m == 0 || n == 0 || k == 0 {
        return Err(Error::Config(format!(
            "dimensions must be positive, got m={m} n={n} k={k}"
        )));
    }
    Ok(())
}

fn full_count(c: u64, g: u32) -> Result<u128> {
    (c as u128)
        .checked_pow(g)
        .ok_or_else(|| Error::Config(format!("{c}^{g} overflows")))
}

/// Table entries per group.
pub fn entry_count(c: u64, g: u32, mirror: bool) -> Result<u128> {
    let full = full_count(c, g)?;
    Ok(if mirror { full.div_ceil(2) } else { full })
}

fn entries(c: u64, g: u32, mirror: bool, model: TableModel) -> Result<Rational> {
    let full = full_count(c, g)?;
    Ok(match (mirror, model) {
        (false, _) => Rational::from_integer(full),
        (true, TableModel::Exact) => Rational::from_integer(full.div_ceil(2)),
        (true, TableModel::Asymptotic) => Rational::new(full, 2),
    })
}

pub fn complexity_mad(m: u64, n: u64, k: u64) -> Result<MadComplexity> {
    check_dims(m, n, k)?;
    let mnk = m as u128 * n as u128 * k as u128;
    Ok(MadComplexity {
        compute: mnk,
        memory: mnk,
        preprocess: n as u128 * k as u128,
    })
}

pub fn complexity_elut(
    m: u64,
    n: u64,
    k: u64,
    c: u64,
    g: u32,
    mirror: bool,
) -> Result<ElutComplexity> {
    complexity_elut_with(m, n, k, c, g, mirror, TableModel::Exact)
}

pub fn complexity_elut_with(
    m: u64,
    n: u64,
    k: u64,
    c: u64,
    g: u32,
    mirror: bool,
    model: TableModel,
) -> Result<ElutComplexity> {
    check_dims(m, n, k)?;
    if c < 1 || g == 0 {
        return Err(Error::Config(format!(
            "need c ≥ 1 and g ≥ 1, got c={c} g={g}"
        )));
    }
    if !k.is_multiple_of(g as u64) {
        return Err(Error::Config(format!(
            "k = {k} is not a multiple of g = {g}"
        )));
    }
    let e = entries(c, g, mirror, model)?;
    let g = g as u128;
    let nk_g = Rational::new(n as u128 * k as u128, g);
    let mnk_g = Rational::new(m as u128 * n as u128 * k as u128, g);
    let pre = nk_g * e;
    Ok(ElutComplexity {
        pre_compute: pre,
        pre_memory: pre,
        acc_compute: mnk_g,
        acc_memory: mnk_g * e,
        overall_compute: pre.max(mnk_g),
    })
}

/// `⌈log2 x⌉`, with `x ≤ 1` mapping to 0.
pub fn ceil_log2(x: u128) -> u32 {
    if x <= 1 {
        0
    } else {
        128 - (x - 1).leading_zeros()
    }
}

/// Element-wise bits per weight: `(1 + ⌈log2 ⌈C^g/2⌉⌉) / g` with mirror,
/// `⌈log2 C^g⌉ / g` without.
pub fn bpw(c: u64, g: u32, mirror: bool) -> Result<Rational> {
    if c < 1 || g == 0 {
        return Err(Error::Config(format!(
            "need c ≥ 1 and g ≥ 1, got c={c} g={g}"
        )));
    }
    let full = full_count(c, g)?;
    let bits = if mirror {
        1 + ceil_log2(full.div_ceil(2))
    } else {
        ceil_log2(full)
    };
    Ok(Rational::new(bits as u128, g as u128))
}

/// Bit-wise bits per weight: one bit plane per bit of `⌈log2 C⌉`.
pub fn bpw_bitwise(c: u64) -> u32 {
    ceil_log2(c as u128)
}

/// Largest group size whose table fits `register_bits / 8` int8 lanes (0 if none).
pub fn max_group_size(c: u64, register_bits: u32, mirror: bool) -> Result<u32> {
    if register_bits < 8 {
        return Err(Error::Config(format!(
            "register must hold at least one byte, got {register_bits} bits"
        )));
    }
    if c < 2 {
        return Err(Error::Config(format!(
            "cardinality must be at least 2, got {c}"
        )));
    }
    let lanes = (register_bits / 8) as u128;
    let mut g = 0;
    while let Ok(e) = entry_count(c, g + 1, mirror) {
        if e > lanes {
            break;
        }
        g += 1;
    }
    Ok(g)
}

/// Sufficient condition for LUT to need fewer operations than MAD: `C^g < M` and `g > 1`.
pub fn elut_beats_mad(c: u64, g: u32, m: u64) -> bool {
    g > 1 && full_count(c, g).is_ok_and(|full| full < m as u128)
}
