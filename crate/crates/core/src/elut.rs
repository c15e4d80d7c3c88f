//! Generalized element-wise LUT GEMM for any small weight value set, plus a
//! bit-plane LUT reference for comparison.
//!
//! With `C` distinct weight values and group size `g`, each activation group
//! gets a table of all `C^g` signed sums. Weights are encoded by their
//! positional code `u = Σ pos(w_i) * C^(g-1-i)` where `pos` is the rank in
//! the sorted value set. For sign-symmetric sets, `pos(-w) = C-1-pos(w)` so
//! the code of `-w` is `C^g-1-u`; mirror mode stores only the upper half
//! (`index = u - ⌊C^g/2⌋`) and a sign bit selects the negated lower half.
//! For ternary `g = 3` this is exactly the TL2 code `|9*w1 + 3*w2 + w3|`.

use crate::error::{Error, Result};
use crate::lut::apply_sign_i16;
use crate::parallel::for_each_band;
use crate::tensor::{GemmResult, IntMatrix, QuantizedActivations};

/// Entries that fit one 128-bit shuffle of int8 lanes.
pub const DEFAULT_REGISTER_BUDGET: usize = 16;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ElutConfig {
    value_set: Vec<i8>,
    g: usize,
    mirror: bool,
    register_budget: usize,
}

impl ElutConfig {
    pub fn new(value_set: &[i8], g: usize, mirror: bool) -> Result<Self> {
        Self::with_register_budget(value_set, g, mirror, DEFAULT_REGISTER_BUDGET)
    }

    pub fn with_register_budget(
        value_set: &[i8],
        g: usize,
        mirror: bool,
        register_budget: usize,
    ) -> Result<Self> {
        let mut set = value_set.to_vec();
        set.sort_unstable();
        set.dedup();
        if set.len() != value_set.len() || set.is_empty() {
            return Err(Error::Config(format!(
                "value set {value_set:?} must be non-empty and distinct"
            )));
        }
        if set.contains(&i8::MIN) {
            return Err(Error::Config("value -128 has no negation".into()));
        }
        if g == 0 {
            return Err(Error::Config("group size must be at least 1".into()));
        }
        if mirror && set.iter().any(|v| !set.contains(&-v)) {
            return Err(Error::Config(format!(
                "mirror needs a sign-symmetric value set, got {set:?}"
            )));
        }
        let max_abs = set.iter().map(|v| (*v as i64).abs()).max().unwrap_or(0);
        if max_abs * g as i64 * 127 > i16::MAX as i64 {
            return Err(Error::Config(format!(
                "group sums for g = {g} and |w| ≤ {max_abs} overflow int16"
            )));
        }
        let cfg = Self {
            value_set: set,
            g,
            mirror,
            register_budget,
        };
        let entries = cfg.entry_count();
        if entries > register_budget {
            return Err(Error::Config(format!(
                "{entries} table entries exceed the register budget of {register_budget}"
            )));
        }
        Ok(cfg)
    }

    pub fn cardinality(&self) -> usize {
        self.value_set.len()
    }

    pub fn value_set(&self) -> &[i8] {
        &self.value_set
    }

    pub fn g(&self) -> usize {
        self.g
    }

    pub fn mirror(&self) -> bool {
        self.mirror
    }

    pub fn register_budget(&self) -> usize {
        self.register_budget
    }

    fn full_count(&self) -> usize {
        self.cardinality().pow(self.g as u32)
    }

    /// Table entries per group: `C^g`, or `⌈C^g / 2⌉` with mirror.
    pub fn entry_count(&self) -> usize {
        if self.mirror {
            self.full_count().div_ceil(2)
        } else {
            self.full_count()
        }
    }

    fn half(&self) -> usize {
        self.full_count() / 2
    }

    /// `(sign, index)` of one weight group.
    pub fn encode(&self, group: &[i8]) -> Result<(u8, u16)> {
        debug_assert_eq!(group.len(), self.g);
        let c = self.cardinality();
        let mut u = 0usize;
        for &w in group {
            let pos = self.value_set.binary_search(&w).map_err(|_| {
                Error::shape(format!(
                    "weight {w} is not in the value set {:?}",
                    self.value_set
                ))
            })?;
            u = u * c + pos;
        }
        if !self.mirror {
            return Ok((0, u as u16));
        }
        let half = self.half();
        Ok(if u >= half {
            (0, (u - half) as u16)
        } else {
            (1, (self.full_count() - 1 - u - half) as u16)
        })
    }

    /// Weight values of the positional code `u`, most significant first.
    fn digits(&self, mut u: usize) -> Vec<i8> {
        let c = self.cardinality();
        let mut out = vec![0i8; self.g];
        for slot in out.iter_mut().rev() {
            *slot = self.value_set[u % c];
            u /= c;
        }
        out
    }

    /// Weight group stored at table `index` (sign 0).
    pub fn entry_weights(&self, index: usize) -> Vec<i8> {
        if self.mirror {
            self.digits(index + self.half())
        } else {
            self.digits(index)
        }
    }
}

/// Exact int16 tables for every (activation row, group), as byte planes.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ElutTable {
    n: usize,
    groups: usize,
    entries_per_group: usize,
    lo: Vec<u8>,
    hi: Vec<u8>,
}

impl ElutTable {
    pub fn entries_per_group(&self) -> usize {
        self.entries_per_group
    }

    pub fn groups(&self) -> usize {
        self.groups
    }

    pub fn n(&self) -> usize {
        self.n
    }

    /// Total int16 entries held (`n × groups × entries_per_group`).
    pub fn len(&self) -> usize {
        self.lo.len()
    }

    pub fn is_empty(&self) -> bool {
        self.lo.is_empty()
    }

    #[inline]
    pub fn entry(&self, row: usize, group: usize, index: usize) -> i16 {
        let off = (row * self.groups + group) * self.entries_per_group + index;
        i16::from_le_bytes([self.lo[off], self.hi[off]])
    }
}

pub fn build_elut_table(act: &QuantizedActivations, cfg: &ElutConfig) -> Result<ElutTable> {
    if !act.k().is_multiple_of(cfg.g) {
        return Err(Error::shape(format!(
            "K = {} is not a multiple of g = {}",
            act.k(),
            cfg.g
        )));
    }
    let groups = act.k() / cfg.g;
    let patterns: Vec<Vec<i8>> = (0..cfg.entry_count())
        .map(|i| cfg.entry_weights(i))
        .collect();
    let total = act.n() * groups * patterns.len();
    let (mut lo, mut hi) = (Vec::with_capacity(total), Vec::with_capacity(total));
    for r in 0..act.n() {
        for a in act.row(r).chunks_exact(cfg.g) {
            for w in &patterns {
                let sum: i16 = w.iter().zip(a).map(|(&w, &x)| w as i16 * x as i16).sum();
                let [l, h] = sum.to_le_bytes();
                lo.push(l);
                hi.push(h);
            }
        }
    }
    Ok(ElutTable {
        n: act.n(),
        groups,
        entries_per_group: patterns.len(),
        lo,
        hi,
    })
}

pub fn gemm_elut(
    w: &IntMatrix,
    act: &QuantizedActivations,
    cfg: &ElutConfig,
) -> Result<GemmResult> {
    gemm_elut_threaded(w, act, cfg, 1)
}

pub fn gemm_elut_threaded(
    w: &IntMatrix,
    act: &QuantizedActivations,
    cfg: &ElutConfig,
    threads: usize,
) -> Result<GemmResult> {
    if w.cols() != act.k() {
        return Err(Error::shape(format!(
            "weights K = {} vs activations K = {}",
            w.cols(),
            act.k()
        )));
    }
    let table = build_elut_table(act, cfg)?;
    let codes: Vec<(u8, u16)> = w
        .data()
        .chunks_exact(cfg.g)
        .map(|grp| cfg.encode(grp))
        .collect::<Result<_>>()?;
    let (m, n, groups) = (w.rows(), act.n(), table.groups);
    let mut accum = vec![0i32; m * n];
    for_each_band(&mut accum, n, threads, |row, out| {
        let row_codes = &codes[row * groups..(row + 1) * groups];
        for (nn, slot) in out.iter_mut().enumerate() {
            *slot = row_codes
                .iter()
                .enumerate()
                .map(|(j, &(sign, idx))| {
                    apply_sign_i16(table.entry(nn, j, idx as usize), sign) as i32
                })
                .sum();
        }
    });
    GemmResult::new(m, n, accum, 1.0 / act.act_scale())
}

/// Group length used by the bit-plane reference.
pub const BITWISE_GROUP: usize = 4;

/// Bit-plane LUT GEMM: weights are shifted into `bits`-bit unsigned codes
/// (offset `2^(bits-1)` when any weight is negative, 0 otherwise), each bit
/// plane selects subset sums from a per-group table of `2^4` entries, and the
/// planes are recombined by shift-and-add minus the offset times the row sum.
pub fn gemm_bitwise_ref(
    w: &IntMatrix,
    act: &QuantizedActivations,
    bits: u32,
) -> Result<GemmResult> {
    if w.cols() != act.k() {
        return Err(Error::shape(format!(
            "weights K = {} vs activations K = {}",
            w.cols(),
            act.k()
        )));
    }
    if !(1..=7).contains(&bits) {
        return Err(Error::Config(format!(
            "bit width must be in 1..=7, got {bits}"
        )));
    }
    let offset: i32 = if w.data().iter().any(|&v| v < 0) {
        1 << (bits - 1)
    } else {
        0
    };
    let limit = 1i32 << bits;
    let codes: Vec<u8> = w
        .data()
        .iter()
        .map(|&v| {
            let c = v as i32 + offset;
            if (0..limit).contains(&c) {
                Ok(c as u8)
            } else {
                Err(Error::shape(format!(
                    "weight {v} does not fit {bits} offset-binary bits"
                )))
            }
        })
        .collect::<Result<_>>()?;

    let k = act.k();
    let groups: Vec<(usize, usize)> = (0..k)
        .step_by(BITWISE_GROUP)
        .map(|s| (s, (s + BITWISE_GROUP).min(k)))
        .collect();
    // blut[n][group][mask] = Σ_{i in mask} a[n][start + i]
    let mut blut = vec![0i32; (act.n() * groups.len()) << BITWISE_GROUP];
    for r in 0..act.n() {
        let a = act.row(r);
        for (gi, &(s, e)) in groups.iter().enumerate() {
            let base = (r * groups.len() + gi) << BITWISE_GROUP;
            for mask in 1usize..(1 << (e - s)) {
                let low = mask.trailing_zeros() as usize;
                blut[base + mask] = blut[base + (mask & (mask - 1))] + a[s + low] as i32;
            }
        }
    }

    let (m, n) = (w.rows(), act.n());
    let mut accum = vec![0i32; m * n];
    for i in 0..m {
        let row = &codes[i * k..(i + 1) * k];
        for r in 0..n {
            let mut total = 0i32;
            let mut act_sum = 0i32;
            for (gi, &(s, e)) in groups.iter().enumerate() {
                let base = (r * groups.len() + gi) << BITWISE_GROUP;
                act_sum += blut[base + (1 << (e - s)) - 1];
                for plane in 0..bits {
                    let mask = row[s..e].iter().enumerate().fold(0usize, |acc, (t, &c)| {
                        acc | ((((c >> plane) & 1) as usize) << t)
                    });
                    total += blut[base + mask] << plane;
                }
            }
            accum[i * n + r] = total - offset * act_sum;
        }
    }
    GemmResult::new(m, n, accum, 1.0 / act.act_scale())
}
