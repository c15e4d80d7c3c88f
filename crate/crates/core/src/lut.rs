//! Element-wise lookup-table mpGEMM: the TL1 and TL2 kernel families.
//!
//! Each activation row is cut into groups (pairs for TL1, triples for the
//! TL2 region) and every possible signed group sum is enumerated into a
//! table. The packed weight indices then select table entries, so the inner
//! loop is lookup-and-add with no multiplies.
//!
//! Two table encodings exist:
//!
//! * [`LutMode::Int16Split`] keeps exact int16 sums as a low-byte plane and a
//!   high-byte plane. A lookup reads both planes and reassembles the int16,
//!   which makes TL1_1 / TL2_1 bit-exact.
//! * [`LutMode::Int8Scaled`] requantizes every entry of a row to int8 with one
//!   per-row scale (TL1_0 / TL2_0). Accumulation stays in int32 and the sum is
//!   rescaled and rounded once per output.
//!
//! TL2 tables hold only the 14 non-negative triple codes; negative codes are
//! served by flipping the looked-up value with [`apply_sign`].

use crate::error::{Error, Result};
use crate::pack::{
    bit_at, nibble_at, unpack_tl1_index, unpack_tl2_code, BlockGeometry, BlockLayout, Layout,
    PackedWeights, TL1_ENTRIES, TL2_ENTRIES,
};
use crate::parallel::for_each_band;
use crate::tensor::{combined_scale, GemmResult, QuantizedActivations};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LutMode {
    Int16Split,
    Int8Scaled,
}

/// The four LUT kernel variants.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum LutKernel {
    /// TL1 with int8 tables (lossy).
    Tl1_0,
    /// TL1 with split int16 tables (lossless).
    Tl1_1,
    /// TL2 with int8 tables (lossy).
    Tl2_0,
    /// TL2 with split int16 tables (lossless).
    Tl2_1,
}

impl LutKernel {
    pub fn layout(self) -> Layout {
        match self {
            LutKernel::Tl1_0 | LutKernel::Tl1_1 => Layout::Tl1,
            LutKernel::Tl2_0 | LutKernel::Tl2_1 => Layout::Tl2,
        }
    }

    pub fn lossless(self) -> bool {
        matches!(self, LutKernel::Tl1_1 | LutKernel::Tl2_1)
    }

    pub fn name(self) -> &'static str {
        match self {
            LutKernel::Tl1_0 => "TL1_0",
            LutKernel::Tl1_1 => "TL1_1",
            LutKernel::Tl2_0 => "TL2_0",
            LutKernel::Tl2_1 => "TL2_1",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Entries {
    Split { lo: Vec<u8>, hi: Vec<u8> },
    Scaled(Vec<i8>),
}

impl Entries {
    fn split(values: &[i16]) -> Self {
        let (lo, hi) = values
            .iter()
            .map(|v| {
                let [lo, hi] = v.to_le_bytes();
                (lo, hi)
            })
            .unzip();
        Entries::Split { lo, hi }
    }

    fn get(&self, off: usize) -> i32 {
        match self {
            Entries::Split { lo, hi } => i16::from_le_bytes([lo[off], hi[off]]) as i32,
            Entries::Scaled(v) => v[off] as i32,
        }
    }

    fn len(&self) -> usize {
        match self {
            Entries::Split { lo, .. } => lo.len(),
            Entries::Scaled(v) => v.len(),
        }
    }
}

/// Per-activation-row tables of group sums.
#[derive(Debug, Clone, PartialEq)]
pub struct LookupTable {
    layout: Layout,
    n: usize,
    k: usize,
    three_k: usize,
    act_scale: f32,
    mode: LutMode,
    triples: Entries,
    pairs: Entries,
    lut_scale: Vec<f32>,
}

impl LookupTable {
    pub fn layout(&self) -> Layout {
        self.layout
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn mode(&self) -> LutMode {
        self.mode
    }

    pub fn act_scale(&self) -> f32 {
        self.act_scale
    }

    /// Width of the triple-grouped region (0 for TL1 tables).
    pub fn three_k(&self) -> usize {
        self.three_k
    }

    pub fn triple_groups(&self) -> usize {
        self.three_k / 3
    }

    pub fn pair_groups(&self) -> usize {
        (self.k - self.three_k) / 2
    }

    /// Lookups performed per output element.
    pub fn groups(&self) -> usize {
        self.triple_groups() + self.pair_groups()
    }

    /// Per-row requantization scale (1.0 for every row of an exact table).
    pub fn lut_scale(&self) -> &[f32] {
        &self.lut_scale
    }

    /// Stored value of TL2 triple table `group` of activation `row`.
    pub fn triple_entry(&self, row: usize, group: usize, index: usize) -> i32 {
        assert!(index < TL2_ENTRIES && group < self.triple_groups());
        self.triples
            .get((row * self.triple_groups() + group) * TL2_ENTRIES + index)
    }

    /// Stored value of pair table `group` (counted from `three_k`) of activation `row`.
    pub fn pair_entry(&self, row: usize, group: usize, index: usize) -> i32 {
        assert!(index < TL1_ENTRIES && group < self.pair_groups());
        self.pairs
            .get((row * self.pair_groups() + group) * TL1_ENTRIES + index)
    }

    /// Low/high byte planes of the triple table (`Int16Split` only).
    pub fn triple_planes(&self) -> Option<(&[u8], &[u8])> {
        match &self.triples {
            Entries::Split { lo, hi } => Some((lo, hi)),
            Entries::Scaled(_) => None,
        }
    }

    /// Worst-case `|lossy - exact|` for one output of activation `row`:
    /// half a quantization step per lookup plus the final rounding.
    pub fn lossy_error_bound(&self, row: usize) -> f64 {
        self.groups() as f64 * self.lut_scale[row] as f64 / 2.0 + 0.5
    }
}

/// Two's-complement sign flip driven by one bit: `mask ^ (mask + x)` with
/// `mask = -sign`. Identity for `sign = 0`, negation for `sign = 1`.
/// `x = -128` has no negation and is excluded by callers.
#[inline]
pub fn apply_sign(x: i8, sign: u8) -> i8 {
    let mask = ((sign & 1) as i8).wrapping_neg();
    mask ^ mask.wrapping_add(x)
}

/// [`apply_sign`] on a widened int16 table value.
#[inline]
pub fn apply_sign_i16(x: i16, sign: u8) -> i16 {
    let mask = ((sign & 1) as i16).wrapping_neg();
    mask ^ mask.wrapping_add(x)
}

fn pair_sums(act: &QuantizedActivations, cols: std::ops::Range<usize>) -> Vec<i16> {
    let pairs: Vec<(i16, i16)> = (0..TL1_ENTRIES as u8)
        .map(|i| {
            let (w1, w2) = unpack_tl1_index(i).expect("index in range");
            (w1 as i16, w2 as i16)
        })
        .collect();
    let groups = cols.len() / 2;
    let mut out = Vec::with_capacity(act.n() * groups * TL1_ENTRIES);
    for r in 0..act.n() {
        let row = &act.row(r)[cols.clone()];
        for pair in row.chunks_exact(2) {
            let (a1, a2) = (pair[0] as i16, pair[1] as i16);
            out.extend(pairs.iter().map(|&(w1, w2)| w1 * a1 + w2 * a2));
        }
    }
    out
}

fn triple_sums(act: &QuantizedActivations, three_k: usize) -> Vec<i16> {
    let triples: Vec<[i16; 3]> = (0..TL2_ENTRIES as u8)
        .map(|i| {
            unpack_tl2_code(0, i)
                .expect("index in range")
                .map(|w| w as i16)
        })
        .collect();
    let mut out = Vec::with_capacity(act.n() * three_k / 3 * TL2_ENTRIES);
    for r in 0..act.n() {
        for a in act.row(r)[..three_k].chunks_exact(3) {
            let a = [a[0] as i16, a[1] as i16, a[2] as i16];
            out.extend(
                triples
                    .iter()
                    .map(|w| w[0] * a[0] + w[1] * a[1] + w[2] * a[2]),
            );
        }
    }
    out
}

/// Exact TL1 tables: 9 pair sums per activation pair.
pub fn precompute_tl1(act: &QuantizedActivations) -> Result<LookupTable> {
    if !act.k().is_multiple_of(2) {
        return Err(Error::shape(format!(
            "TL1 tables need an even K, got {}",
            act.k()
        )));
    }
    let n = act.n();
    Ok(LookupTable {
        layout: Layout::Tl1,
        n,
        k: act.k(),
        three_k: 0,
        act_scale: act.act_scale(),
        mode: LutMode::Int16Split,
        triples: Entries::split(&[]),
        pairs: Entries::split(&pair_sums(act, 0..act.k())),
        lut_scale: vec![1.0; n],
    })
}

/// Exact TL2 tables: 14 mirror-consolidated triple sums over `three_k`,
/// plus TL1 pair tables for the `two_k` remainder.
pub fn precompute_tl2(act: &QuantizedActivations, geometry: &BlockGeometry) -> Result<LookupTable> {
    let (three_k, _) = geometry
        .split(act.k())
        .map_err(|e| Error::shape(format!("TL2 tables for K = {}: {e}", act.k())))?;
    let n = act.n();
    Ok(LookupTable {
        layout: Layout::Tl2,
        n,
        k: act.k(),
        three_k,
        act_scale: act.act_scale(),
        mode: LutMode::Int16Split,
        triples: Entries::split(&triple_sums(act, three_k)),
        pairs: Entries::split(&pair_sums(act, three_k..act.k())),
        lut_scale: vec![1.0; n],
    })
}

/// Requantizes an exact table to int8 with one scale per activation row.
pub fn quantize_lut_int8(lut: &LookupTable) -> Result<LookupTable> {
    if lut.mode != LutMode::Int16Split {
        return Err(Error::ModeMismatch("table is already int8".into()));
    }
    let tg = lut.triple_groups() * TL2_ENTRIES;
    let pg = lut.pair_groups() * TL1_ENTRIES;
    let mut triples = Vec::with_capacity(lut.triples.len());
    let mut pairs = Vec::with_capacity(lut.pairs.len());
    let mut lut_scale = Vec::with_capacity(lut.n);
    for r in 0..lut.n {
        let t_range = r * tg..(r + 1) * tg;
        let p_range = r * pg..(r + 1) * pg;
        let max_abs = t_range
            .clone()
            .map(|o| lut.triples.get(o))
            .chain(p_range.clone().map(|o| lut.pairs.get(o)))
            .map(i32::abs)
            .max()
            .unwrap_or(0);
        let scale = if max_abs == 0 {
            1.0f32
        } else {
            max_abs as f32 / 127.0
        };
        let q = |v: i32| (v as f64 / scale as f64).round().clamp(-127.0, 127.0) as i8;
        triples.extend(t_range.map(|o| q(lut.triples.get(o))));
        pairs.extend(p_range.map(|o| q(lut.pairs.get(o))));
        lut_scale.push(scale);
    }
    Ok(LookupTable {
        mode: LutMode::Int8Scaled,
        triples: Entries::Scaled(triples),
        pairs: Entries::Scaled(pairs),
        lut_scale,
        ..lut.clone()
    })
}

trait Plane: Sync {
    fn fetch(&self, off: usize) -> i32;
    fn fetch_signed(&self, off: usize, sign: u8) -> i32;
}

struct SplitPlane<'a> {
    lo: &'a [u8],
    hi: &'a [u8],
}

impl Plane for SplitPlane<'_> {
    #[inline(always)]
    fn fetch(&self, off: usize) -> i32 {
        i16::from_le_bytes([self.lo[off], self.hi[off]]) as i32
    }

    #[inline(always)]
    fn fetch_signed(&self, off: usize, sign: u8) -> i32 {
        apply_sign_i16(i16::from_le_bytes([self.lo[off], self.hi[off]]), sign) as i32
    }
}

struct ScaledPlane<'a>(&'a [i8]);

impl Plane for ScaledPlane<'_> {
    #[inline(always)]
    fn fetch(&self, off: usize) -> i32 {
        self.0[off] as i32
    }

    #[inline(always)]
    fn fetch_signed(&self, off: usize, sign: u8) -> i32 {
        apply_sign(self.0[off], sign) as i32
    }
}

/// Adds the pair-table lookups of one row band into `sums` (`rows × n`).
fn accumulate_pairs<P: Plane>(
    bytes: &[u8],
    layout: &BlockLayout,
    band: usize,
    plane: &P,
    n: usize,
    sums: &mut [i32],
) {
    let groups = layout.cols / 2;
    for tile in layout.tiles_in_band(band) {
        let width = tile.cols / 2;
        let group0 = tile.col0 / 2;
        for rr in 0..tile.rows {
            let pos = tile.offset / 2 + rr * width;
            for (nn, sum) in sums[rr * n..(rr + 1) * n].iter_mut().enumerate() {
                let base = (nn * groups + group0) * TL1_ENTRIES;
                let mut acc = 0i32;
                for p in 0..width {
                    let idx = nibble_at(bytes, pos + p) as usize;
                    acc += plane.fetch(base + p * TL1_ENTRIES + idx);
                }
                *sum += acc;
            }
        }
    }
}

/// Adds the sign-applied triple-table lookups of one row band into `sums`.
fn accumulate_triples<P: Plane>(
    index: &[u8],
    signs: &[u8],
    layout: &BlockLayout,
    band: usize,
    plane: &P,
    n: usize,
    sums: &mut [i32],
) {
    let groups = layout.cols / 3;
    for tile in layout.tiles_in_band(band) {
        let width = tile.cols / 3;
        let group0 = tile.col0 / 3;
        for rr in 0..tile.rows {
            let pos = tile.offset / 3 + rr * width;
            for (nn, sum) in sums[rr * n..(rr + 1) * n].iter_mut().enumerate() {
                let base = (nn * groups + group0) * TL2_ENTRIES;
                let mut acc = 0i32;
                for p in 0..width {
                    let idx = nibble_at(index, pos + p) as usize;
                    let sign = bit_at(signs, pos + p);
                    acc += plane.fetch_signed(base + p * TL2_ENTRIES + idx, sign);
                }
                *sum += acc;
            }
        }
    }
}

struct Regions<'a> {
    packed: &'a PackedWeights,
    tl2: BlockLayout,
    pair_bytes: &'a [u8],
    pair_layout: BlockLayout,
    n: usize,
}

impl Regions<'_> {
    fn accumulate<T: Plane, P: Plane>(
        &self,
        band: usize,
        triples: &T,
        pairs: &P,
        sums: &mut [i32],
    ) {
        if self.tl2.cols > 0 {
            let (index, signs) = (self.packed.index_bytes(), self.packed.sign_bits());
            accumulate_triples(index, signs, &self.tl2, band, triples, self.n, sums);
        }
        if self.pair_layout.cols > 0 {
            accumulate_pairs(
                self.pair_bytes,
                &self.pair_layout,
                band,
                pairs,
                self.n,
                sums,
            );
        }
    }
}

fn validate(packed: &PackedWeights, lut: &LookupTable, lossless: bool) -> Result<()> {
    if !matches!(packed.layout(), Layout::Tl1 | Layout::Tl2) {
        return Err(Error::ModeMismatch(format!(
            "{} weights cannot use a lookup table",
            packed.layout()
        )));
    }
    if packed.layout() != lut.layout {
        return Err(Error::ModeMismatch(format!(
            "{} weights with a {} table",
            packed.layout(),
            lut.layout
        )));
    }
    let want = if lossless {
        LutMode::Int16Split
    } else {
        LutMode::Int8Scaled
    };
    if lut.mode != want {
        return Err(Error::ModeMismatch(format!(
            "lossless = {lossless} needs a {want:?} table, got {:?}",
            lut.mode
        )));
    }
    if packed.k() != lut.k || packed.three_k() != lut.three_k {
        return Err(Error::shape(format!(
            "weights K = {} (three_k {}) vs table K = {} (three_k {})",
            packed.k(),
            packed.three_k(),
            lut.k,
            lut.three_k
        )));
    }
    Ok(())
}

/// Single-threaded [`gemm_lut_threaded`].
pub fn gemm_lut(packed: &PackedWeights, lut: &LookupTable, lossless: bool) -> Result<GemmResult> {
    gemm_lut_threaded(packed, lut, lossless, 1)
}

/// TL1/TL2 lookup-accumulate over row bands of `bm` rows, split across `threads`.
pub fn gemm_lut_threaded(
    packed: &PackedWeights,
    lut: &LookupTable,
    lossless: bool,
    threads: usize,
) -> Result<GemmResult> {
    validate(packed, lut, lossless)?;
    let (m, n, k) = (packed.m(), lut.n, packed.k());
    let geometry = packed.geometry();
    let three_k = packed.three_k();
    let tl2 = geometry.tl2_layout(m, three_k);
    let (pair_bytes, pair_layout) = match packed.layout() {
        Layout::Tl1 => (packed.index_bytes(), geometry.tl1_layout(m, k)),
        _ => (
            packed.remainder_bytes(),
            geometry.tl1_layout(m, k - three_k),
        ),
    };
    let mut accum = vec![0i32; m * n];
    let regions = Regions {
        packed,
        tl2,
        pair_bytes,
        pair_layout,
        n,
    };

    match (&lut.triples, &lut.pairs) {
        (Entries::Split { lo: tlo, hi: thi }, Entries::Split { lo: plo, hi: phi }) => {
            let tp = SplitPlane { lo: tlo, hi: thi };
            let pp = SplitPlane { lo: plo, hi: phi };
            for_each_band(&mut accum, geometry.bm() * n, threads, |band, sums| {
                regions.accumulate(band, &tp, &pp, sums);
            });
        }
        (Entries::Scaled(t), Entries::Scaled(p)) => {
            let (tp, pp) = (ScaledPlane(t), ScaledPlane(p));
            let scales = &lut.lut_scale;
            for_each_band(&mut accum, geometry.bm() * n, threads, |band, sums| {
                regions.accumulate(band, &tp, &pp, sums);
                for (i, v) in sums.iter_mut().enumerate() {
                    *v = (*v as f64 * scales[i % n] as f64).round() as i32;
                }
            });
        }
        _ => unreachable!("table planes always share one mode"),
    }

    Ok(GemmResult::from_parts(
        m,
        n,
        accum,
        combined_scale(packed.weight_scale(), lut.act_scale),
    ))
}

/// Builds the table a kernel needs from activations.
pub fn build_table(
    kernel: LutKernel,
    act: &QuantizedActivations,
    geometry: &BlockGeometry,
) -> Result<LookupTable> {
    let exact = match kernel.layout() {
        Layout::Tl1 => precompute_tl1(act)?,
        _ => precompute_tl2(act, geometry)?,
    };
    if kernel.lossless() {
        Ok(exact)
    } else {
        quantize_lut_int8(&exact)
    }
}

/// Table precompute plus lookup-accumulate for one kernel variant.
pub fn run_lut_kernel(
    kernel: LutKernel,
    packed: &PackedWeights,
    act: &QuantizedActivations,
    threads: usize,
) -> Result<GemmResult> {
    if packed.layout() != kernel.layout() {
        return Err(Error::ModeMismatch(format!(
            "{} needs {} weights, got {}",
            kernel.name(),
            kernel.layout(),
            packed.layout()
        )));
    }
    let lut = build_table(kernel, act, packed.geometry())?;
    gemm_lut_threaded(packed, &lut, kernel.lossless(), threads)
}
