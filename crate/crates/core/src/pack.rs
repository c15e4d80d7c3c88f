//! Weight packing for the TL1, TL2 and I2_S kernels.
//!
//! TL1 turns each pair of ternary weights into a 4-bit index in `0..=8`.
//! TL2 turns each triple into a 1-bit sign plus a 4-bit index in `0..=13`
//! (`v = 9*w1 + 3*w2 + w3`, `sign = v < 0`, `index = |v|`). Only the leading
//! `three_k` columns are TL2 packed; the remaining `two_k` columns use TL1.
//! I2_S stores `w + 1` as a 2-bit code, four weights per byte.
//!
//! # Byte layout
//!
//! LUT layouts walk the matrix in compute blocks of `bm × by` weights: blocks
//! advance along K inside a band of `bm` rows, then move to the next band.
//! Blocks at the right and bottom edges are clipped, never padded. Inside a
//! block weights are row-major. Indices form one nibble stream (low nibble
//! first). For TL2 the payload is
//!
//! ```text
//! [ TL2 index nibbles ][ TL2 sign bits, LSB first ][ TL1 nibbles for two_k ]
//! ```
//!
//! I2_S is plain row-major, code `j` of a byte in bits `2j..2j+2`.

use std::ops::Range;

use crate::error::{Error, Result};
use crate::tensor::TernaryMatrix;

pub const TL1_BLOCK_WEIGHTS: usize = 256;
pub const TL2_BLOCK_WEIGHTS: usize = 192;
pub const I2S_K_ALIGN: usize = 128;
pub const DEFAULT_BM: usize = 32;
pub const DEFAULT_BK3: usize = 96;

/// Number of distinct TL1 indices (3^2).
pub const TL1_ENTRIES: usize = 9;
/// Number of distinct TL2 indices after mirror consolidation (⌈3^3 / 2⌉).
pub const TL2_ENTRIES: usize = 14;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Layout {
    Tl1,
    Tl2,
    I2s,
}

impl Layout {
    pub fn name(self) -> &'static str {
        match self {
            Layout::Tl1 => "tl1",
            Layout::Tl2 => "tl2",
            Layout::I2s => "i2s",
        }
    }
}

impl std::str::FromStr for Layout {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "tl1" => Ok(Layout::Tl1),
            "tl2" => Ok(Layout::Tl2),
            "i2s" | "i2_s" => Ok(Layout::I2s),
            other => Err(Error::Config(format!("unknown layout {other:?}"))),
        }
    }
}

impl std::fmt::Display for Layout {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

/// Compute-block shape: `bm` rows by `256/bm` (TL1) or `192/bm` (TL2) columns.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct BlockGeometry {
    bm: usize,
    bk3: usize,
}

impl Default for BlockGeometry {
    fn default() -> Self {
        Self {
            bm: DEFAULT_BM,
            bk3: DEFAULT_BK3,
        }
    }
}

impl BlockGeometry {
    pub fn new(bm: usize, bk3: usize) -> Result<Self> {
        if bm != 16 && bm != 32 {
            return Err(Error::Config(format!("bm must be 16 or 32, got {bm}")));
        }
        if bk3 == 0 || !bk3.is_multiple_of(3) {
            return Err(Error::Config(format!(
                "bk3 must be a positive multiple of 3, got {bk3}"
            )));
        }
        Ok(Self { bm, bk3 })
    }

    pub fn with_bm(bm: usize) -> Result<Self> {
        Self::new(bm, DEFAULT_BK3)
    }

    pub fn bm(&self) -> usize {
        self.bm
    }

    pub fn bk3(&self) -> usize {
        self.bk3
    }

    pub fn by_tl1(&self) -> usize {
        TL1_BLOCK_WEIGHTS / self.bm
    }

    pub fn by_tl2(&self) -> usize {
        TL2_BLOCK_WEIGHTS / self.bm
    }

    /// `(three_k, two_k)` for a reduction length `k`.
    pub fn split(&self, k: usize) -> Result<(usize, usize)> {
        split_block_fitting(k, self.bk3)
    }

    pub(crate) fn tl1_layout(&self, rows: usize, cols: usize) -> BlockLayout {
        BlockLayout {
            rows,
            cols,
            bm: self.bm,
            by: self.by_tl1(),
        }
    }

    pub(crate) fn tl2_layout(&self, rows: usize, cols: usize) -> BlockLayout {
        BlockLayout {
            rows,
            cols,
            bm: self.bm,
            by: self.by_tl2(),
        }
    }
}

/// `three_k = ⌊k / bk3⌋ * bk3`, `two_k = k - three_k`; `two_k` must be even.
pub fn split_block_fitting(k: usize, bk3: usize) -> Result<(usize, usize)> {
    if bk3 == 0 || !bk3.is_multiple_of(3) {
        return Err(Error::Config(format!(
            "bk3 must be a positive multiple of 3, got {bk3}"
        )));
    }
    let three_k = (k / bk3) * bk3;
    let two_k = k - three_k;
    if !two_k.is_multiple_of(2) {
        return Err(Error::OddRemainder { two_k });
    }
    Ok((three_k, two_k))
}

/// One clipped compute block and its offset (in weights) into the region stream.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Tile {
    pub row0: usize,
    pub rows: usize,
    pub col0: usize,
    pub cols: usize,
    pub offset: usize,
}

/// Block traversal of a `rows × cols` region.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BlockLayout {
    pub rows: usize,
    pub cols: usize,
    pub bm: usize,
    pub by: usize,
}

impl BlockLayout {
    pub fn bands(&self) -> usize {
        self.rows.div_ceil(self.bm)
    }

    pub fn band_rows(&self, band: usize) -> Range<usize> {
        let start = band * self.bm;
        start..(start + self.bm).min(self.rows)
    }

    pub fn tiles_in_band(&self, band: usize) -> impl Iterator<Item = Tile> + '_ {
        let rows = self.band_rows(band);
        let height = rows.len();
        let band_offset = rows.start * self.cols;
        (0..self.cols)
            .step_by(self.by.max(1))
            .map(move |col0| Tile {
                row0: rows.start,
                rows: height,
                col0,
                cols: self.by.min(self.cols - col0),
                offset: band_offset + height * col0,
            })
    }

    pub fn tiles(&self) -> impl Iterator<Item = Tile> + '_ {
        (0..self.bands()).flat_map(move |b| self.tiles_in_band(b))
    }

    /// Stream position of weight `(r, c)`.
    pub fn position(&self, r: usize, c: usize) -> usize {
        let row0 = (r / self.bm) * self.bm;
        let height = self.bm.min(self.rows - row0);
        let col0 = (c / self.by) * self.by;
        let width = self.by.min(self.cols - col0);
        row0 * self.cols + height * col0 + (r - row0) * width + (c - col0)
    }
}

#[inline]
fn check_ternary(w: i8) -> Result<()> {
    if (-1..=1).contains(&w) {
        Ok(())
    } else {
        Err(Error::InvalidTernary(w as i32))
    }
}

/// TL1 index `(w1 + 1) * 3 + (w2 + 1)`.
pub fn pack_tl1_pair(w1: i8, w2: i8) -> Result<u8> {
    check_ternary(w1)?;
    check_ternary(w2)?;
    Ok(((w1 + 1) * 3 + (w2 + 1)) as u8)
}

pub fn unpack_tl1_index(index: u8) -> Result<(i8, i8)> {
    if index as usize >= TL1_ENTRIES {
        return Err(Error::corrupt(format!(
            "TL1 index {index} out of range 0..=8"
        )));
    }
    let i = index as i8;
    Ok((i / 3 - 1, i % 3 - 1))
}

/// TL2 `(sign, index)` for a weight triple.
pub fn pack_tl2_triple(w1: i8, w2: i8, w3: i8) -> Result<(u8, u8)> {
    check_ternary(w1)?;
    check_ternary(w2)?;
    check_ternary(w3)?;
    let v = 9 * w1 + 3 * w2 + w3;
    Ok(((v < 0) as u8, v.unsigned_abs()))
}

pub fn unpack_tl2_code(sign: u8, index: u8) -> Result<[i8; 3]> {
    if index as usize >= TL2_ENTRIES {
        return Err(Error::corrupt(format!(
            "TL2 index {index} out of range 0..=13"
        )));
    }
    let mut v = if sign & 1 == 1 {
        -(index as i8)
    } else {
        index as i8
    };
    Ok(balanced_ternary_digits(&mut v))
}

/// Most-significant-first balanced ternary digits of `v` in `[-13, 13]`.
fn balanced_ternary_digits(v: &mut i8) -> [i8; 3] {
    let mut out = [0i8; 3];
    for slot in out.iter_mut().rev() {
        let d = match v.rem_euclid(3) {
            2 => -1,
            r => r,
        };
        *slot = d;
        *v = (*v - d) / 3;
    }
    out
}

#[inline]
pub fn i2s_code(w: i8) -> Result<u8> {
    check_ternary(w)?;
    Ok((w + 1) as u8)
}

#[inline]
pub fn i2s_decode(code: u8) -> Result<i8> {
    match code {
        0..=2 => Ok(code as i8 - 1),
        _ => Err(Error::corrupt("I2_S code 0b11 is not a ternary value")),
    }
}

/// Byte lengths of the payload regions.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RegionSizes {
    pub index: usize,
    pub sign: usize,
    pub remainder: usize,
}

impl RegionSizes {
    pub fn total(&self) -> usize {
        self.index + self.sign + self.remainder
    }
}

fn tl1_bytes(m: usize, cols: usize) -> usize {
    (m * cols / 2).div_ceil(2)
}

pub fn region_sizes(
    layout: Layout,
    m: usize,
    k: usize,
    geometry: &BlockGeometry,
) -> Result<RegionSizes> {
    check_shape(layout, m, k, geometry)?;
    Ok(match layout {
        Layout::Tl1 => RegionSizes {
            index: tl1_bytes(m, k),
            sign: 0,
            remainder: 0,
        },
        Layout::I2s => RegionSizes {
            index: m * k / 4,
            sign: 0,
            remainder: 0,
        },
        Layout::Tl2 => {
            let (three_k, two_k) = geometry.split(k).map_err(to_shape)?;
            let triples = m * three_k / 3;
            RegionSizes {
                index: triples.div_ceil(2),
                sign: triples.div_ceil(8),
                remainder: tl1_bytes(m, two_k),
            }
        }
    })
}

/// Total payload bytes for `layout`.
pub fn packed_size(layout: Layout, m: usize, k: usize, geometry: &BlockGeometry) -> Result<usize> {
    region_sizes(layout, m, k, geometry).map(|s| s.total())
}

fn to_shape(e: Error) -> Error {
    match e {
        Error::OddRemainder { two_k } => Error::shape(format!(
            "TL2 remainder two_k = {two_k} is odd and cannot be TL1 packed"
        )),
        other => other,
    }
}

fn check_shape(layout: Layout, m: usize, k: usize, geometry: &BlockGeometry) -> Result<()> {
    if m == 0 || k == 0 {
        return Err(Error::shape(format!("empty weight matrix {m}x{k}")));
    }
    match layout {
        Layout::Tl1 if !k.is_multiple_of(2) => Err(Error::shape(format!("TL1 needs an even K, got {k}"))),
        Layout::I2s if !k.is_multiple_of(I2S_K_ALIGN) => Err(Error::shape(format!(
            "I2_S needs K to be a multiple of {I2S_K_ALIGN}, got {k}"
        ))),
        Layout::Tl2 => geometry.split(k).map(|_| ()).map_err(to_shape),
        _ => Ok(()),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PackedWeights {
    layout: Layout,
    m: usize,
    k: usize,
    geometry: BlockGeometry,
    index_bytes: Vec<u8>,
    sign_bits: Vec<u8>,
    remainder_bytes: Vec<u8>,
    weight_scale: f32,
}

impl PackedWeights {
    /// Rebuilds packed weights from a serialized payload (see module docs).
    pub fn from_payload(
        layout: Layout,
        m: usize,
        k: usize,
        geometry: BlockGeometry,
        weight_scale: f32,
        payload: &[u8],
    ) -> Result<Self> {
        let sizes = region_sizes(layout, m, k, &geometry)?;
        if payload.len() != sizes.total() {
            return Err(Error::corrupt(format!(
                "{layout} payload for {m}x{k} must be {} bytes, got {}",
                sizes.total(),
                payload.len()
            )));
        }
        if !(weight_scale.is_finite() && weight_scale > 0.0) {
            return Err(Error::corrupt(format!(
                "weight scale {weight_scale} is not positive"
            )));
        }
        let (index, rest) = payload.split_at(sizes.index);
        let (sign, remainder) = rest.split_at(sizes.sign);
        Ok(Self {
            layout,
            m,
            k,
            geometry,
            index_bytes: index.to_vec(),
            sign_bits: sign.to_vec(),
            remainder_bytes: remainder.to_vec(),
            weight_scale,
        })
    }

    pub fn layout(&self) -> Layout {
        self.layout
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn geometry(&self) -> &BlockGeometry {
        &self.geometry
    }

    pub fn weight_scale(&self) -> f32 {
        self.weight_scale
    }

    pub fn index_bytes(&self) -> &[u8] {
        &self.index_bytes
    }

    pub fn sign_bits(&self) -> &[u8] {
        &self.sign_bits
    }

    /// TL1-packed `two_k` columns of a TL2 tensor (empty otherwise).
    pub fn remainder_bytes(&self) -> &[u8] {
        &self.remainder_bytes
    }

    /// Length of the TL2-packed leading region of K (0 unless TL2).
    pub fn three_k(&self) -> usize {
        match self.layout {
            Layout::Tl2 => (self.k / self.geometry.bk3()) * self.geometry.bk3(),
            _ => 0,
        }
    }

    pub fn payload_len(&self) -> usize {
        self.index_bytes.len() + self.sign_bits.len() + self.remainder_bytes.len()
    }

    pub fn payload(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(self.payload_len());
        out.extend_from_slice(&self.index_bytes);
        out.extend_from_slice(&self.sign_bits);
        out.extend_from_slice(&self.remainder_bytes);
        out
    }

    /// Storage cost in bits per weight over the whole tensor.
    pub fn bits_per_weight(&self) -> f64 {
        self.payload_len() as f64 * 8.0 / (self.m * self.k) as f64
    }
}

#[inline]
pub(crate) fn nibble_at(bytes: &[u8], i: usize) -> u8 {
    (bytes[i >> 1] >> ((i & 1) << 2)) & 0x0f
}

#[inline]
pub(crate) fn bit_at(bytes: &[u8], i: usize) -> u8 {
    (bytes[i >> 3] >> (i & 7)) & 1
}

#[inline]
fn put_nibble(bytes: &mut [u8], i: usize, v: u8) {
    bytes[i >> 1] |= (v & 0x0f) << ((i & 1) << 2);
}

#[inline]
fn put_bit(bytes: &mut [u8], i: usize, v: u8) {
    bytes[i >> 3] |= (v & 1) << (i & 7);
}

/// Packs columns `cols` of `t` as TL1 nibbles in block order.
fn pack_tl1_region(
    t: &TernaryMatrix,
    cols: Range<usize>,
    geometry: &BlockGeometry,
) -> Result<Vec<u8>> {
    let layout = geometry.tl1_layout(t.m(), cols.len());
    let mut out = vec![0u8; tl1_bytes(t.m(), cols.len())];
    for tile in layout.tiles() {
        let mut pos = tile.offset / 2;
        for r in tile.row0..tile.row0 + tile.rows {
            for c in (tile.col0..tile.col0 + tile.cols).step_by(2) {
                let c = cols.start + c;
                put_nibble(&mut out, pos, pack_tl1_pair(t.get(r, c), t.get(r, c + 1))?);
                pos += 1;
            }
        }
    }
    Ok(out)
}

fn unpack_tl1_region(
    bytes: &[u8],
    values: &mut [i8],
    k: usize,
    m: usize,
    cols: Range<usize>,
    geometry: &BlockGeometry,
) -> Result<()> {
    let layout = geometry.tl1_layout(m, cols.len());
    for tile in layout.tiles() {
        let mut pos = tile.offset / 2;
        for r in tile.row0..tile.row0 + tile.rows {
            for c in (tile.col0..tile.col0 + tile.cols).step_by(2) {
                let (w1, w2) = unpack_tl1_index(nibble_at(bytes, pos))?;
                let at = r * k + cols.start + c;
                values[at] = w1;
                values[at + 1] = w2;
                pos += 1;
            }
        }
    }
    Ok(())
}

pub fn pack(t: &TernaryMatrix, layout: Layout, geometry: BlockGeometry) -> Result<PackedWeights> {
    let (m, k) = (t.m(), t.k());
    let sizes = region_sizes(layout, m, k, &geometry)?;
    let (index_bytes, sign_bits, remainder_bytes) = match layout {
        Layout::Tl1 => (pack_tl1_region(t, 0..k, &geometry)?, Vec::new(), Vec::new()),
        Layout::I2s => {
            let mut codes = vec![0u8; sizes.index];
            for (i, &w) in t.values().iter().enumerate() {
                codes[i >> 2] |= i2s_code(w)? << ((i & 3) << 1);
            }
            (codes, Vec::new(), Vec::new())
        }
        Layout::Tl2 => {
            let (three_k, _) = geometry.split(k)?;
            let mut index = vec![0u8; sizes.index];
            let mut signs = vec![0u8; sizes.sign];
            let blocks = geometry.tl2_layout(m, three_k);
            for tile in blocks.tiles() {
                let mut pos = tile.offset / 3;
                for r in tile.row0..tile.row0 + tile.rows {
                    for c in (tile.col0..tile.col0 + tile.cols).step_by(3) {
                        let (sign, idx) =
                            pack_tl2_triple(t.get(r, c), t.get(r, c + 1), t.get(r, c + 2))?;
                        put_nibble(&mut index, pos, idx);
                        put_bit(&mut signs, pos, sign);
                        pos += 1;
                    }
                }
            }
            (index, signs, pack_tl1_region(t, three_k..k, &geometry)?)
        }
    };
    debug_assert_eq!(
        index_bytes.len() + sign_bits.len() + remainder_bytes.len(),
        sizes.total()
    );
    Ok(PackedWeights {
        layout,
        m,
        k,
        geometry,
        index_bytes,
        sign_bits,
        remainder_bytes,
        weight_scale: t.weight_scale(),
    })
}

/// Exact inverse of [`pack`].
pub fn unpack(p: &PackedWeights) -> Result<TernaryMatrix> {
    let (m, k) = (p.m, p.k);
    let mut values = vec![0i8; m * k];
    match p.layout {
        Layout::Tl1 => unpack_tl1_region(&p.index_bytes, &mut values, k, m, 0..k, &p.geometry)?,
        Layout::I2s => {
            for (i, v) in values.iter_mut().enumerate() {
                *v = i2s_decode((p.index_bytes[i >> 2] >> ((i & 3) << 1)) & 0b11)?;
            }
        }
        Layout::Tl2 => {
            let three_k = p.three_k();
            let blocks = p.geometry.tl2_layout(m, three_k);
            for tile in blocks.tiles() {
                let mut pos = tile.offset / 3;
                for r in tile.row0..tile.row0 + tile.rows {
                    for c in (tile.col0..tile.col0 + tile.cols).step_by(3) {
                        let triple = unpack_tl2_code(
                            bit_at(&p.sign_bits, pos),
                            nibble_at(&p.index_bytes, pos),
                        )?;
                        values[r * k + c..r * k + c + 3].copy_from_slice(&triple);
                        pos += 1;
                    }
                }
            }
            unpack_tl1_region(
                &p.remainder_bytes,
                &mut values,
                k,
                m,
                three_k..k,
                &p.geometry,
            )?;
        }
    }
    TernaryMatrix::new(m, k, values, p.weight_scale)
}
