//! TNF container: a little-endian list of named ternary tensors.
//!
//! ```text
//! "TNF1" | version u16 | tensor_count u32
//! per tensor:
//!   name_len u16 | name (UTF-8) | layout u8 | m u32 | k u32 | bm u16 | bk3 u32
//!   weight_scale f32 | payload_len u64 | payload
//! ```
//!
//! Layout codes: 0 = TL1, 1 = TL2, 2 = I2_S, 3 = raw ternary (one `i8` per
//! weight, row-major). Packed payloads use the byte layouts of
//! [`ternlut_core::pack`] unchanged.

use std::io::{Read, Write};

use ternlut_core::pack::{packed_size, unpack};
use ternlut_core::{BlockGeometry, Layout, PackedWeights, TernaryMatrix};

use crate::error::{CliError, CliResult};

pub const MAGIC: &[u8; 4] = b"TNF1";
pub const VERSION: u16 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TnfLayout {
    Tl1,
    Tl2,
    I2s,
    RawTernary,
}

impl TnfLayout {
    pub fn code(self) -> u8 {
        match self {
            TnfLayout::Tl1 => 0,
            TnfLayout::Tl2 => 1,
            TnfLayout::I2s => 2,
            TnfLayout::RawTernary => 3,
        }
    }

    pub fn from_code(code: u8) -> CliResult<Self> {
        Ok(match code {
            0 => TnfLayout::Tl1,
            1 => TnfLayout::Tl2,
            2 => TnfLayout::I2s,
            3 => TnfLayout::RawTernary,
            other => return Err(CliError::Format(format!("unknown layout code {other}"))),
        })
    }

    pub fn packed(self) -> Option<Layout> {
        match self {
            TnfLayout::Tl1 => Some(Layout::Tl1),
            TnfLayout::Tl2 => Some(Layout::Tl2),
            TnfLayout::I2s => Some(Layout::I2s),
            TnfLayout::RawTernary => None,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            TnfLayout::RawTernary => "raw",
            other => other.packed().map(Layout::name).unwrap_or("raw"),
        }
    }
}

impl From<Layout> for TnfLayout {
    fn from(layout: Layout) -> Self {
        match layout {
            Layout::Tl1 => TnfLayout::Tl1,
            Layout::Tl2 => TnfLayout::Tl2,
            Layout::I2s => TnfLayout::I2s,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum TensorData {
    Packed(PackedWeights),
    Raw {
        matrix: TernaryMatrix,
        geometry: BlockGeometry,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct TnfTensor {
    pub name: String,
    pub data: TensorData,
}

impl TnfTensor {
    pub fn packed(name: impl Into<String>, weights: PackedWeights) -> Self {
        Self {
            name: name.into(),
            data: TensorData::Packed(weights),
        }
    }

    pub fn raw(name: impl Into<String>, matrix: TernaryMatrix, geometry: BlockGeometry) -> Self {
        Self {
            name: name.into(),
            data: TensorData::Raw { matrix, geometry },
        }
    }

    pub fn layout(&self) -> TnfLayout {
        match &self.data {
            TensorData::Packed(p) => p.layout().into(),
            TensorData::Raw { .. } => TnfLayout::RawTernary,
        }
    }

    pub fn shape(&self) -> (usize, usize) {
        match &self.data {
            TensorData::Packed(p) => (p.m(), p.k()),
            TensorData::Raw { matrix, .. } => (matrix.m(), matrix.k()),
        }
    }

    pub fn geometry(&self) -> BlockGeometry {
        match &self.data {
            TensorData::Packed(p) => *p.geometry(),
            TensorData::Raw { geometry, .. } => *geometry,
        }
    }

    pub fn weight_scale(&self) -> f32 {
        match &self.data {
            TensorData::Packed(p) => p.weight_scale(),
            TensorData::Raw { matrix, .. } => matrix.weight_scale(),
        }
    }

    pub fn payload(&self) -> Vec<u8> {
        match &self.data {
            TensorData::Packed(p) => p.payload(),
            TensorData::Raw { matrix, .. } => matrix.values().iter().map(|&v| v as u8).collect(),
        }
    }

    /// Dense ternary weights; fails on corrupt packed payloads.
    pub fn ternary(&self) -> CliResult<TernaryMatrix> {
        match &self.data {
            TensorData::Packed(p) => Ok(unpack(p)?),
            TensorData::Raw { matrix, .. } => Ok(matrix.clone()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct TnfFile {
    pub tensors: Vec<TnfTensor>,
}

fn fit<T: TryFrom<usize>>(v: usize, what: &str) -> CliResult<T> {
    T::try_from(v).map_err(|_| CliError::Format(format!("{what} {v} does not fit the TNF field")))
}

impl TnfFile {
    pub fn write_to<W: Write>(&self, mut w: W) -> CliResult<()> {
        w.write_all(MAGIC)?;
        w.write_all(&VERSION.to_le_bytes())?;
        w.write_all(&fit::<u32>(self.tensors.len(), "tensor count")?.to_le_bytes())?;
        for t in &self.tensors {
            let (m, k) = t.shape();
            let geometry = t.geometry();
            let payload = t.payload();
            w.write_all(&fit::<u16>(t.name.len(), "name length")?.to_le_bytes())?;
            w.write_all(t.name.as_bytes())?;
            w.write_all(&[t.layout().code()])?;
            w.write_all(&fit::<u32>(m, "m")?.to_le_bytes())?;
            w.write_all(&fit::<u32>(k, "k")?.to_le_bytes())?;
            w.write_all(&fit::<u16>(geometry.bm(), "bm")?.to_le_bytes())?;
            w.write_all(&fit::<u32>(geometry.bk3(), "bk3")?.to_le_bytes())?;
            w.write_all(&t.weight_scale().to_le_bytes())?;
            w.write_all(&(payload.len() as u64).to_le_bytes())?;
            w.write_all(&payload)?;
        }
        Ok(())
    }

    pub fn to_bytes(&self) -> CliResult<Vec<u8>> {
        let mut out = Vec::new();
        self.write_to(&mut out)?;
        Ok(out)
    }

    pub fn read_from<R: Read>(mut r: R) -> CliResult<Self> {
        let mut bytes = Vec::new();
        r.read_to_end(&mut bytes)?;
        Self::from_bytes(&bytes)
    }

    pub fn from_bytes(bytes: &[u8]) -> CliResult<Self> {
        let mut cur = Cursor { bytes, pos: 0 };
        if cur.take(4)? != MAGIC {
            return Err(CliError::Format("missing TNF1 magic".into()));
        }
        let version = cur.u16()?;
        if version != VERSION {
            return Err(CliError::Format(format!(
                "unsupported TNF version {version}"
            )));
        }
        let count = cur.u32()? as usize;
        let mut tensors = Vec::new();
        for _ in 0..count {
            let name_len = cur.u16()? as usize;
            let name = std::str::from_utf8(cur.take(name_len)?)
                .map_err(|_| CliError::Format("tensor name is not UTF-8".into()))?
                .to_owned();
            let layout = TnfLayout::from_code(cur.u8()?)?;
            let m = cur.u32()? as usize;
            let k = cur.u32()? as usize;
            let bm = cur.u16()? as usize;
            let bk3 = cur.u32()? as usize;
            let weight_scale = cur.f32()?;
            let payload_len = usize::try_from(cur.u64()?)
                .map_err(|_| CliError::Format("payload length overflows".into()))?;
            let geometry = BlockGeometry::new(bm, bk3)?;
            let expected = match layout.packed() {
                Some(l) => packed_size(l, m, k, &geometry)?,
                None => m * k,
            };
            if payload_len != expected {
                return Err(CliError::Format(format!(
                    "tensor {name:?}: payload_len {payload_len} but {} {m}x{k} needs {expected}",
                    layout.name()
                )));
            }
            let payload = cur.take(payload_len)?;
            let data = match layout.packed() {
                Some(l) => TensorData::Packed(PackedWeights::from_payload(
                    l,
                    m,
                    k,
                    geometry,
                    weight_scale,
                    payload,
                )?),
                None => {
                    let values = payload.iter().map(|&b| b as i8).collect();
                    TensorData::Raw {
                        matrix: TernaryMatrix::new(m, k, values, weight_scale)?,
                        geometry,
                    }
                }
            };
            tensors.push(TnfTensor { name, data });
        }
        if cur.pos != bytes.len() {
            return Err(CliError::Format(format!(
                "{} trailing bytes after the last tensor",
                bytes.len() - cur.pos
            )));
        }
        Ok(Self { tensors })
    }
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, len: usize) -> CliResult<&'a [u8]> {
        let end = self
            .pos
            .checked_add(len)
            .filter(|&e| e <= self.bytes.len())
            .ok_or_else(|| CliError::Format("truncated TNF file".into()))?;
        let out = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(out)
    }

    fn array<const N: usize>(&mut self) -> CliResult<[u8; N]> {
        Ok(self.take(N)?.try_into().expect("length checked"))
    }

    fn u8(&mut self) -> CliResult<u8> {
        Ok(self.array::<1>()?[0])
    }

    fn u16(&mut self) -> CliResult<u16> {
        self.array().map(u16::from_le_bytes)
    }

    fn u32(&mut self) -> CliResult<u32> {
        self.array().map(u32::from_le_bytes)
    }

    fn u64(&mut self) -> CliResult<u64> {
        self.array().map(u64::from_le_bytes)
    }

    fn f32(&mut self) -> CliResult<f32> {
        self.array().map(f32::from_le_bytes)
    }
}
