//! I2_S: multiply-add kernel over 2-bit ternary codes.
//!
//! Codes are unpacked on the fly four per byte and multiplied against int8
//! activations with int32 accumulation, so the result is the exact integer
//! GEMM under per-tensor scales. K must be a multiple of 128.

use crate::error::{Error, Result};
use crate::pack::{Layout, PackedWeights, I2S_K_ALIGN};
use crate::parallel::for_each_band;
use crate::tensor::{combined_scale, GemmResult, QuantizedActivations};

/// Decoded weights for every byte value; code 3 decodes to 0 (rejected up front).
const DECODE: [[i8; 4]; 256] = {
    let mut table = [[0i8; 4]; 256];
    let mut b = 0;
    while b < 256 {
        let mut j = 0;
        while j < 4 {
            let code = (b >> (2 * j)) & 0b11;
            table[b][j] = if code == 3 { 0 } else { code as i8 - 1 };
            j += 1;
        }
        b += 1;
    }
    table
};

const ROWS_PER_TASK: usize = 16;

fn has_invalid_code(byte: u8) -> bool {
    // a code is 0b11 iff both of its bits are set
    byte & (byte >> 1) & 0b0101_0101 != 0
}

#[inline]
fn dot_row(codes: &[u8], act: &[i8]) -> i32 {
    let mut acc = 0i32;
    for (&byte, a) in codes.iter().zip(act.chunks_exact(4)) {
        let w = &DECODE[byte as usize];
        acc += w[0] as i32 * a[0] as i32
            + w[1] as i32 * a[1] as i32
            + w[2] as i32 * a[2] as i32
            + w[3] as i32 * a[3] as i32;
    }
    acc
}

pub fn gemm_i2s(packed: &PackedWeights, act: &QuantizedActivations) -> Result<GemmResult> {
    gemm_i2s_threaded(packed, act, 1)
}

pub fn gemm_i2s_threaded(
    packed: &PackedWeights,
    act: &QuantizedActivations,
    threads: usize,
) -> Result<GemmResult> {
    if packed.layout() != Layout::I2s {
        return Err(Error::ModeMismatch(format!(
            "I2_S needs i2s weights, got {}",
            packed.layout()
        )));
    }
    let (m, n, k) = (packed.m(), act.n(), packed.k());
    if k % I2S_K_ALIGN != 0 {
        return Err(Error::shape(format!(
            "I2_S needs K to be a multiple of {I2S_K_ALIGN}, got {k}"
        )));
    }
    if act.k() != k {
        return Err(Error::shape(format!(
            "weights K = {k} vs activations K = {}",
            act.k()
        )));
    }
    let codes = packed.index_bytes();
    if codes.iter().any(|&b| has_invalid_code(b)) {
        return Err(Error::corrupt("I2_S code 0b11 is not a ternary value"));
    }
    let row_bytes = k / 4;
    let mut accum = vec![0i32; m * n];
    for_each_band(&mut accum, ROWS_PER_TASK * n, threads, |band, out| {
        let row0 = band * ROWS_PER_TASK;
        for (rr, out_row) in out.chunks_mut(n).enumerate() {
            let r = row0 + rr;
            let w = &codes[r * row_bytes..(r + 1) * row_bytes];
            for (nn, slot) in out_row.iter_mut().enumerate() {
                *slot = dot_row(w, act.row(nn));
            }
        }
    });
    Ok(GemmResult::from_parts(
        m,
        n,
        accum,
        combined_scale(packed.weight_scale(), act.act_scale()),
    ))
}
