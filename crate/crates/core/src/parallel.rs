//! Row-band partitioning shared by the threaded kernels.

/// Calls `f(band, chunk)` for every `band_len`-sized chunk of `out`, spreading
/// contiguous runs of bands over at most `threads` scoped workers.
pub(crate) fn for_each_band<F>(out: &mut [i32], band_len: usize, threads: usize, f: F)
where
    F: Fn(usize, &mut [i32]) + Sync,
{
    if out.is_empty() || band_len == 0 {
        return;
    }
    let mut bands: Vec<(usize, &mut [i32])> = out.chunks_mut(band_len).enumerate().collect();
    let threads = threads.clamp(1, bands.len());
    if threads == 1 {
        for (band, chunk) in bands {
            f(band, chunk);
        }
        return;
    }
    let per_worker = bands.len().div_ceil(threads);
    let f = &f;
    std::thread::scope(|scope| {
        while !bands.is_empty() {
            let take = per_worker.min(bands.len());
            let mine: Vec<_> = bands.drain(..take).collect();
            scope.spawn(move || {
                for (band, chunk) in mine {
                    f(band, chunk);
                }
            });
        }
    });
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn covers_every_band_once() {
        for threads in [1, 2, 3, 8, 64] {
            let mut out = vec![0i32; 37];
            for_each_band(&mut out, 5, threads, |band, chunk| {
                for v in chunk.iter_mut() {
                    *v += band as i32 + 1;
                }
            });
            let expect: Vec<i32> = (0..37).map(|i| i / 5 + 1).collect();
            assert_eq!(out, expect, "threads={threads}");
        }
    }
}
