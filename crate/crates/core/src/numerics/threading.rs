//! Worker-count control for row-parallel kernels.
//!
//! Output rows are disjoint, so a chunked parallel map writes each row with
//! the same serial arithmetic regardless of the worker count; results stay
//! bit-identical to single-threaded execution.

use std::sync::atomic::{AtomicUsize, Ordering};

static WORKERS: AtomicUsize = AtomicUsize::new(1);

/// Set the number of worker threads used by row-parallel kernels.
pub fn set_workers(n: usize) {
    WORKERS.store(n.max(1), Ordering::Relaxed);
}

pub fn workers() -> usize {
    WORKERS.load(Ordering::Relaxed)
}

/// Apply `f` to each row slice of `data` (row-major, `cols` wide), passing
/// the row index. Rows are split into contiguous chunks across workers.
pub fn for_each_row<T: Send, F>(data: &mut [T], cols: usize, f: F)
where
    F: Fn(usize, &mut [T]) + Send + Sync,
{
    let rows = if cols == 0 { 0 } else { data.len() / cols };
    let n = workers().min(rows.max(1));
    if n <= 1 || rows <= 1 {
        for (r, row) in data.chunks_mut(cols.max(1)).enumerate() {
            f(r, row);
        }
        return;
    }
    let chunk_rows = rows.div_ceil(n);
    std::thread::scope(|scope| {
        for (c, chunk) in data.chunks_mut(chunk_rows * cols).enumerate() {
            let f = &f;
            scope.spawn(move || {
                for (i, row) in chunk.chunks_mut(cols).enumerate() {
                    f(c * chunk_rows + i, row);
                }
            });
        }
    });
}
