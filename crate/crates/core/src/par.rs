//! Data-parallel helpers with a sequential fallback.
//!
//! With the `parallel` feature (default) independent work items run on the
//! rayon pool; without it, or with [`Execution::Sequential`], they run in
//! order on the calling thread. Results are always returned in input order
//! and no floating-point reduction crosses a task boundary, so both modes
//! produce bit-identical output.

use serde::{Deserialize, Serialize};

/// Environment variable read by [`init_workers`] to size the worker pool.
pub const WORKERS_ENV: &str = "TCS_WORKERS";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Execution {
    Sequential,
    Parallel,
}

impl Default for Execution {
    fn default() -> Self {
        if cfg!(feature = "parallel") {
            Execution::Parallel
        } else {
            Execution::Sequential
        }
    }
}

impl Execution {
    /// Map `f` over `0..n`, preserving order.
    pub fn map_indexed<T, F>(self, n: usize, f: F) -> Vec<T>
    where
        T: Send,
        F: Fn(usize) -> T + Sync + Send,
    {
        match self {
            #[cfg(feature = "parallel")]
            Execution::Parallel => {
                use rayon::prelude::*;
                (0..n).into_par_iter().map(f).collect()
            }
            _ => (0..n).map(f).collect(),
        }
    }

    /// Map `f` over a slice, preserving order.
    pub fn map_slice<S, T, F>(self, items: &[S], f: F) -> Vec<T>
    where
        S: Sync,
        T: Send,
        F: Fn(&S) -> T + Sync + Send,
    {
        self.map_indexed(items.len(), |i| f(&items[i]))
    }
}

/// Configure the global rayon pool from `TCS_WORKERS`, if set. Safe to call
/// more than once; later calls are ignored by rayon.
pub fn init_workers() {
    #[cfg(feature = "parallel")]
    if let Ok(raw) = std::env::var(WORKERS_ENV) {
        match raw.trim().parse::<usize>() {
            Ok(n) if n > 0 => {
                let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
            }
            _ => log::warn!("ignoring {WORKERS_ENV}={raw:?}: expected a positive integer"),
        }
    }
}

/// SplitMix64 finalizer, used to derive independent child seeds.
pub fn derive_seed(parent: u64, stream: u64) -> u64 {
    let mut z = parent
        .wrapping_add(0x9E37_79B9_7F4A_7C15)
        .wrapping_add(stream.wrapping_mul(0xD1B5_4A32_D192_ED03));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}
