//! Receiver-specific privacy views over simulated assisted-living records.
//!
//! The pipeline: simulate records, apply per-receiver privacy operations
//! (disclose / generalize / delete) as a deterministic oracle, train a
//! character-level LSTM encoder with one decoder per receiver view, and
//! evaluate how faithfully each decoder reproduces its view — including the
//! lock-and-key property that an encoded vector is useless without the
//! matching decoder.

pub mod digest;
pub mod eval;
pub mod policy;
pub mod records;
pub mod rng;
pub mod seqnet;
pub mod simulator;
pub mod training;

/// Maps a slice in parallel when the `parallel` feature is enabled, serially
/// otherwise. Output order always matches input order, so downstream
/// reductions are deterministic either way.
pub(crate) fn par_map<T: Sync, U: Send, F>(items: &[T], f: F) -> Vec<U>
where
    F: Fn(&T) -> U + Sync + Send,
{
    #[cfg(feature = "parallel")]
    {
        use rayon::prelude::*;
        items.par_iter().map(f).collect()
    }
    #[cfg(not(feature = "parallel"))]
    {
        items.iter().map(f).collect()
    }
}
