//! Deterministic chunked random streams.
//!
//! Draw `i` always lands in chunk `i / CHUNK`, whose generator is seeded from the
//! run seed and the chunk index alone, so results do not depend on how many worker
//! threads process the chunks.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

pub const CHUNK: usize = 1024;

pub fn chunk_rng(seed: u64, chunk: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(chunk);
    rng
}

/// Applies `f(chunk_rng, chunk_size)` to every chunk in parallel; output keeps chunk order.
pub fn map_chunks<T, F>(count: usize, seed: u64, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(&mut ChaCha8Rng, usize) -> T + Sync,
{
    let chunks = count.div_ceil(CHUNK);
    (0..chunks)
        .into_par_iter()
        .map(|c| {
            let size = CHUNK.min(count - c * CHUNK);
            let mut rng = chunk_rng(seed, c as u64);
            f(&mut rng, size)
        })
        .collect()
}
