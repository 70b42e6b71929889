//! Reproducible random streams. A `(seed, stream)` pair fully determines the
//! output of every sampler that is handed the resulting generator.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type StreamRng = ChaCha8Rng;

/// Generator for stream `stream` under base seed `seed`.
pub fn stream(seed: u64, stream: u64) -> StreamRng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Stream for cell `cell` of replication `rep`.
pub fn cell_stream(seed: u64, rep: u64, cell: u64) -> StreamRng {
    stream(seed, (rep << 32) | (cell & 0xffff_ffff))
}
