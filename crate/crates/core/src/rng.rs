use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type SimRng = ChaCha8Rng;

/// Seeds a generator for stream `stream` derived from `seed`.
///
/// Streams are independent ChaCha streams, so replicate `i` or Monte Carlo
/// chunk `i` gets the same numbers whatever thread runs it.
pub fn stream_rng(seed: u64, stream: u64) -> SimRng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}
