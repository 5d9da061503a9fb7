use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type SimRng = ChaCha8Rng;

/// Independent stream `stream` of the generator keyed by `master_seed`.
///
/// ChaCha is counter based, so streams never overlap and the draw sequence
/// of one stream does not depend on how many other streams were used.
pub fn stream_rng(master_seed: u64, stream: u64) -> SimRng {
    let mut rng = ChaCha8Rng::seed_from_u64(master_seed);
    rng.set_stream(stream);
    rng
}

/// Stream id for replication `rep` of sweep point `point`.
pub fn point_stream(point: u32, rep: u32) -> u64 {
    (u64::from(point) << 32) | u64::from(rep)
}
