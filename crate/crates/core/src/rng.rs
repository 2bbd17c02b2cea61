//! Seed-deterministic random streams.
//!
//! Every random draw in a fit comes from a ChaCha stream keyed by the master
//! seed, a purpose tag and (for per-model draws) the model index. Streams are
//! fixed before any parallel work starts, so results do not depend on how
//! many workers run or in which order models finish.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type SparRng = ChaCha8Rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u64)]
pub enum Purpose {
    Screening = 1,
    GoalDim = 2,
    Projection = 3,
    DataSplit = 4,
    Folds = 5,
    Synthetic = 6,
}

/// Independent stream for `purpose` and `index` under `master_seed`.
pub fn substream(master_seed: u64, purpose: Purpose, index: u64) -> SparRng {
    let mut rng = ChaCha8Rng::seed_from_u64(master_seed);
    rng.set_stream(((purpose as u64) << 48) | (index & 0xFFFF_FFFF_FFFF));
    rng
}
