//! Seeded generators and reference oracles shared by the property tests and
//! the acceptance runner.
//!
//! Every oracle here is written from the textual definition of the behaviour
//! it checks and does not call the code under test.

pub mod gen;
pub mod oracle;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}
