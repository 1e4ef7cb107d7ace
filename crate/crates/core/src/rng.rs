//! Deterministic random streams derived from a master seed.
//!
//! Every consumer gets its own stream, keyed by purpose and an index, so the
//! draws of one purpose never shift when another purpose draws more or less.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

pub type StreamRng = ChaCha8Rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Purpose {
    Init,
    Selection,
    Crossover,
    Mutation,
    Surrogate,
    Sampler,
}

impl Purpose {
    fn tag(self) -> &'static [u8] {
        match self {
            Purpose::Init => b"init",
            Purpose::Selection => b"selection",
            Purpose::Crossover => b"crossover",
            Purpose::Mutation => b"mutation",
            Purpose::Surrogate => b"surrogate",
            Purpose::Sampler => b"sampler",
        }
    }
}

/// 256-bit seed from a master seed, a purpose and arbitrary extra bytes.
pub fn derive_seed(master: u64, purpose: Purpose, extra: &[u8]) -> [u8; 32] {
    let mut h = Sha256::new();
    h.update(b"genas-rng-v1");
    h.update(master.to_le_bytes());
    h.update(purpose.tag());
    h.update((extra.len() as u64).to_le_bytes());
    h.update(extra);
    h.finalize().into()
}

pub fn stream(master: u64, purpose: Purpose, index: u64) -> StreamRng {
    StreamRng::from_seed(derive_seed(master, purpose, &index.to_le_bytes()))
}
