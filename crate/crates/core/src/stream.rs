//! Counter-style random streams.
//!
//! Every replicate owns independent generators whose seeds are a hash of
//! `(master_seed, scenario_id, replicate, purpose)`. Nothing is shared between
//! replicates, so results do not depend on execution order or thread count.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

/// Concrete generator used throughout the crate.
pub type StreamRng = ChaCha8Rng;

/// What a derived stream is used for. Each purpose gets an independent seed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Purpose {
    Dataset,
    Folds,
    Probe,
}

impl Purpose {
    fn tag(self) -> &'static [u8] {
        match self {
            Purpose::Dataset => b"dataset",
            Purpose::Folds => b"folds",
            Purpose::Probe => b"probe",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct StreamKey {
    pub master_seed: u64,
    pub scenario_id: u64,
    pub replicate: u64,
}

impl StreamKey {
    pub fn new(master_seed: u64, scenario_id: u64, replicate: u64) -> Self {
        Self { master_seed, scenario_id, replicate }
    }

    pub fn rng(&self, purpose: Purpose) -> StreamRng {
        let mut hasher = Sha256::new();
        hasher.update(b"survsel/stream/v1");
        hasher.update(self.master_seed.to_le_bytes());
        hasher.update(self.scenario_id.to_le_bytes());
        hasher.update(self.replicate.to_le_bytes());
        hasher.update(purpose.tag());
        let digest = hasher.finalize();
        let mut seed = [0u8; 32];
        seed.copy_from_slice(&digest);
        StreamRng::from_seed(seed)
    }
}
