use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

/// Generator used for every stochastic site.
pub type Rng = ChaCha8Rng;

/// Root of a tree of labelled, independent random streams.
///
/// Each stream's key is `SHA-256(seed ‖ path)`, so adding a new consumer
/// under a fresh label never shifts the draws seen by existing ones.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SeedStream {
    seed: u64,
    path: String,
}

impl SeedStream {
    pub fn new(seed: u64) -> Self {
        Self {
            seed,
            path: String::new(),
        }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn child(&self, label: &str) -> Self {
        Self {
            seed: self.seed,
            path: format!("{}/{}", self.path, label),
        }
    }

    pub fn rng(&self, label: &str) -> Rng {
        let mut h = Sha256::new();
        h.update(self.seed.to_le_bytes());
        h.update(self.path.as_bytes());
        h.update(b"/");
        h.update(label.as_bytes());
        let key: [u8; 32] = h.finalize().into();
        ChaCha8Rng::from_seed(key)
    }
}
