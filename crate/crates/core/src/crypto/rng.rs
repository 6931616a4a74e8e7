use std::sync::{Arc, Mutex};

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha20Rng;

/// Shared CSPRNG handle. Seedable so harness runs are replayable; clones
/// draw from the same stream.
#[derive(Clone)]
pub struct ProtocolRng(Arc<Mutex<ChaCha20Rng>>);

impl ProtocolRng {
    pub fn from_entropy() -> Self {
        ProtocolRng(Arc::new(Mutex::new(ChaCha20Rng::from_entropy())))
    }

    pub fn seeded(seed: u64) -> Self {
        ProtocolRng(Arc::new(Mutex::new(ChaCha20Rng::seed_from_u64(seed))))
    }

    pub fn fill(&self, dest: &mut [u8]) {
        self.0.lock().expect("rng poisoned").fill_bytes(dest);
    }

    pub fn array<const N: usize>(&self) -> [u8; N] {
        let mut out = [0u8; N];
        self.fill(&mut out);
        out
    }

    pub fn bytes(&self, n: usize) -> Vec<u8> {
        let mut out = vec![0u8; n];
        self.fill(&mut out);
        out
    }

    pub fn next_u64(&self) -> u64 {
        self.0.lock().expect("rng poisoned").next_u64()
    }

    /// Independent stream seeded from this one.
    pub fn fork(&self) -> ProtocolRng {
        ProtocolRng(Arc::new(Mutex::new(ChaCha20Rng::from_seed(self.array()))))
    }
}

impl std::fmt::Debug for ProtocolRng {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str("ProtocolRng")
    }
}
