//! Named random substreams derived from one root seed.
//!
//! Each stream is keyed by a name plus any number of integer or string keys,
//! so the dropout mask of one conversation does not depend on how many
//! numbers another consumer drew before it.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

const FNV_OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
const FNV_PRIME: u64 = 0x0000_0100_0000_01b3;

fn fnv(mut h: u64, bytes: &[u8]) -> u64 {
    for &b in bytes {
        h ^= u64::from(b);
        h = h.wrapping_mul(FNV_PRIME);
    }
    h
}

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

#[derive(Debug, Clone)]
pub struct StreamKey(u64);

impl StreamKey {
    pub fn new(root: u64, name: &str) -> Self {
        let h = fnv(FNV_OFFSET, &root.to_le_bytes());
        // length prefix keeps ("ab", "c") distinct from ("a", "bc")
        let h = fnv(h, &(name.len() as u64).to_le_bytes());
        Self(fnv(h, name.as_bytes()))
    }

    pub fn with(self, key: u64) -> Self {
        Self(fnv(fnv(self.0, &[0]), &key.to_le_bytes()))
    }

    pub fn with_str(self, key: &str) -> Self {
        let h = fnv(fnv(self.0, &[1]), &(key.len() as u64).to_le_bytes());
        Self(fnv(h, key.as_bytes()))
    }

    pub fn rng(&self) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(splitmix(self.0))
    }
}

pub fn substream(root: u64, name: &str) -> ChaCha8Rng {
    StreamKey::new(root, name).rng()
}
