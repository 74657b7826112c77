//! Stable seed derivation.
//!
//! Every randomized step in the pipeline derives its own seed from the run's
//! base seed plus the identity of the work item (pair, period, grid cell).
//! Results are then identical regardless of scheduling or thread count, and
//! stable across runs and platforms. The mix is FNV-1a, chosen for stability:
//! `std::hash` offers no cross-version guarantee.

const FNV_OFFSET: u64 = 0xcbf29ce484222325;
const FNV_PRIME: u64 = 0x00000100000001b3;

/// Incremental FNV-1a mixer over arbitrary byte fields.
#[derive(Debug, Clone, Copy)]
pub struct SeedMix(u64);

impl SeedMix {
    pub fn new(base_seed: u64) -> Self {
        SeedMix(FNV_OFFSET).mix_bytes(&base_seed.to_le_bytes())
    }

    pub fn mix_bytes(self, bytes: &[u8]) -> Self {
        let mut h = self.0;
        for &b in bytes {
            h ^= u64::from(b);
            h = h.wrapping_mul(FNV_PRIME);
        }
        // separator, so ("ab","c") and ("a","bc") diverge
        h ^= 0xff;
        h = h.wrapping_mul(FNV_PRIME);
        SeedMix(h)
    }

    pub fn mix_str(self, s: &str) -> Self {
        self.mix_bytes(s.as_bytes())
    }

    pub fn mix_u64(self, v: u64) -> Self {
        self.mix_bytes(&v.to_le_bytes())
    }

    pub fn finish(self) -> u64 {
        // final avalanche (splitmix64) so nearby inputs land far apart
        let mut z = self.0;
        z = (z ^ (z >> 30)).wrapping_mul(0xbf58476d1ce4e5b9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94d049bb133111eb);
        z ^ (z >> 31)
    }
}

/// Seed for the randomization test of one (focal, target, period) slice.
pub fn period_seed(base_seed: u64, focal_id: &str, target_id: &str, period_index: usize) -> u64 {
    SeedMix::new(base_seed)
        .mix_str(focal_id)
        .mix_str(target_id)
        .mix_u64(period_index as u64)
        .finish()
}
