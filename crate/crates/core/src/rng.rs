//! Counter-based keyed randomness.
//!
//! Every random quantity in a run is a pure function of
//! `(master_seed, purpose, key_a, key_b, index)`. There is no generator state
//! to thread through the simulation, so graphs, clocks and coin tosses can be
//! regenerated in any order, in parallel, or for a coupled copy of the system,
//! and always come out bit-identical.
//!
//! Keys are lattice coordinates measured from the window centre, which lets
//! nested windows of different sizes share the randomness of common sites.

use crate::lattice::Spin;

/// What a variate is used for. Distinct purposes never share a stream.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
#[repr(u64)]
pub enum Purpose {
    Edge = 0x45444745,
    Feeling = 0x4645454c,
    InitialSpin = 0x494e4954,
    Clock = 0x434c4f43,
    Coin = 0x434f494e,
    Replica = 0x5245504c,
    Bootstrap = 0x424f4f54,
    Sample = 0x53414d50,
}

/// Master seed plus the derivation rule for independent uniform variates.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct RandomnessPlan {
    master_seed: u64,
}

impl RandomnessPlan {
    pub fn new(master_seed: u64) -> Self {
        Self { master_seed }
    }

    pub fn master_seed(&self) -> u64 {
        self.master_seed
    }

    /// Plan for replica `index`, independent of this plan and of every other replica.
    pub fn replica(&self, index: u64) -> Self {
        Self::new(self.raw(Purpose::Replica, index, 0, 0))
    }

    /// Raw 64-bit variate.
    pub fn raw(&self, purpose: Purpose, key_a: u64, key_b: u64, index: u64) -> u64 {
        let mut h = mix64(self.master_seed ^ 0x9E37_79B9_7F4A_7C15);
        h = mix64(h ^ purpose as u64);
        h = mix64(h.wrapping_add(key_a).wrapping_mul(0xD605_BBB5_8C8A_BBB5));
        h = mix64(h ^ key_b.wrapping_mul(0xA076_1D64_78BD_642F));
        mix64(h ^ index.wrapping_mul(0xE703_7ED1_A0B4_28DB))
    }

    /// Uniform variate in `[0, 1)` with 53 bits of precision.
    pub fn uniform(&self, purpose: Purpose, key_a: u64, key_b: u64, index: u64) -> f64 {
        (self.raw(purpose, key_a, key_b, index) >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Unit-rate exponential variate.
    pub fn exponential(&self, purpose: Purpose, key_a: u64, key_b: u64, index: u64) -> f64 {
        // 1 - U lies in (0, 1], so the logarithm is finite.
        -(1.0 - self.uniform(purpose, key_a, key_b, index)).ln()
    }

    /// Fair ±1 variate.
    pub fn spin(&self, purpose: Purpose, key_a: u64, key_b: u64, index: u64) -> Spin {
        if self.raw(purpose, key_a, key_b, index) >> 63 == 1 {
            Spin::Plus
        } else {
            Spin::Minus
        }
    }

    /// Uniform integer in `0..n`. `n` must be positive.
    pub fn below(&self, purpose: Purpose, key_a: u64, key_b: u64, index: u64, n: u64) -> u64 {
        debug_assert!(n > 0);
        ((self.raw(purpose, key_a, key_b, index) as u128 * n as u128) >> 64) as u64
    }
}

/// Packs a pair of signed lattice coordinates into one key.
pub fn coord_key(x1: i64, x2: i64) -> u64 {
    ((x1 as i32 as u32 as u64) << 32) | (x2 as i32 as u32 as u64)
}

fn mix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}
