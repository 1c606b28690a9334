//! Sub-seed derivation.
//!
//! `derive(master, label) = splitmix64(master ^ fnv1a64(label))`. Every
//! pipeline stage draws from its own labelled stream, so stages can be rerun
//! in isolation and still see the same random numbers.

pub fn fnv1a64(label: &str) -> u64 {
    fnv1a64_bytes(label.as_bytes())
}

pub fn fnv1a64_bytes(bytes: &[u8]) -> u64 {
    let mut h = Fnv64::default();
    h.write(bytes);
    h.finish()
}

/// Incremental FNV-1a.
#[derive(Clone, Copy, Debug)]
pub struct Fnv64(u64);

impl Default for Fnv64 {
    fn default() -> Self {
        Fnv64(0xcbf2_9ce4_8422_2325)
    }
}

impl Fnv64 {
    pub fn write(&mut self, bytes: &[u8]) {
        for &b in bytes {
            self.0 ^= b as u64;
            self.0 = self.0.wrapping_mul(0x0000_0100_0000_01b3);
        }
    }

    pub fn finish(&self) -> u64 {
        self.0
    }
}

pub fn splitmix64(x: u64) -> u64 {
    let mut z = x.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

pub fn derive(master: u64, label: &str) -> u64 {
    splitmix64(master ^ fnv1a64(label))
}
