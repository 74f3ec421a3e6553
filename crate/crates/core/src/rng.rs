//! splitmix64, used for every random choice the engine makes so that
//! decision sequences are reproducible across implementations.

/// splitmix64 generator. The first output for state `s` uses `s + GOLDEN`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SplitMix64 {
    state: u64,
}

impl SplitMix64 {
    const GOLDEN: u64 = 0x9E37_79B9_7F4A_7C15;

    pub fn new(seed: u64) -> Self {
        Self { state: seed }
    }

    pub fn state(&self) -> u64 {
        self.state
    }

    pub fn next_u64(&mut self) -> u64 {
        self.state = self.state.wrapping_add(Self::GOLDEN);
        let mut z = self.state;
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
        z ^ (z >> 31)
    }

    /// `next_u64() mod n`. Panics if `n == 0`.
    pub fn pick_index(&mut self, n: usize) -> usize {
        assert!(n > 0, "pick_index over an empty candidate set");
        (self.next_u64() % n as u64) as usize
    }
}
