use crate::error::{domain, Result};

/// Fibonacci linear-feedback shift register.
///
/// The default 10-stage register uses the primitive polynomial
/// `x^10 + x^7 + 1` and therefore cycles through all 1023 non-zero states.
#[derive(Debug, Clone)]
pub struct Lfsr {
    state: u32,
    stages: u32,
    taps: (u32, u32),
}

impl Lfsr {
    pub const STAGES: u32 = 10;

    /// 10-stage maximal-length register seeded from `seed` (never all-zero).
    pub fn new(seed: u64) -> Self {
        let period = (1u64 << Self::STAGES) - 1;
        Self {
            state: (seed % period) as u32 + 1,
            stages: Self::STAGES,
            taps: (10, 7),
        }
    }

    pub fn period(&self) -> usize {
        (1usize << self.stages) - 1
    }

    pub fn state(&self) -> u32 {
        self.state
    }

    /// Shifts once and returns the output bit.
    pub fn next_bit(&mut self) -> bool {
        let out = self.state & 1;
        let fb = ((self.state >> (self.stages - self.taps.0)) ^ (self.state >> (self.stages - self.taps.1))) & 1;
        self.state = (self.state >> 1) | (fb << (self.stages - 1));
        out == 1
    }
}

/// Two-level pseudo-random binary sequence holding each LFSR bit for
/// `bit_period` samples.
pub fn generate_prbs(low: f64, high: f64, bit_period: usize, n: usize, seed: u64) -> Result<Vec<f64>> {
    if !(low < high) {
        return Err(domain("low", format!("need low < high, got {low} >= {high}")));
    }
    if bit_period == 0 {
        return Err(domain("bit_period", "must be at least one sample"));
    }
    if n == 0 {
        return Err(domain("n", "must be at least one sample"));
    }
    let mut lfsr = Lfsr::new(seed);
    let mut out = Vec::with_capacity(n);
    let mut level = low;
    for k in 0..n {
        if k % bit_period == 0 {
            level = if lfsr.next_bit() { high } else { low };
        }
        out.push(level);
    }
    Ok(out)
}
