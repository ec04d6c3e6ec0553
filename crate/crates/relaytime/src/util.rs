//! Small numeric helpers shared across modules: compensated summation,
//! seed derivation, and exact binomial coefficients.

/// Neumaier's variant of Kahan summation. Used wherever a sum must be
/// independent of chunking (Monte Carlo aggregation) or faces heavy
/// cancellation (alternating PMF sums).
#[derive(Debug, Clone, Copy, Default)]
pub struct NeumaierSum {
    sum: f64,
    compensation: f64,
}

impl NeumaierSum {
    pub fn new() -> NeumaierSum {
        NeumaierSum::default()
    }

    pub fn add(&mut self, value: f64) {
        let t = self.sum + value;
        if self.sum.abs() >= value.abs() {
            self.compensation += (self.sum - t) + value;
        } else {
            self.compensation += (value - t) + self.sum;
        }
        self.sum = t;
    }

    pub fn total(&self) -> f64 {
        self.sum + self.compensation
    }
}

/// SplitMix64 finalizer: a cheap, well-avalanched 64-bit mix.
pub fn splitmix64(seed: u64) -> u64 {
    let mut z = seed.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Derive an independent substream seed from (master, tag, index).
/// Deterministic and collision-resistant enough for simulation streams;
/// not cryptographic.
pub fn derive_seed(master: u64, tag: u64, index: u64) -> u64 {
    splitmix64(splitmix64(master ^ tag).wrapping_add(splitmix64(index)))
}

/// C(n, k) as f64, exact for every value this crate uses (n <= 64 keeps
/// the intermediate product in u128 and the result below 2^53 for the
/// PMF's n <= ~35).
pub fn binomial(n: u64, k: u64) -> f64 {
    if k > n {
        return 0.0;
    }
    let k = k.min(n - k);
    let mut num: u128 = 1;
    for i in 0..k {
        num = num * (n - i) as u128 / (i + 1) as u128;
    }
    num as f64
}
