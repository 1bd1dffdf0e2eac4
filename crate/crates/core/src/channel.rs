//! BPSK over AWGN.
//!
//! Bit 0 maps to `+1`, bit 1 to `-1`, so positive channel LLRs favour 0.
//! Noise is drawn from `rand_distr::StandardNormal` on a `Xoshiro256PlusPlus`
//! stream.

use rand::{Rng, SeedableRng};
use rand_distr::{Distribution, StandardNormal};
use rand_xoshiro::Xoshiro256PlusPlus;

use crate::rsc::clamp_llr;
use crate::{Bit, Error, Llr};

/// Rate of the unterminated SBCC stream.
pub const CODE_RATE: f64 = 1.0 / 3.0;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ChannelConfig {
    pub ebn0_db: f64,
    pub rate: f64,
    pub sigma: f64,
    pub rng_seed: u64,
}

impl ChannelConfig {
    pub fn new(ebn0_db: f64, rate: f64, rng_seed: u64) -> Result<Self, Error> {
        Ok(ChannelConfig {
            ebn0_db,
            rate,
            sigma: ebn0_to_sigma(ebn0_db, rate)?,
            rng_seed,
        })
    }
}

/// Noise standard deviation for unit-energy BPSK at the given `Eb/N0`.
pub fn ebn0_to_sigma(ebn0_db: f64, rate: f64) -> Result<f64, Error> {
    if !(rate > 0.0 && rate <= 1.0) {
        return Err(Error::InvalidConfig(format!("code rate {rate} not in (0, 1]")));
    }
    if !ebn0_db.is_finite() {
        return Err(Error::NonFinite("Eb/N0"));
    }
    Ok((1.0 / (2.0 * rate * 10f64.powf(ebn0_db / 10.0))).sqrt())
}

pub fn modulate(bits: &[Bit]) -> Vec<f64> {
    bits.iter().map(|&b| if b == 0 { 1.0 } else { -1.0 }).collect()
}

/// Adds i.i.d. `N(0, sigma^2)` noise.
pub fn transmit<R: Rng + ?Sized>(symbols: &[f64], sigma: f64, rng: &mut R) -> Vec<f64> {
    symbols
        .iter()
        .map(|&x| {
            let n: f64 = StandardNormal.sample(rng);
            x + sigma * n
        })
        .collect()
}

/// `L = 2 y / sigma^2`, clamped to `±L_MAX`.
pub fn channel_llrs(received: &[f64], sigma: f64) -> Vec<Llr> {
    let scale = 2.0 / (sigma * sigma);
    received.iter().map(|&y| clamp_llr(scale * y)).collect()
}

/// Modulation, noise and demodulation in one step, owning its noise stream.
#[derive(Clone, Debug)]
pub struct AwgnChannel {
    sigma: f64,
    rng: Xoshiro256PlusPlus,
}

impl AwgnChannel {
    pub fn new(config: &ChannelConfig) -> Self {
        AwgnChannel {
            sigma: config.sigma,
            rng: Xoshiro256PlusPlus::seed_from_u64(config.rng_seed),
        }
    }

    pub fn sigma(&self) -> f64 {
        self.sigma
    }

    pub fn llrs(&mut self, bits: &[Bit]) -> Vec<Llr> {
        let rx = transmit(&modulate(bits), self.sigma, &mut self.rng);
        channel_llrs(&rx, self.sigma)
    }
}
