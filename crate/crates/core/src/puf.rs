//! Software stand-in for a UAV's physical unclonable function: a per-device
//! keyed mapping from challenges to 32-byte responses, with an optional
//! bit-flip noise knob for experiments. Registration always runs noiseless.

use rand::{CryptoRng, Rng, RngCore};
use sha2::{Digest, Sha256};
use thiserror::Error;

pub const RESPONSE_BYTES: usize = 32;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum PufError {
    #[error("empty challenge")]
    EmptyChallenge,
    #[error("noise rate must lie in [0, 1]")]
    InvalidNoiseRate,
}

/// One device's challenge-response function. The device secret never leaves
/// the struct; there is no accessor and no serde implementation.
pub struct PufDevice {
    device_secret: [u8; 32],
    noise_rate: f64,
}

impl std::fmt::Debug for PufDevice {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("PufDevice")
            .field("noise_rate", &self.noise_rate)
            .finish_non_exhaustive()
    }
}

impl PufDevice {
    pub fn new<R: RngCore + CryptoRng>(rng: &mut R) -> Self {
        let mut device_secret = [0u8; 32];
        rng.fill_bytes(&mut device_secret);
        PufDevice {
            device_secret,
            noise_rate: 0.0,
        }
    }

    pub fn with_noise<R: RngCore + CryptoRng>(rng: &mut R, noise_rate: f64) -> Result<Self, PufError> {
        if !(0.0..=1.0).contains(&noise_rate) || noise_rate.is_nan() {
            return Err(PufError::InvalidNoiseRate);
        }
        let mut dev = Self::new(rng);
        dev.noise_rate = noise_rate;
        Ok(dev)
    }

    pub fn noise_rate(&self) -> f64 {
        self.noise_rate
    }

    /// r = PUF(c). Deterministic per device at noise 0; with noise enabled
    /// each response bit flips independently with probability `noise_rate`.
    pub fn evaluate<R: RngCore + CryptoRng>(
        &self,
        challenge: &[u8],
        rng: &mut R,
    ) -> Result<[u8; RESPONSE_BYTES], PufError> {
        if challenge.is_empty() {
            return Err(PufError::EmptyChallenge);
        }
        let mut hasher = Sha256::new();
        hasher.update(b"ztuav/puf");
        hasher.update(self.device_secret);
        hasher.update((challenge.len() as u64).to_be_bytes());
        hasher.update(challenge);
        let mut response: [u8; RESPONSE_BYTES] = hasher.finalize().into();
        if self.noise_rate > 0.0 {
            for byte in response.iter_mut() {
                for bit in 0..8 {
                    if rng.gen_bool(self.noise_rate) {
                        *byte ^= 1 << bit;
                    }
                }
            }
        }
        Ok(response)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha20Rng;

    fn rng() -> ChaCha20Rng {
        ChaCha20Rng::seed_from_u64(11)
    }

    #[test]
    fn deterministic_without_noise() {
        let mut r = rng();
        let dev = PufDevice::new(&mut r);
        let a = dev.evaluate(b"challenge", &mut r).unwrap();
        let b = dev.evaluate(b"challenge", &mut r).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn empty_challenge_rejected() {
        let mut r = rng();
        let dev = PufDevice::new(&mut r);
        assert_eq!(dev.evaluate(b"", &mut r), Err(PufError::EmptyChallenge));
    }

    #[test]
    fn device_uniqueness_scan() {
        let mut r = rng();
        for _ in 0..1_000 {
            let d1 = PufDevice::new(&mut r);
            let d2 = PufDevice::new(&mut r);
            let r1 = d1.evaluate(b"same challenge", &mut r).unwrap();
            let r2 = d2.evaluate(b"same challenge", &mut r).unwrap();
            assert_ne!(r1, r2);
        }
    }

    #[test]
    fn noise_flip_fraction_within_binomial_bound() {
        let mut r = rng();
        let dev = PufDevice::with_noise(&mut r, 0.01).unwrap();
        let mut flips = 0u64;
        let mut total = 0u64;
        // a device with the same secret and zero noise gives the reference
        let reference = PufDevice {
            device_secret: dev.device_secret,
            noise_rate: 0.0,
        };
        let mut challenge = [0u8; 8];
        while total < 10_000 {
            r.fill_bytes(&mut challenge);
            let clean = reference.evaluate(&challenge, &mut r).unwrap();
            let noisy = dev.evaluate(&challenge, &mut r).unwrap();
            for (a, b) in clean.iter().zip(noisy.iter()) {
                flips += (a ^ b).count_ones() as u64;
                total += 8;
            }
        }
        let fraction = flips as f64 / total as f64;
        assert!(
            (0.005..=0.015).contains(&fraction),
            "flip fraction {fraction} outside [0.005, 0.015]"
        );
    }

    #[test]
    fn per_bit_balance() {
        let mut r = rng();
        let dev = PufDevice::new(&mut r);
        let mut ones = 0u64;
        let mut total = 0u64;
        for i in 0..10_000u32 {
            let resp = dev.evaluate(&i.to_be_bytes(), &mut r).unwrap();
            for byte in resp {
                ones += byte.count_ones() as u64;
                total += 8;
            }
        }
        let fraction = ones as f64 / total as f64;
        assert!(
            (0.45..=0.55).contains(&fraction),
            "one-bit fraction {fraction} outside [0.45, 0.55]"
        );
    }

    #[test]
    fn invalid_noise_rate_rejected() {
        let mut r = rng();
        assert!(PufDevice::with_noise(&mut r, -0.1).is_err());
        assert!(PufDevice::with_noise(&mut r, 1.5).is_err());
    }
}
