//! BPSK over AWGN, channel LLRs and saturating fixed-point quantization.

use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::polar::{encode, CodeSpec};

/// AWGN channel settings. `snr_db` is Eb/N0.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ChannelParams {
    pub snr_db: f64,
    pub rate: f64,
    pub seed: u64,
}

impl ChannelParams {
    pub fn new(snr_db: f64, rate: f64, seed: u64) -> Result<Self> {
        if !(rate > 0.0 && rate <= 1.0) {
            return Err(Error::InvalidParameter(format!(
                "code rate must be in (0, 1], got {rate}"
            )));
        }
        Ok(ChannelParams { snr_db, rate, seed })
    }

    /// `σ² = 1 / (2·R·10^{snr/10})`.
    pub fn noise_variance(&self) -> f64 {
        noise_variance(self.snr_db, self.rate)
    }
}

pub fn noise_variance(snr_db: f64, rate: f64) -> f64 {
    1.0 / (2.0 * rate * 10f64.powf(snr_db / 10.0))
}

/// Per-frame random stream. Frame `i` of an experiment seeded with `seed`
/// always sees the same stream, whichever worker runs it.
pub fn frame_rng(seed: u64, frame_index: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed ^ frame_index)
}

/// Maps bits to `±1` and adds Gaussian noise of variance `sigma2`.
pub fn transmit_with<R: Rng + ?Sized>(codeword: &[u8], sigma2: f64, rng: &mut R) -> Vec<f64> {
    let sigma = sigma2.sqrt();
    codeword
        .iter()
        .map(|&b| {
            let noise: f64 = rng.sample(StandardNormal);
            (1.0 - 2.0 * f64::from(b)) + sigma * noise
        })
        .collect()
}

/// BPSK + AWGN with the stream seeded from `params.seed`.
pub fn transmit(codeword: &[u8], params: &ChannelParams) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    transmit_with(codeword, params.noise_variance(), &mut rng)
}

/// `2y/σ²`; positive favours bit 0.
pub fn channel_llr(received: &[f64], params: &ChannelParams) -> Vec<f64> {
    llr_from_variance(received, params.noise_variance())
}

pub fn llr_from_variance(received: &[f64], sigma2: f64) -> Vec<f64> {
    let scale = 2.0 / sigma2;
    received.iter().map(|&y| scale * y).collect()
}

/// A random message and the channel LLRs of its codeword.
#[derive(Debug, Clone, PartialEq)]
pub struct Frame {
    pub msg: Vec<u8>,
    pub llr: Vec<f64>,
}

/// Frame `index` of the experiment seeded with `seed`: uniform message bits
/// followed by the channel noise, both drawn from the frame's own stream.
pub fn generate_frame(code: &CodeSpec, snr_db: f64, seed: u64, index: u64) -> Frame {
    let mut rng = frame_rng(seed, index);
    let msg: Vec<u8> = (0..code.message_bits())
        .map(|_| u8::from(rng.random::<bool>()))
        .collect();
    let x = encode(code, &msg).expect("message length matches code");
    let sigma2 = noise_variance(snr_db, code.rate());
    let y = transmit_with(&x, sigma2, &mut rng);
    Frame {
        msg,
        llr: llr_from_variance(&y, sigma2),
    }
}

/// Two's-complement fixed-point format `Q{total}.{frac}`: one sign bit,
/// `total - frac - 1` integer bits and `frac` fraction bits.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Quantizer {
    total: u32,
    frac: u32,
}

impl Quantizer {
    /// The LLR format of the reference hardware.
    pub const Q7_2: Quantizer = Quantizer { total: 7, frac: 2 };

    pub fn new(total: u32, frac: u32) -> Result<Self> {
        if !(2..=16).contains(&total) || frac >= total {
            return Err(Error::InvalidParameter(format!(
                "invalid fixed-point format Q{total}.{frac}"
            )));
        }
        Ok(Quantizer { total, frac })
    }

    pub fn total_bits(&self) -> u32 {
        self.total
    }

    pub fn frac_bits(&self) -> u32 {
        self.frac
    }

    pub fn lsb(&self) -> f64 {
        (-(self.frac as f64)).exp2()
    }

    /// Largest code, `2^{total-1} - 1`.
    pub fn max_code(&self) -> i32 {
        (1 << (self.total - 1)) - 1
    }

    /// Smallest code, `-2^{total-1}`.
    pub fn min_code(&self) -> i32 {
        -(1 << (self.total - 1))
    }

    pub fn max_value(&self) -> f64 {
        self.max_code() as f64 * self.lsb()
    }

    pub fn min_value(&self) -> f64 {
        self.min_code() as f64 * self.lsb()
    }

    /// Nearest code (ties away from zero), saturated.
    pub fn to_code(&self, x: f64) -> i32 {
        if x.is_nan() {
            return 0;
        }
        let scaled = (x / self.lsb()).round();
        scaled.clamp(self.min_code() as f64, self.max_code() as f64) as i32
    }

    pub fn from_code(&self, code: i32) -> f64 {
        code as f64 * self.lsb()
    }

    pub fn quantize(&self, x: f64) -> f64 {
        self.from_code(self.to_code(x))
    }

    pub fn is_representable(&self, x: f64) -> bool {
        self.quantize(x) == x
    }
}

/// Free-function form of [`Quantizer::quantize`].
pub fn quantize(x: f64, q: &Quantizer) -> f64 {
    q.quantize(x)
}

impl fmt::Display for Quantizer {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Q{}.{}", self.total, self.frac)
    }
}

impl FromStr for Quantizer {
    type Err = Error;

    /// Accepts `Q7.2` or `q7.2`.
    fn from_str(s: &str) -> Result<Self> {
        let body = s
            .trim()
            .strip_prefix(['Q', 'q'])
            .ok_or_else(|| Error::InvalidParameter(format!("bad quantizer {s:?}")))?;
        let (t, f) = body
            .split_once('.')
            .ok_or_else(|| Error::InvalidParameter(format!("bad quantizer {s:?}")))?;
        let parse = |v: &str| {
            v.parse::<u32>()
                .map_err(|_| Error::InvalidParameter(format!("bad quantizer {s:?}")))
        };
        Quantizer::new(parse(t)?, parse(f)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::{prop_assert, prop_assert_eq, prop_assume, proptest};

    #[test]
    fn q72_examples() {
        let q = Quantizer::Q7_2;
        assert_eq!(q.quantize(0.25), 0.25);
        assert_eq!(q.quantize(100.0), 15.75);
        assert_eq!(q.quantize(-100.0), -16.0);
        assert_eq!(q.max_value(), 15.75);
        assert_eq!(q.min_value(), -16.0);
        // ties away from zero
        assert_eq!(q.quantize(0.125), 0.25);
        assert_eq!(q.quantize(-0.125), -0.25);
        assert_eq!(q.quantize(0.1), 0.0);
        assert!(q.is_representable(0.25));
        assert_eq!(q.to_string(), "Q7.2");
        assert_eq!("q7.2".parse::<Quantizer>().unwrap(), q);
    }

    #[test]
    fn quantizer_validation() {
        assert!(Quantizer::new(1, 0).is_err());
        assert!(Quantizer::new(17, 2).is_err());
        assert!(Quantizer::new(7, 7).is_err());
        assert!(Quantizer::new(16, 15).is_ok());
        assert!("7.2".parse::<Quantizer>().is_err());
    }

    proptest! {
        #[test]
        fn quantize_idempotent(x in -50.0f64..50.0) {
            let q = Quantizer::Q7_2;
            prop_assert_eq!(q.quantize(q.quantize(x)), q.quantize(x));
        }

        #[test]
        fn quantize_monotone(a in -50.0f64..50.0, b in -50.0f64..50.0) {
            let q = Quantizer::Q7_2;
            let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
            prop_assert!(q.quantize(lo) <= q.quantize(hi));
        }

        #[test]
        fn quantize_error_bound(x in -16.0f64..15.75, total in 4u32..12, frac in 0u32..4) {
            prop_assume!(frac < total);
            let q = Quantizer::new(total, frac).unwrap();
            prop_assume!(x >= q.min_value() && x <= q.max_value());
            prop_assert!((q.quantize(x) - x).abs() <= q.lsb() / 2.0 + 1e-12);
        }
    }

    #[test]
    fn noiseless_and_deterministic() {
        let cw = [0u8, 1, 1, 0, 1];
        let p = ChannelParams::new(100.0, 0.5, 7).unwrap();
        let y = transmit(&cw, &p);
        for (&b, &v) in cw.iter().zip(&y) {
            let s = 1.0 - 2.0 * f64::from(b);
            assert!((v - s).abs() < 1e-3);
        }
        let p = ChannelParams::new(1.0, 0.5, 7).unwrap();
        assert_eq!(transmit(&cw, &p), transmit(&cw, &p));
        assert!(ChannelParams::new(1.0, 0.0, 1).is_err());
        assert!(ChannelParams::new(1.0, 1.5, 1).is_err());
    }

    #[test]
    fn empirical_noise_variance() {
        let p = ChannelParams::new(1.0, 0.5, 99).unwrap();
        let zeros = vec![0u8; 1_000_000];
        let y = transmit(&zeros, &p);
        let n = y.len() as f64;
        let mean = y.iter().map(|v| v - 1.0).sum::<f64>() / n;
        let var = y.iter().map(|v| (v - 1.0 - mean).powi(2)).sum::<f64>() / (n - 1.0);
        let rel = (var - p.noise_variance()).abs() / p.noise_variance();
        assert!(rel < 0.01, "relative variance error {rel}");
    }

    #[test]
    fn llr_formula() {
        let sigma2 = 0.5;
        assert_eq!(llr_from_variance(&[0.5, 0.0, -1.0], sigma2), vec![2.0, 0.0, -4.0]);
        let p = ChannelParams::new(3.0, 0.5, 0).unwrap();
        let l = channel_llr(&[0.3], &p);
        assert!(l[0] > 0.0);
        assert!((l[0] - 0.6 / p.noise_variance()).abs() < 1e-12);
    }

    #[test]
    fn generated_frames_replay() {
        let seq = crate::polar::nr5g_sequence(6).unwrap();
        let code = crate::polar::build_code(6, 20, &seq, crate::polar::CrcPoly::CRC11_NR).unwrap();
        let a = generate_frame(&code, 2.0, 4, 17);
        assert_eq!(a, generate_frame(&code, 2.0, 4, 17));
        assert_ne!(a, generate_frame(&code, 2.0, 4, 18));
        assert_eq!(a.msg.len(), 20);
        assert_eq!(a.llr.len(), 64);
    }

    #[test]
    fn frame_streams_differ() {
        let mut a = frame_rng(5, 0);
        let mut b = frame_rng(5, 1);
        let x: u64 = a.random();
        let y: u64 = b.random();
        assert_ne!(x, y);
        let mut c = frame_rng(5, 0);
        assert_eq!(x, c.random::<u64>());
    }
}
