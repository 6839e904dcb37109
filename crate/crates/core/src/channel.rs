//! BPSK over AWGN with reproducible, splittable randomness.
//!
//! Symbol energy is normalised to `Es = 1`; `esn0_db` is the symbol SNR, so
//! the per-dimension noise variance is `σ² = 10^(-esn0_db/10) / 2`.

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::codec::LlrWord;
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ChannelSpec {
    pub esn0_db: f64,
    pub seed: u64,
}

impl ChannelSpec {
    pub fn new(esn0_db: f64, seed: u64) -> Result<Self> {
        if !esn0_db.is_finite() {
            return Err(Error::InvalidParameter(format!("esn0_db must be finite, got {esn0_db}")));
        }
        Ok(Self { esn0_db, seed })
    }

    pub fn noise_variance(&self) -> f64 {
        noise_variance(self.esn0_db)
    }
}

pub fn noise_variance(esn0_db: f64) -> f64 {
    10f64.powf(-esn0_db / 10.0) / 2.0
}

/// SplitMix64 finaliser, used to derive stream keys.
pub(crate) fn mix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Deterministic pseudorandom stream keyed by `(seed, stream)`.
///
/// Backed by ChaCha8 with the stream id in the cipher's stream word, so
/// streams sharing a seed are disjoint. Identical keys yield identical draws
/// on every platform.
#[derive(Clone, Debug)]
pub struct RngStream {
    seed: u64,
    stream: u64,
    rng: ChaCha8Rng,
}

impl RngStream {
    pub fn new(seed: u64, stream: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(stream);
        Self { seed, stream, rng }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn stream(&self) -> u64 {
        self.stream
    }

    /// Independent child stream `id`; depends only on this stream's key.
    pub fn derive(&self, id: u64) -> Self {
        Self::new(mix64(self.seed ^ mix64(self.stream)), id)
    }
}

impl RngCore for RngStream {
    fn next_u32(&mut self) -> u32 {
        self.rng.next_u32()
    }

    fn next_u64(&mut self) -> u64 {
        self.rng.next_u64()
    }

    fn fill_bytes(&mut self, dst: &mut [u8]) {
        self.rng.fill_bytes(dst)
    }
}

/// Transmit `codeword` as `1 - 2b` and return channel LLRs `2y/σ²`.
pub fn bpsk_awgn_llr(codeword: &[u8], spec: &ChannelSpec, rng: &mut RngStream) -> LlrWord {
    let mut out = vec![0.0; codeword.len()];
    bpsk_awgn_llr_into(codeword, spec.esn0_db, rng, &mut out);
    LlrWord::new(out).expect("finite noise yields finite LLRs")
}

pub(crate) fn bpsk_awgn_llr_into(
    codeword: &[u8],
    esn0_db: f64,
    rng: &mut impl Rng,
    out: &mut [f64],
) {
    let var = noise_variance(esn0_db);
    let sigma = var.sqrt();
    let scale = 2.0 / var;
    for (o, &b) in out.iter_mut().zip(codeword) {
        let s = if b == 0 { 1.0 } else { -1.0 };
        let noise: f64 = rng.sample(StandardNormal);
        *o = scale * (s + sigma * noise);
    }
}
