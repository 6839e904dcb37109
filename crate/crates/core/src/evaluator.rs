//! Monte-Carlo BLER estimation, the `-log10 BLER` reward with memoisation,
//! and EsN0 bisection for relative-performance reports.
//!
//! Randomness follows a per-state seed policy: the noise stream of a
//! construction is keyed by `(channel seed, hash of the mask)`, which makes
//! the reward a deterministic function of the state. Trials are simulated in
//! fixed-size chunks, chunk `j` drawing from substream `j`; chunks may run in
//! parallel but are consumed in order, so the stopping point (and therefore
//! the estimate) does not depend on the number of workers.

use std::collections::HashMap;
use std::fmt;
use std::io::Write;
use std::str::FromStr;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, Mutex, OnceLock};

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::channel::{bpsk_awgn_llr_into, mix64, ChannelSpec, RngStream};
use crate::codec::{encode, Construction, SclDecoder};
use crate::error::{Error, Result};

const CHUNK_TRIALS: u64 = 64;

/// Output-selection rule applied to the SCL list.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum DecoderKind {
    /// Error iff the smallest-metric path is wrong.
    #[serde(rename = "scl-pm")]
    SclPm,
    /// Error iff the transmitted word is not in the list.
    #[serde(rename = "scl-genie")]
    SclGenie,
}

impl fmt::Display for DecoderKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            DecoderKind::SclPm => "scl-pm",
            DecoderKind::SclGenie => "scl-genie",
        })
    }
}

impl FromStr for DecoderKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().replace('_', "-").as_str() {
            "scl-pm" | "pm" => Ok(DecoderKind::SclPm),
            "scl-genie" | "genie" => Ok(DecoderKind::SclGenie),
            other => Err(Error::Parse(format!("unknown decoder {other:?}"))),
        }
    }
}

/// Everything that determines a reward value.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RewardSpec {
    pub decoder: DecoderKind,
    pub list_size: usize,
    pub channel: ChannelSpec,
    pub target_error_events: u64,
    pub max_trials: u64,
    pub bler_floor: f64,
}

impl RewardSpec {
    /// Spec with `bler_floor = 1 / max_trials`.
    pub fn new(
        decoder: DecoderKind,
        list_size: usize,
        channel: ChannelSpec,
        target_error_events: u64,
        max_trials: u64,
    ) -> Result<Self> {
        let spec = Self {
            decoder,
            list_size,
            channel,
            target_error_events,
            max_trials,
            bler_floor: 1.0 / max_trials.max(1) as f64,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidParameter(m));
        if self.list_size == 0 {
            return bad("list size must be at least 1".into());
        }
        if self.target_error_events == 0 {
            return bad("target_error_events must be at least 1".into());
        }
        if self.max_trials < self.target_error_events {
            return bad(format!(
                "max_trials ({}) must be at least target_error_events ({})",
                self.max_trials, self.target_error_events
            ));
        }
        if !(self.bler_floor > 0.0 && self.bler_floor < 1.0) {
            return bad(format!("bler_floor must lie in (0, 1), got {}", self.bler_floor));
        }
        if !self.channel.esn0_db.is_finite() {
            return bad("esn0_db must be finite".into());
        }
        Ok(())
    }

    pub fn with_esn0(&self, esn0_db: f64) -> Self {
        Self { channel: ChannelSpec { esn0_db, ..self.channel }, ..*self }
    }

    /// Stable 64-bit digest of every field, used as part of cache keys.
    pub fn fingerprint(&self) -> u64 {
        let fields = [
            match self.decoder {
                DecoderKind::SclPm => 1,
                DecoderKind::SclGenie => 2,
            },
            self.list_size as u64,
            self.channel.esn0_db.to_bits(),
            self.channel.seed,
            self.target_error_events,
            self.max_trials,
            self.bler_floor.to_bits(),
        ];
        fields.iter().fold(0x005e_ed0f_5eed, |h, &f| mix64(h ^ f))
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BlerEstimate {
    pub bler: f64,
    pub trials: u64,
    pub error_events: u64,
    /// No error was observed; `bler` is the spec's floor.
    pub floored: bool,
}

/// Noise stream assigned to a construction under `spec`'s seed.
pub fn state_stream(spec: &RewardSpec, c: &Construction) -> RngStream {
    let id = c.packed().iter().fold(mix64(c.n() as u64), |h, &w| mix64(h ^ w));
    RngStream::new(spec.channel.seed, id)
}

/// Simulate until `target_error_events` errors or `max_trials` trials.
pub fn estimate_bler(c: &Construction, spec: &RewardSpec, rng: &RngStream) -> Result<BlerEstimate> {
    spec.validate()?;
    if c.info_len() == 0 {
        return Err(Error::NoInformation);
    }
    let wave = rayon::current_num_threads().max(1) as u64;
    let total_chunks = spec.max_trials.div_ceil(CHUNK_TRIALS);
    let mut trials = 0u64;
    let mut errors = 0u64;
    let mut next_chunk = 0u64;
    'outer: while next_chunk < total_chunks {
        let end = (next_chunk + wave).min(total_chunks);
        let results: Vec<Vec<bool>> = (next_chunk..end)
            .into_par_iter()
            .map(|j| {
                let len = CHUNK_TRIALS.min(spec.max_trials - j * CHUNK_TRIALS);
                simulate_chunk(c, spec, &mut rng.derive(j), len as usize)
            })
            .collect();
        next_chunk = end;
        for outcome in results.into_iter().flatten() {
            trials += 1;
            errors += u64::from(outcome);
            if errors >= spec.target_error_events || trials >= spec.max_trials {
                break 'outer;
            }
        }
    }
    Ok(if errors == 0 {
        BlerEstimate { bler: spec.bler_floor, trials, error_events: 0, floored: true }
    } else {
        BlerEstimate { bler: errors as f64 / trials as f64, trials, error_events: errors, floored: false }
    })
}

/// Per-trial error flags for one chunk.
fn simulate_chunk(c: &Construction, spec: &RewardSpec, rng: &mut RngStream, len: usize) -> Vec<bool> {
    let mut decoder = SclDecoder::new(c, spec.list_size).expect("list size validated");
    let k = c.info_len();
    let mut info = vec![0u8; k];
    let mut llr = vec![0.0; c.n()];
    (0..len)
        .map(|_| {
            info.iter_mut().for_each(|b| *b = rng.random_range(0..2));
            let x = encode(&info, c).expect("info length matches");
            bpsk_awgn_llr_into(&x, spec.channel.esn0_db, rng, &mut llr);
            let j = decoder.judge(&llr, &info).expect("lengths match");
            match spec.decoder {
                DecoderKind::SclPm => !j.pm_correct,
                DecoderKind::SclGenie => !j.genie_correct,
            }
        })
        .collect()
}

type CacheKey = (usize, Vec<u64>, u64);

/// Memoised rewards keyed by (mask, spec fingerprint), with exactly-once
/// computation per key under concurrent access.
#[derive(Debug, Default)]
pub struct RewardCache {
    disabled: bool,
    map: Mutex<HashMap<CacheKey, Arc<OnceLock<f64>>>>,
    simulations: AtomicU64,
    trials: AtomicU64,
    hits: AtomicU64,
}

impl RewardCache {
    pub fn new() -> Self {
        Self::default()
    }

    /// A cache that never stores; every reward call simulates.
    pub fn disabled() -> Self {
        Self { disabled: true, ..Self::default() }
    }

    pub fn len(&self) -> usize {
        self.map.lock().expect("cache lock").len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Number of BLER estimations run through this cache.
    pub fn simulations(&self) -> u64 {
        self.simulations.load(Ordering::Relaxed)
    }

    /// Monte-Carlo trials simulated through this cache.
    pub fn trials(&self) -> u64 {
        self.trials.load(Ordering::Relaxed)
    }

    pub fn hits(&self) -> u64 {
        self.hits.load(Ordering::Relaxed)
    }

    pub fn get(&self, c: &Construction, spec: &RewardSpec) -> Option<f64> {
        let map = self.map.lock().expect("cache lock");
        map.get(&(c.n(), c.packed(), spec.fingerprint())).and_then(|cell| cell.get().copied())
    }

    pub fn insert(&self, c: &Construction, spec: &RewardSpec, value: f64) {
        if self.disabled {
            return;
        }
        let cell = self.cell(c, spec);
        let _ = cell.set(value);
    }

    fn cell(&self, c: &Construction, spec: &RewardSpec) -> Arc<OnceLock<f64>> {
        let mut map = self.map.lock().expect("cache lock");
        map.entry((c.n(), c.packed(), spec.fingerprint())).or_default().clone()
    }

    fn get_or_compute(&self, c: &Construction, spec: &RewardSpec, f: impl FnOnce() -> f64) -> f64 {
        if self.disabled {
            return f();
        }
        let cell = self.cell(c, spec);
        let mut computed = false;
        let value = *cell.get_or_init(|| {
            computed = true;
            f()
        });
        if !computed {
            self.hits.fetch_add(1, Ordering::Relaxed);
        }
        value
    }
}

/// `-log10 BLER` of `c`, or 0 when there is nothing to simulate:
/// `K = 0`, or a genie decoder whose list can hold every codeword
/// (`2^K ≤ L`).
pub fn reward(c: &Construction, spec: &RewardSpec, cache: &RewardCache) -> Result<f64> {
    spec.validate()?;
    let k = c.info_len();
    if k == 0 {
        return Ok(0.0);
    }
    if spec.decoder == DecoderKind::SclGenie && k < usize::BITS as usize && (1usize << k) <= spec.list_size {
        return Ok(0.0);
    }
    Ok(cache.get_or_compute(c, spec, || {
        let est = estimate_bler(c, spec, &state_stream(spec, c)).expect("spec and K validated");
        cache.simulations.fetch_add(1, Ordering::Relaxed);
        cache.trials.fetch_add(est.trials, Ordering::Relaxed);
        -est.bler.log10()
    }))
}

/// Bracket width at which bisection stops, in dB.
pub const BISECTION_RESOLUTION_DB: f64 = 0.05;
const MAX_WIDENINGS: usize = 12;

/// EsN0 (dB) at which `c` reaches `target_bler`, by bisection.
///
/// The bracket is widened outward (up to a fixed number of steps) until its
/// endpoints straddle the target. Every probe simulates with the state's
/// noise stream, so probes share noise realisations.
pub fn find_esn0_at_bler(
    c: &Construction,
    spec: &RewardSpec,
    target_bler: f64,
    bracket: (f64, f64),
) -> Result<f64> {
    if !(target_bler > 0.0 && target_bler < 1.0) {
        return Err(Error::InvalidParameter(format!("target BLER {target_bler} outside (0, 1)")));
    }
    let (mut lo, mut hi) = if bracket.0 <= bracket.1 { bracket } else { (bracket.1, bracket.0) };
    let step = (hi - lo).max(1.0);
    let stream = state_stream(spec, c);
    let bler_at = |x: f64| estimate_bler(c, &spec.with_esn0(x), &stream).map(|e| e.bler);

    let mut lo_bler = bler_at(lo)?;
    let mut hi_bler = bler_at(hi)?;
    let mut widenings = 0;
    while lo_bler < target_bler || hi_bler > target_bler {
        if widenings == MAX_WIDENINGS {
            return Err(Error::Unbracketed { target: target_bler, lo, hi });
        }
        widenings += 1;
        if lo_bler < target_bler {
            lo -= step;
            lo_bler = bler_at(lo)?;
        }
        if hi_bler > target_bler {
            hi += step;
            hi_bler = bler_at(hi)?;
        }
    }
    if lo_bler == target_bler {
        return Ok(lo);
    }
    if hi_bler == target_bler {
        return Ok(hi);
    }
    while hi - lo > BISECTION_RESOLUTION_DB {
        let mid = 0.5 * (lo + hi);
        if bler_at(mid)? > target_bler {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// One row of a BLER-versus-EsN0 sweep.
#[derive(Clone, Debug, PartialEq)]
pub struct SweepRow {
    pub n: usize,
    pub k: usize,
    pub decoder: DecoderKind,
    pub list_size: usize,
    pub esn0_db: f64,
    pub trials: u64,
    pub errors: u64,
    pub bler: f64,
}

pub fn bler_sweep(c: &Construction, spec: &RewardSpec, esn0_grid: &[f64]) -> Result<Vec<SweepRow>> {
    let stream = state_stream(spec, c);
    esn0_grid
        .iter()
        .map(|&x| {
            let est = estimate_bler(c, &spec.with_esn0(x), &stream)?;
            Ok(SweepRow {
                n: c.n(),
                k: c.info_len(),
                decoder: spec.decoder,
                list_size: spec.list_size,
                esn0_db: x,
                trials: est.trials,
                errors: est.error_events,
                bler: est.bler,
            })
        })
        .collect()
}

pub const SWEEP_CSV_HEADER: &str = "N,K,decoder,L,esn0_db,trials,errors,bler";

pub fn write_sweep_csv<W: Write>(mut out: W, rows: &[SweepRow]) -> Result<()> {
    writeln!(out, "{SWEEP_CSV_HEADER}")?;
    for r in rows {
        writeln!(
            out,
            "{},{},{},{},{},{},{},{}",
            r.n, r.k, r.decoder, r.list_size, r.esn0_db, r.trials, r.errors, r.bler
        )?;
    }
    Ok(())
}
