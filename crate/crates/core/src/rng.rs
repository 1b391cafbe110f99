//! Deterministic random streams keyed by `(seed, stream_index)`.
//!
//! Every random quantity in the toolkit is drawn from its own ChaCha8 stream
//! selected by an absolute index (a scalar position, a block entry, a trial),
//! so the result never depends on evaluation order or thread count.

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

/// Independent purposes that draw randomness from one user seed.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Domain {
    ModuloGains,
    SensingSigns,
    SensingRows,
    SensingGaussian,
    Dequantize,
    Trial,
    Synthetic,
}

impl Domain {
    fn tag(self) -> u64 {
        match self {
            Domain::ModuloGains => 0x4d4f_4447,
            Domain::SensingSigns => 0x5349_474e,
            Domain::SensingRows => 0x524f_5753,
            Domain::SensingGaussian => 0x4741_5553,
            Domain::Dequantize => 0x4445_5155,
            Domain::Trial => 0x5452_4941,
            Domain::Synthetic => 0x5359_4e54,
        }
    }
}

/// Generator for stream `stream_index` under `seed`.
pub fn stream_rng(seed: u64, stream_index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream_index);
    rng
}

/// Derives the seed used for `domain` from a user seed.
pub fn subseed(seed: u64, domain: Domain) -> u64 {
    stream_rng(seed, domain.tag()).next_u64()
}

/// Seed of trial `trial` in a sweep rooted at `seed`.
pub fn trial_seed(seed: u64, trial: u64) -> u64 {
    stream_rng(subseed(seed, Domain::Trial), trial).next_u64()
}

/// Deterministic draw from `[lo, hi)` for the given `(seed, stream_index)`.
///
/// `lo == hi` returns `lo`.
pub fn seeded_uniform(seed: u64, stream_index: u64, lo: f64, hi: f64) -> Result<f64> {
    if !(lo <= hi) || !lo.is_finite() || !hi.is_finite() {
        return Err(Error::domain(format!(
            "uniform interval [{lo}, {hi}) is empty or not finite"
        )));
    }
    if lo == hi {
        return Ok(lo);
    }
    let unit: f64 = stream_rng(seed, stream_index).random();
    Ok(scale_unit(unit, lo, hi))
}

pub(crate) fn scale_unit(unit: f64, lo: f64, hi: f64) -> f64 {
    let v = lo + (hi - lo) * unit;
    if v >= hi {
        hi.next_down()
    } else {
        v
    }
}
