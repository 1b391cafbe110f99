//! Measurement synthesis: `y = Q(C mod(D B x, R))`.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::block::{apply_block_stack, BlockDiagStack, BlockKind};
use crate::error::{Error, Result};
use crate::rng::{seeded_uniform, subseed, Domain};
use crate::sensing::SensingMatrix;
use crate::types::{BitLayout, BitMeasurements, MeasurementMode, ModelConfig, RealVector, Role};

/// `v - range * floor(v / range)`, always in `[0, range)`.
pub fn modulo(v: &[f64], range: f64) -> Result<Vec<f64>> {
    if !(range > 0.0) || !range.is_finite() {
        return Err(Error::domain(format!(
            "modulo range must be positive, got {range}"
        )));
    }
    v.iter()
        .map(|&x| {
            if !x.is_finite() {
                return Err(Error::domain(format!("cannot wrap non-finite value {x}")));
            }
            Ok(wrap(x, range))
        })
        .collect()
}

#[inline]
pub(crate) fn wrap(x: f64, range: f64) -> f64 {
    let r = x - range * (x / range).floor();
    // tiny negative inputs round up to exactly `range`
    if r >= range || r < 0.0 {
        0.0
    } else {
        r
    }
}

/// One-bit quantizer: 0 if `v <= delta`, 1 otherwise.
///
/// The threshold applies on all of `[0, inf)`, since harmonic gains push
/// products up to `k * delta`.
pub fn quantize(v: &[f64], delta: f64) -> Result<Vec<bool>> {
    if !(delta > 0.0) {
        return Err(Error::domain(format!(
            "delta must be positive, got {delta}"
        )));
    }
    v.iter()
        .map(|&x| {
            if !(x >= 0.0) {
                return Err(Error::domain(format!("quantizer input {x} is negative")));
            }
            Ok(x > delta)
        })
        .collect()
}

/// Harmonic gains `c_0 = 1`, `c_j = k / (k - j)` after a 0 bit or
/// `k / (k + j)` after a 1 bit.
pub fn harmonic_multipliers(k: usize, first_bit: bool) -> Vec<f64> {
    assert!(k >= 1, "k must be at least 1");
    let kf = k as f64;
    std::iter::once(1.0)
        .chain((1..k).map(|j| {
            let j = j as f64;
            if first_bit {
                kf / (kf + j)
            } else {
                kf / (kf - j)
            }
        }))
        .collect()
}

/// Quantizer gain stack for the adaptive scheme, given each scalar's first bit.
pub fn harmonic_stack_adaptive(first_bits: &[bool], k: usize) -> Result<BlockDiagStack> {
    if k == 0 {
        return Err(Error::domain("k must be at least 1"));
    }
    let p = first_bits.len();
    let rising = harmonic_multipliers(k, false);
    let falling = harmonic_multipliers(k, true);
    let mut gains = vec![0.0; k * p];
    for (i, &bit) in first_bits.iter().enumerate() {
        let col = if bit { &falling } else { &rising };
        for (j, &c) in col.iter().enumerate() {
            gains[j * p + i] = c;
        }
    }
    BlockDiagStack::from_flat(k, p, gains, BlockKind::CHarmonicAdaptive)
}

/// Gains of the `2k - 1` non-adaptive looks: `c_0`, then the rising branch
/// for `j = 1..k`, then the falling branch for `j = 1..k`.
pub fn nonadaptive_gains(k: usize) -> Vec<f64> {
    let rising = harmonic_multipliers(k, false);
    let falling = harmonic_multipliers(k, true);
    std::iter::once(1.0)
        .chain(rising[1..].iter().copied())
        .chain(falling[1..].iter().copied())
        .collect()
}

/// Look indices of the non-adaptive layout that form the branch selected by
/// `first_bit`, in adaptive order.
pub fn nonadaptive_branch(k: usize, first_bit: bool) -> Vec<usize> {
    let offset = if first_bit { k - 1 } else { 0 };
    std::iter::once(0)
        .chain((1..k).map(|j| j + offset))
        .collect()
}

pub fn harmonic_stack_nonadaptive(p: usize, k: usize) -> Result<BlockDiagStack> {
    if k == 0 {
        return Err(Error::domain("k must be at least 1"));
    }
    let gains = nonadaptive_gains(k)
        .into_iter()
        .flat_map(|c| std::iter::repeat_n(c, p))
        .collect();
    BlockDiagStack::from_flat(2 * k - 1, p, gains, BlockKind::CHarmonicNonadaptive)
}

fn check_quantizer_domain(u: &[f64], delta: f64) -> Result<()> {
    if !(delta > 0.0) {
        return Err(Error::domain(format!(
            "delta must be positive, got {delta}"
        )));
    }
    if let Some(i) = u.iter().position(|x| !(0.0..=2.0 * delta).contains(x)) {
        return Err(Error::domain(format!(
            "quantizer input {} at position {i} lies outside [0, {}]",
            u[i],
            2.0 * delta
        )));
    }
    Ok(())
}

fn bits_from(quantized: Vec<bool>, layout: BitLayout) -> BitMeasurements {
    BitMeasurements::from_bits(&quantized, layout).expect("layout matches stack output")
}

/// Adaptive harmonic measurements of `u`: `k` looks per scalar.
pub fn measure_adaptive(u: &[f64], k: usize, delta: f64) -> Result<BitMeasurements> {
    check_quantizer_domain(u, delta)?;
    if k == 0 {
        return Err(Error::domain("k must be at least 1"));
    }
    let first = quantize(u, delta)?;
    let c = harmonic_stack_adaptive(&first, k)?;
    let layout = BitLayout {
        mode: MeasurementMode::Adaptive,
        k,
        p: u.len(),
    };
    Ok(bits_from(
        quantize(&apply_block_stack(&c, u)?, delta)?,
        layout,
    ))
}

/// Non-adaptive harmonic measurements of `u`: `2k - 1` looks per scalar.
pub fn measure_nonadaptive(u: &[f64], k: usize, delta: f64) -> Result<BitMeasurements> {
    check_quantizer_domain(u, delta)?;
    if k == 0 {
        return Err(Error::domain("k must be at least 1"));
    }
    let c = harmonic_stack_nonadaptive(u.len(), k)?;
    let layout = BitLayout {
        mode: MeasurementMode::Nonadaptive,
        k,
        p: u.len(),
    };
    Ok(bits_from(
        quantize(&apply_block_stack(&c, u)?, delta)?,
        layout,
    ))
}

pub fn measure(u: &[f64], k: usize, delta: f64, mode: MeasurementMode) -> Result<BitMeasurements> {
    match mode {
        MeasurementMode::Adaptive => measure_adaptive(u, k, delta),
        MeasurementMode::Nonadaptive => measure_nonadaptive(u, k, delta),
    }
}

/// Recipe for the modulo gain stack `D`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DRecipe {
    /// Entries uniform on `[-t_bound, t_bound]`.
    Random { t_bound: f64 },
    /// Block `r` (1-based) is the constant `2^(9 - r)`.
    Geometric,
    /// Every block is the identity.
    Ones,
}

/// Builds the `k'` blocks of size `q`.
pub fn build_d(config: &ModelConfig, recipe: DRecipe) -> Result<BlockDiagStack> {
    let (kp, q) = (config.k_prime, config.q);
    match recipe {
        DRecipe::Random { t_bound } => {
            if !(t_bound > 0.0) || !t_bound.is_finite() {
                return Err(Error::domain(format!(
                    "gain bound T must be positive, got {t_bound}"
                )));
            }
            let seed = subseed(config.seed, Domain::ModuloGains);
            let gains = (0..kp * q)
                .into_par_iter()
                .map(|idx| seeded_uniform(seed, idx as u64, -t_bound, t_bound))
                .collect::<Result<Vec<_>>>()?;
            BlockDiagStack::from_flat(kp, q, gains, BlockKind::DRandom)
        }
        DRecipe::Geometric => {
            if kp > 9 {
                return Err(Error::domain(format!(
                    "geometric gains need k' <= 9, got {kp}"
                )));
            }
            let gains = (1..=kp)
                .flat_map(|r| std::iter::repeat_n(geometric_gain(r), q))
                .collect();
            BlockDiagStack::from_flat(kp, q, gains, BlockKind::DGeometric)
        }
        DRecipe::Ones => BlockDiagStack::ones(kp, q),
    }
}

/// Gain of 1-based block `r` in the geometric design.
pub fn geometric_gain(r: usize) -> f64 {
    2f64.powi(9 - r as i32)
}

/// Measurements plus the noiseless intermediates, which only test harnesses
/// and error reports may read.
#[derive(Debug, Clone)]
pub struct ForwardOutput {
    pub y: BitMeasurements,
    pub oracle: ForwardOracle,
}

#[derive(Debug, Clone)]
pub struct ForwardOracle {
    pub z: RealVector,
    pub u: RealVector,
}

/// Computes `y = Q(C mod(D B x, R))` in the configured mode.
pub fn forward_model(
    x: &[f64],
    config: &ModelConfig,
    d: &BlockDiagStack,
    b: &SensingMatrix,
) -> Result<ForwardOutput> {
    config.validate()?;
    if x.len() != config.n {
        return Err(Error::shape(format!(
            "signal has length {}, config expects n = {}",
            x.len(),
            config.n
        )));
    }
    if b.rows() != config.q || b.cols() != config.n {
        return Err(Error::shape(format!(
            "B is {}x{}, config expects {}x{}",
            b.rows(),
            b.cols(),
            config.q,
            config.n
        )));
    }
    if d.block_size() != config.q || d.num_blocks() != config.k_prime {
        return Err(Error::shape(format!(
            "D has {} blocks of size {}, config expects {} of size {}",
            d.num_blocks(),
            d.block_size(),
            config.k_prime,
            config.q
        )));
    }
    let z = RealVector::new(b.apply(x)?, Role::Z)?;
    let u = modulo(&apply_block_stack(d, &z)?, config.range())?;
    let y = measure(&u, config.k, config.delta, config.mode)?;
    Ok(ForwardOutput {
        y,
        oracle: ForwardOracle {
            z,
            u: RealVector::from_trusted(u, Role::U),
        },
    })
}
