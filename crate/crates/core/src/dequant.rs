//! Harmonic dequantization: bits back to an estimate of the modulo output.
//!
//! With `k` harmonic looks, the `2k` possible bit patterns of one scalar
//! identify one of `2k` cells of equal width `delta / k` tiling `[0, 2 delta]`.
//! Cell `c` covers `[c, c + 1] * delta / k`.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::forward::nonadaptive_branch;
use crate::rng::{scale_unit, stream_rng, subseed, Domain};
use crate::types::{BitMeasurements, MeasurementMode, ModelConfig, RealVector, Role};

/// How a point is picked inside the decoded cell.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PointRule {
    /// Uniform draw, seeded per scalar position.
    #[default]
    Random,
    Midpoint,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DecodedInterval {
    pub lo: f64,
    pub hi: f64,
    /// Cell index in `0..2k`; `lo = delta * cell / k`.
    pub cell: usize,
    /// First look whose bit differs from the first bit, if any.
    pub j_star: Option<usize>,
    pub first_bit: bool,
}

impl DecodedInterval {
    pub fn width(&self) -> f64 {
        self.hi - self.lo
    }

    pub fn midpoint(&self) -> f64 {
        0.5 * (self.lo + self.hi)
    }
}

/// Decodes one scalar's `k` adaptive bits.
///
/// Only the first flip counts; anything after it is ignored.
pub fn decode_interval(bits: &[bool], delta: f64, k: usize) -> Result<DecodedInterval> {
    if k == 0 || bits.len() != k {
        return Err(Error::shape(format!(
            "expected {k} bits per scalar, got {}",
            bits.len()
        )));
    }
    if !(delta > 0.0) {
        return Err(Error::domain(format!(
            "delta must be positive, got {delta}"
        )));
    }
    let first_bit = bits[0];
    let j_star = (1..k).find(|&j| bits[j] != first_bit);
    let cell = match (first_bit, j_star) {
        (false, Some(j)) => k - j,
        (false, None) => 0,
        (true, Some(j)) => k + j - 1,
        (true, None) => 2 * k - 1,
    };
    let kf = k as f64;
    Ok(DecodedInterval {
        lo: delta * cell as f64 / kf,
        hi: delta * (cell + 1) as f64 / kf,
        cell,
        j_star,
        first_bit,
    })
}

/// Minimum `k` for a `epsilon * delta` accuracy: `ceil(1 / epsilon)`.
pub fn required_k(epsilon: f64) -> Result<usize> {
    if !(epsilon > 0.0 && epsilon <= 1.0) {
        return Err(Error::domain(format!(
            "relative accuracy must lie in (0, 1], got {epsilon}"
        )));
    }
    // absorb representation error in values like 1/0.2
    Ok((1.0 / epsilon - 1e-9).ceil().max(1.0) as usize)
}

/// Relative margin kept from both cell edges by the random rule, so the
/// estimate re-quantizes to the same bits under floating-point gains.
const EDGE_MARGIN: f64 = 1e-9;

/// Estimates `u` from `y`, one cell decode per scalar.
pub fn hm_dequantize(
    y: &BitMeasurements,
    config: &ModelConfig,
    rule: PointRule,
) -> Result<RealVector> {
    let layout = y.layout();
    if layout.k != config.k || layout.mode != config.mode {
        return Err(Error::shape(format!(
            "bit layout ({:?}, k = {}) does not match config ({:?}, k = {})",
            layout.mode, layout.k, config.mode, config.k
        )));
    }
    if layout.p != config.p() {
        return Err(Error::shape(format!(
            "bit layout has {} scalars, config expects p = {}",
            layout.p,
            config.p()
        )));
    }
    let (k, delta) = (config.k, config.delta);
    let seed = subseed(config.seed, Domain::Dequantize);
    let values = (0..layout.p)
        .into_par_iter()
        .map(|i| {
            let all = y.scalar_bits(i);
            let bits = match layout.mode {
                MeasurementMode::Adaptive => all,
                MeasurementMode::Nonadaptive => nonadaptive_branch(k, all[0])
                    .into_iter()
                    .map(|look| all[look])
                    .collect(),
            };
            let cell = decode_interval(&bits, delta, k)?;
            Ok(match rule {
                PointRule::Midpoint => cell.midpoint(),
                PointRule::Random => {
                    use rand::Rng;
                    let unit: f64 = stream_rng(seed, i as u64).random();
                    let margin = EDGE_MARGIN * cell.width();
                    scale_unit(unit, cell.lo + margin, cell.hi - margin)
                }
            })
        })
        .collect::<Result<Vec<f64>>>()?;
    Ok(RealVector::from_trusted(values, Role::UHat))
}

pub mod oracle {
    //! Exhaustive-search decoding, independent of the closed-form cells.

    use crate::forward::measure_adaptive;

    /// Every candidate `u` on a uniform grid over `[0, 2 delta]` together
    /// with its adaptive bit pattern.
    pub struct BruteForceTable {
        k: usize,
        samples: Vec<f64>,
        patterns: Vec<Vec<bool>>,
    }

    impl BruteForceTable {
        pub fn new(delta: f64, k: usize, steps: usize) -> Self {
            let samples: Vec<f64> = (0..=steps)
                .map(|j| 2.0 * delta * j as f64 / steps as f64)
                .collect();
            let y =
                measure_adaptive(&samples, k, delta).expect("grid lies in the quantizer domain");
            let patterns = (0..samples.len()).map(|i| y.scalar_bits(i)).collect();
            BruteForceTable {
                k,
                samples,
                patterns,
            }
        }

        pub fn resolution(&self) -> f64 {
            self.samples[1] - self.samples[0]
        }

        /// Hull `(min, max)` of grid candidates whose bits equal `bits`.
        pub fn decode(&self, bits: &[bool]) -> Option<(f64, f64)> {
            assert_eq!(bits.len(), self.k);
            let mut hull: Option<(f64, f64)> = None;
            for (u, pattern) in self.samples.iter().zip(&self.patterns) {
                if pattern.as_slice() == bits {
                    hull = Some(match hull {
                        None => (*u, *u),
                        Some((lo, hi)) => (lo.min(*u), hi.max(*u)),
                    });
                }
            }
            hull
        }
    }

    /// One-shot brute-force decode of a single pattern.
    pub fn brute_force_decode(
        bits: &[bool],
        delta: f64,
        k: usize,
        steps: usize,
    ) -> Option<(f64, f64)> {
        BruteForceTable::new(delta, k, steps).decode(bits)
    }
}

#[cfg(test)]
mod tests {
    use super::oracle::BruteForceTable;
    use super::*;
    use crate::forward::{measure, measure_adaptive, measure_nonadaptive};
    use crate::rng::seeded_uniform;
    use proptest::prelude::*;

    fn config(p: usize, k: usize, delta: f64, mode: MeasurementMode) -> ModelConfig {
        ModelConfig::new(p, p, 1, k, delta, 0, 21, mode).unwrap()
    }

    #[test]
    fn decode_examples() {
        let d = decode_interval(&[false, false, true, true], 1.0, 4).unwrap();
        assert_eq!((d.j_star, d.lo, d.hi), (Some(2), 0.5, 0.75));
        let d = decode_interval(&[true, true, false, false], 1.0, 4).unwrap();
        assert_eq!((d.j_star, d.lo, d.hi), (Some(2), 1.25, 1.5));
        let d = decode_interval(&[false; 4], 1.0, 4).unwrap();
        assert_eq!((d.j_star, d.lo, d.hi), (None, 0.0, 0.25));
        let d = decode_interval(&[true; 4], 1.0, 4).unwrap();
        assert_eq!((d.j_star, d.lo, d.hi), (None, 1.75, 2.0));
        assert!(decode_interval(&[false; 3], 1.0, 4).is_err());
    }

    #[test]
    fn only_first_flip_counts() {
        let a = decode_interval(&[false, true, false, true], 1.0, 4).unwrap();
        let b = decode_interval(&[false, true, true, true], 1.0, 4).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn required_k_examples() {
        assert_eq!(required_k(0.2).unwrap(), 5);
        assert_eq!(required_k(1.0).unwrap(), 1);
        assert_eq!(required_k(0.15).unwrap(), 7);
        assert_eq!(required_k(0.1).unwrap(), 10);
        assert!(required_k(0.0).is_err());
        assert!(required_k(1.5).is_err());
    }

    #[test]
    fn midpoint_example() {
        let c = config(1, 4, 1.0, MeasurementMode::Adaptive);
        let y = measure_adaptive(&[0.6], 4, 1.0).unwrap();
        let u = hm_dequantize(&y, &c, PointRule::Midpoint).unwrap();
        assert_eq!(u.values(), &[0.625]);
    }

    #[test]
    fn single_look_bins() {
        let c = config(2, 1, 1.0, MeasurementMode::Adaptive);
        let y = measure_adaptive(&[0.3, 1.6], 1, 1.0).unwrap();
        let u = hm_dequantize(&y, &c, PointRule::Midpoint).unwrap();
        assert_eq!(u.values(), &[0.5, 1.5]);
    }

    #[test]
    fn layout_mismatch() {
        let y = measure_adaptive(&[0.3, 1.6], 2, 1.0).unwrap();
        assert!(hm_dequantize(
            &y,
            &config(2, 3, 1.0, MeasurementMode::Adaptive),
            PointRule::Random
        )
        .is_err());
        assert!(hm_dequantize(
            &y,
            &config(3, 2, 1.0, MeasurementMode::Adaptive),
            PointRule::Random
        )
        .is_err());
        assert!(hm_dequantize(
            &y,
            &config(2, 2, 1.0, MeasurementMode::Nonadaptive),
            PointRule::Random
        )
        .is_err());
    }

    #[test]
    fn brute_force_matches_all_patterns() {
        for k in 1..=10 {
            let table = BruteForceTable::new(1.0, k, 20_000);
            let res = table.resolution();
            for cell in 0..2 * k {
                // the pattern the forward model emits for the cell's interior
                let u = (cell as f64 + 0.5) / k as f64;
                let bits = measure_adaptive(&[u], k, 1.0).unwrap().to_bits();
                let d = decode_interval(&bits, 1.0, k).unwrap();
                assert_eq!(d.cell, cell);
                let (lo, hi) = table.decode(&bits).expect("nonempty hull");
                assert!(
                    lo >= d.lo - 1e-12 && lo - d.lo <= res + 1e-12,
                    "k={k} cell={cell}"
                );
                assert!(
                    hi <= d.hi + 1e-12 && d.hi - hi <= res + 1e-12,
                    "k={k} cell={cell}"
                );
            }
        }
    }

    #[test]
    fn random_scalars_agree_with_brute_force() {
        for k in 1..=10 {
            let table = BruteForceTable::new(1.0, k, 10_000);
            for i in 0..1000 {
                let u = seeded_uniform(k as u64, i, 0.0, 2.0).unwrap();
                let bits = measure_adaptive(&[u], k, 1.0).unwrap().to_bits();
                let d = decode_interval(&bits, 1.0, k).unwrap();
                let (lo, hi) = table.decode(&bits).expect("forward bits always decode");
                assert!((lo - d.lo).abs() <= table.resolution() + 1e-12);
                assert!((hi - d.hi).abs() <= table.resolution() + 1e-12);
            }
        }
    }

    #[test]
    fn consistency_both_modes() {
        let p = 2000;
        let delta = 3.0;
        for mode in [MeasurementMode::Adaptive, MeasurementMode::Nonadaptive] {
            for k in [1, 2, 3, 7, 16] {
                let u: Vec<f64> = (0..p as u64)
                    .map(|i| seeded_uniform(k as u64 + 100, i, 0.0, 2.0 * delta).unwrap())
                    .collect();
                let c = config(p, k, delta, mode);
                let y = measure(&u, k, delta, mode).unwrap();
                for rule in [PointRule::Random, PointRule::Midpoint] {
                    let u_hat = hm_dequantize(&y, &c, rule).unwrap();
                    assert_eq!(measure(&u_hat, k, delta, mode).unwrap(), y);
                }
            }
        }
    }

    #[test]
    fn nonadaptive_decodes_like_adaptive() {
        let u: Vec<f64> = (0..500).map(|i| i as f64 * 2.0 / 500.0).collect();
        let ya = measure_adaptive(&u, 5, 1.0).unwrap();
        let yn = measure_nonadaptive(&u, 5, 1.0).unwrap();
        let a = hm_dequantize(
            &ya,
            &config(500, 5, 1.0, MeasurementMode::Adaptive),
            PointRule::Midpoint,
        )
        .unwrap();
        let n = hm_dequantize(
            &yn,
            &config(500, 5, 1.0, MeasurementMode::Nonadaptive),
            PointRule::Midpoint,
        )
        .unwrap();
        assert_eq!(a, RealVector::from_trusted(n.into_values(), Role::UHat));
    }

    #[test]
    fn random_rule_is_reproducible() {
        let u: Vec<f64> = (0..64).map(|i| i as f64 / 32.0).collect();
        let y = measure_adaptive(&u, 6, 1.0).unwrap();
        let c = config(64, 6, 1.0, MeasurementMode::Adaptive);
        let a = hm_dequantize(&y, &c, PointRule::Random).unwrap();
        let b = hm_dequantize(&y, &c, PointRule::Random).unwrap();
        assert_eq!(a, b);
    }

    proptest! {
        #[test]
        fn error_below_bin_width(u in 0.0..=2.0f64, k in 1usize..33, midpoint in any::<bool>()) {
            let rule = if midpoint { PointRule::Midpoint } else { PointRule::Random };
            let y = measure_adaptive(&[u], k, 1.0).unwrap();
            let u_hat = hm_dequantize(&y, &config(1, k, 1.0, MeasurementMode::Adaptive), rule).unwrap();
            prop_assert!((u_hat[0] - u).abs() < 1.0 / k as f64);
        }

        #[test]
        fn forward_bits_flip_at_most_once(u in 0.0..=2.0f64, k in 1usize..33) {
            let bits = measure_adaptive(&[u], k, 1.0).unwrap().to_bits();
            let flips = bits.windows(2).filter(|w| w[0] != w[1]).count();
            prop_assert!(flips <= 1);
        }
    }

    #[test]
    fn cells_tile_the_domain() {
        for k in 1..=32 {
            let mut cells: Vec<usize> = Vec::new();
            for first in [false, true] {
                let jstars: Vec<Option<usize>> =
                    std::iter::once(None).chain((1..k).map(Some)).collect();
                for j in jstars {
                    let mut bits = vec![first; k];
                    if let Some(j) = j {
                        for b in &mut bits[j..] {
                            *b = !first;
                        }
                    }
                    cells.push(decode_interval(&bits, 1.0, k).unwrap().cell);
                }
            }
            cells.sort_unstable();
            assert_eq!(cells, (0..2 * k).collect::<Vec<_>>());
        }
    }
}
