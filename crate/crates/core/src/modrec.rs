//! Modulo recovery: estimate `z` from the dequantized modulo outputs.
//!
//! Each `z_l` is seen through `k'` wrapped products `mod(t_r z_l, R)`. Mapping
//! them to the unit circle with `exp(i 2 pi u / R)` turns the wrap into a
//! phase, and `z_l` becomes the frequency of a signal sampled at times `t_r`,
//! found by matched filtering over a grid. Geometric gains admit a direct
//! coarse-to-fine unwrap instead.

use std::f64::consts::TAU;

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::block::BlockDiagStack;
use crate::error::{Error, Result};
use crate::types::{FreqGrid, ModelConfig, RealVector, Role};

/// Template family used by the matched filter.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MfVariant {
    #[default]
    ComplexExp,
    RealSine,
}

/// Grid search schedule.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SearchStrategy {
    #[default]
    Exhaustive,
    /// Every `factor`-th grid point, then every point within `factor` of the
    /// coarse winner. Matches exhaustive search on noiseless inputs.
    CoarseToFine { factor: usize },
}

/// Matched-filter problem for one scalar `z_l`.
#[derive(Debug, Clone)]
pub struct MatchedFilterProblem {
    phases: Vec<Complex64>,
    times: Vec<f64>,
    grid: FreqGrid,
    range: f64,
    variant: MfVariant,
}

impl MatchedFilterProblem {
    pub fn new(
        phases: Vec<Complex64>,
        times: Vec<f64>,
        grid: FreqGrid,
        range: f64,
        variant: MfVariant,
    ) -> Result<Self> {
        if phases.len() != times.len() {
            return Err(Error::shape(format!(
                "{} phases but {} sample times",
                phases.len(),
                times.len()
            )));
        }
        if !(range > 0.0) {
            return Err(Error::domain(format!(
                "range must be positive, got {range}"
            )));
        }
        Ok(MatchedFilterProblem {
            phases,
            times,
            grid,
            range,
            variant,
        })
    }

    pub fn phases(&self) -> &[Complex64] {
        &self.phases
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn grid(&self) -> &FreqGrid {
        &self.grid
    }

    /// Objective at candidate `v`.
    pub fn score(&self, v: f64) -> f64 {
        let w = TAU * v / self.range;
        match self.variant {
            MfVariant::ComplexExp => self
                .phases
                .iter()
                .zip(&self.times)
                .map(|(phi, t)| phi * Complex64::from_polar(1.0, -w * t))
                .sum::<Complex64>()
                .norm(),
            MfVariant::RealSine => {
                let (mut corr, mut energy) = (0.0, 0.0);
                for (phi, t) in self.phases.iter().zip(&self.times) {
                    let psi = (w * t).sin();
                    corr += phi.im * psi;
                    energy += psi * psi;
                }
                2.0 * corr.abs() - energy
            }
        }
    }
}

/// Unit phasor for a modulo output: `exp(i 2 pi u / R)`.
pub fn phase_of(u: f64, range: f64) -> Complex64 {
    Complex64::from_polar(1.0, TAU * u / range)
}

/// Collects the `k'` observations of scalar `l` (0-based) from `u_hat`.
pub fn build_problem(
    u_hat: &[f64],
    d: &BlockDiagStack,
    l: usize,
    range: f64,
    grid: FreqGrid,
    variant: MfVariant,
) -> Result<MatchedFilterProblem> {
    let q = d.block_size();
    if u_hat.len() != d.output_len() {
        return Err(Error::shape(format!(
            "u_hat has length {}, D produces {}",
            u_hat.len(),
            d.output_len()
        )));
    }
    if l >= q {
        return Err(Error::Index {
            position: l,
            len: q,
        });
    }
    let phases = (0..d.num_blocks())
        .map(|r| phase_of(u_hat[r * q + l], range))
        .collect();
    MatchedFilterProblem::new(phases, d.column(l), grid, range, variant)
}

/// Best grid value and its objective.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MatchEstimate {
    pub value: f64,
    pub score: f64,
}

/// Grid search for the template best matching the observations.
/// Ties go to the smallest grid value.
pub fn matched_filter(problem: &MatchedFilterProblem, search: SearchStrategy) -> MatchEstimate {
    let grid = problem.grid;
    let len = grid.len();
    let best_in = |indices: &mut dyn Iterator<Item = usize>| -> (usize, f64) {
        let mut best = (usize::MAX, f64::NEG_INFINITY);
        for j in indices {
            let s = problem.score(grid.value(j));
            if s > best.1 || (s == best.1 && j < best.0) {
                best = (j, s);
            }
        }
        best
    };
    let (j, score) = match search {
        SearchStrategy::CoarseToFine { factor } if factor > 1 && len > factor => {
            let mut coarse = (0..len).step_by(factor).chain(std::iter::once(len - 1));
            let (jc, _) = best_in(&mut coarse);
            let lo = jc.saturating_sub(factor);
            let hi = (jc + factor).min(len - 1);
            best_in(&mut (lo..=hi))
        }
        _ => best_in(&mut (0..len)),
    };
    MatchEstimate {
        value: grid.value(j),
        score,
    }
}

/// Matched-filter estimate of every `z_l`, `l = 0..q`.
pub fn recover_z(
    u_hat: &[f64],
    d: &BlockDiagStack,
    range: f64,
    grid: FreqGrid,
    variant: MfVariant,
    search: SearchStrategy,
) -> Result<RealVector> {
    let values = (0..d.block_size())
        .into_par_iter()
        .map(|l| {
            let problem = build_problem(u_hat, d, l, range, grid, variant)?;
            Ok(matched_filter(&problem, search).value)
        })
        .collect::<Result<Vec<f64>>>()?;
    Ok(RealVector::from_trusted(values, Role::ZHat))
}

/// Whether random gains in `[-t_bound, t_bound]` keep the grid inside the
/// empirically identifiable regime `T * max|grid| <= 50 R`.
pub fn aliasing_guard_ok(t_bound: f64, grid: &FreqGrid, range: f64) -> bool {
    t_bound * grid.max_abs() <= 50.0 * range
}

/// Result of geometric-gain unwrapping.
#[derive(Debug, Clone)]
pub struct MultishotOutput {
    pub z_hat: RealVector,
    /// Scalars whose unwrap chain left the search set or hit the wrap limit.
    pub failures: Vec<bool>,
}

impl MultishotOutput {
    pub fn failure_count(&self) -> usize {
        self.failures.iter().filter(|f| **f).count()
    }
}

#[inline]
fn centered(x: f64, range: f64) -> f64 {
    x - range * (x / range).round()
}

/// Coarse-to-fine unwrapping with gains decreasing over the blocks.
///
/// The smallest-gain look is decoded as the unique value within half a
/// period of the centre of `omega`; each larger-gain look then picks the
/// wrap count closest to the running estimate and refines it.
/// `omega` bounds `z`, and the smallest gain times its width must stay
/// below `R` for that first look to be unambiguous.
pub fn recover_z_multishot(
    u_hat: &[f64],
    d: &BlockDiagStack,
    config: &ModelConfig,
    omega: &FreqGrid,
) -> Result<MultishotOutput> {
    let (q, kp) = (d.block_size(), d.num_blocks());
    if u_hat.len() != d.output_len() {
        return Err(Error::shape(format!(
            "u_hat has length {}, D produces {}",
            u_hat.len(),
            d.output_len()
        )));
    }
    for l in 0..q {
        let col = d.column(l);
        if col.iter().any(|g| !(*g > 0.0)) || col.windows(2).any(|w| !(w[0] > w[1])) {
            return Err(Error::domain(format!(
                "multi-shot unwrapping needs positive gains decreasing across blocks; column {l} is {col:?}"
            )));
        }
    }
    let range = config.range();
    let tol = config.bin_width();
    let center = omega.center();
    let (lo, hi) = (omega.lo(), omega.hi());

    let (values, failures): (Vec<f64>, Vec<bool>) = (0..q)
        .into_par_iter()
        .map(|l| {
            let g = d.column(l);
            let max_wraps = (g[0] * omega.max_abs() / range).ceil() as i64 + 1;
            let coarse = kp - 1;
            let mut z =
                center + centered(u_hat[coarse * q + l] - g[coarse] * center, range) / g[coarse];
            let mut failed = false;
            for r in (0..coarse).rev() {
                let u = u_hat[r * q + l];
                let mut w = ((g[r] * z - u) / range).round() as i64;
                if w.abs() > max_wraps {
                    w = w.clamp(-max_wraps, max_wraps);
                    failed = true;
                }
                z = (u + w as f64 * range) / g[r];
            }
            let slack = tol / g[0];
            if z < lo - slack || z > hi + slack {
                failed = true;
            }
            (z, failed)
        })
        .unzip();
    Ok(MultishotOutput {
        z_hat: RealVector::from_trusted(values, Role::ZHat),
        failures,
    })
}
