//! Shared domain types and index conventions.
//!
//! All indexing is 0-based. The strided sub-vector `v(i : q : (k-1)q + i)`
//! with a 1-based `i` corresponds to `strided_subvector(v, i - 1, q, k)`;
//! [`OneBased`] performs that translation at API boundaries.

use std::ops::Deref;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// How the harmonic gains of the quantizer stage are chosen.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MeasurementMode {
    /// Gains depend on the first bit of each scalar: `k` looks.
    Adaptive,
    /// Both gain branches are acquired up front: `2k - 1` looks.
    Nonadaptive,
}

impl MeasurementMode {
    /// Number of quantized looks per scalar.
    pub fn looks(self, k: usize) -> usize {
        match self {
            MeasurementMode::Adaptive => k,
            MeasurementMode::Nonadaptive => 2 * k - 1,
        }
    }
}

/// Parameters of the measurement scheme.
///
/// The modulo period is always `2 * delta` so the modulo output range and
/// the quantizer domain coincide.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub n: usize,
    pub q: usize,
    pub k_prime: usize,
    pub k: usize,
    pub delta: f64,
    pub sparsity: usize,
    pub seed: u64,
    pub mode: MeasurementMode,
}

impl ModelConfig {
    pub fn new(
        n: usize,
        q: usize,
        k_prime: usize,
        k: usize,
        delta: f64,
        sparsity: usize,
        seed: u64,
        mode: MeasurementMode,
    ) -> Result<Self> {
        let config = ModelConfig {
            n,
            q,
            k_prime,
            k,
            delta,
            sparsity,
            seed,
            mode,
        };
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.delta > 0.0) || !self.delta.is_finite() {
            return Err(Error::domain(format!(
                "delta must be positive and finite, got {}",
                self.delta
            )));
        }
        if self.k == 0 || self.k_prime == 0 {
            return Err(Error::domain("k and k_prime must be at least 1"));
        }
        if self.n == 0 || self.q == 0 {
            return Err(Error::shape("n and q must be nonzero"));
        }
        if self.q > self.n {
            return Err(Error::shape(format!(
                "q = {} exceeds n = {}",
                self.q, self.n
            )));
        }
        if self.sparsity > self.q {
            return Err(Error::shape(format!(
                "sparsity {} exceeds q = {}",
                self.sparsity, self.q
            )));
        }
        Ok(())
    }

    /// Modulo-stage length `k' * q`.
    pub fn p(&self) -> usize {
        self.k_prime * self.q
    }

    /// Modulo period `R = 2 * delta`.
    pub fn range(&self) -> f64 {
        2.0 * self.delta
    }

    /// Number of quantized looks per scalar.
    pub fn looks(&self) -> usize {
        self.mode.looks(self.k)
    }

    /// Total bit count.
    pub fn m(&self) -> usize {
        self.looks() * self.p()
    }

    /// Worst-case dequantization error `delta / k`.
    pub fn bin_width(&self) -> f64 {
        self.delta / self.k as f64
    }
}

/// What a [`RealVector`] holds in the measurement chain.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Role {
    X,
    Z,
    U,
    UHat,
    ZHat,
    XHat,
}

/// A finite real vector tagged with its role.
#[derive(Debug, Clone, PartialEq)]
pub struct RealVector {
    values: Vec<f64>,
    role: Role,
}

impl RealVector {
    pub fn new(values: Vec<f64>, role: Role) -> Result<Self> {
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::domain(format!(
                "non-finite entry {} at position {i}",
                values[i]
            )));
        }
        Ok(RealVector { values, role })
    }

    /// Like [`RealVector::new`], additionally requiring entries in `[0, range]`.
    ///
    /// The closed upper end admits the top decoding cell, which reaches `2 delta`.
    pub fn wrapped(values: Vec<f64>, role: Role, range: f64) -> Result<Self> {
        if let Some(i) = values.iter().position(|v| !(0.0..=range).contains(v)) {
            return Err(Error::domain(format!(
                "entry {} at position {i} lies outside [0, {range}]",
                values[i]
            )));
        }
        Self::new(values, role)
    }

    pub(crate) fn from_trusted(values: Vec<f64>, role: Role) -> Self {
        debug_assert!(values.iter().all(|v| v.is_finite()));
        RealVector { values, role }
    }

    pub fn role(&self) -> Role {
        self.role
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }
}

impl Deref for RealVector {
    type Target = [f64];

    fn deref(&self) -> &[f64] {
        &self.values
    }
}

/// Layout of a bit vector: `looks(k) * p` bits, block-major.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct BitLayout {
    pub mode: MeasurementMode,
    pub k: usize,
    pub p: usize,
}

impl BitLayout {
    pub fn looks(&self) -> usize {
        self.mode.looks(self.k)
    }

    pub fn len(&self) -> usize {
        self.looks() * self.p
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Position of look `look` of scalar `scalar`.
    pub fn index(&self, look: usize, scalar: usize) -> usize {
        look * self.p + scalar
    }
}

/// Packed binary measurements. Bit `look * p + i` is look `look` of scalar `i`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BitMeasurements {
    words: Vec<u64>,
    layout: BitLayout,
}

impl BitMeasurements {
    pub fn zeros(layout: BitLayout) -> Self {
        BitMeasurements {
            words: vec![0; layout.len().div_ceil(64)],
            layout,
        }
    }

    pub fn from_bits(bits: &[bool], layout: BitLayout) -> Result<Self> {
        if bits.len() != layout.len() {
            return Err(Error::shape(format!(
                "{} bits do not match layout of {} looks x {} scalars",
                bits.len(),
                layout.looks(),
                layout.p
            )));
        }
        let mut out = Self::zeros(layout);
        for (i, &b) in bits.iter().enumerate() {
            out.set(i, b);
        }
        Ok(out)
    }

    pub fn layout(&self) -> BitLayout {
        self.layout
    }

    pub fn len(&self) -> usize {
        self.layout.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn get(&self, i: usize) -> bool {
        assert!(i < self.len(), "bit {i} out of range {}", self.len());
        (self.words[i / 64] >> (i % 64)) & 1 == 1
    }

    pub fn set(&mut self, i: usize, bit: bool) {
        assert!(i < self.len(), "bit {i} out of range {}", self.len());
        let mask = 1u64 << (i % 64);
        if bit {
            self.words[i / 64] |= mask;
        } else {
            self.words[i / 64] &= !mask;
        }
    }

    pub fn iter(&self) -> impl Iterator<Item = bool> + '_ {
        (0..self.len()).map(|i| self.get(i))
    }

    pub fn to_bits(&self) -> Vec<bool> {
        self.iter().collect()
    }

    /// All looks of scalar `i`, in look order.
    pub fn scalar_bits(&self, i: usize) -> Vec<bool> {
        let layout = self.layout;
        (0..layout.looks())
            .map(|look| self.get(layout.index(look, i)))
            .collect()
    }

    /// Bytes with bit `i` at position `i % 8` of byte `i / 8`.
    pub fn to_le_bytes(&self) -> Vec<u8> {
        let nbytes = self.len().div_ceil(8);
        self.words
            .iter()
            .flat_map(|w| w.to_le_bytes())
            .take(nbytes)
            .collect()
    }

    pub fn from_le_bytes(bytes: &[u8], layout: BitLayout) -> Result<Self> {
        let nbytes = layout.len().div_ceil(8);
        if bytes.len() != nbytes {
            return Err(Error::shape(format!(
                "expected {nbytes} packed bytes, got {}",
                bytes.len()
            )));
        }
        let mut words = vec![0u64; layout.len().div_ceil(64)];
        for (i, &b) in bytes.iter().enumerate() {
            words[i / 8] |= (b as u64) << (8 * (i % 8));
        }
        let mut out = BitMeasurements { words, layout };
        // bits past the end must not leak into comparisons
        let tail = out.len() % 64;
        if tail != 0 {
            let last = out.words.len() - 1;
            out.words[last] &= (1u64 << tail) - 1;
        }
        Ok(out)
    }
}

/// A 1-based index, as used by strided notation `v(i : q : (k-1)q + i)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct OneBased(pub usize);

impl OneBased {
    pub fn zero_based(self) -> Result<usize> {
        self.0.checked_sub(1).ok_or(Error::Index {
            position: 0,
            len: 0,
        })
    }
}

/// Entries `v[start], v[start + stride], ...` (`count` of them, 0-based `start`).
pub fn strided_subvector<T: Copy>(
    v: &[T],
    start: usize,
    stride: usize,
    count: usize,
) -> Result<Vec<T>> {
    if count == 0 {
        return Ok(Vec::new());
    }
    let last = start + (count - 1) * stride;
    if last >= v.len() {
        let position = (0..count)
            .map(|r| start + r * stride)
            .find(|&pos| pos >= v.len())
            .unwrap_or(last);
        return Err(Error::Index {
            position,
            len: v.len(),
        });
    }
    Ok((0..count).map(|r| v[start + r * stride]).collect())
}

/// [`strided_subvector`] with a 1-based start; errors report 1-based positions.
pub fn strided_subvector_one_based<T: Copy>(
    v: &[T],
    start: OneBased,
    stride: usize,
    count: usize,
) -> Result<Vec<T>> {
    strided_subvector(v, start.zero_based()?, stride, count).map_err(|e| match e {
        Error::Index { position, len } => Error::Index {
            position: position + 1,
            len,
        },
        other => other,
    })
}

/// The bounded search set for matched filtering, discretized as
/// `lo, lo + resolution, ...` up to `hi`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FreqGrid {
    lo: f64,
    hi: f64,
    resolution: f64,
}

impl FreqGrid {
    pub fn new(lo: f64, hi: f64, resolution: f64) -> Result<Self> {
        if !(lo.is_finite() && hi.is_finite() && resolution.is_finite()) {
            return Err(Error::domain("grid bounds must be finite"));
        }
        if !(resolution > 0.0) {
            return Err(Error::domain(format!(
                "grid resolution must be positive, got {resolution}"
            )));
        }
        if !(lo <= hi) {
            return Err(Error::domain(format!("empty grid [{lo}, {hi}]")));
        }
        Ok(FreqGrid { lo, hi, resolution })
    }

    /// Single-point grid at `value`.
    pub fn point(value: f64) -> Result<Self> {
        Self::new(value, value, 1.0)
    }

    pub fn lo(&self) -> f64 {
        self.lo
    }

    pub fn hi(&self) -> f64 {
        self.hi
    }

    pub fn resolution(&self) -> f64 {
        self.resolution
    }

    pub fn len(&self) -> usize {
        // tolerate hi landing a hair below an exact multiple
        let steps = ((self.hi - self.lo) / self.resolution * (1.0 + 1e-12)).floor();
        steps as usize + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Grid point `j`, computed as `lo + j * resolution`.
    pub fn value(&self, j: usize) -> f64 {
        self.lo + j as f64 * self.resolution
    }

    pub fn iter(&self) -> impl Iterator<Item = f64> + '_ {
        (0..self.len()).map(|j| self.value(j))
    }

    pub fn max_abs(&self) -> f64 {
        self.lo.abs().max(self.hi.abs())
    }

    pub fn width(&self) -> f64 {
        self.hi - self.lo
    }

    pub fn center(&self) -> f64 {
        0.5 * (self.lo + self.hi)
    }

    /// Same bounds at a different resolution.
    pub fn with_resolution(&self, resolution: f64) -> Result<Self> {
        Self::new(self.lo, self.hi, resolution)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn strided_examples() {
        let v = [10, 20, 30, 40, 50, 60];
        assert_eq!(
            strided_subvector_one_based(&v, OneBased(1), 2, 3).unwrap(),
            vec![10, 30, 50]
        );
        assert_eq!(
            strided_subvector_one_based(&[7], OneBased(1), 5, 1).unwrap(),
            vec![7]
        );
        match strided_subvector_one_based(&[1, 2, 3, 4], OneBased(2), 3, 2) {
            Err(Error::Index { position, len }) => {
                assert_eq!(position, 5);
                assert_eq!(len, 4);
            }
            other => panic!("expected index error, got {other:?}"),
        }
        assert!(strided_subvector_one_based(&[1], OneBased(0), 1, 1).is_err());
    }

    #[test]
    fn strided_zero_based() {
        let v = [1.0, 2.0, 3.0, 4.0, 5.0];
        assert_eq!(strided_subvector(&v, 1, 2, 2).unwrap(), vec![2.0, 4.0]);
        assert!(strided_subvector(&v, 0, 3, 3).is_err());
    }

    #[test]
    fn config_invariants() {
        let c = ModelConfig::new(16, 8, 3, 4, 0.5, 0, 1, MeasurementMode::Adaptive).unwrap();
        assert_eq!(c.p(), 24);
        assert_eq!(c.range(), 1.0);
        assert_eq!(c.m(), 96);
        let c = ModelConfig {
            mode: MeasurementMode::Nonadaptive,
            ..c
        };
        assert_eq!(c.m(), 7 * 24);
        assert!(ModelConfig::new(4, 4, 1, 1, 0.0, 0, 1, MeasurementMode::Adaptive).is_err());
        assert!(ModelConfig::new(4, 4, 1, 0, 1.0, 0, 1, MeasurementMode::Adaptive).is_err());
        assert!(ModelConfig::new(4, 4, 0, 1, 1.0, 0, 1, MeasurementMode::Adaptive).is_err());
        assert!(ModelConfig::new(4, 5, 1, 1, 1.0, 0, 1, MeasurementMode::Adaptive).is_err());
    }

    #[test]
    fn real_vector_checks() {
        assert!(RealVector::new(vec![1.0, f64::NAN], Role::X).is_err());
        assert!(RealVector::wrapped(vec![0.0, 2.5], Role::U, 2.0).is_err());
        let v = RealVector::wrapped(vec![0.0, 1.5], Role::U, 2.0).unwrap();
        assert_eq!(v.len(), 2);
        assert_eq!(v.role(), Role::U);
    }

    #[test]
    fn bits_pack_lsb_first() {
        let layout = BitLayout {
            mode: MeasurementMode::Adaptive,
            k: 3,
            p: 3,
        };
        let bits = [true, false, false, true, true, false, false, false, true];
        let y = BitMeasurements::from_bits(&bits, layout).unwrap();
        assert_eq!(y.to_le_bytes(), vec![0b0001_1001, 0b0000_0001]);
        assert_eq!(y.scalar_bits(0), vec![true, true, false]);
        assert_eq!(y.scalar_bits(2), vec![false, false, true]);
        let back = BitMeasurements::from_le_bytes(&y.to_le_bytes(), layout).unwrap();
        assert_eq!(back, y);
    }

    #[test]
    fn grid_points() {
        let g = FreqGrid::new(0.0, 1.0, 0.25).unwrap();
        assert_eq!(
            g.iter().collect::<Vec<_>>(),
            vec![0.0, 0.25, 0.5, 0.75, 1.0]
        );
        let g = FreqGrid::new(0.0, 1.0, 1e-3).unwrap();
        assert_eq!(g.len(), 1001);
        assert_eq!(FreqGrid::point(0.3).unwrap().len(), 1);
        assert!(FreqGrid::new(1.0, 0.0, 0.1).is_err());
        assert!(FreqGrid::new(0.0, 1.0, 0.0).is_err());
    }
}
