//! The sensing matrix `B` (`q x n`), applied matrix-free.
//!
//! The subsampled kind is an orthonormal DCT-II preceded by a random ±1
//! diagonal, keeping `q` distinct seeded rows. Its rows are orthonormal, so
//! `B B^T = I_q`.

use std::fmt;
use std::sync::Arc;

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use rustdct::{DctPlanner, TransformType2And3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::{stream_rng, subseed, Domain};
use crate::types::ModelConfig;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SensingKind {
    Identity,
    SubsampledUnitaryTimesSigns,
    DenseGaussian,
}

#[derive(Clone)]
enum Operator {
    Identity,
    Subsampled {
        rows: Vec<usize>,
        signs: Vec<f64>,
        dct: Arc<dyn TransformType2And3<f64>>,
    },
    Dense {
        // row-major q x n
        entries: Vec<f64>,
    },
}

#[derive(Clone)]
pub struct SensingMatrix {
    rows: usize,
    cols: usize,
    op: Operator,
}

impl fmt::Debug for SensingMatrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("SensingMatrix")
            .field("kind", &self.kind())
            .field("rows", &self.rows)
            .field("cols", &self.cols)
            .finish()
    }
}

impl SensingMatrix {
    pub fn identity(n: usize) -> Self {
        SensingMatrix {
            rows: n,
            cols: n,
            op: Operator::Identity,
        }
    }

    /// Builds `B` for `config` (`q x n`), seeding rows, signs and entries
    /// from `config.seed`.
    pub fn build(config: &ModelConfig, kind: SensingKind) -> Result<Self> {
        let (q, n) = (config.q, config.n);
        if q > n {
            return Err(Error::shape(format!(
                "B cannot have q = {q} > n = {n} rows"
            )));
        }
        match kind {
            SensingKind::Identity => {
                if q != n {
                    return Err(Error::shape(format!(
                        "identity B needs q = n, got q = {q}, n = {n}"
                    )));
                }
                Ok(Self::identity(n))
            }
            SensingKind::SubsampledUnitaryTimesSigns => {
                let mut rng = stream_rng(subseed(config.seed, Domain::SensingRows), 0);
                let mut rows = rand::seq::index::sample(&mut rng, n, q).into_vec();
                rows.sort_unstable();
                let mut rng = stream_rng(subseed(config.seed, Domain::SensingSigns), 0);
                let signs = (0..n)
                    .map(|_| if rng.random::<bool>() { 1.0 } else { -1.0 })
                    .collect();
                let dct = DctPlanner::new().plan_dct2(n);
                Ok(SensingMatrix {
                    rows: q,
                    cols: n,
                    op: Operator::Subsampled { rows, signs, dct },
                })
            }
            SensingKind::DenseGaussian => {
                let mut rng = stream_rng(subseed(config.seed, Domain::SensingGaussian), 0);
                let scale = 1.0 / (q as f64).sqrt();
                let entries = (0..q * n)
                    .map(|_| {
                        let g: f64 = StandardNormal.sample(&mut rng);
                        g * scale
                    })
                    .collect();
                Ok(SensingMatrix {
                    rows: q,
                    cols: n,
                    op: Operator::Dense { entries },
                })
            }
        }
    }

    pub fn kind(&self) -> SensingKind {
        match self.op {
            Operator::Identity => SensingKind::Identity,
            Operator::Subsampled { .. } => SensingKind::SubsampledUnitaryTimesSigns,
            Operator::Dense { .. } => SensingKind::DenseGaussian,
        }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    /// Selected transform rows (subsampled kind only).
    pub fn selected_rows(&self) -> Option<&[usize]> {
        match &self.op {
            Operator::Subsampled { rows, .. } => Some(rows),
            _ => None,
        }
    }

    /// Diagonal sign pattern (subsampled kind only).
    pub fn signs(&self) -> Option<&[f64]> {
        match &self.op {
            Operator::Subsampled { signs, .. } => Some(signs),
            _ => None,
        }
    }

    /// `B x`.
    pub fn apply(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.cols {
            return Err(Error::shape(format!(
                "B has {} columns, got a vector of length {}",
                self.cols,
                x.len()
            )));
        }
        Ok(match &self.op {
            Operator::Identity => x.to_vec(),
            Operator::Subsampled { rows, .. } => {
                let full = self.full_transform_unchecked(x);
                rows.iter().map(|&r| full[r]).collect()
            }
            Operator::Dense { entries } => entries
                .chunks_exact(self.cols)
                .map(|row| dot(row, x))
                .collect(),
        })
    }

    /// `B^T y`.
    pub fn apply_adjoint(&self, y: &[f64]) -> Result<Vec<f64>> {
        if y.len() != self.rows {
            return Err(Error::shape(format!(
                "B has {} rows, got a vector of length {}",
                self.rows,
                y.len()
            )));
        }
        Ok(match &self.op {
            Operator::Identity => y.to_vec(),
            Operator::Subsampled { rows, signs, dct } => {
                let n = self.cols;
                let mut buf = vec![0.0; n];
                for (&r, &v) in rows.iter().zip(y) {
                    buf[r] = v;
                }
                let (s0, s) = ortho_scales(n);
                buf[0] *= 2.0 * s0;
                for v in &mut buf[1..] {
                    *v *= s;
                }
                dct.process_dct3(&mut buf);
                for (v, sign) in buf.iter_mut().zip(signs) {
                    *v *= sign;
                }
                buf
            }
            Operator::Dense { entries } => {
                let mut out = vec![0.0; self.cols];
                for (row, &w) in entries.chunks_exact(self.cols).zip(y) {
                    for (o, a) in out.iter_mut().zip(row) {
                        *o += a * w;
                    }
                }
                out
            }
        })
    }

    /// The unsubsampled orthonormal transform (with signs) of `x`.
    ///
    /// Identity and dense kinds return `B x`.
    pub fn apply_full(&self, x: &[f64]) -> Result<Vec<f64>> {
        match &self.op {
            Operator::Subsampled { .. } => {
                if x.len() != self.cols {
                    return Err(Error::shape("length mismatch in full transform"));
                }
                Ok(self.full_transform_unchecked(x))
            }
            _ => self.apply(x),
        }
    }

    fn full_transform_unchecked(&self, x: &[f64]) -> Vec<f64> {
        let Operator::Subsampled { signs, dct, .. } = &self.op else {
            unreachable!("full transform of a non-subsampled operator");
        };
        let n = self.cols;
        let mut buf: Vec<f64> = x.iter().zip(signs).map(|(v, s)| v * s).collect();
        dct.process_dct2(&mut buf);
        let (s0, s) = ortho_scales(n);
        buf[0] *= s0;
        for v in &mut buf[1..] {
            *v *= s;
        }
        buf
    }

    /// Column `j`, i.e. `B e_j`.
    pub fn column(&self, j: usize) -> Result<Vec<f64>> {
        if j >= self.cols {
            return Err(Error::Index {
                position: j,
                len: self.cols,
            });
        }
        let mut e = vec![0.0; self.cols];
        e[j] = 1.0;
        self.apply(&e)
    }
}

fn ortho_scales(n: usize) -> (f64, f64) {
    let nf = n as f64;
    ((1.0 / nf).sqrt(), (2.0 / nf).sqrt())
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub(crate) fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}
