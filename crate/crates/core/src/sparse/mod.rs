//! Sparse recovery of `x` from `z_hat ~ B x`, and the wavelet basis in which
//! images are sparse.

mod cosamp;
mod haar;

pub use cosamp::{
    cosamp, least_squares_on_support, CosampDiagnostics, CosampOptions, CosampResult, CosampState,
    LeastSquares,
};
pub use haar::{haar2d_forward, haar2d_inverse, sparsify, Haar2d, SparsifyingBasis};

/// Indices of the `count` largest-magnitude entries, ties to the lower index.
pub fn top_indices(values: &[f64], count: usize) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..values.len()).collect();
    let key = |i: &usize| values[*i].abs();
    if count < idx.len() {
        idx.select_nth_unstable_by(count, |a, b| key(b).total_cmp(&key(a)).then(a.cmp(b)));
        idx.truncate(count);
    }
    idx.sort_unstable_by(|a, b| key(b).total_cmp(&key(a)).then(a.cmp(b)));
    idx
}
