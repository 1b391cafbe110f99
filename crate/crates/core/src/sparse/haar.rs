use std::f64::consts::FRAC_1_SQRT_2;

use crate::error::{Error, Result};
use crate::image::Image;

use super::top_indices;

/// An orthonormal basis in which images are expected to be sparse.
pub trait SparsifyingBasis: Send + Sync {
    fn analyze(&self, image: &Image) -> Result<Vec<f64>>;
    fn synthesize(&self, coeffs: &[f64], width: usize, height: usize) -> Result<Image>;
}

/// Full-depth orthonormal 2D Haar wavelet on square power-of-two images.
#[derive(Debug, Clone, Copy, Default)]
pub struct Haar2d;

impl SparsifyingBasis for Haar2d {
    fn analyze(&self, image: &Image) -> Result<Vec<f64>> {
        haar2d_forward(image)
    }

    fn synthesize(&self, coeffs: &[f64], width: usize, height: usize) -> Result<Image> {
        if width != height {
            return Err(Error::shape(format!(
                "Haar basis needs a square image, got {width}x{height}"
            )));
        }
        haar2d_inverse(coeffs, width)
    }
}

fn check_side(side: usize) -> Result<()> {
    if side == 0 || !side.is_power_of_two() {
        return Err(Error::shape(format!(
            "Haar transform needs a power-of-two side, got {side}"
        )));
    }
    Ok(())
}

fn forward_1d(data: &mut [f64], scratch: &mut [f64]) {
    let half = data.len() / 2;
    for i in 0..half {
        let (a, b) = (data[2 * i], data[2 * i + 1]);
        scratch[i] = (a + b) * FRAC_1_SQRT_2;
        scratch[half + i] = (a - b) * FRAC_1_SQRT_2;
    }
    data.copy_from_slice(&scratch[..data.len()]);
}

fn inverse_1d(data: &mut [f64], scratch: &mut [f64]) {
    let half = data.len() / 2;
    for i in 0..half {
        let (s, d) = (data[i], data[half + i]);
        scratch[2 * i] = (s + d) * FRAC_1_SQRT_2;
        scratch[2 * i + 1] = (s - d) * FRAC_1_SQRT_2;
    }
    data.copy_from_slice(&scratch[..data.len()]);
}

fn rows_pass(buf: &mut [f64], side: usize, n: usize, step: Step, scratch: &mut [f64]) {
    for r in 0..n {
        step(&mut buf[r * side..r * side + n], scratch);
    }
}

fn cols_pass(buf: &mut [f64], side: usize, n: usize, step: Step, scratch: &mut [f64]) {
    let mut line = vec![0.0; n];
    for c in 0..n {
        for (r, v) in line.iter_mut().enumerate() {
            *v = buf[r * side + c];
        }
        step(&mut line, scratch);
        for (r, v) in line.iter().enumerate() {
            buf[r * side + c] = *v;
        }
    }
}

type Step = fn(&mut [f64], &mut [f64]);

/// Multi-level Haar analysis. Coefficients are row-major with the coarsest
/// scaling coefficient at index 0.
pub fn haar2d_forward(image: &Image) -> Result<Vec<f64>> {
    let side = image.width();
    if image.height() != side {
        return Err(Error::shape(format!(
            "Haar transform needs a square image, got {}x{}",
            image.width(),
            image.height()
        )));
    }
    check_side(side)?;
    let mut buf = image.pixels().to_vec();
    let mut scratch = vec![0.0; side];
    let mut n = side;
    while n > 1 {
        rows_pass(&mut buf, side, n, forward_1d, &mut scratch);
        cols_pass(&mut buf, side, n, forward_1d, &mut scratch);
        n /= 2;
    }
    Ok(buf)
}

pub fn haar2d_inverse(coeffs: &[f64], side: usize) -> Result<Image> {
    check_side(side)?;
    if coeffs.len() != side * side {
        return Err(Error::shape(format!(
            "{} coefficients for a {side}x{side} image",
            coeffs.len()
        )));
    }
    let mut buf = coeffs.to_vec();
    let mut scratch = vec![0.0; side];
    let mut n = 2;
    while n <= side {
        cols_pass(&mut buf, side, n, inverse_1d, &mut scratch);
        rows_pass(&mut buf, side, n, inverse_1d, &mut scratch);
        n *= 2;
    }
    Image::new(side, side, buf)
}

/// Haar coefficients of `image` keeping only the `s` largest magnitudes.
pub fn sparsify(image: &Image, s: usize) -> Result<Vec<f64>> {
    let coeffs = haar2d_forward(image)?;
    if s > coeffs.len() {
        return Err(Error::shape(format!(
            "cannot keep {s} of {} coefficients",
            coeffs.len()
        )));
    }
    let mut out = vec![0.0; coeffs.len()];
    for i in top_indices(&coeffs, s) {
        out[i] = coeffs[i];
    }
    Ok(out)
}
