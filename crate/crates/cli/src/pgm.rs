//! Binary 8-bit PGM (P5) images.

use std::fs;
use std::path::Path;

use modrecon_core::Image;

use crate::error::{CliError, Result};

/// ITU-R BT.601 luma, for turning RGB data into the grayscale images the
/// toolkit works on.
pub fn luma(r: f64, g: f64, b: f64) -> f64 {
    0.299 * r + 0.587 * g + 0.114 * b
}

struct Header<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl Header<'_> {
    fn err(&self, message: impl Into<String>) -> CliError {
        CliError::Parse {
            offset: self.pos,
            message: message.into(),
        }
    }

    fn skip_space(&mut self) {
        while self.pos < self.bytes.len() {
            match self.bytes[self.pos] {
                b'#' => {
                    while self.pos < self.bytes.len() && self.bytes[self.pos] != b'\n' {
                        self.pos += 1;
                    }
                }
                c if c.is_ascii_whitespace() => self.pos += 1,
                _ => break,
            }
        }
    }

    fn number(&mut self, what: &str) -> Result<usize> {
        self.skip_space();
        let start = self.pos;
        while self.pos < self.bytes.len() && self.bytes[self.pos].is_ascii_digit() {
            self.pos += 1;
        }
        if start == self.pos {
            return Err(self.err(format!("expected {what}")));
        }
        std::str::from_utf8(&self.bytes[start..self.pos])
            .unwrap()
            .parse()
            .map_err(|_| CliError::Parse {
                offset: start,
                message: format!("{what} does not fit"),
            })
    }
}

pub fn parse_pgm(bytes: &[u8]) -> Result<Image> {
    let mut h = Header { bytes, pos: 0 };
    if bytes.len() < 2 || &bytes[..2] != b"P5" {
        return Err(h.err("missing P5 magic"));
    }
    h.pos = 2;
    let width = h.number("width")?;
    let height = h.number("height")?;
    h.skip_space();
    let maxval_at = h.pos;
    let maxval = h.number("maxval")?;
    if maxval != 255 {
        return Err(CliError::Parse {
            offset: maxval_at,
            message: format!("unsupported maxval {maxval}, only 8-bit (255) images are read"),
        });
    }
    if h.pos >= bytes.len() || !bytes[h.pos].is_ascii_whitespace() {
        return Err(h.err("expected a whitespace byte before pixel data"));
    }
    h.pos += 1;
    let need = width * height;
    let data = &bytes[h.pos..];
    if data.len() < need {
        return Err(CliError::Parse {
            offset: bytes.len(),
            message: format!("truncated pixel data: {} of {need} bytes", data.len()),
        });
    }
    let pixels = data[..need].iter().map(|&b| b as f64).collect();
    Ok(Image::new(width, height, pixels)?)
}

/// Pixels rounded half-to-even and clamped to `[0, 255]`.
pub fn encode_pgm(image: &Image) -> Vec<u8> {
    let mut out = format!("P5\n{} {}\n255\n", image.width(), image.height()).into_bytes();
    out.extend(
        image
            .pixels()
            .iter()
            .map(|v| v.round_ties_even().clamp(0.0, 255.0) as u8),
    );
    out
}

pub fn load_pgm(path: impl AsRef<Path>) -> Result<Image> {
    parse_pgm(&fs::read(path)?)
}

pub fn save_pgm(image: &Image, path: impl AsRef<Path>) -> Result<()> {
    fs::write(path, encode_pgm(image))?;
    Ok(())
}
