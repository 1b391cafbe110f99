//! Binary vector and bit files.
//!
//! Both start with a 16-byte header: an 8-byte magic, a little-endian `u32`
//! version and four zero bytes. A little-endian `u64` length follows: the
//! number of values for vector files, the number of bits for bit files. Vector
//! payloads are little-endian IEEE-754 `f64`; bit payloads are packed LSB-first,
//! bit `i` in byte `i / 8` at position `i % 8`.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::types::{BitLayout, BitMeasurements};

pub const VECTOR_MAGIC: [u8; 8] = *b"MODRVEC\0";
pub const BITS_MAGIC: [u8; 8] = *b"MODRBIT\0";
pub const FORMAT_VERSION: u32 = 1;

fn write_header(w: &mut impl Write, magic: &[u8; 8], len: u64) -> Result<()> {
    w.write_all(magic)?;
    w.write_all(&FORMAT_VERSION.to_le_bytes())?;
    w.write_all(&[0u8; 4])?;
    w.write_all(&len.to_le_bytes())?;
    Ok(())
}

fn read_header(r: &mut impl Read, magic: &[u8; 8]) -> Result<u64> {
    let mut head = [0u8; 24];
    r.read_exact(&mut head)
        .map_err(|_| Error::Format("truncated header".into()))?;
    if &head[..8] != magic {
        return Err(Error::Format(format!(
            "bad magic {:?}, expected {:?}",
            String::from_utf8_lossy(&head[..8]),
            String::from_utf8_lossy(magic)
        )));
    }
    let version = u32::from_le_bytes(head[8..12].try_into().unwrap());
    if version != FORMAT_VERSION {
        return Err(Error::Format(format!("unsupported version {version}")));
    }
    Ok(u64::from_le_bytes(head[16..24].try_into().unwrap()))
}

pub fn write_vector_to(w: &mut impl Write, values: &[f64]) -> Result<()> {
    write_header(w, &VECTOR_MAGIC, values.len() as u64)?;
    for v in values {
        w.write_all(&v.to_le_bytes())?;
    }
    Ok(())
}

pub fn read_vector_from(r: &mut impl Read) -> Result<Vec<f64>> {
    let len = read_header(r, &VECTOR_MAGIC)? as usize;
    let mut bytes = Vec::new();
    r.read_to_end(&mut bytes)?;
    if bytes.len() != 8 * len {
        return Err(Error::Format(format!(
            "header announces {len} values but payload has {} bytes",
            bytes.len()
        )));
    }
    Ok(bytes
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
        .collect())
}

pub fn write_bits_to(w: &mut impl Write, bits: &BitMeasurements) -> Result<()> {
    write_header(w, &BITS_MAGIC, bits.len() as u64)?;
    w.write_all(&bits.to_le_bytes())?;
    Ok(())
}

/// Reads a bit file; the layout comes from the accompanying sidecar.
pub fn read_bits_from(r: &mut impl Read, layout: BitLayout) -> Result<BitMeasurements> {
    let len = read_header(r, &BITS_MAGIC)? as usize;
    if len != layout.len() {
        return Err(Error::Format(format!(
            "file holds {len} bits, layout expects {}",
            layout.len()
        )));
    }
    let mut bytes = Vec::new();
    r.read_to_end(&mut bytes)?;
    BitMeasurements::from_le_bytes(&bytes, layout).map_err(|e| Error::Format(e.to_string()))
}

pub fn write_vector(path: impl AsRef<Path>, values: &[f64]) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    write_vector_to(&mut w, values)?;
    w.flush()?;
    Ok(())
}

pub fn read_vector(path: impl AsRef<Path>) -> Result<Vec<f64>> {
    read_vector_from(&mut BufReader::new(File::open(path)?))
}

pub fn write_bits(path: impl AsRef<Path>, bits: &BitMeasurements) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    write_bits_to(&mut w, bits)?;
    w.flush()?;
    Ok(())
}

pub fn read_bits(path: impl AsRef<Path>, layout: BitLayout) -> Result<BitMeasurements> {
    read_bits_from(&mut BufReader::new(File::open(path)?), layout)
}
