//! Binary PGM (P5) reading and writing for 8-bit grayscale images.

use std::io::{BufWriter, Read, Write};
use std::path::Path;

use thiserror::Error;

use crate::tensor::{Scalar, Tensor};

#[derive(Error, Debug)]
pub enum PgmError {
    #[error("not a binary PGM (P5) file")]
    BadMagic,
    #[error("malformed PGM header: {0}")]
    BadHeader(&'static str),
    #[error("pixel payload is {got} bytes, expected {expected}")]
    BadPayload { got: usize, expected: usize },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Row-major 8-bit grayscale image.
#[derive(Clone, PartialEq, Eq, Debug)]
pub struct GrayImage {
    pub width: usize,
    pub height: usize,
    pub pixels: Vec<u8>,
}

impl GrayImage {
    pub fn new(width: usize, height: usize) -> GrayImage {
        GrayImage { width, height, pixels: vec![0; width * height] }
    }

    pub fn get(&self, x: usize, y: usize) -> u8 {
        self.pixels[y * self.width + x]
    }

    pub fn set(&mut self, x: usize, y: usize, value: u8) {
        self.pixels[y * self.width + x] = value;
    }

    /// `[1, height, width]` tensor with pixels normalized to [0, 1].
    pub fn to_tensor<T: Scalar>(&self) -> Tensor<T> {
        let data = self.pixels.iter().map(|&p| T::from_f64(f64::from(p) / 255.0)).collect();
        Tensor::new(vec![1, self.height, self.width], data).expect("image extents are positive")
    }
}

pub fn write_pgm(path: &Path, image: &GrayImage) -> Result<(), PgmError> {
    let mut out = BufWriter::new(std::fs::File::create(path)?);
    write!(out, "P5\n{} {}\n255\n", image.width, image.height)?;
    out.write_all(&image.pixels)?;
    out.flush()?;
    Ok(())
}

pub fn read_pgm(path: &Path) -> Result<GrayImage, PgmError> {
    let mut bytes = Vec::new();
    std::fs::File::open(path)?.read_to_end(&mut bytes)?;
    parse_pgm(&bytes)
}

fn parse_pgm(bytes: &[u8]) -> Result<GrayImage, PgmError> {
    if !bytes.starts_with(b"P5") {
        return Err(PgmError::BadMagic);
    }
    let mut pos = 2;
    let mut fields = [0usize; 3]; // width, height, maxval
    for field in &mut fields {
        // skip whitespace and '#' comment lines between header tokens
        loop {
            while pos < bytes.len() && bytes[pos].is_ascii_whitespace() {
                pos += 1;
            }
            if pos < bytes.len() && bytes[pos] == b'#' {
                while pos < bytes.len() && bytes[pos] != b'\n' {
                    pos += 1;
                }
            } else {
                break;
            }
        }
        let start = pos;
        while pos < bytes.len() && bytes[pos].is_ascii_digit() {
            pos += 1;
        }
        if start == pos {
            return Err(PgmError::BadHeader("expected integer"));
        }
        *field = std::str::from_utf8(&bytes[start..pos])
            .ok()
            .and_then(|s| s.parse().ok())
            .ok_or(PgmError::BadHeader("unparsable integer"))?;
    }
    let [width, height, maxval] = fields;
    if width == 0 || height == 0 {
        return Err(PgmError::BadHeader("zero dimension"));
    }
    if maxval == 0 || maxval > 255 {
        return Err(PgmError::BadHeader("maxval must be 1..=255"));
    }
    // exactly one whitespace byte separates header and payload
    if pos >= bytes.len() || !bytes[pos].is_ascii_whitespace() {
        return Err(PgmError::BadHeader("missing payload separator"));
    }
    pos += 1;
    let payload = &bytes[pos..];
    let expected = width * height;
    if payload.len() != expected {
        return Err(PgmError::BadPayload { got: payload.len(), expected });
    }
    Ok(GrayImage { width, height, pixels: payload.to_vec() })
}
