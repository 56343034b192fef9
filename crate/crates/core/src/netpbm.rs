//! Binary NetPBM readers and writers: PGM (P5) for grayscale images and
//! PPM (P6) for rendered flow fields. Maxval is capped at 255 so every sample
//! is a single byte.

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::image::Image;

/// Writes `image` as a binary PGM with maxval 255. Intensities are quantized
/// with round-half-up to the nearest of 256 levels.
pub fn write_pgm(path: &Path, image: &Image) -> Result<()> {
    let mut data = format!("P5\n{} {}\n255\n", image.width(), image.height()).into_bytes();
    data.extend(image.pixels().iter().map(|v| (v * 255.0).round() as u8));
    fs::write(path, data).map_err(|e| Error::io(path, e))
}

/// Reads a binary PGM. Accepts `#` comments in the header and any maxval in
/// 1..=255; samples are scaled by the maxval so pixels land in [0, 1].
pub fn read_pgm(path: &Path) -> Result<Image> {
    let data = fs::read(path).map_err(|e| Error::io(path, e))?;
    parse_pgm(&data)
}

pub fn parse_pgm(data: &[u8]) -> Result<Image> {
    let mut lex = HeaderLexer { data, pos: 0 };
    let magic = lex.token("magic")?;
    if magic != b"P5" {
        return Err(Error::PgmParse(format!(
            "bad magic {:?}, expected \"P5\"",
            String::from_utf8_lossy(&magic)
        )));
    }
    let width = lex.uint("width")?;
    let height = lex.uint("height")?;
    let maxval = lex.uint("maxval")?;
    if !(1..=255).contains(&maxval) {
        return Err(Error::PgmParse(format!(
            "maxval {maxval} out of range 1..=255"
        )));
    }
    // Exactly one whitespace byte separates the header from the payload.
    match lex.data.get(lex.pos) {
        Some(b) if b.is_ascii_whitespace() => lex.pos += 1,
        _ => return Err(Error::PgmParse("missing whitespace after maxval".into())),
    }
    let payload = &lex.data[lex.pos..];
    let expected = width
        .checked_mul(height)
        .ok_or_else(|| Error::PgmParse("image dimensions overflow".into()))?;
    if payload.len() < expected {
        return Err(Error::PgmParse(format!(
            "short pixel data: expected {expected} bytes, got {}",
            payload.len()
        )));
    }
    if payload.len() > expected {
        return Err(Error::PgmParse(format!(
            "trailing data after pixel payload: expected {expected} bytes, got {}",
            payload.len()
        )));
    }
    let scale = maxval as f64;
    let pixels = payload
        .iter()
        .map(|b| f64::from(*b).min(scale) / scale)
        .collect();
    Image::new(width, height, pixels)
}

struct HeaderLexer<'a> {
    data: &'a [u8],
    pos: usize,
}

impl<'a> HeaderLexer<'a> {
    fn skip_separators(&mut self) {
        while let Some(&b) = self.data.get(self.pos) {
            if b.is_ascii_whitespace() {
                self.pos += 1;
            } else if b == b'#' {
                while let Some(&b) = self.data.get(self.pos) {
                    self.pos += 1;
                    if b == b'\n' {
                        break;
                    }
                }
            } else {
                break;
            }
        }
    }

    fn token(&mut self, field: &str) -> Result<Vec<u8>> {
        self.skip_separators();
        let start = self.pos;
        while let Some(&b) = self.data.get(self.pos) {
            if b.is_ascii_whitespace() || b == b'#' {
                break;
            }
            self.pos += 1;
        }
        if self.pos == start {
            return Err(Error::PgmParse(format!("missing {field}")));
        }
        Ok(self.data[start..self.pos].to_vec())
    }

    fn uint(&mut self, field: &str) -> Result<usize> {
        let tok = self.token(field)?;
        let text = std::str::from_utf8(&tok)
            .map_err(|_| Error::PgmParse(format!("invalid {field}: not ASCII")))?;
        text.parse()
            .map_err(|_| Error::PgmParse(format!("invalid {field} {text:?}")))
    }
}

/// Writes packed RGB triplets as a binary PPM with maxval 255. `rgb` holds
/// `3 * width * height` bytes in row-major pixel order.
pub fn write_ppm(path: &Path, width: usize, height: usize, rgb: &[u8]) -> Result<()> {
    if rgb.len() != 3 * width * height {
        return Err(Error::DimMismatch(format!(
            "expected {} RGB bytes for {}x{}, got {}",
            3 * width * height,
            width,
            height,
            rgb.len()
        )));
    }
    let mut data = format!("P6\n{width} {height}\n255\n").into_bytes();
    data.extend_from_slice(rgb);
    fs::write(path, data).map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn roundtrip_is_exact_after_quantization() {
        let img = Image::new(3, 2, vec![0.0, 1.0, 0.5, 0.25, 0.999, 0.001]).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("t.pgm");
        write_pgm(&path, &img).unwrap();
        let back = read_pgm(&path).unwrap();
        assert_eq!(back.width(), 3);
        assert_eq!(back.height(), 2);
        for (a, b) in img.pixels().iter().zip(back.pixels()) {
            let quantized = (a * 255.0).round() / 255.0;
            assert!((quantized - b).abs() < 1e-12, "{a} -> {quantized} vs {b}");
        }
        // A second trip through is the identity: quantization is idempotent.
        write_pgm(&path, &back).unwrap();
        assert_eq!(read_pgm(&path).unwrap(), back);
    }

    #[test]
    fn header_comments_are_skipped() {
        let data = b"P5 # magic\n# a comment line\n 4\t1 # width done\n255\n\x00\x40\x80\xff";
        let img = parse_pgm(data).unwrap();
        assert_eq!(img.width(), 4);
        assert_eq!(img.height(), 1);
        assert_eq!(img.get(0, 3), 1.0);
    }

    #[test]
    fn maxval_scales_samples() {
        let data = b"P5\n2 1\n4\n\x00\x04";
        let img = parse_pgm(data).unwrap();
        assert_eq!(img.pixels(), &[0.0, 1.0]);
    }

    #[test]
    fn errors_name_the_field() {
        let cases: &[(&[u8], &str)] = &[
            (b"P6\n2 2\n255\n0000", "magic"),
            (b"P5\n", "width"),
            (b"P5\n2 x\n255\n", "height"),
            (b"P5\n2 2\n999\n", "maxval"),
            (b"P5\n2 2\n255\n\x00\x00", "short pixel data"),
        ];
        for (data, needle) in cases {
            let err = parse_pgm(data).unwrap_err().to_string();
            assert!(err.contains(needle), "{err:?} should mention {needle}");
        }
    }

    #[test]
    fn ppm_payload_length_is_checked() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("t.ppm");
        assert!(write_ppm(&path, 2, 2, &[0; 11]).is_err());
        write_ppm(&path, 2, 2, &[0; 12]).unwrap();
        let data = fs::read(&path).unwrap();
        assert!(data.starts_with(b"P6\n2 2\n255\n"));
        assert_eq!(data.len(), 11 + 12);
    }
}
