//! Reader for the IDX3 image container used by the MNIST distribution:
//! big-endian magic 0x00000803, then count, rows, cols, then one byte per
//! pixel, image-major.

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::image::Image;

const IDX3_MAGIC: u32 = 0x0000_0803;

/// Reads every image in an IDX3 file. Pixel bytes are scaled by 255 so
/// intensities land in [0, 1].
pub fn read_idx3_images(path: &Path) -> Result<Vec<Image>> {
    let data = fs::read(path).map_err(|e| Error::io(path, e))?;
    parse_idx3(&data)
}

pub fn parse_idx3(data: &[u8]) -> Result<Vec<Image>> {
    let word = |at: usize, field: &str| -> Result<u32> {
        let bytes = data
            .get(at..at + 4)
            .ok_or_else(|| Error::IdxParse(format!("truncated header: missing {field}")))?;
        Ok(u32::from_be_bytes(bytes.try_into().unwrap()))
    };
    let magic = word(0, "magic")?;
    if magic != IDX3_MAGIC {
        return Err(Error::IdxParse(format!(
            "not an IDX3 image file (magic 0x{magic:08x}, expected 0x{IDX3_MAGIC:08x})"
        )));
    }
    let count = word(4, "image count")? as usize;
    let rows = word(8, "row count")? as usize;
    let cols = word(12, "column count")? as usize;
    if count > 0 && (rows == 0 || cols == 0) {
        return Err(Error::IdxParse(format!(
            "image dimensions must be positive, got {rows}x{cols}"
        )));
    }
    let per_image = rows
        .checked_mul(cols)
        .ok_or_else(|| Error::IdxParse("image dimensions overflow".into()))?;
    let expected = per_image
        .checked_mul(count)
        .ok_or_else(|| Error::IdxParse("payload size overflows".into()))?;
    let payload = &data[16..];
    if payload.len() != expected {
        return Err(Error::IdxParse(format!(
            "payload size mismatch: expected {expected} bytes for {count} images of {rows}x{cols}, got {}",
            payload.len()
        )));
    }
    payload
        .chunks_exact(per_image.max(1))
        .take(count)
        .map(|chunk| {
            let pixels = chunk.iter().map(|b| f64::from(*b) / 255.0).collect();
            Image::new(cols, rows, pixels)
        })
        .collect()
}
