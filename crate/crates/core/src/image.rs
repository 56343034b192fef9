//! Grayscale images in row-major order with intensities in [0, 1].
//!
//! Binary images are the common case (every pixel exactly 0.0 or 1.0) but the
//! type carries any intensity in range so that reconstruction probabilities
//! and MNIST grayscale pass through the same code.

use crate::error::{Error, Result};

/// Flat pixel index into a row-major image. For width `w`, index `i` names
/// the pixel at `(row, col) = (i / w, i % w)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct PixelIndex(pub usize);

impl PixelIndex {
    pub fn from_coords(row: usize, col: usize, width: usize) -> Self {
        PixelIndex(row * width + col)
    }

    pub fn coords(self, width: usize) -> (usize, usize) {
        (self.0 / width, self.0 % width)
    }
}

/// A width x height grayscale image. Immutable after construction.
#[derive(Debug, Clone, PartialEq)]
pub struct Image {
    width: usize,
    height: usize,
    pixels: Vec<f64>,
}

impl Image {
    /// Builds an image from row-major pixel data. The pixel count must be
    /// `width * height` and every value must be finite and in [0, 1].
    pub fn new(width: usize, height: usize, pixels: Vec<f64>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::InvalidArg(format!(
                "image dimensions must be positive, got {width}x{height}"
            )));
        }
        if pixels.len() != width * height {
            return Err(Error::DimMismatch(format!(
                "expected {} pixels for {}x{}, got {}",
                width * height,
                width,
                height,
                pixels.len()
            )));
        }
        if let Some(v) = pixels
            .iter()
            .find(|v| !v.is_finite() || **v < 0.0 || **v > 1.0)
        {
            return Err(Error::InvalidArg(format!("pixel value {v} outside [0, 1]")));
        }
        Ok(Image {
            width,
            height,
            pixels,
        })
    }

    pub fn zeros(width: usize, height: usize) -> Result<Self> {
        Image::new(width, height, vec![0.0; width * height])
    }

    /// Builds an image by evaluating `f(row, col)` for every pixel.
    pub fn from_fn(
        width: usize,
        height: usize,
        mut f: impl FnMut(usize, usize) -> f64,
    ) -> Result<Self> {
        let mut pixels = Vec::with_capacity(width * height);
        for row in 0..height {
            for col in 0..width {
                pixels.push(f(row, col));
            }
        }
        Image::new(width, height, pixels)
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    /// Number of pixels.
    pub fn len(&self) -> usize {
        self.pixels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pixels.is_empty()
    }

    pub fn pixels(&self) -> &[f64] {
        &self.pixels
    }

    pub fn into_pixels(self) -> Vec<f64> {
        self.pixels
    }

    pub fn get(&self, row: usize, col: usize) -> f64 {
        assert!(
            row < self.height && col < self.width,
            "pixel ({row}, {col}) out of range"
        );
        self.pixels[row * self.width + col]
    }

    pub fn index(&self, row: usize, col: usize) -> PixelIndex {
        PixelIndex::from_coords(row, col, self.width)
    }

    pub fn coords(&self, index: PixelIndex) -> (usize, usize) {
        index.coords(self.width)
    }

    /// A pixel counts as "on" (active) at intensity 0.5 or above.
    pub fn is_on(&self, index: usize) -> bool {
        self.pixels[index] >= 0.5
    }

    pub fn on_count(&self) -> usize {
        (0..self.len()).filter(|i| self.is_on(*i)).count()
    }

    /// Hard-thresholds to exact {0, 1}: strictly above `threshold` becomes 1.
    pub fn binarized(&self, threshold: f64) -> Image {
        let pixels = self
            .pixels
            .iter()
            .map(|v| if *v > threshold { 1.0 } else { 0.0 })
            .collect();
        Image {
            width: self.width,
            height: self.height,
            pixels,
        }
    }
}

/// Shrinks a 28x28 MNIST digit to a binary 13x13 image: center-crop to 26x26
/// (dropping the one-pixel border), 2x2 max-pool, then threshold at 0.5.
pub fn mnist_to_13(digit: &Image) -> Result<Image> {
    if digit.width() != 28 || digit.height() != 28 {
        return Err(Error::DimMismatch(format!(
            "expected a 28x28 image, got {}x{}",
            digit.width(),
            digit.height()
        )));
    }
    Image::from_fn(13, 13, |row, col| {
        let r0 = 1 + 2 * row;
        let c0 = 1 + 2 * col;
        let m = digit
            .get(r0, c0)
            .max(digit.get(r0, c0 + 1))
            .max(digit.get(r0 + 1, c0))
            .max(digit.get(r0 + 1, c0 + 1));
        if m > 0.5 {
            1.0
        } else {
            0.0
        }
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn index_roundtrip() {
        let img = Image::zeros(7, 5).unwrap();
        for row in 0..5 {
            for col in 0..7 {
                let idx = img.index(row, col);
                assert_eq!(img.coords(idx), (row, col));
            }
        }
        for i in 0..35 {
            let (row, col) = img.coords(PixelIndex(i));
            assert_eq!(img.index(row, col), PixelIndex(i));
        }
    }

    #[test]
    fn new_rejects_bad_input() {
        assert!(Image::new(0, 4, vec![]).is_err());
        assert!(Image::new(2, 2, vec![0.0; 3]).is_err());
        assert!(Image::new(2, 2, vec![0.0, 0.5, 1.0, 1.5]).is_err());
        assert!(Image::new(2, 2, vec![0.0, 0.5, 1.0, f64::NAN]).is_err());
    }

    #[test]
    fn on_threshold_is_inclusive_at_half() {
        let img = Image::new(2, 1, vec![0.5, 0.49]).unwrap();
        assert!(img.is_on(0));
        assert!(!img.is_on(1));
        assert_eq!(img.on_count(), 1);
    }

    #[test]
    fn binarized_is_strict_above() {
        let img = Image::new(3, 1, vec![0.5, 0.51, 0.0]).unwrap();
        assert_eq!(img.binarized(0.5).pixels(), &[0.0, 1.0, 0.0]);
    }

    #[test]
    fn mnist_single_center_pixel_survives() {
        // Pixel (14, 14) lands in the cropped 26x26 at (13, 13), which pools
        // into output cell (6, 6).
        let digit =
            Image::from_fn(28, 28, |r, c| if (r, c) == (14, 14) { 1.0 } else { 0.0 }).unwrap();
        let small = mnist_to_13(&digit).unwrap();
        assert_eq!(small.get(6, 6), 1.0);
        assert_eq!(small.on_count(), 1);
    }

    #[test]
    fn mnist_border_is_dropped() {
        let digit = Image::from_fn(28, 28, |r, c| {
            if r == 0 || r == 27 || c == 0 || c == 27 {
                1.0
            } else {
                0.0
            }
        })
        .unwrap();
        let small = mnist_to_13(&digit).unwrap();
        assert_eq!(small.on_count(), 0);
    }

    #[test]
    fn mnist_rejects_wrong_size() {
        let img = Image::zeros(13, 13).unwrap();
        assert!(mnist_to_13(&img).is_err());
    }
}
