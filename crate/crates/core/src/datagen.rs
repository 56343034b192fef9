//! Seeded synthetic data: random-dot images, wrap-around translations,
//! nearest-neighbor rotations, labeled pair datasets, and composite scenes
//! with a known foreground for segmentation evaluation.
//!
//! Everything stochastic takes an explicit 64-bit seed, and identical seeds
//! reproduce bit-identical outputs. Draw order is part of the contract: for
//! each pair, first the image pixels in row-major order, then the transform
//! parameters.

use std::fmt;
use std::fs;
use std::path::Path;

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::image::Image;
use crate::netpbm;
use crate::rng::seeded_rng;

/// The transformation that produced a pair's current frame from its previous
/// frame.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum TransformLabel {
    /// Wrap-around shift by (dx, dy) = (columns right, rows down).
    Translation {
        dx: i32,
        dy: i32,
    },
    /// Rotation about the image center, degrees stored modulo 360.
    Rotation {
        theta: f64,
    },
    Identity,
}

impl TransformLabel {
    pub fn rotation(theta: f64) -> Self {
        TransformLabel::Rotation {
            theta: theta.rem_euclid(360.0),
        }
    }

    /// Applies the labeled transformation to an image.
    pub fn apply(&self, img: &Image) -> Image {
        match *self {
            TransformLabel::Translation { dx, dy } => translate_wrap(img, dx, dy),
            TransformLabel::Rotation { theta } => rotate_nn(img, theta),
            TransformLabel::Identity => img.clone(),
        }
    }
}

/// A previous frame `x`, a current frame `y`, and the transformation between
/// them. Both frames always have identical dimensions.
#[derive(Debug, Clone, PartialEq)]
pub struct ImagePair {
    pub x: Image,
    pub y: Image,
    pub label: TransformLabel,
}

/// A pair whose background and foreground move differently, plus the
/// ground-truth foreground labels on the x frame (row-major).
#[derive(Debug, Clone, PartialEq)]
pub struct Scene {
    pub pair: ImagePair,
    pub truth_mask: Vec<bool>,
}

/// Binary random-dot image: each pixel is on independently with probability
/// `density`.
pub fn random_dots(width: usize, height: usize, density: f64, seed: u64) -> Result<Image> {
    random_dots_from(&mut seeded_rng(seed), width, height, density)
}

/// As [`random_dots`], drawing from a caller-owned generator in row-major
/// pixel order.
pub fn random_dots_from(
    rng: &mut ChaCha8Rng,
    width: usize,
    height: usize,
    density: f64,
) -> Result<Image> {
    if !(0.0..=1.0).contains(&density) {
        return Err(Error::InvalidArg(format!(
            "density {density} outside [0, 1]"
        )));
    }
    let pixels = (0..width * height)
        .map(|_| {
            if rng.random::<f64>() < density {
                1.0
            } else {
                0.0
            }
        })
        .collect();
    Image::new(width, height, pixels)
}

fn wrap(v: i64, modulus: usize) -> usize {
    v.rem_euclid(modulus as i64) as usize
}

/// Toroidal shift: `output(row, col) = input((row - dy) mod h, (col - dx) mod w)`,
/// so positive dx moves content right and positive dy moves it down. A
/// bijection on pixels for any shift.
pub fn translate_wrap(img: &Image, dx: i32, dy: i32) -> Image {
    let (w, h) = (img.width(), img.height());
    Image::from_fn(w, h, |row, col| {
        let src_row = wrap(row as i64 - dy as i64, h);
        let src_col = wrap(col as i64 - dx as i64, w);
        img.get(src_row, src_col)
    })
    .expect("source image is valid")
}

/// Sine and cosine of an angle in degrees, exact at multiples of 90 so that
/// quadrant rotations are pixel permutations.
pub(crate) fn sin_cos_deg(theta: f64) -> (f64, f64) {
    match theta.rem_euclid(360.0) {
        0.0 => (0.0, 1.0),
        90.0 => (1.0, 0.0),
        180.0 => (0.0, -1.0),
        270.0 => (-1.0, 0.0),
        t => t.to_radians().sin_cos(),
    }
}

/// Rotates grid position (row, col) by `theta` degrees counter-clockwise in
/// (col, row) coordinates about center (cy, cx). Returns the unrounded
/// (row, col) destination.
pub(crate) fn rotate_pos_forward(row: f64, col: f64, cy: f64, cx: f64, theta: f64) -> (f64, f64) {
    let (s, c) = sin_cos_deg(theta);
    let dx = col - cx;
    let dy = row - cy;
    (cy + s * dx + c * dy, cx + c * dx - s * dy)
}

/// Nearest-neighbor rotation by `theta` degrees about the image center
/// ((w-1)/2, (h-1)/2). Output pixels whose source falls outside the grid are
/// zero. Inverse mapping: each output position is pulled from its rotated-back
/// source, so binarity is preserved.
pub fn rotate_nn(img: &Image, theta: f64) -> Image {
    let (w, h) = (img.width(), img.height());
    let cx = (w as f64 - 1.0) / 2.0;
    let cy = (h as f64 - 1.0) / 2.0;
    Image::from_fn(w, h, |row, col| {
        let (src_row, src_col) = rotate_pos_forward(row as f64, col as f64, cy, cx, -theta);
        let (sr, sc) = (src_row.round(), src_col.round());
        if sr >= 0.0 && sr < h as f64 && sc >= 0.0 && sc < w as f64 {
            img.get(sr as usize, sc as usize)
        } else {
            0.0
        }
    })
    .expect("source image is valid")
}

/// Which family of transformations a generated dataset draws from.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PairKind {
    /// The 9 unit shifts: dx, dy independently uniform in {-1, 0, 1}.
    Translation9,
    /// Integer rotation angles uniform in [0, 360).
    RotationUniform,
}

/// Generates `n` labeled pairs of `size` x `size` random-dot images. Per pair
/// the draw order is: x pixels row-major, then the label parameters
/// (dx then dy, or theta).
pub fn make_pairs(
    kind: PairKind,
    n: usize,
    size: usize,
    density: f64,
    seed: u64,
) -> Result<Vec<ImagePair>> {
    if n == 0 {
        return Err(Error::InvalidArg("pair count must be at least 1".into()));
    }
    let mut rng = seeded_rng(seed);
    let mut pairs = Vec::with_capacity(n);
    for _ in 0..n {
        let x = random_dots_from(&mut rng, size, size, density)?;
        let label = match kind {
            PairKind::Translation9 => TransformLabel::Translation {
                dx: rng.random_range(-1..=1),
                dy: rng.random_range(-1..=1),
            },
            PairKind::RotationUniform => TransformLabel::Rotation {
                theta: f64::from(rng.random_range(0..360u32)),
            },
        };
        let y = label.apply(&x);
        pairs.push(ImagePair { x, y, label });
    }
    Ok(pairs)
}

/// Builds a scene whose random-dot background shifts by `bg_shift` while a
/// solid rectangle `fg_rect = (row, col, height, width)` shifts by `fg_shift`
/// (both wrap-around). The foreground overlays the background in both frames;
/// `truth_mask` marks the rectangle footprint on the x frame. The pair is
/// labeled with the background shift, which is the scene's global motion.
pub fn make_scene(
    size: usize,
    density: f64,
    bg_shift: (i32, i32),
    fg_rect: (usize, usize, usize, usize),
    fg_shift: (i32, i32),
    seed: u64,
) -> Result<Scene> {
    let (rect_row, rect_col, rect_h, rect_w) = fg_rect;
    if rect_row + rect_h > size || rect_col + rect_w > size {
        return Err(Error::InvalidArg(format!(
            "fg_rect {fg_rect:?} out of bounds for {size}x{size} image"
        )));
    }
    if fg_shift == bg_shift {
        return Err(Error::InvalidArg(format!(
            "fg_shift {fg_shift:?} must differ from bg_shift {bg_shift:?}"
        )));
    }
    let bg = random_dots(size, size, density, seed)?;

    let mut x_pixels = bg.pixels().to_vec();
    let mut truth_mask = vec![false; size * size];
    for r in rect_row..rect_row + rect_h {
        for c in rect_col..rect_col + rect_w {
            x_pixels[r * size + c] = 1.0;
            truth_mask[r * size + c] = true;
        }
    }

    let mut y_pixels = translate_wrap(&bg, bg_shift.0, bg_shift.1).into_pixels();
    for r in rect_row..rect_row + rect_h {
        for c in rect_col..rect_col + rect_w {
            let dst_row = wrap(r as i64 + fg_shift.1 as i64, size);
            let dst_col = wrap(c as i64 + fg_shift.0 as i64, size);
            y_pixels[dst_row * size + dst_col] = 1.0;
        }
    }

    let pair = ImagePair {
        x: Image::new(size, size, x_pixels)?,
        y: Image::new(size, size, y_pixels)?,
        label: TransformLabel::Translation {
            dx: bg_shift.0,
            dy: bg_shift.1,
        },
    };
    Ok(Scene { pair, truth_mask })
}

impl fmt::Display for TransformLabel {
    /// Manifest column form: "kind dx dy theta".
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match *self {
            TransformLabel::Translation { dx, dy } => write!(f, "translation {dx} {dy} 0"),
            TransformLabel::Rotation { theta } => write!(f, "rotation 0 0 {theta}"),
            TransformLabel::Identity => write!(f, "identity 0 0 0"),
        }
    }
}

/// Writes a dataset as PGM files plus a manifest. Each pair `i` becomes
/// `pair_{i:05}_x.pgm` and `pair_{i:05}_y.pgm`; `manifest.txt` holds one line
/// per pair: "index kind dx dy theta".
pub fn dump_pairs(dir: &Path, pairs: &[ImagePair]) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut manifest = String::new();
    for (i, pair) in pairs.iter().enumerate() {
        netpbm::write_pgm(&dir.join(format!("pair_{i:05}_x.pgm")), &pair.x)?;
        netpbm::write_pgm(&dir.join(format!("pair_{i:05}_y.pgm")), &pair.y)?;
        manifest.push_str(&format!("{i} {}\n", pair.label));
    }
    let path = dir.join("manifest.txt");
    fs::write(&path, manifest).map_err(|e| Error::io(path, e))
}

/// Reads back a dataset written by [`dump_pairs`].
pub fn load_pairs(dir: &Path) -> Result<Vec<ImagePair>> {
    let path = dir.join("manifest.txt");
    let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
    let mut pairs = Vec::new();
    for (line_no, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split_whitespace().collect();
        if fields.len() != 5 {
            return Err(Error::Manifest(format!(
                "line {}: expected 5 fields \"index kind dx dy theta\", got {}",
                line_no + 1,
                fields.len()
            )));
        }
        let bad = |field: &str| Error::Manifest(format!("line {}: invalid {field}", line_no + 1));
        let index: usize = fields[0].parse().map_err(|_| bad("index"))?;
        let dx: i32 = fields[2].parse().map_err(|_| bad("dx"))?;
        let dy: i32 = fields[3].parse().map_err(|_| bad("dy"))?;
        let theta: f64 = fields[4].parse().map_err(|_| bad("theta"))?;
        let label = match fields[1] {
            "translation" => TransformLabel::Translation { dx, dy },
            "rotation" => TransformLabel::rotation(theta),
            "identity" => TransformLabel::Identity,
            other => {
                return Err(Error::Manifest(format!(
                    "line {}: unknown kind {other:?}",
                    line_no + 1
                )))
            }
        };
        let x = netpbm::read_pgm(&dir.join(format!("pair_{index:05}_x.pgm")))?;
        let y = netpbm::read_pgm(&dir.join(format!("pair_{index:05}_y.pgm")))?;
        pairs.push(ImagePair { x, y, label });
    }
    Ok(pairs)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn dots_density_extremes() {
        let zeros = random_dots(5, 4, 0.0, 1).unwrap();
        assert_eq!(zeros.on_count(), 0);
        let ones = random_dots(5, 4, 1.0, 1).unwrap();
        assert_eq!(ones.on_count(), 20);
    }

    #[test]
    fn dots_are_deterministic_per_seed() {
        let a = random_dots(13, 13, 0.1, 7).unwrap();
        let b = random_dots(13, 13, 0.1, 7).unwrap();
        let c = random_dots(13, 13, 0.1, 8).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
    }

    #[test]
    fn translate_zero_is_identity() {
        let img = random_dots(6, 4, 0.4, 3).unwrap();
        assert_eq!(translate_wrap(&img, 0, 0), img);
    }

    #[test]
    fn translate_composes_to_identity() {
        let img = random_dots(6, 4, 0.4, 3).unwrap();
        let back = translate_wrap(&translate_wrap(&img, 1, 0), -1, 0);
        assert_eq!(back, img);
        let far = translate_wrap(&translate_wrap(&img, -7, 5), 7, -5);
        assert_eq!(far, img);
    }

    #[test]
    fn translate_moves_content_right_and_down() {
        let img = Image::from_fn(3, 3, |r, c| if (r, c) == (0, 0) { 1.0 } else { 0.0 }).unwrap();
        let moved = translate_wrap(&img, 1, 1);
        assert_eq!(moved.get(1, 1), 1.0);
        assert_eq!(moved.on_count(), 1);
    }

    #[test]
    fn translate_preserves_on_count() {
        for seed in 0..20 {
            let img = random_dots(7, 5, 0.3, seed).unwrap();
            let n = img.on_count();
            assert_eq!(translate_wrap(&img, 3, -2).on_count(), n);
            assert_eq!(translate_wrap(&img, -1, 4).on_count(), n);
        }
    }

    #[test]
    fn rotate_zero_is_identity() {
        let img = random_dots(13, 13, 0.3, 5).unwrap();
        assert_eq!(rotate_nn(&img, 0.0), img);
        assert_eq!(rotate_nn(&img, 360.0), img);
    }

    #[test]
    fn rotate_90_is_the_transpose_flip_permutation() {
        for &n in &[13usize, 8] {
            let img = random_dots(n, n, 0.4, 11).unwrap();
            let rot = rotate_nn(&img, 90.0);
            let direct = Image::from_fn(n, n, |r, c| img.get(n - 1 - c, r)).unwrap();
            assert_eq!(rot, direct, "size {n}");
        }
    }

    #[test]
    fn rotate_180_twice_is_identity() {
        let img = random_dots(9, 6, 0.4, 13).unwrap();
        let twice = rotate_nn(&rotate_nn(&img, 180.0), 180.0);
        assert_eq!(twice, img);
    }

    #[test]
    fn rotate_produces_no_new_values() {
        let img = random_dots(13, 13, 0.2, 17).unwrap();
        let rot = rotate_nn(&img, 37.5);
        assert!(rot.pixels().iter().all(|v| *v == 0.0 || *v == 1.0));
    }

    #[test]
    fn make_pairs_is_deterministic_and_consistent() {
        let a = make_pairs(PairKind::Translation9, 5, 8, 0.1, 99).unwrap();
        let b = make_pairs(PairKind::Translation9, 5, 8, 0.1, 99).unwrap();
        assert_eq!(a, b);
        for pair in &a {
            assert_eq!(pair.y, pair.label.apply(&pair.x));
        }
    }

    #[test]
    fn make_pairs_rejects_empty_request() {
        assert!(make_pairs(PairKind::Translation9, 0, 8, 0.1, 0).is_err());
    }

    #[test]
    fn translation9_labels_stay_in_unit_box() {
        for pair in make_pairs(PairKind::Translation9, 200, 5, 0.1, 1).unwrap() {
            match pair.label {
                TransformLabel::Translation { dx, dy } => {
                    assert!((-1..=1).contains(&dx) && (-1..=1).contains(&dy));
                }
                other => panic!("unexpected label {other:?}"),
            }
        }
    }

    #[test]
    fn rotation_labels_cover_the_circle() {
        let pairs = make_pairs(PairKind::RotationUniform, 2000, 5, 0.1, 1).unwrap();
        let mut quadrants = [0usize; 4];
        for pair in &pairs {
            match pair.label {
                TransformLabel::Rotation { theta } => {
                    assert!((0.0..360.0).contains(&theta));
                    quadrants[(theta / 90.0) as usize] += 1;
                }
                other => panic!("unexpected label {other:?}"),
            }
        }
        for &q in &quadrants {
            assert!(q > 350, "quadrant counts {quadrants:?} far from uniform");
        }
    }

    #[test]
    fn scene_truth_marks_the_rectangle() {
        let scene = make_scene(13, 0.1, (1, 0), (4, 5, 4, 4), (-1, 0), 21).unwrap();
        assert_eq!(scene.truth_mask.iter().filter(|m| **m).count(), 16);
        for r in 4..8 {
            for c in 5..9 {
                assert!(scene.truth_mask[r * 13 + c]);
                assert_eq!(scene.pair.x.get(r, c), 1.0);
            }
        }
    }

    #[test]
    fn scene_empty_rect_is_all_background() {
        let scene = make_scene(8, 0.2, (1, 0), (2, 2, 0, 0), (-1, 0), 3).unwrap();
        assert!(scene.truth_mask.iter().all(|m| !m));
        assert_eq!(scene.pair.y, translate_wrap(&scene.pair.x, 1, 0));
    }

    #[test]
    fn scene_background_follows_bg_shift_away_from_rect() {
        let scene = make_scene(13, 0.3, (1, 0), (2, 2, 4, 4), (-1, 0), 5).unwrap();
        let shifted_x = translate_wrap(&scene.pair.x, 1, 0);
        // Rows untouched by either rectangle footprint follow the background.
        for r in 8..13 {
            for c in 0..13 {
                assert_eq!(scene.pair.y.get(r, c), shifted_x.get(r, c), "({r}, {c})");
            }
        }
    }

    #[test]
    fn scene_rejects_bad_geometry() {
        assert!(make_scene(8, 0.1, (1, 0), (6, 6, 4, 4), (-1, 0), 0).is_err());
        assert!(make_scene(8, 0.1, (1, 0), (2, 2, 2, 2), (1, 0), 0).is_err());
    }

    #[test]
    fn dump_load_roundtrip() {
        let dir = tempfile::tempdir().unwrap();
        let mut pairs = make_pairs(PairKind::Translation9, 3, 6, 0.3, 8).unwrap();
        pairs.extend(make_pairs(PairKind::RotationUniform, 2, 6, 0.3, 9).unwrap());
        dump_pairs(dir.path(), &pairs).unwrap();
        let back = load_pairs(dir.path()).unwrap();
        assert_eq!(back, pairs);
    }

    #[test]
    fn load_reports_manifest_problems() {
        let dir = tempfile::tempdir().unwrap();
        std::fs::write(dir.path().join("manifest.txt"), "0 translation 1\n").unwrap();
        let err = load_pairs(dir.path()).unwrap_err().to_string();
        assert!(err.contains("expected 5 fields"), "{err}");
        std::fs::write(dir.path().join("manifest.txt"), "0 sheared 1 0 0\n").unwrap();
        let err = load_pairs(dir.path()).unwrap_err().to_string();
        assert!(err.contains("unknown kind"), "{err}");
    }
}
