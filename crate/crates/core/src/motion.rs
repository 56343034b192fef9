//! Global motion estimation from flow fields and the background-subtraction
//! layer built on it: the background is assumed to follow one rigid motion
//! (translation or rotation), and active pixels violating that motion are
//! foreground.

use std::collections::BTreeMap;

use crate::datagen::rotate_pos_forward;
use crate::error::{Error, Result};
use crate::flow::FlowField;
use crate::image::Image;

pub const DEFAULT_MIN_CONSENSUS: f64 = 0.5;
pub const DEFAULT_SEG_TOLERANCE: f64 = 1.0;

/// The single rigid motion best explaining a flow field's active pixels.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum MotionKind {
    Translation { dx: i64, dy: i64 },
    Rotation { theta: f64 },
    Unknown,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GlobalMotion {
    pub kind: MotionKind,
    /// Fraction of active pixels agreeing with the motion, in [0, 1].
    pub consensus: f64,
}

fn active_count_checked(flow: &FlowField) -> Result<usize> {
    let n = flow.active_count();
    if n == 0 {
        Err(Error::InvalidArg(
            "empty evidence: flow field has no active pixels".into(),
        ))
    } else {
        Ok(n)
    }
}

/// Modal displacement over active pixels and the fraction voting for it.
/// Ties break toward the lexicographically smaller (dy, dx).
pub fn estimate_translation(flow: &FlowField) -> Result<(i64, i64, f64)> {
    let active = active_count_checked(flow)?;
    let mut counts: BTreeMap<(i64, i64), usize> = BTreeMap::new();
    for i in 0..flow.len() {
        if flow.is_active(i) {
            let (dx, dy) = flow.displacement(i);
            *counts.entry((dy, dx)).or_insert(0) += 1;
        }
    }
    // First strict maximum in key order, so ties go to the smaller (dy, dx).
    let mut best = ((0i64, 0i64), 0usize);
    for (&key, &v) in &counts {
        if v > best.1 {
            best = (key, v);
        }
    }
    let ((dy, dx), votes) = best;
    Ok((dx, dy, votes as f64 / active as f64))
}

/// Grid search over integer angles 0..360: for each theta, the predicted
/// target of an active pixel is the nearest-neighbor rotation of its position
/// about the image center, and the pixel agrees when the actual target is
/// within one pixel (infinity norm) of the prediction. Returns the angle with
/// the most agreement; among equally supported angles the one whose unrounded
/// predictions sit closest to the actual targets wins (then the smaller
/// angle), which keeps an exact quadrant permutation at its exact angle.
pub fn estimate_rotation(flow: &FlowField) -> Result<(f64, f64)> {
    let active = active_count_checked(flow)?;
    let (w, h) = (flow.width(), flow.height());
    let cx = (w as f64 - 1.0) / 2.0;
    let cy = (h as f64 - 1.0) / 2.0;
    let pixels: Vec<(f64, f64, f64, f64)> = (0..flow.len())
        .filter(|i| flow.is_active(*i))
        .map(|i| {
            let (sr, sc) = ((i / w) as f64, (i % w) as f64);
            let t = flow.target(i);
            let (tr, tc) = ((t / w) as f64, (t % w) as f64);
            (sr, sc, tr, tc)
        })
        .collect();

    let mut best = (0usize, f64::INFINITY, 0.0f64);
    for theta in 0..360u32 {
        let theta = f64::from(theta);
        let mut matches = 0usize;
        let mut dist = 0.0;
        for &(sr, sc, tr, tc) in &pixels {
            let (pr, pc) = rotate_pos_forward(sr, sc, cy, cx, theta);
            dist += (tr - pr) * (tr - pr) + (tc - pc) * (tc - pc);
            if (tr - pr.round()).abs() <= 1.0 && (tc - pc.round()).abs() <= 1.0 {
                matches += 1;
            }
        }
        if matches > best.0 || (matches == best.0 && dist < best.1) {
            best = (matches, dist, theta);
        }
    }
    Ok((best.2, best.0 as f64 / active as f64))
}

/// Fits both motion families and keeps the better-supported one (ties favor
/// translation); below `min_consensus` the motion is Unknown. A field with no
/// active pixels is Unknown with consensus 0.
pub fn classify_global_motion(flow: &FlowField, min_consensus: f64) -> GlobalMotion {
    if flow.active_count() == 0 {
        return GlobalMotion {
            kind: MotionKind::Unknown,
            consensus: 0.0,
        };
    }
    let (dx, dy, t_consensus) = estimate_translation(flow).expect("active pixels present");
    let (theta, r_consensus) = estimate_rotation(flow).expect("active pixels present");
    let (kind, consensus) = if t_consensus >= r_consensus {
        (MotionKind::Translation { dx, dy }, t_consensus)
    } else {
        (MotionKind::Rotation { theta }, r_consensus)
    };
    if consensus < min_consensus {
        GlobalMotion {
            kind: MotionKind::Unknown,
            consensus,
        }
    } else {
        GlobalMotion { kind, consensus }
    }
}

/// Per-pixel foreground/background labels, row-major, dims matching the
/// source image.
#[derive(Debug, Clone, PartialEq)]
pub struct SegMask {
    width: usize,
    height: usize,
    labels: Vec<bool>,
}

impl SegMask {
    pub fn from_labels(width: usize, height: usize, labels: Vec<bool>) -> Result<Self> {
        if labels.len() != width * height {
            return Err(Error::DimMismatch(format!(
                "expected {} labels for {}x{}, got {}",
                width * height,
                width,
                height,
                labels.len()
            )));
        }
        Ok(SegMask {
            width,
            height,
            labels,
        })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn labels(&self) -> &[bool] {
        &self.labels
    }

    pub fn is_foreground(&self, index: usize) -> bool {
        self.labels[index]
    }

    pub fn foreground_count(&self) -> usize {
        self.labels.iter().filter(|l| **l).count()
    }

    /// Foreground as 1.0, background as 0.0; written as PGM this gives the
    /// conventional 255/0 mask.
    pub fn to_image(&self) -> Image {
        let pixels = self
            .labels
            .iter()
            .map(|l| if *l { 1.0 } else { 0.0 })
            .collect();
        Image::new(self.width, self.height, pixels).expect("mask dims are valid")
    }
}

fn circular_distance(a: i64, b: i64, modulus: usize) -> i64 {
    let m = modulus as i64;
    let d = (a - b).rem_euclid(m);
    d.min(m - d)
}

/// Labels, before smoothing: an active pixel is foreground when its actual
/// target sits farther than `tol` (infinity norm) from the target the global
/// motion predicts; inactive pixels are background. Translation predictions
/// wrap around the torus (matching the wrap-around data model) and use
/// circular per-axis distance; rotation predictions use the plain grid
/// distance.
pub fn segment_foreground_raw(flow: &FlowField, gm: &GlobalMotion, tol: f64) -> Result<SegMask> {
    let (w, h) = (flow.width(), flow.height());
    let cx = (w as f64 - 1.0) / 2.0;
    let cy = (h as f64 - 1.0) / 2.0;
    let mut labels = vec![false; flow.len()];
    for (i, label) in labels.iter_mut().enumerate() {
        if !flow.is_active(i) {
            continue;
        }
        let (sr, sc) = ((i / w) as i64, (i % w) as i64);
        let t = flow.target(i);
        let (tr, tc) = ((t / w) as i64, (t % w) as i64);
        let violation = match gm.kind {
            MotionKind::Translation { dx, dy } => {
                let pr = (sr + dy).rem_euclid(h as i64);
                let pc = (sc + dx).rem_euclid(w as i64);
                let d = circular_distance(tr, pr, h).max(circular_distance(tc, pc, w));
                d as f64 > tol
            }
            MotionKind::Rotation { theta } => {
                let (pr, pc) = rotate_pos_forward(sr as f64, sc as f64, cy, cx, theta);
                let d = (tr as f64 - pr.round())
                    .abs()
                    .max((tc as f64 - pc.round()).abs());
                d > tol
            }
            MotionKind::Unknown => {
                return Err(Error::NoGlobalMotion(format!(
                    "cannot segment against unknown motion (consensus {:.3})",
                    gm.consensus
                )))
            }
        };
        *label = violation;
    }
    SegMask::from_labels(w, h, labels)
}

/// One 3x3 majority vote per pixel: a pixel is foreground when at least 5 of
/// the 9 window cells are foreground, with cells outside the image counting
/// as background.
pub fn smooth_majority_3x3(mask: &SegMask) -> SegMask {
    let (w, h) = (mask.width(), mask.height());
    let mut labels = vec![false; w * h];
    for r in 0..h {
        for c in 0..w {
            let mut votes = 0;
            for dr in -1i64..=1 {
                for dc in -1i64..=1 {
                    let (nr, nc) = (r as i64 + dr, c as i64 + dc);
                    if nr >= 0
                        && nr < h as i64
                        && nc >= 0
                        && nc < w as i64
                        && mask.is_foreground(nr as usize * w + nc as usize)
                    {
                        votes += 1;
                    }
                }
            }
            labels[r * w + c] = votes >= 5;
        }
    }
    SegMask::from_labels(w, h, labels).expect("dims preserved")
}

/// Foreground = active pixels violating the global motion, then one 3x3
/// majority smoothing pass. Errors when the motion is Unknown.
pub fn segment_foreground(flow: &FlowField, gm: &GlobalMotion, tol: f64) -> Result<SegMask> {
    Ok(smooth_majority_3x3(&segment_foreground_raw(flow, gm, tol)?))
}

/// Intersection over union of the two foreground sets; 1.0 when both are
/// empty.
pub fn mask_iou(a: &SegMask, b: &SegMask) -> Result<f64> {
    if a.width() != b.width() || a.height() != b.height() {
        return Err(Error::DimMismatch(format!(
            "mask dims differ: {}x{} vs {}x{}",
            a.width(),
            a.height(),
            b.width(),
            b.height()
        )));
    }
    let mut intersection = 0usize;
    let mut union = 0usize;
    for (x, y) in a.labels().iter().zip(b.labels()) {
        if *x && *y {
            intersection += 1;
        }
        if *x || *y {
            union += 1;
        }
    }
    if union == 0 {
        Ok(1.0)
    } else {
        Ok(intersection as f64 / union as f64)
    }
}
