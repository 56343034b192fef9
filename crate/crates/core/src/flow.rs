//! Max-flow inference and analogy reconstruction.
//!
//! Given a trained model and an image pair, each input pixel's strongest
//! outgoing connection to an output pixel (under the inferred hidden state)
//! defines a dense flow field. The same hidden state, applied to a different
//! input image, reconstructs the transformed image by analogy.

use std::fs;
use std::path::Path;

use ndarray::ArrayView1;

use crate::datagen::ImagePair;
use crate::error::{Error, Result};
use crate::image::Image;
use crate::model::FactoredGrbm;
use crate::netpbm;

/// Dense per-pixel flow: every input pixel index maps to exactly one output
/// pixel index, with a flag for whether the input pixel is active (on).
#[derive(Debug, Clone, PartialEq)]
pub struct FlowField {
    width: usize,
    height: usize,
    targets: Vec<usize>,
    active: Vec<bool>,
}

impl FlowField {
    /// Builds a field from explicit targets; every target must be a valid
    /// pixel index. Used directly by constructive tests and evaluation.
    pub fn from_targets(
        width: usize,
        height: usize,
        targets: Vec<usize>,
        active: Vec<bool>,
    ) -> Result<Self> {
        let n = width * height;
        if n == 0 {
            return Err(Error::InvalidArg(
                "flow field dimensions must be positive".into(),
            ));
        }
        if targets.len() != n || active.len() != n {
            return Err(Error::DimMismatch(format!(
                "expected {n} targets and active flags, got {} and {}",
                targets.len(),
                active.len()
            )));
        }
        if let Some(t) = targets.iter().find(|t| **t >= n) {
            return Err(Error::InvalidArg(format!(
                "target index {t} out of range for {n} pixels"
            )));
        }
        Ok(FlowField {
            width,
            height,
            targets,
            active,
        })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    /// Number of pixels.
    pub fn len(&self) -> usize {
        self.targets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.targets.is_empty()
    }

    pub fn target(&self, index: usize) -> usize {
        self.targets[index]
    }

    pub fn targets(&self) -> &[usize] {
        &self.targets
    }

    pub fn is_active(&self, index: usize) -> bool {
        self.active[index]
    }

    pub fn active(&self) -> &[bool] {
        &self.active
    }

    pub fn active_count(&self) -> usize {
        self.active.iter().filter(|a| **a).count()
    }

    /// Displacement of pixel `index` as (dx, dy) = (dcol, drow): target
    /// position minus source position, no wrapping.
    pub fn displacement(&self, index: usize) -> (i64, i64) {
        let (sr, sc) = (index / self.width, index % self.width);
        let t = self.targets[index];
        let (tr, tc) = (t / self.width, t % self.width);
        (tc as i64 - sc as i64, tr as i64 - sr as i64)
    }
}

/// Flow under an explicitly supplied hidden vector: the score of output pixel
/// j for input pixel i is sum_f Wxf[i,f] * (h.Whf_f) * Wyf[j,f], and the
/// target is the argmax over j (ties to the smallest j). `active` flags come
/// from `x` (on means >= 0.5).
pub fn max_flow_field_with_hidden(m: &FactoredGrbm, x: &Image, h: &[f64]) -> Result<FlowField> {
    if x.len() != m.n_inputs() {
        return Err(Error::DimMismatch(format!(
            "input image has {} pixels, model expects {}",
            x.len(),
            m.n_inputs()
        )));
    }
    if m.n_inputs() != m.n_outputs() {
        return Err(Error::DimMismatch(format!(
            "flow needs matching input/output grids, model is {}x{}",
            m.n_inputs(),
            m.n_outputs()
        )));
    }
    if h.len() != m.n_hidden() {
        return Err(Error::DimMismatch(format!(
            "hidden vector has length {}, model expects {}",
            h.len(),
            m.n_hidden()
        )));
    }
    let fh = ArrayView1::from(h).dot(&m.hidden_factors);
    let gated = &m.input_factors * &fh;
    let scores = gated.dot(&m.output_factors.t());
    let targets = scores
        .rows()
        .into_iter()
        .map(|row| {
            let mut best = 0;
            let mut best_score = row[0];
            for (j, s) in row.iter().enumerate().skip(1) {
                if *s > best_score {
                    best = j;
                    best_score = *s;
                }
            }
            best
        })
        .collect();
    let active = (0..x.len()).map(|i| x.is_on(i)).collect();
    FlowField::from_targets(x.width(), x.height(), targets, active)
}

/// Infers the hidden state from the pair, then maps every input pixel to its
/// strongest output pixel. Hidden units enter as probabilities, so the field
/// is deterministic.
pub fn max_flow_field(m: &FactoredGrbm, pair: &ImagePair) -> Result<FlowField> {
    if pair.x.width() != pair.y.width() || pair.x.height() != pair.y.height() {
        return Err(Error::DimMismatch(format!(
            "pair frames differ: {}x{} vs {}x{}",
            pair.x.width(),
            pair.x.height(),
            pair.y.width(),
            pair.y.height()
        )));
    }
    let h = m.hidden_probs(pair.x.pixels(), pair.y.pixels())?;
    max_flow_field_with_hidden(m, &pair.x, &h.probs)
}

/// Applies the transformation inferred from an exemplar pair to a novel
/// image: hidden probabilities from the exemplar are binarized (strictly
/// above 0.5), driven with the novel input, and the output probabilities are
/// binarized the same way.
pub fn analogy_reconstruct(
    m: &FactoredGrbm,
    exemplar: &ImagePair,
    novel_x: &Image,
) -> Result<Image> {
    let h = m.hidden_probs(exemplar.x.pixels(), exemplar.y.pixels())?;
    let probs = m.output_probs(novel_x.pixels(), &h.binarized())?;
    let pixels = probs
        .iter()
        .map(|p| if *p > 0.5 { 1.0 } else { 0.0 })
        .collect();
    Image::new(exemplar.y.width(), exemplar.y.height(), pixels)
}

/// How [`render_flow`] serializes a field.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RenderMode {
    /// Plain text: header "# flow <width> <height>", then one line
    /// "row col drow dcol" per active pixel in index order.
    ArrowsText,
    /// Binary PPM: hue encodes direction, saturation encodes magnitude
    /// (relative to the largest active displacement), inactive pixels black.
    ColorPpm,
}

/// Writes a flow field to `path` in the requested mode.
pub fn render_flow(flow: &FlowField, path: &Path, mode: RenderMode) -> Result<()> {
    match mode {
        RenderMode::ArrowsText => {
            let mut out = format!("# flow {} {}\n", flow.width(), flow.height());
            for i in 0..flow.len() {
                if !flow.is_active(i) {
                    continue;
                }
                let (dx, dy) = flow.displacement(i);
                let (r, c) = (i / flow.width(), i % flow.width());
                out.push_str(&format!("{r} {c} {dy} {dx}\n"));
            }
            fs::write(path, out).map_err(|e| Error::io(path, e))
        }
        RenderMode::ColorPpm => {
            let max_mag = (0..flow.len())
                .filter(|i| flow.is_active(*i))
                .map(|i| {
                    let (dx, dy) = flow.displacement(i);
                    ((dx * dx + dy * dy) as f64).sqrt()
                })
                .fold(0.0, f64::max);
            let mut rgb = Vec::with_capacity(3 * flow.len());
            for i in 0..flow.len() {
                if !flow.is_active(i) {
                    rgb.extend_from_slice(&[0, 0, 0]);
                    continue;
                }
                let (dx, dy) = flow.displacement(i);
                let mag = ((dx * dx + dy * dy) as f64).sqrt();
                let hue = (dy as f64).atan2(dx as f64).to_degrees();
                let sat = if max_mag > 0.0 { mag / max_mag } else { 0.0 };
                rgb.extend_from_slice(&hsv_to_rgb(hue, sat, 1.0));
            }
            netpbm::write_ppm(path, flow.width(), flow.height(), &rgb)
        }
    }
}

/// One parsed arrow line: (row, col, drow, dcol) of an active pixel.
pub type ArrowLine = (usize, usize, i64, i64);

/// Parses a file written in [`RenderMode::ArrowsText`]; returns
/// (width, height, lines) with one [`ArrowLine`] per active pixel.
pub fn read_arrows_text(path: &Path) -> Result<(usize, usize, Vec<ArrowLine>)> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut lines = text.lines();
    let header = lines
        .next()
        .ok_or_else(|| Error::Manifest("empty arrows file".into()))?;
    let dims: Vec<usize> = header
        .strip_prefix("# flow ")
        .ok_or_else(|| Error::Manifest("arrows header must start with \"# flow\"".into()))?
        .split_whitespace()
        .map(|t| {
            t.parse()
                .map_err(|_| Error::Manifest(format!("invalid arrows dimension {t:?}")))
        })
        .collect::<Result<_>>()?;
    let [width, height]: [usize; 2] = dims
        .try_into()
        .map_err(|_| Error::Manifest("arrows header must hold width and height".into()))?;
    let mut rows = Vec::new();
    for (n, line) in lines.enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split_whitespace().collect();
        if fields.len() != 4 {
            return Err(Error::Manifest(format!(
                "arrows line {}: expected 4 fields",
                n + 2
            )));
        }
        let parse_err =
            |what: &str| Error::Manifest(format!("arrows line {}: invalid {what}", n + 2));
        rows.push((
            fields[0].parse().map_err(|_| parse_err("row"))?,
            fields[1].parse().map_err(|_| parse_err("col"))?,
            fields[2].parse().map_err(|_| parse_err("drow"))?,
            fields[3].parse().map_err(|_| parse_err("dcol"))?,
        ));
    }
    Ok((width, height, rows))
}

fn hsv_to_rgb(hue_deg: f64, sat: f64, val: f64) -> [u8; 3] {
    let h = hue_deg.rem_euclid(360.0) / 60.0;
    let sector = (h.floor() as usize) % 6;
    let f = h - h.floor();
    let p = val * (1.0 - sat);
    let q = val * (1.0 - f * sat);
    let t = val * (1.0 - (1.0 - f) * sat);
    let (r, g, b) = match sector {
        0 => (val, t, p),
        1 => (q, val, p),
        2 => (p, val, t),
        3 => (p, q, val),
        4 => (t, p, val),
        _ => (val, p, q),
    };
    [
        (r * 255.0).round() as u8,
        (g * 255.0).round() as u8,
        (b * 255.0).round() as u8,
    ]
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::datagen::{random_dots, translate_wrap, TransformLabel};
    use crate::rng::seeded_rng;

    /// Field whose every pixel moves by (dx, dy), wrapping at the borders.
    fn uniform_field(w: usize, h: usize, dx: i64, dy: i64, active: Vec<bool>) -> FlowField {
        let targets = (0..w * h)
            .map(|i| {
                let (r, c) = (i / w, i % w);
                let tr = (r as i64 + dy).rem_euclid(h as i64) as usize;
                let tc = (c as i64 + dx).rem_euclid(w as i64) as usize;
                tr * w + tc
            })
            .collect();
        FlowField::from_targets(w, h, targets, active).unwrap()
    }

    #[test]
    fn displacement_is_target_minus_source() {
        let f = FlowField::from_targets(3, 2, vec![4, 1, 2, 3, 4, 5], vec![true; 6]).unwrap();
        // Pixel 0 at (0,0) maps to pixel 4 at (1,1).
        assert_eq!(f.displacement(0), (1, 1));
        assert_eq!(f.displacement(1), (0, 0));
    }

    #[test]
    fn from_targets_validates() {
        assert!(FlowField::from_targets(2, 2, vec![0; 3], vec![true; 4]).is_err());
        assert!(FlowField::from_targets(2, 2, vec![4, 0, 0, 0], vec![true; 4]).is_err());
        assert!(FlowField::from_targets(0, 2, vec![], vec![]).is_err());
    }

    #[test]
    fn flow_scores_pick_the_wired_target() {
        // One factor per diagonal wiring: input i drives output (i+1) mod 4
        // through hidden unit 0. No training needed; weights are set by hand.
        let n = 4;
        let factors = n;
        let mut wxf = vec![0.0; n * factors];
        let mut wyf = vec![0.0; n * factors];
        for f in 0..factors {
            wxf[f * factors + f] = 1.0;
            wyf[((f + 1) % n) * factors + f] = 1.0;
        }
        let whf = vec![1.0; factors];
        let m = FactoredGrbm::from_vecs(factors, wxf, wyf, whf, vec![0.0; n], vec![0.0]).unwrap();
        let x = Image::new(2, 2, vec![1.0, 0.0, 1.0, 0.0]).unwrap();
        let flow = max_flow_field_with_hidden(&m, &x, &[1.0]).unwrap();
        assert_eq!(flow.targets(), &[1, 2, 3, 0]);
        assert_eq!(flow.active(), &[true, false, true, false]);
    }

    #[test]
    fn flow_argmax_survives_positive_rescaling_with_fixed_hidden() {
        let mut rng = seeded_rng(31);
        let m = FactoredGrbm::random(9, 9, 4, 6, 0.5, &mut rng).unwrap();
        let scaled = FactoredGrbm::from_vecs(
            6,
            m.input_factors().iter().map(|v| 3.0 * v).collect(),
            m.output_factors().iter().map(|v| 3.0 * v).collect(),
            m.hidden_factors().iter().map(|v| 3.0 * v).collect(),
            m.output_bias().to_vec(),
            m.hidden_bias().to_vec(),
        )
        .unwrap();
        let x = random_dots(3, 3, 0.5, 1).unwrap();
        let h = [0.7, 0.2, 0.9, 0.1];
        let a = max_flow_field_with_hidden(&m, &x, &h).unwrap();
        let b = max_flow_field_with_hidden(&scaled, &x, &h).unwrap();
        assert_eq!(a.targets(), b.targets());
    }

    #[test]
    fn flow_ties_break_to_smallest_index() {
        // Zero model: all scores equal, so every pixel maps to output 0.
        let m = FactoredGrbm::from_vecs(
            2,
            vec![0.0; 8],
            vec![0.0; 8],
            vec![0.0; 4],
            vec![0.0; 4],
            vec![0.0; 2],
        )
        .unwrap();
        let x = Image::new(2, 2, vec![1.0; 4]).unwrap();
        let flow = max_flow_field_with_hidden(&m, &x, &[0.5, 0.5]).unwrap();
        assert_eq!(flow.targets(), &[0; 4]);
    }

    #[test]
    fn analogy_of_zero_novel_input_with_zero_bias_is_blank() {
        let mut rng = seeded_rng(8);
        let m = FactoredGrbm::random(9, 9, 3, 5, 0.4, &mut rng).unwrap();
        let pair = ImagePair {
            x: random_dots(3, 3, 0.5, 2).unwrap(),
            y: random_dots(3, 3, 0.5, 3).unwrap(),
            label: TransformLabel::Identity,
        };
        let blank = Image::zeros(3, 3).unwrap();
        let out = analogy_reconstruct(&m, &pair, &blank).unwrap();
        // Zero input kills the factor drive; sigmoid(0) = 0.5 binarizes to 0
        // under the strict threshold.
        assert_eq!(out.on_count(), 0);
    }

    #[test]
    fn arrows_text_roundtrip_and_uniform_lines() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("flow.txt");
        // Active pixels avoid the wrap column, so every displacement is (1, 0).
        let active: Vec<bool> = (0..12).map(|i| i % 4 != 3).collect();
        let f = uniform_field(4, 3, 1, 0, active);
        render_flow(&f, &path, RenderMode::ArrowsText).unwrap();
        let text = fs::read_to_string(&path).unwrap();
        for line in text.lines().skip(1) {
            assert!(
                line.ends_with(" 0 1"),
                "line {line:?} should encode drow=0 dcol=1"
            );
        }
        let (w, h, rows) = read_arrows_text(&path).unwrap();
        assert_eq!((w, h), (4, 3));
        assert_eq!(rows.len(), f.active_count());
        for (r, c, drow, dcol) in &rows {
            let (dx, dy) = f.displacement(r * 4 + c);
            assert_eq!((*drow, *dcol), (dy, dx), "at ({r}, {c})");
        }
    }

    #[test]
    fn arrows_text_empty_active_set_is_header_only() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("flow.txt");
        let f = uniform_field(3, 3, 1, 1, vec![false; 9]);
        render_flow(&f, &path, RenderMode::ArrowsText).unwrap();
        assert_eq!(fs::read_to_string(&path).unwrap(), "# flow 3 3\n");
        let (_, _, rows) = read_arrows_text(&path).unwrap();
        assert!(rows.is_empty());
    }

    #[test]
    fn color_ppm_paints_inactive_black() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("flow.ppm");
        let mut active = vec![true; 9];
        active[4] = false;
        let f = uniform_field(3, 3, 1, 0, active);
        render_flow(&f, &path, RenderMode::ColorPpm).unwrap();
        let data = fs::read(&path).unwrap();
        assert!(data.starts_with(b"P6\n3 3\n255\n"));
        let body = &data[data.len() - 27..];
        assert_eq!(&body[4 * 3..4 * 3 + 3], &[0, 0, 0]);
        assert_ne!(&body[0..3], &[0, 0, 0]);
    }

    #[test]
    fn analogy_wrap_shift_with_handmade_copy_model() {
        // Hand-built model that copies input pixel i to output (i shifted by
        // one column, wrapped) when hidden unit 0 is on: exercises the analogy
        // path end to end without training.
        let (w, h) = (3usize, 3usize);
        let n = w * h;
        let mut wxf = vec![0.0; n * n];
        let mut wyf = vec![0.0; n * n];
        for f in 0..n {
            let (r, c) = (f / w, f % w);
            let shifted = r * w + (c + 1) % w;
            wxf[f * n + f] = 1.0;
            wyf[shifted * n + f] = 1.0;
        }
        let whf = vec![8.0; n];
        let ybias = vec![-4.0; n];
        let m = FactoredGrbm::from_vecs(n, wxf, wyf, whf, ybias, vec![0.0]).unwrap();
        let exemplar = ImagePair {
            x: random_dots(w, h, 0.5, 4).unwrap(),
            y: random_dots(w, h, 0.5, 5).unwrap(),
            label: TransformLabel::Identity,
        };
        // Whatever hidden state the exemplar induces, the only hidden unit
        // gates the shift wiring; with it on, output = shift(input).
        let h_state = m
            .hidden_probs(exemplar.x.pixels(), exemplar.y.pixels())
            .unwrap();
        assert!(h_state.probs[0] > 0.5, "exemplar must switch the gate on");
        let novel = random_dots(w, h, 0.4, 6).unwrap();
        let out = analogy_reconstruct(&m, &exemplar, &novel).unwrap();
        assert_eq!(out, translate_wrap(&novel, 1, 0));
    }
}
