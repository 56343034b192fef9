//! Model definitions and exact energy/probability mathematics.
//!
//! Two energy-based models over binary units: a baseline RBM (visible layer
//! plus hidden layer, bilinear energy) and the factored three-way model whose
//! energy is trilinear in a conditioning input image, an output image, and a
//! hidden vector. The three-way weight tensor W_ijk is parameterized as
//! sum_f Wxf[i,f] * Wyf[j,f] * Whf[k,f], which keeps every operation at
//! O((I+J+K)*F) instead of O(I*J*K).
//!
//! All public vector arguments and results are plain slices/Vecs in the unit
//! ordering of the owning image (row-major); `ndarray` stays internal.

use std::fs;
use std::path::Path;

use ndarray::{Array1, Array2, ArrayView1};
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};

/// Numerically stable logistic sigmoid; never overflows for any finite input.
pub(crate) fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

fn check_len(name: &str, got: usize, want: usize) -> Result<()> {
    if got == want {
        Ok(())
    } else {
        Err(Error::DimMismatch(format!(
            "{name} has length {got}, model expects {want}"
        )))
    }
}

fn check_finite(name: &str, values: &[f64]) -> Result<()> {
    if values.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(Error::InvalidArg(format!(
            "{name} contains a non-finite entry"
        )))
    }
}

/// Hidden-unit Bernoulli probabilities, with an optional sampled binary
/// realization.
#[derive(Debug, Clone, PartialEq)]
pub struct HiddenState {
    pub probs: Vec<f64>,
    pub sample: Option<Vec<f64>>,
}

impl HiddenState {
    pub(crate) fn from_probs(probs: Vec<f64>) -> Self {
        HiddenState {
            probs,
            sample: None,
        }
    }

    /// Hard-thresholds the probabilities: strictly above 0.5 becomes 1.
    pub fn binarized(&self) -> Vec<f64> {
        self.probs
            .iter()
            .map(|p| if *p > 0.5 { 1.0 } else { 0.0 })
            .collect()
    }

    /// Draws a Bernoulli sample (`u < p` with `u ~ Uniform[0,1)`), stores it,
    /// and returns it.
    pub fn draw(&mut self, rng: &mut impl Rng) -> &[f64] {
        let sample = self
            .probs
            .iter()
            .map(|p| if rng.random::<f64>() < *p { 1.0 } else { 0.0 })
            .collect();
        self.sample = Some(sample);
        self.sample.as_deref().expect("just stored")
    }
}

/// Classic two-layer RBM: visible units x, hidden units h,
/// E(x,h) = -x'Wh - b'x - c'h.
#[derive(Debug, Clone, PartialEq)]
pub struct BaselineRbm {
    weights: Array2<f64>,
    visible_bias: Array1<f64>,
    hidden_bias: Array1<f64>,
}

impl BaselineRbm {
    /// `weights` is row-major visible x hidden; dimensions come from the bias
    /// lengths.
    pub fn new(weights: Vec<f64>, visible_bias: Vec<f64>, hidden_bias: Vec<f64>) -> Result<Self> {
        let visible = visible_bias.len();
        let hidden = hidden_bias.len();
        if visible == 0 || hidden == 0 {
            return Err(Error::InvalidArg("layer sizes must be positive".into()));
        }
        if weights.len() != visible * hidden {
            return Err(Error::DimMismatch(format!(
                "weight matrix has {} entries, expected {}x{}",
                weights.len(),
                visible,
                hidden
            )));
        }
        check_finite("weights", &weights)?;
        check_finite("visible_bias", &visible_bias)?;
        check_finite("hidden_bias", &hidden_bias)?;
        Ok(BaselineRbm {
            weights: Array2::from_shape_vec((visible, hidden), weights).expect("length checked"),
            visible_bias: Array1::from_vec(visible_bias),
            hidden_bias: Array1::from_vec(hidden_bias),
        })
    }

    pub fn n_visible(&self) -> usize {
        self.visible_bias.len()
    }

    pub fn n_hidden(&self) -> usize {
        self.hidden_bias.len()
    }

    /// E(x, h) = -sum_ij x_i h_j W_ij - b.x - c.h.
    pub fn energy(&self, visible: &[f64], hidden: &[f64]) -> Result<f64> {
        check_len("visible", visible.len(), self.n_visible())?;
        check_len("hidden", hidden.len(), self.n_hidden())?;
        let x = ArrayView1::from(visible);
        let h = ArrayView1::from(hidden);
        let interaction = x.dot(&self.weights).dot(&h);
        Ok(-interaction - x.dot(&self.visible_bias) - h.dot(&self.hidden_bias))
    }

    /// P(h_j = 1 | x), elementwise logistic.
    pub fn hidden_probs(&self, visible: &[f64]) -> Result<Vec<f64>> {
        check_len("visible", visible.len(), self.n_visible())?;
        let pre = ArrayView1::from(visible).dot(&self.weights) + &self.hidden_bias;
        Ok(pre.iter().map(|z| sigmoid(*z)).collect())
    }

    /// P(x_i = 1 | h), elementwise logistic.
    pub fn visible_probs(&self, hidden: &[f64]) -> Result<Vec<f64>> {
        check_len("hidden", hidden.len(), self.n_hidden())?;
        let pre = self.weights.dot(&ArrayView1::from(hidden)) + &self.visible_bias;
        Ok(pre.iter().map(|z| sigmoid(*z)).collect())
    }
}

/// Factored three-way model. The energy, conditioned on an input image x, is
///
/// ```text
/// E(y, h; x) = -sum_f (x.Wxf_f)(y.Wyf_f)(h.Whf_f) - ybias.y - hbias.h
/// ```
///
/// where `Wxf_f` is column f of the input-to-factor matrix, and likewise for
/// the output and hidden factor matrices.
#[derive(Debug, Clone, PartialEq)]
pub struct FactoredGrbm {
    pub(crate) input_factors: Array2<f64>,  // I x F
    pub(crate) output_factors: Array2<f64>, // J x F
    pub(crate) hidden_factors: Array2<f64>, // K x F
    pub(crate) output_bias: Array1<f64>,    // J
    pub(crate) hidden_bias: Array1<f64>,    // K
}

impl FactoredGrbm {
    /// Builds a model from row-major factor matrices. Input count is inferred
    /// from `wxf.len() / factors`; output and hidden counts come from the bias
    /// lengths.
    pub fn from_vecs(
        factors: usize,
        wxf: Vec<f64>,
        wyf: Vec<f64>,
        whf: Vec<f64>,
        ybias: Vec<f64>,
        hbias: Vec<f64>,
    ) -> Result<Self> {
        let outputs = ybias.len();
        let hidden = hbias.len();
        if factors == 0 || outputs == 0 || hidden == 0 || wxf.is_empty() {
            return Err(Error::InvalidArg(
                "model dimensions must be positive".into(),
            ));
        }
        if !wxf.len().is_multiple_of(factors) {
            return Err(Error::DimMismatch(format!(
                "input factor matrix has {} entries, not divisible by {factors} factors",
                wxf.len()
            )));
        }
        let inputs = wxf.len() / factors;
        if wyf.len() != outputs * factors {
            return Err(Error::DimMismatch(format!(
                "output factor matrix has {} entries, expected {}x{}",
                wyf.len(),
                outputs,
                factors
            )));
        }
        if whf.len() != hidden * factors {
            return Err(Error::DimMismatch(format!(
                "hidden factor matrix has {} entries, expected {}x{}",
                whf.len(),
                hidden,
                factors
            )));
        }
        for (name, vs) in [
            ("wxf", &wxf),
            ("wyf", &wyf),
            ("whf", &whf),
            ("ybias", &ybias),
            ("hbias", &hbias),
        ] {
            check_finite(name, vs)?;
        }
        Ok(FactoredGrbm {
            input_factors: Array2::from_shape_vec((inputs, factors), wxf).expect("length checked"),
            output_factors: Array2::from_shape_vec((outputs, factors), wyf)
                .expect("length checked"),
            hidden_factors: Array2::from_shape_vec((hidden, factors), whf).expect("length checked"),
            output_bias: Array1::from_vec(ybias),
            hidden_bias: Array1::from_vec(hbias),
        })
    }

    /// Fresh model with Normal(0, std^2) factor weights and zero biases.
    /// Weights are drawn row-major, input then output then hidden matrix, so
    /// the stream position is reproducible.
    pub fn random(
        inputs: usize,
        outputs: usize,
        hidden: usize,
        factors: usize,
        std: f64,
        rng: &mut impl Rng,
    ) -> Result<Self> {
        if !(std.is_finite() && std >= 0.0) {
            return Err(Error::InvalidArg(format!(
                "weight std {std} must be finite and non-negative"
            )));
        }
        let mut draw = |n: usize| -> Vec<f64> {
            (0..n)
                .map(|_| {
                    let z: f64 = StandardNormal.sample(rng);
                    std * z
                })
                .collect()
        };
        let wxf = draw(inputs * factors);
        let wyf = draw(outputs * factors);
        let whf = draw(hidden * factors);
        FactoredGrbm::from_vecs(
            factors,
            wxf,
            wyf,
            whf,
            vec![0.0; outputs],
            vec![0.0; hidden],
        )
    }

    pub fn n_inputs(&self) -> usize {
        self.input_factors.nrows()
    }

    pub fn n_outputs(&self) -> usize {
        self.output_factors.nrows()
    }

    pub fn n_hidden(&self) -> usize {
        self.hidden_factors.nrows()
    }

    pub fn n_factors(&self) -> usize {
        self.input_factors.ncols()
    }

    /// Row-major I x F input factor weights.
    pub fn input_factors(&self) -> &[f64] {
        self.input_factors.as_slice().expect("standard layout")
    }

    /// Row-major J x F output factor weights.
    pub fn output_factors(&self) -> &[f64] {
        self.output_factors.as_slice().expect("standard layout")
    }

    /// Row-major K x F hidden factor weights.
    pub fn hidden_factors(&self) -> &[f64] {
        self.hidden_factors.as_slice().expect("standard layout")
    }

    pub fn output_bias(&self) -> &[f64] {
        self.output_bias.as_slice().expect("standard layout")
    }

    pub fn hidden_bias(&self) -> &[f64] {
        self.hidden_bias.as_slice().expect("standard layout")
    }

    fn check_input(&self, x: &[f64]) -> Result<()> {
        check_len("input image", x.len(), self.n_inputs())
    }

    fn check_output(&self, y: &[f64]) -> Result<()> {
        check_len("output image", y.len(), self.n_outputs())
    }

    fn check_hidden(&self, h: &[f64]) -> Result<()> {
        check_len("hidden vector", h.len(), self.n_hidden())
    }

    /// v' M for a unit vector against a factor matrix: the F per-factor
    /// projections.
    fn project(v: &[f64], m: &Array2<f64>) -> Array1<f64> {
        ArrayView1::from(v).dot(m)
    }

    /// Conditional energy E(y, h; x), computed factor-wise in O((I+J+K)F).
    pub fn energy(&self, x: &[f64], y: &[f64], h: &[f64]) -> Result<f64> {
        self.check_input(x)?;
        self.check_output(y)?;
        self.check_hidden(h)?;
        let fx = Self::project(x, &self.input_factors);
        let fy = Self::project(y, &self.output_factors);
        let fh = Self::project(h, &self.hidden_factors);
        let trilinear: f64 = fx
            .iter()
            .zip(fy.iter())
            .zip(fh.iter())
            .map(|((a, b), c)| a * b * c)
            .sum();
        let yb = ArrayView1::from(y).dot(&self.output_bias);
        let hb = ArrayView1::from(h).dot(&self.hidden_bias);
        Ok(-trilinear - yb - hb)
    }

    /// Materializes W_ijk = sum_f Wxf[i,f] Wyf[j,f] Whf[k,f] as a row-major
    /// I x J x K vector. Exact but cubic; an oracle for small models only.
    pub fn full_weight_tensor(&self) -> Vec<f64> {
        let (i_n, j_n, k_n) = (self.n_inputs(), self.n_outputs(), self.n_hidden());
        let mut tensor = vec![0.0; i_n * j_n * k_n];
        for i in 0..i_n {
            for j in 0..j_n {
                for k in 0..k_n {
                    let w: f64 = (0..self.n_factors())
                        .map(|f| {
                            self.input_factors[(i, f)]
                                * self.output_factors[(j, f)]
                                * self.hidden_factors[(k, f)]
                        })
                        .sum();
                    tensor[(i * j_n + j) * k_n + k] = w;
                }
            }
        }
        tensor
    }

    /// P(h_k = 1 | y; x): logistic of the factor-gated input-output match plus
    /// the hidden bias. Independent of the output bias.
    pub fn hidden_probs(&self, x: &[f64], y: &[f64]) -> Result<HiddenState> {
        self.check_input(x)?;
        self.check_output(y)?;
        let fx = Self::project(x, &self.input_factors);
        let fy = Self::project(y, &self.output_factors);
        let pre = self.hidden_factors.dot(&(&fx * &fy)) + &self.hidden_bias;
        Ok(HiddenState::from_probs(
            pre.iter().map(|z| sigmoid(*z)).collect(),
        ))
    }

    /// P(y_j = 1 | h; x): logistic of the factor-gated input-hidden drive plus
    /// the output bias. `h` may be binary or mean-field probabilities.
    pub fn output_probs(&self, x: &[f64], h: &[f64]) -> Result<Vec<f64>> {
        self.check_input(x)?;
        self.check_hidden(h)?;
        let fx = Self::project(x, &self.input_factors);
        let fh = Self::project(h, &self.hidden_factors);
        let pre = self.output_factors.dot(&(&fx * &fh)) + &self.output_bias;
        Ok(pre.iter().map(|z| sigmoid(*z)).collect())
    }

    /// Spatial (within-image) energy with the input factor matrix tied to both
    /// image slots: E = -sum_f (x.Wxf_f)^2 (h.Whf_f). No bias terms.
    pub fn spatial_energy(&self, x: &[f64], h: &[f64]) -> Result<f64> {
        self.check_input(x)?;
        self.check_hidden(h)?;
        let fx = Self::project(x, &self.input_factors);
        let fh = Self::project(h, &self.hidden_factors);
        Ok(-fx
            .iter()
            .zip(fh.iter())
            .map(|(a, b)| a * a * b)
            .sum::<f64>())
    }

    /// P(h_k = 1 | x) for the spatial case: logistic of
    /// sum_f Whf[k,f] (x.Wxf_f)^2 plus the hidden bias.
    pub fn spatial_hidden_probs(&self, x: &[f64]) -> Result<HiddenState> {
        self.check_input(x)?;
        let fx = Self::project(x, &self.input_factors);
        let fx2 = &fx * &fx;
        let pre = self.hidden_factors.dot(&fx2) + &self.hidden_bias;
        Ok(HiddenState::from_probs(
            pre.iter().map(|z| sigmoid(*z)).collect(),
        ))
    }

    /// Writes the model in the GRBM1 format: ASCII magic line "GRBM1", ASCII
    /// header "I J K F", then little-endian f64 arrays Wxf, Wyf, Whf, ybias,
    /// hbias, row-major. Round-trips bit-exactly.
    pub fn save(&self, path: &Path) -> Result<()> {
        let mut out = Vec::with_capacity(
            64 + 8
                * (self.input_factors.len()
                    + self.output_factors.len()
                    + self.hidden_factors.len()
                    + self.output_bias.len()
                    + self.hidden_bias.len()),
        );
        out.extend_from_slice(b"GRBM1\n");
        out.extend_from_slice(
            format!(
                "{} {} {} {}\n",
                self.n_inputs(),
                self.n_outputs(),
                self.n_hidden(),
                self.n_factors()
            )
            .as_bytes(),
        );
        for values in [
            self.input_factors(),
            self.output_factors(),
            self.hidden_factors(),
            self.output_bias(),
            self.hidden_bias(),
        ] {
            for v in values {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        fs::write(path, out).map_err(|e| Error::io(path, e))
    }

    /// Reads a GRBM1 model file written by [`FactoredGrbm::save`].
    pub fn load(path: &Path) -> Result<Self> {
        let data = fs::read(path).map_err(|e| Error::io(path, e))?;
        let rest = data
            .strip_prefix(b"GRBM1\n")
            .ok_or_else(|| Error::ModelFormat("bad magic, expected \"GRBM1\"".into()))?;
        let newline = rest
            .iter()
            .position(|b| *b == b'\n')
            .ok_or_else(|| Error::ModelFormat("missing dimension header".into()))?;
        let header = std::str::from_utf8(&rest[..newline])
            .map_err(|_| Error::ModelFormat("dimension header is not ASCII".into()))?;
        let dims: Vec<usize> = header
            .split_whitespace()
            .map(|t| {
                t.parse()
                    .map_err(|_| Error::ModelFormat(format!("invalid dimension {t:?}")))
            })
            .collect::<Result<_>>()?;
        let [i_n, j_n, k_n, f_n]: [usize; 4] = dims
            .try_into()
            .map_err(|_| Error::ModelFormat("dimension header must hold exactly I J K F".into()))?;
        let payload = &rest[newline + 1..];
        let counts = [i_n * f_n, j_n * f_n, k_n * f_n, j_n, k_n];
        let total: usize = counts.iter().sum();
        if payload.len() != total * 8 {
            return Err(Error::ModelFormat(format!(
                "truncated parameter data: expected {} bytes, got {}",
                total * 8,
                payload.len()
            )));
        }
        let mut values = payload
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")));
        let mut take = |n: usize| -> Vec<f64> { values.by_ref().take(n).collect() };
        let wxf = take(counts[0]);
        let wyf = take(counts[1]);
        let whf = take(counts[2]);
        let ybias = take(counts[3]);
        let hbias = take(counts[4]);
        let model = FactoredGrbm::from_vecs(f_n, wxf, wyf, whf, ybias, hbias)?;
        if model.n_inputs() != i_n {
            return Err(Error::ModelFormat(format!(
                "header says {i_n} input units but payload implies {}",
                model.n_inputs()
            )));
        }
        Ok(model)
    }
}
