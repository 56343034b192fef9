//! Contrastive-divergence training of the factored three-way model.
//!
//! One CD-1 update: infer hidden probabilities from (x, y), sample a binary
//! hidden vector, reconstruct y as mean-field probabilities, re-infer hidden
//! probabilities from the reconstruction, and move every parameter along the
//! difference between positive and negative statistics of -dE/dtheta, with
//! momentum. A sparsity term nudges hidden biases toward a target activation.
//!
//! Determinism contract: all stochastic choices (weight init, epoch shuffles,
//! hidden-unit sampling) come from one ChaCha8 stream seeded by the config.
//! Bernoulli uniforms are pre-drawn row-major per batch, so the optional batch
//! parallelism (`threads > 1`) splits rows into contiguous chunks and reduces
//! chunk results in index order; results are reproducible for a fixed thread
//! count, and `threads = 1` is the plain sequential path.

use std::time::Instant;

use ndarray::{Array1, Array2, ArrayView2, Axis, Zip};
use rand::seq::SliceRandom;
use rand_chacha::ChaCha8Rng;

use crate::datagen::ImagePair;
use crate::error::{Error, Result};
use crate::model::{sigmoid, FactoredGrbm};
use crate::rng::seeded_rng;

/// Hyperparameters for a training run. `Default` gives the reference
/// configuration: 200 factors, 100 hidden units, 500 epochs, batches of 100,
/// learning rate 0.01, momentum 0.9, hidden activation target 0.02.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub factors: usize,
    pub hidden: usize,
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub momentum: f64,
    /// Desired mean hidden activation; enforced by nudging hidden biases.
    pub target_hidden: f64,
    /// Step size of the hidden-bias nudge, per update.
    pub sparsity_rate: f64,
    pub weight_init_std: f64,
    pub seed: u64,
    /// Number of contrastive-divergence steps; only 1 is supported.
    pub cd_steps: usize,
    /// Batch-parallel chunk count; 1 means sequential.
    pub threads: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            factors: 200,
            hidden: 100,
            epochs: 500,
            batch_size: 100,
            learning_rate: 0.01,
            momentum: 0.9,
            target_hidden: 0.02,
            sparsity_rate: 0.001,
            weight_init_std: 0.01,
            seed: 0,
            cd_steps: 1,
            threads: 1,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let reject = |msg: String| Err(Error::InvalidArg(msg));
        if self.factors == 0 || self.hidden == 0 {
            return reject(format!(
                "factors ({}) and hidden ({}) must be positive",
                self.factors, self.hidden
            ));
        }
        if self.batch_size == 0 {
            return reject("batch_size must be positive".into());
        }
        if !(self.learning_rate.is_finite() && self.learning_rate >= 0.0) {
            return reject(format!(
                "learning_rate {} must be finite and non-negative",
                self.learning_rate
            ));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return reject(format!("momentum {} must lie in [0, 1)", self.momentum));
        }
        if !(0.0..=1.0).contains(&self.target_hidden) {
            return reject(format!(
                "target_hidden {} must lie in [0, 1]",
                self.target_hidden
            ));
        }
        if !(self.sparsity_rate.is_finite() && self.sparsity_rate >= 0.0) {
            return reject(format!(
                "sparsity_rate {} must be finite and non-negative",
                self.sparsity_rate
            ));
        }
        if !(self.weight_init_std.is_finite() && self.weight_init_std >= 0.0) {
            return reject(format!(
                "weight_init_std {} must be finite and non-negative",
                self.weight_init_std
            ));
        }
        if self.cd_steps != 1 {
            return reject(format!(
                "cd_steps {} unsupported: only single-step contrastive divergence",
                self.cd_steps
            ));
        }
        if self.threads == 0 {
            return reject("threads must be at least 1".into());
        }
        Ok(())
    }
}

/// One value per model parameter, in the model's five blocks. Used for both
/// gradients and momentum velocity.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamBlocks {
    pub(crate) input_factors: Array2<f64>,
    pub(crate) output_factors: Array2<f64>,
    pub(crate) hidden_factors: Array2<f64>,
    pub(crate) output_bias: Array1<f64>,
    pub(crate) hidden_bias: Array1<f64>,
}

impl ParamBlocks {
    pub fn zeros_like(m: &FactoredGrbm) -> Self {
        ParamBlocks {
            input_factors: Array2::zeros((m.n_inputs(), m.n_factors())),
            output_factors: Array2::zeros((m.n_outputs(), m.n_factors())),
            hidden_factors: Array2::zeros((m.n_hidden(), m.n_factors())),
            output_bias: Array1::zeros(m.n_outputs()),
            hidden_bias: Array1::zeros(m.n_hidden()),
        }
    }

    /// Row-major I x F block.
    pub fn input_factors(&self) -> &[f64] {
        self.input_factors.as_slice().expect("standard layout")
    }

    /// Row-major J x F block.
    pub fn output_factors(&self) -> &[f64] {
        self.output_factors.as_slice().expect("standard layout")
    }

    /// Row-major K x F block.
    pub fn hidden_factors(&self) -> &[f64] {
        self.hidden_factors.as_slice().expect("standard layout")
    }

    pub fn output_bias(&self) -> &[f64] {
        self.output_bias.as_slice().expect("standard layout")
    }

    pub fn hidden_bias(&self) -> &[f64] {
        self.hidden_bias.as_slice().expect("standard layout")
    }

    fn add_assign(&mut self, other: &ParamBlocks) {
        self.input_factors += &other.input_factors;
        self.output_factors += &other.output_factors;
        self.hidden_factors += &other.hidden_factors;
        self.output_bias += &other.output_bias;
        self.hidden_bias += &other.hidden_bias;
    }

    fn sub_assign(&mut self, other: &ParamBlocks) {
        self.input_factors -= &other.input_factors;
        self.output_factors -= &other.output_factors;
        self.hidden_factors -= &other.hidden_factors;
        self.output_bias -= &other.output_bias;
        self.hidden_bias -= &other.hidden_bias;
    }

    fn scale(&mut self, a: f64) {
        self.input_factors *= a;
        self.output_factors *= a;
        self.hidden_factors *= a;
        self.output_bias *= a;
        self.hidden_bias *= a;
    }

    /// velocity = momentum * velocity + rate * grad, blockwise.
    fn momentum_update(&mut self, momentum: f64, rate: f64, grad: &ParamBlocks) {
        let blend = |v: &mut Array2<f64>, g: &Array2<f64>| {
            v.zip_mut_with(g, |v, g| *v = momentum * *v + rate * *g);
        };
        blend(&mut self.input_factors, &grad.input_factors);
        blend(&mut self.output_factors, &grad.output_factors);
        blend(&mut self.hidden_factors, &grad.hidden_factors);
        self.output_bias
            .zip_mut_with(&grad.output_bias, |v, g| *v = momentum * *v + rate * *g);
        self.hidden_bias
            .zip_mut_with(&grad.hidden_bias, |v, g| *v = momentum * *v + rate * *g);
    }

    fn apply_to(&self, m: &mut FactoredGrbm) {
        m.input_factors += &self.input_factors;
        m.output_factors += &self.output_factors;
        m.hidden_factors += &self.hidden_factors;
        m.output_bias += &self.output_bias;
        m.hidden_bias += &self.hidden_bias;
    }

    fn first_non_finite_block(&self) -> Option<&'static str> {
        let bad2 = |a: &Array2<f64>| a.iter().any(|v| !v.is_finite());
        let bad1 = |a: &Array1<f64>| a.iter().any(|v| !v.is_finite());
        if bad2(&self.input_factors) {
            Some("input_factors")
        } else if bad2(&self.output_factors) {
            Some("output_factors")
        } else if bad2(&self.hidden_factors) {
            Some("hidden_factors")
        } else if bad1(&self.output_bias) {
            Some("output_bias")
        } else if bad1(&self.hidden_bias) {
            Some("hidden_bias")
        } else {
            None
        }
    }

    fn matches_model(&self, m: &FactoredGrbm) -> bool {
        self.input_factors.dim() == (m.n_inputs(), m.n_factors())
            && self.output_factors.dim() == (m.n_outputs(), m.n_factors())
            && self.hidden_factors.dim() == (m.n_hidden(), m.n_factors())
            && self.output_bias.len() == m.n_outputs()
            && self.hidden_bias.len() == m.n_hidden()
    }
}

/// Sums over batch rows of -dE/dtheta for every parameter block. `fx`, `fy`,
/// `fh` are the precomputed per-row factor projections of `xs`, `ys`, `hs`.
/// This is the single code path behind both [`energy_gradients`] and the CD-1
/// statistics.
fn stats_sums(
    xs: &ArrayView2<f64>,
    ys: &ArrayView2<f64>,
    hs: &ArrayView2<f64>,
    fx: &Array2<f64>,
    fy: &Array2<f64>,
    fh: &Array2<f64>,
) -> ParamBlocks {
    ParamBlocks {
        input_factors: xs.t().dot(&(fy * fh)),
        output_factors: ys.t().dot(&(fx * fh)),
        hidden_factors: hs.t().dot(&(fx * fy)),
        output_bias: ys.sum_axis(Axis(0)),
        hidden_bias: hs.sum_axis(Axis(0)),
    }
}

/// Analytic gradients -dE/dtheta of the conditional energy at (x, y, h), one
/// entry per parameter. The central finite-difference oracle for this is
/// (E(theta+eps) - E(theta-eps)) / (2 eps) against the negation of each block.
pub fn energy_gradients(m: &FactoredGrbm, x: &[f64], y: &[f64], h: &[f64]) -> Result<ParamBlocks> {
    // Reuse the energy entry for its dimension checks.
    m.energy(x, y, h)?;
    let xs = ArrayView2::from_shape((1, x.len()), x).expect("row vector");
    let ys = ArrayView2::from_shape((1, y.len()), y).expect("row vector");
    let hs = ArrayView2::from_shape((1, h.len()), h).expect("row vector");
    let fx = xs.dot(&m.input_factors);
    let fy = ys.dot(&m.output_factors);
    let fh = hs.dot(&m.hidden_factors);
    Ok(stats_sums(&xs, &ys, &hs, &fx, &fy, &fh))
}

struct ChunkStats {
    pos: ParamBlocks,
    neg: ParamBlocks,
    err_sum: f64,
    hidden_sum: Array1<f64>,
}

/// Runs the full CD-1 pipeline on a contiguous row chunk, returning summed
/// (not averaged) statistics. `us` holds the pre-drawn sampling uniforms.
fn chunk_pipeline(
    m: &FactoredGrbm,
    xs: ArrayView2<f64>,
    ys: ArrayView2<f64>,
    us: ArrayView2<f64>,
) -> ChunkStats {
    let fx = xs.dot(&m.input_factors);
    let fy = ys.dot(&m.output_factors);

    let h_pos = ((&fx * &fy).dot(&m.hidden_factors.t()) + &m.hidden_bias).mapv(sigmoid);
    let h_sample = Zip::from(&h_pos)
        .and(&us)
        .map_collect(|p, u| if u < p { 1.0 } else { 0.0 });

    let f_sample = h_sample.dot(&m.hidden_factors);
    let y_hat = ((&fx * &f_sample).dot(&m.output_factors.t()) + &m.output_bias).mapv(sigmoid);

    let fy_hat = y_hat.dot(&m.output_factors);
    let h_neg = ((&fx * &fy_hat).dot(&m.hidden_factors.t()) + &m.hidden_bias).mapv(sigmoid);

    let fh_pos = h_pos.dot(&m.hidden_factors);
    let fh_neg = h_neg.dot(&m.hidden_factors);

    let pos = stats_sums(&xs, &ys, &h_pos.view(), &fx, &fy, &fh_pos);
    let neg = stats_sums(&xs, &y_hat.view(), &h_neg.view(), &fx, &fy_hat, &fh_neg);

    let residual = &ys - &y_hat;
    let err_sum = residual.mapv(|r| r * r).sum() / ys.ncols() as f64;
    let hidden_sum = h_pos.sum_axis(Axis(0));
    ChunkStats {
        pos,
        neg,
        err_sum,
        hidden_sum,
    }
}

/// Splits `rows` into at most `threads` contiguous chunks, runs the pipeline
/// on each (in parallel when threads > 1), and reduces results in chunk-index
/// order.
fn batched_pipeline(
    m: &FactoredGrbm,
    xs: &Array2<f64>,
    ys: &Array2<f64>,
    us: &Array2<f64>,
    threads: usize,
) -> ChunkStats {
    let rows = xs.nrows();
    let chunks = threads.clamp(1, rows.max(1));
    if chunks <= 1 {
        return chunk_pipeline(m, xs.view(), ys.view(), us.view());
    }
    let base = rows / chunks;
    let extra = rows % chunks;
    let mut bounds = Vec::with_capacity(chunks);
    let mut start = 0;
    for c in 0..chunks {
        let len = base + usize::from(c < extra);
        bounds.push((start, start + len));
        start += len;
    }
    let results: Vec<ChunkStats> = std::thread::scope(|scope| {
        let handles: Vec<_> = bounds
            .iter()
            .map(|&(a, b)| {
                scope.spawn(move || {
                    chunk_pipeline(
                        m,
                        xs.slice(ndarray::s![a..b, ..]),
                        ys.slice(ndarray::s![a..b, ..]),
                        us.slice(ndarray::s![a..b, ..]),
                    )
                })
            })
            .collect();
        handles
            .into_iter()
            .map(|h| h.join().expect("pipeline thread panicked"))
            .collect()
    });
    let mut iter = results.into_iter();
    let mut total = iter.next().expect("at least one chunk");
    for part in iter {
        total.pos.add_assign(&part.pos);
        total.neg.add_assign(&part.neg);
        total.err_sum += part.err_sum;
        total.hidden_sum += &part.hidden_sum;
    }
    total
}

fn batch_matrices(batch: &[ImagePair], m: &FactoredGrbm) -> Result<(Array2<f64>, Array2<f64>)> {
    let (i_n, j_n) = (m.n_inputs(), m.n_outputs());
    let mut xv = Vec::with_capacity(batch.len() * i_n);
    let mut yv = Vec::with_capacity(batch.len() * j_n);
    for pair in batch {
        if pair.x.len() != i_n || pair.y.len() != j_n {
            return Err(Error::DimMismatch(format!(
                "pair is {}x{} -> {}x{}, model expects {i_n} input and {j_n} output units",
                pair.x.width(),
                pair.x.height(),
                pair.y.width(),
                pair.y.height()
            )));
        }
        xv.extend_from_slice(pair.x.pixels());
        yv.extend_from_slice(pair.y.pixels());
    }
    Ok((
        Array2::from_shape_vec((batch.len(), i_n), xv).expect("length checked"),
        Array2::from_shape_vec((batch.len(), j_n), yv).expect("length checked"),
    ))
}

/// Draws the batch's sampling uniforms row-major from the training stream.
fn draw_uniforms(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> Array2<f64> {
    use rand::Rng;
    let values: Vec<f64> = (0..rows * cols).map(|_| rng.random()).collect();
    Array2::from_shape_vec((rows, cols), values).expect("length checked")
}

/// One CD-1 parameter update from a minibatch; returns the batch mean
/// reconstruction error. Internal variant that also reports the batch mean
/// hidden activation.
fn cd1_core(
    model: &mut FactoredGrbm,
    batch: &[ImagePair],
    velocity: &mut ParamBlocks,
    cfg: &TrainConfig,
    rng: &mut ChaCha8Rng,
) -> Result<(f64, f64)> {
    if batch.is_empty() {
        return Err(Error::InvalidArg("batch must be nonempty".into()));
    }
    if !velocity.matches_model(model) {
        return Err(Error::DimMismatch(
            "velocity blocks do not match model shape".into(),
        ));
    }
    let b = batch.len() as f64;
    let (xs, ys) = batch_matrices(batch, model)?;
    let us = draw_uniforms(rng, batch.len(), model.n_hidden());

    let stats = batched_pipeline(model, &xs, &ys, &us, cfg.threads);
    let mut grad = stats.pos;
    grad.sub_assign(&stats.neg);
    grad.scale(1.0 / b);
    if let Some(block) = grad.first_non_finite_block() {
        return Err(Error::NonFiniteGradient { block });
    }

    velocity.momentum_update(cfg.momentum, cfg.learning_rate, &grad);
    velocity.apply_to(model);

    let hidden_mean_per_unit = stats.hidden_sum.mapv(|s| s / b);
    if cfg.sparsity_rate > 0.0 {
        let nudge = hidden_mean_per_unit.mapv(|m| cfg.sparsity_rate * (cfg.target_hidden - m));
        model.hidden_bias += &nudge;
    }
    let hidden_mean = hidden_mean_per_unit.mean().unwrap_or(0.0);
    Ok((stats.err_sum / b, hidden_mean))
}

/// One CD-1 update: positive statistics from (x, y, h+), negative statistics
/// from the mean-field reconstruction, momentum velocity applied to the model,
/// sparsity nudge on the hidden biases. Returns the batch mean reconstruction
/// error (MSE between y and its mean-field reconstruction).
pub fn cd1_step(
    model: &mut FactoredGrbm,
    batch: &[ImagePair],
    velocity: &mut ParamBlocks,
    cfg: &TrainConfig,
    rng: &mut ChaCha8Rng,
) -> Result<f64> {
    cfg.validate()?;
    cd1_core(model, batch, velocity, cfg, rng).map(|(err, _)| err)
}

/// Fresh model for a dataset of `inputs` -> `outputs` images under `cfg`:
/// Normal(0, weight_init_std^2) weights from the seed, zero biases. [`train`]
/// starts from exactly this model.
pub fn init_model(inputs: usize, outputs: usize, cfg: &TrainConfig) -> Result<FactoredGrbm> {
    cfg.validate()?;
    let mut rng = seeded_rng(cfg.seed);
    FactoredGrbm::random(
        inputs,
        outputs,
        cfg.hidden,
        cfg.factors,
        cfg.weight_init_std,
        &mut rng,
    )
}

/// Everything a finished run produces: the model plus per-epoch traces.
#[derive(Debug, Clone)]
pub struct TrainReport {
    pub model: FactoredGrbm,
    /// Mean reconstruction error per epoch.
    pub epoch_mse: Vec<f64>,
    /// Mean hidden activation per epoch, for sparsity diagnostics.
    pub epoch_hidden_mean: Vec<f64>,
    /// Wall-clock seconds per epoch.
    pub epoch_seconds: Vec<f64>,
}

/// Trains a fresh model on the dataset. Per epoch: seeded shuffle, then one
/// CD-1 update per minibatch (the final batch may be short). See the module
/// docs for the determinism contract.
pub fn train(dataset: &[ImagePair], cfg: &TrainConfig) -> Result<TrainReport> {
    train_with(dataset, cfg, |_, _, _| Ok(()))
}

/// As [`train`], invoking `observer(epoch, model, mse)` after every completed
/// epoch (1-based); an observer error aborts the run. Used for checkpointing.
pub fn train_with(
    dataset: &[ImagePair],
    cfg: &TrainConfig,
    mut observer: impl FnMut(usize, &FactoredGrbm, f64) -> Result<()>,
) -> Result<TrainReport> {
    cfg.validate()?;
    let first = dataset
        .first()
        .ok_or_else(|| Error::InvalidArg("training dataset must be nonempty".into()))?;
    let (i_n, j_n) = (first.x.len(), first.y.len());
    for pair in dataset {
        if pair.x.len() != i_n || pair.y.len() != j_n {
            return Err(Error::DimMismatch(
                "dataset images must share one shape".into(),
            ));
        }
    }

    let mut rng = seeded_rng(cfg.seed);
    let mut model = FactoredGrbm::random(
        i_n,
        j_n,
        cfg.hidden,
        cfg.factors,
        cfg.weight_init_std,
        &mut rng,
    )?;
    let mut velocity = ParamBlocks::zeros_like(&model);

    let mut report = TrainReport {
        model: model.clone(),
        epoch_mse: Vec::with_capacity(cfg.epochs),
        epoch_hidden_mean: Vec::with_capacity(cfg.epochs),
        epoch_seconds: Vec::with_capacity(cfg.epochs),
    };
    let mut indices: Vec<usize> = (0..dataset.len()).collect();
    let mut shuffled = Vec::with_capacity(cfg.batch_size);

    for epoch in 1..=cfg.epochs {
        let started = Instant::now();
        indices.shuffle(&mut rng);
        let mut err_weighted = 0.0;
        let mut hidden_weighted = 0.0;
        for chunk in indices.chunks(cfg.batch_size) {
            shuffled.clear();
            shuffled.extend(chunk.iter().map(|i| dataset[*i].clone()));
            let (err, hidden_mean) = cd1_core(&mut model, &shuffled, &mut velocity, cfg, &mut rng)?;
            err_weighted += err * chunk.len() as f64;
            hidden_weighted += hidden_mean * chunk.len() as f64;
        }
        let n = dataset.len() as f64;
        let mse = err_weighted / n;
        report.epoch_mse.push(mse);
        report.epoch_hidden_mean.push(hidden_weighted / n);
        report.epoch_seconds.push(started.elapsed().as_secs_f64());
        observer(epoch, &model, mse)?;
    }
    report.model = model;
    Ok(report)
}

/// Mean squared error between a pair's current frame and its deterministic
/// mean-field reconstruction (hidden probabilities, no sampling).
pub fn recon_error(m: &FactoredGrbm, pair: &ImagePair) -> Result<f64> {
    let h = m.hidden_probs(pair.x.pixels(), pair.y.pixels())?;
    let y_hat = m.output_probs(pair.x.pixels(), &h.probs)?;
    let mse = pair
        .y
        .pixels()
        .iter()
        .zip(&y_hat)
        .map(|(y, p)| (y - p) * (y - p))
        .sum::<f64>()
        / y_hat.len() as f64;
    Ok(mse)
}
