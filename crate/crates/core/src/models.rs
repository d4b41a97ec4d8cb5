//! Sequence regressors with hand-written backpropagation.
//!
//! Three models map a `60 x d` window to a readiness value on the unit scale:
//! a single LSTM read out from its final state, a bidirectional LSTM whose
//! per-frame ratings are pooled by softmax key-frame weights, and a
//! frame-wise linear support-vector regressor.

use std::fmt;
use std::str::FromStr;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::{StreamMask, WindowDataset, WINDOW_LEN};
use crate::numerics::{dot, sigmoid, AdamConfig, AdamState, Matrix, ParamSet, RngState};

pub const SIMPLE_HIDDEN: usize = 64;
pub const KEYFRAME_HIDDEN: usize = 32;
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    Linear,
    Simple,
    Keyframe,
}

impl ModelKind {
    pub const ALL: [ModelKind; 3] = [ModelKind::Linear, ModelKind::Simple, ModelKind::Keyframe];

    pub fn name(self) -> &'static str {
        match self {
            ModelKind::Linear => "linear",
            ModelKind::Simple => "simple",
            ModelKind::Keyframe => "keyframe",
        }
    }
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ModelKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "linear" | "svr" => Ok(ModelKind::Linear),
            "simple" | "simple_lstm" => Ok(ModelKind::Simple),
            "keyframe" | "keyframe_lstm" => Ok(ModelKind::Keyframe),
            other => Err(Error::Invalid(format!("unknown model kind `{other}`"))),
        }
    }
}

fn init_uniform(rows: usize, cols: usize, fan_in: usize, rng: &mut RngState) -> Matrix {
    let bound = 1.0 / (fan_in as f64).sqrt();
    Matrix::from_fn(rows, cols, |_, _| rng.uniform_range(-bound, bound)).expect("finite init")
}

fn check_window(window: &Matrix, dim: usize) -> Result<()> {
    if window.shape() != (WINDOW_LEN, dim) {
        return Err(Error::Shape(format!(
            "window must be {WINDOW_LEN}x{dim}, got {}x{}",
            window.rows(),
            window.cols()
        )));
    }
    if !window.is_finite() {
        return Err(Error::NonFinite("input window".into()));
    }
    Ok(())
}

fn ensure_finite(v: f64, layer: &str) -> Result<f64> {
    if v.is_finite() {
        Ok(v)
    } else {
        Err(Error::NonFinite(layer.to_string()))
    }
}

/// Subgradient of `|pred - target|`, zero at the kink.
pub fn mae_subgradient(pred: f64, target: f64) -> f64 {
    if pred > target {
        1.0
    } else if pred < target {
        -1.0
    } else {
        0.0
    }
}

// ---------------------------------------------------------------------------
// LSTM cell
// ---------------------------------------------------------------------------

/// Gate weights act on `[x; h_prev]`.
#[derive(Debug, Clone, PartialEq)]
pub struct LstmCellParams {
    pub input_dim: usize,
    pub hidden_dim: usize,
    pub w_input: Matrix,
    pub w_forget: Matrix,
    pub w_output: Matrix,
    pub w_candidate: Matrix,
    pub b_input: Matrix,
    pub b_forget: Matrix,
    pub b_output: Matrix,
    pub b_candidate: Matrix,
}

/// Activations of one step, kept for backprop.
#[derive(Debug, Clone)]
pub struct LstmStepCache {
    pub z: Vec<f64>,
    pub i: Vec<f64>,
    pub f: Vec<f64>,
    pub o: Vec<f64>,
    pub g: Vec<f64>,
    pub c_prev: Vec<f64>,
    pub c: Vec<f64>,
    pub tanh_c: Vec<f64>,
    pub h: Vec<f64>,
}

impl LstmCellParams {
    pub fn zeros(input_dim: usize, hidden_dim: usize) -> Self {
        let w = || Matrix::zeros(hidden_dim, input_dim + hidden_dim);
        let b = || Matrix::zeros(hidden_dim, 1);
        Self {
            input_dim,
            hidden_dim,
            w_input: w(),
            w_forget: w(),
            w_output: w(),
            w_candidate: w(),
            b_input: b(),
            b_forget: b(),
            b_output: b(),
            b_candidate: b(),
        }
    }

    /// Uniform in `±1/sqrt(d + h)`; forget bias 1.
    pub fn init(input_dim: usize, hidden_dim: usize, rng: &mut RngState) -> Self {
        let fan = input_dim + hidden_dim;
        let w = |rng: &mut RngState| init_uniform(hidden_dim, fan, fan, rng);
        let b = |rng: &mut RngState| init_uniform(hidden_dim, 1, fan, rng);
        Self {
            input_dim,
            hidden_dim,
            w_input: w(rng),
            w_forget: w(rng),
            w_output: w(rng),
            w_candidate: w(rng),
            b_input: b(rng),
            b_forget: Matrix::new(hidden_dim, 1, vec![1.0; hidden_dim]).expect("finite"),
            b_output: b(rng),
            b_candidate: b(rng),
        }
    }

    fn named(&self, prefix: &str) -> Vec<(String, &Matrix)> {
        [
            ("w_input", &self.w_input),
            ("w_forget", &self.w_forget),
            ("w_output", &self.w_output),
            ("w_candidate", &self.w_candidate),
            ("b_input", &self.b_input),
            ("b_forget", &self.b_forget),
            ("b_output", &self.b_output),
            ("b_candidate", &self.b_candidate),
        ]
        .into_iter()
        .map(|(n, m)| (format!("{prefix}{n}"), m))
        .collect()
    }

    fn named_mut(&mut self) -> Vec<&mut Matrix> {
        vec![
            &mut self.w_input,
            &mut self.w_forget,
            &mut self.w_output,
            &mut self.w_candidate,
            &mut self.b_input,
            &mut self.b_forget,
            &mut self.b_output,
            &mut self.b_candidate,
        ]
    }

    /// One gated update from `(h, c)`.
    pub fn step(&self, x: &[f64], h: &[f64], c: &[f64]) -> Result<LstmStepCache> {
        let (d, n) = (self.input_dim, self.hidden_dim);
        if x.len() != d || h.len() != n || c.len() != n {
            return Err(Error::Shape(format!(
                "lstm step expects x:{d} h:{n} c:{n}, got {} {} {}",
                x.len(),
                h.len(),
                c.len()
            )));
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("lstm input".into()));
        }
        let mut z = Vec::with_capacity(d + n);
        z.extend_from_slice(x);
        z.extend_from_slice(h);
        let gate = |w: &Matrix, b: &Matrix, act: fn(f64) -> f64| {
            let mut a = vec![0.0; n];
            w.matvec(&z, &mut a);
            for (v, bias) in a.iter_mut().zip(b.data()) {
                *v = act(*v + bias);
            }
            a
        };
        let i = gate(&self.w_input, &self.b_input, sigmoid);
        let f = gate(&self.w_forget, &self.b_forget, sigmoid);
        let o = gate(&self.w_output, &self.b_output, sigmoid);
        let g = gate(&self.w_candidate, &self.b_candidate, f64::tanh);
        let c_new: Vec<f64> = (0..n).map(|k| f[k] * c[k] + i[k] * g[k]).collect();
        let tanh_c: Vec<f64> = c_new.iter().map(|v| v.tanh()).collect();
        let h_new: Vec<f64> = (0..n).map(|k| o[k] * tanh_c[k]).collect();
        if h_new.iter().chain(&c_new).any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("lstm state".into()));
        }
        Ok(LstmStepCache {
            z,
            i,
            f,
            o,
            g,
            c_prev: c.to_vec(),
            c: c_new,
            tanh_c,
            h: h_new,
        })
    }

    /// Runs the cell over `rows` (in the given order) from a zero state.
    pub fn run<'a>(&self, rows: impl Iterator<Item = &'a [f64]>) -> Result<Vec<LstmStepCache>> {
        let n = self.hidden_dim;
        let mut out: Vec<LstmStepCache> = Vec::with_capacity(WINDOW_LEN);
        let zero = vec![0.0; n];
        for x in rows {
            let step = match out.last() {
                Some(prev) => self.step(x, &prev.h, &prev.c)?,
                None => self.step(x, &zero, &zero)?,
            };
            out.push(step);
        }
        Ok(out)
    }

    /// Backprop through time. `dh[t]` is the external gradient on the
    /// hidden state of step `t` (processing order).
    pub fn backward(&self, steps: &[LstmStepCache], dh: &[Vec<f64>], grads: &mut LstmCellParams) {
        let (d, n) = (self.input_dim, self.hidden_dim);
        let mut dh_next = vec![0.0; n];
        let mut dc_next = vec![0.0; n];
        let mut da = [vec![0.0; n], vec![0.0; n], vec![0.0; n], vec![0.0; n]];
        let mut dz = vec![0.0; d + n];
        for (s, dh_ext) in steps.iter().zip(dh).rev() {
            for k in 0..n {
                let dhk = dh_ext[k] + dh_next[k];
                let dc = dc_next[k] + dhk * s.o[k] * (1.0 - s.tanh_c[k] * s.tanh_c[k]);
                da[0][k] = dc * s.g[k] * s.i[k] * (1.0 - s.i[k]);
                da[1][k] = dc * s.c_prev[k] * s.f[k] * (1.0 - s.f[k]);
                da[2][k] = dhk * s.tanh_c[k] * s.o[k] * (1.0 - s.o[k]);
                da[3][k] = dc * s.i[k] * (1.0 - s.g[k] * s.g[k]);
                dc_next[k] = dc * s.f[k];
            }
            dz.fill(0.0);
            let weights = [&self.w_input, &self.w_forget, &self.w_output, &self.w_candidate];
            let (gw, gb) = grads.gate_blocks_mut();
            for q in 0..4 {
                gw[q].add_outer(1.0, &da[q], &s.z);
                for (b, v) in gb[q].data_mut().iter_mut().zip(&da[q]) {
                    *b += v;
                }
                weights[q].add_matvec_transposed(&da[q], &mut dz);
            }
            dh_next.copy_from_slice(&dz[d..]);
        }
    }

    fn gate_blocks_mut(&mut self) -> ([&mut Matrix; 4], [&mut Matrix; 4]) {
        (
            [
                &mut self.w_input,
                &mut self.w_forget,
                &mut self.w_output,
                &mut self.w_candidate,
            ],
            [
                &mut self.b_input,
                &mut self.b_forget,
                &mut self.b_output,
                &mut self.b_candidate,
            ],
        )
    }
}

impl ParamSet for LstmCellParams {
    fn blocks(&self) -> Vec<(String, &Matrix)> {
        self.named("")
    }

    fn blocks_mut(&mut self) -> Vec<&mut Matrix> {
        self.named_mut()
    }
}

// ---------------------------------------------------------------------------
// Models
// ---------------------------------------------------------------------------

/// A differentiable window regressor.
pub trait Regressor: ParamSet + Clone {
    fn input_dim(&self) -> usize;

    fn predict(&self, window: &Matrix) -> Result<f64>;

    /// Forward pass, then accumulates `dloss(pred) * d pred / d params`
    /// into `grads`. Returns the prediction.
    fn forward_backward(
        &self,
        window: &Matrix,
        dloss: &dyn Fn(f64) -> f64,
        grads: &mut Self,
    ) -> Result<f64>;

    /// Accumulates the MAE gradient for one window; returns the prediction.
    fn backprop(&self, window: &Matrix, target: f64, grads: &mut Self) -> Result<f64> {
        self.forward_backward(window, &|p| mae_subgradient(p, target), grads)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimpleModelParams {
    pub cell: LstmCellParams,
    /// `1 x 64`
    pub head_w: Matrix,
    pub head_b: Matrix,
}

impl SimpleModelParams {
    pub fn zeros(input_dim: usize) -> Self {
        Self {
            cell: LstmCellParams::zeros(input_dim, SIMPLE_HIDDEN),
            head_w: Matrix::zeros(1, SIMPLE_HIDDEN),
            head_b: Matrix::zeros(1, 1),
        }
    }

    pub fn init(input_dim: usize, rng: &mut RngState) -> Self {
        Self {
            cell: LstmCellParams::init(input_dim, SIMPLE_HIDDEN, rng),
            head_w: init_uniform(1, SIMPLE_HIDDEN, SIMPLE_HIDDEN, rng),
            head_b: init_uniform(1, 1, SIMPLE_HIDDEN, rng),
        }
    }
}

impl ParamSet for SimpleModelParams {
    fn blocks(&self) -> Vec<(String, &Matrix)> {
        let mut b = self.cell.named("lstm.");
        b.push(("head.w".into(), &self.head_w));
        b.push(("head.b".into(), &self.head_b));
        b
    }

    fn blocks_mut(&mut self) -> Vec<&mut Matrix> {
        let mut b = self.cell.named_mut();
        b.push(&mut self.head_w);
        b.push(&mut self.head_b);
        b
    }
}

impl SimpleModelParams {
    fn forward(&self, window: &Matrix) -> Result<(Vec<LstmStepCache>, f64)> {
        check_window(window, self.cell.input_dim)?;
        let steps = self.cell.run((0..window.rows()).map(|t| window.row(t)))?;
        let last = &steps.last().expect("non-empty window").h;
        let out = sigmoid(dot(self.head_w.data(), last) + self.head_b.data()[0]);
        Ok((steps, ensure_finite(out, "simple output head")?))
    }
}

impl Regressor for SimpleModelParams {
    fn input_dim(&self) -> usize {
        self.cell.input_dim
    }

    fn predict(&self, window: &Matrix) -> Result<f64> {
        Ok(self.forward(window)?.1)
    }

    fn forward_backward(
        &self,
        window: &Matrix,
        dloss: &dyn Fn(f64) -> f64,
        grads: &mut Self,
    ) -> Result<f64> {
        let (steps, out) = self.forward(window)?;
        let g = dloss(out);
        if g == 0.0 {
            return Ok(out);
        }
        let dpre = g * out * (1.0 - out);
        let last = &steps.last().expect("non-empty").h;
        grads.head_w.add_outer(dpre, &[1.0], last);
        grads.head_b.data_mut()[0] += dpre;
        let n = SIMPLE_HIDDEN;
        let mut dh = vec![vec![0.0; n]; steps.len()];
        for (k, v) in dh.last_mut().expect("non-empty").iter_mut().enumerate() {
            *v = dpre * self.head_w.data()[k];
        }
        self.cell.backward(&steps, &dh, &mut grads.cell);
        Ok(out)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct KeyFrameModelParams {
    pub forward: LstmCellParams,
    pub backward: LstmCellParams,
    /// `1 x 64`
    pub rating_w: Matrix,
    pub rating_b: Matrix,
    /// `1 x 64`
    pub weight_w: Matrix,
    pub weight_b: Matrix,
}

/// Prediction plus per-frame ratings and normalized key-frame weights.
#[derive(Debug, Clone, PartialEq)]
pub struct KeyFrameOutput {
    pub output: f64,
    pub ratings: Vec<f64>,
    pub weights: Vec<f64>,
    pub logits: Vec<f64>,
}

/// Numerically stable softmax.
pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = logits.iter().map(|l| (l - max).exp()).collect();
    let s: f64 = e.iter().sum();
    e.into_iter().map(|v| v / s).collect()
}

/// `sum_t softmax(logits)_t * ratings_t`
pub fn keyframe_pool(ratings: &[f64], logits: &[f64]) -> f64 {
    softmax(logits).iter().zip(ratings).map(|(a, r)| a * r).sum()
}

impl KeyFrameModelParams {
    pub fn zeros(input_dim: usize) -> Self {
        let h2 = 2 * KEYFRAME_HIDDEN;
        Self {
            forward: LstmCellParams::zeros(input_dim, KEYFRAME_HIDDEN),
            backward: LstmCellParams::zeros(input_dim, KEYFRAME_HIDDEN),
            rating_w: Matrix::zeros(1, h2),
            rating_b: Matrix::zeros(1, 1),
            weight_w: Matrix::zeros(1, h2),
            weight_b: Matrix::zeros(1, 1),
        }
    }

    pub fn init(input_dim: usize, rng: &mut RngState) -> Self {
        let h2 = 2 * KEYFRAME_HIDDEN;
        Self {
            forward: LstmCellParams::init(input_dim, KEYFRAME_HIDDEN, rng),
            backward: LstmCellParams::init(input_dim, KEYFRAME_HIDDEN, rng),
            rating_w: init_uniform(1, h2, h2, rng),
            rating_b: init_uniform(1, 1, h2, rng),
            weight_w: init_uniform(1, h2, h2, rng),
            weight_b: init_uniform(1, 1, h2, rng),
        }
    }

    fn run(&self, window: &Matrix) -> Result<(Vec<LstmStepCache>, Vec<LstmStepCache>, Vec<Vec<f64>>, KeyFrameOutput)> {
        check_window(window, self.forward.input_dim)?;
        let t_len = window.rows();
        let fwd = self.forward.run((0..t_len).map(|t| window.row(t)))?;
        // backward direction processes frames last to first
        let bwd = self.backward.run((0..t_len).rev().map(|t| window.row(t)))?;
        let states: Vec<Vec<f64>> = (0..t_len)
            .map(|t| [fwd[t].h.as_slice(), bwd[t_len - 1 - t].h.as_slice()].concat())
            .collect();
        let ratings: Vec<f64> = states
            .iter()
            .map(|s| sigmoid(dot(self.rating_w.data(), s) + self.rating_b.data()[0]))
            .collect();
        let logits: Vec<f64> = states
            .iter()
            .map(|s| dot(self.weight_w.data(), s) + self.weight_b.data()[0])
            .collect();
        let weights = softmax(&logits);
        let output: f64 = weights.iter().zip(&ratings).map(|(a, r)| a * r).sum();
        ensure_finite(output, "keyframe pooling")?;
        Ok((
            fwd,
            bwd,
            states,
            KeyFrameOutput {
                output,
                ratings,
                weights,
                logits,
            },
        ))
    }

    /// Prediction with key-frame diagnostics.
    pub fn predict_detailed(&self, window: &Matrix) -> Result<KeyFrameOutput> {
        Ok(self.run(window)?.3)
    }
}

impl ParamSet for KeyFrameModelParams {
    fn blocks(&self) -> Vec<(String, &Matrix)> {
        let mut b = self.forward.named("fwd.");
        b.extend(self.backward.named("bwd."));
        b.push(("rating.w".into(), &self.rating_w));
        b.push(("rating.b".into(), &self.rating_b));
        b.push(("weight.w".into(), &self.weight_w));
        b.push(("weight.b".into(), &self.weight_b));
        b
    }

    fn blocks_mut(&mut self) -> Vec<&mut Matrix> {
        let mut b = self.forward.named_mut();
        b.extend(self.backward.named_mut());
        b.push(&mut self.rating_w);
        b.push(&mut self.rating_b);
        b.push(&mut self.weight_w);
        b.push(&mut self.weight_b);
        b
    }
}

impl Regressor for KeyFrameModelParams {
    fn input_dim(&self) -> usize {
        self.forward.input_dim
    }

    fn predict(&self, window: &Matrix) -> Result<f64> {
        Ok(self.run(window)?.3.output)
    }

    fn forward_backward(
        &self,
        window: &Matrix,
        dloss: &dyn Fn(f64) -> f64,
        grads: &mut Self,
    ) -> Result<f64> {
        let (fwd, bwd, states, out) = self.run(window)?;
        let g = dloss(out.output);
        if g == 0.0 {
            return Ok(out.output);
        }
        let t_len = states.len();
        let n = KEYFRAME_HIDDEN;
        let mut dh_f = vec![vec![0.0; n]; t_len];
        let mut dh_b = vec![vec![0.0; n]; t_len];
        for t in 0..t_len {
            let (a, r) = (out.weights[t], out.ratings[t]);
            let d_rating_pre = g * a * r * (1.0 - r);
            let d_logit = g * a * (r - out.output);
            grads.rating_w.add_outer(d_rating_pre, &[1.0], &states[t]);
            grads.rating_b.data_mut()[0] += d_rating_pre;
            grads.weight_w.add_outer(d_logit, &[1.0], &states[t]);
            grads.weight_b.data_mut()[0] += d_logit;
            for k in 0..n {
                dh_f[t][k] =
                    d_rating_pre * self.rating_w.data()[k] + d_logit * self.weight_w.data()[k];
                dh_b[t_len - 1 - t][k] = d_rating_pre * self.rating_w.data()[n + k]
                    + d_logit * self.weight_w.data()[n + k];
            }
        }
        self.forward.backward(&fwd, &dh_f, &mut grads.forward);
        self.backward.backward(&bwd, &dh_b, &mut grads.backward);
        Ok(out.output)
    }
}

/// Frame-wise epsilon-insensitive linear regressor; reads only the last
/// frame of a window.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearBaselineParams {
    /// `1 x d`
    pub w: Matrix,
    pub b: Matrix,
    pub epsilon: f64,
}

impl LinearBaselineParams {
    pub fn zeros(input_dim: usize, epsilon: f64) -> Self {
        Self {
            w: Matrix::zeros(1, input_dim),
            b: Matrix::zeros(1, 1),
            epsilon,
        }
    }

    pub fn raw(&self, frame: &[f64]) -> f64 {
        dot(self.w.data(), frame) + self.b.data()[0]
    }

    pub fn predict_frame(&self, frame: &[f64]) -> Result<f64> {
        if frame.len() != self.w.cols() {
            return Err(Error::Shape(format!(
                "frame has {} dims, model expects {}",
                frame.len(),
                self.w.cols()
            )));
        }
        Ok(self.raw(frame).clamp(0.0, 1.0))
    }
}

impl ParamSet for LinearBaselineParams {
    fn blocks(&self) -> Vec<(String, &Matrix)> {
        vec![("w".into(), &self.w), ("b".into(), &self.b)]
    }

    fn blocks_mut(&mut self) -> Vec<&mut Matrix> {
        vec![&mut self.w, &mut self.b]
    }
}

impl Regressor for LinearBaselineParams {
    fn input_dim(&self) -> usize {
        self.w.cols()
    }

    fn predict(&self, window: &Matrix) -> Result<f64> {
        if window.rows() == 0 {
            return Err(Error::Shape("empty window".into()));
        }
        self.predict_frame(window.row(window.rows() - 1))
    }

    /// Gradient of the loss through the unclamped output.
    fn forward_backward(
        &self,
        window: &Matrix,
        dloss: &dyn Fn(f64) -> f64,
        grads: &mut Self,
    ) -> Result<f64> {
        let pred = self.predict(window)?;
        let x = window.row(window.rows() - 1);
        let g = dloss(self.raw(x));
        grads.w.add_outer(g, &[1.0], x);
        grads.b.data_mut()[0] += g;
        Ok(pred)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SvrConfig {
    pub epsilon: f64,
    pub lambda: f64,
    pub learning_rate: f64,
    pub epochs: usize,
}

impl Default for SvrConfig {
    fn default() -> Self {
        Self {
            epsilon: 0.05,
            lambda: 1e-4,
            learning_rate: 0.05,
            epochs: 30,
        }
    }
}

/// Stochastic subgradient descent on
/// `max(0, |w.x + b - y| - eps) + lambda/2 |w|^2`, step `lr / sqrt(epoch)`.
pub fn linear_baseline_train(
    frames: &Matrix,
    targets: &[f64],
    config: &SvrConfig,
    seed: u64,
) -> Result<LinearBaselineParams> {
    if frames.rows() != targets.len() {
        return Err(Error::Shape(format!(
            "{} frames but {} targets",
            frames.rows(),
            targets.len()
        )));
    }
    if frames.rows() == 0 {
        return Err(Error::Invalid("no training frames".into()));
    }
    let mut p = LinearBaselineParams::zeros(frames.cols(), config.epsilon);
    let mut order: Vec<usize> = (0..frames.rows()).collect();
    let root = RngState::new(seed);
    for epoch in 0..config.epochs {
        root.substream(epoch as u64).shuffle(&mut order);
        let lr = config.learning_rate / ((epoch + 1) as f64).sqrt();
        for &i in &order {
            let x = frames.row(i);
            let r = p.raw(x) - targets[i];
            let g = if r > config.epsilon {
                1.0
            } else if r < -config.epsilon {
                -1.0
            } else {
                0.0
            };
            let shrink = 1.0 - lr * config.lambda;
            for (w, xi) in p.w.data_mut().iter_mut().zip(x) {
                *w = *w * shrink - lr * g * xi;
            }
            p.b.data_mut()[0] -= lr * g;
        }
        if let Some(block) = p.first_non_finite() {
            return Err(Error::Diverged {
                epoch: epoch + 1,
                detail: format!("non-finite parameters in block {block}"),
            });
        }
    }
    Ok(p)
}

/// Frame-wise predictions; no temporal context.
pub fn linear_baseline_predict(p: &LinearBaselineParams, frames: &Matrix) -> Result<Vec<f64>> {
    (0..frames.rows()).map(|t| p.predict_frame(frames.row(t))).collect()
}

// ---------------------------------------------------------------------------
// Trained model wrapper and checkpoints
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq)]
pub enum Model {
    Linear(LinearBaselineParams),
    Simple(SimpleModelParams),
    Keyframe(KeyFrameModelParams),
}

impl Model {
    pub fn init(kind: ModelKind, input_dim: usize, rng: &mut RngState) -> Self {
        match kind {
            ModelKind::Linear => Model::Linear(LinearBaselineParams::zeros(input_dim, 0.05)),
            ModelKind::Simple => Model::Simple(SimpleModelParams::init(input_dim, rng)),
            ModelKind::Keyframe => Model::Keyframe(KeyFrameModelParams::init(input_dim, rng)),
        }
    }

    pub fn kind(&self) -> ModelKind {
        match self {
            Model::Linear(_) => ModelKind::Linear,
            Model::Simple(_) => ModelKind::Simple,
            Model::Keyframe(_) => ModelKind::Keyframe,
        }
    }

    pub fn input_dim(&self) -> usize {
        match self {
            Model::Linear(p) => p.input_dim(),
            Model::Simple(p) => p.input_dim(),
            Model::Keyframe(p) => p.input_dim(),
        }
    }

    pub fn predict(&self, window: &Matrix) -> Result<f64> {
        match self {
            Model::Linear(p) => p.predict(window),
            Model::Simple(p) => p.predict(window),
            Model::Keyframe(p) => p.predict(window),
        }
    }

    fn params(&self) -> &dyn ParamSetDyn {
        match self {
            Model::Linear(p) => p,
            Model::Simple(p) => p,
            Model::Keyframe(p) => p,
        }
    }

    fn params_mut(&mut self) -> &mut dyn ParamSetDyn {
        match self {
            Model::Linear(p) => p,
            Model::Simple(p) => p,
            Model::Keyframe(p) => p,
        }
    }

    fn hidden_dim(&self) -> usize {
        match self {
            Model::Linear(_) => 0,
            Model::Simple(_) => SIMPLE_HIDDEN,
            Model::Keyframe(_) => KEYFRAME_HIDDEN,
        }
    }

    pub fn to_checkpoint(&self, streams: StreamMask, seed: u64) -> Checkpoint {
        Checkpoint {
            format_version: CHECKPOINT_VERSION,
            model_kind: self.kind(),
            dims: Dims {
                input: self.input_dim(),
                hidden: self.hidden_dim(),
            },
            blocks: self
                .params()
                .named_blocks()
                .into_iter()
                .map(|(name, m)| BlockRecord {
                    name,
                    rows: m.rows(),
                    cols: m.cols(),
                    data: m.data().to_vec(),
                })
                .collect(),
            epsilon: match self {
                Model::Linear(p) => Some(p.epsilon),
                _ => None,
            },
            streams,
            seed,
        }
    }

    pub fn from_checkpoint(ck: &Checkpoint) -> Result<Self> {
        if ck.format_version != CHECKPOINT_VERSION {
            return Err(Error::Invalid(format!(
                "unsupported checkpoint version {}",
                ck.format_version
            )));
        }
        if ck.dims.input != ck.streams.dim() {
            return Err(Error::Shape(format!(
                "checkpoint input dim {} does not match streams {}",
                ck.dims.input, ck.streams
            )));
        }
        let d = ck.dims.input;
        let mut model = match ck.model_kind {
            ModelKind::Linear => Model::Linear(LinearBaselineParams::zeros(d, ck.epsilon.unwrap_or(0.05))),
            ModelKind::Simple => Model::Simple(SimpleModelParams::zeros(d)),
            ModelKind::Keyframe => Model::Keyframe(KeyFrameModelParams::zeros(d)),
        };
        let names: Vec<String> = model.params().named_blocks().into_iter().map(|(n, _)| n).collect();
        if names.len() != ck.blocks.len() {
            return Err(Error::Shape(format!(
                "checkpoint has {} blocks, {} expects {}",
                ck.blocks.len(),
                ck.model_kind,
                names.len()
            )));
        }
        for ((dst, name), rec) in model.params_mut().mut_blocks().into_iter().zip(&names).zip(&ck.blocks) {
            if &rec.name != name || (rec.rows, rec.cols) != dst.shape() {
                return Err(Error::Shape(format!(
                    "block `{}` ({}x{}) does not match expected `{name}` {:?}",
                    rec.name,
                    rec.rows,
                    rec.cols,
                    dst.shape()
                )));
            }
            *dst = Matrix::new(rec.rows, rec.cols, rec.data.clone())?;
        }
        Ok(model)
    }
}

// object-safe view of ParamSet for the enum
trait ParamSetDyn {
    fn named_blocks(&self) -> Vec<(String, &Matrix)>;
    fn mut_blocks(&mut self) -> Vec<&mut Matrix>;
}

impl<P: ParamSet> ParamSetDyn for P {
    fn named_blocks(&self) -> Vec<(String, &Matrix)> {
        self.blocks()
    }
    fn mut_blocks(&mut self) -> Vec<&mut Matrix> {
        self.blocks_mut()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Dims {
    pub input: usize,
    pub hidden: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BlockRecord {
    pub name: String,
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub format_version: u32,
    pub model_kind: ModelKind,
    pub dims: Dims,
    pub blocks: Vec<BlockRecord>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub epsilon: Option<f64>,
    pub streams: StreamMask,
    pub seed: u64,
}

impl Checkpoint {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        Ok(serde_json::from_str(s)?)
    }

    pub fn save(&self, path: &std::path::Path) -> Result<()> {
        std::fs::write(path, self.to_json()?)?;
        Ok(())
    }

    pub fn load(path: &std::path::Path) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }
}

// ---------------------------------------------------------------------------
// Training
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub adam: AdamConfig,
    pub seed: u64,
    /// Train on every `sample_stride`-th window of each clip.
    pub sample_stride: usize,
    /// Validate on every `eval_stride`-th window.
    pub eval_stride: usize,
    pub svr: SvrConfig,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 30,
            batch_size: 64,
            adam: AdamConfig::default(),
            seed: 0,
            sample_stride: 1,
            eval_stride: 1,
            svr: SvrConfig::default(),
        }
    }
}

impl TrainConfig {
    /// Reduced budget for single-core runs on small corpora.
    pub fn desk() -> Self {
        Self {
            epochs: 12,
            batch_size: 16,
            sample_stride: 6,
            eval_stride: 10,
            ..Self::default()
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochLog {
    pub epoch: usize,
    /// MAE on the 1-5 scale.
    pub train_mae: f64,
    pub val_mae: f64,
    pub seconds: f64,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub model: Model,
    pub log: Vec<EpochLog>,
    pub best_epoch: usize,
    pub best_val_mae: f64,
}

pub fn write_training_log<W: std::io::Write>(w: W, log: &[EpochLog]) -> Result<()> {
    let mut wr = csv::Writer::from_writer(w);
    for e in log {
        wr.serialize(e)?;
    }
    wr.flush()?;
    Ok(())
}

/// Mean absolute error on the 1-5 scale over `(clip, frame)` windows.
pub fn dataset_mae<R: Regressor>(model: &R, data: &WindowDataset, stride: usize) -> Result<f64> {
    let idx = data.index(stride);
    if idx.is_empty() {
        return Err(Error::Invalid("empty dataset".into()));
    }
    let mut buf = Matrix::zeros(WINDOW_LEN, data.dim());
    let mut sum = 0.0;
    for &(c, t) in &idx {
        data.fill(c, t, &mut buf);
        sum += (model.predict(&buf)? - data.target(c, t)).abs();
    }
    Ok(4.0 * sum / idx.len() as f64)
}

fn check_datasets(train: &WindowDataset, val: &WindowDataset) -> Result<()> {
    if train.is_empty() {
        return Err(Error::Invalid("empty training set".into()));
    }
    if val.is_empty() {
        return Err(Error::Invalid("empty validation set".into()));
    }
    if train.mask != val.mask {
        return Err(Error::Invalid("train and validation stream masks differ".into()));
    }
    Ok(())
}

/// Mini-batch Adam on MAE, keeping the epoch with the lowest validation MAE.
pub fn train_regressor<R: Regressor>(
    init: R,
    train: &WindowDataset,
    val: &WindowDataset,
    config: &TrainConfig,
) -> Result<(R, Vec<EpochLog>, usize, f64)> {
    check_datasets(train, val)?;
    if init.input_dim() != train.dim() {
        return Err(Error::Shape(format!(
            "model expects {} inputs, data has {}",
            init.input_dim(),
            train.dim()
        )));
    }
    if config.batch_size == 0 || config.epochs == 0 {
        return Err(Error::Invalid("epochs and batch size must be positive".into()));
    }
    let mut params = init;
    let mut grads = params.zeros_like();
    let mut adam = AdamState::new(config.adam);
    let mut order = train.index(config.sample_stride);
    let shuffle_root = RngState::new(config.seed).substream(0x5348);
    let mut buf = Matrix::zeros(WINDOW_LEN, train.dim());
    let mut log = Vec::with_capacity(config.epochs);
    let mut best: Option<(R, usize, f64)> = None;

    for epoch in 1..=config.epochs {
        let start = Instant::now();
        shuffle_root.substream(epoch as u64).shuffle(&mut order);
        let mut abs_sum = 0.0;
        for batch in order.chunks(config.batch_size) {
            grads.zero();
            for &(c, t) in batch {
                train.fill(c, t, &mut buf);
                let target = train.target(c, t);
                let pred = params.backprop(&buf, target, &mut grads)?;
                abs_sum += (pred - target).abs();
            }
            grads.scale(1.0 / batch.len() as f64);
            if let Some(block) = grads.first_non_finite() {
                return Err(Error::Diverged {
                    epoch,
                    detail: format!("non-finite gradient in block {block}"),
                });
            }
            adam.step(&mut params, &grads)?;
        }
        let train_mae = 4.0 * abs_sum / order.len() as f64;
        if !train_mae.is_finite() {
            return Err(Error::Diverged {
                epoch,
                detail: "non-finite training loss".into(),
            });
        }
        let val_mae = dataset_mae(&params, val, config.eval_stride)?;
        log.push(EpochLog {
            epoch,
            train_mae,
            val_mae,
            seconds: start.elapsed().as_secs_f64(),
        });
        if best.as_ref().map(|b| val_mae < b.2).unwrap_or(true) {
            best = Some((params.clone(), epoch, val_mae));
        }
    }
    let (p, e, v) = best.expect("at least one epoch");
    Ok((p, log, e, v))
}

/// Trains the frame-wise baseline on the last frame of every window.
pub fn train_linear(
    train: &WindowDataset,
    val: &WindowDataset,
    config: &TrainConfig,
) -> Result<(LinearBaselineParams, f64)> {
    check_datasets(train, val)?;
    let idx = train.index(1);
    let frames = Matrix::from_fn(idx.len(), train.dim(), |r, c| {
        let (clip, t) = idx[r];
        train.features[clip].get(t, c)
    })?;
    let targets: Vec<f64> = idx.iter().map(|&(c, t)| train.target(c, t)).collect();
    let p = linear_baseline_train(&frames, &targets, &config.svr, config.seed)?;
    let val_mae = dataset_mae(&p, val, config.eval_stride)?;
    Ok((p, val_mae))
}

pub fn train(
    kind: ModelKind,
    train_set: &WindowDataset,
    val_set: &WindowDataset,
    config: &TrainConfig,
) -> Result<TrainOutcome> {
    let d = train_set.dim();
    let mut rng = RngState::new(config.seed).substream(0x494e4954);
    match kind {
        ModelKind::Linear => {
            let start = Instant::now();
            let (p, val_mae) = train_linear(train_set, val_set, config)?;
            let train_mae = dataset_mae(&p, train_set, config.eval_stride)?;
            Ok(TrainOutcome {
                model: Model::Linear(p),
                log: vec![EpochLog {
                    epoch: config.svr.epochs,
                    train_mae,
                    val_mae,
                    seconds: start.elapsed().as_secs_f64(),
                }],
                best_epoch: config.svr.epochs,
                best_val_mae: val_mae,
            })
        }
        ModelKind::Simple => {
            let (p, log, best_epoch, best_val_mae) =
                train_regressor(SimpleModelParams::init(d, &mut rng), train_set, val_set, config)?;
            Ok(TrainOutcome {
                model: Model::Simple(p),
                log,
                best_epoch,
                best_val_mae,
            })
        }
        ModelKind::Keyframe => {
            let (p, log, best_epoch, best_val_mae) =
                train_regressor(KeyFrameModelParams::init(d, &mut rng), train_set, val_set, config)?;
            Ok(TrainOutcome {
                model: Model::Keyframe(p),
                log,
                best_epoch,
                best_val_mae,
            })
        }
    }
}
