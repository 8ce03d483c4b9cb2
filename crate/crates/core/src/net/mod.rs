//! Window regressor: a full-window 1-D convolution followed by a small dense
//! stack, predicting the attitude MRP at the window's last step.
//!
//! Layout: `x (n*C) -> X1 (64) -> X2 (128) -> X3 (64) -> Y (3)` with ReLU on
//! every hidden transform and dropout between `X3` and `Y` during training.

mod io;
mod train;

pub use io::{decode_model, encode_model, load_model, save_model, Model, ModelMeta, MODEL_FORMAT_VERSION};
pub use train::{early_stop_triggered, train, Adam, EpochRecord, StopReason, TrainConfig, TrainHistory, TrainOutcome, MAX_EPOCHS};

use ndarray::{Array1, Array2, ArrayView2, Axis};
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{invalid, Result};
use crate::features::{check_case_feasible, check_window, window_at, CaseSpec, PassFeatures};
use crate::rotation::{quat_angle_rad, Mrp, Quaternion};

pub const LAYER_WIDTHS: [usize; 4] = [64, 128, 64, 3];
pub const DROPOUT_RATE: f64 = 0.01;
pub const BLOCK_NAMES: [&str; 8] = ["H01", "b0", "H12", "b1", "H23", "b2", "H3y", "b3"];

/// The output layer starts ten times smaller than He scaling so initial
/// predictions sit near the zero attitude instead of far out in MRP space.
const OUTPUT_INIT_GAIN: f64 = 0.1;
/// Below this batch loss (deg) the gradient is taken as zero.
const LOSS_FLOOR_DEG: f64 = 1e-12;
/// Per-sample angle floor inside the gradient path, rad.
const ANGLE_GUARD_RAD: f64 = 1e-7;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NetConfig {
    /// Window length.
    pub n: usize,
    /// Input channels per step.
    pub channels: usize,
    pub widths: [usize; 4],
    pub dropout: f64,
    /// Weight initialisation seed.
    pub seed: u64,
}

impl NetConfig {
    pub fn new(n: usize, channels: usize, seed: u64) -> Self {
        NetConfig { n, channels, widths: LAYER_WIDTHS, dropout: DROPOUT_RATE, seed }
    }

    pub fn input_width(&self) -> usize {
        self.n * self.channels
    }

    pub fn validate(&self) -> Result<()> {
        check_window(self.n)?;
        if self.channels == 0 {
            return Err(invalid("network needs at least one input channel"));
        }
        if self.widths[..3].contains(&0) || self.widths[3] != 3 {
            return Err(invalid(format!("invalid layer widths {:?}", self.widths)));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(invalid(format!("dropout rate {} outside [0, 1)", self.dropout)));
        }
        Ok(())
    }

    /// Expected `(rows, cols)` of each parameter block; biases are `(1, len)`.
    pub fn block_shapes(&self) -> [(usize, usize); 8] {
        let [w1, w2, w3, w4] = self.widths;
        let i = self.input_width();
        [(i, w1), (1, w1), (w1, w2), (1, w2), (w2, w3), (1, w3), (w3, w4), (1, w4)]
    }
}

/// Weights `H01, H12, H23, H3y` (input-major) and biases `b0..b3`.
#[derive(Debug, Clone, PartialEq)]
pub struct NetParams {
    pub w: [Array2<f64>; 4],
    pub b: [Array1<f64>; 4],
}

impl NetParams {
    /// He-normal weights (output layer damped), zero biases.
    pub fn init(cfg: &NetConfig) -> Result<Self> {
        cfg.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        let shapes = cfg.block_shapes();
        let w = std::array::from_fn(|k| {
            let (r, c) = shapes[2 * k];
            let gain = if k == 3 { OUTPUT_INIT_GAIN } else { 1.0 };
            let normal = Normal::new(0.0, gain * (2.0 / r as f64).sqrt()).expect("positive std");
            Array2::from_shape_fn((r, c), |_| normal.sample(&mut rng))
        });
        let b = std::array::from_fn(|k| Array1::zeros(shapes[2 * k + 1].1));
        Ok(NetParams { w, b })
    }

    pub fn zeros_like(&self) -> Self {
        NetParams {
            w: std::array::from_fn(|k| Array2::zeros(self.w[k].raw_dim())),
            b: std::array::from_fn(|k| Array1::zeros(self.b[k].raw_dim())),
        }
    }

    pub fn num_params(&self) -> usize {
        self.w.iter().map(|a| a.len()).sum::<usize>() + self.b.iter().map(|a| a.len()).sum::<usize>()
    }

    /// Blocks in file order `H01, b0, H12, b1, H23, b2, H3y, b3`, row-major.
    pub fn blocks(&self) -> Vec<&[f64]> {
        (0..4)
            .flat_map(|k| {
                [
                    self.w[k].as_slice().expect("standard layout"),
                    self.b[k].as_slice().expect("standard layout"),
                ]
            })
            .collect()
    }

    fn blocks_mut(&mut self) -> Vec<&mut [f64]> {
        let mut out = Vec::with_capacity(8);
        for (w, b) in self.w.iter_mut().zip(self.b.iter_mut()) {
            out.push(w.as_slice_mut().expect("standard layout"));
            out.push(b.as_slice_mut().expect("standard layout"));
        }
        out
    }

    /// Flat view of parameter `i` in file order.
    pub fn get(&self, mut i: usize) -> f64 {
        for blk in self.blocks() {
            if i < blk.len() {
                return blk[i];
            }
            i -= blk.len();
        }
        panic!("parameter index out of range")
    }

    pub fn set(&mut self, mut i: usize, v: f64) {
        for blk in self.blocks_mut() {
            if i < blk.len() {
                blk[i] = v;
                return;
            }
            i -= blk.len();
        }
        panic!("parameter index out of range")
    }

    pub fn is_finite(&self) -> bool {
        self.blocks().iter().all(|b| b.iter().all(|v| v.is_finite()))
    }

    /// SHA-256 of the little-endian parameter bytes.
    pub fn digest(&self) -> String {
        let mut h = Sha256::new();
        for blk in self.blocks() {
            for v in blk {
                h.update(v.to_le_bytes());
            }
        }
        hex::encode(h.finalize())
    }

    fn check_input(&self, x: &ArrayView2<f64>) -> Result<()> {
        if x.ncols() != self.w[0].nrows() {
            return Err(invalid(format!(
                "window width {} does not match the network input width {}",
                x.ncols(),
                self.w[0].nrows()
            )));
        }
        Ok(())
    }
}

/// Intermediate activations kept for back-propagation.
struct Trace {
    z: [Array2<f64>; 3],
    a: [Array2<f64>; 3],
    /// `a[2]` after the dropout mask.
    a3d: Array2<f64>,
    y: Array2<f64>,
}

fn relu(z: &Array2<f64>) -> Array2<f64> {
    z.mapv(|v| if v > 0.0 { v } else { 0.0 })
}

fn affine(x: &ArrayView2<f64>, w: &Array2<f64>, b: &Array1<f64>) -> Array2<f64> {
    let mut z = x.dot(w);
    z += b;
    z
}

fn run(params: &NetParams, x: &ArrayView2<f64>, mask: Option<&Array2<f64>>) -> Trace {
    let z0 = affine(x, &params.w[0], &params.b[0]);
    let a0 = relu(&z0);
    let z1 = affine(&a0.view(), &params.w[1], &params.b[1]);
    let a1 = relu(&z1);
    let z2 = affine(&a1.view(), &params.w[2], &params.b[2]);
    let a2 = relu(&z2);
    let a3d = match mask {
        Some(m) => &a2 * m,
        None => a2.clone(),
    };
    let y = affine(&a3d.view(), &params.w[3], &params.b[3]);
    Trace { z: [z0, z1, z2], a: [a0, a1, a2], a3d, y }
}

fn rows_to_mrp(y: &Array2<f64>) -> Vec<Mrp> {
    y.rows().into_iter().map(|r| Mrp::new(r[0], r[1], r[2])).collect()
}

/// Inference on a batch of windows (rows of `x`); no dropout.
pub fn forward(params: &NetParams, x: ArrayView2<f64>) -> Result<Vec<Mrp>> {
    params.check_input(&x)?;
    Ok(rows_to_mrp(&run(params, &x, None).y))
}

/// Inference on one flattened window.
pub fn forward_one(params: &NetParams, window: &[f64]) -> Result<Mrp> {
    let x = ArrayView2::from_shape((1, window.len()), window).map_err(|e| invalid(e.to_string()))?;
    Ok(forward(params, x)?[0])
}

/// Inverted-dropout mask: entries are 0 or `1 / (1 - rate)`.
pub fn dropout_mask<R: Rng>(rows: usize, cols: usize, rate: f64, rng: &mut R) -> Array2<f64> {
    let keep = 1.0 / (1.0 - rate);
    Array2::from_shape_fn((rows, cols), |_| if rng.gen::<f64>() < rate { 0.0 } else { keep })
}

/// RMS rotation angle (deg) between predictions and labels.
pub fn loss(predicted: &[Mrp], labels: &[Mrp]) -> Result<f64> {
    crate::rotation::rms_rotation_angle(predicted, labels)
}

/// Loss (deg), per-sample squared angles (rad^2) and `dL/dy` for a batch.
fn loss_and_output_grad(y: &Array2<f64>, labels: &[Mrp]) -> (f64, Vec<f64>, Array2<f64>) {
    let b = labels.len();
    let k = 180.0 / std::f64::consts::PI;
    let mut theta = Vec::with_capacity(b);
    let mut dots = Vec::with_capacity(b);
    let mut targets = Vec::with_capacity(b);
    for (row, label) in y.rows().into_iter().zip(labels) {
        let qp = Mrp::new(row[0], row[1], row[2]).to_quat_unchecked();
        let qt = label.to_quat_unchecked();
        theta.push(quat_angle_rad(&qp, &qt));
        dots.push(qp.dot(&qt));
        targets.push(qt);
    }
    let sq: Vec<f64> = theta.iter().map(|t| t * t).collect();
    let mean_sq = sq.iter().sum::<f64>() / b as f64;
    let loss_deg = k * mean_sq.sqrt();
    let mut gy = Array2::zeros((b, 3));
    if !(loss_deg >= LOSS_FLOOR_DEG) || !loss_deg.is_finite() {
        return (loss_deg, sq, gy);
    }
    // L = k sqrt(mean theta^2)  =>  dL/d(theta_i^2) = k^2 / (2 B L)
    let dl_dsq = k * k / (2.0 * b as f64 * loss_deg);
    for i in 0..b {
        let tg = theta[i].max(ANGLE_GUARD_RAD);
        let sgn = if dots[i] >= 0.0 { 1.0 } else { -1.0 };
        // theta = 2 acos|d|  =>  d(theta^2)/dd = -4 sgn(d) theta / sin(theta / 2)
        let dsq_dd = -4.0 * sgn * tg / (tg / 2.0).sin();
        let row = y.row(i);
        let s = [row[0], row[1], row[2]];
        let d = 1.0 + s.iter().map(|v| v * v).sum::<f64>();
        let qt: &Quaternion = &targets[i];
        let vt = [qt.x, qt.y, qt.z];
        let s_dot_v = s[0] * vt[0] + s[1] * vt[1] + s[2] * vt[2];
        for j in 0..3 {
            let dd_ds = -4.0 * qt.w * s[j] / (d * d) + 2.0 * vt[j] / d - 4.0 * s[j] * s_dot_v / (d * d);
            gy[[i, j]] = dl_dsq * dsq_dd * dd_ds;
        }
    }
    (loss_deg, sq, gy)
}

fn relu_backward(g: &mut Array2<f64>, z: &Array2<f64>) {
    g.zip_mut_with(z, |gv, &zv| {
        if zv <= 0.0 {
            *gv = 0.0
        }
    });
}

/// Batch loss (deg), per-sample squared angles (rad^2) and parameter gradient.
///
/// `mask` is the dropout mask applied to `X3`; `None` means no dropout.
pub fn loss_and_gradient(
    params: &NetParams,
    x: ArrayView2<f64>,
    labels: &[Mrp],
    mask: Option<&Array2<f64>>,
) -> Result<(f64, Vec<f64>, NetParams)> {
    params.check_input(&x)?;
    if x.nrows() != labels.len() || labels.is_empty() {
        return Err(invalid("batch needs one label per window and at least one window"));
    }
    let tr = run(params, &x, mask);
    let (l, sq, gy) = loss_and_output_grad(&tr.y, labels);
    let mut g = params.zeros_like();
    g.w[3] = tr.a3d.t().dot(&gy);
    g.b[3] = gy.sum_axis(Axis(0));
    let mut ga = gy.dot(&params.w[3].t());
    if let Some(m) = mask {
        ga *= m;
    }
    for layer in (0..3).rev() {
        relu_backward(&mut ga, &tr.z[layer]);
        let input = if layer == 0 { x.to_owned() } else { tr.a[layer - 1].clone() };
        g.w[layer] = input.t().dot(&ga);
        g.b[layer] = ga.sum_axis(Axis(0));
        if layer > 0 {
            ga = ga.dot(&params.w[layer].t());
        }
    }
    Ok((l, sq, g))
}

/// Batch loss only, with an optional dropout mask.
pub fn batch_loss(params: &NetParams, x: ArrayView2<f64>, labels: &[Mrp], mask: Option<&Array2<f64>>) -> Result<f64> {
    params.check_input(&x)?;
    let tr = run(params, &x, mask);
    Ok(loss_and_output_grad(&tr.y, labels).0)
}

/// Predictions at steps `n-1..len` of a pass; earlier steps have no window.
pub fn predict_pass(params: &NetParams, frames: &PassFeatures, case: &CaseSpec, n: usize) -> Result<Vec<Mrp>> {
    check_window(n)?;
    check_case_feasible(frames, case)?;
    let len = frames.frames.len();
    if len < n {
        return Err(invalid(format!("pass {} has {len} steps, shorter than the window {n}", frames.pass_id)));
    }
    let width = n * case.channels();
    let mut data = Vec::with_capacity((len - n + 1) * width);
    let mut buf = Vec::with_capacity(width);
    for last in n - 1..len {
        window_at(&frames.frames, last, n, case, &mut buf);
        data.extend_from_slice(&buf);
    }
    let x = Array2::from_shape_vec((len - n + 1, width), data).expect("consistent shape");
    forward(params, x.view())
}
