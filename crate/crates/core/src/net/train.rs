use std::collections::VecDeque;
use std::fmt::Write as _;

use ndarray::Axis;
use rand::seq::SliceRandom;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{batch_loss, dropout_mask, loss_and_gradient, NetConfig, NetParams};
use crate::error::{invalid, Error, Result};
use crate::features::WindowDataset;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub max_epochs: usize,
    pub early_stop_window: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    /// Epochs to step back after a divergence.
    pub rollback_depth: usize,
    pub lr_decay: f64,
    /// Loss above this multiple of the best loss so far counts as divergence.
    pub divergence_factor: f64,
    /// Shuffling and dropout seed.
    pub seed: u64,
    /// Test hook: force a non-finite loss at this epoch.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub inject_divergence_at: Option<usize>,
}

pub const MAX_EPOCHS: usize = 240;

impl Default for TrainConfig {
    fn default() -> Self {
        Self::new(0)
    }
}

impl TrainConfig {
    pub fn new(seed: u64) -> Self {
        TrainConfig {
            max_epochs: MAX_EPOCHS,
            early_stop_window: 40,
            batch_size: 32,
            learning_rate: 3e-3,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            rollback_depth: 2,
            lr_decay: 0.9,
            divergence_factor: 10.0,
            seed,
            inject_divergence_at: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.max_epochs == 0 || self.max_epochs > MAX_EPOCHS {
            return Err(Error::Configuration(format!("max_epochs must be in 1..={MAX_EPOCHS}")));
        }
        if self.early_stop_window != 40 || self.rollback_depth != 2 || self.lr_decay != 0.9 {
            return Err(Error::Configuration(
                "early-stop window 40, rollback depth 2 and lr decay 0.9 are fixed".into(),
            ));
        }
        if self.batch_size == 0 {
            return Err(Error::Configuration("batch size must be positive".into()));
        }
        let pos = |name: &str, v: f64| {
            if v > 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err(Error::Configuration(format!("{name} must be positive, got {v}")))
            }
        };
        pos("learning_rate", self.learning_rate)?;
        pos("epsilon", self.epsilon)?;
        pos("divergence_factor", self.divergence_factor)?;
        for (name, b) in [("beta1", self.beta1), ("beta2", self.beta2)] {
            if !(0.0..1.0).contains(&b) {
                return Err(Error::Configuration(format!("{name} must be in [0, 1), got {b}")));
            }
        }
        Ok(())
    }
}

/// Adam optimiser state.
#[derive(Debug, Clone)]
pub struct Adam {
    m: NetParams,
    v: NetParams,
    t: i32,
    beta1: f64,
    beta2: f64,
    epsilon: f64,
}

impl Adam {
    pub fn new(like: &NetParams, cfg: &TrainConfig) -> Self {
        Adam {
            m: like.zeros_like(),
            v: like.zeros_like(),
            t: 0,
            beta1: cfg.beta1,
            beta2: cfg.beta2,
            epsilon: cfg.epsilon,
        }
    }

    pub fn reset(&mut self) {
        self.m = self.m.zeros_like();
        self.v = self.v.zeros_like();
        self.t = 0;
    }

    pub fn steps(&self) -> i32 {
        self.t
    }

    pub fn step(&mut self, params: &mut NetParams, grad: &NetParams, lr: f64) {
        self.t += 1;
        let (b1, b2, eps) = (self.beta1, self.beta2, self.epsilon);
        let c1 = 1.0 - b1.powi(self.t);
        let c2 = 1.0 - b2.powi(self.t);
        let mut m_blocks = self.m.blocks_mut();
        let mut v_blocks = self.v.blocks_mut();
        for (k, (p, g)) in params.blocks_mut().into_iter().zip(grad.blocks()).enumerate() {
            let m = &mut m_blocks[k];
            let v = &mut v_blocks[k];
            for i in 0..p.len() {
                m[i] = b1 * m[i] + (1.0 - b1) * g[i];
                v[i] = b2 * v[i] + (1.0 - b2) * g[i] * g[i];
                p[i] -= lr * (m[i] / c1) / ((v[i] / c2).sqrt() + eps);
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum StopReason {
    EarlyStop,
    MaxEpoch,
}

impl std::fmt::Display for StopReason {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            StopReason::EarlyStop => "early-stop",
            StopReason::MaxEpoch => "max-epoch",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    /// 1-based.
    pub epoch: usize,
    /// Loss used for selection and early stopping, deg. After a divergence
    /// this is the loss of the epoch rolled back to.
    pub loss_deg: f64,
    /// Learning rate in force during the epoch.
    pub lr: f64,
    /// Empty, or a description of the divergence handling.
    pub event: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainHistory {
    pub epochs: Vec<EpochRecord>,
    /// Epochs at which a divergence was handled.
    pub divergences: Vec<usize>,
    pub stop_reason: StopReason,
    pub best_epoch: usize,
    pub best_loss_deg: f64,
    /// Parameter digest at the end of each epoch; index 0 is the initialisation.
    pub param_digests: Vec<String>,
}

impl TrainHistory {
    pub fn losses(&self) -> Vec<f64> {
        self.epochs.iter().map(|e| e.loss_deg).collect()
    }

    pub fn stopped_at_max_epoch(&self) -> bool {
        self.stop_reason == StopReason::MaxEpoch
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("epoch,loss_deg,lr,event\n");
        for e in &self.epochs {
            let _ = writeln!(out, "{},{},{},{}", e.epoch, e.loss_deg, e.lr, e.event);
        }
        out
    }
}

/// Whether training should stop after `epoch` (1-based) given the losses so far.
pub fn early_stop_triggered(losses: &[f64], epoch: usize, window: usize) -> bool {
    if epoch < 2 * window || losses.len() < epoch {
        return false;
    }
    let mean = |s: &[f64]| s.iter().sum::<f64>() / s.len() as f64;
    let recent = &losses[epoch - window..epoch];
    let previous = &losses[epoch - 2 * window..epoch - window];
    mean(recent) > mean(previous)
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    /// Parameters of the best epoch.
    pub params: NetParams,
    /// Parameters at the end of the last epoch.
    pub last_params: NetParams,
    pub history: TrainHistory,
}

struct Checkpoint {
    epoch: usize,
    params: NetParams,
    loss: f64,
}

/// Train from a seeded initialisation.
pub fn train(ds: &WindowDataset, nc: &NetConfig, tc: &TrainConfig) -> Result<TrainOutcome> {
    nc.validate()?;
    tc.validate()?;
    if ds.x.ncols() != nc.input_width() {
        return Err(invalid(format!(
            "dataset width {} does not match the network input width {}",
            ds.x.ncols(),
            nc.input_width()
        )));
    }
    if ds.len() < tc.batch_size {
        return Err(Error::Configuration(format!(
            "dataset has {} windows, fewer than one batch of {}",
            ds.len(),
            tc.batch_size
        )));
    }
    let mut params = NetParams::init(nc)?;
    let mut rng = ChaCha8Rng::seed_from_u64(tc.seed);
    rng.set_stream(1);
    let mut adam = Adam::new(&params, tc);
    let mut lr = tc.learning_rate;
    let n = ds.len();

    let mut ring: VecDeque<Checkpoint> = VecDeque::new();
    let init_loss = batch_loss(&params, ds.x.view(), &ds.y, None)?;
    ring.push_back(Checkpoint { epoch: 0, params: params.clone(), loss: init_loss });
    let mut best: Option<(usize, f64, NetParams)> = None;
    let mut epochs = Vec::new();
    let mut divergences = Vec::new();
    let mut digests = vec![params.digest()];
    let mut losses = Vec::new();
    let mut stop = StopReason::MaxEpoch;
    let mut order: Vec<usize> = (0..n).collect();

    for epoch in 1..=tc.max_epochs {
        order.shuffle(&mut rng);
        for chunk in order.chunks(tc.batch_size) {
            let x = ds.x.select(Axis(0), chunk);
            let y: Vec<_> = chunk.iter().map(|&i| ds.y[i]).collect();
            let mask = (nc.dropout > 0.0).then(|| dropout_mask(chunk.len(), nc.widths[2], nc.dropout, &mut rng));
            let (_, _, g) = loss_and_gradient(&params, x.view(), &y, mask.as_ref())?;
            adam.step(&mut params, &g, lr);
        }
        let mut raw = if params.is_finite() { batch_loss(&params, ds.x.view(), &ds.y, None)? } else { f64::NAN };
        if tc.inject_divergence_at == Some(epoch) {
            raw = f64::NAN;
        }
        let lr_used = lr;
        let best_loss = best.as_ref().map(|b| b.1);
        let diverged = !raw.is_finite()
            || !params.is_finite()
            || best_loss.is_some_and(|b| raw > tc.divergence_factor * b);
        let (loss, event) = if diverged {
            let target = epoch.saturating_sub(tc.rollback_depth);
            let ck = ring
                .iter()
                .find(|c| c.epoch == target)
                .ok_or_else(|| Error::Numeric(format!("no checkpoint for epoch {target}")))?;
            params = ck.params.clone();
            let loss = ck.loss;
            if !loss.is_finite() {
                return Err(Error::Numeric(format!("loss is not finite after rolling back to epoch {target}")));
            }
            lr *= tc.lr_decay;
            adam.reset();
            divergences.push(epoch);
            (loss, format!("divergence raw_loss={raw} rollback_to={target} lr={lr}"))
        } else {
            (raw, String::new())
        };
        ring.push_back(Checkpoint { epoch, params: params.clone(), loss });
        while ring.len() > tc.rollback_depth + 1 {
            ring.pop_front();
        }
        if best.as_ref().map_or(true, |b| loss < b.1) {
            best = Some((epoch, loss, params.clone()));
        }
        digests.push(params.digest());
        losses.push(loss);
        epochs.push(EpochRecord { epoch, loss_deg: loss, lr: lr_used, event });
        if early_stop_triggered(&losses, epoch, tc.early_stop_window) {
            stop = StopReason::EarlyStop;
            break;
        }
    }
    let (best_epoch, best_loss_deg, best_params) = best.expect("at least one epoch");
    Ok(TrainOutcome {
        params: best_params,
        last_params: params,
        history: TrainHistory {
            epochs,
            divergences,
            stop_reason: stop,
            best_epoch,
            best_loss_deg,
            param_digests: digests,
        },
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::features::{attitude_labels, build_frames, build_windows, fit_gyro_scale, CaseSpec, FeatureConfig};
    use crate::rotation::{quat_to_mrp, Mrp, Quaternion, Vec3};
    use crate::synth::synth_pass;
    use ndarray::Array2;
    use rand::Rng;

    fn toy(rows: usize, seed: u64) -> WindowDataset {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (n, c) = (5, 6);
        let x = Array2::from_shape_fn((rows, n * c), |_| rng.gen_range(-1.0..1.0));
        let y: Vec<Mrp> = (0..rows)
            .map(|_| {
                let axis = Vec3::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0));
                quat_to_mrp(&Quaternion::from_axis_angle(&axis, rng.gen_range(0.1..1.0))).unwrap()
            })
            .collect();
        WindowDataset {
            x,
            origin: (0..rows).map(|k| (0, k)).collect(),
            y,
            n,
            channels: c,
            case_id: "toy".into(),
            pass_ids: vec!["toy".into()],
            shuffle_seed: None,
        }
    }

    fn small_real() -> WindowDataset {
        let log = synth_pass(&crate::catalog::biased_catalog(1)[0]).unwrap();
        let gs = fit_gyro_scale(&[&log]).unwrap();
        let f = build_frames(&log, &FeatureConfig::default(), gs);
        let case: CaseSpec = "C1a".parse().unwrap();
        build_windows(&[f], &[attitude_labels(&log).unwrap()], 5, &case).unwrap()
    }

    #[test]
    fn early_stop_rule() {
        let flat = vec![1.0; 200];
        for e in 1..=200 {
            assert!(!early_stop_triggered(&flat, e, 40));
        }
        let mut rising: Vec<f64> = (0..200).map(|k| k as f64).collect();
        assert!(!early_stop_triggered(&rising, 79, 40));
        assert!(early_stop_triggered(&rising, 80, 40));
        rising.reverse();
        assert!(!early_stop_triggered(&rising, 120, 40));
    }

    /// Full-batch, no dropout: the toy isolates the gradient and optimiser.
    fn toy_config(seed: u64) -> (NetConfig, TrainConfig) {
        let mut nc = NetConfig::new(5, 6, seed);
        nc.dropout = 0.0;
        let mut tc = TrainConfig::new(seed);
        tc.batch_size = 10;
        tc.learning_rate = 5e-5;
        (nc, tc)
    }

    #[test]
    fn toy_dataset_overfits() {
        for seed in 1..=3 {
            let ds = toy(10, seed);
            let (nc, tc) = toy_config(seed);
            let out = train(&ds, &nc, &tc).unwrap();
            assert!(out.history.best_loss_deg < 0.1, "seed {seed}: best loss {}", out.history.best_loss_deg);
        }
    }

    #[test]
    fn dataset_smaller_than_batch_is_rejected() {
        let ds = toy(10, 1);
        let err = train(&ds, &NetConfig::new(5, 6, 1), &TrainConfig::new(1)).unwrap_err();
        assert!(matches!(err, Error::Configuration(_)));
    }

    #[test]
    fn fixed_constants_are_enforced() {
        let mut tc = TrainConfig::new(1);
        tc.lr_decay = 0.5;
        assert!(tc.validate().is_err());
        let mut tc = TrainConfig::new(1);
        tc.max_epochs = 241;
        assert!(tc.validate().is_err());
    }

    #[test]
    fn injected_divergence_rolls_back_two_epochs() {
        let ds = small_real();
        let nc = NetConfig::new(5, 6, 3);
        let mut tc = TrainConfig::new(3);
        tc.max_epochs = 8;
        tc.inject_divergence_at = Some(6);
        let out = train(&ds, &nc, &tc).unwrap();
        let h = &out.history;
        assert_eq!(h.divergences, vec![6]);
        assert_eq!(h.epochs.iter().filter(|e| !e.event.is_empty()).count(), 1);
        assert_eq!(h.param_digests[6], h.param_digests[4]);
        assert_eq!(h.epochs[5].loss_deg, h.epochs[3].loss_deg);
        let lr0 = tc.learning_rate;
        assert_eq!(h.epochs[5].lr, lr0);
        assert!((h.epochs[6].lr - lr0 * 0.9).abs() < 1e-18);

        // the epoch-4 parameters match an uninterrupted run stopped at epoch 4
        let mut short = tc.clone();
        short.max_epochs = 4;
        short.inject_divergence_at = None;
        let ref4 = train(&ds, &nc, &short).unwrap();
        assert_eq!(ref4.last_params.digest(), h.param_digests[6]);
    }

    #[test]
    fn divergence_at_first_epochs_rolls_back_to_init() {
        let ds = small_real();
        let nc = NetConfig::new(5, 6, 3);
        let mut tc = TrainConfig::new(3);
        tc.max_epochs = 3;
        tc.inject_divergence_at = Some(1);
        let out = train(&ds, &nc, &tc).unwrap();
        assert_eq!(out.history.param_digests[1], out.history.param_digests[0]);
        assert!(out.history.epochs[0].loss_deg.is_finite());
    }

    #[test]
    fn best_epoch_is_argmin_and_training_is_deterministic() {
        let ds = small_real();
        let nc = NetConfig::new(5, 6, 2);
        let mut tc = TrainConfig::new(2);
        tc.max_epochs = 12;
        let a = train(&ds, &nc, &tc).unwrap();
        let b = train(&ds, &nc, &tc).unwrap();
        assert_eq!(a.history, b.history);
        assert_eq!(a.params, b.params);
        let losses = a.history.losses();
        let argmin = losses
            .iter()
            .enumerate()
            .fold((0, f64::INFINITY), |acc, (i, l)| if *l < acc.1 { (i, *l) } else { acc })
            .0;
        assert_eq!(a.history.best_epoch, argmin + 1);
        assert_eq!(a.params.digest(), a.history.param_digests[a.history.best_epoch]);
        assert!(a.history.stopped_at_max_epoch());
        assert!(a.history.best_loss_deg <= losses[0]);
        let csv = a.history.to_csv();
        assert!(csv.starts_with("epoch,loss_deg,lr,event\n"));
        assert_eq!(csv.lines().count(), 13);
    }
}
