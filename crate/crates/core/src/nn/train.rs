use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::model::{mse_grad, mse_loss, Architecture, FeatureScale, Fusion, InputMode, TcnModel};
use super::optim::{AdamConfig, AdamState};
use crate::error::{Error, Result};
use crate::tensor::Mat;

/// One fixed-width training example: beamformed magnitudes and the clean target.
#[derive(Debug, Clone, PartialEq)]
pub struct AnalysisWindow {
    pub b0: Mat<f32>,
    pub b1: Mat<f32>,
    pub target: Mat<f32>,
    /// Frames that come from the utterance; the rest is reflect padding.
    pub valid_frames: usize,
}

impl AnalysisWindow {
    pub fn width(&self) -> usize {
        self.b0.cols()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    /// Windows per optimizer step.
    pub batch_size: usize,
    pub max_epochs: usize,
    /// Stop after this many epochs without a dev-loss improvement.
    pub patience: Option<usize>,
    pub seed: u64,
    pub window_frames: usize,
    pub fusion: Fusion,
    pub input_mode: InputMode,
    pub features: FeatureScale,
}

impl Default for TrainConfig {
    fn default() -> Self {
        let adam = AdamConfig::default();
        Self {
            learning_rate: adam.learning_rate,
            beta1: adam.beta1,
            beta2: adam.beta2,
            epsilon: adam.epsilon,
            batch_size: 8,
            max_epochs: 100,
            patience: None,
            seed: 1,
            window_frames: 160,
            fusion: Fusion::Cbp,
            input_mode: InputMode::Both,
            features: FeatureScale::Linear,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 {
            return Err(Error::config("batch size must be positive"));
        }
        if !matches!(self.window_frames, 160 | 320 | 640) {
            return Err(Error::config(format!(
                "window must be 160, 320 or 640 frames, got {}",
                self.window_frames
            )));
        }
        if !(self.learning_rate > 0.0) || !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) || !(self.epsilon > 0.0) {
            return Err(Error::config("invalid optimizer settings"));
        }
        Ok(())
    }

    pub fn adam(&self) -> AdamConfig {
        AdamConfig {
            learning_rate: self.learning_rate,
            beta1: self.beta1,
            beta2: self.beta2,
            epsilon: self.epsilon,
        }
    }

    pub fn architecture(&self) -> Architecture {
        Architecture {
            fusion: self.fusion,
            input_mode: self.input_mode,
            features: self.features,
            ..Architecture::default()
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub dev_loss: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainHistory {
    pub epochs: Vec<EpochRecord>,
    /// Epoch whose weights were returned, if any epoch ran.
    pub best_epoch: Option<usize>,
}

impl TrainHistory {
    pub fn best_dev_loss(&self) -> Option<f64> {
        self.best_epoch.map(|e| self.epochs[e].dev_loss)
    }
}

fn stack(windows: &[&AnalysisWindow], pick: impl Fn(&AnalysisWindow) -> &Mat<f32>) -> Result<Mat<f32>> {
    Mat::hstack(&windows.iter().map(|w| pick(w)).collect::<Vec<_>>())
}

fn check_windows(windows: &[AnalysisWindow], width: usize, channels: usize, what: &'static str) -> Result<()> {
    if windows.is_empty() {
        return Err(Error::Empty(what));
    }
    for w in windows {
        for m in [&w.b0, &w.b1, &w.target] {
            if m.shape() != (channels, width) {
                return Err(Error::shape(format!(
                    "{what} window is {}x{}, expected {channels}x{width}",
                    m.rows(),
                    m.cols()
                )));
            }
        }
    }
    Ok(())
}

/// Mean loss of the model in inference mode over `windows`.
pub fn evaluate_loss(model: &TcnModel<f32>, windows: &[AnalysisWindow], batch_size: usize) -> Result<f64> {
    let width = windows.first().ok_or(Error::Empty("evaluation windows"))?.width();
    let mut total = 0.0;
    let mut count = 0usize;
    let refs: Vec<&AnalysisWindow> = windows.iter().collect();
    for chunk in refs.chunks(batch_size.max(1)) {
        let b0 = stack(chunk, |w| &w.b0)?;
        let b1 = stack(chunk, |w| &w.b1)?;
        let target = model.arch.features.forward(&stack(chunk, |w| &w.target)?);
        let pred = model.forward_eval(&b0, &b1, width)?;
        let n = pred.as_slice().len();
        total += mse_loss(&pred, &target)? * n as f64;
        count += n;
    }
    Ok(total / count as f64)
}

/// Trains `model` with Adam on mean squared error and returns the checkpoint
/// with the lowest dev loss.
pub fn train(
    mut model: TcnModel<f32>,
    train_set: &[AnalysisWindow],
    dev_set: &[AnalysisWindow],
    cfg: &TrainConfig,
    mut progress: impl FnMut(&EpochRecord),
) -> Result<(TcnModel<f32>, TrainHistory)> {
    if cfg.batch_size == 0 {
        return Err(Error::config("batch size must be positive"));
    }
    let width = train_set.first().ok_or(Error::Empty("training set"))?.width();
    let channels = model.arch.channels;
    check_windows(train_set, width, channels, "training set")?;
    check_windows(dev_set, width, channels, "dev set")?;

    let mut history = TrainHistory::default();
    let mut best = model.clone();
    let mut best_loss = f64::INFINITY;
    let adam = cfg.adam();
    let mut state = AdamState::<f32>::new(model.named_params().iter().map(|(_, t)| t.len()));
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ 0x5eed_0f_0a7a);
    let mut order: Vec<usize> = (0..train_set.len()).collect();
    let features = model.arch.features;

    for epoch in 0..cfg.max_epochs {
        order.shuffle(&mut rng);
        let mut total = 0.0;
        let mut count = 0usize;
        for chunk in order.chunks(cfg.batch_size) {
            let batch: Vec<&AnalysisWindow> = chunk.iter().map(|&i| &train_set[i]).collect();
            let b0 = stack(&batch, |w| &w.b0)?;
            let b1 = stack(&batch, |w| &w.b1)?;
            let target = features.forward(&stack(&batch, |w| &w.target)?);
            let (pred, cache) = model.forward_train(&b0, &b1, width)?;
            let loss = mse_loss(&pred, &target)?;
            if !loss.is_finite() {
                return Err(Error::NonFinite("training loss"));
            }
            let grads = model.backward(&cache, &mse_grad(&pred, &target))?;
            state.step(&adam, model.params_mut(), grads.tensors());
            model.update_running(&cache);
            let n = pred.as_slice().len();
            total += loss * n as f64;
            count += n;
        }
        let dev_loss = evaluate_loss(&model, dev_set, cfg.batch_size)?;
        let record = EpochRecord {
            epoch,
            train_loss: total / count as f64,
            dev_loss,
        };
        progress(&record);
        history.epochs.push(record);
        if dev_loss < best_loss {
            best_loss = dev_loss;
            best = model.clone();
            history.best_epoch = Some(epoch);
        } else if let (Some(p), Some(b)) = (cfg.patience, history.best_epoch) {
            if epoch - b >= p {
                break;
            }
        }
    }
    Ok((best, history))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    fn tiny_arch() -> Architecture {
        Architecture {
            channels: 6,
            dilations: vec![1, 2],
            sketch_dim: 6,
            ..Architecture::default()
        }
    }

    fn toy_windows(seed: u64, count: usize, width: usize) -> Vec<AnalysisWindow> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..count)
            .map(|_| {
                let b0 = Mat::from_fn(6, width, |_, _| rng.random_range(0.0..2.0f32));
                let b1 = Mat::from_fn(6, width, |_, _| rng.random_range(0.0..2.0f32));
                AnalysisWindow {
                    target: b0.clone(),
                    b0,
                    b1,
                    valid_frames: width,
                }
            })
            .collect()
    }

    #[test]
    fn learns_identity_target() {
        let train_set = toy_windows(1, 32, 20);
        let dev_set = toy_windows(2, 8, 20);
        let cfg = TrainConfig {
            max_epochs: 80,
            batch_size: 4,
            learning_rate: 3e-3,
            ..TrainConfig::default()
        };
        let arch = Architecture {
            fusion: Fusion::Concat,
            ..tiny_arch()
        };
        let model = TcnModel::new(arch, 3).unwrap();
        let initial = evaluate_loss(&model, &dev_set, 8).unwrap();
        let (best, history) = train(model, &train_set, &dev_set, &cfg, |_| {}).unwrap();
        let dev: Vec<f64> = history.epochs.iter().map(|e| e.dev_loss).collect();
        assert!(dev[0] > dev[1] && dev[1] > dev[2] && dev[2] > dev[3], "{dev:?}");
        let final_loss = history.best_dev_loss().unwrap();
        assert!(final_loss < 0.1 * initial, "{final_loss} vs {initial}");
        assert_eq!(evaluate_loss(&best, &dev_set, 4).unwrap(), final_loss);
    }

    #[test]
    fn zero_epochs_returns_initial_model() {
        let w = toy_windows(1, 2, 10);
        let model = TcnModel::new(tiny_arch(), 3).unwrap();
        let cfg = TrainConfig {
            max_epochs: 0,
            ..TrainConfig::default()
        };
        let (out, history) = train(model.clone(), &w, &w, &cfg, |_| {}).unwrap();
        assert!(history.epochs.is_empty());
        assert_eq!(out.named_params(), model.named_params());
    }

    #[test]
    fn same_seed_same_history() {
        let w = toy_windows(4, 6, 12);
        let d = toy_windows(5, 2, 12);
        let cfg = TrainConfig {
            max_epochs: 3,
            batch_size: 4,
            ..TrainConfig::default()
        };
        let run = || train(TcnModel::new(tiny_arch(), 7).unwrap(), &w, &d, &cfg, |_| {}).unwrap().1;
        let (a, b) = (run(), run());
        for (x, y) in a.epochs.iter().zip(&b.epochs) {
            assert_eq!(x.train_loss.to_bits(), y.train_loss.to_bits());
            assert_eq!(x.dev_loss.to_bits(), y.dev_loss.to_bits());
        }
    }

    #[test]
    fn empty_or_ragged_sets_rejected() {
        let w = toy_windows(1, 2, 10);
        let model = TcnModel::new(tiny_arch(), 3).unwrap();
        let cfg = TrainConfig::default();
        assert!(train(model.clone(), &[], &w, &cfg, |_| {}).is_err());
        assert!(train(model.clone(), &w, &[], &cfg, |_| {}).is_err());
        let other = toy_windows(1, 1, 12);
        assert!(train(model, &w, &other, &cfg, |_| {}).is_err());
    }

    #[test]
    fn config_validation() {
        assert!(TrainConfig::default().validate().is_ok());
        let bad = TrainConfig {
            window_frames: 200,
            ..TrainConfig::default()
        };
        assert!(bad.validate().is_err());
        let bad = TrainConfig {
            batch_size: 0,
            ..TrainConfig::default()
        };
        assert!(bad.validate().is_err());
    }
}
