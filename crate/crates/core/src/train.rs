//! Mini-batch training and thresholded prediction.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::loss::{dice_loss, dice_loss_backward, DiceConfig};
use crate::model::{TrainState, ZNet};
use crate::optim::{adam_step, AdamState};
use crate::preprocess::{Volume, VolumeKind};
use crate::tensor::{Mode, Scalar, Shape4, Tensor4};

#[derive(Clone, Debug, PartialEq)]
pub struct TrainConfig {
    pub batch_size: usize,
    pub epochs: u64,
    pub seed: u64,
    pub shuffle: bool,
    pub lr: f64,
    pub dice: DiceConfig,
    /// Stop after this many optimizer steps in total, even mid-epoch.
    pub max_steps: Option<u64>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            batch_size: 8,
            epochs: 10,
            seed: 0,
            shuffle: true,
            lr: 1e-3,
            dice: DiceConfig::default(),
            max_steps: None,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 {
            return Err(Error::config("batch_size must be at least 1"));
        }
        self.dice.validate()?;
        AdamState::with_lr(self.lr).validate()
    }
}

/// Single-channel slice/mask pairs of one spatial size, stored as `f32`.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Dataset {
    hw: (usize, usize),
    images: Vec<Vec<f32>>,
    masks: Vec<Vec<f32>>,
}

impl Dataset {
    pub fn new(hw: (usize, usize)) -> Self {
        Dataset {
            hw,
            images: Vec::new(),
            masks: Vec::new(),
        }
    }

    pub fn push(&mut self, image: Vec<f32>, mask: Vec<f32>) -> Result<()> {
        let m = self.hw.0 * self.hw.1;
        if image.len() != m || mask.len() != m {
            return Err(Error::shape(format!(
                "dataset pair has {} / {} values, expected {}x{}",
                image.len(),
                mask.len(),
                self.hw.0,
                self.hw.1
            )));
        }
        if let Some(v) = mask.iter().find(|&&v| v != 0.0 && v != 1.0) {
            return Err(Error::contract(format!(
                "dataset mask value {v} is not binary"
            )));
        }
        self.images.push(image);
        self.masks.push(mask);
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.images.len()
    }

    pub fn is_empty(&self) -> bool {
        self.images.is_empty()
    }

    pub fn hw(&self) -> (usize, usize) {
        self.hw
    }

    /// Stacks the selected pairs into `(n, 1, h, w)` tensors.
    pub fn batch<T: Scalar>(&self, indices: &[usize]) -> Result<(Tensor4<T>, Tensor4<T>)> {
        let shape = Shape4::new(indices.len(), 1, self.hw.0, self.hw.1);
        let gather = |src: &Vec<Vec<f32>>| {
            indices
                .iter()
                .flat_map(|&i| src[i].iter().map(|&v| T::lit(v as f64)))
                .collect::<Vec<T>>()
        };
        Ok((
            Tensor4::from_vec(shape, gather(&self.images))?,
            Tensor4::from_vec(shape, gather(&self.masks))?,
        ))
    }
}

/// Progress reported to the caller while training.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum TrainEvent {
    Step {
        step: u64,
        epoch: u64,
        loss: f64,
    },
    EpochEnd {
        epoch: u64,
        mean_loss: f64,
        state: TrainState,
    },
}

impl TrainEvent {
    /// Log line: `step,epoch,loss` per step, `# epoch E mean_loss L` per epoch.
    /// Floats use shortest round-trip formatting.
    pub fn log_line(&self) -> String {
        match self {
            TrainEvent::Step { step, epoch, loss } => format!("{step},{epoch},{loss}"),
            TrainEvent::EpochEnd {
                epoch, mean_loss, ..
            } => format!("# epoch {epoch} mean_loss {mean_loss}"),
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct TrainLog {
    pub steps: Vec<(u64, u64, f64)>,
    pub epoch_means: Vec<(u64, f64)>,
    pub state: TrainState,
}

impl TrainLog {
    pub fn last_loss(&self) -> Option<f64> {
        self.steps.last().map(|s| s.2)
    }
}

/// Sample order for `epoch`: identity, or a shuffle seeded by `(seed, epoch)`.
pub fn epoch_order(n: usize, seed: u64, epoch: u64, shuffle: bool) -> Vec<usize> {
    let mut order: Vec<usize> = (0..n).collect();
    if shuffle {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(epoch);
        order.shuffle(&mut rng);
    }
    order
}

/// Trains `net` from `start` (all zeros for a fresh run) until `tcfg.epochs`
/// epochs are complete or `tcfg.max_steps` is reached.
///
/// Each step: forward in training mode, Dice loss, backward, Adam. `sink`
/// sees every step and every completed epoch; returning an error from it
/// aborts training. Epoch `e` always uses the same sample order, so resuming
/// from an epoch boundary replays exactly what an uninterrupted run does.
pub fn train<T: Scalar>(
    net: &mut ZNet<T>,
    data: &Dataset,
    tcfg: &TrainConfig,
    start: TrainState,
    mut sink: impl FnMut(&ZNet<T>, &TrainEvent) -> Result<()>,
) -> Result<TrainLog> {
    tcfg.validate()?;
    if data.is_empty() {
        return Err(Error::config("training dataset is empty"));
    }
    let cfg = net.config();
    if data.hw() != cfg.input_size || cfg.in_channels != 1 {
        return Err(Error::shape(format!(
            "dataset slices are {:?} with 1 channel, network expects {:?} with {}",
            data.hw(),
            cfg.input_size,
            cfg.in_channels
        )));
    }
    let mut adam = AdamState {
        t: start.adam_step,
        ..AdamState::with_lr(tcfg.lr)
    };
    let mut log = TrainLog {
        state: start,
        ..TrainLog::default()
    };
    let mut state = start;
    while state.epoch < tcfg.epochs {
        let epoch = state.epoch;
        let order = epoch_order(data.len(), tcfg.seed, epoch, tcfg.shuffle);
        let mut sum = 0.0;
        let mut batches = 0u64;
        for (b, idx) in order.chunks(tcfg.batch_size).enumerate() {
            if tcfg.max_steps.is_some_and(|m| state.step >= m) {
                break;
            }
            let (x, y) = data.batch::<T>(idx)?;
            let pass = net.forward_train(&x)?;
            if !pass.output.all_finite() {
                return Err(Error::NonFinite(format!(
                    "network output at epoch {epoch}, batch {b} (samples {idx:?})"
                )));
            }
            let loss = dice_loss(&pass.output, &y, &tcfg.dice)?.mean;
            if !loss.is_finite() {
                return Err(Error::NonFinite(format!(
                    "loss {loss} at epoch {epoch}, batch {b} (samples {idx:?})"
                )));
            }
            let g = dice_loss_backward(&pass.output, &y, &tcfg.dice)?;
            let at = || format!("epoch {epoch}, batch {b} (samples {idx:?})");
            net.backward(&pass, &g).map_err(|e| e.context(&at()))?;
            adam_step(net.store_mut(), &mut adam).map_err(|e| e.context(&at()))?;
            state.step += 1;
            state.adam_step = adam.t;
            sum += loss;
            batches += 1;
            log.steps.push((state.step, epoch, loss));
            sink(
                net,
                &TrainEvent::Step {
                    step: state.step,
                    epoch,
                    loss,
                },
            )?;
        }
        if batches < order.len().div_ceil(tcfg.batch_size) as u64 {
            // Stopped mid-epoch by max_steps; the epoch is not complete.
            break;
        }
        state.epoch += 1;
        let mean_loss = sum / batches as f64;
        log.epoch_means.push((epoch, mean_loss));
        log.state = state;
        sink(
            net,
            &TrainEvent::EpochEnd {
                epoch,
                mean_loss,
                state,
            },
        )?;
    }
    log.state = state;
    Ok(log)
}

/// Per-slice probabilities for a preprocessed volume whose slices match the
/// network input size, evaluated in batches with running statistics.
pub fn predict<T: Scalar>(net: &ZNet<T>, volume: &Volume, batch_size: usize) -> Result<Volume> {
    let cfg = net.config();
    if volume.slice_dims() != cfg.input_size || cfg.in_channels != 1 {
        return Err(Error::shape(format!(
            "volume slices are {:?}, network expects {:?} with {} channel(s)",
            volume.slice_dims(),
            cfg.input_size,
            cfg.in_channels
        )));
    }
    let (h, w) = volume.slice_dims();
    let bs = batch_size.max(1);
    let mut out = Vec::with_capacity(volume.data().len());
    for z0 in (0..volume.depth()).step_by(bs) {
        let n = bs.min(volume.depth() - z0);
        let vals = volume.data()[z0 * h * w..(z0 + n) * h * w]
            .iter()
            .map(|&v| T::lit(v as f64))
            .collect();
        let x = Tensor4::from_vec([n, 1, h, w], vals)?;
        let p = net.forward(&x, Mode::Eval)?.output;
        out.extend(p.data().iter().map(|v| v.as_f64() as f32));
    }
    Volume::new(volume.dims(), volume.spacing(), out, VolumeKind::Intensity)
}

/// `1` where `p > threshold`, else `0`.
pub fn binarize(p: &Volume, threshold: f32) -> Result<Volume> {
    let data = p
        .data()
        .iter()
        .map(|&v| if v > threshold { 1.0 } else { 0.0 })
        .collect();
    Volume::new(p.dims(), p.spacing(), data, VolumeKind::Mask)
}
