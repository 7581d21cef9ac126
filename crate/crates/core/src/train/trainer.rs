//! Epoch and mini-batch training loop.

use std::collections::BTreeMap;
use std::path::Path;
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::loss::{contrastive_loss, ContrastiveLossParams};
use super::rmsprop::Rmsprop;
use crate::data::{PairSample, PreparedImages};
use crate::error::{Error, Result};
use crate::eval::{compute_distances, threshold_sweep, DEFAULT_STEP};
use crate::model::{Checkpoint, Model};
use crate::nn::Mode;
use crate::scalar::Scalar;
use crate::seeds::derive_seed;
use crate::tape::Tape;
use crate::tensor::Tensor;

/// Learning-rate multiplier applied at each scheduled epoch.
pub const LR_DECAY_FACTOR: f64 = 0.1;
/// Checkpoint names of optimizer accumulators start with this.
pub const OPT_PREFIX: &str = "opt/";
/// Meta key of the serialized [`TrainState`].
pub const TRAIN_KEY: &str = "train";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    /// Total epochs; a resumed run stops at the same count.
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
    /// After finishing each of these (1-based) epochs the learning rate is
    /// multiplied by [`LR_DECAY_FACTOR`]. Empty disables the schedule.
    pub lr_decay_epochs: Vec<usize>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig { epochs: 20, batch_size: 128, seed: 0, lr_decay_epochs: vec![10] }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 {
            return Err(Error::InvalidArgument("epochs must be at least 1".into()));
        }
        if self.batch_size == 0 {
            return Err(Error::InvalidArgument("batch size must be at least 1".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    /// 1-based.
    pub epoch: usize,
    pub mean_loss: f64,
    pub validation_accuracy: Option<f64>,
    /// Rate used during the epoch.
    pub learning_rate: f64,
    /// Wall time; kept out of serialized output so reruns are byte-identical.
    #[serde(skip)]
    pub seconds: f64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainHistory {
    pub epochs: Vec<EpochRecord>,
}

impl TrainHistory {
    pub fn len(&self) -> usize {
        self.epochs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.epochs.is_empty()
    }

    pub fn wall_time(&self) -> f64 {
        self.epochs.iter().map(|e| e.seconds).sum()
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

/// Optimizer settings and progress stored alongside the weights.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainState {
    pub epochs_completed: usize,
    pub learning_rate: f64,
    pub rho: f64,
    pub epsilon: f64,
    pub weight_decay: f64,
    pub history: TrainHistory,
}

/// A batch of image pairs, `[N, 1, H, W]` each, with their labels.
pub struct PairBatch<T: Scalar = f32> {
    pub left: Tensor<T>,
    pub right: Tensor<T>,
    pub labels: Vec<u8>,
}

impl PairBatch<f32> {
    pub fn gather(pairs: &[PairSample], images: &PreparedImages) -> Result<Self> {
        let side = |pick: fn(&PairSample) -> crate::data::ImageId| {
            let ts = pairs.iter().map(|p| images.get(pick(p))).collect::<Result<Vec<_>>>()?;
            Tensor::stack(&ts)
        };
        Ok(PairBatch { left: side(|p| p.a)?, right: side(|p| p.b)?, labels: pairs.iter().map(|p| p.y).collect() })
    }
}

/// Forward both branches with shared weights, backpropagate the
/// contrastive loss and apply one optimizer step. Returns the loss before
/// the update.
///
/// A non-finite loss leaves the model untouched and reports position
/// `(0, 0)`; the training loop fills in the real epoch and batch.
pub fn train_step<T: Scalar, R: Rng + ?Sized>(
    model: &mut Model<T>,
    optimizer: &mut Rmsprop<T>,
    batch: &PairBatch<T>,
    loss: &ContrastiveLossParams,
    rng: &mut R,
) -> Result<T> {
    let mut tape = Tape::new();
    let bound = model.bind(&mut tape, true)?;
    let x1 = tape.constant(batch.left.clone());
    let x2 = tape.constant(batch.right.clone());
    let e1 = model.forward(&mut tape, &bound, x1, Mode::Train, rng)?;
    let e2 = model.forward(&mut tape, &bound, x2, Mode::Train, rng)?;
    let l = contrastive_loss(&mut tape, e1, e2, &batch.labels, loss)?;
    let value = tape.value(l).item()?;
    if !value.is_finite() {
        return Err(Error::NonFiniteLoss { epoch: 0, batch: 0 });
    }
    let grads = tape.backward(l)?;
    drop(tape);
    optimizer.step(model.params_mut(), &grads)?;
    Ok(value)
}

/// Training pairs and the images they reference.
pub struct TrainData<'a> {
    pub pairs: &'a [PairSample],
    pub images: &'a PreparedImages,
    /// Pairs scored after every epoch; their images must be in `images`.
    pub validation: Option<&'a [PairSample]>,
}

/// Model, optimizer and history of one training run.
#[derive(Clone, Debug)]
pub struct Trainer {
    pub model: Model,
    pub optimizer: Rmsprop,
    pub history: TrainHistory,
    /// Extra text entries written into every checkpoint.
    pub meta: BTreeMap<String, String>,
}

impl Trainer {
    pub fn new(model: Model, optimizer: Rmsprop) -> Self {
        Trainer { model, optimizer, history: TrainHistory::default(), meta: BTreeMap::new() }
    }

    pub fn epochs_completed(&self) -> usize {
        self.history.len()
    }

    pub fn state(&self) -> TrainState {
        TrainState {
            epochs_completed: self.epochs_completed(),
            learning_rate: self.optimizer.learning_rate,
            rho: self.optimizer.rho,
            epsilon: self.optimizer.epsilon,
            weight_decay: self.optimizer.weight_decay,
            history: self.history.clone(),
        }
    }

    pub fn checkpoint(&self) -> Result<Checkpoint> {
        let mut ck = Checkpoint::from_model(&self.model)?;
        for (name, acc) in self.optimizer.accumulators() {
            ck.tensors.push((format!("{OPT_PREFIX}{name}"), acc.clone()));
        }
        ck.meta.extend(self.meta.iter().map(|(k, v)| (k.clone(), v.clone())));
        ck.meta.insert(TRAIN_KEY.into(), serde_json::to_string(&self.state())?);
        Ok(ck)
    }

    /// Restores a run saved by [`Trainer::checkpoint`]. A checkpoint without
    /// training state starts a fresh optimizer on its weights.
    pub fn from_checkpoint(ck: &Checkpoint) -> Result<Self> {
        let model = ck.to_model()?;
        let mut meta = ck.meta.clone();
        let Some(state) = meta.remove(TRAIN_KEY) else {
            meta.remove(crate::model::ARCH_KEY);
            return Ok(Trainer { meta, ..Trainer::new(model, Rmsprop::default()) });
        };
        meta.remove(crate::model::ARCH_KEY);
        let state: TrainState = serde_json::from_str(&state)?;
        let mut optimizer = Rmsprop::new(state.learning_rate, state.rho, state.epsilon, state.weight_decay)?;
        for (name, t) in &ck.tensors {
            if let Some(param) = name.strip_prefix(OPT_PREFIX) {
                let expected = model
                    .param(param)
                    .ok_or_else(|| Error::Checkpoint(format!("optimizer state for unknown parameter `{param}`")))?;
                if expected.shape() != t.shape() {
                    return Err(Error::Checkpoint(format!("optimizer state for `{param}` has shape {:?}", t.shape())));
                }
                optimizer.set_accumulator(param, t.clone())?;
            }
        }
        if state.history.len() != state.epochs_completed {
            return Err(Error::Checkpoint("training history does not match the epoch count".into()));
        }
        Ok(Trainer { model, optimizer, history: state.history, meta })
    }

    /// Trains until `config.epochs` epochs are complete, continuing the
    /// numbering of a resumed run. Writes `epoch_NNN.sgnt` and
    /// `latest.sgnt` into `checkpoint_dir` after every epoch.
    pub fn run(
        &mut self,
        data: &TrainData,
        config: &TrainConfig,
        loss: &ContrastiveLossParams,
        checkpoint_dir: Option<&Path>,
    ) -> Result<()> {
        config.validate()?;
        loss.validate()?;
        self.optimizer.validate()?;
        if data.pairs.is_empty() {
            return Err(Error::InvalidArgument("no training pairs".into()));
        }
        let mut order: Vec<usize> = (0..data.pairs.len()).collect();
        for epoch in self.epochs_completed() + 1..=config.epochs {
            let started = Instant::now();
            order.sort_unstable();
            order.shuffle(&mut ChaCha8Rng::seed_from_u64(derive_seed(config.seed, "shuffle", &[epoch as u64])));

            let mut total = 0.0;
            for (b, chunk) in order.chunks(config.batch_size).enumerate() {
                let pairs: Vec<PairSample> = chunk.iter().map(|&i| data.pairs[i].clone()).collect();
                let batch = PairBatch::gather(&pairs, data.images)?;
                let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(config.seed, "dropout", &[epoch as u64, b as u64]));
                let value = match train_step(&mut self.model, &mut self.optimizer, &batch, loss, &mut rng) {
                    Err(Error::NonFiniteLoss { .. }) => return Err(Error::NonFiniteLoss { epoch, batch: b }),
                    other => other?,
                };
                total += f64::from(value) * chunk.len() as f64;
            }
            let validation_accuracy = match data.validation {
                Some(pairs) if !pairs.is_empty() => {
                    let records = compute_distances(&self.model, pairs, data.images)?;
                    Some(threshold_sweep(&records, DEFAULT_STEP)?.accuracy)
                }
                _ => None,
            };
            let record = EpochRecord {
                epoch,
                mean_loss: total / data.pairs.len() as f64,
                validation_accuracy,
                learning_rate: self.optimizer.learning_rate,
                seconds: started.elapsed().as_secs_f64(),
            };
            log::info!(
                "epoch {epoch}: loss {:.6}{} lr {:e} ({:.1}s)",
                record.mean_loss,
                record.validation_accuracy.map(|a| format!(", validation accuracy {a:.4},")).unwrap_or_default(),
                record.learning_rate,
                record.seconds
            );
            self.history.epochs.push(record);
            if config.lr_decay_epochs.contains(&epoch) {
                self.optimizer.learning_rate *= LR_DECAY_FACTOR;
            }
            if let Some(dir) = checkpoint_dir {
                let ck = self.checkpoint()?;
                ck.save(&dir.join(format!("epoch_{epoch:03}.sgnt")))?;
                ck.save(&dir.join("latest.sgnt"))?;
            }
        }
        Ok(())
    }
}
