//! Linear encoder, class-balanced batch sampler and the Prototype Memory
//! training loop.
//!
//! One step:
//!
//! 1. sample `batch_classes` identities with `k` images each and encode them;
//! 2. estimate exemplar qualities (feature norm over the whole batch, or
//!    recognizability against the current unrecognizable prototype);
//! 3. build one prototype per class group and enqueue it (new classes are
//!    inserted, known ones are refresh-blended);
//! 4. use the stored batch-class prototypes plus every other stored prototype
//!    as classifier weights for the margin loss;
//! 5. backpropagate through normalization and the encoder and take an SGD
//!    step; prototypes are treated as constants;
//! 6. refresh the unrecognizable prototype when due, then advance the step.

use std::collections::VecDeque;
use std::io::{Read, Write};

use rand::seq::{index, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::losses::{draw_margins, loss_and_grad_with_margins, LossOutput, LossSpec};
use crate::memory::{read_f64, read_u32, read_u64, PrototypeMemory};
use crate::protogen::{estimate_qualities, generate_with, Estimator, PrototypeCandidate};
use crate::synthdata::{Dataset, UNRECOGNIZABLE_ID};
use crate::vecmath::{dot, l2_normalize, RawEmbedding, UnitEmbedding};
use crate::ClassId;

const ENCODER_MAGIC: &[u8; 8] = b"QAPMENC\0";
const ENCODER_VERSION: u32 = 1;

// RNG stream ids, all derived from the training seed.
const STREAM_SAMPLER: u64 = 1;
const STREAM_MARGINS: u64 = 2;
const STREAM_POOL: u64 = 3;
const STREAM_INIT: u64 = 4;
const STREAM_UI_CLASS: u64 = 5;

pub(crate) fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Affine map `x = W obs + b` from observation space to embedding space.
#[derive(Debug, Clone, PartialEq)]
pub struct Encoder {
    dim: usize,
    obs_dim: usize,
    /// Row-major `dim x obs_dim`.
    weights: Vec<f64>,
    bias: Vec<f64>,
}

/// Gradient with the same layout as [`Encoder`].
#[derive(Debug, Clone, PartialEq)]
pub struct EncoderGrad {
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
}

impl Encoder {
    pub fn from_parts(dim: usize, obs_dim: usize, weights: Vec<f64>, bias: Vec<f64>) -> Result<Self> {
        if weights.len() != dim * obs_dim {
            return Err(Error::DimensionMismatch { expected: dim * obs_dim, actual: weights.len() });
        }
        if bias.len() != dim {
            return Err(Error::DimensionMismatch { expected: dim, actual: bias.len() });
        }
        if weights.iter().chain(&bias).any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("encoder parameters"));
        }
        Ok(Self { dim, obs_dim, weights, bias })
    }

    /// Gaussian weights with variance `1 / obs_dim`, zero bias.
    pub fn random<R: Rng + ?Sized>(dim: usize, obs_dim: usize, rng: &mut R) -> Self {
        let std = 1.0 / (obs_dim as f64).sqrt();
        let weights = (0..dim * obs_dim)
            .map(|_| {
                let z: f64 = rng.sample(StandardNormal);
                std * z
            })
            .collect();
        Self { dim, obs_dim, weights, bias: vec![0.0; dim] }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn obs_dim(&self) -> usize {
        self.obs_dim
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn weights_mut(&mut self) -> &mut [f64] {
        &mut self.weights
    }

    pub fn bias(&self) -> &[f64] {
        &self.bias
    }

    pub fn bias_mut(&mut self) -> &mut [f64] {
        &mut self.bias
    }

    pub fn encode(&self, obs: &[f64]) -> Result<RawEmbedding> {
        if obs.len() != self.obs_dim {
            return Err(Error::DimensionMismatch { expected: self.obs_dim, actual: obs.len() });
        }
        let out = (0..self.dim)
            .map(|r| dot(&self.weights[r * self.obs_dim..(r + 1) * self.obs_dim], obs) + self.bias[r])
            .collect();
        RawEmbedding::new(out)
    }

    pub fn encode_batch<O: AsRef<[f64]>>(&self, observations: &[O]) -> Result<Vec<RawEmbedding>> {
        observations.iter().map(|o| self.encode(o.as_ref())).collect()
    }

    /// Encodes and normalizes.
    pub fn embed(&self, obs: &[f64]) -> Result<UnitEmbedding> {
        l2_normalize(&self.encode(obs)?)
    }

    pub fn apply_sgd(&mut self, grad: &EncoderGrad, lr: f64) {
        for (w, g) in self.weights.iter_mut().zip(&grad.weights) {
            *w -= lr * g;
        }
        for (b, g) in self.bias.iter_mut().zip(&grad.bias) {
            *b -= lr * g;
        }
    }

    /// Versioned binary checkpoint: magic, u32 version, u64 dim, u64
    /// obs_dim, then the weights row-major and the bias, little-endian f64.
    pub fn write_to<W: Write>(&self, mut w: W) -> Result<()> {
        w.write_all(ENCODER_MAGIC)?;
        w.write_all(&ENCODER_VERSION.to_le_bytes())?;
        w.write_all(&(self.dim as u64).to_le_bytes())?;
        w.write_all(&(self.obs_dim as u64).to_le_bytes())?;
        for v in self.weights.iter().chain(&self.bias) {
            w.write_all(&v.to_le_bytes())?;
        }
        Ok(())
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut buf = Vec::with_capacity(24 + 8 * (self.weights.len() + self.dim));
        self.write_to(&mut buf).expect("writing to a Vec cannot fail");
        buf
    }

    pub fn read_from<R: Read>(mut r: R) -> Result<Self> {
        let mut magic = [0u8; 8];
        r.read_exact(&mut magic)?;
        if &magic != ENCODER_MAGIC {
            return Err(Error::format("encoder checkpoint", "bad magic"));
        }
        let version = read_u32(&mut r)?;
        if version != ENCODER_VERSION {
            return Err(Error::format("encoder checkpoint", format!("unsupported version {version}")));
        }
        let dim = read_u64(&mut r)? as usize;
        let obs_dim = read_u64(&mut r)? as usize;
        let weights = (0..dim * obs_dim).map(|_| read_f64(&mut r)).collect::<Result<Vec<_>>>()?;
        let bias = (0..dim).map(|_| read_f64(&mut r)).collect::<Result<Vec<_>>>()?;
        Self::from_parts(dim, obs_dim, weights, bias)
            .map_err(|e| Error::format("encoder checkpoint", e.to_string()))
    }
}

/// Piecewise-constant learning rate: the rate of the last entry whose start
/// step is `<= t`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LrSchedule(Vec<(u64, f64)>);

impl LrSchedule {
    pub fn new(mut entries: Vec<(u64, f64)>) -> Result<Self> {
        entries.sort_by_key(|(s, _)| *s);
        if entries.first().map(|(s, _)| *s) != Some(0) {
            return Err(Error::config("train.lr_schedule must start at step 0"));
        }
        if entries.windows(2).any(|w| w[0].0 == w[1].0) {
            return Err(Error::config("train.lr_schedule has duplicate steps"));
        }
        if entries.iter().any(|(_, lr)| !(lr.is_finite() && *lr >= 0.0)) {
            return Err(Error::config("train.lr_schedule rates must be finite and non-negative"));
        }
        Ok(Self(entries))
    }

    pub fn constant(lr: f64) -> Self {
        Self(vec![(0, lr)])
    }

    /// `lr` until half of `total_steps`, then `lr/10`, then `lr/100` from
    /// three quarters on.
    pub fn step_decay(lr: f64, total_steps: u64) -> Self {
        let mut entries = vec![(0, lr)];
        for (start, r) in [(total_steps / 2, lr * 0.1), (total_steps * 3 / 4, lr * 0.01)] {
            if start > entries.last().map(|e| e.0).unwrap_or(0) {
                entries.push((start, r));
            }
        }
        Self(entries)
    }

    pub fn lr_at(&self, step: u64) -> f64 {
        self.0
            .iter()
            .take_while(|(s, _)| *s <= step)
            .last()
            .map(|(_, lr)| *lr)
            .unwrap_or(0.0)
    }

    pub fn entries(&self) -> &[(u64, f64)] {
        &self.0
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub estimator: Estimator,
    pub loss: LossSpec,
    pub batch_classes: usize,
    pub images_per_class: usize,
    pub memory_capacity: usize,
    pub refresh_ratio: f64,
    pub ui_period: u64,
    pub ui_pool_batch: usize,
    pub lr_schedule: LrSchedule,
    pub total_steps: u64,
    pub seed: u64,
    /// Also take SGD steps on stored prototypes with their loss gradients.
    pub train_prototypes: bool,
    /// Unrecognizable images appended to every batch as one extra class
    /// whose classifier weight is p_UI; 0 disables.
    pub ui_class_images: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            estimator: Estimator::RecogSoft,
            loss: LossSpec::cosface(),
            batch_classes: 16,
            images_per_class: 4,
            memory_capacity: 150,
            refresh_ratio: 0.2,
            ui_period: 100,
            ui_pool_batch: 32,
            lr_schedule: LrSchedule::step_decay(0.1, 2000),
            total_steps: 2000,
            seed: 0,
            train_prototypes: false,
            ui_class_images: 4,
        }
    }
}

impl TrainConfig {
    pub fn batch_size(&self) -> usize {
        self.batch_classes * self.images_per_class
    }

    pub fn validate(&self) -> Result<()> {
        self.loss.validate().map_err(|e| Error::config(format!("loss: {e}")))?;
        if self.batch_classes == 0 {
            return Err(Error::config("train.batch_classes must be positive"));
        }
        if self.images_per_class == 0 {
            return Err(Error::config("train.images_per_class must be positive"));
        }
        if self.memory_capacity < self.batch_classes {
            return Err(Error::config("memory.capacity must be at least train.batch_classes"));
        }
        if !(0.0..=1.0).contains(&self.refresh_ratio) {
            return Err(Error::config("memory.refresh_ratio must lie in [0, 1]"));
        }
        if self.ui_period == 0 {
            return Err(Error::config("memory.ui_period must be positive"));
        }
        if self.ui_pool_batch == 0 {
            return Err(Error::config("memory.ui_pool_batch must be positive"));
        }
        Ok(())
    }
}

/// Indices into the dataset plus their labels, grouped by class.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Batch {
    pub indices: Vec<usize>,
    pub labels: Vec<ClassId>,
}

impl Batch {
    /// Distinct classes in first-appearance order.
    pub fn classes(&self) -> Vec<ClassId> {
        let mut out: Vec<ClassId> = Vec::new();
        for l in &self.labels {
            if !out.contains(l) {
                out.push(*l);
            }
        }
        out
    }
}

/// Iterate-and-shuffle sampler: identities are visited in a shuffled epoch
/// order without replacement, then reshuffled.
#[derive(Debug, Clone)]
pub struct BatchSampler {
    groups: Vec<(ClassId, Vec<usize>)>,
    pending: VecDeque<usize>,
    batch_classes: usize,
    k: usize,
    rng: ChaCha8Rng,
}

impl BatchSampler {
    pub fn new(dataset: &Dataset, batch_classes: usize, k: usize, rng: ChaCha8Rng) -> Result<Self> {
        let mut groups: Vec<(ClassId, Vec<usize>)> = Vec::new();
        for id in dataset.identities() {
            let idx: Vec<usize> = (0..dataset.samples.len())
                .filter(|i| {
                    let s = &dataset.samples[*i];
                    !s.is_unrecognizable && s.identity == id
                })
                .collect();
            if idx.len() >= k {
                groups.push((id, idx));
            }
        }
        if batch_classes == 0 || k == 0 || groups.len() < batch_classes {
            return Err(Error::config(format!(
                "dataset has {} identities with at least {k} images, need {batch_classes}",
                groups.len()
            )));
        }
        Ok(Self { groups, pending: VecDeque::new(), batch_classes, k, rng })
    }

    fn reshuffle(&mut self) {
        let mut order: Vec<usize> = (0..self.groups.len()).collect();
        order.shuffle(&mut self.rng);
        self.pending.extend(order);
    }

    pub fn next_batch(&mut self) -> Batch {
        let mut chosen: Vec<usize> = Vec::with_capacity(self.batch_classes);
        while chosen.len() < self.batch_classes {
            if self.pending.is_empty() {
                self.reshuffle();
            }
            // skip identities already in this batch; they stay queued
            let pos = self.pending.iter().position(|g| !chosen.contains(g));
            match pos {
                Some(p) => chosen.push(self.pending.remove(p).expect("position valid")),
                None => self.reshuffle(),
            }
        }
        let mut indices = Vec::with_capacity(self.batch_classes * self.k);
        let mut labels = Vec::with_capacity(self.batch_classes * self.k);
        for g in chosen {
            let (id, idx) = &self.groups[g];
            let picks = index::sample(&mut self.rng, idx.len(), self.k);
            for p in picks.iter() {
                indices.push(idx[p]);
                labels.push(*id);
            }
        }
        Batch { indices, labels }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub step: u64,
    pub loss: f64,
    pub mean_target_cos: f64,
    pub lr: f64,
    pub memory_size: usize,
    pub ui_refreshed: bool,
}

pub type TrainLog = Vec<StepRecord>;

pub fn write_log<W: Write>(log: &[StepRecord], mut w: W) -> Result<()> {
    for rec in log {
        serde_json::to_writer(&mut w, rec).map_err(|e| Error::format("train log", e.to_string()))?;
        w.write_all(b"\n")?;
    }
    Ok(())
}

/// Loss on a batch of observations against fixed classifier weights, and its
/// gradient with respect to the encoder parameters.
pub fn encoder_loss_and_grad<O: AsRef<[f64]>>(
    encoder: &Encoder,
    observations: &[O],
    labels: &[ClassId],
    weights: &[(ClassId, UnitEmbedding)],
    margins: &[f64],
    spec: &LossSpec,
) -> Result<(LossOutput, EncoderGrad)> {
    let raw = encoder.encode_batch(observations)?;
    let unit = raw.iter().map(l2_normalize).collect::<Result<Vec<_>>>()?;
    let out = loss_and_grad_with_margins(spec, &unit, labels, weights, margins)?;
    let grad = backprop_encoder(encoder, observations, &raw, &unit, &out.grad_embeddings);
    Ok((out, grad))
}

/// Chains unit-embedding gradients through `x / ||x||` and the affine map.
fn backprop_encoder<O: AsRef<[f64]>>(
    encoder: &Encoder,
    observations: &[O],
    raw: &[RawEmbedding],
    unit: &[UnitEmbedding],
    grad_unit: &[Vec<f64>],
) -> EncoderGrad {
    let (d, big_d) = (encoder.dim, encoder.obs_dim);
    let mut gw = vec![0.0; d * big_d];
    let mut gb = vec![0.0; d];
    for i in 0..raw.len() {
        let n = crate::vecmath::feature_norm(&raw[i]);
        let u = unit[i].as_slice();
        let g = &grad_unit[i];
        let radial = dot(g, u);
        let obs = observations[i].as_ref();
        for r in 0..d {
            // (I - u u^T) g / ||x||
            let gx = (g[r] - radial * u[r]) / n;
            if gx == 0.0 {
                continue;
            }
            gb[r] += gx;
            let row = &mut gw[r * big_d..(r + 1) * big_d];
            for (w, o) in row.iter_mut().zip(obs) {
                *w += gx * o;
            }
        }
    }
    EncoderGrad { weights: gw, bias: gb }
}

/// Everything computed in one step, for inspection by tests.
#[derive(Debug, Clone)]
pub struct StepDetail {
    pub record: StepRecord,
    pub batch: Batch,
    /// Classifier weights used by the loss: batch classes first, then
    /// negatives oldest first.
    pub weights: Vec<(ClassId, UnitEmbedding)>,
    pub margins: Vec<f64>,
    /// Pool images appended as the unrecognizable class.
    pub ui_indices: Vec<usize>,
    /// Freshly generated prototype per batch class, before refresh blending.
    pub generated: Vec<PrototypeCandidate>,
}

pub struct Trainer<'a> {
    config: TrainConfig,
    dataset: &'a Dataset,
    encoder: Encoder,
    memory: PrototypeMemory,
    sampler: BatchSampler,
    margin_rng: ChaCha8Rng,
    pool_rng: ChaCha8Rng,
    ui_class_rng: ChaCha8Rng,
    pool: Vec<usize>,
    step: u64,
}

impl<'a> Trainer<'a> {
    pub fn new(config: TrainConfig, dataset: &'a Dataset) -> Result<Self> {
        let mut init = stream_rng(config.seed, STREAM_INIT);
        let encoder = Encoder::random(dataset.header.dim, dataset.header.obs_dim, &mut init);
        Self::with_encoder(config, dataset, encoder)
    }

    pub fn with_encoder(config: TrainConfig, dataset: &'a Dataset, encoder: Encoder) -> Result<Self> {
        config.validate()?;
        if encoder.obs_dim != dataset.header.obs_dim {
            return Err(Error::DimensionMismatch {
                expected: dataset.header.obs_dim,
                actual: encoder.obs_dim,
            });
        }
        let memory = PrototypeMemory::new(
            config.memory_capacity,
            encoder.dim,
            config.refresh_ratio,
            config.ui_period,
        )?;
        let sampler = BatchSampler::new(
            dataset,
            config.batch_classes,
            config.images_per_class,
            stream_rng(config.seed, STREAM_SAMPLER),
        )?;
        let pool = dataset.unrecognizable_indices();
        if config.estimator.needs_ui_prototype() && pool.is_empty() {
            return Err(Error::config(format!(
                "estimator {} needs unrecognizable images in the dataset",
                config.estimator
            )));
        }
        let mut trainer = Self {
            margin_rng: stream_rng(config.seed, STREAM_MARGINS),
            pool_rng: stream_rng(config.seed, STREAM_POOL),
            ui_class_rng: stream_rng(config.seed, STREAM_UI_CLASS),
            config,
            dataset,
            encoder,
            memory,
            sampler,
            pool,
            step: 0,
        };
        trainer.refresh_ui_if_due()?;
        Ok(trainer)
    }

    pub fn config(&self) -> &TrainConfig {
        &self.config
    }

    pub fn encoder(&self) -> &Encoder {
        &self.encoder
    }

    pub fn memory(&self) -> &PrototypeMemory {
        &self.memory
    }

    pub fn step(&self) -> u64 {
        self.step
    }

    pub fn into_parts(self) -> (Encoder, PrototypeMemory) {
        (self.encoder, self.memory)
    }

    fn refresh_ui_if_due(&mut self) -> Result<bool> {
        if self.pool.is_empty() || !self.memory.ui_refresh_due() {
            return Ok(false);
        }
        let n = self.config.ui_pool_batch.min(self.pool.len());
        let picks = index::sample(&mut self.pool_rng, self.pool.len(), n);
        let batch = picks
            .iter()
            .map(|p| self.encoder.embed(&self.dataset.samples[self.pool[p]].observation))
            .collect::<Result<Vec<_>>>()?;
        self.memory.maybe_refresh_ui(&batch)
    }

    pub fn train_step(&mut self) -> Result<StepRecord> {
        self.train_step_detailed().map(|d| d.record)
    }

    pub fn train_step_detailed(&mut self) -> Result<StepDetail> {
        let step = self.step;
        self.step_inner().map_err(|e| match e {
            Error::NonFinite(_) | Error::DegenerateVector { .. } => Error::NumericFailure { step },
            other => other,
        })
    }

    fn step_inner(&mut self) -> Result<StepDetail> {
        let batch = self.sampler.next_batch();
        let ui_indices: Vec<usize> = match self.memory.ui_prototype() {
            Some(_) if self.config.ui_class_images > 0 => {
                let n = self.config.ui_class_images.min(self.pool.len());
                index::sample(&mut self.ui_class_rng, self.pool.len(), n)
                    .iter()
                    .map(|p| self.pool[p])
                    .collect()
            }
            _ => Vec::new(),
        };
        let observations: Vec<&[f64]> = batch
            .indices
            .iter()
            .chain(&ui_indices)
            .map(|i| self.dataset.samples[*i].observation.as_slice())
            .collect();
        let raw_all = self.encoder.encode_batch(&observations)?;
        let unit_all = raw_all.iter().map(l2_normalize).collect::<Result<Vec<_>>>()?;
        let (raw, unit) = (&raw_all[..batch.indices.len()], &unit_all[..batch.indices.len()]);

        let estimator = self.config.estimator;
        let qualities = if estimator == Estimator::Plain {
            Vec::new()
        } else {
            estimate_qualities(estimator, raw, unit, self.memory.ui_prototype())?
        };

        let classes = batch.classes();
        let mut generated = Vec::with_capacity(classes.len());
        for class in &classes {
            let members: Vec<usize> = (0..batch.labels.len()).filter(|j| batch.labels[*j] == *class).collect();
            let embs: Vec<UnitEmbedding> = members.iter().map(|j| unit[*j].clone()).collect();
            let qs: Vec<_> = if qualities.is_empty() {
                Vec::new()
            } else {
                members.iter().map(|j| qualities[*j]).collect()
            };
            let proto = generate_with(estimator, &embs, &qs)?;
            let cand = PrototypeCandidate { class_id: *class, embedding: proto };
            self.memory.enqueue(cand.clone())?;
            generated.push(cand);
        }

        let mut weights: Vec<(ClassId, UnitEmbedding)> = classes
            .iter()
            .zip(self.memory.lookup(&classes))
            .map(|(c, e)| e.map(|e| (*c, e)).ok_or(Error::MissingPrototype(*c)))
            .collect::<Result<_>>()?;
        let mut labels = batch.labels.clone();
        if !ui_indices.is_empty() {
            let p_ui = self.memory.ui_prototype().expect("checked above").clone();
            weights.push((UNRECOGNIZABLE_ID, p_ui));
            labels.extend(std::iter::repeat_n(UNRECOGNIZABLE_ID, ui_indices.len()));
        }
        weights.extend(self.memory.negatives_snapshot(&classes));

        let margins = draw_margins(&self.config.loss, unit_all.len(), &mut self.margin_rng);
        let out = loss_and_grad_with_margins(&self.config.loss, &unit_all, &labels, &weights, &margins)?;
        if !out.loss.is_finite() {
            return Err(Error::NumericFailure { step: self.step });
        }
        let lr = self.config.lr_schedule.lr_at(self.step);
        let grad = backprop_encoder(&self.encoder, &observations, &raw_all, &unit_all, &out.grad_embeddings);
        self.encoder.apply_sgd(&grad, lr);
        if self.encoder.weights.iter().chain(&self.encoder.bias).any(|v| !v.is_finite()) {
            return Err(Error::NumericFailure { step: self.step });
        }
        if self.config.train_prototypes {
            for ((class, _), g) in weights.iter().zip(&out.grad_prototypes) {
                if *class != UNRECOGNIZABLE_ID {
                    self.memory.apply_gradient(*class, g, lr)?;
                }
            }
        }

        let ui_refreshed = self.refresh_ui_if_due()?;
        let record = StepRecord {
            step: self.step,
            loss: out.loss,
            mean_target_cos: out.target_cos.iter().sum::<f64>() / out.target_cos.len() as f64,
            lr,
            memory_size: self.memory.len(),
            ui_refreshed,
        };
        self.step += 1;
        self.memory.advance_step();
        Ok(StepDetail { record, batch, weights, margins, ui_indices, generated })
    }
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub encoder: Encoder,
    pub memory: PrototypeMemory,
    pub log: TrainLog,
}

pub fn run_training(config: &TrainConfig, dataset: &Dataset) -> Result<TrainOutcome> {
    let mut trainer = Trainer::new(config.clone(), dataset)?;
    let mut log = Vec::with_capacity(config.total_steps as usize);
    for _ in 0..config.total_steps {
        log.push(trainer.train_step()?);
    }
    let (encoder, memory) = trainer.into_parts();
    Ok(TrainOutcome { encoder, memory, log })
}
