//! Two-stage minibatch training.
//!
//! Each step draws a batch of focused superpixels uniformly with replacement
//! from all superpixels of all training images, averages the cross-entropy
//! gradient and takes one Adadelta step. Gradients are summed in fixed-size
//! chunks and the chunk sums are added in order, so any engine that
//! evaluates chunks independently produces bit-identical results.

use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::features::ImageFeatures;
use crate::lowfeat::FeatureStack;
use crate::model::Network;
use crate::optim::{Adadelta, AdadeltaParams};

/// Samples per gradient chunk.
pub const CHUNK: usize = 50;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StageSchedule {
    pub iterations: usize,
    pub base_lr: f64,
    /// Factor applied every `decay_every` steps; `decay_every == 0` keeps
    /// the rate constant.
    pub decay: f64,
    pub decay_every: usize,
}

impl StageSchedule {
    pub fn lr_at(&self, step: usize) -> f64 {
        if self.decay_every == 0 {
            return self.base_lr;
        }
        let mut lr = self.base_lr;
        for _ in 0..step / self.decay_every {
            lr *= self.decay;
        }
        lr
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrainSchedule {
    /// Augmented data.
    pub stage1: StageSchedule,
    /// Original images only.
    pub stage2: StageSchedule,
    pub batch: usize,
    pub optimizer: AdadeltaParams,
    /// Zero the Adadelta accumulators before stage 2.
    pub reset_between_stages: bool,
}

impl Default for TrainSchedule {
    fn default() -> Self {
        TrainSchedule {
            stage1: StageSchedule {
                iterations: 50_000,
                base_lr: 0.05,
                decay: 0.1,
                decay_every: 10_000,
            },
            stage2: StageSchedule {
                iterations: 900,
                base_lr: 0.01,
                decay: 1.0,
                decay_every: 0,
            },
            batch: 1000,
            optimizer: AdadeltaParams::default(),
            reset_between_stages: true,
        }
    }
}

/// Training data addressed as `(image, superpixel)`.
pub trait SampleSource: Sync {
    fn images(&self) -> usize;
    fn superpixels(&self, image: usize) -> usize;
    fn stack(&self, image: usize, p: usize) -> Result<FeatureStack>;
    fn target(&self, image: usize, p: usize) -> Result<f64>;

    fn total_superpixels(&self) -> usize {
        (0..self.images()).map(|i| self.superpixels(i)).sum()
    }
}

impl SampleSource for [ImageFeatures] {
    fn images(&self) -> usize {
        self.len()
    }

    fn superpixels(&self, image: usize) -> usize {
        self[image].superpixels()
    }

    fn stack(&self, image: usize, p: usize) -> Result<FeatureStack> {
        self[image].stack(p)
    }

    fn target(&self, image: usize, p: usize) -> Result<f64> {
        self[image].target(p)
    }
}

impl SampleSource for Vec<ImageFeatures> {
    fn images(&self) -> usize {
        self.len()
    }

    fn superpixels(&self, image: usize) -> usize {
        self[image].superpixels()
    }

    fn stack(&self, image: usize, p: usize) -> Result<FeatureStack> {
        self[image].stack(p)
    }

    fn target(&self, image: usize, p: usize) -> Result<f64> {
        self[image].target(p)
    }
}

/// Sum of gradients and losses over `picks`.
pub fn chunk_gradient(
    net: &Network,
    source: &(impl SampleSource + ?Sized),
    picks: &[(usize, usize)],
) -> Result<(Network, f64)> {
    let mut grads = net.zeros_like();
    let stacks = picks
        .iter()
        .map(|&(image, p)| source.stack(image, p))
        .collect::<Result<Vec<_>>>()?;
    let targets = picks
        .iter()
        .map(|&(image, p)| source.target(image, p))
        .collect::<Result<Vec<_>>>()?;
    let refs: Vec<&FeatureStack> = stacks.iter().collect();
    let out = net.backward_batch(&refs, &targets, &mut grads)?;
    Ok((grads, out.iter().map(|r| r.1).sum()))
}

/// Evaluates gradient chunks; implementations may run them concurrently but
/// must return results in chunk order.
pub trait GradientEngine {
    fn chunk_gradients<S: SampleSource + ?Sized>(
        &self,
        net: &Network,
        source: &S,
        chunks: &[&[(usize, usize)]],
    ) -> Result<Vec<(Network, f64)>>;
}

#[derive(Debug, Clone, Copy, Default)]
pub struct SerialEngine;

impl GradientEngine for SerialEngine {
    fn chunk_gradients<S: SampleSource + ?Sized>(
        &self,
        net: &Network,
        source: &S,
        chunks: &[&[(usize, usize)]],
    ) -> Result<Vec<(Network, f64)>> {
        chunks.iter().map(|c| chunk_gradient(net, source, c)).collect()
    }
}

/// Mean gradient and mean loss over a batch.
pub fn batch_gradient<S: SampleSource + ?Sized>(
    net: &Network,
    source: &S,
    picks: &[(usize, usize)],
    engine: &impl GradientEngine,
) -> Result<(Network, f64)> {
    let chunks: Vec<&[(usize, usize)]> = picks.chunks(CHUNK).collect();
    let parts = engine.chunk_gradients(net, source, &chunks)?;
    let mut iter = parts.into_iter();
    let (mut grads, mut loss) = iter.next().unwrap_or_else(|| (net.zeros_like(), 0.0));
    for (g, l) in iter {
        grads.add_scaled(&g, 1.0);
        loss += l;
    }
    let scale = 1.0 / picks.len().max(1) as f64;
    for t in grads.tensors_mut() {
        for v in t {
            *v *= scale;
        }
    }
    Ok((grads, loss * scale))
}

/// Uniform draws over all superpixels of all images.
pub struct BatchSampler {
    /// Cumulative superpixel counts; `offsets[i]` is the first global index
    /// of image `i`.
    offsets: Vec<usize>,
    total: usize,
}

impl BatchSampler {
    pub fn new<S: SampleSource + ?Sized>(source: &S) -> Result<Self> {
        let mut offsets = Vec::with_capacity(source.images());
        let mut total = 0;
        for i in 0..source.images() {
            offsets.push(total);
            total += source.superpixels(i);
        }
        if total == 0 {
            return Err(Error::EmptyTrainSet);
        }
        Ok(BatchSampler { offsets, total })
    }

    pub fn total(&self) -> usize {
        self.total
    }

    pub fn locate(&self, global: usize) -> (usize, usize) {
        let image = self.offsets.partition_point(|&o| o <= global) - 1;
        (image, global - self.offsets[image])
    }

    pub fn draw(&self, rng: &mut impl Rng, n: usize) -> Vec<(usize, usize)> {
        (0..n).map(|_| self.locate(rng.gen_range(0..self.total))).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LogRecord {
    pub stage: u8,
    pub step: usize,
    pub lr: f64,
    pub loss: f64,
}

/// Runs stage 1 on `augmented` and stage 2 on `originals`. The callback sees
/// every step's record as it is produced.
pub fn train<A, O>(
    mut net: Network,
    augmented: &A,
    originals: &O,
    schedule: &TrainSchedule,
    seed: u64,
    engine: &impl GradientEngine,
    mut on_step: impl FnMut(&LogRecord),
) -> Result<(Network, Vec<LogRecord>)>
where
    A: SampleSource + ?Sized,
    O: SampleSource + ?Sized,
{
    if schedule.batch == 0 && (schedule.stage1.iterations > 0 || schedule.stage2.iterations > 0) {
        return Err(Error::InvalidParameter("batch size must be positive".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut opt = Adadelta::new(&net, schedule.optimizer);
    let mut log = Vec::with_capacity(schedule.stage1.iterations + schedule.stage2.iterations);
    let mut run_stage = |stage: u8,
                         source: &dyn Fn(&Network, &[(usize, usize)]) -> Result<(Network, f64)>,
                         sampler: &BatchSampler,
                         sched: &StageSchedule,
                         net: &mut Network,
                         opt: &mut Adadelta,
                         rng: &mut ChaCha8Rng|
     -> Result<()> {
        for step in 0..sched.iterations {
            let picks = sampler.draw(rng, schedule.batch);
            let (grads, loss) = source(net, &picks)?;
            let lr = sched.lr_at(step);
            opt.step(net, &grads, lr);
            let rec = LogRecord { stage, step, lr, loss };
            on_step(&rec);
            log.push(rec);
        }
        Ok(())
    };
    if schedule.stage1.iterations > 0 {
        let sampler = BatchSampler::new(augmented)?;
        let grad = |n: &Network, picks: &[(usize, usize)]| batch_gradient(n, augmented, picks, engine);
        run_stage(1, &grad, &sampler, &schedule.stage1, &mut net, &mut opt, &mut rng)?;
    }
    if schedule.stage2.iterations > 0 {
        if schedule.reset_between_stages {
            opt.reset();
        }
        let sampler = BatchSampler::new(originals)?;
        let grad = |n: &Network, picks: &[(usize, usize)]| batch_gradient(n, originals, picks, engine);
        run_stage(2, &grad, &sampler, &schedule.stage2, &mut net, &mut opt, &mut rng)?;
    }
    Ok((net, log))
}

/// Mean loss over every superpixel of `source`.
pub fn mean_loss<S: SampleSource + ?Sized>(net: &Network, source: &S) -> Result<f64> {
    let mut total = 0.0;
    let mut n = 0usize;
    for i in 0..source.images() {
        for p in 0..source.superpixels(i) {
            let prob = net.forward(&source.stack(i, p)?)?;
            total += crate::model::loss(prob, source.target(i, p)?);
            n += 1;
        }
    }
    if n == 0 {
        return Err(Error::EmptyTrainSet);
    }
    Ok(total / n as f64)
}
