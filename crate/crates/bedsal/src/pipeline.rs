//! Pipeline stages over a dataset index: loading, cached feature
//! extraction, training, prediction and evaluation.

use std::path::Path;

use bedsal_core::augment::{self, AugmentSpec};
use bedsal_core::bed::{bed_descriptors, BedDescriptor};
use bedsal_core::depth::{resize_bilinear, valid_range, DepthRange, NormalizeOptions};
use bedsal_core::evalkit::{report, EvalOptions, EvalReport};
use bedsal_core::features::{self, extract_with_descriptors, prepare_sample, ImageFeatures};
use bedsal_core::lowfeat::FeatureStack;
use bedsal_core::model::Network;
use bedsal_core::slic::{compute_stats, segment, SuperpixelPartition};
use bedsal_core::train::{self, LogRecord, SampleSource};
use bedsal_core::{DepthImage, GroundTruth, RgbImage, SaliencyMap};
use rayon::prelude::*;

use crate::cache::{file_digest, Cache, KeyHasher};
use crate::checkpoint;
use crate::config::{Config, RangeMode};
use crate::dataset::{scan_dataset, DatasetIndex, SampleEntry, Split};
use crate::error::{Error, Result};
use crate::imageio::{load_gt, load_raw_depth, load_rgb};
use crate::parallel::RayonEngine;
use crate::report::train_log_csv;
use crate::tensor::{read_tensor, write_tensor, Tensor};

/// Shared state of one command invocation.
pub struct Env {
    pub cfg: Config,
    pub cache: Cache,
    pub pool: rayon::ThreadPool,
}

impl Env {
    pub fn new(cfg: Config, cache: Cache, jobs: usize) -> Result<Env> {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(jobs.max(1))
            .build()
            .map_err(|e| Error::Invalid(format!("thread pool: {e}")))?;
        Ok(Env { cfg, cache, pool })
    }

    pub fn index(&self) -> Result<DatasetIndex> {
        let root = self
            .cfg
            .dataset_root
            .as_ref()
            .ok_or_else(|| Error::Config("dataset.root is not set".into()))?;
        scan_dataset(root, &self.cfg.split)
    }

    /// Depth range shared by every image when `depth.range=per_dataset`.
    pub fn depth_range(&self, index: &DatasetIndex) -> Result<Option<(u32, u32)>> {
        if self.cfg.depth_range == RangeMode::PerImage {
            return Ok(None);
        }
        let ranges: Vec<Option<(u32, u32)>> = self.pool.install(|| {
            index
                .samples
                .par_iter()
                .map(|s| Ok(valid_range(&load_raw_depth(&s.depth)?)))
                .collect::<Result<_>>()
        })?;
        Ok(ranges.into_iter().flatten().reduce(|a, b| (a.0.min(b.0), a.1.max(b.1))))
    }

    pub fn load_split(&self, index: &DatasetIndex, split: Split, range: Option<(u32, u32)>) -> Result<Vec<Sample>> {
        let entries: Vec<&SampleEntry> = index.split(split).collect();
        self.pool
            .install(|| entries.par_iter().map(|e| Sample::load(e, &self.cfg, range)).collect())
    }

    pub fn load_all(&self, index: &DatasetIndex, range: Option<(u32, u32)>) -> Result<Vec<Sample>> {
        self.pool.install(|| {
            index
                .samples
                .par_iter()
                .map(|e| Sample::load(e, &self.cfg, range))
                .collect()
        })
    }
}

/// One dataset sample, normalized and resized, plus its full-size ground
/// truth for scoring.
pub struct Sample {
    pub id: String,
    pub rgb: RgbImage,
    pub depth: DepthImage,
    pub gt: GroundTruth,
    pub gt_full: GroundTruth,
    /// Digest of the three input files and the depth range used.
    pub digest: String,
}

impl Sample {
    pub fn load(entry: &SampleEntry, cfg: &Config, range: Option<(u32, u32)>) -> Result<Sample> {
        let rgb = load_rgb(&entry.rgb)?;
        let raw = load_raw_depth(&entry.depth)?;
        let gt_full = load_gt(&entry.gt)?;
        let opts = NormalizeOptions {
            range: match range {
                Some((min, max)) => DepthRange::Fixed { min, max },
                None => DepthRange::PerImage,
            },
            ..cfg.normalize
        };
        let (rgb, depth, gt) = prepare_sample(&rgb, &raw, &gt_full, &opts, cfg.side)
            .map_err(|e| Error::Invalid(format!("sample {}: {e}", entry.id)))?;
        let digest = KeyHasher::new("sample")
            .field("rgb", file_digest(&entry.rgb)?)
            .field("depth", file_digest(&entry.depth)?)
            .field("gt", file_digest(&entry.gt)?)
            .field("range", format!("{range:?}"))
            .finish();
        Ok(Sample {
            id: entry.id.clone(),
            rgb,
            depth,
            gt,
            gt_full,
            digest,
        })
    }

    /// The sample under an augmentation spec.
    pub fn view(&self, spec: AugmentSpec) -> Result<(RgbImage, DepthImage, GroundTruth)> {
        if spec == AugmentSpec::IDENTITY {
            return Ok((self.rgb.clone(), self.depth.clone(), self.gt.clone()));
        }
        Ok(augment::apply(spec, &self.rgb, &self.depth, &self.gt)?)
    }
}

const SEGMENT_KEYS: &[&str] = &["depth", "image", "slic"];
const BED_KEYS: &[&str] = &["bed.q", "bed.n_dir", "bed.n_t", "bed.ray_step", "bed.integration", "bed.normalize"];

fn segment_key(cfg: &Config, sample: &Sample, spec: AugmentSpec) -> String {
    KeyHasher::new("segment")
        .field("sample", &sample.digest)
        .field("augment", spec.suffix())
        .field("config", cfg.section_text(SEGMENT_KEYS))
        .finish()
}

fn labels_tensor(part: &SuperpixelPartition) -> Tensor {
    let data = part.labels().iter().map(|&l| l as f64).collect();
    Tensor::f64(vec![part.height() as u32, part.width() as u32], data)
}

fn partition_from(t: &Tensor) -> Result<SuperpixelPartition> {
    let [h, w] = t.dims_usize()[..] else {
        return Err(Error::Invalid("label tensor must be 2-D".into()));
    };
    let labels = t.to_f64().iter().map(|&v| v as u32).collect();
    Ok(SuperpixelPartition::new(w, h, labels)?)
}

fn descriptors_tensor(d: &[BedDescriptor], q: usize) -> Tensor {
    let data = d.iter().flat_map(|x| x.components().collect::<Vec<_>>()).collect();
    Tensor::f64(vec![d.len() as u32, 2 * q as u32], data)
}

fn descriptors_from(t: &Tensor) -> Result<Vec<BedDescriptor>> {
    let [k, w] = t.dims_usize()[..] else {
        return Err(Error::Invalid("BED tensor must be 2-D".into()));
    };
    let q = w / 2;
    let v = t.to_f64();
    Ok((0..k)
        .map(|p| BedDescriptor {
            ff: v[p * w..p * w + q].to_vec(),
            gg: v[p * w + q..(p + 1) * w].to_vec(),
        })
        .collect())
}

/// Segmentation, reusing the cache when possible.
pub fn partition(env: &Env, sample: &Sample, spec: AugmentSpec, rgb: &RgbImage) -> Result<(SuperpixelPartition, String)> {
    let key = segment_key(&env.cfg, sample, spec);
    if let Some(dir) = env.cache.lookup("segment", &key) {
        if let Ok(part) = read_tensor(&dir.join("labels.bstn")).and_then(|t| partition_from(&t)) {
            return Ok((part, key));
        }
        log::warn!("ignoring unreadable cache entry {}", dir.display());
    }
    let part = segment(rgb, &env.cfg.features.slic)?;
    let t = labels_tensor(&part);
    env.cache.store("segment", &key, |d| write_tensor(&d.join("labels.bstn"), &t))?;
    Ok((part, key))
}

/// BED descriptors for a partition, reusing the cache when possible.
pub fn descriptors(
    env: &Env,
    seg_key: &str,
    part: &SuperpixelPartition,
    rgb: &RgbImage,
    depth: &DepthImage,
) -> Result<Vec<BedDescriptor>> {
    let key = KeyHasher::new("bed")
        .field("segment", seg_key)
        .field("config", env.cfg.section_text(BED_KEYS))
        .finish();
    if let Some(dir) = env.cache.lookup("bed", &key) {
        if let Ok(d) = read_tensor(&dir.join("bed.bstn")).and_then(|t| descriptors_from(&t)) {
            if d.len() == part.count() {
                return Ok(d);
            }
        }
        log::warn!("ignoring unusable cache entry {}", dir.display());
    }
    let stats = compute_stats(part, depth, rgb)?;
    let params = env.cfg.features.bed.with_sigma_of(&stats);
    let d = bed_descriptors(&stats, part, &params)?;
    let t = descriptors_tensor(&d, params.q);
    env.cache.store("bed", &key, |dir| write_tensor(&dir.join("bed.bstn"), &t))?;
    Ok(d)
}

/// Everything a stack or a prediction needs for one (sample, spec).
pub struct Extracted {
    pub part: SuperpixelPartition,
    pub feats: ImageFeatures,
}

pub fn extract(env: &Env, sample: &Sample, spec: AugmentSpec) -> Result<Extracted> {
    let (rgb, depth, gt) = sample.view(spec)?;
    let (part, seg_key) = partition(env, sample, spec, &rgb)?;
    let params = env.cfg.features;
    let desc = if params.use_bed {
        Some(descriptors(env, &seg_key, &part, &rgb, &depth)?)
    } else {
        None
    };
    let feats = extract_with_descriptors(&part, &rgb, &depth, Some(&gt), &params, desc)?;
    Ok(Extracted { part, feats })
}

/// Features of every (sample, spec) pair, sample-major.
pub fn extract_many(env: &Env, samples: &[Sample], specs: &[AugmentSpec]) -> Result<Vec<Extracted>> {
    let jobs: Vec<(usize, AugmentSpec)> = (0..samples.len())
        .flat_map(|i| specs.iter().map(move |&s| (i, s)))
        .collect();
    env.pool
        .install(|| jobs.par_iter().map(|&(i, s)| extract(env, &samples[i], s)).collect())
}

/// A subset of images presented as a sample source.
pub struct Selection<'a> {
    pub feats: &'a [ImageFeatures],
    pub pick: Vec<usize>,
}

impl SampleSource for Selection<'_> {
    fn images(&self) -> usize {
        self.pick.len()
    }

    fn superpixels(&self, image: usize) -> usize {
        self.feats[self.pick[image]].superpixels()
    }

    fn stack(&self, image: usize, p: usize) -> bedsal_core::Result<FeatureStack> {
        self.feats[self.pick[image]].stack(p)
    }

    fn target(&self, image: usize, p: usize) -> bedsal_core::Result<f64> {
        self.feats[self.pick[image]].target(p)
    }
}

const MODEL_KEYS: &[&str] = &[
    "depth", "image", "slic", "bed", "lowfeat", "features", "model", "train", "adadelta", "seed",
];

/// Cache key of the model trained on `samples` under the current config.
pub fn model_key(cfg: &Config, samples: &[Sample]) -> String {
    let mut h = KeyHasher::new("model").field("config", cfg.section_text(MODEL_KEYS));
    for s in samples {
        h = h.field("sample", &s.digest);
    }
    h.finish()
}

pub fn augment_specs(cfg: &Config) -> Vec<AugmentSpec> {
    if cfg.augment {
        AugmentSpec::all()
    } else {
        vec![AugmentSpec::IDENTITY]
    }
}

/// Trains on `samples`: stage 1 over all augmentation specs, stage 2 over
/// the originals.
pub fn train_on(env: &Env, samples: &[Sample]) -> Result<(Network, Vec<LogRecord>)> {
    if samples.is_empty() {
        return Err(Error::Invalid("the training split is empty".into()));
    }
    let specs = augment_specs(&env.cfg);
    log::info!("extracting features for {} training views", samples.len() * specs.len());
    let extracted = extract_many(env, samples, &specs)?;
    let feats: Vec<ImageFeatures> = extracted.into_iter().map(|e| e.feats).collect();
    let all = Selection {
        feats: &feats,
        pick: (0..feats.len()).collect(),
    };
    let originals = Selection {
        feats: &feats,
        pick: (0..samples.len()).map(|i| i * specs.len()).collect(),
    };
    let net = Network::new(env.cfg.architecture(), env.cfg.seed)?;
    let sched = env.cfg.schedule;
    let total = sched.stage1.iterations + sched.stage2.iterations;
    let every = (total / 20).max(1);
    log::info!(
        "training {} parameters on {} superpixels ({} steps)",
        net.parameter_count(),
        all.total_superpixels(),
        total
    );
    let engine = RayonEngine::new(&env.pool);
    let mut done = 0;
    let (net, log) = train::train(net, &all, &originals, &sched, env.cfg.seed, &engine, |r| {
        done += 1;
        if done % every == 0 || done == total {
            log::info!("stage {} step {} lr {} loss {:.5}", r.stage, r.step, r.lr, r.loss);
        }
    })?;
    Ok((net, log))
}

/// The model for `samples` and its training log as CSV, from the cache or
/// freshly trained and then cached.
pub fn obtain_model(env: &Env, samples: &[Sample]) -> Result<(Network, String)> {
    let key = model_key(&env.cfg, samples);
    if let Some(dir) = env.cache.lookup("model", &key) {
        let log = std::fs::read_to_string(dir.join("train_log.csv"));
        if let (Ok(net), Ok(log)) = (checkpoint::load(&dir), log) {
            log::info!("reusing cached model {}", &key[..12]);
            return Ok((net, log));
        }
        log::warn!("ignoring unreadable cache entry {}", dir.display());
    }
    let (net, records) = train_on(env, samples)?;
    let log = train_log_csv(&records);
    let hyper = env.cfg.section_text(MODEL_KEYS);
    env.cache.store("model", &key, |d| {
        checkpoint::save(&net, d, &hyper)?;
        std::fs::write(d.join("train_log.csv"), &log).map_err(|e| Error::io(d.join("train_log.csv"), e))
    })?;
    Ok((net, log))
}

/// Saliency map of a sample at its original resolution.
pub fn predict_sample(env: &Env, net: &Network, sample: &Sample) -> Result<SaliencyMap> {
    let ex = extract(env, sample, AugmentSpec::IDENTITY)?;
    let map = features::predict(net, &ex.feats, &ex.part)?;
    let (w, h) = sample.gt_full.dims();
    let mut full = resize_bilinear(&map, w, h);
    for v in full.data_mut() {
        *v = v.clamp(0.0, 1.0);
    }
    Ok(full)
}

pub fn predict_all(env: &Env, net: &Network, samples: &[Sample]) -> Result<Vec<SaliencyMap>> {
    env.pool
        .install(|| samples.par_iter().map(|s| predict_sample(env, net, s)).collect())
}

pub fn evaluate(methods: &[(String, Vec<SaliencyMap>)], gts: &[GroundTruth], opts: &EvalOptions) -> Result<EvalReport> {
    Ok(report(methods, gts, opts)?)
}

/// Name of the dataset directory, for report headers.
pub fn dataset_name(root: &Path) -> String {
    root.canonicalize()
        .ok()
        .and_then(|p| p.file_name().map(|n| n.to_string_lossy().into_owned()))
        .unwrap_or_else(|| root.display().to_string())
}
