//! Flat `key = value` configuration.
//!
//! One setting per line, `#` starts a comment. Every key has a default,
//! unknown keys and duplicate keys are errors, and numbers are range
//! checked. [`Config::canonical`] renders every key in a fixed order and is
//! what run and cache hashes are computed from.

use std::collections::HashSet;
use std::fs;
use std::path::{Path, PathBuf};

use bedsal_core::bed::Integration;
use bedsal_core::depth::{InvalidFill, NormalizeOptions, DEFAULT_SIDE};
use bedsal_core::evalkit::{Averaging, EvalOptions, FMode};
use bedsal_core::features::{FeatureParams, FocusedMode};
use bedsal_core::lowfeat::HistogramMode;
use bedsal_core::model::Architecture;
use bedsal_core::slic::MIN_SIDE;
use bedsal_core::train::TrainSchedule;

use crate::dataset::{Split, SplitSpec};
use crate::error::{Error, IoContext, Result};

/// Where the depth min/max used for normalization comes from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum RangeMode {
    #[default]
    PerImage,
    /// One min/max over every depth map in the dataset index.
    PerDataset,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Config {
    pub dataset_root: Option<PathBuf>,
    pub normalize: NormalizeOptions,
    pub depth_range: RangeMode,
    pub side: usize,
    pub split: SplitSpec,
    pub features: FeatureParams,
    pub conv_widths: [usize; 3],
    pub hidden: usize,
    pub schedule: TrainSchedule,
    /// Stage 1 trains on the 32× augmented set; otherwise on the originals.
    pub augment: bool,
    /// Seeds weight initialization and batch sampling.
    pub seed: u64,
    pub eval: EvalOptions,
    pub eval_split: Split,
}

impl Default for Config {
    fn default() -> Self {
        Config {
            dataset_root: None,
            normalize: NormalizeOptions::default(),
            depth_range: RangeMode::default(),
            side: DEFAULT_SIDE,
            split: SplitSpec::default(),
            features: FeatureParams::default(),
            conv_widths: [16, 16, 8],
            hidden: 100,
            schedule: TrainSchedule::default(),
            augment: true,
            seed: 0,
            eval: EvalOptions::default(),
            eval_split: Split::Test,
        }
    }
}

/// Every key, in canonical order, with a one-line description.
pub const KEYS: &[(&str, &str)] = &[
    ("dataset.root", "dataset directory holding rgb/, depth/ and gt/ (relative to the config file)"),
    ("depth.assume_8bit", "pass depth through unchanged when every value is at most 255"),
    ("depth.invalid", "fill for missing depth: far (255) or nearest (nearest valid pixel)"),
    ("depth.range", "normalization range: per_image or per_dataset"),
    ("image.side", "side length samples are resized to"),
    ("split.train", "training images"),
    ("split.val", "validation images"),
    ("split.test", "test images"),
    ("split.seed", "seed of the split shuffle"),
    ("slic.k", "target number of superpixels"),
    ("slic.compactness", "SLIC compactness m"),
    ("slic.iterations", "SLIC assignment/update rounds"),
    ("bed.enabled", "include the six BED channels"),
    ("bed.q", "depth slices per BED distribution"),
    ("bed.n_dir", "angular samples per superpixel"),
    ("bed.n_t", "threshold samples per slice (midpoint integration)"),
    ("bed.ray_step", "ray marching step in pixels, or exact for cell-by-cell traversal"),
    ("bed.integration", "slice integral: exact or midpoint"),
    ("bed.normalize", "divide slice integrals by the slice width"),
    ("lowfeat.histogram", "fourth depth layer: histogram (chi-square) or mean_depth"),
    ("lowfeat.focused", "focused-superpixel layer: constant or rasterized"),
    ("features.color", "append the seven colour channels"),
    ("model.conv1", "channels of the first convolution"),
    ("model.conv2", "channels of the second convolution"),
    ("model.conv3", "channels of the third convolution"),
    ("model.hidden", "units of the hidden fusion layer"),
    ("train.augment", "run stage 1 on the 32x augmented training set"),
    ("train.batch", "superpixels per step"),
    ("train.stage1.iterations", "stage 1 steps"),
    ("train.stage1.lr", "stage 1 base learning rate"),
    ("train.stage1.decay", "stage 1 learning-rate factor"),
    ("train.stage1.decay_every", "stage 1 steps between decays (0 = constant)"),
    ("train.stage2.iterations", "stage 2 steps on the original images"),
    ("train.stage2.lr", "stage 2 learning rate (constant)"),
    ("train.reset_between_stages", "zero the Adadelta accumulators before stage 2"),
    ("adadelta.rho", "Adadelta decay constant"),
    ("adadelta.eps", "Adadelta epsilon"),
    ("adadelta.depth_mult", "learning-rate multiplier of the depth branch"),
    ("adadelta.fusion_mult", "learning-rate multiplier of the fusion layers"),
    ("seed", "seed for weight initialization and batch sampling"),
    ("eval.beta2", "F-measure beta squared"),
    ("eval.mode", "F-measure thresholding: best_threshold or adaptive"),
    ("eval.averaging", "per_image or pooled precision/recall"),
    ("eval.split", "split that predict and eval work on"),
];

fn bad(key: &str, value: &str, expected: &str) -> Error {
    Error::Config(format!("{key}={value}: expected {expected}"))
}

fn parse_bool(key: &str, v: &str) -> Result<bool> {
    match v {
        "true" => Ok(true),
        "false" => Ok(false),
        _ => Err(bad(key, v, "true or false")),
    }
}

fn parse_usize(key: &str, v: &str, lo: usize, hi: usize) -> Result<usize> {
    match v.parse::<usize>() {
        Ok(n) if (lo..=hi).contains(&n) => Ok(n),
        _ => Err(bad(key, v, &format!("an integer in [{lo}, {hi}]"))),
    }
}

fn parse_u64(key: &str, v: &str) -> Result<u64> {
    v.parse().map_err(|_| bad(key, v, "a non-negative integer"))
}

/// A finite float in `(lo, hi]`.
fn parse_f64(key: &str, v: &str, lo: f64, hi: f64) -> Result<f64> {
    match v.parse::<f64>() {
        Ok(x) if x.is_finite() && x > lo && x <= hi => Ok(x),
        _ => Err(bad(key, v, &format!("a number in ({lo}, {hi}]"))),
    }
}

fn parse_choice<T: Copy>(key: &str, v: &str, options: &[(&str, T)]) -> Result<T> {
    options.iter().find(|(name, _)| *name == v).map(|(_, t)| *t).ok_or_else(|| {
        let names: Vec<&str> = options.iter().map(|(n, _)| *n).collect();
        bad(key, v, &format!("one of {}", names.join(", ")))
    })
}

fn name_of<T: PartialEq + Copy>(t: T, options: &[(&'static str, T)]) -> &'static str {
    options.iter().find(|(_, x)| *x == t).map(|(n, _)| *n).expect("every variant is named")
}

const INVALID: &[(&str, InvalidFill)] = &[("far", InvalidFill::Far), ("nearest", InvalidFill::NearestValid)];
const RANGE: &[(&str, RangeMode)] = &[("per_image", RangeMode::PerImage), ("per_dataset", RangeMode::PerDataset)];
const INTEGRATION: &[(&str, Integration)] = &[("exact", Integration::Exact), ("midpoint", Integration::Midpoint)];
const HISTOGRAM: &[(&str, HistogramMode)] = &[
    ("histogram", HistogramMode::Histogram),
    ("mean_depth", HistogramMode::MeanDepth),
];
const FOCUSED: &[(&str, FocusedMode)] = &[("constant", FocusedMode::Constant), ("rasterized", FocusedMode::Rasterized)];
const FMODE: &[(&str, FMode)] = &[("best_threshold", FMode::BestThreshold), ("adaptive", FMode::Adaptive)];
const AVERAGING: &[(&str, Averaging)] = &[("per_image", Averaging::PerImage), ("pooled", Averaging::Pooled)];
const SPLITS: &[(&str, Split)] = &[("train", Split::Train), ("val", Split::Val), ("test", Split::Test)];

const MAX_ITERS: usize = 100_000_000;

impl Config {
    /// Sets one key from its text form. Relative `dataset.root` values are
    /// resolved against `base`.
    pub fn set(&mut self, key: &str, value: &str, base: &Path) -> Result<()> {
        let v = value.trim();
        let f = &mut self.features;
        let s = &mut self.schedule;
        match key {
            "dataset.root" => {
                self.dataset_root = if v.is_empty() { None } else { Some(base.join(v)) };
            }
            "depth.assume_8bit" => self.normalize.assume_8bit = parse_bool(key, v)?,
            "depth.invalid" => self.normalize.invalid_fill = parse_choice(key, v, INVALID)?,
            "depth.range" => self.depth_range = parse_choice(key, v, RANGE)?,
            "image.side" => self.side = parse_usize(key, v, MIN_SIDE, 8192)?,
            "split.train" => self.split.train = parse_usize(key, v, 0, usize::MAX)?,
            "split.val" => self.split.val = parse_usize(key, v, 0, usize::MAX)?,
            "split.test" => self.split.test = parse_usize(key, v, 0, usize::MAX)?,
            "split.seed" => self.split.seed = parse_u64(key, v)?,
            "slic.k" => f.slic.k_target = parse_usize(key, v, 1, 1_000_000)?,
            "slic.compactness" => f.slic.compactness = parse_f64(key, v, 0.0, 1e4)?,
            "slic.iterations" => f.slic.iterations = parse_usize(key, v, 1, 1000)?,
            "bed.enabled" => f.use_bed = parse_bool(key, v)?,
            "bed.q" => f.bed.q = parse_usize(key, v, 1, 64)?,
            "bed.n_dir" => f.bed.n_dir = parse_usize(key, v, 4, 36_000)?,
            "bed.n_t" => f.bed.n_t = parse_usize(key, v, 1, 10_000)?,
            "bed.ray_step" => {
                f.bed.ray_step = if v == "exact" {
                    None
                } else {
                    Some(parse_f64(key, v, 0.0, 64.0).map_err(|_| bad(key, v, "exact or a step in (0, 64]"))?)
                }
            }
            "bed.integration" => f.bed.integration = parse_choice(key, v, INTEGRATION)?,
            "bed.normalize" => f.bed.normalize = parse_bool(key, v)?,
            "lowfeat.histogram" => f.histogram = parse_choice(key, v, HISTOGRAM)?,
            "lowfeat.focused" => f.focused = parse_choice(key, v, FOCUSED)?,
            "features.color" => f.color = parse_bool(key, v)?,
            "model.conv1" => self.conv_widths[0] = parse_usize(key, v, 1, 1024)?,
            "model.conv2" => self.conv_widths[1] = parse_usize(key, v, 1, 1024)?,
            "model.conv3" => self.conv_widths[2] = parse_usize(key, v, 1, 1024)?,
            "model.hidden" => self.hidden = parse_usize(key, v, 1, 65_536)?,
            "train.augment" => self.augment = parse_bool(key, v)?,
            "train.batch" => s.batch = parse_usize(key, v, 1, 10_000_000)?,
            "train.stage1.iterations" => s.stage1.iterations = parse_usize(key, v, 0, MAX_ITERS)?,
            "train.stage1.lr" => s.stage1.base_lr = parse_f64(key, v, 0.0, 1e6)?,
            "train.stage1.decay" => s.stage1.decay = parse_f64(key, v, 0.0, 1.0)?,
            "train.stage1.decay_every" => s.stage1.decay_every = parse_usize(key, v, 0, MAX_ITERS)?,
            "train.stage2.iterations" => s.stage2.iterations = parse_usize(key, v, 0, MAX_ITERS)?,
            "train.stage2.lr" => s.stage2.base_lr = parse_f64(key, v, 0.0, 1e6)?,
            "train.reset_between_stages" => s.reset_between_stages = parse_bool(key, v)?,
            "adadelta.rho" => {
                let rho = parse_f64(key, v, 0.0, 1.0)?;
                if rho >= 1.0 {
                    return Err(bad(key, v, "a number in (0, 1)"));
                }
                s.optimizer.rho = rho;
            }
            "adadelta.eps" => s.optimizer.eps = parse_f64(key, v, 0.0, 1.0)?,
            "adadelta.depth_mult" => s.optimizer.depth_mult = parse_f64(key, v, 0.0, 1e6)?,
            "adadelta.fusion_mult" => s.optimizer.fusion_mult = parse_f64(key, v, 0.0, 1e6)?,
            "seed" => self.seed = parse_u64(key, v)?,
            "eval.beta2" => self.eval.beta2 = parse_f64(key, v, 0.0, 4.0)?,
            "eval.mode" => self.eval.mode = parse_choice(key, v, FMODE)?,
            "eval.averaging" => self.eval.averaging = parse_choice(key, v, AVERAGING)?,
            "eval.split" => self.eval_split = parse_choice(key, v, SPLITS)?,
            _ => return Err(Error::Config(format!("unknown key {key:?}"))),
        }
        Ok(())
    }

    /// Current value of `key` in the syntax [`Config::set`] accepts.
    pub fn get(&self, key: &str) -> Option<String> {
        let f = &self.features;
        let s = &self.schedule;
        let v = match key {
            "dataset.root" => self.dataset_root.as_ref().map(|p| p.display().to_string()).unwrap_or_default(),
            "depth.assume_8bit" => self.normalize.assume_8bit.to_string(),
            "depth.invalid" => name_of(self.normalize.invalid_fill, INVALID).into(),
            "depth.range" => name_of(self.depth_range, RANGE).into(),
            "image.side" => self.side.to_string(),
            "split.train" => self.split.train.to_string(),
            "split.val" => self.split.val.to_string(),
            "split.test" => self.split.test.to_string(),
            "split.seed" => self.split.seed.to_string(),
            "slic.k" => f.slic.k_target.to_string(),
            "slic.compactness" => f.slic.compactness.to_string(),
            "slic.iterations" => f.slic.iterations.to_string(),
            "bed.enabled" => f.use_bed.to_string(),
            "bed.q" => f.bed.q.to_string(),
            "bed.n_dir" => f.bed.n_dir.to_string(),
            "bed.n_t" => f.bed.n_t.to_string(),
            "bed.ray_step" => f.bed.ray_step.map_or("exact".into(), |s| s.to_string()),
            "bed.integration" => name_of(f.bed.integration, INTEGRATION).into(),
            "bed.normalize" => f.bed.normalize.to_string(),
            "lowfeat.histogram" => name_of(f.histogram, HISTOGRAM).into(),
            "lowfeat.focused" => name_of(f.focused, FOCUSED).into(),
            "features.color" => f.color.to_string(),
            "model.conv1" => self.conv_widths[0].to_string(),
            "model.conv2" => self.conv_widths[1].to_string(),
            "model.conv3" => self.conv_widths[2].to_string(),
            "model.hidden" => self.hidden.to_string(),
            "train.augment" => self.augment.to_string(),
            "train.batch" => s.batch.to_string(),
            "train.stage1.iterations" => s.stage1.iterations.to_string(),
            "train.stage1.lr" => s.stage1.base_lr.to_string(),
            "train.stage1.decay" => s.stage1.decay.to_string(),
            "train.stage1.decay_every" => s.stage1.decay_every.to_string(),
            "train.stage2.iterations" => s.stage2.iterations.to_string(),
            "train.stage2.lr" => s.stage2.base_lr.to_string(),
            "train.reset_between_stages" => s.reset_between_stages.to_string(),
            "adadelta.rho" => s.optimizer.rho.to_string(),
            "adadelta.eps" => s.optimizer.eps.to_string(),
            "adadelta.depth_mult" => s.optimizer.depth_mult.to_string(),
            "adadelta.fusion_mult" => s.optimizer.fusion_mult.to_string(),
            "seed" => self.seed.to_string(),
            "eval.beta2" => self.eval.beta2.to_string(),
            "eval.mode" => name_of(self.eval.mode, FMODE).into(),
            "eval.averaging" => name_of(self.eval.averaging, AVERAGING).into(),
            "eval.split" => name_of(self.eval_split, SPLITS).into(),
            _ => return None,
        };
        Some(v)
    }

    /// Applies a config document on top of `self`.
    pub fn apply_text(&mut self, text: &str, base: &Path) -> Result<()> {
        let mut seen = HashSet::new();
        for (n, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("line {}: expected key = value", n + 1)))?;
            let key = key.trim();
            if !seen.insert(key.to_owned()) {
                return Err(Error::Config(format!("line {}: {key} is set twice", n + 1)));
            }
            self.set(key, value, base)
                .map_err(|e| Error::Config(format!("line {}: {}", n + 1, e.to_string().trim_start_matches("config: "))))?;
        }
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Config> {
        let text = fs::read_to_string(path).at(path)?;
        let mut cfg = Config::default();
        let base = path.parent().unwrap_or(Path::new("."));
        cfg.apply_text(&text, base)
            .map_err(|e| Error::Config(format!("{}: {}", path.display(), e.to_string().trim_start_matches("config: "))))?;
        Ok(cfg)
    }

    /// Applies a `key=value` override, as given on the command line.
    pub fn apply_override(&mut self, assignment: &str) -> Result<()> {
        let (k, v) = assignment
            .split_once('=')
            .ok_or_else(|| Error::Config(format!("{assignment:?}: expected key=value")))?;
        self.set(k.trim(), v, Path::new("."))
    }

    /// Checks constraints spanning several keys.
    pub fn validate(&self) -> Result<()> {
        self.architecture().validate().map_err(|e| {
            Error::Config(format!(
                "{e}; bed.enabled={} bed.q={} features.color={} give {} channels",
                self.features.use_bed,
                self.features.bed.q,
                self.features.color,
                self.features.channels()
            ))
        })?;
        if self.features.use_bed {
            let mut bed = self.features.bed;
            bed.sigma = 1.0;
            bed.validate().map_err(|e| Error::Config(e.to_string()))?;
        }
        Ok(())
    }

    pub fn architecture(&self) -> Architecture {
        Architecture {
            in_channels: self.features.channels(),
            conv_widths: self.conv_widths,
            hidden: self.hidden,
        }
    }

    /// `key=value` for every key matching one of `prefixes`, in canonical
    /// order. An empty prefix list selects everything.
    pub fn section_text(&self, prefixes: &[&str]) -> String {
        let mut out = String::new();
        for (key, _) in KEYS {
            if prefixes.is_empty() || prefixes.iter().any(|p| key == p || key.starts_with(&format!("{p}."))) {
                out.push_str(key);
                out.push('=');
                out.push_str(&self.get(key).expect("listed keys are known"));
                out.push('\n');
            }
        }
        out
    }

    pub fn canonical(&self) -> String {
        self.section_text(&[])
    }

    /// Every key with its current value and description, as a loadable file.
    pub fn documented(&self) -> String {
        let mut out = String::new();
        for (key, doc) in KEYS {
            out.push_str(&format!("# {doc}\n{key} = {}\n", self.get(key).expect("listed keys are known")));
        }
        out
    }
}
