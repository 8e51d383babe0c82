//! Command-line interface.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use bedsal_core::augment::AugmentSpec;
use bedsal_core::features::paint_scores;
use bedsal_core::model::Network;
use bedsal_core::{GroundTruth, SaliencyMap};
use clap::{Args, CommandFactory, FromArgMatches, Parser, Subcommand};
use rayon::prelude::*;

use crate::cache::Cache;
use crate::checkpoint;
use crate::config::Config;
use crate::dataset::{DatasetIndex, Split};
use crate::error::{Error, IoContext, Result};
use crate::fixture::{self, FixtureSpec};
use crate::imageio::{load_gt, load_saliency, save_depth16, save_gt, save_labels, save_rgb, save_saliency};
use crate::pipeline::{self, augment_specs, Env, Sample};
use crate::report::write_report;
use crate::run::Run;
use crate::tensor::write_f32;

fn default_jobs() -> usize {
    std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1)
}

fn config_help() -> String {
    format!("Configuration keys and defaults:\n\n{}", Config::default().documented())
}

/// Parses the process arguments. Every subcommand's `--help` ends with the
/// configuration keys and their defaults.
pub fn parse() -> std::result::Result<Cli, clap::Error> {
    let cmd = Cli::command().mut_subcommands(|s| s.after_long_help(config_help()));
    Cli::from_arg_matches(&cmd.try_get_matches()?)
}

#[derive(Debug, Parser)]
#[command(name = "bedsal", version, about = "RGB-D salient object detection with background enclosure features")]
#[command(after_long_help = config_help())]
pub struct Cli {
    #[command(flatten)]
    pub global: Global,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct Global {
    /// Configuration file (`key = value` lines)
    #[arg(long, global = true, value_name = "FILE")]
    pub config: Option<PathBuf>,
    /// Override one configuration key; repeatable
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    pub set: Vec<String>,
    /// Worker threads; results do not depend on this
    #[arg(long, global = true, default_value_t = default_jobs())]
    pub jobs: usize,
    /// Overrides the `seed` key (for `fixture`, the generator seed)
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Produce missing upstream artifacts (a model, saliency maps) instead
    /// of failing
    #[arg(long, global = true)]
    pub auto: bool,
    /// Print what would run without computing or writing anything
    #[arg(long, global = true)]
    pub dry_run: bool,
    /// Parent directory of run directories
    #[arg(long, global = true, default_value = "runs", value_name = "DIR")]
    pub out: PathBuf,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Superpixel label maps as 16-bit PNG
    Segment,
    /// Feature stacks per superpixel as `[K, C, 20, 20]` tensors
    Features,
    /// BED descriptors per superpixel as `[K, 2q]` tensors
    Bed {
        /// Also paint each descriptor component as a grayscale image
        #[arg(long)]
        visualize: bool,
    },
    /// The 32 rotated and flipped views of the training split
    Augment,
    /// Train a model on the training split
    Train,
    /// Saliency maps for the evaluation split
    Predict {
        /// Checkpoint directory written by `train`
        #[arg(long, value_name = "DIR")]
        checkpoint: Option<PathBuf>,
    },
    /// Score saliency maps against ground truth
    Eval {
        /// A method's maps, one PNG per image id; repeatable
        #[arg(long = "maps", value_name = "NAME=DIR")]
        maps: Vec<String>,
        /// Ground-truth directory; defaults to the evaluation split
        #[arg(long, value_name = "DIR")]
        gt: Option<PathBuf>,
        /// Overrides `eval.beta2`
        #[arg(long)]
        beta2: Option<f64>,
        /// Overrides `eval.mode` (adaptive or best_threshold)
        #[arg(long)]
        mode: Option<String>,
    },
    /// Train, predict and evaluate in one run
    Pipeline,
    /// Write the synthetic RGB-D fixture dataset
    Fixture {
        #[arg(long, value_name = "DIR")]
        dest: PathBuf,
        #[arg(long, default_value_t = FixtureSpec::default().count)]
        count: usize,
        #[arg(long, default_value_t = FixtureSpec::default().side)]
        side: usize,
    },
    /// Print the effective configuration with descriptions
    Config,
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::Segment => "segment",
            Command::Features => "features",
            Command::Bed { .. } => "bed",
            Command::Augment => "augment",
            Command::Train => "train",
            Command::Predict { .. } => "predict",
            Command::Eval { .. } => "eval",
            Command::Pipeline => "pipeline",
            Command::Fixture { .. } => "fixture",
            Command::Config => "config",
        }
    }
}

/// The effective configuration: file, then `--set`, then dedicated flags.
pub fn effective_config(cli: &Cli) -> Result<Config> {
    let mut cfg = match &cli.global.config {
        Some(path) => Config::load(path)?,
        None => Config::default(),
    };
    for s in &cli.global.set {
        cfg.apply_override(s)?;
    }
    if let Some(seed) = cli.global.seed {
        cfg.seed = seed;
    }
    if let Command::Eval { beta2, mode, .. } = &cli.command {
        if let Some(b) = beta2 {
            cfg.set("eval.beta2", &b.to_string(), Path::new("."))?;
        }
        if let Some(m) = mode {
            cfg.set("eval.mode", m, Path::new("."))?;
        }
    }
    cfg.validate()?;
    Ok(cfg)
}

/// Runs a parsed command line. Returns the run directory, if one was made.
pub fn run(cli: Cli) -> Result<Option<PathBuf>> {
    if let Command::Fixture { dest, count, side } = &cli.command {
        let spec = FixtureSpec {
            count: *count,
            side: *side,
            seed: cli.global.seed.unwrap_or(0),
        };
        if cli.global.dry_run {
            println!("would write {} fixture scenes to {}", spec.count, dest.display());
            return Ok(None);
        }
        fixture::generate(dest, &spec)?;
        println!("{}", dest.display());
        return Ok(None);
    }
    let cfg = effective_config(&cli)?;
    if let Command::Config = cli.command {
        print!("{}", cfg.documented());
        return Ok(None);
    }
    let cache = Cache::from_env_or(cli.global.out.join(".cache"));
    let env = Env::new(cfg, cache, cli.global.jobs)?;
    // Scoring given maps against a given ground-truth directory needs no dataset.
    let standalone_eval = matches!(&cli.command, Command::Eval { maps, gt: Some(_), .. } if !maps.is_empty());
    let index = if standalone_eval { DatasetIndex::default() } else { env.index()? };
    if cli.global.dry_run {
        println!(
            "{}: {} samples ({} train, {} val, {} test), eval split {}, output under {}",
            cli.command.name(),
            index.samples.len(),
            index.count(Split::Train),
            index.count(Split::Val),
            index.count(Split::Test),
            env.cfg.eval_split,
            cli.global.out.display()
        );
        return Ok(None);
    }
    match &cli.command {
        Command::Predict { checkpoint: None } if !cli.global.auto => {
            return Err(Error::MissingArtifact(
                "no model given; pass --checkpoint DIR or --auto to train one".into(),
            ))
        }
        Command::Eval { maps, .. } if maps.is_empty() && !cli.global.auto => {
            return Err(Error::MissingArtifact(
                "no saliency maps given; pass --maps NAME=DIR or --auto".into(),
            ))
        }
        _ => {}
    }
    let mut run = Run::create(&cli.global.out, cli.command.name(), &env.cfg)?;
    let mut range = None;
    if !standalone_eval {
        run.write("index.csv", index.to_csv().as_bytes())?;
        range = run.stage("depth_range", |_| env.depth_range(&index))?;
    }
    let auto = cli.global.auto;
    match &cli.command {
        Command::Segment => {
            let samples = run.stage("load", |_| env.load_all(&index, range))?;
            let dir = run.output_dir("segments")?;
            run.stage("segment", |_| {
                par_each(&env, &samples, |s| {
                    let (part, _) = pipeline::partition(&env, s, AugmentSpec::IDENTITY, &s.rgb)?;
                    save_labels(&part, &dir.join(format!("{}.png", s.id)))
                })
            })?;
        }
        Command::Features => {
            let samples = run.stage("load", |_| env.load_all(&index, range))?;
            let dir = run.output_dir("features")?;
            run.stage("features", |_| {
                par_each(&env, &samples, |s| {
                    let ex = pipeline::extract(&env, s, AugmentSpec::IDENTITY)?;
                    let k = ex.feats.superpixels();
                    let c = ex.feats.channels();
                    let mut data = Vec::with_capacity(k * c * 400);
                    for p in 0..k {
                        data.extend(ex.feats.stack(p)?.data().iter().map(|&v| v as f32));
                    }
                    write_f32(&dir.join(format!("{}.bstn", s.id)), &[k, c, 20, 20], &data)
                })
            })?;
        }
        Command::Bed { visualize } => {
            let samples = run.stage("load", |_| env.load_all(&index, range))?;
            let dir = run.output_dir("bed")?;
            let q = env.cfg.features.bed.q;
            run.stage("bed", |_| {
                par_each(&env, &samples, |s| {
                    let (part, key) = pipeline::partition(&env, s, AugmentSpec::IDENTITY, &s.rgb)?;
                    let d = pipeline::descriptors(&env, &key, &part, &s.rgb, &s.depth)?;
                    let data: Vec<f32> = d.iter().flat_map(|x| x.components().map(|v| v as f32).collect::<Vec<_>>()).collect();
                    write_f32(&dir.join(format!("{}.bstn", s.id)), &[d.len(), 2 * q], &data)?;
                    if *visualize {
                        for c in 0..2 * q {
                            let scores: Vec<f64> = d.iter().map(|x| x.components().nth(c).unwrap_or(0.0)).collect();
                            let name = if c < q { format!("ff{c}") } else { format!("gg{}", c - q) };
                            save_saliency(&paint_scores(&part, &scores), &dir.join(format!("{}_{name}.png", s.id)))?;
                        }
                    }
                    Ok(())
                })
            })?;
        }
        Command::Augment => {
            let samples = run.stage("load", |_| env.load_split(&index, Split::Train, range))?;
            let dir = run.output_dir("augmented")?;
            for sub in ["rgb", "depth", "gt"] {
                fs::create_dir_all(dir.join(sub)).at(&dir.join(sub))?;
            }
            let specs = augment_specs(&env.cfg);
            run.stage("augment", |_| {
                par_each(&env, &samples, |s| {
                    for &spec in &specs {
                        let (rgb, depth, gt) = s.view(spec)?;
                        let name = format!("{}{}.png", s.id, spec.suffix());
                        save_rgb(&rgb, &dir.join("rgb").join(&name))?;
                        let d16: Vec<u32> = depth.data().iter().map(|&v| (v.clamp(0.0, 255.0) * 257.0).round() as u32).collect();
                        save_depth16(depth.width(), depth.height(), &d16, &dir.join("depth").join(&name))?;
                        save_gt(&gt, &dir.join("gt").join(&name))?;
                    }
                    Ok(())
                })
            })?;
        }
        Command::Train => {
            let samples = run.stage("load", |_| env.load_split(&index, Split::Train, range))?;
            let (net, log) = run.stage("train", |_| pipeline::obtain_model(&env, &samples))?;
            save_model(&mut run, &env, &net, &log)?;
        }
        Command::Predict { checkpoint } => {
            let net = model_for(&mut run, &env, &index, range, checkpoint.as_deref(), auto)?;
            let samples = run.stage("load", |_| env.load_split(&index, env.cfg.eval_split, range))?;
            write_predictions(&mut run, &env, &net, &samples)?;
        }
        Command::Eval { maps, gt, .. } => {
            let (ids, gts) = match gt {
                Some(dir) => gt_dir(dir)?,
                None => {
                    let entries: Vec<_> = index.split(env.cfg.eval_split).collect();
                    let gts = env
                        .pool
                        .install(|| entries.par_iter().map(|e| load_gt(&e.gt)).collect::<Result<Vec<_>>>())?;
                    (entries.iter().map(|e| e.id.clone()).collect(), gts)
                }
            };
            let mut methods = Vec::new();
            for m in maps {
                let (name, dir) = m
                    .split_once('=')
                    .ok_or_else(|| Error::Invalid(format!("--maps {m:?}: expected NAME=DIR")))?;
                methods.push((name.to_owned(), load_maps(Path::new(dir), &ids)?));
            }
            if methods.is_empty() {
                if !auto {
                    return Err(Error::MissingArtifact(
                        "no saliency maps given; pass --maps NAME=DIR or --auto".into(),
                    ));
                }
                let net = model_for(&mut run, &env, &index, range, None, true)?;
                let samples = run.stage("load", |_| env.load_split(&index, env.cfg.eval_split, range))?;
                methods.push(("bedsal".to_owned(), write_predictions(&mut run, &env, &net, &samples)?));
            }
            let dataset = match gt {
                Some(dir) if standalone_eval => pipeline::dataset_name(dir.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."))),
                _ => pipeline::dataset_name(&index.root),
            };
            evaluate_into(&mut run, &env, &methods, &gts, &ids, &dataset)?;
        }
        Command::Pipeline => {
            let train = run.stage("load", |_| env.load_split(&index, Split::Train, range))?;
            let (net, log) = run.stage("train", |_| pipeline::obtain_model(&env, &train))?;
            save_model(&mut run, &env, &net, &log)?;
            let samples = if env.cfg.eval_split == Split::Train {
                train
            } else {
                run.stage("load_eval", |_| env.load_split(&index, env.cfg.eval_split, range))?
            };
            let maps = write_predictions(&mut run, &env, &net, &samples)?;
            let ids: Vec<String> = samples.iter().map(|s| s.id.clone()).collect();
            let gts: Vec<GroundTruth> = samples.into_iter().map(|s| s.gt_full).collect();
            let dataset = pipeline::dataset_name(&index.root);
            evaluate_into(&mut run, &env, &[("bedsal".to_owned(), maps)], &gts, &ids, &dataset)?;
        }
        Command::Fixture { .. } | Command::Config => unreachable!("handled above"),
    }
    let dir = run.finish()?;
    println!("{}", dir.display());
    Ok(Some(dir))
}

fn par_each(env: &Env, samples: &[Sample], f: impl Fn(&Sample) -> Result<()> + Sync) -> Result<()> {
    env.pool.install(|| samples.par_iter().try_for_each(&f))
}

fn save_model(run: &mut Run, env: &Env, net: &Network, log: &str) -> Result<()> {
    let dir = run.output_dir("model")?;
    checkpoint::save(net, &dir, &env.cfg.canonical())?;
    run.write("train_log.csv", log.as_bytes())
}

fn model_for(
    run: &mut Run,
    env: &Env,
    index: &DatasetIndex,
    range: Option<(u32, u32)>,
    checkpoint: Option<&Path>,
    auto: bool,
) -> Result<Network> {
    if let Some(dir) = checkpoint {
        let net = checkpoint::load(dir)?;
        if *net.architecture() != env.cfg.architecture() {
            return Err(Error::Invalid(format!(
                "checkpoint {} has architecture {:?}, the configuration needs {:?}",
                dir.display(),
                net.architecture(),
                env.cfg.architecture()
            )));
        }
        return Ok(net);
    }
    if !auto {
        return Err(Error::MissingArtifact(
            "no model given; pass --checkpoint DIR or --auto to train one".into(),
        ));
    }
    let train = run.stage("load_train", |_| env.load_split(index, Split::Train, range))?;
    let (net, log) = run.stage("train", |_| pipeline::obtain_model(env, &train))?;
    save_model(run, env, &net, &log)?;
    Ok(net)
}

fn write_predictions(run: &mut Run, env: &Env, net: &Network, samples: &[Sample]) -> Result<Vec<SaliencyMap>> {
    let maps = run.stage("predict", |_| pipeline::predict_all(env, net, samples))?;
    let dir = run.output_dir("saliency")?;
    for (s, m) in samples.iter().zip(&maps) {
        save_saliency(m, &dir.join(format!("{}.png", s.id)))?;
    }
    Ok(maps)
}

fn evaluate_into(
    run: &mut Run,
    env: &Env,
    methods: &[(String, Vec<SaliencyMap>)],
    gts: &[GroundTruth],
    ids: &[String],
    dataset: &str,
) -> Result<()> {
    let report = run.stage("eval", |_| pipeline::evaluate(methods, gts, &env.cfg.eval))?;
    let dir = run.output_dir("eval")?;
    write_report(&dir, &report, ids, dataset)?;
    print!("{}", crate::report::summary_table(&report, dataset));
    Ok(())
}

/// Image files in `dir` keyed by stem.
fn images_by_stem(dir: &Path) -> Result<BTreeMap<String, PathBuf>> {
    let mut out = BTreeMap::new();
    for entry in fs::read_dir(dir).at(dir)? {
        let path = entry.at(dir)?.path();
        let ext = path.extension().and_then(|e| e.to_str()).map(str::to_ascii_lowercase);
        if !matches!(ext.as_deref(), Some("png" | "jpg" | "jpeg" | "bmp")) {
            continue;
        }
        if let Some(stem) = path.file_stem().and_then(|s| s.to_str()) {
            out.insert(stem.to_owned(), path.clone());
        }
    }
    Ok(out)
}

fn gt_dir(dir: &Path) -> Result<(Vec<String>, Vec<GroundTruth>)> {
    let files = images_by_stem(dir)?;
    if files.is_empty() {
        return Err(Error::MissingArtifact(format!("no ground-truth images in {}", dir.display())));
    }
    let gts = files.values().map(|p| load_gt(p)).collect::<Result<_>>()?;
    Ok((files.into_keys().collect(), gts))
}

fn load_maps(dir: &Path, ids: &[String]) -> Result<Vec<SaliencyMap>> {
    let files = images_by_stem(dir)?;
    ids.iter()
        .map(|id| {
            let path = files
                .get(id)
                .ok_or_else(|| Error::MissingArtifact(format!("no saliency map for {id} in {}", dir.display())))?;
            load_saliency(path)
        })
        .collect()
}

