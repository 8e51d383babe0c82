//! Acceptance checks. Prints one `PASS`/`FAIL` line per criterion and exits
//! non-zero if any fails.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::Command;
use std::time::{Duration, Instant};

use bedsal::fixture::scene;
use bedsal::imageio::{save_depth16, save_gt};
use bedsal::run::{stable_manifest, MANIFEST};
use bedsal_core::augment::{augmented_count, FACTOR};
use bedsal_core::bed::{background_set, bed_descriptor, oracle, BedParams, DirectionProfile};
use bedsal_core::evalkit::f_measure;
use bedsal_core::lowfeat::{chi_square, FeatureStack};
use bedsal_core::model::{loss, Architecture, Network};
use bedsal_core::optim::adadelta_delta;
use bedsal_core::slic::{compute_stats, segment, SlicParams, SuperpixelPartition, SuperpixelStats};
use bedsal_core::Raster;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Outcome = Result<String, String>;

fn check(cond: bool, ok: String, bad: String) -> Outcome {
    if cond {
        Ok(ok)
    } else {
        Err(bad)
    }
}

/// 64×64 scene: a two-level step background plus one to three boxes at
/// random depths. Colour follows depth so superpixels follow the boxes.
fn box_scene(rng: &mut ChaCha8Rng) -> (SuperpixelStats, SuperpixelPartition) {
    let side = 64;
    let vertical = rng.gen_bool(0.5);
    let cut = rng.gen_range(16..48);
    let (d0, d1) = (rng.gen_range(120.0..250.0), rng.gen_range(120.0..250.0));
    let boxes: Vec<(usize, usize, usize, usize, f64)> = (0..rng.gen_range(1..4))
        .map(|_| {
            let (w, h) = (rng.gen_range(8..28), rng.gen_range(8..28));
            let (x, y) = (rng.gen_range(0..side - w), rng.gen_range(0..side - h));
            (x, y, w, h, rng.gen_range(10.0..240.0))
        })
        .collect();
    let depth = Raster::from_fn(side, side, |x, y| {
        let mut d = if (if vertical { x } else { y }) < cut { d0 } else { d1 };
        for &(bx, by, w, h, bd) in &boxes {
            if x >= bx && x < bx + w && y >= by && y < by + h {
                d = bd;
            }
        }
        d
    });
    let rgb = depth.map(|&d| [d as u8, (255.0 - d) as u8, 128]);
    let part = segment(
        &rgb,
        &SlicParams {
            k_target: 48,
            ..Default::default()
        },
    )
    .expect("segmentation");
    (compute_stats(&part, &depth, &rgb).expect("stats"), part)
}

/// 64×64 scene of 8×8 blocks, one superpixel per block.
fn block_scene(depth_of: impl Fn(usize, usize) -> f64) -> (SuperpixelStats, SuperpixelPartition) {
    let labels: Vec<u32> = (0..64 * 64)
        .map(|i| ((i % 64) / 8 + 8 * ((i / 64) / 8)) as u32)
        .collect();
    let part = SuperpixelPartition::new(64, 64, labels).expect("partition");
    let depth = Raster::from_fn(64, 64, |x, y| depth_of(x / 8, y / 8));
    let rgb = Raster::filled(64, 64, [0u8; 3]);
    (compute_stats(&part, &depth, &rgb).expect("stats"), part)
}

fn bed_oracle_equivalence() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let (mut max_fg, mut max_desc, mut checked) = (0.0f64, 0.0f64, 0usize);
    for _ in 0..20 {
        let (st, part) = box_scene(&mut rng);
        let params = BedParams::default().with_sigma_of(&st);
        for p in 0..st.len() {
            let prof = DirectionProfile::cast(p, &st, &part, &params).map_err(|e| e.to_string())?;
            let rays = oracle::cast(p, &st, &part);
            for m in 0..8 {
                let t = (m as f64 + 0.37) / 8.0 * params.sigma.max(1.0);
                let (f, g) = rays.evaluate(t);
                max_fg = max_fg
                    .max((prof.foreground_fraction(t) - f).abs())
                    .max((prof.opposing_gap(t) - g).abs());
                checked += 1;
            }
            let fast = bed_descriptor(p, &st, &part, &params).map_err(|e| e.to_string())?;
            let slow = oracle::descriptor(p, &st, &part, params.sigma, params.q, 50);
            for (a, b) in fast.components().zip(slow.components()) {
                max_desc = max_desc.max((a - b).abs());
            }
        }
    }
    let secs = start.elapsed().as_secs_f64();
    let msg = format!("max |Δf|,|Δg| {max_fg:.4} over {checked} (P,t); max slice Δ {max_desc:.4}; {secs:.1}s");
    check(max_fg <= 0.05 && max_desc <= 0.05 && secs < 60.0, msg.clone(), msg)
}

fn enclosure_limits() -> Outcome {
    let (st, part) = block_scene(|bx, by| if (bx, by) == (3, 4) { 100.0 } else { 200.0 });
    let params = BedParams::default().with_sigma_of(&st);
    if params.sigma >= 100.0 {
        return Err(format!("depth gap 100 does not exceed sigma {}", params.sigma));
    }
    let d = bed_descriptor(4 * 8 + 3, &st, &part, &params).map_err(|e| e.to_string())?;
    let enclosed = d.components().all(|v| (v - 1.0).abs() <= 1e-6);
    let (flat_st, flat_part) = block_scene(|_, _| 90.0);
    let flat_params = BedParams::default().with_sigma_of(&flat_st);
    let mut flat_zero = true;
    for p in 0..flat_st.len() {
        let fd = bed_descriptor(p, &flat_st, &flat_part, &flat_params).map_err(|e| e.to_string())?;
        flat_zero &= fd.components().all(|v| v == 0.0);
    }
    check(
        enclosed && flat_zero,
        format!("enclosed ff={:?} gg={:?}; flat scene all zero", d.ff, d.gg),
        format!("enclosed {d:?} (want all 1), flat all zero: {flat_zero}"),
    )
}

fn bed_monotonicity() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let (mut violations, mut checked) = (0usize, 0usize);
    for _ in 0..100 {
        let (st, part) = box_scene(&mut rng);
        let params = BedParams::default().with_sigma_of(&st);
        let top = 1.5 * params.sigma.max(1.0);
        for p in 0..st.len() {
            let prof = DirectionProfile::cast(p, &st, &part, &params).map_err(|e| e.to_string())?;
            let ts: Vec<f64> = (0..=12).map(|m| top * m as f64 / 12.0).collect();
            for w in ts.windows(2) {
                let (lo, hi) = (w[0], w[1]);
                let nested = background_set(p, hi, &st)
                    .iter()
                    .all(|b| background_set(p, lo, &st).contains(b));
                if prof.foreground_fraction(hi) > prof.foreground_fraction(lo)
                    || prof.opposing_gap(hi) < prof.opposing_gap(lo)
                    || !nested
                {
                    violations += 1;
                }
                checked += 1;
            }
        }
    }
    check(
        violations == 0,
        format!("0 violations over {checked} t-steps on 100 scenes"),
        format!("{violations} violations over {checked} t-steps"),
    )
}

/// Central differences are only meaningful where the loss is smooth over
/// the stencil, so pairs with a ReLU pre-activation within `MIN_MARGIN` of
/// its kink are redrawn.
const MIN_MARGIN: f64 = 1e-4;

fn gradient_check() -> Outcome {
    let start = Instant::now();
    let h = 1e-5;
    let (mut worst, mut redrawn, mut compared) = (0.0f64, 0usize, 0usize);
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let mut pair = 0;
    while pair < 10 {
        let arch = Architecture {
            in_channels: [4, 10, 17][pair % 3],
            conv_widths: [3, 3, 2],
            hidden: 6,
        };
        let mut net = Network::new(arch, rng.gen()).map_err(|e| e.to_string())?;
        let specs = net.param_specs();
        for (spec, t) in specs.iter().zip(net.tensors_mut()) {
            if spec.name.ends_with(".bias") {
                t.iter_mut().for_each(|v| *v = rng.gen_range(-0.1..0.1));
            }
        }
        let data = (0..arch.in_channels * 400).map(|_| rng.gen_range(0.0..1.0)).collect();
        let stack = FeatureStack::from_data(arch.in_channels, data).map_err(|e| e.to_string())?;
        if net.relu_margin(&stack).map_err(|e| e.to_string())? < MIN_MARGIN {
            redrawn += 1;
            continue;
        }
        let target: f64 = rng.gen_range(0.0..1.0);
        let mut grads = net.zeros_like();
        net.backward(&stack, target, &mut grads).map_err(|e| e.to_string())?;
        let analytic: Vec<Vec<f64>> = grads.tensors().iter().map(|t| t.to_vec()).collect();
        for (ti, ga) in analytic.iter().enumerate() {
            for _ in 0..6 {
                let j = rng.gen_range(0..ga.len());
                let at = |net: &mut Network, delta: f64| -> Result<f64, String> {
                    let orig = net.tensors()[ti][j];
                    net.tensors_mut()[ti][j] = orig + delta;
                    let l = net.forward(&stack).map(|p| loss(p, target)).map_err(|e| e.to_string());
                    net.tensors_mut()[ti][j] = orig;
                    l
                };
                let numeric = (at(&mut net, h)? - at(&mut net, -h)?) / (2.0 * h);
                let a = ga[j];
                let denom = a.abs().max(numeric.abs());
                if denom > 1e-7 {
                    worst = worst.max((a - numeric).abs() / denom);
                    compared += 1;
                }
            }
        }
        pair += 1;
    }
    let secs = start.elapsed().as_secs_f64();
    let msg = format!(
        "max relative error {worst:.2e} over {compared} parameters of 10 network/input pairs ({redrawn} redrawn near a ReLU kink); {secs:.1}s"
    );
    check(worst <= 1e-4 && secs < 30.0, msg.clone(), msg)
}

fn adadelta_first_step() -> Outcome {
    let (mut eg, mut ex) = (0.0, 0.0);
    let d = adadelta_delta(&mut eg, &mut ex, 1.0, 0.9, 1e-8);
    check(
        (d + 3.16228e-4).abs() <= 1e-9,
        format!("Δ = {d:.9e}"),
        format!("Δ = {d:.9e}, want -3.16228e-4 ± 1e-9"),
    )
}

fn metric_identities() -> Outcome {
    let x = [3, 0, 7, 1, 0, 2, 9, 4];
    let (a, b) = ([5, 2, 0, 0, 1, 0, 0, 0], [0, 0, 4, 6, 0, 3, 1, 8]);
    let mass: u32 = a.iter().chain(&b).sum();
    let mut failures = Vec::new();
    if chi_square(&x, &x) != 0.0 {
        failures.push("chi2(x,x) != 0".to_owned());
    }
    if (chi_square(&a, &b) - mass as f64 / 2.0).abs() > 1e-12 {
        failures.push(format!("disjoint chi2 {} != {}", chi_square(&a, &b), mass as f64 / 2.0));
    }
    for v in [0.0, 0.3, 0.8471, 1.0] {
        if (f_measure(v, v, 0.3) - v).abs() > 1e-12 {
            failures.push(format!("f_measure({v},{v}) = {}", f_measure(v, v, 0.3)));
        }
    }
    if FACTOR != 32 || augmented_count(600) != 19200 || augmented_count(1200) != 38400 {
        failures.push(format!(
            "augmentation factor {FACTOR}, 600 -> {}, 1200 -> {}",
            augmented_count(600),
            augmented_count(1200)
        ));
    }
    check(
        failures.is_empty(),
        "chi2 identities, f_measure(v,v)=v, factor 32, 600->19200, 1200->38400".into(),
        failures.join("; "),
    )
}

/// Runs the CLI and returns its run directory and wall time.
fn bedsal(args: &[&str], cache: &Path, out: &Path) -> Result<(PathBuf, Duration), String> {
    let start = Instant::now();
    let output = Command::new(env!("CARGO_BIN_EXE_bedsal"))
        .args(args)
        .arg("--out")
        .arg(out)
        .env("BEDSAL_CACHE_DIR", cache)
        .env("RUST_LOG", "warn")
        .output()
        .map_err(|e| e.to_string())?;
    let elapsed = start.elapsed();
    if !output.status.success() {
        return Err(format!(
            "bedsal {args:?} failed ({}): {}",
            output.status,
            String::from_utf8_lossy(&output.stderr)
        ));
    }
    let stdout = String::from_utf8_lossy(&output.stdout);
    let dir = stdout.lines().last().ok_or("no run directory printed")?;
    Ok((PathBuf::from(dir), elapsed))
}

/// `(precision, recall, F)` of the first method in a run's summary.
fn summary(run: &Path) -> Result<(f64, f64, f64), String> {
    let text = fs::read_to_string(run.join("eval/summary.csv")).map_err(|e| e.to_string())?;
    let row = text.lines().nth(1).ok_or("empty summary")?;
    let v: Vec<&str> = row.split(',').collect();
    let num = |i: usize| v[i].parse::<f64>().map_err(|e| format!("{row}: {e}"));
    Ok((num(1)?, num(2)?, num(3)?))
}

/// Every file under `dir` with its bytes; the manifest loses its volatile lines.
fn snapshot(dir: &Path) -> BTreeMap<PathBuf, Vec<u8>> {
    fn walk(root: &Path, dir: &Path, out: &mut BTreeMap<PathBuf, Vec<u8>>) {
        for e in fs::read_dir(dir).expect("readable run dir") {
            let path = e.expect("dir entry").path();
            if path.is_dir() {
                walk(root, &path, out);
                continue;
            }
            let rel = path.strip_prefix(root).expect("inside root").to_path_buf();
            let bytes = fs::read(&path).expect("readable file");
            let bytes = if rel == Path::new(MANIFEST) {
                stable_manifest(&String::from_utf8_lossy(&bytes)).into_bytes()
            } else {
                bytes
            };
            out.insert(rel, bytes);
        }
    }
    let mut out = BTreeMap::new();
    walk(dir, dir, &mut out);
    out
}

struct FixtureRuns {
    with_bed: Result<(PathBuf, Duration), String>,
    repeat: Result<(PathBuf, Duration), String>,
    without_bed: Result<(PathBuf, Duration), String>,
}

fn fixture_runs(work: &Path) -> FixtureRuns {
    let conf = Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures/synthetic/fixture.conf");
    let conf = conf.to_str().expect("utf-8 path");
    let out = work.join("runs");
    let base = ["--jobs", "1", "--seed", "0", "--config", conf];
    let with_bed = bedsal(&[&base[..], &["pipeline"]].concat(), &work.join("cache_a"), &out);
    let repeat = bedsal(&[&base[..], &["pipeline"]].concat(), &work.join("cache_b"), &out);
    let without_bed = bedsal(
        &[&base[..], &["--set", "bed.enabled=false", "pipeline"]].concat(),
        &work.join("cache_a"),
        &out,
    );
    FixtureRuns {
        with_bed,
        repeat,
        without_bed,
    }
}

fn overfit(runs: &FixtureRuns) -> Outcome {
    let (dir, took) = runs.with_bed.clone()?;
    let (_, _, f) = summary(&dir)?;
    let secs = took.as_secs_f64();
    let msg = format!("train-set F {f:.4} (best threshold), pipeline {secs:.0}s");
    check(f >= 0.95 && secs < 300.0, msg.clone(), msg)
}

fn ablation(runs: &FixtureRuns) -> Outcome {
    let (_, _, f_bed) = summary(&runs.with_bed.clone()?.0)?;
    let (_, _, f_plain) = summary(&runs.without_bed.clone()?.0)?;
    let msg = format!("F with BED {f_bed:.4}, without {f_plain:.4}");
    check(f_bed >= f_plain - 0.01, msg.clone(), msg)
}

fn determinism(runs: &FixtureRuns) -> Outcome {
    let a = snapshot(&runs.with_bed.clone()?.0);
    let b = snapshot(&runs.repeat.clone()?.0);
    let differing: Vec<String> = a
        .keys()
        .chain(b.keys())
        .filter(|k| a.get(*k) != b.get(*k))
        .map(|k| k.display().to_string())
        .collect();
    check(
        differing.is_empty(),
        format!("{} files byte-identical across two fresh-cache runs", a.len()),
        format!("differing files: {differing:?}"),
    )
}

/// A small dataset in the documented layout: JPEG colour, 16-bit depth,
/// PNG ground truth, non-square images.
fn write_layout_dataset(root: &Path) -> Result<(), String> {
    let (w, h) = (150, 112);
    for sub in ["rgb", "depth", "gt"] {
        fs::create_dir_all(root.join(sub)).map_err(|e| e.to_string())?;
    }
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for i in 0..7 {
        let sc = scene(w, i, &mut rng);
        let id = format!("img_{i:02}");
        let rgb = image::RgbImage::from_fn(w as u32, h as u32, |x, y| image::Rgb(*sc.rgb.get(x as usize, y as usize)));
        rgb.save(root.join("rgb").join(format!("{id}.jpg"))).map_err(|e| e.to_string())?;
        let depth: Vec<u32> = sc.depth[..w * h].to_vec();
        save_depth16(w, h, &depth, &root.join("depth").join(format!("{id}.png"))).map_err(|e| e.to_string())?;
        let gt = Raster::from_fn(w, h, |x, y| *sc.gt.get(x, y));
        save_gt(&gt, &root.join("gt").join(format!("{id}.png"))).map_err(|e| e.to_string())?;
    }
    Ok(())
}

fn end_to_end(work: &Path) -> Outcome {
    let root = work.join("RGBD-layout");
    write_layout_dataset(&root)?;
    let root_s = root.to_str().ok_or("non-utf-8 path")?;
    let sets = [
        format!("dataset.root={root_s}"),
        "split.train=4".into(),
        "split.val=1".into(),
        "split.test=2".into(),
        "slic.k=80".into(),
        "model.conv1=4".into(),
        "model.conv2=4".into(),
        "model.conv3=2".into(),
        "model.hidden=8".into(),
        "train.batch=50".into(),
        "train.stage1.iterations=6".into(),
        "train.stage1.decay_every=0".into(),
        "train.stage2.iterations=3".into(),
    ];
    let mut args: Vec<&str> = Vec::new();
    for s in &sets {
        args.extend(["--set", s.as_str()]);
    }
    args.push("pipeline");
    let (dir, took) = bedsal(&args, &work.join("cache_e2e"), &work.join("runs_e2e"))?;
    let mut missing = Vec::new();
    for rel in [
        "manifest.txt",
        "config.txt",
        "index.csv",
        "train_log.csv",
        "model/manifest.txt",
        "eval/summary.csv",
        "eval/table.txt",
        "eval/bedsal/pr_curve.csv",
        "eval/bedsal/per_image.csv",
    ] {
        if !dir.join(rel).is_file() {
            missing.push(rel.to_owned());
        }
    }
    let maps = fs::read_dir(dir.join("saliency")).map(|d| d.count()).unwrap_or(0);
    let table = fs::read_to_string(dir.join("eval/table.txt")).unwrap_or_default();
    let sized = fs::read_dir(dir.join("saliency"))
        .into_iter()
        .flatten()
        .flatten()
        .all(|e| image::image_dimensions(e.path()).is_ok_and(|d| d == (150, 112)));
    check(
        missing.is_empty() && maps == 2 && sized && table.contains("RGBD-layout"),
        format!("7-image dataset: 2 test maps at 150×112, summary table and PR curves in {:.0}s", took.as_secs_f64()),
        format!("missing {missing:?}, {maps} maps, sized {sized}, table:\n{table}"),
    )
}

fn main() {
    // `cargo test -- --list` and filters meant for other targets.
    if std::env::args().any(|a| a == "--list") {
        return;
    }
    let work = tempfile::tempdir().expect("temp dir");
    let mut results: Vec<(&str, Outcome)> = vec![
        ("BED oracle equivalence", bed_oracle_equivalence()),
        ("enclosure limit cases", enclosure_limits()),
        ("BED monotonicity in t", bed_monotonicity()),
        ("gradient check", gradient_check()),
        ("Adadelta first step", adadelta_first_step()),
    ];
    let runs = fixture_runs(work.path());
    results.push(("overfit on synthetic fixture", overfit(&runs)));
    results.push(("BED ablation direction", ablation(&runs)));
    results.push(("metric identities", metric_identities()));
    results.push(("determinism", determinism(&runs)));
    results.push(("end-to-end on dataset layout", end_to_end(work.path())));

    let mut failed = 0;
    for (name, outcome) in &results {
        match outcome {
            Ok(detail) => println!("PASS {name}: {detail}"),
            Err(detail) => {
                failed += 1;
                println!("FAIL {name}: {detail}");
            }
        }
    }
    println!("{} passed, {failed} failed", results.len() - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
