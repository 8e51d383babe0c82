use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use bedsal::fixture::{generate, FixtureSpec};
use bedsal::imageio::{load_gt, load_saliency, save_gt, save_saliency};
use bedsal_core::evalkit::{mean_f, EvalOptions, FMode};
use bedsal_core::Raster;

fn fixture_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures/synthetic")
}

fn bedsal(args: &[&str], out: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_bedsal"))
        .args(args)
        .arg("--out")
        .arg(out)
        .env("BEDSAL_CACHE_DIR", "")
        .output()
        .expect("bedsal runs")
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

#[test]
fn predict_without_checkpoint_is_a_missing_artifact() {
    let out = tempfile::tempdir().unwrap();
    let conf = fixture_dir().join("fixture.conf");
    let o = bedsal(&["--config", conf.to_str().unwrap(), "predict"], out.path());
    assert_eq!(o.status.code(), Some(1), "{}", stderr(&o));
    assert!(stderr(&o).contains("--checkpoint"));
    assert_eq!(fs::read_dir(out.path()).map(|d| d.count()).unwrap_or(0), 0);
}

#[test]
fn unknown_config_keys_are_rejected() {
    let out = tempfile::tempdir().unwrap();
    let o = bedsal(&["--set", "slic.kk=3", "config"], out.path());
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("slic.kk"), "{}", stderr(&o));

    let conf = out.path().join("bad.conf");
    fs::write(&conf, "seed = 1\nbed.enable = true\n").unwrap();
    let o = bedsal(&["--config", conf.to_str().unwrap(), "config"], out.path());
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("bed.enable"), "{}", stderr(&o));
}

#[test]
fn bad_flags_and_missing_root_exit_with_one() {
    let out = tempfile::tempdir().unwrap();
    assert_eq!(bedsal(&["train", "--no-such-flag"], out.path()).status.code(), Some(1));
    let o = bedsal(&["train"], out.path());
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("dataset.root"));
    assert_eq!(bedsal(&["--help"], out.path()).status.code(), Some(0));
}

#[test]
fn config_prints_every_key_with_defaults() {
    let out = tempfile::tempdir().unwrap();
    let o = bedsal(&["--set", "slic.k=123", "config"], out.path());
    assert!(o.status.success());
    let text = String::from_utf8(o.stdout).unwrap();
    assert!(text.contains("slic.k = 123\n"));
    assert!(text.contains("train.batch = 1000\n"));
    let help = String::from_utf8(bedsal(&["--help"], out.path()).stdout).unwrap();
    assert!(help.contains("bed.q = 3"), "{help}");
    for sub in ["segment", "features", "bed", "augment", "train", "predict", "eval", "pipeline"] {
        let help = String::from_utf8(bedsal(&[sub, "--help"], out.path()).stdout).unwrap();
        assert!(help.contains("--jobs") && help.contains("train.stage1.iterations = 50000"), "{sub}: {help}");
    }
}

#[test]
fn regenerated_fixture_matches_the_bundled_one() {
    let out = tempfile::tempdir().unwrap();
    let dest = out.path().join("fx");
    let o = bedsal(&["fixture", "--dest", dest.to_str().unwrap()], out.path());
    assert!(o.status.success(), "{}", stderr(&o));
    let spec = FixtureSpec::default();
    let lib = out.path().join("lib");
    generate(&lib, &spec).unwrap();
    for sub in ["rgb", "depth", "gt"] {
        for i in 0..spec.count {
            let name = format!("{sub}/fx_{i:03}.png");
            let bundled = fs::read(fixture_dir().join(&name)).unwrap();
            assert_eq!(fs::read(dest.join(&name)).unwrap(), bundled, "{name}");
            assert_eq!(fs::read(lib.join(&name)).unwrap(), bundled, "{name}");
        }
    }
    assert_eq!(
        fs::read_to_string(dest.join("fixture.conf")).unwrap(),
        fs::read_to_string(fixture_dir().join("fixture.conf")).unwrap()
    );
}

fn summary_row(run: &Path) -> Vec<String> {
    let text = fs::read_to_string(run.join("eval/summary.csv")).unwrap();
    text.lines().nth(1).unwrap().split(',').map(str::to_owned).collect()
}

#[test]
fn eval_beta_changes_only_f_in_adaptive_mode() {
    let dir = tempfile::tempdir().unwrap();
    let (gt_dir, map_dir) = (dir.path().join("set/gt"), dir.path().join("maps"));
    fs::create_dir_all(&gt_dir).unwrap();
    fs::create_dir_all(&map_dir).unwrap();
    for i in 0..3 {
        let gt = Raster::from_fn(40, 30, |x, y| if x > 10 + i && x < 30 && y > 8 { 1.0 } else { 0.0 });
        let map = Raster::from_fn(40, 30, |x, y| ((x + 2 * y + 5 * i) % 40) as f64 / 39.0 * if x > 6 { 1.0 } else { 0.2 });
        save_gt(&gt, &gt_dir.join(format!("im{i}.png"))).unwrap();
        save_saliency(&map, &map_dir.join(format!("im{i}.png"))).unwrap();
    }
    let maps = format!("mine={}", map_dir.display());
    let run = |beta2: &str| {
        let o = bedsal(
            &["eval", "--maps", &maps, "--gt", gt_dir.to_str().unwrap(), "--mode", "adaptive", "--beta2", beta2],
            &dir.path().join("runs"),
        );
        assert!(o.status.success(), "{}", stderr(&o));
        PathBuf::from(String::from_utf8(o.stdout).unwrap().lines().last().unwrap())
    };
    let a = summary_row(&run("0.3"));
    let b = summary_row(&run("0.09"));
    assert_eq!(a[0], "mine");
    assert_eq!(a[1..3], b[1..3], "precision and recall");
    assert_ne!(a[3], b[3], "F");
    assert_eq!((a[5].as_str(), b[5].as_str()), ("0.3", "0.09"));

    let load = |d: &Path, f: fn(&Path) -> bedsal::Result<Raster<f64>>| -> Vec<Raster<f64>> {
        (0..3).map(|i| f(&d.join(format!("im{i}.png"))).unwrap()).collect()
    };
    let (maps, gts) = (load(&map_dir, load_saliency), load(&gt_dir, load_gt));
    for (row, beta2) in [(&a, 0.3), (&b, 0.09)] {
        let opts = EvalOptions {
            beta2,
            mode: FMode::Adaptive,
            ..Default::default()
        };
        let f = mean_f(&maps, &gts, &opts).unwrap();
        assert!((row[3].parse::<f64>().unwrap() - f).abs() < 1e-12, "{row:?} vs {f}");
    }
}

#[test]
fn dry_run_writes_nothing() {
    let out = tempfile::tempdir().unwrap();
    let conf = fixture_dir().join("fixture.conf");
    let o = bedsal(&["--config", conf.to_str().unwrap(), "--dry-run", "pipeline"], out.path());
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(String::from_utf8_lossy(&o.stdout).contains("5 samples (5 train, 0 val, 0 test)"));
    assert_eq!(fs::read_dir(out.path()).unwrap().count(), 0);
}
