//! Seeded synthetic RGB-D scenes in the dataset layout.
//!
//! Each scene has one salient object: a brightly coloured ellipse standing
//! well in front of a sloping background. Every other scene also gets a
//! grey slab attached to the bottom border, as near as the object but not
//! enclosed by background and not marked salient. Depth is stored as 16-bit
//! millimetres with a few zero-valued holes.

use std::fs;
use std::path::Path;

use bedsal_core::Raster;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{IoContext, Result};
use crate::imageio::{save_depth16, save_gt, save_rgb};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FixtureSpec {
    pub count: usize,
    pub side: usize,
    pub seed: u64,
}

impl Default for FixtureSpec {
    fn default() -> Self {
        FixtureSpec {
            count: 5,
            side: 324,
            seed: 0,
        }
    }
}

/// Settings that fit the fixture almost perfectly in about a minute of CPU
/// time per run.
pub const FIXTURE_CONFIG: &str = "\
# Synthetic fixture: all five images train and are scored.
dataset.root = .
split.train = 5
split.val = 0
split.test = 0
eval.split = train

slic.k = 400

model.conv1 = 8
model.conv2 = 8
model.conv3 = 4
model.hidden = 32

train.batch = 100
train.stage1.iterations = 80
train.stage1.lr = 0.5
train.stage1.decay_every = 0
train.stage2.iterations = 40
train.stage2.lr = 0.1
";

pub struct Scene {
    pub rgb: Raster<[u8; 3]>,
    /// Millimetres; 0 marks a hole.
    pub depth: Vec<u32>,
    pub gt: Raster<f64>,
}

fn clamp_u8(v: f64) -> u8 {
    v.round().clamp(0.0, 255.0) as u8
}

pub fn scene(side: usize, index: usize, rng: &mut ChaCha8Rng) -> Scene {
    let s = side as f64;
    let cx = s * rng.gen_range(0.35..0.65);
    let cy = s * rng.gen_range(0.35..0.6);
    let rx = s * rng.gen_range(0.12..0.2);
    let ry = s * rng.gen_range(0.12..0.2);
    let obj_depth = rng.gen_range(1100.0..1500.0);
    let hue = [
        [235.0, 60.0, 40.0],
        [250.0, 210.0, 40.0],
        [60.0, 200.0, 80.0],
        [240.0, 90.0, 200.0],
        [70.0, 170.0, 250.0],
    ][index % 5];
    let far = rng.gen_range(3600.0..4200.0);
    let near = rng.gen_range(2400.0..2800.0);
    let slab = (index % 2 == 1).then(|| {
        let w = s * rng.gen_range(0.15..0.25);
        let x0 = if rng.gen_bool(0.5) { s * 0.03 } else { s * 0.97 - w };
        (x0, x0 + w, s * rng.gen_range(0.78..0.85), rng.gen_range(1300.0..1700.0))
    });
    let holes: Vec<(f64, f64, f64)> = (0..rng.gen_range(3..7))
        .map(|_| (rng.gen_range(0.0..s), rng.gen_range(0.0..s * 0.3), rng.gen_range(2.0..5.0)))
        .collect();

    let sq = |v: f64| v * v;
    let radius2 = |x: f64, y: f64| sq((x - cx) / rx) + sq((y - cy) / ry);
    let mut rgb = Raster::filled(side, side, [0u8; 3]);
    let mut depth = vec![0u32; side * side];
    let mut gt = Raster::filled(side, side, 0.0);
    for y in 0..side {
        for x in 0..side {
            let (px, py) = (x as f64 + 0.5, y as f64 + 0.5);
            let noise = rng.gen_range(-12.0..12.0);
            let dz = rng.gen_range(-15.0..15.0);
            let (color, d) = if radius2(px, py) <= 1.0 {
                gt.set(x, y, 1.0);
                (hue.map(|c| c + noise), obj_depth + 60.0 * radius2(px, py) + dz)
            } else if let Some((_, _, _, d)) = slab.filter(|&(x0, x1, y0, _)| px >= x0 && px < x1 && py >= y0) {
                ([125.0 + noise; 3], d + dz)
            } else {
                let t = py / s;
                let stripe = if (x / 18 + y / 18) % 2 == 0 { 8.0 } else { -8.0 };
                (
                    [95.0 + stripe + noise, 105.0 + noise, 115.0 - stripe + noise],
                    far + (near - far) * t + dz,
                )
            };
            rgb.set(x, y, color.map(clamp_u8));
            let hole = holes
                .iter()
                .any(|&(hx, hy, r)| sq(px - hx) + sq(py - hy) <= r * r);
            depth[y * side + x] = if hole { 0 } else { d.round().max(1.0) as u32 };
        }
    }
    Scene { rgb, depth, gt }
}

pub fn fixture_id(i: usize) -> String {
    format!("fx_{i:03}")
}

/// Writes `rgb/`, `depth/`, `gt/` and `fixture.conf` under `dest`.
pub fn generate(dest: &Path, spec: &FixtureSpec) -> Result<()> {
    for sub in ["rgb", "depth", "gt"] {
        let d = dest.join(sub);
        fs::create_dir_all(&d).at(&d)?;
    }
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    for i in 0..spec.count {
        let sc = scene(spec.side, i, &mut rng);
        let id = fixture_id(i);
        save_rgb(&sc.rgb, &dest.join("rgb").join(format!("{id}.png")))?;
        save_depth16(spec.side, spec.side, &sc.depth, &dest.join("depth").join(format!("{id}.png")))?;
        save_gt(&sc.gt, &dest.join("gt").join(format!("{id}.png")))?;
    }
    let conf = dest.join("fixture.conf");
    fs::write(&conf, FIXTURE_CONFIG).at(&conf)
}
