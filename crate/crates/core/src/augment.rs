//! 32× training-set expansion: 16 rotations in 22.5° steps, each with and
//! without a horizontal mirror.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::math;
use crate::raster::{
    sample_bilinear, sample_nearest, DepthImage, GroundTruth, Raster, RgbImage, Sample,
};

pub const ROTATIONS: u8 = 16;
pub const ROTATION_STEP_DEG: f64 = 22.5;
pub const FACTOR: usize = 2 * ROTATIONS as usize;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct AugmentSpec {
    /// Rotation index; the angle is `22.5° × rotation`.
    pub rotation: u8,
    pub flip: bool,
}

impl AugmentSpec {
    pub const IDENTITY: AugmentSpec = AugmentSpec {
        rotation: 0,
        flip: false,
    };

    /// All 32 specs, identity first.
    pub fn all() -> Vec<AugmentSpec> {
        (0..ROTATIONS)
            .flat_map(|rotation| [false, true].map(|flip| AugmentSpec { rotation, flip }))
            .collect()
    }

    pub fn angle_degrees(&self) -> f64 {
        self.rotation as f64 * ROTATION_STEP_DEG
    }

    /// Id suffix, e.g. `_r3` or `_r3_f`.
    pub fn suffix(&self) -> String {
        if self.flip {
            format!("_r{}_f", self.rotation)
        } else {
            format!("_r{}", self.rotation)
        }
    }

    /// Inverse of [`AugmentSpec::suffix`] applied to a full id; returns the
    /// base id and the augmentation.
    pub fn parse_id(id: &str) -> Option<(&str, AugmentSpec)> {
        let (rest, flip) = match id.strip_suffix("_f") {
            Some(r) => (r, true),
            None => (id, false),
        };
        let pos = rest.rfind("_r")?;
        let rotation: u8 = rest[pos + 2..].parse().ok()?;
        if rotation >= ROTATIONS || rest[pos + 2..].starts_with('+') {
            return None;
        }
        Some((&rest[..pos], AugmentSpec { rotation, flip }))
    }
}

/// Number of training samples after augmenting `originals` images.
pub fn augmented_count(originals: usize) -> usize {
    originals * FACTOR
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Interp {
    Bilinear,
    Nearest,
}

fn ensure_square<T>(img: &Raster<T>) -> Result<()> {
    if img.width() != img.height() {
        return Err(Error::NonSquare {
            width: img.width(),
            height: img.height(),
        });
    }
    Ok(())
}

fn quarter_turn<T: Copy>(img: &Raster<T>, quarters: u8) -> Raster<T> {
    let n = img.width() - 1;
    Raster::from_fn(img.width(), img.height(), |x, y| match quarters % 4 {
        0 => *img.get(x, y),
        1 => *img.get(n - y, x),
        2 => *img.get(n - x, n - y),
        _ => *img.get(y, n - x),
    })
}

/// Rotates a square image about its center, keeping its size. Source
/// positions outside the image take the nearest edge value. Multiples of 90°
/// are exact index permutations.
pub fn rotate<T: Sample>(img: &Raster<T>, angle_deg: f64, interp: Interp) -> Result<Raster<T>> {
    ensure_square(img)?;
    let turns = angle_deg / 90.0;
    if turns == math::round(turns) {
        let q = (math::round(turns) as i64).rem_euclid(4) as u8;
        return Ok(quarter_turn(img, q));
    }
    let theta = angle_deg.to_radians();
    let (s, c) = (math::sin(theta), math::cos(theta));
    let center = (img.width() - 1) as f64 / 2.0;
    Ok(Raster::from_fn(img.width(), img.height(), |x, y| {
        let u = x as f64 - center;
        let v = y as f64 - center;
        let sx = center + c * u - s * v;
        let sy = center + s * u + c * v;
        match interp {
            Interp::Bilinear => sample_bilinear(img, sx, sy),
            Interp::Nearest => sample_nearest(img, sx, sy),
        }
    }))
}

/// Horizontal mirror: `(x, y) → (W − 1 − x, y)`.
pub fn flip<T: Copy>(img: &Raster<T>) -> Raster<T> {
    let n = img.width() - 1;
    Raster::from_fn(img.width(), img.height(), |x, y| *img.get(n - x, y))
}

/// Applies one spec (rotate, then mirror) to a matched triple.
pub fn apply(
    spec: AugmentSpec,
    rgb: &RgbImage,
    depth: &DepthImage,
    gt: &GroundTruth,
) -> Result<(RgbImage, DepthImage, GroundTruth)> {
    depth.ensure_dims(rgb.dims())?;
    gt.ensure_dims(rgb.dims())?;
    if spec.rotation >= ROTATIONS {
        return Err(Error::InvalidParameter(format!("{spec:?}")));
    }
    let angle = spec.angle_degrees();
    let mut out = (
        rotate(rgb, angle, Interp::Bilinear)?,
        rotate(depth, angle, Interp::Nearest)?,
        rotate(gt, angle, Interp::Nearest)?,
    );
    if spec.flip {
        out = (flip(&out.0), flip(&out.1), flip(&out.2));
    }
    Ok(out)
}

/// All 32 variants of a sample, in [`AugmentSpec::all`] order.
pub fn augment_sample(
    rgb: &RgbImage,
    depth: &DepthImage,
    gt: &GroundTruth,
) -> Result<Vec<(AugmentSpec, RgbImage, DepthImage, GroundTruth)>> {
    AugmentSpec::all()
        .into_iter()
        .map(|spec| {
            let (r, d, g) = apply(spec, rgb, depth, gt)?;
            Ok((spec, r, d, g))
        })
        .collect()
}
