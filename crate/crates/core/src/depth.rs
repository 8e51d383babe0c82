//! Depth normalization onto the 0..=255 scale and sample resizing.

use alloc::collections::VecDeque;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::raster::{
    sample_bilinear, DepthImage, GroundTruth, RawDepthImage, Raster, RgbImage, Sample,
};

/// Side length every sample is resized to before feature extraction.
pub const DEFAULT_SIDE: usize = 324;

/// What to put in pixels without a depth measurement.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum InvalidFill {
    /// Treat holes as far background (255).
    #[default]
    Far,
    /// Copy the normalized value of the nearest valid pixel (4-neighbour BFS).
    NearestValid,
}

/// Source of the min/max used by the linear map.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum DepthRange {
    #[default]
    PerImage,
    /// A range shared by a whole dataset; values outside it are clamped.
    Fixed { min: u32, max: u32 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct NormalizeOptions {
    /// Pass values through untouched when they already fit in 0..=255.
    pub assume_8bit: bool,
    pub invalid_fill: InvalidFill,
    pub range: DepthRange,
}

/// Min and max over valid pixels.
pub fn valid_range(raw: &RawDepthImage) -> Option<(u32, u32)> {
    raw.values
        .iter()
        .zip(&raw.valid)
        .filter(|(_, &ok)| ok)
        .fold(None, |acc, (&v, _)| match acc {
            None => Some((v, v)),
            Some((lo, hi)) => Some((lo.min(v), hi.max(v))),
        })
}

/// Maps valid depth linearly so the minimum lands on 0 and the maximum on 255.
pub fn normalize_depth(raw: &RawDepthImage, opts: &NormalizeOptions) -> Result<DepthImage> {
    let (lo, hi) = valid_range(raw).ok_or(Error::NoValidDepth)?;
    if opts.assume_8bit && raw.values.iter().all(|&v| v <= 255) {
        let values = raw.values.iter().map(|&v| v as f64).collect();
        return Raster::new(raw.width, raw.height, values);
    }
    let (lo, hi) = match opts.range {
        DepthRange::PerImage => (lo, hi),
        DepthRange::Fixed { min, max } if min <= max => (min, max),
        DepthRange::Fixed { min, max } => {
            return Err(Error::InvalidParameter(alloc::format!(
                "depth range min {min} exceeds max {max}"
            )))
        }
    };
    let span = hi.saturating_sub(lo) as f64;
    let map = |v: u32| -> f64 {
        if span == 0.0 {
            return 0.0;
        }
        let v = v.clamp(lo, hi);
        (v - lo) as f64 * 255.0 / span
    };
    let mut values: Vec<f64> = raw
        .values
        .iter()
        .zip(&raw.valid)
        .map(|(&v, &ok)| if ok { map(v) } else { 255.0 })
        .collect();
    if opts.invalid_fill == InvalidFill::NearestValid {
        fill_from_nearest_valid(raw.width, raw.height, &raw.valid, &mut values);
    }
    Raster::new(raw.width, raw.height, values)
}

fn fill_from_nearest_valid(width: usize, height: usize, valid: &[bool], values: &mut [f64]) {
    let mut seen: Vec<bool> = valid.to_vec();
    let mut queue: VecDeque<usize> = (0..valid.len()).filter(|&i| valid[i]).collect();
    while let Some(i) = queue.pop_front() {
        let (x, y) = (i % width, i / width);
        let mut visit = |j: usize| {
            if !seen[j] {
                seen[j] = true;
                values[j] = values[i];
                queue.push_back(j);
            }
        };
        if x > 0 {
            visit(i - 1);
        }
        if x + 1 < width {
            visit(i + 1);
        }
        if y > 0 {
            visit(i - width);
        }
        if y + 1 < height {
            visit(i + width);
        }
    }
}

/// Source index for destination index `d` under nearest-neighbour scaling
/// (pixel centres aligned).
#[inline]
pub fn nearest_index(d: usize, src_len: usize, dst_len: usize) -> usize {
    (((2 * d + 1) * src_len) / (2 * dst_len)).min(src_len - 1)
}

pub fn resize_nearest<T: Copy>(img: &Raster<T>, width: usize, height: usize) -> Raster<T> {
    let xs: Vec<usize> = (0..width)
        .map(|x| nearest_index(x, img.width(), width))
        .collect();
    Raster::from_fn(width, height, |x, y| {
        *img.get(xs[x], nearest_index(y, img.height(), height))
    })
}

pub fn resize_bilinear<T: Sample>(img: &Raster<T>, width: usize, height: usize) -> Raster<T> {
    let sx = img.width() as f64 / width as f64;
    let sy = img.height() as f64 / height as f64;
    Raster::from_fn(width, height, |x, y| {
        sample_bilinear(
            img,
            (x as f64 + 0.5) * sx - 0.5,
            (y as f64 + 0.5) * sy - 0.5,
        )
    })
}

/// Brings a sample to `side × side`: color bilinear, depth and ground truth
/// nearest-neighbour so no depth is invented across occlusion edges.
pub fn resize_sample(
    rgb: &RgbImage,
    depth: &DepthImage,
    gt: &GroundTruth,
    side: usize,
) -> Result<(RgbImage, DepthImage, GroundTruth)> {
    if side == 0 {
        return Err(Error::EmptyImage);
    }
    Ok((
        resize_bilinear(rgb, side, side),
        resize_nearest(depth, side, side),
        resize_nearest(gt, side, side),
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    fn raw(values: Vec<u32>, w: usize, h: usize) -> RawDepthImage {
        let valid = vec![true; values.len()];
        RawDepthImage::new(w, h, values, valid).unwrap()
    }

    #[test]
    fn linear_endpoints_and_midpoint() {
        let out = normalize_depth(&raw(vec![0, 500, 1000], 3, 1), &Default::default()).unwrap();
        assert_eq!(out.data(), &[0.0, 127.5, 255.0]);
    }

    #[test]
    fn constant_image_maps_to_zero() {
        let out = normalize_depth(&raw(vec![700; 6], 3, 2), &Default::default()).unwrap();
        assert!(out.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn kinect_range_against_two_pass_scan() {
        // Deterministic LCG fill over [400, 8000].
        let mut s = 12345u64;
        let values: Vec<u32> = (0..64 * 48)
            .map(|_| {
                s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
                400 + ((s >> 33) % 7601) as u32
            })
            .collect();
        let img = raw(values.clone(), 64, 48);
        let out = normalize_depth(&img, &Default::default()).unwrap();
        let mut lo = u32::MAX;
        let mut hi = 0;
        for &v in &values {
            lo = lo.min(v);
            hi = hi.max(v);
        }
        for (&v, &n) in values.iter().zip(out.data()) {
            let expected = (v - lo) as f64 / (hi - lo) as f64 * 255.0;
            assert!((n - expected).abs() < 1e-9);
        }
        assert!(out.data().contains(&0.0) && out.data().contains(&255.0));
    }

    #[test]
    fn all_invalid_is_an_error() {
        let img = RawDepthImage::from_values(2, 1, vec![0, 0]).unwrap();
        assert_eq!(
            normalize_depth(&img, &Default::default()),
            Err(Error::NoValidDepth)
        );
    }

    #[test]
    fn holes_are_far_or_filled() {
        let img = RawDepthImage::from_values(4, 1, vec![100, 0, 200, 0]).unwrap();
        let far = normalize_depth(&img, &Default::default()).unwrap();
        assert_eq!(far.data(), &[0.0, 255.0, 255.0, 255.0]);
        let opts = NormalizeOptions {
            invalid_fill: InvalidFill::NearestValid,
            ..Default::default()
        };
        let filled = normalize_depth(&img, &opts).unwrap();
        assert_eq!(filled.data(), &[0.0, 0.0, 255.0, 255.0]);
    }

    #[test]
    fn eight_bit_passthrough() {
        let img = raw(vec![10, 20, 30], 3, 1);
        let opts = NormalizeOptions {
            assume_8bit: true,
            ..Default::default()
        };
        assert_eq!(
            normalize_depth(&img, &opts).unwrap().data(),
            &[10.0, 20.0, 30.0]
        );
    }

    #[test]
    fn fixed_range_clamps() {
        let img = raw(vec![0, 50, 100, 300], 4, 1);
        let opts = NormalizeOptions {
            range: DepthRange::Fixed { min: 50, max: 100 },
            ..Default::default()
        };
        assert_eq!(
            normalize_depth(&img, &opts).unwrap().data(),
            &[0.0, 0.0, 255.0, 255.0]
        );
    }

    #[test]
    fn identity_resize_is_bit_exact() {
        let rgb = Raster::from_fn(324, 324, |x, y| [(x % 256) as u8, (y % 256) as u8, 7]);
        let depth = Raster::from_fn(324, 324, |x, y| (x * 3 + y) as f64 % 255.0);
        let gt = Raster::from_fn(324, 324, |x, _| (x % 2) as f64);
        let (r, d, g) = resize_sample(&rgb, &depth, &gt, 324).unwrap();
        assert_eq!((r, d, g), (rgb, depth, gt));
    }

    #[test]
    fn constant_depth_downscale() {
        let depth = Raster::filled(648, 648, 42.5);
        let out = resize_nearest(&depth, 324, 324);
        assert_eq!(out.dims(), (324, 324));
        assert!(out.data().iter().all(|&v| v == 42.5));
    }

    #[test]
    fn gt_quadrants_follow_nearest_source() {
        let gt = Raster::new(2, 2, vec![0.0, 1.0, 1.0, 0.0]).unwrap();
        let out = resize_nearest(&gt, 324, 324);
        for y in 0..324 {
            for x in 0..324 {
                // Source index is floor((d + 0.5) * 2 / 324), i.e. d >= 162 -> 1.
                let (sx, sy) = ((x >= 162) as usize, (y >= 162) as usize);
                assert_eq!(*out.get(x, y), *gt.get(sx, sy));
            }
        }
    }
}
