//! Image decoding and encoding for colour, depth, ground truth, saliency
//! maps and label maps.

use std::path::Path;

use bedsal_core::slic::SuperpixelPartition;
use bedsal_core::{GroundTruth, RawDepthImage, Raster, RgbImage, SaliencyMap};
use image::{DynamicImage, GrayImage, ImageBuffer, Luma, RgbImage as ImgRgb};

use crate::error::{Error, Result};

fn open(path: &Path) -> Result<DynamicImage> {
    image::open(path).map_err(|source| Error::Image {
        path: path.to_owned(),
        source,
    })
}

fn save(img: &DynamicImage, path: &Path) -> Result<()> {
    img.save(path).map_err(|source| Error::Image {
        path: path.to_owned(),
        source,
    })
}

pub fn load_rgb(path: &Path) -> Result<RgbImage> {
    let img = open(path)?.to_rgb8();
    let (w, h) = (img.width() as usize, img.height() as usize);
    let data = img.pixels().map(|p| p.0).collect();
    Ok(Raster::new(w, h, data)?)
}

/// Reads depth at its stored bit depth; zero marks a missing measurement.
pub fn load_raw_depth(path: &Path) -> Result<RawDepthImage> {
    let img = open(path)?;
    let (w, h) = (img.width() as usize, img.height() as usize);
    let values: Vec<u32> = match img {
        DynamicImage::ImageLuma8(b) => b.pixels().map(|p| p.0[0] as u32).collect(),
        DynamicImage::ImageLuma16(b) => b.pixels().map(|p| p.0[0] as u32).collect(),
        DynamicImage::ImageLumaA8(_) | DynamicImage::ImageRgb8(_) | DynamicImage::ImageRgba8(_) => {
            img.to_luma8().pixels().map(|p| p.0[0] as u32).collect()
        }
        other => other.to_luma16().pixels().map(|p| p.0[0] as u32).collect(),
    };
    Ok(RawDepthImage::from_values(w, h, values)?)
}

/// Grey levels scaled to [0, 1]; binary masks stored as 0/255 load as {0, 1}.
pub fn load_gt(path: &Path) -> Result<GroundTruth> {
    load_gray(path)
}

/// Saliency maps are stored like ground truth.
pub fn load_saliency(path: &Path) -> Result<SaliencyMap> {
    load_gray(path)
}

fn load_gray(path: &Path) -> Result<Raster<f64>> {
    let img = open(path)?.to_luma8();
    let (w, h) = (img.width() as usize, img.height() as usize);
    let data = img.pixels().map(|p| p.0[0] as f64 / 255.0).collect();
    Ok(Raster::new(w, h, data)?)
}

/// `round(v × 255)` with halves rounded up.
pub fn to_gray8(v: f64) -> u8 {
    (v * 255.0 + 0.5).floor() as u8
}

pub fn save_saliency(map: &SaliencyMap, path: &Path) -> Result<()> {
    if let Some(v) = map.data().iter().find(|v| !(0.0..=1.0).contains(*v)) {
        return Err(Error::Invalid(format!("saliency value {v} outside [0, 1]")));
    }
    let pixels = map.data().iter().map(|&v| to_gray8(v)).collect();
    let img = GrayImage::from_raw(map.width() as u32, map.height() as u32, pixels).expect("buffer sized from map");
    save(&DynamicImage::ImageLuma8(img), path)
}

pub fn save_gt(gt: &GroundTruth, path: &Path) -> Result<()> {
    save_saliency(gt, path)
}

pub fn save_rgb(rgb: &RgbImage, path: &Path) -> Result<()> {
    let raw = rgb.data().iter().flatten().copied().collect();
    let img = ImgRgb::from_raw(rgb.width() as u32, rgb.height() as u32, raw).expect("buffer sized from image");
    save(&DynamicImage::ImageRgb8(img), path)
}

/// 16-bit single-channel depth; values above 65535 are rejected.
pub fn save_depth16(width: usize, height: usize, values: &[u32], path: &Path) -> Result<()> {
    if let Some(v) = values.iter().find(|&&v| v > u16::MAX as u32) {
        return Err(Error::Invalid(format!("depth value {v} does not fit 16 bits")));
    }
    let data: Vec<u16> = values.iter().map(|&v| v as u16).collect();
    let img: ImageBuffer<Luma<u16>, Vec<u16>> =
        ImageBuffer::from_raw(width as u32, height as u32, data).ok_or_else(|| {
            Error::Invalid(format!("{} depth values for a {width}x{height} image", values.len()))
        })?;
    save(&DynamicImage::ImageLuma16(img), path)
}

/// Superpixel labels as a 16-bit image.
pub fn save_labels(part: &SuperpixelPartition, path: &Path) -> Result<()> {
    let labels: Vec<u32> = part.labels().to_vec();
    save_depth16(part.width(), part.height(), &labels, path)
}

pub fn load_labels(path: &Path) -> Result<SuperpixelPartition> {
    let raw = load_raw_depth(path)?;
    Ok(SuperpixelPartition::new(raw.width, raw.height, raw.values)?)
}
