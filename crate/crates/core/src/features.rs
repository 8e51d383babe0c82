//! Per-image feature extraction and on-demand stack assembly.
//!
//! [`ImageFeatures`] keeps only what stack assembly needs (superpixel and
//! grid statistics plus pooled BED layers), so thousands of augmented
//! images fit in memory; full `C × 20 × 20` stacks are built per sample.

use alloc::vec;
use alloc::vec::Vec;

use crate::bed::{bed_descriptors, bed_layers, BedDescriptor, BedParams};
use crate::depth::{normalize_depth, resize_sample, NormalizeOptions};
use crate::error::{Error, Result};
use crate::lowfeat::{
    assemble_stack, color_layers, grid_stats, low_level_layers, rasterize_pool, FeatureMap,
    FeatureStack, FocusedLayer, GridStats, HistogramMode,
};
use crate::model::Network;
use crate::raster::{DepthImage, GroundTruth, RawDepthImage, Raster, RgbImage, SaliencyMap};
use crate::slic::{compute_stats, segment, SlicParams, SuperpixelPartition, SuperpixelStats};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum FocusedMode {
    #[default]
    Constant,
    Rasterized,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FeatureParams {
    pub slic: SlicParams,
    /// `sigma` is ignored; it is measured per image.
    pub bed: BedParams,
    pub use_bed: bool,
    pub color: bool,
    pub histogram: HistogramMode,
    pub focused: FocusedMode,
}

impl Default for FeatureParams {
    fn default() -> Self {
        FeatureParams {
            slic: SlicParams::default(),
            bed: BedParams::default(),
            use_bed: true,
            color: false,
            histogram: HistogramMode::default(),
            focused: FocusedMode::default(),
        }
    }
}

impl FeatureParams {
    /// Channels of every stack built with these parameters.
    pub fn channels(&self) -> usize {
        4 + if self.use_bed { 2 * self.bed.q } else { 0 } + if self.color { 7 } else { 0 }
    }
}

/// Normalizes raw depth and brings the triple to `side × side`.
pub fn prepare_sample(
    rgb: &RgbImage,
    raw_depth: &RawDepthImage,
    gt: &GroundTruth,
    normalize: &NormalizeOptions,
    side: usize,
) -> Result<(RgbImage, DepthImage, GroundTruth)> {
    let depth = normalize_depth(raw_depth, normalize)?;
    depth.ensure_dims(rgb.dims())?;
    gt.ensure_dims(rgb.dims())?;
    resize_sample(rgb, &depth, gt, side)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ImageFeatures {
    pub params: FeatureParams,
    pub stats: SuperpixelStats,
    pub grid: GridStats,
    pub descriptors: Vec<BedDescriptor>,
    /// Pooled BED layers; empty when BED is disabled.
    pub bed_maps: Vec<FeatureMap>,
    pub focused_map: Option<FeatureMap>,
    /// Mean ground truth per superpixel, when ground truth was given.
    pub targets: Option<Vec<f64>>,
}

/// Mean ground-truth value over each superpixel.
pub fn superpixel_targets(part: &SuperpixelPartition, gt: &GroundTruth) -> Result<Vec<f64>> {
    gt.ensure_dims((part.width(), part.height()))?;
    let mut sum = vec![0.0; part.count()];
    for (&l, &v) in part.labels().iter().zip(gt.data()) {
        sum[l as usize] += v;
    }
    Ok(sum
        .iter()
        .zip(part.areas())
        .map(|(s, a)| s / a as f64)
        .collect())
}

/// Segments a prepared sample and computes everything needed for stacks.
pub fn extract(
    rgb: &RgbImage,
    depth: &DepthImage,
    gt: Option<&GroundTruth>,
    params: &FeatureParams,
) -> Result<(SuperpixelPartition, ImageFeatures)> {
    depth.ensure_dims(rgb.dims())?;
    let part = segment(rgb, &params.slic)?;
    let feats = extract_with_partition(&part, rgb, depth, gt, params)?;
    Ok((part, feats))
}

/// As [`extract`] for an existing partition.
pub fn extract_with_partition(
    part: &SuperpixelPartition,
    rgb: &RgbImage,
    depth: &DepthImage,
    gt: Option<&GroundTruth>,
    params: &FeatureParams,
) -> Result<ImageFeatures> {
    extract_with_descriptors(part, rgb, depth, gt, params, None)
}

/// As [`extract_with_partition`], reusing BED descriptors computed earlier
/// for the same partition and parameters.
pub fn extract_with_descriptors(
    part: &SuperpixelPartition,
    rgb: &RgbImage,
    depth: &DepthImage,
    gt: Option<&GroundTruth>,
    params: &FeatureParams,
    descriptors: Option<Vec<BedDescriptor>>,
) -> Result<ImageFeatures> {
    let stats = compute_stats(part, depth, rgb)?;
    let grid = grid_stats(depth, rgb)?;
    let (descriptors, bed_maps) = if params.use_bed {
        let d = match descriptors {
            Some(d) => {
                if d.len() != part.count() || d.iter().any(|x| x.ff.len() != params.bed.q || x.gg.len() != params.bed.q) {
                    return Err(Error::ShapeMismatch("cached BED descriptors do not fit the partition".into()));
                }
                d
            }
            None => bed_descriptors(&stats, part, &params.bed.with_sigma_of(&stats))?,
        };
        let maps = bed_layers(&d, part, &grid.geometry)?;
        (d, maps)
    } else {
        (Vec::new(), Vec::new())
    };
    let focused_map = match params.focused {
        FocusedMode::Constant => None,
        FocusedMode::Rasterized => Some(rasterize_pool(part, &stats.mean_depth, &grid.geometry)?),
    };
    let targets = gt.map(|g| superpixel_targets(part, g)).transpose()?;
    Ok(ImageFeatures {
        params: *params,
        stats,
        grid,
        descriptors,
        bed_maps,
        focused_map,
        targets,
    })
}

impl ImageFeatures {
    pub fn superpixels(&self) -> usize {
        self.stats.len()
    }

    pub fn channels(&self) -> usize {
        self.params.channels()
    }

    /// Network input for focused superpixel `p`.
    pub fn stack(&self, p: usize) -> Result<FeatureStack> {
        let focused = match &self.focused_map {
            Some(m) => FocusedLayer::Rasterized(m),
            None => FocusedLayer::Constant,
        };
        let low = low_level_layers(p, &self.stats, &self.grid, self.params.histogram, focused)?;
        let color = if self.params.color {
            color_layers(p, &self.stats, &self.grid)?.to_vec()
        } else {
            Vec::new()
        };
        assemble_stack(&low, &self.bed_maps, &color)
    }

    pub fn target(&self, p: usize) -> Result<f64> {
        let t = self.targets.as_ref().ok_or(Error::EmptyTrainSet)?;
        t.get(p).copied().ok_or(Error::UnknownSuperpixel(p))
    }
}

/// Scores every superpixel and paints each score over its pixels.
pub fn predict(net: &Network, feats: &ImageFeatures, part: &SuperpixelPartition) -> Result<SaliencyMap> {
    if part.count() != feats.superpixels() {
        return Err(Error::LengthMismatch {
            expected: feats.superpixels(),
            found: part.count(),
        });
    }
    let mut scores = Vec::with_capacity(part.count());
    for lo in (0..part.count()).step_by(crate::train::CHUNK) {
        let hi = (lo + crate::train::CHUNK).min(part.count());
        let stacks = (lo..hi).map(|p| feats.stack(p)).collect::<Result<Vec<_>>>()?;
        scores.extend(net.forward_batch(&stacks.iter().collect::<Vec<_>>())?);
    }
    Ok(paint_scores(part, &scores))
}

/// Map in which every pixel carries its superpixel's score.
pub fn paint_scores(part: &SuperpixelPartition, scores: &[f64]) -> SaliencyMap {
    let data = part.labels().iter().map(|&l| scores[l as usize]).collect();
    Raster::new(part.width(), part.height(), data).expect("partition dims are valid")
}
