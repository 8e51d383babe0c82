//! The 20×20 grid, low-level depth-contrast layers and color layers for a
//! focused superpixel, and assembly into a network input stack.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;
use core::ops::Range;

use crate::color::{lab_distance, lab_image};
use crate::error::{Error, Result};
use crate::raster::{DepthImage, RgbImage};
use crate::slic::{DepthHistogram, SuperpixelPartition, SuperpixelStats};

pub use crate::slic::{chi_square, chi_square_normalized};

/// Grid cells per side.
pub const GRID: usize = 20;
/// Cells per layer.
pub const CELLS: usize = GRID * GRID;

/// One 20×20 layer, row-major (`row * 20 + col`).
pub type FeatureMap = [f64; CELLS];

/// Floor-based subdivision of a `width × height` image into 20×20 cells.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GridGeometry {
    width: usize,
    height: usize,
    row_of: Vec<u16>,
    col_of: Vec<u16>,
}

impl GridGeometry {
    pub fn new(width: usize, height: usize) -> Result<Self> {
        if width < GRID || height < GRID {
            return Err(Error::ImageTooSmall {
                width,
                height,
                min: GRID,
            });
        }
        let mut geom = GridGeometry {
            width,
            height,
            row_of: vec![0; height],
            col_of: vec![0; width],
        };
        for i in 0..GRID {
            for y in geom.row_span(i) {
                geom.row_of[y] = i as u16;
            }
            for x in geom.col_span(i) {
                geom.col_of[x] = i as u16;
            }
        }
        Ok(geom)
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    /// Rows covered by grid row `i`: `[floor(i H / 20), floor((i+1) H / 20))`.
    pub fn row_span(&self, i: usize) -> Range<usize> {
        (i * self.height / GRID)..((i + 1) * self.height / GRID)
    }

    /// Columns covered by grid column `j`.
    pub fn col_span(&self, j: usize) -> Range<usize> {
        (j * self.width / GRID)..((j + 1) * self.width / GRID)
    }

    pub fn cell_area(&self, cell: usize) -> usize {
        self.row_span(cell / GRID).len() * self.col_span(cell % GRID).len()
    }

    pub fn max_cell_area(&self) -> usize {
        (0..CELLS).map(|c| self.cell_area(c)).max().unwrap_or(0)
    }

    #[inline]
    pub fn cell_of(&self, x: usize, y: usize) -> usize {
        self.row_of[y] as usize * GRID + self.col_of[x] as usize
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GridStats {
    pub geometry: GridGeometry,
    pub mean_depth: Vec<f64>,
    pub depth_hist: Vec<DepthHistogram>,
    pub mean_lab: Vec<[f64; 3]>,
}

pub fn grid_stats(depth: &DepthImage, rgb: &RgbImage) -> Result<GridStats> {
    let (w, h) = depth.dims();
    rgb.ensure_dims((w, h))?;
    let geometry = GridGeometry::new(w, h)?;
    let lab = lab_image(rgb);
    let mut sum = vec![0.0; CELLS];
    let mut lab_sum = vec![[0.0; 3]; CELLS];
    let mut hist = vec![DepthHistogram::default(); CELLS];
    for y in 0..h {
        for x in 0..w {
            let c = geometry.cell_of(x, y);
            let d = *depth.get(x, y);
            sum[c] += d;
            hist[c].add(d);
            let p = lab.get(x, y);
            for k in 0..3 {
                lab_sum[c][k] += p[k];
            }
        }
    }
    let mut mean_depth = Vec::with_capacity(CELLS);
    let mut mean_lab = Vec::with_capacity(CELLS);
    for c in 0..CELLS {
        let n = geometry.cell_area(c) as f64;
        mean_depth.push(sum[c] / n);
        mean_lab.push([lab_sum[c][0] / n, lab_sum[c][1] / n, lab_sum[c][2] / n]);
    }
    Ok(GridStats {
        geometry,
        mean_depth,
        depth_hist: hist,
        mean_lab,
    })
}

/// What fills the fourth low-level layer.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum HistogramMode {
    /// χ² distance between the superpixel and each cell histogram.
    #[default]
    Histogram,
    /// The superpixel's mean depth as a constant layer (noisy-depth variant).
    MeanDepth,
}

/// How the focused-superpixel depth layer is laid out.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub enum FocusedLayer<'a> {
    /// `mean_depth(P)` broadcast to every cell.
    #[default]
    Constant,
    /// Superpixel mean depths rasterized over the image and pooled per cell.
    Rasterized(&'a FeatureMap),
}

/// Average-pools a per-superpixel value, painted over its pixels, into the grid.
pub fn rasterize_pool(
    part: &SuperpixelPartition,
    values: &[f64],
    geometry: &GridGeometry,
) -> Result<FeatureMap> {
    if values.len() != part.count() {
        return Err(Error::LengthMismatch {
            expected: part.count(),
            found: values.len(),
        });
    }
    if (part.width(), part.height()) != (geometry.width(), geometry.height()) {
        return Err(Error::DimMismatch {
            expected: (geometry.width(), geometry.height()),
            found: (part.width(), part.height()),
        });
    }
    let mut map = [0.0; CELLS];
    for y in 0..part.height() {
        for x in 0..part.width() {
            map[geometry.cell_of(x, y)] += values[part.label(x, y) as usize];
        }
    }
    for (c, v) in map.iter_mut().enumerate() {
        *v /= geometry.cell_area(c) as f64;
    }
    Ok(map)
}

/// The four depth layers for focused superpixel `p`, scaled to about [0, 1]:
/// own depth, cell depth, their difference and histogram distance.
pub fn low_level_layers(
    p: usize,
    sp: &SuperpixelStats,
    grid: &GridStats,
    mode: HistogramMode,
    focused: FocusedLayer<'_>,
) -> Result<[FeatureMap; 4]> {
    if p >= sp.len() {
        return Err(Error::UnknownSuperpixel(p));
    }
    let own = sp.mean_depth[p];
    let mut layers = [[0.0; CELLS]; 4];
    for c in 0..CELLS {
        layers[0][c] = match focused {
            FocusedLayer::Constant => own / 255.0,
            FocusedLayer::Rasterized(map) => map[c] / 255.0,
        };
        layers[1][c] = grid.mean_depth[c] / 255.0;
        layers[2][c] = layers[0][c] - layers[1][c];
        layers[3][c] = match mode {
            HistogramMode::Histogram => {
                chi_square_normalized(&sp.depth_hist[p].0, &grid.depth_hist[c].0)
            }
            HistogramMode::MeanDepth => own / 255.0,
        };
    }
    Ok(layers)
}

fn scale_lab(lab: &[f64; 3]) -> [f64; 3] {
    [lab[0] / 100.0, (lab[1] + 128.0) / 255.0, (lab[2] + 128.0) / 255.0]
}

/// Seven color layers: the superpixel's Lab (3 constant layers), each cell's
/// Lab (3 layers) and the Lab distance between them.
pub fn color_layers(p: usize, sp: &SuperpixelStats, grid: &GridStats) -> Result<[FeatureMap; 7]> {
    if p >= sp.len() {
        return Err(Error::UnknownSuperpixel(p));
    }
    let own = sp.mean_lab[p];
    let own_scaled = scale_lab(&own);
    let mut layers = [[0.0; CELLS]; 7];
    for c in 0..CELLS {
        let cell = grid.mean_lab[c];
        let cell_scaled = scale_lab(&cell);
        for k in 0..3 {
            layers[k][c] = own_scaled[k];
            layers[3 + k][c] = cell_scaled[k];
        }
        layers[6][c] = lab_distance(&own, &cell) / 150.0;
    }
    Ok(layers)
}

/// `C × 20 × 20` network input. Channel order: 4 low-level depth layers,
/// then 6 BED layers (absent in the no-BED ablation), then 7 color layers
/// when enabled.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureStack {
    channels: usize,
    data: Vec<f64>,
}

impl FeatureStack {
    pub fn zeros(channels: usize) -> Self {
        FeatureStack {
            channels,
            data: vec![0.0; channels * CELLS],
        }
    }

    pub fn from_data(channels: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != channels * CELLS {
            return Err(Error::LengthMismatch {
                expected: channels * CELLS,
                found: data.len(),
            });
        }
        Ok(FeatureStack { channels, data })
    }

    #[inline]
    pub fn channels(&self) -> usize {
        self.channels
    }

    #[inline]
    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn channel(&self, c: usize) -> &[f64] {
        &self.data[c * CELLS..(c + 1) * CELLS]
    }

    pub(crate) fn set_channel(&mut self, c: usize, map: &FeatureMap) {
        self.data[c * CELLS..(c + 1) * CELLS].copy_from_slice(map);
    }
}

pub fn assemble_stack(
    low: &[FeatureMap],
    bed: &[FeatureMap],
    color: &[FeatureMap],
) -> Result<FeatureStack> {
    if low.len() != 4 || !matches!(bed.len(), 0 | 6) || !matches!(color.len(), 0 | 7) {
        return Err(Error::ShapeMismatch(format!(
            "expected 4 low-level, 0 or 6 BED and 0 or 7 color maps, got {}+{}+{}",
            low.len(),
            bed.len(),
            color.len()
        )));
    }
    let mut stack = FeatureStack::zeros(low.len() + bed.len() + color.len());
    for (c, map) in low.iter().chain(bed).chain(color).enumerate() {
        stack.set_channel(c, map);
    }
    Ok(stack)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::raster::Raster;
    use crate::slic::{compute_stats, SuperpixelPartition};

    fn lcg(seed: &mut u64) -> u64 {
        *seed = seed
            .wrapping_mul(6364136223846793005)
            .wrapping_add(1442695040888963407);
        *seed >> 33
    }

    #[test]
    fn spans_tile_324() {
        let g = GridGeometry::new(324, 324).unwrap();
        assert_eq!(g.row_span(0), 0..16);
        assert_eq!(g.col_span(19), 307..324);
        let total: usize = (0..CELLS).map(|c| g.cell_area(c)).sum();
        assert_eq!(total, 324 * 324);
        let mut hits = vec![0u8; 324 * 324];
        for c in 0..CELLS {
            for y in g.row_span(c / GRID) {
                for x in g.col_span(c % GRID) {
                    hits[y * 324 + x] += 1;
                    assert_eq!(g.cell_of(x, y), c);
                }
            }
        }
        assert!(hits.iter().all(|&h| h == 1));
    }

    #[test]
    fn constant_depth_cells() {
        let depth = Raster::filled(60, 47, 80.0);
        let rgb = Raster::filled(60, 47, [1u8, 2, 3]);
        let g = grid_stats(&depth, &rgb).unwrap();
        assert!(g.mean_depth.iter().all(|&m| m == 80.0));
        assert!(matches!(
            grid_stats(&Raster::filled(19, 40, 0.0), &Raster::filled(19, 40, [0u8; 3])),
            Err(Error::ImageTooSmall { .. })
        ));
    }

    #[test]
    fn cell_means_match_double_loop() {
        let mut s = 11;
        let (w, h) = (73, 51);
        let depth = Raster::from_fn(w, h, |_, _| (lcg(&mut s) % 2560) as f64 / 10.0);
        let rgb = Raster::filled(w, h, [0u8; 3]);
        let g = grid_stats(&depth, &rgb).unwrap();
        for i in 0..GRID {
            for j in 0..GRID {
                let (r0, r1) = (i * h / 20, (i + 1) * h / 20);
                let (c0, c1) = (j * w / 20, (j + 1) * w / 20);
                let mut sum = 0.0;
                for y in r0..r1 {
                    for x in c0..c1 {
                        sum += *depth.get(x, y);
                    }
                }
                let mean = sum / ((r1 - r0) * (c1 - c0)) as f64;
                assert!((g.mean_depth[i * GRID + j] - mean).abs() < 1e-9);
                assert_eq!(g.depth_hist[i * GRID + j].total(), ((r1 - r0) * (c1 - c0)) as u64);
            }
        }
    }

    fn two_region_scene(own: f64, other: f64) -> (SuperpixelStats, GridStats) {
        let (w, h) = (40, 40);
        let part = SuperpixelPartition::new(w, h, (0..w * h).map(|i| ((i % w) >= 20) as u32).collect())
            .unwrap();
        let depth = Raster::from_fn(w, h, |x, _| if x < 20 { own } else { other });
        let rgb = Raster::filled(w, h, [128u8, 128, 128]);
        (
            compute_stats(&part, &depth, &rgb).unwrap(),
            grid_stats(&depth, &rgb).unwrap(),
        )
    }

    #[test]
    fn flat_scene_has_no_contrast() {
        let (sp, grid) = two_region_scene(128.0, 128.0);
        let l = low_level_layers(0, &sp, &grid, HistogramMode::Histogram, FocusedLayer::Constant).unwrap();
        assert!(l[2].iter().all(|&v| v == 0.0));
        assert!(l[3].iter().all(|&v| v == 0.0));
        assert!(matches!(
            low_level_layers(5, &sp, &grid, HistogramMode::Histogram, FocusedLayer::Constant),
            Err(Error::UnknownSuperpixel(5))
        ));
    }

    #[test]
    fn contrast_arithmetic() {
        let (sp, grid) = two_region_scene(200.0, 50.0);
        let l = low_level_layers(0, &sp, &grid, HistogramMode::Histogram, FocusedLayer::Constant).unwrap();
        // Cell (0, 19) lies entirely on the depth-50 side.
        assert!((l[2][19] - 150.0 / 255.0).abs() < 1e-12);
        assert_eq!(l[2][0], 0.0);
        // Disjoint unit-mass histograms: chi2 = (1 + 1) / 2.
        assert!((l[3][19] - 1.0).abs() < 1e-12);
        let m = low_level_layers(0, &sp, &grid, HistogramMode::MeanDepth, FocusedLayer::Constant).unwrap();
        assert!(m[3].iter().all(|&v| v == 200.0 / 255.0));
    }

    #[test]
    fn layers_match_naive_recomputation() {
        let mut s = 21;
        let (w, h) = (64, 64);
        let labels: Vec<u32> = (0..w * h).map(|i| (((i % w) / 16) + 4 * ((i / w) / 16)) as u32).collect();
        let part = SuperpixelPartition::new(w, h, labels).unwrap();
        let depth = Raster::from_fn(w, h, |_, _| (lcg(&mut s) % 256) as f64);
        let rgb = Raster::filled(w, h, [0u8; 3]);
        let sp = compute_stats(&part, &depth, &rgb).unwrap();
        let grid = grid_stats(&depth, &rgb).unwrap();
        for p in [0, 5, 15] {
            let l = low_level_layers(p, &sp, &grid, HistogramMode::Histogram, FocusedLayer::Constant).unwrap();
            for c in 0..CELLS {
                let (i, j) = (c / 20, c % 20);
                let mut sum = 0.0;
                let mut cell_hist = [0u32; 8];
                let mut own_hist = [0u32; 8];
                for y in i * h / 20..(i + 1) * h / 20 {
                    for x in j * w / 20..(j + 1) * w / 20 {
                        let d = *depth.get(x, y);
                        sum += d;
                        cell_hist[(d as usize / 32).min(7)] += 1;
                    }
                }
                for y in 0..h {
                    for x in 0..w {
                        if part.label(x, y) as usize == p {
                            own_hist[(*depth.get(x, y) as usize / 32).min(7)] += 1;
                        }
                    }
                }
                let area = ((i + 1) * h / 20 - i * h / 20) * ((j + 1) * w / 20 - j * w / 20);
                let cell_mean = sum / area as f64;
                let own_total: u32 = own_hist.iter().sum();
                let mut chi = 0.0;
                for b in 0..8 {
                    let a = own_hist[b] as f64 / own_total as f64;
                    let bb = cell_hist[b] as f64 / area as f64;
                    if a + bb > 0.0 {
                        chi += (a - bb) * (a - bb) / (a + bb);
                    }
                }
                chi *= 0.5;
                assert!((l[0][c] - sp.mean_depth[p] / 255.0).abs() <= 1e-6);
                assert!((l[1][c] - cell_mean / 255.0).abs() <= 1e-6);
                assert!((l[2][c] - (sp.mean_depth[p] - cell_mean) / 255.0).abs() <= 1e-6);
                assert!((l[3][c] - chi).abs() <= 1e-6);
            }
        }
    }

    #[test]
    fn color_layers_on_gray_and_two_tone_images() {
        let (sp, grid) = two_region_scene(10.0, 10.0);
        let c = color_layers(1, &sp, &grid).unwrap();
        assert!(c[6].iter().all(|&v| v.abs() < 1e-12));
        for k in 0..6 {
            assert!(c[k].iter().all(|&v| (v - c[k][0]).abs() < 1e-12));
        }

        // Red patch (superpixel 0) on a green field (superpixel 1).
        let (w, h) = (40, 40);
        let red = |x: usize, y: usize| (15..25).contains(&x) && (15..25).contains(&y);
        let part =
            SuperpixelPartition::new(w, h, (0..w * h).map(|i| !red(i % w, i / w) as u32).collect()).unwrap();
        let rgb = Raster::from_fn(w, h, |x, y| if red(x, y) { [255, 0, 0] } else { [0, 255, 0] });
        let depth = Raster::filled(w, h, 0.0);
        let sp = compute_stats(&part, &depth, &rgb).unwrap();
        let grid = grid_stats(&depth, &rgb).unwrap();
        let c = color_layers(0, &sp, &grid).unwrap();
        let red_lab = crate::color::rgb_to_lab([255, 0, 0]);
        let green_lab = crate::color::rgb_to_lab([0, 255, 0]);
        let field = lab_distance(&red_lab, &green_lab) / 150.0;
        let max = c[6].iter().cloned().fold(0.0, f64::max);
        assert!((max - field).abs() < 1e-9);
        assert!((c[6][0] - field).abs() < 1e-9);
        // Cell (10, 10) is fully red.
        assert!(c[6][10 * 20 + 10].abs() < 1e-9);
    }

    #[test]
    fn stack_assembly() {
        let m = [0.5; CELLS];
        let low = [[0.0; CELLS], [1.0; CELLS], m, m];
        let bed = [m; 6];
        let color = [m; 7];
        let s = assemble_stack(&low, &bed, &[]).unwrap();
        assert_eq!(s.channels(), 10);
        assert_eq!(s.channel(1)[7], 1.0);
        assert_eq!(assemble_stack(&low, &bed, &color).unwrap().channels(), 17);
        assert_eq!(assemble_stack(&low, &[], &[]).unwrap().channels(), 4);
        assert!(matches!(
            assemble_stack(&low[..3], &bed, &[]),
            Err(Error::ShapeMismatch(_))
        ));
    }
}
