//! SLIC superpixels (Lab + xy k-means from a regular seed grid) and the
//! per-superpixel statistics every feature is built from.

use alloc::collections::VecDeque;
use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use crate::color::lab_image;
use crate::error::{Error, Result};
use crate::math;
use crate::raster::{DepthImage, Raster, RgbImage};

/// Smallest image `segment` accepts, per side.
pub const MIN_SIDE: usize = 18;
/// Number of depth histogram bins over the fixed range [0, 256).
pub const HIST_BINS: usize = 8;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SlicParams {
    pub k_target: usize,
    pub compactness: f64,
    pub iterations: usize,
}

impl Default for SlicParams {
    fn default() -> Self {
        SlicParams {
            k_target: 324,
            compactness: 10.0,
            iterations: 10,
        }
    }
}

impl SlicParams {
    /// Seed spacing `S = sqrt(N / k)`.
    pub fn spacing(&self, width: usize, height: usize) -> f64 {
        math::sqrt((width * height) as f64 / self.k_target.max(1) as f64)
    }

    /// Components smaller than this are merged away: `N / (4 k)`.
    pub fn default_min_size(&self, width: usize, height: usize) -> usize {
        (width * height) / (4 * self.k_target.max(1))
    }
}

/// Per-pixel superpixel labels, compact in `0..count`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SuperpixelPartition {
    width: usize,
    height: usize,
    labels: Vec<u32>,
    count: usize,
}

impl SuperpixelPartition {
    /// Validates that labels cover `0..K` with every label present.
    pub fn new(width: usize, height: usize, labels: Vec<u32>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::EmptyImage);
        }
        if labels.len() != width * height {
            return Err(Error::LengthMismatch {
                expected: width * height,
                found: labels.len(),
            });
        }
        let count = labels.iter().map(|&l| l as usize + 1).max().unwrap_or(0);
        let mut present = vec![false; count];
        for &l in &labels {
            present[l as usize] = true;
        }
        if let Some(missing) = present.iter().position(|&p| !p) {
            return Err(Error::InvalidPartition(format!("label {missing} is unused")));
        }
        Ok(SuperpixelPartition {
            width,
            height,
            labels,
            count,
        })
    }

    #[inline]
    pub fn width(&self) -> usize {
        self.width
    }

    #[inline]
    pub fn height(&self) -> usize {
        self.height
    }

    #[inline]
    pub fn count(&self) -> usize {
        self.count
    }

    #[inline]
    pub fn labels(&self) -> &[u32] {
        &self.labels
    }

    #[inline]
    pub fn label(&self, x: usize, y: usize) -> u32 {
        self.labels[y * self.width + x]
    }

    pub fn into_labels(self) -> Vec<u32> {
        self.labels
    }

    pub fn areas(&self) -> Vec<usize> {
        let mut areas = vec![0; self.count];
        for &l in &self.labels {
            areas[l as usize] += 1;
        }
        areas
    }

    /// Pixels that touch a differently labelled 4-neighbour.
    pub fn boundary_mask(&self) -> Vec<bool> {
        let (w, h) = (self.width, self.height);
        let mut mask = vec![false; w * h];
        for y in 0..h {
            for x in 0..w {
                let l = self.label(x, y);
                mask[y * w + x] = (x + 1 < w && self.label(x + 1, y) != l)
                    || (y + 1 < h && self.label(x, y + 1) != l)
                    || (x > 0 && self.label(x - 1, y) != l)
                    || (y > 0 && self.label(x, y - 1) != l);
            }
        }
        mask
    }
}

#[derive(Clone, Copy)]
struct Center {
    lab: [f64; 3],
    x: f64,
    y: f64,
}

/// Runs SLIC and then merges components smaller than `N / (4 k)`.
pub fn segment(rgb: &RgbImage, params: &SlicParams) -> Result<SuperpixelPartition> {
    let (w, h) = rgb.dims();
    if w < MIN_SIDE || h < MIN_SIDE {
        return Err(Error::ImageTooSmall {
            width: w,
            height: h,
            min: MIN_SIDE,
        });
    }
    if params.k_target == 0 || !(params.compactness >= 0.0) {
        return Err(Error::InvalidParameter(format!("{params:?}")));
    }
    let lab = lab_image(rgb);
    let s = params.spacing(w, h);
    let nx = (math::round(w as f64 / s) as usize).clamp(1, w);
    let ny = (math::round(h as f64 / s) as usize).clamp(1, h);
    let (step_x, step_y) = (w as f64 / nx as f64, h as f64 / ny as f64);

    let mut centers = Vec::with_capacity(nx * ny);
    for j in 0..ny {
        for i in 0..nx {
            let mut cx = math::floor((i as f64 + 0.5) * step_x) as usize;
            let mut cy = math::floor((j as f64 + 0.5) * step_y) as usize;
            if s >= 3.0 {
                (cx, cy) = lowest_gradient_near(&lab, cx, cy);
            }
            centers.push(Center {
                lab: *lab.get(cx, cy),
                x: cx as f64,
                y: cy as f64,
            });
        }
    }

    // Every pixel starts in its seed cell so none is left unlabelled.
    let mut labels: Vec<u32> = (0..w * h)
        .map(|idx| {
            let (x, y) = (idx % w, idx / w);
            let i = ((x as f64 / step_x) as usize).min(nx - 1);
            let j = ((y as f64 / step_y) as usize).min(ny - 1);
            (j * nx + i) as u32
        })
        .collect();
    let mut dist = vec![f64::INFINITY; w * h];
    let spatial_weight = params.compactness / s;
    let reach = math::ceil(s) as isize;

    for _ in 0..params.iterations {
        dist.fill(f64::INFINITY);
        for (c_idx, c) in centers.iter().enumerate() {
            let (cx, cy) = (math::round(c.x) as isize, math::round(c.y) as isize);
            let x0 = (cx - reach).max(0) as usize;
            let x1 = ((cx + reach) as usize).min(w - 1);
            let y0 = (cy - reach).max(0) as usize;
            let y1 = ((cy + reach) as usize).min(h - 1);
            for y in y0..=y1 {
                for x in x0..=x1 {
                    let p = lab.get(x, y);
                    let d_lab = math::sqrt(
                        math::sq(p[0] - c.lab[0])
                            + math::sq(p[1] - c.lab[1])
                            + math::sq(p[2] - c.lab[2]),
                    );
                    let d_xy = math::sqrt(math::sq(x as f64 - c.x) + math::sq(y as f64 - c.y));
                    let d = d_lab + spatial_weight * d_xy;
                    let idx = y * w + x;
                    if d < dist[idx] {
                        dist[idx] = d;
                        labels[idx] = c_idx as u32;
                    }
                }
            }
        }
        let mut sums = vec![[0.0f64; 6]; centers.len()];
        for (idx, &l) in labels.iter().enumerate() {
            let p = lab.data()[idx];
            let acc = &mut sums[l as usize];
            acc[0] += p[0];
            acc[1] += p[1];
            acc[2] += p[2];
            acc[3] += (idx % w) as f64;
            acc[4] += (idx / w) as f64;
            acc[5] += 1.0;
        }
        for (c, acc) in centers.iter_mut().zip(&sums) {
            if acc[5] > 0.0 {
                let n = acc[5];
                *c = Center {
                    lab: [acc[0] / n, acc[1] / n, acc[2] / n],
                    x: acc[3] / n,
                    y: acc[4] / n,
                };
            }
        }
    }

    let min_size = params.default_min_size(w, h);
    Ok(enforce_connectivity_raw(w, h, &labels, min_size))
}

fn lowest_gradient_near(lab: &Raster<[f64; 3]>, cx: usize, cy: usize) -> (usize, usize) {
    let (w, h) = lab.dims();
    let grad = |x: usize, y: usize| -> f64 {
        let d = |a: &[f64; 3], b: &[f64; 3]| {
            math::sq(a[0] - b[0]) + math::sq(a[1] - b[1]) + math::sq(a[2] - b[2])
        };
        d(lab.get((x + 1).min(w - 1), y), lab.get(x.saturating_sub(1), y))
            + d(lab.get(x, (y + 1).min(h - 1)), lab.get(x, y.saturating_sub(1)))
    };
    let mut best = (cx, cy);
    let mut best_g = grad(cx, cy);
    for y in cy.saturating_sub(1)..=(cy + 1).min(h - 1) {
        for x in cx.saturating_sub(1)..=(cx + 1).min(w - 1) {
            let g = grad(x, y);
            if g < best_g {
                best_g = g;
                best = (x, y);
            }
        }
    }
    best
}

/// Splits labels into 4-connected components, merges every component
/// smaller than `min_size` into its largest adjacent region, and compacts
/// labels to `0..K'` keeping the original label order.
pub fn enforce_connectivity(part: &SuperpixelPartition, min_size: usize) -> SuperpixelPartition {
    enforce_connectivity_raw(part.width, part.height, &part.labels, min_size)
}

fn find(parent: &mut [usize], mut i: usize) -> usize {
    while parent[i] != i {
        parent[i] = parent[parent[i]];
        i = parent[i];
    }
    i
}

fn enforce_connectivity_raw(
    w: usize,
    h: usize,
    labels: &[u32],
    min_size: usize,
) -> SuperpixelPartition {
    let n = w * h;
    const NONE: usize = usize::MAX;
    let mut comp = vec![NONE; n];
    let mut comp_label: Vec<u32> = Vec::new();
    let mut comp_first: Vec<usize> = Vec::new();
    let mut size: Vec<usize> = Vec::new();
    let mut queue = VecDeque::new();
    for start in 0..n {
        if comp[start] != NONE {
            continue;
        }
        let id = size.len();
        let l = labels[start];
        comp[start] = id;
        queue.push_back(start);
        let mut count = 0;
        while let Some(i) = queue.pop_front() {
            count += 1;
            let (x, y) = (i % w, i / w);
            let mut push = |j: usize| {
                if comp[j] == NONE && labels[j] == l {
                    comp[j] = id;
                    queue.push_back(j);
                }
            };
            if x > 0 {
                push(i - 1);
            }
            if x + 1 < w {
                push(i + 1);
            }
            if y > 0 {
                push(i - w);
            }
            if y + 1 < h {
                push(i + w);
            }
        }
        comp_label.push(l);
        comp_first.push(start);
        size.push(count);
    }

    let n_comp = size.len();
    let mut parent: Vec<usize> = (0..n_comp).collect();
    loop {
        let mut edges: Vec<(usize, usize)> = Vec::new();
        for y in 0..h {
            for x in 0..w {
                let a = find(&mut parent, comp[y * w + x]);
                if x + 1 < w {
                    let b = find(&mut parent, comp[y * w + x + 1]);
                    if a != b {
                        edges.push((a.min(b), a.max(b)));
                    }
                }
                if y + 1 < h {
                    let b = find(&mut parent, comp[(y + 1) * w + x]);
                    if a != b {
                        edges.push((a.min(b), a.max(b)));
                    }
                }
            }
        }
        edges.sort_unstable();
        edges.dedup();
        let mut neighbours: Vec<Vec<usize>> = vec![Vec::new(); n_comp];
        for &(a, b) in &edges {
            neighbours[a].push(b);
            neighbours[b].push(a);
        }
        let mut small: Vec<usize> = (0..n_comp)
            .filter(|&c| parent[c] == c && size[c] < min_size && !neighbours[c].is_empty())
            .collect();
        if small.is_empty() {
            break;
        }
        small.sort_by_key(|&c| (size[c], c));
        let mut merged = false;
        for c in small {
            if find(&mut parent, c) != c || size[c] >= min_size {
                continue;
            }
            let mut target = NONE;
            for &nb in &neighbours[c] {
                let r = find(&mut parent, nb);
                if r == c {
                    continue;
                }
                if target == NONE || size[r] > size[target] || (size[r] == size[target] && r < target)
                {
                    target = r;
                }
            }
            if target != NONE {
                parent[c] = target;
                size[target] += size[c];
                merged = true;
            }
        }
        if !merged {
            break;
        }
    }

    let mut roots: Vec<usize> = (0..n_comp).filter(|&c| find(&mut parent, c) == c).collect();
    roots.sort_by_key(|&c| (comp_label[c], comp_first[c]));
    let mut new_label = vec![0u32; n_comp];
    for (i, &r) in roots.iter().enumerate() {
        new_label[r] = i as u32;
    }
    let out: Vec<u32> = comp
        .iter()
        .map(|&c| new_label[find(&mut parent, c)])
        .collect();
    SuperpixelPartition {
        width: w,
        height: h,
        labels: out,
        count: roots.len(),
    }
}

/// Counts of depth values in eight equal bins over [0, 256).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct DepthHistogram(pub [u32; HIST_BINS]);

impl DepthHistogram {
    #[inline]
    pub fn bin(depth: f64) -> usize {
        ((depth / 32.0) as usize).min(HIST_BINS - 1)
    }

    #[inline]
    pub fn add(&mut self, depth: f64) {
        self.0[Self::bin(depth)] += 1;
    }

    pub fn total(&self) -> u64 {
        self.0.iter().map(|&c| c as u64).sum()
    }

    /// Half the sum of `(x_i - y_i)^2 / (x_i + y_i)`, empty bins contributing 0.
    pub fn chi_square(&self, other: &DepthHistogram) -> f64 {
        chi_square(&self.0, &other.0)
    }
}

/// χ² histogram distance; bins where both counts are zero contribute 0.
pub fn chi_square(x: &[u32; HIST_BINS], y: &[u32; HIST_BINS]) -> f64 {
    let mut sum = 0.0;
    for (&a, &b) in x.iter().zip(y) {
        let denom = a as f64 + b as f64;
        if denom > 0.0 {
            let d = a as f64 - b as f64;
            sum += d * d / denom;
        }
    }
    0.5 * sum
}

/// χ² between the two histograms after scaling each to unit mass, so
/// regions of different size with the same depth distribution score 0.
/// Equivalent to rescaling both to any common mass `A` and dividing by `A`.
pub fn chi_square_normalized(x: &[u32; HIST_BINS], y: &[u32; HIST_BINS]) -> f64 {
    let tx: u64 = x.iter().map(|&c| c as u64).sum();
    let ty: u64 = y.iter().map(|&c| c as u64).sum();
    let (sx, sy) = (1.0 / tx.max(1) as f64, 1.0 / ty.max(1) as f64);
    let mut sum = 0.0;
    for (&a, &b) in x.iter().zip(y) {
        let (a, b) = (a as f64 * sx, b as f64 * sy);
        if a + b > 0.0 {
            sum += (a - b) * (a - b) / (a + b);
        }
    }
    0.5 * sum
}

#[derive(Debug, Clone, PartialEq)]
pub struct SuperpixelStats {
    pub mean_depth: Vec<f64>,
    /// Mean pixel-index coordinates `(x, y)`.
    pub centroid: Vec<(f64, f64)>,
    pub area: Vec<usize>,
    pub depth_hist: Vec<DepthHistogram>,
    pub mean_lab: Vec<[f64; 3]>,
}

impl SuperpixelStats {
    pub fn len(&self) -> usize {
        self.mean_depth.len()
    }

    pub fn is_empty(&self) -> bool {
        self.mean_depth.is_empty()
    }
}

pub fn compute_stats(
    part: &SuperpixelPartition,
    depth: &DepthImage,
    rgb: &RgbImage,
) -> Result<SuperpixelStats> {
    let dims = (part.width, part.height);
    depth.ensure_dims(dims)?;
    rgb.ensure_dims(dims)?;
    let k = part.count;
    let lab = lab_image(rgb);
    let mut depth_sum = vec![0.0; k];
    let mut xy_sum = vec![(0.0, 0.0); k];
    let mut lab_sum = vec![[0.0; 3]; k];
    let mut area = vec![0usize; k];
    let mut hist = vec![DepthHistogram::default(); k];
    for (idx, &l) in part.labels.iter().enumerate() {
        let l = l as usize;
        let d = depth.data()[idx];
        depth_sum[l] += d;
        xy_sum[l].0 += (idx % part.width) as f64;
        xy_sum[l].1 += (idx / part.width) as f64;
        let p = lab.data()[idx];
        for c in 0..3 {
            lab_sum[l][c] += p[c];
        }
        area[l] += 1;
        hist[l].add(d);
    }
    let mut stats = SuperpixelStats {
        mean_depth: Vec::with_capacity(k),
        centroid: Vec::with_capacity(k),
        area,
        depth_hist: hist,
        mean_lab: Vec::with_capacity(k),
    };
    for l in 0..k {
        let n = stats.area[l] as f64;
        stats.mean_depth.push(depth_sum[l] / n);
        stats.centroid.push((xy_sum[l].0 / n, xy_sum[l].1 / n));
        stats
            .mean_lab
            .push([lab_sum[l][0] / n, lab_sum[l][1] / n, lab_sum[l][2] / n]);
    }
    Ok(stats)
}
