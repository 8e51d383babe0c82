//! Background enclosure distribution (BED).
//!
//! For a superpixel `P` and depth margin `t`, the background set is every
//! superpixel whose mean depth exceeds `depth(P) + t`. Rays leave the
//! centroid of `P` in `n_dir` evenly spaced directions and record every other
//! superpixel they cross. A direction *qualifies* when nothing crossed is
//! nearer than `P` and at least one crossed superpixel is in the background
//! set.
//!
//! * `f(P, t)` is the qualifying fraction of directions.
//! * `g(P, t)` is the longest circular run of non-qualifying directions, as a
//!   fraction of the circle.
//!
//! The descriptor integrates `f` and `1 - g` over `q` slices of `[0, σ]`,
//! where `σ` is the standard deviation of the image's superpixel mean depths.
//! Both are step functions of `t` whose jumps sit at `max_depth_k - depth(P)`
//! for each direction `k`, so each slice integral is evaluated exactly from
//! those breakpoints; the midpoint rule over `n_t` samples is kept as an
//! option.
//!
//! [`oracle`] is an independent dense implementation (360 rays, half-pixel
//! marching) used to validate the fast path.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;
use core::f64::consts::PI;

use crate::error::{Error, Result};
use crate::lowfeat::{rasterize_pool, FeatureMap, GridGeometry};
use crate::math;
use crate::slic::{SuperpixelPartition, SuperpixelStats};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Integration {
    /// Exact integral of the piecewise-constant `f` and `1 - g`.
    #[default]
    Exact,
    /// Mean over `n_t` midpoints of equal sub-intervals.
    Midpoint,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BedParams {
    /// Number of depth slices per distribution.
    pub q: usize,
    /// Angular samples around the circle.
    pub n_dir: usize,
    /// Threshold samples per slice in [`Integration::Midpoint`] mode.
    pub n_t: usize,
    /// Standard deviation of this image's superpixel mean depths.
    pub sigma: f64,
    /// Fixed marching step in pixels; `None` visits every pixel a ray crosses.
    pub ray_step: Option<f64>,
    pub integration: Integration,
    /// Divide slice integrals by the slice width `σ / q` so values lie in [0, 1].
    pub normalize: bool,
}

impl Default for BedParams {
    fn default() -> Self {
        BedParams {
            q: 3,
            n_dir: 360,
            n_t: 5,
            sigma: 0.0,
            ray_step: Some(0.5),
            integration: Integration::Exact,
            normalize: true,
        }
    }
}

impl BedParams {
    pub fn validate(&self) -> Result<()> {
        let step_ok = self.ray_step.is_none_or(|s| s > 0.0 && s.is_finite());
        if self.q < 1 || self.n_dir < 8 || self.n_t < 1 || !(self.sigma >= 0.0) || !step_ok {
            return Err(Error::InvalidParameter(format!("{self:?}")));
        }
        Ok(())
    }

    /// Same parameters with `sigma` measured from `stats`.
    pub fn with_sigma_of(self, stats: &SuperpixelStats) -> Self {
        BedParams {
            sigma: depth_sigma(&stats.mean_depth),
            ..self
        }
    }

    /// Lower and upper margin of slice `s` (0-based).
    pub fn slice_bounds(&self, s: usize) -> (f64, f64) {
        let width = self.sigma / self.q as f64;
        (s as f64 * width, (s + 1) as f64 * width)
    }
}

/// Population standard deviation of superpixel mean depths.
pub fn depth_sigma(mean_depths: &[f64]) -> f64 {
    if mean_depths.is_empty() {
        return 0.0;
    }
    let n = mean_depths.len() as f64;
    let mean = mean_depths.iter().sum::<f64>() / n;
    let var = mean_depths.iter().map(|d| (d - mean) * (d - mean)).sum::<f64>() / n;
    math::sqrt(var)
}

/// Superpixels strictly deeper than `depth(P) + t`.
pub fn background_set(p: usize, t: f64, stats: &SuperpixelStats) -> Vec<usize> {
    let limit = stats.mean_depth[p] + t;
    (0..stats.len())
        .filter(|&q| stats.mean_depth[q] > limit)
        .collect()
}

/// Ray origin for a superpixel: its centroid in continuous image coordinates,
/// where pixel `(x, y)` covers `[x, x+1) × [y, y+1)`.
pub fn ray_origin(p: usize, stats: &SuperpixelStats) -> (f64, f64) {
    let (cx, cy) = stats.centroid[p];
    (cx + 0.5, cy + 0.5)
}

/// Visits every pixel a ray enters, in order, until it leaves the image or
/// `visit` returns `false` (grid traversal after Amanatides and Woo).
fn traverse_exact(
    origin: (f64, f64),
    dir: (f64, f64),
    width: usize,
    height: usize,
    mut visit: impl FnMut(usize, usize) -> bool,
) {
    let (ox, oy) = origin;
    let (dx, dy) = dir;
    let mut ix = math::floor(ox) as isize;
    let mut iy = math::floor(oy) as isize;
    let axis = |o: f64, d: f64, i: isize| -> (isize, f64, f64) {
        if d > 0.0 {
            (1, ((i + 1) as f64 - o) / d, 1.0 / d)
        } else if d < 0.0 {
            (-1, (i as f64 - o) / d, -1.0 / d)
        } else {
            (0, f64::INFINITY, f64::INFINITY)
        }
    };
    let (sx, mut tx, ddx) = axis(ox, dx, ix);
    let (sy, mut ty, ddy) = axis(oy, dy, iy);
    while ix >= 0 && iy >= 0 && (ix as usize) < width && (iy as usize) < height {
        if !visit(ix as usize, iy as usize) {
            return;
        }
        if tx < ty {
            ix += sx;
            tx += ddx;
        } else {
            iy += sy;
            ty += ddy;
        }
    }
}

/// Marches in fixed steps from the origin, visiting the pixel under each
/// sample point (consecutive repeats of the same pixel are visited once)
/// until the ray leaves the image or `visit` returns `false`.
fn traverse_stepped(
    origin: (f64, f64),
    dir: (f64, f64),
    step: f64,
    width: usize,
    height: usize,
    mut visit: impl FnMut(usize, usize) -> bool,
) {
    let (w, h) = (width as f64, height as f64);
    let (sx, sy) = (step * dir.0, step * dir.1);
    let (mut x, mut y) = origin;
    let mut last = usize::MAX;
    while x >= 0.0 && y >= 0.0 && x < w && y < h {
        let (ix, iy) = (x as usize, y as usize);
        let idx = iy * width + ix;
        if idx != last {
            last = idx;
            if !visit(ix, iy) {
                return;
            }
        }
        x += sx;
        y += sy;
    }
}

/// Non-qualifying directions on a circle of `n`, with the longest run of
/// consecutive members. Lengths are kept valid at run endpoints only.
struct Runs {
    n: usize,
    member: Vec<bool>,
    len: Vec<usize>,
    count: usize,
    longest: usize,
}

impl Runs {
    fn new(n: usize) -> Self {
        Runs {
            n,
            member: vec![false; n],
            len: vec![0; n],
            count: 0,
            longest: 0,
        }
    }

    fn insert(&mut self, k: usize) {
        if self.member[k] {
            return;
        }
        let n = self.n;
        let (prev, next) = ((k + n - 1) % n, (k + 1) % n);
        let left = if self.member[prev] { self.len[prev] } else { 0 };
        let right = if self.member[next] { self.len[next] } else { 0 };
        self.member[k] = true;
        self.count += 1;
        let total = left + 1 + right;
        if total >= n || self.count == n {
            // The run closed on itself.
            self.longest = n;
            return;
        }
        self.len[(k + n - left) % n] = total;
        self.len[(k + right) % n] = total;
        self.longest = self.longest.max(total);
    }

    fn f(&self) -> f64 {
        (self.n - self.count) as f64 / self.n as f64
    }

    fn g(&self) -> f64 {
        self.longest as f64 / self.n as f64
    }
}

/// What each of the `n_dir` rays from a superpixel's centroid sees. The
/// in-front test does not depend on `t`, so one cast serves every margin.
#[derive(Debug, Clone, PartialEq)]
pub struct DirectionProfile {
    depth: f64,
    /// No crossed superpixel is nearer than `P`.
    clear: Vec<bool>,
    /// Deepest crossed superpixel, `-inf` when the ray crossed none. Only
    /// meaningful for clear directions; blocked rays stop early.
    farthest: Vec<f64>,
}

impl DirectionProfile {
    pub fn cast(
        p: usize,
        stats: &SuperpixelStats,
        part: &SuperpixelPartition,
        params: &BedParams,
    ) -> Result<Self> {
        if p >= part.count() || p >= stats.len() {
            return Err(Error::UnknownSuperpixel(p));
        }
        let depth = stats.mean_depth[p];
        let origin = ray_origin(p, stats);
        let (w, h) = (part.width(), part.height());
        let labels = part.labels();
        let mut clear = Vec::with_capacity(params.n_dir);
        let mut farthest = Vec::with_capacity(params.n_dir);
        for k in 0..params.n_dir {
            let theta = 2.0 * PI * k as f64 / params.n_dir as f64;
            let dir = (math::cos(theta), math::sin(theta));
            let mut blocked = false;
            let mut deepest = f64::NEG_INFINITY;
            // A nearer superpixel rules the direction out for every margin,
            // so the rest of the ray is irrelevant.
            let mut visit = |x: usize, y: usize| {
                let l = labels[y * w + x] as usize;
                if l != p {
                    let d = stats.mean_depth[l];
                    if d < depth {
                        blocked = true;
                        return false;
                    }
                    if d > deepest {
                        deepest = d;
                    }
                }
                true
            };
            match params.ray_step {
                None => traverse_exact(origin, dir, w, h, &mut visit),
                Some(step) => traverse_stepped(origin, dir, step, w, h, &mut visit),
            }
            clear.push(!blocked);
            farthest.push(deepest);
        }
        Ok(DirectionProfile {
            depth,
            clear,
            farthest,
        })
    }

    pub fn n_dir(&self) -> usize {
        self.clear.len()
    }

    #[inline]
    pub fn qualifies(&self, k: usize, t: f64) -> bool {
        self.clear[k] && self.farthest[k] - self.depth > t
    }

    pub fn foreground_fraction(&self, t: f64) -> f64 {
        let n = (0..self.n_dir()).filter(|&k| self.qualifies(k, t)).count();
        n as f64 / self.n_dir() as f64
    }

    pub fn opposing_gap(&self, t: f64) -> f64 {
        let n = self.n_dir();
        let Some(start) = (0..n).find(|&k| self.qualifies(k, t)) else {
            return 1.0;
        };
        let mut longest = 0;
        let mut run = 0;
        for i in 1..=n {
            if self.qualifies((start + i) % n, t) {
                run = 0;
            } else {
                run += 1;
                longest = longest.max(run);
            }
        }
        longest as f64 / n as f64
    }

    /// `f` and `g` as step functions of `t ≥ 0`: entries `(t_i, f_i, g_i)`
    /// hold on `(t_i, t_{i+1})`, the last one up to infinity. Built in one
    /// sweep over the sorted breakpoints, merging non-qualifying runs as
    /// directions drop out.
    pub fn pieces(&self) -> Vec<(f64, f64, f64)> {
        let n = self.n_dir();
        let mut cuts: Vec<(f64, usize)> = (0..n)
            .filter(|&k| self.clear[k])
            .map(|k| (self.farthest[k] - self.depth, k))
            .collect();
        cuts.sort_by(|a, b| a.0.total_cmp(&b.0));
        let mut runs = Runs::new(n);
        for k in (0..n).filter(|&k| !self.clear[k]) {
            runs.insert(k);
        }
        let mut i = 0;
        while i < cuts.len() && !(cuts[i].0 > 0.0) {
            runs.insert(cuts[i].1);
            i += 1;
        }
        let mut out = vec![(0.0, runs.f(), runs.g())];
        while i < cuts.len() {
            let c = cuts[i].0;
            while i < cuts.len() && cuts[i].0 == c {
                runs.insert(cuts[i].1);
                i += 1;
            }
            out.push((c, runs.f(), runs.g()));
        }
        out
    }

    /// Integrals of `f` and `1 - g` over `[a, b]`.
    fn integrate(&self, a: f64, b: f64, pieces: &[(f64, f64, f64)], params: &BedParams) -> (f64, f64) {
        let width = b - a;
        let (mut f_int, mut g_int) = (0.0, 0.0);
        match params.integration {
            Integration::Midpoint => {
                let dt = width / params.n_t as f64;
                for m in 0..params.n_t {
                    let t = a + (m as f64 + 0.5) * dt;
                    f_int += self.foreground_fraction(t) * dt;
                    g_int += (1.0 - self.opposing_gap(t)) * dt;
                }
            }
            Integration::Exact => {
                for (j, &(lo, f, g)) in pieces.iter().enumerate() {
                    let hi = pieces.get(j + 1).map_or(f64::INFINITY, |p| p.0);
                    let len = hi.min(b) - lo.max(a);
                    if len > 0.0 {
                        f_int += f * len;
                        g_int += (1.0 - g) * len;
                    }
                }
            }
        }
        if params.normalize && width > 0.0 {
            (f_int / width, g_int / width)
        } else {
            (f_int, g_int)
        }
    }

    pub fn descriptor(&self, params: &BedParams) -> BedDescriptor {
        if params.sigma == 0.0 {
            return BedDescriptor::zeros(params.q);
        }
        let mut out = BedDescriptor::zeros(params.q);
        let pieces = match params.integration {
            Integration::Exact => self.pieces(),
            Integration::Midpoint => Vec::new(),
        };
        for s in 0..params.q {
            let (a, b) = params.slice_bounds(s);
            let (f, g) = self.integrate(a, b, &pieces, params);
            out.ff[s] = f;
            out.gg[s] = g;
        }
        out
    }
}

/// `f(P, t)` with rays cast per `params`.
pub fn foreground_fraction(
    p: usize,
    t: f64,
    stats: &SuperpixelStats,
    part: &SuperpixelPartition,
    params: &BedParams,
) -> Result<f64> {
    Ok(DirectionProfile::cast(p, stats, part, params)?.foreground_fraction(t))
}

/// `g(P, t)` with rays cast per `params`.
pub fn opposing_gap(
    p: usize,
    t: f64,
    stats: &SuperpixelStats,
    part: &SuperpixelPartition,
    params: &BedParams,
) -> Result<f64> {
    Ok(DirectionProfile::cast(p, stats, part, params)?.opposing_gap(t))
}

/// Slice integrals of `f` (`ff`) and `1 - g` (`gg`), `q` values each.
#[derive(Debug, Clone, PartialEq)]
pub struct BedDescriptor {
    pub ff: Vec<f64>,
    pub gg: Vec<f64>,
}

impl BedDescriptor {
    pub fn zeros(q: usize) -> Self {
        BedDescriptor {
            ff: vec![0.0; q],
            gg: vec![0.0; q],
        }
    }

    /// `ff` followed by `gg`.
    pub fn components(&self) -> impl Iterator<Item = f64> + '_ {
        self.ff.iter().chain(&self.gg).copied()
    }
}

pub fn bed_descriptor(
    p: usize,
    stats: &SuperpixelStats,
    part: &SuperpixelPartition,
    params: &BedParams,
) -> Result<BedDescriptor> {
    params.validate()?;
    if params.sigma == 0.0 {
        if p >= stats.len() {
            return Err(Error::UnknownSuperpixel(p));
        }
        return Ok(BedDescriptor::zeros(params.q));
    }
    Ok(DirectionProfile::cast(p, stats, part, params)?.descriptor(params))
}

/// Descriptors for every superpixel, in label order.
pub fn bed_descriptors(
    stats: &SuperpixelStats,
    part: &SuperpixelPartition,
    params: &BedParams,
) -> Result<Vec<BedDescriptor>> {
    (0..part.count())
        .map(|p| bed_descriptor(p, stats, part, params))
        .collect()
}

/// Paints each descriptor component over its superpixel and average-pools it
/// into the 20×20 grid: `2q` maps, `ff` slices first.
pub fn bed_layers(
    descriptors: &[BedDescriptor],
    part: &SuperpixelPartition,
    geometry: &GridGeometry,
) -> Result<Vec<FeatureMap>> {
    let Some(first) = descriptors.first() else {
        return Err(Error::ShapeMismatch("no descriptors".into()));
    };
    let n = first.ff.len() + first.gg.len();
    (0..n)
        .map(|i| {
            let values: Vec<f64> = descriptors
                .iter()
                .map(|d| d.components().nth(i).unwrap_or(0.0))
                .collect();
            rasterize_pool(part, &values, geometry)
        })
        .collect()
}

/// Dense reference implementation: 360 rays at 1° marched in half-pixel steps.
/// Deliberately simple and slow; shares no code with the fast path.
pub mod oracle {
    use super::*;

    pub const RAYS: usize = 360;
    pub const STEP: f64 = 0.5;

    /// Per-ray `(blocked, deepest)` for one superpixel.
    #[derive(Debug, Clone)]
    pub struct OracleRays {
        depth: f64,
        rays: Vec<(bool, Option<f64>)>,
    }

    pub fn cast(p: usize, stats: &SuperpixelStats, part: &SuperpixelPartition) -> OracleRays {
        let depth = stats.mean_depth[p];
        let (cx, cy) = stats.centroid[p];
        let (ox, oy) = (cx + 0.5, cy + 0.5);
        let mut rays = Vec::with_capacity(RAYS);
        for deg in 0..RAYS {
            let theta = (deg as f64).to_radians();
            let (dx, dy) = (math::cos(theta), math::sin(theta));
            let mut blocked = false;
            let mut deepest: Option<f64> = None;
            let mut s = 0usize;
            loop {
                let x = ox + s as f64 * STEP * dx;
                let y = oy + s as f64 * STEP * dy;
                if x < 0.0 || y < 0.0 || x >= part.width() as f64 || y >= part.height() as f64 {
                    break;
                }
                let l = part.label(math::floor(x) as usize, math::floor(y) as usize) as usize;
                if l != p {
                    let d = stats.mean_depth[l];
                    if d < depth {
                        blocked = true;
                    }
                    deepest = Some(match deepest {
                        Some(v) if v >= d => v,
                        _ => d,
                    });
                }
                s += 1;
            }
            rays.push((blocked, deepest));
        }
        OracleRays { depth, rays }
    }

    impl OracleRays {
        fn ok(&self, i: usize, t: f64) -> bool {
            let (blocked, deepest) = self.rays[i];
            !blocked && deepest.is_some_and(|d| d > self.depth + t)
        }

        /// `(f, g)` at margin `t`.
        pub fn evaluate(&self, t: f64) -> (f64, f64) {
            let n = self.rays.len();
            let good: Vec<bool> = (0..n).map(|i| self.ok(i, t)).collect();
            let f = good.iter().filter(|&&b| b).count() as f64 / n as f64;
            // Walk the circle twice so runs wrapping past 0° are counted whole.
            let (mut longest, mut run) = (0, 0);
            for i in 0..2 * n {
                if good[i % n] {
                    run = 0;
                } else {
                    run += 1;
                    longest = longest.max(run.min(n));
                }
            }
            (f, longest as f64 / n as f64)
        }
    }

    pub fn bed_oracle(
        p: usize,
        t: f64,
        stats: &SuperpixelStats,
        part: &SuperpixelPartition,
    ) -> (f64, f64) {
        cast(p, stats, part).evaluate(t)
    }

    /// Normalized descriptor by the midpoint rule with `n_t` samples per slice.
    pub fn descriptor(
        p: usize,
        stats: &SuperpixelStats,
        part: &SuperpixelPartition,
        sigma: f64,
        q: usize,
        n_t: usize,
    ) -> BedDescriptor {
        let mut out = BedDescriptor::zeros(q);
        if sigma == 0.0 {
            return out;
        }
        let rays = cast(p, stats, part);
        let width = sigma / q as f64;
        for s in 0..q {
            for m in 0..n_t {
                let t = s as f64 * width + (m as f64 + 0.5) * width / n_t as f64;
                let (f, g) = rays.evaluate(t);
                out.ff[s] += f / n_t as f64;
                out.gg[s] += (1.0 - g) / n_t as f64;
            }
        }
        out
    }
}
