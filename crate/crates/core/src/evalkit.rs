//! Precision/recall curves and F-measure scoring of saliency maps.
//!
//! Conventions: a map pixel is positive at threshold `τ ∈ 0..=255` when its
//! value is `> τ / 255`; ground truth is positive at `≥ 0.5`; an empty
//! prediction has precision 1; images whose ground truth is empty are
//! skipped. Scores are computed per image and then averaged unless pooled
//! averaging is requested.

use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::raster::{GroundTruth, SaliencyMap};

pub const THRESHOLDS: usize = 256;
pub const DEFAULT_BETA2: f64 = 0.3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum FMode {
    /// Per image, threshold at twice the map mean (capped at 1).
    Adaptive,
    /// The fixed threshold maximizing dataset-mean F.
    #[default]
    BestThreshold,
}

impl FMode {
    pub fn name(&self) -> &'static str {
        match self {
            FMode::Adaptive => "adaptive",
            FMode::BestThreshold => "best_threshold",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Averaging {
    #[default]
    PerImage,
    /// Sum TP/FP/FN over all images before dividing.
    Pooled,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EvalOptions {
    pub beta2: f64,
    pub mode: FMode,
    pub averaging: Averaging,
}

impl Default for EvalOptions {
    fn default() -> Self {
        EvalOptions {
            beta2: DEFAULT_BETA2,
            mode: FMode::default(),
            averaging: Averaging::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct Counts {
    pub tp: u64,
    pub fp: u64,
    pub fn_: u64,
}

impl Counts {
    pub fn from_masks(pred: &[bool], gt: &[bool]) -> Result<Counts> {
        if pred.len() != gt.len() {
            return Err(Error::LengthMismatch {
                expected: gt.len(),
                found: pred.len(),
            });
        }
        let mut c = Counts::default();
        for (&p, &g) in pred.iter().zip(gt) {
            match (p, g) {
                (true, true) => c.tp += 1,
                (true, false) => c.fp += 1,
                (false, true) => c.fn_ += 1,
                _ => {}
            }
        }
        Ok(c)
    }

    pub fn add(&mut self, other: Counts) {
        self.tp += other.tp;
        self.fp += other.fp;
        self.fn_ += other.fn_;
    }

    /// `(precision, recall)`; fails when there are no ground-truth positives.
    pub fn precision_recall(&self) -> Result<(f64, f64)> {
        let positives = self.tp + self.fn_;
        if positives == 0 {
            return Err(Error::EmptyGroundTruth);
        }
        let predicted = self.tp + self.fp;
        let p = if predicted == 0 {
            1.0
        } else {
            self.tp as f64 / predicted as f64
        };
        Ok((p, self.tp as f64 / positives as f64))
    }
}

pub fn precision_recall(pred: &[bool], gt: &[bool]) -> Result<(f64, f64)> {
    Counts::from_masks(pred, gt)?.precision_recall()
}

/// `(1 + β²)·p·r / (β²·p + r)`, and 0 when the denominator vanishes.
pub fn f_measure(p: f64, r: f64, beta2: f64) -> f64 {
    let denom = beta2 * p + r;
    if denom == 0.0 {
        return 0.0;
    }
    (1.0 + beta2) * p * r / denom
}

pub fn binarize_gt(gt: &GroundTruth) -> Vec<bool> {
    gt.data().iter().map(|&v| v >= 0.5).collect()
}

/// Binarizes at `value > τ / 255`.
pub fn binarize_map(map: &SaliencyMap, tau: u8) -> Vec<bool> {
    let t = tau as f64 / 255.0;
    map.data().iter().map(|&v| v > t).collect()
}

/// `min(2 × mean, 1)`.
pub fn adaptive_threshold(map: &SaliencyMap) -> f64 {
    let mean = map.data().iter().sum::<f64>() / map.len() as f64;
    (2.0 * mean).min(1.0)
}

/// Counts at every threshold for one image in a single pass.
pub fn threshold_counts(map: &SaliencyMap, gt: &[bool]) -> Result<Vec<Counts>> {
    if map.len() != gt.len() {
        return Err(Error::LengthMismatch {
            expected: gt.len(),
            found: map.len(),
        });
    }
    let table: Vec<f64> = (0..THRESHOLDS).map(|t| t as f64 / 255.0).collect();
    // passes[k] = pixels positive at exactly the thresholds 0..k.
    let mut pos_hist = vec![0u64; THRESHOLDS + 1];
    let mut neg_hist = vec![0u64; THRESHOLDS + 1];
    let mut total_pos = 0u64;
    for (&v, &g) in map.data().iter().zip(gt) {
        let k = table.partition_point(|&t| v > t);
        if g {
            pos_hist[k] += 1;
            total_pos += 1;
        } else {
            neg_hist[k] += 1;
        }
    }
    let mut out = vec![Counts::default(); THRESHOLDS];
    let (mut tp, mut fp) = (0u64, 0u64);
    for tau in (0..THRESHOLDS).rev() {
        tp += pos_hist[tau + 1];
        fp += neg_hist[tau + 1];
        out[tau] = Counts {
            tp,
            fp,
            fn_: total_pos - tp,
        };
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PrPoint {
    pub tau: u8,
    pub precision: f64,
    pub recall: f64,
    pub f: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PrCurve {
    pub points: Vec<PrPoint>,
    /// Indices of images left out because their ground truth is empty.
    pub skipped: Vec<usize>,
}

impl PrCurve {
    pub fn best(&self) -> PrPoint {
        let mut best = self.points[0];
        for p in &self.points[1..] {
            if p.f > best.f {
                best = *p;
            }
        }
        best
    }
}

fn check_pairs(maps: &[SaliencyMap], gts: &[GroundTruth]) -> Result<()> {
    if maps.len() != gts.len() {
        return Err(Error::LengthMismatch {
            expected: gts.len(),
            found: maps.len(),
        });
    }
    for (m, g) in maps.iter().zip(gts) {
        g.ensure_dims(m.dims())?;
    }
    Ok(())
}

/// Per-threshold counts for every image with a non-empty ground truth.
fn valid_counts(maps: &[SaliencyMap], gts: &[GroundTruth]) -> Result<(Vec<(usize, Vec<Counts>)>, Vec<usize>)> {
    check_pairs(maps, gts)?;
    let mut valid = Vec::new();
    let mut skipped = Vec::new();
    for (i, (m, g)) in maps.iter().zip(gts).enumerate() {
        let gt = binarize_gt(g);
        if !gt.contains(&true) {
            skipped.push(i);
            continue;
        }
        valid.push((i, threshold_counts(m, &gt)?));
    }
    if valid.is_empty() {
        return Err(Error::NoValidImages);
    }
    Ok((valid, skipped))
}

fn curve_from_counts(valid: &[(usize, Vec<Counts>)], skipped: Vec<usize>, opts: &EvalOptions) -> PrCurve {
    let n = valid.len() as f64;
    let points = (0..THRESHOLDS)
        .map(|tau| match opts.averaging {
            Averaging::PerImage => {
                let (mut p, mut r, mut f) = (0.0, 0.0, 0.0);
                for (_, counts) in valid {
                    let (pi, ri) = counts[tau].precision_recall().expect("gt checked non-empty");
                    p += pi;
                    r += ri;
                    f += f_measure(pi, ri, opts.beta2);
                }
                PrPoint {
                    tau: tau as u8,
                    precision: p / n,
                    recall: r / n,
                    f: f / n,
                }
            }
            Averaging::Pooled => {
                let mut total = Counts::default();
                for (_, counts) in valid {
                    total.add(counts[tau]);
                }
                let (p, r) = total.precision_recall().expect("gt checked non-empty");
                PrPoint {
                    tau: tau as u8,
                    precision: p,
                    recall: r,
                    f: f_measure(p, r, opts.beta2),
                }
            }
        })
        .collect();
    PrCurve { points, skipped }
}

pub fn pr_curve(maps: &[SaliencyMap], gts: &[GroundTruth], opts: &EvalOptions) -> Result<PrCurve> {
    let (valid, skipped) = valid_counts(maps, gts)?;
    Ok(curve_from_counts(&valid, skipped, opts))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ImageScore {
    pub index: usize,
    pub precision: f64,
    pub recall: f64,
    pub f: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MethodScore {
    pub precision: f64,
    pub recall: f64,
    pub f: f64,
    /// Threshold used in best-threshold mode.
    pub tau: Option<u8>,
    pub per_image: Vec<ImageScore>,
    pub curve: PrCurve,
}

/// Mean precision, recall and F under `opts`.
pub fn score(maps: &[SaliencyMap], gts: &[GroundTruth], opts: &EvalOptions) -> Result<MethodScore> {
    let (valid, skipped) = valid_counts(maps, gts)?;
    let curve = curve_from_counts(&valid, skipped, opts);
    match opts.mode {
        FMode::BestThreshold => {
            let best = curve.best();
            let per_image = valid
                .iter()
                .map(|(i, counts)| {
                    let (p, r) = counts[best.tau as usize].precision_recall().expect("non-empty");
                    ImageScore {
                        index: *i,
                        precision: p,
                        recall: r,
                        f: f_measure(p, r, opts.beta2),
                    }
                })
                .collect();
            Ok(MethodScore {
                precision: best.precision,
                recall: best.recall,
                f: best.f,
                tau: Some(best.tau),
                per_image,
                curve,
            })
        }
        FMode::Adaptive => {
            let mut per_image = Vec::with_capacity(valid.len());
            let mut pooled = Counts::default();
            for (i, _) in &valid {
                let (m, g) = (&maps[*i], &gts[*i]);
                let t = adaptive_threshold(m);
                let pred: Vec<bool> = m.data().iter().map(|&v| v >= t).collect();
                let counts = Counts::from_masks(&pred, &binarize_gt(g))?;
                pooled.add(counts);
                let (p, r) = counts.precision_recall()?;
                per_image.push(ImageScore {
                    index: *i,
                    precision: p,
                    recall: r,
                    f: f_measure(p, r, opts.beta2),
                });
            }
            let (precision, recall, f) = match opts.averaging {
                Averaging::PerImage => {
                    let n = per_image.len() as f64;
                    let sum = |g: fn(&ImageScore) -> f64| per_image.iter().map(g).sum::<f64>() / n;
                    (sum(|s| s.precision), sum(|s| s.recall), sum(|s| s.f))
                }
                Averaging::Pooled => {
                    let (p, r) = pooled.precision_recall()?;
                    (p, r, f_measure(p, r, opts.beta2))
                }
            };
            Ok(MethodScore {
                precision,
                recall,
                f,
                tau: None,
                per_image,
                curve,
            })
        }
    }
}

/// Mean F under `opts`.
pub fn mean_f(maps: &[SaliencyMap], gts: &[GroundTruth], opts: &EvalOptions) -> Result<f64> {
    Ok(score(maps, gts, opts)?.f)
}

#[derive(Debug, Clone, PartialEq)]
pub struct MethodRow {
    pub method: String,
    pub score: MethodScore,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    pub options: EvalOptions,
    pub rows: Vec<MethodRow>,
}

/// Scores several methods against the same ground truth.
pub fn report(methods: &[(String, Vec<SaliencyMap>)], gts: &[GroundTruth], opts: &EvalOptions) -> Result<EvalReport> {
    let rows = methods
        .iter()
        .map(|(name, maps)| {
            Ok(MethodRow {
                method: name.clone(),
                score: score(maps, gts, opts)?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(EvalReport { options: *opts, rows })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::raster::Raster;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn gt_box(side: usize) -> GroundTruth {
        Raster::from_fn(side, side, |x, y| {
            if (2..6).contains(&x) && (3..7).contains(&y) {
                1.0
            } else {
                0.0
            }
        })
    }

    #[test]
    fn precision_recall_conventions() {
        let gt = [true, true, false, false];
        assert_eq!(precision_recall(&gt, &gt).unwrap(), (1.0, 1.0));
        assert_eq!(precision_recall(&[true; 4], &gt).unwrap(), (0.5, 1.0));
        assert_eq!(precision_recall(&[false; 4], &gt).unwrap(), (1.0, 0.0));
        assert_eq!(precision_recall(&[true; 4], &[false; 4]), Err(Error::EmptyGroundTruth));
    }

    #[test]
    fn f_measure_values() {
        assert_eq!(f_measure(1.0, 0.0, 0.3), 0.0);
        assert_eq!(f_measure(0.0, 0.0, 0.3), 0.0);
        let f = f_measure(0.9, 0.6, 0.09);
        assert!((f - 1.09 * 0.54 / 0.681).abs() < 1e-12);
        assert!((f - 0.864317).abs() < 1e-6);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        for _ in 0..100 {
            let v: f64 = rng.gen_range(0.0..=1.0);
            assert!((f_measure(v, v, 0.3) - v).abs() <= 1e-12);
        }
    }

    #[test]
    fn perfect_maps() {
        let gts = [gt_box(10), gt_box(10)];
        let opts = EvalOptions::default();
        let curve = pr_curve(&gts, &gts, &opts).unwrap();
        for p in &curve.points[..255] {
            assert_eq!((p.precision, p.recall), (1.0, 1.0));
        }
        for mode in [FMode::Adaptive, FMode::BestThreshold] {
            let o = EvalOptions { mode, ..opts };
            assert_eq!(mean_f(&gts, &gts, &o).unwrap(), 1.0);
        }
    }

    #[test]
    fn uniform_half_maps_plateau() {
        let gts = [gt_box(10)];
        let maps = [Raster::filled(10, 10, 0.5)];
        let curve = pr_curve(&maps, &gts, &EvalOptions::default()).unwrap();
        for p in &curve.points {
            if p.tau < 128 {
                assert_eq!((p.precision, p.recall), (0.16, 1.0));
            } else {
                assert_eq!((p.precision, p.recall), (1.0, 0.0));
            }
        }
    }

    #[test]
    fn all_zero_maps_adaptive() {
        let gts = [gt_box(10)];
        let maps = [Raster::filled(10, 10, 0.0)];
        let opts = EvalOptions {
            mode: FMode::Adaptive,
            ..Default::default()
        };
        let f = mean_f(&maps, &gts, &opts).unwrap();
        assert!((f - f_measure(0.16, 1.0, 0.3)).abs() < 1e-15);
    }

    #[test]
    fn threshold_counts_match_double_loop() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for _ in 0..5 {
            let map = Raster::from_fn(12, 9, |_, _| {
                // Include exact threshold values to exercise the strict comparison.
                if rng.gen_bool(0.3) {
                    rng.gen_range(0..256) as f64 / 255.0
                } else {
                    rng.gen_range(0.0..1.0)
                }
            });
            let gt: Vec<bool> = (0..108).map(|_| rng.gen_bool(0.4)).collect();
            let fast = threshold_counts(&map, &gt).unwrap();
            for tau in 0..=255u8 {
                let pred = binarize_map(&map, tau);
                assert_eq!(fast[tau as usize], Counts::from_masks(&pred, &gt).unwrap());
            }
        }
    }

    #[test]
    fn empty_gt_is_skipped() {
        let gts = [gt_box(10), Raster::filled(10, 10, 0.0)];
        let maps = [gt_box(10), Raster::filled(10, 10, 0.3)];
        let curve = pr_curve(&maps, &gts, &EvalOptions::default()).unwrap();
        assert_eq!(curve.skipped, vec![1]);
        assert_eq!(
            pr_curve(&maps[1..], &gts[1..], &EvalOptions::default()),
            Err(Error::NoValidImages)
        );
    }

    #[test]
    fn best_threshold_dominates_fixed() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let gts: Vec<_> = (0..4).map(|_| gt_box(10)).collect();
        let maps: Vec<_> = (0..4)
            .map(|_| Raster::from_fn(10, 10, |_, _| rng.gen_range(0.0..1.0)))
            .collect();
        let opts = EvalOptions::default();
        let s = score(&maps, &gts, &opts).unwrap();
        for p in &s.curve.points {
            assert!(s.f >= p.f);
        }
        for i in 0..4 {
            let counts = threshold_counts(&maps[i], &binarize_gt(&gts[i])).unwrap();
            for w in counts.windows(2) {
                assert!(w[1].tp <= w[0].tp);
            }
        }
    }

    #[test]
    fn report_rows() {
        let gts = [gt_box(10), gt_box(10)];
        let good: Vec<_> = gts.to_vec();
        let weak: Vec<_> = gts.iter().map(|g| g.map(|&v| if v > 0.5 { 0.4 } else { 0.45 })).collect();
        let r = report(
            &[("good".into(), good), ("weak".into(), weak)],
            &gts,
            &EvalOptions::default(),
        )
        .unwrap();
        let good = &r.rows[0].score;
        assert_eq!((good.precision, good.recall, good.f), (1.0, 1.0, 1.0));
        assert!(r.rows[1].score.f < good.f);
    }

    #[test]
    fn pooled_matches_manual_sum() {
        let gts = [gt_box(10), gt_box(8)];
        let maps = [Raster::filled(10, 10, 0.6), gt_box(8)];
        let opts = EvalOptions {
            averaging: Averaging::Pooled,
            ..Default::default()
        };
        let curve = pr_curve(&maps, &gts, &opts).unwrap();
        // τ = 0: first image all positive (16 TP, 84 FP), second exact (16 TP).
        let p = curve.points[0];
        assert!((p.precision - 32.0 / 116.0).abs() < 1e-15);
        assert_eq!(p.recall, 1.0);
    }
}
