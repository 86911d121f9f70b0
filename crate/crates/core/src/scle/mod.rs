//! Statistic and content-based label expansion.
//!
//! A scribble is expanded in two ways. The statistic route thresholds the
//! distance to the scribble into foreground / uncertain / background bands.
//! The content route seeds SLIC superpixels with road key points plus
//! far-away background points, labels superpixels by a seeded min-cut, and
//! the two labelings are merged so that content evidence can only turn
//! statistic background into uncertain.

mod distance;
mod graphcut;
mod maxflow;
mod slic;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::raster::{RasterImage, ScribbleMap, Shape, Tri, TriLabel};
use crate::skeleton::{self, Point};

pub use distance::{distance_transform, DistanceMap};
pub use graphcut::{graph_cut, graph_cut_detailed, CutProblem, CutSolution, GraphCutOutcome};
pub use maxflow::MaxFlow;
pub use slic::{slic, Center, SuperpixelMap};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExpansionConfig {
    /// Foreground band half-width, pixels.
    pub b1: f64,
    /// Outer edge of the uncertain band, pixels.
    pub b2: f64,
    /// Target superpixel count.
    pub n_slic: usize,
    pub slic_compactness: f64,
    pub slic_iterations: usize,
    /// Colour-contrast scale of the pairwise term; `None` uses the mean
    /// colour distance between adjacent superpixels.
    pub gc_sigma: Option<f64>,
    pub gc_lambda: f64,
    /// Evaluate the stride and background interval with `H*W` in the
    /// numerator exactly as originally printed, instead of `sqrt(H*W)`.
    pub literal_formulas: bool,
}

impl Default for ExpansionConfig {
    fn default() -> Self {
        Self {
            b1: 4.0,
            b2: 8.0,
            n_slic: 1024,
            slic_compactness: 10.0,
            slic_iterations: 10,
            gc_sigma: None,
            gc_lambda: 1.0,
            literal_formulas: false,
        }
    }
}

impl ExpansionConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.b1 > 0.0 && self.b1 < self.b2 && self.b2.is_finite()) {
            return Err(Error::param(format!(
                "buffer limits need 0 < b1 < b2, got b1={} b2={}",
                self.b1, self.b2
            )));
        }
        if self.n_slic < 2 {
            return Err(Error::param("n_slic must be at least 2"));
        }
        if self.slic_iterations < 1 {
            return Err(Error::param("slic_iterations must be at least 1"));
        }
        if !(self.slic_compactness >= 0.0 && self.slic_compactness.is_finite()) {
            return Err(Error::param("slic_compactness must be finite and >= 0"));
        }
        if let Some(sigma) = self.gc_sigma {
            if !(sigma > 0.0 && sigma.is_finite()) {
                return Err(Error::param("gc_sigma must be positive"));
            }
        }
        if !(self.gc_lambda >= 0.0 && self.gc_lambda.is_finite()) {
            return Err(Error::param("gc_lambda must be finite and >= 0"));
        }
        Ok(())
    }

    /// Background seeds closer than this to the scribble are dropped.
    pub fn seed_exclusion_radius(&self) -> f64 {
        (self.b1 + self.b2) / 2.0
    }
}

/// Buffer expansion `y_s`: foreground for `DIS <= b1` (scribble pixels
/// included), uncertain for `b1 < DIS <= b2`, background beyond.
pub fn statistic_expand(dis: &DistanceMap, cfg: &ExpansionConfig) -> TriLabel {
    let data = dis
        .data()
        .iter()
        .map(|&d| {
            if d <= cfg.b1 {
                Tri::Foreground.value()
            } else if d <= cfg.b2 {
                Tri::Uncertain.value()
            } else {
                Tri::Background.value()
            }
        })
        .collect();
    TriLabel::from_raw(dis.shape(), data)
}

/// Sampling stride `q` along scribbles.
///
/// The default divides `sqrt(H*W)` by `sqrt(2 * n_slic)`, i.e. the usual
/// SLIC grid interval over `sqrt(2)`. `literal` uses `H*W` in the numerator.
pub fn compute_stride(height: usize, width: usize, n_slic: usize, literal: bool) -> usize {
    let area = (height * width) as f64;
    let numerator = if literal { area } else { area.sqrt() };
    let q = numerator / (2f64.sqrt() * (n_slic as f64).sqrt());
    (q.round() as usize).max(1)
}

/// Spacing of the background seed grid.
pub fn background_spacing(shape: Shape, n_slic: usize, literal: bool) -> f64 {
    let per_seed = shape.len() as f64 / n_slic as f64;
    if literal {
        per_seed
    } else {
        per_seed.sqrt()
    }
}

/// Cell-centred grid positions `floor((k + 0.5) * spacing)` along one axis.
pub(crate) fn grid_positions(extent: usize, spacing: f64) -> impl Iterator<Item = usize> {
    let spacing = spacing.max(1.0);
    (0..)
        .map(move |k| ((k as f64 + 0.5) * spacing).floor())
        .take_while(move |&p| p < extent as f64)
        .map(|p| p as usize)
}

/// Grid candidates with spacing [`background_spacing`], minus those within
/// `(b1 + b2) / 2` of the scribble. May be empty.
pub fn sample_background_seeds(
    s: &ScribbleMap,
    dis: &DistanceMap,
    cfg: &ExpansionConfig,
) -> Result<Vec<Point>> {
    s.shape().ensure_same(dis.shape())?;
    let shape = s.shape();
    let spacing = background_spacing(shape, cfg.n_slic, cfg.literal_formulas);
    let radius = cfg.seed_exclusion_radius();
    let mut seeds = Vec::new();
    for r in grid_positions(shape.height, spacing) {
        for c in grid_positions(shape.width, spacing) {
            if dis.get(r, c) > radius {
                seeds.push((r, c));
            }
        }
    }
    Ok(seeds)
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize)]
pub struct SeedSet {
    /// Key points followed by stride samples, deduplicated.
    pub foreground: Vec<Point>,
    pub background: Vec<Point>,
}

/// Label merge: statistic background that the content route calls
/// foreground becomes uncertain; everything else keeps `y_s`.
pub fn merge_labels(ys: &TriLabel, yc: &TriLabel) -> Result<TriLabel> {
    ys.shape().ensure_same(yc.shape())?;
    if let Some(i) = yc.data().iter().position(|&v| v == 0.5) {
        return Err(Error::param(format!(
            "content label must be binary, pixel {i} is uncertain"
        )));
    }
    let data = ys
        .data()
        .iter()
        .zip(yc.data())
        .map(|(&s, &c)| if s == 0.0 && c == 1.0 { 0.5 } else { s })
        .collect();
    Ok(TriLabel::from_raw(ys.shape(), data))
}

/// Per-image bookkeeping written next to expansion outputs.
#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct ExpansionStats {
    pub scribble_pixels: usize,
    pub intersections: usize,
    pub endpoints: usize,
    pub stride: usize,
    pub background_spacing: f64,
    pub foreground_seeds: usize,
    pub background_seeds: usize,
    pub superpixels: usize,
    pub slic_centers: usize,
    pub gc_sigma: Option<f64>,
    pub fg_superpixels: usize,
    pub bg_superpixels: usize,
    pub cut_cost: Option<f64>,
    /// Set when the content route could not run and `y_c` fell back to the
    /// statistic foreground.
    pub fallback: Option<String>,
    pub counts_ys: [usize; 3],
    pub counts_y: [usize; 3],
}

#[derive(Clone, Debug)]
pub struct Expansion {
    pub ys: TriLabel,
    pub yc: TriLabel,
    pub y: TriLabel,
    pub seeds: SeedSet,
    pub stats: ExpansionStats,
}

/// Road key points and stride samples, the foreground seeds.
pub fn foreground_seeds(s: &ScribbleMap, cfg: &ExpansionConfig) -> Result<(Vec<Point>, usize, usize)> {
    let shape = s.shape();
    let keys = skeleton::detect_keypoints(s);
    let stride = compute_stride(shape.height, shape.width, cfg.n_slic, cfg.literal_formulas);
    let rep = skeleton::sample_representative(s, stride)?;
    let mut seen = vec![false; shape.len()];
    let mut seeds = Vec::with_capacity(keys.len() + rep.len());
    for p in keys.all().chain(rep) {
        let i = shape.index(p.0, p.1);
        if !seen[i] {
            seen[i] = true;
            seeds.push(p);
        }
    }
    Ok((seeds, keys.intersections.len(), keys.endpoints.len()))
}

/// Full expansion of one image: `y_s`, `y_c` and the merged `y`.
pub fn expand(img: &RasterImage, s: &ScribbleMap, cfg: &ExpansionConfig) -> Result<Expansion> {
    cfg.validate()?;
    img.shape().ensure_same(s.shape())?;
    let shape = s.shape();
    let dis = distance_transform(s)?;
    let ys = statistic_expand(&dis, cfg);

    let (foreground, intersections, endpoints) = foreground_seeds(s, cfg)?;
    let background = sample_background_seeds(s, &dis, cfg)?;
    let seeds = SeedSet { foreground, background };

    let mut stats = ExpansionStats {
        scribble_pixels: s.count(),
        intersections,
        endpoints,
        stride: compute_stride(shape.height, shape.width, cfg.n_slic, cfg.literal_formulas),
        background_spacing: background_spacing(shape, cfg.n_slic, cfg.literal_formulas),
        foreground_seeds: seeds.foreground.len(),
        background_seeds: seeds.background.len(),
        ..Default::default()
    };

    let content = slic(img, &seeds, cfg).and_then(|sp| {
        stats.superpixels = sp.len();
        stats.slic_centers = sp.initial_centers;
        graph_cut_detailed(&sp, &seeds, cfg)
    });
    let yc = match content {
        Ok(outcome) => {
            stats.gc_sigma = Some(outcome.sigma);
            stats.fg_superpixels = outcome.fg_seeded;
            stats.bg_superpixels = outcome.bg_seeded;
            stats.cut_cost = Some(outcome.cost);
            outcome.label
        }
        Err(e @ (Error::MissingSeeds { .. } | Error::Param(_))) => {
            stats.fallback = Some(e.to_string());
            statistic_foreground(&ys)
        }
        Err(e) => return Err(e),
    };
    let y = merge_labels(&ys, &yc)?;
    stats.counts_ys = class_counts(&ys);
    stats.counts_y = class_counts(&y);
    Ok(Expansion { ys, yc, y, seeds, stats })
}

/// `y_c` fallback: the foreground of `y_s` as a binary label.
pub fn statistic_foreground(ys: &TriLabel) -> TriLabel {
    let data = ys.data().iter().map(|&v| if v == 1.0 { 1.0 } else { 0.0 }).collect();
    TriLabel::from_raw(ys.shape(), data)
}

fn class_counts(y: &TriLabel) -> [usize; 3] {
    [y.count(Tri::Background), y.count(Tri::Uncertain), y.count(Tri::Foreground)]
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::raster::BinaryMask;

    fn cfg(b1: f64, b2: f64) -> ExpansionConfig {
        ExpansionConfig { b1, b2, ..Default::default() }
    }

    #[test]
    fn eq1_bands() {
        let shape = Shape::new(1, 7);
        let dis = DistanceMap::from_distances(shape, vec![0.0, 1.0, 2.0, 3.0, 4.0, 5.0, 4.000001]).unwrap();
        let ys = statistic_expand(&dis, &cfg(2.0, 4.0));
        assert_eq!(ys.data(), &[1.0, 1.0, 1.0, 0.5, 0.5, 0.0, 0.0]);
    }

    #[test]
    fn scribble_pixels_are_foreground() {
        let shape = Shape::new(12, 12);
        let s = BinaryMask::from_fn(shape, |r, c| r == c || r == 3);
        let ys = statistic_expand(&distance_transform(&s).unwrap(), &cfg(0.5, 1.0));
        for (r, c) in s.points() {
            assert_eq!(ys.get(r, c), 1.0);
        }
    }

    #[test]
    fn stride_values() {
        assert_eq!(compute_stride(16, 16, 2, true), 128);
        assert_eq!(compute_stride(512, 512, 1024, false), 11);
        assert_eq!(compute_stride(512, 512, 1024, true), 5793);
        assert_eq!(compute_stride(4, 4, 1_000_000, false), 1);
    }

    #[test]
    fn background_grid() {
        let shape = Shape::new(512, 512);
        assert_eq!(background_spacing(shape, 1024, false), 16.0);
        let positions: Vec<_> = grid_positions(512, 16.0).collect();
        assert_eq!(positions.len(), 32);
        assert_eq!((positions[0], positions[31]), (8, 504));

        let mut s = BinaryMask::empty(shape);
        s.set(0, 0, true);
        let dis = distance_transform(&s).unwrap();
        let seeds = sample_background_seeds(&s, &dis, &ExpansionConfig::default()).unwrap();
        assert_eq!(seeds.len(), 1024);
    }

    #[test]
    fn background_seed_threshold_is_inclusive() {
        // b1=2, b2=4 -> exclusion radius 3; a candidate at DIS=3 is dropped
        let shape = Shape::new(8, 8);
        let c = ExpansionConfig { n_slic: 64, ..cfg(2.0, 4.0) };
        let mut data = vec![10.0; 64];
        data[0] = 3.0; // grid cell (0,0) for spacing 1
        data[1] = 3.0000001;
        let dis = DistanceMap::from_distances(shape, data).unwrap();
        let s = BinaryMask::empty(shape);
        let seeds = sample_background_seeds(&s, &dis, &c).unwrap();
        assert!(!seeds.contains(&(0, 0)));
        assert!(seeds.contains(&(0, 1)));
        assert_eq!(seeds.len(), 63);
    }

    #[test]
    fn background_seeds_empty_when_buffer_covers_image() {
        let shape = Shape::new(10, 10);
        let s = BinaryMask::from_fn(shape, |r, _| r == 5);
        let dis = distance_transform(&s).unwrap();
        let c = ExpansionConfig { n_slic: 16, ..cfg(4.0, 8.0) };
        assert!(sample_background_seeds(&s, &dis, &c).unwrap().is_empty());
    }

    #[test]
    fn merge_all_six_cases() {
        let shape = Shape::new(1, 6);
        let ys = TriLabel::new(shape, vec![0.0, 0.0, 0.5, 0.5, 1.0, 1.0]).unwrap();
        let yc = TriLabel::new(shape, vec![1.0, 0.0, 0.0, 1.0, 0.0, 1.0]).unwrap();
        let y = merge_labels(&ys, &yc).unwrap();
        assert_eq!(y.data(), &[0.5, 0.0, 0.5, 0.5, 1.0, 1.0]);
    }

    #[test]
    fn merge_rejects_bad_inputs() {
        let a = TriLabel::filled(Shape::new(2, 2), Tri::Background);
        let b = TriLabel::filled(Shape::new(2, 3), Tri::Background);
        assert!(matches!(merge_labels(&a, &b), Err(Error::ShapeMismatch { .. })));
        let u = TriLabel::filled(Shape::new(2, 2), Tri::Uncertain);
        assert!(merge_labels(&a, &u).is_err());
    }

    #[test]
    fn config_validation() {
        assert!(ExpansionConfig::default().validate().is_ok());
        assert!(cfg(4.0, 4.0).validate().is_err());
        assert!(cfg(0.0, 4.0).validate().is_err());
        assert!(ExpansionConfig { n_slic: 1, ..Default::default() }.validate().is_err());
        assert!(ExpansionConfig { gc_sigma: Some(0.0), ..Default::default() }.validate().is_err());
    }
}
