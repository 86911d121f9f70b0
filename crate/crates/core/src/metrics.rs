//! Pixel metrics for binary road masks.

use std::iter::Sum;
use std::ops::Add;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::raster::{BinaryMask, PredictionMap};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MetricsConfig {
    /// Binarization threshold; `p >= tau` is foreground.
    pub tau: f64,
}

impl Default for MetricsConfig {
    fn default() -> Self {
        Self { tau: 0.5 }
    }
}

impl MetricsConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.tau > 0.0 && self.tau < 1.0) {
            return Err(Error::param(format!("tau must lie in (0,1), got {}", self.tau)));
        }
        Ok(())
    }
}

pub fn binarize(p: &PredictionMap, tau: f64) -> BinaryMask {
    BinaryMask::from_fn(p.shape(), |r, c| p.get(r, c) >= tau)
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionCounts {
    pub tp: u64,
    pub fp: u64,
    #[serde(rename = "fn")]
    pub fn_: u64,
    pub tn: u64,
}

impl Add for ConfusionCounts {
    type Output = Self;

    fn add(self, o: Self) -> Self {
        Self {
            tp: self.tp + o.tp,
            fp: self.fp + o.fp,
            fn_: self.fn_ + o.fn_,
            tn: self.tn + o.tn,
        }
    }
}

impl Sum for ConfusionCounts {
    fn sum<I: Iterator<Item = Self>>(iter: I) -> Self {
        iter.fold(Self::default(), Add::add)
    }
}

impl ConfusionCounts {
    pub fn total(&self) -> u64 {
        self.tp + self.fp + self.fn_ + self.tn
    }

    pub fn report(&self) -> MetricReport {
        let ratio = |num: u64, den: u64| if den == 0 { (0.0, true) } else { (num as f64 / den as f64, false) };
        let (precision, no_pred) = ratio(self.tp, self.tp + self.fp);
        let (recall, no_gt) = ratio(self.tp, self.tp + self.fn_);
        let (iou, _) = ratio(self.tp, self.tp + self.fp + self.fn_);
        let f1 = if precision + recall > 0.0 {
            2.0 * precision * recall / (precision + recall)
        } else {
            0.0
        };
        MetricReport {
            iou,
            f1,
            precision,
            recall,
            no_predicted_positives: no_pred,
            no_true_positives_possible: no_gt,
        }
    }
}

/// Ratios are reported as 0 when their denominator is 0, and the matching
/// flag is set.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub iou: f64,
    pub f1: f64,
    pub precision: f64,
    pub recall: f64,
    /// `tp + fp = 0`.
    pub no_predicted_positives: bool,
    /// `tp + fn = 0`.
    pub no_true_positives_possible: bool,
}

pub fn confusion(pred: &BinaryMask, gt: &BinaryMask) -> Result<ConfusionCounts> {
    pred.shape().ensure_same(gt.shape())?;
    let mut c = ConfusionCounts::default();
    for (&p, &g) in pred.data().iter().zip(gt.data()) {
        match (p, g) {
            (true, true) => c.tp += 1,
            (true, false) => c.fp += 1,
            (false, true) => c.fn_ += 1,
            (false, false) => c.tn += 1,
        }
    }
    Ok(c)
}

pub fn evaluate(pred: &BinaryMask, gt: &BinaryMask) -> Result<(MetricReport, ConfusionCounts)> {
    let c = confusion(pred, gt)?;
    Ok((c.report(), c))
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Averaging {
    /// Sum counts over images, then take ratios.
    #[default]
    Micro,
    /// Mean of per-image ratios.
    Macro,
}

pub fn aggregate(per_image: &[ConfusionCounts], mode: Averaging) -> MetricReport {
    match mode {
        Averaging::Micro => per_image.iter().copied().sum::<ConfusionCounts>().report(),
        Averaging::Macro => {
            let n = per_image.len().max(1) as f64;
            let reports: Vec<MetricReport> = per_image.iter().map(ConfusionCounts::report).collect();
            let mean = |f: fn(&MetricReport) -> f64| reports.iter().map(f).sum::<f64>() / n;
            MetricReport {
                iou: mean(|r| r.iou),
                f1: mean(|r| r.f1),
                precision: mean(|r| r.precision),
                recall: mean(|r| r.recall),
                no_predicted_positives: reports.iter().any(|r| r.no_predicted_positives),
                no_true_positives_possible: reports.iter().any(|r| r.no_true_positives_possible),
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::oracle;
    use crate::raster::Shape;
    use proptest::prelude::*;

    #[test]
    fn binarize_ties_go_up() {
        let p = PredictionMap::new(Shape::new(1, 3), vec![0.7, 0.5, 0.49]).unwrap();
        assert_eq!(binarize(&p, 0.5).data(), &[true, true, false]);
    }

    #[test]
    fn hand_counts() {
        let c = ConfusionCounts { tp: 3, fp: 1, fn_: 1, tn: 0 };
        let r = c.report();
        assert_eq!((r.iou, r.precision, r.recall, r.f1), (0.6, 0.75, 0.75, 0.75));
    }

    #[test]
    fn perfect_and_empty() {
        let gt = BinaryMask::from_fn(Shape::new(4, 4), |r, c| r == c);
        let (r, _) = evaluate(&gt, &gt).unwrap();
        assert_eq!((r.iou, r.f1), (1.0, 1.0));

        let none = BinaryMask::empty(Shape::new(4, 4));
        let (r, _) = evaluate(&none, &gt).unwrap();
        assert_eq!(r.precision, 0.0);
        assert!(r.no_predicted_positives);
        assert!(evaluate(&none, &BinaryMask::empty(Shape::new(4, 5))).is_err());
    }

    #[test]
    fn config_bounds() {
        assert!(MetricsConfig::default().validate().is_ok());
        assert!(MetricsConfig { tau: 1.0 }.validate().is_err());
    }

    fn arb_pair() -> impl Strategy<Value = (BinaryMask, BinaryMask)> {
        (1usize..12, 1usize..12).prop_flat_map(|(h, w)| {
            let n = h * w;
            (prop::collection::vec(any::<bool>(), n), prop::collection::vec(any::<bool>(), n)).prop_map(
                move |(a, b)| {
                    let shape = Shape::new(h, w);
                    (BinaryMask::new(shape, a).unwrap(), BinaryMask::new(shape, b).unwrap())
                },
            )
        })
    }

    proptest! {
        #[test]
        fn matches_oracle_and_bounds((p, g) in arb_pair()) {
            let (r, c) = evaluate(&p, &g).unwrap();
            prop_assert_eq!((c.tp, c.fp, c.fn_, c.tn), oracle::brute_force_confusion(&p, &g));
            prop_assert_eq!(c.total() as usize, p.shape().len());
            if c.tp > 0 {
                prop_assert!(r.iou <= r.f1 && r.f1 <= 1.0);
            }
            let (s, _) = evaluate(&g, &p).unwrap();
            prop_assert_eq!((s.precision, s.recall), (r.recall, r.precision));
            prop_assert_eq!(s.iou, r.iou);
            prop_assert!((s.f1 - r.f1).abs() < 1e-15);
        }

        #[test]
        fn raising_tau_never_adds(v in prop::collection::vec(0.0f64..=1.0, 1..40), a in 0.01f64..0.99, b in 0.01f64..0.99) {
            let p = PredictionMap::new(Shape::new(1, v.len()), v).unwrap();
            let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
            let ml = binarize(&p, lo);
            let mh = binarize(&p, hi);
            prop_assert!(mh.data().iter().zip(ml.data()).all(|(&h, &l)| !h || l));
        }

        #[test]
        fn micro_equals_concatenation(pairs in prop::collection::vec(arb_pair(), 1..5)) {
            let counts: Vec<_> = pairs.iter().map(|(p, g)| confusion(p, g).unwrap()).collect();
            let flat_p: Vec<bool> = pairs.iter().flat_map(|(p, _)| p.data().to_vec()).collect();
            let flat_g: Vec<bool> = pairs.iter().flat_map(|(_, g)| g.data().to_vec()).collect();
            let shape = Shape::new(1, flat_p.len());
            let whole = confusion(&BinaryMask::new(shape, flat_p).unwrap(), &BinaryMask::new(shape, flat_g).unwrap()).unwrap();
            prop_assert_eq!(aggregate(&counts, Averaging::Micro), whole.report());
        }
    }
}
