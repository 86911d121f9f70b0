//! Training objective kernels.
//!
//! Every kernel returns its value together with the analytic gradient with
//! respect to its differentiable inputs. Predictions are probabilities.
//! Stop-gradient operands get gradient maps that are exactly zero.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::raster::{PredictionMap, Shape, Tri, TriLabel};
use crate::samix;

/// Probabilities are clamped to `[BCE_EPS, 1 - BCE_EPS]` inside the BCE.
pub const BCE_EPS: f64 = 1e-7;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LossWeights {
    /// Weight of the invariance term.
    pub lambda1: f64,
    /// Weight of the adversarial term.
    pub lambda2: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        Self { lambda1: 0.1, lambda2: 0.1 }
    }
}

impl LossWeights {
    pub fn validate(&self) -> Result<()> {
        if !(self.lambda1 >= 0.0 && self.lambda1.is_finite() && self.lambda2 >= 0.0 && self.lambda2.is_finite()) {
            return Err(Error::param(format!(
                "loss weights must be finite and >= 0, got l1={} l2={}",
                self.lambda1, self.lambda2
            )));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct BceOutcome {
    pub value: f64,
    pub grad: Vec<f64>,
    /// No pixel was certain; value and gradient are zero.
    pub no_certain: bool,
}

/// Mean BCE over the certain pixels of `y`; uncertain pixels are skipped
/// and get zero gradient, as do pixels whose probability was clamped.
pub fn partial_bce(y: &TriLabel, p: &PredictionMap) -> Result<BceOutcome> {
    y.shape().ensure_same(p.shape())?;
    let certain = y.data().iter().filter(|&&v| v != 0.5).count();
    if certain == 0 {
        return Ok(BceOutcome {
            value: 0.0,
            grad: vec![0.0; y.data().len()],
            no_certain: true,
        });
    }
    let n = certain as f64;
    let mut sum = 0.0;
    let mut grad = vec![0.0; y.data().len()];
    for (i, (&t, &raw)) in y.data().iter().zip(p.data()).enumerate() {
        if t == 0.5 {
            continue;
        }
        let q = raw.clamp(BCE_EPS, 1.0 - BCE_EPS);
        sum -= t * q.ln() + (1.0 - t) * (1.0 - q).ln();
        if q == raw {
            grad[i] = (-t / q + (1.0 - t) / (1.0 - q)) / n;
        }
    }
    Ok(BceOutcome { value: sum / n, grad, no_certain: false })
}

#[derive(Clone, Debug, PartialEq)]
pub struct SegLoss {
    pub value: f64,
    pub grad_p1: Vec<f64>,
    pub grad_p2: Vec<f64>,
    pub no_certain: bool,
}

/// Average of the two partial BCE terms. Also used for the mixed pair.
pub fn seg_loss(y1: &TriLabel, y2: &TriLabel, p1: &PredictionMap, p2: &PredictionMap) -> Result<SegLoss> {
    let a = partial_bce(y1, p1)?;
    let b = partial_bce(y2, p2)?;
    Ok(SegLoss {
        value: 0.5 * (a.value + b.value),
        grad_p1: a.grad.iter().map(|g| 0.5 * g).collect(),
        grad_p2: b.grad.iter().map(|g| 0.5 * g).collect(),
        no_certain: a.no_certain || b.no_certain,
    })
}

/// Segmentation loss on the mixed pair.
pub fn seg_loss_m(
    y_m_12: &TriLabel,
    y_m_21: &TriLabel,
    p_m_12: &PredictionMap,
    p_m_21: &PredictionMap,
) -> Result<SegLoss> {
    seg_loss(y_m_12, y_m_21, p_m_12, p_m_21)
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// `1 - cos(p, q)` and its gradient with respect to `p`; `q` is a constant.
pub fn cosine_loss(p: &[f64], q: &[f64]) -> Result<(f64, Vec<f64>)> {
    if p.len() != q.len() {
        return Err(Error::param(format!("vector lengths differ: {} vs {}", p.len(), q.len())));
    }
    let (np, nq) = (norm(p), norm(q));
    if np == 0.0 || nq == 0.0 {
        return Err(Error::Numeric("cosine of a zero-norm vector is undefined".into()));
    }
    let dot: f64 = p.iter().zip(q).map(|(a, b)| a * b).sum();
    let cos = dot / (np * nq);
    let grad = p
        .iter()
        .zip(q)
        .map(|(&a, &b)| cos * a / (np * np) - b / (np * nq))
        .collect();
    Ok(((1.0 - cos).clamp(0.0, 2.0), grad))
}

#[derive(Clone, Debug, PartialEq)]
pub struct InvarianceLoss {
    pub value: f64,
    pub grad_pm12: Vec<f64>,
    pub grad_pm21: Vec<f64>,
    /// Always zero: the mixed original predictions are stop-gradient targets.
    pub grad_pbar12: Vec<f64>,
    pub grad_pbar21: Vec<f64>,
}

pub fn invariance_loss(
    p_m_12: &PredictionMap,
    p_m_21: &PredictionMap,
    pbar_m_12: &PredictionMap,
    pbar_m_21: &PredictionMap,
) -> Result<InvarianceLoss> {
    for s in [p_m_21.shape(), pbar_m_12.shape(), pbar_m_21.shape()] {
        p_m_12.shape().ensure_same(s)?;
    }
    let (a, ga) = cosine_loss(p_m_12.data(), pbar_m_12.data())?;
    let (b, gb) = cosine_loss(p_m_21.data(), pbar_m_21.data())?;
    let n = p_m_12.data().len();
    Ok(InvarianceLoss {
        value: 0.5 * (a + b),
        grad_pm12: ga.iter().map(|g| 0.5 * g).collect(),
        grad_pm21: gb.iter().map(|g| 0.5 * g).collect(),
        grad_pbar12: vec![0.0; n],
        grad_pbar21: vec![0.0; n],
    })
}

/// 1 on certain pixels, 0 on uncertain ones.
#[derive(Clone, Debug, PartialEq)]
pub struct TopologyFilter {
    shape: Shape,
    data: Vec<f64>,
}

impl TopologyFilter {
    pub fn shape(&self) -> Shape {
        self.shape
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }
}

pub fn topology_filter(y: &TriLabel) -> TopologyFilter {
    let data = (0..y.data().len())
        .map(|i| if y.class_at(i) == Tri::Uncertain { 0.0 } else { 1.0 })
        .collect();
    TopologyFilter { shape: y.shape(), data }
}

/// `(p * T, y * T)`. The filtered label is binary.
pub fn apply_topology_filter(p: &PredictionMap, y: &TriLabel) -> Result<(PredictionMap, TriLabel)> {
    y.shape().ensure_same(p.shape())?;
    let t = topology_filter(y);
    let pt = p.data().iter().zip(&t.data).map(|(a, b)| a * b).collect();
    let yt = y.data().iter().zip(&t.data).map(|(a, b)| a * b).collect();
    Ok((PredictionMap::from_raw(p.shape(), pt), TriLabel::from_raw(y.shape(), yt)))
}

/// Discriminator output: `n x n` patches, each with `[fake, real]`
/// probabilities, stored at `(h * n + w) * 2 + class`.
#[derive(Clone, Debug, PartialEq)]
pub struct PatchScoreMap {
    n: usize,
    data: Vec<f64>,
}

/// Tolerance on the per-patch sum of the two class probabilities.
pub const PATCH_SUM_TOL: f64 = 1e-6;

impl PatchScoreMap {
    pub fn new(n: usize, data: Vec<f64>) -> Result<Self> {
        if n == 0 {
            return Err(Error::param("patch grid side must be >= 1"));
        }
        if data.len() != n * n * 2 {
            return Err(Error::param(format!(
                "patch score map {n}x{n}x2 needs {} values, got {}",
                n * n * 2,
                data.len()
            )));
        }
        for (k, pair) in data.chunks(2).enumerate() {
            if pair.iter().any(|&v| !(v > 0.0 && v < 1.0)) {
                return Err(Error::Numeric(format!("patch {k}: probabilities must lie in (0,1), got {pair:?}")));
            }
            if (pair[0] + pair[1] - 1.0).abs() > PATCH_SUM_TOL {
                return Err(Error::Numeric(format!("patch {k}: probabilities sum to {}", pair[0] + pair[1])));
            }
        }
        Ok(Self { n, data })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }
}

/// Which kind of map the discriminator was shown.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RealFakeFlag {
    /// Filtered prediction, `y_n = 0`.
    Fake,
    /// Filtered pseudo-label, `y_n = 1`.
    Real,
}

impl RealFakeFlag {
    pub fn value(self) -> f64 {
        match self {
            RealFakeFlag::Fake => 0.0,
            RealFakeFlag::Real => 1.0,
        }
    }
}

/// Patch cross-entropy averaged over the `n^2` patches, with its gradient
/// with respect to every score entry.
pub fn patch_adv_loss(scores: &PatchScoreMap, flag: RealFakeFlag) -> (f64, Vec<f64>) {
    let yn = flag.value();
    let patches = (scores.n * scores.n) as f64;
    let mut sum = 0.0;
    let mut grad = vec![0.0; scores.data.len()];
    for (k, pair) in scores.data.chunks(2).enumerate() {
        sum -= (1.0 - yn) * pair[0].ln() + yn * pair[1].ln();
        grad[2 * k] = -(1.0 - yn) / (pair[0] * patches);
        grad[2 * k + 1] = -yn / (pair[1] * patches);
    }
    (sum / patches, grad)
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct LossComponents {
    pub l_seg: f64,
    pub l_seg_m: f64,
    pub l_inv: f64,
    pub l_cd: f64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct LossReport {
    pub l_seg: f64,
    pub l_seg_m: f64,
    pub l_inv: f64,
    pub l_cd: f64,
    pub total: f64,
    pub weights: LossWeights,
    /// Gradients of `total` keyed by input name.
    #[serde(skip)]
    pub grads: BTreeMap<String, Vec<f64>>,
    /// Non-fatal conditions, e.g. a label with no certain pixels.
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub warnings: Vec<String>,
}

impl LossReport {
    /// `l_seg + l_seg_m + lambda1 * l_inv + lambda2 * l_cd`.
    pub fn recompute_total(&self) -> f64 {
        self.l_seg + self.l_seg_m + self.weights.lambda1 * self.l_inv + self.weights.lambda2 * self.l_cd
    }
}

pub fn total_loss(c: LossComponents, w: LossWeights) -> Result<LossReport> {
    w.validate()?;
    for (name, v) in [("l_seg", c.l_seg), ("l_seg_m", c.l_seg_m), ("l_inv", c.l_inv), ("l_cd", c.l_cd)] {
        if !v.is_finite() {
            return Err(Error::Numeric(format!("{name} is not finite ({v})")));
        }
    }
    let mut report = LossReport {
        l_seg: c.l_seg,
        l_seg_m: c.l_seg_m,
        l_inv: c.l_inv,
        l_cd: c.l_cd,
        weights: w,
        ..Default::default()
    };
    report.total = report.recompute_total();
    if !report.total.is_finite() {
        return Err(Error::Numeric("total loss is not finite".into()));
    }
    Ok(report)
}

/// Everything one training step sees for a pair of images.
pub struct LossInputs<'a> {
    pub y1: &'a TriLabel,
    pub y2: &'a TriLabel,
    pub y_m_12: &'a TriLabel,
    pub y_m_21: &'a TriLabel,
    pub p1: &'a PredictionMap,
    pub p2: &'a PredictionMap,
    pub p_m_12: &'a PredictionMap,
    pub p_m_21: &'a PredictionMap,
    /// Whether the pair passed the colour gate.
    pub gate: bool,
    /// Discriminator scores and what they were computed on.
    pub adversarial: Option<(&'a PatchScoreMap, RealFakeFlag)>,
}

/// All four terms, the weighted total and its gradients with respect to
/// `p1`, `p2`, `pm12`, `pm21`, `pbar12`, `pbar21` and (when present) `d`.
pub fn evaluate_losses(inputs: &LossInputs<'_>, w: LossWeights) -> Result<LossReport> {
    let seg = seg_loss(inputs.y1, inputs.y2, inputs.p1, inputs.p2)?;
    let seg_m = seg_loss_m(inputs.y_m_12, inputs.y_m_21, inputs.p_m_12, inputs.p_m_21)?;
    let (pbar12, pbar21) = samix::mix_predictions(inputs.p1, inputs.p2, inputs.y1, inputs.y2, inputs.gate)?;
    let inv = invariance_loss(inputs.p_m_12, inputs.p_m_21, &pbar12, &pbar21)?;
    let (l_cd, grad_d) = match inputs.adversarial {
        Some((scores, flag)) => {
            let (v, g) = patch_adv_loss(scores, flag);
            (v, Some(g))
        }
        None => (0.0, None),
    };
    let mut report = total_loss(
        LossComponents { l_seg: seg.value, l_seg_m: seg_m.value, l_inv: inv.value, l_cd },
        w,
    )?;
    let combine = |a: &[f64], b: &[f64]| -> Vec<f64> { a.iter().zip(b).map(|(x, y)| x + w.lambda1 * y).collect() };
    report.grads.insert("p1".into(), seg.grad_p1);
    report.grads.insert("p2".into(), seg.grad_p2);
    report.grads.insert("pm12".into(), combine(&seg_m.grad_p1, &inv.grad_pm12));
    report.grads.insert("pm21".into(), combine(&seg_m.grad_p2, &inv.grad_pm21));
    report.grads.insert("pbar12".into(), inv.grad_pbar12);
    report.grads.insert("pbar21".into(), inv.grad_pbar21);
    if let Some(g) = grad_d {
        report.grads.insert("d".into(), g.iter().map(|x| w.lambda2 * x).collect());
    } else {
        report.warnings.push("no discriminator scores given; l_cd = 0".into());
    }
    if seg.no_certain || seg_m.no_certain {
        report.warnings.push("a label has no certain pixels; its BCE term is 0".into());
    }
    Ok(report)
}
