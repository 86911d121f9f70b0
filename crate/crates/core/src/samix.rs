//! Structure-aware mixup.
//!
//! Every non-background pixel of one pseudo-label (foreground or uncertain)
//! is pasted, with its image pixel, onto the other image of the pair. Pairs
//! whose HSV colour histograms are too far apart in KL divergence are passed
//! through unchanged. The paste mask is binary, so mixing is a per-pixel
//! selection and `x1 * (1 - a) + x2 * a` evaluates to exactly one operand.

use serde::{Deserialize, Serialize};

use crate::color::rgb_to_hsv;
use crate::error::{Error, Result};
use crate::raster::{nonbackground_mask, BinaryMask, PredictionMap, RasterImage, TriLabel};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MixConfig {
    /// KL threshold; a pair mixes only when `KL < t`. `inf` disables the gate.
    #[serde(with = "threshold")]
    pub t: f64,
    pub h_bins: usize,
    pub s_bins: usize,
    pub v_bins: usize,
    /// Added to every normalized bin before renormalizing.
    pub epsilon: f64,
}

impl Default for MixConfig {
    fn default() -> Self {
        Self {
            t: 0.5,
            h_bins: 16,
            s_bins: 8,
            v_bins: 8,
            epsilon: 1e-6,
        }
    }
}

impl MixConfig {
    /// Any positive threshold, including infinity, is accepted. Each axis
    /// needs at least one bin and the histogram at least two in total.
    pub fn validate(&self) -> Result<()> {
        if !(self.t > 0.0) {
            return Err(Error::param(format!("KL threshold must be > 0, got {}", self.t)));
        }
        if self.h_bins == 0 || self.s_bins == 0 || self.v_bins == 0 {
            return Err(Error::param("every histogram axis needs at least one bin"));
        }
        if self.h_bins * self.s_bins * self.v_bins < 2 {
            return Err(Error::param("histogram needs at least two bins"));
        }
        if !(self.epsilon > 0.0 && self.epsilon.is_finite()) {
            return Err(Error::param("epsilon must be finite and > 0"));
        }
        Ok(())
    }
}

/// JSON has no infinity, so an infinite threshold is written as `"inf"`.
mod threshold {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(t: &f64, s: S) -> Result<S::Ok, S::Error> {
        if t.is_infinite() && *t > 0.0 {
            s.serialize_str("inf")
        } else {
            s.serialize_f64(*t)
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Repr {
            Num(f64),
            Text(String),
        }
        match Repr::deserialize(d)? {
            Repr::Num(v) => Ok(v),
            Repr::Text(s) if matches!(s.as_str(), "inf" | "infinity" | "Infinity") => Ok(f64::INFINITY),
            Repr::Text(s) => Err(serde::de::Error::custom(format!("invalid threshold {s:?}"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ColorHistogram {
    /// Flattened `h * s_bins * v_bins + s * v_bins + v`.
    pub bins: Vec<f64>,
    pub bin_counts: (usize, usize, usize),
}

fn bin_of(x: f64, n: usize) -> usize {
    ((x * n as f64) as usize).min(n - 1)
}

pub fn hsv_histogram(img: &RasterImage, cfg: &MixConfig) -> Result<ColorHistogram> {
    cfg.validate()?;
    let (hb, sb, vb) = (cfg.h_bins, cfg.s_bins, cfg.v_bins);
    let mut counts = vec![0usize; hb * sb * vb];
    for px in img.pixels() {
        let [h, s, v] = rgb_to_hsv(px);
        counts[(bin_of(h, hb) * sb + bin_of(s, sb)) * vb + bin_of(v, vb)] += 1;
    }
    let n = img.shape().len().max(1) as f64;
    let smoothed: Vec<f64> = counts.iter().map(|&c| c as f64 / n + cfg.epsilon).collect();
    let total: f64 = smoothed.iter().sum();
    Ok(ColorHistogram {
        bins: smoothed.into_iter().map(|b| b / total).collect(),
        bin_counts: (hb, sb, vb),
    })
}

/// `sum h1 * ln(h1 / h2)`, one-directional.
pub fn kl_divergence(h1: &ColorHistogram, h2: &ColorHistogram) -> Result<f64> {
    if h1.bin_counts != h2.bin_counts || h1.bins.len() != h2.bins.len() {
        return Err(Error::param(format!(
            "histogram layouts differ: {:?} vs {:?}",
            h1.bin_counts, h2.bin_counts
        )));
    }
    if h1.bins.iter().chain(&h2.bins).any(|&b| !(b > 0.0)) {
        return Err(Error::Numeric("histograms must be smoothed (no empty bins)".into()));
    }
    Ok(h1
        .bins
        .iter()
        .zip(&h2.bins)
        .map(|(&p, &q)| p * (p / q).ln())
        .sum())
}

/// Returns `(gate, kl)` with `gate = kl < t`.
pub fn color_gate(x1: &RasterImage, x2: &RasterImage, cfg: &MixConfig) -> Result<(bool, f64)> {
    let kl = kl_divergence(&hsv_histogram(x1, cfg)?, &hsv_histogram(x2, cfg)?)?;
    Ok((kl < cfg.t, kl))
}

fn paste<T: Copy>(base: &[T], donor: &[T], alpha: &BinaryMask, channels: usize) -> Vec<T> {
    base.iter()
        .zip(donor)
        .enumerate()
        .map(|(i, (&b, &d))| if alpha.data()[i / channels] { d } else { b })
        .collect()
}

fn check_shapes(y1: &TriLabel, y2: &TriLabel, others: [crate::raster::Shape; 2]) -> Result<()> {
    y1.shape().ensure_same(y2.shape())?;
    for s in others {
        y1.shape().ensure_same(s)?;
    }
    Ok(())
}

/// Mixed images `(x_m_12, x_m_21)`; with `gate` off, clones of the inputs.
pub fn mix_images(
    x1: &RasterImage,
    x2: &RasterImage,
    y1: &TriLabel,
    y2: &TriLabel,
    gate: bool,
) -> Result<(RasterImage, RasterImage)> {
    check_shapes(y1, y2, [x1.shape(), x2.shape()])?;
    if !gate {
        return Ok((x1.clone(), x2.clone()));
    }
    let (a1, a2) = (nonbackground_mask(y1), nonbackground_mask(y2));
    Ok((
        RasterImage::from_raw(x1.shape(), paste(x1.data(), x2.data(), &a2, 3)),
        RasterImage::from_raw(x2.shape(), paste(x2.data(), x1.data(), &a1, 3)),
    ))
}

pub fn mix_labels(y1: &TriLabel, y2: &TriLabel, gate: bool) -> Result<(TriLabel, TriLabel)> {
    y1.shape().ensure_same(y2.shape())?;
    if !gate {
        return Ok((y1.clone(), y2.clone()));
    }
    let (a1, a2) = (nonbackground_mask(y1), nonbackground_mask(y2));
    Ok((
        TriLabel::from_raw(y1.shape(), paste(y1.data(), y2.data(), &a2, 1)),
        TriLabel::from_raw(y2.shape(), paste(y2.data(), y1.data(), &a1, 1)),
    ))
}

/// Same mixing applied to predictions on the original images; the result is
/// the stop-gradient target of the invariance loss.
pub fn mix_predictions(
    p1: &PredictionMap,
    p2: &PredictionMap,
    y1: &TriLabel,
    y2: &TriLabel,
    gate: bool,
) -> Result<(PredictionMap, PredictionMap)> {
    check_shapes(y1, y2, [p1.shape(), p2.shape()])?;
    if !gate {
        return Ok((p1.clone(), p2.clone()));
    }
    let (a1, a2) = (nonbackground_mask(y1), nonbackground_mask(y2));
    Ok((
        PredictionMap::from_raw(p1.shape(), paste(p1.data(), p2.data(), &a2, 1)),
        PredictionMap::from_raw(p2.shape(), paste(p2.data(), p1.data(), &a1, 1)),
    ))
}

#[derive(Clone, Debug)]
pub struct MixedPair {
    pub x_m_12: RasterImage,
    pub x_m_21: RasterImage,
    pub y_m_12: TriLabel,
    pub y_m_21: TriLabel,
    pub gate: bool,
    pub kl_value: f64,
}

/// Gate the pair on colour similarity, then mix images and labels.
pub fn sa_mix(
    x1: &RasterImage,
    x2: &RasterImage,
    y1: &TriLabel,
    y2: &TriLabel,
    cfg: &MixConfig,
) -> Result<MixedPair> {
    let (gate, kl_value) = color_gate(x1, x2, cfg)?;
    let (x_m_12, x_m_21) = mix_images(x1, x2, y1, y2, gate)?;
    let (y_m_12, y_m_21) = mix_labels(y1, y2, gate)?;
    Ok(MixedPair { x_m_12, x_m_21, y_m_12, y_m_21, gate, kl_value })
}
