use crate::error::Result;
use crate::raster::{BinaryMask, RasterImage, Tri, TriLabel};

pub const OVERLAY_ALPHA: f64 = 0.5;
pub const FOREGROUND_TINT: [f64; 3] = [0.0, 1.0, 0.0];
pub const UNCERTAIN_TINT: [f64; 3] = [1.0, 1.0, 0.0];

/// Foreground blended toward green, uncertain toward yellow, background
/// left as is.
pub fn render_overlay(img: &RasterImage, y: &TriLabel) -> Result<RasterImage> {
    img.shape().ensure_same(y.shape())?;
    let mut data = img.data().to_vec();
    for (i, px) in data.chunks_exact_mut(3).enumerate() {
        let tint = match y.class_at(i) {
            Tri::Foreground => FOREGROUND_TINT,
            Tri::Uncertain => UNCERTAIN_TINT,
            Tri::Background => continue,
        };
        for (v, t) in px.iter_mut().zip(tint) {
            *v = (1.0 - OVERLAY_ALPHA) * *v + OVERLAY_ALPHA * t;
        }
    }
    Ok(RasterImage::from_raw(img.shape(), data))
}

pub fn render_mask_overlay(img: &RasterImage, m: &BinaryMask) -> Result<RasterImage> {
    let y = TriLabel::from_fn(m.shape(), |r, c| if m.get(r, c) { Tri::Foreground } else { Tri::Background });
    render_overlay(img, &y)
}
