//! Plain row-major raster buffers shared by every stage of the pipeline.
//!
//! All maps are `H x W` and indexed `(row, col)`. Images carry three channels
//! interleaved per pixel. Constructors validate the value domain so that
//! downstream kernels can assume it.

use image::{GrayImage, Luma};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, serde::Serialize, serde::Deserialize)]
pub struct Shape {
    pub height: usize,
    pub width: usize,
}

impl Shape {
    pub const fn new(height: usize, width: usize) -> Self {
        Self { height, width }
    }

    pub const fn len(&self) -> usize {
        self.height * self.width
    }

    pub const fn is_empty(&self) -> bool {
        self.len() == 0
    }

    #[inline]
    pub const fn index(&self, row: usize, col: usize) -> usize {
        row * self.width + col
    }

    #[inline]
    pub const fn coords(&self, index: usize) -> (usize, usize) {
        (index / self.width, index % self.width)
    }

    /// Signed-coordinate bounds check, for neighbourhood walks.
    #[inline]
    pub fn contains(&self, row: isize, col: isize) -> bool {
        row >= 0 && col >= 0 && (row as usize) < self.height && (col as usize) < self.width
    }

    pub(crate) fn ensure_same(&self, other: Shape) -> Result<()> {
        if *self == other {
            Ok(())
        } else {
            Err(Error::ShapeMismatch {
                expected: (self.height, self.width),
                actual: (other.height, other.width),
            })
        }
    }
}

/// RGB image with channel values in `[0, 1]`.
#[derive(Clone, Debug, PartialEq)]
pub struct RasterImage {
    shape: Shape,
    data: Vec<f64>,
}

impl RasterImage {
    pub fn new(shape: Shape, data: Vec<f64>) -> Result<Self> {
        if data.len() != shape.len() * 3 {
            return Err(Error::param(format!(
                "image buffer has {} values, expected {}",
                data.len(),
                shape.len() * 3
            )));
        }
        if let Some(i) = data.iter().position(|v| !(0.0..=1.0).contains(v)) {
            return Err(Error::format(i / 3, format!("channel value {} outside [0,1]", data[i])));
        }
        Ok(Self { shape, data })
    }

    pub fn filled(shape: Shape, rgb: [f64; 3]) -> Result<Self> {
        let data = (0..shape.len()).flat_map(|_| rgb).collect();
        Self::new(shape, data)
    }

    pub fn shape(&self) -> Shape {
        self.shape
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn pixel(&self, row: usize, col: usize) -> [f64; 3] {
        let i = self.shape.index(row, col) * 3;
        [self.data[i], self.data[i + 1], self.data[i + 2]]
    }

    pub fn pixels(&self) -> impl Iterator<Item = [f64; 3]> + '_ {
        self.data.chunks_exact(3).map(|c| [c[0], c[1], c[2]])
    }

    /// Unchecked variant for kernels whose arithmetic provably stays in range.
    pub(crate) fn from_raw(shape: Shape, data: Vec<f64>) -> Self {
        debug_assert_eq!(data.len(), shape.len() * 3);
        Self { shape, data }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct BinaryMask {
    shape: Shape,
    data: Vec<bool>,
}

/// A 1-pixel-wide road centreline raster.
pub type ScribbleMap = BinaryMask;

impl BinaryMask {
    pub fn new(shape: Shape, data: Vec<bool>) -> Result<Self> {
        if data.len() != shape.len() {
            return Err(Error::param(format!(
                "mask buffer has {} values, expected {}",
                data.len(),
                shape.len()
            )));
        }
        Ok(Self { shape, data })
    }

    pub fn empty(shape: Shape) -> Self {
        Self {
            shape,
            data: vec![false; shape.len()],
        }
    }

    pub fn from_fn(shape: Shape, mut f: impl FnMut(usize, usize) -> bool) -> Self {
        let data = (0..shape.len())
            .map(|i| {
                let (r, c) = shape.coords(i);
                f(r, c)
            })
            .collect();
        Self { shape, data }
    }

    pub fn shape(&self) -> Shape {
        self.shape
    }

    pub fn data(&self) -> &[bool] {
        &self.data
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize) -> bool {
        self.data[self.shape.index(row, col)]
    }

    /// Out-of-bounds reads as `false`.
    #[inline]
    pub fn get_signed(&self, row: isize, col: isize) -> bool {
        self.shape.contains(row, col) && self.data[self.shape.index(row as usize, col as usize)]
    }

    #[inline]
    pub fn set(&mut self, row: usize, col: usize, value: bool) {
        let i = self.shape.index(row, col);
        self.data[i] = value;
    }

    pub fn count(&self) -> usize {
        self.data.iter().filter(|&&v| v).count()
    }

    /// Set pixels in row-major order.
    pub fn points(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.data
            .iter()
            .enumerate()
            .filter(|(_, &v)| v)
            .map(|(i, _)| self.shape.coords(i))
    }

    pub fn to_gray(&self) -> GrayImage {
        let Shape { height, width } = self.shape;
        GrayImage::from_fn(width as u32, height as u32, |x, y| {
            Luma([if self.get(y as usize, x as usize) { 255 } else { 0 }])
        })
    }
}

/// Per-pixel class of a tri-state pseudo-label.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Tri {
    Background,
    Uncertain,
    Foreground,
}

impl Tri {
    pub const fn value(self) -> f64 {
        match self {
            Tri::Background => 0.0,
            Tri::Uncertain => 0.5,
            Tri::Foreground => 1.0,
        }
    }

    pub fn from_value(v: f64) -> Option<Tri> {
        if v == 0.0 {
            Some(Tri::Background)
        } else if v == 0.5 {
            Some(Tri::Uncertain)
        } else if v == 1.0 {
            Some(Tri::Foreground)
        } else {
            None
        }
    }

    pub const fn code(self) -> u8 {
        match self {
            Tri::Background => 0,
            Tri::Uncertain => 128,
            Tri::Foreground => 255,
        }
    }

    pub const fn from_code(code: u8) -> Option<Tri> {
        match code {
            0 => Some(Tri::Background),
            128 => Some(Tri::Uncertain),
            255 => Some(Tri::Foreground),
            _ => None,
        }
    }
}

/// Tri-state label map holding exactly `0.0`, `0.5` or `1.0` per pixel.
#[derive(Clone, Debug, PartialEq)]
pub struct TriLabel {
    shape: Shape,
    data: Vec<f64>,
}

impl TriLabel {
    pub fn new(shape: Shape, data: Vec<f64>) -> Result<Self> {
        if data.len() != shape.len() {
            return Err(Error::param(format!(
                "label buffer has {} values, expected {}",
                data.len(),
                shape.len()
            )));
        }
        if let Some(i) = data.iter().position(|&v| Tri::from_value(v).is_none()) {
            return Err(Error::format(i, format!("label value {} is not one of 0, 0.5, 1", data[i])));
        }
        Ok(Self { shape, data })
    }

    pub fn filled(shape: Shape, class: Tri) -> Self {
        Self {
            shape,
            data: vec![class.value(); shape.len()],
        }
    }

    pub fn from_fn(shape: Shape, mut f: impl FnMut(usize, usize) -> Tri) -> Self {
        let data = (0..shape.len())
            .map(|i| {
                let (r, c) = shape.coords(i);
                f(r, c).value()
            })
            .collect();
        Self { shape, data }
    }

    pub fn shape(&self) -> Shape {
        self.shape
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.data[self.shape.index(row, col)]
    }

    #[inline]
    pub fn class_at(&self, index: usize) -> Tri {
        // constructors guarantee the domain
        Tri::from_value(self.data[index]).unwrap_or(Tri::Uncertain)
    }

    pub fn count(&self, class: Tri) -> usize {
        let v = class.value();
        self.data.iter().filter(|&&x| x == v).count()
    }

    pub fn class_mask(&self, class: Tri) -> BinaryMask {
        let v = class.value();
        BinaryMask {
            shape: self.shape,
            data: self.data.iter().map(|&x| x == v).collect(),
        }
    }

    pub(crate) fn from_raw(shape: Shape, data: Vec<f64>) -> Self {
        debug_assert!(data.iter().all(|&v| Tri::from_value(v).is_some()));
        Self { shape, data }
    }
}

/// Probability map with values in `[0, 1]`.
#[derive(Clone, Debug, PartialEq)]
pub struct PredictionMap {
    shape: Shape,
    data: Vec<f64>,
}

impl PredictionMap {
    pub fn new(shape: Shape, data: Vec<f64>) -> Result<Self> {
        if data.len() != shape.len() {
            return Err(Error::param(format!(
                "prediction buffer has {} values, expected {}",
                data.len(),
                shape.len()
            )));
        }
        if let Some(i) = data.iter().position(|v| !(0.0..=1.0).contains(v)) {
            return Err(Error::Numeric(format!(
                "prediction at pixel {i} is {}, outside [0,1]",
                data[i]
            )));
        }
        Ok(Self { shape, data })
    }

    pub fn from_fn(shape: Shape, mut f: impl FnMut(usize, usize) -> f64) -> Result<Self> {
        let data = (0..shape.len())
            .map(|i| {
                let (r, c) = shape.coords(i);
                f(r, c)
            })
            .collect();
        Self::new(shape, data)
    }

    pub fn shape(&self) -> Shape {
        self.shape
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.data[self.shape.index(row, col)]
    }

    pub(crate) fn from_raw(shape: Shape, data: Vec<f64>) -> Self {
        Self { shape, data }
    }
}

/// `I(y > 0)`: pixels that are foreground or uncertain.
pub fn nonbackground_mask(y: &TriLabel) -> BinaryMask {
    BinaryMask {
        shape: y.shape,
        data: y.data.iter().map(|&v| v > 0.0).collect(),
    }
}

/// Encode a tri-label as an 8-bit raster: 0 -> 0, 0.5 -> 128, 1 -> 255.
pub fn tri_encode(y: &TriLabel) -> GrayImage {
    let Shape { height, width } = y.shape;
    GrayImage::from_fn(width as u32, height as u32, |x, r| {
        Luma([y.class_at(y.shape.index(r as usize, x as usize)).code()])
    })
}

pub fn tri_decode(raster: &GrayImage) -> Result<TriLabel> {
    let shape = Shape::new(raster.height() as usize, raster.width() as usize);
    let mut data = Vec::with_capacity(shape.len());
    for (i, px) in raster.pixels().enumerate() {
        let code = px.0[0];
        let class = Tri::from_code(code).ok_or_else(|| {
            let (r, c) = shape.coords(i);
            Error::format(i, format!("pixel ({r},{c}) has value {code}; tri-labels use 0, 128, 255"))
        })?;
        data.push(class.value());
    }
    Ok(TriLabel { shape, data })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn row(values: &[f64]) -> TriLabel {
        TriLabel::new(Shape::new(1, values.len()), values.to_vec()).unwrap()
    }

    #[test]
    fn nonbackground_cases() {
        let s = Shape::new(2, 3);
        assert_eq!(nonbackground_mask(&TriLabel::filled(s, Tri::Background)).count(), 0);
        assert_eq!(nonbackground_mask(&TriLabel::filled(s, Tri::Uncertain)).count(), 6);
        let m = nonbackground_mask(&row(&[0.0, 0.5, 1.0, 0.0]));
        assert_eq!(m.data(), &[false, true, true, false]);
    }

    #[test]
    fn encode_codes() {
        let g = tri_encode(&row(&[0.0, 0.5, 1.0]));
        assert_eq!(g.as_raw(), &[0, 128, 255]);
    }

    #[test]
    fn decode_rejects_foreign_value() {
        let g = GrayImage::from_raw(3, 2, vec![0, 128, 255, 0, 77, 0]).unwrap();
        match tri_decode(&g) {
            Err(Error::Format { offset, message }) => {
                assert_eq!(offset, 4);
                assert!(message.contains("(1,1)") && message.contains("77"), "{message}");
            }
            other => panic!("expected format error, got {other:?}"),
        }
    }

    #[test]
    fn trilabel_rejects_other_floats() {
        assert!(TriLabel::new(Shape::new(1, 2), vec![0.0, 0.25]).is_err());
        assert!(TriLabel::new(Shape::new(1, 2), vec![0.0]).is_err());
    }

    #[test]
    fn image_rejects_out_of_range() {
        assert!(RasterImage::new(Shape::new(1, 1), vec![0.0, 1.5, 0.0]).is_err());
        assert!(RasterImage::new(Shape::new(1, 1), vec![0.0, f64::NAN, 0.0]).is_err());
    }

    proptest! {
        #[test]
        fn codec_round_trip(h in 1usize..12, w in 1usize..12, seed in proptest::collection::vec(0u8..3, 144)) {
            let shape = Shape::new(h, w);
            let data = (0..shape.len()).map(|i| f64::from(seed[i]) * 0.5).collect();
            let y = TriLabel::new(shape, data).unwrap();
            prop_assert_eq!(tri_decode(&tri_encode(&y)).unwrap(), y.clone());
            let m = nonbackground_mask(&y);
            for i in 0..shape.len() {
                prop_assert_eq!(m.data()[i], y.data()[i] != 0.0);
            }
        }
    }
}
