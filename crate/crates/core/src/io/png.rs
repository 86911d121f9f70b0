use std::io::Cursor;
use std::path::Path;

use image::{DynamicImage, GrayImage, ImageFormat, RgbImage};

use super::write_atomic;
use crate::error::{Error, Result};
use crate::raster::{tri_decode, tri_encode, BinaryMask, RasterImage, Shape, TriLabel};

fn open(path: &Path) -> Result<DynamicImage> {
    image::open(path).map_err(|source| Error::Image { path: path.into(), source })
}

fn save(path: &Path, img: DynamicImage) -> Result<()> {
    let mut buf = Cursor::new(Vec::new());
    img.write_to(&mut buf, ImageFormat::Png)
        .map_err(|source| Error::Image { path: path.into(), source })?;
    write_atomic(path, buf.get_ref())
}

/// 8-bit RGB, scaled to `[0, 1]`.
pub fn load_rgb(path: &Path) -> Result<RasterImage> {
    let rgb = open(path)?.to_rgb8();
    let shape = Shape::new(rgb.height() as usize, rgb.width() as usize);
    let data = rgb.as_raw().iter().map(|&v| v as f64 / 255.0).collect();
    RasterImage::new(shape, data)
}

pub fn save_rgb(path: &Path, img: &RasterImage) -> Result<()> {
    let shape = img.shape();
    let bytes = img.data().iter().map(|&v| (v * 255.0).round() as u8).collect();
    let buf = RgbImage::from_raw(shape.width as u32, shape.height as u32, bytes)
        .expect("buffer length matches shape");
    save(path, DynamicImage::ImageRgb8(buf))
}

/// Grayscale `{0, 128, 255}`; anything else is a format error.
pub fn load_tri(path: &Path) -> Result<TriLabel> {
    tri_decode(&open(path)?.to_luma8())
}

pub fn save_tri(path: &Path, y: &TriLabel) -> Result<()> {
    save(path, DynamicImage::ImageLuma8(tri_encode(y)))
}

/// Grayscale, foreground where the value is at least 128.
pub fn load_mask(path: &Path) -> Result<BinaryMask> {
    let gray: GrayImage = open(path)?.to_luma8();
    let shape = Shape::new(gray.height() as usize, gray.width() as usize);
    BinaryMask::new(shape, gray.as_raw().iter().map(|&v| v >= 128).collect())
}

/// Grayscale `{0, 255}`.
pub fn save_mask(path: &Path, m: &BinaryMask) -> Result<()> {
    save(path, DynamicImage::ImageLuma8(m.to_gray()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::raster::Tri;

    #[test]
    fn round_trips() {
        let dir = tempfile::tempdir().unwrap();
        let shape = Shape::new(3, 4);
        let img = RasterImage::new(shape, (0..36).map(|i| (i * 7 % 256) as f64 / 255.0).collect()).unwrap();
        let p = dir.path().join("x.png");
        save_rgb(&p, &img).unwrap();
        assert_eq!(load_rgb(&p).unwrap(), img);

        let y = TriLabel::from_fn(shape, |r, c| [Tri::Background, Tri::Uncertain, Tri::Foreground][(r + c) % 3]);
        let p = dir.path().join("y.png");
        save_tri(&p, &y).unwrap();
        assert_eq!(load_tri(&p).unwrap(), y);

        let m = BinaryMask::from_fn(shape, |r, c| r == c);
        let p = dir.path().join("m.png");
        save_mask(&p, &m).unwrap();
        assert_eq!(load_mask(&p).unwrap(), m);
    }

    #[test]
    fn tri_load_rejects_stray_values() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("bad.png");
        let gray = GrayImage::from_raw(2, 1, vec![0, 77]).unwrap();
        DynamicImage::ImageLuma8(gray).save(&p).unwrap();
        assert!(matches!(load_tri(&p), Err(Error::Format { offset: 1, .. })));
    }

    #[test]
    fn missing_file_is_an_error() {
        assert!(load_rgb(Path::new("/nonexistent/x.png")).is_err());
    }
}
