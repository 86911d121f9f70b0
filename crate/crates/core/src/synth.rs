//! Procedural road scenes with exact masks.
//!
//! Roads are uniform Catmull-Rom splines through jittered waypoints that run
//! from one image border to another, stamped with a round brush of constant
//! width. Distractors are gray strokes drawn into the image only.
//!
//! Randomness comes from `ChaCha8Rng::seed_from_u64(seed)` with one stream
//! per concern (roads 0, background 1, distractors 2), so adding distractors
//! never moves a road.

use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::io::{save_mask, save_rgb, write_json};
use crate::raster::{BinaryMask, RasterImage, Shape};
use crate::skeleton::skeletonize;

const STREAM_ROADS: u64 = 0;
const STREAM_BACKGROUND: u64 = 1;
const STREAM_DISTRACTORS: u64 = 2;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BgTexture {
    Flat,
    #[default]
    Noise,
    Blotches,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SceneSpec {
    pub seed: u64,
    /// `(height, width)`.
    pub size: (usize, usize),
    pub n_roads: usize,
    /// Road widths are drawn uniformly from `[min, max]` pixels.
    pub width_range: (f64, f64),
    /// Waypoint jitter as a fraction of the road's chord length.
    pub curvature: f64,
    pub bg_texture: BgTexture,
    pub distractors: usize,
}

impl Default for SceneSpec {
    fn default() -> Self {
        Self {
            seed: 0,
            size: (256, 256),
            n_roads: 3,
            width_range: (3.0, 8.0),
            curvature: 0.3,
            bg_texture: BgTexture::Noise,
            distractors: 2,
        }
    }
}

impl SceneSpec {
    pub fn shape(&self) -> Shape {
        Shape::new(self.size.0, self.size.1)
    }

    pub fn validate(&self) -> Result<()> {
        let (h, w) = self.size;
        if h == 0 || w == 0 {
            return Err(Error::param(format!("scene size {h}x{w} has no pixels")));
        }
        let (lo, hi) = self.width_range;
        let cap = h.min(w) as f64 / 4.0;
        if !(1.0 <= lo && lo <= hi && hi <= cap) {
            return Err(Error::param(format!(
                "width range ({lo}, {hi}) must satisfy 1 <= min <= max <= {cap}"
            )));
        }
        if self.n_roads == 0 {
            return Err(Error::param("a scene needs at least one road"));
        }
        if !(self.curvature >= 0.0 && self.curvature.is_finite()) {
            return Err(Error::param("curvature must be finite and >= 0"));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Road {
    /// Dense centreline samples `(row, col)`; may extend past the border.
    pub polyline: Vec<(f64, f64)>,
    pub width: f64,
}

#[derive(Clone, Debug)]
pub struct Scene {
    pub image: RasterImage,
    pub mask: BinaryMask,
    pub roads: Vec<Road>,
}

type P = (f64, f64);

fn lerp(a: P, b: P, t: f64) -> P {
    (a.0 + (b.0 - a.0) * t, a.1 + (b.1 - a.1) * t)
}

fn dist(a: P, b: P) -> f64 {
    ((a.0 - b.0).powi(2) + (a.1 - b.1).powi(2)).sqrt()
}

/// Uniform Catmull-Rom through `ctrl`, sampled at most half a pixel apart.
fn catmull_rom(ctrl: &[P]) -> Vec<P> {
    let n = ctrl.len();
    let at = |i: isize| -> P {
        if i < 0 {
            (2.0 * ctrl[0].0 - ctrl[1].0, 2.0 * ctrl[0].1 - ctrl[1].1)
        } else if i as usize >= n {
            (2.0 * ctrl[n - 1].0 - ctrl[n - 2].0, 2.0 * ctrl[n - 1].1 - ctrl[n - 2].1)
        } else {
            ctrl[i as usize]
        }
    };
    let mut out = vec![ctrl[0]];
    for i in 0..n as isize - 1 {
        let (p0, p1, p2, p3) = (at(i - 1), at(i), at(i + 1), at(i + 2));
        let steps = (dist(p1, p2) * 2.0).ceil().max(1.0) as usize;
        for s in 1..=steps {
            let t = s as f64 / steps as f64;
            let (t2, t3) = (t * t, t * t * t);
            let f = |a: f64, b: f64, c: f64, d: f64| {
                0.5 * (2.0 * b + (c - a) * t + (2.0 * a - 5.0 * b + 4.0 * c - d) * t2 + (3.0 * b - a - 3.0 * c + d) * t3)
            };
            out.push((f(p0.0, p1.0, p2.0, p3.0), f(p0.1, p1.1, p2.1, p3.1)));
        }
    }
    out
}

fn segment_distance(p: P, a: P, b: P) -> f64 {
    let (dr, dc) = (b.0 - a.0, b.1 - a.1);
    let len2 = dr * dr + dc * dc;
    let t = if len2 == 0.0 {
        0.0
    } else {
        (((p.0 - a.0) * dr + (p.1 - a.1) * dc) / len2).clamp(0.0, 1.0)
    };
    dist(p, (a.0 + t * dr, a.1 + t * dc))
}

/// Pixels whose centre lies within `width / 2` of the polyline.
fn stroke(shape: Shape, line: &[P], width: f64) -> BinaryMask {
    let radius = width / 2.0;
    let mut m = BinaryMask::empty(shape);
    let clamp_r = |v: f64| v.max(0.0).min(shape.height as f64 - 1.0) as usize;
    let clamp_c = |v: f64| v.max(0.0).min(shape.width as f64 - 1.0) as usize;
    for seg in line.windows(2) {
        let (a, b) = (seg[0], seg[1]);
        let (r0, r1) = (a.0.min(b.0) - radius, a.0.max(b.0) + radius);
        let (c0, c1) = (a.1.min(b.1) - radius, a.1.max(b.1) + radius);
        if r1 < 0.0 || c1 < 0.0 || r0 > shape.height as f64 - 1.0 || c0 > shape.width as f64 - 1.0 {
            continue;
        }
        for r in clamp_r(r0.ceil())..=clamp_r(r1.floor()) {
            for c in clamp_c(c0.ceil())..=clamp_c(c1.floor()) {
                if !m.get(r, c) && segment_distance((r as f64, c as f64), a, b) <= radius {
                    m.set(r, c, true);
                }
            }
        }
    }
    m
}

/// A point on border `edge` (0 top, 1 right, 2 bottom, 3 left), pushed
/// `margin` pixels outside the image.
fn border_point(rng: &mut ChaCha8Rng, shape: Shape, edge: usize, margin: f64) -> P {
    let (h, w) = (shape.height as f64 - 1.0, shape.width as f64 - 1.0);
    let u = rng.random_range(0.1..0.9);
    match edge {
        0 => (-margin, u * w),
        1 => (u * h, w + margin),
        2 => (h + margin, u * w),
        _ => (u * h, -margin),
    }
}

fn jittered_path(rng: &mut ChaCha8Rng, a: P, b: P, curvature: f64, waypoints: usize) -> Vec<P> {
    let len = dist(a, b);
    let normal = if len > 0.0 { ((b.1 - a.1) / len, -(b.0 - a.0) / len) } else { (0.0, 0.0) };
    let mut ctrl = vec![a];
    for k in 1..=waypoints {
        let base = lerp(a, b, k as f64 / (waypoints + 1) as f64);
        let off = curvature * len * 0.2 * rng.random_range(-1.0..=1.0);
        ctrl.push((base.0 + normal.0 * off, base.1 + normal.1 * off));
    }
    ctrl.push(b);
    catmull_rom(&ctrl)
}

fn gen_roads(spec: &SceneSpec) -> Vec<Road> {
    let shape = spec.shape();
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    rng.set_stream(STREAM_ROADS);
    (0..spec.n_roads)
        .map(|_| {
            let (lo, hi) = spec.width_range;
            let width = if lo < hi { rng.random_range(lo..=hi) } else { lo };
            let margin = width / 2.0 + 2.0;
            let start = rng.random_range(0..4);
            let end = if rng.random_bool(0.7) { (start + 2) % 4 } else { (start + rng.random_range(1..4)) % 4 };
            let a = border_point(&mut rng, shape, start, margin);
            let b = border_point(&mut rng, shape, end, margin);
            Road { polyline: jittered_path(&mut rng, a, b, spec.curvature, 3), width }
        })
        .collect()
}

fn background(spec: &SceneSpec) -> Vec<[f64; 3]> {
    let shape = spec.shape();
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    rng.set_stream(STREAM_BACKGROUND);
    let base = [rng.random_range(0.2..0.45), rng.random_range(0.3..0.55), rng.random_range(0.1..0.3)];
    let mut px = vec![base; shape.len()];
    match spec.bg_texture {
        BgTexture::Flat => {}
        BgTexture::Noise => {
            for p in &mut px {
                for v in p.iter_mut() {
                    *v += rng.random_range(-0.05..0.05);
                }
            }
        }
        BgTexture::Blotches => {
            let side = shape.height.min(shape.width) as f64;
            for _ in 0..rng.random_range(6..12) {
                let centre = (rng.random_range(0.0..shape.height as f64), rng.random_range(0.0..shape.width as f64));
                let radius = rng.random_range(0.03..0.15) * side;
                let tone = base.map(|b| b + rng.random_range(-0.12..0.12));
                for (i, p) in px.iter_mut().enumerate() {
                    let (r, c) = shape.coords(i);
                    if dist((r as f64, c as f64), centre) <= radius {
                        *p = tone;
                    }
                }
            }
        }
    }
    px
}

fn road_tone(rng: &mut ChaCha8Rng) -> [f64; 3] {
    let g = rng.random_range(0.55..0.75);
    [g, g, g * 0.97]
}

/// Renders one scene. Identical specs give bitwise-identical scenes.
pub fn gen_scene(spec: &SceneSpec) -> Result<Scene> {
    spec.validate()?;
    let shape = spec.shape();
    let mut px = background(spec);

    let mut drng = ChaCha8Rng::seed_from_u64(spec.seed);
    drng.set_stream(STREAM_DISTRACTORS);
    for _ in 0..spec.distractors {
        let (h, w) = (shape.height as f64, shape.width as f64);
        let a = (drng.random_range(0.0..h), drng.random_range(0.0..w));
        let len = drng.random_range(0.15..0.4) * h.min(w);
        let angle = drng.random_range(0.0..std::f64::consts::TAU);
        let b = (a.0 + len * angle.sin(), a.1 + len * angle.cos());
        let line = jittered_path(&mut drng, a, b, spec.curvature, 2);
        let (lo, hi) = spec.width_range;
        let width = if lo < hi { drng.random_range(lo..=hi) } else { lo };
        let tone = road_tone(&mut drng);
        for (i, on) in stroke(shape, &line, width).data().iter().enumerate() {
            if *on {
                px[i] = tone;
            }
        }
    }

    let roads = gen_roads(spec);
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    rng.set_stream(STREAM_ROADS + 3);
    let mut mask = BinaryMask::empty(shape);
    for road in &roads {
        let tone = road_tone(&mut rng);
        let m = stroke(shape, &road.polyline, road.width);
        for (i, on) in m.data().iter().enumerate() {
            if *on {
                let (r, c) = shape.coords(i);
                mask.set(r, c, true);
                px[i] = if spec.bg_texture == BgTexture::Flat {
                    tone
                } else {
                    tone.map(|t| t + rng.random_range(-0.03..0.03))
                };
            }
        }
    }
    if mask.count() == 0 {
        return Err(Error::param("scene has no road pixels inside the image"));
    }
    let data = px.into_iter().flatten().map(|v| v.clamp(0.0, 1.0)).collect();
    Ok(Scene { image: RasterImage::new(shape, data)?, mask, roads })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SceneEntry {
    pub id: String,
    pub image: PathBuf,
    pub mask: PathBuf,
    pub scribble: PathBuf,
    pub spec: SceneSpec,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub seed: u64,
    pub count: usize,
    pub template: SceneSpec,
    pub scenes: Vec<SceneEntry>,
}

/// Per-scene seeds for a dataset: the first `count` outputs of
/// `ChaCha8Rng::seed_from_u64(seed)`.
pub fn scene_seeds(seed: u64, count: usize) -> Vec<u64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count).map(|_| rng.random()).collect()
}

pub fn scene_id(index: usize) -> String {
    format!("scene_{index:04}")
}

/// Writes `images/`, `masks/` and `scribbles/` PNGs plus `manifest.json`
/// under `out`. Paths in the manifest are relative to `out`.
pub fn gen_dataset(template: &SceneSpec, count: usize, seed: u64, out: &Path) -> Result<DatasetManifest> {
    if count == 0 {
        return Err(Error::param("dataset count must be >= 1"));
    }
    template.validate()?;
    for sub in ["images", "masks", "scribbles"] {
        let dir = out.join(sub);
        std::fs::create_dir_all(&dir).map_err(|e| Error::io(dir, e))?;
    }
    let mut scenes = Vec::with_capacity(count);
    for (i, s) in scene_seeds(seed, count).into_iter().enumerate() {
        let spec = SceneSpec { seed: s, ..template.clone() };
        let scene = gen_scene(&spec)?;
        let id = scene_id(i);
        let file = format!("{id}.png");
        let entry = SceneEntry {
            image: Path::new("images").join(&file),
            mask: Path::new("masks").join(&file),
            scribble: Path::new("scribbles").join(&file),
            id,
            spec,
        };
        save_rgb(&out.join(&entry.image), &scene.image)?;
        save_mask(&out.join(&entry.mask), &scene.mask)?;
        save_mask(&out.join(&entry.scribble), &skeletonize(&scene.mask))?;
        scenes.push(entry);
    }
    let manifest = DatasetManifest { seed, count, template: template.clone(), scenes };
    write_json(&out.join("manifest.json"), &manifest)?;
    Ok(manifest)
}
