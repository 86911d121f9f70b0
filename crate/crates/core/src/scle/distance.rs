use crate::error::{Error, Result};
use crate::raster::{ScribbleMap, Shape};

/// Euclidean distance (in pixels) from every pixel to the nearest scribble pixel.
#[derive(Clone, Debug, PartialEq)]
pub struct DistanceMap {
    shape: Shape,
    data: Vec<f64>,
}

impl DistanceMap {
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

    /// Build from precomputed distances, e.g. by an external tool.
    pub fn from_distances(shape: Shape, data: Vec<f64>) -> Result<Self> {
        if data.len() != shape.len() {
            return Err(Error::param("distance buffer length does not match shape"));
        }
        if data.iter().any(|d| !d.is_finite() || *d < 0.0) {
            return Err(Error::Numeric("distances must be finite and non-negative".into()));
        }
        Ok(Self { shape, data })
    }
}

// Larger than any squared distance on a raster we will ever see, and small
// enough that all envelope arithmetic stays exact in f64.
const FAR: f64 = 1e12;

/// Exact Euclidean distance transform (separable lower-envelope method of
/// Felzenszwalb and Huttenlocher). Squared distances are integers and every
/// intermediate stays below 2^53, so results equal a brute-force scan bit for
/// bit.
pub fn distance_transform(s: &ScribbleMap) -> Result<DistanceMap> {
    let shape = s.shape();
    if s.count() == 0 {
        return Err(Error::param("distance to an empty scribble is undefined"));
    }
    let Shape { height, width } = shape;
    let mut sq: Vec<f64> = s.data().iter().map(|&on| if on { 0.0 } else { FAR }).collect();

    let n = height.max(width);
    let mut f = vec![0.0; n];
    let mut d = vec![0.0; n];
    let mut v = vec![0usize; n];
    let mut z = vec![0.0; n + 1];

    for c in 0..width {
        for r in 0..height {
            f[r] = sq[shape.index(r, c)];
        }
        lower_envelope(&f[..height], &mut d[..height], &mut v, &mut z);
        for r in 0..height {
            sq[shape.index(r, c)] = d[r];
        }
    }
    for r in 0..height {
        let row = &mut sq[r * width..(r + 1) * width];
        f[..width].copy_from_slice(row);
        lower_envelope(&f[..width], &mut d[..width], &mut v, &mut z);
        row.copy_from_slice(&d[..width]);
    }

    Ok(DistanceMap {
        shape,
        data: sq.into_iter().map(f64::sqrt).collect(),
    })
}

/// 1-D squared distance transform of sampled function `f` into `out`.
fn lower_envelope(f: &[f64], out: &mut [f64], v: &mut [usize], z: &mut [f64]) {
    let n = f.len();
    if n == 0 {
        return;
    }
    let sq = |x: usize| (x * x) as f64;
    let mut k = 0;
    v[0] = 0;
    z[0] = f64::NEG_INFINITY;
    z[1] = f64::INFINITY;
    for q in 1..n {
        let mut s;
        loop {
            let p = v[k];
            s = ((f[q] + sq(q)) - (f[p] + sq(p))) / (2.0 * (q - p) as f64);
            // z[0] is -inf, so this never pops the first parabola
            if s > z[k] {
                break;
            }
            k -= 1;
        }
        k += 1;
        v[k] = q;
        z[k] = s;
        z[k + 1] = f64::INFINITY;
    }
    k = 0;
    for (q, o) in out.iter_mut().enumerate() {
        while z[k + 1] < q as f64 {
            k += 1;
        }
        let p = v[k];
        let dq = q.abs_diff(p);
        *o = (dq * dq) as f64 + f[p];
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::oracle;
    use crate::raster::BinaryMask;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn three_four_five() {
        let mut s = BinaryMask::empty(Shape::new(6, 6));
        s.set(0, 0, true);
        let d = distance_transform(&s).unwrap();
        assert_eq!(d.get(3, 4), 5.0);
        assert_eq!(d.get(0, 0), 0.0);
    }

    #[test]
    fn empty_scribble_is_an_error() {
        assert!(distance_transform(&BinaryMask::empty(Shape::new(3, 3))).is_err());
    }

    #[test]
    fn matches_brute_force() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..10 {
            let shape = Shape::new(rng.random_range(1..40), rng.random_range(1..40));
            let density = rng.random_range(0.001..0.2);
            let mut s = BinaryMask::from_fn(shape, |_, _| rng.random_bool(density));
            s.set(0, 0, true);
            let d = distance_transform(&s).unwrap();
            assert_eq!(d.data(), oracle::brute_force_distance(&s).as_slice());
        }
    }

    #[test]
    fn lipschitz_between_neighbours() {
        let mut s = BinaryMask::empty(Shape::new(20, 30));
        s.set(4, 7, true);
        s.set(15, 22, true);
        let d = distance_transform(&s).unwrap();
        for r in 0..19 {
            for c in 0..29 {
                assert!((d.get(r, c) - d.get(r + 1, c)).abs() <= 1.0 + 1e-12);
                assert!((d.get(r, c) - d.get(r, c + 1)).abs() <= 1.0 + 1e-12);
                assert!((d.get(r, c) - d.get(r + 1, c + 1)).abs() <= 2f64.sqrt() + 1e-12);
            }
        }
    }
}
