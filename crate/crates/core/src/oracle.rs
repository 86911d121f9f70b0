//! Brute-force reference implementations.
//!
//! Nothing here shares code with the production kernels they check: each
//! function is the slowest obvious way to compute the same quantity. The
//! unit tests, the acceptance suite and `roadmix selftest` all use them.

use rand::Rng;

use crate::raster::{BinaryMask, ScribbleMap, Shape};
use crate::scle::{CutProblem, SuperpixelMap};

/// Nearest-scribble distance by scanning every scribble pixel.
pub fn brute_force_distance(s: &ScribbleMap) -> Vec<f64> {
    let shape = s.shape();
    let sites: Vec<(usize, usize)> = s.points().collect();
    (0..shape.len())
        .map(|i| {
            let (r, c) = shape.coords(i);
            sites
                .iter()
                .map(|&(sr, sc)| {
                    let dr = r as f64 - sr as f64;
                    let dc = c as f64 - sc as f64;
                    (dr * dr + dc * dc).sqrt()
                })
                .fold(f64::INFINITY, f64::min)
        })
        .collect()
}

/// Tri-state class from a raw distance, written out case by case.
pub fn classify_distance(d: f64, b1: f64, b2: f64) -> f64 {
    if d == 0.0 {
        1.0
    } else if 0.0 < d && d <= b1 {
        1.0
    } else if b1 < d && d <= b2 {
        0.5
    } else {
        0.0
    }
}

/// Random energy with small integer costs, so every sum is exact in `f64`.
/// Roughly a third of the nodes get a hard constraint; at least one node of
/// each class is forced when `n >= 2`.
pub fn random_cut_problem(rng: &mut impl Rng, n: usize) -> CutProblem {
    let unary = (0..n)
        .map(|_| [rng.random_range(0..20) as f64, rng.random_range(0..20) as f64])
        .collect();
    let mut pairwise = Vec::new();
    for i in 0..n {
        for j in i + 1..n {
            if rng.random_bool(0.35) {
                pairwise.push((i, j, rng.random_range(0..15) as f64));
            }
        }
    }
    let mut hard: Vec<Option<bool>> = (0..n)
        .map(|_| match rng.random_range(0..6) {
            0 => Some(true),
            1 => Some(false),
            _ => None,
        })
        .collect();
    if n >= 2 {
        hard[0] = Some(true);
        hard[n - 1] = Some(false);
    }
    CutProblem { unary, pairwise, hard }
}

/// Exhaustive minimum over all seed-consistent labelings. Returns the
/// minimum energy and one minimiser, or `None` when no labeling is feasible.
pub fn brute_force_min_cut(p: &CutProblem) -> Option<(f64, Vec<bool>)> {
    let n = p.unary.len();
    assert!(n <= 24, "enumeration over 2^{n} labelings");
    let mut best: Option<(f64, Vec<bool>)> = None;
    for bits in 0u32..(1u32 << n) {
        let labels: Vec<bool> = (0..n).map(|i| bits >> i & 1 == 1).collect();
        if !p.hard.iter().zip(&labels).all(|(h, &l)| h.is_none_or(|w| w == l)) {
            continue;
        }
        let mut e = 0.0;
        for (i, u) in p.unary.iter().enumerate() {
            e += if labels[i] { u[1] } else { u[0] };
        }
        for &(i, j, w) in &p.pairwise {
            if labels[i] != labels[j] {
                e += w;
            }
        }
        if best.as_ref().is_none_or(|(b, _)| e < *b) {
            best = Some((e, labels));
        }
    }
    best
}

/// Every cluster is a single 8-connected region (flood fill per cluster).
pub fn clusters_connected(sp: &SuperpixelMap) -> bool {
    let shape = sp.shape;
    let k = sp.len();
    let mut first = vec![None; k];
    for (i, &l) in sp.labels.iter().enumerate() {
        if l >= k {
            return false;
        }
        first[l].get_or_insert(i);
    }
    for (l, start) in first.iter().enumerate() {
        let Some(start) = *start else { return false };
        let mut seen = vec![false; shape.len()];
        let mut stack = vec![start];
        seen[start] = true;
        let mut reached = 0;
        while let Some(i) = stack.pop() {
            reached += 1;
            let (r, c) = shape.coords(i);
            for dr in -1isize..=1 {
                for dc in -1isize..=1 {
                    let (rr, cc) = (r as isize + dr, c as isize + dc);
                    if shape.contains(rr, cc) {
                        let j = shape.index(rr as usize, cc as usize);
                        if !seen[j] && sp.labels[j] == l {
                            seen[j] = true;
                            stack.push(j);
                        }
                    }
                }
            }
        }
        if reached != sp.labels.iter().filter(|&&x| x == l).count() {
            return false;
        }
    }
    true
}

/// Number of 8-connected components of a mask.
pub fn component_count(mask: &BinaryMask) -> usize {
    let shape = mask.shape();
    let mut seen = vec![false; shape.len()];
    let mut count = 0;
    for start in 0..shape.len() {
        if !mask.data()[start] || seen[start] {
            continue;
        }
        count += 1;
        let mut stack = vec![start];
        seen[start] = true;
        while let Some(i) = stack.pop() {
            let (r, c) = shape.coords(i);
            for dr in -1isize..=1 {
                for dc in -1isize..=1 {
                    if mask.get_signed(r as isize + dr, c as isize + dc) {
                        let j = shape.index((r as isize + dr) as usize, (c as isize + dc) as usize);
                        if !seen[j] {
                            seen[j] = true;
                            stack.push(j);
                        }
                    }
                }
            }
        }
    }
    count
}

/// `(tp, fp, fn, tn)` by walking both masks pixel by pixel.
pub fn brute_force_confusion(pred: &BinaryMask, gt: &BinaryMask) -> (u64, u64, u64, u64) {
    assert_eq!(pred.shape(), gt.shape());
    let Shape { height, width } = pred.shape();
    let (mut tp, mut fp, mut fn_, mut tn) = (0, 0, 0, 0);
    for r in 0..height {
        for c in 0..width {
            match (pred.get(r, c), gt.get(r, c)) {
                (true, true) => tp += 1,
                (true, false) => fp += 1,
                (false, true) => fn_ += 1,
                (false, false) => tn += 1,
            }
        }
    }
    (tp, fp, fn_, tn)
}

/// Central finite-difference gradient of `f` at `x` with step `h`.
pub fn central_difference(f: impl Fn(&[f64]) -> f64, x: &[f64], h: f64) -> Vec<f64> {
    let mut probe = x.to_vec();
    (0..x.len())
        .map(|i| {
            let orig = probe[i];
            probe[i] = orig + h;
            let up = f(&probe);
            probe[i] = orig - h;
            let down = f(&probe);
            probe[i] = orig;
            (up - down) / (2.0 * h)
        })
        .collect()
}

/// Largest `|a - b| / max(|a|, |b|, floor)` over paired entries.
pub fn max_relative_error(a: &[f64], b: &[f64], floor: f64) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y).abs() / x.abs().max(y.abs()).max(floor))
        .fold(0.0, f64::max)
}

/// Per-pixel alpha blend toward `tint`.
pub fn blend(px: [f64; 3], tint: [f64; 3], alpha: f64) -> [f64; 3] {
    [
        (1.0 - alpha) * px[0] + alpha * tint[0],
        (1.0 - alpha) * px[1] + alpha * tint[1],
        (1.0 - alpha) * px[2] + alpha * tint[2],
    ]
}

/// Length of the part of a polyline that lies over the image, measured by
/// cutting every segment into pieces of at most 0.1 px and keeping those
/// whose midpoint falls inside a pixel.
pub fn clipped_arc_length(line: &[(f64, f64)], shape: Shape) -> f64 {
    let (h, w) = (shape.height as f64 - 0.5, shape.width as f64 - 0.5);
    let mut total = 0.0;
    for seg in line.windows(2) {
        let (a, b) = (seg[0], seg[1]);
        let len = ((b.0 - a.0).powi(2) + (b.1 - a.1).powi(2)).sqrt();
        let pieces = (len / 0.1).ceil().max(1.0) as usize;
        for k in 0..pieces {
            let t = (k as f64 + 0.5) / pieces as f64;
            let (r, c) = (a.0 + (b.0 - a.0) * t, a.1 + (b.1 - a.1) * t);
            if r >= -0.5 && r < h && c >= -0.5 && c < w {
                total += len / pieces as f64;
            }
        }
    }
    total
}
