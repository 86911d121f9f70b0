//! Seeded SLIC superpixels.
//!
//! Centres start at the foreground and background seeds; a regular grid with
//! the standard SLIC interval `S = sqrt(H*W / n_slic)` fills the gaps (a
//! grid point is added only when no centre lies within `S/2`). Assignment
//! uses the usual `(L*a*b*, row, col)` distance with compactness `m`:
//! `D^2 = d_lab^2 + (d_xy / S)^2 * m^2`, searched in a `2S x 2S` window.

use std::collections::BTreeSet;

use super::{grid_positions, ExpansionConfig, SeedSet};
use crate::color::{rgb_to_lab, sq_dist};
use crate::error::{Error, Result};
use crate::raster::{RasterImage, Shape};

const UNASSIGNED: usize = usize::MAX;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Center {
    pub row: f64,
    pub col: f64,
    pub lab: [f64; 3],
}

#[derive(Clone, Debug, PartialEq)]
pub struct SuperpixelMap {
    pub shape: Shape,
    /// Cluster id per pixel, `0..len()`, numbered by first appearance in
    /// row-major order.
    pub labels: Vec<usize>,
    /// Pixel centroid and mean colour per cluster.
    pub centers: Vec<Center>,
    /// Mean CIELAB colour per cluster.
    pub mean_color: Vec<[f64; 3]>,
    pub sizes: Vec<usize>,
    /// Sorted `(i, j)`, `i < j`, for clusters sharing a 4-neighbour boundary.
    pub adjacency: Vec<(usize, usize)>,
    /// Number of centres SLIC started from.
    pub initial_centers: usize,
}

impl SuperpixelMap {
    /// Derives per-cluster statistics for an arbitrary labeling. Labels are
    /// compacted to first-appearance order.
    pub fn from_labels(img: &RasterImage, labels: &[usize]) -> Result<Self> {
        let shape = img.shape();
        if labels.len() != shape.len() {
            return Err(Error::param("label buffer length does not match image"));
        }
        let lab: Vec<[f64; 3]> = img.pixels().map(rgb_to_lab).collect();
        Ok(Self::build(shape, &lab, labels, 0))
    }

    fn build(shape: Shape, lab: &[[f64; 3]], raw: &[usize], initial_centers: usize) -> Self {
        let mut remap = std::collections::HashMap::new();
        let labels: Vec<usize> = raw
            .iter()
            .map(|&l| {
                let next = remap.len();
                *remap.entry(l).or_insert(next)
            })
            .collect();
        let k = remap.len();
        let mut sums = vec![[0.0f64; 5]; k];
        let mut sizes = vec![0usize; k];
        for (i, &l) in labels.iter().enumerate() {
            let (r, c) = shape.coords(i);
            let s = &mut sums[l];
            s[0] += r as f64;
            s[1] += c as f64;
            s[2] += lab[i][0];
            s[3] += lab[i][1];
            s[4] += lab[i][2];
            sizes[l] += 1;
        }
        let centers: Vec<Center> = sums
            .iter()
            .zip(&sizes)
            .map(|(s, &n)| {
                let n = n as f64;
                Center {
                    row: s[0] / n,
                    col: s[1] / n,
                    lab: [s[2] / n, s[3] / n, s[4] / n],
                }
            })
            .collect();
        let mut adjacency = BTreeSet::new();
        for r in 0..shape.height {
            for c in 0..shape.width {
                let a = labels[shape.index(r, c)];
                for (rr, cc) in [(r + 1, c), (r, c + 1)] {
                    if rr < shape.height && cc < shape.width {
                        let b = labels[shape.index(rr, cc)];
                        if a != b {
                            adjacency.insert((a.min(b), a.max(b)));
                        }
                    }
                }
            }
        }
        Self {
            shape,
            labels,
            mean_color: centers.iter().map(|c| c.lab).collect(),
            centers,
            sizes,
            adjacency: adjacency.into_iter().collect(),
            initial_centers,
        }
    }

    pub fn len(&self) -> usize {
        self.sizes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sizes.is_empty()
    }

    #[inline]
    pub fn label_at(&self, row: usize, col: usize) -> usize {
        self.labels[self.shape.index(row, col)]
    }
}

/// Initial centres: foreground seeds, background seeds, then grid fill.
fn initial_centers(shape: Shape, lab: &[[f64; 3]], seeds: &SeedSet, n_slic: usize, interval: f64) -> Vec<Center> {
    let mut taken = vec![false; shape.len()];
    let mut centers = Vec::new();
    let make = |r: usize, c: usize| Center {
        row: r as f64,
        col: c as f64,
        lab: lab[shape.index(r, c)],
    };
    for &(r, c) in seeds.foreground.iter().chain(&seeds.background) {
        let i = shape.index(r, c);
        if !taken[i] {
            taken[i] = true;
            centers.push(make(r, c));
        }
    }
    let min_sq = (interval / 2.0).powi(2);
    for r in grid_positions(shape.height, interval) {
        for c in grid_positions(shape.width, interval) {
            if centers.len() >= n_slic {
                return centers;
            }
            let clear = centers
                .iter()
                .all(|k| (k.row - r as f64).powi(2) + (k.col - c as f64).powi(2) >= min_sq);
            if clear {
                centers.push(make(r, c));
            }
        }
    }
    centers
}

/// Seeded SLIC. Every pixel ends up in exactly one 8-connected cluster.
pub fn slic(img: &RasterImage, seeds: &SeedSet, cfg: &ExpansionConfig) -> Result<SuperpixelMap> {
    let shape = img.shape();
    if shape.is_empty() {
        return Err(Error::param("SLIC needs a non-empty image"));
    }
    for &(r, c) in seeds.foreground.iter().chain(&seeds.background) {
        if r >= shape.height || c >= shape.width {
            return Err(Error::param(format!("seed ({r},{c}) lies outside the image")));
        }
    }
    let lab: Vec<[f64; 3]> = img.pixels().map(rgb_to_lab).collect();
    let interval = (shape.len() as f64 / cfg.n_slic as f64).sqrt().max(1.0);
    let mut centers = initial_centers(shape, &lab, seeds, cfg.n_slic, interval);
    if centers.len() < 2 {
        return Err(Error::param(format!(
            "SLIC needs at least 2 centres, got {}",
            centers.len()
        )));
    }
    let initial = centers.len();
    let spatial_weight = (cfg.slic_compactness / interval).powi(2);
    let reach = interval.ceil() as isize;

    let mut labels = vec![UNASSIGNED; shape.len()];
    let mut dist = vec![f64::INFINITY; shape.len()];
    for _ in 0..cfg.slic_iterations {
        labels.fill(UNASSIGNED);
        dist.fill(f64::INFINITY);
        for (id, k) in centers.iter().enumerate() {
            let (cr, cc) = (k.row.round() as isize, k.col.round() as isize);
            let r0 = (cr - reach).max(0) as usize;
            let r1 = ((cr + reach) as usize).min(shape.height - 1);
            let c0 = (cc - reach).max(0) as usize;
            let c1 = ((cc + reach) as usize).min(shape.width - 1);
            for r in r0..=r1 {
                for c in c0..=c1 {
                    let i = shape.index(r, c);
                    let dxy = (r as f64 - k.row).powi(2) + (c as f64 - k.col).powi(2);
                    let d = sq_dist(lab[i], k.lab) + dxy * spatial_weight;
                    // strict: the lowest id wins ties
                    if d < dist[i] {
                        dist[i] = d;
                        labels[i] = id;
                    }
                }
            }
        }
        let mut sums = vec![[0.0f64; 6]; centers.len()];
        for (i, &l) in labels.iter().enumerate() {
            if l == UNASSIGNED {
                continue;
            }
            let (r, c) = shape.coords(i);
            let s = &mut sums[l];
            s[0] += r as f64;
            s[1] += c as f64;
            s[2] += lab[i][0];
            s[3] += lab[i][1];
            s[4] += lab[i][2];
            s[5] += 1.0;
        }
        for (k, s) in centers.iter_mut().zip(&sums) {
            if s[5] > 0.0 {
                *k = Center {
                    row: s[0] / s[5],
                    col: s[1] / s[5],
                    lab: [s[2] / s[5], s[3] / s[5], s[4] / s[5]],
                };
            }
        }
    }

    let connected = enforce_connectivity(shape, &labels);
    Ok(SuperpixelMap::build(shape, &lab, &connected, initial))
}

const NEIGHBORS_8: [(isize, isize); 8] = [
    (-1, -1),
    (-1, 0),
    (-1, 1),
    (0, -1),
    (0, 1),
    (1, -1),
    (1, 0),
    (1, 1),
];

/// Keeps the largest 8-connected fragment of each cluster and merges every
/// other fragment (and any unassigned region) into the largest cluster it
/// touches. Fragments touching only other fragments wait for a later round.
fn enforce_connectivity(shape: Shape, labels: &[usize]) -> Vec<usize> {
    // component labeling
    let mut comp = vec![usize::MAX; shape.len()];
    let mut comp_label = Vec::new();
    let mut comp_size = Vec::new();
    let mut stack = Vec::new();
    for start in 0..shape.len() {
        if comp[start] != usize::MAX {
            continue;
        }
        let id = comp_label.len();
        let l = labels[start];
        comp[start] = id;
        stack.push(start);
        let mut size = 0;
        while let Some(i) = stack.pop() {
            size += 1;
            let (r, c) = shape.coords(i);
            for (dr, dc) in NEIGHBORS_8 {
                let (rr, cc) = (r as isize + dr, c as isize + dc);
                if shape.contains(rr, cc) {
                    let j = shape.index(rr as usize, cc as usize);
                    if comp[j] == usize::MAX && labels[j] == l {
                        comp[j] = id;
                        stack.push(j);
                    }
                }
            }
        }
        comp_label.push(l);
        comp_size.push(size);
    }

    let n_comp = comp_label.len();
    let mut neighbors: Vec<BTreeSet<usize>> = vec![BTreeSet::new(); n_comp];
    for r in 0..shape.height {
        for c in 0..shape.width {
            let a = comp[shape.index(r, c)];
            for (dr, dc) in [(0isize, 1isize), (1, -1), (1, 0), (1, 1)] {
                let (rr, cc) = (r as isize + dr, c as isize + dc);
                if shape.contains(rr, cc) {
                    let b = comp[shape.index(rr as usize, cc as usize)];
                    if a != b {
                        neighbors[a].insert(b);
                        neighbors[b].insert(a);
                    }
                }
            }
        }
    }

    // largest fragment per label keeps it; ties go to the earlier fragment
    let mut keeper: std::collections::HashMap<usize, usize> = std::collections::HashMap::new();
    for id in 0..n_comp {
        let l = comp_label[id];
        if l == UNASSIGNED {
            continue;
        }
        match keeper.get(&l) {
            Some(&best) if comp_size[best] >= comp_size[id] => {}
            _ => {
                keeper.insert(l, id);
            }
        }
    }
    let mut owner: Vec<Option<usize>> = vec![None; n_comp];
    let mut cluster_size: std::collections::HashMap<usize, usize> = std::collections::HashMap::new();
    for (&l, &id) in &keeper {
        owner[id] = Some(l);
        cluster_size.insert(l, comp_size[id]);
    }

    let mut pending: Vec<usize> = (0..n_comp).filter(|&id| owner[id].is_none()).collect();
    while !pending.is_empty() {
        let mut still = Vec::new();
        let mut progressed = false;
        for &id in &pending {
            let best = neighbors[id]
                .iter()
                .filter_map(|&nb| owner[nb])
                .max_by(|&a, &b| cluster_size[&a].cmp(&cluster_size[&b]).then(b.cmp(&a)));
            match best {
                Some(l) => {
                    owner[id] = Some(l);
                    *cluster_size.get_mut(&l).unwrap() += comp_size[id];
                    progressed = true;
                }
                None => still.push(id),
            }
        }
        if !progressed {
            // nothing owned anywhere (cannot happen with >= 1 assigned pixel)
            let id = still.remove(0);
            owner[id] = Some(id);
            cluster_size.insert(id, comp_size[id]);
        }
        pending = still;
    }

    comp.iter().map(|&id| owner[id].unwrap_or(0)).collect()
}
