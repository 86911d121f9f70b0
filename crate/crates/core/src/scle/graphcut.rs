//! Seeded binary labeling of superpixels by minimum s-t cut.

use super::maxflow::MaxFlow;
use super::{ExpansionConfig, SeedSet, SuperpixelMap};
use crate::color::sq_dist;
use crate::error::{Error, Result};
use crate::raster::TriLabel;

/// Binary energy `E(x) = sum_i U_i(x_i) + sum_(i,j) w_ij [x_i != x_j]` with
/// optional hard constraints. `true` is foreground (source side).
#[derive(Clone, Debug, Default, PartialEq)]
pub struct CutProblem {
    /// `[cost if background, cost if foreground]` per node.
    pub unary: Vec<[f64; 2]>,
    /// Potts weights, `w >= 0`.
    pub pairwise: Vec<(usize, usize, f64)>,
    pub hard: Vec<Option<bool>>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct CutSolution {
    pub labels: Vec<bool>,
    /// Energy of `labels`; equals the max-flow value plus the unary offsets.
    pub cost: f64,
    pub flow: f64,
}

impl CutProblem {
    pub fn len(&self) -> usize {
        self.unary.len()
    }

    pub fn is_empty(&self) -> bool {
        self.unary.is_empty()
    }

    fn validate(&self) -> Result<()> {
        if self.hard.len() != self.unary.len() {
            return Err(Error::param("hard constraint list length differs from node count"));
        }
        if self.unary.iter().flatten().any(|u| !u.is_finite() || *u < 0.0) {
            return Err(Error::Numeric("unary costs must be finite and non-negative".into()));
        }
        for &(i, j, w) in &self.pairwise {
            if i >= self.len() || j >= self.len() {
                return Err(Error::param(format!("pairwise term ({i},{j}) references a missing node")));
            }
            if !w.is_finite() || w < 0.0 {
                return Err(Error::Numeric("pairwise weights must be finite and non-negative".into()));
            }
        }
        Ok(())
    }

    /// Energy of a labeling, ignoring hard constraints.
    pub fn energy(&self, labels: &[bool]) -> f64 {
        let unary: f64 = self
            .unary
            .iter()
            .zip(labels)
            .map(|(u, &fg)| u[usize::from(fg)])
            .sum();
        let pairwise: f64 = self
            .pairwise
            .iter()
            .filter(|&&(i, j, _)| labels[i] != labels[j])
            .map(|&(_, _, w)| w)
            .sum();
        unary + pairwise
    }

    pub fn respects_hard(&self, labels: &[bool]) -> bool {
        self.hard
            .iter()
            .zip(labels)
            .all(|(h, &l)| h.is_none_or(|want| want == l))
    }

    /// Exact minimiser via max-flow.
    pub fn solve(&self) -> Result<CutSolution> {
        self.validate()?;
        let n = self.len();
        let (source, sink) = (n, n + 1);
        let finite_total: f64 = self.unary.iter().flatten().sum::<f64>()
            + self.pairwise.iter().map(|p| p.2).sum::<f64>();
        let hard_cap = 2.0 * finite_total + 1.0;

        let mut g = MaxFlow::new(n + 2);
        let mut offset = 0.0;
        for (i, (&[bg, fg], hard)) in self.unary.iter().zip(&self.hard).enumerate() {
            let base = bg.min(fg);
            offset += base;
            // cutting source->i puts i on the sink (background) side
            if bg > base {
                g.add_edge(source, i, bg - base);
            }
            if fg > base {
                g.add_edge(i, sink, fg - base);
            }
            match hard {
                Some(true) => g.add_edge(source, i, hard_cap),
                Some(false) => g.add_edge(i, sink, hard_cap),
                None => {}
            }
        }
        for &(i, j, w) in &self.pairwise {
            if w > 0.0 && i != j {
                g.add_edge(i, j, w);
                g.add_edge(j, i, w);
            }
        }
        let flow = g.max_flow(source, sink);
        let labels: Vec<bool> = g.source_side(source).into_iter().take(n).collect();
        if !self.respects_hard(&labels) {
            return Err(Error::param("contradictory hard constraints"));
        }
        let cost = self.energy(&labels);
        Ok(CutSolution {
            labels,
            cost,
            flow: flow + offset,
        })
    }
}

#[derive(Clone, Debug)]
pub struct GraphCutOutcome {
    /// Binary content label broadcast to pixels.
    pub label: TriLabel,
    pub superpixel_labels: Vec<bool>,
    pub sigma: f64,
    pub fg_seeded: usize,
    pub bg_seeded: usize,
    pub cost: f64,
}

/// Graph cut over superpixels; see [`graph_cut_detailed`].
pub fn graph_cut(sp: &SuperpixelMap, seeds: &SeedSet, cfg: &ExpansionConfig) -> Result<TriLabel> {
    graph_cut_detailed(sp, seeds, cfg).map(|o| o.label)
}

/// Superpixels holding a foreground seed are tied to the foreground and
/// those holding only background seeds to the background. Unseeded ones pay
/// `d_fg / (d_fg + d_bg)` for foreground and `d_bg / (d_fg + d_bg)` for
/// background, where `d_*` is the CIELAB distance to the size-weighted mean
/// colour of the seeded clusters of that class. Adjacent clusters pay
/// `gc_lambda * exp(-|c_i - c_j|^2 / (2 sigma^2))` for disagreeing.
pub fn graph_cut_detailed(
    sp: &SuperpixelMap,
    seeds: &SeedSet,
    cfg: &ExpansionConfig,
) -> Result<GraphCutOutcome> {
    let k = sp.len();
    let mut hard: Vec<Option<bool>> = vec![None; k];
    for &(r, c) in &seeds.background {
        if r < sp.shape.height && c < sp.shape.width {
            hard[sp.label_at(r, c)] = Some(false);
        }
    }
    // foreground wins where a cluster holds both kinds
    for &(r, c) in &seeds.foreground {
        if r < sp.shape.height && c < sp.shape.width {
            hard[sp.label_at(r, c)] = Some(true);
        }
    }
    let fg_seeded = hard.iter().filter(|h| **h == Some(true)).count();
    let bg_seeded = hard.iter().filter(|h| **h == Some(false)).count();
    if fg_seeded == 0 {
        return Err(Error::MissingSeeds { missing: "foreground" });
    }
    if bg_seeded == 0 {
        return Err(Error::MissingSeeds { missing: "background" });
    }

    let class_mean = |want: bool| {
        let mut acc = [0.0; 3];
        let mut n = 0.0;
        for (i, h) in hard.iter().enumerate() {
            if *h == Some(want) {
                let w = sp.sizes[i] as f64;
                for (a, v) in acc.iter_mut().zip(sp.mean_color[i]) {
                    *a += w * v;
                }
                n += w;
            }
        }
        acc.map(|a| a / n)
    };
    let (fg_mean, bg_mean) = (class_mean(true), class_mean(false));

    let unary = (0..k)
        .map(|i| {
            if hard[i].is_some() {
                return [0.0, 0.0];
            }
            let d_fg = sq_dist(sp.mean_color[i], fg_mean).sqrt();
            let d_bg = sq_dist(sp.mean_color[i], bg_mean).sqrt();
            let total = d_fg + d_bg;
            if total == 0.0 {
                [0.5, 0.5]
            } else {
                [d_bg / total, d_fg / total]
            }
        })
        .collect();

    let sigma = match cfg.gc_sigma {
        Some(s) => s,
        None => {
            let dists: Vec<f64> = sp
                .adjacency
                .iter()
                .map(|&(i, j)| sq_dist(sp.mean_color[i], sp.mean_color[j]).sqrt())
                .collect();
            let mean = dists.iter().sum::<f64>() / dists.len().max(1) as f64;
            if mean > 0.0 { mean } else { 1.0 }
        }
    };
    let pairwise = sp
        .adjacency
        .iter()
        .map(|&(i, j)| {
            let d2 = sq_dist(sp.mean_color[i], sp.mean_color[j]);
            (i, j, cfg.gc_lambda * (-d2 / (2.0 * sigma * sigma)).exp())
        })
        .collect();

    let problem = CutProblem { unary, pairwise, hard };
    let solution = problem.solve()?;
    let data = sp
        .labels
        .iter()
        .map(|&l| if solution.labels[l] { 1.0 } else { 0.0 })
        .collect();
    Ok(GraphCutOutcome {
        label: TriLabel::from_raw(sp.shape, data),
        superpixel_labels: solution.labels,
        sigma,
        fg_seeded,
        bg_seeded,
        cost: solution.cost,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::oracle;
    use crate::raster::{RasterImage, Shape};
    use rand::{Rng, SeedableRng};

    #[test]
    fn chain_of_three() {
        // fg - middle - bg; middle leans foreground, weaker edge on the bg side
        let p = CutProblem {
            unary: vec![[0.0, 0.0], [0.8, 0.2], [0.0, 0.0]],
            pairwise: vec![(0, 1, 0.9), (1, 2, 0.3)],
            hard: vec![Some(true), None, Some(false)],
        };
        let sol = p.solve().unwrap();
        assert_eq!(sol.labels, vec![true, true, false]);
        // the two feasible cuts cost 0.2 + 0.3 and 0.8 + 0.9
        assert!((sol.cost - 0.5).abs() < 1e-12);
        assert!((sol.flow - sol.cost).abs() < 1e-12);
    }

    #[test]
    fn random_small_problems_match_enumeration() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        for _ in 0..40 {
            let n = rng.random_range(1..=10);
            let p = oracle::random_cut_problem(&mut rng, n);
            let sol = p.solve().unwrap();
            let (best, _) = oracle::brute_force_min_cut(&p).unwrap();
            assert_eq!(sol.cost, best);
            assert_eq!(sol.flow, best);
            assert!(p.respects_hard(&sol.labels));
        }
    }

    #[test]
    fn all_seeded_follows_seeds() {
        let shape = Shape::new(2, 2);
        let img = RasterImage::filled(shape, [0.5, 0.5, 0.5]).unwrap();
        let sp = SuperpixelMap::from_labels(&img, &[0, 1, 2, 3]).unwrap();
        let seeds = SeedSet {
            foreground: vec![(0, 0), (1, 1)],
            background: vec![(0, 1), (1, 0)],
        };
        let y = graph_cut(&sp, &seeds, &ExpansionConfig::default()).unwrap();
        assert_eq!(y.data(), &[1.0, 0.0, 0.0, 1.0]);
    }

    #[test]
    fn superpixel_chain_by_colour() {
        // three vertical stripes: dark road, grey-ish, bright field
        let shape = Shape::new(4, 12);
        let data = (0..shape.len())
            .flat_map(|i| match shape.coords(i).1 / 4 {
                0 => [0.2, 0.2, 0.2],
                1 => [0.3, 0.3, 0.3],
                _ => [0.2, 0.8, 0.2],
            })
            .collect();
        let img = RasterImage::new(shape, data).unwrap();
        let labels: Vec<usize> = (0..shape.len()).map(|i| shape.coords(i).1 / 4).collect();
        let sp = SuperpixelMap::from_labels(&img, &labels).unwrap();
        let seeds = SeedSet {
            foreground: vec![(1, 1)],
            background: vec![(1, 10)],
        };
        let out = graph_cut_detailed(&sp, &seeds, &ExpansionConfig::default()).unwrap();
        assert_eq!(out.superpixel_labels, vec![true, true, false]);
    }

    #[test]
    fn missing_seeds() {
        let shape = Shape::new(1, 2);
        let img = RasterImage::filled(shape, [0.5, 0.5, 0.5]).unwrap();
        let sp = SuperpixelMap::from_labels(&img, &[0, 1]).unwrap();
        let only_fg = SeedSet { foreground: vec![(0, 0)], background: vec![] };
        assert!(matches!(
            graph_cut(&sp, &only_fg, &ExpansionConfig::default()),
            Err(Error::MissingSeeds { missing: "background" })
        ));
    }
}
