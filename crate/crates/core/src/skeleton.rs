//! Scribble generation from full road masks and road-specific seed extraction.
//!
//! Thinning follows Zhang-Suen's two sub-iteration scheme. Candidates are
//! collected per sub-iteration as usual but then deleted one at a time in
//! row-major order, re-checking the deletion test against the partially
//! updated image. Every accepted deletion is then a simple, non-end pixel, so
//! 8-connected components survive (the plain parallel scheme erases 2x2
//! blocks and 2-pixel-thick diagonals).

use crate::error::{Error, Result};
use crate::raster::{BinaryMask, ScribbleMap};

/// Ring order N, NE, E, SE, S, SW, W, NW (Zhang-Suen's P2..P9).
const RING: [(isize, isize); 8] = [
    (-1, 0),
    (-1, 1),
    (0, 1),
    (1, 1),
    (1, 0),
    (1, -1),
    (0, -1),
    (-1, -1),
];

/// 4-neighbours first, then diagonals; used to walk staircases without
/// cutting corners.
const WALK_ORDER: [(isize, isize); 8] = [
    (-1, 0),
    (0, 1),
    (1, 0),
    (0, -1),
    (-1, 1),
    (1, 1),
    (1, -1),
    (-1, -1),
];

pub type Point = (usize, usize);

fn ring(mask: &BinaryMask, r: usize, c: usize) -> [bool; 8] {
    RING.map(|(dr, dc)| mask.get_signed(r as isize + dr, c as isize + dc))
}

/// Number of set 8-neighbours.
fn neighbor_count(n: &[bool; 8]) -> usize {
    n.iter().filter(|&&v| v).count()
}

/// Number of 0 -> 1 transitions around the closed ring.
fn transitions(n: &[bool; 8]) -> usize {
    (0..8).filter(|&i| !n[i] && n[(i + 1) % 8]).count()
}

fn deletable(n: &[bool; 8], first_pass: bool) -> bool {
    let b = neighbor_count(n);
    if !(2..=6).contains(&b) || transitions(n) != 1 {
        return false;
    }
    let [p2, _, p4, _, p6, _, p8, _] = *n;
    if first_pass {
        !(p2 && p4 && p6) && !(p4 && p6 && p8)
    } else {
        !(p2 && p4 && p8) && !(p2 && p6 && p8)
    }
}

/// Reduce a binary mask to a 1-pixel-wide, 8-connected centreline.
pub fn skeletonize(mask: &BinaryMask) -> ScribbleMap {
    let mut out = mask.clone();
    loop {
        let mut changed = false;
        for first_pass in [true, false] {
            let candidates: Vec<Point> = out
                .points()
                .filter(|&(r, c)| deletable(&ring(&out, r, c), first_pass))
                .collect();
            for (r, c) in candidates {
                if deletable(&ring(&out, r, c), first_pass) {
                    out.set(r, c, false);
                    changed = true;
                }
            }
        }
        if !changed {
            return out;
        }
    }
}

/// Road key points `d_key`.
#[derive(Clone, Debug, Default, PartialEq, Eq, serde::Serialize)]
pub struct KeyPointSet {
    pub intersections: Vec<Point>,
    pub endpoints: Vec<Point>,
}

impl KeyPointSet {
    pub fn all(&self) -> impl Iterator<Item = Point> + '_ {
        self.intersections.iter().chain(&self.endpoints).copied()
    }

    pub fn len(&self) -> usize {
        self.intersections.len() + self.endpoints.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// A pixel is an endpoint when it has exactly one 8-neighbour, and an
/// intersection when it has at least three neighbours that split into at least
/// three separate runs around its ring. The run test stops the arm pixels
/// next to a crossing, which touch the neighbouring arms diagonally, from
/// being reported as extra intersections.
pub fn detect_keypoints(s: &ScribbleMap) -> KeyPointSet {
    let mut keys = KeyPointSet::default();
    for (r, c) in s.points() {
        let n = ring(s, r, c);
        let count = neighbor_count(&n);
        if count == 1 {
            keys.endpoints.push((r, c));
        } else if count >= 3 && transitions(&n) >= 3 {
            keys.intersections.push((r, c));
        }
    }
    keys
}

/// Representative points `d_rep`: every branch is walked from its key point
/// and a point is emitted every `stride` pixels of arc length, starting with
/// the branch origin. Branches are enumerated in row-major order of their key
/// point; closed loops with no key point start at their first pixel.
pub fn sample_representative(s: &ScribbleMap, stride: usize) -> Result<Vec<Point>> {
    if stride < 1 {
        return Err(Error::param("sampling stride must be at least 1"));
    }
    let shape = s.shape();
    let keys = detect_keypoints(s);
    let mut is_node = vec![false; shape.len()];
    let mut nodes: Vec<Point> = keys.all().collect();
    nodes.sort_unstable();
    for &(r, c) in &nodes {
        is_node[shape.index(r, c)] = true;
    }

    let mut visited = vec![false; shape.len()];
    let mut emitted = vec![false; shape.len()];
    let mut out = Vec::new();
    let mut emit_path = |path: &[Point], out: &mut Vec<Point>| {
        for &(r, c) in path.iter().step_by(stride) {
            let i = shape.index(r, c);
            if !emitted[i] {
                emitted[i] = true;
                out.push((r, c));
            }
        }
    };

    for &start in &nodes {
        visited[shape.index(start.0, start.1)] = true;
        while let Some(first) = branch_start(s, &is_node, &visited, start) {
            let path = walk(s, &is_node, &mut visited, start, first);
            emit_path(&path, &mut out);
        }
        // key points touching a later key point form a two-pixel branch
        for (dr, dc) in WALK_ORDER {
            let (r, c) = (start.0 as isize + dr, start.1 as isize + dc);
            if s.get_signed(r, c) && is_node[shape.index(r as usize, c as usize)] && (r as usize, c as usize) > start {
                emit_path(&[start, (r as usize, c as usize)], &mut out);
            }
        }
    }

    // Closed loops and anything the node walks could not reach.
    for i in 0..shape.len() {
        if s.data()[i] && !visited[i] {
            let start = shape.coords(i);
            visited[i] = true;
            let mut path = vec![start];
            if let Some(first) = next_step(s, &is_node, &visited, start, None, start, 1) {
                path = walk(s, &is_node, &mut visited, start, first);
            }
            emit_path(&path, &mut out);
        }
    }
    Ok(out)
}

fn walk(
    s: &ScribbleMap,
    is_node: &[bool],
    visited: &mut [bool],
    start: Point,
    first: Point,
) -> Vec<Point> {
    let shape = s.shape();
    let mut path = vec![start, first];
    let mut prev = start;
    let mut cur = first;
    loop {
        let ci = shape.index(cur.0, cur.1);
        if is_node[ci] {
            return path;
        }
        visited[ci] = true;
        match next_step(s, is_node, visited, cur, Some(prev), start, path.len()) {
            Some(next) => {
                path.push(next);
                prev = cur;
                cur = next;
            }
            None => return path,
        }
    }
}

/// First pixel of a not yet walked branch leaving a key point. Key points
/// touching each other directly do not form a branch.
fn branch_start(s: &ScribbleMap, is_node: &[bool], visited: &[bool], node: Point) -> Option<Point> {
    let shape = s.shape();
    WALK_ORDER.iter().find_map(|(dr, dc)| {
        let (r, c) = (node.0 as isize + dr, node.1 as isize + dc);
        if !s.get_signed(r, c) {
            return None;
        }
        let i = shape.index(r as usize, c as usize);
        (!is_node[i] && !visited[i]).then_some((r as usize, c as usize))
    })
}

/// Preference: 4-adjacent node, 4-adjacent fresh pixel, diagonal node,
/// diagonal fresh pixel. The walk origin may only be re-entered once the
/// path has length > 2, which closes loops without bouncing straight back.
fn next_step(
    s: &ScribbleMap,
    is_node: &[bool],
    visited: &[bool],
    cur: Point,
    prev: Option<Point>,
    origin: Point,
    path_len: usize,
) -> Option<Point> {
    let shape = s.shape();
    let candidates = |offsets: &[(isize, isize)], want_node: bool| {
        offsets.iter().find_map(|(dr, dc)| {
            let (r, c) = (cur.0 as isize + dr, cur.1 as isize + dc);
            if !s.get_signed(r, c) {
                return None;
            }
            let p = (r as usize, c as usize);
            if Some(p) == prev || (p == origin && path_len <= 2) {
                return None;
            }
            let i = shape.index(p.0, p.1);
            let ok = if want_node { is_node[i] } else { !is_node[i] && !visited[i] };
            ok.then_some(p)
        })
    };
    let (straight, diagonal) = WALK_ORDER.split_at(4);
    candidates(straight, true)
        .or_else(|| candidates(straight, false))
        .or_else(|| candidates(diagonal, true))
        .or_else(|| candidates(diagonal, false))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::oracle;
    use crate::raster::Shape;

    fn parse(rows: &[&str]) -> BinaryMask {
        let shape = Shape::new(rows.len(), rows[0].len());
        BinaryMask::from_fn(shape, |r, c| rows[r].as_bytes()[c] == b'1')
    }

    /// Textbook parallel Zhang-Suen.
    fn classic_zhang_suen(mask: &BinaryMask) -> BinaryMask {
        let mut out = mask.clone();
        loop {
            let mut changed = false;
            for first_pass in [true, false] {
                let del: Vec<Point> = out
                    .points()
                    .filter(|&(r, c)| deletable(&ring(&out, r, c), first_pass))
                    .collect();
                changed |= !del.is_empty();
                for (r, c) in del {
                    out.set(r, c, false);
                }
            }
            if !changed {
                return out;
            }
        }
    }

    #[test]
    fn empty_and_single_pixel() {
        let shape = Shape::new(5, 5);
        assert_eq!(skeletonize(&BinaryMask::empty(shape)).count(), 0);
        let mut one = BinaryMask::empty(shape);
        one.set(2, 3, true);
        assert_eq!(skeletonize(&one), one);
    }

    #[test]
    fn bar_thins_to_its_medial_row() {
        let shape = Shape::new(9, 26);
        let bar = BinaryMask::from_fn(shape, |r, c| (3..6).contains(&r) && (3..23).contains(&c));
        let medial = BinaryMask::from_fn(shape, |r, c| r == 4 && (3..23).contains(&c));
        let skel = skeletonize(&bar);
        assert!(skel.points().all(|(r, c)| medial.get(r, c)), "{:?}", skel.points().collect::<Vec<_>>());
        assert!((18..=20).contains(&skel.count()), "{}", skel.count());
        // the parallel scheme also stays on the medial row but eats further into the ends
        let classic = classic_zhang_suen(&bar);
        assert!(classic.points().all(|(r, c)| medial.get(r, c)));
        assert!(classic.count() <= skel.count());
    }

    #[test]
    fn two_by_two_block_survives() {
        let block = parse(&["0000", "0110", "0110", "0000"]);
        assert!(classic_zhang_suen(&block).count() == 0);
        let skel = skeletonize(&block);
        assert!(skel.count() >= 1);
    }

    #[test]
    fn keypoints_line_plus_ring() {
        let line = parse(&["000000000000", "011111111110", "000000000000"]);
        let k = detect_keypoints(&line);
        assert_eq!(k.endpoints, vec![(1, 1), (1, 10)]);
        assert!(k.intersections.is_empty());

        let plus = parse(&[
            "000000000", "000010000", "000010000", "000010000", "011111110", "000010000",
            "000010000", "000010000", "000000000",
        ]);
        let k = detect_keypoints(&plus);
        assert_eq!(k.intersections, vec![(4, 4)]);
        assert_eq!(k.endpoints.len(), 4);

        let ring = parse(&["0000000", "0011100", "0100010", "0100010", "0011100", "0000000"]);
        let k = detect_keypoints(&ring);
        assert!(k.is_empty(), "{k:?}");
    }

    #[test]
    fn stride_sampling_on_line() {
        let line = parse(&["0000000000", "1111111111", "0000000000"]);
        let pts = sample_representative(&line, 3).unwrap();
        assert_eq!(pts, vec![(1, 0), (1, 3), (1, 6), (1, 9)]);
        let pts = sample_representative(&line, 50).unwrap();
        assert_eq!(pts, vec![(1, 0)]);
        assert!(sample_representative(&line, 0).is_err());
        assert!(sample_representative(&BinaryMask::empty(Shape::new(4, 4)), 2).unwrap().is_empty());
    }

    #[test]
    fn stride_sampling_walks_through_junction() {
        let tee = parse(&[
            "0000000000000", "0111111111110", "0000001000000", "0000001000000", "0000001000000",
            "0000001000000", "0000000000000",
        ]);
        let pts = sample_representative(&tee, 100).unwrap();
        // branch origins only: the left endpoint and the junction, which starts
        // both the right arm and the stem
        assert_eq!(pts, vec![(1, 1), (1, 6)]);
        let pts = sample_representative(&tee, 2).unwrap();
        assert!(pts.iter().all(|&(r, c)| tee.get(r, c)));
        assert!(pts.contains(&(1, 3)) && pts.contains(&(1, 8)));
    }

    #[test]
    fn ring_is_sampled() {
        let ring = parse(&["0000000", "0011100", "0100010", "0100010", "0011100", "0000000"]);
        let pts = sample_representative(&ring, 3).unwrap();
        assert_eq!(pts[0], (1, 2));
        assert!(pts.len() >= 3);
    }

    fn arb_mask() -> impl proptest::strategy::Strategy<Value = BinaryMask> {
        use proptest::prelude::*;
        (2usize..24, 2usize..24, prop::collection::vec((0usize..24, 0usize..24, 1usize..6, 1usize..6), 1..6))
            .prop_map(|(h, w, rects)| {
                BinaryMask::from_fn(Shape::new(h, w), |r, c| {
                    rects.iter().any(|&(r0, c0, rh, cw)| (r0..r0 + rh).contains(&r) && (c0..c0 + cw).contains(&c))
                })
            })
    }

    proptest::proptest! {
        #[test]
        fn skeleton_properties(mask in arb_mask()) {
            let skel = skeletonize(&mask);
            proptest::prop_assert!(skel.points().all(|(r, c)| mask.get(r, c)));
            proptest::prop_assert_eq!(skeletonize(&skel), skel.clone());
            proptest::prop_assert_eq!(oracle::component_count(&skel), oracle::component_count(&mask));
            for (r, c) in skel.points() {
                proptest::prop_assert!(neighbor_count(&ring(&skel, r, c)) < 8);
            }
            let keys = detect_keypoints(&skel);
            for p in keys.all().chain(sample_representative(&skel, 3).unwrap()) {
                proptest::prop_assert!(skel.get(p.0, p.1));
            }
            for &(r, c) in &keys.endpoints {
                proptest::prop_assert_eq!(neighbor_count(&ring(&skel, r, c)), 1);
            }
            for &(r, c) in &keys.intersections {
                proptest::prop_assert!(neighbor_count(&ring(&skel, r, c)) >= 3);
            }
        }

        #[test]
        fn every_scribble_pixel_is_walked(mask in arb_mask()) {
            // stride 1 emits every pixel of every branch exactly once
            let skel = skeletonize(&mask);
            let mut pts = sample_representative(&skel, 1).unwrap();
            pts.sort_unstable();
            let all: Vec<Point> = skel.points().collect();
            proptest::prop_assert_eq!(pts, all);
        }
    }
}
