//! Quick runs of the oracle checks on fixtures drawn from one seed.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use roadmix_core::io::TensorBlob;
use roadmix_core::losses::{cosine_loss, partial_bce, patch_adv_loss, PatchScoreMap, RealFakeFlag};
use roadmix_core::metrics;
use roadmix_core::oracle;
use roadmix_core::scle::{distance_transform, slic, statistic_expand, ExpansionConfig, SeedSet};
use roadmix_core::{BinaryMask, PredictionMap, RasterImage, Shape, TriLabel};

#[derive(Debug, Serialize)]
pub struct CheckResult {
    pub name: String,
    pub pass: bool,
    pub detail: String,
}

fn check(name: &str, pass: bool, detail: String) -> CheckResult {
    CheckResult { name: name.into(), pass, detail }
}

fn random_mask(rng: &mut ChaCha8Rng, shape: Shape, density: f64) -> BinaryMask {
    BinaryMask::from_fn(shape, |_, _| rng.random_bool(density))
}

fn distance(rng: &mut ChaCha8Rng) -> CheckResult {
    let shape = Shape::new(32, 32);
    let cfg = ExpansionConfig::default();
    let mut bad = 0;
    for _ in 0..10 {
        let s = random_mask(rng, shape, 0.01);
        if s.count() == 0 {
            continue;
        }
        let ys = statistic_expand(&distance_transform(&s).unwrap(), &cfg);
        bad += oracle::brute_force_distance(&s)
            .iter()
            .zip(ys.data())
            .filter(|(&d, &y)| oracle::classify_distance(d, cfg.b1, cfg.b2) != y)
            .count();
    }
    check("distance bands", bad == 0, format!("{bad} mismatched pixels"))
}

fn min_cut(rng: &mut ChaCha8Rng) -> CheckResult {
    let mut bad = 0;
    for _ in 0..30 {
        let n = rng.random_range(2..=12);
        let p = oracle::random_cut_problem(rng, n);
        let best = oracle::brute_force_min_cut(&p).map(|b| b.0);
        if p.solve().ok().map(|s| s.cost) != best {
            bad += 1;
        }
    }
    check("min cut", bad == 0, format!("{bad} of 30 graphs off the exhaustive minimum"))
}

fn superpixels(rng: &mut ChaCha8Rng) -> CheckResult {
    let shape = Shape::new(24, 24);
    let cfg = ExpansionConfig { n_slic: 16, ..Default::default() };
    let mut bad = 0;
    for _ in 0..5 {
        let img = RasterImage::new(shape, (0..shape.len() * 3).map(|_| rng.random()).collect()).unwrap();
        let mut pick = || (rng.random_range(0..24), rng.random_range(0..24));
        let seeds = SeedSet { foreground: vec![pick(), pick()], background: vec![pick(), pick()] };
        let a = slic(&img, &seeds, &cfg).unwrap();
        let b = slic(&img, &seeds, &cfg).unwrap();
        if !oracle::clusters_connected(&a) || a.labels != b.labels {
            bad += 1;
        }
    }
    check("superpixels", bad == 0, format!("{bad} of 5 images disconnected or non-deterministic"))
}

fn gradients(rng: &mut ChaCha8Rng) -> CheckResult {
    let shape = Shape::new(8, 8);
    let y = TriLabel::new(shape, (0..64).map(|_| rng.random_range(0..3) as f64 / 2.0).collect()).unwrap();
    let p: Vec<f64> = (0..64).map(|_| rng.random_range(0.05..0.95)).collect();
    let q: Vec<f64> = (0..64).map(|_| rng.random_range(0.05..0.95)).collect();
    let bce = |x: &[f64]| partial_bce(&y, &PredictionMap::new(shape, x.to_vec()).unwrap()).unwrap().value;
    let g = partial_bce(&y, &PredictionMap::new(shape, p.clone()).unwrap()).unwrap().grad;
    let e1 = oracle::max_relative_error(&g, &oracle::central_difference(bce, &p, 1e-6), 1e-8);
    let (_, g) = cosine_loss(&p, &q).unwrap();
    let e2 = oracle::max_relative_error(
        &g,
        &oracle::central_difference(|x| cosine_loss(x, &q).unwrap().0, &p, 1e-6),
        1e-8,
    );
    let scores: Vec<f64> = (0..16)
        .flat_map(|_| {
            let a = rng.random_range(0.05..0.95);
            [a, 1.0 - a]
        })
        .collect();
    let map = PatchScoreMap::new(4, scores.clone()).unwrap();
    let (_, g) = patch_adv_loss(&map, RealFakeFlag::Real);
    let f = |x: &[f64]| patch_adv_loss(&PatchScoreMap::new(4, x.to_vec()).unwrap(), RealFakeFlag::Real).0;
    let e3 = oracle::max_relative_error(&g, &oracle::central_difference(f, &scores, 1e-7), 1e-8);
    let worst = e1.max(e2).max(e3);
    check("gradients", worst <= 1e-4, format!("max relative error {worst:.1e}"))
}

fn metric_counts(rng: &mut ChaCha8Rng) -> CheckResult {
    let mut bad = 0;
    for _ in 0..20 {
        let shape = Shape::new(rng.random_range(1..20), rng.random_range(1..20));
        let (p, g) = (random_mask(rng, shape, 0.4), random_mask(rng, shape, 0.4));
        let c = metrics::confusion(&p, &g).unwrap();
        if (c.tp, c.fp, c.fn_, c.tn) != oracle::brute_force_confusion(&p, &g) {
            bad += 1;
        }
    }
    check("metrics", bad == 0, format!("{bad} of 20 mask pairs miscounted"))
}

fn tensor_round_trip(rng: &mut ChaCha8Rng) -> CheckResult {
    let data: Vec<f32> = (0..24).map(|_| rng.random()).collect();
    let blob = TensorBlob::new(vec![2, 3, 4], data).unwrap();
    let back = TensorBlob::decode(&blob.encode()).unwrap();
    let same = back.dims == blob.dims && back.data.iter().zip(&blob.data).all(|(a, b)| a.to_bits() == b.to_bits());
    check("tensor round trip", same, format!("{} values", blob.data.len()))
}

pub fn run_all(seed: u64) -> Vec<CheckResult> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    vec![
        distance(&mut rng),
        min_cut(&mut rng),
        superpixels(&mut rng),
        gradients(&mut rng),
        metric_counts(&mut rng),
        tensor_round_trip(&mut rng),
    ]
}
