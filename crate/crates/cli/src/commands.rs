use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use roadmix_core::io::{self, PipelineConfig, TensorBlob};
use roadmix_core::losses::{evaluate_losses, LossInputs, LossReport, LossWeights, PatchScoreMap, RealFakeFlag};
use roadmix_core::metrics::{self, Averaging, ConfusionCounts, MetricReport};
use roadmix_core::samix::sa_mix;
use roadmix_core::scle::{self, ExpansionStats};
use roadmix_core::skeleton::skeletonize;
use roadmix_core::synth::{gen_dataset, SceneSpec};
use roadmix_core::{BinaryMask, PredictionMap, TriLabel};

use crate::run::{self, Ledger};
use crate::{load_config, selftest, Cli, CliError, Command, LossEvalArgs, SynthArgs};

/// Runs one parsed invocation. `config` replaces the file/environment
/// configuration when replaying a recorded run.
pub fn dispatch(cli: &Cli, argv: &[String], config: Option<PipelineConfig>) -> Result<()> {
    let mut cfg = match config {
        Some(c) => c,
        None => load_config(cli.config.as_ref())?,
    };
    let mut ledger = Ledger::default();
    if let Some(p) = &cli.config {
        ledger.input(p)?;
    }
    let (name, record_path) = match &cli.command {
        Command::MakeScribbles { masks, out } => {
            make_scribbles(masks, out, &mut ledger)?;
            ("make-scribbles", run::record_path_for_dir(out))
        }
        Command::Expand { images, scribbles, out } => {
            expand(images, scribbles, out, &cfg, &mut ledger)?;
            ("expand", run::record_path_for_dir(out))
        }
        Command::Mix { images, labels, pairs, out } => {
            mix(images, labels, pairs, out, &cfg, &mut ledger)?;
            ("mix", run::record_path_for_dir(out))
        }
        Command::LossEval(args) => {
            if let Some(w) = &args.weights {
                cfg.loss = parse_weights(w, cfg.loss)?;
            }
            loss_eval(args, &cfg, &mut ledger)?;
            ("loss-eval", run::record_path_for_file(&args.out))
        }
        Command::Metrics { pred, gt, tau, averaging, out } => {
            if let Some(t) = tau {
                cfg.metrics.tau = *t;
            }
            cfg.validate()?;
            metrics_cmd(pred, gt, cfg.metrics.tau, (*averaging).into(), out, &mut ledger)?;
            ("metrics", run::record_path_for_file(out))
        }
        Command::Synth(args) => {
            synth(args, &mut ledger)?;
            ("synth", run::record_path_for_dir(&args.out))
        }
        Command::Overlay { image, label, out } => {
            ledger.inputs([image, label])?;
            let img = io::load_rgb(image)?;
            let y = io::load_tri(label)?;
            io::save_rgb(out, &io::render_overlay(&img, &y)?)?;
            ledger.output(out.clone());
            ("overlay", run::record_path_for_file(out))
        }
        Command::Selftest { seed, out } => {
            let results = selftest::run_all(*seed);
            for r in &results {
                println!("{} {}: {}", if r.pass { "PASS" } else { "FAIL" }, r.name, r.detail);
            }
            let failed: Vec<&str> = results.iter().filter(|r| !r.pass).map(|r| r.name.as_str()).collect();
            if let Some(out) = out {
                io::write_json(out, &results)?;
                ledger.seed("selftest", *seed);
                ledger.output(out.clone());
                ledger.finish("selftest", argv, &cfg, &run::record_path_for_file(out))?;
            }
            if !failed.is_empty() {
                return Err(CliError::Check(format!("self-test failed: {}", failed.join(", "))).into());
            }
            return Ok(());
        }
        Command::Replay { run } => return replay(run),
    };
    ledger.finish(name, argv, &cfg, &record_path)?;
    Ok(())
}

fn create_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))
}

/// `(id, path)` for every file with extension `ext` in `dir`, sorted by id.
fn list_files(dir: &Path, ext: &str) -> Result<Vec<(String, PathBuf)>> {
    let mut out = Vec::new();
    let entries = std::fs::read_dir(dir).with_context(|| format!("listing {}", dir.display()))?;
    for entry in entries {
        let path = entry?.path();
        if path.is_file() && path.extension().is_some_and(|e| e == ext) {
            let id = path.file_stem().unwrap_or_default().to_string_lossy().into_owned();
            out.push((id, path));
        }
    }
    out.sort();
    Ok(out)
}

fn require(path: PathBuf) -> Result<PathBuf> {
    if path.is_file() {
        Ok(path)
    } else {
        Err(CliError::Data(format!("missing input {}", path.display())).into())
    }
}

fn make_scribbles(masks: &Path, out: &Path, ledger: &mut Ledger) -> Result<()> {
    let files = list_files(masks, "png")?;
    ledger.inputs(files.iter().map(|(_, p)| p))?;
    create_dir(out)?;
    let written: Vec<PathBuf> = files
        .par_iter()
        .map(|(id, path)| -> Result<PathBuf> {
            let target = out.join(format!("{id}.png"));
            io::save_mask(&target, &skeletonize(&io::load_mask(path)?))?;
            Ok(target)
        })
        .collect::<Result<_>>()?;
    written.into_iter().for_each(|p| ledger.output(p));
    Ok(())
}

#[derive(Serialize)]
struct ExpandSidecar<'a> {
    id: &'a str,
    foreground_seed_points: &'a [(usize, usize)],
    background_seed_points: &'a [(usize, usize)],
    #[serde(flatten)]
    stats: &'a ExpansionStats,
}

fn expand(images: &Path, scribbles: &Path, out: &Path, cfg: &PipelineConfig, ledger: &mut Ledger) -> Result<()> {
    cfg.expansion.validate()?;
    let files = list_files(images, "png")?;
    let pairs: Vec<(String, PathBuf, PathBuf)> = files
        .into_iter()
        .map(|(id, img)| Ok((id.clone(), img, require(scribbles.join(format!("{id}.png")))?)))
        .collect::<Result<_>>()?;
    for (_, img, s) in &pairs {
        ledger.inputs([img, s])?;
    }
    for sub in ["ys", "yc", "y", "stats"] {
        create_dir(&out.join(sub))?;
    }
    let written: Vec<Vec<PathBuf>> = pairs
        .par_iter()
        .map(|(id, img_path, s_path)| -> Result<Vec<PathBuf>> {
            let img = io::load_rgb(img_path)?;
            let s = io::load_mask(s_path)?;
            let e = scle::expand(&img, &s, &cfg.expansion).with_context(|| format!("expanding {id}"))?;
            let mut files = Vec::new();
            for (sub, y) in [("ys", &e.ys), ("yc", &e.yc), ("y", &e.y)] {
                let p = out.join(sub).join(format!("{id}.png"));
                io::save_tri(&p, y)?;
                files.push(p);
            }
            let sidecar = ExpandSidecar {
                id,
                foreground_seed_points: &e.seeds.foreground,
                background_seed_points: &e.seeds.background,
                stats: &e.stats,
            };
            let p = out.join("stats").join(format!("{id}.json"));
            io::write_json(&p, &sidecar)?;
            files.push(p);
            Ok(files)
        })
        .collect::<Result<_>>()?;
    written.into_iter().flatten().for_each(|p| ledger.output(p));
    Ok(())
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct PairRecord {
    pub a: String,
    pub b: String,
    pub gate: bool,
    pub kl_value: f64,
}

fn resolve_pairs(spec: &str, ids: &[String], ledger: &mut Ledger) -> Result<Vec<(String, String)>> {
    if let Some(seed) = spec.strip_prefix("random:") {
        let seed: u64 = seed
            .parse()
            .map_err(|_| CliError::Usage(format!("random pairing needs an integer seed, got `{seed}`")))?;
        ledger.seed("pairs", seed);
        let mut order = ids.to_vec();
        order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
        return Ok(order.chunks_exact(2).map(|c| (c[0].clone(), c[1].clone())).collect());
    }
    let path = PathBuf::from(spec);
    ledger.input(&path)?;
    let text = std::fs::read_to_string(&path).with_context(|| format!("reading {}", path.display()))?;
    let pairs: Vec<(String, String)> =
        serde_json::from_str(&text).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?;
    Ok(pairs)
}

fn mix(
    images: &Path,
    labels: &Path,
    pairs: &str,
    out: &Path,
    cfg: &PipelineConfig,
    ledger: &mut Ledger,
) -> Result<()> {
    cfg.mix.validate()?;
    let ids: Vec<String> = list_files(images, "png")?.into_iter().map(|(id, _)| id).collect();
    let pairs = resolve_pairs(pairs, &ids, ledger)?;
    let mut used: Vec<&String> = pairs.iter().flat_map(|(a, b)| [a, b]).collect();
    used.sort();
    used.dedup();
    for id in used {
        ledger.input(&require(images.join(format!("{id}.png")))?)?;
        ledger.input(&require(labels.join(format!("{id}.png")))?)?;
    }
    create_dir(out)?;
    let results: Vec<(PairRecord, Vec<PathBuf>)> = pairs
        .par_iter()
        .map(|(a, b)| -> Result<(PairRecord, Vec<PathBuf>)> {
            let load = |id: &str| -> Result<_> {
                Ok((io::load_rgb(&images.join(format!("{id}.png")))?, io::load_tri(&labels.join(format!("{id}.png")))?))
            };
            let ((x1, y1), (x2, y2)) = (load(a)?, load(b)?);
            let m = sa_mix(&x1, &x2, &y1, &y2, &cfg.mix).with_context(|| format!("mixing {a} with {b}"))?;
            let dir = out.join(format!("{a}__{b}"));
            create_dir(&dir)?;
            let mut files = Vec::new();
            for (name, x) in [("x_m_12", &m.x_m_12), ("x_m_21", &m.x_m_21)] {
                let p = dir.join(format!("{name}.png"));
                io::save_rgb(&p, x)?;
                files.push(p);
            }
            for (name, y) in [("y_m_12", &m.y_m_12), ("y_m_21", &m.y_m_21), ("y1", &y1), ("y2", &y2)] {
                let p = dir.join(format!("{name}.png"));
                io::save_tri(&p, y)?;
                files.push(p);
            }
            let record = PairRecord { a: a.clone(), b: b.clone(), gate: m.gate, kl_value: m.kl_value };
            let p = dir.join("pair.json");
            io::write_json(&p, &record)?;
            files.push(p);
            Ok((record, files))
        })
        .collect::<Result<_>>()?;
    let mut manifest = Vec::with_capacity(results.len());
    for (record, files) in results {
        manifest.push(record);
        files.into_iter().for_each(|p| ledger.output(p));
    }
    let p = out.join("pairs.json");
    io::write_json(&p, &manifest)?;
    ledger.output(p);
    Ok(())
}

/// `l1=0.1,l2=0.1`; either key may be omitted.
pub fn parse_weights(text: &str, mut base: LossWeights) -> Result<LossWeights> {
    for part in text.split(',').map(str::trim).filter(|p| !p.is_empty()) {
        let (key, value) = part
            .split_once('=')
            .ok_or_else(|| CliError::Usage(format!("weight `{part}` is not key=value")))?;
        let v: f64 = value
            .trim()
            .parse()
            .map_err(|_| CliError::Usage(format!("weight `{part}` has a non-numeric value")))?;
        match key.trim() {
            "l1" | "lambda1" => base.lambda1 = v,
            "l2" | "lambda2" => base.lambda2 = v,
            other => return Err(CliError::Usage(format!("unknown weight `{other}`; expected l1 or l2")).into()),
        }
    }
    base.validate()?;
    Ok(base)
}

#[derive(Serialize)]
struct LossEvalReport<'a> {
    #[serde(flatten)]
    report: &'a LossReport,
    gate: bool,
    adversarial: Option<RealFakeFlag>,
}

fn read_prediction(path: &Path) -> Result<(PredictionMap, Vec<usize>)> {
    let blob = io::read_tensor(path)?;
    let p = blob.to_prediction().with_context(|| format!("reading {}", path.display()))?;
    Ok((p, blob.dims))
}

fn loss_eval(args: &LossEvalArgs, cfg: &PipelineConfig, ledger: &mut Ledger) -> Result<()> {
    let pred = |name: &str| require(args.pred.join(format!("{name}.rtb")));
    let label = |dir: &Path, name: &str| require(dir.join(format!("{name}.png")));
    let p_paths = [pred("p1")?, pred("p2")?, pred("pm12")?, pred("pm21")?];
    let y_paths = [
        label(&args.labels, "y1")?,
        label(&args.labels, "y2")?,
        label(&args.mixed, "y_m_12")?,
        label(&args.mixed, "y_m_21")?,
    ];
    ledger.inputs(p_paths.iter().chain(&y_paths))?;
    let d_path = args.pred.join("d.rtb");
    let d_path = d_path.is_file().then_some(d_path);
    if let Some(p) = &d_path {
        ledger.input(p)?;
    }

    let gate = match args.gate {
        Some(g) => g,
        None => {
            let path = require(args.mixed.join("pair.json"))?;
            ledger.input(&path)?;
            let text = std::fs::read_to_string(&path).with_context(|| format!("reading {}", path.display()))?;
            let record: PairRecord =
                serde_json::from_str(&text).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?;
            record.gate
        }
    };

    let mut preds = Vec::new();
    let mut dims = Vec::new();
    for p in &p_paths {
        let (map, d) = read_prediction(p)?;
        preds.push(map);
        dims.push(d);
    }
    let ys: Vec<TriLabel> = y_paths.iter().map(|p| io::load_tri(p)).collect::<roadmix_core::Result<_>>()?;

    let scores = match &d_path {
        Some(p) => {
            let blob = io::read_tensor(p)?;
            let n = match blob.dims.as_slice() {
                [a, b, 2] if a == b => *a,
                other => {
                    return Err(CliError::Data(format!("{}: discriminator scores need dims [n, n, 2], got {other:?}", p.display())).into())
                }
            };
            let data = blob.data.iter().map(|&v| v as f64).collect();
            Some(PatchScoreMap::new(n, data).with_context(|| format!("reading {}", p.display()))?)
        }
        None => None,
    };
    let flag: RealFakeFlag = args.adv_flag.into();

    let inputs = LossInputs {
        y1: &ys[0],
        y2: &ys[1],
        y_m_12: &ys[2],
        y_m_21: &ys[3],
        p1: &preds[0],
        p2: &preds[1],
        p_m_12: &preds[2],
        p_m_21: &preds[3],
        gate,
        adversarial: scores.as_ref().map(|s| (s, flag)),
    };
    let report = evaluate_losses(&inputs, cfg.loss)?;

    if let Some(dir) = &args.grads {
        create_dir(dir)?;
        let dims_of = |key: &str| -> Vec<usize> {
            match key {
                "p1" => dims[0].clone(),
                "p2" => dims[1].clone(),
                "pm12" | "pbar12" => dims[2].clone(),
                "pm21" | "pbar21" => dims[3].clone(),
                _ => {
                    let n = scores.as_ref().map_or(0, |s| s.n());
                    vec![n, n, 2]
                }
            }
        };
        for (key, g) in &report.grads {
            let p = dir.join(format!("grad_{key}.rtb"));
            io::write_tensor(&p, &TensorBlob::from_f64(dims_of(key), g)?)?;
            ledger.output(p);
        }
    }
    let doc = LossEvalReport { report: &report, gate, adversarial: scores.as_ref().map(|_| flag) };
    io::write_json(&args.out, &doc)?;
    ledger.output(args.out.clone());
    for w in &report.warnings {
        eprintln!("warning: {w}");
    }
    Ok(())
}

#[derive(Serialize)]
struct ImageMetrics {
    id: String,
    #[serde(flatten)]
    report: MetricReport,
    counts: ConfusionCounts,
}

#[derive(Serialize)]
struct MetricsDocument {
    tau: f64,
    averaging: Averaging,
    images: usize,
    aggregate: MetricReport,
    counts: ConfusionCounts,
    per_image: Vec<ImageMetrics>,
}

fn metrics_cmd(pred: &Path, gt: &Path, tau: f64, averaging: Averaging, out: &Path, ledger: &mut Ledger) -> Result<()> {
    let gts = list_files(gt, "png")?;
    if gts.is_empty() {
        return Err(CliError::Data(format!("no ground-truth masks in {}", gt.display())).into());
    }
    let mut jobs = Vec::with_capacity(gts.len());
    for (id, g) in gts {
        let tensor = pred.join(format!("{id}.rtb"));
        let p = if tensor.is_file() { tensor } else { require(pred.join(format!("{id}.png")))? };
        ledger.inputs([&p, &g])?;
        jobs.push((id, p, g));
    }
    let per_image: Vec<ImageMetrics> = jobs
        .par_iter()
        .map(|(id, p, g)| -> Result<ImageMetrics> {
            let mask: BinaryMask = if p.extension().is_some_and(|e| e == "rtb") {
                metrics::binarize(&read_prediction(p)?.0, tau)
            } else {
                io::load_mask(p)?
            };
            let (report, counts) =
                metrics::evaluate(&mask, &io::load_mask(g)?).with_context(|| format!("scoring {id}"))?;
            Ok(ImageMetrics { id: id.clone(), report, counts })
        })
        .collect::<Result<_>>()?;
    let counts: Vec<ConfusionCounts> = per_image.iter().map(|m| m.counts).collect();
    let doc = MetricsDocument {
        tau,
        averaging,
        images: per_image.len(),
        aggregate: metrics::aggregate(&counts, averaging),
        counts: counts.iter().copied().sum(),
        per_image,
    };
    io::write_json(out, &doc)?;
    ledger.output(out.to_path_buf());
    let a = doc.aggregate;
    println!("iou {:.4} f1 {:.4} precision {:.4} recall {:.4}", a.iou, a.f1, a.precision, a.recall);
    Ok(())
}

fn synth(args: &SynthArgs, ledger: &mut Ledger) -> Result<()> {
    let template = SceneSpec {
        seed: 0,
        size: (args.size, args.size),
        n_roads: args.roads,
        width_range: (args.min_width, args.max_width),
        curvature: args.curvature,
        bg_texture: args.texture.into(),
        distractors: args.distractors,
    };
    ledger.seed("dataset", args.seed);
    create_dir(&args.out)?;
    let manifest = gen_dataset(&template, args.count, args.seed, &args.out)?;
    for s in &manifest.scenes {
        for p in [&s.image, &s.mask, &s.scribble] {
            ledger.output(args.out.join(p));
        }
    }
    ledger.output(args.out.join("manifest.json"));
    Ok(())
}

fn replay(path: &Path) -> Result<()> {
    let record = run::load(path)?;
    if record.command == "replay" {
        return Err(CliError::Usage("a replay record cannot be replayed".into()).into());
    }
    std::env::set_current_dir(&record.cwd).with_context(|| format!("entering {}", record.cwd.display()))?;
    let mut changed = Vec::new();
    for (input, digest) in &record.inputs {
        if run::sha256_file(Path::new(input))? != *digest {
            changed.push(input.as_str());
        }
    }
    if !changed.is_empty() {
        return Err(CliError::Data(format!("inputs changed since the recorded run: {}", changed.join(", "))).into());
    }
    let cli = <Cli as clap::Parser>::try_parse_from(&record.argv)
        .map_err(|e| CliError::Usage(format!("recorded arguments no longer parse: {e}")))?;
    dispatch(&cli, &record.argv, Some(record.config.clone()))?;
    let mut differing = Vec::new();
    let mut now: BTreeMap<&str, String> = BTreeMap::new();
    for (output, digest) in &record.outputs {
        let d = run::sha256_file(Path::new(output))?;
        if d != *digest {
            differing.push(output.as_str());
        }
        now.insert(output, d);
    }
    if !differing.is_empty() {
        return Err(CliError::Check(format!("outputs differ from the recorded run: {}", differing.join(", "))).into());
    }
    println!("replayed {}: {} outputs identical", record.command, now.len());
    Ok(())
}
