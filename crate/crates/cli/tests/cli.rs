use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use roadmix_core::io::{load_mask, load_tri, read_tensor, write_tensor, TensorBlob};
use roadmix_core::losses::{evaluate_losses, LossInputs, LossWeights, PatchScoreMap, RealFakeFlag};
use roadmix_core::metrics::{aggregate, binarize, confusion, Averaging};
use roadmix_core::{PredictionMap, Shape};
use serde_json::Value;

fn roadmix(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_roadmix"))
        .current_dir(dir)
        .env_remove("ROADMIX_CONFIG")
        .args(args)
        .output()
        .expect("binary runs")
}

fn ok(dir: &Path, args: &[&str]) -> Output {
    let out = roadmix(dir, args);
    assert!(out.status.success(), "{args:?} failed: {}", String::from_utf8_lossy(&out.stderr));
    out
}

fn json(path: PathBuf) -> Value {
    serde_json::from_str(&std::fs::read_to_string(&path).unwrap()).unwrap()
}

fn dataset(dir: &Path) {
    ok(dir, &["synth", "--count", "4", "--seed", "11", "--size", "96", "--out", "data"]);
    ok(dir, &["expand", "--images", "data/images", "--scribbles", "data/scribbles", "--out", "exp"]);
}

fn ramp(shape: Shape, phase: f64) -> PredictionMap {
    PredictionMap::from_fn(shape, |r, c| 0.1 + 0.8 * (((r * 7 + c * 3) as f64 * 0.37 + phase).sin() * 0.5 + 0.5))
        .unwrap()
}

#[test]
fn scribbles_lie_inside_their_masks() {
    let tmp = tempfile::tempdir().unwrap();
    ok(tmp.path(), &["synth", "--count", "2", "--seed", "5", "--size", "64", "--out", "data"]);
    ok(tmp.path(), &["make-scribbles", "--masks", "data/masks", "--out", "scrib"]);
    for id in ["scene_0000", "scene_0001"] {
        let s = load_mask(&tmp.path().join(format!("scrib/{id}.png"))).unwrap();
        let m = load_mask(&tmp.path().join(format!("data/masks/{id}.png"))).unwrap();
        assert!(s.count() > 0);
        assert!(s.points().all(|(r, c)| m.get(r, c)));
        let shipped = load_mask(&tmp.path().join(format!("data/scribbles/{id}.png"))).unwrap();
        assert_eq!(s, shipped);
    }
    assert!(tmp.path().join("scrib/run.json").is_file());
}

#[test]
fn expand_writes_labels_and_sidecars() {
    let tmp = tempfile::tempdir().unwrap();
    dataset(tmp.path());
    let y = load_tri(&tmp.path().join("exp/y/scene_0000.png")).unwrap();
    let s = load_mask(&tmp.path().join("data/scribbles/scene_0000.png")).unwrap();
    assert!(s.points().all(|(r, c)| y.get(r, c) == 1.0));
    let stats = json(tmp.path().join("exp/stats/scene_0000.json"));
    assert_eq!(stats["id"], "scene_0000");
    assert!(stats["foreground_seeds"].as_u64().unwrap() > 0);
    let run = json(tmp.path().join("exp/run.json"));
    assert_eq!(run["command"], "expand");
    assert_eq!(run["inputs"].as_object().unwrap().len(), 8);
    assert_eq!(run["outputs"].as_object().unwrap().len(), 16);
}

#[test]
fn replay_reproduces_and_detects_changed_inputs() {
    let tmp = tempfile::tempdir().unwrap();
    dataset(tmp.path());
    ok(tmp.path(), &["mix", "--images", "data/images", "--labels", "exp/y", "--pairs", "random:4", "--out", "mixed"]);
    for record in ["exp/run.json", "mixed/run.json", "data/run.json"] {
        let out = ok(tmp.path(), &["replay", record]);
        assert!(String::from_utf8_lossy(&out.stdout).contains("outputs identical"));
    }
    let run = json(tmp.path().join("mixed/run.json"));
    assert_eq!(run["seeds"]["pairs"], 4);

    std::fs::copy(tmp.path().join("data/images/scene_0001.png"), tmp.path().join("data/images/scene_0000.png")).unwrap();
    assert_eq!(roadmix(tmp.path(), &["replay", "exp/run.json"]).status.code(), Some(3));
}

#[test]
fn mix_gate_follows_config_from_environment() {
    let tmp = tempfile::tempdir().unwrap();
    dataset(tmp.path());
    std::fs::write(tmp.path().join("open.json"), r#"{"mix": {"t": "inf"}}"#).unwrap();
    std::fs::write(tmp.path().join("pairs.json"), r#"[["scene_0000", "scene_0001"], ["scene_0002", "scene_0003"]]"#)
        .unwrap();
    let out = Command::new(env!("CARGO_BIN_EXE_roadmix"))
        .current_dir(tmp.path())
        .env("ROADMIX_CONFIG", "open.json")
        .args(["mix", "--images", "data/images", "--labels", "exp/y", "--pairs", "pairs.json", "--out", "mixed"])
        .output()
        .unwrap();
    assert!(out.status.success());
    let pairs = json(tmp.path().join("mixed/pairs.json"));
    assert_eq!(pairs.as_array().unwrap().len(), 2);
    assert!(pairs.as_array().unwrap().iter().all(|p| p["gate"] == true));
    let run = json(tmp.path().join("mixed/run.json"));
    assert_eq!(run["config"]["mix"]["t"], "inf");

    // the mixed label keeps every pasted foreground pixel of the donor
    let y2 = load_tri(&tmp.path().join("exp/y/scene_0001.png")).unwrap();
    let m12 = load_tri(&tmp.path().join("mixed/scene_0000__scene_0001/y_m_12.png")).unwrap();
    assert!((0..y2.data().len()).all(|i| y2.data()[i] == 0.0 || m12.data()[i] == y2.data()[i]));
}

#[test]
fn loss_eval_matches_library() {
    let tmp = tempfile::tempdir().unwrap();
    dataset(tmp.path());
    ok(tmp.path(), &["mix", "--images", "data/images", "--labels", "exp/y", "--pairs", "random:1", "--out", "mixed"]);
    let pair_dir = std::fs::read_dir(tmp.path().join("mixed"))
        .unwrap()
        .map(|e| e.unwrap().path())
        .find(|p| p.is_dir())
        .unwrap();
    let y1 = load_tri(&pair_dir.join("y1.png")).unwrap();
    let shape = y1.shape();
    let preds = tmp.path().join("preds");
    std::fs::create_dir(&preds).unwrap();
    let maps: Vec<PredictionMap> = (0..4).map(|k| ramp(shape, k as f64)).collect();
    for (name, p) in ["p1", "p2", "pm12", "pm21"].iter().zip(&maps) {
        write_tensor(&preds.join(format!("{name}.rtb")), &TensorBlob::from_prediction(p)).unwrap();
    }
    let d: Vec<f64> = (0..4).flat_map(|k| [0.2 + 0.05 * k as f64, 0.8 - 0.05 * k as f64]).collect();
    write_tensor(&preds.join("d.rtb"), &TensorBlob::from_f64(vec![2, 2, 2], &d).unwrap()).unwrap();

    let pair = pair_dir.to_str().unwrap();
    ok(
        tmp.path(),
        &["loss-eval", "--pred", "preds", "--labels", pair, "--mixed", pair, "--weights", "l1=0.2,l2=0.3",
          "--adv-flag", "real", "--grads", "grads", "--out", "report.json"],
    );
    let report = json(tmp.path().join("report.json"));

    // reference from the library on the float32-rounded tensors
    let load = |n: &str| read_tensor(&preds.join(format!("{n}.rtb"))).unwrap().to_prediction().unwrap();
    let (p1, p2, pm12, pm21) = (load("p1"), load("p2"), load("pm12"), load("pm21"));
    let y2 = load_tri(&pair_dir.join("y2.png")).unwrap();
    let ym12 = load_tri(&pair_dir.join("y_m_12.png")).unwrap();
    let ym21 = load_tri(&pair_dir.join("y_m_21.png")).unwrap();
    let gate = json(pair_dir.join("pair.json"))["gate"].as_bool().unwrap();
    let scores_data = read_tensor(&preds.join("d.rtb")).unwrap().data.iter().map(|&v| v as f64).collect();
    let scores = PatchScoreMap::new(2, scores_data).unwrap();
    let w = LossWeights { lambda1: 0.2, lambda2: 0.3 };
    let want = evaluate_losses(
        &LossInputs {
            y1: &y1,
            y2: &y2,
            y_m_12: &ym12,
            y_m_21: &ym21,
            p1: &p1,
            p2: &p2,
            p_m_12: &pm12,
            p_m_21: &pm21,
            gate,
            adversarial: Some((&scores, RealFakeFlag::Real)),
        },
        w,
    )
    .unwrap();
    for (key, v) in [("l_seg", want.l_seg), ("l_seg_m", want.l_seg_m), ("l_inv", want.l_inv), ("l_cd", want.l_cd), ("total", want.total)] {
        assert_eq!(report[key].as_f64().unwrap(), v, "{key}");
    }
    assert_eq!(report["gate"], gate);
    assert_eq!(report["adversarial"], "real");
    let total = report["total"].as_f64().unwrap();
    let recomputed = report["l_seg"].as_f64().unwrap()
        + report["l_seg_m"].as_f64().unwrap()
        + 0.2 * report["l_inv"].as_f64().unwrap()
        + 0.3 * report["l_cd"].as_f64().unwrap();
    assert!((total - recomputed).abs() <= 1e-12);

    for key in ["p1", "p2", "pm12", "pm21", "pbar12", "pbar21", "d"] {
        let g = read_tensor(&tmp.path().join(format!("grads/grad_{key}.rtb"))).unwrap();
        let expect: Vec<f32> = want.grads[key].iter().map(|&v| v as f32).collect();
        assert_eq!(g.data, expect, "{key}");
    }
    let pbar = read_tensor(&tmp.path().join("grads/grad_pbar12.rtb")).unwrap();
    assert_eq!(pbar.dims, vec![shape.height, shape.width]);
    assert!(pbar.data.iter().all(|&v| v == 0.0));
    assert_eq!(read_tensor(&tmp.path().join("grads/grad_d.rtb")).unwrap().dims, vec![2, 2, 2]);
    assert!(tmp.path().join("report.run.json").is_file());
}

#[test]
fn metrics_on_tensors_match_library() {
    let tmp = tempfile::tempdir().unwrap();
    ok(tmp.path(), &["synth", "--count", "3", "--seed", "2", "--size", "64", "--out", "data"]);
    let preds = tmp.path().join("preds");
    std::fs::create_dir(&preds).unwrap();
    let mut counts = Vec::new();
    for k in 0..3 {
        let gt = load_mask(&tmp.path().join(format!("data/masks/scene_{k:04}.png"))).unwrap();
        let p = ramp(gt.shape(), k as f64);
        write_tensor(&preds.join(format!("scene_{k:04}.rtb")), &TensorBlob::from_prediction(&p)).unwrap();
        let p32 = read_tensor(&preds.join(format!("scene_{k:04}.rtb"))).unwrap().to_prediction().unwrap();
        counts.push(confusion(&binarize(&p32, 0.6), &gt).unwrap());
    }
    ok(tmp.path(), &["metrics", "--pred", "preds", "--gt", "data/masks", "--tau", "0.6", "--averaging", "macro", "--out", "m.json"]);
    let doc = json(tmp.path().join("m.json"));
    let want = aggregate(&counts, Averaging::Macro);
    assert_eq!(doc["averaging"], "macro");
    assert_eq!(doc["aggregate"]["iou"].as_f64().unwrap(), want.iou);
    assert_eq!(doc["aggregate"]["recall"].as_f64().unwrap(), want.recall);
    assert_eq!(doc["per_image"].as_array().unwrap().len(), 3);
    assert_eq!(json(tmp.path().join("m.run.json"))["config"]["metrics"]["tau"], 0.6);
}

#[test]
fn exit_codes() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    assert_eq!(roadmix(dir, &["no-such-command"]).status.code(), Some(2));
    assert_eq!(roadmix(dir, &["synth", "--count", "1", "--size", "16", "--max-width", "9", "--out", "x"]).status.code(), Some(2));

    std::fs::write(dir.join("bad.json"), r#"{"expansion": {"b3": 1}}"#).unwrap();
    assert_eq!(roadmix(dir, &["--config", "bad.json", "selftest"]).status.code(), Some(2));

    std::fs::create_dir_all(dir.join("preds")).unwrap();
    std::fs::create_dir_all(dir.join("gt")).unwrap();
    let gt = roadmix_core::BinaryMask::from_fn(Shape::new(4, 4), |r, _| r < 2);
    roadmix_core::io::save_mask(&dir.join("gt/a.png"), &gt).unwrap();
    std::fs::write(dir.join("preds/a.rtb"), b"RTB2\x01\x04\x00\x00\x00").unwrap();
    let out = roadmix(dir, &["metrics", "--pred", "preds", "--gt", "gt", "--out", "m.json"]);
    assert_eq!(out.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&out.stderr).contains("format error at 0"));

    // discriminator probabilities outside (0, 1)
    let labels = dir.join("labels");
    std::fs::create_dir_all(&labels).unwrap();
    let y = roadmix_core::TriLabel::filled(Shape::new(2, 2), roadmix_core::Tri::Foreground);
    for n in ["y1", "y2", "y_m_12", "y_m_21"] {
        roadmix_core::io::save_tri(&labels.join(format!("{n}.png")), &y).unwrap();
    }
    let p = PredictionMap::new(Shape::new(2, 2), vec![0.3; 4]).unwrap();
    for n in ["p1", "p2", "pm12", "pm21"] {
        write_tensor(&dir.join(format!("preds/{n}.rtb")), &TensorBlob::from_prediction(&p)).unwrap();
    }
    write_tensor(&dir.join("preds/d.rtb"), &TensorBlob::new(vec![1, 1, 2], vec![0.0, 1.0]).unwrap()).unwrap();
    let args = ["loss-eval", "--pred", "preds", "--labels", "labels", "--mixed", "labels", "--gate", "true", "--out", "r.json"];
    assert_eq!(roadmix(dir, &args).status.code(), Some(4));
    std::fs::remove_file(dir.join("preds/d.rtb")).unwrap();
    let out = roadmix(dir, &args);
    assert_eq!(out.status.code(), Some(0));
    assert!(String::from_utf8_lossy(&out.stderr).contains("l_cd = 0"));
    assert_eq!(roadmix(dir, &["loss-eval", "--pred", "preds", "--labels", "labels", "--mixed", "labels", "--out", "r.json"]).status.code(), Some(3));
    assert_eq!(roadmix(dir, &[&args[..], &["--weights", "l3=1"]].concat()).status.code(), Some(2));
}

#[test]
fn selftest_passes() {
    let tmp = tempfile::tempdir().unwrap();
    let out = ok(tmp.path(), &["selftest", "--seed", "3", "--out", "selftest.json"]);
    let text = String::from_utf8_lossy(&out.stdout);
    assert!(text.lines().all(|l| l.starts_with("PASS")));
    assert_eq!(json(tmp.path().join("selftest.json")).as_array().unwrap().len(), 6);
}
