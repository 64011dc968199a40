use std::path::Path;

use tndisc::pipeline::forest::features;
use tndisc::pipeline::{gen_dataset, run_pipeline, GenParams, PipelineConfig, RandomForest, StageStatus};

fn small_config() -> PipelineConfig {
    PipelineConfig {
        chi: vec![2],
        shots: 200,
        f: 16,
        restarts: 2,
        scan_h: vec![0.2, 0.6, 0.8, 0.9, 1.0, 1.1, 1.2, 1.5, 3.0],
        scan_shots: 100,
        entangled_shots: 400,
        chi_i: 2,
        imps_restarts: 1,
        ..PipelineConfig::default()
    }
}

fn read(p: &Path) -> String {
    std::fs::read_to_string(p).unwrap()
}

#[test]
fn small_run_writes_every_artifact_and_reruns_from_cache() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path();
    let cfg = small_config();
    let first = run_pipeline(&cfg, out).unwrap();
    assert!(first.stages.iter().all(|s| s.status == StageStatus::Computed));

    for f in [
        "data/split.json",
        "data/shots_h0.1_z.json",
        "data/shots_h10_x.json",
        "baseline/rf.json",
        "models/chi2/tensors.json",
        "models/chi2/gauged.json",
        "models/chi2/circuits.json",
        "models/chi2/finetuned.json",
        "models/chi2/pss_histogram.csv",
        "scans/product_rf.csv",
        "scans/product_tensor_chi2.csv",
        "scans/product_circuit_chi2.csv",
        "scans/entangled_chi2_chii2.csv",
        "fits.json",
        "manifest.json",
    ] {
        assert!(out.join(f).exists(), "missing {f}");
    }
    assert_eq!(first.data.n_train + first.data.n_test, 800);
    assert_eq!(first.data.n_train, 640);
    assert_eq!(read(&out.join("models/chi2/pss_histogram.csv")).lines().count(), 21);
    let m = &first.models[0];
    assert!(m.compile.distances.iter().all(|&d| d <= cfg.tol));
    assert!(m.train.train_f1 > 0.6);

    let snapshot: Vec<String> = ["models/chi2/circuits.json", "scans/entangled_chi2_chii2.csv", "fits.json"].iter().map(|f| read(&out.join(f))).collect();
    let second = run_pipeline(&cfg, out).unwrap();
    assert!(second.stages.iter().all(|s| s.status == StageStatus::Cached), "{:?}", second.stages);
    let again: Vec<String> = ["models/chi2/circuits.json", "scans/entangled_chi2_chii2.csv", "fits.json"].iter().map(|f| read(&out.join(f))).collect();
    assert_eq!(snapshot, again);

    // a changed downstream parameter reruns only the stages that depend on it
    let mut cfg2 = cfg.clone();
    cfg2.entangled_shots = 300;
    let third = run_pipeline(&cfg2, out).unwrap();
    for s in &third.stages {
        let expect = if s.name.starts_with("scan-entangled") {
            StageStatus::Computed
        } else {
            StageStatus::Cached
        };
        assert_eq!(s.status, expect, "{}", s.name);
    }

    // a deleted output forces its stage to rerun
    std::fs::remove_file(out.join("models/chi2/finetuned.json")).unwrap();
    let fourth = run_pipeline(&cfg2, out).unwrap();
    let ft = fourth.stages.iter().find(|s| s.name == "finetune-chi2").unwrap();
    assert_eq!(ft.status, StageStatus::Computed);
}

#[test]
fn forest_f1_does_not_depend_on_feature_order() {
    let cfg = small_config();
    let mut p = GenParams::from_config(&cfg);
    p.shots_per_basis = 150;
    let d = gen_dataset(&p).unwrap();
    let (train, test) = (d.train(), d.test());
    let xs: Vec<Vec<f64>> = train.iter().map(features).collect();
    let ys: Vec<usize> = train.iter().map(|s| s.label).collect();
    let xt: Vec<Vec<f64>> = test.iter().map(features).collect();
    let yt: Vec<usize> = test.iter().map(|s| s.label).collect();
    let n = xs[0].len();
    let perm: Vec<usize> = (0..n).map(|k| (2 * n - 1 - k + 5) % n).collect();
    let permute = |rows: &[Vec<f64>]| -> Vec<Vec<f64>> { rows.iter().map(|r| perm.iter().map(|&k| r[k]).collect()).collect() };
    let (xsp, xtp) = (permute(&xs), permute(&xt));

    let mut shift = 0.0;
    for seed in 0..20 {
        let a = RandomForest::fit(&xs, &ys, 2, 20, seed).unwrap().f1(&xt, &yt).average;
        let b = RandomForest::fit(&xsp, &ys, 2, 20, seed).unwrap().f1(&xtp, &yt).average;
        shift += a - b;
    }
    assert!((shift / 20.0).abs() < 0.02, "mean F1 shift {}", shift / 20.0);
}
