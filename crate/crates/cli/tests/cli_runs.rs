//! Small end-to-end runs of every experiment through the library and the
//! binary: output layout, byte-identical reruns, manifests and exit codes.

use std::path::Path;
use std::process::Command;

use emogan_cli::config::ExperimentConfig;
use emogan_cli::error::{EXIT_CONFIG, EXIT_DATA, EXIT_DIVERGENCE};
use emogan_cli::experiments::{
    run_cross_corpus, run_cv, run_generate, run_low_resource, run_metrics, run_toy_compare,
};
use emogan_cli::manifest::{RunManifest, MANIFEST_FILE};
use emogan_core::data::{make_toy_corpus, ToyCorpusConfig};

const SMALL: &str = r#"
seed = 3
models = ["m1", "m2", "m3"]

[corpus]
source = "toy"
feature_dim = 12
per_class = 60
sessions = 3

[target]
source = "toy"
feature_dim = 12
per_class = 40
seed = 5
mean_seed = 0
shift = 0.5

[train]
epochs = 3

[metrics.evaluator]
epochs = 3

[toy]
seeds = 2

[toy.gan]
epochs = 2
target_points = 256
samples = 200

[low_resource]
fractions = [0.5, 1.0]
n_synth = [0, 100]
model = "m1"

[low_resource.classifier]
epochs = 3
"#;

fn small() -> ExperimentConfig {
    let cfg = ExperimentConfig::from_toml(SMALL).unwrap();
    cfg.validate().unwrap();
    cfg
}

fn read(dir: &Path, name: &str) -> Vec<u8> {
    std::fs::read(dir.join(name)).unwrap_or_else(|e| panic!("{name}: {e}"))
}

fn same_outputs(a: &RunManifest, b: &RunManifest) {
    assert_eq!(a.outputs, b.outputs);
    assert_eq!(a.stage_seeds, b.stage_seeds);
}

#[test]
fn toy_compare_writes_scatter_data_and_replays() {
    let cfg = small();
    let (d1, d2) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    let a = run_toy_compare(&cfg, d1.path()).unwrap();
    let b = run_toy_compare(&cfg, d2.path()).unwrap();
    assert_eq!(a.seeds.len(), 2);
    same_outputs(&a.manifest, &b.manifest);
    for name in [
        "source.csv",
        "target.csv",
        "vanilla.csv",
        "info.csv",
        "comparison.svg",
        "toy_report.csv",
    ] {
        assert_eq!(read(d1.path(), name), read(d2.path(), name), "{name}");
    }
    let report = String::from_utf8(read(d1.path(), "toy_report.csv")).unwrap();
    assert_eq!(report.lines().count(), 3);
}

#[test]
fn cv_covers_every_fold_model_and_reference() {
    let cfg = small();
    let d1 = tempfile::tempdir().unwrap();
    let out = run_cv(&cfg, d1.path()).unwrap();
    assert_eq!(out.runs.len(), 9);
    assert_eq!(out.metrics.rows.len(), 18);
    for row in &out.metrics.rows {
        assert!(row.metric1.is_some());
        assert!(row.fid.is_some_and(|v| v >= 0.0));
    }
    for fold in 0..3 {
        for m in ["m1", "m2", "m3"] {
            assert!(d1
                .path()
                .join(format!("fold{fold}/losses_{m}.csv"))
                .is_file());
            assert!(d1
                .path()
                .join(format!("fold{fold}/losses_{m}.svg"))
                .is_file());
        }
        assert!(d1.path().join(format!("fold{fold}/codes_m1.svg")).is_file());
    }
    assert!(d1.path().join("fold0/pca.svg").is_file());
    let codes = String::from_utf8(read(d1.path(), "code_modes.csv")).unwrap();
    // M1 and M2 have mixture priors: 2 models x 3 folds x 4 classes.
    assert_eq!(codes.lines().count(), 1 + 24);

    // Rerunning from the manifest's own config reproduces every hash.
    let manifest = RunManifest::load(&d1.path().join(MANIFEST_FILE)).unwrap();
    let replay_cfg = ExperimentConfig::from_toml(&manifest.config).unwrap();
    let d2 = tempfile::tempdir().unwrap();
    let replay = run_cv(&replay_cfg, d2.path()).unwrap();
    same_outputs(&manifest, &replay.manifest);
}

#[test]
fn cv_fold_selection_and_seed_sensitivity() {
    let mut cfg = small();
    cfg.models = vec![emogan_core::ModelKind::M1];
    cfg.cv.folds = Some(vec![1]);
    let d = tempfile::tempdir().unwrap();
    let a = run_cv(&cfg, d.path()).unwrap();
    assert_eq!(a.runs.iter().map(|r| r.fold).collect::<Vec<_>>(), vec![1]);
    cfg.seed += 1;
    let e = tempfile::tempdir().unwrap();
    let b = run_cv(&cfg, e.path()).unwrap();
    assert_ne!(
        read(d.path(), "fold1/losses_m1.csv"),
        read(e.path(), "fold1/losses_m1.csv")
    );
    assert_ne!(a.runs[0].seed, b.runs[0].seed);
    cfg.cv.folds = Some(vec![7]);
    assert!(run_cv(&cfg, e.path()).is_err());
}

#[test]
fn cross_corpus_and_low_resource_produce_reports() {
    let cfg = small();
    let d = tempfile::tempdir().unwrap();
    let cc = run_cross_corpus(&cfg, d.path()).unwrap();
    assert_eq!(cc.metrics.rows.len(), 3);
    assert!(cc.metrics.rows.iter().all(|r| r.reference == "target"));
    for m in ["m1", "m2", "m3"] {
        assert!(d.path().join(format!("models/{m}.json")).is_file());
    }

    let mut lr_cfg = cfg.clone();
    lr_cfg.low_resource.checkpoint = Some(d.path().join("models/m1.json"));
    lr_cfg.validate().unwrap();
    let e = tempfile::tempdir().unwrap();
    let lr = run_low_resource(&lr_cfg, e.path()).unwrap();
    assert_eq!(lr.cells.len(), 4);
    assert!(lr.cells.iter().all(|c| (0.0..=1.0).contains(&c.uwa)));
    let with_synth = lr
        .cells
        .iter()
        .find(|c| c.fraction == 1.0 && c.n_synth == 100)
        .unwrap();
    let without = lr
        .cells
        .iter()
        .find(|c| c.fraction == 1.0 && c.n_synth == 0)
        .unwrap();
    assert_eq!(with_synth.train_size, without.train_size + 100);
    assert!(e.path().join("low_resource.svg").is_file());
    assert!(!e.path().join("generator.json").exists());
}

#[test]
fn generate_then_score_and_inputs_stay_untouched() {
    let cfg = small();
    let d = tempfile::tempdir().unwrap();
    run_generate(&cfg, None, 120, Some(2), d.path()).unwrap();
    let synth = d.path().join("synthetic.csv");
    let text = std::fs::read_to_string(&synth).unwrap();
    assert_eq!(text.lines().count(), 121);
    assert!(text.lines().skip(1).all(|l| l.ends_with(",neutral")));

    let real_path = d.path().join("real.csv");
    make_toy_corpus(&ToyCorpusConfig {
        feature_dim: 12,
        per_class: 30,
        ..Default::default()
    })
    .unwrap()
    .save_csv(&real_path)
    .unwrap();
    let before = std::fs::read(&real_path).unwrap();
    let e = tempfile::tempdir().unwrap();
    // Single-class synthetic data: metric 2 is undefined, the rest is reported.
    let report = run_metrics(&cfg, &real_path, &synth, e.path()).unwrap();
    assert_eq!(report.rows.len(), 1);
    assert!(report.rows[0].metric1.is_some() && report.rows[0].metric2.is_none());
    assert_eq!(std::fs::read(&real_path).unwrap(), before);

    // A checkpoint replays the same samples.
    let f = tempfile::tempdir().unwrap();
    run_generate(
        &cfg,
        Some(&d.path().join("model.json")),
        120,
        Some(2),
        f.path(),
    )
    .unwrap();
    assert_eq!(
        std::fs::read(f.path().join("synthetic.csv")).unwrap(),
        text.as_bytes()
    );
}

fn emogan(args: &[&str]) -> std::process::Output {
    Command::new(env!("CARGO_BIN_EXE_emogan"))
        .args(args)
        .output()
        .unwrap()
}

#[test]
fn binary_exit_codes() {
    let d = tempfile::tempdir().unwrap();
    let bad_key = d.path().join("bad.toml");
    std::fs::write(&bad_key, "unknown = 1").unwrap();
    let out = emogan(&["cv", "--config", bad_key.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(EXIT_CONFIG));

    let broken = d.path().join("broken.csv");
    std::fs::write(&broken, "a,b,label\n1.0,x,angry\n").unwrap();
    let cfg = d.path().join("csv.toml");
    std::fs::write(
        &cfg,
        format!(
            "[corpus]\nsource = \"csv\"\npath = {:?}\n",
            broken.to_str().unwrap()
        ),
    )
    .unwrap();
    let out = emogan(&[
        "cv",
        "--config",
        cfg.to_str().unwrap(),
        "--out",
        d.path().join("o").to_str().unwrap(),
    ]);
    assert_eq!(
        out.status.code(),
        Some(EXIT_DATA),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );

    let diverge = d.path().join("diverge.toml");
    std::fs::write(
        &diverge,
        "[corpus]\nsource = \"toy\"\nfeature_dim = 8\nper_class = 20\n[train]\nepochs = 5\nstep1_ae = { learning_rate = 50.0, momentum = 0.9 }\n",
    )
    .unwrap();
    let out = emogan(&[
        "cv",
        "--config",
        diverge.to_str().unwrap(),
        "--model",
        "m1",
        "--out",
        d.path().join("p").to_str().unwrap(),
    ]);
    assert_eq!(
        out.status.code(),
        Some(EXIT_DIVERGENCE),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );

    let out = emogan(&[
        "generate",
        "--class",
        "bored",
        "--out",
        d.path().join("q").to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(EXIT_CONFIG));
}

#[test]
fn binary_runs_a_configured_experiment() {
    let d = tempfile::tempdir().unwrap();
    let cfg = d.path().join("small.toml");
    std::fs::write(&cfg, SMALL).unwrap();
    let out_dir = d.path().join("out");
    let out = emogan(&[
        "cross-corpus",
        "--config",
        cfg.to_str().unwrap(),
        "--model",
        "m2",
        "--seed",
        "11",
        "--out",
        out_dir.to_str().unwrap(),
    ]);
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(stdout.contains("chance level 25.00%"), "{stdout}");
    let manifest = RunManifest::load(&out_dir.join(MANIFEST_FILE)).unwrap();
    assert_eq!(manifest.master_seed, 11);
    assert_eq!(
        ExperimentConfig::from_toml(&manifest.config)
            .unwrap()
            .models,
        vec![emogan_core::ModelKind::M2]
    );
}
