//! Experiment drivers. Each one loads its data, trains, evaluates and writes
//! every artifact through an [`OutputSink`], returning the in-memory results
//! alongside the finished manifest.

use std::path::Path;
use std::time::Instant;

use emogan_core::data::{balance, split, stratified_subsample, SplitMode, SplitPlan};
use emogan_core::linalg::SymmetricEigen;
use emogan_core::metrics::{
    fid_pipeline, metric1, metric2, uwa, EvaluatorConfig, EvaluatorNet, MetricsReport, MetricsRow,
    FID_MIN_SAMPLES,
};
use emogan_core::models::{GanModel, ModelKind};
use emogan_core::rng::{derive_seed, seeded};
use emogan_core::toy::{
    cluster_purity, mode_coverage, mode_shares, toy_train_and_sample, PurityReport, ToyVariant,
};
use emogan_core::train::{train, LossHistory, TrainReport};
use emogan_core::{Corpus, Error as CoreError, Matrix, CLASS_NAMES, NUM_CLASSES};
use serde::{Deserialize, Serialize};

use crate::config::ExperimentConfig;
use crate::diagnostics::{convergence_checks, ConvergenceCheck};
use crate::error::{Context, ExpError, ExpResult};
use crate::manifest::{OutputSink, RunManifest};
use crate::plots::{line_svg, scatter_svg, ScatterPanel, Series};

fn csv_bytes(write: impl FnOnce(&mut Vec<u8>) -> emogan_core::Result<()>) -> ExpResult<Vec<u8>> {
    let mut buf = Vec::new();
    write(&mut buf)?;
    Ok(buf)
}

fn fmt(v: f64) -> String {
    emogan_core::data::format_float(v)
}

/// `x,y[,label]` rows for 2-d points.
fn points_csv(points: &Matrix, labels: Option<(&str, &[usize])>) -> String {
    let mut out = String::from("x,y");
    if let Some((name, _)) = labels {
        out.push(',');
        out.push_str(name);
    }
    out.push('\n');
    for (r, row) in points.iter_rows().enumerate() {
        out.push_str(&format!("{},{}", fmt(row[0]), fmt(row[1])));
        if let Some((_, l)) = labels {
            out.push_str(&format!(",{}", l[r]));
        }
        out.push('\n');
    }
    out
}

fn panel(title: impl Into<String>, points: &Matrix, labels: Option<&[usize]>) -> ScatterPanel {
    ScatterPanel {
        title: title.into(),
        points: points
            .iter_rows()
            .enumerate()
            .map(|(r, row)| (row[0], row[1], labels.map(|l| l[r])))
            .collect(),
    }
}

/// Adversarial losses of both splits, one series each.
pub fn loss_chart(title: &str, history: &LossHistory) -> String {
    let mut series = Vec::new();
    for split in ["train", "validation"] {
        for loss in ["d1", "encoder", "d2", "generator"] {
            let values = history.series(split, loss);
            if values.is_empty() {
                continue;
            }
            series.push(Series {
                name: format!("{split} {loss}"),
                points: history
                    .records
                    .iter()
                    .zip(values)
                    .map(|(r, v)| (r.epoch as f64, v))
                    .collect(),
            });
        }
    }
    line_svg(title, "epoch", "loss", &series)
}

fn build_model(
    cfg: &ExperimentConfig,
    kind: ModelKind,
    feature_dim: usize,
    seed: u64,
) -> ExpResult<GanModel> {
    GanModel::build(kind, feature_dim, cfg.profile, cfg.prior.mixture()?, seed)
        .stage(|| format!("building {kind}"))
}

fn train_model(
    cfg: &ExperimentConfig,
    kind: ModelKind,
    train_set: &Corpus,
    validation: &Corpus,
    seed: u64,
    what: &str,
) -> ExpResult<(GanModel, TrainReport)> {
    let mut model = build_model(cfg, kind, train_set.feature_dim(), seed)?;
    let plan = cfg.train.plan_for(kind, seed);
    let report = train(&mut model, train_set, validation, &plan)
        .stage(|| format!("training {kind} {what}"))?;
    Ok((model, report))
}

fn synthesize(model: &GanModel, n: usize, class: Option<usize>, seed: u64) -> ExpResult<Corpus> {
    let batch = model
        .generate(n, class, &mut seeded(seed))
        .stage(|| format!("generating from {}", model.kind))?;
    Ok(Corpus::new(
        format!("synthetic-{}", model.kind.name()),
        batch.features,
        batch.labels,
        None,
    )?)
}

fn checkpoint_bytes(model: &GanModel) -> ExpResult<Vec<u8>> {
    Ok(serde_json::to_vec(&model.to_checkpoint()).map_err(CoreError::from)?)
}

// ---------------------------------------------------------------------------
// Toy comparison

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ToySeedResult {
    pub index: usize,
    pub seed: u64,
    pub vanilla_shares: Vec<f64>,
    pub vanilla_coverage: usize,
    pub info_coverage: usize,
    pub info_purity: PurityReport,
}

#[derive(Clone, Debug)]
pub struct ToyCompareOutcome {
    pub seeds: Vec<ToySeedResult>,
    pub manifest: RunManifest,
}

/// Trains a vanilla and an information-regularized toy GAN per seed and
/// compares their mode coverage and code-to-mode purity.
pub fn run_toy_compare(cfg: &ExperimentConfig, out: &Path) -> ExpResult<ToyCompareOutcome> {
    let mut sink = OutputSink::create(out, "toy-compare", cfg)?;
    let toy = &cfg.toy;
    if toy.seeds == 0 {
        return Err(ExpError::Config("toy.seeds must be positive".into()));
    }
    let target = toy
        .gan
        .target()
        .map_err(|e| ExpError::Config(e.to_string()))?;
    let modes = target.means();

    let mut seeds = Vec::with_capacity(toy.seeds);
    for i in 0..toy.seeds {
        let started = Instant::now();
        let seed = derive_seed(cfg.seed, "toy-compare", i as u64);
        sink.seed(format!("toy-compare/{i}"), seed);
        let vanilla = toy_train_and_sample(ToyVariant::Vanilla, &target, &toy.gan, seed)
            .stage(|| format!("vanilla toy GAN, seed index {i}"))?;
        let info = toy_train_and_sample(ToyVariant::Info, &target, &toy.gan, seed)
            .stage(|| format!("info toy GAN, seed index {i}"))?;
        let codes = info
            .samples
            .codes
            .as_deref()
            .expect("info variant carries codes");
        let purity = cluster_purity(&info.samples.points, codes, &modes, NUM_CLASSES)?;
        log::info!(
            "toy seed {i}: vanilla covers {} modes, info purity {:.3} (bijective {})",
            mode_coverage(&vanilla.samples.points, &modes, toy.coverage_share),
            purity.purity,
            purity.bijective
        );

        if i == 0 {
            let (target_points, target_modes) = target.sample(
                toy.gan.samples,
                &mut seeded(derive_seed(seed, "toy-plot", 0)),
            );
            sink.write_str("source.csv", &points_csv(&info.source, None))?;
            sink.write_str(
                "target.csv",
                &points_csv(&target_points, Some(("mode", &target_modes))),
            )?;
            sink.write_str("vanilla.csv", &points_csv(&vanilla.samples.points, None))?;
            sink.write_str(
                "info.csv",
                &points_csv(&info.samples.points, Some(("code", codes))),
            )?;
            let svg = scatter_svg(&[
                panel("source", &info.source, None),
                panel("target", &target_points, Some(&target_modes)),
                panel("vanilla", &vanilla.samples.points, None),
                panel("info (by code)", &info.samples.points, Some(codes)),
            ]);
            sink.write_str("comparison.svg", &svg)?;
        }

        seeds.push(ToySeedResult {
            index: i,
            seed,
            vanilla_shares: mode_shares(&vanilla.samples.points, &modes),
            vanilla_coverage: mode_coverage(&vanilla.samples.points, &modes, toy.coverage_share),
            info_coverage: mode_coverage(&info.samples.points, &modes, toy.coverage_share),
            info_purity: purity,
        });
        sink.time(format!("toy seed {i}"), started);
    }

    let mut report = String::from(
        "seed_index,seed,vanilla_coverage,info_coverage,info_purity,info_bijective,info_mapping\n",
    );
    for s in &seeds {
        let mapping: Vec<String> = s.info_purity.mapping.iter().map(usize::to_string).collect();
        report.push_str(&format!(
            "{},{},{},{},{},{},{}\n",
            s.index,
            s.seed,
            s.vanilla_coverage,
            s.info_coverage,
            fmt(s.info_purity.purity),
            s.info_purity.bijective,
            mapping.join(" ")
        ));
    }
    sink.write_str("toy_report.csv", &report)?;
    Ok(ToyCompareOutcome {
        seeds,
        manifest: sink.finish()?,
    })
}

// ---------------------------------------------------------------------------
// In-domain cross-validation

/// One trained model in one fold.
#[derive(Clone, Debug)]
pub struct ModelRun {
    pub model: ModelKind,
    pub fold: usize,
    pub seed: u64,
    pub report: TrainReport,
    pub convergence: Vec<ConvergenceCheck>,
    /// Nearest prior mode of each class's mean validation code, for models
    /// with a mixture prior.
    pub code_modes: Option<Vec<usize>>,
    /// Why a metric could not be computed, if it could not.
    pub warnings: Vec<String>,
}

#[derive(Clone, Debug)]
pub struct CvOutcome {
    pub metrics: MetricsReport,
    pub runs: Vec<ModelRun>,
    pub manifest: RunManifest,
}

fn class_mean_modes(model: &GanModel, corpus: &Corpus) -> ExpResult<Option<Vec<usize>>> {
    let Some(mixture) = model.mixture() else {
        return Ok(None);
    };
    let codes = model.encode(corpus.features())?;
    let modes = (0..NUM_CLASSES)
        .map(|k| {
            let rows: Vec<usize> = (0..corpus.len())
                .filter(|&i| corpus.labels()[i] == k)
                .collect();
            if rows.is_empty() {
                usize::MAX
            } else {
                mixture.nearest_mode(&codes.select_rows(&rows).column_means())
            }
        })
        .collect();
    Ok(Some(modes))
}

/// Metrics of one synthetic set against one real reference set.
fn evaluate(
    cfg: &ExperimentConfig,
    evaluator: Option<&EvaluatorNet>,
    synthetic: &Corpus,
    reference: &Corpus,
    balanced_reference: &Corpus,
    warnings: &mut Vec<String>,
) -> ExpResult<(Option<f64>, Option<f64>, Option<f64>)> {
    let m = &cfg.metrics;
    let m1 = if m.metric1 {
        Some(metric1(balanced_reference, synthetic, &m.svm)?)
    } else {
        None
    };
    let m2 = if m.metric2 {
        match metric2(synthetic, reference, &m.svm) {
            Ok(v) => Some(v),
            Err(CoreError::DegenerateData(msg)) => {
                warnings.push(format!("metric 2 skipped: {msg}"));
                None
            }
            Err(e) => return Err(e.into()),
        }
    } else {
        None
    };
    let fid = match evaluator {
        Some(net) if reference.len() >= FID_MIN_SAMPLES && synthetic.len() >= FID_MIN_SAMPLES => {
            Some(fid_pipeline(
                net,
                reference.features(),
                synthetic.features(),
            )?)
        }
        Some(_) => {
            warnings.push(format!(
                "distance skipped: {} real and {} synthetic samples, need {FID_MIN_SAMPLES}",
                reference.len(),
                synthetic.len()
            ));
            None
        }
        None => None,
    };
    Ok((m1, m2, fid))
}

fn evaluator_for(
    cfg: &ExperimentConfig,
    corpus: &Corpus,
    sink: &mut OutputSink,
) -> ExpResult<Option<EvaluatorNet>> {
    if !cfg.metrics.fid {
        return Ok(None);
    }
    let started = Instant::now();
    sink.seed("evaluator", cfg.metrics.evaluator.seed);
    let net = EvaluatorNet::train(corpus, &cfg.metrics.evaluator)
        .stage(|| "training the evaluator".into())?;
    sink.time("evaluator", started);
    Ok(Some(net))
}

/// Projects rows onto the two leading principal axes of `fit`. Each axis is
/// signed so that its largest-magnitude entry is positive.
pub fn pca_2d(fit: &Matrix) -> ExpResult<impl Fn(&Matrix) -> Matrix> {
    let mean = fit.column_means();
    let eig = SymmetricEigen::new(&fit.covariance()?)?;
    let d = fit.cols();
    if d < 2 {
        return Err(ExpError::Core(CoreError::Shape(
            "projection needs at least two features".into(),
        )));
    }
    let mut axes = Matrix::zeros(d, 2);
    for (j, src) in [d - 1, d - 2].into_iter().enumerate() {
        let col: Vec<f64> = (0..d).map(|k| eig.vectors.get(k, src)).collect();
        let pivot = col
            .iter()
            .copied()
            .fold(0.0f64, |a, v| if v.abs() > a.abs() { v } else { a });
        let sign = if pivot < 0.0 { -1.0 } else { 1.0 };
        for (k, v) in col.into_iter().enumerate() {
            axes.set(k, j, sign * v);
        }
    }
    Ok(move |x: &Matrix| {
        let mut centered = x.clone();
        for r in 0..centered.rows() {
            centered
                .row_mut(r)
                .iter_mut()
                .zip(&mean)
                .for_each(|(v, m)| *v -= m);
        }
        centered.dot(&axes)
    })
}

/// Leave-one-session-out cross-validation of every configured model.
pub fn run_cv(cfg: &ExperimentConfig, out: &Path) -> ExpResult<CvOutcome> {
    let mut sink = OutputSink::create(out, "cv-indomain", cfg)?;
    let corpus = cfg.corpus.load()?;
    let folds = split(
        &corpus,
        &SplitPlan {
            mode: SplitMode::LeaveOneSessionOut,
            seed: derive_seed(cfg.seed, "split", 0),
        },
    )?;
    let selected: Vec<usize> = match &cfg.cv.folds {
        Some(list) => {
            if let Some(bad) = list.iter().find(|&&f| f >= folds.len()) {
                return Err(ExpError::Config(format!(
                    "fold {bad} requested, corpus has {}",
                    folds.len()
                )));
            }
            list.clone()
        }
        None => (0..folds.len()).collect(),
    };
    let evaluator = evaluator_for(cfg, &corpus, &mut sink)?;

    let mut metrics = MetricsReport::default();
    let mut runs = Vec::new();
    for &fi in &selected {
        let fold = &folds[fi];
        let mut synthetic: Vec<(ModelKind, Corpus)> = Vec::new();
        let mut m1_model: Option<GanModel> = None;
        for &kind in &cfg.models {
            let started = Instant::now();
            let stage = format!("train-{}", kind.name());
            let seed = derive_seed(cfg.seed, &stage, fi as u64);
            sink.seed(format!("{stage}/fold{fi}"), seed);
            let (model, report) = train_model(
                cfg,
                kind,
                &fold.train,
                &fold.validation,
                seed,
                &format!("fold {fi}"),
            )?;
            sink.time(format!("{stage} fold {fi}"), started);

            let n = ((cfg.cv.synth_ratio * fold.train.len() as f64).round() as usize).max(1);
            let gen_stage = format!("generate-{}", kind.name());
            let gen_seed = derive_seed(cfg.seed, &gen_stage, fi as u64);
            sink.seed(format!("{gen_stage}/fold{fi}"), gen_seed);
            let synth = synthesize(&model, n, None, gen_seed)?;

            let mut warnings = Vec::new();
            for (reference, set) in [("set-1", &fold.train), ("set-2", &fold.validation)] {
                let (m1, m2, fid) =
                    evaluate(cfg, evaluator.as_ref(), &synth, set, set, &mut warnings)
                        .map_err(|e| stage_error(e, &format!("{kind} fold {fi} {reference}")))?;
                metrics.push(MetricsRow {
                    model: kind.to_string(),
                    fold: Some(fi),
                    reference: reference.into(),
                    metric1: m1,
                    metric2: m2,
                    fid,
                });
            }
            for w in &warnings {
                log::warn!("{kind} fold {fi}: {w}");
            }

            let dir = format!("fold{fi}");
            sink.write(
                &format!("{dir}/losses_{}.csv", kind.name()),
                &csv_bytes(|b| report.history.write_csv(b))?,
            )?;
            sink.write_str(
                &format!("{dir}/losses_{}.svg", kind.name()),
                &loss_chart(&format!("{kind} fold {fi}"), &report.history),
            )?;
            if cfg.cv.save_checkpoints {
                sink.write(
                    &format!("{dir}/model_{}.json", kind.name()),
                    &checkpoint_bytes(&model)?,
                )?;
                sink.write(
                    &format!("{dir}/synthetic_{}.csv", kind.name()),
                    &csv_bytes(|b| synth.write_csv(b))?,
                )?;
            }

            runs.push(ModelRun {
                model: kind,
                fold: fi,
                seed,
                convergence: convergence_checks(kind, &report.history),
                code_modes: class_mean_modes(&model, &fold.validation)?,
                report,
                warnings,
            });
            synthetic.push((kind, synth));
            if kind == ModelKind::M1 {
                m1_model = Some(model);
            }
        }

        if let Some(m1) = &m1_model {
            let mut panels = Vec::new();
            let mut rows = String::from("set,x,y,label\n");
            let mut sets: Vec<(String, &Corpus)> = vec![
                ("train".into(), &fold.train),
                ("validation".into(), &fold.validation),
            ];
            sets.extend(synthetic.iter().map(|(k, c)| (format!("synthetic {k}"), c)));
            for (name, set) in sets {
                let codes = m1.encode(set.features())?;
                for (r, row) in codes.iter_rows().enumerate() {
                    rows.push_str(&format!(
                        "{name},{},{},{}\n",
                        fmt(row[0]),
                        fmt(row[1]),
                        set.labels()[r]
                    ));
                }
                panels.push(panel(
                    format!("M1 codes: {name}"),
                    &codes,
                    Some(set.labels()),
                ));
            }
            sink.write_str(&format!("fold{fi}/codes_m1.csv"), &rows)?;
            sink.write_str(&format!("fold{fi}/codes_m1.svg"), &scatter_svg(&panels))?;
        }

        if fi == selected[0] && corpus.feature_dim() >= 2 {
            let project = pca_2d(fold.train.features())?;
            let mut panels = vec![panel(
                "real (train)",
                &project(fold.train.features()),
                Some(fold.train.labels()),
            )];
            for (kind, synth) in &synthetic {
                panels.push(panel(
                    format!("synthetic {kind}"),
                    &project(synth.features()),
                    Some(synth.labels()),
                ));
            }
            sink.write_str(&format!("fold{fi}/pca.svg"), &scatter_svg(&panels))?;
        }
    }

    sink.write("metrics.csv", &csv_bytes(|b| metrics.write_csv(b))?)?;
    sink.write_str("convergence.csv", &convergence_csv(&runs))?;
    sink.write_str("code_modes.csv", &code_modes_csv(&runs))?;
    sink.write_str("summary.txt", &metrics.to_string())?;
    Ok(CvOutcome {
        metrics,
        runs,
        manifest: sink.finish()?,
    })
}

fn stage_error(e: ExpError, context: &str) -> ExpError {
    match e {
        ExpError::Core(source) => ExpError::Stage {
            context: context.to_string(),
            source,
        },
        other => other,
    }
}

fn convergence_csv(runs: &[ModelRun]) -> String {
    let mut out = String::from("model,fold,check,value,limit,pass\n");
    for r in runs {
        for c in &r.convergence {
            out.push_str(&format!(
                "{},{},{},{},{},{}\n",
                r.model,
                r.fold,
                c.name,
                fmt(c.value),
                fmt(c.limit),
                c.pass
            ));
        }
    }
    out
}

fn code_modes_csv(runs: &[ModelRun]) -> String {
    let mut out = String::from("model,fold,class,nearest_mode,matches\n");
    for r in runs {
        if let Some(modes) = &r.code_modes {
            for (k, &m) in modes.iter().enumerate() {
                out.push_str(&format!(
                    "{},{},{},{},{}\n",
                    r.model,
                    r.fold,
                    CLASS_NAMES[k],
                    m,
                    m == k
                ));
            }
        }
    }
    out
}

// ---------------------------------------------------------------------------
// Cross-corpus

#[derive(Clone, Debug)]
pub struct CrossCorpusOutcome {
    pub metrics: MetricsReport,
    pub runs: Vec<ModelRun>,
    pub manifest: RunManifest,
}

fn load_pair(cfg: &ExperimentConfig) -> ExpResult<(Corpus, Corpus)> {
    let source = cfg.corpus.load()?;
    let target = cfg.target.load()?;
    if source.feature_dim() != target.feature_dim() {
        return Err(ExpError::Core(CoreError::Shape(format!(
            "source has {} features, target has {}",
            source.feature_dim(),
            target.feature_dim()
        ))));
    }
    Ok((source, target))
}

/// Trains on the source corpus and evaluates against the target corpus:
/// metric 1 on a class-balanced target, metric 2 on the full target, and the
/// distance under an evaluator trained on the target.
pub fn run_cross_corpus(cfg: &ExperimentConfig, out: &Path) -> ExpResult<CrossCorpusOutcome> {
    let mut sink = OutputSink::create(out, "cross-corpus", cfg)?;
    let (source, target) = load_pair(cfg)?;
    let balance_seed = derive_seed(cfg.seed, "balance", 0);
    sink.seed("balance", balance_seed);
    let balanced = balance(&target, balance_seed)?;
    let evaluator = evaluator_for(cfg, &target, &mut sink)?;

    let mut metrics = MetricsReport::default();
    let mut runs = Vec::new();
    for &kind in &cfg.models {
        let started = Instant::now();
        let stage = format!("cross-{}", kind.name());
        let seed = derive_seed(cfg.seed, &stage, 0);
        sink.seed(stage.clone(), seed);
        let (model, report) =
            train_model(cfg, kind, &source, &target, seed, "on the source corpus")?;
        let gen_seed = derive_seed(cfg.seed, &format!("generate-{}", kind.name()), 0);
        sink.seed(format!("generate-{}", kind.name()), gen_seed);
        let synth = synthesize(&model, source.len(), None, gen_seed)?;
        let mut warnings = Vec::new();
        let (m1, m2, fid) = evaluate(
            cfg,
            evaluator.as_ref(),
            &synth,
            &target,
            &balanced,
            &mut warnings,
        )
        .map_err(|e| stage_error(e, &format!("{kind} against target")))?;
        metrics.push(MetricsRow {
            model: kind.to_string(),
            fold: None,
            reference: "target".into(),
            metric1: m1,
            metric2: m2,
            fid,
        });
        sink.write(
            &format!("models/{}.json", kind.name()),
            &checkpoint_bytes(&model)?,
        )?;
        sink.write(
            &format!("losses_{}.csv", kind.name()),
            &csv_bytes(|b| report.history.write_csv(b))?,
        )?;
        sink.write_str(
            &format!("losses_{}.svg", kind.name()),
            &loss_chart(&format!("{kind} source vs target"), &report.history),
        )?;
        sink.time(stage, started);
        runs.push(ModelRun {
            model: kind,
            fold: 0,
            seed,
            convergence: convergence_checks(kind, &report.history),
            code_modes: class_mean_modes(&model, &target)?,
            report,
            warnings,
        });
    }
    sink.write("metrics.csv", &csv_bytes(|b| metrics.write_csv(b))?)?;
    sink.write_str("convergence.csv", &convergence_csv(&runs))?;
    sink.write_str("summary.txt", &metrics.to_string())?;
    Ok(CrossCorpusOutcome {
        metrics,
        runs,
        manifest: sink.finish()?,
    })
}

// ---------------------------------------------------------------------------
// Low-resource augmentation

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LowResourceCell {
    pub fraction: f64,
    pub n_synth: usize,
    pub train_size: usize,
    pub uwa: f64,
}

#[derive(Clone, Debug)]
pub struct LowResourceOutcome {
    pub cells: Vec<LowResourceCell>,
    pub manifest: RunManifest,
}

/// For each fraction of the source corpus and each synthetic sample count,
/// trains a classifier on the subsample plus generated samples and scores it
/// on the target corpus.
pub fn run_low_resource(cfg: &ExperimentConfig, out: &Path) -> ExpResult<LowResourceOutcome> {
    let mut sink = OutputSink::create(out, "low-resource", cfg)?;
    let lr = &cfg.low_resource;
    if lr.fractions.is_empty() || lr.n_synth.is_empty() {
        return Err(ExpError::Config(
            "low_resource needs at least one fraction and one sample count".into(),
        ));
    }
    let (source, target) = load_pair(cfg)?;

    let started = Instant::now();
    let model = match &lr.checkpoint {
        Some(path) => {
            let m =
                GanModel::load(path).stage(|| format!("loading checkpoint {}", path.display()))?;
            if m.feature_dim != source.feature_dim() {
                return Err(ExpError::Config(format!(
                    "checkpoint expects {} features, corpus has {}",
                    m.feature_dim,
                    source.feature_dim()
                )));
            }
            m
        }
        None => {
            let seed = derive_seed(cfg.seed, &format!("augment-{}", lr.model.name()), 0);
            sink.seed(format!("augment-{}", lr.model.name()), seed);
            let (m, report) =
                train_model(cfg, lr.model, &source, &target, seed, "for augmentation")?;
            sink.write(
                "generator_losses.csv",
                &csv_bytes(|b| report.history.write_csv(b))?,
            )?;
            sink.write("generator.json", &checkpoint_bytes(&m)?)?;
            m
        }
    };
    sink.time("generator", started);

    let max_n = lr.n_synth.iter().copied().max().unwrap_or(0);
    let pool_seed = derive_seed(cfg.seed, "augment-pool", 0);
    sink.seed("augment-pool", pool_seed);
    let pool = if max_n > 0 {
        Some(synthesize(&model, max_n, None, pool_seed)?)
    } else {
        None
    };
    let classifier_seed = derive_seed(cfg.seed, "classifier", 0);
    sink.seed("classifier", classifier_seed);
    let classifier_cfg = EvaluatorConfig {
        seed: classifier_seed,
        ..lr.classifier.clone()
    };

    let mut cells = Vec::new();
    for (pi, &fraction) in lr.fractions.iter().enumerate() {
        let sub_seed = derive_seed(cfg.seed, "subsample", pi as u64);
        sink.seed(format!("subsample/{pi}"), sub_seed);
        let subset = stratified_subsample(&source, fraction, sub_seed)?;
        for &n in &lr.n_synth {
            let started = Instant::now();
            let train_set = match (&pool, n) {
                (Some(pool), n) if n > 0 => {
                    let idx: Vec<usize> = (0..n).collect();
                    subset.concat(&pool.subset(&idx))?
                }
                _ => subset.clone(),
            };
            let net = EvaluatorNet::train(&train_set, &classifier_cfg)
                .stage(|| format!("classifier at fraction {fraction}, {n} synthetic"))?;
            let score = uwa(&net.predict(target.features())?, target.labels())?;
            log::info!("fraction {fraction} + {n} synthetic: uwa {score:.4}");
            cells.push(LowResourceCell {
                fraction,
                n_synth: n,
                train_size: train_set.len(),
                uwa: score,
            });
            sink.time(format!("cell {fraction} {n}"), started);
        }
    }

    let mut csv = String::from("fraction,n_synth,train_size,uwa\n");
    for c in &cells {
        csv.push_str(&format!(
            "{},{},{},{}\n",
            fmt(c.fraction),
            c.n_synth,
            c.train_size,
            fmt(c.uwa)
        ));
    }
    sink.write_str("low_resource.csv", &csv)?;
    let series: Vec<Series> = lr
        .n_synth
        .iter()
        .map(|&n| Series {
            name: format!("+{n} synthetic"),
            points: cells
                .iter()
                .filter(|c| c.n_synth == n)
                .map(|c| (100.0 * c.fraction, 100.0 * c.uwa))
                .collect(),
        })
        .collect();
    sink.write_str(
        "low_resource.svg",
        &line_svg(
            "target UWA by training fraction",
            "real data used (%)",
            "UWA (%)",
            &series,
        ),
    )?;
    Ok(LowResourceOutcome {
        cells,
        manifest: sink.finish()?,
    })
}

// ---------------------------------------------------------------------------
// Single-purpose verbs

/// Writes `n` samples from a checkpoint, or from a model trained in place on
/// the configured corpus (80/20 split) when no checkpoint is given.
pub fn run_generate(
    cfg: &ExperimentConfig,
    checkpoint: Option<&Path>,
    n: usize,
    class: Option<usize>,
    out: &Path,
) -> ExpResult<RunManifest> {
    let mut sink = OutputSink::create(out, "generate", cfg)?;
    let model = match checkpoint {
        Some(path) => {
            GanModel::load(path).stage(|| format!("loading checkpoint {}", path.display()))?
        }
        None => {
            let kind = cfg.models[0];
            let corpus = cfg.corpus.load()?;
            let folds = split(
                &corpus,
                &SplitPlan {
                    mode: SplitMode::Ratio {
                        train_fraction: 0.8,
                    },
                    seed: derive_seed(cfg.seed, "split", 0),
                },
            )?;
            let seed = derive_seed(cfg.seed, &format!("train-{}", kind.name()), 0);
            sink.seed(format!("train-{}", kind.name()), seed);
            let (m, report) = train_model(
                cfg,
                kind,
                &folds[0].train,
                &folds[0].validation,
                seed,
                "for generation",
            )?;
            sink.write("losses.csv", &csv_bytes(|b| report.history.write_csv(b))?)?;
            sink.write("model.json", &checkpoint_bytes(&m)?)?;
            m
        }
    };
    let seed = derive_seed(cfg.seed, "generate", 0);
    sink.seed("generate", seed);
    let synth = synthesize(&model, n, class, seed)?;
    sink.write("synthetic.csv", &csv_bytes(|b| synth.write_csv(b))?)?;
    sink.finish()
}

/// Reads a corpus CSV with a `label` column, treating a `session` column as
/// session ids rather than a feature.
fn load_feature_csv(path: &Path) -> ExpResult<Corpus> {
    let text = std::fs::read_to_string(path).map_err(crate::error::io_err(path))?;
    let has_session = text
        .lines()
        .next()
        .is_some_and(|header| header.split(',').any(|h| h.trim() == "session"));
    Corpus::load_csv(path, "label", has_session.then_some("session"))
        .stage(|| format!("reading {}", path.display()))
}

/// Scores an existing synthetic CSV against a real CSV.
pub fn run_metrics(
    cfg: &ExperimentConfig,
    real: &Path,
    synthetic: &Path,
    out: &Path,
) -> ExpResult<MetricsReport> {
    let mut sink = OutputSink::create(out, "metrics", cfg)?;
    let real = load_feature_csv(real)?;
    let synth = load_feature_csv(synthetic)?;
    if real.feature_dim() != synth.feature_dim() {
        return Err(ExpError::Core(CoreError::Shape(format!(
            "real has {} features, synthetic has {}",
            real.feature_dim(),
            synth.feature_dim()
        ))));
    }
    let evaluator = evaluator_for(cfg, &real, &mut sink)?;
    let mut warnings = Vec::new();
    let (m1, m2, fid) = evaluate(cfg, evaluator.as_ref(), &synth, &real, &real, &mut warnings)?;
    for w in &warnings {
        log::warn!("{w}");
    }
    let mut report = MetricsReport::default();
    report.push(MetricsRow {
        model: synth.name.clone(),
        fold: None,
        reference: real.name.clone(),
        metric1: m1,
        metric2: m2,
        fid,
    });
    sink.write("metrics.csv", &csv_bytes(|b| report.write_csv(b))?)?;
    sink.finish()?;
    Ok(report)
}
