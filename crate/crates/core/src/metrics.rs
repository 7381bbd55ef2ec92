//! Realism, diversity and Fréchet-distance metrics for synthetic feature sets.

use std::fmt;
use std::io::Write;
use std::path::Path;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::data::{format_float, Corpus, Standardizer};
use crate::error::{Error, Result};
use crate::linalg::{Matrix, SymmetricEigen};
use crate::nn::{loss_categorical, Activation, Mlp, SgdConfig};
use crate::priors::one_hot_matrix;
use crate::rng::seeded;
use crate::NUM_CLASSES;

/// Accuracy of guessing among four balanced classes.
pub const CHANCE_UWA: f64 = 0.25;

/// Mean over the classes present in `labels` of per-class recall.
pub fn uwa(predictions: &[usize], labels: &[usize]) -> Result<f64> {
    if predictions.len() != labels.len() {
        return Err(Error::Shape(format!(
            "{} predictions for {} labels",
            predictions.len(),
            labels.len()
        )));
    }
    if labels.is_empty() {
        return Err(Error::InvalidArgument(
            "unweighted accuracy of an empty set".into(),
        ));
    }
    let classes = labels.iter().max().map_or(0, |m| m + 1);
    let mut hits = vec![0usize; classes];
    let mut totals = vec![0usize; classes];
    for (&p, &y) in predictions.iter().zip(labels) {
        totals[y] += 1;
        if p == y {
            hits[y] += 1;
        }
    }
    let recalls: Vec<f64> = hits
        .iter()
        .zip(&totals)
        .filter(|(_, &t)| t > 0)
        .map(|(&h, &t)| h as f64 / t as f64)
        .collect();
    Ok(recalls.iter().sum::<f64>() / recalls.len() as f64)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SvmConfig {
    /// Candidate L2 weights, tried in order; ties keep the earlier one.
    pub reg_grid: Vec<f64>,
    pub iterations: usize,
    pub initial_rate: f64,
    /// Fraction of each class held out to pick the regularization weight.
    pub selection_fraction: f64,
    pub seed: u64,
}

impl Default for SvmConfig {
    fn default() -> Self {
        Self {
            reg_grid: vec![0.001, 0.01, 0.1, 1.0, 10.0],
            iterations: 150,
            initial_rate: 0.1,
            selection_fraction: 0.2,
            seed: 0,
        }
    }
}

/// One-vs-rest linear classifier trained on hinge loss with an L2 penalty.
///
/// Training is full-batch subgradient descent with step
/// `η_t = η₀ / (1 + η₀·λ·t)`, so the result does not depend on sample order.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MarginClassifier {
    pub standardizer: Standardizer,
    /// `feature_dim × classes`.
    pub weights: Matrix,
    pub biases: Vec<f64>,
    pub regularization: f64,
    /// Held-out UWA per grid entry.
    pub selection_trace: Vec<(f64, f64)>,
    /// Objective value per iteration of the final fit.
    pub objective_trace: Vec<f64>,
}

impl MarginClassifier {
    pub fn fit(x: &Matrix, labels: &[usize], cfg: &SvmConfig) -> Result<Self> {
        if x.rows() != labels.len() {
            return Err(Error::Shape(format!(
                "{} rows with {} labels",
                x.rows(),
                labels.len()
            )));
        }
        if cfg.reg_grid.is_empty() || cfg.reg_grid.iter().any(|&l| !(l > 0.0)) {
            return Err(Error::InvalidArgument(
                "regularization grid must be non-empty and positive".into(),
            ));
        }
        let present = class_presence(labels);
        if present.iter().filter(|&&p| p).count() < 2 {
            return Err(Error::DegenerateData(
                "classifier training needs at least two classes".into(),
            ));
        }
        let classes = present.len().max(NUM_CLASSES);

        let (train_idx, val_idx) = selection_split(x, labels, cfg.selection_fraction, cfg.seed);
        let mut selection_trace = Vec::with_capacity(cfg.reg_grid.len());
        let mut best = (cfg.reg_grid[0], f64::NEG_INFINITY);
        let usable = !val_idx.is_empty()
            && class_presence(&pick(labels, &train_idx))
                .iter()
                .filter(|&&p| p)
                .count()
                >= 2;
        for &lambda in &cfg.reg_grid {
            let score = if usable {
                let sub = x.select_rows(&train_idx);
                let model = Self::fit_fixed(&sub, &pick(labels, &train_idx), classes, lambda, cfg)?;
                let pred = model.predict(&x.select_rows(&val_idx))?;
                uwa(&pred, &pick(labels, &val_idx))?
            } else {
                0.0
            };
            selection_trace.push((lambda, score));
            if score > best.1 {
                best = (lambda, score);
            }
        }
        let mut model = Self::fit_fixed(x, labels, classes, best.0, cfg)?;
        model.selection_trace = selection_trace;
        Ok(model)
    }

    /// Trains with one regularization weight, without selection.
    pub fn fit_fixed(
        x: &Matrix,
        labels: &[usize],
        classes: usize,
        lambda: f64,
        cfg: &SvmConfig,
    ) -> Result<Self> {
        let standardizer = Standardizer::fit_matrix(x)?;
        let z = standardizer.transform(x)?;
        let (n, d) = z.shape();
        let mut w = Matrix::zeros(d, classes);
        let mut b = vec![0.0; classes];
        let mut objective_trace = Vec::with_capacity(cfg.iterations);
        let nf = n as f64;
        for t in 0..cfg.iterations {
            let mut scores = z.dot(&w);
            let mut hinge = 0.0;
            // Reuse `scores` as the per-sample subgradient of the mean hinge loss.
            for r in 0..n {
                let row = scores.row_mut(r);
                for (k, s) in row.iter_mut().enumerate() {
                    let y = if labels[r] == k { 1.0 } else { -1.0 };
                    let margin = y * (*s + b[k]);
                    if margin < 1.0 {
                        hinge += 1.0 - margin;
                        *s = -y / nf;
                    } else {
                        *s = 0.0;
                    }
                }
            }
            let penalty: f64 = w.data().iter().map(|v| v * v).sum::<f64>() * lambda / 2.0;
            objective_trace.push(hinge / nf + penalty);
            let grad_w = z.t_dot(&scores);
            let grad_b = scores.column_sums();
            let rate = cfg.initial_rate / (1.0 + cfg.initial_rate * lambda * t as f64);
            let shrink = 1.0 - rate * lambda;
            for (wv, gv) in w.data_mut().iter_mut().zip(grad_w.data()) {
                *wv = shrink * *wv - rate * gv;
            }
            for (bv, gv) in b.iter_mut().zip(&grad_b) {
                *bv -= rate * gv;
            }
        }
        if !w.is_finite() || b.iter().any(|v| !v.is_finite()) {
            return Err(Error::NumericalDomain(
                "classifier weights became non-finite".into(),
            ));
        }
        Ok(Self {
            standardizer,
            weights: w,
            biases: b,
            regularization: lambda,
            selection_trace: Vec::new(),
            objective_trace,
        })
    }

    pub fn scores(&self, x: &Matrix) -> Result<Matrix> {
        let mut s = self.standardizer.transform(x)?.dot(&self.weights);
        for r in 0..s.rows() {
            for (v, b) in s.row_mut(r).iter_mut().zip(&self.biases) {
                *v += b;
            }
        }
        Ok(s)
    }

    /// Argmax of class scores, lowest class index on ties.
    pub fn predict(&self, x: &Matrix) -> Result<Vec<usize>> {
        Ok(argmax_rows(&self.scores(x)?))
    }
}

pub(crate) fn argmax_rows(scores: &Matrix) -> Vec<usize> {
    scores
        .iter_rows()
        .map(|row| {
            let mut best = 0;
            for (k, &v) in row.iter().enumerate() {
                if v > row[best] {
                    best = k;
                }
            }
            best
        })
        .collect()
}

fn class_presence(labels: &[usize]) -> Vec<bool> {
    let classes = labels.iter().max().map_or(0, |m| m + 1);
    let mut present = vec![false; classes];
    for &l in labels {
        present[l] = true;
    }
    present
}

fn pick(labels: &[usize], idx: &[usize]) -> Vec<usize> {
    idx.iter().map(|&i| labels[i]).collect()
}

/// Per class, orders rows by a seeded hash of their contents and holds out
/// the first `fraction`. Membership depends only on row values, so it does
/// not change when samples are reordered.
fn selection_split(
    x: &Matrix,
    labels: &[usize],
    fraction: f64,
    seed: u64,
) -> (Vec<usize>, Vec<usize>) {
    let key = |r: usize| -> [u8; 32] {
        let mut h = Sha256::new();
        h.update(seed.to_le_bytes());
        h.update((labels[r] as u64).to_le_bytes());
        for v in x.row(r) {
            h.update(v.to_bits().to_le_bytes());
        }
        h.finalize().into()
    };
    let classes = labels.iter().max().map_or(0, |m| m + 1);
    let mut train = Vec::new();
    let mut val = Vec::new();
    for k in 0..classes {
        let mut rows: Vec<(usize, [u8; 32])> = (0..labels.len())
            .filter(|&r| labels[r] == k)
            .map(|r| (r, key(r)))
            .collect();
        rows.sort_by(|a, b| a.1.cmp(&b.1).then(a.0.cmp(&b.0)));
        let held = if rows.len() >= 2 {
            ((rows.len() as f64 * fraction).round() as usize).clamp(1, rows.len() - 1)
        } else {
            0
        };
        val.extend(rows[..held].iter().map(|p| p.0));
        train.extend(rows[held..].iter().map(|p| p.0));
    }
    train.sort_unstable();
    val.sort_unstable();
    (train, val)
}

/// Realism: classifier trained on real data, scored on synthetic data.
pub fn metric1(real_train: &Corpus, synthetic: &Corpus, cfg: &SvmConfig) -> Result<f64> {
    check_pair(real_train, synthetic)?;
    let clf = MarginClassifier::fit(real_train.features(), real_train.labels(), cfg)?;
    uwa(&clf.predict(synthetic.features())?, synthetic.labels())
}

/// Diversity: classifier trained on synthetic data, scored on real data.
pub fn metric2(synthetic: &Corpus, real_test: &Corpus, cfg: &SvmConfig) -> Result<f64> {
    check_pair(synthetic, real_test)?;
    let clf = MarginClassifier::fit(synthetic.features(), synthetic.labels(), cfg).map_err(
        |e| match e {
            Error::DegenerateData(msg) => {
                Error::DegenerateData(format!("synthetic set looks mode-collapsed: {msg}"))
            }
            other => other,
        },
    )?;
    uwa(&clf.predict(real_test.features())?, real_test.labels())
}

fn check_pair(a: &Corpus, b: &Corpus) -> Result<()> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::InvalidArgument(
            "metric needs two non-empty sets".into(),
        ));
    }
    if a.feature_dim() != b.feature_dim() {
        return Err(Error::Shape(format!(
            "feature dims differ: {} vs {}",
            a.feature_dim(),
            b.feature_dim()
        )));
    }
    Ok(())
}

/// Hidden width of the evaluator network.
pub const EVALUATOR_WIDTH: usize = 64;
/// The evaluator's hidden layer whose output feeds the Fréchet distance (0-based).
pub const EVALUATOR_TAP: usize = 2;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EvaluatorConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub sgd: SgdConfig,
    pub seed: u64,
}

impl Default for EvaluatorConfig {
    fn default() -> Self {
        Self {
            epochs: 30,
            batch_size: 64,
            sgd: SgdConfig {
                learning_rate: 0.01,
                momentum: 0.9,
            },
            seed: 0,
        }
    }
}

/// Four-class softmax network, `in→64→64→64→64→4`, whose third hidden layer
/// provides the activations compared by the Fréchet distance.
#[derive(Clone, Debug)]
pub struct EvaluatorNet {
    pub net: Mlp,
    pub standardizer: Standardizer,
    /// Mean training loss per epoch.
    pub losses: Vec<f64>,
}

impl EvaluatorNet {
    pub fn train(corpus: &Corpus, cfg: &EvaluatorConfig) -> Result<Self> {
        if corpus.is_empty() {
            return Err(Error::InvalidArgument(
                "evaluator needs training data".into(),
            ));
        }
        cfg.sgd.validate()?;
        if cfg.batch_size == 0 {
            return Err(Error::InvalidArgument("batch_size must be positive".into()));
        }
        let mut rng = seeded(cfg.seed);
        let w = EVALUATOR_WIDTH;
        let mut net = Mlp::uniform(
            &[corpus.feature_dim(), w, w, w, w, NUM_CLASSES],
            Activation::Relu,
            Activation::Softmax,
            &mut rng,
        )?;
        let standardizer = Standardizer::fit(corpus)?;
        let x = standardizer.transform(corpus.features())?;
        let y = one_hot_matrix(corpus.labels(), NUM_CLASSES);
        let mut order: Vec<usize> = (0..corpus.len()).collect();
        let mut losses = Vec::with_capacity(cfg.epochs);
        for epoch in 0..cfg.epochs {
            order.shuffle(&mut rng);
            let mut total = 0.0;
            let mut batches = 0;
            for chunk in order.chunks(cfg.batch_size) {
                let (p, cache) = net.forward(&x.select_rows(chunk))?;
                let (loss, grad) = loss_categorical(&p, &y.select_rows(chunk))?;
                if !loss.is_finite() {
                    return Err(Error::divergence(
                        "evaluator",
                        epoch,
                        format!("loss {loss}"),
                    ));
                }
                let (g, _) = net.backward(&cache, &grad)?;
                net.sgd_step(&g, &cfg.sgd).map_err(|e| e.at_epoch(epoch))?;
                total += loss;
                batches += 1;
            }
            losses.push(total / batches as f64);
        }
        Ok(Self {
            net,
            standardizer,
            losses,
        })
    }

    pub fn predict(&self, features: &Matrix) -> Result<Vec<usize>> {
        Ok(argmax_rows(
            &self.net.predict(&self.standardizer.transform(features)?)?,
        ))
    }

    /// Third-hidden-layer outputs, one 64-wide row per input row.
    pub fn activations(&self, features: &Matrix) -> Result<Matrix> {
        let (_, cache) = self.net.forward(&self.standardizer.transform(features)?)?;
        Ok(cache.layer_output(EVALUATOR_TAP).clone())
    }
}

/// Mean and unbiased covariance of a sample set.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GaussianStats {
    pub mean: Vec<f64>,
    pub covariance: Matrix,
    pub samples: usize,
}

impl GaussianStats {
    pub fn from_samples(x: &Matrix) -> Result<Self> {
        Ok(Self {
            mean: x.column_means(),
            covariance: x.covariance()?,
            samples: x.rows(),
        })
    }

    pub fn new(mean: Vec<f64>, covariance: Matrix) -> Result<Self> {
        if covariance.rows() != mean.len() || covariance.cols() != mean.len() {
            return Err(Error::Shape(format!(
                "mean of length {} with covariance {:?}",
                mean.len(),
                covariance.shape()
            )));
        }
        if covariance.max_abs_diff(&covariance.transpose()) > 1e-9 {
            return Err(Error::NumericalDomain("covariance is not symmetric".into()));
        }
        Ok(Self {
            mean,
            covariance,
            samples: 0,
        })
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }
}

/// Eigenvalues below this are treated as zero when taking square roots.
pub const EIGEN_CLAMP: f64 = 1e-10;
/// Most negative eigenvalue accepted as roundoff in a covariance.
pub const PSD_FLOOR: f64 = -1e-8;

/// `‖μx−μg‖² + tr(Σx + Σg − 2·(Σx^½ Σg Σx^½)^½)`, clamped at zero.
pub fn fid(x: &GaussianStats, g: &GaussianStats) -> Result<f64> {
    if x.dim() != g.dim() || x.dim() == 0 {
        return Err(Error::Shape(format!(
            "stat dims {} and {}",
            x.dim(),
            g.dim()
        )));
    }
    let mean_term: f64 = x
        .mean
        .iter()
        .zip(&g.mean)
        .map(|(a, b)| (a - b) * (a - b))
        .sum();
    let ex = psd_eigen(&x.covariance, "first")?;
    let root_x = ex.reconstruct_with(clamped_sqrt);
    let mut inner = root_x.dot(&g.covariance).dot(&root_x);
    inner.symmetrize();
    psd_eigen(&g.covariance, "second")?;
    let ei = psd_eigen(&inner, "product")?;
    let trace_root: f64 = ei.values.iter().map(|&l| clamped_sqrt(l)).sum();
    let value = mean_term + x.covariance.trace() + g.covariance.trace() - 2.0 * trace_root;
    if value < -1e-6 {
        return Err(Error::NumericalDomain(format!(
            "Fréchet distance evaluated to {value}"
        )));
    }
    Ok(value.max(0.0))
}

fn clamped_sqrt(l: f64) -> f64 {
    if l > EIGEN_CLAMP {
        l.sqrt()
    } else {
        0.0
    }
}

fn psd_eigen(m: &Matrix, which: &str) -> Result<SymmetricEigen> {
    let e = SymmetricEigen::new(m)?;
    if let Some(&low) = e.values.first() {
        if low < PSD_FLOOR {
            return Err(Error::NumericalDomain(format!(
                "{which} covariance has eigenvalue {low}, below {PSD_FLOOR}"
            )));
        }
    }
    Ok(e)
}

/// Fewest samples per set accepted by [`fid_pipeline`].
pub const FID_MIN_SAMPLES: usize = EVALUATOR_WIDTH + 1;

/// Fréchet distance between evaluator activations of two sets; labels are ignored.
pub fn fid_pipeline(net: &EvaluatorNet, real: &Matrix, synthetic: &Matrix) -> Result<f64> {
    for (name, m) in [("real", real), ("synthetic", synthetic)] {
        if m.rows() < FID_MIN_SAMPLES {
            return Err(Error::DegenerateData(format!(
                "{name} set has {} samples, need at least {FID_MIN_SAMPLES}",
                m.rows()
            )));
        }
    }
    let a = GaussianStats::from_samples(&net.activations(real)?)?;
    let b = GaussianStats::from_samples(&net.activations(synthetic)?)?;
    fid(&a, &b)
}

/// One metric evaluation of a model against one reference set.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricsRow {
    pub model: String,
    pub fold: Option<usize>,
    pub reference: String,
    pub metric1: Option<f64>,
    pub metric2: Option<f64>,
    pub fid: Option<f64>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub rows: Vec<MetricsRow>,
}

/// Per-(model, reference) means over folds.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricsSummary {
    pub model: String,
    pub reference: String,
    pub folds: usize,
    pub metric1: Option<f64>,
    pub metric2: Option<f64>,
    pub fid: Option<f64>,
}

impl MetricsReport {
    pub fn push(&mut self, row: MetricsRow) {
        if let Some(v) = row
            .metric1
            .iter()
            .chain(&row.metric2)
            .find(|v| !(0.0..=1.0).contains(*v))
        {
            panic!("accuracy {v} outside [0, 1]");
        }
        self.rows.push(row);
    }

    pub fn summary(&self) -> Vec<MetricsSummary> {
        let mut keys: Vec<(String, String)> = Vec::new();
        for r in &self.rows {
            let k = (r.model.clone(), r.reference.clone());
            if !keys.contains(&k) {
                keys.push(k);
            }
        }
        keys.into_iter()
            .map(|(model, reference)| {
                let rows: Vec<&MetricsRow> = self
                    .rows
                    .iter()
                    .filter(|r| r.model == model && r.reference == reference)
                    .collect();
                let mean = |f: fn(&MetricsRow) -> Option<f64>| {
                    let v: Vec<f64> = rows.iter().filter_map(|r| f(r)).collect();
                    (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64)
                };
                MetricsSummary {
                    folds: rows.len(),
                    metric1: mean(|r| r.metric1),
                    metric2: mean(|r| r.metric2),
                    fid: mean(|r| r.fid),
                    model,
                    reference,
                }
            })
            .collect()
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record([
            "model",
            "fold",
            "reference",
            "metric1_uwa",
            "metric2_uwa",
            "fid",
        ])?;
        let opt = |v: Option<f64>| v.map(format_float).unwrap_or_default();
        for r in &self.rows {
            w.write_record([
                r.model.clone(),
                r.fold.map(|f| f.to_string()).unwrap_or_default(),
                r.reference.clone(),
                opt(r.metric1),
                opt(r.metric2),
                opt(r.fid),
            ])?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn save_csv(&self, path: &Path) -> Result<()> {
        self.write_csv(std::fs::File::create(path)?)
    }
}

/// Fixed-width table of fold means: accuracies in percent and FID, two decimals.
impl fmt::Display for MetricsReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let cell = |v: Option<f64>, pct: bool| match v {
            Some(x) if pct => format!("{:.2}", 100.0 * x),
            Some(x) => format!("{x:.2}"),
            None => "-".to_string(),
        };
        writeln!(
            f,
            "{:<8} {:<12} {:>5} {:>10} {:>10} {:>10}",
            "model", "reference", "folds", "metric1%", "metric2%", "fid"
        )?;
        for s in self.summary() {
            writeln!(
                f,
                "{:<8} {:<12} {:>5} {:>10} {:>10} {:>10}",
                s.model,
                s.reference,
                s.folds,
                cell(s.metric1, true),
                cell(s.metric2, true),
                cell(s.fid, false)
            )?;
        }
        write!(f, "chance level {:.2}%", 100.0 * CHANCE_UWA)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{make_toy_corpus, ToyCorpusConfig};

    #[test]
    fn uwa_arithmetic() {
        assert_eq!(uwa(&[0, 1, 2, 3], &[0, 1, 2, 3]).unwrap(), 1.0);
        // recalls 1, 1/2, 1/4, 1/4
        let labels = [0, 0, 1, 1, 2, 2, 2, 2, 3, 3, 3, 3];
        let preds = [0, 0, 1, 0, 2, 0, 0, 0, 3, 0, 0, 0];
        assert!((uwa(&preds, &labels).unwrap() - 0.5).abs() < 1e-15);
        assert_eq!(uwa(&[1; 12], &labels).unwrap(), 0.25);
        assert!(uwa(&[], &[]).is_err());
        assert!(uwa(&[0], &[0, 1]).is_err());
    }

    #[test]
    fn separable_pair_is_fit_exactly() {
        let x = Matrix::from_rows(&[
            [0.0, 0.0],
            [0.2, 0.1],
            [0.1, 0.3],
            [3.0, 3.0],
            [3.2, 2.9],
            [2.8, 3.1],
        ])
        .unwrap();
        let y = [0, 0, 0, 1, 1, 1];
        let clf = MarginClassifier::fit(&x, &y, &SvmConfig::default()).unwrap();
        assert_eq!(clf.predict(&x).unwrap(), y.to_vec());
        assert_eq!(clf.selection_trace.len(), 5);
    }

    #[test]
    fn single_class_is_degenerate() {
        let x = Matrix::filled(4, 2, 1.0);
        assert!(matches!(
            MarginClassifier::fit(&x, &[2, 2, 2, 2], &SvmConfig::default()),
            Err(Error::DegenerateData(_))
        ));
    }

    #[test]
    fn argmax_ties_pick_lowest_class_and_ignore_offsets() {
        let s = Matrix::from_rows(&[[1.0, 1.0, 0.0, 1.0], [0.0, 2.0, 2.0, 1.0]]).unwrap();
        assert_eq!(argmax_rows(&s), vec![0, 1]);
        assert_eq!(argmax_rows(&s.map(|v| v + 7.5)), vec![0, 1]);
    }

    #[test]
    fn duplicated_data_gives_the_same_classifier() {
        let c = make_toy_corpus(&ToyCorpusConfig {
            feature_dim: 8,
            per_class: 30,
            separation: 2.0,
            ..Default::default()
        })
        .unwrap();
        let twice = c.concat(&c).unwrap();
        let cfg = SvmConfig::default();
        let a = MarginClassifier::fit(c.features(), c.labels(), &cfg).unwrap();
        let b = MarginClassifier::fit(twice.features(), twice.labels(), &cfg).unwrap();
        assert_eq!(a.regularization, b.regularization);
        assert!(a.weights.max_abs_diff(&b.weights) < 1e-9);
        assert_eq!(
            a.predict(c.features()).unwrap(),
            b.predict(c.features()).unwrap()
        );
    }

    #[test]
    fn selection_split_ignores_row_order() {
        let x = Matrix::from_rows(&[[1.0], [2.0], [3.0], [4.0], [5.0], [6.0]]).unwrap();
        let y = [0, 0, 0, 1, 1, 1];
        let (_, val) = selection_split(&x, &y, 0.34, 9);
        let held: Vec<f64> = val.iter().map(|&i| x.get(i, 0)).collect();
        let xr = Matrix::from_rows(&[[6.0], [5.0], [4.0], [3.0], [2.0], [1.0]]).unwrap();
        let (_, val_r) = selection_split(&xr, &[1, 1, 1, 0, 0, 0], 0.34, 9);
        let mut held_r: Vec<f64> = val_r.iter().map(|&i| xr.get(i, 0)).collect();
        held_r.sort_by(f64::total_cmp);
        let mut held = held;
        held.sort_by(f64::total_cmp);
        assert_eq!(held, held_r);
        assert_eq!(held.len(), 2);
    }

    #[test]
    fn fid_closed_forms() {
        let one = |m: f64, v: f64| {
            GaussianStats::new(vec![m], Matrix::from_rows(&[[v]]).unwrap()).unwrap()
        };
        assert!((fid(&one(0.0, 1.0), &one(1.0, 1.0)).unwrap() - 1.0).abs() < 1e-9);
        let diag = |v: f64| {
            GaussianStats::new(
                vec![0.0; 2],
                Matrix::from_rows(&[[v, 0.0], [0.0, v]]).unwrap(),
            )
            .unwrap()
        };
        assert!((fid(&diag(4.0), &diag(1.0)).unwrap() - 2.0).abs() < 1e-9);
        let bad = GaussianStats::new(
            vec![0.0; 2],
            Matrix::from_rows(&[[1.0, 0.0], [0.0, -1.0]]).unwrap(),
        )
        .unwrap();
        assert!(matches!(
            fid(&bad, &diag(1.0)),
            Err(Error::NumericalDomain(_))
        ));
        assert!(matches!(
            fid(&one(0.0, 1.0), &diag(1.0)),
            Err(Error::Shape(_))
        ));
    }

    #[test]
    fn evaluator_shape_and_tap() {
        let c = make_toy_corpus(&ToyCorpusConfig {
            feature_dim: 8,
            per_class: 40,
            ..Default::default()
        })
        .unwrap();
        let cfg = EvaluatorConfig {
            epochs: 3,
            ..Default::default()
        };
        let e = EvaluatorNet::train(&c, &cfg).unwrap();
        assert_eq!(e.net.dims(), vec![8, 64, 64, 64, 64, 4]);
        let a = e.activations(c.features()).unwrap();
        assert_eq!(a.shape(), (160, 64));
        assert!(a.data().iter().all(|&v| v >= 0.0));
        let again = EvaluatorNet::train(&c, &cfg).unwrap();
        assert_eq!(e.net, again.net);
        let zero = EvaluatorNet::train(&c, &EvaluatorConfig { epochs: 0, ..cfg }).unwrap();
        assert!(zero.losses.is_empty());
    }

    #[test]
    fn fid_pipeline_needs_enough_samples() {
        let c = make_toy_corpus(&ToyCorpusConfig {
            feature_dim: 8,
            per_class: 16,
            ..Default::default()
        })
        .unwrap();
        let e = EvaluatorNet::train(
            &c,
            &EvaluatorConfig {
                epochs: 1,
                ..Default::default()
            },
        )
        .unwrap();
        assert!(matches!(
            fid_pipeline(&e, c.features(), c.features()),
            Err(Error::DegenerateData(_))
        ));
    }

    #[test]
    fn report_csv_and_table() {
        let mut r = MetricsReport::default();
        for fold in 0..2 {
            r.push(MetricsRow {
                model: "M1".into(),
                fold: Some(fold),
                reference: "set-1".into(),
                metric1: Some(0.5 + fold as f64 * 0.1),
                metric2: None,
                fid: Some(1.0),
            });
        }
        let s = r.summary();
        assert_eq!(s.len(), 1);
        assert!((s[0].metric1.unwrap() - 0.55).abs() < 1e-12);
        let mut buf = Vec::new();
        r.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with(
            "model,fold,reference,metric1_uwa,metric2_uwa,fid\nM1,0,set-1,0.5,,1.0\n"
        ));
        let table = r.to_string();
        assert!(table.contains("55.00"), "{table}");
        assert!(table.ends_with("chance level 25.00%"));
    }
}
