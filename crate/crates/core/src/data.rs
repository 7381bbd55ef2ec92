//! Labelled feature corpora: CSV ingestion, synthetic stand-in corpora,
//! session-based splits, class balancing and z-score standardization.

use std::collections::BTreeSet;
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::rng::seeded;
use crate::{CLASS_NAMES, NUM_CLASSES};

/// The four emotion classes; the discriminant is the label index used everywhere.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Emotion {
    Angry = 0,
    Sad = 1,
    Neutral = 2,
    Happy = 3,
}

impl Emotion {
    pub const ALL: [Emotion; 4] = [
        Emotion::Angry,
        Emotion::Sad,
        Emotion::Neutral,
        Emotion::Happy,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Option<Self> {
        Self::ALL.get(i).copied()
    }

    pub fn name(self) -> &'static str {
        CLASS_NAMES[self.index()]
    }
}

impl fmt::Display for Emotion {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Emotion {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        let t = s.trim().to_ascii_lowercase();
        Self::ALL
            .into_iter()
            .find(|e| e.name() == t)
            .ok_or_else(|| format!("unknown label {s:?}"))
    }
}

/// A feature vector with its class.
#[derive(Clone, Debug, PartialEq)]
pub struct LabeledVector {
    pub features: Vec<f64>,
    pub label: Emotion,
}

/// An immutable set of labelled samples sharing one feature dimension.
#[derive(Clone, Debug, PartialEq)]
pub struct Corpus {
    pub name: String,
    feature_names: Vec<String>,
    features: Matrix,
    labels: Vec<usize>,
    sessions: Option<Vec<String>>,
}

impl Corpus {
    pub fn new(
        name: impl Into<String>,
        features: Matrix,
        labels: Vec<usize>,
        sessions: Option<Vec<String>>,
    ) -> Result<Self> {
        if labels.len() != features.rows() {
            return Err(Error::Shape(format!(
                "{} labels for {} samples",
                labels.len(),
                features.rows()
            )));
        }
        if let Some(bad) = labels.iter().find(|&&l| l >= NUM_CLASSES) {
            return Err(Error::InvalidArgument(format!(
                "label index {bad} out of range"
            )));
        }
        if let Some(s) = &sessions {
            if s.len() != labels.len() {
                return Err(Error::Shape(format!(
                    "{} session ids for {} samples",
                    s.len(),
                    labels.len()
                )));
            }
        }
        let feature_names = (0..features.cols()).map(|i| format!("f{i}")).collect();
        Ok(Self {
            name: name.into(),
            feature_names,
            features,
            labels,
            sessions,
        })
    }

    pub fn from_samples(name: impl Into<String>, samples: &[LabeledVector]) -> Result<Self> {
        let rows: Vec<&[f64]> = samples.iter().map(|s| s.features.as_slice()).collect();
        let features = Matrix::from_rows(&rows)?;
        let labels = samples.iter().map(|s| s.label.index()).collect();
        Self::new(name, features, labels, None)
    }

    pub fn with_feature_names(mut self, names: Vec<String>) -> Result<Self> {
        if names.len() != self.features.cols() {
            return Err(Error::Shape(format!(
                "{} names for {} features",
                names.len(),
                self.features.cols()
            )));
        }
        self.feature_names = names;
        Ok(self)
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn feature_dim(&self) -> usize {
        self.features.cols()
    }

    pub fn features(&self) -> &Matrix {
        &self.features
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn sessions(&self) -> Option<&[String]> {
        self.sessions.as_deref()
    }

    pub fn feature_names(&self) -> &[String] {
        &self.feature_names
    }

    pub fn samples(&self) -> impl Iterator<Item = LabeledVector> + '_ {
        self.features
            .iter_rows()
            .zip(&self.labels)
            .map(|(row, &l)| LabeledVector {
                features: row.to_vec(),
                label: Emotion::from_index(l).expect("validated label"),
            })
    }

    pub fn class_histogram(&self) -> [usize; NUM_CLASSES] {
        let mut h = [0; NUM_CLASSES];
        for &l in &self.labels {
            h[l] += 1;
        }
        h
    }

    /// Samples at `indices`, in that order.
    pub fn subset(&self, indices: &[usize]) -> Corpus {
        Corpus {
            name: self.name.clone(),
            feature_names: self.feature_names.clone(),
            features: self.features.select_rows(indices),
            labels: indices.iter().map(|&i| self.labels[i]).collect(),
            sessions: self
                .sessions
                .as_ref()
                .map(|s| indices.iter().map(|&i| s[i].clone()).collect()),
        }
    }

    /// Same samples with features replaced.
    pub fn with_features(&self, features: Matrix) -> Result<Corpus> {
        if features.shape() != self.features.shape() {
            return Err(Error::Shape(format!(
                "replacement features {:?} vs {:?}",
                features.shape(),
                self.features.shape()
            )));
        }
        Ok(Corpus {
            features,
            ..self.clone()
        })
    }

    /// Appends `other` (session ids are dropped unless both carry them).
    pub fn concat(&self, other: &Corpus) -> Result<Corpus> {
        let features = Matrix::vstack(&[&self.features, &other.features])?;
        let labels = self.labels.iter().chain(&other.labels).copied().collect();
        let sessions = match (&self.sessions, &other.sessions) {
            (Some(a), Some(b)) => Some(a.iter().chain(b).cloned().collect()),
            _ => None,
        };
        Ok(Corpus {
            name: self.name.clone(),
            feature_names: self.feature_names.clone(),
            features,
            labels,
            sessions,
        })
    }

    /// Reads a feature CSV: a header row, numeric feature columns, a string
    /// label column and optionally a string session column.
    pub fn load_csv(
        path: &Path,
        label_column: &str,
        session_column: Option<&str>,
    ) -> Result<Corpus> {
        let mut reader = csv::ReaderBuilder::new()
            .has_headers(true)
            .from_path(path)?;
        let headers = reader.headers()?.clone();
        let find = |name: &str| {
            headers
                .iter()
                .position(|h| h == name)
                .ok_or_else(|| Error::Parse {
                    row: 1,
                    message: format!("missing column {name:?}"),
                })
        };
        let label_idx = find(label_column)?;
        let session_idx = session_column.map(find).transpose()?;
        let feature_cols: Vec<usize> = (0..headers.len())
            .filter(|&i| i != label_idx && Some(i) != session_idx)
            .collect();

        let mut data = Vec::new();
        let mut labels = Vec::new();
        let mut sessions = session_idx.map(|_| Vec::new());
        for (i, record) in reader.records().enumerate() {
            // Line 1 is the header.
            let row = i + 2;
            let record = record.map_err(|e| Error::Parse {
                row,
                message: e.to_string(),
            })?;
            if record.len() != headers.len() {
                return Err(Error::Parse {
                    row,
                    message: format!("expected {} fields, found {}", headers.len(), record.len()),
                });
            }
            let label: Emotion = record[label_idx]
                .parse()
                .map_err(|message| Error::Parse { row, message })?;
            labels.push(label.index());
            for &c in &feature_cols {
                let v: f64 = record[c].trim().parse().map_err(|_| Error::Parse {
                    row,
                    message: format!("column {:?} is not numeric: {:?}", &headers[c], &record[c]),
                })?;
                data.push(v);
            }
            if let (Some(s), Some(idx)) = (sessions.as_mut(), session_idx) {
                s.push(record[idx].to_string());
            }
        }
        let features = Matrix::from_vec(labels.len(), feature_cols.len(), data)?;
        let name = path
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_default();
        Corpus::new(name, features, labels, sessions)?.with_feature_names(
            feature_cols
                .iter()
                .map(|&c| headers[c].to_string())
                .collect(),
        )
    }

    /// Writes the same layout `load_csv` reads: features, then `label`, then
    /// `session` when present.
    pub fn save_csv(&self, path: &Path) -> Result<()> {
        self.write_csv(std::fs::File::create(path)?)
    }

    pub fn write_csv<W: std::io::Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let mut header: Vec<&str> = self.feature_names.iter().map(String::as_str).collect();
        header.push("label");
        if self.sessions.is_some() {
            header.push("session");
        }
        w.write_record(&header)?;
        for (r, row) in self.features.iter_rows().enumerate() {
            let mut rec: Vec<String> = row.iter().map(|v| format_float(*v)).collect();
            rec.push(CLASS_NAMES[self.labels[r]].to_string());
            if let Some(s) = &self.sessions {
                rec.push(s[r].clone());
            }
            w.write_record(&rec)?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Shortest decimal text that parses back to the same `f64`.
pub fn format_float(v: f64) -> String {
    format!("{v:?}")
}

/// Parameters of the synthetic stand-in corpus.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ToyCorpusConfig {
    pub feature_dim: usize,
    pub per_class: usize,
    /// Overrides `per_class` with explicit counts in label order.
    pub class_counts: Option<[usize; NUM_CLASSES]>,
    /// Distance of each class mean from the origin.
    pub separation: f64,
    pub noise_stddev: f64,
    pub seed: u64,
    /// Seed for the class-mean directions; defaults to `seed`. Two corpora
    /// sharing it share class geometry.
    pub mean_seed: Option<u64>,
    /// Norm of a global offset applied to every sample.
    pub shift: f64,
    pub sessions: usize,
}

impl Default for ToyCorpusConfig {
    fn default() -> Self {
        Self {
            feature_dim: 64,
            per_class: 400,
            class_counts: None,
            separation: 4.0,
            noise_stddev: 1.0,
            seed: 0,
            mean_seed: None,
            shift: 0.0,
            sessions: 5,
        }
    }
}

/// Four isotropic Gaussians whose means are `separation` times random
/// orthonormal directions. Samples are interleaved by class and sessions are
/// assigned round-robin.
pub fn make_toy_corpus(cfg: &ToyCorpusConfig) -> Result<Corpus> {
    if cfg.feature_dim < NUM_CLASSES {
        return Err(Error::InvalidArgument(format!(
            "toy corpus needs feature_dim >= {NUM_CLASSES}, got {}",
            cfg.feature_dim
        )));
    }
    if cfg.sessions == 0 {
        return Err(Error::InvalidArgument(
            "toy corpus needs at least one session".into(),
        ));
    }
    let d = cfg.feature_dim;
    let mut mean_rng = seeded(cfg.mean_seed.unwrap_or(cfg.seed));
    let directions = random_orthonormal(NUM_CLASSES, d, &mut mean_rng);

    let mut rng = seeded(cfg.seed ^ 0x9e37_79b9_7f4a_7c15);
    let offset: Vec<f64> = if cfg.shift != 0.0 {
        let v: Vec<f64> = (0..d).map(|_| StandardNormal.sample(&mut rng)).collect();
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        v.into_iter().map(|x| cfg.shift * x / norm).collect()
    } else {
        vec![0.0; d]
    };

    let counts = cfg.class_counts.unwrap_or([cfg.per_class; NUM_CLASSES]);
    let mut order = Vec::new();
    let max = counts.iter().copied().max().unwrap_or(0);
    for i in 0..max {
        for (k, &c) in counts.iter().enumerate() {
            if i < c {
                order.push(k);
            }
        }
    }
    let mut data = Vec::with_capacity(order.len() * d);
    for &k in &order {
        for j in 0..d {
            let e: f64 = StandardNormal.sample(&mut rng);
            data.push(cfg.separation * directions[k][j] + offset[j] + cfg.noise_stddev * e);
        }
    }
    let sessions = (0..order.len())
        .map(|i| format!("s{}", i % cfg.sessions + 1))
        .collect();
    let features = Matrix::from_vec(order.len(), d, data)?;
    Corpus::new("toy", features, order, Some(sessions))
}

fn random_orthonormal(count: usize, dim: usize, rng: &mut crate::rng::Rng) -> Vec<Vec<f64>> {
    let mut basis: Vec<Vec<f64>> = Vec::with_capacity(count);
    while basis.len() < count {
        let mut v: Vec<f64> = (0..dim).map(|_| StandardNormal.sample(&mut *rng)).collect();
        for b in &basis {
            let p: f64 = v.iter().zip(b).map(|(x, y)| x * y).sum();
            v.iter_mut().zip(b).for_each(|(x, y)| *x -= p * y);
        }
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm > 1e-6 {
            basis.push(v.into_iter().map(|x| x / norm).collect());
        }
    }
    basis
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "kebab-case")]
pub enum SplitMode {
    /// One fold per distinct session id.
    LeaveOneSessionOut,
    /// A single shuffled split with `train_fraction` of the samples in training.
    Ratio { train_fraction: f64 },
    /// Caller-assigned fold id per sample; one fold per distinct id.
    Explicit { fold_of: Vec<usize> },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SplitPlan {
    pub mode: SplitMode,
    pub seed: u64,
}

#[derive(Clone, Debug)]
pub struct Fold {
    pub index: usize,
    /// Indices into the source corpus.
    pub train_indices: Vec<usize>,
    pub validation_indices: Vec<usize>,
    pub train: Corpus,
    pub validation: Corpus,
}

/// Partitions a corpus into train/validation folds.
pub fn split(corpus: &Corpus, plan: &SplitPlan) -> Result<Vec<Fold>> {
    let assignment: Vec<usize> = match &plan.mode {
        SplitMode::LeaveOneSessionOut => {
            let sessions = corpus.sessions().ok_or_else(|| {
                Error::InvalidArgument("leave-one-session-out needs session ids".into())
            })?;
            let distinct: Vec<&String> = sessions
                .iter()
                .collect::<BTreeSet<_>>()
                .into_iter()
                .collect();
            sessions
                .iter()
                .map(|s| distinct.binary_search(&s).expect("collected above"))
                .collect()
        }
        SplitMode::Explicit { fold_of } => {
            if fold_of.len() != corpus.len() {
                return Err(Error::Shape(format!(
                    "{} fold ids for {} samples",
                    fold_of.len(),
                    corpus.len()
                )));
            }
            let distinct: Vec<usize> = fold_of
                .iter()
                .copied()
                .collect::<BTreeSet<_>>()
                .into_iter()
                .collect();
            fold_of
                .iter()
                .map(|f| distinct.binary_search(f).expect("collected above"))
                .collect()
        }
        SplitMode::Ratio { train_fraction } => {
            if !(0.0 < *train_fraction && *train_fraction < 1.0) {
                return Err(Error::InvalidArgument(format!(
                    "train fraction must lie in (0, 1), got {train_fraction}"
                )));
            }
            let mut idx: Vec<usize> = (0..corpus.len()).collect();
            idx.shuffle(&mut seeded(plan.seed));
            let n_train = (train_fraction * corpus.len() as f64).round() as usize;
            let mut fold_of = vec![1; corpus.len()];
            for &i in &idx[..n_train] {
                fold_of[i] = 0;
            }
            // Fold id 1 marks validation; emit exactly one fold.
            let validation: Vec<usize> = (0..corpus.len()).filter(|&i| fold_of[i] == 1).collect();
            let train: Vec<usize> = (0..corpus.len()).filter(|&i| fold_of[i] == 0).collect();
            return Ok(vec![make_fold(corpus, 0, train, validation)]);
        }
    };
    let folds = assignment.iter().copied().max().map_or(0, |m| m + 1);
    Ok((0..folds)
        .map(|f| {
            let (val, train): (Vec<usize>, Vec<usize>) =
                (0..corpus.len()).partition(|&i| assignment[i] == f);
            make_fold(corpus, f, train, val)
        })
        .collect())
}

fn make_fold(corpus: &Corpus, index: usize, train: Vec<usize>, validation: Vec<usize>) -> Fold {
    Fold {
        index,
        train: corpus.subset(&train),
        validation: corpus.subset(&validation),
        train_indices: train,
        validation_indices: validation,
    }
}

/// Downsamples every class to the minority count, keeping corpus order.
pub fn balance(corpus: &Corpus, seed: u64) -> Result<Corpus> {
    let hist = corpus.class_histogram();
    if let Some(k) = hist.iter().position(|&c| c == 0) {
        return Err(Error::DegenerateData(format!(
            "class {} has no samples",
            CLASS_NAMES[k]
        )));
    }
    let target = *hist.iter().min().expect("four classes");
    let mut rng = seeded(seed);
    let mut keep = Vec::with_capacity(target * NUM_CLASSES);
    for k in 0..NUM_CLASSES {
        let mut members: Vec<usize> = (0..corpus.len())
            .filter(|&i| corpus.labels[i] == k)
            .collect();
        members.shuffle(&mut rng);
        keep.extend_from_slice(&members[..target]);
    }
    keep.sort_unstable();
    Ok(corpus.subset(&keep))
}

/// Seeded stratified subsample keeping `fraction` of every class (at least one
/// sample per non-empty class).
pub fn stratified_subsample(corpus: &Corpus, fraction: f64, seed: u64) -> Result<Corpus> {
    if !(0.0 < fraction && fraction <= 1.0) {
        return Err(Error::InvalidArgument(format!(
            "fraction must lie in (0, 1], got {fraction}"
        )));
    }
    let mut rng = seeded(seed);
    let mut keep = Vec::new();
    for k in 0..NUM_CLASSES {
        let mut members: Vec<usize> = (0..corpus.len())
            .filter(|&i| corpus.labels[i] == k)
            .collect();
        if members.is_empty() {
            continue;
        }
        members.shuffle(&mut rng);
        let n = ((fraction * members.len() as f64).round() as usize).clamp(1, members.len());
        keep.extend_from_slice(&members[..n]);
    }
    keep.sort_unstable();
    Ok(corpus.subset(&keep))
}

/// Floor on fitted standard deviations.
pub const STDDEV_FLOOR: f64 = 1e-8;

/// Per-feature z-scoring fitted on a training split.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Standardizer {
    pub mean: Vec<f64>,
    pub stddev: Vec<f64>,
}

impl Standardizer {
    /// Fits means and population standard deviations.
    pub fn fit(train: &Corpus) -> Result<Self> {
        Self::fit_matrix(train.features())
    }

    pub fn fit_matrix(x: &Matrix) -> Result<Self> {
        if x.rows() == 0 {
            return Err(Error::DegenerateData(
                "cannot standardize an empty split".into(),
            ));
        }
        let mean = x.column_means();
        let n = x.rows() as f64;
        let mut var = vec![0.0; x.cols()];
        for row in x.iter_rows() {
            for ((v, m), s) in row.iter().zip(&mean).zip(var.iter_mut()) {
                *s += (v - m) * (v - m);
            }
        }
        let stddev = var
            .into_iter()
            .map(|s| (s / n).sqrt().max(STDDEV_FLOOR))
            .collect();
        Ok(Self { mean, stddev })
    }

    pub fn transform(&self, x: &Matrix) -> Result<Matrix> {
        self.check(x)?;
        let mut out = x.clone();
        for r in 0..out.rows() {
            for ((v, m), s) in out.row_mut(r).iter_mut().zip(&self.mean).zip(&self.stddev) {
                *v = (*v - m) / s;
            }
        }
        Ok(out)
    }

    pub fn inverse_transform(&self, x: &Matrix) -> Result<Matrix> {
        self.check(x)?;
        let mut out = x.clone();
        for r in 0..out.rows() {
            for ((v, m), s) in out.row_mut(r).iter_mut().zip(&self.mean).zip(&self.stddev) {
                *v = *v * s + m;
            }
        }
        Ok(out)
    }

    pub fn apply(&self, corpus: &Corpus) -> Result<Corpus> {
        corpus.with_features(self.transform(corpus.features())?)
    }

    fn check(&self, x: &Matrix) -> Result<()> {
        if x.cols() != self.mean.len() {
            return Err(Error::Shape(format!(
                "standardizer fitted on {} features, got {}",
                self.mean.len(),
                x.cols()
            )));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn emotion_parsing_and_order() {
        assert_eq!("Neutral".parse::<Emotion>().unwrap(), Emotion::Neutral);
        assert!("excited".parse::<Emotion>().is_err());
        let idx: Vec<usize> = Emotion::ALL.iter().map(|e| e.index()).collect();
        assert_eq!(idx, vec![0, 1, 2, 3]);
    }

    #[test]
    fn toy_corpus_is_balanced_with_sessions() {
        let c = make_toy_corpus(&ToyCorpusConfig {
            per_class: 500,
            ..Default::default()
        })
        .unwrap();
        assert_eq!(c.len(), 2000);
        assert_eq!(c.class_histogram(), [500; 4]);
        let sessions: BTreeSet<_> = c.sessions().unwrap().iter().collect();
        assert_eq!(sessions.len(), 5);
        assert!(make_toy_corpus(&ToyCorpusConfig {
            feature_dim: 3,
            ..Default::default()
        })
        .is_err());
    }

    #[test]
    fn balance_downsamples_to_minority() {
        let c = make_toy_corpus(&ToyCorpusConfig {
            feature_dim: 4,
            class_counts: Some([2644, 3477, 792, 885]),
            ..Default::default()
        })
        .unwrap();
        let b = balance(&c, 3).unwrap();
        assert_eq!(b.class_histogram(), [792; 4]);
        assert_eq!(b, balance(&c, 3).unwrap());
    }

    #[test]
    fn balance_keeps_balanced_corpus() {
        let c = make_toy_corpus(&ToyCorpusConfig {
            feature_dim: 4,
            per_class: 7,
            ..Default::default()
        })
        .unwrap();
        assert_eq!(balance(&c, 1).unwrap(), c);
        let mut empty = c.subset(
            &(0..c.len())
                .filter(|&i| c.labels()[i] != 2)
                .collect::<Vec<_>>(),
        );
        empty.name = "missing neutral".into();
        assert!(matches!(balance(&empty, 1), Err(Error::DegenerateData(_))));
    }

    #[test]
    fn ratio_split_is_deterministic() {
        let c = make_toy_corpus(&ToyCorpusConfig {
            feature_dim: 4,
            per_class: 25,
            ..Default::default()
        })
        .unwrap();
        let plan = SplitPlan {
            mode: SplitMode::Ratio {
                train_fraction: 0.8,
            },
            seed: 4,
        };
        let a = split(&c, &plan).unwrap();
        let b = split(&c, &plan).unwrap();
        assert_eq!(a.len(), 1);
        assert_eq!(a[0].train.len(), 80);
        assert_eq!(a[0].validation.len(), 20);
        assert_eq!(a[0].train_indices, b[0].train_indices);
    }

    #[test]
    fn loso_needs_sessions() {
        let c = Corpus::new("x", Matrix::zeros(3, 4), vec![0, 1, 2], None).unwrap();
        let plan = SplitPlan {
            mode: SplitMode::LeaveOneSessionOut,
            seed: 0,
        };
        assert!(split(&c, &plan).is_err());
    }

    #[test]
    fn constant_column_standardizes_to_zero() {
        let x = Matrix::from_rows(&[[1.0, 5.0], [3.0, 5.0], [8.0, 5.0]]).unwrap();
        let s = Standardizer::fit_matrix(&x).unwrap();
        let t = s.transform(&x).unwrap();
        assert!((0..3).all(|r| t.get(r, 1) == 0.0));
        assert!(s.inverse_transform(&t).unwrap().max_abs_diff(&x) < 1e-12);
    }
}
