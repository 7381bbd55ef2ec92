//! Experiment configuration, read from TOML. Every field has a default, so an
//! empty file (or no file) is a valid configuration.

use std::path::{Path, PathBuf};

use emogan_core::data::{Corpus, ToyCorpusConfig};
use emogan_core::metrics::{EvaluatorConfig, SvmConfig};
use emogan_core::models::{ModelKind, ScaleProfile};
use emogan_core::nn::SgdConfig;
use emogan_core::priors::MixturePrior;
use emogan_core::toy::ToyGanConfig;
use emogan_core::train::TrainPlan;
use serde::{Deserialize, Serialize};

use crate::error::{ExpError, ExpResult};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ExperimentKind {
    ToyCompare,
    CvIndomain,
    CrossCorpus,
    LowResource,
}

/// Where a corpus comes from.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "source", rename_all = "lowercase")]
pub enum CorpusSource {
    Toy(ToyCorpusConfig),
    Csv {
        path: PathBuf,
        #[serde(default = "default_label_column")]
        label_column: String,
        #[serde(default)]
        session_column: Option<String>,
    },
}

fn default_label_column() -> String {
    "label".into()
}

impl CorpusSource {
    pub fn load(&self) -> ExpResult<Corpus> {
        match self {
            CorpusSource::Toy(cfg) => Ok(emogan_core::data::make_toy_corpus(cfg)?),
            CorpusSource::Csv {
                path,
                label_column,
                session_column,
            } => Ok(Corpus::load_csv(
                path,
                label_column,
                session_column.as_deref(),
            )?),
        }
    }

    fn validate(&self, what: &str) -> ExpResult<()> {
        if let CorpusSource::Csv { path, .. } = self {
            if !path.is_file() {
                return Err(ExpError::Config(format!(
                    "{what} file {} does not exist",
                    path.display()
                )));
            }
        }
        Ok(())
    }
}

/// Target corpus used by the cross-corpus and low-resource experiments: same
/// class directions as the default source, shifted and class-imbalanced.
pub fn default_target() -> ToyCorpusConfig {
    ToyCorpusConfig {
        seed: 1,
        mean_seed: Some(0),
        shift: 1.0,
        class_counts: Some([150, 250, 400, 200]),
        ..Default::default()
    }
}

/// Optional replacements for the per-model reference training plan.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainOverrides {
    pub epochs: Option<usize>,
    pub batch_size: Option<usize>,
    pub d2_gen_ratio: Option<usize>,
    pub standardize: Option<bool>,
    pub step1_ae: Option<SgdConfig>,
    pub step2_d1: Option<SgdConfig>,
    pub step3_enc: Option<SgdConfig>,
    pub step4_d2: Option<SgdConfig>,
    pub step5_gen: Option<SgdConfig>,
}

impl TrainOverrides {
    pub fn plan_for(&self, kind: ModelKind, seed: u64) -> TrainPlan {
        let mut p = TrainPlan::defaults_for(kind);
        p.seed = seed;
        if let Some(v) = self.epochs {
            p.epochs = v;
        }
        if let Some(v) = self.batch_size {
            p.batch_size = v;
        }
        if let Some(v) = self.d2_gen_ratio {
            p.d2_gen_ratio = v;
        }
        if let Some(v) = self.standardize {
            p.standardize = v;
        }
        for (slot, v) in [
            (&mut p.step1_ae, self.step1_ae),
            (&mut p.step2_d1, self.step2_d1),
            (&mut p.step3_enc, self.step3_enc),
            (&mut p.step4_d2, self.step4_d2),
            (&mut p.step5_gen, self.step5_gen),
        ] {
            if let Some(v) = v {
                *slot = v;
            }
        }
        p
    }
}

/// Mixture prior of the `M1`/`M2` code space.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PriorConfig {
    pub separation: f64,
    pub stddev: f64,
}

impl Default for PriorConfig {
    fn default() -> Self {
        Self {
            separation: 1.0,
            stddev: 0.25,
        }
    }
}

impl PriorConfig {
    pub fn mixture(&self) -> ExpResult<MixturePrior> {
        MixturePrior::orthogonal(self.separation, self.stddev)
            .map_err(|e| ExpError::Config(e.to_string()))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MetricSelection {
    pub metric1: bool,
    pub metric2: bool,
    pub fid: bool,
    pub svm: SvmConfig,
    pub evaluator: EvaluatorConfig,
}

impl Default for MetricSelection {
    fn default() -> Self {
        Self {
            metric1: true,
            metric2: true,
            fid: true,
            svm: SvmConfig::default(),
            evaluator: EvaluatorConfig::default(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ToyCompareConfig {
    pub seeds: usize,
    pub gan: ToyGanConfig,
    /// Share of samples a mode needs to count as covered.
    pub coverage_share: f64,
}

impl Default for ToyCompareConfig {
    fn default() -> Self {
        Self {
            seeds: 10,
            gan: ToyGanConfig::default(),
            coverage_share: 0.05,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CvConfig {
    /// Synthetic samples per fold as a multiple of the training split size.
    pub synth_ratio: f64,
    /// Also write each trained model's checkpoint and synthetic samples.
    pub save_checkpoints: bool,
    /// Fold indices to run; all folds when unset.
    pub folds: Option<Vec<usize>>,
}

impl Default for CvConfig {
    fn default() -> Self {
        Self {
            synth_ratio: 1.0,
            save_checkpoints: false,
            folds: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LowResourceConfig {
    pub fractions: Vec<f64>,
    pub n_synth: Vec<usize>,
    /// Generator used for augmentation.
    pub model: ModelKind,
    /// Trained checkpoint to use instead of training in place.
    pub checkpoint: Option<PathBuf>,
    pub classifier: EvaluatorConfig,
}

impl Default for LowResourceConfig {
    fn default() -> Self {
        Self {
            fractions: vec![0.1, 0.25, 0.5, 0.8, 1.0],
            n_synth: vec![0, 600, 2000, 6000],
            model: ModelKind::M2,
            checkpoint: None,
            classifier: EvaluatorConfig::default(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    /// Optional; the CLI verb decides what runs.
    pub kind: Option<ExperimentKind>,
    pub seed: u64,
    pub output_dir: PathBuf,
    pub models: Vec<ModelKind>,
    pub profile: ScaleProfile,
    pub corpus: CorpusSource,
    pub target: CorpusSource,
    pub prior: PriorConfig,
    pub train: TrainOverrides,
    pub metrics: MetricSelection,
    pub toy: ToyCompareConfig,
    pub cv: CvConfig,
    pub low_resource: LowResourceConfig,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            kind: None,
            seed: 0,
            output_dir: PathBuf::from("out"),
            models: ModelKind::ALL.to_vec(),
            profile: ScaleProfile::Proportional,
            corpus: CorpusSource::Toy(ToyCorpusConfig::default()),
            target: CorpusSource::Toy(default_target()),
            prior: PriorConfig::default(),
            train: TrainOverrides::default(),
            metrics: MetricSelection::default(),
            toy: ToyCompareConfig::default(),
            cv: CvConfig::default(),
            low_resource: LowResourceConfig::default(),
        }
    }
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> ExpResult<Self> {
        toml::from_str(text).map_err(|e| ExpError::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> ExpResult<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| ExpError::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_toml(&text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn validate(&self) -> ExpResult<()> {
        if self.models.is_empty() {
            return Err(ExpError::Config("at least one model is required".into()));
        }
        self.corpus.validate("corpus")?;
        self.target.validate("target")?;
        self.prior.mixture()?;
        for kind in &self.models {
            self.train
                .plan_for(*kind, 0)
                .validate()
                .map_err(|e| ExpError::Config(e.to_string()))?;
        }
        if let ScaleProfile::Factor(f) = self.profile {
            if !(f > 0.0) {
                return Err(ExpError::Config(format!(
                    "scale factor must be positive, got {f}"
                )));
            }
        }
        if !(self.cv.synth_ratio > 0.0) {
            return Err(ExpError::Config("cv.synth_ratio must be positive".into()));
        }
        if self
            .low_resource
            .fractions
            .iter()
            .any(|&p| !(p > 0.0 && p <= 1.0))
        {
            return Err(ExpError::Config(
                "low_resource.fractions must lie in (0, 1]".into(),
            ));
        }
        if let Some(path) = &self.low_resource.checkpoint {
            if !path.is_file() {
                return Err(ExpError::Config(format!(
                    "checkpoint {} does not exist",
                    path.display()
                )));
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_file_gives_defaults() {
        let c = ExperimentConfig::from_toml("").unwrap();
        assert_eq!(c, ExperimentConfig::default());
        c.validate().unwrap();
    }

    #[test]
    fn overrides_and_roundtrip() {
        let text = r#"
            seed = 7
            models = ["m1", "m3"]
            profile = { factor = 0.25 }

            [corpus]
            source = "toy"
            per_class = 50
            separation = 0.0

            [train]
            epochs = 3
            step2_d1 = { learning_rate = 0.05, momentum = 0.0 }
        "#;
        let c = ExperimentConfig::from_toml(text).unwrap();
        assert_eq!(c.seed, 7);
        assert_eq!(c.models, vec![ModelKind::M1, ModelKind::M3]);
        assert_eq!(c.profile, ScaleProfile::Factor(0.25));
        let plan = c.train.plan_for(ModelKind::M1, 1);
        assert_eq!(plan.epochs, 3);
        assert_eq!(plan.step2_d1.learning_rate, 0.05);
        assert_eq!(plan.step1_ae.momentum, 0.9);
        match &c.corpus {
            CorpusSource::Toy(t) => {
                assert_eq!((t.per_class, t.separation, t.feature_dim), (50, 0.0, 64))
            }
            other => panic!("{other:?}"),
        }
        let back = ExperimentConfig::from_toml(&c.to_toml()).unwrap();
        assert_eq!(back, c);
    }

    #[test]
    fn bad_configs_are_rejected() {
        assert!(ExperimentConfig::from_toml("no_such_key = 1").is_err());
        let missing =
            ExperimentConfig::from_toml("[corpus]\nsource = \"csv\"\npath = \"/nonexistent.csv\"")
                .unwrap();
        assert!(matches!(missing.validate(), Err(ExpError::Config(_))));
        let empty = ExperimentConfig::from_toml("models = []").unwrap();
        assert!(empty.validate().is_err());
        let ratio = ExperimentConfig::from_toml("[train]\nd2_gen_ratio = 0").unwrap();
        assert!(ratio.validate().is_err());
    }
}
