//! The three generator systems.
//!
//! * `M1`: adversarial autoencoder. The encoder's 2-D codes are pushed toward a
//!   four-mode Gaussian mixture by the code discriminator `d1`, one mode per class.
//! * `M2`: `M1` plus a data-space discriminator `d2` that also trains the decoder.
//! * `M3`: a 20-D normal prior mapped into a larger code space by a code
//!   generator, with an auxiliary classifier on the `d2` trunk.
//!
//! Discriminators see their input concatenated with a one-hot class vector.
//! Both output the probability that the input is *generated* (an encoder code
//! for `d1`, a decoder output for `d2`).

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::data::Standardizer;
use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::nn::{Activation, Mlp, MlpCheckpoint};
use crate::priors::{one_hot_matrix, LabelSource, MixturePrior, NormalPrior, Prior};
use crate::rng::{seeded, Rng};
use crate::NUM_CLASSES;

/// Feature dimension of the reference architecture.
pub const REFERENCE_FEATURE_DIM: usize = 1582;
/// Latent dimension of the `M3` normal prior.
pub const M3_PRIOR_DIM: usize = 20;
/// Smallest hidden width a scaled profile produces.
pub const MIN_SCALED_WIDTH: usize = 8;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum ModelKind {
    #[serde(alias = "m1")]
    M1,
    #[serde(alias = "m2")]
    M2,
    #[serde(alias = "m3")]
    M3,
}

impl ModelKind {
    pub const ALL: [ModelKind; 3] = [ModelKind::M1, ModelKind::M2, ModelKind::M3];

    pub fn has_data_discriminator(self) -> bool {
        !matches!(self, ModelKind::M1)
    }

    pub fn name(self) -> &'static str {
        match self {
            ModelKind::M1 => "m1",
            ModelKind::M2 => "m2",
            ModelKind::M3 => "m3",
        }
    }
}

impl std::str::FromStr for ModelKind {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "m1" => Ok(ModelKind::M1),
            "m2" => Ok(ModelKind::M2),
            "m3" => Ok(ModelKind::M3),
            other => Err(format!("unknown model {other:?}, expected m1, m2 or m3")),
        }
    }
}

impl std::fmt::Display for ModelKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

/// How hidden widths relate to the reference architecture.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ScaleProfile {
    /// Reference widths regardless of feature dimension.
    Paper,
    /// Hidden widths times `feature_dim / 1582`.
    Proportional,
    /// Hidden widths times a fixed factor.
    Factor(f64),
}

impl ScaleProfile {
    fn ratio(self, feature_dim: usize) -> f64 {
        match self {
            ScaleProfile::Paper => 1.0,
            ScaleProfile::Proportional => feature_dim as f64 / REFERENCE_FEATURE_DIM as f64,
            ScaleProfile::Factor(f) => f,
        }
    }
}

/// Every component width for one model.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Architecture {
    pub encoder: Vec<usize>,
    pub decoder: Vec<usize>,
    pub d1: Vec<usize>,
    pub code_generator: Option<Vec<usize>>,
    pub d2_trunk: Option<Vec<usize>>,
    pub d2_head: Option<Vec<usize>>,
    pub aux_head: Option<Vec<usize>>,
}

impl Architecture {
    pub fn new(kind: ModelKind, feature_dim: usize, profile: ScaleProfile) -> Result<Self> {
        if feature_dim < NUM_CLASSES {
            return Err(Error::InvalidArgument(format!(
                "feature_dim must be at least {NUM_CLASSES}, got {feature_dim}"
            )));
        }
        let ratio = profile.ratio(feature_dim);
        if !(ratio > 0.0 && ratio.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "scale factor {ratio} is not positive"
            )));
        }
        let paper = matches!(profile, ScaleProfile::Paper);
        let w = |h: usize| {
            if paper {
                h
            } else {
                ((h as f64 * ratio).round() as usize).max(MIN_SCALED_WIDTH)
            }
        };
        let d = feature_dim;
        let c = NUM_CLASSES;
        let (hidden, bottleneck) = match kind {
            ModelKind::M1 | ModelKind::M2 => ([w(1000), w(500), w(100)], 2),
            ModelKind::M3 => ([w(1000), w(700), w(300)], w(256)),
        };
        if feature_dim < bottleneck {
            return Err(Error::InvalidArgument(format!(
                "feature_dim {feature_dim} is smaller than the {bottleneck}-wide bottleneck"
            )));
        }
        let encoder = vec![d, hidden[0], hidden[1], hidden[2], bottleneck];
        let decoder = vec![bottleneck, hidden[2], hidden[1], hidden[0], d];
        let d1 = vec![bottleneck + c, w(1000), w(500), w(100), 1];
        let (code_generator, d2_trunk, d2_head, aux_head) = match kind {
            ModelKind::M1 => (None, None, None, None),
            ModelKind::M2 => (
                None,
                Some(vec![d + c, w(1000), w(500), w(100)]),
                Some(vec![w(100), 1]),
                None,
            ),
            ModelKind::M3 => (
                Some(vec![M3_PRIOR_DIM + c, w(140), bottleneck]),
                Some(vec![d + c, w(1000), w(500), w(100)]),
                Some(vec![w(100), 1]),
                Some(vec![w(100), w(128), c]),
            ),
        };
        Ok(Self {
            encoder,
            decoder,
            d1,
            code_generator,
            d2_trunk,
            d2_head,
            aux_head,
        })
    }

    pub fn code_dim(&self) -> usize {
        *self.encoder.last().expect("non-empty")
    }
}

/// Data-space discriminator: a shared trunk, a real/generated head and, for
/// `M3`, an auxiliary class head.
#[derive(Clone, Debug, PartialEq)]
pub struct DataDiscriminator {
    pub trunk: Mlp,
    pub head: Mlp,
    pub aux: Option<Mlp>,
}

/// Generated samples with their class ids.
#[derive(Clone, Debug, PartialEq)]
pub struct SyntheticBatch {
    pub features: Matrix,
    pub labels: Vec<usize>,
}

/// Prior-side inputs for the code discriminator.
#[derive(Clone, Debug)]
pub struct PriorCodes {
    /// Latent samples (mixture points, or normal draws for `M3`).
    pub latent: Matrix,
    pub one_hot: Matrix,
    pub labels: Vec<usize>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct GanModel {
    pub kind: ModelKind,
    pub feature_dim: usize,
    pub profile: ScaleProfile,
    pub seed: u64,
    pub encoder: Mlp,
    pub decoder: Mlp,
    pub d1: Mlp,
    pub code_generator: Option<Mlp>,
    pub d2: Option<DataDiscriminator>,
    pub prior: Prior,
    /// Maps raw features to the space the networks were trained in. `None`
    /// means the networks see raw features.
    pub standardizer: Option<Standardizer>,
}

impl GanModel {
    /// Builds a freshly initialized model. The `M1`/`M2` prior is `mixture`.
    pub fn build(
        kind: ModelKind,
        feature_dim: usize,
        profile: ScaleProfile,
        mixture: MixturePrior,
        seed: u64,
    ) -> Result<Self> {
        let arch = Architecture::new(kind, feature_dim, profile)?;
        let mut rng = seeded(seed);
        let relu = Activation::Relu;
        let encoder = Mlp::uniform(&arch.encoder, relu, Activation::Linear, &mut rng)?;
        let decoder = Mlp::uniform(&arch.decoder, relu, Activation::Linear, &mut rng)?;
        let d1 = Mlp::uniform(&arch.d1, relu, Activation::Sigmoid, &mut rng)?;
        let code_generator = arch
            .code_generator
            .as_ref()
            .map(|dims| Mlp::uniform(dims, relu, Activation::Linear, &mut rng))
            .transpose()?;
        let d2 = match (&arch.d2_trunk, &arch.d2_head) {
            (Some(trunk), Some(head)) => Some(DataDiscriminator {
                trunk: Mlp::uniform(trunk, relu, relu, &mut rng)?,
                head: Mlp::uniform(head, relu, Activation::Sigmoid, &mut rng)?,
                aux: arch
                    .aux_head
                    .as_ref()
                    .map(|dims| Mlp::uniform(dims, relu, Activation::Softmax, &mut rng))
                    .transpose()?,
            }),
            _ => None,
        };
        let prior = match kind {
            ModelKind::M1 | ModelKind::M2 => {
                if mixture.num_components() != NUM_CLASSES {
                    return Err(Error::InvalidArgument(format!(
                        "mixture prior needs {NUM_CLASSES} components, got {}",
                        mixture.num_components()
                    )));
                }
                Prior::Mixture(mixture)
            }
            ModelKind::M3 => Prior::Normal(NormalPrior::new(M3_PRIOR_DIM)?),
        };
        Ok(Self {
            kind,
            feature_dim,
            profile,
            seed,
            encoder,
            decoder,
            d1,
            code_generator,
            d2,
            prior,
            standardizer: None,
        })
    }

    pub fn code_dim(&self) -> usize {
        self.encoder.output_dim().expect("encoder has layers")
    }

    pub fn architecture(&self) -> Architecture {
        Architecture {
            encoder: self.encoder.dims(),
            decoder: self.decoder.dims(),
            d1: self.d1.dims(),
            code_generator: self.code_generator.as_ref().map(Mlp::dims),
            d2_trunk: self.d2.as_ref().map(|d| d.trunk.dims()),
            d2_head: self.d2.as_ref().map(|d| d.head.dims()),
            aux_head: self.d2.as_ref().and_then(|d| d.aux.as_ref().map(Mlp::dims)),
        }
    }

    pub fn mixture(&self) -> Option<&MixturePrior> {
        match &self.prior {
            Prior::Mixture(m) => Some(m),
            Prior::Normal(_) => None,
        }
    }

    /// Raw features to network space.
    pub fn to_model_space(&self, features: &Matrix) -> Result<Matrix> {
        self.check_features(features)?;
        match &self.standardizer {
            Some(s) => s.transform(features),
            None => Ok(features.clone()),
        }
    }

    /// Network space back to raw features.
    pub fn to_feature_space(&self, x: &Matrix) -> Result<Matrix> {
        match &self.standardizer {
            Some(s) => s.inverse_transform(x),
            None => Ok(x.clone()),
        }
    }

    fn check_features(&self, features: &Matrix) -> Result<()> {
        if features.cols() != self.feature_dim {
            return Err(Error::Shape(format!(
                "model expects {} features, got {}",
                self.feature_dim,
                features.cols()
            )));
        }
        Ok(())
    }

    /// Bottleneck codes for raw features.
    pub fn encode(&self, features: &Matrix) -> Result<Matrix> {
        self.encoder.predict(&self.to_model_space(features)?)
    }

    /// Draws prior-side samples for `n` rows. `M1`/`M2`: mixture points with
    /// their component as label. `M3`: normal draws with uniform labels.
    pub fn sample_prior(
        &self,
        n: usize,
        class: Option<usize>,
        rng: &mut Rng,
    ) -> Result<PriorCodes> {
        if let Some(k) = class {
            if k >= NUM_CLASSES {
                return Err(Error::InvalidArgument(format!("unknown class id {k}")));
            }
        }
        let (latent, labels) = match &self.prior {
            Prior::Mixture(m) => match class {
                Some(k) => {
                    let ids = vec![k; n];
                    (m.sample_components(&ids, rng), ids)
                }
                None => m.sample(n, rng),
            },
            Prior::Normal(p) => {
                let labels = match class {
                    Some(k) => vec![k; n],
                    None => LabelSource::default().one_hot(n, rng).1,
                };
                (p.sample(n, rng), labels)
            }
        };
        Ok(PriorCodes {
            one_hot: one_hot_matrix(&labels, NUM_CLASSES),
            latent,
            labels,
        })
    }

    /// Maps prior samples into code space (identity for `M1`/`M2`).
    pub fn prior_to_code(&self, prior: &PriorCodes) -> Result<Matrix> {
        match &self.code_generator {
            Some(cg) => cg.predict(&Matrix::hstack(&[&prior.latent, &prior.one_hot])?),
            None => Ok(prior.latent.clone()),
        }
    }

    /// Generates `n` samples in network space with labels.
    pub fn generate_model_space(
        &self,
        n: usize,
        class: Option<usize>,
        rng: &mut Rng,
    ) -> Result<SyntheticBatch> {
        let prior = self.sample_prior(n, class, rng)?;
        let code = self.prior_to_code(&prior)?;
        Ok(SyntheticBatch {
            features: self.decoder.predict(&code)?,
            labels: prior.labels,
        })
    }

    /// Generates `n` labelled samples in raw feature space, either from class
    /// `class` or with uniformly drawn classes.
    pub fn generate(
        &self,
        n: usize,
        class: Option<usize>,
        rng: &mut Rng,
    ) -> Result<SyntheticBatch> {
        if n == 0 {
            return Err(Error::InvalidArgument(
                "cannot generate an empty batch".into(),
            ));
        }
        let batch = self.generate_model_space(n, class, rng)?;
        let features = self.to_feature_space(&batch.features)?;
        if !features.is_finite() {
            return Err(Error::NumericalDomain(
                "generator produced non-finite features".into(),
            ));
        }
        Ok(SyntheticBatch {
            features,
            labels: batch.labels,
        })
    }

    /// `d1` probabilities that each (code, class) pair came from the encoder.
    pub fn discriminate_code(&self, code: &Matrix, one_hot: &Matrix) -> Result<Vec<f64>> {
        if code.cols() != self.code_dim() || one_hot.cols() != NUM_CLASSES {
            return Err(Error::Shape(format!(
                "code discriminator expects {}+{NUM_CLASSES} columns, got {}+{}",
                self.code_dim(),
                code.cols(),
                one_hot.cols()
            )));
        }
        Ok(self
            .d1
            .predict(&Matrix::hstack(&[code, one_hot])?)?
            .into_vec())
    }

    /// `d2` probabilities that each (features, class) pair is generated, plus
    /// the auxiliary class softmax for `M3`. Features are raw.
    pub fn discriminate_data(
        &self,
        features: &Matrix,
        one_hot: &Matrix,
    ) -> Result<(Vec<f64>, Option<Matrix>)> {
        let x = self.to_model_space(features)?;
        self.discriminate_model_space(&x, one_hot)
    }

    pub fn discriminate_model_space(
        &self,
        x: &Matrix,
        one_hot: &Matrix,
    ) -> Result<(Vec<f64>, Option<Matrix>)> {
        let d2 = self.d2.as_ref().ok_or_else(|| {
            Error::Unsupported(format!("{} has no data discriminator", self.kind))
        })?;
        let h = d2.trunk.predict(&Matrix::hstack(&[x, one_hot])?)?;
        let p = d2.head.predict(&h)?.into_vec();
        let aux = d2.aux.as_ref().map(|a| a.predict(&h)).transpose()?;
        Ok((p, aux))
    }

    pub fn to_checkpoint(&self) -> ModelCheckpoint {
        let meta = serde_json::json!({ "kind": self.kind, "profile": self.profile });
        let mut networks = BTreeMap::new();
        let mut put = |name: &str, net: &Mlp| {
            networks.insert(
                name.to_string(),
                net.to_checkpoint(Some(self.seed), meta.clone()),
            );
        };
        put("encoder", &self.encoder);
        put("decoder", &self.decoder);
        put("d1", &self.d1);
        if let Some(cg) = &self.code_generator {
            put("code_generator", cg);
        }
        if let Some(d2) = &self.d2 {
            put("d2_trunk", &d2.trunk);
            put("d2_head", &d2.head);
            if let Some(aux) = &d2.aux {
                put("aux_head", aux);
            }
        }
        ModelCheckpoint {
            version: MODEL_CHECKPOINT_VERSION,
            kind: self.kind,
            feature_dim: self.feature_dim,
            profile: self.profile,
            seed: self.seed,
            prior: self.prior.clone(),
            standardizer: self.standardizer.clone(),
            networks,
        }
    }

    pub fn from_checkpoint(ckpt: &ModelCheckpoint) -> Result<Self> {
        if ckpt.version != MODEL_CHECKPOINT_VERSION {
            return Err(Error::Checkpoint(format!(
                "unsupported model checkpoint version {}",
                ckpt.version
            )));
        }
        let net = |name: &str| -> Result<Mlp> {
            let c = ckpt
                .networks
                .get(name)
                .ok_or_else(|| Error::Checkpoint(format!("missing network {name:?}")))?;
            Mlp::from_checkpoint(c)
        };
        let optional = |name: &str| -> Result<Option<Mlp>> {
            ckpt.networks
                .get(name)
                .map(Mlp::from_checkpoint)
                .transpose()
        };
        let d2 = match optional("d2_trunk")? {
            Some(trunk) => Some(DataDiscriminator {
                trunk,
                head: net("d2_head")?,
                aux: optional("aux_head")?,
            }),
            None => None,
        };
        let model = Self {
            kind: ckpt.kind,
            feature_dim: ckpt.feature_dim,
            profile: ckpt.profile,
            seed: ckpt.seed,
            encoder: net("encoder")?,
            decoder: net("decoder")?,
            d1: net("d1")?,
            code_generator: optional("code_generator")?,
            d2,
            prior: ckpt.prior.clone(),
            standardizer: ckpt.standardizer.clone(),
        };
        if model.kind.has_data_discriminator() != model.d2.is_some() {
            return Err(Error::Checkpoint(format!(
                "{} checkpoint has the wrong set of discriminators",
                model.kind
            )));
        }
        Ok(model)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, serde_json::to_vec(&self.to_checkpoint())?)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let ckpt: ModelCheckpoint = serde_json::from_slice(&std::fs::read(path)?)?;
        Self::from_checkpoint(&ckpt)
    }
}

pub const MODEL_CHECKPOINT_VERSION: u8 = 1;

/// Every component network of a model plus its prior and metadata.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelCheckpoint {
    pub version: u8,
    pub kind: ModelKind,
    pub feature_dim: usize,
    pub profile: ScaleProfile,
    pub seed: u64,
    pub prior: Prior,
    pub standardizer: Option<Standardizer>,
    pub networks: BTreeMap<String, MlpCheckpoint>,
}
