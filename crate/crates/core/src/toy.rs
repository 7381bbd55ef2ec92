//! Two-dimensional GAN study: a vanilla GAN and an infoGAN with a 4-way
//! categorical code, both mapping a 2-D standard normal onto a 4-mode mixture.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::nn::{loss_bce, loss_categorical, Activation, Mlp, SgdConfig};
use crate::priors::{nearest, one_hot_matrix, LabelSource, MixturePrior, NormalPrior};
use crate::rng::{derive_seed, seeded, Rng};
use crate::train::DIVERGENCE_THRESHOLD;
use crate::NUM_CLASSES;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ToyVariant {
    Vanilla,
    Info,
}

impl ToyVariant {
    pub fn name(self) -> &'static str {
        match self {
            ToyVariant::Vanilla => "vanilla",
            ToyVariant::Info => "info",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ToyGanConfig {
    pub hidden: usize,
    pub batch_size: usize,
    /// Target points drawn once per run; an epoch is one pass over them.
    pub target_points: usize,
    pub epochs: usize,
    pub discriminator: SgdConfig,
    pub generator: SgdConfig,
    /// Weight of the categorical code loss (info variant).
    pub lambda: f64,
    /// Distance of each target mode from the origin.
    pub separation: f64,
    pub mode_stddev: f64,
    /// Points generated after training for evaluation.
    pub samples: usize,
}

impl Default for ToyGanConfig {
    fn default() -> Self {
        Self {
            hidden: 128,
            batch_size: 32,
            target_points: 2048,
            epochs: 40,
            discriminator: SgdConfig {
                learning_rate: 0.05,
                momentum: 0.5,
            },
            generator: SgdConfig {
                learning_rate: 0.05,
                momentum: 0.5,
            },
            lambda: 1.0,
            separation: 2.0,
            mode_stddev: 0.2,
            samples: 2000,
        }
    }
}

impl ToyGanConfig {
    pub fn target(&self) -> Result<MixturePrior> {
        MixturePrior::orthogonal(self.separation, self.mode_stddev)
    }
}

#[derive(Clone, Debug)]
pub struct ToyGan {
    pub variant: ToyVariant,
    pub generator: Mlp,
    /// Shared discriminator layers, `2→h→h`.
    pub trunk: Mlp,
    /// `h→1` sigmoid.
    pub head: Mlp,
    /// `h→4` softmax, info variant only.
    pub aux: Option<Mlp>,
    pub noise: NormalPrior,
}

/// Generated points with their conditioning codes (info variant).
#[derive(Clone, Debug)]
pub struct ToySamples {
    pub points: Matrix,
    pub codes: Option<Vec<usize>>,
}

impl ToyGan {
    pub fn new(variant: ToyVariant, hidden: usize, rng: &mut Rng) -> Result<Self> {
        let relu = Activation::Relu;
        let gen_in = match variant {
            ToyVariant::Vanilla => 2,
            ToyVariant::Info => 2 + NUM_CLASSES,
        };
        Ok(Self {
            variant,
            generator: Mlp::uniform(&[gen_in, hidden, hidden, 2], relu, Activation::Linear, rng)?,
            trunk: Mlp::uniform(&[2, hidden, hidden], relu, relu, rng)?,
            head: Mlp::uniform(&[hidden, 1], relu, Activation::Sigmoid, rng)?,
            aux: match variant {
                ToyVariant::Vanilla => None,
                ToyVariant::Info => Some(Mlp::uniform(
                    &[hidden, NUM_CLASSES],
                    relu,
                    Activation::Softmax,
                    rng,
                )?),
            },
            noise: NormalPrior::new(2)?,
        })
    }

    /// Noise (and one-hot code) input for `n` generator rows.
    fn latent(&self, n: usize, rng: &mut Rng) -> (Matrix, Option<(Matrix, Vec<usize>)>) {
        let z = self.noise.sample(n, rng);
        match self.variant {
            ToyVariant::Vanilla => (z, None),
            ToyVariant::Info => {
                let (hot, ids) = LabelSource::default().one_hot(n, rng);
                let input = Matrix::hstack(&[&z, &hot]).expect("equal rows");
                (input, Some((hot, ids)))
            }
        }
    }

    pub fn sample(&self, n: usize, rng: &mut Rng) -> Result<ToySamples> {
        let (input, code) = self.latent(n, rng);
        Ok(ToySamples {
            points: self.generator.predict(&input)?,
            codes: code.map(|(_, ids)| ids),
        })
    }

    /// One discriminator update: real points target 1, generated points target 0.
    /// The info variant also fits the auxiliary head (and trunk) to the codes
    /// of the generated points. Returns (adversarial loss, code loss).
    pub fn discriminator_step(
        &mut self,
        real: &Matrix,
        cfg: &SgdConfig,
        lambda: f64,
        rng: &mut Rng,
    ) -> Result<(f64, Option<f64>)> {
        let n = real.rows();
        let (input, code) = self.latent(n, rng);
        let fake = self.generator.predict(&input)?;
        let both = Matrix::vstack(&[real, &fake])?;
        let (h, trunk_cache) = self.trunk.forward(&both)?;
        let (p, head_cache) = self.head.forward(&h)?;
        let mut targets = vec![1.0; n];
        targets.extend(std::iter::repeat(0.0).take(n));
        let (loss, grad) = loss_bce(&p, &targets)?;
        let (head_grads, mut d_h) = self.head.backward(&head_cache, &grad)?;

        let mut aux_update = None;
        let mut info = None;
        if let (Some(aux), Some((hot, _))) = (self.aux.as_ref(), code.as_ref()) {
            let fake_rows: Vec<usize> = (n..2 * n).collect();
            let h_fake = h.select_rows(&fake_rows);
            let (q, aux_cache) = aux.forward(&h_fake)?;
            let (q_loss, q_grad) = loss_categorical(&q, hot)?;
            let (aux_grads, d_h_fake) = aux.backward(&aux_cache, &q_grad.scale(lambda))?;
            for (i, &r) in fake_rows.iter().enumerate() {
                for (dst, src) in d_h.row_mut(r).iter_mut().zip(d_h_fake.row(i)) {
                    *dst += src;
                }
            }
            aux_update = Some(aux_grads);
            info = Some(q_loss);
        }
        let (trunk_grads, _) = self.trunk.backward(&trunk_cache, &d_h)?;
        self.head.sgd_step(&head_grads, cfg)?;
        self.trunk.sgd_step(&trunk_grads, cfg)?;
        if let (Some(aux), Some(g)) = (self.aux.as_mut(), aux_update) {
            aux.sgd_step(&g, cfg)?;
        }
        Ok((loss, info))
    }

    /// One generator update with the non-saturating loss `-log D(G(z))`, plus
    /// `lambda` times the code loss for the info variant. The discriminator is
    /// frozen.
    pub fn generator_step(
        &mut self,
        n: usize,
        cfg: &SgdConfig,
        lambda: f64,
        rng: &mut Rng,
    ) -> Result<(f64, Option<f64>)> {
        let (input, code) = self.latent(n, rng);
        let (fake, gen_cache) = self.generator.forward(&input)?;
        let (h, trunk_cache) = self.trunk.forward(&fake)?;
        let (p, head_cache) = self.head.forward(&h)?;
        let (loss, grad) = loss_bce(&p, &vec![1.0; n])?;
        let (_, mut d_h) = self.head.backward(&head_cache, &grad)?;
        let mut info = None;
        if let (Some(aux), Some((hot, _))) = (self.aux.as_ref(), code.as_ref()) {
            let (q, aux_cache) = aux.forward(&h)?;
            let (q_loss, q_grad) = loss_categorical(&q, hot)?;
            let (_, d_h_aux) = aux.backward(&aux_cache, &q_grad.scale(lambda))?;
            d_h.add_assign(&d_h_aux);
            info = Some(q_loss);
        }
        let (_, d_fake) = self.trunk.backward(&trunk_cache, &d_h)?;
        let (gen_grads, _) = self.generator.backward(&gen_cache, &d_fake)?;
        self.generator.sgd_step(&gen_grads, cfg)?;
        Ok((loss, info))
    }
}

/// Per-epoch mean losses of a toy run.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ToyEpoch {
    pub discriminator: f64,
    pub generator: f64,
    pub info: Option<f64>,
}

#[derive(Clone, Debug)]
pub struct ToyRun {
    pub model: ToyGan,
    pub target: MixturePrior,
    /// Source (noise) points fed to the generator for `samples`.
    pub source: Matrix,
    pub samples: ToySamples,
    pub history: Vec<ToyEpoch>,
}

/// Trains one toy GAN against `target` and draws `cfg.samples` points.
pub fn toy_train_and_sample(
    variant: ToyVariant,
    target: &MixturePrior,
    cfg: &ToyGanConfig,
    seed: u64,
) -> Result<ToyRun> {
    if cfg.epochs == 0 {
        return Err(Error::InvalidArgument(
            "toy training needs at least one epoch".into(),
        ));
    }
    if cfg.batch_size == 0 || cfg.target_points < cfg.batch_size || cfg.samples == 0 {
        return Err(Error::InvalidArgument(format!(
            "batch_size {} must be positive and at most target_points {}, samples must be positive",
            cfg.batch_size, cfg.target_points
        )));
    }
    cfg.discriminator.validate()?;
    cfg.generator.validate()?;

    let mut init_rng = seeded(derive_seed(seed, "toy-init", 0));
    let mut model = ToyGan::new(variant, cfg.hidden, &mut init_rng)?;
    let mut data_rng = seeded(derive_seed(seed, "toy-target", 0));
    let (real, _) = target.sample(cfg.target_points, &mut data_rng);
    let mut rng = seeded(derive_seed(seed, "toy-train", 0));
    let mut order: Vec<usize> = (0..real.rows()).collect();
    let mut history = Vec::with_capacity(cfg.epochs);

    for epoch in 0..cfg.epochs {
        rand::seq::SliceRandom::shuffle(order.as_mut_slice(), &mut rng);
        let mut sums = [0.0; 3];
        let mut steps = 0;
        for chunk in order.chunks_exact(cfg.batch_size) {
            let batch = real.select_rows(chunk);
            let (d, qd) = model
                .discriminator_step(&batch, &cfg.discriminator, cfg.lambda, &mut rng)
                .map_err(|e| e.at_epoch(epoch).in_stage("toy discriminator"))?;
            let (g, qg) = model
                .generator_step(cfg.batch_size, &cfg.generator, cfg.lambda, &mut rng)
                .map_err(|e| e.at_epoch(epoch).in_stage("toy generator"))?;
            for (stage, v) in [("toy discriminator", d), ("toy generator", g)] {
                if !v.is_finite() || v > DIVERGENCE_THRESHOLD {
                    return Err(Error::divergence(stage, epoch, format!("loss {v}")));
                }
            }
            sums[0] += d;
            sums[1] += g;
            sums[2] += qd.unwrap_or(0.0) + qg.unwrap_or(0.0);
            steps += 1;
        }
        let s = steps as f64;
        history.push(ToyEpoch {
            discriminator: sums[0] / s,
            generator: sums[1] / s,
            info: model.aux.as_ref().map(|_| sums[2] / (2.0 * s)),
        });
    }

    let mut sample_rng = seeded(derive_seed(seed, "toy-sample", 0));
    let (input, code) = model.latent(cfg.samples, &mut sample_rng);
    let points = model.generator.predict(&input)?;
    if !points.is_finite() {
        return Err(Error::divergence(
            "toy sampling",
            cfg.epochs,
            "non-finite samples",
        ));
    }
    Ok(ToyRun {
        source: input.columns(0, 2),
        samples: ToySamples {
            points,
            codes: code.map(|(_, ids)| ids),
        },
        target: target.clone(),
        model,
        history,
    })
}

/// Label-to-mode clustering quality of coded samples.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PurityReport {
    /// For each label, its majority nearest mode.
    pub mapping: Vec<usize>,
    /// Whether distinct labels map to distinct modes.
    pub bijective: bool,
    /// Fraction of samples whose nearest mode is the one their label maps to.
    pub purity: f64,
}

/// Assigns every point to its nearest mode, maps each label to the mode most
/// of its points land in (lowest mode index on ties), and scores agreement.
pub fn cluster_purity(
    points: &Matrix,
    labels: &[usize],
    modes: &[[f64; 2]],
    num_labels: usize,
) -> Result<PurityReport> {
    if points.cols() != 2 || points.rows() != labels.len() || points.rows() == 0 {
        return Err(Error::Shape(format!(
            "need n x 2 points with n labels, got {:?} and {}",
            points.shape(),
            labels.len()
        )));
    }
    if let Some(&bad) = labels.iter().find(|&&l| l >= num_labels) {
        return Err(Error::InvalidArgument(format!("label {bad} out of range")));
    }
    let mut counts = vec![vec![0usize; modes.len()]; num_labels];
    for (r, &l) in labels.iter().enumerate() {
        counts[l][nearest(modes, points.row(r))] += 1;
    }
    let mapping: Vec<usize> = counts
        .iter()
        .map(|c| {
            let mut best = 0;
            for (k, &v) in c.iter().enumerate() {
                if v > c[best] {
                    best = k;
                }
            }
            best
        })
        .collect();
    let mut seen = mapping.clone();
    seen.sort_unstable();
    seen.dedup();
    let hits: usize = mapping.iter().enumerate().map(|(l, &m)| counts[l][m]).sum();
    Ok(PurityReport {
        bijective: seen.len() == num_labels && num_labels == modes.len(),
        purity: hits as f64 / labels.len() as f64,
        mapping,
    })
}

/// Fraction of points nearest each mode.
pub fn mode_shares(points: &Matrix, modes: &[[f64; 2]]) -> Vec<f64> {
    let mut counts = vec![0usize; modes.len()];
    for r in 0..points.rows() {
        counts[nearest(modes, points.row(r))] += 1;
    }
    let n = points.rows().max(1) as f64;
    counts.into_iter().map(|c| c as f64 / n).collect()
}

/// Number of modes that are nearest to at least `min_share` of the points.
pub fn mode_coverage(points: &Matrix, modes: &[[f64; 2]], min_share: f64) -> usize {
    mode_shares(points, modes)
        .into_iter()
        .filter(|&s| s >= min_share)
        .count()
}

/// Encodes labels for plotting or CSV output.
pub fn code_matrix(codes: &[usize]) -> Matrix {
    one_hot_matrix(codes, NUM_CLASSES)
}
