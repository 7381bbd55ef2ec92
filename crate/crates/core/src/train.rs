//! The per-batch adversarial training schedule.
//!
//! Each batch runs, in order:
//!
//! 1. autoencoder update on reconstruction MSE;
//! 2. `d1` update: encoder codes (target 1) against prior-derived codes (target 0);
//! 3. encoder update against the frozen `d1`, driving its output on codes toward 0;
//! 4. (`M2`/`M3`) `d2` update: decoder outputs (target 1) against real features (target 0);
//! 5. (`M2`/`M3`) generator update against the frozen `d2`, plus the auxiliary
//!    class loss for `M3`. Runs `d2_gen_ratio` times per step 4.
//!
//! Every step touches only the networks it names: the others keep their
//! parameters and momentum buffers bit-for-bit.

use std::io::Write;
use std::path::Path;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::data::{Corpus, Standardizer};
use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::models::{GanModel, ModelKind};
use crate::nn::{loss_bce, loss_categorical, loss_mse, Gradients, SgdConfig};
use crate::priors::one_hot_matrix;
use crate::rng::{derive_seed, seeded, Rng};
use crate::NUM_CLASSES;

/// Losses above this abort training.
pub const DIVERGENCE_THRESHOLD: f64 = 1e6;

/// Weight of the auxiliary class loss in step 5.
pub const INFO_LAMBDA: f64 = 1.0;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainPlan {
    pub step1_ae: SgdConfig,
    pub step2_d1: SgdConfig,
    pub step3_enc: SgdConfig,
    pub step4_d2: SgdConfig,
    pub step5_gen: SgdConfig,
    pub batch_size: usize,
    pub epochs: usize,
    /// Generator (step 5) passes per `d2` (step 4) pass.
    pub d2_gen_ratio: usize,
    pub seed: u64,
    /// Fit a z-score standardizer on the training split before training.
    pub standardize: bool,
}

impl TrainPlan {
    /// Reference learning rates and momenta for `kind`.
    pub fn defaults_for(kind: ModelKind) -> Self {
        let sgd = |lr, momentum| SgdConfig {
            learning_rate: lr,
            momentum,
        };
        let (ae_momentum, adv_lr) = match kind {
            ModelKind::M1 | ModelKind::M2 => (0.9, 0.1),
            ModelKind::M3 => (0.0, 0.01),
        };
        Self {
            step1_ae: sgd(0.001, ae_momentum),
            step2_d1: sgd(adv_lr, 0.0),
            step3_enc: sgd(adv_lr, 0.0),
            step4_d2: sgd(0.0001, 0.0),
            step5_gen: sgd(0.001, 0.0),
            batch_size: 64,
            epochs: 200,
            d2_gen_ratio: 2,
            seed: 0,
            standardize: true,
        }
    }

    pub fn validate(&self) -> Result<()> {
        for cfg in [
            &self.step1_ae,
            &self.step2_d1,
            &self.step3_enc,
            &self.step4_d2,
            &self.step5_gen,
        ] {
            cfg.validate()?;
        }
        if self.batch_size == 0 {
            return Err(Error::InvalidArgument("batch_size must be positive".into()));
        }
        if self.d2_gen_ratio == 0 {
            return Err(Error::InvalidArgument(
                "d2_gen_ratio must be at least 1".into(),
            ));
        }
        Ok(())
    }
}

/// Losses for one split in one epoch. Absent entries do not apply to the model.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct LossSet {
    pub reconstruction: f64,
    /// Sum of the two BCE terms (encoder codes, prior codes).
    pub d1: f64,
    pub encoder: f64,
    pub d2: Option<f64>,
    pub generator: Option<f64>,
    /// Auxiliary class loss (`M3`).
    pub info: Option<f64>,
}

impl LossSet {
    pub fn entries(&self) -> Vec<(&'static str, f64)> {
        let mut v = vec![
            ("reconstruction", self.reconstruction),
            ("d1", self.d1),
            ("encoder", self.encoder),
        ];
        if let Some(x) = self.d2 {
            v.push(("d2", x));
        }
        if let Some(x) = self.generator {
            v.push(("generator", x));
        }
        if let Some(x) = self.info {
            v.push(("info", x));
        }
        v
    }

    fn all_finite(&self) -> bool {
        self.entries().iter().all(|(_, v)| v.is_finite())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train: LossSet,
    pub validation: LossSet,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct LossHistory {
    pub records: Vec<EpochRecord>,
}

impl LossHistory {
    pub fn last(&self) -> Option<&EpochRecord> {
        self.records.last()
    }

    /// Writes `epoch,split,loss_name,value` rows.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["epoch", "split", "loss_name", "value"])?;
        for r in &self.records {
            for (split, set) in [("train", &r.train), ("validation", &r.validation)] {
                for (name, value) in set.entries() {
                    w.write_record([
                        r.epoch.to_string(),
                        split.to_string(),
                        name.to_string(),
                        crate::data::format_float(value),
                    ])?;
                }
            }
        }
        w.flush()?;
        Ok(())
    }

    pub fn save_csv(&self, path: &Path) -> Result<()> {
        self.write_csv(std::fs::File::create(path)?)
    }

    /// Series of one loss on one split, in epoch order.
    pub fn series(&self, split: &str, loss: &str) -> Vec<f64> {
        self.records
            .iter()
            .filter_map(|r| {
                let set = if split == "train" {
                    &r.train
                } else {
                    &r.validation
                };
                set.entries()
                    .into_iter()
                    .find(|(n, _)| *n == loss)
                    .map(|(_, v)| v)
            })
            .collect()
    }
}

/// How often each step ran.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct StepCounts {
    pub step1: usize,
    pub step2: usize,
    pub step3: usize,
    pub step4: usize,
    pub step5: usize,
}

#[derive(Clone, Debug)]
pub struct TrainReport {
    pub history: LossHistory,
    pub counts: StepCounts,
}

/// A real batch in network space with class ids.
#[derive(Clone, Debug)]
pub struct Batch {
    pub features: Matrix,
    pub labels: Vec<usize>,
}

impl Batch {
    pub fn new(features: Matrix, labels: Vec<usize>) -> Result<Self> {
        if features.rows() != labels.len() {
            return Err(Error::Shape(format!(
                "{} labels for {} rows",
                labels.len(),
                features.rows()
            )));
        }
        if features.rows() == 0 {
            return Err(Error::InvalidArgument("empty batch".into()));
        }
        Ok(Self { features, labels })
    }

    pub fn one_hot(&self) -> Matrix {
        one_hot_matrix(&self.labels, NUM_CLASSES)
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }
}

fn check_loss(stage: &str, value: f64) -> Result<f64> {
    if !value.is_finite() || value > DIVERGENCE_THRESHOLD {
        return Err(Error::divergence(stage, 0, format!("loss {value}")));
    }
    Ok(value)
}

/// Step 1: one SGD step of encoder and decoder on reconstruction MSE.
/// Returns the pre-update loss.
pub fn step1_autoencoder(model: &mut GanModel, batch: &Batch, cfg: &SgdConfig) -> Result<f64> {
    let (loss, enc_grads, dec_grads) = autoencoder_gradients(model, batch)?;
    model.decoder.sgd_step(&dec_grads, cfg)?;
    model.encoder.sgd_step(&enc_grads, cfg)?;
    Ok(loss)
}

pub(crate) fn autoencoder_gradients(
    model: &GanModel,
    batch: &Batch,
) -> Result<(f64, Gradients, Gradients)> {
    let (code, enc_cache) = model.encoder.forward(&batch.features)?;
    let (recon, dec_cache) = model.decoder.forward(&code)?;
    let (loss, grad) = loss_mse(&recon, &batch.features)?;
    check_loss("step1", loss)?;
    let (dec_grads, d_code) = model.decoder.backward(&dec_cache, &grad)?;
    let (enc_grads, _) = model.encoder.backward(&enc_cache, &d_code)?;
    Ok((loss, enc_grads, dec_grads))
}

/// Targets `[1; n] ++ [0; n]`.
fn two_sided_targets(n: usize) -> Vec<f64> {
    let mut t = vec![1.0; n];
    t.extend(std::iter::repeat(0.0).take(n));
    t
}

/// Two-term BCE on stacked (generated, reference) inputs of equal size, as
/// the sum of the per-side means.
fn two_term_bce(p: &Matrix, n: usize) -> Result<(f64, Matrix)> {
    let (loss, grad) = loss_bce(p, &two_sided_targets(n))?;
    Ok((2.0 * loss, grad.scale(2.0)))
}

fn d1_inputs(model: &GanModel, batch: &Batch, rng: &mut Rng) -> Result<Matrix> {
    let n = batch.len();
    let codes = model.encoder.predict(&batch.features)?;
    let prior = model.sample_prior(n, None, rng)?;
    let prior_codes = model.prior_to_code(&prior)?;
    let real = Matrix::hstack(&[&codes, &batch.one_hot()])?;
    let fake = Matrix::hstack(&[&prior_codes, &prior.one_hot])?;
    Matrix::vstack(&[&real, &fake])
}

/// Step 2: `d1` learns encoder codes (target 1) versus an equal number of
/// prior-derived codes (target 0). Only `d1` changes.
pub fn step2_d1(
    model: &mut GanModel,
    batch: &Batch,
    cfg: &SgdConfig,
    rng: &mut Rng,
) -> Result<f64> {
    let input = d1_inputs(model, batch, rng)?;
    let (p, cache) = model.d1.forward(&input)?;
    let (loss, grad) = two_term_bce(&p, batch.len())?;
    check_loss("step2", loss)?;
    let (grads, _) = model.d1.backward(&cache, &grad)?;
    model.d1.sgd_step(&grads, cfg)?;
    Ok(loss)
}

/// Step 3: the encoder minimizes `-log(1 - d1(enc(x), c_x))` with `d1` frozen.
pub fn step3_encoder(model: &mut GanModel, batch: &Batch, cfg: &SgdConfig) -> Result<f64> {
    let (loss, grads) = encoder_gradients(model, batch)?;
    model.encoder.sgd_step(&grads, cfg)?;
    Ok(loss)
}

pub(crate) fn encoder_gradients(model: &GanModel, batch: &Batch) -> Result<(f64, Gradients)> {
    let (codes, enc_cache) = model.encoder.forward(&batch.features)?;
    let input = Matrix::hstack(&[&codes, &batch.one_hot()])?;
    let (p, d1_cache) = model.d1.forward(&input)?;
    let (loss, grad) = loss_bce(&p, &vec![0.0; batch.len()])?;
    check_loss("step3", loss)?;
    let (_, d_input) = model.d1.backward(&d1_cache, &grad)?;
    let d_codes = d_input.columns(0, codes.cols());
    let (grads, _) = model.encoder.backward(&enc_cache, &d_codes)?;
    Ok((loss, grads))
}

/// Step 4: `d2` (trunk and head) learns decoder outputs (target 1) versus
/// real features (target 0). `synthetic` must equal the real batch size.
pub fn step4_d2(
    model: &mut GanModel,
    batch: &Batch,
    synthetic: usize,
    cfg: &SgdConfig,
    rng: &mut Rng,
) -> Result<f64> {
    if model.d2.is_none() {
        return Err(Error::Unsupported(format!(
            "{} has no data discriminator",
            model.kind
        )));
    }
    if synthetic != batch.len() {
        return Err(Error::Contract(format!(
            "step 4 needs balanced batches, got {synthetic} synthetic for {} real",
            batch.len()
        )));
    }
    let fake = model.generate_model_space(synthetic, None, rng)?;
    let fake_in = Matrix::hstack(&[&fake.features, &one_hot_matrix(&fake.labels, NUM_CLASSES)])?;
    let real_in = Matrix::hstack(&[&batch.features, &batch.one_hot()])?;
    let input = Matrix::vstack(&[&fake_in, &real_in])?;

    let d2 = model.d2.as_mut().expect("checked above");
    let (h, trunk_cache) = d2.trunk.forward(&input)?;
    let (p, head_cache) = d2.head.forward(&h)?;
    let (loss, grad) = two_term_bce(&p, synthetic)?;
    check_loss("step4", loss)?;
    let (head_grads, d_h) = d2.head.backward(&head_cache, &grad)?;
    let (trunk_grads, _) = d2.trunk.backward(&trunk_cache, &d_h)?;
    d2.head.sgd_step(&head_grads, cfg)?;
    d2.trunk.sgd_step(&trunk_grads, cfg)?;
    Ok(loss)
}

/// Losses reported by step 5.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GeneratorLoss {
    pub adversarial: f64,
    pub info: Option<f64>,
}

/// Step 5: the decoder (and for `M3` the code generator) minimizes
/// `-log(1 - d2(dec(·), c))` with `d2` frozen. For `M3` the auxiliary class
/// loss is added with weight 1 and also trains the auxiliary head; the shared
/// trunk stays fixed.
pub fn step5_generator(
    model: &mut GanModel,
    n: usize,
    cfg: &SgdConfig,
    rng: &mut Rng,
) -> Result<GeneratorLoss> {
    let g = generator_gradients(model, n, rng)?;
    model.decoder.sgd_step(&g.decoder, cfg)?;
    if let (Some(cg), Some(grads)) = (model.code_generator.as_mut(), &g.code_generator) {
        cg.sgd_step(grads, cfg)?;
    }
    if let (Some(aux), Some(grads)) = (model.d2.as_mut().and_then(|d| d.aux.as_mut()), &g.aux) {
        aux.sgd_step(grads, cfg)?;
    }
    Ok(g.loss)
}

pub(crate) struct GeneratorGradients {
    pub loss: GeneratorLoss,
    pub decoder: Gradients,
    pub code_generator: Option<Gradients>,
    pub aux: Option<Gradients>,
}

pub(crate) fn generator_gradients(
    model: &GanModel,
    n: usize,
    rng: &mut Rng,
) -> Result<GeneratorGradients> {
    let d2 = model
        .d2
        .as_ref()
        .ok_or_else(|| Error::Unsupported(format!("{} has no data discriminator", model.kind)))?;
    let prior = model.sample_prior(n, None, rng)?;
    let (code, cg_cache) = match &model.code_generator {
        Some(cg) => {
            let (c, cache) = cg.forward(&Matrix::hstack(&[&prior.latent, &prior.one_hot])?)?;
            (c, Some(cache))
        }
        None => (prior.latent.clone(), None),
    };
    let (x, dec_cache) = model.decoder.forward(&code)?;
    let input = Matrix::hstack(&[&x, &prior.one_hot])?;
    let (h, trunk_cache) = d2.trunk.forward(&input)?;
    let (p, head_cache) = d2.head.forward(&h)?;
    let (adversarial, grad) = loss_bce(&p, &vec![0.0; n])?;
    check_loss("step5", adversarial)?;
    let (_, mut d_h) = d2.head.backward(&head_cache, &grad)?;

    let (info, aux) = match d2.aux.as_ref() {
        Some(aux) => {
            let (q, aux_cache) = aux.forward(&h)?;
            let (q_loss, q_grad) = loss_categorical(&q, &prior.one_hot)?;
            check_loss("step5-info", q_loss)?;
            let (aux_grads, d_h_aux) = aux.backward(&aux_cache, &q_grad.scale(INFO_LAMBDA))?;
            d_h.add_assign(&d_h_aux);
            (Some(q_loss), Some(aux_grads))
        }
        None => (None, None),
    };
    let (_, d_input) = d2.trunk.backward(&trunk_cache, &d_h)?;
    let d_x = d_input.columns(0, x.cols());
    let (decoder, d_code) = model.decoder.backward(&dec_cache, &d_x)?;
    let code_generator = match (&model.code_generator, &cg_cache) {
        (Some(cg), Some(cache)) => Some(cg.backward(cache, &d_code)?.0),
        _ => None,
    };
    Ok(GeneratorGradients {
        loss: GeneratorLoss { adversarial, info },
        decoder,
        code_generator,
        aux,
    })
}

/// Evaluates every loss on `data` without touching any parameter.
pub fn evaluate_losses(model: &GanModel, data: &Batch, rng: &mut Rng) -> Result<LossSet> {
    let n = data.len();
    let codes = model.encoder.predict(&data.features)?;
    let recon = model.decoder.predict(&codes)?;
    let reconstruction = loss_mse(&recon, &data.features)?.0;

    let d1_in = d1_inputs(model, data, rng)?;
    let d1 = two_term_bce(&model.d1.predict(&d1_in)?, n)?.0;
    let real_codes = d1_in.select_rows(&(0..n).collect::<Vec<_>>());
    let encoder = loss_bce(&model.d1.predict(&real_codes)?, &vec![0.0; n])?.0;

    let (d2, generator, info) = if model.d2.is_some() {
        let fake = model.generate_model_space(n, None, rng)?;
        let fake_hot = one_hot_matrix(&fake.labels, NUM_CLASSES);
        let (p_fake, aux) = model.discriminate_model_space(&fake.features, &fake_hot)?;
        let (p_real, _) = model.discriminate_model_space(&data.features, &data.one_hot())?;
        let mut stacked = p_fake.clone();
        stacked.extend_from_slice(&p_real);
        let d2 = two_term_bce(&Matrix::from_vec(2 * n, 1, stacked)?, n)?.0;
        let generator = loss_bce(&Matrix::from_vec(n, 1, p_fake)?, &vec![0.0; n])?.0;
        let info = aux
            .map(|q| loss_categorical(&q, &fake_hot).map(|r| r.0))
            .transpose()?;
        (Some(d2), Some(generator), info)
    } else {
        (None, None, None)
    };
    Ok(LossSet {
        reconstruction,
        d1,
        encoder,
        d2,
        generator,
        info,
    })
}

fn corpus_batch(corpus: &Corpus, standardizer: Option<&Standardizer>) -> Result<Batch> {
    let x = match standardizer {
        Some(s) => s.transform(corpus.features())?,
        None => corpus.features().clone(),
    };
    Batch::new(x, corpus.labels().to_vec())
}

#[derive(Default)]
struct Running {
    sums: [f64; 6],
    batches: usize,
    gen_calls: usize,
}

/// Runs the full schedule for `plan.epochs` epochs. Batches are reshuffled
/// every epoch with a seeded generator and the last partial batch is kept.
pub fn train(
    model: &mut GanModel,
    train: &Corpus,
    validation: &Corpus,
    plan: &TrainPlan,
) -> Result<TrainReport> {
    plan.validate()?;
    if train.is_empty() || validation.is_empty() {
        return Err(Error::InvalidArgument(
            "training needs non-empty train and validation splits".into(),
        ));
    }
    if train.feature_dim() != model.feature_dim || validation.feature_dim() != model.feature_dim {
        return Err(Error::Shape(format!(
            "model expects {} features, splits have {} and {}",
            model.feature_dim,
            train.feature_dim(),
            validation.feature_dim()
        )));
    }
    if plan.standardize {
        model.standardizer = Some(Standardizer::fit(train)?);
    }
    let train_all = corpus_batch(train, model.standardizer.as_ref())?;
    let val_all = corpus_batch(validation, model.standardizer.as_ref())?;

    let mut order_rng = seeded(derive_seed(plan.seed, "batch-order", 0));
    let mut sample_rng = seeded(derive_seed(plan.seed, "prior-samples", 0));
    let mut history = LossHistory::default();
    let mut counts = StepCounts::default();
    let mut order: Vec<usize> = (0..train.len()).collect();
    let has_d2 = model.d2.is_some();

    for epoch in 0..plan.epochs {
        order.shuffle(&mut order_rng);
        let mut run = Running::default();
        for (bi, chunk) in order.chunks(plan.batch_size).enumerate() {
            let batch = Batch::new(
                train_all.features.select_rows(chunk),
                chunk.iter().map(|&i| train_all.labels[i]).collect(),
            )?;
            let tag = |e: Error| e.at_epoch(epoch).in_stage(&format!("batch {bi}"));
            let l1 = step1_autoencoder(model, &batch, &plan.step1_ae).map_err(tag)?;
            let l2 = step2_d1(model, &batch, &plan.step2_d1, &mut sample_rng).map_err(tag)?;
            let l3 = step3_encoder(model, &batch, &plan.step3_enc).map_err(tag)?;
            counts.step1 += 1;
            counts.step2 += 1;
            counts.step3 += 1;
            run.sums[0] += l1;
            run.sums[1] += l2;
            run.sums[2] += l3;
            if has_d2 {
                let l4 = step4_d2(model, &batch, batch.len(), &plan.step4_d2, &mut sample_rng)
                    .map_err(tag)?;
                counts.step4 += 1;
                run.sums[3] += l4;
                for _ in 0..plan.d2_gen_ratio {
                    let g = step5_generator(model, batch.len(), &plan.step5_gen, &mut sample_rng)
                        .map_err(tag)?;
                    counts.step5 += 1;
                    run.gen_calls += 1;
                    run.sums[4] += g.adversarial;
                    run.sums[5] += g.info.unwrap_or(0.0);
                }
            }
            run.batches += 1;
        }

        let b = run.batches as f64;
        let g = run.gen_calls.max(1) as f64;
        let train_losses = LossSet {
            reconstruction: run.sums[0] / b,
            d1: run.sums[1] / b,
            encoder: run.sums[2] / b,
            d2: has_d2.then(|| run.sums[3] / b),
            generator: has_d2.then(|| run.sums[4] / g),
            info: (model.kind == ModelKind::M3).then(|| run.sums[5] / g),
        };
        let mut val_rng = seeded(derive_seed(plan.seed, "validation", epoch as u64));
        let validation_losses = evaluate_losses(model, &val_all, &mut val_rng)?;
        for (split, set) in [("train", &train_losses), ("validation", &validation_losses)] {
            if !set.all_finite() || set.entries().iter().any(|(_, v)| *v > DIVERGENCE_THRESHOLD) {
                return Err(Error::divergence(
                    format!("{split} losses"),
                    epoch,
                    format!("{set:?}"),
                ));
            }
        }
        history.records.push(EpochRecord {
            epoch,
            train: train_losses,
            validation: validation_losses,
        });
    }
    Ok(TrainReport { history, counts })
}
