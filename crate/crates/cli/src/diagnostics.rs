//! Convergence checks on a finished loss history.
//!
//! Two kinds of check, all read from the final epoch:
//! - balance: a discriminator's two-term loss, halved, against the loss of
//!   the network it plays against (`d1` vs encoder, `d2` vs generator);
//! - tracking: each loss on the train split against the same loss on the
//!   validation split.
//!
//! Gaps are relative, `|a - b| / max(|a|, |b|)`. The bands were frozen from
//! reference runs on the default toy corpus and are not tuned per run.

use emogan_core::models::ModelKind;
use emogan_core::train::{LossHistory, LossSet};
use serde::{Deserialize, Serialize};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceBands {
    pub d1_balance: f64,
    pub d2_balance: f64,
    pub tracking: f64,
    /// Encoder tracking band; wider for `M3`, whose encoder loss sits close
    /// to zero and so has a large relative spread.
    pub encoder_tracking: f64,
    /// Absolute train/validation difference of the `d1` loss.
    pub d1_absolute: f64,
}

impl ConvergenceBands {
    pub fn for_kind(kind: ModelKind) -> Self {
        match kind {
            ModelKind::M1 | ModelKind::M2 => Self {
                d1_balance: 0.25,
                d2_balance: 0.30,
                tracking: 0.10,
                encoder_tracking: 0.10,
                d1_absolute: 0.10,
            },
            ModelKind::M3 => Self {
                d1_balance: 0.75,
                d2_balance: 0.30,
                tracking: 0.10,
                encoder_tracking: 0.40,
                d1_absolute: 0.10,
            },
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceCheck {
    pub name: String,
    pub value: f64,
    pub limit: f64,
    pub pass: bool,
}

pub fn relative_gap(a: f64, b: f64) -> f64 {
    let scale = a.abs().max(b.abs());
    if scale == 0.0 {
        0.0
    } else {
        (a - b).abs() / scale
    }
}

fn check(name: String, value: f64, limit: f64) -> ConvergenceCheck {
    ConvergenceCheck {
        pass: value.is_finite() && value <= limit,
        name,
        value,
        limit,
    }
}

fn balance_checks(
    split: &str,
    set: &LossSet,
    bands: &ConvergenceBands,
    out: &mut Vec<ConvergenceCheck>,
) {
    out.push(check(
        format!("{split} d1 balance"),
        relative_gap(set.d1 / 2.0, set.encoder),
        bands.d1_balance,
    ));
    if let (Some(d2), Some(g)) = (set.d2, set.generator) {
        out.push(check(
            format!("{split} d2 balance"),
            relative_gap(d2 / 2.0, g),
            bands.d2_balance,
        ));
    }
}

/// Every check for the final epoch of `history`; empty when it has no epochs.
pub fn convergence_checks(kind: ModelKind, history: &LossHistory) -> Vec<ConvergenceCheck> {
    let Some(last) = history.last() else {
        return Vec::new();
    };
    let bands = ConvergenceBands::for_kind(kind);
    let mut out = Vec::new();
    balance_checks("train", &last.train, &bands, &mut out);
    balance_checks("validation", &last.validation, &bands, &mut out);
    for ((name, a), (_, b)) in last
        .train
        .entries()
        .into_iter()
        .zip(last.validation.entries())
    {
        let limit = if name == "encoder" {
            bands.encoder_tracking
        } else {
            bands.tracking
        };
        out.push(check(format!("{name} tracking"), relative_gap(a, b), limit));
    }
    out.push(check(
        "d1 absolute tracking".into(),
        (last.train.d1 - last.validation.d1).abs(),
        bands.d1_absolute,
    ));
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use emogan_core::train::EpochRecord;

    fn set(d1: f64, encoder: f64) -> LossSet {
        LossSet {
            reconstruction: 1.0,
            d1,
            encoder,
            d2: Some(1.4),
            generator: Some(0.7),
            info: None,
        }
    }

    #[test]
    fn gap_is_symmetric_and_zero_safe() {
        assert_eq!(relative_gap(0.0, 0.0), 0.0);
        assert_eq!(relative_gap(1.0, 0.5), 0.5);
        assert_eq!(relative_gap(0.5, 1.0), 0.5);
        assert_eq!(relative_gap(-1.0, 1.0), 2.0);
    }

    #[test]
    fn balanced_history_passes_and_skew_fails() {
        let mut h = LossHistory::default();
        assert!(convergence_checks(ModelKind::M2, &h).is_empty());
        h.records.push(EpochRecord {
            epoch: 0,
            train: set(1.38, 0.69),
            validation: set(1.38, 0.69),
        });
        let checks = convergence_checks(ModelKind::M2, &h);
        assert!(checks.iter().all(|c| c.pass), "{checks:?}");
        assert_eq!(
            checks.iter().filter(|c| c.name.contains("balance")).count(),
            4
        );

        h.records[0].validation = set(1.38, 0.2);
        let failed: Vec<String> = convergence_checks(ModelKind::M2, &h)
            .into_iter()
            .filter(|c| !c.pass)
            .map(|c| c.name)
            .collect();
        assert_eq!(failed, vec!["validation d1 balance", "encoder tracking"]);
    }

    #[test]
    fn non_finite_losses_fail() {
        let mut h = LossHistory::default();
        h.records.push(EpochRecord {
            epoch: 3,
            train: set(f64::NAN, 0.69),
            validation: set(1.38, 0.69),
        });
        assert!(convergence_checks(ModelKind::M1, &h)
            .iter()
            .any(|c| !c.pass));
    }
}
