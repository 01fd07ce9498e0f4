//! Pipeline reports: per-phase curves, diagnostics, and the run directory
//! layout.
//!
//! `report.json` is fully deterministic under the run seed; wall-clock
//! timings go to a separate `timings.json` so reports stay byte-identical
//! across reruns.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lm::CurvePoint;
use crate::scoring::ScorerDescriptor;

/// One training phase as recorded in the report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhaseRecord {
    pub name: String,
    pub steps_run: u64,
    pub curve: Vec<CurvePoint>,
    /// Step of the best (minimum validation loss) checkpoint.
    pub best_step: u64,
    pub best_valid_loss: Option<f64>,
}

impl PhaseRecord {
    /// Curve point at the best-validation checkpoint.
    fn best_point(&self) -> Result<&CurvePoint> {
        self.curve
            .iter()
            .filter(|p| p.valid_loss.is_some())
            .min_by(|a, b| {
                a.valid_loss
                    .unwrap()
                    .partial_cmp(&b.valid_loss.unwrap())
                    .expect("losses are finite")
            })
            .ok_or_else(|| Error::config(format!("phase {} has no validation curve", self.name)))
    }

    /// `step,train_loss,in_train_loss,valid_loss` with empty slots for
    /// losses that were not probed.
    pub fn write_curve_csv(&self, path: &Path) -> Result<()> {
        let fmt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
        let mut out = String::from("step,train_loss,in_train_loss,valid_loss\n");
        for p in &self.curve {
            out.push_str(&format!(
                "{},{},{},{}\n",
                p.step,
                fmt(p.train_loss),
                fmt(p.in_train_loss),
                fmt(p.valid_loss)
            ));
        }
        std::fs::write(path, out).map_err(|e| Error::io(path, e))
    }
}

/// Selection-overfitting and fine-tuning complementarity rates.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DiagnosticsRecord {
    /// `(L_valid - L_train) / L_valid` at the best pre-finetune checkpoint,
    /// both losses measured on in-domain data.
    pub selection_overfit_rate: f64,
    /// `(L_beforeFT - L_afterFT) / L_beforeFT` on in-domain validation.
    pub finetune_improvement_rate: f64,
}

/// Compute the diagnostics from a selection-phase record (which must carry
/// the in-domain-train curve) and the subsequent fine-tune record.
pub fn diagnostics(
    selection: &PhaseRecord,
    finetune: &PhaseRecord,
) -> Result<DiagnosticsRecord> {
    let best = selection.best_point()?;
    let l_valid = best.valid_loss.expect("best point has validation loss");
    let l_train = best.in_train_loss.ok_or_else(|| {
        Error::config(format!(
            "phase {} has no in-domain-train curve",
            selection.name
        ))
    })?;
    let selection_overfit_rate = (l_valid - l_train) / l_valid;

    let after = finetune.best_point()?.valid_loss.unwrap();
    let finetune_improvement_rate = (l_valid - after) / l_valid;
    if !selection_overfit_rate.is_finite() || !finetune_improvement_rate.is_finite() {
        return Err(Error::config("diagnostic rates are not finite"));
    }
    Ok(DiagnosticsRecord {
        selection_overfit_rate,
        finetune_improvement_rate,
    })
}

/// Test-set log-perplexity of the four variants.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VariantLosses {
    pub pt: f64,
    pub pt_ft: f64,
    pub pt_sel: f64,
    pub pt_sel_ft: f64,
}

/// Selected-subset summary embedded in the report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectionSummary {
    pub n: usize,
    pub threshold: f64,
    pub scorer: ScorerDescriptor,
}

/// Step counts actually executed per phase (early stopping reflected).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StepAccounting {
    pub pretrain: u64,
    pub extension: u64,
    pub selection: u64,
    pub finetune_baseline: u64,
    pub finetune_selected: u64,
}

impl StepAccounting {
    pub fn total(&self) -> u64 {
        self.pretrain
            + self.extension
            + self.selection
            + self.finetune_baseline
            + self.finetune_selected
    }
}

/// The self-contained result of one pipeline run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineReport {
    pub config_hash: String,
    pub config: super::PipelineConfig,
    /// Pretrain step the adaptation branched from (matrix runs).
    pub branch_step: u64,
    pub phases: Vec<PhaseRecord>,
    pub selection: SelectionSummary,
    pub diagnostics: Option<DiagnosticsRecord>,
    pub test_logppl: VariantLosses,
    /// Fine-tune learning rates picked by the grid, baseline and selected arm.
    pub finetune_lr: (f64, f64),
    pub steps: StepAccounting,
    /// Loss base note: all losses are natural-log (nats per token).
    pub loss_unit: String,
}

impl PipelineReport {
    pub fn phase(&self, name: &str) -> Option<&PhaseRecord> {
        self.phases.iter().find(|p| p.name == name)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let json = serde_json::to_string_pretty(self)
            .map_err(|e| Error::config(format!("report serialization: {e}")))?;
        std::fs::write(path, json).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        if !path.exists() {
            return Err(Error::MissingInput(path.to_path_buf()));
        }
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| Error::artifact(path, format!("bad report: {e}")))
    }
}

/// Wall-clock accounting, kept out of the deterministic report.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct Timings {
    pub seconds: Vec<(String, f64)>,
}

impl Timings {
    pub fn push(&mut self, name: &str, seconds: f64) {
        self.seconds.push((name.to_string(), seconds));
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let json = serde_json::to_string_pretty(self)
            .map_err(|e| Error::config(format!("timings serialization: {e}")))?;
        std::fs::write(path, json).map_err(|e| Error::io(path, e))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn phase(name: &str, points: Vec<(u64, Option<f64>, Option<f64>)>) -> PhaseRecord {
        let curve: Vec<CurvePoint> = points
            .into_iter()
            .map(|(step, in_train, valid)| CurvePoint {
                step,
                train_loss: None,
                in_train_loss: in_train,
                valid_loss: valid,
            })
            .collect();
        let best = curve
            .iter()
            .filter(|p| p.valid_loss.is_some())
            .min_by(|a, b| a.valid_loss.partial_cmp(&b.valid_loss).unwrap());
        PhaseRecord {
            name: name.into(),
            steps_run: curve.last().map(|p| p.step).unwrap_or(0),
            best_step: best.map(|p| p.step).unwrap_or(0),
            best_valid_loss: best.and_then(|p| p.valid_loss),
            curve,
        }
    }

    #[test]
    fn hand_built_rates() {
        // L_train 1.0, L_valid 1.25 at the best selection checkpoint and
        // L_afterFT 1.0 give rates (0.2, 0.2).
        let sel = phase("selection", vec![(100, Some(1.0), Some(1.25))]);
        let ft = phase("finetune", vec![(150, None, Some(1.0))]);
        let d = diagnostics(&sel, &ft).unwrap();
        assert!((d.selection_overfit_rate - 0.2).abs() < 1e-12);
        assert!((d.finetune_improvement_rate - 0.2).abs() < 1e-12);
    }

    #[test]
    fn equal_train_valid_gives_zero_overfit() {
        let sel = phase("selection", vec![(10, Some(0.8), Some(0.8))]);
        let ft = phase("finetune", vec![(20, None, Some(0.8))]);
        let d = diagnostics(&sel, &ft).unwrap();
        assert_eq!(d.selection_overfit_rate, 0.0);
        assert_eq!(d.finetune_improvement_rate, 0.0);
    }

    #[test]
    fn best_pre_finetune_checkpoint_is_used() {
        let sel = phase(
            "selection",
            vec![
                (10, Some(1.2), Some(1.5)),
                (20, Some(1.0), Some(1.25)), // best valid
                (30, Some(0.7), Some(1.4)),
            ],
        );
        let ft = phase("finetune", vec![(40, None, Some(1.1)), (50, None, Some(1.0))]);
        let d = diagnostics(&sel, &ft).unwrap();
        assert!((d.selection_overfit_rate - 0.2).abs() < 1e-12);
        assert!((d.finetune_improvement_rate - 0.2).abs() < 1e-12);
    }

    #[test]
    fn missing_in_train_curve_errors() {
        let sel = phase("selection", vec![(10, None, Some(1.0))]);
        let ft = phase("finetune", vec![(20, None, Some(0.9))]);
        assert!(diagnostics(&sel, &ft).is_err());
    }

    #[test]
    fn curve_csv_format() {
        let p = phase("x", vec![(0, Some(1.5), None), (10, None, Some(2.0))]);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("curve.csv");
        p.write_curve_csv(&path).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        assert_eq!(
            text,
            "step,train_loss,in_train_loss,valid_loss\n0,,1.5,\n10,,,2\n"
        );
    }
}
