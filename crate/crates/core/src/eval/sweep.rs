use crate::error::{Error, Result};
use crate::exec::{self, ExecMode};
use crate::filter::{calibrate_threshold, valid_scores, FilterMethod, Threshold};
use crate::gate::GateConfig;
use crate::io::FrameBundle;
use crate::pipeline::{apply_gate, evaluate_outputs, filter_and_detect, run_pipeline, PipelineConfig};

use super::EvalReport;

pub const DEFAULT_TPR_LEVELS: [f64; 3] = [0.90, 0.95, 0.99];
pub const DEFAULT_GAMMA_LEVELS: [f64; 4] = [0.0, 0.5, 1.0, 1.5];

#[derive(Debug, Clone)]
pub struct TauLevel {
    pub tpr: f64,
    pub tau: Threshold,
    /// Fraction of valid points kept over the pooled frames.
    pub kept_valid_fraction: f64,
    pub report: EvalReport,
}

#[derive(Debug, Clone)]
pub struct GammaLevel {
    pub gamma: f64,
    pub report: EvalReport,
}

/// For each TPR level: calibrate `tau` on the pooled valid-point scores, then
/// run threshold filter, detector, optional gate and evaluation. The filter
/// method in `downstream` is ignored.
pub fn sweep_tau(
    frames: &[FrameBundle],
    tpr_levels: &[f64],
    downstream: &PipelineConfig,
    mode: ExecMode,
) -> Result<Vec<TauLevel>> {
    let mut pairs = Vec::with_capacity(frames.len());
    for f in frames {
        let missing = |what| Error::MissingInput {
            frame: f.frame_id.clone(),
            what,
        };
        let scores = f.scores.as_ref().ok_or_else(|| missing("scores"))?;
        let labels = f.labels.as_ref().ok_or_else(|| missing("labels"))?;
        pairs.push((scores, labels));
    }
    let pooled = valid_scores(pairs.iter().copied());
    tpr_levels
        .iter()
        .map(|&tpr| {
            let tau = calibrate_threshold(&pooled, tpr)?;
            let cfg = PipelineConfig {
                filter: FilterMethod::Threshold(tau),
                ..downstream.clone()
            };
            let run = run_pipeline(frames, &cfg, mode)?;
            let (kept, total) = run
                .frames
                .iter()
                .filter_map(|o| o.filter_metrics)
                .fold((0, 0), |(k, t), m| (k + m.valid_kept, t + m.valid_total));
            Ok(TauLevel {
                tpr,
                tau,
                kept_valid_fraction: if total > 0 {
                    kept as f64 / total as f64
                } else {
                    0.0
                },
                report: run.report,
            })
        })
        .collect()
}

/// Filter and detect once with `base`, then gate at each padding level. The
/// gate settings other than `gamma` come from `base.gate` (or defaults).
pub fn sweep_gamma(
    frames: &[FrameBundle],
    gamma_levels: &[f64],
    base: &PipelineConfig,
    mode: ExecMode,
) -> Result<Vec<GammaLevel>> {
    let detected = exec::try_map_slice(mode, frames, |f| filter_and_detect(f, base, ExecMode::Sequential))?;
    let gate_base = base.gate.unwrap_or_default();
    gamma_levels
        .iter()
        .map(|&gamma| {
            let gate = GateConfig { gamma, ..gate_base };
            gate.validate()?;
            let pairs: Vec<(&FrameBundle, &crate::pipeline::FrameOutput)> =
                frames.iter().zip(&detected).collect();
            let outputs = exec::try_map_slice(mode, &pairs, |(f, o)| {
                let mut o = (*o).clone();
                apply_gate(f, &mut o, Some(&gate))?;
                Ok::<_, Error>(o)
            })?;
            Ok(GammaLevel {
                gamma,
                report: evaluate_outputs(frames, &outputs, &base.eval, mode)?,
            })
        })
        .collect()
}
