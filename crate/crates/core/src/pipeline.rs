//! The four-stage chain: point filter, detector, radar gate, evaluation.
//! Each stage can be switched off independently.

use crate::detector::{cluster_detect_with, ClusterParams};
use crate::error::{Error, Result};
use crate::eval::{evaluate, EvalConfig, EvalReport, FrameEval};
use crate::exec::{self, ExecMode};
use crate::filter::{filter_metrics, FilterMethod, FilterMetrics};
use crate::gate::{gate_detections, GateConfig};
use crate::geometry::Detection;
use crate::io::FrameBundle;

/// Where detections come from.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum DetectorStage {
    /// Run the clustering detector on the filtered cloud.
    Cluster(ClusterParams),
    /// Use the detections already attached to each frame.
    External,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PipelineConfig {
    pub filter: FilterMethod,
    pub detector: DetectorStage,
    /// `None` disables the radar gate.
    pub gate: Option<GateConfig>,
    pub eval: EvalConfig,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            filter: FilterMethod::None,
            detector: DetectorStage::Cluster(ClusterParams::default()),
            gate: None,
            eval: EvalConfig::default(),
        }
    }
}

impl PipelineConfig {
    /// Short name of the enabled stages, e.g. `threshold+gate`.
    pub fn variant_name(&self) -> String {
        match (&self.filter, self.gate.is_some()) {
            (FilterMethod::None, false) => "none".to_owned(),
            (FilterMethod::None, true) => "gate".to_owned(),
            (f, false) => f.name().to_owned(),
            (f, true) => format!("{}+gate", f.name()),
        }
    }
}

/// Per-frame artifacts of one pipeline run.
#[derive(Debug, Clone, PartialEq)]
pub struct FrameOutput {
    pub frame_id: String,
    pub keep_mask: Vec<bool>,
    pub filter_metrics: Option<FilterMetrics>,
    /// Detector output before gating.
    pub raw_detections: Vec<Detection>,
    /// Detections after gating (equal to `raw_detections` without a gate).
    pub detections: Vec<Detection>,
}

#[derive(Debug, Clone)]
pub struct PipelineRun {
    pub frames: Vec<FrameOutput>,
    pub report: EvalReport,
}

/// Keep mask of one frame under `method`, plus label metrics when the frame
/// carries labels.
pub fn filter_frame(
    bundle: &FrameBundle,
    method: &FilterMethod,
    mode: ExecMode,
) -> Result<(Vec<bool>, Option<FilterMetrics>)> {
    bundle.validate()?;
    if matches!(method, FilterMethod::Threshold(_)) && bundle.scores.is_none() {
        return Err(Error::MissingInput {
            frame: bundle.frame_id.clone(),
            what: "scores",
        });
    }
    let keep_mask = method.mask(&bundle.cloud, bundle.scores.as_ref(), mode)?;
    let metrics = bundle
        .labels
        .as_ref()
        .map(|l| filter_metrics(&keep_mask, l))
        .transpose()?;
    Ok((keep_mask, metrics))
}

/// Filter and detect one frame (no gating).
pub fn filter_and_detect(bundle: &FrameBundle, cfg: &PipelineConfig, mode: ExecMode) -> Result<FrameOutput> {
    let (keep_mask, filter_metrics) = filter_frame(bundle, &cfg.filter, mode)?;
    let raw_detections = match cfg.detector {
        DetectorStage::Cluster(params) => {
            let filtered = bundle.cloud.select(&keep_mask)?;
            cluster_detect_with(&filtered, &params, mode)?
        }
        DetectorStage::External => bundle.detections.clone().ok_or_else(|| Error::MissingInput {
            frame: bundle.frame_id.clone(),
            what: "detections",
        })?,
    };
    Ok(FrameOutput {
        frame_id: bundle.frame_id.clone(),
        keep_mask,
        filter_metrics,
        detections: raw_detections.clone(),
        raw_detections,
    })
}

/// Apply the gate (if any) to an already detected frame.
pub fn apply_gate(bundle: &FrameBundle, out: &mut FrameOutput, gate: Option<&GateConfig>) -> Result<()> {
    out.detections = match gate {
        None => out.raw_detections.clone(),
        Some(g) => {
            let radar = bundle.radar.as_ref().ok_or_else(|| Error::MissingInput {
                frame: bundle.frame_id.clone(),
                what: "radar",
            })?;
            gate_detections(&out.raw_detections, radar, g)?
        }
    };
    Ok(())
}

pub fn run_frame(bundle: &FrameBundle, cfg: &PipelineConfig, mode: ExecMode) -> Result<FrameOutput> {
    let mut out = filter_and_detect(bundle, cfg, mode)?;
    apply_gate(bundle, &mut out, cfg.gate.as_ref())?;
    Ok(out)
}

pub fn evaluate_outputs(
    frames: &[FrameBundle],
    outputs: &[FrameOutput],
    cfg: &EvalConfig,
    mode: ExecMode,
) -> Result<EvalReport> {
    let inputs: Vec<FrameEval<'_>> = frames
        .iter()
        .zip(outputs)
        .map(|(f, o)| FrameEval {
            gt: &f.gt_boxes,
            detections: &o.detections,
        })
        .collect();
    evaluate(&inputs, cfg, mode)
}

/// Run every frame (frames in parallel under `mode`) and evaluate.
pub fn run_pipeline(frames: &[FrameBundle], cfg: &PipelineConfig, mode: ExecMode) -> Result<PipelineRun> {
    cfg.eval.validate()?;
    if let Some(g) = &cfg.gate {
        g.validate()?;
    }
    let outputs = exec::try_map_slice(mode, frames, |f| run_frame(f, cfg, ExecMode::Sequential))?;
    let report = evaluate_outputs(frames, &outputs, &cfg.eval, mode)?;
    Ok(PipelineRun {
        frames: outputs,
        report,
    })
}
