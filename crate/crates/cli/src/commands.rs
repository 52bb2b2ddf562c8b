//! One function per subcommand. Each reads its inputs, writes everything
//! under the run directory and returns a short summary for the terminal.

use std::path::{Path, PathBuf};

use log::info;
use serde::{Deserialize, Serialize};
use spraygate_core::detector::{attach_external_detections, cluster_detect_with};
use spraygate_core::eval::{render_csv, render_table, sweep_gamma, sweep_tau, BinReport, EvalReport};
use spraygate_core::exec::{self, ExecMode};
use spraygate_core::filter::{calibrate_threshold, valid_scores, FilterMetrics, Threshold};
use spraygate_core::gate::gate_detections;
use spraygate_core::io::{
    read_detections_jsonl, write_detections_jsonl, write_mask, DatasetManifest, DetectionGroups, FrameBundle,
    LabelRemap,
};
use spraygate_core::pipeline::{filter_frame, run_pipeline, DetectorStage, PipelineConfig};
use spraygate_core::sim::generate_dataset;
use spraygate_core::{Detection, Error};

use crate::config::{DetectorSource, MethodName, RunConfig};
use crate::error::{CliError, CliResult};
use crate::output::RunDir;

pub const CALIBRATION_FILE: &str = "calibration.toml";

/// Written by `calibrate`, read back through `filter.calibration`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Calibration {
    pub tpr: f64,
    pub tau: f64,
    pub valid_points: usize,
    /// Fraction of the calibration scores kept by `tau`.
    pub achieved_tpr: f64,
}

/// A configured run: settings, run directory and execution mode.
pub struct Context {
    pub cfg: RunConfig,
    pub out: RunDir,
    pub mode: ExecMode,
}

struct Input {
    path: PathBuf,
    frames: Vec<FrameBundle>,
}

impl Context {
    fn load_input(&self) -> CliResult<Input> {
        let path =
            self.cfg.input.clone().ok_or_else(|| {
                CliError::Config("an input manifest is required (--input or `input`)".into())
            })?;
        let manifest = DatasetManifest::load(&path)?;
        let frames = manifest.load_all(&LabelRemap::identity(), self.mode)?;
        self.out.write_input_digests(&path, &manifest)?;
        info!("loaded {} frames from {}", frames.len(), path.display());
        Ok(Input { path, frames })
    }

    /// Resolve a threshold (if the method needs one) and record it in the
    /// resolved configuration.
    fn resolve_threshold(&mut self, frames: &[FrameBundle]) -> CliResult<Option<Threshold>> {
        if self.cfg.filter.method != MethodName::Threshold {
            return Ok(None);
        }
        let tau = match (self.cfg.filter.tau, &self.cfg.filter.calibration) {
            (Some(t), _) => Threshold::new(t).map_err(CliError::config)?,
            (None, Some(path)) => {
                let cal = read_calibration(path)?;
                Threshold::new(cal.tau).map_err(CliError::config)?
            }
            (None, None) => calibrate_frames(frames, self.cfg.filter.tpr)?.0,
        };
        self.cfg.filter.tau = Some(tau.value());
        self.cfg.filter.calibration = None;
        Ok(Some(tau))
    }

    /// Frames with external detections attached when a detections file is
    /// configured.
    fn with_external_detections(&self, frames: Vec<FrameBundle>) -> CliResult<Vec<FrameBundle>> {
        let Some(path) = &self.cfg.detector.detections else {
            return Ok(frames);
        };
        let mut groups = read_detections_jsonl(path)?;
        let known: std::collections::HashSet<&str> = frames.iter().map(|f| f.frame_id.as_str()).collect();
        if let Some(stray) = groups.keys().find(|k| !known.contains(k.as_str())) {
            return Err(Error::FrameMismatch {
                expected: "a frame of the input manifest".into(),
                actual: stray.clone(),
            }
            .into());
        }
        frames
            .into_iter()
            .map(|f| {
                let dets = groups.shift_remove(&f.frame_id).unwrap_or_default();
                let id = f.frame_id.clone();
                Ok(attach_external_detections(f, &id, dets)?)
            })
            .collect()
    }

    fn detector_stage(&self) -> DetectorStage {
        match self.cfg.detector.source {
            DetectorSource::Cluster => DetectorStage::Cluster(self.cfg.detector.cluster),
            DetectorSource::External => DetectorStage::External,
        }
    }

    fn pipeline_config(&self, tau: Option<Threshold>, filter: bool, gate: bool) -> PipelineConfig {
        PipelineConfig {
            filter: if filter {
                self.cfg.filter_method(tau)
            } else {
                spraygate_core::filter::FilterMethod::None
            },
            detector: self.detector_stage(),
            gate: gate.then(|| self.cfg.gate.params()),
            eval: self.cfg.eval.clone(),
        }
    }

    fn save_frames(&self, frames: &[FrameBundle]) -> CliResult<DatasetManifest> {
        let root = self.out.root();
        let records = exec::try_map_slice(self.mode, frames, |f| f.save(root, "frames"))?;
        let manifest = DatasetManifest::new(root, records);
        manifest.save(root.join(DatasetManifest::FILE_NAME))?;
        Ok(manifest)
    }

    fn finish(&self) -> CliResult<()> {
        self.out.write_resolved(&self.cfg)
    }
}

fn read_calibration(path: &Path) -> CliResult<Calibration> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::Io {
        path: path.to_owned(),
        source: e,
    })?;
    toml::from_str(&text).map_err(|e| {
        Error::Parse {
            path: path.to_owned(),
            line: 0,
            reason: e.to_string(),
        }
        .into()
    })
}

fn calibrate_frames(frames: &[FrameBundle], tpr: f64) -> CliResult<(Threshold, Vec<f32>)> {
    let mut pairs = Vec::with_capacity(frames.len());
    for f in frames {
        let missing = |what| Error::MissingInput {
            frame: f.frame_id.clone(),
            what,
        };
        pairs.push((
            f.scores.as_ref().ok_or_else(|| missing("scores"))?,
            f.labels.as_ref().ok_or_else(|| missing("labels"))?,
        ));
    }
    let pooled = valid_scores(pairs);
    let tau = calibrate_threshold(&pooled, tpr)?;
    Ok((tau, pooled))
}

fn detection_groups<'a>(items: impl IntoIterator<Item = (&'a str, &'a [Detection])>) -> DetectionGroups {
    items
        .into_iter()
        .map(|(id, d)| (id.to_owned(), d.to_vec()))
        .collect()
}

pub fn simulate(ctx: &mut Context) -> CliResult<String> {
    let sim = &ctx.cfg.simulate;
    let manifest = generate_dataset(&sim.scene, sim.frames, sim.base_seed, ctx.out.root(), ctx.mode)?;
    ctx.finish()?;
    Ok(format!(
        "wrote {} frames to {}",
        manifest.len(),
        ctx.out.root().display()
    ))
}

pub fn calibrate(ctx: &mut Context) -> CliResult<String> {
    let input = ctx.load_input()?;
    let tpr = ctx.cfg.calibrate.tpr;
    let (tau, pooled) = calibrate_frames(&input.frames, tpr)?;
    let kept = pooled.iter().filter(|&&s| tau.is_valid(s)).count();
    let cal = Calibration {
        tpr,
        tau: tau.value(),
        valid_points: pooled.len(),
        achieved_tpr: kept as f64 / pooled.len() as f64,
    };
    let text = toml::to_string(&cal).map_err(|e| CliError::Internal(e.to_string()))?;
    ctx.out.write(CALIBRATION_FILE, text.as_bytes())?;
    ctx.finish()?;
    Ok(format!(
        "tau = {} at {:.2}% target TPR ({:.4}% achieved on {} valid points)",
        cal.tau,
        100.0 * tpr,
        100.0 * cal.achieved_tpr,
        cal.valid_points
    ))
}

#[derive(Serialize)]
struct FilterRow<'a> {
    frame_id: &'a str,
    points: usize,
    kept: usize,
    valid_total: Option<usize>,
    valid_kept: Option<usize>,
    spray_total: Option<usize>,
    spray_removed: Option<usize>,
    valid_tpr: Option<f64>,
    noise_recall: Option<f64>,
    noise_precision: Option<f64>,
}

impl<'a> FilterRow<'a> {
    fn new(frame_id: &'a str, mask: &[bool], m: Option<&FilterMetrics>) -> Self {
        Self {
            frame_id,
            points: mask.len(),
            kept: mask.iter().filter(|k| **k).count(),
            valid_total: m.map(|m| m.valid_total),
            valid_kept: m.map(|m| m.valid_kept),
            spray_total: m.map(|m| m.spray_total),
            spray_removed: m.map(|m| m.spray_removed),
            valid_tpr: m.and_then(|m| m.valid_tpr),
            noise_recall: m.and_then(|m| m.noise_recall),
            noise_precision: m.and_then(|m| m.noise_precision),
        }
    }
}

pub fn filter(ctx: &mut Context) -> CliResult<String> {
    let input = ctx.load_input()?;
    let tau = ctx.resolve_threshold(&input.frames)?;
    let method = ctx.cfg.filter_method(tau);
    let root = ctx.out.root().to_owned();
    let results = exec::try_map_slice(ctx.mode, &input.frames, |f| -> Result<_, Error> {
        let (mask, metrics) = filter_frame(f, &method, ExecMode::Sequential)?;
        write_mask(root.join("masks").join(format!("{}.mask", f.frame_id)), &mask)?;
        Ok((f.retain_points(&mask)?, mask, metrics))
    })?;
    let filtered: Vec<FrameBundle> = results.iter().map(|r| r.0.clone()).collect();
    ctx.save_frames(&filtered)?;
    let rows: Vec<FilterRow> = input
        .frames
        .iter()
        .zip(&results)
        .map(|(f, (_, mask, m))| FilterRow::new(&f.frame_id, mask, m.as_ref()))
        .collect();
    ctx.out.write_csv("filter_metrics.csv", &rows)?;
    ctx.finish()?;
    let (points, kept) = rows.iter().fold((0, 0), |(p, k), r| (p + r.points, k + r.kept));
    Ok(format!(
        "{}: kept {kept} of {points} points over {} frames",
        method.name(),
        rows.len()
    ))
}

pub fn detect(ctx: &mut Context) -> CliResult<String> {
    let input = ctx.load_input()?;
    let frames = ctx.with_external_detections(input.frames)?;
    let stage = ctx.detector_stage();
    let detected = exec::try_map_slice(ctx.mode, &frames, |f| -> Result<_, Error> {
        let dets = match stage {
            DetectorStage::Cluster(p) => cluster_detect_with(&f.cloud, &p, ExecMode::Sequential)?,
            DetectorStage::External => f.detections.clone().ok_or_else(|| Error::MissingInput {
                frame: f.frame_id.clone(),
                what: "detections",
            })?,
        };
        Ok(FrameBundle {
            detections: Some(dets),
            ..f.clone()
        })
    })?;
    ctx.save_frames(&detected)?;
    let groups = detection_groups(
        detected
            .iter()
            .map(|f| (f.frame_id.as_str(), f.detections.as_deref().unwrap_or_default())),
    );
    write_detections_jsonl(ctx.out.path("detections.jsonl"), &groups)?;
    ctx.finish()?;
    let total: usize = groups.values().map(Vec::len).sum();
    Ok(format!("{total} detections over {} frames", detected.len()))
}

#[derive(Serialize)]
struct GateRow<'a> {
    frame_id: &'a str,
    radar_targets: usize,
    before: usize,
    after: usize,
}

pub fn gate(ctx: &mut Context) -> CliResult<String> {
    let input = ctx.load_input()?;
    let frames = ctx.with_external_detections(input.frames)?;
    let params = ctx.cfg.gate.params();
    let gated = exec::try_map_slice(ctx.mode, &frames, |f| -> Result<_, Error> {
        let missing = |what| Error::MissingInput {
            frame: f.frame_id.clone(),
            what,
        };
        let dets = f.detections.as_ref().ok_or_else(|| missing("detections"))?;
        let radar = f.radar.as_ref().ok_or_else(|| missing("radar"))?;
        let kept = gate_detections(dets, radar, &params)?;
        Ok(FrameBundle {
            detections: Some(kept),
            ..f.clone()
        })
    })?;
    ctx.save_frames(&gated)?;
    let rows: Vec<GateRow> = frames
        .iter()
        .zip(&gated)
        .map(|(before, after)| GateRow {
            frame_id: &before.frame_id,
            radar_targets: before.radar.as_ref().map_or(0, |r| r.len()),
            before: before.detections.as_ref().map_or(0, Vec::len),
            after: after.detections.as_ref().map_or(0, Vec::len),
        })
        .collect();
    ctx.out.write_csv("gate_summary.csv", &rows)?;
    let groups = detection_groups(
        gated
            .iter()
            .map(|f| (f.frame_id.as_str(), f.detections.as_deref().unwrap_or_default())),
    );
    write_detections_jsonl(ctx.out.path("detections.jsonl"), &groups)?;
    ctx.finish()?;
    let (before, after) = rows.iter().fold((0, 0), |(b, a), r| (b + r.before, a + r.after));
    Ok(format!(
        "gate kept {after} of {before} detections (gamma = {})",
        params.gamma
    ))
}

#[derive(Serialize)]
struct FrameRow {
    variant: String,
    frame_id: String,
    points: usize,
    kept: usize,
    raw_detections: usize,
    detections: usize,
    valid_tpr: Option<f64>,
    noise_recall: Option<f64>,
}

pub fn pipeline(ctx: &mut Context) -> CliResult<String> {
    let input = ctx.load_input()?;
    let frames = ctx.with_external_detections(input.frames)?;
    let tau = ctx.resolve_threshold(&frames)?;
    let variants: Vec<PipelineConfig> = if ctx.cfg.pipeline.variants.is_empty() {
        let filter = ctx.cfg.filter.method != MethodName::None;
        vec![ctx.pipeline_config(tau, filter, ctx.cfg.gate.enabled)]
    } else {
        ctx.cfg
            .pipeline
            .variants
            .iter()
            .map(|v| ctx.pipeline_config(tau, v.uses_filter(), v.uses_gate()))
            .collect()
    };
    let mut reports = Vec::new();
    let mut rows = Vec::new();
    for cfg in &variants {
        let name = cfg.variant_name();
        let run = run_pipeline(&frames, cfg, ctx.mode)?;
        let groups = detection_groups(
            run.frames
                .iter()
                .map(|o| (o.frame_id.as_str(), o.detections.as_slice())),
        );
        write_detections_jsonl(ctx.out.path(&format!("detections/{name}.jsonl")), &groups)?;
        rows.extend(run.frames.iter().map(|o| FrameRow {
            variant: name.clone(),
            frame_id: o.frame_id.clone(),
            points: o.keep_mask.len(),
            kept: o.keep_mask.iter().filter(|k| **k).count(),
            raw_detections: o.raw_detections.len(),
            detections: o.detections.len(),
            valid_tpr: o.filter_metrics.and_then(|m| m.valid_tpr),
            noise_recall: o.filter_metrics.and_then(|m| m.noise_recall),
        }));
        reports.push((name, run.report));
    }
    ctx.out.write_csv("frame_metrics.csv", &rows)?;
    let view: Vec<(String, &EvalReport)> = reports.iter().map(|(n, r)| (n.clone(), r)).collect();
    let table = render_table(&view);
    ctx.out.write("report.csv", render_csv(&view).as_bytes())?;
    ctx.out.write("report.txt", table.as_bytes())?;
    ctx.finish()?;
    info!(
        "pipeline over {} frames of {}",
        frames.len(),
        input.path.display()
    );
    Ok(table)
}

#[derive(Serialize)]
struct SweepRow<'a> {
    level: f64,
    tau: Option<f64>,
    bin: &'a str,
    lo: f64,
    hi: f64,
    ap: Option<f64>,
    num_gt: usize,
    tp: usize,
    fp: usize,
    #[serde(rename = "fn")]
    fn_: usize,
    ghosts: usize,
}

impl<'a> SweepRow<'a> {
    fn new(level: f64, tau: Option<f64>, b: &'a BinReport) -> Self {
        Self {
            level,
            tau,
            bin: &b.label,
            lo: b.bin.lo,
            hi: b.bin.hi,
            ap: b.ap,
            num_gt: b.num_gt,
            tp: b.tp,
            fp: b.fp,
            fn_: b.fn_,
            ghosts: b.ghosts,
        }
    }
}

pub fn sweep(ctx: &mut Context) -> CliResult<String> {
    let input = ctx.load_input()?;
    let frames = ctx.with_external_detections(input.frames)?;
    let tau = ctx.resolve_threshold(&frames)?;

    let downstream = ctx.pipeline_config(None, false, ctx.cfg.gate.enabled);
    let tau_levels = sweep_tau(&frames, &ctx.cfg.sweep.tpr_levels, &downstream, ctx.mode)?;
    let base = ctx.pipeline_config(tau, ctx.cfg.filter.method != MethodName::None, false);
    let gamma_levels = sweep_gamma(&frames, &ctx.cfg.sweep.gamma_levels, &base, ctx.mode)?;

    let rows: Vec<SweepRow> = tau_levels
        .iter()
        .flat_map(|l| {
            l.report
                .bins
                .iter()
                .map(move |b| SweepRow::new(l.tpr, Some(l.tau.value()), b))
        })
        .collect();
    ctx.out.write_csv("sweep_tau.csv", &rows)?;
    let rows: Vec<SweepRow> = gamma_levels
        .iter()
        .flat_map(|l| l.report.bins.iter().map(move |b| SweepRow::new(l.gamma, None, b)))
        .collect();
    ctx.out.write_csv("sweep_gamma.csv", &rows)?;

    let tau_view: Vec<(String, &EvalReport)> = tau_levels
        .iter()
        .map(|l| (format!("tpr {:.0}%", 100.0 * l.tpr), &l.report))
        .collect();
    let gamma_view: Vec<(String, &EvalReport)> = gamma_levels
        .iter()
        .map(|l| (format!("gamma {} m", l.gamma), &l.report))
        .collect();
    let text = format!("{}\n{}", render_table(&tau_view), render_table(&gamma_view));
    ctx.out.write("report.txt", text.as_bytes())?;
    ctx.finish()?;
    Ok(text)
}

/// Dispatch by subcommand name.
pub fn run(command: Command, ctx: &mut Context) -> CliResult<String> {
    match command {
        Command::Simulate => simulate(ctx),
        Command::Calibrate => calibrate(ctx),
        Command::Filter => filter(ctx),
        Command::Detect => detect(ctx),
        Command::Gate => gate(ctx),
        Command::Pipeline => pipeline(ctx),
        Command::Sweep => sweep(ctx),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Command {
    Simulate,
    Calibrate,
    Filter,
    Detect,
    Gate,
    Pipeline,
    Sweep,
}
