//! The run configuration: one TOML file per run, every section optional.
//!
//! Relative paths are resolved against the working directory.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use spraygate_core::detector::ClusterParams;
use spraygate_core::eval::{EvalConfig, DEFAULT_GAMMA_LEVELS, DEFAULT_TPR_LEVELS};
use spraygate_core::filter::{DrorParams, DsorParams, FilterMethod, Threshold};
use spraygate_core::gate::GateConfig;
use spraygate_core::sim::SceneConfig;

use crate::error::{CliError, CliResult};

/// Environment variable holding the default worker count.
pub const WORKERS_ENV: &str = "SPRAYGATE_WORKERS";

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    /// Input dataset manifest.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub input: Option<PathBuf>,
    /// Run directory. Left out of the resolved copy so that a run's outputs do
    /// not depend on where they were written.
    #[serde(skip_serializing)]
    pub output: Option<PathBuf>,
    /// Worker threads; does not affect results and is not recorded.
    #[serde(skip_serializing)]
    pub workers: Option<usize>,
    pub simulate: SimulateSection,
    pub calibrate: CalibrateSection,
    pub filter: FilterSection,
    pub detector: DetectorSection,
    pub gate: GateSection,
    pub eval: EvalConfig,
    pub pipeline: PipelineSection,
    pub sweep: SweepSection,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SimulateSection {
    pub frames: usize,
    /// Frame `i` uses seed `base_seed + i`.
    pub base_seed: u64,
    pub scene: SceneConfig,
}

impl Default for SimulateSection {
    fn default() -> Self {
        Self {
            frames: 10,
            base_seed: 0,
            scene: SceneConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CalibrateSection {
    pub tpr: f64,
}

impl Default for CalibrateSection {
    fn default() -> Self {
        Self { tpr: 0.99 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MethodName {
    #[default]
    None,
    Threshold,
    Dsor,
    Dror,
}

/// Point filter. A threshold comes from `tau` if set, else from the
/// `calibration` file, else from calibrating the input at `tpr`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FilterSection {
    pub method: MethodName,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub tau: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub calibration: Option<PathBuf>,
    pub tpr: f64,
    pub dsor: DsorParams,
    pub dror: DrorParams,
}

impl Default for FilterSection {
    fn default() -> Self {
        Self {
            method: MethodName::None,
            tau: None,
            calibration: None,
            tpr: 0.99,
            dsor: DsorParams::default(),
            dror: DrorParams::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DetectorSource {
    #[default]
    Cluster,
    External,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DetectorSection {
    pub source: DetectorSource,
    /// External detections (JSONL); without it the detections already in
    /// the input frames are used.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub detections: Option<PathBuf>,
    pub cluster: ClusterParams,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GateSection {
    pub enabled: bool,
    pub gamma: f64,
    pub require_count: usize,
    pub snap_target_z: bool,
}

impl Default for GateSection {
    fn default() -> Self {
        let g = GateConfig::default();
        Self {
            enabled: false,
            gamma: g.gamma,
            require_count: g.require_count,
            snap_target_z: g.snap_target_z,
        }
    }
}

impl GateSection {
    pub fn params(&self) -> GateConfig {
        GateConfig {
            gamma: self.gamma,
            require_count: self.require_count,
            snap_target_z: self.snap_target_z,
        }
    }
}

/// Which stages a pipeline variant switches on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Variant {
    #[serde(rename = "none")]
    None,
    #[serde(rename = "filter")]
    Filter,
    #[serde(rename = "gate")]
    Gate,
    #[serde(rename = "filter+gate")]
    FilterGate,
}

impl Variant {
    pub const ALL: [Variant; 4] = [Variant::None, Variant::Filter, Variant::Gate, Variant::FilterGate];

    pub fn uses_filter(self) -> bool {
        matches!(self, Variant::Filter | Variant::FilterGate)
    }

    pub fn uses_gate(self) -> bool {
        matches!(self, Variant::Gate | Variant::FilterGate)
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PipelineSection {
    /// Variants to run side by side; empty runs the single variant given by
    /// `filter.method` and `gate.enabled`.
    pub variants: Vec<Variant>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SweepSection {
    pub tpr_levels: Vec<f64>,
    pub gamma_levels: Vec<f64>,
}

impl Default for SweepSection {
    fn default() -> Self {
        Self {
            tpr_levels: DEFAULT_TPR_LEVELS.to_vec(),
            gamma_levels: DEFAULT_GAMMA_LEVELS.to_vec(),
        }
    }
}

fn valid_tpr(what: &str, tpr: f64) -> CliResult<()> {
    if tpr > 0.0 && tpr <= 1.0 {
        Ok(())
    } else {
        Err(CliError::Config(format!("{what} = {tpr} is outside (0, 1]")))
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> CliResult<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        Self::parse(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
    }

    pub fn parse(text: &str) -> Result<Self, toml::de::Error> {
        toml::from_str(text)
    }

    pub fn to_toml(&self) -> CliResult<String> {
        toml::to_string(self).map_err(|e| CliError::Internal(format!("serializing config: {e}")))
    }

    /// Check every section up front so bad values fail before any work.
    pub fn validate(&self) -> CliResult<()> {
        self.simulate.scene.validate().map_err(CliError::config)?;
        valid_tpr("calibrate.tpr", self.calibrate.tpr)?;
        valid_tpr("filter.tpr", self.filter.tpr)?;
        if let Some(tau) = self.filter.tau {
            Threshold::new(tau).map_err(CliError::config)?;
        }
        self.filter.dsor.validate().map_err(CliError::config)?;
        self.filter.dror.validate().map_err(CliError::config)?;
        self.detector.cluster.validate().map_err(CliError::config)?;
        self.gate.params().validate().map_err(CliError::config)?;
        self.eval.validate().map_err(CliError::config)?;
        for &tpr in &self.sweep.tpr_levels {
            valid_tpr("sweep.tpr_levels", tpr)?;
        }
        for &g in &self.sweep.gamma_levels {
            if !(g >= 0.0 && g.is_finite()) {
                return Err(CliError::Config(format!("sweep.gamma_levels: {g} must be >= 0")));
            }
        }
        if self.workers == Some(0) {
            return Err(CliError::Config("workers must be at least 1".into()));
        }
        if self.pipeline.variants.iter().any(|v| v.uses_filter()) && self.filter.method == MethodName::None {
            return Err(CliError::Config(
                "pipeline.variants uses the filter but filter.method is none".into(),
            ));
        }
        Ok(())
    }

    /// Filter method with the threshold already resolved.
    pub fn filter_method(&self, tau: Option<Threshold>) -> FilterMethod {
        match self.filter.method {
            MethodName::None => FilterMethod::None,
            MethodName::Threshold => FilterMethod::Threshold(tau.expect("threshold resolved before use")),
            MethodName::Dsor => FilterMethod::Dsor(self.filter.dsor),
            MethodName::Dror => FilterMethod::Dror(self.filter.dror),
        }
    }
}

/// Worker count: command line, then config file, then environment.
pub fn resolve_workers(flag: Option<usize>, config: Option<usize>) -> CliResult<Option<usize>> {
    if let Some(n) = flag.or(config) {
        return Ok(Some(n));
    }
    match std::env::var(WORKERS_ENV) {
        Ok(v) => v
            .trim()
            .parse::<usize>()
            .ok()
            .filter(|&n| n > 0)
            .map(Some)
            .ok_or_else(|| CliError::Config(format!("{WORKERS_ENV}={v:?} is not a positive integer"))),
        Err(_) => Ok(None),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_file_is_all_defaults() {
        let cfg = RunConfig::parse("").unwrap();
        assert_eq!(cfg, RunConfig::default());
        cfg.validate().unwrap();
    }

    #[test]
    fn unknown_keys_are_rejected() {
        assert!(RunConfig::parse("bogus = 1").is_err());
        assert!(RunConfig::parse("[filter]\nmethod = \"threshold\"\ntua = 1.0").is_err());
        assert!(RunConfig::parse("[simulate.scene]\nspray = 3").is_err());
        assert!(RunConfig::parse("[filter.dsor]\nkk = 3").is_err());
    }

    #[test]
    fn partial_sections_keep_defaults() {
        let cfg = RunConfig::parse("[filter.dsor]\nk = 8\n[gate]\nenabled = true").unwrap();
        assert_eq!(cfg.filter.dsor.k, 8);
        assert_eq!(cfg.filter.dsor.s, DsorParams::default().s);
        assert!(cfg.gate.enabled);
        assert_eq!(cfg.gate.gamma, 1.0);
    }

    #[test]
    fn resolved_copy_round_trips() {
        let mut cfg = RunConfig::parse(
            "input = \"data/manifest.json\"\n[pipeline]\nvariants = [\"none\", \"filter+gate\"]\n[filter]\nmethod = \"threshold\"\ntau = 2.5",
        )
        .unwrap();
        cfg.output = Some("somewhere".into());
        let text = cfg.to_toml().unwrap();
        assert!(!text.contains("somewhere"));
        let back = RunConfig::parse(&text).unwrap();
        assert_eq!(back, RunConfig { output: None, ..cfg });
    }

    #[test]
    fn infinite_bins_survive_toml() {
        let text = RunConfig::default().to_toml().unwrap();
        assert!(text.contains("inf"), "{text}");
        assert_eq!(RunConfig::parse(&text).unwrap(), RunConfig::default());
    }

    #[test]
    fn bad_values_fail_validation() {
        for text in [
            "[calibrate]\ntpr = 0.0",
            "[gate]\ngamma = -1.0",
            "[eval]\niou_threshold = 1.5",
            "[sweep]\ntpr_levels = [1.2]",
            "[pipeline]\nvariants = [\"filter\"]",
            "workers = 0",
        ] {
            let cfg = RunConfig::parse(text).unwrap();
            assert!(matches!(cfg.validate(), Err(CliError::Config(_))), "{text}");
        }
    }
}
