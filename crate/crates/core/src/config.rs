//! Experiment configuration: a versioned TOML schema with unknown keys rejected.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::fem::{LinearSolver, ProblemConfig};
use crate::fourier_op::Rect;
use crate::invert::{Method, QMode, TvOptions};
use crate::measure::{DataPath, EpsilonGrid, NoiseModel};
use crate::par::Execution;
use crate::potentials::PotentialField;
use crate::sgdiff::SGConfig;

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PipelineMode {
    #[default]
    Full,
    InversionOnly,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProblemSection {
    pub p: u32,
    pub data_path: DataPath,
    pub newton_rel_tol: f64,
    pub newton_max_iter: usize,
    pub linear_solver: LinearSolver,
}

impl Default for ProblemSection {
    fn default() -> Self {
        ProblemSection {
            p: 2,
            data_path: DataPath::DomainIntegral,
            newton_rel_tol: 1e-8,
            newton_max_iter: 20,
            linear_solver: LinearSolver::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MeshSection {
    pub radial_resolution: usize,
    pub degree: usize,
}

impl Default for MeshSection {
    fn default() -> Self {
        MeshSection { radial_resolution: 64, degree: 3 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EpsilonSection {
    pub n: usize,
    pub min: f64,
    pub max: f64,
}

impl Default for EpsilonSection {
    fn default() -> Self {
        EpsilonSection { n: 64, min: -2.0, max: 2.0 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FrequencySection {
    pub n_r: usize,
    pub n_theta: usize,
    pub r_max: f64,
    pub half_plane: bool,
}

impl Default for FrequencySection {
    fn default() -> Self {
        FrequencySection { n_r: 60, n_theta: 30, r_max: 5.0, half_plane: false }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PixelSection {
    pub nx: usize,
    pub ny: usize,
    pub bbox: Rect,
}

impl Default for PixelSection {
    fn default() -> Self {
        PixelSection { nx: 150, ny: 150, bbox: Rect::unit_square() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InversionSection {
    pub method: Method,
    pub lambda: f64,
    /// λ values for `sweep-lambda`, ascending.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub lambdas: Vec<f64>,
    pub q_mode: QMode,
    pub tv: TvOptions,
}

impl Default for InversionSection {
    fn default() -> Self {
        InversionSection {
            method: Method::Tikhonov,
            lambda: 1e-10,
            lambdas: Vec::new(),
            q_mode: QMode::Real,
            tv: TvOptions::default(),
        }
    }
}

/// Where inversion-only runs take their Fourier data from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DataSource {
    /// Forward sweeps (full mode only).
    #[default]
    Sweeps,
    /// Gauss-Legendre oracle of the configured potential, noise applied to F.
    Oracle,
    /// A sweep archive written by an earlier full run.
    Archive,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataSection {
    pub source: DataSource,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub archive: Option<PathBuf>,
    pub oracle_order: usize,
}

impl Default for DataSection {
    fn default() -> Self {
        DataSection { source: DataSource::Sweeps, archive: None, oracle_order: 16 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExecutionSection {
    pub parallel: bool,
    /// Worker threads; 0 means all available cores.
    pub threads: usize,
    /// Write PPM heatmaps of truth, reconstruction and residual.
    pub images: bool,
}

impl Default for ExecutionSection {
    fn default() -> Self {
        ExecutionSection { parallel: true, threads: 0, images: true }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub schema_version: u32,
    pub mode: PipelineMode,
    pub output_dir: PathBuf,
    pub potential: PotentialField,
    pub problem: ProblemSection,
    pub mesh: MeshSection,
    pub epsilon: EpsilonSection,
    pub sg: SGConfig,
    pub noise: NoiseModel,
    pub frequency: FrequencySection,
    pub pixels: PixelSection,
    pub inversion: InversionSection,
    pub data: DataSection,
    pub execution: ExecutionSection,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            schema_version: SCHEMA_VERSION,
            mode: PipelineMode::Full,
            output_dir: PathBuf::from("run"),
            potential: PotentialField::centered_bump(),
            problem: ProblemSection::default(),
            mesh: MeshSection::default(),
            epsilon: EpsilonSection::default(),
            sg: SGConfig::default(),
            noise: NoiseModel::default(),
            frequency: FrequencySection::default(),
            pixels: PixelSection::default(),
            inversion: InversionSection::default(),
            data: DataSection::default(),
            execution: ExecutionSection::default(),
        }
    }
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: ExperimentConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Parse `text` after applying `key.path=value` overrides. Values are
    /// read as TOML (numbers, booleans, arrays) and fall back to strings.
    pub fn from_toml_with_overrides(text: &str, overrides: &[String]) -> Result<Self> {
        let mut table: toml::Table = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        for item in overrides {
            let (key, raw) = item
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("override {item:?} is not of the form key=value")))?;
            let value = parse_value(raw.trim());
            set_path(&mut table, key.trim(), value)?;
        }
        let text = toml::to_string(&table).map_err(|e| Error::Config(e.to_string()))?;
        Self::from_toml(&text)
    }

    pub fn load(path: &Path, overrides: &[String]) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_toml_with_overrides(&text, overrides)
    }

    /// Canonical serialization; parsing it gives back an identical config.
    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    /// SHA-256 of the canonical serialization with the output directory
    /// cleared, hex encoded: where a run is written is not part of it.
    pub fn hash(&self) -> String {
        let anchored = ExperimentConfig { output_dir: PathBuf::new(), ..self.clone() };
        let digest = Sha256::digest(anchored.to_toml().as_bytes());
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }

    pub fn validate(&self) -> Result<()> {
        if self.schema_version != SCHEMA_VERSION {
            return Err(Error::Config(format!(
                "schema version {} is not supported (expected {SCHEMA_VERSION})",
                self.schema_version
            )));
        }
        self.problem_config().validate()?;
        self.epsilon_grid()?;
        self.sg.validate()?;
        self.noise.validate()?;
        if self.mesh.degree == 0 || self.mesh.radial_resolution == 0 {
            return Err(Error::Config("mesh degree and resolution must be positive".into()));
        }
        if !(self.inversion.lambda > 0.0) || self.inversion.lambdas.iter().any(|l| !(*l > 0.0)) {
            return Err(Error::Config("regularization parameters must be positive".into()));
        }
        match (self.mode, self.data.source) {
            (PipelineMode::Full, DataSource::Sweeps) => {}
            (PipelineMode::Full, s) => {
                return Err(Error::Config(format!("full runs compute their own data; data.source = {s:?} is for inversion_only")))
            }
            (PipelineMode::InversionOnly, DataSource::Sweeps) => {
                return Err(Error::Config("inversion_only needs data.source = \"oracle\" or \"archive\"".into()))
            }
            (PipelineMode::InversionOnly, DataSource::Archive) if self.data.archive.is_none() => {
                return Err(Error::Config("data.source = \"archive\" needs data.archive".into()))
            }
            _ => {}
        }
        Ok(())
    }

    pub fn problem_config(&self) -> ProblemConfig {
        ProblemConfig {
            p: self.problem.p,
            newton_rel_tol: self.problem.newton_rel_tol,
            newton_max_iter: self.problem.newton_max_iter,
            linear_solver: self.problem.linear_solver,
            ..ProblemConfig::new(self.potential)
        }
    }

    pub fn epsilon_grid(&self) -> Result<EpsilonGrid> {
        EpsilonGrid::uniform(self.epsilon.n, self.epsilon.min, self.epsilon.max)
    }

    pub fn execution(&self) -> Execution {
        if self.execution.parallel {
            Execution::Parallel
        } else {
            Execution::Sequential
        }
    }
}

fn parse_value(raw: &str) -> toml::Value {
    let wrapped = format!("v = {raw}");
    match toml::from_str::<toml::Table>(&wrapped) {
        Ok(mut t) => t.remove("v").expect("key present"),
        Err(_) => toml::Value::String(raw.to_string()),
    }
}

fn set_path(table: &mut toml::Table, key: &str, value: toml::Value) -> Result<()> {
    let mut parts: Vec<&str> = key.split('.').collect();
    let last = parts.pop().filter(|s| !s.is_empty()).ok_or_else(|| Error::Config(format!("empty override key {key:?}")))?;
    let mut current = table;
    for p in parts {
        current = current
            .entry(p)
            .or_insert_with(|| toml::Value::Table(toml::Table::new()))
            .as_table_mut()
            .ok_or_else(|| Error::Config(format!("override {key:?}: {p} is not a table")))?;
    }
    current.insert(last.to_string(), value);
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_round_trips_exactly() {
        let cfg = ExperimentConfig::default();
        let text = cfg.to_toml();
        let back = ExperimentConfig::from_toml(&text).unwrap();
        assert_eq!(back, cfg);
        assert_eq!(back.to_toml(), text);
        assert_eq!(back.hash(), cfg.hash());
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let mut text = ExperimentConfig::default().to_toml();
        text = text.replace("[mesh]\n", "[mesh]\nrefinement = 2\n");
        assert!(matches!(ExperimentConfig::from_toml(&text), Err(Error::Config(_))));
        let text = format!("colour = \"red\"\n{}", ExperimentConfig::default().to_toml());
        assert!(ExperimentConfig::from_toml(&text).is_err());
    }

    #[test]
    fn schema_version_is_checked() {
        let text = ExperimentConfig::default().to_toml().replace("schema_version = 1", "schema_version = 7");
        assert!(ExperimentConfig::from_toml(&text).is_err());
    }

    #[test]
    fn overrides_apply_to_nested_keys() {
        let text = ExperimentConfig::default().to_toml();
        let cfg = ExperimentConfig::from_toml_with_overrides(
            &text,
            &["mesh.radial_resolution=32".into(), "noise.seed=9".into(), "output_dir=out/x".into(), "inversion.method=tv".into()],
        )
        .unwrap();
        assert_eq!(cfg.mesh.radial_resolution, 32);
        assert_eq!(cfg.noise.seed, 9);
        assert_eq!(cfg.output_dir, PathBuf::from("out/x"));
        assert_eq!(cfg.inversion.method, Method::Tv);
        assert!(ExperimentConfig::from_toml_with_overrides(&text, &["mesh.bogus=1".into()]).is_err());
    }

    #[test]
    fn hash_changes_with_content() {
        let a = ExperimentConfig::default();
        let mut b = a.clone();
        b.noise.seed += 1;
        assert_ne!(a.hash(), b.hash());
        assert_eq!(a.hash().len(), 64);
        let moved = ExperimentConfig { output_dir: "elsewhere".into(), ..a.clone() };
        assert_eq!(moved.hash(), a.hash());
    }

    #[test]
    fn data_source_must_match_mode() {
        let mut cfg = ExperimentConfig::default();
        cfg.mode = PipelineMode::InversionOnly;
        assert!(cfg.validate().is_err());
        cfg.data.source = DataSource::Archive;
        assert!(cfg.validate().is_err());
        cfg.data.archive = Some("sweeps.txt".into());
        assert!(cfg.validate().is_ok());
        cfg.mode = PipelineMode::Full;
        assert!(cfg.validate().is_err());
    }
}
