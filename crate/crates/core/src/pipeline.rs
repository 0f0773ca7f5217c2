//! Batch orchestration: full runs (mesh → sweeps → noise → SG → inversion),
//! inversion-only runs on oracle or archived data, λ ladders, oracle dumps.
//!
//! Every file written into a run directory carries the config hash, and a
//! directory holding outputs of a different config is refused.

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::config::{DataSource, ExperimentConfig, PipelineMode};
use crate::error::Error;
use crate::fem::FESpace;
use crate::fourier_op::{assemble_e_with, build_frequency_grid, build_pixel_grid, FourierData, PixelGrid};
use crate::invert::{
    l2_errors, tikhonov_ladder, tikhonov_solve_mode, tv_solve_mode, L2Error, Method, ReconstructionMeta, ReconstructionResult,
    RegularizerStack,
};
use crate::measure::{
    add_fourier_noise, add_noise_all, fourier_data, read_sweep_archive, snr_db, sweep_frequencies, write_sweep_archive,
    MeasurementSweep,
};
use crate::mesh::build_disk_mesh;
use crate::par::{map_indexed, with_threads};
use crate::potentials::{fourier_oracle, PotentialField};
use crate::harmonics::Sign;

pub const CONFIG_FILE: &str = "config.toml";
pub const SWEEP_FILE: &str = "sweeps.txt";
pub const FOURIER_FILE: &str = "fourier_data.txt";
pub const RECONSTRUCTION_FILE: &str = "reconstruction.txt";
pub const TRUTH_FILE: &str = "ground_truth.txt";
pub const SUMMARY_FILE: &str = "summary.json";
pub const LCURVE_FILE: &str = "l_curve.txt";
pub const ORACLE_FILE: &str = "oracle_data.txt";
pub const IMAGE_FILE: &str = "tripanel.ppm";
pub const FAILURE_FILE: &str = "failure.json";

const OUTPUT_FILES: [&str; 10] = [
    CONFIG_FILE,
    SWEEP_FILE,
    FOURIER_FILE,
    RECONSTRUCTION_FILE,
    TRUTH_FILE,
    SUMMARY_FILE,
    LCURVE_FILE,
    ORACLE_FILE,
    IMAGE_FILE,
    FAILURE_FILE,
];

/// Half-width of the plateau bands around 0 and 1 for indicator potentials.
const PLATEAU_BAND: f64 = 0.2;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    Config,
    Mesh,
    Forward,
    Noise,
    Differentiation,
    Operator,
    Inversion,
    Metrics,
    Output,
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Stage::Config => "config",
            Stage::Mesh => "mesh",
            Stage::Forward => "forward",
            Stage::Noise => "noise",
            Stage::Differentiation => "differentiation",
            Stage::Operator => "operator",
            Stage::Inversion => "inversion",
            Stage::Metrics => "metrics",
            Stage::Output => "output",
        };
        f.write_str(s)
    }
}

/// A module error tagged with the pipeline stage it aborted.
#[derive(Debug, thiserror::Error)]
#[error("[{stage}] {source}")]
pub struct PipelineError {
    pub stage: Stage,
    #[source]
    pub source: Error,
}

pub type PipelineResult<T> = std::result::Result<T, PipelineError>;

trait AtStage<T> {
    fn at(self, stage: Stage) -> PipelineResult<T>;
}

impl<T, E: Into<Error>> AtStage<T> for std::result::Result<T, E> {
    fn at(self, stage: Stage) -> PipelineResult<T> {
        self.map_err(|e| PipelineError { stage, source: e.into() })
    }
}

/// Contents of `failure.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FailureRecord {
    pub config_hash: String,
    pub stage: Stage,
    pub message: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NewtonStats {
    pub solves: usize,
    pub failures: usize,
    pub mean_iterations: f64,
    pub max_iterations: usize,
}

/// Level-set metrics for 0/1 potentials.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PlateauStats {
    /// Fraction of pixels within the band around 0.
    pub near_zero: f64,
    /// Fraction of pixels within the band around 1.
    pub near_one: f64,
    /// Jaccard index of {q_rec > 0.5} against {q_true > 0.5}.
    pub jaccard: f64,
}

/// Contents of `summary.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub config_hash: String,
    pub mode: PipelineMode,
    pub data_source: DataSource,
    /// Config hash recorded in the sweep archive that supplied the data.
    pub source_hash: Option<String>,
    pub potential: PotentialField,
    pub n_frequencies: usize,
    pub n_pixels: usize,
    pub reconstruction: ReconstructionMeta,
    pub l2_error: L2Error,
    pub argmax: [f64; 2],
    pub truth_argmax: [f64; 2],
    pub argmax_distance: f64,
    pub snr_db: Option<f64>,
    pub newton: Option<NewtonStats>,
    pub plateau: Option<PlateauStats>,
    pub oracle_warnings: usize,
}

/// In-memory products of a run, alongside what was written to disk.
#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub dir: PathBuf,
    pub config_hash: String,
    pub pixels: PixelGrid,
    pub fourier: FourierData,
    pub reconstruction: ReconstructionResult,
    pub truth: Vec<f64>,
    pub summary: RunSummary,
    /// Noisy sweep pairs (full runs only).
    pub sweeps: Option<Vec<(MeasurementSweep, MeasurementSweep)>>,
}

/// One row of `l_curve.txt`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LadderRow {
    pub lambda: f64,
    pub residual: f64,
    pub regularizer: f64,
    pub l2_error: L2Error,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MeshInfo {
    pub radial_resolution: usize,
    pub degree: usize,
    pub n_vertices: usize,
    pub n_triangles: usize,
    pub n_dofs: usize,
    pub n_interior_dofs: usize,
    pub edge_min: f64,
    pub edge_mean: f64,
    pub edge_max: f64,
    pub area: f64,
    pub area_error: f64,
}

/// Run according to `config.mode`, recording a failure record on error.
pub fn run(config: &ExperimentConfig) -> PipelineResult<RunOutcome> {
    match config.mode {
        PipelineMode::Full => run_full(config),
        PipelineMode::InversionOnly => run_inversion_only(config),
    }
}

pub fn run_full(config: &ExperimentConfig) -> PipelineResult<RunOutcome> {
    if config.mode != PipelineMode::Full {
        return Err(PipelineError { stage: Stage::Config, source: Error::Config("run_full needs mode = \"full\"".into()) });
    }
    guarded(config, || with_threads(config.execution.threads, || execute(config)))
}

pub fn run_inversion_only(config: &ExperimentConfig) -> PipelineResult<RunOutcome> {
    if config.mode != PipelineMode::InversionOnly {
        return Err(PipelineError {
            stage: Stage::Config,
            source: Error::Config("run_inversion_only needs mode = \"inversion_only\"".into()),
        });
    }
    guarded(config, || with_threads(config.execution.threads, || execute(config)))
}

/// Tikhonov or TV reconstructions over `inversion.lambdas` on one data set;
/// writes `l_curve.txt` with residual, regularizer and L² error per λ.
pub fn sweep_lambda(config: &ExperimentConfig) -> PipelineResult<Vec<LadderRow>> {
    guarded(config, || {
        with_threads(config.execution.threads, || {
            let hash = config.hash();
            if config.inversion.lambdas.is_empty() {
                return Err(Error::Config("sweep-lambda needs inversion.lambdas".into())).at(Stage::Config);
            }
            let mut lambdas = config.inversion.lambdas.clone();
            lambdas.sort_by(f64::total_cmp);
            prepare_dir(&config.output_dir, &hash)?;
            write_config(config, &hash)?;
            let (pg, data) = acquire(config, &hash)?;
            let exec = config.execution();
            let op = assemble_e_with(&pg, &data.fourier.xis, exec);
            let stack = RegularizerStack::new(&pg);
            let results = match config.inversion.method {
                Method::Tikhonov => tikhonov_ladder(&op, &data.fourier, &lambdas, &stack, config.inversion.q_mode, exec),
                Method::Tv => map_indexed(exec, lambdas.len(), |k| {
                    tv_solve_mode(&op, &data.fourier, lambdas[k], &stack, &config.inversion.tv, config.inversion.q_mode)
                })
                .into_iter()
                .collect(),
            }
            .at(Stage::Inversion)?;
            let rows = results
                .iter()
                .map(|r| {
                    Ok(LadderRow {
                        lambda: r.lambda,
                        residual: r.residual,
                        regularizer: r.regularizer,
                        l2_error: l2_errors(&r.q_pixels, &config.potential, &pg)?,
                    })
                })
                .collect::<crate::Result<Vec<_>>>()
                .at(Stage::Metrics)?;
            let mut text = header_lines(&hash);
            text.push_str("# lambda residual regularizer l2_abs l2_rel\n");
            for r in &rows {
                text.push_str(&format!(
                    "{:e} {:e} {:e} {:e} {:e}\n",
                    r.lambda, r.residual, r.regularizer, r.l2_error.absolute, r.l2_error.relative
                ));
            }
            write_file(&config.output_dir, LCURVE_FILE, &text)?;
            Ok(rows)
        })
    })
}

/// Exact Fourier data of the configured potential on the configured
/// frequency grid; written to `oracle_data.txt`.
pub fn oracle_dump(config: &ExperimentConfig) -> PipelineResult<FourierData> {
    guarded(config, || {
        with_threads(config.execution.threads, || {
            let hash = config.hash();
            prepare_dir(&config.output_dir, &hash)?;
            write_config(config, &hash)?;
            let (data, warnings) = oracle_data(config)?;
            let header = format!("{}oracle_order {}\noracle_warnings {warnings}", header_text(&hash), config.data.oracle_order);
            write_file(&config.output_dir, ORACLE_FILE, &data.to_text(&header))?;
            Ok(data)
        })
    })
}

/// Mesh and FE-space statistics; writes nothing.
pub fn mesh_info(config: &ExperimentConfig) -> PipelineResult<MeshInfo> {
    let mesh = build_disk_mesh(config.mesh.radial_resolution).at(Stage::Mesh)?;
    let (edge_min, edge_mean, edge_max) = mesh.edge_length_stats();
    let area = mesh.total_area();
    let (n_vertices, n_triangles) = (mesh.n_vertices(), mesh.n_triangles());
    let space = FESpace::new(mesh, config.mesh.degree).at(Stage::Mesh)?;
    Ok(MeshInfo {
        radial_resolution: config.mesh.radial_resolution,
        degree: config.mesh.degree,
        n_vertices,
        n_triangles,
        n_dofs: space.n_dofs(),
        n_interior_dofs: space.n_interior(),
        edge_min,
        edge_mean,
        edge_max,
        area,
        area_error: (area - std::f64::consts::PI).abs(),
    })
}

/// Check that every hashed output in `dir` carries the same config hash;
/// returns it (None for a directory without outputs).
pub fn verify_run_dir(dir: &Path) -> crate::Result<Option<String>> {
    let mut seen: Option<String> = None;
    for name in OUTPUT_FILES {
        if let Some(h) = file_hash(&dir.join(name))? {
            match &seen {
                Some(s) if *s != h => {
                    return Err(Error::Provenance { dir: dir.display().to_string(), found: h, expected: s.clone() });
                }
                _ => seen = Some(h),
            }
        }
    }
    Ok(seen)
}

/// Config hash recorded in an output file, if it exists and carries one.
pub fn file_hash(path: &Path) -> crate::Result<Option<String>> {
    let bytes = match fs::read(path) {
        Ok(b) => b,
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(None),
        Err(e) => return Err(e.into()),
    };
    if path.extension().is_some_and(|e| e == "json") {
        let v: serde_json::Value = serde_json::from_slice(&bytes).map_err(|e| Error::Parse(format!("{}: {e}", path.display())))?;
        return Ok(v.get("config_hash").and_then(|h| h.as_str()).map(String::from));
    }
    // Header lines only; the PPM raster follows its text header.
    let head = &bytes[..bytes.len().min(4096)];
    let text = String::from_utf8_lossy(head);
    Ok(text
        .lines()
        .filter_map(|l| l.strip_prefix('#'))
        .find_map(|l| l.trim().strip_prefix("config_hash ").map(|h| h.trim().to_string())))
}

fn guarded<T>(config: &ExperimentConfig, body: impl FnOnce() -> PipelineResult<T>) -> PipelineResult<T> {
    let out = config.validate().at(Stage::Config).and_then(|_| body());
    if let Err(e) = &out {
        // A provenance refusal must not write into the foreign directory.
        if !matches!(e.source, Error::Provenance { .. }) {
            let record = FailureRecord { config_hash: config.hash(), stage: e.stage, message: e.source.to_string() };
            if fs::create_dir_all(&config.output_dir).is_ok() {
                let json = serde_json::to_string_pretty(&record).expect("record serializes");
                let _ = fs::write(config.output_dir.join(FAILURE_FILE), json + "\n");
            }
        }
    }
    out
}

fn header_text(hash: &str) -> String {
    format!("config_hash {hash}\n")
}

fn header_lines(hash: &str) -> String {
    format!("# config_hash {hash}\n")
}

fn prepare_dir(dir: &Path, hash: &str) -> PipelineResult<()> {
    fs::create_dir_all(dir).at(Stage::Output)?;
    for name in OUTPUT_FILES {
        if let Some(found) = file_hash(&dir.join(name)).at(Stage::Output)? {
            if found != hash {
                return Err(Error::Provenance { dir: dir.display().to_string(), found, expected: hash.to_string() }).at(Stage::Output);
            }
        }
    }
    match fs::remove_file(dir.join(FAILURE_FILE)) {
        Err(e) if e.kind() != std::io::ErrorKind::NotFound => Err(e).at(Stage::Output),
        _ => Ok(()),
    }
}

fn write_file(dir: &Path, name: &str, text: &str) -> PipelineResult<()> {
    fs::write(dir.join(name), text).at(Stage::Output)
}

fn write_config(config: &ExperimentConfig, hash: &str) -> PipelineResult<()> {
    write_file(&config.output_dir, CONFIG_FILE, &format!("{}{}", header_lines(hash), config.to_toml()))
}

struct Acquired {
    fourier: FourierData,
    sweeps: Option<Vec<(MeasurementSweep, MeasurementSweep)>>,
    source_hash: Option<String>,
    oracle_warnings: usize,
}

fn oracle_data(config: &ExperimentConfig) -> PipelineResult<(FourierData, usize)> {
    let f = &config.frequency;
    let grid = build_frequency_grid(f.n_r, f.n_theta, f.r_max, f.half_plane).at(Stage::Config)?;
    let xis = grid.points();
    let values = map_indexed(config.execution(), xis.len(), |k| fourier_oracle(&config.potential, xis[k], config.data.oracle_order));
    let warnings = values.iter().filter(|v| v.warning.is_some()).count();
    Ok((FourierData { xis, values: values.into_iter().map(|v| v.value).collect() }, warnings))
}

fn pair_archive(sweeps: Vec<MeasurementSweep>) -> crate::Result<Vec<(MeasurementSweep, MeasurementSweep)>> {
    if sweeps.len() % 2 != 0 {
        return Err(Error::Parse(format!("sweep archive holds {} sweeps; expected (plus, minus) pairs", sweeps.len())));
    }
    let mut it = sweeps.into_iter();
    let mut pairs = Vec::new();
    while let (Some(p), Some(m)) = (it.next(), it.next()) {
        if p.sign != Sign::Plus || m.sign != Sign::Minus || p.frequency != m.frequency {
            return Err(Error::Parse(format!("sweep archive record at xi = {:?} is not a (plus, minus) pair", p.frequency.xi)));
        }
        pairs.push((p, m));
    }
    Ok(pairs)
}

/// Pixel grid and Fourier data for the configured mode; full runs write
/// the sweep archive as soon as it exists.
fn acquire(config: &ExperimentConfig, hash: &str) -> PipelineResult<(PixelGrid, Acquired)> {
    let px = &config.pixels;
    let pg = build_pixel_grid(px.nx, px.ny, px.bbox).at(Stage::Config)?;
    let acquired = match (config.mode, config.data.source) {
        (PipelineMode::Full, _) => {
            let f = &config.frequency;
            let grid = build_frequency_grid(f.n_r, f.n_theta, f.r_max, f.half_plane).at(Stage::Config)?;
            let eps = config.epsilon_grid().at(Stage::Config)?;
            let mesh = build_disk_mesh(config.mesh.radial_resolution).at(Stage::Mesh)?;
            let space = FESpace::new(mesh, config.mesh.degree).at(Stage::Mesh)?;
            let problem = config.problem_config();
            let clean = sweep_frequencies(&grid.points(), &eps, &space, &problem, config.problem.data_path, config.execution())
                .at(Stage::Forward)?;
            let noisy = add_noise_all(&clean, &config.noise);
            let flat: Vec<MeasurementSweep> = noisy.iter().flat_map(|(p, m)| [p.clone(), m.clone()]).collect();
            write_file(&config.output_dir, SWEEP_FILE, &write_sweep_archive(&flat, &header_text(hash)))?;
            let fourier = fourier_data(&noisy, &config.sg, true).at(Stage::Differentiation)?;
            Acquired { fourier, sweeps: Some(noisy), source_hash: None, oracle_warnings: 0 }
        }
        (PipelineMode::InversionOnly, DataSource::Oracle) => {
            let (clean, warnings) = oracle_data(config)?;
            config.noise.validate().at(Stage::Noise)?;
            let fourier = add_fourier_noise(&clean, &config.noise);
            Acquired { fourier, sweeps: None, source_hash: None, oracle_warnings: warnings }
        }
        (PipelineMode::InversionOnly, DataSource::Archive) => {
            let path = config.data.archive.as_ref().ok_or_else(|| Error::Config("data.archive is not set".into())).at(Stage::Config)?;
            let text = fs::read_to_string(path).at(Stage::Config)?;
            let source_hash = file_hash(path).at(Stage::Config)?;
            let pairs = read_sweep_archive(&text).and_then(pair_archive).at(Stage::Config)?;
            let fourier = fourier_data(&pairs, &config.sg, true).at(Stage::Differentiation)?;
            Acquired { fourier, sweeps: Some(pairs), source_hash, oracle_warnings: 0 }
        }
        (PipelineMode::InversionOnly, DataSource::Sweeps) => {
            return Err(Error::Config("inversion_only needs an oracle or archive data source".into())).at(Stage::Config);
        }
    };
    Ok((pg, acquired))
}

fn execute(config: &ExperimentConfig) -> PipelineResult<RunOutcome> {
    let hash = config.hash();
    let dir = config.output_dir.clone();
    prepare_dir(&dir, &hash)?;
    write_config(config, &hash)?;
    let (pg, data) = acquire(config, &hash)?;
    let header = header_text(&hash);
    write_file(&dir, FOURIER_FILE, &data.fourier.to_text(&header))?;

    let exec = config.execution();
    let op = assemble_e_with(&pg, &data.fourier.xis, exec);
    let stack = RegularizerStack::new(&pg);
    let inv = &config.inversion;
    let reconstruction = match inv.method {
        Method::Tikhonov => tikhonov_solve_mode(&op, &data.fourier, inv.lambda, &stack, inv.q_mode),
        Method::Tv => tv_solve_mode(&op, &data.fourier, inv.lambda, &stack, &inv.tv, inv.q_mode),
    }
    .at(Stage::Inversion)?;

    let truth = config.potential.sample_on(&pg);
    let summary = summarize(config, &hash, &pg, &data, &reconstruction, &truth).at(Stage::Metrics)?;

    write_file(&dir, RECONSTRUCTION_FILE, &reconstruction.to_pixel_table(&pg, &header))?;
    let truth_table = ReconstructionResult {
        q_pixels: truth.clone(),
        q_imag: None,
        lambda: 0.0,
        method: inv.method,
        residual: 0.0,
        regularizer: 0.0,
        normal_residual: 0.0,
        beta: None,
        iterations: Vec::new(),
    }
    .to_pixel_table(&pg, &format!("{header}potential {}", serde_json::to_string(&config.potential).expect("serializes")));
    write_file(&dir, TRUTH_FILE, &truth_table)?;
    let json = serde_json::to_string_pretty(&summary).expect("summary serializes");
    write_file(&dir, SUMMARY_FILE, &(json + "\n"))?;
    if config.execution.images {
        // Best effort: a raster failure never fails the run.
        let _ = fs::write(dir.join(IMAGE_FILE), tripanel_ppm(&pg, &truth, &reconstruction.q_pixels, &hash));
    }
    Ok(RunOutcome {
        dir,
        config_hash: hash,
        pixels: pg,
        fourier: data.fourier,
        reconstruction,
        truth,
        summary,
        sweeps: data.sweeps,
    })
}

fn argmax(pg: &PixelGrid, q: &[f64]) -> [f64; 2] {
    let k = q.iter().enumerate().fold(0, |best, (i, v)| if *v > q[best] { i } else { best });
    pg.centers[k]
}

fn newton_stats(pairs: &[(MeasurementSweep, MeasurementSweep)]) -> NewtonStats {
    let (mut solves, mut failures, mut total, mut max) = (0, 0, 0, 0);
    for s in pairs.iter().flat_map(|(p, m)| [p, m]) {
        for (e, (v, &it)) in s.eps.iter().zip(s.clean.iter().zip(&s.newton_iterations)) {
            if *e == 0.0 {
                continue;
            }
            solves += 1;
            if v.is_none() {
                failures += 1;
            } else {
                total += it;
                max = max.max(it);
            }
        }
    }
    let ok = solves - failures;
    NewtonStats { solves, failures, mean_iterations: if ok > 0 { total as f64 / ok as f64 } else { 0.0 }, max_iterations: max }
}

/// Plateau fractions and the 0.5-level Jaccard index.
pub fn plateau_stats(q: &[f64], truth: &[f64]) -> PlateauStats {
    let n = q.len().max(1) as f64;
    let near_zero = q.iter().filter(|v| v.abs() <= PLATEAU_BAND).count() as f64 / n;
    let near_one = q.iter().filter(|v| (*v - 1.0).abs() <= PLATEAU_BAND).count() as f64 / n;
    let (mut inter, mut union) = (0usize, 0usize);
    for (a, b) in q.iter().zip(truth) {
        let (x, y) = (*a > 0.5, *b > 0.5);
        inter += (x && y) as usize;
        union += (x || y) as usize;
    }
    PlateauStats { near_zero, near_one, jaccard: if union > 0 { inter as f64 / union as f64 } else { 1.0 } }
}

fn summarize(
    config: &ExperimentConfig,
    hash: &str,
    pg: &PixelGrid,
    data: &Acquired,
    rec: &ReconstructionResult,
    truth: &[f64],
) -> crate::Result<RunSummary> {
    let l2_error = l2_errors(&rec.q_pixels, &config.potential, pg)?;
    let a = argmax(pg, &rec.q_pixels);
    let t = argmax(pg, truth);
    let flat: Option<Vec<MeasurementSweep>> =
        data.sweeps.as_ref().map(|p| p.iter().flat_map(|(a, b)| [a.clone(), b.clone()]).collect());
    Ok(RunSummary {
        config_hash: hash.to_string(),
        mode: config.mode,
        data_source: config.data.source,
        source_hash: data.source_hash.clone(),
        potential: config.potential,
        n_frequencies: data.fourier.len(),
        n_pixels: pg.len(),
        reconstruction: rec.metadata(),
        l2_error,
        argmax: a,
        truth_argmax: t,
        argmax_distance: ((a[0] - t[0]).powi(2) + (a[1] - t[1]).powi(2)).sqrt(),
        snr_db: flat.as_deref().map(snr_db).filter(|v| v.is_finite()),
        newton: data.sweeps.as_deref().map(newton_stats),
        plateau: config.potential.is_indicator().then(|| plateau_stats(&rec.q_pixels, truth)),
        oracle_warnings: data.oracle_warnings,
    })
}

/// Truth, reconstruction and |difference| side by side on a shared colour
/// scale (the difference uses its own); cells outside the disk are grey.
pub fn tripanel_ppm(pg: &PixelGrid, truth: &[f64], rec: &[f64], hash: &str) -> Vec<u8> {
    let scale = (300 / pg.nx.max(1)).max(1);
    let (w, h) = (pg.nx * scale, pg.ny * scale);
    let gap = 4;
    let width = 3 * w + 2 * gap;
    let diff: Vec<f64> = truth.iter().zip(rec).map(|(a, b)| (a - b).abs()).collect();
    let lo = truth.iter().chain(rec).copied().fold(f64::INFINITY, f64::min);
    let hi = truth.iter().chain(rec).copied().fold(f64::NEG_INFINITY, f64::max);
    let dmax = diff.iter().copied().fold(0.0, f64::max);
    let panels: [(&[f64], f64, f64); 3] = [(truth, lo, hi), (rec, lo, hi), (&diff, 0.0, dmax)];
    let mut out = format!("P6\n# config_hash {hash}\n{width} {h}\n255\n").into_bytes();
    let mut img = vec![255u8; width * h * 3];
    for (p, (values, lo, hi)) in panels.iter().enumerate() {
        let span = if hi > lo { hi - lo } else { 1.0 };
        for row in 0..pg.ny {
            for col in 0..pg.nx {
                let rgb = match pg.position_of(col, row) {
                    Some(k) => colormap(((values[k] - lo) / span).clamp(0.0, 1.0)),
                    None => [128, 128, 128],
                };
                for dy in 0..scale {
                    // Image rows run top to bottom, grid rows bottom to top.
                    let y = (pg.ny - 1 - row) * scale + dy;
                    for dx in 0..scale {
                        let x = p * (w + gap) + col * scale + dx;
                        img[(y * width + x) * 3..][..3].copy_from_slice(&rgb);
                    }
                }
            }
        }
    }
    out.extend_from_slice(&img);
    out
}

/// Blue → white → red.
fn colormap(t: f64) -> [u8; 3] {
    let c = |v: f64| (v.clamp(0.0, 1.0) * 255.0).round() as u8;
    if t < 0.5 {
        let s = 2.0 * t;
        [c(s), c(s), 255]
    } else {
        let s = 2.0 * (1.0 - t);
        [255, c(s), c(s)]
    }
}

/// Oracle Fourier data of the configured potential with the configured noise.
pub fn noisy_oracle(config: &ExperimentConfig) -> crate::Result<FourierData> {
    let (clean, _) = oracle_data(config).map_err(|e| e.source)?;
    Ok(add_fourier_noise(&clean, &config.noise))
}
