//! Experiment configuration and the end-to-end runs behind the command line.

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::archive::{ArchiveHeader, ArchiveWriter, ChainArchive};
use crate::baselines::{
    field_values, summarize_streamed, tikhonov_solve, PosteriorSummary, ReconstructionReport,
    DEFAULT_TIKHONOV_LAMBDA,
};
use crate::error::{Error, Result};
use crate::forward::{
    add_noise, build_radon_h, generate_phantom, pointwise_h_1d, ray_sums, uniform_times, Signal, SinogramGeometry,
};
use crate::hierarchy::{Hierarchy, HierarchyConfig};
use crate::image::Image;
use crate::inference::{run_mwg, ChainEvent, MarginalRoute, MeasurementModel, MwgSettings, PcnParams, Posterior};
use crate::operators::LayerParams;
use crate::rng::{stream, Stream};
use crate::spectral::{BasisSpec, SpectralField};

pub const SCHEMA_VERSION: u32 = 1;
pub const DETERMINISTIC_ENV: &str = "MLGP_DETERMINISTIC";

/// Values held in memory at once while summarizing chains.
const SUMMARY_BLOCK_VALUES: usize = 1 << 24;

/// Whether `MLGP_DETERMINISTIC=1` is set.
pub fn deterministic() -> bool {
    std::env::var(DETERMINISTIC_ENV).is_ok_and(|v| v == "1")
}

/// Serial dense kernels under the deterministic flag or on a single core.
pub fn configure_parallelism() {
    let single = std::thread::available_parallelism().map_or(true, |n| n.get() == 1);
    if deterministic() || single {
        faer::set_global_parallelism(faer::Par::Seq);
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub schema_version: u32,
    pub name: String,
    pub seed: u64,
    pub basis: BasisConfig,
    pub hierarchy: HierarchySection,
    pub forward: ForwardConfig,
    pub mcmc: McmcConfig,
    #[serde(default)]
    pub tikhonov: TikhonovConfig,
    #[serde(default)]
    pub output: OutputConfig,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BasisConfig {
    pub dim: usize,
    pub n: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HierarchySection {
    pub hyper_layers: usize,
    pub kappa0: f64,
    /// One entry shared by every layer, or one per layer from the top.
    pub layers: Vec<LayerScale>,
    #[serde(default)]
    pub fine_grid: Option<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase", deny_unknown_fields)]
pub enum LayerScale {
    Sigma(f64),
    Beta(f64),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum ForwardConfig {
    Pointwise {
        signal: Signal,
        points: usize,
        noise_sd: f64,
    },
    Radon {
        truth: TruthImage,
        image_size: usize,
        angles: usize,
        /// Detector bins per angle; defaults to the image size.
        #[serde(default)]
        offsets: Option<usize>,
        /// Multiplies every ray integral; defaults to the image size (pixel units).
        #[serde(default)]
        ray_scale: Option<f64>,
        noise_sd: f64,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", deny_unknown_fields)]
pub enum TruthImage {
    SheppLogan,
    /// PGM file, relative to the configuration file.
    Pgm(PathBuf),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct McmcConfig {
    pub iterations: u64,
    /// Defaults to 10% of the iterations.
    #[serde(default)]
    pub burn_in: Option<u64>,
    #[serde(default = "default_thinning")]
    pub thinning: u64,
    #[serde(default)]
    pub pcn: PcnParams,
    #[serde(default)]
    pub route: MarginalRoute,
}

fn default_thinning() -> u64 {
    100
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TikhonovConfig {
    pub lambda: f64,
}

impl Default for TikhonovConfig {
    fn default() -> Self {
        Self {
            lambda: DEFAULT_TIKHONOV_LAMBDA,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputConfig {
    /// Evaluation grid; defaults to the measurement grid in 1-D and the image size in 2-D.
    #[serde(default)]
    pub grid: Option<usize>,
    #[serde(default)]
    pub sixteen_bit: bool,
}

fn config_error(e: Error) -> Error {
    match e {
        Error::InvalidParameter(msg) | Error::InvalidBasis(msg) | Error::DimensionMismatch(msg) => {
            Error::Config(msg)
        }
        other => other,
    }
}

impl ExperimentConfig {
    /// Parses and validates; a relative PGM path is resolved against the file's directory.
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)?;
        let mut cfg = Self::from_json(&text)?;
        if let ForwardConfig::Radon {
            truth: TruthImage::Pgm(p),
            ..
        } = &mut cfg.forward
        {
            if p.is_relative() {
                *p = path.parent().unwrap_or(Path::new(".")).join(&*p);
            }
            if !p.exists() {
                return Err(Error::Config(format!("truth image {} does not exist", p.display())));
            }
        }
        Ok(cfg)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: Self = serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.schema_version != SCHEMA_VERSION {
            return Err(Error::Config(format!(
                "schema_version {} is not supported (expected {SCHEMA_VERSION})",
                self.schema_version
            )));
        }
        let basis = self.basis_spec()?;
        self.hierarchy_config()?;
        self.settings().validate().map_err(config_error)?;
        match &self.forward {
            ForwardConfig::Pointwise { points, noise_sd, .. } => {
                if basis.dim() != 1 {
                    return Err(Error::Config("pointwise measurements need dim = 1".into()));
                }
                if *points == 0 || !(*noise_sd > 0.0) {
                    return Err(Error::Config("pointwise model needs points > 0 and noise_sd > 0".into()));
                }
            }
            ForwardConfig::Radon {
                image_size,
                angles,
                offsets,
                ray_scale,
                noise_sd,
                ..
            } => {
                if ray_scale.is_some_and(|s| !(s > 0.0 && s.is_finite())) {
                    return Err(Error::Config("ray_scale must be positive".into()));
                }
                if basis.dim() != 2 {
                    return Err(Error::Config("ray measurements need dim = 2".into()));
                }
                if *image_size == 0 || *angles == 0 || *offsets == Some(0) || !(*noise_sd > 0.0) {
                    return Err(Error::Config(
                        "ray model needs positive image_size, angles, offsets and noise_sd".into(),
                    ));
                }
            }
        }
        if !(self.tikhonov.lambda >= 0.0) {
            return Err(Error::Config("tikhonov lambda must be >= 0".into()));
        }
        if self.grid_size() < 2 * basis.n() + 1 {
            return Err(Error::Config(format!(
                "evaluation grid {} cannot resolve n = {}",
                self.grid_size(),
                basis.n()
            )));
        }
        Ok(())
    }

    /// Hex SHA-256 of the canonical JSON form.
    pub fn hash(&self) -> String {
        let bytes = serde_json::to_vec(self).expect("configuration serializes");
        Sha256::digest(&bytes).iter().map(|b| format!("{b:02x}")).collect()
    }

    pub fn basis_spec(&self) -> Result<BasisSpec> {
        BasisSpec::new(self.basis.dim, self.basis.n).map_err(config_error)
    }

    pub fn hierarchy_config(&self) -> Result<HierarchyConfig> {
        let h = &self.hierarchy;
        let count = h.hyper_layers + 1;
        let scales = match h.layers.len() {
            1 => vec![h.layers[0]; count],
            len if len == count => h.layers.clone(),
            len => {
                return Err(Error::Config(format!(
                    "{len} layer scales for {count} layers (give 1 or {count})"
                )))
            }
        };
        let dim = self.basis.dim;
        let layers = scales
            .into_iter()
            .map(|s| match s {
                LayerScale::Sigma(v) => LayerParams::from_sigma(dim, v),
                LayerScale::Beta(v) => LayerParams::new(v),
            })
            .collect::<Result<Vec<_>>>()
            .map_err(config_error)?;
        HierarchyConfig::new(self.basis_spec()?, layers, h.kappa0, h.fine_grid).map_err(config_error)
    }

    pub fn settings(&self) -> MwgSettings {
        let m = &self.mcmc;
        MwgSettings {
            iterations: m.iterations,
            burn_in: m.burn_in.unwrap_or(m.iterations / 10),
            thinning: m.thinning,
            pcn: m.pcn,
        }
    }

    /// Points of the evaluation grid per axis.
    pub fn grid_size(&self) -> usize {
        self.output.grid.unwrap_or(match &self.forward {
            ForwardConfig::Pointwise { points, .. } => *points,
            ForwardConfig::Radon { image_size, .. } => *image_size,
        })
    }

    /// Replaces the seed and/or iteration count; burn-in follows the default rule
    /// unless it was set explicitly and still fits.
    pub fn with_overrides(mut self, seed: Option<u64>, iterations: Option<u64>) -> Result<Self> {
        if let Some(s) = seed {
            self.seed = s;
        }
        if let Some(it) = iterations {
            self.mcmc.iterations = it;
            if self.mcmc.burn_in.is_some_and(|b| b > it) {
                self.mcmc.burn_in = None;
            }
        }
        self.validate()?;
        Ok(self)
    }
}

/// Everything derived from a configuration: truth, measurements and operators.
#[derive(Debug, Clone)]
pub struct Problem {
    pub config: ExperimentConfig,
    pub basis: BasisSpec,
    pub model: MeasurementModel,
    /// Clean forward map of the truth, before noise.
    pub clean: Vec<f64>,
    /// Truth on the evaluation grid.
    pub truth: Vec<f64>,
    pub geometry: Option<SinogramGeometry>,
    pub times: Option<Vec<f64>>,
}

impl Problem {
    pub fn build(config: &ExperimentConfig) -> Result<Self> {
        config.validate()?;
        let basis = config.basis_spec()?;
        let grid = config.grid_size();
        match &config.forward {
            ForwardConfig::Pointwise {
                signal,
                points,
                noise_sd,
            } => {
                let times = uniform_times(*points);
                let clean = signal.sample(&times);
                let y = add_noise(&clean, *noise_sd, config.seed)?;
                let h = pointwise_h_1d(&times, basis)?;
                Ok(Self {
                    config: config.clone(),
                    basis,
                    model: MeasurementModel::iid(basis, h, *noise_sd, y)?,
                    clean,
                    truth: signal.sample(&uniform_times(grid)),
                    geometry: None,
                    times: Some(times),
                })
            }
            ForwardConfig::Radon {
                truth,
                image_size,
                angles,
                offsets,
                ray_scale,
                noise_sd,
            } => {
                let image = match truth {
                    TruthImage::SheppLogan => generate_phantom(*image_size)?,
                    TruthImage::Pgm(path) => {
                        let img = Image::read_pgm(path)?;
                        if img.size() != *image_size {
                            return Err(Error::Config(format!(
                                "{} is {}x{0}, config says {image_size}",
                                path.display(),
                                img.size()
                            )));
                        }
                        img
                    }
                };
                let geometry =
                    SinogramGeometry::uniform(
                    *angles,
                    offsets.unwrap_or(*image_size),
                    ray_scale.unwrap_or(*image_size as f64),
                )?;
                let clean = ray_sums(&image, &geometry);
                let y = add_noise(&clean, *noise_sd, config.seed)?;
                let h = build_radon_h(&geometry, basis)?;
                let truth = if grid == *image_size {
                    image.pixels().to_vec()
                } else {
                    return Err(Error::Config("2-D evaluation grid must equal the image size".into()));
                };
                Ok(Self {
                    config: config.clone(),
                    basis,
                    model: MeasurementModel::iid(basis, h, *noise_sd, y)?,
                    clean,
                    truth,
                    geometry: Some(geometry),
                    times: None,
                })
            }
        }
    }

    pub fn posterior(&self) -> Result<Posterior> {
        Ok(Posterior::new(self.config.hierarchy_config()?, &self.model)?.with_route(self.config.mcmc.route))
    }

    /// Field values on the evaluation grid from real coordinates.
    pub fn render(&self, coords: &[f64]) -> Result<Vec<f64>> {
        field_values(&SpectralField::from_real_coords(self.basis, coords)?, self.config.grid_size())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChainSummary {
    pub chain: u32,
    pub samples: u64,
    pub acceptance: Option<f64>,
    pub final_step: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub name: String,
    pub config_hash: String,
    pub seed: u64,
    pub iterations: u64,
    pub chains: Vec<ChainSummary>,
    /// Absent when no sample was retained.
    pub posterior_mean: Option<ReconstructionReport>,
    pub tikhonov: ReconstructionReport,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub runtime_seconds: Option<f64>,
}

fn runtime(start: Instant) -> Option<f64> {
    (!deterministic()).then(|| start.elapsed().as_secs_f64())
}

fn write_json(path: &Path, value: &impl Serialize) -> Result<()> {
    let mut out = BufWriter::new(File::create(path)?);
    serde_json::to_writer_pretty(&mut out, value)?;
    out.write_all(b"\n")?;
    out.flush()?;
    Ok(())
}

fn csv_writer(path: &Path) -> Result<csv::Writer<File>> {
    csv::Writer::from_path(path).map_err(csv_error)
}

fn csv_error(e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::Io(io),
        other => Error::Archive(format!("csv: {other:?}")),
    }
}

fn chain_path(dir: &Path, chain: u32) -> PathBuf {
    dir.join(format!("chain-{chain}.mlgp"))
}

/// Runs `chains` independent chains and writes archives, acceptance logs and
/// the summary outputs into `out`.
pub fn run_mcmc(config: &ExperimentConfig, out: &Path, chains: u32) -> Result<RunReport> {
    if chains == 0 {
        return Err(Error::Config("at least one chain is required".into()));
    }
    let start = Instant::now();
    fs::create_dir_all(out)?;
    let problem = Problem::build(config)?;
    let posterior = problem.posterior()?;
    let settings = config.settings();
    let hash = config.hash();

    let results: Vec<Result<ChainSummary>> = std::thread::scope(|scope| {
        let handles: Vec<_> = (0..chains)
            .map(|chain| {
                let (posterior, hash) = (&posterior, &hash);
                scope.spawn(move || run_chain(config, posterior, &settings, hash, out, chain))
            })
            .collect();
        handles.into_iter().map(|h| h.join().expect("chain thread panicked")).collect()
    });
    let summaries = results.into_iter().collect::<Result<Vec<_>>>()?;

    let posterior_mean = if summaries.iter().any(|s| s.samples > 0) {
        Some(write_summary(&problem, out)?.0)
    } else {
        None
    };
    let tikhonov = write_tikhonov(&problem, out)?;
    let report = RunReport {
        name: config.name.clone(),
        config_hash: hash,
        seed: config.seed,
        iterations: settings.iterations,
        chains: summaries,
        posterior_mean,
        tikhonov,
        runtime_seconds: runtime(start),
    };
    write_json(&out.join("report.json"), &report)?;
    Ok(report)
}

fn run_chain(
    config: &ExperimentConfig,
    posterior: &Posterior,
    settings: &MwgSettings,
    hash: &str,
    out: &Path,
    chain: u32,
) -> Result<ChainSummary> {
    let header = ArchiveHeader {
        config_hash: hash.to_string(),
        name: config.name.clone(),
        seed: config.seed,
        chain,
        dim: config.basis.dim,
        n: config.basis.n,
        coefficients: posterior.hierarchy().basis().len(),
        hyper_layers: config.hierarchy.hyper_layers,
        iterations: settings.iterations,
        burn_in: settings.burn_in,
        thinning: settings.thinning,
    };
    let mut archive = ArchiveWriter::create(&chain_path(out, chain), &header)?;
    let mut log = csv_writer(&out.join(format!("acceptance-{chain}.csv")))?;
    log.write_record(["iteration", "acceptance", "step", "phase"]).map_err(csv_error)?;
    let mut record = Vec::with_capacity(header.record_len());
    let report = run_mwg(posterior, settings, config.seed, chain, |event| {
        match event {
            ChainEvent::Sample(s) => {
                record.clear();
                record.extend_from_slice(&s.wbar);
                record.extend_from_slice(&s.last);
                archive.push(&record)?;
            }
            ChainEvent::Epoch {
                iteration,
                acceptance,
                step,
                burn_in,
            } => {
                let phase = if burn_in { "burn-in" } else { "sampling" };
                log.write_record([iteration.to_string(), acceptance.to_string(), step.to_string(), phase.into()])
                    .map_err(csv_error)?;
                log.flush()?;
            }
        }
        Ok(())
    })?;
    archive.finish()?;
    log.flush()?;
    Ok(ChainSummary {
        chain,
        samples: report.samples,
        acceptance: report.acceptance,
        final_step: report.step,
    })
}

/// Archives in `dir`, in chain order, checked against the configuration hash.
pub fn read_archives(config: &ExperimentConfig, dir: &Path) -> Result<Vec<ChainArchive>> {
    let mut paths: Vec<(u32, PathBuf)> = fs::read_dir(dir)?
        .filter_map(|e| e.ok())
        .filter_map(|e| {
            let name = e.file_name().to_string_lossy().to_string();
            let chain = name.strip_prefix("chain-")?.strip_suffix(".mlgp")?.parse().ok()?;
            Some((chain, e.path()))
        })
        .collect();
    paths.sort();
    if paths.is_empty() {
        return Err(Error::Archive(format!("no chain archives in {}", dir.display())));
    }
    let hash = config.hash();
    paths
        .into_iter()
        .map(|(_, p)| {
            let a = ChainArchive::read(&p)?;
            if a.header.config_hash != hash {
                return Err(Error::Config(format!(
                    "{} was produced by a different configuration",
                    p.display()
                )));
            }
            Ok(a)
        })
        .collect()
}

/// Pointwise posterior summary of `u_J` over all archived samples in `dir`.
pub fn summarize(problem: &Problem, dir: &Path) -> Result<PosteriorSummary> {
    let archives = read_archives(&problem.config, dir)?;
    let samples: Vec<&[f64]> = archives.iter().flat_map(|a| a.last_layers()).collect();
    if samples.is_empty() {
        return Err(Error::EmptyChain);
    }
    let points = problem.truth.len();
    summarize_streamed(samples.len(), points, SUMMARY_BLOCK_VALUES, |i| problem.render(samples[i]))
}

/// Pointwise means of the hyper-layer fields `u_0 .. u_{J-1}`.
fn hyper_layer_means(problem: &Problem, archives: &[ChainArchive]) -> Result<Vec<Vec<f64>>> {
    let hierarchy = Hierarchy::new(problem.config.hierarchy_config()?)?;
    let layers = problem.config.hierarchy.hyper_layers;
    let points = problem.truth.len();
    let mut means = vec![vec![0.0; points]; layers];
    let mut count = 0usize;
    for wbar in archives.iter().flat_map(|a| a.wbars()) {
        count += 1;
        for (j, u) in hierarchy.transform_coords(wbar)?.iter().enumerate() {
            for (m, v) in means[j].iter_mut().zip(problem.render(u)?) {
                *m += v;
            }
        }
    }
    for m in means.iter_mut().flatten() {
        *m /= count.max(1) as f64;
    }
    Ok(means)
}

/// Writes `posterior.csv` (and `posterior-mean.pgm` in 2-D) plus `summary.json`.
pub fn write_summary(problem: &Problem, dir: &Path) -> Result<(ReconstructionReport, PosteriorSummary)> {
    let summary = summarize(problem, dir)?;
    let report = ReconstructionReport::new("posterior-mean", &summary.mean, &problem.truth)?;
    match problem.basis.dim() {
        1 => {
            let archives = read_archives(&problem.config, dir)?;
            let hyper = hyper_layer_means(problem, &archives)?;
            let mut w = csv_writer(&dir.join("posterior.csv"))?;
            let mut head = vec!["t".to_string(), "truth".into(), "mean".into(), "lower".into(), "upper".into()];
            head.extend((0..hyper.len()).map(|j| format!("u{j}_mean")));
            w.write_record(&head).map_err(csv_error)?;
            let g = problem.truth.len();
            for i in 0..g {
                let mut row = vec![
                    (i as f64 / g as f64).to_string(),
                    problem.truth[i].to_string(),
                    summary.mean[i].to_string(),
                    summary.lower[i].to_string(),
                    summary.upper[i].to_string(),
                ];
                row.extend(hyper.iter().map(|h| h[i].to_string()));
                w.write_record(&row).map_err(csv_error)?;
            }
            w.flush()?;
        }
        _ => {
            write_image_outputs(problem, dir, "posterior", &summary.mean, Some(&summary))?;
        }
    }
    write_json(&dir.join("summary.json"), &report)?;
    Ok((report, summary))
}

fn write_image_outputs(
    problem: &Problem,
    dir: &Path,
    stem: &str,
    values: &[f64],
    summary: Option<&PosteriorSummary>,
) -> Result<()> {
    let size = problem.config.grid_size();
    Image::new(size, values.to_vec())?.write_pgm(
        &dir.join(format!("{stem}-mean.pgm")),
        problem.config.output.sixteen_bit,
        0.0,
        1.0,
    )?;
    let mut w = csv_writer(&dir.join(format!("{stem}.csv")))?;
    match summary {
        Some(_) => w.write_record(["row", "col", "truth", "mean", "lower", "upper"]),
        None => w.write_record(["row", "col", "truth", "value"]),
    }
    .map_err(csv_error)?;
    for i in 0..values.len() {
        let mut row = vec![(i / size).to_string(), (i % size).to_string(), problem.truth[i].to_string()];
        row.push(values[i].to_string());
        if let Some(s) = summary {
            row.push(s.lower[i].to_string());
            row.push(s.upper[i].to_string());
        }
        w.write_record(&row).map_err(csv_error)?;
    }
    w.flush()?;
    Ok(())
}

/// Tikhonov reconstruction on the same measurements; writes `tikhonov.csv`
/// (and `tikhonov-mean.pgm` in 2-D) and returns its report.
pub fn write_tikhonov(problem: &Problem, dir: &Path) -> Result<ReconstructionReport> {
    let field = tikhonov_solve(&problem.model, problem.config.tikhonov.lambda)?;
    let values = field_values(&field, problem.config.grid_size())?;
    let report = ReconstructionReport::new("tikhonov", &values, &problem.truth)?;
    if problem.basis.dim() == 1 {
        let mut w = csv_writer(&dir.join("tikhonov.csv"))?;
        w.write_record(["t", "truth", "value"]).map_err(csv_error)?;
        let g = values.len();
        for i in 0..g {
            w.write_record([(i as f64 / g as f64).to_string(), problem.truth[i].to_string(), values[i].to_string()])
                .map_err(csv_error)?;
        }
        w.flush()?;
    } else {
        write_image_outputs(problem, dir, "tikhonov", &values, None)?;
    }
    Ok(report)
}

pub fn run_tikhonov(config: &ExperimentConfig, out: &Path) -> Result<ReconstructionReport> {
    let start = Instant::now();
    fs::create_dir_all(out)?;
    let problem = Problem::build(config)?;
    let mut report = write_tikhonov(&problem, out)?;
    report.runtime_seconds = runtime(start);
    write_json(&out.join("tikhonov-report.json"), &report)?;
    Ok(report)
}

/// Simulated measurements as `measurements.csv`.
pub fn write_sinogram(config: &ExperimentConfig, out: &Path) -> Result<usize> {
    fs::create_dir_all(out)?;
    let problem = Problem::build(config)?;
    let mut w = csv_writer(&out.join("measurements.csv"))?;
    let y = problem.model.y();
    if let Some(times) = &problem.times {
        w.write_record(["t", "clean", "value"]).map_err(csv_error)?;
        for ((t, c), v) in times.iter().zip(&problem.clean).zip(y) {
            w.write_record([t.to_string(), c.to_string(), v.to_string()]).map_err(csv_error)?;
        }
    } else if let Some(geom) = &problem.geometry {
        w.write_record(["angle", "offset", "clean", "value"]).map_err(csv_error)?;
        for (((theta, r), c), v) in geom.rays().zip(&problem.clean).zip(y) {
            w.write_record([theta.to_string(), r.to_string(), c.to_string(), v.to_string()])
                .map_err(csv_error)?;
        }
    }
    w.flush()?;
    Ok(y.len())
}

/// Writes `count` prior draws of every layer: `prior.csv` in 1-D, one PGM per
/// draw and layer in 2-D (each scaled to its own range).
pub fn sample_prior_draws(config: &ExperimentConfig, out: &Path, count: usize) -> Result<usize> {
    fs::create_dir_all(out)?;
    let cfg = config.hierarchy_config()?;
    let hierarchy = Hierarchy::new(cfg)?;
    let mut rng = stream(config.seed, Stream::Prior, 0);
    let grid = config.grid_size();
    let mut columns: Vec<(String, Vec<f64>)> = Vec::new();
    for draw in 0..count {
        let stack = hierarchy.sample_prior(&mut rng)?;
        for (j, u) in stack.layers().iter().enumerate() {
            let values = field_values(u, grid)?;
            if config.basis.dim == 2 {
                let img = Image::new(grid, values)?;
                let (lo, hi) = img.range();
                img.write_pgm(&out.join(format!("prior-{draw}-u{j}.pgm")), config.output.sixteen_bit, lo, hi)?;
            } else {
                columns.push((format!("draw{draw}_u{j}"), values));
            }
        }
    }
    if config.basis.dim == 1 {
        let mut w = csv_writer(&out.join("prior.csv"))?;
        let mut head = vec!["t".to_string()];
        head.extend(columns.iter().map(|(n, _)| n.clone()));
        w.write_record(&head).map_err(csv_error)?;
        for i in 0..grid {
            let mut row = vec![(i as f64 / grid as f64).to_string()];
            row.extend(columns.iter().map(|(_, v)| v[i].to_string()));
            w.write_record(&row).map_err(csv_error)?;
        }
        w.flush()?;
    }
    Ok(count)
}

/// Reads gridded values from a PGM or from the last column of a CSV with a header row.
pub fn read_values(path: &Path) -> Result<Vec<f64>> {
    match path.extension().and_then(|e| e.to_str()) {
        Some("pgm") => Ok(Image::read_pgm(path)?.pixels().to_vec()),
        _ => {
            let mut r = csv::Reader::from_path(path).map_err(csv_error)?;
            r.records()
                .map(|rec| {
                    let rec = rec.map_err(csv_error)?;
                    let field = rec.get(rec.len().saturating_sub(1)).unwrap_or("");
                    field
                        .trim()
                        .parse::<f64>()
                        .map_err(|_| Error::Archive(format!("{}: `{field}` is not a number", path.display())))
                })
                .collect()
        }
    }
}

/// Compares a reconstruction file with a truth file.
pub fn compare_files(recon: &Path, truth: &Path) -> Result<ReconstructionReport> {
    let name = recon.file_stem().map(|s| s.to_string_lossy().to_string()).unwrap_or_default();
    ReconstructionReport::new(&name, &read_values(recon)?, &read_values(truth)?)
}
