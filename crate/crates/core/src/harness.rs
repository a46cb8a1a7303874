//! Experiment runner: declarative configs, seeded repetitions, sweeps, and
//! CSV/JSON result files.

use std::collections::BTreeMap;
use std::fs::{self, File, OpenOptions};
use std::io::{self, Write};
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::cofem::{cofem_run, CofemTrace};
use crate::em_exact::{em_exact_run, DEFAULT_MAX_DIM};
use crate::error::{Result, SblError};
use crate::operators::Dictionary;
use crate::simulate::{
    gen_dct_coeff_signal, gen_dct_dictionary, gen_dense_dictionary, gen_observations,
    gen_spike_signal, nrmse, sparsity_count, NoiseSpec,
};
use crate::solver::CgSettings;

pub const LIBRARY_VERSION: &str = env!("CARGO_PKG_VERSION");

/// Column order of the CSV output.
pub const CSV_HEADER: [&str; 17] = [
    "algorithm",
    "dict_kind",
    "D",
    "N",
    "f",
    "d",
    "sigma",
    "beta",
    "T_em",
    "K",
    "eps",
    "U",
    "rep",
    "nrmse_pct",
    "wall_time_s",
    "cg_iters_total",
    "seed",
];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DictionaryKind {
    Dense,
    Dct,
}

impl DictionaryKind {
    pub fn as_str(self) -> &'static str {
        match self {
            DictionaryKind::Dense => "dense",
            DictionaryKind::Dct => "dct",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Algorithm {
    Cofem,
    EmExact,
}

impl Algorithm {
    pub fn as_str(self) -> &'static str {
        match self {
            Algorithm::Cofem => "cofem",
            Algorithm::EmExact => "em_exact",
        }
    }
}

/// One experiment: data model, algorithm, and solver settings.
///
/// JSON keys follow the CSV column names. Every field is optional in the
/// file; `beta` defaults to `1 / sigma^2` and `N = floor(D / f)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentConfig {
    pub dictionary: DictionaryKind,
    #[serde(rename = "D")]
    pub dim: usize,
    #[serde(rename = "f")]
    pub undersampling: usize,
    pub sparsity: f64,
    pub sigma: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub beta: Option<f64>,
    pub algorithm: Algorithm,
    #[serde(rename = "T_em")]
    pub em_iterations: usize,
    #[serde(rename = "K")]
    pub probes: usize,
    #[serde(rename = "eps")]
    pub cg_tolerance: f64,
    #[serde(rename = "U")]
    pub cg_max_iterations: usize,
    pub repetitions: usize,
    pub seed: u64,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            dictionary: DictionaryKind::Dense,
            dim: 1024,
            undersampling: 4,
            sparsity: 0.04,
            sigma: 0.005,
            beta: None,
            algorithm: Algorithm::Cofem,
            em_iterations: 50,
            probes: 20,
            cg_tolerance: 1e-8,
            cg_max_iterations: 400,
            repetitions: 25,
            seed: 0,
        }
    }
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let config: Self =
            serde_json::from_str(text).map_err(|e| SblError::Config(e.to_string()))?;
        config.validate()?;
        Ok(config)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| SblError::io(path, e))?;
        Self::from_json(&text).map_err(|e| match e {
            SblError::Config(msg) => SblError::Config(format!("{}: {msg}", path.display())),
            other => other,
        })
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |msg: String| Err(SblError::Config(msg));
        if self.dim == 0 {
            return fail("D must be positive".into());
        }
        if self.undersampling == 0 {
            return fail("f must be at least 1".into());
        }
        if self.rows() == 0 {
            return fail(format!(
                "N = floor(D / f) = 0 for D = {}, f = {}",
                self.dim, self.undersampling
            ));
        }
        if !(self.sparsity > 0.0 && self.sparsity <= 1.0) {
            return fail(format!(
                "sparsity must lie in (0, 1], got {}",
                self.sparsity
            ));
        }
        if !(self.sigma > 0.0 && self.sigma.is_finite()) {
            return fail(format!("sigma must be positive, got {}", self.sigma));
        }
        if let Some(beta) = self.beta {
            if !(beta > 0.0 && beta.is_finite()) {
                return fail(format!("beta must be positive, got {beta}"));
            }
        }
        if self.em_iterations == 0 || self.probes == 0 || self.repetitions == 0 {
            return fail("T_em, K and repetitions must be positive".into());
        }
        if let Err(e) = self.cg_settings() {
            return fail(e.to_string());
        }
        if self.algorithm == Algorithm::EmExact && self.dim > DEFAULT_MAX_DIM {
            return fail(format!(
                "em_exact densifies a D x D covariance; D = {} exceeds the limit of {DEFAULT_MAX_DIM}",
                self.dim
            ));
        }
        Ok(())
    }

    /// `N = floor(D / f)`.
    pub fn rows(&self) -> usize {
        self.dim / self.undersampling.max(1)
    }

    pub fn nonzeros(&self) -> usize {
        sparsity_count(self.dim, self.sparsity)
    }

    pub fn resolved_beta(&self) -> f64 {
        self.beta.unwrap_or(1.0 / (self.sigma * self.sigma))
    }

    pub fn cg_settings(&self) -> Result<CgSettings> {
        CgSettings::new(self.cg_tolerance, self.cg_max_iterations)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RepetitionResult {
    pub rep: usize,
    pub seed: u64,
    pub nrmse_pct: Option<f64>,
    /// Algorithm time only; data generation is excluded.
    pub wall_time_s: f64,
    pub time_per_iteration_s: f64,
    pub cg_iters_total: usize,
    pub trace: CofemTrace,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultRecord {
    pub config: ExperimentConfig,
    #[serde(rename = "N")]
    pub rows: usize,
    #[serde(rename = "d")]
    pub nonzeros: usize,
    pub beta: f64,
    pub repetitions: Vec<RepetitionResult>,
    pub mean_nrmse_pct: Option<f64>,
    pub mean_wall_time_s: Option<f64>,
    pub library_version: String,
    pub seed: u64,
}

impl ResultRecord {
    pub fn failed_repetitions(&self) -> usize {
        self.repetitions
            .iter()
            .filter(|r| r.error.is_some())
            .count()
    }

    pub fn all_failed(&self) -> bool {
        self.failed_repetitions() == self.repetitions.len()
    }
}

/// Seed of repetition `rep`. A SplitMix64 step is a bijection of its input,
/// so distinct repetitions always receive distinct seeds.
pub fn repetition_seed(master: u64, rep: usize) -> u64 {
    let mut z = master.wrapping_add((rep as u64 + 1).wrapping_mul(0x9E37_79B9_7F4A_7C15));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

const DATA_STREAM: u64 = 0;
const ALGORITHM_STREAM: u64 = 1;

fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Synthetic problem for one repetition.
pub struct Problem {
    pub phi: Dictionary,
    pub truth: crate::simulate::GroundTruth,
    pub y: ndarray::Array1<f64>,
}

pub fn generate_problem(config: &ExperimentConfig, seed: u64) -> Result<Problem> {
    let mut rng = stream_rng(seed, DATA_STREAM);
    let (n, d, nnz) = (config.rows(), config.dim, config.nonzeros());
    let (phi, truth): (Dictionary, _) = match config.dictionary {
        DictionaryKind::Dense => {
            let truth = gen_spike_signal(d, nnz, &mut rng)?;
            (gen_dense_dictionary(n, d, &mut rng)?.into(), truth)
        }
        DictionaryKind::Dct => {
            let truth = gen_dct_coeff_signal(d, nnz, &mut rng)?;
            (gen_dct_dictionary(n, d, &mut rng)?.into(), truth)
        }
    };
    let y = gen_observations(&phi, &truth, NoiseSpec::new(config.sigma)?, &mut rng)?;
    Ok(Problem { phi, truth, y })
}

fn run_repetition(config: &ExperimentConfig, rep: usize, seed: u64) -> Result<RepetitionResult> {
    let problem = generate_problem(config, seed)?;
    let beta = config.resolved_beta();
    let truth = problem.truth.z_star.view();
    let (mu, trace) = match config.algorithm {
        Algorithm::Cofem => {
            let mut rng = stream_rng(seed, ALGORITHM_STREAM);
            let out = cofem_run(
                problem.y.view(),
                &problem.phi,
                beta,
                config.em_iterations,
                config.probes,
                &config.cg_settings()?,
                &mut rng,
                Some(truth),
            )?;
            (out.posterior.mu, out.trace)
        }
        Algorithm::EmExact => {
            let out = em_exact_run(
                problem.y.view(),
                &problem.phi,
                beta,
                config.em_iterations,
                Some(truth),
            )?;
            (out.posterior.mu, out.trace)
        }
    };
    let wall_time_s = trace.total_time_s();
    Ok(RepetitionResult {
        rep,
        seed,
        nrmse_pct: Some(nrmse(mu.view(), truth)?),
        wall_time_s,
        time_per_iteration_s: wall_time_s / trace.len() as f64,
        cg_iters_total: trace.total_cg_iterations(),
        trace,
        error: None,
    })
}

fn mean(values: impl Iterator<Item = f64>) -> Option<f64> {
    let (sum, count) = values.fold((0.0, 0usize), |(s, c), v| (s + v, c + 1));
    (count > 0).then(|| sum / count as f64)
}

/// Runs every repetition of `config`. Config problems are reported before any
/// work; numerical failures are recorded per repetition.
pub fn run_experiment(config: &ExperimentConfig) -> Result<ResultRecord> {
    config.validate()?;
    let repetitions: Vec<RepetitionResult> = (0..config.repetitions)
        .map(|rep| {
            let seed = repetition_seed(config.seed, rep);
            run_repetition(config, rep, seed).unwrap_or_else(|e| RepetitionResult {
                rep,
                seed,
                nrmse_pct: None,
                wall_time_s: 0.0,
                time_per_iteration_s: 0.0,
                cg_iters_total: 0,
                trace: CofemTrace::default(),
                error: Some(e.to_string()),
            })
        })
        .collect();
    let ok = || repetitions.iter().filter(|r| r.error.is_none());
    Ok(ResultRecord {
        config: config.clone(),
        rows: config.rows(),
        nonzeros: config.nonzeros(),
        beta: config.resolved_beta(),
        mean_nrmse_pct: mean(ok().filter_map(|r| r.nrmse_pct)),
        mean_wall_time_s: mean(ok().map(|r| r.wall_time_s)),
        repetitions,
        library_version: LIBRARY_VERSION.to_string(),
        seed: config.seed,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SweepAxis {
    Undersampling,
    Dimension,
}

impl SweepAxis {
    pub fn apply(self, base: &ExperimentConfig, value: usize) -> ExperimentConfig {
        let mut config = base.clone();
        match self {
            SweepAxis::Undersampling => config.undersampling = value,
            SweepAxis::Dimension => config.dim = value,
        }
        config
    }

    pub fn value_of(self, config: &ExperimentConfig) -> usize {
        match self {
            SweepAxis::Undersampling => config.undersampling,
            SweepAxis::Dimension => config.dim,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepPoint {
    pub value: usize,
    pub outcome: std::result::Result<ResultRecord, String>,
}

/// Runs one experiment per axis value, handing each point to `on_point` as
/// soon as it finishes. A failing point does not stop the sweep.
pub fn sweep<F>(
    base: &ExperimentConfig,
    axis: SweepAxis,
    values: &[usize],
    mut on_point: F,
) -> Result<Vec<SweepPoint>>
where
    F: FnMut(&SweepPoint) -> Result<()>,
{
    let mut points = Vec::with_capacity(values.len());
    for &value in values {
        let config = axis.apply(base, value);
        let point = SweepPoint {
            value,
            outcome: run_experiment(&config).map_err(|e| e.to_string()),
        };
        on_point(&point)?;
        points.push(point);
    }
    Ok(points)
}

fn csv_rows(record: &ResultRecord) -> impl Iterator<Item = [String; 17]> + '_ {
    let c = &record.config;
    record.repetitions.iter().map(move |r| {
        [
            c.algorithm.as_str().to_string(),
            c.dictionary.as_str().to_string(),
            c.dim.to_string(),
            record.rows.to_string(),
            c.undersampling.to_string(),
            record.nonzeros.to_string(),
            c.sigma.to_string(),
            record.beta.to_string(),
            c.em_iterations.to_string(),
            c.probes.to_string(),
            c.cg_tolerance.to_string(),
            c.cg_max_iterations.to_string(),
            r.rep.to_string(),
            r.nrmse_pct.map(|v| v.to_string()).unwrap_or_default(),
            r.wall_time_s.to_string(),
            r.cg_iters_total.to_string(),
            record.seed.to_string(),
        ]
    })
}

/// Writes a header row followed by one row per repetition.
pub fn write_csv<W: Write>(records: &[ResultRecord], out: W) -> io::Result<()> {
    let mut writer = csv::Writer::from_writer(out);
    writer.write_record(CSV_HEADER)?;
    for record in records {
        for row in csv_rows(record) {
            writer.write_record(&row)?;
        }
    }
    writer.flush()
}

pub fn write_json<W: Write>(records: &[ResultRecord], mut out: W) -> io::Result<()> {
    serde_json::to_writer_pretty(&mut out, records)?;
    writeln!(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OutputFormat {
    Csv,
    Json,
}

/// Writes `records` to `path`, replacing any existing file.
pub fn emit_results(records: &[ResultRecord], path: &Path, format: OutputFormat) -> Result<()> {
    let file = File::create(path).map_err(|e| SblError::io(path, e))?;
    let written = match format {
        OutputFormat::Csv => write_csv(records, file),
        OutputFormat::Json => write_json(records, file),
    };
    written.map_err(|e| SblError::io(path, e))
}

pub fn read_json_records(path: &Path) -> Result<Vec<ResultRecord>> {
    let text = fs::read_to_string(path).map_err(|e| SblError::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| SblError::Serialization {
        path: path.to_path_buf(),
        message: e.to_string(),
    })
}

/// Appends rows for one record to a CSV file, writing the header first when
/// the file is new or empty. Used to make sweeps resumable.
pub fn append_csv(record: &ResultRecord, path: &Path) -> Result<()> {
    let fresh = fs::metadata(path).map(|m| m.len() == 0).unwrap_or(true);
    let file = OpenOptions::new()
        .create(true)
        .append(true)
        .open(path)
        .map_err(|e| SblError::io(path, e))?;
    let mut writer = csv::WriterBuilder::new()
        .has_headers(false)
        .from_writer(file);
    let io_err = |e: csv::Error| SblError::io(path, io::Error::other(e));
    if fresh {
        writer.write_record(CSV_HEADER).map_err(io_err)?;
    }
    for row in csv_rows(record) {
        writer.write_record(&row).map_err(io_err)?;
    }
    writer.flush().map_err(|e| SblError::io(path, e))
}

/// One parsed CSV row.
#[derive(Debug, Clone, PartialEq, Deserialize)]
pub struct CsvRow {
    pub algorithm: String,
    pub dict_kind: String,
    #[serde(rename = "D")]
    pub dim: usize,
    #[serde(rename = "N")]
    pub rows: usize,
    pub f: usize,
    pub d: usize,
    pub sigma: f64,
    pub beta: f64,
    #[serde(rename = "T_em")]
    pub em_iterations: usize,
    #[serde(rename = "K")]
    pub probes: usize,
    pub eps: f64,
    #[serde(rename = "U")]
    pub cg_max_iterations: usize,
    pub rep: usize,
    pub nrmse_pct: Option<f64>,
    pub wall_time_s: f64,
    pub cg_iters_total: usize,
    pub seed: u64,
}

pub fn read_csv(path: &Path) -> Result<Vec<CsvRow>> {
    let mut reader =
        csv::Reader::from_path(path).map_err(|e| SblError::io(path, io::Error::other(e)))?;
    let headers = reader
        .headers()
        .map_err(|e| SblError::io(path, io::Error::other(e)))?
        .clone();
    if headers.iter().ne(CSV_HEADER.iter().copied()) {
        return Err(SblError::Serialization {
            path: path.to_path_buf(),
            message: format!(
                "unexpected CSV header: {}",
                headers.iter().collect::<Vec<_>>().join(",")
            ),
        });
    }
    reader
        .deserialize()
        .collect::<std::result::Result<Vec<CsvRow>, _>>()
        .map_err(|e| SblError::Serialization {
            path: path.to_path_buf(),
            message: e.to_string(),
        })
}

/// Aggregate over the repetitions of one (algorithm, dictionary, D, f) cell.
#[derive(Debug, Clone, PartialEq)]
pub struct SummaryRow {
    pub algorithm: String,
    pub dict_kind: String,
    pub dim: usize,
    pub f: usize,
    pub repetitions: usize,
    pub failed: usize,
    pub mean_nrmse_pct: Option<f64>,
    pub std_nrmse_pct: Option<f64>,
    pub mean_wall_time_s: f64,
    pub mean_cg_iters: f64,
}

pub fn summarize(rows: &[CsvRow]) -> Vec<SummaryRow> {
    let mut groups: BTreeMap<(String, String, usize, usize), Vec<&CsvRow>> = BTreeMap::new();
    for row in rows {
        groups
            .entry((row.algorithm.clone(), row.dict_kind.clone(), row.dim, row.f))
            .or_default()
            .push(row);
    }
    groups
        .into_iter()
        .map(|((algorithm, dict_kind, dim, f), members)| {
            let errs: Vec<f64> = members.iter().filter_map(|r| r.nrmse_pct).collect();
            let mean_nrmse_pct = mean(errs.iter().copied());
            let std_nrmse_pct = mean_nrmse_pct.filter(|_| errs.len() > 1).map(|m| {
                (errs.iter().map(|e| (e - m).powi(2)).sum::<f64>() / (errs.len() - 1) as f64).sqrt()
            });
            let count = members.len() as f64;
            SummaryRow {
                algorithm,
                dict_kind,
                dim,
                f,
                repetitions: members.len(),
                failed: members.len() - errs.len(),
                mean_nrmse_pct,
                std_nrmse_pct,
                mean_wall_time_s: members.iter().map(|r| r.wall_time_s).sum::<f64>() / count,
                mean_cg_iters: members.iter().map(|r| r.cg_iters_total as f64).sum::<f64>() / count,
            }
        })
        .collect()
}

pub fn format_summary(summary: &[SummaryRow]) -> String {
    let opt = |v: Option<f64>| v.map_or_else(|| "-".to_string(), |x| format!("{x:.3}"));
    let mut out = format!(
        "{:<9} {:<6} {:>7} {:>3} {:>5} {:>6} {:>10} {:>9} {:>12} {:>10}\n",
        "algorithm",
        "dict",
        "D",
        "f",
        "reps",
        "failed",
        "nrmse_pct",
        "std",
        "wall_time_s",
        "cg_iters"
    );
    for row in summary {
        out.push_str(&format!(
            "{:<9} {:<6} {:>7} {:>3} {:>5} {:>6} {:>10} {:>9} {:>12.4} {:>10.1}\n",
            row.algorithm,
            row.dict_kind,
            row.dim,
            row.f,
            row.repetitions,
            row.failed,
            opt(row.mean_nrmse_pct),
            opt(row.std_nrmse_pct),
            row.mean_wall_time_s,
            row.mean_cg_iters,
        ));
    }
    out
}
