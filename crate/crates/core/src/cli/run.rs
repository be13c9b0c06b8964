//! Executes one experiment mode per seed and writes its artifacts.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::json;

use super::config::{ExperimentConfig, Mode, PovmSpec};
use super::report::{self, fmt_f64, CsvReport};
use crate::error::{Error, Result};
use crate::hermitian::{eigh, CMatrix, DensityMatrix, HermitianMatrix, MatrixRecord, Tolerances};
use crate::portfolio::{learning_rate, play_soft_bayes, regret_bound_for_rate, ReturnVector};
use crate::qsb::{run_qst_game, ObservationMatrix};
use crate::random::{random_density, random_rank1_projector};
use crate::tomography::{
    batch_ml_certified, generate_dataset, pauli_basis_povms, random_basis_povm, stochastic_qsb,
    Checkpoint, Dataset, MlResult, Povm,
};

pub const RNG_NAME: &str = "ChaCha20Rng (rand_chacha 0.9, seed_from_u64)";

/// What a run produced, in addition to the files under `out`.
#[derive(Clone, Debug, Serialize)]
pub struct RunSummary {
    pub out: PathBuf,
    /// File names relative to `out`, in write order.
    pub artifacts: Vec<String>,
    /// Mode-specific headline numbers, also recorded in the manifest.
    pub results: serde_json::Value,
}

struct Artifacts {
    out: PathBuf,
    names: Vec<String>,
}

impl Artifacts {
    fn path(&mut self, name: String) -> PathBuf {
        let p = self.out.join(&name);
        self.names.push(name);
        p
    }
}

/// Runs `config` and writes its CSVs, matrices and `manifest.json` under
/// `config.out`.
pub fn run_experiment(config: &ExperimentConfig) -> Result<RunSummary> {
    config.validate()?;
    fs::create_dir_all(&config.out).map_err(|e| Error::io(&config.out, e))?;
    let started = SystemTime::now();
    let clock = Instant::now();
    let mut files = Artifacts {
        out: config.out.clone(),
        names: Vec::new(),
    };
    let results = match config.mode {
        Mode::OpsGame => ops_game(config, &mut files)?,
        Mode::QstGame => qst_game(config, &mut files)?,
        Mode::MlRun => ml_run(config, &mut files)?,
        Mode::ScalingBench => scaling_bench(config, &mut files)?,
        Mode::Validate => validate(config, &mut files)?,
    };
    let manifest = json!({
        "version": env!("CARGO_PKG_VERSION"),
        "mode": config.mode.name(),
        "config": config,
        "config_hash": config.hash(),
        "rng": RNG_NAME,
        "seeds": config.seeds,
        "data_seed": config.data_seed,
        "started_unix_s": started.duration_since(UNIX_EPOCH).map(|d| d.as_secs_f64()).unwrap_or(0.0),
        "wall_clock_s": clock.elapsed().as_secs_f64(),
        "artifacts": files.names,
        "results": results,
    });
    let path = config.out.join("manifest.json");
    report::write_json(&path, &manifest)?;
    Ok(RunSummary {
        out: config.out.clone(),
        artifacts: files.names,
        results,
    })
}

/// Runs `f` for every seed on a pool capped by `QSB_THREADS`; results come
/// back in seed order and the first failing seed (in that order) is reported.
fn per_seed<T, F>(seeds: &[u64], f: F) -> Result<Vec<T>>
where
    T: Send,
    F: Fn(u64) -> Result<T> + Sync,
{
    let threads = std::env::var("QSB_THREADS")
        .ok()
        .and_then(|v| v.trim().parse::<usize>().ok())
        .unwrap_or(0);
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| Error::Config(format!("thread pool: {e}")))?;
    let outcomes: Vec<Result<T>> = pool.install(|| {
        seeds
            .par_iter()
            .map(|&s| f(s).map_err(|e| e.at_seed(s)))
            .collect()
    });
    outcomes.into_iter().collect()
}

fn input_path(config: &ExperimentConfig) -> Result<&Path> {
    config
        .input
        .as_deref()
        .ok_or_else(|| Error::Config(format!("mode {} needs --input", config.mode.name())))
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::Format {
        path: path.into(),
        message: e.to_string(),
    })
}

/// Return stream file: `{"dim": D, "returns": [[a_1, …, a_D], …]}`.
#[derive(Debug, Serialize, Deserialize)]
pub struct ReturnsFile {
    pub dim: usize,
    pub returns: Vec<Vec<f64>>,
}

fn read_returns(path: &Path, dim: usize) -> Result<Vec<ReturnVector>> {
    let file: ReturnsFile = read_json(path)?;
    if file.dim != dim {
        return Err(Error::Config(format!(
            "{} has D = {}, not {dim}",
            path.display(),
            file.dim
        )));
    }
    file.returns
        .into_iter()
        .enumerate()
        .map(|(t, a)| {
            if a.len() != dim {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    found: a.len(),
                }
                .at_round(t + 1));
            }
            ReturnVector::new(a).map_err(|e| e.at_round(t + 1))
        })
        .collect()
}

fn random_returns(dim: usize, rounds: usize, seed: u64) -> Vec<ReturnVector> {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    (0..rounds)
        .map(|_| {
            let a = (0..dim).map(|_| 1.0 - rng.random::<f64>()).collect();
            ReturnVector::new(a).expect("entries lie in (0, 1]")
        })
        .collect()
}

fn rate(config: &ExperimentConfig, dim: usize, rounds: usize) -> Result<f64> {
    match config.eta {
        Some(eta) => Ok(eta),
        None => learning_rate(dim, rounds as u64),
    }
}

const SUMMARY_COLUMNS: [&str; 7] = [
    "seed",
    "rounds",
    "cum_loss",
    "comparator_loss",
    "regret",
    "bound",
    "comparator_gap",
];

fn ops_game(config: &ExperimentConfig, files: &mut Artifacts) -> Result<serde_json::Value> {
    let dim = config.dim();
    let from_file = match config.povm {
        PovmSpec::FromFile => Some(read_returns(input_path(config)?, dim)?),
        _ => None,
    };
    let transcripts = per_seed(&config.seeds, |seed| {
        let stream = match &from_file {
            Some(s) => s.clone(),
            None => random_returns(dim, config.rounds, seed),
        };
        let eta = rate(config, dim, stream.len())?;
        play_soft_bayes(&stream, eta)?.with_comparator(&stream, config.comparator_tol)
    })?;
    let mut summary = CsvReport::create(&files.path("ops_summary.csv".into()), &SUMMARY_COLUMNS)?;
    let mut regrets = Vec::new();
    for (seed, t) in config.seeds.iter().zip(&transcripts) {
        report::write_ops_transcript(&files.path(format!("ops_seed{seed}.csv")), t)?;
        let c = t.comparator.as_ref().expect("comparator attached");
        let regret = t.cumulative_loss - c.cumulative_loss;
        regrets.push(regret);
        summary.row([
            seed.to_string(),
            t.rounds().to_string(),
            fmt_f64(t.cumulative_loss),
            fmt_f64(c.cumulative_loss),
            fmt_f64(regret),
            fmt_f64(regret_bound_for_rate(dim, t.rounds() as u64, t.eta)),
            fmt_f64(c.gap),
        ])?;
        report::write_json(
            &files.path(format!("portfolio_avg_seed{seed}.json")),
            &t.average.weights(),
        )?;
    }
    summary.finish()?;
    Ok(json!({ "regret": regrets }))
}

fn read_dataset(config: &ExperimentConfig) -> Result<Dataset> {
    let data = Dataset::read_json(input_path(config)?)?;
    if data.dim() != config.dim() {
        return Err(Error::Config(format!(
            "dataset has D = {}, not {}",
            data.dim(),
            config.dim()
        )));
    }
    Ok(data)
}

fn qst_game(config: &ExperimentConfig, files: &mut Artifacts) -> Result<serde_json::Value> {
    let dim = config.dim();
    let from_file = match config.povm {
        PovmSpec::FromFile => Some(read_dataset(config)?),
        _ => None,
    };
    let pauli = match config.povm {
        PovmSpec::PauliBasis => Some(pauli_basis_povms(config.qubits.expect("validated"))?),
        _ => None,
    };
    let transcripts = per_seed(&config.seeds, |seed| {
        let mut rng = ChaCha20Rng::seed_from_u64(seed);
        let stream: Vec<ObservationMatrix> = match (&from_file, &pauli) {
            (Some(data), _) => data
                .matrices()
                .iter()
                .cycle()
                .take(config.rounds)
                .cloned()
                .collect(),
            (None, Some(povms)) => {
                let rho = random_density(dim, &mut rng);
                generate_dataset(&rho, povms, config.rounds, &mut rng)?
                    .matrices()
                    .to_vec()
            }
            (None, None) => (0..config.rounds)
                .map(|_| ObservationMatrix::new(random_rank1_projector(dim, &mut rng)))
                .collect::<Result<_>>()?,
        };
        let eta = rate(config, dim, stream.len())?;
        run_qst_game(&stream, eta)?.with_batch_comparator(&stream, config.oracle_tol)
    })?;
    let mut summary = CsvReport::create(&files.path("qst_summary.csv".into()), &SUMMARY_COLUMNS)?;
    let mut regrets = Vec::new();
    for (seed, t) in config.seeds.iter().zip(&transcripts) {
        report::write_qst_transcript(&files.path(format!("qst_seed{seed}.csv")), t, config.timing)?;
        let c = t.comparator.as_ref().expect("comparator attached");
        let regret = t.cumulative_loss - c.cumulative_loss;
        regrets.push(regret);
        summary.row([
            seed.to_string(),
            t.rounds().to_string(),
            fmt_f64(t.cumulative_loss),
            fmt_f64(c.cumulative_loss),
            fmt_f64(regret),
            fmt_f64(regret_bound_for_rate(dim, t.rounds() as u64, t.eta)),
            fmt_f64(c.gap),
        ])?;
        report::write_matrix(&files.path(format!("rho_avg_seed{seed}.json")), &t.average)?;
        report::write_matrix(
            &files.path(format!("rho_comparator_seed{seed}.json")),
            &c.rho,
        )?;
    }
    summary.finish()?;
    Ok(json!({ "regret": regrets }))
}

/// The synthetic (or loaded) dataset of an `ml-run`, shared by every seed.
fn ml_dataset(config: &ExperimentConfig) -> Result<(Dataset, Option<DensityMatrix>)> {
    if config.povm == PovmSpec::FromFile {
        return Ok((read_dataset(config)?, None));
    }
    let dim = config.dim();
    let mut rng = ChaCha20Rng::seed_from_u64(config.data_seed);
    let povms: Vec<Povm> = match config.povm {
        PovmSpec::PauliBasis => pauli_basis_povms(config.qubits.expect("validated"))?,
        _ => (0..=dim)
            .map(|_| random_basis_povm(dim, &mut rng))
            .collect::<Result<_>>()?,
    };
    let rho_true = random_density(dim, &mut rng);
    let data = generate_dataset(&rho_true, &povms, config.shots, &mut rng)?;
    Ok((data, Some(rho_true)))
}

const ML_SUMMARY_COLUMNS: [&str; 6] =
    ["seed", "t", "f_rho_bar", "f_star", "gap_to_oracle", "bound"];

fn ml_run(config: &ExperimentConfig, files: &mut Artifacts) -> Result<serde_json::Value> {
    let (data, rho_true) = ml_dataset(config)?;
    let dim = data.dim();
    if config.povm != PovmSpec::FromFile {
        data.write_json(&files.path("dataset.json".into()))?;
    }
    if let Some(rho) = &rho_true {
        report::write_matrix(&files.path("rho_true.json".into()), rho)?;
    }
    let oracle = batch_ml_certified(&data, config.oracle_tol)?;
    report::write_matrix(&files.path("rho_ml.json".into()), &oracle.rho)?;
    let f_star = oracle.objective;

    let checkpoints = config.checkpoints.rounds(config.rounds)?;
    let runs = per_seed(&config.seeds, |seed| {
        stochastic_qsb(&data, config.rounds, config.eta, seed, &checkpoints)
    })?;

    let mut summary = CsvReport::create(&files.path("ml_summary.csv".into()), &ML_SUMMARY_COLUMNS)?;
    let mut finals = Vec::new();
    for r in &runs {
        let seed = r.seed;
        report::write_ml_result(&files.path(format!("ml_seed{seed}.csv")), r, f_star)?;
        report::write_matrix(&files.path(format!("rho_bar_seed{seed}.json")), &r.rho_bar)?;
        let f = crate::tomography::ml_objective(&r.rho_bar, &data)?;
        finals.push(f - f_star);
        summary.row([
            seed.to_string(),
            r.horizon.to_string(),
            fmt_f64(f),
            fmt_f64(f_star),
            fmt_f64(f - f_star),
            fmt_f64(regret_bound_for_rate(dim, r.horizon as u64, r.eta) / r.horizon as f64),
        ])?;
    }
    summary.finish()?;

    // Seed-mean curve over the shared checkpoint schedule.
    let n = runs.len() as f64;
    let mean_trace: Vec<Checkpoint> = runs[0]
        .objective_trace
        .iter()
        .enumerate()
        .map(|(k, c)| Checkpoint {
            t: c.t,
            objective: runs
                .iter()
                .map(|r| r.objective_trace[k].objective)
                .sum::<f64>()
                / n,
        })
        .collect();
    let mean = MlResult {
        rho_bar: runs[0].rho_bar.clone(),
        objective_trace: mean_trace,
        seed: runs[0].seed,
        horizon: config.rounds,
        eta: runs[0].eta,
    };
    report::write_ml_result(&files.path("ml_mean.csv".into()), &mean, f_star)?;

    Ok(json!({
        "f_star": f_star,
        "oracle_gap": oracle.gap,
        "oracle_iterations": oracle.iterations,
        "eta": runs[0].eta,
        "mean_final_gap": finals.iter().sum::<f64>() / n,
        "final_gap": finals,
    }))
}

const SCALING_COLUMNS: [&str; 5] = [
    "dim",
    "seed",
    "rounds",
    "median_step_ns",
    "ratio_to_previous",
];

fn median(values: &[u64]) -> f64 {
    let mut v = values.to_vec();
    v.sort_unstable();
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2] as f64
    } else {
        (v[n / 2 - 1] as f64 + v[n / 2] as f64) / 2.0
    }
}

/// Times Q-Soft-Bayes steps on random rank-one streams, one dimension after
/// another and without seed parallelism so measurements do not compete.
fn scaling_bench(config: &ExperimentConfig, files: &mut Artifacts) -> Result<serde_json::Value> {
    let mut csv = CsvReport::create(&files.path("scaling.csv".into()), &SCALING_COLUMNS)?;
    let mut medians = Vec::new();
    for &seed in &config.seeds {
        let mut previous: Option<f64> = None;
        for &dim in &config.dims {
            let mut rng = ChaCha20Rng::seed_from_u64(seed);
            let stream: Vec<ObservationMatrix> = (0..config.rounds)
                .map(|_| ObservationMatrix::new(random_rank1_projector(dim, &mut rng)))
                .collect::<Result<_>>()
                .map_err(|e| e.at_seed(seed))?;
            let eta = rate(config, dim, config.rounds)?;
            let t = run_qst_game(&stream, eta).map_err(|e| e.at_seed(seed))?;
            report::write_qst_transcript(
                &files.path(format!("qst_d{dim}_seed{seed}.csv")),
                &t,
                config.timing,
            )?;
            let med = if config.timing {
                median(&t.step_times_ns)
            } else {
                0.0
            };
            let ratio = match previous {
                Some(p) if p > 0.0 => fmt_f64(med / p),
                _ => String::new(),
            };
            csv.row([
                dim.to_string(),
                seed.to_string(),
                config.rounds.to_string(),
                fmt_f64(med),
                ratio,
            ])?;
            medians.push(json!({ "dim": dim, "seed": seed, "median_step_ns": med }));
            previous = Some(med);
        }
    }
    csv.finish()?;
    Ok(json!({ "medians": medians }))
}

const VALIDATE_COLUMNS: [&str; 5] = ["subject", "check", "value", "tolerance", "passed"];

struct CheckLog {
    csv: CsvReport,
    total: usize,
    failed: usize,
}

impl CheckLog {
    fn record(
        &mut self,
        subject: &str,
        check: &str,
        value: f64,
        tolerance: f64,
        passed: bool,
    ) -> Result<bool> {
        self.total += 1;
        if !passed {
            self.failed += 1;
        }
        self.csv.row([
            subject.to_string(),
            check.to_string(),
            fmt_f64(value),
            fmt_f64(tolerance),
            passed.to_string(),
        ])?;
        Ok(passed)
    }
}

/// Shape, Hermiticity and (for observations) PSD / nonzero, or (for states)
/// unit trace and PSD.
fn check_matrix(
    log: &mut CheckLog,
    subject: &str,
    rec: &MatrixRecord,
    density: bool,
    tol: &Tolerances,
) -> Result<()> {
    let n = rec.dim * rec.dim;
    if !log.record(
        subject,
        "shape",
        rec.entries.len() as f64,
        n as f64,
        rec.entries.len() == n && rec.dim > 0,
    )? {
        return Ok(());
    }
    let m = CMatrix::from_row_iterator(
        rec.dim,
        rec.dim,
        rec.entries.iter().map(|[re, im]| Complex64::new(*re, *im)),
    );
    let finite = m.iter().all(|z| z.re.is_finite() && z.im.is_finite());
    if !log.record(
        subject,
        "finite",
        if finite { 0.0 } else { 1.0 },
        0.0,
        finite,
    )? {
        return Ok(());
    }
    let asymmetry = (&m - m.adjoint()).norm();
    let sym_tol = tol.sym * m.norm();
    if !log.record(
        subject,
        "hermitian",
        asymmetry,
        sym_tol,
        asymmetry <= sym_tol,
    )? {
        return Ok(());
    }
    let h = HermitianMatrix::with_tolerance(m, tol.sym)?;
    if density {
        let trace = h.trace();
        log.record(
            subject,
            "unit_trace",
            (trace - 1.0).abs(),
            tol.trace,
            (trace - 1.0).abs() <= tol.trace,
        )?;
    } else {
        let norm = h.frobenius_norm();
        log.record(subject, "nonzero", norm, 0.0, norm > 0.0)?;
    }
    let min = eigh(&h)?.min_eigenvalue();
    log.record(subject, "psd", min, -tol.psd, min >= -tol.psd)?;
    Ok(())
}

#[derive(Deserialize)]
struct RawDataset {
    dim: usize,
    n: usize,
    provenance: bool,
    matrices: Vec<MatrixRecord>,
    #[serde(default)]
    records: Option<Vec<(usize, usize)>>,
}

/// Checks every invariant of a dataset or density-matrix file and writes one
/// CSV row per check. Any failed check makes the run fail after the report
/// is written.
fn validate(config: &ExperimentConfig, files: &mut Artifacts) -> Result<serde_json::Value> {
    let path = input_path(config)?;
    let value: serde_json::Value = read_json(path)?;
    let tol = config.tolerances;
    let mut log = CheckLog {
        csv: CsvReport::create(&files.path("validate.csv".into()), &VALIDATE_COLUMNS)?,
        total: 0,
        failed: 0,
    };
    let bad_format = |message: String| Error::Format {
        path: path.into(),
        message,
    };
    let kind = if value.get("matrices").is_some() {
        let raw: RawDataset =
            serde_json::from_value(value).map_err(|e| bad_format(e.to_string()))?;
        log.record(
            "dataset",
            "count",
            raw.matrices.len() as f64,
            raw.n as f64,
            raw.matrices.len() == raw.n,
        )?;
        let mismatched = raw.matrices.iter().filter(|m| m.dim != raw.dim).count();
        log.record(
            "dataset",
            "dimension",
            mismatched as f64,
            0.0,
            mismatched == 0,
        )?;
        match (&raw.records, raw.provenance) {
            (Some(r), true) => {
                log.record(
                    "dataset",
                    "provenance",
                    r.len() as f64,
                    raw.matrices.len() as f64,
                    r.len() == raw.matrices.len(),
                )?;
            }
            (None, true) => {
                log.record(
                    "dataset",
                    "provenance",
                    0.0,
                    raw.matrices.len() as f64,
                    false,
                )?;
            }
            _ => {}
        }
        for (k, rec) in raw.matrices.iter().enumerate() {
            check_matrix(&mut log, &format!("matrix[{}]", k + 1), rec, false, &tol)?;
        }
        "dataset"
    } else if value.get("entries").is_some() {
        let rec: MatrixRecord =
            serde_json::from_value(value).map_err(|e| bad_format(e.to_string()))?;
        check_matrix(&mut log, "density", &rec, true, &tol)?;
        "density"
    } else {
        return Err(bad_format("neither a dataset nor a matrix file".into()));
    };
    log.csv.finish()?;
    if log.failed > 0 {
        return Err(bad_format(format!(
            "{} of {} invariant checks failed",
            log.failed, log.total
        )));
    }
    Ok(json!({ "kind": kind, "checks": log.total, "failed": 0 }))
}
