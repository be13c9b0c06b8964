//! Artifact emission: fixed-column CSVs with round-trip-exact floats,
//! serialized matrices, and the run manifest.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::hermitian::{DensityMatrix, MatrixRecord};
use crate::portfolio::{regret_bound_for_rate, OpsTranscript};
use crate::qsb::QstTranscript;
use crate::tomography::MlResult;

/// Scientific notation with 17 significant digits; parses back to the same
/// `f64`.
pub fn fmt_f64(x: f64) -> String {
    format!("{x:.16e}")
}

pub struct CsvReport {
    writer: csv::Writer<BufWriter<File>>,
    path: std::path::PathBuf,
}

impl CsvReport {
    pub fn create(path: &Path, header: &[&str]) -> Result<Self> {
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        let mut report = CsvReport {
            writer: csv::WriterBuilder::new()
                .terminator(csv::Terminator::Any(b'\n'))
                .from_writer(BufWriter::new(file)),
            path: path.to_path_buf(),
        };
        report.row(header.iter().map(|s| s.to_string()))?;
        Ok(report)
    }

    pub fn row<I: IntoIterator<Item = String>>(&mut self, fields: I) -> Result<()> {
        let fields: Vec<String> = fields.into_iter().collect();
        self.writer
            .write_record(&fields)
            .map_err(|e| self.csv_error(e))
    }

    pub fn finish(mut self) -> Result<()> {
        self.writer.flush().map_err(|e| Error::io(&self.path, e))
    }

    fn csv_error(&self, e: csv::Error) -> Error {
        Error::Format {
            path: self.path.clone(),
            message: e.to_string(),
        }
    }
}

pub const OPS_COLUMNS: [&str; 6] = [
    "round",
    "loss",
    "cum_loss",
    "comparator_loss",
    "regret",
    "bound",
];

/// One row per round. `comparator_loss` accumulates the hindsight-optimal
/// portfolio's losses; `bound` is the regret bound after `round` rounds at
/// the transcript's learning rate.
pub fn write_ops_transcript(path: &Path, t: &OpsTranscript) -> Result<()> {
    let mut csv = CsvReport::create(path, &OPS_COLUMNS)?;
    let comparator = t.comparator.as_ref();
    let mut cum = 0.0;
    let mut cum_cmp = 0.0;
    for (k, &loss) in t.losses.iter().enumerate() {
        cum += loss;
        let cmp = comparator.map(|c| {
            cum_cmp += c.losses[k];
            cum_cmp
        });
        let round = k + 1;
        csv.row([
            round.to_string(),
            fmt_f64(loss),
            fmt_f64(cum),
            cmp.map(fmt_f64).unwrap_or_default(),
            cmp.map(|c| fmt_f64(cum - c)).unwrap_or_default(),
            fmt_f64(regret_bound_for_rate(t.dim(), round as u64, t.eta)),
        ])?;
    }
    csv.finish()
}

pub const QST_COLUMNS: [&str; 6] = [
    "round",
    "loss",
    "cum_loss",
    "true_trace",
    "min_eig_rho",
    "step_time_ns",
];

/// One row per round. `step_time_ns` is written as `0` unless `timing` is
/// set, keeping untimed transcripts byte-reproducible.
pub fn write_qst_transcript(path: &Path, t: &QstTranscript, timing: bool) -> Result<()> {
    let mut csv = CsvReport::create(path, &QST_COLUMNS)?;
    let mut cum = 0.0;
    for k in 0..t.rounds() {
        cum += t.losses[k];
        csv.row([
            (k + 1).to_string(),
            fmt_f64(t.losses[k]),
            fmt_f64(cum),
            fmt_f64(t.true_traces[k]),
            fmt_f64(t.min_eigenvalues[k]),
            if timing {
                t.step_times_ns[k].to_string()
            } else {
                "0".into()
            },
        ])?;
    }
    csv.finish()
}

pub const ML_COLUMNS: [&str; 5] = ["checkpoint", "t", "f_rho_bar", "bound", "gap_to_oracle"];

/// One row per checkpoint; `bound` is the expected-error bound
/// `(log D / η̄ + η̄ t D + log D) / t` at the run's learning rate.
pub fn write_ml_result(path: &Path, r: &MlResult, f_star: f64) -> Result<()> {
    let mut csv = CsvReport::create(path, &ML_COLUMNS)?;
    let dim = r.rho_bar.dim();
    for (k, c) in r.objective_trace.iter().enumerate() {
        csv.row([
            k.to_string(),
            c.t.to_string(),
            fmt_f64(c.objective),
            fmt_f64(regret_bound_for_rate(dim, c.t as u64, r.eta) / c.t as f64),
            fmt_f64(c.objective - f_star),
        ])?;
    }
    csv.finish()
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    serde_json::to_writer_pretty(&mut w, value).map_err(|e| Error::Format {
        path: path.into(),
        message: e.to_string(),
    })?;
    w.write_all(b"\n").map_err(|e| Error::io(path, e))?;
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn write_matrix(path: &Path, rho: &DensityMatrix) -> Result<()> {
    write_json(path, &MatrixRecord::from(rho.clone()))
}
