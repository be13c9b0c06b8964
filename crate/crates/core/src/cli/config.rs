//! Experiment configuration: built-in defaults, then a TOML file (or the
//! `config` object of a previous run's manifest), then command-line flags.

use std::fs;
use std::path::{Path, PathBuf};

use clap::ValueEnum;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::hermitian::Tolerances;
use crate::portfolio::DEFAULT_COMPARATOR_TOL;
use crate::tomography::{geometric_checkpoints, DEFAULT_ORACLE_TOL};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum Mode {
    OpsGame,
    QstGame,
    MlRun,
    ScalingBench,
    Validate,
}

impl Mode {
    pub fn name(self) -> &'static str {
        match self {
            Mode::OpsGame => "ops-game",
            Mode::QstGame => "qst-game",
            Mode::MlRun => "ml-run",
            Mode::ScalingBench => "scaling-bench",
            Mode::Validate => "validate",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum PovmSpec {
    PauliBasis,
    RandomRank1,
    FromFile,
}

/// `"geometric"` or an explicit list of rounds.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Checkpoints {
    Named(String),
    List(Vec<usize>),
}

impl Checkpoints {
    pub fn rounds(&self, horizon: usize) -> Result<Vec<usize>> {
        match self {
            Checkpoints::Named(name) if name == "geometric" => Ok(geometric_checkpoints(horizon)),
            Checkpoints::Named(name) if name == "none" => Ok(Vec::new()),
            Checkpoints::Named(other) => Err(Error::Config(format!(
                "unknown checkpoint schedule {other:?}"
            ))),
            Checkpoints::List(list) => Ok(list
                .iter()
                .copied()
                .filter(|&t| t >= 1 && t <= horizon)
                .collect()),
        }
    }

    fn parse(s: &str) -> Result<Self> {
        let s = s.trim();
        if s == "geometric" || s == "none" {
            return Ok(Checkpoints::Named(s.to_string()));
        }
        let list = s
            .split(',')
            .filter(|p| !p.trim().is_empty())
            .map(|p| p.trim().parse::<usize>())
            .collect::<std::result::Result<Vec<_>, _>>()
            .map_err(|e| Error::Config(format!("checkpoints {s:?}: {e}")))?;
        Ok(Checkpoints::List(list))
    }
}

/// Fully resolved experiment description; echoed verbatim in the manifest.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub mode: Mode,
    pub dims: Vec<usize>,
    pub qubits: Option<u32>,
    pub povm: PovmSpec,
    pub shots: usize,
    pub rounds: usize,
    pub eta: Option<f64>,
    pub seeds: Vec<u64>,
    pub data_seed: u64,
    pub checkpoints: Checkpoints,
    pub out: PathBuf,
    pub input: Option<PathBuf>,
    pub timing: bool,
    pub oracle_tol: f64,
    pub comparator_tol: f64,
    pub tolerances: Tolerances,
}

/// Optional values from a configuration file or the command line.
#[derive(Clone, Debug, Default, Deserialize, clap::Args)]
#[serde(default)]
pub struct Overrides {
    /// Dimension D; a comma-separated list for scaling-bench.
    #[arg(long = "dim", value_delimiter = ',')]
    #[serde(alias = "dim")]
    pub dims: Option<Vec<usize>>,
    /// Number of qubits q (D = 2^q).
    #[arg(long)]
    pub qubits: Option<u32>,
    #[arg(long, value_enum)]
    pub povm: Option<PovmSpec>,
    /// Number of measurement shots N.
    #[arg(long)]
    pub shots: Option<usize>,
    /// Number of rounds T.
    #[arg(long)]
    pub rounds: Option<usize>,
    /// Learning rate in (0, 1); defaults to the horizon-tuned rate.
    #[arg(long)]
    pub eta: Option<f64>,
    /// Seeds as a list `0,3,7` or a half-open range `0..20`.
    #[arg(long, value_parser = parse_seeds)]
    pub seeds: Option<SeedList>,
    /// Seed of the synthetic dataset or stream shared by all runs.
    #[arg(long)]
    pub data_seed: Option<u64>,
    /// `geometric`, `none`, or a comma-separated list of rounds.
    #[arg(long, value_parser = parse_checkpoints)]
    pub checkpoints: Option<Checkpoints>,
    /// Output directory.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Dataset, return-stream or matrix file.
    #[arg(long)]
    pub input: Option<PathBuf>,
    /// Record per-step wall-clock times in transcripts.
    #[arg(long)]
    pub timing: Option<bool>,
    #[arg(long)]
    pub oracle_tol: Option<f64>,
    #[arg(long)]
    pub comparator_tol: Option<f64>,
    #[arg(skip)]
    pub tolerances: Option<Tolerances>,
    /// Configuration file (TOML) or a manifest.json from an earlier run.
    #[arg(long)]
    #[serde(skip)]
    pub config: Option<PathBuf>,
}

#[derive(Clone, Debug, PartialEq, Deserialize)]
#[serde(transparent)]
pub struct SeedList(pub Vec<u64>);

fn parse_seeds(s: &str) -> std::result::Result<SeedList, String> {
    if let Some((a, b)) = s.split_once("..") {
        let a: u64 = a.trim().parse().map_err(|e| format!("{e}"))?;
        let b: u64 = b.trim().parse().map_err(|e| format!("{e}"))?;
        return Ok(SeedList((a..b).collect()));
    }
    s.split(',')
        .map(|p| {
            p.trim()
                .parse::<u64>()
                .map_err(|e| format!("seed {p:?}: {e}"))
        })
        .collect::<std::result::Result<_, _>>()
        .map(SeedList)
}

fn parse_checkpoints(s: &str) -> std::result::Result<Checkpoints, String> {
    Checkpoints::parse(s).map_err(|e| e.to_string())
}

impl Overrides {
    /// Fields set in `other` win.
    fn merge(self, other: Overrides) -> Overrides {
        Overrides {
            dims: other.dims.or(self.dims),
            qubits: other.qubits.or(self.qubits),
            povm: other.povm.or(self.povm),
            shots: other.shots.or(self.shots),
            rounds: other.rounds.or(self.rounds),
            eta: other.eta.or(self.eta),
            seeds: other.seeds.or(self.seeds),
            data_seed: other.data_seed.or(self.data_seed),
            checkpoints: other.checkpoints.or(self.checkpoints),
            out: other.out.or(self.out),
            input: other.input.or(self.input),
            timing: other.timing.or(self.timing),
            oracle_tol: other.oracle_tol.or(self.oracle_tol),
            comparator_tol: other.comparator_tol.or(self.comparator_tol),
            tolerances: other.tolerances.or(self.tolerances),
            config: other.config.or(self.config),
        }
    }

    fn from_config_file(path: &Path) -> Result<(Option<Mode>, Overrides)> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let bad = |message: String| Error::Config(format!("{}: {message}", path.display()));
        if path.extension().is_some_and(|e| e == "json") {
            let manifest: serde_json::Value =
                serde_json::from_str(&text).map_err(|e| bad(e.to_string()))?;
            let config = manifest.get("config").cloned().unwrap_or(manifest);
            let config: ExperimentConfig =
                serde_json::from_value(config).map_err(|e| bad(e.to_string()))?;
            return Ok((Some(config.mode), config.into()));
        }
        #[derive(Deserialize)]
        struct FileLayer {
            mode: Option<Mode>,
            #[serde(flatten)]
            rest: Overrides,
        }
        let layer: FileLayer = toml::from_str(&text).map_err(|e| bad(e.to_string()))?;
        Ok((layer.mode, layer.rest))
    }
}

impl From<ExperimentConfig> for Overrides {
    fn from(c: ExperimentConfig) -> Self {
        Overrides {
            dims: Some(c.dims),
            qubits: c.qubits,
            povm: Some(c.povm),
            shots: Some(c.shots),
            rounds: Some(c.rounds),
            eta: c.eta,
            seeds: Some(SeedList(c.seeds)),
            data_seed: Some(c.data_seed),
            checkpoints: Some(c.checkpoints),
            out: Some(c.out),
            input: c.input,
            timing: Some(c.timing),
            oracle_tol: Some(c.oracle_tol),
            comparator_tol: Some(c.comparator_tol),
            tolerances: Some(c.tolerances),
            config: None,
        }
    }
}

impl ExperimentConfig {
    /// Resolves `flags` (and the file they point to) for `mode`.
    pub fn resolve(mode: Mode, flags: Overrides) -> Result<Self> {
        let layered = match &flags.config {
            Some(path) => {
                let (file_mode, file) = Overrides::from_config_file(path)?;
                if let Some(m) = file_mode {
                    if m != mode {
                        return Err(Error::Config(format!(
                            "{} describes mode {}, not {}",
                            path.display(),
                            m.name(),
                            mode.name()
                        )));
                    }
                }
                file.merge(flags)
            }
            None => flags,
        };
        Self::from_overrides(mode, layered)
    }

    fn from_overrides(mode: Mode, o: Overrides) -> Result<Self> {
        let dims = match (o.dims, o.qubits) {
            (Some(d), Some(q)) => {
                if d.len() != 1 || d[0] != 1usize << q {
                    return Err(Error::Config(format!(
                        "--dim {d:?} contradicts --qubits {q} (D = 2^q)"
                    )));
                }
                d
            }
            (Some(d), None) => d,
            (None, Some(q)) => {
                if q == 0 || q > 12 {
                    return Err(Error::Config(format!("--qubits {q} is out of range")));
                }
                vec![1usize << q]
            }
            (None, None) => match mode {
                Mode::ScalingBench => vec![8, 16, 32, 64],
                _ => vec![4],
            },
        };
        let qubits = o.qubits.or_else(|| match dims.as_slice() {
            [d] if d.is_power_of_two() && *d > 1 => Some(d.trailing_zeros()),
            _ => None,
        });
        let povm = o.povm.unwrap_or(match (mode, &o.input) {
            (_, Some(_)) => PovmSpec::FromFile,
            (Mode::MlRun, None) => PovmSpec::PauliBasis,
            _ => PovmSpec::RandomRank1,
        });
        let rounds = o.rounds.unwrap_or(match mode {
            Mode::ScalingBench => 200,
            _ => 1000,
        });
        let config = ExperimentConfig {
            mode,
            dims,
            qubits,
            povm,
            shots: o.shots.unwrap_or(1000),
            rounds,
            eta: o.eta,
            seeds: o.seeds.map(|s| s.0).unwrap_or_else(|| vec![0]),
            data_seed: o.data_seed.unwrap_or(0),
            checkpoints: o
                .checkpoints
                .unwrap_or(Checkpoints::Named("geometric".into())),
            out: o
                .out
                .unwrap_or_else(|| PathBuf::from(format!("runs/{}", mode.name()))),
            input: o.input,
            timing: o.timing.unwrap_or(mode == Mode::ScalingBench),
            oracle_tol: o.oracle_tol.unwrap_or(DEFAULT_ORACLE_TOL),
            comparator_tol: o.comparator_tol.unwrap_or(DEFAULT_COMPARATOR_TOL),
            tolerances: o.tolerances.unwrap_or_default(),
        };
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |m: String| Err(Error::Config(m));
        if self.dims.is_empty() || self.dims.iter().any(|&d| d < 2) {
            return fail(format!("dimensions {:?} must all be at least 2", self.dims));
        }
        if self.mode != Mode::ScalingBench && self.dims.len() != 1 {
            return fail(format!(
                "mode {} takes a single dimension",
                self.mode.name()
            ));
        }
        if self.rounds == 0 {
            return fail("rounds T must be at least 1".into());
        }
        if self.seeds.is_empty() {
            return fail("at least one seed is required".into());
        }
        if self.shots == 0 {
            return fail("shots N must be at least 1".into());
        }
        if let Some(eta) = self.eta {
            if !(eta > 0.0 && eta < 1.0) {
                return fail(format!("eta {eta} must lie in (0, 1)"));
            }
        }
        if let Checkpoints::Named(n) = &self.checkpoints {
            if n != "geometric" && n != "none" {
                return fail(format!("unknown checkpoint schedule {n:?}"));
            }
        }
        if self.povm == PovmSpec::PauliBasis && self.qubits.is_none() {
            return fail("pauli-basis measurements need D = 2^q".into());
        }
        let needs_input = self.mode == Mode::Validate || self.povm == PovmSpec::FromFile;
        if needs_input && self.input.is_none() {
            return fail(format!("mode {} needs --input", self.mode.name()));
        }
        Ok(())
    }

    pub fn dim(&self) -> usize {
        self.dims[0]
    }

    /// SHA-256 of the configuration with the output directory blanked, so
    /// identical experiments written to different places share a hash.
    pub fn hash(&self) -> String {
        let mut canonical = self.clone();
        canonical.out = PathBuf::new();
        let bytes = serde_json::to_vec(&canonical).expect("config serializes");
        hex::encode(Sha256::digest(&bytes))
    }
}
