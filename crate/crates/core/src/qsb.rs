//! Online quantum state tomography with Q-Soft-Bayes.
//!
//! The learner keeps `L_t = log W_t` rather than `W_t` itself. The update
//! `W_{t+1} = exp(log W_t + log G_t)` then becomes a running sum
//! `L_{t+1} = L_t + log G_t`, so each round costs one matrix logarithm (of
//! `G_t`, through the cached spectrum of the observation) and one matrix
//! exponential. After every update the largest eigenvalue of `L` is moved into
//! a scalar `shift`, keeping `exp(L)` in range for arbitrarily long games;
//! the true accumulator is `L + shift · I`.

use std::ops::Deref;
use std::sync::Arc;
use std::time::Instant;

use crate::error::{Error, Result};
use crate::hermitian::{
    eigh, hs_inner_unchecked, DensityMatrix, HermitianMatrix, SpectralDecomposition, Tolerances,
};
use crate::portfolio::{check_eta, ops_regret_bound};

/// A nonzero Hermitian PSD matrix announced by the environment.
///
/// The spectral decomposition is computed once at validation; clones share it.
#[derive(Clone, Debug)]
pub struct ObservationMatrix(Arc<Observation>);

#[derive(Debug)]
struct Observation {
    matrix: HermitianMatrix,
    spectrum: SpectralDecomposition,
}

impl ObservationMatrix {
    pub fn new(matrix: HermitianMatrix) -> Result<Self> {
        Self::with_tolerances(matrix, &Tolerances::default())
    }

    pub fn with_tolerances(matrix: HermitianMatrix, tol: &Tolerances) -> Result<Self> {
        if matrix.is_zero() {
            return Err(Error::InvalidObservation("zero matrix".into()));
        }
        let spectrum = eigh(&matrix)?;
        let min = spectrum.min_eigenvalue();
        if min < -tol.psd {
            return Err(Error::InvalidObservation(format!(
                "eigenvalue {min:e} is below -{:e}",
                tol.psd
            )));
        }
        if spectrum.max_eigenvalue() <= 0.0 {
            return Err(Error::InvalidObservation("no positive eigenvalue".into()));
        }
        Ok(ObservationMatrix(Arc::new(Observation {
            matrix,
            spectrum,
        })))
    }

    pub fn as_hermitian(&self) -> &HermitianMatrix {
        &self.0.matrix
    }

    pub fn spectrum(&self) -> &SpectralDecomposition {
        &self.0.spectrum
    }

    /// `tr(A ρ)`.
    pub fn likelihood(&self, rho: &HermitianMatrix) -> f64 {
        hs_inner_unchecked(&self.0.matrix, rho)
    }
}

impl Deref for ObservationMatrix {
    type Target = HermitianMatrix;

    fn deref(&self) -> &HermitianMatrix {
        &self.0.matrix
    }
}

impl PartialEq for ObservationMatrix {
    fn eq(&self, other: &Self) -> bool {
        self.0.matrix == other.0.matrix
    }
}

/// Learner state after `round − 1` updates.
#[derive(Clone, Debug)]
pub struct QsbState {
    log_w: HermitianMatrix,
    shift: f64,
    rho: DensityMatrix,
    round: usize,
    log_trace: f64,
    min_eigenvalue: f64,
}

impl QsbState {
    /// Shifted accumulator; `log W_t = log_w() + shift() · I`.
    pub fn log_w(&self) -> &HermitianMatrix {
        &self.log_w
    }

    pub fn shift(&self) -> f64 {
        self.shift
    }

    pub fn rho(&self) -> &DensityMatrix {
        &self.rho
    }

    pub fn round(&self) -> usize {
        self.round
    }

    pub fn dim(&self) -> usize {
        self.rho.dim()
    }

    /// `log tr(W_t)`.
    pub fn log_true_trace(&self) -> f64 {
        self.log_trace
    }

    /// `tr(W_t)`, at most one for every `t`.
    pub fn true_trace(&self) -> f64 {
        self.log_trace.exp()
    }

    pub fn min_eigenvalue(&self) -> f64 {
        self.min_eigenvalue
    }

    /// Rebuilds the state from the spectrum of an (unshifted) accumulator.
    fn from_accumulator(log_w: HermitianMatrix, shift: f64, round: usize) -> Result<Self> {
        let eig = eigh(&log_w)?;
        let top = eig.max_eigenvalue();
        let weights: Vec<f64> = eig.eigenvalues.iter().map(|l| (l - top).exp()).collect();
        let total: f64 = weights.iter().sum();
        let probs: Vec<f64> = weights.iter().map(|w| w / total).collect();
        let min_eigenvalue = probs.iter().copied().fold(f64::INFINITY, f64::min);
        let rho = DensityMatrix::new_unchecked(eig.synthesize(&probs));
        let dim = log_w.dim();
        let log_w = &log_w - &HermitianMatrix::scaled_identity(dim, top);
        Ok(QsbState {
            log_w,
            shift: shift + top,
            rho,
            round,
            log_trace: shift + top + total.ln(),
            min_eigenvalue,
        })
    }
}

/// `ρ_1 = W_1 = I / D`.
pub fn qsb_init(dim: usize) -> QsbState {
    let log_d = (dim as f64).ln();
    QsbState {
        log_w: HermitianMatrix::scaled_identity(dim, -log_d),
        shift: 0.0,
        rho: DensityMatrix::maximally_mixed(dim),
        round: 1,
        log_trace: 0.0,
        min_eigenvalue: 1.0 / dim as f64,
    }
}

/// One Q-Soft-Bayes round:
/// `L' = L + log((1 − η) I + η A / tr(A ρ))`, `ρ' = exp(L') / tr(exp(L'))`.
pub fn qsb_step(state: &QsbState, a: &ObservationMatrix, eta: f64) -> Result<QsbState> {
    check_eta(eta)?;
    if a.dim() != state.dim() {
        return Err(Error::DimensionMismatch {
            expected: state.dim(),
            found: a.dim(),
        });
    }
    let likelihood = a.likelihood(&state.rho);
    if !(likelihood > 0.0) {
        return Err(Error::NonPositiveLikelihood {
            index: state.round,
            value: likelihood,
        });
    }
    // A and G share eigenvectors; G's eigenvalues are ≥ 1 − η > 0.
    let spectrum = a.spectrum();
    let gain = eta / likelihood;
    let log_g: Vec<f64> = spectrum
        .eigenvalues
        .iter()
        .map(|&mu| ((1.0 - eta) + gain * mu.max(0.0)).ln())
        .collect();
    let log_w = HermitianMatrix::symmetrize(
        state.log_w.as_matrix() + spectrum.synthesize(&log_g).as_matrix(),
    );
    QsbState::from_accumulator(log_w, state.shift, state.round + 1)
}

/// `2√(T D log D) + log D`, the same bound as the classical game.
pub fn qsb_regret_bound(dim: usize, horizon: u64) -> f64 {
    ops_regret_bound(dim, horizon)
}

/// `η̄ = η / (1 − η)`, an upper bound on `−log(1 − η)`.
pub fn eta_bar(eta: f64) -> f64 {
    eta / (1.0 - eta)
}

/// Right-hand side minus left-hand side of the reverse Jensen inequality
/// `log⟨X, ρ⟩ ≤ (1/η)⟨log((1−η)I + ηX), ρ⟩ + tr log(I + η̄ X)`.
pub fn reverse_jensen_gap(x: &ObservationMatrix, rho: &DensityMatrix, eta: f64) -> Result<f64> {
    check_eta(eta)?;
    if x.dim() != rho.dim() {
        return Err(Error::DimensionMismatch {
            expected: x.dim(),
            found: rho.dim(),
        });
    }
    let inner = x.likelihood(rho);
    if !(inner > 0.0) {
        return Err(Error::Domain { eigenvalue: inner });
    }
    let spectrum = x.spectrum();
    let bar = eta_bar(eta);
    let mut mixed = 0.0;
    let mut log_det = 0.0;
    for (j, &mu) in spectrum.eigenvalues.iter().enumerate() {
        let mu = mu.max(0.0);
        let u = spectrum.eigenvectors.column(j);
        let weight = (u.adjoint() * rho.as_matrix() * u)[(0, 0)].re;
        mixed += ((1.0 - eta) + eta * mu).ln() * weight;
        log_det += (1.0 + bar * mu).ln();
    }
    Ok(mixed / eta + log_det - inner.ln())
}

/// Best fixed density matrix in hindsight.
#[derive(Clone, Debug)]
pub struct QstComparator {
    pub rho: DensityMatrix,
    pub cumulative_loss: f64,
    pub gap: f64,
}

#[derive(Clone, Debug)]
pub struct QstTranscript {
    pub dim: usize,
    pub eta: f64,
    pub losses: Vec<f64>,
    /// `tr(W_t)` for the iterate played in round `t`.
    pub true_traces: Vec<f64>,
    pub min_eigenvalues: Vec<f64>,
    pub step_times_ns: Vec<u64>,
    pub cumulative_loss: f64,
    /// `(ρ_1 + ⋯ + ρ_T) / T`.
    pub average: DensityMatrix,
    pub comparator: Option<QstComparator>,
}

impl QstTranscript {
    pub fn rounds(&self) -> usize {
        self.losses.len()
    }

    pub fn comparator_loss(&self) -> Option<f64> {
        self.comparator.as_ref().map(|c| c.cumulative_loss)
    }

    pub fn regret(&self) -> Option<f64> {
        self.comparator_loss().map(|c| self.cumulative_loss - c)
    }

    /// Attaches the batch maximum-likelihood comparator for `stream`.
    pub fn with_batch_comparator(mut self, stream: &[ObservationMatrix], tol: f64) -> Result<Self> {
        let data = crate::tomography::Dataset::new(stream.to_vec())?;
        let solution = crate::tomography::batch_ml_certified(&data, tol)?;
        self.comparator = Some(QstComparator {
            cumulative_loss: solution.objective * stream.len() as f64,
            rho: solution.rho,
            gap: solution.gap,
        });
        Ok(self)
    }
}

/// Plays Q-Soft-Bayes from `I / D` against `stream`.
pub fn run_qst_game(stream: &[ObservationMatrix], eta: f64) -> Result<QstTranscript> {
    check_eta(eta)?;
    let dim = stream
        .first()
        .ok_or(Error::Empty("observation stream"))?
        .dim();
    let mut state = qsb_init(dim);
    let mut sum = HermitianMatrix::zeros(dim);
    let n = stream.len();
    let mut losses = Vec::with_capacity(n);
    let mut true_traces = Vec::with_capacity(n);
    let mut min_eigenvalues = Vec::with_capacity(n);
    let mut step_times_ns = Vec::with_capacity(n);
    let mut cumulative_loss = 0.0;
    for (t, a) in stream.iter().enumerate() {
        let round = t + 1;
        let likelihood = a.likelihood(&state.rho);
        if !(likelihood > 0.0) {
            return Err(Error::NonPositiveLikelihood {
                index: round,
                value: likelihood,
            }
            .at_round(round));
        }
        let loss = -likelihood.ln();
        cumulative_loss += loss;
        losses.push(loss);
        true_traces.push(state.true_trace());
        min_eigenvalues.push(state.min_eigenvalue);
        sum = &sum + state.rho.as_hermitian();

        let start = Instant::now();
        let next = qsb_step(&state, a, eta).map_err(|e| e.at_round(round))?;
        step_times_ns.push(start.elapsed().as_nanos() as u64);
        state = next;
    }
    let average = DensityMatrix::new_unchecked(sum.scale(1.0 / n as f64));
    Ok(QstTranscript {
        dim,
        eta,
        losses,
        true_traces,
        min_eigenvalues,
        step_times_ns,
        cumulative_loss,
        average,
        comparator: None,
    })
}
