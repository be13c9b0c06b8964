//! Classical online portfolio selection with Soft-Bayes, regret accounting,
//! and Kelly-portfolio estimation by online-to-batch conversion.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;

use crate::error::{Error, Result};
use crate::hermitian::Tolerances;
use crate::qsb::eta_bar;

/// A point of the probability simplex.
#[derive(Clone, Debug, PartialEq)]
pub struct Portfolio(Vec<f64>);

impl Portfolio {
    pub fn new(weights: Vec<f64>) -> Result<Self> {
        let tol = Tolerances::default();
        if weights.is_empty() {
            return Err(Error::Empty("portfolio"));
        }
        if let Some(w) = weights.iter().find(|w| !(**w >= 0.0) || !w.is_finite()) {
            return Err(Error::InvalidPortfolio(format!(
                "entry {w} is negative or not finite"
            )));
        }
        let sum: f64 = weights.iter().sum();
        if (sum - 1.0).abs() > tol.trace {
            return Err(Error::InvalidPortfolio(format!("entries sum to {sum}")));
        }
        Ok(Portfolio(weights))
    }

    pub fn uniform(dim: usize) -> Self {
        Portfolio(vec![1.0 / dim as f64; dim])
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn weights(&self) -> &[f64] {
        &self.0
    }

    pub fn into_weights(self) -> Vec<f64> {
        self.0
    }
}

/// Non-negative, not identically zero, vector of return rates.
#[derive(Clone, Debug, PartialEq)]
pub struct ReturnVector(Vec<f64>);

impl ReturnVector {
    pub fn new(rates: Vec<f64>) -> Result<Self> {
        if rates.is_empty() {
            return Err(Error::Empty("return vector"));
        }
        if let Some(r) = rates.iter().find(|r| !(**r >= 0.0) || !r.is_finite()) {
            return Err(Error::InvalidReturns(format!(
                "entry {r} is negative or not finite"
            )));
        }
        if rates.iter().all(|&r| r == 0.0) {
            return Err(Error::InvalidReturns("all entries are zero".into()));
        }
        Ok(ReturnVector(rates))
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn rates(&self) -> &[f64] {
        &self.0
    }

    pub fn dot(&self, w: &[f64]) -> f64 {
        self.0.iter().zip(w).map(|(a, b)| a * b).sum()
    }
}

/// One Soft-Bayes update `(1 − η) w + η (a ∘ w) / ⟨a, w⟩`.
///
/// The result stays on the simplex without renormalisation.
pub fn soft_bayes_step(w: &Portfolio, a: &ReturnVector, eta: f64) -> Result<Portfolio> {
    check_eta(eta)?;
    if w.dim() != a.dim() {
        return Err(Error::DimensionMismatch {
            expected: w.dim(),
            found: a.dim(),
        });
    }
    let inner = a.dot(&w.0);
    if !(inner > 0.0) {
        return Err(Error::DegenerateReturn {
            round: 0,
            value: inner,
        });
    }
    // w_i (1 + η (a_i/⟨a,w⟩ − 1)): leaves w_i exactly fixed when a_i = ⟨a,w⟩.
    let next =
        w.0.iter()
            .zip(&a.0)
            .map(|(&wi, &ai)| wi * (1.0 + eta * (ai / inner - 1.0)))
            .collect();
    Ok(Portfolio(next))
}

pub(crate) fn check_eta(eta: f64) -> Result<()> {
    if eta > 0.0 && eta < 1.0 {
        Ok(())
    } else {
        Err(Error::LearningRate(eta))
    }
}

/// Horizon-tuned learning rate, `η = √(log D) / (√(TD) + √(log D))`.
///
/// Equivalently `η / (1 − η) = √(log D / (TD))`, the minimiser of the
/// regret bound `log D / η̄ + η̄ T D + log D`.
pub fn learning_rate(dim: usize, horizon: u64) -> Result<f64> {
    if dim < 2 {
        return Err(Error::DegenerateDimension(dim));
    }
    if horizon == 0 {
        return Err(Error::Config("horizon T must be at least 1".into()));
    }
    let bar = ((dim as f64).ln() / (horizon as f64 * dim as f64)).sqrt();
    Ok(eta_from_bar(bar))
}

/// Inverse of [`eta_bar`]: `η = η̄ / (1 + η̄)`.
pub fn eta_from_bar(bar: f64) -> f64 {
    bar / (1.0 + bar)
}

/// `2√(T D log D) + log D`.
pub fn ops_regret_bound(dim: usize, horizon: u64) -> f64 {
    let log_d = (dim as f64).ln();
    2.0 * (horizon as f64 * dim as f64 * log_d).sqrt() + log_d
}

/// Regret bound after `rounds` rounds played at a fixed rate `eta`:
/// `log D / η̄ + η̄ · rounds · D + log D`.
///
/// Coincides with [`ops_regret_bound`] when `eta` is tuned to `rounds`.
pub fn regret_bound_for_rate(dim: usize, rounds: u64, eta: f64) -> f64 {
    let log_d = (dim as f64).ln();
    let bar = eta_bar(eta);
    log_d / bar + bar * rounds as f64 * dim as f64 + log_d
}

/// The best fixed portfolio in hindsight and its per-round losses.
#[derive(Clone, Debug)]
pub struct Comparator {
    pub portfolio: Portfolio,
    pub losses: Vec<f64>,
    pub cumulative_loss: f64,
    pub gap: f64,
}

#[derive(Clone, Debug)]
pub struct OpsTranscript {
    pub eta: f64,
    /// `w_t` announced in round `t` (index `t − 1`).
    pub portfolios: Vec<Portfolio>,
    pub losses: Vec<f64>,
    pub cumulative_loss: f64,
    /// `(w_1 + ⋯ + w_T) / T`.
    pub average: Portfolio,
    pub comparator: Option<Comparator>,
}

impl OpsTranscript {
    pub fn rounds(&self) -> usize {
        self.losses.len()
    }

    pub fn dim(&self) -> usize {
        self.average.dim()
    }

    pub fn comparator_loss(&self) -> Option<f64> {
        self.comparator.as_ref().map(|c| c.cumulative_loss)
    }

    pub fn regret(&self) -> Option<f64> {
        self.comparator_loss().map(|c| self.cumulative_loss - c)
    }
}

/// Plays Soft-Bayes from the uniform portfolio against `stream` and
/// computes the hindsight comparator.
pub fn run_ops_game(stream: &[ReturnVector], eta: f64) -> Result<OpsTranscript> {
    play_soft_bayes(stream, eta)?.with_comparator(stream, DEFAULT_COMPARATOR_TOL)
}

impl OpsTranscript {
    /// Attaches the best fixed portfolio for `stream`, certified to `tol`.
    pub fn with_comparator(mut self, stream: &[ReturnVector], tol: f64) -> Result<Self> {
        let (portfolio, cumulative_loss, gap) = solve_comparator(stream, tol)?;
        let losses = stream
            .iter()
            .map(|a| -a.dot(portfolio.weights()).ln())
            .collect();
        self.comparator = Some(Comparator {
            portfolio,
            losses,
            cumulative_loss,
            gap,
        });
        Ok(self)
    }
}

pub(crate) fn play_soft_bayes(stream: &[ReturnVector], eta: f64) -> Result<OpsTranscript> {
    check_eta(eta)?;
    let first = stream.first().ok_or(Error::Empty("return stream"))?;
    let dim = first.dim();
    let mut w = Portfolio::uniform(dim);
    let mut sum = vec![0.0; dim];
    let mut portfolios = Vec::with_capacity(stream.len());
    let mut losses = Vec::with_capacity(stream.len());
    let mut cumulative_loss = 0.0;
    for (t, a) in stream.iter().enumerate() {
        let round = t + 1;
        if a.dim() != dim {
            return Err(Error::DimensionMismatch {
                expected: dim,
                found: a.dim(),
            }
            .at_round(round));
        }
        let inner = a.dot(&w.0);
        if !(inner > 0.0) {
            return Err(Error::DegenerateReturn {
                round,
                value: inner,
            });
        }
        let loss = -inner.ln();
        cumulative_loss += loss;
        losses.push(loss);
        for (s, wi) in sum.iter_mut().zip(&w.0) {
            *s += wi;
        }
        let next = soft_bayes_step(&w, a, eta)?;
        portfolios.push(std::mem::replace(&mut w, next));
    }
    let n = stream.len() as f64;
    let average = Portfolio(sum.into_iter().map(|s| s / n).collect());
    Ok(OpsTranscript {
        eta,
        portfolios,
        losses,
        cumulative_loss,
        average,
        comparator: None,
    })
}

pub const DEFAULT_COMPARATOR_TOL: f64 = 1e-8;
const COMPARATOR_MAX_ITER: usize = 100_000;

/// `argmin_{w∈Δ} Σ_t −log⟨a_t, w⟩` and its cumulative loss.
///
/// Optimality is certified by the Frank-Wolfe gap of the averaged objective,
/// `max_j ⟨−∇, e_j − w⟩ ≤ tol`.
pub fn best_fixed_portfolio(returns: &[ReturnVector], tol: f64) -> Result<(Portfolio, f64)> {
    solve_comparator(returns, tol).map(|(w, loss, _)| (w, loss))
}

fn solve_comparator(returns: &[ReturnVector], tol: f64) -> Result<(Portfolio, f64, f64)> {
    let first = returns.first().ok_or(Error::Empty("return stream"))?;
    let dim = first.dim();
    if let Some(bad) = returns.iter().find(|a| a.dim() != dim) {
        return Err(Error::DimensionMismatch {
            expected: dim,
            found: bad.dim(),
        });
    }
    let n = returns.len() as f64;
    // Averaged objective and the ratio vector r = −∇.
    let evaluate = |w: &[f64]| -> Option<(f64, Vec<f64>)> {
        let mut f = 0.0;
        let mut r = vec![0.0; dim];
        for a in returns {
            let inner = a.dot(w);
            if !(inner > 0.0) {
                return None;
            }
            f -= inner.ln();
            for (rj, aj) in r.iter_mut().zip(a.rates()) {
                *rj += aj / inner;
            }
        }
        r.iter_mut().for_each(|rj| *rj /= n);
        Some((f / n, r))
    };
    let problem = SimplexProblem {
        dim,
        evaluate: &evaluate,
    };
    let (w, f, gap) = problem.solve(tol, COMPARATOR_MAX_ITER)?;
    Ok((Portfolio(w), f * n, gap))
}

type Evaluate<'a> = &'a dyn Fn(&[f64]) -> Option<(f64, Vec<f64>)>;

/// Projected gradient with Barzilai-Borwein steps and a non-monotone
/// Armijo search over the simplex.
struct SimplexProblem<'a> {
    dim: usize,
    evaluate: Evaluate<'a>,
}

impl SimplexProblem<'_> {
    fn solve(&self, tol: f64, max_iter: usize) -> Result<(Vec<f64>, f64, f64)> {
        let mut w = vec![1.0 / self.dim as f64; self.dim];
        let (mut f, mut r) = (self.evaluate)(&w).ok_or(Error::SolverStalled {
            iterations: 0,
            best_gap: f64::INFINITY,
        })?;
        let mut history = std::collections::VecDeque::from([f]);
        let mut step = 1.0;
        let mut best_gap = f64::INFINITY;
        for iter in 0..max_iter {
            let gap = fw_gap(&w, &r);
            best_gap = best_gap.min(gap);
            if gap <= tol {
                return Ok((w, f, gap));
            }
            let reference = history.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            // Centering r removes the cancellation in ⟨r, cand − w⟩ near the optimum.
            let mean = r.iter().sum::<f64>() / self.dim as f64;
            let mut accepted = None;
            for _ in 0..80 {
                let trial: Vec<f64> = w.iter().zip(&r).map(|(wi, ri)| wi + step * ri).collect();
                let cand = project_simplex(&trial);
                let ascent: f64 = r
                    .iter()
                    .zip(cand.iter().zip(&w))
                    .map(|(ri, (c, wi))| (ri - mean) * (c - wi))
                    .sum();
                if let Some((fc, rc)) = (self.evaluate)(&cand) {
                    // Once the required decrease is below the resolution of f,
                    // progress is judged by the gap instead.
                    let unresolved = 1e-4 * ascent < 8.0 * f64::EPSILON * reference.abs().max(1.0);
                    if (ascent > 0.0 && fc <= reference - 1e-4 * ascent)
                        || (unresolved && fw_gap(&cand, &rc) < gap)
                    {
                        accepted = Some((cand, fc, rc));
                        break;
                    }
                }
                step *= 0.5;
            }
            let Some((cand, fc, rc)) = accepted else {
                return Err(Error::SolverStalled {
                    iterations: iter,
                    best_gap,
                });
            };
            // BB1 step from the displacement and the gradient change.
            let (mut ss, mut sy) = (0.0, 0.0);
            for j in 0..self.dim {
                let s = cand[j] - w[j];
                let y = r[j] - rc[j];
                ss += s * s;
                sy += s * y;
            }
            step = if sy > 0.0 {
                (ss / sy).clamp(1e-10, 1e10)
            } else {
                step * 2.0
            };
            w = cand;
            f = fc;
            r = rc;
            history.push_back(f);
            if history.len() > 10 {
                history.pop_front();
            }
        }
        Err(Error::SolverStalled {
            iterations: max_iter,
            best_gap,
        })
    }
}

fn fw_gap(w: &[f64], r: &[f64]) -> f64 {
    let max = r.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let inner: f64 = w.iter().zip(r).map(|(a, b)| a * b).sum();
    max - inner
}

/// Euclidean projection onto the probability simplex.
pub(crate) fn project_simplex(v: &[f64]) -> Vec<f64> {
    let mut sorted = v.to_vec();
    sorted.sort_by(|a, b| b.total_cmp(a));
    let mut cumsum = 0.0;
    let mut theta = 0.0;
    for (k, &u) in sorted.iter().enumerate() {
        cumsum += u;
        let candidate = (cumsum - 1.0) / (k + 1) as f64;
        if u - candidate > 0.0 {
            theta = candidate;
        }
    }
    v.iter().map(|&x| (x - theta).max(0.0)).collect()
}

/// A distribution of return vectors that can be sampled with a seeded RNG.
pub trait ReturnSampler {
    fn dim(&self) -> usize;
    fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> ReturnVector;
}

/// Uniform distribution over a finite list of return vectors, duplicates
/// counted with multiplicity.
#[derive(Clone, Debug)]
pub struct EmpiricalReturns {
    support: Vec<ReturnVector>,
}

impl EmpiricalReturns {
    pub fn new(support: Vec<ReturnVector>) -> Result<Self> {
        let dim = support
            .first()
            .ok_or(Error::Empty("empirical distribution"))?
            .dim();
        if support.iter().any(|a| a.dim() != dim) {
            return Err(Error::InvalidReturns("mixed dimensions".into()));
        }
        Ok(EmpiricalReturns { support })
    }

    pub fn support(&self) -> &[ReturnVector] {
        &self.support
    }

    /// Kelly objective `φ(w) = E[−log⟨a, w⟩]`.
    pub fn kelly_objective(&self, w: &Portfolio) -> f64 {
        let n = self.support.len() as f64;
        self.support
            .iter()
            .map(|a| -a.dot(w.weights()).ln())
            .sum::<f64>()
            / n
    }
}

impl ReturnSampler for EmpiricalReturns {
    fn dim(&self) -> usize {
        self.support[0].dim()
    }

    fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> ReturnVector {
        self.support[rng.random_range(0..self.support.len())].clone()
    }
}

/// Runs Soft-Bayes on `horizon` i.i.d. draws and returns the averaged iterate.
pub fn kelly_online_to_batch<S: ReturnSampler>(
    sampler: &S,
    horizon: usize,
    eta: f64,
    seed: u64,
) -> Result<Portfolio> {
    if horizon == 0 {
        return Err(Error::Empty("horizon"));
    }
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let stream: Vec<ReturnVector> = (0..horizon).map(|_| sampler.sample(&mut rng)).collect();
    Ok(play_soft_bayes(&stream, eta)?.average)
}
