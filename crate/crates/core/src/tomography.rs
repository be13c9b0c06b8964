//! Maximum-likelihood state tomography: POVMs, synthetic measurement data,
//! the log-likelihood objective, Stochastic Q-Soft-Bayes and a batch solver
//! used as the reference optimum.

use std::collections::HashMap;
use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::Path;

use nalgebra::DVector;
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hermitian::{
    eigh, hs_inner_unchecked, CMatrix, DensityMatrix, HermitianMatrix, Tolerances,
};
use crate::portfolio::{learning_rate, project_simplex};
use crate::qsb::{qsb_init, qsb_step, ObservationMatrix};
use crate::random::random_unitary;

/// A measurement: PSD elements summing to the identity.
#[derive(Clone, Debug)]
pub struct Povm {
    elements: Vec<ObservationMatrix>,
}

impl Povm {
    pub fn new(elements: Vec<HermitianMatrix>) -> Result<Self> {
        let tol = Tolerances::default();
        let dim = elements.first().ok_or(Error::Empty("POVM"))?.dim();
        let mut total = HermitianMatrix::zeros(dim);
        let mut checked = Vec::with_capacity(elements.len());
        for (j, m) in elements.into_iter().enumerate() {
            if m.dim() != dim {
                return Err(Error::InvalidPovm(format!(
                    "element {j} has dimension {}",
                    m.dim()
                )));
            }
            total = &total + &m;
            let m = ObservationMatrix::with_tolerances(m, &tol)
                .map_err(|e| Error::InvalidPovm(format!("element {j}: {e}")))?;
            checked.push(m);
        }
        let deviation = total.max_abs_diff(&HermitianMatrix::identity(dim));
        if deviation > tol.trace {
            return Err(Error::InvalidPovm(format!(
                "elements sum to the identity only within {deviation:e}"
            )));
        }
        Ok(Povm { elements: checked })
    }

    pub fn dim(&self) -> usize {
        self.elements[0].dim()
    }

    pub fn len(&self) -> usize {
        self.elements.len()
    }

    pub fn is_empty(&self) -> bool {
        self.elements.is_empty()
    }

    pub fn elements(&self) -> &[ObservationMatrix] {
        &self.elements
    }

    /// Outcome probabilities `tr(M_j ρ)`.
    pub fn probabilities(&self, rho: &DensityMatrix) -> Vec<f64> {
        self.elements.iter().map(|m| m.likelihood(rho)).collect()
    }
}

fn single_qubit_projectors(axis: usize) -> [CMatrix; 2] {
    let c = Complex64::new;
    let h = 0.5;
    match axis {
        0 => [
            CMatrix::from_row_slice(2, 2, &[c(h, 0.), c(h, 0.), c(h, 0.), c(h, 0.)]),
            CMatrix::from_row_slice(2, 2, &[c(h, 0.), c(-h, 0.), c(-h, 0.), c(h, 0.)]),
        ],
        1 => [
            CMatrix::from_row_slice(2, 2, &[c(h, 0.), c(0., -h), c(0., h), c(h, 0.)]),
            CMatrix::from_row_slice(2, 2, &[c(h, 0.), c(0., h), c(0., -h), c(h, 0.)]),
        ],
        _ => [
            CMatrix::from_row_slice(2, 2, &[c(1., 0.), c(0., 0.), c(0., 0.), c(0., 0.)]),
            CMatrix::from_row_slice(2, 2, &[c(0., 0.), c(0., 0.), c(0., 0.), c(1., 0.)]),
        ],
    }
}

/// The `3^q` Pauli-basis measurements on `q` qubits.
///
/// Setting `s` measures every qubit in the eigenbasis of one Pauli operator,
/// with base-3 digits of `s` (first qubit most significant) choosing X, Y, Z.
/// Outcome `j` is the projector whose binary digits select the `+1` (`0`) or
/// `−1` (`1`) eigenvector on each qubit.
pub fn pauli_basis_povms(qubits: u32) -> Result<Vec<Povm>> {
    if qubits == 0 {
        return Err(Error::Config("at least one qubit is required".into()));
    }
    let q = qubits as usize;
    let settings = 3usize.pow(qubits);
    let outcomes = 1usize << q;
    let mut povms = Vec::with_capacity(settings);
    for s in 0..settings {
        let axes: Vec<usize> = (0..q)
            .map(|k| (s / 3usize.pow((q - 1 - k) as u32)) % 3)
            .collect();
        let mut elements = Vec::with_capacity(outcomes);
        for j in 0..outcomes {
            let mut m = CMatrix::identity(1, 1);
            for (k, &axis) in axes.iter().enumerate() {
                let bit = (j >> (q - 1 - k)) & 1;
                m = m.kronecker(&single_qubit_projectors(axis)[bit]);
            }
            elements.push(HermitianMatrix::new(m)?);
        }
        povms.push(Povm::new(elements)?);
    }
    Ok(povms)
}

/// Projective measurement onto a Haar-random orthonormal basis.
pub fn random_basis_povm<R: Rng + ?Sized>(dim: usize, rng: &mut R) -> Result<Povm> {
    let u = random_unitary(dim, rng);
    let elements = (0..dim)
        .map(|j| {
            let v: DVector<Complex64> = u.column(j).into_owned();
            HermitianMatrix::projector(&v)
        })
        .collect();
    Povm::new(elements)
}

/// Draws a measurement outcome `j` with probability `tr(M_j ρ)`.
pub fn sample_outcome<R: Rng + ?Sized>(
    rho: &DensityMatrix,
    povm: &Povm,
    rng: &mut R,
) -> Result<(usize, ObservationMatrix)> {
    if rho.dim() != povm.dim() {
        return Err(Error::DimensionMismatch {
            expected: povm.dim(),
            found: rho.dim(),
        });
    }
    let tol = Tolerances::default();
    let probs: Vec<f64> = povm
        .probabilities(rho)
        .into_iter()
        .map(|p| p.clamp(0.0, 1.0))
        .collect();
    let sum: f64 = probs.iter().sum();
    if !((sum - 1.0).abs() <= tol.trace) {
        return Err(Error::Probability {
            sum,
            tol: tol.trace,
        });
    }
    let u = rng.random::<f64>() * sum;
    let mut cumulative = 0.0;
    let mut chosen = None;
    for (j, &p) in probs.iter().enumerate() {
        if p <= 0.0 {
            continue;
        }
        cumulative += p;
        chosen = Some(j);
        if u < cumulative {
            break;
        }
    }
    let j = chosen.ok_or(Error::Probability {
        sum,
        tol: tol.trace,
    })?;
    Ok((j, povm.elements[j].clone()))
}

/// Measurement records `A_1, …, A_N`, optionally tagged with the POVM and
/// outcome that produced each record.
#[derive(Clone, Debug)]
pub struct Dataset {
    matrices: Vec<ObservationMatrix>,
    provenance: Option<Vec<(usize, usize)>>,
}

impl Dataset {
    pub fn new(matrices: Vec<ObservationMatrix>) -> Result<Self> {
        let dim = matrices.first().ok_or(Error::Empty("dataset"))?.dim();
        if let Some(bad) = matrices.iter().find(|m| m.dim() != dim) {
            return Err(Error::DimensionMismatch {
                expected: dim,
                found: bad.dim(),
            });
        }
        Ok(Dataset {
            matrices,
            provenance: None,
        })
    }

    pub fn with_provenance(mut self, provenance: Vec<(usize, usize)>) -> Result<Self> {
        if provenance.len() != self.matrices.len() {
            return Err(Error::DimensionMismatch {
                expected: self.matrices.len(),
                found: provenance.len(),
            });
        }
        self.provenance = Some(provenance);
        Ok(self)
    }

    pub fn dim(&self) -> usize {
        self.matrices[0].dim()
    }

    pub fn len(&self) -> usize {
        self.matrices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.matrices.is_empty()
    }

    pub fn matrices(&self) -> &[ObservationMatrix] {
        &self.matrices
    }

    pub fn provenance(&self) -> Option<&[(usize, usize)]> {
        self.provenance.as_deref()
    }

    /// Distinct matrices with their empirical probabilities.
    pub fn empirical_distribution(&self) -> Vec<(ObservationMatrix, f64)> {
        let mut index: HashMap<Vec<u64>, usize> = HashMap::new();
        let mut out: Vec<(ObservationMatrix, f64)> = Vec::new();
        let unit = 1.0 / self.len() as f64;
        for m in &self.matrices {
            let key: Vec<u64> = m
                .as_matrix()
                .iter()
                .flat_map(|z| [z.re.to_bits(), z.im.to_bits()])
                .collect();
            match index.get(&key) {
                Some(&k) => out[k].1 += unit,
                None => {
                    index.insert(key, out.len());
                    out.push((m.clone(), unit));
                }
            }
        }
        out
    }

    pub fn write_json(&self, path: &Path) -> Result<()> {
        let file = DatasetFile {
            dim: self.dim(),
            n: self.len(),
            provenance: self.provenance.is_some(),
            matrices: self
                .matrices
                .iter()
                .map(|m| m.as_hermitian().clone())
                .collect(),
            records: self.provenance.clone(),
        };
        let f = File::create(path).map_err(|e| Error::io(path, e))?;
        let mut w = BufWriter::new(f);
        serde_json::to_writer(&mut w, &file).map_err(|e| Error::Format {
            path: path.into(),
            message: e.to_string(),
        })?;
        w.flush().map_err(|e| Error::io(path, e))
    }

    pub fn read_json(path: &Path) -> Result<Self> {
        let f = File::open(path).map_err(|e| Error::io(path, e))?;
        let file: DatasetFile =
            serde_json::from_reader(BufReader::new(f)).map_err(|e| Error::Format {
                path: path.into(),
                message: e.to_string(),
            })?;
        file.into_dataset().map_err(|e| Error::Format {
            path: path.into(),
            message: e.to_string(),
        })
    }
}

/// On-disk dataset: header fields followed by the `N` matrices.
#[derive(Debug, Serialize, Deserialize)]
pub struct DatasetFile {
    pub dim: usize,
    pub n: usize,
    pub provenance: bool,
    pub matrices: Vec<HermitianMatrix>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub records: Option<Vec<(usize, usize)>>,
}

impl DatasetFile {
    pub fn into_dataset(self) -> Result<Dataset> {
        if self.matrices.len() != self.n {
            return Err(Error::DimensionMismatch {
                expected: self.n,
                found: self.matrices.len(),
            });
        }
        if let Some(m) = self.matrices.iter().find(|m| m.dim() != self.dim) {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                found: m.dim(),
            });
        }
        let matrices = self
            .matrices
            .into_iter()
            .enumerate()
            .map(|(n, m)| ObservationMatrix::new(m).map_err(|e| e.at_round(n + 1)))
            .collect::<Result<Vec<_>>>()?;
        let data = Dataset::new(matrices)?;
        match (self.provenance, self.records) {
            (true, Some(records)) => data.with_provenance(records),
            (true, None) => Err(Error::Config(
                "provenance flag set but records missing".into(),
            )),
            (false, _) => Ok(data),
        }
    }
}

/// `f(ρ) = (1/N) Σ_n −log tr(A_n ρ)`.
pub fn ml_objective(rho: &DensityMatrix, data: &Dataset) -> Result<f64> {
    if rho.dim() != data.dim() {
        return Err(Error::DimensionMismatch {
            expected: data.dim(),
            found: rho.dim(),
        });
    }
    let mut total = 0.0;
    for (n, a) in data.matrices.iter().enumerate() {
        let p = a.likelihood(rho);
        if !(p > 0.0) {
            return Err(Error::NonPositiveLikelihood {
                index: n + 1,
                value: p,
            });
        }
        total -= p.ln();
    }
    Ok(total / data.len() as f64)
}

/// Measures `N` copies of `rho_true`, cycling through `povms` round-robin.
pub fn generate_dataset<R: Rng + ?Sized>(
    rho_true: &DensityMatrix,
    povms: &[Povm],
    shots: usize,
    rng: &mut R,
) -> Result<Dataset> {
    if povms.is_empty() {
        return Err(Error::Empty("POVM list"));
    }
    if shots == 0 {
        return Err(Error::Empty("dataset"));
    }
    let mut matrices = Vec::with_capacity(shots);
    let mut provenance = Vec::with_capacity(shots);
    for n in 0..shots {
        let k = n % povms.len();
        let (j, m) = sample_outcome(rho_true, &povms[k], rng)?;
        matrices.push(m);
        provenance.push((k, j));
    }
    Dataset::new(matrices)?.with_provenance(provenance)
}

/// `1, 2, 4, …` up to and including `horizon`.
pub fn geometric_checkpoints(horizon: usize) -> Vec<usize> {
    let mut out = Vec::new();
    let mut t = 1;
    while t < horizon {
        out.push(t);
        t *= 2;
    }
    if horizon > 0 {
        out.push(horizon);
    }
    out
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Checkpoint {
    pub t: usize,
    /// `f(ρ̄_t)`.
    pub objective: f64,
}

#[derive(Clone, Debug)]
pub struct MlResult {
    pub rho_bar: DensityMatrix,
    pub objective_trace: Vec<Checkpoint>,
    pub seed: u64,
    pub horizon: usize,
    pub eta: f64,
}

impl MlResult {
    pub fn final_objective(&self) -> Option<f64> {
        self.objective_trace.last().map(|c| c.objective)
    }
}

/// Stochastic Q-Soft-Bayes: each round the environment announces a record
/// drawn uniformly (with multiplicity) from `data`; the output is the
/// averaged iterate `ρ̄_T`.
///
/// When `eta` is `None` the horizon-tuned rate for `(D, T)` is used.
pub fn stochastic_qsb(
    data: &Dataset,
    horizon: usize,
    eta: Option<f64>,
    seed: u64,
    checkpoints: &[usize],
) -> Result<MlResult> {
    if horizon == 0 {
        return Err(Error::Empty("horizon"));
    }
    let dim = data.dim();
    let eta = match eta {
        Some(e) => e,
        None => learning_rate(dim, horizon as u64)?,
    };
    let mut wanted: Vec<usize> = checkpoints
        .iter()
        .copied()
        .filter(|&t| t >= 1 && t <= horizon)
        .collect();
    wanted.sort_unstable();
    wanted.dedup();
    let mut next_checkpoint = wanted.iter().peekable();

    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let mut state = qsb_init(dim);
    let mut sum = CMatrix::zeros(dim, dim);
    let mut objective_trace = Vec::with_capacity(wanted.len());
    for t in 1..=horizon {
        sum += state.rho().as_matrix();
        if next_checkpoint.peek() == Some(&&t) {
            next_checkpoint.next();
            let rho_bar =
                DensityMatrix::new_unchecked(HermitianMatrix::symmetrize(sum.unscale(t as f64)));
            let objective = ml_objective(&rho_bar, data).map_err(|e| e.at_round(t))?;
            objective_trace.push(Checkpoint { t, objective });
        }
        if t == horizon {
            break;
        }
        let b = &data.matrices[rng.random_range(0..data.len())];
        state = qsb_step(&state, b, eta).map_err(|e| e.at_round(t))?;
    }
    let rho_bar =
        DensityMatrix::new_unchecked(HermitianMatrix::symmetrize(sum.unscale(horizon as f64)));
    Ok(MlResult {
        rho_bar,
        objective_trace,
        seed,
        horizon,
        eta,
    })
}

pub const DEFAULT_ORACLE_TOL: f64 = 1e-7;
const ORACLE_MAX_ITER: usize = 50_000;

/// Certified batch maximum-likelihood estimate.
#[derive(Clone, Debug)]
pub struct BatchSolution {
    pub rho: DensityMatrix,
    pub objective: f64,
    /// `λ_max(R(ρ)) − tr(R(ρ) ρ)` with `R(ρ) = (1/N) Σ A_n / tr(A_n ρ)`.
    pub gap: f64,
    pub iterations: usize,
}

/// `argmin_{ρ∈D} f(ρ)` and `f` at the minimiser.
pub fn batch_ml_solve(data: &Dataset, tol: f64) -> Result<(DensityMatrix, f64)> {
    batch_ml_certified(data, tol).map(|s| (s.rho, s.objective))
}

struct Likelihood<'a> {
    support: &'a [(ObservationMatrix, f64)],
    dim: usize,
}

impl Likelihood<'_> {
    /// Objective and `R(ρ)`, or `None` outside the domain.
    fn evaluate(&self, rho: &HermitianMatrix) -> Option<(f64, HermitianMatrix)> {
        let mut f = 0.0;
        let mut r = CMatrix::zeros(self.dim, self.dim);
        for (a, w) in self.support {
            let p = hs_inner_unchecked(a, rho);
            if !(p > 0.0) {
                return None;
            }
            f -= w * p.ln();
            r += a.as_matrix().scale(w / p);
        }
        Some((f, HermitianMatrix::symmetrize(r)))
    }
}

/// Euclidean projection onto the density matrices: project the spectrum onto
/// the probability simplex.
fn project_spectrahedron(x: &HermitianMatrix) -> Result<HermitianMatrix> {
    let eig = eigh(x)?;
    let values = project_simplex(eig.eigenvalues.as_slice());
    Ok(eig.synthesize(&values))
}

fn frank_wolfe_gap(rho: &HermitianMatrix, r: &HermitianMatrix) -> Result<f64> {
    Ok(eigh(r)?.max_eigenvalue() - hs_inner_unchecked(r, rho))
}

/// Projected gradient over the density matrices with Barzilai-Borwein steps
/// and a non-monotone Armijo search, stopped by the Frank-Wolfe gap.
pub fn batch_ml_certified(data: &Dataset, tol: f64) -> Result<BatchSolution> {
    let support = data.empirical_distribution();
    let dim = data.dim();
    let problem = Likelihood {
        support: &support,
        dim,
    };
    let mut rho = HermitianMatrix::scaled_identity(dim, 1.0 / dim as f64);
    let (mut f, mut r) = problem.evaluate(&rho).ok_or(Error::SolverStalled {
        iterations: 0,
        best_gap: f64::INFINITY,
    })?;
    let mut history = std::collections::VecDeque::from([f]);
    let mut step = 1.0;
    let mut best_gap = f64::INFINITY;
    for iter in 0..ORACLE_MAX_ITER {
        let gap = frank_wolfe_gap(&rho, &r)?;
        best_gap = best_gap.min(gap);
        if gap <= tol {
            return Ok(BatchSolution {
                rho: DensityMatrix::new_unchecked(rho),
                objective: f,
                gap,
                iterations: iter,
            });
        }
        let reference = history.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        // Centering R removes the cancellation in ⟨R, cand − ρ⟩ near the optimum.
        let centered = &r - &HermitianMatrix::scaled_identity(dim, r.trace() / dim as f64);
        let mut accepted = None;
        for _ in 0..80 {
            let cand = project_spectrahedron(&(&rho + &r.scale(step)))?;
            let ascent = hs_inner_unchecked(&centered, &(&cand - &rho));
            if let Some((fc, rc)) = problem.evaluate(&cand) {
                // Once the required decrease is below the resolution of f,
                // progress is judged by the gap instead.
                let unresolved = 1e-4 * ascent < 8.0 * f64::EPSILON * reference.abs().max(1.0);
                if (ascent > 0.0 && fc <= reference - 1e-4 * ascent)
                    || (unresolved && frank_wolfe_gap(&cand, &rc)? < gap)
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
        let s = &cand - &rho;
        let y = &r - &rc;
        let sy = hs_inner_unchecked(&s, &y);
        let ss = hs_inner_unchecked(&s, &s);
        step = if sy > 0.0 {
            (ss / sy).clamp(1e-10, 1e10)
        } else {
            step * 2.0
        };
        rho = cand;
        f = fc;
        r = rc;
        history.push_back(f);
        if history.len() > 10 {
            history.pop_front();
        }
    }
    Err(Error::SolverStalled {
        iterations: ORACLE_MAX_ITER,
        best_gap,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::random::{random_density, random_pure_state};
    use approx::assert_relative_eq;

    fn obs(h: HermitianMatrix) -> ObservationMatrix {
        ObservationMatrix::new(h).unwrap()
    }

    fn z_basis() -> Povm {
        Povm::new(vec![
            HermitianMatrix::from_real_diagonal(&[1.0, 0.0]),
            HermitianMatrix::from_real_diagonal(&[0.0, 1.0]),
        ])
        .unwrap()
    }

    #[test]
    fn objective_values() {
        let mut rng = ChaCha20Rng::seed_from_u64(1);
        let data = Dataset::new(vec![obs(HermitianMatrix::identity(3))]).unwrap();
        assert!(
            ml_objective(&random_density(3, &mut rng), &data)
                .unwrap()
                .abs()
                < 1e-14
        );

        let data =
            Dataset::new(vec![obs(HermitianMatrix::from_real_diagonal(&[1.0, 0.0]))]).unwrap();
        assert_relative_eq!(
            ml_objective(&DensityMatrix::maximally_mixed(2), &data).unwrap(),
            2f64.ln(),
            epsilon = 1e-15
        );
        let pure = DensityMatrix::new_unchecked(HermitianMatrix::from_real_diagonal(&[0.0, 1.0]));
        assert!(matches!(
            ml_objective(&pure, &data),
            Err(Error::NonPositiveLikelihood { index: 1, .. })
        ));
    }

    #[test]
    fn objective_matches_expectation_form() {
        let mut rng = ChaCha20Rng::seed_from_u64(2);
        let truth = DensityMatrix::pure(&random_pure_state(4, &mut rng));
        let data = generate_dataset(&truth, &pauli_basis_povms(2).unwrap(), 500, &mut rng).unwrap();
        let rho = random_density(4, &mut rng);
        let expectation: f64 = data
            .empirical_distribution()
            .iter()
            .map(|(a, w)| -w * a.likelihood(&rho).ln())
            .sum();
        assert_relative_eq!(
            ml_objective(&rho, &data).unwrap(),
            expectation,
            epsilon = 1e-12
        );
        assert!(data.empirical_distribution().len() <= 36);
    }

    #[test]
    fn pauli_single_qubit() {
        let povms = pauli_basis_povms(1).unwrap();
        assert_eq!(povms.len(), 3);
        let z = &povms[2];
        assert_eq!(
            *z.elements()[0].as_hermitian(),
            HermitianMatrix::from_real_diagonal(&[1.0, 0.0])
        );
        assert_eq!(
            *z.elements()[1].as_hermitian(),
            HermitianMatrix::from_real_diagonal(&[0.0, 1.0])
        );
        let x = &povms[0];
        for (k, sign) in [(0, 1.0), (1, -1.0)] {
            let m = x.elements()[k].as_matrix();
            assert_eq!(m[(0, 0)].re, 0.5);
            assert_eq!(m[(1, 1)].re, 0.5);
            assert_eq!(m[(0, 1)].re, 0.5 * sign);
            assert_eq!(m[(1, 0)].re, 0.5 * sign);
        }
    }

    #[test]
    fn pauli_multi_qubit_shapes() {
        for q in 1..=3 {
            let povms = pauli_basis_povms(q).unwrap();
            assert_eq!(povms.len(), 3usize.pow(q));
            for p in &povms {
                assert_eq!(p.len(), 1 << q);
                assert_eq!(p.dim(), 1 << q);
                for m in p.elements() {
                    assert_relative_eq!(m.trace(), 1.0, epsilon = 1e-15);
                }
            }
        }
        assert!(pauli_basis_povms(0).is_err());
    }

    #[test]
    fn povm_validation() {
        assert!(Povm::new(vec![HermitianMatrix::from_real_diagonal(&[1.0, 0.0])]).is_err());
        assert!(Povm::new(vec![
            HermitianMatrix::from_real_diagonal(&[1.5, 0.0]),
            HermitianMatrix::from_real_diagonal(&[-0.5, 1.0]),
        ])
        .is_err());
        let mut rng = ChaCha20Rng::seed_from_u64(3);
        assert_eq!(random_basis_povm(5, &mut rng).unwrap().len(), 5);
    }

    #[test]
    fn sampling_point_mass_and_fair_coin() {
        let mut rng = ChaCha20Rng::seed_from_u64(4);
        let zero = DensityMatrix::new_unchecked(HermitianMatrix::from_real_diagonal(&[1.0, 0.0]));
        for _ in 0..100 {
            assert_eq!(sample_outcome(&zero, &z_basis(), &mut rng).unwrap().0, 0);
        }
        let mixed = DensityMatrix::maximally_mixed(2);
        let n = 100_000;
        let hits = (0..n)
            .filter(|_| sample_outcome(&mixed, &z_basis(), &mut rng).unwrap().0 == 0)
            .count();
        assert!((hits as f64 / n as f64 - 0.5).abs() < 0.01);
    }

    #[test]
    fn maximally_mixed_probabilities_are_trace_over_dim() {
        let povms = pauli_basis_povms(2).unwrap();
        let rho = DensityMatrix::maximally_mixed(4);
        for p in &povms {
            for (m, prob) in p.elements().iter().zip(p.probabilities(&rho)) {
                assert_relative_eq!(prob, m.trace() / 4.0, epsilon = 1e-15);
            }
        }
    }

    #[test]
    fn generated_dataset_is_deterministic_and_round_robin() {
        let zero = DensityMatrix::new_unchecked(HermitianMatrix::from_real_diagonal(&[1.0, 0.0]));
        let data =
            generate_dataset(&zero, &[z_basis()], 4, &mut ChaCha20Rng::seed_from_u64(5)).unwrap();
        assert!(data
            .matrices()
            .iter()
            .all(|m| **m == HermitianMatrix::from_real_diagonal(&[1.0, 0.0])));

        let povms = pauli_basis_povms(1).unwrap();
        let rho = random_density(2, &mut ChaCha20Rng::seed_from_u64(6));
        let a = generate_dataset(&rho, &povms, 30, &mut ChaCha20Rng::seed_from_u64(7)).unwrap();
        let b = generate_dataset(&rho, &povms, 30, &mut ChaCha20Rng::seed_from_u64(7)).unwrap();
        assert_eq!(a.matrices(), b.matrices());
        let prov = a.provenance().unwrap();
        assert!(prov.iter().enumerate().all(|(n, (k, _))| *k == n % 3));
    }

    #[test]
    fn generated_frequencies_match_born_rule() {
        let mut rng = ChaCha20Rng::seed_from_u64(8);
        let povms = pauli_basis_povms(1).unwrap();
        let rho = random_density(2, &mut rng);
        let shots = 30_000;
        let data = generate_dataset(&rho, &povms, shots, &mut rng).unwrap();
        let per_povm = (shots / 3) as f64;
        for (k, povm) in povms.iter().enumerate() {
            for (j, p) in povm.probabilities(&rho).into_iter().enumerate() {
                let count = data
                    .provenance()
                    .unwrap()
                    .iter()
                    .filter(|&&r| r == (k, j))
                    .count() as f64;
                let sigma = (per_povm * p * (1.0 - p)).sqrt();
                assert!((count - per_povm * p).abs() <= 3.0 * sigma + 1.0);
            }
        }
    }

    #[test]
    fn dataset_file_round_trip() {
        let mut rng = ChaCha20Rng::seed_from_u64(9);
        let rho = random_density(2, &mut rng);
        let data = generate_dataset(&rho, &pauli_basis_povms(1).unwrap(), 12, &mut rng).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("data.json");
        data.write_json(&path).unwrap();
        let back = Dataset::read_json(&path).unwrap();
        assert_eq!(back.matrices(), data.matrices());
        assert_eq!(back.provenance(), data.provenance());
    }

    #[test]
    fn checkpoints_are_geometric() {
        assert_eq!(geometric_checkpoints(1), vec![1]);
        assert_eq!(geometric_checkpoints(10), vec![1, 2, 4, 8, 10]);
        assert_eq!(geometric_checkpoints(16), vec![1, 2, 4, 8, 16]);
    }

    #[test]
    fn stochastic_on_identity_data() {
        let data = Dataset::new(vec![obs(HermitianMatrix::identity(3)); 7]).unwrap();
        let res = stochastic_qsb(&data, 50, None, 1, &geometric_checkpoints(50)).unwrap();
        assert!(res.rho_bar.max_abs_diff(&DensityMatrix::maximally_mixed(3)) < 1e-15);
        assert!(res
            .objective_trace
            .iter()
            .all(|c| c.objective.abs() < 1e-14));
        assert_eq!(res.objective_trace.len(), 7);
    }

    #[test]
    fn batch_closed_form_diagonal() {
        let (n0, n1) = (13usize, 7usize);
        let mut m = vec![obs(HermitianMatrix::from_real_diagonal(&[1.0, 0.0])); n0];
        m.extend(vec![
            obs(HermitianMatrix::from_real_diagonal(&[0.0, 1.0]));
            n1
        ]);
        let data = Dataset::new(m).unwrap();
        let sol = batch_ml_certified(&data, 1e-10).unwrap();
        let (p0, p1) = (n0 as f64 / 20.0, n1 as f64 / 20.0);
        assert!(
            sol.rho
                .max_abs_diff(&HermitianMatrix::from_real_diagonal(&[p0, p1]))
                < 1e-8
        );
        assert_relative_eq!(sol.objective, -p0 * p0.ln() - p1 * p1.ln(), epsilon = 1e-12);
    }

    #[test]
    fn batch_identity_data_stops_immediately() {
        let data = Dataset::new(vec![obs(HermitianMatrix::identity(2)); 5]).unwrap();
        let sol = batch_ml_certified(&data, 1e-7).unwrap();
        assert_eq!(sol.iterations, 0);
        assert!(sol.objective.abs() < 1e-15);
    }

    #[test]
    fn batch_beats_random_states() {
        let mut rng = ChaCha20Rng::seed_from_u64(10);
        let truth = DensityMatrix::pure(&random_pure_state(2, &mut rng));
        let data = generate_dataset(&truth, &pauli_basis_povms(1).unwrap(), 300, &mut rng).unwrap();
        let sol = batch_ml_certified(&data, 1e-7).unwrap();
        assert!(sol.gap <= 1e-7);
        for _ in 0..2000 {
            let rho = random_density(2, &mut rng);
            assert!(sol.objective <= ml_objective(&rho, &data).unwrap() + 1e-12);
        }
    }
}
