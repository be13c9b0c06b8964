//! Dense Hermitian linear algebra: spectral decompositions, matrix functions,
//! the Hilbert-Schmidt inner product and quantum relative entropy.
//!
//! Every matrix-producing routine returns an exactly Hermitian result by
//! re-symmetrizing `(M + Mᴴ) / 2` before handing it back, so long iterations
//! do not accumulate Hermiticity drift.

use std::ops::{Add, Deref, Mul, Sub};

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type CMatrix = DMatrix<Complex64>;
pub type CVector = DVector<Complex64>;

/// Eigenvalues below this are treated as exact zeros by logarithms and
/// support checks.
pub const EVAL_FLOOR: f64 = 1e-300;

/// Numerical tolerances shared across the crate.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Tolerances {
    /// Relative Hermiticity tolerance on input matrices.
    pub sym: f64,
    /// Smallest admissible eigenvalue of a PSD matrix.
    pub psd: f64,
    /// Allowed deviation of a trace (or a simplex sum) from one.
    pub trace: f64,
    /// Relative reconstruction tolerance of spectral round trips.
    pub recon: f64,
    /// Slack on quantities that must be non-negative (entropies, gaps).
    pub ent: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Tolerances {
            sym: 1e-12,
            psd: 1e-10,
            trace: 1e-9,
            recon: 1e-10,
            ent: 1e-9,
        }
    }
}

/// A square complex matrix equal to its conjugate transpose.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "MatrixRecord", into = "MatrixRecord")]
pub struct HermitianMatrix(CMatrix);

impl HermitianMatrix {
    /// Accepts `m` if it is Hermitian within the default relative tolerance.
    pub fn new(m: CMatrix) -> Result<Self> {
        Self::with_tolerance(m, Tolerances::default().sym)
    }

    pub fn with_tolerance(m: CMatrix, sym_tol: f64) -> Result<Self> {
        if !m.is_square() {
            return Err(Error::DimensionMismatch {
                expected: m.nrows(),
                found: m.ncols(),
            });
        }
        let asymmetry = (&m - m.adjoint()).norm();
        let tol = sym_tol * m.norm();
        if asymmetry > tol || !asymmetry.is_finite() {
            return Err(Error::NotHermitian { asymmetry, tol });
        }
        Ok(Self::symmetrize(m))
    }

    /// Returns `(m + mᴴ) / 2`. The caller vouches that `m` is square.
    pub(crate) fn symmetrize(m: CMatrix) -> Self {
        let adj = m.adjoint();
        HermitianMatrix((m + adj).scale(0.5))
    }

    pub fn from_real_diagonal(diag: &[f64]) -> Self {
        let d = DVector::from_iterator(diag.len(), diag.iter().map(|&x| Complex64::new(x, 0.0)));
        HermitianMatrix(CMatrix::from_diagonal(&d))
    }

    pub fn identity(dim: usize) -> Self {
        HermitianMatrix(CMatrix::identity(dim, dim))
    }

    pub fn zeros(dim: usize) -> Self {
        HermitianMatrix(CMatrix::zeros(dim, dim))
    }

    pub fn scaled_identity(dim: usize, c: f64) -> Self {
        HermitianMatrix(CMatrix::identity(dim, dim).scale(c))
    }

    /// The rank-one projector `|ψ⟩⟨ψ| / ⟨ψ|ψ⟩`.
    pub fn projector(psi: &CVector) -> Self {
        let norm_sqr = psi.norm_squared();
        Self::symmetrize((psi * psi.adjoint()).unscale(norm_sqr))
    }

    pub fn dim(&self) -> usize {
        self.0.nrows()
    }

    pub fn as_matrix(&self) -> &CMatrix {
        &self.0
    }

    pub fn into_inner(self) -> CMatrix {
        self.0
    }

    pub fn trace(&self) -> f64 {
        self.0.diagonal().iter().map(|z| z.re).sum()
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.0.norm()
    }

    pub fn is_zero(&self) -> bool {
        self.0.iter().all(|z| *z == Complex64::new(0.0, 0.0))
    }

    pub fn is_diagonal(&self) -> bool {
        let d = self.dim();
        (0..d).all(|i| (0..d).all(|j| i == j || self.0[(i, j)] == Complex64::new(0.0, 0.0)))
    }

    /// Real parts of the diagonal.
    pub fn diagonal(&self) -> Vec<f64> {
        self.0.diagonal().iter().map(|z| z.re).collect()
    }

    pub fn scale(&self, c: f64) -> Self {
        HermitianMatrix(self.0.scale(c))
    }

    /// `U H Uᴴ` for a (typically unitary) matrix `U`.
    pub fn conjugate_by(&self, u: &CMatrix) -> Self {
        Self::symmetrize(u * &self.0 * u.adjoint())
    }

    fn check_dim(&self, other: &HermitianMatrix) -> Result<()> {
        if self.dim() != other.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                found: other.dim(),
            });
        }
        Ok(())
    }

    /// Largest absolute entry-wise difference.
    pub fn max_abs_diff(&self, other: &HermitianMatrix) -> f64 {
        self.0
            .iter()
            .zip(other.0.iter())
            .map(|(a, b)| (a - b).norm())
            .fold(0.0, f64::max)
    }
}

impl Add for &HermitianMatrix {
    type Output = HermitianMatrix;

    fn add(self, rhs: &HermitianMatrix) -> HermitianMatrix {
        HermitianMatrix(&self.0 + &rhs.0)
    }
}

impl Sub for &HermitianMatrix {
    type Output = HermitianMatrix;

    fn sub(self, rhs: &HermitianMatrix) -> HermitianMatrix {
        HermitianMatrix(&self.0 - &rhs.0)
    }
}

impl Mul<f64> for &HermitianMatrix {
    type Output = HermitianMatrix;

    fn mul(self, rhs: f64) -> HermitianMatrix {
        self.scale(rhs)
    }
}

/// On-disk form of a matrix: dimension plus `D²` row-major `(re, im)` pairs.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct MatrixRecord {
    pub dim: usize,
    pub entries: Vec<[f64; 2]>,
}

impl From<HermitianMatrix> for MatrixRecord {
    fn from(h: HermitianMatrix) -> Self {
        let d = h.dim();
        let mut entries = Vec::with_capacity(d * d);
        for i in 0..d {
            for j in 0..d {
                let z = h.0[(i, j)];
                entries.push([z.re, z.im]);
            }
        }
        MatrixRecord { dim: d, entries }
    }
}

impl TryFrom<MatrixRecord> for HermitianMatrix {
    type Error = Error;

    fn try_from(rec: MatrixRecord) -> Result<Self> {
        if rec.entries.len() != rec.dim * rec.dim {
            return Err(Error::DimensionMismatch {
                expected: rec.dim * rec.dim,
                found: rec.entries.len(),
            });
        }
        let m = CMatrix::from_row_iterator(
            rec.dim,
            rec.dim,
            rec.entries.iter().map(|[re, im]| Complex64::new(*re, *im)),
        );
        HermitianMatrix::new(m)
    }
}

/// Eigen-pairs of a Hermitian matrix, eigenvalues ascending.
#[derive(Clone, Debug)]
pub struct SpectralDecomposition {
    pub eigenvalues: DVector<f64>,
    /// Unitary matrix whose columns are the eigenvectors.
    pub eigenvectors: CMatrix,
}

impl SpectralDecomposition {
    pub fn dim(&self) -> usize {
        self.eigenvalues.len()
    }

    pub fn min_eigenvalue(&self) -> f64 {
        self.eigenvalues[0]
    }

    pub fn max_eigenvalue(&self) -> f64 {
        self.eigenvalues[self.dim() - 1]
    }

    /// `Σ_d values[d] u_d u_dᴴ`.
    pub fn synthesize(&self, values: &[f64]) -> HermitianMatrix {
        let mut scaled = self.eigenvectors.clone();
        for (j, &v) in values.iter().enumerate() {
            scaled.column_mut(j).scale_mut(v);
        }
        HermitianMatrix::symmetrize(scaled * self.eigenvectors.adjoint())
    }

    pub fn reconstruct(&self) -> HermitianMatrix {
        self.synthesize(self.eigenvalues.as_slice())
    }

    /// Applies `f` to the spectrum; any non-finite image is a domain error.
    pub fn map<F: Fn(f64) -> f64>(&self, f: F) -> Result<HermitianMatrix> {
        let mut values = Vec::with_capacity(self.dim());
        for &lambda in self.eigenvalues.iter() {
            let v = f(lambda);
            if !v.is_finite() {
                return Err(Error::Domain { eigenvalue: lambda });
            }
            values.push(v);
        }
        Ok(self.synthesize(&values))
    }

    /// `log Σ_d exp(λ_d)` without overflow.
    pub fn log_sum_exp(&self) -> f64 {
        let max = self.max_eigenvalue();
        max + self
            .eigenvalues
            .iter()
            .map(|l| (l - max).exp())
            .sum::<f64>()
            .ln()
    }
}

/// Spectral decomposition of a Hermitian matrix.
pub fn eigh(h: &HermitianMatrix) -> Result<SpectralDecomposition> {
    let dim = h.dim();
    if dim == 0 {
        return Err(Error::Empty("zero-dimensional matrix"));
    }
    let eig = SymmetricEigen::try_new(h.0.clone(), f64::EPSILON, 1000 * dim.max(8))
        .ok_or(Error::EigenFailure { dim })?;
    if eig.eigenvalues.iter().any(|x| !x.is_finite()) {
        return Err(Error::EigenFailure { dim });
    }
    let mut order: Vec<usize> = (0..dim).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let eigenvalues = DVector::from_iterator(dim, order.iter().map(|&k| eig.eigenvalues[k]));
    let mut eigenvectors = CMatrix::zeros(dim, dim);
    for (dst, &src) in order.iter().enumerate() {
        eigenvectors.set_column(dst, &eig.eigenvectors.column(src));
    }
    Ok(SpectralDecomposition {
        eigenvalues,
        eigenvectors,
    })
}

/// `f(H) = Σ_d f(λ_d) P_d`.
pub fn matrix_fn<F: Fn(f64) -> f64>(h: &HermitianMatrix, f: F) -> Result<HermitianMatrix> {
    eigh(h)?.map(f)
}

pub fn matrix_exp(h: &HermitianMatrix) -> Result<HermitianMatrix> {
    matrix_fn(h, f64::exp)
}

/// Matrix logarithm; every eigenvalue must exceed [`EVAL_FLOOR`].
pub fn matrix_log(h: &HermitianMatrix) -> Result<HermitianMatrix> {
    let eig = eigh(h)?;
    if let Some(&bad) = eig.eigenvalues.iter().find(|&&l| l <= EVAL_FLOOR) {
        return Err(Error::Domain { eigenvalue: bad });
    }
    eig.map(f64::ln)
}

/// Hilbert-Schmidt inner product `tr(AB)`.
///
/// For Hermitian `B`, `tr(AB) = Σ_ij A_ij conj(B_ij)`, whose real part is
/// accumulated term by term so the result is symmetric in its arguments bit
/// for bit.
pub fn hs_inner(a: &HermitianMatrix, b: &HermitianMatrix) -> Result<f64> {
    a.check_dim(b)?;
    Ok(hs_inner_unchecked(a, b))
}

pub(crate) fn hs_inner_unchecked(a: &HermitianMatrix, b: &HermitianMatrix) -> f64 {
    a.0.iter()
        .zip(b.0.iter())
        .map(|(x, y)| x.re * y.re + x.im * y.im)
        .sum()
}

/// A validated density matrix: Hermitian, PSD and of unit trace.
#[derive(Clone, Debug, PartialEq, Serialize)]
#[serde(into = "MatrixRecord")]
pub struct DensityMatrix(HermitianMatrix);

impl DensityMatrix {
    pub fn maximally_mixed(dim: usize) -> Self {
        DensityMatrix(HermitianMatrix::scaled_identity(dim, 1.0 / dim as f64))
    }

    /// The pure state `|ψ⟩⟨ψ|`, normalising `psi`.
    pub fn pure(psi: &CVector) -> Self {
        DensityMatrix(HermitianMatrix::projector(psi))
    }

    /// Wraps a matrix the caller has already established to be a state.
    pub(crate) fn new_unchecked(h: HermitianMatrix) -> Self {
        DensityMatrix(h)
    }

    pub fn as_hermitian(&self) -> &HermitianMatrix {
        &self.0
    }

    pub fn into_hermitian(self) -> HermitianMatrix {
        self.0
    }
}

impl Deref for DensityMatrix {
    type Target = HermitianMatrix;

    fn deref(&self) -> &HermitianMatrix {
        &self.0
    }
}

impl From<DensityMatrix> for MatrixRecord {
    fn from(rho: DensityMatrix) -> Self {
        rho.0.into()
    }
}

impl<'de> Deserialize<'de> for DensityMatrix {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let h = HermitianMatrix::deserialize(deserializer)?;
        validate_density(h, &Tolerances::default()).map_err(serde::de::Error::custom)
    }
}

/// Checks the three density-matrix invariants and reports the first failure.
pub fn validate_density(h: HermitianMatrix, tol: &Tolerances) -> Result<DensityMatrix> {
    let trace = h.trace();
    if (trace - 1.0).abs() > tol.trace {
        return Err(Error::InvalidDensity(format!(
            "trace {trace} deviates from 1 by {:e}",
            (trace - 1.0).abs()
        )));
    }
    let min = eigh(&h)?.min_eigenvalue();
    if min < -tol.psd {
        return Err(Error::InvalidDensity(format!(
            "eigenvalue {min:e} is below -{:e}",
            tol.psd
        )));
    }
    Ok(DensityMatrix(h))
}

/// `S(ρ‖σ) = ⟨log ρ − log σ, ρ⟩` with the `0 log 0 = 0` convention.
pub fn quantum_relative_entropy(rho: &DensityMatrix, sigma: &DensityMatrix) -> Result<f64> {
    rho.check_dim(sigma)?;
    let tol = Tolerances::default();
    let rho_eig = eigh(rho)?;
    let neg_entropy: f64 = rho_eig
        .eigenvalues
        .iter()
        .filter(|&&p| p >= EVAL_FLOOR)
        .map(|&p| p * p.ln())
        .sum();

    // tr(ρ log σ) = Σ_j log μ_j ⟨v_j|ρ|v_j⟩
    let sigma_eig = eigh(sigma)?;
    let mut cross = 0.0;
    for (j, &mu) in sigma_eig.eigenvalues.iter().enumerate() {
        let v = sigma_eig.eigenvectors.column(j);
        let weight = (v.adjoint() * rho.as_matrix() * v)[(0, 0)].re;
        if mu < EVAL_FLOOR {
            if weight > tol.psd {
                return Err(Error::Support { weight });
            }
            continue;
        }
        cross += weight * mu.ln();
    }
    Ok(neg_entropy - cross)
}

/// `tr(e^A e^B) − tr(e^{A+B})`, non-negative by the Golden-Thompson inequality.
pub fn golden_thompson_gap(a: &HermitianMatrix, b: &HermitianMatrix) -> Result<f64> {
    a.check_dim(b)?;
    let product = hs_inner_unchecked(&matrix_exp(a)?, &matrix_exp(b)?);
    let sum = eigh(&(a + b))?;
    let trace_sum: f64 = sum.eigenvalues.iter().map(|l| l.exp()).sum();
    Ok(product - trace_sum)
}
