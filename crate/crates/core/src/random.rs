//! Seeded random matrix ensembles used by the experiments and tests.

use nalgebra::DVector;
use num_complex::Complex64;
use rand::Rng;
use rand_distr::StandardNormal;

use crate::hermitian::{CMatrix, CVector, DensityMatrix, HermitianMatrix};

pub fn complex_gaussian<R: Rng + ?Sized>(rng: &mut R) -> Complex64 {
    Complex64::new(rng.sample(StandardNormal), rng.sample(StandardNormal))
}

/// `D × D` matrix of i.i.d. standard complex Gaussians.
pub fn ginibre<R: Rng + ?Sized>(rows: usize, cols: usize, rng: &mut R) -> CMatrix {
    CMatrix::from_fn(rows, cols, |_, _| complex_gaussian(rng))
}

/// Gaussian-unitary-ensemble style Hermitian matrix `(G + Gᴴ) / 2`.
pub fn random_hermitian<R: Rng + ?Sized>(dim: usize, rng: &mut R) -> HermitianMatrix {
    HermitianMatrix::symmetrize(ginibre(dim, dim, rng))
}

/// Normalised state vector drawn uniformly from the unit sphere.
pub fn random_pure_state<R: Rng + ?Sized>(dim: usize, rng: &mut R) -> CVector {
    let v = DVector::from_fn(dim, |_, _| complex_gaussian(rng));
    let n = v.norm();
    v.unscale(n)
}

pub fn random_rank1_projector<R: Rng + ?Sized>(dim: usize, rng: &mut R) -> HermitianMatrix {
    HermitianMatrix::projector(&random_pure_state(dim, rng))
}

/// PSD matrix `G Gᴴ` with `G` of shape `dim × rank`.
pub fn random_psd<R: Rng + ?Sized>(dim: usize, rank: usize, rng: &mut R) -> HermitianMatrix {
    let g = ginibre(dim, rank, rng);
    HermitianMatrix::symmetrize(&g * g.adjoint())
}

/// Full-rank PSD matrix shifted away from singularity.
pub fn random_pd<R: Rng + ?Sized>(dim: usize, rng: &mut R) -> HermitianMatrix {
    let w = random_psd(dim, dim, rng);
    &w + &HermitianMatrix::scaled_identity(dim, 0.1)
}

/// Hilbert-Schmidt random density matrix.
pub fn random_density<R: Rng + ?Sized>(dim: usize, rng: &mut R) -> DensityMatrix {
    let w = random_psd(dim, dim, rng);
    let t = w.trace();
    DensityMatrix::new_unchecked(w.scale(1.0 / t))
}

/// Haar-distributed unitary via QR of a Ginibre matrix with phase fixing.
pub fn random_unitary<R: Rng + ?Sized>(dim: usize, rng: &mut R) -> CMatrix {
    let qr = ginibre(dim, dim, rng).qr();
    let r = qr.r();
    let mut q = qr.q();
    for j in 0..dim {
        let d = r[(j, j)];
        let phase = if d.norm() > 0.0 {
            d / d.norm()
        } else {
            Complex64::new(1.0, 0.0)
        };
        let mut col = q.column_mut(j);
        col *= phase;
    }
    q
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha20Rng;

    #[test]
    fn unitary_is_unitary() {
        let mut rng = ChaCha20Rng::seed_from_u64(0);
        let u = random_unitary(6, &mut rng);
        assert!((u.adjoint() * &u - CMatrix::identity(6, 6)).norm() < 1e-12);
    }

    #[test]
    fn seeded_draws_repeat() {
        let a = random_density(3, &mut ChaCha20Rng::seed_from_u64(11));
        let b = random_density(3, &mut ChaCha20Rng::seed_from_u64(11));
        assert_eq!(a, b);
        assert!((a.trace() - 1.0).abs() < 1e-14);
    }
}
