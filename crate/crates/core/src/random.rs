//! Seeded random matrices and channels for tests, sweeps and optimizer restarts.

use num_complex::Complex64;
use rand::Rng;
use rand_distr::StandardNormal;

use crate::channel::KrausSet;
use crate::linalg::{zeros, CMatrix};

/// Matrix with i.i.d. standard complex Gaussian entries.
pub fn ginibre<R: Rng + ?Sized>(rng: &mut R, rows: usize, cols: usize) -> CMatrix {
    CMatrix::from_fn(rows, cols, |_, _| {
        let re: f64 = rng.sample(StandardNormal);
        let im: f64 = rng.sample(StandardNormal);
        Complex64::new(re, im) * std::f64::consts::FRAC_1_SQRT_2
    })
}

/// Haar-random unitary (QR of a Ginibre matrix with the R-diagonal phases
/// removed).
pub fn haar_unitary<R: Rng + ?Sized>(rng: &mut R, n: usize) -> CMatrix {
    let qr = ginibre(rng, n, n).qr();
    let q = qr.q();
    let rmat = qr.r();
    let mut out = q.clone();
    for j in 0..n {
        let d = rmat[(j, j)];
        let phase = if d.norm() > 0.0 { d / d.norm() } else { Complex64::new(1.0, 0.0) };
        for i in 0..n {
            out[(i, j)] = q[(i, j)] * phase;
        }
    }
    out
}

/// Random channel on `dim` levels with exactly `rank` Kraus operators, taken
/// from a Haar-random isometry `C^dim -> C^rank ⊗ C^dim`.
pub fn random_kraus<R: Rng + ?Sized>(rng: &mut R, dim: usize, rank: usize) -> KrausSet {
    let u = haar_unitary(rng, rank * dim);
    let ops = (0..rank)
        .map(|k| {
            let mut op = zeros(dim, dim);
            for a in 0..dim {
                for i in 0..dim {
                    op[(a, i)] = u[(k * dim + a, i)];
                }
            }
            op
        })
        .collect();
    KrausSet::new(ops).expect("isometry blocks are complete")
}

/// Random density matrix of full rank (normalised Wishart).
pub fn random_density<R: Rng + ?Sized>(rng: &mut R, dim: usize) -> CMatrix {
    let g = ginibre(rng, dim, dim);
    let m = &g * g.adjoint();
    let t = crate::linalg::trace(&m);
    m / t
}

/// Random pure state projector.
pub fn random_pure<R: Rng + ?Sized>(rng: &mut R, dim: usize) -> CMatrix {
    let v = ginibre(rng, dim, 1);
    let norm = v.norm();
    let v = v / Complex64::new(norm, 0.0);
    &v * v.adjoint()
}

/// Random probability vector drawn from the flat Dirichlet distribution.
pub fn random_distribution<R: Rng + ?Sized>(rng: &mut R, n: usize) -> Vec<f64> {
    let draws: Vec<f64> = (0..n).map(|_| -(1.0 - rng.gen::<f64>()).ln()).collect();
    let total: f64 = draws.iter().sum();
    draws.into_iter().map(|x| x / total).collect()
}
