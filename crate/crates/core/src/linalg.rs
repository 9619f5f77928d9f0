//! Dense complex linear algebra kernels shared by every other module.
//!
//! Matrices are `nalgebra::DMatrix<Complex64>`. Multi-partite operators use
//! row-major tensor ordering: for subsystem dimensions `[d0, d1, ..]` the
//! basis state `|i0, i1, ..>` sits at index `i0 * (d1 * ..) + i1 * (..) + ..`.

use nalgebra::DMatrix;
use num_complex::Complex64;

use crate::error::{Error, Result};

pub type CMatrix = DMatrix<Complex64>;

pub const ZERO: Complex64 = Complex64 { re: 0.0, im: 0.0 };
pub const ONE: Complex64 = Complex64 { re: 1.0, im: 0.0 };
pub const I: Complex64 = Complex64 { re: 0.0, im: 1.0 };

#[inline]
pub fn c(re: f64, im: f64) -> Complex64 {
    Complex64::new(re, im)
}

#[inline]
pub fn r(re: f64) -> Complex64 {
    Complex64::new(re, 0.0)
}

pub fn identity(n: usize) -> CMatrix {
    CMatrix::identity(n, n)
}

pub fn zeros(rows: usize, cols: usize) -> CMatrix {
    CMatrix::zeros(rows, cols)
}

/// Builds a matrix from real row-major entries.
pub fn from_real_rows(rows: &[&[f64]]) -> CMatrix {
    let n = rows.len();
    let m = rows.first().map_or(0, |r| r.len());
    CMatrix::from_fn(n, m, |i, j| r(rows[i][j]))
}

pub fn kron(a: &CMatrix, b: &CMatrix) -> CMatrix {
    a.kronecker(b)
}

pub fn kron_all<'a>(ops: impl IntoIterator<Item = &'a CMatrix>) -> CMatrix {
    ops.into_iter()
        .fold(identity(1), |acc, op| acc.kronecker(op))
}

/// Block-diagonal direct sum `a ⊕ b`.
pub fn direct_sum(a: &CMatrix, b: &CMatrix) -> CMatrix {
    let mut out = zeros(a.nrows() + b.nrows(), a.ncols() + b.ncols());
    out.view_mut((0, 0), a.shape()).copy_from(a);
    out.view_mut((a.nrows(), a.ncols()), b.shape()).copy_from(b);
    out
}

pub fn max_abs(m: &CMatrix) -> f64 {
    m.iter().fold(0.0, |acc, z| acc.max(z.norm()))
}

pub fn max_abs_diff(a: &CMatrix, b: &CMatrix) -> f64 {
    assert_eq!(a.shape(), b.shape(), "max_abs_diff shape mismatch");
    a.iter().zip(b.iter()).fold(0.0, |acc, (x, y)| acc.max((x - y).norm()))
}

pub fn trace(m: &CMatrix) -> Complex64 {
    m.diagonal().iter().sum()
}

pub fn hermitian_residual(m: &CMatrix) -> f64 {
    if !m.is_square() {
        return f64::INFINITY;
    }
    max_abs_diff(m, &m.adjoint())
}

pub fn hermitian_part(m: &CMatrix) -> CMatrix {
    (m + m.adjoint()) * r(0.5)
}

pub fn unitarity_residual(u: &CMatrix) -> f64 {
    if !u.is_square() {
        return f64::INFINITY;
    }
    max_abs_diff(&(u.adjoint() * u), &identity(u.ncols()))
}

pub fn check_unitary(u: &CMatrix, tol: f64) -> Result<()> {
    let residual = unitarity_residual(u);
    if residual <= tol {
        Ok(())
    } else {
        Err(Error::NotUnitary { residual })
    }
}

/// Eigendecomposition of a Hermitian matrix.
///
/// Eigenvalues are sorted in descending order and each eigenvector is
/// phase-fixed so its largest-magnitude entry (lowest index on ties) is real
/// and positive, which makes downstream constructions deterministic.
#[derive(Debug, Clone)]
pub struct Eigh {
    pub values: Vec<f64>,
    pub vectors: CMatrix,
}

pub fn eigh(m: &CMatrix) -> Eigh {
    let n = m.nrows();
    if n == 0 {
        return Eigh { values: vec![], vectors: zeros(0, 0) };
    }
    let sym = hermitian_part(m);
    let decomposition = nalgebra::SymmetricEigen::new(sym);
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| {
        decomposition.eigenvalues[b]
            .partial_cmp(&decomposition.eigenvalues[a])
            .unwrap_or(std::cmp::Ordering::Equal)
    });
    let values = order.iter().map(|&k| decomposition.eigenvalues[k]).collect();
    let mut vectors = zeros(n, n);
    for (dst, &src) in order.iter().enumerate() {
        let mut col = decomposition.eigenvectors.column(src).into_owned();
        fix_phase(col.as_mut_slice());
        vectors.set_column(dst, &col);
    }
    Eigh { values, vectors }
}

/// Rotates a vector so the first entry of (numerically) maximal magnitude is
/// real and positive.
pub(crate) fn fix_phase(v: &mut [Complex64]) {
    let max = v.iter().fold(0.0f64, |acc, z| acc.max(z.norm()));
    if max == 0.0 {
        return;
    }
    let pivot = v
        .iter()
        .position(|z| z.norm() >= max * (1.0 - 1e-9))
        .expect("non-empty vector");
    let phase = v[pivot].conj() / v[pivot].norm();
    for z in v.iter_mut() {
        *z *= phase;
    }
}

/// Principal square root of a Hermitian PSD matrix. Negative eigenvalues are
/// clamped to zero.
pub fn hermitian_sqrt(m: &CMatrix) -> Result<CMatrix> {
    let residual = hermitian_residual(m);
    if residual > 1e-10 {
        return Err(Error::NotHermitian { residual });
    }
    let e = eigh(m);
    Ok(rebuild(&e, |x| x.max(0.0).sqrt()))
}

/// `V f(diag) V^dag` for a Hermitian eigendecomposition.
pub fn rebuild(e: &Eigh, f: impl Fn(f64) -> f64) -> CMatrix {
    let n = e.values.len();
    let mut scaled = e.vectors.clone();
    for (k, &lambda) in e.values.iter().enumerate() {
        let s = f(lambda);
        for i in 0..n {
            scaled[(i, k)] *= s;
        }
    }
    scaled * e.vectors.adjoint()
}

/// `exp(i H)` for Hermitian `H`.
pub fn expm_i_hermitian(h: &CMatrix) -> CMatrix {
    let e = eigh(h);
    let n = e.values.len();
    let mut scaled = e.vectors.clone();
    for (k, &lambda) in e.values.iter().enumerate() {
        let phase = Complex64::from_polar(1.0, lambda);
        for i in 0..n {
            scaled[(i, k)] *= phase;
        }
    }
    scaled * e.vectors.adjoint()
}

/// Factor `L` with `L L^dag = m` keeping eigen-directions above `cutoff`.
pub fn psd_factor(m: &CMatrix, cutoff: f64) -> CMatrix {
    let e = eigh(m);
    let kept: Vec<usize> = (0..e.values.len()).filter(|&k| e.values[k] > cutoff).collect();
    let mut out = zeros(m.nrows(), kept.len());
    for (dst, &k) in kept.iter().enumerate() {
        let s = e.values[k].sqrt();
        for i in 0..m.nrows() {
            out[(i, dst)] = e.vectors[(i, k)] * s;
        }
    }
    out
}

pub fn singular_values(m: &CMatrix) -> Vec<f64> {
    if m.nrows() == 0 || m.ncols() == 0 {
        return vec![];
    }
    m.clone().svd(false, false).singular_values.iter().copied().collect()
}

/// Eigenvalue floor accepted as roundoff before a matrix counts as non-PSD.
pub const PSD_FLOOR: f64 = -1e-10;

/// Relative cutoff below which eigen-directions are dropped from PSD factors
/// used in fidelity evaluation.
const FIDELITY_CUTOFF: f64 = 1e-14;

/// Uhlmann fidelity `(tr sqrt(sqrt(A) B sqrt(A)))^2` of two unit-trace PSD
/// matrices.
///
/// Evaluated as the squared trace norm of `L_A^dag L_B` for PSD factors
/// `L L^dag`, which avoids square roots of roundoff-level eigenvalues.
pub fn uhlmann_fidelity(a: &CMatrix, b: &CMatrix) -> Result<f64> {
    if a.shape() != b.shape() {
        return Err(Error::DimensionMismatch(format!(
            "fidelity between {:?} and {:?} matrices",
            a.shape(),
            b.shape()
        )));
    }
    let fa = clamped_factor(a)?;
    let fb = clamped_factor(b)?;
    let overlap = fa.adjoint() * fb;
    let norm: f64 = singular_values(&overlap).iter().sum();
    Ok((norm * norm).clamp(0.0, 1.0))
}

fn clamped_factor(m: &CMatrix) -> Result<CMatrix> {
    let residual = hermitian_residual(m);
    if residual > 1e-10 {
        return Err(Error::NotHermitian { residual });
    }
    let e = eigh(m);
    let min = e.values.last().copied().unwrap_or(0.0);
    if min < PSD_FLOOR {
        return Err(Error::NotPositive { min_eigenvalue: min });
    }
    let scale = e.values.first().copied().unwrap_or(0.0).max(1.0);
    let kept: Vec<usize> =
        (0..e.values.len()).filter(|&k| e.values[k] > FIDELITY_CUTOFF * scale).collect();
    let mut out = zeros(m.nrows(), kept.len());
    for (dst, &k) in kept.iter().enumerate() {
        let s = e.values[k].sqrt();
        for i in 0..m.nrows() {
            out[(i, dst)] = e.vectors[(i, k)] * s;
        }
    }
    Ok(out)
}

/// Linear offsets of every multi-index over `positions` (row-major over the
/// listed positions) inside a tensor with subsystem dimensions `dims`.
pub fn subsystem_offsets(dims: &[usize], positions: &[usize]) -> Vec<usize> {
    let mut strides = vec![1usize; dims.len()];
    for p in (0..dims.len().saturating_sub(1)).rev() {
        strides[p] = strides[p + 1] * dims[p + 1];
    }
    let mut offsets = vec![0usize];
    for &p in positions {
        let mut next = Vec::with_capacity(offsets.len() * dims[p]);
        for &o in &offsets {
            for k in 0..dims[p] {
                next.push(o + k * strides[p]);
            }
        }
        offsets = next;
    }
    offsets
}

fn complement(n: usize, positions: &[usize]) -> Vec<usize> {
    (0..n).filter(|p| !positions.contains(p)).collect()
}

/// Partial trace keeping the subsystems at `keep` (in the given order).
pub fn partial_trace(m: &CMatrix, dims: &[usize], keep: &[usize]) -> CMatrix {
    let traced = complement(dims.len(), keep);
    let off_keep = subsystem_offsets(dims, keep);
    let off_trace = subsystem_offsets(dims, &traced);
    let n = off_keep.len();
    CMatrix::from_fn(n, n, |a, b| {
        off_trace
            .iter()
            .map(|&t| m[(off_keep[a] + t, off_keep[b] + t)])
            .sum()
    })
}

/// `(op acting on positions) * m` without forming the full embedded operator.
pub fn local_mul_left(op: &CMatrix, m: &CMatrix, dims: &[usize], positions: &[usize]) -> CMatrix {
    let off_p = subsystem_offsets(dims, positions);
    let off_r = subsystem_offsets(dims, &complement(dims.len(), positions));
    debug_assert_eq!(op.nrows(), off_p.len());
    let ncols = m.ncols();
    let mut out = zeros(m.nrows(), ncols);
    for &o in &off_r {
        for (x, &px) in off_p.iter().enumerate() {
            let row = o + px;
            for (y, &py) in off_p.iter().enumerate() {
                let coef = op[(x, y)];
                if coef == ZERO {
                    continue;
                }
                let src = o + py;
                for col in 0..ncols {
                    out[(row, col)] += coef * m[(src, col)];
                }
            }
        }
    }
    out
}

/// `m * (op acting on positions)^dag`.
pub fn local_mul_right_adjoint(
    op: &CMatrix,
    m: &CMatrix,
    dims: &[usize],
    positions: &[usize],
) -> CMatrix {
    let off_p = subsystem_offsets(dims, positions);
    let off_r = subsystem_offsets(dims, &complement(dims.len(), positions));
    let nrows = m.nrows();
    let mut out = zeros(nrows, m.ncols());
    for &o in &off_r {
        for (x, &px) in off_p.iter().enumerate() {
            let col = o + px;
            for (y, &py) in off_p.iter().enumerate() {
                let coef = op[(x, y)].conj();
                if coef == ZERO {
                    continue;
                }
                let src = o + py;
                for row in 0..nrows {
                    out[(row, col)] += m[(row, src)] * coef;
                }
            }
        }
    }
    out
}

/// Extends orthonormal columns to a full unitary.
///
/// Candidates are the computational basis vectors; at each step the candidate
/// with the largest residual after projection is chosen, and the chosen
/// vector is re-orthogonalised twice before normalisation.
pub fn complete_unitary(columns: &CMatrix) -> Result<CMatrix> {
    let n = columns.nrows();
    let k = columns.ncols();
    if k > n {
        return Err(Error::Shape(format!("cannot complete {n}x{k} isometry to a unitary")));
    }
    let residual = max_abs_diff(&(columns.adjoint() * columns), &identity(k));
    if residual > 1e-9 {
        return Err(Error::NotUnitary { residual });
    }
    let mut basis: Vec<Vec<Complex64>> =
        (0..k).map(|j| columns.column(j).iter().copied().collect()).collect();
    let mut candidates: Vec<usize> = (0..n).collect();
    while basis.len() < n {
        let mut best: Option<(usize, f64, Vec<Complex64>)> = None;
        for (slot, &e) in candidates.iter().enumerate() {
            let mut v = vec![ZERO; n];
            v[e] = ONE;
            project_out(&mut v, &basis);
            project_out(&mut v, &basis);
            let norm = vec_norm(&v);
            if best.as_ref().map_or(true, |(_, b, _)| norm > *b + 1e-14) {
                best = Some((slot, norm, v));
            }
        }
        let (slot, norm, mut v) = best.expect("candidates remain while basis is incomplete");
        if norm < 1e-8 {
            return Err(Error::Shape("Gram-Schmidt completion lost rank".into()));
        }
        candidates.remove(slot);
        scale(&mut v, 1.0 / norm);
        project_out(&mut v, &basis);
        let renorm = vec_norm(&v);
        scale(&mut v, 1.0 / renorm);
        basis.push(v);
    }
    Ok(CMatrix::from_fn(n, n, |i, j| basis[j][i]))
}

fn project_out(v: &mut [Complex64], basis: &[Vec<Complex64>]) {
    for b in basis {
        let overlap: Complex64 = b.iter().zip(v.iter()).map(|(x, y)| x.conj() * y).sum();
        for (vi, bi) in v.iter_mut().zip(b) {
            *vi -= overlap * bi;
        }
    }
}

fn vec_norm(v: &[Complex64]) -> f64 {
    v.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
}

fn scale(v: &mut [Complex64], s: f64) {
    for z in v.iter_mut() {
        *z *= s;
    }
}

/// Single-qubit Pauli matrices in the order I, X, Y, Z.
pub fn paulis() -> [CMatrix; 4] {
    [
        identity(2),
        from_real_rows(&[&[0.0, 1.0], &[1.0, 0.0]]),
        CMatrix::from_row_slice(2, 2, &[ZERO, -I, I, ZERO]),
        from_real_rows(&[&[1.0, 0.0], &[0.0, -1.0]]),
    ]
}

/// n-qubit Pauli string for index `idx` in base 4 (first qubit is the most
/// significant digit; digits 0..3 map to I, X, Y, Z).
pub fn pauli_string(n: usize, idx: usize) -> CMatrix {
    let p = paulis();
    let digits: Vec<usize> = (0..n).map(|q| (idx >> (2 * (n - 1 - q))) & 3).collect();
    kron_all(digits.iter().map(|&d| &p[d]))
}

/// Row-major vectorisation: `|rho>> = sum rho_ij |i, j>`.
pub fn vectorize(m: &CMatrix) -> nalgebra::DVector<Complex64> {
    let (rows, cols) = m.shape();
    nalgebra::DVector::from_fn(rows * cols, |k, _| m[(k / cols, k % cols)])
}

pub fn unvectorize(v: &nalgebra::DVector<Complex64>, rows: usize, cols: usize) -> CMatrix {
    CMatrix::from_fn(rows, cols, |i, j| v[i * cols + j])
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::random;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn sqrt_of_identity_and_diagonal() {
        let id = identity(3);
        assert!(max_abs_diff(&hermitian_sqrt(&id).unwrap(), &id) < 1e-14);
        let d = from_real_rows(&[&[4.0, 0.0], &[0.0, 9.0]]);
        let s = hermitian_sqrt(&d).unwrap();
        assert!(max_abs_diff(&s, &from_real_rows(&[&[2.0, 0.0], &[0.0, 3.0]])) < 1e-14);
    }

    #[test]
    fn sqrt_reconstructs_random_psd() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for n in [2, 3, 5, 8] {
            let g = random::ginibre(&mut rng, n, n);
            let m = &g * g.adjoint();
            let s = hermitian_sqrt(&m).unwrap();
            assert!(max_abs_diff(&(&s * &s), &m) < 1e-8);
        }
    }

    #[test]
    fn sqrt_rejects_non_hermitian() {
        let m = from_real_rows(&[&[1.0, 1.0], &[0.0, 1.0]]);
        assert!(matches!(hermitian_sqrt(&m), Err(Error::NotHermitian { .. })));
    }

    #[test]
    fn eigenvectors_are_phase_fixed_and_sorted() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let g = random::ginibre(&mut rng, 4, 4);
        let m = &g * g.adjoint();
        let e = eigh(&m);
        assert!(e.values.windows(2).all(|w| w[0] >= w[1]));
        assert!(max_abs_diff(&rebuild(&e, |x| x), &m) < 1e-10);
        for k in 0..4 {
            let col: Vec<Complex64> = e.vectors.column(k).iter().copied().collect();
            let max = col.iter().fold(0.0f64, |a, z| a.max(z.norm()));
            let pivot = col.iter().position(|z| z.norm() >= max * (1.0 - 1e-9)).unwrap();
            assert!(col[pivot].im.abs() < 1e-12 && col[pivot].re > 0.0);
        }
    }

    #[test]
    fn partial_trace_of_product_state() {
        let a = from_real_rows(&[&[0.25, 0.1], &[0.1, 0.75]]);
        let b = from_real_rows(&[&[0.5, 0.0, 0.0], &[0.0, 0.3, 0.0], &[0.0, 0.0, 0.2]]);
        let ab = kron(&a, &b);
        assert!(max_abs_diff(&partial_trace(&ab, &[2, 3], &[0]), &a) < 1e-15);
        assert!(max_abs_diff(&partial_trace(&ab, &[2, 3], &[1]), &b) < 1e-15);
    }

    #[test]
    fn local_multiplication_matches_embedding() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let dims = [2, 3, 2];
        let m = random::ginibre(&mut rng, 12, 12);
        let op = random::ginibre(&mut rng, 2, 2);
        // op on position 2 equals 1 ⊗ 1 ⊗ op
        let full = kron(&identity(6), &op);
        assert!(max_abs_diff(&local_mul_left(&op, &m, &dims, &[2]), &(&full * &m)) < 1e-12);
        assert!(
            max_abs_diff(&local_mul_right_adjoint(&op, &m, &dims, &[2]), &(&m * full.adjoint()))
                < 1e-12
        );
        // two-site operator on positions (2, 0) equals a permuted embedding
        let op2 = random::ginibre(&mut rng, 4, 4);
        let left = local_mul_left(&op2, &m, &dims, &[2, 0]);
        let mut expected = zeros(12, 12);
        for i0 in 0..2 {
            for i1 in 0..3 {
                for i2 in 0..2 {
                    let row = i0 * 6 + i1 * 2 + i2;
                    for j0 in 0..2 {
                        for j2 in 0..2 {
                            let src = j0 * 6 + i1 * 2 + j2;
                            for col in 0..12 {
                                expected[(row, col)] += op2[(i2 * 2 + i0, j2 * 2 + j0)] * m[(src, col)];
                            }
                        }
                    }
                }
            }
        }
        assert!(max_abs_diff(&left, &expected) < 1e-12);
    }

    #[test]
    fn completion_yields_unitary_with_prefix() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let u = random::haar_unitary(&mut rng, 6);
        let prefix = u.columns(0, 2).into_owned();
        let full = complete_unitary(&prefix).unwrap();
        assert!(unitarity_residual(&full) < 1e-12);
        assert!(max_abs_diff(&full.columns(0, 2).into_owned(), &prefix) < 1e-15);
    }

    #[test]
    fn fidelity_of_pure_states_is_overlap() {
        let psi = CMatrix::from_column_slice(2, 1, &[r(1.0), ZERO]);
        let phi = CMatrix::from_column_slice(2, 1, &[r(0.6), c(0.0, 0.8)]);
        let a = &psi * psi.adjoint();
        let b = &phi * phi.adjoint();
        assert!((uhlmann_fidelity(&a, &b).unwrap() - 0.36).abs() < 1e-14);
    }

    #[test]
    fn pauli_strings() {
        let p = paulis();
        assert!(max_abs_diff(&pauli_string(1, 2), &p[2]) < 1e-15);
        assert!(max_abs_diff(&pauli_string(2, 0b0111), &kron(&p[1], &p[3])) < 1e-15);
        for m in p.iter() {
            assert!(unitarity_residual(m) < 1e-15);
        }
    }
}
