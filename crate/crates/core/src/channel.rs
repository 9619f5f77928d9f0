//! Completely positive trace-preserving maps and their representations.
//!
//! A [`Channel`] stores its Choi state `Φ = (E ⊗ id)(|Φ+><Φ+|)` with unit
//! trace; the output factor comes first. Kraus operators and the Liouville
//! superoperator are derived on demand and cached.
//!
//! Conventions:
//! - vectorisation is row-major, `|ρ>> = Σ ρ_ij |i, j>`;
//! - with that ordering the superoperator is `Σ K ⊗ conj(K)`, so that
//!   `vec(K ρ K†) = (K ⊗ conj(K)) vec(ρ)` and composition is a matrix product;
//! - Choi and superoperator entries are related by swapping the two middle
//!   tensor indices, `J[(a,i),(c,j)] = S[(a,c),(i,j)]`, with `J = d_in Φ`.

use std::fmt;
use std::sync::OnceLock;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{
    self, eigh, hermitian_part, hermitian_residual, identity, max_abs, max_abs_diff, r, CMatrix,
    Eigh, PSD_FLOOR,
};
use crate::serde_util;

/// Eigenvalues of the Choi state above this count towards the Kraus rank.
pub const KRAUS_CUTOFF: f64 = 1e-12;
/// Tolerance for positivity and trace preservation checks.
pub const CPTP_TOL: f64 = 1e-10;

/// A set of Kraus operators `{K_i}` with `Σ K_i† K_i = 1`.
#[derive(Debug, Clone, PartialEq)]
pub struct KrausSet {
    dim_in: usize,
    dim_out: usize,
    operators: Vec<CMatrix>,
}

impl KrausSet {
    pub fn new(operators: Vec<CMatrix>) -> Result<Self> {
        let set = Self::new_unchecked(operators)?;
        let residual = set.completeness_residual();
        if residual > CPTP_TOL {
            return Err(Error::CompletenessViolation { residual });
        }
        Ok(set)
    }

    /// Checks only that the operators share a shape.
    pub fn new_unchecked(operators: Vec<CMatrix>) -> Result<Self> {
        let first = operators
            .first()
            .ok_or_else(|| Error::Shape("a Kraus set needs at least one operator".into()))?;
        let (dim_out, dim_in) = first.shape();
        if dim_in == 0 || dim_out == 0 {
            return Err(Error::Shape("Kraus operators must be non-empty".into()));
        }
        if let Some(bad) = operators.iter().find(|k| k.shape() != (dim_out, dim_in)) {
            return Err(Error::Shape(format!(
                "Kraus operator of shape {:?} in a set of shape {:?}",
                bad.shape(),
                (dim_out, dim_in)
            )));
        }
        Ok(Self { dim_in, dim_out, operators })
    }

    /// `|Σ K_i† K_i - 1|_max`.
    pub fn completeness_residual(&self) -> f64 {
        let sum = self
            .operators
            .iter()
            .fold(CMatrix::zeros(self.dim_in, self.dim_in), |acc, k| acc + k.adjoint() * k);
        max_abs_diff(&sum, &identity(self.dim_in))
    }

    pub fn dim_in(&self) -> usize {
        self.dim_in
    }

    pub fn dim_out(&self) -> usize {
        self.dim_out
    }

    pub fn operators(&self) -> &[CMatrix] {
        &self.operators
    }

    pub fn len(&self) -> usize {
        self.operators.len()
    }

    pub fn is_empty(&self) -> bool {
        self.operators.is_empty()
    }

    pub fn into_operators(self) -> Vec<CMatrix> {
        self.operators
    }

    /// `Σ K ρ K†` without any validation of `ρ`.
    pub fn act(&self, rho: &CMatrix) -> CMatrix {
        self.operators
            .iter()
            .fold(CMatrix::zeros(self.dim_out, self.dim_out), |acc, k| {
                acc + k * rho * k.adjoint()
            })
    }
}

/// Liouville superoperator acting on row-major vectorised matrices.
#[derive(Debug, Clone, PartialEq)]
pub struct Superoperator {
    pub dim_in: usize,
    pub dim_out: usize,
    pub matrix: CMatrix,
}

impl Superoperator {
    pub fn new(matrix: CMatrix, dim_in: usize, dim_out: usize) -> Result<Self> {
        if matrix.shape() != (dim_out * dim_out, dim_in * dim_in) {
            return Err(Error::Shape(format!(
                "superoperator for {dim_in}->{dim_out} must be {}x{}, got {:?}",
                dim_out * dim_out,
                dim_in * dim_in,
                matrix.shape()
            )));
        }
        Ok(Self { dim_in, dim_out, matrix })
    }

    pub fn act(&self, rho: &CMatrix) -> CMatrix {
        let v = &self.matrix * linalg::vectorize(rho);
        linalg::unvectorize(&v, self.dim_out, self.dim_out)
    }

    /// Trace of the image of the maximally mixed input; 1 for trace-preserving maps.
    pub fn image_trace_of_mixed(&self) -> f64 {
        let mixed = identity(self.dim_in) / r(self.dim_in as f64);
        linalg::trace(&self.act(&mixed)).re
    }
}

/// A density matrix: Hermitian, unit trace, positive semidefinite.
#[derive(Debug, Clone, PartialEq)]
pub struct DensityMatrix {
    matrix: CMatrix,
}

impl DensityMatrix {
    pub fn new(matrix: CMatrix) -> Result<Self> {
        if !matrix.is_square() || matrix.nrows() == 0 {
            return Err(Error::InvalidState(format!("shape {:?} is not square", matrix.shape())));
        }
        let herm = hermitian_residual(&matrix);
        if herm > 1e-12 {
            return Err(Error::InvalidState(format!("Hermitian residual {herm:.3e}")));
        }
        let matrix = hermitian_part(&matrix);
        let tr = linalg::trace(&matrix).re;
        if (tr - 1.0).abs() > CPTP_TOL {
            return Err(Error::InvalidState(format!("trace {tr}")));
        }
        let min = eigh(&matrix).values.last().copied().unwrap_or(0.0);
        if min < PSD_FLOOR {
            return Err(Error::InvalidState(format!("minimum eigenvalue {min:.3e}")));
        }
        Ok(Self { matrix })
    }

    /// Wraps a matrix already known to be a state, e.g. the output of a channel.
    pub(crate) fn from_trusted(matrix: CMatrix) -> Self {
        Self { matrix: hermitian_part(&matrix) }
    }

    pub fn pure(amplitudes: &[num_complex::Complex64]) -> Result<Self> {
        let norm: f64 = amplitudes.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
        if norm == 0.0 {
            return Err(Error::InvalidState("zero vector".into()));
        }
        let v = CMatrix::from_column_slice(amplitudes.len(), 1, amplitudes) / r(norm);
        Ok(Self { matrix: &v * v.adjoint() })
    }

    pub fn basis(dim: usize, k: usize) -> Self {
        let mut m = CMatrix::zeros(dim, dim);
        m[(k, k)] = r(1.0);
        Self { matrix: m }
    }

    pub fn maximally_mixed(dim: usize) -> Self {
        Self { matrix: identity(dim) / r(dim as f64) }
    }

    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn matrix(&self) -> &CMatrix {
        &self.matrix
    }

    pub fn into_matrix(self) -> CMatrix {
        self.matrix
    }

    pub fn fidelity(&self, other: &DensityMatrix) -> Result<f64> {
        linalg::uhlmann_fidelity(&self.matrix, &other.matrix)
    }
}

/// A quantum channel held in Choi form.
#[derive(Clone)]
pub struct Channel {
    dim_in: usize,
    dim_out: usize,
    choi: CMatrix,
    spectrum: OnceLock<Eigh>,
    kraus: OnceLock<KrausSet>,
    superop: OnceLock<CMatrix>,
}

impl fmt::Debug for Channel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Channel")
            .field("dim_in", &self.dim_in)
            .field("dim_out", &self.dim_out)
            .field("kraus_rank", &self.kraus_rank())
            .finish()
    }
}

impl PartialEq for Channel {
    fn eq(&self, other: &Self) -> bool {
        self.dim_in == other.dim_in && self.dim_out == other.dim_out && self.choi == other.choi
    }
}

impl Channel {
    /// Builds a channel from a unit-trace Choi state, rejecting anything that
    /// is not CPTP within [`CPTP_TOL`].
    pub fn from_choi(choi: CMatrix, dim_in: usize, dim_out: usize) -> Result<Self> {
        let ch = Self::from_choi_unchecked(choi, dim_in, dim_out)?;
        let herm = hermitian_residual(&ch.choi);
        if herm > CPTP_TOL {
            return Err(Error::NotHermitian { residual: herm });
        }
        let ch = Self::from_choi_trusted(ch.choi, dim_in, dim_out);
        let report = ch.validate();
        if !report.passed {
            return Err(Error::InvalidChannel {
                min_eigenvalue: report.min_eigenvalue,
                tp_residual: report.tp_residual,
            });
        }
        Ok(ch)
    }

    /// Wraps a Choi matrix after checking only its shape. Use
    /// [`Channel::validate`] to inspect it.
    pub fn from_choi_unchecked(choi: CMatrix, dim_in: usize, dim_out: usize) -> Result<Self> {
        let n = dim_in * dim_out;
        if n == 0 || choi.shape() != (n, n) {
            return Err(Error::Shape(format!(
                "Choi matrix for {dim_in}->{dim_out} must be {n}x{n}, got {:?}",
                choi.shape()
            )));
        }
        Ok(Self::raw(choi, dim_in, dim_out))
    }

    pub(crate) fn from_choi_trusted(choi: CMatrix, dim_in: usize, dim_out: usize) -> Self {
        Self::raw(hermitian_part(&choi), dim_in, dim_out)
    }

    fn raw(choi: CMatrix, dim_in: usize, dim_out: usize) -> Self {
        Self {
            dim_in,
            dim_out,
            choi,
            spectrum: OnceLock::new(),
            kraus: OnceLock::new(),
            superop: OnceLock::new(),
        }
    }

    pub fn from_kraus(ks: &KrausSet) -> Self {
        let (dim_in, dim_out) = (ks.dim_in(), ks.dim_out());
        let n = dim_in * dim_out;
        let mut j = CMatrix::zeros(n, n);
        for k in ks.operators() {
            let v = row_major(k);
            j += &v * v.adjoint();
        }
        let ch = Self::from_choi_trusted(j / r(dim_in as f64), dim_in, dim_out);
        let _ = ch.kraus.set(ks.clone());
        ch
    }

    pub fn from_superop(s: &Superoperator) -> Result<Self> {
        let j = reshuffle(&s.matrix, (s.dim_out, s.dim_out), (s.dim_in, s.dim_in))?;
        Self::from_choi(j / r(s.dim_in as f64), s.dim_in, s.dim_out)
    }

    pub fn identity(dim: usize) -> Self {
        Self::from_kraus(&KrausSet { dim_in: dim, dim_out: dim, operators: vec![identity(dim)] })
    }

    /// Conjugation `ρ -> U ρ U†` by a unitary (isometries are accepted too).
    pub fn unitary(u: &CMatrix) -> Result<Self> {
        Ok(Self::from_kraus(&KrausSet::new(vec![u.clone()])?))
    }

    pub fn dim_in(&self) -> usize {
        self.dim_in
    }

    pub fn dim_out(&self) -> usize {
        self.dim_out
    }

    pub fn choi(&self) -> &CMatrix {
        &self.choi
    }

    fn spectrum(&self) -> &Eigh {
        self.spectrum.get_or_init(|| eigh(&self.choi))
    }

    pub fn choi_eigenvalues(&self) -> &[f64] {
        &self.spectrum().values
    }

    pub fn kraus_rank(&self) -> usize {
        self.spectrum().values.iter().filter(|&&v| v > KRAUS_CUTOFF).count()
    }

    /// Canonical (minimal, orthogonal) Kraus operators from the Choi
    /// eigendecomposition, unless the channel was built from explicit
    /// operators, in which case those are returned.
    pub fn kraus(&self) -> &KrausSet {
        self.kraus.get_or_init(|| canonical_kraus(self))
    }

    pub fn superop_matrix(&self) -> &CMatrix {
        self.superop.get_or_init(|| {
            let j = &self.choi * r(self.dim_in as f64);
            reshuffle(&j, (self.dim_out, self.dim_in), (self.dim_out, self.dim_in))
                .expect("Choi shape fixed at construction")
        })
    }

    pub fn superop(&self) -> Superoperator {
        Superoperator {
            dim_in: self.dim_in,
            dim_out: self.dim_out,
            matrix: self.superop_matrix().clone(),
        }
    }

    /// Applies the channel to any operator (linear extension, no checks).
    pub fn act(&self, rho: &CMatrix) -> CMatrix {
        self.kraus().act(rho)
    }

    pub fn apply(&self, rho: &DensityMatrix) -> Result<DensityMatrix> {
        apply(self, rho)
    }

    /// `E ⊗ F` acting on the tensor product of the two inputs.
    pub fn tensor(&self, other: &Channel) -> Channel {
        let mut ops = Vec::with_capacity(self.kraus().len() * other.kraus().len());
        for a in self.kraus().operators() {
            for b in other.kraus().operators() {
                ops.push(linalg::kron(a, b));
            }
        }
        Channel::from_kraus(&KrausSet {
            dim_in: self.dim_in * other.dim_in,
            dim_out: self.dim_out * other.dim_out,
            operators: ops,
        })
    }

    /// `self` followed by `next`.
    pub fn then(&self, next: &Channel) -> Result<Channel> {
        compose(next, self)
    }

    pub fn validate(&self) -> CptpReport {
        validate_cptp(self)
    }

    pub fn to_json(&self) -> ChannelJson {
        let (choi_re, choi_im) = serde_util::split_parts(&self.choi);
        ChannelJson {
            dim_in: self.dim_in,
            dim_out: self.dim_out,
            choi_re,
            choi_im,
            normalization: "trace1".into(),
        }
    }
}

fn row_major(k: &CMatrix) -> CMatrix {
    let (rows, cols) = k.shape();
    CMatrix::from_fn(rows * cols, 1, |idx, _| k[(idx / cols, idx % cols)])
}

fn canonical_kraus(ch: &Channel) -> KrausSet {
    let e = ch.spectrum();
    let d_in = ch.dim_in;
    let d_out = ch.dim_out;
    let mut ops: Vec<CMatrix> = e
        .values
        .iter()
        .enumerate()
        .filter(|(_, &lambda)| lambda > KRAUS_CUTOFF)
        .map(|(k, &lambda)| {
            let scale = (lambda * d_in as f64).sqrt();
            CMatrix::from_fn(d_out, d_in, |a, i| e.vectors[(a * d_in + i, k)] * scale)
        })
        .collect();
    if ops.is_empty() {
        ops.push(CMatrix::zeros(d_out, d_in));
    }
    KrausSet { dim_in: d_in, dim_out: d_out, operators: ops }
}

/// Serialized channel: `{dim_in, dim_out, choi_re, choi_im, normalization}`.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct ChannelJson {
    pub dim_in: usize,
    pub dim_out: usize,
    pub choi_re: Vec<Vec<f64>>,
    pub choi_im: Vec<Vec<f64>>,
    pub normalization: String,
}

impl ChannelJson {
    fn matrix(&self) -> Result<CMatrix> {
        if self.normalization != "trace1" {
            return Err(Error::Config(format!(
                "unsupported Choi normalization {:?} (expected \"trace1\")",
                self.normalization
            )));
        }
        serde_util::join_parts(&self.choi_re, &self.choi_im)
    }

    pub fn to_channel(&self) -> Result<Channel> {
        Channel::from_choi(self.matrix()?, self.dim_in, self.dim_out)
    }

    /// Decodes without CPTP validation, for inspecting broken inputs.
    pub fn to_channel_unchecked(&self) -> Result<Channel> {
        Channel::from_choi_unchecked(self.matrix()?, self.dim_in, self.dim_out)
    }
}

impl Serialize for Channel {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        self.to_json().serialize(s)
    }
}

impl<'de> Deserialize<'de> for Channel {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        ChannelJson::deserialize(d)?.to_channel().map_err(serde::de::Error::custom)
    }
}

/// Result of a CPTP check on a Choi matrix.
#[derive(Debug, Clone, Copy, Serialize, Deserialize, PartialEq)]
pub struct CptpReport {
    pub min_eigenvalue: f64,
    /// `|d_in tr_out(Φ) - 1|_max`, equal to `|Σ K† K - 1|_max`.
    pub tp_residual: f64,
    pub hermitian_residual: f64,
    pub passed: bool,
}

pub fn kraus_to_choi(ks: &KrausSet) -> Channel {
    Channel::from_kraus(ks)
}

/// Kraus operators `√(d p_i) Ω_i` from the eigendecomposition of the Choi state.
pub fn choi_to_kraus(ch: &Channel) -> KrausSet {
    canonical_kraus(ch)
}

pub fn kraus_to_superop(ks: &KrausSet) -> Superoperator {
    let n_out = ks.dim_out() * ks.dim_out();
    let n_in = ks.dim_in() * ks.dim_in();
    let matrix = ks
        .operators()
        .iter()
        .fold(CMatrix::zeros(n_out, n_in), |acc, k| acc + linalg::kron(k, &k.map(|z| z.conj())));
    Superoperator { dim_in: ks.dim_in(), dim_out: ks.dim_out(), matrix }
}

/// Swaps the middle tensor indices of a matrix whose rows are indexed by
/// `(a, b)` with dimensions `row_dims` and columns by `(c, e)` with
/// dimensions `col_dims`: `out[(a, c), (b, e)] = m[(a, b), (c, e)]`.
///
/// Applying it to a superoperator (rows `(d_out, d_out)`, columns
/// `(d_in, d_in)`) yields the unnormalised Choi matrix and vice versa.
pub fn reshuffle(
    m: &CMatrix,
    row_dims: (usize, usize),
    col_dims: (usize, usize),
) -> Result<CMatrix> {
    let (r1, r2) = row_dims;
    let (c1, c2) = col_dims;
    if m.shape() != (r1 * r2, c1 * c2) {
        return Err(Error::Shape(format!(
            "matrix {:?} does not factor as ({r1}*{r2}) x ({c1}*{c2})",
            m.shape()
        )));
    }
    Ok(CMatrix::from_fn(r1 * c1, r2 * c2, |row, col| {
        let (a, c) = (row / c1, row % c1);
        let (b, e) = (col / c2, col % c2);
        m[(a * r2 + b, c * c2 + e)]
    }))
}

/// Reshuffle for square `d² x d²` matrices (equal input and output
/// dimension). It is an involution.
pub fn superop_choi_reshuffle(m: &CMatrix) -> Result<CMatrix> {
    let n = m.nrows();
    let d = (n as f64).sqrt().round() as usize;
    if !m.is_square() || d * d != n {
        return Err(Error::Shape(format!(
            "reshuffle needs a square d^2 x d^2 matrix, got {:?}",
            m.shape()
        )));
    }
    reshuffle(m, (d, d), (d, d))
}

/// `second ∘ first`.
pub fn compose(second: &Channel, first: &Channel) -> Result<Channel> {
    if first.dim_out != second.dim_in {
        return Err(Error::DimensionMismatch(format!(
            "cannot compose {}->{} after {}->{}",
            second.dim_in, second.dim_out, first.dim_in, first.dim_out
        )));
    }
    let s = second.superop_matrix() * first.superop_matrix();
    let j = reshuffle(&s, (second.dim_out, second.dim_out), (first.dim_in, first.dim_in))?;
    Ok(Channel::from_choi_trusted(j / r(first.dim_in as f64), first.dim_in, second.dim_out))
}

/// Convex combination `Σ p_k E_k`.
pub fn mix(channels: &[Channel], probs: &[f64]) -> Result<Channel> {
    if channels.is_empty() || channels.len() != probs.len() {
        return Err(Error::DimensionMismatch(format!(
            "{} channels with {} probabilities",
            channels.len(),
            probs.len()
        )));
    }
    check_distribution(probs, 1e-12)?;
    let (dim_in, dim_out) = (channels[0].dim_in, channels[0].dim_out);
    if channels.iter().any(|c| c.dim_in != dim_in || c.dim_out != dim_out) {
        return Err(Error::DimensionMismatch("mixed channels must share dimensions".into()));
    }
    let n = dim_in * dim_out;
    let choi = channels
        .iter()
        .zip(probs)
        .fold(CMatrix::zeros(n, n), |acc, (c, &p)| acc + c.choi() * r(p));
    Ok(Channel::from_choi_trusted(choi, dim_in, dim_out))
}

pub(crate) fn check_distribution(probs: &[f64], tol: f64) -> Result<()> {
    let sum: f64 = probs.iter().sum();
    if probs.iter().any(|&p| !(p >= 0.0)) || (sum - 1.0).abs() > tol {
        return Err(Error::InvalidDistribution { sum });
    }
    Ok(())
}

pub fn apply(ch: &Channel, rho: &DensityMatrix) -> Result<DensityMatrix> {
    if rho.dim() != ch.dim_in {
        return Err(Error::DimensionMismatch(format!(
            "state of dimension {} into channel with input dimension {}",
            rho.dim(),
            ch.dim_in
        )));
    }
    Ok(DensityMatrix::from_trusted(ch.act(rho.matrix())))
}

/// Uhlmann fidelity between the (unit-trace) Choi states of two channels.
pub fn choi_fidelity(a: &Channel, b: &Channel) -> Result<f64> {
    if a.dim_in != b.dim_in || a.dim_out != b.dim_out {
        return Err(Error::DimensionMismatch(format!(
            "fidelity between {}->{} and {}->{} channels",
            a.dim_in, a.dim_out, b.dim_in, b.dim_out
        )));
    }
    linalg::uhlmann_fidelity(a.choi(), b.choi()).map_err(|e| match e {
        Error::NotPositive { min_eigenvalue } | Error::InvalidChannel { min_eigenvalue, .. } => {
            Error::InvalidChannel { min_eigenvalue, tp_residual: f64::NAN }
        }
        other => other,
    })
}

pub fn validate_cptp(ch: &Channel) -> CptpReport {
    let hermitian_residual = hermitian_residual(ch.choi());
    let min_eigenvalue = eigh(&hermitian_part(ch.choi())).values.last().copied().unwrap_or(0.0);
    let reduced = linalg::partial_trace(ch.choi(), &[ch.dim_out, ch.dim_in], &[1]);
    let tp_residual = max_abs(&(reduced * r(ch.dim_in as f64) - identity(ch.dim_in)));
    let passed = min_eigenvalue >= -CPTP_TOL
        && tp_residual <= CPTP_TOL
        && hermitian_residual <= CPTP_TOL;
    CptpReport { min_eigenvalue, tp_residual, hermitian_residual, passed }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{c, from_real_rows, paulis, ONE, ZERO};
    use crate::noise;
    use crate::random;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    /// Choi state built entry by entry from the Kraus action on every basis
    /// pair `|i><j|`, independent of the vectorisation used in production.
    fn brute_force_choi(ks: &KrausSet) -> CMatrix {
        let (d_in, d_out) = (ks.dim_in(), ks.dim_out());
        let mut choi = CMatrix::zeros(d_out * d_in, d_out * d_in);
        for i in 0..d_in {
            for j in 0..d_in {
                let mut e = CMatrix::zeros(d_in, d_in);
                e[(i, j)] = ONE;
                let image = ks.act(&e);
                for a in 0..d_out {
                    for b in 0..d_out {
                        choi[(a * d_in + i, b * d_in + j)] += image[(a, b)] / r(d_in as f64);
                    }
                }
            }
        }
        choi
    }

    fn bell_projector(d: usize) -> CMatrix {
        let mut v = CMatrix::zeros(d * d, 1);
        for i in 0..d {
            v[(i * d + i, 0)] = r(1.0 / (d as f64).sqrt());
        }
        &v * v.adjoint()
    }

    #[test]
    fn identity_kraus_gives_bell_choi() {
        let ch = kraus_to_choi(&KrausSet::new(vec![identity(2)]).unwrap());
        assert!(max_abs_diff(ch.choi(), &bell_projector(2)) < 1e-15);
        assert_eq!(ch.kraus_rank(), 1);
    }

    #[test]
    fn damping_with_zero_gamma_is_identity() {
        let ch = noise::amplitude_damping(0.0).unwrap();
        assert!(max_abs_diff(ch.choi(), Channel::identity(2).choi()) < 1e-15);
    }

    #[test]
    fn damping_choi_spectrum_matches_brute_force() {
        let ch = noise::amplitude_damping(0.25).unwrap();
        let brute = brute_force_choi(ch.kraus());
        assert!(max_abs_diff(ch.choi(), &brute) < 1e-15);
        let want = eigh(&brute).values;
        for (a, b) in ch.choi_eigenvalues().iter().zip(&want) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn incomplete_kraus_set_reports_residual() {
        let err = KrausSet::new(vec![identity(2) * r(0.5)]).unwrap_err();
        match err {
            Error::CompletenessViolation { residual } => assert!((residual - 0.75).abs() < 1e-12),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn choi_to_kraus_of_identity_is_identity_up_to_phase() {
        let ks = choi_to_kraus(&Channel::identity(3));
        assert_eq!(ks.len(), 1);
        let k = &ks.operators()[0];
        let phase = k[(0, 0)];
        assert!((phase.norm() - 1.0).abs() < 1e-12);
        assert!(max_abs_diff(&(k / phase), &identity(3)) < 1e-12);
    }

    #[test]
    fn dephasing_kraus_weights_match_choi_eigenvalues() {
        let ch = noise::dephasing(0.75).unwrap();
        let ks = choi_to_kraus(&ch);
        assert_eq!(ks.len(), 2);
        let mut weights: Vec<f64> = ks.operators().iter().map(|k| k.norm_squared() / 2.0).collect();
        weights.sort_by(|a, b| b.partial_cmp(a).unwrap());
        assert!((weights[0] - 0.75).abs() < 1e-12 && (weights[1] - 0.25).abs() < 1e-12);
        let eig = ch.choi_eigenvalues();
        assert!((eig[0] - 0.75).abs() < 1e-12 && (eig[1] - 0.25).abs() < 1e-12);
    }

    #[test]
    fn random_rank_three_round_trip() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let ks = random::random_kraus(&mut rng, 2, 3);
        let ch = kraus_to_choi(&ks);
        let back = choi_to_kraus(&ch);
        assert_eq!(back.len(), 3);
        let again = kraus_to_choi(&back);
        assert!(max_abs_diff(ch.choi(), again.choi()) < 1e-10);
        assert!((choi_fidelity(&ch, &again).unwrap() - 1.0).abs() < 1e-10);
    }

    #[test]
    fn identity_superop_is_identity() {
        let s = kraus_to_superop(&KrausSet::new(vec![identity(2)]).unwrap());
        assert!(max_abs_diff(&s.matrix, &identity(4)) < 1e-15);
    }

    #[test]
    fn bit_flip_superop_acts_on_basis_matrices() {
        let p = 0.3;
        let x = paulis()[1].clone();
        let s = kraus_to_superop(noise::bit_flip(p).unwrap().kraus());
        for i in 0..2 {
            for j in 0..2 {
                let mut e = CMatrix::zeros(2, 2);
                e[(i, j)] = ONE;
                let want = &e * r(p) + &x * &e * &x * r(1.0 - p);
                assert!(max_abs_diff(&s.act(&e), &want) < 1e-15);
            }
        }
    }

    #[test]
    fn superop_product_matches_kraus_composition() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for _ in 0..10 {
            let a = random::random_kraus(&mut rng, 2, 2);
            let b = random::random_kraus(&mut rng, 2, 3);
            let mut ops = Vec::new();
            for kb in b.operators() {
                for ka in a.operators() {
                    ops.push(kb * ka);
                }
            }
            let composed = kraus_to_superop(&KrausSet::new(ops).unwrap());
            let product = kraus_to_superop(&b).matrix * kraus_to_superop(&a).matrix;
            assert!(max_abs_diff(&composed.matrix, &product) < 1e-12);
        }
    }

    #[test]
    fn reshuffle_is_an_involution() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let m = random::ginibre(&mut rng, 16, 16);
        let back = superop_choi_reshuffle(&superop_choi_reshuffle(&m).unwrap()).unwrap();
        assert_eq!(back, m);
    }

    #[test]
    fn reshuffled_identity_superop_is_scaled_bell_state() {
        for d in [2, 3] {
            let s = kraus_to_superop(&KrausSet::new(vec![identity(d)]).unwrap());
            let j = superop_choi_reshuffle(&s.matrix).unwrap();
            assert!(max_abs_diff(&j, &(bell_projector(d) * r(d as f64))) < 1e-14);
        }
    }

    #[test]
    fn reshuffled_depolarizing_superop_spectrum() {
        let p = 0.7;
        let ch = noise::depolarizing(p).unwrap();
        let s = kraus_to_superop(ch.kraus());
        let j = superop_choi_reshuffle(&s.matrix).unwrap() / r(2.0);
        let eig = eigh(&j).values;
        let want = [p, (1.0 - p) / 3.0, (1.0 - p) / 3.0, (1.0 - p) / 3.0];
        for (a, b) in eig.iter().zip(want) {
            assert!((a - b).abs() < 1e-12);
        }
        let mut weights: Vec<f64> =
            choi_to_kraus(&ch).operators().iter().map(|k| k.norm_squared() / 2.0).collect();
        weights.sort_by(|a, b| b.partial_cmp(a).unwrap());
        for (a, b) in weights.iter().zip(want) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn reshuffle_rejects_bad_shapes() {
        assert!(matches!(superop_choi_reshuffle(&CMatrix::zeros(5, 5)), Err(Error::Shape(_))));
        assert!(matches!(superop_choi_reshuffle(&CMatrix::zeros(4, 9)), Err(Error::Shape(_))));
    }

    #[test]
    fn composition_examples() {
        let x = Channel::unitary(&paulis()[1]).unwrap();
        let composed = compose(&Channel::identity(2), &x).unwrap();
        assert!(max_abs_diff(composed.choi(), x.choi()) < 1e-15);

        let (p, q) = (0.3, 0.55);
        let ad = compose(&noise::amplitude_damping(p).unwrap(), &noise::amplitude_damping(q).unwrap())
            .unwrap();
        let want = noise::amplitude_damping(p + q - p * q).unwrap();
        assert!(max_abs_diff(ad.choi(), want.choi()) < 1e-14);

        let deph = compose(&noise::dephasing(p).unwrap(), &noise::dephasing(q).unwrap()).unwrap();
        let want = noise::dephasing(p * q + (1.0 - p) * (1.0 - q)).unwrap();
        assert!(max_abs_diff(deph.choi(), want.choi()) < 1e-14);
    }

    #[test]
    fn composition_rejects_dimension_mismatch() {
        let e = noise::erasure(0.5, 2).unwrap();
        assert!(compose(&e, &e).is_err());
        assert!(compose(&Channel::identity(3), &e).is_ok());
    }

    #[test]
    fn mixing_examples() {
        let ad = noise::amplitude_damping(0.4).unwrap();
        let single = mix(&[ad.clone()], &[1.0]).unwrap();
        assert!(max_abs_diff(single.choi(), ad.choi()) < 1e-15);

        let p = 0.8;
        let x = Channel::unitary(&paulis()[1]).unwrap();
        let bf = mix(&[Channel::identity(2), x], &[p, 1.0 - p]).unwrap();
        assert!(max_abs_diff(bf.choi(), noise::bit_flip(p).unwrap().choi()) < 1e-15);

        let all: Vec<Channel> = paulis().iter().map(|s| Channel::unitary(s).unwrap()).collect();
        let fully = mix(&all, &[0.25; 4]).unwrap();
        let mixed = DensityMatrix::pure(&[r(0.6), c(0.0, 0.8)]).unwrap();
        let out = fully.apply(&mixed).unwrap();
        assert!(max_abs_diff(out.matrix(), &(identity(2) * r(0.5))) < 1e-15);
        assert!(max_abs_diff(fully.superop_matrix(), noise::white_noise(0.0).unwrap().superop_matrix()) < 1e-15);
    }

    #[test]
    fn mix_rejects_bad_probabilities() {
        let id = Channel::identity(2);
        assert!(mix(&[id.clone(), id.clone()], &[0.7, 0.4]).is_err());
        assert!(mix(&[id.clone(), id.clone()], &[1.1, -0.1]).is_err());
        assert!(mix(&[id], &[1.0, 0.0]).is_err());
    }

    #[test]
    fn apply_examples() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let rho = DensityMatrix::new(random::random_density(&mut rng, 2)).unwrap();
        let same = apply(&Channel::identity(2), &rho).unwrap();
        assert!(max_abs_diff(same.matrix(), rho.matrix()) < 1e-15);

        let decayed = apply(&noise::amplitude_damping(1.0).unwrap(), &rho).unwrap();
        assert!(max_abs_diff(decayed.matrix(), DensityMatrix::basis(2, 0).matrix()) < 1e-15);

        let white = apply(&noise::depolarizing(0.25).unwrap(), &rho).unwrap();
        assert!(max_abs_diff(white.matrix(), DensityMatrix::maximally_mixed(2).matrix()) < 1e-15);
    }

    #[test]
    fn fidelity_examples() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let e = kraus_to_choi(&random::random_kraus(&mut rng, 2, 3));
        assert!((choi_fidelity(&e, &e).unwrap() - 1.0).abs() < 1e-10);

        for q in [0.0, 0.3, 0.9] {
            let f = choi_fidelity(&Channel::identity(2), &noise::white_noise(q).unwrap()).unwrap();
            assert!((f - (q + (1.0 - q) / 4.0)).abs() < 1e-12);
        }
    }

    #[test]
    fn fidelity_rejects_negative_choi() {
        let mut choi = bell_projector(2);
        choi[(1, 1)] = r(-1e-3);
        let bad = Channel::from_choi_unchecked(choi, 2, 2).unwrap();
        assert!(matches!(
            choi_fidelity(&bad, &Channel::identity(2)),
            Err(Error::InvalidChannel { .. })
        ));
    }

    #[test]
    fn validation_flags_injected_negative_eigenvalue() {
        assert!(validate_cptp(&Channel::identity(2)).passed);

        // Shift weight between two Bell-basis directions so the trace and
        // partial trace are unchanged but one eigenvalue becomes -1e-3.
        let x = paulis()[1].clone();
        let psi = {
            let mut v = CMatrix::zeros(4, 1);
            v[(1, 0)] = r(std::f64::consts::FRAC_1_SQRT_2);
            v[(2, 0)] = r(std::f64::consts::FRAC_1_SQRT_2);
            v
        };
        let _ = x;
        let phi = bell_projector(2);
        let choi = &phi * r(1.0 + 1e-3) - &psi * psi.adjoint() * r(1e-3);
        let bad = Channel::from_choi_unchecked(choi.clone(), 2, 2).unwrap();
        let report = validate_cptp(&bad);
        assert!(!report.passed);
        assert!((report.min_eigenvalue + 1e-3).abs() < 1e-12);
        assert!(Channel::from_choi(choi, 2, 2).is_err());
    }

    #[test]
    fn density_matrix_validation() {
        assert!(DensityMatrix::new(from_real_rows(&[&[0.5, 0.0], &[0.0, 0.6]])).is_err());
        assert!(DensityMatrix::new(from_real_rows(&[&[1.2, 0.0], &[0.0, -0.2]])).is_err());
        assert!(DensityMatrix::new(from_real_rows(&[&[0.5, 0.1], &[0.0, 0.5]])).is_err());
        assert!(DensityMatrix::new(from_real_rows(&[&[0.5, 0.5], &[0.5, 0.5]])).is_ok());
        let _ = ZERO;
    }

    #[test]
    fn json_round_trip() {
        let ch = noise::amplitude_damping(0.1).unwrap();
        let text = serde_json::to_string(&ch).unwrap();
        assert!(text.contains("\"normalization\":\"trace1\""));
        let back: Channel = serde_json::from_str(&text).unwrap();
        assert!(max_abs_diff(back.choi(), ch.choi()) < 1e-15);
    }

    #[test]
    fn unitary_channels_have_pure_choi() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        for d in [2, 3, 4] {
            let u = random::haar_unitary(&mut rng, d);
            let ch = Channel::unitary(&u).unwrap();
            let purity = linalg::trace(&(ch.choi() * ch.choi())).re;
            assert!((purity - 1.0).abs() < 1e-10);
        }
    }
}
