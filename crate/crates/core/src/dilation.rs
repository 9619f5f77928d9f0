//! Executable routines for arbitrary channels: ancilla-assisted Stinespring
//! unitaries, extended-qudit routines, POVM lifting and the ancilla-free
//! special cases (mixed unitary, measure-and-correct).

use serde::{Deserialize, Serialize};

use crate::channel::{Channel, DensityMatrix, KrausSet, CPTP_TOL};
use crate::circuit::gates;
use crate::error::{Error, Result};
use crate::linalg::{
    self, complete_unitary, eigh, fix_phase, hermitian_sqrt, identity, max_abs_diff, pauli_string,
    r, unitarity_residual, CMatrix,
};
use crate::noise::PauliDiagonalSpec;
use crate::serde_util::{self, MatrixJson};

/// Singular values at or below this are treated as zero.
pub const RANK_CUTOFF: f64 = 1e-12;

/// `Λ` on ancilla ⊗ system with `<i,k|Λ|0,l> = <k|K_i|l>`.
#[derive(Debug, Clone)]
pub struct StinespringDilation {
    pub unitary: CMatrix,
    pub ancilla_dim: usize,
    pub data_dim: usize,
}

impl StinespringDilation {
    /// `log2(r)`, the ancilla size in qubits (possibly fractional).
    pub fn overhead(&self) -> f64 {
        (self.ancilla_dim as f64).log2()
    }

    /// Whole ancilla qubits needed to host an `r`-level ancilla.
    pub fn ancilla_qubits(&self) -> usize {
        (self.ancilla_dim as f64).log2().ceil() as usize
    }

    /// `tr_anc[Λ (|0><0| ⊗ ρ) Λ†]` for any operator `ρ`.
    pub fn act(&self, rho: &CMatrix) -> CMatrix {
        let (r, d) = (self.ancilla_dim, self.data_dim);
        let mut ket0 = CMatrix::zeros(r, r);
        ket0[(0, 0)] = linalg::ONE;
        let full = &self.unitary * linalg::kron(&ket0, rho) * self.unitary.adjoint();
        linalg::partial_trace(&full, &[r, d], &[1])
    }

    pub fn to_json(&self) -> StinespringJson {
        StinespringJson {
            ancilla_dim: self.ancilla_dim,
            data_dim: self.data_dim,
            unitary: MatrixJson::from_matrix(&self.unitary),
            overhead: self.overhead(),
            ancilla_qubits: self.ancilla_qubits(),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StinespringJson {
    pub ancilla_dim: usize,
    pub data_dim: usize,
    pub unitary: MatrixJson,
    pub overhead: f64,
    pub ancilla_qubits: usize,
}

/// Stacks the Kraus operators into the first `d` columns of `Λ` and
/// completes the rest by pivoted Gram–Schmidt.
pub fn stinespring_dilate(ks: &KrausSet) -> Result<StinespringDilation> {
    let residual = ks.completeness_residual();
    if residual > CPTP_TOL {
        return Err(Error::CompletenessViolation { residual });
    }
    if ks.dim_in() != ks.dim_out() {
        return Err(Error::Unsupported(
            "ancilla dilation needs equal input and output dimensions".into(),
        ));
    }
    let d = ks.dim_in();
    let r = ks.len();
    let mut cols = CMatrix::zeros(r * d, d);
    for (i, k) in ks.operators().iter().enumerate() {
        cols.view_mut((i * d, 0), (d, d)).copy_from(k);
    }
    let unitary = complete_unitary(&cols)?;
    Ok(StinespringDilation { unitary, ancilla_dim: r, data_dim: d })
}

pub fn dilation_execute(dil: &StinespringDilation, rho: &DensityMatrix) -> Result<DensityMatrix> {
    if rho.dim() != dil.data_dim {
        return Err(Error::DimensionMismatch(format!(
            "state of dimension {} for a dilation of dimension {}",
            rho.dim(),
            dil.data_dim
        )));
    }
    Ok(DensityMatrix::from_trusted(dil.act(rho.matrix())))
}

/// Extended-qudit routine: apply `Λ` to `ρ ⊕ 0`, measure the block
/// projectors `P_i`, apply the correction `W̄_i`, then either forget the
/// outcome (channel) or report it (POVM).
#[derive(Debug, Clone)]
pub struct QuditRoutine {
    pub total_dim: usize,
    pub data_dim: usize,
    pub unitary: CMatrix,
    /// Block boundaries: projector `i` covers levels `c_{i-1} .. c_i`.
    pub boundaries: Vec<usize>,
    pub corrections: Vec<CMatrix>,
    pub branch_ranks: Vec<usize>,
    /// The reduced operators `K̃_i` (rows of `Σ_i V_i†` above the cutoff).
    pub reduced: Vec<CMatrix>,
}

impl QuditRoutine {
    pub fn projector(&self, i: usize) -> CMatrix {
        let lo = if i == 0 { 0 } else { self.boundaries[i - 1] };
        let hi = self.boundaries[i];
        let mut p = CMatrix::zeros(self.total_dim, self.total_dim);
        for j in lo..hi {
            p[(j, j)] = r(1.0);
        }
        p
    }

    pub fn projector_ranges(&self) -> Vec<(usize, usize)> {
        let mut lo = 0;
        self.boundaries
            .iter()
            .map(|&hi| {
                let range = (lo, hi);
                lo = hi;
                range
            })
            .collect()
    }

    fn embed(&self, rho: &CMatrix) -> CMatrix {
        let mut big = CMatrix::zeros(self.total_dim, self.total_dim);
        big.view_mut((0, 0), (self.data_dim, self.data_dim)).copy_from(rho);
        big
    }

    /// Unnormalised corrected branch states on the full qudit; their
    /// traces are the outcome probabilities.
    pub fn branches(&self, rho: &CMatrix) -> Vec<CMatrix> {
        let evolved = &self.unitary * self.embed(rho) * self.unitary.adjoint();
        (0..self.boundaries.len())
            .map(|i| {
                let p = self.projector(i);
                let w = &self.corrections[i];
                w * &p * &evolved * &p * w.adjoint()
            })
            .collect()
    }

    /// Outcome-erased output restricted to the data subspace.
    pub fn act(&self, rho: &CMatrix) -> CMatrix {
        let n = self.total_dim;
        let sum = self.branches(rho).into_iter().fold(CMatrix::zeros(n, n), |a, b| a + b);
        sum.view((0, 0), (self.data_dim, self.data_dim)).into_owned()
    }

    /// Weight of the erased output that leaked outside the data subspace.
    pub fn leakage(&self, rho: &CMatrix) -> f64 {
        let n = self.total_dim;
        let sum = self.branches(rho).into_iter().fold(CMatrix::zeros(n, n), |a, b| a + b);
        let inside = linalg::trace(&sum.view((0, 0), (self.data_dim, self.data_dim)).into_owned());
        (linalg::trace(&sum) - inside).norm()
    }

    pub fn execute(&self, rho: &DensityMatrix) -> Result<DensityMatrix> {
        if rho.dim() != self.data_dim {
            return Err(Error::DimensionMismatch(format!(
                "state of dimension {} for a routine on {} levels",
                rho.dim(),
                self.data_dim
            )));
        }
        Ok(DensityMatrix::from_trusted(self.act(rho.matrix())))
    }

    pub fn to_json(&self) -> RoutineJson {
        RoutineJson {
            total_dim: self.total_dim,
            data_dim: self.data_dim,
            unitary: MatrixJson::from_matrix(&self.unitary),
            projector_ranges: self.projector_ranges().into_iter().map(|(a, b)| [a, b]).collect(),
            corrections: self.corrections.iter().map(MatrixJson::from_matrix).collect(),
            branch_ranks: self.branch_ranks.clone(),
            overhead: qudit_overhead(self),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RoutineJson {
    pub total_dim: usize,
    pub data_dim: usize,
    pub unitary: MatrixJson,
    pub projector_ranges: Vec<[usize; 2]>,
    pub corrections: Vec<MatrixJson>,
    pub branch_ranks: Vec<usize>,
    pub overhead: f64,
}

/// Thin SVD `K = W Σ V†` with descending singular values, `V` from the
/// eigendecomposition of `K†K` and `W` completed to a unitary.
struct Svd {
    sigma: Vec<f64>,
    v: CMatrix,
    w: CMatrix,
}

fn svd_descending(k: &CMatrix) -> Result<Svd> {
    let d = k.ncols();
    let e = eigh(&(k.adjoint() * k));
    let sigma: Vec<f64> = e.values.iter().map(|&l| l.max(0.0).sqrt()).collect();
    let kappa = sigma.iter().filter(|&&s| s > RANK_CUTOFF).count();
    // Left vectors K v_j / σ_j, re-orthonormalised in order of decreasing σ.
    // Errors here are suppressed by σ_j in the routine output.
    let mut w = CMatrix::zeros(k.nrows(), kappa);
    for j in 0..kappa {
        let mut col = k * e.vectors.column(j) / r(sigma[j]);
        for _ in 0..2 {
            for prev in 0..j {
                let overlap = w.column(prev).dotc(&col);
                col -= w.column(prev) * overlap;
            }
        }
        let norm = col.norm();
        w.set_column(j, &(col / r(norm)));
    }
    let w = complete_unitary(&w)?;
    debug_assert_eq!(w.ncols(), d);
    Ok(Svd { sigma, v: e.vectors, w })
}

/// Builds the extended-qudit routine of a Kraus set, one branch per operator.
pub fn extended_qudit_routine(ks: &KrausSet) -> Result<QuditRoutine> {
    let residual = ks.completeness_residual();
    if residual > CPTP_TOL {
        return Err(Error::CompletenessViolation { residual });
    }
    if ks.dim_in() != ks.dim_out() {
        return Err(Error::Unsupported(
            "extended-qudit routines need equal input and output dimensions".into(),
        ));
    }
    let d = ks.dim_in();
    let mut reduced = Vec::with_capacity(ks.len());
    let mut ws = Vec::with_capacity(ks.len());
    let mut ranks = Vec::with_capacity(ks.len());
    for k in ks.operators() {
        let svd = svd_descending(k)?;
        let kappa = svd.sigma.iter().filter(|&&s| s > RANK_CUTOFF).count();
        let kt = CMatrix::from_fn(kappa, d, |j, l| svd.v[(l, j)].conj() * svd.sigma[j]);
        reduced.push(kt);
        ws.push(svd.w);
        ranks.push(kappa);
    }
    let total: usize = ranks.iter().sum();
    let mut cols = CMatrix::zeros(total, d);
    let mut boundaries = Vec::with_capacity(ranks.len());
    let mut row = 0;
    for kt in &reduced {
        cols.view_mut((row, 0), kt.shape()).copy_from(kt);
        row += kt.nrows();
        boundaries.push(row);
    }
    let unitary = complete_unitary(&cols)?;
    let corrections = ws
        .iter()
        .zip(&boundaries)
        .zip(&ranks)
        .map(|((w, &hi), &kappa)| {
            let start = hi - kappa;
            let mut embedded = identity(total);
            embedded.view_mut((0, 0), (d, d)).copy_from(w);
            embedded * matrix_power(&gates::shift(total), start)
        })
        .collect();
    Ok(QuditRoutine {
        total_dim: total,
        data_dim: d,
        unitary,
        boundaries,
        corrections,
        branch_ranks: ranks,
        reduced,
    })
}

fn matrix_power(m: &CMatrix, k: usize) -> CMatrix {
    (0..k).fold(identity(m.nrows()), |acc, _| acc * m)
}

/// `log2 D - log2 d`.
pub fn qudit_overhead(routine: &QuditRoutine) -> f64 {
    (routine.total_dim as f64).log2() - (routine.data_dim as f64).log2()
}

/// Realises a Pauli-diagonal channel as Pauli gates applied at random.
#[derive(Debug, Clone)]
pub struct MixedUnitary {
    pub unitaries: Vec<CMatrix>,
    pub probs: Vec<f64>,
    pub labels: Vec<String>,
}

impl MixedUnitary {
    /// Exact average over the mixture.
    pub fn act(&self, rho: &CMatrix) -> CMatrix {
        let n = rho.nrows();
        self.unitaries
            .iter()
            .zip(&self.probs)
            .fold(CMatrix::zeros(n, n), |acc, (u, &p)| acc + u * rho * u.adjoint() * r(p))
    }
}

/// Outcome of [`mixed_unitary_decompose`] for channels without a known
/// mixed-unitary form.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NotMixedUnitary;

pub fn mixed_unitary_decompose(ch: &Channel) -> std::result::Result<MixedUnitary, NotMixedUnitary> {
    let spec = PauliDiagonalSpec::from_channel(ch, 1e-10).ok_or(NotMixedUnitary)?;
    let n = spec.qubits();
    let mut out = MixedUnitary { unitaries: vec![], probs: vec![], labels: vec![] };
    for (i, &p) in spec.probs().iter().enumerate() {
        if p > RANK_CUTOFF {
            out.unitaries.push(pauli_string(n, i));
            out.probs.push(p);
            out.labels.push(pauli_label(n, i));
        }
    }
    let sum: f64 = out.probs.iter().sum();
    out.probs.iter_mut().for_each(|p| *p /= sum);
    Ok(out)
}

fn pauli_label(n: usize, mut idx: usize) -> String {
    let mut s = vec!['I'; n];
    for q in (0..n).rev() {
        s[q] = ['I', 'X', 'Y', 'Z'][idx % 4];
        idx /= 4;
    }
    s.into_iter().collect()
}

/// A POVM `{O_i}` with `O_i ≥ 0` and `Σ O_i = 1`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PovmSpec {
    #[serde(with = "serde_util::matrix_vec")]
    pub elements: Vec<CMatrix>,
}

impl PovmSpec {
    pub fn new(elements: Vec<CMatrix>) -> Result<Self> {
        let first = elements
            .first()
            .ok_or_else(|| Error::InvalidProjectors("a POVM needs at least one element".into()))?;
        let d = first.nrows();
        let mut sum = CMatrix::zeros(d, d);
        for o in &elements {
            if o.shape() != (d, d) {
                return Err(Error::Shape("POVM elements must share a square shape".into()));
            }
            let herm = linalg::hermitian_residual(o);
            if herm > CPTP_TOL {
                return Err(Error::NotHermitian { residual: herm });
            }
            let min = eigh(o).values.last().copied().unwrap_or(0.0);
            if min < -CPTP_TOL {
                return Err(Error::NotPositive { min_eigenvalue: min });
            }
            sum += o;
        }
        let residual = max_abs_diff(&sum, &identity(d));
        if residual > CPTP_TOL {
            return Err(Error::CompletenessViolation { residual });
        }
        Ok(Self { elements })
    }

    pub fn dim(&self) -> usize {
        self.elements[0].nrows()
    }

    pub fn born(&self, rho: &CMatrix) -> Vec<f64> {
        self.elements.iter().map(|o| linalg::trace(&(o * rho)).re).collect()
    }
}

/// Extended-qudit routine for the channel `{√O_i}` with the outcome kept.
#[derive(Debug, Clone)]
pub struct PovmRoutine {
    pub routine: QuditRoutine,
}

impl PovmRoutine {
    /// Outcome probabilities and normalised post-measurement states on the
    /// data subspace (`None` for zero-probability outcomes).
    pub fn outcomes(&self, rho: &DensityMatrix) -> Vec<(f64, Option<DensityMatrix>)> {
        let d = self.routine.data_dim;
        self.routine
            .branches(rho.matrix())
            .into_iter()
            .map(|b| {
                let p = linalg::trace(&b).re;
                let post = (p > RANK_CUTOFF).then(|| {
                    DensityMatrix::from_trusted(b.view((0, 0), (d, d)).into_owned() / r(p))
                });
                (p, post)
            })
            .collect()
    }
}

pub fn povm_to_routine(povm: &PovmSpec) -> Result<PovmRoutine> {
    let ops = povm.elements.iter().map(hermitian_sqrt).collect::<Result<Vec<_>>>()?;
    let ks = KrausSet::new_unchecked(ops)?;
    Ok(PovmRoutine { routine: extended_qudit_routine(&ks)? })
}

/// Measure `{P_i}`, apply `U_i`, forget the outcome.
#[derive(Debug, Clone)]
pub struct ProjectiveRoutine {
    pub projectors: Vec<CMatrix>,
    pub unitaries: Vec<CMatrix>,
}

impl ProjectiveRoutine {
    pub fn act(&self, rho: &CMatrix) -> CMatrix {
        let n = rho.nrows();
        self.projectors.iter().zip(&self.unitaries).fold(CMatrix::zeros(n, n), |acc, (p, u)| {
            let k = u * p;
            acc + &k * rho * k.adjoint()
        })
    }

    pub fn kraus(&self) -> Result<KrausSet> {
        KrausSet::new(self.projectors.iter().zip(&self.unitaries).map(|(p, u)| u * p).collect())
    }
}

/// Checks and wraps a caller-supplied factorisation `{U_i P_i}`.
pub fn projective_channel_routine(pairs: &[(CMatrix, CMatrix)]) -> Result<ProjectiveRoutine> {
    let first = pairs
        .first()
        .ok_or_else(|| Error::InvalidProjectors("no projectors given".into()))?;
    let d = first.0.nrows();
    let mut sum = CMatrix::zeros(d, d);
    for (p, u) in pairs {
        if p.shape() != (d, d) || u.shape() != (d, d) {
            return Err(Error::Shape("projectors and corrections must be d x d".into()));
        }
        let idem = max_abs_diff(&(p * p), p).max(linalg::hermitian_residual(p));
        if idem > CPTP_TOL {
            return Err(Error::InvalidProjectors(format!("P^2 != P within {idem:.3e}")));
        }
        let res = unitarity_residual(u);
        if res > CPTP_TOL {
            return Err(Error::NotUnitary { residual: res });
        }
        sum += p;
    }
    let res = max_abs_diff(&sum, &identity(d));
    if res > CPTP_TOL {
        return Err(Error::InvalidProjectors(format!("projectors sum to identity within {res:.3e}")));
    }
    Ok(ProjectiveRoutine {
        projectors: pairs.iter().map(|(p, _)| p.clone()).collect(),
        unitaries: pairs.iter().map(|(_, u)| u.clone()).collect(),
    })
}

/// Reset to `|0>`: measure the computational basis, shift outcome `k` down by `k`.
pub fn reset_routine(d: usize) -> ProjectiveRoutine {
    let shift = gates::shift(d);
    let pairs: Vec<(CMatrix, CMatrix)> = (0..d)
        .map(|k| {
            let mut p = CMatrix::zeros(d, d);
            p[(k, k)] = r(1.0);
            (p, matrix_power(&shift, k))
        })
        .collect();
    projective_channel_routine(&pairs).expect("basis projectors and shifts are valid")
}

/// Choi state of any linear map on `d x d` matrices, from its action on `|i><j|`.
pub fn choi_of_map(d_in: usize, d_out: usize, f: impl Fn(&CMatrix) -> CMatrix) -> CMatrix {
    let mut choi = CMatrix::zeros(d_out * d_in, d_out * d_in);
    for i in 0..d_in {
        for j in 0..d_in {
            let mut e = CMatrix::zeros(d_in, d_in);
            e[(i, j)] = r(1.0);
            let img = f(&e);
            for a in 0..d_out {
                for b in 0..d_out {
                    choi[(a * d_in + i, b * d_in + j)] = img[(a, b)] / r(d_in as f64);
                }
            }
        }
    }
    choi
}

/// Puts the largest-magnitude entry of each column on the positive real axis.
pub fn normalize_column_phases(m: &CMatrix) -> CMatrix {
    let mut out = m.clone();
    for j in 0..out.ncols() {
        let mut col: Vec<_> = out.column(j).iter().copied().collect();
        fix_phase(&mut col);
        for (i, z) in col.into_iter().enumerate() {
            out[(i, j)] = z;
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::choi_fidelity;
    use crate::linalg::{c, from_real_rows, kron};
    use crate::noise;
    use crate::random;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn identity_dilation_is_trivial() {
        let dil = stinespring_dilate(Channel::identity(2).kraus()).unwrap();
        assert_eq!(dil.ancilla_dim, 1);
        assert!(max_abs_diff(&dil.unitary, &identity(2)) < 1e-15);
        assert_eq!(dil.overhead(), 0.0);
    }

    #[test]
    fn stinespring_satisfies_defining_condition() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let ks = random::random_kraus(&mut rng, 3, 4);
        let dil = stinespring_dilate(&ks).unwrap();
        let d = 3;
        for (i, k) in ks.operators().iter().enumerate() {
            for kk in 0..d {
                for l in 0..d {
                    assert!((dil.unitary[(i * d + kk, l)] - k[(kk, l)]).norm() < 1e-15);
                }
            }
        }
        assert!(unitarity_residual(&dil.unitary) < 1e-10);
    }

    #[test]
    fn stinespring_examples() {
        let ad = noise::amplitude_damping(0.3).unwrap();
        let dil = stinespring_dilate(ad.kraus()).unwrap();
        assert_eq!(dil.ancilla_dim, 2);
        let back = Channel::from_choi(choi_of_map(2, 2, |m| dil.act(m)), 2, 2).unwrap();
        assert!((choi_fidelity(&back, &ad).unwrap() - 1.0).abs() < 1e-10);

        let out = dilation_execute(&dil, &DensityMatrix::basis(2, 1)).unwrap();
        assert!(max_abs_diff(out.matrix(), &from_real_rows(&[&[0.3, 0.0], &[0.0, 0.7]])) < 1e-14);

        let deph = stinespring_dilate(noise::dephasing(0.6).unwrap().kraus()).unwrap();
        let plus = DensityMatrix::pure(&[r(1.0), r(1.0)]).unwrap();
        let out = dilation_execute(&deph, &plus).unwrap();
        assert!((out.matrix()[(0, 1)] - r(0.5 * 0.2)).norm() < 1e-14);

        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let dil = stinespring_dilate(&random::random_kraus(&mut rng, 2, 4)).unwrap();
        assert_eq!(dil.unitary.shape(), (8, 8));
        assert_eq!(dil.ancilla_qubits(), 2);
        assert_eq!(dil.overhead(), 2.0);
    }

    #[test]
    fn stinespring_rejects_incomplete_sets() {
        let ks = KrausSet::new_unchecked(vec![identity(2) * r(0.9)]).unwrap();
        assert!(matches!(stinespring_dilate(&ks), Err(Error::CompletenessViolation { .. })));
    }

    fn printed_lambda(gamma: f64) -> CMatrix {
        let (a, b) = ((1.0 - gamma).sqrt(), gamma.sqrt());
        from_real_rows(&[&[1.0, 0.0, 0.0], &[0.0, a, -b], &[0.0, b, a]])
    }

    #[test]
    fn amplitude_damping_qudit_example() {
        for gamma in [0.1, 0.36, 0.5, 0.9] {
            let routine = extended_qudit_routine(noise::amplitude_damping(gamma).unwrap().kraus())
                .unwrap();
            assert_eq!(routine.total_dim, 3);
            assert_eq!(routine.branch_ranks, vec![2, 1]);
            let want = normalize_column_phases(&printed_lambda(gamma));
            assert!(max_abs_diff(&normalize_column_phases(&routine.unitary), &want) < 1e-12);
            assert_eq!(routine.projector_ranges(), vec![(0, 2), (2, 3)]);
            assert!(max_abs_diff(&routine.corrections[0], &identity(3)) < 1e-15);
            let x3_dag = gates::shift(3).adjoint();
            assert!(max_abs_diff(&routine.corrections[1], &x3_dag) < 1e-15);
            assert!((qudit_overhead(&routine) - (3f64.log2() - 1.0)).abs() < 1e-15);
        }
    }

    #[test]
    fn qudit_overhead_values() {
        let unitary = extended_qudit_routine(Channel::identity(2).kraus()).unwrap();
        assert_eq!(unitary.total_dim, 2);
        assert_eq!(qudit_overhead(&unitary), 0.0);
        let dep = extended_qudit_routine(noise::dephasing(0.5).unwrap().kraus()).unwrap();
        assert_eq!(dep.total_dim, 4);
        assert_eq!(qudit_overhead(&dep), 1.0);
    }

    #[test]
    fn rank_deficient_operator_saves_a_level() {
        // K_0 full rank, K_1 rank one.
        let k0 = from_real_rows(&[&[0.8, 0.0], &[0.0, 1.0]]);
        let k1 = from_real_rows(&[&[0.0, 0.0], &[0.6, 0.0]]);
        let ks = KrausSet::new(vec![k0, k1]).unwrap();
        let routine = extended_qudit_routine(&ks).unwrap();
        assert_eq!(routine.total_dim, 3);
        assert!(routine.total_dim < ks.len() * 2);
        let ch = Channel::from_kraus(&ks);
        let back = choi_of_map(2, 2, |m| routine.act(m));
        assert!(max_abs_diff(&back, ch.choi()) < 1e-12);
    }

    #[test]
    fn qudit_routine_round_trip_and_probabilities() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for &(d, rank) in &[(2, 1), (2, 3), (3, 2), (3, 9), (4, 5)] {
            let ks = random::random_kraus(&mut rng, d, rank);
            let routine = extended_qudit_routine(&ks).unwrap();
            assert!(unitarity_residual(&routine.unitary) < 1e-10);
            let back = choi_of_map(d, d, |m| routine.act(m));
            assert!(max_abs_diff(&back, Channel::from_kraus(&ks).choi()) < 1e-10);
            let rho = random::random_density(&mut rng, d);
            let total: f64 = routine.branches(&rho).iter().map(|b| linalg::trace(b).re).sum();
            assert!((total - 1.0).abs() < 1e-10);
            assert!(routine.leakage(&rho) < 1e-12);
            for kt in &routine.reduced {
                assert!(kt.nrows() <= d);
            }
            let ggi = routine
                .reduced
                .iter()
                .fold(CMatrix::zeros(d, d), |acc, kt| acc + kt.adjoint() * kt);
            assert!(max_abs_diff(&ggi, &identity(d)) < 1e-10);
        }
    }

    #[test]
    fn mixed_unitary_examples() {
        let p = 0.8;
        let mu = mixed_unitary_decompose(&noise::bit_flip(p).unwrap()).unwrap();
        assert_eq!(mu.labels, vec!["I", "X"]);
        assert!((mu.probs[0] - p).abs() < 1e-12 && (mu.probs[1] - (1.0 - p)).abs() < 1e-12);

        let dep = noise::depolarizing(0.7).unwrap();
        let mu = mixed_unitary_decompose(&dep).unwrap();
        assert_eq!(mu.unitaries.len(), 4);
        let back = choi_of_map(2, 2, |m| mu.act(m));
        assert!(max_abs_diff(&back, dep.choi()) < 1e-12);

        assert_eq!(
            mixed_unitary_decompose(&noise::amplitude_damping(0.5).unwrap()).unwrap_err(),
            NotMixedUnitary
        );
    }

    #[test]
    fn povm_examples() {
        let proj = PovmSpec::new(crate::circuit::basis_projectors(2)).unwrap();
        let routine = povm_to_routine(&proj).unwrap();
        let rho = from_real_rows(&[&[0.3, 0.1], &[0.1, 0.7]]);
        let out = routine.outcomes(&DensityMatrix::new(rho.clone()).unwrap());
        assert!((out[0].0 - 0.3).abs() < 1e-12 && (out[1].0 - 0.7).abs() < 1e-12);

        // Trine POVM.
        let trine: Vec<CMatrix> = (0..3)
            .map(|k| {
                let a = 2.0 * std::f64::consts::PI * k as f64 / 3.0;
                let v = CMatrix::from_column_slice(2, 1, &[r((a / 2.0).cos()), r((a / 2.0).sin())]);
                &v * v.adjoint() * r(2.0 / 3.0)
            })
            .collect();
        let povm = PovmSpec::new(trine.clone()).unwrap();
        let routine = povm_to_routine(&povm).unwrap();
        let zero = DensityMatrix::basis(2, 0);
        let got = routine.outcomes(&zero);
        for (k, o) in trine.iter().enumerate() {
            assert!((got[k].0 - o[(0, 0)].re).abs() < 1e-12);
        }
        assert_eq!(routine.routine.total_dim, 3);

        let single = povm_to_routine(&PovmSpec::new(vec![identity(2)]).unwrap()).unwrap();
        let got = single.outcomes(&zero);
        assert_eq!(got.len(), 1);
        assert!((got[0].0 - 1.0).abs() < 1e-12);
        assert!(max_abs_diff(got[0].1.as_ref().unwrap().matrix(), zero.matrix()) < 1e-12);
    }

    #[test]
    fn povm_post_measurement_states() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let ks = random::random_kraus(&mut rng, 2, 3);
        let elements: Vec<CMatrix> = ks.operators().iter().map(|k| k.adjoint() * k).collect();
        let povm = PovmSpec::new(elements.clone()).unwrap();
        let routine = povm_to_routine(&povm).unwrap();
        let rho = DensityMatrix::new(random::random_density(&mut rng, 2)).unwrap();
        for (o, (p, post)) in elements.iter().zip(routine.outcomes(&rho)) {
            let s = hermitian_sqrt(o).unwrap();
            let want = &s * rho.matrix() * &s;
            let pw = linalg::trace(&want).re;
            assert!((p - pw).abs() < 1e-12);
            assert!(max_abs_diff(post.unwrap().matrix(), &(want / r(pw))) < 1e-10);
        }
    }

    #[test]
    fn invalid_povms_are_rejected() {
        assert!(PovmSpec::new(vec![identity(2) * r(0.5)]).is_err());
        let neg = from_real_rows(&[&[1.5, 0.0], &[0.0, 1.0]]);
        let comp = from_real_rows(&[&[-0.5, 0.0], &[0.0, 0.0]]);
        assert!(PovmSpec::new(vec![neg, comp]).is_err());
    }

    #[test]
    fn projective_routines() {
        let reset = reset_routine(3);
        let reset_choi = choi_of_map(3, 3, |m| reset.act(m));
        assert!(max_abs_diff(&reset_choi, noise::reset(3).choi()) < 1e-15);

        let trivial = projective_channel_routine(&[(identity(2), identity(2))]).unwrap();
        let rho = from_real_rows(&[&[0.5, 0.5], &[0.5, 0.5]]);
        assert!(max_abs_diff(&trivial.act(&rho), &rho) < 1e-15);

        // Parity projection on two qubits, flipping the first qubit on odd parity.
        let even = from_real_rows(&[
            &[1.0, 0.0, 0.0, 0.0],
            &[0.0, 0.0, 0.0, 0.0],
            &[0.0, 0.0, 0.0, 0.0],
            &[0.0, 0.0, 0.0, 1.0],
        ]);
        let odd = identity(4) - &even;
        let flip = kron(&gates::x(), &identity(2));
        let routine =
            projective_channel_routine(&[(even.clone(), identity(4)), (odd.clone(), flip.clone())])
                .unwrap();
        let ks = KrausSet::new(vec![even, &flip * &odd]).unwrap();
        let got = choi_of_map(4, 4, |m| routine.act(m));
        assert!(max_abs_diff(&got, Channel::from_kraus(&ks).choi()) < 1e-15);
        assert!(max_abs_diff(
            Channel::from_kraus(&routine.kraus().unwrap()).choi(),
            Channel::from_kraus(&ks).choi()
        ) < 1e-15);

        let not_proj = from_real_rows(&[&[0.5, 0.0], &[0.0, 0.5]]);
        assert!(projective_channel_routine(&[(not_proj.clone(), identity(2)), (not_proj, identity(2))])
            .is_err());
        let _ = c(0.0, 0.0);
    }

    #[test]
    fn routine_json_export() {
        let routine =
            extended_qudit_routine(noise::amplitude_damping(0.2).unwrap().kraus()).unwrap();
        let json = serde_json::to_value(routine.to_json()).unwrap();
        assert_eq!(json["projector_ranges"], serde_json::json!([[0, 2], [2, 3]]));
        assert!((json["overhead"].as_f64().unwrap() - 0.5849625007211562).abs() < 1e-12);
    }
}
