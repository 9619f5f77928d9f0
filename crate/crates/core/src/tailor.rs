//! Noise tailoring: correction blocks around a fixed implementation,
//! tailored circuits with tunable parameters, and black-box variational
//! search over accessible inputs.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::channel::{choi_fidelity, choi_to_kraus, compose, mix, Channel, KrausSet};
use crate::circuit::{self, angle_for, extract_channel, gates, AdVariant, Circuit};
use crate::error::{check_probability, Error, Result};
use crate::linalg::{complete_unitary, expm_i_hermitian, identity, pauli_string, c, r, CMatrix};
use crate::noise::{
    amplitude_damping, apply_noise_model, pauli_diagonal, ChannelSpec, NoiseConfig, NoiseModel,
    PauliDiagonalSpec,
};
use crate::optim::{
    coordinate_descent, grid_then_golden, golden_section, multistart_nelder_mead,
    project_to_simplex, softmax, Minimum, NelderMeadOptions,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TailoringMethod {
    BuildingBlock,
    TailoredCircuit,
    BlackBox,
}

/// Result of a tailoring run.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TailoringRecipe {
    pub method: TailoringMethod,
    /// Channels `ξ_j` applied before the implementation.
    #[serde(default)]
    pub pre_channels: Vec<Channel>,
    /// Channels `ζ_i` applied after the implementation.
    #[serde(default)]
    pub post_channels: Vec<Channel>,
    /// `mixture[i][j]` weights `ζ_i ∘ E ∘ ξ_j`; a missing side counts as a
    /// single identity block.
    #[serde(default)]
    pub mixture: Vec<Vec<f64>>,
    #[serde(default)]
    pub circuit_params: BTreeMap<String, f64>,
    pub achieved_fidelity: f64,
    /// Fidelity of the untailored implementation, when one is defined.
    #[serde(default)]
    pub direct_fidelity: Option<f64>,
    pub converged: bool,
    pub evaluations: usize,
    /// Settings that produced the recipe.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub settings: Option<serde_json::Value>,
}

impl TailoringRecipe {
    fn parametric(method: TailoringMethod, params: BTreeMap<String, f64>, fidelity: f64) -> Self {
        Self {
            method,
            pre_channels: vec![],
            post_channels: vec![],
            mixture: vec![vec![1.0]],
            circuit_params: params,
            achieved_fidelity: fidelity.clamp(0.0, 1.0),
            direct_fidelity: None,
            converged: true,
            evaluations: 0,
            settings: None,
        }
    }

    pub fn infidelity(&self) -> f64 {
        1.0 - self.achieved_fidelity
    }

    /// Checks the mixture, fidelity range and CPTP-ness of every block.
    pub fn check(&self) -> Result<()> {
        let rows = self.post_channels.len().max(1);
        let cols = self.pre_channels.len().max(1);
        if self.mixture.len() != rows || self.mixture.iter().any(|row| row.len() != cols) {
            return Err(Error::Shape(format!("mixture must be {rows}x{cols}")));
        }
        let flat: Vec<f64> = self.mixture.iter().flatten().copied().collect();
        crate::channel::check_distribution(&flat, 1e-9)?;
        if !(0.0..=1.0).contains(&self.achieved_fidelity) {
            return Err(Error::InvalidProbability {
                name: "achieved_fidelity".into(),
                value: self.achieved_fidelity,
            });
        }
        for ch in self.pre_channels.iter().chain(&self.post_channels) {
            let rep = ch.validate();
            if !rep.passed {
                return Err(Error::InvalidChannel {
                    min_eigenvalue: rep.min_eigenvalue,
                    tp_residual: rep.tp_residual,
                });
            }
        }
        Ok(())
    }

    /// Rebuilds `Σ p_ij N∘ζ_i ∘ E ∘ N∘ξ_j` for a given implementation `E` and
    /// optional per-block noise `N`.
    pub fn output_channel(&self, input_impl: &Channel, block_noise: Option<&Channel>) -> Result<Channel> {
        assemble(input_impl, &self.pre_channels, &self.post_channels, &self.mixture, block_noise)
    }
}

fn decorate(ch: &Channel, noise: Option<&Channel>) -> Result<Channel> {
    match noise {
        Some(n) => compose(n, ch),
        None => Ok(ch.clone()),
    }
}

fn assemble(
    input: &Channel,
    pre: &[Channel],
    post: &[Channel],
    mixture: &[Vec<f64>],
    noise: Option<&Channel>,
) -> Result<Channel> {
    let pre: Vec<Channel> = pre.iter().map(|c| decorate(c, noise)).collect::<Result<_>>()?;
    let post: Vec<Channel> = post.iter().map(|c| decorate(c, noise)).collect::<Result<_>>()?;
    let with_pre: Vec<Channel> = if pre.is_empty() {
        vec![input.clone()]
    } else {
        pre.iter().map(|p| compose(input, p)).collect::<Result<_>>()?
    };
    let mut terms = Vec::new();
    let mut weights = Vec::new();
    for (i, row) in mixture.iter().enumerate() {
        for (j, &p) in row.iter().enumerate() {
            if p == 0.0 {
                continue;
            }
            let inner = &with_pre[j];
            terms.push(match post.get(i) {
                Some(z) => compose(z, inner)?,
                None => inner.clone(),
            });
            weights.push(p);
        }
    }
    let total: f64 = weights.iter().sum();
    weights.iter_mut().for_each(|w| *w /= total);
    mix(&terms, &weights)
}

/// CPTP maps on a `d`-level system decoded from real coordinates.
///
/// The channel is read off the isometry `V = (U₀ e^{iH})|_{ancilla=0}` on
/// ancilla ⊗ system, with `d_a` ancilla levels. Only the generator blocks
/// that move the `ancilla=0` subspace are parameterized (`d² + 2(D-d)d`
/// reals for `D = d·d_a`); the rest leaves `V` unchanged. At the origin the
/// decoded channel is the one whose dilation `U₀` is (identity by default).
#[derive(Debug, Clone)]
pub struct CptpParameterization {
    dim: usize,
    ancilla_dim: usize,
    base: CMatrix,
}

impl CptpParameterization {
    /// `d_a = d²`, enough to reach every channel on `d` levels.
    pub fn new(dim: usize) -> Self {
        Self::with_ancilla(dim, dim * dim)
    }

    pub fn with_ancilla(dim: usize, ancilla_dim: usize) -> Self {
        Self { dim, ancilla_dim, base: identity(dim * ancilla_dim) }
    }

    /// Parameterization centred on `ch`: the origin decodes to `ch`.
    pub fn around(ch: &Channel, ancilla_dim: usize) -> Result<Self> {
        let d = ch.dim_in();
        if ch.dim_out() != d {
            return Err(Error::DimensionMismatch("correction blocks must map d -> d".into()));
        }
        let ks = choi_to_kraus(ch);
        if ks.len() > ancilla_dim {
            return Err(Error::DimensionMismatch(format!(
                "Kraus rank {} exceeds ancilla dimension {ancilla_dim}",
                ks.len()
            )));
        }
        let mut v = CMatrix::zeros(d * ancilla_dim, d);
        for (a, k) in ks.operators().iter().enumerate() {
            v.view_mut((a * d, 0), (d, d)).copy_from(k);
        }
        Ok(Self { dim: d, ancilla_dim, base: complete_unitary(&v)? })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn ancilla_dim(&self) -> usize {
        self.ancilla_dim
    }

    pub fn num_params(&self) -> usize {
        let (d, big) = (self.dim, self.dim * self.ancilla_dim);
        d * d + 2 * (big - d) * d
    }

    fn generator(&self, x: &[f64]) -> CMatrix {
        let (d, big) = (self.dim, self.dim * self.ancilla_dim);
        let mut h = CMatrix::zeros(big, big);
        let mut it = x.iter().copied();
        let mut next = || it.next().unwrap_or(0.0);
        for i in 0..d {
            h[(i, i)] = r(next());
            for j in i + 1..d {
                let z = c(next(), next());
                h[(i, j)] = z;
                h[(j, i)] = z.conj();
            }
        }
        for i in d..big {
            for j in 0..d {
                let z = c(next(), next());
                h[(i, j)] = z;
                h[(j, i)] = z.conj();
            }
        }
        h
    }

    /// Stinespring isometry `D×d` for coordinates `x`.
    pub fn isometry(&self, x: &[f64]) -> CMatrix {
        let u = &self.base * expm_i_hermitian(&self.generator(x));
        u.columns(0, self.dim).into_owned()
    }

    pub fn decode(&self, x: &[f64]) -> Channel {
        let d = self.dim;
        let v = self.isometry(x);
        let ops: Vec<CMatrix> =
            (0..self.ancilla_dim).map(|a| v.view((a * d, 0), (d, d)).into_owned()).collect();
        let ks = KrausSet::new_unchecked(ops).expect("isometry blocks are square");
        Channel::from_kraus(&ks)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Placement {
    Pre,
    Post,
    Interleaved,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BuildingBlockConfig {
    pub placement: Placement,
    /// Number of blocks per side.
    pub mixture_size: usize,
    /// Ancilla levels of each block's dilation; `None` means `d²`.
    pub ancilla_dim: Option<usize>,
    /// Whether the correction blocks suffer the hardware noise themselves.
    pub noisy_blocks: bool,
    pub optimizer: NelderMeadOptions,
}

impl Default for BuildingBlockConfig {
    fn default() -> Self {
        Self {
            placement: Placement::Interleaved,
            mixture_size: 2,
            ancilla_dim: None,
            noisy_blocks: true,
            optimizer: NelderMeadOptions::default(),
        }
    }
}

/// Starting point for a building-block run, typically an earlier recipe's
/// effective blocks.
#[derive(Debug, Clone)]
pub struct WarmStart {
    pub pre: Vec<Channel>,
    pub post: Vec<Channel>,
    pub mixture: Vec<Vec<f64>>,
}

impl WarmStart {
    /// Blocks of `recipe` as seen through `noise`, so that a run with
    /// noiseless blocks can start from what a noisy run achieved.
    pub fn from_recipe(recipe: &TailoringRecipe, noise: Option<&Channel>) -> Result<Self> {
        Ok(Self {
            pre: recipe.pre_channels.iter().map(|c| decorate(c, noise)).collect::<Result<_>>()?,
            post: recipe.post_channels.iter().map(|c| decorate(c, noise)).collect::<Result<_>>()?,
            mixture: recipe.mixture.clone(),
        })
    }
}

/// Per-block hardware noise implied by a noise model: the block channel, or
/// the single-wire gate channel.
pub fn block_noise(hw: &NoiseModel) -> Option<Channel> {
    match hw {
        NoiseModel::Ideal => None,
        NoiseModel::Block(ch) => Some(ch.clone()),
        NoiseModel::Gate(g) => g.per_arity.get(&1).or(g.fallback.as_ref()).cloned(),
    }
}

struct BlockLayout {
    pre: Vec<CptpParameterization>,
    post: Vec<CptpParameterization>,
    rows: usize,
    cols: usize,
}

impl BlockLayout {
    fn block_params(&self) -> usize {
        self.pre.iter().chain(&self.post).map(|p| p.num_params()).sum()
    }

    fn len(&self) -> usize {
        self.block_params() + self.rows * self.cols
    }

    fn decode(&self, x: &[f64]) -> (Vec<Channel>, Vec<Channel>, Vec<Vec<f64>>) {
        let mut offset = 0;
        let mut take = |p: &CptpParameterization| {
            let ch = p.decode(&x[offset..offset + p.num_params()]);
            offset += p.num_params();
            ch
        };
        let pre: Vec<Channel> = self.pre.iter().map(&mut take).collect();
        let post: Vec<Channel> = self.post.iter().map(&mut take).collect();
        let probs = softmax(&x[self.block_params()..]);
        let mixture = probs.chunks(self.cols).map(<[f64]>::to_vec).collect();
        (pre, post, mixture)
    }
}

/// Method 1: optimizes correction blocks around a fixed implementation.
///
/// Maximizes `F(Σ p_ij ζ'_i ∘ E' ∘ ξ'_j, target)` where primes denote the
/// hardware block noise (when `noisy_blocks`). Not applying any block is
/// always an option, so the result never falls below the direct fidelity.
pub fn building_block_optimize(
    target: &Channel,
    input_impl: &Channel,
    hw: &NoiseModel,
    cfg: &BuildingBlockConfig,
) -> Result<TailoringRecipe> {
    building_block_optimize_from(target, input_impl, hw, cfg, None)
}

pub fn building_block_optimize_from(
    target: &Channel,
    input_impl: &Channel,
    hw: &NoiseModel,
    cfg: &BuildingBlockConfig,
    warm: Option<&WarmStart>,
) -> Result<TailoringRecipe> {
    let d = target.dim_in();
    if target.dim_out() != d || input_impl.dim_in() != d || input_impl.dim_out() != d {
        return Err(Error::DimensionMismatch("building blocks need d -> d channels".into()));
    }
    if cfg.mixture_size == 0 {
        return Err(Error::Config("mixture_size must be positive".into()));
    }
    let noise = if cfg.noisy_blocks { block_noise(hw) } else { None };
    if let Some(n) = &noise {
        if n.dim_in() != d || n.dim_out() != d {
            return Err(Error::DimensionMismatch(format!(
                "block noise acts on {} levels, blocks on {d}",
                n.dim_in()
            )));
        }
    }
    let d_a = cfg.ancilla_dim.unwrap_or(d * d);
    let m = cfg.mixture_size;
    let (n_pre, n_post) = match cfg.placement {
        Placement::Pre => (m, 0),
        Placement::Post => (0, m),
        Placement::Interleaved => (m, m),
    };
    let direct = choi_fidelity(input_impl, target)?;

    let objective = |layout: &BlockLayout, x: &[f64]| -> f64 {
        let (pre, post, mixture) = layout.decode(x);
        assemble(input_impl, &pre, &post, &mixture, noise.as_ref())
            .and_then(|out| choi_fidelity(&out, target))
            .map_or(f64::NAN, |f| 1.0 - f)
    };

    let fresh = BlockLayout {
        pre: (0..n_pre).map(|_| CptpParameterization::with_ancilla(d, d_a)).collect(),
        post: (0..n_post).map(|_| CptpParameterization::with_ancilla(d, d_a)).collect(),
        rows: n_post.max(1),
        cols: n_pre.max(1),
    };
    let origin = vec![0.0; fresh.len()];
    // Distinct blocks need distinct starting points or the mixture is inert.
    let mut spread_start = origin.clone();
    for (k, v) in spread_start.iter_mut().take(fresh.block_params()).enumerate() {
        *v = 0.05 * ((k as f64 + 1.0) * 0.7548776662466927).fract() - 0.025;
    }
    let mut runs: Vec<(BlockLayout, Minimum)> = Vec::new();
    let best_fresh = multistart_nelder_mead(
        |x| objective(&fresh, x),
        &[origin, spread_start],
        &cfg.optimizer,
    );
    runs.push((fresh, best_fresh));

    if let Some(w) = warm {
        if w.pre.len() != n_pre || w.post.len() != n_post {
            return Err(Error::Config("warm start does not match the block layout".into()));
        }
        let layout = BlockLayout {
            pre: w.pre.iter().map(|c| CptpParameterization::around(c, d_a)).collect::<Result<_>>()?,
            post: w.post.iter().map(|c| CptpParameterization::around(c, d_a)).collect::<Result<_>>()?,
            rows: n_post.max(1),
            cols: n_pre.max(1),
        };
        let mut x0 = vec![0.0; layout.len()];
        let logits = w.mixture.iter().flatten().map(|p| p.max(1e-12).ln());
        for (slot, l) in x0[layout.block_params()..].iter_mut().zip(logits) {
            *slot = l;
        }
        let opts = NelderMeadOptions { restarts: 0, ..cfg.optimizer };
        let m = multistart_nelder_mead(|x| objective(&layout, x), &[x0], &opts);
        runs.push((layout, m));
    }

    let evaluations = runs.iter().map(|(_, m)| m.evaluations).sum();
    let (layout, best) = runs
        .into_iter()
        .min_by(|a, b| a.1.value.total_cmp(&b.1.value))
        .expect("at least one run");
    let (pre, post, mixture) = layout.decode(&best.x);
    let achieved = assemble(input_impl, &pre, &post, &mixture, noise.as_ref())
        .and_then(|out| choi_fidelity(&out, target))?;

    let mut recipe = TailoringRecipe {
        method: TailoringMethod::BuildingBlock,
        pre_channels: pre,
        post_channels: post,
        mixture,
        circuit_params: BTreeMap::new(),
        achieved_fidelity: achieved,
        direct_fidelity: Some(direct),
        converged: best.converged,
        evaluations,
        settings: serde_json::to_value(cfg).ok(),
    };
    if achieved < direct {
        recipe.pre_channels.clear();
        recipe.post_channels.clear();
        recipe.mixture = vec![vec![1.0]];
        recipe.achieved_fidelity = direct;
    }
    Ok(recipe)
}

/// Symplectic label of a Pauli index: per qubit `I, X, Y, Z -> 00, 01, 11, 10`
/// as `(z, x)` bits, so that operator products become XOR.
fn symplectic(index: usize, n: usize) -> usize {
    const MAP: [usize; 4] = [0, 1, 3, 2];
    (0..n).fold(0, |acc, q| {
        let digit = (index >> (2 * q)) & 3;
        acc | (MAP[digit] << (2 * q))
    })
}

fn walsh_hadamard(v: &mut [f64]) {
    let mut h = 1;
    while h < v.len() {
        for i in (0..v.len()).step_by(2 * h) {
            for j in i..i + h {
                let (a, b) = (v[j], v[j + h]);
                v[j] = a + b;
                v[j + h] = a - b;
            }
        }
        h *= 2;
    }
}

fn to_symplectic(p: &[f64], n: usize) -> Vec<f64> {
    let mut out = vec![0.0; p.len()];
    for (i, &v) in p.iter().enumerate() {
        out[symplectic(i, n)] = v;
    }
    out
}

fn from_symplectic(s: &[f64], n: usize) -> Vec<f64> {
    (0..s.len()).map(|i| s[symplectic(i, n)]).collect()
}

fn spectrum(p: &[f64], n: usize) -> Vec<f64> {
    let mut s = to_symplectic(p, n);
    walsh_hadamard(&mut s);
    s
}

/// Pauli weights of the composition `hw ∘ Pauli(λ) ∘ base` (group convolution).
pub fn pauli_convolve(hw: &[f64], lambda: &[f64], base: &[f64]) -> Vec<f64> {
    let n = (hw.len().trailing_zeros() / 2) as usize;
    let (a, b, cc) = (spectrum(hw, n), spectrum(lambda, n), spectrum(base, n));
    let mut prod: Vec<f64> = a.iter().zip(&b).zip(&cc).map(|((x, y), z)| x * y * z).collect();
    walsh_hadamard(&mut prod);
    let len = prod.len() as f64;
    prod.iter_mut().for_each(|v| *v /= len);
    from_symplectic(&prod, n)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PauliTailoring {
    pub lambda: PauliDiagonalSpec,
    /// Max deviation of the reproduced Pauli weights from the target.
    pub residual: f64,
    /// False when the system is singular and another `λ` would also work.
    pub unique: bool,
}

const PAULI_TOL: f64 = 1e-9;

/// Finds a distribution `λ` over Pauli corrections with
/// `hw ∘ Σ_j λ_j Σ_j·Σ_j ∘ base = target`, i.e. noisy Paulis applied after a
/// noisy base channel. Singular directions take the minimum-norm solution,
/// which is then projected onto the simplex.
pub fn pauli_tailor(
    hw: &PauliDiagonalSpec,
    base: &PauliDiagonalSpec,
    target: &PauliDiagonalSpec,
) -> Result<PauliTailoring> {
    let n = target.qubits();
    if hw.qubits() != n || base.qubits() != n {
        return Err(Error::DimensionMismatch("Pauli specs act on different qubit counts".into()));
    }
    let (sh, sb, st) = (spectrum(hw.probs(), n), spectrum(base.probs(), n), spectrum(target.probs(), n));
    let mut unique = true;
    let mut sl: Vec<f64> = Vec::with_capacity(st.len());
    for k in 0..st.len() {
        let g = sh[k] * sb[k];
        if g.abs() > 1e-12 {
            sl.push(st[k] / g);
        } else {
            unique = false;
            sl.push(0.0);
        }
    }
    walsh_hadamard(&mut sl);
    let len = sl.len() as f64;
    let raw: Vec<f64> = from_symplectic(&sl.iter().map(|v| v / len).collect::<Vec<_>>(), n);
    let lambda = if raw.iter().all(|&v| v >= 0.0) { raw } else { project_to_simplex(&raw) };
    let reproduced = pauli_convolve(hw.probs(), &lambda, base.probs());
    let residual = reproduced
        .iter()
        .zip(target.probs())
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max);
    if residual > PAULI_TOL {
        return Err(Error::Infeasible { residual });
    }
    let sum: f64 = lambda.iter().sum();
    let lambda = PauliDiagonalSpec::new(lambda.iter().map(|v| v / sum).collect())?;
    Ok(PauliTailoring { lambda, residual, unique })
}

/// Single-qubit closed form for depolarizing hardware and base noise with
/// identity weights `q0` and `p0`: `λ_i = (4p̃_i + PQ - 1)/(4PQ)`.
pub fn pauli_tailor_depolarizing(p0: f64, q0: f64, target: &PauliDiagonalSpec) -> Result<Vec<f64>> {
    check_probability("p0", p0)?;
    check_probability("q0", q0)?;
    if target.qubits() != 1 {
        return Err(Error::DimensionMismatch("closed form is single-qubit".into()));
    }
    let (pp, qq) = ((4.0 * p0 - 1.0) / 3.0, (4.0 * q0 - 1.0) / 3.0);
    let pq = pp * qq;
    if pq.abs() < 1e-15 {
        // Fully depolarized: only the uniform target is reachable.
        let off = target.probs().iter().map(|v| (v - 0.25).abs()).fold(0.0, f64::max);
        return if off <= PAULI_TOL { Ok(vec![0.25; 4]) } else { Err(Error::Infeasible { residual: off }) };
    }
    let lambda: Vec<f64> = target.probs().iter().map(|t| (4.0 * t + pq - 1.0) / (4.0 * pq)).collect();
    let violation = lambda.iter().map(|&l| (-l).max(l - 1.0).max(0.0)).fold(0.0, f64::max);
    if violation > PAULI_TOL {
        return Err(Error::Infeasible { residual: violation * pq.abs() });
    }
    Ok(lambda.iter().map(|l| l.clamp(0.0, 1.0)).collect())
}

/// The tailored channel built by composition: `Σ_j λ_j N_hw ∘ Σ_j ∘ N_base`.
pub fn pauli_tailored_channel(
    hw: &PauliDiagonalSpec,
    base: &PauliDiagonalSpec,
    lambda: &[f64],
) -> Result<Channel> {
    let n = hw.qubits();
    let (nh, nb) = (pauli_diagonal(hw), pauli_diagonal(base));
    let terms: Vec<Channel> = (0..lambda.len())
        .map(|j| {
            let u = Channel::unitary(&pauli_string(n, j))?;
            compose(&nh, &compose(&u, &nb)?)
        })
        .collect::<Result<_>>()?;
    mix(&terms, lambda)
}

/// `P₁ + P₂ - P₁P₂`, the parameter of `AD(P₁) ∘ AD(P₂)`.
pub fn ad_compose_parameter(p1: f64, p2: f64) -> f64 {
    1.0 - (1.0 - p1) * (1.0 - p2)
}

/// Parameter after `n` applications: `1 - (1-P)^n`.
pub fn ad_repeat_parameter(p: f64, n: usize) -> f64 {
    1.0 - (1.0 - p).powi(n as i32)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdRepeat {
    pub n: usize,
    pub effective: f64,
    pub fidelity: f64,
}

/// Best repetition count `n ∈ [1, n_max]` of a hardware `AD(hw_p)` for
/// approximating `AD(target_p)`.
pub fn ad_repeat_tailor(hw_p: f64, target_p: f64, n_max: usize) -> Result<AdRepeat> {
    ad_repeat_tailor_range(hw_p, target_p, 1, n_max)
}

/// As [`ad_repeat_tailor`] over `n ∈ [n_min, n_max]`. Ties within 1e-12
/// go to the smaller `n`.
pub fn ad_repeat_tailor_range(hw_p: f64, target_p: f64, n_min: usize, n_max: usize) -> Result<AdRepeat> {
    if !(hw_p > 0.0 && hw_p < 1.0) {
        return Err(Error::InvalidProbability { name: "hw_P".into(), value: hw_p });
    }
    check_probability("target_P", target_p)?;
    if n_min == 0 || n_max < n_min {
        return Err(Error::Config(format!("invalid repetition range [{n_min}, {n_max}]")));
    }
    let target = amplitude_damping(target_p)?;
    let step = amplitude_damping(hw_p)?;
    let mut current = step.clone();
    for _ in 1..n_min {
        current = compose(&step, &current)?;
    }
    let mut best: Option<AdRepeat> = None;
    for n in n_min..=n_max {
        if n > n_min {
            current = compose(&step, &current)?;
        }
        let fidelity = choi_fidelity(&current, &target)?;
        if best.map_or(true, |b| fidelity > b.fidelity + 1e-12) {
            best = Some(AdRepeat { n, effective: ad_repeat_parameter(hw_p, n), fidelity });
        }
    }
    Ok(best.expect("non-empty range"))
}

/// Channel realized by `c` under hardware noise `hw`.
pub fn circuit_channel(c: &Circuit, hw: &NoiseModel) -> Result<Channel> {
    Ok(extract_channel(&apply_noise_model(c, hw)?)?.channel)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ThetaSearch {
    pub lo: f64,
    pub hi: f64,
    pub grid: usize,
    pub tol: f64,
    /// Parameter of the untailored implementation, reported as the direct
    /// fidelity.
    pub reference: Option<f64>,
}

impl Default for ThetaSearch {
    fn default() -> Self {
        Self { lo: 0.0, hi: std::f64::consts::PI, grid: 91, tol: 1e-10, reference: None }
    }
}

/// Method 2 with one tunable angle: grid scan plus golden-section refinement
/// of `F(channel(builder(θ)), target)`.
pub fn theta_tailor<B>(target: &Channel, builder: B, hw: &NoiseModel, search: &ThetaSearch) -> Result<TailoringRecipe>
where
    B: Fn(f64) -> Result<Circuit>,
{
    let fid = |theta: f64| -> Result<f64> { choi_fidelity(&circuit_channel(&builder(theta)?, hw)?, target) };
    // Surface construction errors before searching.
    fid(search.lo)?;
    let mut evals = 0usize;
    let (theta, _) = grid_then_golden(
        |t| {
            evals += 1;
            fid(t).map_or(f64::NAN, |f| 1.0 - f)
        },
        search.lo,
        search.hi,
        search.grid,
        search.tol,
    );
    let achieved = fid(theta)?;
    let mut recipe = TailoringRecipe::parametric(
        TailoringMethod::TailoredCircuit,
        BTreeMap::from([("theta".to_string(), theta)]),
        achieved,
    );
    recipe.direct_fidelity = search.reference.map(fid).transpose()?;
    recipe.evaluations = evals;
    recipe.settings = serde_json::to_value(search).ok();
    Ok(recipe)
}

/// A circuit family with named real parameters.
pub struct CircuitTemplate<'a> {
    pub names: Vec<String>,
    pub defaults: Vec<f64>,
    build: Box<dyn Fn(&[f64]) -> Result<Circuit> + Send + Sync + 'a>,
}

impl<'a> CircuitTemplate<'a> {
    pub fn new(
        names: &[&str],
        defaults: Vec<f64>,
        build: impl Fn(&[f64]) -> Result<Circuit> + Send + Sync + 'a,
    ) -> Self {
        assert_eq!(names.len(), defaults.len(), "one default per parameter");
        Self { names: names.iter().map(|s| s.to_string()).collect(), defaults, build: Box::new(build) }
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    pub fn build(&self, params: &[f64]) -> Result<Circuit> {
        if params.len() != self.len() {
            return Err(Error::Config(format!(
                "template takes {} parameters, got {}",
                self.len(),
                params.len()
            )));
        }
        (self.build)(params)
    }
}

/// Method 2 with every template parameter free: multi-start Nelder–Mead
/// seeded with the defaults and any extra `seeds` (e.g. a restricted
/// optimum), so the result is never worse than those points.
pub fn full_circuit_tailor(
    target: &Channel,
    template: &CircuitTemplate<'_>,
    hw: &NoiseModel,
    seeds: &[Vec<f64>],
    opts: &NelderMeadOptions,
) -> Result<TailoringRecipe> {
    let fid = |x: &[f64]| -> Result<f64> { choi_fidelity(&circuit_channel(&template.build(x)?, hw)?, target) };
    let direct = fid(&template.defaults)?;
    let mut starts = vec![template.defaults.clone()];
    starts.extend(seeds.iter().cloned());
    let best = multistart_nelder_mead(|x| fid(x).map_or(f64::NAN, |f| 1.0 - f), &starts, opts);
    let achieved = fid(&best.x)?;
    let params = template.names.iter().cloned().zip(best.x.iter().copied()).collect();
    let mut recipe = TailoringRecipe::parametric(TailoringMethod::TailoredCircuit, params, achieved);
    recipe.direct_fidelity = Some(direct);
    recipe.converged = best.converged;
    recipe.evaluations = best.evaluations;
    recipe.settings = serde_json::to_value(opts).ok();
    Ok(recipe)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BlackBoxOptimizer {
    NelderMead,
    CoordinateDescent,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BlackBoxConfig {
    pub optimizer: BlackBoxOptimizer,
    /// Evaluations per start.
    pub budget: usize,
    /// Random restarts (Nelder–Mead only).
    pub restarts: usize,
    pub step: f64,
    pub tol: f64,
    pub seed: u64,
}

impl Default for BlackBoxConfig {
    fn default() -> Self {
        Self {
            optimizer: BlackBoxOptimizer::NelderMead,
            budget: 2000,
            restarts: 0,
            step: 0.25,
            tol: 1e-8,
            seed: 0,
        }
    }
}

/// Method 3: maximizes an opaque fidelity oracle over its inputs. Parameters
/// are reported as `names[k]`, defaulting to `x0, x1, …`.
pub fn blackbox_optimize<F: FnMut(&[f64]) -> f64>(
    mut oracle: F,
    x0: &[f64],
    names: &[&str],
    cfg: &BlackBoxConfig,
) -> TailoringRecipe {
    let loss = |x: &[f64]| 1.0 - oracle(x);
    let best = match cfg.optimizer {
        BlackBoxOptimizer::NelderMead => {
            let opts = NelderMeadOptions {
                max_evals: cfg.budget,
                tol: cfg.tol,
                initial_step: cfg.step,
                restarts: cfg.restarts,
                spread: 2.0 * cfg.step,
                seed: cfg.seed,
            };
            multistart_nelder_mead(loss, &[x0.to_vec()], &opts)
        }
        BlackBoxOptimizer::CoordinateDescent => coordinate_descent(loss, x0, cfg.step, cfg.budget, cfg.tol),
    };
    let params = best
        .x
        .iter()
        .enumerate()
        .map(|(k, &v)| (names.get(k).map_or_else(|| format!("x{k}"), |s| s.to_string()), v))
        .collect();
    let mut recipe = TailoringRecipe::parametric(TailoringMethod::BlackBox, params, 1.0 - best.value);
    recipe.converged = best.converged;
    recipe.evaluations = best.evaluations;
    recipe.settings = serde_json::to_value(cfg).ok();
    recipe
}

/// Choi fidelity of the stochastic-`X` bit-flip circuit (identity with
/// probability `p`) under white noise `D_q` after the gate, against the
/// bit flip keeping weight `big_p`.
pub fn bitflip_fidelity_a(big_p: f64, p: f64, q: f64) -> f64 {
    let a = (big_p * ((4.0 * p - 1.0) * q + 1.0)).max(0.0).sqrt();
    let b = ((1.0 - big_p) * ((3.0 - 4.0 * p) * q + 1.0)).max(0.0).sqrt();
    0.25 * (a + b).powi(2)
}

/// As [`bitflip_fidelity_a`] for the ancilla circuit (`R_y` then CNOT),
/// with `D_q` after each gate.
pub fn bitflip_fidelity_b(big_p: f64, p: f64, q: f64) -> f64 {
    let a = (big_p * ((4.0 * p - 2.0) * q * q + q + 1.0)).max(0.0).sqrt();
    let b = ((1.0 - big_p) * ((2.0 - 4.0 * p) * q * q + q + 1.0)).max(0.0).sqrt();
    0.25 * (a + b).powi(2)
}

/// `max_p f(p)` over `[0, 1]` for a unimodal `f`, to tolerance `tol` in `p`.
/// The endpoints are compared explicitly since golden section only gets
/// within `tol` of a boundary optimum.
pub fn maximize_over_p(f: impl Fn(f64) -> f64, tol: f64) -> (f64, f64) {
    let (p, v) = golden_section(|p| -f(p), 0.0, 1.0, tol);
    [(0.0, f(0.0)), (1.0, f(1.0))].into_iter().fold((p, -v), |best, cand| if cand.1 > best.1 { cand } else { best })
}

/// Controlled-`R_y(θ)` into an ancilla followed by amplitude damping `hw_p`
/// on both wires, then CNOT back and the ancilla discarded.
pub fn noisy_cry_ad_circuit(theta: f64, hw_p: f64) -> Result<Circuit> {
    let noise = amplitude_damping(hw_p)?;
    let mut c = Circuit::new();
    let q = c.add_data("q0", 2);
    let a = c.add_ancilla("a0", 2);
    c.cry(theta, q, a)?;
    c.noise(noise.clone(), &[q])?.noise(noise, &[a])?;
    c.cnot(a, q)?.trace_out(a)?;
    Ok(c)
}

/// The three fidelities compared for amplitude-damping tailoring.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdComparison {
    /// Best repetition of the hardware channel.
    pub f1: f64,
    pub n: usize,
    /// Noisy circuit at the ideal angle `sin²(θ/2) = P̃`.
    pub f2: f64,
    /// Noisy circuit at the optimized angle.
    pub f3: f64,
    pub theta_star: f64,
}

pub fn ad_comparison(hw_p: f64, target_p: f64, n_min: usize, n_max: usize) -> Result<AdComparison> {
    let rep = ad_repeat_tailor_range(hw_p, target_p, n_min, n_max)?;
    let target = amplitude_damping(target_p)?;
    let search = ThetaSearch { reference: Some(angle_for(target_p)), ..Default::default() };
    let recipe = theta_tailor(&target, |t| noisy_cry_ad_circuit(t, hw_p), &NoiseModel::Ideal, &search)?;
    Ok(AdComparison {
        f1: rep.fidelity,
        n: rep.n,
        f2: recipe.direct_fidelity.unwrap_or(f64::NAN),
        f3: recipe.achieved_fidelity,
        theta_star: recipe.circuit_params["theta"],
    })
}

/// Amplitude-damping circuit with every angle exposed: `θ` on the
/// controlled rotation, `φ` on the ancilla before the CNOT, and a final
/// `R_z(β) R_y(α)` on the data qubit. Defaults reproduce the ideal circuit.
pub fn ad_full_template<'a>(gamma: f64) -> CircuitTemplate<'a> {
    CircuitTemplate::new(&["theta", "phi", "alpha", "beta"], vec![angle_for(gamma), 0.0, 0.0, 0.0], |x| {
        let mut c = Circuit::new();
        let q = c.add_data("q0", 2);
        let a = c.add_ancilla("a0", 2);
        c.cry(x[0], q, a)?.ry(x[1], a)?.cnot(a, q)?.trace_out(a)?;
        c.ry(x[2], q)?.gate("rz", gates::rz(x[3]), &[q])?;
        Ok(c)
    })
}

/// Single-qubit Pauli mixture with softmax weights `l0..l3`.
pub fn pauli_mixture_template<'a>(probs: &[f64]) -> CircuitTemplate<'a> {
    let logits = probs.iter().map(|p| p.max(1e-12).ln()).collect();
    CircuitTemplate::new(&["l0", "l1", "l2", "l3"], logits, |x| {
        let mut c = Circuit::new();
        let q = c.add_data("q0", 2);
        c.channel("pauli_mix", pauli_diagonal(&PauliDiagonalSpec::new(softmax(x))?), &[q])?;
        Ok(c)
    })
}

/// Pauli mixture followed by a tunable `U3(θ, φ, λ)`.
pub fn pauli_u3_template<'a>(probs: &[f64]) -> CircuitTemplate<'a> {
    let mut defaults: Vec<f64> = probs.iter().map(|p| p.max(1e-12).ln()).collect();
    defaults.extend([0.0; 3]);
    CircuitTemplate::new(&["l0", "l1", "l2", "l3", "u_theta", "u_phi", "u_lambda"], defaults, |x| {
        let mut c = Circuit::new();
        let q = c.add_data("q0", 2);
        c.channel("pauli_mix", pauli_diagonal(&PauliDiagonalSpec::new(softmax(&x[..4]))?), &[q])?;
        c.gate("u3", gates::u3(x[4], x[5], x[6]), &[q])?;
        Ok(c)
    })
}

/// Serialized tailoring job.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "method", rename_all = "snake_case")]
pub enum TailoringJob {
    BuildingBlock {
        target: ChannelSpec,
        /// Implementation to correct; defaults to the target under `hardware`.
        #[serde(default)]
        input: Option<ChannelSpec>,
        hardware: NoiseConfig,
        #[serde(default, flatten)]
        config: BuildingBlockConfig,
    },
    Pauli {
        hardware: PauliDiagonalSpec,
        base: PauliDiagonalSpec,
        target: PauliDiagonalSpec,
    },
    AdRepeat {
        hw_p: f64,
        target_p: f64,
        n_max: usize,
    },
    Theta {
        gamma: f64,
        hardware: NoiseConfig,
        #[serde(default = "default_variant")]
        variant: AdVariant,
        #[serde(default)]
        search: ThetaSearch,
    },
    FullCircuit {
        gamma: f64,
        hardware: NoiseConfig,
        #[serde(default)]
        optimizer: NelderMeadOptions,
    },
    BlackBox {
        gamma: f64,
        hardware: NoiseConfig,
        #[serde(default = "default_variant")]
        variant: AdVariant,
        #[serde(default)]
        optimizer: BlackBoxConfig,
    },
}

fn default_variant() -> AdVariant {
    AdVariant::UnitaryCnot
}

impl TailoringJob {
    /// Overrides every optimizer seed in the job.
    pub fn set_seed(&mut self, seed: u64) {
        match self {
            TailoringJob::BuildingBlock { config, .. } => config.optimizer.seed = seed,
            TailoringJob::FullCircuit { optimizer, .. } => optimizer.seed = seed,
            TailoringJob::BlackBox { optimizer, .. } => optimizer.seed = seed,
            _ => {}
        }
    }

    pub fn run(&self) -> Result<TailoringRecipe> {
        let mut recipe = match self {
            TailoringJob::BuildingBlock { target, input, hardware, config } => {
                let hw = NoiseModel::from_config(hardware)?;
                let target = target.build()?;
                let input = match input {
                    Some(spec) => spec.build()?,
                    None => match block_noise(&hw) {
                        Some(n) => compose(&n, &target)?,
                        None => target.clone(),
                    },
                };
                building_block_optimize(&target, &input, &hw, config)?
            }
            TailoringJob::Pauli { hardware, base, target } => {
                let sol = pauli_tailor(hardware, base, target)?;
                let out = pauli_tailored_channel(hardware, base, sol.lambda.probs())?;
                let fid = choi_fidelity(&out, &pauli_diagonal(target))?;
                let params = sol
                    .lambda
                    .probs()
                    .iter()
                    .enumerate()
                    .map(|(k, &v)| (format!("lambda_{k}"), v))
                    .collect();
                let mut recipe = TailoringRecipe::parametric(TailoringMethod::TailoredCircuit, params, fid);
                recipe.converged = sol.unique;
                recipe
            }
            TailoringJob::AdRepeat { hw_p, target_p, n_max } => {
                let rep = ad_repeat_tailor(*hw_p, *target_p, *n_max)?;
                let params =
                    BTreeMap::from([("n".to_string(), rep.n as f64), ("effective_p".to_string(), rep.effective)]);
                TailoringRecipe::parametric(TailoringMethod::TailoredCircuit, params, rep.fidelity)
            }
            TailoringJob::Theta { gamma, hardware, variant, search } => {
                let hw = NoiseModel::from_config(hardware)?;
                let target = amplitude_damping(*gamma)?;
                let search = ThetaSearch { reference: search.reference.or(Some(angle_for(*gamma))), ..*search };
                theta_tailor(&target, |t| circuit::build_ad_circuit(t, *variant), &hw, &search)?
            }
            TailoringJob::FullCircuit { gamma, hardware, optimizer } => {
                let hw = NoiseModel::from_config(hardware)?;
                let target = amplitude_damping(*gamma)?;
                let search = ThetaSearch { reference: Some(angle_for(*gamma)), ..Default::default() };
                let theta = theta_tailor(&target, |t| circuit::build_ad_circuit(t, AdVariant::UnitaryCnot), &hw, &search)?;
                let seed = vec![theta.circuit_params["theta"], 0.0, 0.0, 0.0];
                full_circuit_tailor(&target, &ad_full_template(*gamma), &hw, &[seed], optimizer)?
            }
            TailoringJob::BlackBox { gamma, hardware, variant, optimizer } => {
                let hw = NoiseModel::from_config(hardware)?;
                let target = amplitude_damping(*gamma)?;
                let oracle = |x: &[f64]| {
                    circuit::build_ad_circuit(x[0], *variant)
                        .and_then(|c| circuit_channel(&c, &hw))
                        .and_then(|ch| choi_fidelity(&ch, &target))
                        .unwrap_or(f64::NAN)
                };
                let direct = oracle(&[angle_for(*gamma)]);
                let mut recipe = blackbox_optimize(oracle, &[angle_for(*gamma)], &["theta"], optimizer);
                recipe.direct_fidelity = Some(direct);
                recipe
            }
        };
        recipe.settings = Some(serde_json::to_value(self)?);
        Ok(recipe)
    }
}
