//! Named channels and hardware noise models.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::channel::{check_distribution, compose, Channel, KrausSet};
use crate::circuit::{Circuit, Element};
use crate::error::{check_probability, Error, Result};
use crate::linalg::{c, from_real_rows, pauli_string, paulis, r, CMatrix, ONE};

fn kraus_channel(ops: Vec<CMatrix>) -> Channel {
    Channel::from_kraus(&KrausSet::new(ops).expect("factory Kraus sets are complete"))
}

/// `ρ -> p ρ + (1-p) Z ρ Z`.
pub fn dephasing(p: f64) -> Result<Channel> {
    check_probability("p", p)?;
    let [id, _, _, z] = paulis();
    Ok(kraus_channel(vec![id * r(p.sqrt()), z * r((1.0 - p).sqrt())]))
}

/// `ρ -> p ρ + (1-p)/3 (XρX + YρY + ZρZ)`.
pub fn depolarizing(p: f64) -> Result<Channel> {
    check_probability("p", p)?;
    let w = ((1.0 - p) / 3.0).sqrt();
    let [id, x, y, z] = paulis();
    Ok(kraus_channel(vec![id * r(p.sqrt()), x * r(w), y * r(w), z * r(w)]))
}

/// `D_q(ρ) = q ρ + (1-q) 1/2`, the depolarizing channel in white-noise form.
pub fn white_noise(q: f64) -> Result<Channel> {
    check_probability("q", q)?;
    depolarizing(white_noise_to_pauli(q))
}

/// Identity weight `p` of the Pauli form equivalent to `D_q`.
pub fn white_noise_to_pauli(q: f64) -> f64 {
    (3.0 * q + 1.0) / 4.0
}

/// `p' = (4p - 1)/3`, inverse of [`white_noise_to_pauli`].
pub fn pauli_to_white_noise(p: f64) -> f64 {
    (4.0 * p - 1.0) / 3.0
}

pub fn amplitude_damping(gamma: f64) -> Result<Channel> {
    check_probability("gamma", gamma)?;
    let k0 = from_real_rows(&[&[1.0, 0.0], &[0.0, (1.0 - gamma).sqrt()]]);
    let k1 = from_real_rows(&[&[0.0, gamma.sqrt()], &[0.0, 0.0]]);
    Ok(kraus_channel(vec![k0, k1]))
}

/// `ρ -> P ρ + (1-P) X ρ X`.
pub fn bit_flip(p: f64) -> Result<Channel> {
    check_probability("p", p)?;
    let [id, x, _, _] = paulis();
    Ok(kraus_channel(vec![id * r(p.sqrt()), x * r((1.0 - p).sqrt())]))
}

/// Mixture of `1` with the three rotations `(1 + iσ)/√2`. The identity
/// keeps weight `q`; each rotation gets `(1-q)/3`.
pub fn rotation_noise_b(q: f64) -> Result<Channel> {
    check_probability("q", q)?;
    let w = ((1.0 - q) / 3.0).sqrt() / std::f64::consts::SQRT_2;
    let [id, x, y, z] = paulis();
    let rot = |s: CMatrix| (&id + s * c(0.0, 1.0)) * r(w);
    Ok(kraus_channel(vec![
        &id * r(q.sqrt()),
        rot(x),
        rot(y),
        rot(z),
    ]))
}

/// Loses the system with probability `1 - p`, flagging the loss in an extra
/// level: `ρ -> p (ρ ⊕ 0) + (1-p) |e><e|`.
pub fn erasure(p: f64, dim: usize) -> Result<Channel> {
    check_probability("p", p)?;
    if dim == 0 {
        return Err(Error::Shape("erasure needs a positive dimension".into()));
    }
    let mut ops = Vec::with_capacity(dim + 1);
    let mut keep = CMatrix::zeros(dim + 1, dim);
    for i in 0..dim {
        keep[(i, i)] = r(p.sqrt());
    }
    ops.push(keep);
    for i in 0..dim {
        let mut lose = CMatrix::zeros(dim + 1, dim);
        lose[(dim, i)] = r((1.0 - p).sqrt());
        ops.push(lose);
    }
    Ok(kraus_channel(ops))
}

/// Prepares `|0>` regardless of the input.
pub fn reset(dim: usize) -> Channel {
    let ops = (0..dim)
        .map(|i| {
            let mut k = CMatrix::zeros(dim, dim);
            k[(0, i)] = ONE;
            k
        })
        .collect();
    kraus_channel(ops)
}

/// Probabilities over the `n`-qubit Pauli group. Index `i` is read in base 4,
/// most significant digit on the first qubit, digits `0..4 = I, X, Y, Z`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct PauliDiagonalSpec {
    probs: Vec<f64>,
    n: usize,
}

impl TryFrom<Vec<f64>> for PauliDiagonalSpec {
    type Error = Error;

    fn try_from(probs: Vec<f64>) -> Result<Self> {
        Self::new(probs)
    }
}

impl From<PauliDiagonalSpec> for Vec<f64> {
    fn from(spec: PauliDiagonalSpec) -> Self {
        spec.probs
    }
}

impl PauliDiagonalSpec {
    pub fn new(probs: Vec<f64>) -> Result<Self> {
        let n = (0..=8)
            .find(|&n| 4usize.pow(n as u32) == probs.len())
            .ok_or_else(|| Error::Shape(format!("{} is not a power of 4", probs.len())))?;
        check_distribution(&probs, 1e-12)?;
        Ok(Self { probs, n })
    }

    pub fn identity(n: usize) -> Self {
        let mut probs = vec![0.0; 4usize.pow(n as u32)];
        probs[0] = 1.0;
        Self { probs, n }
    }

    pub fn uniform(n: usize) -> Self {
        let len = 4usize.pow(n as u32);
        Self { probs: vec![1.0 / len as f64; len], n }
    }

    /// Single-qubit depolarizing channel with identity weight `p`.
    pub fn depolarizing(p: f64) -> Result<Self> {
        check_probability("p", p)?;
        let w = (1.0 - p) / 3.0;
        Ok(Self { probs: vec![p, w, w, w], n: 1 })
    }

    pub fn qubits(&self) -> usize {
        self.n
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    /// Reads the Pauli weights of a channel, or `None` if its process matrix
    /// in the Pauli basis has off-diagonal entries above `tol`.
    pub fn from_channel(ch: &Channel, tol: f64) -> Option<Self> {
        let n = (1..=4).find(|&n| 1usize << n == ch.dim_in())?;
        if ch.dim_out() != ch.dim_in() {
            return None;
        }
        let chi = pauli_process_matrix(ch);
        let off = (0..chi.nrows())
            .flat_map(|i| (0..chi.ncols()).filter(move |&j| j != i).map(move |j| (i, j)))
            .map(|(i, j)| chi[(i, j)].norm())
            .fold(0.0, f64::max);
        if off > tol {
            return None;
        }
        let probs = (0..chi.nrows()).map(|i| chi[(i, i)].re.max(0.0)).collect();
        Some(Self { probs, n })
    }
}

pub fn pauli_diagonal(spec: &PauliDiagonalSpec) -> Channel {
    let ops = spec
        .probs
        .iter()
        .enumerate()
        .filter(|(_, &p)| p > 0.0)
        .map(|(i, &p)| pauli_string(spec.n, i) * r(p.sqrt()))
        .collect();
    Channel::from_kraus(&KrausSet::new_unchecked(ops).expect("Pauli strings share a shape"))
}

/// Process matrix `χ_ij` of a channel in the normalised Pauli basis:
/// `E(ρ) = Σ χ_ij σ_i ρ σ_j†`. Pauli-diagonal channels have diagonal `χ`.
pub fn pauli_process_matrix(ch: &Channel) -> CMatrix {
    let d = ch.dim_in();
    let n = d.trailing_zeros() as usize;
    let count = d * d;
    // Column k is vec(σ_k)/√d, the Choi vector of the conjugation by σ_k.
    let strings: Vec<CMatrix> = (0..count).map(|k| pauli_string(n, k)).collect();
    let scale = r(1.0 / (d as f64).sqrt());
    let basis = CMatrix::from_fn(count, count, |row, k| strings[k][(row / d, row % d)] * scale);
    basis.adjoint() * ch.choi() * basis
}

/// A named channel with scalar parameters, e.g. `{"name":"dephasing","q":0.925}`.
///
/// `q` always denotes the retained weight, so `1 - q` is the strength: the
/// identity weight for dephasing and bit flip, the white-noise parameter of
/// `D_q` for depolarizing, and `1 - γ` for amplitude damping. Factory-native
/// names (`p`, `gamma`) are accepted as well.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChannelSpec {
    pub name: String,
    #[serde(flatten)]
    pub params: BTreeMap<String, f64>,
}

impl ChannelSpec {
    pub fn new(name: &str, params: &[(&str, f64)]) -> Self {
        Self {
            name: name.to_string(),
            params: params.iter().map(|(k, v)| (k.to_string(), *v)).collect(),
        }
    }

    fn get(&self, key: &str) -> Option<f64> {
        self.params.get(key).copied()
    }

    fn one_of(&self, keys: &[&str]) -> Result<(usize, f64)> {
        let found: Vec<(usize, f64)> =
            keys.iter().enumerate().filter_map(|(i, k)| self.get(k).map(|v| (i, v))).collect();
        match found.as_slice() {
            [one] => Ok(*one),
            [] => Err(Error::Config(format!(
                "channel {:?} needs one of the parameters {keys:?}",
                self.name
            ))),
            _ => Err(Error::Config(format!(
                "channel {:?} got more than one of {keys:?}",
                self.name
            ))),
        }
    }

    pub fn build(&self) -> Result<Channel> {
        let dim = self.get("dim").map(|d| d as usize).unwrap_or(2);
        let wrap = |e: Error| match e {
            Error::InvalidProbability { name, value } => Error::Config(format!(
                "channel {:?}: parameter {name} = {value} is outside [0, 1]",
                self.name
            )),
            other => other,
        };
        let ch = match self.name.as_str() {
            "identity" => Ok(Channel::identity(dim)),
            "dephasing" => dephasing(self.one_of(&["p", "q"])?.1),
            "bit_flip" => bit_flip(self.one_of(&["p", "q"])?.1),
            "depolarizing" => match self.one_of(&["p", "q"])? {
                (0, p) => depolarizing(p),
                (_, q) => white_noise(q),
            },
            "white_noise" => white_noise(self.one_of(&["q"])?.1),
            "amplitude_damping" => match self.one_of(&["gamma", "q"])? {
                (0, g) => amplitude_damping(g),
                (_, q) => amplitude_damping(1.0 - q),
            },
            "rotation_noise_b" => rotation_noise_b(self.one_of(&["q"])?.1),
            "erasure" => erasure(self.one_of(&["p"])?.1, dim),
            "reset" => Ok(reset(dim)),
            other => Err(Error::Config(format!("unknown channel name {other:?}"))),
        };
        ch.map_err(wrap)
    }
}

/// Builds `last ∘ … ∘ first` from specs listed in application order.
pub fn build_sequence(specs: &[ChannelSpec]) -> Result<Channel> {
    let mut iter = specs.iter();
    let first = iter
        .next()
        .ok_or_else(|| Error::Config("noise channel list is empty".into()))?
        .build()?;
    iter.try_fold(first, |acc, spec| compose(&spec.build()?, &acc))
}

/// Hardware noise description.
#[derive(Debug, Clone)]
pub enum NoiseModel {
    Ideal,
    /// Every gate is followed by a single-wire channel on each wire it touches.
    Gate(GateNoise),
    /// The whole ideal circuit is followed by one channel on the data wires.
    Block(Channel),
}

#[derive(Debug, Clone, Default)]
pub struct GateNoise {
    /// Per-wire channel keyed by gate arity.
    pub per_arity: BTreeMap<usize, Channel>,
    /// Channel used for arities without an explicit entry.
    pub fallback: Option<Channel>,
    /// Channel applied before every measurement; defaults to the arity-1 entry.
    pub measurement: Option<Channel>,
}

impl GateNoise {
    pub fn uniform(ch: Channel) -> Self {
        Self { per_arity: BTreeMap::new(), fallback: Some(ch), measurement: None }
    }

    fn for_arity(&self, arity: usize) -> Option<&Channel> {
        self.per_arity.get(&arity).or(self.fallback.as_ref())
    }

    fn for_measurement(&self) -> Option<&Channel> {
        self.measurement.as_ref().or_else(|| self.for_arity(1))
    }
}

impl NoiseModel {
    pub fn gate(ch: Channel) -> Self {
        NoiseModel::Gate(GateNoise::uniform(ch))
    }

    pub fn block(ch: Channel) -> Self {
        NoiseModel::Block(ch)
    }

    pub fn from_config(cfg: &NoiseConfig) -> Result<Self> {
        match cfg.kind.as_str() {
            "none" | "ideal" => Ok(NoiseModel::Ideal),
            "gate" => Ok(NoiseModel::gate(build_sequence(&cfg.channels)?)),
            "block" => Ok(NoiseModel::block(build_sequence(&cfg.channels)?)),
            other => Err(Error::Config(format!(
                "noise kind must be \"gate\" or \"block\", got {other:?}"
            ))),
        }
    }

    pub fn is_ideal(&self) -> bool {
        matches!(self, NoiseModel::Ideal)
    }

    fn channels(&self) -> Vec<&Channel> {
        match self {
            NoiseModel::Ideal => vec![],
            NoiseModel::Block(ch) => vec![ch],
            NoiseModel::Gate(g) => {
                g.per_arity.values().chain(&g.fallback).chain(&g.measurement).collect()
            }
        }
    }

    /// Checks that every contained channel is CPTP.
    pub fn validate(&self) -> Result<()> {
        for ch in self.channels() {
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
}

/// Serialized noise model: `{"kind": "gate"|"block", "channels": [...]}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NoiseConfig {
    pub kind: String,
    #[serde(default)]
    pub channels: Vec<ChannelSpec>,
}

impl NoiseConfig {
    pub fn new(kind: &str, channels: Vec<ChannelSpec>) -> Self {
        Self { kind: kind.into(), channels }
    }
}

/// Returns a copy of `c` with hardware noise inserted. Elements marked as
/// noise are never decorated again.
pub fn apply_noise_model(c: &Circuit, nm: &NoiseModel) -> Result<Circuit> {
    match nm {
        NoiseModel::Ideal => Ok(c.clone()),
        NoiseModel::Block(ch) => {
            let mut out = c.clone();
            out.append_trailing_noise(ch)?;
            Ok(out)
        }
        NoiseModel::Gate(g) => {
            let mut elements = Vec::with_capacity(c.elements().len() * 2);
            for el in c.elements() {
                match el {
                    Element::Measure { wire, .. } => {
                        if let Some(ch) = g.for_measurement() {
                            elements.push(Element::Noise { channel: ch.clone(), wires: vec![*wire] });
                        }
                        elements.push(el.clone());
                    }
                    Element::Gate { .. } | Element::Channel { .. } => {
                        elements.push(el.clone());
                        elements.extend(gate_noise_after(el, g)?);
                    }
                    Element::Conditional { register, value, inner } => {
                        elements.push(el.clone());
                        for noise in gate_noise_after(inner, g)? {
                            elements.push(Element::Conditional {
                                register: register.clone(),
                                value: *value,
                                inner: Box::new(noise),
                            });
                        }
                    }
                    _ => elements.push(el.clone()),
                }
            }
            c.with_elements(elements)
        }
    }
}

fn gate_noise_after(el: &Element, g: &GateNoise) -> Result<Vec<Element>> {
    let (label, wires) = match el {
        Element::Gate { label, wires, .. } | Element::Channel { label, wires, .. } => {
            (label, wires)
        }
        _ => return Ok(vec![]),
    };
    let ch = g.for_arity(wires.len()).ok_or_else(|| {
        Error::Config(format!(
            "gate noise model has no entry for {}-wire gate {label:?}",
            wires.len()
        ))
    })?;
    let mut sorted = wires.clone();
    sorted.sort_unstable();
    Ok(sorted
        .into_iter()
        .map(|w| Element::Noise { channel: ch.clone(), wires: vec![w] })
        .collect())
}
