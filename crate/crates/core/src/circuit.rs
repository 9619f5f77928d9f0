//! Exact density-matrix simulation of small circuits with measurement
//! branching, classical feedback, resets and trace-outs.
//!
//! Data wires carry the input state; ancilla wires start in `|0>` the first
//! time an element touches them. Measurements split the state into one
//! unnormalised branch per outcome, keyed by the classical record, and the
//! branches are summed at the end (outcome erasure).

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::channel::{Channel, ChannelJson, DensityMatrix};
use crate::error::{Error, Result};
use crate::linalg::{
    self, check_unitary, identity, local_mul_left, local_mul_right_adjoint, r, CMatrix, ONE,
};
use crate::noise::ChannelSpec;
use crate::serde_util::MatrixJson;

/// Largest total Hilbert dimension the engine will hold (12 qubits).
pub const MAX_DIM: usize = 4096;

/// Standard gates.
pub mod gates {
    use crate::linalg::{c, from_real_rows, identity, paulis, r, CMatrix, ONE, ZERO};

    /// `exp(-iθY/2)`.
    pub fn ry(theta: f64) -> CMatrix {
        let (s, co) = (theta / 2.0).sin_cos();
        from_real_rows(&[&[co, -s], &[s, co]])
    }

    pub fn rx(theta: f64) -> CMatrix {
        let (s, co) = (theta / 2.0).sin_cos();
        CMatrix::from_row_slice(2, 2, &[r(co), c(0.0, -s), c(0.0, -s), r(co)])
    }

    pub fn rz(theta: f64) -> CMatrix {
        let h = theta / 2.0;
        CMatrix::from_row_slice(2, 2, &[c(h.cos(), -h.sin()), ZERO, ZERO, c(h.cos(), h.sin())])
    }

    /// `U3(θ, φ, λ)` in the usual OpenQASM convention.
    pub fn u3(theta: f64, phi: f64, lambda: f64) -> CMatrix {
        let (s, co) = (theta / 2.0).sin_cos();
        let e = |a: f64| c(a.cos(), a.sin());
        CMatrix::from_row_slice(
            2,
            2,
            &[r(co), -e(lambda) * s, e(phi) * s, e(phi + lambda) * co],
        )
    }

    pub fn x() -> CMatrix {
        paulis()[1].clone()
    }

    pub fn y() -> CMatrix {
        paulis()[2].clone()
    }

    pub fn z() -> CMatrix {
        paulis()[3].clone()
    }

    pub fn h() -> CMatrix {
        from_real_rows(&[&[1.0, 1.0], &[1.0, -1.0]]) / r(std::f64::consts::SQRT_2)
    }

    /// Controlled version of a single-wire unitary; the control is the first
    /// tensor factor.
    pub fn controlled(u: &CMatrix) -> CMatrix {
        let d = u.nrows();
        let mut m = identity(2 * d);
        m.view_mut((d, d), (d, d)).copy_from(u);
        m
    }

    /// CNOT with the control on the first factor.
    pub fn cnot() -> CMatrix {
        controlled(&x())
    }

    pub fn cry(theta: f64) -> CMatrix {
        controlled(&ry(theta))
    }

    pub fn swap() -> CMatrix {
        let mut m = CMatrix::zeros(4, 4);
        for (a, b) in [(0, 0), (1, 2), (2, 1), (3, 3)] {
            m[(a, b)] = ONE;
        }
        m
    }

    /// Qudit shift `X_D |j> = |j - 1 mod D>`.
    pub fn shift(d: usize) -> CMatrix {
        let mut m = CMatrix::zeros(d, d);
        for j in 0..d {
            m[((j + d - 1) % d, j)] = ONE;
        }
        m
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Wire {
    pub label: String,
    pub dim: usize,
    #[serde(default)]
    pub ancilla: bool,
}

/// One step of a circuit.
#[derive(Debug, Clone)]
pub enum Element {
    /// Ideal unitary; receives gate noise.
    Gate { label: String, unitary: CMatrix, wires: Vec<usize> },
    /// An implemented operation given directly as a channel (e.g. a
    /// stochastic gate realised by classical mixing); receives gate noise.
    Channel { label: String, channel: Channel, wires: Vec<usize> },
    /// Hardware noise; never decorated further.
    Noise { channel: Channel, wires: Vec<usize> },
    /// Projective measurement whose outcome index is stored in `register`.
    Measure { wire: usize, register: String, projectors: Vec<CMatrix> },
    /// Applies `inner` only in branches where `register == value`.
    Conditional { register: String, value: usize, inner: Box<Element> },
    /// Discards the wire and prepares it in `|0>`.
    Reset { wire: usize },
    TraceOut { wire: usize },
}

impl Element {
    fn wires(&self) -> Vec<usize> {
        match self {
            Element::Gate { wires, .. }
            | Element::Channel { wires, .. }
            | Element::Noise { wires, .. } => wires.clone(),
            Element::Measure { wire, .. } | Element::Reset { wire } | Element::TraceOut { wire } => {
                vec![*wire]
            }
            Element::Conditional { inner, .. } => inner.wires(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Liveness {
    Fresh,
    Live,
    Dead,
}

/// An ordered list of elements over a fixed set of wires.
#[derive(Debug, Clone, Default)]
pub struct Circuit {
    wires: Vec<Wire>,
    elements: Vec<Element>,
}

impl Circuit {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add_data(&mut self, label: &str, dim: usize) -> usize {
        self.wires.push(Wire { label: label.into(), dim, ancilla: false });
        self.wires.len() - 1
    }

    pub fn add_ancilla(&mut self, label: &str, dim: usize) -> usize {
        self.wires.push(Wire { label: label.into(), dim, ancilla: true });
        self.wires.len() - 1
    }

    pub fn wires(&self) -> &[Wire] {
        &self.wires
    }

    pub fn elements(&self) -> &[Element] {
        &self.elements
    }

    pub fn data_wires(&self) -> Vec<usize> {
        (0..self.wires.len()).filter(|&w| !self.wires[w].ancilla).collect()
    }

    pub fn data_dim(&self) -> usize {
        self.data_wires().iter().map(|&w| self.wires[w].dim).product()
    }

    /// Same wires, different elements (validated).
    pub fn with_elements(&self, elements: Vec<Element>) -> Result<Circuit> {
        let c = Circuit { wires: self.wires.clone(), elements };
        c.check()?;
        Ok(c)
    }

    pub fn push(&mut self, el: Element) -> Result<&mut Self> {
        self.elements.push(el);
        if let Err(e) = self.check() {
            self.elements.pop();
            return Err(e);
        }
        Ok(self)
    }

    pub fn gate(&mut self, label: &str, unitary: CMatrix, wires: &[usize]) -> Result<&mut Self> {
        self.push(Element::Gate { label: label.into(), unitary, wires: wires.to_vec() })
    }

    pub fn ry(&mut self, theta: f64, wire: usize) -> Result<&mut Self> {
        self.gate("ry", gates::ry(theta), &[wire])
    }

    pub fn x(&mut self, wire: usize) -> Result<&mut Self> {
        self.gate("x", gates::x(), &[wire])
    }

    pub fn cnot(&mut self, control: usize, target: usize) -> Result<&mut Self> {
        self.gate("cnot", gates::cnot(), &[control, target])
    }

    pub fn cry(&mut self, theta: f64, control: usize, target: usize) -> Result<&mut Self> {
        self.gate("cry", gates::cry(theta), &[control, target])
    }

    pub fn channel(&mut self, label: &str, channel: Channel, wires: &[usize]) -> Result<&mut Self> {
        self.push(Element::Channel { label: label.into(), channel, wires: wires.to_vec() })
    }

    pub fn noise(&mut self, channel: Channel, wires: &[usize]) -> Result<&mut Self> {
        self.push(Element::Noise { channel, wires: wires.to_vec() })
    }

    /// Computational-basis measurement.
    pub fn measure(&mut self, wire: usize, register: &str) -> Result<&mut Self> {
        let d = self.wires.get(wire).map(|w| w.dim).unwrap_or(0);
        self.measure_with(wire, register, basis_projectors(d))
    }

    pub fn measure_with(
        &mut self,
        wire: usize,
        register: &str,
        projectors: Vec<CMatrix>,
    ) -> Result<&mut Self> {
        self.push(Element::Measure { wire, register: register.into(), projectors })
    }

    pub fn conditional(&mut self, register: &str, value: usize, inner: Element) -> Result<&mut Self> {
        self.push(Element::Conditional { register: register.into(), value, inner: Box::new(inner) })
    }

    pub fn reset(&mut self, wire: usize) -> Result<&mut Self> {
        self.push(Element::Reset { wire })
    }

    pub fn trace_out(&mut self, wire: usize) -> Result<&mut Self> {
        self.push(Element::TraceOut { wire })
    }

    /// Appends a channel after the whole circuit on the live data wires:
    /// jointly if its dimension matches all of them, otherwise one copy per
    /// wire.
    pub fn append_trailing_noise(&mut self, ch: &Channel) -> Result<()> {
        let live = self.final_data_wires()?;
        if live.is_empty() {
            return Ok(());
        }
        let joint: usize = live.iter().map(|&w| self.wires[w].dim).product();
        if ch.dim_in() == joint {
            self.noise(ch.clone(), &live)?;
        } else if live.iter().all(|&w| self.wires[w].dim == ch.dim_in()) {
            for w in live {
                self.noise(ch.clone(), &[w])?;
            }
        } else {
            return Err(Error::DimensionMismatch(format!(
                "trailing noise of dimension {} fits neither single data wires nor their product {joint}",
                ch.dim_in()
            )));
        }
        Ok(())
    }

    fn final_data_wires(&self) -> Result<Vec<usize>> {
        let state = self.check()?;
        Ok(self.data_wires().into_iter().filter(|&w| state[w] == Liveness::Live).collect())
    }

    /// Static validation; returns the liveness of every wire at the end.
    fn check(&self) -> Result<Vec<Liveness>> {
        let mut state: Vec<Liveness> = self
            .wires
            .iter()
            .map(|w| if w.ancilla { Liveness::Fresh } else { Liveness::Live })
            .collect();
        if let Some(w) = self.wires.iter().find(|w| w.dim == 0) {
            return Err(Error::Circuit(format!("wire {:?} has dimension {}", w.label, w.dim)));
        }
        let mut registers: BTreeMap<&str, usize> = BTreeMap::new();
        for (idx, el) in self.elements.iter().enumerate() {
            let at = |msg: String| Error::Circuit(format!("element {idx}: {msg}"));
            let wires = el.wires();
            let mut seen = BTreeSet::new();
            for &w in &wires {
                if w >= self.wires.len() {
                    return Err(at(format!("wire index {w} out of range")));
                }
                if !seen.insert(w) {
                    return Err(at(format!("wire {w} listed twice")));
                }
                let revives = matches!(el, Element::Reset { .. });
                if state[w] == Liveness::Dead && !revives {
                    return Err(at(format!("wire {:?} was already traced out", self.wires[w].label)));
                }
            }
            let dim: usize = wires.iter().map(|&w| self.wires[w].dim).product();
            check_element(el, dim, &registers).map_err(|e| match e {
                Error::Circuit(m) => at(m),
                other => at(other.to_string()),
            })?;
            match el {
                Element::Measure { wire, register, projectors } => {
                    registers.insert(register, projectors.len());
                    state[*wire] = Liveness::Live;
                }
                Element::TraceOut { wire } => state[*wire] = Liveness::Dead,
                _ => {
                    for w in wires {
                        state[w] = Liveness::Live;
                    }
                }
            }
        }
        Ok(state)
    }

    pub fn to_json(&self) -> CircuitJson {
        CircuitJson {
            wires: self.wires.clone(),
            elements: self.elements.iter().map(element_to_json).collect(),
        }
    }

    pub fn from_json(json: &CircuitJson) -> Result<Circuit> {
        let mut c = Circuit { wires: json.wires.clone(), elements: vec![] };
        for (idx, el) in json.elements.iter().enumerate() {
            let el = element_from_json(el, &c.wires)
                .map_err(|e| Error::Config(format!("element {idx}: {e}")))?;
            c.push(el).map_err(|e| Error::Config(e.to_string()))?;
        }
        Ok(c)
    }
}

fn check_element(el: &Element, dim: usize, registers: &BTreeMap<&str, usize>) -> Result<()> {
    match el {
        Element::Gate { label, unitary, .. } => {
            if unitary.shape() != (dim, dim) {
                return Err(Error::Circuit(format!(
                    "gate {label:?} is {:?} but its wires span dimension {dim}",
                    unitary.shape()
                )));
            }
            check_unitary(unitary, 1e-10)
        }
        Element::Channel { channel, .. } | Element::Noise { channel, .. } => {
            if channel.dim_in() != dim || channel.dim_out() != dim {
                return Err(Error::Circuit(format!(
                    "channel {}->{} placed on wires of dimension {dim}",
                    channel.dim_in(),
                    channel.dim_out()
                )));
            }
            Ok(())
        }
        Element::Measure { projectors, .. } => check_projectors(projectors, dim),
        Element::Conditional { register, value, inner } => {
            let outcomes = registers.get(register.as_str()).ok_or_else(|| {
                Error::Circuit(format!("condition on unmeasured register {register:?}"))
            })?;
            if value >= outcomes {
                return Err(Error::Circuit(format!(
                    "register {register:?} has {outcomes} outcomes, condition value {value}"
                )));
            }
            match inner.as_ref() {
                Element::Gate { .. } | Element::Channel { .. } | Element::Noise { .. } => {
                    check_element(inner, dim, registers)
                }
                _ => Err(Error::Circuit("conditional body must be a gate or channel".into())),
            }
        }
        Element::Reset { .. } | Element::TraceOut { .. } => Ok(()),
    }
}

fn check_projectors(projectors: &[CMatrix], dim: usize) -> Result<()> {
    if projectors.is_empty() {
        return Err(Error::InvalidProjectors("empty projector list".into()));
    }
    let mut sum = CMatrix::zeros(dim, dim);
    for p in projectors {
        if p.shape() != (dim, dim) {
            return Err(Error::InvalidProjectors(format!(
                "projector of shape {:?} on a wire of dimension {dim}",
                p.shape()
            )));
        }
        let idem = linalg::max_abs_diff(&(p * p), p).max(linalg::hermitian_residual(p));
        if idem > 1e-10 {
            return Err(Error::InvalidProjectors(format!("projector residual {idem:.3e}")));
        }
        sum += p;
    }
    let res = linalg::max_abs_diff(&sum, &identity(dim));
    if res > 1e-10 {
        return Err(Error::InvalidProjectors(format!("projectors sum to identity within {res:.3e}")));
    }
    Ok(())
}

pub fn basis_projectors(dim: usize) -> Vec<CMatrix> {
    (0..dim)
        .map(|k| {
            let mut p = CMatrix::zeros(dim, dim);
            p[(k, k)] = ONE;
            p
        })
        .collect()
}

/// Classical record of one branch.
pub type Record = BTreeMap<String, usize>;

#[derive(Debug, Clone)]
struct Branch {
    record: Record,
    rho: CMatrix,
}

/// Engine state: the live wires in tensor order and the branch ensemble.
struct Engine<'c> {
    circuit: &'c Circuit,
    order: Vec<usize>,
    dims: Vec<usize>,
    branches: Vec<Branch>,
}

impl<'c> Engine<'c> {
    fn new(circuit: &'c Circuit, rho: CMatrix) -> Self {
        let order = circuit.data_wires();
        let dims = order.iter().map(|&w| circuit.wires[w].dim).collect();
        Self { circuit, order, dims, branches: vec![Branch { record: Record::new(), rho }] }
    }

    fn total_dim(&self) -> usize {
        self.dims.iter().product()
    }

    fn append_fresh(&mut self, wire: usize) -> Result<()> {
        let d = self.circuit.wires[wire].dim;
        if self.total_dim() * d > MAX_DIM {
            return Err(Error::Circuit(format!(
                "live dimension would exceed the engine cap of {MAX_DIM}"
            )));
        }
        let mut ket0 = CMatrix::zeros(d, d);
        ket0[(0, 0)] = ONE;
        for b in &mut self.branches {
            b.rho = linalg::kron(&b.rho, &ket0);
        }
        self.order.push(wire);
        self.dims.push(d);
        Ok(())
    }

    fn positions(&mut self, wires: &[usize]) -> Result<Vec<usize>> {
        for &w in wires {
            if !self.order.contains(&w) {
                self.append_fresh(w)?;
            }
        }
        Ok(wires.iter().map(|w| self.order.iter().position(|o| o == w).unwrap()).collect())
    }

    fn remove(&mut self, wire: usize) {
        if let Some(pos) = self.order.iter().position(|&o| o == wire) {
            let keep: Vec<usize> = (0..self.order.len()).filter(|&p| p != pos).collect();
            for b in &mut self.branches {
                b.rho = linalg::partial_trace(&b.rho, &self.dims, &keep);
            }
            self.order.remove(pos);
            self.dims.remove(pos);
        }
    }

    fn apply_op(&self, el: &Element, rho: &CMatrix, pos: &[usize]) -> CMatrix {
        match el {
            Element::Gate { unitary, .. } => {
                let left = local_mul_left(unitary, rho, &self.dims, pos);
                local_mul_right_adjoint(unitary, &left, &self.dims, pos)
            }
            Element::Channel { channel, .. } | Element::Noise { channel, .. } => {
                let mut out = CMatrix::zeros(rho.nrows(), rho.ncols());
                for k in channel.kraus().operators() {
                    let left = local_mul_left(k, rho, &self.dims, pos);
                    out += local_mul_right_adjoint(k, &left, &self.dims, pos);
                }
                out
            }
            _ => unreachable!("only gates and channels act locally"),
        }
    }

    fn step(&mut self, el: &Element) -> Result<()> {
        match el {
            Element::Gate { wires, .. }
            | Element::Channel { wires, .. }
            | Element::Noise { wires, .. } => {
                let pos = self.positions(wires)?;
                let updated: Vec<CMatrix> =
                    self.branches.iter().map(|b| self.apply_op(el, &b.rho, &pos)).collect();
                for (b, rho) in self.branches.iter_mut().zip(updated) {
                    b.rho = rho;
                }
            }
            Element::Conditional { register, value, inner } => {
                let pos = self.positions(&inner.wires())?;
                let updated: Vec<Option<CMatrix>> = self
                    .branches
                    .iter()
                    .map(|b| {
                        (b.record.get(register) == Some(value))
                            .then(|| self.apply_op(inner, &b.rho, &pos))
                    })
                    .collect();
                for (b, rho) in self.branches.iter_mut().zip(updated) {
                    if let Some(rho) = rho {
                        b.rho = rho;
                    }
                }
            }
            Element::Measure { wire, register, projectors } => {
                let pos = self.positions(&[*wire])?;
                let mut merged: BTreeMap<Record, CMatrix> = BTreeMap::new();
                for b in &self.branches {
                    for (k, p) in projectors.iter().enumerate() {
                        let left = local_mul_left(p, &b.rho, &self.dims, &pos);
                        let rho = local_mul_right_adjoint(p, &left, &self.dims, &pos);
                        let mut record = b.record.clone();
                        record.insert(register.clone(), k);
                        merged
                            .entry(record)
                            .and_modify(|acc| *acc += &rho)
                            .or_insert(rho);
                    }
                }
                self.branches =
                    merged.into_iter().map(|(record, rho)| Branch { record, rho }).collect();
            }
            Element::Reset { wire } => {
                self.remove(*wire);
                self.append_fresh(*wire)?;
            }
            Element::TraceOut { wire } => {
                // Tracing a wire that was never touched discards a fresh |0>.
                self.remove(*wire);
            }
        }
        Ok(())
    }

    fn run(circuit: &'c Circuit, rho: CMatrix) -> Result<Self> {
        let mut engine = Engine::new(circuit, rho);
        for el in &circuit.elements {
            engine.step(el)?;
        }
        Ok(engine)
    }

    /// Live ancillas at the end of the run.
    fn live_ancillas(&self) -> Vec<usize> {
        self.order.iter().copied().filter(|&w| self.circuit.wires[w].ancilla).collect()
    }

    /// Branch-summed state on the live data wires in ascending wire order,
    /// after discarding any live ancillas.
    fn output(&self) -> (CMatrix, Vec<usize>) {
        let mut keep: Vec<(usize, usize)> = self
            .order
            .iter()
            .enumerate()
            .filter(|(_, &w)| !self.circuit.wires[w].ancilla)
            .map(|(p, &w)| (w, p))
            .collect();
        keep.sort_unstable();
        let positions: Vec<usize> = keep.iter().map(|&(_, p)| p).collect();
        let wires = keep.iter().map(|&(w, _)| w).collect();
        let total = self.sum();
        (linalg::partial_trace(&total, &self.dims, &positions), wires)
    }

    fn sum(&self) -> CMatrix {
        let n = self.total_dim();
        self.branches.iter().fold(CMatrix::zeros(n, n), |acc, b| acc + &b.rho)
    }

    fn branch_traces(&self) -> Vec<(Record, f64)> {
        self.branches.iter().map(|b| (b.record.clone(), linalg::trace(&b.rho).re)).collect()
    }
}

/// Runs the circuit on a state of the data wires and returns the state of the
/// data wires that are still live at the end.
pub fn simulate(c: &Circuit, rho_in: &DensityMatrix) -> Result<DensityMatrix> {
    if rho_in.dim() != c.data_dim() {
        return Err(Error::DimensionMismatch(format!(
            "input state of dimension {} for data wires of dimension {}",
            rho_in.dim(),
            c.data_dim()
        )));
    }
    c.check()?;
    let engine = Engine::run(c, rho_in.matrix().clone())?;
    Ok(DensityMatrix::from_trusted(engine.output().0))
}

/// Effective channel on the data wires plus per-record branch probabilities
/// for the maximally mixed input.
#[derive(Debug, Clone)]
pub struct ProcessResult {
    pub channel: Channel,
    pub branch_log: Vec<(Record, f64)>,
}

/// Builds the Choi state by linearity from the images of `|i><j|`.
pub fn extract_channel(c: &Circuit) -> Result<ProcessResult> {
    c.check()?;
    let d_in = c.data_dim();
    let mut images: BTreeMap<(usize, usize), CMatrix> = BTreeMap::new();
    let mut log: BTreeMap<Record, f64> = BTreeMap::new();
    let mut d_out = 0;
    for i in 0..d_in {
        for j in i..d_in {
            let mut e = CMatrix::zeros(d_in, d_in);
            e[(i, j)] = ONE;
            let engine = Engine::run(c, e)?;
            if let Some(&w) = engine.live_ancillas().first() {
                return Err(Error::Circuit(format!(
                    "ancilla {:?} is still live at the end; trace it out before extracting",
                    c.wires[w].label
                )));
            }
            if i == j {
                for (record, tr) in engine.branch_traces() {
                    *log.entry(record).or_insert(0.0) += tr / d_in as f64;
                }
            }
            let (out, _) = engine.output();
            d_out = out.nrows();
            images.insert((i, j), out);
        }
    }
    let mut choi = CMatrix::zeros(d_out * d_in, d_out * d_in);
    let scale = r(1.0 / d_in as f64);
    for i in 0..d_in {
        for j in 0..d_in {
            let img = if i <= j { images[&(i, j)].clone() } else { images[&(j, i)].adjoint() };
            for a in 0..d_out {
                for b in 0..d_out {
                    choi[(a * d_in + i, b * d_in + j)] = img[(a, b)] * scale;
                }
            }
        }
    }
    let channel = Channel::from_choi_trusted(choi, d_in, d_out);
    let rep = channel.validate();
    if !rep.passed {
        return Err(Error::InvalidChannel {
            min_eigenvalue: rep.min_eigenvalue,
            tp_residual: rep.tp_residual,
        });
    }
    let branch_log = log.into_iter().collect();
    Ok(ProcessResult { channel, branch_log })
}

/// Fig. 7a: apply `X` with probability `1 - p` as a single stochastic gate.
pub fn build_bitflip_circuit_a(p: f64) -> Result<Circuit> {
    let stochastic_x = crate::channel::mix(
        &[Channel::identity(2), Channel::unitary(&gates::x())?],
        &[p, 1.0 - p],
    )?;
    let mut c = Circuit::new();
    let q = c.add_data("q0", 2);
    c.channel("stochastic_x", stochastic_x, &[q])?;
    Ok(c)
}

/// Angle with `sin²(θ/2) = s`.
pub fn angle_for(s: f64) -> f64 {
    2.0 * s.clamp(0.0, 1.0).sqrt().asin()
}

/// Fig. 7b: `R_y(θ)` on an ancilla with `sin²(θ/2) = 1 - p`, CNOT onto the
/// data qubit, ancilla discarded.
pub fn build_bitflip_circuit_b(p: f64) -> Result<Circuit> {
    crate::error::check_probability("p", p)?;
    let mut c = Circuit::new();
    let q = c.add_data("q0", 2);
    let a = c.add_ancilla("a0", 2);
    c.ry(angle_for(1.0 - p), a)?.cnot(a, q)?.trace_out(a)?;
    Ok(c)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AdVariant {
    /// Controlled-`R_y`, CNOT back onto the data qubit.
    UnitaryCnot,
    /// Controlled-`R_y`, measure the ancilla, conditioned `X` on the data.
    MeasureFeedback,
}

/// Amplitude damping with `γ = sin²(θ/2)`.
pub fn build_ad_circuit(theta: f64, variant: AdVariant) -> Result<Circuit> {
    let mut c = Circuit::new();
    let q = c.add_data("q0", 2);
    let a = c.add_ancilla("a0", 2);
    c.cry(theta, q, a)?;
    match variant {
        AdVariant::UnitaryCnot => {
            c.cnot(a, q)?;
        }
        AdVariant::MeasureFeedback => {
            c.measure(a, "m")?.conditional(
                "m",
                1,
                Element::Gate { label: "x".into(), unitary: gates::x(), wires: vec![q] },
            )?;
        }
    }
    c.trace_out(a)?;
    Ok(c)
}

/// Serialized circuit: `{"wires": [...], "elements": [...]}`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CircuitJson {
    pub wires: Vec<Wire>,
    pub elements: Vec<ElementJson>,
}

/// A channel given either by name and parameters or by its Choi matrix.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ChannelRef {
    Choi(ChannelJson),
    Named(ChannelSpec),
}

impl ChannelRef {
    pub fn resolve(&self) -> Result<Channel> {
        match self {
            ChannelRef::Choi(j) => j.to_channel(),
            ChannelRef::Named(s) => s.build(),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum ElementJson {
    Gate {
        name: String,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        theta: Option<f64>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        phi: Option<f64>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        lambda: Option<f64>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        matrix: Option<MatrixJson>,
        wires: Vec<usize>,
    },
    Cnot { wires: Vec<usize> },
    Cry { theta: f64, wires: Vec<usize> },
    Channel {
        #[serde(default = "default_channel_label")]
        label: String,
        channel: ChannelRef,
        wires: Vec<usize>,
    },
    Noise { channel: ChannelRef, wires: Vec<usize> },
    Measure { wire: usize, register: String },
    Conditional { register: String, value: usize, body: Box<ElementJson> },
    Reset { wire: usize },
    TraceOut { wire: usize },
}

fn default_channel_label() -> String {
    "channel".into()
}

fn named_gate(name: &str, theta: Option<f64>, phi: Option<f64>, lambda: Option<f64>, dim: usize) -> Result<CMatrix> {
    let need = |v: Option<f64>, what: &str| {
        v.ok_or_else(|| Error::Config(format!("gate {name:?} needs parameter {what:?}")))
    };
    Ok(match name {
        "ry" => gates::ry(need(theta, "theta")?),
        "rx" => gates::rx(need(theta, "theta")?),
        "rz" => gates::rz(need(theta, "theta")?),
        "u3" => gates::u3(need(theta, "theta")?, need(phi, "phi")?, need(lambda, "lambda")?),
        "x" => gates::x(),
        "y" => gates::y(),
        "z" => gates::z(),
        "h" => gates::h(),
        "cnot" | "cx" => gates::cnot(),
        "cry" => gates::cry(need(theta, "theta")?),
        "swap" => gates::swap(),
        "shift" => gates::shift(dim),
        other => return Err(Error::Config(format!("unknown gate {other:?}"))),
    })
}

fn element_from_json(el: &ElementJson, wires: &[Wire]) -> Result<Element> {
    let dim_of = |ws: &[usize]| -> usize {
        ws.iter().map(|&w| wires.get(w).map_or(0, |x| x.dim)).product()
    };
    Ok(match el {
        ElementJson::Gate { name, theta, phi, lambda, matrix, wires } => {
            let unitary = match matrix {
                Some(m) => m.to_matrix()?,
                None => named_gate(name, *theta, *phi, *lambda, dim_of(wires))?,
            };
            Element::Gate { label: name.clone(), unitary, wires: wires.clone() }
        }
        ElementJson::Cnot { wires } => {
            Element::Gate { label: "cnot".into(), unitary: gates::cnot(), wires: wires.clone() }
        }
        ElementJson::Cry { theta, wires } => {
            Element::Gate { label: "cry".into(), unitary: gates::cry(*theta), wires: wires.clone() }
        }
        ElementJson::Channel { label, channel, wires } => Element::Channel {
            label: label.clone(),
            channel: channel.resolve()?,
            wires: wires.clone(),
        },
        ElementJson::Noise { channel, wires } => {
            Element::Noise { channel: channel.resolve()?, wires: wires.clone() }
        }
        ElementJson::Measure { wire, register } => Element::Measure {
            wire: *wire,
            register: register.clone(),
            projectors: basis_projectors(wires.get(*wire).map_or(0, |w| w.dim)),
        },
        ElementJson::Conditional { register, value, body } => Element::Conditional {
            register: register.clone(),
            value: *value,
            inner: Box::new(element_from_json(body, wires)?),
        },
        ElementJson::Reset { wire } => Element::Reset { wire: *wire },
        ElementJson::TraceOut { wire } => Element::TraceOut { wire: *wire },
    })
}

fn element_to_json(el: &Element) -> ElementJson {
    match el {
        Element::Gate { label, unitary, wires } => ElementJson::Gate {
            name: label.clone(),
            theta: None,
            phi: None,
            lambda: None,
            matrix: Some(MatrixJson::from_matrix(unitary)),
            wires: wires.clone(),
        },
        Element::Channel { label, channel, wires } => ElementJson::Channel {
            label: label.clone(),
            channel: ChannelRef::Choi(channel.to_json()),
            wires: wires.clone(),
        },
        Element::Noise { channel, wires } => {
            ElementJson::Noise { channel: ChannelRef::Choi(channel.to_json()), wires: wires.clone() }
        }
        Element::Measure { wire, register, .. } => {
            ElementJson::Measure { wire: *wire, register: register.clone() }
        }
        Element::Conditional { register, value, inner } => ElementJson::Conditional {
            register: register.clone(),
            value: *value,
            body: Box::new(element_to_json(inner)),
        },
        Element::Reset { wire } => ElementJson::Reset { wire: *wire },
        Element::TraceOut { wire } => ElementJson::TraceOut { wire: *wire },
    }
}
