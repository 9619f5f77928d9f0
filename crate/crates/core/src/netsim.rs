//! Event-driven network runs on a global density matrix.
//!
//! Nodes own named registers; events apply channels, gates, measurements
//! with classical messages, and conditional operations. Time is logical:
//! waiting appears only as memory channels supplied by the scenario.

use std::collections::BTreeMap;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::channel::{Channel, DensityMatrix};
use crate::circuit::{gates, ChannelRef, MAX_DIM};
use crate::error::{Error, Result};
use crate::linalg::{
    kron, local_mul_left, local_mul_right_adjoint, partial_trace, r, trace, uhlmann_fidelity, CMatrix,
};
use crate::serde_util::MatrixJson;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct NetworkScenario {
    /// Node name to the registers it holds.
    #[serde(default)]
    pub nodes: BTreeMap<String, Vec<String>>,
    #[serde(default)]
    pub events: Vec<Event>,
    #[serde(default)]
    pub report: Vec<ReportTarget>,
}

/// Initial state of newly added registers.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(untagged)]
pub enum InitialState {
    /// `"zero"`, `"plus"`, `"mixed"` (per register) or `"bell"` (two qubits).
    Named(String),
    Matrix(MatrixJson),
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(untagged)]
pub enum GateRef {
    /// `h`, `x`, `y`, `z`, `s`, `cnot`, `cz`, `swap`.
    Named(String),
    Matrix(MatrixJson),
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Event {
    AddRegisters {
        registers: Vec<String>,
        #[serde(default = "default_dims")]
        dims: Vec<usize>,
        #[serde(default)]
        state: Option<InitialState>,
    },
    RemoveRegisters {
        registers: Vec<String>,
    },
    /// A CPM on the listed registers; `role` tags it as a link, memory wait
    /// or local operation for bookkeeping only.
    ApplyChannel {
        channel: ChannelRef,
        registers: Vec<String>,
        #[serde(default)]
        role: Option<String>,
    },
    ApplyGate {
        gate: GateRef,
        registers: Vec<String>,
    },
    /// Computational-basis measurement whose outcome is sent as `message`.
    Measure {
        register: String,
        message: String,
    },
    Conditional {
        message: String,
        value: usize,
        event: Box<Event>,
    },
}

fn default_dims() -> Vec<usize> {
    vec![]
}

impl Event {
    fn kind(&self) -> &'static str {
        match self {
            Event::AddRegisters { .. } => "add_registers",
            Event::RemoveRegisters { .. } => "remove_registers",
            Event::ApplyChannel { .. } => "apply_channel",
            Event::ApplyGate { .. } => "apply_gate",
            Event::Measure { .. } => "measure",
            Event::Conditional { .. } => "conditional",
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum ReportTarget {
    /// Fidelity of the reduced state on `registers` with `target`.
    Fidelity {
        name: String,
        registers: Vec<String>,
        target: InitialState,
    },
    /// Reduced state on `registers`.
    State {
        name: String,
        registers: Vec<String>,
    },
    /// Outcome distribution of a classical message.
    Message {
        name: String,
        message: String,
    },
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Report {
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub fidelities: BTreeMap<String, f64>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub states: BTreeMap<String, MatrixJson>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub messages: BTreeMap<String, Vec<f64>>,
}

impl Report {
    pub fn is_empty(&self) -> bool {
        self.fidelities.is_empty() && self.states.is_empty() && self.messages.is_empty()
    }
}

#[derive(Debug, Clone)]
struct Register {
    name: String,
    dim: usize,
}

/// Global state: one unnormalized density matrix per classical record.
#[derive(Debug, Clone)]
pub struct NetworkState {
    registers: Vec<Register>,
    branches: BTreeMap<BTreeMap<String, usize>, CMatrix>,
    message_dims: BTreeMap<String, usize>,
}

impl Default for NetworkState {
    fn default() -> Self {
        let mut branches = BTreeMap::new();
        branches.insert(BTreeMap::new(), CMatrix::from_element(1, 1, r(1.0)));
        Self { registers: vec![], branches, message_dims: BTreeMap::new() }
    }
}

impl NetworkState {
    pub fn registers(&self) -> Vec<&str> {
        self.registers.iter().map(|r| r.name.as_str()).collect()
    }

    fn dims(&self) -> Vec<usize> {
        self.registers.iter().map(|r| r.dim).collect()
    }

    pub fn dim(&self) -> usize {
        self.registers.iter().map(|r| r.dim).product()
    }

    pub fn branch_count(&self) -> usize {
        self.branches.len()
    }

    /// Sum of branch traces.
    pub fn total_trace(&self) -> f64 {
        self.branches.values().map(|m| trace(m).re).sum()
    }

    /// Branch-averaged state over all live registers.
    pub fn global_state(&self) -> CMatrix {
        let n = self.dim();
        self.branches.values().fold(CMatrix::zeros(n, n), |acc, m| acc + m)
    }

    fn positions(&self, names: &[String]) -> Result<Vec<usize>> {
        let mut out = Vec::with_capacity(names.len());
        for name in names {
            let pos = self
                .registers
                .iter()
                .position(|r| &r.name == name)
                .ok_or_else(|| Error::Scenario(format!("register {name:?} is not live")))?;
            if out.contains(&pos) {
                return Err(Error::Scenario(format!("register {name:?} listed twice")));
            }
            out.push(pos);
        }
        Ok(out)
    }

    /// Reduced, branch-averaged state on `names` in the listed order.
    pub fn reduced(&self, names: &[String]) -> Result<CMatrix> {
        let pos = self.positions(names)?;
        Ok(partial_trace(&self.global_state(), &self.dims(), &pos))
    }

    fn add(&mut self, names: &[String], dims: &[usize], state: Option<&InitialState>) -> Result<()> {
        let dims: Vec<usize> = if dims.is_empty() { vec![2; names.len()] } else { dims.to_vec() };
        if dims.len() != names.len() || dims.iter().any(|&d| d < 2) {
            return Err(Error::Scenario("each register needs a dimension of at least 2".into()));
        }
        for name in names {
            if self.registers.iter().any(|r| &r.name == name) {
                return Err(Error::Scenario(format!("register {name:?} is already live")));
            }
        }
        let added: usize = dims.iter().product();
        if self.dim().saturating_mul(added) > MAX_DIM {
            return Err(Error::Scenario(format!(
                "live dimension {} exceeds the cap of {MAX_DIM}",
                self.dim().saturating_mul(added)
            )));
        }
        let sigma = initial_state(state, &dims)?;
        for m in self.branches.values_mut() {
            *m = kron(m, &sigma);
        }
        self.registers
            .extend(names.iter().zip(&dims).map(|(n, &d)| Register { name: n.clone(), dim: d }));
        Ok(())
    }

    fn remove(&mut self, names: &[String]) -> Result<()> {
        let pos = self.positions(names)?;
        let keep: Vec<usize> = (0..self.registers.len()).filter(|p| !pos.contains(p)).collect();
        let dims = self.dims();
        for m in self.branches.values_mut() {
            *m = partial_trace(m, &dims, &keep);
        }
        let mut k = 0;
        self.registers.retain(|_| {
            k += 1;
            !pos.contains(&(k - 1))
        });
        Ok(())
    }

    fn apply_ops(&mut self, ops: &[CMatrix], names: &[String]) -> Result<()> {
        let pos = self.positions(names)?;
        let dims = self.dims();
        let local: usize = pos.iter().map(|&p| dims[p]).product();
        if ops.iter().any(|k| k.nrows() != local || k.ncols() != local) {
            return Err(Error::Scenario(format!(
                "operation of dimension {}x{} on registers of total dimension {local}",
                ops[0].nrows(),
                ops[0].ncols()
            )));
        }
        for m in self.branches.values_mut() {
            let mut acc = CMatrix::zeros(m.nrows(), m.ncols());
            for k in ops {
                let left = local_mul_left(k, m, &dims, &pos);
                acc += local_mul_right_adjoint(k, &left, &dims, &pos);
            }
            *m = acc;
        }
        Ok(())
    }

    fn apply_channel(&mut self, ch: &Channel, names: &[String]) -> Result<()> {
        if ch.dim_in() != ch.dim_out() {
            return Err(Error::Unsupported("channels that change the register dimension".into()));
        }
        self.apply_ops(ch.kraus().operators(), names)
    }

    fn measure(&mut self, name: &str, message: &str) -> Result<()> {
        if self.message_dims.contains_key(message) {
            return Err(Error::Scenario(format!("message {message:?} was already sent")));
        }
        let pos = self.positions(&[name.to_string()])?;
        let dims = self.dims();
        let d = dims[pos[0]];
        let mut next = BTreeMap::new();
        for (record, m) in std::mem::take(&mut self.branches) {
            for k in 0..d {
                let mut proj = CMatrix::zeros(d, d);
                proj[(k, k)] = r(1.0);
                let left = local_mul_left(&proj, &m, &dims, &pos);
                let out = local_mul_right_adjoint(&proj, &left, &dims, &pos);
                if trace(&out).re <= 1e-15 {
                    continue;
                }
                let mut rec = record.clone();
                rec.insert(message.to_string(), k);
                next.insert(rec, out);
            }
        }
        self.branches = next;
        self.message_dims.insert(message.to_string(), d);
        Ok(())
    }

    fn apply_event(&mut self, ev: &Event) -> Result<()> {
        match ev {
            Event::AddRegisters { registers, dims, state } => self.add(registers, dims, state.as_ref()),
            Event::RemoveRegisters { registers } => self.remove(registers),
            Event::ApplyChannel { channel, registers, .. } => self.apply_channel(&channel.resolve()?, registers),
            Event::ApplyGate { gate, registers } => self.apply_ops(&[resolve_gate(gate)?], registers),
            Event::Measure { register, message } => self.measure(register, message),
            Event::Conditional { message, value, event } => {
                let d = *self.message_dims.get(message).ok_or_else(|| {
                    Error::Scenario(format!("condition on message {message:?} that has not been sent"))
                })?;
                if *value >= d {
                    return Err(Error::Scenario(format!(
                        "message {message:?} takes values below {d}, condition asks for {value}"
                    )));
                }
                if matches!(**event, Event::Measure { .. } | Event::AddRegisters { .. } | Event::RemoveRegisters { .. }) {
                    return Err(Error::Unsupported(format!(
                        "conditional {} events change the register layout",
                        event.kind()
                    )));
                }
                let (hit, miss): (BTreeMap<_, _>, BTreeMap<_, _>) = std::mem::take(&mut self.branches)
                    .into_iter()
                    .partition(|(rec, _)| rec.get(message) == Some(value));
                self.branches = hit;
                let res = self.apply_event(event);
                self.branches.extend(miss);
                res
            }
        }
    }

    fn message_distribution(&self, message: &str) -> Result<Vec<f64>> {
        let d = *self
            .message_dims
            .get(message)
            .ok_or_else(|| Error::Scenario(format!("message {message:?} was never sent")))?;
        let mut probs = vec![0.0; d];
        for (rec, m) in &self.branches {
            if let Some(&k) = rec.get(message) {
                probs[k] += trace(m).re;
            }
        }
        Ok(probs)
    }
}

fn basis_vector(dims: &[usize], amps: &[(usize, f64)]) -> CMatrix {
    let n: usize = dims.iter().product();
    let mut v = CMatrix::zeros(n, 1);
    for &(k, a) in amps {
        v[(k, 0)] = r(a);
    }
    &v * v.adjoint()
}

fn initial_state(state: Option<&InitialState>, dims: &[usize]) -> Result<CMatrix> {
    let n: usize = dims.iter().product();
    match state {
        None => Ok(basis_vector(dims, &[(0, 1.0)])),
        Some(InitialState::Named(name)) => match name.as_str() {
            "zero" => Ok(basis_vector(dims, &[(0, 1.0)])),
            "mixed" => Ok(CMatrix::identity(n, n) / r(n as f64)),
            "plus" => {
                let per: Vec<CMatrix> = dims
                    .iter()
                    .map(|&d| CMatrix::from_element(d, d, r(1.0 / d as f64)))
                    .collect();
                Ok(crate::linalg::kron_all(&per))
            }
            "bell" if dims == [2, 2] => {
                let s = std::f64::consts::FRAC_1_SQRT_2;
                Ok(basis_vector(dims, &[(0, s), (3, s)]))
            }
            other => Err(Error::Scenario(format!("unknown state {other:?} for dimensions {dims:?}"))),
        },
        Some(InitialState::Matrix(m)) => {
            let m = m.to_matrix()?;
            if m.shape() != (n, n) {
                return Err(Error::Scenario(format!("state is {:?}, registers need {n}x{n}", m.shape())));
            }
            Ok(DensityMatrix::new(m).map_err(|e| Error::Scenario(e.to_string()))?.into_matrix())
        }
    }
}

fn resolve_gate(g: &GateRef) -> Result<CMatrix> {
    let u = match g {
        GateRef::Named(name) => match name.as_str() {
            "h" => gates::h(),
            "x" => gates::x(),
            "y" => gates::y(),
            "z" => gates::z(),
            "s" => CMatrix::from_diagonal(&nalgebra::DVector::from_vec(vec![r(1.0), Complex64::new(0.0, 1.0)])),
            "cnot" => gates::cnot(),
            "cz" => gates::controlled(&gates::z()),
            "swap" => gates::swap(),
            other => return Err(Error::Scenario(format!("unknown gate {other:?}"))),
        },
        GateRef::Matrix(m) => m.to_matrix()?,
    };
    crate::linalg::check_unitary(&u, 1e-10).map_err(|e| Error::Scenario(e.to_string()))?;
    Ok(u)
}

/// Final state and requested quantities of a scenario run.
#[derive(Debug, Clone)]
pub struct ScenarioOutcome {
    pub report: Report,
    pub state: NetworkState,
}

/// Static checks: message references point at earlier measurements.
pub fn validate_scenario(s: &NetworkScenario) -> Result<()> {
    let mut sent: Vec<&str> = Vec::new();
    fn check<'a>(ev: &'a Event, sent: &mut Vec<&'a str>, idx: usize) -> Result<()> {
        match ev {
            Event::Measure { message, .. } => {
                sent.push(message);
                Ok(())
            }
            Event::Conditional { message, event, .. } => {
                if !sent.contains(&message.as_str()) {
                    return Err(Error::Scenario(format!(
                        "event {idx} (conditional): message {message:?} is not sent by an earlier event"
                    )));
                }
                check(event, sent, idx)
            }
            _ => Ok(()),
        }
    }
    for (idx, ev) in s.events.iter().enumerate() {
        check(ev, &mut sent, idx)?;
    }
    for (node, regs) in &s.nodes {
        for (other, others) in &s.nodes {
            if node < other {
                if let Some(shared) = regs.iter().find(|r| others.contains(r)) {
                    return Err(Error::Scenario(format!(
                        "register {shared:?} belongs to both {node:?} and {other:?}"
                    )));
                }
            }
        }
    }
    Ok(())
}

/// Runs the events in order and evaluates the report targets.
pub fn run_scenario(s: &NetworkScenario) -> Result<ScenarioOutcome> {
    validate_scenario(s)?;
    let mut state = NetworkState::default();
    for (idx, ev) in s.events.iter().enumerate() {
        state.apply_event(ev).map_err(|e| match e {
            Error::Scenario(msg) => Error::Scenario(format!("event {idx} ({}): {msg}", ev.kind())),
            other => Error::Scenario(format!("event {idx} ({}): {other}", ev.kind())),
        })?;
    }
    let mut report = Report::default();
    for (idx, target) in s.report.iter().enumerate() {
        let at = |e: Error| Error::Scenario(format!("report entry {idx}: {e}"));
        match target {
            ReportTarget::Fidelity { name, registers, target } => {
                let rho = state.reduced(registers).map_err(at)?;
                let dims: Vec<usize> = state
                    .positions(registers)
                    .map_err(at)?
                    .iter()
                    .map(|&p| state.registers[p].dim)
                    .collect();
                let sigma = initial_state(Some(target), &dims).map_err(at)?;
                report.fidelities.insert(name.clone(), uhlmann_fidelity(&rho, &sigma).map_err(at)?);
            }
            ReportTarget::State { name, registers } => {
                let rho = state.reduced(registers).map_err(at)?;
                report.states.insert(name.clone(), MatrixJson::from_matrix(&rho));
            }
            ReportTarget::Message { name, message } => {
                report.messages.insert(name.clone(), state.message_distribution(message).map_err(at)?);
            }
        }
    }
    Ok(ScenarioOutcome { report, state })
}

/// Qubit budget of an `m -> 1` step on `m` copies of `n`-qubit states
/// repeated `k` times.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ResourceEstimate {
    pub n: usize,
    pub m: usize,
    pub k: usize,
    /// Registers touched in one step: `n·m`.
    pub active: usize,
    /// With output staging across rounds: `2·k·n·m`.
    pub qubits_required: usize,
}

pub fn resource_estimate(n: usize, m: usize, k: usize) -> Result<ResourceEstimate> {
    if n == 0 || m == 0 || k == 0 {
        return Err(Error::Config("n, m and k must be positive".into()));
    }
    Ok(ResourceEstimate { n, m, k, active: n * m, qubits_required: 2 * k * n * m })
}
