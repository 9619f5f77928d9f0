//! Seeded invariant checks shared by the property tests and the acceptance
//! run. Each returns `Err` with a description on the first violation.
#![allow(dead_code)]

use channel_forge::channel::{
    apply, choi_fidelity, choi_to_kraus, compose, kraus_to_choi, mix, superop_choi_reshuffle,
    validate_cptp, Channel, DensityMatrix, KrausSet,
};
use channel_forge::circuit::{build_ad_circuit, extract_channel, gates, simulate, AdVariant};
use channel_forge::dilation::choi_of_map;
use channel_forge::linalg::{self, max_abs_diff, r, trace, CMatrix};
use channel_forge::netsim::{run_scenario, NetworkScenario};
use channel_forge::noise::{
    amplitude_damping, apply_noise_model, bit_flip, dephasing, depolarizing, pauli_diagonal,
    rotation_noise_b, white_noise, NoiseModel, PauliDiagonalSpec,
};
use channel_forge::random::{haar_unitary, random_density, random_distribution, random_kraus};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub type Check = Result<(), String>;

fn ensure(ok: bool, msg: impl FnOnce() -> String) -> Check {
    if ok {
        Ok(())
    } else {
        Err(msg())
    }
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn random_channel(rng: &mut ChaCha8Rng, d: usize) -> Channel {
    let rank = rng.gen_range(1..=d * d);
    Channel::from_kraus(&random_kraus(rng, d, rank))
}

fn vec_apply(ch: &Channel, rho: &CMatrix) -> CMatrix {
    let v = linalg::vectorize(rho);
    linalg::unvectorize(&(ch.superop_matrix() * v), ch.dim_out(), ch.dim_out())
}

/// Kraus/Choi/superop round trips, composition, apply, fidelity and mixing.
pub fn channel_core(seed: u64) -> Check {
    let mut g = rng(seed);
    let d = g.gen_range(2..=3);
    let a = random_channel(&mut g, d);
    let b = random_channel(&mut g, d);

    let once = kraus_to_choi(&choi_to_kraus(&a));
    let twice = kraus_to_choi(&choi_to_kraus(&once));
    let err = max_abs_diff(once.choi(), twice.choi()).max(max_abs_diff(once.choi(), a.choi()));
    ensure(err < 1e-10, || format!("kraus/choi round trip residual {err:.2e}"))?;

    let s = a.superop_matrix().clone();
    let back = superop_choi_reshuffle(&superop_choi_reshuffle(&s).unwrap()).unwrap();
    ensure(back == s, || "reshuffle is not an involution".into())?;

    // Composition against the Kraus product set {B_j A_i}.
    let ops: Vec<CMatrix> = b
        .kraus()
        .operators()
        .iter()
        .flat_map(|kb| a.kraus().operators().iter().map(move |ka| kb * ka))
        .collect();
    let product = Channel::from_kraus(&KrausSet::new(ops).unwrap());
    let composed = compose(&b, &a).unwrap();
    let err = max_abs_diff(composed.choi(), product.choi());
    ensure(err < 1e-10, || format!("composition homomorphism residual {err:.2e}"))?;

    // Choi against its definition on |i><j|.
    let direct = choi_of_map(d, d, |m| a.kraus().act(m));
    let err = max_abs_diff(&direct, a.choi());
    ensure(err < 1e-10, || format!("choi definition residual {err:.2e}"))?;

    let rho = random_density(&mut g, d);
    let out = apply(&a, &DensityMatrix::new(rho.clone()).unwrap()).unwrap();
    let err = max_abs_diff(out.matrix(), &vec_apply(&a, &rho));
    ensure(err < 1e-10, || format!("apply consistency residual {err:.2e}"))?;

    let (fab, fba) = (choi_fidelity(&a, &b).unwrap(), choi_fidelity(&b, &a).unwrap());
    ensure((fab - fba).abs() < 1e-10, || format!("fidelity asymmetry {:.2e}", (fab - fba).abs()))?;

    let mut last = -1.0;
    for k in 0..=10 {
        let lam = k as f64 / 10.0;
        let f = choi_fidelity(&mix(&[a.clone(), b.clone()], &[lam, 1.0 - lam]).unwrap(), &a).unwrap();
        ensure(f >= last - 1e-10, || format!("fidelity decreased while mixing toward target at λ={lam}"))?;
        last = f;
    }

    let p = random_distribution(&mut g, 2);
    let m = mix(&[a.clone(), b.clone()], &p).unwrap();
    let lin = a.choi() * r(p[0]) + b.choi() * r(p[1]);
    let err = max_abs_diff(m.choi(), &lin);
    ensure(err < 1e-14, || format!("mix linearity residual {err:.2e}"))?;

    let u = Channel::unitary(&haar_unitary(&mut g, d)).unwrap();
    let purity = trace(&(u.choi() * u.choi())).re;
    ensure((purity - 1.0).abs() < 1e-10, || format!("unitary Choi purity {purity}"))
}

/// Random channels pass the CPTP check; an injected negative eigenvalue fails
/// and is reported.
pub fn cptp_validation(seed: u64) -> Check {
    let mut g = rng(seed);
    let d = g.gen_range(2..=4);
    let ch = random_channel(&mut g, d);
    let rep = validate_cptp(&ch);
    ensure(rep.passed, || format!("random channel failed validation: {rep:?}"))?;

    let dep = white_noise(0.5).unwrap();
    let mut bad = dep.choi().clone();
    // Smallest Choi eigenvalue pushed to -1e-3.
    let eig = linalg::eigh(&bad);
    let k = (0..eig.values.len()).min_by(|&i, &j| eig.values[i].total_cmp(&eig.values[j])).unwrap();
    let v = eig.vectors.column(k).into_owned();
    let lam = eig.values[k];
    bad += &v * v.adjoint() * r(-1e-3 - lam);
    let bad = Channel::from_choi_unchecked(bad, 2, 2).unwrap();
    let rep = validate_cptp(&bad);
    ensure(!rep.passed && (rep.min_eigenvalue + 1e-3).abs() < 1e-9, || {
        format!("injected violation not reported: {rep:?}")
    })
}

/// Factory outputs are CPTP, unital where expected, and depolarizing commutes
/// with unitaries; Pauli-diagonal channels are closed under composition.
pub fn noise_models(seed: u64) -> Check {
    let mut g = rng(seed);
    let q: f64 = g.gen_range(0.0..1.0);
    let mixed = DensityMatrix::maximally_mixed(2);
    for (name, ch) in [
        ("dephasing", dephasing(q).unwrap()),
        ("depolarizing", depolarizing(q).unwrap()),
        ("white_noise", white_noise(q).unwrap()),
        ("bit_flip", bit_flip(q).unwrap()),
    ] {
        ensure(ch.validate().passed, || format!("{name}({q}) not CPTP"))?;
        let err = max_abs_diff(apply(&ch, &mixed).unwrap().matrix(), mixed.matrix());
        ensure(err < 1e-12, || format!("{name}({q}) not unital: {err:.2e}"))?;
    }
    for ch in [rotation_noise_b(q).unwrap(), amplitude_damping(q).unwrap()] {
        ensure(ch.validate().passed, || format!("factory output at {q} not CPTP"))?;
    }
    let gamma = q.max(1e-3);
    let err = max_abs_diff(apply(&amplitude_damping(gamma).unwrap(), &mixed).unwrap().matrix(), mixed.matrix());
    ensure(err > 0.0, || format!("amplitude damping {gamma} reported unital"))?;

    let dep = depolarizing(q).unwrap();
    let u = Channel::unitary(&haar_unitary(&mut g, 2)).unwrap();
    let f = choi_fidelity(&compose(&u, &dep).unwrap(), &compose(&dep, &u).unwrap()).unwrap();
    ensure((f - 1.0).abs() < 1e-10, || format!("depolarizing does not commute with a unitary: F={f}"))?;

    let a = pauli_diagonal(&PauliDiagonalSpec::new(random_distribution(&mut g, 4)).unwrap());
    let b = pauli_diagonal(&PauliDiagonalSpec::new(random_distribution(&mut g, 4)).unwrap());
    let closed = PauliDiagonalSpec::from_channel(&compose(&a, &b).unwrap(), 1e-12).is_some()
        && PauliDiagonalSpec::from_channel(&mix(&[a, b], &[0.3, 0.7]).unwrap(), 1e-12).is_some();
    ensure(closed, || "Pauli-diagonal channels not closed under composition/mixing".into())
}

/// Deferred measurement equivalence of the two AD circuits, and trace/PSD
/// preservation of noisy simulation.
pub fn circuits(seed: u64) -> Check {
    let mut g = rng(seed);
    let theta = g.gen_range(0.0..std::f64::consts::PI);
    let unitary = extract_channel(&build_ad_circuit(theta, AdVariant::UnitaryCnot).unwrap()).unwrap();
    let measured = extract_channel(&build_ad_circuit(theta, AdVariant::MeasureFeedback).unwrap()).unwrap();
    let err = max_abs_diff(unitary.channel.choi(), measured.channel.choi());
    ensure(err < 1e-10, || format!("deferred measurement residual {err:.2e} at θ={theta}"))?;
    let total: f64 = measured.branch_log.iter().map(|(_, p)| p).sum();
    ensure((total - 1.0).abs() < 1e-10, || format!("branch probabilities sum to {total}"))?;

    let q: f64 = g.gen_range(0.5..1.0);
    for hw in [NoiseModel::gate(white_noise(q).unwrap()), NoiseModel::block(dephasing(q).unwrap())] {
        for variant in [AdVariant::UnitaryCnot, AdVariant::MeasureFeedback] {
            let c = apply_noise_model(&build_ad_circuit(theta, variant).unwrap(), &hw).unwrap();
            let rho = DensityMatrix::new(random_density(&mut g, 2)).unwrap();
            let out = simulate(&c, &rho).unwrap();
            let tr = trace(out.matrix()).re;
            let min = linalg::eigh(out.matrix()).values.iter().cloned().fold(f64::INFINITY, f64::min);
            ensure((tr - 1.0).abs() < 1e-10 && min > -1e-10, || {
                format!("simulation left trace {tr} / eigenvalue {min}")
            })?;
        }
    }
    let u = gates::cry(theta);
    ensure(linalg::unitarity_residual(&u) < 1e-12, || "controlled-Ry not unitary".into())
}

fn teleport_scenario(seed: u64) -> NetworkScenario {
    let mut g = rng(seed);
    let q: f64 = g.gen_range(0.0..1.0);
    let gamma: f64 = g.gen_range(0.0..1.0);
    let psi = random_density(&mut g, 2);
    let re: Vec<Vec<f64>> = (0..2).map(|i| (0..2).map(|j| psi[(i, j)].re).collect()).collect();
    let im: Vec<Vec<f64>> = (0..2).map(|i| (0..2).map(|j| psi[(i, j)].im).collect()).collect();
    let json = serde_json::json!({
        "nodes": {"alice": ["s", "a"], "bob": ["b"]},
        "events": [
            {"type": "add_registers", "registers": ["s"], "state": {"re": re, "im": im}},
            {"type": "add_registers", "registers": ["a", "b"], "state": "bell"},
            {"type": "apply_channel", "role": "link", "channel": {"name": "depolarizing", "q": q}, "registers": ["b"]},
            {"type": "apply_channel", "role": "memory", "channel": {"name": "amplitude_damping", "gamma": gamma}, "registers": ["a"]},
            {"type": "apply_gate", "gate": "cnot", "registers": ["s", "a"]},
            {"type": "apply_gate", "gate": "h", "registers": ["s"]},
            {"type": "measure", "register": "s", "message": "m1"},
            {"type": "measure", "register": "a", "message": "m2"},
            {"type": "conditional", "message": "m2", "value": 1,
             "event": {"type": "apply_gate", "gate": "x", "registers": ["b"]}},
            {"type": "conditional", "message": "m1", "value": 1,
             "event": {"type": "apply_gate", "gate": "z", "registers": ["b"]}},
            {"type": "remove_registers", "registers": ["s", "a"]}
        ],
        "report": [
            {"type": "state", "name": "out", "registers": ["b"]},
            {"type": "message", "name": "m1", "message": "m1"}
        ]
    });
    serde_json::from_value(json).unwrap()
}

/// Trace preservation and bit-identical reruns of a noisy teleportation.
pub fn netsim(seed: u64) -> Check {
    let s = teleport_scenario(seed);
    let first = run_scenario(&s).map_err(|e| e.to_string())?;
    let second = run_scenario(&s).map_err(|e| e.to_string())?;
    let tr = first.state.total_trace();
    ensure((tr - 1.0).abs() < 1e-10, || format!("scenario trace drifted to {tr}"))?;
    let (a, b) = (serde_json::to_string(&first.report).unwrap(), serde_json::to_string(&second.report).unwrap());
    ensure(a == b, || "reruns produced different reports".into())
}

/// Both dilations of a random channel reproduce it; their unitaries are
/// unitary and the qudit routine's branch probabilities sum to one.
pub fn dilation(seed: u64) -> Check {
    use channel_forge::dilation::{extended_qudit_routine, stinespring_dilate};
    let mut g = rng(seed);
    let d = g.gen_range(2..=4);
    let rank = g.gen_range(1..=d * d);
    let ks = random_kraus(&mut g, d, rank);
    let ch = Channel::from_kraus(&ks);

    let dil = stinespring_dilate(&ks).map_err(|e| e.to_string())?;
    let err = max_abs_diff(&choi_of_map(d, d, |m| dil.act(m)), ch.choi());
    ensure(err < 1e-9, || format!("ancilla dilation residual {err:.2e} (d={d}, r={rank})"))?;
    let u = linalg::unitarity_residual(&dil.unitary);
    ensure(u < 1e-10, || format!("ancilla unitary residual {u:.2e}"))?;

    let routine = extended_qudit_routine(&ks).map_err(|e| e.to_string())?;
    let err = max_abs_diff(&choi_of_map(d, d, |m| routine.act(m)), ch.choi());
    ensure(err < 1e-9, || format!("qudit routine residual {err:.2e} (d={d}, r={rank})"))?;
    let u = linalg::unitarity_residual(&routine.unitary);
    ensure(u < 1e-10, || format!("qudit unitary residual {u:.2e}"))?;
    ensure(routine.total_dim <= rank * d, || format!("D={} exceeds r·d={}", routine.total_dim, rank * d))?;

    let rho = random_density(&mut g, d);
    let total: f64 = routine.branches(&rho).iter().map(|b| trace(b).re).sum();
    ensure((total - 1.0).abs() < 1e-10, || format!("branch probabilities sum to {total}"))
}
