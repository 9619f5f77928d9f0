mod common;

use channel_forge::channel::compose;
use channel_forge::circuit::{angle_for, build_ad_circuit, AdVariant};
use channel_forge::linalg::max_abs_diff;
use channel_forge::noise::{amplitude_damping, pauli_diagonal, white_noise, NoiseModel, PauliDiagonalSpec};
use channel_forge::random::random_distribution;
use channel_forge::tailor::{
    ad_compose_parameter, bitflip_fidelity_a, bitflip_fidelity_b, maximize_over_p, pauli_convolve,
    pauli_tailor, pauli_tailored_channel, theta_tailor, ThetaSearch,
};
use proptest::prelude::*;

fn run(check: common::Check) -> Result<(), TestCaseError> {
    check.map_err(TestCaseError::fail)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    #[test]
    fn channel_representations_agree(seed in any::<u64>()) {
        run(common::channel_core(seed))?;
    }

    #[test]
    fn random_channels_validate(seed in any::<u64>()) {
        run(common::cptp_validation(seed))?;
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn noise_factories_behave(seed in any::<u64>()) {
        run(common::noise_models(seed))?;
    }

    #[test]
    fn circuit_simulation_invariants(seed in any::<u64>()) {
        run(common::circuits(seed))?;
    }

    #[test]
    fn dilations_round_trip(seed in any::<u64>()) {
        run(common::dilation(seed))?;
    }

    #[test]
    fn netsim_is_trace_preserving_and_deterministic(seed in any::<u64>()) {
        run(common::netsim(seed))?;
    }

    #[test]
    fn ad_composition_law(p1 in 0.0f64..=1.0, p2 in 0.0f64..=1.0) {
        let composed = compose(&amplitude_damping(p1).unwrap(), &amplitude_damping(p2).unwrap()).unwrap();
        let single = amplitude_damping(ad_compose_parameter(p1, p2)).unwrap();
        prop_assert!(max_abs_diff(composed.choi(), single.choi()) < 1e-12);
    }

    #[test]
    fn bitflip_optimum_ordering(big_p in 0.0f64..=1.0, q in 0.0f64..=1.0) {
        let (_, fa) = maximize_over_p(|p| bitflip_fidelity_a(big_p, p, q), 1e-8);
        let (_, fb) = maximize_over_p(|p| bitflip_fidelity_b(big_p, p, q), 1e-8);
        prop_assert!(fb <= fa + 1e-9, "F*_b={fb} > F*_a={fa}");
    }

    #[test]
    fn pauli_tailoring_reproduces_reachable_targets(seed in any::<u64>(), p in 0.6f64..0.99, q in 0.6f64..0.99) {
        let mut g = common::rng(seed);
        let hw = PauliDiagonalSpec::depolarizing(p).unwrap();
        let base = PauliDiagonalSpec::depolarizing(q).unwrap();
        let lambda = random_distribution(&mut g, 4);
        let target = PauliDiagonalSpec::new(pauli_convolve(hw.probs(), &lambda, base.probs())).unwrap();
        let sol = pauli_tailor(&hw, &base, &target).unwrap();
        let ch = pauli_tailored_channel(&hw, &base, sol.lambda.probs()).unwrap();
        prop_assert!(max_abs_diff(ch.choi(), pauli_diagonal(&target).choi()) < 1e-10);
    }

    #[test]
    fn theta_tailoring_never_worse_than_direct(gamma in 0.05f64..0.95, q in 0.8f64..1.0) {
        let hw = NoiseModel::gate(white_noise(q).unwrap());
        let target = amplitude_damping(gamma).unwrap();
        let search = ThetaSearch { reference: Some(angle_for(gamma)), grid: 31, ..Default::default() };
        let rec = theta_tailor(&target, |t| build_ad_circuit(t, AdVariant::UnitaryCnot), &hw, &search).unwrap();
        prop_assert!(rec.achieved_fidelity >= rec.direct_fidelity.unwrap() - 1e-9);
        prop_assert!((0.0..=1.0 + 1e-12).contains(&rec.achieved_fidelity));
        prop_assert!(rec.check().is_ok());
    }
}

#[test]
fn memory_waits_compose() {
    // Two consecutive memory channels equal one with their composition.
    let scenario = |channels: &[serde_json::Value]| {
        let mut events = vec![serde_json::json!({"type": "add_registers", "registers": ["a", "b"], "state": "bell"})];
        events.extend(channels.iter().map(|c| serde_json::json!({
            "type": "apply_channel", "role": "memory", "channel": c, "registers": ["a"]
        })));
        let s = serde_json::from_value(serde_json::json!({"events": events})).unwrap();
        channel_forge::netsim::run_scenario(&s).unwrap().state.global_state()
    };
    let first = amplitude_damping(0.3).unwrap();
    let second = white_noise(0.8).unwrap();
    let both = compose(&second, &first).unwrap();
    let two = scenario(&[
        serde_json::json!({"name": "amplitude_damping", "gamma": 0.3}),
        serde_json::json!({"name": "depolarizing", "q": 0.8}),
    ]);
    let one = scenario(&[serde_json::to_value(both.to_json()).unwrap()]);
    assert!(max_abs_diff(&two, &one) < 1e-10);
}
