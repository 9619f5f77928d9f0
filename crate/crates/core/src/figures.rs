//! Single points of the figure sweeps, shared by the CLI and the tests.
//!
//! Strength conventions: `q` is always the retained weight (white-noise
//! parameter for depolarizing, identity weight for dephasing, `1 - γ` for
//! amplitude damping); depolarizing targets are given by their white-noise
//! strength `s = 1 - q`.

use serde::{Deserialize, Serialize};

use crate::channel::{compose, Channel};
use crate::circuit::{angle_for, build_ad_circuit, AdVariant};
use crate::error::Result;
use crate::noise::{amplitude_damping, bit_flip, dephasing, rotation_noise_b, white_noise, NoiseModel, PauliDiagonalSpec};
use crate::optim::NelderMeadOptions;
use crate::tailor::{
    ad_full_template, bitflip_fidelity_a, bitflip_fidelity_b, building_block_optimize,
    building_block_optimize_from, full_circuit_tailor, maximize_over_p, pauli_mixture_template,
    pauli_u3_template, theta_tailor, BuildingBlockConfig, Placement, ThetaSearch, WarmStart,
};

/// Bit-flip parameter of the Method-1 example.
pub const FIG5A_P: f64 = 0.95;
/// Amplitude damping converted in the second Method-1 example.
pub const FIG5B_GAMMA: f64 = 0.1;
pub const FIG5B_Q: f64 = 0.9;
pub const FIG6A_Q: f64 = 0.925;
pub const FIG6B_Q: f64 = 0.8;
pub const FIG6C_Q: f64 = 0.8;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Fig5aRow {
    pub q: f64,
    pub direct: f64,
    pub interleaved_noisy: f64,
    pub interleaved_noiseless: f64,
}

fn interleaved(opts: &NelderMeadOptions, noisy: bool) -> BuildingBlockConfig {
    BuildingBlockConfig {
        placement: Placement::Interleaved,
        noisy_blocks: noisy,
        optimizer: *opts,
        ..Default::default()
    }
}

/// Runs the noisy-block optimization, then the noiseless one warm-started
/// from the noisy optimum's effective blocks.
fn noisy_then_noiseless(
    target: &Channel,
    input: &Channel,
    noise: &Channel,
    opts: &NelderMeadOptions,
) -> Result<(f64, f64, f64)> {
    let hw = NoiseModel::block(noise.clone());
    let noisy = building_block_optimize(target, input, &hw, &interleaved(opts, true))?;
    let cfg = interleaved(opts, false);
    let warm = if noisy.pre_channels.len() == cfg.mixture_size {
        Some(WarmStart::from_recipe(&noisy, Some(noise))?)
    } else {
        None
    };
    let clean = building_block_optimize_from(target, input, &hw, &cfg, warm.as_ref())?;
    Ok((noisy.direct_fidelity.unwrap_or(f64::NAN), noisy.achieved_fidelity, clean.achieved_fidelity))
}

/// Bit flip `p = 0.95` under block noise `B_q`: direct, interleaved with
/// noisy blocks, interleaved with noiseless blocks (infidelities).
pub fn fig5a_point(q: f64, opts: &NelderMeadOptions) -> Result<Fig5aRow> {
    let target = bit_flip(FIG5A_P)?;
    let noise = rotation_noise_b(q)?;
    let input = compose(&noise, &target)?;
    let (direct, noisy, clean) = noisy_then_noiseless(&target, &input, &noise, opts)?;
    Ok(Fig5aRow {
        q,
        direct: 1.0 - direct,
        interleaved_noisy: 1.0 - noisy,
        interleaved_noiseless: 1.0 - clean,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Fig5bRow {
    /// Target depolarizing strength `s` (white noise `D_{1-s}`).
    pub strength: f64,
    pub direct_noisy: f64,
    pub interleaved_noisy: f64,
    pub direct_perfect: f64,
    pub interleaved_perfect: f64,
}

/// `AD(0.1)` converted into depolarizing noise of strength `s`, on perfect
/// hardware and under block depolarizing noise `q = 0.9` (infidelities).
pub fn fig5b_point(strength: f64, opts: &NelderMeadOptions) -> Result<Fig5bRow> {
    let target = white_noise(1.0 - strength)?;
    let ad = amplitude_damping(FIG5B_GAMMA)?;
    let noise = white_noise(FIG5B_Q)?;
    let noisy_input = compose(&noise, &ad)?;
    let noisy = building_block_optimize(&target, &noisy_input, &NoiseModel::block(noise), &interleaved(opts, true))?;
    let perfect = building_block_optimize(&target, &ad, &NoiseModel::Ideal, &interleaved(opts, false))?;
    Ok(Fig5bRow {
        strength,
        direct_noisy: 1.0 - noisy.direct_fidelity.unwrap_or(f64::NAN),
        interleaved_noisy: noisy.infidelity(),
        direct_perfect: 1.0 - perfect.direct_fidelity.unwrap_or(f64::NAN),
        interleaved_perfect: perfect.infidelity(),
    })
}

/// Depolarizing followed by dephasing, both with retained weight `q`.
pub fn depolarizing_then_dephasing(q: f64) -> Result<Channel> {
    compose(&dephasing(q)?, &white_noise(q)?)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Fig6aRow {
    pub gamma: f64,
    pub theta_ideal: f64,
    pub theta_star: f64,
    pub infidelity_ideal: f64,
    pub infidelity_star: f64,
}

/// Gate-model noise `q` on every wire after each gate of the CNOT circuit;
/// `q = 1` switches the noise off.
pub fn fig6a_point(gamma: f64, q: f64) -> Result<Fig6aRow> {
    let hw = if q >= 1.0 { NoiseModel::Ideal } else { NoiseModel::gate(depolarizing_then_dephasing(q)?) };
    let target = amplitude_damping(gamma)?;
    let search = ThetaSearch { reference: Some(angle_for(gamma)), ..Default::default() };
    let rec = theta_tailor(&target, |t| build_ad_circuit(t, AdVariant::UnitaryCnot), &hw, &search)?;
    Ok(Fig6aRow {
        gamma,
        theta_ideal: angle_for(gamma),
        theta_star: rec.circuit_params["theta"],
        infidelity_ideal: 1.0 - rec.direct_fidelity.unwrap_or(f64::NAN),
        infidelity_star: rec.infidelity(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Fig6bRow {
    pub gamma: f64,
    pub direct: f64,
    pub theta_only: f64,
    pub full_circuit: f64,
    pub theta_star: f64,
}

/// Block noise (depolarizing then dephasing, `q = 0.8`): ideal angle,
/// `θ`-only tailoring and the full template seeded with the `θ` optimum.
pub fn fig6b_point(gamma: f64, opts: &NelderMeadOptions) -> Result<Fig6bRow> {
    let hw = NoiseModel::block(depolarizing_then_dephasing(FIG6B_Q)?);
    let target = amplitude_damping(gamma)?;
    let search = ThetaSearch { reference: Some(angle_for(gamma)), ..Default::default() };
    let theta = theta_tailor(&target, |t| build_ad_circuit(t, AdVariant::UnitaryCnot), &hw, &search)?;
    let theta_star = theta.circuit_params["theta"];
    let full = full_circuit_tailor(&target, &ad_full_template(gamma), &hw, &[vec![theta_star, 0.0, 0.0, 0.0]], opts)?;
    Ok(Fig6bRow {
        gamma,
        direct: 1.0 - theta.direct_fidelity.unwrap_or(f64::NAN),
        theta_only: theta.infidelity(),
        full_circuit: full.infidelity(),
        theta_star,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Fig6cRow {
    pub strength: f64,
    pub direct: f64,
    pub pauli_only: f64,
    pub full_circuit: f64,
}

/// Depolarizing target of strength `s` under block noise "dephasing then
/// amplitude damping" (`q = 0.8`): uniform Pauli mixture, optimized Pauli
/// weights, and Pauli weights plus a final `U3`.
pub fn fig6c_point(strength: f64, opts: &NelderMeadOptions) -> Result<Fig6cRow> {
    let noise = compose(&amplitude_damping(1.0 - FIG6C_Q)?, &dephasing(FIG6C_Q)?)?;
    let hw = NoiseModel::block(noise);
    let target = white_noise(1.0 - strength)?;
    let probs = PauliDiagonalSpec::depolarizing(crate::noise::white_noise_to_pauli(1.0 - strength))?;
    let pauli = full_circuit_tailor(&target, &pauli_mixture_template(probs.probs()), &hw, &[], opts)?;
    let mut seed: Vec<f64> = ["l0", "l1", "l2", "l3"].iter().map(|k| pauli.circuit_params[*k]).collect();
    seed.extend([0.0; 3]);
    let full = full_circuit_tailor(&target, &pauli_u3_template(probs.probs()), &hw, &[seed], opts)?;
    Ok(Fig6cRow {
        strength,
        direct: 1.0 - pauli.direct_fidelity.unwrap_or(f64::NAN),
        pauli_only: pauli.infidelity(),
        full_circuit: full.infidelity(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Fig7cRow {
    pub big_p: f64,
    pub q: f64,
    pub p_star_a: f64,
    pub f_star_a: f64,
    pub p_star_b: f64,
    pub f_star_b: f64,
}

/// Optimal tunable `p` for both bit-flip circuits under white noise `q`.
pub fn fig7c_point(big_p: f64, q: f64, tol: f64) -> Fig7cRow {
    let (p_star_a, f_star_a) = maximize_over_p(|p| bitflip_fidelity_a(big_p, p, q), tol);
    let (p_star_b, f_star_b) = maximize_over_p(|p| bitflip_fidelity_b(big_p, p, q), tol);
    Fig7cRow { big_p, q, p_star_a, f_star_a, p_star_b, f_star_b }
}

/// `n` evenly spaced points from `lo` to `hi` inclusive.
pub fn linspace(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    match n {
        0 => vec![],
        1 => vec![lo],
        _ => (0..n).map(|k| lo + (hi - lo) * k as f64 / (n - 1) as f64).collect(),
    }
}
