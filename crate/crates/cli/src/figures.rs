use channel_forge::figures::{
    fig5a_point, fig5b_point, fig6a_point, fig6b_point, fig6c_point, fig7c_point, linspace, FIG5A_P,
    FIG5B_GAMMA, FIG5B_Q, FIG6A_Q, FIG6B_Q, FIG6C_Q,
};
use channel_forge::optim::NelderMeadOptions;
use clap::ValueEnum;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::table::Table;
use crate::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Figure {
    Fig5a,
    Fig5b,
    Fig6a,
    Fig6b,
    Fig6c,
    Fig7c,
}

/// Sweep range over the figure's x-axis (both axes for `fig7c`).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Grid {
    pub from: f64,
    pub to: f64,
    pub points: usize,
}

impl Figure {
    pub fn default_grid(self) -> Grid {
        let (from, to, points) = match self {
            Figure::Fig5a => (0.8, 1.0, 11),
            Figure::Fig5b => (0.0, 0.5, 11),
            Figure::Fig6a | Figure::Fig6b => (0.05, 0.95, 19),
            Figure::Fig6c => (0.0, 0.75, 16),
            Figure::Fig7c => (0.0, 1.0, 20),
        };
        Grid { from, to, points }
    }
}

pub struct SweepSettings {
    pub grid: Grid,
    pub optimizer: NelderMeadOptions,
    /// Hardware strength for `fig6a`; 1 switches the noise off.
    pub hw_q: Option<f64>,
}

fn collect<T: Send>(xs: &[f64], f: impl Fn(f64) -> Result<T, CliError> + Sync) -> Result<Vec<T>, CliError> {
    // Indexed parallel iterators keep the input order.
    xs.par_iter().map(|&x| f(x)).collect()
}

fn core(e: channel_forge::Error) -> CliError {
    e.into()
}

pub fn sweep(fig: Figure, s: &SweepSettings) -> Result<Table, CliError> {
    let Grid { from, to, points } = s.grid;
    if points == 0 || !(from.is_finite() && to.is_finite()) || from > to {
        return Err(CliError::Config(format!("grid needs points > 0 and from <= to, got {from}..{to} x {points}")));
    }
    let xs = linspace(from, to, points);
    let o = &s.optimizer;
    let table = match fig {
        Figure::Fig5a => Table {
            header: vec!["target_p", "q", "direct", "interleaved_noisy", "interleaved_noiseless"],
            rows: collect(&xs, |q| fig5a_point(q, o).map_err(core))?
                .into_iter()
                .map(|r| vec![FIG5A_P, r.q, r.direct, r.interleaved_noisy, r.interleaved_noiseless])
                .collect(),
        },
        Figure::Fig5b => Table {
            header: vec![
                "gamma",
                "hw_q",
                "strength",
                "direct_noisy",
                "interleaved_noisy",
                "direct_perfect",
                "interleaved_perfect",
            ],
            rows: collect(&xs, |x| fig5b_point(x, o).map_err(core))?
                .into_iter()
                .map(|r| {
                    vec![
                        FIG5B_GAMMA,
                        FIG5B_Q,
                        r.strength,
                        r.direct_noisy,
                        r.interleaved_noisy,
                        r.direct_perfect,
                        r.interleaved_perfect,
                    ]
                })
                .collect(),
        },
        Figure::Fig6a => {
            let hw_q = s.hw_q.unwrap_or(FIG6A_Q);
            Table {
                header: vec!["hw_q", "gamma", "theta_ideal", "theta_star", "infidelity_ideal", "infidelity_star"],
                rows: collect(&xs, |g| fig6a_point(g, hw_q).map_err(core))?
                    .into_iter()
                    .map(|r| vec![hw_q, r.gamma, r.theta_ideal, r.theta_star, r.infidelity_ideal, r.infidelity_star])
                    .collect(),
            }
        }
        Figure::Fig6b => Table {
            header: vec!["hw_q", "gamma", "direct", "theta_only", "full_circuit", "theta_star"],
            rows: collect(&xs, |g| fig6b_point(g, o).map_err(core))?
                .into_iter()
                .map(|r| vec![FIG6B_Q, r.gamma, r.direct, r.theta_only, r.full_circuit, r.theta_star])
                .collect(),
        },
        Figure::Fig6c => Table {
            header: vec!["hw_q", "strength", "direct", "pauli_only", "full_circuit"],
            rows: collect(&xs, |x| fig6c_point(x, o).map_err(core))?
                .into_iter()
                .map(|r| vec![FIG6C_Q, r.strength, r.direct, r.pauli_only, r.full_circuit])
                .collect(),
        },
        Figure::Fig7c => {
            let pairs: Vec<(f64, f64)> = xs.iter().flat_map(|&p| xs.iter().map(move |&q| (p, q))).collect();
            let rows: Vec<Vec<f64>> = pairs
                .par_iter()
                .map(|&(p, q)| {
                    let r = fig7c_point(p, q, 1e-10);
                    vec![r.big_p, r.q, r.p_star_a, r.f_star_a, r.p_star_b, r.f_star_b]
                })
                .collect();
            Table { header: vec!["big_p", "q", "p_star_a", "f_star_a", "p_star_b", "f_star_b"], rows }
        }
    };
    Ok(table)
}
