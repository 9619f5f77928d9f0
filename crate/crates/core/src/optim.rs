//! Gradient-free minimizers used by the tailoring routines.
//!
//! All routines minimize; callers maximize fidelity by minimizing `1 - F`.
//! Non-finite objective values are treated as `+inf`.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Minimum {
    pub x: Vec<f64>,
    pub value: f64,
    pub evaluations: usize,
    /// False when the evaluation budget ran out before the stopping rule fired.
    pub converged: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct NelderMeadOptions {
    /// Evaluations allowed per start.
    pub max_evals: usize,
    /// Stop once every vertex lies within this distance of the best one.
    pub tol: f64,
    pub initial_step: f64,
    /// Random starts on top of the caller's seed points.
    pub restarts: usize,
    /// Standard deviation of the Gaussian offsets used for random starts.
    pub spread: f64,
    pub seed: u64,
}

impl Default for NelderMeadOptions {
    fn default() -> Self {
        Self { max_evals: 2000, tol: 1e-8, initial_step: 0.25, restarts: 8, spread: 0.5, seed: 0 }
    }
}

fn sanitize(v: f64) -> f64 {
    if v.is_finite() {
        v
    } else {
        f64::INFINITY
    }
}

struct Counted<F> {
    f: F,
    evals: usize,
}

impl<F: FnMut(&[f64]) -> f64> Counted<F> {
    fn call(&mut self, x: &[f64]) -> f64 {
        self.evals += 1;
        sanitize((self.f)(x))
    }
}

/// Nelder–Mead with the dimension-adaptive coefficients of Gao and Han, which
/// keep the simplex from collapsing in higher dimensions.
pub fn nelder_mead<F: FnMut(&[f64]) -> f64>(
    f: F,
    x0: &[f64],
    step: f64,
    max_evals: usize,
    tol: f64,
) -> Minimum {
    let mut f = Counted { f, evals: 0 };
    let n = x0.len();
    if n == 0 {
        let value = f.call(x0);
        return Minimum { x: vec![], value, evaluations: 1, converged: true };
    }
    let nf = n as f64;
    // Adaptive coefficients degenerate in one dimension (shrink factor 0).
    let (alpha, beta, gamma, delta) = if n >= 2 {
        (1.0, 1.0 + 2.0 / nf, 0.75 - 1.0 / (2.0 * nf), 1.0 - 1.0 / nf)
    } else {
        (1.0, 2.0, 0.5, 0.5)
    };

    let mut simplex: Vec<Vec<f64>> = Vec::with_capacity(n + 1);
    simplex.push(x0.to_vec());
    for i in 0..n {
        let mut v = x0.to_vec();
        v[i] += step;
        simplex.push(v);
    }
    let mut values: Vec<f64> = simplex.iter().map(|v| f.call(v)).collect();

    let mut converged = false;
    loop {
        let mut order: Vec<usize> = (0..=n).collect();
        order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
        simplex = order.iter().map(|&i| simplex[i].clone()).collect();
        values = order.iter().map(|&i| values[i]).collect();

        let diameter = simplex[1..]
            .iter()
            .map(|v| v.iter().zip(&simplex[0]).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt())
            .fold(0.0, f64::max);
        if diameter < tol {
            converged = true;
            break;
        }
        if f.evals >= max_evals {
            break;
        }

        let centroid: Vec<f64> =
            (0..n).map(|j| simplex[..n].iter().map(|v| v[j]).sum::<f64>() / nf).collect();
        let towards = |coef: f64| -> Vec<f64> {
            centroid.iter().zip(&simplex[n]).map(|(c, w)| c + coef * (c - w)).collect()
        };

        let xr = towards(alpha);
        let fr = f.call(&xr);
        if fr < values[0] {
            let xe = towards(alpha * beta);
            let fe = f.call(&xe);
            if fe < fr {
                simplex[n] = xe;
                values[n] = fe;
            } else {
                simplex[n] = xr;
                values[n] = fr;
            }
            continue;
        }
        if fr < values[n - 1] {
            simplex[n] = xr;
            values[n] = fr;
            continue;
        }
        let (xc, fc) = if fr < values[n] {
            let xc = towards(alpha * gamma);
            let fc = f.call(&xc);
            (xc, if fc <= fr { fc } else { f64::NAN })
        } else {
            let xc = towards(-gamma);
            let fc = f.call(&xc);
            (xc, if fc < values[n] { fc } else { f64::NAN })
        };
        if !fc.is_nan() {
            simplex[n] = xc;
            values[n] = fc;
            continue;
        }
        // Shrink towards the best vertex.
        let best = simplex[0].clone();
        for i in 1..=n {
            for j in 0..n {
                simplex[i][j] = best[j] + delta * (simplex[i][j] - best[j]);
            }
            values[i] = f.call(&simplex[i]);
        }
    }

    let best = (0..=n).min_by(|&a, &b| values[a].total_cmp(&values[b])).unwrap_or(0);
    Minimum { x: simplex[best].clone(), value: values[best], evaluations: f.evals, converged }
}

/// Runs Nelder–Mead from each seed point, then from `opts.restarts` Gaussian
/// perturbations of the first seed, returning the best minimum overall.
/// `converged` reports whether the winning run converged.
pub fn multistart_nelder_mead<F: FnMut(&[f64]) -> f64>(
    mut f: F,
    seeds: &[Vec<f64>],
    opts: &NelderMeadOptions,
) -> Minimum {
    assert!(!seeds.is_empty(), "at least one seed point is required");
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let normal = Normal::new(0.0, opts.spread.max(0.0)).expect("finite spread");
    let mut starts: Vec<Vec<f64>> = seeds.to_vec();
    for _ in 0..opts.restarts {
        starts.push(seeds[0].iter().map(|x| x + normal.sample(&mut rng)).collect());
    }

    let mut best: Option<Minimum> = None;
    let mut total = 0;
    for start in &starts {
        let m = nelder_mead(&mut f, start, opts.initial_step, opts.max_evals, opts.tol);
        total += m.evaluations;
        if best.as_ref().map_or(true, |b| m.value < b.value) {
            best = Some(m);
        }
    }
    let mut best = best.expect("non-empty starts");
    best.evaluations = total;
    best
}

/// Cyclic compass search: each coordinate in turn tries `±step`, keeping
/// improvements; the step halves after a sweep without progress.
pub fn coordinate_descent<F: FnMut(&[f64]) -> f64>(
    f: F,
    x0: &[f64],
    step: f64,
    max_evals: usize,
    tol: f64,
) -> Minimum {
    let mut f = Counted { f, evals: 0 };
    let mut x = x0.to_vec();
    let mut fx = f.call(&x);
    let mut step = step;
    let mut converged = false;
    'outer: loop {
        if step < tol {
            converged = true;
            break;
        }
        let mut improved = false;
        for i in 0..x.len() {
            for dir in [1.0, -1.0] {
                if f.evals >= max_evals {
                    break 'outer;
                }
                let mut trial = x.clone();
                trial[i] += dir * step;
                let ft = f.call(&trial);
                if ft < fx {
                    x = trial;
                    fx = ft;
                    improved = true;
                    break;
                }
            }
        }
        if !improved {
            step *= 0.5;
        }
    }
    Minimum { x, value: fx, evaluations: f.evals, converged }
}

const INV_PHI: f64 = 0.618_033_988_749_894_8;

/// Golden-section search for the minimum of a unimodal function on `[a, b]`,
/// stopping when the bracket is narrower than `tol`. Returns `(x, f(x))`.
pub fn golden_section<F: FnMut(f64) -> f64>(mut f: F, a: f64, b: f64, tol: f64) -> (f64, f64) {
    let (mut a, mut b) = (a.min(b), a.max(b));
    let mut c = b - INV_PHI * (b - a);
    let mut d = a + INV_PHI * (b - a);
    let mut fc = sanitize(f(c));
    let mut fd = sanitize(f(d));
    while b - a > tol {
        if fc <= fd {
            b = d;
            d = c;
            fd = fc;
            c = b - INV_PHI * (b - a);
            fc = sanitize(f(c));
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + INV_PHI * (b - a);
            fd = sanitize(f(d));
        }
    }
    let mid = 0.5 * (a + b);
    let fm = sanitize(f(mid));
    [(c, fc), (d, fd), (mid, fm)]
        .into_iter()
        .min_by(|x, y| x.1.total_cmp(&y.1))
        .expect("three candidates")
}

/// Scans `grid` equally spaced points of `[a, b]`, then refines around the
/// best one by golden section. Robust to multimodal objectives at grid scale.
pub fn grid_then_golden<F: FnMut(f64) -> f64>(
    mut f: F,
    a: f64,
    b: f64,
    grid: usize,
    tol: f64,
) -> (f64, f64) {
    let grid = grid.max(2);
    let h = (b - a) / (grid - 1) as f64;
    let samples: Vec<(f64, f64)> = (0..grid)
        .map(|k| {
            let x = a + h * k as f64;
            (x, sanitize(f(x)))
        })
        .collect();
    let k = (0..grid).min_by(|&i, &j| samples[i].1.total_cmp(&samples[j].1)).unwrap_or(0);
    let lo = a + h * k.saturating_sub(1) as f64;
    let hi = (a + h * (k + 1) as f64).min(b);
    let refined = golden_section(&mut f, lo, hi, tol);
    if refined.1 <= samples[k].1 {
        refined
    } else {
        samples[k]
    }
}

/// `exp(x_i) / Σ exp(x_j)`, shifted for stability.
pub fn softmax(x: &[f64]) -> Vec<f64> {
    let max = x.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = x.iter().map(|v| (v - max).exp()).collect();
    let s: f64 = e.iter().sum();
    e.iter().map(|v| v / s).collect()
}

/// Euclidean projection onto the probability simplex.
pub fn project_to_simplex(v: &[f64]) -> Vec<f64> {
    let mut u = v.to_vec();
    u.sort_by(|a, b| b.total_cmp(a));
    let mut cum = 0.0;
    let mut theta = 0.0;
    for (k, &uk) in u.iter().enumerate() {
        cum += uk;
        let t = (cum - 1.0) / (k + 1) as f64;
        if uk - t > 0.0 {
            theta = t;
        }
    }
    v.iter().map(|x| (x - theta).max(0.0)).collect()
}
