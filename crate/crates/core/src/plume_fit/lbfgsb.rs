//! Box-constrained limited-memory BFGS with finite-difference gradients.
//!
//! A projected variant: the two-loop recursion supplies a quasi-Newton
//! direction, components that would leave an active bound are dropped, and
//! an Armijo backtracking search runs along the projected path
//! `P(x + alpha * d)`. Gradients are central differences with step
//! `1e-6 * scale` per coordinate, where `scale` is the bound width (or 1
//! for unbounded coordinates). The objective is the only source of truth.

use std::collections::VecDeque;

#[derive(Debug, Clone, Copy)]
pub struct LbfgsbOptions {
    pub memory: usize,
    pub max_iter: usize,
    /// Stop when the projected gradient infinity norm falls below
    /// `pgtol * max(1, |f|)`.
    pub pgtol: f64,
    /// Stop when the relative objective decrease falls below
    /// `factr * f64::EPSILON`.
    pub factr: f64,
    pub fd_rel_step: f64,
}

impl Default for LbfgsbOptions {
    fn default() -> Self {
        Self {
            memory: 10,
            max_iter: 500,
            pgtol: 1e-9,
            factr: 1e7,
            fd_rel_step: 1e-6,
        }
    }
}

#[derive(Debug, Clone)]
pub struct LbfgsbResult {
    pub x: Vec<f64>,
    pub f: f64,
    pub iterations: usize,
    pub evaluations: usize,
    pub converged: bool,
}

struct Problem<'a, F> {
    f: &'a F,
    lower: &'a [f64],
    upper: &'a [f64],
    steps: Vec<f64>,
    evaluations: usize,
}

impl<F: Fn(&[f64]) -> f64> Problem<'_, F> {
    fn eval(&mut self, x: &[f64]) -> f64 {
        self.evaluations += 1;
        (self.f)(x)
    }

    fn gradient(&mut self, x: &[f64]) -> Vec<f64> {
        let mut probe = x.to_vec();
        (0..x.len())
            .map(|i| {
                let h = self.steps[i];
                probe[i] = x[i] + h;
                let fp = self.eval(&probe);
                probe[i] = x[i] - h;
                let fm = self.eval(&probe);
                probe[i] = x[i];
                (fp - fm) / (2.0 * h)
            })
            .collect()
    }

    fn project(&self, x: &mut [f64]) {
        for (i, v) in x.iter_mut().enumerate() {
            *v = v.clamp(self.lower[i], self.upper[i]);
        }
    }

    fn projected_gradient(&self, x: &[f64], g: &[f64]) -> Vec<f64> {
        (0..x.len())
            .map(|i| {
                if (x[i] <= self.lower[i] && g[i] > 0.0) || (x[i] >= self.upper[i] && g[i] < 0.0) {
                    0.0
                } else {
                    g[i]
                }
            })
            .collect()
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn inf_norm(a: &[f64]) -> f64 {
    a.iter().fold(0.0, |m, v| m.max(v.abs()))
}

fn two_loop(grad: &[f64], memory: &VecDeque<(Vec<f64>, Vec<f64>)>, free: &[bool]) -> Vec<f64> {
    let mask = |v: &[f64]| -> Vec<f64> {
        v.iter().zip(free).map(|(x, &f)| if f { *x } else { 0.0 }).collect()
    };
    let mut q = mask(grad);
    let pairs: Vec<(Vec<f64>, Vec<f64>, f64)> = memory
        .iter()
        .filter_map(|(s, y)| {
            let (s, y) = (mask(s), mask(y));
            let sy = dot(&s, &y);
            (sy > 1e-12).then(|| (s, y, 1.0 / sy))
        })
        .collect();
    let mut alpha = vec![0.0; pairs.len()];
    for (k, (s, y, rho)) in pairs.iter().enumerate().rev() {
        alpha[k] = rho * dot(s, &q);
        q.iter_mut().zip(y).for_each(|(qi, yi)| *qi -= alpha[k] * yi);
    }
    if let Some((s, y, _)) = pairs.last() {
        let gamma = dot(s, y) / dot(y, y);
        q.iter_mut().for_each(|v| *v *= gamma);
    }
    for (k, (s, y, rho)) in pairs.iter().enumerate() {
        let beta = rho * dot(y, &q);
        q.iter_mut().zip(s).for_each(|(qi, si)| *qi += (alpha[k] - beta) * si);
    }
    q.iter_mut().for_each(|v| *v = -*v);
    q
}

/// Minimizes `f` over the box `[lower, upper]` starting from `x0`
/// (projected into the box first). Returns the best point found; when the
/// iteration budget runs out `converged` is false.
pub fn minimize<F: Fn(&[f64]) -> f64>(
    f: &F,
    x0: &[f64],
    lower: &[f64],
    upper: &[f64],
    opts: &LbfgsbOptions,
) -> LbfgsbResult {
    let n = x0.len();
    assert!(lower.len() == n && upper.len() == n, "bound dimension mismatch");
    let steps = (0..n)
        .map(|i| {
            let w = upper[i] - lower[i];
            let scale = if w.is_finite() && w > 0.0 { w } else { 1.0 };
            opts.fd_rel_step * scale
        })
        .collect();
    let mut prob = Problem { f, lower, upper, steps, evaluations: 0 };

    let mut x = x0.to_vec();
    prob.project(&mut x);
    let mut fx = prob.eval(&x);
    let mut g = prob.gradient(&x);
    let mut memory: VecDeque<(Vec<f64>, Vec<f64>)> = VecDeque::with_capacity(opts.memory);
    let mut converged = false;
    let mut iterations = 0;

    while iterations < opts.max_iter {
        let pg = prob.projected_gradient(&x, &g);
        if inf_norm(&pg) <= opts.pgtol * fx.abs().max(1.0) {
            converged = true;
            break;
        }
        iterations += 1;
        let free: Vec<bool> = pg.iter().map(|v| *v != 0.0).collect();
        let mut d = two_loop(&g, &memory, &free);
        if dot(&d, &g) >= 0.0 {
            memory.clear();
            d = pg.iter().map(|v| -v).collect();
        }

        let mut alpha = if memory.is_empty() { 1.0 / inf_norm(&pg).max(1.0) } else { 1.0 };
        let mut accepted = None;
        for _ in 0..40 {
            let mut trial: Vec<f64> = x.iter().zip(&d).map(|(xi, di)| xi + alpha * di).collect();
            prob.project(&mut trial);
            let step: Vec<f64> = trial.iter().zip(&x).map(|(a, b)| a - b).collect();
            let decrease = dot(&g, &step);
            if inf_norm(&step) == 0.0 {
                break;
            }
            let ft = prob.eval(&trial);
            if ft.is_finite() && ft <= fx + 1e-4 * decrease {
                accepted = Some((trial, ft, step));
                break;
            }
            alpha *= 0.5;
        }
        let Some((xn, fn_, s)) = accepted else {
            if memory.is_empty() {
                // no descent along the projected gradient: numerically stationary
                converged = true;
                break;
            }
            memory.clear();
            continue;
        };

        let gn = prob.gradient(&xn);
        let y: Vec<f64> = gn.iter().zip(&g).map(|(a, b)| a - b).collect();
        if dot(&s, &y) > 1e-10 * dot(&s, &s).sqrt() * dot(&y, &y).sqrt() {
            if memory.len() == opts.memory {
                memory.pop_front();
            }
            memory.push_back((s, y));
        }
        let rel = (fx - fn_) / fx.abs().max(fn_.abs()).max(1.0);
        x = xn;
        fx = fn_;
        g = gn;
        if rel <= opts.factr * f64::EPSILON {
            converged = true;
            break;
        }
    }

    LbfgsbResult {
        x,
        f: fx,
        iterations,
        evaluations: prob.evaluations,
        converged,
    }
}
