//! Limited-memory BFGS with a strong-Wolfe line search.

use std::collections::VecDeque;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LbfgsConfig {
    pub memory: usize,
    pub max_iterations: usize,
    /// Sufficient-decrease constant.
    pub c1: f64,
    /// Curvature constant.
    pub c2: f64,
    pub grad_tol: f64,
    /// Stop when an iteration improves `f` by less than this (relative).
    pub f_tol: f64,
    pub max_line_evals: usize,
}

impl Default for LbfgsConfig {
    fn default() -> Self {
        Self {
            memory: 10,
            max_iterations: 300,
            c1: 1e-4,
            c2: 0.9,
            grad_tol: 1e-10,
            f_tol: 1e-14,
            max_line_evals: 30,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Status {
    GradientTolerance,
    FunctionTolerance,
    MaxIterations,
    LineSearchFailed,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LbfgsResult {
    pub x: Vec<f64>,
    pub f: f64,
    pub iterations: usize,
    pub evaluations: usize,
    pub status: Status,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn axpy(x: &[f64], alpha: f64, d: &[f64]) -> Vec<f64> {
    x.iter().zip(d).map(|(a, b)| a + alpha * b).collect()
}

/// Minimiser of the cubic through `(a, fa, ga)` and `(b, fb, gb)`, kept
/// inside the bracket; bisection when the cubic is degenerate.
fn cubic_min(a: f64, fa: f64, ga: f64, b: f64, fb: f64, gb: f64) -> f64 {
    let d1 = ga + gb - 3.0 * (fa - fb) / (a - b);
    let disc = d1 * d1 - ga * gb;
    let (lo, hi) = if a < b { (a, b) } else { (b, a) };
    let mid = 0.5 * (a + b);
    if disc < 0.0 || !disc.is_finite() {
        return mid;
    }
    let d2 = (b - a).signum() * disc.sqrt();
    let t = b - (b - a) * (gb + d2 - d1) / (gb - ga + 2.0 * d2);
    let margin = 0.1 * (hi - lo);
    if t.is_finite() && t > lo + margin && t < hi - margin {
        t
    } else {
        mid
    }
}

struct Eval {
    f: f64,
    g: Vec<f64>,
}

/// Returns `(step, f, g)` satisfying the strong Wolfe conditions, or `None`.
#[allow(clippy::too_many_arguments)]
fn line_search<F>(
    objective: &mut F,
    x: &[f64],
    f0: f64,
    g0: f64,
    dir: &[f64],
    initial: f64,
    cfg: &LbfgsConfig,
    evals: &mut usize,
) -> Option<(f64, Eval)>
where
    F: FnMut(&[f64]) -> Option<(f64, Vec<f64>)>,
{
    let mut eval = |a: f64, evals: &mut usize| -> Option<(Eval, f64)> {
        *evals += 1;
        let (f, g) = objective(&axpy(x, a, dir))?;
        if !f.is_finite() || g.iter().any(|v| !v.is_finite()) {
            return None;
        }
        let d = dot(&g, dir);
        Some((Eval { f, g }, d))
    };
    let (mut a_prev, mut f_prev, mut d_prev) = (0.0, f0, g0);
    let mut a = initial;
    let mut budget = cfg.max_line_evals;
    let mut first = true;
    loop {
        if budget == 0 {
            return None;
        }
        budget -= 1;
        let (e, d) = match eval(a, evals) {
            Some(v) => v,
            // Non-finite trial: shrink towards the last good point.
            None => {
                a = 0.5 * (a_prev + a);
                continue;
            }
        };
        if e.f > f0 + cfg.c1 * a * g0 || (!first && e.f >= f_prev) {
            return zoom(&mut eval, (a_prev, f_prev, d_prev), (a, e.f, d), f0, g0, cfg, budget, evals);
        }
        if d.abs() <= -cfg.c2 * g0 {
            return Some((a, e));
        }
        if d >= 0.0 {
            return zoom(&mut eval, (a, e.f, d), (a_prev, f_prev, d_prev), f0, g0, cfg, budget, evals);
        }
        let next = (a * 2.0).min(a + 1e3 * (a - a_prev));
        a_prev = a;
        f_prev = e.f;
        d_prev = d;
        a = next;
        first = false;
    }
}

#[allow(clippy::too_many_arguments)]
fn zoom<E>(
    eval: &mut E,
    mut lo: (f64, f64, f64),
    mut hi: (f64, f64, f64),
    f0: f64,
    g0: f64,
    cfg: &LbfgsConfig,
    mut budget: usize,
    evals: &mut usize,
) -> Option<(f64, Eval)>
where
    E: FnMut(f64, &mut usize) -> Option<(Eval, f64)>,
{
    while budget > 0 {
        budget -= 1;
        let a = cubic_min(lo.0, lo.1, lo.2, hi.0, hi.1, hi.2);
        if (hi.0 - lo.0).abs() < 1e-16 * lo.0.abs().max(1.0) {
            return None;
        }
        let (e, d) = match eval(a, evals) {
            Some(v) => v,
            None => {
                hi = (a, f64::INFINITY, 0.0);
                continue;
            }
        };
        if e.f > f0 + cfg.c1 * a * g0 || e.f >= lo.1 {
            hi = (a, e.f, d);
        } else {
            if d.abs() <= -cfg.c2 * g0 {
                return Some((a, e));
            }
            if d * (hi.0 - lo.0) >= 0.0 {
                hi = lo;
            }
            lo = (a, e.f, d);
        }
    }
    None
}

/// Minimises `objective`, which returns `(f, ∇f)` or `None` if it cannot be
/// evaluated at that point. `on_iterate` sees every accepted iterate.
pub fn minimize<F>(mut objective: F, x0: &[f64], cfg: &LbfgsConfig, mut on_iterate: impl FnMut(&[f64], f64)) -> Option<LbfgsResult>
where
    F: FnMut(&[f64]) -> Option<(f64, Vec<f64>)>,
{
    let mut evaluations = 1;
    let (mut f, mut g) = objective(x0)?;
    if !f.is_finite() {
        return None;
    }
    let mut x = x0.to_vec();
    let mut history: VecDeque<(Vec<f64>, Vec<f64>, f64)> = VecDeque::with_capacity(cfg.memory);
    let mut status = Status::MaxIterations;
    let mut iterations = 0;
    while iterations < cfg.max_iterations {
        if dot(&g, &g).sqrt() <= cfg.grad_tol {
            status = Status::GradientTolerance;
            break;
        }
        // Two-loop recursion.
        let mut q = g.clone();
        let mut alphas = Vec::with_capacity(history.len());
        for (s, y, rho) in history.iter().rev() {
            let a = rho * dot(s, &q);
            q = axpy(&q, -a, y);
            alphas.push(a);
        }
        if let Some((s, y, _)) = history.back() {
            let gamma = dot(s, y) / dot(y, y);
            q.iter_mut().for_each(|v| *v *= gamma);
        }
        for ((s, y, rho), a) in history.iter().zip(alphas.iter().rev()) {
            let b = rho * dot(y, &q);
            q = axpy(&q, a - b, s);
        }
        let mut dir: Vec<f64> = q.iter().map(|v| -v).collect();
        let mut slope = dot(&g, &dir);
        if slope >= 0.0 {
            history.clear();
            dir = g.iter().map(|v| -v).collect();
            slope = -dot(&g, &g);
        }
        let initial = if history.is_empty() {
            (1.0 / dot(&g, &g).sqrt()).min(1.0)
        } else {
            1.0
        };
        let Some((step, e)) = line_search(&mut objective, &x, f, slope, &dir, initial, cfg, &mut evaluations) else {
            status = Status::LineSearchFailed;
            break;
        };
        let x_new = axpy(&x, step, &dir);
        let s: Vec<f64> = x_new.iter().zip(&x).map(|(a, b)| a - b).collect();
        let y: Vec<f64> = e.g.iter().zip(&g).map(|(a, b)| a - b).collect();
        let sy = dot(&s, &y);
        if sy > 1e-300 {
            if history.len() == cfg.memory {
                history.pop_front();
            }
            history.push_back((s, y, 1.0 / sy));
        }
        let improvement = f - e.f;
        x = x_new;
        f = e.f;
        g = e.g;
        iterations += 1;
        on_iterate(&x, f);
        if improvement <= cfg.f_tol * f.abs().max(1e-300) {
            status = Status::FunctionTolerance;
            break;
        }
    }
    Some(LbfgsResult {
        x,
        f,
        iterations,
        evaluations,
        status,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rosenbrock(x: &[f64]) -> Option<(f64, Vec<f64>)> {
        let mut f = 0.0;
        let mut g = vec![0.0; x.len()];
        for i in 0..x.len() - 1 {
            let a = x[i + 1] - x[i] * x[i];
            let b = 1.0 - x[i];
            f += 100.0 * a * a + b * b;
            g[i] += -400.0 * x[i] * a - 2.0 * b;
            g[i + 1] += 200.0 * a;
        }
        Some((f, g))
    }

    #[test]
    fn solves_rosenbrock() {
        let cfg = LbfgsConfig {
            max_iterations: 500,
            ..LbfgsConfig::default()
        };
        let r = minimize(rosenbrock, &[-1.2, 1.0, -1.2, 1.0], &cfg, |_, _| {}).unwrap();
        assert!(r.f < 1e-12, "{r:?}");
        assert!(r.x.iter().all(|v| (v - 1.0).abs() < 1e-5));
    }

    #[test]
    fn iterates_decrease_monotonically() {
        let mut seen = vec![];
        minimize(rosenbrock, &[-1.2, 1.0], &LbfgsConfig::default(), |_, f| seen.push(f)).unwrap();
        assert!(seen.windows(2).all(|w| w[1] <= w[0]));
    }

    #[test]
    fn quadratic_in_few_iterations() {
        let quad = |x: &[f64]| Some((x.iter().enumerate().map(|(i, v)| (i + 1) as f64 * v * v).sum(), x.iter().enumerate().map(|(i, v)| 2.0 * (i + 1) as f64 * v).collect()));
        let r = minimize(quad, &[1.0; 5], &LbfgsConfig::default(), |_, _| {}).unwrap();
        assert!(r.f < 1e-20 || r.status == Status::GradientTolerance);
        assert!(r.iterations < 30);
    }
}
