//! Numerical integration: adaptive Simpson on finite intervals and
//! Gauss–Hermite rules for Gaussian expectations.

use std::collections::HashMap;
use std::sync::{Arc, Mutex, OnceLock};

use nalgebra::{DMatrix, SymmetricEigen};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Integral {
    pub value: f64,
    /// Richardson estimate of the absolute error.
    pub abs_error: f64,
    pub evaluations: usize,
    /// False when the recursion depth limit was hit somewhere.
    pub converged: bool,
}

const MAX_DEPTH: u32 = 48;

/// Integrates `f` over `[a, b]` by adaptive Simpson to absolute tolerance `tol`.
pub fn adaptive_simpson<F: FnMut(f64) -> f64>(mut f: F, a: f64, b: f64, tol: f64) -> Integral {
    if a == b {
        return Integral {
            value: 0.0,
            abs_error: 0.0,
            evaluations: 0,
            converged: true,
        };
    }
    let fa = f(a);
    let fb = f(b);
    let m = 0.5 * (a + b);
    let fm = f(m);
    let whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb);
    let mut state = Integral {
        value: 0.0,
        abs_error: 0.0,
        evaluations: 3,
        converged: true,
    };
    state.value = simpson_step(&mut f, a, b, fa, fm, fb, whole, tol, MAX_DEPTH, &mut state);
    state
}

#[allow(clippy::too_many_arguments)]
fn simpson_step<F: FnMut(f64) -> f64>(
    f: &mut F,
    a: f64,
    b: f64,
    fa: f64,
    fm: f64,
    fb: f64,
    whole: f64,
    tol: f64,
    depth: u32,
    state: &mut Integral,
) -> f64 {
    let m = 0.5 * (a + b);
    let lm = 0.5 * (a + m);
    let rm = 0.5 * (m + b);
    let flm = f(lm);
    let frm = f(rm);
    state.evaluations += 2;
    let left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
    let right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
    let diff = left + right - whole;
    if depth == 0 || m <= a || m >= b {
        state.converged = false;
        state.abs_error += diff.abs() / 15.0;
        return left + right + diff / 15.0;
    }
    if diff.abs() <= 15.0 * tol {
        state.abs_error += diff.abs() / 15.0;
        return left + right + diff / 15.0;
    }
    simpson_step(f, a, m, fa, flm, fm, left, 0.5 * tol, depth - 1, state)
        + simpson_step(f, m, b, fm, frm, fb, right, 0.5 * tol, depth - 1, state)
}

/// Physicists' Gauss–Hermite rule: `int e^{-x^2} g(x) dx ~ sum w_i g(x_i)`.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussHermite {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

impl GaussHermite {
    /// Rule with `n` nodes via the Golub–Welsch eigenvalue method. Rules are cached.
    pub fn new(n: usize) -> Arc<GaussHermite> {
        static CACHE: OnceLock<Mutex<HashMap<usize, Arc<GaussHermite>>>> = OnceLock::new();
        let cache = CACHE.get_or_init(|| Mutex::new(HashMap::new()));
        let mut guard = cache.lock().expect("quadrature cache poisoned");
        guard
            .entry(n)
            .or_insert_with(|| Arc::new(Self::compute(n)))
            .clone()
    }

    fn compute(n: usize) -> GaussHermite {
        assert!(n >= 1, "Gauss-Hermite rule needs at least one node");
        let jacobi = DMatrix::from_fn(n, n, |i, j| {
            if i + 1 == j || j + 1 == i {
                (i.max(j) as f64 / 2.0).sqrt()
            } else {
                0.0
            }
        });
        let eig = SymmetricEigen::new(jacobi);
        let mut pairs: Vec<(f64, f64)> = (0..n)
            .map(|k| {
                let v0 = eig.eigenvectors[(0, k)];
                (eig.eigenvalues[k], std::f64::consts::PI.sqrt() * v0 * v0)
            })
            .collect();
        pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
        // Enforce exact symmetry of the rule.
        for i in 0..n / 2 {
            let j = n - 1 - i;
            let x = 0.5 * (pairs[j].0 - pairs[i].0);
            let w = 0.5 * (pairs[i].1 + pairs[j].1);
            pairs[i] = (-x, w);
            pairs[j] = (x, w);
        }
        if n % 2 == 1 {
            pairs[n / 2].0 = 0.0;
        }
        GaussHermite {
            nodes: pairs.iter().map(|p| p.0).collect(),
            weights: pairs.iter().map(|p| p.1).collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// `E[g(Z)]` for `Z ~ N(mean, sd^2)`.
    pub fn normal_expectation<G: FnMut(f64) -> f64>(&self, mean: f64, sd: f64, mut g: G) -> f64 {
        let scale = std::f64::consts::SQRT_2 * sd;
        let total: f64 = self
            .nodes
            .iter()
            .zip(&self.weights)
            .map(|(&x, &w)| w * g(mean + scale * x))
            .sum();
        total / std::f64::consts::PI.sqrt()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn simpson_polynomial_and_exponential() {
        let r = adaptive_simpson(|x| x * x * x - 2.0 * x, 0.0, 2.0, 1e-12);
        assert!((r.value - 0.0).abs() < 1e-12);
        let r = adaptive_simpson(f64::exp, 0.0, 1.0, 1e-10);
        assert!((r.value - (1f64.exp() - 1.0)).abs() < 1e-10);
        assert!(r.converged && r.abs_error < 1e-10);
    }

    #[test]
    fn simpson_handles_kink_only_with_splitting() {
        let f = |x: f64| (x - 0.3).abs();
        let whole = adaptive_simpson(f, 0.0, 1.0, 1e-10);
        let split = adaptive_simpson(f, 0.0, 0.3, 1e-10).value + adaptive_simpson(f, 0.3, 1.0, 1e-10).value;
        let exact = 0.5 * 0.09 + 0.5 * 0.49;
        assert!((split - exact).abs() < 1e-14);
        assert!((whole.value - exact).abs() < 1e-8);
    }

    #[test]
    fn hermite_moments() {
        for n in [1usize, 2, 5, 16, 64, 128] {
            let rule = GaussHermite::new(n);
            assert_eq!(rule.len(), n);
            let total: f64 = rule.weights.iter().sum();
            assert!((total - std::f64::consts::PI.sqrt()).abs() < 1e-12, "n = {n}");
        }
        let rule = GaussHermite::new(20);
        // E[Z^4] = 3 sigma^4 and E[e^Z] = e^{mu + sigma^2 / 2}
        let m4 = rule.normal_expectation(0.0, 1.5, |z| z.powi(4));
        assert!((m4 - 3.0 * 1.5f64.powi(4)).abs() < 1e-10);
        let mgf = rule.normal_expectation(0.2, 0.4, f64::exp);
        assert!((mgf - (0.2f64 + 0.08).exp()).abs() < 1e-13);
    }
}
