//! Dense convex quadratic programming.
//!
//! Solves `min 1/2 x'Hx - f'x` subject to `Rx >= b` with the dual active-set
//! method of Goldfarb and Idnani: start from the unconstrained minimizer,
//! repeatedly add the most violated constraint, and drop active constraints
//! whose multipliers would turn negative. The method needs no feasible
//! starting point and reports infeasibility when a violated constraint
//! cannot be satisfied.
//!
//! Problem sizes here are tiny (tens of variables), so the projected
//! directions are formed from explicit inverses rather than updated
//! factorizations.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct QpSolution {
    pub x: DVector<f64>,
    /// One multiplier per constraint row; zero for inactive rows.
    pub multipliers: DVector<f64>,
    pub active_set: Vec<usize>,
    pub iterations: usize,
}

/// Largest violations of each KKT condition.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KktResiduals {
    pub stationarity: f64,
    pub primal: f64,
    pub dual: f64,
    pub complementarity: f64,
}

impl KktResiduals {
    pub fn max(&self) -> f64 {
        self.stationarity
            .max(self.primal)
            .max(self.dual)
            .max(self.complementarity)
    }
}

fn check_shapes(h: &DMatrix<f64>, f: &DVector<f64>, r: &DMatrix<f64>, b: &DVector<f64>) -> Result<()> {
    let n = f.len();
    if h.nrows() != n || h.ncols() != n {
        return Err(Error::InvalidParameter(format!(
            "Hessian is {}x{}, expected {n}x{n}",
            h.nrows(),
            h.ncols()
        )));
    }
    if r.ncols() != n || r.nrows() != b.len() {
        return Err(Error::InvalidParameter(format!(
            "constraint matrix is {}x{} with {} bounds",
            r.nrows(),
            r.ncols(),
            b.len()
        )));
    }
    Ok(())
}

/// Inverse of `H`, adding the smallest ridge that makes a semidefinite `H` factorizable.
fn regularized_inverse(h: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let scale = h.diagonal().iter().fold(0.0f64, |m, v| m.max(v.abs())).max(1.0);
    let mut ridge = 0.0;
    for _ in 0..8 {
        let mut hr = h.clone();
        for i in 0..hr.nrows() {
            hr[(i, i)] += ridge;
        }
        if let Some(chol) = hr.cholesky() {
            // Reject factorizations whose pivots collapsed to round-off.
            let l = chol.l();
            let min_pivot = l.diagonal().iter().fold(f64::INFINITY, |m, v| m.min(v.abs()));
            if min_pivot * min_pivot > 1e-11 * scale {
                return Ok(chol.inverse());
            }
        }
        ridge = if ridge == 0.0 { 1e-10 * scale } else { ridge * 100.0 };
    }
    Err(Error::NumericalFailure("Hessian is not positive semidefinite".into()))
}

fn projected_direction(
    hinv: &DMatrix<f64>,
    r: &DMatrix<f64>,
    active: &[usize],
    p: usize,
) -> Result<(DVector<f64>, DVector<f64>)> {
    let np = r.row(p).transpose();
    let hinv_np = hinv * &np;
    if active.is_empty() {
        return Ok((hinv_np, DVector::zeros(0)));
    }
    let n = DMatrix::from_fn(np.len(), active.len(), |i, j| r[(active[j], i)]);
    let hinv_n = hinv * &n;
    let gram = n.transpose() * &hinv_n;
    let rhs = n.transpose() * &hinv_np;
    let coef = gram
        .lu()
        .solve(&rhs)
        .ok_or_else(|| Error::NumericalFailure("active constraints became dependent".into()))?;
    let z = hinv_np - hinv_n * &coef;
    Ok((z, coef))
}

/// Minimizes `1/2 x'Hx - f'x` subject to `Rx >= b`.
pub fn solve_qp(
    h: &DMatrix<f64>,
    f: &DVector<f64>,
    r: &DMatrix<f64>,
    b: &DVector<f64>,
) -> Result<QpSolution> {
    check_shapes(h, f, r, b)?;
    let dim = f.len();
    let rows = b.len();
    let hinv = regularized_inverse(h)?;
    let row_norm: Vec<f64> = (0..rows).map(|j| r.row(j).norm().max(1e-300)).collect();

    let mut x = &hinv * f;
    let mut active: Vec<usize> = Vec::new();
    let mut u: Vec<f64> = Vec::new();
    let max_iter = 50 * (rows + dim + 1);
    let mut iterations = 0;

    loop {
        // Most violated constraint, measured in scaled distance.
        let slack = |x: &DVector<f64>, j: usize| r.row(j).dot(&x.transpose()) - b[j];
        let mut candidate: Option<(usize, f64)> = None;
        for j in 0..rows {
            if active.contains(&j) {
                continue;
            }
            let s = slack(&x, j) / row_norm[j];
            let tol = 1e-12 * (1.0 + b[j].abs() / row_norm[j]);
            if s < -tol && candidate.is_none_or(|(_, best)| s < best) {
                candidate = Some((j, s));
            }
        }
        let Some((p, _)) = candidate else { break };

        let mut u_p = 0.0;
        loop {
            iterations += 1;
            if iterations > max_iter {
                return Err(Error::NumericalFailure(format!(
                    "active-set iteration limit ({max_iter}) reached"
                )));
            }
            let (z, coef) = projected_direction(&hinv, r, &active, p)?;

            // Largest dual step keeping active multipliers non-negative.
            let mut dual_step: Option<(usize, f64)> = None;
            for (k, &c) in coef.iter().enumerate() {
                if c > 0.0 {
                    let step = u[k] / c;
                    if dual_step.is_none_or(|(_, s)| step < s) {
                        dual_step = Some((k, step));
                    }
                }
            }

            let np = r.row(p).transpose();
            let curvature = z.dot(&np);
            let reference = np.dot(&(&hinv * &np)).abs().max(1e-300);
            if curvature <= 1e-13 * reference {
                // No primal progress possible along this constraint.
                let Some((k, step)) = dual_step else {
                    return Err(Error::Infeasible);
                };
                for (ui, c) in u.iter_mut().zip(coef.iter()) {
                    *ui -= step * c;
                }
                u_p += step;
                active.remove(k);
                u.remove(k);
                continue;
            }

            let primal_step = -slack(&x, p) / curvature;
            let full = dual_step.is_none_or(|(_, s)| primal_step <= s);
            let step = if full {
                primal_step
            } else {
                dual_step.map(|(_, s)| s).unwrap_or(primal_step)
            };
            x += &z * step;
            for (ui, c) in u.iter_mut().zip(coef.iter()) {
                *ui -= step * c;
            }
            u_p += step;
            if full {
                active.push(p);
                u.push(u_p);
                break;
            }
            let (k, _) = dual_step.expect("partial step implies a blocking constraint");
            active.remove(k);
            u.remove(k);
        }
    }

    // Re-solve the equality-constrained problem on the final active set with
    // the unregularized Hessian, removing round-off from the incremental
    // updates and any bias from the ridge.
    let k = active.len();
    let mut kkt = DMatrix::zeros(dim + k, dim + k);
    let mut rhs = DVector::zeros(dim + k);
    kkt.view_mut((0, 0), (dim, dim)).copy_from(h);
    for i in 0..dim {
        rhs[i] = f[i];
        for (c, &j) in active.iter().enumerate() {
            kkt[(i, dim + c)] = -r[(j, i)];
            kkt[(dim + c, i)] = r[(j, i)];
        }
    }
    for (c, &j) in active.iter().enumerate() {
        rhs[dim + c] = b[j];
    }
    if let Some(sol) = kkt.lu().solve(&rhs) {
        let mult = sol.rows(dim, k);
        if sol.iter().all(|v| v.is_finite()) && mult.iter().all(|&m| m >= -1e-10) {
            x = sol.rows(0, dim).into_owned();
            u = mult.iter().map(|m| m.max(0.0)).collect();
        }
    }

    let mut multipliers = DVector::zeros(rows);
    for (&j, &m) in active.iter().zip(&u) {
        multipliers[j] = m.max(0.0);
    }
    active.sort_unstable();
    Ok(QpSolution {
        x,
        multipliers,
        active_set: active,
        iterations,
    })
}

/// Evaluates the KKT conditions of `solution` for the given problem.
pub fn kkt_residuals(
    h: &DMatrix<f64>,
    f: &DVector<f64>,
    r: &DMatrix<f64>,
    b: &DVector<f64>,
    solution: &QpSolution,
) -> KktResiduals {
    let x = &solution.x;
    let lambda = &solution.multipliers;
    let grad = h * x - f - r.transpose() * lambda;
    let slack = r * x - b;
    KktResiduals {
        stationarity: grad.amax(),
        primal: slack.iter().fold(0.0f64, |m, s| m.max(-s)),
        dual: lambda.iter().fold(0.0f64, |m, l| m.max(-l)),
        complementarity: lambda
            .iter()
            .zip(slack.iter())
            .fold(0.0f64, |m, (l, s)| m.max((l * s).abs())),
    }
}

/// Objective `1/2 x'Hx - f'x`.
pub fn qp_objective(h: &DMatrix<f64>, f: &DVector<f64>, x: &DVector<f64>) -> f64 {
    0.5 * x.dot(&(h * x)) - f.dot(x)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn orthant(n: usize) -> (DMatrix<f64>, DVector<f64>) {
        (DMatrix::identity(n, n), DVector::zeros(n))
    }

    #[test]
    fn unconstrained_optimum_feasible() {
        let h = DMatrix::identity(2, 2);
        let f = DVector::from_vec(vec![2.0, 2.0]);
        let (r, b) = orthant(2);
        let sol = solve_qp(&h, &f, &r, &b).unwrap();
        assert!((sol.x[0] - 2.0).abs() < 1e-12 && (sol.x[1] - 2.0).abs() < 1e-12);
        assert!(sol.active_set.is_empty());
    }

    #[test]
    fn projection_onto_orthant() {
        let h = DMatrix::identity(2, 2);
        let f = DVector::from_vec(vec![-1.0, -1.0]);
        let (r, b) = orthant(2);
        let sol = solve_qp(&h, &f, &r, &b).unwrap();
        assert!(sol.x.amax() < 1e-12);
        assert_eq!(sol.active_set, vec![0, 1]);
        assert!(kkt_residuals(&h, &f, &r, &b, &sol).max() < 1e-12);
        assert!((sol.multipliers[0] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn detects_infeasibility() {
        // x >= 1 and -x >= 0
        let h = DMatrix::identity(1, 1);
        let f = DVector::from_vec(vec![0.0]);
        let r = DMatrix::from_row_slice(2, 1, &[1.0, -1.0]);
        let b = DVector::from_vec(vec![1.0, 0.0]);
        assert_eq!(solve_qp(&h, &f, &r, &b), Err(Error::Infeasible));
    }

    #[test]
    fn semidefinite_hessian() {
        // Only x0 is penalized; x1 is pinned by constraints 0 <= x1 <= 1 and
        // the linear term pushes it to the upper bound.
        let h = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 0.0]);
        let f = DVector::from_vec(vec![0.5, 1.0]);
        let r = DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 0.0, -1.0]);
        let b = DVector::from_vec(vec![0.0, -1.0]);
        let sol = solve_qp(&h, &f, &r, &b).unwrap();
        assert!((sol.x[0] - 0.5).abs() < 1e-8 && (sol.x[1] - 1.0).abs() < 1e-8, "{}", sol.x);
        assert!(kkt_residuals(&h, &f, &r, &b, &sol).max() < 1e-8);
    }

    #[test]
    fn shape_mismatch() {
        let h = DMatrix::identity(2, 2);
        let f = DVector::zeros(3);
        let (r, b) = orthant(2);
        assert!(matches!(solve_qp(&h, &f, &r, &b), Err(Error::InvalidParameter(_))));
    }

    fn spd(n: usize) -> impl Strategy<Value = DMatrix<f64>> {
        prop::collection::vec(-1.0f64..1.0, n * n).prop_map(move |v| {
            let a = DMatrix::from_vec(n, n, v);
            a.transpose() * &a + DMatrix::identity(n, n) * 0.1
        })
    }

    proptest! {
        #[test]
        fn kkt_holds_on_simplex_problems(
            (h, f) in (1usize..8).prop_flat_map(|n| (spd(n), prop::collection::vec(-3.0f64..3.0, n))),
        ) {
            let n = h.nrows();
            let f = DVector::from_vec(f);
            let mut r = DMatrix::zeros(n + 1, n);
            for i in 0..n {
                r[(i, i)] = 1.0;
                r[(n, i)] = -1.0;
            }
            let mut b = DVector::zeros(n + 1);
            b[n] = -1.0;
            let sol = solve_qp(&h, &f, &r, &b).unwrap();
            let kkt = kkt_residuals(&h, &f, &r, &b, &sol);
            prop_assert!(kkt.max() <= 1e-8, "{kkt:?}");

            let unconstrained = h.clone().cholesky().unwrap().solve(&f);
            if unconstrained.iter().all(|&v| v > 1e-6) && unconstrained.sum() < 1.0 - 1e-6 {
                prop_assert!((&sol.x - &unconstrained).amax() <= 1e-10);
            }
        }
    }
}
