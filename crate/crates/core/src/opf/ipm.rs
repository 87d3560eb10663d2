//! Primal-dual interior-point method for small dense nonlinear programs.
//!
//! ```txt
//!   min f(x)  s.t.  g(x) = 0,  h(x) <= 0
//! ```
//!
//! Inequalities are turned into equalities with positive slacks `z`,
//! `h(x) + z = 0`, and the perturbed KKT conditions are followed with a
//! centering parameter `σ = 0.1`. The Hessian of the Lagrangian is the exact
//! objective Hessian plus constraint curvature obtained from central
//! differences of the analytic constraint Jacobians.

use nalgebra::{DMatrix, DVector};

pub(crate) trait Nlp {
    fn dim(&self) -> usize;
    /// Objective value, gradient and Hessian.
    fn objective(&self, x: &DVector<f64>) -> (f64, DVector<f64>, DMatrix<f64>);
    /// Equality constraints and their Jacobian (`neq × n`).
    fn equalities(&self, x: &DVector<f64>) -> (DVector<f64>, DMatrix<f64>);
    /// Inequality constraints and their Jacobian (`niq × n`).
    fn inequalities(&self, x: &DVector<f64>) -> (DVector<f64>, DMatrix<f64>);
}

#[derive(Debug, Clone, Copy)]
pub(crate) struct IpmOptions {
    pub feas_tol: f64,
    pub grad_tol: f64,
    pub comp_tol: f64,
    pub max_iter: usize,
}

impl Default for IpmOptions {
    fn default() -> Self {
        Self {
            feas_tol: 1e-8,
            grad_tol: 1e-8,
            comp_tol: 1e-14,
            max_iter: 100,
        }
    }
}

#[derive(Debug, Clone)]
pub(crate) struct IpmResult {
    pub x: DVector<f64>,
    #[allow(dead_code)]
    pub mu: DVector<f64>,
    pub converged: bool,
    pub iterations: usize,
    /// Scaled stationarity residual at the returned point.
    pub grad_cond: f64,
}

const XI: f64 = 0.99995;
const SIGMA: f64 = 0.1;
const Z0: f64 = 1.0;

fn constraint_curvature<P: Nlp>(nlp: &P, x: &DVector<f64>, lam: &DVector<f64>, mu: &DVector<f64>) -> DMatrix<f64> {
    let n = x.len();
    let grad = |x: &DVector<f64>| -> DVector<f64> {
        let (_, dg) = nlp.equalities(x);
        let (_, dh) = nlp.inequalities(x);
        dg.tr_mul(lam) + dh.tr_mul(mu)
    };
    let mut hess = DMatrix::zeros(n, n);
    let mut xp = x.clone();
    for j in 0..n {
        let step = 1e-6 * x[j].abs().max(1.0);
        xp[j] = x[j] + step;
        let gp = grad(&xp);
        xp[j] = x[j] - step;
        let gm = grad(&xp);
        xp[j] = x[j];
        hess.set_column(j, &((gp - gm) / (2.0 * step)));
    }
    (&hess + hess.transpose()) * 0.5
}

pub(crate) fn solve<P: Nlp>(nlp: &P, x0: DVector<f64>, opts: &IpmOptions) -> IpmResult {
    let n = nlp.dim();
    let mut x = x0;
    let (_, mut df, mut d2f) = nlp.objective(&x);
    let (mut g, mut dg) = nlp.equalities(&x);
    let (mut h, mut dh) = nlp.inequalities(&x);
    let neq = g.len();
    let niq = h.len();

    let mut z = DVector::from_fn(niq, |i, _| if h[i] < -Z0 { -h[i] } else { Z0 });
    let mut gamma = 1.0;
    let mut mu = z.map(|zi| gamma / zi);
    let mut lam = DVector::zeros(neq);

    let lagrangian_grad =
        |df: &DVector<f64>, dg: &DMatrix<f64>, dh: &DMatrix<f64>, lam: &DVector<f64>, mu: &DVector<f64>| {
            df + dg.tr_mul(lam) + dh.tr_mul(mu)
        };
    let mut lx = lagrangian_grad(&df, &dg, &dh, &lam, &mu);

    let conditions = |x: &DVector<f64>,
                      z: &DVector<f64>,
                      g: &DVector<f64>,
                      h: &DVector<f64>,
                      lx: &DVector<f64>,
                      lam: &DVector<f64>,
                      mu: &DVector<f64>| {
        let max_h = h.iter().cloned().fold(0.0, f64::max);
        let feas = g.amax().max(max_h) / (1.0 + x.amax().max(if niq > 0 { z.amax() } else { 0.0 }));
        let mult = if neq > 0 { lam.amax() } else { 0.0 }.max(if niq > 0 { mu.amax() } else { 0.0 });
        let grad = lx.amax() / (1.0 + mult);
        let comp = if niq > 0 { z.dot(mu) } else { 0.0 } / (1.0 + x.amax());
        (feas, grad, comp)
    };

    let (mut feas, mut grad, mut comp) = conditions(&x, &z, &g, &h, &lx, &lam, &mu);
    let mut converged = feas < opts.feas_tol && grad < opts.grad_tol && comp < opts.comp_tol;
    let mut iterations = 0;

    while !converged && iterations < opts.max_iter {
        iterations += 1;
        let lxx = &d2f + constraint_curvature(nlp, &x, &lam, &mu);
        let zinv = z.map(|v| 1.0 / v);
        // dh' * diag(1/z)
        let dh_zinv = DMatrix::from_fn(n, niq, |r, c| dh[(c, r)] * zinv[c]);
        let mu_dh = DMatrix::from_fn(niq, n, |r, c| dh[(r, c)] * mu[r]);
        let m_mat = &lxx + &dh_zinv * mu_dh;
        let n_vec = &lx + &dh_zinv * (mu.component_mul(&h) + DVector::from_element(niq, gamma));

        let dim = n + neq;
        let mut kkt = DMatrix::zeros(dim, dim);
        kkt.view_mut((0, 0), (n, n)).copy_from(&m_mat);
        kkt.view_mut((0, n), (n, neq)).copy_from(&dg.transpose());
        kkt.view_mut((n, 0), (neq, n)).copy_from(&dg);
        let mut rhs = DVector::zeros(dim);
        rhs.rows_mut(0, n).copy_from(&(-&n_vec));
        rhs.rows_mut(n, neq).copy_from(&(-&g));

        let sol = match kkt.clone().lu().solve(&rhs) {
            Some(s) if s.iter().all(|v| v.is_finite()) => s,
            _ => {
                // regularise a rank-deficient system and retry once
                let scale = kkt.amax().max(1.0) * 1e-10;
                for i in 0..n {
                    kkt[(i, i)] += scale;
                }
                for i in n..dim {
                    kkt[(i, i)] -= scale;
                }
                match kkt.lu().solve(&rhs) {
                    Some(s) if s.iter().all(|v| v.is_finite()) => s,
                    _ => {
                        log::debug!("ipm: singular KKT system at iteration {iterations}");
                        break;
                    }
                }
            }
        };
        let dx = sol.rows(0, n).into_owned();
        let dlam = sol.rows(n, neq).into_owned();
        let dz = -&h - &z - &dh * &dx;
        let dmu = DVector::from_fn(niq, |i, _| -mu[i] + zinv[i] * (gamma - mu[i] * dz[i]));

        let ratio = |v: &DVector<f64>, dv: &DVector<f64>| {
            v.iter()
                .zip(dv.iter())
                .filter(|(_, d)| **d < 0.0)
                .map(|(vi, di)| -vi / di)
                .fold(f64::INFINITY, f64::min)
        };
        let alpha_p = (XI * ratio(&z, &dz)).min(1.0);
        let alpha_d = (XI * ratio(&mu, &dmu)).min(1.0);

        x += alpha_p * dx;
        z += alpha_p * dz;
        lam += alpha_d * dlam;
        mu += alpha_d * dmu;
        if niq > 0 {
            gamma = SIGMA * z.dot(&mu) / niq as f64;
        }

        let f;
        (f, df, d2f) = nlp.objective(&x);
        (g, dg) = nlp.equalities(&x);
        (h, dh) = nlp.inequalities(&x);
        lx = lagrangian_grad(&df, &dg, &dh, &lam, &mu);
        (feas, grad, comp) = conditions(&x, &z, &g, &h, &lx, &lam, &mu);
        if !(feas.is_finite() && grad.is_finite() && comp.is_finite()) {
            log::debug!("ipm: numerical failure at iteration {iterations}");
            break;
        }
        converged = feas < opts.feas_tol && grad < opts.grad_tol && comp < opts.comp_tol;
        log::trace!("ipm {iterations}: f={f:.6e} feas={feas:.2e} grad={grad:.2e} comp={comp:.2e}");
    }

    IpmResult {
        x,
        mu,
        converged,
        iterations,
        grad_cond: grad,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    /// min (x0-1)² + (x1-2)²  s.t. x0 + x1 = 2, x0 <= 0.25
    struct Toy;

    impl Nlp for Toy {
        fn dim(&self) -> usize {
            2
        }
        fn objective(&self, x: &DVector<f64>) -> (f64, DVector<f64>, DMatrix<f64>) {
            let f = (x[0] - 1.0).powi(2) + (x[1] - 2.0).powi(2);
            let g = DVector::from_vec(vec![2.0 * (x[0] - 1.0), 2.0 * (x[1] - 2.0)]);
            (f, g, DMatrix::identity(2, 2) * 2.0)
        }
        fn equalities(&self, x: &DVector<f64>) -> (DVector<f64>, DMatrix<f64>) {
            (DVector::from_element(1, x[0] + x[1] - 2.0), DMatrix::from_row_slice(1, 2, &[1.0, 1.0]))
        }
        fn inequalities(&self, x: &DVector<f64>) -> (DVector<f64>, DMatrix<f64>) {
            (DVector::from_element(1, x[0] - 0.25), DMatrix::from_row_slice(1, 2, &[1.0, 0.0]))
        }
    }

    #[test]
    fn active_bound_quadratic() {
        let r = solve(&Toy, DVector::from_vec(vec![0.0, 0.0]), &IpmOptions::default());
        assert!(r.converged);
        // unconstrained on the line: x0 = 0.5; bound pushes to 0.25
        assert!((r.x[0] - 0.25).abs() < 1e-7, "{}", r.x);
        assert!((r.x[1] - 1.75).abs() < 1e-7);
        assert!(r.mu[0] > 0.0);
    }

    /// min x0 + x1  s.t. x0² + x1² <= 1
    struct Disk;

    impl Nlp for Disk {
        fn dim(&self) -> usize {
            2
        }
        fn objective(&self, x: &DVector<f64>) -> (f64, DVector<f64>, DMatrix<f64>) {
            (x[0] + x[1], DVector::from_element(2, 1.0), DMatrix::zeros(2, 2))
        }
        fn equalities(&self, _x: &DVector<f64>) -> (DVector<f64>, DMatrix<f64>) {
            (DVector::zeros(0), DMatrix::zeros(0, 2))
        }
        fn inequalities(&self, x: &DVector<f64>) -> (DVector<f64>, DMatrix<f64>) {
            (
                DVector::from_element(1, x[0] * x[0] + x[1] * x[1] - 1.0),
                DMatrix::from_row_slice(1, 2, &[2.0 * x[0], 2.0 * x[1]]),
            )
        }
    }

    #[test]
    fn nonlinear_constraint_uses_curvature() {
        let r = solve(&Disk, DVector::from_vec(vec![0.1, -0.2]), &IpmOptions::default());
        assert!(r.converged, "{r:?}");
        let s = -(0.5f64).sqrt();
        assert!((r.x[0] - s).abs() < 1e-6 && (r.x[1] - s).abs() < 1e-6);
    }
}
