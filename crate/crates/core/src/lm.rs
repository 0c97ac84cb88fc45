//! Levenberg–Marquardt with Marquardt diagonal scaling and a monotone accept
//! rule: a step is taken only if it lowers the cost. An optional Newton
//! polish may also take steps that keep the cost level to rounding.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

/// A least-squares problem `min ½‖r(x)‖²`.
pub trait LeastSquares {
    fn n_params(&self) -> usize;

    fn residuals(&self, x: &[f64]) -> Vec<f64>;

    /// Residuals and their Jacobian (rows × `n_params`).
    fn jacobian(&self, x: &[f64]) -> (Vec<f64>, DMatrix<f64>);

    /// Maps a trial point back onto the feasible set.
    fn project(&self, _x: &mut [f64]) {}

    /// Box bounds `(index, lower, upper)` enforced by `project`.
    fn bounds(&self) -> Vec<(usize, f64, f64)> {
        Vec::new()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LmConfig {
    pub max_iterations: usize,
    /// Relative cost decrease below which an accepted step ends the solve.
    pub cost_tolerance: f64,
    /// Relative step norm below which an accepted step ends the solve.
    pub step_tolerance: f64,
    pub gradient_tolerance: f64,
    pub initial_lambda: f64,
    /// Gauss–Newton steps taken after convergence to settle flat valleys
    /// past the resolution of the cost.
    pub polish_iterations: usize,
}

impl Default for LmConfig {
    fn default() -> Self {
        Self {
            max_iterations: 200,
            cost_tolerance: 1e-12,
            step_tolerance: 1e-12,
            gradient_tolerance: 1e-14,
            initial_lambda: 1e-3,
            polish_iterations: 0,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Termination {
    CostConverged,
    StepConverged,
    GradientConverged,
    ZeroCost,
    /// Damping grew without finding a lower cost; the point is a local
    /// minimum to working precision.
    Stalled,
    MaxIterations,
}

impl Termination {
    pub fn converged(self) -> bool {
        self != Termination::MaxIterations
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct LmReport {
    pub x: Vec<f64>,
    pub cost: f64,
    pub initial_cost: f64,
    pub iterations: usize,
    pub termination: Termination,
}

fn half_sq(r: &[f64]) -> f64 {
    0.5 * r.iter().map(|v| v * v).sum::<f64>()
}

/// Minimizes over the entries of `x0` whose `free` flag is set.
pub fn minimize<P: LeastSquares + ?Sized>(problem: &P, x0: &[f64], free: &[bool], config: &LmConfig) -> LmReport {
    let mut rep = damped(problem, x0, free, config);
    if rep.termination.converged() && rep.termination != Termination::ZeroCost {
        polish(problem, &mut rep, free, config);
    }
    rep
}

fn gradient<P: LeastSquares + ?Sized>(problem: &P, x: &[f64], idx: &[usize]) -> DVector<f64> {
    let (r, jac) = problem.jacobian(x);
    DVector::from_fn(idx.len(), |j, _| (0..r.len()).map(|i| jac[(i, idx[j])] * r[i]).sum())
}

/// Newton step on `idx` with the Hessian taken by central differences of the
/// exact gradient. Curvature is replaced by its magnitude and floored, so the
/// step always descends.
fn newton_step<P: LeastSquares + ?Sized>(problem: &P, x: &[f64], idx: &[usize]) -> (DVector<f64>, f64) {
    let g = gradient(problem, x, idx);
    let n = idx.len();
    let mut h = DMatrix::zeros(n, n);
    for (j, &i) in idx.iter().enumerate() {
        let d = 1e-6 * x[i].abs().max(1e-3);
        let (mut xp, mut xm) = (x.to_vec(), x.to_vec());
        xp[i] += d;
        xm[i] -= d;
        let col = (gradient(problem, &xp, idx) - gradient(problem, &xm, idx)) / (2.0 * d);
        h.set_column(j, &col);
    }
    // Jacobi scaling keeps the floor from clipping weakly coupled unknowns.
    let d = DVector::from_fn(n, |j, _| {
        let v = h[(j, j)].abs().sqrt();
        if v > 0.0 { 1.0 / v } else { 1.0 }
    });
    let h = DMatrix::from_fn(n, n, |i, j| 0.5 * (h[(i, j)] + h[(j, i)]) * d[i] * d[j]);
    let gs = g.component_mul(&d);
    let eig = h.symmetric_eigen();
    let top = eig.eigenvalues.amax();
    let floor = (top * 1e-14).max(1e-300);
    let vg = eig.eigenvectors.tr_mul(&gs);
    let scaled = DVector::from_fn(n, |k, _| -vg[k] / eig.eigenvalues[k].abs().max(floor));
    ((&eig.eigenvectors * scaled).component_mul(&d), g.norm())
}

/// Takes Newton steps, halved until they either lower the cost or leave it
/// level to rounding while shrinking the gradient. Near a minimum the step
/// comes from the gradient, which resolves the optimum far more finely than
/// cost comparisons can.
fn polish<P: LeastSquares + ?Sized>(problem: &P, rep: &mut LmReport, free: &[bool], config: &LmConfig) {
    const LEVEL: f64 = 1e-13;
    let bounds = problem.bounds();
    for _ in 0..config.polish_iterations {
        let mut base = rep.x.clone();
        let mut idx: Vec<usize> = (0..free.len()).filter(|&i| free[i]).collect();
        // Bounds that hold the point with the gradient pushing outward stay active.
        let g = gradient(problem, &base, &idx);
        for &(i, lo, hi) in &bounds {
            if let Some(j) = idx.iter().position(|&k| k == i) {
                if (base[i] <= lo && g[j] > 0.0) || (base[i] >= hi && g[j] < 0.0) {
                    idx.remove(j);
                }
            }
        }
        // A bound the step would cross is made active and the step redone.
        let delta = loop {
            if idx.is_empty() {
                return;
            }
            let (delta, _) = newton_step(problem, &base, &idx);
            let hit: Vec<(usize, f64)> = bounds
                .iter()
                .filter_map(|&(i, lo, hi)| {
                    let j = idx.iter().position(|&k| k == i)?;
                    let v = base[i] + delta[j];
                    (v < lo).then_some((i, lo)).or((v > hi).then_some((i, hi)))
                })
                .collect();
            if hit.is_empty() {
                break delta;
            }
            for (i, v) in hit {
                base[i] = v;
                idx.retain(|&k| k != i);
            }
        };
        let g0 = gradient(problem, &rep.x, &idx).norm();
        let mut t = 1.0;
        let accepted = (0..12).find_map(|_| {
            let mut xn = base.clone();
            for (j, &i) in idx.iter().enumerate() {
                xn[i] += t * delta[j];
            }
            problem.project(&mut xn);
            let cn = half_sq(&problem.residuals(&xn));
            t *= 0.5;
            let lower = cn < rep.cost * (1.0 - LEVEL);
            let level = cn <= rep.cost * (1.0 + LEVEL) && gradient(problem, &xn, &idx).norm() < g0;
            (cn.is_finite() && (lower || level)).then_some((xn, cn))
        });
        let Some((xn, cn)) = accepted else { return };
        rep.x = xn;
        rep.cost = cn;
        rep.iterations += 1;
    }
}

/// Decrease promised by a nearly undamped Gauss–Newton step.
fn undamped_gain(a: &DMatrix<f64>, g: &DVector<f64>, floor: f64) -> f64 {
    let mut m = a.clone();
    for j in 0..m.nrows() {
        m[(j, j)] += floor;
    }
    m.cholesky().map_or(f64::INFINITY, |c| 0.5 * g.dot(&c.solve(g)))
}

fn damped<P: LeastSquares + ?Sized>(problem: &P, x0: &[f64], free: &[bool], config: &LmConfig) -> LmReport {
    let n = problem.n_params();
    assert_eq!(x0.len(), n);
    assert_eq!(free.len(), n);
    let idx: Vec<usize> = (0..n).filter(|&i| free[i]).collect();
    let nf = idx.len();

    let mut x = x0.to_vec();
    problem.project(&mut x);
    let (mut r, mut jac) = problem.jacobian(&x);
    let mut cost = half_sq(&r);
    let initial_cost = cost;
    let mut scale = vec![0.0f64; nf];
    let mut lambda = config.initial_lambda;
    let mut nu = 2.0;

    let report = |x: Vec<f64>, cost: f64, iterations: usize, termination: Termination| LmReport {
        x,
        cost,
        initial_cost,
        iterations,
        termination,
    };

    if nf == 0 {
        return report(x, cost, 0, Termination::StepConverged);
    }

    let mut iter = 0;
    'outer: while iter < config.max_iterations {
        if cost <= 1e-30 {
            return report(x, cost, iter, Termination::ZeroCost);
        }
        let jf = DMatrix::from_fn(jac.nrows(), nf, |i, j| jac[(i, idx[j])]);
        let rv = DVector::from_column_slice(&r);
        let a = jf.tr_mul(&jf);
        let g = jf.tr_mul(&rv);
        if g.amax() <= config.gradient_tolerance {
            return report(x, cost, iter, Termination::GradientConverged);
        }
        let mut dmax = 0.0f64;
        for j in 0..nf {
            scale[j] = scale[j].max(a[(j, j)]);
            dmax = dmax.max(scale[j]);
        }
        let floor = (dmax * 1e-12).max(1e-300);

        loop {
            iter += 1;
            let mut m = a.clone();
            for j in 0..nf {
                m[(j, j)] += lambda * scale[j].max(floor);
            }
            let Some(chol) = m.cholesky() else {
                lambda *= nu;
                nu *= 2.0;
                if lambda > 1e16 {
                    return report(x, cost, iter, Termination::Stalled);
                }
                if iter >= config.max_iterations {
                    break 'outer;
                }
                continue;
            };
            let delta = chol.solve(&(-&g));
            let mut xn = x.clone();
            for (j, &i) in idx.iter().enumerate() {
                xn[i] += delta[j];
            }
            problem.project(&mut xn);
            let rn = problem.residuals(&xn);
            let cn = half_sq(&rn);
            if cn.is_finite() && cn < cost {
                let predicted = -(delta.dot(&g) + 0.5 * delta.dot(&(&a * &delta)));
                let rho = if predicted > 0.0 { (cost - cn) / predicted } else { 0.0 };
                lambda *= (1.0 - (2.0 * rho - 1.0).powi(3)).max(1.0 / 3.0);
                nu = 2.0;
                let decrease = cost - cn;
                let xnorm = idx.iter().map(|&i| x[i] * x[i]).sum::<f64>().sqrt();
                let step = delta.norm();
                x = xn;
                cost = cn;
                // Heavy damping also makes the decrease small, so the undamped
                // model must agree that little is left to gain.
                if decrease <= config.cost_tolerance * cost && undamped_gain(&a, &g, floor) <= config.cost_tolerance * cost {
                    return report(x, cost, iter, Termination::CostConverged);
                }
                if step <= config.step_tolerance * (xnorm + config.step_tolerance) {
                    return report(x, cost, iter, Termination::StepConverged);
                }
                let (r2, j2) = problem.jacobian(&x);
                r = r2;
                jac = j2;
                continue 'outer;
            }
            lambda *= nu;
            nu *= 2.0;
            if lambda > 1e16 {
                return report(x, cost, iter, Termination::Stalled);
            }
            if iter >= config.max_iterations {
                break 'outer;
            }
        }
    }
    report(x, cost, iter, Termination::MaxIterations)
}
