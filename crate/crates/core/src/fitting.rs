//! Small damped least-squares engine shared by the beam and ring-profile
//! fits. Gauss-Newton steps with multiplicative Levenberg damping on the
//! normal equations: damping doubles on a rejected step and halves on an
//! accepted one, so the objective is non-increasing by construction.

/// A separable least-squares problem over a fixed parameter vector.
pub(crate) trait LeastSquaresProblem {
    fn param_count(&self) -> usize;

    /// Sum of squared residuals at `params`, or `None` if infeasible
    /// (e.g. a non-positive width).
    fn cost(&self, params: &[f64]) -> Option<f64>;

    /// Accumulate the normal equations at `params`: `jtj` is
    /// `param_count x param_count` row-major, `jtr` is the gradient term
    /// `J^T r`. Returns the cost, or `None` if infeasible.
    fn normal_equations(&self, params: &[f64], jtj: &mut [f64], jtr: &mut [f64]) -> Option<f64>;
}

pub(crate) struct LmOutcome {
    pub params: Vec<f64>,
    /// Accepted objective values, one per iteration; non-increasing.
    pub cost_history: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
    pub final_cost: f64,
}

const DAMPING_INIT: f64 = 1e-3;
const DAMPING_GROW: f64 = 2.0;
const DAMPING_SHRINK: f64 = 0.5;
const DAMPING_MAX: f64 = 1e12;
const STEP_TOL: f64 = 1e-11;
const COST_TOL: f64 = 1e-14;

pub(crate) fn levenberg_marquardt(
    problem: &impl LeastSquaresProblem,
    initial: &[f64],
    max_iterations: usize,
) -> LmOutcome {
    let n = problem.param_count();
    assert_eq!(initial.len(), n);
    let mut params = initial.to_vec();
    let mut cost = match problem.cost(&params) {
        Some(c) => c,
        None => {
            return LmOutcome {
                params,
                cost_history: Vec::new(),
                iterations: 0,
                converged: false,
                final_cost: f64::INFINITY,
            }
        }
    };
    let mut damping = DAMPING_INIT;
    let mut history = Vec::with_capacity(max_iterations.min(64));
    let mut jtj = vec![0.0; n * n];
    let mut jtr = vec![0.0; n];
    let mut converged = false;
    let mut iterations = 0;

    for _ in 0..max_iterations {
        iterations += 1;
        let ok = problem.normal_equations(&params, &mut jtj, &mut jtr);
        debug_assert!(ok.is_some(), "normal equations at an accepted point");
        if ok.is_none() {
            break;
        }

        // Inner damping loop: grow damping until a step lowers the cost.
        let mut accepted = false;
        while damping <= DAMPING_MAX {
            let mut system = jtj.clone();
            for k in 0..n {
                let diag = jtj[k * n + k].max(1e-300);
                system[k * n + k] = jtj[k * n + k] + damping * diag;
            }
            let mut step = jtr.clone();
            for s in step.iter_mut() {
                *s = -*s;
            }
            if !solve_in_place(&mut system, &mut step, n) {
                damping *= DAMPING_GROW;
                continue;
            }
            let trial: Vec<f64> = params.iter().zip(&step).map(|(p, s)| p + s).collect();
            match problem.cost(&trial) {
                Some(trial_cost) if trial_cost.is_finite() && trial_cost <= cost => {
                    let step_norm: f64 = step.iter().map(|s| s * s).sum::<f64>().sqrt();
                    let param_norm: f64 =
                        params.iter().map(|p| p * p).sum::<f64>().sqrt().max(1e-30);
                    let cost_drop = cost - trial_cost;
                    params = trial;
                    cost = trial_cost;
                    damping = (damping * DAMPING_SHRINK).max(1e-15);
                    accepted = true;
                    if step_norm < STEP_TOL * param_norm
                        || cost_drop <= COST_TOL * cost.max(1e-300)
                    {
                        converged = true;
                    }
                    break;
                }
                _ => damping *= DAMPING_GROW,
            }
        }
        history.push(cost);
        if !accepted || converged {
            converged = converged || !accepted && cost_is_stationary(&history);
            break;
        }
    }

    LmOutcome {
        params,
        cost_history: history,
        iterations,
        converged,
        final_cost: cost,
    }
}

// A fully rejected sweep at max damping on a flat objective still counts as
// stationary when the last accepted costs agree.
fn cost_is_stationary(history: &[f64]) -> bool {
    match history {
        [.., a, b] => (a - b).abs() <= COST_TOL * a.abs().max(1e-300),
        _ => false,
    }
}

/// Gaussian elimination with partial pivoting; `a` is n x n row-major and
/// `b` the right-hand side, overwritten with the solution.
fn solve_in_place(a: &mut [f64], b: &mut [f64], n: usize) -> bool {
    for col in 0..n {
        let mut pivot = col;
        for row in col + 1..n {
            if a[row * n + col].abs() > a[pivot * n + col].abs() {
                pivot = row;
            }
        }
        if a[pivot * n + col].abs() < 1e-300 {
            return false;
        }
        if pivot != col {
            for k in 0..n {
                a.swap(col * n + k, pivot * n + k);
            }
            b.swap(col, pivot);
        }
        let inv = 1.0 / a[col * n + col];
        for row in col + 1..n {
            let factor = a[row * n + col] * inv;
            if factor == 0.0 {
                continue;
            }
            for k in col..n {
                a[row * n + k] -= factor * a[col * n + k];
            }
            b[row] -= factor * b[col];
        }
    }
    for col in (0..n).rev() {
        let mut sum = b[col];
        for k in col + 1..n {
            sum -= a[col * n + k] * b[k];
        }
        b[col] = sum / a[col * n + col];
    }
    true
}

#[cfg(test)]
mod tests {
    use super::*;

    struct Quadratic {
        // residuals r_k = p0 * x_k + p1 - y_k
        xs: Vec<f64>,
        ys: Vec<f64>,
    }

    impl LeastSquaresProblem for Quadratic {
        fn param_count(&self) -> usize {
            2
        }
        fn cost(&self, p: &[f64]) -> Option<f64> {
            Some(
                self.xs
                    .iter()
                    .zip(&self.ys)
                    .map(|(x, y)| (p[0] * x + p[1] - y).powi(2))
                    .sum(),
            )
        }
        fn normal_equations(&self, p: &[f64], jtj: &mut [f64], jtr: &mut [f64]) -> Option<f64> {
            jtj.fill(0.0);
            jtr.fill(0.0);
            let mut cost = 0.0;
            for (x, y) in self.xs.iter().zip(&self.ys) {
                let r = p[0] * x + p[1] - y;
                let grad = [*x, 1.0];
                for i in 0..2 {
                    jtr[i] += grad[i] * r;
                    for j in 0..2 {
                        jtj[i * 2 + j] += grad[i] * grad[j];
                    }
                }
                cost += r * r;
            }
            Some(cost)
        }
    }

    #[test]
    fn fits_exact_line() {
        let xs: Vec<f64> = (0..20).map(|k| k as f64 * 0.3).collect();
        let ys: Vec<f64> = xs.iter().map(|x| 2.5 * x - 1.25).collect();
        let out = levenberg_marquardt(&Quadratic { xs, ys }, &[0.0, 0.0], 100);
        assert!(out.converged);
        assert!((out.params[0] - 2.5).abs() < 1e-8);
        assert!((out.params[1] + 1.25).abs() < 1e-8);
    }

    #[test]
    fn cost_history_non_increasing() {
        let xs: Vec<f64> = (0..50).map(|k| k as f64 * 0.1).collect();
        let ys: Vec<f64> = xs
            .iter()
            .enumerate()
            .map(|(k, x)| 1.3 * x + 0.4 + if k % 2 == 0 { 0.05 } else { -0.05 })
            .collect();
        let out = levenberg_marquardt(&Quadratic { xs, ys }, &[10.0, -10.0], 100);
        for w in out.cost_history.windows(2) {
            assert!(w[1] <= w[0] * (1.0 + 1e-12));
        }
    }

    #[test]
    fn linear_solver_pivots() {
        let mut a = vec![0.0, 2.0, 1.0, 0.0];
        let mut b = vec![4.0, 3.0];
        assert!(solve_in_place(&mut a, &mut b, 2));
        assert!((b[0] - 3.0).abs() < 1e-12);
        assert!((b[1] - 2.0).abs() < 1e-12);
    }
}
