//! Weighted least-squares machinery shared by every fitter: an Adam phase
//! on the mean squared error, then a Levenberg-Marquardt polish from the
//! best Adam iterate.

use nalgebra::{DMatrix, DVector};

/// A least-squares model over unconstrained raw parameters.
pub(crate) trait Model: Sync {
    fn n_params(&self) -> usize;
    fn targets(&self) -> &[f64];
    /// Point weights; they sum to one.
    fn weights(&self) -> &[f64];
    /// Writes predictions into `pred` and, when asked, the row-major
    /// Jacobian `d pred_p / d theta_q` into `jac`.
    fn evaluate(&self, theta: &[f64], pred: &mut [f64], jac: Option<&mut [f64]>);

    fn n_points(&self) -> usize {
        self.targets().len()
    }
}

pub(crate) struct Settings {
    pub iterations: usize,
    pub step: f64,
    pub polish_iterations: usize,
}

#[derive(Clone)]
pub(crate) struct Outcome {
    pub theta: Vec<f64>,
    pub initial_error: f64,
    pub error: f64,
    pub converged: bool,
}

struct Scratch {
    pred: Vec<f64>,
    jac: Vec<f64>,
}

impl Scratch {
    fn new(model: &dyn Model) -> Self {
        Self { pred: vec![0.0; model.n_points()], jac: vec![0.0; model.n_points() * model.n_params()] }
    }
}

fn weighted_error(model: &dyn Model, pred: &[f64]) -> f64 {
    let err: f64 = pred.iter().zip(model.targets()).zip(model.weights()).map(|((p, y), w)| w * (p - y) * (p - y)).sum();
    if err.is_finite() {
        err
    } else {
        f64::INFINITY
    }
}

fn error_only(model: &dyn Model, theta: &[f64], s: &mut Scratch) -> f64 {
    model.evaluate(theta, &mut s.pred, None);
    weighted_error(model, &s.pred)
}

/// Error and its gradient with respect to `theta`.
fn error_and_grad(model: &dyn Model, theta: &[f64], s: &mut Scratch, grad: &mut [f64]) -> f64 {
    model.evaluate(theta, &mut s.pred, Some(&mut s.jac));
    let err = weighted_error(model, &s.pred);
    let np = model.n_params();
    grad.iter_mut().for_each(|g| *g = 0.0);
    for (p, ((pred, y), w)) in s.pred.iter().zip(model.targets()).zip(model.weights()).enumerate() {
        let coef = 2.0 * w * (pred - y);
        for (g, j) in grad.iter_mut().zip(&s.jac[p * np..(p + 1) * np]) {
            *g += coef * j;
        }
    }
    err
}

const BETA1: f64 = 0.9;
const BETA2: f64 = 0.999;
const ADAM_EPS: f64 = 1e-8;
const FINAL_STEP_FRACTION: f64 = 0.01;

/// The Adam phase from `theta0`. The returned error never exceeds the
/// error at `theta0`, since the best iterate seen is what is kept.
pub(crate) fn adam(model: &dyn Model, theta0: Vec<f64>, settings: &Settings) -> Outcome {
    let np = model.n_params();
    let mut s = Scratch::new(model);
    let mut grad = vec![0.0; np];
    let mut m = vec![0.0; np];
    let mut v = vec![0.0; np];
    let mut theta = theta0;
    let initial_error = error_only(model, &theta, &mut s);
    let mut best = theta.clone();
    let mut best_err = initial_error;

    for t in 1..=settings.iterations {
        let err = error_and_grad(model, &theta, &mut s, &mut grad);
        if !err.is_finite() || grad.iter().any(|g| !g.is_finite()) {
            break;
        }
        if err < best_err {
            best_err = err;
            best.copy_from_slice(&theta);
        }
        let progress = (t - 1) as f64 / settings.iterations as f64;
        let cosine = 0.5 * (1.0 + (std::f64::consts::PI * progress).cos());
        let lr = settings.step * (FINAL_STEP_FRACTION + (1.0 - FINAL_STEP_FRACTION) * cosine);
        let c1 = 1.0 - BETA1.powi(t as i32);
        let c2 = 1.0 - BETA2.powi(t as i32);
        for q in 0..np {
            m[q] = BETA1 * m[q] + (1.0 - BETA1) * grad[q];
            v[q] = BETA2 * v[q] + (1.0 - BETA2) * grad[q] * grad[q];
            theta[q] -= lr * (m[q] / c1) / ((v[q] / c2).sqrt() + ADAM_EPS);
        }
    }
    let last = error_only(model, &theta, &mut s);
    if last < best_err {
        best_err = last;
        best.copy_from_slice(&theta);
    }
    Outcome { theta: best, initial_error, error: best_err, converged: false }
}

/// Levenberg-Marquardt refinement of an Adam outcome.
pub(crate) fn refine(model: &dyn Model, start: Outcome, settings: &Settings) -> Outcome {
    if !start.error.is_finite() {
        return start;
    }
    let mut s = Scratch::new(model);
    let (theta, error, converged) = polish(model, start.theta, start.error, settings.polish_iterations, &mut s);
    Outcome { theta, initial_error: start.initial_error, error, converged }
}

const REL_TOL: f64 = 1e-13;
const ZERO_ERROR: f64 = 1e-26;
const LAMBDA_MAX: f64 = 1e14;

/// Levenberg-Marquardt with Marquardt diagonal scaling. Returns the final
/// parameters, error and whether a convergence test (not the iteration
/// cap) ended the loop.
fn polish(
    model: &dyn Model,
    mut theta: Vec<f64>,
    mut err: f64,
    iterations: usize,
    s: &mut Scratch,
) -> (Vec<f64>, f64, bool) {
    let np = model.n_params();
    let npts = model.n_points();
    let mut lambda = 1e-3;
    let mut trial = vec![0.0; np];
    // An error this far below the targets' magnitude is zero to working
    // precision.
    let mean_square: f64 = model.targets().iter().zip(model.weights()).map(|(y, w)| w * y * y).sum();
    let floor = ZERO_ERROR * mean_square;
    if err <= floor {
        return (theta, err, true);
    }
    for _ in 0..iterations {
        model.evaluate(&theta, &mut s.pred, Some(&mut s.jac));
        let jac = DMatrix::from_row_slice(npts, np, &s.jac);
        let mut weighted = jac.clone();
        let mut wres = DVector::zeros(npts);
        for p in 0..npts {
            let w = model.weights()[p];
            weighted.row_mut(p).scale_mut(w);
            wres[p] = w * (s.pred[p] - model.targets()[p]);
        }
        let normal = jac.transpose() * &weighted;
        let rhs = -(jac.transpose() * wres);
        if rhs.iter().any(|g| !g.is_finite()) || normal.iter().any(|h| !h.is_finite()) {
            return (theta, err, false);
        }
        let diag_floor = 1e-12 * normal.diagonal().max().max(f64::MIN_POSITIVE);
        let mut accepted = false;
        while lambda <= LAMBDA_MAX {
            let mut damped = normal.clone();
            for q in 0..np {
                damped[(q, q)] += lambda * (normal[(q, q)] + diag_floor);
            }
            if let Some(chol) = damped.cholesky() {
                let step = chol.solve(&rhs);
                for q in 0..np {
                    trial[q] = theta[q] + step[q];
                }
                let trial_err = error_only(model, &trial, s);
                if trial_err < err {
                    let gain = (err - trial_err) / err;
                    theta.copy_from_slice(&trial);
                    err = trial_err;
                    lambda = (lambda / 3.0).max(1e-12);
                    accepted = true;
                    if gain < REL_TOL || err <= floor {
                        return (theta, err, true);
                    }
                    break;
                }
            }
            lambda *= 4.0;
        }
        if !accepted {
            // No damping level improves the error: a stationary point to
            // working precision.
            return (theta, err, true);
        }
    }
    (theta, err, false)
}

pub(crate) fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

pub(crate) fn softplus(x: f64) -> f64 {
    if x > 30.0 {
        x
    } else {
        x.exp().ln_1p()
    }
}

pub(crate) fn inverse_softplus(y: f64) -> f64 {
    if y > 30.0 {
        y
    } else if y < 1e-12 {
        y.max(f64::MIN_POSITIVE).ln()
    } else {
        y.exp_m1().ln()
    }
}

pub(crate) fn logit(p: f64) -> f64 {
    (p / (1.0 - p)).ln()
}

/// Column-wise softmax over the first index of a row-major `k x n` block.
pub(crate) fn softmax_columns(z: &[f64], k: usize, n: usize) -> Vec<Vec<f64>> {
    let mut t = vec![vec![0.0; n]; k];
    for j in 0..n {
        let top = (0..k).map(|i| z[i * n + j]).fold(f64::NEG_INFINITY, f64::max);
        let total: f64 = (0..k).map(|i| (z[i * n + j] - top).exp()).sum();
        for (i, row) in t.iter_mut().enumerate() {
            row[j] = (z[i * n + j] - top).exp() / total;
        }
    }
    t
}

#[cfg(test)]
mod tests {
    use super::*;

    /// `y = c + a x^2`, linear in the parameters.
    struct Quadratic {
        xs: Vec<f64>,
        ys: Vec<f64>,
        ws: Vec<f64>,
    }

    impl Model for Quadratic {
        fn n_params(&self) -> usize {
            2
        }
        fn targets(&self) -> &[f64] {
            &self.ys
        }
        fn weights(&self) -> &[f64] {
            &self.ws
        }
        fn evaluate(&self, theta: &[f64], pred: &mut [f64], jac: Option<&mut [f64]>) {
            for (p, x) in self.xs.iter().enumerate() {
                pred[p] = theta[0] + theta[1] * x * x;
            }
            if let Some(jac) = jac {
                for (p, x) in self.xs.iter().enumerate() {
                    jac[2 * p] = 1.0;
                    jac[2 * p + 1] = x * x;
                }
            }
        }
    }

    #[test]
    fn recovers_linear_model() {
        let xs: Vec<f64> = (0..10).map(|i| i as f64 / 3.0).collect();
        let ys = xs.iter().map(|x| 1.5 - 0.25 * x * x).collect();
        let model = Quadratic { ws: vec![0.1; 10], xs, ys };
        let settings = Settings { iterations: 50, step: 0.05, polish_iterations: 50 };
        let out = refine(&model, adam(&model, vec![0.0, 0.0], &settings), &settings);
        assert!(out.error < 1e-20, "{}", out.error);
        assert!(out.error <= out.initial_error);
        assert!((out.theta[0] - 1.5).abs() < 1e-9 && (out.theta[1] + 0.25).abs() < 1e-9);
        assert!(out.converged);
    }

    #[test]
    fn transforms() {
        assert_eq!(sigmoid(0.0), 0.5);
        assert!(sigmoid(-800.0) >= 0.0 && sigmoid(800.0) == 1.0);
        for y in [1e-6, 0.3, 2.0, 50.0] {
            assert!((softplus(inverse_softplus(y)) - y).abs() <= 1e-12 * y.max(1.0));
        }
        assert!((sigmoid(logit(0.2)) - 0.2).abs() < 1e-15);
        let t = softmax_columns(&[0.0, 1.0, 0.0, 0.0], 2, 2);
        for j in 0..2 {
            assert!((t[0][j] + t[1][j] - 1.0).abs() < 1e-15);
        }
        assert!(t[0][0] == t[1][0] && t[0][1] > t[1][1]);
    }
}
