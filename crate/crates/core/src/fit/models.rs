//! Raw-parameter encodings of the three laws for the least-squares solver.
//!
//! Every decoded bundle satisfies its invariants by construction:
//! positivity through `exp`, the unit interval through the logistic, and
//! column-stochastic profiles through a softmax over intrinsic domains.

use rand::Rng;

use super::solver::{inverse_softplus, logit, sigmoid, softmax_columns, softplus, Model};
use crate::error::Result;
use crate::laws::{BenchLawParams, CamelParams, DmlParams};
use crate::mixture::DomainProfile;
use crate::rng;

/// Keeps an `exp`-transformed magnitude inside the positive normal range
/// so an underflowed or overflowed coefficient still decodes to a valid law.
fn positive(v: f64) -> f64 {
    if v.is_nan() {
        v
    } else {
        v.clamp(f64::MIN_POSITIVE, f64::MAX)
    }
}

pub(crate) const BETA_MIN: f64 = 1e-3;
pub(crate) const BETA_MAX: f64 = 10.0;
const ALPHA_EDGE: f64 = 1e-12;

/// CAMEL over points `(r, M)`, with `M` measured relative to `m_ref`.
pub(crate) struct CamelModel {
    pub k: usize,
    pub n: usize,
    pub free_offset: bool,
    pub m_ref: f64,
    pub mixtures: Vec<Vec<f64>>,
    pub log_m: Vec<f64>,
    pub targets: Vec<f64>,
    pub weights: Vec<f64>,
}

struct CamelDecoded {
    c: f64,
    dc: f64,
    kc: Vec<f64>,
    alpha: Vec<f64>,
    beta: Vec<f64>,
    dbeta: Vec<f64>,
    t: Vec<Vec<f64>>,
}

impl CamelModel {
    pub fn new(
        k: usize,
        free_offset: bool,
        mixtures: Vec<Vec<f64>>,
        scales: &[f64],
        targets: Vec<f64>,
        weights: Vec<f64>,
    ) -> Self {
        let log_ref: f64 = scales.iter().zip(&weights).map(|(m, w)| w * m.ln()).sum();
        let m_ref = log_ref.exp();
        Self {
            k,
            n: mixtures[0].len(),
            free_offset,
            m_ref,
            log_m: scales.iter().map(|m| m.ln() - log_ref).collect(),
            mixtures,
            targets,
            weights,
        }
    }

    fn decode(&self, theta: &[f64]) -> CamelDecoded {
        let k = self.k;
        let (c, dc) = if self.free_offset { (theta[0], 1.0) } else { (softplus(theta[0]), sigmoid(theta[0])) };
        let kc = theta[1..1 + k].iter().map(|v| v.exp()).collect();
        let alpha = theta[1 + k..1 + 2 * k].iter().map(|v| sigmoid(*v).clamp(ALPHA_EDGE, 1.0 - ALPHA_EDGE)).collect();
        let mut beta = Vec::with_capacity(k);
        let mut dbeta = Vec::with_capacity(k);
        for v in &theta[1 + 2 * k..1 + 3 * k] {
            let b = v.exp();
            if b < BETA_MIN {
                beta.push(BETA_MIN);
                dbeta.push(0.0);
            } else if b > BETA_MAX {
                beta.push(BETA_MAX);
                dbeta.push(0.0);
            } else {
                beta.push(b);
                dbeta.push(b);
            }
        }
        let t = softmax_columns(&theta[1 + 3 * k..], k, self.n);
        CamelDecoded { c, dc, kc, alpha, beta, dbeta, t }
    }

    pub fn to_params(&self, theta: &[f64]) -> Result<CamelParams> {
        let d = self.decode(theta);
        let log_ref = self.m_ref.ln();
        let k = d.kc.iter().zip(&d.beta).map(|(kc, b)| positive(kc * (b * log_ref).exp())).collect();
        CamelParams::new(d.c, k, d.alpha, d.beta, DomainProfile::new(d.t)?, self.free_offset)
    }

    /// The moments start: `C` just under the smallest target, `alpha = 0.5`,
    /// `beta = 0.3`, and `K` sized so the start predicts the mean target
    /// under a uniform profile at the reference scale.
    pub fn warm_start(&self) -> Vec<f64> {
        let k = self.k as f64;
        let lo = self.targets.iter().copied().fold(f64::INFINITY, f64::min);
        let mean: f64 = self.targets.iter().zip(&self.weights).map(|(y, w)| y * w).sum();
        let c0 = if self.free_offset { lo - 0.1 * lo.abs().max(1e-3) } else { 0.9 * lo.max(0.0) };
        let excess = (mean - c0).max(1e-6 * mean.abs().max(1e-6));
        let k0 = excess / k.powf(1.5);
        let mut theta = Vec::with_capacity(self.n_params());
        theta.push(if self.free_offset { c0 } else { inverse_softplus(c0) });
        theta.extend(std::iter::repeat_n(k0.ln(), self.k));
        theta.extend(std::iter::repeat_n(0.0, self.k));
        theta.extend(std::iter::repeat_n(0.3f64.ln(), self.k));
        theta.extend(std::iter::repeat_n(0.0, self.k * self.n));
        theta
    }

    /// Restart 0 perturbs only the profile, which a uniform start would
    /// leave symmetric across domains; later restarts perturb everything.
    pub fn initial(&self, restart: usize, stream: &mut impl Rng) -> Vec<f64> {
        let mut theta = self.warm_start();
        let profile_start = 1 + 3 * self.k;
        let from = if restart == 0 { profile_start } else { 0 };
        for v in &mut theta[from..] {
            *v += rng::normal(stream);
        }
        theta
    }
}

impl Model for CamelModel {
    fn n_params(&self) -> usize {
        1 + 3 * self.k + self.k * self.n
    }

    fn targets(&self) -> &[f64] {
        &self.targets
    }

    fn weights(&self) -> &[f64] {
        &self.weights
    }

    fn evaluate(&self, theta: &[f64], pred: &mut [f64], mut jac: Option<&mut [f64]>) {
        let (k, n) = (self.k, self.n);
        let np = self.n_params();
        let d = self.decode(theta);
        let mut eta = vec![0.0; k];
        let mut g = vec![0.0; k];
        for (p, r) in self.mixtures.iter().enumerate() {
            let ln_m = self.log_m[p];
            for i in 0..k {
                eta[i] = d.t[i].iter().zip(r).map(|(t, w)| t * w).sum();
            }
            let mut value = d.c;
            let row = jac.as_deref_mut().map(|j| &mut j[p * np..(p + 1) * np]);
            match row {
                None => {
                    for i in 0..k {
                        value += d.kc[i] * (-d.alpha[i] * eta[i].ln() - d.beta[i] * ln_m).exp();
                    }
                }
                Some(row) => {
                    row[0] = d.dc;
                    for i in 0..k {
                        let ln_e = eta[i].ln();
                        let term = d.kc[i] * (-d.alpha[i] * ln_e - d.beta[i] * ln_m).exp();
                        value += term;
                        row[1 + i] = term;
                        row[1 + k + i] = -ln_e * term * d.alpha[i] * (1.0 - d.alpha[i]);
                        row[1 + 2 * k + i] = -ln_m * term * d.dbeta[i];
                        g[i] = -d.alpha[i] * term / eta[i];
                    }
                    let base = 1 + 3 * k;
                    for j in 0..n {
                        let mean_g: f64 = (0..k).map(|i| g[i] * d.t[i][j]).sum();
                        for l in 0..k {
                            row[base + l * n + j] = r[j] * d.t[l][j] * (g[l] - mean_g);
                        }
                    }
                }
            }
            pred[p] = value;
        }
    }
}

/// DML over mixtures at one scale.
pub(crate) struct DmlModel {
    pub k: usize,
    pub n: usize,
    pub mixtures: Vec<Vec<f64>>,
    pub targets: Vec<f64>,
    pub weights: Vec<f64>,
}

impl DmlModel {
    pub fn to_params(&self, theta: &[f64]) -> Result<DmlParams> {
        let k = self.k;
        let s = theta[..k].iter().map(|v| positive(v.exp())).collect();
        let c = theta[k..2 * k].to_vec();
        let kexp = theta[2 * k..3 * k].iter().map(|v| positive(v.exp())).collect();
        let t = theta[3 * k..].chunks(self.n).map(|row| row.to_vec()).collect();
        DmlParams::new(s, c, kexp, t)
    }

    /// Unit `S`, `C` carrying 90% of the smallest target, and `Kexp`
    /// carrying the remaining mean, with a flat exponent.
    pub fn warm_start(&self) -> Vec<f64> {
        let k = self.k as f64;
        let lo = self.targets.iter().copied().fold(f64::INFINITY, f64::min);
        let mean: f64 = self.targets.iter().zip(&self.weights).map(|(y, w)| y * w).sum();
        let c0 = 0.9 * lo;
        let kexp0 = ((mean - c0) / k).max(1e-3 * mean.abs().max(1e-6));
        let mut theta = Vec::with_capacity(self.n_params());
        theta.extend(std::iter::repeat_n(0.0, self.k));
        theta.extend(std::iter::repeat_n(c0 / k, self.k));
        theta.extend(std::iter::repeat_n(kexp0.ln(), self.k));
        theta.extend(std::iter::repeat_n(0.0, self.k * self.n));
        theta
    }

    pub fn initial(&self, restart: usize, stream: &mut impl Rng) -> Vec<f64> {
        let mut theta = self.warm_start();
        let from = if restart == 0 { 3 * self.k } else { 0 };
        for v in &mut theta[from..] {
            *v += rng::normal(stream);
        }
        theta
    }
}

impl Model for DmlModel {
    fn n_params(&self) -> usize {
        3 * self.k + self.k * self.n
    }

    fn targets(&self) -> &[f64] {
        &self.targets
    }

    fn weights(&self) -> &[f64] {
        &self.weights
    }

    fn evaluate(&self, theta: &[f64], pred: &mut [f64], mut jac: Option<&mut [f64]>) {
        let (k, n) = (self.k, self.n);
        let np = self.n_params();
        for (p, r) in self.mixtures.iter().enumerate() {
            let mut value = 0.0;
            let mut row = jac.as_deref_mut().map(|j| &mut j[p * np..(p + 1) * np]);
            for i in 0..k {
                let t_row = &theta[3 * k + i * n..3 * k + (i + 1) * n];
                let e = t_row.iter().zip(r).map(|(t, w)| t * w).sum::<f64>().exp();
                let s = theta[i].exp();
                let c = theta[k + i];
                let kexp = theta[2 * k + i].exp();
                value += s * (c + kexp * e);
                if let Some(row) = row.as_deref_mut() {
                    let slope = s * kexp * e;
                    row[i] = s * (c + kexp * e);
                    row[k + i] = s;
                    row[2 * k + i] = slope;
                    for j in 0..n {
                        row[3 * k + i * n + j] = slope * r[j];
                    }
                }
            }
            pred[p] = value;
        }
    }
}

/// The logistic benchmark law over standardized loss vectors.
///
/// Internally `z = sum_l k'_l (L_l - mu_l) / sd_l + B'`; the decoded
/// bundle undoes the standardization.
pub(crate) struct BenchModel {
    pub loss_names: Vec<String>,
    pub mean: Vec<f64>,
    pub sd: Vec<f64>,
    pub features: Vec<Vec<f64>>,
    pub targets: Vec<f64>,
    pub weights: Vec<f64>,
}

impl BenchModel {
    pub fn new(loss_names: Vec<String>, losses: Vec<Vec<f64>>, targets: Vec<f64>, weights: Vec<f64>) -> Self {
        let dims = loss_names.len();
        let mut mean = vec![0.0; dims];
        let mut sd = vec![0.0; dims];
        for l in 0..dims {
            mean[l] = losses.iter().zip(&weights).map(|(x, w)| w * x[l]).sum();
            let var: f64 = losses.iter().zip(&weights).map(|(x, w)| w * (x[l] - mean[l]).powi(2)).sum();
            sd[l] = if var > 0.0 { var.sqrt() } else { 1.0 };
        }
        let features = losses.iter().map(|x| (0..dims).map(|l| (x[l] - mean[l]) / sd[l]).collect()).collect();
        Self { loss_names, mean, sd, features, targets, weights }
    }

    pub fn to_params(&self, theta: &[f64]) -> Result<BenchLawParams> {
        let floor = sigmoid(theta[0]);
        let amp = (1.0 - floor) * sigmoid(theta[1]);
        let coef: Vec<f64> = theta[3..].iter().zip(&self.sd).map(|(k, s)| k / s).collect();
        let offset = theta[2] - coef.iter().zip(&self.mean).map(|(k, m)| k * m).sum::<f64>();
        BenchLawParams::new(amp, offset, floor, coef, self.loss_names.clone())
    }

    /// Floor and range from the observed accuracy span, then a ridge
    /// least-squares fit of the logit of the rescaled accuracies.
    pub fn warm_start(&self) -> Vec<f64> {
        let dims = self.loss_names.len();
        let lo = self.targets.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = self.targets.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let span = (hi - lo).max(1e-3);
        let floor = (lo - 0.05 * span).clamp(1e-4, 0.98);
        let top = (hi + 0.05 * span).clamp(floor + 1e-4, 1.0 - 1e-6);
        let amp = top - floor;
        let mut theta = vec![logit(floor), logit((amp / (1.0 - floor)).clamp(1e-6, 1.0 - 1e-6)), 0.0];
        theta.extend(std::iter::repeat_n(0.0, dims));
        // z = ln(1/y - 1) inverts the logistic tail.
        let z: Vec<f64> = self
            .targets
            .iter()
            .map(|a| {
                let y = ((a - floor) / amp).clamp(0.01, 0.99);
                (1.0 / y - 1.0).ln()
            })
            .collect();
        let q = dims + 1;
        let mut normal = nalgebra::DMatrix::<f64>::zeros(q, q);
        let mut rhs = nalgebra::DVector::<f64>::zeros(q);
        for ((x, zp), w) in self.features.iter().zip(&z).zip(&self.weights) {
            let mut row = Vec::with_capacity(q);
            row.push(1.0);
            row.extend_from_slice(x);
            for a in 0..q {
                rhs[a] += w * row[a] * zp;
                for b in 0..q {
                    normal[(a, b)] += w * row[a] * row[b];
                }
            }
        }
        for a in 1..q {
            normal[(a, a)] += 1e-6;
        }
        if let Some(sol) = normal.cholesky().map(|c| c.solve(&rhs)) {
            if sol.iter().all(|v| v.is_finite()) {
                theta[2] = sol[0];
                theta[3..].copy_from_slice(&sol.as_slice()[1..]);
            }
        }
        theta
    }

    pub fn initial(&self, restart: usize, stream: &mut impl Rng) -> Vec<f64> {
        let mut theta = self.warm_start();
        if restart > 0 {
            for v in &mut theta {
                *v += rng::normal(stream);
            }
        }
        theta
    }
}

impl Model for BenchModel {
    fn n_params(&self) -> usize {
        3 + self.loss_names.len()
    }

    fn targets(&self) -> &[f64] {
        &self.targets
    }

    fn weights(&self) -> &[f64] {
        &self.weights
    }

    fn evaluate(&self, theta: &[f64], pred: &mut [f64], mut jac: Option<&mut [f64]>) {
        let np = self.n_params();
        let floor = sigmoid(theta[0]);
        let share = sigmoid(theta[1]);
        let amp = (1.0 - floor) * share;
        for (p, x) in self.features.iter().enumerate() {
            let z = theta[2] + theta[3..].iter().zip(x).map(|(k, v)| k * v).sum::<f64>();
            let s = crate::laws::logistic_tail(z);
            pred[p] = floor + amp * s;
            if let Some(jac) = jac.as_deref_mut() {
                let row = &mut jac[p * np..(p + 1) * np];
                row[0] = floor * (1.0 - floor) * (1.0 - share * s);
                row[1] = (1.0 - floor) * share * (1.0 - share) * s;
                let dz = -amp * s * (1.0 - s);
                row[2] = dz;
                for (r, v) in row[3..].iter_mut().zip(x) {
                    *r = dz * v;
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{stream, Purpose};

    fn check_jacobian(model: &dyn Model, theta: &[f64]) {
        let np = model.n_params();
        let npts = model.n_points();
        let mut pred = vec![0.0; npts];
        let mut jac = vec![0.0; npts * np];
        model.evaluate(theta, &mut pred, Some(&mut jac));
        let mut plain = vec![0.0; npts];
        model.evaluate(theta, &mut plain, None);
        assert_eq!(pred, plain);
        let h = 1e-6;
        let mut up = vec![0.0; npts];
        let mut down = vec![0.0; npts];
        for q in 0..np {
            let mut t = theta.to_vec();
            t[q] += h;
            model.evaluate(&t, &mut up, None);
            t[q] -= 2.0 * h;
            model.evaluate(&t, &mut down, None);
            for p in 0..npts {
                let fd = (up[p] - down[p]) / (2.0 * h);
                let an = jac[p * np + q];
                let scale = an.abs().max(1e-4 * pred[p].abs()).max(1e-12);
                assert!((fd - an).abs() / scale < 1e-5, "param {q} point {p}: fd {fd} vs {an}");
            }
        }
    }

    fn mixtures(count: usize, n: usize, seed: u64) -> Vec<Vec<f64>> {
        let mut s = stream(seed, Purpose::Instance, 0);
        (0..count).map(|_| rng::flat_dirichlet(&mut s, n)).collect()
    }

    #[test]
    fn camel_jacobian() {
        for free in [false, true] {
            let xs = mixtures(7, 3, 1);
            let scales: Vec<f64> = (0..7).map(|i| 2.0 + i as f64).collect();
            let model = CamelModel::new(2, free, xs, &scales, vec![2.0; 7], vec![1.0 / 7.0; 7]);
            let mut s = stream(2, Purpose::Instance, 1);
            let theta = model.initial(3, &mut s);
            check_jacobian(&model, &theta);
        }
    }

    #[test]
    fn camel_decode_matches_law() {
        let xs = mixtures(5, 3, 3);
        let scales = [3.0, 4.0, 5.0, 6.0, 9.0];
        let model = CamelModel::new(2, false, xs.clone(), &scales, vec![2.0; 5], vec![0.2; 5]);
        let mut s = stream(4, Purpose::Instance, 1);
        let theta = model.initial(1, &mut s);
        let params = model.to_params(&theta).unwrap();
        let mut pred = vec![0.0; 5];
        model.evaluate(&theta, &mut pred, None);
        for (p, r) in xs.iter().enumerate() {
            let direct = params.eval_raw(r, scales[p]).unwrap();
            assert!((direct - pred[p]).abs() < 1e-12 * direct.abs());
        }
    }

    #[test]
    fn dml_jacobian_and_decode() {
        let xs = mixtures(6, 4, 5);
        let model = DmlModel { k: 3, n: 4, mixtures: xs.clone(), targets: vec![2.5; 6], weights: vec![1.0 / 6.0; 6] };
        let mut s = stream(6, Purpose::Instance, 1);
        let theta = model.initial(2, &mut s);
        check_jacobian(&model, &theta);
        let params = model.to_params(&theta).unwrap();
        let mut pred = vec![0.0; 6];
        model.evaluate(&theta, &mut pred, None);
        for (p, r) in xs.iter().enumerate() {
            assert!((params.eval_raw(r).unwrap() - pred[p]).abs() < 1e-12 * pred[p].abs());
        }
    }

    #[test]
    fn bench_jacobian_and_decode() {
        let losses =
            mixtures(8, 3, 7).into_iter().map(|v| v.iter().map(|x| 2.0 + x).collect()).collect::<Vec<Vec<f64>>>();
        let names = vec!["a".to_string(), "b".into(), "c".into()];
        let model =
            BenchModel::new(names, losses.clone(), (0..8).map(|i| 0.3 + 0.05 * i as f64).collect(), vec![0.125; 8]);
        let mut s = stream(8, Purpose::Instance, 1);
        let theta = model.initial(1, &mut s);
        check_jacobian(&model, &theta);
        let params = model.to_params(&theta).unwrap();
        let mut pred = vec![0.0; 8];
        model.evaluate(&theta, &mut pred, None);
        for (p, l) in losses.iter().enumerate() {
            assert!((params.accuracy(l).unwrap() - pred[p]).abs() < 1e-12);
        }
    }
}
