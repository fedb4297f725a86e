//! Points on the probability simplex and the dataset-to-domain profile.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Tolerance on the sum-to-one invariant of a [`Mixture`].
pub const SIMPLEX_TOL: f64 = 1e-9;

/// Sampling proportions over `n >= 2` training datasets.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct Mixture(Vec<f64>);

impl Mixture {
    /// Validates `weights` without renormalizing them.
    pub fn new(weights: Vec<f64>) -> Result<Self> {
        if weights.len() < 2 {
            return Err(Error::TooFewEntries(weights.len()));
        }
        for (index, &value) in weights.iter().enumerate() {
            if !value.is_finite() {
                return Err(Error::InvalidMixture(format!("entry {index} is not finite")));
            }
            if value < 0.0 {
                return Err(Error::NegativeWeight { index, value });
            }
        }
        let total: f64 = weights.iter().sum();
        if (total - 1.0).abs() > SIMPLEX_TOL {
            return Err(Error::InvalidMixture(format!("weights sum to {total}")));
        }
        Ok(Self(weights))
    }

    /// The uniform mixture over `n` datasets.
    pub fn uniform(n: usize) -> Result<Self> {
        make_mixture(&vec![1.0; n])
    }

    pub fn weights(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }
}

impl TryFrom<Vec<f64>> for Mixture {
    type Error = Error;

    fn try_from(value: Vec<f64>) -> Result<Self> {
        Mixture::new(value)
    }
}

impl From<Mixture> for Vec<f64> {
    fn from(m: Mixture) -> Self {
        m.0
    }
}

impl std::ops::Index<usize> for Mixture {
    type Output = f64;

    fn index(&self, index: usize) -> &f64 {
        &self.0[index]
    }
}

/// Normalizes nonnegative `raw` weights onto the simplex.
///
/// The rounding residual `1 - sum` is pushed onto the largest entry so the
/// stored weights sum to one as exactly as floating point allows.
pub fn make_mixture(raw: &[f64]) -> Result<Mixture> {
    if raw.len() < 2 {
        return Err(Error::TooFewEntries(raw.len()));
    }
    if raw.iter().any(|v| !v.is_finite()) {
        return Err(Error::DegenerateSum);
    }
    if let Some((index, &value)) = raw.iter().enumerate().find(|(_, v)| **v < 0.0) {
        return Err(Error::NegativeWeight { index, value });
    }
    let total: f64 = raw.iter().sum();
    if !(total > 0.0) || !total.is_finite() {
        return Err(Error::DegenerateSum);
    }
    let mut weights: Vec<f64> = raw.iter().map(|v| v / total).collect();
    let largest = argmax(&weights);
    for _ in 0..4 {
        let residual = 1.0 - weights.iter().sum::<f64>();
        if residual == 0.0 {
            break;
        }
        weights[largest] = (weights[largest] + residual).max(0.0);
    }
    // Whole-residual corrections can overshoot by an ulp; walk the largest
    // entry one ulp at a time so the sum lands on 1.0 and a second
    // normalization is a no-op.
    for _ in 0..64 {
        let total: f64 = weights.iter().sum();
        if total == 1.0 {
            break;
        }
        weights[largest] = if total < 1.0 { weights[largest].next_up() } else { weights[largest].next_down() };
    }
    // The sequential sum can step over 1.0 entirely. The last entry is
    // added last, so `1 - partial` (exact here) makes it land.
    let last = weights.len() - 1;
    if weights.iter().sum::<f64>() != 1.0 {
        let partial: f64 = weights[..last].iter().sum();
        if partial <= 1.0 {
            weights[last] = 1.0 - partial;
        }
    }
    Mixture::new(weights)
}

fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate() {
        if v > values[best] {
            best = i;
        }
    }
    best
}

/// Multiplies entry `domain_index` by `factor` and rescales the remaining
/// entries by a common ratio so the result stays on the simplex.
pub fn perturb_mixture(r: &Mixture, domain_index: usize, factor: f64) -> Result<Mixture> {
    let n = r.len();
    if domain_index >= n {
        return Err(Error::IndexOutOfRange { index: domain_index, len: n });
    }
    let value = r[domain_index];
    if !(factor > 0.0) || !factor.is_finite() {
        return Err(Error::InfeasibleFactor { factor, value });
    }
    if value >= 1.0 {
        return Err(Error::DegenerateMixture(domain_index));
    }
    let target = factor * value;
    if target > 1.0 {
        return Err(Error::InfeasibleFactor { factor, value });
    }
    let ratio = (1.0 - target) / (1.0 - value);
    let raw: Vec<f64> =
        r.weights().iter().enumerate().map(|(j, &w)| if j == domain_index { target } else { w * ratio }).collect();
    make_mixture(&raw)
}

/// Pool perturbation factors: each dataset's share is raised or lowered
/// by 20% in turn.
pub const POOL_FACTOR_UP: f64 = 1.2;
pub const POOL_FACTOR_DOWN: f64 = 0.8;

/// The reference mixture followed by an up and a down perturbation of every
/// dataset, `2n + 1` mixtures in total. Colliding perturbations are kept.
pub fn mixture_pool(reference: &Mixture, factor_up: f64, factor_down: f64) -> Result<Vec<Mixture>> {
    if !(factor_up > 1.0 && factor_down < 1.0 && factor_down > 0.0) {
        return Err(Error::InvalidRange(format!(
            "pool factors must satisfy up > 1 > down > 0, got ({factor_up}, {factor_down})"
        )));
    }
    let mut pool = Vec::with_capacity(2 * reference.len() + 1);
    pool.push(reference.clone());
    for i in 0..reference.len() {
        pool.push(perturb_mixture(reference, i, factor_up)?);
        pool.push(perturb_mixture(reference, i, factor_down)?);
    }
    Ok(pool)
}

/// Column-stochastic `k x n` matrix: entry `(i, j)` is the share of intrinsic
/// domain `i` inside dataset `j`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<Vec<f64>>", into = "Vec<Vec<f64>>")]
pub struct DomainProfile {
    rows: Vec<Vec<f64>>,
}

impl DomainProfile {
    pub fn new(rows: Vec<Vec<f64>>) -> Result<Self> {
        let k = rows.len();
        if k == 0 {
            return Err(Error::InvalidProfile("no intrinsic domains".into()));
        }
        let n = rows[0].len();
        if n == 0 {
            return Err(Error::InvalidProfile("no datasets".into()));
        }
        for row in &rows {
            if row.len() != n {
                return Err(Error::DimensionMismatch { what: "profile row", expected: n, found: row.len() });
            }
            if row.iter().any(|v| !v.is_finite() || *v < 0.0) {
                return Err(Error::InvalidProfile("entries must be finite and >= 0".into()));
            }
        }
        for j in 0..n {
            let col: f64 = rows.iter().map(|row| row[j]).sum();
            if (col - 1.0).abs() > SIMPLEX_TOL {
                return Err(Error::InvalidProfile(format!("column {j} sums to {col}")));
            }
        }
        Ok(Self { rows })
    }

    /// Builds a profile from per-dataset columns.
    pub fn from_columns(columns: &[Vec<f64>]) -> Result<Self> {
        let n = columns.len();
        let k = columns.first().map_or(0, Vec::len);
        let rows = (0..k).map(|i| (0..n).map(|j| columns[j][i]).collect()).collect();
        Self::new(rows)
    }

    /// Each dataset is its own intrinsic domain.
    pub fn identity(n: usize) -> Result<Self> {
        Self::new((0..n).map(|i| (0..n).map(|j| if i == j { 1.0 } else { 0.0 }).collect()).collect())
    }

    pub fn domains(&self) -> usize {
        self.rows.len()
    }

    pub fn datasets(&self) -> usize {
        self.rows[0].len()
    }

    pub fn rows(&self) -> &[Vec<f64>] {
        &self.rows
    }

    pub fn get(&self, domain: usize, dataset: usize) -> f64 {
        self.rows[domain][dataset]
    }

    /// `eta_i = <t_i, r>` for every intrinsic domain.
    pub fn effective_weights(&self, r: &Mixture) -> Result<Vec<f64>> {
        self.effective_weights_raw(r.weights())
    }

    /// Same as [`effective_weights`](Self::effective_weights) for a raw
    /// weight slice; used by optimizers that iterate on unvalidated vectors.
    pub fn effective_weights_raw(&self, r: &[f64]) -> Result<Vec<f64>> {
        if r.len() != self.datasets() {
            return Err(Error::DimensionMismatch {
                what: "mixture length vs profile columns",
                expected: self.datasets(),
                found: r.len(),
            });
        }
        Ok(self.rows.iter().map(|row| row.iter().zip(r).map(|(t, w)| t * w).sum()).collect())
    }
}

impl TryFrom<Vec<Vec<f64>>> for DomainProfile {
    type Error = Error;

    fn try_from(rows: Vec<Vec<f64>>) -> Result<Self> {
        DomainProfile::new(rows)
    }
}

impl From<DomainProfile> for Vec<Vec<f64>> {
    fn from(p: DomainProfile) -> Self {
        p.rows
    }
}

/// `eta(r)` for a profile; free-function form of
/// [`DomainProfile::effective_weights`].
pub fn effective_weights(profile: &DomainProfile, r: &Mixture) -> Result<Vec<f64>> {
    profile.effective_weights(r)
}

/// All compositions of `steps` into `n` nonnegative parts, in lexicographic
/// ascending order of the part vector.
pub fn compositions(n: usize, steps: usize) -> Vec<Vec<usize>> {
    fn recurse(n: usize, left: usize, prefix: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if prefix.len() + 1 == n {
            prefix.push(left);
            out.push(prefix.clone());
            prefix.pop();
            return;
        }
        for c in 0..=left {
            prefix.push(c);
            recurse(n, left - c, prefix, out);
            prefix.pop();
        }
    }
    let mut out = Vec::new();
    if n == 0 {
        return out;
    }
    recurse(n, steps, &mut Vec::with_capacity(n), &mut out);
    out
}
