//! The three parametric laws and their composition into a benchmark objective.

mod bench;
mod camel;
mod dml;

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

pub use bench::{bench_accuracy, logistic_tail, proxy_loss, BenchGrad, BenchLawParams};
pub use camel::{camel_eval, CamelGrad, CamelParams};
pub use dml::{dml_eval, DmlGrad, DmlParams};

use crate::error::{Error, Result};
use crate::mixture::Mixture;
use crate::records::ObjectiveWeights;

/// A benchmark law paired with the CAMEL law fitted to its proxy loss.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchEntry {
    pub bench: BenchLawParams,
    pub proxy: CamelParams,
}

/// Named benchmark entries feeding a weighted objective.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct BenchSuite {
    pub benchmarks: BTreeMap<String, BenchEntry>,
}

impl BenchSuite {
    pub fn insert(&mut self, name: impl Into<String>, bench: BenchLawParams, proxy: CamelParams) {
        self.benchmarks.insert(name.into(), BenchEntry { bench, proxy });
    }

    pub fn get(&self, name: &str) -> Option<&BenchEntry> {
        self.benchmarks.get(name)
    }

    pub fn datasets(&self) -> Option<usize> {
        self.benchmarks.values().next().map(|e| e.proxy.datasets())
    }
}

/// End-to-end accuracy: the CAMEL proxy prediction replaces `k_b . L`
/// inside the logistic law.
pub fn predicted_accuracy(bench: &BenchLawParams, proxy_camel: &CamelParams, r: &Mixture, m: f64) -> Result<f64> {
    Ok(bench.accuracy_from_proxy(proxy_camel.eval(r, m)?))
}

/// `sum_b w_b * Acc_b(r, M)` over the benchmarks with positive weight.
pub fn weighted_objective(benches: &BenchSuite, w: &ObjectiveWeights, r: &Mixture, m: f64) -> Result<f64> {
    weighted_objective_raw(benches, w, r.weights(), m, None)
}

/// Weighted objective on a raw weight slice; when `grad` is given it
/// receives the gradient with respect to the mixture weights.
pub fn weighted_objective_raw(
    benches: &BenchSuite,
    w: &ObjectiveWeights,
    r: &[f64],
    m: f64,
    mut grad: Option<&mut [f64]>,
) -> Result<f64> {
    if let Some(g) = grad.as_deref_mut() {
        g.iter_mut().for_each(|v| *v = 0.0);
    }
    let mut total = 0.0;
    for (name, weight) in w.iter() {
        if weight == 0.0 {
            continue;
        }
        let entry = benches.get(name).ok_or_else(|| Error::MissingBenchmark(name.to_string()))?;
        match grad.as_deref_mut() {
            Some(g) => {
                let cg = entry.proxy.eval_grad(r, m)?;
                total += weight * entry.bench.accuracy_from_proxy(cg.value);
                let slope = weight * entry.bench.accuracy_slope(cg.value);
                for (gj, dj) in g.iter_mut().zip(&cg.d_r) {
                    *gj += slope * dj;
                }
            }
            None => {
                total += weight * entry.bench.accuracy_from_proxy(entry.proxy.eval_raw(r, m)?);
            }
        }
    }
    Ok(total)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mixture::{make_mixture, DomainProfile};

    fn unit_camel() -> CamelParams {
        CamelParams::new(1.0, vec![1.0], vec![0.5], vec![1.0], DomainProfile::new(vec![vec![1.0, 1.0]]).unwrap(), false)
            .unwrap()
    }

    #[test]
    fn camel_examples() {
        let r = make_mixture(&[1.0, 0.0]).unwrap();
        assert_eq!(unit_camel().eval(&r, 1.0).unwrap(), 2.0);

        // Formula check at eta = (0.25, 0.5); alpha_2 = 1 sits outside the
        // fitted-parameter domain, so the bundle is built without validation.
        let p = CamelParams {
            c: 0.5,
            k: vec![1.0, 2.0],
            alpha: vec![0.5, 1.0],
            beta: vec![1.0, 0.5],
            profile: DomainProfile::identity(2).unwrap(),
            free_offset: false,
        };
        assert!((p.eval_eta(&[0.25, 0.5], 4.0).unwrap() - 3.0).abs() < 1e-15);

        let m1 = unit_camel().eval(&r, 2.0).unwrap();
        let m2 = unit_camel().eval(&r, 3.0).unwrap();
        assert!(m1 > m2);
    }

    #[test]
    fn camel_zero_weight_is_an_error() {
        let p = CamelParams::new(
            0.0,
            vec![1.0, 1.0],
            vec![0.5, 0.5],
            vec![0.5, 0.5],
            DomainProfile::identity(2).unwrap(),
            false,
        )
        .unwrap();
        let r = make_mixture(&[1.0, 0.0]).unwrap();
        assert!(matches!(p.eval(&r, 2.0), Err(Error::ZeroEffectiveWeight { domain: 1 })));
    }

    #[test]
    fn camel_validation() {
        let t = DomainProfile::identity(2).unwrap();
        assert!(CamelParams::new(-0.1, vec![1.0; 2], vec![0.5; 2], vec![0.5; 2], t.clone(), false).is_err());
        assert!(CamelParams::new(-0.1, vec![1.0; 2], vec![0.5; 2], vec![0.5; 2], t.clone(), true).is_ok());
        assert!(CamelParams::new(0.1, vec![1.0; 2], vec![1.0; 2], vec![0.5; 2], t.clone(), false).is_err());
        assert!(CamelParams::new(0.1, vec![0.0; 2], vec![0.5; 2], vec![0.5; 2], t.clone(), false).is_err());
        assert!(CamelParams::new(0.1, vec![1.0; 3], vec![0.5; 2], vec![0.5; 2], t, false).is_err());
    }

    #[test]
    fn dml_examples() {
        let r = make_mixture(&[0.3, 0.7]).unwrap();
        let a = DmlParams::new(vec![1.0], vec![2.0], vec![1.0], vec![vec![0.0, 0.0]]).unwrap();
        assert_eq!(a.eval(&r).unwrap(), 3.0);
        let ln2 = 2f64.ln();
        let b = DmlParams::new(vec![2.0], vec![0.0], vec![1.0], vec![vec![ln2, ln2]]).unwrap();
        assert!((b.eval(&r).unwrap() - 4.0).abs() < 1e-12);
        let both = DmlParams::new(vec![1.0, 2.0], vec![2.0, 0.0], vec![1.0, 1.0], vec![vec![0.0, 0.0], vec![ln2, ln2]])
            .unwrap();
        assert!((both.eval(&r).unwrap() - (a.eval(&r).unwrap() + b.eval(&r).unwrap())).abs() < 1e-12);
    }

    fn law(floor: f64, amp: f64, offset: f64, coef: Vec<f64>) -> BenchLawParams {
        let names = (0..coef.len()).map(|i| format!("v{i}")).collect();
        BenchLawParams::new(amp, offset, floor, coef, names).unwrap()
    }

    #[test]
    fn bench_examples() {
        let p = law(0.2, 0.5, 0.0, vec![0.0, 0.0]);
        assert_eq!(p.accuracy(&[3.0, 1.0]).unwrap(), 0.2 + 0.25);
        let p = law(0.25, 0.6, 0.0, vec![1.0, -1.0]);
        assert!((p.accuracy(&[2.0, 2.0]).unwrap() - 0.55).abs() < 1e-15);
        assert_eq!(p.accuracy(&[1e6, 0.0]).unwrap(), 0.25);
        assert_eq!(p.accuracy(&[-1e6, 0.0]).unwrap(), 0.85);
        assert!(matches!(p.accuracy(&[1.0]), Err(Error::DimensionMismatch { .. })));
        assert!(BenchLawParams::new(0.8, 0.0, 0.3, vec![1.0], vec!["v".into()]).is_err());
    }

    #[test]
    fn proxy_examples() {
        assert_eq!(law(0.0, 1.0, 0.0, vec![0.0, 0.0]).proxy(&[5.0, 7.0]).unwrap(), 0.0);
        assert_eq!(law(0.0, 1.0, 0.0, vec![1.0, -1.0]).proxy(&[2.0, 2.0]).unwrap(), 0.0);
        assert_eq!(law(0.0, 1.0, 0.0, vec![0.5, 0.5]).proxy(&[3.0, 1.0]).unwrap(), 2.0);
    }

    #[test]
    fn predicted_accuracy_cancels_offset() {
        let camel = unit_camel();
        let r = make_mixture(&[1.0, 0.0]).unwrap();
        let proxy = camel.eval(&r, 1.0).unwrap();
        let b = law(0.1, 0.8, -proxy, vec![1.0]);
        let acc = predicted_accuracy(&b, &camel, &r, 1.0).unwrap();
        assert!((acc - 0.5).abs() < 1e-15);
    }

    #[test]
    fn weighted_objective_examples() {
        let camel = unit_camel();
        let r = make_mixture(&[0.5, 0.5]).unwrap();
        let mut suite = BenchSuite::default();
        suite.insert("a", law(0.1, 0.8, -1.0, vec![1.0]), camel.clone());
        suite.insert("b", law(0.3, 0.2, 0.5, vec![1.0]), camel.clone());
        let single = weighted_objective(&suite, &ObjectiveWeights::single("a"), &r, 2.0).unwrap();
        let direct = predicted_accuracy(&suite.get("a").unwrap().bench, &camel, &r, 2.0).unwrap();
        assert_eq!(single, direct);
        assert!(matches!(
            weighted_objective(&suite, &ObjectiveWeights::single("zzz"), &r, 2.0),
            Err(Error::MissingBenchmark(_))
        ));

        // Both laws tuned so accuracy is exactly 0.5 at this point.
        let proxy = camel.eval(&r, 2.0).unwrap();
        let mut flat = BenchSuite::default();
        flat.insert("a", law(0.25, 0.5, -proxy, vec![1.0]), camel.clone());
        flat.insert("b", law(0.0, 1.0, -proxy, vec![1.0]), camel.clone());
        let w = ObjectiveWeights::new([("a".to_string(), 0.3), ("b".to_string(), 0.7)].into_iter().collect()).unwrap();
        assert!((weighted_objective(&flat, &w, &r, 2.0).unwrap() - 0.5).abs() < 1e-15);

        let balanced = ObjectiveWeights::preset("balanced").unwrap();
        assert_eq!(balanced.get("BBH"), Some(0.15));
    }
}
