//! Observed training runs, benchmark weightings and their JSON Lines form.

use std::collections::BTreeMap;
use std::io::{BufRead, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mixture::{Mixture, SIMPLEX_TOL};

/// One training run: a mixture trained at a given capacity and token count,
/// with its validation losses and (optionally) benchmark accuracies.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawRecord", into = "RawRecord")]
pub struct RunRecord {
    pub mixture: Mixture,
    pub scale: f64,
    pub tokens: f64,
    pub losses: BTreeMap<String, f64>,
    pub benchmarks: Option<BTreeMap<String, f64>>,
}

#[derive(Serialize, Deserialize)]
struct RawRecord {
    mixture: Mixture,
    scale: f64,
    tokens: f64,
    losses: BTreeMap<String, f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    benchmarks: Option<BTreeMap<String, f64>>,
}

impl TryFrom<RawRecord> for RunRecord {
    type Error = Error;

    fn try_from(raw: RawRecord) -> Result<Self> {
        RunRecord::new(raw.mixture, raw.scale, raw.tokens, raw.losses, raw.benchmarks)
    }
}

impl From<RunRecord> for RawRecord {
    fn from(r: RunRecord) -> Self {
        RawRecord { mixture: r.mixture, scale: r.scale, tokens: r.tokens, losses: r.losses, benchmarks: r.benchmarks }
    }
}

impl RunRecord {
    pub fn new(
        mixture: Mixture,
        scale: f64,
        tokens: f64,
        losses: BTreeMap<String, f64>,
        benchmarks: Option<BTreeMap<String, f64>>,
    ) -> Result<Self> {
        if !(scale > 0.0) || !scale.is_finite() {
            return Err(Error::NonPositive("scale"));
        }
        if !(tokens > 0.0) || !tokens.is_finite() {
            return Err(Error::NonPositive("tokens"));
        }
        if losses.is_empty() {
            return Err(Error::Empty("loss map"));
        }
        if let Some((name, _)) = losses.iter().find(|(_, v)| !(**v > 0.0) || !v.is_finite()) {
            return Err(Error::InvalidParams(format!("loss `{name}` must be positive")));
        }
        if let Some(b) = &benchmarks {
            if let Some((name, _)) = b.iter().find(|(_, v)| !(0.0..=1.0).contains(*v)) {
                return Err(Error::InvalidParams(format!("benchmark `{name}` outside [0, 1]")));
            }
        }
        Ok(Self { mixture, scale, tokens, losses, benchmarks })
    }

    pub fn loss(&self, name: &str) -> Option<f64> {
        self.losses.get(name).copied()
    }

    pub fn benchmark(&self, name: &str) -> Option<f64> {
        self.benchmarks.as_ref().and_then(|b| b.get(name).copied())
    }
}

/// Reads a JSON Lines run file; blank lines are skipped.
pub fn read_runs<R: BufRead>(reader: R) -> Result<Vec<RunRecord>> {
    let mut out = Vec::new();
    for (lineno, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let rec: RunRecord =
            serde_json::from_str(&line).map_err(|e| Error::Parse(format!("line {}: {e}", lineno + 1)))?;
        out.push(rec);
    }
    Ok(out)
}

pub fn write_runs<W: Write>(mut writer: W, runs: &[RunRecord]) -> Result<()> {
    for run in runs {
        serde_json::to_writer(&mut writer, run)?;
        writer.write_all(b"\n")?;
    }
    writer.flush()?;
    Ok(())
}

pub fn load_runs(path: &Path) -> Result<Vec<RunRecord>> {
    let file = std::fs::File::open(path)?;
    read_runs(std::io::BufReader::new(file))
}

pub fn save_runs(path: &Path, runs: &[RunRecord]) -> Result<()> {
    let file = std::fs::File::create(path)?;
    write_runs(std::io::BufWriter::new(file), runs)
}

/// Benchmark weights of a training objective; values lie on the simplex.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "BTreeMap<String, f64>", into = "BTreeMap<String, f64>")]
pub struct ObjectiveWeights(BTreeMap<String, f64>);

impl ObjectiveWeights {
    pub fn new(weights: BTreeMap<String, f64>) -> Result<Self> {
        if weights.is_empty() {
            return Err(Error::Empty("objective weights"));
        }
        if let Some((name, _)) = weights.iter().find(|(_, v)| !(**v >= 0.0) || !v.is_finite()) {
            return Err(Error::InvalidParams(format!("weight for `{name}` must be >= 0")));
        }
        let total: f64 = weights.values().sum();
        if (total - 1.0).abs() > SIMPLEX_TOL {
            return Err(Error::InvalidParams(format!("objective weights sum to {total}")));
        }
        Ok(Self(weights))
    }

    /// All weight on one benchmark.
    pub fn single(name: &str) -> Self {
        Self([(name.to_string(), 1.0)].into_iter().collect())
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, f64)> {
        self.0.iter().map(|(k, v)| (k.as_str(), *v))
    }

    pub fn get(&self, name: &str) -> Option<f64> {
        self.0.get(name).copied()
    }

    /// The shipped objectives: `balanced`, `math`, `code`, `knowledge`.
    pub fn preset(name: &str) -> Option<Self> {
        let row: [f64; 7] = match name {
            "balanced" => [0.20, 0.10, 0.15, 0.15, 0.15, 0.15, 0.10],
            "math" => [0.12, 0.08, 0.12, 0.15, 0.30, 0.15, 0.08],
            "code" => [0.10, 0.10, 0.10, 0.15, 0.15, 0.25, 0.15],
            "knowledge" => [0.30, 0.16, 0.14, 0.10, 0.04, 0.04, 0.22],
            _ => return None,
        };
        let map = PRESET_BENCHMARKS.iter().zip(row).map(|(b, w)| (b.to_string(), w)).collect();
        Some(Self::new(map).expect("preset rows sum to one"))
    }
}

/// Benchmarks named by the shipped objective presets, in table order.
pub const PRESET_BENCHMARKS: [&str; 7] = ["MMLU", "ARC-C", "BBH", "GSM8K", "MATH", "HumanEval", "C-Eval"];

pub const PRESET_NAMES: [&str; 4] = ["balanced", "math", "code", "knowledge"];

impl TryFrom<BTreeMap<String, f64>> for ObjectiveWeights {
    type Error = Error;

    fn try_from(value: BTreeMap<String, f64>) -> Result<Self> {
        ObjectiveWeights::new(value)
    }
}

impl From<ObjectiveWeights> for BTreeMap<String, f64> {
    fn from(w: ObjectiveWeights) -> Self {
        w.0
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mixture::make_mixture;

    fn record() -> RunRecord {
        RunRecord::new(
            make_mixture(&[1.0, 2.0, 3.0]).unwrap(),
            4.0,
            80.0,
            [("val".to_string(), 2.345_678_901_234_567)].into_iter().collect(),
            Some([("MMLU".to_string(), 0.41)].into_iter().collect()),
        )
        .unwrap()
    }

    #[test]
    fn jsonl_round_trip_is_exact() {
        let mut a = record();
        a.scale = 0.1 + 0.2;
        let mut b = record();
        b.benchmarks = None;
        let mut buf = Vec::new();
        write_runs(&mut buf, &[a.clone(), b.clone()]).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert_eq!(text.lines().count(), 2);
        assert!(!text.lines().nth(1).unwrap().contains("benchmarks"));
        let back = read_runs(&buf[..]).unwrap();
        assert_eq!(back, vec![a, b]);
    }

    #[test]
    fn record_validation() {
        let r = record();
        assert!(RunRecord::new(r.mixture.clone(), 0.0, 1.0, r.losses.clone(), None).is_err());
        assert!(RunRecord::new(r.mixture.clone(), 1.0, -1.0, r.losses.clone(), None).is_err());
        assert!(RunRecord::new(r.mixture.clone(), 1.0, 1.0, BTreeMap::new(), None).is_err());
        let bad_loss = [("val".to_string(), 0.0)].into_iter().collect();
        assert!(RunRecord::new(r.mixture.clone(), 1.0, 1.0, bad_loss, None).is_err());
        let bad_bench = Some([("x".to_string(), 1.5)].into_iter().collect());
        assert!(RunRecord::new(r.mixture.clone(), 1.0, 1.0, r.losses.clone(), bad_bench).is_err());
        let line = r#"{"mixture":[0.5,0.6],"scale":1,"tokens":1,"losses":{"val":1}}"#;
        assert!(read_runs(line.as_bytes()).is_err());
    }

    #[test]
    fn presets_are_valid() {
        for name in PRESET_NAMES {
            let w = ObjectiveWeights::preset(name).unwrap();
            assert_eq!(w.iter().count(), 7);
        }
        let balanced = ObjectiveWeights::preset("balanced").unwrap();
        assert_eq!(balanced.get("MMLU"), Some(0.20));
        assert_eq!(balanced.get("C-Eval"), Some(0.10));
        assert!(ObjectiveWeights::preset("nope").is_none());
        let bad: BTreeMap<String, f64> = [("a".to_string(), 0.5)].into_iter().collect();
        assert!(ObjectiveWeights::new(bad).is_err());
    }
}
