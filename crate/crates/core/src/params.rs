//! Versioned JSON documents for parameter bundles and worlds.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fit::DmlBridge;
use crate::laws::{BenchLawParams, BenchSuite, CamelParams, DmlParams};
use crate::oracle::WorldParams;

pub const SCHEMA_VERSION: u32 = 1;

/// A fitted law, tagged by `kind` on the wire.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum LawBundle {
    Camel(CamelParams),
    Dml(DmlParams),
    Bench(BenchLawParams),
    /// Per-scale DML fits with their power-law bridge.
    DmlBridge(DmlBridge),
    /// Benchmark laws with their proxy CAMEL fits.
    BenchSuite(BenchSuite),
}

impl LawBundle {
    pub fn kind(&self) -> &'static str {
        match self {
            LawBundle::Camel(_) => "camel",
            LawBundle::Dml(_) => "dml",
            LawBundle::Bench(_) => "bench",
            LawBundle::DmlBridge(_) => "dml_bridge",
            LawBundle::BenchSuite(_) => "bench_suite",
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            LawBundle::Camel(p) => p.validate(),
            LawBundle::Dml(p) => p.validate(),
            LawBundle::Bench(p) => p.validate(),
            LawBundle::DmlBridge(b) => b.fits.iter().try_for_each(|f| f.params.validate()),
            LawBundle::BenchSuite(s) => s.benchmarks.values().try_for_each(|e| {
                e.bench.validate()?;
                e.proxy.validate()
            }),
        }
    }
}

#[derive(Serialize, Deserialize)]
struct Versioned<T> {
    schema_version: u32,
    #[serde(flatten)]
    body: T,
}

fn check_version(v: u32) -> Result<()> {
    if v == SCHEMA_VERSION {
        Ok(())
    } else {
        Err(Error::SchemaVersion(v))
    }
}

pub fn params_to_string(law: &LawBundle) -> Result<String> {
    Ok(serde_json::to_string_pretty(&Versioned { schema_version: SCHEMA_VERSION, body: law })?)
}

pub fn params_from_str(text: &str) -> Result<LawBundle> {
    let doc: Versioned<LawBundle> = serde_json::from_str(text)?;
    check_version(doc.schema_version)?;
    doc.body.validate()?;
    Ok(doc.body)
}

pub fn save_params(path: &Path, law: &LawBundle) -> Result<()> {
    std::fs::write(path, params_to_string(law)? + "\n")?;
    Ok(())
}

pub fn load_params(path: &Path) -> Result<LawBundle> {
    params_from_str(&std::fs::read_to_string(path)?)
}

pub fn world_to_string(world: &WorldParams) -> Result<String> {
    Ok(serde_json::to_string_pretty(&Versioned { schema_version: SCHEMA_VERSION, body: world })?)
}

pub fn world_from_str(text: &str) -> Result<WorldParams> {
    let doc: Versioned<WorldParams> = serde_json::from_str(text)?;
    check_version(doc.schema_version)?;
    doc.body.validate()?;
    Ok(doc.body)
}

pub fn save_world(path: &Path, world: &WorldParams) -> Result<()> {
    std::fs::write(path, world_to_string(world)? + "\n")?;
    Ok(())
}

pub fn load_world(path: &Path) -> Result<WorldParams> {
    world_from_str(&std::fs::read_to_string(path)?)
}
