use std::fmt::Write as _;
use std::path::Path;

use anyhow::{ensure, Context, Result};

use crate::args::ReportArgs;
use crate::output::{emit, meta_path, InputDigest};

/// Relative change below which a sweep weight counts as flat.
const FLAT_TOLERANCE: f64 = 1e-3;

struct Table {
    header: Vec<String>,
    rows: Vec<Vec<String>>,
}

impl Table {
    fn read(path: &Path) -> Result<Self> {
        let mut reader = csv::Reader::from_path(path).with_context(|| format!("reading {}", path.display()))?;
        let header = reader.headers()?.iter().map(str::to_string).collect();
        let rows = reader
            .records()
            .map(|r| Ok(r?.iter().map(str::to_string).collect()))
            .collect::<Result<Vec<Vec<String>>>>()?;
        Ok(Self { header, rows })
    }

    fn column(&self, name: &str) -> Result<usize> {
        self.header.iter().position(|h| h == name).with_context(|| format!("missing column `{name}`"))
    }

    fn number(&self, row: usize, col: usize) -> Result<f64> {
        let cell = &self.rows[row][col];
        cell.parse().with_context(|| format!("`{cell}` is not a number"))
    }

    fn markdown(&self, out: &mut String) {
        let _ = writeln!(out, "| {} |", self.header.join(" | "));
        let _ = writeln!(out, "|{}", "---|".repeat(self.header.len()));
        for row in &self.rows {
            let cells: Vec<String> = row.iter().map(|c| format_cell(c)).collect();
            let _ = writeln!(out, "| {} |", cells.join(" | "));
        }
    }
}

fn format_cell(cell: &str) -> String {
    match cell.parse::<f64>() {
        Ok(v) if cell.contains('.') || cell.contains('e') => format!("{v:.4e}"),
        _ => cell.to_string(),
    }
}

fn config_echo(path: &Path, out: &mut String) -> Result<()> {
    let meta = meta_path(path);
    if meta.exists() {
        let text = std::fs::read_to_string(&meta).with_context(|| format!("reading {}", meta.display()))?;
        let value: serde_json::Value =
            serde_json::from_str(&text).with_context(|| format!("parsing {}", meta.display()))?;
        let _ = writeln!(out, "\n<details><summary>configuration</summary>\n\n```json");
        let _ = writeln!(out, "{}", serde_json::to_string_pretty(&value)?);
        let _ = writeln!(out, "```\n\n</details>");
    }
    Ok(())
}

fn strategies(table: &Table, out: &mut String) -> Result<()> {
    table.markdown(out);
    let hourglass = table.rows.iter().position(|r| r[0] == "hourglass");
    let rectangle = table.rows.iter().position(|r| r[0] == "rectangle");
    if let (Some(h), Some(r)) = (hourglass, rectangle) {
        let _ = writeln!(out);
        for col in 1..table.header.len() {
            let (hv, rv) = (table.number(h, col)?, table.number(r, col)?);
            let verdict = if hv < rv {
                "hourglass below rectangle"
            } else if hv == rv {
                "hourglass ties rectangle"
            } else {
                "hourglass above rectangle"
            };
            let _ = writeln!(out, "- budget {}: {verdict}", table.header[col]);
        }
    }
    Ok(())
}

fn comparison(table: &Table, out: &mut String) -> Result<()> {
    table.markdown(out);
    let col = table.column("heldout_mare")?;
    let mut best = None;
    for i in 0..table.rows.len() {
        let v = table.number(i, col)?;
        if best.is_none_or(|(_, b)| v < b) {
            best = Some((i, v));
        }
    }
    if let Some((i, v)) = best {
        let _ = writeln!(out, "\nLowest held-out MARE: `{}` ({v:.4e}).", table.rows[i][0]);
    }
    Ok(())
}

fn ablation(table: &Table, out: &mut String) -> Result<()> {
    table.markdown(out);
    let k = table.column("k")?;
    let col = table.column("heldout_mare")?;
    let mut best = None;
    for i in 0..table.rows.len() {
        let v = table.number(i, col)?;
        if best.is_none_or(|(_, b)| v < b) {
            best = Some((i, v));
        }
    }
    if let Some((i, v)) = best {
        let _ = writeln!(out, "\nMinimum held-out MARE {v:.4e} at k = {}.", table.rows[i][k]);
    }
    Ok(())
}

fn sweep(table: &Table, out: &mut String) -> Result<()> {
    table.markdown(out);
    ensure!(!table.rows.is_empty(), "empty sweep");
    let last = table.rows.len() - 1;
    let _ = writeln!(out);
    for col in 1..table.header.len() {
        let (first, end) = (table.number(0, col)?, table.number(last, col)?);
        let change = (end - first) / first.abs().max(f64::MIN_POSITIVE);
        let trend = if change.abs() < FLAT_TOLERANCE {
            "flat".to_string()
        } else if change > 0.0 {
            format!("rises {first:.4} to {end:.4}")
        } else {
            format!("falls {first:.4} to {end:.4}")
        };
        let _ = writeln!(out, "- `{}`: {trend}", table.header[col]);
    }
    Ok(())
}

type Section = fn(&Table, &mut String) -> Result<()>;

pub fn run(a: &ReportArgs) -> Result<()> {
    let sections: [(&str, Option<&Path>, Section); 4] = [
        ("Sampling strategies", a.strategies.as_deref(), strategies),
        ("Law comparison", a.comparison.as_deref(), comparison),
        ("Held-out error vs k", a.ablation.as_deref(), ablation),
        ("Optimal mixture vs scale", a.sweep.as_deref(), sweep),
    ];
    let mut out = String::from("# Mixture study report\n\n## Inputs\n\n| section | file | sha256 |\n|---|---|---|\n");
    for (title, path, _) in &sections {
        match path {
            Some(p) => {
                let d = InputDigest::of(p)?;
                let _ = writeln!(out, "| {title} | `{}` | `{}` |", d.path, d.sha256);
            }
            None => {
                let _ = writeln!(out, "| {title} | not run | |");
            }
        }
    }
    for (title, path, render) in sections {
        let _ = writeln!(out, "\n## {title}\n");
        match path {
            Some(p) => {
                let table = Table::read(p)?;
                render(&table, &mut out).with_context(|| format!("rendering {}", p.display()))?;
                config_echo(p, &mut out)?;
            }
            None => out.push_str("not run\n"),
        }
    }
    emit(a.out.as_deref(), &out)
}
