//! Tab-separated datasets with a `# key = value` header, plus a generated
//! matplotlib script per dataset.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use crate::error::CliError;

#[derive(Debug, Clone, PartialEq)]
pub enum Cell {
    Int(i64),
    Float(f64),
    Text(String),
}

impl Cell {
    fn render(&self) -> String {
        match self {
            Cell::Int(i) => i.to_string(),
            // Debug is the shortest string that round-trips
            Cell::Float(x) => format!("{x:?}"),
            Cell::Text(s) => s.clone(),
        }
    }
}

impl From<f64> for Cell {
    fn from(x: f64) -> Self {
        Cell::Float(x)
    }
}
impl From<u32> for Cell {
    fn from(x: u32) -> Self {
        Cell::Int(x as i64)
    }
}
impl From<u64> for Cell {
    fn from(x: u64) -> Self {
        Cell::Int(x as i64)
    }
}
impl From<bool> for Cell {
    fn from(x: bool) -> Self {
        Cell::Int(x as i64)
    }
}
impl From<&str> for Cell {
    fn from(x: &str) -> Self {
        Cell::Text(x.to_string())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Column {
    pub name: &'static str,
    /// Unit label; empty for dimensionless or categorical columns.
    pub unit: &'static str,
}

pub const fn col(name: &'static str, unit: &'static str) -> Column {
    Column { name, unit }
}

/// How the generated script draws the dataset: one panel per `y` column,
/// one line per distinct combination of the `group` columns.
#[derive(Debug, Clone, PartialEq)]
pub struct PlotSpec {
    pub x: &'static str,
    pub y: Vec<&'static str>,
    pub group: Vec<&'static str>,
    pub logx: bool,
    pub logy: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub name: String,
    pub columns: Vec<Column>,
    pub rows: Vec<Vec<Cell>>,
    /// `key = value` lines (TOML syntax) written as the `#` header.
    pub metadata: Vec<String>,
    pub plot: PlotSpec,
    pub complete: bool,
}

impl Dataset {
    pub fn new(name: impl Into<String>, columns: Vec<Column>, metadata: Vec<String>, plot: PlotSpec) -> Self {
        Self {
            name: name.into(),
            columns,
            rows: Vec::new(),
            metadata,
            plot,
            complete: true,
        }
    }

    pub fn render(&self) -> String {
        let mut out = String::new();
        for line in &self.metadata {
            let _ = writeln!(out, "# {line}");
        }
        let _ = writeln!(out, "# meta.dataset = \"{}\"", self.name);
        let units: Vec<String> = self
            .columns
            .iter()
            .map(|c| if c.unit.is_empty() { c.name.to_string() } else { format!("{} [{}]", c.name, c.unit) })
            .collect();
        let _ = writeln!(out, "# meta.columns = \"{}\"", units.join(", "));
        let status = if self.complete { "complete" } else { "partial" };
        let _ = writeln!(out, "# meta.status = \"{status}\"");
        let names: Vec<&str> = self.columns.iter().map(|c| c.name).collect();
        let _ = writeln!(out, "{}", names.join("\t"));
        for row in &self.rows {
            let cells: Vec<String> = row.iter().map(Cell::render).collect();
            let _ = writeln!(out, "{}", cells.join("\t"));
        }
        out
    }

    pub fn plot_script(&self, data_file: &str) -> String {
        let quote = |v: &[&str]| v.iter().map(|s| format!("{s:?}")).collect::<Vec<_>>().join(", ");
        format!(
            r##"#!/usr/bin/env python3
# Plot {name}. Usage: python3 {name}_plot.py [output.png]
import sys
from collections import defaultdict
from pathlib import Path

import matplotlib.pyplot as plt

HERE = Path(__file__).resolve().parent
X, YS, GROUP = {x:?}, [{ys}], [{group}]

lines = [l.rstrip("\n") for l in open(HERE / {file:?}) if not l.startswith("#")]
header = lines[0].split("\t")
rows = [dict(zip(header, l.split("\t"))) for l in lines[1:] if l]

fig, axes = plt.subplots(len(YS), 1, figsize=(7, 4 * len(YS)), squeeze=False)
for ax, y in zip(axes[:, 0], YS):
    series = defaultdict(list)
    for r in rows:
        series[", ".join(f"{{g}}={{r[g]}}" for g in GROUP)].append((float(r[X]), float(r[y])))
    for label, pts in series.items():
        pts.sort()
        ax.plot([p[0] for p in pts], [p[1] for p in pts], marker="o", ms=3, label=label)
    ax.set_xlabel(X)
    ax.set_ylabel(y)
    {logx}
    {logy}
    ax.grid(True, which="both", alpha=0.3)
    if len(series) > 1:
        ax.legend(fontsize="small")
fig.tight_layout()
fig.savefig(sys.argv[1] if len(sys.argv) > 1 else HERE / "{name}.png", dpi=150)
"##,
            name = self.name,
            x = self.plot.x,
            ys = quote(&self.plot.y),
            group = quote(&self.plot.group),
            file = data_file,
            logx = if self.plot.logx { "ax.set_xscale(\"log\")" } else { "pass" },
            logy = if self.plot.logy { "ax.set_yscale(\"log\")" } else { "pass" },
        )
    }

    /// Write `<name>.tsv` and `<name>_plot.py` into `dir`; returns both paths.
    pub fn write(&self, dir: &Path) -> Result<Vec<PathBuf>, CliError> {
        let io = |path: &Path| {
            let path = path.display().to_string();
            move |source| CliError::Io { path, source }
        };
        std::fs::create_dir_all(dir).map_err(io(dir))?;
        let data_name = format!("{}.tsv", self.name);
        let data = dir.join(&data_name);
        std::fs::write(&data, self.render()).map_err(io(&data))?;
        let script = dir.join(format!("{}_plot.py", self.name));
        std::fs::write(&script, self.plot_script(&data_name)).map_err(io(&script))?;
        Ok(vec![data, script])
    }
}
