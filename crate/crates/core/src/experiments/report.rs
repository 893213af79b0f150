use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::config::{ScenarioConfig, ScenarioId};
use super::svg;
use crate::error::{Error, Result};

/// One table entry: a number or a label.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Cell {
    Num(f64),
    Text(String),
}

impl From<f64> for Cell {
    fn from(v: f64) -> Self {
        Cell::Num(v)
    }
}

impl From<usize> for Cell {
    fn from(v: usize) -> Self {
        Cell::Num(v as f64)
    }
}

impl From<&str> for Cell {
    fn from(v: &str) -> Self {
        Cell::Text(v.to_string())
    }
}

impl From<String> for Cell {
    fn from(v: String) -> Self {
        Cell::Text(v)
    }
}

impl From<bool> for Cell {
    fn from(v: bool) -> Self {
        Cell::Text(if v { "true" } else { "false" }.to_string())
    }
}

impl Cell {
    fn csv(&self) -> String {
        match self {
            Cell::Num(v) => v.to_string(),
            Cell::Text(s) => s.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Table {
    pub name: String,
    pub columns: Vec<String>,
    pub rows: Vec<Vec<Cell>>,
}

impl Table {
    pub fn new(name: &str, columns: &[&str]) -> Self {
        Self { name: name.to_string(), columns: columns.iter().map(|c| c.to_string()).collect(), rows: Vec::new() }
    }

    pub fn push(&mut self, row: Vec<Cell>) -> Result<()> {
        if row.len() != self.columns.len() {
            return Err(Error::Shape(format!("table {} has {} columns, row has {}", self.name, self.columns.len(), row.len())));
        }
        if let Some(Cell::Num(v)) = row.iter().find(|c| matches!(c, Cell::Num(v) if !v.is_finite())) {
            return Err(Error::Data(format!("non-finite value {v} in table {} row {:?}", self.name, row)));
        }
        self.rows.push(row);
        Ok(())
    }

    /// Numeric column by name.
    pub fn column(&self, name: &str) -> Option<Vec<f64>> {
        let i = self.columns.iter().position(|c| c == name)?;
        self.rows.iter().map(|r| if let Cell::Num(v) = r[i] { Some(v) } else { None }).collect()
    }

    pub fn to_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(&self.columns)?;
        for row in &self.rows {
            w.write_record(row.iter().map(Cell::csv))?;
        }
        let bytes = w.into_inner().map_err(|e| Error::Io(e.into_error()))?;
        String::from_utf8(bytes).map_err(|e| Error::Data(e.to_string()))
    }
}

/// A pass/fail verdict computed from numbers recorded in the report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub name: String,
    /// Required checks decide the outcome of `scenario --check`.
    pub required: bool,
    pub passed: bool,
    pub detail: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PlotKind {
    Line,
    Bar,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Series {
    pub label: String,
    pub x: Vec<f64>,
    pub y: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Plot {
    /// File stem of the rendered chart, e.g. `fig1e`.
    pub name: String,
    pub title: String,
    pub x_label: String,
    pub y_label: String,
    pub kind: PlotKind,
    /// Category names for bar charts, indexed by `x`.
    #[serde(default)]
    pub categories: Vec<String>,
    pub series: Vec<Series>,
}

impl Plot {
    pub fn line(name: &str, title: &str, x_label: &str, y_label: &str) -> Self {
        Self {
            name: name.into(),
            title: title.into(),
            x_label: x_label.into(),
            y_label: y_label.into(),
            kind: PlotKind::Line,
            categories: Vec::new(),
            series: Vec::new(),
        }
    }

    pub fn bar(name: &str, title: &str, y_label: &str, categories: Vec<String>) -> Self {
        Self { kind: PlotKind::Bar, categories, ..Self::line(name, title, "", y_label) }
    }

    pub fn with(mut self, label: &str, x: Vec<f64>, y: Vec<f64>) -> Self {
        self.series.push(Series { label: label.into(), x, y });
        self
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeedRecord {
    pub role: String,
    pub repetition: usize,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioReport {
    pub id: ScenarioId,
    pub description: String,
    pub version: String,
    pub config: ScenarioConfig,
    pub seeds: Vec<SeedRecord>,
    pub tables: Vec<Table>,
    pub checks: Vec<Check>,
    pub plots: Vec<Plot>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OutputRecord {
    pub file: String,
    pub sha256: String,
}

/// Written beside every run; its `config` alone reproduces the run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub tool: String,
    pub version: String,
    pub id: ScenarioId,
    pub config: ScenarioConfig,
    pub config_sha256: String,
    pub seeds: Vec<SeedRecord>,
    pub outputs: Vec<OutputRecord>,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

impl ScenarioReport {
    pub fn new(config: &ScenarioConfig) -> Self {
        Self {
            id: config.id,
            description: config.id.description().to_string(),
            version: env!("CARGO_PKG_VERSION").to_string(),
            config: config.clone(),
            seeds: Vec::new(),
            tables: Vec::new(),
            checks: Vec::new(),
            plots: Vec::new(),
        }
    }

    pub fn seed(&mut self, role: &str, repetition: usize, seed: u64) {
        self.seeds.push(SeedRecord { role: role.into(), repetition, seed });
    }

    pub fn check(&mut self, name: &str, required: bool, passed: bool, detail: String) {
        self.checks.push(Check { name: name.into(), required, passed, detail });
    }

    pub fn table(&self, name: &str) -> Option<&Table> {
        self.tables.iter().find(|t| t.name == name)
    }

    pub fn find_check(&self, name: &str) -> Option<&Check> {
        self.checks.iter().find(|c| c.name == name)
    }

    pub fn required_passed(&self) -> bool {
        self.checks.iter().filter(|c| c.required).all(|c| c.passed)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    /// Every output file as `(name, contents)`, in a fixed order.
    pub fn render(&self, json: bool, csv: bool, svg: bool) -> Result<Vec<(String, String)>> {
        let mut files = Vec::new();
        if json {
            files.push(("report.json".to_string(), self.to_json()?));
        }
        if csv {
            for t in &self.tables {
                files.push((format!("{}.csv", t.name), t.to_csv()?));
            }
            let mut checks = Table::new("checks", &["name", "required", "passed", "detail"]);
            for c in &self.checks {
                checks.push(vec![c.name.clone().into(), c.required.into(), c.passed.into(), c.detail.clone().into()])?;
            }
            files.push(("checks.csv".to_string(), checks.to_csv()?));
        }
        if svg {
            for p in &self.plots {
                files.push((format!("{}.svg", p.name), svg::render(p)));
            }
        }
        Ok(files)
    }

    /// Writes the rendered files and a manifest into `dir`.
    pub fn write(&self, dir: &Path, json: bool, csv: bool, svg: bool) -> Result<Manifest> {
        fs::create_dir_all(dir)?;
        let files = self.render(json, csv, svg)?;
        let mut outputs = Vec::new();
        for (name, body) in &files {
            fs::write(dir.join(name), body)?;
            outputs.push(OutputRecord { file: name.clone(), sha256: sha256_hex(body.as_bytes()) });
        }
        let config_json = self.config.to_json()?;
        let manifest = Manifest {
            tool: "conjucode".into(),
            version: self.version.clone(),
            id: self.id,
            config: self.config.clone(),
            config_sha256: sha256_hex(config_json.as_bytes()),
            seeds: self.seeds.clone(),
            outputs,
        };
        fs::write(dir.join("manifest.json"), serde_json::to_string_pretty(&manifest)?)?;
        Ok(manifest)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn table_rejects_bad_rows() {
        let mut t = Table::new("t", &["a", "b"]);
        assert!(t.push(vec![1.0.into()]).is_err());
        assert!(t.push(vec![1.0.into(), f64::NAN.into()]).is_err());
        t.push(vec!["x".into(), 0.1.into()]).unwrap();
        assert_eq!(t.to_csv().unwrap(), "a,b\nx,0.1\n");
        assert_eq!(t.column("b").unwrap(), vec![0.1]);
        assert!(t.column("a").is_none());
    }

    #[test]
    fn report_json_round_trips() {
        let cfg = ScenarioConfig::defaults(ScenarioId::E2);
        let mut r = ScenarioReport::new(&cfg);
        r.seed("train", 0, 1);
        r.check("c", true, false, "0.3 < 0.5".into());
        r.plots.push(Plot::line("fig", "t", "x", "y").with("s", vec![0.0, 1.0], vec![2.0, 3.0]));
        let back = ScenarioReport::from_json(&r.to_json().unwrap()).unwrap();
        assert_eq!(back, r);
        assert!(!r.required_passed());
    }
}
