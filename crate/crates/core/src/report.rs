//! Tables, extreme-value marking, kernel density curves and golden-run
//! comparison.

use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::association::MetricKind;
use crate::audit::{load_run, write_json, AuditRun};
use crate::error::{Error, Result};
use crate::explain::TermWeight;

/// A grid of numbers with one or more label columns.
///
/// The first label of each row names its row group; `column_groups`, when
/// non-empty, names the group of each column.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreTable {
    pub title: String,
    pub label_headers: Vec<String>,
    pub row_labels: Vec<Vec<String>>,
    pub column_labels: Vec<String>,
    #[serde(default)]
    pub column_groups: Vec<String>,
    pub cells: Vec<Vec<f64>>,
    #[serde(default = "default_rounding")]
    pub rounding: usize,
}

fn default_rounding() -> usize {
    3
}

impl ScoreTable {
    pub fn new(title: &str, label_headers: &[&str], column_labels: Vec<String>) -> Self {
        Self {
            title: title.to_string(),
            label_headers: label_headers.iter().map(|s| s.to_string()).collect(),
            row_labels: Vec::new(),
            column_labels,
            column_groups: Vec::new(),
            cells: Vec::new(),
            rounding: default_rounding(),
        }
    }

    pub fn push_row(&mut self, labels: Vec<String>, values: Vec<f64>) {
        self.row_labels.push(labels);
        self.cells.push(values);
    }

    fn row_group(&self, i: usize) -> &str {
        self.row_labels[i].first().map(String::as_str).unwrap_or("")
    }

    fn column_group(&self, j: usize) -> &str {
        self.column_groups.get(j).map(String::as_str).unwrap_or("")
    }

    fn column_header(&self, j: usize) -> String {
        match self.column_group(j) {
            "" => self.column_labels[j].clone(),
            g => format!("{g} {}", self.column_labels[j]),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ExtremeScope {
    None,
    PerRow,
    PerRowGroup,
    PerColumn,
    PerColumnGroup,
    Global,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TableFormat {
    Csv,
    Json,
    Md,
}

impl TableFormat {
    pub fn extension(self) -> &'static str {
        match self {
            TableFormat::Csv => "csv",
            TableFormat::Json => "json",
            TableFormat::Md => "md",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s.to_ascii_lowercase().as_str() {
            "csv" => Some(TableFormat::Csv),
            "json" => Some(TableFormat::Json),
            "md" | "markdown" => Some(TableFormat::Md),
            _ => None,
        }
    }
}

/// Decimal rendering rounded half away from zero.
///
/// Rounding is applied to the shortest decimal representation of `x`, so
/// `-0.0005` at 3 places is `-0.001` even though the nearest double lies a
/// hair beyond the tie.
pub fn format_rounded(x: f64, places: usize) -> String {
    if !x.is_finite() {
        return x.to_string();
    }
    let sci = format!("{:e}", x.abs());
    let (mantissa, exp) = sci.split_once('e').expect("scientific format");
    let exp: i64 = exp.parse().expect("integer exponent");
    let digits: Vec<u8> = mantissa.bytes().filter(|b| b.is_ascii_digit()).map(|b| b - b'0').collect();
    // digits are d0.d1d2... × 10^exp; keep everything left of this index
    let point = exp + 1 + places as i64;
    let mut kept: Vec<u8> = if point <= 0 {
        Vec::new()
    } else {
        (0..point as usize).map(|i| digits.get(i).copied().unwrap_or(0)).collect()
    };
    let next = if point < 0 { 0 } else { digits.get(point as usize).copied().unwrap_or(0) };
    if next >= 5 {
        let mut i = kept.len();
        loop {
            if i == 0 {
                kept.insert(0, 1);
                break;
            }
            i -= 1;
            if kept[i] == 9 {
                kept[i] = 0;
            } else {
                kept[i] += 1;
                break;
            }
        }
    }
    while kept.len() < places + 1 {
        kept.insert(0, 0);
    }
    let split = kept.len() - places;
    let int: String = kept[..split].iter().map(|d| (b'0' + d) as char).collect();
    let int = int.trim_start_matches('0');
    let int = if int.is_empty() { "0" } else { int };
    let frac: String = kept[split..].iter().map(|d| (b'0' + d) as char).collect();
    let negative = x < 0.0 && kept.iter().any(|d| *d != 0);
    let sign = if negative { "-" } else { "" };
    if places == 0 {
        format!("{sign}{int}")
    } else {
        format!("{sign}{int}.{frac}")
    }
}

/// Coordinates (row, column) of the cells with the largest |value| in each
/// scope. Ties are all marked; a scope whose largest magnitude is zero marks
/// nothing.
pub fn mark_extremes(table: &ScoreTable, scope: ExtremeScope) -> BTreeSet<(usize, usize)> {
    let mut marks = BTreeSet::new();
    if scope == ExtremeScope::None {
        return marks;
    }
    let key = |i: usize, j: usize| -> String {
        match scope {
            ExtremeScope::PerRow => format!("r{i}"),
            ExtremeScope::PerRowGroup => format!("g{}", table.row_group(i)),
            ExtremeScope::PerColumn => format!("c{j}"),
            ExtremeScope::PerColumnGroup => format!("h{}", table.column_group(j)),
            ExtremeScope::Global | ExtremeScope::None => String::new(),
        }
    };
    let mut scopes: std::collections::BTreeMap<String, Vec<(usize, usize)>> = Default::default();
    for (i, row) in table.cells.iter().enumerate() {
        for j in 0..row.len() {
            scopes.entry(key(i, j)).or_default().push((i, j));
        }
    }
    for cells in scopes.values() {
        // compare at display precision so visually tied values mark together
        let mag = |&(i, j): &(usize, usize)| format_rounded(table.cells[i][j].abs(), table.rounding).parse::<f64>().unwrap_or(0.0);
        let best = cells.iter().map(mag).fold(0.0, f64::max);
        if best == 0.0 {
            continue;
        }
        marks.extend(cells.iter().filter(|c| mag(c) == best));
    }
    marks
}

pub fn render_table(table: &ScoreTable, format: TableFormat, scope: ExtremeScope) -> String {
    let fmt = |x: f64| if x.is_finite() { format_rounded(x, table.rounding) } else { String::new() };
    match format {
        TableFormat::Csv => {
            let mut w = csv::Writer::from_writer(Vec::new());
            let header: Vec<String> = table
                .label_headers
                .iter()
                .cloned()
                .chain((0..table.column_labels.len()).map(|j| table.column_header(j)))
                .collect();
            w.write_record(&header).expect("in-memory csv");
            for (labels, row) in table.row_labels.iter().zip(&table.cells) {
                let rec: Vec<String> = labels.iter().cloned().chain(row.iter().map(|v| fmt(*v))).collect();
                w.write_record(&rec).expect("in-memory csv");
            }
            String::from_utf8(w.into_inner().expect("csv flush")).expect("utf-8 csv")
        }
        TableFormat::Json => {
            let marks = mark_extremes(table, scope);
            let rows: Vec<Value> = table
                .row_labels
                .iter()
                .zip(&table.cells)
                .enumerate()
                .map(|(i, (labels, row))| {
                    let values: Vec<Value> = row
                        .iter()
                        .map(|v| fmt(*v).parse::<f64>().map(Value::from).unwrap_or(Value::Null))
                        .collect();
                    let marked: Vec<usize> = (0..row.len()).filter(|j| marks.contains(&(i, *j))).collect();
                    serde_json::json!({ "labels": labels, "values": values, "extremes": marked })
                })
                .collect();
            let doc = serde_json::json!({
                "title": table.title,
                "label_headers": table.label_headers,
                "column_labels": table.column_labels,
                "column_groups": table.column_groups,
                "rows": rows,
            });
            let mut s = serde_json::to_string_pretty(&doc).expect("json");
            s.push('\n');
            s
        }
        TableFormat::Md => {
            let marks = mark_extremes(table, scope);
            let mut out = String::new();
            if !table.title.is_empty() {
                writeln!(out, "**{}**\n", table.title).unwrap();
            }
            let headers: Vec<String> = table
                .label_headers
                .iter()
                .cloned()
                .chain((0..table.column_labels.len()).map(|j| table.column_header(j)))
                .collect();
            writeln!(out, "| {} |", headers.join(" | ")).unwrap();
            let align: Vec<&str> = table
                .label_headers
                .iter()
                .map(|_| "---")
                .chain(table.column_labels.iter().map(|_| "---:"))
                .collect();
            writeln!(out, "|{}|", align.join("|")).unwrap();
            for (i, (labels, row)) in table.row_labels.iter().zip(&table.cells).enumerate() {
                let mut cells: Vec<String> = labels.clone();
                for (j, v) in row.iter().enumerate() {
                    let s = fmt(*v);
                    cells.push(if marks.contains(&(i, j)) { format!("**{s}**") } else { s });
                }
                writeln!(out, "| {} |", cells.join(" | ")).unwrap();
            }
            out
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DensityCurve {
    pub grid: Vec<f64>,
    pub density: Vec<f64>,
    pub bandwidth: f64,
}

impl DensityCurve {
    pub fn trapezoid_integral(&self) -> f64 {
        self.grid
            .windows(2)
            .zip(self.density.windows(2))
            .map(|(x, y)| (x[1] - x[0]) * (y[0] + y[1]) / 2.0)
            .sum()
    }
}

/// Type-7 (linear interpolation) sample quantile of sorted data.
fn quantile_sorted(sorted: &[f64], q: f64) -> f64 {
    let h = (sorted.len() - 1) as f64 * q;
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

/// Silverman's rule: 0.9 · min(σ, IQR/1.34) · n^(-1/5), with σ the sample
/// standard deviation. A zero IQR falls back to σ.
pub fn silverman_bandwidth(values: &[f64]) -> Result<f64> {
    let n = values.len();
    if n < 2 {
        return Err(Error::InsufficientSamples { needed: 2, found: n });
    }
    let mean = values.iter().sum::<f64>() / n as f64;
    let sd = (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt();
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let iqr = quantile_sorted(&sorted, 0.75) - quantile_sorted(&sorted, 0.25);
    let spread = if iqr > 0.0 { sd.min(iqr / 1.34) } else { sd };
    Ok(0.9 * spread * (n as f64).powf(-0.2))
}

pub fn kde(values: &[f64], grid_n: usize) -> Result<DensityCurve> {
    kde_with(values, grid_n, None)
}

/// Gaussian KDE on `grid_n` points spanning four bandwidths beyond the data.
/// `min_bandwidth` floors the bandwidth and makes constant data estimable.
pub fn kde_with(values: &[f64], grid_n: usize, min_bandwidth: Option<f64>) -> Result<DensityCurve> {
    if grid_n < 2 {
        return Err(Error::InsufficientSamples { needed: 2, found: grid_n });
    }
    if values.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite(values.iter().position(|v| !v.is_finite()).unwrap_or(0)));
    }
    let lo = values.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut h = if lo == hi { 0.0 } else { silverman_bandwidth(values)? };
    if let Some(min) = min_bandwidth.filter(|m| *m > 0.0) {
        h = h.max(min);
    }
    if !(h > 0.0) {
        return Err(Error::DegenerateData);
    }
    let (lo, hi) = (lo - 4.0 * h, hi + 4.0 * h);
    let step = (hi - lo) / (grid_n - 1) as f64;
    let norm = 1.0 / (values.len() as f64 * h * (2.0 * std::f64::consts::PI).sqrt());
    let grid: Vec<f64> = (0..grid_n).map(|i| lo + step * i as f64).collect();
    let density = grid
        .iter()
        .map(|x| norm * values.iter().map(|v| (-0.5 * ((x - v) / h).powi(2)).exp()).sum::<f64>())
        .collect();
    Ok(DensityCurve {
        grid,
        density,
        bandwidth: h,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiffEntry {
    pub path: String,
    pub expected: Value,
    pub actual: Value,
}

const TIMESTAMP_KEYS: [&str; 4] = ["started_at", "finished_at", "created_at", "t"];
pub const GOLDEN_TOLERANCE: f64 = 1e-9;

/// Structural diff of two JSON documents; numbers within `tol` are equal and
/// timestamp keys are ignored.
pub fn diff_json(expected: &Value, actual: &Value, tol: f64) -> Vec<DiffEntry> {
    let mut out = Vec::new();
    diff_into("$", expected, actual, tol, &mut out);
    out
}

fn diff_into(path: &str, e: &Value, a: &Value, tol: f64, out: &mut Vec<DiffEntry>) {
    let entry = |out: &mut Vec<DiffEntry>| {
        out.push(DiffEntry {
            path: path.to_string(),
            expected: e.clone(),
            actual: a.clone(),
        })
    };
    match (e, a) {
        (Value::Number(x), Value::Number(y)) => {
            let (x, y) = (x.as_f64().unwrap_or(f64::NAN), y.as_f64().unwrap_or(f64::NAN));
            if !((x - y).abs() <= tol) {
                entry(out);
            }
        }
        (Value::Object(x), Value::Object(y)) => {
            let keys: BTreeSet<&String> = x.keys().chain(y.keys()).collect();
            for k in keys {
                if TIMESTAMP_KEYS.contains(&k.as_str()) {
                    continue;
                }
                let p = format!("{path}.{k}");
                match (x.get(k), y.get(k)) {
                    (Some(ev), Some(av)) => diff_into(&p, ev, av, tol, out),
                    (ev, av) => out.push(DiffEntry {
                        path: p,
                        expected: ev.cloned().unwrap_or(Value::Null),
                        actual: av.cloned().unwrap_or(Value::Null),
                    }),
                }
            }
        }
        (Value::Array(x), Value::Array(y)) => {
            if x.len() != y.len() {
                out.push(DiffEntry {
                    path: format!("{path}.length"),
                    expected: x.len().into(),
                    actual: y.len().into(),
                });
            }
            for (i, (ev, av)) in x.iter().zip(y).enumerate() {
                diff_into(&format!("{path}[{i}]"), ev, av, tol, out);
            }
        }
        _ if e == a => {}
        _ => entry(out),
    }
}

fn read_json(path: &Path) -> Result<Value> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::schema_at(path.display().to_string(), e.to_string()))
}

/// Compare `scores.json` (and `attributions.json` when the golden has one).
/// Paths in the report are prefixed with the file name.
pub fn compare_golden(run_dir: &Path, golden_dir: &Path) -> Result<Vec<DiffEntry>> {
    let mut diffs = Vec::new();
    for name in ["scores.json", "attributions.json"] {
        let golden = golden_dir.join(name);
        if name != "scores.json" && !golden.exists() {
            continue;
        }
        let expected = read_json(&golden)?;
        let actual_path = run_dir.join(name);
        if !actual_path.exists() {
            diffs.push(DiffEntry {
                path: name.to_string(),
                expected: Value::String("present".into()),
                actual: Value::Null,
            });
            continue;
        }
        let actual = read_json(&actual_path)?;
        for mut d in diff_json(&expected, &actual, GOLDEN_TOLERANCE) {
            d.path = format!("{name}:{}", d.path);
            diffs.push(d);
        }
    }
    Ok(diffs)
}

/// Which values feed the density curves.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DensityPopulation {
    /// BAD_avg of every cell / every volatility cell.
    PerCell,
    /// One PSI / aggregated volatility per persona.
    PerPersona,
}

#[derive(Debug, Clone)]
pub struct ReportOptions {
    pub format: TableFormat,
    pub grid_n: usize,
    pub population: DensityPopulation,
    pub min_bandwidth: Option<f64>,
}

impl Default for ReportOptions {
    fn default() -> Self {
        Self {
            format: TableFormat::Csv,
            grid_n: 512,
            population: DensityPopulation::PerCell,
            min_bandwidth: None,
        }
    }
}

fn fixed_personas(run: &AuditRun) -> Vec<String> {
    let mut ids: BTreeSet<String> = BTreeSet::new();
    for m in &run.task2 {
        ids.extend(m.grid.iter().map(|c| c.persona_id.clone()));
    }
    ids.into_iter().collect()
}

/// Table 4 layout: rows (model, prompt), columns personas, BAD_avg cells.
pub fn bad_table(run: &AuditRun, metric: Option<MetricKind>) -> ScoreTable {
    let personas = fixed_personas(run);
    let title = match metric {
        None => "BAD_avg by prompt and persona".to_string(),
        Some(m) => format!("BAD ({m}) by prompt and persona"),
    };
    let mut t = ScoreTable::new(&title, &["Model", "Prompt"], personas.clone());
    for m in &run.task2 {
        let prompts: BTreeSet<&str> = m.grid.iter().map(|c| c.prompt_id.as_str()).collect();
        for p in prompts {
            let row = personas
                .iter()
                .map(|c| {
                    m.cell(p, c)
                        .map(|cell| match metric {
                            None => cell.bad_avg,
                            Some(k) => cell.bad_by_metric[&k],
                        })
                        .unwrap_or(f64::NAN)
                })
                .collect();
            t.push_row(vec![m.model_id.clone(), p.to_string()], row);
        }
    }
    t
}

/// Table 5 layout: PSI rows then aggregated-volatility rows, one per model.
pub fn psi_volatility_table(run: &AuditRun) -> ScoreTable {
    let personas = fixed_personas(run);
    let mut t = ScoreTable::new(
        "PSI and aggregated volatility by persona",
        &["Section", "Model"],
        personas.clone(),
    );
    for m in &run.task2 {
        let row = personas
            .iter()
            .map(|c| m.psi.iter().find(|p| &p.persona_id == c).map_or(f64::NAN, |p| p.psi))
            .collect();
        t.push_row(vec!["PSI".into(), m.model_id.clone()], row);
    }
    for m in &run.task2 {
        let row = personas
            .iter()
            .map(|c| {
                m.persona_volatility
                    .iter()
                    .find(|p| &p.persona_id == c)
                    .map_or(f64::NAN, |p| p.aggregated)
            })
            .collect();
        t.push_row(vec!["Volatility (aggregated)".into(), m.model_id.clone()], row);
    }
    t
}

/// Table 3 layout: rows classes, column groups models × metrics, plus a
/// cross-model average group when there is more than one model.
pub fn task1_table(run: &AuditRun) -> ScoreTable {
    let mut classes: Vec<(String, String)> = Vec::new();
    for m in &run.task1 {
        for r in &m.rows {
            if !classes.iter().any(|(id, _)| id == &r.class_id) {
                classes.push((r.class_id.clone(), r.class_name.clone()));
            }
        }
    }
    let mut columns = Vec::new();
    let mut groups = Vec::new();
    for m in &run.task1 {
        for k in MetricKind::ALL {
            columns.push(k.to_string());
            groups.push(m.model_id.clone());
        }
    }
    let with_avg = run.task1.len() > 1;
    if with_avg {
        for k in MetricKind::ALL {
            columns.push(k.to_string());
            groups.push("Average".into());
        }
    }
    let mut t = ScoreTable::new("Static bias scores by identity class", &["Identity class"], columns);
    t.column_groups = groups;
    for (id, name) in classes {
        let mut row = Vec::new();
        let mut sums = [0.0; 3];
        let mut counts = [0usize; 3];
        for m in &run.task1 {
            let r = m.rows.iter().find(|r| r.class_id == id);
            for (i, k) in MetricKind::ALL.iter().enumerate() {
                let v = r.and_then(|r| r.scores.get(k).copied()).unwrap_or(f64::NAN);
                if v.is_finite() {
                    sums[i] += v;
                    counts[i] += 1;
                }
                row.push(v);
            }
        }
        if with_avg {
            row.extend((0..3).map(|i| if counts[i] > 0 { sums[i] / counts[i] as f64 } else { f64::NAN }));
        }
        t.push_row(vec![name], row);
    }
    t
}

fn write_file(path: &Path, text: &str) -> Result<()> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn density_csv(curves: &[(String, DensityCurve)]) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["model_id", "x", "density", "bandwidth"]).expect("in-memory csv");
    for (model, c) in curves {
        for (x, d) in c.grid.iter().zip(&c.density) {
            w.write_record([model.clone(), x.to_string(), d.to_string(), c.bandwidth.to_string()])
                .expect("in-memory csv");
        }
    }
    String::from_utf8(w.into_inner().expect("csv flush")).expect("utf-8 csv")
}

/// Render `report.md`, `tables/*` and `density/*.csv` for a run directory.
/// Returns the list of files written, relative to the run directory.
pub fn write_report(run_dir: &Path, options: &ReportOptions) -> Result<Vec<String>> {
    let run = load_run(run_dir)?;
    let mut written = Vec::new();
    let mut md = String::from("# Bias audit report\n\n");
    let ext = options.format.extension();

    let mut emit = |name: &str, table: &ScoreTable, scope: ExtremeScope, md: &mut String| -> Result<()> {
        let rel = format!("tables/{name}.{ext}");
        write_file(&run_dir.join(&rel), &render_table(table, options.format, scope))?;
        written.push(rel);
        md.push_str(&render_table(table, TableFormat::Md, scope));
        md.push('\n');
        Ok(())
    };

    if !run.task1.is_empty() {
        md.push_str("## Static evaluation\n\n");
        emit("task1", &task1_table(&run), ExtremeScope::PerColumn, &mut md)?;
    }
    let mut density_notes = Vec::new();
    if !run.task2.is_empty() {
        md.push_str("## Persona evaluation\n\n");
        emit("bad", &bad_table(&run, None), ExtremeScope::PerRowGroup, &mut md)?;
        for k in MetricKind::ALL {
            let name = format!("bad_{}", k.as_str().to_lowercase().replace('-', ""));
            emit(&name, &bad_table(&run, Some(k)), ExtremeScope::PerRowGroup, &mut md)?;
        }
        emit("psi_volatility", &psi_volatility_table(&run), ExtremeScope::None, &mut md)?;

        for (file, pick) in [
            ("psi", 0usize),
            ("volatility", 1usize),
        ] {
            let mut curves = Vec::new();
            for m in &run.task2 {
                let values: Vec<f64> = match (pick, options.population) {
                    (0, DensityPopulation::PerCell) => m.grid.iter().map(|c| c.bad_avg).collect(),
                    (0, DensityPopulation::PerPersona) => m.psi.iter().map(|p| p.psi).collect(),
                    (_, DensityPopulation::PerCell) => m.volatility.iter().map(|v| v.stddev).collect(),
                    (_, DensityPopulation::PerPersona) => m.persona_volatility.iter().map(|v| v.aggregated).collect(),
                };
                match kde_with(&values, options.grid_n, options.min_bandwidth) {
                    Ok(c) => curves.push((m.model_id.clone(), c)),
                    Err(e) => density_notes.push(format!("- {file} density for `{}` skipped: {e}", m.model_id)),
                }
            }
            let rel = format!("density/{file}.csv");
            write_file(&run_dir.join(&rel), &density_csv(&curves))?;
            written.push(rel);
        }
    }
    if !density_notes.is_empty() {
        md.push_str("## Density notes\n\n");
        for n in &density_notes {
            md.push_str(n);
            md.push('\n');
        }
        md.push('\n');
    }

    let top = run_dir.join("top_terms.json");
    if top.exists() {
        let text = std::fs::read_to_string(&top).map_err(|e| Error::io(&top, e))?;
        let lists: Vec<(String, Vec<TermWeight>)> = crate::corpus::parse_json(&text)?;
        md.push_str("## Most influential terms\n\n| Model | Rank | Term | Total weight |\n|---|---:|---|---:|\n");
        for (model, terms) in lists {
            for (i, t) in terms.iter().enumerate() {
                writeln!(md, "| {model} | {} | {} | {} |", i + 1, t.term, format_rounded(t.total, 3)).unwrap();
            }
        }
        md.push('\n');
    }
    write_file(&run_dir.join("report.md"), &md)?;
    written.push("report.md".into());
    Ok(written)
}

/// Persist a table in every format under `dir`.
pub fn write_table_set(dir: &Path, name: &str, table: &ScoreTable, scope: ExtremeScope) -> Result<()> {
    for f in [TableFormat::Csv, TableFormat::Json, TableFormat::Md] {
        write_file(&dir.join(format!("{name}.{}", f.extension())), &render_table(table, f, scope))?;
    }
    write_json(&dir.join(format!("{name}.table.json")), table)
}
