//! Delimited tables and the JSON report written by an analysis, plus the
//! matching readers.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hyperspace::{Configuration, NamedValue, SearchSpace, Value};
use crate::io::write_atomic;
use crate::metrics::{Measure, ScalingMode};
use crate::ranges::{export_histogram, HistogramBin, RangeEntry, TuningSpaceResult};
use crate::tunability::TunabilityReport;

/// Everything an analysis run produced, as stored in `report.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportBundle {
    pub algorithm: String,
    pub measure: Measure,
    pub scaling: ScalingMode,
    pub surrogate: String,
    /// Named form of the key configurations (inactive parameters are null).
    pub optimal_defaults: BTreeMap<String, Option<NamedValue>>,
    pub package_defaults: Option<BTreeMap<String, Option<NamedValue>>>,
    pub optima: Vec<NamedOptimum>,
    pub tunability: TunabilityReport,
    pub ranges: Option<TuningSpaceResult>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NamedOptimum {
    pub dataset: String,
    pub config: BTreeMap<String, Option<NamedValue>>,
    pub risk: f64,
}

impl ReportBundle {
    pub fn new(
        space: &SearchSpace,
        measure: Measure,
        scaling: ScalingMode,
        surrogate: impl Into<String>,
        tunability: TunabilityReport,
        ranges: Option<TuningSpaceResult>,
    ) -> Self {
        let optima = tunability
            .optima
            .iter()
            .zip(&tunability.dataset_ids)
            .map(|(o, id)| NamedOptimum {
                dataset: id.clone(),
                config: space.to_named(&o.config),
                risk: o.risk,
            })
            .collect();
        ReportBundle {
            algorithm: space.algorithm().to_string(),
            measure,
            scaling,
            surrogate: surrogate.into(),
            optimal_defaults: space.to_named(&tunability.optimal_defaults.theta_star),
            package_defaults: tunability.package.as_ref().map(|p| space.to_named(&p.reference)),
            optima,
            tunability,
            ranges,
        }
    }
}

fn csv_bytes<T: Serialize>(rows: &[T]) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in rows {
        w.serialize(r)?;
    }
    w.into_inner()
        .map_err(|e| Error::InvalidInput(format!("csv buffer: {e}")))
}

fn read_rows<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<Vec<T>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut r = csv::Reader::from_reader(text.as_bytes());
    r.deserialize().map(|row| row.map_err(Error::from)).collect()
}

fn cell(space: &SearchSpace, i: usize, config: &Configuration) -> String {
    space.param(i).format_value(config.value(i))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DefaultsRow {
    pub parameter: String,
    pub def_o: String,
    pub def_o_active: bool,
    pub def_p: Option<String>,
    pub def_p_active: Option<bool>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OverallRow {
    pub algorithm: String,
    pub tun_p: Option<f64>,
    pub tun_o: Option<f64>,
    pub tun_o_cv: Option<f64>,
    pub improv: Option<f64>,
    pub impr_cv: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamRow {
    pub parameter: String,
    pub def_p: Option<String>,
    pub def_o: String,
    pub tun_p: Option<f64>,
    pub tun_o: Option<f64>,
    pub rel_p: Option<f64>,
    pub rel_o: Option<f64>,
    pub q_lower: Option<f64>,
    pub q_upper: Option<f64>,
    pub q_lower_transformed: Option<f64>,
    pub q_upper_transformed: Option<f64>,
    pub levels: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RangeRow {
    pub parameter: String,
    pub kind: String,
    pub lower: Option<f64>,
    pub upper: Option<f64>,
    pub lower_transformed: Option<f64>,
    pub upper_transformed: Option<f64>,
    /// Included levels separated by `|`.
    pub levels: Option<String>,
    pub contributing: usize,
    pub p1: f64,
    pub p2: f64,
    pub categorical_rule: String,
}

pub fn defaults_rows(space: &SearchSpace, report: &TunabilityReport) -> Vec<DefaultsRow> {
    let o = &report.optimal_defaults.theta_star;
    let p = report.package.as_ref().map(|p| &p.reference);
    (0..space.k())
        .map(|i| DefaultsRow {
            parameter: space.param(i).name.clone(),
            def_o: cell(space, i, o),
            def_o_active: o.is_active(i),
            def_p: p.map(|p| cell(space, i, p)),
            def_p_active: p.map(|p| p.is_active(i)),
        })
        .collect()
}

pub fn overall_row(report: &TunabilityReport) -> OverallRow {
    OverallRow {
        algorithm: report.algorithm.clone(),
        tun_p: report
            .package
            .as_ref()
            .and_then(|p| p.algorithm.aggregates)
            .map(|a| a.mean),
        tun_o: report.optimal.algorithm.aggregates.map(|a| a.mean),
        tun_o_cv: report.cv.as_ref().and_then(|c| c.aggregates).map(|a| a.mean),
        improv: report.improvement(),
        impr_cv: report.improvement_cv(),
    }
}

fn included_labels(space: &SearchSpace, i: usize, included: &[usize]) -> String {
    included
        .iter()
        .map(|&l| space.param(i).format_value(Value::Level(l)))
        .collect::<Vec<_>>()
        .join("|")
}

pub fn param_rows(
    space: &SearchSpace,
    report: &TunabilityReport,
    ranges: Option<&TuningSpaceResult>,
) -> Vec<ParamRow> {
    (0..space.k())
        .map(|i| {
            let name = &space.param(i).name;
            let pkg = report.package.as_ref();
            let range = ranges.and_then(|r| r.param(name)).map(|r| &r.range);
            let (mut ql, mut qu, mut qlt, mut qut, mut levels) = (None, None, None, None, None);
            match range {
                Some(RangeEntry::Numeric {
                    lower,
                    upper,
                    lower_transformed,
                    upper_transformed,
                }) => {
                    ql = Some(*lower);
                    qu = Some(*upper);
                    qlt = *lower_transformed;
                    qut = *upper_transformed;
                }
                Some(RangeEntry::Levels { included, .. }) => {
                    levels = Some(included_labels(space, i, included));
                }
                _ => {}
            }
            ParamRow {
                parameter: name.clone(),
                def_p: pkg.map(|p| cell(space, i, &p.reference)),
                def_o: cell(space, i, &report.optimal_defaults.theta_star),
                tun_p: pkg.and_then(|p| p.params[i].d).map(|a| a.mean),
                tun_o: report.optimal.params[i].d.map(|a| a.mean),
                rel_p: pkg.and_then(|p| p.params[i].rel).map(|a| a.mean),
                rel_o: report.optimal.params[i].rel.map(|a| a.mean),
                q_lower: ql,
                q_upper: qu,
                q_lower_transformed: qlt,
                q_upper_transformed: qut,
                levels,
            }
        })
        .collect()
}

pub fn range_rows(space: &SearchSpace, ranges: &TuningSpaceResult) -> Vec<RangeRow> {
    ranges
        .params
        .iter()
        .enumerate()
        .map(|(i, p)| {
            let mut row = RangeRow {
                parameter: p.name.clone(),
                kind: format!("{:?}", p.kind).to_lowercase(),
                lower: None,
                upper: None,
                lower_transformed: None,
                upper_transformed: None,
                levels: None,
                contributing: p.best_values.len(),
                p1: ranges.spec.p1,
                p2: ranges.spec.p2,
                categorical_rule: ranges.spec.categorical_rule.to_string(),
            };
            match &p.range {
                RangeEntry::Numeric {
                    lower,
                    upper,
                    lower_transformed,
                    upper_transformed,
                } => {
                    row.lower = Some(*lower);
                    row.upper = Some(*upper);
                    row.lower_transformed = *lower_transformed;
                    row.upper_transformed = *upper_transformed;
                }
                RangeEntry::Levels { included, .. } => {
                    row.levels = Some(included_labels(space, i, included));
                }
                RangeEntry::NoData => {}
            }
            row
        })
        .collect()
}

/// A labelled matrix with optional cells.
#[derive(Debug, Clone, PartialEq)]
pub struct LabelledMatrix {
    pub rows: Vec<String>,
    pub cols: Vec<String>,
    pub cells: Vec<Vec<Option<f64>>>,
}

impl LabelledMatrix {
    pub fn get(&self, row: &str, col: &str) -> Option<f64> {
        let r = self.rows.iter().position(|x| x == row)?;
        let c = self.cols.iter().position(|x| x == col)?;
        self.cells[r][c]
    }

    fn to_csv(&self) -> Result<Vec<u8>> {
        let mut w = csv::Writer::from_writer(Vec::new());
        let mut header = vec!["parameter".to_string()];
        header.extend(self.cols.iter().cloned());
        w.write_record(&header)?;
        for (name, row) in self.rows.iter().zip(&self.cells) {
            let mut rec = vec![name.clone()];
            rec.extend(row.iter().map(|c| c.map(|v| v.to_string()).unwrap_or_default()));
            w.write_record(&rec)?;
        }
        w.into_inner()
            .map_err(|e| Error::InvalidInput(format!("csv buffer: {e}")))
    }
}

/// Mean pair tunability: upper triangle, single-parameter tunability on the
/// diagonal; pairs with a parameter inactive under the reference are empty.
pub fn pair_matrix(space: &SearchSpace, report: &TunabilityReport) -> Option<LabelledMatrix> {
    let pairs = report.pairs.as_ref()?;
    let reference = report.reference(pairs.reference)?;
    let k = space.k();
    let names: Vec<String> = space.params().iter().map(|p| p.name.clone()).collect();
    let mut cells = vec![vec![None; k]; k];
    for i in 0..k {
        if !reference.params[i].conditional_reference {
            cells[i][i] = reference.params[i].d.map(|a| a.mean);
        }
        for j in i + 1..k {
            cells[i][j] = pairs.entry(i, j).and_then(|e| e.d).map(|a| a.mean);
        }
    }
    Some(LabelledMatrix {
        rows: names.clone(),
        cols: names,
        cells,
    })
}

/// Mean joint gain: rows are the first k-1 parameters, columns the last k-1.
pub fn joint_gain_matrix(space: &SearchSpace, report: &TunabilityReport) -> Option<LabelledMatrix> {
    let pairs = report.pairs.as_ref()?;
    let k = space.k();
    if k < 2 {
        return None;
    }
    let names: Vec<String> = space.params().iter().map(|p| p.name.clone()).collect();
    let cells = (0..k - 1)
        .map(|i| {
            (1..k)
                .map(|j| {
                    (j > i)
                        .then(|| pairs.entry(i, j).and_then(|e| e.g).map(|a| a.mean))
                        .flatten()
                })
                .collect()
        })
        .collect();
    Some(LabelledMatrix {
        rows: names[..k - 1].to_vec(),
        cols: names[1..].to_vec(),
        cells,
    })
}

pub fn read_matrix(path: &Path) -> Result<LabelledMatrix> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut r = csv::Reader::from_reader(text.as_bytes());
    let header = r.headers()?.clone();
    if header.get(0) != Some("parameter") {
        return Err(Error::Schema(format!("{}: first column must be `parameter`", path.display())));
    }
    let cols: Vec<String> = header.iter().skip(1).map(str::to_string).collect();
    let mut rows = Vec::new();
    let mut cells = Vec::new();
    for rec in r.records() {
        let rec = rec?;
        rows.push(rec.get(0).unwrap_or_default().to_string());
        let row = rec
            .iter()
            .skip(1)
            .map(|c| {
                if c.trim().is_empty() {
                    Ok(None)
                } else {
                    c.trim()
                        .parse::<f64>()
                        .map(Some)
                        .map_err(|_| Error::Schema(format!("{}: `{c}` is not a number", path.display())))
                }
            })
            .collect::<Result<Vec<_>>>()?;
        cells.push(row);
    }
    Ok(LabelledMatrix { rows, cols, cells })
}

pub fn read_defaults(path: &Path) -> Result<Vec<DefaultsRow>> {
    read_rows(path)
}

/// Rebuilds the optimal and (if present) package defaults from a defaults table.
pub fn defaults_from_rows(
    space: &SearchSpace,
    rows: &[DefaultsRow],
) -> Result<(Configuration, Option<Configuration>)> {
    let find = |name: &str| {
        rows.iter()
            .find(|r| r.parameter == name)
            .ok_or_else(|| Error::Schema(format!("defaults table lacks `{name}`")))
    };
    let mut o = (Vec::new(), Vec::new());
    let mut p = (Vec::new(), Vec::new());
    let mut has_p = true;
    for def in space.params() {
        let row = find(&def.name)?;
        o.0.push(def.parse_value(&row.def_o)?);
        o.1.push(row.def_o_active);
        match (&row.def_p, row.def_p_active) {
            (Some(v), Some(a)) => {
                p.0.push(def.parse_value(v)?);
                p.1.push(a);
            }
            _ => has_p = false,
        }
    }
    Ok((
        Configuration::from_parts(o.0, o.1),
        has_p.then(|| Configuration::from_parts(p.0, p.1)),
    ))
}

pub fn read_overall(path: &Path) -> Result<Vec<OverallRow>> {
    read_rows(path)
}

pub fn read_params(path: &Path) -> Result<Vec<ParamRow>> {
    read_rows(path)
}

pub fn read_ranges(path: &Path) -> Result<Vec<RangeRow>> {
    read_rows(path)
}

pub fn read_histogram(path: &Path) -> Result<Vec<HistogramBin>> {
    read_rows(path)
}

pub fn read_report(path: &Path) -> Result<ReportBundle> {
    let text = fs::read(path).map_err(|e| Error::io(path, e))?;
    Ok(serde_json::from_slice(&text)?)
}

/// Options for [`write_tables`].
#[derive(Debug, Clone, Copy, Default)]
pub struct TableOptions {
    /// Number of bins of per-parameter best-value histograms; `None` skips them.
    pub histogram_bins: Option<usize>,
}

/// Writes all tables of a bundle into `dir` and returns the written paths.
/// Each file is written atomically.
pub fn write_tables(
    dir: &Path,
    space: &SearchSpace,
    bundle: &ReportBundle,
    options: TableOptions,
) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let report = &bundle.tunability;
    let algo = space.algorithm();
    let mut files: Vec<(PathBuf, Vec<u8>)> = vec![
        (dir.join("defaults.csv"), csv_bytes(&defaults_rows(space, report))?),
        (dir.join("tunability_overall.csv"), csv_bytes(&[overall_row(report)])?),
        (
            dir.join("tunability_params.csv"),
            csv_bytes(&param_rows(space, report, bundle.ranges.as_ref()))?,
        ),
    ];
    if let Some(m) = pair_matrix(space, report) {
        files.push((dir.join(format!("pairs_{algo}.csv")), m.to_csv()?));
    }
    if let Some(m) = joint_gain_matrix(space, report) {
        files.push((dir.join(format!("joint_gain_{algo}.csv")), m.to_csv()?));
    }
    if let Some(r) = &bundle.ranges {
        files.push((dir.join("ranges.csv"), csv_bytes(&range_rows(space, r))?));
        if let Some(bins) = options.histogram_bins {
            for (i, p) in r.params.iter().enumerate() {
                let h = export_histogram(space.param(i), &p.best_values, bins)?;
                files.push((dir.join(format!("hist_{}.csv", p.name)), csv_bytes(&h)?));
            }
        }
    }
    let mut json = serde_json::to_vec_pretty(bundle)?;
    json.push(b'\n');
    files.push((dir.join("report.json"), json));
    for (path, bytes) in &files {
        write_atomic(path, bytes)?;
    }
    Ok(files.into_iter().map(|(p, _)| p).collect())
}
