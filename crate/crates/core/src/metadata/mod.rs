//! Hyperparameter experiment logs: persistence and desk-scale generation.
//!
//! A meta-data file is a CSV with header `dataset_id, <params...>,
//! <measures...>`; values are on the untransformed scale and inactive
//! parameters are empty cells. A JSON manifest next to it names the
//! algorithm, the space file, the measures, the datasets and the seed.

mod bot;
mod learners;
mod synthetic;

use std::collections::{BTreeMap, HashSet};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

pub use bot::{generate_bot_data, BotSettings};
pub use learners::{
    cross_validate, fit_logreg, stratified_folds, LearnerKind, LogisticModel, ToyLearnerSpec,
};
pub use synthetic::{make_synthetic_dataset, DatasetFamily, LabeledDataset};

use crate::error::{Error, Result};
use crate::hyperspace::{
    join_violations, parse_space, validate_configuration, Configuration, DatasetInfo, SearchSpace,
};
use crate::io::write_atomic;
use crate::metrics::Measure;

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentRow {
    pub dataset_id: String,
    pub config: Configuration,
    pub measures: BTreeMap<Measure, f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MetaDataset {
    pub algorithm: String,
    pub space: SearchSpace,
    pub datasets: Vec<DatasetInfo>,
    pub measures: Vec<Measure>,
    pub rows: Vec<ExperimentRow>,
    pub seed: Option<u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub algorithm: String,
    pub space_file: String,
    pub data_file: String,
    pub measures: Vec<Measure>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    pub datasets: Vec<DatasetInfo>,
}

impl MetaDataset {
    /// Checks the invariants: rows reference listed datasets, every dataset
    /// has rows, configurations are valid and measures finite.
    pub fn validate(&self) -> Result<()> {
        let ids: HashSet<&str> = self.datasets.iter().map(|d| d.id.as_str()).collect();
        if ids.len() != self.datasets.len() {
            return Err(Error::Schema("duplicate dataset ids".into()));
        }
        let mut seen = HashSet::new();
        for (r, row) in self.rows.iter().enumerate() {
            if !ids.contains(row.dataset_id.as_str()) {
                return Err(Error::Schema(format!(
                    "row {r}: unknown dataset `{}`",
                    row.dataset_id
                )));
            }
            seen.insert(row.dataset_id.as_str());
            let v = validate_configuration(&self.space, &row.config);
            if !v.is_empty() {
                return Err(Error::Configuration(format!("row {r}: {}", join_violations(&v))));
            }
            for m in &self.measures {
                match row.measures.get(m) {
                    Some(x) if x.is_finite() => {}
                    Some(x) => {
                        return Err(Error::Schema(format!("row {r}: non-finite {m} value {x}")))
                    }
                    None => return Err(Error::Schema(format!("row {r}: missing measure {m}"))),
                }
            }
        }
        if let Some(d) = self.datasets.iter().find(|d| !seen.contains(d.id.as_str())) {
            return Err(Error::Schema(format!("dataset `{}` has no rows", d.id)));
        }
        Ok(())
    }

    pub fn rows_for<'a>(&'a self, dataset_id: &'a str) -> impl Iterator<Item = &'a ExperimentRow> + 'a {
        self.rows.iter().filter(move |r| r.dataset_id == dataset_id)
    }

    pub fn dataset(&self, id: &str) -> Option<&DatasetInfo> {
        self.datasets.iter().find(|d| d.id == id)
    }

    pub fn has_measure(&self, m: Measure) -> bool {
        self.measures.contains(&m)
    }

    /// Renders the CSV body.
    pub fn to_csv_bytes(&self) -> Result<Vec<u8>> {
        let mut w = csv::WriterBuilder::new().from_writer(Vec::new());
        let mut header = vec!["dataset_id".to_string()];
        header.extend(self.space.params().iter().map(|p| p.name.clone()));
        header.extend(self.measures.iter().map(|m| m.name().to_string()));
        w.write_record(&header)?;
        for row in &self.rows {
            let mut rec = Vec::with_capacity(header.len());
            rec.push(row.dataset_id.clone());
            for (i, p) in self.space.params().iter().enumerate() {
                rec.push(if row.config.is_active(i) {
                    p.format_value(row.config.value(i))
                } else {
                    String::new()
                });
            }
            for m in &self.measures {
                rec.push(format!("{}", row.measures[m]));
            }
            w.write_record(&rec)?;
        }
        w.into_inner()
            .map_err(|e| Error::InvalidInput(format!("csv buffer: {e}")))
    }
}

/// Path of the manifest belonging to a meta-data CSV.
pub fn manifest_path(data_path: &Path) -> PathBuf {
    let stem = data_path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    data_path.with_file_name(format!("{stem}.manifest.json"))
}

fn space_path(data_path: &Path) -> PathBuf {
    let stem = data_path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    data_path.with_file_name(format!("{stem}.space.json"))
}

/// Writes the CSV, its manifest and a copy of the space definition.
pub fn write_meta(meta: &MetaDataset, path: &Path) -> Result<()> {
    meta.validate()?;
    let data = meta.to_csv_bytes()?;
    let space_file = space_path(path);
    let name = |p: &Path| p.file_name().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    let manifest = Manifest {
        algorithm: meta.algorithm.clone(),
        space_file: name(&space_file),
        data_file: name(path),
        measures: meta.measures.clone(),
        seed: meta.seed,
        datasets: meta.datasets.clone(),
    };
    let mut manifest_json = serde_json::to_string_pretty(&manifest)?;
    manifest_json.push('\n');
    write_atomic(&space_file, meta.space.to_json().as_bytes())?;
    write_atomic(path, &data)?;
    write_atomic(&manifest_path(path), manifest_json.as_bytes())?;
    Ok(())
}

fn read_text(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

/// Reads a meta-data CSV together with its manifest and space file.
pub fn read_meta(path: &Path) -> Result<MetaDataset> {
    let mpath = manifest_path(path);
    let manifest: Manifest = serde_json::from_str(&read_text(&mpath)?)
        .map_err(|e| Error::Schema(format!("{}: {e}", mpath.display())))?;
    let space_file = path.with_file_name(&manifest.space_file);
    let space = parse_space(&read_text(&space_file)?)?;
    let text = read_text(path)?;
    read_meta_from(&manifest, space, &text)
}

/// Parses CSV text against a manifest and space.
pub fn read_meta_from(manifest: &Manifest, space: SearchSpace, csv_text: &str) -> Result<MetaDataset> {
    if space.algorithm() != manifest.algorithm {
        return Err(Error::Schema(format!(
            "manifest algorithm `{}` does not match space `{}`",
            manifest.algorithm,
            space.algorithm()
        )));
    }
    let mut rdr = csv::ReaderBuilder::new().from_reader(csv_text.as_bytes());
    let header = rdr.headers()?.clone();
    if header.get(0) != Some("dataset_id") {
        return Err(Error::Schema("first column must be dataset_id".into()));
    }
    let mut param_cols = vec![None; space.k()];
    let mut measure_cols = BTreeMap::new();
    for (c, name) in header.iter().enumerate().skip(1) {
        if let Some(i) = space.index_of(name) {
            param_cols[i] = Some(c);
        } else if let Some(m) = manifest.measures.iter().find(|m| m.name() == name) {
            measure_cols.insert(*m, c);
        } else {
            return Err(Error::Schema(format!("unknown column `{name}`")));
        }
    }
    if let Some(i) = param_cols.iter().position(Option::is_none) {
        return Err(Error::Schema(format!("missing parameter column `{}`", space.param(i).name)));
    }
    if let Some(m) = manifest.measures.iter().find(|m| !measure_cols.contains_key(m)) {
        return Err(Error::Schema(format!("missing measure column `{m}`")));
    }
    let mut rows = Vec::new();
    for (r, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let dataset_id = rec.get(0).unwrap_or_default().to_string();
        let mut named = BTreeMap::new();
        for (i, p) in space.params().iter().enumerate() {
            let cell = rec.get(param_cols[i].unwrap_or(0)).unwrap_or_default().trim();
            let v = if cell.is_empty() {
                None
            } else {
                Some(crate::hyperspace::NamedValue::from_value(p, p.parse_value(cell)?))
            };
            named.insert(p.name.clone(), v);
        }
        let config = space.configuration_from_named(&named)?;
        let mut measures = BTreeMap::new();
        for (&m, &c) in &measure_cols {
            let cell = rec.get(c).unwrap_or_default().trim();
            let x: f64 = cell
                .parse()
                .map_err(|_| Error::Schema(format!("row {r}: bad {m} value `{cell}`")))?;
            if !x.is_finite() {
                return Err(Error::Schema(format!("row {r}: non-finite {m} value")));
            }
            measures.insert(m, x);
        }
        rows.push(ExperimentRow {
            dataset_id,
            config,
            measures,
        });
    }
    let meta = MetaDataset {
        algorithm: manifest.algorithm.clone(),
        space,
        datasets: manifest.datasets.clone(),
        measures: manifest.measures.clone(),
        rows,
        seed: manifest.seed,
    };
    meta.validate()?;
    Ok(meta)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hyperspace::{bundled_space, sample_configuration};
    use crate::rng::stream;

    fn sample_meta(algo: &str, datasets: usize, rows: usize) -> MetaDataset {
        let space = bundled_space(algo).unwrap();
        let infos: Vec<DatasetInfo> = (0..datasets)
            .map(|d| DatasetInfo::new(format!("d{d}"), 100 + d, 3).unwrap())
            .collect();
        let mut rng = stream(1, &[]);
        let rows = (0..rows)
            .map(|r| ExperimentRow {
                dataset_id: format!("d{}", r % datasets),
                config: sample_configuration(&space, &mut rng),
                measures: [(Measure::Auc, 0.5 + r as f64 / 1000.0 + 1e-17 * r as f64), (Measure::Brier, 0.1 / 3.0)]
                    .into_iter()
                    .collect(),
            })
            .collect();
        MetaDataset {
            algorithm: algo.into(),
            space,
            datasets: infos,
            measures: vec![Measure::Auc, Measure::Brier],
            rows,
            seed: Some(4),
        }
    }

    #[test]
    fn round_trip_is_lossless() {
        let dir = tempfile::tempdir().unwrap();
        for algo in ["glmnet", "svm"] {
            let meta = sample_meta(algo, 3, 50);
            let path = dir.path().join(format!("{algo}.csv"));
            write_meta(&meta, &path).unwrap();
            let back = read_meta(&path).unwrap();
            assert_eq!(back.rows.len(), 50);
            assert_eq!(back.datasets, meta.datasets);
            for (a, b) in back.rows.iter().zip(&meta.rows) {
                assert_eq!(a.measures, b.measures);
                assert_eq!(a.config.active(), b.config.active());
                for i in 0..meta.space.k() {
                    if a.config.is_active(i) {
                        assert_eq!(a.config.value(i), b.config.value(i));
                    }
                }
            }
        }
    }

    fn manifest_for(space: &SearchSpace, measures: Vec<Measure>) -> Manifest {
        Manifest {
            algorithm: space.algorithm().into(),
            space_file: String::new(),
            data_file: String::new(),
            measures,
            seed: None,
            datasets: vec![DatasetInfo::new("a", 10, 2).unwrap()],
        }
    }

    #[test]
    fn unknown_column_is_named() {
        let space = bundled_space("glmnet").unwrap();
        let m = manifest_for(&space, vec![Measure::Auc]);
        let err = read_meta_from(&m, space, "dataset_id,alpha,lambda,gamma,auc\na,0.5,0,1,0.7\n").unwrap_err();
        assert!(err.to_string().contains("`gamma`"), "{err}");
    }

    #[test]
    fn condition_breach_is_rejected() {
        let space = bundled_space("svm").unwrap();
        let m = manifest_for(&space, vec![Measure::Auc]);
        let err = read_meta_from(&m, space, "dataset_id,kernel,cost,gamma,degree,auc\na,linear,0,1,,0.7\n")
            .unwrap_err();
        assert!(err.to_string().contains("gamma must be inactive"), "{err}");
    }

    #[test]
    fn non_finite_measure_is_rejected() {
        let space = bundled_space("glmnet").unwrap();
        let m = manifest_for(&space, vec![Measure::Auc]);
        assert!(read_meta_from(&m, space, "dataset_id,alpha,lambda,auc\na,0.5,0,NaN\n").is_err());
    }
}
