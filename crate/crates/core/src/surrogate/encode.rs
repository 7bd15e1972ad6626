use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hyperspace::{midpoint, Configuration, ParamKind, SearchSpace, Value};
use crate::matrix::Matrix;
use crate::metadata::ExperimentRow;
use crate::metrics::{to_risk, Measure};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Column {
    /// Untransformed value; inactive cells hold the bounds midpoint.
    Value { param: usize },
    /// 1 when the conditional parameter is active.
    Active { param: usize },
    /// One-hot level of a discrete/logical parameter; `level: None` is the
    /// extra "inactive" level of a conditional one.
    Level { param: usize, level: Option<usize> },
}

/// Maps configurations to feature rows.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Encoder {
    columns: Vec<Column>,
    names: Vec<String>,
    midpoints: Vec<f64>,
}

impl Encoder {
    pub fn new(space: &SearchSpace) -> Self {
        let mut columns = Vec::new();
        let mut names = Vec::new();
        let mut midpoints = Vec::with_capacity(space.k());
        for (i, p) in space.params().iter().enumerate() {
            let conditional = space.is_conditional(i);
            let (lo, hi) = p.bounds();
            midpoints.push(midpoint(lo, hi));
            match p.kind {
                ParamKind::Numeric | ParamKind::Integer => {
                    columns.push(Column::Value { param: i });
                    names.push(p.name.clone());
                    if conditional {
                        columns.push(Column::Active { param: i });
                        names.push(format!("{}.active", p.name));
                    }
                }
                ParamKind::Discrete | ParamKind::Logical => {
                    for (l, label) in p.levels.iter().enumerate() {
                        columns.push(Column::Level { param: i, level: Some(l) });
                        names.push(format!("{}={label}", p.name));
                    }
                    if conditional {
                        columns.push(Column::Level { param: i, level: None });
                        names.push(format!("{}=<inactive>", p.name));
                    }
                }
            }
        }
        Encoder {
            columns,
            names,
            midpoints,
        }
    }

    pub fn width(&self) -> usize {
        self.columns.len()
    }

    pub fn columns(&self) -> &[Column] {
        &self.columns
    }

    pub fn column_names(&self) -> &[String] {
        &self.names
    }

    pub fn encode_into(&self, config: &Configuration, out: &mut Vec<f64>) {
        out.clear();
        for c in &self.columns {
            out.push(match *c {
                Column::Value { param } => {
                    if config.is_active(param) {
                        config.value(param).as_num().unwrap_or(self.midpoints[param])
                    } else {
                        self.midpoints[param]
                    }
                }
                Column::Active { param } => f64::from(u8::from(config.is_active(param))),
                Column::Level { param, level } => {
                    let hit = match level {
                        Some(l) => config.is_active(param) && config.value(param) == Value::Level(l),
                        None => !config.is_active(param),
                    };
                    f64::from(u8::from(hit))
                }
            });
        }
    }

    pub fn encode(&self, config: &Configuration) -> Vec<f64> {
        let mut v = Vec::with_capacity(self.width());
        self.encode_into(config, &mut v);
        v
    }
}

/// Encoded training data of one (dataset, measure) slice.
#[derive(Debug, Clone, PartialEq)]
pub struct EncodedMatrix {
    pub x: Matrix,
    /// Risks (minimize orientation).
    pub y: Vec<f64>,
    pub encoder: Encoder,
    pub dataset_id: String,
    pub measure: Measure,
}

impl EncodedMatrix {
    pub fn subset(&self, idx: &[usize]) -> EncodedMatrix {
        EncodedMatrix {
            x: self.x.select_rows(idx),
            y: idx.iter().map(|&i| self.y[i]).collect(),
            encoder: self.encoder.clone(),
            dataset_id: self.dataset_id.clone(),
            measure: self.measure,
        }
    }

    pub fn rows(&self) -> usize {
        self.y.len()
    }
}

/// Encodes experiment rows; targets are the measure oriented as risks.
pub fn encode<'a>(
    space: &SearchSpace,
    rows: impl IntoIterator<Item = &'a ExperimentRow>,
    measure: Measure,
) -> Result<EncodedMatrix> {
    let encoder = Encoder::new(space);
    let mut data = Vec::new();
    let mut y = Vec::new();
    let mut buf = Vec::with_capacity(encoder.width());
    let mut dataset_id = None;
    for row in rows {
        let value = row.measures.get(&measure).ok_or_else(|| {
            Error::Surrogate(format!("row of `{}` lacks measure {measure}", row.dataset_id))
        })?;
        encoder.encode_into(&row.config, &mut buf);
        data.extend_from_slice(&buf);
        y.push(to_risk(*value, measure));
        dataset_id.get_or_insert_with(|| row.dataset_id.clone());
    }
    let Some(dataset_id) = dataset_id else {
        return Err(Error::Surrogate("cannot encode an empty set of rows".into()));
    };
    let n = y.len();
    Ok(EncodedMatrix {
        x: Matrix::new(data, n, encoder.width()),
        y,
        encoder,
        dataset_id,
        measure,
    })
}
