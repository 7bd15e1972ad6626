//! Data-driven tuning ranges from per-dataset best configurations.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hyperspace::{apply_trafo, Configuration, ParamDef, ParamKind, SearchSpace, Trafo, Value};
use crate::metrics::quantile;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "rule", content = "fraction", rename_all = "snake_case")]
pub enum CategoricalRule {
    /// Keep every level that was best on at least one dataset.
    AtLeastOnce,
    /// Keep levels that were best on at least this fraction of datasets.
    MinFraction(f64),
}

impl fmt::Display for CategoricalRule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CategoricalRule::AtLeastOnce => f.write_str("at_least_once"),
            CategoricalRule::MinFraction(x) => write!(f, "min_fraction({x})"),
        }
    }
}

impl FromStr for CategoricalRule {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        if s == "at_least_once" {
            return Ok(CategoricalRule::AtLeastOnce);
        }
        let inner = s
            .strip_prefix("min_fraction(")
            .and_then(|r| r.strip_suffix(')'))
            .or_else(|| s.strip_prefix("min_fraction:"));
        match inner.and_then(|x| x.trim().parse::<f64>().ok()) {
            Some(f) if (0.0..=1.0).contains(&f) => Ok(CategoricalRule::MinFraction(f)),
            _ => Err(Error::InvalidInput(format!(
                "unknown categorical rule `{s}` (expected at_least_once or min_fraction(f))"
            ))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RangeSpec {
    pub p1: f64,
    pub p2: f64,
    pub categorical_rule: CategoricalRule,
}

impl Default for RangeSpec {
    fn default() -> Self {
        RangeSpec {
            p1: 0.05,
            p2: 0.95,
            categorical_rule: CategoricalRule::MinFraction(0.1),
        }
    }
}

impl RangeSpec {
    pub fn check(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.p1) || !(0.0..=1.0).contains(&self.p2) || self.p1 >= self.p2 {
            return Err(Error::InvalidInput(format!(
                "quantile levels must satisfy 0 <= p1 < p2 <= 1 (got p1={}, p2={})",
                self.p1, self.p2
            )));
        }
        if let CategoricalRule::MinFraction(f) = self.categorical_rule {
            if !(0.0..=1.0).contains(&f) {
                return Err(Error::InvalidInput(format!("fraction {f} outside [0, 1]")));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum RangeEntry {
    Numeric {
        lower: f64,
        upper: f64,
        /// The bounds after the parameter's transformation; absent when the
        /// transformation depends on dataset size.
        lower_transformed: Option<f64>,
        upper_transformed: Option<f64>,
    },
    Levels {
        included: Vec<usize>,
        /// How often each level was best.
        counts: Vec<usize>,
    },
    /// The parameter was never active in a best configuration.
    NoData,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamRange {
    pub name: String,
    pub kind: ParamKind,
    /// Best values of the datasets where the parameter was active.
    pub best_values: Vec<Value>,
    pub range: RangeEntry,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TuningSpaceResult {
    pub spec: RangeSpec,
    pub datasets: usize,
    pub params: Vec<ParamRange>,
}

impl TuningSpaceResult {
    pub fn param(&self, name: &str) -> Option<&ParamRange> {
        self.params.iter().find(|p| p.name == name)
    }
}

fn transformed(def: &ParamDef, raw: f64) -> Option<f64> {
    match def.trafo {
        Trafo::ScaleByPCeil | Trafo::PowNRound => None,
        _ => apply_trafo(def, raw, None).ok(),
    }
}

fn level_included(rule: CategoricalRule, count: usize, total: usize) -> bool {
    match rule {
        CategoricalRule::AtLeastOnce => count >= 1,
        // the tolerance keeps e.g. 1 of 10 at f = 0.1 inside despite rounding
        CategoricalRule::MinFraction(f) => count >= 1 && count as f64 >= f * total as f64 - 1e-9,
    }
}

/// Quantile ranges of numeric parameters and included level sets of
/// categorical ones, computed from the best configuration of each dataset.
pub fn compute_ranges(
    best: &[Configuration],
    space: &SearchSpace,
    spec: &RangeSpec,
) -> Result<TuningSpaceResult> {
    spec.check()?;
    if best.is_empty() {
        return Err(Error::InvalidInput("no best configurations given".into()));
    }
    let params = space
        .params()
        .iter()
        .enumerate()
        .map(|(i, def)| {
            let best_values: Vec<Value> = best
                .iter()
                .filter(|c| c.is_active(i))
                .map(|c| c.value(i))
                .collect();
            let range = if best_values.is_empty() {
                RangeEntry::NoData
            } else if def.kind.is_numeric() {
                let xs: Vec<f64> = best_values.iter().filter_map(|v| v.as_num()).collect();
                let lower = quantile(&xs, spec.p1)?;
                let upper = quantile(&xs, spec.p2)?;
                RangeEntry::Numeric {
                    lower,
                    upper,
                    lower_transformed: transformed(def, lower),
                    upper_transformed: transformed(def, upper),
                }
            } else {
                let mut counts = vec![0; def.levels.len()];
                for v in &best_values {
                    if let Some(l) = v.as_level().filter(|&l| l < counts.len()) {
                        counts[l] += 1;
                    }
                }
                let included = (0..counts.len())
                    .filter(|&l| level_included(spec.categorical_rule, counts[l], best_values.len()))
                    .collect();
                RangeEntry::Levels { included, counts }
            };
            Ok(ParamRange {
                name: def.name.clone(),
                kind: def.kind,
                best_values,
                range,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(TuningSpaceResult {
        spec: *spec,
        datasets: best.len(),
        params,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HistogramBin {
    pub lower: f64,
    pub upper: f64,
    /// Level label for categorical parameters.
    pub label: Option<String>,
    pub count: usize,
}

/// Histogram of best values. Numeric parameters get `bins` equal-width bins
/// over their bounds (half-open, the last one closed; values outside the
/// bounds land in the outermost bins); categorical ones get one bin per level.
pub fn export_histogram(def: &ParamDef, values: &[Value], bins: usize) -> Result<Vec<HistogramBin>> {
    if bins == 0 {
        return Err(Error::InvalidInput("a histogram needs at least one bin".into()));
    }
    if !def.kind.is_numeric() {
        let mut out: Vec<HistogramBin> = def
            .levels
            .iter()
            .enumerate()
            .map(|(l, label)| HistogramBin {
                lower: l as f64,
                upper: l as f64,
                label: Some(label.clone()),
                count: 0,
            })
            .collect();
        for v in values {
            if let Some(b) = v.as_level().and_then(|l| out.get_mut(l)) {
                b.count += 1;
            }
        }
        return Ok(out);
    }
    let (lo, hi) = def.bounds();
    let edge = |i: usize| {
        if i == bins {
            hi
        } else {
            lo + (hi - lo) * i as f64 / bins as f64
        }
    };
    let mut out: Vec<HistogramBin> = (0..bins)
        .map(|i| HistogramBin {
            lower: edge(i),
            upper: edge(i + 1),
            label: None,
            count: 0,
        })
        .collect();
    for x in values.iter().filter_map(|v| v.as_num()) {
        let idx = if hi > lo {
            let mut idx = ((x - lo) / (hi - lo) * bins as f64).floor().clamp(0.0, (bins - 1) as f64) as usize;
            // correct for rounding right at an edge
            if idx + 1 < bins && x >= edge(idx + 1) {
                idx += 1;
            } else if idx > 0 && x < edge(idx) {
                idx -= 1;
            }
            idx
        } else {
            0
        };
        out[idx].count += 1;
    }
    Ok(out)
}
