//! Full tunability analysis of one algorithm over a set of datasets.

use std::fmt;
use std::str::FromStr;

use log::{info, warn};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{
    compute_defaults, conditional_reference, cv_across_datasets, dataset_optimum,
    sequential_tuning, tunability_algorithm, tunability_pair, tunability_parameter, Aggregates,
    AlgorithmTunability, CvResult, DefaultsResult, Optimum, OptimizerSpec, PairCell, ParamCell,
    Task,
};
use crate::error::{Error, Result};
use crate::hyperspace::{join_violations, validate_configuration, Configuration, SearchSpace};
use crate::metrics::{RiskTransform, Summary};
use crate::rng::derive_seed;
use crate::surface::RiskSurface;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum ReferenceKind {
    Package,
    #[default]
    Optimal,
}

impl ReferenceKind {
    fn tag(self) -> u64 {
        match self {
            ReferenceKind::Package => 1,
            ReferenceKind::Optimal => 2,
        }
    }
}

impl fmt::Display for ReferenceKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ReferenceKind::Package => "package",
            ReferenceKind::Optimal => "optimal",
        })
    }
}

impl FromStr for ReferenceKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "package" => Ok(ReferenceKind::Package),
            "optimal" => Ok(ReferenceKind::Optimal),
            other => Err(Error::InvalidInput(format!(
                "unknown reference `{other}` (expected package or optimal)"
            ))),
        }
    }
}

// stream tags keep the seeds of different minimizations apart
const TAG_DEFAULTS: u64 = 1;
const TAG_OPTIMUM: u64 = 2;
const TAG_SINGLE: u64 = 3;
const TAG_PAIR: u64 = 4;
const TAG_SEQUENTIAL: u64 = 5;
const TAG_CONDITIONAL: u64 = 6;
const TAG_CV: u64 = 7;

pub struct AnalysisInput<'a, S> {
    pub space: &'a SearchSpace,
    pub dataset_ids: Vec<String>,
    pub surfaces: &'a [S],
    pub transforms: Vec<RiskTransform>,
    pub summary: Summary,
    pub optimizer: OptimizerSpec,
    pub package_defaults: Option<Configuration>,
    /// Reference used for pair, joint-gain and sequential tables.
    pub reference: ReferenceKind,
    pub pairs: bool,
    pub cv_folds: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamResult {
    pub name: String,
    /// Reference the parameter was tuned from; differs from the overall
    /// reference when the parameter is inactive there.
    pub reference: Configuration,
    pub conditional_reference: bool,
    pub cells: Vec<ParamCell>,
    pub d: Option<Aggregates>,
    pub rel: Option<Aggregates>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReferenceResult {
    pub kind: ReferenceKind,
    pub reference: Configuration,
    pub algorithm: AlgorithmTunability,
    pub params: Vec<ParamResult>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairEntry {
    pub i1: usize,
    pub i2: usize,
    /// Per-dataset results; empty when the pair was skipped.
    pub cells: Vec<PairCell>,
    pub d: Option<Aggregates>,
    pub g: Option<Aggregates>,
    /// Mean risk after sequential tuning in the order i1 -> i2 and i2 -> i1.
    pub sequential_12: Option<f64>,
    pub sequential_21: Option<f64>,
    pub sequential_12_per_dataset: Vec<f64>,
    pub sequential_21_per_dataset: Vec<f64>,
    pub joint_risk: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub skipped: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairResult {
    pub reference: ReferenceKind,
    pub entries: Vec<PairEntry>,
}

impl PairResult {
    pub fn entry(&self, i1: usize, i2: usize) -> Option<&PairEntry> {
        let (a, b) = if i1 < i2 { (i1, i2) } else { (i2, i1) };
        self.entries.iter().find(|e| e.i1 == a && e.i2 == b)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TunabilityReport {
    pub algorithm: String,
    pub dataset_ids: Vec<String>,
    pub summary: Summary,
    pub optimizer: OptimizerSpec,
    pub optimal_defaults: DefaultsResult,
    pub optima: Vec<Optimum>,
    pub optimal: ReferenceResult,
    pub package: Option<ReferenceResult>,
    pub pairs: Option<PairResult>,
    pub cv: Option<CvResult>,
    pub warnings: Vec<String>,
}

impl TunabilityReport {
    pub fn reference(&self, kind: ReferenceKind) -> Option<&ReferenceResult> {
        match kind {
            ReferenceKind::Optimal => Some(&self.optimal),
            ReferenceKind::Package => self.package.as_ref(),
        }
    }

    /// Mean tunability w.r.t. package defaults minus that w.r.t. optimal defaults.
    pub fn improvement(&self) -> Option<f64> {
        let p = self.package.as_ref()?.algorithm.aggregates?.mean;
        Some(improvement(p, self.optimal.algorithm.aggregates?.mean))
    }

    pub fn improvement_cv(&self) -> Option<f64> {
        let p = self.package.as_ref()?.algorithm.aggregates?.mean;
        Some(improvement(p, self.cv.as_ref()?.aggregates?.mean))
    }
}

/// Average gain of switching from package to optimal defaults: the
/// difference of the two overall tunabilities.
pub fn improvement(tun_p: f64, tun_o: f64) -> f64 {
    tun_p - tun_o
}

struct Ctx<'a, S> {
    input: &'a AnalysisInput<'a, S>,
    optima: &'a [Optimum],
    defaults: &'a Configuration,
}

impl<S: RiskSurface> Ctx<'_, S> {
    fn seed(&self, path: &[u64]) -> u64 {
        derive_seed(self.input.optimizer.seed, path)
    }

    fn reference_result(
        &self,
        kind: ReferenceKind,
        reference: &Configuration,
        warnings: &mut Vec<String>,
    ) -> Result<ReferenceResult> {
        let inp = self.input;
        let space = inp.space;
        let algorithm = tunability_algorithm(reference, inp.surfaces, self.optima)?;
        let params = (0..space.k())
            .into_par_iter()
            .map(|i| self.param_result(kind, reference, &algorithm, i))
            .collect::<Result<Vec<_>>>()?;
        if !inp.optimizer.is_exhaustive() {
            let negative = algorithm.d.iter().filter(|&&d| d < 0.0).count();
            if negative > 0 {
                let msg = format!(
                    "{negative} dataset(s) have negative tunability w.r.t. {kind} defaults; \
                     the random search budget may be too small"
                );
                warn!("{msg}");
                warnings.push(msg);
            }
        }
        Ok(ReferenceResult {
            kind,
            reference: reference.clone(),
            algorithm,
            params,
        })
    }

    fn param_result(
        &self,
        kind: ReferenceKind,
        reference: &Configuration,
        algorithm: &AlgorithmTunability,
        i: usize,
    ) -> Result<ParamResult> {
        let inp = self.input;
        let space = inp.space;
        let conditional = !reference.is_active(i);
        let used = if conditional {
            conditional_reference(
                i,
                space,
                reference,
                inp.surfaces,
                &inp.transforms,
                inp.summary,
                inp.optimizer.search(Task::Defaults),
                self.seed(&[TAG_CONDITIONAL, kind.tag(), i as u64]),
            )?
        } else {
            reference.clone()
        };
        let cells = inp
            .surfaces
            .par_iter()
            .enumerate()
            .map(|(j, s)| {
                tunability_parameter(
                    i,
                    &used,
                    s,
                    space,
                    inp.optimizer.search(Task::Single),
                    self.seed(&[TAG_SINGLE, kind.tag(), j as u64, i as u64]),
                    algorithm.d[j],
                )
            })
            .collect::<Result<Vec<_>>>()?;
        let d: Vec<f64> = cells.iter().map(|c| c.d).collect();
        let rel: Vec<Option<f64>> = cells.iter().map(|c| c.rel).collect();
        Ok(ParamResult {
            name: space.param(i).name.clone(),
            reference: used,
            conditional_reference: conditional,
            d: Aggregates::of(&d),
            rel: Aggregates::of_defined(&rel),
            cells,
        })
    }

    fn pairs(&self, result: &ReferenceResult) -> Result<PairResult> {
        let inp = self.input;
        let space = inp.space;
        let k = space.k();
        let reference = &result.reference;
        let tag = result.kind.tag();
        let list: Vec<(usize, usize)> = (0..k)
            .flat_map(|a| (a + 1..k).map(move |b| (a, b)))
            .collect();
        let entries = list
            .par_iter()
            .map(|&(i1, i2)| -> Result<PairEntry> {
                let mut entry = PairEntry {
                    i1,
                    i2,
                    cells: vec![],
                    d: None,
                    g: None,
                    sequential_12: None,
                    sequential_21: None,
                    sequential_12_per_dataset: vec![],
                    sequential_21_per_dataset: vec![],
                    joint_risk: None,
                    skipped: None,
                };
                let inactive: Vec<&str> = [i1, i2]
                    .iter()
                    .filter(|&&i| !reference.is_active(i) || result.params[i].conditional_reference)
                    .map(|&i| space.param(i).name.as_str())
                    .collect();
                if !inactive.is_empty() {
                    entry.skipped = Some(format!("inactive under the reference: {}", inactive.join(", ")));
                    return Ok(entry);
                }
                let search = inp.optimizer.search(Task::Pair);
                let single = inp.optimizer.search(Task::Single);
                let per_dataset = inp
                    .surfaces
                    .par_iter()
                    .enumerate()
                    .map(|(j, s)| -> Result<(PairCell, Option<f64>, Option<f64>)> {
                        let (j64, a, b) = (j as u64, i1 as u64, i2 as u64);
                        let singles = (result.params[i1].cells[j].risk, result.params[i2].cells[j].risk);
                        let cell = tunability_pair(
                            i1,
                            i2,
                            reference,
                            s,
                            space,
                            search,
                            self.seed(&[TAG_PAIR, tag, j64, a, b]),
                            singles,
                        )?;
                        let seq = |first: usize, second: usize, order: u64| {
                            sequential_tuning(
                                first,
                                second,
                                reference,
                                s,
                                space,
                                single,
                                (
                                    self.seed(&[TAG_SEQUENTIAL, tag, j64, a, b, order, 0]),
                                    self.seed(&[TAG_SEQUENTIAL, tag, j64, a, b, order, 1]),
                                ),
                            )
                            .ok()
                            .map(|r| r.risk)
                        };
                        Ok((cell, seq(i1, i2, 0), seq(i2, i1, 1)))
                    })
                    .collect::<Result<Vec<_>>>()?;
                let mean = |v: &[f64]| (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64);
                let d: Vec<f64> = per_dataset.iter().map(|(c, _, _)| c.d).collect();
                let g: Vec<f64> = per_dataset.iter().map(|(c, _, _)| c.g).collect();
                let joint: Vec<f64> = per_dataset.iter().map(|(c, _, _)| c.risk).collect();
                let s12: Vec<f64> = per_dataset.iter().filter_map(|(_, s, _)| *s).collect();
                let s21: Vec<f64> = per_dataset.iter().filter_map(|(_, _, s)| *s).collect();
                entry.d = Aggregates::of(&d);
                entry.g = Aggregates::of(&g);
                entry.joint_risk = mean(&joint);
                if s12.len() == per_dataset.len() {
                    entry.sequential_12 = mean(&s12);
                }
                if s21.len() == per_dataset.len() {
                    entry.sequential_21 = mean(&s21);
                }
                entry.sequential_12_per_dataset = s12;
                entry.sequential_21_per_dataset = s21;
                entry.cells = per_dataset.into_iter().map(|(c, _, _)| c).collect();
                Ok(entry)
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(PairResult {
            reference: result.kind,
            entries,
        })
    }
}

/// Runs defaults, per-dataset optima, algorithm / parameter tunability for
/// the available references, and optionally pairs and cross-validation
/// across datasets.
pub fn analyze<S: RiskSurface>(input: &AnalysisInput<'_, S>) -> Result<TunabilityReport> {
    let space = input.space;
    let m = input.surfaces.len();
    if m == 0 {
        return Err(Error::InvalidInput("at least one dataset is required".into()));
    }
    if input.dataset_ids.len() != m || input.transforms.len() != m {
        return Err(Error::InvalidInput(format!(
            "{m} surfaces but {} dataset ids and {} transforms",
            input.dataset_ids.len(),
            input.transforms.len()
        )));
    }
    input.optimizer.check()?;
    if let Some(pkg) = &input.package_defaults {
        let v = validate_configuration(space, pkg);
        if !v.is_empty() {
            return Err(Error::Configuration(format!(
                "package defaults are invalid: {}",
                join_violations(&v)
            )));
        }
    }
    if input.reference == ReferenceKind::Package && input.package_defaults.is_none() {
        return Err(Error::InvalidInput(
            "the package reference needs package defaults".into(),
        ));
    }
    let seed = |path: &[u64]| derive_seed(input.optimizer.seed, path);
    let mut warnings = Vec::new();

    info!("computing optimal defaults over {m} datasets");
    let defaults = compute_defaults(
        input.surfaces,
        &input.transforms,
        input.summary,
        space,
        input.optimizer.search(Task::Defaults),
        seed(&[TAG_DEFAULTS]),
    )?;
    if defaults.near_ties > 0 {
        let msg = format!(
            "optimal defaults tie with {} other configuration(s) within 1e-12; the first found is reported",
            defaults.near_ties
        );
        warn!("{msg}");
        warnings.push(msg);
    }

    info!("computing per-dataset optima");
    let optima = input
        .surfaces
        .par_iter()
        .enumerate()
        .map(|(j, s)| {
            dataset_optimum(
                s,
                space,
                input.optimizer.search(Task::Optimum),
                seed(&[TAG_OPTIMUM, j as u64]),
            )
        })
        .collect::<Result<Vec<_>>>()?;

    let ctx = Ctx {
        input,
        optima: &optima,
        defaults: &defaults.theta_star,
    };
    info!("computing tunability w.r.t. optimal defaults");
    let optimal = ctx.reference_result(ReferenceKind::Optimal, ctx.defaults, &mut warnings)?;
    let package = match &input.package_defaults {
        Some(pkg) => {
            info!("computing tunability w.r.t. package defaults");
            Some(ctx.reference_result(ReferenceKind::Package, pkg, &mut warnings)?)
        }
        None => None,
    };

    let pairs = if input.pairs {
        info!("computing pair tunability");
        let base = match input.reference {
            ReferenceKind::Optimal => &optimal,
            ReferenceKind::Package => package.as_ref().expect("checked above"),
        };
        Some(ctx.pairs(base)?)
    } else {
        None
    };

    let cv = match input.cv_folds {
        Some(folds) => {
            info!("cross-validating defaults across datasets ({folds} folds)");
            Some(cv_across_datasets(
                input.surfaces,
                &input.transforms,
                input.summary,
                space,
                &optima,
                folds,
                input.optimizer.search(Task::Defaults),
                seed(&[TAG_CV]),
            )?)
        }
        None => None,
    };

    Ok(TunabilityReport {
        algorithm: space.algorithm().to_string(),
        dataset_ids: input.dataset_ids.clone(),
        summary: input.summary,
        optimizer: input.optimizer,
        optimal_defaults: defaults,
        optima,
        optimal,
        package,
        pairs,
        cv,
        warnings,
    })
}
