//! Optimal defaults and tunability measures computed on risk surfaces.

mod analysis;
mod optimizer;

use log::warn;
use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use analysis::{
    analyze, improvement, AnalysisInput, PairEntry, ParamResult, ReferenceKind, ReferenceResult,
    TunabilityReport,
};
pub use optimizer::{grid_size, minimize, Optimum, Search, TIE_TOLERANCE};

use crate::error::{Error, Result};
use crate::hyperspace::{Configuration, SearchSpace, Value};
use crate::metrics::{quantile, summarize, RiskTransform, Summary};
use crate::rng::stream;
use crate::surface::RiskSurface;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum OptimizerMode {
    Random,
    Grid { levels: usize },
}

/// Random-search budgets per kind of minimization.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Budgets {
    pub defaults: usize,
    pub optimum: usize,
    pub single: usize,
    pub pair: usize,
}

impl Default for Budgets {
    fn default() -> Self {
        Budgets {
            defaults: 100_000,
            optimum: 100_000,
            single: 100_000,
            pair: 10_000,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Task {
    Defaults,
    Optimum,
    Single,
    Pair,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct OptimizerSpec {
    pub mode: OptimizerMode,
    pub budgets: Budgets,
    pub seed: u64,
}

impl OptimizerSpec {
    pub fn random(seed: u64) -> Self {
        OptimizerSpec {
            mode: OptimizerMode::Random,
            budgets: Budgets::default(),
            seed,
        }
    }

    pub fn grid(levels: usize, seed: u64) -> Self {
        OptimizerSpec {
            mode: OptimizerMode::Grid { levels },
            budgets: Budgets::default(),
            seed,
        }
    }

    pub fn is_exhaustive(&self) -> bool {
        matches!(self.mode, OptimizerMode::Grid { .. })
    }

    pub fn search(&self, task: Task) -> Search {
        match self.mode {
            OptimizerMode::Grid { levels } => Search::Grid { levels },
            OptimizerMode::Random => Search::Random {
                budget: match task {
                    Task::Defaults => self.budgets.defaults,
                    Task::Optimum => self.budgets.optimum,
                    Task::Single => self.budgets.single,
                    Task::Pair => self.budgets.pair,
                },
            },
        }
    }

    pub fn check(&self) -> Result<()> {
        let b = self.budgets;
        match self.mode {
            OptimizerMode::Grid { levels } if levels < 2 => Err(Error::InvalidInput(
                "grid search needs at least 2 levels".into(),
            )),
            OptimizerMode::Random
                if [b.defaults, b.optimum, b.single, b.pair].contains(&0) =>
            {
                Err(Error::InvalidInput("search budgets must be positive".into()))
            }
            _ => Ok(()),
        }
    }
}

/// Mean, median and the 0.1 / 0.9 quantiles of per-dataset values.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Aggregates {
    pub mean: f64,
    pub median: f64,
    pub q10: f64,
    pub q90: f64,
    pub count: usize,
}

impl Aggregates {
    /// `None` when there are no values.
    pub fn of(values: &[f64]) -> Option<Self> {
        if values.is_empty() {
            return None;
        }
        Some(Aggregates {
            mean: values.iter().sum::<f64>() / values.len() as f64,
            median: quantile(values, 0.5).ok()?,
            q10: quantile(values, 0.1).ok()?,
            q90: quantile(values, 0.9).ok()?,
            count: values.len(),
        })
    }

    pub fn of_defined(values: &[Option<f64>]) -> Option<Self> {
        Self::of(&values.iter().flatten().copied().collect::<Vec<_>>())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DefaultsResult {
    pub theta_star: Configuration,
    /// Summary of the scaled per-dataset risks at `theta_star`.
    pub aggregated: f64,
    /// Unscaled per-dataset risks at `theta_star`.
    pub per_dataset: Vec<f64>,
    pub near_ties: usize,
}

fn check_transforms<S>(surfaces: &[S], transforms: &[RiskTransform]) -> Result<()> {
    if surfaces.is_empty() {
        return Err(Error::InvalidInput("at least one dataset is required".into()));
    }
    if surfaces.len() != transforms.len() {
        return Err(Error::InvalidInput(format!(
            "{} surfaces but {} risk transforms",
            surfaces.len(),
            transforms.len()
        )));
    }
    transforms.iter().try_for_each(RiskTransform::check)
}

/// Objective of the default search: the summary of scaled per-dataset risks.
fn defaults_objective<'a, S: RiskSurface>(
    surfaces: &'a [S],
    transforms: &'a [RiskTransform],
    summary: Summary,
) -> impl Fn(&Configuration) -> f64 + Sync + 'a {
    move |c: &Configuration| {
        let scaled: Vec<f64> = surfaces
            .iter()
            .zip(transforms)
            .map(|(s, t)| t.apply(s.risk(c)))
            .collect();
        summarize(&scaled, summary).unwrap_or(f64::INFINITY)
    }
}

/// Optimal defaults restricted to configurations agreeing with `fixed`.
pub fn compute_defaults_fixed<S: RiskSurface>(
    surfaces: &[S],
    transforms: &[RiskTransform],
    summary: Summary,
    space: &SearchSpace,
    fixed: &[Option<Value>],
    search: Search,
    seed: u64,
) -> Result<DefaultsResult> {
    check_transforms(surfaces, transforms)?;
    summary.check()?;
    let opt = minimize(
        space,
        fixed,
        defaults_objective(surfaces, transforms, summary),
        search,
        seed,
    )?;
    let per_dataset = surfaces.iter().map(|s| s.risk(&opt.config)).collect();
    Ok(DefaultsResult {
        theta_star: opt.config,
        aggregated: opt.risk,
        per_dataset,
        near_ties: opt.near_ties,
    })
}

/// The configuration minimizing the summary of scaled risks across datasets.
pub fn compute_defaults<S: RiskSurface>(
    surfaces: &[S],
    transforms: &[RiskTransform],
    summary: Summary,
    space: &SearchSpace,
    search: Search,
    seed: u64,
) -> Result<DefaultsResult> {
    compute_defaults_fixed(surfaces, transforms, summary, space, &vec![None; space.k()], search, seed)
}

/// Best configuration for a single dataset.
pub fn dataset_optimum<S: RiskSurface>(
    surface: &S,
    space: &SearchSpace,
    search: Search,
    seed: u64,
) -> Result<Optimum> {
    minimize(space, &vec![None; space.k()], |c| surface.risk(c), search, seed)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AlgorithmTunability {
    pub reference_risks: Vec<f64>,
    /// Risk at the reference minus risk at the dataset's optimum.
    pub d: Vec<f64>,
    pub aggregates: Option<Aggregates>,
}

pub fn tunability_algorithm<S: RiskSurface>(
    reference: &Configuration,
    surfaces: &[S],
    optima: &[Optimum],
) -> Result<AlgorithmTunability> {
    if surfaces.len() != optima.len() {
        return Err(Error::InvalidInput(format!(
            "{} surfaces but {} optima",
            surfaces.len(),
            optima.len()
        )));
    }
    let reference_risks: Vec<f64> = surfaces.iter().map(|s| s.risk(reference)).collect();
    let d: Vec<f64> = reference_risks
        .iter()
        .zip(optima)
        .map(|(r, o)| r - o.risk)
        .collect();
    Ok(AlgorithmTunability {
        aggregates: Aggregates::of(&d),
        reference_risks,
        d,
    })
}

fn fixed_except(reference: &Configuration, free: &[usize]) -> Vec<Option<Value>> {
    (0..reference.len())
        .map(|i| (!free.contains(&i)).then(|| reference.value(i)))
        .collect()
}

fn require_active(space: &SearchSpace, reference: &Configuration, i: usize) -> Result<()> {
    if i >= space.k() {
        return Err(Error::UnknownParameter(format!("parameter index {i}")));
    }
    if !reference.is_active(i) {
        return Err(Error::InactiveParameter(space.param(i).name.clone()));
    }
    Ok(())
}

/// Outcome of tuning one parameter with all others at the reference.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamCell {
    pub best: Configuration,
    pub risk: f64,
    pub d: f64,
    /// `d / d_total`, undefined when the dataset's total tunability is 0.
    pub rel: Option<f64>,
}

/// Tunes parameter `i` only. `d_total` is the dataset's overall tunability
/// for the same reference, used for the relative value.
pub fn tunability_parameter<S: RiskSurface>(
    i: usize,
    reference: &Configuration,
    surface: &S,
    space: &SearchSpace,
    search: Search,
    seed: u64,
    d_total: f64,
) -> Result<ParamCell> {
    require_active(space, reference, i)?;
    let opt = minimize(space, &fixed_except(reference, &[i]), |c| surface.risk(c), search, seed)?;
    let d = surface.risk(reference) - opt.risk;
    Ok(ParamCell {
        best: opt.config,
        risk: opt.risk,
        d,
        rel: (d_total != 0.0).then(|| d / d_total),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairCell {
    pub best: Configuration,
    pub risk: f64,
    pub d: f64,
    /// Extra gain over tuning only the better of the two parameters.
    pub g: f64,
}

/// Tunes parameters `i1` and `i2` jointly. `single_risks` are the risks
/// reached when tuning each of them alone.
pub fn tunability_pair<S: RiskSurface>(
    i1: usize,
    i2: usize,
    reference: &Configuration,
    surface: &S,
    space: &SearchSpace,
    search: Search,
    seed: u64,
    single_risks: (f64, f64),
) -> Result<PairCell> {
    if i1 == i2 {
        return Err(Error::InvalidInput("a pair needs two distinct parameters".into()));
    }
    require_active(space, reference, i1)?;
    require_active(space, reference, i2)?;
    let opt = minimize(
        space,
        &fixed_except(reference, &[i1, i2]),
        |c| surface.risk(c),
        search,
        seed,
    )?;
    Ok(PairCell {
        d: surface.risk(reference) - opt.risk,
        g: single_risks.0.min(single_risks.1) - opt.risk,
        best: opt.config,
        risk: opt.risk,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SequentialResult {
    pub after_first: Configuration,
    pub best: Configuration,
    pub risk: f64,
}

/// Tunes `first` with everything else at the reference, freezes it at its
/// optimum, then tunes `second`.
pub fn sequential_tuning<S: RiskSurface>(
    first: usize,
    second: usize,
    reference: &Configuration,
    surface: &S,
    space: &SearchSpace,
    search: Search,
    seeds: (u64, u64),
) -> Result<SequentialResult> {
    if first == second {
        return Err(Error::InvalidInput("a pair needs two distinct parameters".into()));
    }
    require_active(space, reference, first)?;
    require_active(space, reference, second)?;
    let step1 = minimize(space, &fixed_except(reference, &[first]), |c| surface.risk(c), search, seeds.0)?;
    if !step1.config.is_active(second) {
        return Err(Error::InactiveParameter(space.param(second).name.clone()));
    }
    let step2 = minimize(
        space,
        &fixed_except(&step1.config, &[second]),
        |c| surface.risk(c),
        search,
        seeds.1,
    )?;
    Ok(SequentialResult {
        after_first: step1.config,
        best: step2.config,
        risk: step2.risk,
    })
}

/// Reference for a conditional parameter that is inactive under `defaults`:
/// the parent is pinned to the first activating level and all other
/// parameters are re-optimized as defaults.
pub fn conditional_reference<S: RiskSurface>(
    i: usize,
    space: &SearchSpace,
    defaults: &Configuration,
    surfaces: &[S],
    transforms: &[RiskTransform],
    summary: Summary,
    search: Search,
    seed: u64,
) -> Result<Configuration> {
    let Some((parent, levels)) = space.condition_of(i) else {
        return Err(Error::NotConditional(
            space.params().get(i).map_or_else(|| format!("parameter index {i}"), |p| p.name.clone()),
        ));
    };
    if defaults.is_active(i) {
        return Ok(defaults.clone());
    }
    let level = *levels.iter().min().ok_or_else(|| {
        Error::Space(format!("condition of `{}` has no activating level", space.param(i).name))
    })?;
    let mut fixed = vec![None; space.k()];
    fixed[parent] = Some(Value::Level(level));
    Ok(compute_defaults_fixed(surfaces, transforms, summary, space, &fixed, search, seed)?.theta_star)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CvResult {
    pub folds: usize,
    /// Fold index of each dataset.
    pub fold_of: Vec<usize>,
    /// Defaults computed without each fold's datasets.
    pub fold_defaults: Vec<Configuration>,
    /// Risk at the held-out defaults minus risk at the dataset's optimum.
    pub d: Vec<f64>,
    pub aggregates: Option<Aggregates>,
}

/// Seeded random assignment of `m` items to `folds` balanced folds.
pub fn assign_folds(m: usize, folds: usize, seed: u64) -> Vec<usize> {
    let mut order: Vec<usize> = (0..m).collect();
    order.shuffle(&mut stream(seed, &[]));
    let mut fold_of = vec![0; m];
    for (pos, &j) in order.iter().enumerate() {
        fold_of[j] = pos % folds;
    }
    fold_of
}

/// Cross-validation across datasets: defaults are computed on the training
/// datasets of each fold and evaluated on the held-out ones.
#[allow(clippy::too_many_arguments)]
pub fn cv_across_datasets<S: RiskSurface>(
    surfaces: &[S],
    transforms: &[RiskTransform],
    summary: Summary,
    space: &SearchSpace,
    optima: &[Optimum],
    folds: usize,
    search: Search,
    seed: u64,
) -> Result<CvResult> {
    let m = surfaces.len();
    check_transforms(surfaces, transforms)?;
    if folds < 2 || m < folds {
        return Err(Error::InvalidInput(format!(
            "cross-validation across datasets needs 2 <= folds <= datasets (folds={folds}, datasets={m})"
        )));
    }
    if optima.len() != m {
        return Err(Error::InvalidInput(format!("{m} surfaces but {} optima", optima.len())));
    }
    let fold_of = assign_folds(m, folds, crate::rng::derive_seed(seed, &[0]));
    let fold_defaults: Vec<Configuration> = (0..folds)
        .into_par_iter()
        .map(|f| {
            let train: Vec<usize> = (0..m).filter(|&j| fold_of[j] != f).collect();
            let s: Vec<&S> = train.iter().map(|&j| &surfaces[j]).collect();
            let t: Vec<RiskTransform> = train.iter().map(|&j| transforms[j]).collect();
            let fold_seed = crate::rng::derive_seed(seed, &[1, f as u64]);
            compute_defaults(&s, &t, summary, space, search, fold_seed).map(|r| r.theta_star)
        })
        .collect::<Result<_>>()?;
    let d: Vec<f64> = (0..m)
        .map(|j| surfaces[j].risk(&fold_defaults[fold_of[j]]) - optima[j].risk)
        .collect();
    if d.iter().any(|&v| v < 0.0) && !matches!(search, Search::Grid { .. }) {
        warn!("negative held-out tunability under random search; consider a larger budget");
    }
    Ok(CvResult {
        folds,
        fold_of,
        fold_defaults,
        aggregates: Aggregates::of(&d),
        d,
    })
}
