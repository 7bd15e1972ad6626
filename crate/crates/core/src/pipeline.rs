//! End-to-end analysis of a meta-dataset: fit surrogates, run the
//! tunability analysis and compute tuning ranges.

use log::info;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::hyperspace::Configuration;
use crate::metadata::MetaDataset;
use crate::metrics::{to_risk, Measure, RiskTransform, ScalingMode, Summary};
use crate::ranges::{compute_ranges, RangeSpec};
use crate::report::ReportBundle;
use crate::rng::{derive_seed, label_key};
use crate::surrogate::{
    encode, evaluate_surrogates, fit_surrogate, select_surrogate, SurrogateCache, SurrogateKind,
    SurrogateModel, SurrogateParams,
};
use crate::tunability::{analyze, AnalysisInput, OptimizerSpec, ReferenceKind};

/// How the surrogate kind is chosen.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SurrogateChoice {
    Fixed(SurrogateKind),
    /// Evaluate all kinds by repeated cross-validation and keep the best.
    Select { reps: usize, folds: usize },
}

impl Default for SurrogateChoice {
    fn default() -> Self {
        SurrogateChoice::Fixed(SurrogateKind::ForestReg)
    }
}

#[derive(Debug, Clone)]
pub struct AnalyzeOptions {
    pub measure: Measure,
    pub scaling: ScalingMode,
    pub summary: Summary,
    pub optimizer: OptimizerSpec,
    pub surrogate: SurrogateChoice,
    pub surrogate_params: SurrogateParams,
    pub package_defaults: Option<Configuration>,
    pub reference: ReferenceKind,
    pub pairs: bool,
    pub cv_folds: Option<usize>,
    pub ranges: Option<RangeSpec>,
    pub cache: Option<SurrogateCache>,
}

impl AnalyzeOptions {
    pub fn new(measure: Measure, optimizer: OptimizerSpec) -> Self {
        AnalyzeOptions {
            measure,
            scaling: ScalingMode::None,
            summary: Summary::Mean,
            optimizer,
            surrogate: SurrogateChoice::default(),
            surrogate_params: SurrogateParams::default(),
            package_defaults: None,
            reference: ReferenceKind::Optimal,
            pairs: false,
            cv_folds: None,
            ranges: Some(RangeSpec::default()),
            cache: None,
        }
    }
}

/// Per-dataset scaling derived from the observed risks of each dataset.
pub fn risk_transforms(
    meta: &MetaDataset,
    measure: Measure,
    mode: ScalingMode,
) -> Result<Vec<RiskTransform>> {
    meta.datasets
        .iter()
        .map(|d| {
            if mode == ScalingMode::None {
                return Ok(RiskTransform::none());
            }
            let risks: Vec<f64> = meta
                .rows_for(&d.id)
                .filter_map(|r| r.measures.get(&measure))
                .map(|&v| to_risk(v, measure))
                .collect();
            let baseline = measure.baseline_risk(d.positive_fraction.unwrap_or(0.5));
            RiskTransform::from_observed(mode, &risks, baseline)
                .map_err(|e| Error::InvalidInput(format!("dataset `{}`: {e}", d.id)))
        })
        .collect()
}

/// Fits one surrogate per dataset, reusing cached fits when available.
pub fn fit_surrogates(
    meta: &MetaDataset,
    measure: Measure,
    kind: SurrogateKind,
    params: &SurrogateParams,
    seed: u64,
    cache: Option<&SurrogateCache>,
) -> Result<Vec<SurrogateModel>> {
    if !meta.has_measure(measure) {
        return Err(Error::InvalidInput(format!(
            "measure {measure} is not present in the meta-data"
        )));
    }
    meta.datasets
        .par_iter()
        .map(|d| {
            let data = encode(&meta.space, meta.rows_for(&d.id), measure)?;
            let s = derive_seed(seed, &[label_key("surrogate"), label_key(&d.id)]);
            match cache {
                Some(c) => c.get_or_fit(&meta.algorithm, &data, kind, params, s),
                None => fit_surrogate(kind, &data, params, s),
            }
            .map_err(|e| Error::Surrogate(format!("dataset `{}`: {e}", d.id)))
        })
        .collect()
}

pub fn analyze_meta(meta: &MetaDataset, opts: &AnalyzeOptions) -> Result<ReportBundle> {
    meta.validate()?;
    let seed = opts.optimizer.seed;
    let kind = match opts.surrogate {
        SurrogateChoice::Fixed(k) => k,
        SurrogateChoice::Select { reps, folds } => {
            let report = evaluate_surrogates(
                meta,
                opts.measure,
                &SurrogateKind::PREFERENCE,
                reps,
                folds,
                derive_seed(seed, &[label_key("evaluate")]),
                &opts.surrogate_params,
            )?;
            let k = select_surrogate(&report)?;
            info!("selected surrogate kind: {k}");
            k
        }
    };
    info!("fitting {kind} surrogates for {} datasets", meta.datasets.len());
    let surrogates = fit_surrogates(
        meta,
        opts.measure,
        kind,
        &opts.surrogate_params,
        seed,
        opts.cache.as_ref(),
    )?;
    let input = AnalysisInput {
        space: &meta.space,
        dataset_ids: meta.datasets.iter().map(|d| d.id.clone()).collect(),
        surfaces: &surrogates,
        transforms: risk_transforms(meta, opts.measure, opts.scaling)?,
        summary: opts.summary,
        optimizer: opts.optimizer,
        package_defaults: opts.package_defaults.clone(),
        reference: opts.reference,
        pairs: opts.pairs,
        cv_folds: opts.cv_folds,
    };
    let report = analyze(&input)?;
    let ranges = match &opts.ranges {
        Some(spec) => {
            let best: Vec<Configuration> = report.optima.iter().map(|o| o.config.clone()).collect();
            Some(compute_ranges(&best, &meta.space, spec)?)
        }
        None => None,
    };
    Ok(ReportBundle::new(
        &meta.space,
        opts.measure,
        opts.scaling,
        kind.name(),
        report,
        ranges,
    ))
}
