use log::warn;
use rayon::prelude::*;

use super::learners::{cross_validate, LearnerKind, ToyLearnerSpec};
use super::synthetic::LabeledDataset;
use super::{ExperimentRow, MetaDataset};
use crate::error::{Error, Result};
use crate::hyperspace::sample_configuration;
use crate::metrics::Measure;
use crate::rng::{derive_seed, label_key, stream};

#[derive(Debug, Clone, PartialEq)]
pub struct BotSettings {
    pub rows_per_pair: usize,
    pub folds: usize,
    pub measures: Vec<Measure>,
    pub seed: u64,
}

/// Random-bot meta-data: for every (learner, dataset) pair, `rows_per_pair`
/// uniformly sampled configurations evaluated by cross-validation.
///
/// Each row draws from a stream keyed by (seed, learner, dataset, row), so
/// the output does not depend on the number of worker threads.
pub fn generate_bot_data(
    learners: &[LearnerKind],
    datasets: &[LabeledDataset],
    settings: &BotSettings,
) -> Result<Vec<MetaDataset>> {
    if settings.rows_per_pair == 0 {
        return Err(Error::InvalidInput("rows_per_pair must be at least 1".into()));
    }
    if datasets.is_empty() {
        return Err(Error::InvalidInput("no datasets".into()));
    }
    if settings.measures.is_empty() {
        return Err(Error::InvalidInput("no measures".into()));
    }
    learners
        .iter()
        .map(|&kind| {
            let space = kind.space();
            let spec = ToyLearnerSpec {
                kind,
                folds: settings.folds,
            };
            let cells: Vec<(usize, usize)> = (0..datasets.len())
                .flat_map(|d| (0..settings.rows_per_pair).map(move |r| (d, r)))
                .collect();
            let rows: Vec<Option<ExperimentRow>> = cells
                .par_iter()
                .map(|&(d, r)| {
                    let ds = &datasets[d];
                    let path = [label_key(kind.algorithm()), label_key(&ds.info.id), r as u64];
                    let mut rng = stream(settings.seed, &path);
                    let config = sample_configuration(&space, &mut rng);
                    let cv_seed = derive_seed(settings.seed, &[path[0], path[1], path[2], 1]);
                    match cross_validate(&spec, &config, ds, &settings.measures, cv_seed) {
                        Ok(measures) => Some(ExperimentRow {
                            dataset_id: ds.info.id.clone(),
                            config,
                            measures,
                        }),
                        Err(e) => {
                            warn!("{} on {} row {r}: evaluation dropped: {e}", kind.algorithm(), ds.info.id);
                            None
                        }
                    }
                })
                .collect();
            Ok(MetaDataset {
                algorithm: kind.algorithm().to_string(),
                space,
                datasets: datasets.iter().map(|d| d.info.clone()).collect(),
                measures: settings.measures.clone(),
                rows: rows.into_iter().flatten().collect(),
                seed: Some(settings.seed),
            })
        })
        .collect()
}
