use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{encode, fit_surrogate, EncodedMatrix, SurrogateKind, SurrogateParams};
use crate::error::{Error, Result};
use crate::metadata::MetaDataset;
use crate::metrics::{kendall_tau, r_squared, Measure};
use crate::rng::{label_key, stream};

/// Cross-validated quality of one surrogate kind on one dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalEntry {
    pub dataset_id: String,
    pub kind: SurrogateKind,
    /// Mean over repetitions of R² on the pooled out-of-fold predictions.
    pub r2: Option<f64>,
    pub tau: Option<f64>,
    pub completed_folds: usize,
    pub planned_folds: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

/// Average over datasets for one kind.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KindSummary {
    pub kind: SurrogateKind,
    pub mean_r2: Option<f64>,
    pub mean_tau: Option<f64>,
    /// Datasets that contributed to the means.
    pub datasets: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SurrogateEvalReport {
    pub algorithm: String,
    pub measure: Measure,
    pub reps: usize,
    pub folds: usize,
    pub seed: u64,
    pub entries: Vec<EvalEntry>,
    pub summary: Vec<KindSummary>,
}

impl SurrogateEvalReport {
    pub fn has_errors(&self) -> bool {
        self.entries.iter().any(|e| e.error.is_some())
    }
}

struct RepOutcome {
    r2: Option<f64>,
    tau: Option<f64>,
    completed: usize,
    error: Option<String>,
}

fn run_rep(
    data: &EncodedMatrix,
    kind: SurrogateKind,
    params: &SurrogateParams,
    folds: usize,
    seed: u64,
    rep: usize,
) -> RepOutcome {
    let n = data.rows();
    let ds_key = label_key(&data.dataset_id);
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut stream(seed, &[ds_key, rep as u64]));
    let mut fold_of = vec![0; n];
    for (pos, &i) in order.iter().enumerate() {
        fold_of[i] = pos % folds;
    }
    let mut actual = Vec::with_capacity(n);
    let mut predicted = Vec::with_capacity(n);
    let mut completed = 0;
    let mut error = None;
    for f in 0..folds {
        let (test, train): (Vec<usize>, Vec<usize>) = (0..n).partition(|&i| fold_of[i] == f);
        let model_seed = crate::rng::derive_seed(
            seed,
            &[ds_key, label_key(kind.name()), rep as u64, f as u64],
        );
        match fit_surrogate(kind, &data.subset(&train), params, model_seed) {
            Ok(model) => {
                completed += 1;
                for &i in &test {
                    actual.push(data.y[i]);
                    predicted.push(model.predict_encoded(data.x.row(i)));
                }
            }
            Err(e) => {
                error.get_or_insert_with(|| e.to_string());
            }
        }
    }
    let r2 = r_squared(&actual, &predicted).ok();
    let tau = kendall_tau(&actual, &predicted).ok();
    if r2.is_none() && error.is_none() && completed > 0 {
        error = Some("held-out targets are constant; R² undefined".into());
    }
    RepOutcome {
        r2,
        tau,
        completed,
        error,
    }
}

fn mean(values: impl Iterator<Item = f64>) -> Option<f64> {
    let (s, c) = values.fold((0.0, 0usize), |(s, c), v| (s + v, c + 1));
    (c > 0).then(|| s / c as f64)
}

/// Repeated random-fold cross-validation of each surrogate kind on every
/// dataset of the meta-data. Datasets with fewer rows than folds get an
/// error entry instead of scores.
pub fn evaluate_surrogates(
    meta: &MetaDataset,
    measure: Measure,
    kinds: &[SurrogateKind],
    reps: usize,
    folds: usize,
    seed: u64,
    params: &SurrogateParams,
) -> Result<SurrogateEvalReport> {
    if kinds.is_empty() {
        return Err(Error::InvalidInput("no surrogate kinds to evaluate".into()));
    }
    if reps == 0 || folds < 2 {
        return Err(Error::InvalidInput(format!(
            "need reps >= 1 and folds >= 2 (got reps={reps}, folds={folds})"
        )));
    }
    if !meta.has_measure(measure) {
        return Err(Error::InvalidInput(format!(
            "measure {measure} is not present in the meta-data"
        )));
    }
    let matrices: Vec<(String, Result<EncodedMatrix>)> = meta
        .datasets
        .iter()
        .map(|d| (d.id.clone(), encode(&meta.space, meta.rows_for(&d.id), measure)))
        .collect();

    let cells: Vec<(usize, SurrogateKind)> = (0..matrices.len())
        .flat_map(|d| kinds.iter().map(move |&k| (d, k)))
        .collect();
    let entries: Vec<EvalEntry> = cells
        .par_iter()
        .map(|&(d, kind)| {
            let (id, data) = &matrices[d];
            let mut entry = EvalEntry {
                dataset_id: id.clone(),
                kind,
                r2: None,
                tau: None,
                completed_folds: 0,
                planned_folds: reps * folds,
                error: None,
            };
            let data = match data {
                Ok(m) if m.rows() >= folds => m,
                Ok(m) => {
                    entry.error = Some(format!(
                        "{} rows are fewer than {folds} folds",
                        m.rows()
                    ));
                    return entry;
                }
                Err(e) => {
                    entry.error = Some(e.to_string());
                    return entry;
                }
            };
            let outcomes: Vec<RepOutcome> = (0..reps)
                .into_par_iter()
                .map(|rep| run_rep(data, kind, params, folds, seed, rep))
                .collect();
            entry.completed_folds = outcomes.iter().map(|o| o.completed).sum();
            entry.r2 = mean(outcomes.iter().filter_map(|o| o.r2));
            entry.tau = mean(outcomes.iter().filter_map(|o| o.tau));
            entry.error = outcomes.into_iter().find_map(|o| o.error);
            entry
        })
        .collect();

    let summary = kinds
        .iter()
        .map(|&kind| {
            let scored: Vec<&EvalEntry> = entries
                .iter()
                .filter(|e| e.kind == kind && e.r2.is_some())
                .collect();
            KindSummary {
                kind,
                mean_r2: mean(scored.iter().filter_map(|e| e.r2)),
                mean_tau: mean(scored.iter().filter_map(|e| e.tau)),
                datasets: scored.len(),
            }
        })
        .collect();

    Ok(SurrogateEvalReport {
        algorithm: meta.algorithm.clone(),
        measure,
        reps,
        folds,
        seed,
        entries,
        summary,
    })
}

/// Highest mean R², then highest mean tau, then the fixed preference order
/// (forest first).
pub fn select_surrogate(report: &SurrogateEvalReport) -> Result<SurrogateKind> {
    let rank = |k: SurrogateKind| {
        SurrogateKind::PREFERENCE
            .iter()
            .position(|&p| p == k)
            .unwrap_or(usize::MAX)
    };
    report
        .summary
        .iter()
        .filter_map(|s| s.mean_r2.map(|r2| (s, r2)))
        .min_by(|(a, ra), (b, rb)| {
            rb.total_cmp(ra)
                .then_with(|| {
                    let ta = a.mean_tau.unwrap_or(f64::NEG_INFINITY);
                    let tb = b.mean_tau.unwrap_or(f64::NEG_INFINITY);
                    tb.total_cmp(&ta)
                })
                .then_with(|| rank(a.kind).cmp(&rank(b.kind)))
        })
        .map(|(s, _)| s.kind)
        .ok_or_else(|| Error::InvalidInput("surrogate report has no scored kinds".into()))
}
