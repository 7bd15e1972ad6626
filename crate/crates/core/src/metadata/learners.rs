//! Cheap deterministic stand-ins for kknn, glmnet and rpart, plus
//! stratified cross-validation.

use std::collections::BTreeMap;
use std::str::FromStr;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hyperspace::{
    apply_trafo, bundled_space, join_violations, validate_configuration, Configuration,
    SearchSpace,
};
use crate::matrix::Matrix;
use crate::metadata::synthetic::LabeledDataset;
use crate::metrics::{accuracy, auc, brier, Measure};
use crate::rng::stream;
use crate::tree::{RegressionTree, TreeParams};

const LOGREG_ITERATIONS: usize = 500;
const LOGREG_STEP: f64 = 0.1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LearnerKind {
    KnnClassifier,
    ElasticnetLogreg,
    CartClassifier,
}

impl LearnerKind {
    pub const ALL: [LearnerKind; 3] = [
        LearnerKind::KnnClassifier,
        LearnerKind::ElasticnetLogreg,
        LearnerKind::CartClassifier,
    ];

    /// Name of the bundled search space this learner consumes.
    pub fn algorithm(self) -> &'static str {
        match self {
            LearnerKind::KnnClassifier => "kknn",
            LearnerKind::ElasticnetLogreg => "glmnet",
            LearnerKind::CartClassifier => "rpart",
        }
    }

    pub fn space(self) -> SearchSpace {
        bundled_space(self.algorithm()).expect("bundled space parses")
    }
}

impl FromStr for LearnerKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "knn" | "kknn" | "knn_classifier" => Ok(LearnerKind::KnnClassifier),
            "glmnet" | "elasticnet" | "elasticnet_logreg" => Ok(LearnerKind::ElasticnetLogreg),
            "rpart" | "cart" | "cart_classifier" => Ok(LearnerKind::CartClassifier),
            other => Err(Error::InvalidInput(format!("unknown learner `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ToyLearnerSpec {
    pub kind: LearnerKind,
    pub folds: usize,
}

/// Fitted elastic-net logistic regression on standardized features.
#[derive(Debug, Clone, PartialEq)]
pub struct LogisticModel {
    pub intercept: f64,
    pub coefficients: Vec<f64>,
    means: Vec<f64>,
    sds: Vec<f64>,
}

impl LogisticModel {
    pub fn predict_proba(&self, row: &[f64]) -> f64 {
        let mut z = self.intercept;
        for (j, x) in row.iter().enumerate() {
            z += self.coefficients[j] * (x - self.means[j]) / self.sds[j];
        }
        sigmoid(z)
    }
}

fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

fn soft_threshold(v: f64, t: f64) -> f64 {
    if v > t {
        v - t
    } else if v < -t {
        v + t
    } else {
        0.0
    }
}

/// Proximal gradient descent on the mean log-loss plus the elastic-net
/// penalty `lambda * (alpha * |w|_1 + (1 - alpha) / 2 * |w|_2^2)`.
pub fn fit_logreg(x: &Matrix, y: &[bool], alpha: f64, lambda: f64) -> LogisticModel {
    let (n, p) = (x.rows(), x.cols());
    let (means, sds) = x.column_stats();
    let z: Vec<f64> = (0..n)
        .flat_map(|i| (0..p).map(move |j| (i, j)))
        .map(|(i, j)| (x.get(i, j) - means[j]) / sds[j])
        .collect();
    let mut w = vec![0.0; p];
    let mut b = 0.0;
    let mut grad = vec![0.0; p];
    let l1 = LOGREG_STEP * lambda * alpha;
    let shrink = 1.0 + LOGREG_STEP * lambda * (1.0 - alpha);
    for _ in 0..LOGREG_ITERATIONS {
        grad.iter_mut().for_each(|g| *g = 0.0);
        let mut grad_b = 0.0;
        for i in 0..n {
            let row = &z[i * p..(i + 1) * p];
            let eta = b + row.iter().zip(&w).map(|(a, c)| a * c).sum::<f64>();
            let r = sigmoid(eta) - if y[i] { 1.0 } else { 0.0 };
            grad_b += r;
            for (g, a) in grad.iter_mut().zip(row) {
                *g += r * a;
            }
        }
        b -= LOGREG_STEP * grad_b / n as f64;
        for (wj, g) in w.iter_mut().zip(&grad) {
            *wj = soft_threshold(*wj - LOGREG_STEP * g / n as f64, l1) / shrink;
        }
    }
    LogisticModel {
        intercept: b,
        coefficients: w,
        means,
        sds,
    }
}

fn knn_scores(train_x: &Matrix, train_y: &[bool], test_x: &Matrix, k: usize) -> Vec<f64> {
    let (means, sds) = train_x.column_stats();
    let std_row = |row: &[f64]| -> Vec<f64> {
        row.iter()
            .zip(means.iter().zip(&sds))
            .map(|(x, (m, s))| (x - m) / s)
            .collect()
    };
    let train: Vec<Vec<f64>> = (0..train_x.rows()).map(|i| std_row(train_x.row(i))).collect();
    let k = k.clamp(1, train.len());
    let mut dist: Vec<(f64, usize)> = Vec::with_capacity(train.len());
    (0..test_x.rows())
        .map(|t| {
            let q = std_row(test_x.row(t));
            dist.clear();
            for (i, r) in train.iter().enumerate() {
                let d: f64 = r.iter().zip(&q).map(|(a, b)| (a - b).powi(2)).sum();
                dist.push((d, i));
            }
            dist.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
            let pos = dist[..k].iter().filter(|(_, i)| train_y[*i]).count();
            pos as f64 / k as f64
        })
        .collect()
}

fn effective(space: &SearchSpace, config: &Configuration, name: &str, ds: &LabeledDataset) -> Result<f64> {
    let i = space.require_index(name)?;
    let raw = config
        .value(i)
        .as_num()
        .ok_or_else(|| Error::Configuration(format!("{name} must be numeric")))?;
    apply_trafo(space.param(i), raw, Some(&ds.info))
}

/// Fits `kind` on the training rows and returns positive-class
/// probabilities for the test rows.
fn fit_predict(
    kind: LearnerKind,
    params: &BTreeMap<String, f64>,
    train_x: &Matrix,
    train_y: &[bool],
    test_x: &Matrix,
) -> Vec<f64> {
    match kind {
        LearnerKind::KnnClassifier => knn_scores(train_x, train_y, test_x, params["k"] as usize),
        LearnerKind::ElasticnetLogreg => {
            let m = fit_logreg(train_x, train_y, params["alpha"], params["lambda"]);
            (0..test_x.rows()).map(|i| m.predict_proba(test_x.row(i))).collect()
        }
        LearnerKind::CartClassifier => {
            let y: Vec<f64> = train_y.iter().map(|&l| if l { 1.0 } else { 0.0 }).collect();
            let tp = TreeParams {
                max_depth: params["maxdepth"] as usize,
                min_leaf: params["minbucket"] as usize,
                min_split: params["minsplit"] as usize,
                cp: params["cp"],
                mtry: None,
            };
            let idx: Vec<usize> = (0..y.len()).collect();
            let t = RegressionTree::fit(train_x, &y, &idx, tp, None);
            (0..test_x.rows()).map(|i| t.predict(test_x.row(i))).collect()
        }
    }
}

/// Stratified fold ids; each class is shuffled with `seed` and dealt
/// round-robin, continuing the rotation across classes.
pub fn stratified_folds(labels: &[bool], k: usize, seed: u64) -> Result<Vec<usize>> {
    let n = labels.len();
    if k < 2 || k > n {
        return Err(Error::InvalidInput(format!(
            "fold count {k} must lie in [2, {n}]"
        )));
    }
    let mut rng = stream(seed, &[0x5f01d]);
    let mut folds = vec![0; n];
    let mut next = 0;
    for class in [false, true] {
        let mut members: Vec<usize> = (0..n).filter(|&i| labels[i] == class).collect();
        if members.len() < k {
            return Err(Error::InvalidInput(format!(
                "fold count {k} exceeds the {} examples of class {}",
                members.len(),
                u8::from(class)
            )));
        }
        members.shuffle(&mut rng);
        for i in members {
            folds[i] = next % k;
            next += 1;
        }
    }
    Ok(folds)
}

/// Cross-validated performance of one configuration; measures are averaged
/// over folds and transformations are applied before training.
pub fn cross_validate(
    learner: &ToyLearnerSpec,
    config: &Configuration,
    dataset: &LabeledDataset,
    measures: &[Measure],
    seed: u64,
) -> Result<BTreeMap<Measure, f64>> {
    let space = learner.kind.space();
    let violations = validate_configuration(&space, config);
    if !violations.is_empty() {
        return Err(Error::Configuration(join_violations(&violations)));
    }
    let mut params = BTreeMap::new();
    for p in space.params() {
        params.insert(p.name.clone(), effective(&space, config, &p.name, dataset)?);
    }
    let folds = stratified_folds(&dataset.y, learner.folds, seed)?;
    let mut sums: BTreeMap<Measure, f64> = measures.iter().map(|&m| (m, 0.0)).collect();
    for f in 0..learner.folds {
        let (train, test): (Vec<usize>, Vec<usize>) = (0..folds.len()).partition(|&i| folds[i] != f);
        let train_x = dataset.x.select_rows(&train);
        let train_y: Vec<bool> = train.iter().map(|&i| dataset.y[i]).collect();
        let test_x = dataset.x.select_rows(&test);
        let test_y: Vec<bool> = test.iter().map(|&i| dataset.y[i]).collect();
        let probs = fit_predict(learner.kind, &params, &train_x, &train_y, &test_x);
        for (m, sum) in sums.iter_mut() {
            *sum += match m {
                Measure::Auc => auc(&probs, &test_y)?,
                Measure::Accuracy => {
                    let preds: Vec<bool> = probs.iter().map(|&p| p >= 0.5).collect();
                    accuracy(&preds, &test_y)?
                }
                Measure::Brier => brier(&probs, &test_y)?,
            };
        }
    }
    let k = learner.folds as f64;
    Ok(sums.into_iter().map(|(m, s)| (m, s / k)).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hyperspace::Value;
    use crate::metadata::synthetic::{make_synthetic_dataset, DatasetFamily};

    fn knn(k: f64) -> (ToyLearnerSpec, Configuration) {
        let spec = ToyLearnerSpec { kind: LearnerKind::KnnClassifier, folds: 5 };
        let c = spec.kind.space().configuration(vec![Value::Num(k)]);
        (spec, c)
    }

    #[test]
    fn knn_on_duplicated_separable_points() {
        let mut rows = Vec::new();
        let mut y = Vec::new();
        for i in 0..20 {
            let label = i % 2 == 0;
            let v = vec![if label { 5.0 } else { -5.0 } + i as f64 * 0.01, i as f64 * 0.1];
            rows.push(v.clone());
            rows.push(v);
            y.push(label);
            y.push(label);
        }
        let ds = LabeledDataset::new("dup", Matrix::from_rows(&rows), y).unwrap();
        let (spec, c) = knn(1.0);
        let m = cross_validate(&spec, &c, &ds, &[Measure::Auc], 3).unwrap();
        assert_eq!(m[&Measure::Auc], 1.0);
    }

    #[test]
    fn featureless_data_gives_chance_auc() {
        let (spec, c) = knn(7.0);
        let mean: f64 = (0..20)
            .map(|s| {
                let ds = make_synthetic_dataset(DatasetFamily::GaussianBlobs, 100, 2, 0.0, s).unwrap();
                cross_validate(&spec, &c, &ds, &[Measure::Auc], s).unwrap()[&Measure::Auc]
            })
            .sum::<f64>()
            / 20.0;
        assert!((mean - 0.5).abs() <= 0.05, "{mean}");
    }

    #[test]
    fn heavy_penalty_shrinks_coefficients() {
        let ds = make_synthetic_dataset(DatasetFamily::GaussianBlobs, 100, 3, 4.0, 5).unwrap();
        for alpha in [0.0, 0.5, 1.0] {
            let m = fit_logreg(&ds.x, &ds.y, alpha, 1024.0);
            assert!(m.coefficients.iter().all(|c| c.abs() < 1e-3), "{alpha}: {:?}", m.coefficients);
        }
        let spec = ToyLearnerSpec { kind: LearnerKind::ElasticnetLogreg, folds: 5 };
        let c = spec.kind.space().configuration(vec![Value::Num(0.5), Value::Num(10.0)]);
        let auc = cross_validate(&spec, &c, &ds, &[Measure::Auc], 1).unwrap()[&Measure::Auc];
        assert!((auc - 0.5).abs() < 1e-12, "{auc}");
    }

    #[test]
    fn weak_penalty_learns_blobs() {
        let ds = make_synthetic_dataset(DatasetFamily::GaussianBlobs, 100, 3, 4.0, 5).unwrap();
        let spec = ToyLearnerSpec { kind: LearnerKind::ElasticnetLogreg, folds: 5 };
        let c = spec.kind.space().configuration(vec![Value::Num(0.5), Value::Num(-10.0)]);
        let m = cross_validate(&spec, &c, &ds, &Measure::ALL, 1).unwrap();
        assert!(m[&Measure::Auc] > 0.9);
        assert!(m[&Measure::Accuracy] > 0.8);
        assert!(m[&Measure::Brier] < 0.15);
    }

    #[test]
    fn cart_learns_blobs() {
        let ds = make_synthetic_dataset(DatasetFamily::GaussianBlobs, 200, 2, 4.0, 8).unwrap();
        let spec = ToyLearnerSpec { kind: LearnerKind::CartClassifier, folds: 5 };
        let c = spec.kind.space().configuration(vec![
            Value::Num(0.01),
            Value::Num(30.0),
            Value::Num(7.0),
            Value::Num(20.0),
        ]);
        let m = cross_validate(&spec, &c, &ds, &[Measure::Auc], 1).unwrap();
        assert!(m[&Measure::Auc] > 0.85);
    }

    #[test]
    fn too_many_folds() {
        let ds = make_synthetic_dataset(DatasetFamily::GaussianBlobs, 20, 2, 1.0, 0).unwrap();
        let (mut spec, c) = knn(3.0);
        spec.folds = 21;
        assert!(cross_validate(&spec, &c, &ds, &[Measure::Auc], 0).is_err());
        spec.folds = 11;
        assert!(cross_validate(&spec, &c, &ds, &[Measure::Auc], 0).is_err());
    }

    #[test]
    fn folds_are_stratified_and_seeded() {
        let labels: Vec<bool> = (0..50).map(|i| i % 5 == 0).collect();
        let a = stratified_folds(&labels, 5, 1).unwrap();
        assert_eq!(a, stratified_folds(&labels, 5, 1).unwrap());
        for f in 0..5 {
            let pos = (0..50).filter(|&i| a[i] == f && labels[i]).count();
            assert_eq!(pos, 2);
        }
    }
}
