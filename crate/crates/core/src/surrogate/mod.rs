//! Per-dataset regression surrogates of the risk.

mod cache;
mod encode;
mod evaluate;

use std::fmt;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use cache::SurrogateCache;
pub use encode::{encode, Column, EncodedMatrix, Encoder};
pub use evaluate::{evaluate_surrogates, select_surrogate, EvalEntry, KindSummary, SurrogateEvalReport};

use crate::error::{Error, Result};
use crate::hyperspace::Configuration;
use crate::matrix::Matrix;
use crate::metrics::Measure;
use crate::rng::stream;
use crate::surface::RiskSurface;
use crate::tree::{RegressionTree, TreeParams};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SurrogateKind {
    Constant,
    Linear,
    KnnReg,
    CartReg,
    ForestReg,
}

impl SurrogateKind {
    /// Tie-break order of [`select_surrogate`], best first.
    pub const PREFERENCE: [SurrogateKind; 5] = [
        SurrogateKind::ForestReg,
        SurrogateKind::CartReg,
        SurrogateKind::KnnReg,
        SurrogateKind::Linear,
        SurrogateKind::Constant,
    ];

    pub fn name(self) -> &'static str {
        match self {
            SurrogateKind::Constant => "constant",
            SurrogateKind::Linear => "linear",
            SurrogateKind::KnnReg => "knn",
            SurrogateKind::CartReg => "cart",
            SurrogateKind::ForestReg => "forest",
        }
    }
}

impl fmt::Display for SurrogateKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for SurrogateKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "constant" => Ok(SurrogateKind::Constant),
            "linear" | "lm" => Ok(SurrogateKind::Linear),
            "knn" | "knn_reg" | "kknn" => Ok(SurrogateKind::KnnReg),
            "cart" | "cart_reg" | "rpart" => Ok(SurrogateKind::CartReg),
            "forest" | "forest_reg" | "ranger" => Ok(SurrogateKind::ForestReg),
            other => Err(Error::InvalidInput(format!("unknown surrogate kind `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SurrogateParams {
    pub knn_k: usize,
    pub cart: TreeParams,
    pub forest_trees: usize,
    pub forest_tree: TreeParams,
}

impl Default for SurrogateParams {
    fn default() -> Self {
        SurrogateParams {
            knn_k: 7,
            cart: TreeParams::default(),
            forest_trees: 100,
            // mtry None here means max(1, cols / 3), resolved at fit time
            forest_tree: TreeParams::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
enum Fitted {
    Constant(f64),
    Linear(Vec<f64>),
    Knn {
        x: Matrix,
        y: Vec<f64>,
        means: Vec<f64>,
        sds: Vec<f64>,
        k: usize,
    },
    Tree(RegressionTree),
    Forest(Vec<RegressionTree>),
}

/// A fitted surrogate for one (dataset, measure) pair.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SurrogateModel {
    pub kind: SurrogateKind,
    pub dataset_id: String,
    pub measure: Measure,
    encoder: Encoder,
    fitted: Fitted,
}

fn fit_linear(x: &Matrix, y: &[f64]) -> Result<Vec<f64>> {
    let (n, p) = (x.rows(), x.cols());
    if n < p + 1 {
        return Err(Error::Surrogate(format!(
            "linear surrogate needs at least {} rows, got {n}",
            p + 1
        )));
    }
    let design = DMatrix::from_fn(n, p + 1, |i, j| if j == 0 { 1.0 } else { x.get(i, j - 1) });
    let target = DVector::from_column_slice(y);
    let svd = design.svd(true, true);
    let coef = svd
        .solve(&target, 1e-10)
        .map_err(|e| Error::Surrogate(format!("least squares failed: {e}")))?;
    Ok(coef.iter().copied().collect())
}

fn knn_predict(x: &Matrix, y: &[f64], means: &[f64], sds: &[f64], k: usize, q: &[f64]) -> f64 {
    let zq: Vec<f64> = q
        .iter()
        .zip(means.iter().zip(sds))
        .map(|(v, (m, s))| (v - m) / s)
        .collect();
    let mut d: Vec<(f64, usize)> = (0..x.rows())
        .map(|i| {
            let dist = x
                .row(i)
                .iter()
                .zip(&zq)
                .map(|(a, b)| (a - b).powi(2))
                .sum::<f64>()
                .sqrt();
            (dist, i)
        })
        .collect();
    d.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    let near = &d[..k];
    let exact: Vec<usize> = near.iter().filter(|(dist, _)| *dist == 0.0).map(|(_, i)| *i).collect();
    if !exact.is_empty() {
        return exact.iter().map(|&i| y[i]).sum::<f64>() / exact.len() as f64;
    }
    let (mut num, mut den) = (0.0, 0.0);
    for &(dist, i) in near {
        let w = 1.0 / dist;
        num += w * y[i];
        den += w;
    }
    num / den
}

/// Fits a surrogate of the given kind.
pub fn fit_surrogate(
    kind: SurrogateKind,
    data: &EncodedMatrix,
    params: &SurrogateParams,
    seed: u64,
) -> Result<SurrogateModel> {
    let n = data.rows();
    if n == 0 {
        return Err(Error::Surrogate("no training rows".into()));
    }
    let x = &data.x;
    let y = &data.y;
    let fitted = match kind {
        SurrogateKind::Constant => Fitted::Constant(y.iter().sum::<f64>() / n as f64),
        SurrogateKind::Linear => Fitted::Linear(fit_linear(x, y)?),
        SurrogateKind::KnnReg => {
            let k = params.knn_k;
            if k == 0 || k > n {
                return Err(Error::Surrogate(format!(
                    "knn surrogate with k={k} needs at least k rows, got {n}"
                )));
            }
            let (means, sds) = x.column_stats();
            let mut z = Vec::with_capacity(n * x.cols());
            for i in 0..n {
                for (j, v) in x.row(i).iter().enumerate() {
                    z.push((v - means[j]) / sds[j]);
                }
            }
            Fitted::Knn {
                x: Matrix::new(z, n, x.cols()),
                y: y.clone(),
                means,
                sds,
                k,
            }
        }
        SurrogateKind::CartReg => {
            let idx: Vec<usize> = (0..n).collect();
            Fitted::Tree(RegressionTree::fit(x, y, &idx, params.cart, None))
        }
        SurrogateKind::ForestReg => {
            let mut tp = params.forest_tree;
            tp.mtry = Some(tp.mtry.unwrap_or((x.cols() / 3).max(1)));
            let trees = (0..params.forest_trees)
                .into_par_iter()
                .map(|t| {
                    let mut rng = stream(seed, &[0xf0e5, t as u64]);
                    let boot: Vec<usize> = (0..n).map(|_| rng.random_range(0..n)).collect();
                    RegressionTree::fit(x, y, &boot, tp, Some(&mut rng))
                })
                .collect::<Vec<_>>();
            if trees.is_empty() {
                return Err(Error::Surrogate("forest needs at least one tree".into()));
            }
            Fitted::Forest(trees)
        }
    };
    Ok(SurrogateModel {
        kind,
        dataset_id: data.dataset_id.clone(),
        measure: data.measure,
        encoder: data.encoder.clone(),
        fitted,
    })
}

impl SurrogateModel {
    /// Prediction for an already encoded row.
    pub fn predict_encoded(&self, row: &[f64]) -> f64 {
        match &self.fitted {
            Fitted::Constant(c) => *c,
            Fitted::Linear(coef) => {
                coef[0] + coef[1..].iter().zip(row).map(|(c, v)| c * v).sum::<f64>()
            }
            Fitted::Knn { x, y, means, sds, k } => knn_predict(x, y, means, sds, *k, row),
            Fitted::Tree(t) => t.predict(row),
            Fitted::Forest(trees) => {
                trees.iter().map(|t| t.predict(row)).sum::<f64>() / trees.len() as f64
            }
        }
    }

    /// Estimated risk of a configuration.
    pub fn predict(&self, config: &Configuration) -> f64 {
        self.predict_encoded(&self.encoder.encode(config))
    }

    pub fn encoder(&self) -> &Encoder {
        &self.encoder
    }
}

impl RiskSurface for SurrogateModel {
    fn risk(&self, config: &Configuration) -> f64 {
        self.predict(config)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hyperspace::parse_space;
    use proptest::prelude::*;
    use rand::Rng;

    fn one_d(xs: &[f64], ys: &[f64]) -> EncodedMatrix {
        let space = parse_space(r#"{"algorithm":"t","params":[{"name":"a","kind":"numeric","lower":-100,"upper":100}]}"#).unwrap();
        EncodedMatrix {
            x: Matrix::new(xs.to_vec(), xs.len(), 1),
            y: ys.to_vec(),
            encoder: Encoder::new(&space),
            dataset_id: "d".into(),
            measure: Measure::Brier,
        }
    }

    fn two_d(n: usize, f: impl Fn(f64, f64) -> f64) -> EncodedMatrix {
        let space = parse_space(
            r#"{"algorithm":"t","params":[
                {"name":"a","kind":"numeric","lower":0,"upper":1},
                {"name":"b","kind":"numeric","lower":0,"upper":1}]}"#,
        )
        .unwrap();
        let mut rng = stream(42, &[]);
        let mut data = Vec::new();
        let mut y = Vec::new();
        for _ in 0..n {
            let (a, b): (f64, f64) = (rng.random(), rng.random());
            data.extend([a, b]);
            y.push(f(a, b));
        }
        EncodedMatrix {
            x: Matrix::new(data, n, 2),
            y,
            encoder: Encoder::new(&space),
            dataset_id: "d".into(),
            measure: Measure::Brier,
        }
    }

    #[test]
    fn constant_predicts_mean() {
        let m = fit_surrogate(SurrogateKind::Constant, &one_d(&[1.0, 2.0], &[0.2, 0.4]), &SurrogateParams::default(), 0).unwrap();
        assert!((m.predict_encoded(&[50.0]) - 0.3).abs() < 1e-15);
    }

    #[test]
    fn knn_k1_returns_training_target() {
        let data = one_d(&[1.0, 2.0, 3.0], &[0.5, 0.1, 0.9]);
        let p = SurrogateParams { knn_k: 1, ..Default::default() };
        let m = fit_surrogate(SurrogateKind::KnnReg, &data, &p, 0).unwrap();
        assert_eq!(m.predict_encoded(&[2.0]), 0.1);
        let p = SurrogateParams { knn_k: 4, ..Default::default() };
        assert!(fit_surrogate(SurrogateKind::KnnReg, &data, &p, 0).is_err());
    }

    #[test]
    fn linear_recovers_exact_plane() {
        let train = two_d(30, |a, _| 2.0 * a + 1.0);
        let m = fit_surrogate(SurrogateKind::Linear, &train, &SurrogateParams::default(), 0).unwrap();
        let test = two_d(20, |a, _| 2.0 * a + 1.0);
        let pred: Vec<f64> = (0..20).map(|i| m.predict_encoded(test.x.row(i))).collect();
        let r2 = crate::metrics::r_squared(&test.y, &pred).unwrap();
        assert!((r2 - 1.0).abs() < 1e-6);
        assert!(fit_surrogate(SurrogateKind::Linear, &one_d(&[1.0], &[1.0]), &SurrogateParams::default(), 0).is_err());
    }

    #[test]
    fn forest_is_deterministic_and_bounded() {
        let train = two_d(200, |a, b| (6.0 * a).sin() + b * b);
        let p = SurrogateParams { forest_trees: 30, ..Default::default() };
        let m1 = fit_surrogate(SurrogateKind::ForestReg, &train, &p, 5).unwrap();
        let m2 = fit_surrogate(SurrogateKind::ForestReg, &train, &p, 5).unwrap();
        assert_eq!(m1, m2);
        let lo = train.y.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = train.y.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let mut rng = stream(8, &[]);
        for _ in 0..1000 {
            let q = [rng.random_range(-0.5..1.5), rng.random_range(-0.5..1.5)];
            let p = m1.predict_encoded(&q);
            assert!(p >= lo && p <= hi);
        }
    }

    #[test]
    fn cart_leaves_are_leaf_means() {
        let data = one_d(&(0..20).map(f64::from).collect::<Vec<_>>(), &(0..20).map(|i| if i < 10 { 1.0 } else { 3.0 }).collect::<Vec<_>>());
        let m = fit_surrogate(SurrogateKind::CartReg, &data, &SurrogateParams::default(), 0).unwrap();
        assert_eq!(m.predict_encoded(&[2.0]), 1.0);
        assert_eq!(m.predict_encoded(&[17.0]), 3.0);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(16))]
        #[test]
        fn shift_equivariance(c in -5.0f64..5.0, seed in 0u64..1000) {
            let base = two_d(60, |a, b| a * b + (3.0 * a).cos());
            let mut shifted = base.clone();
            shifted.y.iter_mut().for_each(|y| *y += c);
            let p = SurrogateParams { forest_trees: 10, ..Default::default() };
            let mut rng = stream(seed, &[]);
            let queries: Vec<[f64; 2]> = (0..20).map(|_| [rng.random(), rng.random()]).collect();
            for kind in SurrogateKind::PREFERENCE {
                let m0 = fit_surrogate(kind, &base, &p, seed).unwrap();
                let m1 = fit_surrogate(kind, &shifted, &p, seed).unwrap();
                for q in &queries {
                    let d = m1.predict_encoded(q) - m0.predict_encoded(q) - c;
                    prop_assert!(d.abs() < 1e-9, "{kind}: {d}");
                }
            }
        }
    }
}
