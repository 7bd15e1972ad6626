//! Classification measures, surrogate-quality measures, risk orientation,
//! per-dataset risk scaling and cross-dataset summaries.
//!
//! Everything downstream of [`to_risk`] works with risks: lower is better.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Measure {
    Auc,
    Accuracy,
    Brier,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Direction {
    Maximize,
    Minimize,
}

impl Measure {
    pub const ALL: [Measure; 3] = [Measure::Auc, Measure::Accuracy, Measure::Brier];

    pub fn name(self) -> &'static str {
        match self {
            Measure::Auc => "auc",
            Measure::Accuracy => "accuracy",
            Measure::Brier => "brier",
        }
    }

    pub fn direction(self) -> Direction {
        match self {
            Measure::Auc | Measure::Accuracy => Direction::Maximize,
            Measure::Brier => Direction::Minimize,
        }
    }

    /// Risk of a featureless predictor on data with the given share of
    /// positive labels.
    pub fn baseline_risk(self, positive_fraction: f64) -> f64 {
        let pi = positive_fraction;
        match self {
            Measure::Auc => to_risk(0.5, self),
            Measure::Accuracy => to_risk(pi.max(1.0 - pi), self),
            Measure::Brier => pi * (1.0 - pi),
        }
    }
}

impl fmt::Display for Measure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Measure {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "auc" => Ok(Measure::Auc),
            "accuracy" | "acc" => Ok(Measure::Accuracy),
            "brier" => Ok(Measure::Brier),
            other => Err(Error::InvalidInput(format!("unknown measure `{other}`"))),
        }
    }
}

/// Orients a measure value as a risk: maximized measures are negated.
pub fn to_risk(value: f64, measure: Measure) -> f64 {
    match measure.direction() {
        Direction::Minimize => value,
        Direction::Maximize => -value,
    }
}

fn check_lengths(a: usize, b: usize) -> Result<()> {
    if a != b {
        return Err(Error::InvalidInput(format!("length mismatch: {a} vs {b}")));
    }
    Ok(())
}

/// Ranks (1-based) with ties receiving the mean of their positions.
pub fn midranks(values: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let mut ranks = vec![0.0; values.len()];
    let mut start = 0;
    while start < order.len() {
        let mut end = start + 1;
        while end < order.len() && values[order[end]] == values[order[start]] {
            end += 1;
        }
        let rank = (start + end + 1) as f64 / 2.0;
        for &idx in &order[start..end] {
            ranks[idx] = rank;
        }
        start = end;
    }
    ranks
}

/// Area under the ROC curve via the Mann-Whitney statistic.
pub fn auc(scores: &[f64], labels: &[bool]) -> Result<f64> {
    check_lengths(scores.len(), labels.len())?;
    let n_pos = labels.iter().filter(|&&l| l).count();
    let n_neg = labels.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return Err(Error::InvalidInput("AUC needs both classes".into()));
    }
    let ranks = midranks(scores);
    let pos_rank_sum: f64 = ranks
        .iter()
        .zip(labels)
        .filter(|(_, &l)| l)
        .map(|(r, _)| r)
        .sum();
    let n_pos = n_pos as f64;
    Ok((pos_rank_sum - n_pos * (n_pos + 1.0) / 2.0) / (n_pos * n_neg as f64))
}

pub fn accuracy(preds: &[bool], labels: &[bool]) -> Result<f64> {
    check_lengths(preds.len(), labels.len())?;
    if preds.is_empty() {
        return Err(Error::InvalidInput("accuracy of empty input".into()));
    }
    let hits = preds.iter().zip(labels).filter(|(p, l)| p == l).count();
    Ok(hits as f64 / preds.len() as f64)
}

pub fn brier(probs: &[f64], labels: &[bool]) -> Result<f64> {
    check_lengths(probs.len(), labels.len())?;
    if probs.is_empty() {
        return Err(Error::InvalidInput("brier score of empty input".into()));
    }
    if probs.iter().any(|p| !(0.0..=1.0).contains(p)) {
        return Err(Error::InvalidInput("probabilities must lie in [0, 1]".into()));
    }
    let sse: f64 = probs
        .iter()
        .zip(labels)
        .map(|(p, &l)| {
            let d = p - if l { 1.0 } else { 0.0 };
            d * d
        })
        .sum();
    Ok(sse / probs.len() as f64)
}

/// Coefficient of determination, `1 - SSE/SST`.
pub fn r_squared(actual: &[f64], predicted: &[f64]) -> Result<f64> {
    check_lengths(actual.len(), predicted.len())?;
    if actual.len() < 2 {
        return Err(Error::InvalidInput("R² needs at least two points".into()));
    }
    let mean = actual.iter().sum::<f64>() / actual.len() as f64;
    let sst: f64 = actual.iter().map(|a| (a - mean).powi(2)).sum();
    if sst == 0.0 {
        return Err(Error::InvalidInput("R² is undefined for constant targets".into()));
    }
    let sse: f64 = actual
        .iter()
        .zip(predicted)
        .map(|(a, p)| (a - p).powi(2))
        .sum();
    Ok(1.0 - sse / sst)
}

/// Kendall's tau-b. Returns 0 when either input is constant (no pair is
/// comparable on that side).
pub fn kendall_tau(actual: &[f64], predicted: &[f64]) -> Result<f64> {
    check_lengths(actual.len(), predicted.len())?;
    let n = actual.len();
    if n < 2 {
        return Err(Error::InvalidInput("Kendall's tau needs at least two points".into()));
    }
    let (mut concordant, mut discordant) = (0i64, 0i64);
    let (mut ties_a, mut ties_p) = (0i64, 0i64);
    for i in 0..n {
        for j in (i + 1)..n {
            let da = actual[i] - actual[j];
            let dp = predicted[i] - predicted[j];
            if da == 0.0 {
                ties_a += 1;
            }
            if dp == 0.0 {
                ties_p += 1;
            }
            let s = da * dp;
            if s > 0.0 {
                concordant += 1;
            } else if s < 0.0 {
                discordant += 1;
            }
        }
    }
    let pairs = (n * (n - 1) / 2) as i64;
    let denom = (((pairs - ties_a) as f64) * ((pairs - ties_p) as f64)).sqrt();
    if denom == 0.0 {
        return Ok(0.0);
    }
    Ok((concordant - discordant) as f64 / denom)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScalingMode {
    #[default]
    None,
    UnitInterval,
    Zscore,
}

impl FromStr for ScalingMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "none" => Ok(ScalingMode::None),
            "unit" | "unit_interval" => Ok(ScalingMode::UnitInterval),
            "zscore" => Ok(ScalingMode::Zscore),
            other => Err(Error::InvalidInput(format!("unknown scaling `{other}`"))),
        }
    }
}

/// Per-dataset risk scaling with the statistics it needs.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RiskTransform {
    pub mode: ScalingMode,
    pub baseline: f64,
    pub best: f64,
    pub mean: f64,
    pub sd: f64,
}

impl RiskTransform {
    pub fn none() -> Self {
        RiskTransform {
            mode: ScalingMode::None,
            baseline: 0.0,
            best: 0.0,
            mean: 0.0,
            sd: 1.0,
        }
    }

    pub fn unit_interval(baseline: f64, best: f64) -> Self {
        RiskTransform {
            mode: ScalingMode::UnitInterval,
            baseline,
            best,
            ..Self::none()
        }
    }

    pub fn zscore(mean: f64, sd: f64) -> Self {
        RiskTransform {
            mode: ScalingMode::Zscore,
            mean,
            sd,
            ..Self::none()
        }
    }

    /// Statistics from all observed risks of one dataset: best is the
    /// minimum observed risk, mean/sd the sample moments.
    pub fn from_observed(mode: ScalingMode, risks: &[f64], baseline: f64) -> Result<Self> {
        if risks.is_empty() {
            return Err(Error::InvalidInput("no risks to derive scaling from".into()));
        }
        let n = risks.len() as f64;
        let mean = risks.iter().sum::<f64>() / n;
        let sd = if risks.len() > 1 {
            (risks.iter().map(|r| (r - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
        } else {
            0.0
        };
        let best = risks.iter().copied().fold(f64::INFINITY, f64::min);
        let t = RiskTransform {
            mode,
            baseline,
            best,
            mean,
            sd,
        };
        t.check()?;
        Ok(t)
    }

    pub fn check(&self) -> Result<()> {
        match self.mode {
            ScalingMode::None => Ok(()),
            ScalingMode::UnitInterval if self.baseline == self.best => Err(Error::InvalidInput(
                "unit-interval scaling needs baseline != best".into(),
            )),
            ScalingMode::Zscore if !(self.sd > 0.0) => {
                Err(Error::InvalidInput("z-score scaling needs sd > 0".into()))
            }
            _ => Ok(()),
        }
    }

    /// Scales one risk; call [`RiskTransform::check`] first.
    pub fn apply(&self, r: f64) -> f64 {
        match self.mode {
            ScalingMode::None => r,
            ScalingMode::UnitInterval => (r - self.baseline) / (self.best - self.baseline).abs(),
            ScalingMode::Zscore => (r - self.mean) / self.sd,
        }
    }
}

pub fn scale_risks(risks: &[f64], transform: &RiskTransform) -> Result<Vec<f64>> {
    transform.check()?;
    Ok(risks.iter().map(|&r| transform.apply(r)).collect())
}

/// Summary function applied across datasets.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Summary {
    #[default]
    Mean,
    Median,
    Quantile(f64),
}

impl Summary {
    pub fn check(&self) -> Result<()> {
        match self {
            // 1.0 is accepted so the maximum is expressible
            Summary::Quantile(q) if !(*q > 0.0 && *q <= 1.0) => Err(Error::InvalidInput(format!(
                "quantile level must lie in (0, 1], got {q}"
            ))),
            _ => Ok(()),
        }
    }
}

impl FromStr for Summary {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        let out = match s {
            "mean" => Summary::Mean,
            "median" => Summary::Median,
            _ => {
                let q = s
                    .strip_prefix('q')
                    .and_then(|q| q.parse::<f64>().ok())
                    .ok_or_else(|| Error::InvalidInput(format!("unknown summary `{s}`")))?;
                Summary::Quantile(q)
            }
        };
        out.check()?;
        Ok(out)
    }
}

impl fmt::Display for Summary {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Summary::Mean => f.write_str("mean"),
            Summary::Median => f.write_str("median"),
            Summary::Quantile(q) => write!(f, "q{q}"),
        }
    }
}

/// Linear interpolation between order statistics at `h = (m - 1) * q`.
pub fn quantile(values: &[f64], q: f64) -> Result<f64> {
    if values.is_empty() {
        return Err(Error::InvalidInput("quantile of empty list".into()));
    }
    if !(0.0..=1.0).contains(&q) {
        return Err(Error::InvalidInput(format!("quantile level {q} outside [0, 1]")));
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    Ok(quantile_sorted(&sorted, q))
}

pub(crate) fn quantile_sorted(sorted: &[f64], q: f64) -> f64 {
    let h = (sorted.len() - 1) as f64 * q;
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    if lo == hi {
        return sorted[lo];
    }
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

pub fn summarize(values: &[f64], spec: Summary) -> Result<f64> {
    spec.check()?;
    if values.is_empty() {
        return Err(Error::InvalidInput("cannot summarize an empty list".into()));
    }
    match spec {
        Summary::Mean => Ok(values.iter().sum::<f64>() / values.len() as f64),
        Summary::Median => quantile(values, 0.5),
        Summary::Quantile(q) => quantile(values, q),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn auc_examples() {
        let l = [true, true, false, false];
        assert_eq!(auc(&[0.9, 0.8, 0.2, 0.1], &l).unwrap(), 1.0);
        assert_eq!(auc(&[0.3; 4], &l).unwrap(), 0.5);
        assert_eq!(auc(&[0.9, 0.6, 0.4, 0.1], &[true, false, true, false]).unwrap(), 0.75);
        assert!(auc(&[0.1, 0.2], &[true, true]).is_err());
    }

    #[test]
    fn accuracy_and_brier_examples() {
        let l = [true, true, false, false];
        assert_eq!(accuracy(&l, &l).unwrap(), 1.0);
        assert_eq!(brier(&[1.0, 1.0, 0.0, 0.0], &l).unwrap(), 0.0);
        assert_eq!(brier(&[0.5], &[true]).unwrap(), 0.25);
        assert_eq!(accuracy(&[true, false, false, false], &l).unwrap(), 0.75);
        assert!(accuracy(&[true], &l).is_err());
        assert!(brier(&[0.5], &l).is_err());
    }

    #[test]
    fn risk_orientation() {
        assert_eq!(to_risk(0.25, Measure::Brier), 0.25);
        assert_eq!(to_risk(0.8, Measure::Auc), -0.8);
    }

    #[test]
    fn regression_measures() {
        let a = [1.0, 2.0, 3.0];
        assert_eq!(r_squared(&a, &a).unwrap(), 1.0);
        assert_eq!(kendall_tau(&a, &a).unwrap(), 1.0);
        assert_eq!(r_squared(&a, &[2.0, 2.0, 2.0]).unwrap(), 0.0);
        assert_eq!(r_squared(&a, &[1.0, 2.0, 4.0]).unwrap(), 0.5);
        assert!((kendall_tau(&a, &[1.0, 3.0, 2.0]).unwrap() - 1.0 / 3.0).abs() < 1e-15);
        assert!(r_squared(&[1.0, 1.0], &[1.0, 2.0]).is_err());
        assert!(kendall_tau(&a, &[1.0]).is_err());
    }

    #[test]
    fn kendall_tie_correction() {
        // tau-b for x=[1,1,2,3], y=[1,2,2,3]: C=4, D=0, ties_x=1, ties_y=1
        let t = kendall_tau(&[1.0, 1.0, 2.0, 3.0], &[1.0, 2.0, 2.0, 3.0]).unwrap();
        assert!((t - 4.0 / 5.0).abs() < 1e-15);
    }

    #[test]
    fn scaling_examples() {
        assert_eq!(scale_risks(&[0.7], &RiskTransform::none()).unwrap(), vec![0.7]);
        // (r - baseline) / |best - baseline|
        let unit = RiskTransform::unit_interval(1.0, 0.0);
        assert_eq!(scale_risks(&[0.3], &unit).unwrap(), vec![-0.7]);
        let z = RiskTransform::from_observed(ScalingMode::Zscore, &[1.0, 2.0, 3.0], 0.0).unwrap();
        assert_eq!(scale_risks(&[1.0, 2.0, 3.0], &z).unwrap(), vec![-1.0, 0.0, 1.0]);
        assert!(scale_risks(&[1.0], &RiskTransform::unit_interval(0.5, 0.5)).is_err());
        assert!(scale_risks(&[1.0], &RiskTransform::zscore(0.0, 0.0)).is_err());
    }

    #[test]
    fn unit_interval_maps_baseline_and_best() {
        let t = RiskTransform::unit_interval(-0.5, -0.93);
        assert_eq!(t.apply(-0.5), 0.0);
        assert_eq!(t.apply(-0.93).abs(), 1.0);
    }

    #[test]
    fn summary_examples() {
        assert!((summarize(&[0.1, 0.3], Summary::Mean).unwrap() - 0.2).abs() < 1e-15);
        assert_eq!(summarize(&[1.0, 2.0, 100.0], Summary::Median).unwrap(), 2.0);
        let v: Vec<f64> = (1..=10).map(f64::from).collect();
        assert!((summarize(&v, Summary::Quantile(0.9)).unwrap() - 9.1).abs() < 1e-12);
        assert!(summarize(&[], Summary::Mean).is_err());
        assert!(Summary::Quantile(0.0).check().is_err());
        assert_eq!("q0.9".parse::<Summary>().unwrap(), Summary::Quantile(0.9));
    }

    proptest! {
        #[test]
        fn auc_complements_under_negation(scores in prop::collection::hash_set(-1000i32..1000, 4..40)) {
            let scores: Vec<f64> = scores.into_iter().map(f64::from).collect();
            let labels: Vec<bool> = (0..scores.len()).map(|i| i % 2 == 0).collect();
            let neg: Vec<f64> = scores.iter().map(|s| -s).collect();
            let sum = auc(&scores, &labels).unwrap() + auc(&neg, &labels).unwrap();
            prop_assert!((sum - 1.0).abs() < 1e-12);
        }

        #[test]
        fn bounded_measures(probs in prop::collection::vec(0.0f64..=1.0, 1..50), seed in any::<u64>()) {
            let labels: Vec<bool> = (0..probs.len()).map(|i| (seed >> (i % 64)) & 1 == 1).collect();
            let b = brier(&probs, &labels).unwrap();
            prop_assert!((0.0..=1.0).contains(&b));
            let preds: Vec<bool> = probs.iter().map(|&p| p >= 0.5).collect();
            let a = accuracy(&preds, &labels).unwrap();
            prop_assert!((0.0..=1.0).contains(&a));
        }

        #[test]
        fn tau_bounded_and_antisymmetric(
            a in prop::collection::vec(-50i32..50, 2..30),
            b in prop::collection::vec(-50i32..50, 2..30),
        ) {
            let n = a.len().min(b.len());
            let a: Vec<f64> = a[..n].iter().map(|&x| f64::from(x)).collect();
            let b: Vec<f64> = b[..n].iter().map(|&x| f64::from(x)).collect();
            let t = kendall_tau(&a, &b).unwrap();
            prop_assert!((-1.0..=1.0).contains(&t));
            let rev: Vec<f64> = b.iter().map(|x| -x).collect();
            prop_assert!((kendall_tau(&a, &rev).unwrap() + t).abs() < 1e-12);
        }

        #[test]
        fn negation_matches_one_minus(a in 0.0f64..1.0, b in 0.0f64..1.0) {
            let neg = to_risk(a, Measure::Auc) - to_risk(b, Measure::Auc);
            let comp = (1.0 - a) - (1.0 - b);
            prop_assert!((neg - comp).abs() < 1e-12);
        }

        #[test]
        fn risk_argmin_is_value_argmax(values in prop::collection::vec(0.0f64..1.0, 1..30)) {
            let risks: Vec<f64> = values.iter().map(|&v| to_risk(v, Measure::Auc)).collect();
            let argmax = values.iter().enumerate().fold(0, |best, (i, v)| if *v > values[best] { i } else { best });
            let argmin = risks.iter().enumerate().fold(0, |best, (i, r)| if *r < risks[best] { i } else { best });
            prop_assert_eq!(argmax, argmin);
        }
    }
}
