use std::f64::consts::FRAC_1_SQRT_2;
use std::fmt::Write as _;
use std::str::FromStr;

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hyperspace::DatasetInfo;
use crate::matrix::Matrix;
use crate::rng::stream;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DatasetFamily {
    /// Two spherical Gaussian classes whose means are `separation` apart in
    /// the first two coordinates.
    GaussianBlobs,
    /// XOR quadrants in the first two coordinates, rotated by 45 degrees.
    XorRotated,
}

impl DatasetFamily {
    pub fn name(self) -> &'static str {
        match self {
            DatasetFamily::GaussianBlobs => "gaussian_blobs",
            DatasetFamily::XorRotated => "xor_rotated",
        }
    }
}

impl FromStr for DatasetFamily {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "gaussian_blobs" | "blobs" => Ok(DatasetFamily::GaussianBlobs),
            "xor_rotated" | "xor" => Ok(DatasetFamily::XorRotated),
            other => Err(Error::InvalidInput(format!("unknown dataset family `{other}`"))),
        }
    }
}

/// A binary classification dataset.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledDataset {
    pub info: DatasetInfo,
    pub x: Matrix,
    pub y: Vec<bool>,
}

impl LabeledDataset {
    pub fn new(id: impl Into<String>, x: Matrix, y: Vec<bool>) -> Result<Self> {
        if x.rows() != y.len() {
            return Err(Error::InvalidInput(format!(
                "{} feature rows but {} labels",
                x.rows(),
                y.len()
            )));
        }
        let mut info = DatasetInfo::new(id, x.rows(), x.cols())?;
        info.positive_fraction = Some(y.iter().filter(|&&l| l).count() as f64 / y.len() as f64);
        Ok(LabeledDataset { info, x, y })
    }

    pub fn to_csv_string(&self) -> String {
        let mut out = String::new();
        for i in 0..self.x.rows() {
            for v in self.x.row(i) {
                let _ = write!(out, "{v},");
            }
            out.push_str(if self.y[i] { "1\n" } else { "0\n" });
        }
        out
    }
}

pub fn make_synthetic_dataset(
    family: DatasetFamily,
    n: usize,
    p: usize,
    separation: f64,
    seed: u64,
) -> Result<LabeledDataset> {
    if n < 20 || p < 2 {
        return Err(Error::InvalidInput(format!(
            "synthetic datasets need n >= 20 and p >= 2, got n={n}, p={p}"
        )));
    }
    if !separation.is_finite() || separation < 0.0 {
        return Err(Error::InvalidInput(format!("invalid separation {separation}")));
    }
    let mut rng = stream(seed, &[n as u64, p as u64]);
    let mut data = Vec::with_capacity(n * p);
    let mut y = Vec::with_capacity(n);
    for i in 0..n {
        let label = i % 2 == 1;
        let mut row: Vec<f64> = (0..p).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
        match family {
            DatasetFamily::GaussianBlobs => {
                let shift = separation / 2.0 * FRAC_1_SQRT_2 * if label { 1.0 } else { -1.0 };
                row[0] += shift;
                row[1] += shift;
            }
            DatasetFamily::XorRotated => {
                let flip = rng.random_bool(0.5);
                let (sa, sb) = match (label, flip) {
                    (false, false) => (1.0, 1.0),
                    (false, true) => (-1.0, -1.0),
                    (true, false) => (1.0, -1.0),
                    (true, true) => (-1.0, 1.0),
                };
                let a = row[0] + sa * separation / 2.0;
                let b = row[1] + sb * separation / 2.0;
                row[0] = FRAC_1_SQRT_2 * (a - b);
                row[1] = FRAC_1_SQRT_2 * (a + b);
            }
        }
        data.extend(row);
        y.push(label);
    }
    let id = format!("{}-n{n}-p{p}-d{separation}-s{seed}", family.name());
    LabeledDataset::new(id, Matrix::new(data, n, p), y)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn construction_contract() {
        let d = make_synthetic_dataset(DatasetFamily::GaussianBlobs, 100, 2, 6.0, 1).unwrap();
        assert_eq!((d.x.rows(), d.x.cols()), (100, 2));
        assert_eq!(d.y.iter().filter(|&&l| l).count(), 50);
        assert_eq!(d.info.n, 100);
        assert_eq!(d.info.positive_fraction, Some(0.5));
    }

    #[test]
    fn deterministic() {
        for fam in [DatasetFamily::GaussianBlobs, DatasetFamily::XorRotated] {
            let a = make_synthetic_dataset(fam, 51, 3, 2.0, 9).unwrap();
            let b = make_synthetic_dataset(fam, 51, 3, 2.0, 9).unwrap();
            assert_eq!(a.to_csv_string(), b.to_csv_string());
            let ones = a.y.iter().filter(|&&l| l).count();
            assert!(ones.abs_diff(51 - ones) <= 1);
        }
    }

    #[test]
    fn blob_means_are_separated() {
        let d = make_synthetic_dataset(DatasetFamily::GaussianBlobs, 4000, 2, 6.0, 2).unwrap();
        let mut m = [[0.0; 2]; 2];
        for i in 0..d.x.rows() {
            let c = usize::from(d.y[i]);
            m[c][0] += d.x.get(i, 0) / 2000.0;
            m[c][1] += d.x.get(i, 1) / 2000.0;
        }
        let dist = ((m[1][0] - m[0][0]).powi(2) + (m[1][1] - m[0][1]).powi(2)).sqrt();
        assert!((dist - 6.0).abs() < 0.15, "{dist}");
    }

    #[test]
    fn rejects_small_inputs() {
        assert!(make_synthetic_dataset(DatasetFamily::GaussianBlobs, 19, 2, 1.0, 0).is_err());
        assert!(make_synthetic_dataset(DatasetFamily::GaussianBlobs, 20, 1, 1.0, 0).is_err());
    }
}
