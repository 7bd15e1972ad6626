//! Risk surfaces: anything that maps a configuration to an (estimated) risk.

use crate::error::{Error, Result};
use crate::hyperspace::{grid_values, Configuration, SearchSpace, Value};

/// Estimated risk of a learner on one dataset as a function of its
/// configuration. Lower is better.
pub trait RiskSurface: Sync {
    fn risk(&self, config: &Configuration) -> f64;
}

impl<T: RiskSurface + ?Sized> RiskSurface for &T {
    fn risk(&self, config: &Configuration) -> f64 {
        (**self).risk(config)
    }
}

impl<T: RiskSurface + ?Sized + Send> RiskSurface for Box<T> {
    fn risk(&self, config: &Configuration) -> f64 {
        (**self).risk(config)
    }
}

/// Wraps a closure as a surface.
pub struct FnSurface<F>(pub F);

impl<F> RiskSurface for FnSurface<F>
where
    F: Fn(&Configuration) -> f64 + Sync,
{
    fn risk(&self, config: &Configuration) -> f64 {
        (self.0)(config)
    }
}

/// Risks tabulated on the full grid of a space without conditional
/// parameters. Cells are laid out lexicographically with the first
/// parameter most significant, matching grid iteration order.
#[derive(Debug, Clone, PartialEq)]
pub struct TableSurrogate {
    axes: Vec<Vec<Value>>,
    strides: Vec<usize>,
    risks: Vec<f64>,
}

impl TableSurrogate {
    /// `levels` is the grid resolution used for numeric parameters.
    pub fn new(space: &SearchSpace, levels: usize, risks: Vec<f64>) -> Result<Self> {
        if (0..space.k()).any(|i| space.is_conditional(i)) {
            return Err(Error::InvalidInput(
                "table surrogates do not support conditional parameters".into(),
            ));
        }
        let axes: Vec<Vec<Value>> = space
            .params()
            .iter()
            .map(|p| grid_values(p, levels))
            .collect();
        let cells: usize = axes.iter().map(Vec::len).product();
        if cells != risks.len() {
            return Err(Error::InvalidInput(format!(
                "table has {} risks but the grid has {cells} cells",
                risks.len()
            )));
        }
        let mut strides = vec![1; axes.len()];
        for i in (0..axes.len().saturating_sub(1)).rev() {
            strides[i] = strides[i + 1] * axes[i + 1].len();
        }
        Ok(TableSurrogate {
            axes,
            strides,
            risks,
        })
    }

    pub fn cells(&self) -> usize {
        self.risks.len()
    }

    pub fn risks(&self) -> &[f64] {
        &self.risks
    }

    /// Cell index of a configuration; values off the grid snap to the
    /// nearest grid point.
    pub fn cell_of(&self, config: &Configuration) -> usize {
        let mut cell = 0;
        for (i, axis) in self.axes.iter().enumerate() {
            let pos = match config.value(i) {
                Value::Level(l) => l,
                Value::Num(x) => axis
                    .iter()
                    .enumerate()
                    .min_by(|a, b| {
                        let da = (a.1.as_num().unwrap_or(f64::NAN) - x).abs();
                        let db = (b.1.as_num().unwrap_or(f64::NAN) - x).abs();
                        da.total_cmp(&db)
                    })
                    .map_or(0, |(j, _)| j),
            };
            cell += pos.min(axis.len() - 1) * self.strides[i];
        }
        cell
    }
}

impl RiskSurface for TableSurrogate {
    fn risk(&self, config: &Configuration) -> f64 {
        self.risks[self.cell_of(config)]
    }
}
