//! Black-box minimization over a search space by random sampling or
//! exhaustive grid enumeration.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hyperspace::{
    grid_values, join_violations, sample_with_fixed, validate_configuration, Configuration,
    SearchSpace, Value,
};
use crate::rng::stream;

/// Two risks closer than this count as tied.
pub const TIE_TOLERANCE: f64 = 1e-12;

const CHUNK: usize = 4096;
const MAX_GRID_CELLS: u128 = 1 << 32;

/// How a single minimization explores the free parameters.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum Search {
    /// `budget` uniform samples; the first one found with minimal risk wins.
    Random { budget: usize },
    /// Full cross product with `levels` points per numeric axis, enumerated
    /// lexicographically (first free parameter most significant).
    Grid { levels: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Optimum {
    pub config: Configuration,
    pub risk: f64,
    pub evaluations: usize,
    /// Other evaluated points whose risk is within [`TIE_TOLERANCE`] of the optimum.
    pub near_ties: usize,
}

struct Best {
    index: usize,
    risk: f64,
    ties: usize,
}

impl Best {
    fn new() -> Self {
        Best {
            index: usize::MAX,
            risk: f64::INFINITY,
            ties: 0,
        }
    }

    fn offer(&mut self, index: usize, risk: f64) {
        let risk = if risk.is_nan() { f64::INFINITY } else { risk };
        if self.index == usize::MAX || risk < self.risk {
            let close = self.index != usize::MAX && (self.risk - risk).abs() <= TIE_TOLERANCE;
            self.ties = if close { self.ties + 1 } else { 0 };
            self.index = index;
            self.risk = risk;
        } else if (risk - self.risk).abs() <= TIE_TOLERANCE {
            self.ties += 1;
        }
    }
}

fn check_fixed(space: &SearchSpace, fixed: &[Option<Value>]) -> Result<()> {
    if fixed.len() != space.k() {
        return Err(Error::Configuration(format!(
            "fixed assignment has {} entries, space has {} parameters",
            fixed.len(),
            space.k()
        )));
    }
    // validate against a completed configuration; free entries take
    // placeholders, which are always valid
    let values: Vec<Value> = fixed
        .iter()
        .zip(space.params())
        .map(|(f, p)| f.unwrap_or_else(|| p.placeholder()))
        .collect();
    let config = space.configuration(values);
    let violations: Vec<_> = validate_configuration(space, &config)
        .into_iter()
        .filter(|v| {
            space
                .index_of(&v.param)
                .is_none_or(|i| fixed[i].is_some())
        })
        .collect();
    if violations.is_empty() {
        Ok(())
    } else {
        Err(Error::Configuration(join_violations(&violations)))
    }
}

/// Evaluates candidate configurations chunk by chunk; candidates are produced
/// sequentially so the result does not depend on the number of workers.
fn scan<F>(mut next: impl FnMut() -> Option<Configuration>, objective: &F) -> Option<Optimum>
where
    F: Fn(&Configuration) -> f64 + Sync,
{
    let mut best = Best::new();
    let mut best_config = None;
    let mut offset = 0;
    loop {
        let chunk: Vec<Configuration> = std::iter::from_fn(&mut next).take(CHUNK).collect();
        if chunk.is_empty() {
            break;
        }
        let risks: Vec<f64> = chunk.par_iter().map(objective).collect();
        let before = best.index;
        for (j, r) in risks.iter().enumerate() {
            best.offer(offset + j, *r);
        }
        if best.index != before {
            best_config = Some(chunk[best.index - offset].clone());
        }
        offset += chunk.len();
    }
    best_config.map(|config| Optimum {
        config,
        risk: best.risk,
        evaluations: offset,
        near_ties: best.ties,
    })
}

/// Number of grid cells spanned by the free parameters (ignoring that
/// inactive parameters collapse to one point).
pub fn grid_size(space: &SearchSpace, fixed: &[Option<Value>], levels: usize) -> u128 {
    space
        .params()
        .iter()
        .zip(fixed)
        .filter(|(_, f)| f.is_none())
        .map(|(p, _)| grid_values(p, levels).len() as u128)
        .product()
}

struct GridWalker<'a> {
    space: &'a SearchSpace,
    free: Vec<usize>,
    axes: Vec<Vec<Value>>,
    base: Vec<Value>,
    odometer: Vec<usize>,
    done: bool,
}

impl<'a> GridWalker<'a> {
    fn new(space: &'a SearchSpace, fixed: &[Option<Value>], levels: usize) -> Self {
        let free: Vec<usize> = (0..space.k()).filter(|&i| fixed[i].is_none()).collect();
        let axes: Vec<Vec<Value>> = free
            .iter()
            .map(|&i| grid_values(space.param(i), levels))
            .collect();
        let base = fixed
            .iter()
            .zip(space.params())
            .map(|(f, p)| f.unwrap_or_else(|| p.placeholder()))
            .collect();
        GridWalker {
            space,
            odometer: vec![0; free.len()],
            free,
            axes,
            base,
            done: false,
        }
    }

    fn advance(&mut self) {
        for pos in (0..self.odometer.len()).rev() {
            self.odometer[pos] += 1;
            if self.odometer[pos] < self.axes[pos].len() {
                return;
            }
            self.odometer[pos] = 0;
        }
        self.done = true;
    }

    fn next_config(&mut self) -> Option<Configuration> {
        while !self.done {
            let mut values = self.base.clone();
            for (pos, &i) in self.free.iter().enumerate() {
                values[i] = self.axes[pos][self.odometer[pos]];
            }
            // an inactive free parameter is only visited at its first index,
            // where it holds the placeholder
            let mut duplicate = false;
            for (pos, &i) in self.free.iter().enumerate() {
                if !self.space.activity(i, &values) {
                    if self.odometer[pos] != 0 {
                        duplicate = true;
                        break;
                    }
                    values[i] = self.space.param(i).placeholder();
                }
            }
            self.advance();
            if !duplicate {
                return Some(self.space.configuration(values));
            }
        }
        None
    }
}

/// Minimizes `objective` over configurations that agree with `fixed`
/// (`None` entries are free). With no free parameter the fixed
/// configuration itself is returned.
pub fn minimize<F>(
    space: &SearchSpace,
    fixed: &[Option<Value>],
    objective: F,
    search: Search,
    seed: u64,
) -> Result<Optimum>
where
    F: Fn(&Configuration) -> f64 + Sync,
{
    check_fixed(space, fixed)?;
    if fixed.iter().all(Option::is_some) {
        let config = space.configuration(fixed.iter().map(|v| v.unwrap()).collect());
        let risk = objective(&config);
        return Ok(Optimum {
            config,
            risk,
            evaluations: 1,
            near_ties: 0,
        });
    }
    let found = match search {
        Search::Random { budget } => {
            if budget == 0 {
                return Err(Error::InvalidInput("random search budget must be >= 1".into()));
            }
            let mut rng = stream(seed, &[]);
            let mut left = budget;
            scan(
                || {
                    (left > 0).then(|| {
                        left -= 1;
                        sample_with_fixed(space, fixed, &mut rng)
                    })
                },
                &objective,
            )
        }
        Search::Grid { levels } => {
            if levels < 2 {
                return Err(Error::InvalidInput("grid search needs at least 2 levels".into()));
            }
            let cells = grid_size(space, fixed, levels);
            if cells > MAX_GRID_CELLS {
                return Err(Error::InvalidInput(format!(
                    "grid of {cells} cells is too large; lower the grid levels or use random search"
                )));
            }
            let mut walker = GridWalker::new(space, fixed, levels);
            scan(|| walker.next_config(), &objective)
        }
    };
    found.ok_or_else(|| Error::InvalidInput("no candidate configuration was evaluated".into()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hyperspace::{bundled_space, parse_space};

    fn discrete(levels: &[usize]) -> SearchSpace {
        let params: Vec<String> = levels
            .iter()
            .enumerate()
            .map(|(i, &l)| {
                let labels: Vec<String> = (0..l).map(|v| format!("\"{v}\"")).collect();
                format!(
                    r#"{{"name":"x{i}","kind":"discrete","levels":[{}]}}"#,
                    labels.join(",")
                )
            })
            .collect();
        parse_space(&format!(r#"{{"algorithm":"t","params":[{}]}}"#, params.join(","))).unwrap()
    }

    fn lvl(c: &Configuration, i: usize) -> usize {
        c.value(i).as_level().unwrap()
    }

    #[test]
    fn grid_picks_table_minimum() {
        let s = discrete(&[3]);
        let table = [0.3, 0.1, 0.5];
        let o = minimize(&s, &[None], |c| table[lvl(c, 0)], Search::Grid { levels: 2 }, 0).unwrap();
        assert_eq!(lvl(&o.config, 0), 1);
        assert_eq!(o.risk, 0.1);
        assert_eq!(o.evaluations, 3);
    }

    #[test]
    fn ties_go_to_first_and_are_counted() {
        let s = discrete(&[4]);
        let o = minimize(&s, &[None], |_| 0.7, Search::Grid { levels: 2 }, 0).unwrap();
        assert_eq!(lvl(&o.config, 0), 0);
        assert_eq!(o.near_ties, 3);
    }

    #[test]
    fn all_fixed_returns_fixed() {
        let s = discrete(&[3, 2]);
        let fixed = [Some(Value::Level(2)), Some(Value::Level(1))];
        let o = minimize(&s, &fixed, |c| lvl(c, 0) as f64, Search::Random { budget: 5 }, 0).unwrap();
        assert_eq!(o.config.values(), &[Value::Level(2), Value::Level(1)]);
        assert_eq!(o.risk, 2.0);
    }

    #[test]
    fn invalid_fixed_rejected() {
        let s = discrete(&[3]);
        assert!(minimize(&s, &[Some(Value::Level(5))], |_| 0.0, Search::Grid { levels: 2 }, 0).is_err());
    }

    #[test]
    fn random_with_large_budget_matches_grid() {
        let s = discrete(&[3, 4, 2]);
        let f = |c: &Configuration| {
            let (a, b, d) = (lvl(c, 0) as f64, lvl(c, 1) as f64, lvl(c, 2) as f64);
            (a - 1.0).powi(2) + (b - 2.0).abs() * 0.3 + d * 0.05
        };
        let g = minimize(&s, &[None; 3], f, Search::Grid { levels: 2 }, 0).unwrap();
        let r = minimize(&s, &[None; 3], f, Search::Random { budget: 2000 }, 11).unwrap();
        assert_eq!(g.risk, r.risk);
        assert_eq!(g.config, r.config);
    }

    #[test]
    fn conditional_grid_skips_inactive_duplicates() {
        let s = bundled_space("svm").unwrap();
        let o = minimize(&s, &[None; 4], |_| 1.0, Search::Grid { levels: 3 }, 0).unwrap();
        // linear: 3 cost; polynomial: 3 cost x 3 degree; radial: 3 cost x 3 gamma
        assert_eq!(o.evaluations, 3 + 9 + 9);
    }

    #[test]
    fn random_is_reproducible() {
        let s = bundled_space("glmnet").unwrap();
        let f = |c: &Configuration| {
            (c.value(0).as_num().unwrap() - 0.3).powi(2) + (c.value(1).as_num().unwrap() / 10.0).powi(2)
        };
        let a = minimize(&s, &[None; 2], f, Search::Random { budget: 5000 }, 3).unwrap();
        let b = minimize(&s, &[None; 2], f, Search::Random { budget: 5000 }, 3).unwrap();
        assert_eq!(a, b);
        assert!(a.risk < 0.01);
    }
}
