//! Run configuration file. Every key is optional and mirrors a command-line
//! flag (dashes become underscores); flags given on the command line win.

use std::path::{Path, PathBuf};

use serde::Deserialize;

#[derive(Debug, Default, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub seed: Option<u64>,
    pub workers: Option<usize>,
    pub out: Option<PathBuf>,

    // generate
    pub learners: Option<String>,
    pub datasets: Option<usize>,
    pub rows: Option<usize>,
    pub family: Option<String>,
    pub observations: Option<usize>,
    pub features: Option<usize>,
    pub cv_folds: Option<usize>,
    pub measures: Option<String>,

    // surrogates / analyze
    pub meta: Option<PathBuf>,
    pub space: Option<PathBuf>,
    pub measure: Option<String>,
    pub kinds: Option<String>,
    pub reps: Option<usize>,
    pub folds: Option<usize>,
    pub trees: Option<usize>,
    pub cache: Option<PathBuf>,

    // analyze
    pub scaling: Option<String>,
    pub summary: Option<String>,
    pub mode: Option<String>,
    pub grid_levels: Option<usize>,
    pub budget: Option<usize>,
    pub pair_budget: Option<usize>,
    pub surrogate: Option<String>,
    pub reference: Option<String>,
    pub package_defaults: Option<PathBuf>,
    pub cv_across_datasets: Option<usize>,
    pub pairs: Option<bool>,
    pub ranges: Option<bool>,
    pub p1: Option<f64>,
    pub p2: Option<f64>,
    pub categorical_rule: Option<String>,
    pub histograms: Option<usize>,
}

impl RunConfig {
    pub fn load(path: &Path) -> anyhow::Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| anyhow::anyhow!("{}: {e}", path.display()))?;
        let mut cfg: RunConfig =
            toml::from_str(&text).map_err(|e| anyhow::anyhow!("{}: {e}", path.display()))?;
        // relative paths are resolved against the file's directory
        let base = path.parent().unwrap_or(Path::new(""));
        for p in [
            &mut cfg.out,
            &mut cfg.meta,
            &mut cfg.space,
            &mut cfg.cache,
            &mut cfg.package_defaults,
        ]
        .into_iter()
        .flatten()
        {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
        Ok(cfg)
    }
}
