//! Typed hyperparameter search spaces with conditional parameters.
//!
//! All values live on the untransformed sampling scale. Transformations such
//! as `2^x` are only applied when a learner is evaluated or a report is
//! rendered, see [`apply_trafo`].

use std::collections::{BTreeMap, HashSet};
use std::fmt;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ParamKind {
    Numeric,
    Integer,
    Discrete,
    Logical,
}

impl ParamKind {
    pub fn is_numeric(self) -> bool {
        matches!(self, ParamKind::Numeric | ParamKind::Integer)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Trafo {
    #[default]
    Identity,
    /// `2^x`
    Pow2,
    /// `ceil(x * p)`
    ScaleByPCeil,
    /// `round(n^x)`
    PowNRound,
}

impl Trafo {
    fn is_identity(&self) -> bool {
        *self == Trafo::Identity
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Condition {
    pub parent: String,
    pub values: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamDef {
    pub name: String,
    pub kind: ParamKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lower: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub upper: Option<f64>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub levels: Vec<String>,
    #[serde(default, skip_serializing_if = "Trafo::is_identity")]
    pub trafo: Trafo,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub condition: Option<Condition>,
}

impl ParamDef {
    /// Bounds of a numeric or integer parameter.
    pub fn bounds(&self) -> (f64, f64) {
        (self.lower.unwrap_or(0.0), self.upper.unwrap_or(0.0))
    }

    /// Value stored for a parameter while it is inactive.
    pub fn placeholder(&self) -> Value {
        match self.kind {
            ParamKind::Numeric => {
                let (lo, hi) = self.bounds();
                Value::Num(midpoint(lo, hi))
            }
            ParamKind::Integer => {
                let (lo, hi) = self.bounds();
                Value::Num(round_half_up(midpoint(lo, hi)))
            }
            ParamKind::Discrete | ParamKind::Logical => Value::Level(0),
        }
    }

    pub fn level_index(&self, label: &str) -> Option<usize> {
        self.levels.iter().position(|l| l == label)
    }

    /// Renders a value of this parameter for display or serialization.
    pub fn format_value(&self, value: Value) -> String {
        match value {
            Value::Num(x) => format!("{x}"),
            Value::Level(i) => self
                .levels
                .get(i)
                .cloned()
                .unwrap_or_else(|| format!("#{i}")),
        }
    }

    /// Parses a cell written by [`ParamDef::format_value`].
    pub fn parse_value(&self, text: &str) -> Result<Value> {
        let text = text.trim();
        if self.kind.is_numeric() {
            text.parse::<f64>().map(Value::Num).map_err(|_| {
                Error::Configuration(format!("{}: `{text}` is not a number", self.name))
            })
        } else {
            self.level_index(text).map(Value::Level).ok_or_else(|| {
                Error::Configuration(format!("{}: unknown level `{text}`", self.name))
            })
        }
    }

    fn validate(&self) -> Result<()> {
        let err = |msg: String| Err(Error::Space(format!("{}: {msg}", self.name)));
        if self.name.trim().is_empty() {
            return Err(Error::Space("parameter with empty name".into()));
        }
        match self.kind {
            ParamKind::Numeric | ParamKind::Integer => {
                let (Some(lo), Some(hi)) = (self.lower, self.upper) else {
                    return err("numeric and integer parameters need lower and upper".into());
                };
                if !lo.is_finite() || !hi.is_finite() {
                    return err("bounds must be finite".into());
                }
                if lo > hi {
                    return err(format!("bound inversion: lower {lo} > upper {hi}"));
                }
                if self.kind == ParamKind::Integer && (lo.fract() != 0.0 || hi.fract() != 0.0) {
                    return err("integer bounds must be whole numbers".into());
                }
                if !self.levels.is_empty() {
                    return err("levels are only allowed for discrete and logical parameters".into());
                }
            }
            ParamKind::Discrete | ParamKind::Logical => {
                if self.lower.is_some() || self.upper.is_some() {
                    return err("bounds are only allowed for numeric and integer parameters".into());
                }
                if self.levels.is_empty() {
                    return err("levels must be non-empty".into());
                }
                let unique: HashSet<&String> = self.levels.iter().collect();
                if unique.len() != self.levels.len() {
                    return err("duplicate levels".into());
                }
                if self.kind == ParamKind::Logical
                    && (self.levels.len() != 2 || !unique.contains(&"true".to_string()) || !unique.contains(&"false".to_string()))
                {
                    return err("logical parameters have exactly the levels true and false".into());
                }
                if self.trafo != Trafo::Identity {
                    return err("transformations are only allowed for numeric and integer parameters".into());
                }
            }
        }
        Ok(())
    }
}

/// A parameter value on the untransformed scale. Integers are stored as
/// whole-numbered `Num`; discrete and logical values as level indices.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Value {
    Num(f64),
    Level(usize),
}

impl Value {
    pub fn as_num(self) -> Option<f64> {
        match self {
            Value::Num(x) => Some(x),
            Value::Level(_) => None,
        }
    }

    pub fn as_level(self) -> Option<usize> {
        match self {
            Value::Level(i) => Some(i),
            Value::Num(_) => None,
        }
    }
}

/// Size information of one dataset; `n` and `p` feed the data-dependent
/// transformations.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetInfo {
    pub id: String,
    pub n: usize,
    pub p: usize,
    /// Share of positive labels, used for featureless baseline risks.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub positive_fraction: Option<f64>,
}

impl DatasetInfo {
    pub fn new(id: impl Into<String>, n: usize, p: usize) -> Result<Self> {
        if n == 0 || p == 0 {
            return Err(Error::InvalidInput(format!(
                "dataset needs n >= 1 and p >= 1, got n={n}, p={p}"
            )));
        }
        Ok(DatasetInfo {
            id: id.into(),
            n,
            p,
            positive_fraction: None,
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
struct ResolvedCondition {
    parent: usize,
    activating: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct SpaceDocument {
    algorithm: String,
    params: Vec<ParamDef>,
}

/// An immutable, validated search space.
#[derive(Debug, Clone, PartialEq)]
pub struct SearchSpace {
    algorithm: String,
    params: Vec<ParamDef>,
    conditions: Vec<Option<ResolvedCondition>>,
}

impl SearchSpace {
    pub fn new(algorithm: impl Into<String>, params: Vec<ParamDef>) -> Result<Self> {
        let algorithm = algorithm.into();
        if params.is_empty() {
            return Err(Error::Space("empty space".into()));
        }
        let mut seen = HashSet::new();
        for p in &params {
            p.validate()?;
            if !seen.insert(p.name.as_str()) {
                return Err(Error::Space(format!("duplicate parameter name `{}`", p.name)));
            }
        }
        let mut conditions = Vec::with_capacity(params.len());
        for p in &params {
            let Some(cond) = &p.condition else {
                conditions.push(None);
                continue;
            };
            if cond.parent == p.name {
                return Err(Error::Space(format!("{}: condition refers to itself", p.name)));
            }
            let parent = params
                .iter()
                .position(|q| q.name == cond.parent)
                .ok_or_else(|| {
                    Error::Space(format!("{}: dangling condition parent `{}`", p.name, cond.parent))
                })?;
            let parent_def = &params[parent];
            if parent_def.condition.is_some() {
                return Err(Error::Space(format!(
                    "{}: parent `{}` is itself conditional; nested conditions are not supported",
                    p.name, parent_def.name
                )));
            }
            if parent_def.kind.is_numeric() {
                return Err(Error::Space(format!(
                    "{}: parent `{}` must be discrete or logical",
                    p.name, parent_def.name
                )));
            }
            if cond.values.is_empty() {
                return Err(Error::Space(format!("{}: empty activating value set", p.name)));
            }
            let mut activating = Vec::with_capacity(cond.values.len());
            for v in &cond.values {
                let idx = parent_def.level_index(v).ok_or_else(|| {
                    Error::Space(format!("{}: `{v}` is not a level of `{}`", p.name, parent_def.name))
                })?;
                activating.push(idx);
            }
            conditions.push(Some(ResolvedCondition { parent, activating }));
        }
        Ok(SearchSpace {
            algorithm,
            params,
            conditions,
        })
    }

    pub fn algorithm(&self) -> &str {
        &self.algorithm
    }

    pub fn params(&self) -> &[ParamDef] {
        &self.params
    }

    pub fn param(&self, i: usize) -> &ParamDef {
        &self.params[i]
    }

    /// Number of parameters.
    pub fn k(&self) -> usize {
        self.params.len()
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.params.iter().position(|p| p.name == name)
    }

    pub fn require_index(&self, name: &str) -> Result<usize> {
        self.index_of(name)
            .ok_or_else(|| Error::UnknownParameter(name.to_string()))
    }

    pub fn is_conditional(&self, i: usize) -> bool {
        self.conditions[i].is_some()
    }

    /// Parent index and activating level indices of a conditional parameter.
    pub fn condition_of(&self, i: usize) -> Option<(usize, &[usize])> {
        self.conditions[i]
            .as_ref()
            .map(|c| (c.parent, c.activating.as_slice()))
    }

    /// Whether parameter `i` is active given the (possibly partial) values.
    pub fn activity(&self, i: usize, values: &[Value]) -> bool {
        match &self.conditions[i] {
            None => true,
            Some(c) => match values[c.parent] {
                Value::Level(l) => c.activating.contains(&l),
                Value::Num(_) => false,
            },
        }
    }

    /// Builds a configuration from values, deriving activity flags from the
    /// conditions. Inactive parameters keep the value they were given.
    pub fn configuration(&self, values: Vec<Value>) -> Configuration {
        debug_assert_eq!(values.len(), self.k());
        let active = (0..self.k()).map(|i| self.activity(i, &values)).collect();
        Configuration { values, active }
    }

    /// Configuration holding every parameter's placeholder value.
    pub fn placeholder_configuration(&self) -> Configuration {
        self.configuration(self.params.iter().map(ParamDef::placeholder).collect())
    }

    /// Builds a configuration from named entries; `None` marks an inactive
    /// parameter whose value falls back to its placeholder. Activity flags
    /// are taken from the entries, so the result may violate conditions;
    /// check it with [`validate_configuration`].
    pub fn configuration_from_named(
        &self,
        named: &BTreeMap<String, Option<NamedValue>>,
    ) -> Result<Configuration> {
        for key in named.keys() {
            if self.index_of(key).is_none() {
                return Err(Error::UnknownParameter(key.clone()));
            }
        }
        let mut values = Vec::with_capacity(self.k());
        let mut active = Vec::with_capacity(self.k());
        for p in &self.params {
            match named.get(&p.name) {
                None => {
                    return Err(Error::Configuration(format!("missing entry for `{}`", p.name)))
                }
                Some(None) => {
                    values.push(p.placeholder());
                    active.push(false);
                }
                Some(Some(v)) => {
                    values.push(v.to_value(p)?);
                    active.push(true);
                }
            }
        }
        Ok(Configuration { values, active })
    }

    /// Builds a configuration from named values with activity derived from
    /// the conditions. Inactive parameters may carry a value (kept for when
    /// the parent later activates them); `None` falls back to the placeholder.
    pub fn configuration_from_values(
        &self,
        named: &BTreeMap<String, Option<NamedValue>>,
    ) -> Result<Configuration> {
        for key in named.keys() {
            if self.index_of(key).is_none() {
                return Err(Error::UnknownParameter(key.clone()));
            }
        }
        let mut values = Vec::with_capacity(self.k());
        for p in &self.params {
            values.push(match named.get(&p.name) {
                None | Some(None) => p.placeholder(),
                Some(Some(v)) => v.to_value(p)?,
            });
        }
        Ok(self.configuration(values))
    }

    /// Named form of a configuration; inactive parameters map to `None`.
    pub fn to_named(&self, config: &Configuration) -> BTreeMap<String, Option<NamedValue>> {
        self.params
            .iter()
            .enumerate()
            .map(|(i, p)| {
                let v = config.active[i].then(|| NamedValue::from_value(p, config.values[i]));
                (p.name.clone(), v)
            })
            .collect()
    }

    pub fn to_json(&self) -> String {
        let doc = SpaceDocument {
            algorithm: self.algorithm.clone(),
            params: self.params.clone(),
        };
        let mut s = serde_json::to_string_pretty(&doc).expect("space serializes");
        s.push('\n');
        s
    }
}

impl fmt::Display for SearchSpace {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} (k={})", self.algorithm, self.k())
    }
}

/// Parses a space-definition document (JSON).
pub fn parse_space(document: &str) -> Result<SearchSpace> {
    let doc: SpaceDocument = serde_json::from_str(document)
        .map_err(|e| Error::Space(format!("malformed space document: {e}")))?;
    SearchSpace::new(doc.algorithm, doc.params)
}

pub const BUNDLED_ALGORITHMS: [&str; 6] = ["glmnet", "rpart", "kknn", "svm", "ranger", "xgboost"];

pub fn bundled_space_document(algorithm: &str) -> Option<&'static str> {
    Some(match algorithm {
        "glmnet" => include_str!("../spaces/glmnet.json"),
        "rpart" => include_str!("../spaces/rpart.json"),
        "kknn" => include_str!("../spaces/kknn.json"),
        "svm" => include_str!("../spaces/svm.json"),
        "ranger" => include_str!("../spaces/ranger.json"),
        "xgboost" => include_str!("../spaces/xgboost.json"),
        _ => return None,
    })
}

pub fn bundled_space(algorithm: &str) -> Result<SearchSpace> {
    let doc = bundled_space_document(algorithm)
        .ok_or_else(|| Error::Space(format!("no bundled space for `{algorithm}`")))?;
    parse_space(doc)
}

/// Software-shipped defaults for a bundled algorithm, on the untransformed scale.
pub fn bundled_package_defaults(algorithm: &str) -> Result<Configuration> {
    let space = bundled_space(algorithm)?;
    let all: BTreeMap<String, BTreeMap<String, Option<NamedValue>>> =
        serde_json::from_str(include_str!("../spaces/package_defaults.json"))?;
    let named = all
        .get(algorithm)
        .ok_or_else(|| Error::Space(format!("no package defaults for `{algorithm}`")))?;
    let config = space.configuration_from_values(named)?;
    let violations = validate_configuration(&space, &config);
    if !violations.is_empty() {
        return Err(Error::Configuration(join_violations(&violations)));
    }
    Ok(config)
}

/// A configuration value in its named (serialized) form.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum NamedValue {
    Num(f64),
    Label(String),
    Bool(bool),
}

impl NamedValue {
    pub fn from_value(def: &ParamDef, value: Value) -> Self {
        match value {
            Value::Num(x) => NamedValue::Num(x),
            Value::Level(_) => NamedValue::Label(def.format_value(value)),
        }
    }

    pub fn to_value(&self, def: &ParamDef) -> Result<Value> {
        match (self, def.kind.is_numeric()) {
            (NamedValue::Num(x), true) => Ok(Value::Num(*x)),
            (NamedValue::Label(s), false) => def.parse_value(s),
            (NamedValue::Bool(b), false) => def.parse_value(if *b { "true" } else { "false" }),
            _ => Err(Error::Configuration(format!(
                "{}: value {self:?} does not match kind {:?}",
                def.name, def.kind
            ))),
        }
    }
}

/// A point in a search space together with per-parameter activity flags.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Configuration {
    values: Vec<Value>,
    active: Vec<bool>,
}

impl Configuration {
    /// Raw constructor; nothing is checked.
    pub fn from_parts(values: Vec<Value>, active: Vec<bool>) -> Self {
        Configuration { values, active }
    }

    pub fn values(&self) -> &[Value] {
        &self.values
    }

    pub fn active(&self) -> &[bool] {
        &self.active
    }

    pub fn value(&self, i: usize) -> Value {
        self.values[i]
    }

    pub fn is_active(&self, i: usize) -> bool {
        self.active[i]
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn into_values(self) -> Vec<Value> {
        self.values
    }
}

pub(crate) fn midpoint(lo: f64, hi: f64) -> f64 {
    lo + (hi - lo) / 2.0
}

pub fn round_half_up(x: f64) -> f64 {
    (x + 0.5).floor()
}

/// Maps a raw (sampling-scale) value to the value handed to a learner.
pub fn apply_trafo(def: &ParamDef, raw: f64, ds: Option<&DatasetInfo>) -> Result<f64> {
    let need_ds = || {
        ds.ok_or_else(|| Error::MissingDatasetInfo {
            param: def.name.clone(),
        })
    };
    let out = match def.trafo {
        Trafo::Identity => raw,
        Trafo::Pow2 => raw.exp2(),
        Trafo::ScaleByPCeil => {
            let p = need_ds()?.p as f64;
            (raw * p).ceil().clamp(1.0, p)
        }
        Trafo::PowNRound => {
            let n = need_ds()?.n as f64;
            round_half_up(n.powf(raw)).clamp(1.0, n)
        }
    };
    Ok(if def.kind == ParamKind::Integer {
        round_half_up(out)
    } else {
        out
    })
}

/// Draws one value of `def` uniformly on the untransformed scale.
pub fn sample_value<R: Rng + ?Sized>(def: &ParamDef, rng: &mut R) -> Value {
    match def.kind {
        ParamKind::Numeric => {
            let (lo, hi) = def.bounds();
            if lo == hi {
                Value::Num(lo)
            } else {
                let u: f64 = rng.random();
                Value::Num((lo + (hi - lo) * u).min(hi))
            }
        }
        ParamKind::Integer => {
            let (lo, hi) = def.bounds();
            Value::Num(rng.random_range(lo as i64..=hi as i64) as f64)
        }
        ParamKind::Discrete | ParamKind::Logical => {
            Value::Level(rng.random_range(0..def.levels.len()))
        }
    }
}

/// Samples a configuration uniformly; conditional parameters are drawn only
/// when their parent activates them and hold their placeholder otherwise.
pub fn sample_configuration<R: Rng + ?Sized>(space: &SearchSpace, rng: &mut R) -> Configuration {
    sample_with_fixed(space, &vec![None; space.k()], rng)
}

/// Samples the free parameters (`fixed[i] == None`) of a space.
pub(crate) fn sample_with_fixed<R: Rng + ?Sized>(
    space: &SearchSpace,
    fixed: &[Option<Value>],
    rng: &mut R,
) -> Configuration {
    let k = space.k();
    let mut values = Vec::with_capacity(k);
    // parents are always unconditional, so they are settled in this pass
    for (i, def) in space.params().iter().enumerate() {
        values.push(match fixed[i] {
            Some(v) => v,
            None if space.is_conditional(i) => def.placeholder(),
            None => sample_value(def, rng),
        });
    }
    for i in 0..k {
        if fixed[i].is_none() && space.is_conditional(i) && space.activity(i, &values) {
            values[i] = sample_value(space.param(i), rng);
        }
    }
    space.configuration(values)
}

/// Grid values of a parameter with at most `levels` points per numeric axis.
pub fn grid_values(def: &ParamDef, levels: usize) -> Vec<Value> {
    match def.kind {
        ParamKind::Numeric => {
            let (lo, hi) = def.bounds();
            if lo == hi || levels < 2 {
                return vec![Value::Num(lo)];
            }
            let steps = (levels - 1) as f64;
            (0..levels)
                .map(|i| Value::Num(lo + (hi - lo) * (i as f64) / steps))
                .collect()
        }
        ParamKind::Integer => {
            let (lo, hi) = def.bounds();
            let count = (hi - lo) as usize + 1;
            if count <= levels.max(1) {
                return (0..count).map(|i| Value::Num(lo + i as f64)).collect();
            }
            let steps = (levels.max(2) - 1) as f64;
            let mut out: Vec<Value> = Vec::with_capacity(levels);
            for i in 0..levels.max(2) {
                let v = round_half_up(lo + (hi - lo) * (i as f64) / steps);
                if out.last() != Some(&Value::Num(v)) {
                    out.push(Value::Num(v));
                }
            }
            out
        }
        ParamKind::Discrete | ParamKind::Logical => {
            (0..def.levels.len()).map(Value::Level).collect()
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Violation {
    pub param: String,
    pub rule: String,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.rule)
    }
}

pub(crate) fn join_violations(v: &[Violation]) -> String {
    v.iter().map(|v| v.rule.as_str()).collect::<Vec<_>>().join("; ")
}

/// Lists every broken configuration invariant; empty means valid.
pub fn validate_configuration(space: &SearchSpace, config: &Configuration) -> Vec<Violation> {
    let mut out = Vec::new();
    if config.values.len() != space.k() || config.active.len() != space.k() {
        out.push(Violation {
            param: String::new(),
            rule: format!(
                "configuration has {} entries, space has {} parameters",
                config.values.len(),
                space.k()
            ),
        });
        return out;
    }
    for (i, def) in space.params().iter().enumerate() {
        let name = &def.name;
        let mut push = |rule: String| {
            out.push(Violation {
                param: name.clone(),
                rule,
            })
        };
        let should_be_active = space.activity(i, &config.values);
        match (should_be_active, config.active[i]) {
            (true, false) => push(format!("{name} must be active")),
            (false, true) => push(format!("{name} must be inactive")),
            _ => {}
        }
        if !config.active[i] {
            continue;
        }
        match (def.kind, config.values[i]) {
            (ParamKind::Numeric | ParamKind::Integer, Value::Num(x)) => {
                let (lo, hi) = def.bounds();
                if !(x >= lo && x <= hi) {
                    push(format!("{name} out of bounds"));
                } else if def.kind == ParamKind::Integer && x.fract() != 0.0 {
                    push(format!("{name} must be an integer"));
                }
            }
            (ParamKind::Discrete | ParamKind::Logical, Value::Level(l)) => {
                if l >= def.levels.len() {
                    push(format!("{name} level out of range"));
                }
            }
            _ => push(format!("{name} has a value of the wrong kind")),
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream;

    fn numeric(name: &str, lo: f64, hi: f64) -> ParamDef {
        ParamDef {
            name: name.into(),
            kind: ParamKind::Numeric,
            lower: Some(lo),
            upper: Some(hi),
            levels: vec![],
            trafo: Trafo::Identity,
            condition: None,
        }
    }

    #[test]
    fn bundled_glmnet_has_table_bounds() {
        let s = bundled_space("glmnet").unwrap();
        let alpha = s.param(s.index_of("alpha").unwrap());
        assert_eq!((alpha.lower, alpha.upper, alpha.trafo), (Some(0.0), Some(1.0), Trafo::Identity));
        let lambda = s.param(s.index_of("lambda").unwrap());
        assert_eq!((lambda.lower, lambda.upper, lambda.trafo), (Some(-10.0), Some(10.0), Trafo::Pow2));
    }

    #[test]
    fn bundled_svm_conditions() {
        let s = bundled_space("svm").unwrap();
        let gamma = s.param(s.index_of("gamma").unwrap());
        assert_eq!(
            gamma.condition,
            Some(Condition { parent: "kernel".into(), values: vec!["radial".into()] })
        );
        let degree = s.param(s.index_of("degree").unwrap());
        assert_eq!(
            degree.condition,
            Some(Condition { parent: "kernel".into(), values: vec!["polynomial".into()] })
        );
    }

    #[test]
    fn empty_space_is_rejected() {
        let err = parse_space(r#"{"algorithm":"x","params":[]}"#).unwrap_err();
        assert!(err.to_string().contains("empty space"));
    }

    #[test]
    fn parse_errors() {
        let dup = r#"{"algorithm":"x","params":[
            {"name":"a","kind":"numeric","lower":0,"upper":1},
            {"name":"a","kind":"numeric","lower":0,"upper":1}]}"#;
        assert!(parse_space(dup).unwrap_err().to_string().contains("duplicate"));
        let inv = r#"{"algorithm":"x","params":[{"name":"a","kind":"numeric","lower":2,"upper":1}]}"#;
        assert!(parse_space(inv).unwrap_err().to_string().contains("bound inversion"));
        let trafo = r#"{"algorithm":"x","params":[{"name":"a","kind":"numeric","lower":0,"upper":1,"trafo":"log"}]}"#;
        assert!(parse_space(trafo).is_err());
        let dangling = r#"{"algorithm":"x","params":[{"name":"a","kind":"numeric","lower":0,"upper":1,
            "condition":{"parent":"b","values":["x"]}}]}"#;
        assert!(parse_space(dangling).unwrap_err().to_string().contains("dangling"));
        let selfref = r#"{"algorithm":"x","params":[{"name":"a","kind":"discrete","levels":["x"],
            "condition":{"parent":"a","values":["x"]}}]}"#;
        assert!(parse_space(selfref).unwrap_err().to_string().contains("itself"));
        let cyc = r#"{"algorithm":"x","params":[
            {"name":"a","kind":"discrete","levels":["x"],"condition":{"parent":"b","values":["x"]}},
            {"name":"b","kind":"discrete","levels":["x"],"condition":{"parent":"a","values":["x"]}}]}"#;
        assert!(parse_space(cyc).is_err());
        let bad_logical = r#"{"algorithm":"x","params":[{"name":"a","kind":"logical","levels":["yes","no"]}]}"#;
        assert!(parse_space(bad_logical).is_err());
        let trafo_on_discrete = r#"{"algorithm":"x","params":[{"name":"a","kind":"discrete","levels":["u"],"trafo":"pow2"}]}"#;
        assert!(parse_space(trafo_on_discrete).is_err());
    }

    #[test]
    fn trafo_examples() {
        let mut d = numeric("lambda", -10.0, 10.0);
        d.trafo = Trafo::Pow2;
        assert_eq!(apply_trafo(&d, -10.0, None).unwrap(), 0.0009765625);
        let id = numeric("alpha", 0.0, 1.0);
        assert_eq!(apply_trafo(&id, 0.5, None).unwrap(), 0.5);
        let mut mtry = numeric("mtry", 0.0, 1.0);
        mtry.trafo = Trafo::ScaleByPCeil;
        let ds = DatasetInfo::new("d", 50, 10).unwrap();
        assert_eq!(apply_trafo(&mtry, 0.257, Some(&ds)).unwrap(), 3.0);
        assert_eq!(apply_trafo(&mtry, 0.0, Some(&ds)).unwrap(), 1.0);
        assert!(matches!(
            apply_trafo(&mtry, 0.5, None),
            Err(Error::MissingDatasetInfo { .. })
        ));
        let mut mns = numeric("min.node.size", 0.0, 1.0);
        mns.trafo = Trafo::PowNRound;
        let ds = DatasetInfo::new("d", 100, 3).unwrap();
        assert_eq!(apply_trafo(&mns, 0.5, Some(&ds)).unwrap(), 10.0);
        assert_eq!(apply_trafo(&mns, 1.0, Some(&ds)).unwrap(), 100.0);
    }

    #[test]
    fn integer_trafo_rounds_half_up() {
        let d = ParamDef {
            kind: ParamKind::Integer,
            ..numeric("k", 1.0, 30.0)
        };
        assert_eq!(apply_trafo(&d, 2.5, None).unwrap(), 3.0);
    }

    #[test]
    fn degenerate_bounds_sample_the_bound() {
        let s = SearchSpace::new("x", vec![numeric("a", 0.3, 0.3)]).unwrap();
        let c = sample_configuration(&s, &mut stream(1, &[]));
        assert_eq!(c.value(0), Value::Num(0.3));
        assert!(c.is_active(0));
    }

    #[test]
    fn svm_linear_kernel_deactivates_children() {
        let s = bundled_space("svm").unwrap();
        let kernel = s.index_of("kernel").unwrap();
        let linear = s.param(kernel).level_index("linear").unwrap();
        let mut rng = stream(3, &[]);
        let mut seen = 0;
        for _ in 0..200 {
            let c = sample_configuration(&s, &mut rng);
            if c.value(kernel) == Value::Level(linear) {
                seen += 1;
                assert!(!c.is_active(s.index_of("gamma").unwrap()));
                assert!(!c.is_active(s.index_of("degree").unwrap()));
            }
        }
        assert!(seen > 0);
    }

    #[test]
    fn rpart_draws_stay_in_bounds() {
        let s = bundled_space("rpart").unwrap();
        let mut rng = stream(11, &[]);
        for _ in 0..1000 {
            let c = sample_configuration(&s, &mut rng);
            assert!(c.active().iter().all(|&a| a));
            for (i, p) in s.params().iter().enumerate() {
                let x = c.value(i).as_num().unwrap();
                let (lo, hi) = p.bounds();
                assert!(x >= lo && x <= hi);
            }
        }
    }

    #[test]
    fn validation_examples() {
        let s = bundled_space("glmnet").unwrap();
        let ok = s.configuration(vec![Value::Num(0.5), Value::Num(0.0)]);
        assert!(validate_configuration(&s, &ok).is_empty());
        let bad = s.configuration(vec![Value::Num(1.5), Value::Num(0.0)]);
        let v = validate_configuration(&s, &bad);
        assert_eq!(v.len(), 1);
        assert_eq!(v[0].rule, "alpha out of bounds");

        let svm = bundled_space("svm").unwrap();
        let mut c = svm.placeholder_configuration();
        let kernel = svm.index_of("kernel").unwrap();
        let gamma = svm.index_of("gamma").unwrap();
        let mut values = c.values().to_vec();
        values[kernel] = Value::Level(svm.param(kernel).level_index("linear").unwrap());
        let mut active = svm.configuration(values.clone()).active().to_vec();
        active[gamma] = true;
        c = Configuration::from_parts(values, active);
        let v = validate_configuration(&svm, &c);
        assert!(v.iter().any(|v| v.rule == "gamma must be inactive"));
    }

    #[test]
    fn grid_values_cover_bounds() {
        let d = numeric("a", 0.0, 1.0);
        let g = grid_values(&d, 101);
        assert_eq!(g.len(), 101);
        assert_eq!(g[40], Value::Num(0.4));
        assert_eq!(g[100], Value::Num(1.0));
        let k = ParamDef {
            kind: ParamKind::Integer,
            ..numeric("k", 1.0, 30.0)
        };
        assert_eq!(grid_values(&k, 100).len(), 30);
        let coarse = grid_values(&k, 5);
        assert_eq!(coarse.first(), Some(&Value::Num(1.0)));
        assert_eq!(coarse.last(), Some(&Value::Num(30.0)));
    }

    #[test]
    fn named_round_trip() {
        let s = bundled_space("svm").unwrap();
        let c = sample_configuration(&s, &mut stream(5, &[]));
        let named = s.to_named(&c);
        let back = s.configuration_from_named(&named).unwrap();
        assert_eq!(back.active(), c.active());
        for i in 0..s.k() {
            if c.is_active(i) {
                assert_eq!(back.value(i), c.value(i));
            }
        }
    }

    #[test]
    fn package_defaults_are_valid() {
        for algo in BUNDLED_ALGORITHMS {
            let c = bundled_package_defaults(algo).unwrap();
            assert_eq!(c.len(), bundled_space(algo).unwrap().k());
        }
        let rpart = bundled_package_defaults("rpart").unwrap();
        assert_eq!(rpart.values(), &[Value::Num(0.01), Value::Num(30.0), Value::Num(7.0), Value::Num(20.0)]);
    }
}
