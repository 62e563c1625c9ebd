//! Experiment configuration: TOML schema, dotted-key overrides, validation,
//! and construction of the runtime objects.

use std::path::{Path, PathBuf};

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::delay::{DelaySchedule, ServiceTime};
use crate::domain::{DomainSpec, Halfspace, Vector};
use crate::error::{Error, Result};
use crate::oco::WeightSchedule;
use crate::oracle::{
    load_dataset, random_quadratic, synth_classification, Dataset, DatasetFormat, NoiseModel, ProblemSpec,
};

fn default_optimum_tolerance() -> f64 {
    1e-9
}

fn default_test_fraction() -> f64 {
    0.2
}

fn default_scale() -> f64 {
    1.0
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub seed: u64,
    pub iterations: usize,
    /// Record every N steps (default 10). Exclusive with `record_per_decade`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub record_every: Option<usize>,
    /// Record at K log-spaced steps per decade.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub record_per_decade: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub weights: Option<WeightSchedule>,
    /// Starting point; defaults to the domain center.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub initial_point: Option<Vec<f64>>,
    #[serde(default = "default_optimum_tolerance")]
    pub optimum_tolerance: f64,
    pub problem: ProblemConfig,
    pub domain: DomainConfig,
    #[serde(default)]
    pub noise: NoiseConfig,
    #[serde(default)]
    pub delay: DelayConfig,
    pub algorithm: AlgorithmConfig,
    #[serde(default, skip_serializing_if = "SweepConfig::is_empty")]
    pub sweep: SweepConfig,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum ProblemConfig {
    /// `0.5 x'Ax - b'x`.
    Quadratic { matrix: Vec<Vec<f64>>, linear: Vec<f64> },
    RandomQuadratic {
        dim: usize,
        smoothness: f64,
        strong_convexity: f64,
        optimum_norm: f64,
        generator_seed: u64,
    },
    Logistic {
        dataset: DatasetConfig,
        lambda: f64,
        #[serde(default = "default_test_fraction")]
        test_fraction: f64,
        #[serde(default)]
        split_seed: u64,
    },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum DatasetConfig {
    Synthetic {
        dim: usize,
        examples: usize,
        classes: usize,
        separation: f64,
        seed: u64,
    },
    Csv {
        path: PathBuf,
        #[serde(default)]
        label_column: usize,
        #[serde(default)]
        header: bool,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        classes: Option<usize>,
    },
    Idx {
        images: PathBuf,
        labels: PathBuf,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        classes: Option<usize>,
    },
}

/// A scalar broadcast to every coordinate, or an explicit vector.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Bound {
    Scalar(f64),
    Vector(Vec<f64>),
}

impl Bound {
    fn resolve(&self, dim: usize, key: &str) -> Result<Vector> {
        match self {
            Bound::Scalar(v) => Ok(Vector::from_element(dim, *v)),
            Bound::Vector(v) if v.len() == dim => Ok(Vector::from_column_slice(v)),
            Bound::Vector(v) => Err(Error::config(key, format!("expected {dim} entries, got {}", v.len()))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum DomainConfig {
    Ball {
        radius: f64,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        center: Option<Vec<f64>>,
    },
    Box { lower: Bound, upper: Bound },
    Simplex {
        #[serde(default = "default_scale")]
        scale: f64,
    },
    /// `{x : normals[i]·x <= offsets[i]}`; must be bounded.
    Halfspaces { normals: Vec<Vec<f64>>, offsets: Vec<f64> },
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum NoiseConfig {
    #[default]
    None,
    Gaussian { sigma: f64 },
    Sample { batch: usize },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ServiceConfig {
    Fixed(usize),
    LogNormal { mu: f64, sigma: f64 },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum DelayConfig {
    Constant { tau: usize },
    Sequence { values: Vec<usize> },
    Lognormal { mu: f64, sigma: f64 },
    Uniform { lo: usize, hi: usize },
    Queue { workers: usize, service: ServiceConfig },
}

impl Default for DelayConfig {
    fn default() -> Self {
        DelayConfig::Constant { tau: 0 }
    }
}

impl DelayConfig {
    pub fn schedule(&self) -> DelaySchedule {
        match self {
            DelayConfig::Constant { tau } => DelaySchedule::Constant(*tau),
            DelayConfig::Sequence { values } => DelaySchedule::Sequence(values.clone()),
            DelayConfig::Lognormal { mu, sigma } => DelaySchedule::LogNormal { mu: *mu, sigma: *sigma },
            DelayConfig::Uniform { lo, hi } => DelaySchedule::Uniform { lo: *lo, hi: *hi },
            DelayConfig::Queue { workers, service } => DelaySchedule::Queue {
                workers: *workers,
                service: match service {
                    ServiceConfig::Fixed(k) => ServiceTime::Constant(*k),
                    ServiceConfig::LogNormal { mu, sigma } => ServiceTime::LogNormal { mu: *mu, sigma: *sigma },
                },
            },
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AnytimeStepRule {
    /// Effective step `lr / sqrt(t)`.
    #[default]
    Decaying,
    /// `eta_t = lr`.
    Constant,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum AlgorithmConfig {
    /// Delayed SGD with a constant step, returning the last iterate.
    SgdConstant { lr: f64 },
    /// Delayed OGD with the known-constants step sizes, returning the
    /// weighted average. `grad_bound_sq` is `2G^2 + 2 sigma^2`; when omitted
    /// it is derived from the problem's gradient bound and Gaussian noise.
    OgdAppendixC {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        grad_bound_sq: Option<f64>,
    },
    /// Anytime online-to-batch with OGD.
    AnytimeSgd {
        lr: f64,
        #[serde(default)]
        step_rule: AnytimeStepRule,
    },
    /// Anytime online-to-batch with adaptive optimistic OGD.
    OptimisticAnytime {},
    /// Optimistic strongly convex OGD without delays.
    ScOptimistic { h: f64 },
    /// Optimistic strongly convex OGD with delayed feedback.
    ScOptimisticDelayed { h: f64 },
}

impl AlgorithmConfig {
    pub fn name(&self) -> &'static str {
        match self {
            AlgorithmConfig::SgdConstant { .. } => "sgd-constant",
            AlgorithmConfig::OgdAppendixC { .. } => "ogd-appendix-c",
            AlgorithmConfig::AnytimeSgd { .. } => "anytime-sgd",
            AlgorithmConfig::OptimisticAnytime {} => "optimistic-anytime",
            AlgorithmConfig::ScOptimistic { .. } => "sc-optimistic",
            AlgorithmConfig::ScOptimisticDelayed { .. } => "sc-optimistic-delayed",
        }
    }

    pub fn default_weights(&self) -> WeightSchedule {
        match self {
            AlgorithmConfig::SgdConstant { .. } | AlgorithmConfig::OgdAppendixC { .. } => WeightSchedule::Uniform,
            AlgorithmConfig::AnytimeSgd { .. } | AlgorithmConfig::OptimisticAnytime {} => WeightSchedule::Linear,
            AlgorithmConfig::ScOptimistic { .. } | AlgorithmConfig::ScOptimisticDelayed { .. } => {
                WeightSchedule::Quadratic
            }
        }
    }

    /// The tunable learning rate, if the algorithm has one.
    pub fn learning_rate(&self) -> Option<f64> {
        match self {
            AlgorithmConfig::SgdConstant { lr } | AlgorithmConfig::AnytimeSgd { lr, .. } => Some(*lr),
            _ => None,
        }
    }

    pub fn with_learning_rate(&self, lr: f64) -> Result<Self> {
        let mut out = self.clone();
        match &mut out {
            AlgorithmConfig::SgdConstant { lr: v } | AlgorithmConfig::AnytimeSgd { lr: v, .. } => *v = lr,
            other => {
                return Err(Error::config(
                    "sweep.learning_rates",
                    format!("algorithm `{}` has no learning rate", other.name()),
                ))
            }
        }
        Ok(out)
    }

    /// Whether queries are running averages of learner iterates with
    /// linear weights, so the staleness bound `8 tau D / t` applies.
    pub fn is_anytime(&self) -> bool {
        matches!(self, AlgorithmConfig::AnytimeSgd { .. } | AlgorithmConfig::OptimisticAnytime {})
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepConfig {
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub learning_rates: Vec<f64>,
    /// Constant delays.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub delays: Vec<usize>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub seeds: Vec<u64>,
}

impl SweepConfig {
    pub fn is_empty(&self) -> bool {
        self.learning_rates.is_empty() && self.delays.is_empty() && self.seeds.is_empty()
    }
}

/// How often run metrics are sampled.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum RecordSchedule {
    Every(usize),
    PerDecade(usize),
}

impl RecordSchedule {
    /// Sorted record steps in `1..=steps`; the last step is always included.
    pub fn steps(self, steps: usize) -> Vec<usize> {
        let mut out: Vec<usize> = match self {
            RecordSchedule::Every(n) => (1..=steps / n).map(|k| k * n).collect(),
            RecordSchedule::PerDecade(k) => {
                let mut v = Vec::new();
                let mut j = 0u32;
                loop {
                    let t = 10f64.powf(j as f64 / k as f64).round() as usize;
                    if t > steps {
                        break;
                    }
                    v.push(t);
                    j += 1;
                }
                v
            }
        };
        out.push(steps);
        out.dedup();
        out
    }
}

fn parse_override_value(raw: &str) -> toml::Value {
    let doc = format!("v = {raw}");
    match doc.parse::<toml::Table>() {
        Ok(mut t) => t.remove("v").unwrap_or_else(|| toml::Value::String(raw.to_string())),
        Err(_) => toml::Value::String(raw.to_string()),
    }
}

/// Applies a `dotted.key=value` override to a parsed TOML document. The value
/// is parsed as a TOML literal, falling back to a bare string.
pub fn apply_override(doc: &mut toml::Table, assignment: &str) -> Result<()> {
    let (key, raw) = assignment
        .split_once('=')
        .ok_or_else(|| Error::config(assignment, "override must have the form key=value"))?;
    let key = key.trim();
    let parts: Vec<&str> = key.split('.').collect();
    if parts.iter().any(|p| p.is_empty()) {
        return Err(Error::config(key, "empty path segment in override key"));
    }
    let mut table = doc;
    for (i, part) in parts[..parts.len() - 1].iter().enumerate() {
        let entry = table
            .entry(part.to_string())
            .or_insert_with(|| toml::Value::Table(toml::Table::new()));
        table = entry.as_table_mut().ok_or_else(|| {
            Error::config(parts[..=i].join("."), "override descends into a non-table value")
        })?;
    }
    table.insert(parts[parts.len() - 1].to_string(), parse_override_value(raw.trim()));
    Ok(())
}

impl ExperimentConfig {
    /// Parses a TOML document, applying overrides first. Type errors and
    /// unknown fields are reported with the dotted key that caused them.
    pub fn from_toml_str(text: &str, overrides: &[String]) -> Result<Self> {
        let mut doc: toml::Table = text
            .parse()
            .map_err(|e: toml::de::Error| Error::config("<document>", e.message().to_string()))?;
        for o in overrides {
            apply_override(&mut doc, o)?;
        }
        Self::from_table(doc)
    }

    pub fn from_table(doc: toml::Table) -> Result<Self> {
        let cfg = parse_table(&doc).map_err(|(path, message)| {
            let key = refine_key(&doc, &path, &message);
            Error::config(key, message)
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path, overrides: &[String]) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml_str(&text, overrides)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("config is representable in TOML")
    }

    pub fn validate(&self) -> Result<()> {
        if self.iterations == 0 {
            return Err(Error::config("iterations", "must be at least 1"));
        }
        match (self.record_every, self.record_per_decade) {
            (Some(_), Some(_)) => {
                return Err(Error::config("record_per_decade", "cannot be combined with record_every"))
            }
            (Some(0), _) => return Err(Error::config("record_every", "must be at least 1")),
            (_, Some(0)) => return Err(Error::config("record_per_decade", "must be at least 1")),
            _ => {}
        }
        if !(self.optimum_tolerance.is_finite() && self.optimum_tolerance > 0.0) {
            return Err(Error::config("optimum_tolerance", "must be positive"));
        }
        let positive = |v: f64, key: &str| {
            if v.is_finite() && v > 0.0 {
                Ok(())
            } else {
                Err(Error::config(key, format!("must be positive and finite, got {v}")))
            }
        };
        match &self.algorithm {
            AlgorithmConfig::SgdConstant { lr } | AlgorithmConfig::AnytimeSgd { lr, .. } => positive(*lr, "algorithm.lr")?,
            AlgorithmConfig::OgdAppendixC { grad_bound_sq: Some(g) } => positive(*g, "algorithm.grad_bound_sq")?,
            AlgorithmConfig::ScOptimistic { h } | AlgorithmConfig::ScOptimisticDelayed { h } => positive(*h, "algorithm.h")?,
            _ => {}
        }
        if let ProblemConfig::Logistic { lambda, test_fraction, .. } = &self.problem {
            if !(lambda.is_finite() && *lambda >= 0.0) {
                return Err(Error::config("problem.lambda", "must be nonnegative"));
            }
            if !(0.0..1.0).contains(test_fraction) {
                return Err(Error::config("problem.test_fraction", "must lie in [0, 1)"));
            }
        }
        if matches!(self.noise, NoiseConfig::Sample { .. }) && !matches!(self.problem, ProblemConfig::Logistic { .. }) {
            return Err(Error::config("noise.kind", "sample noise requires a dataset-backed problem"));
        }
        if let NoiseConfig::Sample { batch: 0 } = self.noise {
            return Err(Error::config("noise.batch", "must be at least 1"));
        }
        if matches!(self.algorithm, AlgorithmConfig::ScOptimistic { .. }) && self.delay != DelayConfig::default() {
            return Err(Error::config(
                "delay",
                "sc-optimistic does not take delayed feedback; use sc-optimistic-delayed",
            ));
        }
        for lr in &self.sweep.learning_rates {
            positive(*lr, "sweep.learning_rates")?;
        }
        if !self.sweep.learning_rates.is_empty() {
            self.algorithm.with_learning_rate(1.0)?;
        }
        self.delay.schedule().validate().map_err(|e| match e {
            Error::InvalidConfiguration { key, message } if !key.starts_with("delay") => {
                Error::config(format!("delay.{key}"), message)
            }
            other => other,
        })?;
        Ok(())
    }

    pub fn weights(&self) -> WeightSchedule {
        self.weights.unwrap_or_else(|| self.algorithm.default_weights())
    }

    pub fn record_schedule(&self) -> RecordSchedule {
        match (self.record_every, self.record_per_decade) {
            (_, Some(k)) => RecordSchedule::PerDecade(k),
            (Some(n), None) => RecordSchedule::Every(n),
            (None, None) => RecordSchedule::Every(10),
        }
    }

    /// SHA-256 of the canonical JSON form of the whole configuration.
    pub fn hash(&self) -> String {
        digest(&serde_json::to_value(self).expect("config serializes"))
    }

    /// Hash of the objective and domain only; runs with equal problem hashes
    /// share their reference optimum.
    pub fn problem_hash(&self) -> String {
        digest(&serde_json::json!({ "problem": self.problem, "domain": self.domain }))
    }

    /// Builds the problem. Relative dataset paths resolve against `base_dir`.
    pub fn build(&self, base_dir: &Path) -> Result<BuiltProblem> {
        let noise = match self.noise {
            NoiseConfig::None => NoiseModel::None,
            NoiseConfig::Gaussian { sigma } => NoiseModel::Gaussian { sigma },
            NoiseConfig::Sample { batch } => NoiseModel::Sample { batch },
        };
        let (problem, test) = match &self.problem {
            ProblemConfig::Quadratic { matrix, linear } => {
                let d = linear.len();
                if matrix.len() != d || matrix.iter().any(|r| r.len() != d) {
                    return Err(Error::config("problem.matrix", format!("must be {d}x{d} to match problem.linear")));
                }
                let a = DMatrix::from_fn(d, d, |i, j| matrix[i][j]);
                let domain = self.build_domain(d)?;
                let p = ProblemSpec::quadratic(a, Vector::from_column_slice(linear), domain, noise)
                    .map_err(|e| to_config("problem", e))?;
                (p, None)
            }
            ProblemConfig::RandomQuadratic {
                dim,
                smoothness,
                strong_convexity,
                optimum_norm,
                generator_seed,
            } => {
                let (a, b) = random_quadratic(*dim, *smoothness, *strong_convexity, *optimum_norm, *generator_seed)?;
                let domain = self.build_domain(*dim)?;
                (ProblemSpec::quadratic(a, b, domain, noise).map_err(|e| to_config("problem", e))?, None)
            }
            ProblemConfig::Logistic {
                dataset,
                lambda,
                test_fraction,
                split_seed,
            } => {
                let data = load_configured_dataset(dataset, base_dir)?;
                let (train, test) = if *test_fraction > 0.0 {
                    let (train, test) = data.split(*test_fraction, *split_seed).map_err(|e| to_config("problem.test_fraction", e))?;
                    (train, test)
                } else {
                    (data.clone(), data)
                };
                let dim = train.classes() * train.feature_count();
                let domain = self.build_domain(dim)?;
                let p = ProblemSpec::logistic(train, *lambda, domain, noise).map_err(|e| to_config("problem", e))?;
                (p, Some(test))
            }
        };
        let initial_point = match &self.initial_point {
            Some(v) => {
                let x = Vector::from_column_slice(v);
                if x.len() != problem.dim() || !problem.domain().contains(&x) {
                    return Err(Error::config("initial_point", "must be a point of the domain"));
                }
                Some(x)
            }
            None => None,
        };
        Ok(BuiltProblem {
            problem,
            test,
            initial_point,
        })
    }

    fn build_domain(&self, dim: usize) -> Result<DomainSpec> {
        let d = match &self.domain {
            DomainConfig::Ball { radius, center } => {
                let c = match center {
                    Some(c) => Bound::Vector(c.clone()).resolve(dim, "domain.center")?,
                    None => Vector::zeros(dim),
                };
                DomainSpec::ball(c, *radius)
            }
            DomainConfig::Box { lower, upper } => {
                DomainSpec::boxed(lower.resolve(dim, "domain.lower")?, upper.resolve(dim, "domain.upper")?)
            }
            DomainConfig::Simplex { scale } => DomainSpec::simplex(dim, *scale),
            DomainConfig::Halfspaces { normals, offsets } => {
                if normals.len() != offsets.len() {
                    return Err(Error::config("domain.offsets", "need one offset per normal"));
                }
                let hs = normals
                    .iter()
                    .zip(offsets)
                    .map(|(n, o)| {
                        Ok(Halfspace {
                            normal: Bound::Vector(n.clone()).resolve(dim, "domain.normals")?,
                            offset: *o,
                        })
                    })
                    .collect::<Result<Vec<_>>>()?;
                DomainSpec::halfspaces(hs)
            }
        };
        d.map_err(|e| to_config("domain", e))
    }
}

/// Deserializes a document, returning the dotted path and message on failure.
fn parse_table(doc: &toml::Table) -> std::result::Result<ExperimentConfig, (String, String)> {
    serde_path_to_error::deserialize(toml::Value::Table(doc.clone())).map_err(|e| {
        let path = e.path().to_string();
        let path = if path == "." { String::new() } else { path };
        (path, e.into_inner().to_string())
    })
}

fn join_key(path: &str, field: &str) -> String {
    if path.is_empty() {
        field.to_string()
    } else {
        format!("{path}.{field}")
    }
}

/// Narrows an error key that stops at a `kind`-tagged table down to the field
/// at fault. Tagged tables are buffered before their variant is decoded, so
/// the reported path ends at the table. The field is read off the message
/// when serde names it; otherwise each field is replaced by probe values of
/// every basic type, and the field whose replacement clears the error at this
/// path is reported.
fn refine_key(doc: &toml::Table, path: &str, message: &str) -> String {
    for marker in ["unknown field `", "missing field `"] {
        if let Some(rest) = message.find(marker).map(|i| &message[i + marker.len()..]) {
            if let Some(field) = rest.split('`').next() {
                return join_key(path, field);
            }
        }
    }
    let fallback = if path.is_empty() { "<document>".to_string() } else { path.to_string() };
    let segments: Vec<&str> = if path.is_empty() { Vec::new() } else { path.split('.').collect() };
    let Some(section) = lookup_table(doc, &segments) else {
        return fallback;
    };
    if !section.contains_key("kind") {
        return fallback;
    }
    let probes = [
        toml::Value::Integer(1),
        toml::Value::Float(1.0),
        toml::Value::Boolean(true),
        toml::Value::String(String::new()),
        toml::Value::Array(Vec::new()),
    ];
    for field in section.keys().filter(|k| *k != "kind") {
        for probe in &probes {
            let mut trial = doc.clone();
            if let Some(t) = lookup_table_mut(&mut trial, &segments) {
                t.insert(field.clone(), probe.clone());
            }
            match parse_table(&trial) {
                Ok(_) => return join_key(path, field),
                Err((p, _)) if p != path && !p.starts_with(&format!("{path}.")) => return join_key(path, field),
                Err(_) => {}
            }
        }
    }
    fallback
}

fn lookup_table<'a>(doc: &'a toml::Table, segments: &[&str]) -> Option<&'a toml::Table> {
    segments.iter().try_fold(doc, |t, s| t.get(*s)?.as_table())
}

fn lookup_table_mut<'a>(doc: &'a mut toml::Table, segments: &[&str]) -> Option<&'a mut toml::Table> {
    segments.iter().try_fold(doc, |t, s| t.get_mut(*s)?.as_table_mut())
}

fn to_config(key: &str, e: Error) -> Error {
    match e {
        Error::InvalidArgument(m) | Error::UnsupportedDomain(m) => Error::config(key, m),
        other => other,
    }
}

fn digest(value: &serde_json::Value) -> String {
    let canonical = serde_json::to_string(value).expect("json value serializes");
    hex::encode(Sha256::digest(canonical.as_bytes()))
}

fn load_configured_dataset(cfg: &DatasetConfig, base_dir: &Path) -> Result<Dataset> {
    let resolve = |p: &Path| if p.is_absolute() { p.to_path_buf() } else { base_dir.join(p) };
    match cfg {
        DatasetConfig::Synthetic {
            dim,
            examples,
            classes,
            separation,
            seed,
        } => synth_classification(*dim, *examples, *classes, *separation, *seed)
            .map_err(|e| to_config("problem.dataset", e)),
        DatasetConfig::Csv {
            path,
            label_column,
            header,
            classes,
        } => load_dataset(
            &resolve(path),
            &DatasetFormat::Csv {
                label_column: *label_column,
                header: *header,
            },
            *classes,
        ),
        DatasetConfig::Idx { images, labels, classes } => load_dataset(
            &resolve(images),
            &DatasetFormat::Idx { labels: resolve(labels) },
            *classes,
        ),
    }
}

/// Runtime objects built from a configuration.
#[derive(Clone, Debug)]
pub struct BuiltProblem {
    pub problem: ProblemSpec,
    /// Held-out examples for accuracy, for dataset-backed problems.
    pub test: Option<Dataset>,
    pub initial_point: Option<Vector>,
}
