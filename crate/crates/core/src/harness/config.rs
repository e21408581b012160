//! Experiment configuration: TOML text in, validated [`ExperimentConfig`] out.
//!
//! Parsing never stops at the first problem; every unknown key, type mismatch
//! and out-of-range value is collected into one [`ConfigError`].

use std::f64::consts::PI;
use std::fmt;

use serde::Serialize;
use sha2::{Digest, Sha256};
use toml::{Table, Value};

use crate::asymptotics::StatisticKind;
use crate::functions::TestFunction;
use crate::geometry::{DensitySpec, EmbeddedManifold, Manifold};
use crate::smoothing::PopulationContext;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ExperimentKind {
    BerryCircle,
    BerryTorus,
    Rates,
    Laplacian,
    Hks,
    Regression,
}

impl ExperimentKind {
    pub fn name(&self) -> &'static str {
        match self {
            ExperimentKind::BerryCircle => "berry_circle",
            ExperimentKind::BerryTorus => "berry_torus",
            ExperimentKind::Rates => "rates",
            ExperimentKind::Laplacian => "laplacian",
            ExperimentKind::Hks => "hks",
            ExperimentKind::Regression => "regression",
        }
    }

    fn parse(s: &str) -> Option<Self> {
        Some(match s {
            "berry_circle" => ExperimentKind::BerryCircle,
            "berry_torus" => ExperimentKind::BerryTorus,
            "rates" => ExperimentKind::Rates,
            "laplacian" => ExperimentKind::Laplacian,
            "hks" => ExperimentKind::Hks,
            "regression" => ExperimentKind::Regression,
            _ => return None,
        })
    }

    /// Whether the experiment reports distances to a normal limit.
    pub fn is_distributional(&self) -> bool {
        matches!(self, ExperimentKind::BerryCircle | ExperimentKind::BerryTorus | ExperimentKind::Laplacian | ExperimentKind::Regression)
    }

    fn default_statistics(&self) -> Vec<StatisticKind> {
        match self {
            ExperimentKind::BerryCircle | ExperimentKind::BerryTorus => vec![StatisticKind::Unnormalized, StatisticKind::Normalized],
            ExperimentKind::Rates => vec![StatisticKind::Normalized],
            ExperimentKind::Laplacian => vec![StatisticKind::Laplacian],
            ExperimentKind::Regression => vec![StatisticKind::Regression],
            ExperimentKind::Hks => vec![],
        }
    }
}

/// How the bandwidth depends on the sample size.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum BandwidthRule {
    /// `ε = n^{−1/(d+1)}`
    Default,
    /// `ε = n^a`
    Power(f64),
    /// constant `ε`
    Fixed(f64),
}

impl BandwidthRule {
    pub fn eps(&self, n: usize, d: usize) -> f64 {
        match *self {
            BandwidthRule::Default => (n as f64).powf(-1.0 / (d as f64 + 1.0)),
            BandwidthRule::Power(a) => (n as f64).powf(a),
            BandwidthRule::Fixed(e) => e,
        }
    }

    fn render(&self) -> String {
        match self {
            BandwidthRule::Default => "rule".into(),
            BandwidthRule::Power(a) => format!("power:{a:?}"),
            BandwidthRule::Fixed(e) => format!("fixed:{e:?}"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Centering {
    Population,
    Truth,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RegressionSettings {
    pub noise_sd: f64,
    pub clip: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct HksSettings {
    pub eta: f64,
    pub eigenpairs: usize,
    pub taus: Vec<f64>,
    pub extension_eps: f64,
}

/// A validated experiment description.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub experiment: ExperimentKind,
    pub seed: u64,
    pub replicates: usize,
    pub n: Vec<usize>,
    /// Evaluation points as chart angles.
    pub points: Vec<Vec<f64>>,
    pub bandwidth: BandwidthRule,
    pub centering: Centering,
    pub statistics: Vec<StatisticKind>,
    pub manifold: Manifold,
    pub density: DensitySpec,
    pub function: TestFunction,
    pub regression: Option<RegressionSettings>,
    pub hks: Option<HksSettings>,
    pub quadrature_resolution: Option<usize>,
    pub output: Option<String>,
}

pub const DEFAULT_REPLICATES: usize = 300;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ViolationKind {
    /// Unknown key, missing key or wrong type.
    Schema,
    /// Well-typed value outside its allowed range.
    Range,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Violation {
    pub kind: ViolationKind,
    pub field: String,
    pub message: String,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let tag = match self.kind {
            ViolationKind::Schema => "SchemaError",
            ViolationKind::Range => "RangeError",
        };
        write!(f, "{tag}: {}: {}", self.field, self.message)
    }
}

/// Every problem found in a configuration.
#[derive(Debug, Clone, PartialEq)]
pub struct ConfigError {
    pub violations: Vec<Violation>,
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "invalid configuration ({} problem(s)):", self.violations.len())?;
        for v in &self.violations {
            writeln!(f, "  {v}")?;
        }
        Ok(())
    }
}

impl std::error::Error for ConfigError {}

struct Checker {
    violations: Vec<Violation>,
    warnings: Vec<String>,
}

impl Checker {
    fn schema(&mut self, field: impl Into<String>, message: impl Into<String>) {
        self.violations.push(Violation { kind: ViolationKind::Schema, field: field.into(), message: message.into() });
    }

    fn range(&mut self, field: impl Into<String>, message: impl Into<String>) {
        self.violations.push(Violation { kind: ViolationKind::Range, field: field.into(), message: message.into() });
    }

    fn unknown_keys(&mut self, table: &Table, prefix: &str, allowed: &[&str]) {
        for key in table.keys() {
            if !allowed.contains(&key.as_str()) {
                self.schema(join(prefix, key), "unknown key");
            }
        }
    }

    fn string<'a>(&mut self, table: &'a Table, prefix: &str, key: &str) -> Option<&'a str> {
        match table.get(key) {
            None => None,
            Some(Value::String(s)) => Some(s),
            Some(other) => {
                self.schema(join(prefix, key), format!("expected a string, found {}", other.type_str()));
                None
            }
        }
    }

    fn float(&mut self, table: &Table, prefix: &str, key: &str) -> Option<f64> {
        match table.get(key) {
            None => None,
            Some(v) => self.as_float(v, &join(prefix, key)),
        }
    }

    fn as_float(&mut self, v: &Value, field: &str) -> Option<f64> {
        match v {
            Value::Float(x) => Some(*x),
            Value::Integer(i) => Some(*i as f64),
            Value::String(s) => match parse_angle(s) {
                Some(x) => Some(x),
                None => {
                    self.schema(field, format!("cannot read '{s}' as a number"));
                    None
                }
            },
            other => {
                self.schema(field, format!("expected a number, found {}", other.type_str()));
                None
            }
        }
    }

    fn integer(&mut self, table: &Table, prefix: &str, key: &str) -> Option<i64> {
        match table.get(key) {
            None => None,
            Some(Value::Integer(i)) => Some(*i),
            Some(other) => {
                self.schema(join(prefix, key), format!("expected an integer, found {}", other.type_str()));
                None
            }
        }
    }

    fn table<'a>(&mut self, table: &'a Table, key: &str) -> Option<&'a Table> {
        match table.get(key) {
            None => None,
            Some(Value::Table(t)) => Some(t),
            Some(other) => {
                self.schema(key, format!("expected a section, found {}", other.type_str()));
                None
            }
        }
    }

    fn positive(&mut self, field: &str, v: Option<f64>) -> Option<f64> {
        match v {
            Some(x) if x.is_finite() && x > 0.0 => Some(x),
            Some(x) => {
                self.range(field, format!("must be positive, got {x}"));
                None
            }
            None => None,
        }
    }
}

fn join(prefix: &str, key: &str) -> String {
    if prefix.is_empty() {
        key.to_string()
    } else {
        format!("{prefix}.{key}")
    }
}

/// Reads a number or a multiple of π: `1.5`, `pi`, `-pi/2`, `3pi/4`, `3*pi/4`.
pub fn parse_angle(text: &str) -> Option<f64> {
    let t: String = text.chars().filter(|c| !c.is_whitespace()).collect();
    if let Ok(v) = t.parse::<f64>() {
        return Some(v);
    }
    let (sign, body) = match t.strip_prefix('-') {
        Some(rest) => (-1.0, rest),
        None => (1.0, t.strip_prefix('+').unwrap_or(&t)),
    };
    let (num, den) = match body.split_once('/') {
        Some((a, b)) => (a, Some(b.parse::<f64>().ok()?)),
        None => (body, None),
    };
    let coeff_text = num.strip_suffix("pi")?;
    let coeff_text = coeff_text.strip_suffix('*').unwrap_or(coeff_text);
    let coeff = if coeff_text.is_empty() { 1.0 } else { coeff_text.parse::<f64>().ok()? };
    let value = sign * coeff * PI / den.unwrap_or(1.0);
    value.is_finite().then_some(value)
}

const TOP_KEYS: &[&str] = &[
    "experiment",
    "seed",
    "replicates",
    "n",
    "points",
    "bandwidth",
    "centering",
    "statistics",
    "output",
    "quadrature_resolution",
    "manifold",
    "density",
    "function",
    "regression",
    "hks",
];

/// Parses and validates a configuration, reporting every violation at once.
pub fn parse_config(text: &str) -> Result<ExperimentConfig, ConfigError> {
    parse_config_with_warnings(text).map(|(cfg, _)| cfg)
}

/// Like [`parse_config`], also returning warnings about silently filled defaults.
pub fn parse_config_with_warnings(text: &str) -> Result<(ExperimentConfig, Vec<String>), ConfigError> {
    let table: Table = match text.parse::<Table>() {
        Ok(t) => t,
        Err(e) => {
            return Err(ConfigError {
                violations: vec![Violation { kind: ViolationKind::Schema, field: "<document>".into(), message: e.to_string().trim().to_string() }],
            })
        }
    };
    let mut c = Checker { violations: Vec::new(), warnings: Vec::new() };
    c.unknown_keys(&table, "", TOP_KEYS);

    let experiment = match c.string(&table, "", "experiment") {
        Some(s) => match ExperimentKind::parse(s) {
            Some(k) => Some(k),
            None => {
                c.schema("experiment", format!("unknown experiment '{s}'"));
                None
            }
        },
        None => {
            if !table.contains_key("experiment") {
                c.schema("experiment", "missing required key");
            }
            None
        }
    };

    let seed = match c.integer(&table, "", "seed") {
        Some(s) if s >= 0 => s as u64,
        Some(s) => {
            c.range("seed", format!("must be non-negative, got {s}"));
            0
        }
        None => 0,
    };

    let replicates = match c.integer(&table, "", "replicates") {
        Some(b) if b >= 1 => b as usize,
        Some(b) => {
            c.range("replicates", format!("must be at least 1, got {b}"));
            DEFAULT_REPLICATES
        }
        None => DEFAULT_REPLICATES,
    };
    if let Some(k) = experiment {
        if k.is_distributional() && replicates < 30 {
            c.range("replicates", format!("distributional experiments need at least 30 replicates, got {replicates}"));
        }
    }

    let mut n = Vec::new();
    match table.get("n") {
        None => c.schema("n", "missing required key"),
        Some(Value::Array(items)) => {
            if items.is_empty() {
                c.range("n", "needs at least one sample size");
            }
            for (i, item) in items.iter().enumerate() {
                match item {
                    Value::Integer(v) if *v >= 2 => n.push(*v as usize),
                    Value::Integer(v) => c.range(format!("n[{i}]"), format!("sample size must be at least 2, got {v}")),
                    other => c.schema(format!("n[{i}]"), format!("expected an integer, found {}", other.type_str())),
                }
            }
        }
        Some(other) => c.schema("n", format!("expected an array of integers, found {}", other.type_str())),
    }

    let manifold = parse_manifold(&mut c, &table);
    let dim = manifold.map(|m| m.intrinsic_dim());

    let mut points = Vec::new();
    match table.get("points") {
        None => c.schema("points", "missing required key"),
        Some(Value::Array(items)) => {
            if items.is_empty() {
                c.range("points", "needs at least one evaluation point");
            }
            for (i, item) in items.iter().enumerate() {
                let field = format!("points[{i}]");
                match item {
                    Value::Array(coords) => {
                        let parsed: Vec<Option<f64>> =
                            coords.iter().enumerate().map(|(k, v)| c.as_float(v, &format!("{field}[{k}]"))).collect();
                        if let Some(d) = dim {
                            if coords.len() != d {
                                c.range(&field, format!("needs {d} chart angle(s), got {}", coords.len()));
                            }
                        }
                        if parsed.iter().all(Option::is_some) {
                            points.push(parsed.into_iter().map(Option::unwrap).collect());
                        }
                    }
                    other => c.schema(&field, format!("expected an array of chart angles, found {}", other.type_str())),
                }
            }
        }
        Some(other) => c.schema("points", format!("expected an array, found {}", other.type_str())),
    }

    let bandwidth = match c.string(&table, "", "bandwidth") {
        None => BandwidthRule::Default,
        Some("rule") => BandwidthRule::Default,
        Some(s) => {
            let parsed = if let Some(a) = s.strip_prefix("power:") {
                a.trim().parse::<f64>().ok().map(BandwidthRule::Power)
            } else if let Some(e) = s.strip_prefix("fixed:") {
                e.trim().parse::<f64>().ok().map(BandwidthRule::Fixed)
            } else {
                None
            };
            match parsed {
                Some(BandwidthRule::Power(a)) if !(a < 0.0 && a.is_finite()) => {
                    c.range("bandwidth", format!("power exponent must be negative, got {a}"));
                    BandwidthRule::Default
                }
                Some(BandwidthRule::Fixed(e)) if !(e > 0.0 && e.is_finite()) => {
                    c.range("bandwidth", format!("fixed bandwidth must be positive, got {e}"));
                    BandwidthRule::Default
                }
                Some(rule) => rule,
                None => {
                    c.schema("bandwidth", format!("expected 'rule', 'power:<a>' or 'fixed:<eps>', got '{s}'"));
                    BandwidthRule::Default
                }
            }
        }
    };

    let centering = match c.string(&table, "", "centering") {
        None | Some("population") => Centering::Population,
        Some("truth") => Centering::Truth,
        Some(s) => {
            c.schema("centering", format!("expected 'population' or 'truth', got '{s}'"));
            Centering::Population
        }
    };

    let statistics = match table.get("statistics") {
        None => experiment.map(|k| k.default_statistics()).unwrap_or_default(),
        Some(Value::Array(items)) => {
            let mut out = Vec::new();
            for (i, item) in items.iter().enumerate() {
                match item.as_str().and_then(parse_statistic) {
                    Some(s) => out.push(s),
                    None => c.schema(format!("statistics[{i}]"), format!("unknown statistic {item}")),
                }
            }
            out
        }
        Some(other) => {
            c.schema("statistics", format!("expected an array of strings, found {}", other.type_str()));
            Vec::new()
        }
    };

    let output = c.string(&table, "", "output").map(str::to_string);
    let quadrature_resolution = match c.integer(&table, "", "quadrature_resolution") {
        Some(r) if r >= PopulationContext::MIN_RESOLUTION as i64 => Some(r as usize),
        Some(r) => {
            c.range("quadrature_resolution", format!("must be at least {}, got {r}", PopulationContext::MIN_RESOLUTION));
            None
        }
        None => None,
    };

    let density = parse_density(&mut c, &table, manifold);
    let function = parse_function(&mut c, &table, experiment);
    let regression = parse_regression(&mut c, &table, experiment);
    let hks = parse_hks(&mut c, &table, experiment);

    if let (Some(k), Some(m)) = (experiment, manifold) {
        match k {
            ExperimentKind::BerryCircle if !matches!(m, Manifold::Circle { .. }) => {
                c.range("manifold.kind", "berry_circle runs on the circle")
            }
            ExperimentKind::BerryTorus if !matches!(m, Manifold::Torus { .. }) => c.range("manifold.kind", "berry_torus runs on the torus"),
            _ => {}
        }
        if k != ExperimentKind::Hks && statistics.is_empty() {
            c.range("statistics", "needs at least one statistic");
        }
        if k != ExperimentKind::Regression && statistics.contains(&StatisticKind::Regression) {
            c.range("statistics", "the regression statistic needs the regression experiment");
        }
        if k == ExperimentKind::Regression && statistics.iter().any(|s| *s != StatisticKind::Regression) {
            c.range("statistics", "the regression experiment only supports the regression statistic");
        }
    }
    if let (Some(m), Some(f)) = (manifold, function) {
        if let Some(dim) = f.ambient_dim() {
            if dim != m.ambient_dim() {
                c.range("function.id", format!("function lives in R^{dim} but the manifold is in R^{}", m.ambient_dim()));
            }
        }
    }

    if !c.violations.is_empty() {
        return Err(ConfigError { violations: c.violations });
    }
    let cfg = ExperimentConfig {
        experiment: experiment.unwrap(),
        seed,
        replicates,
        n,
        points,
        bandwidth,
        centering,
        statistics,
        manifold: manifold.unwrap(),
        density: density.unwrap(),
        function: function.unwrap_or(TestFunction::Constant { value: 1.0 }),
        regression,
        hks,
        quadrature_resolution,
        output,
    };
    Ok((cfg, c.warnings))
}

fn parse_statistic(s: &str) -> Option<StatisticKind> {
    Some(match s {
        "unnormalized" => StatisticKind::Unnormalized,
        "normalized" => StatisticKind::Normalized,
        "critical" => StatisticKind::CriticalNormalized,
        "laplacian" => StatisticKind::Laplacian,
        "regression" => StatisticKind::Regression,
        _ => return None,
    })
}

fn parse_manifold(c: &mut Checker, table: &Table) -> Option<Manifold> {
    let Some(t) = c.table(table, "manifold") else {
        if !table.contains_key("manifold") {
            c.schema("manifold", "missing required section");
        }
        return None;
    };
    match c.string(t, "manifold", "kind") {
        Some("circle") => {
            c.unknown_keys(t, "manifold", &["kind", "radius"]);
            let radius = c.float(t, "manifold", "radius");
            if radius.is_none() && !t.contains_key("radius") {
                c.schema("manifold.radius", "missing required key");
            }
            c.positive("manifold.radius", radius).map(|radius| Manifold::Circle { radius })
        }
        Some("torus") => {
            c.unknown_keys(t, "manifold", &["kind", "major", "minor"]);
            for key in ["major", "minor"] {
                if !t.contains_key(key) {
                    c.schema(format!("manifold.{key}"), "missing required key");
                }
            }
            let major = c.float(t, "manifold", "major");
            let minor = c.float(t, "manifold", "minor");
            let major = c.positive("manifold.major", major);
            let minor = c.positive("manifold.minor", minor);
            match (major, minor) {
                (Some(a), Some(b)) if a > b => Some(Manifold::Torus { major: a, minor: b }),
                (Some(a), Some(b)) => {
                    c.range("manifold.minor", format!("needs major > minor, got {a} and {b}"));
                    None
                }
                _ => None,
            }
        }
        Some(other) => {
            c.schema("manifold.kind", format!("unknown manifold '{other}'"));
            None
        }
        None => {
            if !t.contains_key("kind") {
                c.schema("manifold.kind", "missing required key");
            }
            None
        }
    }
}

fn parse_density(c: &mut Checker, table: &Table, manifold: Option<Manifold>) -> Option<DensitySpec> {
    let Some(t) = c.table(table, "density") else {
        return Some(DensitySpec::Uniform);
    };
    match c.string(t, "density", "kind") {
        None | Some("uniform") => {
            c.unknown_keys(t, "density", &["kind"]);
            Some(DensitySpec::Uniform)
        }
        Some("vonmises_sine") => {
            c.unknown_keys(t, "density", &["kind", "mu1", "mu2", "kappa1", "kappa2", "kappa3"]);
            if let Some(m) = manifold {
                if !matches!(m, Manifold::Torus { .. }) {
                    c.range("density.kind", "the von Mises sine model needs the torus");
                }
            }
            if !t.contains_key("kappa3") {
                c.warnings.push("density.kappa3 not set; using 0 (no interaction term)".into());
            }
            let get = |c: &mut Checker, key: &str| c.float(t, "density", key).unwrap_or(0.0);
            let spec = DensitySpec::VonMisesSine {
                mu1: get(c, "mu1"),
                mu2: get(c, "mu2"),
                kappa1: get(c, "kappa1"),
                kappa2: get(c, "kappa2"),
                kappa3: get(c, "kappa3"),
            };
            Some(spec)
        }
        Some(other) => {
            c.schema("density.kind", format!("unknown density '{other}'"));
            None
        }
    }
}

fn parse_function(c: &mut Checker, table: &Table, experiment: Option<ExperimentKind>) -> Option<TestFunction> {
    let Some(t) = c.table(table, "function") else {
        if !table.contains_key("function") && experiment != Some(ExperimentKind::Hks) {
            c.schema("function", "missing required section");
        }
        return None;
    };
    match c.string(t, "function", "id") {
        Some("constant") => {
            c.unknown_keys(t, "function", &["id", "value"]);
            Some(TestFunction::Constant { value: c.float(t, "function", "value").unwrap_or(1.0) })
        }
        Some("circle_example") => {
            c.unknown_keys(t, "function", &["id"]);
            Some(TestFunction::CircleExample)
        }
        Some("torus_example") => {
            c.unknown_keys(t, "function", &["id"]);
            Some(TestFunction::TorusExample)
        }
        Some("cos_theta") => {
            c.unknown_keys(t, "function", &["id", "radius"]);
            let r = c.float(t, "function", "radius").unwrap_or(1.0);
            c.positive("function.radius", Some(r)).map(|radius| TestFunction::CosTheta { radius })
        }
        Some(other) => {
            c.schema("function.id", format!("unknown function '{other}'"));
            None
        }
        None => {
            if !t.contains_key("id") {
                c.schema("function.id", "missing required key");
            }
            None
        }
    }
}

fn parse_regression(c: &mut Checker, table: &Table, experiment: Option<ExperimentKind>) -> Option<RegressionSettings> {
    let Some(t) = c.table(table, "regression") else {
        if experiment == Some(ExperimentKind::Regression) && !table.contains_key("regression") {
            c.schema("regression", "missing required section for the regression experiment");
        }
        return None;
    };
    c.unknown_keys(t, "regression", &["noise_sd", "clip"]);
    let noise_sd = c.float(t, "regression", "noise_sd").unwrap_or(0.1);
    if !(noise_sd.is_finite() && noise_sd >= 0.0) {
        c.range("regression.noise_sd", format!("must be non-negative, got {noise_sd}"));
    }
    let clip = c.float(t, "regression", "clip").unwrap_or(10.0);
    c.positive("regression.clip", Some(clip));
    Some(RegressionSettings { noise_sd, clip })
}

fn parse_hks(c: &mut Checker, table: &Table, experiment: Option<ExperimentKind>) -> Option<HksSettings> {
    let Some(t) = c.table(table, "hks") else {
        if experiment == Some(ExperimentKind::Hks) && !table.contains_key("hks") {
            c.schema("hks", "missing required section for the hks experiment");
        }
        return None;
    };
    c.unknown_keys(t, "hks", &["eta", "eigenpairs", "taus", "extension_eps"]);
    let eta = c.float(t, "hks", "eta").unwrap_or(0.1);
    c.positive("hks.eta", Some(eta));
    let eigenpairs = match c.integer(t, "hks", "eigenpairs") {
        Some(k) if k >= 1 => k as usize,
        Some(k) => {
            c.range("hks.eigenpairs", format!("must be at least 1, got {k}"));
            1
        }
        None => 20,
    };
    let mut taus = Vec::new();
    match t.get("taus") {
        None => taus.push(1.0),
        Some(Value::Array(items)) => {
            for (i, item) in items.iter().enumerate() {
                let field = format!("hks.taus[{i}]");
                if let Some(v) = c.as_float(item, &field) {
                    if v > 0.0 && v.is_finite() {
                        taus.push(v);
                    } else {
                        c.range(field, format!("must be positive, got {v}"));
                    }
                }
            }
            if items.is_empty() {
                c.range("hks.taus", "needs at least one diffusion time");
            }
        }
        Some(other) => c.schema("hks.taus", format!("expected an array, found {}", other.type_str())),
    }
    let extension_eps = c.float(t, "hks", "extension_eps").unwrap_or(eta);
    c.positive("hks.extension_eps", Some(extension_eps));
    Some(HksSettings { eta, eigenpairs, taus, extension_eps })
}

fn float_value(v: f64) -> Value {
    Value::Float(v)
}

impl ExperimentConfig {
    pub fn intrinsic_dim(&self) -> usize {
        self.manifold.intrinsic_dim()
    }

    /// Canonical TOML text; parsing it yields an equal configuration.
    pub fn to_toml_string(&self) -> String {
        let mut t = Table::new();
        t.insert("experiment".into(), Value::String(self.experiment.name().into()));
        t.insert("seed".into(), Value::Integer(self.seed as i64));
        t.insert("replicates".into(), Value::Integer(self.replicates as i64));
        t.insert("n".into(), Value::Array(self.n.iter().map(|&v| Value::Integer(v as i64)).collect()));
        t.insert(
            "points".into(),
            Value::Array(self.points.iter().map(|p| Value::Array(p.iter().map(|&v| float_value(v)).collect())).collect()),
        );
        t.insert("bandwidth".into(), Value::String(self.bandwidth.render()));
        t.insert(
            "centering".into(),
            Value::String(match self.centering {
                Centering::Population => "population".into(),
                Centering::Truth => "truth".into(),
            }),
        );
        t.insert(
            "statistics".into(),
            Value::Array(self.statistics.iter().map(|s| Value::String(s.name().into())).collect()),
        );
        if let Some(o) = &self.output {
            t.insert("output".into(), Value::String(o.clone()));
        }
        if let Some(r) = self.quadrature_resolution {
            t.insert("quadrature_resolution".into(), Value::Integer(r as i64));
        }
        let mut m = Table::new();
        match self.manifold {
            Manifold::Circle { radius } => {
                m.insert("kind".into(), Value::String("circle".into()));
                m.insert("radius".into(), float_value(radius));
            }
            Manifold::Torus { major, minor } => {
                m.insert("kind".into(), Value::String("torus".into()));
                m.insert("major".into(), float_value(major));
                m.insert("minor".into(), float_value(minor));
            }
        }
        t.insert("manifold".into(), Value::Table(m));
        let mut d = Table::new();
        match self.density {
            DensitySpec::Uniform => {
                d.insert("kind".into(), Value::String("uniform".into()));
            }
            DensitySpec::VonMisesSine { mu1, mu2, kappa1, kappa2, kappa3 } => {
                d.insert("kind".into(), Value::String("vonmises_sine".into()));
                for (k, v) in [("mu1", mu1), ("mu2", mu2), ("kappa1", kappa1), ("kappa2", kappa2), ("kappa3", kappa3)] {
                    d.insert(k.into(), float_value(v));
                }
            }
        }
        t.insert("density".into(), Value::Table(d));
        let mut f = Table::new();
        match self.function {
            TestFunction::Constant { value } => {
                f.insert("id".into(), Value::String("constant".into()));
                f.insert("value".into(), float_value(value));
            }
            TestFunction::CircleExample => {
                f.insert("id".into(), Value::String("circle_example".into()));
            }
            TestFunction::TorusExample => {
                f.insert("id".into(), Value::String("torus_example".into()));
            }
            TestFunction::CosTheta { radius } => {
                f.insert("id".into(), Value::String("cos_theta".into()));
                f.insert("radius".into(), float_value(radius));
            }
        }
        t.insert("function".into(), Value::Table(f));
        if let Some(r) = self.regression {
            let mut s = Table::new();
            s.insert("noise_sd".into(), float_value(r.noise_sd));
            s.insert("clip".into(), float_value(r.clip));
            t.insert("regression".into(), Value::Table(s));
        }
        if let Some(h) = &self.hks {
            let mut s = Table::new();
            s.insert("eta".into(), float_value(h.eta));
            s.insert("eigenpairs".into(), Value::Integer(h.eigenpairs as i64));
            s.insert("taus".into(), Value::Array(h.taus.iter().map(|&v| float_value(v)).collect()));
            s.insert("extension_eps".into(), float_value(h.extension_eps));
            t.insert("hks".into(), Value::Table(s));
        }
        toml::to_string(&t).expect("configuration tables always serialize")
    }

    /// SHA-256 of the canonical text, as lowercase hex.
    pub fn hash(&self) -> String {
        let digest = Sha256::digest(self.to_toml_string().as_bytes());
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }
}
