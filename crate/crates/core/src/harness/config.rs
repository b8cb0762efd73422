//! Experiment configuration files.
//!
//! A config is a TOML document with four tables: `[problem]`, `[federation]`,
//! `[algorithm]` and `[run]`. Any key can be overridden from the command line
//! with a dotted path, e.g. `algorithm.gamma=0.01`.

use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::aggregation::{AggregatorSpec, Rule};
use crate::algorithms::{MarinaPpConfig, MomentumHeuristicConfig, World, DEFAULT_BETA};
use crate::attacks::AttackKind;
use crate::compression::{CompressorKind, CompressorSpec};
use crate::error::{Error, Result};
use crate::numerics::RealVector;
use crate::problem::{
    parse_libsvm, split_clients, synthetic_logistic, Dataset, FiniteSumObjective, QuadraticObjective, SplitMode,
    SyntheticSpec,
};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub problem: ProblemConfig,
    pub federation: FederationConfig,
    pub algorithm: AlgorithmConfig,
    #[serde(default)]
    pub run: RunConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ProblemConfig {
    /// L2-regularised logistic regression, shared or sharded across clients.
    Logistic {
        #[serde(default = "default_eta")]
        eta: f64,
        data: DataConfig,
        #[serde(default = "default_split")]
        split: SplitMode,
    },
    /// `1/2 x^T diag(d) x - b^T x`, held by every client.
    Quadratic {
        diag: Vec<f64>,
        linear: Vec<f64>,
        #[serde(default)]
        start: Option<Vec<f64>>,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "source", rename_all = "snake_case", deny_unknown_fields)]
pub enum DataConfig {
    Synthetic {
        #[serde(default = "default_samples")]
        samples: usize,
        #[serde(default = "default_dim")]
        dim: usize,
        #[serde(default = "default_data_seed")]
        seed: u64,
        #[serde(default = "default_sharpness")]
        sharpness: f64,
    },
    /// A LIBSVM text file. Relative paths are resolved against the config file.
    Libsvm { path: PathBuf },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FederationConfig {
    pub n: usize,
    #[serde(default)]
    pub byzantine: usize,
    /// Defaults to `byzantine / n`.
    #[serde(default)]
    pub delta: Option<f64>,
    #[serde(default)]
    pub attack: Option<AttackKind>,
    /// Seeds the choice of Byzantine ids; fixed across run seeds so `f*` is shared.
    #[serde(default)]
    pub setup_seed: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    MarinaPp,
    MomentumHeuristic,
    ReferenceGd,
}

impl Method {
    pub fn name(self) -> &'static str {
        match self {
            Method::MarinaPp => "marina_pp",
            Method::MomentumHeuristic => "momentum_heuristic",
            Method::ReferenceGd => "reference_gd",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AlgorithmConfig {
    pub method: Method,
    pub gamma: f64,
    /// Clipping multiplier; `inf` disables clipping.
    #[serde(default = "default_alpha")]
    pub alpha: f64,
    /// `C`; defaults to `n`.
    #[serde(default)]
    pub cohort: Option<usize>,
    /// `Ĉ`; defaults to `n`.
    #[serde(default)]
    pub refresh_cohort: Option<usize>,
    /// Defaults to `min{C/n, b/m, zeta_Q/d}` with `m` the smallest shard.
    #[serde(default)]
    pub p: Option<f64>,
    #[serde(default = "default_minibatch")]
    pub minibatch: usize,
    /// Send exact local gradient differences instead of minibatch ones.
    #[serde(default)]
    pub exact_differences: bool,
    pub rounds: u64,
    #[serde(default)]
    pub max_epochs: Option<f64>,
    #[serde(default = "default_aggregator")]
    pub aggregator: AggregatorSpec,
    #[serde(default = "default_compressor")]
    pub compressor: CompressorKind,
    #[serde(default = "default_beta")]
    pub beta: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default = "default_seeds")]
    pub seeds: Vec<u64>,
    /// Directory for `metrics.csv` and `summary.jsonl`; nothing is written when unset.
    /// Relative paths are taken relative to the config file.
    #[serde(default)]
    pub output: Option<PathBuf>,
    #[serde(default)]
    pub record_time: bool,
    /// Gradient-norm tolerance of the reference solver.
    #[serde(default = "default_reference_tol")]
    pub reference_tol: f64,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seeds: default_seeds(),
            output: None,
            record_time: false,
            reference_tol: default_reference_tol(),
        }
    }
}

fn default_eta() -> f64 {
    0.01
}
fn default_split() -> SplitMode {
    SplitMode::Homogeneous
}
fn default_samples() -> usize {
    SyntheticSpec::default().samples
}
fn default_dim() -> usize {
    SyntheticSpec::default().dim
}
fn default_data_seed() -> u64 {
    SyntheticSpec::default().seed
}
fn default_sharpness() -> f64 {
    SyntheticSpec::default().sharpness
}
fn default_alpha() -> f64 {
    f64::INFINITY
}
fn default_minibatch() -> usize {
    32
}
fn default_aggregator() -> AggregatorSpec {
    AggregatorSpec::new(Rule::Mean)
}
fn default_compressor() -> CompressorKind {
    CompressorKind::Identity
}
fn default_beta() -> f64 {
    DEFAULT_BETA
}
fn default_seeds() -> Vec<u64> {
    vec![0, 1, 2]
}
fn default_reference_tol() -> f64 {
    1e-12
}

/// Parses a `key.path=value` override. The value is read as a TOML value and
/// falls back to a bare string.
pub fn parse_override(spec: &str) -> Result<(String, toml::Value)> {
    let (key, raw) = spec
        .split_once('=')
        .ok_or_else(|| Error::InvalidConfig(format!("override `{spec}` is not of the form key=value")))?;
    let key = key.trim();
    if key.is_empty() || key.split('.').any(str::is_empty) {
        return Err(Error::InvalidConfig(format!("bad override key `{key}`")));
    }
    let raw = raw.trim();
    let value = match toml::from_str::<toml::Table>(&format!("v = {raw}")) {
        Ok(mut t) => t.remove("v").expect("key present"),
        Err(_) => toml::Value::String(raw.to_string()),
    };
    Ok((key.to_string(), value))
}

fn apply_override(table: &mut toml::Table, key: &str, value: toml::Value) -> Result<()> {
    let mut parts: Vec<&str> = key.split('.').collect();
    let last = parts.pop().expect("nonempty key");
    let mut cur = table;
    for part in parts {
        let entry = cur
            .entry(part.to_string())
            .or_insert_with(|| toml::Value::Table(toml::Table::new()));
        cur = entry
            .as_table_mut()
            .ok_or_else(|| Error::InvalidConfig(format!("override `{key}`: `{part}` is not a table")))?;
    }
    cur.insert(last.to_string(), value);
    Ok(())
}

/// Every key given for the aggregator must survive a round trip through the parsed spec.
fn check_aggregator_keys(given: &toml::Table, parsed: &AggregatorSpec) -> Result<()> {
    let known = toml::Table::try_from(parsed).map_err(|e| Error::Toml(e.to_string()))?;
    match given.keys().find(|k| !known.contains_key(*k)) {
        Some(k) => Err(Error::Toml(format!("unknown field `{k}` in `algorithm.aggregator`"))),
        None => Ok(()),
    }
}

impl ExperimentConfig {
    /// Parses a document and applies `key=value` overrides on top.
    pub fn from_toml_str(text: &str, overrides: &[String]) -> Result<Self> {
        let mut table: toml::Table = toml::from_str(text).map_err(|e| Error::Toml(e.to_string()))?;
        for spec in overrides {
            let (key, value) = parse_override(spec)?;
            apply_override(&mut table, &key, value)?;
        }
        let aggregator = table
            .get("algorithm")
            .and_then(|a| a.get("aggregator"))
            .and_then(toml::Value::as_table)
            .cloned();
        let cfg: Self = toml::Value::Table(table)
            .try_into()
            .map_err(|e: toml::de::Error| Error::Toml(e.to_string()))?;
        if let Some(given) = aggregator {
            check_aggregator_keys(&given, &cfg.algorithm.aggregator)?;
        }
        Ok(cfg)
    }

    /// Reads a file; relative data and output paths are taken relative to its directory.
    pub fn load(path: &Path, overrides: &[String]) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let mut cfg = Self::from_toml_str(&text, overrides)?;
        let base = path.parent().unwrap_or(Path::new("."));
        if let ProblemConfig::Logistic {
            data: DataConfig::Libsvm { path: data },
            ..
        } = &mut cfg.problem
        {
            if data.is_relative() {
                *data = base.join(&*data);
            }
        }
        if let Some(out) = &mut cfg.run.output {
            if out.is_relative() {
                *out = base.join(&*out);
            }
        }
        Ok(cfg)
    }

    pub fn to_toml_string(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Toml(e.to_string()))
    }

    /// Hex SHA-256 of the canonical TOML form.
    pub fn hash(&self) -> Result<String> {
        let digest = Sha256::digest(self.to_toml_string()?.as_bytes());
        Ok(digest.iter().map(|b| format!("{b:02x}")).collect())
    }

    /// Checks everything that can be checked without building the world.
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidConfig(m));
        if self.run.seeds.is_empty() {
            return bad("run.seeds must not be empty".into());
        }
        if !(self.run.reference_tol > 0.0) {
            return bad("run.reference_tol must be positive".into());
        }
        match &self.problem {
            ProblemConfig::Logistic { eta, data, .. } => {
                if !(*eta > 0.0) {
                    return bad(format!("eta must be positive, got {eta}"));
                }
                if let DataConfig::Libsvm { path } = data {
                    if !path.is_file() {
                        return bad(format!("data file {} does not exist", path.display()));
                    }
                }
            }
            ProblemConfig::Quadratic { diag, linear, start } => {
                if diag.len() != linear.len() || start.as_ref().is_some_and(|s| s.len() != diag.len()) {
                    return bad("quadratic diag, linear and start must have equal lengths".into());
                }
                if diag.iter().any(|&d| !(d > 0.0)) {
                    return bad("quadratic diagonal must be positive".into());
                }
            }
        }
        let f = &self.federation;
        if f.n == 0 || 2 * f.byzantine >= f.n {
            return bad(format!("need n >= 1 and 2B < n, got n = {}, B = {}", f.n, f.byzantine));
        }
        if f.byzantine > 0 && f.attack.is_none() {
            return bad("Byzantine clients need an attack".into());
        }
        let a = &self.algorithm;
        if a.max_epochs.is_none() && a.rounds == 0 && a.method != Method::ReferenceGd {
            // harmless, but almost certainly a typo
            return bad("algorithm.rounds is 0".into());
        }
        Ok(())
    }

    pub fn dataset(&self) -> Result<Option<Dataset>> {
        match &self.problem {
            ProblemConfig::Logistic { data, .. } => Ok(Some(match data {
                DataConfig::Synthetic {
                    samples,
                    dim,
                    seed,
                    sharpness,
                } => synthetic_logistic(&SyntheticSpec {
                    samples: *samples,
                    dim: *dim,
                    seed: *seed,
                    sharpness: *sharpness,
                })?,
                DataConfig::Libsvm { path } => parse_libsvm(&std::fs::read_to_string(path)?)?,
            })),
            ProblemConfig::Quadratic { .. } => Ok(None),
        }
    }

    /// Builds the federation (without `f*`).
    pub fn world(&self) -> Result<World> {
        self.validate()?;
        let f = &self.federation;
        let delta = f.delta.unwrap_or(f.byzantine as f64 / f.n as f64);
        match &self.problem {
            ProblemConfig::Logistic { eta, split, .. } => {
                let data = Arc::new(self.dataset()?.expect("logistic problem has data"));
                let assignment = split_clients(data, f.n, f.byzantine, *split, f.setup_seed)?;
                World::logistic(&assignment, *eta, f.attack, delta)
            }
            ProblemConfig::Quadratic { diag, linear, start } => {
                let q: Arc<dyn FiniteSumObjective> =
                    Arc::new(QuadraticObjective::diagonal(diag, RealVector::from(linear.clone()))?);
                // the last B clients are Byzantine; all clients are identical anyway
                let flags = (0..f.n).map(|i| i >= f.n - f.byzantine).collect();
                let world = World::new(vec![q; f.n], flags, f.attack, delta)?;
                match start {
                    Some(s) => world.with_start(RealVector::from(s.clone())),
                    None => Ok(world),
                }
            }
        }
    }

    /// Gate probability: the configured one, or `min{C/n, b/m, zeta_Q/d}`.
    pub fn gate_probability(&self, world: &World) -> Result<f64> {
        if let Some(p) = self.algorithm.p {
            return Ok(p);
        }
        let a = &self.algorithm;
        let cohort = a.cohort.unwrap_or(world.n());
        let compressor = CompressorSpec::new(a.compressor, world.dim())?;
        let mut p = (cohort as f64 / world.n() as f64).min(compressor.expected_density() / world.dim() as f64);
        if !a.exact_differences {
            let m = world.shard_sizes().into_iter().min().unwrap_or(1);
            p = p.min(a.minibatch as f64 / m as f64);
        }
        Ok(p.min(1.0))
    }

    pub fn marina_config(&self, world: &World) -> Result<MarinaPpConfig> {
        let a = &self.algorithm;
        let cfg = MarinaPpConfig {
            gamma: a.gamma,
            minibatch: (!a.exact_differences).then_some(a.minibatch),
            p: self.gate_probability(world)?,
            alpha: a.alpha,
            cohort: a.cohort.unwrap_or(world.n()),
            refresh_cohort: a.refresh_cohort.unwrap_or(world.n()),
            rounds: a.rounds,
            max_epochs: a.max_epochs,
            aggregator: a.aggregator,
            compressor: CompressorSpec::new(a.compressor, world.dim())?,
            record_time: self.run.record_time,
        };
        cfg.validate(world)?;
        Ok(cfg)
    }

    pub fn momentum_config(&self, world: &World) -> Result<MomentumHeuristicConfig> {
        let a = &self.algorithm;
        let cfg = MomentumHeuristicConfig {
            gamma: a.gamma,
            beta: a.beta,
            alpha: a.alpha,
            cohort: a.cohort.unwrap_or(world.n()),
            minibatch: a.minibatch,
            rounds: a.rounds,
            max_epochs: a.max_epochs,
            aggregator: a.aggregator,
            record_time: self.run.record_time,
        };
        cfg.validate(world)?;
        Ok(cfg)
    }

    /// Rounds of reference gradient descent, capped by the epoch budget.
    pub fn reference_rounds(&self, world: &World) -> u64 {
        let a = &self.algorithm;
        match a.max_epochs {
            Some(budget) => {
                let good: usize = (0..world.n())
                    .filter(|&i| !world.is_byzantine(i))
                    .map(|i| world.client(i).num_components())
                    .sum();
                let per_round = good as f64 / world.epoch_size() as f64;
                let needed = (budget / per_round).ceil() as u64;
                if a.rounds == 0 {
                    needed
                } else {
                    needed.min(a.rounds)
                }
            }
            None => a.rounds,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const FIG: &str = r#"
# homogeneous logistic regression
[problem]
kind = "logistic"
eta = 0.01
data = { source = "synthetic", samples = 200, dim = 5 }

[federation]
n = 20
byzantine = 5
delta = 0.25
attack = { kind = "shift_back" }

[algorithm]
method = "marina_pp"
gamma = 0.1
alpha = 1.0
cohort = 4
refresh_cohort = 20
rounds = 100
aggregator = { rule = "coordinate_median", bucket_size = 2 }
"#;

    #[test]
    fn parses_with_defaults() {
        let cfg = ExperimentConfig::from_toml_str(FIG, &[]).unwrap();
        assert_eq!(cfg.algorithm.minibatch, 32);
        assert_eq!(cfg.run.seeds, vec![0, 1, 2]);
        assert_eq!(cfg.algorithm.aggregator, AggregatorSpec::with_bucketing(Rule::CoordinateMedian, 2));
        let world = cfg.world().unwrap();
        assert_eq!(world.n(), 20);
        assert_eq!(world.num_good(), 15);
        // min{4/20, 32/200, 1}
        assert_eq!(cfg.gate_probability(&world).unwrap(), 0.16);
    }

    #[test]
    fn overrides_replace_and_create_keys() {
        let sets = [
            "algorithm.gamma=0.01".to_string(),
            "algorithm.alpha=inf".to_string(),
            "run.seeds=[7]".to_string(),
            "algorithm.aggregator.rule=mean".to_string(),
            "algorithm.aggregator.bucket_size=3".to_string(),
        ];
        let cfg = ExperimentConfig::from_toml_str(FIG, &sets).unwrap();
        assert_eq!(cfg.algorithm.gamma, 0.01);
        assert!(cfg.algorithm.alpha.is_infinite());
        assert_eq!(cfg.run.seeds, vec![7]);
        assert_eq!(cfg.algorithm.aggregator, AggregatorSpec::with_bucketing(Rule::Mean, 3));
        assert!(parse_override("nokey").is_err());
        assert!(parse_override("a..b=1").is_err());
        assert!(ExperimentConfig::from_toml_str(FIG, &["algorithm.gamma.x=1".into()]).is_err());
    }

    #[test]
    fn rejects_unknown_keys_and_bad_federations() {
        assert!(ExperimentConfig::from_toml_str(FIG, &["algorithm.gama=0.1".into()]).is_err());
        assert!(ExperimentConfig::from_toml_str(FIG, &["algorithm.aggregator.bucket=2".into()]).is_err());
        let cfg = ExperimentConfig::from_toml_str(FIG, &["federation.byzantine=10".into()]).unwrap();
        assert!(cfg.world().is_err());
        let cfg = ExperimentConfig::from_toml_str(FIG, &["problem.data.source=\"libsvm\"".into(), "problem.data.path=\"/nonexistent\"".into()]);
        // samples/dim are not libsvm keys
        assert!(cfg.is_err());
    }

    #[test]
    fn hash_is_stable_and_sensitive() {
        let a = ExperimentConfig::from_toml_str(FIG, &[]).unwrap();
        let b = ExperimentConfig::from_toml_str(FIG, &[]).unwrap();
        let c = ExperimentConfig::from_toml_str(FIG, &["algorithm.gamma=0.2".into()]).unwrap();
        assert_eq!(a.hash().unwrap(), b.hash().unwrap());
        assert_ne!(a.hash().unwrap(), c.hash().unwrap());
        assert_eq!(a.hash().unwrap().len(), 64);
        let again = ExperimentConfig::from_toml_str(&a.to_toml_string().unwrap(), &[]).unwrap();
        assert_eq!(again, a);
    }

    #[test]
    fn quadratic_world() {
        let text = r#"
[problem]
kind = "quadratic"
diag = [1.0, 4.0]
linear = [1.0, 1.0]
start = [2.0, 2.0]
[federation]
n = 5
[algorithm]
method = "reference_gd"
gamma = 0.25
rounds = 0
max_epochs = 10.0
"#;
        let cfg = ExperimentConfig::from_toml_str(text, &[]).unwrap();
        let world = cfg.world().unwrap();
        assert_eq!(world.x0(), &RealVector::from([2.0, 2.0]));
        assert_eq!(cfg.reference_rounds(&world), 10);
    }
}
