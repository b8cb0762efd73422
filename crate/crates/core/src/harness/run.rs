//! Running configured experiments over seeds and stepsize grids.

use std::fs;
use std::path::PathBuf;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::config::{ExperimentConfig, Method};
use super::output::{emit_csv, median, summarize_gaps, write_jsonl, MetricsRow, RunRecord, Summary};
use crate::algorithms::{run_marina_pp, run_momentum_heuristic, run_reference_gd, Trajectory, World};
use crate::error::{Error, Result};
use crate::problem::{reference_solution, ReferenceSolution};

/// Overrides `run.output` when set.
pub const OUTPUT_DIR_ENV: &str = "BYZPP_OUTPUT_DIR";

/// Stepsizes tried by the sweep.
pub const GAMMA_GRID: [f64; 3] = [0.1, 0.01, 0.001];
/// Clipping multipliers tried by the sweep.
pub const ALPHA_GRID: [f64; 3] = [0.1, 1.0, 10.0];

/// The federation with `f*` attached; reusable across method variants.
#[derive(Debug, Clone)]
pub struct Prepared {
    pub world: World,
    pub reference: ReferenceSolution,
}

/// Builds the world and solves for `f*` once.
pub fn prepare(cfg: &ExperimentConfig) -> Result<Prepared> {
    let world = cfg.world()?;
    let reference = reference_solution(world.objective().as_ref(), cfg.run.reference_tol)?;
    Ok(Prepared {
        world: world.with_f_star(reference.f_star),
        reference,
    })
}

#[derive(Debug, Clone)]
pub struct SeedRun {
    pub seed: u64,
    pub trajectory: Trajectory,
}

#[derive(Debug, Clone)]
pub struct ExperimentResult {
    pub config_hash: String,
    pub method: Method,
    pub f_star: f64,
    pub runs: Vec<SeedRun>,
}

impl ExperimentResult {
    /// All rounds of all seeds, seed-major.
    pub fn rows(&self) -> Vec<MetricsRow> {
        self.runs
            .iter()
            .flat_map(|r| {
                r.trajectory
                    .rounds
                    .iter()
                    .map(move |&metrics| MetricsRow { seed: r.seed, metrics })
            })
            .collect()
    }

    pub fn final_gaps(&self) -> Vec<f64> {
        self.runs.iter().map(|r| r.trajectory.final_gap()).collect()
    }

    pub fn summary(&self) -> Summary {
        summarize_gaps(&self.final_gaps()).expect("at least one seed")
    }

    pub fn records(&self) -> Vec<RunRecord> {
        self.runs
            .iter()
            .map(|r| RunRecord {
                config_hash: self.config_hash.clone(),
                method: self.method.name().into(),
                seed: r.seed,
                initial_gap: r.trajectory.initial_gap,
                final_gap: r.trajectory.final_gap(),
                rounds: r.trajectory.rounds.len(),
                epochs: r.trajectory.rounds.last().map_or(0.0, |m| m.epochs),
                f_star: Some(self.f_star),
            })
            .collect()
    }
}

/// Runs one seed of the configured method.
pub fn run_seed(cfg: &ExperimentConfig, prepared: &Prepared, seed: u64) -> Result<Trajectory> {
    let world = &prepared.world;
    match cfg.algorithm.method {
        Method::MarinaPp => run_marina_pp(&cfg.marina_config(world)?, world, seed),
        Method::MomentumHeuristic => run_momentum_heuristic(&cfg.momentum_config(world)?, world, seed),
        Method::ReferenceGd => run_reference_gd(
            world,
            cfg.algorithm.gamma,
            cfg.reference_rounds(world),
            cfg.run.record_time,
        ),
    }
}

/// Runs every seed on an already prepared world. Seeds run in parallel.
pub fn run_prepared(cfg: &ExperimentConfig, prepared: &Prepared) -> Result<ExperimentResult> {
    // fail on configuration problems before any compute
    match cfg.algorithm.method {
        Method::MarinaPp => cfg.marina_config(&prepared.world).map(drop)?,
        Method::MomentumHeuristic => cfg.momentum_config(&prepared.world).map(drop)?,
        Method::ReferenceGd => {}
    }
    let runs = cfg
        .run
        .seeds
        .par_iter()
        .map(|&seed| {
            run_seed(cfg, prepared, seed).map(|trajectory| SeedRun { seed, trajectory })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(ExperimentResult {
        config_hash: cfg.hash()?,
        method: cfg.algorithm.method,
        f_star: prepared.reference.f_star,
        runs,
    })
}

/// Validates, prepares and runs a config; writes outputs when an output directory is configured.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<ExperimentResult> {
    cfg.validate()?;
    let prepared = prepare(cfg)?;
    let result = run_prepared(cfg, &prepared)?;
    if let Some(dir) = output_dir(cfg) {
        write_outputs(&result, &dir)?;
    }
    Ok(result)
}

/// `$BYZPP_OUTPUT_DIR` if set, else `run.output`.
pub fn output_dir(cfg: &ExperimentConfig) -> Option<PathBuf> {
    match std::env::var_os(OUTPUT_DIR_ENV) {
        Some(v) if !v.is_empty() => Some(PathBuf::from(v)),
        _ => cfg.run.output.clone(),
    }
}

/// Writes `metrics.csv` and appends to `summary.jsonl` in `dir`.
pub fn write_outputs(result: &ExperimentResult, dir: &std::path::Path) -> Result<()> {
    fs::create_dir_all(dir)?;
    emit_csv(&result.rows(), &dir.join("metrics.csv"))?;
    let file = fs::OpenOptions::new()
        .create(true)
        .append(true)
        .open(dir.join("summary.jsonl"))?;
    write_jsonl(&result.records(), std::io::BufWriter::new(file))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepEntry {
    pub gamma: f64,
    pub alpha: f64,
    /// `None` when the run failed, e.g. diverged to non-finite values.
    pub summary: Option<Summary>,
    pub error: Option<String>,
}

impl SweepEntry {
    /// Median final gap, infinite for failed runs.
    pub fn score(&self) -> f64 {
        self.summary.map_or(f64::INFINITY, |s| s.median_final_gap)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepReport {
    pub entries: Vec<SweepEntry>,
    /// Index of the entry with the lowest median final gap.
    pub best: usize,
}

impl SweepReport {
    pub fn best_entry(&self) -> &SweepEntry {
        &self.entries[self.best]
    }
}

/// Runs every `(gamma, alpha)` combination on one prepared world and picks the
/// lowest median final gap. Methods without clipping only sweep `gamma`.
pub fn sweep(cfg: &ExperimentConfig, prepared: &Prepared, gammas: &[f64], alphas: &[f64]) -> Result<SweepReport> {
    if gammas.is_empty() {
        return Err(Error::InvalidConfig("empty stepsize grid".into()));
    }
    let alphas: Vec<f64> = if cfg.algorithm.method == Method::ReferenceGd || alphas.is_empty() {
        vec![cfg.algorithm.alpha]
    } else {
        alphas.to_vec()
    };
    let combos: Vec<(f64, f64)> = gammas
        .iter()
        .flat_map(|&g| alphas.iter().map(move |&a| (g, a)))
        .collect();
    let entries: Vec<SweepEntry> = combos
        .par_iter()
        .map(|&(gamma, alpha)| {
            let mut c = cfg.clone();
            c.algorithm.gamma = gamma;
            c.algorithm.alpha = alpha;
            match run_prepared(&c, prepared) {
                Ok(r) => Ok(SweepEntry {
                    gamma,
                    alpha,
                    summary: Some(r.summary()),
                    error: None,
                }),
                Err(e @ (Error::NonFinite { .. } | Error::NonConvergence { .. })) => Ok(SweepEntry {
                    gamma,
                    alpha,
                    summary: None,
                    error: Some(e.to_string()),
                }),
                Err(e) => Err(e),
            }
        })
        .collect::<Result<_>>()?;
    let best = (0..entries.len())
        .min_by(|&a, &b| entries[a].score().total_cmp(&entries[b].score()))
        .expect("nonempty grid");
    Ok(SweepReport { entries, best })
}

/// Median of the final gaps of a result.
pub fn median_final_gap(result: &ExperimentResult) -> f64 {
    median(&result.final_gaps())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harness::output::{parse_csv, summarize, write_csv};

    const QUAD: &str = r#"
[problem]
kind = "quadratic"
diag = [1.0, 2.0, 4.0]
linear = [1.0, -1.0, 0.5]
start = [3.0, 3.0, 3.0]
[federation]
n = 6
[algorithm]
method = "reference_gd"
gamma = 0.25
rounds = 300
[run]
seeds = [0]
"#;

    const LOGISTIC: &str = r#"
[problem]
kind = "logistic"
data = { source = "synthetic", samples = 60, dim = 4 }
[federation]
n = 8
byzantine = 2
delta = 0.25
attack = { kind = "shift_back" }
[algorithm]
method = "marina_pp"
gamma = 0.1
alpha = 1.0
cohort = 4
rounds = 60
minibatch = 8
aggregator = { rule = "coordinate_median", bucket_size = 2 }
"#;

    #[test]
    fn reference_gd_on_a_quadratic_reaches_machine_precision() {
        let cfg = ExperimentConfig::from_toml_str(QUAD, &[]).unwrap();
        let r = run_experiment(&cfg).unwrap();
        assert!(r.runs[0].trajectory.final_gap() <= 1e-12);
    }

    #[test]
    fn reruns_are_bitwise_identical() {
        let cfg = ExperimentConfig::from_toml_str(LOGISTIC, &[]).unwrap();
        let csv = |r: &ExperimentResult| {
            let mut buf = Vec::new();
            write_csv(&r.rows(), &mut buf).unwrap();
            buf
        };
        let a = run_experiment(&cfg).unwrap();
        let b = run_experiment(&cfg).unwrap();
        assert_eq!(csv(&a), csv(&b));
        assert_eq!(a.rows().len(), 3 * 60);
        // and the summary can be recomputed from the file
        let back = parse_csv(csv(&a).as_slice()).unwrap();
        let s = summarize(&back).unwrap();
        let t = a.summary();
        assert!((s.mean_final_gap - t.mean_final_gap).abs() <= 1e-12);
        assert!((s.stderr_final_gap - t.stderr_final_gap).abs() <= 1e-12);
    }

    #[test]
    fn methods_share_one_reference() {
        let cfg = ExperimentConfig::from_toml_str(LOGISTIC, &[]).unwrap();
        let prepared = prepare(&cfg).unwrap();
        let mut m = cfg.clone();
        m.algorithm.method = Method::MomentumHeuristic;
        let a = run_prepared(&cfg, &prepared).unwrap();
        let b = run_prepared(&m, &prepared).unwrap();
        assert_eq!(a.f_star, b.f_star);
        assert_eq!(b.method, Method::MomentumHeuristic);
    }

    #[test]
    fn no_clip_activations_when_disabled() {
        let cfg = ExperimentConfig::from_toml_str(LOGISTIC, &["algorithm.alpha=inf".into()]).unwrap();
        let r = run_experiment(&cfg).unwrap();
        assert!(r.rows().iter().all(|row| row.metrics.clip_activations == 0));
    }

    #[test]
    fn sweep_picks_lowest_median() {
        let cfg = ExperimentConfig::from_toml_str(QUAD, &["algorithm.rounds=20".into()]).unwrap();
        let prepared = prepare(&cfg).unwrap();
        let report = sweep(&cfg, &prepared, &[0.01, 0.2, 0.1], &ALPHA_GRID).unwrap();
        // reference GD has no clipping, so only the stepsizes are swept
        assert_eq!(report.entries.len(), 3);
        assert_eq!(report.best_entry().gamma, 0.2);
    }

    #[test]
    fn sweep_records_divergence() {
        let cfg = ExperimentConfig::from_toml_str(QUAD, &["algorithm.rounds=3000".into()]).unwrap();
        let prepared = prepare(&cfg).unwrap();
        let report = sweep(&cfg, &prepared, &[10.0, 0.1], &[]).unwrap();
        assert!(report.entries[0].summary.is_none());
        assert_eq!(report.best, 1);
    }

    #[test]
    fn writes_outputs() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = ExperimentConfig::from_toml_str(LOGISTIC, &["algorithm.rounds=5".into()]).unwrap();
        let r = run_prepared(&cfg, &prepare(&cfg).unwrap()).unwrap();
        write_outputs(&r, dir.path()).unwrap();
        write_outputs(&r, dir.path()).unwrap();
        let jsonl = fs::read_to_string(dir.path().join("summary.jsonl")).unwrap();
        assert_eq!(jsonl.lines().count(), 6);
        let csv = fs::read_to_string(dir.path().join("metrics.csv")).unwrap();
        assert_eq!(csv.lines().count(), 16);
    }
}
