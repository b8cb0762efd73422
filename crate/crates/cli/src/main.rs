//! `byzpp`: run, sweep and verify simulations from the command line.

use std::path::PathBuf;
use std::process::ExitCode;

use byzpp_core::harness::{
    output_dir, prepare, run_prepared, sweep, verify_suite, write_outputs, ExperimentConfig, Suite, ALPHA_GRID,
    GAMMA_GRID,
};
use byzpp_core::problem::SmoothObjective;
use byzpp_core::sampling::{prob_good_majority, prob_in_good_sample, to_f64};
use byzpp_core::Error;
use clap::{Args, Parser, Subcommand};

#[derive(Parser)]
#[command(name = "byzpp", version, about = "Byzantine-robust partial-participation optimisation simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct ConfigArgs {
    /// Experiment config (TOML).
    config: PathBuf,
    /// Override a config key, e.g. `--set algorithm.gamma=0.01`. Repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
}

#[derive(Subcommand)]
enum Command {
    /// Run the configured method for every seed.
    Run {
        #[command(flatten)]
        cfg: ConfigArgs,
        /// Output directory; takes precedence over the config but not over BYZPP_OUTPUT_DIR.
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Grid search over stepsizes and clipping multipliers.
    Sweep {
        #[command(flatten)]
        cfg: ConfigArgs,
        #[arg(long, value_delimiter = ',', default_values_t = GAMMA_GRID.to_vec())]
        gammas: Vec<f64>,
        #[arg(long, value_delimiter = ',', default_values_t = ALPHA_GRID.to_vec())]
        alphas: Vec<f64>,
    },
    /// Monte-Carlo and enumeration checks.
    Verify {
        /// compressors, aggregators, clipping_lemma, probabilities or all.
        suite: String,
        #[arg(long, default_value_t = 10_000)]
        trials: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Exact cohort probabilities.
    Probs {
        #[arg(long)]
        n: usize,
        #[arg(long)]
        g: usize,
        #[arg(long)]
        c: usize,
        #[arg(long)]
        delta: f64,
    },
    /// Solve for the reference optimum of a config's objective.
    Solve {
        #[command(flatten)]
        cfg: ConfigArgs,
    },
}

/// Exit code for failed verification checks; errors use 2.
const VERIFY_FAILED: u8 = 1;

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(cli.command) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}

fn load(args: &ConfigArgs) -> Result<ExperimentConfig, Error> {
    let cfg = ExperimentConfig::load(&args.config, &args.overrides)?;
    cfg.validate()?;
    Ok(cfg)
}

fn execute(command: Command) -> Result<u8, Error> {
    match command {
        Command::Run { cfg, output } => {
            let mut cfg = load(&cfg)?;
            if output.is_some() {
                cfg.run.output = output;
            }
            let prepared = prepare(&cfg)?;
            let result = run_prepared(&cfg, &prepared)?;
            println!("f* = {:.16e}", result.f_star);
            for r in &result.runs {
                let t = &r.trajectory;
                println!(
                    "seed {}: rounds {}, epochs {:.3}, gap {:.6e} -> {:.6e}",
                    r.seed,
                    t.rounds.len(),
                    t.rounds.last().map_or(0.0, |m| m.epochs),
                    t.initial_gap,
                    t.final_gap()
                );
            }
            let s = result.summary();
            println!(
                "final gap: mean {:.6e}, stderr {:.6e}, median {:.6e}",
                s.mean_final_gap, s.stderr_final_gap, s.median_final_gap
            );
            if let Some(dir) = output_dir(&cfg) {
                write_outputs(&result, &dir)?;
                println!("wrote {}", dir.display());
            }
            Ok(0)
        }
        Command::Sweep { cfg, gammas, alphas } => {
            let cfg = load(&cfg)?;
            let prepared = prepare(&cfg)?;
            let report = sweep(&cfg, &prepared, &gammas, &alphas)?;
            for (i, e) in report.entries.iter().enumerate() {
                let mark = if i == report.best { "*" } else { " " };
                match (&e.summary, &e.error) {
                    (Some(s), _) => println!(
                        "{mark} gamma {:<8} alpha {:<8} median {:.6e} mean {:.6e}",
                        e.gamma, e.alpha, s.median_final_gap, s.mean_final_gap
                    ),
                    (None, err) => println!(
                        "{mark} gamma {:<8} alpha {:<8} failed: {}",
                        e.gamma,
                        e.alpha,
                        err.as_deref().unwrap_or("unknown")
                    ),
                }
            }
            let best = report.best_entry();
            println!("best: gamma {} alpha {}", best.gamma, best.alpha);
            Ok(0)
        }
        Command::Verify { suite, trials, seed } => {
            let suites = if suite == "all" {
                Suite::ALL.to_vec()
            } else {
                vec![suite.parse()?]
            };
            let mut ok = true;
            for s in suites {
                let report = verify_suite(s, trials, seed)?;
                print!("{report}");
                ok &= report.passed();
            }
            Ok(if ok { 0 } else { VERIFY_FAILED })
        }
        Command::Probs { n, g, c, delta } => {
            let p_g = prob_good_majority(n, g, c, delta)?;
            println!("p_G = {p_g} ~ {:.16}", to_f64(&p_g));
            match prob_in_good_sample(n, g, c, delta) {
                Ok(p) => println!("P_G_C = {p} ~ {:.16}", to_f64(&p)),
                Err(Error::ImpossibleCondition) => println!("P_G_C undefined (p_G = 0)"),
                Err(e) => return Err(e),
            }
            Ok(0)
        }
        Command::Solve { cfg } => {
            let cfg = load(&cfg)?;
            let prepared = prepare(&cfg)?;
            let f = prepared.world.objective();
            let sol = &prepared.reference;
            println!("f* = {:.16e}", sol.f_star);
            println!("|grad f(x*)| = {:.3e} after {} iterations", sol.grad_norm, sol.iterations);
            println!("L = {:.6e}, mu = {:.6e}", f.smoothness().global, f.strong_convexity());
            Ok(0)
        }
    }
}
