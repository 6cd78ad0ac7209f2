use std::collections::BTreeMap;
use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand, ValueEnum};

use icsg::model::perturb;
use icsg::property::{parse_property, Query, Semantics};
use icsg::report::{run_check, CheckOptions, Num};
use icsg::zerosum::SolveOptions;
use icsg::{bench, oracle, Icsg};

#[derive(Parser)]
#[command(
    name = "icsg",
    version,
    about = "Model checking for interval concurrent stochastic games"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum Uncertainty {
    Adversarial,
    Controlled,
}

impl From<Uncertainty> for Semantics {
    fn from(u: Uncertainty) -> Semantics {
        match u {
            Uncertainty::Adversarial => Semantics::Adversarial,
            Uncertainty::Controlled => Semantics::Controlled,
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Check a property on a model
    Check {
        /// Model file, or the name of a built-in benchmark
        model: String,
        /// Property text (alternative to --prop)
        property: Option<String>,
        #[arg(long = "prop")]
        prop: Option<String>,
        #[arg(long, value_enum, default_value = "adversarial")]
        uncertainty: Uncertainty,
        /// Equilibrium tolerance for nonzero-sum properties
        #[arg(long = "epsilon-ne")]
        epsilon_ne: Option<f64>,
        /// Relative-change threshold for value iteration
        #[arg(long, default_value_t = 1e-6)]
        tol: f64,
        #[arg(long = "max-iters", default_value_t = 100_000)]
        max_iters: usize,
        /// Replacement for zero rewards in the first reachability-reward phase
        #[arg(long, default_value_t = 1e-4)]
        gamma: f64,
        /// Include per-state values
        #[arg(long)]
        values: bool,
        /// Write the strategy bundle to this file
        #[arg(long)]
        strategy: Option<PathBuf>,
        /// Print the result as JSON
        #[arg(long)]
        json: bool,
    },
    /// Widen every probability of a point-interval model by ±eps
    Perturb {
        model: String,
        #[arg(long)]
        eps: f64,
        #[arg(short = 'o', long = "output")]
        output: PathBuf,
    },
    /// Write a built-in benchmark model
    Gen {
        /// robot, fig_a1, fig_a2, fig_b1 or appendix_d3
        name: String,
        /// Generator parameter, e.g. `l=4` for robot
        #[arg(long = "param", value_parser = parse_param)]
        params: Vec<(String, String)>,
        #[arg(short = 'o', long = "output")]
        output: Option<PathBuf>,
    },
    #[command(hide = true, subcommand)]
    Oracle(OracleCommand),
}

#[derive(Subcommand)]
enum OracleCommand {
    /// Zero-sum value at every state by enumeration of vertex resolutions
    Value {
        model: String,
        #[arg(long = "prop")]
        prop: String,
        #[arg(long, value_enum, default_value = "adversarial")]
        uncertainty: Uncertainty,
    },
    /// Write a seeded random tiny game
    Tiny {
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(short = 'o', long = "output")]
        output: Option<PathBuf>,
    },
}

fn parse_param(s: &str) -> Result<(String, String), String> {
    s.split_once('=')
        .map(|(k, v)| (k.trim().to_string(), v.trim().to_string()))
        .ok_or_else(|| format!("expected key=value, got `{s}`"))
}

fn load(model: &str) -> Result<Icsg> {
    let path = Path::new(model);
    if !path.exists() && bench::NAMES.contains(&model) {
        return Ok(bench::generate(model, &BTreeMap::new())?);
    }
    let text = fs::read_to_string(path).with_context(|| format!("reading {model}"))?;
    Icsg::from_json(&text).with_context(|| format!("loading {model}"))
}

fn write_or_print(output: Option<&Path>, text: &str) -> Result<()> {
    match output {
        Some(p) => fs::write(p, text).with_context(|| format!("writing {}", p.display())),
        None => emit(text),
    }
}

/// Prints `text` and a newline; a closed pipe is not an error.
fn emit(text: &str) -> Result<()> {
    let mut out = io::stdout().lock();
    match writeln!(out, "{text}") {
        Err(e) if e.kind() == io::ErrorKind::BrokenPipe => Ok(()),
        r => Ok(r?),
    }
}

fn run(cli: Cli) -> Result<u8> {
    match cli.command {
        Command::Check {
            model,
            property,
            prop,
            uncertainty,
            epsilon_ne,
            tol,
            max_iters,
            gamma,
            values,
            strategy,
            json,
        } => {
            let text = match (prop, property) {
                (Some(p), None) | (None, Some(p)) => p,
                (Some(_), Some(_)) => {
                    bail!("give the property either positionally or with --prop, not both")
                }
                (None, None) => bail!("missing property (use --prop)"),
            };
            let m = load(&model)?;
            let opts = CheckOptions {
                solve: SolveOptions {
                    semantics: uncertainty.into(),
                    tol,
                    max_iters,
                    gamma,
                    epsilon_ne,
                },
                values,
                strategy: strategy.is_some(),
            };
            let out = run_check(&m, &text, &opts)?;
            if let (Some(path), Some(bundle)) = (&strategy, &out.bundle) {
                let s = serde_json::to_string_pretty(bundle)?;
                fs::write(path, s + "\n").with_context(|| format!("writing {}", path.display()))?;
            }
            if json {
                emit(&serde_json::to_string_pretty(&out.result)?)?;
            } else {
                emit(out.result.to_string().trim_end())?;
            }
            Ok(out.exit_code() as u8)
        }
        Command::Perturb { model, eps, output } => {
            let m = load(&model)?;
            let p = perturb(&m, eps)?;
            write_or_print(Some(&output), &p.to_json())?;
            Ok(0)
        }
        Command::Gen {
            name,
            params,
            output,
        } => {
            let m = bench::generate(&name, &params.into_iter().collect())?;
            write_or_print(output.as_deref(), &m.to_json())?;
            Ok(0)
        }
        Command::Oracle(OracleCommand::Value {
            model,
            prop,
            uncertainty,
        }) => {
            let m = load(&model)?;
            let Query::ZeroSum {
                coalition,
                direction,
                objective,
            } = parse_property(&prop)?
            else {
                bail!("the value oracle takes zero-sum properties only");
            };
            let c = m
                .player_index(&coalition)
                .with_context(|| format!("unknown player `{coalition}`"))?;
            let v =
                oracle::oracle_zs_value(&m, c, direction.into(), &objective, uncertainty.into())?;
            let out: BTreeMap<&str, Num> = (0..m.num_states())
                .map(|s| (m.state_name(s), Num(v[s])))
                .collect();
            emit(&serde_json::to_string_pretty(&out)?)?;
            Ok(0)
        }
        Command::Oracle(OracleCommand::Tiny { seed, output }) => {
            let m = oracle::random_tiny_icsg(&oracle::TinyGameSpec::with_seed(seed));
            write_or_print(output.as_deref(), &m.to_json())?;
            Ok(0)
        }
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
