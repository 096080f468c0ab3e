use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use serde::de::DeserializeOwned;

use robust_fsc::adversary::{select_worst_case, AdversaryConfig, NodeSum};
use robust_fsc::extract::ExtractorKind;
use robust_fsc::io::{
    generate_grid, parse_fsc, parse_model, parse_model_unchecked, serialize_model, GridKind, GridSpec, ModelDocument,
};
use robust_fsc::model::Interval;
use robust_fsc::pip::{run, write_outputs, Method, RunConfig};
use robust_fsc::robust::{evaluate_fsc_with, Materialize, Mode, ViConfig};
use robust_fsc::supervision::SupervisionKind;
use robust_fsc::{Error, Result};

fn kebab<T: DeserializeOwned>(s: &str) -> std::result::Result<T, String> {
    serde_json::from_value(serde_json::Value::String(s.into())).map_err(|e| e.to_string())
}

#[derive(Parser)]
#[command(
    name = "robust-fsc",
    version,
    about = "Robust finite-state controllers for interval POMDPs"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the planning loop on a model and write iterations.csv, summary.json and best.fsc.
    Solve(SolveArgs),
    /// Print the worst-case (or best-case) value of a controller.
    EvalFsc {
        model: PathBuf,
        fsc: PathBuf,
        #[arg(long)]
        optimistic: bool,
        #[arg(long, default_value_t = 1e-10)]
        tol: f64,
    },
    /// Write the member of the uncertainty set that is worst for a controller.
    WorstCase {
        model: PathBuf,
        fsc: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long, value_parser = kebab::<NodeSum>, default_value = "all")]
        node_sum: NodeSum,
        #[arg(long, default_value_t = 1e-10)]
        tol: f64,
    },
    /// Generate a grid-world model.
    GenGrid {
        #[arg(long, value_parser = kebab::<GridKind>)]
        kind: GridKind,
        #[arg(long, default_value_t = 5)]
        width: usize,
        #[arg(long, default_value_t = 5)]
        height: usize,
        #[arg(long, default_value_t = 1)]
        view_radius: usize,
        #[arg(long, default_value_t = 0.1)]
        slip_lo: f64,
        #[arg(long, default_value_t = 0.4)]
        slip_hi: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Check a model document and list every violated invariant.
    Validate { model: PathBuf },
}

#[derive(clap::Args)]
struct SolveArgs {
    model: PathBuf,
    #[arg(long, value_parser = kebab::<Method>, default_value = "pip")]
    method: Method,
    #[arg(long, value_parser = kebab::<SupervisionKind>, default_value = "qmdp")]
    supervision: SupervisionKind,
    #[arg(long, value_parser = kebab::<ExtractorKind>, default_value = "kmeans")]
    extractor: ExtractorKind,
    #[arg(long, default_value_t = 50)]
    iters: usize,
    #[arg(long, default_value_t = 256)]
    episodes: usize,
    #[arg(long, default_value_t = 200)]
    horizon: usize,
    #[arg(long, default_value_t = 16)]
    hidden: usize,
    #[arg(long, default_value_t = 9)]
    clusters: usize,
    #[arg(long, default_value_t = 8)]
    epochs: usize,
    #[arg(long, default_value_t = 1e-3)]
    lr: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value = "out")]
    out: PathBuf,
    #[arg(long)]
    target_value: Option<f64>,
    #[arg(long, value_parser = kebab::<NodeSum>, default_value = "all")]
    node_sum: NodeSum,
    /// Write 0 in the wall_ms column so repeated runs are byte-identical.
    #[arg(long)]
    no_timing: bool,
}

fn read(path: &Path) -> Result<String> {
    std::fs::read_to_string(path)
        .map_err(|e| Error::Io(std::io::Error::new(e.kind(), format!("{}: {e}", path.display()))))
}

fn emit(text: &str, out: Option<&Path>) -> Result<()> {
    match out {
        Some(p) => std::fs::write(p, text).map_err(Error::from),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn vi(tol: f64) -> ViConfig {
    ViConfig {
        tol,
        ..ViConfig::default()
    }
}

fn solve(args: SolveArgs) -> Result<()> {
    let doc = parse_model(&read(&args.model)?)?;
    let config = RunConfig {
        method: args.method,
        supervision: args.supervision,
        extractor: args.extractor,
        iterations: args.iters,
        episodes: args.episodes,
        horizon: args.horizon,
        hidden: args.hidden,
        clusters: args.clusters,
        epochs: args.epochs,
        lr: args.lr,
        seed: args.seed,
        target_value: args.target_value,
        adversary: AdversaryConfig {
            node_sum: args.node_sum,
            ..AdversaryConfig::default()
        },
        record_timing: !args.no_timing,
        ..RunConfig::default()
    };
    let result = run(&config, &doc.model)?;
    let summary = write_outputs(&args.out, &config, &result)?;
    match summary.best_robust_value {
        Some(v) => println!("best robust value {v} after {} iterations", summary.iterations_run),
        None if result.best_fsc.is_none() => println!("no policy: no iterations were run"),
        None => println!("no controller reaches the goal under the worst case"),
    }
    Ok(())
}

fn execute(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Solve(args) => solve(args),
        Command::EvalFsc {
            model,
            fsc,
            optimistic,
            tol,
        } => {
            let doc = parse_model(&read(&model)?)?;
            let fsc = parse_fsc(&read(&fsc)?)?;
            let mode = if optimistic {
                Mode::Optimistic
            } else {
                Mode::Pessimistic
            };
            let values = evaluate_fsc_with(&doc.model, &fsc, mode, &vi(tol), Materialize::Reachable)?;
            println!("{}", values.value);
            Ok(())
        }
        Command::WorstCase {
            model,
            fsc,
            out,
            node_sum,
            tol,
        } => {
            let doc = parse_model(&read(&model)?)?;
            let fsc = parse_fsc(&read(&fsc)?)?;
            let which = match node_sum {
                NodeSum::All => Materialize::All,
                NodeSum::Reachable => Materialize::Reachable,
            };
            let values = evaluate_fsc_with(&doc.model, &fsc, Mode::Pessimistic, &vi(tol), which)?;
            let adv = AdversaryConfig {
                node_sum,
                ..AdversaryConfig::default()
            };
            let worst = select_worst_case(&doc.model, &fsc, &values, &adv)?.worst_case;
            let mut member = ModelDocument::new(worst.to_robust());
            member.name = doc.name.map(|n| format!("{n} (worst case)"));
            emit(&serialize_model(&member), out.as_deref())
        }
        Command::GenGrid {
            kind,
            width,
            height,
            view_radius,
            slip_lo,
            slip_hi,
            seed,
            out,
        } => {
            let spec = GridSpec {
                view_radius,
                slip: Interval::new(slip_lo, slip_hi),
                ..GridSpec::new(kind).with_size(width, height)
            };
            let model = generate_grid(&spec, seed)?;
            emit(&serialize_model(&ModelDocument::new(model)), out.as_deref())
        }
        Command::Validate { model } => {
            let doc = parse_model_unchecked(&read(&model)?)?;
            let report = doc.model.validate();
            report.into_result()?;
            println!(
                "ok: {} states, {} actions, {} observations",
                doc.model.num_states(),
                doc.model.num_actions(),
                doc.model.num_observations()
            );
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            match &e {
                Error::Validation(violations) => {
                    eprintln!("error: model failed validation");
                    for v in violations {
                        eprintln!("  {v}");
                    }
                }
                other => eprintln!("error: {other}"),
            }
            ExitCode::from(exit_code(&e))
        }
    }
}

fn exit_code(e: &Error) -> u8 {
    if e.is_numerical() {
        return 3;
    }
    match e {
        Error::Validation(_) | Error::Parse { .. } | Error::InfeasibleRow { .. } => 2,
        Error::Iteration { source, .. } => exit_code(source),
        _ => 1,
    }
}
