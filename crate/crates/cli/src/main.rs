use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use shallowface::commands::{eval, extract, fit, predict};
use shallowface::error::CliError;
use shallowface::parallel::Threads;

/// Truncated-network face verification toolkit: extract features from
/// a network prefix, fit a supervised projection head, evaluate the
/// open-set protocol, and classify single queries.
#[derive(Parser)]
#[command(name = "shallowface", version, max_term_width = 100)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run images through a truncated network and write a feature CSV.
    Extract {
        /// Network description (JSON).
        #[arg(long)]
        model: PathBuf,
        /// How many leading layers to keep (1-based).
        #[arg(long)]
        depth: usize,
        /// Image archive (JSON tensors).
        #[arg(long)]
        images: PathBuf,
        /// Output feature CSV.
        #[arg(long)]
        out: PathBuf,
        /// Worker threads (default: SHALLOWFACE_THREADS or all cores).
        #[arg(long)]
        threads: Option<usize>,
    },
    /// Fit the projection head on the training pool of a split.
    Fit {
        /// Feature CSV.
        #[arg(long)]
        features: PathBuf,
        /// Existing split plan (JSON). Mutually exclusive with --seed.
        #[arg(long, conflicts_with = "seed")]
        split: Option<PathBuf>,
        /// Derive a fresh split with this seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Config supplying split parameters for --seed (optional).
        #[arg(long)]
        config: Option<PathBuf>,
        /// Within-class penalty weight (must be > 0).
        #[arg(long, allow_negative_numbers = true)]
        alpha: f64,
        /// Number of projection components.
        #[arg(long)]
        components: usize,
        /// Output projection model (JSON).
        #[arg(long)]
        out: PathBuf,
    },
    /// Run the grid-search evaluation protocol and write a report.
    Eval {
        /// Feature CSV, `PATH` or `DEPTH=PATH`; repeat per depth.
        #[arg(long, required = true)]
        features: Vec<String>,
        /// Experiment config (JSON).
        #[arg(long)]
        config: PathBuf,
        /// Output report (JSON); a .txt view is written alongside.
        #[arg(long)]
        out: PathBuf,
        /// Existing split plan; otherwise one is derived and saved.
        #[arg(long)]
        split: Option<PathBuf>,
        /// Overrides the config seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Also evaluate the no-projection baseline.
        #[arg(long)]
        baseline: bool,
        /// Worker threads (default: SHALLOWFACE_THREADS or all cores).
        #[arg(long)]
        threads: Option<usize>,
    },
    /// Match queries against a gallery and print one JSON line each.
    Predict {
        /// Fitted projection model (JSON).
        #[arg(long)]
        projection: PathBuf,
        /// Gallery feature CSV (one member per identity).
        #[arg(long)]
        gallery: PathBuf,
        /// Acceptance threshold on the embedding distance (>= 0).
        #[arg(long, allow_negative_numbers = true)]
        threshold: f64,
        /// Query feature CSV...
        #[arg(long)]
        features: Option<PathBuf>,
        /// ...or a network to extract query features with.
        #[arg(long)]
        model: Option<PathBuf>,
        /// Truncation depth for --model.
        #[arg(long)]
        depth: Option<usize>,
        /// Image archive for --model.
        #[arg(long)]
        images: Option<PathBuf>,
    },
}

fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Extract {
            model,
            depth,
            images,
            out,
            threads,
        } => {
            let threads = Threads::from_flag(threads)?;
            let n = extract::run(&model, depth, &images, &out, &threads)?;
            eprintln!("wrote {n} feature rows to {}", out.display());
        }
        Command::Fit {
            features,
            split,
            seed,
            config,
            alpha,
            components,
            out,
        } => {
            let written = fit::run(&fit::FitArgs {
                features_path: &features,
                split_path: split.as_deref(),
                seed,
                config_path: config.as_deref(),
                alpha,
                components,
                out_path: &out,
            })?;
            eprintln!("wrote projection model to {}", written.display());
        }
        Command::Eval {
            features,
            config,
            out,
            split,
            seed,
            baseline,
            threads,
        } => {
            let threads = Threads::from_flag(threads)?;
            let outputs = eval::run(&eval::EvalArgs {
                features: &features,
                config_path: &config,
                out_path: &out,
                split_path: split.as_deref(),
                seed,
                baseline,
                threads: &threads,
            })?;
            eprintln!(
                "wrote {} and {}",
                outputs.report_json.display(),
                outputs.report_text.display()
            );
            if let Some(path) = outputs.split_written {
                eprintln!("wrote split plan to {}", path.display());
            }
        }
        Command::Predict {
            projection,
            gallery,
            threshold,
            features,
            model,
            depth,
            images,
        } => {
            let lines = predict::run(&predict::PredictArgs {
                projection_path: &projection,
                gallery_path: &gallery,
                threshold,
                features_path: features.as_deref(),
                model_path: model.as_deref(),
                depth,
                images_path: images.as_deref(),
            })?;
            for line in lines {
                println!("{line}");
            }
        }
    }
    Ok(())
}

/// Failures render as exactly one stderr line: `error: <class>: <message>`.
fn fail(class: &str, message: &str) -> ExitCode {
    let one_line = message.replace('\n', "; ");
    eprintln!("error: {class}: {one_line}");
    ExitCode::from(if class == "usage" { 2 } else { 1 })
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            if matches!(
                e.kind(),
                clap::error::ErrorKind::DisplayHelp | clap::error::ErrorKind::DisplayVersion
            ) {
                print!("{e}");
                return ExitCode::SUCCESS;
            }
            // Bare invocation: show the help text, not a one-line error.
            if e.kind() == clap::error::ErrorKind::DisplayHelpOnMissingArgumentOrSubcommand {
                eprint!("{e}");
                return ExitCode::from(2);
            }
            let rendered = e.to_string();
            let first = rendered
                .lines()
                .next()
                .unwrap_or("invalid arguments")
                .trim_start_matches("error: ");
            return fail("usage", first);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => fail(e.class(), &e.to_string()),
    }
}
