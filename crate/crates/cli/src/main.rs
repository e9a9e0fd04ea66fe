use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use mobility_core::bench::Archetype;
use s2m::commands::{self, write_file};
use s2m::serve::{self, Service, DEFAULT_PORT};
use s2m::{config, CliError, Result};

#[derive(Parser)]
#[command(name = "s2m", version, about = "Part mobility extraction from static point clouds")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct ConfigArgs {
    /// Flat TOML file of pipeline settings.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Override one setting, `key=value`; applied after the file.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
}

impl ConfigArgs {
    fn load(&self) -> Result<mobility_core::pipeline::PipelineConfig> {
        config::load(self.config.as_deref(), &self.set)
    }
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic annotated shape, or a whole dataset.
    Gen {
        #[arg(long, conflicts_with = "dataset")]
        archetype: Option<Archetype>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 2048)]
        points: usize,
        /// Defaults to stdout.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Write every archetype for each of `--seeds` into this directory.
        #[arg(long)]
        dataset: Option<PathBuf>,
        #[arg(long, value_delimiter = ',', default_value = "0,1,2,3,4")]
        seeds: Vec<u64>,
    },
    /// Re-pose every mobility of an annotated shape.
    Augment {
        #[arg(long)]
        input: PathBuf,
        /// Poses per mobility, evenly spaced from rest to the full amount.
        #[arg(long, default_value_t = 3)]
        poses: usize,
        #[arg(long)]
        out_dir: PathBuf,
    },
    /// Extract mobilities from one shape (annotation JSON or raw .xyz).
    Run {
        #[arg(long)]
        input: PathBuf,
        #[command(flatten)]
        config: ConfigArgs,
        /// Defaults to stdout.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Score a prediction against ground truth, or the pipeline over a dataset.
    Eval {
        #[arg(long, requires = "gt", conflicts_with = "dataset")]
        pred: Option<PathBuf>,
        #[arg(long)]
        gt: Option<PathBuf>,
        #[arg(long, required_unless_present = "pred")]
        dataset: Option<PathBuf>,
        #[command(flatten)]
        config: ConfigArgs,
        /// Defaults to available parallelism.
        #[arg(long)]
        workers: Option<usize>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Evaluate a dataset once per value of one setting.
    Sweep {
        #[arg(long)]
        dataset: PathBuf,
        #[arg(long)]
        param: String,
        #[arg(long, value_delimiter = ',', required = true)]
        values: Vec<String>,
        #[command(flatten)]
        config: ConfigArgs,
        #[arg(long)]
        workers: Option<usize>,
        /// Machine-readable copy of the table.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Serve a data directory to the annotation tool.
    Serve {
        #[arg(long, default_value_t = DEFAULT_PORT)]
        port: u16,
        #[arg(long)]
        data: PathBuf,
        #[command(flatten)]
        config: ConfigArgs,
    },
}

fn emit(out: Option<&Path>, text: &str) -> Result<()> {
    match out {
        Some(p) => write_file(p, text),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn execute(cmd: Command) -> Result<()> {
    match cmd {
        Command::Gen {
            archetype,
            seed,
            points,
            out,
            dataset,
            seeds,
        } => {
            if let Some(dir) = dataset {
                let ids = commands::gen_dataset(&dir, &Archetype::ALL, &seeds, points)?;
                eprintln!("wrote {} shapes to {}", ids.len(), dir.display());
                return Ok(());
            }
            let archetype =
                archetype.ok_or_else(|| CliError::Config("--archetype is required without --dataset".into()))?;
            emit(out.as_deref(), &commands::gen_shape(archetype, seed, points)?)
        }
        Command::Augment { input, poses, out_dir } => {
            let ids = commands::augment(&input, poses, &out_dir)?;
            eprintln!("wrote {} shapes to {}", ids.len(), out_dir.display());
            Ok(())
        }
        Command::Run { input, config, out } => {
            let config = config.load()?;
            let ann = commands::load_input(&input)?;
            emit(out.as_deref(), &commands::run(&ann, &config)?)
        }
        Command::Eval {
            pred,
            gt,
            dataset,
            config,
            workers,
            out,
        } => {
            let config = config.load()?;
            let text = match (pred, gt, dataset) {
                (Some(pred), Some(gt), _) => {
                    let report = commands::eval_pair(&commands::load_input(&pred)?, &commands::load_input(&gt)?, &config)?;
                    commands::to_json(&report)
                }
                (_, _, Some(dir)) => {
                    let shapes = commands::load_dataset(&dir)?;
                    commands::to_json(&commands::eval_dataset(&shapes, &config, workers)?)
                }
                _ => return Err(CliError::Config("give --pred and --gt, or --dataset".into())),
            };
            emit(out.as_deref(), &text)
        }
        Command::Sweep {
            dataset,
            param,
            values,
            config,
            workers,
            out,
        } => {
            let config = config.load()?;
            let shapes = commands::load_dataset(&dataset)?;
            let rows = commands::sweep(&shapes, &config, &param, &values, workers)?;
            print!("{}", commands::sweep_table(&param, &rows));
            match out {
                Some(p) => write_file(&p, &commands::sweep_json(&param, &rows)),
                None => Ok(()),
            }
        }
        Command::Serve { port, data, config } => {
            let service = Service::new(&data, config.load()?);
            let server = serve::bind(port)?;
            eprintln!(
                "serving {} on http://127.0.0.1:{}",
                data.display(),
                serve::local_port(&server).unwrap_or(port)
            );
            serve::serve(&server, &service);
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
