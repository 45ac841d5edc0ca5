use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use contraction_harness::{
    emit_results, parse_config, run_experiment, ExperimentConfig, OutputFormat, Pipeline,
};

const EXIT_CONFIG: u8 = 1;
const EXIT_NUMERICAL: u8 = 2;
const EXIT_IO: u8 = 3;

#[derive(Parser)]
#[command(
    name = "contraction-lab",
    version,
    about = "Posterior contraction experiments for linear inverse problems"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// TOML experiment configuration; defaults apply when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Overrides run.master_seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Overrides outputs.dir.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[arg(long, global = true, value_enum)]
    format: Option<Format>,
    #[arg(long, global = true, env = "CONTRACTION_LAB_WORKERS")]
    workers: Option<usize>,
}

#[derive(Subcommand, Clone, Copy)]
enum Command {
    /// Draw one data sample.
    Simulate,
    /// Conjugate posterior and its exceedance curve.
    Posterior,
    /// Contraction radius against n and the fitted slope.
    RateFit,
    /// Check the contraction assumptions for a rate plan.
    Check,
    /// Tables of g_k.
    Gn,
    Smallball,
    Minmax,
    Hs,
    Concentration,
    /// Finite-dimensional experiment.
    Findim,
}

impl Command {
    fn pipeline(self) -> Pipeline {
        match self {
            Command::Simulate => Pipeline::Simulate,
            Command::Posterior => Pipeline::Posterior,
            Command::RateFit => Pipeline::RateFit,
            Command::Check => Pipeline::Check,
            Command::Gn => Pipeline::GTables,
            Command::Smallball => Pipeline::Smallball,
            Command::Minmax => Pipeline::Minmax,
            Command::Hs => Pipeline::Hs,
            Command::Concentration => Pipeline::Concentration,
            Command::Findim => Pipeline::Findim,
        }
    }
}

#[derive(ValueEnum, Clone, Copy)]
enum Format {
    Csv,
    Json,
    Plotdata,
}

fn load(cli: &Cli) -> Result<ExperimentConfig, (u8, String)> {
    let mut config = match &cli.config {
        Some(path) => {
            let text = std::fs::read_to_string(path)
                .map_err(|e| (EXIT_IO, format!("cannot read {}: {e}", path.display())))?;
            parse_config(&text).map_err(|e| (EXIT_CONFIG, format!("{}: {e}", path.display())))?
        }
        None => ExperimentConfig::default(),
    };
    config.pipelines = vec![cli.command.pipeline()];
    if let Some(seed) = cli.seed {
        config.run.master_seed = seed;
    }
    if let Some(out) = &cli.out {
        config.outputs.dir = out.to_string_lossy().into_owned();
    }
    if let Some(f) = cli.format {
        config.outputs.formats = vec![match f {
            Format::Csv => OutputFormat::Csv,
            Format::Json => OutputFormat::Json,
            Format::Plotdata => OutputFormat::Plotdata,
        }];
    }
    config
        .validate()
        .map_err(|e| (EXIT_CONFIG, e.to_string()))?;
    Ok(config)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let config = match load(&cli) {
        Ok(c) => c,
        Err((code, msg)) => {
            eprintln!("error: {msg}");
            return ExitCode::from(code);
        }
    };
    let mut pool = rayon::ThreadPoolBuilder::new();
    if let Some(w) = cli.workers {
        if w == 0 {
            eprintln!("error: --workers must be positive");
            return ExitCode::from(EXIT_CONFIG);
        }
        pool = pool.num_threads(w);
    }
    let pool = match pool.build() {
        Ok(p) => p,
        Err(e) => {
            eprintln!("error: cannot start worker pool: {e}");
            return ExitCode::from(EXIT_NUMERICAL);
        }
    };
    let record = pool.install(|| run_experiment(&config));
    let dir = PathBuf::from(&config.outputs.dir);
    match emit_results(&record, &config.outputs.formats, &dir) {
        Ok(paths) => {
            for p in paths {
                println!("{}", p.display());
            }
        }
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(EXIT_IO);
        }
    }
    for f in &record.failures {
        eprintln!("failed {}: {}", f.pipeline, f.message);
    }
    if record.failures.is_empty() {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(EXIT_NUMERICAL)
    }
}
