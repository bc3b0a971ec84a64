use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use sasicm::data::SyntheticConfig;
use sasicm::error::{Error, Result};
use sasicm::model::Variant;
use sasicm::run::{self, Overrides, RunConfig};
use sasicm::task::{parse_task_list, Task};
use sasicm::training::ToyDims;

#[derive(Parser)]
#[command(name = "sasicm", version, about = "Subtext, sarcasm and metaphor classification with strengthen attention")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write a synthetic planted-cue corpus as JSON lines.
    DataGen {
        #[arg(long, default_value_t = 2000)]
        n: usize,
        /// `p-1,p0,p1` for every task, or three such triples separated by `;`.
        #[arg(long)]
        imbalance: Option<String>,
        #[arg(long, default_value_t = 0.9)]
        cue_strength: f64,
        #[arg(long, default_value_t = 100_000)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train on a train/val/test split and score the test part.
    Train(RunArgs),
    /// Score a checkpoint on a corpus.
    Eval {
        #[command(flatten)]
        run: RunArgs,
        #[arg(long)]
        checkpoint: PathBuf,
    },
    /// Repeated stratified k-fold cross-validation.
    Cv(RunArgs),
    /// Kappa, accuracy and TAE against simulated agreement levels.
    SimulateTae {
        #[arg(long, value_delimiter = ',', default_value = "0.05,0.1,0.2,0.5")]
        pos_rates: Vec<f64>,
        /// Agreement levels; defaults to 0, 0.05, ..., 1.
        #[arg(long, value_delimiter = ',')]
        agreement_grid: Option<Vec<f64>>,
        #[arg(long, default_value_t = 10_000)]
        n_items: usize,
        #[arg(long, default_value_t = 100_000)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Finite-difference check of the full model on a toy problem.
    Gradcheck {
        /// `L,d_e,d_h`.
        #[arg(long, default_value = "5,8,4")]
        dims: String,
        #[arg(long, default_value_t = 1)]
        seed: u64,
    },
}

#[derive(Args)]
struct RunArgs {
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    corpus: Option<PathBuf>,
    #[arg(long)]
    embeddings: Option<PathBuf>,
    /// sasicm, sa, lstm, wc, sg or st.
    #[arg(long)]
    variant: Option<String>,
    /// Comma-separated subset of subtext,sarcasm,metaphor.
    #[arg(long)]
    tasks: Option<String>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out_dir: PathBuf,
}

impl RunArgs {
    fn tasks(&self) -> Result<Option<Vec<Task>>> {
        self.tasks.as_deref().map(parse_task_list).transpose()
    }

    fn resolve(&self) -> Result<RunConfig> {
        let base = match &self.config {
            Some(path) => RunConfig::load(path)?,
            None => RunConfig::default(),
        };
        let variant = self.variant.as_deref().map(str::parse::<Variant>).transpose()?;
        let rc = base.with_overrides(Overrides {
            corpus: self.corpus.clone(),
            embeddings: self.embeddings.clone(),
            variant,
            tasks: self.tasks()?,
            seed: self.seed,
        });
        rc.validate()?;
        Ok(rc)
    }
}

fn default_grid() -> Vec<f64> {
    (0..=20).map(|i| i as f64 / 20.0).collect()
}

fn execute(cli: Cli) -> Result<ExitCode> {
    match cli.command {
        Command::DataGen { n, imbalance, cue_strength, seed, out } => {
            let mut cfg = SyntheticConfig { n, cue_strength, seed, ..Default::default() };
            if let Some(s) = imbalance {
                cfg.imbalance = run::parse_imbalance(&s)?;
            }
            let written = run::data_gen(&cfg, &out).map_err(|e| match e {
                Error::InvalidArgument(m) => Error::Config(m),
                e => e,
            })?;
            println!("wrote {written} examples to {}", out.display());
        }
        Command::Train(args) => {
            let rc = args.resolve()?;
            let s = run::train_cmd(&rc, &args.out_dir)?;
            println!(
                "epochs {} best {} ({})",
                s.history.epochs_run(),
                s.history.best_epoch,
                s.history.stop_reason.name()
            );
            print!("{}", s.test.to_table());
        }
        Command::Eval { run: args, checkpoint } => {
            let rc = RunConfig { corpus: args.corpus.clone(), ..args.config.as_ref().map(RunConfig::load).transpose()?.unwrap_or_default() };
            let report = run::eval_cmd(&rc, &checkpoint, args.tasks()?.as_deref(), &args.out_dir)?;
            print!("{}", report.to_table());
        }
        Command::Cv(args) => {
            let rc = args.resolve()?;
            let report = run::cv_cmd(&rc, &args.out_dir)?;
            print!("{}", report.to_csv());
        }
        Command::SimulateTae { pos_rates, agreement_grid, n_items, seed, out } => {
            let grid = agreement_grid.unwrap_or_else(default_grid);
            let curve = run::simulate_tae(&pos_rates, &grid, n_items, seed)?;
            std::fs::write(&out, curve.to_csv()).map_err(|e| Error::Io { path: out.clone(), source: e })?;
            println!("wrote {} rows to {}", curve.rows.len(), out.display());
        }
        Command::Gradcheck { dims, seed } => {
            let dims: ToyDims = run::parse_dims(&dims)?;
            let report = run::gradcheck_cmd(dims, seed)?;
            let pass = report.max_relative_error < run::GRADCHECK_TOLERANCE;
            println!(
                "{} max relative error {:.3e} over {} entries",
                if pass { "PASS" } else { "FAIL" },
                report.max_relative_error,
                report.entries_checked
            );
            if !pass {
                return Ok(ExitCode::FAILURE);
            }
        }
    }
    Ok(ExitCode::SUCCESS)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(run::exit_code(&e) as u8)
        }
    }
}
