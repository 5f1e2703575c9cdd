use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use mdro_cli::commands::{cmd_cv, cmd_eval, cmd_gen, cmd_train};
use mdro_cli::config::Settings;
use mdro_cli::csv_io::write_text;
use mdro_cli::repro::{self, Figure};
use mdro_cli::{CliError, CliResult};

/// Declares one optional flag per settings key and the conversion into
/// [`Settings`].
macro_rules! setting_flags {
    ($($field:ident: $help:literal),* $(,)?) => {
        #[derive(Debug, Args, Default)]
        struct Flags {
            $(
                #[arg(long, global = true, help = $help)]
                $field: Option<String>,
            )*
        }

        impl Flags {
            fn to_settings(&self) -> CliResult<Settings> {
                let mut s = Settings::default();
                $(
                    if let Some(v) = &self.$field {
                        s.set(stringify!($field), v.clone())?;
                    }
                )*
                Ok(s)
            }
        }
    };
}

setting_flags! {
    objective: "erm, joint_cvar, joint_pnorm, marginal, marginal_confounded, rkhs, bounded_holder",
    loss: "absolute_deviation, logistic or zero_one (evaluation only)",
    alpha0: "worst-case subpopulation size used for training",
    p: "dual exponent in [1, 2]",
    lipschitz_ratio: "estimated Lipschitz ratio L/eps; a comma list for cv",
    eps: "smoothing scale of the variational objective",
    delta: "postulated confounding level",
    n: "number of rows",
    d: "number of covariates",
    seed: "base seed (falls back to DRO_SEED, then 0)",
    iters: "optimizer iterations",
    step0: "initial step size",
    schedule: "constant or inv_sqrt",
    tol: "relative improvement below which training stops early",
    ridge: "squared-norm penalty on the slopes",
    fit_intercept: "true or false",
    bandwidth: "Gaussian kernel bandwidth (rkhs)",
    radius: "RKHS ball radius (rkhs)",
    in_csv: "input dataset",
    out_csv: "output CSV (stdout when omitted, except for gen)",
    alphas: "comma list of test-time worst-case group sizes",
    variant: "toy_1d, simdist or confounded",
    alpha_true: "minority proportion of the generator",
    replicates: "label replicates per row",
    model: "model file (one number per line, intercept last)",
    trace: "JSON-lines training trace path",
    mode: "evaluation mode: oracle, replicates or joint",
    condition: "confounder value to condition replicate evaluation on",
    cv_alpha: "test-time group size used to score models",
    holdout_csv: "held-out dataset with replicates for cv",
    holdout_n: "rows of the synthetic held-out set",
    holdout_m: "replicates of the synthetic held-out set",
    eval_n: "rows of the oracle evaluation sample",
    jobs: "grid points trained concurrently",
    out_dir: "directory for repro CSVs",
}

#[derive(Debug, Parser)]
#[command(name = "mdro", version, about = "Marginal distributionally robust training and evaluation")]
struct Cli {
    /// Flat key=value file; flags override its values.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[command(flatten)]
    flags: Flags,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate a simulated dataset as CSV.
    Gen,
    /// Train a model on a CSV dataset.
    Train,
    /// Worst-case risk sweep of a saved model.
    Eval,
    /// Select lipschitz_ratio on held-out replicates.
    Cv,
    /// Run a scripted simulation experiment.
    Repro {
        /// fig_dimdep, fig_alpha_sweep, fig_lip_sensitivity, fig_confounded or fig_toy
        figure: String,
    },
}

fn run(cli: Cli) -> CliResult<()> {
    let file = match &cli.config {
        Some(path) => Settings::from_file(path)?,
        None => Settings::default(),
    };
    let settings = file.merge_over(&cli.flags.to_settings()?);
    match cli.command {
        Command::Gen => cmd_gen(&settings),
        Command::Train => cmd_train(&settings),
        Command::Eval => cmd_eval(&settings),
        Command::Cv => cmd_cv(&settings),
        Command::Repro { figure } => {
            let figure: Figure = figure.parse().map_err(CliError::Usage)?;
            let dir = Path::new(settings.get("out_dir").unwrap_or("."));
            std::fs::create_dir_all(dir).map_err(|e| CliError::Io {
                path: dir.to_path_buf(),
                source: e,
            })?;
            for (name, csv) in repro::run(figure, &settings)? {
                let path = dir.join(name);
                write_text(&path, &csv)?;
                eprintln!("wrote {}", path.display());
            }
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
