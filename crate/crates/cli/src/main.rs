use std::path::PathBuf;
use std::process::ExitCode;

use acfc_cli::commands::{self, BodeArgs, Common, SweepArgs};
use clap::{Args, Parser, Subcommand};

/// Active clamp forward converter and coreless transformer toolkit.
#[derive(Debug, Parser)]
#[command(name = "acfc", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Args)]
struct Shared {
    /// TOML configuration file.
    #[arg(value_name = "CONFIG")]
    config_path: Option<PathBuf>,
    /// TOML configuration file (same as the positional argument).
    #[arg(long = "config", value_name = "FILE", conflicts_with = "config_path")]
    config_flag: Option<PathBuf>,
    /// Built-in parameter set: table1, prototype or prototype-lossy.
    #[arg(long)]
    preset: Option<String>,
    /// Override one parameter, e.g. `fs=8e6` or `converter.lm=12e-6`.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    sets: Vec<String>,
    /// Output directory.
    #[arg(long, env = "ACFC_OUT_DIR")]
    out: Option<PathBuf>,
}

impl Shared {
    fn common(self) -> Common {
        Common {
            config: self.config_path.or(self.config_flag),
            preset: self.preset,
            sets: self.sets,
            out: self.out,
        }
    }
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Transformer frequency response and -3 dB bandwidth.
    Bode {
        #[command(flatten)]
        shared: Shared,
        /// Start frequency (Hz).
        #[arg(long)]
        from: Option<f64>,
        /// Stop frequency (Hz).
        #[arg(long)]
        to: Option<f64>,
        /// Grid points per decade.
        #[arg(long)]
        ppd: Option<usize>,
    },
    /// Converter steady state, final-period waveforms and report.
    Simulate {
        #[command(flatten)]
        shared: Shared,
    },
    /// Closed-form design-rule feasibility.
    Check {
        #[command(flatten)]
        shared: Shared,
        /// Exit with status 3 when any rule fails.
        #[arg(long)]
        strict: bool,
    },
    /// Steady state over a range of one converter parameter.
    Sweep {
        #[command(flatten)]
        shared: Shared,
        /// Converter field to vary (default fs).
        #[arg(long)]
        param: Option<String>,
        /// Comma-separated explicit values.
        #[arg(long, conflicts_with_all = ["from", "to", "points"])]
        values: Option<String>,
        #[arg(long)]
        from: Option<f64>,
        #[arg(long)]
        to: Option<f64>,
        /// Number of points between `from` and `to`, inclusive.
        #[arg(long)]
        points: Option<usize>,
        /// Space points logarithmically.
        #[arg(long)]
        log: bool,
    },
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let mut stdout = std::io::stdout().lock();
    let result = match cli.command {
        Command::Bode {
            shared,
            from,
            to,
            ppd,
        } => commands::bode(&shared.common(), &BodeArgs { from, to, ppd }, &mut stdout),
        Command::Simulate { shared } => commands::simulate(&shared.common(), &mut stdout),
        Command::Check { shared, strict } => commands::check(&shared.common(), strict, &mut stdout),
        Command::Sweep {
            shared,
            param,
            values,
            from,
            to,
            points,
            log,
        } => commands::sweep(
            &shared.common(),
            &SweepArgs {
                param,
                values,
                from,
                to,
                points,
                log,
            },
            &mut stdout,
        ),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("acfc: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
