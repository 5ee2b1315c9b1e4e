//! Command-line front end: parse a declarative experiment config, run seeded
//! replications, and emit machine-readable results.
//!
//! Exit codes: 0 success, 2 validation failure, 3 unstable input,
//! 4 runtime estimation error.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use gg1_ipa::experiment::{run, validate, ExperimentConfig, RunError, RunOptions, Severity};

const EXIT_VALIDATION: u8 = 2;
const EXIT_UNSTABLE: u8 = 3;
const EXIT_RUNTIME: u8 = 4;

#[derive(Parser)]
#[command(name = "gg1-ipa", version, about = "G/G/1 workload sensitivity experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the experiment and write a JSON-lines results document.
    Run {
        /// Experiment config (TOML).
        config: PathBuf,
        /// Override the base seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Override the replication count.
        #[arg(long)]
        replications: Option<usize>,
        /// Results file; stdout when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Also write the pooled-estimate CSV table here.
        #[arg(long)]
        csv: Option<PathBuf>,
        /// Concurrent replications bound.
        #[arg(long)]
        jobs: Option<usize>,
        /// Run even when the stability check fails; output is tagged unstable.
        #[arg(long)]
        force_unstable: bool,
    },
    /// Validate a config without simulating.
    Validate {
        config: PathBuf,
    },
    /// Run only the Palm-identity checks from the config.
    PalmCheck {
        config: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        jobs: Option<usize>,
        #[arg(long)]
        force_unstable: bool,
    },
}

fn load_config(path: &Path) -> Result<ExperimentConfig, ExitCode> {
    let text = std::fs::read_to_string(path).map_err(|e| {
        eprintln!("error: cannot read {}: {e}", path.display());
        ExitCode::from(EXIT_VALIDATION)
    })?;
    toml::from_str(&text).map_err(|e| {
        eprintln!("error: config parse failed in {}:\n{e}", path.display());
        ExitCode::from(EXIT_VALIDATION)
    })
}

fn report_issues(config: &ExperimentConfig, quiet_fields: &[&str]) -> bool {
    let issues = validate(config);
    let mut has_error = false;
    for issue in &issues {
        let tag = match issue.severity {
            Severity::Error => {
                has_error = true;
                "error"
            }
            Severity::Warning => {
                if quiet_fields.contains(&issue.field.as_str()) {
                    continue;
                }
                "warning"
            }
        };
        eprintln!("{tag}: {}: {}", issue.field, issue.message);
    }
    has_error
}

fn write_out(path: Option<&Path>, contents: &str) -> Result<(), ExitCode> {
    match path {
        Some(p) => std::fs::write(p, contents).map_err(|e| {
            eprintln!("error: cannot write {}: {e}", p.display());
            ExitCode::from(EXIT_RUNTIME)
        }),
        None => {
            print!("{contents}");
            Ok(())
        }
    }
}

fn exit_for(err: &RunError) -> u8 {
    match err {
        RunError::Validation(_) => EXIT_VALIDATION,
        RunError::Unstable(_) => EXIT_UNSTABLE,
        _ => EXIT_RUNTIME,
    }
}

fn cmd_run(
    config_path: &Path,
    opts: RunOptions,
    out: Option<&Path>,
    csv: Option<&Path>,
) -> ExitCode {
    let config = match load_config(config_path) {
        Ok(c) => c,
        Err(code) => return code,
    };
    if report_issues(&config, &[]) {
        return ExitCode::from(EXIT_VALIDATION);
    }
    match run(&config, opts) {
        Ok(doc) => {
            if let Err(code) = write_out(out, &doc.to_jsonl()) {
                return code;
            }
            if let Some(csv_path) = csv {
                if let Err(code) = write_out(Some(csv_path), &doc.to_csv()) {
                    return code;
                }
            }
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_for(&e))
        }
    }
}

fn cmd_palm_check(config_path: &Path, opts: RunOptions, out: Option<&Path>) -> ExitCode {
    let mut config = match load_config(config_path) {
        Ok(c) => c,
        Err(code) => return code,
    };
    // strip everything but the checks; validation still applies
    config.estimators.clear();
    config.oracles.clear();
    if config.palm_checks.is_empty() {
        eprintln!("error: palm_checks: config declares no palm checks");
        return ExitCode::from(EXIT_VALIDATION);
    }
    // the estimator list was just stripped, so that warning is noise here
    if report_issues(&config, &["estimators"]) {
        return ExitCode::from(EXIT_VALIDATION);
    }
    match run(&config, opts) {
        Ok(doc) => {
            let mut lines = String::new();
            let mut all_pass = true;
            for rep in &doc.replications {
                for report in &rep.palm {
                    all_pass &= report.pass;
                    let line = serde_json::json!({
                        "record": "palm",
                        "replication": rep.index,
                        "report": report,
                    });
                    lines.push_str(&format!("{line}\n"));
                }
            }
            if let Err(code) = write_out(out, &lines) {
                return code;
            }
            if all_pass {
                ExitCode::SUCCESS
            } else {
                eprintln!("error: at least one palm check failed");
                ExitCode::from(EXIT_RUNTIME)
            }
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_for(&e))
        }
    }
}

fn main() -> ExitCode {
    match Cli::parse().command {
        Command::Run {
            config,
            seed,
            replications,
            out,
            csv,
            jobs,
            force_unstable,
        } => cmd_run(
            &config,
            RunOptions {
                seed_override: seed,
                replications_override: replications,
                jobs,
                force_unstable,
            },
            out.as_deref(),
            csv.as_deref(),
        ),
        Command::Validate { config } => {
            let parsed = match load_config(&config) {
                Ok(c) => c,
                Err(code) => return code,
            };
            if report_issues(&parsed, &[]) {
                ExitCode::from(EXIT_VALIDATION)
            } else {
                ExitCode::SUCCESS
            }
        }
        Command::PalmCheck {
            config,
            seed,
            out,
            jobs,
            force_unstable,
        } => cmd_palm_check(
            &config,
            RunOptions {
                seed_override: seed,
                replications_override: None,
                jobs,
                force_unstable,
            },
            out.as_deref(),
        ),
    }
}
