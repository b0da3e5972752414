//! Command-line front end for the experiment registry.
//!
//! Exit codes: 0 all checks passed, 1 a tolerance check failed, 2 the
//! configuration was rejected, 3 a run failed internally.

use std::collections::BTreeMap;
use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use porder_lab::experiments::{
    classify_file, find_experiment, format_rate_report, list_experiments, run_experiment,
    ExperimentConfig, ExperimentError, ExperimentReport, OutputFormat, REGISTRY,
};
use porder_lab::rate::ClassifyConfig;
use porder_lab::testbed::{char_root, catalog_listing, standard_catalog};

#[derive(Parser)]
#[command(name = "porder", about = "Convergence-rate experiments and sequence classification")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// List the registered experiments.
    List {
        /// Emit the listing as JSON.
        #[arg(long)]
        json: bool,
        /// List the problem catalog instead of the experiments.
        #[arg(long)]
        catalog: bool,
    },
    /// Run one experiment and report measured-versus-predicted rates.
    Run {
        /// Registered experiment name.
        name: String,
        /// Parameter override, repeatable: --set key=value.
        #[arg(long = "set", value_name = "KEY=VALUE")]
        set: Vec<String>,
        /// Directory for emitted series and the JSON report.
        #[arg(long, value_name = "DIR")]
        out: Option<PathBuf>,
        /// Which artifacts to write under --out (default: both).
        #[arg(long, value_enum)]
        format: Option<FormatArg>,
        /// JSON config file; command-line flags take precedence over it.
        #[arg(long, value_name = "FILE")]
        config: Option<PathBuf>,
    },
    /// Classify an error sequence stored as CSV (k,lambda,is_zero) or JSON.
    Classify {
        file: PathBuf,
        /// Emit the report as JSON.
        #[arg(long)]
        json: bool,
        /// Leading iterations to discard before fitting.
        #[arg(long, default_value_t = 5)]
        burn_in: u64,
    },
    /// Solve the K-point characteristic equation q^K = q^(K-1) + ... + q + nu.
    Charroot {
        /// Number of interpolation points.
        #[arg(short = 'K', long = "K", value_name = "INT")]
        k: u32,
        /// Hoelder exponent in (0, 1].
        #[arg(long, value_name = "REAL")]
        nu: f64,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum FormatArg {
    Csv,
    Json,
    Both,
}

impl From<FormatArg> for OutputFormat {
    fn from(f: FormatArg) -> Self {
        match f {
            FormatArg::Csv => OutputFormat::Csv,
            FormatArg::Json => OutputFormat::Json,
            FormatArg::Both => OutputFormat::Both,
        }
    }
}

fn fail(code: u8, msg: impl std::fmt::Display) -> ExitCode {
    eprintln!("error: {msg}");
    ExitCode::from(code)
}

fn main() -> ExitCode {
    // Die quietly when the output pipe closes (porder list | head).
    #[cfg(unix)]
    unsafe {
        libc::signal(libc::SIGPIPE, libc::SIG_DFL);
    }
    let cli = Cli::parse();
    match cli.cmd {
        Cmd::List { json, catalog } => {
            if catalog {
                let listing = catalog_listing(&standard_catalog());
                println!("{}", serde_json::to_string_pretty(&listing).unwrap());
            } else if json {
                println!("{}", serde_json::to_string_pretty(&list_experiments()).unwrap());
            } else {
                for def in REGISTRY {
                    println!("{:24} [fig {}] {}", def.name, def.figure, def.description);
                }
            }
            ExitCode::SUCCESS
        }
        Cmd::Run {
            name,
            set,
            out,
            format,
            config,
        } => run_cmd(name, set, out, format, config),
        Cmd::Classify { file, json, burn_in } => {
            let cfg = ClassifyConfig {
                burn_in,
                ..ClassifyConfig::default()
            };
            match classify_file(&file, &cfg) {
                Ok(report) => {
                    if json {
                        let v = serde_json::json!({
                            "model": report.best_model.name(),
                            "p_base": report.p_base,
                            "residual": report.residual,
                            "qup": format!("{:?}", report.qup_verdict),
                            "up": format!("{:?}", report.up_verdict),
                        });
                        println!("{}", serde_json::to_string_pretty(&v).unwrap());
                    } else {
                        print!("{}", format_rate_report(&report));
                    }
                    ExitCode::SUCCESS
                }
                Err(ExperimentError::Io(msg)) => fail(2, msg),
                Err(ExperimentError::Rate(e)) => fail(2, e),
                Err(e) => fail(3, e),
            }
        }
        Cmd::Charroot { k, nu } => match char_root(k, nu) {
            Ok(root) => {
                println!("{root:.15}");
                ExitCode::SUCCESS
            }
            Err(e) => fail(2, e),
        },
    }
}

/// File-backed config fields; all optional, flags win over each one.
#[derive(serde::Deserialize, Default)]
struct FileConfig {
    #[serde(default)]
    overrides: BTreeMap<String, f64>,
    #[serde(default)]
    out_dir: Option<PathBuf>,
    #[serde(default)]
    format: Option<String>,
}

fn run_cmd(
    name: String,
    set: Vec<String>,
    out: Option<PathBuf>,
    format: Option<FormatArg>,
    config_path: Option<PathBuf>,
) -> ExitCode {
    let mut config = ExperimentConfig::new(&name);

    if let Some(path) = config_path {
        let text = match fs::read_to_string(&path) {
            Ok(t) => t,
            Err(e) => return fail(2, format!("cannot read {}: {e}", path.display())),
        };
        let file: FileConfig = match serde_json::from_str(&text) {
            Ok(f) => f,
            Err(e) => return fail(2, format!("bad config file {}: {e}", path.display())),
        };
        config.overrides = file.overrides;
        config.out_dir = file.out_dir;
        if let Some(f) = file.format {
            config.format = match f.as_str() {
                "csv" => OutputFormat::Csv,
                "json" => OutputFormat::Json,
                "both" => OutputFormat::Both,
                other => return fail(2, format!("bad format in config file: {other}")),
            };
        }
    }

    for pair in &set {
        let Some((key, value)) = pair.split_once('=') else {
            return fail(2, format!("--set expects key=value, got {pair}"));
        };
        let Ok(value) = value.parse::<f64>() else {
            return fail(2, format!("--set {key}: {value} is not a number"));
        };
        config.overrides.insert(key.to_string(), value);
    }
    if let Some(dir) = out {
        config.out_dir = Some(dir);
    }
    if let Some(f) = format {
        config.format = f.into();
    }

    if find_experiment(&name).is_none() {
        return fail(2, format!("unknown experiment: {name}"));
    }
    match run_experiment(&config) {
        Ok(report) => {
            print_report(&report);
            if report.all_pass {
                ExitCode::SUCCESS
            } else {
                ExitCode::from(1)
            }
        }
        Err(e) if e.is_config() => fail(2, e),
        Err(e) => fail(3, e),
    }
}

fn print_report(report: &ExperimentReport) {
    println!("experiment: {}", report.experiment);
    for run in &report.runs {
        let status = if run.pass { "PASS" } else { "FAIL" };
        let detail = match &run.reason {
            Some(reason) => format!("  ({reason})"),
            None => String::new(),
        };
        println!(
            "  {status}  {:24} measured {:<12.8} predicted {:<12.8} gap {:.3e}{detail}",
            run.name, run.measured, run.predicted, run.gap
        );
    }
    let verdict = if report.all_pass { "all checks passed" } else { "FAILURES PRESENT" };
    println!("result: {verdict}");
}
