use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use contact_blender::config::{RunConfig, Suite};
use contact_blender::report::{self, Report};
use contact_blender::{Error, Exec, Result};

/// Verification driver for the contact blender laboratory.
#[derive(Parser, Debug)]
#[command(name = "blender-lab", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Run one suite, or `all`, and write the report.
    Verify {
        /// Suite name or `all`.
        suite: String,
        /// TOML configuration; defaults apply to absent keys.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Comma-separated perturbation sizes, overriding run.r.
        #[arg(long, value_delimiter = ',')]
        r: Option<Vec<f64>>,
        #[arg(long)]
        seed: Option<u64>,
        /// Output directory, overriding output.dir.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Print the JSON report on stdout instead of the summary.
        #[arg(long)]
        json: bool,
        /// Also write summary.csv.
        #[arg(long)]
        csv: bool,
        /// Disable the thread pool.
        #[arg(long)]
        sequential: bool,
    },
    /// Print the default configuration as TOML.
    DefaultConfig,
}

fn load_config(path: Option<&PathBuf>) -> Result<RunConfig> {
    match path {
        Some(p) => {
            let text = fs::read_to_string(p).map_err(|e| Error::config("config", format!("{}: {e}", p.display())))?;
            RunConfig::from_toml(&text)
        }
        None => Ok(RunConfig::default()),
    }
}

fn write(path: PathBuf, text: &str) -> Result<()> {
    fs::write(&path, text).map_err(|e| Error::config("output.dir", format!("{}: {e}", path.display())))
}

fn summary(rep: &Report) -> String {
    let mut out = String::new();
    for s in &rep.suites {
        for c in &s.checks {
            let r = c.r.map(|r| format!("r={r}")).unwrap_or_default();
            let margin = c.margin.map(|m| format!("{m:+.3e}")).unwrap_or_else(|| "-".into());
            out.push_str(&format!("{:<13} {:<38} {:<8} {:<12} {margin}\n", c.verdict.to_string(), c.name, r, c.anchor));
        }
        out.push_str(&format!("== {} {}\n", s.suite, s.verdict));
    }
    out.push_str(&format!("== overall {}\n", rep.verdict));
    out
}

#[allow(clippy::too_many_arguments)]
fn verify(
    suite: &str,
    config: Option<PathBuf>,
    r: Option<Vec<f64>>,
    seed: Option<u64>,
    out: Option<PathBuf>,
    json: bool,
    csv: bool,
    sequential: bool,
) -> Result<i32> {
    let mut cfg = load_config(config.as_ref())?;
    if suite != "all" {
        cfg.run.suites = vec![suite.parse::<Suite>()?];
    }
    if let Some(r) = r {
        cfg.run.r = r;
    }
    if let Some(seed) = seed {
        cfg.run.seed = seed;
    }
    if let Some(out) = out {
        cfg.output.dir = out;
    }
    cfg.output.csv |= csv;
    let exec = if sequential { Exec::Sequential } else { Exec::default() };
    let (rep, timing) = report::run(&cfg, exec)?;

    let dir = &cfg.output.dir;
    fs::create_dir_all(dir).map_err(|e| Error::config("output.dir", format!("{}: {e}", dir.display())))?;
    if cfg.output.json {
        write(dir.join("report.json"), &rep.to_json())?;
    }
    write(
        dir.join("timing.json"),
        &serde_json::to_string_pretty(&timing).expect("timing serializes"),
    )?;
    if cfg.output.csv {
        write(dir.join("summary.csv"), &rep.to_csv()?)?;
    }
    if json {
        println!("{}", rep.to_json());
    } else {
        print!("{}", summary(&rep));
    }
    Ok(rep.exit_code())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 3 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let result = match cli.command {
        Command::Verify {
            suite,
            config,
            r,
            seed,
            out,
            json,
            csv,
            sequential,
        } => verify(&suite, config, r, seed, out, json, csv, sequential),
        Command::DefaultConfig => {
            print!("{}", RunConfig::default().to_toml());
            Ok(0)
        }
    };
    match result {
        Ok(code) => ExitCode::from(code as u8),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(3)
        }
    }
}
