//! `geoflow <module> <subcommand> --config <file> [--seed N] [--out DIR]`
//!
//! Exit status: 0 on success, 1 on numeric failure, 2 on usage or config
//! errors.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;
use geoflow_core::runner::{init_thread_pool_from_env, parse_config, run_experiment, run_sweep, ExperimentConfig, Module};

#[derive(Debug, Parser)]
#[command(name = "geoflow", version, about = "Numerical laboratory for ideal-fluid geometry")]
struct Cli {
    /// euler2d, zeitlin, pv, sticky, madelung, filament, topo3d or entropy.
    module: String,
    /// Module subcommand, e.g. `run`, `verify`, `helicity`.
    subcommand: String,
    /// Flat `key = value` config file.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Overrides the config seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Overrides the output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Runs this many consecutive seeds starting at the configured one.
    #[arg(long)]
    sweep: Option<u64>,
    /// Matrix size (zeitlin).
    #[arg(long)]
    n: Option<u64>,
    /// plane, half_plane, sphere or torus (pv).
    #[arg(long)]
    geometry: Option<String>,
    /// circle, helix or knot (filament).
    #[arg(long)]
    shape: Option<String>,
    /// GFL1 velocity file (topo3d).
    #[arg(long)]
    input: Option<PathBuf>,
}

fn usage(msg: impl std::fmt::Display) -> ExitCode {
    eprintln!("geoflow: {msg}");
    ExitCode::from(2)
}

fn build_config(cli: &Cli) -> Result<ExperimentConfig, String> {
    let module: Module = cli.module.parse()?;
    let mut cfg = match &cli.config {
        Some(path) => {
            let text = std::fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
            // CLI seed may satisfy a missing seed, so validate after overrides
            let text = match cli.seed {
                Some(s) if !text.lines().any(|l| l.trim_start().starts_with("seed")) => format!("seed = {s}\n{text}"),
                _ => text,
            };
            parse_config(&text).map_err(|errs| {
                errs.iter()
                    .map(|e| format!("{}: {e}", path.display()))
                    .collect::<Vec<_>>()
                    .join("\n")
            })?
        }
        None => {
            let mut c = ExperimentConfig::new(module);
            c.seed = cli.seed;
            c
        }
    };
    if cfg.experiment != module {
        return Err(format!("config describes '{}' but the command line asks for '{module}'", cfg.experiment));
    }
    cfg.subcommand = cli.subcommand.clone();
    if let Some(s) = cli.seed {
        cfg.seed = Some(s);
    }
    if let Some(o) = &cli.out {
        cfg.output = o.clone();
    }
    let overrides = [
        ("n", cli.n.map(|v| v.to_string())),
        ("geometry", cli.geometry.clone()),
        ("shape", cli.shape.clone()),
        ("input", cli.input.as_ref().map(|p| p.display().to_string())),
    ];
    for (key, value) in overrides {
        if let Some(v) = value {
            cfg.set(key, &v).map_err(|e| format!("--{key}: {e}"))?;
        }
    }
    if cli.input.is_some() {
        cfg.set("source", "file").map_err(|e| e.to_string())?;
    }
    // re-run the whole-file checks on the final config
    parse_config(&cfg.to_text()).map_err(|errs| errs.iter().map(|e| e.to_string()).collect::<Vec<_>>().join("\n"))
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Err(e) = init_thread_pool_from_env() {
        return usage(e);
    }
    let cfg = match build_config(&cli) {
        Ok(c) => c,
        Err(e) => return usage(e),
    };
    match cli.sweep {
        None => match run_experiment(&cfg) {
            Ok(m) => {
                println!("{}: wrote {} files to {}", cfg.experiment, m.files.len(), cfg.output.display());
                ExitCode::SUCCESS
            }
            Err(e) => {
                eprintln!("geoflow: {e}");
                ExitCode::from(e.exit_code() as u8)
            }
        },
        Some(count) => {
            let start = cfg.seed.unwrap_or(0);
            let seeds: Vec<u64> = (0..count).map(|k| start.wrapping_add(k)).collect();
            let mut worst = 0;
            for (s, r) in seeds.iter().zip(run_sweep(&cfg, &seeds)) {
                match r {
                    Ok(m) => println!("seed {s}: wrote {} files", m.files.len()),
                    Err(e) => {
                        eprintln!("geoflow: seed {s}: {e}");
                        worst = worst.max(e.exit_code());
                    }
                }
            }
            ExitCode::from(worst as u8)
        }
    }
}
