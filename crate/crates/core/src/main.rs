use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use dg_select::harness::{
    csv_string, evaluate_bound_table, resolve_out_dir, run_experiment, CsvTable, DataSource, ExperimentConfig,
    SynthData, Task,
};
use dg_select::selection::CGrid;
use dg_select::{Error, Result};

#[derive(Parser, Debug)]
#[command(name = "dg-select", version, about = "Domain-wise model selection and generalisation bounds")]
struct Cli {
    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Root seed, overriding the config.
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Run the experiment described by a TOML config.
    Run {
        config: PathBuf,
        /// Output directory, overriding the config.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Accuracy-vs-C sweep on a synthetic environment.
    Sweep {
        /// Comma-separated key=value pairs: n, m, d, k, shift, noise, sep.
        #[arg(long, default_value = "")]
        synth: String,
        /// `LO..HI` or a comma-separated list of log2 C values.
        #[arg(long, default_value = "-10..10", allow_hyphen_values = true)]
        grid: String,
        #[arg(long, default_value_t = 5)]
        seeds: usize,
        #[arg(long, env = "DG_SELECT_OUT")]
        out: Option<PathBuf>,
    },
    /// Evaluate bounds for each row of a CSV of inputs.
    Bounds {
        /// CSV with columns empirical_risk,rad_mn,rad_n,m,n,delta[,kappa].
        #[arg(long)]
        inputs: PathBuf,
        /// Output file (default: stdout).
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn parse_synth(spec: &str) -> Result<SynthData> {
    let mut s = SynthData {
        n_domains: 4,
        m_per_domain: 500,
        d: 20,
        k: 2,
        shift_scale: 3.0,
        label_noise: 0.0,
        class_separation: 2.0,
    };
    for pair in spec.split(',').map(str::trim).filter(|p| !p.is_empty()) {
        let (key, value) = pair
            .split_once('=')
            .ok_or_else(|| Error::Config(format!("--synth: expected key=value, got {pair:?}")))?;
        let bad = || Error::Config(format!("--synth: bad value for {key}: {value:?}"));
        let int = || value.parse::<usize>().map_err(|_| bad());
        let real = || value.parse::<f64>().map_err(|_| bad());
        match key {
            "n" | "n_domains" => s.n_domains = int()?,
            "m" | "m_per_domain" => s.m_per_domain = int()?,
            "d" => s.d = int()?,
            "k" => s.k = int()?,
            "shift" | "shift_scale" => s.shift_scale = real()?,
            "noise" | "label_noise" => s.label_noise = real()?,
            "sep" | "class_separation" => s.class_separation = real()?,
            _ => return Err(Error::Config(format!("--synth: unknown key {key:?}"))),
        }
    }
    Ok(s)
}

fn parse_grid(text: &str) -> Result<CGrid> {
    let bad = || Error::Config(format!("--grid: expected LO..HI or a list, got {text:?}"));
    if let Some((lo, hi)) = text.split_once("..") {
        let lo: i32 = lo.trim().parse().map_err(|_| bad())?;
        let hi: i32 = hi.trim().parse().map_err(|_| bad())?;
        return CGrid::range(lo, hi).map_err(|e| Error::Config(format!("--grid: {e}")));
    }
    let values = text
        .split(',')
        .map(|v| v.trim().parse::<i32>().map_err(|_| bad()))
        .collect::<Result<Vec<_>>>()?;
    CGrid::new(values).map_err(|e| Error::Config(format!("--grid: {e}")))
}

fn write_output(out: Option<&Path>, text: &str) -> Result<()> {
    match out {
        Some(p) => fs::write(p, text)?,
        None => std::io::stdout().write_all(text.as_bytes())?,
    }
    Ok(())
}

fn report(dir: &Path, manifest: &dg_select::harness::RunManifest) {
    for a in &manifest.artifacts {
        eprintln!("wrote {}", dir.join(&a.file).display());
    }
}

fn run(cli: Cli) -> Result<()> {
    if let Some(n) = cli.threads {
        if n == 0 {
            return Err(Error::Config("--threads must be at least 1".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| Error::Config(e.to_string()))?;
    }
    match cli.command {
        Command::Run { config, out } => {
            let mut cfg = ExperimentConfig::load(&config)?;
            if let Some(seed) = cli.seed {
                cfg.seed = seed;
            }
            let dir = resolve_out_dir(out.as_deref(), cfg.out_dir.as_deref())?;
            let manifest = run_experiment(&cfg, &dir)?;
            report(&dir, &manifest);
        }
        Command::Sweep { synth, grid, seeds, out } => {
            let cfg = ExperimentConfig {
                task: Task::CSweep,
                seed: cli.seed.unwrap_or(0),
                n_seeds: seeds,
                out_dir: None,
                data: DataSource::Synth(parse_synth(&synth)?),
                grid: parse_grid(&grid)?,
                solver: Default::default(),
                protocol: Default::default(),
                mlp: Default::default(),
                bounds: Default::default(),
            };
            cfg.validate()?;
            let dir = resolve_out_dir(out.as_deref(), None)?;
            let manifest = run_experiment(&cfg, &dir)?;
            report(&dir, &manifest);
        }
        Command::Bounds { inputs, out } => {
            let table = CsvTable::load(&inputs).map_err(|e| e.context(format!("reading {}", inputs.display())))?;
            let rows = evaluate_bound_table(&table)?;
            write_output(out.as_deref(), &csv_string(&rows)?)?;
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
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
