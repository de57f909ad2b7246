use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use vlcsim::channel::{compliance, illuminance_map, power_map, ISO_BAND_LX};
use vlcsim::config::SimConfig;
use vlcsim::engine::{compare, run, SimOutput};
use vlcsim::grid::ValueFormat;
use vlcsim::prediction::build_database;
use vlcsim::Error;

/// Indoor visible-light network simulator.
#[derive(Debug, Parser)]
#[command(name = "vlcsim", version)]
struct Cli {
    /// TOML config file; built-in defaults when omitted.
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,
    /// Output directory.
    #[arg(long, global = true, value_name = "DIR", default_value = "out")]
    out: PathBuf,
    /// Config override `section.key=value`; repeatable.
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    overrides: Vec<String>,
    /// Random seed, same as `--set simulation.seed=N`.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Grid step (m) for `map`, cell size (m) for `database`.
    #[arg(long, global = true, value_name = "M")]
    step: Option<f64>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Received-power or illuminance map over the room.
    Map {
        #[arg(long, value_enum)]
        kind: MapKind,
    },
    /// Run the scheme(s) selected in the config.
    Simulate,
    /// Run both schemes and write a side-by-side table.
    Compare,
    /// Export the best-AP table.
    Database,
    /// Check the config and exit.
    Validate,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum MapKind {
    Power,
    Illuminance,
}

const DEFAULT_MAP_STEP_M: f64 = 0.25;

enum Failure {
    Config(String),
    Run(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::Config(_) | Error::Scenario(_) | Error::Parse(_) | Error::PatchTooLarge { .. } => {
                Failure::Config(e.to_string())
            }
            other => Failure::Run(other.to_string()),
        }
    }
}

fn io_err(path: &Path, e: std::io::Error) -> Failure {
    Failure::Run(format!("{}: {e}", path.display()))
}

fn load_config(cli: &Cli) -> Result<SimConfig, Failure> {
    let mut overrides = cli.overrides.clone();
    if let Some(seed) = cli.seed {
        overrides.push(format!("simulation.seed={seed}"));
    }
    let cfg = match &cli.config {
        Some(path) => {
            let text = fs::read_to_string(path)
                .map_err(|e| Failure::Config(format!("{}: {e}", path.display())))?;
            SimConfig::from_toml_with_overrides(&text, &overrides)?
        }
        None => SimConfig::default_with_overrides(&overrides)?,
    };
    Ok(cfg)
}

struct Writer {
    dir: PathBuf,
    header: String,
}

impl Writer {
    fn new(dir: &Path, hash: &str) -> Result<Self, Failure> {
        fs::create_dir_all(dir).map_err(|e| io_err(dir, e))?;
        Ok(Self {
            dir: dir.to_path_buf(),
            header: format!("config_hash={hash}"),
        })
    }

    /// Writes `body` after the `# config_hash=...` line.
    fn write(&self, name: &str, body: &str) -> Result<(), Failure> {
        self.write_raw(name, &format!("# {}\n{body}", self.header))
    }

    fn write_raw(&self, name: &str, text: &str) -> Result<(), Failure> {
        let path = self.dir.join(name);
        fs::write(&path, text).map_err(|e| io_err(&path, e))?;
        println!("wrote {}", path.display());
        Ok(())
    }
}

fn step_or(cli: &Cli, default: f64) -> Result<f64, Failure> {
    match cli.step {
        Some(s) if !(s > 0.0 && s.is_finite()) => Err(Failure::Config(format!("--step must be positive, got {s}"))),
        Some(s) => Ok(s),
        None => Ok(default),
    }
}

fn write_sim_outputs(w: &Writer, out: &SimOutput, cfg: &SimConfig) -> Result<(), Failure> {
    w.write("events.csv", &out.events_csv())?;
    for r in &out.runs {
        w.write(&format!("trace_{}.csv", r.scheme), &r.trace_csv())?;
    }
    // Paths do not depend on the scheme.
    if let Some(r) = out.runs.first() {
        let dt = cfg.superframe.duration_s;
        let count = (cfg.simulation.duration_s / dt).ceil() as u64;
        for (id, path) in &r.paths {
            w.write(&format!("trajectory_{id}.csv"), &path.to_csv(dt, count))?;
        }
    }
    Ok(())
}

fn execute(cli: &Cli) -> Result<(), Failure> {
    let cfg = load_config(cli)?;
    match &cli.command {
        Command::Validate => {
            println!("config ok (hash {})", cfg.hash());
        }
        Command::Map { kind } => {
            let step = step_or(cli, DEFAULT_MAP_STEP_M)?;
            let scenario = cfg.scenario();
            let w = Writer::new(&cli.out, &cfg.scenario_hash())?;
            let comment = format!("config_hash={}\nstep_m={step}", cfg.scenario_hash());
            match kind {
                MapKind::Power => {
                    let map = power_map(&scenario, step)?;
                    w.write_raw("power_map.csv", &map.to_text(Some(&comment), ValueFormat::Sig9))?;
                }
                MapKind::Illuminance => {
                    let map = illuminance_map(&scenario, step)?;
                    w.write_raw("illuminance_map.csv", &map.to_text(Some(&comment), ValueFormat::Sig9))?;
                    let c = compliance(&map, ISO_BAND_LX);
                    let report = format!(
                        "metric,value\nmin_lx,{}\nmax_lx,{}\nband_low_lx,{}\nband_high_lx,{}\nfraction_inside,{}\n",
                        c.min_lx, c.max_lx, ISO_BAND_LX.0, ISO_BAND_LX.1, c.fraction_inside
                    );
                    w.write("compliance.csv", &report)?;
                    println!(
                        "illuminance {:.1}..{:.1} lx, {:.4} of points inside {}..{} lx",
                        c.min_lx, c.max_lx, c.fraction_inside, ISO_BAND_LX.0, ISO_BAND_LX.1
                    );
                }
            }
        }
        Command::Database => {
            let cell = step_or(cli, cfg.prediction.cell_size_m)?;
            let db = build_database(&cfg.scenario(), cell)?;
            let w = Writer::new(&cli.out, &cfg.scenario_hash())?;
            let comment = format!("config_hash={}\ncell_size_m={cell}", cfg.scenario_hash());
            w.write_raw("database.csv", &db.to_text(Some(&comment)))?;
        }
        Command::Simulate => {
            let out = run(&cfg)?;
            let w = Writer::new(&cli.out, &cfg.hash())?;
            w.write("metrics.csv", &out.metrics.to_csv())?;
            w.write("metrics.txt", &out.metrics.to_text())?;
            write_sim_outputs(&w, &out, &cfg)?;
            print!("{}", out.metrics.to_text());
        }
        Command::Compare => {
            let (cmp, out) = compare(&cfg)?;
            let w = Writer::new(&cli.out, &cfg.hash())?;
            w.write("comparison.csv", &cmp.to_csv())?;
            w.write("comparison.txt", &cmp.to_text())?;
            write_sim_outputs(&w, &out, &cfg)?;
            print!("{}", cmp.to_text());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Config(msg)) => {
            eprintln!("config error: {msg}");
            ExitCode::from(2)
        }
        Err(Failure::Run(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
    }
}
