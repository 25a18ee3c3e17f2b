use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use dyconfid::data::{self, container};
use dyconfid::harness::compare::sanitize;
use dyconfid::harness::metrics::METRICS_FILE;
use dyconfid::harness::plot::Series;
use dyconfid::harness::report::correlation_report;
use dyconfid::harness::train::read_summary;
use dyconfid::harness::{self, ExperimentConfig, Grid, Method};
use dyconfid::{Error, Result};

/// Log filter variable, e.g. `DYCONFID_LOG=debug`.
const LOG_ENV: &str = "DYCONFID_LOG";

#[derive(Parser)]
#[command(name = "dyconfid", version, about = "Class-level confidence thresholding for semi-supervised point-cloud classification")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(clap::Args)]
struct ConfigArgs {
    /// TOML experiment config; the built-in benchmark when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Override one field by dotted path, e.g. `run.epochs=20`.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
}

impl ConfigArgs {
    fn load(&self, path: Option<&Path>) -> Result<ExperimentConfig> {
        match path {
            Some(p) => ExperimentConfig::load(p, &self.set),
            None => ExperimentConfig::from_toml_str(&ExperimentConfig::benchmark().to_toml_string(), &self.set),
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Generate the dataset described by a config.
    Generate {
        #[command(flatten)]
        cfg: ConfigArgs,
        /// Output container file.
        #[arg(long)]
        out: PathBuf,
        /// Also write a plain-text export here.
        #[arg(long)]
        text: Option<PathBuf>,
    },
    /// Train one method on one seed.
    Train {
        #[command(flatten)]
        cfg: ConfigArgs,
        #[arg(long)]
        seed: Option<u64>,
        /// e.g. `dyconfidmatch`, `fixmatch:0.9`, `flexmatch:0.95`.
        #[arg(long)]
        method: Option<Method>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run several configs or a built-in grid over their seeds.
    Compare {
        /// One entry per config file; all must share the data spec.
        #[arg(long = "config")]
        configs: Vec<PathBuf>,
        #[arg(long = "set", value_name = "KEY=VALUE")]
        set: Vec<String>,
        /// Expand the (single or built-in) config into a grid:
        /// methods, mapping, constant or components.
        #[arg(long)]
        grid: Option<Grid>,
        /// Add a method variant of the base config (repeatable).
        #[arg(long = "method")]
        methods: Vec<Method>,
        /// Replace the seed list (repeatable).
        #[arg(long = "seed")]
        seeds: Vec<u64>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Correlation report and charts from finished run directories.
    Report {
        /// Run directories, or directories containing them.
        runs: Vec<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or(LOG_ENV, "info")).init();
    let cli = Cli::parse();
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

fn run(command: Command) -> Result<()> {
    match command {
        Command::Generate { cfg, out, text } => {
            let c = cfg.load(cfg.config.as_deref())?;
            let d = data::generate(&c.data)?;
            container::save(&d, &out)?;
            if let Some(t) = text {
                std::fs::write(t, container::to_text(&d))?;
            }
            println!("wrote {} instances to {}", d.instances.len(), out.display());
            Ok(())
        }
        Command::Train { cfg, seed, method, out } => {
            let mut c = cfg.load(cfg.config.as_deref())?;
            if let Some(s) = seed {
                c.run.seed = s;
            }
            if let Some(m) = method {
                c.method = m;
            }
            let errs = c.validate();
            if !errs.is_empty() {
                return Err(Error::Config(errs));
            }
            let artifact = harness::run_experiment(&c)?;
            let dir = out.or_else(|| c.out_dir.clone());
            if let Some(dir) = &dir {
                harness::write_run(&artifact, dir)?;
            }
            println!("{}", serde_json::to_string_pretty(&artifact.summary)?);
            Ok(())
        }
        Command::Compare { configs, set, grid, methods, seeds, out } => {
            let args = ConfigArgs { config: None, set };
            let mut list = if configs.is_empty() {
                vec![args.load(None)?]
            } else {
                configs.iter().map(|p| args.load(Some(p))).collect::<Result<Vec<_>>>()?
            };
            if let Some(g) = grid {
                if list.len() != 1 {
                    return Err(Error::config("--grid takes a single base config"));
                }
                list = harness::grid(&list[0], g);
            }
            if !methods.is_empty() {
                let base = list[0].clone();
                list.extend(methods.into_iter().map(|m| {
                    let mut c = base.clone();
                    c.name = Some(m.to_string());
                    c.method = m;
                    c.run.pin_thresholds = false;
                    if m != Method::DyConfidMatch {
                        c.run.resample_enabled = false;
                    }
                    c
                }));
            }
            if !seeds.is_empty() {
                for c in &mut list {
                    c.seeds = seeds.clone();
                }
            }
            let out = out.or_else(|| list[0].out_dir.clone());
            let cmp = harness::compare(&list, out.as_deref())?;
            print!("{}", cmp.to_csv());
            Ok(())
        }
        Command::Report { runs, out } => report(&runs, &out),
    }
}

/// Every directory at or one level below `root` that holds a metrics file.
fn run_dirs(root: &Path) -> Result<Vec<PathBuf>> {
    if root.join(METRICS_FILE).is_file() {
        return Ok(vec![root.to_path_buf()]);
    }
    if !root.is_dir() {
        return Err(Error::InvalidInput(format!("{}: not a run directory", root.display())));
    }
    let mut entries: Vec<PathBuf> = std::fs::read_dir(root)?.map(|e| e.map(|e| e.path())).collect::<std::io::Result<_>>()?;
    entries.sort();
    let mut found = Vec::new();
    for e in entries.into_iter().filter(|e| e.is_dir()) {
        found.extend(run_dirs(&e)?);
    }
    Ok(found)
}

fn report(roots: &[PathBuf], out: &Path) -> Result<()> {
    let mut series: Vec<Series> = Vec::new();
    for root in roots {
        for dir in run_dirs(root)? {
            let metrics = harness::read_metrics(&dir)?;
            let label = match read_summary(&dir) {
                Ok(s) => format!("{} seed {}", s.label, s.seed),
                Err(_) => dir.display().to_string(),
            };
            series.push((label, metrics));
        }
    }
    if series.is_empty() {
        println!("no runs found");
        return Ok(());
    }
    std::fs::create_dir_all(out)?;
    let mut summary = String::from("run,r\n");
    for (label, metrics) in &series {
        let Some(rep) = correlation_report(metrics) else { continue };
        let r = rep.r.map_or_else(|| "undefined".to_string(), |r| r.to_string());
        println!("{label}: r = {r}");
        summary.push_str(&format!("{},{}\n", sanitize(label), rep.r.map_or_else(String::new, |r| r.to_string())));
        std::fs::write(out.join(format!("correlation_{}.csv", sanitize(label))), rep.to_csv())?;
    }
    std::fs::write(out.join("correlation.csv"), summary)?;
    for p in harness::emit_plots(&series, out)? {
        println!("wrote {}", p.display());
    }
    Ok(())
}
