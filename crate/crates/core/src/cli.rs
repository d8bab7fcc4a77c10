//! Command-line front end: validation, single runs, sweeps and analysis.

use std::collections::BTreeMap;
use std::fs::{self, File, OpenOptions};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use anyhow::{anyhow, bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::analysis::{
    read_responses, regress, run_sweep, write_design_csv, write_regression_csv, write_responses_csv, write_summary_csv,
    AnalysisError, Factor, ResponseRow, SweepSpec,
};
use crate::drs::asset::INTERSECTION_XML;
use crate::drs::{parse_drs, validate_drs, DroneRoadSystem, DrsError};
use crate::engine::{run, write_summaries, SimConfig};

pub const BUILTIN_INTERSECTION: &str = "builtin:intersection";

/// Keys every run config must set.
pub const RUN_REQUIRED: &[&str] = &["drs", "sim.generation_rate", "sim.time"];
/// Keys every sweep config must set.
pub const SWEEP_REQUIRED: &[&str] = &["drs", "sim.time", "sweep.replications"];

#[derive(Debug, Parser)]
#[command(name = "skyways", version, about = "Drone road system simulator")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Check a road system file; exit 1 on findings, 2 if it cannot be read.
    Validate { path: PathBuf },
    /// Run one simulation.
    Run(RunArgs),
    /// Run a replicated factorial sweep, resuming if the output directory
    /// already holds part of it.
    Sweep(SweepArgs),
    /// Recompute regression and summary tables of a sweep directory.
    Analyze { dir: PathBuf },
}

#[derive(Debug, Args)]
pub struct RunArgs {
    #[arg(long)]
    pub config: PathBuf,
    #[arg(long, env = "SKYWAYS_SEED")]
    pub seed: Option<u64>,
    #[arg(long, default_value = "out")]
    pub out: PathBuf,
    /// Set a config key, e.g. `--override stdg.kappa1=100`. Repeatable.
    #[arg(long = "override", value_name = "KEY=VALUE")]
    pub overrides: Vec<String>,
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    #[arg(long, required_unless_present = "resume")]
    pub config: Option<PathBuf>,
    /// Continue the sweep recorded in this directory.
    #[arg(long, conflicts_with_all = ["config", "out"])]
    pub resume: Option<PathBuf>,
    #[arg(long, default_value = "sweep-out")]
    pub out: Option<PathBuf>,
    /// Worker threads.
    #[arg(long, default_value_t = 1)]
    pub parallel: usize,
    /// Seed of the first replication.
    #[arg(long, env = "SKYWAYS_SEED")]
    pub seed: Option<u64>,
    #[arg(long = "override", value_name = "KEY=VALUE")]
    pub overrides: Vec<String>,
}

/// Ordered `key = value` lines; `#` starts a comment line.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ConfigFile {
    pub entries: Vec<(String, String)>,
    /// Relative `drs` paths are resolved against this directory.
    pub base_dir: PathBuf,
}

impl ConfigFile {
    pub fn parse(text: &str, base_dir: &Path) -> Result<Self> {
        let mut cfg = ConfigFile { entries: Vec::new(), base_dir: base_dir.to_path_buf() };
        for (n, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (k, v) = line.split_once('=').ok_or_else(|| anyhow!("line {}: expected `key = value`", n + 1))?;
            let k = k.trim();
            if cfg.get(k).is_some() {
                bail!("line {}: key `{k}` set twice", n + 1);
            }
            cfg.entries.push((k.to_string(), v.trim().to_string()));
        }
        Ok(cfg)
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        Self::parse(&text, path.parent().unwrap_or(Path::new(".")))
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.entries.iter().find(|(k, _)| k == key).map(|(_, v)| v.as_str())
    }

    pub fn set(&mut self, key: &str, value: &str) {
        match self.entries.iter_mut().find(|(k, _)| k == key) {
            Some(e) => e.1 = value.to_string(),
            None => self.entries.push((key.to_string(), value.to_string())),
        }
    }

    /// Applies `KEY=VALUE` overrides in order.
    pub fn apply_overrides(&mut self, overrides: &[String]) -> Result<()> {
        for o in overrides {
            let (k, v) = o.split_once('=').ok_or_else(|| anyhow!("override `{o}` is not KEY=VALUE"))?;
            self.set(k.trim(), v.trim());
        }
        Ok(())
    }

    pub fn render(&self) -> String {
        self.entries.iter().map(|(k, v)| format!("{k} = {v}\n")).collect()
    }

    fn require(&self, keys: &[&str]) -> Result<()> {
        match keys.iter().find(|k| self.get(k).is_none()) {
            Some(k) => bail!("missing config key `{k}`"),
            None => Ok(()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DrsInfo {
    /// `builtin:intersection` or an absolute path.
    pub source: String,
    pub sha256: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Timings {
    pub started_unix: f64,
    /// Filled in once the results are written.
    pub wall_seconds: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub tool: String,
    pub version: String,
    pub command: String,
    /// Effective configuration, as written to the config snapshot.
    pub config: BTreeMap<String, String>,
    pub overrides: Vec<String>,
    pub seeds: Vec<u64>,
    pub drs: DrsInfo,
    pub timings: Timings,
}

impl RunManifest {
    fn new(command: &str, config: &ConfigFile, overrides: &[String], seeds: Vec<u64>, drs: DrsInfo) -> Self {
        let started_unix = SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs_f64()).unwrap_or(0.0);
        RunManifest {
            tool: env!("CARGO_PKG_NAME").into(),
            version: env!("CARGO_PKG_VERSION").into(),
            command: command.into(),
            config: config.entries.iter().cloned().collect(),
            overrides: overrides.to_vec(),
            seeds,
            drs,
            timings: Timings { started_unix, wall_seconds: None },
        }
    }

    fn write(&self, dir: &Path) -> Result<()> {
        let text = serde_json::to_string_pretty(self)?;
        fs::write(dir.join("manifest.json"), text + "\n").context("writing manifest")
    }
}

/// Loads the road system named by a config's `drs` value.
pub fn load_drs(value: &str, base_dir: &Path) -> Result<(DroneRoadSystem, DrsInfo)> {
    let (text, source) = if value == BUILTIN_INTERSECTION {
        (INTERSECTION_XML.to_string(), value.to_string())
    } else {
        let path = base_dir.join(value);
        let text = fs::read_to_string(&path).with_context(|| format!("reading road system {}", path.display()))?;
        let abs = fs::canonicalize(&path).unwrap_or(path);
        (text, abs.display().to_string())
    };
    let drs = parse_drs(&text).with_context(|| format!("parsing road system {source}"))?;
    let sha256 = format!("{:x}", Sha256::digest(text.as_bytes()));
    Ok((drs, DrsInfo { source, sha256 }))
}

/// Builds a simulation config from every non-reserved key.
pub fn sim_config(file: &ConfigFile, reserved: &[&str]) -> Result<SimConfig> {
    let mut cfg = SimConfig::default();
    for (k, v) in &file.entries {
        if k == "drs" || reserved.iter().any(|p| k.starts_with(p)) {
            continue;
        }
        cfg.set(k, v)?;
    }
    cfg.validate()?;
    Ok(cfg)
}

/// Full effective run config: `drs` followed by every simulation key.
fn run_snapshot(drs: &DrsInfo, cfg: &SimConfig) -> ConfigFile {
    let mut out = ConfigFile::default();
    out.set("drs", &drs.source);
    for key in SimConfig::KEYS {
        out.set(key, &cfg.get(key).expect("listed key"));
    }
    out
}

fn parse_levels(key: &str, v: &str) -> Result<Vec<f64>> {
    v.split(',')
        .map(|s| s.trim().parse::<f64>().map_err(|_| anyhow!("{key}: `{}` is not a number", s.trim())))
        .collect()
}

/// Sweep description from a config; `seed` overrides `sweep.seed_base`.
pub fn sweep_spec(file: &ConfigFile, seed: Option<u64>) -> Result<SweepSpec> {
    file.require(SWEEP_REQUIRED)?;
    let base = sim_config(file, &["sweep.", "factor.", "grid."])?;
    let mut factors = Vec::new();
    let mut grid = BTreeMap::new();
    let mut replications = 0;
    let mut seed_base = 1;
    for (k, v) in &file.entries {
        if let Some(name) = k.strip_prefix("factor.") {
            if !SimConfig::KEYS.contains(&name) {
                bail!("unknown config key `{name}` in `{k}`");
            }
            match parse_levels(k, v)?[..] {
                [low, high] => factors.push(Factor::new(name, low, high)),
                _ => bail!("{k}: a factor needs exactly two levels, `low, high`"),
            }
        } else if let Some(name) = k.strip_prefix("grid.") {
            grid.insert(name.to_string(), parse_levels(k, v)?);
        } else if k.starts_with("sweep.") {
            let n = || v.parse::<u64>().map_err(|_| anyhow!("{k}: expected an unsigned integer, got `{v}`"));
            match k.as_str() {
                "sweep.replications" => replications = n()?,
                "sweep.seed_base" => seed_base = n()?,
                _ => bail!("unknown config key `{k}`"),
            }
        }
    }
    let spec = SweepSpec { base, factors, grid, replications, seed_base: seed.unwrap_or(seed_base) };
    spec.validate()?;
    Ok(spec)
}

/// Full effective sweep config.
fn sweep_snapshot(drs: &DrsInfo, spec: &SweepSpec) -> ConfigFile {
    let mut out = run_snapshot(drs, &spec.base);
    out.set("sweep.replications", &spec.replications.to_string());
    out.set("sweep.seed_base", &spec.seed_base.to_string());
    for f in &spec.factors {
        out.set(&format!("factor.{}", f.name), &format!("{}, {}", f.low, f.high));
    }
    for (name, levels) in &spec.grid {
        let l: Vec<String> = levels.iter().map(f64::to_string).collect();
        out.set(&format!("grid.{name}"), &l.join(", "));
    }
    out
}

pub fn cmd_validate(path: &Path) -> Result<ExitCode> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    match parse_drs(&text) {
        Ok(drs) => {
            let findings = validate_drs(&drs);
            for f in &findings {
                println!("{f}");
            }
            if findings.is_empty() {
                println!("{}: ok ({} roads, {} ramps)", path.display(), drs.roads.len(), drs.ramps.len());
                Ok(ExitCode::SUCCESS)
            } else {
                println!("{}: {} finding(s)", path.display(), findings.len());
                Ok(ExitCode::from(1))
            }
        }
        Err(e @ DrsError::Dangling { .. }) => {
            println!("{}: {e}", path.display());
            Ok(ExitCode::from(1))
        }
        Err(e) => Err(anyhow!(e).context(format!("parsing {}", path.display()))),
    }
}

pub fn cmd_run(args: &RunArgs) -> Result<ExitCode> {
    let clock = Instant::now();
    let mut file = ConfigFile::read(&args.config)?;
    file.apply_overrides(&args.overrides)?;
    file.require(RUN_REQUIRED)?;
    let mut cfg = sim_config(&file, &[])?;
    if let Some(seed) = args.seed {
        cfg.seed = seed;
    }
    let (drs, info) = load_drs(file.get("drs").expect("required"), &file.base_dir)?;
    let snapshot = run_snapshot(&info, &cfg);

    fs::create_dir_all(&args.out).with_context(|| format!("creating {}", args.out.display()))?;
    let mut manifest = RunManifest::new("run", &snapshot, &args.overrides, vec![cfg.seed], info);
    manifest.write(&args.out)?;
    fs::write(args.out.join("config.cfg"), snapshot.render())?;

    let out = run(&drs, &cfg)?;
    out.write_series_csv(BufWriter::new(File::create(args.out.join("series.csv"))?))?;
    let summary = out.summary();
    write_summaries(&[summary], BufWriter::new(File::create(args.out.join("summary.csv"))?))?;
    if cfg.event_log {
        let mut w = BufWriter::new(File::create(args.out.join("events.jsonl"))?);
        out.write_events(&mut w)?;
        w.flush()?;
    }
    manifest.timings.wall_seconds = Some(clock.elapsed().as_secs_f64());
    manifest.write(&args.out)?;
    println!(
        "seed {}: injected {}, arrived {}, collided {}, cr {:.4}, as {:.3} m/s",
        summary.seed, summary.total_injected, summary.total_arrived, summary.total_collided, summary.cr, summary.r#as
    );
    Ok(ExitCode::SUCCESS)
}

pub fn cmd_sweep(args: &SweepArgs) -> Result<ExitCode> {
    let clock = Instant::now();
    let (config, out) = match &args.resume {
        Some(dir) => (dir.join("sweep.cfg"), dir.clone()),
        None => (args.config.clone().expect("clap requires it"), args.out.clone().expect("has a default")),
    };
    let mut file = ConfigFile::read(&config)?;
    file.apply_overrides(&args.overrides)?;
    let spec = sweep_spec(&file, args.seed)?;
    let (drs, info) = load_drs(file.get("drs").ok_or_else(|| anyhow!("missing config key `drs`"))?, &file.base_dir)?;
    let snapshot = sweep_snapshot(&info, &spec);

    fs::create_dir_all(&out).with_context(|| format!("creating {}", out.display()))?;
    let snap_path = out.join("sweep.cfg");
    if snap_path.exists() {
        let previous = ConfigFile::read(&snap_path)?;
        if previous.entries != snapshot.entries {
            bail!("{} holds a different sweep; use a fresh output directory", out.display());
        }
    }
    let seeds: Vec<u64> = spec.seeds().collect();
    let mut manifest = RunManifest::new("sweep", &snapshot, &args.overrides, seeds, info);
    manifest.write(&out)?;
    fs::write(&snap_path, snapshot.render())?;
    let points = spec.points()?;
    write_design_csv(&points, BufWriter::new(File::create(out.join("design.csv"))?))?;

    // Keep the rows that survived an interruption, then append as cells finish.
    let responses = out.join("responses.csv");
    let done = if responses.exists() { read_responses(File::open(&responses)?)? } else { Vec::new() };
    let reused = done.len();
    write_responses_csv(&done, File::create(&responses)?, true)?;
    let mut appender = OpenOptions::new().append(true).open(&responses)?;
    let total = points.len() * spec.replications as usize;
    eprintln!("{total} cells, {reused} already done, {} workers", args.parallel.max(1));
    let rows = run_sweep(&drs, &spec, args.parallel, done, |row: &ResponseRow| {
        write_responses_csv(std::slice::from_ref(row), &mut appender, false)?;
        appender.flush().map_err(AnalysisError::from)
    })?;
    write_responses_csv(&rows, BufWriter::new(File::create(&responses)?), true)?;
    analyze(&spec, &rows, &out)?;
    manifest.timings.wall_seconds = Some(clock.elapsed().as_secs_f64());
    manifest.write(&out)?;
    Ok(ExitCode::SUCCESS)
}

pub fn cmd_analyze(dir: &Path) -> Result<ExitCode> {
    let file = ConfigFile::read(&dir.join("sweep.cfg"))?;
    let spec = sweep_spec(&file, None)?;
    let rows = read_responses(File::open(dir.join("responses.csv")).context("reading responses.csv")?)?;
    let expected = spec.points()?.len() * spec.replications as usize;
    if rows.len() < expected {
        println!("{}: {} of {expected} cells done; resume the sweep first", dir.display(), rows.len());
        return Ok(ExitCode::from(1));
    }
    analyze(&spec, &rows, dir)?;
    Ok(ExitCode::SUCCESS)
}

fn analyze(spec: &SweepSpec, rows: &[ResponseRow], dir: &Path) -> Result<()> {
    let fits = regress(spec, rows)?;
    write_regression_csv(&spec.factors, &fits, BufWriter::new(File::create(dir.join("regression.csv"))?))?;
    write_summary_csv(&spec.points()?, rows, BufWriter::new(File::create(dir.join("summary.csv"))?))?;
    for (name, fit) in &fits {
        let Some(contrib) = &fit.contributions else {
            println!("{name}: no variance across design points");
            continue;
        };
        let mut ranked: Vec<(String, f64)> =
            fit.terms.iter().zip(contrib).skip(1).map(|(t, c)| (t.label(&spec.factors), *c)).collect();
        ranked.sort_by(|a, b| b.1.total_cmp(&a.1));
        let top: Vec<String> = ranked.iter().take(3).map(|(l, c)| format!("{l} {c:.1}%")).collect();
        println!("{name}: R2 {:.4}; {}", fit.r2.unwrap_or(f64::NAN), top.join(", "));
    }
    Ok(())
}

pub fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Validate { path } => cmd_validate(path),
        Command::Run(args) => cmd_run(args),
        Command::Sweep(args) => cmd_sweep(args),
        Command::Analyze { dir } => cmd_analyze(dir),
    };
    result.unwrap_or_else(|e| {
        eprintln!("error: {e:#}");
        ExitCode::from(2)
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn config_lines_parse_in_order() {
        let f = ConfigFile::parse("# base\ndrs = builtin:intersection\n\nsim.time=50 \n", Path::new(".")).unwrap();
        assert_eq!(f.entries, vec![("drs".into(), "builtin:intersection".into()), ("sim.time".into(), "50".into())]);
        assert!(ConfigFile::parse("sim.time 50", Path::new(".")).is_err());
        assert!(ConfigFile::parse("a = 1\na = 2", Path::new(".")).is_err());
    }

    #[test]
    fn overrides_replace_or_append() {
        let mut f = ConfigFile::parse("stdg.kappa1 = 1", Path::new(".")).unwrap();
        f.apply_overrides(&["stdg.kappa1=100".into(), "stdg.kappa2 = 5".into()]).unwrap();
        assert_eq!(f.get("stdg.kappa1"), Some("100"));
        assert_eq!(f.get("stdg.kappa2"), Some("5"));
        assert!(f.apply_overrides(&["novalue".into()]).is_err());
    }

    #[test]
    fn missing_and_unknown_keys_are_named() {
        let f = ConfigFile::parse("drs = builtin:intersection\nsim.time = 10", Path::new(".")).unwrap();
        let e = f.require(RUN_REQUIRED).unwrap_err();
        assert!(e.to_string().contains("`sim.generation_rate`"), "{e}");
        let f = ConfigFile::parse("stdg.kapa1 = 3", Path::new(".")).unwrap();
        let e = sim_config(&f, &[]).unwrap_err();
        assert!(e.to_string().contains("stdg.kapa1"), "{e}");
    }

    #[test]
    fn sweep_config_reads_factors_in_file_order() {
        let text = "drs = builtin:intersection\nsim.time = 50\nsim.warmup = 10\nsweep.replications = 2\n\
                    factor.stdg.kappa1 = 1, 100\nfactor.sim.generation_rate = 0.05, 0.2\n\
                    grid.sim.generation_rate = 0.05, 0.1, 0.2\n";
        let spec = sweep_spec(&ConfigFile::parse(text, Path::new(".")).unwrap(), Some(7)).unwrap();
        assert_eq!(spec.factors[0], Factor::new("stdg.kappa1", 1.0, 100.0));
        assert_eq!(spec.factors[1].name, "sim.generation_rate");
        assert_eq!(spec.seed_base, 7);
        assert_eq!(spec.points().unwrap().len(), 4 + 6);

        let bad = text.replace("factor.stdg.kappa1", "factor.stdg.kappa7");
        assert!(sweep_spec(&ConfigFile::parse(&bad, Path::new(".")).unwrap(), None).is_err());
        let three = text.replace("1, 100", "1, 10, 100");
        assert!(sweep_spec(&ConfigFile::parse(&three, Path::new(".")).unwrap(), None).is_err());
    }

    #[test]
    fn snapshot_round_trips_the_config() {
        let (_, info) = load_drs(BUILTIN_INTERSECTION, Path::new(".")).unwrap();
        let mut cfg = SimConfig::default();
        cfg.set("stdg.kappa1", "100").unwrap();
        let snap = run_snapshot(&info, &cfg);
        let again = sim_config(&ConfigFile::parse(&snap.render(), Path::new(".")).unwrap(), &[]).unwrap();
        assert_eq!(again, cfg);
    }
}
