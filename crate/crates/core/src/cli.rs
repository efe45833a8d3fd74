//! `irsloc` command line: config files, subcommands and output files.

use std::ffi::OsString;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};

use crate::association::SearchMode;
use crate::error::{Error, Result};
use crate::montecarlo::{
    oracle_check, read_records, run_experiment, summarize, summary_table, write_file, Experiment, RangeSource, SweepGrid,
    TrialConfig, SUMMARY_CSV, SUMMARY_JSON,
};

/// Environment variable that overrides the configured base seed.
pub const SEED_ENV: &str = "IRSLOC_SEED";
pub const CONFIG_FILE: &str = "config.toml";

pub const EXIT_OK: i32 = 0;
pub const EXIT_RUNTIME: i32 = 1;
pub const EXIT_USAGE: i32 = 2;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RunSettings {
    pub seed: u64,
    pub out_dir: String,
    /// Also write every trial's taps and received samples as CSV.
    pub dump_channels: bool,
}

impl Default for RunSettings {
    fn default() -> Self {
        Self {
            seed: 1,
            out_dir: "irsloc-out".into(),
            dump_channels: false,
        }
    }
}

/// Everything a run needs. Serialized as a flat document of dotted keys.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RunConfig {
    pub run: RunSettings,
    pub trial: TrialConfig,
    pub sweep: SweepGrid,
}

impl RunConfig {
    pub fn validate(&self) -> Result<()> {
        self.trial.validate()?;
        if self.sweep.n_trials == 0 {
            return Err(Error::InvalidConfig("sweep.n_trials must be at least 1".into()));
        }
        if self.sweep.k.is_empty() || self.sweep.k.contains(&0) {
            return Err(Error::InvalidConfig("sweep.k must list positive target counts".into()));
        }
        if self.sweep.power_dbm.is_empty() || self.sweep.power_dbm.iter().any(|p| !p.is_finite()) {
            return Err(Error::InvalidConfig("sweep.power_dbm must list finite powers".into()));
        }
        if self.sweep.modes.is_empty() {
            return Err(Error::InvalidConfig("sweep.modes must not be empty".into()));
        }
        Ok(())
    }

    /// Parses a flat dotted-key document. Keys not present in the effective
    /// config are rejected.
    pub fn from_toml_str(text: &str, origin: &str) -> Result<Self> {
        let parse_err = |message: String| Error::Parse {
            path: origin.to_string(),
            message,
        };
        let table: toml::Table = toml::from_str(text).map_err(|e| parse_err(e.to_string()))?;
        let cfg: RunConfig = toml::Value::Table(table.clone())
            .try_into()
            .map_err(|e: toml::de::Error| parse_err(e.to_string()))?;
        let known: Vec<String> = flat_entries(&to_json(&cfg)?).into_iter().map(|(k, _)| k).collect();
        let given = flat_entries(&serde_json::to_value(&table).map_err(|e| parse_err(e.to_string()))?);
        if let Some((key, _)) = given.iter().find(|(k, _)| !known.contains(k)) {
            return Err(parse_err(format!("unknown key `{key}`")));
        }
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml_str(&text, &path.display().to_string())
    }

    pub fn to_toml_string(&self) -> Result<String> {
        let mut out = String::new();
        for (key, value) in flat_entries(&to_json(self)?) {
            out.push_str(&format!("{key} = {}\n", json_to_toml(&value)));
        }
        Ok(out)
    }

    pub fn experiment(&self) -> Experiment {
        Experiment {
            base: self.trial.clone(),
            grid: self.sweep.clone(),
            base_seed: self.run.seed,
        }
    }
}

fn to_json<T: Serialize>(v: &T) -> Result<serde_json::Value> {
    serde_json::to_value(v).map_err(|e| Error::InvalidConfig(e.to_string()))
}

/// Leaves of a JSON tree keyed by their dotted path. Arrays are leaves.
fn flat_entries(v: &serde_json::Value) -> Vec<(String, serde_json::Value)> {
    fn rec(prefix: &str, v: &serde_json::Value, out: &mut Vec<(String, serde_json::Value)>) {
        match v {
            serde_json::Value::Object(map) => {
                for (k, child) in map {
                    let key = if prefix.is_empty() { k.clone() } else { format!("{prefix}.{k}") };
                    rec(&key, child, out);
                }
            }
            serde_json::Value::Null => {}
            leaf => out.push((prefix.to_string(), leaf.clone())),
        }
    }
    let mut out = Vec::new();
    rec("", v, &mut out);
    out
}

fn json_to_toml(v: &serde_json::Value) -> toml::Value {
    match v {
        serde_json::Value::Bool(b) => toml::Value::Boolean(*b),
        serde_json::Value::Number(n) => match n.as_i64() {
            Some(i) => toml::Value::Integer(i),
            None => toml::Value::Float(n.as_f64().unwrap_or(f64::NAN)),
        },
        serde_json::Value::String(s) => toml::Value::String(s.clone()),
        serde_json::Value::Array(a) => toml::Value::Array(a.iter().map(json_to_toml).collect()),
        serde_json::Value::Object(m) => {
            toml::Value::Table(m.iter().map(|(k, v)| (k.clone(), json_to_toml(v))).collect())
        }
        serde_json::Value::Null => toml::Value::String(String::new()),
    }
}

#[derive(Debug, Parser)]
#[command(name = "irsloc", version, about = "Device-free localization with two base stations and one IRS")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run trials for a single configuration.
    Simulate(RunArgs),
    /// Run the configured grid over K, power and search mode.
    Sweep(RunArgs),
    /// Compare pruned and exhaustive search on the same ranges.
    OracleCheck(RunArgs),
    /// Rebuild the summary tables from stored records.
    PlotData(PlotArgs),
}

#[derive(Debug, Args)]
struct RunArgs {
    /// Config file, or `default`.
    #[arg(long, default_value = "default")]
    config: String,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    trials: Option<usize>,
    #[arg(long)]
    mode: Option<SearchMode>,
    #[arg(long = "K", alias = "k")]
    k: Option<usize>,
    /// Transmit power of both BSs (dBm).
    #[arg(long)]
    power: Option<f64>,
    /// Use quantized true ranges instead of the sparse-recovery estimates.
    #[arg(long)]
    oracle_ranges: bool,
    /// Record Phase-II solve times (outputs are then no longer reproducible).
    #[arg(long)]
    timing: bool,
    #[arg(long)]
    dump_channels: bool,
}

#[derive(Debug, Args)]
struct PlotArgs {
    /// Directory holding `records.jsonl`, or the file itself.
    records: PathBuf,
    /// Where to write the tables; defaults to the records directory.
    #[arg(long)]
    out: Option<PathBuf>,
}

impl std::str::FromStr for RangeSource {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "estimated" => Ok(RangeSource::Estimated),
            "oracle" => Ok(RangeSource::Oracle),
            other => Err(Error::InvalidArgument(format!("unknown range source {other:?}"))),
        }
    }
}

enum Failure {
    Usage(Error),
    Runtime(Error),
}

fn usage(e: Error) -> Failure {
    Failure::Usage(e)
}

fn runtime(e: Error) -> Failure {
    Failure::Runtime(e)
}

/// Merges defaults, config file, environment and flags.
fn effective_config(args: &RunArgs, single: bool) -> std::result::Result<RunConfig, Failure> {
    let mut cfg = if args.config == "default" {
        RunConfig::default()
    } else {
        RunConfig::load(Path::new(&args.config)).map_err(usage)?
    };
    if let Ok(v) = std::env::var(SEED_ENV) {
        cfg.run.seed = v
            .trim()
            .parse()
            .map_err(|_| usage(Error::InvalidArgument(format!("{SEED_ENV}={v:?} is not an unsigned integer"))))?;
    }
    if let Some(seed) = args.seed {
        cfg.run.seed = seed;
    }
    if let Some(out) = &args.out {
        cfg.run.out_dir = out.display().to_string();
    }
    if let Some(n) = args.trials {
        cfg.sweep.n_trials = n;
    }
    if let Some(k) = args.k {
        cfg.trial.k = k;
    }
    if let Some(p) = args.power {
        cfg.trial.system.tx_power_dbm = [p, p];
    }
    if let Some(mode) = args.mode {
        cfg.trial.association.mode = mode;
    }
    if args.oracle_ranges {
        cfg.trial.range_source = RangeSource::Oracle;
    }
    if args.timing {
        cfg.trial.record_timing = true;
    }
    if args.dump_channels {
        cfg.run.dump_channels = true;
    }
    if single {
        cfg.sweep.k = vec![cfg.trial.k];
        cfg.sweep.power_dbm = vec![cfg.trial.system.tx_power_dbm[0]];
        cfg.sweep.modes = vec![cfg.trial.association.mode];
    } else if let Some(mode) = args.mode {
        cfg.sweep.modes = vec![mode];
    }
    cfg.validate().map_err(usage)?;
    Ok(cfg)
}

fn run_grid(args: &RunArgs, single: bool) -> std::result::Result<(), Failure> {
    let cfg = effective_config(args, single)?;
    let dir = PathBuf::from(&cfg.run.out_dir);
    std::fs::create_dir_all(&dir).map_err(|e| runtime(Error::io(&dir, e)))?;
    write_file(&dir.join(CONFIG_FILE), cfg.to_toml_string().map_err(runtime)?.as_bytes()).map_err(runtime)?;
    let out = run_experiment(&cfg.experiment(), Some(&dir), cfg.run.dump_channels).map_err(runtime)?;
    print!("{}", summary_table(&out.summary));
    log::info!("wrote {}", dir.display());
    Ok(())
}

fn run_oracle_check(args: &RunArgs) -> std::result::Result<(), Failure> {
    let cfg = effective_config(args, true)?;
    let report = oracle_check(&cfg.trial, cfg.run.seed, cfg.sweep.n_trials).map_err(usage)?;
    if let Some(dir) = &args.out {
        std::fs::create_dir_all(dir).map_err(|e| runtime(Error::io(dir, e)))?;
        write_file(&dir.join(CONFIG_FILE), cfg.to_toml_string().map_err(runtime)?.as_bytes()).map_err(runtime)?;
        let json = serde_json::to_string_pretty(&report).map_err(|e| runtime(Error::InvalidConfig(e.to_string())))?;
        write_file(&dir.join("oracle_check.json"), json.as_bytes()).map_err(runtime)?;
    }
    let rate = report.agreement_rate();
    println!(
        "K={} trials={} eligible={} agreements={} agreement_rate={}",
        report.k,
        report.trials.len(),
        report.eligible,
        report.agreements,
        rate.map_or("NA".to_string(), |r| format!("{:.1}%", 100.0 * r))
    );
    match rate {
        Some(r) if r < 1.0 => Err(runtime(Error::InvalidArgument(format!(
            "pruned and exhaustive search disagree on {} of {} eligible trials",
            report.eligible - report.agreements,
            report.eligible
        )))),
        _ => Ok(()),
    }
}

fn run_plot_data(args: &PlotArgs) -> std::result::Result<(), Failure> {
    let file = if args.records.is_dir() {
        args.records.join(crate::montecarlo::RECORDS_FILE)
    } else {
        args.records.clone()
    };
    let records = read_records(&file).map_err(runtime)?;
    let summary = summarize(&records).map_err(runtime)?;
    let dir = match &args.out {
        Some(d) => d.clone(),
        None => file.parent().map(Path::to_path_buf).unwrap_or_default(),
    };
    std::fs::create_dir_all(&dir).map_err(|e| runtime(Error::io(&dir, e)))?;
    let table = summary_table(&summary);
    write_file(&dir.join(SUMMARY_CSV), table.as_bytes()).map_err(runtime)?;
    if args.out.is_some() {
        let json = serde_json::to_string_pretty(&summary).map_err(|e| runtime(Error::InvalidConfig(e.to_string())))?;
        write_file(&dir.join(SUMMARY_JSON), json.as_bytes()).map_err(runtime)?;
    }
    print!("{table}");
    Ok(())
}

/// Runs the command line and returns the process exit code.
pub fn main<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
        }
    };
    let outcome = match &cli.command {
        Command::Simulate(a) => run_grid(a, true),
        Command::Sweep(a) => run_grid(a, false),
        Command::OracleCheck(a) => run_oracle_check(a),
        Command::PlotData(a) => run_plot_data(a),
    };
    match outcome {
        Ok(()) => EXIT_OK,
        Err(Failure::Usage(e)) => {
            eprintln!("error: {e}");
            EXIT_USAGE
        }
        Err(Failure::Runtime(e)) => {
            eprintln!("error: {e}");
            EXIT_RUNTIME
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_config_round_trips_through_toml() {
        let cfg = RunConfig::default();
        let text = cfg.to_toml_string().unwrap();
        assert!(text.contains("trial.system.n_subcarriers = 2048"));
        assert!(!text.contains('['.to_string().repeat(2).as_str()));
        assert_eq!(RunConfig::from_toml_str(&text, "test").unwrap(), cfg);
    }

    #[test]
    fn partial_config_keeps_defaults() {
        let cfg = RunConfig::from_toml_str("trial.k = 2\nrun.seed = 9\ntrial.system.tx_power_dbm = [19, 19]\n", "t").unwrap();
        assert_eq!(cfg.trial.k, 2);
        assert_eq!(cfg.run.seed, 9);
        assert_eq!(cfg.trial.system.tx_power_dbm, [19.0, 19.0]);
        assert_eq!(cfg.trial.system.n_subcarriers, 2048);
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let err = RunConfig::from_toml_str("trial.kk = 2\n", "t").unwrap_err();
        assert!(err.to_string().contains("trial.kk"), "{err}");
    }

    #[test]
    fn overlapping_allocation_fails_validation() {
        let text = "trial.system.n_subcarriers = 4\ntrial.system.n_taps = 2\ntrial.system.allocation.kind = \"explicit\"\n\
                    trial.system.allocation.bs1 = [1, 2]\ntrial.system.allocation.bs2 = [2, 3, 4]\n";
        let cfg = RunConfig::from_toml_str(text, "t").unwrap();
        let err = cfg.validate().unwrap_err();
        assert!(err.to_string().contains("must be empty"), "{err}");
    }

    #[test]
    fn bad_flag_is_a_usage_error() {
        assert_eq!(main(["irsloc", "simulate", "--bogus"]), EXIT_USAGE);
        assert_eq!(main(["irsloc", "simulate", "--mode", "greedy"]), EXIT_USAGE);
    }
}
