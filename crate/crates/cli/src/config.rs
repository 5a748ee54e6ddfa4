//! Run options shared by every subcommand. Each option can come from a
//! `key = value` config file or from the matching `--key` flag; flags win.

use std::collections::BTreeMap;
use std::fmt::Display;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use clap::Args;

use crate::error::{CliError, Result};

macro_rules! options {
    ($( $field:ident : $ty:ty , $help:literal ; )*) => {
        /// Options accepted by every subcommand.
        #[derive(Debug, Clone, Default, Args)]
        pub struct Options {
            /// Config file of `key = value` lines; `#` starts a comment.
            #[arg(long, value_name = "FILE")]
            pub config: Option<PathBuf>,
            $(
                #[arg(long, help = $help)]
                pub $field: Option<$ty>,
            )*
            /// Run independent work on all cores.
            #[arg(long)]
            pub parallel: bool,
        }

        /// Effective option values after merging the file and the flags.
        #[derive(Debug, Clone, Default, PartialEq)]
        pub struct RunConfig {
            $( pub $field: Option<$ty>, )*
            pub parallel: bool,
        }

        impl RunConfig {
            fn set(&mut self, key: &str, value: &str) -> Result<()> {
                match key {
                    $( stringify!($field) => self.$field = Some(parse_value(key, value)?), )*
                    "parallel" => self.parallel = parse_value(key, value)?,
                    other => return Err(CliError::usage(format!("unknown config key `{other}`"))),
                }
                Ok(())
            }

            fn overlay(&mut self, flags: &Options) {
                $( if let Some(v) = &flags.$field { self.$field = Some(v.clone()); } )*
                self.parallel |= flags.parallel;
            }

            /// Set values as strings, keyed like the config file.
            pub fn entries(&self) -> BTreeMap<String, String> {
                let mut out = BTreeMap::new();
                $( if let Some(v) = &self.$field { out.insert(stringify!($field).to_string(), render(v)); } )*
                out.insert("parallel".to_string(), self.parallel.to_string());
                out
            }
        }
    };
}

options! {
    network: PathBuf, "Road network CSV";
    train: PathBuf, "Training trajectories CSV";
    validation: PathBuf, "Validation trajectories CSV, used for checkpoint selection";
    trajectories: PathBuf, "Trajectories CSV to evaluate or analyse";
    history: PathBuf, "Trajectories CSV forming the record store (defaults to --train)";
    store: PathBuf, "Record store snapshot; loaded when present, written otherwise";
    model: PathBuf, "Model checkpoint (JSON)";
    output: PathBuf, "Output directory";
    algorithm: String, "agg, gru, unite-dis or unite-gen";
    k: usize, "AGG: minimum number of records before the records are used";
    mean_factor: f64, "AGG: fallback mean as a fraction of the speed limit";
    std_factor: f64, "AGG: fallback standard deviation as a fraction of the mean";
    c: usize, "Context width for record selection (0 to 4)";
    delta: f64, "Full time window for record selection, in minutes";
    arrival_mode: String, "departure-only or recorded";
    lr: f64, "Learning rate";
    epochs: usize, "Training epochs";
    batch_size: usize, "Trajectories per optimizer step";
    total_steps: usize, "Stop after this many optimizer steps instead of counting epochs";
    seed: u64, "Random seed";
    a: f64, "Offset added to the ELU output for kappa";
    epsilon: f64, "Lower bound added to kappa, alpha and beta";
    segments: usize, "gen-data: number of road segments";
    trips: usize, "gen-data: number of trajectories";
    weeks: usize, "gen-data: number of weeks spanned by the trajectories";
    route: String, "estimate: comma-separated segment ids";
    departure: f64, "estimate: departure time in seconds since Monday 00:00";
    count_delta: f64, "robustness: window in minutes used to count available records";
    sweep: String, "sweep: fractions or selection";
    fractions: String, "sweep: comma-separated training fractions";
    grid_c: String, "sweep: comma-separated context widths";
    grid_delta: String, "sweep: comma-separated windows in minutes";
}

fn parse_value<T: FromStr>(key: &str, value: &str) -> Result<T>
where
    T::Err: Display,
{
    value
        .parse()
        .map_err(|e| CliError::usage(format!("bad value `{value}` for `{key}`: {e}")))
}

trait Render {
    fn render(&self) -> String;
}

impl Render for PathBuf {
    fn render(&self) -> String {
        self.display().to_string()
    }
}

macro_rules! render_display {
    ($($t:ty),*) => { $( impl Render for $t { fn render(&self) -> String { self.to_string() } } )* };
}

render_display!(String, usize, u64, f64);

fn render<T: Render>(v: &T) -> String {
    v.render()
}

/// Parses `key = value` lines. Keys may use `-` or `_`.
pub fn parse_config_text(text: &str) -> Result<RunConfig> {
    let mut cfg = RunConfig::default();
    for (n, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let Some((key, value)) = line.split_once('=') else {
            return Err(CliError::usage(format!(
                "config line {}: expected `key = value`",
                n + 1
            )));
        };
        let key = key.trim().replace('-', "_");
        cfg.set(&key, value.trim())
            .map_err(|e| CliError::usage(format!("config line {}: {e}", n + 1)))?;
    }
    Ok(cfg)
}

pub fn resolve(flags: &Options) -> Result<RunConfig> {
    let mut cfg = match &flags.config {
        Some(path) => {
            let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
            parse_config_text(&text)?
        }
        None => RunConfig::default(),
    };
    cfg.overlay(flags);
    Ok(cfg)
}

/// Writes the effective configuration in the config file format.
pub fn to_config_text(cfg: &RunConfig) -> String {
    cfg.entries()
        .into_iter()
        .map(|(k, v)| format!("{k} = {v}\n"))
        .collect()
}

pub fn parse_list<T: FromStr>(key: &str, text: &str) -> Result<Vec<T>>
where
    T::Err: Display,
{
    text.split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| parse_value(key, s))
        .collect()
}

pub fn require<'a, T>(value: &'a Option<T>, key: &str) -> Result<&'a T> {
    value.as_ref().ok_or_else(|| {
        CliError::usage(format!(
            "missing required option `--{}`",
            key.replace('_', "-")
        ))
    })
}

pub fn require_existing<'a>(value: &'a Option<PathBuf>, key: &str) -> Result<&'a Path> {
    let path = require(value, key)?;
    if !path.exists() {
        return Err(CliError::usage(format!(
            "`--{}` path {} does not exist",
            key.replace('_', "-"),
            path.display()
        )));
    }
    Ok(path)
}
