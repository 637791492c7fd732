//! JSON config files merged with command-line overrides.

use std::fs;
use std::path::{Path, PathBuf};

use clap::Args;
use gasflow::ParamSet;
use serde::de::DeserializeOwned;

use crate::CliError;

#[derive(Args, Debug, Clone, Default)]
pub struct Common {
    /// JSON config; flags given on the command line take precedence.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Directory for the output files.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Validate the configuration and stop.
    #[arg(long)]
    pub dry_run: bool,
}

pub fn load<T: DeserializeOwned + Default>(path: Option<&Path>) -> Result<T, CliError> {
    let Some(path) = path else {
        return Ok(T::default());
    };
    let text = fs::read_to_string(path).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
}

/// Overrides `slot` when the flag was given.
pub fn set<T>(slot: &mut T, flag: Option<T>) {
    if let Some(v) = flag {
        *slot = v;
    }
}

pub fn parse_list(s: &str) -> Result<Vec<f64>, String> {
    s.split(',').map(|p| p.trim().parse::<f64>().map_err(|e| format!("`{p}`: {e}"))).collect()
}

#[derive(Args, Debug, Clone, Default)]
pub struct ParamFlags {
    #[arg(long)]
    pub gamma: Option<f64>,
    #[arg(long)]
    pub l: Option<f64>,
    #[arg(long)]
    pub mu: Option<f64>,
    #[arg(long)]
    pub mu1: Option<f64>,
    #[arg(long)]
    pub delta: Option<u8>,
    /// Pressure constant of the selected system.
    #[arg(long)]
    pub k: Option<f64>,
    #[arg(long)]
    pub k_s: Option<f64>,
    /// Constant divergence D.
    #[arg(long)]
    pub d: Option<f64>,
    #[arg(long)]
    pub mass: Option<f64>,
    #[arg(long)]
    pub h0: Option<f64>,
}

impl ParamFlags {
    pub fn apply(&self, p: &mut ParamSet) {
        set(&mut p.gamma, self.gamma);
        set(&mut p.l, self.l);
        set(&mut p.mu, self.mu);
        set(&mut p.mu1, self.mu1);
        set(&mut p.delta, self.delta);
        set(&mut p.k, self.k);
        set(&mut p.k_s, self.k_s);
        set(&mut p.d, self.d);
        set(&mut p.mass, self.mass);
        set(&mut p.h0, self.h0);
    }

    pub fn k_given(&self) -> bool {
        self.k.is_some()
    }
}

pub fn positive(name: &str, v: f64) -> Result<(), CliError> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(CliError::Config(format!("`{name}` must be positive, got {v}")))
    }
}

pub fn positive_count(name: &str, v: usize) -> Result<(), CliError> {
    if v > 0 {
        Ok(())
    } else {
        Err(CliError::Config(format!("`{name}` must be positive")))
    }
}
