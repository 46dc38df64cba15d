//! Experiment configuration: a TOML file merged with command-line flags.
//!
//! ```toml
//! seed = 2024                  # required in a file
//! preset = "remark-smaller"
//! n = [1, 2, 4, 8]
//! phi = "identity"
//! tolerance = 1e-9
//!
//! [model]                      # or: model = "scenario.toml"
//! horizon = 4
//! step = { kind = "maximal", lo = -1.0, hi = 1.0 }
//! map = { kind = "identity" }
//! ```
//!
//! Flags override file values; `SUBLINERGO_OUT` overrides the output
//! directory only.

use std::fmt;
use std::path::{Path, PathBuf};

use clap::ValueEnum;
use serde::{Deserialize, Serialize};
use sublinergo::dp::SequentialModel;
use sublinergo::gsde::CoefficientTable;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Experiment {
    Lln,
    Slln,
    Gnormal,
    Gbm,
    Gsde,
    Ergodic,
    Mixing,
    Report,
}

impl Experiment {
    pub fn name(self) -> &'static str {
        match self {
            Experiment::Lln => "lln",
            Experiment::Slln => "slln",
            Experiment::Gnormal => "gnormal",
            Experiment::Gbm => "gbm",
            Experiment::Gsde => "gsde",
            Experiment::Ergodic => "ergodic",
            Experiment::Mixing => "mixing",
            Experiment::Report => "report",
        }
    }
}

impl fmt::Display for Experiment {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Sequential model given inline or as a path to a scenario file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ModelSource {
    File(PathBuf),
    Inline(SequentialModel),
}

/// Symbolic point given as an explicit word.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WordSpec {
    pub word: Vec<u8>,
    #[serde(default)]
    pub periodic: bool,
    #[serde(default)]
    pub fill: u8,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub experiment: Option<Experiment>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub preset: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n: Option<Vec<usize>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub steps: Option<Vec<usize>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub t: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dt: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub horizon: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub paths: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub trials: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sigma_low: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sigma_high: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub phi: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tolerance: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub out_dir: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub jobs: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub model: Option<ModelSource>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub coefficients: Option<CoefficientTable>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub point: Option<WordSpec>,
}

/// Invalid input; reported with exit code 1.
#[derive(Debug)]
pub struct InputError(pub String);

impl fmt::Display for InputError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for InputError {}

pub fn input<T>(msg: impl Into<String>) -> anyhow::Result<T> {
    Err(InputError(msg.into()).into())
}

pub fn load(path: &Path) -> anyhow::Result<ExperimentConfig> {
    let text = match std::fs::read_to_string(path) {
        Ok(t) => t,
        Err(e) => return input(format!("{}: {e}", path.display())),
    };
    parse(&text).map_err(|e| InputError(format!("{}: {}", path.display(), e.0)).into())
}

/// Parse errors carry the line and column of the offending key.
pub fn parse(text: &str) -> Result<ExperimentConfig, InputError> {
    let cfg: ExperimentConfig = toml::from_str(text).map_err(|e| {
        let msg = e.message().to_string();
        match e.span() {
            Some(span) => {
                let line = text[..span.start].matches('\n').count() + 1;
                let col = span.start - text[..span.start].rfind('\n').map_or(0, |i| i + 1) + 1;
                InputError(format!("line {line}, column {col}: {msg}"))
            }
            None => InputError(msg),
        }
    })?;
    if cfg.seed.is_none() {
        return Err(InputError("missing field `seed`: a config file must fix the seed".into()));
    }
    Ok(cfg)
}

impl ExperimentConfig {
    /// Fields set in `other` replace ours.
    pub fn merge(mut self, other: ExperimentConfig) -> Self {
        macro_rules! take {
            ($($f:ident),*) => { $( if other.$f.is_some() { self.$f = other.$f; } )* };
        }
        take!(
            experiment, seed, preset, n, steps, t, dt, horizon, paths, trials, sigma_low, sigma_high, phi,
            tolerance, out_dir, jobs, model, coefficients, point
        );
        self
    }

    /// The part of the config that determines the outputs, as canonical TOML.
    pub fn canonical(&self) -> String {
        let mut c = self.clone();
        c.out_dir = None;
        c.jobs = None;
        toml::to_string(&c).expect("config serializes")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unknown_key_has_a_location() {
        let e = parse("seed = 1\n\n  wobble = 2\n").unwrap_err();
        assert!(e.0.starts_with("line 3, column 3"), "{e}");
    }

    #[test]
    fn later_fields_win() {
        let file = parse("seed = 1\nn = [1, 2]\nphi = \"abs\"\n").unwrap();
        let flags = ExperimentConfig {
            n: Some(vec![5]),
            ..Default::default()
        };
        let c = file.merge(flags);
        assert_eq!((c.seed, c.n, c.phi.as_deref()), (Some(1), Some(vec![5]), Some("abs")));
    }

    #[test]
    fn canonical_ignores_plumbing() {
        let a = parse("seed = 1\nout_dir = \"x\"\njobs = 3\n").unwrap();
        let b = parse("seed = 1\n").unwrap();
        assert_eq!(a.canonical(), b.canonical());
        let c = parse("seed = 2\n").unwrap();
        assert_ne!(b.canonical(), c.canonical());
    }

    #[test]
    fn model_file_or_table() {
        let f = parse("seed = 1\nmodel = \"m.toml\"\n").unwrap();
        assert!(matches!(f.model, Some(ModelSource::File(_))));
        let t = parse("seed = 1\n[model]\nhorizon = 2\nstep = { kind = \"maximal\", lo = 0.0, hi = 1.0 }\nmap = { kind = \"identity\" }\n").unwrap();
        assert!(matches!(t.model, Some(ModelSource::Inline(_))));
    }
}
