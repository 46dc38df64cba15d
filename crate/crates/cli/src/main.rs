mod config;
mod experiments;
mod presets;

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};
use sha2::{Digest, Sha256};

use config::{input, Experiment, ExperimentConfig, InputError, ModelSource};
use experiments::Outcome;

const DEFAULT_OUT: &str = "sublinergo-out";

#[derive(Parser)]
#[command(name = "sublinergo", version, about = "Experiments on sublinear expectations and ergodicity")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one experiment and write its tables, summary and manifest.
    Run(RunArgs),
    /// Print the preset catalog.
    ListPresets,
}

#[derive(Args)]
struct RunArgs {
    experiment: Experiment,
    /// TOML config; flags override its values.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    preset: Option<String>,
    /// Comma-separated sample sizes (or gaps for `mixing`).
    #[arg(long, value_delimiter = ',')]
    n: Option<Vec<usize>>,
    /// Comma-separated lattice step counts.
    #[arg(long, value_delimiter = ',')]
    steps: Option<Vec<usize>>,
    /// Comma-separated time grid.
    #[arg(long, value_delimiter = ',')]
    t: Option<Vec<f64>>,
    #[arg(long)]
    dt: Option<f64>,
    #[arg(long)]
    horizon: Option<f64>,
    #[arg(long)]
    paths: Option<usize>,
    #[arg(long)]
    trials: Option<usize>,
    /// Lower variance bound.
    #[arg(long)]
    sigma_low: Option<f64>,
    /// Upper variance bound.
    #[arg(long)]
    sigma_high: Option<f64>,
    #[arg(long)]
    phi: Option<String>,
    #[arg(long)]
    tolerance: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
    /// Scenario file holding a `[model]` section.
    #[arg(long)]
    model: Option<PathBuf>,
    #[arg(long, env = "SUBLINERGO_OUT")]
    out: Option<PathBuf>,
    /// Worker threads.
    #[arg(long)]
    jobs: Option<usize>,
}

impl RunArgs {
    fn overrides(&self) -> ExperimentConfig {
        ExperimentConfig {
            experiment: None,
            seed: self.seed,
            preset: self.preset.clone(),
            n: self.n.clone(),
            steps: self.steps.clone(),
            t: self.t.clone(),
            dt: self.dt,
            horizon: self.horizon,
            paths: self.paths,
            trials: self.trials,
            sigma_low: self.sigma_low,
            sigma_high: self.sigma_high,
            phi: self.phi.clone(),
            tolerance: self.tolerance,
            out_dir: self.out.clone(),
            jobs: self.jobs,
            model: self.model.clone().map(ModelSource::File),
            coefficients: None,
            point: None,
        }
    }
}

fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

fn effective_config(args: &RunArgs) -> Result<ExperimentConfig> {
    let base = match &args.config {
        Some(path) => config::load(path)?,
        None => ExperimentConfig::default(),
    };
    if let Some(e) = base.experiment {
        if e != args.experiment {
            return input(format!("field `experiment`: the config is for `{e}`, not `{}`", args.experiment));
        }
    }
    let mut cfg = base.merge(args.overrides());
    cfg.experiment = Some(args.experiment);
    // flag-only runs fall back to seed 0; config files must set it
    cfg.seed.get_or_insert(0);
    if cfg.jobs == Some(0) {
        return input("field `jobs`: need at least one worker");
    }
    Ok(cfg)
}

/// Hash of the output-relevant config, including a referenced model file.
fn config_hash(cfg: &ExperimentConfig) -> Result<String> {
    let mut text = cfg.canonical().into_bytes();
    if let Some(ModelSource::File(p)) = &cfg.model {
        text.extend(fs::read(p).map_err(|e| InputError(format!("{}: {e}", p.display())))?);
    }
    Ok(sha256_hex(&text))
}

fn summary_text(exp: Experiment, seed: u64, out: &Outcome, cfg: &ExperimentConfig) -> String {
    let mut doc = toml::Table::new();
    doc.insert("experiment".into(), exp.name().into());
    doc.insert("seed".into(), toml::Value::Integer(seed as i64));
    doc.insert("passed".into(), out.checks.iter().all(|c| c.pass).into());
    let values: toml::Table = out.values.iter().cloned().collect();
    doc.insert("values".into(), values.into());
    let effective: toml::Table = toml::from_str(&cfg.canonical()).expect("canonical config parses");
    doc.insert("config".into(), effective.into());
    let checks: Vec<toml::Value> = out
        .checks
        .iter()
        .map(|c| {
            let mut t = toml::Table::new();
            t.insert("name".into(), c.name.clone().into());
            t.insert("pass".into(), c.pass.into());
            t.insert("detail".into(), c.detail.clone().into());
            t.into()
        })
        .collect();
    doc.insert("checks".into(), checks.into());
    toml::to_string(&doc).expect("summary serializes")
}

fn write_outputs(dir: &Path, exp: Experiment, cfg: &ExperimentConfig, out: &Outcome) -> Result<()> {
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    let seed = cfg.seed.unwrap_or(0);
    let mut files = toml::Table::new();
    let mut all = Sha256::new();
    for (name, body) in &out.files {
        fs::write(dir.join(name), body).with_context(|| format!("writing {name}"))?;
        files.insert(name.clone(), sha256_hex(body).into());
        all.update(name.as_bytes());
        all.update(body);
    }
    fs::write(dir.join("summary.toml"), summary_text(exp, seed, out, cfg))?;

    let mut m = toml::Table::new();
    m.insert("version".into(), env!("CARGO_PKG_VERSION").into());
    m.insert("experiment".into(), exp.name().into());
    m.insert("seed".into(), toml::Value::Integer(seed as i64));
    m.insert("config_hash".into(), config_hash(cfg)?.into());
    m.insert(
        "outputs_hash".into(),
        all.finalize().iter().map(|b| format!("{b:02x}")).collect::<String>().into(),
    );
    // not part of either hash
    m.insert("timestamp".into(), chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Secs, true).into());
    m.insert("files".into(), files.into());
    fs::write(dir.join("manifest.toml"), toml::to_string(&m)?)?;
    Ok(())
}

/// Collects every `summary.toml` below the output directory.
fn report(root: &Path) -> Result<Outcome> {
    let mut entries: Vec<PathBuf> = match fs::read_dir(root) {
        Ok(rd) => rd.filter_map(|e| e.ok()).map(|e| e.path().join("summary.toml")).filter(|p| p.is_file()).collect(),
        Err(e) => return input(format!("{}: {e}", root.display())),
    };
    entries.sort();
    if entries.is_empty() {
        return input(format!("no experiment summaries under {}", root.display()));
    }
    let mut out = Outcome::default();
    let mut text = String::from("experiment,check,pass,detail\n");
    for p in &entries {
        let doc: toml::Table = toml::from_str(&fs::read_to_string(p)?).with_context(|| format!("reading {}", p.display()))?;
        let exp = doc.get("experiment").and_then(|v| v.as_str()).unwrap_or("?").to_string();
        for c in doc.get("checks").and_then(|v| v.as_array()).into_iter().flatten() {
            let name = c.get("name").and_then(|v| v.as_str()).unwrap_or("?");
            let pass = c.get("pass").and_then(|v| v.as_bool()).unwrap_or(false);
            let detail = c.get("detail").and_then(|v| v.as_str()).unwrap_or("");
            text.push_str(&format!("{exp},\"{name}\",{pass},\"{detail}\"\n"));
            out.checks.push(experiments::Check {
                name: format!("{exp}: {name}"),
                pass,
                detail: detail.to_string(),
            });
        }
    }
    out.files.push(("report.csv".into(), text.into_bytes()));
    out.values.push(("experiments".into(), toml::Value::Integer(entries.len() as i64)));
    Ok(out)
}

fn run(args: RunArgs) -> Result<bool> {
    let cfg = effective_config(&args)?;
    if let Some(j) = cfg.jobs {
        rayon::ThreadPoolBuilder::new().num_threads(j).build_global()?;
    }
    let seed = cfg.seed.unwrap_or(0);
    let root = cfg.out_dir.clone().unwrap_or_else(|| PathBuf::from(DEFAULT_OUT));
    let exp = args.experiment;
    let result = match exp {
        Experiment::Lln => experiments::lln(&cfg),
        Experiment::Slln => experiments::slln(&cfg, seed),
        Experiment::Gnormal => experiments::gnormal(&cfg),
        Experiment::Gbm => experiments::gbm(&cfg, seed),
        Experiment::Gsde => experiments::gsde(&cfg, seed),
        Experiment::Ergodic => experiments::ergodic(&cfg),
        Experiment::Mixing => experiments::mixing(&cfg),
        Experiment::Report => report(&root),
    };
    // library errors reject the parameters, so they count as input errors
    let out = result.map_err(|e| match e.downcast::<sublinergo::Error>() {
        Ok(core) => InputError(core.to_string()).into(),
        Err(e) => e,
    })?;
    let dir = if exp == Experiment::Report { root.clone() } else { root.join(exp.name()) };
    write_outputs(&dir, exp, &cfg, &out)?;
    for (k, v) in &out.values {
        println!("{k} = {v}");
    }
    for c in &out.checks {
        println!("[{}] {}: {}", if c.pass { "PASS" } else { "FAIL" }, c.name, c.detail);
    }
    println!("outputs in {}", dir.display());
    Ok(out.checks.iter().all(|c| c.pass))
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            // clap reports usage errors with 2, which is reserved for failed checks
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match cli.command {
        Command::ListPresets => {
            print!("{}", presets::catalog());
            ExitCode::SUCCESS
        }
        Command::Run(args) => match run(args) {
            Ok(true) => ExitCode::SUCCESS,
            Ok(false) => ExitCode::from(2),
            Err(e) => {
                if e.downcast_ref::<InputError>().is_some() {
                    eprintln!("error: {e}");
                } else {
                    eprintln!("error: {e:#}");
                }
                ExitCode::from(1)
            }
        },
    }
}
