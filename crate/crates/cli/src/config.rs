//! Run configuration: an optional TOML file merged with command-line flags.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use mgtune::campaign::{ControllerKind, OptimizerKind};
use mgtune::kriging::Kernel;
use serde::Deserialize;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Simulate,
    Tune,
    Compare,
    Robustness,
    Switching,
}

/// Keys a config file may set. Every one is optional; flags win.
#[derive(Debug, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FileConfig {
    pub mode: Option<Mode>,
    pub controller: Option<String>,
    pub kernel: Option<String>,
    pub optimizer: Option<String>,
    pub runs: Option<usize>,
    pub seed: Option<u64>,
    pub budget: Option<usize>,
    pub out: Option<PathBuf>,
    pub preset: Option<Vec<String>>,
    pub params: Option<Vec<f64>>,
    pub deadband: Option<f64>,
    pub min_on_time: Option<f64>,
    pub sequential: Option<bool>,
    pub set: BTreeMap<String, toml::Value>,
}

impl FileConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        toml::from_str(&text).with_context(|| format!("parsing {}", path.display()))
    }
}

/// Flags as given on the command line; `None` means not given.
#[derive(Debug, Default, Clone, clap::Args)]
pub struct Flags {
    /// TOML file with any of the keys below; flags override it.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// pid, fopid or both.
    #[arg(long, global = true)]
    pub controller: Option<String>,
    /// A kernel name (exponential, gaussian, linear, spherical, spline) or all.
    #[arg(long, global = true)]
    pub kernel: Option<String>,
    /// kriging, ga or all.
    #[arg(long, global = true)]
    pub optimizer: Option<String>,
    /// Independent runs per optimizer/controller pair.
    #[arg(long, global = true)]
    pub runs: Option<usize>,
    /// Run seed, or base seed of a multi-run comparison.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Expensive evaluations per run.
    #[arg(long, global = true)]
    pub budget: Option<usize>,
    /// Output directory.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Parameter override `<name>=<value>`, repeatable.
    #[arg(long = "set", global = true, value_name = "NAME=VALUE")]
    pub set: Vec<String>,
    /// Tuned preset such as spline-fopid, or an optimizer name for both of its rows.
    #[arg(long, global = true)]
    pub preset: Vec<String>,
    /// Explicit controller `Kp,Ki,Kd[,lambda,mu]`; wins over presets.
    #[arg(long, global = true, value_delimiter = ',', num_args = 1..)]
    pub params: Option<Vec<f64>>,
    /// Switching deadband in Hz.
    #[arg(long, global = true)]
    pub deadband: Option<f64>,
    /// Switching minimum on-time in seconds.
    #[arg(long, global = true)]
    pub min_on_time: Option<f64>,
    /// Run everything on the calling thread.
    #[arg(long, global = true)]
    pub sequential: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub mode: Mode,
    pub controllers: Vec<ControllerKind>,
    pub optimizers: Vec<OptimizerKind>,
    pub n_runs: usize,
    pub seed: u64,
    pub budget: Option<usize>,
    pub out: PathBuf,
    pub presets: Vec<String>,
    pub params: Option<Vec<f64>>,
    pub deadband: Option<f64>,
    pub min_on_time: Option<f64>,
    pub sequential: bool,
    pub overrides: Vec<(String, String)>,
}

pub fn parse_controllers(s: &str) -> Result<Vec<ControllerKind>> {
    Ok(match s {
        "both" | "all" => vec![ControllerKind::Pid, ControllerKind::Fopid],
        other => vec![ControllerKind::parse(other)?],
    })
}

pub fn parse_optimizers(optimizer: &str, kernel: &str) -> Result<Vec<OptimizerKind>> {
    let kernels: Vec<Kernel> = match kernel {
        "all" => Kernel::ALL.to_vec(),
        k => vec![Kernel::parse(k)?],
    };
    let kriging = kernels.into_iter().map(OptimizerKind::Kriging);
    Ok(match optimizer {
        "kriging" => kriging.collect(),
        "ga" => vec![OptimizerKind::Ga],
        "all" => kriging.chain([OptimizerKind::Ga]).collect(),
        other => bail!("unknown optimizer {other}; expected kriging, ga or all"),
    })
}

fn value_text(v: &toml::Value) -> String {
    match v {
        toml::Value::String(s) => s.clone(),
        other => other.to_string(),
    }
}

impl RunConfig {
    /// Merges the file (if any) under the flags. `mode` comes from the
    /// subcommand when given, otherwise from the file.
    pub fn resolve(mode: Option<Mode>, flags: &Flags) -> Result<Self> {
        let file = match &flags.config {
            Some(p) => FileConfig::load(p)?,
            None => FileConfig::default(),
        };
        let mode = match (mode, file.mode) {
            (Some(m), Some(f)) if m != f => bail!("subcommand {m:?} disagrees with mode {f:?} in the config file"),
            (Some(m), _) | (None, Some(m)) => m,
            (None, None) => bail!("no subcommand given and the config file sets no mode"),
        };
        let compare = mode == Mode::Compare;
        let controller = flags
            .controller
            .clone()
            .or(file.controller)
            .unwrap_or_else(|| if compare { "both" } else { "fopid" }.to_string());
        let kernel =
            flags.kernel.clone().or(file.kernel).unwrap_or_else(|| if compare { "all" } else { "spline" }.to_string());
        let default_optimizer = if compare && flags.kernel.is_none() { "all" } else { "kriging" };
        let optimizer = flags.optimizer.clone().or(file.optimizer).unwrap_or_else(|| default_optimizer.to_string());

        let mut overrides: Vec<(String, String)> = file.set.iter().map(|(k, v)| (k.clone(), value_text(v))).collect();
        for s in &flags.set {
            let (k, v) = s.split_once('=').with_context(|| format!("--set {s}: expected NAME=VALUE"))?;
            overrides.push((k.trim().to_string(), v.trim().to_string()));
        }

        let cfg = Self {
            mode,
            controllers: parse_controllers(&controller)?,
            optimizers: parse_optimizers(&optimizer, &kernel)?,
            n_runs: flags.runs.or(file.runs).unwrap_or(5),
            seed: flags.seed.or(file.seed).unwrap_or(1),
            budget: flags.budget.or(file.budget),
            out: flags.out.clone().or(file.out).unwrap_or_else(|| PathBuf::from("out")),
            presets: if flags.preset.is_empty() { file.preset.unwrap_or_default() } else { flags.preset.clone() },
            params: flags.params.clone().or(file.params),
            deadband: flags.deadband.or(file.deadband),
            min_on_time: flags.min_on_time.or(file.min_on_time),
            sequential: flags.sequential || file.sequential.unwrap_or(false),
            overrides,
        };
        cfg.check()?;
        Ok(cfg)
    }

    fn check(&self) -> Result<()> {
        if self.n_runs == 0 {
            bail!("runs must be at least 1");
        }
        if self.mode == Mode::Tune && (self.controllers.len() != 1 || self.optimizers.len() != 1) {
            bail!("tune needs exactly one controller and one optimizer");
        }
        if let Some(p) = &self.params {
            if p.len() != 3 && p.len() != 5 {
                bail!("params takes Kp,Ki,Kd or Kp,Ki,Kd,lambda,mu");
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn compare_defaults_cover_everything() {
        let cfg = RunConfig::resolve(Some(Mode::Compare), &Flags::default()).unwrap();
        assert_eq!(cfg.controllers.len(), 2);
        assert_eq!(cfg.optimizers, OptimizerKind::all());
        assert_eq!(cfg.n_runs, 5);
    }

    #[test]
    fn kernel_flag_narrows_compare_to_kriging() {
        let flags = Flags { kernel: Some("gaussian".into()), ..Flags::default() };
        let cfg = RunConfig::resolve(Some(Mode::Compare), &flags).unwrap();
        assert_eq!(cfg.optimizers, vec![OptimizerKind::Kriging(Kernel::Gaussian)]);
    }

    #[test]
    fn tune_rejects_multiple_optimizers() {
        let flags = Flags { optimizer: Some("all".into()), ..Flags::default() };
        assert!(RunConfig::resolve(Some(Mode::Tune), &flags).is_err());
    }

    #[test]
    fn file_values_under_flags() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("run.toml");
        std::fs::write(
            &path,
            "mode = \"tune\"\nseed = 4\nbudget = 60\n[set]\n\"2H\" = 0.2\ntransform = \"identity\"\n",
        )
        .unwrap();
        let flags = Flags { config: Some(path), seed: Some(9), set: vec!["w=0.5".into()], ..Flags::default() };
        let cfg = RunConfig::resolve(None, &flags).unwrap();
        assert_eq!(cfg.mode, Mode::Tune);
        assert_eq!(cfg.seed, 9);
        assert_eq!(cfg.budget, Some(60));
        assert_eq!(
            cfg.overrides,
            vec![("2H".into(), "0.2".into()), ("transform".into(), "identity".into()), ("w".into(), "0.5".into())]
        );
        assert!(RunConfig::resolve(Some(Mode::Compare), &Flags { config: flags.config, ..Flags::default() }).is_err());
    }
}
