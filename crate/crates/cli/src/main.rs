mod config;

use std::path::Path;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};
use mgtune::campaign::{
    find_preset, perturbation_cases, run_campaign, run_compare, run_robustness, run_switching, CampaignConfig,
    CompareConfig, ControllerKind, OptimizerKind,
};
use mgtune::exec::Execution;
use mgtune::export;
use mgtune::fopid::{build_controller, ControllerParams};
use mgtune::kriging::{MleOptions, ThetaChoice};
use mgtune::microgrid::{simulate, SwitchingPolicy};
use mgtune::objective::{cost, replicate_seed};
use mgtune::stochastic::generate;
use mgtune::surrogate::{fit_surrogate, SurrogateConfig};

use config::{Flags, Mode, RunConfig};

#[derive(Parser)]
#[command(name = "mgtune", version, about = "FOPID/PID tuning of a microgrid frequency loop by kriging surrogates")]
struct Cli {
    #[command(subcommand)]
    command: Option<Command>,
    #[command(flatten)]
    flags: Flags,
}

#[derive(Subcommand)]
enum Command {
    /// One closed-loop run; writes trace.csv, gates.csv and profiles.csv.
    Simulate,
    /// One tuning campaign; writes history.csv and model.json.
    Tune,
    /// Multi-run statistics; writes compare.csv, convergence.csv and per-run histories.
    Compare,
    /// Single-parameter perturbations; writes robustness.csv.
    Robustness,
    /// Gated fuel cell and diesel run; writes trace.csv and gates.csv.
    Switching,
}

impl Command {
    fn mode(&self) -> Mode {
        match self {
            Command::Simulate => Mode::Simulate,
            Command::Tune => Mode::Tune,
            Command::Compare => Mode::Compare,
            Command::Robustness => Mode::Robustness,
            Command::Switching => Mode::Switching,
        }
    }
}

fn main() -> Result<()> {
    let cli = Cli::parse();
    let cfg = RunConfig::resolve(cli.command.as_ref().map(Command::mode), &cli.flags)?;
    std::fs::create_dir_all(&cfg.out).with_context(|| format!("creating {}", cfg.out.display()))?;
    match cfg.mode {
        Mode::Simulate => cmd_simulate(&cfg),
        Mode::Tune => cmd_tune(&cfg),
        Mode::Compare => cmd_compare(&cfg),
        Mode::Robustness => cmd_robustness(&cfg),
        Mode::Switching => cmd_switching(&cfg),
    }
}

fn campaign_config(cfg: &RunConfig) -> Result<CampaignConfig> {
    let mut c = CampaignConfig { seed: cfg.seed, ..CampaignConfig::default() };
    if let Some(b) = cfg.budget {
        c.budget = b;
    }
    for (k, v) in &cfg.overrides {
        c.set_override(k, v)?;
    }
    if cfg.sequential {
        c.objective.exec = Execution::Sequential;
        c.surrogate.exec = Execution::Sequential;
    }
    Ok(c)
}

fn write(dir: &Path, name: &str, f: impl FnOnce(std::fs::File) -> mgtune::Result<()>) -> Result<()> {
    let path = dir.join(name);
    export::to_file(&path, f).with_context(|| format!("writing {}", path.display()))
}

/// Controller for single-controller modes: explicit params, else the first
/// preset, else the spline FOPID row.
fn single_controller(cfg: &RunConfig) -> Result<ControllerParams> {
    if let Some(p) = &cfg.params {
        let params = match p.as_slice() {
            [kp, ki, kd] => ControllerParams::pid(*kp, *ki, *kd),
            [kp, ki, kd, l, m] => ControllerParams::fopid(*kp, *ki, *kd, *l, *m),
            _ => bail!("params takes three or five numbers"),
        };
        params.validate()?;
        return Ok(params);
    }
    let name = cfg.presets.first().map(String::as_str).unwrap_or("spline-fopid");
    Ok(find_preset(name)?.params)
}

fn cmd_simulate(cfg: &RunConfig) -> Result<()> {
    let c = campaign_config(cfg)?;
    let params = single_controller(cfg)?;
    let sc = &c.objective.scenario;
    let seed = replicate_seed(cfg.seed, 0);
    let mut controller = build_controller(params, &c.objective.ora)?;
    let trace = simulate(sc, &mut controller, seed)?;
    write(&cfg.out, "trace.csv", |f| export::write_trace(f, &trace))?;
    write(&cfg.out, "gates.csv", |f| export::write_gates(f, &trace))?;
    let series = |p| generate(p, sc.t_end, sc.dt, seed);
    let (wind, solar, load) = (series(&sc.wind)?, series(&sc.solar)?, series(&sc.load)?);
    write(&cfg.out, "profiles.csv", |f| export::write_profiles(f, sc.dt, &wind, &solar, &load))?;

    let expected = c.objective.expected_cost(&params, cfg.seed)?;
    println!("J (this realization) = {:.6}", cost(&trace, &c.objective.cost)?);
    println!(
        "expected J over {} replicates = {:.6} (std {:.6}, diverged {})",
        c.objective.n_rep,
        expected.j_mean,
        expected.std_dev(),
        expected.diverged_count
    );
    Ok(())
}

fn cmd_tune(cfg: &RunConfig) -> Result<()> {
    let mut c = campaign_config(cfg)?;
    c.controller = cfg.controllers[0];
    c.optimizer = cfg.optimizers[0];
    let run = run_campaign(&c)?;
    write(&cfg.out, "history.csv", |f| export::write_history(f, &run))?;
    if let OptimizerKind::Kriging(kernel) = c.optimizer {
        let sc = SurrogateConfig { kernel, ..c.surrogate.clone() };
        match fit_surrogate(&run.history, &sc, ThetaChoice::Mle(MleOptions::default())) {
            Ok(model) => write(&cfg.out, "model.json", |f| export::write_model_dump(f, &model.dump()))?,
            Err(e) => eprintln!("final model not written: {e}"),
        }
    }
    let p = run.best.params;
    println!("{} {} seed {}: {} evaluations", c.optimizer.name(), c.controller.name(), c.seed, run.evaluations);
    println!(
        "best J = {:.6}  Kp {:.4} Ki {:.4} Kd {:.4} lambda {:.4} mu {:.4}",
        run.final_j(),
        p.kp,
        p.ki,
        p.kd,
        p.lambda,
        p.mu
    );
    Ok(())
}

fn cmd_compare(cfg: &RunConfig) -> Result<()> {
    let c = campaign_config(cfg)?;
    let cc = CompareConfig {
        controllers: cfg.controllers.clone(),
        optimizers: cfg.optimizers.clone(),
        n_runs: cfg.n_runs,
        base_seed: cfg.seed,
        template: c,
        exec: if cfg.sequential { Execution::Sequential } else { Execution::Parallel },
    };
    let report = run_compare(&cc)?;
    write(&cfg.out, "compare.csv", |f| export::write_compare(f, &report.rows))?;
    write(&cfg.out, "convergence.csv", |f| export::write_convergence(f, &report.convergence))?;
    for runs in &report.campaigns {
        for (r, run) in runs.iter().enumerate() {
            let name = format!("history/{}-{}-run{}.csv", run.optimizer.name(), run.controller.name(), r + 1);
            write(&cfg.out, &name, |f| export::write_history(f, run))?;
        }
    }
    println!("{:<12} {:<6} {:>10} {:>10} {:>10} {:>10}", "optimizer", "ctrl", "J_min", "J_mean", "J_std", "J_median");
    for r in &report.rows {
        println!(
            "{:<12} {:<6} {:>10.5} {:>10.5} {:>10.5} {:>10.5}",
            r.optimizer.name(),
            r.controller.name(),
            r.j_min,
            r.j_mean,
            r.j_std,
            r.j_median
        );
    }
    Ok(())
}

/// PID and FOPID rows named by `--preset`: full row names, or an optimizer
/// name standing for both of its rows. Defaults to the spline rows.
fn robustness_pair(cfg: &RunConfig) -> Result<(ControllerParams, ControllerParams)> {
    let names = if cfg.presets.is_empty() { vec!["spline".to_string()] } else { cfg.presets.clone() };
    let (mut pid, mut fopid) = (None, None);
    for n in &names {
        let rows = if n.contains('-') {
            vec![find_preset(n)?]
        } else {
            vec![find_preset(&format!("{n}-pid"))?, find_preset(&format!("{n}-fopid"))?]
        };
        for p in rows {
            match p.controller {
                ControllerKind::Pid => pid = Some(p.params),
                ControllerKind::Fopid => fopid = Some(p.params),
            }
        }
    }
    match (pid, fopid) {
        (Some(p), Some(f)) => Ok((p, f)),
        _ => bail!("robustness needs one PID and one FOPID preset"),
    }
}

fn cmd_robustness(cfg: &RunConfig) -> Result<()> {
    let c = campaign_config(cfg)?;
    let (pid, fopid) = robustness_pair(cfg)?;
    let rows = run_robustness(&pid, &fopid, &perturbation_cases(), &c.objective, cfg.seed)?;
    write(&cfg.out, "robustness.csv", |f| export::write_robustness(f, &rows))?;
    let nominal = |p| c.objective.expected_cost(p, cfg.seed).map(|r| r.j_mean);
    println!("nominal: pid {:.6}  fopid {:.6}", nominal(&pid)?, nominal(&fopid)?);
    for r in &rows {
        println!(
            "{:<5} ±{:<6} {:<6} +: {:>10.6}  -: {:>10.6}",
            r.parameter,
            r.fraction,
            r.controller.name(),
            r.j_increase,
            r.j_decrease
        );
    }
    Ok(())
}

fn cmd_switching(cfg: &RunConfig) -> Result<()> {
    let c = campaign_config(cfg)?;
    let params = single_controller(cfg)?;
    let mut policy = SwitchingPolicy::gated();
    if let Some(d) = cfg.deadband {
        policy.deadband = d;
    }
    if let Some(m) = cfg.min_on_time {
        policy.min_on_time = m;
    }
    let trace = run_switching(&params, policy, &c.objective, cfg.seed)?;
    write(&cfg.out, "trace.csv", |f| export::write_trace(f, &trace))?;
    write(&cfg.out, "gates.csv", |f| export::write_gates(f, &trace))?;
    let offs = trace.gate_events.iter().filter(|e| !e.on).count();
    println!(
        "{} gate transitions ({} off), J = {:.6}",
        trace.gate_events.len(),
        offs,
        cost(&trace, &c.objective.cost)?
    );
    Ok(())
}
