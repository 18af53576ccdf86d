//! Tuning campaigns and the studies built on them: multi-run comparison,
//! parameter robustness and actuator switching.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exec::{map_indexed, Execution};
use crate::fopid::{build_controller, ControllerParams};
use crate::ga::{run_ga, GaConfig};
use crate::history::{Bounds, RunHistory};
use crate::kriging::Kernel;
use crate::microgrid::{simulate, Scenario, SimulationTrace, SwitchingPolicy};
use crate::objective::{ControllerObjective, EvaluationRecord};
use crate::surrogate::{optimize, ResponseTransform, SurrogateConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ControllerKind {
    Pid,
    Fopid,
}

impl ControllerKind {
    pub fn name(self) -> &'static str {
        match self {
            ControllerKind::Pid => "pid",
            ControllerKind::Fopid => "fopid",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "pid" => Ok(ControllerKind::Pid),
            "fopid" => Ok(ControllerKind::Fopid),
            other => Err(Error::InvalidParameter(format!("unknown controller {other}"))),
        }
    }

    pub fn bounds(self) -> Bounds {
        match self {
            ControllerKind::Pid => Bounds::pid(),
            ControllerKind::Fopid => Bounds::fopid(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum OptimizerKind {
    Kriging(Kernel),
    Ga,
}

impl OptimizerKind {
    pub fn name(self) -> &'static str {
        match self {
            OptimizerKind::Kriging(k) => k.name(),
            OptimizerKind::Ga => "ga",
        }
    }

    /// A kernel name selects kriging with that kernel; `ga` selects the GA.
    pub fn parse(s: &str) -> Result<Self> {
        if s.eq_ignore_ascii_case("ga") {
            return Ok(OptimizerKind::Ga);
        }
        Kernel::parse(s).map(OptimizerKind::Kriging)
    }

    pub fn all() -> Vec<OptimizerKind> {
        Kernel::ALL.iter().map(|&k| OptimizerKind::Kriging(k)).chain([OptimizerKind::Ga]).collect()
    }
}

/// Best controller found by one optimizer, shipped so the follow-up
/// studies can run without a tuning campaign.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Preset {
    pub optimizer: OptimizerKind,
    pub controller: ControllerKind,
    pub params: ControllerParams,
}

impl Preset {
    pub fn name(&self) -> String {
        format!("{}-{}", self.optimizer.name(), self.controller.name())
    }
}

pub fn tuned_presets() -> Vec<Preset> {
    use ControllerKind::{Fopid, Pid};
    use OptimizerKind::{Ga, Kriging};
    let pid = ControllerParams::pid;
    let fo = ControllerParams::fopid;
    let rows = [
        (Kriging(Kernel::Exponential), pid(3.613, 1.822, 0.344), fo(0.984, 3.359, 1.426, 0.677, 0.623)),
        (Kriging(Kernel::Gaussian), pid(3.666, 1.903, 0.333), fo(2.461, 5.000, 0.948, 0.926, 0.744)),
        (Kriging(Kernel::Linear), pid(4.150, 1.250, 0.350), fo(2.204, 3.155, 1.233, 0.768, 0.705)),
        (Kriging(Kernel::Spherical), pid(3.678, 1.351, 0.342), fo(2.450, 4.750, 0.950, 0.860, 0.780)),
        (Kriging(Kernel::Spline), pid(3.712, 1.391, 0.333), fo(0.950, 4.350, 1.250, 0.660, 0.700)),
        (Ga, pid(3.124, 1.087, 0.324), fo(1.703, 2.166, 1.310, 0.992, 0.654)),
    ];
    rows.iter()
        .flat_map(|&(optimizer, p, f)| {
            [Preset { optimizer, controller: Pid, params: p }, Preset { optimizer, controller: Fopid, params: f }]
        })
        .collect()
}

/// Looks a preset up by `<optimizer>-<controller>`, e.g. `spline-fopid`.
pub fn find_preset(name: &str) -> Result<Preset> {
    let (opt, ctl) = name
        .rsplit_once('-')
        .ok_or_else(|| Error::InvalidParameter(format!("preset {name} is not <optimizer>-<controller>")))?;
    let (opt, ctl) = (OptimizerKind::parse(opt)?, ControllerKind::parse(ctl)?);
    tuned_presets()
        .into_iter()
        .find(|p| p.optimizer == opt && p.controller == ctl)
        .ok_or_else(|| Error::InvalidParameter(format!("no preset {name}")))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CampaignConfig {
    pub controller: ControllerKind,
    pub optimizer: OptimizerKind,
    pub budget: usize,
    pub seed: u64,
    pub objective: ControllerObjective,
    /// Kernel and budget here are overridden by `optimizer` and `budget`.
    pub surrogate: SurrogateConfig,
    /// Generations here are derived from `budget`.
    pub ga: GaConfig,
}

impl Default for CampaignConfig {
    fn default() -> Self {
        Self {
            controller: ControllerKind::Fopid,
            optimizer: OptimizerKind::Kriging(Kernel::Spline),
            budget: 150,
            seed: 1,
            objective: ControllerObjective::default(),
            surrogate: SurrogateConfig::default(),
            ga: GaConfig::default(),
        }
    }
}

impl CampaignConfig {
    /// Names accepted by [`CampaignConfig::set_override`] besides the
    /// microgrid parameters.
    pub const OVERRIDES: [&'static str; 16] = [
        "w",
        "k_n",
        "t_min",
        "t_max",
        "n_rep",
        "t_end",
        "dt",
        "noise",
        "budget",
        "initial",
        "mle_evals",
        "transform",
        "cap_at_median",
        "n_perturbed",
        "n_uniform",
        "perturbation",
    ];

    /// Sets one field by name from its text form. Microgrid parameters use
    /// their symbols (`2H`, `T_FC`, ...).
    pub fn set_override(&mut self, key: &str, value: &str) -> Result<()> {
        let bad = |what: &str| Error::InvalidParameter(format!("{key} = {value}: expected {what}"));
        let float = || value.trim().parse::<f64>().map_err(|_| bad("a number"));
        let count = || value.trim().parse::<usize>().map_err(|_| bad("a nonnegative integer"));
        let flag = || value.trim().parse::<bool>().map_err(|_| bad("true or false"));
        let obj = &mut self.objective;
        match key {
            "w" => obj.cost.w = float()?,
            "k_n" => obj.cost.k_n = float()?,
            "t_min" => obj.cost.t_min = float()?,
            "t_max" => obj.cost.t_max = float()?,
            "n_rep" => obj.n_rep = count()?,
            "t_end" => obj.scenario.t_end = float()?,
            "dt" => obj.scenario.dt = float()?,
            "noise" => {
                let on = flag()?;
                for p in [&mut obj.scenario.wind, &mut obj.scenario.solar, &mut obj.scenario.load] {
                    p.noise = on;
                }
            }
            "budget" => self.budget = count()?,
            "initial" => self.surrogate.initial = count()?,
            "mle_evals" => self.surrogate.mle_evals = count()?,
            "transform" => {
                self.surrogate.transform = match value.trim() {
                    "log" => ResponseTransform::Log,
                    "identity" => ResponseTransform::Identity,
                    _ => return Err(bad("log or identity")),
                }
            }
            "cap_at_median" => self.surrogate.cap_at_median = flag()?,
            "n_perturbed" => self.surrogate.infill.n_perturbed = count()?,
            "n_uniform" => self.surrogate.infill.n_uniform = count()?,
            "perturbation" => self.surrogate.infill.perturbation = float()?,
            _ => obj.scenario.params.set(key, float()?)?,
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CampaignResult {
    pub controller: ControllerKind,
    pub optimizer: OptimizerKind,
    pub seed: u64,
    /// One record per expensive evaluation, in order.
    pub records: Vec<EvaluationRecord>,
    pub history: RunHistory,
    pub best: EvaluationRecord,
    /// Expensive evaluations issued, counted at the objective.
    pub evaluations: usize,
    pub fit_failures: usize,
}

impl CampaignResult {
    pub fn final_j(&self) -> f64 {
        self.best.j_mean
    }
}

/// One optimization run against the replicate-averaged plant cost. All
/// evaluations of a run share the replicate seeds derived from `seed`.
pub fn run_campaign(cfg: &CampaignConfig) -> Result<CampaignResult> {
    let bounds = cfg.controller.bounds();
    let mut records: Vec<EvaluationRecord> = Vec::with_capacity(cfg.budget);
    let mut objective = |x: &[f64]| -> Result<f64> {
        let params = ControllerParams::from_design(x)?;
        let rec = cfg.objective.expected_cost(&params, cfg.seed)?;
        let j = rec.j_mean;
        records.push(rec);
        Ok(j)
    };
    let (history, fit_failures) = match cfg.optimizer {
        OptimizerKind::Kriging(kernel) => {
            let sc = SurrogateConfig { kernel, budget: cfg.budget, ..cfg.surrogate.clone() };
            let r = optimize(&mut objective, &bounds, &sc, cfg.seed)?;
            (r.history, r.fit_failures)
        }
        OptimizerKind::Ga => {
            let pop = cfg.ga.population;
            if !cfg.budget.is_multiple_of(pop) {
                return Err(Error::InvalidParameter(format!(
                    "budget {} is not a multiple of the population {pop}",
                    cfg.budget
                )));
            }
            let gc = GaConfig { generations: cfg.budget / pop, ..cfg.ga.clone() };
            (run_ga(&mut objective, &bounds, &gc, cfg.seed)?.history, 0)
        }
    };
    let evaluations = records.len();
    let best = records
        .iter()
        .fold(None, |acc: Option<&EvaluationRecord>, r| match acc {
            Some(b) if b.j_mean <= r.j_mean => Some(b),
            _ => Some(r),
        })
        .cloned()
        .ok_or_else(|| Error::InvalidParameter("campaign made no evaluations".into()))?;
    Ok(CampaignResult {
        controller: cfg.controller,
        optimizer: cfg.optimizer,
        seed: cfg.seed,
        records,
        history,
        best,
        evaluations,
        fit_failures,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompareConfig {
    pub controllers: Vec<ControllerKind>,
    pub optimizers: Vec<OptimizerKind>,
    pub n_runs: usize,
    /// Run `r` uses seed `base_seed + r` for every optimizer.
    pub base_seed: u64,
    /// Controller, optimizer and seed are filled in per campaign.
    pub template: CampaignConfig,
    /// How independent runs are scheduled.
    pub exec: Execution,
}

impl Default for CompareConfig {
    fn default() -> Self {
        Self {
            controllers: vec![ControllerKind::Pid, ControllerKind::Fopid],
            optimizers: OptimizerKind::all(),
            n_runs: 5,
            base_seed: 1,
            template: CampaignConfig::default(),
            exec: Execution::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompareRow {
    pub optimizer: OptimizerKind,
    pub controller: ControllerKind,
    pub j_min: f64,
    pub j_mean: f64,
    pub j_std: f64,
    pub j_median: f64,
    pub best_params: ControllerParams,
}

/// Order statistics of the best-so-far curves across runs at one evaluation index.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceRow {
    pub optimizer: OptimizerKind,
    pub controller: ControllerKind,
    pub eval_index: usize,
    pub mean: f64,
    pub median: f64,
    pub best: f64,
    pub worst: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CompareReport {
    pub rows: Vec<CompareRow>,
    pub convergence: Vec<ConvergenceRow>,
    /// Grouped like `rows`, runs in index order inside each group.
    pub campaigns: Vec<Vec<CampaignResult>>,
}

pub fn median(v: &[f64]) -> f64 {
    let mut s = v.to_vec();
    s.sort_by(f64::total_cmp);
    let n = s.len();
    if n == 0 {
        f64::NAN
    } else if n % 2 == 1 {
        s[n / 2]
    } else {
        0.5 * (s[n / 2 - 1] + s[n / 2])
    }
}

fn mean_std(v: &[f64]) -> (f64, f64) {
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    if v.len() < 2 {
        return (mean, 0.0);
    }
    let var = v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

/// Runs `n_runs` campaigns for every (optimizer, controller) pair.
pub fn run_compare(cfg: &CompareConfig) -> Result<CompareReport> {
    if cfg.n_runs == 0 {
        return Err(Error::InvalidParameter("n_runs must be at least 1".into()));
    }
    let mut report = CompareReport { rows: vec![], convergence: vec![], campaigns: vec![] };
    for &optimizer in &cfg.optimizers {
        for &controller in &cfg.controllers {
            let runs = map_indexed(cfg.exec, cfg.n_runs, |r| {
                run_campaign(&CampaignConfig {
                    controller,
                    optimizer,
                    seed: cfg.base_seed + r as u64,
                    ..cfg.template.clone()
                })
            })
            .into_iter()
            .collect::<Result<Vec<_>>>()?;

            let finals: Vec<f64> = runs.iter().map(CampaignResult::final_j).collect();
            let (j_mean, j_std) = mean_std(&finals);
            let best_run = runs.iter().fold(&runs[0], |b, r| if r.final_j() < b.final_j() { r } else { b });
            report.rows.push(CompareRow {
                optimizer,
                controller,
                j_min: best_run.final_j(),
                j_mean,
                j_std,
                j_median: median(&finals),
                best_params: best_run.best.params,
            });
            let len = runs.iter().map(|r| r.history.len()).min().unwrap_or(0);
            for i in 0..len {
                let at: Vec<f64> = runs.iter().map(|r| r.history.best_so_far[i]).collect();
                report.convergence.push(ConvergenceRow {
                    optimizer,
                    controller,
                    eval_index: i + 1,
                    mean: mean_std(&at).0,
                    median: median(&at),
                    best: at.iter().copied().fold(f64::INFINITY, f64::min),
                    worst: at.iter().copied().fold(f64::NEG_INFINITY, f64::max),
                });
            }
            report.campaigns.push(runs);
        }
    }
    Ok(report)
}

/// A single-parameter perturbation of the plant.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RobustnessCase {
    pub parameter: String,
    /// Relative change, e.g. 0.5 for ±50%.
    pub fraction: f64,
}

impl RobustnessCase {
    pub fn new(parameter: &str, fraction: f64) -> Self {
        Self { parameter: parameter.to_string(), fraction }
    }

    /// The scenario with the parameter scaled by `1 + sign·fraction`.
    pub fn apply(&self, base: &Scenario, increase: bool) -> Result<Scenario> {
        let mut sc = base.clone();
        let v = sc
            .params
            .get(&self.parameter)
            .ok_or_else(|| Error::InvalidParameter(format!("unknown microgrid parameter {}", self.parameter)))?;
        let factor = if increase { 1.0 + self.fraction } else { 1.0 - self.fraction };
        let nv = v * factor;
        if !(nv > 0.0) {
            return Err(Error::InvalidParameter(format!("{} would become {nv}", self.parameter)));
        }
        sc.params.set(&self.parameter, nv)?;
        Ok(sc)
    }
}

pub fn perturbation_cases() -> Vec<RobustnessCase> {
    [("D", 0.7), ("2H", 0.5), ("R", 0.7), ("T_FC", 0.2), ("T_g", 0.7), ("T_t", 0.7), ("T_IC", 0.005), ("T_IN", 0.5)]
        .iter()
        .map(|&(p, f)| RobustnessCase::new(p, f))
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RobustnessRow {
    pub parameter: String,
    pub fraction: f64,
    pub controller: ControllerKind,
    pub j_increase: f64,
    pub j_decrease: f64,
}

/// Expected cost of both controllers under every case, both directions.
pub fn run_robustness(
    pid: &ControllerParams,
    fopid: &ControllerParams,
    cases: &[RobustnessCase],
    objective: &ControllerObjective,
    seed: u64,
) -> Result<Vec<RobustnessRow>> {
    let mut rows = Vec::with_capacity(2 * cases.len());
    for case in cases {
        let up = case.apply(&objective.scenario, true)?;
        let down = case.apply(&objective.scenario, false)?;
        for (kind, params) in [(ControllerKind::Pid, pid), (ControllerKind::Fopid, fopid)] {
            let eval = |sc: &Scenario| {
                let obj = ControllerObjective { scenario: sc.clone(), ..objective.clone() };
                obj.expected_cost(params, seed).map(|r| r.j_mean)
            };
            rows.push(RobustnessRow {
                parameter: case.parameter.clone(),
                fraction: case.fraction,
                controller: kind,
                j_increase: eval(&up)?,
                j_decrease: eval(&down)?,
            });
        }
    }
    Ok(rows)
}

/// One gated run; the trace carries the gate-event log.
pub fn run_switching(
    params: &ControllerParams,
    policy: SwitchingPolicy,
    objective: &ControllerObjective,
    seed: u64,
) -> Result<SimulationTrace> {
    if !policy.enabled {
        return Err(Error::InvalidParameter("switching study needs an enabled policy".into()));
    }
    policy.validate()?;
    let sc = Scenario { policy, ..objective.scenario.clone() };
    let mut controller = build_controller(*params, &objective.ora)?;
    simulate(&sc, &mut controller, crate::objective::replicate_seed(seed, 0))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn preset_lookup() {
        assert_eq!(tuned_presets().len(), 12);
        let p = find_preset("spline-fopid").unwrap();
        assert_eq!(p.params, ControllerParams::fopid(0.950, 4.350, 1.250, 0.660, 0.700));
        assert!(find_preset("ga-pid").unwrap().params.is_pid());
        assert!(find_preset("nothing").is_err());
        assert!(find_preset("spline-pi").is_err());
        for p in tuned_presets() {
            assert_eq!(find_preset(&p.name()).unwrap(), p);
        }
    }

    #[test]
    fn robustness_cases() {
        let cases = perturbation_cases();
        assert_eq!(cases.len(), 8);
        let base = Scenario::default();
        let up = cases[1].apply(&base, true).unwrap();
        let down = cases[1].apply(&base, false).unwrap();
        assert!((up.params.m - 0.1667 * 1.5).abs() < 1e-12);
        assert!((down.params.m - 0.1667 * 0.5).abs() < 1e-12);
        assert!(RobustnessCase::new("D", 1.0).apply(&base, false).is_err());
        assert!(RobustnessCase::new("Q", 0.1).apply(&base, true).is_err());
    }

    #[test]
    fn overrides() {
        let mut cfg = CampaignConfig::default();
        cfg.set_override("2H", "0.2").unwrap();
        cfg.set_override("w", "0.5").unwrap();
        cfg.set_override("noise", "false").unwrap();
        cfg.set_override("transform", "identity").unwrap();
        cfg.set_override("budget", "60").unwrap();
        assert_eq!(cfg.objective.scenario.params.m, 0.2);
        assert_eq!(cfg.objective.cost.w, 0.5);
        assert!(!cfg.objective.scenario.load.noise);
        assert_eq!(cfg.surrogate.transform, ResponseTransform::Identity);
        assert_eq!(cfg.budget, 60);
        assert!(cfg.set_override("budget", "-1").is_err());
        assert!(cfg.set_override("bogus", "1").is_err());
        assert!(cfg.set_override("transform", "sqrt").is_err());
    }

    #[test]
    fn median_and_spread() {
        assert_eq!(median(&[3.0, 1.0, 2.0]), 2.0);
        assert_eq!(median(&[4.0, 1.0, 2.0, 3.0]), 2.5);
        assert_eq!(mean_std(&[2.0]), (2.0, 0.0));
    }

    #[test]
    fn switching_requires_enabled_policy() {
        let p = ControllerParams::pid(1.0, 1.0, 0.3);
        assert!(run_switching(&p, SwitchingPolicy::default(), &ControllerObjective::default(), 1).is_err());
    }
}
