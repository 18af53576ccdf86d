//! Weighted ISE / ISDCO cost and its replicate-averaged expectation.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exec::{map_indexed, Execution};
use crate::fopid::{build_controller, ControllerParams, OustaloupSpec};
use crate::microgrid::{simulate, Scenario, SimulationTrace};

/// Cost charged for a replicate whose simulation diverged.
pub const DIVERGENCE_PENALTY: f64 = 1e6;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CostSpec {
    /// Weight of the frequency term; `1 − w` goes to the control term.
    pub w: f64,
    /// Normalizer of the control term.
    pub k_n: f64,
    pub t_min: f64,
    pub t_max: f64,
}

impl Default for CostSpec {
    fn default() -> Self {
        Self { w: 0.7, k_n: 1e4, t_min: 100.0, t_max: 220.0 }
    }
}

impl CostSpec {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.w) || !(self.k_n > 0.0) || !(self.t_min < self.t_max) || self.t_min < 0.0 {
            return Err(Error::InvalidParameter(format!("invalid cost spec {self:?}")));
        }
        Ok(())
    }
}

/// `J = ∫[t_min, t_max] w·Δf² + (1−w)/K_n · Δu² dt`, trapezoidal on the
/// trace grid, with `Δu(t) = u(t) − u(t_min)`. Diverged traces cost
/// [`DIVERGENCE_PENALTY`].
pub fn cost(trace: &SimulationTrace, spec: &CostSpec) -> Result<f64> {
    spec.validate()?;
    if trace.diverged {
        return Ok(DIVERGENCE_PENALTY);
    }
    let dt = trace.dt;
    let lo = (spec.t_min / dt).round() as usize;
    let hi = (spec.t_max / dt).round() as usize;
    if hi >= trace.len() {
        return Err(Error::InvalidParameter(format!(
            "trace ends at {} s but the cost window needs {} s",
            trace.t.last().copied().unwrap_or(0.0),
            spec.t_max
        )));
    }
    let u0 = trace.u[lo];
    let wu = (1.0 - spec.w) / spec.k_n;
    let integrand = |k: usize| {
        let du = trace.u[k] - u0;
        spec.w * trace.delta_f[k] * trace.delta_f[k] + wu * du * du
    };
    let interior: f64 = (lo + 1..hi).map(integrand).sum();
    let j = dt * (0.5 * integrand(lo) + interior + 0.5 * integrand(hi));
    Ok(if j.is_finite() { j } else { DIVERGENCE_PENALTY })
}

/// One expensive evaluation: the mean cost over seeded replicates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationRecord {
    pub params: ControllerParams,
    pub j_mean: f64,
    pub j_replicates: Vec<f64>,
    pub diverged_count: usize,
}

impl EvaluationRecord {
    /// Sample standard deviation of the replicate costs.
    pub fn std_dev(&self) -> f64 {
        let n = self.j_replicates.len();
        if n < 2 {
            return 0.0;
        }
        let var = self.j_replicates.iter().map(|j| (j - self.j_mean).powi(2)).sum::<f64>() / (n - 1) as f64;
        var.sqrt()
    }
}

/// Seed of replicate `r` within run seed `run_seed`.
pub fn replicate_seed(run_seed: u64, r: usize) -> u64 {
    run_seed.wrapping_mul(1_000_000).wrapping_add(r as u64)
}

/// The expensive black box: controller parameters in, expected cost out.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ControllerObjective {
    pub scenario: Scenario,
    pub cost: CostSpec,
    pub ora: OustaloupSpec,
    pub n_rep: usize,
    pub exec: Execution,
}

impl Default for ControllerObjective {
    fn default() -> Self {
        Self {
            scenario: Scenario::default(),
            cost: CostSpec::default(),
            ora: OustaloupSpec::default(),
            n_rep: 10,
            exec: Execution::default(),
        }
    }
}

impl ControllerObjective {
    pub fn expected_cost(&self, params: &ControllerParams, run_seed: u64) -> Result<EvaluationRecord> {
        expected_cost(params, self.n_rep, run_seed, &self.scenario, &self.cost, &self.ora, self.exec)
    }
}

pub fn expected_cost(
    params: &ControllerParams,
    n_rep: usize,
    run_seed: u64,
    scenario: &Scenario,
    cost_spec: &CostSpec,
    ora: &OustaloupSpec,
    exec: Execution,
) -> Result<EvaluationRecord> {
    if n_rep == 0 {
        return Err(Error::InvalidParameter("n_rep must be at least 1".into()));
    }
    let template = build_controller(*params, ora)?;
    let outcomes = map_indexed(exec, n_rep, |r| -> Result<(f64, bool)> {
        let mut controller = template.clone();
        let trace = simulate(scenario, &mut controller, replicate_seed(run_seed, r))?;
        Ok((cost(&trace, cost_spec)?, trace.diverged))
    });
    let mut j_replicates = Vec::with_capacity(n_rep);
    let mut diverged_count = 0;
    for o in outcomes {
        let (j, diverged) = o?;
        j_replicates.push(j);
        diverged_count += usize::from(diverged);
    }
    let j_mean = j_replicates.iter().sum::<f64>() / n_rep as f64;
    Ok(EvaluationRecord { params: *params, j_mean, j_replicates, diverged_count })
}
