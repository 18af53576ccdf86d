//! Kriging-assisted global optimization with candidate-point infill.
//!
//! A symmetric Latin hypercube seeds the model; every further evaluation is
//! the candidate that best trades predicted value against distance from the
//! points already sampled.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exec::{map_indexed, Execution};
use crate::history::{Bounds, RunHistory};
use crate::kriging::{fit, Kernel, KrigingModel, MleOptions, ThetaChoice, TrainingSet};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InfillConfig {
    pub n_perturbed: usize,
    pub n_uniform: usize,
    /// Standard deviation of the perturbations, as a fraction of each range.
    pub perturbation: f64,
    /// Response-surface weights, cycled over the infill iterations.
    pub weights: Vec<f64>,
    /// Range-scaled distance below which a candidate duplicates a sampled site.
    pub duplicate_tol: f64,
    /// Shrink/grow the perturbation with the run's failures and successes.
    pub adaptive: Option<StepAdaptation>,
}

/// Perturbation schedule: halve after `fail_limit` consecutive infill
/// points without improvement, double after `success_limit` consecutive
/// improvements, never below `min_fraction` of the starting scale nor
/// above the starting scale.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StepAdaptation {
    pub fail_limit: usize,
    pub success_limit: usize,
    pub min_fraction: f64,
    /// Relative improvement of the best value that counts as a success.
    pub improvement: f64,
}

impl Default for StepAdaptation {
    fn default() -> Self {
        Self { fail_limit: 5, success_limit: 3, min_fraction: 0.5f64.powi(6), improvement: 1e-3 }
    }
}

#[derive(Debug, Clone, Copy)]
struct StepState {
    scale: f64,
    fails: usize,
    successes: usize,
}

impl StepState {
    fn update(&mut self, rule: &StepAdaptation, start: f64, dim: usize, improved: bool) {
        if improved {
            self.successes += 1;
            self.fails = 0;
        } else {
            self.fails += 1;
            self.successes = 0;
        }
        if self.fails >= rule.fail_limit.max(dim) {
            self.scale = (self.scale * 0.5).max(start * rule.min_fraction);
            self.fails = 0;
        } else if self.successes >= rule.success_limit {
            self.scale = (self.scale * 2.0).min(start);
            self.successes = 0;
        }
    }
}

impl Default for InfillConfig {
    fn default() -> Self {
        Self {
            n_perturbed: 500,
            n_uniform: 500,
            perturbation: 0.2,
            weights: vec![0.3, 0.5, 0.8, 0.95],
            duplicate_tol: 1e-6,
            adaptive: Some(StepAdaptation::default()),
        }
    }
}

impl InfillConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_perturbed + self.n_uniform == 0 {
            return Err(Error::InvalidParameter("no candidates requested".into()));
        }
        if self.weights.is_empty() || self.weights.iter().any(|w| !(0.0..=1.0).contains(w)) {
            return Err(Error::InvalidParameter("weights must be a nonempty list in [0, 1]".into()));
        }
        if !(self.perturbation >= 0.0) || !(self.duplicate_tol >= 0.0) {
            return Err(Error::InvalidParameter("perturbation and duplicate tolerance must be nonnegative".into()));
        }
        Ok(())
    }
}

/// Map applied to responses before they are modelled.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum ResponseTransform {
    Identity,
    /// `ln y`; suited to positive costs spanning several decades.
    #[default]
    Log,
}

impl ResponseTransform {
    pub fn apply(self, y: f64) -> f64 {
        match self {
            ResponseTransform::Identity => y,
            ResponseTransform::Log => y.max(f64::MIN_POSITIVE).ln(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SurrogateConfig {
    pub kernel: Kernel,
    pub budget: usize,
    pub initial: usize,
    pub infill: InfillConfig,
    pub transform: ResponseTransform,
    /// Replace transformed responses above their median by the median
    /// before fitting, so bad regions do not dominate the model.
    pub cap_at_median: bool,
    /// Likelihood evaluations allowed per θ search.
    pub mle_evals: usize,
    /// Candidate predictions run through this.
    pub exec: Execution,
}

impl Default for SurrogateConfig {
    fn default() -> Self {
        Self {
            kernel: Kernel::Spline,
            budget: 150,
            initial: 50,
            infill: InfillConfig::default(),
            transform: ResponseTransform::default(),
            cap_at_median: false,
            mle_evals: 200,
            exec: Execution::default(),
        }
    }
}

/// Symmetric Latin hypercube: `k` rows at stratum centres, each column
/// visiting every one of the `k` strata once, rows `i` and `k−1−i`
/// mirrored through the centre of the box.
pub fn slhs(k: usize, bounds: &Bounds, seed: u64) -> Result<Vec<Vec<f64>>> {
    bounds.validate()?;
    let n = bounds.dim();
    if !k.is_multiple_of(2) || k == 0 {
        return Err(Error::InvalidParameter(format!("symmetric design needs an even size, got {k}")));
    }
    if k < 2 * n {
        return Err(Error::InvalidParameter(format!("design size {k} below 2n = {}", 2 * n)));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let half = k / 2;
    let mut strata = vec![vec![0usize; n]; k];
    for j in 0..n {
        let mut perm: Vec<usize> = (0..half).collect();
        perm.shuffle(&mut rng);
        for (i, &s) in perm.iter().enumerate() {
            let s = if rng.random::<bool>() { k - 1 - s } else { s };
            strata[i][j] = s;
            strata[k - 1 - i][j] = k - 1 - s;
        }
    }
    Ok(strata
        .into_iter()
        .map(|row| {
            row.iter().enumerate().map(|(j, &s)| bounds.lo[j] + (s as f64 + 0.5) / k as f64 * bounds.range(j)).collect()
        })
        .collect())
}

/// Gaussian perturbations of `best` plus uniform draws, with anything
/// within the duplicate tolerance of a sampled site removed.
pub fn propose_candidates(
    best: &[f64],
    bounds: &Bounds,
    cfg: &InfillConfig,
    sampled: &[Vec<f64>],
    rng: &mut ChaCha8Rng,
) -> Vec<Vec<f64>> {
    propose_with_scale(best, bounds, cfg, cfg.perturbation, sampled, rng).0
}

/// Candidates and how many of them, at the front, are perturbations.
fn propose_with_scale(
    best: &[f64],
    bounds: &Bounds,
    cfg: &InfillConfig,
    scale: f64,
    sampled: &[Vec<f64>],
    rng: &mut ChaCha8Rng,
) -> (Vec<Vec<f64>>, usize) {
    let n = bounds.dim();
    let mut out = Vec::with_capacity(cfg.n_perturbed + cfg.n_uniform);
    for _ in 0..cfg.n_perturbed {
        let mut c: Vec<f64> = (0..n)
            .map(|j| {
                let z: f64 = rng.sample(StandardNormal);
                best[j] + z * scale * bounds.range(j)
            })
            .collect();
        bounds.clip(&mut c);
        out.push(c);
    }
    for _ in 0..cfg.n_uniform {
        out.push((0..n).map(|j| rng.random_range(bounds.lo[j]..=bounds.hi[j])).collect());
    }
    let fresh = |c: &Vec<f64>| sampled.iter().all(|s| bounds.scaled_distance(c, s) > cfg.duplicate_tol);
    let n_local = out[..cfg.n_perturbed].iter().filter(|c| fresh(c)).count();
    out.retain(fresh);
    (out, n_local)
}

fn min_max_normalize(v: &[f64]) -> Vec<f64> {
    let lo = v.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if hi > lo {
        v.iter().map(|x| (x - lo) / (hi - lo)).collect()
    } else {
        vec![1.0; v.len()]
    }
}

/// Index minimizing `w·V_rs + (1−w)·V_dist` from raw predictions and
/// nearest-site distances. Without predictions only distance counts.
/// Ties go to the lowest index.
pub fn select_by_score(predictions: Option<&[f64]>, min_dist: &[f64], w_rs: f64) -> usize {
    let neg: Vec<f64> = min_dist.iter().map(|d| -d).collect();
    let v_dist = min_max_normalize(&neg);
    let scores: Vec<f64> = match predictions {
        Some(p) => {
            let v_rs = min_max_normalize(p);
            v_rs.iter().zip(&v_dist).map(|(r, d)| w_rs * r + (1.0 - w_rs) * d).collect()
        }
        None => v_dist,
    };
    let mut best = 0;
    for (i, s) in scores.iter().enumerate() {
        if *s < scores[best] {
            best = i;
        }
    }
    best
}

/// Scores candidates against the model and the sampled sites.
pub fn score_and_select(
    model: Option<&KrigingModel>,
    candidates: &[Vec<f64>],
    sampled: &[Vec<f64>],
    bounds: &Bounds,
    w_rs: f64,
    exec: Execution,
) -> Result<usize> {
    if candidates.is_empty() {
        return Err(Error::InvalidParameter("no candidates to score".into()));
    }
    let min_dist: Vec<f64> = map_indexed(exec, candidates.len(), |i| {
        sampled.iter().map(|s| bounds.scaled_distance(&candidates[i], s)).fold(f64::INFINITY, f64::min)
    });
    let pred = model.map(|m| map_indexed(exec, candidates.len(), |i| m.predict(&candidates[i])));
    Ok(select_by_score(pred.as_deref(), &min_dist, w_rs))
}

#[derive(Debug, Clone, PartialEq)]
pub struct OptimizationResult {
    pub best_x: Vec<f64>,
    pub best_value: f64,
    pub history: RunHistory,
    /// Infill iterations that fell back to the distance criterion.
    pub fit_failures: usize,
}

/// Kriging model of the run so far, on the transformed (and possibly
/// capped) responses the optimizer ranks candidates with.
pub fn fit_surrogate(history: &RunHistory, cfg: &SurrogateConfig, theta: ThetaChoice) -> Result<KrigingModel> {
    let mut values: Vec<f64> = history.evaluations.iter().map(|e| cfg.transform.apply(e.value)).collect();
    if cfg.cap_at_median && !values.is_empty() {
        let mut sorted = values.clone();
        sorted.sort_by(f64::total_cmp);
        let med = sorted[sorted.len() / 2];
        values.iter_mut().for_each(|v| *v = v.min(med));
    }
    let ts = TrainingSet::from_rows(&history.sites(), &values)?;
    fit(&ts, cfg.kernel, theta)
}

/// Spends exactly `cfg.budget` calls of `objective`: the initial design,
/// then one infill point per iteration. Errors from the objective abort
/// the run.
pub fn optimize<F>(mut objective: F, bounds: &Bounds, cfg: &SurrogateConfig, seed: u64) -> Result<OptimizationResult>
where
    F: FnMut(&[f64]) -> Result<f64>,
{
    cfg.infill.validate()?;
    if cfg.budget < cfg.initial {
        return Err(Error::InvalidParameter(format!("budget {} below initial design {}", cfg.budget, cfg.initial)));
    }
    let design = slhs(cfg.initial, bounds, seed)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(1);
    let mut history = RunHistory::default();
    for x in design {
        let y = objective(&x)?;
        history.push(x, y);
    }

    let mut theta: Option<Vec<f64>> = None;
    let mut fit_failures = 0;
    let mut step = StepState { scale: cfg.infill.perturbation, fails: 0, successes: 0 };
    for iter in 0..cfg.budget - cfg.initial {
        let sites = history.sites();
        let opts = MleOptions {
            start: theta.clone(),
            max_evals: cfg.mle_evals,
            initial_step: if theta.is_some() { 0.5 } else { 1.0 },
            ..MleOptions::default()
        };
        let model = fit_surrogate(&history, cfg, ThetaChoice::Mle(opts));
        let model = match model {
            Ok(m) => {
                theta = Some(m.theta().to_vec());
                Some(m)
            }
            Err(_) => {
                fit_failures += 1;
                None
            }
        };

        let best = history.best().map(|e| e.x.clone()).unwrap_or_else(|| bounds.center());
        let mut proposal = propose_with_scale(&best, bounds, &cfg.infill, step.scale, &sites, &mut rng);
        if proposal.0.is_empty() {
            proposal = propose_with_scale(&best, bounds, &cfg.infill, step.scale, &sites, &mut rng);
        }
        let (mut candidates, n_local) = proposal;
        // Only a perturbation of the best point says anything about the step size.
        let (x, local) = if candidates.is_empty() {
            ((0..bounds.dim()).map(|j| rng.random_range(bounds.lo[j]..=bounds.hi[j])).collect(), false)
        } else {
            let w = cfg.infill.weights[iter % cfg.infill.weights.len()];
            let i = score_and_select(model.as_ref(), &candidates, &sites, bounds, w, cfg.exec)?;
            (candidates.swap_remove(i), i < n_local)
        };
        let y = objective(&x)?;
        let incumbent = history.best_so_far.last().copied().unwrap_or(f64::INFINITY);
        if let (Some(rule), true) = (&cfg.infill.adaptive, local) {
            let improved = y < incumbent - rule.improvement * incumbent.abs();
            step.update(rule, cfg.infill.perturbation, bounds.dim(), improved);
        }
        history.push(x, y);
    }

    let best = history.best().cloned().ok_or_else(|| Error::InvalidParameter("zero budget".into()))?;
    Ok(OptimizationResult { best_x: best.x, best_value: best.value, history, fit_failures })
}
