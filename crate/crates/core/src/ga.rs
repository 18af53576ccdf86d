//! Real-coded genetic algorithm used as the tuning baseline.
//!
//! Each generation keeps the elites, fills the crossover share of the
//! remaining slots with intermediate-crossover children of rank-selected
//! parents and the rest with gaussian mutants. The whole population is
//! evaluated every generation, elites included, since the objective is
//! noisy.

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::history::{Bounds, RunHistory};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GaConfig {
    pub population: usize,
    pub generations: usize,
    pub elite_count: usize,
    pub crossover_fraction: f64,
    /// Mutation standard deviation as a fraction of each range.
    pub mutation_scale: f64,
}

impl Default for GaConfig {
    fn default() -> Self {
        Self { population: 10, generations: 15, elite_count: 2, crossover_fraction: 0.8, mutation_scale: 0.1 }
    }
}

impl GaConfig {
    pub fn validate(&self) -> Result<()> {
        if self.population == 0 || self.generations == 0 {
            return Err(Error::InvalidParameter("population and generations must be positive".into()));
        }
        if self.elite_count >= self.population {
            return Err(Error::InvalidParameter("elite count must be below the population".into()));
        }
        if !(0.0..=1.0).contains(&self.crossover_fraction) || !(self.mutation_scale >= 0.0) {
            return Err(Error::InvalidParameter("crossover fraction in [0, 1], mutation scale >= 0".into()));
        }
        Ok(())
    }

    pub fn budget(&self) -> usize {
        self.population * self.generations
    }

    /// Children per generation made by crossover; the rest are mutants.
    pub fn crossover_count(&self) -> usize {
        ((self.population - self.elite_count) as f64 * self.crossover_fraction).round() as usize
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GaResult {
    pub best_x: Vec<f64>,
    pub best_value: f64,
    pub history: RunHistory,
}

/// Sorting order of `values`, best first, ties by position.
fn ranking(values: &[f64]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]).then(a.cmp(&b)));
    order
}

pub fn run_ga<F>(mut objective: F, bounds: &Bounds, cfg: &GaConfig, seed: u64) -> Result<GaResult>
where
    F: FnMut(&[f64]) -> Result<f64>,
{
    cfg.validate()?;
    bounds.validate()?;
    let n = bounds.dim();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let uniform =
        |rng: &mut ChaCha8Rng| -> Vec<f64> { (0..n).map(|j| rng.random_range(bounds.lo[j]..=bounds.hi[j])).collect() };

    let mut population: Vec<Vec<f64>> = (0..cfg.population).map(|_| uniform(&mut rng)).collect();
    let mut history = RunHistory::default();
    // Rank scaling: the i-th best is drawn with weight 1/√(i+1).
    let weights: Vec<f64> = (0..cfg.population).map(|i| 1.0 / ((i + 1) as f64).sqrt()).collect();
    let picker = WeightedIndex::new(&weights).map_err(|e| Error::InvalidParameter(e.to_string()))?;
    let n_cross = cfg.crossover_count();

    for generation in 0..cfg.generations {
        let mut values = Vec::with_capacity(cfg.population);
        for x in &population {
            let y = objective(x)?;
            history.push(x.clone(), y);
            values.push(y);
        }
        if generation + 1 == cfg.generations {
            break;
        }
        let order = ranking(&values);
        let ranked: Vec<&Vec<f64>> = order.iter().map(|&i| &population[i]).collect();
        let mut next: Vec<Vec<f64>> = ranked[..cfg.elite_count].iter().map(|x| (*x).clone()).collect();
        for _ in 0..n_cross {
            let a = ranked[picker.sample(&mut rng)];
            let b = ranked[picker.sample(&mut rng)];
            next.push((0..n).map(|j| a[j] + rng.random::<f64>() * (b[j] - a[j])).collect());
        }
        while next.len() < cfg.population {
            let p = ranked[picker.sample(&mut rng)];
            let mut child: Vec<f64> = (0..n)
                .map(|j| {
                    let z: f64 = rng.sample(StandardNormal);
                    p[j] + z * cfg.mutation_scale * bounds.range(j)
                })
                .collect();
            bounds.clip(&mut child);
            next.push(child);
        }
        population = next;
    }

    let best = history.best().cloned().ok_or_else(|| Error::InvalidParameter("empty run".into()))?;
    Ok(GaResult { best_x: best.x, best_value: best.value, history })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_configuration_budget() {
        let cfg = GaConfig::default();
        assert_eq!(cfg.budget(), 150);
        assert_eq!(cfg.crossover_count(), 6);
        let mut calls = 0;
        let r = run_ga(
            |x| {
                calls += 1;
                Ok(x.iter().map(|v| v * v).sum())
            },
            &Bounds::fopid(),
            &cfg,
            1,
        )
        .unwrap();
        assert_eq!(calls, 150);
        assert_eq!(r.history.len(), 150);
        assert!(r.history.evaluations.iter().all(|e| Bounds::fopid().contains(&e.x)));
    }

    #[test]
    fn elites_survive_deterministic_objective() {
        let cfg = GaConfig::default();
        let f = |x: &[f64]| Ok(x.iter().map(|v| (v - 1.0).powi(2)).sum::<f64>());
        let r = run_ga(f, &Bounds::pid(), &cfg, 7).unwrap();
        // the best of each generation never gets worse when elites carry over
        let gen_best: Vec<f64> = r
            .history
            .evaluations
            .chunks(cfg.population)
            .map(|g| g.iter().map(|e| e.value).fold(f64::INFINITY, f64::min))
            .collect();
        assert!(gen_best.windows(2).all(|w| w[1] <= w[0]));
    }

    #[test]
    fn invalid_configs() {
        let bad = GaConfig { elite_count: 10, ..GaConfig::default() };
        assert!(run_ga(|_| Ok(0.0), &Bounds::pid(), &bad, 0).is_err());
    }

    #[test]
    fn reproducible() {
        let f = |x: &[f64]| Ok(x[0].sin() + x[1]);
        let cfg = GaConfig::default();
        assert_eq!(run_ga(f, &Bounds::pid(), &cfg, 3).unwrap(), run_ga(f, &Bounds::pid(), &cfg, 3).unwrap());
    }
}
