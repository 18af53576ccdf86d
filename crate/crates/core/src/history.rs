//! Ordered record of expensive evaluations made by an optimizer.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Box constraints of a design space.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Bounds {
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
}

impl Bounds {
    pub fn new(lo: Vec<f64>, hi: Vec<f64>) -> Result<Self> {
        let b = Self { lo, hi };
        b.validate()?;
        Ok(b)
    }

    /// `{Kp, Ki, Kd, λ, μ}` in `[0, 5]³ × [0, 2]²`.
    pub fn fopid() -> Self {
        Self { lo: vec![0.0; 5], hi: crate::fopid::PARAM_UPPER.to_vec() }
    }

    /// `{Kp, Ki, Kd}` in `[0, 5]³`.
    pub fn pid() -> Self {
        Self { lo: vec![0.0; 3], hi: crate::fopid::PARAM_UPPER[..3].to_vec() }
    }

    pub fn validate(&self) -> Result<()> {
        if self.lo.is_empty() || self.lo.len() != self.hi.len() {
            return Err(Error::InvalidParameter("bounds need matching, nonempty lo and hi".into()));
        }
        if self.lo.iter().zip(&self.hi).any(|(l, h)| !(l < h) || !l.is_finite() || !h.is_finite()) {
            return Err(Error::InvalidParameter("bounds need lo < hi in every coordinate".into()));
        }
        Ok(())
    }

    pub fn dim(&self) -> usize {
        self.lo.len()
    }

    pub fn range(&self, i: usize) -> f64 {
        self.hi[i] - self.lo[i]
    }

    pub fn center(&self) -> Vec<f64> {
        self.lo.iter().zip(&self.hi).map(|(l, h)| 0.5 * (l + h)).collect()
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        x.len() == self.dim() && x.iter().zip(self.lo.iter().zip(&self.hi)).all(|(v, (l, h))| (l..=h).contains(&v))
    }

    pub fn clip(&self, x: &mut [f64]) {
        for (i, v) in x.iter_mut().enumerate() {
            *v = v.clamp(self.lo[i], self.hi[i]);
        }
    }

    /// Euclidean distance after scaling every coordinate by its range.
    pub fn scaled_distance(&self, a: &[f64], b: &[f64]) -> f64 {
        a.iter().zip(b).enumerate().map(|(i, (x, y))| ((x - y) / self.range(i)).powi(2)).sum::<f64>().sqrt()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Evaluation {
    pub x: Vec<f64>,
    pub value: f64,
}

/// Evaluations in the order they were made, with the running best.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct RunHistory {
    pub evaluations: Vec<Evaluation>,
    pub best_so_far: Vec<f64>,
}

impl RunHistory {
    pub fn push(&mut self, x: Vec<f64>, value: f64) {
        let best = self.best_so_far.last().map_or(value, |&b| if value < b { value } else { b });
        self.best_so_far.push(best);
        self.evaluations.push(Evaluation { x, value });
    }

    pub fn len(&self) -> usize {
        self.evaluations.len()
    }

    pub fn is_empty(&self) -> bool {
        self.evaluations.is_empty()
    }

    /// Lowest value seen; ties go to the earliest evaluation.
    pub fn best(&self) -> Option<&Evaluation> {
        self.evaluations.iter().fold(None, |acc: Option<&Evaluation>, e| match acc {
            Some(b) if b.value <= e.value => Some(b),
            _ => Some(e),
        })
    }

    pub fn sites(&self) -> Vec<Vec<f64>> {
        self.evaluations.iter().map(|e| e.x.clone()).collect()
    }
}
