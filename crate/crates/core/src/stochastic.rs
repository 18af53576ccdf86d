//! Stochastic wind, solar and load power templates.
//!
//! Each series is `P = χ·Γ(t)` where `χ = (η√β·(1 − G(s))[φ] + β)/β` is a
//! noisy multiplier around one driven by uniform white noise `φ ~ U(−1, 1)`
//! and `Γ` is a deterministic schedule of Heaviside steps.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lti::{StateSpaceFilter, TransferFunction};

/// Step onsets are compared with this slack so grid times like `14000 · 0.01`
/// land on the step regardless of rounding.
const ONSET_SLACK: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ProfileKind {
    Wind,
    Solar,
    Load,
}

impl ProfileKind {
    fn stream(self) -> u64 {
        match self {
            ProfileKind::Wind => 1,
            ProfileKind::Solar => 2,
            ProfileKind::Load => 3,
        }
    }
}

/// `gain · h(t − onset)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Step {
    pub gain: f64,
    pub onset: f64,
}

impl Step {
    pub fn new(gain: f64, onset: f64) -> Self {
        Self { gain, onset }
    }
}

fn sum_active(steps: &[Step], t: f64) -> f64 {
    steps.iter().filter(|s| t + ONSET_SLACK >= s.onset).map(|s| s.gain).sum()
}

/// The `Γ(t)` schedule. When `divide_by_chi` is set the main terms are
/// divided by the instantaneous `χ` (load template); `extra` terms are added
/// afterwards without division.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SwitchingSignal {
    pub terms: Vec<Step>,
    pub divide_by_chi: bool,
    pub extra: Vec<Step>,
}

impl SwitchingSignal {
    pub fn steps(terms: Vec<Step>) -> Result<Self> {
        let s = Self { terms, divide_by_chi: false, extra: Vec::new() };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        for group in [&self.terms, &self.extra] {
            if group.iter().any(|s| s.onset < 0.0 || !s.onset.is_finite() || !s.gain.is_finite()) {
                return Err(Error::InvalidParameter("step onsets must be finite and non-negative".into()));
            }
            if group.windows(2).any(|w| w[0].onset > w[1].onset) {
                return Err(Error::InvalidParameter("step onsets must be sorted".into()));
            }
        }
        Ok(())
    }

    /// Onset times of all steps, sorted and deduplicated.
    pub fn onsets(&self) -> Vec<f64> {
        let mut v: Vec<f64> = self.terms.iter().chain(&self.extra).map(|s| s.onset).collect();
        v.sort_by(f64::total_cmp);
        v.dedup();
        v
    }

    /// The schedule with `χ = 1`: the power level the template fluctuates around.
    pub fn mean_level(&self, t: f64) -> f64 {
        sum_active(&self.terms, t) + sum_active(&self.extra, t)
    }
}

/// `Γ(t)` for a given `χ`.
pub fn gamma_value(gamma: &SwitchingSignal, t: f64, chi: f64) -> Result<f64> {
    let main = sum_active(&gamma.terms, t);
    let main = if gamma.divide_by_chi {
        if chi == 0.0 {
            return Err(Error::DegenerateInput("chi = 0 in a divide-by-chi schedule".into()));
        }
        main / chi
    } else {
        main
    };
    Ok(main + sum_active(&gamma.extra, t))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExogenousProfile {
    pub kind: ProfileKind,
    pub eta: f64,
    pub beta: f64,
    /// Noise-shaping low-pass `G(s)`.
    pub shaping: TransferFunction,
    pub gamma: SwitchingSignal,
    /// When false, `φ ≡ 0` and the series equals `Γ` with `χ = 1`.
    pub noise: bool,
}

impl ExogenousProfile {
    pub fn without_noise(mut self) -> Self {
        self.noise = false;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.beta > 0.0) {
            return Err(Error::InvalidParameter("beta must be positive".into()));
        }
        self.gamma.validate()
    }
}

/// The wind, solar and load templates used throughout.
pub fn standard_profiles() -> (ExogenousProfile, ExogenousProfile, ExogenousProfile) {
    let slow = TransferFunction::lag(1.0, 1e4);
    let wind = ExogenousProfile {
        kind: ProfileKind::Wind,
        eta: 0.8,
        beta: 10.0,
        shaping: slow.clone(),
        gamma: SwitchingSignal {
            terms: vec![Step::new(0.24, 0.0), Step::new(-0.04, 140.0)],
            divide_by_chi: false,
            extra: vec![],
        },
        noise: true,
    };
    let solar = ExogenousProfile {
        kind: ProfileKind::Solar,
        eta: 0.1,
        beta: 10.0,
        shaping: slow,
        gamma: SwitchingSignal {
            terms: vec![Step::new(0.05, 0.0), Step::new(0.02, 180.0)],
            divide_by_chi: false,
            extra: vec![],
        },
        noise: true,
    };
    let load = ExogenousProfile {
        kind: ProfileKind::Load,
        eta: 0.9,
        beta: 10.0,
        shaping: TransferFunction::lag(300.0, 300.0).parallel(&TransferFunction::lag(1.0, 1800.0)),
        gamma: SwitchingSignal {
            terms: vec![
                Step::new(0.9, 0.0),
                Step::new(0.03, 110.0),
                Step::new(0.03, 130.0),
                Step::new(0.03, 150.0),
                Step::new(-0.15, 170.0),
                Step::new(0.1, 190.0),
            ],
            divide_by_chi: true,
            extra: vec![Step::new(0.02, 0.0)],
        },
        noise: true,
    };
    (wind, solar, load)
}

/// A generated series on the grid `t_k = k·dt`, `k = 0..=⌊t_end/dt⌋`.
#[derive(Debug, Clone, PartialEq)]
pub struct ProfileSeries {
    pub power: Vec<f64>,
    pub chi: Vec<f64>,
}

/// Number of grid samples on `[0, t_end]`.
pub fn grid_len(t_end: f64, dt: f64) -> usize {
    (t_end / dt + 1e-9).floor() as usize + 1
}

/// Generates one realization. The noise stream is fully determined by
/// `seed` and the profile kind.
pub fn generate(profile: &ExogenousProfile, t_end: f64, dt: f64, seed: u64) -> Result<ProfileSeries> {
    if !(t_end > 0.0 && dt > 0.0) {
        return Err(Error::InvalidParameter("t_end and dt must be positive".into()));
    }
    profile.validate()?;
    let len = grid_len(t_end, dt);
    let mut power = Vec::with_capacity(len);
    let mut chi_series = Vec::with_capacity(len);

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(profile.kind.stream());
    let mut shaping = StateSpaceFilter::from_tf(&profile.shaping)?;
    let amplitude = profile.eta * profile.beta.sqrt() / profile.beta;

    for k in 0..len {
        let t = k as f64 * dt;
        let chi = if profile.noise {
            let phi: f64 = rng.random_range(-1.0..1.0);
            let highpass = phi - shaping.output(phi);
            shaping.step(phi, t, dt)?;
            1.0 + amplitude * highpass
        } else {
            1.0
        };
        let gamma = &profile.gamma;
        // χ·(B/χ + extra) is evaluated as B + χ·extra so χ → 0 stays finite.
        let p = if gamma.divide_by_chi {
            sum_active(&gamma.terms, t) + chi * sum_active(&gamma.extra, t)
        } else {
            chi * gamma_value(gamma, t, chi)?
        };
        power.push(p);
        chi_series.push(chi);
    }
    Ok(ProfileSeries { power, chi: chi_series })
}
