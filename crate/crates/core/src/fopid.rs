//! Fractional-order PID controller `C(s) = Kp + Ki / s^λ + Kd · s^μ`.
//!
//! Fractional powers of `s` are realized with the band-limited Oustaloup
//! recursive approximation. Orders above one are split into an exact integer
//! integrator (or differentiator) in series with the approximation of the
//! fractional remainder.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lti::{StateSpaceFilter, TransferFunction};

/// Upper bounds of the tuning box `{Kp, Ki, Kd, λ, μ}`; lower bounds are zero.
pub const PARAM_UPPER: [f64; 5] = [5.0, 5.0, 5.0, 2.0, 2.0];

/// The five tuning knobs. A classical PID has `λ = μ = 1`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ControllerParams {
    pub kp: f64,
    pub ki: f64,
    pub kd: f64,
    pub lambda: f64,
    pub mu: f64,
}

impl ControllerParams {
    pub fn fopid(kp: f64, ki: f64, kd: f64, lambda: f64, mu: f64) -> Self {
        Self { kp, ki, kd, lambda, mu }
    }

    pub fn pid(kp: f64, ki: f64, kd: f64) -> Self {
        Self { kp, ki, kd, lambda: 1.0, mu: 1.0 }
    }

    /// All gains zero: the controller output is identically zero.
    pub fn zero() -> Self {
        Self::pid(0.0, 0.0, 0.0)
    }

    pub fn is_pid(&self) -> bool {
        self.lambda == 1.0 && self.mu == 1.0
    }

    pub fn as_array(&self) -> [f64; 5] {
        [self.kp, self.ki, self.kd, self.lambda, self.mu]
    }

    /// Maps an optimizer design vector to parameters: 5 entries are a full
    /// FOPID, 3 entries a PID with unit orders.
    pub fn from_design(x: &[f64]) -> Result<Self> {
        match x.len() {
            5 => Ok(Self::fopid(x[0], x[1], x[2], x[3], x[4])),
            3 => Ok(Self::pid(x[0], x[1], x[2])),
            n => Err(Error::InvalidParameter(format!("design vector of length {n}"))),
        }
    }

    pub fn validate(&self) -> Result<()> {
        for (i, (&v, &hi)) in self.as_array().iter().zip(PARAM_UPPER.iter()).enumerate() {
            if !(0.0..=hi).contains(&v) {
                let name = ["Kp", "Ki", "Kd", "lambda", "mu"][i];
                return Err(Error::InvalidParameter(format!("{name} = {v} outside [0, {hi}]")));
            }
        }
        Ok(())
    }
}

/// Fitting band and recursion depth of the Oustaloup filter for `s^order`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OustaloupSpec {
    pub order: f64,
    pub omega_b: f64,
    pub omega_h: f64,
    /// Filter order is `2n + 1`.
    pub n: usize,
}

impl Default for OustaloupSpec {
    fn default() -> Self {
        Self { order: 0.5, omega_b: 1e-2, omega_h: 1e2, n: 2 }
    }
}

impl OustaloupSpec {
    pub fn with_order(self, order: f64) -> Self {
        Self { order, ..self }
    }
}

/// Poles, zeros and gain of the Oustaloup filter.
#[derive(Debug, Clone, PartialEq)]
pub struct OustaloupZpk {
    pub gain: f64,
    /// `ω'_k`, the filter zeros sit at `-ω'_k`.
    pub zeros: Vec<f64>,
    /// `ω_k`, the filter poles sit at `-ω_k`.
    pub poles: Vec<f64>,
}

pub fn oustaloup_zpk(spec: &OustaloupSpec) -> Result<OustaloupZpk> {
    let alpha = spec.order;
    if !(alpha > -1.0 && alpha < 1.0) || alpha == 0.0 {
        return Err(Error::InvalidParameter(format!("Oustaloup order {alpha} must lie in (-1, 1) and be nonzero")));
    }
    if !(spec.omega_b > 0.0 && spec.omega_b < spec.omega_h) || spec.n == 0 {
        return Err(Error::InvalidParameter("Oustaloup band must satisfy 0 < wb < wh, N >= 1".into()));
    }
    let ratio = spec.omega_h / spec.omega_b;
    let n = spec.n as f64;
    let denom = 2.0 * n + 1.0;
    let mut zeros = Vec::with_capacity(2 * spec.n + 1);
    let mut poles = Vec::with_capacity(2 * spec.n + 1);
    for k in -(spec.n as i64)..=(spec.n as i64) {
        let k = k as f64;
        poles.push(spec.omega_b * ratio.powf((k + n + 0.5 * (1.0 + alpha)) / denom));
        zeros.push(spec.omega_b * ratio.powf((k + n + 0.5 * (1.0 - alpha)) / denom));
    }
    Ok(OustaloupZpk { gain: spec.omega_h.powf(alpha), zeros, poles })
}

/// Rational approximation of `s^order` over the spec's band.
pub fn oustaloup(spec: &OustaloupSpec) -> Result<TransferFunction> {
    let zpk = oustaloup_zpk(spec)?;
    let mut tf = TransferFunction::gain(zpk.gain);
    for (z, p) in zpk.zeros.iter().zip(&zpk.poles) {
        tf = tf.series(&TransferFunction::new(vec![1.0, *z], vec![1.0, *p])?);
    }
    Ok(tf)
}

/// Splits an order in `[0, 2]` into its integer part and fractional remainder.
fn split_order(order: f64) -> (usize, f64) {
    let whole = order.floor();
    (whole as usize, order - whole)
}

/// Integral branch transfer `1/s^λ`.
pub fn integral_branch_tf(lambda: f64, template: &OustaloupSpec) -> Result<TransferFunction> {
    let (whole, frac) = split_order(lambda);
    let exact = TransferFunction::integrator(whole);
    if frac == 0.0 {
        Ok(exact)
    } else {
        Ok(exact.series(&oustaloup(&template.with_order(-frac))?))
    }
}

/// Derivative branch `s^μ`: `whole` backward differences of the input feed a
/// proper filter approximating the fractional remainder.
#[derive(Debug, Clone)]
struct DerivativeBranch {
    differences: usize,
    history: [f64; 2],
    primed: bool,
    filter: StateSpaceFilter,
}

impl DerivativeBranch {
    fn new(mu: f64, template: &OustaloupSpec) -> Result<Self> {
        let (whole, frac) = split_order(mu);
        let tf = if frac == 0.0 { TransferFunction::gain(1.0) } else { oustaloup(&template.with_order(frac))? };
        Ok(Self { differences: whole, history: [0.0; 2], primed: false, filter: StateSpaceFilter::from_tf(&tf)? })
    }

    /// Input to the filter after the integer differences at the current sample.
    fn differenced(&mut self, e: f64, dt: f64) -> f64 {
        if !self.primed {
            self.history = [e, e];
            self.primed = true;
        }
        let out = match self.differences {
            0 => e,
            1 => (e - self.history[0]) / dt,
            _ => (e - 2.0 * self.history[0] + self.history[1]) / (dt * dt),
        };
        self.history[1] = self.history[0];
        self.history[0] = e;
        out
    }
}

/// A controller ready to run inside a simulation; state starts at zero.
#[derive(Debug, Clone)]
pub struct RealizedController {
    params: ControllerParams,
    integral: StateSpaceFilter,
    derivative: DerivativeBranch,
    integral_out: f64,
    derivative_out: f64,
    t: f64,
}

pub fn build_controller(params: ControllerParams, template: &OustaloupSpec) -> Result<RealizedController> {
    params.validate()?;
    let integral = StateSpaceFilter::from_tf(&integral_branch_tf(params.lambda, template)?)?;
    let derivative = DerivativeBranch::new(params.mu, template)?;
    Ok(RealizedController { params, integral, derivative, integral_out: 0.0, derivative_out: 0.0, t: 0.0 })
}

impl RealizedController {
    pub fn params(&self) -> &ControllerParams {
        &self.params
    }

    /// Number of continuous states across both branches.
    pub fn order(&self) -> usize {
        self.integral.order() + self.derivative.filter.order()
    }

    pub fn reset(&mut self) {
        self.integral.reset();
        self.derivative.filter.reset();
        self.derivative.primed = false;
        self.integral_out = 0.0;
        self.derivative_out = 0.0;
        self.t = 0.0;
    }

    /// Integral-branch output at the last update.
    pub fn integral_output(&self) -> f64 {
        self.integral_out
    }

    pub fn derivative_output(&self) -> f64 {
        self.derivative_out
    }

    /// Consumes the error sample `e` at the current time and returns the
    /// control signal `u = Kp·e + Ki·I[e] + Kd·D[e]`, then advances both
    /// branches by `dt` with `e` held. In the plant, `e = −Δf`.
    pub fn update(&mut self, e: f64, dt: f64) -> Result<f64> {
        let d_in = self.derivative.differenced(e, dt);
        self.integral_out = self.integral.output(e);
        self.derivative_out = self.derivative.filter.output(d_in);
        let u = self.params.kp * e + self.params.ki * self.integral_out + self.params.kd * self.derivative_out;
        if !u.is_finite() {
            return Err(Error::Diverged { t: self.t });
        }
        self.integral.step(e, self.t, dt)?;
        self.derivative.filter.step(d_in, self.t, dt)?;
        self.t += dt;
        Ok(u)
    }
}
