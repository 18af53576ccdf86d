//! Islanded microgrid load-frequency plant.
//!
//! Block wiring (all powers in pu, frequency deviation in Hz):
//!
//! ```text
//! wind  ─ K_WTG/(T_WTG s+1) ───────────────────────────────► P_WTG ─┐
//! solar ─ 1/(T_IN s+1) · 1/(T_IC s+1) ─────────────────────► P_PV  ─┤
//! u     ─ 1/(T_FC s+1) · 1/(T_IC s+1) · 1/(T_IN s+1) ─ sat/rate ─► P_FC ─┤ + ΔP ─ 1/(2H s + D) ─► Δf
//! u−Δf/R─ 1/(T_g s+1) · 1/(T_t s+1) ─────────── sat/rate ─► P_DEG ─┤
//! Δf    ─ K_FESS/(T_FESS s+1) ──────────────── sat/rate ─► P_FESS ─┤ −
//! Δf    ─ K_BESS/(T_BESS s+1) ──────────────── sat/rate ─► P_BESS ─┤ −
//! load  ─────────────────────────────────────────────────► P_L   ─┘ −
//! ```
//!
//! The controller sees `e = −Δf` and drives both the fuel cell and the
//! diesel generator. Cascaded lags are merged into one realization per path
//! and every realization is advanced with a zero-order-hold input.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fopid::RealizedController;
use crate::lti::{StateSpaceFilter, TransferFunction};
use crate::stochastic::{generate, grid_len, standard_profiles, ExogenousProfile};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MicrogridParams {
    pub k_wtg: f64,
    pub k_fess: f64,
    pub k_bess: f64,
    /// Damping, pu/Hz.
    pub d: f64,
    /// Inertia constant `2H`, pu·s.
    pub m: f64,
    /// Droop, Hz/pu.
    pub r: f64,
    pub t_fess: f64,
    pub t_bess: f64,
    pub t_fc: f64,
    pub t_wtg: f64,
    pub t_g: f64,
    pub t_t: f64,
    pub t_ic: f64,
    pub t_in: f64,
}

impl Default for MicrogridParams {
    fn default() -> Self {
        Self {
            k_wtg: 1.0,
            k_fess: 1.0,
            k_bess: 1.0,
            d: 0.015,
            m: 0.1667,
            r: 3.0,
            t_fess: 0.1,
            t_bess: 0.1,
            t_fc: 0.26,
            t_wtg: 1.5,
            t_g: 0.08,
            t_t: 0.4,
            t_ic: 0.004,
            t_in: 0.04,
        }
    }
}

impl MicrogridParams {
    pub const FIELDS: [&'static str; 14] = [
        "K_WTG", "K_FESS", "K_BESS", "D", "2H", "R", "T_FESS", "T_BESS", "T_FC", "T_WTG", "T_g", "T_t", "T_IC", "T_IN",
    ];

    fn slot(&mut self, name: &str) -> Option<&mut f64> {
        Some(match name {
            "K_WTG" => &mut self.k_wtg,
            "K_FESS" => &mut self.k_fess,
            "K_BESS" => &mut self.k_bess,
            "D" => &mut self.d,
            "2H" | "M" => &mut self.m,
            "R" => &mut self.r,
            "T_FESS" => &mut self.t_fess,
            "T_BESS" => &mut self.t_bess,
            "T_FC" => &mut self.t_fc,
            "T_WTG" => &mut self.t_wtg,
            "T_g" => &mut self.t_g,
            "T_t" => &mut self.t_t,
            "T_IC" => &mut self.t_ic,
            "T_IN" => &mut self.t_in,
            _ => return None,
        })
    }

    pub fn get(&self, name: &str) -> Option<f64> {
        let mut copy = *self;
        copy.slot(name).map(|v| *v)
    }

    pub fn set(&mut self, name: &str, value: f64) -> Result<()> {
        let slot =
            self.slot(name).ok_or_else(|| Error::InvalidParameter(format!("unknown microgrid parameter {name}")))?;
        *slot = value;
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        for name in Self::FIELDS {
            let v = self.get(name).unwrap_or(f64::NAN);
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::InvalidParameter(format!("{name} must be positive, got {v}")));
            }
        }
        Ok(())
    }
}

/// Output saturation followed by a symmetric slew bound.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Limiter {
    pub lo: f64,
    pub hi: f64,
    /// pu/s.
    pub rate: f64,
}

impl Limiter {
    pub fn new(lo: f64, hi: f64, rate: f64) -> Result<Self> {
        if !(lo < hi) || !(rate > 0.0) {
            return Err(Error::InvalidParameter(format!("limiter needs lo < hi and rate > 0 ({lo}, {hi}, {rate})")));
        }
        Ok(Self { lo, hi, rate })
    }

    pub fn saturate(&self, v: f64) -> f64 {
        v.clamp(self.lo, self.hi)
    }
}

/// Clamp to `[lo, hi]`, then to `previous ± rate·dt`.
pub fn apply_limiter(l: &Limiter, requested: f64, previous: f64, dt: f64) -> f64 {
    let step = l.rate * dt;
    l.saturate(requested).clamp(previous - step, previous + step)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Limits {
    pub fess: Limiter,
    pub bess: Limiter,
    pub fc: Limiter,
    pub deg: Limiter,
}

impl Default for Limits {
    fn default() -> Self {
        Self {
            fess: Limiter { lo: -0.11, hi: 0.11, rate: 0.05 },
            bess: Limiter { lo: -0.11, hi: 0.11, rate: 0.05 },
            fc: Limiter { lo: 0.0, hi: 0.48, rate: 1.0 },
            deg: Limiter { lo: 0.0, hi: 0.45, rate: 0.5 },
        }
    }
}

/// On/off gating of the fuel cell and diesel generator.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SwitchingPolicy {
    pub enabled: bool,
    /// Hz.
    pub deadband: f64,
    /// s.
    pub min_on_time: f64,
}

impl Default for SwitchingPolicy {
    fn default() -> Self {
        Self { enabled: false, deadband: 0.05, min_on_time: 10.0 }
    }
}

impl SwitchingPolicy {
    pub fn gated() -> Self {
        Self { enabled: true, ..Self::default() }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.deadband > 0.0) || !(self.min_on_time >= 0.0) {
            return Err(Error::InvalidParameter("switching policy needs deadband > 0, min_on_time >= 0".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct GateState {
    pub on: bool,
    pub on_since: f64,
}

/// Updates the gate. Off→on as soon as `|Δf| ≥ deadband`; on→off only once
/// `|Δf| < deadband` and the gate has been on for at least `min_on_time`.
pub fn actuator_gate(policy: &SwitchingPolicy, delta_f: f64, state: &mut GateState, t: f64) -> bool {
    let outside = delta_f.abs() >= policy.deadband;
    if state.on {
        if !outside && t - state.on_since >= policy.min_on_time - 1e-9 {
            state.on = false;
        }
    } else if outside {
        state.on = true;
        state.on_since = t;
    }
    state.on
}

/// Which plant components are connected. The standard wiring has all of them.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Topology {
    pub wind: bool,
    pub solar: bool,
    pub fuel_cell: bool,
    pub diesel: bool,
    pub flywheel: bool,
    pub battery: bool,
    /// Droop feedback `−Δf/R` summed into the diesel governor input.
    pub droop: bool,
}

impl Default for Topology {
    fn default() -> Self {
        Self { wind: true, solar: true, fuel_cell: true, diesel: true, flywheel: true, battery: true, droop: true }
    }
}

/// Everything a closed-loop run needs apart from the controller and seed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub params: MicrogridParams,
    pub limits: Limits,
    pub wind: ExogenousProfile,
    pub solar: ExogenousProfile,
    pub load: ExogenousProfile,
    pub topology: Topology,
    pub policy: SwitchingPolicy,
    pub t_end: f64,
    pub dt: f64,
    /// Start the renewable source lags at the steady state of their first
    /// input instead of zero.
    pub equilibrium_start: bool,
}

impl Default for Scenario {
    fn default() -> Self {
        let (wind, solar, load) = standard_profiles();
        Self {
            params: MicrogridParams::default(),
            limits: Limits::default(),
            wind,
            solar,
            load,
            topology: Topology::default(),
            policy: SwitchingPolicy::default(),
            t_end: 220.0,
            dt: 0.01,
            equilibrium_start: false,
        }
    }
}

impl Scenario {
    pub fn without_noise(mut self) -> Self {
        self.wind.noise = false;
        self.solar.noise = false;
        self.load.noise = false;
        self
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GateEvent {
    pub t: f64,
    pub on: bool,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct SimulationTrace {
    pub t: Vec<f64>,
    pub delta_f: Vec<f64>,
    pub u: Vec<f64>,
    pub delta_p: Vec<f64>,
    pub p_wtg: Vec<f64>,
    pub p_pv: Vec<f64>,
    pub p_fc: Vec<f64>,
    pub p_deg: Vec<f64>,
    pub p_fess: Vec<f64>,
    pub p_bess: Vec<f64>,
    pub p_load: Vec<f64>,
    pub gate_events: Vec<GateEvent>,
    pub diverged: bool,
    pub dt: f64,
}

impl SimulationTrace {
    fn with_capacity(n: usize, dt: f64) -> Self {
        let v = || Vec::with_capacity(n);
        Self {
            t: v(),
            delta_f: v(),
            u: v(),
            delta_p: v(),
            p_wtg: v(),
            p_pv: v(),
            p_fc: v(),
            p_deg: v(),
            p_fess: v(),
            p_bess: v(),
            p_load: v(),
            gate_events: Vec::new(),
            diverged: false,
            dt,
        }
    }

    pub fn len(&self) -> usize {
        self.t.len()
    }

    pub fn is_empty(&self) -> bool {
        self.t.is_empty()
    }
}

fn chain(blocks: &[TransferFunction]) -> TransferFunction {
    blocks.iter().skip(1).fold(blocks[0].clone(), |acc, b| acc.series(b))
}

struct Plant {
    wtg: StateSpaceFilter,
    pv: StateSpaceFilter,
    fc: StateSpaceFilter,
    deg: StateSpaceFilter,
    fess: StateSpaceFilter,
    bess: StateSpaceFilter,
    swing: StateSpaceFilter,
}

impl Plant {
    fn new(p: &MicrogridParams) -> Result<Self> {
        let lag = TransferFunction::lag;
        Ok(Self {
            wtg: StateSpaceFilter::from_tf(&lag(p.k_wtg, p.t_wtg))?,
            pv: StateSpaceFilter::from_tf(&chain(&[lag(1.0, p.t_in), lag(1.0, p.t_ic)]))?,
            fc: StateSpaceFilter::from_tf(&chain(&[lag(1.0, p.t_fc), lag(1.0, p.t_ic), lag(1.0, p.t_in)]))?,
            deg: StateSpaceFilter::from_tf(&chain(&[lag(1.0, p.t_g), lag(1.0, p.t_t)]))?,
            fess: StateSpaceFilter::from_tf(&lag(p.k_fess, p.t_fess))?,
            bess: StateSpaceFilter::from_tf(&lag(p.k_bess, p.t_bess))?,
            swing: StateSpaceFilter::from_tf(&TransferFunction::new(vec![1.0], vec![p.m, p.d])?)?,
        })
    }
}

/// Runs the closed loop over `[0, t_end]`. The controller is reset first.
/// A non-finite signal stops the run and marks the trace as diverged.
pub fn simulate(scenario: &Scenario, controller: &mut RealizedController, seed: u64) -> Result<SimulationTrace> {
    let sc = scenario;
    sc.params.validate()?;
    if sc.policy.enabled {
        sc.policy.validate()?;
    }
    let dt = sc.dt;
    let wind = generate(&sc.wind, sc.t_end, dt, seed)?.power;
    let solar = generate(&sc.solar, sc.t_end, dt, seed)?.power;
    let load = generate(&sc.load, sc.t_end, dt, seed)?.power;
    let len = grid_len(sc.t_end, dt);

    let mut plant = Plant::new(&sc.params)?;
    let topo = sc.topology;
    let lim = sc.limits;
    let inv_r = if topo.droop { 1.0 / sc.params.r } else { 0.0 };
    let wind_in = |k: usize| if topo.wind { wind[k] } else { 0.0 };
    let solar_in = |k: usize| if topo.solar { solar[k] } else { 0.0 };
    if sc.equilibrium_start {
        plant.wtg.set_steady_state(wind_in(0))?;
        plant.pv.set_steady_state(solar_in(0))?;
    }
    controller.reset();

    let mut trace = SimulationTrace::with_capacity(len, dt);
    let mut gate = GateState::default();
    let mut prev: Option<[f64; 4]> = None;

    for k in 0..len {
        let t = k as f64 * dt;
        let delta_f = plant.swing.output(0.0);
        let u = match controller.update(-delta_f, dt) {
            Ok(u) => u,
            Err(_) => {
                trace.diverged = true;
                break;
            }
        };
        let on = if sc.policy.enabled {
            let was = gate.on;
            let now = actuator_gate(&sc.policy, delta_f, &mut gate, t);
            if now != was {
                trace.gate_events.push(GateEvent { t, on: now });
            }
            now
        } else {
            true
        };
        let fc_in = if on && topo.fuel_cell { u } else { 0.0 };
        let deg_in = if on && topo.diesel { u - delta_f * inv_r } else { 0.0 };

        let cmd = [fc_in, deg_in, delta_f, delta_f];
        let limiters = [lim.fc, lim.deg, lim.fess, lim.bess];
        let mut limited = [0.0; 4];
        for i in 0..4 {
            let raw = match i {
                0 => plant.fc.output(cmd[0]),
                1 => plant.deg.output(cmd[1]),
                2 => plant.fess.output(cmd[2]),
                _ => plant.bess.output(cmd[3]),
            };
            limited[i] = match prev {
                Some(p) => apply_limiter(&limiters[i], raw, p[i], dt),
                None => limiters[i].saturate(raw),
            };
        }
        prev = Some(limited);
        let enabled = [topo.fuel_cell, topo.diesel, topo.flywheel, topo.battery];
        for i in 0..4 {
            if !enabled[i] {
                limited[i] = 0.0;
            }
        }
        let [p_fc, p_deg, p_fess, p_bess] = limited;
        let p_wtg = if topo.wind { plant.wtg.output(wind_in(k)) } else { 0.0 };
        let p_pv = if topo.solar { plant.pv.output(solar_in(k)) } else { 0.0 };
        let p_load = load[k];
        let delta_p = p_wtg + p_pv + p_fc + p_deg - p_fess - p_bess - p_load;

        if !(delta_p.is_finite() && delta_f.is_finite()) {
            trace.diverged = true;
            break;
        }
        trace.t.push(t);
        trace.delta_f.push(delta_f);
        trace.u.push(u);
        trace.delta_p.push(delta_p);
        trace.p_wtg.push(p_wtg);
        trace.p_pv.push(p_pv);
        trace.p_fc.push(p_fc);
        trace.p_deg.push(p_deg);
        trace.p_fess.push(p_fess);
        trace.p_bess.push(p_bess);
        trace.p_load.push(p_load);

        if k + 1 == len {
            break;
        }
        let advanced = plant
            .swing
            .step(delta_p, t, dt)
            .and(plant.wtg.step(wind_in(k), t, dt))
            .and(plant.pv.step(solar_in(k), t, dt))
            .and(plant.fc.step(cmd[0], t, dt))
            .and(plant.deg.step(cmd[1], t, dt))
            .and(plant.fess.step(cmd[2], t, dt))
            .and(plant.bess.step(cmd[3], t, dt));
        if advanced.is_err() {
            trace.diverged = true;
            break;
        }
    }
    Ok(trace)
}
