//! Single-input single-output linear blocks.
//!
//! Every dynamic element of the plant and controller is described by a
//! [`TransferFunction`] and simulated through its controllable-canonical
//! [`StateSpaceFilter`] realization, advanced with the fixed-step
//! Bogacki–Shampine third-order Runge–Kutta formula.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Rational transfer function `num(s) / den(s)`, coefficients in descending
/// powers of `s`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransferFunction {
    num: Vec<f64>,
    den: Vec<f64>,
}

fn trim_leading_zeros(p: &[f64]) -> Vec<f64> {
    let first = p.iter().position(|&c| c != 0.0).unwrap_or(p.len().saturating_sub(1));
    p[first..].to_vec()
}

fn poly_mul(a: &[f64], b: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; a.len() + b.len() - 1];
    for (i, &ai) in a.iter().enumerate() {
        for (j, &bj) in b.iter().enumerate() {
            out[i + j] += ai * bj;
        }
    }
    out
}

fn poly_add(a: &[f64], b: &[f64]) -> Vec<f64> {
    let n = a.len().max(b.len());
    let mut out = vec![0.0; n];
    for (i, &c) in a.iter().enumerate() {
        out[n - a.len() + i] += c;
    }
    for (i, &c) in b.iter().enumerate() {
        out[n - b.len() + i] += c;
    }
    out
}

fn poly_eval(p: &[f64], s: Complex64) -> Complex64 {
    p.iter().fold(Complex64::new(0.0, 0.0), |acc, &c| acc * s + c)
}

impl TransferFunction {
    /// Builds `num/den`. Leading zeros are stripped; the denominator must
    /// have a nonzero leading coefficient and all coefficients must be finite.
    pub fn new(num: Vec<f64>, den: Vec<f64>) -> Result<Self> {
        if num.is_empty() || den.is_empty() {
            return Err(Error::InvalidTransferFunction("empty coefficient list".into()));
        }
        if num.iter().chain(den.iter()).any(|c| !c.is_finite()) {
            return Err(Error::InvalidTransferFunction("non-finite coefficient".into()));
        }
        let num = trim_leading_zeros(&num);
        let den = trim_leading_zeros(&den);
        if den[0] == 0.0 {
            return Err(Error::InvalidTransferFunction("zero denominator".into()));
        }
        Ok(Self { num, den })
    }

    pub fn gain(k: f64) -> Self {
        Self { num: vec![k], den: vec![1.0] }
    }

    /// First-order lag `k / (t·s + 1)`.
    pub fn lag(k: f64, t: f64) -> Self {
        Self { num: vec![k], den: vec![t, 1.0] }
    }

    /// `1 / s^order`.
    pub fn integrator(order: usize) -> Self {
        let mut den = vec![0.0; order + 1];
        den[0] = 1.0;
        Self { num: vec![1.0], den }
    }

    pub fn num(&self) -> &[f64] {
        &self.num
    }

    pub fn den(&self) -> &[f64] {
        &self.den
    }

    /// Denominator degree.
    pub fn order(&self) -> usize {
        self.den.len() - 1
    }

    pub fn is_proper(&self) -> bool {
        self.num.len() <= self.den.len()
    }

    /// Cascade connection `self · other`.
    pub fn series(&self, other: &TransferFunction) -> TransferFunction {
        TransferFunction {
            num: trim_leading_zeros(&poly_mul(&self.num, &other.num)),
            den: poly_mul(&self.den, &other.den),
        }
    }

    /// Parallel connection `self + other`.
    pub fn parallel(&self, other: &TransferFunction) -> TransferFunction {
        let num = poly_add(&poly_mul(&self.num, &other.den), &poly_mul(&other.num, &self.den));
        TransferFunction { num: trim_leading_zeros(&num), den: poly_mul(&self.den, &other.den) }
    }

    /// Evaluates the rational function at a complex point.
    pub fn eval(&self, s: Complex64) -> Complex64 {
        poly_eval(&self.num, s) / poly_eval(&self.den, s)
    }

    pub fn dc_gain(&self) -> f64 {
        self.num.last().copied().unwrap_or(0.0) / self.den.last().copied().unwrap_or(1.0)
    }
}

/// Realized linear block `ẋ = A x + B u`, `y = C x + D u` with its running state.
#[derive(Debug, Clone)]
pub struct StateSpaceFilter {
    n: usize,
    a: Vec<f64>,
    b: Vec<f64>,
    c: Vec<f64>,
    d: f64,
    x: Vec<f64>,
    k1: Vec<f64>,
    k2: Vec<f64>,
    k3: Vec<f64>,
    tmp: Vec<f64>,
}

/// Controllable-canonical realization of a proper transfer function, zero initial state.
pub fn tf_to_ss(tf: &TransferFunction) -> Result<StateSpaceFilter> {
    if !tf.is_proper() {
        return Err(Error::ImproperTransferFunction { num: tf.num.len() - 1, den: tf.den.len() - 1 });
    }
    let n = tf.order();
    let a0 = tf.den[0];
    let den: Vec<f64> = tf.den.iter().map(|c| c / a0).collect();
    let mut num = vec![0.0; n + 1 - tf.num.len()];
    num.extend(tf.num.iter().map(|c| c / a0));

    let d = num[0];
    let mut a = vec![0.0; n * n];
    for i in 0..n.saturating_sub(1) {
        a[i * n + i + 1] = 1.0;
    }
    // last row: -a_n, -a_{n-1}, ..., -a_1
    for j in 0..n {
        a[(n - 1) * n + j] = -den[n - j];
    }
    let mut b = vec![0.0; n];
    if n > 0 {
        b[n - 1] = 1.0;
    }
    let c = (0..n).map(|j| num[n - j] - d * den[n - j]).collect();

    Ok(StateSpaceFilter::from_parts(n, a, b, c, d))
}

impl StateSpaceFilter {
    fn from_parts(n: usize, a: Vec<f64>, b: Vec<f64>, c: Vec<f64>, d: f64) -> Self {
        Self { n, a, b, c, d, x: vec![0.0; n], k1: vec![0.0; n], k2: vec![0.0; n], k3: vec![0.0; n], tmp: vec![0.0; n] }
    }

    /// Realizes a transfer function; shorthand for [`tf_to_ss`].
    pub fn from_tf(tf: &TransferFunction) -> Result<Self> {
        tf_to_ss(tf)
    }

    pub fn order(&self) -> usize {
        self.n
    }

    pub fn a(&self) -> DMatrix<f64> {
        DMatrix::from_row_slice(self.n, self.n, &self.a)
    }

    pub fn b(&self) -> DVector<f64> {
        DVector::from_column_slice(&self.b)
    }

    pub fn c(&self) -> DVector<f64> {
        DVector::from_column_slice(&self.c)
    }

    pub fn d(&self) -> f64 {
        self.d
    }

    pub fn state(&self) -> &[f64] {
        &self.x
    }

    pub fn reset(&mut self) {
        self.x.iter_mut().for_each(|v| *v = 0.0);
    }

    /// Sets the state to the equilibrium reached under a constant input `u`
    /// (`x = -A⁻¹ B u`). Fails when `A` is singular (integrating blocks).
    pub fn set_steady_state(&mut self, u: f64) -> Result<()> {
        if self.n == 0 {
            return Ok(());
        }
        let lu = self.a().lu();
        let rhs = self.b() * (-u);
        let x = lu.solve(&rhs).ok_or_else(|| Error::DegenerateInput("block has no finite steady state".into()))?;
        self.x.copy_from_slice(x.as_slice());
        Ok(())
    }

    /// Current output `C x + D u` for input `u`, without advancing.
    #[inline]
    pub fn output(&self, u: f64) -> f64 {
        self.c.iter().zip(&self.x).map(|(c, x)| c * x).sum::<f64>() + self.d * u
    }

    /// Complex gain `C (jωI − A)⁻¹ B + D`.
    pub fn freq_response(&self, omega: f64) -> Result<Complex64> {
        if !(omega > 0.0) {
            return Err(Error::InvalidParameter(format!("omega must be positive, got {omega}")));
        }
        if self.n == 0 {
            return Ok(Complex64::new(self.d, 0.0));
        }
        let jw = Complex64::new(0.0, omega);
        let m = DMatrix::from_fn(self.n, self.n, |i, j| {
            let aij = Complex64::new(self.a[i * self.n + j], 0.0);
            if i == j {
                jw - aij
            } else {
                -aij
            }
        });
        let b = DVector::from_iterator(self.n, self.b.iter().map(|&v| Complex64::new(v, 0.0)));
        let lu = m.lu();
        let det = lu.determinant();
        if det.norm() < 1e-300 {
            return Err(Error::SingularFrequency { omega });
        }
        let sol = lu.solve(&b).ok_or(Error::SingularFrequency { omega })?;
        if sol.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
            return Err(Error::SingularFrequency { omega });
        }
        let y: Complex64 = self.c.iter().zip(sol.iter()).map(|(&c, z)| z * c).sum();
        Ok(y + self.d)
    }

    #[inline]
    fn deriv(a: &[f64], b: &[f64], n: usize, x: &[f64], u: f64, out: &mut [f64]) {
        for i in 0..n {
            let row = &a[i * n..(i + 1) * n];
            let mut s = b[i] * u;
            for j in 0..n {
                s += row[j] * x[j];
            }
            out[i] = s;
        }
    }

    /// One Bogacki–Shampine step of size `dt` from time `t`, sampling the
    /// input function at the stage times. Returns the output at `t + dt`.
    pub fn rk3_step<F: Fn(f64) -> f64>(&mut self, input: F, t: f64, dt: f64) -> Result<f64> {
        let n = self.n;
        let (u1, u2, u3) = (input(t), input(t + 0.5 * dt), input(t + 0.75 * dt));
        Self::deriv(&self.a, &self.b, n, &self.x, u1, &mut self.k1);
        for i in 0..n {
            self.tmp[i] = self.x[i] + 0.5 * dt * self.k1[i];
        }
        Self::deriv(&self.a, &self.b, n, &self.tmp, u2, &mut self.k2);
        for i in 0..n {
            self.tmp[i] = self.x[i] + 0.75 * dt * self.k2[i];
        }
        Self::deriv(&self.a, &self.b, n, &self.tmp, u3, &mut self.k3);
        let mut finite = true;
        for i in 0..n {
            self.x[i] += dt * (2.0 / 9.0 * self.k1[i] + 1.0 / 3.0 * self.k2[i] + 4.0 / 9.0 * self.k3[i]);
            finite &= self.x[i].is_finite();
        }
        if !finite {
            return Err(Error::Diverged { t: t + dt });
        }
        Ok(self.output(input(t + dt)))
    }

    /// Zero-order-hold step: `u` is held constant over `[t, t + dt)`.
    #[inline]
    pub fn step(&mut self, u: f64, t: f64, dt: f64) -> Result<f64> {
        self.rk3_step(|_| u, t, dt)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn horner(p: &[f64], s: Complex64) -> Complex64 {
        let mut acc = Complex64::new(0.0, 0.0);
        for &c in p {
            acc = acc * s + c;
        }
        acc
    }

    #[test]
    fn pure_gain_has_no_states() {
        let f = tf_to_ss(&TransferFunction::new(vec![1.0], vec![1.0]).unwrap()).unwrap();
        assert_eq!(f.order(), 0);
        assert_eq!(f.d(), 1.0);
        let h = f.freq_response(3.0).unwrap();
        assert_eq!(h, Complex64::new(1.0, 0.0));
    }

    #[test]
    fn governor_lag_has_unit_dc_gain() {
        let f = tf_to_ss(&TransferFunction::lag(1.0, 0.08)).unwrap();
        assert_eq!(f.order(), 1);
        assert_relative_eq!(f.freq_response(1e-9).unwrap().re, 1.0, epsilon = 1e-9);
    }

    #[test]
    fn second_order_matches_direct_evaluation() {
        let tf = TransferFunction::new(vec![2.0, 1.0], vec![1.0, 3.0, 2.0]).unwrap();
        let f = tf_to_ss(&tf).unwrap();
        let s = Complex64::new(0.0, 1.0);
        let direct = horner(&[2.0, 1.0], s) / horner(&[1.0, 3.0, 2.0], s);
        let h = f.freq_response(1.0).unwrap();
        assert!((h - direct).norm() < 1e-12);
    }

    #[test]
    fn improper_is_rejected() {
        let tf = TransferFunction::new(vec![1.0, 0.0], vec![1.0]).unwrap();
        assert!(matches!(tf_to_ss(&tf), Err(Error::ImproperTransferFunction { .. })));
    }

    #[test]
    fn unit_lag_at_corner() {
        let f = tf_to_ss(&TransferFunction::lag(1.0, 1.0)).unwrap();
        let h = f.freq_response(1.0).unwrap();
        assert_relative_eq!(h.norm(), 1.0 / 2f64.sqrt(), epsilon = 1e-12);
        assert_relative_eq!(h.arg().to_degrees(), -45.0, epsilon = 1e-10);
    }

    #[test]
    fn fuel_cell_lag_low_frequency_gain() {
        let f = tf_to_ss(&TransferFunction::lag(1.0, 0.26)).unwrap();
        assert_relative_eq!(f.freq_response(1e-6).unwrap().norm(), 1.0, epsilon = 1e-9);
    }

    #[test]
    fn integrator_pole_is_singular_at_zero_only() {
        let f = tf_to_ss(&TransferFunction::new(vec![1.0], vec![1.0, 0.0, 4.0]).unwrap()).unwrap();
        assert!(matches!(f.freq_response(2.0), Err(Error::SingularFrequency { .. })));
        assert!(f.freq_response(-1.0).is_err());
        assert!(f.freq_response(1.0).is_ok());
    }

    #[test]
    fn zero_input_keeps_zero_state() {
        let mut f = tf_to_ss(&TransferFunction::new(vec![1.0, 2.0], vec![1.0, 3.0, 2.0]).unwrap()).unwrap();
        for k in 0..100 {
            let y = f.step(0.0, k as f64 * 0.01, 0.01).unwrap();
            assert_eq!(y, 0.0);
        }
        assert!(f.state().iter().all(|&v| v == 0.0));
    }

    fn lag_step_error(dt: f64) -> f64 {
        let mut f = tf_to_ss(&TransferFunction::lag(1.0, 1.0)).unwrap();
        let steps = (1.0 / dt).round() as usize;
        let mut y = 0.0;
        for k in 0..steps {
            y = f.step(1.0, k as f64 * dt, dt).unwrap();
        }
        (y - (1.0 - (-1.0f64).exp())).abs()
    }

    #[test]
    fn lag_step_response_is_accurate() {
        assert!(lag_step_error(0.01) < 1e-6);
    }

    #[test]
    fn global_error_is_third_order() {
        let e1 = lag_step_error(0.02);
        let e2 = lag_step_error(0.01);
        assert!(e1 / e2 >= 7.0, "ratio {}", e1 / e2);
    }

    #[test]
    fn integrator_of_constant_is_exact() {
        let mut f = tf_to_ss(&TransferFunction::integrator(1)).unwrap();
        let mut y = 0.0;
        for k in 0..100 {
            y = f.step(2.0, k as f64 * 0.01, 0.01).unwrap();
        }
        assert_relative_eq!(y, 2.0, epsilon = 1e-9);
    }

    #[test]
    fn rk3_samples_input_function() {
        // ẋ = t on [0, 1] integrates to 1/2 exactly for a third-order method.
        let mut f = tf_to_ss(&TransferFunction::integrator(1)).unwrap();
        let dt = 0.1;
        let mut y = 0.0;
        for k in 0..10 {
            y = f.rk3_step(|t| t, k as f64 * dt, dt).unwrap();
        }
        assert_relative_eq!(y, 0.5, epsilon = 1e-12);
    }

    #[test]
    fn divergence_is_reported() {
        let mut f = tf_to_ss(&TransferFunction::lag(1.0, 1.0)).unwrap();
        assert!(matches!(f.step(f64::INFINITY, 0.0, 0.01), Err(Error::Diverged { .. })));
    }

    #[test]
    fn stable_lag_stays_bounded_over_horizon() {
        // z = -dt/T; the one-step amplification R(z) = 1 + z + z²/2 + z³/6 bounds
        // the response to a ±1 input by (1 - R)/(1 - |R|).
        for t_const in [0.004, 0.04, 1.5] {
            let z: f64 = -0.01 / t_const;
            let r = 1.0 + z + z * z / 2.0 + z * z * z / 6.0;
            let bound = (1.0 - r) / (1.0 - r.abs()) + 1e-9;
            let mut f = tf_to_ss(&TransferFunction::lag(1.0, t_const)).unwrap();
            let mut peak: f64 = 0.0;
            for k in 0..22_000 {
                let u = if k % 7 < 3 { 1.0 } else { -1.0 };
                peak = peak.max(f.step(u, k as f64 * 0.01, 0.01).unwrap().abs());
            }
            assert!(peak <= bound, "T = {t_const}: peak {peak} > {bound}");
        }
    }

    #[test]
    fn steady_state_initialization() {
        let tf = TransferFunction::lag(2.0, 0.5).series(&TransferFunction::lag(1.0, 0.1));
        let mut f = tf_to_ss(&tf).unwrap();
        f.set_steady_state(0.3).unwrap();
        assert_relative_eq!(f.output(0.3), 0.6, epsilon = 1e-12);
        let y = f.step(0.3, 0.0, 0.01).unwrap();
        assert_relative_eq!(y, 0.6, epsilon = 1e-12);
    }

    #[test]
    fn parallel_connection_sums_responses() {
        let g = TransferFunction::lag(300.0, 300.0).parallel(&TransferFunction::lag(1.0, 1800.0));
        assert_relative_eq!(g.dc_gain(), 301.0, epsilon = 1e-12);
        let s = Complex64::new(0.0, 0.01);
        let direct = TransferFunction::lag(300.0, 300.0).eval(s) + TransferFunction::lag(1.0, 1800.0).eval(s);
        assert!((g.eval(s) - direct).norm() < 1e-12);
    }

    use proptest::prelude::*;

    proptest! {
        #[test]
        fn realization_matches_rational_evaluation(
            den_roots in proptest::collection::vec(0.05f64..50.0, 1..6),
            num_coeffs in proptest::collection::vec(-5.0f64..5.0, 1..6),
        ) {
            let mut den = vec![1.0];
            for r in &den_roots {
                den = poly_mul(&den, &[1.0, *r]);
            }
            let k = num_coeffs.len().min(den.len());
            let tf = TransferFunction::new(num_coeffs[..k].to_vec(), den.clone()).unwrap();
            let f = tf_to_ss(&tf).unwrap();
            for i in 0..20 {
                let w = 10f64.powf(-2.0 + 4.0 * i as f64 / 19.0);
                let s = Complex64::new(0.0, w);
                let direct = horner(tf.num(), s) / horner(&den, s);
                let h = f.freq_response(w).unwrap();
                prop_assert!((h - direct).norm() <= 1e-9 * direct.norm().max(1e-12) + 1e-12,
                    "w={} h={} direct={}", w, h, direct);
            }
        }
    }
}
