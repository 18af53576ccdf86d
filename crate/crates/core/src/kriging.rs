//! DACE-style kriging: constant regression trend plus a stationary
//! correlated residual, fitted by generalized least squares with
//! maximum-likelihood correlation ranges.
//!
//! All fitting happens on normalized data (zero mean, unit variance per
//! column of sites and responses); predictions are mapped back.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Range parameters are searched within this box (normalized space).
pub const THETA_MIN: f64 = 1e-3;
pub const THETA_MAX: f64 = 20.0;
/// Sites closer than this in normalized space are duplicates.
pub const DUPLICATE_TOL: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Kernel {
    Exponential,
    Gaussian,
    Linear,
    Spherical,
    Spline,
}

impl Kernel {
    pub const ALL: [Kernel; 5] =
        [Kernel::Exponential, Kernel::Gaussian, Kernel::Linear, Kernel::Spherical, Kernel::Spline];

    pub fn name(self) -> &'static str {
        match self {
            Kernel::Exponential => "exponential",
            Kernel::Gaussian => "gaussian",
            Kernel::Linear => "linear",
            Kernel::Spherical => "spherical",
            Kernel::Spline => "spline",
        }
    }

    pub fn parse(s: &str) -> Result<Kernel> {
        let k = match s.to_ascii_lowercase().as_str() {
            "exponential" | "exp" => Kernel::Exponential,
            "gaussian" | "gauss" => Kernel::Gaussian,
            "linear" | "lin" => Kernel::Linear,
            "spherical" | "sphere" => Kernel::Spherical,
            "spline" => Kernel::Spline,
            other => return Err(Error::InvalidParameter(format!("unknown kernel {other}"))),
        };
        Ok(k)
    }

    /// One-dimensional correlation at distance `d` (sign ignored).
    #[inline]
    pub fn eval_1d(self, theta: f64, d: f64) -> f64 {
        let d = d.abs();
        match self {
            Kernel::Exponential => (-theta * d).exp(),
            Kernel::Gaussian => (-theta * d * d).exp(),
            Kernel::Linear => (1.0 - theta * d).max(0.0),
            Kernel::Spherical => {
                let xi = (theta * d).min(1.0);
                1.0 - 1.5 * xi + 0.5 * xi * xi * xi
            }
            Kernel::Spline => {
                let xi = theta * d;
                if xi <= 0.2 {
                    1.0 - 15.0 * xi * xi + 30.0 * xi * xi * xi
                } else if xi < 1.0 {
                    1.25 * (1.0 - xi).powi(3)
                } else {
                    0.0
                }
            }
        }
    }
}

impl std::fmt::Display for Kernel {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorrelationSpec {
    pub kind: Kernel,
    pub theta: Vec<f64>,
}

/// Product correlation `∏_j Φ_j(θ_j, w_j − x_j)`.
pub fn correlation(spec: &CorrelationSpec, w: &[f64], x: &[f64]) -> f64 {
    let mut r = 1.0;
    for ((&t, &a), &b) in spec.theta.iter().zip(w).zip(x) {
        r *= spec.kind.eval_1d(t, a - b);
        if r == 0.0 {
            break;
        }
    }
    r
}

/// Design sites (one per row) and their scalar responses.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainingSet {
    pub sites: DMatrix<f64>,
    pub values: DVector<f64>,
}

impl TrainingSet {
    pub fn new(sites: DMatrix<f64>, values: DVector<f64>) -> Result<Self> {
        if sites.nrows() != values.len() {
            return Err(Error::InvalidParameter(format!("{} sites but {} responses", sites.nrows(), values.len())));
        }
        if sites.iter().chain(values.iter()).any(|v| !v.is_finite()) {
            return Err(Error::DegenerateInput("non-finite training data".into()));
        }
        Ok(Self { sites, values })
    }

    pub fn from_rows(rows: &[Vec<f64>], values: &[f64]) -> Result<Self> {
        let n = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != n) {
            return Err(Error::InvalidParameter("ragged site rows".into()));
        }
        let sites = DMatrix::from_fn(rows.len(), n, |i, j| rows[i][j]);
        Self::new(sites, DVector::from_column_slice(values))
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.sites.ncols()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NormalizationStats {
    pub site_mean: Vec<f64>,
    pub site_std: Vec<f64>,
    pub value_mean: f64,
    pub value_std: f64,
}

fn mean_std(v: impl Iterator<Item = f64> + Clone) -> (f64, f64) {
    let n = v.clone().count() as f64;
    let mean = v.clone().sum::<f64>() / n;
    let var = v.map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

impl NormalizationStats {
    pub fn normalize_point(&self, x: &[f64]) -> Vec<f64> {
        x.iter().zip(&self.site_mean).zip(&self.site_std).map(|((v, m), s)| (v - m) / s).collect()
    }

    pub fn denormalize_point(&self, x: &[f64]) -> Vec<f64> {
        x.iter().zip(&self.site_mean).zip(&self.site_std).map(|((v, m), s)| v * s + m).collect()
    }

    pub fn normalize_value(&self, y: f64) -> f64 {
        (y - self.value_mean) / self.value_std
    }

    pub fn denormalize_value(&self, y: f64) -> f64 {
        y * self.value_std + self.value_mean
    }
}

/// Affine map to zero mean and unit sample variance per column.
pub fn normalize(ts: &TrainingSet) -> Result<(TrainingSet, NormalizationStats)> {
    let k = ts.len();
    if k < 2 {
        return Err(Error::DegenerateInput("need at least two design sites".into()));
    }
    let mut site_mean = Vec::with_capacity(ts.dim());
    let mut site_std = Vec::with_capacity(ts.dim());
    for j in 0..ts.dim() {
        let (m, s) = mean_std(ts.sites.column(j).iter().copied());
        if !(s > 0.0) {
            return Err(Error::DegenerateInput(format!("site column {j} is constant")));
        }
        site_mean.push(m);
        site_std.push(s);
    }
    let (value_mean, value_std) = mean_std(ts.values.iter().copied());
    if !(value_std > 0.0) {
        return Err(Error::DegenerateInput("responses are constant".into()));
    }
    let stats = NormalizationStats { site_mean, site_std, value_mean, value_std };
    let sites = DMatrix::from_fn(k, ts.dim(), |i, j| (ts.sites[(i, j)] - stats.site_mean[j]) / stats.site_std[j]);
    let values = ts.values.map(|y| stats.normalize_value(y));
    Ok((TrainingSet { sites, values }, stats))
}

/// How the correlation ranges are chosen.
#[derive(Debug, Clone, PartialEq)]
pub enum ThetaChoice {
    Fixed(Vec<f64>),
    Mle(MleOptions),
}

impl ThetaChoice {
    pub fn mle() -> Self {
        ThetaChoice::Mle(MleOptions::default())
    }
}

/// Hooke–Jeeves pattern search on `log θ`.
#[derive(Debug, Clone, PartialEq)]
pub struct MleOptions {
    /// Starting θ; all ones when absent.
    pub start: Option<Vec<f64>>,
    pub max_evals: usize,
    /// Initial step in `ln θ`.
    pub initial_step: f64,
    pub min_step: f64,
}

impl Default for MleOptions {
    fn default() -> Self {
        Self { start: None, max_evals: 200, initial_step: 1.0, min_step: 0.05 }
    }
}

/// Factor `Q + εI` with escalating jitter.
fn factorize(mut q: DMatrix<f64>) -> Result<(Cholesky<f64, Dyn>, f64)> {
    let k = q.nrows();
    let mut jitter = f64::EPSILON * (10.0 + k as f64);
    for _ in 0..4 {
        for i in 0..k {
            q[(i, i)] += jitter;
        }
        if let Some(c) = Cholesky::new(q.clone()) {
            return Ok((c, jitter));
        }
        for i in 0..k {
            q[(i, i)] -= jitter;
        }
        jitter *= 1e3;
    }
    Err(Error::FitFailure("correlation matrix is numerically singular".into()))
}

/// Generalized least squares `ζ = (Fᵀ Q⁻¹ F)⁻¹ Fᵀ Q⁻¹ Y` through the
/// Cholesky factor of `Q`.
pub fn gls(q: &DMatrix<f64>, f: &DMatrix<f64>, y: &DVector<f64>) -> Result<DVector<f64>> {
    let (chol, _) = factorize(q.clone())?;
    gls_with_factor(&chol, f, y).map(|g| g.zeta)
}

struct GlsParts {
    zeta: DVector<f64>,
    /// `L⁻¹ F`
    ft: DMatrix<f64>,
    /// `L⁻¹ (Y − Fζ)`
    rt: DVector<f64>,
}

fn gls_with_factor(chol: &Cholesky<f64, Dyn>, f: &DMatrix<f64>, y: &DVector<f64>) -> Result<GlsParts> {
    let l = chol.l_dirty();
    let ft = l.solve_lower_triangular(f).ok_or_else(|| Error::FitFailure("triangular solve failed".into()))?;
    let yt = l.solve_lower_triangular(y).ok_or_else(|| Error::FitFailure("triangular solve failed".into()))?;
    let normal = ft.transpose() * &ft;
    let rhs = ft.transpose() * &yt;
    let zeta = Cholesky::new(normal)
        .ok_or_else(|| Error::FitFailure("regression normal equations are singular".into()))?
        .solve(&rhs);
    let rt = yt - &ft * &zeta;
    Ok(GlsParts { zeta, ft, rt })
}

/// Per-pair coordinate distances of the normalized sites, cached for the θ search.
struct PairDistances {
    k: usize,
    n: usize,
    /// Row-major `(pair, coord)` over pairs `i < j`.
    d: Vec<f64>,
}

impl PairDistances {
    fn new(s: &DMatrix<f64>) -> Self {
        let (k, n) = (s.nrows(), s.ncols());
        let mut d = Vec::with_capacity(k * (k - 1) / 2 * n);
        for i in 0..k {
            for j in i + 1..k {
                for c in 0..n {
                    d.push(s[(i, c)] - s[(j, c)]);
                }
            }
        }
        Self { k, n, d }
    }

    fn correlation_matrix(&self, spec: &CorrelationSpec) -> DMatrix<f64> {
        let mut q = DMatrix::identity(self.k, self.k);
        let mut p = 0;
        for i in 0..self.k {
            for j in i + 1..self.k {
                let row = &self.d[p * self.n..(p + 1) * self.n];
                let mut r = 1.0;
                for (c, &dc) in row.iter().enumerate() {
                    r *= spec.kind.eval_1d(spec.theta[c], dc);
                }
                q[(i, j)] = r;
                q[(j, i)] = r;
                p += 1;
            }
        }
        q
    }
}

struct Fitted {
    chol: Cholesky<f64, Dyn>,
    jitter: f64,
    parts: GlsParts,
    sigma2: f64,
    log_likelihood: f64,
}

fn fit_fixed(dist: &PairDistances, y: &DVector<f64>, spec: &CorrelationSpec) -> Result<Fitted> {
    let k = dist.k;
    let (chol, jitter) = factorize(dist.correlation_matrix(spec))?;
    let f = DMatrix::from_element(k, 1, 1.0);
    let parts = gls_with_factor(&chol, &f, y)?;
    let sigma2 = parts.rt.norm_squared() / k as f64;
    let log_det: f64 = 2.0 * chol.l_dirty().diagonal().iter().map(|v| v.ln()).sum::<f64>();
    let log_likelihood = -(k as f64) * sigma2.max(f64::MIN_POSITIVE).ln() - log_det;
    if !log_likelihood.is_finite() {
        return Err(Error::FitFailure("non-finite likelihood".into()));
    }
    Ok(Fitted { chol, jitter, parts, sigma2, log_likelihood })
}

/// Concentrated log-likelihood `−k·ln σ²(θ) − ln det Q(θ)` on a normalized
/// training set; `None` where `Q` cannot be factored.
pub fn concentrated_log_likelihood(normalized: &TrainingSet, spec: &CorrelationSpec) -> Option<f64> {
    let dist = PairDistances::new(&normalized.sites);
    fit_fixed(&dist, &normalized.values, spec).ok().map(|f| f.log_likelihood)
}

/// Result of the pattern search.
#[derive(Debug, Clone, PartialEq)]
pub struct ThetaSearch {
    pub theta: Vec<f64>,
    pub log_likelihood: f64,
    pub start_log_likelihood: f64,
    pub evaluations: usize,
}

fn pattern_search(dist: &PairDistances, y: &DVector<f64>, kind: Kernel, opts: &MleOptions) -> Result<ThetaSearch> {
    let n = dist.n;
    let (lo, hi) = (THETA_MIN.ln(), THETA_MAX.ln());
    let budget = opts.max_evals.max(1);
    let objective = |x: &[f64]| -> f64 {
        let spec = CorrelationSpec { kind, theta: x.iter().map(|v| v.exp()).collect() };
        fit_fixed(dist, y, &spec).map_or(f64::NEG_INFINITY, |f| f.log_likelihood)
    };

    let start: Vec<f64> = match &opts.start {
        Some(t) if t.len() == n => t.iter().map(|v| v.ln().clamp(lo, hi)).collect(),
        _ => vec![0.0; n],
    };
    let f_start = objective(&start);
    let mut used = 1;
    let mut base = start;
    let mut f_base = f_start;
    let mut step = opts.initial_step;

    // Coordinate moves around `x`, keeping each improvement. An unknown
    // `fx` is evaluated first.
    let explore = |x: &[f64], fx: Option<f64>, step: f64, used: &mut usize| {
        let mut cur = x.to_vec();
        let mut fc = match fx {
            Some(v) => v,
            None => {
                *used += 1;
                objective(x)
            }
        };
        for i in 0..n {
            for dir in [1.0, -1.0] {
                if *used >= budget {
                    return (cur, fc);
                }
                let mut trial = cur.clone();
                trial[i] = (trial[i] + dir * step).clamp(lo, hi);
                if trial[i] == cur[i] {
                    continue;
                }
                *used += 1;
                let ft = objective(&trial);
                if ft > fc {
                    cur = trial;
                    fc = ft;
                    break;
                }
            }
        }
        (cur, fc)
    };

    while step >= opts.min_step && used < budget {
        let (mut x_new, mut f_new) = explore(&base, Some(f_base), step, &mut used);
        if f_new <= f_base {
            step *= 0.5;
            continue;
        }
        loop {
            let pattern: Vec<f64> = x_new.iter().zip(&base).map(|(a, b)| (2.0 * a - b).clamp(lo, hi)).collect();
            base = x_new;
            f_base = f_new;
            if used >= budget {
                break;
            }
            let (x_try, f_try) = explore(&pattern, None, step, &mut used);
            if f_try > f_base {
                x_new = x_try;
                f_new = f_try;
            } else {
                break;
            }
        }
    }
    Ok(ThetaSearch {
        theta: base.iter().map(|v| v.exp()).collect(),
        log_likelihood: f_base,
        start_log_likelihood: f_start,
        evaluations: used,
    })
}

/// A fitted surrogate. Immutable; prediction is pure.
#[derive(Debug, Clone)]
pub struct KrigingModel {
    stats: NormalizationStats,
    sites: DMatrix<f64>,
    values: DVector<f64>,
    spec: CorrelationSpec,
    chol: Cholesky<f64, Dyn>,
    jitter: f64,
    zeta: f64,
    sigma2: f64,
    /// `Q⁻¹ (Y − Fζ)`
    gamma: DVector<f64>,
    /// `L⁻¹ F`
    ft: DVector<f64>,
    /// `Fᵀ Q⁻¹ F`
    ftf: f64,
    log_likelihood: f64,
    search: Option<ThetaSearch>,
}

pub fn fit(ts: &TrainingSet, kind: Kernel, theta: ThetaChoice) -> Result<KrigingModel> {
    let n = ts.dim();
    if n == 0 {
        return Err(Error::DegenerateInput("zero-dimensional sites".into()));
    }
    let (norm, stats) = normalize(ts)?;
    let dist = PairDistances::new(&norm.sites);
    for pair in dist.d.chunks(n) {
        if pair.iter().map(|d| d * d).sum::<f64>().sqrt() < DUPLICATE_TOL {
            return Err(Error::DegenerateInput("duplicate design sites".into()));
        }
    }
    let (theta, search) = match theta {
        ThetaChoice::Fixed(t) => {
            if t.len() != n || t.iter().any(|v| !(*v > 0.0) || !v.is_finite()) {
                return Err(Error::InvalidParameter(format!("theta must be {n} positive values")));
            }
            (t, None)
        }
        ThetaChoice::Mle(opts) => {
            let s = pattern_search(&dist, &norm.values, kind, &opts)?;
            if !s.log_likelihood.is_finite() {
                return Err(Error::FitFailure("no factorable correlation range found".into()));
            }
            (s.theta.clone(), Some(s))
        }
    };
    let spec = CorrelationSpec { kind, theta };
    let fitted = fit_fixed(&dist, &norm.values, &spec)?;
    let l = fitted.chol.l_dirty();
    let gamma = l
        .tr_solve_lower_triangular(&fitted.parts.rt)
        .ok_or_else(|| Error::FitFailure("triangular solve failed".into()))?;
    let ft = fitted.parts.ft.column(0).into_owned();
    let ftf = ft.norm_squared();
    Ok(KrigingModel {
        stats,
        sites: norm.sites,
        values: norm.values,
        spec,
        zeta: fitted.parts.zeta[0],
        sigma2: fitted.sigma2,
        gamma,
        ft,
        ftf,
        jitter: fitted.jitter,
        log_likelihood: fitted.log_likelihood,
        chol: fitted.chol,
        search,
    })
}

/// Serializable snapshot of a fitted model, in original units where noted.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelDump {
    pub kernel: Kernel,
    pub theta: Vec<f64>,
    /// Regression constant, original response units.
    pub zeta: f64,
    /// Process variance, original response units squared.
    pub sigma2: f64,
    pub log_likelihood: f64,
    pub sites: Vec<Vec<f64>>,
    pub values: Vec<f64>,
}

impl KrigingModel {
    fn correlations(&self, xn: &[f64]) -> DVector<f64> {
        let n = self.sites.ncols();
        let mut row = vec![0.0; n];
        DVector::from_fn(self.sites.nrows(), |i, _| {
            for (c, r) in row.iter_mut().enumerate() {
                *r = self.sites[(i, c)];
            }
            correlation(&self.spec, &row, xn)
        })
    }

    pub fn dim(&self) -> usize {
        self.sites.ncols()
    }

    pub fn theta(&self) -> &[f64] {
        &self.spec.theta
    }

    pub fn kernel(&self) -> Kernel {
        self.spec.kind
    }

    /// Regression constant `ζ*` in original response units.
    pub fn zeta(&self) -> f64 {
        self.stats.denormalize_value(self.zeta)
    }

    /// Process variance in original response units.
    pub fn sigma2(&self) -> f64 {
        self.sigma2 * self.stats.value_std * self.stats.value_std
    }

    pub fn log_likelihood(&self) -> f64 {
        self.log_likelihood
    }

    pub fn jitter(&self) -> f64 {
        self.jitter
    }

    pub fn theta_search(&self) -> Option<&ThetaSearch> {
        self.search.as_ref()
    }

    pub fn stats(&self) -> &NormalizationStats {
        &self.stats
    }

    /// `ŷ(x) = f(x)ᵀζ* + q(x)ᵀ Q⁻¹ (Y − Fζ*)`.
    pub fn predict(&self, x: &[f64]) -> f64 {
        let xn = self.stats.normalize_point(x);
        let q = self.correlations(&xn);
        self.stats.denormalize_value(self.zeta + q.dot(&self.gamma))
    }

    /// `φ(x) = σ²(1 + bᵀ(FᵀQ⁻¹F)⁻¹b − qᵀQ⁻¹q)`, `b = FᵀQ⁻¹q − f`, clamped at zero.
    pub fn mse(&self, x: &[f64]) -> f64 {
        let xn = self.stats.normalize_point(x);
        let q = self.correlations(&xn);
        let Some(rt) = self.chol.l_dirty().solve_lower_triangular(&q) else {
            return f64::NAN;
        };
        let b = self.ft.dot(&rt) - 1.0;
        let phi = self.sigma2 * (1.0 + b * b / self.ftf - rt.norm_squared());
        phi.max(0.0) * self.stats.value_std * self.stats.value_std
    }

    pub fn dump(&self) -> ModelDump {
        let sites = (0..self.sites.nrows())
            .map(|i| {
                let row: Vec<f64> = self.sites.row(i).iter().copied().collect();
                self.stats.denormalize_point(&row)
            })
            .collect();
        ModelDump {
            kernel: self.spec.kind,
            theta: self.spec.theta.clone(),
            zeta: self.zeta(),
            sigma2: self.sigma2(),
            log_likelihood: self.log_likelihood,
            sites,
            values: self.values.iter().map(|&v| self.stats.denormalize_value(v)).collect(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_set(k: usize, n: usize, seed: u64) -> TrainingSet {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let rows: Vec<Vec<f64>> = (0..k).map(|_| (0..n).map(|_| rng.random_range(0.0..5.0)).collect()).collect();
        let vals: Vec<f64> =
            rows.iter().map(|r| r.iter().map(|v| (v - 2.0).powi(2)).sum::<f64>() + r[0].sin()).collect();
        TrainingSet::from_rows(&rows, &vals).unwrap()
    }

    #[test]
    fn normalized_columns() {
        let ts = TrainingSet::from_rows(&[vec![0.0], vec![1.0], vec![2.0]], &[1.0, 5.0, 3.0]).unwrap();
        let (n, stats) = normalize(&ts).unwrap();
        let col: Vec<f64> = n.sites.column(0).iter().copied().collect();
        let mean = col.iter().sum::<f64>() / 3.0;
        let var = col.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / 2.0;
        assert_relative_eq!(mean, 0.0, epsilon = 1e-15);
        assert_relative_eq!(var, 1.0, epsilon = 1e-15);
        let (again, _) = normalize(&n).unwrap();
        assert!((again.sites.clone() - n.sites.clone()).amax() < 1e-12);
        for i in 0..3 {
            let back = stats.denormalize_point(&[n.sites[(i, 0)]]);
            assert_relative_eq!(back[0], ts.sites[(i, 0)], epsilon = 1e-12);
            assert_relative_eq!(stats.denormalize_value(n.values[i]), ts.values[i], epsilon = 1e-12);
        }
    }

    #[test]
    fn constant_column_rejected() {
        let ts = TrainingSet::from_rows(&[vec![1.0, 0.0], vec![1.0, 1.0], vec![1.0, 2.0]], &[1.0, 2.0, 3.0]).unwrap();
        assert!(matches!(normalize(&ts), Err(Error::DegenerateInput(_))));
    }

    #[test]
    fn kernel_values() {
        for k in Kernel::ALL {
            let spec = CorrelationSpec { kind: k, theta: vec![0.7, 2.0] };
            assert_eq!(correlation(&spec, &[0.3, -1.0], &[0.3, -1.0]), 1.0);
        }
        assert_relative_eq!(Kernel::Spherical.eval_1d(1.0, 1.0), 0.0, epsilon = 1e-15);
        assert_relative_eq!(1.0 - 15.0 * 0.04 + 30.0 * 0.008, 0.64, epsilon = 1e-12);
        assert_relative_eq!(Kernel::Spline.eval_1d(1.0, 0.2), 0.64, epsilon = 1e-12);
        assert_relative_eq!(Kernel::Spline.eval_1d(1.0, 0.2 + 1e-12), 0.64, epsilon = 1e-9);
    }

    #[test]
    fn compact_support() {
        for k in [Kernel::Linear, Kernel::Spherical, Kernel::Spline] {
            assert_eq!(k.eval_1d(2.0, 0.5), 0.0);
            assert_eq!(k.eval_1d(2.0, -0.75), 0.0);
        }
    }

    #[test]
    fn identity_correlation_gives_mean() {
        let ts = random_set(12, 2, 4);
        let m = fit(&ts, Kernel::Exponential, ThetaChoice::Fixed(vec![1e6, 1e6])).unwrap();
        let mean = ts.values.iter().sum::<f64>() / 12.0;
        assert_relative_eq!(m.zeta(), mean, epsilon = 1e-10);
        let q = DMatrix::identity(5, 5);
        let f = DMatrix::from_element(5, 1, 1.0);
        let y = DVector::from_vec(vec![1.0, 2.0, 3.0, 4.0, 10.0]);
        assert_relative_eq!(gls(&q, &f, &y).unwrap()[0], 4.0, epsilon = 1e-12);
    }

    #[test]
    fn one_dimensional_interpolation() {
        let xs = [-1.0, -0.4, 0.1, 0.5, 1.2];
        let rows: Vec<Vec<f64>> = xs.iter().map(|&x| vec![x]).collect();
        let ys: Vec<f64> = xs.iter().map(|x| x * x).collect();
        let ts = TrainingSet::from_rows(&rows, &ys).unwrap();
        let m = fit(&ts, Kernel::Gaussian, ThetaChoice::mle()).unwrap();
        for (x, y) in xs.iter().zip(&ys) {
            assert!((m.predict(&[*x]) - y).abs() < 1e-8);
        }
    }

    #[test]
    fn gls_matches_dense_inverse() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let k = 8;
        let pts: Vec<Vec<f64>> = (0..k).map(|_| (0..3).map(|_| rng.random_range(-1.0..1.0)).collect()).collect();
        let spec = CorrelationSpec { kind: Kernel::Gaussian, theta: vec![1.5, 0.8, 2.0] };
        let q = DMatrix::from_fn(k, k, |i, j| correlation(&spec, &pts[i], &pts[j]));
        let f = DMatrix::from_fn(k, 3, |_, _| rng.random_range(-1.0..1.0));
        let y = DVector::from_fn(k, |_, _| rng.random_range(-2.0..2.0));
        let qi = q.clone().try_inverse().unwrap();
        let oracle = (f.transpose() * &qi * &f).try_inverse().unwrap() * f.transpose() * &qi * &y;
        let z = gls(&q, &f, &y).unwrap();
        for i in 0..3 {
            assert!((z[i] - oracle[i]).abs() <= 1e-10 * (1.0 + oracle[i].abs()));
        }
    }

    #[test]
    fn training_sites_are_interpolated() {
        let ts = random_set(30, 5, 8);
        for kind in Kernel::ALL {
            let m = fit(&ts, kind, ThetaChoice::mle()).unwrap();
            let ymax = ts.values.amax();
            for i in 0..ts.len() {
                let x: Vec<f64> = ts.sites.row(i).iter().copied().collect();
                assert!((m.predict(&x) - ts.values[i]).abs() <= 1e-8 * (1.0 + ymax), "{kind}");
                assert!(m.mse(&x) <= 1e-8, "{kind}: mse {}", m.mse(&x));
            }
        }
    }

    #[test]
    fn constant_response_is_rejected_by_normalization() {
        let rows = vec![vec![0.0], vec![1.0], vec![2.0]];
        assert!(fit(&TrainingSet::from_rows(&rows, &[2.0; 3]).unwrap(), Kernel::Gaussian, ThetaChoice::mle()).is_err());
    }

    #[test]
    fn far_field_limits() {
        let ts = random_set(20, 2, 3);
        let m = fit(&ts, Kernel::Gaussian, ThetaChoice::Fixed(vec![2.0, 2.0])).unwrap();
        let far = [1e3, -1e3];
        assert_relative_eq!(m.predict(&far), m.zeta(), epsilon = 1e-12);
        // With q = 0 the estimator reduces to σ²(1 + 1/(FᵀQ⁻¹F)); for Q ≈ I that is σ²(1 + 1/k).
        let mi = fit(&ts, Kernel::Gaussian, ThetaChoice::Fixed(vec![1e6, 1e6])).unwrap();
        assert_relative_eq!(mi.mse(&far), mi.sigma2() * (1.0 + 1.0 / 20.0), max_relative = 1e-9);
    }

    #[test]
    fn mse_positive_away_from_sites() {
        let ts = random_set(25, 3, 21);
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for kind in [Kernel::Gaussian, Kernel::Exponential] {
            let m = fit(&ts, kind, ThetaChoice::mle()).unwrap();
            let (norm, _) = normalize(&ts).unwrap();
            for _ in 0..1000 {
                let x: Vec<f64> = (0..3).map(|_| rng.random_range(-1.0..6.0)).collect();
                let phi = m.mse(&x);
                assert!(phi >= 0.0);
                let xn = m.stats().normalize_point(&x);
                let nearest = (0..norm.len())
                    .map(|i| norm.sites.row(i).iter().zip(&xn).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt())
                    .fold(f64::INFINITY, f64::min);
                if nearest >= 0.1 {
                    assert!(phi > 0.0, "{kind}");
                }
            }
        }
    }

    #[test]
    fn mle_does_not_worsen_likelihood() {
        for kind in Kernel::ALL {
            let ts = random_set(30, 5, 99);
            let m = fit(&ts, kind, ThetaChoice::mle()).unwrap();
            let s = m.theta_search().unwrap();
            assert!(s.log_likelihood >= s.start_log_likelihood);
            assert!(s.evaluations <= 200);
            assert!(m.theta().iter().all(|t| (THETA_MIN..=THETA_MAX).contains(t)));
        }
    }

    #[test]
    fn duplicate_sites_rejected() {
        let rows = vec![vec![0.0, 1.0], vec![0.0, 1.0], vec![1.0, 0.0], vec![2.0, 2.0]];
        let r =
            fit(&TrainingSet::from_rows(&rows, &[1.0, 2.0, 3.0, 4.0]).unwrap(), Kernel::Gaussian, ThetaChoice::mle());
        assert!(matches!(r, Err(Error::DegenerateInput(_))));
    }

    #[test]
    fn dump_round_trips_through_json() {
        let m = fit(&random_set(12, 2, 1), Kernel::Spline, ThetaChoice::mle()).unwrap();
        let d = m.dump();
        let back: ModelDump = serde_json::from_str(&serde_json::to_string(&d).unwrap()).unwrap();
        assert_eq!(back.kernel, Kernel::Spline);
        assert_eq!(back.sites.len(), 12);
    }

    proptest! {
        #[test]
        fn kernels_symmetric_and_bounded(
            w in proptest::collection::vec(-3.0f64..3.0, 3),
            x in proptest::collection::vec(-3.0f64..3.0, 3),
            theta in proptest::collection::vec(1e-3f64..20.0, 3),
        ) {
            for kind in Kernel::ALL {
                let spec = CorrelationSpec { kind, theta: theta.clone() };
                let a = correlation(&spec, &w, &x);
                prop_assert_eq!(a, correlation(&spec, &x, &w));
                prop_assert!((0.0..=1.0).contains(&a));
            }
        }
    }
}
