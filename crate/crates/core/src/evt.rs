//! Peaks-over-threshold calibration with a Generalized Pareto tail.
//!
//! The GPD is fitted by maximum likelihood through the reparametrisation
//! `theta = xi / sigma`: for fixed `theta` the likelihood is maximised by
//! `xi = mean(ln(1 + theta * y))`, `sigma = xi / theta`, which reduces the fit
//! to a one-dimensional search.

use serde::{Deserialize, Serialize};

use crate::features::View;

/// Fewest exceedances accepted for a tail fit.
pub const MIN_EXCEEDANCES: usize = 30;
/// Below this many exceedances the fit is noisy enough to warn about.
pub const WARN_EXCEEDANCES: usize = 100;
/// Shape range searched by the likelihood fit.
pub const XI_MIN: f64 = -0.5;
pub const XI_MAX: f64 = 1.0;
/// Shapes this close to zero use the exponential-limit threshold.
pub const XI_ZERO: f64 = 1e-6;

const GRID_POINTS: usize = 96;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum EvtError {
    #[error("{found} exceedances above the initial threshold; at least {required} are needed (more calibration data or a lower u_quantile)")]
    TooFewExceedances { found: usize, required: usize },
    #[error("invalid tail parameters: {0}")]
    InvalidParams(String),
    #[error("calibration errors must be finite and non-negative")]
    NonFinite,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FitMethod {
    Mle,
    Moments,
    /// All excesses equal: exponential with the common value as scale.
    Degenerate,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GpdFit {
    pub xi: f64,
    pub sigma: f64,
    pub method: FitMethod,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EvtConfig {
    /// Target exceedance probability of the final threshold.
    pub q: f64,
    /// Quantile of the calibration errors used as the initial threshold.
    pub u_quantile: f64,
}

impl Default for EvtConfig {
    fn default() -> Self {
        EvtConfig { q: 1e-3, u_quantile: 0.98 }
    }
}

impl EvtConfig {
    pub fn validate(&self) -> Result<(), EvtError> {
        if !(self.u_quantile > 0.0 && self.u_quantile < 1.0) {
            return Err(EvtError::InvalidParams(format!("u_quantile {} not in (0, 1)", self.u_quantile)));
        }
        if !(self.q > 0.0 && self.q < 1.0 - self.u_quantile) {
            return Err(EvtError::InvalidParams(format!(
                "q {} must lie in (0, 1 - u_quantile = {})",
                self.q,
                1.0 - self.u_quantile
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvtThreshold {
    pub view: View,
    pub u: f64,
    pub xi: f64,
    pub sigma: f64,
    pub method: FitMethod,
    pub n: usize,
    pub n_u: usize,
    pub q: f64,
    pub u_quantile: f64,
    pub z_star: f64,
}

/// Empirical quantile with linear interpolation between order statistics
/// (Hyndman-Fan type 7). `sorted` must be ascending and non-empty.
pub fn quantile_sorted(sorted: &[f64], p: f64) -> f64 {
    let h = (sorted.len() - 1) as f64 * p;
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(sorted.len() - 1);
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

fn mean_log1p(y: &[f64], theta: f64) -> f64 {
    y.iter().map(|&v| (theta * v).ln_1p()).sum::<f64>() / y.len() as f64
}

/// Profile log-likelihood per observation at `theta`, and the implied shape.
fn profile(y: &[f64], mean: f64, theta: f64) -> (f64, f64) {
    if theta == 0.0 {
        return (-(mean.ln() + 1.0), 0.0);
    }
    let xi = mean_log1p(y, theta);
    let sigma = xi / theta;
    if sigma.is_nan() || sigma <= 0.0 || !xi.is_finite() {
        return (f64::NEG_INFINITY, xi);
    }
    (-(sigma.ln() + xi + 1.0), xi)
}

/// Solves `mean(ln(1 + theta*y)) = target` on `(lo, hi)` by bisection;
/// the left side is increasing in `theta`.
fn theta_for_xi(y: &[f64], target: f64, mut lo: f64, mut hi: f64) -> f64 {
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid == lo || mid == hi {
            break;
        }
        if mean_log1p(y, mid) < target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

fn moments(mean: f64, var: f64) -> GpdFit {
    let r = mean * mean / var;
    GpdFit {
        xi: 0.5 * (1.0 - r),
        sigma: 0.5 * mean * (r + 1.0),
        method: FitMethod::Moments,
    }
}

/// Fits a GPD to positive excesses over a threshold.
pub fn fit_gpd(excesses: &[f64]) -> Result<GpdFit, EvtError> {
    if excesses.len() < MIN_EXCEEDANCES {
        return Err(EvtError::TooFewExceedances {
            found: excesses.len(),
            required: MIN_EXCEEDANCES,
        });
    }
    if excesses.iter().any(|v| !v.is_finite() || *v < 0.0) {
        return Err(EvtError::NonFinite);
    }
    if excesses.len() < WARN_EXCEEDANCES {
        log::warn!("GPD fit on only {} excesses; threshold will be noisy", excesses.len());
    }
    let n = excesses.len() as f64;
    let mean = excesses.iter().sum::<f64>() / n;
    let var = excesses.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    let y_max = excesses.iter().copied().fold(0.0, f64::max);
    if mean.is_nan() || mean <= 0.0 || var <= 1e-24 * mean * mean {
        log::warn!("degenerate GPD fit: all excesses equal; using exponential tail with scale {mean}");
        return Ok(GpdFit {
            xi: 0.0,
            sigma: if mean > 0.0 { mean } else { f64::MIN_POSITIVE },
            method: FitMethod::Degenerate,
        });
    }

    // theta range where the implied shape lies in [XI_MIN, XI_MAX].
    let theta_floor = -1.0 / y_max;
    let theta_lo = theta_for_xi(excesses, XI_MIN, theta_floor, 0.0);
    let mut upper = 1.0 / mean;
    while mean_log1p(excesses, upper) < XI_MAX {
        upper *= 2.0;
    }
    let theta_hi = theta_for_xi(excesses, XI_MAX, 0.0, upper);

    let half = GRID_POINTS / 2;
    let grid: Vec<f64> = (0..=half)
        .map(|i| theta_lo * (1.0 - i as f64 / half as f64))
        .chain((1..=half).map(|i| theta_hi * i as f64 / half as f64))
        .collect();
    let values: Vec<f64> = grid.iter().map(|&t| profile(excesses, mean, t).0).collect();
    let best = values
        .iter()
        .enumerate()
        .fold(0, |b, (i, v)| if *v > values[b] { i } else { b });

    if best == 0 || best == grid.len() - 1 {
        let fit = moments(mean, var);
        log::warn!(
            "GPD likelihood maximum on the shape boundary; using method of moments (xi={:.4}, sigma={:.4})",
            fit.xi,
            fit.sigma
        );
        return Ok(fit);
    }

    // Golden-section refinement between the neighbours of the best grid point.
    let (mut a, mut b) = (grid[best - 1], grid[best + 1]);
    let g = (5f64.sqrt() - 1.0) / 2.0;
    let f = |t: f64| profile(excesses, mean, t).0;
    let mut c = b - g * (b - a);
    let mut d = a + g * (b - a);
    let (mut fc, mut fd) = (f(c), f(d));
    for _ in 0..100 {
        if (b - a).abs() <= 1e-12 * (a.abs() + b.abs()).max(1e-300) {
            break;
        }
        if fc > fd {
            b = d;
            d = c;
            fd = fc;
            c = b - g * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + g * (b - a);
            fd = f(d);
        }
    }
    let mut theta = 0.5 * (a + b);
    if f(grid[best]) > f(theta) {
        theta = grid[best];
    }
    let (_, xi) = profile(excesses, mean, theta);
    let (xi, sigma) = if theta == 0.0 || xi.abs() <= XI_ZERO {
        (0.0, if theta == 0.0 { mean } else { xi / theta })
    } else {
        (xi, xi / theta)
    };
    Ok(GpdFit {
        xi,
        sigma,
        method: FitMethod::Mle,
    })
}

/// Extreme-quantile threshold from a fitted tail: the value exceeded with
/// probability `q` when a fraction `n_u / n` of points exceed `u`.
pub fn tail_quantile(u: f64, fit: &GpdFit, q: f64, n: usize, n_u: usize) -> f64 {
    let r = q * n as f64 / n_u as f64;
    let z = if fit.xi.abs() <= XI_ZERO {
        u - fit.sigma * r.ln()
    } else {
        u + fit.sigma / fit.xi * (r.powf(-fit.xi) - 1.0)
    };
    z.max(u)
}

/// Calibrates a view's threshold from normal-traffic reconstruction errors.
pub fn calibrate(view: View, errors: &[f64], cfg: &EvtConfig) -> Result<EvtThreshold, EvtError> {
    cfg.validate()?;
    if errors.iter().any(|v| !v.is_finite() || *v < 0.0) {
        return Err(EvtError::NonFinite);
    }
    if errors.is_empty() {
        return Err(EvtError::TooFewExceedances {
            found: 0,
            required: MIN_EXCEEDANCES,
        });
    }
    let mut sorted = errors.to_vec();
    sorted.sort_by(f64::total_cmp);
    let u = quantile_sorted(&sorted, cfg.u_quantile);
    let excesses: Vec<f64> = sorted.iter().filter(|&&e| e > u).map(|e| e - u).collect();
    let fit = fit_gpd(&excesses)?;
    let n_u = excesses.len();
    Ok(EvtThreshold {
        view,
        u,
        xi: fit.xi,
        sigma: fit.sigma,
        method: fit.method,
        n: errors.len(),
        n_u,
        q: cfg.q,
        u_quantile: cfg.u_quantile,
        z_star: tail_quantile(u, &fit, cfg.q, errors.len(), n_u),
    })
}
