//! Scalar wave-speed constants.
//!
//! Everything here is a pure function of [`ModelParams`]. The critical decay
//! rate `mu*` is the root of a strictly increasing function with a pole at the
//! right end of its domain, so plain bisection on an inset bracket is both
//! robust and accurate to the last few ulps.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Inset from the pole of the decay-rate equations.
pub const BRACKET_INSET: f64 = 1e-9;

/// Target residual for every bisection in this module.
pub const ROOT_RESIDUAL: f64 = 1e-12;

/// Chemotaxis sensitivity, logistic coefficients `u(a - b u)` and the spatial
/// dimension used by the dimension-dependent bounds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    pub chi: f64,
    pub a: f64,
    pub b: f64,
    pub dim: u32,
}

impl Default for ModelParams {
    fn default() -> Self {
        ModelParams {
            chi: 0.0,
            a: 1.0,
            b: 1.0,
            dim: 1,
        }
    }
}

impl ModelParams {
    /// Standard logistic source `u(1 - u)` in one dimension.
    pub fn new(chi: f64) -> Result<Self> {
        ModelParams {
            chi,
            ..Default::default()
        }
        .validated()
    }

    pub fn with_logistic(chi: f64, a: f64, b: f64) -> Result<Self> {
        ModelParams { chi, a, b, dim: 1 }.validated()
    }

    pub fn with_dim(chi: f64, dim: u32) -> Result<Self> {
        ModelParams {
            chi,
            dim,
            ..Default::default()
        }
        .validated()
    }

    /// Checks the parameter constraints. `chi = 0` is accepted: it is the
    /// Fisher-KPP control case used throughout the verification suites.
    pub fn validated(self) -> Result<Self> {
        if !(self.a.is_finite() && self.a > 0.0) {
            return Err(Error::Domain(format!(
                "a must satisfy a > 0, got {}",
                self.a
            )));
        }
        if !(self.b.is_finite() && self.b > 0.0) {
            return Err(Error::Domain(format!(
                "b must satisfy b > 0, got {}",
                self.b
            )));
        }
        if self.dim == 0 {
            return Err(Error::Domain("dim must satisfy N >= 1".into()));
        }
        let ok = self.chi.is_finite() && self.chi >= 0.0 && self.chi < self.b;
        if !ok {
            let msg = if self.b == 1.0 {
                format!("chi must satisfy 0 < chi < 1, got {}", self.chi)
            } else {
                format!(
                    "chi must satisfy 0 < chi < b = {}, got {}",
                    self.b, self.chi
                )
            };
            return Err(Error::Domain(msg));
        }
        Ok(self)
    }

    pub fn is_standard_logistic(&self) -> bool {
        self.a == 1.0 && self.b == 1.0
    }

    /// `chi < 1/2`: traveling waves are constructed in this regime.
    pub fn in_wave_regime(&self) -> bool {
        self.chi < 0.5
    }

    /// `chi < b/2`, the regime of the generalized critical rate.
    pub fn in_generalized_regime(&self) -> bool {
        self.chi < 0.5 * self.b
    }

    /// Whether the closed-form lower spreading bound applies.
    pub fn in_lower_bound_regime(&self) -> bool {
        self.chi < lower_bound_threshold(self)
    }
}

/// Lower and upper bounds on the spreading speed interval.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpeedInterval {
    pub lower: f64,
    pub upper: f64,
    /// Whether `chi` is below the threshold under which `lower` is proven.
    pub lower_valid: bool,
    /// The `chi` threshold for the lower bound.
    pub threshold: f64,
}

/// Critical decay rate together with how it was obtained.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CriticalRate {
    pub mu: f64,
    /// The supremum hit the right end of `(0, min{1, sqrt a})`.
    pub saturated: bool,
    /// `|g(mu)|` at the returned point (zero when saturated).
    pub residual: f64,
}

/// `c_mu = mu + 1/mu` for `0 < mu <= 1`.
pub fn c_mu(mu: f64) -> Result<f64> {
    if !(mu > 0.0 && mu <= 1.0) {
        return Err(Error::Domain(format!("c_mu needs 0 < mu <= 1, got {mu}")));
    }
    Ok(mu + 1.0 / mu)
}

/// `mu + a/mu`, the speed of `e^{-mu x}` under linear growth rate `a`.
pub fn c_mu_general(mu: f64, a: f64) -> f64 {
    mu + a / mu
}

/// Root of `mu + 1/mu = c` in `(0, 1]`.
pub fn mu_of_c(c: f64) -> Result<f64> {
    if !(c.is_finite() && c >= 2.0) {
        return Err(Error::Domain(format!("mu_of_c needs c >= 2, got {c}")));
    }
    // 2 / (c + sqrt(c^2 - 4)) is the same root without cancellation.
    Ok(2.0 / (c + (c * c - 4.0).sqrt()))
}

/// `mu (mu + sqrt(1 - mu^2)) / (1 - mu^2)`, the left-hand side of the
/// critical-rate equation. Strictly increasing on `(0, 1)`.
pub fn decay_rate_lhs(mu: f64) -> f64 {
    let s = 1.0 - mu * mu;
    mu * (mu + s.sqrt()) / s
}

/// Dimension-`N` analogue of [`decay_rate_lhs`], defined on `(0, 1/sqrt N)`.
pub fn decay_rate_lhs_dim(mu: f64, dim: u32) -> f64 {
    let n = f64::from(dim);
    let s = 1.0 - n * mu * mu;
    2f64.powi(dim as i32) * n.sqrt() * mu * (mu + s.sqrt()) / s
}

/// Bisection on an increasing function until `|f| <= ROOT_RESIDUAL` or the
/// bracket collapses to adjacent floats.
pub(crate) fn bisect_increasing<F: Fn(f64) -> f64>(f: F, mut lo: f64, mut hi: f64) -> Result<f64> {
    let (flo, fhi) = (f(lo), f(hi));
    if !(flo <= 0.0 && fhi >= 0.0) {
        return Err(Error::NoSignChange {
            a: lo,
            b: hi,
            fa: flo,
            fb: fhi,
        });
    }
    let mut best = if flo.abs() < fhi.abs() { lo } else { hi };
    let mut best_res = f(best).abs();
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        let fm = f(mid);
        if !fm.is_finite() {
            return Err(Error::NonFinite {
                value: fm,
                location: format!("bisection at {mid}"),
            });
        }
        if fm.abs() < best_res {
            best = mid;
            best_res = fm.abs();
        }
        if best_res <= ROOT_RESIDUAL {
            break;
        }
        if fm < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(best)
}

fn require_chi(params: &ModelParams) -> Result<()> {
    if !(params.chi > 0.0 && params.chi < params.b) {
        return Err(Error::Domain(format!(
            "critical rate needs 0 < chi < b = {}, got chi = {}",
            params.b, params.chi
        )));
    }
    Ok(())
}

/// Critical decay rate for `dim = 1` and general logistic coefficients.
///
/// For `a = b = 1` this is the unique root of `g(mu) = (1 - chi)/chi`.
/// Otherwise it is the supremum of `mu < min{1, sqrt a}` with
/// `g(mu) <= (b - chi)/chi`, realized by the equality root when interior.
pub fn critical_rate(params: &ModelParams) -> Result<CriticalRate> {
    require_chi(params)?;
    if params.dim != 1 {
        return Err(Error::Domain(format!(
            "mu_star is one-dimensional; use mu_star_n for N = {}",
            params.dim
        )));
    }
    let target = (params.b - params.chi) / params.chi;
    let right = params.a.sqrt().min(1.0) - BRACKET_INSET;
    if decay_rate_lhs(right) <= target {
        return Ok(CriticalRate {
            mu: right,
            saturated: true,
            residual: 0.0,
        });
    }
    let g = |mu: f64| decay_rate_lhs(mu) - target;
    let mu = bisect_increasing(g, BRACKET_INSET, right)?;
    Ok(CriticalRate {
        mu,
        saturated: false,
        residual: g(mu).abs(),
    })
}

/// Critical decay rate `mu*(chi)`.
pub fn mu_star(params: &ModelParams) -> Result<f64> {
    critical_rate(params).map(|r| r.mu)
}

/// `c*(chi) = mu* + a/mu*`.
pub fn c_star(params: &ModelParams) -> Result<f64> {
    let mu = mu_star(params)?;
    Ok(mu + params.a / mu)
}

/// Dimension-`N` critical rate in `(0, 1/sqrt N)`.
pub fn mu_star_n(chi: f64, dim: u32) -> Result<f64> {
    if !(chi > 0.0 && chi < 1.0) {
        return Err(Error::Domain(format!(
            "mu_star_n needs 0 < chi < 1, got {chi}"
        )));
    }
    if dim == 0 {
        return Err(Error::Domain("mu_star_n needs N >= 1".into()));
    }
    let target = (1.0 - chi) / chi;
    let right = 1.0 / f64::from(dim).sqrt() - BRACKET_INSET;
    let g = |mu: f64| decay_rate_lhs_dim(mu, dim) - target;
    bisect_increasing(g, BRACKET_INSET, right)
}

/// `chi` threshold below which the lower spreading bound holds.
pub fn lower_bound_threshold(params: &ModelParams) -> f64 {
    if params.dim > 1 {
        2.0 / (3.0 + f64::from(params.dim + 1).sqrt())
    } else {
        2.0 * params.b / (3.0 + (params.a + 1.0).sqrt())
    }
}

/// `2 sqrt(a) + a chi/(b - chi)`.
pub fn logistic_upper_bound(chi: f64, a: f64, b: f64) -> f64 {
    2.0 * a.sqrt() + a * chi / (b - chi)
}

/// `2 sqrt(a - a chi/(b - chi)) - a chi/(b - chi)`.
pub fn logistic_lower_bound(chi: f64, a: f64, b: f64) -> f64 {
    let q = a * chi / (b - chi);
    2.0 * (a - q).max(0.0).sqrt() - q
}

/// Theoretical bounds on the spreading speed interval.
///
/// * `a = b = 1`, `N = 1`: upper `min{2 + chi/(1-chi), c*}`, lower
///   `2 sqrt(1 - chi/(1-chi)) - chi/(1-chi)` for `chi < 2/(3 + sqrt 2)`.
/// * `chi = 0`: both ends equal the Fisher-KPP speed `2 sqrt a`.
/// * general `(a, b)`, `N = 1`: upper `2 sqrt a + a chi/(b-chi)`, lower as
///   [`logistic_lower_bound`] for `chi < 2b/(3 + sqrt(a+1))`.
/// * `a = b = 1`, `N >= 2`: upper `min{2 + sqrt(N) chi/(1-chi), mu_N + 1/mu_N}`,
///   lower `2 sqrt(1 - chi/(1-chi)) - sqrt(N) chi/(1-chi)` for
///   `chi < 2/(3 + sqrt(N+1))`.
pub fn speed_interval(params: &ModelParams) -> Result<SpeedInterval> {
    let p = params.validated()?;
    if p.chi == 0.0 {
        let speed = 2.0 * p.a.sqrt();
        return Ok(SpeedInterval {
            lower: speed,
            upper: speed,
            lower_valid: true,
            threshold: lower_bound_threshold(&p),
        });
    }
    require_chi(&p)?;
    let chi = p.chi;
    let threshold = lower_bound_threshold(&p);
    let lower_valid = chi < threshold;

    let (lower, upper) = if p.dim == 1 && p.is_standard_logistic() {
        let upper = logistic_upper_bound(chi, 1.0, 1.0).min(c_star(&p)?);
        (logistic_lower_bound(chi, 1.0, 1.0), upper)
    } else if p.dim == 1 {
        (
            logistic_lower_bound(chi, p.a, p.b),
            logistic_upper_bound(chi, p.a, p.b),
        )
    } else if p.is_standard_logistic() {
        let n_sqrt = f64::from(p.dim).sqrt();
        let q = chi / (1.0 - chi);
        let mu_n = mu_star_n(chi, p.dim)?;
        let upper = (2.0 + n_sqrt * q).min(mu_n + 1.0 / mu_n);
        let lower = 2.0 * (1.0 - q).max(0.0).sqrt() - n_sqrt * q;
        (lower, upper)
    } else {
        return Err(Error::Domain(
            "dimension-dependent bounds are only available for a = b = 1".into(),
        ));
    };

    let lower = if lower_valid { lower.max(0.0) } else { 0.0 };
    Ok(SpeedInterval {
        lower,
        upper,
        lower_valid,
        threshold,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn c_mu_values() {
        assert_eq!(c_mu(1.0).unwrap(), 2.0);
        assert_eq!(c_mu(0.5).unwrap(), 2.5);
        assert!(c_mu(0.0).is_err());
        assert!(c_mu(1.5).is_err());
        assert!(c_mu(-0.1).is_err());
    }

    #[test]
    fn mu_of_c_values() {
        assert_eq!(mu_of_c(2.0).unwrap(), 1.0);
        assert_abs_diff_eq!(mu_of_c(2.5).unwrap(), 0.5, epsilon = 1e-15);
        assert!(mu_of_c(1.99).is_err());
        assert!(mu_of_c(f64::NAN).is_err());
    }

    #[test]
    fn mu_star_rejects_out_of_range() {
        let p = ModelParams {
            chi: 0.0,
            ..Default::default()
        };
        assert!(mu_star(&p).is_err());
        let p = ModelParams {
            chi: 1.0,
            ..Default::default()
        };
        assert!(mu_star(&p).is_err());
        assert!(ModelParams::new(1.5).is_err());
        assert!(mu_star_n(0.0, 2).is_err());
    }

    #[test]
    fn mu_star_limit_small_chi() {
        let mu = mu_star(&ModelParams::new(1e-6).unwrap()).unwrap();
        assert!(mu > 0.999);
        let c = c_star(&ModelParams::new(1e-6).unwrap()).unwrap();
        assert!(c > 2.0 && c < 2.0 + 1e-5);
    }

    #[test]
    fn generalized_small_chi_limits() {
        // a > 1: c* -> 1 + a
        let p = ModelParams::with_logistic(1e-7, 2.0, 1.0).unwrap();
        assert_abs_diff_eq!(c_star(&p).unwrap(), 3.0, epsilon = 1e-3);
        // a <= 1: c* -> 2 sqrt a, via saturation at sqrt a
        let p = ModelParams::with_logistic(1e-3, 0.25, 1.0).unwrap();
        let r = critical_rate(&p).unwrap();
        assert!(r.saturated);
        assert_abs_diff_eq!(c_star(&p).unwrap(), 1.0, epsilon = 1e-6);
    }

    #[test]
    fn generalized_reduces_to_standard() {
        for &chi in &[0.1, 0.2, 0.3, 0.4] {
            let std = ModelParams::new(chi).unwrap();
            let gen = ModelParams {
                a: 1.0,
                b: 1.0,
                ..std
            };
            assert_eq!(mu_star(&std).unwrap(), mu_star(&gen).unwrap());
            let q = chi / (1.0 - chi);
            assert_abs_diff_eq!(
                logistic_upper_bound(chi, 1.0, 1.0),
                2.0 + q,
                epsilon = 1e-15
            );
            assert_abs_diff_eq!(
                logistic_lower_bound(chi, 1.0, 1.0),
                2.0 * (1.0 - q).sqrt() - q,
                epsilon = 1e-15
            );
            assert_abs_diff_eq!(
                lower_bound_threshold(&std),
                2.0 / (3.0 + 2f64.sqrt()),
                epsilon = 1e-15
            );
        }
    }

    #[test]
    fn interval_above_threshold_has_zero_lower() {
        let s = speed_interval(&ModelParams::new(0.6).unwrap()).unwrap();
        assert!(!s.lower_valid);
        assert_eq!(s.lower, 0.0);
        assert!(s.upper > 2.0);
    }

    #[test]
    fn interval_general_logistic_needs_dim_one() {
        let p = ModelParams {
            chi: 0.2,
            a: 2.0,
            b: 1.0,
            dim: 2,
        };
        assert!(speed_interval(&p).is_err());
    }

    #[test]
    fn dimension_interval_widens_with_n() {
        let i1 = speed_interval(&ModelParams::with_dim(0.1, 2).unwrap()).unwrap();
        let i2 = speed_interval(&ModelParams::with_dim(0.1, 3).unwrap()).unwrap();
        assert!(i2.lower <= i1.lower);
        assert!(i1.lower_valid && i2.lower_valid);
        assert!(i1.lower <= i1.upper && i2.lower <= i2.upper);
    }

    #[test]
    fn bisection_reports_missing_bracket() {
        let err = bisect_increasing(|x| x + 1.0, 0.0, 1.0).unwrap_err();
        assert!(matches!(err, Error::NoSignChange { .. }));
    }
}
