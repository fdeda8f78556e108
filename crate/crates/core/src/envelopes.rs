//! Sub- and super-solution envelopes for the frozen moving-frame equation
//!
//! ```text
//! U_t = U_xx + (c_mu - chi V'(x; u)) U_x + (1 - chi V(x; u) - (1 - chi) U) U
//! ```
//!
//! `U+ = min{1/(1-chi), e^{-mu x}}` and `U- = max{0, e^{-mu x} - d e^{-mu~ x}}`
//! bound the admissible set `E_mu`; `V+` bounds the chemoattractant of any
//! member. The constants `A0, A1, A2, d0` certify that `U-` is a sub-solution.

use serde::{Deserialize, Serialize};

use crate::constants::{c_mu, decay_rate_lhs};
use crate::elliptic::{Chemoattractant, EllipticSolver};
use crate::error::{Error, Result};
use crate::grid::{Field, Grid1D};

/// Membership tolerance for `E_mu`.
pub const MEMBERSHIP_TOL: f64 = 1e-10;

/// Relative slack allowed on the feasibility inequality, so that `mu` obtained
/// from `c = c*(chi)` by round-off still qualifies.
const FEASIBILITY_SLACK: f64 = 1e-9;

/// Parameters of the lower envelope `U-`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LowerEnvelope {
    pub mu_tilde: f64,
    pub d: f64,
    /// Zero of `U-`: `ln d / (mu~ - mu)`.
    pub a_lower: f64,
    /// Maximizer of `e^{-mu x} - d e^{-mu~ x}`.
    pub a_bar: f64,
    pub a0: f64,
    pub a2: f64,
    pub d0: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EnvelopeParams {
    pub chi: f64,
    pub mu: f64,
    /// `c_mu = mu + 1/mu`.
    pub c: f64,
    pub a1: f64,
    /// `None` only for the critical Fisher-KPP case `chi = 0, mu = 1`, where
    /// no `mu~ > mu` is admissible and the lower envelope is zero.
    pub lower: Option<LowerEnvelope>,
}

/// `e^{-mu x}`.
#[inline]
pub fn eval_phi(mu: f64, x: f64) -> f64 {
    (-mu * x).exp()
}

/// `mu + sqrt(1 - mu^2)`.
#[inline]
fn mu_plus_root(mu: f64) -> f64 {
    mu + (1.0 - mu * mu).max(0.0).sqrt()
}

/// Whether `(chi, mu)` satisfies `chi g(mu) <= 1 - chi`.
pub fn is_feasible(chi: f64, mu: f64) -> bool {
    if chi == 0.0 {
        return mu > 0.0 && mu <= 1.0;
    }
    mu > 0.0 && mu < 1.0 && chi * decay_rate_lhs(mu) <= (1.0 - chi) * (1.0 + FEASIBILITY_SLACK)
}

/// Upper end of the admissible `mu~` range.
pub fn mu_tilde_bound(mu: f64) -> f64 {
    1f64.min(2.0 * mu).min(mu + 1.0 / mu_plus_root(mu))
}

/// Builds and validates envelope parameters. Omitted `mu_tilde` defaults to
/// `mu + min{1 - mu, mu, 1/(mu + sqrt(1 - mu^2))}/2`; omitted `d` to
/// `max{1 + 1e-6, d0}`.
pub fn make_envelope(
    chi: f64,
    mu: f64,
    mu_tilde: Option<f64>,
    d: Option<f64>,
) -> Result<EnvelopeParams> {
    if !(0.0..1.0).contains(&chi) {
        return Err(Error::Domain(format!(
            "envelopes need 0 <= chi < 1, got {chi}"
        )));
    }
    if !is_feasible(chi, mu) {
        return Err(Error::Constraint(format!(
            "infeasible (chi, mu) = ({chi}, {mu}): need mu (mu + sqrt(1 - mu^2))/(1 - mu^2) <= (1 - chi)/chi"
        )));
    }
    let c = c_mu(mu)?;
    let one_minus_mu2 = 1.0 - mu * mu;

    if mu == 1.0 {
        if mu_tilde.is_some() || d.is_some() {
            return Err(Error::Constraint(
                "mu = 1 admits no mu~ with mu < mu~ < 1".into(),
            ));
        }
        return Ok(EnvelopeParams {
            chi,
            mu,
            c,
            a1: 1.0,
            lower: None,
        });
    }

    let a1 = chi * decay_rate_lhs(mu) + chi / one_minus_mu2 + 1.0 - chi;
    let bound = mu_tilde_bound(mu);
    let mt = match mu_tilde {
        Some(mt) => {
            if !(mt > mu && mt < bound) {
                return Err(Error::Constraint(format!(
                    "mu~ must satisfy mu < mu~ < min{{1, 2 mu, mu + 1/(mu + sqrt(1 - mu^2))}} = {bound}, got {mt}"
                )));
            }
            mt
        }
        None => mu + 0.5 * (1.0 - mu).min(mu).min(1.0 / mu_plus_root(mu)),
    };

    let a0 = (mt - mu) * (1.0 - mu * mt) / mu;
    let a2 = (1.0 - chi) - chi * mt * mu_plus_root(mu) / one_minus_mu2 + chi / one_minus_mu2;
    if !(a0 > 0.0) {
        return Err(Error::Constraint(format!("A0 = {a0} must be positive")));
    }
    if a2 < 0.0 {
        return Err(Error::Constraint(format!("A2 = {a2} must be nonnegative")));
    }
    let d0 = 1f64.max(a1 / a0);
    let d = match d {
        Some(d) => {
            if !(d > 1.0 && d >= d0) {
                return Err(Error::Constraint(format!(
                    "d must satisfy d > 1 and d >= d0 = {d0}, got {d}"
                )));
            }
            d
        }
        None => d0.max(1.0 + 1e-6),
    };
    let gap = mt - mu;
    Ok(EnvelopeParams {
        chi,
        mu,
        c,
        a1,
        lower: Some(LowerEnvelope {
            mu_tilde: mt,
            d,
            a_lower: d.ln() / gap,
            a_bar: ((d * mt).ln() - mu.ln()) / gap,
            a0,
            a2,
            d0,
        }),
    })
}

impl EnvelopeParams {
    /// Plateau height `1/(1 - chi)`.
    pub fn cap(&self) -> f64 {
        1.0 / (1.0 - self.chi)
    }

    /// Left edge of the support of `U-` (`+inf` when the lower envelope is zero).
    pub fn a_lower(&self) -> f64 {
        self.lower.map_or(f64::INFINITY, |l| l.a_lower)
    }

    /// Where `U+` switches from the plateau to `e^{-mu x}`.
    pub fn plateau_edge(&self) -> f64 {
        (1.0 - self.chi).ln() / self.mu
    }

    pub fn u_plus(&self, x: f64) -> f64 {
        if x <= self.plateau_edge() {
            self.cap()
        } else {
            eval_phi(self.mu, x).min(self.cap())
        }
    }

    pub fn u_minus(&self, x: f64) -> f64 {
        match self.lower {
            None => 0.0,
            Some(l) if x <= l.a_lower => 0.0,
            Some(l) => (eval_phi(self.mu, x) - l.d * eval_phi(l.mu_tilde, x)).max(0.0),
        }
    }

    /// `U-` frozen at `x_delta = a_lower + delta` to the left of `x_delta`.
    pub fn u_minus_shifted(&self, delta: f64, x: f64) -> f64 {
        let x_delta = self.a_lower() + delta;
        self.u_minus(x.max(x_delta))
    }

    pub fn v_plus(&self, x: f64) -> f64 {
        let one_minus_mu2 = 1.0 - self.mu * self.mu;
        if one_minus_mu2 <= 0.0 {
            return self.cap();
        }
        (eval_phi(self.mu, x) / one_minus_mu2).min(self.cap())
    }

    /// Pointwise bound on `|V'|` for densities below `e^{-mu x}`.
    pub fn v_prime_bound(&self, x: f64) -> f64 {
        mu_plus_root(self.mu) / (1.0 - self.mu * self.mu) * eval_phi(self.mu, x)
    }

    pub fn sample_u_plus(&self, grid: &Grid1D) -> Field {
        field_of(grid, |x| self.u_plus(x))
    }

    pub fn sample_u_minus(&self, grid: &Grid1D) -> Field {
        field_of(grid, |x| self.u_minus(x))
    }

    pub fn sample_v_plus(&self, grid: &Grid1D) -> Field {
        field_of(grid, |x| self.v_plus(x))
    }
}

fn field_of(grid: &Grid1D, f: impl Fn(f64) -> f64) -> Field {
    Field::from_values(*grid, grid.nodes().map(f).collect()).expect("length matches grid")
}

pub fn eval_u_plus(p: &EnvelopeParams, x: f64) -> f64 {
    p.u_plus(x)
}

pub fn eval_u_minus(p: &EnvelopeParams, x: f64) -> f64 {
    p.u_minus(x)
}

pub fn eval_v_plus(p: &EnvelopeParams, x: f64) -> f64 {
    p.v_plus(x)
}

/// Result of testing `U- <= u <= U+` on the grid.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Membership {
    pub member: bool,
    /// Largest amount by which either bound is exceeded (`<= 0` when inside).
    pub max_violation: f64,
    pub x_at: f64,
}

/// Membership in `E_mu` with tolerance [`MEMBERSHIP_TOL`].
pub fn membership_e_mu(p: &EnvelopeParams, u: &Field) -> Membership {
    membership_with_tol(p, u, MEMBERSHIP_TOL)
}

pub fn membership_with_tol(p: &EnvelopeParams, u: &Field, tol: f64) -> Membership {
    let mut worst = f64::NEG_INFINITY;
    let mut x_at = f64::NAN;
    for (x, v) in u.iter() {
        let excess = (v - p.u_plus(x)).max(p.u_minus(x) - v);
        if excess > worst {
            worst = excess;
            x_at = x;
        }
    }
    Membership {
        member: worst <= tol,
        max_violation: worst,
        x_at,
    }
}

/// A discrete operator evaluated at interior nodes `1..n-1`.
#[derive(Debug, Clone)]
pub struct InteriorResidual {
    grid: Grid1D,
    values: Vec<f64>,
}

impl InteriorResidual {
    pub fn grid(&self) -> &Grid1D {
        &self.grid
    }

    /// `(x_i, value)` for interior nodes.
    pub fn iter(&self) -> impl Iterator<Item = (f64, f64)> + '_ {
        self.values
            .iter()
            .enumerate()
            .map(move |(k, &r)| (self.grid.x(k + 1), r))
    }

    pub fn max(&self) -> f64 {
        self.values
            .iter()
            .copied()
            .fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, r| m.max(r.abs()))
    }

    /// Smallest value over interior nodes with `x > x_min` (`+inf` if none).
    pub fn min_right_of(&self, x_min: f64) -> f64 {
        self.iter()
            .filter(|&(x, _)| x > x_min)
            .fold(f64::INFINITY, |m, (_, r)| m.min(r))
    }

    /// Largest value over interior nodes with `lo <= x <= hi`.
    pub fn max_abs_within(&self, lo: f64, hi: f64) -> f64 {
        self.iter()
            .filter(|&(x, _)| x >= lo && x <= hi)
            .fold(0.0, |m, (_, r)| m.max(r.abs()))
    }
}

/// Centered second-order discretization of
/// `W'' + (c - chi V') W' + (1 - chi V - (1 - chi) W) W`
/// at interior nodes, for given `V`, `V'`.
pub fn frame_operator(
    chi: f64,
    c: f64,
    w: &Field,
    chem: &Chemoattractant,
) -> Result<InteriorResidual> {
    w.same_grid(&chem.v)?;
    w.same_grid(&chem.v_prime)?;
    let grid = *w.grid();
    let h = grid.h();
    let (inv_h2, inv_2h) = (1.0 / (h * h), 0.5 / h);
    let wv = w.values();
    let v = chem.v.values();
    let vp = chem.v_prime.values();
    let values = (1..wv.len() - 1)
        .map(|i| {
            let wxx = (wv[i + 1] - 2.0 * wv[i] + wv[i - 1]) * inv_h2;
            let wx = (wv[i + 1] - wv[i - 1]) * inv_2h;
            wxx + (c - chi * vp[i]) * wx + (1.0 - chi * v[i] - (1.0 - chi) * wv[i]) * wv[i]
        })
        .collect();
    Ok(InteriorResidual { grid, values })
}

/// `L W` with `V`, `V'` computed from `u` by the default kernel solver.
pub fn residual_operator_l(p: &EnvelopeParams, w: &Field, u: &Field) -> Result<InteriorResidual> {
    w.same_grid(u)?;
    let chem = EllipticSolver::default().solve(u)?;
    frame_operator(p.chi, p.c, w, &chem)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::make_grid;

    #[test]
    fn feasibility_examples() {
        // LHS at mu = 0.5 is 0.5 (0.5 + sqrt 0.75)/0.75
        let lhs = decay_rate_lhs(0.5);
        assert!((lhs - 0.5 * (0.5 + 0.75f64.sqrt()) / 0.75).abs() < 1e-15);
        assert!((lhs - 0.9107).abs() < 1e-4);
        assert!(make_envelope(0.2, 0.5, None, None).is_ok());
        let lhs = decay_rate_lhs(0.99);
        assert!((lhs - 56.3).abs() < 0.1);
        assert!(matches!(
            make_envelope(0.2, 0.99, None, None),
            Err(Error::Constraint(_))
        ));
    }

    #[test]
    fn derived_constants() {
        let p = make_envelope(0.2, 0.5, None, None).unwrap();
        let l = p.lower.unwrap();
        assert!((l.mu_tilde - 0.75).abs() < 1e-15);
        assert!((l.a0 - 0.25 * (1.0 - 0.375) / 0.5).abs() < 1e-15);
        assert!(l.a2 >= 0.0);
        assert!(l.d >= l.d0 && l.d > 1.0);
        // U-(a_lower) = 0: phi_mu(a) = d phi_mu~(a)
        let a = l.a_lower;
        assert!((eval_phi(p.mu, a) - l.d * eval_phi(l.mu_tilde, a)).abs() < 1e-14);
        assert_eq!(p.u_minus(a), 0.0);
        assert_eq!(p.u_minus(a - 1.0), 0.0);
    }

    #[test]
    fn u_minus_peaks_at_a_bar() {
        let p = make_envelope(0.2, 0.5, None, None).unwrap();
        let l = p.lower.unwrap();
        let peak = p.u_minus(l.a_bar);
        assert!(peak > 0.0);
        for k in 1..200 {
            let dx = 0.05 * k as f64;
            assert!(p.u_minus(l.a_bar + dx) <= peak);
            assert!(p.u_minus(l.a_bar - dx) <= peak);
        }
    }

    #[test]
    fn u_plus_plateau() {
        let p = make_envelope(0.5 - 1e-12, 0.3, None, None).unwrap();
        assert!((p.cap() - 2.0).abs() < 1e-9);
        let edge = p.plateau_edge();
        assert_eq!(p.u_plus(edge - 3.0), p.cap());
        assert!((p.u_plus(edge + 1.0) - eval_phi(0.3, edge + 1.0)).abs() < 1e-15);
    }

    #[test]
    fn ordering_of_envelopes() {
        for &(chi, mu) in &[(0.2, 0.5), (0.1, 0.8), (0.45, 0.5)] {
            let p = make_envelope(chi, mu, None, None).unwrap();
            for k in -400..400 {
                let x = 0.25 * k as f64;
                let (lo, hi) = (p.u_minus(x), p.u_plus(x));
                assert!(0.0 <= lo && lo <= hi && hi <= p.cap());
                assert!(p.v_plus(x) <= p.cap());
            }
        }
    }

    #[test]
    fn explicit_parameters_validated() {
        assert!(make_envelope(0.2, 0.5, Some(0.5), None).is_err());
        assert!(make_envelope(0.2, 0.5, Some(1.0), None).is_err());
        assert!(make_envelope(0.2, 0.5, Some(0.7), Some(0.5)).is_err());
        let p = make_envelope(0.2, 0.5, Some(0.7), Some(100.0)).unwrap();
        assert_eq!(p.lower.unwrap().d, 100.0);
    }

    #[test]
    fn a2_nonnegative_on_admissible_range() {
        for i in 1..20 {
            let chi = 0.024 * i as f64;
            let mu_max =
                crate::constants::mu_star(&crate::constants::ModelParams::new(chi).unwrap())
                    .unwrap();
            for j in 1..10 {
                let mu = mu_max * j as f64 / 10.0;
                let bound = mu_tilde_bound(mu);
                for k in 1..10 {
                    let mt = mu + (bound - mu) * k as f64 / 10.0;
                    let p = make_envelope(chi, mu, Some(mt), None).unwrap();
                    assert!(p.lower.unwrap().a2 >= 0.0);
                }
            }
        }
    }

    #[test]
    fn d0_nonincreasing_in_a0() {
        let a1 = 2.0;
        let mut prev = f64::INFINITY;
        for k in 1..50 {
            let a0 = 0.05 * k as f64;
            let d0 = 1f64.max(a1 / a0);
            assert!(d0 <= prev);
            prev = d0;
        }
    }

    #[test]
    fn membership_of_envelopes() {
        let g = make_grid(30.0, 600).unwrap();
        let p = make_envelope(0.2, 0.5, None, None).unwrap();
        assert!(membership_e_mu(&p, &p.sample_u_plus(&g)).member);
        assert!(membership_e_mu(&p, &p.sample_u_minus(&g)).member);
        let m = membership_e_mu(&p, &p.sample_u_plus(&g).map(|v| 1.1 * v));
        assert!(!m.member);
        assert!(m.max_violation > 0.0);
    }

    #[test]
    fn critical_fisher_case_has_no_lower_envelope() {
        let p = make_envelope(0.0, 1.0, None, None).unwrap();
        assert!(p.lower.is_none());
        assert_eq!(p.c, 2.0);
        assert_eq!(p.u_minus(3.0), 0.0);
        assert_eq!(p.v_plus(-5.0), 1.0);
        assert!(make_envelope(0.1, 1.0, None, None).is_err());
    }

    #[test]
    fn constant_plateau_residual_is_nonpositive() {
        let g = make_grid(40.0, 4000).unwrap();
        let p = make_envelope(0.2, 0.5, None, None).unwrap();
        let u = p.sample_u_plus(&g);
        let w = Field::constant(g, p.cap());
        let r = residual_operator_l(&p, &w, &u).unwrap();
        assert!(r.max() <= 1e-12);
    }
}
