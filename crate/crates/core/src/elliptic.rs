//! Solvers for the chemoattractant balance `0 = v'' - v + u`.
//!
//! The bounded solution is `v = G * u` with `G(x) = e^{-|x|}/2`. The kernel
//! backend evaluates that convolution exactly for the piecewise-linear
//! interpolant of `u` with two exponential sweeps, so constants and linear
//! data are reproduced to round-off. Outside `[-L, L]` the density is
//! extended according to a [`TailPolicy`].
//!
//! The tridiagonal backend solves `(I - D2) v = u` with second-order
//! differences and boundary values borrowed from the kernel backend. The two
//! agree to `O(h^2)` and serve as cross-checks for each other.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::Field;
use crate::quadrature;
use crate::tridiag::Tridiagonal;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EllipticMethod {
    #[default]
    GreenKernel,
    Tridiagonal,
}

/// How the density is continued past one end of the grid.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Tail {
    /// Continue with the boundary value.
    Constant,
    /// Continue with zero.
    Zero,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TailPolicy {
    pub left: Tail,
    pub right: Tail,
}

impl TailPolicy {
    /// Invaded state on the left, empty space on the right. Used for
    /// traveling-wave profiles.
    pub const WAVE: TailPolicy = TailPolicy {
        left: Tail::Constant,
        right: Tail::Zero,
    };

    /// Constant continuation at both ends, consistent with zero-flux
    /// boundaries in the lab frame.
    pub const REFLECTING: TailPolicy = TailPolicy {
        left: Tail::Constant,
        right: Tail::Constant,
    };
}

impl Default for TailPolicy {
    fn default() -> Self {
        TailPolicy::WAVE
    }
}

/// Backend plus tail policy.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct EllipticSolver {
    pub method: EllipticMethod,
    pub tails: TailPolicy,
}

/// `V` and `V'` for one density.
#[derive(Debug, Clone)]
pub struct Chemoattractant {
    pub v: Field,
    pub v_prime: Field,
}

/// `(1 - e^{-h}(1 + h)) / h`, summed as a series for small `h`.
fn slope_weight(h: f64) -> f64 {
    if h > 1.0 {
        return (1.0 - (-h).exp() * (1.0 + h)) / h;
    }
    // sum_{m>=2} (-1)^m (m-1) h^{m-1} / m!
    let mut sum = 0.0;
    let mut pow = 1.0;
    let mut fact = 1.0;
    for m in 2..30 {
        pow *= h;
        fact *= m as f64;
        let term = (m as f64 - 1.0) * pow / fact;
        sum += if m % 2 == 0 { term } else { -term };
        if term < 1e-18 * sum.abs() {
            break;
        }
    }
    sum
}

fn check_input(u: &Field) -> Result<()> {
    if u.grid().intervals() < 2 {
        return Err(Error::Domain("elliptic solve needs n >= 2".into()));
    }
    u.check_finite("density")
}

/// Left and right exponential moments `L_i = int_{-inf}^{x_i} e^{-(x_i - z)} u`,
/// `R_i = int_{x_i}^{inf} e^{-(z - x_i)} u`.
fn kernel_moments(u: &Field, tails: TailPolicy) -> (Vec<f64>, Vec<f64>) {
    let h = u.grid().h();
    let vals = u.values();
    let n = vals.len();
    let decay = (-h).exp();
    let alpha = -(-h).exp_m1();
    let beta = slope_weight(h);
    let near = alpha - beta;

    let mut left = vec![0.0; n];
    left[0] = match tails.left {
        Tail::Constant => vals[0],
        Tail::Zero => 0.0,
    };
    for i in 1..n {
        left[i] = decay * left[i - 1] + near * vals[i] + beta * vals[i - 1];
    }

    let mut right = vec![0.0; n];
    right[n - 1] = match tails.right {
        Tail::Constant => vals[n - 1],
        Tail::Zero => 0.0,
    };
    for i in (0..n - 1).rev() {
        right[i] = decay * right[i + 1] + near * vals[i] + beta * vals[i + 1];
    }
    (left, right)
}

fn kernel_pair(u: &Field, tails: TailPolicy) -> Result<Chemoattractant> {
    let (left, right) = kernel_moments(u, tails);
    let grid = *u.grid();
    let v = left
        .iter()
        .zip(&right)
        .map(|(l, r)| 0.5 * (l + r))
        .collect();
    let vp = left
        .iter()
        .zip(&right)
        .map(|(l, r)| 0.5 * (r - l))
        .collect();
    Ok(Chemoattractant {
        v: Field::from_values(grid, v)?,
        v_prime: Field::from_values(grid, vp)?,
    })
}

fn tridiagonal_v(u: &Field, tails: TailPolicy) -> Result<Field> {
    let grid = *u.grid();
    let n = grid.len();
    let (left, right) = kernel_moments(u, tails);
    let inv_h2 = 1.0 / (grid.h() * grid.h());

    let mut m = Tridiagonal::zeros(n);
    let mut rhs = u.values().to_vec();
    for i in 1..n - 1 {
        m.lower[i] = -inv_h2;
        m.diag[i] = 1.0 + 2.0 * inv_h2;
        m.upper[i] = -inv_h2;
    }
    m.set_identity_row(0);
    m.set_identity_row(n - 1);
    rhs[0] = 0.5 * (left[0] + right[0]);
    rhs[n - 1] = 0.5 * (left[n - 1] + right[n - 1]);
    m.solve_in_place(&mut rhs)?;
    Field::from_values(grid, rhs)
}

/// Fourth-order centered derivative, dropping to second order near the ends.
fn differentiate(v: &Field) -> Result<Field> {
    let grid = *v.grid();
    let h = grid.h();
    let f = v.values();
    let n = f.len();
    let mut d = vec![0.0; n];
    d[0] = (-3.0 * f[0] + 4.0 * f[1] - f[2]) / (2.0 * h);
    d[n - 1] = (3.0 * f[n - 1] - 4.0 * f[n - 2] + f[n - 3]) / (2.0 * h);
    for i in 1..n - 1 {
        d[i] = if i >= 2 && i + 2 < n {
            (f[i - 2] - 8.0 * f[i - 1] + 8.0 * f[i + 1] - f[i + 2]) / (12.0 * h)
        } else {
            (f[i + 1] - f[i - 1]) / (2.0 * h)
        };
    }
    Field::from_values(grid, d)
}

impl EllipticSolver {
    pub fn new(method: EllipticMethod, tails: TailPolicy) -> Self {
        EllipticSolver { method, tails }
    }

    pub fn solve_v(&self, u: &Field) -> Result<Field> {
        check_input(u)?;
        match self.method {
            EllipticMethod::GreenKernel => kernel_pair(u, self.tails).map(|c| c.v),
            EllipticMethod::Tridiagonal => tridiagonal_v(u, self.tails),
        }
    }

    pub fn solve_v_prime(&self, u: &Field) -> Result<Field> {
        self.solve(u).map(|c| c.v_prime)
    }

    /// `V` and `V'` together (one pass for the kernel backend).
    pub fn solve(&self, u: &Field) -> Result<Chemoattractant> {
        check_input(u)?;
        match self.method {
            EllipticMethod::GreenKernel => kernel_pair(u, self.tails),
            EllipticMethod::Tridiagonal => {
                let v = tridiagonal_v(u, self.tails)?;
                let v_prime = differentiate(&v)?;
                Ok(Chemoattractant { v, v_prime })
            }
        }
    }
}

/// `V(.; u)` with the default (wave) tail policy.
pub fn solve_v(u: &Field, method: EllipticMethod) -> Result<Field> {
    EllipticSolver::new(method, TailPolicy::default()).solve_v(u)
}

/// `V'(.; u)` with the default (wave) tail policy.
pub fn solve_v_prime(u: &Field, method: EllipticMethod) -> Result<Field> {
    EllipticSolver::new(method, TailPolicy::default()).solve_v_prime(u)
}

/// `int_0^inf e^{-s} (4 pi s)^{-1/2} e^{-x^2/(4s)} ds` by adaptive quadrature.
///
/// With `s = t^2` the integrand becomes `e^{-t^2 - x^2/(4t^2)} / sqrt(pi)`,
/// which is smooth on `[0, inf)`; the range is cut at `t = 12`.
pub fn kernel_time_integral(x: f64) -> Result<f64> {
    if !x.is_finite() {
        return Err(Error::Domain(format!("kernel needs finite x, got {x}")));
    }
    let x2 = x * x;
    let integrand = |t: f64| {
        if t == 0.0 {
            if x2 == 0.0 {
                1.0
            } else {
                0.0
            }
        } else {
            (-t * t - x2 / (4.0 * t * t)).exp()
        }
    };
    let val = quadrature::integrate(integrand, 0.0, 12.0, 1e-13)?;
    Ok(val / std::f64::consts::PI.sqrt())
}

/// Largest deviation of the quadrature kernel from `e^{-|x|}/2` over `xs`.
pub fn kernel_identity_check(xs: &[f64]) -> Result<f64> {
    let mut worst: f64 = 0.0;
    for &x in xs {
        let q = kernel_time_integral(x)?;
        worst = worst.max((q - 0.5 * (-x.abs()).exp()).abs());
    }
    Ok(worst)
}
