//! Traveling waves by Picard iteration of `u -> U(.; u)`, the long-time
//! limit of the frozen moving-frame flow started from `U+`.

use std::fs;
use std::io::{BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::constants::{c_star, mu_of_c, ModelParams};
use crate::dynamics::{evolve_frozen_to_steady, StepperConfig, SANDWICH_SLACK};
use crate::elliptic::EllipticSolver;
use crate::envelopes::{frame_operator, make_envelope, membership_with_tol, EnvelopeParams};
use crate::error::{Error, Result};
use crate::grid::{fmt_full, interp, make_grid, sup_diff, Field};

/// Relative slack on `c >= c*(chi)`.
const SPEED_SLACK: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WaveConfig {
    pub half_length: f64,
    pub intervals: usize,
    pub dt_max: f64,
    pub cfl_advection: f64,
    pub tol_inner: f64,
    pub tol_outer: f64,
    pub max_outer: usize,
    pub t_cap: f64,
    /// Under-relaxation `u <- (1 - w) u + w U(.; u)`; 1 is plain Picard.
    pub relaxation: f64,
    pub mu_tilde: Option<f64>,
    pub d: Option<f64>,
}

impl Default for WaveConfig {
    fn default() -> Self {
        WaveConfig {
            half_length: 60.0,
            intervals: 12000,
            dt_max: 0.1,
            cfl_advection: 0.5,
            tol_inner: 1e-8,
            tol_outer: 1e-6,
            max_outer: 50,
            t_cap: 200.0,
            relaxation: 1.0,
            mu_tilde: None,
            d: None,
        }
    }
}

/// One outer iteration.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OuterStep {
    pub iteration: usize,
    pub diff: f64,
    pub inner_time: f64,
    pub inner_converged: bool,
}

#[derive(Debug, Clone)]
pub struct WaveProfile {
    pub u: Field,
    pub v: Field,
    pub v_prime: Field,
    pub c: f64,
    pub mu: f64,
    pub chi: f64,
    pub envelope: EnvelopeParams,
    pub outer_iterations: usize,
    pub final_outer_diff: f64,
    pub converged: bool,
    /// The first iterate `U(.; U+)`.
    pub first_iterate: Field,
    pub history: Vec<OuterStep>,
}

/// Builds the wave of speed `c >= c*(chi)` for `0 <= chi < 1/2`.
pub fn construct_wave(chi: f64, c: f64, cfg: &WaveConfig) -> Result<WaveProfile> {
    if !(0.0..0.5).contains(&chi) {
        return Err(Error::Domain(format!(
            "chi must satisfy 0 <= chi < 1/2 for wave, got {chi}"
        )));
    }
    let c_min = if chi == 0.0 {
        2.0
    } else {
        c_star(&ModelParams::new(chi)?)?
    };
    if !(c >= c_min * (1.0 - SPEED_SLACK)) {
        return Err(Error::Constraint(format!(
            "c must satisfy c >= c*(chi) = {c_min}, got {c}"
        )));
    }
    if !(cfg.relaxation > 0.0 && cfg.relaxation <= 1.0) {
        return Err(Error::Domain(format!(
            "relaxation must lie in (0, 1], got {}",
            cfg.relaxation
        )));
    }
    // c*(chi) rounded down may fall a hair below 2
    let mu = if c <= 2.0 { 1.0 } else { mu_of_c(c)? };
    let envelope = make_envelope(chi, mu, cfg.mu_tilde, cfg.d)?;
    let grid = make_grid(cfg.half_length, cfg.intervals)?;
    let stepper = StepperConfig {
        cfl_advection: cfg.cfl_advection,
        ..StepperConfig::frame(cfg.dt_max, envelope.u_plus(grid.half_length()))
    };

    let mut u = envelope.sample_u_plus(&grid);
    let mut history = Vec::new();
    let mut first_iterate = None;
    let mut converged = false;
    let mut diff = f64::INFINITY;
    for k in 1..=cfg.max_outer {
        let inner = evolve_frozen_to_steady(&u, &envelope, &stepper, cfg.tol_inner, cfg.t_cap)?;
        let next = if cfg.relaxation == 1.0 {
            inner.u
        } else {
            u.zip_with(&inner.u, |a, b| {
                (1.0 - cfg.relaxation) * a + cfg.relaxation * b
            })?
        };
        let m = membership_with_tol(&envelope, &next, SANDWICH_SLACK);
        if !m.member {
            return Err(Error::Envelope {
                violation: m.max_violation,
                x: m.x_at,
            });
        }
        diff = sup_diff(&next, &u)?;
        history.push(OuterStep {
            iteration: k,
            diff,
            inner_time: inner.t_final,
            inner_converged: inner.converged,
        });
        if first_iterate.is_none() {
            first_iterate = Some(next.clone());
        }
        u = next;
        if diff < cfg.tol_outer {
            converged = true;
            break;
        }
    }
    let chem = EllipticSolver::default().solve(&u)?;
    Ok(WaveProfile {
        v: chem.v,
        v_prime: chem.v_prime,
        c: envelope.c,
        mu,
        chi,
        envelope,
        outer_iterations: history.len(),
        final_outer_diff: diff,
        converged,
        first_iterate: first_iterate.expect("max_outer >= 1"),
        history,
        u,
    })
}

/// Interior sup of the discrete stationary residual with `V = V(.; U)`.
pub fn stationary_residual(p: &WaveProfile) -> Result<f64> {
    field_residual(&p.u, p.chi, p.c)
}

/// Same residual for an arbitrary field (e.g. an intermediate iterate).
pub fn field_residual(u: &Field, chi: f64, c: f64) -> Result<f64> {
    let chem = EllipticSolver::default().solve(u)?;
    Ok(frame_operator(chi, c, u, &chem)?.max_abs())
}

/// Samples of `U(x) e^{mu x}` over a window.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DecayRatio {
    pub samples: Vec<(f64, f64)>,
    /// `max |ratio - 1|` over the window.
    pub max_deviation: f64,
    /// Whether the window starts at least 5 units right of the zero of `U-`.
    pub beyond_lower_support: bool,
}

/// `U e^{mu x}` at the nodes inside `[x_lo, x_hi]`, which must lie within
/// `(-L, L - 5)`.
pub fn decay_ratio(p: &WaveProfile, window: (f64, f64)) -> Result<DecayRatio> {
    let (lo, hi) = window;
    let grid = p.u.grid();
    if !(lo < hi && lo > -grid.half_length() && hi < grid.half_length() - 5.0) {
        return Err(Error::Domain(format!(
            "decay window [{lo}, {hi}] must satisfy -L < x_lo < x_hi < L - 5 with L = {}",
            grid.half_length()
        )));
    }
    let samples: Vec<(f64, f64)> =
        p.u.iter()
            .filter(|&(x, _)| x >= lo && x <= hi)
            .map(|(x, u)| (x, u * (p.mu * x).exp()))
            .collect();
    if samples.is_empty() {
        return Err(Error::Insufficient(format!("no nodes in [{lo}, {hi}]")));
    }
    let max_deviation = samples
        .iter()
        .fold(0.0f64, |m, (_, r)| m.max((r - 1.0).abs()));
    Ok(DecayRatio {
        samples,
        max_deviation,
        beyond_lower_support: lo >= p.envelope.a_lower() + 5.0,
    })
}

/// Negative slope of the least-squares line through `(x, ln U)` on the window.
pub fn fitted_decay_rate(u: &Field, window: (f64, f64)) -> Result<f64> {
    let pts: Vec<(f64, f64)> = u
        .iter()
        .filter(|&(x, v)| x >= window.0 && x <= window.1 && v > 0.0)
        .map(|(x, v)| (x, v.ln()))
        .collect();
    if pts.len() < 3 {
        return Err(Error::Insufficient(format!(
            "{} positive samples in [{}, {}]",
            pts.len(),
            window.0,
            window.1
        )));
    }
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    Ok(-sxy / sxx)
}

/// `ln max{sup f/g, sup g/f}` for strictly positive fields.
pub fn part_metric(f: &Field, g: &Field) -> Result<f64> {
    f.same_grid(g)?;
    let mut worst = 1.0f64;
    for (i, (&a, &b)) in f.values().iter().zip(g.values()).enumerate() {
        if !(a > 0.0 && b > 0.0) {
            return Err(Error::Domain(format!(
                "part metric needs positive fields, got {a} and {b} at x = {}",
                f.grid().x(i)
            )));
        }
        worst = worst.max(a / b).max(b / a);
    }
    Ok(worst.ln())
}

/// Rightmost `x` where `u` crosses `1/2` from above, by linear interpolation.
pub fn half_crossing(u: &Field) -> Result<f64> {
    let vals = u.values();
    let grid = u.grid();
    for i in (0..vals.len() - 1).rev() {
        if vals[i] >= 0.5 && vals[i + 1] < 0.5 {
            let t = (vals[i] - 0.5) / (vals[i] - vals[i + 1]);
            return Ok(grid.x(i) + t * grid.h());
        }
    }
    Err(Error::Insufficient("profile never crosses 1/2".into()))
}

/// `sup |f(x + s_f) - g(x + s_g)|` over `x` in `[lo, hi]`, with `s_f`, `s_g`
/// the half crossings, sampled on the nodes of `f`'s grid.
pub fn aligned_sup_diff(f: &Field, g: &Field, lo: f64, hi: f64) -> Result<f64> {
    aligned_fold(f, g, lo, hi, |a, b| (a - b).abs())
}

/// Part metric after half-crossing alignment over `x` in `[lo, hi]`.
pub fn aligned_part_metric(f: &Field, g: &Field, lo: f64, hi: f64) -> Result<f64> {
    let m = aligned_fold(f, g, lo, hi, |a, b| {
        if a > 0.0 && b > 0.0 {
            (a / b).max(b / a).ln()
        } else {
            f64::INFINITY
        }
    })?;
    Ok(m)
}

fn aligned_fold(
    f: &Field,
    g: &Field,
    lo: f64,
    hi: f64,
    dist: impl Fn(f64, f64) -> f64,
) -> Result<f64> {
    let (sf, sg) = (half_crossing(f)?, half_crossing(g)?);
    let mut worst = 0.0f64;
    let mut count = 0;
    for x in f.grid().nodes().filter(|&x| x >= lo && x <= hi) {
        let (xf, xg) = (x + sf, x + sg);
        if !(f.grid().contains(xf) && g.grid().contains(xg)) {
            continue;
        }
        worst = worst.max(dist(interp(f, xf)?, interp(g, xg)?));
        count += 1;
    }
    if count == 0 {
        return Err(Error::Insufficient(format!(
            "no aligned samples in [{lo}, {hi}]"
        )));
    }
    Ok(worst)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct WaveSummary {
    pub version: String,
    pub chi: f64,
    pub c: f64,
    pub mu: f64,
    pub residual: f64,
    pub outer_iterations: usize,
    pub final_outer_diff: f64,
    pub converged: bool,
    pub envelope: EnvelopeParams,
    pub history: Vec<OuterStep>,
}

impl WaveProfile {
    pub fn summary(&self) -> Result<WaveSummary> {
        Ok(WaveSummary {
            version: crate::VERSION.to_string(),
            chi: self.chi,
            c: self.c,
            mu: self.mu,
            residual: stationary_residual(self)?,
            outer_iterations: self.outer_iterations,
            final_outer_diff: self.final_outer_diff,
            converged: self.converged,
            envelope: self.envelope,
            history: self.history.clone(),
        })
    }

    /// Columns `x,U,V,ratio` with `ratio = U e^{mu x}`.
    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "x,U,V,ratio")?;
        for (i, (x, u)) in self.u.iter().enumerate() {
            writeln!(
                out,
                "{},{},{},{}",
                fmt_full(x),
                fmt_full(u),
                fmt_full(self.v.values()[i]),
                fmt_full(u * (self.mu * x).exp())
            )?;
        }
        Ok(())
    }

    /// Writes `profile.csv` and `summary.json` into `dir`.
    pub fn write_to(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir)?;
        let mut csv = BufWriter::new(fs::File::create(dir.join("profile.csv"))?);
        self.write_csv(&mut csv)?;
        csv.flush()?;
        let mut js = BufWriter::new(fs::File::create(dir.join("summary.json"))?);
        serde_json::to_writer_pretty(&mut js, &self.summary()?)?;
        writeln!(js)?;
        js.flush()?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::envelopes::eval_phi;
    use crate::grid::sample;

    fn small() -> WaveConfig {
        WaveConfig {
            half_length: 30.0,
            intervals: 1500,
            t_cap: 400.0,
            ..WaveConfig::default()
        }
    }

    #[test]
    fn part_metric_basics() {
        let g = make_grid(5.0, 50).unwrap();
        let f = sample(&g, |x| 1.0 + 0.5 * x.sin()).unwrap();
        let h = sample(&g, |x| 2.0 + x.cos()).unwrap();
        assert_eq!(part_metric(&f, &f).unwrap(), 0.0);
        assert!((part_metric(&f, &f.map(|v| 2.0 * v)).unwrap() - 2f64.ln()).abs() < 1e-15);
        assert_eq!(part_metric(&f, &h).unwrap(), part_metric(&h, &f).unwrap());
        assert!(part_metric(&f, &Field::zeros(g)).is_err());
    }

    #[test]
    fn half_crossing_of_logistic_profile() {
        let g = make_grid(10.0, 1000).unwrap();
        let f = sample(&g, |x| 1.0 / (1.0 + (x - 1.234).exp())).unwrap();
        assert!((half_crossing(&f).unwrap() - 1.234).abs() < 1e-4);
        let shifted = sample(&g, |x| 1.0 / (1.0 + (x + 0.5).exp())).unwrap();
        assert!(aligned_sup_diff(&f, &shifted, -5.0, 5.0).unwrap() < 1e-4);
    }

    #[test]
    fn fitted_rate_of_exponential() {
        let g = make_grid(30.0, 600).unwrap();
        let f = sample(&g, |x| 3.0 * eval_phi(0.7, x)).unwrap();
        assert!((fitted_decay_rate(&f, (5.0, 20.0)).unwrap() - 0.7).abs() < 1e-12);
    }

    #[test]
    fn rejects_out_of_regime() {
        let cfg = small();
        assert!(matches!(
            construct_wave(0.5, 3.0, &cfg),
            Err(Error::Domain(_))
        ));
        assert!(matches!(
            construct_wave(0.2, 2.0, &cfg),
            Err(Error::Constraint(_))
        ));
    }

    #[test]
    fn supercritical_wave_converges() {
        let p = construct_wave(0.2, 2.5, &small()).unwrap();
        assert!(p.converged, "history {:?}", p.history);
        assert_eq!(p.mu, 0.5);
        assert!(stationary_residual(&p).unwrap() < 1e-3);
        assert!(
            field_residual(&p.first_iterate, p.chi, p.c).unwrap()
                > stationary_residual(&p).unwrap()
        );
        assert!((p.u.values()[25] - 1.0).abs() < 0.03);
        let rate = fitted_decay_rate(&p.u, (5.0, 20.0)).unwrap();
        assert!((rate - 0.5).abs() < 0.02 * 0.5, "rate {rate}");
        let ratio = decay_ratio(&p, (5.0, 20.0)).unwrap();
        assert!(!ratio.beyond_lower_support || ratio.max_deviation < 0.1);
        let mut buf = Vec::new();
        p.write_csv(&mut buf).unwrap();
        assert_eq!(
            String::from_utf8(buf).unwrap().lines().count(),
            p.u.len() + 1
        );
    }

    #[test]
    fn decay_ratio_of_exponential_is_one() {
        let p = construct_wave(
            0.2,
            2.5,
            &WaveConfig {
                max_outer: 1,
                ..small()
            },
        )
        .unwrap();
        let mut q = p.clone();
        q.u = sample(p.u.grid(), |x| eval_phi(q.mu, x)).unwrap();
        let r = decay_ratio(&q, (0.0, 20.0)).unwrap();
        assert!(r.max_deviation < 1e-14);
        assert!(decay_ratio(&q, (0.0, 28.0)).is_err());
    }
}
