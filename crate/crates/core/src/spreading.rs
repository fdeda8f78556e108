//! Front tracking, speed fits and pointwise bounds for lab-frame runs started
//! from compactly supported data.

use std::fs;
use std::io::{BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::constants::{c_mu_general, mu_star, speed_interval, ModelParams, SpeedInterval};
use crate::dynamics::{
    logistic_cap, simulate_lab, RunSpec, Scheme, SimulationRecord, StepperConfig,
};
use crate::elliptic::{EllipticSolver, TailPolicy};
use crate::error::{Error, Result};
use crate::grid::{fmt_full, Field, Grid1D};

/// Slack on the logistic comparison bound for `sup u`.
pub const LOGISTIC_SLACK: f64 = 1e-6;
/// Relative tolerance on the exponential envelope.
pub const ENVELOPE_REL_TOL: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Side {
    Left,
    Right,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FrontTrace {
    pub theta: f64,
    pub side: Side,
    /// `(t, x_front)`.
    pub samples: Vec<(f64, f64)>,
    /// Snapshot times at which `theta` was not attained.
    pub missing: Vec<f64>,
}

fn front_position(u: &Field, theta: f64, side: Side) -> Option<f64> {
    let vals = u.values();
    let grid = u.grid();
    let h = grid.h();
    match side {
        Side::Right => {
            let i = vals.iter().rposition(|&v| v >= theta)?;
            if i + 1 == vals.len() {
                return Some(grid.x(i));
            }
            Some(grid.x(i) + h * (vals[i] - theta) / (vals[i] - vals[i + 1]))
        }
        Side::Left => {
            let i = vals.iter().position(|&v| v >= theta)?;
            if i == 0 {
                return Some(grid.x(0));
            }
            Some(grid.x(i) - h * (vals[i] - theta) / (vals[i] - vals[i - 1]))
        }
    }
}

/// Outermost crossing of the level `theta` per snapshot.
pub fn track_front(record: &SimulationRecord, theta: f64, side: Side) -> Result<FrontTrace> {
    if !(theta > 0.0 && theta < 1.0) {
        return Err(Error::Domain(format!(
            "threshold must lie in (0, 1), got {theta}"
        )));
    }
    let mut samples = Vec::new();
    let mut missing = Vec::new();
    for (&t, u) in record.times.iter().zip(&record.u) {
        match front_position(u, theta, side) {
            Some(x) => samples.push((t, x)),
            None => missing.push(t),
        }
    }
    Ok(FrontTrace {
        theta,
        side,
        samples,
        missing,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpeedFit {
    /// Outward speed: the slope for a right front, minus the slope for a left one.
    pub c_hat: f64,
    pub stderr: f64,
    pub samples: usize,
    pub t_lo: f64,
    pub t_hi: f64,
}

/// Least-squares slope of the front position over `t_lo <= t <= t_hi`.
pub fn estimate_speed(trace: &FrontTrace, window: (f64, f64)) -> Result<SpeedFit> {
    let pts: Vec<(f64, f64)> = trace
        .samples
        .iter()
        .copied()
        .filter(|&(t, _)| t >= window.0 && t <= window.1)
        .collect();
    if pts.len() < 10 {
        return Err(Error::Insufficient(format!(
            "{} front samples in [{}, {}], need at least 10",
            pts.len(),
            window.0,
            window.1
        )));
    }
    let n = pts.len() as f64;
    let mt = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let mx = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let stt: f64 = pts.iter().map(|p| (p.0 - mt).powi(2)).sum();
    let stx: f64 = pts.iter().map(|p| (p.0 - mt) * (p.1 - mx)).sum();
    let slope = stx / stt;
    let intercept = mx - slope * mt;
    let sse: f64 = pts
        .iter()
        .map(|p| (p.1 - intercept - slope * p.0).powi(2))
        .sum();
    let stderr = (sse / (n - 2.0) / stt).sqrt();
    Ok(SpeedFit {
        c_hat: match trace.side {
            Side::Right => slope,
            Side::Left => -slope,
        },
        stderr,
        samples: pts.len(),
        t_lo: window.0,
        t_hi: window.1,
    })
}

/// Default fit window `[T/2, T]`.
pub fn late_window(record: &SimulationRecord) -> (f64, f64) {
    let t = *record.times.last().expect("non-empty record");
    (0.5 * t, t)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EnvelopeReport {
    /// `max{e^R/(1 - chi), e^R sup u0}`.
    pub m: f64,
    pub mu_star: f64,
    pub c_mu_star: f64,
    /// `max (u - M e^{mu* (c t - |x|)})` over snapshots and nodes.
    pub max_violation: f64,
    /// `(x, t)` of the largest violation when positive.
    pub violating: Option<(f64, f64)>,
    pub passes: bool,
    /// `max (sup u(t) - U~(t; sup u0))`.
    pub logistic_excess: f64,
    pub logistic_passes: bool,
}

/// Checks `u <= M e^{mu* (c_{mu*} t - |x|)}` and the logistic bound on `sup u`.
pub fn envelope_check(record: &SimulationRecord, params: &ModelParams) -> Result<EnvelopeReport> {
    let r = record.support_radius.ok_or_else(|| {
        Error::Insufficient("support radius R of the initial data is not recorded".into())
    })?;
    let u0_sup = record.u[0].max().max(0.0);
    let m = (r.exp() / (1.0 - params.chi)).max(r.exp() * u0_sup);
    // without chemotaxis the rate saturates at the linear one
    let mu = if params.chi == 0.0 {
        params.a.sqrt().min(1.0)
    } else {
        mu_star(params)?
    };
    let c = c_mu_general(mu, params.a);
    let mut max_violation = f64::NEG_INFINITY;
    let mut at = (0.0, 0.0);
    let mut logistic_excess = f64::NEG_INFINITY;
    for (&t, u) in record.times.iter().zip(&record.u) {
        for (x, v) in u.iter() {
            let excess = v - m * (mu * (c * t - x.abs())).exp();
            if excess > max_violation {
                max_violation = excess;
                at = (x, t);
            }
        }
        logistic_excess = logistic_excess.max(u.max() - logistic_cap(u0_sup, t, params));
    }
    Ok(EnvelopeReport {
        m,
        mu_star: mu,
        c_mu_star: c,
        max_violation,
        violating: (max_violation > 0.0).then_some(at),
        passes: max_violation <= ENVELOPE_REL_TOL * m,
        logistic_excess,
        logistic_passes: logistic_excess <= LOGISTIC_SLACK,
    })
}

/// `min 2 sqrt(max(0, a - chi v)) - chi |v_x|` over snapshots with `t >= t_from`
/// and nodes with `|x| >= r0`.
pub fn lower_bound_certificate(
    record: &SimulationRecord,
    params: &ModelParams,
    t_from: f64,
    r0: f64,
) -> Result<f64> {
    let solver = EllipticSolver::new(Default::default(), TailPolicy::REFLECTING);
    let mut best = f64::INFINITY;
    let mut count = 0usize;
    for (&t, u) in record.times.iter().zip(&record.u) {
        if t < t_from {
            continue;
        }
        let chem = solver.solve(u)?;
        for (i, (x, v)) in chem.v.iter().enumerate() {
            if x.abs() < r0 {
                continue;
            }
            let vx = chem.v_prime.values()[i];
            best = best.min(certificate_value(params.chi, params.a, v, vx));
            count += 1;
        }
    }
    if count == 0 {
        return Err(Error::Insufficient(format!(
            "no snapshot nodes with t >= {t_from} and |x| >= {r0}"
        )));
    }
    Ok(best)
}

/// `2 sqrt(max(0, a - chi v)) - chi |v_x|`.
pub fn certificate_value(chi: f64, a: f64, v: f64, vx: f64) -> f64 {
    2.0 * (a - chi * v).max(0.0).sqrt() - chi * vx.abs()
}

/// `sup_{|x| <= c t} |u - 1|`.
pub fn behind_front_deviation(u: &Field, c: f64, t: f64) -> f64 {
    u.iter()
        .filter(|(x, _)| x.abs() <= c * t)
        .fold(0.0, |m, (_, v)| m.max((v - 1.0).abs()))
}

/// `sup_{|x| >= c t} u`.
pub fn ahead_front_max(u: &Field, c: f64, t: f64) -> f64 {
    u.iter()
        .filter(|(x, _)| x.abs() >= c * t)
        .fold(0.0, |m, (_, v)| m.max(v))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum InitialShape {
    /// `height max{0, 1 - (x/R)^2}`.
    Parabola { radius: f64, height: f64 },
    /// `height` on `[-R, R]`, zero outside.
    Plateau { radius: f64, height: f64 },
    /// `height cos^2(pi x / (2R))` on `[-R, R]`, zero outside.
    Cosine { radius: f64, height: f64 },
}

impl Default for InitialShape {
    fn default() -> Self {
        InitialShape::Parabola {
            radius: 2.0,
            height: 1.0,
        }
    }
}

impl InitialShape {
    pub fn radius(&self) -> f64 {
        match *self {
            InitialShape::Parabola { radius, .. }
            | InitialShape::Plateau { radius, .. }
            | InitialShape::Cosine { radius, .. } => radius,
        }
    }

    pub fn eval(&self, x: f64) -> f64 {
        match *self {
            InitialShape::Parabola { radius, height } => {
                height * (1.0 - (x / radius).powi(2)).max(0.0)
            }
            InitialShape::Plateau { radius, height } => {
                if x.abs() <= radius {
                    height
                } else {
                    0.0
                }
            }
            InitialShape::Cosine { radius, height } => {
                if x.abs() <= radius {
                    height * (std::f64::consts::FRAC_PI_2 * x / radius).cos().powi(2)
                } else {
                    0.0
                }
            }
        }
    }

    pub fn validate(&self) -> Result<()> {
        let (r, h) = match *self {
            InitialShape::Parabola { radius, height }
            | InitialShape::Plateau { radius, height }
            | InitialShape::Cosine { radius, height } => (radius, height),
        };
        if !(r > 0.0 && h > 0.0 && r.is_finite() && h.is_finite()) {
            return Err(Error::Domain(format!(
                "initial data needs radius > 0 and height > 0, got {r} and {h}"
            )));
        }
        Ok(())
    }

    pub fn sample(&self, grid: &Grid1D) -> Field {
        Field::from_values(*grid, grid.nodes().map(|x| self.eval(x)).collect())
            .expect("length matches grid")
    }
}

/// `upper T + 20`.
pub fn domain_half_length(upper: f64, t_final: f64) -> f64 {
    upper * t_final + 20.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SpreadConfig {
    pub t_final: f64,
    pub snapshot_dt: f64,
    pub h: f64,
    /// Half length; `None` applies `upper T + 20` rounded up to a multiple of 1.
    pub half_length: Option<f64>,
    pub dt_max: f64,
    pub cfl_advection: f64,
    pub scheme: Scheme,
    pub thresholds: Vec<f64>,
    pub shape: InitialShape,
}

impl Default for SpreadConfig {
    fn default() -> Self {
        SpreadConfig {
            t_final: 40.0,
            snapshot_dt: 0.5,
            h: 0.01,
            half_length: None,
            dt_max: 0.01,
            cfl_advection: 0.5,
            scheme: Scheme::ImexBe,
            thresholds: vec![0.01, 0.1, 0.5],
            shape: InitialShape::default(),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ThresholdFit {
    pub theta: f64,
    pub left: SpeedFit,
    pub right: SpeedFit,
}

/// Everything measured in one spreading run.
#[derive(Debug, Clone)]
pub struct SpreadReport {
    pub params: ModelParams,
    pub interval: SpeedInterval,
    pub record: SimulationRecord,
    pub traces: Vec<(FrontTrace, FrontTrace)>,
    pub fits: Vec<ThresholdFit>,
    pub envelope: EnvelopeReport,
}

#[derive(Serialize)]
struct SpreadSummary<'a> {
    version: &'a str,
    params: &'a ModelParams,
    interval: &'a SpeedInterval,
    fits: &'a [ThresholdFit],
    envelope: &'a EnvelopeReport,
    boundary_max: f64,
    steps: usize,
}

/// Runs the lab-frame system from `cfg.shape` and fits front speeds.
pub fn run_spreading(params: &ModelParams, cfg: &SpreadConfig) -> Result<SpreadReport> {
    cfg.shape.validate()?;
    let interval = speed_interval(params)?;
    let half_length = match cfg.half_length {
        Some(l) => l,
        None => domain_half_length(interval.upper, cfg.t_final).ceil(),
    };
    let grid = Grid1D::with_spacing(half_length, cfg.h)?;
    let u0 = cfg.shape.sample(&grid);
    let stepper = StepperConfig {
        cfl_advection: cfg.cfl_advection,
        ..StepperConfig::lab(cfg.dt_max).with_scheme(cfg.scheme)
    };
    let run = RunSpec::new(cfg.t_final, cfg.snapshot_dt).with_support(cfg.shape.radius());
    let record = simulate_lab(&u0, params, &stepper, &run)?;
    let window = late_window(&record);
    let mut traces = Vec::new();
    let mut fits = Vec::new();
    for &theta in &cfg.thresholds {
        let left = track_front(&record, theta, Side::Left)?;
        let right = track_front(&record, theta, Side::Right)?;
        fits.push(ThresholdFit {
            theta,
            left: estimate_speed(&left, window)?,
            right: estimate_speed(&right, window)?,
        });
        traces.push((left, right));
    }
    let envelope = envelope_check(&record, params)?;
    Ok(SpreadReport {
        params: *params,
        interval,
        record,
        traces,
        fits,
        envelope,
    })
}

impl SpreadReport {
    /// `fronts.csv` with columns `t, x_left_<theta>, x_right_<theta>, ...` and
    /// `summary.json`.
    pub fn write_to(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir)?;
        let mut out = BufWriter::new(fs::File::create(dir.join("fronts.csv"))?);
        write!(out, "t")?;
        for (l, _) in &self.traces {
            write!(out, ",x_left_{0},x_right_{0}", l.theta)?;
        }
        writeln!(out)?;
        for &t in &self.record.times {
            write!(out, "{}", fmt_full(t))?;
            for (l, r) in &self.traces {
                for tr in [l, r] {
                    match tr.samples.iter().find(|s| s.0 == t) {
                        Some(&(_, x)) => write!(out, ",{}", fmt_full(x))?,
                        None => write!(out, ",nan")?,
                    }
                }
            }
            writeln!(out)?;
        }
        out.flush()?;
        let summary = SpreadSummary {
            version: crate::VERSION,
            params: &self.params,
            interval: &self.interval,
            fits: &self.fits,
            envelope: &self.envelope,
            boundary_max: self.record.diagnostics.boundary_max,
            steps: self.record.diagnostics.steps,
        };
        let mut js = BufWriter::new(fs::File::create(dir.join("summary.json"))?);
        serde_json::to_writer_pretty(&mut js, &summary)?;
        writeln!(js)?;
        js.flush()?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::Diagnostics;
    use crate::grid::make_grid;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn record_of(times: Vec<f64>, u: Vec<Field>, r: Option<f64>) -> SimulationRecord {
        SimulationRecord {
            params: ModelParams::default(),
            cfg: StepperConfig::default(),
            v: u.clone(),
            times,
            u,
            support_radius: r,
            diagnostics: Diagnostics::default(),
        }
    }

    #[test]
    fn bump_front_at_edge() {
        let g = make_grid(10.0, 1000).unwrap();
        let bump = InitialShape::Plateau {
            radius: 2.0,
            height: 1.0,
        }
        .sample(&g);
        let rec = record_of(vec![0.0], vec![bump], Some(2.0));
        let r = track_front(&rec, 0.5, Side::Right).unwrap();
        let l = track_front(&rec, 0.5, Side::Left).unwrap();
        assert!((r.samples[0].1 - 2.0).abs() <= g.h());
        assert!((l.samples[0].1 + 2.0).abs() <= g.h());
        assert!(track_front(&rec, 1.0, Side::Right).is_err());
    }

    #[test]
    fn unattained_threshold_is_flagged() {
        let g = make_grid(5.0, 100).unwrap();
        let rec = record_of(
            vec![0.0, 1.0],
            vec![Field::constant(g, 0.05), Field::constant(g, 0.5)],
            None,
        );
        let tr = track_front(&rec, 0.1, Side::Right).unwrap();
        assert_eq!(tr.missing, vec![0.0]);
        assert_eq!(tr.samples.len(), 1);
    }

    #[test]
    fn linear_fit_of_noisy_trace() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let samples: Vec<(f64, f64)> = (0..81)
            .map(|k| {
                let t = 0.5 * k as f64;
                let noise: f64 = (0..12).map(|_| rng.gen::<f64>()).sum::<f64>() - 6.0;
                (t, 2.0 * t + 0.01 * noise)
            })
            .collect();
        let trace = FrontTrace {
            theta: 0.5,
            side: Side::Right,
            samples,
            missing: vec![],
        };
        let fit = estimate_speed(&trace, (20.0, 40.0)).unwrap();
        assert!((fit.c_hat - 2.0).abs() < 0.01);
        assert!(fit.stderr < 0.01);
        assert!(estimate_speed(&trace, (39.0, 40.0)).is_err());
    }

    #[test]
    fn initial_data_is_below_envelope() {
        let g = make_grid(20.0, 400).unwrap();
        let shape = InitialShape::default();
        let rec = record_of(vec![0.0], vec![shape.sample(&g)], Some(shape.radius()));
        let rep = envelope_check(&rec, &ModelParams::new(0.2).unwrap()).unwrap();
        assert!(rep.max_violation <= 0.0);
        assert!(rep.passes && rep.logistic_passes);
        assert!((rep.m - 2f64.exp() / 0.8).abs() < 1e-12);
        let no_r = record_of(vec![0.0], vec![shape.sample(&g)], None);
        assert!(envelope_check(&no_r, &ModelParams::default()).is_err());
    }

    #[test]
    fn certificate_formula() {
        assert_eq!(certificate_value(0.0, 1.0, 0.7, 3.0), 2.0);
        let mut prev = f64::INFINITY;
        for k in 0..10 {
            let chi = 0.05 * k as f64;
            let c = certificate_value(chi, 1.0, 1.1, 0.3);
            assert!(c <= prev);
            prev = c;
        }
    }

    #[test]
    fn shapes() {
        let p = InitialShape::Parabola {
            radius: 2.0,
            height: 1.0,
        };
        assert_eq!(p.eval(0.0), 1.0);
        assert_eq!(p.eval(1.0), 0.75);
        assert_eq!(p.eval(2.5), 0.0);
        let c = InitialShape::Cosine {
            radius: 2.0,
            height: 3.0,
        };
        assert!(c.eval(2.0).abs() < 1e-15 && c.eval(0.0) == 3.0);
        assert!(InitialShape::Plateau {
            radius: -1.0,
            height: 1.0
        }
        .validate()
        .is_err());
        assert_eq!(domain_half_length(2.0, 40.0), 100.0);
    }

    #[test]
    fn short_fisher_run_is_symmetric_and_monotone() {
        let p = ModelParams {
            chi: 0.0,
            ..ModelParams::default()
        };
        let cfg = SpreadConfig {
            t_final: 8.0,
            snapshot_dt: 0.25,
            h: 0.05,
            half_length: Some(30.0),
            dt_max: 0.02,
            thresholds: vec![0.5],
            ..SpreadConfig::default()
        };
        let rep = run_spreading(&p, &cfg).unwrap();
        let (l, r) = &rep.traces[0];
        for (a, b) in l.samples.iter().zip(&r.samples) {
            assert!((a.1 + b.1).abs() <= 2.0 * 0.05);
        }
        assert!(r.samples.windows(2).all(|w| w[1].1 >= w[0].1));
        assert!(rep.envelope.passes && rep.envelope.logistic_passes);
    }
}
