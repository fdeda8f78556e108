//! Time integration of the lab-frame system and of the moving-frame equation
//! with a frozen chemoattractant.
//!
//! Lab frame:
//!
//! ```text
//! u_t = u_xx - chi u_x v_x + u (a - chi v - (b - chi) u),   0 = v_xx - v + u
//! ```
//!
//! Moving frame, `V = V(.; u)` frozen:
//!
//! ```text
//! U_t = U_xx + (c - chi V') U_x + (1 - chi V - (1 - chi) U) U
//! ```
//!
//! Diffusion and transport are implicit (transport with its coefficient frozen
//! at the start of the step); the reaction is explicit.

use std::fs;
use std::io::{BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::constants::ModelParams;
use crate::elliptic::{Chemoattractant, EllipticSolver, TailPolicy};
use crate::envelopes::{membership_with_tol, EnvelopeParams};
use crate::error::{Error, Result};
use crate::grid::{fmt_full, sup_diff, Field, Grid1D, TOL_NEG};
use crate::tridiag::Tridiagonal;

/// Floor on the advection speed in the step-size rule.
const ADVECTION_FLOOR: f64 = 1e-12;
/// Spacing of monotonicity/convergence checkpoints in the frozen flow.
pub const CHECK_INTERVAL: f64 = 1.0;
/// Allowed pointwise increase of the frozen flow between checkpoints.
pub const MONOTONE_TOL: f64 = 1e-8;
/// Slack on the envelope sandwich of the frozen limit.
pub const SANDWICH_SLACK: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scheme {
    /// Backward Euler for the implicit part, forward Euler for the reaction.
    #[default]
    ImexBe,
    /// Crank-Nicolson for the implicit part, Heun for the reaction.
    ImexCn,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BoundaryCondition {
    NeumannZero,
    Dirichlet(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StepperConfig {
    pub dt_max: f64,
    pub cfl_advection: f64,
    pub scheme: Scheme,
    pub left_bc: BoundaryCondition,
    pub right_bc: BoundaryCondition,
}

impl Default for StepperConfig {
    fn default() -> Self {
        StepperConfig::lab(0.01)
    }
}

impl StepperConfig {
    /// Zero flux at both ends.
    pub fn lab(dt_max: f64) -> Self {
        StepperConfig {
            dt_max,
            cfl_advection: 0.5,
            scheme: Scheme::ImexBe,
            left_bc: BoundaryCondition::NeumannZero,
            right_bc: BoundaryCondition::NeumannZero,
        }
    }

    /// Zero flux on the left, `U = right_value` on the right.
    pub fn frame(dt_max: f64, right_value: f64) -> Self {
        StepperConfig {
            right_bc: BoundaryCondition::Dirichlet(right_value),
            ..StepperConfig::lab(dt_max)
        }
    }

    pub fn with_scheme(mut self, scheme: Scheme) -> Self {
        self.scheme = scheme;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.dt_max > 0.0 && self.dt_max.is_finite()) {
            return Err(Error::Domain(format!(
                "dt_max must be positive, got {}",
                self.dt_max
            )));
        }
        if !(self.cfl_advection > 0.0 && self.cfl_advection <= 1.0) {
            return Err(Error::Domain(format!(
                "cfl_advection must lie in (0, 1], got {}",
                self.cfl_advection
            )));
        }
        Ok(())
    }

    /// `min{dt_max, cfl h / max(|chi v_x|, 1e-12)}`.
    pub fn choose_dt(&self, h: f64, chi: f64, v_prime: &Field) -> f64 {
        let speed = v_prime
            .values()
            .iter()
            .fold(0.0, |m: f64, vx| m.max((chi * vx).abs()))
            .max(ADVECTION_FLOOR);
        self.dt_max.min(self.cfl_advection * h / speed)
    }
}

/// `A w = w'' + b w'` on the grid, with rows for boundary conditions.
struct Operator<'a> {
    h: f64,
    drift: &'a [f64],
    left: BoundaryCondition,
    right: BoundaryCondition,
}

impl Operator<'_> {
    /// `A w` at a node, zero on Dirichlet rows.
    fn apply(&self, w: &[f64], out: &mut [f64]) {
        let n = w.len();
        let inv_h2 = 1.0 / (self.h * self.h);
        let inv_2h = 0.5 / self.h;
        for i in 1..n - 1 {
            out[i] = (w[i + 1] - 2.0 * w[i] + w[i - 1]) * inv_h2
                + self.drift[i] * (w[i + 1] - w[i - 1]) * inv_2h;
        }
        out[0] = match self.left {
            BoundaryCondition::NeumannZero => 2.0 * (w[1] - w[0]) * inv_h2,
            BoundaryCondition::Dirichlet(_) => 0.0,
        };
        out[n - 1] = match self.right {
            BoundaryCondition::NeumannZero => 2.0 * (w[n - 2] - w[n - 1]) * inv_h2,
            BoundaryCondition::Dirichlet(_) => 0.0,
        };
    }

    /// Assembles `I - s A` and imposes Dirichlet values on `rhs`.
    fn implicit(&self, s: f64, m: &mut Tridiagonal, rhs: &mut [f64]) {
        let n = rhs.len();
        let inv_h2 = 1.0 / (self.h * self.h);
        let inv_2h = 0.5 / self.h;
        for i in 1..n - 1 {
            let b = self.drift[i] * inv_2h;
            m.lower[i] = -s * (inv_h2 - b);
            m.diag[i] = 1.0 + 2.0 * s * inv_h2;
            m.upper[i] = -s * (inv_h2 + b);
        }
        match self.left {
            BoundaryCondition::NeumannZero => {
                m.diag[0] = 1.0 + 2.0 * s * inv_h2;
                m.upper[0] = -2.0 * s * inv_h2;
                m.lower[0] = 0.0;
            }
            BoundaryCondition::Dirichlet(g) => {
                m.set_identity_row(0);
                rhs[0] = g;
            }
        }
        match self.right {
            BoundaryCondition::NeumannZero => {
                m.diag[n - 1] = 1.0 + 2.0 * s * inv_h2;
                m.lower[n - 1] = -2.0 * s * inv_h2;
                m.upper[n - 1] = 0.0;
            }
            BoundaryCondition::Dirichlet(g) => {
                m.set_identity_row(n - 1);
                rhs[n - 1] = g;
            }
        }
    }
}

/// Reaction term of either frame.
#[derive(Debug, Clone, Copy)]
struct Reaction {
    chi: f64,
    a: f64,
    b: f64,
}

impl Reaction {
    #[inline]
    fn eval(&self, u: f64, v: f64) -> f64 {
        u * (self.a - self.chi * v - (self.b - self.chi) * u)
    }
}

/// One step of `w_t = w'' + drift w' + R(w, v)`. With `Some(next)`, the
/// Crank-Nicolson corrector uses the predictor's drift and chemoattractant.
#[allow(clippy::too_many_arguments)]
fn imex_step(
    w: &[f64],
    v: &[f64],
    drift: &[f64],
    h: f64,
    dt: f64,
    reaction: Reaction,
    cfg: &StepperConfig,
    second_stage: Option<(&[f64], &[f64], &[f64])>,
) -> Result<Vec<f64>> {
    let n = w.len();
    let mut m = Tridiagonal::zeros(n);
    match second_stage {
        None => {
            let op = Operator {
                h,
                drift,
                left: cfg.left_bc,
                right: cfg.right_bc,
            };
            let mut rhs: Vec<f64> = (0..n)
                .map(|i| w[i] + dt * reaction.eval(w[i], v[i]))
                .collect();
            op.implicit(dt, &mut m, &mut rhs);
            m.solve_in_place(&mut rhs)?;
            Ok(rhs)
        }
        Some((w_star, v_star, drift_star)) => {
            let old = Operator {
                h,
                drift,
                left: cfg.left_bc,
                right: cfg.right_bc,
            };
            let new = Operator {
                h,
                drift: drift_star,
                left: cfg.left_bc,
                right: cfg.right_bc,
            };
            let mut aw = vec![0.0; n];
            old.apply(w, &mut aw);
            let mut rhs: Vec<f64> = (0..n)
                .map(|i| {
                    w[i] + 0.5 * dt * aw[i]
                        + 0.5
                            * dt
                            * (reaction.eval(w[i], v[i]) + reaction.eval(w_star[i], v_star[i]))
                })
                .collect();
            new.implicit(0.5 * dt, &mut m, &mut rhs);
            m.solve_in_place(&mut rhs)?;
            Ok(rhs)
        }
    }
}

fn check_state(values: &[f64], grid: &Grid1D, step: usize) -> Result<()> {
    for (i, &u) in values.iter().enumerate() {
        if !u.is_finite() {
            return Err(Error::NonFinite {
                value: u,
                location: format!("x = {} (step {step})", grid.x(i)),
            });
        }
        if u < -TOL_NEG {
            return Err(Error::Negative {
                value: u,
                x: grid.x(i),
                step,
            });
        }
    }
    Ok(())
}

fn lab_solver() -> EllipticSolver {
    EllipticSolver {
        tails: TailPolicy::REFLECTING,
        ..EllipticSolver::default()
    }
}

/// Lab-frame stepper state.
#[derive(Debug, Clone)]
pub struct LabStepper {
    pub params: ModelParams,
    pub cfg: StepperConfig,
    pub elliptic: EllipticSolver,
    steps: usize,
}

impl LabStepper {
    pub fn new(params: ModelParams, cfg: StepperConfig) -> Result<Self> {
        cfg.validate()?;
        Ok(LabStepper {
            params,
            cfg,
            elliptic: lab_solver(),
            steps: 0,
        })
    }

    fn reaction(&self) -> Reaction {
        Reaction {
            chi: self.params.chi,
            a: self.params.a,
            b: self.params.b,
        }
    }

    fn drift(&self, chem: &Chemoattractant) -> Vec<f64> {
        chem.v_prime
            .values()
            .iter()
            .map(|vx| -self.params.chi * vx)
            .collect()
    }

    /// Step size the rule selects for the current state.
    pub fn suggested_dt(&self, chem: &Chemoattractant) -> f64 {
        self.cfg
            .choose_dt(chem.v.grid().h(), self.params.chi, &chem.v_prime)
    }

    /// Advances `u` by `dt`; returns the new state and `v` of the old state.
    pub fn step_with_dt(&mut self, u: &Field, chem: &Chemoattractant, dt: f64) -> Result<Field> {
        let grid = *u.grid();
        let h = grid.h();
        let reaction = self.reaction();
        let drift = self.drift(chem);
        let predictor = imex_step(
            u.values(),
            chem.v.values(),
            &drift,
            h,
            dt,
            reaction,
            &self.cfg,
            None,
        )?;
        let next = match self.cfg.scheme {
            Scheme::ImexBe => predictor,
            Scheme::ImexCn => {
                let star = Field::from_values(grid, predictor)?;
                star.check_finite("predictor")?;
                let chem_star = self.elliptic.solve(&star)?;
                let drift_star = self.drift(&chem_star);
                imex_step(
                    u.values(),
                    chem.v.values(),
                    &drift,
                    h,
                    dt,
                    reaction,
                    &self.cfg,
                    Some((star.values(), chem_star.v.values(), &drift_star)),
                )?
            }
        };
        self.steps += 1;
        check_state(&next, &grid, self.steps)?;
        Field::from_values(grid, next)
    }
}

/// One lab-frame step with the rule-selected `dt`: `(u_next, v(u), dt)`.
pub fn step_lab(
    u: &Field,
    params: &ModelParams,
    cfg: &StepperConfig,
) -> Result<(Field, Field, f64)> {
    check_state(u.values(), u.grid(), 0)?;
    let mut stepper = LabStepper::new(*params, *cfg)?;
    let chem = stepper.elliptic.solve(u)?;
    let dt = stepper.suggested_dt(&chem);
    let next = stepper.step_with_dt(u, &chem, dt)?;
    Ok((next, chem.v, dt))
}

/// One moving-frame step with `V`, `V'` frozen.
pub fn step_frame(
    u: &Field,
    v_frozen: &Field,
    v_prime_frozen: &Field,
    c: f64,
    chi: f64,
    cfg: &StepperConfig,
) -> Result<Field> {
    cfg.validate()?;
    u.same_grid(v_frozen)?;
    u.same_grid(v_prime_frozen)?;
    let frame = FrozenFrame::new(
        Chemoattractant {
            v: v_frozen.clone(),
            v_prime: v_prime_frozen.clone(),
        },
        c,
        chi,
        *cfg,
    );
    let dt = cfg.choose_dt(u.grid().h(), chi, v_prime_frozen);
    let next = frame.step(u.values(), dt)?;
    check_state(&next, u.grid(), 1)?;
    Field::from_values(*u.grid(), next)
}

/// The moving-frame equation with frozen coefficients.
struct FrozenFrame {
    chem: Chemoattractant,
    drift: Vec<f64>,
    reaction: Reaction,
    cfg: StepperConfig,
    h: f64,
}

impl FrozenFrame {
    fn new(chem: Chemoattractant, c: f64, chi: f64, cfg: StepperConfig) -> Self {
        let drift = chem
            .v_prime
            .values()
            .iter()
            .map(|vx| c - chi * vx)
            .collect();
        let h = chem.v.grid().h();
        FrozenFrame {
            chem,
            drift,
            reaction: Reaction {
                chi,
                a: 1.0,
                b: 1.0,
            },
            cfg,
            h,
        }
    }

    fn step(&self, w: &[f64], dt: f64) -> Result<Vec<f64>> {
        let v = self.chem.v.values();
        let predictor = imex_step(
            w,
            v,
            &self.drift,
            self.h,
            dt,
            self.reaction,
            &self.cfg,
            None,
        )?;
        match self.cfg.scheme {
            Scheme::ImexBe => Ok(predictor),
            Scheme::ImexCn => imex_step(
                w,
                v,
                &self.drift,
                self.h,
                dt,
                self.reaction,
                &self.cfg,
                Some((&predictor, v, &self.drift)),
            ),
        }
    }
}

/// Long-time limit of the frozen flow started from `U+`.
#[derive(Debug, Clone)]
pub struct FrozenSteady {
    pub u: Field,
    pub converged: bool,
    /// Time integrated.
    pub t_final: f64,
    pub dt: f64,
    /// `sup_diff` between the last two checkpoints.
    pub last_change: f64,
    /// Largest pointwise increase seen between checkpoints.
    pub max_increase: f64,
    pub checkpoints: usize,
}

/// Integrates the frozen moving-frame flow from `U+` until two checkpoints
/// one time unit apart differ by less than `tol_inner` in sup norm, or until
/// `t_cap`. The frame speed is `envelope.c`.
pub fn evolve_frozen_to_steady(
    u_frozen: &Field,
    envelope: &EnvelopeParams,
    cfg: &StepperConfig,
    tol_inner: f64,
    t_cap: f64,
) -> Result<FrozenSteady> {
    evolve_frozen_with(u_frozen, envelope, cfg, tol_inner, t_cap, |_, _| {})
}

/// As [`evolve_frozen_to_steady`], calling `observe(t, state)` at every checkpoint.
pub fn evolve_frozen_with(
    u_frozen: &Field,
    envelope: &EnvelopeParams,
    cfg: &StepperConfig,
    tol_inner: f64,
    t_cap: f64,
    mut observe: impl FnMut(f64, &Field),
) -> Result<FrozenSteady> {
    cfg.validate()?;
    let m = membership_with_tol(envelope, u_frozen, SANDWICH_SLACK);
    if !m.member {
        return Err(Error::Envelope {
            violation: m.max_violation,
            x: m.x_at,
        });
    }
    let grid = *u_frozen.grid();
    let chi = envelope.chi;
    let chem = EllipticSolver::default().solve(u_frozen)?;

    // Whole number of steps per checkpoint; dt <= 1 - chi keeps the explicit
    // reaction order preserving on [0, 1/(1 - chi)].
    let dt_rule = cfg.choose_dt(grid.h(), chi, &chem.v_prime).min(1.0 - chi);
    let per_check = (CHECK_INTERVAL / dt_rule).ceil().max(1.0) as usize;
    let dt = CHECK_INTERVAL / per_check as f64;

    let mut frame_cfg = *cfg;
    frame_cfg.left_bc = BoundaryCondition::NeumannZero;
    frame_cfg.right_bc = BoundaryCondition::Dirichlet(envelope.u_plus(grid.half_length()));
    let frame = FrozenFrame::new(chem, envelope.c, chi, frame_cfg);

    let mut state = envelope.sample_u_plus(&grid);
    observe(0.0, &state);
    let mut t = 0.0;
    let mut k = 0usize;
    let mut max_increase = f64::NEG_INFINITY;
    let mut last_change = f64::INFINITY;
    let mut converged = false;
    let mut step = 0usize;
    while t < t_cap {
        let mut w = state.values().to_vec();
        for _ in 0..per_check {
            w = frame.step(&w, dt)?;
            step += 1;
        }
        check_state(&w, &grid, step)?;
        let next = Field::from_values(grid, w)?;
        k += 1;
        t = k as f64 * CHECK_INTERVAL;

        let (mut excess, mut x_at) = (f64::NEG_INFINITY, 0.0);
        for (i, (a, b)) in next.values().iter().zip(state.values()).enumerate() {
            if a - b > excess {
                excess = a - b;
                x_at = grid.x(i);
            }
        }
        if excess > MONOTONE_TOL {
            return Err(Error::Monotonicity { excess, x: x_at, t });
        }
        max_increase = max_increase.max(excess);
        last_change = sup_diff(&next, &state)?;
        state = next;
        observe(t, &state);
        if last_change < tol_inner {
            converged = true;
            break;
        }
    }

    let m = membership_with_tol(envelope, &state, SANDWICH_SLACK);
    if !m.member {
        return Err(Error::Envelope {
            violation: m.max_violation,
            x: m.x_at,
        });
    }
    Ok(FrozenSteady {
        u: state,
        converged,
        t_final: t,
        dt,
        last_change,
        max_increase,
        checkpoints: k,
    })
}

/// Solution of `u' = u (a - b u)`, `u(0) = u0`.
pub fn logistic_solution(u0: f64, t: f64, a: f64, b: f64) -> f64 {
    if u0 == 0.0 {
        return 0.0;
    }
    let growth = (a * t).exp_m1();
    // (a t)-> 0 limit of growth / a is t
    let ratio = if a == 0.0 { t } else { growth / a };
    u0 * (a * t).exp() / (1.0 + b * u0 * ratio)
}

/// Comparison bound `U~(t)` for `sup u`: `U~' = U~ (a - (b - chi) U~)`.
pub fn logistic_cap(u0_sup: f64, t: f64, params: &ModelParams) -> f64 {
    logistic_solution(u0_sup, t, params.a, params.b - params.chi)
}

/// Per-step diagnostics of a lab run.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct Diagnostics {
    pub steps: usize,
    pub dt_min: f64,
    pub dt_max: f64,
    /// `sup u` after each step.
    pub sup_norms: Vec<f64>,
    /// `min u` after each step.
    pub min_values: Vec<f64>,
    /// Largest value of `u` seen within `boundary_margin` of either end.
    pub boundary_max: f64,
    pub boundary_margin: f64,
}

/// Snapshots of a lab-frame run.
#[derive(Debug, Clone)]
pub struct SimulationRecord {
    pub params: ModelParams,
    pub cfg: StepperConfig,
    pub times: Vec<f64>,
    pub u: Vec<Field>,
    pub v: Vec<Field>,
    /// `R` with `supp u0` inside `[-R, R]`, if known.
    pub support_radius: Option<f64>,
    pub diagnostics: Diagnostics,
}

#[derive(Serialize)]
struct Manifest<'a> {
    version: &'a str,
    params: &'a ModelParams,
    stepper: &'a StepperConfig,
    half_length: f64,
    intervals: usize,
    support_radius: Option<f64>,
    times: &'a [f64],
    files: Vec<String>,
    diagnostics: &'a Diagnostics,
}

impl SimulationRecord {
    pub fn grid(&self) -> &Grid1D {
        self.u[0].grid()
    }

    pub fn final_u(&self) -> &Field {
        self.u.last().expect("record has at least one snapshot")
    }

    /// Index of the snapshot at time `t` (nearest).
    pub fn snapshot_near(&self, t: f64) -> usize {
        let mut best = 0;
        for (k, &s) in self.times.iter().enumerate() {
            if (s - t).abs() < (self.times[best] - t).abs() {
                best = k;
            }
        }
        best
    }

    /// Writes `snapshot_KKKK.csv` (`x,u,v`) per snapshot and `manifest.json`.
    pub fn write_to(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir)?;
        let mut files = Vec::with_capacity(self.times.len());
        for (k, (u, v)) in self.u.iter().zip(&self.v).enumerate() {
            let name = format!("snapshot_{k:04}.csv");
            let mut out = BufWriter::new(fs::File::create(dir.join(&name))?);
            writeln!(out, "x,u,v")?;
            for (i, (x, uu)) in u.iter().enumerate() {
                writeln!(
                    out,
                    "{},{},{}",
                    fmt_full(x),
                    fmt_full(uu),
                    fmt_full(v.values()[i])
                )?;
            }
            out.flush()?;
            files.push(name);
        }
        let grid = self.grid();
        let manifest = Manifest {
            version: crate::VERSION,
            params: &self.params,
            stepper: &self.cfg,
            half_length: grid.half_length(),
            intervals: grid.intervals(),
            support_radius: self.support_radius,
            times: &self.times,
            files,
            diagnostics: &self.diagnostics,
        };
        let mut out = BufWriter::new(fs::File::create(dir.join("manifest.json"))?);
        serde_json::to_writer_pretty(&mut out, &manifest)?;
        writeln!(out)?;
        out.flush()?;
        Ok(())
    }
}

/// Run length and snapshot spacing of a lab simulation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RunSpec {
    pub t_final: f64,
    pub snapshot_dt: f64,
    /// `R` with `supp u0` inside `[-R, R]`, if known.
    pub support_radius: Option<f64>,
    /// Distance from the ends watched for boundary contact.
    pub boundary_margin: f64,
}

impl RunSpec {
    pub fn new(t_final: f64, snapshot_dt: f64) -> Self {
        RunSpec {
            t_final,
            snapshot_dt,
            support_radius: None,
            boundary_margin: 10.0,
        }
    }

    pub fn with_support(mut self, r: f64) -> Self {
        self.support_radius = Some(r);
        self
    }
}

/// Integrates the lab-frame system from `u0`, storing snapshots at multiples
/// of `snapshot_dt` (and at `t_final`).
pub fn simulate_lab(
    u0: &Field,
    params: &ModelParams,
    cfg: &StepperConfig,
    run: &RunSpec,
) -> Result<SimulationRecord> {
    if !(run.t_final > 0.0 && run.snapshot_dt > 0.0) {
        return Err(Error::Domain(format!(
            "need t_final > 0 and snapshot_dt > 0, got {} and {}",
            run.t_final, run.snapshot_dt
        )));
    }
    check_state(u0.values(), u0.grid(), 0)?;
    let mut stepper = LabStepper::new(*params, *cfg)?;
    let grid = *u0.grid();
    let margin_hits = |u: &Field| {
        u.iter()
            .filter(|(x, _)| x.abs() >= grid.half_length() - run.boundary_margin)
            .fold(0.0f64, |m, (_, v)| m.max(v))
    };

    let mut targets = Vec::new();
    let mut k = 1usize;
    loop {
        let t = k as f64 * run.snapshot_dt;
        if t >= run.t_final * (1.0 - 1e-12) {
            break;
        }
        targets.push(t);
        k += 1;
    }
    targets.push(run.t_final);

    let mut u = u0.clone();
    let mut chem = stepper.elliptic.solve(&u)?;
    let mut record = SimulationRecord {
        params: *params,
        cfg: *cfg,
        times: vec![0.0],
        u: vec![u.clone()],
        v: vec![chem.v.clone()],
        support_radius: run.support_radius,
        diagnostics: Diagnostics {
            dt_min: f64::INFINITY,
            boundary_max: margin_hits(&u),
            boundary_margin: run.boundary_margin,
            ..Diagnostics::default()
        },
    };
    let mut t = 0.0;
    for &target in &targets {
        while t < target {
            let mut dt = stepper.suggested_dt(&chem);
            let last = t + dt >= target - 1e-12 * target.max(1.0);
            if last {
                dt = target - t;
            }
            u = stepper.step_with_dt(&u, &chem, dt)?;
            t = if last { target } else { t + dt };
            chem = stepper.elliptic.solve(&u)?;
            let d = &mut record.diagnostics;
            d.steps += 1;
            d.dt_min = d.dt_min.min(dt);
            d.dt_max = d.dt_max.max(dt);
            d.sup_norms.push(u.max());
            d.min_values.push(u.min());
        }
        record.diagnostics.boundary_max = record.diagnostics.boundary_max.max(margin_hits(&u));
        record.times.push(t);
        record.u.push(u.clone());
        record.v.push(chem.v.clone());
    }
    Ok(record)
}
