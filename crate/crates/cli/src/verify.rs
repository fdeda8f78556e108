//! Property suites behind `chemowave verify`.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use chemowave::constants::{
    c_star, critical_rate, decay_rate_lhs, mu_star, speed_interval, ModelParams,
};
use chemowave::dynamics::{
    evolve_frozen_with, logistic_solution, simulate_lab, RunSpec, Scheme, StepperConfig,
    MONOTONE_TOL, SANDWICH_SLACK,
};
use chemowave::elliptic::{kernel_identity_check, EllipticMethod, EllipticSolver};
use chemowave::envelopes::{frame_operator, make_envelope, membership_with_tol, EnvelopeParams};
use chemowave::grid::{interp, make_grid, sample, sup_norm, Field, Grid1D};
use chemowave::spreading::{
    ahead_front_max, behind_front_deviation, run_spreading, SpreadConfig, SpreadReport,
};
use chemowave::wave::{
    aligned_sup_diff, construct_wave, decay_ratio, stationary_residual, WaveConfig,
};
use chemowave::Result;

use crate::config::SUITES;

#[derive(Debug, Clone, Serialize)]
pub struct Check {
    pub id: String,
    pub name: String,
    pub passed: bool,
    pub metrics: BTreeMap<String, f64>,
    /// Error text when the check could not run.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

impl Check {
    fn new(id: &str, name: &str) -> Self {
        Check {
            id: id.into(),
            name: name.into(),
            passed: true,
            metrics: BTreeMap::new(),
            error: None,
        }
    }

    fn metric(&mut self, key: &str, value: f64) -> &mut Self {
        self.metrics.insert(key.into(), value);
        self
    }

    /// Records `value` and requires `ok`.
    fn require(&mut self, key: &str, value: f64, ok: bool) -> &mut Self {
        self.metric(key, value);
        self.passed &= ok;
        self
    }

    fn from_result(id: &str, name: &str, f: impl FnOnce(&mut Check) -> Result<()>) -> Check {
        let mut c = Check::new(id, name);
        if let Err(e) = f(&mut c) {
            c.passed = false;
            c.error = Some(format!("{}: {e}", e.code()));
        }
        c
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct SuiteResult {
    pub suite: String,
    pub checks: Vec<Check>,
}

/// Expands `all` and removes duplicates, keeping the canonical order.
pub fn resolve_suites(requested: &[String]) -> Vec<&'static str> {
    SUITES
        .iter()
        .copied()
        .filter(|s| requested.iter().any(|r| r == "all" || r == s))
        .collect()
}

/// Runs the suites concurrently; results come back in canonical order.
pub fn run_suites(requested: &[String], seed: u64) -> Vec<SuiteResult> {
    resolve_suites(requested)
        .par_iter()
        .map(|&s| SuiteResult {
            suite: s.into(),
            checks: run_suite(s, seed),
        })
        .collect()
}

fn run_suite(name: &str, seed: u64) -> Vec<Check> {
    match name {
        "elliptic" => vec![elliptic_oracle(), kernel_identity(), sup_bounds(seed)],
        "constants" => vec![constants()],
        "envelopes" => vec![envelope_signs()],
        "dynamics" => vec![inner_monotonicity(), logistic_equivalence(), stability()],
        "wave" => vec![wave_at_critical_speed(), fisher_control()],
        "spreading" => spreading(),
        _ => unreachable!("suite names are validated"),
    }
}

fn elliptic_oracle() -> Check {
    Check::from_result("AC1", "elliptic oracle on exponential density", |c| {
        let g = make_grid(60.0, 12000)?;
        let mu = 0.5;
        let u = sample(&g, |x| (-mu * x).exp())?;
        let kernel =
            EllipticSolver::new(EllipticMethod::GreenKernel, Default::default()).solve_v(&u)?;
        let tri =
            EllipticSolver::new(EllipticMethod::Tridiagonal, Default::default()).solve_v(&u)?;
        let (mut rel, mut agree) = (0.0f64, 0.0f64);
        for (i, x) in g.nodes().enumerate() {
            if x.abs() <= 40.0 {
                let exact = (-mu * x).exp() / (1.0 - mu * mu);
                let k = kernel.values()[i];
                rel = rel.max((k - exact).abs() / exact);
                agree = agree.max((k - tri.values()[i]).abs() / exact);
            }
        }
        c.require("max_relative_error", rel, rel <= 1e-4);
        c.require("backend_disagreement", agree, agree <= 1e-4);
        Ok(())
    })
}

fn kernel_identity() -> Check {
    Check::from_result("AC2", "kernel time integral equals exp(-|x|)/2", |c| {
        let err = kernel_identity_check(&[0.0, 0.5, 1.0, 2.0, 5.0])?;
        c.require("max_abs_error", err, err <= 1e-8);
        Ok(())
    })
}

fn random_field(rng: &mut ChaCha8Rng, g: &Grid1D) -> Field {
    let k: usize = rng.gen_range(1..6);
    let bumps: Vec<(f64, f64, f64)> = (0..k)
        .map(|_| {
            (
                rng.gen_range(-15.0..15.0),
                rng.gen_range(0.3..4.0),
                rng.gen_range(0.0..3.0),
            )
        })
        .collect();
    let noise = rng.gen_range(0.0..0.5);
    let values = g
        .nodes()
        .map(|x| {
            let smooth: f64 = bumps
                .iter()
                .map(|&(m, w, a)| a * (-((x - m) / w).powi(2)).exp())
                .sum();
            smooth + noise * rng.gen::<f64>()
        })
        .collect();
    Field::from_values(*g, values).expect("sized to grid")
}

fn sup_bounds(seed: u64) -> Check {
    Check::from_result("AC3", "sup bounds on V and V' for random densities", |c| {
        let g = make_grid(20.0, 2000)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let solver = EllipticSolver::default();
        let (mut worst_v, mut worst_vp) = (f64::NEG_INFINITY, f64::NEG_INFINITY);
        for _ in 0..100 {
            let u = random_field(&mut rng, &g);
            let chem = solver.solve(&u)?;
            let norm = sup_norm(&u);
            worst_v = worst_v.max(sup_norm(&chem.v) - norm);
            worst_vp = worst_vp.max(sup_norm(&chem.v_prime) - norm);
        }
        c.require("max_excess_v", worst_v, worst_v <= 1e-8);
        c.require("max_excess_v_prime", worst_vp, worst_vp <= 1e-8);
        Ok(())
    })
}

fn constants() -> Check {
    Check::from_result("AC4", "critical rate and minimal speed", |c| {
        let mut worst = 0.0f64;
        let mut min_c = f64::INFINITY;
        for k in 1..=19 {
            let chi = 0.05 * k as f64;
            let p = ModelParams::new(chi)?;
            let r = critical_rate(&p)?;
            worst = worst.max((decay_rate_lhs(r.mu) - (1.0 - chi) / chi).abs());
            min_c = min_c.min(c_star(&p)?);
        }
        c.require("max_root_residual", worst, worst <= 1e-12);
        c.require("min_c_star", min_c, min_c > 2.0);
        let c0 = c_star(&ModelParams::new(0.001)?)?;
        c.require("c_star_0.001", c0, c0 < 2.001);
        let m = mu_star(&ModelParams::new(0.5)?)?;
        c.require("mu_star_0.5", m, (m - 0.5257).abs() <= 5e-4);
        let s = c_star(&ModelParams::new(0.2)?)?;
        c.require("c_star_0.2", s, (s - 2.030).abs() <= 5e-3);
        Ok(())
    })
}

fn envelope_signs() -> Check {
    Check::from_result("AC5", "super- and sub-solution signs", |c| {
        let cases = [
            (0.2, 0.5),
            (0.2, mu_star(&ModelParams::new(0.2)?)?),
            (0.45, mu_star(&ModelParams::new(0.45)?)?),
        ];
        let (mut phi_max, mut cap_max, mut low_min) =
            (f64::NEG_INFINITY, f64::NEG_INFINITY, f64::INFINITY);
        for (chi, mu) in cases {
            let env = make_envelope(chi, mu, None, None)?;
            let g = envelope_grid(&env)?;
            let upper = env.sample_u_plus(&g);
            let lower = env.sample_u_minus(&g);
            let mid = upper.zip_with(&lower, |a, b| 0.5 * (a + b))?;
            let phi = sample(&g, |x| (-mu * x).exp())?;
            let cap = Field::constant(g, env.cap());
            for u in [&lower, &upper, &mid] {
                let chem = EllipticSolver::default().solve(u)?;
                phi_max = phi_max.max(frame_operator(chi, env.c, &phi, &chem)?.max());
                cap_max = cap_max.max(frame_operator(chi, env.c, &cap, &chem)?.max());
                let r = frame_operator(chi, env.c, &lower, &chem)?;
                low_min = low_min.min(r.min_right_of(env.a_lower() + 10.0 * g.h()));
            }
        }
        c.require("max_L_phi", phi_max, phi_max <= 1e-4);
        c.require("max_L_cap", cap_max, cap_max <= 1e-4);
        c.require("min_L_lower", low_min, low_min >= -1e-4);
        Ok(())
    })
}

/// `h = 0.01` grid reaching 40 units past the zero of `U-`.
pub fn envelope_grid(env: &EnvelopeParams) -> Result<Grid1D> {
    let reach = if env.a_lower().is_finite() {
        env.a_lower() + 40.0
    } else {
        0.0
    };
    let l = reach.max(60.0).ceil();
    make_grid(l, (200.0 * l) as usize)
}

fn inner_monotonicity() -> Check {
    Check::from_result("AC6", "monotone inner flow from the upper envelope", |c| {
        let chi = 0.2;
        let mu = mu_star(&ModelParams::new(chi)?)?;
        let env = make_envelope(chi, mu, None, None)?;
        let g = make_grid(60.0, 12000)?;
        let frozen = env.sample_u_plus(&g);
        let cfg = StepperConfig::frame(0.1, env.u_plus(g.half_length()));
        let mut prev: Option<Field> = None;
        let mut worst = f64::NEG_INFINITY;
        let res = evolve_frozen_with(&frozen, &env, &cfg, 1e-8, 200.0, |_, s| {
            if let Some(p) = &prev {
                for (a, b) in s.values().iter().zip(p.values()) {
                    worst = worst.max(a - b);
                }
            }
            prev = Some(s.clone());
        })?;
        c.require("max_increase", worst, worst <= MONOTONE_TOL);
        let m = membership_with_tol(&env, &res.u, SANDWICH_SLACK);
        c.require("envelope_violation", m.max_violation, m.member);
        c.metric("t_final", res.t_final);
        Ok(())
    })
}

fn logistic_equivalence() -> Check {
    Check::from_result("AC12", "constant data follow the logistic ODE", |c| {
        let g = make_grid(5.0, 50)?;
        let mut worst = 0.0f64;
        for chi in [0.1, 0.3] {
            for u0 in [0.2, 1.5] {
                let p = ModelParams::new(chi)?;
                let cfg = StepperConfig::lab(1e-3).with_scheme(Scheme::ImexCn);
                let rec =
                    simulate_lab(&Field::constant(g, u0), &p, &cfg, &RunSpec::new(10.0, 0.5))?;
                for (t, u) in rec.times.iter().zip(&rec.u) {
                    let exact = logistic_solution(u0, *t, 1.0, 1.0);
                    worst = worst.max(
                        u.values()
                            .iter()
                            .fold(0.0f64, |m, v| m.max((v - exact).abs())),
                    );
                }
            }
        }
        c.require("max_error", worst, worst <= 1e-6);
        Ok(())
    })
}

fn stability() -> Check {
    Check::from_result("AC13", "stability of the constant state", |c| {
        let l = 20.0;
        let g = make_grid(l, 2000)?;
        let u0 = sample(&g, |x| 1.0 + 0.2 * (std::f64::consts::PI * x / l).cos())?;
        let p = ModelParams::new(0.3)?;
        let rec = simulate_lab(
            &u0,
            &p,
            &StepperConfig::lab(0.01),
            &RunSpec::new(50.0, 10.0),
        )?;
        let dev = rec
            .final_u()
            .values()
            .iter()
            .fold(0.0f64, |m, v| m.max((v - 1.0).abs()));
        c.require("sup_deviation_t50", dev, dev < 0.01);
        Ok(())
    })
}

fn wave_at_critical_speed() -> Check {
    Check::from_result(
        "AC7",
        "traveling wave at the minimal speed, chi = 0.2",
        |c| {
            let chi = 0.2;
            let speed = c_star(&ModelParams::new(chi)?)?;
            let p = construct_wave(chi, speed, &WaveConfig::default())?;
            c.require("converged", f64::from(u8::from(p.converged)), p.converged);
            c.require(
                "outer_iterations",
                p.outer_iterations as f64,
                p.outer_iterations <= 50,
            );
            c.metric("final_outer_diff", p.final_outer_diff);
            let res = stationary_residual(&p)?;
            c.require("stationary_residual", res, res <= 1e-3);
            let ratio = decay_ratio(&p, (10.0, 25.0))?;
            let (lo, hi) = ratio
                .samples
                .iter()
                .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &(_, r)| {
                    (a.min(r), b.max(r))
                });
            c.require("decay_ratio_min", lo, lo >= 0.98);
            c.require("decay_ratio_max", hi, hi <= 1.02);
            let left = interp(&p.u, -55.0)?;
            c.require(
                "left_plateau_error",
                (left - 1.0).abs(),
                (left - 1.0).abs() <= 0.03,
            );
            Ok(())
        },
    )
}

fn fisher_control() -> Check {
    Check::from_result("AC8", "Fisher-KPP control and small-chi agreement", |c| {
        let cfg = WaveConfig::default();
        let fisher = construct_wave(0.0, 2.0, &cfg)?;
        let small = construct_wave(0.01, c_star(&ModelParams::new(0.01)?)?, &cfg)?;
        let res = stationary_residual(&fisher)?;
        c.require("fisher_residual", res, res <= 1e-3);
        let increasing = fisher
            .u
            .values()
            .windows(2)
            .fold(f64::NEG_INFINITY, |m, w| m.max(w[1] - w[0]));
        c.require("fisher_max_increase", increasing, increasing <= 1e-10);
        let left = interp(&fisher.u, -55.0)?;
        c.require(
            "fisher_left_plateau_error",
            (left - 1.0).abs(),
            (left - 1.0).abs() <= 0.03,
        );
        let d = aligned_sup_diff(&small.u, &fisher.u, -50.0, 50.0)?;
        c.require("aligned_sup_diff", d, d <= 0.05);
        Ok(())
    })
}

fn spreading() -> Vec<Check> {
    let runs: Vec<Result<SpreadReport>> = [0.0, 0.2]
        .par_iter()
        .map(|&chi| {
            let p = ModelParams {
                chi,
                ..ModelParams::default()
            };
            run_spreading(&p, &SpreadConfig::default())
        })
        .collect();
    let mut runs = runs.into_iter();
    let (fisher, chemo) = (
        runs.next().expect("two runs"),
        runs.next().expect("two runs"),
    );
    let fit_range = |c: &mut Check, rep: &SpreadReport, lo: f64, hi: f64| {
        for f in &rep.fits {
            for (side, fit) in [("left", f.left), ("right", f.right)] {
                let key = format!("speed_{side}_{}", f.theta);
                c.require(&key, fit.c_hat, fit.c_hat >= lo && fit.c_hat <= hi);
            }
        }
    };
    let ac9 = Check::from_result("AC9", "spreading speed without chemotaxis", |c| {
        let rep = fisher.as_ref().map_err(clone_err)?;
        fit_range(c, rep, 1.9, 2.05);
        Ok(())
    });
    let ac10 = Check::from_result("AC10", "spreading speed, chi = 0.2", |c| {
        let rep = chemo.as_ref().map_err(clone_err)?;
        let interval = speed_interval(&rep.params)?;
        c.metric("lower_bound", interval.lower)
            .metric("upper_bound", interval.upper);
        fit_range(c, rep, 1.38, 2.13);
        let (t, u) = (
            *rep.record.times.last().expect("snapshots"),
            rep.record.final_u(),
        );
        let behind = behind_front_deviation(u, 1.0, t);
        c.require("behind_front_deviation", behind, behind <= 0.05);
        let ahead = ahead_front_max(u, 2.5, t);
        c.require("ahead_front_max", ahead, ahead <= 1e-3);
        Ok(())
    });
    let ac11 = Check::from_result("AC11", "exponential envelope and logistic cap", |c| {
        let rep = chemo.as_ref().map_err(clone_err)?;
        let e = &rep.envelope;
        c.metric("m", e.m);
        c.require("max_violation", e.max_violation, e.passes);
        c.require("logistic_excess", e.logistic_excess, e.logistic_passes);
        Ok(())
    });
    vec![ac9, ac10, ac11]
}

fn clone_err(e: &chemowave::Error) -> chemowave::Error {
    chemowave::Error::Insufficient(format!("spreading run failed ({}): {e}", e.code()))
}
