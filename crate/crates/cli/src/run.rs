//! Command execution and artifact writing.

use std::fs;
use std::io::{BufWriter, Write};
use std::path::Path;

use serde::Serialize;
use serde_json::{json, Value};

use chemowave::constants::{c_star, critical_rate, speed_interval};
use chemowave::spreading::{run_spreading, SpreadConfig};
use chemowave::wave::{construct_wave, WaveConfig};
use chemowave::VERSION;

use crate::config::{Command, RunConfig};
use crate::verify::run_suites;

pub const EXIT_OK: i32 = 0;
pub const EXIT_VERIFY: i32 = 1;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_NUMERICAL: i32 = 3;

/// Exit status and the JSON summary printed on stdout.
#[derive(Debug)]
pub struct Outcome {
    pub status: i32,
    pub summary: Value,
}

fn write_json(path: &Path, value: &impl Serialize) -> chemowave::Result<()> {
    let mut out = BufWriter::new(fs::File::create(path)?);
    serde_json::to_writer_pretty(&mut out, value)?;
    writeln!(out)?;
    out.flush()?;
    Ok(())
}

/// Summary for a failed run, with the machine-readable error code.
pub fn error_summary(cfg: Option<&RunConfig>, code: &str, message: &str) -> Value {
    json!({
        "version": VERSION,
        "status": "error",
        "code": code,
        "message": message,
        "config": cfg,
    })
}

pub fn run(cfg: &RunConfig) -> Outcome {
    match execute(cfg) {
        Ok(o) => o,
        Err(e) => {
            let status = match e {
                chemowave::Error::Domain(_) | chemowave::Error::Constraint(_) => EXIT_CONFIG,
                _ => EXIT_NUMERICAL,
            };
            let summary = error_summary(Some(cfg), e.code(), &e.to_string());
            let dir = &cfg.file.output.dir;
            if fs::create_dir_all(dir).is_ok() {
                let _ = write_json(&dir.join("error.json"), &summary);
            }
            Outcome { status, summary }
        }
    }
}

fn execute(cfg: &RunConfig) -> chemowave::Result<Outcome> {
    let dir = &cfg.file.output.dir;
    fs::create_dir_all(dir)?;
    let f = &cfg.file;
    let params = cfg.model();
    match cfg.command {
        Command::Constants => {
            let rate = critical_rate(&params).ok();
            let summary = json!({
                "version": VERSION,
                "status": "ok",
                "config": cfg,
                "mu_star": rate.map(|r| r.mu),
                "mu_star_saturated": rate.map(|r| r.saturated),
                "root_residual": rate.map(|r| r.residual),
                "c_star": c_star(&params).ok(),
                "interval": speed_interval(&params)?,
            });
            write_json(&dir.join("constants.json"), &summary)?;
            Ok(Outcome {
                status: EXIT_OK,
                summary,
            })
        }
        Command::Wave => {
            let w = &f.wave;
            let c = match w.c {
                Some(c) => c,
                None if params.chi == 0.0 => 2.0,
                None => c_star(&params)?,
            };
            let defaults = WaveConfig::default();
            let wave_cfg = WaveConfig {
                half_length: f.grid.half_length,
                intervals: f.grid.intervals,
                dt_max: f.stepper.dt_max.unwrap_or(defaults.dt_max),
                cfl_advection: f.stepper.cfl.unwrap_or(defaults.cfl_advection),
                tol_inner: w.tol_inner,
                tol_outer: w.tol_outer,
                max_outer: w.max_outer,
                t_cap: w.t_cap,
                relaxation: w.relaxation,
                ..defaults
            };
            let profile = construct_wave(params.chi, c, &wave_cfg)?;
            let mut csv = BufWriter::new(fs::File::create(dir.join("profile.csv"))?);
            profile.write_csv(&mut csv)?;
            csv.flush()?;
            let summary = json!({
                "version": VERSION,
                "status": "ok",
                "config": cfg,
                "wave": profile.summary()?,
            });
            write_json(&dir.join("summary.json"), &summary)?;
            Ok(Outcome {
                status: EXIT_OK,
                summary,
            })
        }
        Command::Spread => {
            let s = &f.spread;
            let defaults = SpreadConfig::default();
            let spread_cfg = SpreadConfig {
                t_final: s.t_final,
                snapshot_dt: s.snapshot_dt,
                h: s.h,
                half_length: s.half_length,
                dt_max: f.stepper.dt_max.unwrap_or(defaults.dt_max),
                cfl_advection: f.stepper.cfl.unwrap_or(defaults.cfl_advection),
                scheme: f.stepper.scheme.unwrap_or(defaults.scheme),
                thresholds: s.thresholds.clone(),
                shape: s.shape,
            };
            let report = run_spreading(&params, &spread_cfg)?;
            report.write_to(dir)?;
            if s.snapshots {
                report.record.write_to(&dir.join("snapshots"))?;
            }
            let summary = json!({
                "version": VERSION,
                "status": "ok",
                "config": cfg,
                "interval": report.interval,
                "fits": report.fits,
                "envelope": report.envelope,
                "boundary_max": report.record.diagnostics.boundary_max,
            });
            write_json(&dir.join("summary.json"), &summary)?;
            Ok(Outcome {
                status: EXIT_OK,
                summary,
            })
        }
        Command::Verify => {
            let results = run_suites(&f.verify.suites, f.verify.seed);
            let passed = results.iter().all(|s| s.checks.iter().all(|c| c.passed));
            let summary = json!({
                "version": VERSION,
                "status": if passed { "ok" } else { "failed" },
                "config": cfg,
                "seed": f.verify.seed,
                "passed": passed,
                "suites": results,
            });
            write_json(&dir.join("verify.json"), &summary)?;
            Ok(Outcome {
                status: if passed { EXIT_OK } else { EXIT_VERIFY },
                summary,
            })
        }
    }
}
