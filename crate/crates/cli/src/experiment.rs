//! Single solver runs and their on-disk artifacts.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use ferroprop::bp::{bp_iterate, dual_bethe};
use ferroprop::ellipsoid::{solve_bethe_detailed, solve_mf_detailed, EllipsoidState};
use ferroprop::meanfield::{mf_iterate, mf_objective};
use ferroprop::model::model_norms;
use ferroprop::numeric::loglog_slope;
use ferroprop::oracle::{exact_log_z_guarded, transfer_matrix_log_z};
use ferroprop::{IsingModel, IterateOptions, IterationTrace};
use serde::Serialize;

use crate::config::{Algorithm, ExperimentConfig, InitKind, ReferenceSpec};
use crate::error::{self, CliError, Result};
use crate::plot::{line_plot, Scale, Series};
use crate::report::{bound_checks, objective_monotone, TraceHeader};

/// Tolerance and step cap of the long reference runs.
pub const REFERENCE_TOL: f64 = 1e-13;
pub const REFERENCE_MAX_STEPS: usize = 1_000_000;
/// Accuracy of ellipsoid reference values.
pub const REFERENCE_EPS: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Checks {
    /// Objective non-decreasing along the trace (runs from all-ones only).
    pub objective_monotone: Option<bool>,
    /// Residual against the reference never below `-1e-9`.
    pub residual_nonnegative: Option<bool>,
    /// Residual never above the worst-case bound plus `1e-9`.
    pub residual_within_bound: Option<bool>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunSummary {
    pub algorithm: String,
    pub model_hash: String,
    pub n: usize,
    pub m: usize,
    pub init: Option<String>,
    pub steps: usize,
    pub converged: Option<bool>,
    pub final_objective: f64,
    pub final_density: f64,
    pub reference: Option<f64>,
    pub reference_source: Option<String>,
    /// `|final_objective − reference|`.
    pub reference_gap: Option<f64>,
    /// Log-log slope of the residual over the last 90% of the steps.
    pub residual_slope: Option<f64>,
    /// Ellipsoid runs: upper bound minus best value at termination.
    pub certified_gap: Option<f64>,
    pub checks: Checks,
    pub files: Vec<String>,
}

fn reference_value(cfg: &ExperimentConfig, model: &IsingModel) -> Result<Option<(f64, String)>> {
    let value = match cfg.reference {
        ReferenceSpec::None => return Ok(None),
        ReferenceSpec::Value(v) => (v, "given"),
        ReferenceSpec::LongRun => {
            let opts = IterateOptions {
                init: cfg.init.into(),
                max_steps: REFERENCE_MAX_STEPS,
                tol: REFERENCE_TOL,
            };
            let v = if matches!(cfg.algorithm, Algorithm::Bp | Algorithm::EllipsoidBethe) {
                let (nu, _) = bp_iterate(model, &opts)?;
                dual_bethe(model, &nu)?
            } else {
                let (x, _) = mf_iterate(model, &opts)?;
                mf_objective(model, &x.x)?
            };
            (v, "long_run")
        }
        ReferenceSpec::Ellipsoid => {
            let v = match cfg.algorithm {
                Algorithm::Mf | Algorithm::EllipsoidMf => solve_mf_detailed(model, REFERENCE_EPS, None)?.value,
                _ => solve_bethe_detailed(model, REFERENCE_EPS, None)?.value,
            };
            (v, "ellipsoid")
        }
        ReferenceSpec::Exact => (exact_log_z_guarded(model, cfg.exact_max_n)?.log_z, "exact"),
    };
    Ok(Some((value.0, value.1.to_string())))
}

fn product_csv(x: &[f64]) -> String {
    let mut out = String::from("node,x\n");
    for (i, v) in x.iter().enumerate() {
        let _ = writeln!(out, "{i},{v:.17e}");
    }
    out
}

fn residual_slope(trace: &IterationTrace, reference: f64) -> Option<f64> {
    let last = trace.records.last()?.t;
    let pts: Vec<(f64, f64)> = trace
        .records
        .iter()
        .filter(|r| 10 * r.t >= last)
        .map(|r| (r.t as f64, reference - r.objective))
        .collect();
    loglog_slope(&pts)
}

enum Outcome {
    Iterative(IterationTrace),
    Ellipsoid(Option<EllipsoidState>),
    Direct,
}

/// Runs one configured solver and writes `trace.csv` (iterative and ellipsoid
/// runs), `state.csv` and `summary.json` into the output directory, plus SVG
/// plots with `plot`.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<RunSummary> {
    cfg.validate()?;
    let model = cfg.source.load()?;
    let norms = model_norms(&model);
    let reference = reference_value(cfg, &model)?;
    std::fs::create_dir_all(&cfg.out).map_err(|e| CliError::io(&cfg.out, e))?;

    let opts = IterateOptions {
        init: cfg.init.into(),
        max_steps: cfg.max_steps,
        tol: cfg.tol,
    };
    let (outcome, state_csv, final_objective) = match cfg.algorithm {
        Algorithm::Mf => {
            let (x, trace) = mf_iterate(&model, &opts)?;
            let v = trace.final_objective();
            (Outcome::Iterative(trace), product_csv(&x.x), v)
        }
        Algorithm::Bp => {
            let (nu, trace) = bp_iterate(&model, &opts)?;
            let v = trace.final_objective();
            (Outcome::Iterative(trace), nu.to_csv(&model), v)
        }
        Algorithm::EllipsoidBethe => {
            let sol = solve_bethe_detailed(&model, cfg.epsilon.unwrap_or_default(), None)?;
            (Outcome::Ellipsoid(sol.state), sol.solution.to_csv(&model), sol.value)
        }
        Algorithm::EllipsoidMf => {
            let sol = solve_mf_detailed(&model, cfg.epsilon.unwrap_or_default(), None)?;
            (Outcome::Ellipsoid(sol.state), product_csv(&sol.solution.x), sol.value)
        }
        Algorithm::Exact => {
            let exact = exact_log_z_guarded(&model, cfg.exact_max_n)?;
            (Outcome::Direct, exact.to_csv(&model), exact.log_z)
        }
        Algorithm::TransferMatrix => {
            let v = transfer_matrix_log_z(&model)?;
            (Outcome::Direct, format!("log_z\n{v:.17e}\n"), v)
        }
    };

    let init = cfg.algorithm.is_iterative().then_some(cfg.init);
    let header = TraceHeader {
        algorithm: cfg.algorithm.name().to_string(),
        init,
        model_hash: model.content_hash(),
        norms,
        reference: reference.as_ref().map(|r| r.0),
        reference_source: reference.as_ref().map(|r| r.1.clone()),
    };
    let mut files: Vec<PathBuf> = Vec::new();
    let mut put = |name: &str, contents: &str| -> Result<()> {
        let path = cfg.out.join(name);
        error::write(&path, contents)?;
        files.push(path);
        Ok(())
    };

    let mut summary = RunSummary {
        algorithm: cfg.algorithm.name().to_string(),
        model_hash: header.model_hash.clone(),
        n: model.n(),
        m: model.m(),
        init: init.map(|i| if i == InitKind::Ones { "ones" } else { "zeros" }.to_string()),
        steps: 0,
        converged: None,
        final_objective,
        final_density: final_objective / model.n() as f64,
        reference: header.reference,
        reference_source: header.reference_source.clone(),
        reference_gap: header.reference.map(|r| (final_objective - r).abs()),
        residual_slope: None,
        certified_gap: None,
        checks: Checks {
            objective_monotone: None,
            residual_nonnegative: None,
            residual_within_bound: None,
        },
        files: Vec::new(),
    };

    match &outcome {
        Outcome::Iterative(trace) => {
            put("trace.csv", &format!("{}\n{}", header.to_line(), trace.to_csv()))?;
            summary.steps = trace.steps();
            summary.converged = Some(trace.converged);
            if cfg.init == InitKind::Ones {
                summary.checks.objective_monotone = Some(objective_monotone(trace));
                if let Some(r) = header.reference {
                    let (nonneg, within) = bound_checks(trace, &norms, r)?;
                    summary.checks.residual_nonnegative = Some(nonneg);
                    summary.checks.residual_within_bound = Some(within);
                }
            }
            summary.residual_slope = header.reference.and_then(|r| residual_slope(trace, r));
        }
        Outcome::Ellipsoid(Some(state)) => {
            put("trace.csv", &format!("{}\n{}", header.to_line(), state.progress_csv()))?;
            summary.steps = state.steps;
            summary.certified_gap = Some(state.gap());
        }
        Outcome::Ellipsoid(None) => {
            put(
                "trace.csv",
                &format!("{}\nstep,feasible,objective_best,violation\n", header.to_line()),
            )?;
        }
        Outcome::Direct => {}
    }
    put("state.csv", &state_csv)?;

    if cfg.plot {
        let title = format!("{} on {} nodes", cfg.algorithm, model.n());
        match &outcome {
            Outcome::Iterative(trace) => {
                let objective = Series::new(
                    cfg.algorithm.name(),
                    trace.records.iter().map(|r| (r.t as f64, r.objective)).collect(),
                );
                put(
                    "objective.svg",
                    &line_plot(&title, "iteration", "objective", &[objective], Scale::LINEAR),
                )?;
                if let Some(r) = header.reference {
                    let residual = Series::new(
                        "residual",
                        trace.records.iter().map(|x| (x.t as f64, r - x.objective)).collect(),
                    );
                    let bound = Series::new("bound", trace.records.iter().map(|x| (x.t as f64, x.bound)).collect());
                    put(
                        "residual.svg",
                        &line_plot(
                            &title,
                            "iteration",
                            "reference − objective",
                            &[residual, bound],
                            Scale::LOG_LOG,
                        ),
                    )?;
                }
            }
            Outcome::Ellipsoid(Some(state)) => {
                let best = Series::new(
                    "best feasible",
                    state
                        .progress
                        .iter()
                        .filter(|p| p.objective_best.is_finite())
                        .map(|p| (p.step as f64, p.objective_best))
                        .collect(),
                );
                put(
                    "objective.svg",
                    &line_plot(&title, "step", "linear objective", &[best], Scale::LINEAR),
                )?;
            }
            _ => {}
        }
    }

    summary.files = files
        .iter()
        .chain(std::iter::once(&cfg.out.join("summary.json")))
        .map(|p| file_name(p))
        .collect();
    let json = serde_json::to_string_pretty(&summary).map_err(|e| CliError::invalid(e.to_string()))?;
    error::write(&cfg.out.join("summary.json"), &format!("{json}\n"))?;
    Ok(summary)
}

fn file_name(p: &Path) -> String {
    p.file_name()
        .map_or_else(|| p.display().to_string(), |s| s.to_string_lossy().into_owned())
}
