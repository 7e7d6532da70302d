//! Iteration options and per-step traces shared by the mean-field and BP loops.

use std::fmt::Write as _;

use crate::error::{Error, Result};

/// Starting point of an iteration.
#[derive(Debug, Clone, PartialEq, Default)]
pub enum Init {
    #[default]
    AllOnes,
    AllZeros,
    Given(Vec<f64>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct IterateOptions {
    pub init: Init,
    pub max_steps: usize,
    /// Stop once the ℓ∞ step falls strictly below this value. Zero runs
    /// exactly `max_steps` steps.
    pub tol: f64,
}

impl Default for IterateOptions {
    fn default() -> Self {
        IterateOptions {
            init: Init::AllOnes,
            max_steps: 1_000_000,
            tol: 1e-10,
        }
    }
}

impl IterateOptions {
    pub fn steps(max_steps: usize) -> Self {
        IterateOptions {
            max_steps,
            tol: 0.0,
            ..Default::default()
        }
    }

    pub fn with_init(mut self, init: Init) -> Self {
        self.init = init;
        self
    }

    pub fn with_tol(mut self, tol: f64) -> Self {
        self.tol = tol;
        self
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TraceKind {
    MeanField,
    BeliefPropagation,
}

/// One step of an iteration. `t` counts applications of the update map.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TraceRecord {
    pub t: usize,
    pub objective: f64,
    /// ℓ∞ distance to the previous iterate.
    pub step_inf: f64,
    /// ℓ1 norm of the objective gradient at this iterate.
    pub grad_l1: f64,
    /// Worst-case objective gap guaranteed at step `t`.
    pub bound: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct IterationTrace {
    pub kind: TraceKind,
    /// Objective at the starting point (`t = 0`).
    pub initial_objective: f64,
    pub records: Vec<TraceRecord>,
    pub converged: bool,
}

impl IterationTrace {
    pub fn new(kind: TraceKind, initial_objective: f64) -> Self {
        IterationTrace {
            kind,
            initial_objective,
            records: Vec::new(),
            converged: false,
        }
    }

    pub fn steps(&self) -> usize {
        self.records.len()
    }

    pub fn final_objective(&self) -> f64 {
        self.records.last().map_or(self.initial_objective, |r| r.objective)
    }

    pub fn objectives(&self) -> impl Iterator<Item = f64> + '_ {
        self.records.iter().map(|r| r.objective)
    }

    pub fn csv_header(kind: TraceKind) -> &'static str {
        match kind {
            TraceKind::MeanField => "t,objective,step_inf,grad_l1,bound",
            TraceKind::BeliefPropagation => "t,dual_bethe,step_inf,bound_thm2",
        }
    }

    /// Mean-field traces: `t,objective,step_inf,grad_l1,bound`.
    /// BP traces: `t,dual_bethe,step_inf,bound_thm2`.
    pub fn to_csv(&self) -> String {
        let mut out = String::new();
        out.push_str(Self::csv_header(self.kind));
        out.push('\n');
        for r in &self.records {
            let _ = match self.kind {
                TraceKind::MeanField => writeln!(
                    out,
                    "{},{:.17e},{:.17e},{:.17e},{:.17e}",
                    r.t, r.objective, r.step_inf, r.grad_l1, r.bound
                ),
                TraceKind::BeliefPropagation => {
                    writeln!(out, "{},{:.17e},{:.17e},{:.17e}", r.t, r.objective, r.step_inf, r.bound)
                }
            };
        }
        out
    }

    /// Parses either CSV layout. Lines starting with `#` are skipped.
    /// BP traces carry no gradient column, so `grad_l1` comes back as NaN.
    pub fn from_csv(text: &str) -> Result<Self> {
        let mut lines = text
            .lines()
            .enumerate()
            .filter(|(_, l)| !l.trim().is_empty() && !l.starts_with('#'));
        let (hline, header) = lines.next().ok_or_else(|| Error::parse(1, "empty trace"))?;
        let kind = match header.trim() {
            h if h == Self::csv_header(TraceKind::MeanField) => TraceKind::MeanField,
            h if h == Self::csv_header(TraceKind::BeliefPropagation) => TraceKind::BeliefPropagation,
            other => return Err(Error::parse(hline + 1, format!("unknown trace header `{other}`"))),
        };
        let mut trace = IterationTrace::new(kind, f64::NAN);
        for (idx, line) in lines {
            let cols: Vec<&str> = line.trim().split(',').collect();
            let expected = if kind == TraceKind::MeanField { 5 } else { 4 };
            if cols.len() != expected {
                return Err(Error::parse(idx + 1, format!("expected {expected} columns")));
            }
            let num = |s: &str| {
                s.parse::<f64>()
                    .map_err(|_| Error::parse(idx + 1, format!("bad number `{s}`")))
            };
            let t = cols[0]
                .parse::<usize>()
                .map_err(|_| Error::parse(idx + 1, format!("bad step `{}`", cols[0])))?;
            let record = match kind {
                TraceKind::MeanField => TraceRecord {
                    t,
                    objective: num(cols[1])?,
                    step_inf: num(cols[2])?,
                    grad_l1: num(cols[3])?,
                    bound: num(cols[4])?,
                },
                TraceKind::BeliefPropagation => TraceRecord {
                    t,
                    objective: num(cols[1])?,
                    step_inf: num(cols[2])?,
                    grad_l1: f64::NAN,
                    bound: num(cols[3])?,
                },
            };
            trace.records.push(record);
        }
        Ok(trace)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn csv_round_trip() {
        let mut tr = IterationTrace::new(TraceKind::MeanField, 1.0);
        tr.records.push(TraceRecord {
            t: 1,
            objective: 1.25,
            step_inf: 0.1,
            grad_l1: 0.3,
            bound: 2.0 / 3.0,
        });
        let text = tr.to_csv();
        assert!(text.starts_with("t,objective,step_inf,grad_l1,bound\n1,"));
        let back = IterationTrace::from_csv(&format!("# meta\n{text}")).unwrap();
        assert_eq!(back.records, tr.records);

        let mut bp = IterationTrace::new(TraceKind::BeliefPropagation, 0.0);
        bp.records.push(TraceRecord {
            t: 3,
            objective: -0.5,
            step_inf: 1e-3,
            grad_l1: 7.0,
            bound: 4.0,
        });
        let back = IterationTrace::from_csv(&bp.to_csv()).unwrap();
        assert_eq!(back.kind, TraceKind::BeliefPropagation);
        assert_eq!(back.records[0].bound, 4.0);
        assert!(back.records[0].grad_l1.is_nan());
    }

    #[test]
    fn rejects_garbage() {
        assert!(IterationTrace::from_csv("").is_err());
        assert!(IterationTrace::from_csv("a,b\n").is_err());
        assert!(IterationTrace::from_csv("t,dual_bethe,step_inf,bound_thm2\n1,2\n").is_err());
    }
}
