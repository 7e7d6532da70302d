//! Trace metadata and the combined residual report.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use ferroprop::bp::bp_error_bound;
use ferroprop::meanfield::mf_error_bound;
use ferroprop::{IterationTrace, ModelNorms, TraceKind};

use crate::config::InitKind;
use crate::error::{self, CliError, Result};
use crate::plot::{line_plot, Scale, Series};

/// Slack on the residual sign and on the bound comparison.
pub const CHECK_TOL: f64 = 1e-9;

/// Metadata stored as the leading `#` line of every trace file.
#[derive(Debug, Clone, PartialEq)]
pub struct TraceHeader {
    pub algorithm: String,
    pub init: Option<InitKind>,
    pub model_hash: String,
    pub norms: ModelNorms,
    pub reference: Option<f64>,
    pub reference_source: Option<String>,
}

impl TraceHeader {
    pub fn to_line(&self) -> String {
        let init = match self.init {
            Some(InitKind::Ones) => "ones",
            Some(InitKind::Zeros) => "zeros",
            None => "none",
        };
        let reference = self.reference.map_or("none".to_string(), |v| format!("{v:e}"));
        format!(
            "# algo={} init={init} model={} n={} m={} j_l1={:e} h_l1={:e} j_linf={:e} reference={reference} reference_source={}",
            self.algorithm,
            self.model_hash,
            self.norms.n,
            self.norms.m,
            self.norms.j_l1,
            self.norms.h_l1,
            self.norms.j_linf,
            self.reference_source.as_deref().unwrap_or("none"),
        )
    }

    pub fn parse(line: &str) -> Result<Self> {
        let body = line
            .strip_prefix('#')
            .ok_or_else(|| CliError::invalid("trace is missing its `# algo=...` header line"))?;
        let mut fields = std::collections::BTreeMap::new();
        for token in body.split_whitespace() {
            let (k, v) = token
                .split_once('=')
                .ok_or_else(|| CliError::invalid(format!("bad header token `{token}`")))?;
            fields.insert(k, v);
        }
        let get = |k: &str| {
            fields
                .get(k)
                .copied()
                .ok_or_else(|| CliError::invalid(format!("trace header lacks `{k}`")))
        };
        let num = |k: &str| -> Result<f64> {
            let v = get(k)?;
            v.parse()
                .map_err(|_| CliError::invalid(format!("header field {k}: bad number `{v}`")))
        };
        let count = |k: &str| -> Result<usize> {
            let v = get(k)?;
            v.parse()
                .map_err(|_| CliError::invalid(format!("header field {k}: bad count `{v}`")))
        };
        let init = match get("init")? {
            "ones" => Some(InitKind::Ones),
            "zeros" => Some(InitKind::Zeros),
            _ => None,
        };
        let reference = match get("reference")? {
            "none" => None,
            _ => Some(num("reference")?),
        };
        let reference_source = match get("reference_source")? {
            "none" => None,
            s => Some(s.to_string()),
        };
        Ok(TraceHeader {
            algorithm: get("algo")?.to_string(),
            init,
            model_hash: get("model")?.to_string(),
            norms: ModelNorms {
                j_l1: num("j_l1")?,
                h_l1: num("h_l1")?,
                j_linf: num("j_linf")?,
                m: count("m")?,
                n: count("n")?,
            },
            reference,
            reference_source,
        })
    }
}

/// Worst-case objective gap after `t` steps from the all-ones start.
pub fn worst_case_bound(kind: TraceKind, norms: &ModelNorms, t: usize) -> Result<f64> {
    Ok(match kind {
        TraceKind::MeanField => mf_error_bound(norms, t)?,
        TraceKind::BeliefPropagation => bp_error_bound(norms, t, None)?.objective,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CheckStatus {
    Pass,
    Fail,
    NotApplicable,
}

impl CheckStatus {
    fn of(applicable: bool, ok: bool) -> Self {
        match (applicable, ok) {
            (false, _) => CheckStatus::NotApplicable,
            (true, true) => CheckStatus::Pass,
            (true, false) => CheckStatus::Fail,
        }
    }

    fn as_str(self) -> &'static str {
        match self {
            CheckStatus::Pass => "PASS",
            CheckStatus::Fail => "FAIL",
            CheckStatus::NotApplicable => "n/a",
        }
    }
}

/// Objective never decreases by more than rounding.
pub fn objective_monotone(trace: &IterationTrace) -> bool {
    let mut prev = trace.initial_objective;
    for r in &trace.records {
        if prev.is_finite() && r.objective < prev - 1e-12 * (1.0 + prev.abs()) {
            return false;
        }
        prev = r.objective;
    }
    true
}

/// `(residual ≥ −tol, residual ≤ bound + tol)` over every step.
pub fn bound_checks(trace: &IterationTrace, norms: &ModelNorms, reference: f64) -> Result<(bool, bool)> {
    let (mut nonnegative, mut within) = (true, true);
    for r in &trace.records {
        let gap = reference - r.objective;
        nonnegative &= gap >= -CHECK_TOL;
        within &= gap <= worst_case_bound(trace.kind, norms, r.t)? + CHECK_TOL;
    }
    Ok((nonnegative, within))
}

#[derive(Debug, Clone)]
pub struct LoadedTrace {
    pub label: String,
    pub header: TraceHeader,
    pub trace: IterationTrace,
}

pub fn load_trace(path: &Path) -> Result<LoadedTrace> {
    let text = error::read(path)?;
    let first = text.lines().next().unwrap_or("");
    let header = TraceHeader::parse(first).map_err(|e| CliError::invalid(format!("{}: {e}", path.display())))?;
    let trace = IterationTrace::from_csv(&text).map_err(|e| CliError::invalid(format!("{}: {e}", path.display())))?;
    Ok(LoadedTrace {
        label: header.algorithm.clone(),
        header,
        trace,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReportSummary {
    pub rows: usize,
    pub failures: Vec<String>,
    pub files: Vec<PathBuf>,
}

/// Writes the per-step density table and the check matrix to `out`. Labels in
/// `references` override the reference stored in a trace's header.
pub fn emit_report(traces: &[PathBuf], references: &[(String, f64)], out: &Path, plot: bool) -> Result<ReportSummary> {
    if traces.is_empty() {
        return Err(CliError::invalid("report needs at least one trace"));
    }
    let mut loaded = traces.iter().map(|p| load_trace(p)).collect::<Result<Vec<_>>>()?;
    let hash = loaded[0].header.model_hash.clone();
    if let Some(other) = loaded.iter().find(|l| l.header.model_hash != hash) {
        return Err(CliError::invalid(format!(
            "traces describe different models: {} vs {}",
            hash, other.header.model_hash
        )));
    }
    // repeated algorithms get a numeric suffix
    for k in 0..loaded.len() {
        let base = loaded[k].label.clone();
        let seen = loaded[..k].iter().filter(|l| l.header.algorithm == base).count();
        if seen > 0 {
            loaded[k].label = format!("{base}#{}", seen + 1);
        }
    }
    for (label, _) in references {
        if !loaded.iter().any(|l| &l.label == label) {
            return Err(CliError::invalid(format!("--reference names unknown trace `{label}`")));
        }
    }
    let reference_of = |l: &LoadedTrace| {
        references
            .iter()
            .find(|(label, _)| *label == l.label)
            .map(|(_, v)| (*v, "given".to_string()))
            .or_else(|| {
                l.header
                    .reference
                    .map(|v| (v, l.header.reference_source.clone().unwrap_or_else(|| "header".into())))
            })
    };

    let norms = loaded[0].header.norms;
    let n = norms.n as f64;
    let mut text = String::new();
    let _ = writeln!(text, "# model={hash} n={} m={}", norms.n, norms.m);
    for l in &loaded {
        match reference_of(l) {
            Some((v, src)) => {
                let _ = writeln!(text, "# reference[{}]={v:e} source={src}", l.label);
            }
            None => {
                let _ = writeln!(text, "# reference[{}]=none", l.label);
            }
        }
    }

    let mut header = vec!["t".to_string()];
    for l in &loaded {
        header.push(format!("{}_density", l.label));
        header.push(format!("{}_residual_density", l.label));
        header.push(format!("{}_bound_density", l.label));
    }
    let _ = writeln!(text, "{}", header.join(","));
    let rows = loaded.iter().map(|l| l.trace.records.len()).max().unwrap_or(0);
    for i in 0..rows {
        let mut cols = vec![(i + 1).to_string()];
        for l in &loaded {
            match l.trace.records.get(i) {
                Some(r) => {
                    cols.push(format!("{:.12e}", r.objective / n));
                    cols.push(
                        reference_of(l).map_or(String::new(), |(v, _)| format!("{:.12e}", (v - r.objective) / n)),
                    );
                    cols.push(format!("{:.12e}", worst_case_bound(l.trace.kind, &norms, r.t)? / n));
                }
                None => cols.extend([String::new(), String::new(), String::new()]),
            }
        }
        let _ = writeln!(text, "{}", cols.join(","));
    }

    let mut failures = Vec::new();
    let mut matrix = vec![
        vec!["check".to_string()],
        vec!["objective_monotone".into()],
        vec!["residual_nonnegative".into()],
        vec!["residual_within_bound".into()],
    ];
    for l in &loaded {
        // the guarantees are stated for runs from the all-ones start
        let from_ones = l.header.init == Some(InitKind::Ones);
        let monotone = CheckStatus::of(from_ones, objective_monotone(&l.trace));
        let (nonneg, within) = match reference_of(l) {
            Some((v, _)) if from_ones => {
                let (a, b) = bound_checks(&l.trace, &norms, v)?;
                (CheckStatus::of(true, a), CheckStatus::of(true, b))
            }
            _ => (CheckStatus::NotApplicable, CheckStatus::NotApplicable),
        };
        matrix[0].push(l.label.clone());
        for (row, status) in matrix[1..].iter_mut().zip([monotone, nonneg, within]) {
            if status == CheckStatus::Fail {
                failures.push(format!("{}: {}", l.label, row[0]));
            }
            row.push(status.as_str().to_string());
        }
    }
    text.push('\n');
    for row in &matrix {
        let _ = writeln!(text, "{}", row.join(","));
    }
    error::write(out, &text)?;
    let mut files = vec![out.to_path_buf()];

    if plot {
        let stem = out.with_extension("");
        let density: Vec<Series> = loaded
            .iter()
            .map(|l| {
                Series::new(
                    &l.label,
                    l.trace.records.iter().map(|r| (r.t as f64, r.objective / n)).collect(),
                )
            })
            .collect();
        let path = PathBuf::from(format!("{}_density.svg", stem.display()));
        error::write(
            &path,
            &line_plot(
                "Free energy density",
                "iteration",
                "objective / n",
                &density,
                Scale::LINEAR,
            ),
        )?;
        files.push(path);
        let residual: Vec<Series> = loaded
            .iter()
            .filter_map(|l| {
                reference_of(l).map(|(v, _)| {
                    Series::new(
                        &l.label,
                        l.trace
                            .records
                            .iter()
                            .map(|r| (r.t as f64, (v - r.objective) / n))
                            .collect(),
                    )
                })
            })
            .collect();
        if !residual.is_empty() {
            let path = PathBuf::from(format!("{}_residual.svg", stem.display()));
            error::write(
                &path,
                &line_plot(
                    "Residual density",
                    "iteration",
                    "residual / n",
                    &residual,
                    Scale::LOG_LOG,
                ),
            )?;
            files.push(path);
        }
    }

    Ok(ReportSummary { rows, failures, files })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn header() -> TraceHeader {
        TraceHeader {
            algorithm: "bp".into(),
            init: Some(InitKind::Ones),
            model_hash: "abc".into(),
            norms: ModelNorms {
                j_l1: 2.5,
                h_l1: 0.1,
                j_linf: 1.0 / 3.0,
                m: 4,
                n: 4,
            },
            reference: Some(-0.125),
            reference_source: Some("long".into()),
        }
    }

    #[test]
    fn header_round_trips() {
        let h = header();
        assert_eq!(TraceHeader::parse(&h.to_line()).unwrap(), h);
        let bare = TraceHeader {
            init: None,
            reference: None,
            reference_source: None,
            ..header()
        };
        assert_eq!(TraceHeader::parse(&bare.to_line()).unwrap(), bare);
    }

    #[test]
    fn header_errors() {
        assert!(TraceHeader::parse("t,objective").is_err());
        assert!(TraceHeader::parse("# algo=bp").is_err());
        let line = header().to_line().replace("n=4", "n=four");
        assert!(TraceHeader::parse(&line).is_err());
    }

    #[test]
    fn monotone_check() {
        let mut trace = IterationTrace::new(TraceKind::MeanField, 1.0);
        for (t, v) in [(1, 1.5), (2, 1.75), (3, 1.75)] {
            trace.records.push(ferroprop::TraceRecord {
                t,
                objective: v,
                step_inf: 0.0,
                grad_l1: 0.0,
                bound: 0.0,
            });
        }
        assert!(objective_monotone(&trace));
        trace.records[2].objective = 1.7;
        assert!(!objective_monotone(&trace));
    }
}
