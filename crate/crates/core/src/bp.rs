//! Loopy belief propagation in the `ν = tanh(λ′)` parameterization.
//!
//! The update for a directed edge `i → j` is
//!
//! ```text
//! φ(ν)_{i→j} = tanh(h_i + Σ_{k ∈ ∂i \ j} atanh(θ_ik ν_{k→i})),   θ_ik = tanh(J_ik)
//! ```
//!
//! and the free-energy estimate attached to any message vector is the dual
//! Bethe free energy `Φ*(ν) = Σ_i F_i(ν) − Σ_{i∼j} F_ij(ν)`. Started from all
//! ones, the iterates decrease coordinate-wise to the maximal fixed point `ν*`
//! while `Φ*` increases.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::model::{model_norms, IsingModel, ModelNorms};
use crate::numeric::{clamped_atanh, linf_distance, log_add_exp};
use crate::trace::{Init, IterateOptions, IterationTrace, TraceKind, TraceRecord};

pub use crate::local::{beliefs_from_messages, local_consistency_check, primal_bethe, EdgeStats, LocalDistribution};

const PAR_THRESHOLD: usize = 1 << 14;

/// Tolerance separating fixed points from strict pre/post-fixpoints.
pub const REGION_TOL: f64 = 1e-12;

/// One message per directed edge, indexed by [`IsingModel::directed_index`].
#[derive(Debug, Clone, PartialEq)]
pub struct MessageSet {
    nu: Vec<f64>,
}

impl MessageSet {
    pub fn new(nu: Vec<f64>) -> Self {
        MessageSet { nu }
    }

    pub fn ones(model: &IsingModel) -> Self {
        Self::new(vec![1.0; model.num_directed()])
    }

    pub fn zeros(model: &IsingModel) -> Self {
        Self::new(vec![0.0; model.num_directed()])
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.nu
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.nu
    }

    pub fn len(&self) -> usize {
        self.nu.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nu.is_empty()
    }

    /// `ν_{src→dst}`, if the edge exists.
    pub fn get(&self, model: &IsingModel, src: usize, dst: usize) -> Option<f64> {
        model.directed_between(src, dst).map(|d| self.nu[d])
    }

    /// `src,dst,nu` rows in slot order.
    pub fn to_csv(&self, model: &IsingModel) -> String {
        let mut out = String::from("src,dst,nu\n");
        for (d, v) in self.nu.iter().enumerate() {
            let (s, t) = model.directed_endpoints(d);
            out.push_str(&format!("{s},{t},{v:.17e}\n"));
        }
        out
    }
}

fn check_messages(model: &IsingModel, nu: &[f64], nonnegative: bool) -> Result<()> {
    if nu.len() != model.num_directed() {
        return Err(Error::LengthMismatch {
            expected: model.num_directed(),
            got: nu.len(),
        });
    }
    for (d, &v) in nu.iter().enumerate() {
        if !(v.abs() <= 1.0) {
            return Err(Error::Domain(format!("message {d} = {v} outside [-1, 1]")));
        }
        if nonnegative && v < 0.0 {
            return Err(Error::Domain(format!("message {d} = {v} is negative")));
        }
    }
    Ok(())
}

/// Writes `φ(ν)` for the messages leaving node `i` into `out`, in adjacency order.
#[inline]
fn node_update(model: &IsingModel, nu: &[f64], i: usize, scratch: &mut Scratch, mut emit: impl FnMut(usize, f64)) {
    let nbs = model.neighbors(i);
    let thetas = model.thetas();
    let Scratch { terms, suffix } = scratch;
    terms.clear();
    terms.extend(nbs.iter().map(|nb| {
        let incoming = model.directed_index(nb.edge, nb.node);
        clamped_atanh(thetas[nb.edge] * nu[incoming])
    }));
    // leave-one-out sums as prefix + suffix; every partial sum has
    // nonnegative terms on [0, 1], which keeps the update monotone in floating point
    let deg = terms.len();
    suffix.clear();
    suffix.resize(deg + 1, 0.0);
    for k in (0..deg).rev() {
        suffix[k] = terms[k] + suffix[k + 1];
    }
    let h = model.fields()[i];
    let mut prefix = 0.0;
    for (k, nb) in nbs.iter().enumerate() {
        let cavity = prefix + suffix[k + 1];
        emit(model.directed_index(nb.edge, i), (h + cavity).tanh());
        prefix += terms[k];
    }
}

#[derive(Default)]
struct Scratch {
    terms: Vec<f64>,
    suffix: Vec<f64>,
}

/// `φ(ν)` applied synchronously to every directed edge.
pub fn bp_step(model: &IsingModel, nu: &MessageSet) -> MessageSet {
    MessageSet::new(phi(model, nu.as_slice()))
}

pub(crate) fn phi(model: &IsingModel, nu: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; model.num_directed()];
    if model.num_directed() >= PAR_THRESHOLD {
        let per_node: Vec<Vec<(usize, f64)>> = (0..model.n())
            .into_par_iter()
            .map_init(Scratch::default, |scratch, i| {
                let mut local = Vec::with_capacity(model.degree(i));
                node_update(model, nu, i, scratch, |d, v| local.push((d, v)));
                local
            })
            .collect();
        for (d, v) in per_node.into_iter().flatten() {
            out[d] = v;
        }
    } else {
        let mut scratch = Scratch::default();
        for i in 0..model.n() {
            node_update(model, nu, i, &mut scratch, |d, v| out[d] = v);
        }
    }
    out
}

/// `log cosh J` for `J ≥ 0` without overflow.
#[inline]
fn log_cosh(j: f64) -> f64 {
    let a = j.abs();
    a + (-2.0 * a).exp().ln_1p() - std::f64::consts::LN_2
}

/// Dual Bethe free energy `Σ_i F_i(ν) − Σ_{i∼j} F_ij(ν)`.
///
/// `F_i` is evaluated as a log-sum-exp of the two field-signed products, so
/// large fields do not overflow. The `log cosh J` terms of `F_i` and `F_ij`
/// are combined per edge.
pub fn dual_bethe(model: &IsingModel, nu: &MessageSet) -> Result<f64> {
    let nu = nu.as_slice();
    check_messages(model, nu, false)?;
    let thetas = model.thetas();

    let mut total = 0.0;
    for i in 0..model.n() {
        let h = model.fields()[i];
        let (mut plus, mut minus) = (h, -h);
        for nb in model.neighbors(i) {
            let x = thetas[nb.edge] * nu[model.directed_index(nb.edge, nb.node)];
            plus += x.ln_1p();
            minus += (-x).ln_1p();
        }
        total += log_add_exp(plus, minus);
    }
    for (e, edge) in model.edges().iter().enumerate() {
        let arg = thetas[e] * nu[2 * e] * nu[2 * e + 1];
        if !(arg > -1.0) {
            return Err(Error::Domain(format!(
                "edge ({}, {}): 1 + θ ν ν = {} is not positive",
                edge.u,
                edge.v,
                1.0 + arg
            )));
        }
        total += log_cosh(edge.coupling) - arg.ln_1p();
    }
    if total.is_nan() {
        return Err(Error::Domain("dual Bethe free energy is undefined".into()));
    }
    Ok(total)
}

/// Gradient of the dual Bethe free energy,
///
/// ```text
/// ∂Φ*/∂ν_{i→j} = θ φ_{j→i} / (1 + θ ν_{i→j} φ_{j→i}) − θ ν_{j→i} / (1 + θ ν_{i→j} ν_{j→i})
/// ```
///
/// which is `1/(ν_{i→j} + 1/(θ φ_{j→i})) − 1/(ν_{i→j} + 1/(θ ν_{j→i}))` with
/// vanishing terms where `θ φ` or `θ ν` is zero. Requires `ν ≥ 0`.
pub fn dual_bethe_gradient(model: &IsingModel, nu: &MessageSet) -> Result<Vec<f64>> {
    check_messages(model, nu.as_slice(), true)?;
    let next = phi(model, nu.as_slice());
    Ok(gradient_given_phi(model, nu.as_slice(), &next))
}

pub(crate) fn gradient_given_phi(model: &IsingModel, nu: &[f64], next: &[f64]) -> Vec<f64> {
    let thetas = model.thetas();
    (0..nu.len())
        .map(|d| {
            let theta = thetas[d / 2];
            let reverse = d ^ 1;
            let own = nu[d];
            let updated = theta * next[reverse];
            let current = theta * nu[reverse];
            updated / (1.0 + own * updated) - current / (1.0 + own * current)
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Region {
    /// Both a pre- and a post-fixpoint (within [`REGION_TOL`]).
    FixedPoint,
    /// `φ(ν) ≤ ν`.
    Pre,
    /// `ν ≤ φ(ν)`.
    Post,
    Neither,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RegionReport {
    pub region: Region,
    /// `φ(ν) − ν` per directed edge.
    pub slack: Vec<f64>,
}

impl RegionReport {
    pub fn in_pre(&self) -> bool {
        matches!(self.region, Region::Pre | Region::FixedPoint)
    }

    pub fn in_post(&self) -> bool {
        matches!(self.region, Region::Post | Region::FixedPoint)
    }
}

/// Classifies nonnegative messages as pre-fixpoint (`φ(ν) ≤ ν`),
/// post-fixpoint (`ν ≤ φ(ν)`), fixed point, or neither.
pub fn region_membership(model: &IsingModel, nu: &MessageSet) -> Result<RegionReport> {
    check_messages(model, nu.as_slice(), true)?;
    let next = phi(model, nu.as_slice());
    let slack: Vec<f64> = next.iter().zip(nu.as_slice()).map(|(p, v)| p - v).collect();
    let pre = slack.iter().all(|&s| s <= REGION_TOL);
    let post = slack.iter().all(|&s| s >= -REGION_TOL);
    let region = match (pre, post) {
        (true, true) => Region::FixedPoint,
        (true, false) => Region::Pre,
        (false, true) => Region::Post,
        (false, false) => Region::Neither,
    };
    Ok(RegionReport { region, slack })
}

/// Runs synchronous BP. Each record stores `Φ*(ν^{(t)})`, the ℓ∞ step, the
/// ℓ1 norm of `∇Φ*(ν^{(t)})` and the `√(8mn(1 + ‖J‖∞)/t)` bound.
pub fn bp_iterate(model: &IsingModel, opts: &IterateOptions) -> Result<(MessageSet, IterationTrace)> {
    let mut nu = match &opts.init {
        Init::AllOnes => MessageSet::ones(model),
        Init::AllZeros => MessageSet::zeros(model),
        Init::Given(v) => MessageSet::new(v.clone()),
    };
    let norms = model_norms(model);
    let mut trace = IterationTrace::new(TraceKind::BeliefPropagation, dual_bethe(model, &nu)?);

    for t in 1..=opts.max_steps {
        let next = phi(model, nu.as_slice());
        if let Some(prev) = trace.records.last_mut() {
            prev.grad_l1 = l1(&gradient_given_phi(model, nu.as_slice(), &next));
        }
        let step_inf = linf_distance(&next, nu.as_slice());
        nu = MessageSet::new(next);
        trace.records.push(TraceRecord {
            t,
            objective: dual_bethe(model, &nu)?,
            step_inf,
            grad_l1: f64::NAN,
            bound: bp_error_bound(&norms, t, None)?.objective,
        });
        if step_inf < opts.tol {
            trace.converged = true;
            break;
        }
    }
    if let Some(last) = trace.records.last_mut() {
        let next = phi(model, nu.as_slice());
        last.grad_l1 = l1(&gradient_given_phi(model, nu.as_slice(), &next));
    }
    Ok((nu, trace))
}

fn l1(v: &[f64]) -> f64 {
    v.iter().map(|x| x.abs()).sum()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BpBound {
    /// `√(8 m n (1 + ‖J‖∞) / t)`, the objective gap after `t` steps from all ones.
    pub objective: f64,
    /// `2m(1 + ‖J‖∞) / (tanh(h_min) t)`, the ℓ1 message gap when every field is
    /// at least `h_min > 0`.
    pub message_l1: Option<f64>,
}

pub fn bp_error_bound(norms: &ModelNorms, t: usize, h_min: Option<f64>) -> Result<BpBound> {
    if t < 1 {
        return Err(Error::InvalidParameter("bound needs t >= 1".into()));
    }
    let (m, n, t) = (norms.m as f64, norms.n as f64, t as f64);
    let scale = 1.0 + norms.j_linf;
    let message_l1 = match h_min {
        Some(h) if h > 0.0 => Some(2.0 * m * scale / (h.tanh() * t)),
        _ => None,
    };
    Ok(BpBound {
        objective: (8.0 * m * n * scale / t).sqrt(),
        message_l1,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::topology::{generate_topology, FieldSpec, Topology};

    #[test]
    fn leaf_messages() {
        let m = IsingModel::new(3, &[(0, 1, 0.8), (1, 2, 0.8)], vec![0.0, 0.2, 0.0]).unwrap();
        let next = bp_step(&m, &MessageSet::ones(&m));
        assert_eq!(next.get(&m, 0, 1), Some(0.0));
        assert_eq!(next.get(&m, 2, 1), Some(0.0));
        let two = IsingModel::new(2, &[(0, 1, 1.3)], vec![0.7, 0.0]).unwrap();
        let nu = bp_step(&two, &MessageSet::ones(&two));
        assert_eq!(nu.get(&two, 0, 1), Some(0.7f64.tanh()));
        assert_eq!(bp_step(&two, &nu), nu);
    }

    #[test]
    fn cycle_messages_are_powers_of_theta() {
        let beta = 0.5f64.atanh();
        let m = generate_topology(Topology::Cycle { n: 6 }, beta, FieldSpec::default(), 0).unwrap();
        let mut nu = MessageSet::ones(&m);
        for _ in 0..3 {
            nu = bp_step(&m, &nu);
        }
        assert!(nu.as_slice().iter().all(|v| (v - 0.125).abs() < 1e-15));
    }

    #[test]
    fn dual_at_zero_messages() {
        let m = IsingModel::new(3, &[(0, 1, 0.4), (1, 2, 1.1)], vec![0.3, 0.0, 2.0]).unwrap();
        let expected: f64 = m.fields().iter().map(|h| (2.0 * h.cosh()).ln()).sum::<f64>()
            + m.edges().iter().map(|e| e.coupling.cosh().ln()).sum::<f64>();
        let got = dual_bethe(&m, &MessageSet::zeros(&m)).unwrap();
        assert!((got - expected).abs() < 1e-14);
    }

    #[test]
    fn dual_two_spin() {
        let m = IsingModel::new(2, &[(0, 1, 1.0)], vec![0.0, 0.0]).unwrap();
        let got = dual_bethe(&m, &MessageSet::zeros(&m)).unwrap();
        assert!((got - (4.0 * 1f64.cosh()).ln()).abs() < 1e-15);
        assert!((got - 1.820_075_191_602_918).abs() < 1e-14);
    }

    #[test]
    fn dual_survives_huge_fields() {
        let m = IsingModel::new(2, &[(0, 1, 30.0)], vec![800.0, 900.0]).unwrap();
        let v = dual_bethe(&m, &MessageSet::ones(&m)).unwrap();
        assert!(v.is_finite());
    }

    #[test]
    fn dual_rejects_out_of_range() {
        let m = IsingModel::new(2, &[(0, 1, 1.0)], vec![0.0, 0.0]).unwrap();
        assert!(matches!(
            dual_bethe(&m, &MessageSet::new(vec![1.5, 0.0])),
            Err(Error::Domain(_))
        ));
        assert!(matches!(
            dual_bethe_gradient(&m, &MessageSet::new(vec![-0.5, 0.0])),
            Err(Error::Domain(_))
        ));
    }

    #[test]
    fn gradient_at_all_ones_two_spin() {
        let m = IsingModel::new(2, &[(0, 1, 1.0)], vec![0.0, 0.0]).unwrap();
        let g = dual_bethe_gradient(&m, &MessageSet::ones(&m)).unwrap();
        let expected = -1.0 / (1.0 + 1.0 / 1f64.tanh());
        for v in g {
            assert!((v - expected).abs() < 1e-15);
            assert!((v - -0.432_332_358_381_693_6).abs() < 1e-15);
        }
    }

    #[test]
    fn gradient_vanishes_at_fixed_point() {
        let m = generate_topology(Topology::Grid { rows: 3, cols: 3 }, 0.6, FieldSpec::Uniform(0.2), 0).unwrap();
        let (nu, trace) = bp_iterate(&m, &IterateOptions::default().with_tol(1e-15)).unwrap();
        assert!(trace.converged);
        let g = dual_bethe_gradient(&m, &nu).unwrap();
        assert!(g.iter().all(|v| v.abs() < 1e-14));
    }

    #[test]
    fn regions() {
        let m = generate_topology(Topology::Cycle { n: 5 }, 0.7, FieldSpec::Uniform(0.1), 0).unwrap();
        assert_eq!(
            region_membership(&m, &MessageSet::ones(&m)).unwrap().region,
            Region::Pre
        );
        assert_eq!(
            region_membership(&m, &MessageSet::zeros(&m)).unwrap().region,
            Region::Post
        );
        let (nu, _) = bp_iterate(&m, &IterateOptions::default().with_tol(1e-13)).unwrap();
        let report = region_membership(&m, &nu).unwrap();
        assert_eq!(report.region, Region::FixedPoint);
        assert!(report.in_pre() && report.in_post());

        let mut mixed = MessageSet::ones(&m).into_vec();
        mixed[0] = 0.0;
        assert_eq!(
            region_membership(&m, &MessageSet::new(mixed)).unwrap().region,
            Region::Neither
        );
    }

    #[test]
    fn zero_field_zero_messages_is_fixed() {
        let m = generate_topology(Topology::Cycle { n: 4 }, 0.3, FieldSpec::default(), 0).unwrap();
        assert_eq!(
            region_membership(&m, &MessageSet::zeros(&m)).unwrap().region,
            Region::FixedPoint
        );
    }

    #[test]
    fn bound_examples() {
        let norms = ModelNorms {
            j_l1: 8.0,
            h_l1: 0.0,
            j_linf: 1.0,
            m: 4,
            n: 4,
        };
        let b = bp_error_bound(&norms, 8, None).unwrap();
        assert!((b.objective - 32f64.sqrt()).abs() < 1e-14);
        assert_eq!(b.message_l1, None);
        let quarter = bp_error_bound(&norms, 32, None).unwrap();
        assert!((quarter.objective - 0.5 * b.objective).abs() < 1e-14);
        let with_field = bp_error_bound(&norms, 10, Some(0.5)).unwrap();
        assert!((with_field.message_l1.unwrap() - 2.0 * 4.0 * 2.0 / (0.5f64.tanh() * 10.0)).abs() < 1e-14);
        assert!(bp_error_bound(&norms, 0, None).is_err());
    }

    #[test]
    fn message_csv() {
        let m = IsingModel::new(2, &[(0, 1, 1.0)], vec![0.0, 0.0]).unwrap();
        let csv = MessageSet::new(vec![0.5, 0.25]).to_csv(&m);
        assert_eq!(
            csv,
            "src,dst,nu\n0,1,5.00000000000000000e-1\n1,0,2.50000000000000000e-1\n"
        );
    }

    #[test]
    fn parallel_step_matches_sequential() {
        let m = generate_topology(Topology::Grid { rows: 70, cols: 70 }, 0.4, FieldSpec::Uniform(0.05), 0).unwrap();
        assert!(m.num_directed() >= PAR_THRESHOLD);
        let nu: Vec<f64> = (0..m.num_directed())
            .map(|d| ((d * 7919) % 1000) as f64 / 1000.0)
            .collect();
        let par = phi(&m, &nu);
        let mut seq = vec![0.0; m.num_directed()];
        let mut scratch = Scratch::default();
        for i in 0..m.n() {
            node_update(&m, &nu, i, &mut scratch, |d, v| seq[d] = v);
        }
        assert_eq!(par, seq);
    }
}
