//! Central-cut ellipsoid method over post-fixpoint sets.
//!
//! Every post-fixpoint `ν ≤ φ(ν)` of the monotone BP map lies below the maximal
//! fixed point `ν*`, so `ν*` maximizes `Σ ν` over the post-fixpoint set. Written
//! in cavity fields `λ = atanh ν` that set is convex (see
//! [`separation_oracle_bp`]), and the ellipsoid method reaches `λ*` to accuracy
//! `ε` in `O(d² log(1/ε))` steps, independently of how slowly plain BP
//! converges. The mean-field program over `{x ∈ [0,1]^n : x ≤ tanh(Jx + h)}` is
//! convex as it stands, since `tanh` of a nonnegative affine function is concave.
//!
//! Both sets can be lower dimensional at zero field, so the solvers first add
//! a small uniform field and then bound the effect of that perturbation.

use std::fmt::Write as _;

use nalgebra::{DMatrix, DVector};

use crate::bp::{dual_bethe, phi, MessageSet};
use crate::error::{Error, Result};
use crate::meanfield::{mf_objective, ProductState};
use crate::model::IsingModel;

/// Halfspace `{y : normal · y ≤ offset}` containing the feasible set.
#[derive(Debug, Clone, PartialEq)]
pub struct Cut {
    pub normal: Vec<f64>,
    pub offset: f64,
}

impl Cut {
    /// `normal · y − offset`; positive when `y` is cut off.
    pub fn excess(&self, y: &[f64]) -> f64 {
        self.normal.iter().zip(y).map(|(a, b)| a * b).sum::<f64>() - self.offset
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SeparationResult {
    pub feasible: bool,
    /// Violated halfspace, present exactly when the query is infeasible.
    pub cut: Option<Cut>,
    /// Size of the worst violated constraint at the query, zero when feasible.
    pub violation: f64,
}

impl SeparationResult {
    fn feasible() -> Self {
        SeparationResult {
            feasible: true,
            cut: None,
            violation: 0.0,
        }
    }

    fn infeasible(cut: Cut, violation: f64) -> Self {
        SeparationResult {
            feasible: false,
            cut: Some(cut),
            violation,
        }
    }
}

/// Most violated coordinate of the unit box, as a cut.
fn box_cut(y: &[f64]) -> Option<SeparationResult> {
    scaled_box_cut(y, &vec![1.0; y.len()])
}

/// Upper end `Λ_{i→j} = h_i + Σ_{k∈∂i\j} J_ik` of the cavity-field box; every
/// post-fixpoint satisfies `atanh ν ≤ Λ` because `atanh(θ tanh λ) < J`.
pub fn cavity_field_bounds(model: &IsingModel) -> Vec<f64> {
    (0..model.num_directed())
        .map(|k| {
            let (src, dst) = model.directed_endpoints(k);
            model.fields()[src]
                + model
                    .neighbors(src)
                    .iter()
                    .filter(|nb| nb.node != dst)
                    .map(|nb| model.edges()[nb.edge].coupling)
                    .sum::<f64>()
        })
        .collect()
}

/// `atanh(θ tanh λ)` and its derivative `θ / (1 + (1 − θ²) sinh² λ)`.
#[inline]
fn cavity_term(theta: f64, lambda: f64) -> (f64, f64) {
    let s = lambda.sinh();
    (
        (theta * lambda.tanh()).atanh(),
        theta / (1.0 + (1.0 - theta * theta) * s * s),
    )
}

/// Separation for the post-fixpoint set in cavity-field coordinates
/// `λ = atanh ν`:
///
/// ```text
/// 0 ≤ λ_{i→j} ≤ Λ_{i→j},   λ_{i→j} ≤ h_i + Σ_{k∈∂i\j} atanh(θ_ik tanh λ_{k→i}).
/// ```
///
/// The map `φ` is not concave in `ν` once a node has two incoming messages
/// (`(a + b)/(1 + ab)` is smaller at `(½, ½)` than at `(0.9, 0.1)` and `(0.1, 0.9)`),
/// so the post-fixpoint set is in general not convex in message coordinates.
/// Each `atanh(θ tanh λ)` is concave for `λ ≥ 0`, which makes every constraint
/// above convex; its linearization at the query is a valid cut. `tanh` maps
/// this set onto `{ν ≥ 0 : ν ≤ φ(ν)}` and preserves the coordinate order, so
/// the top element is still the maximal fixed point.
///
/// Box violations are returned first as coordinate cuts.
///
/// # Panics
/// If `lambda.len() != 2m`.
pub fn separation_oracle_bp(model: &IsingModel, lambda: &[f64]) -> SeparationResult {
    assert_eq!(lambda.len(), model.num_directed(), "cavity field vector length");
    let upper = cavity_field_bounds(model);
    if let Some(cut) = scaled_box_cut(lambda, &upper) {
        return cut;
    }
    let thetas = model.thetas();
    let mut worst: Option<(usize, f64)> = None;
    for k in 0..lambda.len() {
        let (src, dst) = model.directed_endpoints(k);
        let rhs: f64 = model.fields()[src]
            + model
                .neighbors(src)
                .iter()
                .filter(|nb| nb.node != dst)
                .map(|nb| cavity_term(thetas[nb.edge], lambda[model.directed_index(nb.edge, nb.node)]).0)
                .sum::<f64>();
        let slack = lambda[k] - rhs;
        if slack > 0.0 && worst.is_none_or(|w| slack > w.1) {
            worst = Some((k, slack));
        }
    }
    let Some((k, slack)) = worst else {
        return SeparationResult::feasible();
    };
    let (src, dst) = model.directed_endpoints(k);
    let mut normal = vec![0.0; lambda.len()];
    normal[k] = 1.0;
    for nb in model.neighbors(src).iter().filter(|nb| nb.node != dst) {
        let incoming = model.directed_index(nb.edge, nb.node);
        normal[incoming] -= cavity_term(thetas[nb.edge], lambda[incoming]).1;
    }
    let offset = normal.iter().zip(lambda).map(|(a, b)| a * b).sum::<f64>() - slack;
    SeparationResult::infeasible(Cut { normal, offset }, slack)
}

/// Most violated bound of the box `[0, upper]`, as a cut.
fn scaled_box_cut(y: &[f64], upper: &[f64]) -> Option<SeparationResult> {
    let mut worst: Option<(usize, f64, bool)> = None;
    for (k, (&v, &u)) in y.iter().zip(upper).enumerate() {
        let (excess, above) = if v < 0.0 { (-v, false) } else { (v - u, true) };
        if excess > 0.0 && worst.is_none_or(|w| excess > w.1) {
            worst = Some((k, excess, above));
        }
    }
    worst.map(|(k, excess, above)| {
        let mut normal = vec![0.0; y.len()];
        normal[k] = if above { 1.0 } else { -1.0 };
        let offset = if above { upper[k] } else { 0.0 };
        SeparationResult::infeasible(Cut { normal, offset }, excess)
    })
}

/// Jacobian row `∂φ_k/∂ν` of the BP map:
/// `∂φ_{i→j}/∂ν_{l→i} = (1 − φ_{i→j}²) θ_il / (1 − θ_il² ν_{l→i}²)` for `l ∈ ∂i \ j`.
pub fn phi_gradient(model: &IsingModel, nu: &[f64], k: usize) -> Vec<f64> {
    let phi_k = phi(model, nu)[k];
    let (src, dst) = model.directed_endpoints(k);
    let thetas = model.thetas();
    let mut grad = vec![0.0; nu.len()];
    let outer = 1.0 - phi_k * phi_k;
    for nb in model.neighbors(src).iter().filter(|nb| nb.node != dst) {
        let incoming = model.directed_index(nb.edge, nb.node);
        let theta = thetas[nb.edge];
        let x = theta * nu[incoming];
        grad[incoming] += outer * theta / (1.0 - x * x);
    }
    grad
}

/// Separation for `{x ∈ [0,1]^n : x ≤ tanh(Jx + h)}`. The cut for the most
/// violated `g_i(x) = x_i − tanh((Jx + h)_i) > 0` is its linearization, valid
/// because `g_i` is convex on the box.
///
/// # Panics
/// If `x.len() != n`.
pub fn separation_oracle_mf(model: &IsingModel, x: &[f64]) -> SeparationResult {
    assert_eq!(x.len(), model.n(), "state vector length");
    if let Some(cut) = box_cut(x) {
        return cut;
    }
    let mut worst = (0, f64::NEG_INFINITY, 0.0);
    for i in 0..model.n() {
        let t = (model.coupling_dot(i, x) + model.fields()[i]).tanh();
        let slack = x[i] - t;
        if slack > worst.1 {
            worst = (i, slack, t);
        }
    }
    let (i, slack, t) = worst;
    if !(slack > 0.0) {
        return SeparationResult::feasible();
    }
    let mut normal = vec![0.0; x.len()];
    normal[i] = 1.0;
    for nb in model.neighbors(i) {
        normal[nb.node] -= (1.0 - t * t) * model.edges()[nb.edge].coupling;
    }
    let offset = normal.iter().zip(x).map(|(a, b)| a * b).sum::<f64>() - slack;
    SeparationResult::infeasible(Cut { normal, offset }, slack)
}

/// One solver step for the progress log.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProgressRecord {
    pub step: usize,
    pub feasible: bool,
    /// Best objective so far; `-∞` before the first feasible center.
    pub objective_best: f64,
    pub violation: f64,
}

#[derive(Debug, Clone)]
pub struct EllipsoidState {
    /// Center `x` of `{y : (y − x)ᵀ A⁻¹ (y − x) ≤ 1}`.
    pub center: Vec<f64>,
    /// Shape matrix `A`, kept symmetric positive definite.
    pub shape: DMatrix<f64>,
    pub steps: usize,
    pub best_point: Option<Vec<f64>>,
    pub best_value: f64,
    /// Smallest certified upper bound `c·x + √(cᵀAc)` on the optimum seen.
    pub upper_bound: f64,
    /// Times the ellipsoid was re-inflated after losing positive definiteness.
    pub restarts: usize,
    pub progress: Vec<ProgressRecord>,
}

impl EllipsoidState {
    fn new(center: Vec<f64>, radius: f64) -> Self {
        let d = center.len();
        EllipsoidState {
            center,
            shape: DMatrix::identity(d, d) * (radius * radius),
            steps: 0,
            best_point: None,
            best_value: f64::NEG_INFINITY,
            upper_bound: f64::INFINITY,
            restarts: 0,
            progress: Vec::new(),
        }
    }

    /// Certified optimality gap of the best feasible point.
    pub fn gap(&self) -> f64 {
        (self.upper_bound - self.best_value).max(0.0)
    }

    /// `step,feasible,objective_best,violation`.
    pub fn progress_csv(&self) -> String {
        let mut out = String::from("step,feasible,objective_best,violation\n");
        for r in &self.progress {
            let _ = writeln!(
                out,
                "{},{},{:.17e},{:.17e}",
                r.step, r.feasible as u8, r.objective_best, r.violation
            );
        }
        out
    }

    /// Central cut through the center keeping `{y : a·(y − x) ≤ 0}`.
    /// Returns false when `aᵀAa` is no longer positive.
    fn cut(&mut self, a: &[f64]) -> bool {
        let d = self.center.len();
        let a = DVector::from_column_slice(a);
        let aa = &self.shape * &a;
        let quad = a.dot(&aa);
        if !(quad > 0.0 && quad.is_finite()) {
            return false;
        }
        let b = aa / quad.sqrt();
        let df = d as f64;
        for (x, bk) in self.center.iter_mut().zip(b.iter()) {
            *x -= bk / (df + 1.0);
        }
        if d == 1 {
            self.shape[(0, 0)] /= 4.0;
            return true;
        }
        self.shape.ger(-2.0 / (df + 1.0), &b, &b, 1.0);
        self.shape *= df * df / (df * df - 1.0);
        for r in 0..d {
            for c in r + 1..d {
                let v = 0.5 * (self.shape[(r, c)] + self.shape[(c, r)]);
                self.shape[(r, c)] = v;
                self.shape[(c, r)] = v;
            }
        }
        true
    }

    /// Replaces the ellipsoid by a ball around the current center that
    /// contains it.
    fn reinflate(&mut self) {
        let d = self.center.len();
        let trace = self.shape.trace().abs().max(f64::MIN_POSITIVE);
        self.shape = DMatrix::identity(d, d) * (4.0 * trace);
        self.restarts += 1;
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EllipsoidOptions {
    /// Initial center; the box midpoint `½·1` when `None`.
    pub center: Option<Vec<f64>>,
    /// Initial ball radius `R`.
    pub radius: f64,
    /// Radius `r` of a ball known to lie inside the feasible set, used only for
    /// the default step budget.
    pub inner_radius: f64,
    /// Stop once the certified gap `UB − best` is at most this.
    pub target_gap: f64,
    /// Step budget; [`default_budget`] when `None`.
    pub max_steps: Option<usize>,
}

impl EllipsoidOptions {
    /// Ball of radius `2√d` around the midpoint of `[0,1]^d`.
    pub fn unit_box(d: usize, inner_radius: f64, target_gap: f64) -> Self {
        EllipsoidOptions {
            center: None,
            radius: 2.0 * (d as f64).sqrt(),
            inner_radius,
            target_gap,
            max_steps: None,
        }
    }
}

/// `⌈2d² (ln(R/r) + ln(2d/gap))⌉`: steps after which a central-cut ellipsoid
/// is guaranteed to reach `gap` for an objective with range at most `d`.
pub fn default_budget(d: usize, radius: f64, inner_radius: f64, target_gap: f64) -> usize {
    let d = d.max(1) as f64;
    let logs = (radius / inner_radius).ln().max(0.0) + (2.0 * d / target_gap).ln().max(0.0);
    (2.0 * d * d * logs).ceil() as usize
}

/// Maximizes `objective · y` over the convex set described by `oracle`.
///
/// Infeasible centers are cut with the oracle's halfspace and feasible ones
/// with the objective, both through the center. The run stops once the
/// certified gap reaches `target_gap` or the budget is spent, and returns the
/// best feasible center.
pub fn ellipsoid_maximize(
    oracle: impl Fn(&[f64]) -> SeparationResult,
    objective: &[f64],
    opts: &EllipsoidOptions,
) -> Result<(Vec<f64>, EllipsoidState)> {
    let d = objective.len();
    if d == 0 {
        return Err(Error::InvalidParameter("dimension must be positive".into()));
    }
    if !(opts.radius > 0.0 && opts.target_gap > 0.0 && opts.inner_radius > 0.0) {
        return Err(Error::InvalidParameter(
            "radius, inner radius and target gap must be positive".into(),
        ));
    }
    let center = opts.center.clone().unwrap_or_else(|| vec![0.5; d]);
    if center.len() != d {
        return Err(Error::LengthMismatch {
            expected: d,
            got: center.len(),
        });
    }
    let max_steps = opts
        .max_steps
        .unwrap_or_else(|| default_budget(d, opts.radius, opts.inner_radius, opts.target_gap));
    let c = DVector::from_column_slice(objective);
    let neg_c: Vec<f64> = objective.iter().map(|v| -v).collect();
    let mut state = EllipsoidState::new(center, opts.radius);

    for step in 1..=max_steps {
        state.steps = step;
        let result = oracle(&state.center);
        let value = c.dot(&DVector::from_column_slice(&state.center));
        if result.feasible && value > state.best_value {
            state.best_value = value;
            state.best_point = Some(state.center.clone());
        }
        state.progress.push(ProgressRecord {
            step,
            feasible: result.feasible,
            objective_best: state.best_value,
            violation: result.violation,
        });
        // every feasible point beating the incumbent stays inside the ellipsoid
        let reach = c.dot(&(&state.shape * &c)).max(0.0).sqrt();
        state.upper_bound = state.upper_bound.min(value + reach);
        if state.best_point.is_some() && state.upper_bound - state.best_value <= opts.target_gap {
            break;
        }
        let normal = match (&result.cut, result.feasible) {
            (_, true) => &neg_c,
            (Some(cut), false) => &cut.normal,
            (None, false) => {
                return Err(Error::InvalidParameter(
                    "separation oracle reported infeasible without a cut".into(),
                ))
            }
        };
        let mut ok = state.cut(normal);
        if ok && step % d == 0 {
            ok = state.shape.clone().cholesky().is_some();
        }
        if !ok {
            state.reinflate();
        }
    }
    match state.best_point.clone() {
        Some(best) => Ok((best, state)),
        None => Err(Error::NoFeasiblePoint { steps: state.steps }),
    }
}

/// Detailed output of the perturbed-field solvers.
#[derive(Debug, Clone)]
pub struct ExponentialSolution<S> {
    pub solution: S,
    /// Objective on the original (unperturbed) model.
    pub value: f64,
    /// Uniform field added before solving.
    pub perturbation: f64,
    pub state: Option<EllipsoidState>,
}

fn check_epsilon(epsilon: f64) -> Result<()> {
    if !(epsilon > 0.0 && epsilon.is_finite()) {
        return Err(Error::InvalidParameter(format!("epsilon {epsilon} must be positive")));
    }
    Ok(())
}

/// [`solve_bethe_detailed`] returning only the messages and their dual Bethe value.
pub fn solve_bethe_exponential(model: &IsingModel, epsilon: f64) -> Result<(MessageSet, f64)> {
    let s = solve_bethe_detailed(model, epsilon, None)?;
    Ok((s.solution, s.value))
}

/// Messages whose dual Bethe free energy is within `epsilon` of the value at
/// the maximal fixed point.
///
/// A field `B = ε/(4n)` is added at every node and `Σλ` is maximized over the
/// perturbed post-fixpoint set in cavity-field coordinates to a certified gap
/// of `ε/2`. Every post-fixpoint lies below the perturbed maximal fixed point
/// and `tanh` is 1-Lipschitz, so the gap bounds `‖ν*(B) − ν‖₁`, and
/// `|∇Φ*|∞ ≤ 1` turns that into an objective bound. Shifting all fields by `B`
/// moves both the dual objective at any point and the optimal value by at most
/// `nB`, for a total error of at most `ε`.
pub fn solve_bethe_detailed(
    model: &IsingModel,
    epsilon: f64,
    max_steps: Option<usize>,
) -> Result<ExponentialSolution<MessageSet>> {
    check_epsilon(epsilon)?;
    if model.m() == 0 {
        let messages = MessageSet::new(Vec::new());
        let value = dual_bethe(model, &messages)?;
        return Ok(ExponentialSolution {
            solution: messages,
            value,
            perturbation: 0.0,
            state: None,
        });
    }
    let perturbation = epsilon / (4.0 * model.n() as f64);
    let perturbed = model.shifted_field(perturbation);
    let upper = cavity_field_bounds(&perturbed);
    let d = upper.len();
    let opts = EllipsoidOptions {
        center: Some(upper.iter().map(|u| 0.5 * u).collect()),
        radius: upper.iter().map(|u| u * u).sum::<f64>().sqrt(),
        // [0, h_min]^d is feasible
        inner_radius: 0.5 * perturbed.min_field(),
        target_gap: 0.5 * epsilon,
        max_steps,
    };
    let objective = vec![1.0; d];
    let (lambda, state) = ellipsoid_maximize(|y| separation_oracle_bp(&perturbed, y), &objective, &opts)?;
    let messages = MessageSet::new(lambda.iter().map(|l| l.tanh()).collect());
    let value = dual_bethe(model, &messages)?;
    Ok(ExponentialSolution {
        solution: messages,
        value,
        perturbation,
        state: Some(state),
    })
}

/// [`solve_mf_detailed`] returning only the state and its mean-field value.
pub fn solve_mf_exponential(model: &IsingModel, epsilon: f64) -> Result<(ProductState, f64)> {
    let s = solve_mf_detailed(model, epsilon, None)?;
    Ok((s.solution, s.value))
}

/// Product state whose mean-field objective is within `epsilon` of the
/// global maximum.
///
/// Same scheme as [`solve_bethe_detailed`] over `{x ∈ [0,1]^n : x ≤ tanh(Jx + h)}`
/// with `B = ε/(4n)`. On that set the mean-field gradient lies in
/// `[0, L]` with `L = max_i (Σ_j J_ij + h_i) + B`, so the ℓ1 target is
/// `ε/(2 max(1, L))`.
pub fn solve_mf_detailed(
    model: &IsingModel,
    epsilon: f64,
    max_steps: Option<usize>,
) -> Result<ExponentialSolution<ProductState>> {
    check_epsilon(epsilon)?;
    let n = model.n();
    let perturbation = epsilon / (4.0 * n as f64);
    let perturbed = model.shifted_field(perturbation);
    let ones = vec![1.0; n];
    let lipschitz = (0..n)
        .map(|i| model.coupling_dot(i, &ones) + perturbed.fields()[i])
        .fold(1.0, f64::max);
    let mut opts = EllipsoidOptions::unit_box(n, 0.5 * perturbed.min_field().tanh(), 0.5 * epsilon / lipschitz);
    opts.max_steps = max_steps;
    let (x, state) = ellipsoid_maximize(|y| separation_oracle_mf(&perturbed, y), &ones, &opts)?;
    let value = mf_objective(model, &x)?;
    Ok(ExponentialSolution {
        solution: ProductState::new(x),
        value,
        perturbation,
        state: Some(state),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bp::bp_iterate;
    use crate::model::load_model;
    use crate::numeric::l1_distance;
    use crate::topology::{generate_topology, FieldSpec, Topology};
    use crate::IterateOptions;

    #[test]
    fn unit_box_linear_program() {
        let opts = EllipsoidOptions::unit_box(2, 0.5, 1e-9);
        let (x, state) = ellipsoid_maximize(box_only, &[1.0, 1.0], &opts).unwrap();
        assert!(state.gap() <= 1e-9);
        assert!(2.0 - (x[0] + x[1]) <= 1e-9);
        assert!(x.iter().all(|v| (0.0..=1.0).contains(v)));
    }

    fn box_only(y: &[f64]) -> SeparationResult {
        box_cut(y).unwrap_or_else(SeparationResult::feasible)
    }

    #[test]
    fn one_dimensional_interval() {
        let opts = EllipsoidOptions::unit_box(1, 0.5, 1e-12);
        let (x, _) = ellipsoid_maximize(box_only, &[-1.0], &opts).unwrap();
        assert!(x[0].abs() <= 1e-12);
    }

    #[test]
    fn best_objective_never_decreases() {
        let m = generate_topology(Topology::Cycle { n: 4 }, 0.3, FieldSpec::Uniform(0.5), 0).unwrap();
        let opts = EllipsoidOptions::unit_box(8, 0.2, 1e-8);
        let (_, state) = ellipsoid_maximize(|y| separation_oracle_bp(&m, y), &[1.0; 8], &opts).unwrap();
        let best: Vec<f64> = state.progress.iter().map(|r| r.objective_best).collect();
        assert!(best.windows(2).all(|w| w[1] >= w[0]));
        assert!(state
            .progress_csv()
            .starts_with("step,feasible,objective_best,violation\n1,"));
    }

    #[test]
    fn infeasible_everywhere() {
        let never = |y: &[f64]| {
            SeparationResult::infeasible(
                Cut {
                    normal: vec![1.0; y.len()],
                    offset: -10.0,
                },
                1.0,
            )
        };
        let mut opts = EllipsoidOptions::unit_box(2, 0.1, 1e-6);
        opts.max_steps = Some(50);
        assert!(matches!(
            ellipsoid_maximize(never, &[1.0, 0.0], &opts),
            Err(Error::NoFeasiblePoint { steps: 50 })
        ));
    }

    #[test]
    fn bp_oracle_examples() {
        let m = load_model("n 2\nnode 0 0.4\nnode 1 0.4\nedge 0 1 1\n").unwrap();
        assert!(separation_oracle_bp(&m, &[0.0, 0.0]).feasible);
        let r = separation_oracle_bp(&m, &[1.2, 0.0]);
        assert_eq!(r.cut.unwrap().offset, 0.4);
        let zero_field = load_model("n 2\nedge 0 1 1\n").unwrap();
        let r = separation_oracle_bp(&zero_field, &[1.0, 1.0]);
        assert!(!r.feasible);
        assert_eq!(r.violation, 1.0);
        // leaf messages are constant, so the cut is a coordinate bound at 0
        let cut = r.cut.unwrap();
        assert_eq!(cut.offset, 0.0);
        assert_eq!(cut.normal.iter().filter(|v| **v != 0.0).count(), 1);
    }

    #[test]
    fn message_space_post_set_is_not_convex() {
        let m = load_model("n 4\nnode 1 3\nnode 2 3\nnode 3 3\nedge 0 1 3\nedge 0 2 3\nedge 0 3 3\n").unwrap();
        let slot = |s, d| m.directed_between(s, d).unwrap();
        let point = |a: f64, b: f64| {
            let mut nu = vec![0.0; m.num_directed()];
            nu[slot(1, 0)] = a;
            nu[slot(2, 0)] = b;
            nu[slot(0, 3)] = crate::bp::bp_step(&m, &MessageSet::new(nu.clone())).as_slice()[slot(0, 3)];
            nu
        };
        let (p, q) = (point(0.9, 0.1), point(0.1, 0.9));
        let mid: Vec<f64> = p.iter().zip(&q).map(|(x, y)| 0.5 * (x + y)).collect();
        let post = |nu: &[f64]| {
            crate::bp::region_membership(&m, &MessageSet::new(nu.to_vec()))
                .unwrap()
                .slack
                .iter()
                .all(|s| *s >= 0.0)
        };
        assert!(post(&p) && post(&q));
        assert!(!post(&mid));
        // the same three points in cavity fields
        let fields = |nu: &[f64]| nu.iter().map(|v| v.atanh()).collect::<Vec<f64>>();
        assert!(separation_oracle_bp(&m, &fields(&p)).feasible);
        assert!(separation_oracle_bp(&m, &fields(&q)).feasible);
        let (lp, lq) = (fields(&p), fields(&q));
        let lmid: Vec<f64> = lp.iter().zip(&lq).map(|(x, y)| 0.5 * (x + y)).collect();
        assert!(separation_oracle_bp(&m, &lmid).feasible);
    }

    #[test]
    fn bp_cuts_separate_fixed_point() {
        let m = generate_topology(Topology::Grid { rows: 2, cols: 3 }, 0.7, FieldSpec::Uniform(0.3), 0).unwrap();
        let (star, _) = bp_iterate(&m, &IterateOptions::default().with_tol(1e-14)).unwrap();
        let star: Vec<f64> = star.as_slice().iter().map(|v| v.atanh()).collect();
        let mut cuts = 0;
        for s in 0..50 {
            let query: Vec<f64> = star
                .iter()
                .enumerate()
                .map(|(k, v)| v + 0.05 * ((k * 7 + s * 13) % 11) as f64 - 0.1)
                .collect();
            if let Some(cut) = separation_oracle_bp(&m, &query).cut {
                cuts += 1;
                assert!(cut.excess(&query) > 0.0);
                assert!(cut.excess(&star) <= 1e-12);
            }
        }
        assert!(cuts > 25);
    }

    #[test]
    fn phi_gradient_matches_finite_differences() {
        let m = generate_topology(Topology::Grid { rows: 2, cols: 3 }, 0.9, FieldSpec::Uniform(0.2), 0).unwrap();
        let nu: Vec<f64> = (0..m.num_directed())
            .map(|k| 0.1 + 0.8 * ((k * 37) % 17) as f64 / 17.0)
            .collect();
        let step = 1e-6;
        for k in 0..m.num_directed() {
            let g = phi_gradient(&m, &nu, k);
            for l in 0..nu.len() {
                let (mut up, mut down) = (nu.clone(), nu.clone());
                up[l] += step;
                down[l] -= step;
                let fd = (phi(&m, &up)[k] - phi(&m, &down)[k]) / (2.0 * step);
                assert!((fd - g[l]).abs() < 1e-8, "k = {k}, l = {l}: {fd} vs {}", g[l]);
            }
        }
    }

    #[test]
    fn bethe_two_spin_matches_iteration() {
        let m = load_model("n 2\nnode 0 1\nnode 1 1\nedge 0 1 0.5\n").unwrap();
        let (reference, _) = bp_iterate(&m, &IterateOptions::default().with_tol(1e-13)).unwrap();
        let (nu, value) = solve_bethe_exponential(&m, 1e-9).unwrap();
        assert!(l1_distance(nu.as_slice(), reference.as_slice()) <= 1e-6);
        assert!((value - dual_bethe(&m, &reference).unwrap()).abs() <= 1e-9);
    }

    #[test]
    fn bethe_zero_field_cycle() {
        let beta = 0.5f64.atanh();
        let n = 5;
        let m = generate_topology(Topology::Cycle { n }, beta, FieldSpec::default(), 0).unwrap();
        let eps = 1e-10;
        let (_, value) = solve_bethe_exponential(&m, eps).unwrap();
        let closed = n as f64 * (2f64.ln() + beta.cosh().ln());
        assert!((value - closed).abs() <= eps);
    }

    #[test]
    fn bethe_without_edges() {
        let m = load_model("n 2\nnode 0 0.5\n").unwrap();
        let (nu, value) = solve_bethe_exponential(&m, 1e-8).unwrap();
        assert!(nu.is_empty());
        assert!((value - (2.0 * 0.5f64.cosh()).ln() - 2f64.ln()).abs() < 1e-14);
        assert!(solve_bethe_exponential(&m, 0.0).is_err());
    }

    #[test]
    fn mf_single_node() {
        let m = load_model("n 1\nnode 0 1\n").unwrap();
        let (x, _) = solve_mf_exponential(&m, 1e-9).unwrap();
        assert!((x.x[0] - 1f64.tanh()).abs() < 1e-6);
    }

    #[test]
    fn mf_two_spin() {
        let m = load_model("n 2\nedge 0 1 2\n").unwrap();
        let (x, value) = solve_mf_exponential(&m, 1e-9).unwrap();
        for v in &x.x {
            assert!((v - 0.957_504_024_077).abs() < 1e-6);
        }
        let root = 0.957_504_024_077_f64;
        assert!((value - mf_objective(&m, &[root, root]).unwrap()).abs() < 1e-9);
    }

    #[test]
    fn mf_regular_high_temperature() {
        let m = generate_topology(
            Topology::RandomRegular { n: 8, degree: 3 },
            1.0 / 3.0,
            FieldSpec::default(),
            1,
        )
        .unwrap();
        let eps = 1e-6;
        let (x, value) = solve_mf_exponential(&m, eps).unwrap();
        assert!((value - 8.0 * 2f64.ln()).abs() <= eps);
        assert!(x.x.iter().all(|v| *v >= 0.0 && *v < 0.05));
    }
}
