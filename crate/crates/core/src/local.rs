//! Locally consistent pairwise pseudomarginals and the primal Bethe functional.

use crate::bp::MessageSet;
use crate::error::{Error, Result};
use crate::model::IsingModel;
use crate::numeric::{pair_cells, pair_entropy, spin_entropy};

/// Moments of one edge's pairwise table, oriented as the model's `(u, v)`, `u < v`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EdgeStats {
    pub mean_u: f64,
    pub mean_v: f64,
    pub corr: f64,
}

impl EdgeStats {
    /// `p(x_u, x_v) = (1 + m_u x_u + m_v x_v + c x_u x_v) / 4` in the order
    /// `(+,+), (+,-), (-,+), (-,-)`.
    pub fn cells(&self) -> [f64; 4] {
        pair_cells(self.mean_u, self.mean_v, self.corr)
    }
}

/// Node means plus one [`EdgeStats`] per model edge.
#[derive(Debug, Clone, PartialEq)]
pub struct LocalDistribution {
    pub node_means: Vec<f64>,
    pub edge_stats: Vec<EdgeStats>,
}

impl LocalDistribution {
    /// Independent couplings on every edge: `c = m_u m_v`.
    pub fn product(model: &IsingModel, means: &[f64]) -> Self {
        LocalDistribution {
            node_means: means.to_vec(),
            edge_stats: model
                .edges()
                .iter()
                .map(|e| EdgeStats {
                    mean_u: means[e.u],
                    mean_v: means[e.v],
                    corr: means[e.u] * means[e.v],
                })
                .collect(),
        }
    }
}

/// Reconstructs beliefs from messages.
///
/// Node means use `m_i = tanh(h_i + Σ_{k∈∂i} atanh(θ_ik ν_{k→i}))`. Each edge
/// table is the two-spin Gibbs measure `∝ exp(J x_u x_v + λ′_{u→v} x_u + λ′_{v→u} x_v)`
/// with `λ′ = atanh(ν)`, whose moments in terms of `a = ν_{u→v}`, `b = ν_{v→u}` are
///
/// ```text
/// E[x_u] = (a + θ b)/(1 + θ a b),  E[x_v] = (b + θ a)/(1 + θ a b),  E[x_u x_v] = (θ + a b)/(1 + θ a b).
/// ```
///
/// The result is locally consistent exactly when `ν` is a BP fixed point.
pub fn beliefs_from_messages(model: &IsingModel, nu: &MessageSet) -> Result<LocalDistribution> {
    let nu = nu.as_slice();
    if nu.len() != model.num_directed() {
        return Err(Error::LengthMismatch {
            expected: model.num_directed(),
            got: nu.len(),
        });
    }
    if let Some((d, v)) = nu.iter().enumerate().find(|(_, v)| !(v.abs() < 1.0)) {
        return Err(Error::Domain(format!("message {d} = {v}: beliefs need |ν| < 1")));
    }
    let thetas = model.thetas();
    let node_means = (0..model.n())
        .map(|i| {
            let field: f64 = model
                .neighbors(i)
                .iter()
                .map(|nb| (thetas[nb.edge] * nu[model.directed_index(nb.edge, nb.node)]).atanh())
                .sum();
            (model.fields()[i] + field).tanh()
        })
        .collect();
    let edge_stats = (0..model.m())
        .map(|e| {
            let (a, b, theta) = (nu[2 * e], nu[2 * e + 1], thetas[e]);
            let z = 1.0 + theta * a * b;
            EdgeStats {
                mean_u: (a + theta * b) / z,
                mean_v: (b + theta * a) / z,
                corr: (theta + a * b) / z,
            }
        })
        .collect();
    Ok(LocalDistribution { node_means, edge_stats })
}

/// Largest marginal mismatch `|p_ij(x_i) − p_i(x_i)|` over edges and signs,
/// plus the largest negative mass of any node or edge cell. Zero means the
/// distribution lies in the local polytope.
pub fn local_consistency_check(model: &IsingModel, dist: &LocalDistribution) -> f64 {
    let mut mismatch: f64 = 0.0;
    let mut negativity: f64 = 0.0;
    for &m in &dist.node_means {
        negativity = negativity.max(-(0.5 * (1.0 - m.abs())));
    }
    for (edge, stats) in model.edges().iter().zip(&dist.edge_stats) {
        // P(x = s) = (1 + s m)/2, so each sign differs by |Δm|/2
        mismatch = mismatch
            .max(0.5 * (stats.mean_u - dist.node_means[edge.u]).abs())
            .max(0.5 * (stats.mean_v - dist.node_means[edge.v]).abs());
        for p in stats.cells() {
            negativity = negativity.max(-p);
        }
    }
    mismatch + negativity
}

/// Tolerance on [`local_consistency_check`] accepted by [`primal_bethe`].
pub const POLYTOPE_TOL: f64 = 1e-9;

/// Primal Bethe functional
///
/// ```text
/// Σ_{i∼j} J_ij E[x_i x_j] + Σ_i h_i E[x_i] + Σ_{i∼j} H(x_i, x_j) − Σ_i (deg(i) − 1) H(x_i)
/// ```
///
/// over a locally consistent distribution. An isolated node contributes
/// `h_i m_i + H(x_i)`.
pub fn primal_bethe(model: &IsingModel, dist: &LocalDistribution) -> Result<f64> {
    if dist.node_means.len() != model.n() || dist.edge_stats.len() != model.m() {
        return Err(Error::LengthMismatch {
            expected: model.n() + model.m(),
            got: dist.node_means.len() + dist.edge_stats.len(),
        });
    }
    let violation = local_consistency_check(model, dist);
    if !(violation <= POLYTOPE_TOL) {
        return Err(Error::PolytopeViolation {
            violation,
            tolerance: POLYTOPE_TOL,
        });
    }
    let mut total = 0.0;
    for (i, &m) in dist.node_means.iter().enumerate() {
        let m = m.clamp(-1.0, 1.0);
        let degree = model.degree(i) as f64;
        total += model.fields()[i] * m - (degree - 1.0) * spin_entropy(m);
    }
    for (edge, s) in model.edges().iter().zip(&dist.edge_stats) {
        let cells = s.cells();
        // clip rounding-level negatives before taking logs
        let (a, b, c) = (s.mean_u, s.mean_v, s.corr);
        let entropy = if cells.iter().all(|&p| p >= 0.0) {
            pair_entropy(a, b, c)
        } else {
            cells.iter().map(|&p| crate::numeric::xlogx_neg(p.max(0.0))).sum()
        };
        total += edge.coupling * c + entropy;
    }
    Ok(total)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bp::{bp_iterate, dual_bethe};
    use crate::meanfield::mf_objective;
    use crate::topology::{generate_topology, FieldSpec, Topology};
    use crate::IterateOptions;

    #[test]
    fn zero_messages_give_two_spin_tables() {
        let m = IsingModel::new(3, &[(0, 1, 0.4), (1, 2, 1.2)], vec![0.0; 3]).unwrap();
        let dist = beliefs_from_messages(&m, &MessageSet::zeros(&m)).unwrap();
        assert_eq!(dist.node_means, vec![0.0; 3]);
        for (e, s) in m.edges().iter().zip(&dist.edge_stats) {
            assert_eq!(s.corr, e.coupling.tanh());
            assert_eq!((s.mean_u, s.mean_v), (0.0, 0.0));
        }
        let with_field = m.with_fields(vec![0.5, 0.0, 0.1]).unwrap();
        let dist = beliefs_from_messages(&with_field, &MessageSet::zeros(&m)).unwrap();
        assert_eq!(dist.node_means[0], 0.5f64.tanh());
    }

    #[test]
    fn beliefs_reject_unit_messages() {
        let m = IsingModel::new(2, &[(0, 1, 1.0)], vec![0.0; 2]).unwrap();
        assert!(matches!(
            beliefs_from_messages(&m, &MessageSet::ones(&m)),
            Err(Error::Domain(_))
        ));
    }

    #[test]
    fn product_distribution_matches_mean_field() {
        let m = generate_topology(Topology::Grid { rows: 3, cols: 4 }, 0.35, FieldSpec::Uniform(0.2), 0).unwrap();
        let x: Vec<f64> = (0..m.n()).map(|i| -0.8 + 0.13 * i as f64).collect();
        let dist = LocalDistribution::product(&m, &x);
        assert_eq!(local_consistency_check(&m, &dist), 0.0);
        let primal = primal_bethe(&m, &dist).unwrap();
        assert!((primal - mf_objective(&m, &x).unwrap()).abs() < 1e-12);
    }

    #[test]
    fn primal_equals_dual_at_fixed_point() {
        let m = generate_topology(Topology::Grid { rows: 4, cols: 4 }, 0.5, FieldSpec::Uniform(0.1), 0).unwrap();
        let (nu, _) = bp_iterate(&m, &IterateOptions::default().with_tol(1e-14)).unwrap();
        let dist = beliefs_from_messages(&m, &nu).unwrap();
        assert!(local_consistency_check(&m, &dist) <= 1e-10);
        let primal = primal_bethe(&m, &dist).unwrap();
        assert!((primal - dual_bethe(&m, &nu).unwrap()).abs() < 1e-9);
    }

    #[test]
    fn off_fixed_point_is_inconsistent() {
        let m = generate_topology(Topology::Cycle { n: 5 }, 0.8, FieldSpec::default(), 0).unwrap();
        let nu = MessageSet::new(vec![0.5; m.num_directed()]);
        let dist = beliefs_from_messages(&m, &nu).unwrap();
        let violation = local_consistency_check(&m, &dist);
        // direct marginalization of one edge table against its node mean
        let s = dist.edge_stats[0];
        let cells = s.cells();
        let marginal_plus = cells[0] + cells[1];
        let node_plus = 0.5 * (1.0 + dist.node_means[m.edges()[0].u]);
        assert!((violation - (marginal_plus - node_plus).abs()).abs() < 1e-12);
        assert!(violation > 1e-3);
        assert!(matches!(primal_bethe(&m, &dist), Err(Error::PolytopeViolation { .. })));
    }

    #[test]
    fn deliberately_inconsistent_table() {
        let m = IsingModel::new(2, &[(0, 1, 1.0)], vec![0.0; 2]).unwrap();
        let dist = LocalDistribution {
            node_means: vec![0.0, 0.5],
            edge_stats: vec![EdgeStats {
                mean_u: 0.0,
                mean_v: 0.5,
                corr: 1.0,
            }],
        };
        assert!((local_consistency_check(&m, &dist) - 0.125).abs() < 1e-15);
    }

    #[test]
    fn isolated_node_contribution() {
        let m = IsingModel::new(1, &[], vec![0.7]).unwrap();
        let mean = 0.7f64.tanh();
        let dist = LocalDistribution::product(&m, &[mean]);
        let v = primal_bethe(&m, &dist).unwrap();
        assert!((v - (2.0 * 0.7f64.cosh()).ln()).abs() < 1e-14);
    }
}
