//! Ground-truth references for small instances: exact enumeration of the
//! partition function, a transfer-matrix evaluator for chains and cycles, and
//! grid-search maximizers of the mean-field and Bethe objectives.
//!
//! Nothing here calls into the iterative solvers, so the results can be used
//! to check them.

use std::fmt::Write as _;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::local::{EdgeStats, LocalDistribution};
use crate::meanfield::ProductState;
use crate::model::IsingModel;
use crate::numeric::{log_add_exp, pair_cells, spin_entropy, xlogx_neg};

/// Default enumeration limit for [`exact_log_z`].
pub const EXACT_MAX_N: usize = 24;

const CHUNK_BITS: usize = 12;

/// Partition function and first/second moments of the Gibbs measure.
#[derive(Debug, Clone, PartialEq)]
pub struct ExactResult {
    pub log_z: f64,
    pub node_means: Vec<f64>,
    /// `E[x_u x_v]` for each model edge, in edge order.
    pub edge_correlations: Vec<f64>,
}

impl ExactResult {
    /// `log_z` block, then `node,mean` rows, then `i,j,corr` rows.
    pub fn to_csv(&self, model: &IsingModel) -> String {
        let mut out = format!("log_z\n{:.17e}\nnode,mean\n", self.log_z);
        for (i, m) in self.node_means.iter().enumerate() {
            let _ = writeln!(out, "{i},{m:.17e}");
        }
        out.push_str("i,j,corr\n");
        for (e, c) in model.edges().iter().zip(&self.edge_correlations) {
            let _ = writeln!(out, "{},{},{c:.17e}", e.u, e.v);
        }
        out
    }
}

/// Weighted sums over one block of configurations, scaled by `exp(-max)`.
struct Partial {
    max: f64,
    total: f64,
    means: Vec<f64>,
    corrs: Vec<f64>,
}

impl Partial {
    fn rescaled(mut self, max: f64) -> Self {
        let s = (self.max - max).exp();
        self.total *= s;
        self.means.iter_mut().for_each(|v| *v *= s);
        self.corrs.iter_mut().for_each(|v| *v *= s);
        self.max = max;
        self
    }

    fn merge(self, other: Partial) -> Partial {
        let max = self.max.max(other.max);
        let mut a = self.rescaled(max);
        let b = other.rescaled(max);
        a.total += b.total;
        a.means.iter_mut().zip(&b.means).for_each(|(x, y)| *x += y);
        a.corrs.iter_mut().zip(&b.corrs).for_each(|(x, y)| *x += y);
        a
    }
}

#[inline]
fn spin(config: u64, i: usize) -> f64 {
    if config >> i & 1 == 1 {
        1.0
    } else {
        -1.0
    }
}

fn energy(model: &IsingModel, config: u64) -> f64 {
    let pair: f64 = model
        .edges()
        .iter()
        .map(|e| e.coupling * spin(config, e.u) * spin(config, e.v))
        .sum();
    let field: f64 = model
        .fields()
        .iter()
        .enumerate()
        .map(|(i, h)| h * spin(config, i))
        .sum();
    pair + field
}

fn enumerate_block(model: &IsingModel, start: u64, len: u64) -> Partial {
    let energies: Vec<f64> = (start..start + len).map(|c| energy(model, c)).collect();
    let max = energies.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut part = Partial {
        max,
        total: 0.0,
        means: vec![0.0; model.n()],
        corrs: vec![0.0; model.m()],
    };
    for (config, e) in (start..).zip(&energies) {
        let w = (e - max).exp();
        part.total += w;
        for (i, m) in part.means.iter_mut().enumerate() {
            *m += w * spin(config, i);
        }
        for (c, edge) in part.corrs.iter_mut().zip(model.edges()) {
            *c += w * spin(config, edge.u) * spin(config, edge.v);
        }
    }
    part
}

/// [`exact_log_z_guarded`] with the default limit of 24 nodes.
pub fn exact_log_z(model: &IsingModel) -> Result<ExactResult> {
    exact_log_z_guarded(model, EXACT_MAX_N)
}

/// Sums the Gibbs weights of all `2^n` configurations.
///
/// Configurations are split into blocks of `2^12`; each block is accumulated
/// relative to its own maximum energy and the blocks are merged in index
/// order, so the result does not depend on the thread count.
pub fn exact_log_z_guarded(model: &IsingModel, max_n: usize) -> Result<ExactResult> {
    let n = model.n();
    if n > max_n || n > 62 {
        return Err(Error::SizeGuard {
            what: "exact enumeration nodes",
            value: n,
            limit: max_n.min(62),
        });
    }
    let total: u64 = 1 << n;
    let block: u64 = 1 << CHUNK_BITS.min(n);
    let parts: Vec<Partial> = (0..total / block)
        .into_par_iter()
        .map(|b| enumerate_block(model, b * block, block))
        .collect();
    let merged = parts.into_iter().reduce(Partial::merge).expect("at least one block");
    let inv = 1.0 / merged.total;
    Ok(ExactResult {
        log_z: merged.max + merged.total.ln(),
        node_means: merged.means.iter().map(|v| v * inv).collect(),
        edge_correlations: merged.corrs.iter().map(|v| v * inv).collect(),
    })
}

/// Visits a path or cycle, returning nodes in order and the coupling between
/// consecutive nodes (closing coupling last for a cycle).
fn walk_chain(model: &IsingModel) -> Result<(Vec<usize>, Vec<f64>, bool)> {
    let n = model.n();
    if let Some(i) = (0..n).find(|&i| model.degree(i) > 2) {
        return Err(Error::Topology(format!("node {i} has degree {}", model.degree(i))));
    }
    let cycle = match model.m() {
        m if m + 1 == n => false,
        m if m == n && n >= 3 => true,
        m => {
            return Err(Error::Topology(format!(
                "{m} edges on {n} nodes is neither a path nor a cycle"
            )))
        }
    };
    let start = if cycle {
        0
    } else {
        (0..n).find(|&i| model.degree(i) <= 1).unwrap_or(0)
    };
    let mut order = vec![start];
    let mut couplings = Vec::with_capacity(model.m());
    let mut seen = vec![false; n];
    seen[start] = true;
    let mut current = start;
    while let Some(nb) = model.neighbors(current).iter().find(|nb| !seen[nb.node]) {
        couplings.push(model.edges()[nb.edge].coupling);
        seen[nb.node] = true;
        order.push(nb.node);
        current = nb.node;
    }
    if order.len() != n {
        return Err(Error::Topology("graph is not connected".into()));
    }
    if cycle {
        let closing = model
            .neighbors(current)
            .iter()
            .find(|nb| nb.node == start)
            .ok_or_else(|| Error::Topology("cycle does not close".into()))?;
        couplings.push(model.edges()[closing.edge].coupling);
    }
    Ok((order, couplings, cycle))
}

/// Log of a 2×2 matrix product `A·B` with entries kept as logarithms, index 0 ↔ spin +1.
fn log_matmul(a: &[[f64; 2]; 2], b: &[[f64; 2]; 2]) -> [[f64; 2]; 2] {
    let mut out = [[0.0; 2]; 2];
    for (r, row) in out.iter_mut().enumerate() {
        for (c, cell) in row.iter_mut().enumerate() {
            *cell = log_add_exp(a[r][0] + b[0][c], a[r][1] + b[1][c]);
        }
    }
    out
}

/// `log Z` of a path or a single cycle from a product of 2×2 transfer matrices.
///
/// Entries are carried as logarithms, which is the per-step rescaling taken to
/// its limit: nothing overflows for any finite couplings or chain length.
pub fn transfer_matrix_log_z(model: &IsingModel) -> Result<f64> {
    if model.n() == 0 {
        return Err(Error::EmptyModel);
    }
    if model.n() == 1 && model.m() == 0 {
        let h = model.fields()[0];
        return Ok(log_add_exp(h, -h));
    }
    let (order, couplings, cycle) = walk_chain(model)?;
    let h = |k: usize| model.fields()[order[k]];
    let spins = [1.0, -1.0];
    // T_k[s][t] = h_k s + J_k s t, the weight of node k and its outgoing bond
    let transfer = |k: usize| {
        let mut t = [[0.0; 2]; 2];
        for (a, sa) in spins.iter().enumerate() {
            for (b, sb) in spins.iter().enumerate() {
                t[a][b] = h(k) * sa + couplings[k] * sa * sb;
            }
        }
        t
    };
    if cycle {
        let mut acc = transfer(0);
        for k in 1..order.len() {
            acc = log_matmul(&acc, &transfer(k));
        }
        Ok(log_add_exp(acc[0][0], acc[1][1]))
    } else {
        let mut v = [h(0), -h(0)];
        for (k, &j) in couplings.iter().enumerate().take(order.len() - 1) {
            let hn = h(k + 1);
            v = [
                log_add_exp(v[0] + j, v[1] - j) + hn,
                log_add_exp(v[0] - j, v[1] + j) - hn,
            ];
        }
        Ok(log_add_exp(v[0], v[1]))
    }
}

/// Size limits for the grid optimizers.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridLimits {
    /// Mean-field: node count. Bethe: node count plus edge count.
    pub max_params: usize,
    /// Largest number of joint grid points visited by the sweep.
    pub max_points: f64,
}

impl GridLimits {
    pub const MEAN_FIELD: GridLimits = GridLimits {
        max_params: 6,
        max_points: 2e8,
    };
    pub const BETHE: GridLimits = GridLimits {
        max_params: 8,
        max_points: 2e8,
    };
}

fn grid_values(resolution: f64) -> Result<Vec<f64>> {
    if !(resolution > 0.0 && resolution <= 1.0) {
        return Err(Error::InvalidParameter(format!(
            "grid resolution {resolution} must lie in (0, 1]"
        )));
    }
    let steps = (2.0 / resolution).round() as usize;
    Ok((0..=steps).map(|k| -1.0 + 2.0 * k as f64 / steps as f64).collect())
}

fn check_points(count: f64, limits: &GridLimits) -> Result<()> {
    if count > limits.max_points {
        return Err(Error::SizeGuard {
            what: "grid points",
            value: count.min(usize::MAX as f64) as usize,
            limit: limits.max_points as usize,
        });
    }
    Ok(())
}

const GOLDEN: f64 = 0.618_033_988_749_894_9;

/// Maximizer of a unimodal `f` on `[lo, hi]`, compared against the endpoints.
fn golden_max(lo: f64, hi: f64, f: impl Fn(f64) -> f64) -> (f64, f64) {
    let (mut a, mut b) = (lo, hi);
    let mut c = b - GOLDEN * (b - a);
    let mut d = a + GOLDEN * (b - a);
    let (mut fc, mut fd) = (f(c), f(d));
    for _ in 0..90 {
        if fc >= fd {
            b = d;
            d = c;
            fd = fc;
            c = b - GOLDEN * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + GOLDEN * (b - a);
            fd = f(d);
        }
        if b - a < 1e-15 {
            break;
        }
    }
    [(lo, f(lo)), (hi, f(hi)), (c, fc), (d, fd)]
        .into_iter()
        .fold(
            (lo, f64::NEG_INFINITY),
            |best, cand| if cand.1 > best.1 { cand } else { best },
        )
}

/// Largest value with ties broken towards the lower flat index.
fn better(a: (f64, u64), b: (f64, u64)) -> (f64, u64) {
    if b.0 > a.0 || (b.0 == a.0 && b.1 < a.1) {
        b
    } else {
        a
    }
}

/// Mixed-radix decoding of a flat grid index, node 0 least significant.
fn decode(mut flat: u64, base: usize, n: usize) -> Vec<usize> {
    (0..n)
        .map(|_| {
            let k = (flat % base as u64) as usize;
            flat /= base as u64;
            k
        })
        .collect()
}

/// Sweeps all grid points in parallel blocks keyed by the most significant
/// node, returning the best score and its flat index.
fn sweep(n: usize, base: usize, score: impl Fn(&[usize]) -> f64 + Sync) -> (f64, u64) {
    if n == 0 {
        return (score(&[]), 0);
    }
    let inner: u64 = (base as u64).pow(n as u32 - 1);
    (0..base as u64)
        .into_par_iter()
        .map(|top| {
            let mut idx = decode(top * inner, base, n);
            let mut best = (f64::NEG_INFINITY, u64::MAX);
            for off in 0..inner {
                best = better(best, (score(&idx), top * inner + off));
                // odometer over the lower n - 1 digits
                for digit in idx.iter_mut().take(n - 1) {
                    *digit += 1;
                    if *digit < base {
                        break;
                    }
                    *digit = 0;
                }
            }
            best
        })
        .reduce(|| (f64::NEG_INFINITY, u64::MAX), better)
}

/// Mean-field objective, written out independently of the `meanfield` module.
fn mf_value(model: &IsingModel, x: &[f64]) -> f64 {
    let mut v = 0.0;
    for e in model.edges() {
        v += e.coupling * x[e.u] * x[e.v];
    }
    for (i, &xi) in x.iter().enumerate() {
        v += model.fields()[i] * xi + xlogx_neg(0.5 * (1.0 + xi)) + xlogx_neg(0.5 * (1.0 - xi));
    }
    v
}

/// [`brute_force_mf_optimum_with`] under [`GridLimits::MEAN_FIELD`].
pub fn brute_force_mf_optimum(
    model: &IsingModel,
    grid_resolution: f64,
    refine_rounds: usize,
) -> Result<(ProductState, f64)> {
    brute_force_mf_optimum_with(model, grid_resolution, refine_rounds, &GridLimits::MEAN_FIELD)
}

/// Best point of the mean-field objective on a grid over `[-1, 1]^n`,
/// followed by `refine_rounds` sweeps of exact coordinate ascent (the
/// objective is concave in each coordinate separately).
pub fn brute_force_mf_optimum_with(
    model: &IsingModel,
    grid_resolution: f64,
    refine_rounds: usize,
    limits: &GridLimits,
) -> Result<(ProductState, f64)> {
    let n = model.n();
    if n > limits.max_params {
        return Err(Error::SizeGuard {
            what: "mean-field grid nodes",
            value: n,
            limit: limits.max_params,
        });
    }
    let grid = grid_values(grid_resolution)?;
    check_points((grid.len() as f64).powi(n as i32), limits)?;
    let (_, flat) = sweep(n, grid.len(), |idx| {
        let x: Vec<f64> = idx.iter().map(|&k| grid[k]).collect();
        mf_value(model, &x)
    });
    let mut x: Vec<f64> = decode(flat, grid.len(), n).into_iter().map(|k| grid[k]).collect();
    for _ in 0..refine_rounds {
        for i in 0..n {
            let (best, _) = golden_max(-1.0, 1.0, |v| {
                let mut y = x.clone();
                y[i] = v;
                mf_value(model, &y)
            });
            x[i] = best;
        }
    }
    let value = mf_value(model, &x);
    Ok((ProductState::new(x), value))
}

/// Interval of correlations `c` keeping all four cells of `(a, b, c)` nonnegative.
fn corr_range(a: f64, b: f64) -> (f64, f64) {
    let lo = -1.0 + (a + b).abs();
    (lo, (1.0 - (a - b).abs()).max(lo))
}

/// `J c + H(pair)` for one edge.
fn edge_value(coupling: f64, a: f64, b: f64, c: f64) -> f64 {
    coupling * c + pair_cells(a, b, c).iter().map(|&p| xlogx_neg(p.max(0.0))).sum::<f64>()
}

/// Primal Bethe objective, written out independently of the `local` module.
fn bethe_value(model: &IsingModel, means: &[f64], corrs: &[f64]) -> f64 {
    let mut v = 0.0;
    for (i, &m) in means.iter().enumerate() {
        v += model.fields()[i] * m - (model.degree(i) as f64 - 1.0) * spin_entropy(m);
    }
    for (e, edge) in model.edges().iter().enumerate() {
        v += edge_value(edge.coupling, means[edge.u], means[edge.v], corrs[e]);
    }
    v
}

/// Best correlation for an edge with fixed means by golden-section on the
/// (concave) edge term.
fn best_corr(coupling: f64, a: f64, b: f64) -> f64 {
    let (lo, hi) = corr_range(a, b);
    if hi <= lo {
        return 0.5 * (lo + hi);
    }
    golden_max(lo, hi, |c| edge_value(coupling, a, b, c)).0
}

/// [`brute_force_bethe_optimum_with`] under [`GridLimits::BETHE`].
pub fn brute_force_bethe_optimum(
    model: &IsingModel,
    grid_resolution: f64,
    refine_rounds: usize,
) -> Result<(LocalDistribution, f64)> {
    brute_force_bethe_optimum_with(model, grid_resolution, refine_rounds, &GridLimits::BETHE)
}

/// Best point of the primal Bethe objective over the local polytope.
///
/// The polytope is gridded in node means and edge correlations, with cells
/// that would give a negative pairwise probability rejected. Since each
/// correlation only enters its own edge term, the edge maximum over the
/// correlation grid is tabulated per pair of node-mean grid values before the
/// sweep over node means; this visits the same grid points as a joint sweep.
/// The independent value `c = m_u m_v` is always among the candidates, so the
/// sweep dominates the product-distribution sweep on the same grid.
///
/// Refinement alternates golden-section moves of each node mean within one
/// grid cell (re-optimizing its incident correlations) and of each correlation
/// over its feasible interval.
pub fn brute_force_bethe_optimum_with(
    model: &IsingModel,
    grid_resolution: f64,
    refine_rounds: usize,
    limits: &GridLimits,
) -> Result<(LocalDistribution, f64)> {
    let (n, m) = (model.n(), model.m());
    if n + m > limits.max_params {
        return Err(Error::SizeGuard {
            what: "Bethe grid parameters",
            value: n + m,
            limit: limits.max_params,
        });
    }
    let grid = grid_values(grid_resolution)?;
    let g = grid.len();
    check_points((g as f64).powi(n as i32), limits)?;

    let tables: Vec<Vec<f64>> = model
        .edges()
        .iter()
        .map(|edge| {
            let mut table = vec![f64::NEG_INFINITY; g * g];
            for (ka, &a) in grid.iter().enumerate() {
                for (kb, &b) in grid.iter().enumerate() {
                    let (lo, hi) = corr_range(a, b);
                    let best = grid
                        .iter()
                        .copied()
                        .filter(|&c| c >= lo - 1e-12 && c <= hi + 1e-12)
                        .chain(std::iter::once(a * b))
                        .map(|c| edge_value(edge.coupling, a, b, c.clamp(lo, hi)))
                        .fold(f64::NEG_INFINITY, f64::max);
                    table[ka * g + kb] = best;
                }
            }
            table
        })
        .collect();
    let node_terms: Vec<Vec<f64>> = (0..n)
        .map(|i| {
            let h = model.fields()[i];
            let deg = model.degree(i) as f64;
            grid.iter().map(|&v| h * v - (deg - 1.0) * spin_entropy(v)).collect()
        })
        .collect();

    let (_, flat) = sweep(n, g, |idx| {
        let mut v: f64 = idx.iter().enumerate().map(|(i, &k)| node_terms[i][k]).sum();
        for (edge, table) in model.edges().iter().zip(&tables) {
            v += table[idx[edge.u] * g + idx[edge.v]];
        }
        v
    });
    let mut means: Vec<f64> = decode(flat, g, n).into_iter().map(|k| grid[k]).collect();
    let mut corrs: Vec<f64> = model
        .edges()
        .iter()
        .map(|e| best_corr(e.coupling, means[e.u], means[e.v]))
        .collect();
    // the exact inner maximum can only improve on the tabulated grid maximum
    let step = 2.0 / (g - 1) as f64;
    for _ in 0..refine_rounds {
        for i in 0..n {
            let lo = (means[i] - step).max(-1.0);
            let hi = (means[i] + step).min(1.0);
            let profile = |v: f64| {
                let mut trial = means.clone();
                trial[i] = v;
                let c: Vec<f64> = model
                    .edges()
                    .iter()
                    .enumerate()
                    .map(|(e, edge)| {
                        if edge.u == i || edge.v == i {
                            best_corr(edge.coupling, trial[edge.u], trial[edge.v])
                        } else {
                            corrs[e]
                        }
                    })
                    .collect();
                bethe_value(model, &trial, &c)
            };
            let current = profile(means[i]);
            let (cand, value) = golden_max(lo, hi, profile);
            if value > current {
                means[i] = cand;
            }
            for (e, edge) in model.edges().iter().enumerate() {
                if edge.u == i || edge.v == i {
                    corrs[e] = best_corr(edge.coupling, means[edge.u], means[edge.v]);
                }
            }
        }
    }
    let value = bethe_value(model, &means, &corrs);
    let edge_stats = model
        .edges()
        .iter()
        .zip(&corrs)
        .map(|(e, &c)| EdgeStats {
            mean_u: means[e.u],
            mean_v: means[e.v],
            corr: c,
        })
        .collect();
    Ok((
        LocalDistribution {
            node_means: means,
            edge_stats,
        },
        value,
    ))
}
