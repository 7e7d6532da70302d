//! Generators for the benchmark graph families.
//!
//! Every generator is deterministic: random families draw from a ChaCha8
//! stream seeded by the caller.

use std::collections::HashSet;
use std::fmt;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::model::IsingModel;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Topology {
    Cycle {
        n: usize,
    },
    Path {
        n: usize,
    },
    /// `rows × cols` lattice, row-major, node 0 at the bottom-left corner.
    Grid {
        rows: usize,
        cols: usize,
    },
    RandomRegular {
        n: usize,
        degree: usize,
    },
    RandomTree {
        n: usize,
    },
    /// Node 0 is the hub.
    Star {
        n: usize,
    },
}

/// External field placement.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum FieldSpec {
    Uniform(f64),
    /// Field `strength` at `node`, zero elsewhere.
    Single {
        node: usize,
        strength: f64,
    },
    /// Independent uniform draws in `[lo, hi)` from the topology's seed stream.
    Random {
        lo: f64,
        hi: f64,
    },
}

impl Default for FieldSpec {
    fn default() -> Self {
        FieldSpec::Uniform(0.0)
    }
}

impl Topology {
    pub fn num_nodes(&self) -> usize {
        match *self {
            Topology::Cycle { n }
            | Topology::Path { n }
            | Topology::RandomRegular { n, .. }
            | Topology::RandomTree { n }
            | Topology::Star { n } => n,
            Topology::Grid { rows, cols } => rows * cols,
        }
    }

    fn edge_list(&self, rng: &mut ChaCha8Rng) -> Result<Vec<(usize, usize)>> {
        match *self {
            Topology::Cycle { n } => {
                if n < 3 {
                    return Err(Error::InvalidParameter(format!("cycle needs n >= 3, got {n}")));
                }
                Ok((0..n).map(|i| (i, (i + 1) % n)).collect())
            }
            Topology::Path { n } => {
                require_nodes(n)?;
                Ok((1..n).map(|i| (i - 1, i)).collect())
            }
            Topology::Grid { rows, cols } => {
                if rows == 0 || cols == 0 {
                    return Err(Error::InvalidParameter("grid dimensions must be positive".into()));
                }
                let mut edges = Vec::with_capacity(2 * rows * cols);
                for r in 0..rows {
                    for c in 0..cols {
                        let id = r * cols + c;
                        if c + 1 < cols {
                            edges.push((id, id + 1));
                        }
                        if r + 1 < rows {
                            edges.push((id, id + cols));
                        }
                    }
                }
                Ok(edges)
            }
            Topology::RandomRegular { n, degree } => random_regular(n, degree, rng),
            Topology::RandomTree { n } => {
                require_nodes(n)?;
                Ok(random_tree(n, rng))
            }
            Topology::Star { n } => {
                require_nodes(n)?;
                Ok((1..n).map(|i| (0, i)).collect())
            }
        }
    }
}

fn require_nodes(n: usize) -> Result<()> {
    if n == 0 {
        Err(Error::InvalidParameter("need at least one node".into()))
    } else {
        Ok(())
    }
}

/// Pairing model with restarts until the multigraph is simple.
fn random_regular(n: usize, d: usize, rng: &mut ChaCha8Rng) -> Result<Vec<(usize, usize)>> {
    if d >= n {
        return Err(Error::InvalidParameter(format!(
            "regular graph needs degree < n (d = {d}, n = {n})"
        )));
    }
    if !(n * d).is_multiple_of(2) {
        return Err(Error::InvalidParameter(format!("n·d must be even (n = {n}, d = {d})")));
    }
    const MAX_ATTEMPTS: usize = 10_000;
    let mut stubs: Vec<usize> = (0..n).flat_map(|i| std::iter::repeat_n(i, d)).collect();
    'attempt: for _ in 0..MAX_ATTEMPTS {
        stubs.shuffle(rng);
        let mut seen = HashSet::with_capacity(n * d / 2);
        let mut edges = Vec::with_capacity(n * d / 2);
        for pair in stubs.chunks_exact(2) {
            let (a, b) = (pair[0].min(pair[1]), pair[0].max(pair[1]));
            if a == b || !seen.insert((a, b)) {
                continue 'attempt;
            }
            edges.push((a, b));
        }
        return Ok(edges);
    }
    Err(Error::InvalidParameter(format!(
        "no simple {d}-regular graph on {n} nodes after {MAX_ATTEMPTS} attempts"
    )))
}

/// Uniform labelled tree via a random Prüfer sequence.
fn random_tree(n: usize, rng: &mut ChaCha8Rng) -> Vec<(usize, usize)> {
    if n == 1 {
        return Vec::new();
    }
    if n == 2 {
        return vec![(0, 1)];
    }
    let code: Vec<usize> = (0..n - 2).map(|_| rng.gen_range(0..n)).collect();
    let mut degree = vec![1usize; n];
    for &c in &code {
        degree[c] += 1;
    }
    let mut edges = Vec::with_capacity(n - 1);
    for &c in &code {
        let leaf = (0..n).find(|&i| degree[i] == 1).unwrap();
        edges.push((leaf, c));
        degree[leaf] -= 1;
        degree[c] -= 1;
    }
    let rest: Vec<usize> = (0..n).filter(|&i| degree[i] == 1).collect();
    edges.push((rest[0], rest[1]));
    edges
}

/// Builds a model on `topology` with uniform coupling `beta` and the given field.
pub fn generate_topology(topology: Topology, beta: f64, field: FieldSpec, seed: u64) -> Result<IsingModel> {
    if !(beta >= 0.0 && beta.is_finite()) {
        return Err(Error::InvalidParameter(format!(
            "beta must be finite and >= 0, got {beta}"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let pairs = topology.edge_list(&mut rng)?;
    let n = topology.num_nodes();
    let fields = match field {
        FieldSpec::Uniform(h) => vec![h; n],
        FieldSpec::Single { node, strength } => {
            if node >= n {
                return Err(Error::NodeOutOfRange { node, n });
            }
            let mut h = vec![0.0; n];
            h[node] = strength;
            h
        }
        FieldSpec::Random { lo, hi } => {
            if !(lo <= hi) {
                return Err(Error::InvalidParameter(format!("empty field range [{lo}, {hi})")));
            }
            (0..n)
                .map(|_| if lo == hi { lo } else { rng.gen_range(lo..hi) })
                .collect()
        }
    };
    let edges: Vec<(usize, usize, f64)> = pairs.into_iter().map(|(i, j)| (i, j, beta)).collect();
    IsingModel::new(n, &edges, fields)
}

impl fmt::Display for Topology {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match *self {
            Topology::Cycle { n } => write!(f, "cycle:{n}"),
            Topology::Path { n } => write!(f, "path:{n}"),
            Topology::Grid { rows, cols } => write!(f, "grid:{rows}x{cols}"),
            Topology::RandomRegular { n, degree } => write!(f, "regular:{n}:{degree}"),
            Topology::RandomTree { n } => write!(f, "tree:{n}"),
            Topology::Star { n } => write!(f, "star:{n}"),
        }
    }
}

/// Parses `cycle:N`, `path:N`, `grid:RxC`, `regular:N:D`, `tree:N`, `star:N`.
impl FromStr for Topology {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::InvalidParameter(format!("unrecognized topology `{s}`"));
        let num = |t: &str| t.parse::<usize>().map_err(|_| bad());
        let parts: Vec<&str> = s.split(':').collect();
        match parts.as_slice() {
            ["cycle", n] => Ok(Topology::Cycle { n: num(n)? }),
            ["path", n] | ["chain", n] => Ok(Topology::Path { n: num(n)? }),
            ["grid", dims] => {
                let (r, c) = dims.split_once('x').ok_or_else(bad)?;
                Ok(Topology::Grid {
                    rows: num(r)?,
                    cols: num(c)?,
                })
            }
            ["regular", n, d] | ["random_regular", n, d] => Ok(Topology::RandomRegular {
                n: num(n)?,
                degree: num(d)?,
            }),
            ["tree", n] | ["random_tree", n] => Ok(Topology::RandomTree { n: num(n)? }),
            ["star", n] => Ok(Topology::Star { n: num(n)? }),
            _ => Err(bad()),
        }
    }
}

/// Parses `H` (uniform), `H@I` (single node) or `random:LO:HI`.
impl FromStr for FieldSpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::InvalidParameter(format!("unrecognized field spec `{s}`"));
        let float = |t: &str| t.parse::<f64>().map_err(|_| bad());
        if let Some(rest) = s.strip_prefix("random:") {
            let (lo, hi) = rest.split_once(':').ok_or_else(bad)?;
            return Ok(FieldSpec::Random {
                lo: float(lo)?,
                hi: float(hi)?,
            });
        }
        if let Some((strength, node)) = s.split_once('@') {
            return Ok(FieldSpec::Single {
                node: node.parse().map_err(|_| bad())?,
                strength: float(strength)?,
            });
        }
        Ok(FieldSpec::Uniform(float(s)?))
    }
}
