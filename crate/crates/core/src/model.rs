//! Sparse pairwise Ising models with nonnegative couplings and fields.
//!
//! Edges are stored once as unordered pairs `(u, v)` with `u < v`. Each edge
//! `e` owns two directed slots: `2e` is `u → v` and `2e + 1` is `v → u`, so a
//! message vector is a flat array of length `2m`.

use std::collections::HashSet;
use std::fmt::Write as _;

use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

/// An undirected edge with `u < v`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Edge {
    pub u: usize,
    pub v: usize,
    pub coupling: f64,
}

/// Entry of a node's adjacency list.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Neighbor {
    pub node: usize,
    pub edge: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct IsingModel {
    n: usize,
    edges: Vec<Edge>,
    fields: Vec<f64>,
    thetas: Vec<f64>,
    adj_offsets: Vec<usize>,
    adj: Vec<Neighbor>,
}

/// Norms of `(J, h)` with `J` viewed as a symmetric matrix of entries.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ModelNorms {
    /// `Σ_{i,j} |J_ij|`, each undirected edge counted twice.
    pub j_l1: f64,
    pub h_l1: f64,
    pub j_linf: f64,
    pub m: usize,
    pub n: usize,
}

impl IsingModel {
    /// Builds a model after checking the structural invariants (ids in range,
    /// no self-loops, no duplicate edges, finite values). Signs are not checked
    /// here; see [`validate_ferromagnetic`].
    pub fn from_parts(n: usize, edges: &[(usize, usize, f64)], fields: Vec<f64>) -> Result<Self> {
        if n == 0 {
            return Err(Error::EmptyModel);
        }
        if fields.len() != n {
            return Err(Error::LengthMismatch {
                expected: n,
                got: fields.len(),
            });
        }
        for (i, &h) in fields.iter().enumerate() {
            if !h.is_finite() {
                return Err(Error::NonFinite {
                    what: format!("field at node {i}"),
                    value: h,
                });
            }
        }

        let mut seen = HashSet::with_capacity(edges.len());
        let mut normalized = Vec::with_capacity(edges.len());
        for &(i, j, coupling) in edges {
            for node in [i, j] {
                if node >= n {
                    return Err(Error::NodeOutOfRange { node, n });
                }
            }
            if i == j {
                return Err(Error::SelfLoop { node: i });
            }
            if !coupling.is_finite() {
                return Err(Error::NonFinite {
                    what: format!("coupling on edge ({i}, {j})"),
                    value: coupling,
                });
            }
            let (u, v) = if i < j { (i, j) } else { (j, i) };
            if !seen.insert((u, v)) {
                return Err(Error::DuplicateEdge { i: u, j: v });
            }
            normalized.push(Edge { u, v, coupling });
        }
        normalized.sort_by_key(|a| (a.u, a.v));

        let mut degree = vec![0usize; n];
        for e in &normalized {
            degree[e.u] += 1;
            degree[e.v] += 1;
        }
        let mut adj_offsets = Vec::with_capacity(n + 1);
        adj_offsets.push(0);
        for d in &degree {
            adj_offsets.push(adj_offsets.last().unwrap() + d);
        }
        let mut fill = adj_offsets[..n].to_vec();
        let mut adj = vec![Neighbor { node: 0, edge: 0 }; adj_offsets[n]];
        for (id, e) in normalized.iter().enumerate() {
            adj[fill[e.u]] = Neighbor { node: e.v, edge: id };
            fill[e.u] += 1;
            adj[fill[e.v]] = Neighbor { node: e.u, edge: id };
            fill[e.v] += 1;
        }

        let thetas = normalized.iter().map(|e| e.coupling.tanh()).collect();
        Ok(IsingModel {
            n,
            edges: normalized,
            fields,
            thetas,
            adj_offsets,
            adj,
        })
    }

    /// Builds a model and requires it to be ferromagnetic with nonnegative field.
    pub fn new(n: usize, edges: &[(usize, usize, f64)], fields: Vec<f64>) -> Result<Self> {
        let model = Self::from_parts(n, edges, fields)?;
        validate_ferromagnetic(model, false)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn m(&self) -> usize {
        self.edges.len()
    }

    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    pub fn fields(&self) -> &[f64] {
        &self.fields
    }

    /// `tanh(J_e)` per edge.
    pub fn thetas(&self) -> &[f64] {
        &self.thetas
    }

    pub fn neighbors(&self, i: usize) -> &[Neighbor] {
        &self.adj[self.adj_offsets[i]..self.adj_offsets[i + 1]]
    }

    pub fn degree(&self, i: usize) -> usize {
        self.adj_offsets[i + 1] - self.adj_offsets[i]
    }

    /// Number of directed message slots, `2m`.
    pub fn num_directed(&self) -> usize {
        2 * self.edges.len()
    }

    /// Directed slot of the message sent from `from` along `edge`.
    #[inline]
    pub fn directed_index(&self, edge: usize, from: usize) -> usize {
        if self.edges[edge].u == from {
            2 * edge
        } else {
            2 * edge + 1
        }
    }

    /// Directed slot of `src → dst`, if `{src, dst}` is an edge.
    pub fn directed_between(&self, src: usize, dst: usize) -> Option<usize> {
        self.neighbors(src)
            .iter()
            .find(|nb| nb.node == dst)
            .map(|nb| self.directed_index(nb.edge, src))
    }

    /// `(src, dst)` for a directed slot.
    #[inline]
    pub fn directed_endpoints(&self, d: usize) -> (usize, usize) {
        let e = &self.edges[d / 2];
        if d.is_multiple_of(2) {
            (e.u, e.v)
        } else {
            (e.v, e.u)
        }
    }

    /// Same graph and couplings with a different field vector.
    pub fn with_fields(&self, fields: Vec<f64>) -> Result<Self> {
        if fields.len() != self.n {
            return Err(Error::LengthMismatch {
                expected: self.n,
                got: fields.len(),
            });
        }
        let mut model = self.clone();
        model.fields = fields;
        Ok(model)
    }

    /// Copy with `shift` added to every field.
    pub fn shifted_field(&self, shift: f64) -> Self {
        let mut model = self.clone();
        for h in &mut model.fields {
            *h += shift;
        }
        model
    }

    /// `(J x)_i`.
    #[inline]
    pub fn coupling_dot(&self, i: usize, x: &[f64]) -> f64 {
        self.neighbors(i)
            .iter()
            .map(|nb| self.edges[nb.edge].coupling * x[nb.node])
            .sum()
    }

    pub fn min_field(&self) -> f64 {
        self.fields.iter().copied().fold(f64::INFINITY, f64::min)
    }

    /// Hex SHA-256 of the canonical text form.
    pub fn content_hash(&self) -> String {
        let digest = Sha256::digest(save_model(self).as_bytes());
        digest.iter().fold(String::with_capacity(64), |mut s, b| {
            let _ = write!(s, "{b:02x}");
            s
        })
    }
}

/// Checks the ferromagnetic invariants. With `allow_sign_flip`, a field that
/// is nonpositive everywhere is negated (global spin flip).
pub fn validate_ferromagnetic(model: IsingModel, allow_sign_flip: bool) -> Result<IsingModel> {
    if let Some(e) = model.edges.iter().find(|e| e.coupling < 0.0) {
        return Err(Error::NegativeCoupling {
            i: e.u,
            j: e.v,
            value: e.coupling,
        });
    }
    let positive = model.fields.iter().position(|&h| h > 0.0);
    let negative = model.fields.iter().position(|&h| h < 0.0);
    match (positive, negative) {
        (_, None) => Ok(model),
        (Some(p), Some(q)) => Err(Error::MixedSignField {
            positive: p,
            negative: q,
        }),
        (None, Some(q)) => {
            if allow_sign_flip {
                let mut flipped = model;
                for h in &mut flipped.fields {
                    *h = -*h;
                }
                Ok(flipped)
            } else {
                Err(Error::NegativeField {
                    node: q,
                    value: model.fields[q],
                })
            }
        }
    }
}

pub fn model_norms(model: &IsingModel) -> ModelNorms {
    let edge_sum: f64 = model.edges.iter().map(|e| e.coupling.abs()).sum();
    ModelNorms {
        j_l1: 2.0 * edge_sum,
        h_l1: model.fields.iter().map(|h| h.abs()).sum(),
        j_linf: model.edges.iter().map(|e| e.coupling.abs()).fold(0.0, f64::max),
        m: model.m(),
        n: model.n(),
    }
}

/// Parses the line-oriented model format and checks structural invariants
/// only. Field signs are left to [`validate_ferromagnetic`].
///
/// ```text
/// n <N>
/// node <i> <h_i>
/// edge <i> <j> <J_ij>
/// ```
pub fn parse_model(text: &str) -> Result<IsingModel> {
    let mut n: Option<usize> = None;
    let mut fields: Vec<f64> = Vec::new();
    let mut field_set: Vec<bool> = Vec::new();
    let mut edges = Vec::new();

    for (idx, raw) in text.lines().enumerate() {
        let line_no = idx + 1;
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let tokens: Vec<&str> = line.split_whitespace().collect();
        match tokens[0] {
            "n" => {
                if n.is_some() {
                    return Err(Error::parse(line_no, "repeated `n` line"));
                }
                if tokens.len() != 2 {
                    return Err(Error::parse(line_no, "expected `n <N>`"));
                }
                let count: usize = parse_token(tokens[1], line_no, "node count")?;
                if count == 0 {
                    return Err(Error::EmptyModel);
                }
                n = Some(count);
                fields = vec![0.0; count];
                field_set = vec![false; count];
            }
            "node" => {
                let count = n.ok_or_else(|| Error::parse(line_no, "`node` before `n`"))?;
                if tokens.len() != 3 {
                    return Err(Error::parse(line_no, "expected `node <i> <h_i>`"));
                }
                let i: usize = parse_token(tokens[1], line_no, "node id")?;
                let h: f64 = parse_token(tokens[2], line_no, "field")?;
                if i >= count {
                    return Err(Error::NodeOutOfRange { node: i, n: count });
                }
                if field_set[i] {
                    return Err(Error::parse(line_no, format!("node {i} given twice")));
                }
                field_set[i] = true;
                fields[i] = h;
            }
            "edge" => {
                if n.is_none() {
                    return Err(Error::parse(line_no, "`edge` before `n`"));
                }
                if tokens.len() != 4 {
                    return Err(Error::parse(line_no, "expected `edge <i> <j> <J_ij>`"));
                }
                let i: usize = parse_token(tokens[1], line_no, "node id")?;
                let j: usize = parse_token(tokens[2], line_no, "node id")?;
                let coupling: f64 = parse_token(tokens[3], line_no, "coupling")?;
                edges.push((i, j, coupling));
            }
            other => {
                return Err(Error::parse(line_no, format!("unknown directive `{other}`")));
            }
        }
    }

    let n = n.ok_or_else(|| Error::parse(1, "missing `n` line"))?;
    IsingModel::from_parts(n, &edges, fields)
}

/// Parses and requires a ferromagnetic model with nonnegative field.
pub fn load_model(text: &str) -> Result<IsingModel> {
    validate_ferromagnetic(parse_model(text)?, false)
}

/// Canonical text form: every node listed in order, edges ascending with
/// `i < j`, values with 17 significant digits.
pub fn save_model(model: &IsingModel) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "n {}", model.n);
    for (i, h) in model.fields.iter().enumerate() {
        let _ = writeln!(out, "node {i} {h:.16e}");
    }
    for e in &model.edges {
        let _ = writeln!(out, "edge {} {} {:.16e}", e.u, e.v, e.coupling);
    }
    out
}

fn parse_token<T: std::str::FromStr>(token: &str, line: usize, what: &str) -> Result<T> {
    token
        .parse()
        .map_err(|_| Error::parse(line, format!("invalid {what} `{token}`")))
}
