//! Personalized PageRank by power iteration over the structural adjacency of
//! a collaborative knowledge graph.

use alloc::vec;
use alloc::vec::Vec;

use crate::ckg::CollaborativeKG;
use crate::error::{Error, Result};
use crate::exec::Executor;

pub const DEFAULT_ALPHA: f64 = 0.15;
pub const DEFAULT_ITERATIONS: usize = 20;

/// Column-stochastic, relation-agnostic adjacency.
///
/// Column `j` holds `1 / D_j` at every distinct out-neighbour of `j`, where
/// `D_j` is the number of distinct out-neighbours. Parallel edges under
/// different relations collapse to one entry. Columns without neighbours are
/// all zero.
#[derive(Debug, Clone, PartialEq)]
pub struct ColumnStochasticAdjacency {
    offsets: Vec<usize>,
    rows: Vec<u32>,
}

pub fn normalized_adjacency(ckg: &CollaborativeKG) -> ColumnStochasticAdjacency {
    let n = ckg.node_count();
    let mut offsets = Vec::with_capacity(n + 1);
    let mut rows = Vec::with_capacity(ckg.edge_count());
    offsets.push(0);
    for j in 0..n as u32 {
        // tails are sorted, so duplicates are adjacent
        let (_, tails) = ckg.edges_of(j);
        let mut last = None;
        for &t in tails {
            if last != Some(t) {
                rows.push(t);
                last = Some(t);
            }
        }
        offsets.push(rows.len());
    }
    ColumnStochasticAdjacency { offsets, rows }
}

impl ColumnStochasticAdjacency {
    /// Builds the adjacency from explicit neighbour lists (deduplicated).
    pub fn from_neighbors(neighbors: &[Vec<u32>]) -> Self {
        let mut offsets = vec![0];
        let mut rows = Vec::new();
        for list in neighbors {
            let mut l = list.clone();
            l.sort_unstable();
            l.dedup();
            rows.extend(l);
            offsets.push(rows.len());
        }
        Self { offsets, rows }
    }

    pub fn node_count(&self) -> usize {
        self.offsets.len() - 1
    }

    /// Distinct out-neighbours of column `j`.
    pub fn column(&self, j: usize) -> &[u32] {
        &self.rows[self.offsets[j]..self.offsets[j + 1]]
    }

    /// `m_ij`.
    pub fn entry(&self, i: usize, j: usize) -> f64 {
        let col = self.column(j);
        if col.binary_search(&(i as u32)).is_ok() {
            1.0 / col.len() as f64
        } else {
            0.0
        }
    }

    /// `out = scale * M x`, overwriting `out`.
    pub fn multiply(&self, x: &[f64], scale: f64, out: &mut [f64]) {
        out.iter_mut().for_each(|v| *v = 0.0);
        self.multiply_add(x, scale, out);
    }

    fn multiply_add(&self, x: &[f64], scale: f64, out: &mut [f64]) {
        for (j, &xj) in x.iter().enumerate() {
            if xj == 0.0 {
                continue;
            }
            let col = self.column(j);
            if col.is_empty() {
                continue;
            }
            let share = scale * xj / col.len() as f64;
            for &i in col {
                out[i as usize] += share;
            }
        }
    }
}

/// Runs `iterations` steps of `r <- (1 - alpha) M r + alpha p` from `r = p`,
/// with `p` the indicator of `source`.
pub fn ppr_scores(adj: &ColumnStochasticAdjacency, source: u32, alpha: f64, iterations: usize) -> Result<Vec<f64>> {
    let n = adj.node_count();
    if source as usize >= n {
        return Err(Error::Index {
            what: "node",
            index: source as usize,
            limit: n,
        });
    }
    check_alpha(alpha)?;
    let mut r = vec![0.0; n];
    r[source as usize] = 1.0;
    let mut next = vec![0.0; n];
    for _ in 0..iterations {
        ppr_step(adj, &r, source, alpha, &mut next);
        core::mem::swap(&mut r, &mut next);
    }
    Ok(r)
}

/// One power-iteration step into `out`.
pub fn ppr_step(adj: &ColumnStochasticAdjacency, r: &[f64], source: u32, alpha: f64, out: &mut [f64]) {
    adj.multiply(r, 1.0 - alpha, out);
    out[source as usize] += alpha;
}

fn check_alpha(alpha: f64) -> Result<()> {
    if alpha > 0.0 && alpha < 1.0 {
        Ok(())
    } else {
        Err(Error::Config(alloc::format!(
            "restart probability {alpha} outside (0,1)"
        )))
    }
}

/// Dense per-user PageRank vectors over all nodes, row-major by user.
#[derive(Debug, Clone, PartialEq)]
pub struct PprStore {
    alpha: f64,
    iterations: usize,
    node_count: usize,
    scores: Vec<f64>,
}

impl PprStore {
    pub fn from_raw(alpha: f64, iterations: usize, node_count: usize, scores: Vec<f64>) -> Result<Self> {
        if node_count == 0 && !scores.is_empty() || node_count > 0 && !scores.len().is_multiple_of(node_count) {
            return Err(Error::Contract("score buffer is not a whole number of vectors".into()));
        }
        Ok(Self {
            alpha,
            iterations,
            node_count,
            scores,
        })
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn iterations(&self) -> usize {
        self.iterations
    }

    pub fn node_count(&self) -> usize {
        self.node_count
    }

    pub fn user_count(&self) -> usize {
        self.scores.len().checked_div(self.node_count).unwrap_or(0)
    }

    /// Score vector of a user (users are the first global nodes).
    pub fn scores(&self, user: u32) -> &[f64] {
        let a = user as usize * self.node_count;
        &self.scores[a..a + self.node_count]
    }

    pub fn raw(&self) -> &[f64] {
        &self.scores
    }

    /// Whether the store has a vector for every user of `ckg` over its nodes.
    pub fn covers(&self, ckg: &CollaborativeKG) -> bool {
        self.node_count == ckg.node_count() && self.user_count() >= ckg.user_count()
    }
}

/// PageRank vectors for every user of the graph.
pub fn ppr_all_users<E: Executor>(ckg: &CollaborativeKG, alpha: f64, iterations: usize, exec: &E) -> Result<PprStore> {
    check_alpha(alpha)?;
    let adj = normalized_adjacency(ckg);
    let rows = exec.map(ckg.user_count(), |u| {
        ppr_scores(&adj, ckg.user_node(u as u32), alpha, iterations).expect("user node in range")
    });
    let mut scores = Vec::with_capacity(ckg.user_count() * ckg.node_count());
    for r in rows {
        scores.extend(r);
    }
    PprStore::from_raw(alpha, iterations, ckg.node_count(), scores)
}
