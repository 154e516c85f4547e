use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Provenance {
    Predefined,
    Learnt,
}

/// Directed communication graph; `edges[i][j]` means `i` sends to `j`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CommGraph {
    n: usize,
    edges: Vec<bool>,
    provenance: Provenance,
}

impl CommGraph {
    pub fn empty(n: usize, provenance: Provenance) -> Self {
        Self {
            n,
            edges: vec![false; n * n],
            provenance,
        }
    }

    /// Every ordered pair except self-loops.
    pub fn complete(n: usize, provenance: Provenance) -> Self {
        let mut g = Self::empty(n, provenance);
        for i in 0..n {
            for j in 0..n {
                if i != j {
                    g.edges[i * n + j] = true;
                }
            }
        }
        g
    }

    /// Symmetric graph from undirected pairs.
    pub fn undirected(n: usize, pairs: &[(usize, usize)], provenance: Provenance) -> Result<Self> {
        let mut g = Self::empty(n, provenance);
        for &(a, b) in pairs {
            g.add_edge(a, b)?;
            g.add_edge(b, a)?;
        }
        Ok(g)
    }

    pub fn from_adjacency(adj: &[Vec<bool>], provenance: Provenance) -> Result<Self> {
        let n = adj.len();
        let mut g = Self::empty(n, provenance);
        for (i, row) in adj.iter().enumerate() {
            if row.len() != n {
                return Err(Error::dim("CommGraph::from_adjacency", format!("{n} nodes"), format!("row {i} of width {}", row.len())));
            }
            for (j, &e) in row.iter().enumerate() {
                if e {
                    g.add_edge(i, j)?;
                }
            }
        }
        Ok(g)
    }

    pub fn add_edge(&mut self, from: usize, to: usize) -> Result<()> {
        if from >= self.n || to >= self.n {
            return Err(Error::AgentIndex {
                agent: from.max(to),
                n: self.n,
            });
        }
        if from == to {
            return Err(Error::Protocol(format!("self-edge at node {from}")));
        }
        self.edges[from * self.n + to] = true;
        Ok(())
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn provenance(&self) -> Provenance {
        self.provenance
    }

    #[inline]
    pub fn has_edge(&self, from: usize, to: usize) -> bool {
        self.edges[from * self.n + to]
    }

    pub fn edge_count(&self) -> usize {
        self.edges.iter().filter(|&&e| e).count()
    }

    /// Senders into `node`, ascending.
    pub fn in_neighbors(&self, node: usize) -> Vec<usize> {
        (0..self.n).filter(|&j| self.has_edge(j, node)).collect()
    }

    pub fn out_neighbors(&self, node: usize) -> Vec<usize> {
        (0..self.n).filter(|&j| self.has_edge(node, j)).collect()
    }

    pub fn max_in_degree(&self) -> usize {
        (0..self.n).map(|i| self.in_neighbors(i).len()).max().unwrap_or(0)
    }

    /// Relabels nodes: node `i` becomes `perm[i]`.
    pub fn permuted(&self, perm: &[usize]) -> Self {
        let mut g = Self::empty(self.n, self.provenance);
        for i in 0..self.n {
            for j in 0..self.n {
                if self.has_edge(i, j) {
                    g.edges[perm[i] * self.n + perm[j]] = true;
                }
            }
        }
        g
    }
}
