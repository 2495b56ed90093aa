//! Binary adjacency structures.
//!
//! Cell `(i, j)` set means an edge `j -> i`, the same orientation as the
//! coefficient `b_ij` (effect of variable `j` on variable `i`).

use serde::{Deserialize, Deserializer, Serialize, Serializer};
use std::collections::VecDeque;

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Adjacency {
    size: usize,
    cells: Vec<bool>,
}

impl Adjacency {
    pub fn empty(size: usize) -> Self {
        Self {
            size,
            cells: vec![false; size * size],
        }
    }

    pub fn size(&self) -> usize {
        self.size
    }

    /// Whether the edge `from -> to` is present.
    pub fn has_edge(&self, to: usize, from: usize) -> bool {
        self.cells[to * self.size + from]
    }

    pub fn set_edge(&mut self, to: usize, from: usize, present: bool) {
        self.cells[to * self.size + from] = present;
    }

    pub fn edge_count(&self) -> usize {
        self.cells.iter().filter(|&&c| c).count()
    }

    /// Kahn's algorithm; self-loops count as cycles.
    pub fn is_acyclic(&self) -> bool {
        self.topological_order().is_some()
    }

    pub fn topological_order(&self) -> Option<Vec<usize>> {
        let n = self.size;
        let mut indegree = vec![0usize; n];
        for to in 0..n {
            for from in 0..n {
                if self.has_edge(to, from) {
                    indegree[to] += 1;
                }
            }
        }
        let mut queue: VecDeque<usize> = (0..n).filter(|&v| indegree[v] == 0).collect();
        let mut order = Vec::with_capacity(n);
        while let Some(v) = queue.pop_front() {
            order.push(v);
            for to in 0..n {
                if self.has_edge(to, v) {
                    indegree[to] -= 1;
                    if indegree[to] == 0 {
                        queue.push_back(to);
                    }
                }
            }
        }
        (order.len() == n).then_some(order)
    }

    pub fn to_rows(&self) -> Vec<Vec<u8>> {
        self.cells
            .chunks(self.size.max(1))
            .take(self.size)
            .map(|r| r.iter().map(|&c| u8::from(c)).collect())
            .collect()
    }

    pub fn from_rows(rows: &[Vec<u8>]) -> Option<Self> {
        let size = rows.len();
        if rows
            .iter()
            .any(|r| r.len() != size || r.iter().any(|&c| c > 1))
        {
            return None;
        }
        Some(Self {
            size,
            cells: rows.iter().flatten().map(|&c| c == 1).collect(),
        })
    }
}

impl Serialize for Adjacency {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        self.to_rows().serialize(s)
    }
}

impl<'de> Deserialize<'de> for Adjacency {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let rows = Vec::<Vec<u8>>::deserialize(d)?;
        Adjacency::from_rows(&rows)
            .ok_or_else(|| serde::de::Error::custom("adjacency must be a square 0/1 matrix"))
    }
}
