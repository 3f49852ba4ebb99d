//! Basis relabelings and their cycle structure.

use std::fmt;
use std::sync::OnceLock;

use serde::Serialize;

use crate::error::{Error, Result};

/// A bijection on `{0, …, size-1}`; `map[i]` is where source index `i` goes.
#[derive(Clone)]
pub struct Permutation {
    map: Vec<usize>,
    cycles: OnceLock<Vec<Vec<usize>>>,
}

impl PartialEq for Permutation {
    fn eq(&self, other: &Self) -> bool {
        self.map == other.map
    }
}

impl Eq for Permutation {}

impl fmt::Debug for Permutation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_tuple("Permutation").field(&self.map).finish()
    }
}

impl Permutation {
    pub fn new(map: Vec<usize>) -> Result<Self> {
        let mut seen = vec![false; map.len()];
        for (i, &dest) in map.iter().enumerate() {
            if dest >= map.len() {
                return Err(Error::InvalidPermutation(format!(
                    "source {i} maps to {dest}, outside 0..{}",
                    map.len()
                )));
            }
            if std::mem::replace(&mut seen[dest], true) {
                return Err(Error::InvalidPermutation(format!(
                    "destination {dest} is hit twice"
                )));
            }
        }
        Ok(Self::from_valid(map))
    }

    fn from_valid(map: Vec<usize>) -> Self {
        Self {
            map,
            cycles: OnceLock::new(),
        }
    }

    pub fn identity(size: usize) -> Self {
        Self::from_valid((0..size).collect())
    }

    /// Builds the permutation whose output position `k` receives source
    /// `order[k]`, i.e. the inverse of `order` read as a map.
    pub fn from_order(order: &[usize]) -> Result<Self> {
        Ok(Self::new(order.to_vec())?.inverse())
    }

    /// Recomposes a permutation from disjoint cycles `[a, b, c]` meaning
    /// `a → b → c → a`. Indices not mentioned are fixed.
    pub fn from_cycles(size: usize, cycles: &[Vec<usize>]) -> Result<Self> {
        let mut map: Vec<usize> = (0..size).collect();
        let mut seen = vec![false; size];
        for cycle in cycles {
            for (k, &src) in cycle.iter().enumerate() {
                if src >= size || std::mem::replace(&mut seen[src], true) {
                    return Err(Error::InvalidPermutation(format!(
                        "cycle element {src} is out of range or repeated"
                    )));
                }
                map[src] = cycle[(k + 1) % cycle.len()];
            }
        }
        Self::new(map)
    }

    pub fn size(&self) -> usize {
        self.map.len()
    }

    pub fn map(&self) -> &[usize] {
        &self.map
    }

    pub fn is_identity(&self) -> bool {
        self.map.iter().enumerate().all(|(i, &d)| i == d)
    }

    /// Moves `values[i]` to position `map[i]`.
    pub fn apply<T: Copy + Default>(&self, values: &[T]) -> Result<Vec<T>> {
        if values.len() != self.size() {
            return Err(Error::DimensionMismatch {
                expected: self.size(),
                actual: values.len(),
            });
        }
        let mut out = vec![T::default(); values.len()];
        for (src, &dest) in self.map.iter().enumerate() {
            out[dest] = values[src];
        }
        Ok(out)
    }

    pub fn inverse(&self) -> Self {
        let mut inv = vec![0; self.size()];
        for (src, &dest) in self.map.iter().enumerate() {
            inv[dest] = src;
        }
        Self::from_valid(inv)
    }

    /// `self ∘ other`: apply `other` first, then `self`.
    pub fn compose(&self, other: &Permutation) -> Result<Self> {
        if self.size() != other.size() {
            return Err(Error::DimensionMismatch {
                expected: self.size(),
                actual: other.size(),
            });
        }
        Ok(Self::from_valid(
            other.map.iter().map(|&i| self.map[i]).collect(),
        ))
    }

    /// Disjoint cycles, each rotated to start at its smallest element and
    /// listed by that element. Fixed points appear as 1-cycles.
    pub fn cycles(&self) -> &[Vec<usize>] {
        self.cycles.get_or_init(|| {
            let mut seen = vec![false; self.size()];
            let mut cycles = Vec::new();
            for start in 0..self.size() {
                if seen[start] {
                    continue;
                }
                let mut cycle = Vec::new();
                let mut i = start;
                while !seen[i] {
                    seen[i] = true;
                    cycle.push(i);
                    i = self.map[i];
                }
                cycles.push(cycle);
            }
            cycles
        })
    }

    pub fn cycle_lengths(&self) -> Vec<usize> {
        self.cycles().iter().map(Vec::len).collect()
    }
}

pub fn cycle_decomposition(perm: &Permutation) -> Vec<Vec<usize>> {
    perm.cycles().to_vec()
}

/// Number of distinct cycle lengths, with and without 1-cycles.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct Nbds {
    pub incl_fixed: usize,
    pub excl_fixed: usize,
}

pub fn nbds(perm: &Permutation) -> Nbds {
    let mut lengths = perm.cycle_lengths();
    lengths.sort_unstable();
    lengths.dedup();
    let incl_fixed = lengths.len();
    let excl_fixed = lengths.iter().filter(|&&l| l > 1).count();
    Nbds {
        incl_fixed,
        excl_fixed,
    }
}
