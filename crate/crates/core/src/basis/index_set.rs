use std::collections::HashMap;

use crate::error::{Error, Result};
use crate::numeric::binomial;

/// Default bound on the number of multi-indices.
pub const DEFAULT_SIZE_CAP: usize = 5000;

/// A finite set of multi-indices in lexicographic order.
///
/// Position `i` in the set is the ordering σ; [`IndexSet::position`] is σ
/// and [`IndexSet::get`] is σ⁻¹.
#[derive(Debug, Clone, PartialEq)]
pub struct IndexSet {
    dim: usize,
    degree: u32,
    flat: Vec<u32>,
    lookup: HashMap<Vec<u32>, usize>,
}

impl IndexSet {
    /// All multi-indices with total degree at most `p`.
    pub fn total_degree(d: usize, p: u32) -> Result<Self> {
        Self::total_degree_capped(d, p, DEFAULT_SIZE_CAP)
    }

    pub fn total_degree_capped(d: usize, p: u32, cap: usize) -> Result<Self> {
        if d == 0 {
            return Err(Error::Argument("dimension must be positive".into()));
        }
        let expected = binomial(p as u64 + d as u64, d as u64);
        if expected > cap as f64 {
            return Err(Error::SizeLimit {
                size: expected as usize,
                cap,
            });
        }
        let mut out = Vec::with_capacity(expected as usize);
        let mut current = vec![0u32; d];
        enumerate(&mut current, 0, p, &mut out);
        Self::from_sorted(d, out)
    }

    /// Full tensor set `{0..=degrees[0]} × … × {0..=degrees[d-1]}`.
    pub fn tensor(degrees: &[u32]) -> Result<Self> {
        if degrees.is_empty() {
            return Err(Error::Argument("dimension must be positive".into()));
        }
        let mut sets: Vec<Vec<u32>> = vec![vec![]];
        for &deg in degrees {
            let mut next = Vec::new();
            for prefix in &sets {
                for a in 0..=deg {
                    let mut v = prefix.clone();
                    v.push(a);
                    next.push(v);
                }
            }
            sets = next;
        }
        Self::from_indices(degrees.len(), sets)
    }

    /// Arbitrary indices; sorted and deduplicated.
    pub fn from_indices(d: usize, mut indices: Vec<Vec<u32>>) -> Result<Self> {
        if d == 0 {
            return Err(Error::Argument("dimension must be positive".into()));
        }
        if indices.iter().any(|a| a.len() != d) {
            return Err(Error::Argument("multi-index length mismatch".into()));
        }
        indices.sort();
        indices.dedup();
        if indices.is_empty() {
            return Err(Error::Argument("index set is empty".into()));
        }
        Self::from_sorted(d, indices)
    }

    fn from_sorted(d: usize, indices: Vec<Vec<u32>>) -> Result<Self> {
        let mut flat = Vec::with_capacity(indices.len() * d);
        let mut lookup = HashMap::with_capacity(indices.len());
        let mut degree = 0;
        for (i, a) in indices.into_iter().enumerate() {
            degree = degree.max(a.iter().sum());
            flat.extend_from_slice(&a);
            lookup.insert(a, i);
        }
        Ok(Self {
            dim: d,
            degree,
            flat,
            lookup,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Largest total degree present.
    pub fn degree(&self) -> u32 {
        self.degree
    }

    pub fn len(&self) -> usize {
        self.flat.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.flat.is_empty()
    }

    pub fn get(&self, i: usize) -> &[u32] {
        &self.flat[i * self.dim..(i + 1) * self.dim]
    }

    pub fn position(&self, alpha: &[u32]) -> Option<usize> {
        self.lookup.get(alpha).copied()
    }

    pub fn iter(&self) -> impl Iterator<Item = &[u32]> {
        self.flat.chunks_exact(self.dim)
    }

    /// Largest degree appearing in coordinate `k`.
    pub fn max_degree(&self, k: usize) -> u32 {
        self.iter().map(|a| a[k]).max().unwrap_or(0)
    }

    /// Whether the constant index is present.
    pub fn contains_zero(&self) -> bool {
        self.position(&vec![0; self.dim]).is_some()
    }

    /// Projection of the set obtained by deleting coordinate `l`.
    pub fn remove_coordinate(&self, l: usize) -> Result<Self> {
        if l >= self.dim || self.dim == 1 {
            return Err(Error::Argument(format!(
                "cannot remove coordinate {l} from a {}-dimensional set",
                self.dim
            )));
        }
        let reduced: Vec<Vec<u32>> = self
            .iter()
            .map(|a| {
                let mut v = a.to_vec();
                v.remove(l);
                v
            })
            .collect();
        Self::from_indices(self.dim - 1, reduced)
    }

    /// Projection onto the leading `k` coordinates.
    pub fn prefix(&self, k: usize) -> Result<Self> {
        if k == 0 || k > self.dim {
            return Err(Error::Argument(format!("invalid prefix length {k}")));
        }
        let reduced: Vec<Vec<u32>> = self.iter().map(|a| a[..k].to_vec()).collect();
        Self::from_indices(k, reduced)
    }

    /// Encoding as (dimension, flat indices), used by the model file.
    pub fn flat(&self) -> &[u32] {
        &self.flat
    }
}

fn enumerate(current: &mut Vec<u32>, k: usize, remaining: u32, out: &mut Vec<Vec<u32>>) {
    let d = current.len();
    if k == d - 1 {
        for a in 0..=remaining {
            current[k] = a;
            out.push(current.clone());
        }
        current[k] = 0;
        return;
    }
    for a in 0..=remaining {
        current[k] = a;
        enumerate(current, k + 1, remaining - a, out);
    }
    current[k] = 0;
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cardinalities() {
        assert_eq!(IndexSet::total_degree(2, 3).unwrap().len(), 10);
        assert_eq!(IndexSet::total_degree(1, 0).unwrap().len(), 1);
        assert_eq!(IndexSet::total_degree(3, 2).unwrap().len(), 10);
        assert_eq!(IndexSet::total_degree(10, 2).unwrap().len(), 66);
    }

    #[test]
    fn lexicographic_and_bijective() {
        let set = IndexSet::total_degree(3, 3).unwrap();
        let all: Vec<&[u32]> = set.iter().collect();
        for w in all.windows(2) {
            assert!(w[0] < w[1]);
        }
        for (i, a) in set.iter().enumerate() {
            assert_eq!(set.position(a), Some(i));
        }
        assert_eq!(set.get(0), &[0, 0, 0]);
    }

    #[test]
    fn size_cap_is_enforced() {
        let err = IndexSet::total_degree(20, 6).unwrap_err();
        assert!(matches!(err, Error::SizeLimit { .. }));
    }

    #[test]
    fn tensor_set_and_reduction() {
        let set = IndexSet::tensor(&[1, 1]).unwrap();
        assert_eq!(set.len(), 4);
        let r = set.remove_coordinate(1).unwrap();
        assert_eq!(r.len(), 2);
        assert_eq!(set.prefix(1).unwrap().len(), 2);
    }
}
