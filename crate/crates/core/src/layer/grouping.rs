use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::SeededRng;

/// Partition of a layer's output maps into equal-size groups, each feeding
/// its own next-layer dictionary.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GroupAssignment {
    groups: Vec<Vec<usize>>,
}

impl GroupAssignment {
    /// Checks that `groups` partition `0..k1` into equal sizes.
    pub fn new(groups: Vec<Vec<usize>>, k1: usize) -> Result<Self> {
        let n_k = groups.first().map_or(0, Vec::len);
        if n_k == 0 || groups.iter().any(|g| g.len() != n_k) {
            return Err(Error::InvalidGrouping { k1, n_k });
        }
        let mut seen = vec![false; k1];
        for &i in groups.iter().flatten() {
            if i >= k1 || std::mem::replace(&mut seen[i], true) {
                return Err(Error::InvalidGrouping { k1, n_k });
            }
        }
        if seen.iter().any(|s| !s) {
            return Err(Error::InvalidGrouping { k1, n_k });
        }
        Ok(Self { groups })
    }

    pub fn groups(&self) -> &[Vec<usize>] {
        &self.groups
    }

    pub fn len(&self) -> usize {
        self.groups.len()
    }

    pub fn is_empty(&self) -> bool {
        self.groups.is_empty()
    }

    pub fn group_size(&self) -> usize {
        self.groups[0].len()
    }

    pub fn total(&self) -> usize {
        self.groups.len() * self.group_size()
    }
}

/// Random partition of `0..k1` into groups of `n_k`; indices within a group
/// are sorted.
pub fn make_groups(k1: usize, n_k: usize, rng: &mut SeededRng) -> Result<GroupAssignment> {
    if n_k == 0 || k1 == 0 || !k1.is_multiple_of(n_k) {
        return Err(Error::InvalidGrouping { k1, n_k });
    }
    let mut perm: Vec<usize> = (0..k1).collect();
    rng.shuffle(&mut perm);
    let groups = perm
        .chunks(n_k)
        .map(|c| {
            let mut g = c.to_vec();
            g.sort_unstable();
            g
        })
        .collect();
    GroupAssignment::new(groups, k1)
}
