use std::fmt;

use serde::{Deserialize, Serialize};

/// Identity of a backend solver.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct SolverId {
    pub name: String,
    pub version: String,
}

impl SolverId {
    pub fn new(name: impl Into<String>, version: impl Into<String>) -> Self {
        SolverId {
            name: name.into(),
            version: version.into(),
        }
    }

    /// Splits `Name-1.2.3` at the last hyphen followed by a digit. Labels
    /// without such a suffix get an empty version.
    pub fn from_label(label: &str) -> Self {
        match label.rfind('-') {
            Some(i)
                if i > 0 && label[i + 1..].starts_with(|c: char| c.is_ascii_digit()) =>
            {
                SolverId::new(&label[..i], &label[i + 1..])
            }
            _ => SolverId::new(label, ""),
        }
    }

    pub fn label(&self) -> String {
        self.to_string()
    }
}

impl fmt::Display for SolverId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.version.is_empty() {
            f.write_str(&self.name)
        } else {
            write!(f, "{}-{}", self.name, self.version)
        }
    }
}

/// An ordering of roster positions, best first.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct SolverRanking(pub Vec<usize>);

impl SolverRanking {
    pub fn identity(n: usize) -> Self {
        SolverRanking((0..n).collect())
    }

    /// Sorts roster positions by ascending key; equal keys keep roster order.
    pub fn by_ascending(keys: &[f64]) -> Self {
        let mut idx: Vec<usize> = (0..keys.len()).collect();
        idx.sort_by(|&a, &b| keys[a].total_cmp(&keys[b]));
        SolverRanking(idx)
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn reversed(&self) -> Self {
        SolverRanking(self.0.iter().rev().copied().collect())
    }

    pub fn head(&self) -> Option<usize> {
        self.0.first().copied()
    }

    /// True if this is a permutation of `0..n`.
    pub fn is_permutation_of(&self, n: usize) -> bool {
        let mut seen = vec![false; n];
        self.0.len() == n
            && self.0.iter().all(|&s| s < n && !std::mem::replace(&mut seen[s], true))
    }

    /// `positions()[s]` is the 0-based rank of roster solver `s`.
    pub fn positions(&self) -> Vec<usize> {
        let mut pos = vec![usize::MAX; self.0.len()];
        for (i, &s) in self.0.iter().enumerate() {
            if s < pos.len() {
                pos[s] = i;
            }
        }
        pos
    }

    pub fn labels(&self, roster: &[SolverId]) -> Vec<String> {
        self.0.iter().map(|&s| roster[s].label()).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn labels() {
        assert_eq!(SolverId::from_label("Alt-Ergo-1.01"), SolverId::new("Alt-Ergo", "1.01"));
        assert_eq!(SolverId::from_label("veriT"), SolverId::new("veriT", ""));
        assert_eq!(SolverId::from_label("Z3-4.3.2").label(), "Z3-4.3.2");
        assert_eq!(SolverId::from_label("-1").label(), "-1");
    }

    #[test]
    fn ascending_ties_keep_roster_order() {
        assert_eq!(SolverRanking::by_ascending(&[2.0, 1.0, 2.0, 0.5]).0, vec![3, 1, 0, 2]);
        assert_eq!(SolverRanking::by_ascending(&[1.0; 4]).0, vec![0, 1, 2, 3]);
    }

    #[test]
    fn permutation_check() {
        assert!(SolverRanking(vec![2, 0, 1]).is_permutation_of(3));
        assert!(!SolverRanking(vec![0, 0, 1]).is_permutation_of(3));
        assert!(!SolverRanking(vec![0, 1]).is_permutation_of(3));
        assert_eq!(SolverRanking(vec![2, 0, 1]).positions(), vec![1, 2, 0]);
    }
}
