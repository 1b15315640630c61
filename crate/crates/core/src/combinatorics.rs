//! Combinatorial data (π_t, π_b) and the singularity structure.

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum CombinatoricsError {
    #[error("need at least two intervals, got {0}")]
    TooShort(usize),
    #[error("rows are not permutations of 1..={d}")]
    NotAPermutation { d: usize },
    #[error("reducible: the first {0} labels agree on both rows")]
    Reducible(usize),
}

/// An irreducible pair of orders on the labels.
///
/// Labels are `0..d` internally; the public constructors and the JSON form
/// use the usual `1..=d`.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "RawCombinatorics", into = "RawCombinatorics")]
pub struct Combinatorics {
    top: Vec<usize>,
    bottom: Vec<usize>,
}

#[derive(Serialize, Deserialize)]
struct RawCombinatorics {
    top: Vec<usize>,
    bottom: Vec<usize>,
}

impl TryFrom<RawCombinatorics> for Combinatorics {
    type Error = CombinatoricsError;
    fn try_from(r: RawCombinatorics) -> Result<Self, Self::Error> {
        Combinatorics::new(&r.top, &r.bottom)
    }
}

impl From<Combinatorics> for RawCombinatorics {
    fn from(c: Combinatorics) -> Self {
        let (top, bottom) = c.one_based();
        RawCombinatorics { top, bottom }
    }
}

impl Combinatorics {
    /// Validate rows given with labels `1..=d`.
    pub fn new(top: &[usize], bottom: &[usize]) -> Result<Self, CombinatoricsError> {
        let d = top.len();
        if d < 2 {
            return Err(CombinatoricsError::TooShort(d));
        }
        let shift = |r: &[usize]| -> Option<Vec<usize>> {
            r.iter().map(|&l| l.checked_sub(1)).collect()
        };
        match (shift(top), shift(bottom)) {
            (Some(t), Some(b)) => Self::from_zero_based(t, b),
            _ => Err(CombinatoricsError::NotAPermutation { d }),
        }
    }

    pub fn from_zero_based(top: Vec<usize>, bottom: Vec<usize>) -> Result<Self, CombinatoricsError> {
        let d = top.len();
        if d < 2 {
            return Err(CombinatoricsError::TooShort(d));
        }
        if bottom.len() != d || !is_perm(&top) || !is_perm(&bottom) {
            return Err(CombinatoricsError::NotAPermutation { d });
        }
        // `open` counts labels seen in exactly one of the two prefixes.
        let mut seen_t = vec![false; d];
        let mut seen_b = vec![false; d];
        let mut open = 0i64;
        for k in 0..d - 1 {
            seen_t[top[k]] = true;
            open += if seen_b[top[k]] { -1 } else { 1 };
            seen_b[bottom[k]] = true;
            open += if seen_t[bottom[k]] { -1 } else { 1 };
            if open == 0 {
                return Err(CombinatoricsError::Reducible(k + 1));
            }
        }
        Ok(Combinatorics { top, bottom })
    }

    /// The rotation datum (1,2)/(2,1).
    pub fn rotation() -> Self {
        Combinatorics { top: vec![0, 1], bottom: vec![1, 0] }
    }

    /// Symmetric datum (1,…,d)/(d,…,1).
    pub fn reversal(d: usize) -> Self {
        assert!(d >= 2);
        Combinatorics { top: (0..d).collect(), bottom: (0..d).rev().collect() }
    }

    pub fn d(&self) -> usize {
        self.top.len()
    }

    /// Labels in top order.
    pub fn top(&self) -> &[usize] {
        &self.top
    }

    /// Labels in bottom order.
    pub fn bottom(&self) -> &[usize] {
        &self.bottom
    }

    pub fn top_position(&self, label: usize) -> usize {
        self.top.iter().position(|&l| l == label).expect("label out of range")
    }

    pub fn bottom_position(&self, label: usize) -> usize {
        self.bottom.iter().position(|&l| l == label).expect("label out of range")
    }

    pub fn one_based(&self) -> (Vec<usize>, Vec<usize>) {
        (self.top.iter().map(|l| l + 1).collect(), self.bottom.iter().map(|l| l + 1).collect())
    }

    pub(crate) fn from_rows_unchecked(top: Vec<usize>, bottom: Vec<usize>) -> Self {
        Combinatorics { top, bottom }
    }

    /// Cycle structure of the singularity permutation σ on the top
    /// endpoints u_0..u_d.
    ///
    /// With p(i) the bottom position of the interval at top position i
    /// (1-based), σ(0) = p⁻¹(1) − 1, σ(p⁻¹(d)) = d and otherwise
    /// σ(j) = p⁻¹(p(j) + 1) − 1. Each cycle is one singularity of the
    /// suspension surface.
    pub fn singularity_structure(&self) -> SingularityStructure {
        let d = self.d();
        // p and its inverse on 1..=d
        let mut p = vec![0usize; d + 1];
        let mut pinv = vec![0usize; d + 1];
        for i in 1..=d {
            p[i] = self.bottom_position(self.top[i - 1]) + 1;
            pinv[p[i]] = i;
        }
        let sigma = |j: usize| -> usize {
            if j == 0 {
                pinv[1] - 1
            } else if j == pinv[d] {
                d
            } else {
                pinv[p[j] + 1] - 1
            }
        };
        let mut assignment = vec![usize::MAX; d + 1];
        let mut kappa = 0;
        for start in 0..=d {
            if assignment[start] != usize::MAX {
                continue;
            }
            let mut j = start;
            while assignment[j] == usize::MAX {
                assignment[j] = kappa;
                j = sigma(j);
            }
            kappa += 1;
        }
        let genus = (d + 1 - kappa) / 2;
        SingularityStructure { genus, kappa, assignment }
    }
}

fn is_perm(r: &[usize]) -> bool {
    let mut seen = vec![false; r.len()];
    r.iter().all(|&l| l < r.len() && !std::mem::replace(&mut seen[l], true))
}

/// Genus, number of singularities and the class of each top endpoint.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SingularityStructure {
    pub genus: usize,
    pub kappa: usize,
    /// `assignment[i]` is the class (0-based) of the endpoint u_i, i = 0..=d.
    pub assignment: Vec<usize>,
}
