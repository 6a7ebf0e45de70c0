use std::cmp::Ordering;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::measures::{pair_count, CorrelationLowerTriangle};

/// Set of lower-triangle pairs exempted from the correlation loss.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PairMask {
    o: usize,
    // sorted, unique
    exempt: Vec<usize>,
}

impl PairMask {
    pub fn empty(o: usize) -> Self {
        Self {
            o,
            exempt: Vec::new(),
        }
    }

    pub fn new(o: usize, mut exempt: Vec<usize>) -> Result<Self> {
        exempt.sort_unstable();
        let len = exempt.len();
        exempt.dedup();
        if exempt.len() != len {
            return Err(Error::Shape("duplicate exempt pair index".into()));
        }
        if let Some(&bad) = exempt.iter().find(|&&p| p >= pair_count(o)) {
            return Err(Error::Shape(format!(
                "exempt pair {bad} out of range for {o} filters"
            )));
        }
        Ok(Self { o, exempt })
    }

    pub fn filters(&self) -> usize {
        self.o
    }

    pub fn exempt(&self) -> &[usize] {
        &self.exempt
    }

    pub fn len(&self) -> usize {
        self.exempt.len()
    }

    pub fn is_empty(&self) -> bool {
        self.exempt.is_empty()
    }

    pub fn is_exempt(&self, pair: usize) -> bool {
        self.exempt.binary_search(&pair).is_ok()
    }

    /// Boolean view indexed by pair.
    pub fn to_flags(&self) -> Vec<bool> {
        let mut flags = vec![false; pair_count(self.o)];
        for &p in &self.exempt {
            flags[p] = true;
        }
        flags
    }
}

/// Exempts the `n_pos` largest positive and the `n_neg` most negative
/// correlations. Requests beyond the number of qualifying entries are
/// clamped; ties go to the smaller pair index.
pub fn build_exemption_mask(
    tril: &CorrelationLowerTriangle,
    n_pos: usize,
    n_neg: usize,
) -> PairMask {
    let entries = tril.entries();

    let mut positive: Vec<usize> = (0..entries.len()).filter(|&p| entries[p] > 0.0).collect();
    positive.sort_by(|&a, &b| {
        entries[b]
            .partial_cmp(&entries[a])
            .unwrap_or(Ordering::Equal)
            .then(a.cmp(&b))
    });
    let mut negative: Vec<usize> = (0..entries.len()).filter(|&p| entries[p] < 0.0).collect();
    negative.sort_by(|&a, &b| {
        entries[a]
            .partial_cmp(&entries[b])
            .unwrap_or(Ordering::Equal)
            .then(a.cmp(&b))
    });

    let mut exempt: Vec<usize> = positive
        .into_iter()
        .take(n_pos)
        .chain(negative.into_iter().take(n_neg))
        .collect();
    exempt.sort_unstable();
    PairMask {
        o: tril.filters(),
        exempt,
    }
}
