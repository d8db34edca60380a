//! Seeded patient-level train/validation/test partition.

use std::collections::{BTreeMap, BTreeSet};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{ReportError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SplitTag {
    Train,
    Val,
    Test,
}

impl SplitTag {
    pub const ALL: [SplitTag; 3] = [SplitTag::Train, SplitTag::Val, SplitTag::Test];

    pub fn name(self) -> &'static str {
        match self {
            SplitTag::Train => "train",
            SplitTag::Val => "val",
            SplitTag::Test => "test",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Split {
    /// Tag for each input item, in input order.
    pub assignment: Vec<SplitTag>,
    pub patients: BTreeMap<SplitTag, Vec<String>>,
}

impl Split {
    pub fn indices(&self, tag: SplitTag) -> Vec<usize> {
        (0..self.assignment.len()).filter(|&i| self.assignment[i] == tag).collect()
    }
}

/// Patient counts per split: rounded shares, each split at least one.
pub fn split_counts(n: usize, ratios: [f64; 3]) -> Result<[usize; 3]> {
    let sum: f64 = ratios.iter().sum();
    if ratios.iter().any(|r| !(*r >= 0.0)) || (sum - 1.0).abs() > 1e-9 {
        return Err(ReportError::BadRatios(ratios));
    }
    if n < 3 {
        return Err(ReportError::TooFewPatients(n));
    }
    let mut val = ((ratios[1] * n as f64).round() as usize).max(1);
    let mut test = ((ratios[2] * n as f64).round() as usize).max(1);
    while val + test > n - 1 {
        if val >= test {
            val -= 1;
        } else {
            test -= 1;
        }
    }
    Ok([n - val - test, val, test])
}

/// Shuffles the distinct patients of `items` and partitions them; every item
/// inherits its patient's split.
pub fn patient_split<T>(items: &[T], patient_of: impl Fn(&T) -> &str, ratios: [f64; 3], seed: u64) -> Result<Split> {
    let mut patients: Vec<String> =
        items.iter().map(|t| patient_of(t).to_string()).collect::<BTreeSet<_>>().into_iter().collect();
    let counts = split_counts(patients.len(), ratios)?;
    patients.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));

    let mut tag_of: BTreeMap<&str, SplitTag> = BTreeMap::new();
    let mut grouped: BTreeMap<SplitTag, Vec<String>> = BTreeMap::new();
    let mut offset = 0;
    for (tag, count) in SplitTag::ALL.into_iter().zip(counts) {
        let mut group: Vec<String> = patients[offset..offset + count].to_vec();
        for p in &patients[offset..offset + count] {
            tag_of.insert(p.as_str(), tag);
        }
        group.sort();
        grouped.insert(tag, group);
        offset += count;
    }
    let assignment = items.iter().map(|t| tag_of[patient_of(t)]).collect();
    Ok(Split { assignment, patients: grouped })
}
