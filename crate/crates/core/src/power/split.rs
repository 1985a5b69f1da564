//! Block-wise train/validation/test assignment of calendar days.

use std::collections::BTreeMap;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

pub const BLOCK_LENGTH: usize = 12;
pub const TRAIN_DAYS: usize = 10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Val,
    Test,
}

/// Consecutive 12-day blocks from the first date: ten training days, then one
/// validation and one test day whose order alternates between blocks.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitPlan {
    pub start: NaiveDate,
    pub assignment: BTreeMap<NaiveDate, Split>,
}

impl SplitPlan {
    /// Plan covering every day from `start` to `end` inclusive.
    pub fn new(start: NaiveDate, end: NaiveDate) -> Self {
        let assignment = start
            .iter_days()
            .take_while(|d| *d <= end)
            .map(|d| (d, Self::label(start, d)))
            .collect();
        Self { start, assignment }
    }

    /// Plan spanning the dates in `dates`.
    pub fn covering(dates: impl IntoIterator<Item = NaiveDate>) -> Option<Self> {
        let mut it = dates.into_iter();
        let first = it.next()?;
        let (lo, hi) = it.fold((first, first), |(lo, hi), d| (lo.min(d), hi.max(d)));
        Some(Self::new(lo, hi))
    }

    fn label(start: NaiveDate, date: NaiveDate) -> Split {
        let offset = (date - start).num_days() as usize;
        let (block, day) = (offset / BLOCK_LENGTH, offset % BLOCK_LENGTH);
        match (day >= TRAIN_DAYS, day == TRAIN_DAYS, block % 2 == 0) {
            (false, _, _) => Split::Train,
            (true, first, even) if first == even => Split::Val,
            _ => Split::Test,
        }
    }

    pub fn get(&self, date: NaiveDate) -> Option<Split> {
        self.assignment.get(&date).copied()
    }

    pub fn dates(&self, split: Split) -> impl Iterator<Item = NaiveDate> + '_ {
        self.assignment.iter().filter(move |(_, s)| **s == split).map(|(d, _)| *d)
    }

    pub fn count(&self, split: Split) -> usize {
        self.dates(split).count()
    }
}
