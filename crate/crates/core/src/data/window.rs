//! Chronological splits and sliding-window samples.

use super::{DataError, Result};
use crate::tensor::Tensor;
use serde::{Deserialize, Serialize};
use std::fmt;
use std::sync::Arc;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SplitTag {
    Train,
    Val,
    Test,
}

impl SplitTag {
    pub const ALL: [SplitTag; 3] = [Self::Train, Self::Val, Self::Test];

    pub fn name(&self) -> &'static str {
        match self {
            Self::Train => "train",
            Self::Val => "val",
            Self::Test => "test",
        }
    }
}

impl fmt::Display for SplitTag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for SplitTag {
    type Err = DataError;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|t| t.name().eq_ignore_ascii_case(s) || (s.eq_ignore_ascii_case("validation") && *t == Self::Val))
            .ok_or_else(|| DataError::InvalidArgument(format!("unknown split `{s}`")))
    }
}

/// How the time axis is cut into train / validation / test.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SplitRule {
    /// Consecutive shares of the time axis (rounded to whole steps).
    Fractions { train: f64, val: f64, test: f64 },
    /// The last `test_weeks` weeks are test, the `val_weeks` before that
    /// validation, everything earlier training.
    TrailingWeeks { val_weeks: usize, test_weeks: usize },
}

impl SplitRule {
    pub fn sixty_twenty_twenty() -> Self {
        Self::Fractions {
            train: 0.6,
            val: 0.2,
            test: 0.2,
        }
    }

    pub fn two_weeks_each() -> Self {
        Self::TrailingWeeks {
            val_weeks: 2,
            test_weeks: 2,
        }
    }
}

/// Number of time steps in each split; splits are contiguous and ordered.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitSizes {
    pub train: usize,
    pub val: usize,
    pub test: usize,
}

impl SplitSizes {
    pub fn total(&self) -> usize {
        self.train + self.val + self.test
    }

    /// `(offset, length)` of a split on the time axis.
    pub fn range(&self, tag: SplitTag) -> (usize, usize) {
        match tag {
            SplitTag::Train => (0, self.train),
            SplitTag::Val => (self.train, self.val),
            SplitTag::Test => (self.train + self.val, self.test),
        }
    }
}

pub fn split_sizes(t_len: usize, rule: &SplitRule, bin_minutes: u32) -> Result<SplitSizes> {
    let sizes = match *rule {
        SplitRule::Fractions { train, val, test } => {
            if [train, val, test].iter().any(|f| !(*f > 0.0)) || ((train + val + test) - 1.0).abs() > 1e-9 {
                return Err(DataError::InvalidArgument(format!(
                    "split fractions {train}/{val}/{test} must be positive and sum to 1"
                )));
            }
            let tr = (t_len as f64 * train).round() as usize;
            let va = (t_len as f64 * val).round() as usize;
            if tr + va > t_len {
                return Err(DataError::InvalidArgument(format!("{t_len} steps are too few to split")));
            }
            SplitSizes {
                train: tr,
                val: va,
                test: t_len - tr - va,
            }
        }
        SplitRule::TrailingWeeks { val_weeks, test_weeks } => {
            if bin_minutes == 0 || (7 * 24 * 60) % bin_minutes != 0 {
                return Err(DataError::InvalidArgument(format!("bin of {bin_minutes} min does not divide a week")));
            }
            let week = (7 * 24 * 60 / bin_minutes) as usize;
            let (va, te) = (val_weeks * week, test_weeks * week);
            if va + te >= t_len {
                return Err(DataError::InvalidArgument(format!(
                    "{t_len} steps leave no training data after {} validation and {} test weeks",
                    val_weeks, test_weeks
                )));
            }
            SplitSizes {
                train: t_len - va - te,
                val: va,
                test: te,
            }
        }
    };
    Ok(sizes)
}

/// Sliding windows over one contiguous split. Inputs are `m` steps of every
/// feature; targets are the next `n` steps of the leading `c` channels.
///
/// Windows are materialized on demand from a shared panel.
#[derive(Debug, Clone)]
pub struct SampleSet {
    pub tag: SplitTag,
    raw: Arc<Tensor>,
    scaled: Arc<Tensor>,
    offset: usize,
    steps: usize,
    m: usize,
    n: usize,
    c: usize,
}

impl SampleSet {
    pub fn new(
        tag: SplitTag,
        raw: Arc<Tensor>,
        scaled: Arc<Tensor>,
        (offset, steps): (usize, usize),
        m: usize,
        n: usize,
        c: usize,
    ) -> Result<Self> {
        if m == 0 || n == 0 {
            return Err(DataError::InvalidArgument("input and output lengths must be at least 1".into()));
        }
        if raw.shape() != scaled.shape() || raw.rank() != 3 {
            return Err(DataError::InvalidArgument("raw and scaled panels must be equal T×N×d".into()));
        }
        if c == 0 || c > raw.shape()[2] {
            return Err(DataError::InvalidArgument(format!("{c} target channels of {}", raw.shape()[2])));
        }
        if offset + steps > raw.shape()[0] {
            return Err(DataError::InvalidArgument("split exceeds the panel".into()));
        }
        if steps < m + n {
            return Err(DataError::SplitTooShort {
                split: tag,
                steps,
                needed: m + n,
            });
        }
        Ok(Self {
            tag,
            raw,
            scaled,
            offset,
            steps,
            m,
            n,
            c,
        })
    }

    pub fn len(&self) -> usize {
        self.steps - self.m - self.n + 1
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn input_len(&self) -> usize {
        self.m
    }

    pub fn output_len(&self) -> usize {
        self.n
    }

    pub fn num_nodes(&self) -> usize {
        self.raw.shape()[1]
    }

    pub fn feature_dims(&self) -> usize {
        self.raw.shape()[2]
    }

    pub fn target_channels(&self) -> usize {
        self.c
    }

    /// Absolute time-axis ranges `[start, end)` of a window's inputs and targets.
    pub fn time_ranges(&self, i: usize) -> ((usize, usize), (usize, usize)) {
        let s = self.offset + i;
        ((s, s + self.m), (s + self.m, s + self.m + self.n))
    }

    fn gather(&self, src: &Tensor, idx: &[usize], start: usize, len: usize, channels: usize) -> Tensor {
        let (n, d) = (src.shape()[1], src.shape()[2]);
        let mut out = Vec::with_capacity(idx.len() * len * n * channels);
        for &i in idx {
            assert!(i < self.len(), "window {i} out of range ({})", self.len());
            let t0 = self.offset + i + start;
            let block = &src.data()[t0 * n * d..(t0 + len) * n * d];
            if channels == d {
                out.extend_from_slice(block);
            } else {
                out.extend(block.chunks(d).flat_map(|row| row[..channels].iter().copied()));
            }
        }
        Tensor::new(vec![idx.len(), len, n, channels], out).expect("consistent window shape")
    }

    /// Scaled inputs, `B×m×N×d`.
    pub fn inputs(&self, idx: &[usize]) -> Tensor {
        self.gather(&self.scaled, idx, 0, self.m, self.feature_dims())
    }

    /// Scaled targets, `B×n×N×c`.
    pub fn targets(&self, idx: &[usize]) -> Tensor {
        self.gather(&self.scaled, idx, self.m, self.n, self.c)
    }

    /// Targets in original units, `B×n×N×c`.
    pub fn targets_raw(&self, idx: &[usize]) -> Tensor {
        self.gather(&self.raw, idx, self.m, self.n, self.c)
    }

    /// Target channels of the input window in original units, `B×m×N×c`.
    pub fn history_raw(&self, idx: &[usize]) -> Tensor {
        self.gather(&self.raw, idx, 0, self.m, self.c)
    }

    pub fn indices(&self) -> Vec<usize> {
        (0..self.len()).collect()
    }
}

#[derive(Debug, Clone)]
pub struct Splits {
    pub train: SampleSet,
    pub val: SampleSet,
    pub test: SampleSet,
}

impl Splits {
    pub fn get(&self, tag: SplitTag) -> &SampleSet {
        match tag {
            SplitTag::Train => &self.train,
            SplitTag::Val => &self.val,
            SplitTag::Test => &self.test,
        }
    }
}

/// Cuts the panel into its three splits and windows each independently, so
/// no window straddles a split boundary.
pub fn window_and_split(
    raw: Arc<Tensor>,
    scaled: Arc<Tensor>,
    sizes: SplitSizes,
    m: usize,
    n: usize,
    c: usize,
) -> Result<Splits> {
    if sizes.total() != raw.shape().first().copied().unwrap_or(0) {
        return Err(DataError::InvalidArgument(format!(
            "split sizes sum to {}, panel has {} steps",
            sizes.total(),
            raw.shape().first().copied().unwrap_or(0)
        )));
    }
    let make = |tag| SampleSet::new(tag, raw.clone(), scaled.clone(), sizes.range(tag), m, n, c);
    Ok(Splits {
        train: make(SplitTag::Train)?,
        val: make(SplitTag::Val)?,
        test: make(SplitTag::Test)?,
    })
}
