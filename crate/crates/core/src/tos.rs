//! Spectral Type-of-Service tagging.
//!
//! Mice flows get the top value 255. The elephant range above the mice threshold is cut
//! into 254 abutting bins of `bin_width + 1` KB each, and the values descend as the bins
//! move toward larger sizes, so smaller flows always carry higher knapsack value.

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum TosError {
    #[error("flow size must be at least 1 KB")]
    NonPositiveSize,
    #[error("flow at index {index} has a non-positive size")]
    NonPositiveSizeAt { index: usize },
    #[error("max size {max_size_kb} KB must exceed the mice threshold {mf_threshold_kb} KB by at least {min_span} KB")]
    InvalidTable { mf_threshold_kb: u64, max_size_kb: u64, min_span: u64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TosTable {
    mf_threshold_kb: u64,
    max_size_kb: u64,
    bin_width_kb: u64,
    num_values: u32,
}

impl Default for TosTable {
    fn default() -> Self {
        Self::new(100, 200_000).expect("default table is valid")
    }
}

impl TosTable {
    pub const NUM_VALUES: u32 = 255;

    pub fn new(mf_threshold_kb: u64, max_size_kb: u64) -> Result<Self, TosError> {
        let bins = u64::from(Self::NUM_VALUES - 1);
        if max_size_kb < mf_threshold_kb + bins {
            return Err(TosError::InvalidTable { mf_threshold_kb, max_size_kb, min_span: bins });
        }
        Ok(Self { mf_threshold_kb, max_size_kb, bin_width_kb: (max_size_kb - mf_threshold_kb) / bins, num_values: Self::NUM_VALUES })
    }

    pub fn mf_threshold_kb(&self) -> u64 {
        self.mf_threshold_kb
    }

    pub fn max_size_kb(&self) -> u64 {
        self.max_size_kb
    }

    pub fn bin_width_kb(&self) -> u64 {
        self.bin_width_kb
    }

    pub fn num_values(&self) -> u32 {
        self.num_values
    }

    /// Number of elephant bins (values 254 down to 1).
    pub fn elephant_bins(&self) -> u64 {
        u64::from(self.num_values - 1)
    }

    /// Each bin covers `bin_width + 1` sizes: `[lower, lower + bin_width]`.
    pub fn bin_span_kb(&self) -> u64 {
        self.bin_width_kb + 1
    }

    /// Upper edge of the last elephant bin; larger sizes clamp to value 1.
    pub fn last_bin_upper_kb(&self) -> u64 {
        self.mf_threshold_kb + self.elephant_bins() * self.bin_span_kb()
    }

    /// 1-based elephant bin for `size_kb`, or `None` for mice flows.
    pub fn bin_index(&self, size_kb: u64) -> Option<u64> {
        if size_kb <= self.mf_threshold_kb {
            return None;
        }
        let k = (size_kb - self.mf_threshold_kb - 1) / self.bin_span_kb() + 1;
        Some(k.min(self.elephant_bins()))
    }
}

/// ToS value in `1..=255` for a flow of `size_kb`.
pub fn tag(size_kb: u64, table: &TosTable) -> Result<u8, TosError> {
    if size_kb < 1 {
        return Err(TosError::NonPositiveSize);
    }
    let value = match table.bin_index(size_kb) {
        None => table.num_values(),
        Some(k) => table.num_values() - k as u32,
    };
    Ok(value as u8)
}

/// Tags a batch, returning `(value, size_kb)` pairs in input order.
pub fn tag_flows(sizes: &[u64], table: &TosTable) -> Result<Vec<(u8, u64)>, TosError> {
    sizes
        .iter()
        .enumerate()
        .map(|(index, &size)| match tag(size, table) {
            Ok(v) => Ok((v, size)),
            Err(_) => Err(TosError::NonPositiveSizeAt { index }),
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    /// Literal replay of the controller's bin search with a descending value vector.
    fn replay_loop(weight: u64) -> u8 {
        let value: Vec<u8> = (0..=254u32).map(|k| (255 - k) as u8).collect();
        if weight <= 100 {
            return 255;
        }
        let mut lower = 101;
        let mut upper = lower + 787;
        loop {
            if lower <= weight && weight <= upper {
                return value[(upper / 787) as usize];
            }
            lower = upper + 1;
            upper = lower + 787;
        }
    }

    #[test]
    fn default_bin_width() {
        let t = TosTable::default();
        assert_eq!(t.bin_width_kb(), 787);
        assert_eq!(t.bin_span_kb(), 788);
        assert_eq!(t.last_bin_upper_kb(), 200_252);
    }

    #[test]
    fn reference_values() {
        let t = TosTable::default();
        assert_eq!(tag(50, &t), Ok(255));
        assert_eq!(tag(100, &t), Ok(255));
        assert_eq!(tag(101, &t), Ok(254));
        assert_eq!(tag(888, &t), Ok(254));
        assert_eq!(tag(889, &t), Ok(253));
        assert_eq!(tag(200_000, &t), Ok(1));
        assert_eq!(tag(200_252, &t), Ok(1));
        assert_eq!(tag(10_000_000, &t), Ok(1));
        assert_eq!(tag(0, &t), Err(TosError::NonPositiveSize));
    }

    #[test]
    fn batch_tagging() {
        let t = TosTable::default();
        assert_eq!(tag_flows(&[], &t), Ok(vec![]));
        assert_eq!(tag_flows(&[50, 101], &t), Ok(vec![(255, 50), (254, 101)]));
        assert_eq!(tag_flows(&[5, 0, 7], &t), Err(TosError::NonPositiveSizeAt { index: 1 }));
    }

    #[test]
    fn closed_form_matches_loop_on_sampled_sizes() {
        let t = TosTable::default();
        for s in (1..=200_252).step_by(97).chain([101, 888, 889, 199_464, 199_465, 200_252]) {
            assert_eq!(tag(s, &t).unwrap(), replay_loop(s), "size {s}");
        }
    }

    #[test]
    fn table_rejects_degenerate_ranges() {
        assert!(TosTable::new(100, 200).is_err());
        assert_eq!(TosTable::new(0, 254).unwrap().bin_width_kb(), 1);
    }

    proptest! {
        #[test]
        fn monotone_and_in_range(a in 1u64..400_000, b in 1u64..400_000) {
            let t = TosTable::default();
            let (lo, hi) = (a.min(b), a.max(b));
            let (tl, th) = (tag(lo, &t).unwrap(), tag(hi, &t).unwrap());
            prop_assert!(tl >= th);
            prop_assert!(th >= 1);
            prop_assert_eq!(tl == 255, lo <= 100);
        }

        #[test]
        fn permutation_preserves_multiset(mut sizes in prop::collection::vec(1u64..300_000, 0..40)) {
            let t = TosTable::default();
            let mut a = tag_flows(&sizes, &t).unwrap();
            sizes.reverse();
            let mut b = tag_flows(&sizes, &t).unwrap();
            a.sort();
            b.sort();
            prop_assert_eq!(a, b);
        }
    }
}
