use serde::{Deserialize, Serialize};

use crate::error::{MsError, Result};

/// Angular-momentum pair `(l, m)` with `-l <= m <= l`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct AngularIndex {
    pub l: usize,
    pub m: i32,
}

impl AngularIndex {
    pub fn new(l: usize, m: i32) -> Result<Self> {
        if m.unsigned_abs() as usize > l {
            return Err(MsError::Domain(format!("|m| = {} exceeds l = {l}", m.abs())));
        }
        Ok(Self { l, m })
    }

    /// Position within a site block: `l² + l + m`.
    #[inline]
    pub fn offset(self) -> usize {
        ((self.l * self.l + self.l) as i64 + self.m as i64) as usize
    }

    pub fn from_offset(offset: usize) -> Self {
        let l = (offset as f64).sqrt().floor() as usize;
        // guard against rounding at perfect squares
        let l = if (l + 1) * (l + 1) <= offset {
            l + 1
        } else if l * l > offset {
            l - 1
        } else {
            l
        };
        let m = offset as i64 - (l * l + l) as i64;
        Self { l, m: m as i32 }
    }
}

/// Number of `(l, m)` channels for `l = 0..=l_max`.
#[inline]
pub fn block_size(l_max: usize) -> usize {
    (l_max + 1) * (l_max + 1)
}

/// All indices with `l <= l_max` in offset order.
pub fn indices_upto(l_max: usize) -> impl Iterator<Item = AngularIndex> {
    (0..block_size(l_max)).map(AngularIndex::from_offset)
}

/// Position in the unpartitioned global basis.
pub fn composite_index(site: usize, lm: AngularIndex, l_max: usize) -> Result<usize> {
    if lm.l > l_max {
        return Err(MsError::Domain(format!("l = {} exceeds l_max = {l_max}", lm.l)));
    }
    Ok(site * block_size(l_max) + lm.offset())
}

/// Inverse of [`composite_index`].
pub fn split_composite_index(index: usize, l_max: usize) -> (usize, AngularIndex) {
    let n = block_size(l_max);
    (index / n, AngularIndex::from_offset(index % n))
}
