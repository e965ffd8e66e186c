//! Lossy reduction of the rank alphabet by pairing the rarest low ranks.

use crate::error::{Error, Result};
use crate::lrt::{RankImage, ABSENT};

/// Rank alphabet bounds produced by the supported neighborhoods.
const SUPPORTED: [u8; 7] = [4, 8, 12, 24, 40, 48, 80];

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MergeMap {
    max_rank: u8,
    table: Vec<u8>,
    /// Surviving values, highest first.
    distinct: Vec<u8>,
}

impl MergeMap {
    /// Map that keeps every rank (merging disabled).
    pub fn identity(max_rank: u8) -> Self {
        let table: Vec<u8> = (0..=max_rank).collect();
        let distinct = (0..=max_rank).rev().collect();
        MergeMap { max_rank, table, distinct }
    }

    pub fn max_rank(&self) -> u8 {
        self.max_rank
    }

    pub fn table(&self) -> &[u8] {
        &self.table
    }

    /// Surviving rank values in descending order.
    pub fn distinct(&self) -> &[u8] {
        &self.distinct
    }

    pub fn is_identity(&self) -> bool {
        self.distinct.len() == self.max_rank as usize + 1
    }

    #[inline]
    pub fn map(&self, rank: u8) -> Option<u8> {
        self.table.get(rank as usize).copied()
    }
}

/// Merge ranks `2k` and `2k+1` into `2k+1` for the lowest `|S|/4 + 1` pairs.
pub fn build_merge_map(max_rank: u8) -> Result<MergeMap> {
    if !SUPPORTED.contains(&max_rank) {
        return Err(Error::param(format!("no merge map for max rank {max_rank}")));
    }
    let pairs = max_rank / 4 + 1;
    let table: Vec<u8> = (0..=max_rank).map(|r| if r < 2 * pairs { r | 1 } else { r }).collect();
    let mut distinct = table.clone();
    distinct.dedup();
    distinct.reverse();
    Ok(MergeMap { max_rank, table, distinct })
}

pub fn merge_ranks(r: &RankImage, m: &MergeMap) -> Result<RankImage> {
    if r.max_rank() != m.max_rank {
        return Err(Error::param(format!(
            "rank image bound {} does not match merge map bound {}",
            r.max_rank(),
            m.max_rank
        )));
    }
    let ranks = r
        .ranks()
        .iter()
        .map(|&v| {
            if v == ABSENT {
                Ok(ABSENT)
            } else {
                m.map(v).ok_or_else(|| Error::param(format!("rank {v} outside merge table")))
            }
        })
        .collect::<Result<Vec<u8>>>()?;
    Ok(RankImage::from_parts(r.width(), r.height(), r.max_rank(), r.sampling(), ranks))
}
