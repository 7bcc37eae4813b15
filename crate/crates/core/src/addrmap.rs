//! Rank-interleaved address mapping.
//!
//! Consecutive 64-byte blocks of the pool-physical address space land on
//! consecutive ranks, so every embedding vector is sliced across all ranks
//! and each DIMM's NMP core works on its own slice concurrently. The rank id
//! is the bit field directly above the 64-byte offset:
//!
//! ```text
//!  pool address:  [ local block index | rank id (log2 R bits) | offset (6 bits) ]
//! ```

use alloc::vec;
use alloc::vec::Vec;

use crate::BLOCK_BYTES;

/// Largest supported rank count.
pub const MAX_RANKS: u32 = 256;

#[derive(Debug, Clone, Copy, PartialEq, Eq, thiserror::Error)]
pub enum AddrError {
    #[error("rank count {0} is not a power of two in 1..=256")]
    InvalidRankCount(u32),
    #[error("rank capacity {0} is not a non-zero multiple of 64 bytes")]
    InvalidRankCapacity(u64),
    #[error("address {0:#x} is not 64-byte aligned")]
    Misaligned(u64),
    #[error("address {addr:#x} exceeds pool capacity {capacity:#x}")]
    OutOfRange { addr: u64, capacity: u64 },
    #[error("rank {rank} does not exist in a {num_ranks}-rank pool")]
    NoSuchRank { rank: u32, num_ranks: u32 },
    #[error("table {table_id} does not fit in the pool")]
    TableOverflow { table_id: u32 },
}

/// Shape of the memory pool: R ranks of equal capacity.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PoolGeometry {
    num_ranks: u32,
    rank_capacity_bytes: u64,
}

impl PoolGeometry {
    pub fn new(num_ranks: u32, rank_capacity_bytes: u64) -> Result<Self, AddrError> {
        if num_ranks == 0 || num_ranks > MAX_RANKS || !num_ranks.is_power_of_two() {
            return Err(AddrError::InvalidRankCount(num_ranks));
        }
        if rank_capacity_bytes == 0 || !rank_capacity_bytes.is_multiple_of(BLOCK_BYTES) {
            return Err(AddrError::InvalidRankCapacity(rank_capacity_bytes));
        }
        if rank_capacity_bytes.checked_mul(num_ranks as u64).is_none() {
            return Err(AddrError::InvalidRankCapacity(rank_capacity_bytes));
        }
        Ok(Self {
            num_ranks,
            rank_capacity_bytes,
        })
    }

    #[inline]
    pub fn num_ranks(&self) -> u32 {
        self.num_ranks
    }

    #[inline]
    pub fn rank_capacity_bytes(&self) -> u64 {
        self.rank_capacity_bytes
    }

    #[inline]
    pub fn total_capacity(&self) -> u64 {
        self.rank_capacity_bytes * self.num_ranks as u64
    }

    /// Width of the rank field in the pool address.
    #[inline]
    pub fn rank_bits(&self) -> u32 {
        self.num_ranks.trailing_zeros()
    }

    /// Bytes covered by one pass over all ranks (one block per rank).
    #[inline]
    pub fn stripe_bytes(&self) -> u64 {
        BLOCK_BYTES * self.num_ranks as u64
    }
}

/// A block's physical home: which rank, and where inside that rank.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct BlockLocation {
    pub rank_id: u32,
    pub local_byte_addr: u64,
}

pub fn map_block(geom: &PoolGeometry, addr: u64) -> Result<BlockLocation, AddrError> {
    if !addr.is_multiple_of(BLOCK_BYTES) {
        return Err(AddrError::Misaligned(addr));
    }
    if addr >= geom.total_capacity() {
        return Err(AddrError::OutOfRange {
            addr,
            capacity: geom.total_capacity(),
        });
    }
    let block = addr >> 6;
    Ok(BlockLocation {
        rank_id: (block & (geom.num_ranks as u64 - 1)) as u32,
        local_byte_addr: (block >> geom.rank_bits()) << 6,
    })
}

pub fn unmap_block(geom: &PoolGeometry, loc: BlockLocation) -> Result<u64, AddrError> {
    if loc.rank_id >= geom.num_ranks {
        return Err(AddrError::NoSuchRank {
            rank: loc.rank_id,
            num_ranks: geom.num_ranks,
        });
    }
    if !loc.local_byte_addr.is_multiple_of(BLOCK_BYTES) {
        return Err(AddrError::Misaligned(loc.local_byte_addr));
    }
    if loc.local_byte_addr >= geom.rank_capacity_bytes {
        return Err(AddrError::OutOfRange {
            addr: loc.local_byte_addr,
            capacity: geom.rank_capacity_bytes,
        });
    }
    let local_block = loc.local_byte_addr >> 6;
    Ok(((local_block << geom.rank_bits()) | loc.rank_id as u64) << 6)
}

/// Rank that owns the block containing `addr` (any alignment).
#[inline]
pub fn rank_of(geom: &PoolGeometry, addr: u64) -> u32 {
    ((addr >> 6) & (geom.num_ranks as u64 - 1)) as u32
}

/// Number of blocks of one embedding held by each rank, for an embedding
/// whose first block sits on rank 0.
///
/// Partial trailing blocks count as whole blocks.
pub fn slices_per_rank(geom: &PoolGeometry, embedding_bytes: u64) -> Vec<u64> {
    let blocks = embedding_bytes.div_ceil(BLOCK_BYTES);
    let r = geom.num_ranks as u64;
    let (whole, extra) = (blocks / r, blocks % r);
    let mut table = vec![whole; r as usize];
    for slot in table.iter_mut().take(extra as usize) {
        *slot += 1;
    }
    table
}

/// One embedding lookup table placed in the pool.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct EmbeddingTableSpec {
    pub table_id: u32,
    pub rows: u64,
    pub embedding_bytes: u64,
    pub base: u64,
}

impl EmbeddingTableSpec {
    pub fn footprint(&self) -> u64 {
        self.rows * self.embedding_bytes
    }

    pub fn validate(&self, geom: &PoolGeometry) -> Result<(), AddrError> {
        if !self.base.is_multiple_of(BLOCK_BYTES) {
            return Err(AddrError::Misaligned(self.base));
        }
        if self.embedding_bytes == 0 || !self.embedding_bytes.is_multiple_of(BLOCK_BYTES) {
            return Err(AddrError::Misaligned(self.embedding_bytes));
        }
        let end = self
            .rows
            .checked_mul(self.embedding_bytes)
            .and_then(|bytes| bytes.checked_add(self.base));
        match end {
            Some(end) if end <= geom.total_capacity() => Ok(()),
            _ => Err(AddrError::TableOverflow {
                table_id: self.table_id,
            }),
        }
    }

    pub fn row_addr(&self, row: u64) -> u64 {
        self.base + row * self.embedding_bytes
    }

    /// Location of block `block` of embedding `row`.
    pub fn locate(&self, geom: &PoolGeometry, row: u64, block: u64) -> Result<BlockLocation, AddrError> {
        map_block(geom, self.row_addr(row) + block * BLOCK_BYTES)
    }
}
