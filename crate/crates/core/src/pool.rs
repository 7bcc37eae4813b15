//! Byte-addressable memory images.
//!
//! Embedding tables at realistic scale are far larger than the data a
//! simulation actually touches, so images are sparse: 64-byte pages are
//! materialized on first write and unwritten bytes read as zero. Pages match
//! the interleave granularity; a rank holds scattered single blocks of
//! randomly accessed rows.

use alloc::collections::BTreeMap;
use alloc::vec::Vec;

use crate::addrmap::{self, PoolGeometry};
use crate::BLOCK_BYTES;

const PAGE_BYTES: u64 = BLOCK_BYTES;

/// An access that falls (partly) outside an image.
#[derive(Debug, Clone, Copy, PartialEq, Eq, thiserror::Error)]
#[error("access of {len} bytes at {addr:#x} exceeds capacity {capacity:#x}")]
pub struct AccessFault {
    pub addr: u64,
    pub len: u64,
    pub capacity: u64,
}

/// Something the tensor ISA can execute against.
pub trait PoolMemory {
    fn capacity(&self) -> u64;
    fn read(&self, addr: u64, out: &mut [u8]) -> Result<(), AccessFault>;
    fn write(&mut self, addr: u64, data: &[u8]) -> Result<(), AccessFault>;

    fn check_range(&self, addr: u64, len: u64) -> Result<(), AccessFault> {
        match addr.checked_add(len) {
            Some(end) if end <= self.capacity() => Ok(()),
            _ => Err(AccessFault {
                addr,
                len,
                capacity: self.capacity(),
            }),
        }
    }
}

/// Sparse flat memory image.
#[derive(Debug, Clone)]
pub struct SparseMemory {
    capacity: u64,
    pages: BTreeMap<u64, [u8; PAGE_BYTES as usize]>,
}

impl SparseMemory {
    pub fn new(capacity: u64) -> Self {
        Self {
            capacity,
            pages: BTreeMap::new(),
        }
    }

    fn page_or<'a>(&'a self, page: u64, zero: &'a [u8]) -> &'a [u8] {
        self.pages.get(&page).map(|p| &p[..]).unwrap_or(zero)
    }

    /// Bytes actually materialized.
    pub fn resident_bytes(&self) -> u64 {
        self.pages.len() as u64 * PAGE_BYTES
    }

    /// Content equality: pages that were never written compare equal to
    /// pages full of zeros.
    pub fn same_content(&self, other: &SparseMemory) -> bool {
        if self.capacity != other.capacity {
            return false;
        }
        let zero = [0u8; PAGE_BYTES as usize];
        self.pages
            .keys()
            .chain(other.pages.keys())
            .all(|k| self.page_or(*k, &zero) == other.page_or(*k, &zero))
    }

    /// First differing byte address, if any.
    pub fn first_difference(&self, other: &SparseMemory) -> Option<u64> {
        let zero = [0u8; PAGE_BYTES as usize];
        let mut keys: Vec<u64> = self.pages.keys().chain(other.pages.keys()).copied().collect();
        keys.sort_unstable();
        keys.dedup();
        keys.into_iter().find_map(|k| {
            let (a, b) = (self.page_or(k, &zero), other.page_or(k, &zero));
            a.iter().zip(b).position(|(x, y)| x != y).map(|off| k * PAGE_BYTES + off as u64)
        })
    }
}

impl PartialEq for SparseMemory {
    fn eq(&self, other: &Self) -> bool {
        self.same_content(other)
    }
}

impl PoolMemory for SparseMemory {
    fn capacity(&self) -> u64 {
        self.capacity
    }

    fn read(&self, addr: u64, out: &mut [u8]) -> Result<(), AccessFault> {
        self.check_range(addr, out.len() as u64)?;
        let mut done = 0usize;
        while done < out.len() {
            let at = addr + done as u64;
            let (page, off) = (at / PAGE_BYTES, (at % PAGE_BYTES) as usize);
            let n = (PAGE_BYTES as usize - off).min(out.len() - done);
            match self.pages.get(&page) {
                Some(p) => out[done..done + n].copy_from_slice(&p[off..off + n]),
                None => out[done..done + n].fill(0),
            }
            done += n;
        }
        Ok(())
    }

    fn write(&mut self, addr: u64, data: &[u8]) -> Result<(), AccessFault> {
        self.check_range(addr, data.len() as u64)?;
        let mut done = 0usize;
        while done < data.len() {
            let at = addr + done as u64;
            let (page, off) = (at / PAGE_BYTES, (at % PAGE_BYTES) as usize);
            let n = (PAGE_BYTES as usize - off).min(data.len() - done);
            let p = self
                .pages
                .entry(page)
                .or_insert([0u8; PAGE_BYTES as usize]);
            p[off..off + n].copy_from_slice(&data[done..done + n]);
            done += n;
        }
        Ok(())
    }
}

/// The pool as R rank-local memories behind the interleaved mapping.
///
/// Pool-physical reads and writes are split into 64-byte pieces and routed to
/// the owning rank; NMP execution accesses a single rank through
/// [`InterleavedPool::rank`] / [`InterleavedPool::rank_mut`].
#[derive(Debug, Clone)]
pub struct InterleavedPool {
    geom: PoolGeometry,
    ranks: Vec<SparseMemory>,
}

impl InterleavedPool {
    pub fn new(geom: PoolGeometry) -> Self {
        let ranks = (0..geom.num_ranks())
            .map(|_| SparseMemory::new(geom.rank_capacity_bytes()))
            .collect();
        Self { geom, ranks }
    }

    pub fn geometry(&self) -> &PoolGeometry {
        &self.geom
    }

    pub fn rank(&self, rank: u32) -> &SparseMemory {
        &self.ranks[rank as usize]
    }

    pub fn rank_mut(&mut self, rank: u32) -> &mut SparseMemory {
        &mut self.ranks[rank as usize]
    }

    /// Disjoint mutable access to every rank at once.
    pub fn ranks_mut(&mut self) -> &mut [SparseMemory] {
        &mut self.ranks
    }

    /// Rebuild the flat pool-physical view.
    pub fn to_flat(&self) -> SparseMemory {
        let mut flat = SparseMemory::new(self.geom.total_capacity());
        let mut block = [0u8; BLOCK_BYTES as usize];
        for (rank, mem) in self.ranks.iter().enumerate() {
            for (&page, data) in &mem.pages {
                for (i, chunk) in data.chunks_exact(BLOCK_BYTES as usize).enumerate() {
                    if chunk.iter().all(|&b| b == 0) {
                        continue;
                    }
                    block.copy_from_slice(chunk);
                    let loc = addrmap::BlockLocation {
                        rank_id: rank as u32,
                        local_byte_addr: page * PAGE_BYTES + i as u64 * BLOCK_BYTES,
                    };
                    let addr = addrmap::unmap_block(&self.geom, loc).expect("resident block within rank");
                    flat.write(addr, &block).expect("unmapped address within pool");
                }
            }
        }
        flat
    }

    /// Visit the pieces of `[addr, addr+len)` as (rank, local address, offset into the range, length).
    fn pieces(&self, addr: u64, len: usize, mut f: impl FnMut(u32, u64, usize, usize)) {
        let r_bits = self.geom.rank_bits();
        let mask = self.geom.num_ranks() as u64 - 1;
        let mut done = 0usize;
        while done < len {
            let at = addr + done as u64;
            let off = (at % BLOCK_BYTES) as usize;
            let n = (BLOCK_BYTES as usize - off).min(len - done);
            let block = at >> 6;
            let rank = (block & mask) as u32;
            let local = ((block >> r_bits) << 6) + off as u64;
            f(rank, local, done, n);
            done += n;
        }
    }
}

impl PoolMemory for InterleavedPool {
    fn capacity(&self) -> u64 {
        self.geom.total_capacity()
    }

    fn read(&self, addr: u64, out: &mut [u8]) -> Result<(), AccessFault> {
        self.check_range(addr, out.len() as u64)?;
        let ranks = &self.ranks;
        self.pieces(addr, out.len(), |rank, local, at, n| {
            ranks[rank as usize]
                .read(local, &mut out[at..at + n])
                .expect("rank-local address within rank capacity");
        });
        Ok(())
    }

    fn write(&mut self, addr: u64, data: &[u8]) -> Result<(), AccessFault> {
        self.check_range(addr, data.len() as u64)?;
        let mut pieces = Vec::new();
        self.pieces(addr, data.len(), |rank, local, at, n| pieces.push((rank, local, at, n)));
        for (rank, local, at, n) in pieces {
            self.ranks[rank as usize]
                .write(local, &data[at..at + n])
                .expect("rank-local address within rank capacity");
        }
        Ok(())
    }
}

/// Kind of access recorded by [`AccessLog`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AccessKind {
    Read,
    Write,
}

/// Wraps an image and records every access range.
#[derive(Debug, Clone)]
pub struct AccessLog<P> {
    pub inner: P,
    log: core::cell::RefCell<Vec<(AccessKind, u64, u64)>>,
}

impl<P: PoolMemory> AccessLog<P> {
    pub fn new(inner: P) -> Self {
        Self {
            inner,
            log: core::cell::RefCell::new(Vec::new()),
        }
    }

    /// Recorded `(kind, addr, len)` triples in access order.
    pub fn accesses(&self) -> Vec<(AccessKind, u64, u64)> {
        self.log.borrow().clone()
    }
}

impl<P: PoolMemory> PoolMemory for AccessLog<P> {
    fn capacity(&self) -> u64 {
        self.inner.capacity()
    }

    fn read(&self, addr: u64, out: &mut [u8]) -> Result<(), AccessFault> {
        self.log.borrow_mut().push((AccessKind::Read, addr, out.len() as u64));
        self.inner.read(addr, out)
    }

    fn write(&mut self, addr: u64, data: &[u8]) -> Result<(), AccessFault> {
        self.log.borrow_mut().push((AccessKind::Write, addr, data.len() as u64));
        self.inner.write(addr, data)
    }
}
