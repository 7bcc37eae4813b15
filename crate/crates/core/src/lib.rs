//! Simulation core for a pool of near-memory-processing DIMMs serving
//! deep-learning embedding layers.
//!
//! The crate is `no_std` (it needs `alloc`) and contains every model the
//! experiment driver composes:
//!
//! - [`isa`]: the three-instruction tensor ISA (GATHER, REDUCE, AVERAGE),
//!   its 128-bit wire encoding and its functional semantics.
//! - [`addrmap`]: the rank-interleaved mapping of 64-byte blocks.
//! - [`pool`]: sparse byte-addressable memory images, flat and interleaved.
//! - [`dram`]: a command-level DDR4 timing model for one rank or a shared
//!   channel, plus the text trace format.
//! - [`nmp`]: one DIMM's NMP core: instruction lowering, staging queues,
//!   vector-ALU throughput.
//! - [`node`]: R ranks composed into a pooled-memory node, interconnect
//!   links and the five end-to-end design points.
//! - [`workload`]: benchmark presets, instruction-stream synthesis and the
//!   dense reference oracle.
#![no_std]

extern crate alloc;

pub mod addrmap;
pub mod dram;
pub mod isa;
pub mod nmp;
pub mod node;
pub mod pool;
pub mod workload;

/// Minimum DRAM access granularity: one burst of 8 beats on a 64-bit bus.
pub const BLOCK_BYTES: u64 = 64;

/// Number of `f32` elements in one block.
pub const BLOCK_ELEMS: usize = (BLOCK_BYTES / 4) as usize;

/// Smallest integer not below a non-negative `x`.
pub(crate) fn ceil_u64(x: f64) -> u64 {
    let t = x as u64;
    if (t as f64) < x {
        t + 1
    } else {
        t
    }
}
