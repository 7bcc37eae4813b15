//! One DIMM's near-memory-processing core.
//!
//! A broadcast instruction is lowered into the rank's share of the work: the
//! destination blocks this rank owns, the operand blocks they need (which the
//! interleaved mapping places on the same rank) and the DRAM request program
//! that moves them. Execution applies the functional result to the rank's
//! memory and times the rank as the slower of the DRAM program and the
//! vector ALU.
//!
//! Request order follows the staging queues: output blocks are processed in
//! chunks that fill the output (C) queue, and within a chunk every input
//! tensor's slice is streamed in turn (even inputs through queue A, odd ones
//! through queue B) before the chunk is written back.

use alloc::vec::Vec;

use crate::addrmap::{AddrError, PoolGeometry};
use crate::dram::{self, BlockRequest, DramTimingParams, RankSimResult};
use crate::isa::{self, IsaError, Opcode, TensorInstruction};
use crate::pool::{AccessFault, SparseMemory};
use crate::{BLOCK_BYTES, BLOCK_ELEMS};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum NmpError {
    #[error(transparent)]
    Isa(#[from] IsaError),
    #[error(transparent)]
    Addr(#[from] AddrError),
    #[error("address fault: {0}")]
    AddressFault(#[from] AccessFault),
    #[error("operand block {operand:#x} of destination block {dst:#x} lives on another rank")]
    NotRankLocal { dst: u64, operand: u64 },
    #[error("GATHER needs {expected} prefetched indices, got {got}")]
    MissingIndices { expected: u64, got: usize },
    #[error("invalid NMP core configuration: {0}")]
    Config(&'static str),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NmpCoreConfig {
    pub alu_lanes: u32,
    pub alu_clock_mhz: f64,
    /// Capacity of each input queue (A and B).
    pub input_queue_bytes: u64,
    pub output_queue_bytes: u64,
    /// Time from the controller requesting a block to it landing in a queue.
    pub fill_latency_ns: f64,
}

impl Default for NmpCoreConfig {
    fn default() -> Self {
        Self {
            alu_lanes: 16,
            alu_clock_mhz: 150.0,
            input_queue_bytes: 512,
            output_queue_bytes: 512,
            fill_latency_ns: 20.0,
        }
    }
}

impl NmpCoreConfig {
    /// Output bytes the vector ALU can produce per second, in GB/s.
    pub fn alu_throughput_gbs(&self) -> f64 {
        self.alu_lanes as f64 * 4.0 * self.alu_clock_mhz / 1000.0
    }

    /// Bytes in flight needed to cover the fill latency at the rank's peak rate.
    pub fn bandwidth_delay_bytes(&self, dram: &DramTimingParams) -> f64 {
        dram.peak_bandwidth_gbs() * self.fill_latency_ns
    }

    /// Output-stream demand of an N-input reduction when DRAM runs at peak:
    /// each output byte costs N read bytes plus one written byte.
    pub fn reduction_demand_gbs(dram: &DramTimingParams, num_inputs: u64) -> f64 {
        dram.peak_bandwidth_gbs() / (num_inputs + 1) as f64
    }

    pub fn validate(&self, dram: &DramTimingParams) -> Result<(), NmpError> {
        if self.alu_lanes == 0 || !(self.alu_clock_mhz > 0.0) {
            return Err(NmpError::Config("ALU needs lanes and a positive clock"));
        }
        if self.fill_latency_ns < 0.0 {
            return Err(NmpError::Config("fill latency must be non-negative"));
        }
        for q in [self.input_queue_bytes, self.output_queue_bytes] {
            if q < BLOCK_BYTES || q % BLOCK_BYTES != 0 {
                return Err(NmpError::Config("queues must hold a whole number of 64-byte blocks"));
            }
        }
        if (self.input_queue_bytes as f64) < self.bandwidth_delay_bytes(dram) {
            return Err(NmpError::Config("input queue smaller than the bandwidth-delay product"));
        }
        Ok(())
    }

    fn chunk_blocks(&self) -> usize {
        (self.output_queue_bytes / BLOCK_BYTES) as usize
    }
}

/// Which staging structure a request feeds or drains.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Stream {
    Index,
    A,
    B,
    C,
}

/// One destination block's worth of work, in rank-local addresses.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BlockOp {
    Copy { src: u64, dst: u64 },
    Reduce { first: u64, stride: u64, dst: u64 },
}

/// The slice of one instruction that a single rank executes.
#[derive(Debug, Clone, PartialEq)]
pub struct RankWorkItem {
    pub instruction: TensorInstruction,
    pub rank_id: u32,
    pub ops: Vec<BlockOp>,
    /// DRAM program in issue order.
    pub requests: Vec<BlockRequest>,
    /// Per request: the stream it serves and the op it belongs to
    /// (`u32::MAX` for index reads).
    pub request_streams: Vec<(Stream, u32)>,
}

impl RankWorkItem {
    pub fn reads(&self) -> usize {
        self.requests.iter().filter(|r| r.kind == dram::ReqKind::Read).count()
    }

    pub fn writes(&self) -> usize {
        self.requests.len() - self.reads()
    }

    /// Elements the vector ALU produces.
    pub fn alu_elements(&self) -> u64 {
        match self.instruction.opcode {
            Opcode::Gather => 0,
            _ => self.ops.len() as u64 * BLOCK_ELEMS as u64,
        }
    }
}

struct Local<'g> {
    geom: &'g PoolGeometry,
    rank: u64,
    mask: u64,
}

impl Local<'_> {
    fn owns(&self, block: u64) -> bool {
        block & self.mask == self.rank
    }

    fn addr(&self, block: u64) -> u64 {
        (block >> self.geom.rank_bits()) * BLOCK_BYTES
    }
}

/// Lower a broadcast instruction into `rank_id`'s work item.
///
/// `indices` is the prefetched GATHER index buffer (ignored otherwise).
pub fn lower_instruction(
    geom: &PoolGeometry,
    instr: &TensorInstruction,
    rank_id: u32,
    indices: &[u32],
    core: &NmpCoreConfig,
) -> Result<RankWorkItem, NmpError> {
    instr.validate_for(geom.total_capacity())?;
    if rank_id >= geom.num_ranks() {
        return Err(AddrError::NoSuchRank {
            rank: rank_id,
            num_ranks: geom.num_ranks(),
        }
        .into());
    }
    let local = Local {
        geom,
        rank: rank_id as u64,
        mask: geom.num_ranks() as u64 - 1,
    };
    let s = instr.blocks_per_embedding();
    let dst_blk = instr.dst_base / BLOCK_BYTES;
    let src_blk = instr.src_base / BLOCK_BYTES;
    let check = |dst: u64, operand: u64| -> Result<(), NmpError> {
        if local.owns(operand) {
            Ok(())
        } else {
            Err(NmpError::NotRankLocal {
                dst: dst * BLOCK_BYTES,
                operand: operand * BLOCK_BYTES,
            })
        }
    };

    let mut ops = Vec::new();
    let mut requests = Vec::new();
    let mut streams = Vec::new();
    let mut push = |kind: dram::ReqKind, addr: u64, stream: Stream, op: u32| {
        let order = requests.len() as u64;
        requests.push(BlockRequest {
            kind,
            rank_local_addr: addr,
            issue_order: order,
        });
        streams.push((stream, op));
    };

    match instr.opcode {
        Opcode::Gather => {
            if indices.len() as u64 != instr.batch_size {
                return Err(NmpError::MissingIndices {
                    expected: instr.batch_size,
                    got: indices.len(),
                });
            }
            let first = instr.index_base / BLOCK_BYTES;
            let last = (instr.index_base + instr.index_bytes()).div_ceil(BLOCK_BYTES);
            for blk in (first..last).filter(|&b| local.owns(b)) {
                push(dram::ReqKind::Read, local.addr(blk), Stream::Index, u32::MAX);
            }
            for (b, &ix) in indices.iter().enumerate() {
                if ix as u64 >= instr.table_rows {
                    return Err(IsaError::IndexOutOfRange {
                        position: b as u64,
                        index: ix,
                        rows: instr.table_rows,
                    }
                    .into());
                }
                let d0 = dst_blk + b as u64 * s;
                let s0 = src_blk + ix as u64 * s;
                // Blocks of one embedding owned by this rank: k ≡ rank - d0 (mod R).
                let k0 = (local.rank.wrapping_sub(d0)) & local.mask;
                for k in (k0..s).step_by(geom.num_ranks() as usize) {
                    check(d0 + k, s0 + k)?;
                    ops.push(BlockOp::Copy {
                        src: local.addr(s0 + k),
                        dst: local.addr(d0 + k),
                    });
                }
            }
            for (chunk_ix, chunk) in ops.chunks(core.chunk_blocks()).enumerate() {
                let base = (chunk_ix * core.chunk_blocks()) as u32;
                for (j, op) in chunk.iter().enumerate() {
                    if let BlockOp::Copy { src, .. } = op {
                        push(dram::ReqKind::Read, *src, Stream::A, base + j as u32);
                    }
                }
                for (j, op) in chunk.iter().enumerate() {
                    if let BlockOp::Copy { dst, .. } = op {
                        push(dram::ReqKind::Write, *dst, Stream::C, base + j as u32);
                    }
                }
            }
        }
        Opcode::Reduce | Opcode::Average => {
            let tensor_blocks = instr.tensor_bytes() / BLOCK_BYTES;
            let k0 = (local.rank.wrapping_sub(dst_blk)) & local.mask;
            for k in (k0..tensor_blocks).step_by(geom.num_ranks() as usize) {
                for i in 0..instr.num_inputs {
                    check(dst_blk + k, src_blk + i * tensor_blocks + k)?;
                }
                let first = local.addr(src_blk + k);
                let stride = if instr.num_inputs > 1 {
                    local.addr(src_blk + tensor_blocks + k) - first
                } else {
                    0
                };
                ops.push(BlockOp::Reduce {
                    first,
                    stride,
                    dst: local.addr(dst_blk + k),
                });
            }
            for (chunk_ix, chunk) in ops.chunks(core.chunk_blocks()).enumerate() {
                let base = (chunk_ix * core.chunk_blocks()) as u32;
                for i in 0..instr.num_inputs {
                    let stream = if i % 2 == 0 { Stream::A } else { Stream::B };
                    for (j, op) in chunk.iter().enumerate() {
                        if let BlockOp::Reduce { first, stride, .. } = op {
                            push(dram::ReqKind::Read, first + i * stride, stream, base + j as u32);
                        }
                    }
                }
                for (j, op) in chunk.iter().enumerate() {
                    if let BlockOp::Reduce { dst, .. } = op {
                        push(dram::ReqKind::Write, *dst, Stream::C, base + j as u32);
                    }
                }
            }
        }
    }

    Ok(RankWorkItem {
        instruction: *instr,
        rank_id,
        ops,
        requests,
        request_streams: streams,
    })
}

/// Peak staging-queue occupancy seen during one rank's execution, in bytes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct QueueOccupancy {
    pub index: u64,
    pub a: u64,
    pub b: u64,
    pub c: u64,
}

impl QueueOccupancy {
    pub fn within(&self, core: &NmpCoreConfig) -> bool {
        self.a <= core.input_queue_bytes && self.b <= core.input_queue_bytes && self.c <= core.output_queue_bytes
    }

    pub fn max(self, other: Self) -> Self {
        Self {
            index: self.index.max(other.index),
            a: self.a.max(other.a),
            b: self.b.max(other.b),
            c: self.c.max(other.c),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RankOutcome {
    pub dram: RankSimResult,
    pub dram_cycles: u64,
    /// ALU-limited time, in memory-clock cycles.
    pub alu_cycles: u64,
    pub cycles: u64,
    pub queues: QueueOccupancy,
}

impl RankOutcome {
    pub fn alu_bound(&self) -> bool {
        self.alu_cycles > self.dram_cycles
    }
}

/// Apply the work item's functional effect to the rank's memory.
pub fn apply_functional(rank_mem: &mut SparseMemory, work: &RankWorkItem) -> Result<(), NmpError> {
    let average = work.instruction.opcode == Opcode::Average;
    for op in &work.ops {
        match *op {
            BlockOp::Copy { src, dst } => {
                let block = isa::load_block(rank_mem, src)?;
                isa::store_block(rank_mem, dst, &block)?;
            }
            BlockOp::Reduce { first, stride, dst } => {
                let block = isa::reduce_block(rank_mem, first, stride, work.instruction.num_inputs, average)?;
                isa::store_block(rank_mem, dst, &block)?;
            }
        }
    }
    Ok(())
}

/// Memory-clock cycles the ALU needs to produce `elements` outputs.
pub fn alu_cycles(core: &NmpCoreConfig, dram: &DramTimingParams, elements: u64) -> u64 {
    if elements == 0 {
        return 0;
    }
    let alu_clocks = elements.div_ceil(core.alu_lanes as u64);
    let ns = alu_clocks as f64 * 1000.0 / core.alu_clock_mhz;
    crate::ceil_u64(ns / dram.tck_ns())
}

/// Execute a lowered work item on its rank: functional update plus timing.
pub fn execute_on_rank(
    rank_mem: &mut SparseMemory,
    work: &RankWorkItem,
    dram_params: &DramTimingParams,
    core: &NmpCoreConfig,
) -> Result<RankOutcome, NmpError> {
    apply_functional(rank_mem, work)?;
    let (sim, timeline) = dram::simulate_rank_timeline(dram_params, &work.requests);
    let alu = alu_cycles(core, dram_params, work.alu_elements());
    let queues = staging_occupancy(work, &timeline, dram_params, core);
    Ok(RankOutcome {
        dram: sim,
        dram_cycles: sim.total_cycles,
        alu_cycles: alu,
        cycles: sim.total_cycles.max(alu),
        queues,
    })
}

/// Replay the DRAM timeline through the staging queues.
///
/// A read holds its queue slot from the moment it is requested (one fill
/// latency before its data lands) until it lands and is popped. An output
/// block holds a C slot from the landing of its last operand for one ALU
/// period, after which it is handed to the write queue. Forwarded GATHER
/// blocks pass through C in a single cycle. ALU throughput is enforced in
/// aggregate by [`execute_on_rank`], not cycle by cycle, so no backpressure
/// is applied here.
pub fn staging_occupancy(
    work: &RankWorkItem,
    timeline: &[dram::RequestTiming],
    dram_params: &DramTimingParams,
    core: &NmpCoreConfig,
) -> QueueOccupancy {
    let fill = crate::ceil_u64(core.fill_latency_ns / dram_params.tck_ns()) as f64;
    let hold = if work.instruction.opcode.is_reduction() {
        1000.0 / core.alu_clock_mhz / dram_params.tck_ns()
    } else {
        1.0
    };

    let mut intervals: [Vec<(f64, f64)>; 4] = Default::default();
    let slot = |s: Stream| match s {
        Stream::Index => 0,
        Stream::A => 1,
        Stream::B => 2,
        Stream::C => 3,
    };
    let mut complete = alloc::vec![0f64; work.ops.len()];
    for ((stream, op), t) in work.request_streams.iter().zip(timeline) {
        let arrive = t.data_end_cycle as f64;
        if *stream != Stream::C {
            intervals[slot(*stream)].push(((arrive - fill).max(0.0), arrive));
            if *op != u32::MAX {
                let o = *op as usize;
                complete[o] = complete[o].max(arrive);
            }
        }
    }
    for &t in &complete {
        intervals[3].push((t, t + hold));
    }

    let peak = |v: &mut Vec<(f64, f64)>| -> u64 {
        let mut events: Vec<(f64, i32)> = v.iter().flat_map(|&(s, e)| [(s, 1), (e, -1)]).collect();
        events.sort_by(|x, y| x.0.total_cmp(&y.0).then(x.1.cmp(&y.1)));
        let (mut cur, mut best) = (0i64, 0i64);
        for (_, d) in events {
            cur += d as i64;
            best = best.max(cur);
        }
        best as u64 * BLOCK_BYTES
    };
    QueueOccupancy {
        index: peak(&mut intervals[0]),
        a: peak(&mut intervals[1]),
        b: peak(&mut intervals[2]),
        c: peak(&mut intervals[3]),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pool::{InterleavedPool, PoolMemory};

    fn geom(r: u32) -> PoolGeometry {
        PoolGeometry::new(r, 1 << 22).unwrap()
    }

    #[test]
    fn default_core_sizing() {
        let core = NmpCoreConfig::default();
        let dram = DramTimingParams::default();
        core.validate(&dram).unwrap();
        assert!((core.bandwidth_delay_bytes(&dram) - 512.0).abs() < 1e-9);
        assert!((core.alu_throughput_gbs() - 9.6).abs() < 1e-12);
        let small = NmpCoreConfig {
            input_queue_bytes: 256,
            ..core
        };
        assert!(small.validate(&dram).is_err());
    }

    #[test]
    fn gather_b4_1k_sixteen_ranks() {
        let g = geom(16);
        let core = NmpCoreConfig::default();
        let instr = TensorInstruction::gather(1 << 20, 0, 64, 1 << 19, 4, 1024);
        let idx = [5, 9, 9, 0];
        for rank in 0..16 {
            let w = lower_instruction(&g, &instr, rank, &idx, &core).unwrap();
            let table_reads = w.request_streams.iter().filter(|(s, _)| *s == Stream::A).count();
            assert_eq!(table_reads, 4, "rank {rank}");
            assert_eq!(table_reads as u64 * 64, 256);
            assert_eq!(w.writes(), 4);
        }
    }

    #[test]
    fn smallest_reduce() {
        let g = geom(1);
        let instr = TensorInstruction::reduce(4096, 0, 2, 1, 64);
        let w = lower_instruction(&g, &instr, 0, &[], &NmpCoreConfig::default()).unwrap();
        assert_eq!((w.reads(), w.writes()), (2, 1));
    }

    #[test]
    fn reduce_b64_2k_thirty_two_ranks() {
        // S = 32 blocks per embedding, one per rank: 64 blocks per input.
        let g = geom(32);
        let slices = crate::addrmap::slices_per_rank(&g, 2048);
        let per_input = 64 * slices[0] as usize;
        let instr = TensorInstruction::reduce(1 << 24, 0, 2, 64, 2048);
        for rank in [0, 7, 31] {
            let w = lower_instruction(&g, &instr, rank, &[], &NmpCoreConfig::default()).unwrap();
            assert_eq!(w.reads(), 2 * per_input);
            assert_eq!(w.writes(), per_input);
        }
    }

    #[test]
    fn cross_rank_operands_rejected() {
        // 1-block embeddings over 4 ranks: row 1 lives on rank 1 but lands at batch slot 0 (rank 0).
        let g = geom(4);
        let instr = TensorInstruction::gather(1 << 16, 0, 8, 1 << 15, 1, 64);
        let err = lower_instruction(&g, &instr, 0, &[1], &NmpCoreConfig::default()).unwrap_err();
        assert!(matches!(err, NmpError::NotRankLocal { .. }));
    }

    #[test]
    fn gather_is_dram_bound_forwarding() {
        let g = geom(4);
        let core = NmpCoreConfig::default();
        let dram = DramTimingParams::default();
        let mut pool = InterleavedPool::new(g);
        let idx: Vec<u32> = (0..32).collect();
        let instr = TensorInstruction::gather(1 << 20, 0, 64, 1 << 19, 32, 1024);
        let w = lower_instruction(&g, &instr, 2, &idx, &core).unwrap();
        let out = execute_on_rank(pool.rank_mut(2), &w, &dram, &core).unwrap();
        assert_eq!(out.alu_cycles, 0);
        assert_eq!(out.cycles, out.dram_cycles);
        assert!(out.queues.within(&core));
    }

    fn reduce_outcome(core: &NmpCoreConfig) -> RankOutcome {
        let g = geom(1);
        let mut pool = InterleavedPool::new(g);
        let instr = TensorInstruction::reduce(1 << 21, 0, 2, 64, 2048);
        let w = lower_instruction(&g, &instr, 0, &[], core).unwrap();
        execute_on_rank(pool.rank_mut(0), &w, &DramTimingParams::default(), core).unwrap()
    }

    #[test]
    fn reduce_two_is_dram_bound_at_150mhz() {
        let dram = DramTimingParams::default();
        let core = NmpCoreConfig::default();
        // 25.6 GB/s over 3 bytes of traffic per output byte.
        let demand = NmpCoreConfig::reduction_demand_gbs(&dram, 2);
        assert!((demand - 25.6 / 3.0).abs() < 1e-12);
        assert!(demand < core.alu_throughput_gbs());
        let out = reduce_outcome(&core);
        assert!(!out.alu_bound(), "{out:?}");
        assert_eq!(out.cycles, out.dram_cycles);
        assert!(out.queues.within(&core), "{:?}", out.queues);
    }

    #[test]
    fn slow_alu_becomes_the_bottleneck() {
        let slow = NmpCoreConfig {
            alu_clock_mhz: 100.0,
            ..Default::default()
        };
        assert!(slow.alu_throughput_gbs() < NmpCoreConfig::reduction_demand_gbs(&DramTimingParams::default(), 2));
        let fast = reduce_outcome(&NmpCoreConfig::default());
        let out = reduce_outcome(&slow);
        assert!(out.alu_bound(), "{out:?} fast {fast:?}");
        assert_eq!(out.cycles, out.alu_cycles);
        assert!(out.cycles > fast.cycles);
    }

    #[test]
    fn rank_slices_match_direct_execution() {
        let g = geom(4);
        let core = NmpCoreConfig::default();
        let dram = DramTimingParams::default();
        let mut pool = InterleavedPool::new(g);
        let data: Vec<u8> = (0..4 * 512u32).flat_map(|i| ((i as f32) * 0.25 - 3.0).to_le_bytes()).collect();
        pool.write(0, &data).unwrap();
        let mut flat = pool.to_flat();
        let instr = TensorInstruction::average(1 << 20, 0, 4, 2, 256);
        isa::execute(&mut flat, &instr).unwrap();
        for rank in 0..4 {
            let w = lower_instruction(&g, &instr, rank, &[], &core).unwrap();
            execute_on_rank(pool.rank_mut(rank), &w, &dram, &core).unwrap();
        }
        assert_eq!(pool.to_flat(), flat);
    }
}
