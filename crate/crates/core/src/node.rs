//! A node of R NMP ranks, the interconnect, and the five design points.
//!
//! [`run_tensornode`] broadcasts each instruction to every rank, executes the
//! rank slices and closes the instruction with a barrier: node time for an
//! instruction is the slowest rank's time. [`run_cpu_memory`] replays the same
//! block traffic on a conventional multi-channel CPU memory system. The
//! design points combine these memory models with link and GPU models into a
//! [`LatencyBreakdown`].

use alloc::string::String;
use alloc::vec::Vec;

use crate::addrmap::PoolGeometry;
use crate::dram::{self, BlockRequest, ChannelMap, DramTimingParams, ReqKind};
use crate::isa::{self, IsaError, Opcode, TensorInstruction};
use crate::nmp::{self, NmpCoreConfig, NmpError, QueueOccupancy};
use crate::pool::{InterleavedPool, PoolMemory};
use crate::BLOCK_BYTES;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum NodeError {
    #[error("instruction {index}: {source}")]
    Fault { index: usize, source: NmpError },
    #[error("configuration error: {0}")]
    Config(String),
}

impl NodeError {
    fn at(index: usize) -> impl Fn(NmpError) -> NodeError {
        move |source| NodeError::Fault { index, source }
    }
}

/// Timing of one instruction across the node.
#[derive(Debug, Clone, PartialEq)]
pub struct InstructionTiming {
    pub opcode: Opcode,
    /// Barrier time: the slowest rank (or channel).
    pub cycles: u64,
    pub slowest: u32,
    /// Per rank (TensorNode) or per channel (CPU memory).
    pub unit_cycles: Vec<u64>,
    pub bytes_moved: u64,
    pub requests: u64,
    pub row_hits: u64,
    pub alu_bound: bool,
    pub queues: QueueOccupancy,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct SimReport {
    pub instructions: Vec<InstructionTiming>,
    pub total_cycles: u64,
    pub bytes_moved: u64,
    pub requests: u64,
    pub row_hits: u64,
    pub queues: QueueOccupancy,
    pub tck_ns: f64,
}

impl SimReport {
    fn push(&mut self, t: InstructionTiming) {
        self.total_cycles += t.cycles;
        self.bytes_moved += t.bytes_moved;
        self.requests += t.requests;
        self.row_hits += t.row_hits;
        self.queues = self.queues.max(t.queues);
        self.instructions.push(t);
    }

    pub fn time_ns(&self) -> f64 {
        self.total_cycles as f64 * self.tck_ns
    }

    pub fn time_us(&self) -> f64 {
        self.time_ns() / 1000.0
    }

    /// Total bytes moved over all units divided by node time, in GB/s.
    pub fn agg_bandwidth_gbs(&self) -> f64 {
        if self.total_cycles == 0 {
            0.0
        } else {
            self.bytes_moved as f64 / self.time_ns()
        }
    }

    pub fn row_hit_rate(&self) -> f64 {
        if self.requests == 0 {
            0.0
        } else {
            self.row_hits as f64 / self.requests as f64
        }
    }

    pub fn any_alu_bound(&self) -> bool {
        self.instructions.iter().any(|t| t.alu_bound)
    }

    /// Cycles spent in instructions matching `pred`.
    pub fn cycles_where(&self, pred: impl Fn(Opcode) -> bool) -> u64 {
        self.instructions.iter().filter(|t| pred(t.opcode)).map(|t| t.cycles).sum()
    }

    pub fn bytes_where(&self, pred: impl Fn(Opcode) -> bool) -> u64 {
        self.instructions.iter().filter(|t| pred(t.opcode)).map(|t| t.bytes_moved).sum()
    }
}

fn indices_for(pool: &impl PoolMemory, instr: &TensorInstruction) -> Result<Vec<u32>, IsaError> {
    match instr.opcode {
        Opcode::Gather => isa::read_indices(pool, instr),
        _ => Ok(Vec::new()),
    }
}

/// Execute an instruction stream on a TensorNode.
///
/// The pool is updated in place; on a fault the instructions before the
/// failing one have been applied.
pub fn run_tensornode(
    dram_params: &DramTimingParams,
    core: &NmpCoreConfig,
    instrs: &[TensorInstruction],
    pool: &mut InterleavedPool,
) -> Result<SimReport, NodeError> {
    dram_params.validate().map_err(|e| NodeError::Config(alloc::format!("{e}")))?;
    core.validate(dram_params).map_err(|e| NodeError::Config(alloc::format!("{e}")))?;
    let geom = *pool.geometry();
    let mut report = SimReport {
        tck_ns: dram_params.tck_ns(),
        ..Default::default()
    };
    for (index, instr) in instrs.iter().enumerate() {
        let fault = NodeError::at(index);
        instr.validate_for(geom.total_capacity()).map_err(|e| fault(e.into()))?;
        let indices = indices_for(&*pool, instr).map_err(|e| fault(e.into()))?;
        // Lower on every rank first so a bad instruction leaves the pool untouched.
        let work = (0..geom.num_ranks())
            .map(|r| nmp::lower_instruction(&geom, instr, r, &indices, core))
            .collect::<Result<Vec<_>, _>>()
            .map_err(&fault)?;
        let mut timing = InstructionTiming {
            opcode: instr.opcode,
            cycles: 0,
            slowest: 0,
            unit_cycles: Vec::with_capacity(work.len()),
            bytes_moved: 0,
            requests: 0,
            row_hits: 0,
            alu_bound: false,
            queues: QueueOccupancy::default(),
        };
        for (mem, w) in pool.ranks_mut().iter_mut().zip(&work) {
            let out = nmp::execute_on_rank(mem, w, dram_params, core).map_err(&fault)?;
            if out.cycles > timing.cycles {
                timing.cycles = out.cycles;
                timing.slowest = w.rank_id;
            }
            timing.unit_cycles.push(out.cycles);
            timing.bytes_moved += out.dram.bytes_moved;
            timing.requests += out.dram.requests;
            timing.row_hits += out.dram.row_hits;
            timing.alu_bound |= out.alu_bound();
            timing.queues = timing.queues.max(out.queues);
        }
        report.push(timing);
    }
    Ok(report)
}

/// Block traffic of one instruction in pool addresses, in streaming order.
///
/// Output blocks are taken in chunks of `chunk_blocks`; each chunk reads its
/// operands input by input and then writes its results.
pub fn instruction_traffic(instr: &TensorInstruction, indices: &[u32], chunk_blocks: usize) -> Vec<(ReqKind, u64)> {
    let mut out = Vec::new();
    let s = instr.blocks_per_embedding();
    let tensor_blocks = instr.tensor_bytes() / BLOCK_BYTES;
    let chunk = chunk_blocks.max(1) as u64;
    match instr.opcode {
        Opcode::Gather => {
            let first = instr.index_base / BLOCK_BYTES;
            let last = (instr.index_base + instr.index_bytes()).div_ceil(BLOCK_BYTES);
            out.extend((first..last).map(|b| (ReqKind::Read, b * BLOCK_BYTES)));
            let src = |k: u64| instr.src_base + (indices[(k / s) as usize] as u64 * s + k % s) * BLOCK_BYTES;
            for c in (0..tensor_blocks).step_by(chunk as usize) {
                let end = (c + chunk).min(tensor_blocks);
                out.extend((c..end).map(|k| (ReqKind::Read, src(k))));
                out.extend((c..end).map(|k| (ReqKind::Write, instr.dst_base + k * BLOCK_BYTES)));
            }
        }
        Opcode::Reduce | Opcode::Average => {
            for c in (0..tensor_blocks).step_by(chunk as usize) {
                let end = (c + chunk).min(tensor_blocks);
                for i in 0..instr.num_inputs {
                    let base = instr.src_base + i * instr.tensor_bytes();
                    out.extend((c..end).map(|k| (ReqKind::Read, base + k * BLOCK_BYTES)));
                }
                out.extend((c..end).map(|k| (ReqKind::Write, instr.dst_base + k * BLOCK_BYTES)));
            }
        }
    }
    out
}

/// Time an instruction stream's block traffic on a CPU memory system.
///
/// Every channel simulates its DIMMs sharing one data bus; each instruction
/// ends with a barrier over channels. Memory contents are not modified.
pub fn run_cpu_memory(
    dram_params: &DramTimingParams,
    map: &ChannelMap,
    chunk_blocks: usize,
    instrs: &[TensorInstruction],
    pool: &impl PoolMemory,
) -> Result<SimReport, NodeError> {
    dram_params.validate().map_err(|e| NodeError::Config(alloc::format!("{e}")))?;
    map.validate().map_err(|e| NodeError::Config(alloc::format!("{e}")))?;
    let mut report = SimReport {
        tck_ns: dram_params.tck_ns(),
        ..Default::default()
    };
    let dimms = map.dimms_per_channel as usize;
    for (index, instr) in instrs.iter().enumerate() {
        let fault = NodeError::at(index);
        instr.validate_for(pool.capacity()).map_err(|e| fault(e.into()))?;
        let indices = indices_for(pool, instr).map_err(|e| fault(e.into()))?;
        let mut per_channel: Vec<Vec<Vec<BlockRequest>>> = (0..map.channels).map(|_| alloc::vec![Vec::new(); dimms]).collect();
        for (order, (kind, addr)) in instruction_traffic(instr, &indices, chunk_blocks).into_iter().enumerate() {
            let (c, d, local) = map.route(addr);
            per_channel[c as usize][d as usize].push(BlockRequest {
                kind,
                rank_local_addr: local,
                issue_order: order as u64,
            });
        }
        let mut timing = InstructionTiming {
            opcode: instr.opcode,
            cycles: 0,
            slowest: 0,
            unit_cycles: Vec::with_capacity(per_channel.len()),
            bytes_moved: 0,
            requests: 0,
            row_hits: 0,
            alu_bound: false,
            queues: QueueOccupancy::default(),
        };
        for (c, reqs) in per_channel.iter().enumerate() {
            let r = dram::simulate_shared_channel(dram_params, reqs);
            if r.total_cycles > timing.cycles {
                timing.cycles = r.total_cycles;
                timing.slowest = c as u32;
            }
            timing.unit_cycles.push(r.total_cycles);
            timing.bytes_moved += r.bytes_moved;
            timing.requests += r.requests;
            timing.row_hits += r.row_hits;
        }
        report.push(timing);
    }
    Ok(report)
}

#[derive(Debug, Clone, PartialEq)]
pub struct LinkSpec {
    pub name: String,
    pub bandwidth_gbs: f64,
    pub fixed_latency_us: f64,
}

impl LinkSpec {
    pub fn pcie() -> Self {
        Self {
            name: "pcie".into(),
            bandwidth_gbs: 16.0,
            fixed_latency_us: 10.0,
        }
    }

    pub fn nvlink() -> Self {
        Self {
            name: "nvlink".into(),
            bandwidth_gbs: 150.0,
            fixed_latency_us: 5.0,
        }
    }

    pub fn validate(&self) -> Result<(), NodeError> {
        if !(self.bandwidth_gbs > 0.0) || !self.bandwidth_gbs.is_finite() {
            return Err(NodeError::Config(alloc::format!("link {}: bandwidth must be positive", self.name)));
        }
        if !(self.fixed_latency_us >= 0.0) {
            return Err(NodeError::Config(alloc::format!("link {}: latency must be non-negative", self.name)));
        }
        Ok(())
    }

    /// Bandwidth-only part of a transfer, in microseconds.
    pub fn streaming_us(&self, bytes: u64) -> f64 {
        bytes as f64 / self.bandwidth_gbs / 1000.0
    }

    /// Same link with its bandwidth multiplied by `k`.
    pub fn scaled(&self, k: f64) -> Self {
        Self {
            bandwidth_gbs: self.bandwidth_gbs * k,
            ..self.clone()
        }
    }
}

/// Fixed latency plus serialization time, in microseconds.
pub fn transfer_time(link: &LinkSpec, bytes: u64) -> f64 {
    link.fixed_latency_us + link.streaming_us(bytes)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum DesignPoint {
    CpuOnly,
    CpuGpu,
    Pmem,
    Tdimm,
    GpuOracle,
}

impl DesignPoint {
    pub const ALL: [DesignPoint; 5] = [
        DesignPoint::CpuOnly,
        DesignPoint::CpuGpu,
        DesignPoint::Pmem,
        DesignPoint::Tdimm,
        DesignPoint::GpuOracle,
    ];

    pub fn name(self) -> &'static str {
        match self {
            DesignPoint::CpuOnly => "CPU_ONLY",
            DesignPoint::CpuGpu => "CPU_GPU",
            DesignPoint::Pmem => "PMEM",
            DesignPoint::Tdimm => "TDIMM",
            DesignPoint::GpuOracle => "GPU_ORACLE",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|d| d.name().eq_ignore_ascii_case(name))
    }

    /// Whether the DNN layers run on the GPU.
    pub fn dnn_on_gpu(self) -> bool {
        self != DesignPoint::CpuOnly
    }
}

impl core::fmt::Display for DesignPoint {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SystemConfig {
    pub geometry: PoolGeometry,
    pub dram: DramTimingParams,
    pub core: NmpCoreConfig,
    pub cpu: ChannelMap,
    /// Bytes of each output tensor a CPU core streams per tile.
    pub cpu_tile_bytes: u64,
    pub pcie: LinkSpec,
    pub nvlink: LinkSpec,
    pub gpu_hbm_gbs: f64,
}

impl SystemConfig {
    pub fn new(geometry: PoolGeometry) -> Self {
        Self {
            geometry,
            dram: DramTimingParams::default(),
            core: NmpCoreConfig::default(),
            cpu: ChannelMap::default(),
            cpu_tile_bytes: 128 << 10,
            pcie: LinkSpec::pcie(),
            nvlink: LinkSpec::nvlink(),
            gpu_hbm_gbs: 900.0,
        }
    }

    pub fn validate(&self) -> Result<(), NodeError> {
        let cfg = |e: &dyn core::fmt::Display| NodeError::Config(alloc::format!("{e}"));
        self.dram.validate().map_err(|e| cfg(&e))?;
        self.core.validate(&self.dram).map_err(|e| cfg(&e))?;
        self.cpu.validate().map_err(|e| cfg(&e))?;
        self.pcie.validate()?;
        self.nvlink.validate()?;
        if self.cpu_tile_bytes < BLOCK_BYTES || !self.cpu_tile_bytes.is_multiple_of(BLOCK_BYTES) {
            return Err(NodeError::Config("CPU tile must be a positive multiple of 64 bytes".into()));
        }
        if !(self.gpu_hbm_gbs > 0.0) {
            return Err(NodeError::Config("GPU memory bandwidth must be positive".into()));
        }
        Ok(())
    }

    fn cpu_chunk_blocks(&self) -> usize {
        (self.cpu_tile_bytes / BLOCK_BYTES) as usize
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct LatencyBreakdown {
    pub t_lookup_us: f64,
    pub t_reduce_us: f64,
    pub t_transfer_us: f64,
    pub t_dnn_us: f64,
    pub total_us: f64,
}

impl LatencyBreakdown {
    pub fn new(t_lookup_us: f64, t_reduce_us: f64, t_transfer_us: f64, t_dnn_us: f64) -> Self {
        Self {
            t_lookup_us,
            t_reduce_us,
            t_transfer_us,
            t_dnn_us,
            total_us: t_lookup_us + t_reduce_us + t_transfer_us + t_dnn_us,
        }
    }
}

/// Byte volumes of an embedding-layer instruction stream.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct StreamVolumes {
    /// Bytes produced by GATHERs (the pre-reduction tensors).
    pub gathered_bytes: u64,
    /// Bytes of the tensors no later instruction consumes.
    pub output_bytes: u64,
    /// Bytes read and written by reductions.
    pub reduction_traffic_bytes: u64,
}

impl StreamVolumes {
    pub fn of(instrs: &[TensorInstruction]) -> Self {
        let mut v = StreamVolumes::default();
        for (i, instr) in instrs.iter().enumerate() {
            let out = instr.write_range();
            match instr.opcode {
                Opcode::Gather => v.gathered_bytes += instr.tensor_bytes(),
                _ => v.reduction_traffic_bytes += (instr.num_inputs + 1) * instr.tensor_bytes(),
            }
            let consumed = instrs[i + 1..].iter().any(|later| {
                later.opcode.is_reduction()
                    && later
                        .read_ranges()
                        .iter()
                        .any(|r| r.start < out.end && out.start < r.end)
            });
            if !consumed {
                v.output_bytes += instr.tensor_bytes();
            }
        }
        v
    }

    /// Pre-reduction over post-reduction bytes.
    pub fn reduction_factor(&self) -> f64 {
        self.gathered_bytes as f64 / self.output_bytes as f64
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DesignResult {
    pub design: DesignPoint,
    pub breakdown: LatencyBreakdown,
    /// Bytes moved by the embedding phases over their duration.
    pub agg_bandwidth_gbs: f64,
    /// Row-buffer hit rate of simulated memory; 0 for analytic models.
    pub row_hit_rate: f64,
    pub transfer_bytes: u64,
    pub link: Option<LinkSpec>,
}

/// Evaluate one design point on an embedding-layer stream.
///
/// `pool` holds the stream's initial memory image (tables and index
/// buffers); it is not modified.
pub fn evaluate_design(
    dp: DesignPoint,
    sys: &SystemConfig,
    instrs: &[TensorInstruction],
    pool: &InterleavedPool,
    t_dnn_us: Option<f64>,
) -> Result<DesignResult, NodeError> {
    sys.validate()?;
    let t_dnn = match t_dnn_us {
        Some(t) if t >= 0.0 && t.is_finite() => t,
        Some(_) => return Err(NodeError::Config(alloc::format!("{dp}: t_dnn must be non-negative"))),
        None => return Err(NodeError::Config(alloc::format!("{dp}: missing t_dnn"))),
    };
    if *pool.geometry() != sys.geometry {
        return Err(NodeError::Config("pool geometry differs from the system geometry".into()));
    }
    let vol = StreamVolumes::of(instrs);
    let gather = |op: Opcode| op == Opcode::Gather;
    let reduction = |op: Opcode| op.is_reduction();
    let us = |cycles: u64| sys.dram.cycles_to_ns(cycles) / 1000.0;
    let phase_bw = |bytes: u64, t_us: f64| if t_us > 0.0 { bytes as f64 / t_us / 1000.0 } else { 0.0 };

    let result = match dp {
        DesignPoint::CpuOnly | DesignPoint::CpuGpu => {
            let cpu = run_cpu_memory(&sys.dram, &sys.cpu, sys.cpu_chunk_blocks(), instrs, pool)?;
            let lookup = us(cpu.cycles_where(gather));
            if dp == DesignPoint::CpuOnly {
                let reduce = us(cpu.cycles_where(reduction));
                DesignResult {
                    design: dp,
                    breakdown: LatencyBreakdown::new(lookup, reduce, 0.0, t_dnn),
                    agg_bandwidth_gbs: cpu.agg_bandwidth_gbs(),
                    row_hit_rate: cpu.row_hit_rate(),
                    transfer_bytes: 0,
                    link: None,
                }
            } else {
                let bytes = vol.gathered_bytes;
                DesignResult {
                    design: dp,
                    breakdown: LatencyBreakdown::new(lookup, 0.0, transfer_time(&sys.pcie, bytes), t_dnn),
                    agg_bandwidth_gbs: phase_bw(cpu.bytes_where(gather), lookup),
                    row_hit_rate: cpu.row_hit_rate(),
                    transfer_bytes: bytes,
                    link: Some(sys.pcie.clone()),
                }
            }
        }
        DesignPoint::Pmem => {
            let bytes = vol.gathered_bytes;
            let lookup = sys.nvlink.streaming_us(bytes);
            let reduce = vol.reduction_traffic_bytes as f64 / sys.gpu_hbm_gbs / 1000.0;
            DesignResult {
                design: dp,
                breakdown: LatencyBreakdown::new(lookup, reduce, transfer_time(&sys.nvlink, bytes), t_dnn),
                agg_bandwidth_gbs: phase_bw(bytes, lookup),
                row_hit_rate: 0.0,
                transfer_bytes: bytes,
                link: Some(sys.nvlink.clone()),
            }
        }
        DesignPoint::Tdimm => {
            let mut scratch = pool.clone();
            let report = run_tensornode(&sys.dram, &sys.core, instrs, &mut scratch)?;
            let bytes = vol.output_bytes;
            DesignResult {
                design: dp,
                breakdown: LatencyBreakdown::new(
                    us(report.cycles_where(gather)),
                    us(report.cycles_where(reduction)),
                    transfer_time(&sys.nvlink, bytes),
                    t_dnn,
                ),
                agg_bandwidth_gbs: report.agg_bandwidth_gbs(),
                row_hit_rate: report.row_hit_rate(),
                transfer_bytes: bytes,
                link: Some(sys.nvlink.clone()),
            }
        }
        DesignPoint::GpuOracle => {
            // Gathered rows are read and the gathered tensor written locally.
            let lookup = 2.0 * vol.gathered_bytes as f64 / sys.gpu_hbm_gbs / 1000.0;
            let reduce = vol.reduction_traffic_bytes as f64 / sys.gpu_hbm_gbs / 1000.0;
            DesignResult {
                design: dp,
                breakdown: LatencyBreakdown::new(lookup, reduce, 0.0, t_dnn),
                agg_bandwidth_gbs: sys.gpu_hbm_gbs,
                row_hit_rate: 0.0,
                transfer_bytes: 0,
                link: None,
            }
        }
    };
    Ok(result)
}
