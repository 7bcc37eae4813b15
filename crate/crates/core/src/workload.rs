//! Benchmark presets, embedding-layer instruction streams and the dense
//! reference model used as a test oracle.
//!
//! A stream for one inference batch is laid out in the pool as
//!
//! ```text
//!  [ table 0 | table 1 | ... | index buffers | gathered tensors | outputs ]
//! ```
//!
//! with every region starting on a stripe (R x 64 B) boundary, so each
//! embedding row starts on rank 0 and every operand block of a destination
//! block lives on that block's rank. GATHERs come first, one per table, then
//! the reductions.

use alloc::collections::BTreeSet;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Zipf};

use crate::addrmap::{AddrError, EmbeddingTableSpec, PoolGeometry};
use crate::dram::DramTimingParams;
use crate::isa::{self, Opcode, TensorInstruction};
use crate::nmp::NmpCoreConfig;
use crate::node;
use crate::pool::{AccessFault, InterleavedPool, PoolMemory, SparseMemory};
use crate::BLOCK_BYTES;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum WorkloadError {
    #[error("invalid workload: {0}")]
    Config(String),
    #[error(transparent)]
    Addr(#[from] AddrError),
    #[error(transparent)]
    Fault(#[from] AccessFault),
}

fn config_err(msg: impl Into<String>) -> WorkloadError {
    WorkloadError::Config(msg.into())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum IndexDistribution {
    Uniform,
    /// Zipf over rows with exponent `s`; row 0 is the most popular.
    Zipf(f64),
    /// Index position p looks up row p mod rows (a pure streaming pattern).
    Sequential,
}

/// How gathered embeddings are combined.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReductionPlan {
    /// One lookup per table and batch item; groups of N consecutive tables
    /// are reduced together.
    AcrossTables,
    /// N lookups per table and batch item, pooled per table.
    PerTable,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Pooling {
    Sum,
    Average,
}

impl Pooling {
    fn opcode(self) -> Opcode {
        match self {
            Pooling::Sum => Opcode::Reduce,
            Pooling::Average => Opcode::Average,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BenchmarkConfig {
    pub name: String,
    pub num_tables: u32,
    pub max_reduction: u32,
    /// Elements (fp32) per embedding.
    pub embedding_dim: u32,
    pub rows_per_table: u64,
    pub batch_size: u32,
    pub index_distribution: IndexDistribution,
    pub plan: ReductionPlan,
    pub pooling: Pooling,
    /// Dense layers of the model; documentation only.
    pub fc_layers: u32,
}

pub const PRESET_NAMES: [&str; 4] = ["NCF", "YouTube", "Fox", "Facebook"];

impl BenchmarkConfig {
    fn base(name: &str, num_tables: u32, max_reduction: u32, fc_layers: u32, plan: ReductionPlan, pooling: Pooling) -> Self {
        Self {
            name: name.into(),
            num_tables,
            max_reduction,
            embedding_dim: 512,
            rows_per_table: 1_000_000,
            batch_size: 64,
            index_distribution: IndexDistribution::Uniform,
            plan,
            pooling,
            fc_layers,
        }
    }

    pub fn ncf() -> Self {
        Self::base("NCF", 4, 2, 4, ReductionPlan::AcrossTables, Pooling::Sum)
    }

    pub fn youtube() -> Self {
        Self::base("YouTube", 2, 50, 4, ReductionPlan::PerTable, Pooling::Average)
    }

    pub fn fox() -> Self {
        Self::base("Fox", 2, 50, 1, ReductionPlan::PerTable, Pooling::Average)
    }

    pub fn facebook() -> Self {
        Self::base("Facebook", 8, 25, 6, ReductionPlan::PerTable, Pooling::Sum)
    }

    /// Look up a preset by name, ignoring case.
    pub fn preset(name: &str) -> Option<Self> {
        match name.to_ascii_lowercase().as_str() {
            "ncf" => Some(Self::ncf()),
            "youtube" => Some(Self::youtube()),
            "fox" => Some(Self::fox()),
            "facebook" => Some(Self::facebook()),
            _ => None,
        }
    }

    pub fn presets() -> Vec<Self> {
        PRESET_NAMES.iter().filter_map(|n| Self::preset(n)).collect()
    }

    pub fn embedding_bytes(&self) -> u64 {
        self.embedding_dim as u64 * 4
    }

    /// Lookups per table and batch item.
    pub fn lookups_per_table(&self) -> u64 {
        match self.plan {
            ReductionPlan::AcrossTables => 1,
            ReductionPlan::PerTable => self.max_reduction as u64,
        }
    }

    /// Bytes gathered per inference batch.
    pub fn gathered_bytes(&self) -> u64 {
        self.num_tables as u64 * self.batch_size as u64 * self.lookups_per_table() * self.embedding_bytes()
    }

    pub fn validate(&self) -> Result<(), WorkloadError> {
        if self.num_tables == 0 {
            return Err(config_err("num_tables must be at least 1"));
        }
        if self.embedding_dim == 0 || !self.embedding_bytes().is_multiple_of(BLOCK_BYTES) {
            return Err(config_err("embedding_dim must be a positive multiple of 16 elements"));
        }
        if self.rows_per_table == 0 || self.rows_per_table > u32::MAX as u64 {
            return Err(config_err("rows_per_table must be in 1..=4294967295"));
        }
        if self.batch_size == 0 {
            return Err(config_err("batch_size must be at least 1"));
        }
        if !(1..=255).contains(&self.max_reduction) {
            return Err(config_err("max_reduction must be in 1..=255"));
        }
        if self.batch_size as u64 * self.lookups_per_table() > 0xffff {
            return Err(config_err("batch_size x lookups per table exceeds 65535"));
        }
        if let IndexDistribution::Zipf(s) = self.index_distribution {
            if !(s > 0.0) || !s.is_finite() {
                return Err(config_err("zipf exponent must be positive"));
            }
        }
        Ok(())
    }
}

/// Bytes of `num_tables` tables of `rows` fp32 embeddings of `embedding_dim` elements.
pub fn footprint_bytes(rows: u64, embedding_dim: u64, num_tables: u64) -> Result<u64, WorkloadError> {
    if rows == 0 || embedding_dim == 0 || num_tables == 0 {
        return Err(config_err("rows, embedding_dim and num_tables must all be at least 1"));
    }
    rows.checked_mul(embedding_dim)
        .and_then(|v| v.checked_mul(4))
        .and_then(|v| v.checked_mul(num_tables))
        .ok_or_else(|| config_err("footprint overflows 64 bits"))
}

/// A synthesized embedding layer and where it lives in the pool.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingStream {
    pub instructions: Vec<TensorInstruction>,
    pub tables: Vec<EmbeddingTableSpec>,
    /// Per table: index buffer base and its contents.
    pub index_buffers: Vec<(u64, Vec<u32>)>,
    /// Base and length of each tensor the stream leaves as a result.
    pub outputs: Vec<(u64, u64)>,
    /// First byte past the stream's layout.
    pub end: u64,
}

impl EmbeddingStream {
    pub fn gathered_bytes(&self) -> u64 {
        self.instructions
            .iter()
            .filter(|i| i.opcode == Opcode::Gather)
            .map(|i| i.tensor_bytes())
            .sum()
    }
}

struct Layout {
    stripe: u64,
    next: u64,
}

impl Layout {
    fn take(&mut self, bytes: u64) -> Result<u64, WorkloadError> {
        let base = self.next;
        self.next = bytes
            .checked_add(base)
            .map(|end| end.div_ceil(self.stripe) * self.stripe)
            .ok_or_else(|| config_err("layout overflows 64 bits"))?;
        Ok(base)
    }
}

fn draw_indices(cfg: &BenchmarkConfig, count: u64, rng: &mut ChaCha8Rng) -> Result<Vec<u32>, WorkloadError> {
    let rows = cfg.rows_per_table;
    Ok(match cfg.index_distribution {
        IndexDistribution::Uniform => (0..count).map(|_| rng.random_range(0..rows) as u32).collect(),
        IndexDistribution::Sequential => (0..count).map(|p| (p % rows) as u32).collect(),
        IndexDistribution::Zipf(s) => {
            let zipf = Zipf::new(rows as f64, s).map_err(|e| config_err(alloc::format!("zipf: {e}")))?;
            (0..count).map(|_| (zipf.sample(rng) as u64 - 1).min(rows - 1) as u32).collect()
        }
    })
}

fn random_row(rng: &mut ChaCha8Rng, bytes: usize) -> Vec<u8> {
    let mut out = Vec::with_capacity(bytes);
    for _ in 0..bytes / 4 {
        let v: f32 = rng.random_range(-1.0f32..1.0);
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

/// Synthesize one inference batch of `cfg` and write its index buffers and
/// every referenced table row into `pool`.
///
/// Deterministic for a given `seed`.
pub fn build_stream(
    cfg: &BenchmarkConfig,
    geom: &PoolGeometry,
    seed: u64,
    pool: &mut impl PoolMemory,
) -> Result<EmbeddingStream, WorkloadError> {
    cfg.validate()?;
    let e = cfg.embedding_bytes();
    if !e.is_multiple_of(geom.stripe_bytes()) {
        return Err(config_err(alloc::format!(
            "embedding of {e} bytes is not a multiple of the {}-byte rank stripe; operands would straddle ranks",
            geom.stripe_bytes()
        )));
    }
    if pool.capacity() != geom.total_capacity() {
        return Err(config_err("pool capacity differs from the geometry"));
    }
    let mut layout = Layout {
        stripe: geom.stripe_bytes(),
        next: 0,
    };
    let b = cfg.batch_size as u64;
    let lookups = cfg.lookups_per_table();
    let tensor = b * e;

    let mut tables = Vec::new();
    for t in 0..cfg.num_tables {
        let base = layout.take(cfg.rows_per_table * e)?;
        tables.push(EmbeddingTableSpec {
            table_id: t,
            rows: cfg.rows_per_table,
            embedding_bytes: e,
            base,
        });
    }
    let mut index_buffers = Vec::new();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for _ in 0..cfg.num_tables {
        let base = layout.take(b * lookups * 4)?;
        index_buffers.push((base, draw_indices(cfg, b * lookups, &mut rng)?));
    }
    let gathered_base = layout.take(cfg.num_tables as u64 * lookups * tensor)?;

    let mut instructions = Vec::new();
    for (t, table) in tables.iter().enumerate() {
        instructions.push(TensorInstruction::gather(
            gathered_base + t as u64 * lookups * tensor,
            table.base,
            table.rows,
            index_buffers[t].0,
            b * lookups,
            e,
        ));
    }
    // (first gathered tensor, tensors combined)
    let groups: Vec<(u64, u64)> = match cfg.plan {
        ReductionPlan::PerTable => (0..cfg.num_tables as u64).map(|t| (t * lookups, lookups)).collect(),
        ReductionPlan::AcrossTables => {
            let n = cfg.max_reduction as u64;
            (0..cfg.num_tables as u64)
                .step_by(n as usize)
                .map(|first| (first, n.min(cfg.num_tables as u64 - first)))
                .collect()
        }
    };
    let reducing = groups.iter().filter(|g| g.1 > 1).count() as u64;
    let out_base = layout.take(reducing * tensor)?;
    let mut outputs = Vec::new();
    let mut slot = 0;
    for &(first, n) in &groups {
        let src = gathered_base + first * tensor;
        if n == 1 {
            outputs.push((src, tensor));
            continue;
        }
        let dst = out_base + slot * tensor;
        slot += 1;
        let mut instr = TensorInstruction::reduce(dst, src, n, b, e);
        instr.opcode = cfg.pooling.opcode();
        instructions.push(instr);
        outputs.push((dst, tensor));
    }
    if layout.next > geom.total_capacity() {
        return Err(config_err(alloc::format!(
            "workload needs {} bytes but the pool holds {}",
            layout.next,
            geom.total_capacity()
        )));
    }

    for ((base, indices), table) in index_buffers.iter().zip(&tables) {
        let raw: Vec<u8> = indices.iter().flat_map(|i| i.to_le_bytes()).collect();
        pool.write(*base, &raw)?;
        let mut data_rng = ChaCha8Rng::seed_from_u64(seed);
        data_rng.set_stream(1 + table.table_id as u64);
        let rows: BTreeSet<u32> = indices.iter().copied().collect();
        for row in rows {
            pool.write(table.row_addr(row as u64), &random_row(&mut data_rng, e as usize))?;
        }
    }
    Ok(EmbeddingStream {
        instructions,
        tables,
        index_buffers,
        outputs,
        end: layout.next,
    })
}

/// Dense flat memory with straightforward tensor routines: the bit-exact
/// target for functional tests.
#[derive(Debug, Clone, PartialEq)]
pub struct ReferencePool {
    bytes: Vec<u8>,
}

impl ReferencePool {
    pub fn new(len: usize) -> Self {
        Self { bytes: vec![0; len] }
    }

    /// Copy the first `len` bytes of `mem`.
    pub fn from_memory(mem: &impl PoolMemory, len: usize) -> Result<Self, AccessFault> {
        let mut r = Self::new(len);
        mem.read(0, &mut r.bytes)?;
        Ok(r)
    }

    pub fn len(&self) -> usize {
        self.bytes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bytes.is_empty()
    }

    pub fn bytes(&self) -> &[u8] {
        &self.bytes
    }

    fn range(&self, addr: u64, len: u64) -> Result<core::ops::Range<usize>, AccessFault> {
        let fault = AccessFault {
            addr,
            len,
            capacity: self.bytes.len() as u64,
        };
        let end = addr.checked_add(len).ok_or(fault)?;
        if end > self.bytes.len() as u64 {
            return Err(fault);
        }
        Ok(addr as usize..end as usize)
    }

    fn f32_at(&self, at: usize) -> f32 {
        f32::from_le_bytes(self.bytes[at..at + 4].try_into().unwrap())
    }

    pub fn gather(&mut self, dst: u64, table: u64, rows: u64, indices: &[u32], e: u64) -> Result<(), isa::IsaError> {
        for (position, &ix) in indices.iter().enumerate() {
            if ix as u64 >= rows {
                return Err(isa::IsaError::IndexOutOfRange {
                    position: position as u64,
                    index: ix,
                    rows,
                });
            }
            self.range(table + ix as u64 * e, e)?;
        }
        self.range(dst, indices.len() as u64 * e)?;
        for (b, &ix) in indices.iter().enumerate() {
            let from = (table + ix as u64 * e) as usize;
            let to = (dst + b as u64 * e) as usize;
            self.bytes.copy_within(from..from + e as usize, to);
        }
        Ok(())
    }

    /// out[x] = ((in_0[x] + in_1[x]) + ...) + in_{n-1}[x], divided by n if `average`.
    pub fn reduce(&mut self, dst: u64, src: u64, n: u64, tensor_bytes: u64, average: bool) -> Result<(), AccessFault> {
        self.range(src, n * tensor_bytes)?;
        let out = self.range(dst, tensor_bytes)?;
        let mut result = Vec::with_capacity(tensor_bytes as usize);
        for x in (0..tensor_bytes as usize).step_by(4) {
            let mut acc = self.f32_at(src as usize + x);
            for i in 1..n as usize {
                acc += self.f32_at(src as usize + i * tensor_bytes as usize + x);
            }
            if average {
                acc /= n as f32;
            }
            result.extend_from_slice(&acc.to_le_bytes());
        }
        self.bytes[out].copy_from_slice(&result);
        Ok(())
    }

    pub fn execute(&mut self, instr: &TensorInstruction) -> Result<(), isa::IsaError> {
        match instr.opcode {
            Opcode::Gather => {
                let raw = &self.bytes[self.range(instr.index_base, instr.index_bytes())?];
                let indices: Vec<u32> = raw.chunks_exact(4).map(|c| u32::from_le_bytes(c.try_into().unwrap())).collect();
                self.gather(instr.dst_base, instr.src_base, instr.table_rows, &indices, instr.embedding_bytes)
            }
            op => Ok(self.reduce(
                instr.dst_base,
                instr.src_base,
                instr.num_inputs,
                instr.tensor_bytes(),
                op == Opcode::Average,
            )?),
        }
    }

    /// First address at which `mem` differs from this image.
    pub fn first_difference(&self, mem: &impl PoolMemory) -> Result<Option<u64>, AccessFault> {
        let mut buf = vec![0u8; 4096];
        for (c, chunk) in self.bytes.chunks(4096).enumerate() {
            let got = &mut buf[..chunk.len()];
            mem.read(c as u64 * 4096, got)?;
            if let Some(i) = chunk.iter().zip(got.iter()).position(|(a, b)| a != b) {
                return Ok(Some((c * 4096 + i) as u64));
            }
        }
        Ok(None)
    }
}

/// A randomized functional-equivalence case.
#[derive(Debug, Clone, PartialEq)]
pub struct ValidationCase {
    pub id: u64,
    pub geometry: PoolGeometry,
    pub instructions: Vec<TensorInstruction>,
    /// Initial memory contents.
    pub init: Vec<(u64, Vec<u8>)>,
}

fn special_f32(rng: &mut ChaCha8Rng) -> f32 {
    match rng.random_range(0..24u32) {
        0 => -0.0,
        1 => f32::INFINITY,
        2 => f32::NEG_INFINITY,
        3 => f32::MIN_POSITIVE / 8.0,
        4 => f32::MAX,
        5 => 1.0e-30,
        _ => rng.random_range(-1.0e3f32..1.0e3),
    }
}

impl ValidationCase {
    /// Case `id` of the family seeded by `seed`.
    pub fn generate(seed: u64, id: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(id);
        let r = 1u32 << rng.random_range(0..5u32);
        let stripe = r as u64 * BLOCK_BYTES;
        let e = stripe * rng.random_range(1..=3u64);
        let b = rng.random_range(1..=6u64);
        let rows = rng.random_range(1..=12u64);
        let tables = rng.random_range(1..=3usize);
        let lookups = rng.random_range(1..=3u64);
        let align = |x: u64| x.div_ceil(stripe) * stripe;

        let mut next = 0;
        let mut init = Vec::new();
        let mut table_bases = Vec::new();
        for _ in 0..tables {
            let data: Vec<u8> = (0..rows * e / 4).flat_map(|_| special_f32(&mut rng).to_le_bytes()).collect();
            table_bases.push(next);
            init.push((next, data));
            next = align(next + rows * e);
        }
        // Gathered tensors, contiguous so they can be reduced together.
        let gathers = rng.random_range(1..=3u64);
        let mut index_bases = Vec::new();
        for _ in 0..gathers {
            let idx: Vec<u8> = (0..b * lookups)
                .flat_map(|_| (rng.random_range(0..rows) as u32).to_le_bytes())
                .collect();
            index_bases.push(next);
            init.push((next, idx));
            next = align(next + b * lookups * 4);
        }
        let gathered = next;
        let tensor = b * e;
        let mut instructions = Vec::new();
        for (g, &ib) in index_bases.iter().enumerate() {
            let t = rng.random_range(0..tables);
            instructions.push(TensorInstruction::gather(
                gathered + g as u64 * lookups * tensor,
                table_bases[t],
                rows,
                ib,
                b * lookups,
                e,
            ));
        }
        next = align(gathered + gathers * lookups * tensor);
        let total = gathers * lookups;
        let reductions = rng.random_range(0..=2u32);
        for _ in 0..reductions {
            if total < 2 {
                break;
            }
            let n = rng.random_range(2..=total);
            let first = rng.random_range(0..=total - n);
            let mut instr = TensorInstruction::reduce(next, gathered + first * tensor, n, b, e);
            if rng.random_bool(0.5) {
                instr.opcode = Opcode::Average;
            }
            instructions.push(instr);
            next = align(next + tensor);
        }
        let rank_capacity = align(next).div_ceil(r as u64 * BLOCK_BYTES).max(1) * BLOCK_BYTES + 4096;
        let geometry = PoolGeometry::new(r, rank_capacity).expect("generated geometry is valid");
        Self {
            id,
            geometry,
            instructions,
            init,
        }
    }

    pub fn initial_pool(&self) -> InterleavedPool {
        let mut pool = InterleavedPool::new(self.geometry);
        for (addr, data) in &self.init {
            pool.write(*addr, data).expect("case data fits its pool");
        }
        pool
    }
}

/// How a case's three executions disagreed.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum CaseMismatch {
    #[error("case {id}: node-partitioned image differs from the reference at {addr:#x}")]
    NodeVsReference { id: u64, addr: u64 },
    #[error("case {id}: direct ISA image differs from the reference at {addr:#x}")]
    IsaVsReference { id: u64, addr: u64 },
    #[error("case {id}: executions disagree on success: reference {reference}, node {node}")]
    Outcome { id: u64, reference: String, node: String },
}

/// Run a case through the dense reference, the direct ISA and the
/// partitioned node, and compare the resulting images bit for bit.
///
/// `corrupt` flips a bit of the node's result before comparison; it exists
/// to exercise the failure path.
pub fn check_case(
    case: &ValidationCase,
    dram: &DramTimingParams,
    core: &NmpCoreConfig,
    corrupt: bool,
) -> Result<(), CaseMismatch> {
    let id = case.id;
    let mut pool = case.initial_pool();
    let len = case.geometry.total_capacity() as usize;
    let mut reference = ReferencePool::from_memory(&pool, len).expect("image within capacity");
    let mut flat: SparseMemory = pool.to_flat();

    let ref_outcome = case.instructions.iter().try_for_each(|i| reference.execute(i));
    let isa_outcome = case.instructions.iter().try_for_each(|i| isa::execute(&mut flat, i));
    let node_outcome = node::run_tensornode(dram, core, &case.instructions, &mut pool);
    if ref_outcome.is_ok() != node_outcome.is_ok() || ref_outcome.is_ok() != isa_outcome.is_ok() {
        return Err(CaseMismatch::Outcome {
            id,
            reference: alloc::format!("{ref_outcome:?}"),
            node: alloc::format!("{:?}", node_outcome.map(|_| ())),
        });
    }
    if corrupt {
        if let Some(&(addr, _)) = case.init.first() {
            let mut byte = [0u8];
            pool.read(addr, &mut byte).expect("in range");
            pool.write(addr, &[byte[0] ^ 1]).expect("in range");
        }
    }
    if let Some(addr) = reference.first_difference(&flat).expect("same capacity") {
        return Err(CaseMismatch::IsaVsReference { id, addr });
    }
    if let Some(addr) = reference.first_difference(&pool).expect("same capacity") {
        return Err(CaseMismatch::NodeVsReference { id, addr });
    }
    Ok(())
}

/// Shortest prefix of the case's stream that still fails [`check_case`].
pub fn minimize(case: &ValidationCase, dram: &DramTimingParams, core: &NmpCoreConfig, corrupt: bool) -> ValidationCase {
    for len in 0..=case.instructions.len() {
        let prefix = ValidationCase {
            instructions: case.instructions[..len].to_vec(),
            ..case.clone()
        };
        if check_case(&prefix, dram, core, corrupt).is_err() {
            return prefix;
        }
    }
    case.clone()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small(cfg: &mut BenchmarkConfig) {
        cfg.rows_per_table = 64;
        cfg.embedding_dim = 64;
        cfg.batch_size = 4;
    }

    fn geom(r: u32) -> PoolGeometry {
        PoolGeometry::new(r, 1 << 24).unwrap()
    }

    #[test]
    fn presets_match_benchmark_table() {
        let expect = [("NCF", 4, 2, 4), ("YouTube", 2, 50, 4), ("Fox", 2, 50, 1), ("Facebook", 8, 25, 6)];
        for (name, tables, n, fc) in expect {
            let p = BenchmarkConfig::preset(name).unwrap();
            assert_eq!((p.num_tables, p.max_reduction, p.fc_layers), (tables, n, fc));
            assert_eq!(p.embedding_bytes(), 2048);
            assert_eq!(p.batch_size, 64);
            p.validate().unwrap();
        }
        assert!(BenchmarkConfig::preset("nope").is_none());
    }

    #[test]
    fn two_tables_one_reduce() {
        let mut cfg = BenchmarkConfig::ncf();
        cfg.num_tables = 2;
        cfg.batch_size = 4;
        cfg.rows_per_table = 100;
        let g = geom(4);
        let mut pool = InterleavedPool::new(g);
        let s = build_stream(&cfg, &g, 1, &mut pool).unwrap();
        let ops: Vec<Opcode> = s.instructions.iter().map(|i| i.opcode).collect();
        assert_eq!(ops, [Opcode::Gather, Opcode::Gather, Opcode::Reduce]);
    }

    #[test]
    fn one_table_no_reduction() {
        let mut cfg = BenchmarkConfig::ncf();
        cfg.num_tables = 1;
        cfg.max_reduction = 1;
        small(&mut cfg);
        let g = geom(2);
        let mut pool = InterleavedPool::new(g);
        let s = build_stream(&cfg, &g, 1, &mut pool).unwrap();
        assert_eq!(s.instructions.len(), 1);
        assert_eq!(s.instructions[0].opcode, Opcode::Gather);
        assert_eq!(s.outputs, [(s.instructions[0].dst_base, s.instructions[0].tensor_bytes())]);
    }

    #[test]
    fn youtube_averages_fifty_lookups_per_table() {
        let mut cfg = BenchmarkConfig::youtube();
        small(&mut cfg);
        let g = geom(4);
        let mut pool = InterleavedPool::new(g);
        let s = build_stream(&cfg, &g, 3, &mut pool).unwrap();
        let ops: Vec<Opcode> = s.instructions.iter().map(|i| i.opcode).collect();
        assert_eq!(ops, [Opcode::Gather, Opcode::Gather, Opcode::Average, Opcode::Average]);
        assert_eq!(s.instructions[0].batch_size, 4 * 50);
        assert_eq!(s.instructions[2].num_inputs, 50);
        assert_eq!(s.gathered_bytes(), cfg.gathered_bytes());
    }

    #[test]
    fn footprint_examples() {
        assert_eq!(footprint_bytes(5_000_000, 512, 2).unwrap(), 20_480_000_000);
        assert!(footprint_bytes(10, 0, 1).is_err());
        assert_eq!(footprint_bytes(7, 256, 3).unwrap() * 2, footprint_bytes(7, 512, 3).unwrap());
    }

    #[test]
    fn streams_are_reproducible() {
        for dist in [IndexDistribution::Uniform, IndexDistribution::Zipf(0.99)] {
            let mut cfg = BenchmarkConfig::facebook();
            small(&mut cfg);
            cfg.index_distribution = dist;
            let g = geom(4);
            let (mut p1, mut p2) = (InterleavedPool::new(g), InterleavedPool::new(g));
            let a = build_stream(&cfg, &g, 42, &mut p1).unwrap();
            let b = build_stream(&cfg, &g, 42, &mut p2).unwrap();
            assert_eq!(a, b);
            assert_eq!(p1.to_flat(), p2.to_flat());
            let c = build_stream(&cfg, &g, 43, &mut InterleavedPool::new(g)).unwrap();
            assert_ne!(a.index_buffers, c.index_buffers);
        }
    }

    #[test]
    fn embedding_must_cover_whole_stripes() {
        let mut cfg = BenchmarkConfig::ncf();
        small(&mut cfg);
        let g = geom(8);
        let err = build_stream(&cfg, &g, 0, &mut InterleavedPool::new(g)).unwrap_err();
        assert!(matches!(err, WorkloadError::Config(_)));
    }

    #[test]
    fn stream_matches_reference_through_node() {
        for preset in BenchmarkConfig::presets() {
            let mut cfg = preset;
            small(&mut cfg);
            let g = PoolGeometry::new(4, 1 << 20).unwrap();
            let mut pool = InterleavedPool::new(g);
            let s = build_stream(&cfg, &g, 9, &mut pool).unwrap();
            let mut reference = ReferencePool::from_memory(&pool, s.end as usize).unwrap();
            for i in &s.instructions {
                reference.execute(i).unwrap();
            }
            let report =
                node::run_tensornode(&DramTimingParams::default(), &NmpCoreConfig::default(), &s.instructions, &mut pool)
                    .unwrap();
            assert_eq!(reference.first_difference(&pool).unwrap(), None, "{}", cfg.name);
            // Every gathered byte is read once and written once.
            let gather_bytes = report.bytes_where(|op| op == Opcode::Gather);
            let index_bytes: u64 = s.index_buffers.iter().map(|(_, v)| (v.len() as u64 * 4).div_ceil(64) * 64).sum();
            assert_eq!(gather_bytes, 2 * cfg.gathered_bytes() + index_bytes);
        }
    }

    #[test]
    fn reference_average_of_known_values() {
        let mut r = ReferencePool::new(1024);
        let vals: Vec<u8> = [1.0f32, 2.0, 4.0].iter().flat_map(|v| v.to_le_bytes()).collect();
        // Three 4-byte "tensors" laid out back to back.
        r.bytes[..12].copy_from_slice(&vals);
        r.reduce(64, 0, 3, 4, true).unwrap();
        assert_eq!(r.f32_at(64), 7.0 / 3.0);
        r.reduce(128, 0, 3, 4, false).unwrap();
        assert_eq!(r.f32_at(128), 7.0);
    }

    #[test]
    fn generated_cases_pass_and_corruption_is_caught() {
        let dram = DramTimingParams::default();
        let core = NmpCoreConfig::default();
        for id in 0..40 {
            let case = ValidationCase::generate(5, id);
            check_case(&case, &dram, &core, false).unwrap();
        }
        let case = ValidationCase::generate(5, 0);
        assert!(check_case(&case, &dram, &core, true).is_err());
        assert!(minimize(&case, &dram, &core, true).instructions.is_empty());
    }
}
