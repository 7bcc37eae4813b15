//! The tensor ISA: GATHER, REDUCE and AVERAGE.
//!
//! Instructions are broadcast to every NMP core in the pool. Each one names
//! pool-physical operand addresses plus the tensor geometry; the functional
//! semantics here are the reference every partitioned execution must match
//! bit for bit.
//!
//! # Wire format
//!
//! Every instruction has a 128-bit primary word:
//!
//! ```text
//! [127:120] opcode            [119:72] dst_base (48 b)   [71:24] src_base (48 b)
//! [23:16]   num_inputs (8 b)  [15:8]   log2(embedding_bytes / 64)
//! [7:0]     ceil(log2(batch_size))
//! ```
//!
//! GATHER carries a second word:
//!
//! ```text
//! [127:80] index_base (48 b)  [79:64] reserved   [63:48] batch_size (16 b)
//! [47:16]  table_rows (32 b)  [15:0]  reserved
//! ```
//!
//! REDUCE and AVERAGE only have the rounded batch field, so their batch size
//! must be a power of two to be encodable.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;
use core::fmt::Write as _;
use core::ops::Range;

use crate::pool::{AccessFault, PoolMemory};
use crate::{BLOCK_BYTES, BLOCK_ELEMS};

const ADDR_BITS: u32 = 48;
const ADDR_MASK: u64 = (1 << ADDR_BITS) - 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, thiserror::Error)]
pub enum IsaError {
    #[error("unknown opcode {0:#04x}")]
    InvalidOpcode(u8),
    #[error("field `{field}` value {value} does not fit its encoding")]
    FieldOverflow { field: &'static str, value: u64 },
    #[error("embedding size {0} bytes is not a multiple of 64")]
    MisalignedSize(u64),
    #[error("index {index} at batch position {position} is out of range for a table of {rows} rows")]
    IndexOutOfRange { position: u64, index: u32, rows: u64 },
    #[error("address fault: {0}")]
    AddressFault(#[from] AccessFault),
    #[error("destination range overlaps an operand range")]
    Overlap,
    #[error("operand address {0:#x} is not 64-byte aligned")]
    Misaligned(u64),
    #[error("expected a {expected:?} instruction, got {found:?}")]
    WrongOpcode { expected: Opcode, found: Opcode },
    #[error("encoded instruction is truncated")]
    Truncated,
    #[error("encoded fields disagree: {0}")]
    Inconsistent(&'static str),
    #[error("line {line}: not a 32-digit hex word")]
    BadHex { line: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
#[repr(u8)]
pub enum Opcode {
    Gather = 0x01,
    Reduce = 0x02,
    Average = 0x03,
}

impl Opcode {
    pub fn from_code(code: u8) -> Result<Self, IsaError> {
        match code {
            0x01 => Ok(Opcode::Gather),
            0x02 => Ok(Opcode::Reduce),
            0x03 => Ok(Opcode::Average),
            other => Err(IsaError::InvalidOpcode(other)),
        }
    }

    pub fn mnemonic(self) -> &'static str {
        match self {
            Opcode::Gather => "GATHER",
            Opcode::Reduce => "REDUCE",
            Opcode::Average => "AVERAGE",
        }
    }

    pub fn is_reduction(self) -> bool {
        !matches!(self, Opcode::Gather)
    }
}

/// Scalar element type. Only 32-bit IEEE floats exist.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub enum ElemType {
    #[default]
    F32,
}

/// One tensor instruction.
///
/// For REDUCE/AVERAGE the `num_inputs` source tensors, each
/// `batch_size * embedding_bytes` long, are laid out back to back from
/// `src_base`; `index_base` and `table_rows` are zero.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct TensorInstruction {
    pub opcode: Opcode,
    pub dst_base: u64,
    pub src_base: u64,
    pub index_base: u64,
    pub table_rows: u64,
    pub batch_size: u64,
    pub embedding_bytes: u64,
    pub num_inputs: u64,
    pub elem_type: ElemType,
}

impl TensorInstruction {
    pub fn gather(dst_base: u64, table_base: u64, table_rows: u64, index_base: u64, batch_size: u64, embedding_bytes: u64) -> Self {
        Self {
            opcode: Opcode::Gather,
            dst_base,
            src_base: table_base,
            index_base,
            table_rows,
            batch_size,
            embedding_bytes,
            num_inputs: 1,
            elem_type: ElemType::F32,
        }
    }

    pub fn reduce(dst_base: u64, src_base: u64, num_inputs: u64, batch_size: u64, embedding_bytes: u64) -> Self {
        Self {
            opcode: Opcode::Reduce,
            dst_base,
            src_base,
            index_base: 0,
            table_rows: 0,
            batch_size,
            embedding_bytes,
            num_inputs,
            elem_type: ElemType::F32,
        }
    }

    pub fn average(dst_base: u64, src_base: u64, num_inputs: u64, batch_size: u64, embedding_bytes: u64) -> Self {
        Self {
            opcode: Opcode::Average,
            ..Self::reduce(dst_base, src_base, num_inputs, batch_size, embedding_bytes)
        }
    }

    /// Bytes of one tensor (the destination, or one REDUCE/AVERAGE input).
    pub fn tensor_bytes(&self) -> u64 {
        self.batch_size * self.embedding_bytes
    }

    pub fn blocks_per_embedding(&self) -> u64 {
        self.embedding_bytes / BLOCK_BYTES
    }

    pub fn index_bytes(&self) -> u64 {
        match self.opcode {
            Opcode::Gather => self.batch_size * 4,
            _ => 0,
        }
    }

    /// Field-level invariants, independent of any pool.
    pub fn validate(&self) -> Result<(), IsaError> {
        if self.embedding_bytes == 0 || !self.embedding_bytes.is_multiple_of(BLOCK_BYTES) {
            return Err(IsaError::MisalignedSize(self.embedding_bytes));
        }
        if self.batch_size == 0 || self.batch_size > u16::MAX as u64 {
            return Err(overflow("batch_size", self.batch_size));
        }
        for (field, addr) in [("dst_base", self.dst_base), ("src_base", self.src_base), ("index_base", self.index_base)] {
            if addr > ADDR_MASK {
                return Err(overflow(field, addr));
            }
        }
        for addr in [self.dst_base, self.src_base] {
            if addr % BLOCK_BYTES != 0 {
                return Err(IsaError::Misaligned(addr));
            }
        }
        match self.opcode {
            Opcode::Gather => {
                if self.num_inputs != 1 {
                    return Err(overflow("num_inputs", self.num_inputs));
                }
                if self.table_rows == 0 || self.table_rows > u32::MAX as u64 {
                    return Err(overflow("table_rows", self.table_rows));
                }
                if !self.index_base.is_multiple_of(4) {
                    return Err(IsaError::Misaligned(self.index_base));
                }
            }
            Opcode::Reduce | Opcode::Average => {
                if self.num_inputs < 2 || self.num_inputs > u8::MAX as u64 {
                    return Err(overflow("num_inputs", self.num_inputs));
                }
                if self.index_base != 0 {
                    return Err(overflow("index_base", self.index_base));
                }
                if self.table_rows != 0 {
                    return Err(overflow("table_rows", self.table_rows));
                }
            }
        }
        Ok(())
    }

    /// Byte ranges the instruction may read.
    pub fn read_ranges(&self) -> Vec<Range<u64>> {
        match self.opcode {
            Opcode::Gather => vec![
                self.src_base..self.src_base + self.table_rows * self.embedding_bytes,
                self.index_base..self.index_base + self.index_bytes(),
            ],
            _ => vec![self.src_base..self.src_base + self.num_inputs * self.tensor_bytes()],
        }
    }

    /// Byte range the instruction writes.
    pub fn write_range(&self) -> Range<u64> {
        self.dst_base..self.dst_base + self.tensor_bytes()
    }

    /// Field invariants plus capacity and overlap checks against a pool.
    pub fn validate_for(&self, capacity: u64) -> Result<(), IsaError> {
        self.validate()?;
        let dst = self.write_range();
        let ranges = self.read_ranges();
        for r in ranges.iter().chain(core::iter::once(&dst)) {
            if r.end > capacity {
                return Err(IsaError::AddressFault(AccessFault {
                    addr: r.start,
                    len: r.end - r.start,
                    capacity,
                }));
            }
        }
        if ranges.iter().any(|r| r.start < dst.end && dst.start < r.end) {
            return Err(IsaError::Overlap);
        }
        Ok(())
    }
}

fn overflow(field: &'static str, value: u64) -> IsaError {
    IsaError::FieldOverflow { field, value }
}

fn ceil_log2(x: u64) -> u32 {
    if x <= 1 {
        0
    } else {
        64 - (x - 1).leading_zeros()
    }
}

/// One or two 128-bit instruction words.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct EncodedInstruction {
    words: [u128; 2],
    len: usize,
}

impl EncodedInstruction {
    pub fn words(&self) -> &[u128] {
        &self.words[..self.len]
    }

    /// Debug dump: one 32-digit lowercase hex word per line.
    pub fn hex_lines(&self) -> String {
        let mut out = String::new();
        for w in self.words() {
            let _ = writeln!(out, "{w:032x}");
        }
        out
    }
}

pub fn encode(instr: &TensorInstruction) -> Result<EncodedInstruction, IsaError> {
    instr.validate()?;
    let blocks = instr.blocks_per_embedding();
    if !blocks.is_power_of_two() {
        return Err(overflow("embedding_bytes", instr.embedding_bytes));
    }
    if instr.opcode.is_reduction() && !instr.batch_size.is_power_of_two() {
        return Err(overflow("batch_size", instr.batch_size));
    }
    let word0 = (instr.opcode as u128) << 120
        | (instr.dst_base as u128) << 72
        | (instr.src_base as u128) << 24
        | (instr.num_inputs as u128) << 16
        | (blocks.trailing_zeros() as u128) << 8
        | ceil_log2(instr.batch_size) as u128;
    if instr.opcode == Opcode::Gather {
        let word1 = (instr.index_base as u128) << 80 | (instr.batch_size as u128) << 48 | (instr.table_rows as u128) << 16;
        Ok(EncodedInstruction {
            words: [word0, word1],
            len: 2,
        })
    } else {
        Ok(EncodedInstruction {
            words: [word0, 0],
            len: 1,
        })
    }
}

/// Decode one instruction from the front of `words`; returns it together
/// with the number of words consumed.
pub fn decode(words: &[u128]) -> Result<(TensorInstruction, usize), IsaError> {
    let &word0 = words.first().ok_or(IsaError::Truncated)?;
    let field = |w: u128, lo: u32, bits: u32| ((w >> lo) & ((1u128 << bits) - 1)) as u64;
    let opcode = Opcode::from_code(field(word0, 120, 8) as u8)?;
    let log_blocks = field(word0, 8, 8);
    if log_blocks >= 58 {
        return Err(overflow("embedding_bytes", log_blocks));
    }
    let log_batch = field(word0, 0, 8) as u32;
    let mut instr = TensorInstruction {
        opcode,
        dst_base: field(word0, 72, 48),
        src_base: field(word0, 24, 48),
        index_base: 0,
        table_rows: 0,
        batch_size: 0,
        embedding_bytes: BLOCK_BYTES << log_blocks,
        num_inputs: field(word0, 16, 8),
        elem_type: ElemType::F32,
    };
    let used = if opcode == Opcode::Gather {
        let &word1 = words.get(1).ok_or(IsaError::Truncated)?;
        if field(word1, 64, 16) != 0 || field(word1, 0, 16) != 0 {
            return Err(IsaError::Inconsistent("reserved bits set"));
        }
        instr.index_base = field(word1, 80, 48);
        instr.batch_size = field(word1, 48, 16);
        instr.table_rows = field(word1, 16, 32);
        if ceil_log2(instr.batch_size) != log_batch {
            return Err(IsaError::Inconsistent("rounded batch field disagrees with exact batch"));
        }
        2
    } else {
        if log_batch > 15 {
            return Err(overflow("batch_size", log_batch as u64));
        }
        instr.batch_size = 1 << log_batch;
        1
    };
    instr.validate()?;
    Ok((instr, used))
}

/// Encode a stream of instructions as the hex dump format.
pub fn hex_dump(instrs: &[TensorInstruction]) -> Result<String, IsaError> {
    let mut out = String::new();
    for instr in instrs {
        out.push_str(&encode(instr)?.hex_lines());
    }
    Ok(out)
}

/// Parse a hex dump back into instructions. Blank lines are ignored.
pub fn parse_hex_dump(text: &str) -> Result<Vec<TensorInstruction>, IsaError> {
    let mut words = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        if line.len() != 32 {
            return Err(IsaError::BadHex { line: i + 1 });
        }
        words.push(u128::from_str_radix(line, 16).map_err(|_| IsaError::BadHex { line: i + 1 })?);
    }
    let mut out = Vec::new();
    let mut at = 0;
    while at < words.len() {
        let (instr, used) = decode(&words[at..])?;
        out.push(instr);
        at += used;
    }
    Ok(out)
}

pub(crate) type Block = [f32; BLOCK_ELEMS];

pub(crate) fn load_block(pool: &impl PoolMemory, addr: u64) -> Result<Block, AccessFault> {
    let mut raw = [0u8; BLOCK_BYTES as usize];
    pool.read(addr, &mut raw)?;
    let mut out = [0f32; BLOCK_ELEMS];
    for (v, b) in out.iter_mut().zip(raw.chunks_exact(4)) {
        *v = f32::from_le_bytes([b[0], b[1], b[2], b[3]]);
    }
    Ok(out)
}

pub(crate) fn store_block(pool: &mut impl PoolMemory, addr: u64, block: &Block) -> Result<(), AccessFault> {
    let mut raw = [0u8; BLOCK_BYTES as usize];
    for (v, b) in block.iter().zip(raw.chunks_exact_mut(4)) {
        b.copy_from_slice(&v.to_le_bytes());
    }
    pool.write(addr, &raw)
}

/// One output block of a REDUCE/AVERAGE: inputs summed in ascending order
/// starting from input 0, then (AVERAGE) divided by N once.
pub(crate) fn reduce_block(
    pool: &impl PoolMemory,
    first_input: u64,
    input_stride: u64,
    num_inputs: u64,
    average: bool,
) -> Result<Block, AccessFault> {
    let mut acc = load_block(pool, first_input)?;
    for i in 1..num_inputs {
        let x = load_block(pool, first_input + i * input_stride)?;
        for (a, v) in acc.iter_mut().zip(x) {
            *a += v;
        }
    }
    if average {
        let n = num_inputs as f32;
        for a in acc.iter_mut() {
            *a /= n;
        }
    }
    Ok(acc)
}

fn expect_opcode(instr: &TensorInstruction, expected: Opcode) -> Result<(), IsaError> {
    if instr.opcode != expected {
        return Err(IsaError::WrongOpcode {
            expected,
            found: instr.opcode,
        });
    }
    Ok(())
}

/// Read the GATHER index buffer and bounds-check every index.
pub fn read_indices(pool: &impl PoolMemory, instr: &TensorInstruction) -> Result<Vec<u32>, IsaError> {
    let mut raw = vec![0u8; instr.index_bytes() as usize];
    pool.read(instr.index_base, &mut raw)?;
    let indices: Vec<u32> = raw
        .chunks_exact(4)
        .map(|b| u32::from_le_bytes([b[0], b[1], b[2], b[3]]))
        .collect();
    if let Some((position, &index)) = indices.iter().enumerate().find(|(_, &ix)| ix as u64 >= instr.table_rows) {
        return Err(IsaError::IndexOutOfRange {
            position: position as u64,
            index,
            rows: instr.table_rows,
        });
    }
    Ok(indices)
}

pub fn exec_gather(pool: &mut impl PoolMemory, instr: &TensorInstruction) -> Result<(), IsaError> {
    expect_opcode(instr, Opcode::Gather)?;
    instr.validate_for(pool.capacity())?;
    let indices = read_indices(pool, instr)?;
    let mut row = vec![0u8; instr.embedding_bytes as usize];
    for (b, &ix) in indices.iter().enumerate() {
        pool.read(instr.src_base + ix as u64 * instr.embedding_bytes, &mut row)?;
        pool.write(instr.dst_base + b as u64 * instr.embedding_bytes, &row)?;
    }
    Ok(())
}

fn exec_reduction(pool: &mut impl PoolMemory, instr: &TensorInstruction, average: bool) -> Result<(), IsaError> {
    instr.validate_for(pool.capacity())?;
    let stride = instr.tensor_bytes();
    for off in (0..stride).step_by(BLOCK_BYTES as usize) {
        let block = reduce_block(pool, instr.src_base + off, stride, instr.num_inputs, average)?;
        store_block(pool, instr.dst_base + off, &block)?;
    }
    Ok(())
}

pub fn exec_reduce(pool: &mut impl PoolMemory, instr: &TensorInstruction) -> Result<(), IsaError> {
    expect_opcode(instr, Opcode::Reduce)?;
    exec_reduction(pool, instr, false)
}

pub fn exec_average(pool: &mut impl PoolMemory, instr: &TensorInstruction) -> Result<(), IsaError> {
    expect_opcode(instr, Opcode::Average)?;
    exec_reduction(pool, instr, true)
}

/// Dispatch on the opcode.
pub fn execute(pool: &mut impl PoolMemory, instr: &TensorInstruction) -> Result<(), IsaError> {
    match instr.opcode {
        Opcode::Gather => exec_gather(pool, instr),
        Opcode::Reduce => exec_reduce(pool, instr),
        Opcode::Average => exec_average(pool, instr),
    }
}

/// Human-readable one-line form, used in fault reports.
pub fn disassemble(instr: &TensorInstruction) -> String {
    match instr.opcode {
        Opcode::Gather => format!(
            "GATHER dst={:#x} table={:#x} rows={} idx={:#x} B={} E={}",
            instr.dst_base, instr.src_base, instr.table_rows, instr.index_base, instr.batch_size, instr.embedding_bytes
        ),
        op => format!(
            "{} dst={:#x} src={:#x} N={} B={} E={}",
            op.mnemonic(),
            instr.dst_base,
            instr.src_base,
            instr.num_inputs,
            instr.batch_size,
            instr.embedding_bytes
        ),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pool::SparseMemory;

    fn write_f32s(pool: &mut SparseMemory, addr: u64, vals: &[f32]) {
        let bytes: Vec<u8> = vals.iter().flat_map(|v| v.to_le_bytes()).collect();
        pool.write(addr, &bytes).unwrap();
    }

    fn read_f32s(pool: &SparseMemory, addr: u64, n: usize) -> Vec<f32> {
        let mut raw = vec![0u8; n * 4];
        pool.read(addr, &mut raw).unwrap();
        raw.chunks_exact(4).map(|b| f32::from_le_bytes(b.try_into().unwrap())).collect()
    }

    #[test]
    fn gather_round_trips() {
        let g = TensorInstruction::gather(0x10000, 0, 100, 0x8000, 4, 1024);
        let enc = encode(&g).unwrap();
        assert_eq!(enc.words().len(), 2);
        assert_eq!(decode(enc.words()).unwrap(), (g, 2));
    }

    #[test]
    fn youtube_average_round_trips() {
        let a = TensorInstruction::average(1 << 30, 1 << 20, 50, 64, 2048);
        let enc = encode(&a).unwrap();
        assert_eq!(enc.words().len(), 1);
        let (back, used) = decode(enc.words()).unwrap();
        assert_eq!(used, 1);
        assert_eq!(back, a);
        assert_eq!((back.num_inputs, back.embedding_bytes, back.batch_size), (50, 2048, 64));
    }

    #[test]
    fn single_input_reduce_rejected() {
        let r = TensorInstruction::reduce(4096, 0, 1, 4, 64);
        assert_eq!(
            encode(&r),
            Err(IsaError::FieldOverflow {
                field: "num_inputs",
                value: 1
            })
        );
    }

    #[test]
    fn encoding_errors() {
        let bad_size = TensorInstruction::reduce(4096, 0, 2, 4, 100);
        assert_eq!(encode(&bad_size), Err(IsaError::MisalignedSize(100)));
        let odd_blocks = TensorInstruction::reduce(4096, 0, 2, 4, 192);
        assert!(matches!(encode(&odd_blocks), Err(IsaError::FieldOverflow { field: "embedding_bytes", .. })));
        let odd_batch = TensorInstruction::reduce(4096, 0, 2, 3, 64);
        assert!(matches!(encode(&odd_batch), Err(IsaError::FieldOverflow { field: "batch_size", .. })));
        let wide_addr = TensorInstruction::reduce(1 << 48, 0, 2, 4, 64);
        assert!(matches!(encode(&wide_addr), Err(IsaError::FieldOverflow { field: "dst_base", .. })));
        let many_inputs = TensorInstruction::reduce(1 << 40, 0, 256, 4, 64);
        assert!(matches!(encode(&many_inputs), Err(IsaError::FieldOverflow { field: "num_inputs", .. })));
        // Gather batch is exact and need not be a power of two.
        assert!(encode(&TensorInstruction::gather(1 << 20, 0, 10, 1 << 19, 3, 64)).is_ok());
    }

    #[test]
    fn decode_rejects_unknown_opcode_and_truncation() {
        assert_eq!(decode(&[0xffu128 << 120]), Err(IsaError::InvalidOpcode(0xff)));
        assert_eq!(decode(&[0u128]), Err(IsaError::InvalidOpcode(0)));
        let g = encode(&TensorInstruction::gather(1 << 20, 0, 10, 1 << 19, 4, 64)).unwrap();
        assert_eq!(decode(&g.words()[..1]), Err(IsaError::Truncated));
        assert_eq!(decode(&[]), Err(IsaError::Truncated));
    }

    #[test]
    fn hex_dump_lines() {
        let g = TensorInstruction::gather(0x1000, 0x40, 7, 0x2000, 4, 64);
        let r = TensorInstruction::reduce(0x3000, 0x1000, 2, 2, 64);
        let text = hex_dump(&[g, r]).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines.len(), 3);
        assert!(lines.iter().all(|l| l.len() == 32));
        assert_eq!(lines[0], "01000000001000000000000040010002");
        assert_eq!(parse_hex_dump(&text).unwrap(), vec![g, r]);
        assert_eq!(parse_hex_dump("xyz\n"), Err(IsaError::BadHex { line: 1 }));
    }

    #[test]
    fn gather_copies_rows() {
        let mut pool = SparseMemory::new(1 << 16);
        let e: Vec<Vec<f32>> = (0..3).map(|r| (0..16).map(|i| (r * 100 + i) as f32).collect()).collect();
        for (r, row) in e.iter().enumerate() {
            write_f32s(&mut pool, r as u64 * 64, row);
        }
        pool.write(0x1000, &[1, 0, 0, 0, 1, 0, 0, 0]).unwrap();
        let g = TensorInstruction::gather(0x2000, 0, 3, 0x1000, 2, 64);
        exec_gather(&mut pool, &g).unwrap();
        assert_eq!(read_f32s(&pool, 0x2000, 16), e[1]);
        assert_eq!(read_f32s(&pool, 0x2040, 16), e[1]);
    }

    #[test]
    fn gather_rejects_bad_index_without_writing() {
        let mut pool = SparseMemory::new(1 << 16);
        pool.write(0x1000, &[1, 0, 0, 0, 3, 0, 0, 0]).unwrap();
        let before = pool.clone();
        let g = TensorInstruction::gather(0x2000, 0, 3, 0x1000, 2, 64);
        assert_eq!(
            exec_gather(&mut pool, &g),
            Err(IsaError::IndexOutOfRange {
                position: 1,
                index: 3,
                rows: 3
            })
        );
        assert_eq!(pool, before);
    }

    #[test]
    fn out_of_capacity_and_overlap() {
        let mut pool = SparseMemory::new(1 << 12);
        let r = TensorInstruction::reduce(1 << 12, 0, 2, 1, 64);
        assert!(matches!(exec_reduce(&mut pool, &r), Err(IsaError::AddressFault(_))));
        let in_place = TensorInstruction::reduce(64, 0, 2, 1, 64);
        assert_eq!(exec_reduce(&mut pool, &in_place), Err(IsaError::Overlap));
        let wrong = TensorInstruction::reduce(512, 0, 2, 1, 64);
        assert!(matches!(exec_average(&mut pool, &wrong), Err(IsaError::WrongOpcode { .. })));
    }

    #[test]
    fn reduce_identities() {
        let x: Vec<f32> = (0..32).map(|i| (i as f32 - 7.25) * 1.5e-3).collect();
        let neg: Vec<f32> = x.iter().map(|v| -v).collect();
        let mut pool = SparseMemory::new(1 << 16);
        write_f32s(&mut pool, 0, &x);
        // second input (bytes 128..256) left as zeros
        let r = TensorInstruction::reduce(0x1000, 0, 2, 1, 128);
        exec_reduce(&mut pool, &r).unwrap();
        assert_eq!(read_f32s(&pool, 0x1000, 32), x);

        write_f32s(&mut pool, 128, &neg);
        exec_reduce(&mut pool, &r).unwrap();
        assert!(read_f32s(&pool, 0x1000, 32).iter().all(|&v| v == 0.0));
    }

    #[test]
    fn average_identities() {
        let x: Vec<f32> = (0..16).map(|i| i as f32 * 0.37 - 2.0).collect();
        let mut pool = SparseMemory::new(1 << 16);
        write_f32s(&mut pool, 0, &x);
        write_f32s(&mut pool, 64, &x);
        let a = TensorInstruction::average(0x1000, 0, 2, 1, 64);
        exec_average(&mut pool, &a).unwrap();
        let out = read_f32s(&pool, 0x1000, 16);
        assert!(out.iter().zip(&x).all(|(a, b)| a.to_bits() == b.to_bits()));

        let c = 0.75f32;
        for i in 0..50u64 {
            write_f32s(&mut pool, 0x2000 + i * 128, &[c; 32]);
        }
        let a50 = TensorInstruction::average(0x8000, 0x2000, 50, 2, 64);
        exec_average(&mut pool, &a50).unwrap();
        assert!(read_f32s(&pool, 0x8000, 32).iter().all(|&v| v == c));
    }
}
