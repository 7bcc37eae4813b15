//! Command-level DDR4 timing.
//!
//! Requests are 64-byte bursts against rank-local addresses. The controller
//! keeps every bank's row open after use (open page), issues column commands
//! in request order, and lets activates run ahead of the data bus so that row
//! openings on other banks overlap with transfers. Writes are parked in a
//! controller write queue and drained in one batch when it fills, when a read
//! targets a queued address, or at the end of the stream; every change of
//! data-bus direction costs a fixed turnaround.
//!
//! Inside a rank the block index is split as
//! `[row | bank-in-group | column | bank group]` so that consecutive blocks
//! rotate through the bank groups (tCCD_S apart) and stay in open rows.

use alloc::collections::BTreeSet;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;
use core::fmt::Write as _;

use crate::BLOCK_BYTES;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum DramError {
    #[error("invalid timing parameters: {0}")]
    InvalidParams(&'static str),
    #[error("request address {0:#x} is not 64-byte aligned")]
    Misaligned(u64),
    #[error("trace line {line}: {reason}")]
    Parse { line: usize, reason: String },
}

/// DDR4 timing constants. Cycle counts are memory-clock cycles
/// (half the data rate).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct DramTimingParams {
    pub data_rate_mts: u32,
    pub cl: u32,
    pub cwl: u32,
    pub trcd: u32,
    pub trp: u32,
    pub tras: u32,
    pub trc: u32,
    /// Data-bus occupancy of one 64-byte burst (BL8 = 4 clocks).
    pub tbl: u32,
    pub tccd_l: u32,
    pub tccd_s: u32,
    pub trrd_s: u32,
    pub trrd_l: u32,
    pub tfaw: u32,
    pub twr: u32,
    pub trtp: u32,
    /// Penalty for reversing the data-bus direction.
    pub turnaround: u32,
    pub bank_groups: u32,
    pub banks_per_group: u32,
    pub row_bytes: u32,
    /// Controller write-queue depth in requests; 0 issues writes in order.
    pub write_queue_entries: u32,
    pub refresh: bool,
    pub trefi: u32,
    pub trfc: u32,
}

impl Default for DramTimingParams {
    /// DDR4-3200AA (PC4-25600).
    fn default() -> Self {
        Self {
            data_rate_mts: 3200,
            cl: 22,
            cwl: 16,
            trcd: 22,
            trp: 22,
            tras: 52,
            trc: 74,
            tbl: 4,
            tccd_l: 8,
            tccd_s: 4,
            trrd_s: 4,
            trrd_l: 6,
            tfaw: 26,
            twr: 24,
            trtp: 12,
            turnaround: 8,
            bank_groups: 4,
            banks_per_group: 4,
            row_bytes: 8192,
            write_queue_entries: 64,
            refresh: false,
            trefi: 12_480,
            trfc: 256,
        }
    }
}

impl DramTimingParams {
    pub fn clock_mhz(&self) -> f64 {
        self.data_rate_mts as f64 / 2.0
    }

    pub fn tck_ps(&self) -> f64 {
        1.0e6 / self.clock_mhz()
    }

    pub fn tck_ns(&self) -> f64 {
        1.0e3 / self.clock_mhz()
    }

    /// Data rate times the 8-byte bus width.
    pub fn peak_bandwidth_gbs(&self) -> f64 {
        self.data_rate_mts as f64 * 8.0 / 1000.0
    }

    pub fn num_banks(&self) -> u32 {
        self.bank_groups * self.banks_per_group
    }

    pub fn cycles_to_ns(&self, cycles: u64) -> f64 {
        cycles as f64 * self.tck_ns()
    }

    pub fn validate(&self) -> Result<(), DramError> {
        let bad = DramError::InvalidParams;
        if self.data_rate_mts == 0 {
            return Err(bad("data rate must be positive"));
        }
        if self.trc != self.tras + self.trp {
            return Err(bad("tRC must equal tRAS + tRP"));
        }
        if self.tbl == 0 {
            return Err(bad("tBL must be positive"));
        }
        if self.tccd_l < self.tccd_s {
            return Err(bad("tCCD_L must be at least tCCD_S"));
        }
        if self.bank_groups == 0 || self.banks_per_group == 0 {
            return Err(bad("bank counts must be positive"));
        }
        if self.row_bytes == 0 || !(self.row_bytes as u64).is_multiple_of(BLOCK_BYTES) {
            return Err(bad("row size must be a positive multiple of 64"));
        }
        if self.refresh && (self.trefi == 0 || self.trfc >= self.trefi) {
            return Err(bad("refresh needs 0 < tRFC < tREFI"));
        }
        Ok(())
    }

    /// (bank group, bank, row) of a rank-local address.
    ///
    /// The bank-in-group index is XOR-hashed with the folded row number so that
    /// tensors laid out a power-of-two number of rows apart do not land on
    /// the same bank.
    pub fn locate(&self, local_addr: u64) -> (u32, u32, u64) {
        let block = local_addr / BLOCK_BYTES;
        let groups = self.bank_groups as u64;
        let cols = self.row_bytes as u64 / BLOCK_BYTES;
        let per_group = self.banks_per_group as u64;
        let row = block / (groups * cols * per_group);
        let mut bank = (block / (groups * cols)) % per_group;
        if per_group.is_power_of_two() && per_group > 1 {
            let width = per_group.trailing_zeros();
            let mut r = row;
            while r != 0 {
                bank ^= r & (per_group - 1);
                r >>= width;
            }
        }
        ((block % groups) as u32, bank as u32, row)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ReqKind {
    Read,
    Write,
}

/// One 64-byte access against a rank-local address.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct BlockRequest {
    pub kind: ReqKind,
    pub rank_local_addr: u64,
    pub issue_order: u64,
}

impl BlockRequest {
    pub fn new(kind: ReqKind, rank_local_addr: u64, issue_order: u64) -> Result<Self, DramError> {
        if !rank_local_addr.is_multiple_of(BLOCK_BYTES) {
            return Err(DramError::Misaligned(rank_local_addr));
        }
        Ok(Self {
            kind,
            rank_local_addr,
            issue_order,
        })
    }

    pub fn read(rank_local_addr: u64, issue_order: u64) -> Result<Self, DramError> {
        Self::new(ReqKind::Read, rank_local_addr, issue_order)
    }

    pub fn write(rank_local_addr: u64, issue_order: u64) -> Result<Self, DramError> {
        Self::new(ReqKind::Write, rank_local_addr, issue_order)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct RankSimResult {
    /// Cycle at which the last data burst completes.
    pub total_cycles: u64,
    pub busy_data_cycles: u64,
    pub bytes_moved: u64,
    pub achieved_bandwidth_gbs: f64,
    pub row_hit_rate: f64,
    pub requests: u64,
    pub row_hits: u64,
}

/// When one request's column command went out and its data finished.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct RequestTiming {
    pub column_cycle: u64,
    pub data_end_cycle: u64,
    pub row_hit: bool,
}

#[derive(Debug, Clone, Copy, Default)]
struct Bank {
    open_row: Option<u64>,
    act_ready: u64,
    col_ready: u64,
    pre_ready: u64,
}

#[derive(Debug, Clone)]
struct RankState {
    banks: Vec<Bank>,
    last_act: Option<(u64, u32)>,
    recent_acts: [u64; 4],
    act_count: u64,
}

impl RankState {
    fn new(p: &DramTimingParams) -> Self {
        Self {
            banks: vec![Bank::default(); p.num_banks() as usize],
            last_act: None,
            recent_acts: [0; 4],
            act_count: 0,
        }
    }
}

/// One data bus shared by one or more ranks.
struct Channel<'p> {
    p: &'p DramTimingParams,
    ranks: Vec<RankState>,
    bus_free: u64,
    last_dir: Option<ReqKind>,
    last_col: Option<(u64, usize, u32)>,
    next_refresh: u64,
    end: u64,
    hits: u64,
    count: u64,
}

impl<'p> Channel<'p> {
    fn new(p: &'p DramTimingParams, ranks: usize) -> Self {
        Self {
            p,
            ranks: (0..ranks).map(|_| RankState::new(p)).collect(),
            bus_free: 0,
            last_dir: None,
            last_col: None,
            next_refresh: p.trefi as u64,
            end: 0,
            hits: 0,
            count: 0,
        }
    }

    fn refresh_until(&mut self, now: u64) {
        let p = self.p;
        while p.refresh && self.next_refresh <= now {
            let deadline = self.next_refresh;
            for rank in &mut self.ranks {
                let any_open = rank.banks.iter().any(|b| b.open_row.is_some());
                let start = rank
                    .banks
                    .iter()
                    .filter(|b| b.open_row.is_some())
                    .map(|b| b.pre_ready)
                    .fold(deadline, u64::max)
                    + if any_open { p.trp as u64 } else { 0 };
                for b in &mut rank.banks {
                    b.open_row = None;
                    b.act_ready = b.act_ready.max(start + p.trfc as u64);
                }
            }
            self.next_refresh += p.trefi as u64;
        }
    }

    fn issue(&mut self, rank_ix: usize, req: &BlockRequest) -> RequestTiming {
        let p = self.p;
        self.refresh_until(self.bus_free);
        let (bg, bank_in_group, row) = p.locate(req.rank_local_addr);
        let rank = &mut self.ranks[rank_ix];
        let bank = &mut rank.banks[(bg * p.banks_per_group + bank_in_group) as usize];

        let hit = bank.open_row == Some(row);
        let col_ready = if hit {
            bank.col_ready
        } else {
            let mut t_act = match bank.open_row {
                Some(_) => bank.pre_ready + p.trp as u64,
                None => 0,
            }
            .max(bank.act_ready);
            if let Some((t_last, bg_last)) = rank.last_act {
                let rrd = if bg_last == bg { p.trrd_l } else { p.trrd_s };
                t_act = t_act.max(t_last + rrd as u64);
            }
            if rank.act_count >= 4 {
                let oldest = rank.recent_acts[(rank.act_count % 4) as usize];
                t_act = t_act.max(oldest + p.tfaw as u64);
            }
            rank.recent_acts[(rank.act_count % 4) as usize] = t_act;
            rank.act_count += 1;
            rank.last_act = Some((t_act, bg));
            bank.open_row = Some(row);
            bank.col_ready = t_act + p.trcd as u64;
            bank.pre_ready = t_act + p.tras as u64;
            bank.act_ready = t_act + p.trc as u64;
            bank.col_ready
        };

        let latency = match req.kind {
            ReqKind::Read => p.cl,
            ReqKind::Write => p.cwl,
        } as u64;
        let turn = match self.last_dir {
            Some(dir) if dir != req.kind => p.turnaround as u64,
            _ => 0,
        };
        let mut t_col = col_ready.max((self.bus_free + turn).saturating_sub(latency));
        if let Some((t_last, last_rank, last_bg)) = self.last_col {
            let ccd = if last_rank == rank_ix && last_bg == bg { p.tccd_l } else { p.tccd_s };
            t_col = t_col.max(t_last + ccd as u64);
        }
        let data_end = t_col + latency + p.tbl as u64;
        bank.pre_ready = bank.pre_ready.max(match req.kind {
            ReqKind::Read => t_col + p.trtp as u64,
            ReqKind::Write => data_end + p.twr as u64,
        });

        self.bus_free = data_end;
        self.last_dir = Some(req.kind);
        self.last_col = Some((t_col, rank_ix, bg));
        self.end = self.end.max(data_end);
        self.count += 1;
        self.hits += hit as u64;
        RequestTiming {
            column_cycle: t_col,
            data_end_cycle: data_end,
            row_hit: hit,
        }
    }

    fn result(&self) -> RankSimResult {
        let bytes = self.count * BLOCK_BYTES;
        let bandwidth = if self.end == 0 {
            0.0
        } else {
            bytes as f64 / self.p.cycles_to_ns(self.end)
        };
        RankSimResult {
            total_cycles: self.end,
            busy_data_cycles: self.count * self.p.tbl as u64,
            bytes_moved: bytes,
            achieved_bandwidth_gbs: bandwidth,
            row_hit_rate: if self.count == 0 {
                0.0
            } else {
                self.hits as f64 / self.count as f64
            },
            requests: self.count,
            row_hits: self.hits,
        }
    }
}

/// Run requests (rank index, request) through one channel in the given order.
fn run_channel(p: &DramTimingParams, ranks: usize, stream: &[(usize, BlockRequest)]) -> (RankSimResult, Vec<RequestTiming>) {
    let mut ch = Channel::new(p, ranks);
    let mut timings = vec![RequestTiming::default(); stream.len()];
    let mut queue: Vec<usize> = Vec::new();
    let mut queued: BTreeSet<(usize, u64)> = BTreeSet::new();

    let drain = |ch: &mut Channel, queue: &mut Vec<usize>, queued: &mut BTreeSet<(usize, u64)>, timings: &mut [RequestTiming]| {
        for pos in queue.drain(..) {
            let (rank, req) = &stream[pos];
            timings[pos] = ch.issue(*rank, req);
        }
        queued.clear();
    };

    for (pos, (rank, req)) in stream.iter().enumerate() {
        match req.kind {
            ReqKind::Write if p.write_queue_entries > 0 => {
                queue.push(pos);
                queued.insert((*rank, req.rank_local_addr));
                if queue.len() >= p.write_queue_entries as usize {
                    drain(&mut ch, &mut queue, &mut queued, &mut timings);
                }
            }
            ReqKind::Write => timings[pos] = ch.issue(*rank, req),
            ReqKind::Read => {
                if queued.contains(&(*rank, req.rank_local_addr)) {
                    drain(&mut ch, &mut queue, &mut queued, &mut timings);
                }
                timings[pos] = ch.issue(*rank, req);
            }
        }
    }
    drain(&mut ch, &mut queue, &mut queued, &mut timings);
    (ch.result(), timings)
}

/// Simulate one rank; requests are taken in slice order.
pub fn simulate_rank(params: &DramTimingParams, reqs: &[BlockRequest]) -> RankSimResult {
    simulate_rank_timeline(params, reqs).0
}

/// [`simulate_rank`] plus per-request timing, indexed like `reqs`.
pub fn simulate_rank_timeline(params: &DramTimingParams, reqs: &[BlockRequest]) -> (RankSimResult, Vec<RequestTiming>) {
    let stream: Vec<(usize, BlockRequest)> = reqs.iter().map(|r| (0, *r)).collect();
    run_channel(params, 1, &stream)
}

/// Several DIMMs time-multiplexing one channel's data bus.
///
/// Requests of all DIMMs are merged by `issue_order` (ties go to the lower
/// DIMM index); each DIMM keeps its own banks.
pub fn simulate_shared_channel(params: &DramTimingParams, per_dimm: &[Vec<BlockRequest>]) -> RankSimResult {
    let mut stream: Vec<(usize, BlockRequest)> = per_dimm
        .iter()
        .enumerate()
        .flat_map(|(d, reqs)| reqs.iter().map(move |r| (d, *r)))
        .collect();
    stream.sort_by_key(|(d, r)| (r.issue_order, *d));
    run_channel(params, per_dimm.len().max(1), &stream).0
}

/// Block interleaving of a CPU memory system: consecutive 64-byte blocks
/// rotate over channels, then over the DIMMs of a channel.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ChannelMap {
    pub channels: u32,
    pub dimms_per_channel: u32,
}

impl Default for ChannelMap {
    fn default() -> Self {
        Self {
            channels: 8,
            dimms_per_channel: 4,
        }
    }
}

impl ChannelMap {
    pub fn validate(&self) -> Result<(), DramError> {
        if self.channels == 0 || self.dimms_per_channel == 0 {
            return Err(DramError::InvalidParams("channel map needs at least one channel and DIMM"));
        }
        Ok(())
    }

    /// (channel, DIMM, DIMM-local address) of the block holding `addr`.
    pub fn route(&self, addr: u64) -> (u32, u32, u64) {
        let block = addr / BLOCK_BYTES;
        let c = self.channels as u64;
        let d = self.dimms_per_channel as u64;
        ((block % c) as u32, ((block / c) % d) as u32, block / c / d * BLOCK_BYTES)
    }

    pub fn peak_bandwidth_gbs(&self, params: &DramTimingParams) -> f64 {
        self.channels as f64 * params.peak_bandwidth_gbs()
    }
}

/// Text trace: `0x<hex-addr> <R|W>` per line, in issue order.
pub fn export_trace(reqs: &[BlockRequest]) -> String {
    let mut out = String::with_capacity(reqs.len() * 12);
    for r in reqs {
        let kind = match r.kind {
            ReqKind::Read => 'R',
            ReqKind::Write => 'W',
        };
        let _ = writeln!(out, "{:#x} {}", r.rank_local_addr, kind);
    }
    out
}

/// Parse a trace; issue orders are assigned 0, 1, 2, ... in line order.
/// Empty lines are skipped.
pub fn import_trace(text: &str) -> Result<Vec<BlockRequest>, DramError> {
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line_no = i + 1;
        let err = |reason: &str| DramError::Parse {
            line: line_no,
            reason: reason.into(),
        };
        if line.trim().is_empty() {
            continue;
        }
        let mut parts = line.split_whitespace();
        let (Some(addr), Some(kind), None) = (parts.next(), parts.next(), parts.next()) else {
            return Err(err("expected `0x<addr> <R|W>`"));
        };
        let hex = addr.strip_prefix("0x").ok_or_else(|| err("address must start with 0x"))?;
        let addr = u64::from_str_radix(hex, 16).map_err(|_| err("bad hex address"))?;
        let kind = match kind {
            "R" => ReqKind::Read,
            "W" => ReqKind::Write,
            _ => return Err(err("kind must be R or W")),
        };
        let req = BlockRequest::new(kind, addr, out.len() as u64).map_err(|_| err("address not 64-byte aligned"))?;
        out.push(req);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn reads(addrs: impl IntoIterator<Item = u64>) -> Vec<BlockRequest> {
        addrs
            .into_iter()
            .enumerate()
            .map(|(i, a)| BlockRequest::read(a, i as u64).unwrap())
            .collect()
    }

    #[test]
    fn defaults_are_consistent() {
        let p = DramTimingParams::default();
        p.validate().unwrap();
        assert_eq!(p.peak_bandwidth_gbs(), 25.6);
        assert_eq!(p.tck_ps(), 625.0);
        assert_eq!(p.trc, p.tras + p.trp);
        assert_eq!(p.num_banks(), 16);
    }

    #[test]
    fn single_closed_row_read() {
        let p = DramTimingParams::default();
        let r = simulate_rank(&p, &reads([0]));
        // ACT at 0, RD at tRCD, data done CL + BL8/2 clocks later.
        assert_eq!(r.total_cycles, (p.trcd + p.cl + 8 / 2) as u64);
        assert_eq!(r.bytes_moved, 64);
        assert_eq!(r.row_hit_rate, 0.0);
    }

    #[test]
    fn empty_stream() {
        let r = simulate_rank(&DramTimingParams::default(), &[]);
        assert_eq!(r, RankSimResult::default());
        let s = simulate_shared_channel(&DramTimingParams::default(), &[vec![], vec![]]);
        assert_eq!((s.total_cycles, s.bytes_moved), (0, 0));
    }

    #[test]
    fn sequential_streaming_nears_peak() {
        let p = DramTimingParams::default();
        let r = simulate_rank(&p, &reads((0..100_000u64).map(|i| i * 64)));
        assert!(r.achieved_bandwidth_gbs >= 0.93 * p.peak_bandwidth_gbs(), "{r:?}");
        assert!(r.achieved_bandwidth_gbs <= p.peak_bandwidth_gbs());
        assert!(r.row_hit_rate > 0.99);
    }

    #[test]
    fn same_bank_row_ping_pong_is_trc_bound() {
        let p = DramTimingParams::default();
        // Two rows that hash onto the same bank.
        let row_stride = (p.row_bytes * p.num_banks()) as u64;
        let other = (1..64u64).map(|r| r * row_stride).find(|&a| p.locate(a).0 == 0 && p.locate(a).1 == 0).unwrap();
        assert_eq!(p.locate(0), (0, 0, 0));
        let n = 1000u64;
        let r = simulate_rank(&p, &reads((0..n).map(|i| (i % 2) * other)));
        assert_eq!(r.row_hits, 0);
        // Every activate after the first waits a full tRC on the same bank.
        assert!(r.total_cycles >= (n - 1) * p.trc as u64);
        let bound = 64.0 / p.cycles_to_ns(p.trc as u64);
        let steady = 64.0 * (n - 1) as f64 / p.cycles_to_ns(r.total_cycles - (p.trcd + p.cl + p.tbl) as u64);
        assert!(steady <= bound + 1e-12, "{steady} > {bound}");
        assert!(r.achieved_bandwidth_gbs > 0.95 * bound);
    }

    #[test]
    fn same_bank_group_back_to_back_uses_tccd_l() {
        let p = DramTimingParams::default();
        // Blocks 0 and 4 share bank group 0 and the open row.
        let (_, t) = simulate_rank_timeline(&p, &reads([0, 4 * 64]));
        assert!(t[1].row_hit);
        assert_eq!(t[1].column_cycle - t[0].column_cycle, p.tccd_l as u64);
        let (_, t) = simulate_rank_timeline(&p, &reads([0, 64]));
        assert_eq!(t[1].data_end_cycle - t[0].data_end_cycle, p.tbl as u64);
    }

    #[test]
    fn write_queue_batches_turnarounds() {
        let p = DramTimingParams::default();
        // Destination region starts one bank over (512 blocks) so reads and
        // writes do not fight over rows.
        let mut reqs = Vec::new();
        for i in 0..4096u64 {
            reqs.push(BlockRequest::read(i * 64, 2 * i).unwrap());
            reqs.push(BlockRequest::write((1 << 24) + (512 + i) * 64, 2 * i + 1).unwrap());
        }
        let batched = simulate_rank(&p, &reqs);
        let unbatched = simulate_rank(
            &DramTimingParams {
                write_queue_entries: 0,
                ..p
            },
            &reqs,
        );
        assert!(batched.achieved_bandwidth_gbs > 0.93 * p.peak_bandwidth_gbs(), "{batched:?}");
        assert!(unbatched.total_cycles > batched.total_cycles);
    }

    #[test]
    fn read_after_queued_write_drains_first() {
        let p = DramTimingParams::default();
        let reqs = vec![BlockRequest::write(0, 0).unwrap(), BlockRequest::read(0, 1).unwrap()];
        let (_, t) = simulate_rank_timeline(&p, &reqs);
        assert!(t[0].data_end_cycle < t[1].data_end_cycle);
    }

    #[test]
    fn refresh_costs_under_three_percent() {
        let p = DramTimingParams::default();
        let stream = reads((0..200_000u64).map(|i| i * 64));
        let off = simulate_rank(&p, &stream);
        let on = simulate_rank(&DramTimingParams { refresh: true, ..p }, &stream);
        let loss = 1.0 - on.achieved_bandwidth_gbs / off.achieved_bandwidth_gbs;
        assert!(loss > 0.0 && loss < 0.03, "refresh loss {loss}");
    }

    #[test]
    fn shared_channel_is_bus_capped() {
        let p = DramTimingParams::default();
        let n = 40_000u64;
        let one = simulate_shared_channel(&p, &[reads((0..n).map(|i| i * 64))]);
        let mut four = vec![Vec::new(); 4];
        for i in 0..n {
            four[(i % 4) as usize].push(BlockRequest::read((i / 4) * 64, i).unwrap());
        }
        let four = simulate_shared_channel(&p, &four);
        assert_eq!(four.bytes_moved, one.bytes_moved);
        assert!(four.achieved_bandwidth_gbs <= p.peak_bandwidth_gbs());
        let rel = (four.achieved_bandwidth_gbs - one.achieved_bandwidth_gbs).abs() / one.achieved_bandwidth_gbs;
        assert!(rel < 0.01, "1 vs 4 DIMMs differ by {rel}");
    }

    #[test]
    fn trace_lines() {
        assert_eq!(export_trace(&[BlockRequest::read(0, 0).unwrap()]), "0x0 R\n");
        assert_eq!(export_trace(&[BlockRequest::write(0x1000, 0).unwrap()]), "0x1000 W\n");
        let back = import_trace("0x0 R\n0x1000 W\n").unwrap();
        assert_eq!(back, vec![BlockRequest::read(0, 0).unwrap(), BlockRequest::write(0x1000, 1).unwrap()]);
    }

    #[test]
    fn trace_errors_carry_line_numbers() {
        let e = import_trace("0x0 R\n0x40 X\n").unwrap_err();
        assert!(matches!(e, DramError::Parse { line: 2, .. }));
        assert!(matches!(import_trace("0x41 R"), Err(DramError::Parse { line: 1, .. })));
        assert!(matches!(import_trace("40 R"), Err(DramError::Parse { line: 1, .. })));
        assert!(matches!(import_trace("0x40 R extra"), Err(DramError::Parse { line: 1, .. })));
        assert_eq!(BlockRequest::read(3, 0), Err(DramError::Misaligned(3)));
    }

    #[test]
    fn invalid_params_rejected() {
        let p = DramTimingParams {
            trc: 10,
            ..Default::default()
        };
        assert!(p.validate().is_err());
    }
}
