//! The `run`, `sweep`, `validate` and `trace` subcommands.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::thread;

use anyhow::Context;
use tdimm_core::dram::{self, BlockRequest};
use tdimm_core::isa::{self, Opcode};
use tdimm_core::nmp;
use tdimm_core::node::{self, SystemConfig};
use tdimm_core::pool::InterleavedPool;
use tdimm_core::workload::{self, BenchmarkConfig, EmbeddingStream, ValidationCase};

use crate::config::Resolved;
use crate::report::ReportRow;
use crate::CliError;

/// Build one benchmark at one batch size in a fresh pool.
pub fn build(
    sys: &SystemConfig,
    bench: &BenchmarkConfig,
    batch: u32,
    seed: u64,
) -> Result<(EmbeddingStream, InterleavedPool), CliError> {
    let cfg = BenchmarkConfig {
        batch_size: batch,
        ..bench.clone()
    };
    let mut pool = InterleavedPool::new(sys.geometry);
    let stream = workload::build_stream(&cfg, &sys.geometry, seed, &mut pool)?;
    Ok((stream, pool))
}

fn evaluate_cell(
    cfg: &Resolved,
    sys: &SystemConfig,
    bench: &BenchmarkConfig,
    batch: u32,
    link_scale: Option<f64>,
) -> Result<Vec<ReportRow>, CliError> {
    let (stream, pool) = build(sys, bench, batch, cfg.seed)?;
    let mut rows = Vec::new();
    for &dp in &cfg.designs {
        let t_dnn = cfg.t_dnn_for(&bench.name, dp);
        let result = node::evaluate_design(dp, sys, &stream.instructions, &pool, t_dnn)?;
        rows.push(ReportRow {
            benchmark: bench.name.clone(),
            batch,
            num_ranks: sys.geometry.num_ranks(),
            result,
            link_scale,
        });
    }
    Ok(rows)
}

/// Evaluate every (benchmark, batch) cell, in parallel, and return the rows
/// in report order.
fn evaluate_all(cfg: &Resolved, systems: &[(Option<f64>, SystemConfig)]) -> Result<Vec<ReportRow>, CliError> {
    let mut cells = Vec::new();
    for (scale, sys) in systems {
        for bench in &cfg.benchmarks {
            for &batch in &cfg.batch_sizes {
                cells.push((*scale, sys, bench, batch));
            }
        }
    }
    let workers = thread::available_parallelism().map_or(1, |n| n.get()).min(cells.len().max(1));
    let results: Vec<Result<Vec<ReportRow>, CliError>> = thread::scope(|s| {
        let handles: Vec<_> = (0..workers)
            .map(|w| {
                let cells = &cells;
                s.spawn(move || {
                    cells
                        .iter()
                        .enumerate()
                        .filter(|(i, _)| i % workers == w)
                        .map(|(i, &(scale, sys, bench, batch))| (i, evaluate_cell(cfg, sys, bench, batch, scale)))
                        .collect::<Vec<_>>()
                })
            })
            .collect();
        let mut all: Vec<_> = handles
            .into_iter()
            .flat_map(|h| h.join().expect("worker thread panicked"))
            .collect();
        all.sort_by_key(|(i, _)| *i);
        all.into_iter().map(|(_, r)| r).collect()
    });
    let mut rows = Vec::new();
    for r in results {
        rows.extend(r?);
    }
    Ok(rows)
}

/// One row per (benchmark, batch, design).
pub fn cmd_run(cfg: &Resolved) -> Result<Vec<ReportRow>, CliError> {
    evaluate_all(cfg, &[(None, cfg.system.clone())])
}

/// [`cmd_run`] repeated with both links scaled by each configured factor.
pub fn cmd_sweep(cfg: &Resolved) -> Result<Vec<ReportRow>, CliError> {
    let systems: Vec<_> = cfg
        .link_scales
        .iter()
        .map(|&k| {
            let mut sys = cfg.system.clone();
            sys.pcie = sys.pcie.scaled(k);
            sys.nvlink = sys.nvlink.scaled(k);
            (Some(k), sys)
        })
        .collect();
    evaluate_all(cfg, &systems)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ValidationSummary {
    pub cases: u64,
    pub passed: u64,
}

/// Randomized functional-equivalence cases: dense reference vs direct ISA vs
/// rank-partitioned node. Stops at the first mismatch and returns a
/// minimized reproduction in the error.
pub fn cmd_validate(seed: u64, cases: u64, inject_fault: bool) -> Result<ValidationSummary, CliError> {
    let dram = tdimm_core::dram::DramTimingParams::default();
    let core = tdimm_core::nmp::NmpCoreConfig::default();
    for id in 0..cases {
        let case = ValidationCase::generate(seed, id);
        if let Err(mismatch) = workload::check_case(&case, &dram, &core, inject_fault) {
            let min = workload::minimize(&case, &dram, &core, inject_fault);
            return Err(CliError::Validation(format!("{mismatch}\n{}", reproduction(seed, &min))));
        }
    }
    Ok(ValidationSummary { cases, passed: cases })
}

fn reproduction(seed: u64, case: &ValidationCase) -> String {
    let mut out = String::new();
    let g = case.geometry;
    let _ = writeln!(
        out,
        "reproduction: seed={seed} case={} ranks={} rank_capacity={}",
        case.id,
        g.num_ranks(),
        g.rank_capacity_bytes()
    );
    for (i, instr) in case.instructions.iter().enumerate() {
        let _ = writeln!(out, "  [{i}] {}", isa::disassemble(instr));
    }
    if let Ok(hex) = isa::hex_dump(&case.instructions) {
        out.push_str(&hex);
    }
    for (addr, data) in &case.init {
        let _ = writeln!(out, "  init {addr:#x} ({} bytes)", data.len());
    }
    out
}

/// Files written by [`cmd_trace`].
#[derive(Debug, Clone, PartialEq)]
pub struct TraceOutput {
    pub rank_files: Vec<PathBuf>,
    pub program: PathBuf,
    pub requests: u64,
}

/// Lower one benchmark's stream onto every rank and write each rank's DRAM
/// request stream as a trace file, plus the instruction stream as hex.
pub fn cmd_trace(cfg: &Resolved, bench: &BenchmarkConfig, batch: u32, dir: &Path) -> Result<TraceOutput, CliError> {
    let sys = &cfg.system;
    let (stream, mut pool) = build(sys, bench, batch, cfg.seed)?;
    let g = sys.geometry;
    let mut per_rank: Vec<Vec<BlockRequest>> = vec![Vec::new(); g.num_ranks() as usize];
    for (index, instr) in stream.instructions.iter().enumerate() {
        let fault = |e: String| CliError::Simulation(format!("instruction {index}: {e}"));
        let indices = match instr.opcode {
            Opcode::Gather => isa::read_indices(&pool, instr).map_err(|e| fault(e.to_string()))?,
            _ => Vec::new(),
        };
        for r in 0..g.num_ranks() {
            let work = nmp::lower_instruction(&g, instr, r, &indices, &sys.core).map_err(|e| fault(e.to_string()))?;
            nmp::apply_functional(pool.rank_mut(r), &work).map_err(|e| fault(e.to_string()))?;
            let reqs = &mut per_rank[r as usize];
            let base = reqs.len() as u64;
            reqs.extend(work.requests.iter().map(|q| BlockRequest {
                issue_order: base + q.issue_order,
                ..*q
            }));
        }
    }
    std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    let mut rank_files = Vec::new();
    let mut requests = 0;
    for (r, reqs) in per_rank.iter().enumerate() {
        let path = dir.join(format!("rank{r:03}.trace"));
        std::fs::write(&path, dram::export_trace(reqs)).with_context(|| format!("writing {}", path.display()))?;
        requests += reqs.len() as u64;
        rank_files.push(path);
    }
    let program = dir.join("program.hex");
    let hex = isa::hex_dump(&stream.instructions)
        .map_err(|e| CliError::Config(format!("instruction stream cannot be encoded: {e}")))?;
    std::fs::write(&program, hex).with_context(|| format!("writing {}", program.display()))?;
    Ok(TraceOutput {
        rank_files,
        program,
        requests,
    })
}
