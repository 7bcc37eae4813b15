//! Acceptance gate: one PASS/FAIL line per criterion, nonzero exit on any FAIL.

use std::process::ExitCode;
use std::time::Instant;

use tdimm::commands;
use tdimm::config::ExperimentConfig;
use tdimm::report;
use tdimm_core::addrmap::PoolGeometry;
use tdimm_core::dram::{ChannelMap, DramTimingParams};
use tdimm_core::nmp::{NmpCoreConfig, QueueOccupancy};
use tdimm_core::node::{self, DesignPoint, SimReport, SystemConfig};
use tdimm_core::pool::InterleavedPool;
use tdimm_core::workload::{self, BenchmarkConfig, EmbeddingStream, IndexDistribution, Pooling, ReductionPlan};

const GIB: u64 = 1 << 30;
const CPU_TILE_BLOCKS: usize = (128 << 10) / 64;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

/// Two tables, 25 lookups per table, streamed rows.
fn streaming(embedding_dim: u32) -> BenchmarkConfig {
    BenchmarkConfig {
        name: "stream".into(),
        num_tables: 2,
        max_reduction: 25,
        embedding_dim,
        rows_per_table: 1_000_000,
        batch_size: 64,
        index_distribution: IndexDistribution::Sequential,
        plan: ReductionPlan::PerTable,
        pooling: Pooling::Sum,
        fc_layers: 0,
    }
}

fn build(cfg: &BenchmarkConfig, ranks: u32) -> (EmbeddingStream, InterleavedPool) {
    let geom = PoolGeometry::new(ranks, 16 * GIB).unwrap();
    let mut pool = InterleavedPool::new(geom);
    let stream = workload::build_stream(cfg, &geom, 1, &mut pool).unwrap();
    (stream, pool)
}

fn tensornode(ranks: u32, dim: u32) -> SimReport {
    let (stream, mut pool) = build(&streaming(dim), ranks);
    node::run_tensornode(&DramTimingParams::default(), &NmpCoreConfig::default(), &stream.instructions, &mut pool).unwrap()
}

fn cpu(dimms: u32) -> SimReport {
    let (stream, pool) = build(&streaming(512), 32);
    let map = ChannelMap {
        channels: 8,
        dimms_per_channel: dimms,
    };
    node::run_cpu_memory(&DramTimingParams::default(), &map, CPU_TILE_BLOCKS, &stream.instructions, &pool).unwrap()
}

struct Ctx {
    node32: SimReport,
    cpu_d1: SimReport,
    cpu_d4: SimReport,
}

fn c1(ctx: &Ctx) -> Outcome {
    let bw = ctx.node32.agg_bandwidth_gbs();
    outcome(bw >= 760.0, format!("32-rank streaming aggregate {bw:.1} GB/s (need >= 760)"))
}

fn c2(ctx: &Ctx) -> Outcome {
    let (a, b) = (ctx.cpu_d1.agg_bandwidth_gbs(), ctx.cpu_d4.agg_bandwidth_gbs());
    let in_band = |x: f64| (180.0..=204.8).contains(&x);
    let spread = (a - b).abs() / a.min(b);
    outcome(
        in_band(a) && in_band(b) && spread <= 0.01,
        format!("CPU 8ch: {a:.1} GB/s (1 DIMM/ch), {b:.1} GB/s (4 DIMM/ch), spread {:.2}%", spread * 100.0),
    )
}

fn c3(ctx: &Ctx) -> Outcome {
    let ratio = ctx.node32.agg_bandwidth_gbs() / ctx.cpu_d4.agg_bandwidth_gbs();
    outcome((ratio - 4.0).abs() <= 0.6, format!("TensorNode/CPU = {ratio:.2}x (need 4.0 +- 15%)"))
}

fn c4() -> Outcome {
    let bw = tensornode(128, 2048).agg_bandwidth_gbs();
    outcome(bw >= 3000.0, format!("128 ranks, 8 KiB embeddings: {bw:.1} GB/s (need >= 3000)"))
}

fn c5() -> Outcome {
    let t = Instant::now();
    let res = commands::cmd_validate(1, 1000, false);
    let secs = t.elapsed().as_secs_f64();
    match res {
        Ok(s) => outcome(
            s.passed == 1000 && secs < 60.0,
            format!("{}/{} cases bit-identical in {secs:.1} s", s.passed, s.cases),
        ),
        Err(e) => outcome(false, format!("mismatch: {e}")),
    }
}

fn c6() -> Outcome {
    let sys = SystemConfig::new(PoolGeometry::new(32, 16 * GIB).unwrap());
    let mut worst: f64 = 0.0;
    for cfg in BenchmarkConfig::presets() {
        let (stream, pool) = build(&cfg, 32);
        let eval = |dp| node::evaluate_design(dp, &sys, &stream.instructions, &pool, Some(0.0)).unwrap();
        let (t, c) = (eval(DesignPoint::Tdimm), eval(DesignPoint::CpuGpu));
        let stream_us = |r: &node::DesignResult| r.link.as_ref().unwrap().streaming_us(r.transfer_bytes);
        let got = stream_us(&t) / stream_us(&c);
        let want = (16.0 / 150.0) / cfg.max_reduction as f64;
        worst = worst.max(((got - want) / want).abs());
    }
    outcome(worst <= 1e-9, format!("transfer ratio vs (16/150)/N over presets: max rel err {worst:.2e}"))
}

fn c7() -> Outcome {
    let mut cfg = ExperimentConfig {
        designs: vec!["PMEM".into(), "TDIMM".into()],
        ..Default::default()
    };
    cfg.sweep.link_scales = vec![1.0, 1.0 / 6.0];
    let resolved = cfg.resolve().unwrap();
    let rows = commands::cmd_sweep(&resolved).unwrap();
    let total = |b: &str, dp: DesignPoint, slow: bool| {
        rows.iter()
            .find(|r| r.benchmark == b && r.design() == dp && (r.link_scale.unwrap() < 1.0) == slow)
            .unwrap()
            .result
            .breakdown
            .total_us
    };
    let mut pass = true;
    let mut losses = Vec::new();
    for b in &resolved.benchmarks {
        assert!(b.max_reduction > 1);
        let rel = |dp| total(&b.name, dp, true) / total(&b.name, dp, false) - 1.0;
        let (p, t) = (rel(DesignPoint::Pmem), rel(DesignPoint::Tdimm));
        pass &= p > t;
        losses.push(t);
    }
    let max = losses.iter().cloned().fold(0.0, f64::max);
    let avg = losses.iter().sum::<f64>() / losses.len() as f64;
    outcome(
        pass,
        format!(
            "PMEM slows more than TDIMM at 1/6 link bandwidth for all presets; TDIMM loss max {:.1}% avg {:.1}%",
            max * 100.0,
            avg * 100.0
        ),
    )
}

fn c8() -> Outcome {
    let resolved = ExperimentConfig::default().resolve().unwrap();
    let rows = commands::cmd_run(&resolved).unwrap();
    let mut ordered = true;
    for b in &resolved.benchmarks {
        let t = |dp| {
            rows.iter()
                .find(|r| r.benchmark == b.name && r.design() == dp)
                .unwrap()
                .result
                .breakdown
                .total_us
        };
        ordered &= t(DesignPoint::GpuOracle) <= t(DesignPoint::Tdimm)
            && t(DesignPoint::Tdimm) <= t(DesignPoint::CpuGpu)
            && t(DesignPoint::CpuGpu) <= 1.10 * t(DesignPoint::CpuOnly);
    }
    let mut buf = Vec::new();
    report::write_csv(&mut buf, resolved.seed, &rows).unwrap();
    let golden = include_str!("golden/default_run.csv");
    let same = buf == golden.as_bytes();
    outcome(
        ordered && same,
        format!("design ordering holds: {ordered}; default report matches golden CSV: {same}"),
    )
}

fn c9(ctx: &Ctx) -> Outcome {
    let core = NmpCoreConfig::default();
    let mut reports = vec![ctx.node32.clone()];
    for cfg in BenchmarkConfig::presets() {
        let (stream, mut pool) = build(&cfg, 32);
        reports.push(node::run_tensornode(&DramTimingParams::default(), &core, &stream.instructions, &mut pool).unwrap());
    }
    let alu_bound = reports.iter().any(SimReport::any_alu_bound);
    let peak = reports.iter().fold(Default::default(), |q: QueueOccupancy, r| q.max(r.queues));
    let fits = peak.within(&core) && peak.index <= core.input_queue_bytes;
    outcome(
        !alu_bound && fits,
        format!(
            "ALU-bound anywhere: {alu_bound}; peak queue bytes index/A/B/C = {}/{}/{}/{} (limit 512)",
            peak.index, peak.a, peak.b, peak.c
        ),
    )
}

fn main() -> ExitCode {
    let ctx = Ctx {
        node32: tensornode(32, 512),
        cpu_d1: cpu(1),
        cpu_d4: cpu(4),
    };
    let results = [
        c1(&ctx),
        c2(&ctx),
        c3(&ctx),
        c4(),
        c5(),
        c6(),
        c7(),
        c8(),
        c9(&ctx),
    ];
    let mut failed = 0;
    for (i, r) in results.iter().enumerate() {
        println!("criterion {}: {} - {}", i + 1, if r.pass { "PASS" } else { "FAIL" }, r.detail);
        failed += usize::from(!r.pass);
    }
    println!("acceptance: {} passed, {failed} failed", results.len() - failed);
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
