//! CSV reports.
//!
//! A report starts with one `#` comment line carrying the seed, followed by
//! a header row and one row per (benchmark, batch, design). Rows are sorted
//! by benchmark (in config order), batch, then design point.
//!
//! | column | meaning |
//! |---|---|
//! | run_id | `<benchmark>-b<batch>-<design>` |
//! | design | CPU_ONLY, CPU_GPU, PMEM, TDIMM or GPU_ORACLE |
//! | benchmark | benchmark name |
//! | batch | batch size |
//! | R | ranks in the TensorNode |
//! | t_lookup_us, t_reduce_us, t_transfer_us, t_dnn_us, total_us | latency breakdown |
//! | agg_bandwidth_gbs | bytes moved by the embedding phases over their time |
//! | row_hit_rate | DRAM row-buffer hit rate; 0 for analytic models |
//!
//! Sweep reports append a `link_scale` column.

use std::io::Write;

use tdimm_core::node::{DesignPoint, DesignResult};

pub const COLUMNS: [&str; 12] = [
    "run_id",
    "design",
    "benchmark",
    "batch",
    "R",
    "t_lookup_us",
    "t_reduce_us",
    "t_transfer_us",
    "t_dnn_us",
    "total_us",
    "agg_bandwidth_gbs",
    "row_hit_rate",
];

#[derive(Debug, Clone, PartialEq)]
pub struct ReportRow {
    pub benchmark: String,
    pub batch: u32,
    pub num_ranks: u32,
    pub result: DesignResult,
    pub link_scale: Option<f64>,
}

impl ReportRow {
    pub fn design(&self) -> DesignPoint {
        self.result.design
    }

    pub fn run_id(&self) -> String {
        let mut id = format!("{}-b{}-{}", self.benchmark, self.batch, self.design());
        if let Some(k) = self.link_scale {
            id.push_str(&format!("-x{k:.4}"));
        }
        id
    }

    fn record(&self) -> Vec<String> {
        let b = &self.result.breakdown;
        let f = |v: f64| format!("{v:.4}");
        let mut rec = vec![
            self.run_id(),
            self.design().to_string(),
            self.benchmark.clone(),
            self.batch.to_string(),
            self.num_ranks.to_string(),
            f(b.t_lookup_us),
            f(b.t_reduce_us),
            f(b.t_transfer_us),
            f(b.t_dnn_us),
            f(b.total_us),
            f(self.result.agg_bandwidth_gbs),
            format!("{:.6}", self.result.row_hit_rate),
        ];
        if let Some(k) = self.link_scale {
            rec.push(format!("{k:.6}"));
        }
        rec
    }
}

/// Write a report. All rows must agree on whether they carry a link scale.
pub fn write_csv<W: Write>(mut out: W, seed: u64, rows: &[ReportRow]) -> anyhow::Result<()> {
    writeln!(out, "# tdimm report seed={seed}")?;
    let mut w = csv::Writer::from_writer(out);
    let mut header: Vec<&str> = COLUMNS.to_vec();
    if rows.first().is_some_and(|r| r.link_scale.is_some()) {
        header.push("link_scale");
    }
    w.write_record(&header)?;
    for row in rows {
        w.write_record(row.record())?;
    }
    w.flush()?;
    Ok(())
}

/// Parse a report back into header and records, skipping the comment line.
pub fn read_csv(text: &str) -> anyhow::Result<(Vec<String>, Vec<Vec<String>>)> {
    let mut r = csv::ReaderBuilder::new().comment(Some(b'#')).from_reader(text.as_bytes());
    let header = r.headers()?.iter().map(String::from).collect();
    let mut rows = Vec::new();
    for rec in r.records() {
        rows.push(rec?.iter().map(String::from).collect());
    }
    Ok((header, rows))
}
