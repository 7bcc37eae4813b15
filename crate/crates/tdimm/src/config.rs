//! Experiment configuration file (TOML).
//!
//! Every section is optional; omitted keys take the simulator defaults.
//! Unknown keys are rejected.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::Deserialize;
use tdimm_core::addrmap::PoolGeometry;
use tdimm_core::dram::{ChannelMap, DramTimingParams};
use tdimm_core::nmp::NmpCoreConfig;
use tdimm_core::node::{DesignPoint, LinkSpec, SystemConfig};
use tdimm_core::workload::{BenchmarkConfig, IndexDistribution, Pooling, ReductionPlan};

use crate::CliError;

#[derive(Debug, Clone, Deserialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentConfig {
    pub seed: u64,
    /// Preset or custom benchmark names.
    pub benchmarks: Vec<String>,
    pub batch_sizes: Vec<u32>,
    pub designs: Vec<String>,
    pub geometry: GeometrySection,
    pub dram: DramSection,
    pub core: CoreSection,
    pub cpu: CpuSection,
    pub links: LinksSection,
    pub gpu_hbm_gbs: f64,
    pub workload: WorkloadSection,
    pub custom: Vec<CustomBenchmark>,
    /// Per benchmark name: DNN-layer times in microseconds.
    pub t_dnn: BTreeMap<String, DnnTimes>,
    pub sweep: SweepSection,
    pub output: OutputSection,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            seed: 1,
            benchmarks: ["NCF", "YouTube", "Fox", "Facebook"].map(String::from).to_vec(),
            batch_sizes: vec![64],
            designs: DesignPoint::ALL.iter().map(|d| d.name().to_string()).collect(),
            geometry: GeometrySection::default(),
            dram: DramSection::default(),
            core: CoreSection::default(),
            cpu: CpuSection::default(),
            links: LinksSection::default(),
            gpu_hbm_gbs: 900.0,
            workload: WorkloadSection::default(),
            custom: Vec::new(),
            t_dnn: default_t_dnn(),
            sweep: SweepSection::default(),
            output: OutputSection::default(),
        }
    }
}

/// Synthetic DNN-layer times per preset. These are not measurements.
pub fn default_t_dnn() -> BTreeMap<String, DnnTimes> {
    [
        ("NCF", 50.0, 300.0),
        ("YouTube", 40.0, 1200.0),
        ("Fox", 15.0, 1000.0),
        ("Facebook", 60.0, 2400.0),
    ]
    .into_iter()
    .map(|(name, gpu_us, cpu_us)| (name.to_string(), DnnTimes { gpu_us, cpu_us }))
    .collect()
}

#[derive(Debug, Clone, Copy, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct DnnTimes {
    pub gpu_us: f64,
    pub cpu_us: f64,
}

#[derive(Debug, Clone, Deserialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct GeometrySection {
    pub num_ranks: u32,
    pub rank_capacity_gib: u64,
}

impl Default for GeometrySection {
    fn default() -> Self {
        Self {
            num_ranks: 32,
            rank_capacity_gib: 16,
        }
    }
}

#[derive(Debug, Clone, Default, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct DramSection {
    pub data_rate_mts: Option<u32>,
    pub cl: Option<u32>,
    pub cwl: Option<u32>,
    pub trcd: Option<u32>,
    pub trp: Option<u32>,
    pub tras: Option<u32>,
    pub trc: Option<u32>,
    pub tbl: Option<u32>,
    pub tccd_l: Option<u32>,
    pub tccd_s: Option<u32>,
    pub trrd_s: Option<u32>,
    pub trrd_l: Option<u32>,
    pub tfaw: Option<u32>,
    pub twr: Option<u32>,
    pub trtp: Option<u32>,
    pub turnaround: Option<u32>,
    pub write_queue_entries: Option<u32>,
    pub refresh: Option<bool>,
    pub trefi: Option<u32>,
    pub trfc: Option<u32>,
}

impl DramSection {
    pub fn apply(&self, mut p: DramTimingParams) -> DramTimingParams {
        macro_rules! set {
            ($($f:ident),*) => { $(if let Some(v) = self.$f { p.$f = v; })* };
        }
        set!(data_rate_mts, cl, cwl, trcd, trp, tras, trc, tbl, tccd_l, tccd_s, trrd_s, trrd_l, tfaw, twr, trtp, turnaround, write_queue_entries, refresh, trefi, trfc);
        p
    }
}

#[derive(Debug, Clone, Default, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct CoreSection {
    pub alu_lanes: Option<u32>,
    pub alu_clock_mhz: Option<f64>,
    pub input_queue_bytes: Option<u64>,
    pub output_queue_bytes: Option<u64>,
    pub fill_latency_ns: Option<f64>,
}

impl CoreSection {
    pub fn apply(&self, mut c: NmpCoreConfig) -> NmpCoreConfig {
        macro_rules! set {
            ($($f:ident),*) => { $(if let Some(v) = self.$f { c.$f = v; })* };
        }
        set!(alu_lanes, alu_clock_mhz, input_queue_bytes, output_queue_bytes, fill_latency_ns);
        c
    }
}

#[derive(Debug, Clone, Deserialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct CpuSection {
    pub channels: u32,
    pub dimms_per_channel: u32,
    pub tile_bytes: u64,
}

impl Default for CpuSection {
    fn default() -> Self {
        Self {
            channels: 8,
            dimms_per_channel: 4,
            tile_bytes: 128 << 10,
        }
    }
}

#[derive(Debug, Clone, Copy, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct LinkSection {
    pub bandwidth_gbs: f64,
    pub fixed_latency_us: f64,
}

#[derive(Debug, Clone, Deserialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct LinksSection {
    pub pcie: LinkSection,
    pub nvlink: LinkSection,
}

impl Default for LinksSection {
    fn default() -> Self {
        let l = |s: LinkSpec| LinkSection {
            bandwidth_gbs: s.bandwidth_gbs,
            fixed_latency_us: s.fixed_latency_us,
        };
        Self {
            pcie: l(LinkSpec::pcie()),
            nvlink: l(LinkSpec::nvlink()),
        }
    }
}

#[derive(Debug, Clone, Copy, Deserialize, PartialEq, Eq)]
#[serde(rename_all = "snake_case")]
pub enum DistributionName {
    Uniform,
    Zipf,
    Sequential,
}

/// Overrides applied to every benchmark.
#[derive(Debug, Clone, Default, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct WorkloadSection {
    pub rows_per_table: Option<u64>,
    pub embedding_dim: Option<u32>,
    pub index_distribution: Option<DistributionName>,
    pub zipf_exponent: Option<f64>,
}

#[derive(Debug, Clone, Copy, Deserialize, PartialEq, Eq)]
#[serde(rename_all = "snake_case")]
pub enum PlanName {
    AcrossTables,
    PerTable,
}

#[derive(Debug, Clone, Copy, Deserialize, PartialEq, Eq)]
#[serde(rename_all = "snake_case")]
pub enum PoolingName {
    Sum,
    Average,
}

#[derive(Debug, Clone, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct CustomBenchmark {
    pub name: String,
    pub num_tables: u32,
    pub max_reduction: u32,
    #[serde(default = "default_dim")]
    pub embedding_dim: u32,
    #[serde(default = "default_rows")]
    pub rows_per_table: u64,
    #[serde(default = "default_plan")]
    pub plan: PlanName,
    #[serde(default = "default_pooling")]
    pub pooling: PoolingName,
}

fn default_dim() -> u32 {
    512
}
fn default_rows() -> u64 {
    1_000_000
}
fn default_plan() -> PlanName {
    PlanName::PerTable
}
fn default_pooling() -> PoolingName {
    PoolingName::Sum
}

#[derive(Debug, Clone, Deserialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct SweepSection {
    /// Factors applied to both link bandwidths.
    pub link_scales: Vec<f64>,
}

impl Default for SweepSection {
    fn default() -> Self {
        Self {
            link_scales: vec![1.0, 0.5, 0.25, 1.0 / 6.0],
        }
    }
}

#[derive(Debug, Clone, Default, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct OutputSection {
    pub csv: Option<PathBuf>,
    pub trace_dir: Option<PathBuf>,
}

/// A configuration checked and resolved into simulator types.
#[derive(Debug, Clone, PartialEq)]
pub struct Resolved {
    pub seed: u64,
    pub system: SystemConfig,
    pub benchmarks: Vec<BenchmarkConfig>,
    pub batch_sizes: Vec<u32>,
    pub designs: Vec<DesignPoint>,
    pub t_dnn: BTreeMap<String, DnnTimes>,
    pub link_scales: Vec<f64>,
}

impl Resolved {
    pub fn t_dnn_for(&self, benchmark: &str, design: DesignPoint) -> Option<f64> {
        self.t_dnn
            .get(benchmark)
            .map(|t| if design.dnn_on_gpu() { t.gpu_us } else { t.cpu_us })
    }
}

fn bad(msg: impl Into<String>) -> CliError {
    CliError::Config(msg.into())
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self, CliError> {
        toml::from_str(text).map_err(|e| bad(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| bad(format!("{}: {e}", path.display())))?;
        Self::from_toml(&text).map_err(|e| match e {
            CliError::Config(m) => bad(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    fn benchmark(&self, name: &str) -> Result<BenchmarkConfig, CliError> {
        let mut cfg = if let Some(c) = self.custom.iter().find(|c| c.name == name) {
            BenchmarkConfig {
                name: c.name.clone(),
                num_tables: c.num_tables,
                max_reduction: c.max_reduction,
                embedding_dim: c.embedding_dim,
                rows_per_table: c.rows_per_table,
                batch_size: 64,
                index_distribution: IndexDistribution::Uniform,
                plan: match c.plan {
                    PlanName::AcrossTables => ReductionPlan::AcrossTables,
                    PlanName::PerTable => ReductionPlan::PerTable,
                },
                pooling: match c.pooling {
                    PoolingName::Sum => Pooling::Sum,
                    PoolingName::Average => Pooling::Average,
                },
                fc_layers: 0,
            }
        } else {
            BenchmarkConfig::preset(name).ok_or_else(|| bad(format!("benchmarks: unknown benchmark `{name}`")))?
        };
        let w = &self.workload;
        if let Some(rows) = w.rows_per_table {
            cfg.rows_per_table = rows;
        }
        if let Some(dim) = w.embedding_dim {
            cfg.embedding_dim = dim;
        }
        cfg.index_distribution = match (w.index_distribution, w.zipf_exponent) {
            (None | Some(DistributionName::Uniform), None) => IndexDistribution::Uniform,
            (Some(DistributionName::Sequential), None) => IndexDistribution::Sequential,
            (Some(DistributionName::Zipf), s) => IndexDistribution::Zipf(s.unwrap_or(0.99)),
            (_, Some(_)) => return Err(bad("workload.zipf_exponent is only valid with index_distribution = \"zipf\"")),
        };
        cfg.validate().map_err(|e| bad(format!("benchmark `{name}`: {e}")))?;
        Ok(cfg)
    }

    pub fn resolve(&self) -> Result<Resolved, CliError> {
        let geometry = PoolGeometry::new(
            self.geometry.num_ranks,
            self.geometry
                .rank_capacity_gib
                .checked_mul(1 << 30)
                .ok_or_else(|| bad("geometry.rank_capacity_gib too large"))?,
        )
        .map_err(|e| bad(format!("geometry: {e}")))?;
        let link = |name: &str, l: LinkSection| LinkSpec {
            name: name.into(),
            bandwidth_gbs: l.bandwidth_gbs,
            fixed_latency_us: l.fixed_latency_us,
        };
        let system = SystemConfig {
            geometry,
            dram: self.dram.apply(DramTimingParams::default()),
            core: self.core.apply(NmpCoreConfig::default()),
            cpu: ChannelMap {
                channels: self.cpu.channels,
                dimms_per_channel: self.cpu.dimms_per_channel,
            },
            cpu_tile_bytes: self.cpu.tile_bytes,
            pcie: link("pcie", self.links.pcie),
            nvlink: link("nvlink", self.links.nvlink),
            gpu_hbm_gbs: self.gpu_hbm_gbs,
        };
        system.validate().map_err(|e| bad(e.to_string()))?;

        if self.designs.is_empty() {
            return Err(bad("designs: at least one design point is required"));
        }
        let mut designs = Vec::new();
        for name in &self.designs {
            let dp = DesignPoint::from_name(name).ok_or_else(|| bad(format!("designs: unknown design point `{name}`")))?;
            if !designs.contains(&dp) {
                designs.push(dp);
            }
        }
        designs.sort();
        if self.benchmarks.is_empty() {
            return Err(bad("benchmarks: at least one benchmark is required"));
        }
        let benchmarks = self
            .benchmarks
            .iter()
            .map(|n| self.benchmark(n))
            .collect::<Result<Vec<_>, _>>()?;
        if self.batch_sizes.is_empty() || self.batch_sizes.contains(&0) {
            return Err(bad("batch_sizes: need at least one positive batch size"));
        }
        let mut batch_sizes = self.batch_sizes.clone();
        batch_sizes.sort_unstable();
        batch_sizes.dedup();
        for b in &benchmarks {
            for &batch in &batch_sizes {
                BenchmarkConfig {
                    batch_size: batch,
                    ..b.clone()
                }
                .validate()
                .map_err(|e| bad(format!("benchmark `{}` at batch {batch}: {e}", b.name)))?;
            }
            if !self.t_dnn.contains_key(&b.name) {
                return Err(bad(format!("t_dnn: no entry for benchmark `{}`", b.name)));
            }
        }
        for (name, t) in &self.t_dnn {
            if !(t.gpu_us >= 0.0 && t.cpu_us >= 0.0) {
                return Err(bad(format!("t_dnn.{name}: times must be non-negative")));
            }
        }
        if self.sweep.link_scales.iter().any(|&k| !(k > 0.0) || !k.is_finite()) {
            return Err(bad("sweep.link_scales: factors must be positive"));
        }
        Ok(Resolved {
            seed: self.seed,
            system,
            benchmarks,
            batch_sizes,
            designs,
            t_dnn: self.t_dnn.clone(),
            link_scales: self.sweep.link_scales.clone(),
        })
    }
}
