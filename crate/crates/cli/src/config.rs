//! Run configuration: a JSON file whose fields mirror the command-line flags,
//! with flags taking precedence.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context};
use redmule_sim::report::{auto_port_bits, ReportFormat, DEFAULT_FREQ_MHZ};
use redmule_sim::workloads::{parse_shape_list, Distribution};
use redmule_sim::{ArrayConfig, Dims, Fp8Format, IoPrecision, MemoryModel, SemiringKernel, SimParams, StallPattern};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize, clap::Args)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    /// Rows of computing elements.
    #[arg(long = "L")]
    #[serde(rename = "L", default)]
    pub rows: Option<usize>,
    /// Computing elements per row.
    #[arg(long = "H")]
    #[serde(rename = "H", default)]
    pub cols: Option<usize>,
    /// Pipeline registers per computing element.
    #[arg(long = "P")]
    #[serde(rename = "P", default)]
    pub pipe_regs: Option<usize>,
    /// Memory port width; defaults to one line plus 32 bits.
    #[arg(long)]
    #[serde(default)]
    pub port_bits: Option<usize>,
    /// fp16 or fp8.
    #[arg(long)]
    #[serde(default)]
    pub io: Option<String>,
    #[arg(long)]
    #[serde(default)]
    pub kernel: Option<String>,
    /// Problem size as MxNxK.
    #[arg(long)]
    #[serde(default)]
    pub dims: Option<String>,
    /// File of M,N,K lines; runs every shape.
    #[arg(long, conflicts_with = "dims")]
    #[serde(default)]
    pub shapes: Option<PathBuf>,
    /// ideal, lat:N or stalls:FILE.
    #[arg(long)]
    #[serde(default)]
    pub mem: Option<String>,
    #[arg(long)]
    #[serde(default)]
    pub seed: Option<u64>,
    /// unit, int8, uint8 or positive.
    #[arg(long)]
    #[serde(default)]
    pub distribution: Option<String>,
    /// Encoding of FP8 inputs (e4m3 or e5m2).
    #[arg(long)]
    #[serde(default)]
    pub fp8_in: Option<String>,
    /// Encoding of FP8 outputs (e4m3 or e5m2).
    #[arg(long)]
    #[serde(default)]
    pub fp8_out: Option<String>,
    #[arg(long)]
    #[serde(default)]
    pub fifo_depth: Option<usize>,
    #[arg(long)]
    #[serde(default)]
    pub freq_mhz: Option<f64>,
    /// Compare the result with the golden model; exit 4 on mismatch.
    #[arg(long)]
    #[serde(default)]
    pub check: bool,
    /// Write per-cycle and per-access traces next to the report.
    #[arg(long)]
    #[serde(default)]
    pub trace: bool,
    /// Report path; stdout when absent.
    #[arg(long)]
    #[serde(default)]
    pub out: Option<PathBuf>,
    /// json or csv.
    #[arg(long)]
    #[serde(default)]
    pub format: Option<String>,
}

impl RunConfig {
    pub fn load(path: &Path) -> anyhow::Result<Self> {
        let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))
    }

    /// Fields set in `over` replace those in `self`.
    pub fn merged(self, over: RunConfig) -> RunConfig {
        RunConfig {
            rows: over.rows.or(self.rows),
            cols: over.cols.or(self.cols),
            pipe_regs: over.pipe_regs.or(self.pipe_regs),
            port_bits: over.port_bits.or(self.port_bits),
            io: over.io.or(self.io),
            kernel: over.kernel.or(self.kernel),
            dims: over.dims.or(self.dims),
            shapes: over.shapes.or(self.shapes),
            mem: over.mem.or(self.mem),
            seed: over.seed.or(self.seed),
            distribution: over.distribution.or(self.distribution),
            fp8_in: over.fp8_in.or(self.fp8_in),
            fp8_out: over.fp8_out.or(self.fp8_out),
            fifo_depth: over.fifo_depth.or(self.fifo_depth),
            freq_mhz: over.freq_mhz.or(self.freq_mhz),
            check: over.check || self.check,
            trace: over.trace || self.trace,
            out: over.out.or(self.out),
            format: over.format.or(self.format),
        }
    }
}

/// A fully resolved run.
#[derive(Debug, Clone)]
pub struct Resolved {
    pub cfg: ArrayConfig,
    pub kernel: SemiringKernel,
    pub shapes: Vec<Dims>,
    pub memory: MemoryModel,
    pub seed: u64,
    pub distribution: Distribution,
    pub fp8_in: Fp8Format,
    pub params: SimParams,
    pub freq_mhz: f64,
    pub check: bool,
    pub trace: bool,
    pub out: Option<PathBuf>,
    pub format: ReportFormat,
}

pub fn parse_memory(spec: &str) -> anyhow::Result<MemoryModel> {
    if let Some(file) = spec.strip_prefix("stalls:") {
        let text = fs::read_to_string(file).with_context(|| format!("reading stall pattern {file}"))?;
        return Ok(MemoryModel::StallPattern(StallPattern::parse(&text)?));
    }
    Ok(MemoryModel::parse_inline(spec)?)
}

fn parse_fp8(s: &str) -> anyhow::Result<Fp8Format> {
    s.parse().map_err(anyhow::Error::msg)
}

pub fn parse_format(s: &str) -> anyhow::Result<ReportFormat> {
    match s.to_ascii_lowercase().as_str() {
        "json" => Ok(ReportFormat::Json),
        "csv" => Ok(ReportFormat::Csv),
        other => bail!("unknown report format `{other}` (expected json or csv)"),
    }
}

impl RunConfig {
    pub fn resolve(&self) -> anyhow::Result<Resolved> {
        let (l, h, p) = (self.rows.unwrap_or(12), self.cols.unwrap_or(4), self.pipe_regs.unwrap_or(3));
        let io: IoPrecision = self.io.as_deref().unwrap_or("fp16").parse()?;
        let port = self.port_bits.unwrap_or_else(|| auto_port_bits(l, h, p, io));
        let cfg = ArrayConfig { rows: l, cols: h, pipe_regs: p, port_bits: port, io };
        let shapes = match (&self.shapes, &self.dims) {
            (Some(file), _) => {
                let text = fs::read_to_string(file).with_context(|| format!("reading {}", file.display()))?;
                let s = parse_shape_list(&text)?;
                if s.is_empty() {
                    bail!("{} lists no shapes", file.display());
                }
                s
            }
            (None, Some(d)) => vec![d.parse()?],
            (None, None) => vec![Dims::cube(96)],
        };
        let defaults = SimParams::default();
        let params = SimParams {
            fifo_depth: self.fifo_depth.unwrap_or(defaults.fifo_depth),
            z_format: self.fp8_out.as_deref().map(parse_fp8).transpose()?.unwrap_or(defaults.z_format),
            record_cycles: self.trace,
            ..defaults
        };
        if params.fifo_depth == 0 {
            bail!("fifo depth must be at least 1");
        }
        Ok(Resolved {
            cfg,
            kernel: self.kernel.as_deref().unwrap_or("matmul").parse()?,
            shapes,
            memory: parse_memory(self.mem.as_deref().unwrap_or("ideal"))?,
            seed: self.seed.unwrap_or(1),
            distribution: self.distribution.as_deref().unwrap_or("unit").parse()?,
            fp8_in: self.fp8_in.as_deref().map(parse_fp8).transpose()?.unwrap_or(Fp8Format::E4M3),
            params,
            freq_mhz: self.freq_mhz.unwrap_or(DEFAULT_FREQ_MHZ),
            check: self.check,
            trace: self.trace,
            out: self.out.clone(),
            format: parse_format(self.format.as_deref().unwrap_or("json"))?,
        })
    }
}
