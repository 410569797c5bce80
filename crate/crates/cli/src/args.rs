use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use fxeffect::curve::Method;

#[derive(Parser, Debug)]
#[command(name = "fxeffect", version, about = "Global and regional feature effects for black-box models")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Global effect curve of one feature or of all features.
    Global(EffectArgs),
    /// Partition tree and regional curves of one feature or of all features.
    Regional(RegionalArgs),
    /// Write a built-in synthetic dataset as CSV.
    Synthetic(SyntheticArgs),
    /// Answer pipe-protocol requests on stdin/stdout with a built-in model.
    Serve(ServeArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum MethodArg {
    Pdp,
    Dpdp,
    Ale,
    Rhale,
    Shapdp,
}

impl From<MethodArg> for Method {
    fn from(m: MethodArg) -> Method {
        match m {
            MethodArg::Pdp => Method::Pdp,
            MethodArg::Dpdp => Method::DPdp,
            MethodArg::Ale => Method::Ale,
            MethodArg::Rhale => Method::Rhale,
            MethodArg::Shapdp => Method::ShapDp,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Json,
    Csv,
}

#[derive(Args, Debug, Clone)]
pub struct EffectArgs {
    /// `synthetic:<name>` or `external:<command line>`.
    #[arg(long)]
    pub model: String,
    /// CSV with a header row. Synthetic models generate data when omitted.
    #[arg(long)]
    pub data: Option<PathBuf>,
    /// Rows to generate for a synthetic model without `--data`.
    #[arg(long, default_value_t = 1000)]
    pub n: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, value_enum)]
    pub method: MethodArg,
    /// Column index, or `all`.
    #[arg(long, default_value = "all")]
    pub feature: String,
    /// `fixed:K`, `greedy:I[:M]` or `dp:M[:min[:grid]]` (ALE takes fixed only).
    #[arg(long)]
    pub bins: Option<String>,
    #[arg(long)]
    pub grid_size: Option<usize>,
    /// Explain or average over a seeded subsample of this many rows.
    #[arg(long)]
    pub nof_instances: Option<usize>,
    /// Permutations per instance when Shapley values are sampled.
    #[arg(long)]
    pub permutations: Option<usize>,
    /// Indices of categorical columns.
    #[arg(long, value_delimiter = ',')]
    pub categorical: Vec<usize>,
    /// Ask an external model for jacobians instead of differencing.
    #[arg(long)]
    pub jacobian: bool,
    /// Seconds allowed per external request.
    #[arg(long, default_value_t = 60.0)]
    pub timeout: f64,
    #[arg(long, default_value_t = 4096)]
    pub batch_size: usize,
    #[arg(long, value_enum, default_value = "json")]
    pub format: Format,
    /// Output directory. Documents go to stdout when omitted.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args, Debug, Clone)]
pub struct RegionalArgs {
    #[command(flatten)]
    pub effect: EffectArgs,
    #[arg(long, default_value_t = 3)]
    pub max_depth: usize,
    /// Minimum relative heterogeneity drop to keep a level.
    #[arg(long, default_value_t = 0.1)]
    pub heter_drop: f64,
    /// Candidate thresholds per numeric column.
    #[arg(long, default_value_t = 11)]
    pub candidates: usize,
    #[arg(long)]
    pub min_cell_rows: Option<usize>,
    /// Also write the curve of these tree nodes.
    #[arg(long, value_delimiter = ',')]
    pub node_idx: Vec<usize>,
}

#[derive(Args, Debug, Clone)]
pub struct SyntheticArgs {
    pub name: String,
    #[arg(long, default_value_t = 1000)]
    pub n: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Output file; stdout when omitted.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args, Debug, Clone)]
pub struct ServeArgs {
    /// `synthetic:<name>`.
    #[arg(long)]
    pub model: String,
    /// Answer jacobian requests by finite differences.
    #[arg(long)]
    pub without_gradient: bool,
}
