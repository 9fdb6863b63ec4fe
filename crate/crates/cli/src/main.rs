use std::ffi::OsString;
use std::path::{Path, PathBuf};
use std::process;

use clap::{ArgAction, Args, Parser, Subcommand, ValueEnum};
use sparse_accel_core::dispatch::{EmptyBrickCost, SyncPolicy};
use sparse_accel_core::encodings::Format;
use sparse_accel_core::sim::{Arch, ProductScope, TileConfig};
use sparse_accel_core::sparsity::IneffCriterion;
use sparse_accel_core::tensor::Dims;
use sparse_accel_core::workloads::{gen_synthetic, SyntheticSpec};
use sparse_accel_sim::error::exit;
use sparse_accel_sim::report::{console_table, geomean_speedup, merged_csv, RunSettings};
use sparse_accel_sim::runner::{execute_all, thread_cap};
use sparse_accel_sim::{config, CliError, LayerFile, RunConfig, RunReport};

#[derive(Parser)]
#[command(name = "sparse-accel-sim", version, about = "Zero-skipping accelerator simulator")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Generate a synthetic layer file.
    #[command(args_override_self = true)]
    Gen(GenArgs),
    /// Simulate architectures on a layer and report cycles and MACs.
    #[command(args_override_self = true)]
    Run(Box<RunArgs>),
    /// Merge reports into one CSV with geometric-mean speedups.
    #[command(args_override_self = true)]
    Compare(CompareArgs),
}

#[derive(Args, Clone)]
struct SynthArgs {
    /// Input extents XxYxI.
    #[arg(long, default_value = "16x16x64", value_parser = parse_dims)]
    dims: (usize, usize, usize),
    /// Filter count and extents FxFXxFY.
    #[arg(long, default_value = "16x3x3", value_parser = parse_dims)]
    filters: (usize, usize, usize),
    /// Probability an activation is zero.
    #[arg(long, default_value_t = 0.5)]
    pa: f64,
    /// Probability a weight is zero.
    #[arg(long, default_value_t = 0.0)]
    pw: f64,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    #[arg(long, default_value_t = 1)]
    stride: usize,
    #[arg(long, default_value_t = 16)]
    brick: usize,
    /// Smallest nonzero value drawn.
    #[arg(long, default_value_t = -128, allow_negative_numbers = true)]
    min: i16,
    /// Largest nonzero value drawn.
    #[arg(long, default_value_t = 127, allow_negative_numbers = true)]
    max: i16,
}

impl SynthArgs {
    fn spec(&self) -> SyntheticSpec {
        let (x, y, i) = self.dims;
        let (f, fx, fy) = self.filters;
        SyntheticSpec {
            input: Dims::new(x, y, i),
            filters: f,
            filter_x: fx,
            filter_y: fy,
            stride: self.stride,
            brick: self.brick,
            act_sparsity: self.pa,
            weight_sparsity: self.pw,
            min: self.min,
            max: self.max,
            seed: self.seed,
        }
    }

    fn layer(&self) -> Result<LayerFile, CliError> {
        let (acts, filters) = gen_synthetic(&self.spec())?;
        Ok(LayerFile::new(acts, filters, self.stride, self.brick)?)
    }
}

#[derive(Args)]
struct GenArgs {
    #[command(flatten)]
    synth: SynthArgs,
    /// Output path; `.json` writes a fixture instead of a binary file.
    #[arg(short, long)]
    output: PathBuf,
    /// Flat key = value file of defaults for these flags.
    #[arg(long)]
    config: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum SyncArg {
    Lockstep,
    Window,
}

#[derive(Clone, Copy, ValueEnum)]
enum EmptyArg {
    Zero,
    One,
}

#[derive(Clone, Copy, ValueEnum)]
enum ScopeArg {
    All,
    Tile,
}

#[derive(Args)]
struct RunArgs {
    /// Layer files (`.layer` or `.layer.json`); synthetic flags apply when absent.
    #[arg(long, num_args = 1.., action = ArgAction::Set)]
    layer: Vec<PathBuf>,
    #[command(flatten)]
    synth: SynthArgs,
    /// Row label for a synthetic layer.
    #[arg(long, default_value = "synthetic")]
    name: String,
    /// Architectures to simulate.
    #[arg(long, action = ArgAction::Set, value_delimiter = ',', default_value = "baseline,cnv,cnv2", value_parser = parse_arch)]
    arch: Vec<Arch>,
    /// Activation criterion: zero, abs:T or pow2:K.
    #[arg(long, default_value = "zero", value_parser = parse_crit)]
    act_crit: IneffCriterion,
    /// Weight criterion for CNV².
    #[arg(long, default_value = "zero", value_parser = parse_crit)]
    weight_crit: IneffCriterion,
    /// Output encoding used for footprint accounting.
    #[arg(long, default_value = "zfnaf", value_parser = parse_format)]
    format: Format,
    #[arg(long)]
    tiles: Option<usize>,
    #[arg(long)]
    filters_per_tile: Option<usize>,
    #[arg(long)]
    lanes: Option<usize>,
    #[arg(long, value_enum, default_value = "lockstep")]
    sync: SyncArg,
    #[arg(long, value_enum, default_value = "zero")]
    empty_brick: EmptyArg,
    #[arg(long, value_enum, default_value = "all")]
    product_scope: ScopeArg,
    /// Idle cycles before the first bricks arrive, per dispatcher run.
    #[arg(long, default_value_t = 0)]
    fetch_latency: u32,
    #[arg(long)]
    json: Option<PathBuf>,
    #[arg(long)]
    csv: Option<PathBuf>,
    /// Dispatcher event trace of one pass (single layer only).
    #[arg(long)]
    trace: Option<PathBuf>,
    /// Architecture traced; defaults to cnv when selected, else cnv2.
    #[arg(long, value_parser = parse_arch)]
    trace_arch: Option<Arch>,
    /// Flat key = value file of defaults for these flags.
    #[arg(long)]
    config: Option<PathBuf>,
}

#[derive(Args)]
struct CompareArgs {
    /// JSON or CSV reports.
    #[arg(required = true, num_args = 1..)]
    reports: Vec<PathBuf>,
    /// Merged CSV path; printed to stdout when absent.
    #[arg(short, long)]
    output: Option<PathBuf>,
    #[arg(long)]
    config: Option<PathBuf>,
}

fn parse_dims(s: &str) -> Result<(usize, usize, usize), String> {
    let parts: Vec<&str> = s.split(['x', 'X']).collect();
    match parts.as_slice() {
        [a, b, c] => {
            let n = |p: &str| p.trim().parse::<usize>().map_err(|_| format!("'{s}': '{p}' is not a count"));
            Ok((n(a)?, n(b)?, n(c)?))
        }
        _ => Err(format!("'{s}': expected AxBxC")),
    }
}

fn parse_arch(s: &str) -> Result<Arch, String> {
    s.parse().map_err(|e: sparse_accel_core::Error| e.to_string())
}

fn parse_crit(s: &str) -> Result<IneffCriterion, String> {
    s.parse().map_err(|e: sparse_accel_core::Error| e.to_string())
}

fn parse_format(s: &str) -> Result<Format, String> {
    match s.parse::<Format>() {
        Ok(Format::Raw) => Err("footprint format must be zfnaf, roe, viai or cviai".into()),
        Ok(f) => Ok(f),
        Err(e) => Err(e.to_string()),
    }
}

fn layer_name(path: &Path) -> String {
    let name = path.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
    for suffix in [".layer.json", ".json", ".layer"] {
        if let Some(stem) = name.strip_suffix(suffix) {
            return stem.to_owned();
        }
    }
    name
}

fn cmd_gen(args: &GenArgs) -> Result<i32, CliError> {
    let file = args.synth.layer()?;
    file.save(&args.output).map_err(|e| match e {
        sparse_accel_sim::LayerFileError::Io { source, .. } => CliError::io(&args.output, source),
        other => other.into(),
    })?;
    let zeros = |v: &[i16]| v.iter().filter(|&&x| x == 0).count();
    let acts = file.acts.logical_values();
    let weights = file.filters.logical_values();
    let (x, y, i) = args.synth.dims;
    let (f, fx, fy) = args.synth.filters;
    println!("wrote {}", args.output.display());
    println!("activations {x}x{y}x{i}: {} of {} zero ({:.2}%)", zeros(&acts), acts.len(), percent(zeros(&acts), acts.len()));
    println!(
        "weights {f}x{fx}x{fy}x{i}: {} of {} zero ({:.2}%)",
        zeros(&weights),
        weights.len(),
        percent(zeros(&weights), weights.len())
    );
    Ok(exit::OK)
}

fn percent(part: usize, whole: usize) -> f64 {
    if whole == 0 {
        0.0
    } else {
        100.0 * part as f64 / whole as f64
    }
}

fn tile_for(args: &RunArgs, layer: &LayerFile) -> TileConfig {
    let defaults = TileConfig::default();
    TileConfig {
        tiles: args.tiles.or(layer.tile.tiles).unwrap_or(defaults.tiles),
        filters_per_tile: args
            .filters_per_tile
            .or(layer.tile.filters_per_tile)
            .unwrap_or(defaults.filters_per_tile),
        lanes: args.lanes.or(layer.tile.lanes).unwrap_or(defaults.lanes),
        brick: layer.brick,
        sync: match args.sync {
            SyncArg::Lockstep => SyncPolicy::BricksetLockstep,
            SyncArg::Window => SyncPolicy::WindowSync,
        },
        empty_brick: match args.empty_brick {
            EmptyArg::Zero => EmptyBrickCost::ZeroCycles,
            EmptyArg::One => EmptyBrickCost::OneCycle,
        },
        product_scope: match args.product_scope {
            ScopeArg::All => ProductScope::AllResident,
            ScopeArg::Tile => ProductScope::PerTile,
        },
        fetch_latency: args.fetch_latency,
        output_format: args.format,
        ..defaults
    }
}

fn cmd_run(args: &RunArgs) -> Result<i32, CliError> {
    let layers: Vec<(String, LayerFile)> = if args.layer.is_empty() {
        vec![(args.name.clone(), args.synth.layer()?)]
    } else {
        args.layer
            .iter()
            .map(|p| Ok((layer_name(p), LayerFile::load(p)?)))
            .collect::<Result<_, CliError>>()?
    };
    let mut archs = Vec::new();
    for a in &args.arch {
        if !archs.contains(a) {
            archs.push(*a);
        }
    }
    let configs: Vec<RunConfig> = layers
        .into_iter()
        .map(|(name, layer)| RunConfig {
            tile: tile_for(args, &layer),
            name,
            layer,
            archs: archs.clone(),
            act_crit: args.act_crit,
            weight_crit: args.weight_crit,
        })
        .collect();
    for c in &configs {
        c.validate()?;
    }
    if let Some(path) = &args.trace {
        let [config] = configs.as_slice() else {
            return Err(CliError::Input("--trace needs exactly one layer".into()));
        };
        let arch = args
            .trace_arch
            .unwrap_or(if archs.contains(&Arch::Cnv) { Arch::Cnv } else { Arch::Cnv2 });
        config.write_trace(arch, path)?;
    }
    let rows = execute_all(&configs)?;
    let t = &configs[0].tile;
    let settings = RunSettings {
        tiles: t.tiles,
        filters_per_tile: t.filters_per_tile,
        lanes: t.lanes,
        sync: match t.sync {
            SyncPolicy::BricksetLockstep => "lockstep",
            SyncPolicy::WindowSync => "window",
        }
        .into(),
        empty_brick: match t.empty_brick {
            EmptyBrickCost::ZeroCycles => "zero",
            EmptyBrickCost::OneCycle => "one",
        }
        .into(),
        product_scope: match t.product_scope {
            ProductScope::AllResident => "all",
            ProductScope::PerTile => "tile",
        }
        .into(),
        act_crit: args.act_crit.to_string(),
        weight_crit: args.weight_crit.to_string(),
        format: args.format.to_string(),
    };
    let report = RunReport::new(Some(settings), rows);
    print!("{}", console_table(&report.rows));
    if let Some(path) = &args.json {
        report.write_json(path)?;
    }
    if let Some(path) = &args.csv {
        report.write_csv(path)?;
    }
    if !report.all_pass() {
        let failed: Vec<String> = report
            .rows
            .iter()
            .filter(|r| r.verdict != sparse_accel_sim::Verdict::Pass)
            .map(|r| format!("{}/{}", r.layer, r.arch))
            .collect();
        return Err(CliError::Equivalence(failed.join(", ")));
    }
    Ok(exit::OK)
}

fn cmd_compare(args: &CompareArgs) -> Result<i32, CliError> {
    let reports: Vec<RunReport> = args.reports.iter().map(|p| RunReport::load(p)).collect::<Result<_, _>>()?;
    let merged = merged_csv(&reports);
    match &args.output {
        Some(path) => {
            sparse_accel_sim::atomic::write_atomic(path, merged.as_bytes()).map_err(|e| CliError::io(path, e))?;
            let rows: Vec<_> = reports.iter().flat_map(|r| r.rows.iter()).collect();
            for arch in Arch::ALL {
                if let Some(g) = geomean_speedup(rows.iter().copied(), arch.name()) {
                    println!("{arch}: geomean speedup {g:.4} over {} rows", rows.iter().filter(|r| r.arch == arch.name()).count());
                }
            }
        }
        None => print!("{merged}"),
    }
    Ok(exit::OK)
}

fn with_config(args: Vec<OsString>) -> Result<Vec<OsString>, CliError> {
    let Some(path) = config::find_config_arg(&args) else {
        return Ok(args);
    };
    let Some(at) = args
        .iter()
        .position(|a| matches!(a.to_str(), Some("gen" | "run" | "compare")))
    else {
        return Ok(args);
    };
    let entries = config::load(Path::new(&path))?;
    Ok(config::splice(&args, at, &entries))
}

fn real_main() -> Result<i32, CliError> {
    let args = with_config(std::env::args_os().collect())?;
    let cli = Cli::try_parse_from(args).unwrap_or_else(|e| e.exit());
    if let Some(n) = thread_cap()? {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| CliError::Input(e.to_string()))?;
    }
    match &cli.cmd {
        Cmd::Gen(a) => cmd_gen(a),
        Cmd::Run(a) => cmd_run(a),
        Cmd::Compare(a) => cmd_compare(a),
    }
}

fn main() {
    let code = match real_main() {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    };
    process::exit(code);
}
