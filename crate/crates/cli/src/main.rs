//! `chromaq`: color quantization, flagging and corpus triage from the shell.
//!
//! Exit codes: 0 success, 1 usage error, 2 input error, 3 internal
//! invariant failure. Machine-readable output goes to stdout (or `--out`);
//! diagnostics go to stderr.

mod config;
mod plot;

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::Context;
use chromaq::corpus::{self, AnalysisConfig, ClusterAssignment, Report, SampleStrategy};
use chromaq::forensics::{self, ForensicsConfig, RegionSpec};
use chromaq::monk::{self, Halfwidths, MonkScaleConfig};
use chromaq::quantize::{self, kmeans_palette, Palette, QuantizeConfig};
use chromaq::symbol::{self, SymbolConfig, SymbolSignature};
use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use crate::config::{pick, FileConfig, CONFIG_ENV};
use crate::plot::PlotSpace;

#[derive(Debug, Parser)]
#[command(
    name = "chromaq",
    version,
    about = "HSV k-means palettes, skin-tone and symbol flags, region forensics and corpus triage"
)]
struct Cli {
    /// TOML settings file; flags override it, it overrides built-in defaults.
    #[arg(long, global = true, env = CONFIG_ENV)]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Quantize one image: palette JSON, swatch PNG and scatter SVG.
    Quantize(QuantizeArgs),
    /// Flag probable human subjects by Monk Skin Tone band coverage.
    FlagSkin(FlagSkinArgs),
    /// Match symbol signatures from a symbol database against one image.
    MatchSymbol(MatchSymbolArgs),
    /// Compare the color distributions of two regions of one image.
    Forensics(ForensicsArgs),
    /// Batch operations over image directories and scan reports.
    #[command(subcommand)]
    Corpus(CorpusCommand),
}

#[derive(Debug, Args)]
struct QuantOpts {
    /// Cluster count [default: 5]
    #[arg(short, long)]
    k: Option<usize>,
    /// PRNG seed for k-means++ seeding [default: 0]
    #[arg(long)]
    seed: Option<u64>,
    /// Subsampling cap on pixels fed to k-means [default: 100000]
    #[arg(long)]
    max_pixels: Option<usize>,
}

#[derive(Debug, Args)]
struct MonkOpts {
    /// Flag threshold on matched pixel fraction, in (0, 1] [default: 0.05]
    #[arg(long)]
    tau: Option<f64>,
    /// Band table file (tone_id hex [h s v]) [default: bundled Monk scale]
    #[arg(long)]
    monk_scale: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
enum Format {
    Json,
    Csv,
    Svg,
    Png,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
enum SummaryFormat {
    Json,
    Csv,
}

#[derive(Debug, Args)]
struct QuantizeArgs {
    /// Image file (PNG, JPEG, GIF, BMP or WebP)
    image: PathBuf,
    #[command(flatten)]
    quant: QuantOpts,
    #[command(flatten)]
    monk: MonkOpts,
    /// Space of the scatter plot; the palette is always fit in HSV
    #[arg(long, value_enum, default_value = "hsv")]
    space: PlotSpace,
    /// Directory for the output files
    #[arg(long, default_value = ".")]
    out_dir: PathBuf,
    /// Files to write: json or csv (palette), png (swatch), svg (scatter)
    #[arg(
        long,
        value_enum,
        value_delimiter = ',',
        default_value = "json,png,svg"
    )]
    format: Vec<Format>,
}

#[derive(Debug, Args)]
struct FlagSkinArgs {
    /// Image file (PNG, JPEG, GIF, BMP or WebP)
    image: PathBuf,
    #[command(flatten)]
    quant: QuantOpts,
    #[command(flatten)]
    monk: MonkOpts,
    /// Write output here instead of stdout
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct SymbolOpts {
    /// Symbol database directory containing symbols.toml
    #[arg(long)]
    symbols: Option<PathBuf>,
    /// Cosine similarity threshold for a tile match [default: 0.9]
    #[arg(long)]
    theta: Option<f64>,
    /// Tile edge in pixels [default: max(32, min(width, height) / 8)]
    #[arg(long)]
    tile_size: Option<u32>,
}

#[derive(Debug, Args)]
struct MatchSymbolArgs {
    /// Image file (PNG, JPEG, GIF, BMP or WebP)
    image: PathBuf,
    #[command(flatten)]
    quant: QuantOpts,
    #[command(flatten)]
    symbol: SymbolOpts,
    /// Include every (tile, symbol) score, not only the matched tiles
    #[arg(long)]
    all_tiles: bool,
    /// Write output here instead of stdout
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct ForensicsArgs {
    /// Image file (PNG, JPEG, GIF, BMP or WebP)
    image: PathBuf,
    /// First region as x,y,w,h
    #[arg(long)]
    region_a: RegionSpec,
    /// Second region as x,y,w,h
    #[arg(long)]
    region_b: RegionSpec,
    /// Cluster count per region [default: 4]
    #[arg(short, long)]
    k: Option<usize>,
    /// Transport distance above which regions are inconsistent [default: 0.25]
    #[arg(long)]
    delta: Option<f64>,
    /// PRNG seed [default: 0]
    #[arg(long)]
    seed: Option<u64>,
    /// Write output here instead of stdout
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
enum CorpusCommand {
    /// Analyze every image under a directory into a JSON report.
    Scan(ScanArgs),
    /// Group scanned images by palette similarity (k-medoids).
    Cluster(ClusterArgs),
    /// Draw a sample of image paths for human coders.
    Sample(SampleArgs),
    /// Descriptive statistics of a report, as JSON or CSV.
    Summarize(SummarizeArgs),
    /// Confusion counts of the flags against a labels CSV.
    Evaluate(EvaluateArgs),
}

#[derive(Debug, Args)]
struct ScanArgs {
    /// Directory scanned recursively for images
    dir: PathBuf,
    #[command(flatten)]
    quant: QuantOpts,
    #[command(flatten)]
    monk: MonkOpts,
    #[command(flatten)]
    symbol: SymbolOpts,
    /// Worker threads [default: 1]
    #[arg(long)]
    workers: Option<usize>,
    /// Write output here instead of stdout
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct ClusterArgs {
    /// Report written by `corpus scan`
    #[arg(long)]
    report: PathBuf,
    /// Group count [default: 4]
    #[arg(short, long)]
    groups: Option<usize>,
    /// Seed for BUILD tie-breaking [default: 0]
    #[arg(long)]
    seed: Option<u64>,
    /// Write output here instead of stdout
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct SampleArgs {
    /// Report written by `corpus scan`
    #[arg(long)]
    report: PathBuf,
    /// Sample size
    #[arg(short)]
    n: usize,
    /// uniform | stratified-cluster | flagged-only
    #[arg(long, value_parser = parse_strategy, default_value = "uniform")]
    strategy: SampleStrategy,
    /// Cluster assignment from `corpus cluster`; computed on the fly when absent
    #[arg(long)]
    clusters: Option<PathBuf>,
    /// Group count when clustering on the fly [default: 4, capped at the image count]
    #[arg(short, long)]
    groups: Option<usize>,
    /// Sampling seed [default: 0]
    #[arg(long)]
    seed: Option<u64>,
    /// Write output here instead of stdout
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct SummarizeArgs {
    /// Report written by `corpus scan`
    #[arg(long)]
    report: PathBuf,
    /// Output format
    #[arg(long, value_enum, default_value = "json")]
    format: SummaryFormat,
    /// Write output here instead of stdout
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct EvaluateArgs {
    /// Report written by `corpus scan`
    #[arg(long)]
    report: PathBuf,
    /// CSV with header path,task,label (task: skin | symbol)
    #[arg(long)]
    labels: PathBuf,
    /// Write output here instead of stdout
    #[arg(long)]
    out: Option<PathBuf>,
}

fn parse_strategy(s: &str) -> Result<SampleStrategy, String> {
    s.parse().map_err(|e: chromaq::Error| e.to_string())
}

/// A failure carrying its exit code.
struct Failure {
    code: u8,
    error: anyhow::Error,
}

impl Failure {
    fn usage(error: impl Into<anyhow::Error>) -> Self {
        Self {
            code: 1,
            error: error.into(),
        }
    }

    fn input(error: impl Into<anyhow::Error>) -> Self {
        Self {
            code: 2,
            error: error.into(),
        }
    }
}

impl From<chromaq::Error> for Failure {
    fn from(e: chromaq::Error) -> Self {
        use chromaq::Error::*;
        let code = match e {
            InvalidConfig(_)
            | SampleTooLarge { .. }
            | OutOfBounds { .. }
            | RegionTooSmall { .. }
            | TooFewImages { .. } => 1,
            _ => 2,
        };
        Self {
            code,
            error: e.into(),
        }
    }
}

type CliResult<T = ()> = Result<T, Failure>;

fn read_input(path: &Path) -> CliResult<Vec<u8>> {
    fs::read(path)
        .with_context(|| format!("reading {}", path.display()))
        .map_err(Failure::input)
}

fn emit(out: Option<&Path>, text: &str) -> CliResult {
    match out {
        Some(path) => {
            if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
                fs::create_dir_all(parent).map_err(Failure::input)?;
            }
            fs::write(path, text)
                .with_context(|| format!("writing {}", path.display()))
                .map_err(Failure::input)
        }
        None => {
            let mut stdout = std::io::stdout().lock();
            stdout.write_all(text.as_bytes()).map_err(Failure::input)?;
            stdout.flush().map_err(Failure::input)
        }
    }
}

fn to_json<T: Serialize>(value: &T) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("output serializes");
    s.push('\n');
    s
}

fn quantize_config(opts: &QuantOpts, file: &FileConfig) -> CliResult<QuantizeConfig> {
    let d = QuantizeConfig::default();
    let cfg = QuantizeConfig {
        k: pick(opts.k, file.k, d.k),
        seed: pick(opts.seed, file.seed, d.seed),
        max_pixels: pick(opts.max_pixels, file.max_pixels, d.max_pixels),
        ..d
    };
    cfg.validate()?;
    Ok(cfg)
}

fn monk_config(opts: &MonkOpts, file: &FileConfig) -> CliResult<MonkScaleConfig> {
    let tau = pick(opts.tau, file.tau, MonkScaleConfig::default().tau);
    let path = opts.monk_scale.clone().or_else(|| file.monk_scale.clone());
    let scale = match path {
        Some(p) => {
            let text = fs::read_to_string(&p)
                .with_context(|| format!("reading {}", p.display()))
                .map_err(Failure::input)?;
            MonkScaleConfig::parse(&text, Halfwidths::default(), tau).map_err(|e| match e {
                chromaq::Error::InvalidConfig(_) if !(tau > 0.0 && tau <= 1.0) => Failure::from(e),
                other => Failure::input(other),
            })?
        }
        None => MonkScaleConfig::default().with_tau(tau)?,
    };
    Ok(scale)
}

fn symbol_setup(
    opts: &SymbolOpts,
    file: &FileConfig,
    quant: &QuantizeConfig,
) -> CliResult<(Vec<SymbolSignature>, SymbolConfig)> {
    let theta = pick(opts.theta, file.theta, symbol::DEFAULT_THETA);
    if !(-1.0..=1.0).contains(&theta) {
        return Err(Failure::usage(anyhow::anyhow!(
            "--theta must lie in [-1, 1]"
        )));
    }
    if opts.tile_size == Some(0) {
        return Err(Failure::usage(anyhow::anyhow!(
            "--tile-size must be positive"
        )));
    }
    let cfg = SymbolConfig {
        theta,
        tile_size: opts.tile_size,
    };
    let dir = opts.symbols.clone().or_else(|| file.symbols.clone());
    let sigs = match dir {
        Some(d) => symbol::load_symbol_database(&d, quant).map_err(Failure::input)?,
        None => Vec::new(),
    };
    Ok((sigs, cfg))
}

fn load_report(path: &Path) -> CliResult<Report> {
    let text = fs::read_to_string(path)
        .with_context(|| format!("reading {}", path.display()))
        .map_err(Failure::input)?;
    Report::from_json(&text).map_err(Failure::input)
}

#[derive(Serialize)]
struct PaletteEntryDoc {
    hex: String,
    h: f64,
    s: f64,
    v: f64,
    weight: f64,
    monk_tone: Option<u8>,
}

#[derive(Serialize)]
struct PaletteDoc<'a> {
    source: &'a str,
    k: usize,
    seed: u64,
    effective_k: usize,
    entries: Vec<PaletteEntryDoc>,
}

fn palette_doc<'a>(
    source: &'a str,
    cfg: &QuantizeConfig,
    palette: &Palette,
    scale: &MonkScaleConfig,
) -> PaletteDoc<'a> {
    let tones = monk::palette_band_matches(palette, scale);
    PaletteDoc {
        source,
        k: cfg.k,
        seed: cfg.seed,
        effective_k: palette.effective_k,
        entries: palette
            .entries
            .iter()
            .zip(tones)
            .map(|(e, monk_tone)| PaletteEntryDoc {
                hex: e.rgb().to_hex(),
                h: e.centroid.h,
                s: e.centroid.s,
                v: e.centroid.v,
                weight: e.weight,
                monk_tone,
            })
            .collect(),
    }
}

fn palette_csv(doc: &PaletteDoc) -> String {
    let mut out = String::from("hex,h,s,v,weight,monk_tone\n");
    for e in &doc.entries {
        let tone = e.monk_tone.map(|t| t.to_string()).unwrap_or_default();
        out.push_str(&format!(
            "{},{},{},{},{},{tone}\n",
            e.hex, e.h, e.s, e.v, e.weight
        ));
    }
    out
}

fn cmd_quantize(args: &QuantizeArgs, file: &FileConfig) -> CliResult {
    let cfg = quantize_config(&args.quant, file)?;
    let scale = monk_config(&args.monk, file)?;
    let bytes = read_input(&args.image)?;
    let cloud = quantize::load_pixels(&bytes, &cfg)?;
    let palette = kmeans_palette(&cloud, &cfg)?;
    let source = args
        .image
        .file_name()
        .and_then(|s| s.to_str())
        .unwrap_or("image");
    let stem = args
        .image
        .file_stem()
        .and_then(|s| s.to_str())
        .unwrap_or("image");
    let doc = palette_doc(source, &cfg, &palette, &scale);
    let json = to_json(&doc);

    fs::create_dir_all(&args.out_dir).map_err(Failure::input)?;
    let out = |ext: &str| args.out_dir.join(format!("{stem}.{ext}"));
    if args.format.contains(&Format::Json) {
        emit(Some(&out("palette.json")), &json)?;
    }
    if args.format.contains(&Format::Csv) {
        emit(Some(&out("palette.csv")), &palette_csv(&doc))?;
    }
    if args.format.contains(&Format::Png) {
        let marks: Vec<bool> = monk::palette_band_matches(&palette, &scale)
            .iter()
            .map(Option::is_some)
            .collect();
        plot::swatch(&palette, &marks)
            .save(out("swatch.png"))
            .context("writing swatch")
            .map_err(Failure::input)?;
    }
    if args.format.contains(&Format::Svg) {
        emit(
            Some(&out("scatter.svg")),
            &plot::scatter_svg(&cloud.pixels, &palette, args.space),
        )?;
    }
    emit(None, &json)
}

#[derive(Serialize)]
struct SkinDoc {
    #[serde(flatten)]
    report: monk::SkinFlagReport,
    /// Monk tone of each palette centroid, heaviest first.
    palette_tones: Vec<Option<u8>>,
}

fn cmd_flag_skin(args: &FlagSkinArgs, file: &FileConfig) -> CliResult {
    let cfg = quantize_config(&args.quant, file)?;
    let scale = monk_config(&args.monk, file)?;
    let cloud = quantize::load_pixels(&read_input(&args.image)?, &cfg)?;
    let report = monk::flag_skin(&cloud, &scale);
    let palette = kmeans_palette(&cloud, &cfg)?;
    let doc = SkinDoc {
        report,
        palette_tones: monk::palette_band_matches(&palette, &scale),
    };
    emit(args.out.as_deref(), &to_json(&doc))
}

fn cmd_match_symbol(args: &MatchSymbolArgs, file: &FileConfig) -> CliResult {
    let cfg = quantize_config(&args.quant, file)?;
    let (sigs, symbol_cfg) = symbol_setup(&args.symbol, file, &cfg)?;
    if sigs.is_empty() {
        return Err(Failure::usage(anyhow::anyhow!(
            "--symbols must name a database with at least one symbol"
        )));
    }
    let mut scan = symbol::match_symbols(&read_input(&args.image)?, &sigs, &symbol_cfg)?;
    if !args.all_tiles {
        scan.matches.retain(|m| m.matched);
    }
    emit(args.out.as_deref(), &to_json(&scan))
}

fn cmd_forensics(args: &ForensicsArgs, file: &FileConfig) -> CliResult {
    let d = ForensicsConfig::default();
    let cfg = ForensicsConfig {
        delta: pick(args.delta, file.delta, d.delta),
        quantize: QuantizeConfig {
            k: pick(args.k, file.region_k, d.quantize.k),
            seed: pick(args.seed, file.seed, d.quantize.seed),
            ..d.quantize
        },
    };
    cfg.quantize.validate()?;
    if cfg.delta.is_nan() || cfg.delta <= 0.0 {
        return Err(Failure::usage(anyhow::anyhow!("--delta must be positive")));
    }
    let img = quantize::decode_image(&read_input(&args.image)?)?;
    let report = forensics::compare_regions_image(&img, &args.region_a, &args.region_b, &cfg)?;
    emit(args.out.as_deref(), &to_json(&report))
}

fn cmd_scan(args: &ScanArgs, file: &FileConfig) -> CliResult {
    let quantize = quantize_config(&args.quant, file)?;
    let monk = monk_config(&args.monk, file)?;
    let (signatures, symbol) = symbol_setup(&args.symbol, file, &quantize)?;
    let workers = pick(args.workers, file.workers, 1);
    if workers == 0 {
        return Err(Failure::usage(anyhow::anyhow!(
            "--workers must be at least 1"
        )));
    }
    let cfg = AnalysisConfig {
        quantize,
        monk,
        signatures,
        symbol,
        workers,
    };
    let records = corpus::scan(&args.dir, &cfg)?;
    let failed = records.iter().filter(|r| !r.is_ok()).count();
    log::info!("scanned {} images, {failed} failed", records.len());
    emit(args.out.as_deref(), &Report::new(records).to_json())
}

fn cmd_cluster(args: &ClusterArgs, file: &FileConfig) -> CliResult {
    let report = load_report(&args.report)?;
    let g = pick(args.groups, file.groups, 4);
    let seed = pick(args.seed, file.seed, 0);
    let assignment = corpus::cluster_corpus(&report.records, g, seed)?;
    emit(args.out.as_deref(), &to_json(&assignment))
}

fn cmd_sample(args: &SampleArgs, file: &FileConfig) -> CliResult {
    let report = load_report(&args.report)?;
    let seed = pick(args.seed, file.seed, 0);
    let assignment: Option<ClusterAssignment> = match (&args.clusters, args.strategy) {
        (Some(path), _) => {
            let text = fs::read_to_string(path)
                .with_context(|| format!("reading {}", path.display()))
                .map_err(Failure::input)?;
            Some(
                serde_json::from_str(&text)
                    .context("parsing cluster assignment")
                    .map_err(Failure::input)?,
            )
        }
        (None, SampleStrategy::StratifiedCluster) => {
            let n_ok = report.records.iter().filter(|r| r.is_ok()).count();
            let g = pick(args.groups, file.groups, 4).min(n_ok).max(1);
            Some(corpus::cluster_corpus(&report.records, g, seed)?)
        }
        (None, _) => None,
    };
    let sample = corpus::sample(
        &report.records,
        assignment.as_ref(),
        args.n,
        args.strategy,
        seed,
    )?;
    for w in &sample.warnings {
        log::warn!("{w}");
    }
    emit(args.out.as_deref(), &to_json(&sample))
}

fn cmd_summarize(args: &SummarizeArgs) -> CliResult {
    let report = load_report(&args.report)?;
    let summary = corpus::summarize(&report.records);
    let text = match args.format {
        SummaryFormat::Json => to_json(&summary),
        SummaryFormat::Csv => summary.to_csv(),
    };
    emit(args.out.as_deref(), &text)
}

fn cmd_evaluate(args: &EvaluateArgs) -> CliResult {
    let report = load_report(&args.report)?;
    let labels_file = fs::File::open(&args.labels)
        .with_context(|| format!("opening {}", args.labels.display()))
        .map_err(Failure::input)?;
    let labels = corpus::parse_labels(labels_file)?;
    let eval = corpus::evaluate(&report.records, &labels);
    if eval.unmatched > 0 {
        log::warn!(
            "{} label rows name images absent from the report",
            eval.unmatched
        );
    }
    emit(args.out.as_deref(), &to_json(&eval))
}

fn run(cli: &Cli) -> CliResult {
    let file = match &cli.config {
        Some(path) => FileConfig::load(path).map_err(Failure::usage)?,
        None => FileConfig::default(),
    };
    match &cli.command {
        Command::Quantize(a) => cmd_quantize(a, &file),
        Command::FlagSkin(a) => cmd_flag_skin(a, &file),
        Command::MatchSymbol(a) => cmd_match_symbol(a, &file),
        Command::Forensics(a) => cmd_forensics(a, &file),
        Command::Corpus(c) => match c {
            CorpusCommand::Scan(a) => cmd_scan(a, &file),
            CorpusCommand::Cluster(a) => cmd_cluster(a, &file),
            CorpusCommand::Sample(a) => cmd_sample(a, &file),
            CorpusCommand::Summarize(a) => cmd_summarize(a),
            CorpusCommand::Evaluate(a) => cmd_evaluate(a),
        },
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match std::panic::catch_unwind(|| run(&cli)) {
        Ok(Ok(())) => ExitCode::SUCCESS,
        Ok(Err(f)) => {
            eprintln!("error: {:#}", f.error);
            ExitCode::from(f.code)
        }
        Err(_) => {
            eprintln!("error: internal invariant failure");
            ExitCode::from(3)
        }
    }
}
