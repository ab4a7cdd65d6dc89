use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use anyhow::{anyhow, bail, Context};
use clap::{Parser, Subcommand, ValueEnum};
use colorgpt::bench::{
    case_seed, completion_exemplars, emit_ablation, emit_report, generation_exemplars, ingest_completion_corpus,
    ingest_pat, AppConfig, BenchError, Harness, ReportFormat,
};
use colorgpt::extract::{extract_palette, PixelGrid};
use colorgpt::llm::LlmError;
use colorgpt::metrics::MetricsReport;
use colorgpt::pipeline::PipelineError;
use colorgpt::{Color, ColorCodec, Document, ExemplarIndex, Representation};
use colorgpt_service::ServiceState;
use serde_json::{json, Value};
use tracing::info;

#[derive(Parser)]
#[command(
    name = "colorgpt",
    version,
    about = "Palette completion and generation with language models"
)]
struct Cli {
    /// TOML or JSON configuration file.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Concurrent benchmark cases.
    #[arg(long, global = true)]
    parallel: Option<usize>,
    /// Append every provider exchange to this JSONL file.
    #[arg(long, global = true)]
    record: Option<PathBuf>,
    /// Answer provider calls from a recording instead of the network.
    #[arg(long, global = true)]
    replay: Option<PathBuf>,
    #[arg(long, global = true)]
    color_dict: Option<PathBuf>,
    /// More logging; repeat for debug output.
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum TaskArg {
    Completion,
    Generation,
}

#[derive(Clone, Copy, PartialEq, ValueEnum)]
enum FormatArg {
    Json,
    Csv,
    Html,
}

impl From<FormatArg> for ReportFormat {
    fn from(f: FormatArg) -> Self {
        match f {
            FormatArg::Json => ReportFormat::Json,
            FormatArg::Csv => ReportFormat::Csv,
            FormatArg::Html => ReportFormat::Html,
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Print a color in every representation, or only in `--to`.
    ConvertColor {
        /// `#rrggbb`, a dictionary word, or a JSON `[r, g, b]` triplet.
        color: String,
        #[arg(long)]
        to: Option<String>,
    },
    /// Print the dominant colors of a PNG or BMP image.
    ExtractPalette {
        image: PathBuf,
        #[arg(long, default_value_t = 5)]
        max_colors: usize,
    },
    /// Mask `k` colors of a document and print the masked document and record.
    Mask {
        document: PathBuf,
        #[arg(long, value_parser = clap::value_parser!(u64).range(1..=3))]
        k: u64,
    },
    /// Embed the training split and save an exemplar index.
    BuildIndex {
        #[arg(long, value_enum)]
        task: TaskArg,
        #[arg(long)]
        out: PathBuf,
    },
    /// Suggest colors for the masked slots of a document.
    Complete { document: PathBuf },
    /// Generate a five-color palette for a description.
    Generate { text: String },
    EvalCompletion {
        /// Report directory; defaults to the configured output_dir.
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long, value_enum, value_delimiter = ',', default_values = ["json", "csv", "html"])]
        format: Vec<FormatArg>,
    },
    EvalGeneration {
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long, value_enum, value_delimiter = ',', default_values = ["json", "csv", "html"])]
        format: Vec<FormatArg>,
    },
    /// Run every configured ablation arm.
    Ablation {
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long, value_enum, value_delimiter = ',', default_values = ["json", "csv"])]
        format: Vec<FormatArg>,
    },
    /// Serve the HTTP API.
    Serve {
        #[arg(long)]
        port: Option<u16>,
    },
    /// Re-emit report files from a saved report.json.
    Report {
        report: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long, value_enum, value_delimiter = ',', default_values = ["csv", "html"])]
        format: Vec<FormatArg>,
    },
}

/// Raised after report files are written when some cases failed at the provider.
#[derive(Debug)]
struct Incomplete;

impl std::fmt::Display for Incomplete {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str("run is incomplete: some cases failed at the provider")
    }
}

impl std::error::Error for Incomplete {}

fn exit_code(e: &anyhow::Error) -> u8 {
    if e.downcast_ref::<Incomplete>().is_some() {
        return 4;
    }
    let provider = |p: &PipelineError| matches!(p, PipelineError::Provider(_) | PipelineError::Reply { .. });
    for cause in e.chain() {
        if let Some(b) = cause.downcast_ref::<BenchError>() {
            return match b {
                BenchError::Llm(l) if l.is_provider_failure() => 3,
                BenchError::Case { source, .. } if provider(source) => 3,
                _ => 2,
            };
        }
        if let Some(p) = cause.downcast_ref::<PipelineError>() {
            return if provider(p) { 3 } else { 2 };
        }
        if cause
            .downcast_ref::<LlmError>()
            .is_some_and(LlmError::is_provider_failure)
        {
            return 3;
        }
    }
    2
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => tracing::Level::WARN,
        1 => tracing::Level::INFO,
        _ => tracing::Level::DEBUG,
    };
    tracing_subscriber::fmt()
        .with_max_level(level)
        .with_writer(std::io::stderr)
        .init();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}", describe(&e));
            ExitCode::from(exit_code(&e))
        }
    }
}

/// The error chain, skipping causes already quoted by the message above them.
fn describe(e: &anyhow::Error) -> String {
    let mut out = e.to_string();
    for cause in e.chain().skip(1) {
        let text = cause.to_string();
        if !out.contains(&text) {
            out.push_str(": ");
            out.push_str(&text);
        }
    }
    out
}

fn load_config(cli: &Cli) -> anyhow::Result<AppConfig> {
    let mut cfg = match &cli.config {
        Some(path) => AppConfig::load(path)?,
        None => AppConfig::default(),
    };
    if let Some(s) = cli.seed {
        cfg.seed = s;
    }
    if let Some(p) = cli.parallel {
        cfg.parallel = p;
    }
    if let Some(p) = &cli.record {
        cfg.record = Some(p.clone());
    }
    if let Some(p) = &cli.replay {
        cfg.replay = Some(p.clone());
    }
    if let Some(p) = &cli.color_dict {
        cfg.color_dict = p.clone();
    }
    cfg.llm.apply_env();
    cfg.validate()?;
    Ok(cfg)
}

fn print_json(v: &Value) {
    println!("{}", serde_json::to_string_pretty(v).expect("json value serializes"));
}

fn read_document(path: &Path) -> anyhow::Result<Document> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    Document::from_json_str(&text).with_context(|| format!("parsing {}", path.display()))
}

fn formats(f: &[FormatArg]) -> Vec<ReportFormat> {
    f.iter().map(|&f| f.into()).collect()
}

fn report_written(written: &[PathBuf]) {
    for p in written {
        println!("{}", p.display());
    }
}

fn run(cli: Cli) -> anyhow::Result<()> {
    let cfg = load_config(&cli)?;
    match cli.command {
        Command::ConvertColor { color, to } => convert_color(&cfg, &color, to.as_deref()),
        Command::ExtractPalette { image, max_colors } => {
            let grid = PixelGrid::open(&image)?;
            let palette = extract_palette(&grid, max_colors)?;
            let hex: Vec<String> = palette.filled().map(Color::to_hex).collect();
            print_json(&json!(hex));
            Ok(())
        }
        Command::Mask { document, k } => {
            let doc = read_document(&document)?;
            let seed = case_seed(cfg.seed, &doc.id, k as usize);
            let (masked, record) = doc.mask(k as usize, seed)?;
            print_json(&json!({
                "document": masked.to_value(&ColorCodec::hex())?,
                "record": record,
            }));
            Ok(())
        }
        Command::BuildIndex { task, out } => {
            let harness = Harness::new(cfg)?;
            let exemplars = match task {
                TaskArg::Completion => {
                    let c = &harness.config.completion;
                    let corpus = c
                        .corpus
                        .as_deref()
                        .ok_or_else(|| anyhow!("completion.corpus is not set"))?;
                    let splits = c
                        .splits
                        .as_deref()
                        .ok_or_else(|| anyhow!("completion.splits is not set"))?;
                    completion_exemplars(&ingest_completion_corpus(corpus, splits)?.train)
                }
                TaskArg::Generation => {
                    let g = &harness.config.generation;
                    let pat = g.pat.as_deref().ok_or_else(|| anyhow!("generation.pat is not set"))?;
                    generation_exemplars(&ingest_pat(pat, g.split_seed)?.train)
                }
            };
            let index = ExemplarIndex::build(exemplars, &*harness.embedder)?;
            index.save(&out)?;
            println!("{} exemplars -> {}", index.len(), out.display());
            Ok(())
        }
        Command::Complete { document } => {
            let doc = read_document(&document)?;
            let positions = doc.masked_slots();
            if positions.is_empty() {
                bail!("{} has no masked slots", document.display());
            }
            let state = ServiceState::from_config(&cfg)?;
            let seed = case_seed(cfg.seed, &doc.id, positions.len());
            let s = state.completion.complete(&doc, &state.completion_prompt, seed, None)?;
            let updated = doc.fill(&positions, &s.result)?;
            print_json(&json!({
                "colors": s.result.iter().map(|c| c.to_hex()).collect::<Vec<_>>(),
                "updated_document": updated.to_value(&ColorCodec::hex())?,
                "exemplar_ids": s.exemplar_ids,
                "attempts": s.attempts,
            }));
            Ok(())
        }
        Command::Generate { text } => {
            let state = ServiceState::from_config(&cfg)?;
            let seed = case_seed(cfg.seed, text.trim(), 0);
            let s = state
                .generation
                .generate(text.trim(), &state.generation_prompt, seed, None)?;
            let palette: Vec<String> = s.result.filled().map(Color::to_hex).collect();
            print_json(&json!({
                "palette": palette,
                "exemplar_ids": s.exemplar_ids,
                "attempts": s.attempts,
            }));
            Ok(())
        }
        Command::EvalCompletion { out, format } => {
            let dir = out.unwrap_or_else(|| cfg.output_dir.clone());
            let report = Harness::new(cfg)?.eval_completion()?;
            finish(&report, &dir, &format)
        }
        Command::EvalGeneration { out, format } => {
            let dir = out.unwrap_or_else(|| cfg.output_dir.clone());
            let report = Harness::new(cfg)?.eval_generation()?;
            finish(&report, &dir, &format)
        }
        Command::Ablation { out, format } => {
            let dir = out.unwrap_or_else(|| cfg.output_dir.clone());
            let report = Harness::new(cfg)?.run_ablation()?;
            report_written(&emit_ablation(&report, &dir, &formats(&format))?);
            if report.reports.iter().any(|r| r.incomplete) {
                return Err(Incomplete.into());
            }
            Ok(())
        }
        Command::Serve { port } => {
            let mut settings = cfg.service.clone();
            if let Some(p) = port {
                settings.port = p;
            }
            let state = Arc::new(ServiceState::from_config(&cfg)?);
            let rt = tokio::runtime::Runtime::new()?;
            rt.block_on(colorgpt_service::serve(state, &settings))?;
            Ok(())
        }
        Command::Report { report, out, format } => {
            let text = std::fs::read_to_string(&report).with_context(|| format!("reading {}", report.display()))?;
            let parsed: MetricsReport =
                serde_json::from_str(&text).with_context(|| format!("parsing {}", report.display()))?;
            let dir = out.unwrap_or_else(|| report.parent().unwrap_or(Path::new(".")).to_path_buf());
            report_written(&emit_report(&parsed, &dir, &formats(&format))?);
            Ok(())
        }
    }
}

fn finish(report: &MetricsReport, dir: &Path, format: &[FormatArg]) -> anyhow::Result<()> {
    report_written(&emit_report(report, dir, &formats(format))?);
    info!(cases = report.cases.len(), "report written");
    if report.incomplete {
        return Err(Incomplete.into());
    }
    Ok(())
}

fn parse_color(harness: &Harness, input: &str) -> anyhow::Result<Color> {
    let input = input.trim();
    if input.starts_with('#') {
        return Ok(Color::from_hex(input)?);
    }
    if input.starts_with('[') {
        let v: Value = serde_json::from_str(input).context("parsing RGB triplet")?;
        return Ok(ColorCodec::plain(Representation::Rgb).decode(&v)?);
    }
    Ok(harness.dict.word_to_hex(input, &*harness.embedder)?)
}

fn convert_color(cfg: &AppConfig, input: &str, to: Option<&str>) -> anyhow::Result<()> {
    let harness = Harness::new(cfg.clone())?;
    let color = parse_color(&harness, input)?;
    let targets: Vec<Representation> = match to {
        Some(t) => vec![t.parse()?],
        None => Representation::ALL.to_vec(),
    };
    for repr in targets {
        let codec = ColorCodec::new(repr, &harness.dict, &*harness.embedder);
        let text = codec.encode_text(color)?;
        if to.is_some() {
            println!("{text}");
        } else {
            println!("{repr}\t{text}");
        }
    }
    Ok(())
}
