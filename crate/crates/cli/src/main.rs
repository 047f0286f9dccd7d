//! `cantok`: tokenize CAN payloads from captures.

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use cantok::bitlab::write_tang_csv;
use cantok::frame::{load_trace, write_candump, CaptureFormat, ParseMode};
use cantok::signal::{export_series_csv, extract_all, summarize};
use cantok::synth::{generate_interleaved, load_ground_truths, score_tokenization};
use cantok::{
    analyze_trace, format_id, parse_id, Endianness, Execution, GroundTruth, IdAnalysis,
    PaddingMode, ScoreReport, SignalSummary, Tokenization, TokenizerConfig, TraceAnalysis,
};

#[derive(Parser)]
#[command(
    name = "cantok",
    version,
    about = "Infer CAN payload signal layouts from captures"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Per-bit transition counts, one CSV per ID.
    Tang(RunArgs),
    /// Signal/padding clusters, one JSON per ID.
    Tokenize(RunArgs),
    /// Unsigned time series for every signal cluster.
    Extract(RunArgs),
    /// Generate a candump trace from a ground-truth spec.
    Synth(SynthArgs),
    /// Compare tokenizations with a ground-truth spec.
    Score(ScoreArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum FormatArg {
    Candump,
    Csv,
}

#[derive(Clone, Copy, ValueEnum)]
enum EndiannessArg {
    Big,
    Little,
}

#[derive(Clone, Copy, ValueEnum)]
enum PaddingArg {
    Exclude,
    Strict,
}

#[derive(Args)]
struct TokenizeOpts {
    #[arg(long, value_enum, default_value = "big")]
    endianness: EndiannessArg,
    /// Transition-count slack allowed while growing a cluster.
    #[arg(long, default_value_t = 0)]
    threshold: u64,
    #[arg(long = "padding-mode", value_enum, default_value = "exclude")]
    padding_mode: PaddingArg,
}

impl TokenizeOpts {
    fn config(&self) -> TokenizerConfig {
        TokenizerConfig {
            endianness: match self.endianness {
                EndiannessArg::Big => Endianness::Big,
                EndiannessArg::Little => Endianness::Little,
            },
            threshold: self.threshold,
            padding_mode: match self.padding_mode {
                PaddingArg::Exclude => PaddingMode::Exclude,
                PaddingArg::Strict => PaddingMode::Strict,
            },
        }
    }
}

#[derive(Args)]
struct InputOpts {
    #[arg(short, long)]
    input: PathBuf,
    #[arg(long, value_enum, default_value = "candump")]
    format: FormatArg,
    /// Skip malformed lines instead of aborting.
    #[arg(long)]
    lenient: bool,
    /// Only analyze these IDs, e.g. `0x100,0x200`.
    #[arg(long, value_delimiter = ',', value_parser = parse_id_arg)]
    ids: Option<Vec<u32>>,
}

#[derive(Args)]
struct RunArgs {
    #[command(flatten)]
    input: InputOpts,
    #[command(flatten)]
    tokenizer: TokenizeOpts,
    #[arg(long, default_value = ".")]
    out: PathBuf,
}

#[derive(Args)]
struct SynthArgs {
    /// Ground-truth JSON: one object or an array.
    #[arg(long)]
    spec: PathBuf,
    /// Trace path; the ground truth is copied next to it as `<stem>.truth.json`.
    #[arg(long)]
    out: PathBuf,
    /// Replaces every spec's seed.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Args)]
struct ScoreArgs {
    #[arg(long)]
    truth: PathBuf,
    /// Tokenization JSON files from `tokenize`.
    #[arg(long, num_args = 1.., conflicts_with = "input", required_unless_present = "input")]
    tokenization: Vec<PathBuf>,
    /// Tokenize this capture instead of reading JSON.
    #[arg(short, long)]
    input: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "candump")]
    format: FormatArg,
    #[arg(long)]
    lenient: bool,
    #[command(flatten)]
    tokenizer: TokenizeOpts,
    #[arg(long, default_value = ".")]
    out: PathBuf,
}

fn parse_id_arg(s: &str) -> std::result::Result<u32, String> {
    parse_id(s.trim()).ok_or_else(|| format!("invalid arbitration ID `{s}`"))
}

fn capture_format(f: FormatArg) -> CaptureFormat {
    match f {
        FormatArg::Candump => CaptureFormat::Candump,
        FormatArg::Csv => CaptureFormat::Csv,
    }
}

fn parse_mode(lenient: bool) -> ParseMode {
    if lenient {
        ParseMode::Lenient
    } else {
        ParseMode::Strict
    }
}

fn analyze(
    input: &Path,
    format: FormatArg,
    lenient: bool,
    ids: Option<&[u32]>,
    config: &TokenizerConfig,
) -> Result<TraceAnalysis> {
    let (trace, report) = load_trace(input, capture_format(format), parse_mode(lenient))?;
    if report.skipped > 0 {
        log::warn!("skipped {} malformed line(s)", report.skipped);
    }
    log::info!("{} frames from {} IDs", report.frames, report.per_id.len());
    Ok(analyze_trace(&trace, config, ids, Execution::default())?)
}

fn run_analysis(args: &RunArgs) -> Result<Option<TraceAnalysis>> {
    let analysis = analyze(
        &args.input.input,
        args.input.format,
        args.input.lenient,
        args.input.ids.as_deref(),
        &args.tokenizer.config(),
    )?;
    if analysis.analyses.is_empty() {
        log::warn!("no IDs to analyze; nothing written");
        return Ok(None);
    }
    fs::create_dir_all(&args.out)
        .with_context(|| format!("cannot create {}", args.out.display()))?;
    Ok(Some(analysis))
}

/// `<ID>_<kind>.<ext>`, with the DLC added for IDs seen at several lengths.
fn artifact(
    out: &Path,
    analysis: &TraceAnalysis,
    a: &IdAnalysis,
    kind: &str,
    ext: &str,
) -> PathBuf {
    let key = a.trace.key();
    let name = if analysis.mixed_dlc.contains(&key.id) {
        format!("{:03X}_dlc{}_{kind}.{ext}", key.id, key.dlc)
    } else {
        format!("{:03X}_{kind}.{ext}", key.id)
    };
    out.join(name)
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    let f = File::create(path).with_context(|| format!("cannot write {}", path.display()))?;
    Ok(BufWriter::new(f))
}

fn finish(mut w: BufWriter<File>) -> Result<()> {
    w.flush()?;
    Ok(())
}

fn cmd_tang(args: &RunArgs) -> Result<()> {
    let Some(analysis) = run_analysis(args)? else {
        return Ok(());
    };
    let mut stdout = std::io::stdout().lock();
    writeln!(
        stdout,
        "{:<10} {:>3} {:>9} {:>9} {:>7}",
        "id", "dlc", "frames", "max", "active"
    )?;
    for a in &analysis.analyses {
        let mut w = create(&artifact(&args.out, &analysis, a, "tang", "csv"))?;
        write_tang_csv(&a.tang, &mut w)?;
        finish(w)?;
        let active = a.tang.counts().iter().filter(|&&c| c > 0).count();
        writeln!(
            stdout,
            "{:<10} {:>3} {:>9} {:>9} {:>3}/{:<3}",
            format_id(a.trace.arbitration_id()),
            a.trace.dlc(),
            a.trace.len(),
            a.tang.max_count(),
            active,
            a.tang.bit_width()
        )?;
    }
    Ok(())
}

fn layout(tok: &Tokenization) -> String {
    tok.clusters
        .iter()
        .map(|c| {
            format!(
                "{}[{}..{}]",
                if c.is_signal() { "S" } else { "p" },
                c.lo,
                c.hi
            )
        })
        .collect::<Vec<_>>()
        .join(" ")
}

fn cmd_tokenize(args: &RunArgs) -> Result<()> {
    let Some(analysis) = run_analysis(args)? else {
        return Ok(());
    };
    let mut stdout = std::io::stdout().lock();
    for a in &analysis.analyses {
        let mut w = create(&artifact(&args.out, &analysis, a, "tokenization", "json"))?;
        a.tokenization.write_json(&mut w)?;
        finish(w)?;
        writeln!(
            stdout,
            "{:<10} {}",
            format_id(a.trace.arbitration_id()),
            layout(&a.tokenization)
        )?;
    }
    Ok(())
}

#[derive(Serialize)]
struct SignalEntry {
    lo: usize,
    hi: usize,
    lsb: Option<usize>,
    msb: Option<usize>,
    width: usize,
    #[serde(flatten)]
    summary: SignalSummary,
}

#[derive(Serialize)]
struct ExtractSummary {
    id: String,
    frames: usize,
    signals: Vec<SignalEntry>,
}

fn cmd_extract(args: &RunArgs) -> Result<()> {
    let Some(analysis) = run_analysis(args)? else {
        return Ok(());
    };
    let mut stdout = std::io::stdout().lock();
    for a in &analysis.analyses {
        let series = extract_all(&a.trace, &a.tokenization)?;
        let mut summaries = Vec::new();
        for (cluster, s) in a.tokenization.signals().zip(&series) {
            let kind = format!("signal{}-{}", cluster.lo, cluster.hi);
            let mut w = create(&artifact(&args.out, &analysis, a, &kind, "csv"))?;
            export_series_csv(s, &mut w)?;
            finish(w)?;
            let summary = summarize(s)?;
            summaries.push(SignalEntry {
                lo: cluster.lo,
                hi: cluster.hi,
                lsb: cluster.lsb,
                msb: cluster.msb,
                width: cluster.width(),
                summary,
            });
            writeln!(
                stdout,
                "{:<10} [{}..{}] min {} max {} unique {}",
                format_id(a.trace.arbitration_id()),
                cluster.lo,
                cluster.hi,
                summary.min,
                summary.max,
                summary.unique_values
            )?;
        }
        let doc = ExtractSummary {
            id: format_id(a.trace.arbitration_id()),
            frames: a.trace.len(),
            signals: summaries,
        };
        let mut w = create(&artifact(&args.out, &analysis, a, "summary", "json"))?;
        serde_json::to_writer_pretty(&mut w, &doc)?;
        writeln!(w)?;
        finish(w)?;
    }
    Ok(())
}

fn sidecar_path(trace: &Path) -> PathBuf {
    trace.with_extension("truth.json")
}

fn cmd_synth(args: &SynthArgs) -> Result<()> {
    let mut gts = load_ground_truths(&args.spec)?;
    if let Some(seed) = args.seed {
        gts.iter_mut().for_each(|g| g.seed = seed);
    }
    let trace = generate_interleaved(&gts)?;
    if let Some(dir) = args.out.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).with_context(|| format!("cannot create {}", dir.display()))?;
    }
    let mut w = create(&args.out)?;
    write_candump(&trace, "can0", &mut w)?;
    finish(w)?;

    let truth = sidecar_path(&args.out);
    let mut w = create(&truth)?;
    if gts.len() == 1 {
        serde_json::to_writer_pretty(&mut w, &gts[0])?;
    } else {
        serde_json::to_writer_pretty(&mut w, &gts)?;
    }
    writeln!(w)?;
    finish(w)?;
    println!(
        "{} frames from {} IDs -> {} (+ {})",
        trace.len(),
        gts.len(),
        args.out.display(),
        truth.display()
    );
    Ok(())
}

fn read_tokenization(path: &Path) -> Result<Tokenization> {
    let text =
        fs::read_to_string(path).with_context(|| format!("cannot read {}", path.display()))?;
    serde_json::from_str(&text).with_context(|| format!("{} is not a tokenization", path.display()))
}

fn cmd_score(args: &ScoreArgs) -> Result<()> {
    let truths = load_ground_truths(&args.truth)?;
    let toks: Vec<Tokenization> = match &args.input {
        Some(input) => {
            let ids: Vec<u32> = truths.iter().map(|g| g.id).collect();
            analyze(
                input,
                args.format,
                args.lenient,
                Some(&ids),
                &args.tokenizer.config(),
            )?
            .analyses
            .into_iter()
            .map(|a| a.tokenization)
            .collect()
        }
        None => args
            .tokenization
            .iter()
            .map(|p| read_tokenization(p))
            .collect::<Result<_>>()?,
    };

    let mut reports: Vec<ScoreReport> = Vec::new();
    for gt in &truths {
        let tok = find_tokenization(&toks, gt)?;
        reports.push(score_tokenization(tok, gt)?);
    }
    reports.sort_by_key(|r| r.id);

    fs::create_dir_all(&args.out)
        .with_context(|| format!("cannot create {}", args.out.display()))?;
    let mut stdout = std::io::stdout().lock();
    writeln!(
        stdout,
        "{:<10} {:>7} {:>5} {:>9} {:>9} {:>6} {:>5}",
        "id", "signals", "exact", "precision", "recall", "merged", "split"
    )?;
    for r in &reports {
        let mut w = create(&args.out.join(format!("{:03X}_score.json", r.id)))?;
        serde_json::to_writer_pretty(&mut w, r)?;
        writeln!(w)?;
        finish(w)?;
        writeln!(
            stdout,
            "{:<10} {:>7} {:>5} {:>9.6} {:>9.6} {:>6} {:>5}",
            format_id(r.id),
            r.true_signals,
            r.exact_cluster_matches,
            r.boundary_precision,
            r.boundary_recall,
            r.merged,
            r.split
        )?;
    }
    Ok(())
}

fn find_tokenization<'a>(toks: &'a [Tokenization], gt: &GroundTruth) -> Result<&'a Tokenization> {
    let mut matching = toks.iter().filter(|t| t.id == gt.id);
    let Some(first) = matching.next() else {
        bail!("no tokenization for {}", format_id(gt.id));
    };
    Ok(matching
        .chain(std::iter::once(first))
        .find(|t| t.bit_width == gt.bit_width)
        .unwrap_or(first))
}

/// The error chain, minus causes already spelled out by their parent.
fn describe(err: &anyhow::Error) -> String {
    let mut text = err.to_string();
    for cause in err.chain().skip(1) {
        let cause = cause.to_string();
        if !text.contains(&cause) {
            text = format!("{text}: {cause}");
        }
    }
    text
}

fn exit_code(err: &anyhow::Error) -> u8 {
    let invariant = err.chain().any(|e| {
        e.downcast_ref::<cantok::Error>()
            .is_some_and(cantok::Error::is_invariant_violation)
    });
    if invariant {
        2
    } else {
        1
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(1)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    let result = match &cli.command {
        Command::Tang(a) => cmd_tang(a),
        Command::Tokenize(a) => cmd_tokenize(a),
        Command::Extract(a) => cmd_extract(a),
        Command::Synth(a) => cmd_synth(a),
        Command::Score(a) => cmd_score(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {}", describe(&err));
            ExitCode::from(exit_code(&err))
        }
    }
}
