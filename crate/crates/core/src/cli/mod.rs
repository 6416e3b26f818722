//! The `lenbeam` command line.

mod output;

use std::ffi::OsString;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;
use serde_json::json;

use crate::dataset::load_dataset;
use crate::decode::{compare, decode_corpus, report_for, Comparison, DecodeConfig, Mode, UtteranceDecode};
use crate::error::Error;
use crate::eval::{align, render_table, CorpusReport};
use crate::oracle::{oracle_check, EnumerationLimit, OracleCheckConfig, PropertyStatus};
use crate::scorer::TableModel;
use crate::search::{HeuristicConfig, PruneConfig};
use crate::suite::{biased_suite, looping_instance, write_suite, SuiteConfig};

pub use output::{round_floats, round_sig, SIGNIFICANT_DIGITS};

pub const EXIT_OK: i32 = 0;
pub const EXIT_FAILURE: i32 = 1;
pub const EXIT_USAGE: i32 = 2;

#[derive(Debug, Parser)]
#[command(name = "lenbeam", version, about = "Beam search with explicit length modelling")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Decode a dataset with one configuration
    Decode(DecodeArgs),
    /// Decode a dataset with several configurations side by side
    Compare(CompareArgs),
    /// Check the search against brute-force enumeration on random models
    OracleCheck(OracleArgs),
    /// Write a generated dataset
    GenSuite(GenSuiteArgs),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "snake_case")]
enum ModeArg {
    Simple,
    Heuristic,
    Proposed,
}

impl From<ModeArg> for Mode {
    fn from(m: ModeArg) -> Mode {
        match m {
            ModeArg::Simple => Mode::Simple,
            ModeArg::Heuristic => Mode::Heuristic,
            ModeArg::Proposed => Mode::Proposed,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
struct BeamSize(usize);

impl Serialize for BeamSize {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        if self.0 == usize::MAX {
            s.serialize_str("unlimited")
        } else {
            s.serialize_u64(self.0 as u64)
        }
    }
}

fn parse_beam(s: &str) -> Result<BeamSize, String> {
    if s == "unlimited" {
        return Ok(BeamSize(usize::MAX));
    }
    match s.parse::<usize>() {
        Ok(0) | Err(_) => Err(format!("expected a positive integer or \"unlimited\", got {s:?}")),
        Ok(n) => Ok(BeamSize(n)),
    }
}

/// Search flags shared by `decode` and each `compare --config`.
#[derive(Clone, Debug, Args, Serialize)]
struct DecodeFlags {
    #[arg(long, value_enum, default_value = "proposed")]
    mode: ModeArg,
    /// Beam size, or "unlimited"
    #[arg(long, default_value = "64", value_parser = parse_beam)]
    beam_size: BeamSize,
    /// Prune hypotheses scoring more than this below the best (8 is a common choice)
    #[arg(long)]
    score_threshold: Option<f64>,
    #[arg(long, default_value_t = 1)]
    k_best: usize,
    #[arg(long)]
    length_norm: bool,
    #[arg(long)]
    eos_factor: Option<f64>,
    #[arg(long)]
    length_reward: Option<f64>,
    #[arg(long, default_value_t = 0.0)]
    lm_scale: f64,
    /// Step cap as a multiple of each utterance's input length
    #[arg(long, default_value_t = 1.0)]
    max_steps_factor: f64,
}

impl DecodeFlags {
    fn config(&self) -> Result<DecodeConfig, Error> {
        let cfg = DecodeConfig {
            mode: self.mode.into(),
            prune: PruneConfig {
                beam_size: self.beam_size.0,
                score_threshold: self.score_threshold,
            },
            heuristics: HeuristicConfig {
                length_normalize: self.length_norm,
                eos_threshold_factor: self.eos_factor,
                length_reward: self.length_reward,
            },
            k_best: self.k_best,
            lm_scale: self.lm_scale,
            max_steps_factor: self.max_steps_factor,
        };
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Debug, Args)]
struct DecodeArgs {
    /// Dataset (JSONL, one utterance per line)
    #[arg(long)]
    data: PathBuf,
    #[command(flatten)]
    flags: DecodeFlags,
    /// Worker threads; 0 uses every core
    #[arg(long, default_value_t = 0)]
    jobs: usize,
    /// Output directory
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct CompareArgs {
    #[arg(long)]
    data: PathBuf,
    /// Decode flags of one configuration, e.g. "--mode simple --beam-size 5000"
    #[arg(long = "config", required = true, allow_hyphen_values = true)]
    configs: Vec<String>,
    #[arg(long, default_value_t = 0)]
    jobs: usize,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct OracleArgs {
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Number of random models
    #[arg(long, default_value_t = 100)]
    models: usize,
    /// Longest enumerated sequence, end label included
    #[arg(long, default_value_t = 6)]
    max_length: usize,
    #[arg(long, default_value_t = crate::oracle::DEFAULT_MAX_SEQUENCES)]
    max_sequences: u64,
    /// Additional model files to check
    #[arg(long = "model")]
    model_files: Vec<PathBuf>,
    /// Write the JSON report here instead of stdout
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum SuiteKind {
    Biased,
    Looping,
}

#[derive(Debug, Args)]
struct GenSuiteArgs {
    #[arg(long)]
    out: PathBuf,
    #[arg(long, value_enum, default_value = "biased")]
    kind: SuiteKind,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 50)]
    utterances: usize,
    #[arg(long, default_value_t = 8)]
    min_length: usize,
    #[arg(long, default_value_t = 16)]
    max_length: usize,
    #[arg(long, default_value_t = 8)]
    num_labels: usize,
    #[arg(long, default_value_t = 0.1)]
    eos_leak: f64,
    #[arg(long, default_value_t = 0.5)]
    on_target_mass: f64,
    #[arg(long, default_value_t = 2)]
    length_factor: usize,
}

#[derive(Debug)]
enum Failure {
    Usage(String),
    Run(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::Dataset { .. }
            | Error::Json { .. }
            | Error::Io { .. }
            | Error::InvalidModel(_)
            | Error::InvalidVocabulary(_)
            | Error::VocabularyMismatch
            | Error::Config(_)
            | Error::InfeasibleModel(_)
            | Error::EnumerationTooLarge { .. } => Failure::Usage(e.to_string()),
            other => Failure::Run(other.to_string()),
        }
    }
}

/// Runs the CLI; returns the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
        }
    };
    let outcome = match cli.command {
        Command::Decode(a) => decode_cmd(a),
        Command::Compare(a) => compare_cmd(a),
        Command::OracleCheck(a) => oracle_cmd(a),
        Command::GenSuite(a) => gen_suite_cmd(a),
    };
    match outcome {
        Ok(code) => code,
        Err(Failure::Usage(m)) => {
            eprintln!("error: {m}");
            EXIT_USAGE
        }
        Err(Failure::Run(m)) => {
            eprintln!("error: {m}");
            EXIT_FAILURE
        }
    }
}

fn create_dir(dir: &Path) -> Result<(), Failure> {
    std::fs::create_dir_all(dir).map_err(|e| Failure::from(Error::io(dir, e)))
}

/// Self-describing header. `--jobs` does not change results and is left out.
fn header(command: &str, data: &Path, flags: &impl Serialize) -> serde_json::Value {
    json!({
        "tool": "lenbeam",
        "version": env!("CARGO_PKG_VERSION"),
        "command": command,
        "data": data.display().to_string(),
        "flags": flags,
    })
}

fn decode_cmd(a: DecodeArgs) -> Result<i32, Failure> {
    let cfg = a.flags.config()?;
    let utts = load_dataset(&a.data)?;
    let decodes = decode_corpus(&utts, &cfg, a.jobs)?;
    let report = report_for(&decodes)?;
    let head = header("decode", &a.data, &a.flags);
    create_dir(&a.out)?;

    let mut results = output::line(&json!({ "header": head }));
    for d in &decodes {
        results.push_str(&output::line(&utterance_line(d)));
    }
    output::write(&a.out.join("results.jsonl"), &results)?;
    output::write(
        &a.out.join("report.json"),
        &output::pretty(&json!({ "header": head, "report": report })),
    )?;
    let mut text = text_header(&head);
    text.push_str(&render_table(&[(a.flags.mode_label(), &report)]));
    text.push_str(&report_footer(&report));
    output::write(&a.out.join("report.txt"), &text)?;

    let failed = decodes.iter().filter(|d| d.error.is_some()).count();
    eprintln!(
        "decoded {} utterances, WER {:.2}%, {failed} failed",
        decodes.len(),
        100.0 * report.wer
    );
    Ok(if failed == 0 { EXIT_OK } else { EXIT_FAILURE })
}

impl DecodeFlags {
    fn mode_label(&self) -> String {
        let beam = if self.beam_size.0 == usize::MAX {
            "unlimited".to_string()
        } else {
            self.beam_size.0.to_string()
        };
        format!("{:?}/{beam}", self.mode).to_lowercase()
    }
}

fn utterance_line(d: &UtteranceDecode) -> serde_json::Value {
    let best = d.best();
    let hyp: Vec<String> = best.map(|h| h.output.clone()).unwrap_or_default();
    json!({
        "id": d.id,
        "output": best.map(|h| &h.output),
        "output_text": best.map(|h| h.output.join(" ")),
        "length": best.map(|h| h.length),
        "raw_score": best.map(|h| h.raw_score),
        "p_b": best.map(|h| h.p_b),
        "p_not_end": best.map(|h| h.p_not_end),
        "final_score": best.map(|h| crate::LogProb(h.final_score)),
        "steps_taken": d.steps_taken,
        "stop_reason": d.stop_reason,
        "reference": d.reference,
        "alignment": align(&d.reference, &hyp),
        "kbest": d.kbest,
        "error": d.error,
    })
}

fn text_header(head: &serde_json::Value) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "# {} {} {}", head["tool"].as_str().unwrap_or(""), head["command"].as_str().unwrap_or(""), head["version"].as_str().unwrap_or(""));
    let _ = writeln!(s, "# data: {}", head["data"].as_str().unwrap_or(""));
    let _ = writeln!(s, "# flags: {}", output::to_value(&head["flags"]));
    s
}

fn report_footer(r: &CorpusReport) -> String {
    let mut s = String::new();
    let reasons: Vec<String> = r.stop_reasons.iter().map(|(k, v)| format!("{k}={v}")).collect();
    let _ = writeln!(s, "stop reasons: {}", reasons.join(" "));
    if !r.failed.is_empty() {
        let _ = writeln!(s, "failed: {}", r.failed.join(" "));
    }
    s
}

#[derive(Debug, Parser)]
#[command(name = "config", no_binary_name = true)]
struct ConfigLine {
    #[command(flatten)]
    flags: DecodeFlags,
}

fn compare_cmd(a: CompareArgs) -> Result<i32, Failure> {
    if a.configs.len() < 2 {
        return Err(Failure::Usage("compare needs at least two --config values".into()));
    }
    let mut named = Vec::with_capacity(a.configs.len());
    let mut flags = Vec::with_capacity(a.configs.len());
    for c in &a.configs {
        let line = ConfigLine::try_parse_from(c.split_whitespace())
            .map_err(|e| Failure::Usage(format!("--config {c:?}: {}", e.kind())))?;
        named.push((c.split_whitespace().collect::<Vec<_>>().join(" "), line.flags.config()?));
        flags.push(line.flags);
    }
    let utts = load_dataset(&a.data)?;
    let cmp = compare(&utts, &named, a.jobs)?;
    let head = header("compare", &a.data, &flags);
    create_dir(&a.out)?;
    output::write(
        &a.out.join("comparison.json"),
        &output::pretty(&json!({ "header": head, "comparison": cmp })),
    )?;
    let mut text = text_header(&head);
    text.push_str(&comparison_text(&cmp));
    output::write(&a.out.join("comparison.txt"), &text)?;
    print!("{}", comparison_text(&cmp));
    let failed = cmp.rows.iter().any(|r| !r.report.failed.is_empty());
    Ok(if failed { EXIT_FAILURE } else { EXIT_OK })
}

fn fmt_score(x: Option<crate::LogProb>) -> String {
    match x {
        Some(v) if v.0.is_finite() => format!("{:.4}", v.0),
        Some(v) => v.0.to_string(),
        None => "-".into(),
    }
}

fn comparison_text(cmp: &Comparison) -> String {
    let rows: Vec<(String, &CorpusReport)> = cmp.rows.iter().map(|r| (r.config.clone(), &r.report)).collect();
    let mut s = render_table(&rows);
    let _ = writeln!(s, "\ndisagreements: {}", cmp.disagreements.len());
    for d in &cmp.disagreements {
        let _ = writeln!(s, "  {}", d.id);
        for c in &d.choices {
            let out = c.output.as_ref().map_or("<none>".to_string(), |o| format!("\"{}\"", o.join(" ")));
            let _ = writeln!(
                s,
                "    {:<40} raw {:>10}  final {:>10}  {out}",
                c.config,
                fmt_score(c.raw_score),
                fmt_score(c.final_score)
            );
        }
    }
    let _ = writeln!(s, "\ninversions: {}", cmp.inversions.len());
    for i in &cmp.inversions {
        let _ = writeln!(
            s,
            "  {} [{}] chose \"{}\" (raw {}, final {}) over \"{}\" (raw {}, from {})",
            i.id,
            i.config,
            i.chosen.join(" "),
            fmt_score(Some(i.chosen_raw)),
            fmt_score(Some(i.chosen_final)),
            i.better.join(" "),
            fmt_score(Some(i.better_raw)),
            i.better_source
        );
    }
    s
}

fn oracle_cmd(a: OracleArgs) -> Result<i32, Failure> {
    let mut extra = Vec::new();
    for p in &a.model_files {
        extra.push((p.display().to_string(), TableModel::load(p)?));
    }
    let cfg = OracleCheckConfig {
        seed: a.seed,
        models: a.models,
        limit: EnumerationLimit::new(a.max_length, a.max_sequences)?,
        ..OracleCheckConfig::default()
    };
    let report = oracle_check(&cfg, &extra)?;
    let text = output::pretty(&report);
    match &a.out {
        Some(path) => output::write(path, &text)?,
        None => print!("{text}"),
    }
    for p in &report.properties {
        let status = match p.status {
            PropertyStatus::Pass => "pass",
            PropertyStatus::Fail => "FAIL",
            PropertyStatus::Skipped => "skipped",
        };
        eprintln!(
            "{status:>7}  {:<26} checked {:>4}  skipped {:>4}  max deviation {:.3e}",
            p.name, p.checked, p.skipped, p.max_deviation
        );
    }
    Ok(if report.passed { EXIT_OK } else { EXIT_FAILURE })
}

fn gen_suite_cmd(a: GenSuiteArgs) -> Result<i32, Failure> {
    let items = match a.kind {
        SuiteKind::Biased => biased_suite(&SuiteConfig {
            seed: a.seed,
            utterances: a.utterances,
            min_length: a.min_length,
            max_length: a.max_length,
            num_labels: a.num_labels,
            eos_leak: a.eos_leak,
            on_target_mass: a.on_target_mass,
            length_factor: a.length_factor,
        })?,
        SuiteKind::Looping => vec![looping_instance()?],
    };
    let path = write_suite(&a.out, &items)?;
    eprintln!("wrote {} utterances to {}", items.len(), path.display());
    Ok(EXIT_OK)
}
