//! Command-line surface for corpusforge: corpus ingest, the selection
//! pipeline, data splits, batch Griffin-Lim synthesis, objective evaluation,
//! report rendering, and speaker linking.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use corpusforge::config::PipelineConfig;
use corpusforge::corpus::{read_manifest, write_manifest};
use corpusforge::eval::{evaluation_report, parse_report_csv};
use corpusforge::metadata::write_speakers_csv;
use corpusforge::pipeline::{
    cmd_eval, cmd_ingest, cmd_pipeline, cmd_speakers, cmd_split, cmd_synth_gl, PipelineError,
};
use corpusforge::textproc::read_hypotheses;

#[derive(Parser)]
#[command(name = "corpusforge", version, about = "TTS corpus curation and evaluation toolkit")]
struct Cli {
    /// Pipeline configuration file (JSON).
    #[arg(long, global = true, env = "CORPUSFORGE_CONFIG")]
    config: Option<PathBuf>,

    /// Worker pool size for per-segment stages (default: all cores).
    #[arg(long, global = true)]
    jobs: Option<usize>,

    #[arg(long, global = true)]
    verbose: bool,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Scan audio, transcripts, and metadata into a manifest.
    Ingest {
        /// Corpus name recorded in the manifest header.
        #[arg(long, default_value = "corpus")]
        source: String,
        /// Output manifest path.
        #[arg(long)]
        out: PathBuf,
    },
    /// Run score ingest, heuristics, classification, repair, selection,
    /// and split end to end.
    Pipeline,
    /// Split a manifest into train/dev/test manifests.
    Split {
        #[arg(long)]
        manifest: PathBuf,
        /// Directory for train.jsonl, dev.jsonl, test.jsonl.
        #[arg(long)]
        out: PathBuf,
    },
    /// Resynthesize WAVs from predicted-mel matrix files via Griffin-Lim.
    SynthGl {
        #[arg(long)]
        mel_dir: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Objective evaluation (WER/CER/MCD) of synthesized speech.
    Eval {
        /// Directory of reference WAVs named `<id>.wav`.
        #[arg(long)]
        ref_dir: PathBuf,
        /// Directory of synthesized WAVs named `<id>.wav`.
        #[arg(long)]
        syn_dir: PathBuf,
        /// Manifest supplying reference transcripts.
        #[arg(long)]
        manifest: PathBuf,
        /// ASR hypotheses over the synthesized audio (JSONL).
        #[arg(long)]
        hyps: PathBuf,
        /// Directory for report.csv and report.txt.
        #[arg(long)]
        out: PathBuf,
    },
    /// Re-render the text table from a previously written report CSV.
    Report {
        #[arg(long)]
        csv: PathBuf,
    },
    /// Normalize and link raw speaker entries into canonical records.
    Speakers {
        /// File with one raw speaker entry per line.
        #[arg(long)]
        entries: PathBuf,
        /// Optional JSON map of raw entry -> canonical name.
        #[arg(long)]
        overrides: Option<PathBuf>,
        /// Output CSV path.
        #[arg(long)]
        out: PathBuf,
    },
}

fn load_config(path: Option<&Path>) -> Result<PipelineConfig, PipelineError> {
    match path {
        Some(p) => Ok(PipelineConfig::load(p)?),
        None => Ok(PipelineConfig::default()),
    }
}

fn print_warnings(warnings: &[String]) {
    for w in warnings {
        eprintln!("warning: {w}");
    }
}

fn run(cli: Cli) -> Result<(), PipelineError> {
    if let Some(jobs) = cli.jobs {
        rayon::ThreadPoolBuilder::new()
            .num_threads(jobs)
            .build_global()
            .map_err(|e| PipelineError::MissingInput(format!("bad --jobs value: {e}")))?;
    }
    let config = load_config(cli.config.as_deref())?;

    match cli.command {
        Command::Ingest { source, out } => {
            let outcome = cmd_ingest(&config, &source)?;
            print_warnings(&outcome.warnings);
            write_manifest(&outcome.manifest, &out)?;
            println!(
                "wrote {} segments to {}",
                outcome.manifest.segments.len(),
                out.display()
            );
        }
        Command::Pipeline => {
            let outcome = cmd_pipeline(&config)?;
            print_warnings(&outcome.warnings);
            println!("class,segments,minutes");
            for row in &outcome.summary {
                println!("{},{},{:.1}", row.class.label(), row.segments, row.minutes);
            }
            println!(
                "selected {} of {} segments ({:.1} minutes)",
                outcome.selected.segments.len(),
                outcome.classified.segments.len(),
                outcome.selected.total_duration_s() / 60.0
            );
            println!("{}", outcome.provenance.comment_line());
            if cli.verbose {
                for path in &outcome.outputs {
                    println!("wrote {}", path.display());
                }
            }
        }
        Command::Split { manifest, out } => {
            let m = read_manifest(&manifest)?;
            let (train, dev, test) = cmd_split(&m, &config.split, config.seed)?;
            std::fs::create_dir_all(&out)?;
            for (name, part) in [("train.jsonl", &train), ("dev.jsonl", &dev), ("test.jsonl", &test)] {
                write_manifest(part, &out.join(name))?;
            }
            println!(
                "split {} segments into {}/{}/{}",
                m.segments.len(),
                train.segments.len(),
                dev.segments.len(),
                test.segments.len()
            );
        }
        Command::SynthGl { mel_dir, out } => {
            let outcome = cmd_synth_gl(&mel_dir, &out, &config.dsp)?;
            for notice in &outcome.notices {
                println!("{notice}");
            }
            if !outcome.written.is_empty() {
                println!("synthesized {} files", outcome.written.len());
            }
            if cli.verbose {
                for path in &outcome.written {
                    println!("wrote {}", path.display());
                }
            }
        }
        Command::Eval {
            ref_dir,
            syn_dir,
            manifest,
            hyps,
            out,
        } => {
            let m = read_manifest(&manifest)?;
            let transcripts: BTreeMap<String, String> = m
                .segments
                .iter()
                .map(|s| {
                    let text = s
                        .transcript_repaired
                        .clone()
                        .unwrap_or_else(|| s.transcript_raw.clone());
                    (s.id.clone(), text)
                })
                .collect();
            let hypotheses = read_hypotheses(&hyps)?;
            let outcome = cmd_eval(&config, &ref_dir, &syn_dir, &transcripts, &hypotheses)?;
            std::fs::create_dir_all(&out)?;
            std::fs::write(out.join("report.csv"), &outcome.tables.csv)?;
            std::fs::write(out.join("report.txt"), &outcome.tables.text)?;
            println!("{}", outcome.tables.text);
        }
        Command::Report { csv } => {
            let text = std::fs::read_to_string(&csv)?;
            let rows = parse_report_csv(&text)?;
            let tables = evaluation_report(&rows);
            println!("{}", tables.text);
        }
        Command::Speakers {
            entries,
            overrides,
            out,
        } => {
            let raw = std::fs::read_to_string(&entries)?;
            let list: Vec<String> = raw
                .lines()
                .map(str::trim)
                .filter(|l| !l.is_empty())
                .map(str::to_string)
                .collect();
            let records = cmd_speakers(&list, overrides.as_deref())?;
            write_speakers_csv(&records, &out)?;
            println!("linked {} entries into {} speakers", list.len(), records.len());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            let mut source = std::error::Error::source(&e);
            while let Some(s) = source {
                eprintln!("  caused by: {s}");
                source = s.source();
            }
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
