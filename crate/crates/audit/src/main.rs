use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use disco_audit::report::MissingArtifacts;
use disco_audit::run::{cmd_run, cmd_sweep, RunConfig, SweepParam, ValidationFailed};
use disco_audit::{caption, manifest, regression, report, synth};
use disco_core::corpus::{FrameKind, PartitionPolicy};
use disco_core::detectors::{DetectorError, DetectorKind, Placement};
use disco_core::matcher::option_letter;
use disco_core::query::{Capability, GatewayError};

const EXIT_GENERIC: u8 = 1;
const EXIT_USAGE: u8 = 2;
const EXIT_VALIDATION: u8 = 3;
const EXIT_CAPABILITY: u8 = 4;
const EXIT_GATEWAY: u8 = 5;
const EXIT_MISSING_ARTIFACTS: u8 = 6;

#[derive(Parser)]
#[command(name = "disco", version, about = "Membership-inference audits of vision-language models")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Probe the partitioned corpus and write a run directory.
    Run(RunArgs),
    /// Run once per value of one parameter, sharing a response cache.
    Sweep {
        #[command(flatten)]
        run: RunArgs,
        /// frames-per-prompt, resolution or prompt-variant
        #[arg(long)]
        param: String,
        /// Comma-separated values.
        #[arg(long, value_delimiter = ',', required = true)]
        values: Vec<String>,
    },
    /// Rebuild tables from run directories. Several directories also give a
    /// combined AUC table with one column per backend.
    Report {
        #[arg(required = true)]
        run_dirs: Vec<PathBuf>,
        /// Where to write the combined AUC table.
        #[arg(long)]
        combined: Option<PathBuf>,
    },
    /// Per-detector latency summary of a run directory.
    Timing { run_dir: PathBuf },
    /// Generate missing captions into a new manifest.
    Caption {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        backends: PathBuf,
        #[arg(long)]
        backend: String,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        cache_dir: Option<PathBuf>,
    },
    /// Check a manifest and its image assets.
    Validate {
        #[arg(long)]
        manifest: PathBuf,
    },
    /// Write a synthetic corpus and a matching mock backend.
    Synth {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 10)]
        suspect: usize,
        #[arg(long, default_value_t = 10)]
        clean: usize,
        #[arg(long, default_value_t = 4)]
        main_frames: usize,
        #[arg(long, default_value_t = 2)]
        neutral_frames: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Run the matcher regression corpus.
    MatcherCheck {
        /// Corpus file; the built-in corpus when omitted.
        corpus: Option<PathBuf>,
    },
}

#[derive(Args)]
struct RunArgs {
    #[arg(long)]
    manifest: PathBuf,
    /// Backend configuration file.
    #[arg(long, default_value = "backends.toml")]
    backends: PathBuf,
    #[arg(long)]
    backend: String,
    /// Comma-separated: disco, floor_disco, captions, mcqa, renyi.
    #[arg(long, value_delimiter = ',', default_value = "disco")]
    detectors: Vec<String>,
    /// Comma-separated: main, neutral.
    #[arg(long, value_delimiter = ',', default_value = "main,neutral")]
    kinds: Vec<String>,
    #[arg(long, default_value_t = 1)]
    frames_per_prompt: usize,
    /// `random` or `fixed:<letter>`.
    #[arg(long, default_value = "random")]
    placement: String,
    /// `WIDTHxHEIGHT` or a scale factor.
    #[arg(long)]
    resolution: Option<String>,
    /// Prompt registry file.
    #[arg(long)]
    prompts: Option<PathBuf>,
    #[arg(long, default_value = "default")]
    prompt_variant: String,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    iterations: Option<usize>,
    #[arg(long)]
    workers: Option<usize>,
    #[arg(long)]
    cache_dir: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, thiserror::Error)]
#[error("{0}")]
struct UsageError(String);

fn parse_placement(s: &str) -> Result<Placement> {
    if s == "random" || s == "randomized" {
        return Ok(Placement::Randomized);
    }
    let letter = s
        .strip_prefix("fixed:")
        .with_context(|| format!("placement must be `random` or `fixed:<A-D>`, got `{s}`"))?;
    (0..4)
        .find(|i| option_letter(*i).to_string().eq_ignore_ascii_case(letter))
        .map(Placement::Fixed)
        .with_context(|| format!("unknown option letter `{letter}`"))
}

impl RunArgs {
    fn config(&self) -> Result<RunConfig> {
        self.parse().map_err(|e| UsageError(format!("{e:#}")).into())
    }

    fn parse(&self) -> Result<RunConfig> {
        let mut c = RunConfig::new(&self.manifest, &self.backends, &self.backend);
        c.detectors = self
            .detectors
            .iter()
            .map(|d| DetectorKind::parse(d.trim()).with_context(|| format!("unknown detector `{d}`")))
            .collect::<Result<_>>()?;
        c.kinds = self
            .kinds
            .iter()
            .map(|k| {
                FrameKind::ALL
                    .into_iter()
                    .find(|f| f.as_str() == k.trim())
                    .with_context(|| format!("unknown frame kind `{k}`"))
            })
            .collect::<Result<_>>()?;
        c.frames_per_prompt = self.frames_per_prompt;
        c.placement = parse_placement(&self.placement)?;
        c.resolution = self
            .resolution
            .as_deref()
            .map(str::parse)
            .transpose()
            .map_err(anyhow::Error::msg)?;
        c.prompts = self.prompts.clone();
        c.prompt_variant = self.prompt_variant.clone();
        c.seed = self.seed;
        if let Some(i) = self.iterations {
            c.iterations = i;
        }
        if let Some(w) = self.workers {
            c.workers = w;
        }
        c.cache_dir = self.cache_dir.clone();
        Ok(c)
    }
}

fn print_file(path: &Path) -> Result<()> {
    print!("{}", std::fs::read_to_string(path)?);
    Ok(())
}

fn execute(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Run(args) => {
            let s = cmd_run(&args.config()?, &args.out)?;
            eprintln!(
                "{} titles, {} queries ({} sent, {} from cache) -> {}",
                s.movies,
                s.queries,
                s.transport_calls,
                s.cache_hits,
                args.out.display()
            );
            print_file(&args.out.join(report::AUC_TABLE_FILE))
        }
        Command::Sweep { run, param, values } => {
            let param = match param.as_str() {
                "frames-per-prompt" | "frames_per_prompt" => SweepParam::FramesPerPrompt,
                "resolution" => SweepParam::Resolution,
                "prompt-variant" | "prompt_variant" => SweepParam::PromptVariant,
                other => return Err(UsageError(format!("cannot sweep `{other}`")).into()),
            };
            let path = cmd_sweep(&run.config()?, param, &values, &run.out)?;
            print_file(&path)
        }
        Command::Report { run_dirs, combined } => {
            for d in &run_dirs {
                report::cmd_report(d)?;
            }
            match combined {
                Some(path) => {
                    report::combine_auc(&run_dirs, &path)?;
                    print_file(&path)
                }
                None => print_file(&run_dirs[0].join(report::AUC_TABLE_FILE)),
            }
        }
        Command::Timing { run_dir } => {
            report::cmd_timing(&run_dir)?;
            print_file(&run_dir.join(report::TIMING_FILE))
        }
        Command::Caption {
            manifest,
            backends,
            backend,
            out,
            cache_dir,
        } => {
            let s = caption::cmd_caption(&manifest, &backends, &backend, &out, cache_dir.as_deref())?;
            println!("generated {} caption(s) -> {}", s.generated, out.display());
            for id in &s.nonconforming {
                eprintln!("warning: caption for frame {id} does not start with the required prefix");
            }
            Ok(())
        }
        Command::Validate { manifest: path } => {
            let loaded = manifest::load(&path)?;
            let report = manifest::validate_loaded(&loaded, &PartitionPolicy::default());
            println!("{}", serde_json::to_string_pretty(&report)?);
            match report.blocking().count() {
                0 => Ok(()),
                n => Err(ValidationFailed(format!("{n} blocking issue(s)")).into()),
            }
        }
        Command::Synth {
            out,
            suspect,
            clean,
            main_frames,
            neutral_frames,
            seed,
        } => {
            let spec = synth::SynthSpec {
                n_suspect: suspect,
                n_clean: clean,
                n_main: main_frames,
                n_neutral: neutral_frames,
                seed,
                ..synth::SynthSpec::default()
            };
            let manifest = synth::write_corpus(&out, &spec)?;
            let profile = synth::mock_profile(
                seed,
                &spec.genres,
                synth::Recalls {
                    suspect_main: 0.7,
                    suspect_neutral: 0.34,
                    clean: 0.002,
                    suspect_caption: 0.1,
                    clean_caption: 0.002,
                },
            );
            let backends = synth::write_mock_backend(
                &out,
                "mock",
                &profile,
                &[Capability::Freeform, Capability::Logits, Capability::MultiImage],
                4,
            )?;
            println!("{}\n{}", manifest.display(), backends.display());
            Ok(())
        }
        Command::MatcherCheck { corpus } => {
            let cases = match corpus {
                Some(p) => regression::load(&p)?,
                None => regression::parse(regression::BUILTIN_CORPUS)?,
            };
            let failures = regression::check(&cases);
            for f in &failures {
                println!(
                    "FAIL line {}: {:?} vs `{}`: expected {}, got {}",
                    f.case.line, f.case.raw, f.case.truth, f.case.expected, f.got
                );
            }
            println!("{}/{} cases pass", cases.len() - failures.len(), cases.len());
            if failures.is_empty() {
                Ok(())
            } else {
                bail!("{} matcher regression(s)", failures.len())
            }
        }
    }
}

fn exit_code(err: &anyhow::Error) -> u8 {
    for cause in err.chain() {
        if cause.is::<UsageError>() {
            return EXIT_USAGE;
        }
        if cause.is::<ValidationFailed>() {
            return EXIT_VALIDATION;
        }
        if cause.is::<MissingArtifacts>() {
            return EXIT_MISSING_ARTIFACTS;
        }
        let gateway = cause
            .downcast_ref::<GatewayError>()
            .or_else(|| match cause.downcast_ref::<DetectorError>() {
                Some(DetectorError::Gateway(g)) => Some(g),
                _ => None,
            });
        match gateway {
            Some(GatewayError::CapabilityUnsupported { .. }) => return EXIT_CAPABILITY,
            Some(_) => return EXIT_GATEWAY,
            None => {}
        }
    }
    EXIT_GENERIC
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
