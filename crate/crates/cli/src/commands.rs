use std::collections::BTreeMap;
use std::io::BufRead;
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Duration;

use anyhow::{bail, ensure, Context, Result};
use clap::{Args, Subcommand, ValueEnum};
use snopkit::agent::{
    Mode, Pipeline, ReviewPolicy, RunStatus, Task, CONFIRMED_MARKER, PENDING_MARKER, REVIEW_DIR,
};
use snopkit::bench::{
    run_matrix, sweep, write_csv, write_json, write_plot_data, write_sweep_csv, BackendProvider,
    BenchSettings, RecordingProvider, ReplayProvider, SharedProvider, SweepParameter,
};
use snopkit::corpus::{
    check_output, integrity_check, load_corpus, load_instance, load_test_dir, NegativeExpectation,
    ProblemInstance,
};
use snopkit::craft::craft_transcripts;
use snopkit::llm::{
    token_totals_of, ChatBackend, LiveBackend, RecordingBackend, ReplayBackend, Transcript,
};

use crate::config::{BackendKind, CliConfig};

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run the pipeline on one problem
    Solve(SolveArgs),
    /// Run the mode matrix (or a parameter sweep) over a corpus
    Bench(BenchArgs),
    /// Craft or inspect replay transcripts
    #[command(subcommand)]
    Transcripts(TranscriptsCommand),
    /// Corpus maintenance
    #[command(subcommand)]
    Corpus(CorpusCommand),
    /// Confirm the generated tests of a run paused for review
    Review(ReviewArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ReviewKind {
    /// Use the supplied tests, if any, in place of generated ones
    Batch,
    /// Pause until the tests are confirmed with `snopkit review`
    Interactive,
}

#[derive(Debug, Args)]
pub struct SolveArgs {
    /// SNOP file describing the problem
    pub snop: PathBuf,
    /// JSON data file
    pub data: PathBuf,
    /// Run directory name (default: a timestamp)
    #[arg(long)]
    pub run_id: Option<String>,
    /// Directory of supervised test scripts
    #[arg(long, value_name = "DIR")]
    pub tests: Option<PathBuf>,
    /// How generated tests are reviewed
    #[arg(long, value_enum, default_value = "batch")]
    pub review: ReviewKind,
    /// How long an interactive review may take
    #[arg(long, value_name = "SECS", default_value_t = 3600)]
    pub review_timeout_secs: u64,
}

#[derive(Debug, Args)]
pub struct BenchArgs {
    /// Corpus root holding manifest.json
    #[arg(default_value = "fixtures/corpus")]
    pub corpus: PathBuf,
    /// Comma-separated modes (default: all five)
    #[arg(long, value_delimiter = ',', value_parser = parse_mode)]
    pub modes: Vec<Mode>,
    /// Comma-separated instance ids (default: all)
    #[arg(long, value_delimiter = ',')]
    pub instances: Vec<String>,
    /// Parameter sweep, e.g. augmentations=0..5 or iters=0,1,3
    #[arg(long, value_name = "PARAM=VALUES")]
    pub sweep: Option<String>,
    /// Output directory for tables and reports
    #[arg(long, default_value = "bench-out")]
    pub out: PathBuf,
}

#[derive(Debug, Subcommand)]
pub enum TranscriptsCommand {
    /// Regenerate transcripts from the scripted scenarios
    Craft {
        /// Fixture directory holding corpus/ and scenarios.json
        #[arg(long, default_value = "fixtures")]
        fixtures: PathBuf,
        /// Output root (default: <fixtures>/transcripts)
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Summarize a transcript file
    Inspect {
        /// Transcript file (JSON lines)
        file: PathBuf,
    },
}

#[derive(Debug, Subcommand)]
pub enum CorpusCommand {
    /// Check manifests, formats, sample outputs and seeded negatives
    Validate {
        /// Corpus root holding manifest.json
        #[arg(default_value = "fixtures/corpus")]
        root: PathBuf,
    },
}

#[derive(Debug, Args)]
pub struct ReviewArgs {
    /// Run awaiting review
    pub run_id: String,
}

fn parse_mode(s: &str) -> Result<Mode, String> {
    s.parse()
}

pub fn run(command: Command, cfg: &CliConfig) -> Result<u8> {
    match command {
        Command::Solve(a) => solve(a, cfg),
        Command::Bench(a) => bench(a, cfg),
        Command::Transcripts(TranscriptsCommand::Craft { fixtures, out }) => {
            craft(&fixtures, out, cfg)
        }
        Command::Transcripts(TranscriptsCommand::Inspect { file }) => inspect(&file),
        Command::Corpus(CorpusCommand::Validate { root }) => validate(&root, cfg),
        Command::Review(a) => review(&a.run_id, cfg, &mut std::io::stdin().lock()),
    }
}

fn live(cfg: &CliConfig) -> LiveBackend {
    LiveBackend::new(cfg.live())
}

fn solve(a: SolveArgs, cfg: &CliConfig) -> Result<u8> {
    for (what, p) in [("SNOP file", &a.snop), ("data file", &a.data)] {
        ensure!(p.is_file(), "{what} {} does not exist", p.display());
    }
    let id = a
        .snop
        .parent()
        .and_then(|p| p.file_name())
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "task".into());
    let mut task = Task::from_files(&id, &a.snop, &a.data)?;
    if let Some(dir) = &a.tests {
        ensure!(
            dir.is_dir(),
            "test directory {} does not exist",
            dir.display()
        );
        task.supervised_tests = load_test_dir(dir)?;
    }
    let run_id = a.run_id.clone().unwrap_or_else(|| {
        chrono::Utc::now()
            .format("solve-%Y%m%dT%H%M%S%.3fZ")
            .to_string()
    });
    let backend: Box<dyn ChatBackend> = match cfg.backend {
        BackendKind::Live => Box::new(live(cfg)),
        BackendKind::Replay => {
            Box::new(ReplayBackend::load(cfg.transcript_or("--backend replay")?)?)
        }
        BackendKind::Record => Box::new(RecordingBackend::new(
            live(cfg),
            cfg.transcript_or("--backend record")?,
            run_id.clone(),
        )),
    };
    let review = match a.review {
        ReviewKind::Batch => ReviewPolicy::Batch,
        ReviewKind::Interactive => {
            eprintln!("generated tests will wait for `snopkit review {run_id}`");
            ReviewPolicy::interactive(Duration::from_secs(a.review_timeout_secs))
        }
    };
    let config = cfg.overrides().apply(cfg.mode);
    let prompts = cfg.prompts()?;
    let sandbox = cfg.sandbox();
    let pipeline = Pipeline {
        config,
        backend: backend.as_ref(),
        prompts: &prompts,
        executor: &sandbox,
        review,
        runs_dir: cfg.runs_dir.clone(),
    };
    let record = pipeline.run(&task, &run_id)?;
    let run_dir = pipeline.run_dir(&run_id);
    println!("status: {}", record.status);
    println!("run: {}", run_dir.display());
    let shown = record.winning_workspace().map(str::to_string).or_else(|| {
        record
            .attempts
            .iter()
            .find(|x| x.produced_output())
            .and_then(|x| x.workspace.clone())
    });
    if let Some(ws) = shown {
        println!("output: {}", run_dir.join(ws).join("output.json").display());
    }
    for att in &record.attempts {
        if let Some(f) = &att.failure {
            println!("attempt {}: {f}", att.id);
        }
    }
    Ok(match record.status {
        RunStatus::Solved => 0,
        RunStatus::ExecutedOnly => 2,
        RunStatus::Failed => 3,
    })
}

fn parse_sweep(arg: &str) -> Result<(SweepParameter, Vec<u32>)> {
    let (name, values) = arg
        .split_once('=')
        .with_context(|| format!("sweep `{arg}` must look like PARAM=VALUES"))?;
    let param: SweepParameter = name.trim().parse().map_err(anyhow::Error::msg)?;
    let values = values.trim();
    let list: Vec<u32> = if let Some((lo, hi)) = values.split_once("..") {
        let lo: u32 = lo
            .parse()
            .with_context(|| format!("bad sweep start `{lo}`"))?;
        let hi: u32 = hi
            .trim_start_matches('=')
            .parse()
            .with_context(|| format!("bad sweep end `{hi}`"))?;
        ensure!(lo <= hi, "empty sweep range {lo}..{hi}");
        (lo..=hi).collect()
    } else {
        values
            .split(',')
            .map(|v| {
                v.trim()
                    .parse()
                    .with_context(|| format!("bad sweep value `{v}`"))
            })
            .collect::<Result<_>>()?
    };
    ensure!(!list.is_empty(), "sweep has no values");
    Ok((param, list))
}

fn provider(cfg: &CliConfig) -> Result<Box<dyn BackendProvider>> {
    Ok(match cfg.backend {
        BackendKind::Replay => {
            let root = cfg.transcript_or("--backend replay")?;
            ensure!(
                root.is_dir(),
                "transcript root {} is not a directory",
                root.display()
            );
            Box::new(ReplayProvider {
                root: root.to_path_buf(),
            })
        }
        BackendKind::Live => Box::new(SharedProvider(Arc::new(live(cfg)))),
        BackendKind::Record => Box::new(RecordingProvider {
            inner: SharedProvider(Arc::new(live(cfg))),
            root: cfg.transcript_or("--backend record")?.to_path_buf(),
        }),
    })
}

fn bench(a: BenchArgs, cfg: &CliConfig) -> Result<u8> {
    let manifest = load_corpus(&a.corpus)?;
    let ids: Vec<String> = if a.instances.is_empty() {
        manifest.ids().map(str::to_string).collect()
    } else {
        a.instances.clone()
    };
    let instances: Vec<ProblemInstance> = ids
        .iter()
        .map(|id| load_instance(&manifest, id))
        .collect::<Result<_, _>>()?;
    let provider = provider(cfg)?;
    let prompts = cfg.prompts()?;
    let sandbox = cfg.sandbox();
    let mut settings = BenchSettings::new(&cfg.runs_dir);
    settings.overrides = cfg.overrides();
    settings.workers = cfg.workers;
    settings.corpus_version = manifest.version.clone();

    if let Some(arg) = &a.sweep {
        let (param, values) = parse_sweep(arg)?;
        let points = sweep(
            &instances,
            param,
            &values,
            cfg.mode,
            &settings,
            provider.as_ref(),
            &sandbox,
            &prompts,
        )?;
        let path = a.out.join("sweep.csv");
        write_sweep_csv(&points, &path)?;
        println!(
            "{:<14} {:>6} {:<18} {:>13} {:>15}",
            "parameter", "value", "mode", "success_rate", "execution_rate"
        );
        for p in &points {
            println!(
                "{:<14} {:>6} {:<18} {:>13.3} {:>15.3}",
                p.parameter.as_str(),
                p.value,
                p.mode.as_str(),
                p.success_rate,
                p.execution_rate
            );
        }
        println!("sweep: {}", path.display());
        return Ok(0);
    }

    let modes = if a.modes.is_empty() {
        Mode::ALL.to_vec()
    } else {
        a.modes.clone()
    };
    let report = run_matrix(
        &instances,
        &modes,
        &settings,
        provider.as_ref(),
        &sandbox,
        &prompts,
    )?;
    let csv = a.out.join("runs.csv");
    write_csv(&report.rows, &csv)?;
    let lengths: BTreeMap<String, usize> = instances
        .iter()
        .map(|i| (i.id.clone(), i.snop.serialize().chars().count()))
        .collect();
    let plot = a.out.join("plot.csv");
    write_plot_data(&report, &lengths, &plot)?;
    let json = write_json(&report, &a.out.join("reports"))?;
    print!("{}", report.rate_table());
    for s in &report.modes {
        println!(
            "{} solved-run completion tokens: sum {} mean {:.1} sd {:.1}",
            s.mode, s.solved_tokens.sum, s.solved_tokens.mean, s.solved_tokens.stddev
        );
    }
    println!("runs: {}", csv.display());
    println!("plot: {}", plot.display());
    println!("report: {}", json.display());
    Ok(0)
}

fn craft(fixtures: &Path, out: Option<PathBuf>, cfg: &CliConfig) -> Result<u8> {
    let out = out.unwrap_or_else(|| fixtures.join("transcripts"));
    let scratch = tempfile::tempdir().context("cannot create scratch directory")?;
    let files = craft_transcripts(
        fixtures,
        &out,
        scratch.path(),
        &cfg.sandbox(),
        &cfg.prompts()?,
    )?;
    for f in &files {
        println!("{}", f.display());
    }
    println!("{} transcripts written", files.len());
    Ok(0)
}

fn inspect(file: &Path) -> Result<u8> {
    let t = Transcript::load(file)?;
    println!(
        "{:>4}  {:<28} {:<20} {:>7} {:>7}  first line",
        "seq", "run", "template", "prompt", "compl"
    );
    for r in &t.records {
        let first = r
            .completion
            .lines()
            .find(|l| !l.trim().is_empty())
            .unwrap_or("");
        let first: String = first.chars().take(48).collect();
        println!(
            "{:>4}  {:<28} {:<20} {:>7} {:>7}  {first}",
            r.seq,
            r.run_id,
            r.request.tag.as_deref().unwrap_or("-"),
            r.prompt_tokens,
            r.completion_tokens
        );
    }
    let counts: Vec<u64> = t.records.iter().map(|r| r.completion_tokens).collect();
    let tt = token_totals_of(&counts);
    println!(
        "{} records; completion tokens sum {} mean {:.1} sd {:.1}",
        t.len(),
        tt.sum,
        tt.mean,
        tt.stddev
    );
    Ok(0)
}

fn validate(root: &Path, cfg: &CliConfig) -> Result<u8> {
    let manifest = load_corpus(root)?;
    let scratch = tempfile::tempdir().context("cannot create scratch directory")?;
    let sandbox = cfg.sandbox();
    let timeout = Duration::from_secs(cfg.timeout_secs);
    let mut failures = 0;
    for id in manifest.ids() {
        let problems = match check_instance(&manifest, id, &sandbox, scratch.path(), timeout) {
            Ok(p) => p,
            Err(e) => vec![format!("{e:#}")],
        };
        if problems.is_empty() {
            println!("ok    {id}");
        } else {
            failures += 1;
            for p in problems {
                println!("FAIL  {id}: {p}");
            }
        }
    }
    println!("{} instances, {failures} failing", manifest.len());
    Ok(if failures == 0 { 0 } else { 1 })
}

fn check_instance(
    manifest: &snopkit::corpus::CorpusManifest,
    id: &str,
    sandbox: &snopkit::sandbox::ProcessSandbox,
    scratch: &Path,
    timeout: Duration,
) -> Result<Vec<String>> {
    let inst = load_instance(manifest, id)?;
    let mut problems = Vec::new();
    let sample = integrity_check(&inst, sandbox, scratch, timeout)?;
    if !sample.is_clean() {
        problems.push(format!("sample output fails: {:?}", sample.failed_tests()));
    }
    match sample.objective {
        Some(v) if (v - inst.optimal_value).abs() <= 1e-9 => {}
        other => problems.push(format!(
            "sample objective {other:?} differs from optimum {}",
            inst.optimal_value
        )),
    }
    for neg in &inst.negatives {
        let path = inst.dir.join(&neg.file);
        let text = std::fs::read_to_string(&path)
            .with_context(|| format!("cannot read {}", path.display()))?;
        let doc = serde_json::from_str(&text)
            .with_context(|| format!("{} is not JSON", path.display()))?;
        let r = check_output(&inst, &doc, sandbox, scratch, timeout)?;
        let caught = match neg.expect {
            NegativeExpectation::TestFailure => match &neg.test {
                Some(t) => r.failed_tests().contains(&t.as_str()),
                None => !r.tests.passed,
            },
            other => other
                .violation_kind()
                .is_some_and(|k| r.output.kinds().contains(&k)),
        };
        if !caught {
            problems.push(format!(
                "negative {} not detected as {:?}",
                neg.file, neg.expect
            ));
        }
    }
    Ok(problems)
}

/// Finds the pending review of `run_id`, shows where its tests are, waits for
/// a line on `input` (or end of input) and confirms.
pub fn review(run_id: &str, cfg: &CliConfig, input: &mut dyn BufRead) -> Result<u8> {
    let review_root = cfg.runs_dir.join(run_id).join(REVIEW_DIR);
    let mut pending: Vec<PathBuf> = std::fs::read_dir(&review_root)
        .map(|entries| {
            entries
                .filter_map(|e| e.ok().map(|e| e.path()))
                .filter(|p| p.join(PENDING_MARKER).exists())
                .collect()
        })
        .unwrap_or_default();
    pending.sort();
    let Some(dir) = pending.first() else {
        bail!(
            "run `{run_id}` has no tests awaiting review under {}",
            review_root.display()
        );
    };
    let tests = dir.join("tests");
    println!("tests awaiting review: {}", tests.display());
    let mut files: Vec<PathBuf> = std::fs::read_dir(&tests)
        .with_context(|| format!("cannot list {}", tests.display()))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .collect();
    files.sort();
    for f in &files {
        println!("  {}", f.display());
    }
    println!("edit, add or remove test files, then press Enter to resume the run");
    let mut line = String::new();
    input
        .read_line(&mut line)
        .context("cannot read confirmation")?;
    let marker = dir.join(CONFIRMED_MARKER);
    std::fs::write(&marker, "").with_context(|| format!("cannot write {}", marker.display()))?;
    println!("confirmed");
    Ok(0)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sweep_specs() {
        let (p, v) = parse_sweep("augmentations=0..5").unwrap();
        assert_eq!(p, SweepParameter::Augmentations);
        assert_eq!(v, [0, 1, 2, 3, 4, 5]);
        assert_eq!(parse_sweep("iters=0,2").unwrap().1, [0, 2]);
        assert!(parse_sweep("augmentations").is_err());
        assert!(parse_sweep("speed=1..2").is_err());
        assert!(parse_sweep("iters=3..1").is_err());
    }

    #[test]
    fn review_without_pending_run_fails() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = CliConfig {
            runs_dir: dir.path().to_path_buf(),
            ..CliConfig::default()
        };
        assert!(review("nope", &cfg, &mut std::io::Cursor::new("\n")).is_err());
    }

    #[test]
    fn review_confirms_the_pending_attempt() {
        let dir = tempfile::tempdir().unwrap();
        let att = dir.path().join("r").join(REVIEW_DIR).join("attempt-0");
        std::fs::create_dir_all(att.join("tests")).unwrap();
        std::fs::write(att.join(PENDING_MARKER), "").unwrap();
        let cfg = CliConfig {
            runs_dir: dir.path().to_path_buf(),
            ..CliConfig::default()
        };
        assert_eq!(
            review("r", &cfg, &mut std::io::Cursor::new("\n")).unwrap(),
            0
        );
        assert!(att.join(CONFIRMED_MARKER).exists());
    }
}
