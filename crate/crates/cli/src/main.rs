//! `shiftlens` command-line tool.

mod manifest;

use std::collections::{BTreeMap, BTreeSet};
use std::fs::{self, File};
use std::io::BufReader;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, Context};
use clap::{Args, Parser, Subcommand};
use serde_json::json;

use shiftlens::cohort::{
    demographic_tests, run_group_analysis, select_covariates, Cohort, CovariatePolicy, Factor,
    Grouping,
};
use shiftlens::features::{featurize_stream, read_feature_csv, write_feature_csv, FeatureDelta};
use shiftlens::ingest::{
    parse_takeout_search, parse_takeout_youtube, write_events_to, ActivityEvent, RedactionReport,
};
use shiftlens::lexicon::{
    load_lexicon, CategoryProvider, Lexicon, MetadataClient, OfflineProvider, PooledProvider,
    RemoteConfig, RemoteProvider,
};
use shiftlens::report::{
    boxplot_data, render_demographics_markdown, render_report_markdown, write_demographics_csv,
    write_report_csv, ReportMeta,
};
use shiftlens::stats::Correction;
use shiftlens::synth::{generate_cohort, SynthSpec};
use shiftlens::timeline::AnalysisConfig;

use manifest::{sidecar, OutputDir, RunManifest, MANIFEST_FILE};

#[derive(Parser)]
#[command(
    name = "shiftlens",
    version,
    about = "Behavior-shift features and group statistics from activity exports"
)]
struct Cli {
    /// Analysis config (JSON); omitted fields take their defaults.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Only log errors.
    #[arg(long, short, global = true)]
    quiet: bool,
    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Parse a Takeout export into scrubbed canonical NDJSON.
    Ingest(IngestArgs),
    /// Compute per-participant feature changes from NDJSON event files.
    Features(FeaturesArgs),
    /// Group comparison tables and demographic tests.
    Analyze(AnalyzeArgs),
    /// Box-plot summaries per variable and group.
    Boxplot(BoxplotArgs),
    /// Generate a synthetic cohort with a planted shift.
    Simulate(SimulateArgs),
}

#[derive(Args)]
struct IngestArgs {
    /// Takeout directory; JSON files under a path naming YouTube or Search are read.
    #[arg(long)]
    takeout: PathBuf,
    #[arg(long)]
    pid: String,
    /// Participant UTC offset, e.g. -05:00.
    #[arg(long, value_parser = parse_tz, allow_hyphen_values = true)]
    tz: i32,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct FeaturesArgs {
    /// Canonical NDJSON files, each sorted by participant then time.
    #[arg(long, num_args = 1.., required = true)]
    events: Vec<PathBuf>,
    #[arg(long)]
    out: PathBuf,
    /// Cohort file supplying each participant's UTC offset.
    #[arg(long)]
    cohort: Option<PathBuf>,
    /// Offset for participants not in the cohort file.
    #[arg(long, value_parser = parse_tz, allow_hyphen_values = true, default_value = "+00:00")]
    tz: i32,
    /// Lexicon in .dic format (default: bundled demo lexicon).
    #[arg(long)]
    lexicon: Option<PathBuf>,
    /// Directory of <category>.domains / <category>.keywords lists.
    #[arg(long)]
    categories: Option<PathBuf>,
    /// Remote metadata provider config (JSON).
    #[arg(long)]
    remote: Option<PathBuf>,
}

#[derive(Args)]
struct AnalyzeArgs {
    #[arg(long)]
    cohort: PathBuf,
    #[arg(long)]
    features: PathBuf,
    #[arg(long)]
    grouping: Grouping,
    /// Output directory.
    #[arg(long)]
    out: PathBuf,
    /// Fixed covariates (comma separated, or "none"); chosen from the
    /// demographic tests when omitted.
    #[arg(long, value_delimiter = ',')]
    covariates: Option<Vec<String>>,
    #[arg(long, default_value_t = 0.05)]
    alpha: f64,
    /// yates, yates-unclamped or none.
    #[arg(long, value_parser = parse_correction, default_value = "yates")]
    correction: Correction,
}

#[derive(Args)]
struct BoxplotArgs {
    #[arg(long)]
    cohort: PathBuf,
    #[arg(long)]
    features: PathBuf,
    #[arg(long)]
    grouping: Grouping,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct SimulateArgs {
    #[arg(long)]
    spec: PathBuf,
    /// Overrides the spec's seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long)]
    out: PathBuf,
}

enum Failure {
    Usage(String),
    Data(anyhow::Error),
}

impl<E: Into<anyhow::Error>> From<E> for Failure {
    fn from(e: E) -> Self {
        Failure::Data(e.into())
    }
}

type Outcome = Result<(), Failure>;

fn parse_tz(s: &str) -> Result<i32, String> {
    if s == "Z" {
        return Ok(0);
    }
    let bad = || format!("invalid UTC offset {s:?}; expected ±HH:MM");
    let (sign, rest) = match s.as_bytes().first() {
        Some(b'+') => (1, &s[1..]),
        Some(b'-') => (-1, &s[1..]),
        _ => return Err(bad()),
    };
    let (h, m) = rest.split_once(':').ok_or_else(bad)?;
    if h.len() != 2 || m.len() != 2 {
        return Err(bad());
    }
    let h: i32 = h.parse().map_err(|_| bad())?;
    let m: i32 = m.parse().map_err(|_| bad())?;
    if h > 14 || m > 59 {
        return Err(bad());
    }
    Ok(sign * (h * 60 + m))
}

fn parse_correction(s: &str) -> Result<Correction, String> {
    match s {
        "yates" => Ok(Correction::Yates),
        "yates-unclamped" => Ok(Correction::YatesUnclamped),
        "none" => Ok(Correction::None),
        _ => Err(format!("unknown correction {s:?}")),
    }
}

fn load_config(path: Option<&Path>) -> Result<AnalysisConfig, Failure> {
    let Some(path) = path else {
        return Ok(AnalysisConfig::default());
    };
    let doc = fs::read_to_string(path)
        .with_context(|| format!("reading config {}", path.display()))
        .map_err(|e| Failure::Usage(format!("{e:#}")))?;
    AnalysisConfig::from_json(&doc).map_err(|e| Failure::Usage(format!("{}: {e}", path.display())))
}

fn config_json(cfg: &AnalysisConfig) -> String {
    serde_json::to_string(cfg).expect("config serializes")
}

fn read_text(path: &Path) -> anyhow::Result<String> {
    fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))
}

fn load_cohort(path: &Path) -> anyhow::Result<Cohort> {
    let c = Cohort::from_json(&read_text(path)?)
        .with_context(|| format!("cohort {}", path.display()))?;
    c.validate()
        .with_context(|| format!("cohort {}", path.display()))?;
    Ok(c)
}

fn load_features(path: &Path) -> anyhow::Result<Vec<FeatureDelta>> {
    let f = File::open(path).with_context(|| format!("opening {}", path.display()))?;
    read_feature_csv(BufReader::new(f)).with_context(|| format!("features {}", path.display()))
}

/// Writes one file plus its sidecar manifest.
fn write_single(out: &Path, bytes: &[u8], manifest: &mut RunManifest) -> anyhow::Result<()> {
    let dir = out.parent().map(Path::to_path_buf).unwrap_or_default();
    let name = out
        .file_name()
        .ok_or_else(|| anyhow!("output path {} has no file name", out.display()))?
        .to_string_lossy()
        .into_owned();
    if !dir.as_os_str().is_empty() {
        fs::create_dir_all(&dir)?;
    }
    OutputDir { dir, manifest }.put(&name, bytes)?;
    manifest.write(&sidecar(out))?;
    Ok(())
}

#[derive(Clone, Copy)]
enum Source {
    Search,
    Youtube,
}

fn takeout_files(dir: &Path) -> anyhow::Result<Vec<(PathBuf, Source)>> {
    if !dir.is_dir() {
        anyhow::bail!("{} is not a directory", dir.display());
    }
    let mut out = Vec::new();
    for entry in walkdir::WalkDir::new(dir).sort_by_file_name() {
        let entry = entry?;
        let path = entry.path();
        if !entry.file_type().is_file() || path.extension().is_none_or(|e| e != "json") {
            continue;
        }
        let rel = path
            .strip_prefix(dir)
            .unwrap_or(path)
            .to_string_lossy()
            .to_lowercase();
        if rel.contains("youtube") {
            out.push((path.to_path_buf(), Source::Youtube));
        } else if rel.contains("search") {
            out.push((path.to_path_buf(), Source::Search));
        } else {
            log::warn!(
                "skipping {}: not a Search or YouTube activity file",
                path.display()
            );
        }
    }
    if out.is_empty() {
        anyhow::bail!(
            "no Search or YouTube activity files under {}",
            dir.display()
        );
    }
    Ok(out)
}

fn cmd_ingest(a: &IngestArgs) -> Outcome {
    let mut events: Vec<ActivityEvent> = Vec::new();
    let mut redactions = RedactionReport::default();
    let (mut skipped, mut item_errors) = (0, 0);
    let mut manifest = RunManifest::new(
        "ingest",
        "{}",
        json!({"pid": a.pid, "tz_offset_minutes": a.tz}),
    );
    for (path, source) in takeout_files(&a.takeout)? {
        let doc = read_text(&path)?;
        let parsed = match source {
            Source::Search => parse_takeout_search(&doc, &a.pid),
            Source::Youtube => parse_takeout_youtube(&doc, &a.pid),
        }
        .with_context(|| format!("parsing {}", path.display()))?;
        for e in &parsed.errors {
            log::warn!("{}: item {}: {}", path.display(), e.index, e.message);
        }
        manifest.input(&path)?;
        events.extend(parsed.events);
        redactions += parsed.redactions;
        skipped += parsed.skipped;
        item_errors += parsed.errors.len();
    }
    events.sort_by_key(|e| e.ts);
    let mut buf = Vec::new();
    write_events_to(&mut buf, &events)?;
    write_single(&a.out, &buf, &mut manifest)?;
    println!(
        "{}: {} events written to {} (skipped {skipped}, item errors {item_errors})",
        a.pid,
        events.len(),
        a.out.display()
    );
    println!(
        "redactions: email {}, phone {}, ssn {}, credit_card {}",
        redactions.email, redactions.phone, redactions.ssn, redactions.credit_card
    );
    Ok(())
}

fn build_provider(a: &FeaturesArgs) -> anyhow::Result<Box<dyn CategoryProvider>> {
    let offline = match &a.categories {
        Some(dir) => OfflineProvider::load_dir(dir)
            .with_context(|| format!("category lists {}", dir.display()))?,
        None => OfflineProvider::bundled(),
    };
    let Some(remote) = &a.remote else {
        return Ok(Box::new(offline));
    };
    let cfg: RemoteConfig = serde_json::from_str(&read_text(remote)?)
        .with_context(|| format!("remote config {}", remote.display()))?;
    let client = MetadataClient::new(cfg)?;
    Ok(Box::new(PooledProvider::new(vec![
        Box::new(offline),
        Box::new(RemoteProvider::new(client)),
    ])))
}

const CHUNK: usize = 64;

fn cmd_features(cli: &Cli, a: &FeaturesArgs) -> Outcome {
    let Some(cfg_path) = cli.config.as_deref() else {
        return Err(Failure::Usage("features requires --config <json>".into()));
    };
    let cfg = load_config(Some(cfg_path))?;
    let lexicon = match &a.lexicon {
        Some(p) => {
            load_lexicon(&read_text(p)?).with_context(|| format!("lexicon {}", p.display()))?
        }
        None => Lexicon::demo(),
    };
    let provider = build_provider(a)?;
    let tz_of: BTreeMap<String, i32> = match &a.cohort {
        Some(p) => load_cohort(p)?
            .participants
            .into_iter()
            .map(|p| (p.id, p.tz_offset))
            .collect(),
        None => BTreeMap::new(),
    };
    let tz = |pid: &str| tz_of.get(pid).copied().unwrap_or(a.tz);

    let mut manifest = RunManifest::new(
        "features",
        &config_json(&cfg),
        json!({"lexicon": a.lexicon, "categories": a.categories, "remote": a.remote.is_some()}),
    );
    let mut rows = Vec::new();
    let mut seen = BTreeSet::new();
    for path in &a.events {
        let f = File::open(path).with_context(|| format!("opening {}", path.display()))?;
        let part = featurize_stream(
            BufReader::new(f),
            &cfg,
            &tz,
            &lexicon,
            provider.as_ref(),
            CHUNK,
        )
        .with_context(|| format!("reading {}", path.display()))?;
        for r in &part.rows {
            if !seen.insert(r.participant_id.clone()) {
                return Err(anyhow!(
                    "participant {} appears in more than one place",
                    r.participant_id
                )
                .into());
            }
        }
        rows.extend(part.rows);
        manifest.input(path)?;
    }
    for r in &rows {
        for f in &r.flags {
            log::warn!("{}: {} {}", r.participant_id, f.variable, f.reason.as_str());
        }
    }
    let mut buf = Vec::new();
    write_feature_csv(&mut buf, &rows)?;
    write_single(&a.out, &buf, &mut manifest)?;
    log::info!("{} participants written to {}", rows.len(), a.out.display());
    Ok(())
}

fn covariate_policy(a: &AnalyzeArgs) -> Result<CovariatePolicy, Failure> {
    let Some(list) = &a.covariates else {
        return Ok(CovariatePolicy::DataDriven {
            alpha: a.alpha,
            correction: a.correction,
        });
    };
    let mut out = Vec::new();
    for name in list.iter().filter(|s| !s.is_empty() && *s != "none") {
        out.push(
            name.parse::<Factor>()
                .map_err(|e| Failure::Usage(e.to_string()))?,
        );
    }
    Ok(CovariatePolicy::Fixed(out))
}

fn cmd_analyze(cli: &Cli, a: &AnalyzeArgs) -> Outcome {
    if !(a.alpha > 0.0 && a.alpha < 1.0) {
        return Err(Failure::Usage("--alpha must lie in (0, 1)".into()));
    }
    let cfg = load_config(cli.config.as_deref())?;
    let policy = covariate_policy(a)?;
    let cohort = load_cohort(&a.cohort)?;
    let features = load_features(&a.features)?;
    let covariates = select_covariates(&cohort, &policy).context("selecting covariates")?;
    let analysis = run_group_analysis(&cohort, a.grouping, &features, &covariates, a.alpha)?;
    let mut demographics = demographic_tests(&cohort, Grouping::Dep, a.correction)?;
    demographics.extend(demographic_tests(&cohort, Grouping::Anx, a.correction)?);

    let mut manifest = RunManifest::new(
        "analyze",
        &config_json(&cfg),
        json!({
            "grouping": a.grouping,
            "alpha": a.alpha,
            "correction": a.correction,
            "covariates": covariates.iter().map(|f| f.name()).collect::<Vec<_>>(),
        }),
    );
    manifest.input(&a.cohort)?;
    manifest.input(&a.features)?;

    let g = a.grouping;
    let mut report_csv = Vec::new();
    write_report_csv(&mut report_csv, &analysis)?;
    let meta = ReportMeta {
        kl_epsilon: cfg.kl_epsilon,
        manifest: Some(MANIFEST_FILE.into()),
    };
    let report_md = render_report_markdown(&analysis, &meta);
    let mut demo_csv = Vec::new();
    write_demographics_csv(&mut demo_csv, &demographics)?;
    let demo_md = format!(
        "{}\nManifest: {MANIFEST_FILE}\n",
        render_demographics_markdown(&demographics)
    );

    fs::create_dir_all(&a.out).with_context(|| format!("creating {}", a.out.display()))?;
    let mut out = OutputDir {
        dir: a.out.clone(),
        manifest: &mut manifest,
    };
    out.put(&format!("report_{g}.csv"), &report_csv)?;
    out.put(&format!("report_{g}.md"), report_md.as_bytes())?;
    out.put("demographics.csv", &demo_csv)?;
    out.put("demographics.md", demo_md.as_bytes())?;
    manifest.write(&a.out.join(MANIFEST_FILE))?;
    if !cli.quiet {
        print!("{report_md}");
    }
    Ok(())
}

fn cmd_boxplot(a: &BoxplotArgs) -> Outcome {
    let cohort = load_cohort(&a.cohort)?;
    let features = load_features(&a.features)?;
    let entries = boxplot_data(&cohort, a.grouping, &features)?;
    for e in &entries {
        for (g, s) in &e.groups {
            if s.is_none() {
                log::warn!("{}: group {g} has fewer than two values", e.variable);
            }
        }
    }
    let mut manifest = RunManifest::new("boxplot", "{}", json!({"grouping": a.grouping}));
    manifest.input(&a.cohort)?;
    manifest.input(&a.features)?;
    let mut doc = serde_json::to_string_pretty(&entries)?;
    doc.push('\n');
    write_single(&a.out, doc.as_bytes(), &mut manifest)?;
    Ok(())
}

fn cmd_simulate(cli: &Cli, a: &SimulateArgs) -> Outcome {
    let mut spec = SynthSpec::from_json(&read_text(&a.spec)?)
        .with_context(|| format!("spec {}", a.spec.display()))?;
    if cli.config.is_some() {
        spec.analysis = load_config(cli.config.as_deref())?;
    }
    if let Some(seed) = a.seed {
        spec.seed = seed;
    }
    let synth = generate_cohort(&spec)?;
    let spec_json = serde_json::to_string_pretty(&spec)?;
    let mut manifest = RunManifest::new(
        "simulate",
        &config_json(&spec.analysis),
        json!({"seed": spec.seed}),
    );
    manifest.input(&a.spec)?;

    fs::create_dir_all(&a.out).with_context(|| format!("creating {}", a.out.display()))?;
    let mut out = OutputDir {
        dir: a.out.clone(),
        manifest: &mut manifest,
    };
    out.put("spec.json", format!("{spec_json}\n").as_bytes())?;
    out.put(
        "cohort.json",
        format!("{}\n", synth.cohort.to_json()).as_bytes(),
    )?;
    let truth = serde_json::to_string_pretty(&synth.ground_truth)?;
    out.put("ground_truth.json", format!("{truth}\n").as_bytes())?;
    for (p, xs) in synth.cohort.participants.iter().zip(&synth.events) {
        let mut buf = Vec::new();
        write_events_to(&mut buf, xs)?;
        out.put(&format!("events/{}.ndjson", p.id), &buf)?;
    }
    manifest.write(&a.out.join(MANIFEST_FILE))?;
    log::info!(
        "{} participants ({} affected) written to {}",
        spec.n,
        synth.ground_truth.affected.len(),
        a.out.display()
    );
    Ok(())
}

fn run(cli: &Cli) -> Outcome {
    if let Some(n) = cli.threads {
        if n == 0 {
            return Err(Failure::Usage("--threads must be at least 1".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()?;
    }
    match &cli.command {
        Command::Ingest(a) => cmd_ingest(a),
        Command::Features(a) => cmd_features(cli, a),
        Command::Analyze(a) => cmd_analyze(cli, a),
        Command::Boxplot(a) => cmd_boxplot(a),
        Command::Simulate(a) => cmd_simulate(cli, a),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(2)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    let mut logs = env_logger::Builder::new();
    logs.filter_level(log::LevelFilter::Info)
        .format_timestamp(None)
        .parse_default_env();
    if cli.quiet {
        logs.filter_level(log::LevelFilter::Error);
    }
    logs.init();

    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
        Err(Failure::Data(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
