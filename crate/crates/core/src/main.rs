use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use esec::eval::{generate_suite, parse_list, run_ablation};
use esec::event_chain::ESecMatrix;
use esec::noise::{perturb, NoiseLevel, NoiseSpec};
use esec::pipeline::{extract_matrix, reason, Engine, Variant};
use esec::primitives::{DecisionRecord, PrimitiveLibrary};
use esec::semantics::AffordanceRegistry;
use esec::simulator::{generate_episode, load_suite, write_script, EpisodeScript};
use esec::stream::{read_episode, write_episode};
use esec::{EngineConfig, EsecError, Result};

#[derive(Parser)]
#[command(name = "esec", version, about = "Confidence-aware semantic event chains for manipulation streams")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate detection streams and ground-truth sidecars from scripts.
    Simulate(SimulateArgs),
    /// Write the bundled script suite as JSON files.
    ExportSuite {
        #[arg(long)]
        out: PathBuf,
    },
    /// Detection stream → event matrix.
    Extract(ExtractArgs),
    /// Event matrix → primitive decisions and explanation traces.
    Reason(ReasonArgs),
    /// Apply a noise level or spec to a detection stream.
    Perturb(PerturbArgs),
    /// Multi-seed, multi-variant evaluation over a script suite.
    Evaluate(EvaluateArgs),
}

#[derive(Args)]
struct EngineArgs {
    /// Engine thresholds (TOML or JSON); defaults when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, default_value = "full")]
    variant: String,
}

#[derive(Args)]
struct SimulateArgs {
    /// Directory of script files; the bundled suite when omitted.
    #[arg(long)]
    suite: Option<PathBuf>,
    /// A single script file.
    #[arg(long, conflicts_with = "suite")]
    script: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Output directory; defaults to the suite directory.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    config: Option<PathBuf>,
}

#[derive(Args)]
struct ExtractArgs {
    #[arg(long = "in")]
    input: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[command(flatten)]
    engine: EngineArgs,
}

#[derive(Args)]
struct ReasonArgs {
    #[arg(long)]
    esec: PathBuf,
    /// Primitive library; the bundled library when omitted.
    #[arg(long)]
    library: Option<PathBuf>,
    /// Class → affordance table; the bundled table when omitted.
    #[arg(long)]
    affordances: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
    /// Optional segment list output (JSON).
    #[arg(long)]
    segments: Option<PathBuf>,
    #[command(flatten)]
    engine: EngineArgs,
}

#[derive(Args)]
struct PerturbArgs {
    #[arg(long = "in")]
    input: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, conflicts_with = "spec")]
    level: Option<String>,
    /// Explicit noise spec (JSON).
    #[arg(long)]
    spec: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Identifier mixed into the random stream; defaults to the input file stem.
    #[arg(long)]
    episode_id: Option<String>,
    #[arg(long)]
    config: Option<PathBuf>,
}

#[derive(Args)]
struct EvaluateArgs {
    /// Directory of script files; the bundled suite when omitted.
    #[arg(long)]
    suite: Option<PathBuf>,
    #[arg(long, default_value = "full,no_confidence,no_affordance,no_roles,no_primitive_reasoning")]
    variants: String,
    #[arg(long, default_value = "clean,low,medium,high")]
    levels: String,
    /// Number of seeds (0..N).
    #[arg(long, default_value_t = 10)]
    seeds: u64,
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    library: Option<PathBuf>,
    #[arg(long)]
    affordances: Option<PathBuf>,
}

fn load_config(path: Option<&Path>) -> Result<EngineConfig> {
    match path {
        Some(p) => EngineConfig::load(p),
        None => Ok(EngineConfig::default()),
    }
}

fn load_engine(config: Option<&Path>, library: Option<&Path>, affordances: Option<&Path>) -> Result<Engine> {
    let cfg = load_config(config)?;
    let library = match library {
        Some(p) => PrimitiveLibrary::load(p)?,
        None => PrimitiveLibrary::bundled(),
    };
    let affordances = match affordances {
        Some(p) => AffordanceRegistry::from_json_str(&std::fs::read_to_string(p)?)?,
        None => AffordanceRegistry::bundled(),
    };
    Ok(Engine::new(cfg, library, affordances))
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir)?;
    }
    Ok(BufWriter::new(File::create(path)?))
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    let mut w = create(path)?;
    w.write_all(text.as_bytes())?;
    w.flush()?;
    Ok(())
}

fn simulate(args: SimulateArgs) -> Result<()> {
    let cfg = load_config(args.config.as_deref())?;
    let scripts: Vec<EpisodeScript> = match (&args.script, &args.suite) {
        (Some(p), _) => vec![EpisodeScript::load(p)?],
        (None, Some(dir)) => load_suite(dir)?,
        (None, None) => esec::suite::bundled_suite(),
    };
    let out = args
        .out
        .or(args.suite.clone())
        .ok_or_else(|| EsecError::Config("--out is required without --suite".to_string()))?;
    std::fs::create_dir_all(&out)?;
    for s in &scripts {
        let (episode, gt) = generate_episode(s, args.seed, cfg.window)?;
        let mut w = create(&out.join(format!("{}.jsonl", s.name)))?;
        write_episode(&episode, &mut w)?;
        w.flush()?;
        write_text(&out.join(format!("{}.gt.json", s.name)), &(serde_json::to_string_pretty(&gt)? + "\n"))?;
    }
    eprintln!("wrote {} episodes to {}", scripts.len(), out.display());
    Ok(())
}

fn export_suite(out: &Path) -> Result<()> {
    std::fs::create_dir_all(out)?;
    let suite = esec::suite::bundled_suite();
    for s in &suite {
        write_script(s, &out.join(format!("{}.json", s.name)))?;
    }
    eprintln!("wrote {} scripts to {}", suite.len(), out.display());
    Ok(())
}

fn extract(args: ExtractArgs) -> Result<()> {
    let cfg = load_config(args.engine.config.as_deref())?;
    let variant: Variant = args.engine.variant.parse()?;
    let episode = read_episode(BufReader::new(File::open(&args.input)?))?;
    let report = esec::validation::validate_episode(&episode);
    if !report.is_empty() {
        let msgs: Vec<String> = report.violations.iter().map(|v| v.to_string()).collect();
        return Err(EsecError::Parse(format!("invalid detection stream: {}", msgs.join("; "))));
    }
    let matrix = extract_matrix(&episode, &cfg, variant)?;
    write_text(&args.out, &(serde_json::to_string(&matrix)? + "\n"))?;
    eprintln!("{} events, {} pairs", matrix.len(), matrix.pairs.len());
    Ok(())
}

#[derive(serde::Serialize)]
struct ReasonLine<'a> {
    #[serde(flatten)]
    decision: &'a DecisionRecord,
    trace: &'a esec::explanation::ExplanationTrace,
}

fn reason_cmd(args: ReasonArgs) -> Result<()> {
    let engine = load_engine(args.engine.config.as_deref(), args.library.as_deref(), args.affordances.as_deref())?;
    let variant: Variant = args.engine.variant.parse()?;
    let matrix: ESecMatrix = serde_json::from_str(&std::fs::read_to_string(&args.esec)?)?;
    let run = reason(matrix, &engine, variant)?;
    let mut w = create(&args.out)?;
    for (d, t) in run.decisions.iter().zip(&run.traces) {
        serde_json::to_writer(&mut w, &ReasonLine { decision: d, trace: t })?;
        w.write_all(b"\n")?;
    }
    w.flush()?;
    if let Some(p) = &args.segments {
        write_text(p, &(serde_json::to_string_pretty(&run.segments)? + "\n"))?;
    }
    let labels: Vec<&str> = run.segments.iter().map(|s| s.label.as_str()).collect();
    eprintln!("{} events: {}", run.decisions.len(), labels.join(" → "));
    Ok(())
}

fn perturb_cmd(args: PerturbArgs) -> Result<()> {
    let cfg = load_config(args.config.as_deref())?;
    let spec = match (&args.level, &args.spec) {
        (_, Some(p)) => NoiseSpec::load(p)?,
        (Some(l), None) => l.parse::<NoiseLevel>()?.spec(),
        (None, None) => return Err(EsecError::Config("one of --level or --spec is required".to_string())),
    };
    let episode = read_episode(BufReader::new(File::open(&args.input)?))?;
    let id = args
        .episode_id
        .clone()
        .unwrap_or_else(|| args.input.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default());
    let noisy = perturb(&episode, &spec, args.seed, &id, (cfg.canvas_width, cfg.canvas_height));
    let mut w = create(&args.out)?;
    write_episode(&noisy, &mut w)?;
    w.flush()?;
    Ok(())
}

fn evaluate(args: EvaluateArgs) -> Result<()> {
    let engine = load_engine(args.config.as_deref(), args.library.as_deref(), args.affordances.as_deref())?;
    let variants: Vec<Variant> = parse_list(&args.variants)?;
    let levels: Vec<NoiseLevel> = parse_list(&args.levels)?;
    if args.seeds == 0 {
        return Err(EsecError::Config("--seeds must be positive".to_string()));
    }
    let seeds: Vec<u64> = (0..args.seeds).collect();
    let (name, scripts) = match &args.suite {
        Some(dir) => (dir.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default(), load_suite(dir)?),
        None => ("bundled".to_string(), esec::suite::bundled_suite()),
    };
    let suite = generate_suite(&scripts, engine.cfg.window)?;
    let report = run_ablation(&name, &suite, &engine, &variants, &levels, &seeds)?;
    write_text(&args.out, &report.to_json()?)?;
    for r in &report.results {
        eprintln!(
            "{:<24} {:<6} recognition {:.3} ± {:.3}  next {:.3}  consistency {:.3}",
            r.variant.as_str(),
            r.level.as_str(),
            r.top1_recognition.top1.mean,
            r.top1_recognition.top1.std,
            r.top1_next_primitive.top1.mean,
            r.mean_consistency.mean
        );
    }
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Simulate(a) => simulate(a),
        Command::ExportSuite { out } => export_suite(&out),
        Command::Extract(a) => extract(a),
        Command::Reason(a) => reason_cmd(a),
        Command::Perturb(a) => perturb_cmd(a),
        Command::Evaluate(a) => evaluate(a),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_io() { 2 } else { 1 })
        }
    }
}
