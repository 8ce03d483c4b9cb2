//! `attlab`: synthesize pass logs, run the TRIAD baseline, train and ablate
//! the window regressor, and export error series.

mod manifest;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use attlab::catalog::catalog_with_errors;
use attlab::features::{check_window, CaseCatalog, CaseSpec};
use attlab::harness::{
    argmax_error, cell_dir, persist_run, raw_profile_csv, run_case, run_matrix, series_to_csv, timeseries_export,
    triad_baseline_report, MatrixOptions, PreparedPasses, RunConfig,
};
use attlab::net::{load_model, MODEL_FORMAT_VERSION};
use attlab::passlog::{PassLog, PASSLOG_FORMAT_VERSION, PASS_LEN};
use attlab::synth::{synth_pass, Scenario, SensorErrors};
use attlab::triad::Priority;
use attlab::{Error, Result};
use clap::{Args, Parser, Subcommand};
use serde::{de::DeserializeOwned, Deserialize, Serialize};

use manifest::RunManifest;

const DEFAULT_OUT_ROOT: &str = "attlab-out";
const OUT_ROOT_ENV: &str = "ATTLAB_OUT";
const TRAIN_PASSES: usize = 4;

fn version_text() -> String {
    format!(
        "{} (model format {MODEL_FORMAT_VERSION}, pass log format {PASSLOG_FORMAT_VERSION})",
        env!("CARGO_PKG_VERSION")
    )
}

#[derive(Parser)]
#[command(name = "attlab", version = version_text(), about = "Coarse attitude estimation lab")]
struct Cli {
    /// Output directory [default: $ATTLAB_OUT/<command>, else ./attlab-out/<command>]
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// JSON config file; flags override its values
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[command(subcommand)]
    cmd: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write the five catalog passes (or the scenarios of the config file)
    Synth(SynthArgs),
    /// TRIAD baseline over the given passes
    Triad(TriadArgs),
    /// Train one model: the first four passes train, the fifth tests
    Train(TrainArgs),
    /// Train every case with several seeds and write the result tables
    Ablate(AblateArgs),
    /// Per-step error series and raw sensor profiles of a trained model
    Export(ExportArgs),
}

#[derive(Args)]
struct SynthArgs {
    #[arg(long)]
    seed: Option<u64>,
    /// Put every pass in eclipse
    #[arg(long)]
    eclipse: bool,
    /// Error-free sensors
    #[arg(long)]
    zero_errors: bool,
}

#[derive(Args)]
struct TriadArgs {
    #[arg(required = true)]
    passes: Vec<PathBuf>,
    /// sun, mag or both
    #[arg(long, default_value = "both")]
    priority: String,
}

#[derive(Args)]
struct CommonRun {
    /// Five pass CSVs in order: four training passes, then the test pass
    #[arg(required = true)]
    passes: Vec<PathBuf>,
    /// Window length n (1..=11)
    #[arg(long)]
    window: Option<usize>,
    /// Also accept the cases left out of the standard tables
    #[arg(long)]
    include_omitted: bool,
}

#[derive(Args)]
struct TrainArgs {
    #[command(flatten)]
    run: CommonRun,
    #[arg(long)]
    case: String,
    /// `R1`, `R2`, ... or a plain integer
    #[arg(long, default_value = "R1")]
    seed: String,
}

#[derive(Args)]
struct AblateArgs {
    #[command(flatten)]
    run: CommonRun,
    /// `all` or a comma-separated list
    #[arg(long, default_value = "all")]
    cases: String,
    /// Seeds R1..RN
    #[arg(long, default_value_t = 3)]
    seeds: usize,
    /// Worker threads; 0 uses every core
    #[arg(long, default_value_t = 0)]
    jobs: usize,
    /// Keep finished cells from an earlier run with the same configuration
    #[arg(long)]
    resume: bool,
}

#[derive(Args)]
struct ExportArgs {
    #[arg(long)]
    model: PathBuf,
    /// Defaults to the case stored in the model
    #[arg(long)]
    case: Option<String>,
    #[arg(required = true)]
    passes: Vec<PathBuf>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct SynthConfig {
    seed: u64,
    eclipse: bool,
    errors: SensorErrors,
    /// Replaces the catalog when non-empty.
    scenarios: Vec<Scenario>,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig { seed: 1, eclipse: false, errors: SensorErrors::biased(), scenarios: Vec::new() }
    }
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::CaseInfeasible { .. } => 3,
        Error::Numeric(_) | Error::DegenerateGeometry(_) => 4,
        _ => 2,
    }
}

fn bad(msg: impl Into<String>) -> Error {
    Error::InvalidArgument(msg.into())
}

fn load_config<T: DeserializeOwned + Default>(path: Option<&Path>, man: &mut RunManifest) -> Result<T> {
    let Some(path) = path else { return Ok(T::default()) };
    man.input(path)?;
    let text = std::fs::read_to_string(path)?;
    serde_json::from_str(&text).map_err(|e| Error::Configuration(format!("{}: {e}", path.display())))
}

fn parse_seed(s: &str) -> Result<u64> {
    let digits = s.strip_prefix(['R', 'r']).unwrap_or(s);
    let seed: u64 = digits.parse().map_err(|_| bad(format!("seed {s:?} is neither R<k> nor an integer")))?;
    if digits.len() != s.len() && seed == 0 {
        return Err(bad("seed labels start at R1"));
    }
    Ok(seed)
}

fn read_passes(paths: &[PathBuf], man: &mut RunManifest) -> Result<Vec<PassLog>> {
    paths
        .iter()
        .map(|p| {
            man.input(p)?;
            PassLog::read(p).map_err(|e| match e {
                Error::Io(io) => Error::InvalidArgument(format!("{}: {io}", p.display())),
                other => other,
            })
        })
        .collect()
}

fn lookup_case(id: &str, include_omitted: bool) -> Result<CaseSpec> {
    CaseCatalog::with_omitted(include_omitted)
        .get(id)
        .cloned()
        .ok_or_else(|| bad(format!("unknown case {id:?}")))
}

fn resolve_run(cfg_path: Option<&Path>, run: &CommonRun, man: &mut RunManifest) -> Result<RunConfig> {
    let mut cfg: RunConfig = load_config(cfg_path, man)?;
    if let Some(n) = run.window {
        cfg.n = n;
    }
    check_window(cfg.n)?;
    cfg.train.validate()?;
    if run.passes.len() != TRAIN_PASSES + 1 {
        return Err(bad(format!(
            "expected {} passes (four training passes, then the test pass), got {}",
            TRAIN_PASSES + 1,
            run.passes.len()
        )));
    }
    Ok(cfg)
}

fn cmd_synth(args: &SynthArgs, cfg_path: Option<&Path>, out: &Path, man: &mut RunManifest) -> Result<()> {
    let mut cfg: SynthConfig = load_config(cfg_path, man)?;
    if let Some(seed) = args.seed {
        cfg.seed = seed;
    }
    if args.zero_errors {
        cfg.errors = SensorErrors::zero();
    }
    cfg.eclipse |= args.eclipse;
    cfg.errors.validate().map_err(|e| Error::Configuration(format!("errors: {e}")))?;
    let mut scenarios = if cfg.scenarios.is_empty() {
        catalog_with_errors(&cfg.errors, cfg.seed)
    } else {
        let mut s = cfg.scenarios.clone();
        if let Some(seed) = args.seed {
            for (k, sc) in s.iter_mut().enumerate() {
                sc.seed = seed.wrapping_add(k as u64);
            }
        }
        s
    };
    for sc in &mut scenarios {
        sc.eclipse |= cfg.eclipse;
        sc.validate().map_err(|e| Error::Configuration(format!("scenario {}: {e}", sc.id)))?;
    }
    man.config = serde_json::to_value(&cfg)?;
    man.seeds = scenarios.iter().map(|s| s.seed).collect();
    for sc in &scenarios {
        let log = synth_pass(sc)?;
        let (csv, sidecar) = log.write(out)?;
        println!("{} -> {}", sc.id, csv.display());
        man.output(csv);
        man.output(sidecar);
    }
    Ok(())
}

fn cmd_triad(args: &TriadArgs, cfg_path: Option<&Path>, out: &Path, man: &mut RunManifest) -> Result<()> {
    let cfg: RunConfig = load_config(cfg_path, man)?;
    let keep: Vec<Priority> = match args.priority.to_ascii_lowercase().as_str() {
        "both" => vec![Priority::Sun, Priority::Mag],
        p => vec![p.parse()?],
    };
    man.config = serde_json::json!({ "features": cfg.features, "priority": args.priority });
    let passes = read_passes(&args.passes, man)?;
    let (mut report, _) = triad_baseline_report(&passes, &cfg.features)?;
    report.rows.retain(|r| keep.contains(&r.priority));
    print!("{}", report.to_markdown());
    std::fs::create_dir_all(out)?;
    for (name, text) in [
        ("triad.md", report.to_markdown()),
        ("triad.csv", report.to_csv()),
        ("triad.json", serde_json::to_string_pretty(&report)?),
    ] {
        let p = out.join(name);
        std::fs::write(&p, text)?;
        man.output(p);
    }
    Ok(())
}

fn cmd_train(args: &TrainArgs, cfg_path: Option<&Path>, out: &Path, man: &mut RunManifest) -> Result<()> {
    let mut cfg = resolve_run(cfg_path, &args.run, man)?;
    let seed = parse_seed(&args.seed)?;
    cfg.train.seed = seed;
    let case = lookup_case(&args.case, args.run.include_omitted)?;
    man.config = serde_json::json!({ "run": cfg, "case": case });
    man.seeds = vec![seed];
    let passes = read_passes(&args.run.passes, man)?;
    let data = PreparedPasses::new(&passes, &cfg.features)?;
    let mut run = run_case(&case, seed, &data, &cfg)?;
    persist_run(out, Path::new(""), &mut run)?;
    for name in ["model.bin", "history.csv", "result.json"] {
        man.output(out.join(name));
    }
    let r = &run.result;
    println!("windows per pass: {} (n = {})", PASS_LEN + 1 - cfg.n, cfg.n);
    println!(
        "case {} seed {seed}: train RMS {:.3} deg, test RMS {:.3} deg (best epoch {}, {} epochs{})",
        case.id,
        r.train_rms_deg,
        r.test_rms_deg,
        r.best_epoch,
        r.epochs_run,
        if r.max_epoch { ", stopped at max epoch" } else { "" }
    );
    Ok(())
}

fn cmd_ablate(args: &AblateArgs, cfg_path: Option<&Path>, out: &Path, man: &mut RunManifest) -> Result<()> {
    let cfg = resolve_run(cfg_path, &args.run, man)?;
    if args.seeds == 0 {
        return Err(bad("--seeds must be at least 1"));
    }
    let catalog = CaseCatalog::with_omitted(args.run.include_omitted).select(&args.cases)?;
    let seeds: Vec<u64> = (1..=args.seeds as u64).collect();
    man.config = serde_json::json!({
        "run": cfg,
        "cases": catalog.cases.iter().map(|c| &c.id).collect::<Vec<_>>(),
        "jobs": args.jobs,
        "resume": args.resume,
    });
    man.seeds = seeds.clone();
    let passes = read_passes(&args.run.passes, man)?;
    let opts = MatrixOptions { seeds, jobs: args.jobs, out_dir: Some(out.to_path_buf()), resume: args.resume };
    let report = run_matrix(&catalog, &passes, &cfg, &opts)?;
    for case in &catalog.cases {
        for k in 0..opts.seeds.len() {
            man.output(cell_dir(out, &case.id, k));
        }
    }
    for p in report.write(out)? {
        man.output(p);
    }
    print!("{}", report.to_markdown());
    Ok(())
}

fn cmd_export(args: &ExportArgs, out: &Path, man: &mut RunManifest) -> Result<()> {
    man.input(&args.model)?;
    let model = load_model(&args.model)?;
    let case_id = args.case.clone().unwrap_or_else(|| model.meta.case_id.clone());
    let case = lookup_case(&case_id, true)?;
    man.config = serde_json::json!({ "case": case, "model_meta": model.meta, "network": model.config });
    man.seeds = vec![model.meta.init_seed];
    let passes = read_passes(&args.passes, man)?;
    std::fs::create_dir_all(out)?;
    for pass in &passes {
        let rows = timeseries_export(&model, &case, pass)?;
        let series = out.join(format!("{}_series.csv", pass.id));
        let raw = out.join(format!("{}_raw.csv", pass.id));
        std::fs::write(&series, series_to_csv(&rows))?;
        std::fs::write(&raw, raw_profile_csv(pass))?;
        if let Some(k) = argmax_error(&rows) {
            println!("{}: largest attitude error {:.3} deg at t = {} s", pass.id, rows[k].att_err_deg, rows[k].t);
        }
        man.output(series);
        man.output(raw);
    }
    Ok(())
}

fn out_dir(explicit: Option<&Path>, sub: &str) -> PathBuf {
    explicit.map(Path::to_path_buf).unwrap_or_else(|| {
        std::env::var_os(OUT_ROOT_ENV)
            .map(PathBuf::from)
            .unwrap_or_else(|| PathBuf::from(DEFAULT_OUT_ROOT))
            .join(sub)
    })
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let sub = match &cli.cmd {
        Command::Synth(_) => "synth",
        Command::Triad(_) => "triad",
        Command::Train(_) => "train",
        Command::Ablate(_) => "ablate",
        Command::Export(_) => "export",
    };
    let out = out_dir(cli.out.as_deref(), sub);
    let cfg = cli.config.as_deref();
    let mut man = RunManifest::start(sub);
    let res = match &cli.cmd {
        Command::Synth(a) => cmd_synth(a, cfg, &out, &mut man),
        Command::Triad(a) => cmd_triad(a, cfg, &out, &mut man),
        Command::Train(a) => cmd_train(a, cfg, &out, &mut man),
        Command::Ablate(a) => cmd_ablate(a, cfg, &out, &mut man),
        Command::Export(a) => cmd_export(a, &out, &mut man),
    };
    match res.and_then(|()| man.finish(&out)) {
        Ok(path) => {
            eprintln!("manifest: {}", path.display());
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
