//! `rwsearch`: validate configs, repair reward components, run weight
//! searches and experiment suites, and render reports.
//!
//! Exit codes: 0 success, 1 config error, 2 pipeline failure, 3 requirements
//! unmet at the iteration cap.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use rwsearch::analyzer::RenderMode;
use rwsearch::orchestrator::{
    run_critic, run_experiment, search_to_dir, write_atomic, write_json, write_report, ExperimentRow,
    OrchestratorError, ProposerKind, RunConfig, RunDirectory, SearchRun, Suite,
};
use rwsearch::proposer::HttpTransport;
use rwsearch::search::SearchMode;

const EXIT_CONFIG: u8 = 1;
const EXIT_PIPELINE: u8 = 2;
const EXIT_UNMET: u8 = 3;

#[derive(Parser, Debug)]
#[command(name = "rwsearch", version, about = "Reward weight search over decomposed requirements")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Check the config schema and its cross-references.
    Validate(ConfigArgs),
    /// Repair faulty reward components and write components.json.
    Critic(RunArgs),
    /// Run (or resume) a persisted weight search.
    Search(RunArgs),
    /// Repeat seeded searches per setting and print an iteration table.
    Experiment(ExperimentArgs),
    /// Render report.txt and ratios.csv for a finished run.
    Report {
        /// Run directory.
        dir: PathBuf,
    },
}

#[derive(Args, Debug)]
struct ConfigArgs {
    /// JSON config; defaults apply to every missing field.
    #[arg(long)]
    config: Option<PathBuf>,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum ModeArg {
    Erfsl,
    #[value(name = "eureka-m")]
    EurekaM,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum ProposerArg {
    Scripted,
    Llm,
    Replay,
}

#[derive(Args, Debug)]
struct Overrides {
    #[arg(long)]
    config: Option<PathBuf>,
    /// Master seed.
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, value_enum)]
    mode: Option<ModeArg>,
    #[arg(long, value_enum)]
    proposer: Option<ProposerArg>,
    /// Show the proposer raw metrics instead of the analyzer text.
    #[arg(long)]
    no_tla: bool,
    /// Log-uniform initial weights instead of scale-balanced ones.
    #[arg(long)]
    no_balance: bool,
    /// Multiply the energy weight by this factor after initialization.
    #[arg(long)]
    perturb_factor: Option<f64>,
    /// Full chat-completions URL of an OpenAI-compatible server; the key is read from RWSEARCH_API_KEY.
    #[arg(long)]
    llm_endpoint: Option<String>,
}

#[derive(Args, Debug)]
struct RunArgs {
    #[command(flatten)]
    overrides: Overrides,
    /// Run directory; falls back to the config's output_dir.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct ExperimentArgs {
    #[command(flatten)]
    overrides: Overrides,
    /// Settings to run; all of them when omitted.
    #[arg(long = "suite", value_parser = parse_suite)]
    suites: Vec<Suite>,
    /// Seeds per setting, starting at the master seed.
    #[arg(long, default_value_t = 5)]
    seeds: u32,
    /// Directory for experiment.csv and experiment.json.
    #[arg(long)]
    out: Option<PathBuf>,
}

fn parse_suite(s: &str) -> Result<Suite, String> {
    s.parse()
}

#[derive(Debug)]
enum Failure {
    Config(String),
    Pipeline(String),
    Unmet(String),
}

impl From<OrchestratorError> for Failure {
    fn from(e: OrchestratorError) -> Self {
        if e.exit_code() == 1 {
            Failure::Config(e.to_string())
        } else {
            Failure::Pipeline(e.to_string())
        }
    }
}

fn load_config(path: Option<&Path>) -> Result<RunConfig, OrchestratorError> {
    match path {
        Some(p) => RunConfig::load(p),
        None => Ok(RunConfig::default()),
    }
}

fn configure(o: &Overrides) -> Result<RunConfig, OrchestratorError> {
    let mut cfg = load_config(o.config.as_deref())?;
    if let Some(seed) = o.seed {
        cfg.seed = seed;
    }
    if let Some(mode) = o.mode {
        cfg.search.mode = match mode {
            ModeArg::Erfsl => SearchMode::Erfsl,
            ModeArg::EurekaM => SearchMode::EurekaM,
        };
    }
    if let Some(p) = o.proposer {
        cfg.proposer.kind = match p {
            ProposerArg::Scripted => ProposerKind::Scripted,
            ProposerArg::Llm => ProposerKind::Llm,
            ProposerArg::Replay => ProposerKind::Replay,
        };
    }
    if o.no_tla {
        cfg.search.tla = false;
    }
    if o.no_balance {
        cfg.search.balanced = false;
    }
    if let Some(f) = o.perturb_factor {
        cfg.search.perturb_factor = f;
    }
    if let Some(url) = &o.llm_endpoint {
        cfg.proposer.endpoint = Some(url.clone());
    }
    cfg.validate()?;
    Ok(cfg)
}

fn out_dir(arg: Option<&PathBuf>, cfg: &RunConfig) -> Result<PathBuf, Failure> {
    arg.cloned()
        .or_else(|| cfg.output_dir.clone())
        .ok_or_else(|| Failure::Config("no run directory: pass --out or set output_dir".into()))
}

fn cmd_validate(args: &ConfigArgs) -> Result<(), Failure> {
    let cfg = load_config(args.config.as_deref())?;
    cfg.validate()?;
    println!(
        "ok: {} requirements, {} components, k {}, cap {}",
        cfg.requirements.len(),
        cfg.components.len(),
        cfg.search.k,
        cfg.search.cap
    );
    Ok(())
}

fn cmd_critic(args: &RunArgs) -> Result<(), Failure> {
    let cfg = configure(&args.overrides)?;
    let out = out_dir(args.out.as_ref(), &cfg)?;
    let outcome = if cfg.proposer.kind == ProposerKind::Llm {
        let endpoint = cfg.proposer.endpoint.clone().expect("validated");
        let mut http = HttpTransport::new(endpoint);
        run_critic(&cfg, Some(&mut http))
    } else {
        run_critic(&cfg, None)
    };
    for (name, rounds) in &outcome.rounds {
        println!("{name}: {rounds} round(s)");
    }
    for v in &outcome.verdicts {
        for f in &v.fabricated_variables {
            println!("{}: fabricated variable '{}' needs a value: {}", v.component, f.name, f.description);
        }
    }
    write_json(&out.join("critic.json"), &outcome)?;
    if !outcome.unfixable.is_empty() {
        let list: Vec<String> = outcome.unfixable.iter().map(|(n, r)| format!("{n}: {r}")).collect();
        return Err(Failure::Pipeline(format!("unfixable components\n{}", list.join("\n"))));
    }
    write_json(&out.join("components.json"), &outcome.components)?;
    println!("wrote {}", out.join("components.json").display());
    Ok(())
}

fn cmd_search(args: &RunArgs) -> Result<(), Failure> {
    let cfg = configure(&args.overrides)?;
    let out = out_dir(args.out.as_ref(), &cfg)?;
    let summary = match search_to_dir(&cfg, &out, None)? {
        SearchRun::Finished(s) => s,
        SearchRun::Interrupted { generations } => {
            return Err(Failure::Pipeline(format!("search stopped after {generations} generations")))
        }
    };
    let dir = RunDirectory::new(&out, if cfg.search.tla { RenderMode::Full } else { RenderMode::RawOnly });
    write_report(&dir)?;
    match summary.iterations_to_success {
        Some(n) => {
            println!("success after {n} iteration(s); passing: {}", summary.passing_groups.join(", "));
            Ok(())
        }
        None => Err(Failure::Unmet(format!(
            "requirements unmet after {} generations (cap {})",
            summary.generations_run, summary.cap
        ))),
    }
}

fn cmd_experiment(args: &ExperimentArgs) -> Result<(), Failure> {
    let base = configure(&args.overrides)?;
    let suites = if args.suites.is_empty() { Suite::ALL.to_vec() } else { args.suites.clone() };
    let mut rows = Vec::new();
    for suite in suites {
        let row = run_experiment(&base, suite, args.seeds)?;
        eprintln!("{}", row.table_line());
        rows.push(row);
    }
    let mut csv = format!("{}\n", ExperimentRow::csv_header());
    for row in &rows {
        csv.push_str(&row.csv_line());
        csv.push('\n');
    }
    println!("{:<14} {:^5} {:>6}   {:<5}", "setting", "ok", "mean", "std");
    for row in &rows {
        println!("{}", row.table_line());
    }
    println!();
    print!("{csv}");
    if let Some(out) = &args.out {
        let path = out.join("experiment.csv");
        write_atomic(&path, csv.as_bytes()).map_err(|e| Failure::Pipeline(format!("{}: {e}", path.display())))?;
        write_json(&out.join("experiment.json"), &rows)?;
    }
    Ok(())
}

fn cmd_report(dir: &Path) -> Result<(), Failure> {
    let cfg: RunConfig = rwsearch::orchestrator::read_json(&dir.join("config.json"))?;
    let mode = if cfg.search.tla { RenderMode::Full } else { RenderMode::RawOnly };
    print!("{}", write_report(&RunDirectory::new(dir, mode))?);
    Ok(())
}

fn main() -> ExitCode {
    // Usage errors count as configuration errors, not pipeline failures.
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if e.use_stderr() => {
            let _ = e.print();
            return ExitCode::from(EXIT_CONFIG);
        }
        Err(e) => {
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
    };
    let result = match &cli.command {
        Command::Validate(a) => cmd_validate(a),
        Command::Critic(a) => cmd_critic(a),
        Command::Search(a) => cmd_search(a),
        Command::Experiment(a) => cmd_experiment(a),
        Command::Report { dir } => cmd_report(dir),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Config(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(EXIT_CONFIG)
        }
        Err(Failure::Pipeline(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(EXIT_PIPELINE)
        }
        Err(Failure::Unmet(m)) => {
            eprintln!("{m}");
            ExitCode::from(EXIT_UNMET)
        }
    }
}
