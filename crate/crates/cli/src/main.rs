//! `kes` command line: batch runs, portfolio comparison, synthetic fixtures,
//! the what-if service and a client for a running service.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use kes_client::{KesClient, Scenario};
use kes_core::analysis::{portfolio_alignment, portfolio_stats, receipts_csv, score_table, scores_csv, AlignmentProfile, PortfolioStats};
use kes_core::ingest::{load, parse_pb, serialize_group_points, serialize_pb, LoadError, LoadOptions};
use kes_core::model::{ModelError, Normalization, WeightValue};
use kes_core::money::parse_rational;
use kes_core::synth::{SynthParams, SyntheticInstance};
use kes_core::wire::{SweepParam, UploadConfig};
use kes_core::{Money, Rule};
use kes_service::{AppState, ServiceConfig};
use serde::Serialize;

#[derive(Parser)]
#[command(name = "kes", version, about = "Participatory budgeting with equal shares and impact fields")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one rule and write result.json, receipts.csv, scores.csv and stats.json.
    Run(RunArgs),
    /// Run every rule and write comparison.csv and alignment.json.
    Compare(CompareArgs),
    /// Serve the what-if HTTP API.
    Serve(ServeArgs),
    /// Write a seeded synthetic committee-shaped instance.
    Synth(SynthArgs),
    /// Talk to a running service.
    Remote(RemoteArgs),
}

#[derive(Args, Clone)]
struct InputArgs {
    /// Ballot file in `.pb` format.
    #[arg(long)]
    pb: PathBuf,
    /// Group-points sheet (CSV `field,project,points`).
    #[arg(long)]
    groups: Option<PathBuf>,
    /// Total budget override, e.g. 380000 or 1200.50.
    #[arg(long)]
    budget: Option<String>,
    /// Share of the budget given to impact fields, decimal or n/d.
    #[arg(long)]
    split: Option<String>,
    /// Field weights, e.g. `tradition=6,inclusion=11`.
    #[arg(long)]
    weights: Option<String>,
    /// Utility normalization.
    #[arg(long, value_parser = ["sum-share", "max-scale"])]
    normalization: Option<String>,
    /// Multiply sheet points by field weight instead of taking them as entered.
    #[arg(long)]
    raw_group_points: bool,
}

#[derive(Args)]
struct RunArgs {
    #[command(flatten)]
    input: InputArgs,
    #[arg(long, default_value = "kes")]
    rule: Rule,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct CompareArgs {
    #[command(flatten)]
    input: InputArgs,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct ServeArgs {
    #[arg(long, env = kes_service::PORT_ENV, default_value_t = kes_service::DEFAULT_PORT)]
    port: u16,
    #[arg(long, default_value = "127.0.0.1")]
    host: String,
    /// Write-through directory for uploads, reloaded on start.
    #[arg(long)]
    fixtures_dir: Option<PathBuf>,
}

#[derive(Args)]
struct SynthArgs {
    #[arg(long)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    individuals: Option<usize>,
    #[arg(long)]
    projects: Option<usize>,
}

#[derive(Args)]
struct RemoteArgs {
    /// Service root.
    #[arg(long, env = "KES_URL", default_value = "http://127.0.0.1:8080")]
    url: String,
    #[command(subcommand)]
    command: RemoteCommand,
}

#[derive(Args, Clone)]
struct RemoteScenario {
    #[arg(long)]
    rule: Option<Rule>,
    #[arg(long)]
    budget: Option<String>,
    #[arg(long)]
    split: Option<String>,
    #[arg(long)]
    weights: Option<String>,
}

impl RemoteScenario {
    fn scenario(&self) -> Scenario {
        Scenario { rule: self.rule, budget: self.budget.clone(), split_r: self.split.clone(), weights: self.weights.clone() }
    }
}

#[derive(Subcommand)]
enum RemoteCommand {
    /// Upload a ballot file; prints the instance summary.
    Upload {
        #[arg(long)]
        pb: PathBuf,
        #[arg(long)]
        groups: Option<PathBuf>,
        /// JSON upload config file.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        frozen: bool,
    },
    /// Print an allocation.
    Allocation {
        id: String,
        #[command(flatten)]
        scenario: RemoteScenario,
    },
    /// Print one agent's receipt.
    Receipts {
        id: String,
        agent: String,
        #[command(flatten)]
        scenario: RemoteScenario,
    },
    /// Print a parameter sweep.
    Sweep {
        id: String,
        #[arg(long, value_parser = ["split_r", "total_budget"])]
        param: String,
        #[arg(long)]
        from: String,
        #[arg(long)]
        to: String,
        #[arg(long)]
        steps: usize,
        #[command(flatten)]
        scenario: RemoteScenario,
    },
}

/// Failure with its process exit code.
struct Failure {
    code: u8,
    message: String,
}

impl Failure {
    fn parse(message: impl Into<String>) -> Self {
        Failure { code: 2, message: message.into() }
    }

    fn invalid(message: impl Into<String>) -> Self {
        Failure { code: 3, message: message.into() }
    }

    fn io(path: &Path, err: std::io::Error) -> Self {
        Failure { code: 1, message: format!("{}: {err}", path.display()) }
    }
}

impl From<LoadError> for Failure {
    fn from(err: LoadError) -> Self {
        if err.is_parse() { Failure::parse(err.to_string()) } else { Failure::invalid(err.to_string()) }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = match cli.command {
        Command::Run(args) => run(args),
        Command::Compare(args) => compare(args),
        Command::Serve(args) => serve(args),
        Command::Synth(args) => synth(args),
        Command::Remote(args) => remote(args),
    };
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("kes: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}

fn read(path: &Path) -> Result<Vec<u8>, Failure> {
    fs::read(path).map_err(|e| Failure::io(path, e))
}

fn write(path: &Path, bytes: impl AsRef<[u8]>) -> Result<(), Failure> {
    fs::write(path, bytes).map_err(|e| Failure::io(path, e))
}

fn to_json<T: Serialize>(value: &T) -> String {
    let mut text = serde_json::to_string_pretty(value).expect("serializable");
    text.push('\n');
    text
}

fn options(input: &InputArgs) -> Result<LoadOptions, Failure> {
    let mut options = LoadOptions::default();
    if let Some(text) = &input.budget {
        let budget = Money::parse_decimal(text).map_err(|e| Failure::invalid(format!("--budget: {e}")))?;
        options.overrides.total_budget = Some(budget);
    }
    if let Some(text) = &input.split {
        options.overrides.split_r = Some(parse_rational(text).map_err(|e| Failure::invalid(format!("--split: {e}")))?);
    }
    if let Some(text) = &input.weights {
        let weights = kes_core::ingest::parse_weight_list(text).map_err(|e| Failure::invalid(format!("--weights: {e}")))?;
        options.overrides.field_weights = Some(weights.into_iter().map(|(k, v)| (k, WeightValue(v))).collect());
    }
    options.normalization = match input.normalization.as_deref() {
        Some("max-scale") => Some(Normalization::MaxScale),
        Some(_) => Some(Normalization::SumShare),
        None => None,
    };
    if input.raw_group_points {
        options.points_preweighted = Some(false);
    }
    Ok(options)
}

/// Ballot bytes, optional sheet bytes and the load options.
type Input = (Vec<u8>, Option<Vec<u8>>, LoadOptions);

fn load_input(input: &InputArgs) -> Result<Input, Failure> {
    let pb = read(&input.pb)?;
    let groups = input.groups.as_deref().map(read).transpose()?;
    Ok((pb, groups, options(input)?))
}

fn run(args: RunArgs) -> Result<(), Failure> {
    let (pb, groups, options) = load_input(&args.input)?;
    let loaded = load(&pb, groups.as_deref(), &options)?;
    for w in &loaded.warnings {
        eprintln!("kes: warning: {}", serde_json::to_string(w).expect("serializable"));
    }
    let instance = loaded.instance;
    if args.rule == Rule::Mes && instance.has_fields() {
        eprintln!("kes: warning: fields ignored by MES");
    }
    let result = args.rule.run(&instance);
    let out = &args.out;
    fs::create_dir_all(out).map_err(|e| Failure::io(out, e))?;
    write(&out.join("result.json"), to_json(&result))?;
    write(&out.join("receipts.csv"), receipts_csv(&result))?;
    write(&out.join("scores.csv"), scores_csv(&score_table(&instance, &result)))?;
    #[derive(Serialize)]
    struct Stats {
        rule: Rule,
        stats: PortfolioStats,
        alignment: AlignmentProfile,
    }
    let stats = Stats {
        rule: args.rule,
        stats: portfolio_stats(&result, &instance),
        alignment: portfolio_alignment(&instance, &result),
    };
    write(&out.join("stats.json"), to_json(&stats))?;
    println!(
        "{}: funded {} projects, total {}, leftover {}",
        args.rule,
        stats.stats.project_count,
        stats.stats.total_cost,
        result.leftover_total()
    );
    Ok(())
}

#[derive(Serialize)]
struct ComparisonRow {
    rule: Rule,
    stats: PortfolioStats,
    alignment: AlignmentProfile,
}

fn comparison_csv(rows: &[ComparisonRow]) -> String {
    let mut out = String::from("rule,project_count,total_cost,mean_cost\n");
    for row in rows {
        out.push_str(&format!("{},{},{},{}\n", row.rule, row.stats.project_count, row.stats.total_cost, row.stats.mean_cost));
    }
    out
}

fn compare(args: CompareArgs) -> Result<(), Failure> {
    let (pb, groups, options) = load_input(&args.input)?;
    let rows: Vec<ComparisonRow> = match load(&pb, groups.as_deref(), &options) {
        Ok(loaded) => {
            let instance = &loaded.instance;
            std::thread::scope(|scope| {
                let handles: Vec<_> = Rule::ALL
                    .iter()
                    .map(|&rule| {
                        scope.spawn(move || {
                            let result = rule.run(instance);
                            ComparisonRow {
                                rule,
                                stats: portfolio_stats(&result, instance),
                                alignment: portfolio_alignment(instance, &result),
                            }
                        })
                    })
                    .collect();
                handles.into_iter().map(|h| h.join().expect("rule run")).collect()
            })
        }
        // A file without ballots funds nothing under any rule.
        Err(LoadError::Model(ModelError::Empty)) if parse_pb(&pb).is_ok_and(|f| f.votes.is_empty()) => Rule::ALL
            .iter()
            .map(|&rule| ComparisonRow {
                rule,
                stats: kes_core::analysis::stats_from_costs(&[]),
                alignment: kes_core::analysis::alignment_profile([]),
            })
            .collect(),
        Err(e) => return Err(e.into()),
    };
    let out = &args.out;
    fs::create_dir_all(out).map_err(|e| Failure::io(out, e))?;
    let table = comparison_csv(&rows);
    write(&out.join("comparison.csv"), &table)?;
    write(&out.join("alignment.json"), to_json(&rows))?;
    print!("{table}");
    Ok(())
}

fn serve(args: ServeArgs) -> Result<(), Failure> {
    tracing_subscriber::fmt().init();
    let runtime = tokio::runtime::Runtime::new().map_err(|e| Failure { code: 1, message: e.to_string() })?;
    runtime.block_on(async {
        let state = AppState::new(ServiceConfig { fixtures_dir: args.fixtures_dir.clone(), ..Default::default() })
            .map_err(|e| Failure { code: 1, message: format!("fixtures: {e}") })?;
        let listener = tokio::net::TcpListener::bind((args.host.as_str(), args.port))
            .await
            .map_err(|e| Failure { code: 1, message: format!("bind {}:{}: {e}", args.host, args.port) })?;
        eprintln!("kes: listening on http://{}", listener.local_addr().expect("bound"));
        kes_service::serve(listener, state).await.map_err(|e| Failure { code: 1, message: e.to_string() })
    })
}

fn synth(args: SynthArgs) -> Result<(), Failure> {
    let defaults = SynthParams::default();
    let params = SynthParams {
        individuals: args.individuals.unwrap_or(defaults.individuals),
        projects: args.projects.unwrap_or(defaults.projects),
        ..defaults
    };
    if params.individuals == 0 || params.projects == 0 {
        return Err(Failure::invalid("--individuals and --projects must be positive"));
    }
    let synthetic = SyntheticInstance::generate(args.seed, params);
    let out = &args.out;
    fs::create_dir_all(out).map_err(|e| Failure::io(out, e))?;
    let pb = out.join(format!("synthetic_{}.pb", args.seed));
    let groups = out.join(format!("synthetic_{}_groups.csv", args.seed));
    write(&pb, serialize_pb(&synthetic.to_pb()))?;
    write(&groups, serialize_group_points(&synthetic.to_sheet()))?;
    println!("{}\n{}", pb.display(), groups.display());
    Ok(())
}

fn remote(args: RemoteArgs) -> Result<(), Failure> {
    let client = KesClient::new(&args.url).map_err(|e| Failure::parse(e.to_string()))?;
    let runtime = tokio::runtime::Runtime::new().map_err(|e| Failure { code: 1, message: e.to_string() })?;
    let failed = |e: kes_client::ClientError| match &e {
        kes_client::ClientError::Api { status: 400, .. } => Failure::parse(e.to_string()),
        kes_client::ClientError::Api { status: 404 | 422, .. } => Failure::invalid(e.to_string()),
        _ => Failure { code: 1, message: e.to_string() },
    };
    let text = runtime.block_on(async {
        match args.command {
            RemoteCommand::Upload { pb, groups, config, frozen } => {
                let mut upload: UploadConfig = match &config {
                    Some(path) => serde_json::from_slice(&read(path)?)
                        .map_err(|e| Failure::parse(format!("{}: {e}", path.display())))?,
                    None => UploadConfig::default(),
                };
                upload.frozen |= frozen;
                let groups = groups.as_deref().map(read).transpose()?;
                client.upload(read(&pb)?, groups, Some(&upload)).await.map(|r| to_json(&r)).map_err(failed)
            }
            RemoteCommand::Allocation { id, scenario } => {
                client.allocation(&id, &scenario.scenario()).await.map(|r| to_json(&r)).map_err(failed)
            }
            RemoteCommand::Receipts { id, agent, scenario } => {
                client.receipts(&id, &agent, &scenario.scenario()).await.map(|r| to_json(&r)).map_err(failed)
            }
            RemoteCommand::Sweep { id, param, from, to, steps, scenario } => {
                let param = if param == "split_r" { SweepParam::SplitR } else { SweepParam::TotalBudget };
                client
                    .sweep(&id, param, &from, &to, steps, &scenario.scenario())
                    .await
                    .map(|r| to_json(&r))
                    .map_err(failed)
            }
        }
    })?;
    print!("{text}");
    Ok(())
}
