//! Operator entry point: enumeration runs over fixtures or live
//! credentials, the scenario benchmark, policy-version diffing, sweeps,
//! and catalog lookups. All output is machine-readable JSON unless
//! `--pretty` asks for the human table.

use std::collections::BTreeSet;
use std::path::PathBuf;
use std::process::ExitCode;
use std::sync::Arc;

use clap::{Args, Parser, Subcommand};

use iamlens::backend::{ApiBackend, FixtureBackend};
use iamlens::bench;
use iamlens::deepenum::{self, ActionCatalog};
use iamlens::engine::{self, EnumerationMode, RunOptions};
use iamlens::fixture;
use iamlens::intel::IntelCatalog;
use iamlens::session::{parse_credentials_file, Credential};

const CREDENTIALS_ENV: &str = "IAMLENS_CREDENTIALS";

#[derive(Parser)]
#[command(name = "iamlens", version, about = "Cooperative multi-principal IAM enumeration")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the enumeration engine and write vision reports.
    Enum(EnumArgs),
    /// Replay benchmark scenarios and print coverage scores.
    Bench(BenchArgs),
    /// Deep-compare a managed policy's default version against its
    /// historical versions.
    DiffVersions(DiffArgs),
    /// Simulation sweep for one principal.
    Simulate(SweepArgs),
    /// Read-only fuzz sweep for one principal.
    Fuzz(SweepArgs),
    /// Look one action up in the intelligence catalog.
    Intel(IntelArgs),
}

#[derive(Args)]
struct EnumArgs {
    /// Fixture account file; exclusive with --credentials.
    #[arg(long)]
    fixture: Option<PathBuf>,
    /// Credentials file (AccessKey,SecretKey[,SessionToken] per line);
    /// exclusive with --fixture. Defaults to $IAMLENS_CREDENTIALS.
    #[arg(long)]
    credentials: Option<PathBuf>,
    /// Acting principal names; required with --fixture.
    #[arg(long = "as", value_delimiter = ',')]
    acting: Vec<String>,
    #[arg(long, default_value = "cross")]
    mode: String,
    #[arg(long)]
    no_short_circuit: bool,
    #[arg(long)]
    no_tcrem: bool,
    /// Run the simulation sweep (single mode, unless --force-sweeps).
    #[arg(long)]
    simulate: bool,
    /// Run the read-only fuzz sweep (single mode, unless --force-sweeps).
    #[arg(long)]
    fuzz: bool,
    #[arg(long)]
    force_sweeps: bool,
    /// Action catalog (JSON Lines); defaults to the shipped seed catalog.
    #[arg(long)]
    catalog: Option<PathBuf>,
    #[arg(long, default_value_t = 8)]
    max_role_depth: usize,
    #[arg(long, default_value_t = 8)]
    workers: usize,
    /// Use the bounded thread pool instead of the deterministic driver.
    #[arg(long)]
    parallel: bool,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Annotate reports with the intelligence catalog.
    #[arg(long)]
    enrich: bool,
    /// Output file; stdout when absent.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    pretty: bool,
}

#[derive(Args)]
struct BenchArgs {
    /// Run every scenario.
    #[arg(long, conflicts_with = "scenario")]
    all: bool,
    /// Run one scenario by number.
    #[arg(long)]
    scenario: Option<usize>,
    /// Export ground truth and weight trees for audit.
    #[arg(long)]
    export_ground_truth: Option<PathBuf>,
    #[arg(long)]
    pretty: bool,
}

#[derive(Args)]
struct DiffArgs {
    /// Fixture file holding the policy.
    #[arg(long)]
    fixture: Option<PathBuf>,
    /// Policy ARN inside the fixture.
    #[arg(long)]
    policy: Option<String>,
    /// Stand-alone baseline document (JSON policy grammar).
    #[arg(long)]
    baseline: Option<PathBuf>,
    /// Stand-alone candidate document.
    #[arg(long)]
    candidate: Option<PathBuf>,
    #[arg(long)]
    pretty: bool,
}

#[derive(Args)]
struct SweepArgs {
    #[arg(long)]
    fixture: PathBuf,
    /// Acting principal name.
    #[arg(long = "as")]
    acting: String,
    #[arg(long)]
    catalog: Option<PathBuf>,
    #[arg(long)]
    pretty: bool,
}

#[derive(Args)]
struct IntelArgs {
    action: String,
    /// Intelligence catalog (JSON Lines); defaults to the shipped seed.
    #[arg(long)]
    catalog: Option<PathBuf>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Enum(args) => cmd_enum(args),
        Command::Bench(args) => cmd_bench(args),
        Command::DiffVersions(args) => cmd_diff(args),
        Command::Simulate(args) => cmd_sweep(args, true),
        Command::Fuzz(args) => cmd_sweep(args, false),
        Command::Intel(args) => cmd_intel(args),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(message) => {
            eprintln!("error: {message}");
            ExitCode::FAILURE
        }
    }
}

fn parse_mode(text: &str) -> Result<EnumerationMode, String> {
    match text {
        "single" => Ok(EnumerationMode::Single),
        "separate" => Ok(EnumerationMode::Separate),
        "cross" => Ok(EnumerationMode::Cross),
        other => Err(format!("bad flags: unknown mode {other:?} (single|separate|cross)")),
    }
}

fn load_catalog(path: &Option<PathBuf>) -> Result<ActionCatalog, String> {
    match path {
        Some(path) => ActionCatalog::load(path).map_err(|e| e.to_string()),
        None => Ok(ActionCatalog::shipped_seed_catalog()),
    }
}

fn open_fixture(path: &PathBuf) -> Result<fixture::FixtureDocument, String> {
    let loaded = fixture::load_fixture(path).map_err(|e| e.to_string())?;
    for lint in &loaded.lints {
        eprintln!("lint: {lint}");
    }
    Ok(loaded.document)
}

fn fixture_credentials_for(
    document: &fixture::FixtureDocument,
    acting: &[String],
) -> Result<Vec<Credential>, String> {
    acting
        .iter()
        .map(|name| {
            document
                .credentials
                .iter()
                .find(|c| &c.user == name)
                .map(|c| Credential {
                    access_key_id: c.access_key_id.clone(),
                    secret_key: c.secret_key.clone(),
                    session_token: c.session_token.clone(),
                })
                .ok_or_else(|| format!("fixture carries no credential for principal {name:?}"))
        })
        .collect()
}

fn write_output(out: &Option<PathBuf>, content: &str) -> Result<(), String> {
    match out {
        Some(path) => std::fs::write(path, content).map_err(|e| e.to_string()),
        None => {
            println!("{content}");
            Ok(())
        }
    }
}

fn cmd_enum(args: EnumArgs) -> Result<(), String> {
    let mode = parse_mode(&args.mode)?;
    let credentials_path = args.credentials.clone().or_else(|| {
        std::env::var(CREDENTIALS_ENV).ok().map(PathBuf::from)
    });
    let (backend, credentials): (Arc<dyn ApiBackend>, Vec<Credential>) =
        match (&args.fixture, &credentials_path) {
            (Some(_), Some(_)) => {
                return Err("bad flags: --fixture and --credentials are exclusive".into())
            }
            (None, None) => {
                return Err(format!(
                    "bad flags: one of --fixture or --credentials is required \
                     (or set ${CREDENTIALS_ENV})"
                ))
            }
            (Some(path), None) => {
                if args.acting.is_empty() {
                    return Err(
                        "bad flags: fixture mode requires --as to name acting principals".into(),
                    );
                }
                let document = open_fixture(path)?;
                let creds = fixture_credentials_for(&document, &args.acting)?;
                (Arc::new(FixtureBackend::new(&document)), creds)
            }
            (None, Some(path)) => {
                let text = std::fs::read_to_string(path)
                    .map_err(|e| format!("cannot read {}: {e}", path.display()))?;
                let creds = parse_credentials_file(&text);
                if creds.is_empty() {
                    return Err("credentials file holds no parsable credentials".into());
                }
                return Err(live_mode_unavailable());
            }
        };

    let needs_catalog = args.simulate || args.fuzz;
    let options = RunOptions {
        mode,
        tcrem_enabled: !args.no_tcrem,
        simulation_enabled: args.simulate,
        fuzz_enabled: args.fuzz,
        short_circuit_enabled: !args.no_short_circuit,
        force_sweeps: args.force_sweeps,
        max_role_depth: args.max_role_depth,
        worker_bound: args.workers,
        deterministic: !args.parallel,
        seed: args.seed,
        catalog: if needs_catalog { Some(load_catalog(&args.catalog)?) } else { None },
        ..RunOptions::default()
    };
    let outcome = engine::run(backend, credentials, &options).map_err(|e| e.to_string())?;
    for diagnostic in &outcome.diagnostics {
        eprintln!("note: {diagnostic}");
    }
    let reports: Vec<_> = if args.enrich {
        let catalog = IntelCatalog::shipped_seed();
        outcome.reports.iter().map(|r| catalog.enrich(r)).collect()
    } else {
        outcome.reports
    };
    if args.pretty {
        let mut text = String::new();
        for report in &reports {
            text.push_str(&summarize_report(report));
        }
        write_output(&args.out, text.trim_end())?;
    } else {
        let json =
            serde_json::to_string_pretty(&reports).map_err(|e| e.to_string())?;
        write_output(&args.out, &json)?;
    }
    Ok(())
}

#[cfg(feature = "live")]
fn live_mode_unavailable() -> String {
    "live transport wiring is limited to signed-request construction; \
     point the engine at a fixture account instead"
        .into()
}

#[cfg(not(feature = "live"))]
fn live_mode_unavailable() -> String {
    "this build carries no live transport (enable the `live` feature); \
     use --fixture for the in-process account"
        .into()
}

fn summarize_report(report: &iamlens::report::VisionReport) -> String {
    use std::fmt::Write;
    let mut out = String::new();
    let _ = writeln!(out, "principal {}", report.principal_arn);
    let groups = report
        .in_scope_groups
        .as_ref()
        .map(|g| g.len().to_string())
        .unwrap_or_else(|| "unresolved".into());
    let roles = report
        .in_scope_roles
        .as_ref()
        .map(|r| r.len().to_string())
        .unwrap_or_else(|| "unresolved".into());
    let _ = writeln!(out, "  groups: {groups}  roles: {roles}  gaps: {}", report.gaps.len());
    for (arn, section) in
        std::iter::once((&report.principal_arn, &report.user)).chain(report.groups.iter())
    {
        let _ = writeln!(
            out,
            "  {} inline={} attached={}",
            arn,
            section.inline.len(),
            section.attached.len()
        );
    }
    for (arn, section) in report.roles.iter() {
        let _ = writeln!(
            out,
            "  {} inline={} attached={}",
            arn,
            section.inline.len(),
            section.attached.len()
        );
    }
    out
}

fn cmd_bench(args: BenchArgs) -> Result<(), String> {
    let ids: Vec<usize> = if args.all {
        (1..=bench::SCENARIO_COUNT).collect()
    } else if let Some(id) = args.scenario {
        vec![id]
    } else {
        return Err("bad flags: pass --all or --scenario N".into());
    };
    if let Some(dir) = &args.export_ground_truth {
        std::fs::create_dir_all(dir).map_err(|e| e.to_string())?;
        for id in &ids {
            let (_, truth) = bench::load_scenario(*id).map_err(|e| e.to_string())?;
            let payload = serde_json::json!({
                "ground_truth": truth,
                "weight_tree": if truth.expected_permissions.is_none() {
                    Some(bench::build_weight_tree(&truth))
                } else {
                    None
                },
            });
            let path = dir.join(format!("S{id}.json"));
            std::fs::write(&path, serde_json::to_string_pretty(&payload).unwrap())
                .map_err(|e| e.to_string())?;
        }
    }
    let mut outcomes = Vec::new();
    for id in &ids {
        outcomes.push(bench::run_scenario(*id).map_err(|e| e.to_string())?);
    }
    if args.pretty {
        println!("{:<12} {:>8} {:>8}  {}", "scenario", "score", "calls", "short-circuit reduction");
        for outcome in &outcomes {
            let reduction = match outcome.short_circuit_calls {
                Some((enabled, disabled)) if disabled > 0 => format!(
                    "{enabled} vs {disabled} calls ({:.1}% fewer)",
                    100.0 * (1.0 - enabled as f64 / disabled as f64)
                ),
                _ => String::new(),
            };
            println!(
                "S{:<11} {:>8.3} {:>8}  {}",
                outcome.scenario_id, outcome.score, outcome.calls_made, reduction
            );
        }
        let mean =
            bench::aggregate(&outcomes.iter().map(|o| o.score).collect::<Vec<_>>()).unwrap();
        println!("{:<12} {:>8.3}", "mean", mean);
    } else {
        println!("{}", serde_json::to_string_pretty(&outcomes).map_err(|e| e.to_string())?);
    }
    Ok(())
}

fn cmd_diff(args: DiffArgs) -> Result<(), String> {
    let diffs: Vec<deepenum::VersionDiff> = match (&args.fixture, &args.policy) {
        (Some(path), Some(policy_arn)) => {
            let document = open_fixture(path)?;
            let policy = document
                .snapshot
                .managed_policies
                .get(policy_arn)
                .ok_or_else(|| format!("no policy {policy_arn} in fixture"))?;
            let default = policy.default_document();
            policy
                .versions
                .iter()
                .filter(|(vid, _)| **vid != policy.default_version_id)
                .map(|(vid, doc)| {
                    deepenum::diff_versions(&policy.default_version_id, default, vid, doc)
                })
                .collect()
        }
        (None, None) => {
            let (Some(baseline), Some(candidate)) = (&args.baseline, &args.candidate) else {
                return Err(
                    "bad flags: pass --fixture with --policy, or --baseline with --candidate"
                        .into(),
                );
            };
            let read = |path: &PathBuf| -> Result<iamlens_core::PolicyDocument, String> {
                let text = std::fs::read_to_string(path)
                    .map_err(|e| format!("cannot read {}: {e}", path.display()))?;
                iamlens_core::PolicyDocument::parse(&text).map_err(|e| e.to_string())
            };
            vec![deepenum::diff_versions(
                "baseline",
                &read(baseline)?,
                "candidate",
                &read(candidate)?,
            )]
        }
        _ => return Err("bad flags: --fixture and --policy go together".into()),
    };
    if args.pretty {
        for diff in &diffs {
            println!(
                "{} -> {}: {} new, {} kept, {} removed{}",
                diff.baseline_version,
                diff.candidate_version,
                diff.new.len(),
                diff.kept.len(),
                diff.removed.len(),
                if diff.condition_changed { ", condition-changed" } else { "" }
            );
        }
    } else {
        println!("{}", serde_json::to_string_pretty(&diffs).map_err(|e| e.to_string())?);
    }
    Ok(())
}

fn cmd_sweep(args: SweepArgs, simulate: bool) -> Result<(), String> {
    let document = open_fixture(&args.fixture)?;
    let credentials = fixture_credentials_for(&document, std::slice::from_ref(&args.acting))?;
    let catalog = match &args.catalog {
        Some(path) => ActionCatalog::load(path).map_err(|e| e.to_string())?,
        None => ActionCatalog::shipped_scenario_catalog(),
    };
    let options = RunOptions {
        mode: EnumerationMode::Single,
        simulation_enabled: simulate,
        fuzz_enabled: !simulate,
        catalog: Some(catalog),
        ..RunOptions::default()
    };
    let backend: Arc<dyn ApiBackend> = Arc::new(FixtureBackend::new(&document));
    let outcome = engine::run(backend, credentials, &options).map_err(|e| e.to_string())?;
    let report = outcome.reports.first().ok_or("no report produced")?;
    if args.pretty {
        let allowed: Option<&BTreeSet<String>> = if simulate {
            report.simulated_allowed.as_ref()
        } else {
            report.fuzz_allowed.as_ref()
        };
        match allowed {
            Some(set) => {
                for action in set {
                    println!("{action}");
                }
            }
            None => println!("(sweep produced nothing)"),
        }
    } else {
        println!("{}", report.to_json());
    }
    Ok(())
}

fn cmd_intel(args: IntelArgs) -> Result<(), String> {
    let catalog = match &args.catalog {
        Some(path) => IntelCatalog::load(path).map_err(|e| e.to_string())?,
        None => IntelCatalog::shipped_seed(),
    };
    let annotation = catalog.classify(&args.action);
    println!("{}", serde_json::to_string_pretty(&annotation).map_err(|e| e.to_string())?);
    Ok(())
}
