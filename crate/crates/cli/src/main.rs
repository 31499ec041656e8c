//! `rulemesh`: run the registry, engines and gateway, and operate on them.
//!
//! Exit status: 0 on success, 1 when any verdict or per-item result is an
//! error (or the request itself is rejected), 2 when an engine or the
//! registry cannot be reached.

use std::io::Read;
use std::net::SocketAddr;
use std::path::PathBuf;
use std::process::ExitCode;
use std::sync::Arc;

use clap::{Args, Parser, Subcommand};
use rulemesh_core::engine::Verdict;
use rulemesh_core::translate::Status;
use rulemesh_core::{translate, Code, DialectId, Diagnostic, Fact};
use rulemesh_server::api::{FactResult, ItemResult, KnowledgeSetSpec};
use rulemesh_server::control::{ControlPlane, EngineOutcome, Propagation, Role};
use rulemesh_server::error::ApiError;
use rulemesh_server::middleware::EngineService;
use rulemesh_server::registry::Registry;
use rulemesh_server::{gateway, middleware, registry, Registration};
use serde_json::Value;

#[derive(Parser)]
#[command(name = "rulemesh", version, about = "Multi-rule-engine broker")]
struct Cli {
    /// Print raw JSON results instead of summaries.
    #[arg(long, global = true)]
    json: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Atom registry service.
    Registry {
        #[command(subcommand)]
        command: ServeRegistry,
    },
    /// Rule engine middleware service.
    Engine {
        #[command(subcommand)]
        command: ServeEngine,
    },
    /// Gateway API and web console.
    Gateway {
        #[command(subcommand)]
        command: ServeGateway,
    },
    /// List registered engines with liveness.
    List(Conn),
    /// Knowledge sets on one engine.
    Ks {
        #[command(subcommand)]
        command: KsCommand,
    },
    /// Rules on one engine, propagated to its replica group by default.
    Rules {
        #[command(subcommand)]
        command: RulesCommand,
    },
    /// Translate rule text between dialects.
    Translate {
        #[arg(long)]
        from: DialectId,
        #[arg(long)]
        to: DialectId,
        /// Fact-type declarations in the source dialect.
        #[arg(long)]
        declarations: Option<PathBuf>,
        /// Input file; standard input when absent.
        file: Option<PathBuf>,
    },
    /// Validate rules against a knowledge set without installing them.
    Validate {
        #[command(flatten)]
        target: Target,
        file: Option<PathBuf>,
    },
    /// Run a knowledge set to fixpoint.
    Run {
        #[command(flatten)]
        target: Target,
        #[arg(long)]
        max_firings: Option<u64>,
    },
    /// Facts of a knowledge set.
    Facts {
        #[command(subcommand)]
        command: FactsCommand,
    },
}

#[derive(Subcommand)]
enum ServeRegistry {
    Serve {
        #[arg(long, default_value_t = 8090)]
        port: u16,
        #[arg(long, default_value = "127.0.0.1")]
        host: String,
        #[arg(long)]
        data_dir: PathBuf,
    },
}

#[derive(Subcommand)]
enum ServeEngine {
    Serve {
        #[arg(long)]
        dialect: DialectId,
        #[arg(long, default_value_t = 8091)]
        port: u16,
        #[arg(long, default_value = "127.0.0.1")]
        host: String,
        #[arg(long)]
        title: String,
        #[arg(long)]
        registry_url: Option<String>,
        #[arg(long)]
        replica_group: Option<String>,
        /// Base URL advertised in the registry; defaults to the bound address.
        #[arg(long)]
        public_url: Option<String>,
    },
}

#[derive(Subcommand)]
enum ServeGateway {
    Serve {
        #[arg(long, default_value_t = 8080)]
        port: u16,
        #[arg(long, default_value = "127.0.0.1")]
        host: String,
        #[arg(long, env = "RULEMESH_REGISTRY_URL")]
        registry_url: String,
        /// Directory with the web console's built assets.
        #[arg(long)]
        assets: Option<PathBuf>,
    },
}

#[derive(Args)]
struct Conn {
    #[arg(long, env = "RULEMESH_REGISTRY_URL", default_value = "http://127.0.0.1:8090")]
    registry_url: String,
}

#[derive(Args)]
struct Target {
    #[command(flatten)]
    conn: Conn,
    /// Engine entry id or title.
    #[arg(long)]
    engine: String,
    #[arg(long)]
    ks: String,
}

#[derive(Subcommand)]
enum KsCommand {
    List {
        #[command(flatten)]
        conn: Conn,
        #[arg(long)]
        engine: String,
    },
    Create {
        #[command(flatten)]
        conn: Conn,
        #[arg(long)]
        engine: String,
        /// Fact-type declarations in the engine's dialect.
        #[arg(long)]
        declarations: Option<PathBuf>,
        name: String,
    },
    Delete {
        #[command(flatten)]
        conn: Conn,
        #[arg(long)]
        engine: String,
        names: Vec<String>,
    },
}

#[derive(Subcommand)]
enum RulesCommand {
    Get {
        #[command(flatten)]
        target: Target,
        #[arg(long)]
        filter: Option<String>,
    },
    /// Install every rule block of FILE (standard input when absent).
    Put {
        #[command(flatten)]
        target: Target,
        #[arg(long)]
        no_propagate: bool,
        file: Option<PathBuf>,
    },
    /// Delete rules by name.
    Delete {
        #[command(flatten)]
        target: Target,
        #[arg(long)]
        no_propagate: bool,
        #[arg(required = true)]
        names: Vec<String>,
    },
}

#[derive(Subcommand)]
enum FactsCommand {
    Get {
        #[command(flatten)]
        target: Target,
    },
    /// Assert facts from a JSON array (standard input when FILE is absent).
    Put {
        #[command(flatten)]
        target: Target,
        file: Option<PathBuf>,
    },
}

enum Failure {
    /// Reported results contain errors; already printed.
    Verdicts,
    Api(ApiError),
    Input(String),
}

impl From<ApiError> for Failure {
    fn from(e: ApiError) -> Self {
        Failure::Api(e)
    }
}

impl From<Diagnostic> for Failure {
    fn from(d: Diagnostic) -> Self {
        Failure::Api(d.into())
    }
}

type Outcome = Result<(), Failure>;

fn read_input(file: Option<&PathBuf>) -> Result<String, Failure> {
    match file {
        Some(p) if p.as_os_str() != "-" => std::fs::read_to_string(p).map_err(|e| Failure::Input(format!("{}: {e}", p.display()))),
        _ => {
            let mut s = String::new();
            std::io::stdin().read_to_string(&mut s).map_err(|e| Failure::Input(format!("stdin: {e}")))?;
            Ok(s)
        }
    }
}

fn emit_json<T: serde::Serialize>(value: &T) {
    println!("{}", serde_json::to_string_pretty(value).expect("results serialize"));
}

fn diag_line(d: &Diagnostic) -> String {
    match d.position {
        Some(p) => format!("{} at {p}: {}", d.code, d.detail),
        None => format!("{}: {}", d.code, d.detail),
    }
}

fn print_verdicts(verdicts: &[Verdict]) -> bool {
    for v in verdicts {
        if v.is_valid() {
            println!("  valid    {}", v.label());
        } else {
            println!("  invalid  {}", v.label());
            for d in &v.diagnostics {
                println!("           {}", diag_line(d));
            }
        }
    }
    verdicts.iter().all(Verdict::is_valid)
}

fn print_items(items: &[ItemResult]) -> bool {
    for i in items {
        match &i.error {
            None => println!("  ok       {}", i.name),
            Some(d) => println!("  error    {}: {}", i.name, diag_line(d)),
        }
    }
    items.iter().all(ItemResult::is_ok)
}

fn print_propagation<T>(out: &Propagation<T>, print: impl Fn(&T) -> bool) -> bool {
    let mut ok = true;
    // target first
    let mut order: Vec<(&String, &EngineOutcome<T>)> = out.iter().collect();
    order.sort_by_key(|(_, o)| o.role != Role::Target);
    for (id, o) in order {
        let role = if o.role == Role::Target { "target" } else { "replica" };
        println!("{} ({}, {role}) {id}", o.title, o.dialect);
        match (&o.results, &o.error) {
            (Some(r), _) => ok &= print(r),
            (None, Some(d)) => {
                println!("  error    {}", diag_line(d));
                ok = false;
            }
            (None, None) => {}
        }
    }
    ok
}

fn verdict(ok: bool) -> Outcome {
    if ok {
        Ok(())
    } else {
        Err(Failure::Verdicts)
    }
}

async fn client(conn: &Conn, engine: &str) -> Result<(DialectId, rulemesh_server::client::EngineClient), Failure> {
    let cp = ControlPlane::new(&conn.registry_url);
    let (d, c) = cp.live_client(engine).await?;
    Ok((d.dialect, c))
}

async fn bind(host: &str, port: u16) -> Result<tokio::net::TcpListener, Failure> {
    tokio::net::TcpListener::bind((host, port)).await.map_err(|e| Failure::Input(format!("cannot bind {host}:{port}: {e}")))
}

async fn serve(listener: tokio::net::TcpListener, app: rulemesh_server::Router) -> Outcome {
    rulemesh_server::serve(listener, app, rulemesh_server::ctrl_c()).await.map_err(|e| Failure::Input(e.to_string()))
}

async fn execute(cli: Cli) -> Outcome {
    let json = cli.json;
    match cli.command {
        Command::Registry { command: ServeRegistry::Serve { port, host, data_dir } } => {
            let reg = Registry::open(&data_dir).map_err(|e| Failure::Input(e.to_string()))?;
            let listener = bind(&host, port).await?;
            tracing::info!("registry listening on http://{}", local(&listener));
            serve(listener, registry::router(Arc::new(reg))).await
        }
        Command::Engine { command: ServeEngine::Serve { dialect, port, host, title, registry_url, replica_group, public_url } } => {
            let service = Arc::new(EngineService::new(dialect, &title));
            let listener = bind(&host, port).await?;
            let addr = local(&listener);
            let base = public_url.unwrap_or_else(|| format!("http://{addr}"));
            let registration = match &registry_url {
                Some(url) => Some(Registration::register(url, &title, &base, dialect, replica_group.as_deref()).await?),
                None => None,
            };
            tracing::info!("engine {} ({dialect}) listening on {base}", service.engine_id);
            let served = serve(listener, middleware::router(service)).await;
            if let Some(r) = registration {
                if let Err(e) = r.withdraw().await {
                    tracing::warn!("could not withdraw registry entry: {e}");
                }
            }
            served
        }
        Command::Gateway { command: ServeGateway::Serve { port, host, registry_url, assets } } => {
            let listener = bind(&host, port).await?;
            tracing::info!("gateway listening on http://{}", local(&listener));
            serve(listener, gateway::router(ControlPlane::new(&registry_url), assets)).await
        }
        Command::List(conn) => {
            let handles = ControlPlane::new(&conn.registry_url).discover().await?;
            if json {
                emit_json(&handles);
            } else {
                for h in &handles {
                    let d = &h.descriptor;
                    let live = if h.live { "live" } else { "dead" };
                    let group = d.replica_group.as_deref().unwrap_or("-");
                    println!("{}  {live}  {}  group={group}  {}", d.id, d.dialect, d.title);
                }
            }
            Ok(())
        }
        Command::Ks { command } => match command {
            KsCommand::List { conn, engine } => {
                let (_, c) = client(&conn, &engine).await?;
                let names = c.knowledge_sets().await?;
                if json {
                    emit_json(&names);
                } else {
                    names.iter().for_each(|n| println!("{n}"));
                }
                Ok(())
            }
            KsCommand::Create { conn, engine, declarations, name } => {
                let (_, c) = client(&conn, &engine).await?;
                let declarations = match &declarations {
                    Some(p) => read_input(Some(p))?,
                    None => String::new(),
                };
                let r = c.put_knowledge_sets(vec![KnowledgeSetSpec::Full { name, declarations }]).await?;
                report(json, &r, |r| print_items(r))
            }
            KsCommand::Delete { conn, engine, names } => {
                let (_, c) = client(&conn, &engine).await?;
                let r = c.delete_knowledge_sets(names).await?;
                report(json, &r, |r| print_items(r))
            }
        },
        Command::Rules { command } => match command {
            RulesCommand::Get { target, filter } => {
                let (_, c) = client(&target.conn, &target.engine).await?;
                let rules = c.rules(&target.ks, filter.as_deref()).await?;
                if json {
                    emit_json(&rules);
                } else {
                    for r in &rules {
                        println!("{}", r.text.trim_end());
                    }
                }
                Ok(())
            }
            RulesCommand::Put { target, no_propagate, file } => {
                let text = read_input(file.as_ref())?;
                let cp = ControlPlane::new(&target.conn.registry_url);
                let dialect = cp.descriptor(&target.engine).await?.dialect;
                let blocks = dialect.split_rules(&text)?;
                let out = cp.put_rules(&target.engine, &target.ks, blocks, !no_propagate).await?;
                report(json, &out, |o| print_propagation(o, |v| print_verdicts(v)))
            }
            RulesCommand::Delete { target, no_propagate, names } => {
                let cp = ControlPlane::new(&target.conn.registry_url);
                let out = cp.delete_rules(&target.engine, &target.ks, names, !no_propagate).await?;
                report(json, &out, |o| print_propagation(o, |r| print_items(r)))
            }
        },
        Command::Translate { from, to, declarations, file } => {
            let types = match &declarations {
                Some(p) => {
                    let (types, diags) = from.parse_declarations(&read_input(Some(p))?);
                    if let Some(d) = diags.into_iter().next() {
                        return Err(d.into());
                    }
                    types
                }
                None => vec![],
            };
            let report = translate(&read_input(file.as_ref())?, from, to, &types)?;
            let ok = report.per_rule.iter().all(|r| r.status == Status::Ok) && report.diagnostics.is_empty();
            if json {
                emit_json(&report);
            } else {
                print!("{}", report.output_text);
                for d in &report.diagnostics {
                    eprintln!("{}", diag_line(d));
                }
                for r in report.per_rule.iter().filter(|r| r.status == Status::Error) {
                    for d in &r.diagnostics {
                        eprintln!("{}: {}", r.rule_name, diag_line(d));
                    }
                }
            }
            verdict(ok)
        }
        Command::Validate { target, file } => {
            let text = read_input(file.as_ref())?;
            let (_, c) = client(&target.conn, &target.engine).await?;
            let v = c.validate_rules(&target.ks, vec![text]).await?;
            report(json, &v, |v| print_verdicts(v))
        }
        Command::Run { target, max_firings } => {
            let (_, c) = client(&target.conn, &target.engine).await?;
            let r = c.run(&target.ks, max_firings).await?;
            if json {
                emit_json(&r);
            } else {
                println!("{} firings in {} iterations; {} new facts", r.firings, r.iterations, r.new_facts.len());
                for f in &r.new_facts {
                    println!("  {}", serde_json::to_string(f).expect("facts serialize"));
                }
            }
            Ok(())
        }
        Command::Facts { command } => match command {
            FactsCommand::Get { target } => {
                let (_, c) = client(&target.conn, &target.engine).await?;
                emit_json(&c.facts(&target.ks).await?);
                Ok(())
            }
            FactsCommand::Put { target, file } => {
                let text = read_input(file.as_ref())?;
                let facts: Vec<Fact> = serde_json::from_str(&text).map_err(|e| Failure::Input(format!("facts: {e}")))?;
                let (_, c) = client(&target.conn, &target.engine).await?;
                let r = c.put_facts(&target.ks, facts).await?;
                report(json, &r, |r| print_fact_results(r))
            }
        },
    }
}

fn print_fact_results(results: &[FactResult]) -> bool {
    for r in results {
        match (&r.error, r.changed) {
            (Some(d), _) => println!("  error    #{}: {}", r.index, diag_line(d)),
            (None, Some(true)) => println!("  added    #{}", r.index),
            (None, _) => println!("  present  #{}", r.index),
        }
    }
    results.iter().all(|r| r.error.is_none())
}

fn report<T: serde::Serialize>(json: bool, value: &T, print: impl Fn(&T) -> bool) -> Outcome {
    let ok = if json {
        emit_json(value);
        !has_errors(&serde_json::to_value(value).expect("results serialize"))
    } else {
        print(value)
    };
    verdict(ok)
}

/// True when a result tree contains an invalid verdict or an error entry.
fn has_errors(v: &Value) -> bool {
    match v {
        Value::Object(m) => {
            m.get("status").is_some_and(|s| s == "invalid" || s == "error")
                || m.get("error").is_some_and(|e| !e.is_null())
                || m.values().any(has_errors)
        }
        Value::Array(a) => a.iter().any(has_errors),
        _ => false,
    }
}

fn local(l: &tokio::net::TcpListener) -> SocketAddr {
    l.local_addr().expect("bound listener has an address")
}

#[tokio::main]
async fn main() -> ExitCode {
    tracing_subscriber::fmt().with_writer(std::io::stderr).init();
    match execute(Cli::parse()).await {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Verdicts) => ExitCode::from(1),
        Err(Failure::Input(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
        Err(Failure::Api(e)) => {
            eprintln!("error: {e}");
            match e.code() {
                Code::EEngineUnreachable | Code::ERegistryUnreachable => ExitCode::from(2),
                _ => ExitCode::from(1),
            }
        }
    }
}
