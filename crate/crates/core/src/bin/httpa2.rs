use std::net::{SocketAddr, ToSocketAddrs};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;
use std::time::Duration;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::de::DeserializeOwned;

use httpa2::crypto::ProtocolRng;
use httpa2::harness::{run_all, run_scenario_with, EnvironmentFailure, Report, RunOptions, Scenario, TransportKind};
use httpa2::middlebox::{proxy, CaptureLog, TamperRule};
use httpa2::stack::{
    serve, Client, ClientAction, ClientConfig, Service, ServiceConfig, SystemClock, TcpTransport, TrrAction,
};

const PASS: u8 = 0;
const FAIL: u8 = 1;
const ENVIRONMENT: u8 = 2;

#[derive(Parser)]
#[command(name = "httpa2", version, about = "Attested HTTP endpoints, middlebox and scenario runner")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a service until interrupted.
    Serve {
        #[arg(long, default_value = "127.0.0.1:8443")]
        listen: String,
        /// Service configuration (JSON).
        #[arg(long)]
        config: Option<PathBuf>,
        /// Seed the generator (for reproducible runs only).
        #[arg(long)]
        seed: Option<u64>,
        /// Also answer plain, unattested requests.
        #[arg(long)]
        allow_untrusted: bool,
    },
    /// Run a client script against a service or proxy.
    Client {
        #[arg(long, default_value = "127.0.0.1:8443")]
        connect: String,
        /// Client configuration (JSON).
        #[arg(long)]
        config: Option<PathBuf>,
        /// JSON array of client actions; defaults to preflight, handshake
        /// and one echo request.
        #[arg(long)]
        script: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
        /// Write the JSON transcript here.
        #[arg(long)]
        transcript: Option<PathBuf>,
    },
    /// Forward traffic, applying tamper rules and recording a capture.
    Proxy {
        #[arg(long)]
        listen: String,
        #[arg(long)]
        upstream: String,
        /// JSON array of tamper rules.
        #[arg(long)]
        rules: Option<PathBuf>,
        /// JSON-lines capture file, rewritten as traffic arrives.
        #[arg(long)]
        capture: Option<PathBuf>,
        /// Hop number recorded in the capture.
        #[arg(long, default_value_t = 1)]
        hop: usize,
    },
    /// Run scripted scenarios.
    Scenario {
        #[command(subcommand)]
        command: ScenarioCommand,
    },
}

#[derive(Subcommand)]
enum ScenarioCommand {
    /// Run one scenario file.
    Run {
        file: PathBuf,
        #[command(flatten)]
        opts: ScenarioOpts,
    },
    /// Run every `*.json` scenario in a directory.
    RunAll {
        dir: PathBuf,
        #[command(flatten)]
        opts: ScenarioOpts,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum TransportArg {
    Inprocess,
    Tcp,
}

#[derive(Args)]
struct ScenarioOpts {
    /// Override the scenario's transport.
    #[arg(long, value_enum)]
    transport: Option<TransportArg>,
    /// Add transparent middleboxes in front of the service.
    #[arg(long, default_value_t = 0)]
    extra_hops: usize,
    /// Print reports as JSON.
    #[arg(long)]
    json: bool,
    /// Write the reports and client transcripts as JSON here.
    #[arg(long)]
    transcript: Option<PathBuf>,
}

impl ScenarioOpts {
    fn run_options(&self) -> RunOptions {
        RunOptions {
            extra_hops: self.extra_hops,
            transport: self.transport.map(|t| match t {
                TransportArg::Inprocess => TransportKind::Inprocess,
                TransportArg::Tcp => TransportKind::Tcp,
            }),
        }
    }
}

type CliResult = Result<u8, String>;

fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T, String> {
    let text = std::fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
    serde_json::from_str(&text).map_err(|e| format!("{}: {e}", path.display()))
}

fn write_json(path: &Path, value: &serde_json::Value) -> Result<(), String> {
    let text = serde_json::to_string_pretty(value).expect("json value serializes");
    std::fs::write(path, text).map_err(|e| format!("{}: {e}", path.display()))
}

fn resolve(addr: &str) -> Result<SocketAddr, String> {
    addr.to_socket_addrs()
        .map_err(|e| format!("{addr}: {e}"))?
        .next()
        .ok_or_else(|| format!("{addr}: no address"))
}

fn rng(seed: Option<u64>) -> ProtocolRng {
    seed.map_or_else(ProtocolRng::from_entropy, ProtocolRng::seeded)
}

fn park_forever() -> ! {
    loop {
        std::thread::park();
    }
}

fn cmd_serve(listen: &str, config: Option<&Path>, seed: Option<u64>, allow_untrusted: bool) -> CliResult {
    let mut cfg: ServiceConfig = config.map(read_json).transpose()?.unwrap_or_default();
    cfg.allow_untrusted |= allow_untrusted;
    let service = Arc::new(Service::new(cfg, rng(seed), Arc::new(SystemClock)));
    let server = serve(service, listen).map_err(|e| format!("{listen}: {e}"))?;
    println!("listening on {}", server.addr());
    park_forever()
}

fn default_script() -> Vec<ClientAction> {
    vec![
        ClientAction::Preflight,
        ClientAction::Handshake,
        ClientAction::Trr(TrrAction {
            method: "POST".into(),
            target: "/echo".into(),
            body: "hello".into(),
            ..TrrAction::default()
        }),
    ]
}

fn cmd_client(
    connect: &str,
    config: Option<&Path>,
    script: Option<&Path>,
    seed: Option<u64>,
    transcript: Option<&Path>,
) -> CliResult {
    let cfg: ClientConfig = config.map(read_json).transpose()?.unwrap_or_default();
    let script: Vec<ClientAction> = script.map(read_json).transpose()?.unwrap_or_else(default_script);
    let transport = Box::new(TcpTransport::new(resolve(connect)?));
    let mut client = Client::new(cfg, transport, rng(seed), Arc::new(SystemClock));
    let mut code = PASS;
    for action in &script {
        let r = client.run(action);
        let body = r.body.as_deref().map(String::from_utf8_lossy).unwrap_or_default();
        println!(
            "{:<12} {:?}{}{}",
            action.name(),
            r.verdict,
            r.reason.as_deref().map(|x| format!(" ({x})")).unwrap_or_default(),
            if body.is_empty() { String::new() } else { format!(" {:?}", body) }
        );
        if r.reason.as_deref() == Some(httpa2::reason::TRANSPORT_ERROR) {
            code = ENVIRONMENT;
        } else if !r.accepted() && code == PASS {
            code = FAIL;
        }
    }
    if let Some(path) = transcript {
        write_json(path, &serde_json::to_value(client.log()).expect("transcript serializes"))?;
    }
    Ok(code)
}

fn cmd_proxy(listen: &str, upstream: &str, rules: Option<&Path>, capture: Option<&Path>, hop: usize) -> CliResult {
    let rules: Vec<TamperRule> = rules.map(read_json).transpose()?.unwrap_or_default();
    let log = CaptureLog::new();
    let server = proxy(hop, listen, resolve(upstream)?, rules, log.clone(), Arc::new(SystemClock))
        .map_err(|e| format!("{listen}: {e}"))?;
    println!("proxying {} -> {upstream}", server.addr());
    let Some(path) = capture else { park_forever() };
    let mut written = usize::MAX;
    loop {
        if log.len() != written {
            written = log.len();
            log.write_jsonl(path).map_err(|e| format!("{}: {e}", path.display()))?;
        }
        std::thread::sleep(Duration::from_millis(200));
    }
}

fn report_json(r: &Report) -> serde_json::Value {
    let mut v = serde_json::to_value(r).expect("report serializes");
    v["transcripts"] = serde_json::to_value(&r.transcripts).expect("transcript serializes");
    v
}

fn show(r: &Report, json: bool) {
    if json {
        println!("{}", r.to_json());
    } else {
        print!("{}", r.to_text());
    }
}

fn cmd_scenario(cmd: &ScenarioCommand) -> CliResult {
    let env = |e: EnvironmentFailure| e.to_string();
    match cmd {
        ScenarioCommand::Run { file, opts } => {
            let scenario = Scenario::load(file)?;
            let report = run_scenario_with(&scenario, &opts.run_options()).map_err(env)?;
            show(&report, opts.json);
            if let Some(path) = &opts.transcript {
                write_json(path, &report_json(&report))?;
            }
            Ok(if report.passed { PASS } else { FAIL })
        }
        ScenarioCommand::RunAll { dir, opts } => {
            let summary = run_all(dir, &opts.run_options()).map_err(env)?;
            for r in &summary.reports {
                show(r, opts.json);
            }
            println!("{} scenario(s): {} passed, {} failed", summary.total, summary.passed, summary.failed);
            if let Some(path) = &opts.transcript {
                let all: Vec<_> = summary.reports.iter().map(report_json).collect();
                write_json(path, &serde_json::Value::Array(all))?;
            }
            Ok(if summary.all_passed() { PASS } else { FAIL })
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("HTTPA2_LOG", "warn")).init();
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Serve {
            listen,
            config,
            seed,
            allow_untrusted,
        } => cmd_serve(listen, config.as_deref(), *seed, *allow_untrusted),
        Command::Client {
            connect,
            config,
            script,
            seed,
            transcript,
        } => cmd_client(connect, config.as_deref(), script.as_deref(), *seed, transcript.as_deref()),
        Command::Proxy {
            listen,
            upstream,
            rules,
            capture,
            hop,
        } => cmd_proxy(listen, upstream, rules.as_deref(), capture.as_deref(), *hop),
        Command::Scenario { command } => cmd_scenario(command),
    };
    match result {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("httpa2: {e}");
            ExitCode::from(ENVIRONMENT)
        }
    }
}
