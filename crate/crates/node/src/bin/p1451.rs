use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Duration;

use anyhow::{anyhow, Context};
use clap::{Args, Parser, Subcommand, ValueEnum};
use p1451_core::acl::Access;
use p1451_core::mqtt::TopicFilter;
use p1451_core::netsvc::{error_code, Uuid1451};
use p1451_core::teds::{encode_security_teds, SecurityLevel, SECURITY_TEDS_ACCESS_CODE};
use p1451_node::acs::{self, AcsConfig, FaultAction, FaultPlan, FaultPoint, ReloadTrigger, TokenRegistry};
use p1451_node::app::{self, exit, AclUpdateParams, AppError, ReadTedsParams};
use p1451_node::auth::{Credential, CredentialStore};
use p1451_node::broker::{self, BrokerConfig};
use p1451_node::client::ClientOptions;
use p1451_node::ncap::{self, TedsRepository};
use p1451_node::service::ServiceHandle;
use p1451_node::transport::TlsClientOptions;
use tracing_subscriber::EnvFilter;

#[derive(Parser)]
#[command(name = "p1451", version, about = "IEEE P1451.1.6 security TEDS over MQTT: broker, NCAP, ACL service and APP")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the MQTT broker at a security level.
    Broker(BrokerArgs),
    /// Run an NCAP serving a security TEDS.
    Ncap(NcapArgs),
    /// Run the ACL update service.
    Acs(AcsArgs),
    /// Read a TEDS from an NCAP and print it.
    ReadTeds(ReadTedsArgs),
    /// Encode a textual TEDS description into its binary block.
    EncodeTeds(EncodeArgs),
    /// Decode a binary TEDS block and print it.
    DecodeTeds(DecodeArgs),
    /// Ask the ACL service to add or remove a rule.
    AclUpdate(AclUpdateArgs),
    /// Add or replace a user in a password file.
    Passwd(PasswdArgs),
}

#[derive(Args)]
struct BrokerArgs {
    #[arg(long, default_value = "127.0.0.1:1883")]
    listen: String,
    #[arg(long, default_value = "N", value_parser = parse_level)]
    level: SecurityLevel,
    #[arg(long)]
    passwords: Option<PathBuf>,
    #[arg(long)]
    acl: Option<PathBuf>,
    #[arg(long)]
    tls_cert: Option<PathBuf>,
    #[arg(long)]
    tls_key: Option<PathBuf>,
    /// ACL file polling interval; 0s disables polling.
    #[arg(long, default_value = "500ms", value_parser = humantime::parse_duration)]
    acl_poll: Duration,
}

#[derive(Args, Clone)]
struct ClientArgs {
    #[arg(long, default_value = "127.0.0.1:1883")]
    broker: String,
    #[arg(long)]
    client_id: Option<String>,
    #[arg(long)]
    username: Option<String>,
    #[arg(long)]
    password: Option<String>,
    /// Connect over TLS.
    #[arg(long)]
    tls: bool,
    /// PEM file with the CA that signed the broker certificate.
    #[arg(long)]
    ca_cert: Option<PathBuf>,
    /// Accept any broker certificate.
    #[arg(long)]
    insecure: bool,
    /// Name to verify the broker certificate against, if not the host.
    #[arg(long)]
    server_name: Option<String>,
}

impl ClientArgs {
    fn options(&self, default_prefix: &str) -> ClientOptions {
        let id =
            self.client_id.clone().unwrap_or_else(|| format!("{default_prefix}-{}", uuid::Uuid::new_v4().simple()));
        let tls = (self.tls || self.ca_cert.is_some() || self.insecure).then(|| TlsClientOptions {
            ca_cert: self.ca_cert.clone(),
            insecure: self.insecure,
            server_name: self.server_name.clone(),
        });
        ClientOptions::new(self.broker.clone(), id).credentials(self.username.clone(), self.password.clone()).tls(tls)
    }
}

#[derive(Args)]
struct NcapArgs {
    #[command(flatten)]
    client: ClientArgs,
    #[arg(long, value_parser = parse_uuid)]
    ncap_id: Uuid1451,
    /// Security TEDS as a textual description or an encoded block.
    #[arg(long)]
    teds: PathBuf,
}

#[derive(Args)]
struct AcsArgs {
    #[command(flatten)]
    client: ClientArgs,
    #[arg(long)]
    tokens: PathBuf,
    #[arg(long)]
    acl: PathBuf,
    #[arg(long, hide = true, value_parser = parse_fault)]
    crash_at: Option<FaultPoint>,
}

#[derive(Args)]
struct ReadTedsArgs {
    #[command(flatten)]
    client: ClientArgs,
    #[arg(long, value_parser = parse_uuid)]
    ncap_id: Uuid1451,
    /// Defaults to a fresh random id.
    #[arg(long, value_parser = parse_uuid)]
    app_id: Option<Uuid1451>,
    #[arg(long, value_parser = parse_uuid, default_value = "00000000000000000000000000000000")]
    tim_id: Uuid1451,
    #[arg(long, default_value_t = 0)]
    channel_id: u16,
    #[arg(long, default_value_t = SECURITY_TEDS_ACCESS_CODE)]
    access_code: u8,
    #[arg(long, default_value_t = 0)]
    offset: u32,
    #[arg(long, default_value = "2s", value_parser = humantime::parse_duration)]
    timeout: Duration,
}

#[derive(Args)]
struct EncodeArgs {
    /// Textual TEDS description.
    #[arg(long)]
    teds: PathBuf,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct DecodeArgs {
    /// Encoded TEDS block.
    #[arg(long)]
    teds: PathBuf,
}

#[derive(Clone, Copy, ValueEnum)]
enum OpArg {
    Add,
    Remove,
}

#[derive(Clone, Copy, ValueEnum)]
enum AccessArg {
    Read,
    Write,
    Readwrite,
}

#[derive(Args)]
struct AclUpdateArgs {
    #[command(flatten)]
    client: ClientArgs,
    #[arg(long)]
    token: String,
    #[arg(long, value_enum)]
    op: OpArg,
    #[arg(long)]
    user: String,
    #[arg(long, value_enum, default_value = "read")]
    access: AccessArg,
    #[arg(long, value_parser = parse_filter)]
    topic: TopicFilter,
    #[arg(long, default_value = "5s", value_parser = humantime::parse_duration)]
    wait: Duration,
}

#[derive(Args)]
struct PasswdArgs {
    #[arg(long)]
    passwords: PathBuf,
    #[arg(long)]
    username: String,
    #[arg(long)]
    password: String,
}

fn parse_level(s: &str) -> Result<SecurityLevel, String> {
    s.parse()
}

fn parse_uuid(s: &str) -> Result<Uuid1451, String> {
    s.parse().map_err(|e| format!("{e}"))
}

fn parse_filter(s: &str) -> Result<TopicFilter, String> {
    TopicFilter::new(s).map_err(|e| e.to_string())
}

fn parse_fault(s: &str) -> Result<FaultPoint, String> {
    FaultPoint::from_keyword(s).ok_or_else(|| format!("unknown fault point {s:?}"))
}

fn init_logging(default: &str) {
    let filter = EnvFilter::try_from_env("P1451_LOG").unwrap_or_else(|_| EnvFilter::new(default));
    tracing_subscriber::fmt()
        .with_env_filter(filter)
        .with_writer(std::io::stderr)
        .with_ansi(std::io::IsTerminal::is_terminal(&std::io::stderr()))
        .init();
}

fn say(line: impl std::fmt::Display) {
    let mut out = std::io::stdout().lock();
    let _ = writeln!(out, "{line}");
    let _ = out.flush();
}

async fn shutdown_signal() {
    #[cfg(unix)]
    {
        use tokio::signal::unix::{signal, SignalKind};
        let mut term = signal(SignalKind::terminate()).expect("signal handler");
        tokio::select! {
            _ = tokio::signal::ctrl_c() => {}
            _ = term.recv() => {}
        }
    }
    #[cfg(not(unix))]
    let _ = tokio::signal::ctrl_c().await;
}

async fn run_broker(args: BrokerArgs) -> anyhow::Result<i32> {
    let mut config = BrokerConfig::new(args.listen, args.level);
    config.password_file = args.passwords;
    config.acl_file = args.acl;
    config.tls_cert = args.tls_cert;
    config.tls_key = args.tls_key;
    config.acl_poll_interval = args.acl_poll;
    let handle = broker::start(config).await?;
    say(format_args!("listening on {}", handle.local_addr()));

    #[cfg(unix)]
    {
        let reloader = handle.clone();
        let mut hup = tokio::signal::unix::signal(tokio::signal::unix::SignalKind::hangup())?;
        tokio::spawn(async move {
            while hup.recv().await.is_some() {
                let _ = reloader.reload_acl();
            }
        });
    }

    shutdown_signal().await;
    handle.stop().await;
    Ok(exit::OK)
}

async fn run_service(mut service: ServiceHandle) -> anyhow::Result<i32> {
    if let Err(e) = service.ready().await {
        eprintln!("error: {e}");
        return Ok(exit::AUTH);
    }
    say("ready");
    tokio::select! {
        _ = shutdown_signal() => {}
        _ = service.finished() => {}
    }
    service.stop().await;
    Ok(exit::OK)
}

async fn run_ncap(args: NcapArgs) -> anyhow::Result<i32> {
    if args.ncap_id.is_zero() {
        return Err(anyhow!("--ncap-id must not be all zero"));
    }
    let teds = app::load_teds(&args.teds).with_context(|| format!("loading {}", args.teds.display()))?;
    let mut repo = TedsRepository::new();
    repo.register(Uuid1451::ZERO, 0, SECURITY_TEDS_ACCESS_CODE, encode_security_teds(&teds)?)?;
    let service = ncap::serve(args.client.options("ncap"), args.ncap_id, repo);
    run_service(service).await
}

async fn run_acs(args: AcsArgs) -> anyhow::Result<i32> {
    let text = std::fs::read_to_string(&args.tokens).with_context(|| format!("reading {}", args.tokens.display()))?;
    let registry = TokenRegistry::parse(&text)?;
    let cfg = AcsConfig {
        registry,
        acl_path: args.acl,
        trigger: ReloadTrigger::FileWatch,
        faults: FaultPlan(args.crash_at.map(|p| (p, FaultAction::Abort))),
    };
    run_service(acs::serve(args.client.options("acs"), cfg)).await
}

async fn run_read_teds(args: ReadTedsArgs) -> Result<i32, AppError> {
    let params = ReadTedsParams {
        app_id: args.app_id.unwrap_or_else(|| Uuid1451(*uuid::Uuid::new_v4().as_bytes())),
        ncap_id: args.ncap_id,
        tim_id: args.tim_id,
        channel_id: args.channel_id,
        access_code: args.access_code,
        offset: args.offset,
        timeout: args.timeout,
    };
    let outcome = app::read_teds_flow(args.client.options("app"), &params).await?;
    say(format_args!("errorCode: {} ({})", outcome.reply.error_code, error_code::describe(outcome.reply.error_code)));
    match outcome.teds {
        Some(teds) => print!("{}", app::pretty_print(&teds)),
        None => say(format_args!("Block: {}", hex::encode(&outcome.reply.raw_teds_block))),
    }
    Ok(exit::OK)
}

async fn run_acl_update(args: AclUpdateArgs) -> Result<i32, AppError> {
    let params = AclUpdateParams {
        token: args.token,
        op: match args.op {
            OpArg::Add => acs::Op::Add,
            OpArg::Remove => acs::Op::Remove,
        },
        user: args.user,
        access: match args.access {
            AccessArg::Read => Access::Read,
            AccessArg::Write => Access::Write,
            AccessArg::Readwrite => Access::ReadWrite,
        },
        filter: args.topic,
        wait: args.wait,
    };
    let result = app::acl_update_flow(args.client.options("app"), &params).await?;
    say(format_args!("{}: {}", result.status, result.detail));
    Ok(exit::OK)
}

fn run_passwd(args: PasswdArgs) -> anyhow::Result<i32> {
    let existing = match std::fs::read_to_string(&args.passwords) {
        Ok(text) => text,
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => String::new(),
        Err(e) => return Err(e.into()),
    };
    CredentialStore::parse(&existing)?;
    let prefix = format!("{}:", args.username);
    let mut lines: Vec<String> = existing.lines().filter(|l| !l.starts_with(&prefix)).map(str::to_owned).collect();
    lines.push(Credential::new(args.username, args.password.as_bytes()).to_line());
    std::fs::write(&args.passwords, lines.join("\n") + "\n")?;
    Ok(exit::OK)
}

fn report(e: AppError) -> i32 {
    if let AppError::AclRejected(r) = &e {
        say(format_args!("{}: {}", r.status, r.detail));
    }
    eprintln!("error: {e}");
    e.exit_code()
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let service = matches!(cli.command, Command::Broker(_) | Command::Ncap(_) | Command::Acs(_));
    init_logging(if service { "info" } else { "warn" });
    let runtime = match tokio::runtime::Builder::new_multi_thread().enable_all().build() {
        Ok(rt) => rt,
        Err(e) => {
            eprintln!("error: starting runtime: {e}");
            return ExitCode::from(exit::FAILURE as u8);
        }
    };
    let code = runtime.block_on(async {
        let outcome: anyhow::Result<i32> = match cli.command {
            Command::Broker(a) => run_broker(a).await,
            Command::Ncap(a) => run_ncap(a).await,
            Command::Acs(a) => run_acs(a).await,
            Command::ReadTeds(a) => return run_read_teds(a).await.unwrap_or_else(report),
            Command::AclUpdate(a) => return run_acl_update(a).await.unwrap_or_else(report),
            Command::EncodeTeds(a) => {
                return match app::encode_teds_file(&a.teds, &a.out) {
                    Ok(n) => {
                        say(format_args!("wrote {n} octets to {}", a.out.display()));
                        exit::OK
                    }
                    Err(e) => report(e),
                }
            }
            Command::DecodeTeds(a) => {
                return match app::decode_teds_file(&a.teds) {
                    Ok(text) => {
                        print!("{text}");
                        exit::OK
                    }
                    Err(e) => report(e),
                }
            }
            Command::Passwd(a) => run_passwd(a),
        };
        outcome.unwrap_or_else(|e| {
            eprintln!("error: {e:#}");
            exit::FAILURE
        })
    });
    // Background tasks may still hold the runtime; do not wait for them.
    runtime.shutdown_timeout(Duration::from_millis(100));
    ExitCode::from(code as u8)
}
