use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use clap::{Args, Parser, Subcommand};
use shipcheck::api::{self, auth, AppState, ServerConfig};
use shipcheck::clock::{SystemClock, Timestamp};
use shipcheck::content::{default_pack, ContentPack};
use shipcheck::engine::EngineConfig;
use shipcheck::events::{EventLog, ExportFilter};
use shipcheck::harness::{compile_pair, compile_suite, parse_labeled, run_suite, HiddenUnit, TestStatus};
use shipcheck::lang::{self, pretty, ExecLimits, SourceUnit, UnitKind};
use shipcheck::store::{DirStore, Store};

#[derive(Parser)]
#[command(name = "shipcheck", version, about = "Unit-testing escape game server and tools")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the game server.
    Serve(ServeArgs),
    /// Parse a source file and report errors.
    Parse { file: PathBuf },
    /// Print a source file in canonical form.
    Fmt {
        file: PathBuf,
        /// Rewrite the file instead of printing.
        #[arg(long)]
        write: bool,
    },
    /// Call one function of a component and print its outcome as JSON.
    Run {
        file: PathBuf,
        #[arg(long, default_value = "main")]
        entry: String,
        #[command(flatten)]
        limits: LimitArgs,
    },
    /// Run a test file against a component.
    Test {
        component: PathBuf,
        tests: PathBuf,
        /// Print the full result as JSON.
        #[arg(long)]
        json: bool,
        /// Treat the test file as a hidden suite.
        #[arg(long)]
        hidden: bool,
        #[command(flatten)]
        limits: LimitArgs,
    },
    /// Validate a content pack directory, running every hidden suite.
    ValidatePack { dir: Option<PathBuf> },
    /// Export the event log as JSON.
    Export {
        #[arg(long, env = "SHIPCHECK_DATA_DIR", default_value = "data")]
        data_dir: PathBuf,
        #[arg(long)]
        username: Option<String>,
        /// Inclusive lower bound, RFC 3339.
        #[arg(long)]
        from: Option<String>,
        /// Inclusive upper bound, RFC 3339.
        #[arg(long)]
        to: Option<String>,
    },
    /// Create an account; prints a generated password when none is given.
    CreateUser {
        #[arg(long, env = "SHIPCHECK_DATA_DIR", default_value = "data")]
        data_dir: PathBuf,
        username: String,
        #[arg(long)]
        password: Option<String>,
    },
}

#[derive(Args, Clone)]
struct LimitArgs {
    #[arg(long, env = "SHIPCHECK_WALL_TIMEOUT_MS", default_value_t = ExecLimits::default().wall_timeout_ms)]
    wall_timeout_ms: u64,
    #[arg(long, env = "SHIPCHECK_MAX_STEPS", default_value_t = ExecLimits::default().max_steps)]
    max_steps: u64,
    #[arg(long, env = "SHIPCHECK_MAX_LOG_LINES", default_value_t = ExecLimits::default().max_log_lines)]
    max_log_lines: usize,
}

impl LimitArgs {
    fn limits(&self) -> ExecLimits {
        ExecLimits {
            wall_timeout_ms: self.wall_timeout_ms,
            max_steps: self.max_steps,
            max_log_lines: self.max_log_lines,
        }
    }
}

#[derive(Args)]
struct ServeArgs {
    #[arg(long, env = "SHIPCHECK_LISTEN", default_value = "127.0.0.1:8080")]
    listen: String,
    #[arg(long, env = "SHIPCHECK_DATA_DIR", default_value = "data")]
    data_dir: PathBuf,
    /// Content pack directory; the built-in pack when absent.
    #[arg(long, env = "SHIPCHECK_CONTENT_DIR")]
    content_dir: Option<PathBuf>,
    /// HMAC key for session tokens; random per process when absent.
    #[arg(long, env = "SHIPCHECK_TOKEN_SECRET", hide_env_values = true)]
    token_secret: Option<String>,
    #[arg(long, env = "SHIPCHECK_TOKEN_TTL_SECS", default_value_t = 12 * 3600)]
    token_ttl_secs: u64,
    /// Password for the admin account if it does not exist yet.
    #[arg(long, env = "SHIPCHECK_ADMIN_PASSWORD", hide_env_values = true)]
    admin_password: Option<String>,
    /// Overrides every room's sabotage delay.
    #[arg(long, env = "SHIPCHECK_SABOTAGE_WAIT_SECS")]
    sabotage_wait_secs: Option<u64>,
    #[command(flatten)]
    limits: LimitArgs,
}

fn main() -> ExitCode {
    tracing_subscriber::fmt()
        .with_env_filter(
            tracing_subscriber::EnvFilter::try_from_default_env()
                .unwrap_or_else(|_| tracing_subscriber::EnvFilter::new("info")),
        )
        .with_writer(std::io::stderr)
        .init();
    match run(Cli::parse()) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}

type CliResult = Result<ExitCode, Box<dyn std::error::Error>>;

fn run(cli: Cli) -> CliResult {
    match cli.command {
        Command::Serve(args) => serve(args),
        Command::Parse { file } => {
            let unit = read_unit(&file)?;
            match lang::parse(&unit) {
                Ok(p) => {
                    println!(
                        "{} {}: {} executable lines",
                        kind_word(p.kind()),
                        p.name(),
                        lang::executable_lines(&p).len()
                    );
                    Ok(ExitCode::SUCCESS)
                }
                Err(e) => {
                    eprintln!("{}:{e}", file.display());
                    Ok(ExitCode::FAILURE)
                }
            }
        }
        Command::Fmt { file, write } => {
            let unit = read_unit(&file)?;
            let program = lang::parse(&unit).map_err(|e| format!("{}:{e}", file.display()))?;
            let text = pretty::unit(&program.ast);
            if write {
                std::fs::write(&file, text)?;
            } else {
                print!("{text}");
            }
            Ok(ExitCode::SUCCESS)
        }
        Command::Run { file, entry, limits } => {
            let unit = read_unit(&file)?;
            let program = lang::parse(&unit).map_err(|e| format!("{}:{e}", file.display()))?;
            let outcome = lang::run(&program, &entry, &limits.limits())?;
            println!("{}", serde_json::to_string_pretty(&outcome)?);
            Ok(ExitCode::SUCCESS)
        }
        Command::Test {
            component,
            tests,
            json,
            hidden,
            limits,
        } => {
            let cut = read_unit(&component)?;
            let tests = read_unit(&tests)?;
            let suite = if hidden {
                let cut = parse_labeled(&cut, false)?;
                let tests = parse_labeled(&tests, true)?;
                compile_suite(&cut, None, &[HiddenUnit { program: &tests, only: None }])?
            } else {
                compile_pair(&cut, &tests)?
            };
            let result = run_suite(&suite, &limits.limits());
            if json {
                println!("{}", serde_json::to_string_pretty(&result)?);
            } else {
                for r in &result.results {
                    let status = serde_json::to_value(r.status)?;
                    print!("{:<8} {}", status.as_str().unwrap_or("?"), r.name);
                    match &r.message {
                        Some(m) => println!(": {m}"),
                        None => println!(),
                    }
                }
                println!(
                    "coverage {:.1}% ({} of {} lines)",
                    result.coverage_percent,
                    result.hit_lines.len(),
                    result.executable_lines.len()
                );
            }
            let ok = result.results.iter().all(|r| r.status == TestStatus::Pass);
            Ok(if ok { ExitCode::SUCCESS } else { ExitCode::FAILURE })
        }
        Command::ValidatePack { dir } => {
            let pack = match dir {
                Some(d) => ContentPack::load(&d),
                None => ContentPack::from_files(&shipcheck::content::default_files()),
            };
            match pack {
                Ok(p) => {
                    for r in &p.rooms {
                        println!(
                            "room {} {} ({}): ok, guided by {}",
                            r.spec.order, r.spec.room_name, r.spec.component_name, r.guiding_test.name
                        );
                    }
                    Ok(ExitCode::SUCCESS)
                }
                Err(report) => {
                    eprintln!("{report}");
                    Ok(ExitCode::FAILURE)
                }
            }
        }
        Command::Export {
            data_dir,
            username,
            from,
            to,
        } => {
            let store: Arc<dyn Store> = Arc::new(DirStore::open(&data_dir)?);
            let log = EventLog::open(store)?;
            let filter = ExportFilter {
                username,
                from: from.as_deref().map(Timestamp::parse_iso).transpose()?,
                to: to.as_deref().map(Timestamp::parse_iso).transpose()?,
            };
            println!("{}", log.export_json(&filter));
            Ok(ExitCode::SUCCESS)
        }
        Command::CreateUser {
            data_dir,
            username,
            password,
        } => {
            let store: Arc<dyn Store> = Arc::new(DirStore::open(&data_dir)?);
            let auth = auth::Auth::new(b"unused", 1, Arc::new(SystemClock), store)?;
            let generated = password.is_none();
            let password = password.unwrap_or_else(auth::random_password);
            auth.create_user(&username, &password)?;
            if generated {
                println!("{username} {password}");
            }
            Ok(ExitCode::SUCCESS)
        }
    }
}

fn serve(args: ServeArgs) -> CliResult {
    let mut pack = match &args.content_dir {
        Some(d) => ContentPack::load(d).map_err(|r| r.to_string())?,
        None => default_pack(),
    };
    if let Some(s) = args.sabotage_wait_secs {
        pack = pack.with_wait_seconds(s);
    }
    let store: Arc<dyn Store> = Arc::new(DirStore::open(&args.data_dir)?);
    let secret = match &args.token_secret {
        Some(s) => s.as_bytes().to_vec(),
        None => {
            tracing::warn!("no token secret configured; tokens will not survive a restart");
            rand::random::<[u8; 32]>().to_vec()
        }
    };
    let config = ServerConfig {
        token_secret: secret,
        token_ttl_secs: args.token_ttl_secs,
        engine: EngineConfig {
            limits: args.limits.limits(),
            ..EngineConfig::default()
        },
    };
    let state = AppState::new(Arc::new(pack), store, Arc::new(SystemClock), config)?;
    if !state.auth.has_account(auth::ADMIN) {
        let generated = args.admin_password.is_none();
        let password = args.admin_password.clone().unwrap_or_else(auth::random_password);
        state.auth.create_user(auth::ADMIN, &password)?;
        if generated {
            eprintln!("created account admin with password {password}");
        }
    }
    let runtime = tokio::runtime::Runtime::new()?;
    runtime.block_on(async {
        let listener = tokio::net::TcpListener::bind(&args.listen).await?;
        tracing::info!(address = %listener.local_addr()?, "listening");
        api::serve(listener, state).await
    })?;
    Ok(ExitCode::SUCCESS)
}

fn read_unit(path: &Path) -> Result<SourceUnit, Box<dyn std::error::Error>> {
    let text = std::fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
    let name = path
        .file_stem()
        .and_then(|s| s.to_str())
        .unwrap_or("unit")
        .to_string();
    let kind = if text.trim_start().starts_with("tests") {
        UnitKind::Test
    } else {
        UnitKind::Cut
    };
    Ok(SourceUnit::new(name, text, kind))
}

fn kind_word(kind: UnitKind) -> &'static str {
    match kind {
        UnitKind::Cut => "component",
        UnitKind::Test => "tests",
    }
}
