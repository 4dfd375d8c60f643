//! `aiq`: scale authoring, evaluation sessions and reports, against a local
//! data directory or a running API server.

mod backend;
mod render;

use std::io::{IsTerminal, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use aiq_core::adapters::AdapterDescriptor;
use aiq_core::dsl::{parse, serialize_scale};
use aiq_core::reference::Dataset;
use aiq_core::report::ExportFormat;
use aiq_core::scoring::CompletionPolicy;
use aiq_core::session::{SessionFilter, SessionState};
use aiq_core::subject::{SubjectDescriptor, SubjectKind};
use aiq_core::workspace::{AccessMode, Product, Workspace};
use aiq_core::{Error, ErrorCode};
use aiq_server::{ErrorBody, ServeConfig};

use backend::{failure, Backend, Remote, Res};
use render::{Render, Reference, ScaleDetail, SessionDetail};

#[derive(Parser)]
#[command(name = "aiq", version, about = "AI IQ evaluation harness")]
struct Cli {
    /// Local data directory (ignored when --api-url is set).
    #[arg(long, global = true, env = "AIQ_DATA_DIR", default_value = ".aiq")]
    data_dir: PathBuf,

    /// Base URL of a running `aiq serve`; switches to remote mode.
    #[arg(long, global = true, env = "AIQ_API_URL")]
    api_url: Option<String>,

    #[arg(long, global = true, value_enum, default_value_t = Output::Table)]
    output: Output,

    #[arg(long, global = true, value_enum, default_value_t = Color::Auto)]
    color: Color,

    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Output {
    Table,
    Json,
    Csv,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Color {
    Auto,
    Always,
    Never,
}

#[derive(Subcommand)]
enum Command {
    /// Validate, format, list and register scales.
    #[command(subcommand)]
    Scale(ScaleCmd),
    /// List and register model adapters.
    #[command(subcommand)]
    Adapter(AdapterCmd),
    /// List and register priced products for value reports.
    #[command(subcommand)]
    Product(ProductCmd),
    /// Run evaluation sessions.
    #[command(subcommand)]
    Session(SessionCmd),
    /// Ranking and value reports.
    #[command(subcommand)]
    Report(ReportCmd),
    /// Published reference tables.
    #[command(subcommand)]
    Reference(ReferenceCmd),
    /// Serve the HTTP API over the data directory.
    Serve(ServeArgs),
}

#[derive(Subcommand)]
enum ScaleCmd {
    Validate { file: PathBuf },
    Fmt {
        file: PathBuf,
        #[arg(long)]
        write: bool,
    },
    List,
    Show { id: String },
    Add {
        file: PathBuf,
        #[arg(long)]
        id: Option<String>,
    },
}

#[derive(Subcommand)]
enum AdapterCmd {
    List,
    /// Register the JSON descriptor in FILE.
    Add { file: PathBuf },
}

#[derive(Subcommand)]
enum ProductCmd {
    List,
    Add {
        #[arg(long)]
        name: String,
        #[arg(long, allow_negative_numbers = true)]
        price: f64,
        #[arg(long)]
        currency: String,
    },
}

#[derive(Subcommand)]
enum SessionCmd {
    New {
        #[arg(long)]
        scale: String,
        #[arg(long)]
        subject: String,
        #[arg(long, default_value = "ai_system", value_parser = parse_kind)]
        kind: SubjectKind,
        #[arg(long, default_value = "manual")]
        adapter: String,
    },
    Show { id: String },
    List(ListArgs),
    Score {
        id: String,
        indicator: String,
        #[arg(allow_negative_numbers = true)]
        score: f64,
        #[arg(long)]
        note: Option<String>,
    },
    Probe {
        id: String,
        indicator: String,
        #[arg(long)]
        prompt: String,
    },
    Note {
        id: String,
        note: String,
        #[arg(long)]
        indicator: Option<String>,
    },
    Complete {
        id: String,
        /// Score over the answered indicators instead of requiring all.
        #[arg(long)]
        renormalize: bool,
    },
    Abandon { id: String },
}

#[derive(Args)]
struct ListArgs {
    #[arg(long, value_parser = parse_state)]
    state: Option<SessionState>,
    #[arg(long, value_parser = parse_kind)]
    kind: Option<SubjectKind>,
    #[arg(long)]
    scale: Option<String>,
    #[arg(long)]
    subject: Option<String>,
    #[arg(long)]
    offset: Option<usize>,
    #[arg(long)]
    limit: Option<usize>,
}

#[derive(Subcommand)]
enum ReportCmd {
    Ranking {
        #[arg(long)]
        scale: Option<String>,
        #[arg(long, value_parser = parse_dataset)]
        overlay: Option<Dataset>,
    },
    Value {
        #[arg(long)]
        currency: Option<String>,
    },
}

#[derive(Subcommand)]
enum ReferenceCmd {
    Show {
        #[arg(value_parser = parse_dataset)]
        dataset: Dataset,
    },
}

#[derive(Args)]
struct ServeArgs {
    #[arg(long, default_value_t = 8080)]
    port: u16,
    #[arg(long, default_value = "127.0.0.1")]
    bind: String,
    #[arg(long)]
    read_only: bool,
}

fn parse_kind(s: &str) -> Result<SubjectKind, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

fn parse_state(s: &str) -> Result<SessionState, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

fn parse_dataset(s: &str) -> Result<Dataset, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

impl ScaleCmd {
    fn writes(&self) -> bool {
        matches!(self, ScaleCmd::Add { .. })
    }
}

impl Command {
    fn writes(&self) -> bool {
        match self {
            Command::Scale(c) => c.writes(),
            Command::Adapter(c) => matches!(c, AdapterCmd::Add { .. }),
            Command::Product(c) => matches!(c, ProductCmd::Add { .. }),
            Command::Session(c) => !matches!(c, SessionCmd::Show { .. } | SessionCmd::List(_)),
            Command::Report(_) | Command::Reference(_) | Command::Serve(_) => false,
        }
    }
}

struct Console {
    output: Output,
    color: bool,
}

impl Console {
    fn paint(&self, code: &str, text: &str) -> String {
        if self.color {
            format!("\x1b[{code}m{text}\x1b[0m")
        } else {
            text.to_string()
        }
    }

    fn emit<T: Serialize + Render>(&self, value: &T) -> Res<()> {
        let text = match self.output {
            Output::Json => {
                let mut s = serde_json::to_string_pretty(value).map_err(|e| failure(Error::Internal(e.to_string())))?;
                s.push('\n');
                s
            }
            Output::Csv => render::csv(&value.header(), &value.rows()),
            Output::Table => value.table(),
        };
        print!("{text}");
        Ok(())
    }

    fn emit_bytes(&self, bytes: &[u8]) {
        let mut out = std::io::stdout().lock();
        let _ = out.write_all(bytes);
        let _ = out.flush();
    }

    fn export_format(&self) -> ExportFormat {
        match self.output {
            Output::Table => ExportFormat::Markdown,
            Output::Json => ExportFormat::Json,
            Output::Csv => ExportFormat::Csv,
        }
    }

    fn fail(&self, e: &ErrorBody) -> ExitCode {
        if self.output == Output::Json {
            eprintln!("{}", serde_json::to_string(e).unwrap_or_default());
        } else {
            eprintln!("{} {}: {}", self.paint("31", "error:"), e.code, e.message);
        }
        exit_code(e.code)
    }
}

fn exit_code(code: ErrorCode) -> ExitCode {
    if code.is_validation() {
        ExitCode::from(2)
    } else {
        ExitCode::from(1)
    }
}

fn read_file(path: &Path) -> Res<String> {
    std::fs::read_to_string(path).map_err(|e| failure(Error::io(path, e)))
}

/// `scale validate` and `scale fmt` work on files and need no data directory.
fn scale_file(console: &Console, file: &Path, fmt: Option<bool>) -> Result<ExitCode, ErrorBody> {
    let text = read_file(file)?;
    let parsed = parse(&text);
    let name = file.display().to_string();
    let clean = parsed.errors().next().is_none();
    if console.output == Output::Json && fmt.is_none() {
        let diagnostics = serde_json::json!({"ok": clean, "diagnostics": parsed.diagnostics});
        println!("{}", serde_json::to_string_pretty(&diagnostics).unwrap_or_default());
    } else {
        for d in &parsed.diagnostics {
            let line = d.render(&name);
            if d.is_error() {
                eprintln!("{line}");
            } else if fmt.is_none() {
                println!("{line}");
            }
        }
    }
    let Some(scale) = parsed.scale.filter(|_| clean) else {
        return Ok(ExitCode::from(2));
    };
    match fmt {
        None => {
            if console.output != Output::Json {
                println!("{}", console.paint("32", "OK"));
            }
        }
        Some(true) => {
            let canonical = serialize_scale(&scale);
            if canonical != text {
                std::fs::write(file, canonical).map_err(|e| failure(Error::io(file, e)))?;
            }
        }
        Some(false) => print!("{}", serialize_scale(&scale)),
    }
    Ok(ExitCode::SUCCESS)
}

async fn serve(data_dir: PathBuf, args: ServeArgs) -> Res<()> {
    let mut config = ServeConfig::new(data_dir);
    config.port = args.port;
    config.bind = args.bind;
    config.read_only = args.read_only;
    config.token = std::env::var("AIQ_API_TOKEN").ok();
    let handle = aiq_server::serve(config).await.map_err(failure)?;
    eprintln!("listening on {}", handle.url());
    handle
        .run_until(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await;
    Ok(())
}

fn open_backend(cli: &Cli) -> Res<Backend> {
    if let Some(url) = &cli.api_url {
        return Ok(Backend::Remote(Remote::new(url, std::env::var("AIQ_API_TOKEN").ok())?));
    }
    let mode = if cli.command.writes() {
        AccessMode::ReadWrite
    } else {
        AccessMode::ReadOnly
    };
    Workspace::open(&cli.data_dir, mode).map(Backend::Local).map_err(failure)
}

async fn run(cli: Cli, console: &Console) -> Result<ExitCode, ErrorBody> {
    match &cli.command {
        Command::Scale(ScaleCmd::Validate { file }) => return scale_file(console, file, None),
        Command::Scale(ScaleCmd::Fmt { file, write }) => return scale_file(console, file, Some(*write)),
        _ => {}
    }
    if let Command::Serve(args) = cli.command {
        serve(cli.data_dir, args).await?;
        return Ok(ExitCode::SUCCESS);
    }
    let backend = open_backend(&cli)?;
    match cli.command {
        Command::Scale(cmd) => match cmd {
            ScaleCmd::List => console.emit(&backend.scales().await?)?,
            ScaleCmd::Show { id } => {
console.emit(&ScaleDetail(backend.scale(&id).await?))?
            }
            ScaleCmd::Add { file, id } => {
                let text = read_file(&file)?;
                console.emit(&backend.add_scale(&text, id.as_deref()).await?)?
            }
            ScaleCmd::Validate { .. } | ScaleCmd::Fmt { .. } => unreachable!("handled above"),
        },
        Command::Adapter(cmd) => match cmd {
            AdapterCmd::List => console.emit(&backend.adapters().await?)?,
            AdapterCmd::Add { file } => {
                let text = read_file(&file)?;
                let adapter: AdapterDescriptor = serde_json::from_str(&text)
                    .map_err(|e| failure(Error::BadRequest(format!("{}: {e}", file.display()))))?;
                console.emit(&backend.add_adapter(adapter).await?)?
            }
        },
        Command::Product(cmd) => match cmd {
            ProductCmd::List => console.emit(&backend.products().await?)?,
            ProductCmd::Add { name, price, currency } => {
                console.emit(&backend.add_product(Product { name, price, currency }).await?)?
            }
        },
        Command::Session(cmd) => match cmd {
            SessionCmd::New {
                scale,
                subject,
                kind,
                adapter,
            } => {
                let session = backend
                    .create_session(&scale, SubjectDescriptor::new(subject, kind), &adapter)
                    .await?;
                console.emit(&session)?
            }
            SessionCmd::Show { id } => {
console.emit(&SessionDetail(backend.session(&id).await?))?
            }
            SessionCmd::List(a) => {
                let filter = SessionFilter {
                    state: a.state,
                    subject_kind: a.kind,
                    scale_id: a.scale,
                    subject: a.subject,
                    offset: a.offset,
                    limit: a.limit,
                };
                console.emit(&backend.sessions(&filter).await?)?
            }
            SessionCmd::Score {
                id,
                indicator,
                score,
                note,
            } => console.emit(&backend.record_score(&id, &indicator, score, note.as_deref()).await?)?,
            SessionCmd::Probe { id, indicator, prompt } => {
                console.emit(&backend.probe(&id, &indicator, &prompt).await?)?
            }
            SessionCmd::Note { id, note, indicator } => {
                let session = backend.add_note(&id, indicator.as_deref(), &note).await?;
                console.emit(&session)?
            }
            SessionCmd::Complete { id, renormalize } => {
                let policy = if renormalize {
                    CompletionPolicy::RenormalizeOverScored
                } else {
                    CompletionPolicy::RequireComplete
                };
                console.emit(&backend.complete(&id, policy).await?)?
            }
            SessionCmd::Abandon { id } => console.emit(&backend.abandon(&id).await?)?,
        },
        Command::Report(cmd) => {
            let bytes = match cmd {
                ReportCmd::Ranking { scale, overlay } => {
                    backend
                        .ranking(scale.as_deref(), overlay, console.export_format())
                        .await?
                }
                ReportCmd::Value { currency } => {
                    backend
                        .value_report(currency.as_deref(), console.export_format())
                        .await?
                }
            };
            console.emit_bytes(&bytes);
        }
        Command::Reference(ReferenceCmd::Show { dataset }) => {
            console.emit(&Reference(backend.reference(dataset).await?))?
        }
        Command::Serve(_) => unreachable!("handled above"),
    }
    Ok(ExitCode::SUCCESS)
}

#[tokio::main]
async fn main() -> ExitCode {
    let cli = Cli::parse();
    let color = match cli.color {
        Color::Always => true,
        Color::Never => false,
        Color::Auto => std::env::var_os("NO_COLOR").is_none() && std::io::stderr().is_terminal(),
    };
    let console = Console {
        output: cli.output,
        color,
    };
    match run(cli, &console).await {
        Ok(code) => code,
        Err(e) => console.fail(&e),
    }
}
