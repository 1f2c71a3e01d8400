//! The `dialogmap` command line.
//!
//! Standard output carries stable `key=value` lines; diagnostics go to
//! standard error. Exit codes: 0 success, 2 bad input, 3 provider failure
//! after retries (HTTP provider only), 4 invalid log.

use crate::config::ServerConfig;
use crate::engine::export::MapExport;
use crate::server::{provider_for, Server};
use crate::session::protocol::ServerMessage;
use crate::session::record::{read_log, FileLog, LogError};
use crate::session::{replay, validate_log, Clock, Session, SessionOptions};
use crate::transcript::{parse_transcript, run_transcript};
use crate::types::{Mode, ProviderConfig, SessionConfig, SessionId};
use clap::{Parser, Subcommand, ValueEnum};
use std::io::Write;
use std::path::{Path, PathBuf};

pub const EXIT_OK: i32 = 0;
pub const EXIT_BAD_INPUT: i32 = 2;
pub const EXIT_PROVIDER: i32 = 3;
pub const EXIT_INVALID_LOG: i32 = 4;

#[derive(Debug, Parser)]
#[command(name = "dialogmap", version, about = "Collaborative IBIS dialogue mapping")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ModeArg {
    Human,
    Ai,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ProviderArg {
    Mock,
    Http,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ExportFormat {
    Canonical,
    Graph,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Host sessions over TCP.
    Serve {
        #[arg(long)]
        config: PathBuf,
    },
    /// Run a transcript file through the full pipeline.
    Replay {
        #[arg(long)]
        transcript: PathBuf,
        #[arg(long, value_enum)]
        mode: ModeArg,
        #[arg(long, value_enum, default_value = "mock")]
        provider: ProviderArg,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        /// Map export destination; the session log goes to `<out>.log`.
        #[arg(long)]
        out: PathBuf,
        #[arg(long, env = "DIALOGMAP_HTTP_ENDPOINT")]
        endpoint: Option<String>,
        #[arg(long, env = "DIALOGMAP_HTTP_MODEL")]
        model: Option<String>,
        #[arg(long, default_value_t = 30_000)]
        timeout_ms: u64,
        #[arg(long, default_value_t = crate::types::DEFAULT_CHECKPOINT_WORDS)]
        checkpoint_words: usize,
    },
    /// Print the map a session log ends with.
    Export {
        #[arg(long)]
        log: PathBuf,
        #[arg(long, value_enum, default_value = "canonical")]
        format: ExportFormat,
    },
    /// Replay a session log and check every invariant.
    Validate {
        #[arg(long)]
        log: PathBuf,
    },
}

/// Log path used by `replay --out <path>`.
pub fn log_path_for(out: &Path) -> PathBuf {
    let mut s = out.as_os_str().to_owned();
    s.push(".log");
    PathBuf::from(s)
}

pub fn run(cli: Cli, out: &mut dyn Write, err: &mut dyn Write) -> i32 {
    match cli.command {
        Command::Serve { config } => serve(&config, out, err),
        Command::Replay {
            transcript,
            mode,
            provider,
            seed,
            out: out_path,
            endpoint,
            model,
            timeout_ms,
            checkpoint_words,
        } => {
            let provider = match provider {
                ProviderArg::Mock => ProviderConfig::Mock { seed },
                ProviderArg::Http => ProviderConfig::Http {
                    endpoint: endpoint.unwrap_or_default(),
                    model: model.unwrap_or_default(),
                    timeout_ms,
                    max_retries: 1,
                },
            };
            let mode = match mode {
                ModeArg::Human => Mode::HumanMap,
                ModeArg::Ai => Mode::AiMap,
            };
            let mut config = SessionConfig::new(mode, provider);
            config.checkpoint_words = checkpoint_words;
            run_replay(&transcript, config, &out_path, out, err)
        }
        Command::Export { log, format } => export(&log, format, out, err),
        Command::Validate { log } => validate(&log, out, err),
    }
}

macro_rules! say {
    ($w:expr, $($arg:tt)*) => {{
        let _ = writeln!($w, $($arg)*);
    }};
}

pub fn run_replay(
    transcript: &Path,
    config: SessionConfig,
    out_path: &Path,
    out: &mut dyn Write,
    err: &mut dyn Write,
) -> i32 {
    if let Err(e) = config.validate() {
        say!(err, "error: {e}");
        return EXIT_BAD_INPUT;
    }
    let text = match std::fs::read_to_string(transcript) {
        Ok(t) => t,
        Err(e) => {
            say!(err, "error: {}: {e}", transcript.display());
            return EXIT_BAD_INPUT;
        }
    };
    let events = match parse_transcript(&text) {
        Ok(ev) => ev,
        Err(e) => {
            say!(err, "error: {}: {e}", transcript.display());
            return EXIT_BAD_INPUT;
        }
    };
    let session_id = events
        .first()
        .map(|e| e.session_id.clone())
        .unwrap_or_else(|| SessionId::new("replay"));
    let log_path = log_path_for(out_path);
    let sink = match FileLog::create(&log_path) {
        Ok(s) => s,
        Err(e) => {
            say!(err, "error: {}: {e}", log_path.display());
            return EXIT_BAD_INPUT;
        }
    };
    let options = SessionOptions {
        clock: Clock::Transcript,
        ..SessionOptions::default()
    };
    let is_http = matches!(config.provider, ProviderConfig::Http { .. });
    let provider = provider_for(&config.provider);
    let mut session = match Session::new(session_id, config, Box::new(sink), options) {
        Ok(s) => s,
        Err(e) => {
            say!(err, "error: {e}");
            return EXIT_BAD_INPUT;
        }
    };
    let messages = match run_transcript(&mut session, &events, &*provider) {
        Ok(m) => m,
        Err(e) => {
            say!(err, "error: {e}");
            return EXIT_BAD_INPUT;
        }
    };

    let mut faults = 0;
    let mut transport_faults = 0;
    for m in &messages {
        if let ServerMessage::Error { code, detail, server_seq: Some(seq), .. } = m {
            faults += 1;
            if code == "ProviderTimeout" || code == "ProviderUnavailable" {
                transport_faults += 1;
            }
            say!(err, "provider fault at record {seq}: {detail}");
        }
    }

    let export = MapExport::of(session.state());
    let mut bytes = export.to_canonical().expect("exports serialize");
    bytes.push(b'\n');
    if let Err(e) = std::fs::write(out_path, bytes) {
        say!(err, "error: {}: {e}", out_path.display());
        return EXIT_BAD_INPUT;
    }
    say!(out, "{}", export.summary_line());
    say!(
        out,
        "unannotated_turns={} provider_faults={}",
        session.state().unannotated_turns().len(),
        faults
    );
    say!(out, "log={}", log_path.display());
    if is_http && transport_faults > 0 {
        say!(err, "error: {transport_faults} provider calls failed after retries");
        return EXIT_PROVIDER;
    }
    EXIT_OK
}

fn load_log(log: &Path, err: &mut dyn Write) -> Result<(crate::session::record::LogHeader, Vec<crate::session::record::SessionLogRecord>), i32> {
    read_log(log).map_err(|e| match e {
        LogError::Io(io) => {
            say!(err, "error: {}: {io}", log.display());
            EXIT_BAD_INPUT
        }
        other => {
            say!(err, "error: {}: {other}", log.display());
            EXIT_INVALID_LOG
        }
    })
}

fn export(log: &Path, format: ExportFormat, out: &mut dyn Write, err: &mut dyn Write) -> i32 {
    let (header, records) = match load_log(log, err) {
        Ok(l) => l,
        Err(code) => return code,
    };
    let core = match replay(&header, &records) {
        Ok(c) => c,
        Err(e) => {
            say!(err, "error: {e}");
            return EXIT_INVALID_LOG;
        }
    };
    let export = MapExport::of(core.state());
    match format {
        ExportFormat::Canonical => {
            let bytes = export.to_canonical().expect("exports serialize");
            let _ = out.write_all(&bytes);
            let _ = out.write_all(b"\n");
        }
        ExportFormat::Graph => {
            let _ = out.write_all(export.to_dot().as_bytes());
        }
    }
    EXIT_OK
}

fn validate(log: &Path, out: &mut dyn Write, err: &mut dyn Write) -> i32 {
    let (header, records) = match read_log(log) {
        Ok(l) => l,
        Err(LogError::Io(e)) => {
            say!(err, "error: {}: {e}", log.display());
            return EXIT_BAD_INPUT;
        }
        Err(LogError::Malformed { line, message }) => {
            say!(out, "invalid invariant=well-formed-record line={line}");
            say!(err, "{message}");
            return EXIT_INVALID_LOG;
        }
        Err(LogError::Empty) => {
            say!(out, "invalid invariant=well-formed-record line=1");
            return EXIT_INVALID_LOG;
        }
    };
    match validate_log(&header, &records) {
        Ok(core) => {
            say!(out, "valid records={} last_seq={}", records.len(), core.state().last_seq());
            EXIT_OK
        }
        Err(v) => {
            say!(out, "invalid invariant={} seq={}", v.name, v.server_seq);
            say!(err, "{}", v.detail);
            EXIT_INVALID_LOG
        }
    }
}

fn serve(config: &Path, out: &mut dyn Write, err: &mut dyn Write) -> i32 {
    let config = match ServerConfig::load(Some(config)) {
        Ok(c) => c,
        Err(e) => {
            say!(err, "error: {e}");
            return EXIT_BAD_INPUT;
        }
    };
    let runtime = match tokio::runtime::Runtime::new() {
        Ok(r) => r,
        Err(e) => {
            say!(err, "error: {e}");
            return EXIT_BAD_INPUT;
        }
    };
    runtime.block_on(async {
        let server = Server::new(config);
        let listener = match server.bind().await {
            Ok(l) => l,
            Err(e) => {
                say!(err, "error: cannot listen: {e}");
                return EXIT_BAD_INPUT;
            }
        };
        if let Ok(addr) = listener.local_addr() {
            say!(out, "listening={addr}");
            let _ = out.flush();
        }
        tokio::select! {
            result = server.run(listener) => {
                if let Err(e) = result {
                    say!(err, "error: {e}");
                    return EXIT_BAD_INPUT;
                }
                EXIT_OK
            }
            _ = tokio::signal::ctrl_c() => EXIT_OK,
        }
    })
}
