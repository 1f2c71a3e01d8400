//! TCP session server.
//!
//! Each session is an actor task that owns its [`Session`]; connections and
//! provider jobs talk to it through one channel, which is the only ordering
//! point. Provider calls run on the blocking pool and report back as
//! commands, so user ops keep flowing while the model works.

use crate::config::ServerConfig;
use crate::pipeline::http::{HttpProvider, API_KEY_ENV};
use crate::pipeline::{MockProvider, Provider};
use crate::session::protocol::{decode, encode, ClientMessage, ServerMessage, MAX_FRAME_BYTES};
use crate::session::record::FileLog;
use crate::session::{JobOutcome, Session, SessionError, SessionOptions};
use crate::types::{ProviderConfig, SessionConfig, SessionId, UserId};
use bytes::Bytes;
use futures::{SinkExt, StreamExt};
use std::collections::{BTreeMap, HashMap};
use std::io;
use std::net::SocketAddr;
use std::sync::{Arc, Mutex};
use tokio::net::{TcpListener, TcpStream};
use tokio::sync::{mpsc, oneshot};
use tokio_util::codec::{Framed, LengthDelimitedCodec};

/// Builds the provider a session config asks for.
pub fn provider_for(config: &ProviderConfig) -> Arc<dyn Provider> {
    match config {
        ProviderConfig::Mock { seed } => Arc::new(MockProvider::new(*seed)),
        ProviderConfig::Http {
            endpoint,
            model,
            timeout_ms,
            ..
        } => Arc::new(
            HttpProvider::new(endpoint.clone(), model.clone(), *timeout_ms)
                .with_api_key(std::env::var(API_KEY_ENV).ok()),
        ),
    }
}

pub fn codec() -> LengthDelimitedCodec {
    LengthDelimitedCodec::builder()
        .max_frame_length(MAX_FRAME_BYTES)
        .new_codec()
}

enum Command {
    Join {
        conn: u64,
        user_id: UserId,
        display_name: String,
        outbox: mpsc::UnboundedSender<ServerMessage>,
        reply: oneshot::Sender<Result<(), ServerMessage>>,
    },
    Client {
        conn: u64,
        message: ClientMessage,
    },
    JobDone {
        id: u64,
        outcome: JobOutcome,
    },
    Leave {
        conn: u64,
    },
}

struct Subscriber {
    user_id: UserId,
    outbox: mpsc::UnboundedSender<ServerMessage>,
}

struct Actor {
    session: Session,
    provider: Arc<dyn Provider>,
    subscribers: BTreeMap<u64, Subscriber>,
    commands: mpsc::UnboundedSender<Command>,
}

fn rejection(err: &SessionError, op_id: Option<crate::types::OpId>) -> ServerMessage {
    ServerMessage::Error {
        code: err.code().to_string(),
        detail: err.to_string(),
        server_seq: None,
        op_id,
        task: None,
        subject: None,
    }
}

impl Actor {
    async fn run(mut self, mut rx: mpsc::UnboundedReceiver<Command>) {
        while let Some(command) = rx.recv().await {
            if let Err(err) = self.handle(command) {
                // The log can no longer be trusted; stop the session.
                tracing::error!(session = %self.session.session_id(), "session stopped: {err}");
                self.broadcast(vec![rejection(&err, None)]);
                return;
            }
            self.dispatch_jobs();
        }
    }

    fn handle(&mut self, command: Command) -> Result<(), SessionError> {
        match command {
            Command::Join {
                conn,
                user_id,
                display_name,
                outbox,
                reply,
            } => match self.session.join(user_id.clone(), &display_name) {
                Ok(snapshot) => {
                    let _ = outbox.send(snapshot);
                    self.subscribers.insert(conn, Subscriber { user_id, outbox });
                    let _ = reply.send(Ok(()));
                }
                Err(err) => {
                    let _ = reply.send(Err(rejection(&err, None)));
                }
            },
            Command::Leave { conn } => {
                if let Some(sub) = self.subscribers.remove(&conn) {
                    if !self.subscribers.values().any(|s| s.user_id == sub.user_id) {
                        self.session.leave(&sub.user_id);
                    }
                }
            }
            Command::JobDone { id, outcome } => {
                let messages = self.session.complete_job(id, outcome)?;
                self.broadcast(messages);
            }
            Command::Client { conn, message } => self.client(conn, message)?,
        }
        Ok(())
    }

    fn client(&mut self, conn: u64, message: ClientMessage) -> Result<(), SessionError> {
        let mut op_id = None;
        let result = match message {
            ClientMessage::Join { .. } => Err(SessionError::BadRequest("already joined".into())),
            ClientMessage::SubmitOp { op } => {
                op_id = Some(op.op_id.clone());
                self.session.submit_op(op)
            }
            ClientMessage::SubmitTranscriptEvent { event } => self.session.ingest(event),
            ClientMessage::CloseTranscript => self.session.end_transcript(),
            ClientMessage::SetAgenda { text } => self.session.set_agenda(&text),
            ClientMessage::GetTurnTranscript { turn_id } => {
                self.session.turn_transcript(turn_id).map(|m| {
                    self.send_to(conn, m);
                    Vec::new()
                })
            }
        };
        match result {
            Ok(messages) => self.broadcast(messages),
            Err(SessionError::Log(e)) => return Err(SessionError::Log(e)),
            Err(err) => self.send_to(conn, rejection(&err, op_id)),
        }
        Ok(())
    }

    fn send_to(&self, conn: u64, message: ServerMessage) {
        if let Some(sub) = self.subscribers.get(&conn) {
            let _ = sub.outbox.send(message);
        }
    }

    fn broadcast(&self, messages: Vec<ServerMessage>) {
        for message in messages {
            for sub in self.subscribers.values() {
                let _ = sub.outbox.send(message.clone());
            }
        }
    }

    fn dispatch_jobs(&mut self) {
        for job in self.session.take_jobs() {
            let provider = self.provider.clone();
            let commands = self.commands.clone();
            tokio::spawn(async move {
                let id = job.id;
                let task = job.task();
                let outcome = match tokio::task::spawn_blocking(move || job.run(&*provider)).await {
                    Ok(outcome) => outcome,
                    Err(e) => {
                        tracing::error!("provider job {id} ({}) panicked: {e}", task.as_str());
                        return;
                    }
                };
                let _ = commands.send(Command::JobDone { id, outcome });
            });
        }
    }
}

/// Session ids become file names, so they are restricted.
fn valid_session_id(id: &SessionId) -> bool {
    let s = id.as_str();
    !s.is_empty()
        && s.len() <= 128
        && s.chars().all(|c| c.is_ascii_alphanumeric() || c == '-' || c == '_')
}

#[derive(Clone)]
pub struct Server {
    config: Arc<ServerConfig>,
    sessions: Arc<Mutex<HashMap<SessionId, mpsc::UnboundedSender<Command>>>>,
    next_conn: Arc<Mutex<u64>>,
}

impl Server {
    pub fn new(config: ServerConfig) -> Self {
        Server {
            config: Arc::new(config),
            sessions: Arc::new(Mutex::new(HashMap::new())),
            next_conn: Arc::new(Mutex::new(0)),
        }
    }

    pub async fn bind(&self) -> io::Result<TcpListener> {
        TcpListener::bind(&self.config.listen).await
    }

    /// Accepts connections until the listener fails.
    pub async fn run(self, listener: TcpListener) -> io::Result<()> {
        std::fs::create_dir_all(&self.config.log_dir)?;
        loop {
            let (stream, peer) = listener.accept().await?;
            let server = self.clone();
            tokio::spawn(async move {
                if let Err(e) = server.connection(stream, peer).await {
                    tracing::debug!(%peer, "connection ended: {e}");
                }
            });
        }
    }

    /// Finds or creates the session; errors are `(code, detail)`.
    fn session(&self, id: &SessionId, config: Option<SessionConfig>) -> Result<mpsc::UnboundedSender<Command>, (&'static str, String)> {
        let mut sessions = self.sessions.lock().expect("session registry");
        if let Some(tx) = sessions.get(id) {
            return Ok(tx.clone());
        }
        if !valid_session_id(id) {
            return Err(("BadConfig", "session ids use letters, digits, '-' and '_'".into()));
        }
        let config = config.unwrap_or_else(|| self.config.session.clone());
        if let Err(e) = config.validate() {
            return Err(("BadConfig", e.to_string()));
        }
        let path = self.config.log_dir.join(format!("{id}.log"));
        let sink = FileLog::create(&path)
            .map_err(|e| ("LogFailure", format!("{}: {e}", path.display())))?;
        let options = SessionOptions {
            max_in_flight: self.config.max_in_flight,
            max_participants: self.config.max_participants,
            ..SessionOptions::default()
        };
        let provider = provider_for(&config.provider);
        let session = Session::new(id.clone(), config, Box::new(sink), options)
            .map_err(|e| (e.code(), e.to_string()))?;
        let (tx, rx) = mpsc::unbounded_channel();
        let actor = Actor {
            session,
            provider,
            subscribers: BTreeMap::new(),
            commands: tx.clone(),
        };
        tokio::spawn(actor.run(rx));
        sessions.insert(id.clone(), tx.clone());
        tracing::info!(session = %id, "session created");
        Ok(tx)
    }

    async fn connection(&self, stream: TcpStream, peer: SocketAddr) -> io::Result<()> {
        let (mut sink, mut frames) = Framed::new(stream, codec()).split();
        let send = |m: &ServerMessage| -> io::Result<Bytes> {
            encode(m)
                .map(Bytes::from)
                .map_err(|e| io::Error::new(io::ErrorKind::InvalidData, e))
        };

        let Some(first) = frames.next().await else {
            return Ok(());
        };
        let (session_id, user_id, display_name, config) = match decode::<ClientMessage>(&first?) {
            Ok(ClientMessage::Join {
                session_id,
                user_id,
                display_name,
                config,
            }) => (session_id, user_id, display_name, config),
            Ok(_) => {
                sink.send(send(&ServerMessage::error("NotJoined", "the first message must be Join"))?)
                    .await?;
                return Ok(());
            }
            Err(e) => {
                sink.send(send(&ServerMessage::error("BadMessage", e.to_string()))?).await?;
                return Ok(());
            }
        };
        let commands = match self.session(&session_id, config) {
            Ok(tx) => tx,
            Err((code, detail)) => {
                sink.send(send(&ServerMessage::error(code, detail))?).await?;
                return Ok(());
            }
        };

        let conn = {
            let mut n = self.next_conn.lock().expect("connection counter");
            *n += 1;
            *n
        };
        let (outbox, mut inbox) = mpsc::unbounded_channel();
        let (reply, joined) = oneshot::channel();
        let _ = commands.send(Command::Join {
            conn,
            user_id,
            display_name,
            outbox: outbox.clone(),
            reply,
        });
        match joined.await {
            Ok(Ok(())) => {}
            Ok(Err(message)) => {
                sink.send(send(&message)?).await?;
                return Ok(());
            }
            Err(_) => return Ok(()),
        }
        tracing::debug!(%peer, session = %session_id, conn, "joined");

        let writer = tokio::spawn(async move {
            while let Some(message) = inbox.recv().await {
                let Ok(bytes) = encode(&message) else { continue };
                if sink.send(Bytes::from(bytes)).await.is_err() {
                    break;
                }
            }
        });

        while let Some(frame) = frames.next().await {
            let frame = match frame {
                Ok(f) => f,
                Err(_) => break,
            };
            match decode::<ClientMessage>(&frame) {
                Ok(message) => {
                    if commands.send(Command::Client { conn, message }).is_err() {
                        break;
                    }
                }
                Err(e) => {
                    let _ = outbox.send(ServerMessage::error("BadMessage", e.to_string()));
                }
            }
        }
        let _ = commands.send(Command::Leave { conn });
        drop(outbox);
        writer.abort();
        Ok(())
    }
}

/// Minimal protocol client, used by tests and examples.
pub struct Client {
    framed: Framed<TcpStream, LengthDelimitedCodec>,
}

impl Client {
    pub async fn connect(addr: SocketAddr) -> io::Result<Self> {
        Ok(Client {
            framed: Framed::new(TcpStream::connect(addr).await?, codec()),
        })
    }

    pub async fn send(&mut self, message: &ClientMessage) -> io::Result<()> {
        let bytes = encode(message).map_err(|e| io::Error::new(io::ErrorKind::InvalidData, e))?;
        self.framed.send(Bytes::from(bytes)).await
    }

    /// Next message, or `None` when the server closed the connection.
    pub async fn recv(&mut self) -> io::Result<Option<ServerMessage>> {
        match self.framed.next().await {
            None => Ok(None),
            Some(frame) => decode(&frame?)
                .map(Some)
                .map_err(|e| io::Error::new(io::ErrorKind::InvalidData, e)),
        }
    }
}
