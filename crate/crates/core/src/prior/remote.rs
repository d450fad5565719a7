//! Client for a language model served over the bridge protocol.
//!
//! Messages are newline-delimited JSON. Byte strings travel as standard
//! base64 so arbitrary byte values survive text framing:
//!
//! ```text
//! -> {"op":"hello"}
//! <- {"ok":true,"model":"...","alphabet":256}
//! -> {"id":1,"op":"score","context_b64":"...","continuation_b64":"..."}
//! <- {"id":1,"logprob":-3.2}          or {"id":1,"error":"..."}
//! -> {"id":2,"op":"correct","text_b64":"..."}
//! <- {"id":2,"text_b64":"..."}        or {"id":2,"error":"..."}
//! ```
//!
//! Endpoints are `tcp://host:port` (or bare `host:port`) and
//! `exec:<command line>`, the latter speaking the protocol over the child's
//! standard streams. One request is in flight per connection; concurrent
//! callers queue on an internal lock. After a transport or framing error the
//! connection is dropped and the next call reconnects.

use std::io::{BufRead, BufReader, ErrorKind, Write};
use std::net::{TcpStream, ToSocketAddrs};
use std::process::{Child, Command, Stdio};
use std::sync::Mutex;
use std::time::Duration;

use base64::engine::general_purpose::STANDARD as B64;
use base64::Engine as _;
use serde::{Deserialize, Serialize};

use super::{LmPrior, PriorError, ALPHABET};

/// Environment variable naming the default bridge endpoint.
pub const ENDPOINT_ENV: &str = "LMVITERBI_ENDPOINT";

pub const DEFAULT_TIMEOUT: Duration = Duration::from_secs(30);

#[derive(Debug, Serialize)]
struct HelloRequest {
    op: &'static str,
}

#[derive(Debug, Serialize)]
struct ScoreRequest<'a> {
    id: u64,
    op: &'static str,
    context_b64: &'a str,
    continuation_b64: &'a str,
}

#[derive(Debug, Serialize)]
struct CorrectRequest<'a> {
    id: u64,
    op: &'static str,
    text_b64: &'a str,
}

#[derive(Debug, Deserialize)]
struct HelloReply {
    ok: bool,
    #[serde(default)]
    model: String,
    alphabet: usize,
}

#[derive(Debug, Deserialize)]
struct Reply {
    id: u64,
    logprob: Option<f64>,
    text_b64: Option<String>,
    error: Option<String>,
}

/// Where the bridge lives.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Endpoint {
    Tcp(String),
    Exec(Vec<String>),
}

impl Endpoint {
    pub fn parse(spec: &str) -> Result<Self, PriorError> {
        let spec = spec.trim();
        if let Some(cmd) = spec.strip_prefix("exec:") {
            let argv: Vec<String> = cmd.split_whitespace().map(str::to_owned).collect();
            if argv.is_empty() {
                return Err(PriorError::Connection("empty exec endpoint".into()));
            }
            return Ok(Endpoint::Exec(argv));
        }
        let addr = spec.strip_prefix("tcp://").unwrap_or(spec);
        if addr.is_empty() || !addr.contains(':') {
            return Err(PriorError::Connection(format!("bad endpoint {spec:?}")));
        }
        Ok(Endpoint::Tcp(addr.to_owned()))
    }
}

struct Connection {
    reader: Box<dyn BufRead + Send>,
    writer: Box<dyn Write + Send>,
    child: Option<Child>,
    model: String,
}

impl Drop for Connection {
    fn drop(&mut self) {
        if let Some(child) = &mut self.child {
            let _ = child.kill();
            let _ = child.wait();
        }
    }
}

impl Connection {
    fn open(endpoint: &Endpoint, timeout: Duration) -> Result<Self, PriorError> {
        let mut conn = match endpoint {
            Endpoint::Tcp(addr) => {
                let sock = addr
                    .to_socket_addrs()
                    .map_err(|e| PriorError::Connection(format!("{addr}: {e}")))?
                    .next()
                    .ok_or_else(|| PriorError::Connection(format!("{addr}: no address")))?;
                let stream = TcpStream::connect_timeout(&sock, timeout)
                    .map_err(|e| PriorError::Connection(format!("{addr}: {e}")))?;
                stream.set_read_timeout(Some(timeout))?;
                stream.set_write_timeout(Some(timeout))?;
                stream.set_nodelay(true)?;
                let reader = BufReader::new(stream.try_clone()?);
                Connection {
                    reader: Box::new(reader),
                    writer: Box::new(stream),
                    child: None,
                    model: String::new(),
                }
            }
            Endpoint::Exec(argv) => {
                let mut child = Command::new(&argv[0])
                    .args(&argv[1..])
                    .stdin(Stdio::piped())
                    .stdout(Stdio::piped())
                    .spawn()
                    .map_err(|e| PriorError::Connection(format!("{}: {e}", argv[0])))?;
                let stdin = child.stdin.take().expect("piped stdin");
                let stdout = child.stdout.take().expect("piped stdout");
                Connection {
                    reader: Box::new(BufReader::new(stdout)),
                    writer: Box::new(stdin),
                    child: Some(child),
                    model: String::new(),
                }
            }
        };
        let line = conn.round_trip(&HelloRequest { op: "hello" }, timeout)?;
        let hello: HelloReply = serde_json::from_str(&line)
            .map_err(|e| PriorError::Protocol(format!("handshake reply {line:?}: {e}")))?;
        if !hello.ok {
            return Err(PriorError::Protocol("handshake refused".into()));
        }
        if hello.alphabet != ALPHABET {
            return Err(PriorError::Protocol(format!(
                "bridge alphabet {} is not {ALPHABET}",
                hello.alphabet
            )));
        }
        conn.model = hello.model;
        Ok(conn)
    }

    fn round_trip<Q: Serialize>(&mut self, req: &Q, timeout: Duration) -> Result<String, PriorError> {
        let mut msg = serde_json::to_string(req).expect("request serializes");
        msg.push('\n');
        self.writer.write_all(msg.as_bytes()).map_err(|e| io_error(e, timeout))?;
        self.writer.flush().map_err(|e| io_error(e, timeout))?;
        let mut line = String::new();
        let n = self.reader.read_line(&mut line).map_err(|e| io_error(e, timeout))?;
        if n == 0 {
            return Err(PriorError::Connection("bridge closed the connection".into()));
        }
        Ok(line)
    }
}

fn io_error(e: std::io::Error, timeout: Duration) -> PriorError {
    match e.kind() {
        ErrorKind::TimedOut | ErrorKind::WouldBlock => PriorError::Timeout(timeout),
        ErrorKind::InvalidData => PriorError::Protocol(e.to_string()),
        _ => PriorError::Connection(e.to_string()),
    }
}

struct ClientState {
    conn: Option<Connection>,
    next_id: u64,
}

/// Language-model prior delegated to a bridge process.
pub struct RemotePrior {
    endpoint: Endpoint,
    timeout: Duration,
    state: Mutex<ClientState>,
}

impl std::fmt::Debug for RemotePrior {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("RemotePrior").field("endpoint", &self.endpoint).finish()
    }
}

impl RemotePrior {
    /// Connects and performs the handshake.
    pub fn connect(endpoint: &str) -> Result<Self, PriorError> {
        Self::connect_with_timeout(endpoint, DEFAULT_TIMEOUT)
    }

    pub fn connect_with_timeout(endpoint: &str, timeout: Duration) -> Result<Self, PriorError> {
        let endpoint = Endpoint::parse(endpoint)?;
        let conn = Connection::open(&endpoint, timeout)?;
        Ok(Self { endpoint, timeout, state: Mutex::new(ClientState { conn: Some(conn), next_id: 1 }) })
    }

    /// Name the bridge reported at handshake.
    pub fn model_name(&self) -> String {
        let state = self.state.lock().unwrap_or_else(|e| e.into_inner());
        state.conn.as_ref().map(|c| c.model.clone()).unwrap_or_default()
    }

    fn request<F, R>(&self, build: F) -> Result<Reply, PriorError>
    where
        F: FnOnce(u64) -> R,
        R: Serialize,
    {
        let mut state = self.state.lock().unwrap_or_else(|e| e.into_inner());
        let id = state.next_id;
        state.next_id += 1;
        if state.conn.is_none() {
            state.conn = Some(Connection::open(&self.endpoint, self.timeout)?);
        }
        let conn = state.conn.as_mut().expect("connection opened above");
        let result = conn.round_trip(&build(id), self.timeout).and_then(|line| {
            let reply: Reply = serde_json::from_str(&line)
                .map_err(|e| PriorError::Protocol(format!("{line:?}: {e}")))?;
            if reply.id != id {
                return Err(PriorError::Protocol(format!(
                    "reply id {} does not match request id {id}",
                    reply.id
                )));
            }
            Ok(reply)
        });
        match result {
            Ok(reply) => Ok(reply),
            Err(e) => {
                // Framing is unknown after a failed exchange.
                state.conn = None;
                Err(e)
            }
        }
    }

    /// Sends text to the bridge's correction model.
    pub fn correct(&self, text: &[u8]) -> Result<Vec<u8>, PriorError> {
        let encoded = B64.encode(text);
        let reply = self.request(|id| CorrectRequest { id, op: "correct", text_b64: &encoded })?;
        if let Some(err) = reply.error {
            return Err(PriorError::Remote(err));
        }
        let text = reply
            .text_b64
            .ok_or_else(|| PriorError::Protocol("correct reply without text_b64".into()))?;
        B64.decode(text.as_bytes())
            .map_err(|e| PriorError::Protocol(format!("bad base64 in reply: {e}")))
    }
}

impl LmPrior for RemotePrior {
    fn score(&self, context: &[u8], continuation: &[u8]) -> Result<f64, PriorError> {
        let ctx = B64.encode(context);
        let cont = B64.encode(continuation);
        let reply = self.request(|id| ScoreRequest {
            id,
            op: "score",
            context_b64: &ctx,
            continuation_b64: &cont,
        })?;
        if let Some(err) = reply.error {
            return Err(PriorError::Remote(err));
        }
        let lp = reply
            .logprob
            .ok_or_else(|| PriorError::Protocol("score reply without logprob".into()))?;
        if lp.is_nan() || lp > 1e-9 {
            return Err(PriorError::Protocol(format!("invalid log-probability {lp}")));
        }
        Ok(lp.min(0.0))
    }

    fn describe(&self) -> String {
        format!("remote({})", self.model_name())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn endpoint_parsing() {
        assert_eq!(Endpoint::parse("tcp://127.0.0.1:9").unwrap(), Endpoint::Tcp("127.0.0.1:9".into()));
        assert_eq!(Endpoint::parse("localhost:80").unwrap(), Endpoint::Tcp("localhost:80".into()));
        assert_eq!(
            Endpoint::parse("exec:python3 bridge.py --stdio").unwrap(),
            Endpoint::Exec(vec!["python3".into(), "bridge.py".into(), "--stdio".into()])
        );
        assert!(Endpoint::parse("exec:").is_err());
        assert!(Endpoint::parse("nowhere").is_err());
    }

    #[test]
    fn request_wire_format() {
        let req = ScoreRequest { id: 7, op: "score", context_b64: "SGk=", continuation_b64: "" };
        assert_eq!(
            serde_json::to_string(&req).unwrap(),
            r#"{"id":7,"op":"score","context_b64":"SGk=","continuation_b64":""}"#
        );
        assert_eq!(serde_json::to_string(&HelloRequest { op: "hello" }).unwrap(), r#"{"op":"hello"}"#);
    }

    #[test]
    fn refused_connection_is_connection_error() {
        let listener = std::net::TcpListener::bind("127.0.0.1:0").unwrap();
        let addr = listener.local_addr().unwrap();
        drop(listener);
        let err = RemotePrior::connect(&format!("tcp://{addr}")).unwrap_err();
        assert!(matches!(err, PriorError::Connection(_)), "{err:?}");
    }
}
