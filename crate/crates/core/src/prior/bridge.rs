//! Reference bridge server: serves any [`LmPrior`] over the wire protocol
//! documented in [`super::remote`].
//!
//! Used to exercise the client and the conformance suite end to end, and to
//! share one trained n-gram model between processes.

use std::collections::HashSet;
use std::io::{self, BufRead, BufReader, Write};
use std::net::{SocketAddr, TcpListener, TcpStream};
use std::sync::Arc;
use std::thread::{self, JoinHandle};

use base64::engine::general_purpose::STANDARD as B64;
use base64::Engine as _;
use serde_json::{json, Value};

use super::{LmPrior, ALPHABET};

pub struct BridgeServer<P> {
    prior: P,
    model: String,
}

impl<P: LmPrior> BridgeServer<P> {
    pub fn new(prior: P) -> Self {
        let model = prior.describe();
        Self { prior, model }
    }

    /// Answers one request line. Returns `None` for blank lines.
    pub fn handle_line(&self, line: &str, seen_ids: &mut HashSet<u64>) -> Option<Value> {
        if line.trim().is_empty() {
            return None;
        }
        let req: Value = match serde_json::from_str(line) {
            Ok(v) => v,
            Err(e) => return Some(json!({"id": 0, "error": format!("bad json: {e}")})),
        };
        let op = req.get("op").and_then(Value::as_str).unwrap_or("");
        if op == "hello" {
            return Some(json!({"ok": true, "model": self.model, "alphabet": ALPHABET}));
        }
        let Some(id) = req.get("id").and_then(Value::as_u64) else {
            return Some(json!({"id": 0, "error": "missing id"}));
        };
        if !seen_ids.insert(id) {
            return Some(json!({"id": id, "error": format!("duplicate id {id}")}));
        }
        let field = |name: &str| -> Result<Vec<u8>, String> {
            let s = req.get(name).and_then(Value::as_str).ok_or(format!("missing {name}"))?;
            B64.decode(s.as_bytes()).map_err(|e| format!("{name}: {e}"))
        };
        let reply = match op {
            "score" => field("context_b64").and_then(|ctx| {
                let cont = field("continuation_b64")?;
                self.prior.score(&ctx, &cont).map_err(|e| e.to_string())
            }),
            other => Err(format!("unsupported op {other:?}")),
        };
        Some(match reply {
            Ok(lp) => json!({"id": id, "logprob": lp}),
            Err(e) => json!({"id": id, "error": e}),
        })
    }

    /// Serves one connection until end of input.
    pub fn serve_stream<R: BufRead, W: Write>(&self, reader: R, mut writer: W) -> io::Result<()> {
        let mut seen = HashSet::new();
        for line in reader.lines() {
            if let Some(reply) = self.handle_line(&line?, &mut seen) {
                writeln!(writer, "{reply}")?;
                writer.flush()?;
            }
        }
        Ok(())
    }
}

impl<P: LmPrior + 'static> BridgeServer<P> {
    /// Accepts connections forever, one thread each.
    pub fn serve_tcp(self: Arc<Self>, listener: TcpListener) -> io::Result<()> {
        for stream in listener.incoming() {
            let stream = stream?;
            let server = Arc::clone(&self);
            thread::spawn(move || {
                let _ = server.serve_connection(stream);
            });
        }
        Ok(())
    }

    fn serve_connection(&self, stream: TcpStream) -> io::Result<()> {
        stream.set_nodelay(true)?;
        let reader = BufReader::new(stream.try_clone()?);
        self.serve_stream(reader, stream)
    }

    /// Binds to `addr` and serves in a background thread.
    pub fn spawn(self, addr: &str) -> io::Result<(SocketAddr, JoinHandle<io::Result<()>>)> {
        let listener = TcpListener::bind(addr)?;
        let local = listener.local_addr()?;
        let server = Arc::new(self);
        let handle = thread::spawn(move || server.serve_tcp(listener));
        Ok((local, handle))
    }
}
