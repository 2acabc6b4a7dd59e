//! TCP ingestion server.
//!
//! Collectors connect and stream [`crate::wire`] lines. Every valid `A`/`S`
//! message from every connection is pushed onto one ordered queue, numbered
//! in arrival order. A tick loop on the receiving side consumes the queue.

use std::io::{self, BufRead, BufReader, Read, Write};
use std::net::{SocketAddr, TcpListener, TcpStream, ToSocketAddrs};
use std::sync::atomic::{AtomicBool, AtomicU64, Ordering};
use std::sync::mpsc::{self, Receiver, Sender};
use std::sync::{Arc, Mutex};
use std::thread::{self, JoinHandle};

use thiserror::Error;

use crate::trace::TraceRecord;
use crate::wire::{ProtocolError, WireMessage, MAX_LINE_LEN, PROTOCOL_VERSION};

#[derive(Debug, Error)]
pub enum ServerError {
    #[error("cannot bind {addr}: {source}")]
    Bind {
        addr: String,
        #[source]
        source: io::Error,
    },
}

/// A record accepted by the server, numbered in queue order.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Ingested {
    pub seq: u64,
    pub client: u64,
    pub record: TraceRecord,
}

#[derive(Debug, Clone, PartialEq)]
pub enum ServerEvent {
    Record(Ingested),
    /// A client connection ended; `said_bye` is true if it sent `BYE`.
    Disconnected { client: u64, said_bye: bool },
}

/// What the server does with one received line.
#[derive(Debug, Clone, PartialEq)]
pub struct LineOutcome {
    pub reply: Option<String>,
    pub record: Option<TraceRecord>,
    pub close: bool,
}

/// Handles one line (without its newline). Never panics.
pub fn handle_line(line: &[u8]) -> LineOutcome {
    match WireMessage::parse_bytes(line) {
        Ok(WireMessage::Hello(_)) => LineOutcome {
            reply: Some(format!("OK {PROTOCOL_VERSION}")),
            record: None,
            close: false,
        },
        Ok(WireMessage::Bye) => LineOutcome {
            reply: Some("BYE".into()),
            record: None,
            close: true,
        },
        Ok(m) => LineOutcome {
            reply: None,
            record: m.record(),
            close: false,
        },
        Err(e) => error_outcome(&e),
    }
}

fn error_outcome(e: &ProtocolError) -> LineOutcome {
    LineOutcome {
        reply: Some(format!("ERR {}", e.reason())),
        record: None,
        close: false,
    }
}

/// Ordered sink shared by all connection threads.
#[derive(Clone)]
struct Queue {
    inner: Arc<Mutex<(u64, Sender<ServerEvent>)>>,
}

impl Queue {
    fn push(&self, client: u64, record: TraceRecord) -> bool {
        let mut guard = self.inner.lock().unwrap_or_else(|p| p.into_inner());
        let seq = guard.0;
        guard.0 += 1;
        guard
            .1
            .send(ServerEvent::Record(Ingested {
                seq,
                client,
                record,
            }))
            .is_ok()
    }

    fn disconnected(&self, client: u64, said_bye: bool) {
        let guard = self.inner.lock().unwrap_or_else(|p| p.into_inner());
        let _ = guard.1.send(ServerEvent::Disconnected { client, said_bye });
    }
}

/// Reads one line of at most `MAX_LINE_LEN` bytes. Longer lines are drained
/// and reported as `Err(LineTooLong)`. Returns `Ok(None)` at end of stream.
fn read_line<R: BufRead>(reader: &mut R, buf: &mut Vec<u8>) -> io::Result<Option<Result<(), ProtocolError>>> {
    buf.clear();
    let limit = (MAX_LINE_LEN + 2) as u64;
    let n = reader.by_ref().take(limit).read_until(b'\n', buf)?;
    if n == 0 {
        return Ok(None);
    }
    if buf.last() == Some(&b'\n') {
        buf.pop();
        if buf.last() == Some(&b'\r') {
            buf.pop();
        }
        if buf.len() > MAX_LINE_LEN {
            return Ok(Some(Err(ProtocolError::LineTooLong)));
        }
        return Ok(Some(Ok(())));
    }
    if (n as u64) < limit {
        // final line without a newline
        return Ok(Some(Ok(())));
    }
    // overlong: discard through the next newline
    let mut sink = Vec::new();
    loop {
        sink.clear();
        let m = reader.by_ref().take(64 * 1024).read_until(b'\n', &mut sink)?;
        if m == 0 || sink.last() == Some(&b'\n') {
            break;
        }
    }
    Ok(Some(Err(ProtocolError::LineTooLong)))
}

fn serve_connection(stream: TcpStream, client: u64, queue: Queue) {
    let mut writer = match stream.try_clone() {
        Ok(w) => w,
        Err(_) => return,
    };
    let mut reader = BufReader::new(stream);
    let mut buf = Vec::with_capacity(256);
    let mut said_bye = false;
    loop {
        let outcome = match read_line(&mut reader, &mut buf) {
            Ok(None) | Err(_) => break,
            Ok(Some(Err(e))) => error_outcome(&e),
            Ok(Some(Ok(()))) => handle_line(&buf),
        };
        if let Some(record) = outcome.record {
            if !queue.push(client, record) {
                break;
            }
        }
        if let Some(reply) = outcome.reply {
            if writer
                .write_all(reply.as_bytes())
                .and_then(|_| writer.write_all(b"\n"))
                .and_then(|_| writer.flush())
                .is_err()
            {
                break;
            }
        }
        if outcome.close {
            said_bye = true;
            break;
        }
    }
    queue.disconnected(client, said_bye);
}

/// Running server. Dropping the handle stops accepting new connections.
pub struct ServerHandle {
    addr: SocketAddr,
    stop: Arc<AtomicBool>,
    acceptor: Option<JoinHandle<()>>,
}

impl ServerHandle {
    pub fn local_addr(&self) -> SocketAddr {
        self.addr
    }

    pub fn shutdown(mut self) {
        self.stop_accepting();
    }

    fn stop_accepting(&mut self) {
        self.stop.store(true, Ordering::SeqCst);
        // unblock accept()
        let _ = TcpStream::connect(self.addr);
        if let Some(h) = self.acceptor.take() {
            let _ = h.join();
        }
    }
}

impl Drop for ServerHandle {
    fn drop(&mut self) {
        if self.acceptor.is_some() {
            self.stop_accepting();
        }
    }
}

/// Binds `addr` and starts accepting clients, one thread per connection.
/// Returns the handle and the ingestion queue.
pub fn serve(addr: impl ToSocketAddrs + std::fmt::Debug) -> Result<(ServerHandle, Receiver<ServerEvent>), ServerError> {
    let listener = TcpListener::bind(&addr).map_err(|source| ServerError::Bind {
        addr: format!("{addr:?}"),
        source,
    })?;
    let local = listener.local_addr().map_err(|source| ServerError::Bind {
        addr: format!("{addr:?}"),
        source,
    })?;
    let (tx, rx) = mpsc::channel();
    let queue = Queue {
        inner: Arc::new(Mutex::new((0, tx))),
    };
    let stop = Arc::new(AtomicBool::new(false));
    let stop_flag = Arc::clone(&stop);
    let next_client = AtomicU64::new(0);
    let acceptor = thread::spawn(move || {
        for stream in listener.incoming() {
            if stop_flag.load(Ordering::SeqCst) {
                break;
            }
            let Ok(stream) = stream else { continue };
            let client = next_client.fetch_add(1, Ordering::SeqCst);
            let queue = queue.clone();
            thread::spawn(move || serve_connection(stream, client, queue));
        }
    });
    Ok((
        ServerHandle {
            addr: local,
            stop,
            acceptor: Some(acceptor),
        },
        rx,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tissue::SignalSample;
    use std::io::Cursor;

    #[test]
    fn handshake_and_errors() {
        assert_eq!(handle_line(b"HELLO v1").reply.as_deref(), Some("OK v1"));
        let bad = handle_line(b"X 1 2");
        assert_eq!(bad.reply.as_deref(), Some("ERR unknown-tag"));
        assert!(!bad.close);
        let s = handle_line(b"S 5 10 2 0 0");
        assert_eq!(s.reply, None);
        assert_eq!(
            s.record,
            Some(TraceRecord::Signal(SignalSample::new(10.0, 2.0, 0.0, 0.0, 5)))
        );
        assert!(handle_line(b"BYE").close);
    }

    #[test]
    fn read_line_limits() {
        let mut data = Vec::new();
        data.extend_from_slice(b"A 1 2\r\n");
        data.extend(std::iter::repeat_n(b'x', MAX_LINE_LEN * 3));
        data.extend_from_slice(b"\nBYE");
        let mut r = Cursor::new(data);
        let mut buf = Vec::new();
        assert_eq!(read_line(&mut r, &mut buf).unwrap(), Some(Ok(())));
        assert_eq!(buf, b"A 1 2");
        assert_eq!(read_line(&mut r, &mut buf).unwrap(), Some(Err(ProtocolError::LineTooLong)));
        assert_eq!(read_line(&mut r, &mut buf).unwrap(), Some(Ok(())));
        assert_eq!(buf, b"BYE");
        assert_eq!(read_line(&mut r, &mut buf).unwrap(), None);
    }

    #[test]
    fn bind_failure_is_reported() {
        let (h, _rx) = serve("127.0.0.1:0").unwrap();
        let err = serve(h.local_addr()).err().expect("second bind must fail");
        assert!(matches!(err, ServerError::Bind { .. }));
    }
}
