//! Socket server: one thread and one [`Session`] per connection, all sharing
//! the same immutable trace.

use std::io::{BufReader, BufWriter, Read, Write};
use std::net::{TcpListener, TcpStream};
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;
use std::thread;

use tracing::{debug, info, warn};
use vista_core::episode::{EpisodeConfig, SimContext};

use crate::protocol::{ProtocolError, WireMessage};
use crate::session::{Phase, Session};

/// Serves requests from `reader` until the peer closes the stream, sends
/// `close`, or breaks framing. Returns the finished session.
pub fn run_session(mut session: Session, reader: impl Read, writer: impl Write) -> Result<Session, ProtocolError> {
    let mut reader = BufReader::new(reader);
    let mut writer = BufWriter::new(writer);
    loop {
        let reply = match WireMessage::read_from(&mut reader) {
            Ok(None) => return Ok(session),
            Ok(Some(msg)) => session.handle(&msg),
            Err(e) if !e.is_fatal() => WireMessage::error("malformed", e.to_string()),
            Err(e) => return Err(e),
        };
        reply.write_to(&mut writer)?;
        if session.phase() == Phase::Closed {
            return Ok(session);
        }
    }
}

pub struct Server {
    listener: TcpListener,
    ctx: SimContext,
    defaults: Arc<EpisodeConfig>,
    next_id: Arc<AtomicU64>,
}

impl Server {
    pub fn new(listener: TcpListener, ctx: SimContext, defaults: EpisodeConfig) -> Self {
        Self { listener, ctx, defaults: Arc::new(defaults), next_id: Arc::new(AtomicU64::new(1)) }
    }

    pub fn local_addr(&self) -> std::io::Result<std::net::SocketAddr> {
        self.listener.local_addr()
    }

    /// Accepts connections forever, each on its own thread.
    pub fn run(&self) -> ! {
        loop {
            match self.listener.accept() {
                Ok((stream, peer)) => {
                    let id = self.next_id.fetch_add(1, Ordering::Relaxed);
                    info!(session = id, %peer, "connection");
                    let session = Session::new(id, self.ctx.clone(), (*self.defaults).clone());
                    thread::spawn(move || serve_stream(session, stream));
                }
                Err(e) => warn!("accept failed: {e}"),
            }
        }
    }

    /// Runs the accept loop on a background thread.
    pub fn spawn(self) -> thread::JoinHandle<()> {
        thread::spawn(move || self.run())
    }
}

fn serve_stream(session: Session, stream: TcpStream) {
    let id = session.id;
    let _ = stream.set_nodelay(true);
    let reader = match stream.try_clone() {
        Ok(r) => r,
        Err(e) => {
            warn!(session = id, "cannot clone stream: {e}");
            return;
        }
    };
    match run_session(session, reader, stream) {
        Ok(_) => debug!(session = id, "session ended"),
        Err(e) => warn!(session = id, "connection closed: {e}"),
    }
}
