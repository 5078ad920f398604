//! Command-line tools and a socket episode server for the simulator.

pub mod cli;
pub mod client;
pub mod protocol;
pub mod server;
pub mod session;

pub use client::{Client, ClientError, StepReply};
pub use protocol::{ProtocolError, WireMessage, MAX_FRAME, PROTOCOL_VERSION};
pub use server::{run_session, Server};
pub use session::{Phase, Session};
