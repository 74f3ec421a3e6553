//! WebSocket session server.
//!
//! Each session is owned by one task that applies joins, frames, controls
//! and window ticks in a single order. Connections only decode and forward.

pub mod client;
pub mod live;
pub mod server;
pub mod session;

use thiserror::Error;

use spotlight_core::WireError;

pub use client::Client;
pub use live::{replay_live, stream_frames, stream_in_process, LiveOutcome, Speed};
pub use server::{Server, ServerConfig, ServerHandle, SessionRecord};
pub use session::{ConnId, Outbound, SessionCore, SessionStats};

#[derive(Debug, Error)]
pub enum ServerError {
    #[error("websocket: {0}")]
    Ws(#[from] tokio_tungstenite::tungstenite::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Wire(#[from] WireError),
    #[error("server replied {code}: {detail}")]
    Rejected { code: String, detail: String },
    #[error("unexpected `{0}` message")]
    Unexpected(String),
    #[error("connection closed")]
    Closed,
    #[error("invalid speed `{0}`, expected real, max or xN")]
    Speed(String),
}
