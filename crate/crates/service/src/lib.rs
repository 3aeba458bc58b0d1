//! HTTP front end for one interactive teaching session: teach objects and
//! contexts, request fetches, move things around the simulated home,
//! advance the clock, and inspect memory.
//!
//! All state-changing requests are serialised through one lock and
//! recorded in an append-only log that can be replayed into a fresh session.

pub mod api;
pub mod session;

use std::net::SocketAddr;
use std::sync::{Arc, Mutex};

pub use api::router;
pub use session::{replay, LogEntry, Operation, Outcome, Session, SessionInit};

/// Serves the session on `addr` until ctrl-c.
pub async fn serve(addr: SocketAddr, init: SessionInit) -> std::io::Result<()> {
    let session = Session::new(init).map_err(|e| std::io::Error::new(std::io::ErrorKind::InvalidInput, e.to_string()))?;
    let app = router(Arc::new(Mutex::new(session)));
    let listener = tokio::net::TcpListener::bind(addr).await?;
    axum::serve(listener, app)
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await
}
