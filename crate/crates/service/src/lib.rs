//! HTTP annotation sessions. A human stands in for the simulated oracle: the
//! engine proposes up to `b_parallel` examples, the client labels all of them,
//! and the engine advances exactly as the simulator would.
//!
//! | method | path | body | response |
//! |---|---|---|---|
//! | POST | `/sessions` | [`api::CreateRequest`] | [`api::CreateResponse`] (201, or 200 for a repeated token) |
//! | GET | `/sessions/{id}/batch` | | [`api::BatchDoc`] |
//! | POST | `/sessions/{id}/labels` | [`api::LabelRequest`] | [`api::StateDoc`] |
//! | GET | `/sessions/{id}/state` | | [`api::StateDoc`] |
//! | GET | `/sessions/{id}/log` | | log CSV |
//!
//! Errors are `{"error": {"code", "message", "field"?}}` with codes from
//! [`ServiceError::code`].

pub mod api;
pub mod error;
pub mod routes;
pub mod session;
pub mod state;

use std::net::SocketAddr;

pub use error::{ServiceError, ServiceResult};
pub use routes::router;
pub use session::{JournalEntry, Session, Snapshot};
pub use state::AppState;

/// Serves until the process receives ctrl-c.
pub async fn serve(addr: SocketAddr, state: AppState) -> std::io::Result<()> {
    let listener = tokio::net::TcpListener::bind(addr).await?;
    tracing::info!(addr = %listener.local_addr()?, "listening");
    axum::serve(listener, router(state))
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await
}
