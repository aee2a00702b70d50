//! Labeling campaign server.
//!
//! Labelers register with a campaign, receive a bearer token, and are served
//! one question at a time: a yes/no question about one (object, class) pair,
//! or a full question (pick the class) for known objects and a configured
//! subset of unknown ones. Each (labeler, object) pair gets a random number
//! of distinct yes/no questions, drawn deterministically from the campaign
//! seed. Every state change is an event appended to a per-campaign JSON-lines
//! log, and the state is rebuilt by replaying that log on startup.

pub mod api;
pub mod error;
pub mod export;
pub mod state;
pub mod store;

use std::net::SocketAddr;
use std::path::PathBuf;
use std::sync::Arc;

pub use api::{router, QuestionView};
pub use error::{Error, Result};
pub use export::{export, ExportBundle};
pub use state::{Ack, Answer, BudgetSpec, CampaignSpec, CampaignState, Event, Mode, Ordering, Phase};
pub use store::{Next, Store};

/// Serves the API (and the UI bundle in `static_dir`) until Ctrl-C.
pub async fn serve(addr: SocketAddr, data_dir: PathBuf, static_dir: Option<PathBuf>) -> Result<()> {
    let store = Arc::new(Store::open(&data_dir)?);
    let listener = tokio::net::TcpListener::bind(addr).await?;
    eprintln!("listening on http://{}", listener.local_addr()?);
    axum::serve(listener, router(store, static_dir))
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await?;
    Ok(())
}
