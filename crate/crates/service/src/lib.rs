//! HTTP service over the story engine: dataset upload, story editing,
//! interpolation, fact validation and preview, recommendations and export.
//!
//! Datasets and stories live as files under the configured persistence root;
//! see [`store`]. Story mutations are serialized by compare-and-set on the
//! record version.

pub mod error;
mod routes;
pub mod store;

use std::sync::Arc;

use axum::Router;
use storyweave::config::EngineConfigFile;
use storyweave::embed::ReferenceEmbedder;
use thiserror::Error;

pub use error::ApiError;
pub use store::{InterpolationGuard, Store, StoreError, StoryRecord};

#[derive(Debug, Error)]
pub enum StartupError {
    #[error(transparent)]
    Config(#[from] storyweave::config::ConfigError),
    #[error(transparent)]
    Embedder(#[from] storyweave::EmbedError),
    #[error(transparent)]
    Store(#[from] StoreError),
}

/// Shared by every handler.
#[derive(Clone)]
pub struct AppState {
    pub store: Arc<Store>,
    pub config: Arc<EngineConfigFile>,
    pub embedder: Arc<ReferenceEmbedder>,
}

impl AppState {
    /// Validate `config` and open the store at its persistence root.
    pub fn new(config: EngineConfigFile) -> Result<Self, StartupError> {
        config.validate()?;
        let embedder = ReferenceEmbedder::new(config.embedder.clone())?;
        let store = Store::open(&config.server.persistence_root)?;
        Ok(AppState {
            store,
            config: Arc::new(config),
            embedder: Arc::new(embedder),
        })
    }
}

pub fn router(state: AppState) -> Router {
    routes::router(state)
}
