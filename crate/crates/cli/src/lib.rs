//! Operational shell for the complete-the-look pipeline: service configuration, the
//! judgment store and the HTTP API.

pub mod config;
pub mod service;
pub mod store;

pub use config::{ConfigError, ServiceConfig};
pub use service::{load_snapshot, router, AppState, Health, ServiceError, Snapshot};
pub use store::{JudgmentStore, StoreError};
