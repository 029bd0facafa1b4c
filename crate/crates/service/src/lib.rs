//! Study administration service: sessions, trial sequencing, breaks,
//! demographics and CSV export, persisted as per-session journals.

pub mod error;
pub mod http;
pub mod session;
pub mod store;

pub use error::ServiceError;
pub use http::{bind, router, serve, AppState, ServeConfig};
pub use session::{Ack, Demographics, NextPayload, Session, SessionPhase};
pub use store::{Export, ExportFilter, Store, StoreOptions};
