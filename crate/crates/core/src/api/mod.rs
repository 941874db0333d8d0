//! Device REST API: routes generated from the domain model, request
//! handling with validation against the model's constraints, and an HTTP
//! server for fleets.
//!
//! Responses carry status 200 or 503 with a body
//! `{"status", "response_time_ms", "data" | "error"}`. Unmapped routes are
//! an error distinct from 503 and surface as 404 over HTTP.

mod handler;
mod mapping;
mod server;

pub(crate) use handler::apply;
pub use handler::{
    handle, Method, RequestRecord, ResponseRecord, Twin, NOT_FOUND, OK, UNAVAILABLE,
};
pub use mapping::{
    generate_routes, generate_routes_with, ApiMapping, ResolvedRoute, RouteEntry, RouteKind,
    DEFAULT_VENDOR_PREFIX, DT_PREFIX, ELEMENT,
};
pub use server::{
    forward_to_device, serve, Backend, HttpClient, ServerHandle, ServerOptions, REQUEST_ID_HEADER,
    SENT_AT_HEADER,
};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ApiError {
    #[error("serial number must not be empty")]
    EmptySerial,
    #[error("no route matches `{0}`")]
    RouteNotFound(String),
    #[error("unsupported method `{0}`")]
    UnsupportedMethod(String),
    #[error("serial `{0}` is served twice")]
    DuplicateSerial(String),
    #[error("cannot bind: {0}")]
    BindFailure(String),
    #[error("device unreachable: {0}")]
    DeviceUnreachable(String),
}

#[cfg(test)]
mod tests;
