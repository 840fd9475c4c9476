//! Client for the hpcrag HTTP service.
//!
//! [`HpcragClient`] wraps every endpoint with typed requests and responses
//! from [`types`]; [`HpcragClient::query_stream`] decodes the server-sent
//! event stream into [`StreamEvent`]s.
//!
//! ```no_run
//! # async fn demo() -> Result<(), hpcrag_client::ClientError> {
//! use hpcrag_client::{HpcragClient, QueryRequest};
//! let client = HpcragClient::new("http://127.0.0.1:8000")?;
//! let reply = client.query(&QueryRequest::new("How do I request a GPU?")).await?;
//! for s in &reply.sources {
//!     println!("{}", s.citation());
//! }
//! # Ok(()) }
//! ```

pub mod cli;
mod client;
pub mod types;

pub use client::{parse_sse, ClientError, HpcragClient, QueryEventStream, Result, DEFAULT_BASE_URL};
pub use types::{
    BenchmarkStartRequest, BenchmarkStatus, CrawlRequest, FeedbackRequest, QueryRequest, QueryResponse, StreamEvent,
};
