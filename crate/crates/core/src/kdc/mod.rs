//! Key distribution center, channel policy and simplex message streams.

pub mod client;
pub mod peer;
pub mod policy;
pub mod server;
pub mod state;
pub mod stream;
pub mod wire;

pub use client::KdcClient;
pub use peer::{AuditEvent, AuditLog, Peer};
pub use policy::{Access, PolicyMatrix, Verdict};
pub use server::{KdcServer, ServerHandle, TranscriptEntry};
pub use state::{Kdc, ProvisionToken};
pub use stream::{open_stream, Envelope, Role, StreamContext};
pub use wire::{Ack, Request, Response};
