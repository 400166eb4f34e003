//! Newline-delimited JSON messages between clients and the KDC.

use std::io::{BufRead, BufReader, Write};
use std::net::{TcpStream, ToSocketAddrs};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use super::policy::Verdict;
use crate::error::Error;
use crate::modmath::FieldParams;
use crate::simplex::{PublicPoint, SimplexMaterial};

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Request {
    Register {
        user: String,
    },
    Directory,
    Material {
        user: String,
        token: String,
    },
    PolicySet {
        pairs: Vec<(String, String, Verdict)>,
        admin_token: String,
    },
    PolicyCheck {
        sender: String,
        receiver: String,
    },
}

impl Request {
    pub fn kind(&self) -> &'static str {
        match self {
            Request::Register { .. } => "register",
            Request::Directory => "directory",
            Request::Material { .. } => "material",
            Request::PolicySet { .. } => "policy_set",
            Request::PolicyCheck { .. } => "policy_check",
        }
    }
}

/// Response envelope. `type` mirrors the request; payload fields are present
/// only where the request kind calls for them.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Response {
    #[serde(rename = "type")]
    pub kind: String,
    pub ok: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub message: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub user: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub r: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub token: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub params: Option<FieldParams>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub users: Option<Vec<PublicPoint>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub material: Option<SimplexMaterial>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sender: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub receiver: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub verdict: Option<Verdict>,
}

impl Response {
    pub fn ok(kind: &str) -> Self {
        Response {
            kind: kind.to_string(),
            ok: true,
            ..Default::default()
        }
    }

    pub fn err(kind: &str, e: &Error) -> Self {
        Response {
            kind: kind.to_string(),
            ok: false,
            error: Some(e.code().to_string()),
            message: Some(e.to_string()),
            ..Default::default()
        }
    }

    /// Turns a failed response back into an [`Error`]. `subject` fills in the
    /// user id for the user-bearing variants.
    pub fn into_result(self, subject: &str) -> Result<Response, Error> {
        if self.ok {
            return Ok(self);
        }
        let code = self.error.unwrap_or_default();
        let message = self.message.unwrap_or_default();
        Err(Error::from_wire(&code, &message, subject))
    }
}

impl Error {
    /// Rebuilds an error from its wire code. Codes without a local
    /// counterpart become [`Error::Protocol`].
    pub fn from_wire(code: &str, message: &str, subject: &str) -> Error {
        match code {
            "DuplicateUser" => Error::DuplicateUser(subject.to_string()),
            "UnknownUser" => Error::UnknownUser(subject.to_string()),
            "AuthFailed" => Error::AuthFailed,
            "ServerNotInitialized" => Error::ServerNotInitialized,
            "RegistryFull" => Error::RegistryFull,
            "SelfChannel" => Error::SelfChannel,
            "PolicyDenied" => Error::PolicyDenied,
            "ConsistencyCheckFailed" => Error::ConsistencyCheckFailed,
            "TagMismatch" => Error::TagMismatch,
            "DirectionMismatch" => Error::DirectionMismatch,
            "ReplayDetected" => Error::ReplayDetected { last: 0, got: 0 },
            "Malformed" => Error::Malformed(message.to_string()),
            _ => Error::Protocol(format!("{code}: {message}")),
        }
    }
}

/// Peer-to-peer acknowledgement for a delivered envelope.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Ack {
    #[serde(rename = "type")]
    pub kind: String,
    pub ok: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seq: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

impl Ack {
    pub fn delivered(seq: u64) -> Self {
        Ack {
            kind: "ack".into(),
            ok: true,
            seq: Some(seq),
            error: None,
        }
    }

    pub fn refused(e: &Error) -> Self {
        Ack {
            kind: "ack".into(),
            ok: false,
            seq: None,
            error: Some(e.code().to_string()),
        }
    }
}

/// A TCP stream carrying one JSON object per line.
pub struct LineConn {
    reader: BufReader<TcpStream>,
    writer: TcpStream,
}

impl LineConn {
    pub fn connect(addr: impl ToSocketAddrs) -> Result<Self, Error> {
        LineConn::new(TcpStream::connect(addr)?)
    }

    pub fn new(stream: TcpStream) -> Result<Self, Error> {
        Ok(LineConn {
            reader: BufReader::new(stream.try_clone()?),
            writer: stream,
        })
    }

    pub fn stream(&self) -> &TcpStream {
        &self.writer
    }

    pub fn send<T: Serialize>(&mut self, msg: &T) -> Result<(), Error> {
        let mut line = serde_json::to_vec(msg)?;
        line.push(b'\n');
        self.writer.write_all(&line)?;
        self.writer.flush()?;
        Ok(())
    }

    pub fn recv<T: DeserializeOwned>(&mut self) -> Result<T, Error> {
        let mut line = String::new();
        if self.reader.read_line(&mut line)? == 0 {
            return Err(Error::Protocol("connection closed".into()));
        }
        Ok(serde_json::from_str(&line)?)
    }
}
