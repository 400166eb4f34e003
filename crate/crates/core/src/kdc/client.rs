use std::net::ToSocketAddrs;

use super::policy::Verdict;
use super::state::{token_bytes, ProvisionToken};
use super::wire::{LineConn, Request, Response};
use crate::encoding;
use crate::error::{Error, Result};
use crate::modmath::FieldParams;
use crate::simplex::{PublicPoint, SimplexMaterial};

/// Blocking client for the KDC wire protocol.
pub struct KdcClient {
    conn: LineConn,
}

fn missing(field: &str) -> Error {
    Error::Protocol(format!("response without {field}"))
}

impl KdcClient {
    pub fn connect(addr: impl ToSocketAddrs) -> Result<Self> {
        Ok(KdcClient {
            conn: LineConn::connect(addr)?,
        })
    }

    /// Sends one request and returns the raw response, failed or not.
    pub fn call(&mut self, req: &Request) -> Result<Response> {
        self.conn.send(req)?;
        self.conn.recv()
    }

    pub fn register(&mut self, user: &str) -> Result<(PublicPoint, ProvisionToken)> {
        let resp = self
            .call(&Request::Register { user: user.into() })?
            .into_result(user)?;
        let r = encoding::from_hex(resp.r.as_deref().ok_or_else(|| missing("r"))?)?;
        let token = token_bytes(resp.token.as_deref().ok_or_else(|| missing("token"))?)?;
        Ok((PublicPoint::new(user, r), ProvisionToken::new(user, token)))
    }

    pub fn directory(&mut self) -> Result<(FieldParams, Vec<PublicPoint>)> {
        let resp = self.call(&Request::Directory)?.into_result("")?;
        Ok((
            resp.params.ok_or_else(|| missing("params"))?,
            resp.users.ok_or_else(|| missing("users"))?,
        ))
    }

    pub fn lookup(&mut self, user: &str) -> Result<PublicPoint> {
        let (_, users) = self.directory()?;
        users
            .into_iter()
            .find(|p| p.user_id == user)
            .ok_or_else(|| Error::UnknownUser(user.into()))
    }

    /// Fetches and checks material. Material that fails the consistency
    /// check against the published parameters is rejected.
    pub fn material(&mut self, user: &str, token: &[u8]) -> Result<(FieldParams, SimplexMaterial)> {
        let (params, _) = self.directory()?;
        let resp = self
            .call(&Request::Material {
                user: user.into(),
                token: encoding::b64(token),
            })?
            .into_result(user)?;
        let mat = resp.material.ok_or_else(|| missing("material"))?;
        if mat.user_id() != user || !mat.is_consistent(&params) {
            return Err(Error::ConsistencyCheckFailed);
        }
        Ok((params, mat))
    }

    pub fn policy_set(
        &mut self,
        pairs: Vec<(String, String, Verdict)>,
        admin_token: &[u8],
    ) -> Result<()> {
        self.call(&Request::PolicySet {
            pairs,
            admin_token: encoding::b64(admin_token),
        })?
        .into_result("")?;
        Ok(())
    }

    pub fn policy_check(&mut self, sender: &str, receiver: &str) -> Result<Verdict> {
        let resp = self
            .call(&Request::PolicyCheck {
                sender: sender.into(),
                receiver: receiver.into(),
            })?
            .into_result(receiver)?;
        resp.verdict.ok_or_else(|| missing("verdict"))
    }
}
