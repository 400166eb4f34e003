//! Peer side of a simplex exchange: one sealed envelope out, one ack back.

use std::sync::{Arc, Mutex};

use rand::rngs::OsRng;

use super::policy::Verdict;
use super::stream::{open_stream, Envelope, Role, StreamContext};
use super::wire::{Ack, LineConn};
use crate::error::{Error, Result};
use crate::modmath::FieldParams;
use crate::simplex::{recv_key, send_key, DirectedKey, PublicPoint, SimplexMaterial};

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum AuditEvent {
    Opened {
        role: Role,
        sender: String,
        receiver: String,
    },
    Denied {
        sender: String,
        receiver: String,
    },
}

/// Shared record of every stream a peer opened or was refused.
#[derive(Clone, Debug, Default)]
pub struct AuditLog(Arc<Mutex<Vec<AuditEvent>>>);

impl AuditLog {
    pub fn push(&self, e: AuditEvent) {
        self.0.lock().expect("audit lock").push(e);
    }

    pub fn events(&self) -> Vec<AuditEvent> {
        self.0.lock().expect("audit lock").clone()
    }

    /// True if some context exists for `sender -> receiver`.
    pub fn opened(&self, sender: &str, receiver: &str) -> bool {
        self.events().iter().any(|e| {
            matches!(e, AuditEvent::Opened { sender: s, receiver: r, .. } if s == sender && r == receiver)
        })
    }
}

/// The pair key as the policy layer presents it: the real directed key for an
/// allowed channel, the zero residue for a denied one.
pub fn presented_key(
    role: Role,
    mat: &SimplexMaterial,
    peer: &PublicPoint,
    verdict: Verdict,
    params: &FieldParams,
) -> Result<DirectedKey> {
    let dk = match role {
        Role::Writer => send_key(mat, peer, params)?,
        Role::Reader => recv_key(mat, peer, params)?,
    };
    Ok(match verdict {
        Verdict::Allow => dk,
        Verdict::Deny => DirectedKey {
            k: params.base(0u32),
            ..dk
        },
    })
}

pub struct Peer {
    material: SimplexMaterial,
    params: FieldParams,
    audit: AuditLog,
}

impl Peer {
    pub fn new(material: SimplexMaterial, params: FieldParams) -> Self {
        Peer {
            material,
            params,
            audit: AuditLog::default(),
        }
    }

    pub fn with_audit(mut self, audit: AuditLog) -> Self {
        self.audit = audit;
        self
    }

    pub fn user_id(&self) -> &str {
        self.material.user_id()
    }

    pub fn material(&self) -> &SimplexMaterial {
        &self.material
    }

    pub fn audit(&self) -> &AuditLog {
        &self.audit
    }

    /// Opens a stream end, recording the outcome. No context is built for a
    /// denied pair.
    pub fn open(&self, role: Role, peer: &PublicPoint, verdict: Verdict) -> Result<StreamContext> {
        let (sender, receiver) = match role {
            Role::Writer => (self.user_id(), peer.user_id.as_str()),
            Role::Reader => (peer.user_id.as_str(), self.user_id()),
        };
        match open_stream(
            role,
            &self.material,
            peer,
            verdict,
            &self.params,
            &mut OsRng,
        ) {
            Ok(ctx) => {
                self.audit.push(AuditEvent::Opened {
                    role,
                    sender: sender.into(),
                    receiver: receiver.into(),
                });
                Ok(ctx)
            }
            Err(e) => {
                if matches!(e, Error::PolicyDenied) {
                    self.audit.push(AuditEvent::Denied {
                        sender: sender.into(),
                        receiver: receiver.into(),
                    });
                }
                Err(e)
            }
        }
    }

    /// Seals `msg` for `to` and waits for the receiver's ack.
    pub fn send_to(
        &self,
        conn: &mut LineConn,
        to: &PublicPoint,
        verdict: Verdict,
        msg: &[u8],
    ) -> Result<u64> {
        let mut ctx = self.open(Role::Writer, to, verdict)?;
        send_on(conn, &mut ctx, msg)
    }

    /// Reads one envelope from `from`. The receiver applies its own verdict,
    /// so an envelope on a denied channel is refused without being decrypted.
    pub fn receive_from(
        &self,
        conn: &mut LineConn,
        from: &PublicPoint,
        verdict: Verdict,
    ) -> Result<Vec<u8>> {
        let env: Envelope = conn.recv()?;
        let result = self
            .open(Role::Reader, from, verdict)
            .and_then(|mut ctx| ctx.open(&env));
        match &result {
            Ok(_) => conn.send(&Ack::delivered(env.seq))?,
            Err(e) => conn.send(&Ack::refused(e))?,
        }
        result
    }
}

/// Sends one envelope on an open writer context and waits for the ack.
pub fn send_on(conn: &mut LineConn, ctx: &mut StreamContext, msg: &[u8]) -> Result<u64> {
    let env = ctx.seal(msg)?;
    conn.send(&env)?;
    let ack: Ack = conn.recv()?;
    if ack.ok {
        Ok(env.seq)
    } else {
        let code = ack.error.unwrap_or_default();
        Err(Error::from_wire(&code, "refused by receiver", &env.to))
    }
}
