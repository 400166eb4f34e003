//! One-directional encrypted streams keyed by directed pair keys.

use chacha20poly1305::aead::{AeadInOut, KeyInit};
use chacha20poly1305::{ChaCha20Poly1305, Key, Nonce, Tag};
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::policy::Verdict;
use crate::encoding;
use crate::error::{Error, Result};
use crate::modmath::FieldParams;
use crate::simplex::{derive_session_key, recv_key, send_key, PublicPoint, SimplexMaterial};

const AAD_LABEL: &[u8] = b"SBLOMv1/msg";
pub const MSG_TYPE: &str = "msg";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    Writer,
    Reader,
}

/// Live end of a simplex stream. The writer end seals, the reader end opens.
#[derive(Debug)]
pub struct StreamContext {
    role: Role,
    sender: PublicPoint,
    receiver: PublicPoint,
    key: [u8; 32],
    /// Writer: chosen at open. Reader: learned from the first accepted envelope.
    salt: Option<[u8; 4]>,
    /// Writer: last sequence number sent. Reader: last one accepted.
    seq: u64,
}

/// Opens one end of the stream between `mat`'s owner and `peer`.
///
/// A writer derives its key through `send_key`, a reader through `recv_key`;
/// both ends of the same stream hold the same 32-byte session key. A denied
/// verdict yields [`Error::PolicyDenied`] and no context.
pub fn open_stream<R: Rng + ?Sized>(
    role: Role,
    mat: &SimplexMaterial,
    peer: &PublicPoint,
    verdict: Verdict,
    params: &FieldParams,
    rng: &mut R,
) -> Result<StreamContext> {
    if mat.r() == &peer.r || mat.user_id() == peer.user_id {
        return Err(Error::SelfChannel);
    }
    if verdict == Verdict::Deny {
        return Err(Error::PolicyDenied);
    }
    let (dk, salt) = match role {
        Role::Writer => (send_key(mat, peer, params)?, Some(rng.gen())),
        Role::Reader => (recv_key(mat, peer, params)?, None),
    };
    Ok(StreamContext {
        role,
        key: derive_session_key(&dk, params),
        sender: dk.sender,
        receiver: dk.receiver,
        salt,
        seq: 0,
    })
}

/// Sealed message on the peer-to-peer leg.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Envelope {
    #[serde(rename = "type")]
    pub msg_type: String,
    pub from: String,
    pub to: String,
    pub seq: u64,
    #[serde(with = "b64_array")]
    pub nonce: [u8; 12],
    #[serde(with = "encoding::b64_bytes")]
    pub ct: Vec<u8>,
    #[serde(with = "b64_array")]
    pub tag: [u8; 16],
}

impl StreamContext {
    pub fn role(&self) -> Role {
        self.role
    }

    pub fn sender(&self) -> &PublicPoint {
        &self.sender
    }

    pub fn receiver(&self) -> &PublicPoint {
        &self.receiver
    }

    pub fn session_key(&self) -> &[u8; 32] {
        &self.key
    }

    fn cipher(&self) -> ChaCha20Poly1305 {
        ChaCha20Poly1305::new(&Key::from(self.key))
    }

    fn aad(from: &str, to: &str, seq: u64) -> Vec<u8> {
        let mut aad = Vec::with_capacity(AAD_LABEL.len() + from.len() + to.len() + 10);
        aad.extend_from_slice(AAD_LABEL);
        aad.push(0);
        aad.extend_from_slice(from.as_bytes());
        aad.push(0);
        aad.extend_from_slice(to.as_bytes());
        aad.push(0);
        aad.extend_from_slice(&seq.to_be_bytes());
        aad
    }

    pub fn seal(&mut self, plaintext: &[u8]) -> Result<Envelope> {
        let salt = match (self.role, self.salt) {
            (Role::Writer, Some(salt)) => salt,
            _ => return Err(Error::DirectionMismatch),
        };
        let seq = self.seq.checked_add(1).ok_or(Error::ReplayDetected {
            last: self.seq,
            got: self.seq,
        })?;
        let mut nonce = [0u8; 12];
        nonce[..4].copy_from_slice(&salt);
        nonce[4..].copy_from_slice(&seq.to_be_bytes());

        let (from, to) = (&self.sender.user_id, &self.receiver.user_id);
        let mut buf = plaintext.to_vec();
        let tag = self
            .cipher()
            .encrypt_inout_detached(
                &Nonce::from(nonce),
                &Self::aad(from, to, seq),
                buf.as_mut_slice().into(),
            )
            .map_err(|_| Error::Protocol("message too long".into()))?;
        self.seq = seq;
        Ok(Envelope {
            msg_type: MSG_TYPE.into(),
            from: from.clone(),
            to: to.clone(),
            seq,
            nonce,
            ct: buf,
            tag: tag.into(),
        })
    }

    /// Verifies and decrypts. No plaintext is released unless the tag checks.
    pub fn open(&mut self, env: &Envelope) -> Result<Vec<u8>> {
        if self.role != Role::Reader
            || env.from != self.sender.user_id
            || env.to != self.receiver.user_id
        {
            return Err(Error::DirectionMismatch);
        }
        if env.msg_type != MSG_TYPE {
            return Err(Error::Protocol(format!(
                "unexpected type {:?}",
                env.msg_type
            )));
        }
        if env.seq <= self.seq {
            return Err(Error::ReplayDetected {
                last: self.seq,
                got: env.seq,
            });
        }
        let salt: [u8; 4] = env.nonce[..4].try_into().expect("4-byte prefix");
        if env.nonce[4..] != env.seq.to_be_bytes() || self.salt.is_some_and(|s| s != salt) {
            return Err(Error::TagMismatch);
        }
        let mut buf = env.ct.clone();
        self.cipher()
            .decrypt_inout_detached(
                &Nonce::from(env.nonce),
                &Self::aad(&env.from, &env.to, env.seq),
                buf.as_mut_slice().into(),
                &Tag::from(env.tag),
            )
            .map_err(|_| Error::TagMismatch)?;
        self.salt = Some(salt);
        self.seq = env.seq;
        Ok(buf)
    }
}

mod b64_array {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer, const N: usize>(v: &[u8; N], s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&crate::encoding::b64(v))
    }

    pub fn deserialize<'de, D: Deserializer<'de>, const N: usize>(
        d: D,
    ) -> Result<[u8; N], D::Error> {
        let s = String::deserialize(d)?;
        let bytes = crate::encoding::from_b64(&s).map_err(serde::de::Error::custom)?;
        bytes
            .try_into()
            .map_err(|_| serde::de::Error::custom(format!("expected {N} bytes")))
    }
}
