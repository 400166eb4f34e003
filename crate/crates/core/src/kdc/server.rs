//! Threaded TCP front end for [`Kdc`].
//!
//! One thread per connection. Registrations and policy changes take the write
//! lock and are persisted before they become visible; lookups share the read
//! lock.

use std::io::{BufRead, BufReader, Write};
use std::net::{SocketAddr, TcpListener, TcpStream, ToSocketAddrs};
use std::path::PathBuf;
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::{Arc, Mutex, RwLock};
use std::thread::{self, JoinHandle};

use super::state::{token_bytes, Kdc};
use super::wire::{Request, Response};
use crate::encoding;
use crate::error::{Error, Result};

/// One request line and the response line written for it.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TranscriptEntry {
    pub peer: SocketAddr,
    pub request: String,
    pub response: String,
}

struct Shared {
    kdc: RwLock<Kdc>,
    state_path: Option<PathBuf>,
    transcript: Option<Mutex<Vec<TranscriptEntry>>>,
    shutdown: AtomicBool,
}

pub struct KdcServer {
    listener: TcpListener,
    shared: Arc<Shared>,
}

impl KdcServer {
    /// Binds `addr`. With a `state_path`, every accepted mutation is written
    /// there before the response goes out.
    pub fn bind(addr: impl ToSocketAddrs, kdc: Kdc, state_path: Option<PathBuf>) -> Result<Self> {
        Ok(KdcServer {
            listener: TcpListener::bind(addr)?,
            shared: Arc::new(Shared {
                kdc: RwLock::new(kdc),
                state_path,
                transcript: None,
                shutdown: AtomicBool::new(false),
            }),
        })
    }

    /// Records every request/response pair (test and audit use).
    pub fn with_transcript(mut self) -> Self {
        Arc::get_mut(&mut self.shared)
            .expect("server not yet shared")
            .transcript = Some(Mutex::new(Vec::new()));
        self
    }

    pub fn local_addr(&self) -> Result<SocketAddr> {
        Ok(self.listener.local_addr()?)
    }

    /// Accept loop; returns after [`ServerHandle::shutdown`].
    pub fn run(self) -> Result<()> {
        for conn in self.listener.incoming() {
            if self.shared.shutdown.load(Ordering::SeqCst) {
                break;
            }
            let Ok(stream) = conn else { continue };
            let shared = Arc::clone(&self.shared);
            thread::spawn(move || {
                if let Err(e) = serve_connection(&shared, stream) {
                    eprintln!("kdc: connection error: {e}");
                }
            });
        }
        Ok(())
    }

    pub fn spawn(self) -> Result<ServerHandle> {
        let addr = self.local_addr()?;
        let shared = Arc::clone(&self.shared);
        let join = thread::spawn(move || self.run());
        Ok(ServerHandle {
            addr,
            shared,
            join: Some(join),
        })
    }
}

pub struct ServerHandle {
    addr: SocketAddr,
    shared: Arc<Shared>,
    join: Option<JoinHandle<Result<()>>>,
}

impl ServerHandle {
    pub fn addr(&self) -> SocketAddr {
        self.addr
    }

    pub fn transcript(&self) -> Vec<TranscriptEntry> {
        self.shared
            .transcript
            .as_ref()
            .map(|t| t.lock().expect("transcript lock").clone())
            .unwrap_or_default()
    }

    /// Snapshot of the served state.
    pub fn kdc(&self) -> Kdc {
        self.shared.kdc.read().expect("kdc lock").clone()
    }

    pub fn shutdown(mut self) {
        self.stop();
    }

    fn stop(&mut self) {
        self.shared.shutdown.store(true, Ordering::SeqCst);
        // unblock accept()
        let _ = TcpStream::connect(self.addr);
        if let Some(j) = self.join.take() {
            let _ = j.join();
        }
    }
}

impl Drop for ServerHandle {
    fn drop(&mut self) {
        if self.join.is_some() {
            self.stop();
        }
    }
}

fn serve_connection(shared: &Shared, stream: TcpStream) -> Result<()> {
    let peer = stream.peer_addr()?;
    let mut writer = stream.try_clone()?;
    let reader = BufReader::new(stream);
    for line in reader.lines() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let response = match serde_json::from_str::<Request>(&line) {
            Ok(req) => handle(shared, &req),
            Err(e) => Response::err("error", &Error::Malformed(e.to_string())),
        };
        let mut out = serde_json::to_string(&response)?;
        if let Some(t) = &shared.transcript {
            t.lock().expect("transcript lock").push(TranscriptEntry {
                peer,
                request: line.clone(),
                response: out.clone(),
            });
        }
        out.push('\n');
        writer.write_all(out.as_bytes())?;
        writer.flush()?;
    }
    Ok(())
}

fn handle(shared: &Shared, req: &Request) -> Response {
    let kind = req.kind();
    let result = match req {
        Request::Register { user } => mutate(shared, |kdc| kdc.register(user)).map(|(pt, tok)| {
            let mut r = Response::ok(kind);
            r.user = Some(pt.user_id);
            r.r = Some(encoding::to_hex(&pt.r));
            r.token = Some(tok.to_b64());
            r
        }),
        Request::Directory => {
            let kdc = shared.kdc.read().expect("kdc lock");
            kdc.params().cloned().and_then(|params| {
                let mut r = Response::ok(kind);
                r.params = Some(params);
                r.users = Some(kdc.directory()?.to_vec());
                Ok(r)
            })
        }
        Request::Material { user, token } => {
            let kdc = shared.kdc.read().expect("kdc lock");
            encoding::from_b64(token)
                .map_err(|_| Error::AuthFailed)
                .and_then(|t| kdc.fetch_material(user, &t))
                .map(|m| {
                    let mut r = Response::ok(kind);
                    r.material = Some(m);
                    r
                })
        }
        Request::PolicySet { pairs, admin_token } => token_bytes(admin_token)
            .map_err(|_| Error::AuthFailed)
            .and_then(|t| mutate(shared, |kdc| kdc.set_policy(pairs, &t)))
            .map(|()| Response::ok(kind)),
        Request::PolicyCheck { sender, receiver } => {
            let kdc = shared.kdc.read().expect("kdc lock");
            kdc.check_policy(sender, receiver).map(|v| {
                let mut r = Response::ok(kind);
                r.sender = Some(sender.clone());
                r.receiver = Some(receiver.clone());
                r.verdict = Some(v);
                r
            })
        }
    };
    result.unwrap_or_else(|e| Response::err(kind, &e))
}

/// Applies `f` to a copy of the state, persists the copy, then publishes it.
fn mutate<T>(shared: &Shared, f: impl FnOnce(&mut Kdc) -> Result<T>) -> Result<T> {
    let mut guard = shared.kdc.write().expect("kdc lock");
    let mut next = guard.clone();
    let out = f(&mut next)?;
    if let Some(path) = &shared.state_path {
        next.save(path)?;
    }
    *guard = next;
    Ok(out)
}
