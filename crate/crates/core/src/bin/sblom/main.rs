//! `sblom` command-line tool. Structured results go to stdout as one JSON
//! object; diagnostics go to stderr.

mod classic_state;

use std::fs;
use std::io::Write;
use std::net::TcpListener;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use num_bigint::BigUint;
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use serde::de::DeserializeOwned;
use serde_json::{json, Map, Value};

use sblom::attacks::{
    self, collude_classic, collude_simplex_probe, dl_bruteforce, recover_coefficients,
};
use sblom::classic::{classic_key, ClassicShare};
use sblom::encoding::{self, from_hex, to_hex};
use sblom::kdc::peer::presented_key;
use sblom::kdc::state::{token_bytes, write_private};
use sblom::kdc::wire::LineConn;
use sblom::kdc::{Kdc, KdcClient, KdcServer, Peer, Role, Verdict};
use sblom::modmath::{gen_prime, FieldParams};
use sblom::simplex::{derive_session_key, recv_key, send_key, PublicPoint, SimplexMaterial};
use sblom::{Error, Result};

use classic_state::ClassicState;

#[derive(Parser)]
#[command(
    name = "sblom",
    version,
    about = "Blom key pre-distribution with directed channel keys"
)]
struct Cli {
    #[command(subcommand)]
    cmd: Command,
}

#[derive(Args)]
struct StateFile {
    /// KDC state file.
    #[arg(long, env = "SBLOM_STATE")]
    state: PathBuf,
}

/// Where field parameters come from: a state file or an explicit prime.
#[derive(Args)]
struct ParamsSource {
    /// State file holding the field parameters.
    #[arg(long, env = "SBLOM_STATE")]
    state: Option<PathBuf>,
    /// Field prime in hex; takes precedence over --state.
    #[arg(long)]
    p: Option<String>,
}

#[derive(Clone, Copy, ValueEnum)]
enum Dir {
    Write,
    Read,
}

#[derive(Clone, Copy, ValueEnum)]
enum VerdictArg {
    Allow,
    Deny,
}

impl From<VerdictArg> for Verdict {
    fn from(v: VerdictArg) -> Self {
        match v {
            VerdictArg::Allow => Verdict::Allow,
            VerdictArg::Deny => Verdict::Deny,
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Generate a safe prime and master secret and write a fresh state file.
    Setup {
        #[arg(long)]
        bits: u64,
        #[arg(long)]
        degree: usize,
        #[arg(long)]
        seed: Option<u64>,
        #[command(flatten)]
        state: StateFile,
    },
    /// Register a user: assigns a public point and a provisioning token.
    Register {
        #[arg(long)]
        user: String,
        #[command(flatten)]
        state: StateFile,
    },
    /// Write a user's key material to a file readable only by its owner.
    Issue {
        #[arg(long)]
        user: String,
        #[command(flatten)]
        state: StateFile,
        #[arg(long)]
        out: PathBuf,
    },
    /// Derive the directed key towards (write) or from (read) a peer.
    Key {
        #[arg(long)]
        material: PathBuf,
        /// Peer's public point, hex.
        #[arg(long)]
        peer_r: String,
        #[arg(long, value_enum)]
        dir: Dir,
        /// Peer's user id; looked up in the state file when omitted.
        #[arg(long)]
        peer: Option<String>,
        #[command(flatten)]
        params: ParamsSource,
    },
    /// Classic baseline: parameters and symmetric master polynomial.
    ClassicSetup {
        #[arg(long)]
        bits: u64,
        #[arg(long)]
        degree: usize,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        state: PathBuf,
    },
    ClassicRegister {
        #[arg(long)]
        user: String,
        #[arg(long)]
        state: PathBuf,
    },
    ClassicIssue {
        #[arg(long)]
        user: String,
        #[arg(long)]
        state: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Classic baseline: symmetric pair key from a share and a peer point.
    ClassicKey {
        #[arg(long)]
        share: PathBuf,
        #[arg(long)]
        peer_r: String,
        #[command(flatten)]
        params: ParamsSource,
    },
    /// Run the KDC.
    Serve {
        #[arg(long, default_value = "127.0.0.1:7878")]
        addr: String,
        #[arg(long, env = "SBLOM_STATE")]
        state: PathBuf,
    },
    /// Seal one message to a peer listening with `recv`.
    Send {
        /// Peer's listening address.
        #[arg(long)]
        addr: String,
        #[arg(long, default_value = "127.0.0.1:7878")]
        kdc: String,
        #[arg(long)]
        material: PathBuf,
        #[arg(long)]
        peer: String,
        #[arg(long)]
        message: String,
    },
    /// Accept one message from a peer.
    Recv {
        /// Address to listen on.
        #[arg(long)]
        addr: String,
        #[arg(long, default_value = "127.0.0.1:7878")]
        kdc: String,
        #[arg(long)]
        material: PathBuf,
        #[arg(long)]
        peer: String,
    },
    /// Inspect or edit the directed channel policy.
    Policy {
        /// Talk to a running KDC instead of editing the state file.
        #[arg(long, global = true)]
        kdc: Option<String>,
        #[arg(long, global = true, env = "SBLOM_STATE")]
        state: Option<PathBuf>,
        #[arg(long, global = true, env = "SBLOM_ADMIN_TOKEN", hide_env_values = true)]
        admin_token: Option<String>,
        #[command(subcommand)]
        action: PolicyCmd,
    },
    /// Toy-scale attacks.
    Attack {
        #[command(subcommand)]
        kind: AttackCmd,
    },
}

#[derive(Subcommand)]
enum PolicyCmd {
    Set {
        #[arg(long)]
        sender: String,
        #[arg(long)]
        receiver: String,
        #[arg(long, value_enum)]
        verdict: VerdictArg,
    },
    Check {
        #[arg(long)]
        sender: String,
        #[arg(long)]
        receiver: String,
    },
    /// Replace the default rule and clear all exceptions (state file only).
    Default {
        #[arg(long, value_enum)]
        verdict: VerdictArg,
    },
}

#[derive(Subcommand)]
enum AttackCmd {
    /// Discrete log by brute force: either `--base/--target` or every
    /// coefficient of a material file.
    Dl {
        #[arg(long, conflicts_with_all = ["base", "target"])]
        material: Option<PathBuf>,
        #[arg(long, requires = "target")]
        base: Option<String>,
        #[arg(long, requires = "base")]
        target: Option<String>,
        #[command(flatten)]
        params: ParamsSource,
    },
    /// Rebuild the classic master from share files.
    ColludeClassic {
        #[arg(long = "share", required = true)]
        shares: Vec<PathBuf>,
        #[arg(long)]
        degree: usize,
        #[command(flatten)]
        params: ParamsSource,
    },
    /// Interpolate the simplex exponent polynomial from material files, or
    /// run `--trials` random probes over a fresh `--bits` safe prime.
    ColludeSimplex {
        #[arg(long = "material")]
        materials: Vec<PathBuf>,
        #[arg(long)]
        degree: usize,
        #[arg(long, requires = "bits")]
        trials: Option<usize>,
        #[arg(long)]
        bits: Option<u64>,
        #[arg(long)]
        seed: Option<u64>,
        #[command(flatten)]
        params: ParamsSource,
    },
}

/// An error plus any fields to report next to its name.
struct Failure {
    error: Error,
    detail: Map<String, Value>,
}

impl From<Error> for Failure {
    fn from(error: Error) -> Self {
        Failure {
            error,
            detail: Map::new(),
        }
    }
}

type Outcome = std::result::Result<Value, Failure>;

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli.cmd) {
        Ok(mut v) => {
            if let Some(obj) = v.as_object_mut() {
                obj.insert("ok".into(), Value::Bool(true));
            }
            emit(&v);
            ExitCode::SUCCESS
        }
        Err(f) => {
            eprintln!("sblom: {}", f.error);
            let mut obj = f.detail;
            obj.insert("ok".into(), Value::Bool(false));
            obj.insert("error".into(), f.error.code().into());
            emit(&Value::Object(obj));
            ExitCode::from(3)
        }
    }
}

fn emit(v: &Value) {
    let mut out = std::io::stdout().lock();
    let _ = writeln!(out, "{v}");
    let _ = out.flush();
}

fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    Ok(serde_json::from_str(&fs::read_to_string(path)?)?)
}

fn write_json(path: &Path, v: &impl serde::Serialize) -> Result<()> {
    let mut bytes = serde_json::to_vec_pretty(v)?;
    bytes.push(b'\n');
    write_private(path, &bytes)
}

impl ParamsSource {
    fn load(&self) -> Result<FieldParams> {
        if let Some(p) = &self.p {
            let p = from_hex(p)?;
            return FieldParams::new(p.clone(), true).or_else(|_| FieldParams::new(p, false));
        }
        let Some(path) = &self.state else {
            return Err(Error::InvalidParams("need --state or --p".into()));
        };
        let doc: Value = read_json(path)?;
        let params = doc
            .get("params")
            .cloned()
            .ok_or_else(|| Error::Malformed("state file without params".into()))?;
        Ok(serde_json::from_value(params)?)
    }
}

fn point_json(p: &PublicPoint) -> Value {
    json!({ "user": p.user_id, "r": to_hex(&p.r) })
}

fn run(cmd: Command) -> Outcome {
    match cmd {
        Command::Setup {
            bits,
            degree,
            seed,
            state,
        } => {
            let kdc = Kdc::setup(bits, degree, seed)?;
            kdc.save(&state.state)?;
            let params = kdc.params()?;
            Ok(json!({
                "p": to_hex(params.p()),
                "bits": params.bit_length(),
                "degree": degree,
                "admin_token": encoding::b64(kdc.admin_token()?),
            }))
        }
        Command::Register { user, state } => {
            let mut kdc = Kdc::load(&state.state)?;
            let (pt, token) = kdc.register(&user)?;
            kdc.save(&state.state)?;
            Ok(json!({ "user": pt.user_id, "r": to_hex(&pt.r), "token": token.to_b64() }))
        }
        Command::Issue { user, state, out } => {
            let kdc = Kdc::load(&state.state)?;
            let pt = kdc.lookup(&user)?.clone();
            let mat = sblom::simplex::issue_material(kdc.master()?, &pt)?;
            write_json(&out, &mat)?;
            Ok(json!({ "user": user, "r": to_hex(&pt.r), "out": out }))
        }
        Command::Key {
            material,
            peer_r,
            dir,
            peer,
            params,
        } => key(&material, &peer_r, dir, peer, &params),
        Command::ClassicSetup {
            bits,
            degree,
            seed,
            state,
        } => {
            let st = ClassicState::setup(bits, degree, seed)?;
            st.save(&state)?;
            Ok(
                json!({ "p": to_hex(st.params().p()), "bits": st.params().bit_length(), "degree": st.degree() }),
            )
        }
        Command::ClassicRegister { user, state } => {
            let mut st = ClassicState::load(&state)?;
            let pt = st.register(&user)?;
            st.save(&state)?;
            Ok(point_json(&pt))
        }
        Command::ClassicIssue { user, state, out } => {
            let st = ClassicState::load(&state)?;
            let share = st.share(&user)?;
            write_json(&out, &share)?;
            Ok(json!({ "user": user, "r": to_hex(share.owner_point()), "out": out }))
        }
        Command::ClassicKey {
            share,
            peer_r,
            params,
        } => {
            let params = params.load()?;
            let share: ClassicShare = read_json(&share)?;
            let k = classic_key(&share, &from_hex(&peer_r)?, &params)?;
            Ok(json!({ "k": k.to_hex() }))
        }
        Command::Serve { addr, state } => serve(&addr, state),
        Command::Send {
            addr,
            kdc,
            material,
            peer,
            message,
        } => send(&addr, &kdc, &material, &peer, &message),
        Command::Recv {
            addr,
            kdc,
            material,
            peer,
        } => recv(&addr, &kdc, &material, &peer),
        Command::Policy {
            kdc,
            state,
            admin_token,
            action,
        } => policy(kdc, state, admin_token, action),
        Command::Attack { kind } => attack(kind),
    }
}

fn key(
    material: &Path,
    peer_r: &str,
    dir: Dir,
    peer: Option<String>,
    src: &ParamsSource,
) -> Outcome {
    let params = src.load()?;
    let mat: SimplexMaterial = read_json(material)?;
    let r = from_hex(peer_r)?;
    let user = match (peer, &src.state) {
        (Some(id), _) => id,
        (None, Some(path)) if src.p.is_none() => Kdc::load(path)?
            .directory()?
            .iter()
            .find(|p| p.r == r)
            .map(|p| p.user_id.clone())
            .ok_or_else(|| Error::UnknownUser(to_hex(&r)))?,
        _ => "peer".to_string(),
    };
    let peer = PublicPoint::new(user, r);
    let dk = match dir {
        Dir::Write => send_key(&mat, &peer, &params)?,
        Dir::Read => recv_key(&mat, &peer, &params)?,
    };
    Ok(json!({
        "sender": point_json(&dk.sender),
        "receiver": point_json(&dk.receiver),
        "k": dk.k.to_hex(),
        "session_key": hex::encode(derive_session_key(&dk, &params)),
    }))
}

fn serve(addr: &str, state: PathBuf) -> Outcome {
    let mut kdc = if state.exists() {
        Kdc::load(&state)?
    } else {
        eprintln!(
            "sblom: no state at {}, serving uninitialized",
            state.display()
        );
        Kdc::uninitialized()
    };
    if let Ok(tok) = std::env::var("SBLOM_ADMIN_TOKEN") {
        if kdc.is_initialized() {
            kdc.set_admin_token(token_bytes(&tok)?)?;
        }
    }
    let server = KdcServer::bind(addr, kdc, Some(state))?;
    emit(&json!({ "ok": true, "listening": server.local_addr()?.to_string() }));
    server.run()?;
    Ok(json!({}))
}

/// Material, field parameters and the peer's directory entry.
fn peer_setup(
    kdc: &str,
    material: &Path,
    peer: &str,
) -> Result<(KdcClient, FieldParams, SimplexMaterial, PublicPoint)> {
    let mat: SimplexMaterial = read_json(material)?;
    let mut client = KdcClient::connect(kdc)?;
    let (params, users) = client.directory()?;
    let peer = users
        .into_iter()
        .find(|p| p.user_id == peer)
        .ok_or_else(|| Error::UnknownUser(peer.to_string()))?;
    if !mat.is_consistent(&params) {
        return Err(Error::ConsistencyCheckFailed);
    }
    Ok((client, params, mat, peer))
}

fn denied(role: Role, mat: &SimplexMaterial, peer: &PublicPoint, params: &FieldParams) -> Failure {
    let mut detail = Map::new();
    if let Ok(dk) = presented_key(role, mat, peer, Verdict::Deny, params) {
        detail.insert("sender".into(), dk.sender.user_id.into());
        detail.insert("receiver".into(), dk.receiver.user_id.into());
        detail.insert("key".into(), dk.k.to_hex().into());
    }
    Failure {
        error: Error::PolicyDenied,
        detail,
    }
}

fn send(addr: &str, kdc: &str, material: &Path, peer: &str, message: &str) -> Outcome {
    let (mut client, params, mat, to) = peer_setup(kdc, material, peer)?;
    let verdict = client.policy_check(mat.user_id(), &to.user_id)?;
    if verdict == Verdict::Deny {
        return Err(denied(Role::Writer, &mat, &to, &params));
    }
    let me = Peer::new(mat, params);
    let mut conn = LineConn::connect(addr)?;
    let seq = me.send_to(&mut conn, &to, verdict, message.as_bytes())?;
    Ok(json!({ "from": me.user_id(), "to": to.user_id, "seq": seq }))
}

fn recv(addr: &str, kdc: &str, material: &Path, peer: &str) -> Outcome {
    let (mut client, params, mat, from) = peer_setup(kdc, material, peer)?;
    let verdict = client.policy_check(&from.user_id, mat.user_id())?;
    let listener = TcpListener::bind(addr).map_err(Error::from)?;
    eprintln!(
        "sblom: listening on {}",
        listener.local_addr().map_err(Error::from)?
    );
    let (stream, _) = listener.accept().map_err(Error::from)?;
    let mut conn = LineConn::new(stream)?;
    let me = Peer::new(mat.clone(), params.clone());
    match me.receive_from(&mut conn, &from, verdict) {
        Ok(msg) => Ok(json!({
            "from": from.user_id,
            "to": me.user_id(),
            "message": String::from_utf8_lossy(&msg),
        })),
        Err(Error::PolicyDenied) => Err(denied(Role::Reader, &mat, &from, &params)),
        Err(e) => Err(e.into()),
    }
}

fn policy(
    kdc: Option<String>,
    state: Option<PathBuf>,
    admin: Option<String>,
    action: PolicyCmd,
) -> Outcome {
    if let Some(addr) = kdc {
        let mut client = KdcClient::connect(addr)?;
        return match action {
            PolicyCmd::Set {
                sender,
                receiver,
                verdict,
            } => {
                let admin = admin.ok_or(Error::AuthFailed)?;
                let token = token_bytes(&admin).map_err(|_| Error::AuthFailed)?;
                let v = Verdict::from(verdict);
                client.policy_set(vec![(sender.clone(), receiver.clone(), v)], &token)?;
                Ok(json!({ "sender": sender, "receiver": receiver, "verdict": v }))
            }
            PolicyCmd::Check { sender, receiver } => {
                let v = client.policy_check(&sender, &receiver)?;
                Ok(json!({ "sender": sender, "receiver": receiver, "verdict": v }))
            }
            PolicyCmd::Default { .. } => {
                Err(Error::InvalidParams("policy default edits the state file only".into()).into())
            }
        };
    }
    let path = state.ok_or_else(|| Error::InvalidParams("need --kdc or --state".into()))?;
    let mut kdc = Kdc::load(&path)?;
    match action {
        PolicyCmd::Set {
            sender,
            receiver,
            verdict,
        } => {
            let v = Verdict::from(verdict);
            kdc.apply_policy(&[(sender.clone(), receiver.clone(), v)])?;
            kdc.save(&path)?;
            Ok(json!({ "sender": sender, "receiver": receiver, "verdict": v }))
        }
        PolicyCmd::Check { sender, receiver } => {
            let v = kdc.check_policy(&sender, &receiver)?;
            Ok(json!({ "sender": sender, "receiver": receiver, "verdict": v }))
        }
        PolicyCmd::Default { verdict } => {
            let v = Verdict::from(verdict);
            kdc.set_default_policy(v)?;
            kdc.save(&path)?;
            Ok(json!({ "default": v }))
        }
    }
}

fn attack(kind: AttackCmd) -> Outcome {
    match kind {
        AttackCmd::Dl {
            material,
            base,
            target,
            params,
        } => {
            let params = params.load()?;
            if let Some(path) = material {
                let mat: SimplexMaterial = read_json(&path)?;
                return Ok(
                    serde_json::to_value(recover_coefficients(&mat, &params, None)?)
                        .map_err(Error::from)?,
                );
            }
            let (Some(base), Some(target)) = (base, target) else {
                return Err(
                    Error::InvalidParams("need --material or --base with --target".into()).into(),
                );
            };
            let b = params.base(from_hex(&base)?);
            let t = params.base(from_hex(&target)?);
            let e = dl_bruteforce(&t, &b, &params, None)?;
            Ok(json!({ "base": base, "target": target, "exponent": e }))
        }
        AttackCmd::ColludeClassic {
            shares,
            degree,
            params,
        } => {
            let params = params.load()?;
            let shares = shares
                .iter()
                .map(|p| read_json::<ClassicShare>(p))
                .collect::<Result<Vec<_>>>()?;
            let f = collude_classic(&shares, degree, &params)?;
            Ok(json!({ "degree": degree, "master": f }))
        }
        AttackCmd::ColludeSimplex {
            materials,
            degree,
            trials,
            bits,
            seed,
            params,
        } => {
            if let (Some(trials), Some(bits)) = (trials, bits) {
                let fp = gen_prime(bits, true, seed)?;
                let mut rng = match seed {
                    Some(s) => ChaCha20Rng::seed_from_u64(s.wrapping_add(1)),
                    None => ChaCha20Rng::from_entropy(),
                };
                let summary = attacks::probe_trials(trials, degree, &fp, &mut rng)?;
                let mut v = serde_json::to_value(summary).map_err(Error::from)?;
                v["p"] = to_hex(fp.p()).into();
                return Ok(v);
            }
            let params = params.load()?;
            let hv: Vec<(BigUint, BigUint)> = materials
                .iter()
                .map(|p| {
                    let m: SimplexMaterial = read_json(p)?;
                    Ok((m.r().clone(), m.h_i().value().clone()))
                })
                .collect::<Result<_>>()?;
            let report = collude_simplex_probe(&hv, degree, &params)?;
            Ok(serde_json::to_value(report).map_err(Error::from)?)
        }
    }
}
