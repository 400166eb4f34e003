use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::Path;

use num_bigint::BigUint;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};
use subtle::ConstantTimeEq;

use super::policy::{PolicyMatrix, Verdict};
use crate::encoding;
use crate::error::{Error, Result};
use crate::modmath::{gen_prime_with, FieldParams, PrimeSearch};
use crate::simplex::{
    issue_material, setup, MasterSecret, PointRegistry, PointRule, PublicPoint, SimplexMaterial,
};

const STATE_VERSION: u32 = 1;

/// Per-user provisioning secret, handed out once at registration.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ProvisionToken {
    pub user_id: String,
    secret: [u8; 32],
}

impl ProvisionToken {
    pub fn new(user_id: impl Into<String>, secret: [u8; 32]) -> Self {
        ProvisionToken {
            user_id: user_id.into(),
            secret,
        }
    }

    pub fn secret(&self) -> &[u8; 32] {
        &self.secret
    }

    pub fn to_b64(&self) -> String {
        encoding::b64(&self.secret)
    }

    /// Constant-time comparison against a presented token.
    pub fn matches(&self, candidate: &[u8]) -> bool {
        ct_eq(&self.secret, candidate)
    }
}

fn ct_eq(secret: &[u8; 32], candidate: &[u8]) -> bool {
    candidate.len() == secret.len() && bool::from(secret.as_slice().ct_eq(candidate))
}

#[derive(Clone, Debug)]
struct KdcState {
    params: FieldParams,
    master: MasterSecret,
    registry: PointRegistry,
    tokens: BTreeMap<String, [u8; 32]>,
    policy: PolicyMatrix,
    admin_token: [u8; 32],
    rng: ChaCha20Rng,
}

/// Transport-independent KDC: master secret, public directory, tokens and policy.
///
/// All randomness comes from one ChaCha20 stream whose position is persisted,
/// so a seeded deployment replays bit-for-bit.
#[derive(Clone, Debug, Default)]
pub struct Kdc {
    state: Option<KdcState>,
}

impl Kdc {
    pub fn uninitialized() -> Self {
        Kdc { state: None }
    }

    /// Fresh deployment: a `bits`-bit safe prime, a degree-`degree` master
    /// secret and an admin token.
    pub fn setup(bits: u64, degree: usize, seed: Option<u64>) -> Result<Self> {
        let mut rng = match seed {
            Some(s) => ChaCha20Rng::seed_from_u64(s),
            None => ChaCha20Rng::from_entropy(),
        };
        let params = gen_prime_with(bits, true, &mut rng, PrimeSearch::default())?;
        let master = setup(degree, &params, &mut rng)?;
        let rule = PointRule::default_for(&params);
        Ok(Kdc::from_master(master, rule, rng))
    }

    /// Deployment around an existing master secret (fixtures, migrations).
    pub fn with_master(master: MasterSecret, rule: PointRule, seed: u64) -> Self {
        Kdc::from_master(master, rule, ChaCha20Rng::seed_from_u64(seed))
    }

    fn from_master(master: MasterSecret, rule: PointRule, mut rng: ChaCha20Rng) -> Self {
        let admin_token = rng.gen();
        Kdc {
            state: Some(KdcState {
                params: master.params().clone(),
                registry: PointRegistry::new(rule),
                master,
                tokens: BTreeMap::new(),
                policy: PolicyMatrix::default(),
                admin_token,
                rng,
            }),
        }
    }

    fn state(&self) -> Result<&KdcState> {
        self.state.as_ref().ok_or(Error::ServerNotInitialized)
    }

    fn state_mut(&mut self) -> Result<&mut KdcState> {
        self.state.as_mut().ok_or(Error::ServerNotInitialized)
    }

    pub fn is_initialized(&self) -> bool {
        self.state.is_some()
    }

    pub fn params(&self) -> Result<&FieldParams> {
        Ok(&self.state()?.params)
    }

    pub fn master(&self) -> Result<&MasterSecret> {
        Ok(&self.state()?.master)
    }

    pub fn admin_token(&self) -> Result<&[u8; 32]> {
        Ok(&self.state()?.admin_token)
    }

    pub fn set_admin_token(&mut self, token: [u8; 32]) -> Result<()> {
        self.state_mut()?.admin_token = token;
        Ok(())
    }

    /// Assigns a point, publishes it and issues a provisioning token.
    pub fn register(&mut self, user_id: &str) -> Result<(PublicPoint, ProvisionToken)> {
        let st = self.state_mut()?;
        let pt = st.registry.assign(user_id, &st.params, &mut st.rng)?;
        Ok((pt, st.issue_token(user_id)))
    }

    /// Registers at a caller-chosen point; subject to the registry's rule.
    pub fn register_at(
        &mut self,
        user_id: &str,
        r: BigUint,
    ) -> Result<(PublicPoint, ProvisionToken)> {
        let st = self.state_mut()?;
        let pt = st.registry.insert_fixed(user_id, r, &st.params)?;
        Ok((pt, st.issue_token(user_id)))
    }

    /// Material for `user_id`, released only against the matching token.
    pub fn fetch_material(&self, user_id: &str, token: &[u8]) -> Result<SimplexMaterial> {
        let st = self.state()?;
        let Some(secret) = st.tokens.get(user_id) else {
            return Err(Error::UnknownUser(user_id.to_string()));
        };
        if !ct_eq(secret, token) {
            return Err(Error::AuthFailed);
        }
        let pt = st
            .registry
            .get(user_id)
            .ok_or_else(|| Error::UnknownUser(user_id.to_string()))?;
        issue_material(&st.master, pt)
    }

    pub fn directory(&self) -> Result<&[PublicPoint]> {
        Ok(self.state()?.registry.points())
    }

    pub fn lookup(&self, user_id: &str) -> Result<&PublicPoint> {
        self.state()?
            .registry
            .get(user_id)
            .ok_or_else(|| Error::UnknownUser(user_id.to_string()))
    }

    pub fn policy(&self) -> Result<&PolicyMatrix> {
        Ok(&self.state()?.policy)
    }

    /// Verdict for the stream `sender -> receiver`; both must be registered.
    pub fn check_policy(&self, sender: &str, receiver: &str) -> Result<Verdict> {
        self.lookup(sender)?;
        self.lookup(receiver)?;
        if sender == receiver {
            return Err(Error::SelfChannel);
        }
        Ok(self.state()?.policy.verdict(sender, receiver))
    }

    /// Applies a batch of directed rules after checking the admin token. The
    /// batch is validated first and applied all-or-nothing.
    pub fn set_policy(
        &mut self,
        pairs: &[(String, String, Verdict)],
        admin_token: &[u8],
    ) -> Result<()> {
        if !ct_eq(self.admin_token()?, admin_token) {
            return Err(Error::AuthFailed);
        }
        self.apply_policy(pairs)
    }

    /// Local (operator) policy edit, no token.
    pub fn apply_policy(&mut self, pairs: &[(String, String, Verdict)]) -> Result<()> {
        for (s, r, _) in pairs {
            self.lookup(s)?;
            self.lookup(r)?;
            if s == r {
                return Err(Error::SelfChannel);
            }
        }
        let st = self.state_mut()?;
        for (s, r, v) in pairs {
            st.policy.set(s, r, *v)?;
        }
        Ok(())
    }

    pub fn set_default_policy(&mut self, verdict: Verdict) -> Result<()> {
        self.state_mut()?.policy.set_default(verdict);
        Ok(())
    }

    pub fn to_json(&self) -> Result<String> {
        let st = self.state()?;
        let file = StateFile {
            version: STATE_VERSION,
            params: st.params.clone(),
            master: st.master.poly().coeffs().to_vec(),
            registry: st.registry.clone(),
            tokens: st
                .tokens
                .iter()
                .map(|(u, t)| (u.clone(), encoding::b64(t)))
                .collect(),
            policy: st.policy.clone(),
            admin_token: encoding::b64(&st.admin_token),
            rng: RngState {
                seed: hex::encode(st.rng.get_seed()),
                word_pos: st.rng.get_word_pos().to_string(),
            },
        };
        Ok(serde_json::to_string_pretty(&file)? + "\n")
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let file: StateFile = serde_json::from_str(s)?;
        if file.version != STATE_VERSION {
            return Err(Error::malformed(format!("state version {}", file.version)));
        }
        let master = MasterSecret::from_coeffs(file.master, &file.params)?;
        let tokens = file
            .tokens
            .into_iter()
            .map(|(u, t)| Ok((u, token_bytes(&t)?)))
            .collect::<Result<BTreeMap<_, _>>>()?;
        if let Some(orphan) = tokens.keys().find(|u| !file.registry.contains(u)) {
            return Err(Error::malformed(format!(
                "token for unregistered user {orphan:?}"
            )));
        }
        let seed: [u8; 32] = hex::decode(&file.rng.seed)
            .ok()
            .and_then(|v| v.try_into().ok())
            .ok_or_else(|| Error::malformed("rng seed"))?;
        let word_pos: u128 = file
            .rng
            .word_pos
            .parse()
            .map_err(|_| Error::malformed("rng word_pos"))?;
        let mut rng = ChaCha20Rng::from_seed(seed);
        rng.set_word_pos(word_pos);
        Ok(Kdc {
            state: Some(KdcState {
                params: file.params,
                master,
                registry: file.registry,
                tokens,
                policy: file.policy,
                admin_token: token_bytes(&file.admin_token)?,
                rng,
            }),
        })
    }

    /// Writes the state document with owner-only permissions.
    pub fn save(&self, path: &Path) -> Result<()> {
        write_private(path, self.to_json()?.as_bytes())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Kdc::from_json(&fs::read_to_string(path)?)
    }
}

impl KdcState {
    fn issue_token(&mut self, user_id: &str) -> ProvisionToken {
        let secret: [u8; 32] = self.rng.gen();
        self.tokens.insert(user_id.to_string(), secret);
        ProvisionToken {
            user_id: user_id.to_string(),
            secret,
        }
    }
}

pub fn token_bytes(b64: &str) -> Result<[u8; 32]> {
    encoding::from_b64(b64)?
        .try_into()
        .map_err(|_| Error::malformed("token must be 32 bytes"))
}

#[derive(Serialize, Deserialize)]
struct StateFile {
    version: u32,
    params: FieldParams,
    #[serde(with = "encoding::hex_vec")]
    master: Vec<BigUint>,
    registry: PointRegistry,
    tokens: BTreeMap<String, String>,
    policy: PolicyMatrix,
    admin_token: String,
    rng: RngState,
}

#[derive(Serialize, Deserialize)]
struct RngState {
    seed: String,
    word_pos: String,
}

/// Writes `bytes` to `path`, creating or truncating it with mode 0600 on unix.
pub fn write_private(path: &Path, bytes: &[u8]) -> Result<()> {
    let mut opts = fs::OpenOptions::new();
    opts.write(true).create(true).truncate(true);
    #[cfg(unix)]
    {
        use std::os::unix::fs::{OpenOptionsExt, PermissionsExt};
        opts.mode(0o600);
        let mut f = opts.open(path)?;
        f.set_permissions(fs::Permissions::from_mode(0o600))?;
        f.write_all(bytes)?;
        f.sync_all()?;
    }
    #[cfg(not(unix))]
    {
        let mut f = opts.open(path)?;
        f.write_all(bytes)?;
    }
    Ok(())
}
