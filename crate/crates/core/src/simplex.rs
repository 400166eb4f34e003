//! Directed (simplex) key pre-distribution.
//!
//! The KDC holds a secret polynomial `h` over `Z_{p-1}`. User `i` with public
//! point `r_i` receives the material `(h_i, b_0, ..., b_m)` where
//! `h_i = h(r_i)` and `b_k = r_i^{a_k} mod p`. The key for the stream
//! `sender -> receiver` is `r_receiver^{h(r_sender)} mod p`:
//!
//! * the sender computes it directly from its scalar: `r_receiver^{h_sender}`;
//! * the receiver computes it from its b-vector:
//!   `prod_k b_k^{z_k}` with `z_k = r_sender^k mod (p-1)`.
//!
//! Both reach the same residue, while `K(i -> j)` and `K(j -> i)` differ.

use std::collections::{BTreeMap, BTreeSet};

use num_bigint::{BigUint, RandBigInt};
use num_traits::{One, ToPrimitive, Zero};
use rand::Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::encoding;
use crate::error::{Error, Result};
use crate::modmath::{mod_pow, mod_pow_exp, BaseElem, ExpElem, FieldParams, Poly};

/// Domain separation prefix for session key derivation.
pub const SESSION_KEY_LABEL: &[u8] = b"SBLOMv1";

/// Below this modulus, free points are enumerated rather than rejection-sampled.
const ENUMERATION_LIMIT: u64 = 1 << 16;
const MAX_POINT_DRAWS: usize = 10_000;

/// The KDC master secret `h(x) = a_0 + a_1 x + ... + a_m x^m` over `Z_{p-1}`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct MasterSecret {
    h: Poly,
    params: FieldParams,
}

impl MasterSecret {
    /// Injects explicit coefficients (lowest degree first). The last one is the
    /// leading coefficient and must be nonzero mod `p - 1`.
    pub fn from_coeffs(coeffs: Vec<BigUint>, params: &FieldParams) -> Result<Self> {
        let len = coeffs.len();
        let h = Poly::new(coeffs, params.exp_modulus().clone());
        if len == 0 || h.coeffs().len() != len {
            return Err(Error::InvalidDegree(
                "leading coefficient must be nonzero mod p-1".into(),
            ));
        }
        Ok(MasterSecret {
            h,
            params: params.clone(),
        })
    }

    pub fn degree(&self) -> usize {
        self.h.coeffs().len() - 1
    }

    pub fn poly(&self) -> &Poly {
        &self.h
    }

    pub fn coeffs(&self) -> Vec<ExpElem> {
        self.h
            .coeffs()
            .iter()
            .map(|a| self.params.exp(a.clone()))
            .collect()
    }

    pub fn params(&self) -> &FieldParams {
        &self.params
    }

    /// `h(r)` with `r` coerced into the exponent ring.
    pub fn eval_at_point(&self, r: &BigUint) -> ExpElem {
        let x = self.params.point_as_exp(r);
        self.params.exp(self.h.eval(x.value()))
    }
}

/// Draws `h` with uniform coefficients in `Z_{p-1}` and a nonzero leading one.
pub fn setup<R: Rng + ?Sized>(m: usize, params: &FieldParams, rng: &mut R) -> Result<MasterSecret> {
    if m < 1 {
        return Err(Error::InvalidDegree("simplex master needs m >= 1".into()));
    }
    let n = params.exp_modulus();
    let mut coeffs: Vec<BigUint> = (0..m).map(|_| rng.gen_biguint_below(n)).collect();
    coeffs.push(rng.gen_biguint_range(&BigUint::one(), n));
    MasterSecret::from_coeffs(coeffs, params)
}

/// A user's published identifier-number.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct PublicPoint {
    #[serde(rename = "user")]
    pub user_id: String,
    #[serde(with = "encoding::hex_num")]
    pub r: BigUint,
}

impl PublicPoint {
    pub fn new(user_id: impl Into<String>, r: impl Into<BigUint>) -> Self {
        PublicPoint {
            user_id: user_id.into(),
            r: r.into(),
        }
    }
}

/// Which points the registry may hand out.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PointRule {
    /// Any `r` in `[2, p - 2]`.
    Any,
    /// Quadratic residues in `[2, p - 2]`; over a safe prime these have order `q`.
    QuadraticResidue,
}

impl PointRule {
    pub fn default_for(params: &FieldParams) -> Self {
        if params.is_safe_prime() {
            PointRule::QuadraticResidue
        } else {
            PointRule::Any
        }
    }
}

/// Append-only directory of public points. One namespace per deployment.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(from = "RawRegistry", into = "RawRegistry")]
pub struct PointRegistry {
    rule: PointRule,
    points: Vec<PublicPoint>,
    by_user: BTreeMap<String, usize>,
    used: BTreeSet<BigUint>,
}

#[derive(Serialize, Deserialize)]
struct RawRegistry {
    rule: PointRule,
    points: Vec<PublicPoint>,
}

impl From<RawRegistry> for PointRegistry {
    fn from(raw: RawRegistry) -> Self {
        let mut reg = PointRegistry::new(raw.rule);
        for pt in raw.points {
            reg.push(pt);
        }
        reg
    }
}

impl From<PointRegistry> for RawRegistry {
    fn from(reg: PointRegistry) -> Self {
        RawRegistry {
            rule: reg.rule,
            points: reg.points,
        }
    }
}

impl PointRegistry {
    pub fn new(rule: PointRule) -> Self {
        PointRegistry {
            rule,
            points: Vec::new(),
            by_user: BTreeMap::new(),
            used: BTreeSet::new(),
        }
    }

    pub fn rule(&self) -> PointRule {
        self.rule
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Registered points in registration order.
    pub fn points(&self) -> &[PublicPoint] {
        &self.points
    }

    pub fn get(&self, user_id: &str) -> Option<&PublicPoint> {
        self.by_user.get(user_id).map(|&i| &self.points[i])
    }

    pub fn contains(&self, user_id: &str) -> bool {
        self.by_user.contains_key(user_id)
    }

    fn push(&mut self, pt: PublicPoint) {
        self.by_user.insert(pt.user_id.clone(), self.points.len());
        self.used.insert(pt.r.clone());
        self.points.push(pt);
    }

    fn admissible(&self, r: &BigUint, params: &FieldParams) -> Result<()> {
        if !params.point_in_range(r) {
            return Err(Error::PointOutOfRange(r.clone()));
        }
        if self.rule == PointRule::QuadraticResidue && !params.is_quadratic_residue(r) {
            return Err(Error::PointNotResidue(r.clone()));
        }
        Ok(())
    }

    /// Number of admissible points under the registry's rule.
    pub fn capacity(&self, params: &FieldParams) -> BigUint {
        let p = params.p();
        match self.rule {
            PointRule::Any => p - 3u32,
            PointRule::QuadraticResidue => {
                // residues in [1, p-1], minus 1 itself, minus p-1 when -1 is a residue
                let mut n = (p - 1u32) >> 1u32;
                n -= 1u32;
                if params.is_quadratic_residue(&(p - 1u32)) {
                    n -= 1u32;
                }
                n
            }
        }
    }

    /// Registers `user_id` at a fresh random point.
    pub fn assign<R: Rng + ?Sized>(
        &mut self,
        user_id: &str,
        params: &FieldParams,
        rng: &mut R,
    ) -> Result<PublicPoint> {
        if self.contains(user_id) {
            return Err(Error::DuplicateUser(user_id.to_string()));
        }
        if BigUint::from(self.used.len()) >= self.capacity(params) {
            return Err(Error::RegistryFull);
        }
        let r = match params.p().to_u64().filter(|&p| p <= ENUMERATION_LIMIT) {
            Some(p) => self.pick_enumerated(p, rng)?,
            None => self.pick_sampled(params, rng)?,
        };
        let pt = PublicPoint::new(user_id, r);
        self.push(pt.clone());
        Ok(pt)
    }

    fn pick_enumerated<R: Rng + ?Sized>(&self, p: u64, rng: &mut R) -> Result<BigUint> {
        let candidates: BTreeSet<u64> = match self.rule {
            PointRule::Any => (2..=p - 2).collect(),
            PointRule::QuadraticResidue => (1..p).map(|t| t * t % p).collect(),
        };
        let free: Vec<u64> = candidates
            .into_iter()
            .filter(|&r| (2..=p - 2).contains(&r) && !self.used.contains(&BigUint::from(r)))
            .collect();
        if free.is_empty() {
            return Err(Error::RegistryFull);
        }
        Ok(BigUint::from(free[rng.gen_range(0..free.len())]))
    }

    fn pick_sampled<R: Rng + ?Sized>(&self, params: &FieldParams, rng: &mut R) -> Result<BigUint> {
        let p = params.p();
        for _ in 0..MAX_POINT_DRAWS {
            let r = match self.rule {
                PointRule::Any => rng.gen_biguint_range(&BigUint::from(2u32), &(p - 1u32)),
                PointRule::QuadraticResidue => {
                    let t = rng.gen_biguint_range(&BigUint::one(), p);
                    (&t * &t) % p
                }
            };
            if params.point_in_range(&r) && !self.used.contains(&r) {
                return Ok(r);
            }
        }
        Err(Error::RegistryFull)
    }

    /// Registers `user_id` at a caller-chosen point (fixtures, migrations).
    pub fn insert_fixed(
        &mut self,
        user_id: &str,
        r: BigUint,
        params: &FieldParams,
    ) -> Result<PublicPoint> {
        if self.contains(user_id) {
            return Err(Error::DuplicateUser(user_id.to_string()));
        }
        self.admissible(&r, params)?;
        if self.used.contains(&r) {
            return Err(Error::DuplicatePoint(r));
        }
        let pt = PublicPoint::new(user_id, r);
        self.push(pt.clone());
        Ok(pt)
    }
}

/// Free-function form of [`PointRegistry::assign`].
pub fn assign_point<R: Rng + ?Sized>(
    user_id: &str,
    registry: &mut PointRegistry,
    params: &FieldParams,
    rng: &mut R,
) -> Result<PublicPoint> {
    registry.assign(user_id, params, rng)
}

/// Secret key material `g_i = (h_i, b_0, ..., b_m)` for one user.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SimplexMaterial {
    #[serde(rename = "user")]
    user_id: String,
    #[serde(with = "encoding::hex_num")]
    r: BigUint,
    h_i: ExpElem,
    /// `b[k] = r^{a_k}`, lowest index first.
    b: Vec<BaseElem>,
}

impl SimplexMaterial {
    pub fn user_id(&self) -> &str {
        &self.user_id
    }

    pub fn r(&self) -> &BigUint {
        &self.r
    }

    pub fn point(&self) -> PublicPoint {
        PublicPoint::new(self.user_id.clone(), self.r.clone())
    }

    pub fn h_i(&self) -> &ExpElem {
        &self.h_i
    }

    pub fn b(&self) -> &[BaseElem] {
        &self.b
    }

    pub fn degree(&self) -> usize {
        self.b.len().saturating_sub(1)
    }

    /// `r^{h_i} == prod_k b_k^{r^k mod (p-1)} mod p`.
    pub fn is_consistent(&self, params: &FieldParams) -> bool {
        if self.b.is_empty() {
            return false;
        }
        let lhs = mod_pow_exp(&params.point_as_base(&self.r), &self.h_i, params);
        lhs == b_vector_product(&self.b, &self.r, params)
    }
}

/// `prod_k b_k^{z_k}` with `z_k = x^k` reduced mod `p - 1`.
fn b_vector_product(b: &[BaseElem], x: &BigUint, params: &FieldParams) -> BaseElem {
    let z = exponent_powers(x, b.len().saturating_sub(1), params);
    b.iter().zip(&z).fold(params.base(1u32), |acc, (bk, zk)| {
        acc.mul(&mod_pow_exp(bk, zk, params), params)
    })
}

/// KDC side: computes and self-checks a user's material.
pub fn issue_material(ms: &MasterSecret, pt: &PublicPoint) -> Result<SimplexMaterial> {
    let params = ms.params();
    if !params.point_in_range(&pt.r) {
        return Err(Error::PointOutOfRange(pt.r.clone()));
    }
    let base = params.point_as_base(&pt.r);
    let b = ms
        .coeffs()
        .iter()
        .map(|a| mod_pow_exp(&base, a, params))
        .collect();
    let mat = SimplexMaterial {
        user_id: pt.user_id.clone(),
        r: pt.r.clone(),
        h_i: ms.eval_at_point(&pt.r),
        b,
    };
    if !mat.is_consistent(params) {
        return Err(Error::ConsistencyCheckFailed);
    }
    Ok(mat)
}

/// The key of the stream `sender -> receiver`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct DirectedKey {
    pub sender: PublicPoint,
    pub receiver: PublicPoint,
    pub k: BaseElem,
}

fn reject_self(a: &PublicPoint, b: &PublicPoint) -> Result<()> {
    if a.r == b.r || a.user_id == b.user_id {
        return Err(Error::SelfChannel);
    }
    Ok(())
}

/// Sender side of `self -> receiver`: `r_receiver^{h_i}`. Uses only `h_i`.
pub fn send_key(
    mat: &SimplexMaterial,
    receiver: &PublicPoint,
    params: &FieldParams,
) -> Result<DirectedKey> {
    let me = mat.point();
    reject_self(&me, receiver)?;
    let k = mod_pow_exp(&params.point_as_base(&receiver.r), &mat.h_i, params);
    Ok(DirectedKey {
        sender: me,
        receiver: receiver.clone(),
        k,
    })
}

/// Receiver side of `sender -> self`: `prod_k b_k^{r_sender^k}`. Uses only the b-vector.
pub fn recv_key(
    mat: &SimplexMaterial,
    sender: &PublicPoint,
    params: &FieldParams,
) -> Result<DirectedKey> {
    let me = mat.point();
    reject_self(&me, sender)?;
    let k = b_vector_product(&mat.b, &sender.r, params);
    Ok(DirectedKey {
        sender: sender.clone(),
        receiver: me,
        k,
    })
}

/// SHA-256 over `"SBLOMv1" || p || r_sender || r_receiver || k`, each residue
/// big-endian and padded to `ceil(bits(p) / 8)` bytes.
pub fn derive_session_key(dk: &DirectedKey, params: &FieldParams) -> [u8; 32] {
    let w = params.byte_width();
    let mut h = Sha256::new();
    h.update(SESSION_KEY_LABEL);
    h.update(encoding::be_fixed(params.p(), w));
    h.update(encoding::be_fixed(&dk.sender.r, w));
    h.update(encoding::be_fixed(&dk.receiver.r, w));
    h.update(dk.k.to_be_fixed(w));
    h.finalize().into()
}

/// `z_k = x^k mod (p - 1)` for `k = 0..=m`.
pub fn exponent_powers(x: &BigUint, m: usize, params: &FieldParams) -> Vec<ExpElem> {
    let x = params.point_as_exp(x);
    let mut out = Vec::with_capacity(m + 1);
    let mut z = params.exp(1u32);
    for _ in 0..=m {
        out.push(z.clone());
        z = params.exp(z.value() * x.value());
    }
    out
}

impl DirectedKey {
    pub fn is_zero(&self) -> bool {
        self.k.value().is_zero()
    }
}

/// Evaluates `mod_pow(r, e)` for a raw point; convenience for callers holding
/// plain integers.
pub fn point_pow(r: &BigUint, e: &BigUint, params: &FieldParams) -> BaseElem {
    mod_pow(&params.point_as_base(r), e, params)
}
