//! Toy-scale attacks: brute-force discrete logs against simplex material,
//! coalition reconstruction of a classic Blom master, and a collusion probe
//! against the simplex exponent polynomial.

use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::Arc;

use num_bigint::BigUint;
use num_integer::Integer;
use num_traits::{One, ToPrimitive};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::classic::{ClassicShare, SymBivarPoly};
use crate::encoding;
use crate::error::{Error, Result};
use crate::modmath::{lagrange_interpolate, BaseElem, FieldParams, Poly};
use crate::simplex::SimplexMaterial;

/// Largest modulus, in bits, that [`dl_bruteforce`] will walk.
pub const DL_MAX_BITS: u32 = 24;

const CANCEL_POLL: u64 = 1 << 12;

/// Cooperative cancellation flag shared between a caller and a long search.
#[derive(Clone, Debug, Default)]
pub struct CancelToken(Arc<AtomicBool>);

impl CancelToken {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn cancel(&self) {
        self.0.store(true, Ordering::Relaxed);
    }

    pub fn is_cancelled(&self) -> bool {
        self.0.load(Ordering::Relaxed)
    }
}

fn small_modulus(params: &FieldParams) -> Result<u64> {
    let p = params.p();
    if p.bits() > u64::from(DL_MAX_BITS) {
        return Err(Error::ModulusTooLarge(p.bits() as u32));
    }
    Ok(p.to_u64().expect("p below the cap"))
}

/// Smallest `e >= 0` with `base^e = target (mod p)`, by walking the powers of
/// `base` until the cycle closes.
///
/// Fails with [`Error::NotFound`] when `target` is not a power of `base` and
/// with [`Error::ModulusTooLarge`] when `p > 2^24`.
pub fn dl_bruteforce(
    target: &BaseElem,
    base: &BaseElem,
    params: &FieldParams,
    cancel: Option<&CancelToken>,
) -> Result<u64> {
    let p = small_modulus(params)?;
    let g = (base.value() % p).to_u64().expect("reduced");
    let t = (target.value() % p).to_u64().expect("reduced");
    let mut acc = 1 % p;
    for e in 0..p {
        if acc == t {
            return Ok(e);
        }
        acc = acc * g % p;
        if acc == 1 % p {
            break;
        }
        if e % CANCEL_POLL == 0 && cancel.is_some_and(CancelToken::is_cancelled) {
            return Err(Error::Cancelled);
        }
    }
    Err(Error::NotFound)
}

/// Multiplicative order of `g` mod `p` (small moduli only).
pub fn multiplicative_order(g: &BaseElem, params: &FieldParams) -> Result<u64> {
    let p = small_modulus(params)?;
    let g = (g.value() % p).to_u64().expect("reduced");
    if g == 0 {
        return Err(Error::NotInvertible(params.p().clone()));
    }
    let mut acc = g;
    let mut n = 1;
    while acc != 1 {
        acc = acc * g % p;
        n += 1;
    }
    Ok(n)
}

/// Outcome of attacking a material's b-vector.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct DlReport {
    pub user: String,
    #[serde(with = "encoding::hex_num")]
    pub r: BigUint,
    /// Order of `r`; each exponent is recovered modulo this.
    pub order: u64,
    /// `a_k mod order`, lowest index first.
    pub exponents: Vec<u64>,
}

/// Recovers `a_k mod ord(r)` from every `b_k = r^{a_k}` in `mat`.
pub fn recover_coefficients(
    mat: &SimplexMaterial,
    params: &FieldParams,
    cancel: Option<&CancelToken>,
) -> Result<DlReport> {
    let r = params.point_as_base(mat.r());
    let order = multiplicative_order(&r, params)?;
    let exponents = mat
        .b()
        .iter()
        .map(|b| dl_bruteforce(b, &r, params, cancel))
        .collect::<Result<_>>()?;
    Ok(DlReport {
        user: mat.user_id().to_string(),
        r: mat.r().clone(),
        order,
        exponents,
    })
}

/// Rebuilds the classic master from a coalition's shares.
///
/// Each share holds the coefficients of `f(x, r_i)`; coefficient `k` is a
/// degree-`m` polynomial in `r_i`, so `m + 1` distinct shares pin row `k` of
/// the matrix. Fewer yield [`Error::Insufficient`].
pub fn collude_classic(
    shares: &[ClassicShare],
    m: usize,
    params: &FieldParams,
) -> Result<SymBivarPoly> {
    let mut distinct: Vec<&ClassicShare> = Vec::with_capacity(m + 1);
    for s in shares {
        if s.degree() != m {
            return Err(Error::InvalidDegree(format!(
                "share of degree {} in a degree-{m} coalition",
                s.degree()
            )));
        }
        if distinct.len() <= m && !distinct.iter().any(|d| d.owner_point() == s.owner_point()) {
            distinct.push(s);
        }
    }
    if distinct.len() <= m {
        return Err(Error::Insufficient {
            needed: m + 1,
            have: distinct.len(),
        });
    }
    let rows = (0..=m)
        .map(|k| {
            let pts: Vec<_> = distinct
                .iter()
                .map(|s| (s.owner_point().clone(), s.coeffs()[k].value().clone()))
                .collect();
            let row = lagrange_interpolate(&pts, params.p())?;
            Ok((0..=m).map(|v| row.coeff(v)).collect())
        })
        .collect::<Result<Vec<Vec<BigUint>>>>()?;
    SymBivarPoly::from_matrix(rows, params)
}

/// Node pair whose difference shares a factor with the modulus.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct BadPair {
    pub i: usize,
    pub j: usize,
    #[serde(with = "encoding::hex_num")]
    pub gcd: BigUint,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct HeldOut {
    #[serde(with = "encoding::hex_num")]
    pub r: BigUint,
    #[serde(with = "encoding::hex_num")]
    pub expected: BigUint,
    #[serde(with = "encoding::hex_num")]
    pub predicted: BigUint,
    pub ok: bool,
}

/// One interpolation attempt and how well its result generalizes.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Attempt {
    #[serde(with = "encoding::hex_num")]
    pub modulus: BigUint,
    pub success: bool,
    pub non_invertible: Vec<BadPair>,
    #[serde(default, skip_serializing_if = "Option::is_none", with = "opt_hex_vec")]
    pub recovered: Option<Vec<BigUint>>,
    pub held_out: Vec<HeldOut>,
}

/// Result of [`collude_simplex_probe`].
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Report {
    pub degree: usize,
    pub nodes: usize,
    /// Interpolation of `h` over the full exponent ring `Z_{p-1}`.
    pub exponent_ring: Attempt,
    /// For a safe prime `p = 2q + 1`: interpolation of `h mod q`, which is
    /// all a sender-side key `r^h` depends on when `r` is a residue.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub residue_subgroup: Option<Attempt>,
}

impl Report {
    pub fn success(&self) -> bool {
        self.exponent_ring.success
    }
}

fn attempt(
    nodes: &[(BigUint, BigUint)],
    held: &[(BigUint, BigUint)],
    modulus: &BigUint,
) -> Attempt {
    let reduced: Vec<_> = nodes
        .iter()
        .map(|(x, y)| (x % modulus, y % modulus))
        .collect();
    let mut non_invertible = Vec::new();
    for i in 0..reduced.len() {
        for j in i + 1..reduced.len() {
            let (a, b) = (&reduced[i].0, &reduced[j].0);
            let d = if a >= b { a - b } else { b - a };
            let g = d.gcd(modulus);
            if !g.is_one() {
                non_invertible.push(BadPair { i, j, gcd: g });
            }
        }
    }
    let poly = if non_invertible.is_empty() {
        lagrange_interpolate(&reduced, modulus).ok()
    } else {
        None
    };
    let held_out = match &poly {
        Some(h) => held
            .iter()
            .map(|(r, y)| {
                let expected = y % modulus;
                let predicted = h.eval(r);
                HeldOut {
                    r: r.clone(),
                    ok: expected == predicted,
                    expected,
                    predicted,
                }
            })
            .collect(),
        None => Vec::new(),
    };
    Attempt {
        modulus: modulus.clone(),
        success: poly.is_some(),
        non_invertible,
        recovered: poly.map(|h| padded(&h, nodes.len())),
        held_out,
    }
}

fn padded(h: &Poly, n: usize) -> Vec<BigUint> {
    (0..n).map(|k| h.coeff(k)).collect()
}

/// Tries to interpolate the master exponent polynomial from colluders'
/// `(r_i, h_i)` pairs. The first `m + 1` pairs are interpolation nodes; any
/// further pairs are held out to test the recovered polynomial.
///
/// Failures are reported, not raised.
pub fn collude_simplex_probe(
    h_values: &[(BigUint, BigUint)],
    m: usize,
    params: &FieldParams,
) -> Result<Report> {
    if h_values.len() <= m {
        return Err(Error::Insufficient {
            needed: m + 1,
            have: h_values.len(),
        });
    }
    let (nodes, held) = h_values.split_at(m + 1);
    Ok(Report {
        degree: m,
        nodes: nodes.len(),
        exponent_ring: attempt(nodes, held, params.exp_modulus()),
        residue_subgroup: params.subgroup_order().map(|q| attempt(nodes, held, &q)),
    })
}

/// Aggregate of repeated probes over fresh masters and random residue points.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProbeSummary {
    pub trials: usize,
    pub degree: usize,
    pub exponent_ring_successes: usize,
    pub residue_subgroup_successes: usize,
    pub success_rate: f64,
}

/// Runs `trials` probes, each against a fresh degree-`m` master with `m + 2`
/// users at distinct random residue points (one held out).
pub fn probe_trials<R: Rng + ?Sized>(
    trials: usize,
    m: usize,
    params: &FieldParams,
    rng: &mut R,
) -> Result<ProbeSummary> {
    use crate::simplex::{setup, PointRegistry, PointRule};

    let mut ring = 0;
    let mut sub = 0;
    for _ in 0..trials {
        let ms = setup(m, params, rng)?;
        let mut reg = PointRegistry::new(PointRule::default_for(params));
        let pts = (0..m + 2)
            .map(|i| reg.assign(&format!("u{i}"), params, rng))
            .collect::<Result<Vec<_>>>()?;
        let hv: Vec<_> = pts
            .iter()
            .map(|p| (p.r.clone(), ms.eval_at_point(&p.r).into_inner()))
            .collect();
        let report = collude_simplex_probe(&hv, m, params)?;
        ring += usize::from(
            report.exponent_ring.success && report.exponent_ring.held_out.iter().all(|h| h.ok),
        );
        sub += usize::from(
            report
                .residue_subgroup
                .is_some_and(|a| a.success && a.held_out.iter().all(|h| h.ok)),
        );
    }
    Ok(ProbeSummary {
        trials,
        degree: m,
        exponent_ring_successes: ring,
        residue_subgroup_successes: sub,
        success_rate: if trials == 0 {
            0.0
        } else {
            ring as f64 / trials as f64
        },
    })
}

mod opt_hex_vec {
    use num_bigint::BigUint;
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &Option<Vec<BigUint>>, s: S) -> Result<S::Ok, S::Error> {
        match v {
            Some(v) => crate::encoding::hex_vec::serialize(v, s),
            None => s.serialize_none(),
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Option<Vec<BigUint>>, D::Error> {
        let raw: Option<Vec<String>> = Option::deserialize(d)?;
        raw.map(|v| {
            v.iter()
                .map(|s| crate::encoding::from_hex(s).map_err(serde::de::Error::custom))
                .collect()
        })
        .transpose()
    }
}
