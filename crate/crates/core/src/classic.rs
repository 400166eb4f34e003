//! Classic Blom scheme: a symmetric bivariate master polynomial `f(x, y)`,
//! per-user shares `g_i(x) = f(x, r_i)` and symmetric pair keys `g_i(r_j)`.

use num_bigint::{BigUint, RandBigInt};
use num_traits::Zero;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::encoding;
use crate::error::{Error, Result};
use crate::modmath::{BaseElem, FieldParams, Poly};

/// `f(x, y) = sum c[u][v] x^u y^v` over `Z_p` with `c[u][v] = c[v][u]`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "RawMatrix", into = "RawMatrix")]
pub struct SymBivarPoly {
    coeffs: Vec<Vec<BigUint>>,
}

#[derive(Serialize, Deserialize)]
struct RawMatrix {
    coeffs: Vec<HexRow>,
}

#[derive(Serialize, Deserialize)]
#[serde(transparent)]
struct HexRow(#[serde(with = "encoding::hex_vec")] Vec<BigUint>);

impl TryFrom<RawMatrix> for SymBivarPoly {
    type Error = Error;

    fn try_from(raw: RawMatrix) -> Result<Self> {
        SymBivarPoly::check(raw.coeffs.into_iter().map(|r| r.0).collect())
    }
}

impl From<SymBivarPoly> for RawMatrix {
    fn from(f: SymBivarPoly) -> Self {
        RawMatrix {
            coeffs: f.coeffs.into_iter().map(HexRow).collect(),
        }
    }
}

impl SymBivarPoly {
    /// Builds a master polynomial from an explicit coefficient matrix, reducing
    /// entries mod `p`. Rejects non-square or asymmetric input.
    pub fn from_matrix(rows: Vec<Vec<BigUint>>, params: &FieldParams) -> Result<Self> {
        let p = params.p();
        SymBivarPoly::check(
            rows.into_iter()
                .map(|row| row.into_iter().map(|c| c % p).collect())
                .collect(),
        )
    }

    #[allow(clippy::needless_range_loop)]
    fn check(coeffs: Vec<Vec<BigUint>>) -> Result<Self> {
        let n = coeffs.len();
        if n == 0 || coeffs.iter().any(|row| row.len() != n) {
            return Err(Error::malformed(
                "coefficient matrix must be square and non-empty",
            ));
        }
        for u in 0..n {
            for v in u + 1..n {
                if coeffs[u][v] != coeffs[v][u] {
                    return Err(Error::malformed(format!("c[{u}][{v}] != c[{v}][{u}]")));
                }
            }
        }
        Ok(SymBivarPoly { coeffs })
    }

    /// Degree bound `m`; the matrix is `(m+1) x (m+1)`.
    pub fn degree(&self) -> usize {
        self.coeffs.len() - 1
    }

    pub fn coeff(&self, u: usize, v: usize) -> &BigUint {
        &self.coeffs[u][v]
    }

    pub fn matrix(&self) -> &[Vec<BigUint>] {
        &self.coeffs
    }

    /// Coefficients of `f(x, y)` as a polynomial in `x`, lowest first, always
    /// `m + 1` entries. No range check on `y`.
    pub fn restrict(&self, y: &BigUint, params: &FieldParams) -> Vec<BigUint> {
        let p = params.p();
        self.coeffs
            .iter()
            .map(|row| {
                row.iter()
                    .rev()
                    .fold(BigUint::zero(), |acc, c| (acc * y + c) % p)
            })
            .collect()
    }

    pub fn eval(&self, x: &BigUint, y: &BigUint, params: &FieldParams) -> BigUint {
        Poly::new(self.restrict(y, params), params.p().clone()).eval(x)
    }
}

/// Samples a uniformly random symmetric master polynomial of degree bound `m`:
/// the upper triangle is drawn uniformly and mirrored.
#[allow(clippy::needless_range_loop)]
pub fn gen_master<R: Rng + ?Sized>(
    m: usize,
    params: &FieldParams,
    rng: &mut R,
) -> Result<SymBivarPoly> {
    if m < 1 {
        return Err(Error::InvalidDegree("classic master needs m >= 1".into()));
    }
    let mut coeffs = vec![vec![BigUint::zero(); m + 1]; m + 1];
    for u in 0..=m {
        for v in u..=m {
            let c = rng.gen_biguint_below(params.p());
            coeffs[v][u] = c.clone();
            coeffs[u][v] = c;
        }
    }
    Ok(SymBivarPoly { coeffs })
}

/// A user's share `g_i(x) = f(x, r_i)`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClassicShare {
    #[serde(with = "encoding::hex_num")]
    r: BigUint,
    coeffs: Vec<BaseElem>,
}

impl ClassicShare {
    pub fn owner_point(&self) -> &BigUint {
        &self.r
    }

    /// Fixed-length coefficient vector (`m + 1` entries, lowest degree first).
    pub fn coeffs(&self) -> &[BaseElem] {
        &self.coeffs
    }

    pub fn degree(&self) -> usize {
        self.coeffs.len() - 1
    }

    pub fn share_poly(&self, params: &FieldParams) -> Poly {
        Poly::new(
            self.coeffs.iter().map(|c| c.value().clone()).collect(),
            params.p().clone(),
        )
    }
}

pub fn derive_share(f: &SymBivarPoly, r: &BigUint, params: &FieldParams) -> Result<ClassicShare> {
    if !params.point_in_range(r) {
        return Err(Error::PointOutOfRange(r.clone()));
    }
    let coeffs = f
        .restrict(r, params)
        .into_iter()
        .map(|c| params.base(c))
        .collect();
    Ok(ClassicShare {
        r: r.clone(),
        coeffs,
    })
}

/// `k_ij = g_i(r_j)`. A peer equal to the owner yields the self-key
/// `f(r_i, r_i)`; callers decide whether that is acceptable.
pub fn classic_key(
    share: &ClassicShare,
    r_peer: &BigUint,
    params: &FieldParams,
) -> Result<BaseElem> {
    if !params.point_in_range(r_peer) {
        return Err(Error::PointOutOfRange(r_peer.clone()));
    }
    Ok(params.base(share.share_poly(params).eval(r_peer)))
}
