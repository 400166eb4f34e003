//! Modular arithmetic over the base ring `Z_p` and the exponent ring `Z_{p-1}`.
//!
//! Keys live in the multiplicative group of `Z_p`, exponents live in `Z_{p-1}`
//! (Fermat). The two residue kinds get distinct types so that feeding a base
//! residue where an exponent belongs is a compile error rather than a silent
//! wrong key.

mod poly;
mod prime;

pub use poly::{lagrange_interpolate, Poly};
pub use prime::{gen_prime, gen_prime_with, is_probable_prime, PrimeSearch, MR_ROUNDS};

use num_bigint::{BigInt, BigUint, Sign};
use num_integer::Integer;
use num_traits::{One, Signed, Zero};
use serde::{Deserialize, Serialize};

use crate::encoding;
use crate::error::{Error, Result};

/// Public group parameters: the prime `p` and the cached exponent modulus `p - 1`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "RawParams", into = "RawParams")]
pub struct FieldParams {
    p: BigUint,
    exp_modulus: BigUint,
    bit_length: u64,
    safe_prime: bool,
}

#[derive(Serialize, Deserialize)]
struct RawParams {
    #[serde(with = "encoding::hex_num")]
    p: BigUint,
    safe_prime: bool,
}

impl TryFrom<RawParams> for FieldParams {
    type Error = Error;

    fn try_from(raw: RawParams) -> Result<Self> {
        FieldParams::new(raw.p, raw.safe_prime)
    }
}

impl From<FieldParams> for RawParams {
    fn from(fp: FieldParams) -> Self {
        RawParams {
            p: fp.p,
            safe_prime: fp.safe_prime,
        }
    }
}

impl FieldParams {
    /// Validates `p` (Miller-Rabin plus trial division) and, when `safe_prime`
    /// is set, `(p - 1) / 2` as well.
    pub fn new(p: BigUint, safe_prime: bool) -> Result<Self> {
        if p < BigUint::from(5u32) {
            return Err(Error::InvalidParams(format!("p = {p} is below 5")));
        }
        let mut rng = rand::thread_rng();
        if !is_probable_prime(&p, MR_ROUNDS, &mut rng) {
            return Err(Error::InvalidParams(format!("p = {p:x} is not prime")));
        }
        if safe_prime && !is_probable_prime(&(&p >> 1u32), MR_ROUNDS, &mut rng) {
            return Err(Error::InvalidParams(format!(
                "p = {p:x} is not a safe prime"
            )));
        }
        Ok(Self::new_unchecked(p, safe_prime))
    }

    pub(crate) fn new_unchecked(p: BigUint, safe_prime: bool) -> Self {
        let exp_modulus = &p - 1u32;
        let bit_length = p.bits();
        FieldParams {
            p,
            exp_modulus,
            bit_length,
            safe_prime,
        }
    }

    pub fn p(&self) -> &BigUint {
        &self.p
    }

    /// `p - 1`, the modulus of the exponent ring.
    pub fn exp_modulus(&self) -> &BigUint {
        &self.exp_modulus
    }

    pub fn bit_length(&self) -> u64 {
        self.bit_length
    }

    pub fn is_safe_prime(&self) -> bool {
        self.safe_prime
    }

    /// Order of the quadratic-residue subgroup when `p` is safe.
    pub fn subgroup_order(&self) -> Option<BigUint> {
        self.safe_prime.then(|| &self.p >> 1u32)
    }

    /// Width in bytes of a fixed-width big-endian residue.
    pub fn byte_width(&self) -> usize {
        self.bit_length.div_ceil(8) as usize
    }

    pub fn base(&self, v: impl Into<BigUint>) -> BaseElem {
        BaseElem(v.into() % &self.p)
    }

    pub fn exp(&self, v: impl Into<BigUint>) -> ExpElem {
        ExpElem(v.into() % &self.exp_modulus)
    }

    /// Coerces a public point into the base ring (used when `r` is raised to a power).
    pub fn point_as_base(&self, r: &BigUint) -> BaseElem {
        BaseElem(r % &self.p)
    }

    /// Coerces a public point into the exponent ring (used when `r` is fed to `h`).
    pub fn point_as_exp(&self, r: &BigUint) -> ExpElem {
        ExpElem(r % &self.exp_modulus)
    }

    /// Whether `r` lies in the admissible point range `[2, p - 2]`.
    pub fn point_in_range(&self, r: &BigUint) -> bool {
        *r >= BigUint::from(2u32) && *r <= &self.p - 2u32
    }

    /// Euler's criterion: `r^((p-1)/2) = 1 mod p`.
    pub fn is_quadratic_residue(&self, r: &BigUint) -> bool {
        let r = r % &self.p;
        !r.is_zero() && r.modpow(&(&self.p >> 1u32), &self.p).is_one()
    }
}

/// Residue of the base ring `Z_p`.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct BaseElem(#[serde(with = "encoding::hex_num")] BigUint);

/// Residue of the exponent ring `Z_{p-1}`.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ExpElem(#[serde(with = "encoding::hex_num")] BigUint);

macro_rules! residue_common {
    ($t:ident) => {
        impl $t {
            pub fn value(&self) -> &BigUint {
                &self.0
            }

            pub fn into_inner(self) -> BigUint {
                self.0
            }

            pub fn is_zero(&self) -> bool {
                self.0.is_zero()
            }

            pub fn to_hex(&self) -> String {
                encoding::to_hex(&self.0)
            }
        }

        impl std::fmt::Display for $t {
            fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
                write!(f, "{:x}", self.0)
            }
        }
    };
}

residue_common!(BaseElem);
residue_common!(ExpElem);

impl BaseElem {
    pub fn mul(&self, other: &BaseElem, params: &FieldParams) -> BaseElem {
        BaseElem((&self.0 * &other.0) % params.p())
    }

    /// Fixed-width big-endian encoding, left-padded to `width` bytes.
    pub fn to_be_fixed(&self, width: usize) -> Vec<u8> {
        encoding::be_fixed(&self.0, width)
    }
}

/// `base^exp mod p` by square-and-multiply. `0^0` is 1.
pub fn mod_pow(base: &BaseElem, exp: &BigUint, params: &FieldParams) -> BaseElem {
    BaseElem(base.0.modpow(exp, params.p()))
}

/// `base^e mod p` for an exponent already reduced into `Z_{p-1}`.
pub fn mod_pow_exp(base: &BaseElem, e: &ExpElem, params: &FieldParams) -> BaseElem {
    mod_pow(base, &e.0, params)
}

/// Inverse of `a` modulo `m` by the extended Euclidean algorithm.
///
/// Fails with [`Error::NotInvertible`] carrying `gcd(a, m)` when no inverse exists.
pub fn mod_inv(a: &BigUint, m: &BigUint) -> Result<BigUint> {
    if m.is_one() {
        return Ok(BigUint::zero());
    }
    let a = BigInt::from_biguint(Sign::Plus, a % m);
    let m_int = BigInt::from_biguint(Sign::Plus, m.clone());
    let ext = a.extended_gcd(&m_int);
    if !ext.gcd.is_one() {
        // gcd(0, m) = m
        return Err(Error::NotInvertible(ext.gcd.magnitude().clone()));
    }
    let mut x = ext.x % &m_int;
    if x.is_negative() {
        x += &m_int;
    }
    Ok(x.magnitude().clone())
}

/// `(a - b) mod m` for residues `a, b < m`.
pub(crate) fn sub_mod(a: &BigUint, b: &BigUint, m: &BigUint) -> BigUint {
    if a >= b {
        (a - b) % m
    } else {
        (m - (b - a) % m) % m
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn p23() -> FieldParams {
        FieldParams::new(23u32.into(), true).unwrap()
    }

    #[test]
    fn mod_pow_examples() {
        let fp = p23();
        assert_eq!(mod_pow(&fp.base(5u32), &11u32.into(), &fp), fp.base(22u32));
        for x in 0u32..23 {
            assert_eq!(mod_pow(&fp.base(x), &BigUint::zero(), &fp), fp.base(1u32));
        }
        for k in 0u32..50 {
            assert_eq!(mod_pow(&fp.base(1u32), &k.into(), &fp), fp.base(1u32));
        }
    }

    #[test]
    fn mod_pow_matches_repeated_multiplication() {
        let fp = p23();
        for b in 0u64..23 {
            let mut acc = 1u64;
            for e in 0u32..60 {
                assert_eq!(
                    mod_pow(&fp.base(b), &e.into(), &fp).value(),
                    &BigUint::from(acc)
                );
                acc = acc * b % 23;
            }
        }
    }

    #[test]
    fn mod_inv_examples() {
        let m = BigUint::from(22u32);
        assert_eq!(mod_inv(&3u32.into(), &m).unwrap(), BigUint::from(15u32));
        assert_eq!(mod_inv(&1u32.into(), &m).unwrap(), BigUint::one());
        match mod_inv(&11u32.into(), &m) {
            Err(Error::NotInvertible(g)) => assert_eq!(g, BigUint::from(11u32)),
            other => panic!("expected NotInvertible, got {other:?}"),
        }
        match mod_inv(&0u32.into(), &m) {
            Err(Error::NotInvertible(g)) => assert_eq!(g, m),
            other => panic!("expected NotInvertible, got {other:?}"),
        }
    }

    #[test]
    fn params_reject_composites_and_small() {
        assert!(FieldParams::new(3u32.into(), false).is_err());
        assert!(FieldParams::new(21u32.into(), false).is_err());
        // 29 is prime but 14 is not
        assert!(FieldParams::new(29u32.into(), false).is_ok());
        assert!(FieldParams::new(29u32.into(), true).is_err());
        let fp = FieldParams::new(1019u32.into(), true).unwrap();
        assert_eq!(fp.exp_modulus(), &BigUint::from(1018u32));
        assert_eq!(fp.bit_length(), 10);
    }

    #[test]
    fn params_json_shape() {
        let fp = p23();
        let s = serde_json::to_string(&fp).unwrap();
        assert_eq!(s, r#"{"p":"17","safe_prime":true}"#);
        let back: FieldParams = serde_json::from_str(&s).unwrap();
        assert_eq!(back, fp);
        assert!(serde_json::from_str::<FieldParams>(r#"{"p":"15","safe_prime":false}"#).is_err());
    }

    #[test]
    fn point_coercions() {
        let fp = p23();
        let r = BigUint::from(22u32);
        assert_eq!(fp.point_as_base(&r).value(), &BigUint::from(22u32));
        assert!(fp.point_as_exp(&r).is_zero());
        assert!(!fp.point_in_range(&1u32.into()));
        assert!(fp.point_in_range(&2u32.into()));
        assert!(fp.point_in_range(&21u32.into()));
        assert!(!fp.point_in_range(&22u32.into()));
        // 2 = 5^2 mod 23
        assert!(fp.is_quadratic_residue(&2u32.into()));
        assert!(!fp.is_quadratic_residue(&5u32.into()));
        assert!(fp.is_quadratic_residue(&4u32.into()));
    }

    proptest! {
        #[test]
        fn exponent_addition(a in 0u64..1019, e1 in 0u64..5000, e2 in 0u64..5000) {
            let fp = FieldParams::new(1019u32.into(), true).unwrap();
            let a = fp.base(a);
            let lhs = mod_pow(&a, &(e1 + e2).into(), &fp);
            let rhs = mod_pow(&a, &e1.into(), &fp).mul(&mod_pow(&a, &e2.into(), &fp), &fp);
            prop_assert_eq!(lhs, rhs);
        }

        #[test]
        fn fermat_reduction(a in 1u64..1019, e in 0u64..u64::MAX) {
            let fp = FieldParams::new(1019u32.into(), true).unwrap();
            let base = fp.base(a);
            // independent oracle: unreduced exponent, u128 square-and-multiply
            let mut acc: u128 = 1;
            let mut b = a as u128;
            let mut k = e;
            while k > 0 {
                if k & 1 == 1 { acc = acc * b % 1019; }
                b = b * b % 1019;
                k >>= 1;
            }
            let reduced = mod_pow_exp(&base, &fp.exp(e), &fp);
            prop_assert_eq!(reduced.value(), &BigUint::from(acc));
        }

        #[test]
        fn inverse_roundtrip(a in 1u64..10_000, m in 2u64..10_000) {
            let (a, m) = (BigUint::from(a), BigUint::from(m));
            match mod_inv(&a, &m) {
                Ok(x) => prop_assert!((&a * x % &m).is_one()),
                Err(Error::NotInvertible(g)) => prop_assert_eq!(g, a.gcd(&m)),
                Err(e) => prop_assert!(false, "{e}"),
            }
        }
    }
}
