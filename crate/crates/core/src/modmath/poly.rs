use num_bigint::BigUint;
use num_traits::{One, Zero};

use super::{mod_inv, sub_mod};
use crate::error::{Error, Result};

/// Univariate polynomial with coefficients reduced modulo `modulus`,
/// lowest degree first. Trailing zero coefficients are trimmed, so the zero
/// polynomial has no coefficients at all.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Poly {
    coeffs: Vec<BigUint>,
    modulus: BigUint,
}

impl Poly {
    pub fn new(coeffs: Vec<BigUint>, modulus: BigUint) -> Self {
        assert!(!modulus.is_zero(), "zero modulus");
        let mut coeffs: Vec<BigUint> = coeffs.into_iter().map(|c| c % &modulus).collect();
        while coeffs.last().is_some_and(Zero::is_zero) {
            coeffs.pop();
        }
        Poly { coeffs, modulus }
    }

    pub fn zero(modulus: BigUint) -> Self {
        Poly::new(Vec::new(), modulus)
    }

    pub fn coeffs(&self) -> &[BigUint] {
        &self.coeffs
    }

    /// Coefficient of `x^k`, zero past the degree.
    pub fn coeff(&self, k: usize) -> BigUint {
        self.coeffs.get(k).cloned().unwrap_or_default()
    }

    pub fn modulus(&self) -> &BigUint {
        &self.modulus
    }

    /// `None` for the zero polynomial.
    pub fn degree(&self) -> Option<usize> {
        self.coeffs.len().checked_sub(1)
    }

    pub fn is_zero(&self) -> bool {
        self.coeffs.is_empty()
    }

    /// Horner evaluation at `x`, reduced modulo the polynomial's modulus.
    pub fn eval(&self, x: &BigUint) -> BigUint {
        let x = x % &self.modulus;
        self.coeffs
            .iter()
            .rev()
            .fold(BigUint::zero(), |acc, c| (acc * &x + c) % &self.modulus)
    }

    /// Multiplies in place by `(x - root)`.
    fn mul_linear(&mut self, root: &BigUint) {
        let m = &self.modulus;
        let neg_root = sub_mod(&BigUint::zero(), &(root % m), m);
        let mut out = vec![BigUint::zero(); self.coeffs.len() + 1];
        for (k, c) in self.coeffs.iter().enumerate() {
            out[k + 1] = (&out[k + 1] + c) % m;
            out[k] = (&out[k] + c * &neg_root) % m;
        }
        *self = Poly::new(out, m.clone());
    }

    fn add_scaled(&mut self, other: &Poly, scale: &BigUint) {
        let m = &self.modulus;
        let n = self.coeffs.len().max(other.coeffs.len());
        let out = (0..n)
            .map(|k| (self.coeff(k) + other.coeff(k) * scale) % m)
            .collect();
        *self = Poly::new(out, m.clone());
    }
}

/// Lagrange interpolation through `points` modulo `modulus`.
///
/// Returns the polynomial of degree `< points.len()` through every point. Over
/// a composite modulus this fails with [`Error::NotInvertible`] as soon as some
/// node difference `x_i - x_j` shares a factor with the modulus; the error
/// carries that gcd.
pub fn lagrange_interpolate(points: &[(BigUint, BigUint)], modulus: &BigUint) -> Result<Poly> {
    let m = modulus;
    let xs: Vec<BigUint> = points.iter().map(|(x, _)| x % m).collect();
    for i in 0..xs.len() {
        for j in i + 1..xs.len() {
            if xs[i] == xs[j] {
                return Err(Error::malformed(format!(
                    "interpolation nodes {i} and {j} coincide"
                )));
            }
        }
    }

    let mut acc = Poly::zero(m.clone());
    for (i, (_, y)) in points.iter().enumerate() {
        let mut basis = Poly::new(vec![BigUint::one()], m.clone());
        let mut scale = y % m;
        for (j, xj) in xs.iter().enumerate() {
            if i == j {
                continue;
            }
            basis.mul_linear(xj);
            let inv = mod_inv(&sub_mod(&xs[i], xj, m), m)?;
            scale = scale * inv % m;
        }
        acc.add_scaled(&basis, &scale);
    }
    Ok(acc)
}
