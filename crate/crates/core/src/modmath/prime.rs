//! Miller-Rabin with trial division, and (safe) prime generation.

use std::sync::OnceLock;

use num_bigint::{BigUint, RandBigInt};
use num_traits::{One, ToPrimitive, Zero};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;

use super::FieldParams;
use crate::error::{Error, Result};

pub const MR_ROUNDS: usize = 40;

const TRIAL_DIVISION_BOUND: u32 = 10_000;

fn small_primes() -> &'static [u32] {
    static PRIMES: OnceLock<Vec<u32>> = OnceLock::new();
    PRIMES.get_or_init(|| {
        let n = TRIAL_DIVISION_BOUND as usize;
        let mut sieve = vec![true; n];
        sieve[0] = false;
        sieve[1] = false;
        let mut i = 2;
        while i * i < n {
            if sieve[i] {
                (i * i..n).step_by(i).for_each(|j| sieve[j] = false);
            }
            i += 1;
        }
        (0..n).filter(|&i| sieve[i]).map(|i| i as u32).collect()
    })
}

/// Trial division by every prime below 10^4, then `rounds` Miller-Rabin
/// rounds with witnesses drawn from `rng`.
pub fn is_probable_prime<R: Rng + ?Sized>(n: &BigUint, rounds: usize, rng: &mut R) -> bool {
    if let Some(small) = n.to_u32().filter(|&v| v < TRIAL_DIVISION_BOUND) {
        return small_primes().binary_search(&small).is_ok();
    }
    if small_primes().iter().any(|&q| (n % q).is_zero()) {
        return false;
    }
    miller_rabin(n, rounds, rng)
}

fn miller_rabin<R: Rng + ?Sized>(n: &BigUint, rounds: usize, rng: &mut R) -> bool {
    let one = BigUint::one();
    let two = BigUint::from(2u32);
    let n_minus_one = n - 1u32;
    let s = n_minus_one.trailing_zeros().unwrap_or(0);
    let d = &n_minus_one >> s;

    'witness: for _ in 0..rounds {
        let a = rng.gen_biguint_range(&two, &n_minus_one);
        let mut x = a.modpow(&d, n);
        if x == one || x == n_minus_one {
            continue;
        }
        for _ in 1..s {
            x = x.modpow(&two, n);
            if x == n_minus_one {
                continue 'witness;
            }
        }
        return false;
    }
    true
}

/// Prime search configuration.
#[derive(Clone, Copy, Debug)]
pub struct PrimeSearch {
    /// Candidates drawn before giving up with [`Error::Timeout`].
    pub max_attempts: usize,
}

impl Default for PrimeSearch {
    fn default() -> Self {
        PrimeSearch {
            max_attempts: 2_000_000,
        }
    }
}

/// Generates a `bits`-bit prime (a safe prime `2q + 1` when `safe` is set).
///
/// With a seed the result is fully deterministic, including the Miller-Rabin
/// witnesses. Without one, the seed comes from the OS.
pub fn gen_prime(bits: u64, safe: bool, seed: Option<u64>) -> Result<FieldParams> {
    let mut rng = match seed {
        Some(s) => ChaCha20Rng::seed_from_u64(s),
        None => ChaCha20Rng::from_entropy(),
    };
    gen_prime_with(bits, safe, &mut rng, PrimeSearch::default())
}

pub fn gen_prime_with<R: Rng + ?Sized>(
    bits: u64,
    safe: bool,
    rng: &mut R,
    search: PrimeSearch,
) -> Result<FieldParams> {
    // 3 bits is the smallest width holding a prime >= 5
    if bits < 3 {
        return Err(Error::InvalidParams(format!("bit length {bits} below 3")));
    }
    let five = BigUint::from(5u32);
    for _ in 0..search.max_attempts {
        if safe {
            let q = random_odd_with_top_bit(bits - 1, rng);
            if q < BigUint::from(2u32) || !sieve_pair(&q) {
                continue;
            }
            let p = (&q << 1u32) + 1u32;
            if p >= five
                && is_probable_prime(&q, MR_ROUNDS, rng)
                && is_probable_prime(&p, MR_ROUNDS, rng)
            {
                return Ok(FieldParams::new_unchecked(p, true));
            }
        } else {
            let p = random_odd_with_top_bit(bits, rng);
            if p >= five && is_probable_prime(&p, MR_ROUNDS, rng) {
                return Ok(FieldParams::new_unchecked(p, false));
            }
        }
    }
    Err(Error::Timeout(search.max_attempts))
}

fn random_odd_with_top_bit<R: Rng + ?Sized>(bits: u64, rng: &mut R) -> BigUint {
    let mut n = rng.gen_biguint(bits);
    n.set_bit(bits - 1, true);
    n.set_bit(0, true);
    n
}

/// Cheap rejection of `q` when `q` or `2q + 1` has a small factor.
fn sieve_pair(q: &BigUint) -> bool {
    if q.to_u32().is_some_and(|v| v < TRIAL_DIVISION_BOUND) {
        return true;
    }
    small_primes().iter().skip(1).all(|&l| {
        let r = (q % l).to_u32().unwrap_or(0);
        r != 0 && r != (l - 1) / 2
    })
}

/// True when a prime below the trial bound properly divides `n`.
#[cfg(test)]
fn has_small_factor(n: &BigUint) -> bool {
    small_primes()
        .iter()
        .any(|&q| (n % q).is_zero() && *n != BigUint::from(q))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn small_prime_table() {
        let ps = small_primes();
        assert_eq!(ps.len(), 1229);
        assert_eq!(&ps[..6], &[2, 3, 5, 7, 11, 13]);
        assert_eq!(*ps.last().unwrap(), 9973);
    }

    #[test]
    fn classifies_known_values() {
        let mut rng = ChaCha20Rng::seed_from_u64(1);
        for p in [
            2u64,
            3,
            5,
            23,
            1019,
            9973,
            10_007,
            1_000_000_007,
            18_446_744_073_709_551_557,
        ] {
            assert!(is_probable_prime(&p.into(), MR_ROUNDS, &mut rng), "{p}");
        }
        // 561 and 41041 are Carmichael numbers, 100160063 = 10007 * 10009
        for c in [0u64, 1, 4, 561, 41_041, 100_160_063, 1_000_000_007 * 3] {
            assert!(!is_probable_prime(&c.into(), MR_ROUNDS, &mut rng), "{c}");
        }
        // strong pseudoprime to every prime base up to 23
        let n = BigUint::from(3_825_123_056_546_413_051u64);
        assert!(!is_probable_prime(&n, MR_ROUNDS, &mut rng));
    }

    #[test]
    fn five_bit_safe_prime_is_23() {
        for seed in 0..20 {
            let fp = gen_prime(5, true, Some(seed)).unwrap();
            assert_eq!(fp.p(), &BigUint::from(23u32));
            assert!(fp.is_safe_prime());
        }
    }

    #[test]
    fn three_bit_primes() {
        for seed in 0..50 {
            let fp = gen_prime(3, false, Some(seed)).unwrap();
            let p = fp.p().to_u32().unwrap();
            assert!(p == 5 || p == 7, "{p}");
        }
    }

    #[test]
    fn sixty_four_bit_safe_prime() {
        let fp = gen_prime(64, true, Some(0xB10B)).unwrap();
        assert_eq!(fp.bit_length(), 64);
        let q = fp.p() >> 1u32;
        assert!(!has_small_factor(fp.p()));
        assert!(!has_small_factor(&q));
        let mut rng = ChaCha20Rng::seed_from_u64(99);
        assert!(is_probable_prime(fp.p(), MR_ROUNDS, &mut rng));
        assert!(is_probable_prime(&q, MR_ROUNDS, &mut rng));
        // also accepted by the validating constructor
        FieldParams::new(fp.p().clone(), true).unwrap();
    }

    #[test]
    fn deterministic_under_seed() {
        let a = gen_prime(48, true, Some(7)).unwrap();
        let b = gen_prime(48, true, Some(7)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn exhausted_budget_times_out() {
        let mut rng = ChaCha20Rng::seed_from_u64(3);
        let err = gen_prime_with(256, true, &mut rng, PrimeSearch { max_attempts: 1 }).unwrap_err();
        assert!(matches!(err, Error::Timeout(1)));
        assert!(gen_prime(2, false, Some(0)).is_err());
    }
}
