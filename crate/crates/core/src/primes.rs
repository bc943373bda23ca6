//! Probabilistic primality testing and prime / safe-prime search.

use std::sync::OnceLock;

use num_bigint::{BigUint, RandBigInt};
use num_integer::Integer;
use num_traits::{One, ToPrimitive, Zero};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

/// Miller-Rabin rounds used for every accepted prime (error below 2^-80).
pub const MR_ROUNDS: usize = 40;

const SIEVE_LIMIT: u32 = 1 << 15;
const SIEVE_WINDOW: u64 = 1 << 14;

pub(crate) fn small_primes() -> &'static [u32] {
    static PRIMES: OnceLock<Vec<u32>> = OnceLock::new();
    PRIMES.get_or_init(|| {
        let limit = SIEVE_LIMIT as usize;
        let mut composite = vec![false; limit];
        let mut out = Vec::new();
        for i in 2..limit {
            if !composite[i] {
                out.push(i as u32);
                let mut j = i * i;
                while j < limit {
                    composite[j] = true;
                    j += i;
                }
            }
        }
        out
    })
}

fn is_prime_u64(n: u64) -> bool {
    if n < 2 {
        return false;
    }
    if n % 2 == 0 {
        return n == 2;
    }
    let mut d = 3u64;
    while d * d <= n {
        if n % d == 0 {
            return false;
        }
        d += 2;
    }
    true
}

/// Primality test with [`MR_ROUNDS`] Miller-Rabin rounds.
///
/// Bases are drawn from a generator seeded by a hash of `n`, so the verdict is
/// reproducible. Values below 2^32 are decided exactly by trial division.
pub fn is_probable_prime(n: &BigUint) -> bool {
    let seed: [u8; 32] = Sha256::digest(n.to_bytes_be()).into();
    let mut rng = ChaCha20Rng::from_seed(seed);
    is_probable_prime_with(n, MR_ROUNDS, &mut rng)
}

pub fn is_probable_prime_with<R: Rng + ?Sized>(n: &BigUint, rounds: usize, rng: &mut R) -> bool {
    if let Some(small) = n.to_u64() {
        if small < (1u64 << 32) {
            return is_prime_u64(small);
        }
    }
    if n.is_even() {
        return false;
    }
    for &p in small_primes() {
        if (n % p).is_zero() {
            return false;
        }
    }
    miller_rabin(n, rounds, rng)
}

fn miller_rabin<R: Rng + ?Sized>(n: &BigUint, rounds: usize, rng: &mut R) -> bool {
    let one = BigUint::one();
    let n_minus_one = n - &one;
    let s = n_minus_one.trailing_zeros().unwrap_or(0);
    let d = &n_minus_one >> s;
    let two = BigUint::from(2u32);

    'witness: for _ in 0..rounds {
        let a = rng.gen_biguint_range(&two, &n_minus_one);
        let mut x = a.modpow(&d, n);
        if x == one || x == n_minus_one {
            continue;
        }
        for _ in 1..s {
            x = (&x * &x) % n;
            if x == n_minus_one {
                continue 'witness;
            }
            if x == one {
                return false;
            }
        }
        return false;
    }
    true
}

/// Random prime with exactly `bits` bits and its two top bits set, so the
/// product of two such primes has exactly `2 * bits` bits.
pub fn random_prime<R: Rng + ?Sized>(bits: u64, budget: u64, rng: &mut R) -> Result<BigUint> {
    if bits < 8 {
        return Err(Error::InvalidParameter(format!(
            "prime size {bits} is below the 8-bit minimum"
        )));
    }
    for _ in 0..budget {
        let mut candidate = rng.gen_biguint(bits);
        candidate.set_bit(bits - 1, true);
        candidate.set_bit(bits - 2, true);
        candidate.set_bit(0, true);
        if is_probable_prime_with(&candidate, 1, rng) && is_probable_prime(&candidate) {
            return Ok(candidate);
        }
    }
    Err(Error::ResourceExhausted {
        what: "prime search",
        budget,
    })
}

/// Random safe prime `p = 2q + 1` with exactly `bits` bits. Returns `(p, q)`.
///
/// `budget` bounds the number of candidate values of `q` examined.
pub fn random_safe_prime<R: Rng + ?Sized>(
    bits: u64,
    budget: u64,
    rng: &mut R,
) -> Result<(BigUint, BigUint)> {
    if bits < 3 {
        return Err(Error::InvalidParameter(format!(
            "no safe prime has {bits} bits"
        )));
    }
    if bits <= 32 {
        return small_safe_prime(bits, budget, rng);
    }

    // q ranges over [2^(bits-2), 2^(bits-1)) so that p has exactly `bits` bits.
    let q_bound = BigUint::one() << (bits - 1);
    let mut examined = 0u64;
    loop {
        let mut q0 = rng.gen_biguint(bits - 2);
        q0.set_bit(bits - 2, true);
        q0.set_bit(0, true);
        let residues: Vec<u64> = small_primes()
            .iter()
            .map(|&r| (&q0 % r).to_u64().expect("residue fits"))
            .collect();

        for step in 0..SIEVE_WINDOW {
            if examined >= budget {
                return Err(Error::ResourceExhausted {
                    what: "safe prime search",
                    budget,
                });
            }
            examined += 1;
            let delta = 2 * step;
            let survives = small_primes().iter().zip(&residues).all(|(&r, &res)| {
                let r = r as u64;
                let q_mod = (res + delta) % r;
                q_mod != 0 && (2 * q_mod + 1) % r != 0
            });
            if !survives {
                continue;
            }
            let q = &q0 + delta;
            if q >= q_bound {
                break;
            }
            let p = (&q << 1) + 1u32;
            if is_probable_prime_with(&q, 1, rng)
                && is_probable_prime_with(&p, 1, rng)
                && is_probable_prime(&q)
                && is_probable_prime(&p)
            {
                return Ok((p, q));
            }
        }
    }
}

fn small_safe_prime<R: Rng + ?Sized>(
    bits: u64,
    budget: u64,
    rng: &mut R,
) -> Result<(BigUint, BigUint)> {
    let lo = 1u64 << (bits - 2);
    let span = lo;
    let start = rng.gen_range(0..span);
    for offset in 0..span {
        if offset >= budget {
            return Err(Error::ResourceExhausted {
                what: "safe prime search",
                budget,
            });
        }
        let q = lo + (start + offset) % span;
        if is_prime_u64(q) && is_prime_u64(2 * q + 1) {
            return Ok((BigUint::from(2 * q + 1), BigUint::from(q)));
        }
    }
    Err(Error::InvalidParameter(format!(
        "no safe prime has exactly {bits} bits"
    )))
}

/// Modular inverse, `None` when `a` is not invertible modulo `m`.
pub(crate) fn mod_inverse(a: &BigUint, m: &BigUint) -> Option<BigUint> {
    if m.is_one() {
        return None;
    }
    a.modinv(m)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn small_values_are_exact() {
        let primes: Vec<u64> = (0..60)
            .filter(|&n| is_probable_prime(&BigUint::from(n)))
            .collect();
        assert_eq!(
            primes,
            vec![2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37, 41, 43, 47, 53, 59]
        );
    }

    #[test]
    fn rejects_carmichael_and_strong_pseudoprimes() {
        // 3215031751 is a strong pseudoprime to bases 2, 3, 5 and 7.
        for n in [561u64, 1105, 3215031751, 3825123056546413051] {
            assert!(!is_probable_prime(&BigUint::from(n)), "{n}");
        }
    }

    #[test]
    fn accepts_mersenne_127() {
        let m127 = (BigUint::one() << 127) - 1u32;
        assert!(is_probable_prime(&m127));
        assert!(!is_probable_prime(&(&m127 + 2u32)));
    }

    #[test]
    fn random_prime_has_exact_width() {
        let mut rng = ChaCha20Rng::seed_from_u64(1);
        for bits in [8u64, 33, 64, 128] {
            let p = random_prime(bits, 100_000, &mut rng).unwrap();
            assert_eq!(p.bits(), bits);
            assert!(p.bit(bits - 2));
        }
    }

    #[test]
    fn five_bit_safe_prime_is_unique() {
        let mut rng = ChaCha20Rng::seed_from_u64(9);
        for _ in 0..5 {
            let (p, q) = random_safe_prime(5, 1000, &mut rng).unwrap();
            assert_eq!((p, q), (BigUint::from(23u32), BigUint::from(11u32)));
        }
    }

    #[test]
    fn exhausted_budget_is_reported() {
        let mut rng = ChaCha20Rng::seed_from_u64(3);
        let err = random_safe_prime(256, 1, &mut rng).unwrap_err();
        assert!(matches!(err, Error::ResourceExhausted { budget: 1, .. }));
    }
}
