//! Paillier additively homomorphic encryption with `g = n + 1`.
//!
//! The weak party owns the key pair and is the only one that encrypts or
//! decrypts; the strong party only ever holds the [`PublicKey`] and works in
//! ciphertext space (additions and plaintext-scalar multiplications).

mod codec;
mod multiexp;

pub use codec::{FixedPointCodec, DEFAULT_SCALE_BITS};

use std::fmt;

use num_bigint::{BigUint, RandBigInt};
use num_integer::Integer;
use num_traits::{One, Zero};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::primes::{self, mod_inverse};

pub const DEFAULT_KEY_BITS: u64 = 2048;

/// Ciphertexts never carry more than three fixed-point scale factors.
pub const MAX_SCALE_EXPONENT: u32 = 3;

/// A Paillier ciphertext together with the number of fixed-point scale
/// factors its plaintext carries. Fresh encryptions carry one.
#[derive(Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Ciphertext {
    #[serde(with = "crate::hexser")]
    value: BigUint,
    scale_exponent: u32,
}

impl Ciphertext {
    pub fn new(value: BigUint, scale_exponent: u32) -> Self {
        Self {
            value,
            scale_exponent,
        }
    }

    pub fn value(&self) -> &BigUint {
        &self.value
    }

    pub fn scale_exponent(&self) -> u32 {
        self.scale_exponent
    }
}

impl fmt::Debug for Ciphertext {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let hex = self.value.to_str_radix(16);
        let head = &hex[..hex.len().min(16)];
        write!(f, "Ciphertext({head}.., scale={})", self.scale_exponent)
    }
}

/// How a plaintext scalar multiplier relates to the fixed-point scale.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ScalarKind {
    /// A plain integer; the ciphertext scale is unchanged.
    Raw,
    /// A codec-encoded real; the ciphertext gains one scale factor.
    Encoded,
}

impl ScalarKind {
    fn scale_increment(self) -> u32 {
        match self {
            ScalarKind::Raw => 0,
            ScalarKind::Encoded => 1,
        }
    }
}

#[derive(Clone, PartialEq, Eq)]
pub struct PublicKey {
    n: BigUint,
    n_squared: BigUint,
    half_n: BigUint,
}

impl fmt::Debug for PublicKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "PublicKey({} bits)", self.n.bits())
    }
}

impl PublicKey {
    pub fn from_modulus(n: BigUint) -> Result<Self> {
        if n.bits() < 16 || n.is_even() {
            return Err(Error::InvalidParameter(
                "Paillier modulus must be odd and at least 16 bits".into(),
            ));
        }
        Ok(Self {
            n_squared: &n * &n,
            half_n: &n >> 1,
            n,
        })
    }

    pub fn n(&self) -> &BigUint {
        &self.n
    }

    pub fn n_squared(&self) -> &BigUint {
        &self.n_squared
    }

    pub fn g(&self) -> BigUint {
        &self.n + 1u32
    }

    fn check_plaintext(&self, m: &BigUint) -> Result<()> {
        if m >= &self.n {
            return Err(Error::OutOfRange(format!(
                "plaintext of {} bits is not below n",
                m.bits()
            )));
        }
        Ok(())
    }

    fn check_ciphertext(&self, c: &Ciphertext) -> Result<()> {
        if c.value.is_zero() || c.value >= self.n_squared {
            return Err(Error::OutOfRange("ciphertext is not in (0, n^2)".into()));
        }
        if c.scale_exponent > MAX_SCALE_EXPONENT {
            return Err(Error::ScaleOverflow(c.scale_exponent));
        }
        Ok(())
    }

    fn random_nonce<R: Rng + ?Sized>(&self, rng: &mut R) -> BigUint {
        loop {
            let r = rng.gen_biguint_range(&BigUint::one(), &self.n);
            if r.gcd(&self.n).is_one() {
                return r;
            }
        }
    }

    /// `(1 + m n) mod n^2`, i.e. `g^m` for `g = n + 1`.
    fn g_pow(&self, m: &BigUint) -> BigUint {
        (BigUint::one() + m * &self.n) % &self.n_squared
    }

    /// Encrypts `m` with fresh randomness.
    pub fn encrypt<R: Rng + ?Sized>(&self, m: &BigUint, rng: &mut R) -> Result<Ciphertext> {
        let r = self.random_nonce(rng);
        self.encrypt_with_nonce(m, &r)
    }

    pub(crate) fn encrypt_with_nonce(&self, m: &BigUint, r: &BigUint) -> Result<Ciphertext> {
        self.check_plaintext(m)?;
        let rn = r.modpow(&self.n, &self.n_squared);
        Ok(Ciphertext::new((self.g_pow(m) * rn) % &self.n_squared, 1))
    }

    /// Ciphertext of `m1 + m2 mod n`.
    pub fn add(&self, c1: &Ciphertext, c2: &Ciphertext) -> Result<Ciphertext> {
        self.check_ciphertext(c1)?;
        self.check_ciphertext(c2)?;
        if c1.scale_exponent != c2.scale_exponent {
            return Err(Error::ScaleMismatch {
                left: c1.scale_exponent,
                right: c2.scale_exponent,
            });
        }
        Ok(Ciphertext::new(
            (&c1.value * &c2.value) % &self.n_squared,
            c1.scale_exponent,
        ))
    }

    /// Ciphertext of `m * k mod n`.
    pub fn scalar_mul(&self, c: &Ciphertext, k: &BigUint, kind: ScalarKind) -> Result<Ciphertext> {
        self.check_ciphertext(c)?;
        self.check_plaintext(k)?;
        let scale = self.next_scale(c.scale_exponent, kind)?;
        // Multipliers in the upper half are negative: use c^-1 raised to n - k.
        let value = if k > &self.half_n {
            self.invert(&c.value)?
                .modpow(&(&self.n - k), &self.n_squared)
        } else {
            c.value.modpow(k, &self.n_squared)
        };
        Ok(Ciphertext::new(value, scale))
    }

    /// Ciphertext of `sum_i m_i * k_i mod n`, evaluated as one simultaneous
    /// exponentiation over the positive and the negative multipliers.
    pub fn dot(&self, terms: &[(&Ciphertext, &BigUint)], kind: ScalarKind) -> Result<Ciphertext> {
        let Some((first, _)) = terms.first() else {
            return Err(Error::InvalidParameter(
                "empty homomorphic inner product".into(),
            ));
        };
        let scale_in = first.scale_exponent;
        let scale = self.next_scale(scale_in, kind)?;

        let mut positive: Vec<(&BigUint, BigUint)> = Vec::new();
        let mut negative: Vec<(&BigUint, BigUint)> = Vec::new();
        for (c, k) in terms {
            self.check_ciphertext(c)?;
            self.check_plaintext(k)?;
            if c.scale_exponent != scale_in {
                return Err(Error::ScaleMismatch {
                    left: scale_in,
                    right: c.scale_exponent,
                });
            }
            if *k > &self.half_n {
                negative.push((&c.value, &self.n - *k));
            } else {
                positive.push((&c.value, (*k).clone()));
            }
        }

        let pos = multiexp::multi_exp(&positive, &self.n_squared);
        let value = if negative.is_empty() {
            pos
        } else {
            let neg = multiexp::multi_exp(&negative, &self.n_squared);
            (pos * self.invert(&neg)?) % &self.n_squared
        };
        Ok(Ciphertext::new(value, scale))
    }

    fn next_scale(&self, current: u32, kind: ScalarKind) -> Result<u32> {
        let next = current + kind.scale_increment();
        if next > MAX_SCALE_EXPONENT {
            return Err(Error::ScaleOverflow(next));
        }
        Ok(next)
    }

    fn invert(&self, value: &BigUint) -> Result<BigUint> {
        mod_inverse(value, &self.n_squared)
            .ok_or_else(|| Error::Integrity("ciphertext shares a factor with n".into()))
    }
}

/// Secret factorization with precomputed CRT constants.
#[derive(Clone)]
struct SecretKey {
    p: BigUint,
    q: BigUint,
    lambda: BigUint,
    mu: BigUint,
    p_squared: BigUint,
    q_squared: BigUint,
    // Exponent n reduced by the orders of Z*_{p^2} and Z*_{q^2}.
    n_mod_order_p: BigUint,
    n_mod_order_q: BigUint,
    q_squared_inv: BigUint,
    q_inv: BigUint,
    h_p: BigUint,
    h_q: BigUint,
}

/// A Paillier key pair. `g = n + 1`, `lambda = lcm(p-1, q-1)`,
/// `mu = lambda^-1 mod n`.
#[derive(Clone)]
pub struct HomKeypair {
    public: PublicKey,
    secret: SecretKey,
}

impl fmt::Debug for HomKeypair {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("HomKeypair")
            .field("public", &self.public)
            .finish_non_exhaustive()
    }
}

/// Generates a key pair whose modulus has exactly `bits` bits.
pub fn hom_keygen<R: Rng + ?Sized>(bits: u64, rng: &mut R) -> Result<HomKeypair> {
    if bits < 64 || bits % 2 != 0 {
        return Err(Error::InvalidParameter(format!(
            "Paillier modulus size must be even and at least 64 bits, got {bits}"
        )));
    }
    let half = bits / 2;
    let budget = (half * half).max(1 << 12) * 16;
    loop {
        let p = primes::random_prime(half, budget, rng)?;
        let q = primes::random_prime(half, budget, rng)?;
        if p == q {
            continue;
        }
        if let Ok(kp) = HomKeypair::from_primes(p, q) {
            return Ok(kp);
        }
    }
}

impl HomKeypair {
    pub fn from_primes(p: BigUint, q: BigUint) -> Result<Self> {
        let one = BigUint::one();
        let n = &p * &q;
        let p1 = &p - &one;
        let q1 = &q - &one;
        if !n.gcd(&(&p1 * &q1)).is_one() {
            return Err(Error::InvalidParameter("gcd(n, phi(n)) != 1".into()));
        }
        let lambda = p1.lcm(&q1);
        let mu = mod_inverse(&(&lambda % &n), &n)
            .ok_or_else(|| Error::InvalidParameter("lambda is not invertible mod n".into()))?;

        let p_squared = &p * &p;
        let q_squared = &q * &q;
        let public = PublicKey::from_modulus(n.clone())?;
        let g = public.g();
        let l = |x: BigUint, m: &BigUint| (x - 1u32) / m;
        let h_p = mod_inverse(&(l(g.modpow(&p1, &p_squared), &p) % &p), &p)
            .ok_or_else(|| Error::InvalidParameter("degenerate prime p".into()))?;
        let h_q = mod_inverse(&(l(g.modpow(&q1, &q_squared), &q) % &q), &q)
            .ok_or_else(|| Error::InvalidParameter("degenerate prime q".into()))?;
        let q_squared_inv = mod_inverse(&q_squared, &p_squared)
            .ok_or_else(|| Error::InvalidParameter("p and q are not coprime".into()))?;
        let q_inv = mod_inverse(&(&q % &p), &p)
            .ok_or_else(|| Error::InvalidParameter("p and q are not coprime".into()))?;

        let secret = SecretKey {
            n_mod_order_p: &n % (&p * &p1),
            n_mod_order_q: &n % (&q * &q1),
            p,
            q,
            lambda,
            mu,
            p_squared,
            q_squared,
            q_squared_inv,
            q_inv,
            h_p,
            h_q,
        };
        Ok(Self { public, secret })
    }

    pub fn public(&self) -> &PublicKey {
        &self.public
    }

    pub fn lambda(&self) -> &BigUint {
        &self.secret.lambda
    }

    pub fn mu(&self) -> &BigUint {
        &self.secret.mu
    }

    /// Encrypts with fresh randomness, computing `r^n mod n^2` through the
    /// factorization.
    pub fn encrypt<R: Rng + ?Sized>(&self, m: &BigUint, rng: &mut R) -> Result<Ciphertext> {
        let r = self.public.random_nonce(rng);
        self.encrypt_with_nonce(m, &r)
    }

    pub(crate) fn encrypt_with_nonce(&self, m: &BigUint, r: &BigUint) -> Result<Ciphertext> {
        self.public.check_plaintext(m)?;
        let s = &self.secret;
        let rp = (r % &s.p_squared).modpow(&s.n_mod_order_p, &s.p_squared);
        let rq = (r % &s.q_squared).modpow(&s.n_mod_order_q, &s.q_squared);
        let rn = crt(&rp, &rq, &s.p_squared, &s.q_squared, &s.q_squared_inv);
        Ok(Ciphertext::new(
            (self.public.g_pow(m) * rn) % self.public.n_squared(),
            1,
        ))
    }

    /// Decrypts through the factorization (two half-size exponentiations).
    pub fn decrypt(&self, c: &Ciphertext) -> Result<BigUint> {
        self.public.check_ciphertext(c)?;
        let s = &self.secret;
        let mp = (lp(
            &(&c.value % &s.p_squared).modpow(&(&s.p - 1u32), &s.p_squared),
            &s.p,
        ) * &s.h_p)
            % &s.p;
        let mq = (lp(
            &(&c.value % &s.q_squared).modpow(&(&s.q - 1u32), &s.q_squared),
            &s.q,
        ) * &s.h_q)
            % &s.q;
        Ok(crt(&mp, &mq, &s.p, &s.q, &s.q_inv))
    }

    /// Textbook decryption `L(c^lambda mod n^2) * mu mod n`.
    pub fn decrypt_plain(&self, c: &Ciphertext) -> Result<BigUint> {
        self.public.check_ciphertext(c)?;
        let n = self.public.n();
        let u = c.value.modpow(&self.secret.lambda, self.public.n_squared());
        Ok((lp(&u, n) * &self.secret.mu) % n)
    }
}

fn lp(x: &BigUint, m: &BigUint) -> BigUint {
    (x - 1u32) / m
}

/// Recombines residues `a mod m1`, `b mod m2` given `m2^-1 mod m1`.
fn crt(a: &BigUint, b: &BigUint, m1: &BigUint, m2: &BigUint, m2_inv: &BigUint) -> BigUint {
    let diff = (a + m1 - (b % m1)) % m1;
    b + m2 * ((diff * m2_inv) % m1)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha20Rng;
    use std::collections::HashSet;
    use std::sync::OnceLock;

    fn keys() -> &'static HomKeypair {
        static KP: OnceLock<HomKeypair> = OnceLock::new();
        KP.get_or_init(|| hom_keygen(256, &mut ChaCha20Rng::seed_from_u64(17)).unwrap())
    }

    fn big(v: u64) -> BigUint {
        BigUint::from(v)
    }

    #[test]
    fn keygen_width_and_secret_relation() {
        let kp = keys();
        assert_eq!(kp.public().n().bits(), 256);
        assert_eq!(kp.public().g(), kp.public().n() + 1u32);
        let check = (kp.lambda() % kp.public().n() * kp.mu()) % kp.public().n();
        assert!(check.is_one());
        assert!(hom_keygen(32, &mut ChaCha20Rng::seed_from_u64(0)).is_err());
    }

    #[test]
    fn sixty_four_bit_roundtrips() {
        let mut rng = ChaCha20Rng::seed_from_u64(64);
        let kp = hom_keygen(64, &mut rng).unwrap();
        let n = kp.public().n().clone();
        assert!(kp
            .decrypt(&kp.encrypt(&big(0), &mut rng).unwrap())
            .unwrap()
            .is_zero());
        for _ in 0..1000 {
            let m = rng.gen_biguint_below(&n);
            let c = kp.encrypt(&m, &mut rng).unwrap();
            assert_eq!(kp.decrypt(&c).unwrap(), m);
        }
    }

    #[test]
    fn crt_and_textbook_routes_agree() {
        let kp = keys();
        let mut rng = ChaCha20Rng::seed_from_u64(5);
        for _ in 0..50 {
            let m = rng.gen_biguint_below(kp.public().n());
            let r = kp.public().random_nonce(&mut rng);
            let fast = kp.encrypt_with_nonce(&m, &r).unwrap();
            let slow = kp.public().encrypt_with_nonce(&m, &r).unwrap();
            assert_eq!(fast, slow);
            assert_eq!(kp.decrypt(&fast).unwrap(), m);
            assert_eq!(kp.decrypt_plain(&fast).unwrap(), m);
        }
    }

    #[test]
    fn boundary_plaintexts() {
        let kp = keys();
        let mut rng = ChaCha20Rng::seed_from_u64(6);
        let n = kp.public().n();
        let top = n - 1u32;
        assert_eq!(
            kp.decrypt(&kp.encrypt(&top, &mut rng).unwrap()).unwrap(),
            top
        );
        assert_eq!(
            kp.decrypt(&kp.encrypt(&big(5), &mut rng).unwrap()).unwrap(),
            big(5)
        );
        assert!(matches!(kp.encrypt(n, &mut rng), Err(Error::OutOfRange(_))));
        assert!(kp.public().encrypt(n, &mut rng).is_err());
    }

    #[test]
    fn fresh_encryptions_differ() {
        let kp = keys();
        let mut rng = ChaCha20Rng::seed_from_u64(7);
        let cts: HashSet<BigUint> = (0..100)
            .map(|_| kp.encrypt(&big(0), &mut rng).unwrap().value().clone())
            .collect();
        assert_eq!(cts.len(), 100);
        let a = kp.public().encrypt(&big(9), &mut rng).unwrap();
        let b = kp.public().encrypt(&big(9), &mut rng).unwrap();
        assert_ne!(a, b);
    }

    #[test]
    fn homomorphic_examples() {
        let kp = keys();
        let pk = kp.public();
        let mut rng = ChaCha20Rng::seed_from_u64(8);
        let enc = |m: u64, rng: &mut ChaCha20Rng| kp.encrypt(&big(m), rng).unwrap();

        let sum = pk.add(&enc(3, &mut rng), &enc(4, &mut rng)).unwrap();
        assert_eq!(kp.decrypt(&sum).unwrap(), big(7));

        let with_zero = pk.add(&enc(41, &mut rng), &enc(0, &mut rng)).unwrap();
        assert_eq!(kp.decrypt(&with_zero).unwrap(), big(41));

        let mut acc = enc(1, &mut rng);
        for _ in 1..100 {
            acc = pk.add(&acc, &enc(1, &mut rng)).unwrap();
        }
        assert_eq!(kp.decrypt(&acc).unwrap(), big(100));

        let six = enc(6, &mut rng);
        let prod = pk.scalar_mul(&six, &big(7), ScalarKind::Raw).unwrap();
        assert_eq!(kp.decrypt(&prod).unwrap(), big(42));
        assert_eq!(prod.scale_exponent(), 1);
        let same = pk.scalar_mul(&six, &big(1), ScalarKind::Raw).unwrap();
        assert_eq!(kp.decrypt(&same).unwrap(), big(6));
        let absorbed = pk
            .scalar_mul(&enc(0, &mut rng), &big(123456), ScalarKind::Raw)
            .unwrap();
        assert!(kp.decrypt(&absorbed).unwrap().is_zero());
    }

    #[test]
    fn upper_half_multiplier_wraps() {
        let kp = keys();
        let pk = kp.public();
        let mut rng = ChaCha20Rng::seed_from_u64(9);
        let n = pk.n();
        let minus_three = n - 3u32;
        let c = kp.encrypt(&big(5), &mut rng).unwrap();
        let out = pk.scalar_mul(&c, &minus_three, ScalarKind::Raw).unwrap();
        assert_eq!(kp.decrypt(&out).unwrap(), n - 15u32);
        assert!(pk.scalar_mul(&c, n, ScalarKind::Raw).is_err());
    }

    #[test]
    fn scale_tracking() {
        let kp = keys();
        let pk = kp.public();
        let mut rng = ChaCha20Rng::seed_from_u64(10);
        let c = kp.encrypt(&big(2), &mut rng).unwrap();
        let c2 = pk.scalar_mul(&c, &big(3), ScalarKind::Encoded).unwrap();
        assert_eq!(c2.scale_exponent(), 2);
        assert!(matches!(
            pk.add(&c, &c2),
            Err(Error::ScaleMismatch { left: 1, right: 2 })
        ));
        let c3 = pk.scalar_mul(&c2, &big(3), ScalarKind::Encoded).unwrap();
        assert_eq!(c3.scale_exponent(), 3);
        assert!(matches!(
            pk.scalar_mul(&c3, &big(3), ScalarKind::Encoded),
            Err(Error::ScaleOverflow(4))
        ));
        assert_eq!(
            pk.scalar_mul(&c3, &big(3), ScalarKind::Raw)
                .unwrap()
                .scale_exponent(),
            3
        );
    }

    #[test]
    fn dot_matches_fold_of_scalar_muls() {
        let kp = keys();
        let pk = kp.public();
        let mut rng = ChaCha20Rng::seed_from_u64(12);
        let codec = FixedPointCodec::new(pk.n());
        let phis: Vec<f64> = (0..40)
            .map(|i| {
                if i % 3 == 0 {
                    0.0
                } else {
                    rng.gen_range(-1.0..1.0)
                }
            })
            .collect();
        let xs: Vec<f64> = (0..40).map(|_| rng.gen_range(-3.0..3.0)).collect();
        let cts: Vec<Ciphertext> = phis
            .iter()
            .map(|&p| kp.encrypt(&codec.encode(p).unwrap(), &mut rng).unwrap())
            .collect();
        let ks: Vec<BigUint> = xs.iter().map(|&x| codec.encode(x).unwrap()).collect();

        let terms: Vec<(&Ciphertext, &BigUint)> = cts.iter().zip(&ks).collect();
        let fast = pk.dot(&terms, ScalarKind::Encoded).unwrap();
        let slow = cts
            .iter()
            .zip(&ks)
            .map(|(c, k)| pk.scalar_mul(c, k, ScalarKind::Encoded).unwrap())
            .reduce(|a, b| pk.add(&a, &b).unwrap())
            .unwrap();
        assert_eq!(fast.scale_exponent(), 2);
        assert_eq!(kp.decrypt(&fast).unwrap(), kp.decrypt(&slow).unwrap());

        let expected: f64 = phis.iter().zip(&xs).map(|(p, x)| p * x).sum();
        let got = codec.decode(&kp.decrypt(&fast).unwrap(), 2).unwrap();
        assert!((got - expected).abs() < 1e-9, "{got} vs {expected}");
    }

    #[test]
    fn serde_form_is_hex_and_scale() {
        let c = Ciphertext::new(big(0xbeef), 2);
        let json = serde_json::to_string(&c).unwrap();
        assert_eq!(json, r#"{"value":"beef","scale_exponent":2}"#);
        assert_eq!(serde_json::from_str::<Ciphertext>(&json).unwrap(), c);
    }
}
