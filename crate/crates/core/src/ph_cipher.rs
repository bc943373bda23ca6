//! Pohlig-Hellman exponentiation cipher over the multiplicative group of a
//! safe prime, plus the mapping from opaque sample ids into that group.
//!
//! `E_a(m) = m^a mod p` and `D_a(c) = c^(a^-1 mod p-1) mod p`. Two keys on the
//! same group commute, which is what lets two parties compare doubly
//! encrypted ids without either one seeing the other's plaintext ids.
//!
//! Exponentiation is not constant-time. Parties are assumed honest-but-curious
//! and timing side channels are outside that threat model.

use std::fmt;

use num_bigint::{BigUint, RandBigInt};
use num_integer::Integer;
use num_traits::One;
use rand::Rng;
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::primes::{self, is_probable_prime};

/// Default security size for generated groups.
pub const DEFAULT_GROUP_BITS: u64 = 2048;

const HASH_DOMAIN: &[u8] = b"avfl/hash-to-group/v1";

/// RFC 2409 second Oakley group modulus, a 1024-bit safe prime.
const MODP_1024_HEX: &str = "ffffffffffffffffc90fdaa22168c234c4c6628b80dc1cd129024e088a67cc74\
020bbea63b139b22514a08798e3404ddef9519b3cd3a431b302b0a6df25f14374fe1\
356d6d51c245e485b576625e7ec6f44c42e9a637ed6b0bff5cb6f406b7edee386bfb\
5a899fa5ae9f24117c4b1fe649286651ece65381ffffffffffffffff";

/// RFC 3526 group 14 modulus, a 2048-bit safe prime.
const MODP_2048_HEX: &str = "ffffffffffffffffc90fdaa22168c234c4c6628b80dc1cd129024e088a67cc74\
020bbea63b139b22514a08798e3404ddef9519b3cd3a431b302b0a6df25f14374fe1\
356d6d51c245e485b576625e7ec6f44c42e9a637ed6b0bff5cb6f406b7edee386bfb\
5a899fa5ae9f24117c4b1fe649286651ece45b3dc2007cb8a163bf0598da48361c55d\
39a69163fa8fd24cf5f83655d23dca3ad961c62f356208552bb9ed529077096966d67\
0c354e4abc9804f1746c08ca18217c32905e462e36ce3be39e772c180e86039b2783a\
2ec07a28fb5c55df06f4c52c9de2bcbf6955817183995497cea956ae515d2261898fa0\
51015728e5a8aacaa68ffffffffffffffff";

/// Public group parameters: a safe prime `p = 2q + 1`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct GroupParams {
    p: BigUint,
    q: BigUint,
}

impl GroupParams {
    /// Validates `p` as a safe prime and builds the group.
    pub fn from_prime(p: BigUint) -> Result<Self> {
        if p < BigUint::from(5u32) || p.is_even() {
            return Err(Error::InvalidParameter(format!("{p} is not a safe prime")));
        }
        let q = (&p - 1u32) >> 1;
        if !is_probable_prime(&q) || !is_probable_prime(&p) {
            return Err(Error::InvalidParameter(format!(
                "modulus of {} bits is not a safe prime",
                p.bits()
            )));
        }
        Ok(Self { p, q })
    }

    /// The 2048-bit MODP group from RFC 3526.
    pub fn modp_2048() -> Self {
        Self::from_constant(MODP_2048_HEX)
    }

    /// The 1024-bit MODP group from RFC 2409.
    pub fn modp_1024() -> Self {
        Self::from_constant(MODP_1024_HEX)
    }

    fn from_constant(hex: &str) -> Self {
        let p = BigUint::parse_bytes(hex.as_bytes(), 16).expect("constant parses");
        let q = (&p - 1u32) >> 1;
        Self { p, q }
    }

    pub fn p(&self) -> &BigUint {
        &self.p
    }

    pub fn q(&self) -> &BigUint {
        &self.q
    }

    pub fn bits(&self) -> u64 {
        self.p.bits()
    }

    /// Order of the exponent group, `p - 1`.
    pub fn exponent_modulus(&self) -> BigUint {
        &self.p - 1u32
    }

    pub fn contains(&self, value: &BigUint) -> bool {
        value >= &BigUint::one() && value < &self.p
    }

    /// Checked conversion of a raw integer into a group element.
    pub fn element(&self, value: BigUint) -> Result<GroupElement> {
        if self.contains(&value) {
            Ok(GroupElement(value))
        } else {
            Err(Error::OutOfRange(format!(
                "{} is not in the multiplicative group mod p",
                value
            )))
        }
    }

    /// All elements `1..p`; only sensible for tiny groups.
    pub fn elements(&self) -> impl Iterator<Item = GroupElement> + '_ {
        let mut next = BigUint::one();
        std::iter::from_fn(move || {
            if next < self.p {
                let out = GroupElement(next.clone());
                next += 1u32;
                Some(out)
            } else {
                None
            }
        })
    }
}

/// Safe-prime search budget used by [`generate_group`].
pub fn default_candidate_budget(bits: u64) -> u64 {
    (bits * bits).max(1 << 12) * 64
}

/// Generates a fresh safe-prime group with `p` of exactly `bits` bits.
pub fn generate_group<R: Rng + ?Sized>(bits: u64, rng: &mut R) -> Result<GroupParams> {
    generate_group_with_budget(bits, default_candidate_budget(bits), rng)
}

pub fn generate_group_with_budget<R: Rng + ?Sized>(
    bits: u64,
    budget: u64,
    rng: &mut R,
) -> Result<GroupParams> {
    let (p, q) = primes::random_safe_prime(bits, budget, rng)?;
    Ok(GroupParams { p, q })
}

/// An element of `Z_p^*`.
///
/// On the wire it is lowercase big-endian hex without leading zeros.
#[derive(Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct GroupElement(BigUint);

impl GroupElement {
    /// Unchecked constructor; range is enforced when the element is used.
    pub fn new(value: BigUint) -> Self {
        Self(value)
    }

    pub fn value(&self) -> &BigUint {
        &self.0
    }

    pub fn to_hex(&self) -> String {
        self.0.to_str_radix(16)
    }

    pub fn from_hex(s: &str) -> Result<Self> {
        let canonical = !s.is_empty()
            && !s.starts_with('0')
            && s.bytes()
                .all(|b| b.is_ascii_digit() || (b'a'..=b'f').contains(&b));
        if !canonical {
            return Err(Error::OutOfRange(format!(
                "{s:?} is not a canonical group element encoding"
            )));
        }
        let value = BigUint::parse_bytes(s.as_bytes(), 16)
            .ok_or_else(|| Error::OutOfRange(format!("{s:?} is not hexadecimal")))?;
        Ok(Self(value))
    }
}

impl fmt::Debug for GroupElement {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "GroupElement({})", self.to_hex())
    }
}

impl fmt::Display for GroupElement {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.to_hex())
    }
}

impl Serialize for GroupElement {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        serializer.serialize_str(&self.to_hex())
    }
}

impl<'de> Deserialize<'de> for GroupElement {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        GroupElement::from_hex(&s).map_err(serde::de::Error::custom)
    }
}

/// A party's secret exponent pair `(a, a^-1 mod p-1)`.
#[derive(Clone, PartialEq, Eq)]
pub struct PhKey {
    group: GroupParams,
    a: BigUint,
    a_inv: BigUint,
}

impl fmt::Debug for PhKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("PhKey")
            .field("group_bits", &self.group.bits())
            .finish_non_exhaustive()
    }
}

/// Samples an exponent uniformly among the units of `Z_(p-1)` other than 1.
pub fn keygen<R: Rng + ?Sized>(group: &GroupParams, rng: &mut R) -> PhKey {
    let order = group.exponent_modulus();
    let two = BigUint::from(2u32);
    loop {
        let a = rng.gen_biguint_range(&two, &order);
        if let Ok(key) = PhKey::from_exponent(group, a) {
            return key;
        }
    }
}

impl PhKey {
    /// Builds a key from an explicit exponent, rejecting non-units.
    pub fn from_exponent(group: &GroupParams, a: BigUint) -> Result<Self> {
        let order = group.exponent_modulus();
        if a.is_one() || a >= order {
            return Err(Error::InvalidParameter(
                "exponent must lie in [2, p-1)".into(),
            ));
        }
        let a_inv = primes::mod_inverse(&a, &order).ok_or_else(|| {
            Error::InvalidParameter(format!("exponent {a} is not coprime to p-1"))
        })?;
        Ok(Self {
            group: group.clone(),
            a,
            a_inv,
        })
    }

    pub fn group(&self) -> &GroupParams {
        &self.group
    }

    pub fn exponent(&self) -> &BigUint {
        &self.a
    }

    pub fn inverse_exponent(&self) -> &BigUint {
        &self.a_inv
    }

    pub fn encrypt(&self, m: &GroupElement) -> Result<GroupElement> {
        self.check(m)?;
        Ok(GroupElement(m.0.modpow(&self.a, &self.group.p)))
    }

    pub fn decrypt(&self, c: &GroupElement) -> Result<GroupElement> {
        self.check(c)?;
        Ok(GroupElement(c.0.modpow(&self.a_inv, &self.group.p)))
    }

    fn check(&self, x: &GroupElement) -> Result<()> {
        if self.group.contains(&x.0) {
            Ok(())
        } else {
            Err(Error::OutOfRange(format!(
                "{} is outside [1, p-1]",
                x.to_hex()
            )))
        }
    }
}

/// Deterministically maps an opaque id into the quadratic-residue subgroup of
/// `Z_p^*`.
///
/// SHA-256 is run in counter mode over the id until the digest stream covers
/// `bits(p) + 128` bits; the stream is reduced mod `p` and squared. A zero
/// result bumps an outer retry counter.
pub fn hash_to_group(group: &GroupParams, id: &[u8]) -> GroupElement {
    let p = group.p();
    let blocks = (p.bits() + 128).div_ceil(256) as u32;
    for retry in 0u32.. {
        let mut stream = Vec::with_capacity(blocks as usize * 32);
        for block in 0..blocks {
            let mut h = Sha256::new();
            h.update(HASH_DOMAIN);
            h.update(retry.to_be_bytes());
            h.update(block.to_be_bytes());
            h.update((id.len() as u64).to_be_bytes());
            h.update(id);
            stream.extend_from_slice(&h.finalize());
        }
        let reduced = BigUint::from_bytes_be(&stream) % p;
        let squared = (&reduced * &reduced) % p;
        if squared.bits() != 0 {
            return GroupElement(squared);
        }
    }
    unreachable!("retry counter exhausted")
}
