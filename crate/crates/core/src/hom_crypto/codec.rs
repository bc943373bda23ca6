use num_bigint::{BigInt, BigUint, Sign};
use num_traits::{FromPrimitive, ToPrimitive};

use crate::error::{Error, Result};

/// Default fixed-point precision: values are scaled by 2^40.
pub const DEFAULT_SCALE_BITS: u32 = 40;

/// Maps signed reals to Paillier plaintexts in `[0, n)`.
///
/// A value `x` is stored as `round(x * scale)`; negatives wrap to
/// `n - |v|`, so anything above `n / 2` decodes as negative. Products of
/// encoded values carry `scale^k`, which is what `scale_exponent` on a
/// ciphertext tracks.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct FixedPointCodec {
    scale: u64,
    n: BigUint,
    half_n: BigUint,
}

impl FixedPointCodec {
    pub fn new(n: &BigUint) -> Self {
        Self::with_scale(n, 1u64 << DEFAULT_SCALE_BITS).expect("default scale is valid")
    }

    pub fn with_scale(n: &BigUint, scale: u64) -> Result<Self> {
        if scale == 0 {
            return Err(Error::InvalidParameter(
                "codec scale must be positive".into(),
            ));
        }
        Ok(Self {
            scale,
            n: n.clone(),
            half_n: n >> 1,
        })
    }

    pub fn scale(&self) -> u64 {
        self.scale
    }

    pub fn modulus(&self) -> &BigUint {
        &self.n
    }

    /// Encodes `x` at a single scale factor.
    pub fn encode(&self, x: f64) -> Result<BigUint> {
        if !x.is_finite() {
            return Err(Error::CodecOverflow(format!("{x} is not finite")));
        }
        let scaled = (x * self.scale as f64).round();
        let v = BigInt::from_f64(scaled)
            .ok_or_else(|| Error::CodecOverflow(format!("{x} cannot be scaled")))?;
        self.wrap(&v)
            .ok_or_else(|| Error::CodecOverflow(format!("|{x}| * scale reaches n/2")))
    }

    /// Reduces a signed integer into `[0, n)`, refusing magnitudes of `n/2` or more.
    pub fn wrap(&self, v: &BigInt) -> Option<BigUint> {
        let magnitude = v.magnitude();
        if magnitude > &self.half_n {
            return None;
        }
        Some(match v.sign() {
            Sign::Minus => &self.n - magnitude,
            _ => magnitude.clone(),
        })
    }

    /// Interprets a plaintext as a signed integer (upper half negative).
    pub fn to_signed(&self, m: &BigUint) -> Result<BigInt> {
        if m >= &self.n {
            return Err(Error::OutOfRange("plaintext is not below n".into()));
        }
        Ok(if m > &self.half_n {
            -BigInt::from(&self.n - m)
        } else {
            BigInt::from(m.clone())
        })
    }

    pub fn decode(&self, m: &BigUint, scale_exponent: u32) -> Result<f64> {
        let signed = self.to_signed(m)?;
        let value = signed
            .to_f64()
            .ok_or_else(|| Error::CodecOverflow("plaintext exceeds f64 range".into()))?;
        Ok(value / (self.scale as f64).powi(scale_exponent as i32))
    }
}
