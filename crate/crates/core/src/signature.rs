//! Demo-grade RSA signatures over a SHA-256 digest, used by customers to sign
//! PayWord commitments. Not for production use: no blinding, no
//! constant-time arithmetic.

use num_bigint::{BigUint, RandBigInt};
use num_integer::Integer;
use num_traits::One;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::numtheory::{is_probable_prime, mod_inv, mod_pow, MILLER_RABIN_ROUNDS};
use crate::seed::seeded_rng;

pub const PUBLIC_EXPONENT: u32 = 65_537;
pub const MIN_MODULUS_BITS: u64 = 512;

const DIGEST_LABEL: &[u8] = b"mdhc-sha256";

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum SignatureError {
    #[error("signing modulus has {0} bits, need at least {MIN_MODULUS_BITS}")]
    ModulusTooSmall(u64),
    #[error("public exponent must be odd and greater than 1")]
    BadExponent,
    #[error("private exponent does not match the public key")]
    KeyMismatch,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PublicKey {
    #[serde(with = "crate::wallet_store::hex_biguint")]
    pub modulus: BigUint,
    #[serde(with = "crate::wallet_store::hex_biguint")]
    pub exponent: BigUint,
}

impl PublicKey {
    fn check(&self) -> Result<(), SignatureError> {
        if self.modulus.bits() < MIN_MODULUS_BITS {
            return Err(SignatureError::ModulusTooSmall(self.modulus.bits()));
        }
        if self.exponent <= BigUint::one() || self.exponent.is_even() {
            return Err(SignatureError::BadExponent);
        }
        Ok(())
    }

    fn byte_len(&self) -> usize {
        self.modulus.bits().div_ceil(8) as usize
    }

    /// `true` iff `signature` is a valid signature of `message`. Malformed
    /// keys never verify.
    pub fn verify(&self, message: &[u8], signature: &[u8]) -> bool {
        if self.check().is_err() || signature.len() != self.byte_len() {
            return false;
        }
        let s = BigUint::from_bytes_be(signature);
        if s >= self.modulus {
            return false;
        }
        mod_pow(&s, &self.exponent, &self.modulus) == encode_digest(message, self.byte_len())
    }
}

/// RSA keypair for commitment signatures, independent of any chain modulus.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SignatureKeypair {
    pub public: PublicKey,
    #[serde(with = "crate::wallet_store::hex_biguint")]
    private_exponent: BigUint,
}

impl SignatureKeypair {
    /// Two random `bits / 2`-bit primes from `seed`.
    pub fn generate(bits: u64, seed: &[u8]) -> Result<Self, SignatureError> {
        if bits < MIN_MODULUS_BITS {
            return Err(SignatureError::ModulusTooSmall(bits));
        }
        let mut rng = seeded_rng(seed);
        let e = BigUint::from(PUBLIC_EXPONENT);
        loop {
            let p = random_prime(bits / 2, &mut rng);
            let q = random_prime(bits - bits / 2, &mut rng);
            let n = &p * &q;
            if p == q || n.bits() != bits {
                continue;
            }
            let lambda = (&p - 1u32).lcm(&(&q - 1u32));
            if let Ok(d) = mod_inv(&e, &lambda) {
                return Ok(SignatureKeypair {
                    public: PublicKey {
                        modulus: n,
                        exponent: e,
                    },
                    private_exponent: d,
                });
            }
        }
    }

    pub fn from_parts(public: PublicKey, private_exponent: BigUint) -> Result<Self, SignatureError> {
        public.check()?;
        let pair = SignatureKeypair {
            public,
            private_exponent,
        };
        let probe = BigUint::from(0x1234_5678u32);
        let roundtrip = mod_pow(
            &mod_pow(&probe, &pair.private_exponent, &pair.public.modulus),
            &pair.public.exponent,
            &pair.public.modulus,
        );
        if roundtrip != probe {
            return Err(SignatureError::KeyMismatch);
        }
        Ok(pair)
    }

    pub fn public(&self) -> &PublicKey {
        &self.public
    }

    pub fn sign(&self, message: &[u8]) -> Result<Vec<u8>, SignatureError> {
        self.public.check()?;
        let len = self.public.byte_len();
        let s = mod_pow(
            &encode_digest(message, len),
            &self.private_exponent,
            &self.public.modulus,
        );
        let bytes = s.to_bytes_be();
        let mut out = vec![0u8; len - bytes.len()];
        out.extend_from_slice(&bytes);
        Ok(out)
    }
}

fn random_prime<R: rand::RngCore>(bits: u64, rng: &mut R) -> BigUint {
    loop {
        let mut candidate = rng.gen_biguint(bits);
        candidate.set_bit(bits - 1, true);
        candidate.set_bit(bits - 2, true);
        candidate.set_bit(0, true);
        if is_probable_prime(&candidate, MILLER_RABIN_ROUNDS, rng) {
            return candidate;
        }
    }
}

/// `00 01 ff .. ff 00 || label || SHA-256(message)`, `len` bytes long.
fn encode_digest(message: &[u8], len: usize) -> BigUint {
    let digest = Sha256::digest(message);
    let tail = DIGEST_LABEL.len() + digest.len();
    let mut block = Vec::with_capacity(len);
    block.extend_from_slice(&[0x00, 0x01]);
    block.resize(len - tail - 1, 0xff);
    block.push(0x00);
    block.extend_from_slice(DIGEST_LABEL);
    block.extend_from_slice(&digest);
    BigUint::from_bytes_be(&block)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::sync::OnceLock;

    fn key() -> &'static SignatureKeypair {
        static KEY: OnceLock<SignatureKeypair> = OnceLock::new();
        KEY.get_or_init(|| SignatureKeypair::generate(512, b"alice").unwrap())
    }

    #[test]
    fn sign_then_verify() {
        let sig = key().sign(b"hello").unwrap();
        assert_eq!(sig.len(), 64);
        assert!(key().public().verify(b"hello", &sig));
    }

    #[test]
    fn flipped_message_bit_fails() {
        let sig = key().sign(b"hello").unwrap();
        assert!(!key().public().verify(b"hellp", &sig));
        let mut bad = sig.clone();
        bad[10] ^= 1;
        assert!(!key().public().verify(b"hello", &bad));
    }

    #[test]
    fn wrong_key_fails() {
        let other = SignatureKeypair::generate(512, b"bob").unwrap();
        let sig = key().sign(b"hello").unwrap();
        assert!(!other.public().verify(b"hello", &sig));
    }

    #[test]
    fn malformed_keys() {
        assert_eq!(
            SignatureKeypair::generate(256, b"x"),
            Err(SignatureError::ModulusTooSmall(256))
        );
        let small = PublicKey {
            modulus: BigUint::from(1081u32),
            exponent: BigUint::from(3u8),
        };
        assert!(!small.verify(b"m", &[0u8; 2]));
        let even = PublicKey {
            modulus: key().public.modulus.clone(),
            exponent: BigUint::from(4u8),
        };
        assert_eq!(
            SignatureKeypair::from_parts(even, BigUint::one()),
            Err(SignatureError::BadExponent)
        );
        assert_eq!(
            SignatureKeypair::from_parts(key().public.clone(), BigUint::from(3u8)),
            Err(SignatureError::KeyMismatch)
        );
    }

    #[test]
    fn generation_is_deterministic() {
        assert_eq!(SignatureKeypair::generate(512, b"alice").unwrap(), *key());
    }
}
