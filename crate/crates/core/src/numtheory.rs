//! Big-integer number theory: safe primes, modular arithmetic and the
//! selection of mutually independent RSA exponents.

use std::sync::OnceLock;

use num_bigint::{BigInt, BigUint, RandBigInt, Sign};
use num_integer::Integer;
use num_traits::{One, ToPrimitive, Zero};
use rand::{Rng, RngCore};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::seed::seeded_rng;
use crate::wallet_store::HexBig;

/// Miller-Rabin rounds used for every primality decision (error < 4^-40).
pub const MILLER_RABIN_ROUNDS: usize = 40;

/// Smallest bit length accepted by [`gen_safe_prime`].
pub const MIN_SAFE_PRIME_BITS: u64 = 6;

/// Below this many bits, safe primes are found by exhaustive trial division.
const EXHAUSTIVE_BITS: u64 = 20;

const SIEVE_LIMIT: u64 = 2048;

/// Primes below this size are hand-sized fixtures such as (23, 47); they
/// may differ in length by one bit. Anything larger must match exactly.
const FIXTURE_BITS: u64 = 16;

fn balanced(p_bits: u64, q_bits: u64) -> bool {
    if p_bits.max(q_bits) < FIXTURE_BITS {
        p_bits.abs_diff(q_bits) <= 1
    } else {
        p_bits == q_bits
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum NumTheoryError {
    #[error("{0} is not invertible modulo {1} (gcd = {2})")]
    NotInvertible(BigUint, BigUint, BigUint),
    #[error("safe prime bit length {0} is below the minimum of {MIN_SAFE_PRIME_BITS}")]
    BitsTooSmall(u64),
    #[error("no {bits}-bit safe prime found after {candidates} candidates")]
    SearchExhausted { bits: u64, candidates: u64 },
    #[error("{0} is not a safe prime")]
    NotSafePrime(BigUint),
    #[error("modulus primes must differ")]
    EqualPrimes,
    #[error("modulus primes have unequal bit lengths ({0} and {1})")]
    UnequalBitLength(u64, u64),
    #[error("exponent {0} is not an odd prime")]
    ExponentNotOddPrime(BigUint),
    #[error("exponent {0} appears more than once")]
    DuplicateExponent(BigUint),
    #[error("exponent {0} shares a factor with the totient")]
    ExponentNotCoprime(BigUint),
    #[error("exponent set must not be empty")]
    EmptyExponentSet,
}

/// `x^e mod m`.
pub fn mod_pow(x: &BigUint, e: &BigUint, m: &BigUint) -> BigUint {
    x.modpow(e, m)
}

/// Inverse of `c` modulo `m` by the extended Euclidean algorithm.
pub fn mod_inv(c: &BigUint, m: &BigUint) -> Result<BigUint, NumTheoryError> {
    let modulus = BigInt::from_biguint(Sign::Plus, m.clone());
    let (mut old_r, mut r) = (BigInt::from_biguint(Sign::Plus, c % m), modulus.clone());
    let (mut old_s, mut s) = (BigInt::one(), BigInt::zero());
    while !r.is_zero() {
        let quotient = &old_r / &r;
        let next_r = &old_r - &quotient * &r;
        old_r = std::mem::replace(&mut r, next_r);
        let next_s = &old_s - &quotient * &s;
        old_s = std::mem::replace(&mut s, next_s);
    }
    if !old_r.is_one() {
        let gcd = old_r.magnitude().clone();
        return Err(NumTheoryError::NotInvertible(c.clone(), m.clone(), gcd));
    }
    let inv = old_s.mod_floor(&modulus);
    Ok(inv.magnitude().clone())
}

fn small_primes() -> &'static [u64] {
    static PRIMES: OnceLock<Vec<u64>> = OnceLock::new();
    PRIMES.get_or_init(|| primes_below(SIEVE_LIMIT))
}

fn primes_below(limit: u64) -> Vec<u64> {
    let limit = limit as usize;
    let mut composite = vec![false; limit];
    let mut primes = Vec::new();
    for i in 2..limit {
        if !composite[i] {
            primes.push(i as u64);
            let mut j = i * i;
            while j < limit {
                composite[j] = true;
                j += i;
            }
        }
    }
    primes
}

fn is_prime_u64(n: u64) -> bool {
    if n < 2 {
        return false;
    }
    if n.is_multiple_of(2) {
        return n == 2;
    }
    let mut d = 3u64;
    while d.saturating_mul(d) <= n {
        if n.is_multiple_of(d) {
            return false;
        }
        d += 2;
    }
    true
}

/// Trial division by small primes followed by `rounds` Miller-Rabin rounds
/// with bases drawn from `rng`.
pub fn is_probable_prime<R: RngCore + ?Sized>(n: &BigUint, rounds: usize, rng: &mut R) -> bool {
    if let Some(small) = n.to_u64() {
        if small < SIEVE_LIMIT * SIEVE_LIMIT {
            return is_prime_u64(small);
        }
    }
    for &p in small_primes() {
        if (n % p).is_zero() {
            return false;
        }
    }
    miller_rabin(n, rounds, rng)
}

fn miller_rabin<R: RngCore + ?Sized>(n: &BigUint, rounds: usize, rng: &mut R) -> bool {
    let one = BigUint::one();
    let n_minus_one = n - &one;
    let shift = n_minus_one.trailing_zeros().unwrap_or(0);
    let d = &n_minus_one >> shift;
    let two = BigUint::from(2u8);
    'witness: for round in 0..rounds {
        let base = if round == 0 {
            two.clone()
        } else {
            rng.gen_biguint_range(&two, &n_minus_one)
        };
        let mut x = base.modpow(&d, n);
        if x == one || x == n_minus_one {
            continue;
        }
        for _ in 1..shift {
            x = x.modpow(&two, n);
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

/// `p` prime and `(p-1)/2` prime.
pub fn is_safe_prime<R: RngCore + ?Sized>(p: &BigUint, rng: &mut R) -> bool {
    if p < &BigUint::from(5u8) || p.is_even() {
        return false;
    }
    let half = p >> 1u32;
    is_probable_prime(&half, MILLER_RABIN_ROUNDS, rng) && is_probable_prime(p, MILLER_RABIN_ROUNDS, rng)
}

/// Generates a safe prime of exactly `bits` bits from a seeded stream.
pub fn gen_safe_prime(bits: u64, seed: &[u8]) -> Result<BigUint, NumTheoryError> {
    let mut rng = seeded_rng(seed);
    gen_safe_prime_with(bits, &mut rng, default_candidate_budget(bits))
}

fn default_candidate_budget(bits: u64) -> u64 {
    200 * bits * bits
}

/// Searches for a `bits`-bit safe prime, giving up after `max_candidates`
/// sophie-germain candidates have been considered.
pub fn gen_safe_prime_with<R: RngCore + ?Sized>(
    bits: u64,
    rng: &mut R,
    max_candidates: u64,
) -> Result<BigUint, NumTheoryError> {
    if bits < MIN_SAFE_PRIME_BITS {
        return Err(NumTheoryError::BitsTooSmall(bits));
    }
    if bits <= EXHAUSTIVE_BITS {
        return small_safe_prime(bits, rng, max_candidates);
    }
    let half_bits = bits - 1;
    let primes = small_primes();
    let mut examined = 0u64;
    while examined < max_candidates {
        // Random odd `q` with exactly `bits - 1` bits; `p = 2q + 1` then has `bits` bits.
        // The top two bits are set so the product of two such primes has
        // exactly `2 * bits` bits.
        let mut q = rng.gen_biguint(half_bits);
        q.set_bit(half_bits - 1, true);
        q.set_bit(half_bits - 2, true);
        q.set_bit(0, true);
        let residues: Vec<u64> = primes.iter().map(|&s| (&q % s).to_u64().unwrap()).collect();
        let mut offset = 0u64;
        loop {
            if examined >= max_candidates {
                break;
            }
            let candidate = &q + offset;
            if candidate.bits() != half_bits {
                break;
            }
            examined += 1;
            let sieved = primes.iter().zip(&residues).all(|(&s, &r)| {
                let rem = (r + offset % s) % s;
                // q ≢ 0 and 2q + 1 ≢ 0 (mod s)
                rem != 0 && !(2 * rem + 1).is_multiple_of(s)
            });
            if sieved {
                let p: BigUint = (&candidate << 1u32) + 1u32;
                if fermat_base2(&p)
                    && miller_rabin(&candidate, MILLER_RABIN_ROUNDS, rng)
                    && miller_rabin(&p, MILLER_RABIN_ROUNDS, rng)
                {
                    return Ok(p);
                }
            }
            offset += 2;
        }
    }
    Err(NumTheoryError::SearchExhausted {
        bits,
        candidates: examined,
    })
}

fn fermat_base2(p: &BigUint) -> bool {
    let two = BigUint::from(2u8);
    two.modpow(&(p - 1u32), p).is_one()
}

fn small_safe_prime<R: RngCore + ?Sized>(
    bits: u64,
    rng: &mut R,
    max_candidates: u64,
) -> Result<BigUint, NumTheoryError> {
    let low = 1u64 << (bits - 1);
    let span = low;
    let start = rng.gen_range(0..span);
    let mut examined = 0u64;
    for step in 0..span {
        if examined >= max_candidates {
            break;
        }
        examined += 1;
        let p = low + (start + step) % span;
        if p % 2 == 1 && is_prime_u64(p) && is_prime_u64(p / 2) {
            return Ok(BigUint::from(p));
        }
    }
    Err(NumTheoryError::SearchExhausted {
        bits,
        candidates: examined,
    })
}

/// Bit length of the two primes and nothing else; profiles are plain data.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Profile {
    pub name: &'static str,
    pub prime_bits: u64,
}

impl Profile {
    /// Small moduli for cross-checking against exhaustive oracles.
    pub const TOY: Profile = Profile {
        name: "toy",
        prime_bits: 24,
    };
    pub const DEMO: Profile = Profile {
        name: "demo",
        prime_bits: 512,
    };

    pub fn by_name(name: &str) -> Option<Profile> {
        match name {
            "toy" => Some(Self::TOY),
            "demo" => Some(Self::DEMO),
            _ => None,
        }
    }
}

/// RSA modulus built from two safe primes, together with its totient.
/// Holding this value is what lets the bank invert the chain functions.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "TrapdoorRepr", into = "TrapdoorRepr")]
pub struct TrapdoorModulus {
    p: BigUint,
    q: BigUint,
    modulus: BigUint,
    totient: BigUint,
}

/// Only the primes are stored; everything else is recomputed and checked.
#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct TrapdoorRepr {
    #[serde(with = "crate::wallet_store::hex_biguint")]
    p: BigUint,
    #[serde(with = "crate::wallet_store::hex_biguint")]
    q: BigUint,
}

impl TryFrom<TrapdoorRepr> for TrapdoorModulus {
    type Error = NumTheoryError;

    fn try_from(repr: TrapdoorRepr) -> Result<Self, Self::Error> {
        TrapdoorModulus::new(repr.p, repr.q)
    }
}

impl From<TrapdoorModulus> for TrapdoorRepr {
    fn from(t: TrapdoorModulus) -> Self {
        TrapdoorRepr { p: t.p, q: t.q }
    }
}

impl TrapdoorModulus {
    /// Checks both primes are safe, distinct and of equal length (primes
    /// below 16 bits may differ by one bit).
    pub fn new(p: BigUint, q: BigUint) -> Result<Self, NumTheoryError> {
        if p == q {
            return Err(NumTheoryError::EqualPrimes);
        }
        if !balanced(p.bits(), q.bits()) {
            return Err(NumTheoryError::UnequalBitLength(p.bits(), q.bits()));
        }
        let mut rng = seeded_rng(b"mdhc-safe-prime-check");
        for prime in [&p, &q] {
            if !is_safe_prime(prime, &mut rng) {
                return Err(NumTheoryError::NotSafePrime(prime.clone()));
            }
        }
        Ok(Self::from_parts(p, q))
    }

    fn from_parts(p: BigUint, q: BigUint) -> Self {
        let modulus = &p * &q;
        let totient = (&p - 1u32) * (&q - 1u32);
        TrapdoorModulus { p, q, modulus, totient }
    }

    /// Two distinct safe primes of `prime_bits` bits drawn from `seed`.
    pub fn generate(prime_bits: u64, seed: &[u8]) -> Result<Self, NumTheoryError> {
        let mut rng = seeded_rng(seed);
        let budget = default_candidate_budget(prime_bits);
        let p = gen_safe_prime_with(prime_bits, &mut rng, budget)?;
        loop {
            let q = gen_safe_prime_with(prime_bits, &mut rng, budget)?;
            if q != p {
                return Ok(Self::from_parts(p, q));
            }
        }
    }

    pub fn p(&self) -> &BigUint {
        &self.p
    }

    pub fn q(&self) -> &BigUint {
        &self.q
    }

    /// `M = p q`.
    pub fn modulus(&self) -> &BigUint {
        &self.modulus
    }

    /// `E = (p - 1)(q - 1)`.
    pub fn totient(&self) -> &BigUint {
        &self.totient
    }

    pub fn prime_bits(&self) -> u64 {
        self.p.bits()
    }
}

/// Ordered public exponents `c_1..c_m`: distinct odd primes, so none divides
/// the product of the others.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "Vec<HexBig>", into = "Vec<HexBig>")]
pub struct ExponentSet(Vec<BigUint>);

impl TryFrom<Vec<HexBig>> for ExponentSet {
    type Error = NumTheoryError;

    fn try_from(values: Vec<HexBig>) -> Result<Self, Self::Error> {
        ExponentSet::new(values.into_iter().map(|h| h.0).collect())
    }
}

impl From<ExponentSet> for Vec<HexBig> {
    fn from(set: ExponentSet) -> Self {
        set.0.into_iter().map(HexBig).collect()
    }
}

impl ExponentSet {
    pub fn new(exponents: Vec<BigUint>) -> Result<Self, NumTheoryError> {
        if exponents.is_empty() {
            return Err(NumTheoryError::EmptyExponentSet);
        }
        let mut rng = seeded_rng(b"mdhc-exponent-check");
        for (i, c) in exponents.iter().enumerate() {
            if c.is_even() || !is_probable_prime(c, MILLER_RABIN_ROUNDS, &mut rng) {
                return Err(NumTheoryError::ExponentNotOddPrime(c.clone()));
            }
            if exponents[..i].contains(c) {
                return Err(NumTheoryError::DuplicateExponent(c.clone()));
            }
        }
        Ok(ExponentSet(exponents))
    }

    pub fn from_u64s(exponents: &[u64]) -> Result<Self, NumTheoryError> {
        Self::new(exponents.iter().map(|&c| BigUint::from(c)).collect())
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn get(&self, i: usize) -> Option<&BigUint> {
        self.0.get(i)
    }

    pub fn as_slice(&self) -> &[BigUint] {
        &self.0
    }

    pub fn iter(&self) -> std::slice::Iter<'_, BigUint> {
        self.0.iter()
    }

    /// First `k` exponents as their own set.
    pub fn prefix(&self, k: usize) -> Option<ExponentSet> {
        (k >= 1 && k <= self.0.len()).then(|| ExponentSet(self.0[..k].to_vec()))
    }

    /// Every exponent must be invertible modulo the totient.
    pub fn check_coprime(&self, totient: &BigUint) -> Result<(), NumTheoryError> {
        match self.0.iter().find(|c| !c.gcd(totient).is_one()) {
            Some(c) => Err(NumTheoryError::ExponentNotCoprime(c.clone())),
            None => Ok(()),
        }
    }
}

/// The `m` smallest odd primes that do not divide the totient.
pub fn select_exponents(m: usize, modulus: &TrapdoorModulus) -> ExponentSet {
    select_exponents_for_totient(m, modulus.totient())
}

pub(crate) fn select_exponents_for_totient(m: usize, totient: &BigUint) -> ExponentSet {
    let mut chosen = Vec::with_capacity(m);
    let mut candidate = 3u64;
    while chosen.len() < m {
        if is_prime_u64(candidate) && !(totient % candidate).is_zero() {
            chosen.push(BigUint::from(candidate));
        }
        candidate += 2;
    }
    ExponentSet(chosen)
}
