//! Single-coin scheme. From one random `X_N` the bank derives `m` coins
//! `X_i = X_N^{C / c_i}` with `C = prod c_j (mod E)`; each satisfies
//! `X_i^{c_i} = X_0`, so a coin verifies with one exponentiation against the
//! published root.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use num_bigint::BigUint;
use rand::RngCore;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::bank::{draw_start, Bank, BankEvent, CoinTags, PublicParams, Rejection, RootId, StateError};
use crate::chain::{exponent_product, OpCounter};
use crate::numtheory::{mod_inv, mod_pow, NumTheoryError};

/// Registry key for a single coin.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CoinId {
    pub root_id: RootId,
    pub exponent_index: u32,
}

impl fmt::Display for CoinId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}", self.root_id.short(), self.exponent_index)
    }
}

/// A coin `(X_i, c_i)`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CoinS1 {
    #[serde(with = "crate::wallet_store::hex_biguint")]
    pub value: BigUint,
    #[serde(with = "crate::wallet_store::hex_biguint")]
    pub exponent: BigUint,
    pub exponent_index: u32,
    pub root_id: RootId,
    pub batch_id: u64,
    #[serde(default, skip_serializing_if = "is_untagged")]
    pub tags: CoinTags,
}

pub(crate) fn is_untagged(tags: &CoinTags) -> bool {
    *tags == CoinTags::default()
}

impl CoinS1 {
    pub fn id(&self) -> CoinId {
        CoinId {
            root_id: self.root_id,
            exponent_index: self.exponent_index,
        }
    }
}

/// One minted batch as handed to the buyer.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct S1Batch {
    pub batch_id: u64,
    #[serde(with = "crate::wallet_store::hex_biguint")]
    pub root: BigUint,
    pub root_id: RootId,
    pub coins: Vec<CoinS1>,
}

/// A root in the public list, with the metadata coins are checked against.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PublishedRoot {
    pub batch_id: u64,
    #[serde(with = "crate::wallet_store::hex_biguint")]
    pub value: BigUint,
    pub coins: u32,
    #[serde(default)]
    pub tags: CoinTags,
}

pub type RootList = BTreeMap<RootId, PublishedRoot>;

/// Published roots plus the spent/unspent status of every coin.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct BankRegistryS1 {
    roots: RootList,
    unspent: BTreeSet<CoinId>,
    deposited: BTreeSet<CoinId>,
    refunded: BTreeSet<CoinId>,
    minted: u64,
}

impl BankRegistryS1 {
    pub fn roots(&self) -> &RootList {
        &self.roots
    }

    pub fn is_unspent(&self, id: &CoinId) -> bool {
        self.unspent.contains(id)
    }

    pub fn is_deposited(&self, id: &CoinId) -> bool {
        self.deposited.contains(id)
    }

    pub fn minted(&self) -> u64 {
        self.minted
    }

    pub fn unspent_count(&self) -> u64 {
        self.unspent.len() as u64
    }

    pub fn deposited_count(&self) -> u64 {
        self.deposited.len() as u64
    }

    pub fn refunded_count(&self) -> u64 {
        self.refunded.len() as u64
    }

    pub(crate) fn check_mint(&self, root: &BigUint) -> Result<(), StateError> {
        let id = RootId::of(root);
        if self.roots.contains_key(&id) {
            return Err(StateError::DuplicateRoot(id));
        }
        Ok(())
    }

    pub(crate) fn apply_mint(&mut self, batch_id: u64, root: &BigUint, coins: u32, tags: &CoinTags) {
        let root_id = RootId::of(root);
        self.roots.insert(
            root_id,
            PublishedRoot {
                batch_id,
                value: root.clone(),
                coins,
                tags: tags.clone(),
            },
        );
        self.unspent.extend((0..coins).map(|exponent_index| CoinId {
            root_id,
            exponent_index,
        }));
        self.minted += coins as u64;
    }

    pub(crate) fn apply_deposit(&mut self, coin: &CoinId) -> Result<(), StateError> {
        if !self.unspent.remove(coin) {
            return Err(StateError::CoinNotUnspent(*coin));
        }
        self.deposited.insert(*coin);
        Ok(())
    }

    pub(crate) fn apply_refund(&mut self, coins: &[CoinId]) -> Result<(), StateError> {
        let distinct: BTreeSet<_> = coins.iter().collect();
        if distinct.len() != coins.len() {
            return Err(StateError::Malformed("refund lists a coin twice"));
        }
        if let Some(bad) = coins.iter().find(|c| !self.unspent.contains(c)) {
            return Err(StateError::CoinNotUnspent(*bad));
        }
        for c in coins {
            self.unspent.remove(c);
            self.refunded.insert(*c);
        }
        Ok(())
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum S1Error {
    #[error("a batch needs at least {min} coins, asked for {asked}")]
    TooFewCoins { min: usize, asked: usize },
    #[error("bank has only {available} exponents, asked for {asked}")]
    TooManyCoins { available: usize, asked: usize },
    #[error("starting value yields repeated or trivial coins")]
    DegenerateStart,
    #[error(transparent)]
    NumTheory(#[from] NumTheoryError),
    #[error(transparent)]
    State(#[from] StateError),
}

/// Smallest batch [`Bank::mint_batch_s1`] will produce.
pub const MIN_BATCH: usize = 2;

/// Coin values for the first `count` exponents from starting value `start`.
/// Returns `(X_0, [X_1..X_count])`.
pub(crate) fn derive_coins(
    bank: &Bank,
    start: &BigUint,
    count: usize,
    counter: &mut OpCounter,
) -> Result<(BigUint, Vec<BigUint>), S1Error> {
    let issuer = bank.issuer();
    let exponents = issuer.exponents().prefix(count).ok_or(S1Error::TooManyCoins {
        available: issuer.exponents().len(),
        asked: count,
    })?;
    let totient = issuer.trapdoor().totient();
    let modulus = issuer.modulus();
    if start <= &BigUint::from(1u8) || start >= &(modulus - 1u32) {
        return Err(S1Error::DegenerateStart);
    }
    let product = exponent_product(exponents.iter().map(|c| (c, 1)), totient, counter);
    counter.modexp += 1;
    let root = mod_pow(start, &product, modulus);
    let mut coins = Vec::with_capacity(count);
    for c in exponents.iter() {
        let inverse = mod_inv(c, totient)?;
        counter.modmul += 1;
        let exponent = (&product * inverse) % totient;
        counter.modexp += 1;
        coins.push(mod_pow(start, &exponent, modulus));
    }
    let mut seen: BTreeSet<&BigUint> = BTreeSet::new();
    seen.insert(&root);
    if root <= BigUint::from(1u8) || !coins.iter().all(|x| seen.insert(x)) {
        return Err(S1Error::DegenerateStart);
    }
    Ok((root, coins))
}

/// Verifies a coin against the root list with one exponentiation.
pub fn verify_coin_s1(
    params: &PublicParams,
    roots: &RootList,
    coin: &CoinS1,
    counter: &mut OpCounter,
) -> Result<(), Rejection> {
    let published = roots.get(&coin.root_id).ok_or(Rejection::UnknownRoot)?;
    if coin.exponent_index >= published.coins || params.exponent(coin.exponent_index) != Some(&coin.exponent) {
        return Err(Rejection::WrongExponent);
    }
    if coin.batch_id != published.batch_id || coin.tags != published.tags {
        return Err(Rejection::TagMismatch);
    }
    counter.modexp += 1;
    if mod_pow(&coin.value, &coin.exponent, &params.modulus) != published.value {
        return Err(Rejection::BadValue);
    }
    Ok(())
}

impl Bank {
    /// Mints one coin per exponent from a fresh random starting value.
    pub fn mint_batch_s1<R: RngCore + ?Sized>(&mut self, rng: &mut R, tags: CoinTags) -> Result<S1Batch, S1Error> {
        let count = self.issuer().exponents().len();
        self.mint_coins_s1(rng, count, tags, &mut OpCounter::new())
    }

    /// Mints `count` coins using the first `count` exponents.
    pub fn mint_coins_s1<R: RngCore + ?Sized>(
        &mut self,
        rng: &mut R,
        count: usize,
        tags: CoinTags,
        counter: &mut OpCounter,
    ) -> Result<S1Batch, S1Error> {
        if count < MIN_BATCH {
            return Err(S1Error::TooFewCoins {
                min: MIN_BATCH,
                asked: count,
            });
        }
        self.mint_from_rng(rng, count, tags, counter)
    }

    fn mint_from_rng<R: RngCore + ?Sized>(
        &mut self,
        rng: &mut R,
        count: usize,
        tags: CoinTags,
        counter: &mut OpCounter,
    ) -> Result<S1Batch, S1Error> {
        loop {
            let start = draw_start(rng, self.issuer().modulus());
            match self.mint_batch_s1_from_start(&start, count, tags.clone(), counter) {
                Err(S1Error::DegenerateStart) => continue,
                Err(S1Error::State(StateError::DuplicateRoot(_))) => continue,
                other => return other,
            }
        }
    }

    /// Mints from a caller-chosen starting value.
    pub fn mint_batch_s1_from_start(
        &mut self,
        start: &BigUint,
        count: usize,
        tags: CoinTags,
        counter: &mut OpCounter,
    ) -> Result<S1Batch, S1Error> {
        let (root, values) = derive_coins(self, start, count, counter)?;
        let batch_id = self.state().next_batch_id();
        self.commit(BankEvent::MintS1 {
            batch_id,
            root: root.clone(),
            coins: count as u32,
            tags: tags.clone(),
        })?;
        let root_id = RootId::of(&root);
        let exponents = self.issuer().exponents().clone();
        let coins = values
            .into_iter()
            .zip(exponents.iter())
            .enumerate()
            .map(|(i, (value, c))| CoinS1 {
                value,
                exponent: c.clone(),
                exponent_index: i as u32,
                root_id,
                batch_id,
                tags: tags.clone(),
            })
            .collect();
        Ok(S1Batch {
            batch_id,
            root,
            root_id,
            coins,
        })
    }

    /// Redeems one coin for `vendor`: credits one unit, or rejects it as
    /// invalid or already spent. The registry is only touched on success.
    pub fn deposit_coin_s1(&mut self, coin: &CoinS1, vendor: &str) -> Result<u64, Rejection> {
        let public = self.public();
        verify_coin_s1(&public, self.state().s1.roots(), coin, &mut OpCounter::new())?;
        if !coin.tags.admits_vendor(vendor) {
            return Err(Rejection::VendorMismatch);
        }
        if !self.state().s1.is_unspent(&coin.id()) {
            return Err(Rejection::DoubleSpent);
        }
        self.commit(BankEvent::DepositS1 {
            coin: coin.id(),
            vendor: vendor.to_string(),
        })
        .map_err(|_| Rejection::DoubleSpent)?;
        Ok(1)
    }

    /// Takes back unspent coins and issues the same number of fresh ones.
    /// Either every coin is exchanged or none is.
    pub fn refund_unspent<R: RngCore + ?Sized>(
        &mut self,
        coins: &[CoinS1],
        rng: &mut R,
    ) -> Result<Vec<CoinS1>, Rejection> {
        if coins.is_empty() {
            return Ok(Vec::new());
        }
        let public = self.public();
        let mut ids = BTreeSet::new();
        for coin in coins {
            verify_coin_s1(&public, self.state().s1.roots(), coin, &mut OpCounter::new())?;
            if !self.state().s1.is_unspent(&coin.id()) || !ids.insert(coin.id()) {
                return Err(Rejection::DoubleSpent);
            }
        }
        if coins.len() > self.issuer().exponents().len() {
            return Err(Rejection::WrongExponent);
        }
        let ids: Vec<CoinId> = coins.iter().map(CoinS1::id).collect();
        self.commit(BankEvent::RefundS1 { coins: ids })
            .map_err(|_| Rejection::DoubleSpent)?;
        let batch = self
            .mint_from_rng(rng, coins.len(), CoinTags::default(), &mut OpCounter::new())
            .expect("replacement mint uses already validated parameters");
        Ok(batch.coins)
    }
}

/// Vendor side of S1: a copy of the root list and the coins already taken.
#[derive(Debug, Clone)]
pub struct S1Vendor {
    id: String,
    params: PublicParams,
    roots: RootList,
    received: BTreeSet<CoinId>,
}

impl S1Vendor {
    pub fn new(id: impl Into<String>, params: PublicParams, roots: RootList) -> Self {
        S1Vendor {
            id: id.into(),
            params,
            roots,
            received: BTreeSet::new(),
        }
    }

    /// Restores the set of coins taken in earlier sessions.
    pub fn with_received(mut self, coins: impl IntoIterator<Item = CoinId>) -> Self {
        self.received.extend(coins);
        self
    }

    pub fn id(&self) -> &str {
        &self.id
    }

    pub fn refresh_roots(&mut self, roots: &RootList) {
        self.roots = roots.clone();
    }

    /// Takes a coin in payment. Coins bound to this vendor are checked
    /// against the vendor's own history; any other coin needs the bank's
    /// unspent list (`online`).
    pub fn accept(&mut self, coin: &CoinS1, online: Option<&BankRegistryS1>) -> Result<(), Rejection> {
        if !coin.tags.admits_vendor(&self.id) {
            return Err(Rejection::VendorMismatch);
        }
        verify_coin_s1(&self.params, &self.roots, coin, &mut OpCounter::new())?;
        if self.received.contains(&coin.id()) {
            return Err(Rejection::DoubleSpent);
        }
        let vendor_specific = coin.tags.vendor.as_deref() == Some(self.id.as_str());
        if !vendor_specific {
            match online {
                Some(registry) if registry.is_unspent(&coin.id()) => {}
                Some(_) => return Err(Rejection::DoubleSpent),
                None => return Err(Rejection::NeedsOnlineCheck),
            }
        }
        self.received.insert(coin.id());
        Ok(())
    }
}
