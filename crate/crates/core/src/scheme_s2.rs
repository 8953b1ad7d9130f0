//! Coin-chain scheme. One random `X_N` yields `m` chains; chain `i` starts at
//! `X_i = X_N^{C c_i^{-n}}` with `C = prod c_j^n (mod E)` and holds the coins
//! `x_{i,j}` for `j = 1..n`, where `x_{i,j} = x_{i,j+1}^{c_i}` and
//! `x_{i,0} = X_0`. Coins inside a chain are checked by a single hash against
//! the previous coin; the bank tracks chains, not coins.

use std::collections::BTreeMap;
use std::fmt;

use num_bigint::BigUint;
use rand::RngCore;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::bank::{draw_start, Bank, BankEvent, CoinTags, PublicParams, Rejection, RootId, StateError};
use crate::chain::{exponent_product, OpCounter};
use crate::numtheory::{mod_inv, mod_pow, NumTheoryError};
use crate::scheme_s1::is_untagged;

/// Registry key for one coin chain.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChainId {
    pub root_id: RootId,
    pub exponent_index: u32,
}

impl fmt::Display for ChainId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}", self.root_id.short(), self.exponent_index)
    }
}

/// What the customer buys: the chain start `X_i` and its length.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CoinChainHandle {
    #[serde(with = "crate::wallet_store::hex_biguint")]
    pub start: BigUint,
    #[serde(with = "crate::wallet_store::hex_biguint")]
    pub exponent: BigUint,
    pub exponent_index: u32,
    pub length: u64,
    pub root_id: RootId,
    pub batch_id: u64,
    #[serde(default, skip_serializing_if = "is_untagged")]
    pub tags: CoinTags,
}

impl CoinChainHandle {
    pub fn id(&self) -> ChainId {
        ChainId {
            root_id: self.root_id,
            exponent_index: self.exponent_index,
        }
    }
}

/// Coin `(x_{i,j}, c_i, j)`; positions run from 1 to the chain length.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChainCoin {
    #[serde(with = "crate::wallet_store::hex_biguint")]
    pub value: BigUint,
    #[serde(with = "crate::wallet_store::hex_biguint")]
    pub exponent: BigUint,
    pub exponent_index: u32,
    pub position: u64,
    pub root_id: RootId,
}

impl ChainCoin {
    pub fn chain_id(&self) -> ChainId {
        ChainId {
            root_id: self.root_id,
            exponent_index: self.exponent_index,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct S2Batch {
    pub batch_id: u64,
    #[serde(with = "crate::wallet_store::hex_biguint")]
    pub root: BigUint,
    pub root_id: RootId,
    pub length: u64,
    pub chains: Vec<CoinChainHandle>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PublishedChainRoot {
    pub batch_id: u64,
    #[serde(with = "crate::wallet_store::hex_biguint")]
    pub value: BigUint,
    pub chains: u32,
    pub length: u64,
    #[serde(default)]
    pub tags: CoinTags,
}

pub type ChainRootList = BTreeMap<RootId, PublishedChainRoot>;

/// Lifecycle of a chain at the bank.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ChainState {
    /// Sold but not yet spent; holds the first coin `x_{i,1}`.
    Unused { first_coin: BigUint },
    /// First coin accepted by a vendor, nothing redeemed yet.
    Claimed { vendor: String },
    /// Redeemed up to `highest` by `vendor`.
    Redeemed { vendor: String, highest: u64 },
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct BankRegistryS2 {
    roots: ChainRootList,
    chains: BTreeMap<ChainId, ChainState>,
}

impl BankRegistryS2 {
    pub fn roots(&self) -> &ChainRootList {
        &self.roots
    }

    pub fn chain(&self, id: &ChainId) -> Option<&ChainState> {
        self.chains.get(id)
    }

    /// Number of per-chain entries held.
    pub fn len(&self) -> usize {
        self.chains.len()
    }

    pub fn is_empty(&self) -> bool {
        self.chains.is_empty()
    }

    pub fn unused_count(&self) -> usize {
        self.chains
            .values()
            .filter(|s| matches!(s, ChainState::Unused { .. }))
            .count()
    }

    pub(crate) fn check_mint(&self, root: &BigUint) -> Result<(), StateError> {
        let id = RootId::of(root);
        if self.roots.contains_key(&id) {
            return Err(StateError::DuplicateRoot(id));
        }
        Ok(())
    }

    pub(crate) fn apply_mint(
        &mut self,
        batch_id: u64,
        root: &BigUint,
        length: u64,
        first_coins: &[BigUint],
        tags: &CoinTags,
    ) {
        let root_id = RootId::of(root);
        self.roots.insert(
            root_id,
            PublishedChainRoot {
                batch_id,
                value: root.clone(),
                chains: first_coins.len() as u32,
                length,
                tags: tags.clone(),
            },
        );
        for (i, first_coin) in first_coins.iter().enumerate() {
            let id = ChainId {
                root_id,
                exponent_index: i as u32,
            };
            self.chains.insert(
                id,
                ChainState::Unused {
                    first_coin: first_coin.clone(),
                },
            );
        }
    }

    pub(crate) fn apply_claim(&mut self, id: &ChainId, vendor: &str) -> Result<(), StateError> {
        match self.chains.get_mut(id) {
            Some(state @ ChainState::Unused { .. }) => {
                *state = ChainState::Claimed {
                    vendor: vendor.to_string(),
                };
                Ok(())
            }
            _ => Err(StateError::ChainState(*id)),
        }
    }

    /// Records a redemption at `position` and returns the units newly credited.
    pub(crate) fn apply_redeem(&mut self, id: &ChainId, vendor: &str, position: u64) -> Result<u64, StateError> {
        let length = self
            .roots
            .get(&id.root_id)
            .map(|r| r.length)
            .ok_or(StateError::ChainState(*id))?;
        let state = self.chains.get_mut(id).ok_or(StateError::ChainState(*id))?;
        let previous = match state {
            ChainState::Unused { .. } => 0,
            ChainState::Claimed { vendor: v } if v == vendor => 0,
            ChainState::Redeemed { vendor: v, highest } if v == vendor => *highest,
            _ => return Err(StateError::ChainState(*id)),
        };
        if position <= previous || position > length {
            return Err(StateError::BadPosition {
                position,
                previous,
                length,
            });
        }
        *state = ChainState::Redeemed {
            vendor: vendor.to_string(),
            highest: position,
        };
        Ok(position - previous)
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum S2Error {
    #[error("a mint needs at least 2 chains, bank has {0} exponents")]
    TooFewChains(usize),
    #[error("chain length must be at least 1")]
    ZeroLength,
    #[error("chain length {0} exceeds the limit of {MAX_CHAIN_LENGTH}")]
    TooLong(u64),
    #[error("modulus must be at least 3")]
    ModulusTooSmall,
    #[error("starting value yields repeated or trivial chains")]
    DegenerateStart,
    #[error("all {0} coins of this chain are spent")]
    Exhausted(u64),
    #[error(transparent)]
    NumTheory(#[from] NumTheoryError),
    #[error(transparent)]
    State(#[from] StateError),
}

/// Longest chain a customer will expand; every coin of a chain is kept in
/// memory.
pub const MAX_CHAIN_LENGTH: u64 = 1 << 20;

fn check_length(length: u64) -> Result<(), S2Error> {
    match length {
        0 => Err(S2Error::ZeroLength),
        n if n > MAX_CHAIN_LENGTH => Err(S2Error::TooLong(n)),
        _ => Ok(()),
    }
}

/// Vendor behaviour when a coin skips positions.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub enum GapPolicy {
    /// Only the immediately following position is accepted.
    #[default]
    Strict,
    /// Skipped positions are bridged by hashing forward.
    Lenient,
}

/// Checks the first coin of a chain: `x_{i,1}^{c_i}` must be a published
/// root. The unused-chain check is the bank's ([`Bank::claim_chain`]).
pub fn verify_first_coin(
    params: &PublicParams,
    roots: &ChainRootList,
    coin: &ChainCoin,
    counter: &mut OpCounter,
) -> Result<(), Rejection> {
    let published = roots.get(&coin.root_id).ok_or(Rejection::UnknownRoot)?;
    if coin.exponent_index >= published.chains || params.exponent(coin.exponent_index) != Some(&coin.exponent) {
        return Err(Rejection::WrongExponent);
    }
    if coin.position != 1 {
        return Err(Rejection::OutOfOrder);
    }
    counter.modexp += 1;
    if mod_pow(&coin.value, &coin.exponent, &params.modulus) != published.value {
        return Err(Rejection::BadValue);
    }
    Ok(())
}

/// Checks `coin` against the previously accepted coin of the same chain.
/// Under the strict policy this costs exactly one exponentiation.
pub fn verify_chain_coin(
    params: &PublicParams,
    coin: &ChainCoin,
    previous: &ChainCoin,
    policy: GapPolicy,
    counter: &mut OpCounter,
) -> Result<(), Rejection> {
    if coin.chain_id() != previous.chain_id() || coin.exponent != previous.exponent {
        return Err(Rejection::BadLink);
    }
    if coin.position <= previous.position {
        return Err(Rejection::OutOfOrder);
    }
    let gap = coin.position - previous.position;
    if gap > 1 && policy == GapPolicy::Strict {
        return Err(Rejection::OutOfOrder);
    }
    let mut value = coin.value.clone();
    for _ in 0..gap {
        counter.modexp += 1;
        value = mod_pow(&value, &coin.exponent, &params.modulus);
    }
    if value != previous.value {
        return Err(Rejection::BadLink);
    }
    Ok(())
}

impl Bank {
    /// Mints one chain of `length` coins per exponent.
    pub fn mint_chains_s2<R: RngCore + ?Sized>(
        &mut self,
        rng: &mut R,
        length: u64,
        tags: CoinTags,
        counter: &mut OpCounter,
    ) -> Result<S2Batch, S2Error> {
        let m = self.issuer().exponents().len();
        if m < 2 {
            return Err(S2Error::TooFewChains(m));
        }
        check_length(length)?;
        loop {
            let start = draw_start(rng, self.issuer().modulus());
            match self.mint_chains_s2_from_start(&start, length, tags.clone(), counter) {
                Err(S2Error::DegenerateStart) | Err(S2Error::State(StateError::DuplicateRoot(_))) => continue,
                other => return other,
            }
        }
    }

    /// Mints chains from a caller-chosen starting value.
    ///
    /// Costs one exponentiation for `X_0`, one per chain start, and for
    /// `length > 1` one more per chain for the registered first coin; the
    /// count does not depend on `length`.
    pub fn mint_chains_s2_from_start(
        &mut self,
        start: &BigUint,
        length: u64,
        tags: CoinTags,
        counter: &mut OpCounter,
    ) -> Result<S2Batch, S2Error> {
        check_length(length)?;
        let issuer = self.issuer().clone();
        let modulus = issuer.modulus();
        let totient = issuer.trapdoor().totient();
        let exponents = issuer.exponents();
        if start <= &BigUint::from(1u8) || start >= &(modulus - 1u32) {
            return Err(S2Error::DegenerateStart);
        }
        let product = exponent_product(exponents.iter().map(|c| (c, length)), totient, counter);
        counter.modexp += 1;
        let root = mod_pow(start, &product, modulus);
        let mut starts = Vec::with_capacity(exponents.len());
        let mut first_coins = Vec::with_capacity(exponents.len());
        for c in exponents.iter() {
            let inverse = mod_inv(c, totient)?;
            let inverse_pow = exponent_product([(&inverse, length)], totient, counter);
            counter.modmul += 1;
            let chain_exponent = (&product * inverse_pow) % totient;
            counter.modexp += 1;
            let chain_start = mod_pow(start, &chain_exponent, modulus);
            let first = if length == 1 {
                chain_start.clone()
            } else {
                counter.modmul += 1;
                let first_exponent = (&product * &inverse) % totient;
                counter.modexp += 1;
                mod_pow(start, &first_exponent, modulus)
            };
            starts.push(chain_start);
            first_coins.push(first);
        }
        let mut distinct: Vec<&BigUint> = starts.iter().chain(std::iter::once(&root)).collect();
        distinct.sort();
        distinct.dedup();
        if root <= BigUint::from(1u8) || distinct.len() != starts.len() + 1 {
            return Err(S2Error::DegenerateStart);
        }

        let batch_id = self.state().next_batch_id();
        self.commit(BankEvent::MintS2 {
            batch_id,
            root: root.clone(),
            length,
            first_coins,
            tags: tags.clone(),
        })?;
        let root_id = RootId::of(&root);
        let chains = starts
            .into_iter()
            .zip(exponents.iter())
            .enumerate()
            .map(|(i, (start, c))| CoinChainHandle {
                start,
                exponent: c.clone(),
                exponent_index: i as u32,
                length,
                root_id,
                batch_id,
                tags: tags.clone(),
            })
            .collect();
        Ok(S2Batch {
            batch_id,
            root,
            root_id,
            length,
            chains,
        })
    }

    /// Online double-spend check for a first coin: marks the chain as taken
    /// by `vendor` if it is still unused.
    pub fn claim_chain(&mut self, coin: &ChainCoin, vendor: &str) -> Result<(), Rejection> {
        let public = self.public();
        let registry = &self.state().s2;
        verify_first_coin(&public, registry.roots(), coin, &mut OpCounter::new())?;
        let published = &registry.roots()[&coin.root_id];
        if !published.tags.admits_vendor(vendor) {
            return Err(Rejection::VendorMismatch);
        }
        match registry.chain(&coin.chain_id()) {
            Some(ChainState::Unused { first_coin }) if first_coin == &coin.value => {}
            Some(ChainState::Unused { .. }) => return Err(Rejection::BadValue),
            Some(_) => return Err(Rejection::DoubleSpent),
            None => return Err(Rejection::UnknownChain),
        }
        self.commit(BankEvent::ClaimS2 {
            chain: coin.chain_id(),
            vendor: vendor.to_string(),
        })
        .map_err(|_| Rejection::DoubleSpent)
    }

    /// Redeems the highest coin a vendor holds from one chain. The coin is
    /// checked with the trapdoor, `last^{c_i^j mod E} = X_0`, one
    /// exponentiation regardless of `j`. Returns the units credited, which is
    /// `j` minus whatever was redeemed from the chain before.
    pub fn redeem_chain(&mut self, last: &ChainCoin, vendor: &str) -> Result<u64, Rejection> {
        self.redeem_chain_counted(last, vendor, &mut OpCounter::new())
    }

    pub fn redeem_chain_counted(
        &mut self,
        last: &ChainCoin,
        vendor: &str,
        counter: &mut OpCounter,
    ) -> Result<u64, Rejection> {
        let registry = &self.state().s2;
        let published = registry.roots().get(&last.root_id).ok_or(Rejection::UnknownRoot)?;
        let public = self.public();
        if last.exponent_index >= published.chains || public.exponent(last.exponent_index) != Some(&last.exponent) {
            return Err(Rejection::WrongExponent);
        }
        if last.position == 0 || last.position > published.length {
            return Err(Rejection::OutOfOrder);
        }
        if !published.tags.admits_vendor(vendor) {
            return Err(Rejection::VendorMismatch);
        }
        let totient = self.issuer().trapdoor().totient();
        let exponent = exponent_product([(&last.exponent, last.position)], totient, counter);
        counter.modexp += 1;
        if mod_pow(&last.value, &exponent, &public.modulus) != published.value {
            return Err(Rejection::BadValue);
        }
        let previous = match registry.chain(&last.chain_id()) {
            None => return Err(Rejection::UnknownChain),
            Some(ChainState::Unused { .. }) => 0,
            Some(ChainState::Claimed { vendor: v }) if v == vendor => 0,
            Some(ChainState::Redeemed { vendor: v, highest }) if v == vendor => *highest,
            Some(_) => return Err(Rejection::DoubleSpent),
        };
        if last.position <= previous {
            return Err(Rejection::DoubleSpent);
        }
        self.commit(BankEvent::RedeemS2 {
            chain: last.chain_id(),
            vendor: vendor.to_string(),
            position: last.position,
        })
        .map_err(|_| Rejection::DoubleSpent)?;
        Ok(last.position - previous)
    }
}

/// A customer's chain: the handle plus every coin, derived once by hashing
/// forward from the chain start.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "ChainWallet", into = "ChainWallet")]
pub struct CustomerChain {
    modulus: BigUint,
    handle: CoinChainHandle,
    /// `coins[j - 1] = x_{i,j}`
    coins: Vec<BigUint>,
    next: u64,
}

/// Stored form of [`CustomerChain`]; coins are recomputed on load.
#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ChainWallet {
    #[serde(with = "crate::wallet_store::hex_biguint")]
    modulus: BigUint,
    handle: CoinChainHandle,
    next_position: u64,
}

impl TryFrom<ChainWallet> for CustomerChain {
    type Error = String;

    fn try_from(w: ChainWallet) -> Result<Self, Self::Error> {
        let mut chain = CustomerChain::new(w.handle, w.modulus).map_err(|e| e.to_string())?;
        if w.next_position == 0 || w.next_position > chain.handle.length + 1 {
            return Err(format!(
                "next position {} outside 1..={}",
                w.next_position,
                chain.handle.length + 1
            ));
        }
        chain.next = w.next_position;
        Ok(chain)
    }
}

impl From<CustomerChain> for ChainWallet {
    fn from(c: CustomerChain) -> Self {
        ChainWallet {
            modulus: c.modulus,
            handle: c.handle,
            next_position: c.next,
        }
    }
}

impl CustomerChain {
    pub fn new(handle: CoinChainHandle, modulus: BigUint) -> Result<Self, S2Error> {
        check_length(handle.length)?;
        if modulus < BigUint::from(3u8) {
            return Err(S2Error::ModulusTooSmall);
        }
        let mut coins = vec![BigUint::default(); handle.length as usize];
        let mut value = handle.start.clone();
        for j in (1..=handle.length).rev() {
            if j < handle.length {
                value = mod_pow(&value, &handle.exponent, &modulus);
            }
            coins[(j - 1) as usize] = value.clone();
        }
        Ok(CustomerChain {
            modulus,
            handle,
            coins,
            next: 1,
        })
    }

    pub fn handle(&self) -> &CoinChainHandle {
        &self.handle
    }

    pub fn remaining(&self) -> u64 {
        self.handle.length + 1 - self.next
    }

    /// The coin at `position` without spending anything.
    pub fn coin(&self, position: u64) -> Option<ChainCoin> {
        let value = self.coins.get(position.checked_sub(1)? as usize)?;
        Some(ChainCoin {
            value: value.clone(),
            exponent: self.handle.exponent.clone(),
            exponent_index: self.handle.exponent_index,
            position,
            root_id: self.handle.root_id,
        })
    }

    /// Hands out the next coin; positions come out as `1, 2, .., n`.
    pub fn pay_next_coin(&mut self) -> Result<ChainCoin, S2Error> {
        let coin = self.coin(self.next).ok_or(S2Error::Exhausted(self.handle.length))?;
        self.next += 1;
        Ok(coin)
    }
}

/// Vendor side of S2: the last accepted coin of every chain it is paid from.
#[derive(Debug, Clone)]
pub struct S2Vendor {
    id: String,
    params: PublicParams,
    roots: ChainRootList,
    policy: GapPolicy,
    sessions: BTreeMap<ChainId, ChainCoin>,
}

impl S2Vendor {
    pub fn new(id: impl Into<String>, params: PublicParams, roots: ChainRootList, policy: GapPolicy) -> Self {
        S2Vendor {
            id: id.into(),
            params,
            roots,
            policy,
            sessions: BTreeMap::new(),
        }
    }

    /// Restores the last coin of each chain from earlier sessions.
    pub fn with_sessions(mut self, coins: impl IntoIterator<Item = ChainCoin>) -> Self {
        for coin in coins {
            let keep = self
                .sessions
                .get(&coin.chain_id())
                .is_none_or(|c| c.position < coin.position);
            if keep {
                self.sessions.insert(coin.chain_id(), coin);
            }
        }
        self
    }

    pub fn id(&self) -> &str {
        &self.id
    }

    pub fn refresh_roots(&mut self, roots: &ChainRootList) {
        self.roots = roots.clone();
    }

    /// Accepts the next coin of a chain. A first coin is checked against the
    /// root list and claimed at the bank; later coins only need one hash.
    pub fn accept(&mut self, coin: &ChainCoin, bank: &mut Bank, counter: &mut OpCounter) -> Result<(), Rejection> {
        match self.sessions.get(&coin.chain_id()) {
            Some(previous) => verify_chain_coin(&self.params, coin, previous, self.policy, counter)?,
            None => {
                let first = self.bridge_to_first(coin, counter)?;
                verify_first_coin(&self.params, &self.roots, &first, counter)?;
                if let Some(root) = self.roots.get(&coin.root_id) {
                    if !root.tags.admits_vendor(&self.id) {
                        return Err(Rejection::VendorMismatch);
                    }
                }
                bank.claim_chain(&first, &self.id)?;
            }
        }
        self.sessions.insert(coin.chain_id(), coin.clone());
        Ok(())
    }

    fn bridge_to_first(&self, coin: &ChainCoin, counter: &mut OpCounter) -> Result<ChainCoin, Rejection> {
        if coin.position <= 1 {
            return Ok(coin.clone());
        }
        if self.policy == GapPolicy::Strict {
            return Err(Rejection::OutOfOrder);
        }
        let mut value = coin.value.clone();
        for _ in 1..coin.position {
            counter.modexp += 1;
            value = mod_pow(&value, &coin.exponent, &self.params.modulus);
        }
        Ok(ChainCoin {
            value,
            position: 1,
            ..coin.clone()
        })
    }

    /// Highest coin received from a chain, to be deposited at the bank.
    pub fn last_coin(&self, chain: &ChainId) -> Option<&ChainCoin> {
        self.sessions.get(chain)
    }

    pub fn chains(&self) -> impl Iterator<Item = &ChainCoin> {
        self.sessions.values()
    }
}
