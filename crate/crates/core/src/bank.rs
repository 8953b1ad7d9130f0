//! The bank: secret issuing parameters, registry state and the journal of
//! every state transition.
//!
//! All registry mutations go through [`BankState::apply`]. Live operations
//! validate a request, build the [`BankEvent`] describing the transition and
//! commit it; replaying a ledger applies the same events, so both paths end in
//! identical state.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use num_bigint::{BigUint, RandBigInt};
use num_integer::Integer;
use num_traits::One;
use rand::RngCore;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::chain::NodeIndex;
use crate::numtheory::{select_exponents, ExponentSet, NumTheoryError, TrapdoorModulus};
use crate::payword::PaywordRegistry;
use crate::scheme_s1::{BankRegistryS1, CoinId};
use crate::scheme_s2::{BankRegistryS2, ChainId};
use crate::wallet_store::ledger::Ledger;

/// Public parameters every party sees: the modulus and the exponent list.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PublicParams {
    #[serde(with = "crate::wallet_store::hex_biguint")]
    pub modulus: BigUint,
    pub exponents: ExponentSet,
}

impl PublicParams {
    pub fn exponent(&self, index: u32) -> Option<&BigUint> {
        self.exponents.get(index as usize)
    }
}

/// The bank's private capability: the factored modulus and its exponents.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, try_from = "IssuerRepr", into = "IssuerRepr")]
pub struct Issuer {
    trapdoor: TrapdoorModulus,
    exponents: ExponentSet,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct IssuerRepr {
    trapdoor: TrapdoorModulus,
    exponents: ExponentSet,
}

impl TryFrom<IssuerRepr> for Issuer {
    type Error = NumTheoryError;

    fn try_from(r: IssuerRepr) -> Result<Self, Self::Error> {
        Issuer::new(r.trapdoor, r.exponents)
    }
}

impl From<Issuer> for IssuerRepr {
    fn from(i: Issuer) -> Self {
        IssuerRepr {
            trapdoor: i.trapdoor,
            exponents: i.exponents,
        }
    }
}

impl Issuer {
    pub fn new(trapdoor: TrapdoorModulus, exponents: ExponentSet) -> Result<Self, NumTheoryError> {
        exponents.check_coprime(trapdoor.totient())?;
        Ok(Issuer { trapdoor, exponents })
    }

    /// Fresh modulus from `seed` with the `m` smallest usable exponents.
    pub fn generate(prime_bits: u64, m: usize, seed: &[u8]) -> Result<Self, NumTheoryError> {
        let trapdoor = TrapdoorModulus::generate(prime_bits, seed)?;
        let exponents = select_exponents(m, &trapdoor);
        Issuer::new(trapdoor, exponents)
    }

    pub fn trapdoor(&self) -> &TrapdoorModulus {
        &self.trapdoor
    }

    pub fn exponents(&self) -> &ExponentSet {
        &self.exponents
    }

    pub fn modulus(&self) -> &BigUint {
        self.trapdoor.modulus()
    }

    pub fn public(&self) -> PublicParams {
        PublicParams {
            modulus: self.modulus().clone(),
            exponents: self.exponents.clone(),
        }
    }
}

/// SHA-256 digest identifying a published root `X_0`.
#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct RootId(pub [u8; 32]);

impl RootId {
    pub fn of(root: &BigUint) -> RootId {
        let bytes = root.to_bytes_be();
        let mut hasher = Sha256::new();
        hasher.update(b"mdhc-root");
        hasher.update((bytes.len() as u64).to_be_bytes());
        hasher.update(&bytes);
        RootId(hasher.finalize().into())
    }

    pub fn short(&self) -> String {
        hex::encode(&self.0[..6])
    }
}

impl fmt::Display for RootId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&hex::encode(self.0))
    }
}

impl fmt::Debug for RootId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "RootId({})", self.short())
    }
}

impl FromStr for RootId {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        if s.len() != 64 || s.chars().any(|c| !matches!(c, '0'..='9' | 'a'..='f')) {
            return Err(format!("root id must be 64 lowercase hex digits, got {s:?}"));
        }
        let mut out = [0u8; 32];
        hex::decode_to_slice(s, &mut out).map_err(|e| e.to_string())?;
        Ok(RootId(out))
    }
}

impl Serialize for RootId {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for RootId {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// Optional binding of coins to one vendor and/or one customer. Tags are
/// published with the root, so a coin claiming other tags fails verification.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CoinTags {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub vendor: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub customer: Option<String>,
}

impl CoinTags {
    pub fn for_vendor(vendor: impl Into<String>) -> Self {
        CoinTags {
            vendor: Some(vendor.into()),
            customer: None,
        }
    }

    /// Whether `vendor` may accept coins with these tags.
    pub fn admits_vendor(&self, vendor: &str) -> bool {
        self.vendor.as_deref().is_none_or(|v| v == vendor)
    }
}

/// Why a payment or deposit was refused. Rejections are ordinary outcomes,
/// not failures of the library.
#[derive(Debug, Error, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Rejection {
    #[error("root is not in the published list")]
    UnknownRoot,
    #[error("value does not hash to the published root")]
    BadValue,
    #[error("exponent does not match the published parameters")]
    WrongExponent,
    #[error("coin tags differ from the published batch")]
    TagMismatch,
    #[error("coin is bound to a different vendor")]
    VendorMismatch,
    #[error("already spent")]
    DoubleSpent,
    #[error("position does not follow the previous coin")]
    OutOfOrder,
    #[error("coin does not hash to the previous coin")]
    BadLink,
    #[error("chain is not known to the bank")]
    UnknownChain,
    #[error("claimed total does not match the revealed index")]
    WrongTotal,
    #[error("commitment signature does not verify")]
    BadSignature,
    #[error("deposited paywords are not on a single spend path")]
    Inconsistent,
    #[error("nothing new to credit")]
    NothingToCredit,
    #[error("coin is not vendor-specific and the bank is unreachable")]
    NeedsOnlineCheck,
}

impl Rejection {
    pub fn name(&self) -> &'static str {
        match self {
            Rejection::UnknownRoot => "unknown_root",
            Rejection::BadValue => "bad_value",
            Rejection::WrongExponent => "wrong_exponent",
            Rejection::TagMismatch => "tag_mismatch",
            Rejection::VendorMismatch => "vendor_mismatch",
            Rejection::DoubleSpent => "double_spent",
            Rejection::OutOfOrder => "out_of_order",
            Rejection::BadLink => "bad_link",
            Rejection::UnknownChain => "unknown_chain",
            Rejection::WrongTotal => "wrong_total",
            Rejection::BadSignature => "bad_signature",
            Rejection::Inconsistent => "inconsistent",
            Rejection::NothingToCredit => "nothing_to_credit",
            Rejection::NeedsOnlineCheck => "needs_online_check",
        }
    }
}

/// Vendor credits and customer debits in currency units.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Accounts {
    pub vendor_credits: BTreeMap<String, u64>,
    pub customer_debits: BTreeMap<String, u64>,
}

impl Accounts {
    pub fn credit(&mut self, vendor: &str, amount: u64) {
        *self.vendor_credits.entry(vendor.to_string()).or_default() += amount;
    }

    pub fn debit(&mut self, customer: &str, amount: u64) {
        *self.customer_debits.entry(customer.to_string()).or_default() += amount;
    }

    pub fn credited(&self, vendor: &str) -> u64 {
        self.vendor_credits.get(vendor).copied().unwrap_or(0)
    }

    pub fn debited(&self, customer: &str) -> u64 {
        self.customer_debits.get(customer).copied().unwrap_or(0)
    }

    pub fn total_credited(&self) -> u64 {
        self.vendor_credits.values().sum()
    }
}

/// One state transition of the bank.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "op", rename_all = "snake_case")]
pub enum BankEvent {
    MintS1 {
        batch_id: u64,
        #[serde(with = "crate::wallet_store::hex_biguint")]
        root: BigUint,
        coins: u32,
        #[serde(default)]
        tags: CoinTags,
    },
    DepositS1 {
        coin: CoinId,
        vendor: String,
    },
    RefundS1 {
        coins: Vec<CoinId>,
    },
    MintS2 {
        batch_id: u64,
        #[serde(with = "crate::wallet_store::hex_biguint")]
        root: BigUint,
        length: u64,
        #[serde(with = "crate::wallet_store::hex_biguint_vec")]
        first_coins: Vec<BigUint>,
        #[serde(default)]
        tags: CoinTags,
    },
    ClaimS2 {
        chain: ChainId,
        vendor: String,
    },
    RedeemS2 {
        chain: ChainId,
        vendor: String,
        position: u64,
    },
    SettleMultivendor {
        root_id: RootId,
        customer: String,
        index: NodeIndex,
        vendors: Vec<String>,
    },
    RedeemDenominated {
        root_id: RootId,
        customer: String,
        vendor: String,
        total: u64,
    },
}

/// A ledger event that cannot be applied to the current state.
#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum StateError {
    #[error("batch id {got} out of sequence (expected {expected})")]
    BatchOutOfSequence { expected: u64, got: u64 },
    #[error("root {0:?} published twice")]
    DuplicateRoot(RootId),
    #[error("coin {0} is not unspent")]
    CoinNotUnspent(CoinId),
    #[error("chain {0} is not in the expected state")]
    ChainState(ChainId),
    #[error("redemption position {position} does not exceed {previous} or exceeds length {length}")]
    BadPosition { position: u64, previous: u64, length: u64 },
    #[error("settlement of {0:?} already recorded")]
    AlreadySettled(RootId),
    #[error("settlement index has {index} coordinates for {vendors} vendors")]
    SettlementShape { index: usize, vendors: usize },
    #[error("denominated total {total} does not exceed {previous}")]
    TotalNotIncreasing { total: u64, previous: u64 },
    #[error("empty or malformed event: {0}")]
    Malformed(&'static str),
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct BankState {
    pub s1: BankRegistryS1,
    pub s2: BankRegistryS2,
    pub payword: PaywordRegistry,
    pub accounts: Accounts,
    next_batch: u64,
}

impl BankState {
    pub fn next_batch_id(&self) -> u64 {
        self.next_batch
    }

    fn take_batch_id(&mut self, batch_id: u64) -> Result<(), StateError> {
        if batch_id != self.next_batch {
            return Err(StateError::BatchOutOfSequence {
                expected: self.next_batch,
                got: batch_id,
            });
        }
        self.next_batch += 1;
        Ok(())
    }

    /// Applies one transition, leaving the state untouched on error.
    pub fn apply(&mut self, event: &BankEvent) -> Result<(), StateError> {
        match event {
            BankEvent::MintS1 {
                batch_id,
                root,
                coins,
                tags,
            } => {
                if *coins == 0 {
                    return Err(StateError::Malformed("mint of zero coins"));
                }
                self.s1.check_mint(root)?;
                self.take_batch_id(*batch_id)?;
                self.s1.apply_mint(*batch_id, root, *coins, tags);
            }
            BankEvent::DepositS1 { coin, vendor } => {
                self.s1.apply_deposit(coin)?;
                self.accounts.credit(vendor, 1);
            }
            BankEvent::RefundS1 { coins } => self.s1.apply_refund(coins)?,
            BankEvent::MintS2 {
                batch_id,
                root,
                length,
                first_coins,
                tags,
            } => {
                if *length == 0 || first_coins.is_empty() {
                    return Err(StateError::Malformed("mint of empty chains"));
                }
                self.s2.check_mint(root)?;
                self.take_batch_id(*batch_id)?;
                self.s2.apply_mint(*batch_id, root, *length, first_coins, tags);
            }
            BankEvent::ClaimS2 { chain, vendor } => self.s2.apply_claim(chain, vendor)?,
            BankEvent::RedeemS2 {
                chain,
                vendor,
                position,
            } => {
                let credited = self.s2.apply_redeem(chain, vendor, *position)?;
                self.accounts.credit(vendor, credited);
            }
            BankEvent::SettleMultivendor {
                root_id,
                customer,
                index,
                vendors,
            } => {
                if index.dims() != vendors.len() {
                    return Err(StateError::SettlementShape {
                        index: index.dims(),
                        vendors: vendors.len(),
                    });
                }
                self.payword.apply_settle(*root_id, index)?;
                for (vendor, k) in vendors.iter().zip(index.coords()) {
                    self.accounts.credit(vendor, *k);
                }
                self.accounts.debit(customer, index.sum());
            }
            BankEvent::RedeemDenominated {
                root_id,
                customer,
                vendor,
                total,
            } => {
                let credited = self.payword.apply_denominated(*root_id, *total)?;
                self.accounts.credit(vendor, credited);
                self.accounts.debit(customer, credited);
            }
        }
        Ok(())
    }
}

/// Bank actor: issuer secrets, current state and the ledger that produced it.
#[derive(Debug, Clone)]
pub struct Bank {
    issuer: Issuer,
    state: BankState,
    ledger: Ledger,
}

impl Bank {
    pub fn new(issuer: Issuer) -> Self {
        Bank {
            issuer,
            state: BankState::default(),
            ledger: Ledger::default(),
        }
    }

    /// Rebuilds a bank by replaying its ledger.
    pub fn from_ledger(issuer: Issuer, ledger: Ledger) -> Result<Self, crate::wallet_store::StoreError> {
        let state = ledger.replay()?;
        Ok(Bank { issuer, state, ledger })
    }

    pub fn issuer(&self) -> &Issuer {
        &self.issuer
    }

    pub fn public(&self) -> PublicParams {
        self.issuer.public()
    }

    pub fn state(&self) -> &BankState {
        &self.state
    }

    pub fn accounts(&self) -> &Accounts {
        &self.state.accounts
    }

    pub fn ledger(&self) -> &Ledger {
        &self.ledger
    }

    pub(crate) fn commit(&mut self, event: BankEvent) -> Result<(), StateError> {
        self.state.apply(&event)?;
        self.ledger.push(event);
        Ok(())
    }
}

/// Draws a chain starting value: coprime to `M`, outside `{0, 1, M-1}`.
pub fn draw_start<R: RngCore + ?Sized>(rng: &mut R, modulus: &BigUint) -> BigUint {
    let two = BigUint::from(2u8);
    let upper = modulus - 1u32;
    loop {
        let x = rng.gen_biguint_range(&two, &upper);
        if x.gcd(modulus).is_one() {
            return x;
        }
    }
}
