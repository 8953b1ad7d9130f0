//! PayWord-style commitments on multi-dimensional chains.
//!
//! The customer builds a chain from its own secret starting value, signs the
//! root and then pays by revealing nodes. Two layouts are supported:
//!
//! * **denominations**: all dimensions have size `n` and dimension `i` is
//!   worth `(n+1)^i`, so index `k` encodes the amount `sum k_i (n+1)^i`. A
//!   capacity of `(n+1)^m - 1` costs only `n m` hashes to generate.
//! * **multiple vendors**: dimension `i` belongs to vendor `i`; paying that
//!   vendor raises `k_i` by one. The bank settles on the deposited node with
//!   the largest index and credits vendor `i` with `k_i`.
//!
//! Carrying in the denominated layout lowers some digits (9 -> 10 in base
//! ten), so a revealed node need not sit above the previous one; vendors
//! always verify a denominated node by hashing it back to the root.

use std::collections::BTreeMap;

use num_bigint::BigUint;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::bank::{Bank, BankEvent, Rejection, RootId};
use crate::chain::{
    descend, node_at, root_naive, verify_path_to_root, ChainError, ChainParams, Node, NodeIndex, OpCounter, SecretChain,
};
use crate::signature::{PublicKey, SignatureError, SignatureKeypair};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum PaywordError {
    #[error("denominations need equal sizes in every dimension, got {0:?}")]
    NonUniformSizes(Vec<u64>),
    #[error("dimension size must be at least 1")]
    ZeroSize,
    #[error("capacity (n+1)^m - 1 does not fit in 64 bits")]
    CapacityOverflow,
    #[error("digit {digit} in dimension {dim} exceeds {max}")]
    DigitOutOfRange { dim: usize, digit: u64, max: u64 },
    #[error("index has {got} coordinates, expected {expected}")]
    WrongDimensions { expected: usize, got: usize },
    #[error("value {value} exceeds capacity {capacity}")]
    CapacityExceeded { value: u64, capacity: u64 },
    #[error("amount must be positive")]
    ZeroAmount,
    #[error("dimension {0} is exhausted")]
    DimensionExhausted(usize),
    #[error("vendor {0:?} is not bound to any dimension")]
    UnboundVendor(String),
    #[error("expected {expected} vendors, got {got}")]
    VendorCount { expected: usize, got: usize },
    #[error("vendor {0:?} is bound to more than one dimension")]
    DuplicateVendor(String),
    #[error("commitment purpose does not allow this operation")]
    WrongPurpose,
    #[error(transparent)]
    Chain(#[from] ChainError),
    #[error(transparent)]
    Signature(#[from] SignatureError),
}

/// Positional weights `(n+1)^i` for a uniform chain of `m` dimensions.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct DenominationSchedule {
    size: u64,
    dims: usize,
    capacity: u64,
}

impl DenominationSchedule {
    pub fn new(size: u64, dims: usize) -> Result<Self, PaywordError> {
        if size == 0 {
            return Err(PaywordError::ZeroSize);
        }
        let base = size.checked_add(1).ok_or(PaywordError::CapacityOverflow)?;
        let span = (0..dims)
            .try_fold(1u64, |acc, _| acc.checked_mul(base))
            .ok_or(PaywordError::CapacityOverflow)?;
        Ok(DenominationSchedule {
            size,
            dims,
            capacity: span - 1,
        })
    }

    pub fn from_params(params: &ChainParams) -> Result<Self, PaywordError> {
        let sizes = params.sizes();
        match sizes.first() {
            Some(&n) if sizes.iter().all(|&s| s == n) => Self::new(n, sizes.len()),
            _ => Err(PaywordError::NonUniformSizes(sizes.to_vec())),
        }
    }

    pub fn base(&self) -> u64 {
        self.size + 1
    }

    pub fn dims(&self) -> usize {
        self.dims
    }

    /// `(n+1)^m - 1`.
    pub fn capacity(&self) -> u64 {
        self.capacity
    }

    pub fn weight(&self, dim: usize) -> u64 {
        self.base().pow(dim as u32)
    }

    /// `k_1 + k_2 (n+1) + .. + k_m (n+1)^{m-1}`.
    pub fn value_of_index(&self, index: &NodeIndex) -> Result<u64, PaywordError> {
        if index.dims() != self.dims {
            return Err(PaywordError::WrongDimensions {
                expected: self.dims,
                got: index.dims(),
            });
        }
        let mut value = 0u64;
        for (dim, &digit) in index.coords().iter().enumerate().rev() {
            if digit > self.size {
                return Err(PaywordError::DigitOutOfRange {
                    dim,
                    digit,
                    max: self.size,
                });
            }
            value = value * self.base() + digit;
        }
        Ok(value)
    }

    /// Base-`(n+1)` digits of `value`, least significant first.
    pub fn index_of_value(&self, value: u64) -> Result<NodeIndex, PaywordError> {
        if value > self.capacity {
            return Err(PaywordError::CapacityExceeded {
                value,
                capacity: self.capacity,
            });
        }
        let mut rest = value;
        let digits = (0..self.dims)
            .map(|_| {
                let d = rest % self.base();
                rest /= self.base();
                d
            })
            .collect();
        Ok(NodeIndex(digits))
    }
}

/// What a commitment is for.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Purpose {
    Denomination,
    Multivendor { vendors: Vec<String> },
}

/// The customer's signed statement binding a chain root to its parameters,
/// purpose and identity.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PaywordCommitment {
    #[serde(with = "crate::wallet_store::hex_biguint")]
    pub root: BigUint,
    pub params: ChainParams,
    pub purpose: Purpose,
    pub customer: String,
    #[serde(with = "crate::wallet_store::hex_bytes")]
    pub signature: Vec<u8>,
}

const COMMITMENT_TAG: &[u8] = b"mdhc-payword-commitment/1";

fn put_field(out: &mut Vec<u8>, bytes: &[u8]) {
    out.extend_from_slice(&(bytes.len() as u32).to_be_bytes());
    out.extend_from_slice(bytes);
}

/// Length-prefixed big-endian encoding of everything the signature covers:
/// tag, root, modulus, `m`, exponents, sizes, purpose, vendors, customer.
pub fn canonical_commitment_bytes(root: &BigUint, params: &ChainParams, purpose: &Purpose, customer: &str) -> Vec<u8> {
    let mut out = Vec::new();
    put_field(&mut out, COMMITMENT_TAG);
    put_field(&mut out, &root.to_bytes_be());
    put_field(&mut out, &params.modulus().to_bytes_be());
    out.extend_from_slice(&(params.dims() as u32).to_be_bytes());
    for c in params.exponents().iter() {
        put_field(&mut out, &c.to_bytes_be());
    }
    for n in params.sizes() {
        out.extend_from_slice(&n.to_be_bytes());
    }
    match purpose {
        Purpose::Denomination => out.push(0),
        Purpose::Multivendor { vendors } => {
            out.push(1);
            out.extend_from_slice(&(vendors.len() as u32).to_be_bytes());
            for v in vendors {
                put_field(&mut out, v.as_bytes());
            }
        }
    }
    put_field(&mut out, customer.as_bytes());
    out
}

impl PaywordCommitment {
    pub fn root_id(&self) -> RootId {
        RootId::of(&self.root)
    }

    pub fn signed_bytes(&self) -> Vec<u8> {
        canonical_commitment_bytes(&self.root, &self.params, &self.purpose, &self.customer)
    }

    pub fn verify(&self, key: &PublicKey) -> bool {
        key.verify(&self.signed_bytes(), &self.signature)
    }

    pub fn root_node(&self) -> Node {
        Node {
            index: self.params.root_index(),
            value: self.root.clone(),
        }
    }

    pub fn vendors(&self) -> Option<&[String]> {
        match &self.purpose {
            Purpose::Multivendor { vendors } => Some(vendors),
            Purpose::Denomination => None,
        }
    }

    /// The dimension bound to `vendor` in a multi-vendor commitment.
    pub fn vendor_dim(&self, vendor: &str) -> Option<usize> {
        self.vendors()?.iter().position(|v| v == vendor)
    }
}

/// Builds and signs a commitment. The root is computed by plain forward
/// hashing (`sum n_i` exponentiations, counted in `counter`); customers do
/// not know the factorization.
pub fn commit(
    key: &SignatureKeypair,
    customer: &str,
    chain: &SecretChain,
    purpose: Purpose,
    counter: &mut OpCounter,
) -> Result<PaywordCommitment, PaywordError> {
    let params = chain.params();
    match &purpose {
        Purpose::Denomination => {
            DenominationSchedule::from_params(params)?;
        }
        Purpose::Multivendor { vendors } => {
            if vendors.len() != params.dims() {
                return Err(PaywordError::VendorCount {
                    expected: params.dims(),
                    got: vendors.len(),
                });
            }
            for (i, v) in vendors.iter().enumerate() {
                if vendors[..i].contains(v) {
                    return Err(PaywordError::DuplicateVendor(v.clone()));
                }
            }
        }
    }
    let root = root_naive(chain, counter).value;
    let bytes = canonical_commitment_bytes(&root, params, &purpose, customer);
    let signature = key.sign(&bytes)?;
    Ok(PaywordCommitment {
        root,
        params: params.clone(),
        purpose,
        customer: customer.to_string(),
        signature,
    })
}

/// Customer position: current index and cumulative amount paid.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SpendState {
    pub index: NodeIndex,
    pub total: u64,
}

impl SpendState {
    pub fn new(dims: usize) -> Self {
        SpendState {
            index: NodeIndex::zeros(dims),
            total: 0,
        }
    }
}

/// Pays `amount` more on a denominated chain: reveals the node encoding the
/// new cumulative total.
pub fn pay_denominated(
    state: &SpendState,
    amount: u64,
    chain: &SecretChain,
) -> Result<(Node, SpendState), PaywordError> {
    if amount == 0 {
        return Err(PaywordError::ZeroAmount);
    }
    let schedule = DenominationSchedule::from_params(chain.params())?;
    let target = state.total.checked_add(amount).ok_or(PaywordError::CapacityExceeded {
        value: u64::MAX,
        capacity: schedule.capacity(),
    })?;
    let index = schedule.index_of_value(target)?;
    let node = node_at(chain, &index, &mut OpCounter::new())?;
    Ok((node, SpendState { index, total: target }))
}

/// Vendor check of a denominated payment: the index must encode
/// `claimed_total` and the node must hash back to the committed root, at a
/// cost of `sum k_i` exponentiations.
pub fn verify_denominated(
    commitment: &PaywordCommitment,
    node: &Node,
    claimed_total: u64,
    counter: &mut OpCounter,
) -> Result<(), Rejection> {
    let schedule = DenominationSchedule::from_params(&commitment.params).map_err(|_| Rejection::WrongTotal)?;
    match schedule.value_of_index(&node.index) {
        Ok(v) if v == claimed_total => {}
        _ => return Err(Rejection::WrongTotal),
    }
    if !verify_path_to_root(&commitment.params, node, &commitment.root, counter) {
        return Err(Rejection::BadValue);
    }
    Ok(())
}

/// Pays one unit to `vendor` on a multi-vendor chain: reveals the node one
/// step further in the vendor's dimension.
pub fn pay_vendor(
    state: &SpendState,
    commitment: &PaywordCommitment,
    vendor: &str,
    chain: &SecretChain,
) -> Result<(Node, SpendState), PaywordError> {
    if commitment.vendors().is_none() {
        return Err(PaywordError::WrongPurpose);
    }
    let dim = commitment
        .vendor_dim(vendor)
        .ok_or_else(|| PaywordError::UnboundVendor(vendor.to_string()))?;
    pay_dimension(state, dim, chain)
}

/// Advances dimension `dim` by one.
pub fn pay_dimension(state: &SpendState, dim: usize, chain: &SecretChain) -> Result<(Node, SpendState), PaywordError> {
    let params = chain.params();
    let limit = *params.sizes().get(dim).ok_or(ChainError::DimensionOutOfRange {
        dim,
        dims: params.dims(),
    })?;
    if state.index.coords()[dim] >= limit {
        return Err(PaywordError::DimensionExhausted(dim));
    }
    let index = state.index.step_up(dim);
    let node = node_at(chain, &index, &mut OpCounter::new())?;
    Ok((
        node,
        SpendState {
            index,
            total: state.total + 1,
        },
    ))
}

/// A vendor's view of one denominated commitment.
#[derive(Debug, Clone)]
pub struct DenominatedVendor {
    commitment: PaywordCommitment,
    last_total: u64,
    last_node: Option<Node>,
}

impl DenominatedVendor {
    /// Checks the customer's signature before accepting any payment.
    pub fn new(commitment: PaywordCommitment, key: &PublicKey) -> Result<Self, Rejection> {
        if !commitment.verify(key) {
            return Err(Rejection::BadSignature);
        }
        if commitment.vendors().is_some() {
            return Err(Rejection::WrongTotal);
        }
        Ok(DenominatedVendor {
            commitment,
            last_total: 0,
            last_node: None,
        })
    }

    /// Accepts a payment bringing the total to `claimed_total`; returns the
    /// amount it adds.
    pub fn accept(&mut self, node: &Node, claimed_total: u64, counter: &mut OpCounter) -> Result<u64, Rejection> {
        if claimed_total <= self.last_total {
            return Err(Rejection::OutOfOrder);
        }
        verify_denominated(&self.commitment, node, claimed_total, counter)?;
        let added = claimed_total - self.last_total;
        self.last_total = claimed_total;
        self.last_node = Some(node.clone());
        Ok(added)
    }

    pub fn total(&self) -> u64 {
        self.last_total
    }

    /// Latest node received, which is all the bank needs.
    pub fn last_node(&self) -> Option<&Node> {
        self.last_node.as_ref()
    }
}

/// One vendor's view of a multi-vendor commitment. Verified nodes are kept
/// so a new payment only has to hash down to the nearest one instead of all
/// the way to the root.
#[derive(Debug, Clone)]
pub struct MultivendorSession {
    vendor: String,
    dim: usize,
    commitment: PaywordCommitment,
    verified: Vec<Node>,
    received: u64,
}

impl MultivendorSession {
    pub fn new(vendor: impl Into<String>, commitment: PaywordCommitment, key: &PublicKey) -> Result<Self, Rejection> {
        let vendor = vendor.into();
        if !commitment.verify(key) {
            return Err(Rejection::BadSignature);
        }
        let dim = commitment.vendor_dim(&vendor).ok_or(Rejection::VendorMismatch)?;
        let root = commitment.root_node();
        Ok(MultivendorSession {
            vendor,
            dim,
            commitment,
            verified: vec![root],
            received: 0,
        })
    }

    pub fn vendor(&self) -> &str {
        &self.vendor
    }

    pub fn received(&self) -> u64 {
        self.received
    }

    /// Highest node accepted so far.
    pub fn last_node(&self) -> Option<&Node> {
        self.verified.iter().skip(1).max_by_key(|n| n.index.coords()[self.dim])
    }

    /// Accepts the next payword in this vendor's dimension.
    pub fn accept(&mut self, node: &Node, counter: &mut OpCounter) -> Result<(), Rejection> {
        let params = &self.commitment.params;
        if !params.contains(&node.index) {
            return Err(Rejection::OutOfOrder);
        }
        if node.index.coords()[self.dim] != self.received + 1 {
            return Err(Rejection::OutOfOrder);
        }
        let ancestor = self
            .verified
            .iter()
            .filter(|a| a.index.dominated_by(&node.index))
            .min_by_key(|a| node.index.sum() - a.index.sum())
            .expect("root is always cached");
        match descend(params, node, &ancestor.index, counter) {
            Ok(value) if value == ancestor.value => {}
            _ => return Err(Rejection::BadValue),
        }
        self.verified.push(node.clone());
        self.received += 1;
        Ok(())
    }
}

/// Outcome of a multi-vendor settlement.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Settlement {
    pub index: NodeIndex,
    pub credits: Vec<(String, u64)>,
    pub debit: u64,
}

/// What the bank has already paid out per payword root.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct PaywordRegistry {
    settled: BTreeMap<RootId, NodeIndex>,
    denominated: BTreeMap<RootId, u64>,
}

impl PaywordRegistry {
    pub fn settled(&self, root: &RootId) -> Option<&NodeIndex> {
        self.settled.get(root)
    }

    pub fn redeemed_total(&self, root: &RootId) -> u64 {
        self.denominated.get(root).copied().unwrap_or(0)
    }

    pub(crate) fn apply_settle(&mut self, root: RootId, index: &NodeIndex) -> Result<(), crate::bank::StateError> {
        if self.settled.contains_key(&root) {
            return Err(crate::bank::StateError::AlreadySettled(root));
        }
        self.settled.insert(root, index.clone());
        Ok(())
    }

    /// Records a denominated redemption reaching `total`; returns the units
    /// newly credited.
    pub(crate) fn apply_denominated(&mut self, root: RootId, total: u64) -> Result<u64, crate::bank::StateError> {
        let previous = self.redeemed_total(&root);
        if total <= previous {
            return Err(crate::bank::StateError::TotalNotIncreasing { total, previous });
        }
        self.denominated.insert(root, total);
        Ok(total - previous)
    }
}

impl Bank {
    /// Settles a multi-vendor commitment from the paywords its vendors
    /// deposited. The deposit with the coordinate-wise largest index decides:
    /// vendor `i` gets `k_i` and the customer is debited `sum k_i`.
    pub fn settle_multivendor(
        &mut self,
        commitment: &PaywordCommitment,
        key: &PublicKey,
        deposits: &[(String, Node)],
    ) -> Result<Settlement, Rejection> {
        if !commitment.verify(key) {
            return Err(Rejection::BadSignature);
        }
        let vendors = commitment.vendors().ok_or(Rejection::Inconsistent)?.to_vec();
        if deposits.is_empty() {
            return Err(Rejection::NothingToCredit);
        }
        for (vendor, node) in deposits {
            if commitment.vendor_dim(vendor).is_none() {
                return Err(Rejection::VendorMismatch);
            }
            if !verify_path_to_root(&commitment.params, node, &commitment.root, &mut OpCounter::new()) {
                return Err(Rejection::BadValue);
            }
        }
        let top = deposits
            .iter()
            .map(|(_, n)| &n.index)
            .find(|candidate| deposits.iter().all(|(_, n)| n.index.dominated_by(candidate)))
            .ok_or(Rejection::Inconsistent)?
            .clone();
        if self.state().payword.settled(&commitment.root_id()).is_some() {
            return Err(Rejection::DoubleSpent);
        }
        self.commit(BankEvent::SettleMultivendor {
            root_id: commitment.root_id(),
            customer: commitment.customer.clone(),
            index: top.clone(),
            vendors: vendors.clone(),
        })
        .map_err(|_| Rejection::DoubleSpent)?;
        let credits = vendors.into_iter().zip(top.coords().iter().copied()).collect();
        Ok(Settlement {
            debit: top.sum(),
            index: top,
            credits,
        })
    }

    /// Redeems the latest payword of a denominated commitment for `vendor`.
    /// Returns the units newly credited.
    pub fn redeem_denominated(
        &mut self,
        commitment: &PaywordCommitment,
        key: &PublicKey,
        vendor: &str,
        node: &Node,
        claimed_total: u64,
    ) -> Result<u64, Rejection> {
        if !commitment.verify(key) {
            return Err(Rejection::BadSignature);
        }
        if commitment.vendors().is_some() {
            return Err(Rejection::WrongTotal);
        }
        verify_denominated(commitment, node, claimed_total, &mut OpCounter::new())?;
        let previous = self.state().payword.redeemed_total(&commitment.root_id());
        if claimed_total <= previous {
            return Err(Rejection::DoubleSpent);
        }
        self.commit(BankEvent::RedeemDenominated {
            root_id: commitment.root_id(),
            customer: commitment.customer.clone(),
            vendor: vendor.to_string(),
            total: claimed_total,
        })
        .map_err(|_| Rejection::DoubleSpent)?;
        Ok(claimed_total - previous)
    }
}
