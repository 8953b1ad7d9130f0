//! Multi-dimensional hash chains over `h_i(x) = x^{c_i} mod M`.
//!
//! A chain of size `(n_1, .., n_m)` is the lattice of values `x_k` for
//! `0 <= k_i <= n_i`, where stepping down by one in dimension `i` applies
//! `h_i`. The starting node sits at `k = (n_1, .., n_m)` and the root at
//! `k = 0`. Because the `h_i` commute, every node is determined by its index
//! alone, whatever order the functions are applied in.
//!
//! Dimensions are numbered from 0 throughout the crate.

use std::fmt;

use num_bigint::BigUint;
use num_integer::Integer;
use num_traits::One;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::numtheory::{mod_pow, ExponentSet, TrapdoorModulus};

/// Largest lattice that traversal strategies will materialize.
pub const MAX_MATERIALIZED_NODES: u128 = 1 << 22;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ChainError {
    #[error("dimension {dim} out of range for a {dims}-dimensional chain")]
    DimensionOutOfRange { dim: usize, dims: usize },
    #[error("index {index} is outside chain sizes {sizes:?}")]
    IndexOutOfRange { index: NodeIndex, sizes: Vec<u64> },
    #[error("{exponents} exponents but {sizes} sizes")]
    DimensionMismatch { exponents: usize, sizes: usize },
    #[error("modulus must be at least 3")]
    ModulusTooSmall,
    #[error("chain has no trapdoor")]
    MissingTrapdoor,
    #[error("trapdoor modulus does not match chain modulus")]
    TrapdoorMismatch,
    #[error("{0}")]
    InvalidExponents(#[from] crate::numtheory::NumTheoryError),
    #[error("starting value must lie in [2, M-2] and be coprime to M")]
    InvalidStart,
    #[error("{child} is not one step above {parent} in dimension {dim}")]
    NotAdjacent {
        child: NodeIndex,
        parent: NodeIndex,
        dim: usize,
    },
    #[error("{index} is not an ancestor of {node}")]
    NotAncestor { index: NodeIndex, node: NodeIndex },
    #[error("lattice of {0} nodes is too large to materialize")]
    LatticeTooLarge(u128),
    #[error("checkpoint spacing must be at least 1")]
    InvalidCheckpointSpacing,
}

/// Operation counts for one measured computation.
#[derive(Debug, Default, Clone, Copy, PartialEq, Eq)]
pub struct OpCounter {
    pub modexp: u64,
    pub modmul: u64,
}

impl OpCounter {
    pub fn new() -> Self {
        Self::default()
    }
}

/// Public description of one chain: the modulus, one exponent and one size
/// per dimension.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "ChainParamsRepr", into = "ChainParamsRepr")]
pub struct ChainParams {
    modulus: BigUint,
    exponents: ExponentSet,
    sizes: Vec<u64>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ChainParamsRepr {
    #[serde(with = "crate::wallet_store::hex_biguint")]
    modulus: BigUint,
    exponents: ExponentSet,
    sizes: Vec<u64>,
}

impl TryFrom<ChainParamsRepr> for ChainParams {
    type Error = ChainError;

    fn try_from(r: ChainParamsRepr) -> Result<Self, Self::Error> {
        ChainParams::new(r.modulus, r.exponents, r.sizes)
    }
}

impl From<ChainParams> for ChainParamsRepr {
    fn from(p: ChainParams) -> Self {
        ChainParamsRepr {
            modulus: p.modulus,
            exponents: p.exponents,
            sizes: p.sizes,
        }
    }
}

impl ChainParams {
    pub fn new(modulus: BigUint, exponents: ExponentSet, sizes: Vec<u64>) -> Result<Self, ChainError> {
        if exponents.len() != sizes.len() {
            return Err(ChainError::DimensionMismatch {
                exponents: exponents.len(),
                sizes: sizes.len(),
            });
        }
        if modulus < BigUint::from(3u8) {
            return Err(ChainError::ModulusTooSmall);
        }
        Ok(ChainParams {
            modulus,
            exponents,
            sizes,
        })
    }

    /// Same size in every dimension.
    pub fn uniform(modulus: BigUint, exponents: ExponentSet, size: u64) -> Result<Self, ChainError> {
        let m = exponents.len();
        Self::new(modulus, exponents, vec![size; m])
    }

    pub fn modulus(&self) -> &BigUint {
        &self.modulus
    }

    pub fn exponents(&self) -> &ExponentSet {
        &self.exponents
    }

    pub fn sizes(&self) -> &[u64] {
        &self.sizes
    }

    pub fn dims(&self) -> usize {
        self.sizes.len()
    }

    /// `prod(n_i + 1)`, or `None` on overflow.
    pub fn node_count(&self) -> Option<u128> {
        self.sizes
            .iter()
            .try_fold(1u128, |acc, &n| acc.checked_mul(n as u128 + 1))
    }

    /// Hash applications needed to reach the root from the starting node.
    pub fn depth(&self) -> u64 {
        self.sizes.iter().sum()
    }

    pub fn start_index(&self) -> NodeIndex {
        NodeIndex(self.sizes.clone())
    }

    pub fn root_index(&self) -> NodeIndex {
        NodeIndex(vec![0; self.dims()])
    }

    pub fn contains(&self, index: &NodeIndex) -> bool {
        index.0.len() == self.dims() && index.0.iter().zip(&self.sizes).all(|(k, n)| k <= n)
    }

    pub fn check_index(&self, index: &NodeIndex) -> Result<(), ChainError> {
        if self.contains(index) {
            Ok(())
        } else {
            Err(ChainError::IndexOutOfRange {
                index: index.clone(),
                sizes: self.sizes.clone(),
            })
        }
    }

    fn exponent(&self, dim: usize) -> Result<&BigUint, ChainError> {
        self.exponents
            .get(dim)
            .ok_or(ChainError::DimensionOutOfRange { dim, dims: self.dims() })
    }
}

/// Position `(k_1, .., k_m)` in the lattice.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct NodeIndex(pub Vec<u64>);

impl NodeIndex {
    pub fn zeros(dims: usize) -> Self {
        NodeIndex(vec![0; dims])
    }

    pub fn dims(&self) -> usize {
        self.0.len()
    }

    pub fn coords(&self) -> &[u64] {
        &self.0
    }

    pub fn sum(&self) -> u64 {
        self.0.iter().sum()
    }

    /// Coordinate-wise `self <= other`.
    pub fn dominated_by(&self, other: &NodeIndex) -> bool {
        self.0.len() == other.0.len() && self.0.iter().zip(&other.0).all(|(a, b)| a <= b)
    }

    /// Copy with coordinate `dim` raised by one.
    pub fn step_up(&self, dim: usize) -> NodeIndex {
        let mut next = self.clone();
        next.0[dim] += 1;
        next
    }
}

impl fmt::Display for NodeIndex {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "(")?;
        for (i, k) in self.0.iter().enumerate() {
            if i > 0 {
                write!(f, ",")?;
            }
            write!(f, "{k}")?;
        }
        write!(f, ")")
    }
}

/// A chain value together with its position.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Node {
    pub index: NodeIndex,
    #[serde(with = "crate::wallet_store::hex_biguint")]
    pub value: BigUint,
}

/// A chain whose starting node is known to the holder, optionally with the
/// factorization of the modulus.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SecretChain {
    params: ChainParams,
    start: BigUint,
    trapdoor: Option<TrapdoorModulus>,
}

impl SecretChain {
    pub fn new(params: ChainParams, start: BigUint, trapdoor: Option<TrapdoorModulus>) -> Result<Self, ChainError> {
        let modulus = params.modulus();
        if start < BigUint::from(2u8) || start > modulus - 2u32 || !start.gcd(modulus).is_one() {
            return Err(ChainError::InvalidStart);
        }
        if let Some(t) = &trapdoor {
            if t.modulus() != modulus {
                return Err(ChainError::TrapdoorMismatch);
            }
            params.exponents().check_coprime(t.totient())?;
        }
        Ok(SecretChain {
            params,
            start,
            trapdoor,
        })
    }

    pub fn params(&self) -> &ChainParams {
        &self.params
    }

    pub fn start(&self) -> &BigUint {
        &self.start
    }

    pub fn trapdoor(&self) -> Option<&TrapdoorModulus> {
        self.trapdoor.as_ref()
    }

    pub fn start_node(&self) -> Node {
        Node {
            index: self.params.start_index(),
            value: self.start.clone(),
        }
    }
}

/// One application of `h_dim`.
pub fn apply_hash(
    params: &ChainParams,
    dim: usize,
    x: &BigUint,
    counter: &mut OpCounter,
) -> Result<BigUint, ChainError> {
    let c = params.exponent(dim)?;
    counter.modexp += 1;
    Ok(mod_pow(x, c, params.modulus()))
}

/// `h_dim` applied `times` times.
pub fn hash_times(
    params: &ChainParams,
    dim: usize,
    x: &BigUint,
    times: u64,
    counter: &mut OpCounter,
) -> Result<BigUint, ChainError> {
    params.exponent(dim)?;
    let mut value = x.clone();
    for _ in 0..times {
        value = apply_hash(params, dim, &value, counter)?;
    }
    Ok(value)
}

/// Walks down from `from` (a node at a dominating index) to `to`,
/// visiting dimensions in `order`.
fn descend_in_order(
    params: &ChainParams,
    from: &Node,
    to: &NodeIndex,
    order: &[usize],
    counter: &mut OpCounter,
) -> Result<BigUint, ChainError> {
    if !to.dominated_by(&from.index) {
        return Err(ChainError::NotAncestor {
            index: to.clone(),
            node: from.index.clone(),
        });
    }
    let mut value = from.value.clone();
    for &dim in order {
        let steps = from.index.0[dim] - to.0[dim];
        value = hash_times(params, dim, &value, steps, counter)?;
    }
    Ok(value)
}

/// Hashes `node` down to the ancestor position `ancestor`; costs
/// `sum(k_i - a_i)` exponentiations.
pub fn descend(
    params: &ChainParams,
    node: &Node,
    ancestor: &NodeIndex,
    counter: &mut OpCounter,
) -> Result<BigUint, ChainError> {
    params.check_index(&node.index)?;
    let order: Vec<usize> = (0..params.dims()).collect();
    descend_in_order(params, node, ancestor, &order, counter)
}

/// Value at `index`, hashing forward from the starting node in ascending
/// dimension order.
pub fn node_at(chain: &SecretChain, index: &NodeIndex, counter: &mut OpCounter) -> Result<Node, ChainError> {
    let order: Vec<usize> = (0..chain.params.dims()).collect();
    node_at_in_order(chain, index, &order, counter)
}

/// As [`node_at`], visiting dimensions in the given order. `order` must be a
/// permutation of `0..m`.
pub fn node_at_in_order(
    chain: &SecretChain,
    index: &NodeIndex,
    order: &[usize],
    counter: &mut OpCounter,
) -> Result<Node, ChainError> {
    let params = &chain.params;
    params.check_index(index)?;
    let mut seen = vec![false; params.dims()];
    for &d in order {
        match seen.get_mut(d) {
            Some(s) if !*s => *s = true,
            _ => {
                return Err(ChainError::DimensionOutOfRange {
                    dim: d,
                    dims: params.dims(),
                })
            }
        }
    }
    if seen.iter().any(|s| !s) {
        return Err(ChainError::DimensionMismatch {
            exponents: params.dims(),
            sizes: order.len(),
        });
    }
    let value = descend_in_order(params, &chain.start_node(), index, order, counter)?;
    Ok(Node {
        index: index.clone(),
        value,
    })
}

/// Root by forward hashing: `sum(n_i)` exponentiations.
pub fn root_naive(chain: &SecretChain, counter: &mut OpCounter) -> Node {
    let root = chain.params.root_index();
    node_at(chain, &root, counter).expect("root index is always in range")
}

/// `prod c_i^{e_i} mod E`, by repeated modular multiplication.
pub(crate) fn exponent_product<'a>(
    factors: impl IntoIterator<Item = (&'a BigUint, u64)>,
    totient: &BigUint,
    counter: &mut OpCounter,
) -> BigUint {
    let mut acc = BigUint::one() % totient;
    for (c, times) in factors {
        for _ in 0..times {
            acc = (acc * c) % totient;
            counter.modmul += 1;
        }
    }
    acc
}

/// Root from the trapdoor: `X_N^{prod c_i^{n_i} mod E} mod M`, one modular
/// exponentiation plus `sum(n_i)` multiplications modulo `E`.
pub fn root_trapdoor(chain: &SecretChain, counter: &mut OpCounter) -> Result<Node, ChainError> {
    let trapdoor = chain.trapdoor.as_ref().ok_or(ChainError::MissingTrapdoor)?;
    let params = &chain.params;
    let exponent = exponent_product(
        params.exponents.iter().zip(params.sizes.iter().copied()),
        trapdoor.totient(),
        counter,
    );
    counter.modexp += 1;
    let value = mod_pow(&chain.start, &exponent, params.modulus());
    Ok(Node {
        index: params.root_index(),
        value,
    })
}

/// Whether `child` hashes to `parent` under `h_dim`. Errors when the indices
/// are not one step apart in `dim`.
pub fn verify_edge(params: &ChainParams, child: &Node, parent: &Node, dim: usize) -> Result<bool, ChainError> {
    params.exponent(dim)?;
    params.check_index(&child.index)?;
    params.check_index(&parent.index)?;
    if parent.index.step_up(dim) != child.index {
        return Err(ChainError::NotAdjacent {
            child: child.index.clone(),
            parent: parent.index.clone(),
            dim,
        });
    }
    let mut scratch = OpCounter::new();
    Ok(apply_hash(params, dim, &child.value, &mut scratch)? == parent.value)
}

/// Whether hashing `node` down `k_i` times per dimension yields `root`.
pub fn verify_path_to_root(params: &ChainParams, node: &Node, root: &BigUint, counter: &mut OpCounter) -> bool {
    if !params.contains(&node.index) {
        return false;
    }
    match descend(params, node, &params.root_index(), counter) {
        Ok(value) => &value == root,
        Err(_) => false,
    }
}

/// How a holder of the starting node keeps nodes around to answer requests.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TraversalStrategy {
    /// Precompute and keep every node.
    StoreAll,
    /// Keep only the starting node and hash forward per request.
    StoreRootOnly,
    /// Keep nodes whose distance from the start is a multiple of `t` in every
    /// dimension.
    CheckpointEvery(u64),
}

/// Measured cost of answering a request sequence.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TraversalReport {
    pub node_count: u128,
    pub precompute_modexps: u64,
    pub per_request_modexps: Vec<u64>,
    pub peak_storage: u128,
}

impl TraversalReport {
    pub fn worst_modexps(&self) -> u64 {
        self.per_request_modexps.iter().copied().max().unwrap_or(0)
    }

    /// Storage times worst-case traversal cost.
    pub fn product(&self) -> u128 {
        self.peak_storage * self.worst_modexps() as u128
    }
}

/// Mixed-radix addressing of a (sub)lattice.
struct Lattice {
    sizes: Vec<u64>,
}

impl Lattice {
    fn len(&self) -> u128 {
        self.sizes.iter().map(|&n| n as u128 + 1).product()
    }

    fn flat(&self, index: &[u64]) -> usize {
        let mut flat = 0u128;
        for (k, n) in index.iter().zip(&self.sizes).rev() {
            flat = flat * (*n as u128 + 1) + *k as u128;
        }
        flat as usize
    }

    fn unflat(&self, mut flat: usize) -> Vec<u64> {
        self.sizes
            .iter()
            .map(|&n| {
                let radix = n as usize + 1;
                let k = flat % radix;
                flat /= radix;
                k as u64
            })
            .collect()
    }
}

/// Materializes `values[flat(j)] = node at (n - j*t)` for every `j` in the
/// reduced lattice, each derived from a neighbour `t` hashes away.
fn materialize(
    params: &ChainParams,
    start: &BigUint,
    spacing: u64,
    counter: &mut OpCounter,
) -> Result<(Lattice, Vec<BigUint>), ChainError> {
    let reduced = Lattice {
        sizes: params.sizes().iter().map(|n| n / spacing).collect(),
    };
    let len = reduced.len();
    if len > MAX_MATERIALIZED_NODES {
        return Err(ChainError::LatticeTooLarge(len));
    }
    let mut values: Vec<BigUint> = vec![BigUint::default(); len as usize];
    values[0] = start.clone();
    // reduced coordinate j corresponds to real coordinate n - j * spacing
    for flat in 1..len as usize {
        let j = reduced.unflat(flat);
        let dim = j.iter().position(|&c| c > 0).expect("non-zero flat index");
        let mut prev = j.clone();
        prev[dim] -= 1;
        let from = &values[reduced.flat(&prev)];
        values[flat] = hash_times(params, dim, from, spacing, counter)?;
    }
    Ok((reduced, values))
}

/// Answers every request under `strategy` and reports the exponentiations
/// spent per request and the peak number of nodes held.
pub fn measure_traversal(
    chain: &SecretChain,
    strategy: TraversalStrategy,
    requests: &[NodeIndex],
) -> Result<TraversalReport, ChainError> {
    let params = chain.params();
    for r in requests {
        params.check_index(r)?;
    }
    let node_count = params.node_count().ok_or(ChainError::LatticeTooLarge(u128::MAX))?;
    let mut per_request = Vec::with_capacity(requests.len());
    let (precompute_modexps, peak_storage) = match strategy {
        TraversalStrategy::StoreRootOnly => {
            for r in requests {
                let mut counter = OpCounter::new();
                node_at(chain, r, &mut counter)?;
                per_request.push(counter.modexp);
            }
            (0, 1)
        }
        TraversalStrategy::StoreAll => {
            let mut pre = OpCounter::new();
            let (lattice, values) = materialize(params, chain.start(), 1, &mut pre)?;
            for r in requests {
                let distance: Vec<u64> = r.0.iter().zip(params.sizes()).map(|(k, n)| n - k).collect();
                let _value = &values[lattice.flat(&distance)];
                per_request.push(0);
            }
            (pre.modexp, lattice.len())
        }
        TraversalStrategy::CheckpointEvery(t) => {
            if t == 0 {
                return Err(ChainError::InvalidCheckpointSpacing);
            }
            let mut pre = OpCounter::new();
            let (lattice, values) = materialize(params, chain.start(), t, &mut pre)?;
            for r in requests {
                // nearest stored node at or above the request in every dimension
                let reduced: Vec<u64> = r.0.iter().zip(params.sizes()).map(|(k, n)| (n - k) / t).collect();
                let checkpoint = Node {
                    index: NodeIndex(params.sizes().iter().zip(&reduced).map(|(n, j)| n - j * t).collect()),
                    value: values[lattice.flat(&reduced)].clone(),
                };
                let mut counter = OpCounter::new();
                descend(params, &checkpoint, r, &mut counter)?;
                per_request.push(counter.modexp);
            }
            (pre.modexp, lattice.len())
        }
    };
    Ok(TraversalReport {
        node_count,
        precompute_modexps,
        per_request_modexps: per_request,
        peak_storage,
    })
}

/// Every index of the lattice in row-major order from the root.
pub fn all_indices(params: &ChainParams) -> Result<Vec<NodeIndex>, ChainError> {
    let lattice = Lattice {
        sizes: params.sizes().to_vec(),
    };
    let len = lattice.len();
    if len > MAX_MATERIALIZED_NODES {
        return Err(ChainError::LatticeTooLarge(len));
    }
    Ok((0..len as usize).map(|f| NodeIndex(lattice.unflat(f))).collect())
}
