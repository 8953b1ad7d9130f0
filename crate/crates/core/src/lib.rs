//! Multi-dimensional hash chains built from commutative RSA exponentiations,
//! and the micropayment schemes that run on them:
//!
//! * [`scheme_s1`]: single coins `(X_i, c_i)` sharing one published root,
//! * [`scheme_s2`]: coin chains of `n` coins each, verified by one hash per coin,
//! * [`payword`]: PayWord commitments with positional denominations or one
//!   dimension per vendor.
//!
//! [`chain`] holds the lattice itself and [`numtheory`] the arithmetic under
//! it. [`wallet_store`] gives every protocol object a canonical text form and
//! keeps the bank's append-only ledger; [`scenario`] runs scripted
//! bank/customer/vendor exchanges end to end.

pub mod bank;
pub mod chain;
pub mod numtheory;
pub mod payword;
pub mod scenario;
pub mod scheme_s1;
pub mod scheme_s2;
pub mod seed;
pub mod signature;
pub mod wallet_store;

pub use bank::{Bank, BankEvent, BankState, Issuer, PublicParams, Rejection, RootId};
pub use chain::{ChainParams, Node, NodeIndex, OpCounter, SecretChain, TraversalStrategy};
pub use numtheory::{ExponentSet, Profile, TrapdoorModulus};
pub use seed::Seed;
