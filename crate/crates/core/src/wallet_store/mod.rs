//! Canonical text form of protocol objects and the on-disk layout.
//!
//! Every object file is a JSON envelope
//!
//! ```text
//! {
//!   "schema": "<name>",
//!   "version": <n>,
//!   "payload": { .. }
//! }
//! ```
//!
//! pretty-printed with two-space indent and a trailing newline. Field order
//! is the struct declaration order and big integers are lowercase hex with no
//! leading zeros, so encoding is a function of the value alone and digests of
//! the bytes are stable.
//!
//! A store directory holds
//!
//! | file | contents |
//! |------|----------|
//! | `params.public.json` | [`PublicParams`] |
//! | `params.private.json` | [`Issuer`] |
//! | `batch.<id>.json` | [`S1Batch`] or [`S2Batch`] |
//! | `wallet.<owner>.json` | [`Wallet`] |
//! | `ledger.jsonl` | one [`ledger::LedgerRecord`] per line |

pub mod hex;
pub mod ledger;

use std::fs;
use std::io::{self, Write as _};
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use self::hex::{hex_biguint, hex_biguint_vec, hex_bytes, HexBig, HexError};
use self::ledger::Ledger;
use crate::bank::{Issuer, PublicParams, RootId, StateError};
use crate::chain::{ChainParams, Node};
use crate::numtheory::{ExponentSet, TrapdoorModulus};
use crate::payword::{PaywordCommitment, SpendState};
use crate::scheme_s1::{CoinS1, S1Batch};
use crate::scheme_s2::{ChainCoin, CoinChainHandle, CustomerChain, S2Batch};
use crate::signature::{PublicKey, SignatureKeypair};

#[derive(Debug, Error)]
pub enum StoreError {
    #[error("malformed document: {0}")]
    Syntax(String),
    #[error("expected schema {expected:?}, found {found:?}")]
    WrongSchema { expected: &'static str, found: String },
    #[error("schema {schema:?} version {found} is not supported (expected {expected})")]
    WrongVersion {
        schema: &'static str,
        expected: u32,
        found: u32,
    },
    #[error("{schema}: {rule}")]
    Invariant { schema: &'static str, rule: String },
    #[error("ledger line {line}: {reason}")]
    LedgerRecord { line: usize, reason: String },
    #[error("ledger record {seq}: {source}")]
    Replay { seq: u64, source: StateError },
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: io::Error },
}

/// An object with a named, versioned file form.
pub trait Schema: Serialize + DeserializeOwned {
    const NAME: &'static str;
    const VERSION: u32 = 1;

    /// Rules serde cannot express; the message names the violated rule.
    fn validate(&self) -> Result<(), String> {
        Ok(())
    }
}

#[derive(Serialize)]
struct EnvelopeOut<'a, T> {
    schema: &'static str,
    version: u32,
    payload: &'a T,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct EnvelopeIn {
    schema: String,
    version: u32,
    payload: serde_json::Value,
}

pub fn encode<T: Schema>(object: &T) -> Result<String, StoreError> {
    object
        .validate()
        .map_err(|rule| StoreError::Invariant { schema: T::NAME, rule })?;
    let envelope = EnvelopeOut {
        schema: T::NAME,
        version: T::VERSION,
        payload: object,
    };
    let mut text = serde_json::to_string_pretty(&envelope).map_err(|e| StoreError::Syntax(e.to_string()))?;
    text.push('\n');
    Ok(text)
}

pub fn decode<T: Schema>(text: &str) -> Result<T, StoreError> {
    let envelope: EnvelopeIn = serde_json::from_str(text).map_err(|e| StoreError::Syntax(e.to_string()))?;
    if envelope.schema != T::NAME {
        return Err(StoreError::WrongSchema {
            expected: T::NAME,
            found: envelope.schema,
        });
    }
    if envelope.version != T::VERSION {
        return Err(StoreError::WrongVersion {
            schema: T::NAME,
            expected: T::VERSION,
            found: envelope.version,
        });
    }
    let object: T = T::deserialize(envelope.payload).map_err(|e| StoreError::Invariant {
        schema: T::NAME,
        rule: e.to_string(),
    })?;
    object
        .validate()
        .map_err(|rule| StoreError::Invariant { schema: T::NAME, rule })?;
    Ok(object)
}

fn check_hashable(value: &num_bigint::BigUint, modulus_hint: &str) -> Result<(), String> {
    if *value < num_bigint::BigUint::from(2u8) {
        return Err(format!("{modulus_hint} must be at least 2"));
    }
    Ok(())
}

impl Schema for PublicParams {
    const NAME: &'static str = "public_params";
}

impl Schema for Issuer {
    const NAME: &'static str = "issuer";
}

impl Schema for TrapdoorModulus {
    const NAME: &'static str = "trapdoor_modulus";
}

impl Schema for ExponentSet {
    const NAME: &'static str = "exponent_set";
}

impl Schema for ChainParams {
    const NAME: &'static str = "chain_params";
}

impl Schema for Node {
    const NAME: &'static str = "node";
}

impl Schema for CoinS1 {
    const NAME: &'static str = "coin_s1";

    fn validate(&self) -> Result<(), String> {
        check_hashable(&self.value, "coin value")
    }
}

impl Schema for S1Batch {
    const NAME: &'static str = "batch_s1";

    fn validate(&self) -> Result<(), String> {
        if RootId::of(&self.root) != self.root_id {
            return Err("root_id must be the digest of root".into());
        }
        for coin in &self.coins {
            coin.validate()?;
            if coin.root_id != self.root_id || coin.batch_id != self.batch_id {
                return Err("every coin must belong to the batch root".into());
            }
        }
        Ok(())
    }
}

impl Schema for CoinChainHandle {
    const NAME: &'static str = "chain_handle";

    fn validate(&self) -> Result<(), String> {
        if self.length == 0 || self.length > crate::scheme_s2::MAX_CHAIN_LENGTH {
            return Err(format!(
                "chain length must be between 1 and {}",
                crate::scheme_s2::MAX_CHAIN_LENGTH
            ));
        }
        check_hashable(&self.start, "chain start")
    }
}

impl Schema for ChainCoin {
    const NAME: &'static str = "chain_coin";

    fn validate(&self) -> Result<(), String> {
        if self.position == 0 {
            return Err("positions start at 1".into());
        }
        check_hashable(&self.value, "coin value")
    }
}

impl Schema for S2Batch {
    const NAME: &'static str = "batch_s2";

    fn validate(&self) -> Result<(), String> {
        if RootId::of(&self.root) != self.root_id {
            return Err("root_id must be the digest of root".into());
        }
        for chain in &self.chains {
            chain.validate()?;
            if chain.root_id != self.root_id || chain.batch_id != self.batch_id || chain.length != self.length {
                return Err("every chain must belong to the batch root and share its length".into());
            }
        }
        Ok(())
    }
}

impl Schema for CustomerChain {
    const NAME: &'static str = "customer_chain";
}

impl Schema for PaywordCommitment {
    const NAME: &'static str = "payword_commitment";
}

impl Schema for SpendState {
    const NAME: &'static str = "spend_state";
}

impl Schema for PublicKey {
    const NAME: &'static str = "public_key";
}

impl Schema for SignatureKeypair {
    const NAME: &'static str = "signature_keypair";
}

/// Everything one party holds. Customers fill `s1_coins` and `s2_chains`;
/// vendors keep payments in `inbox_*` until checked, then in `accepted_*`
/// (the latest coin per chain for S2).
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Wallet {
    pub owner: String,
    #[serde(default)]
    pub s1_coins: Vec<CoinS1>,
    #[serde(default)]
    pub s2_chains: Vec<CustomerChain>,
    #[serde(default)]
    pub inbox_s1: Vec<CoinS1>,
    #[serde(default)]
    pub inbox_s2: Vec<ChainCoin>,
    #[serde(default)]
    pub accepted_s1: Vec<CoinS1>,
    #[serde(default)]
    pub accepted_s2: Vec<ChainCoin>,
}

impl Wallet {
    pub fn new(owner: impl Into<String>) -> Self {
        Wallet {
            owner: owner.into(),
            ..Wallet::default()
        }
    }
}

impl Schema for Wallet {
    const NAME: &'static str = "wallet";

    fn validate(&self) -> Result<(), String> {
        check_name(&self.owner)?;
        self.s1_coins
            .iter()
            .chain(&self.inbox_s1)
            .chain(&self.accepted_s1)
            .try_for_each(Schema::validate)?;
        self.inbox_s2
            .iter()
            .chain(&self.accepted_s2)
            .try_for_each(Schema::validate)
    }
}

/// Owner names become file names, so they are restricted to
/// `[A-Za-z0-9_-]{1,64}`.
pub fn check_name(name: &str) -> Result<(), String> {
    let ok =
        !name.is_empty() && name.len() <= 64 && name.chars().all(|c| c.is_ascii_alphanumeric() || c == '_' || c == '-');
    if ok {
        Ok(())
    } else {
        Err(format!("name {name:?} must match [A-Za-z0-9_-]{{1,64}}"))
    }
}

/// A directory of protocol files.
#[derive(Debug, Clone)]
pub struct StoreDir {
    root: PathBuf,
}

impl StoreDir {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        StoreDir { root: root.into() }
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn create(&self) -> Result<(), StoreError> {
        fs::create_dir_all(&self.root).map_err(|source| StoreError::Io {
            path: self.root.clone(),
            source,
        })
    }

    pub fn params_public(&self) -> PathBuf {
        self.root.join("params.public.json")
    }

    pub fn params_private(&self) -> PathBuf {
        self.root.join("params.private.json")
    }

    pub fn batch(&self, batch_id: u64) -> PathBuf {
        self.root.join(format!("batch.{batch_id}.json"))
    }

    pub fn wallet(&self, owner: &str) -> PathBuf {
        self.root.join(format!("wallet.{owner}.json"))
    }

    pub fn ledger(&self) -> PathBuf {
        self.root.join("ledger.jsonl")
    }

    pub fn write<T: Schema>(&self, path: &Path, object: &T) -> Result<(), StoreError> {
        write_atomic(path, encode(object)?.as_bytes())
    }

    pub fn read<T: Schema>(&self, path: &Path) -> Result<T, StoreError> {
        decode(&read_text(path)?)
    }

    /// The owner's wallet, or an empty one if none is stored yet.
    pub fn load_wallet(&self, owner: &str) -> Result<Wallet, StoreError> {
        let path = self.wallet(owner);
        if path.exists() {
            self.read(&path)
        } else {
            check_name(owner).map_err(|rule| StoreError::Invariant {
                schema: Wallet::NAME,
                rule,
            })?;
            Ok(Wallet::new(owner))
        }
    }

    /// The ledger, or an empty one if the file does not exist. An unterminated
    /// last line (a write in progress) is not part of the ledger yet.
    pub fn load_ledger(&self) -> Result<Ledger, StoreError> {
        let path = self.ledger();
        if !path.exists() {
            return Ok(Ledger::default());
        }
        Ledger::parse_prefix(&read_text(&path)?)
    }

    /// Appends the records of `ledger` beyond the first `persisted` ones.
    pub fn append_ledger(&self, ledger: &Ledger, persisted: usize) -> Result<(), StoreError> {
        let path = self.ledger();
        let io_err = |source| StoreError::Io {
            path: path.clone(),
            source,
        };
        let tail = ledger.render_from(persisted);
        if tail.is_empty() {
            return Ok(());
        }
        let mut file = fs::OpenOptions::new()
            .create(true)
            .append(true)
            .open(&path)
            .map_err(io_err)?;
        file.write_all(tail.as_bytes()).map_err(io_err)?;
        file.sync_data().map_err(io_err)
    }
}

fn read_text(path: &Path) -> Result<String, StoreError> {
    fs::read_to_string(path).map_err(|source| StoreError::Io {
        path: path.to_path_buf(),
        source,
    })
}

fn write_atomic(path: &Path, bytes: &[u8]) -> Result<(), StoreError> {
    let io_err = |source| StoreError::Io {
        path: path.to_path_buf(),
        source,
    };
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".tmp");
    let tmp = PathBuf::from(tmp);
    fs::write(&tmp, bytes).map_err(io_err)?;
    fs::rename(&tmp, path).map_err(io_err)
}
