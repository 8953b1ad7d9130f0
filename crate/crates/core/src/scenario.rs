//! Scripted multi-party runs.
//!
//! A script declares its actors (one bank, any number of customers and
//! vendors) and a list of steps, each with the outcome it expects: `ok` or
//! the name of a [`Rejection`]. The runner executes the steps in order and
//! records what actually happened; a run passes when every step matched.
//!
//! ```toml
//! name = "s1-double-spend"
//! profile = "toy"
//! seed = "5eed"
//! exponents = 4
//!
//! [actors]
//! bank = "bank"
//! alice = "customer"
//! shop = "vendor"
//!
//! [[steps]]
//! actor = "bank"
//! action = "mint"
//! scheme = "s1"
//! customer = "alice"
//! name = "b1"
//!
//! [[steps]]
//! actor = "alice"
//! action = "pay"
//! from = "b1"
//! to = "shop"
//! ```
//!
//! Actions by role:
//!
//! * bank: `mint` (`scheme`, `customer`, `name`, `count` for s1, `length`
//!   for s2, optional `vendor` tag), `settle` (`commitment`), `audit`
//!   (`account`, `credited` and/or `debited`)
//! * customer: `commit` (`name`, `purpose`, `size`/`dims` or `vendors`/`sizes`),
//!   `pay` (`from`, `to`, optional `coin`, `chain`, `amount`)
//! * vendor: `verify` (optional `offline`), `deposit`, `redeem`
//!
//! `pay` only hands the object over; the vendor checks it on `verify`.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use rand_chacha::ChaCha20Rng;
use serde::Deserialize;
use thiserror::Error;

use crate::bank::{draw_start, Bank, CoinTags, Issuer, Rejection};
use crate::chain::{ChainParams, Node, OpCounter, SecretChain};
use crate::numtheory::{NumTheoryError, Profile};
use crate::payword::{
    commit, pay_denominated, pay_vendor, DenominatedVendor, MultivendorSession, PaywordCommitment, Purpose, SpendState,
};
use crate::scheme_s1::{CoinId, CoinS1, S1Vendor};
use crate::scheme_s2::{ChainCoin, CustomerChain, GapPolicy, S2Vendor};
use crate::seed::Seed;
use crate::signature::{PublicKey, SignatureKeypair};
use crate::wallet_store::check_name;

/// Key size for customer commitment signatures.
pub const CUSTOMER_KEY_BITS: u64 = 512;

/// Scripts shipped with the library, by name.
pub const BUNDLED: &[(&str, &str)] = &[
    ("s1-double-spend", include_str!("../scenarios/s1-double-spend.toml")),
    ("s1-lifecycle", include_str!("../scenarios/s1-lifecycle.toml")),
    ("s2-chain", include_str!("../scenarios/s2-chain.toml")),
    ("denominations", include_str!("../scenarios/denominations.toml")),
    ("multivendor", include_str!("../scenarios/multivendor.toml")),
];

pub fn bundled(name: &str) -> Option<&'static str> {
    BUNDLED.iter().find(|(n, _)| *n == name).map(|(_, text)| *text)
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ScenarioError {
    #[error("{0}")]
    Syntax(String),
    #[error("step {step}: {reason}")]
    Step { step: usize, reason: String },
    #[error("{0}")]
    Header(String),
    #[error("setting up the issuer: {0}")]
    Setup(#[from] NumTheoryError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Role {
    Bank,
    Customer,
    Vendor,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SchemeKind {
    S1,
    S2,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "snake_case")]
enum ActionKind {
    Mint,
    Commit,
    Pay,
    Verify,
    Deposit,
    Redeem,
    Settle,
    Audit,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "snake_case")]
enum PurposeKind {
    Denomination,
    Multivendor,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawScript {
    name: String,
    #[serde(default)]
    description: String,
    profile: String,
    seed: String,
    exponents: usize,
    actors: BTreeMap<String, Role>,
    #[serde(default)]
    steps: Vec<RawStep>,
}

#[derive(Deserialize, Default)]
#[serde(deny_unknown_fields)]
struct RawStep {
    actor: String,
    action: Option<ActionKind>,
    expect: Option<String>,
    scheme: Option<SchemeKind>,
    count: Option<u32>,
    length: Option<u64>,
    customer: Option<String>,
    vendor: Option<String>,
    name: Option<String>,
    purpose: Option<PurposeKind>,
    size: Option<u64>,
    dims: Option<usize>,
    sizes: Option<Vec<u64>>,
    vendors: Option<Vec<String>>,
    from: Option<String>,
    to: Option<String>,
    coin: Option<u32>,
    chain: Option<u32>,
    amount: Option<u64>,
    offline: Option<bool>,
    commitment: Option<String>,
    account: Option<String>,
    credited: Option<u64>,
    debited: Option<u64>,
}

/// What a step is expected to produce.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Expect {
    Ok,
    Reject(Rejection),
}

impl Expect {
    fn parse(text: &str) -> Result<Self, String> {
        if text == "ok" {
            return Ok(Expect::Ok);
        }
        serde_json::from_value(serde_json::Value::String(text.to_string()))
            .map(Expect::Reject)
            .map_err(|_| format!("unknown expected outcome {text:?}"))
    }
}

impl fmt::Display for Expect {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Expect::Ok => f.write_str("ok"),
            Expect::Reject(r) => f.write_str(r.name()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum CommitSpec {
    Denomination { size: u64, dims: usize },
    Multivendor { vendors: Vec<String>, sizes: Vec<u64> },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Action {
    Mint {
        scheme: SchemeKind,
        customer: String,
        name: String,
        count: Option<u32>,
        length: u64,
        vendor: Option<String>,
    },
    Commit {
        name: String,
        spec: CommitSpec,
    },
    Pay {
        from: String,
        to: String,
        coin: Option<u32>,
        chain: Option<u32>,
        amount: Option<u64>,
    },
    Verify {
        offline: bool,
    },
    Deposit,
    Redeem,
    Settle {
        commitment: String,
    },
    Audit {
        account: String,
        credited: Option<u64>,
        debited: Option<u64>,
    },
}

impl Action {
    pub fn name(&self) -> &'static str {
        match self {
            Action::Mint { .. } => "mint",
            Action::Commit { .. } => "commit",
            Action::Pay { .. } => "pay",
            Action::Verify { .. } => "verify",
            Action::Deposit => "deposit",
            Action::Redeem => "redeem",
            Action::Settle { .. } => "settle",
            Action::Audit { .. } => "audit",
        }
    }

    fn role(&self) -> Role {
        match self {
            Action::Mint { .. } | Action::Settle { .. } | Action::Audit { .. } => Role::Bank,
            Action::Commit { .. } | Action::Pay { .. } => Role::Customer,
            Action::Verify { .. } | Action::Deposit | Action::Redeem => Role::Vendor,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Step {
    pub actor: String,
    pub action: Action,
    pub expect: Expect,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum ObjectKind {
    S1Batch,
    S2Batch,
    Denomination,
    Multivendor,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ScenarioScript {
    pub name: String,
    pub description: String,
    pub profile: Profile,
    pub seed: Seed,
    pub exponents: usize,
    pub actors: BTreeMap<String, Role>,
    pub steps: Vec<Step>,
}

/// Collects the fields a step sets so leftovers can be reported.
struct Fields<'a> {
    step: usize,
    raw: &'a mut RawStep,
}

macro_rules! take {
    ($f:expr, $field:ident) => {
        $f.raw.$field.take()
    };
}

macro_rules! need {
    ($f:expr, $field:ident) => {
        $f.raw
            .$field
            .take()
            .ok_or_else(|| $f.err(concat!("missing field `", stringify!($field), "`")))?
    };
}

impl Fields<'_> {
    fn err(&self, reason: impl Into<String>) -> ScenarioError {
        ScenarioError::Step {
            step: self.step,
            reason: reason.into(),
        }
    }

    fn leftovers(&self) -> Vec<&'static str> {
        let r = &self.raw;
        let set = [
            ("scheme", r.scheme.is_some()),
            ("count", r.count.is_some()),
            ("length", r.length.is_some()),
            ("customer", r.customer.is_some()),
            ("vendor", r.vendor.is_some()),
            ("name", r.name.is_some()),
            ("purpose", r.purpose.is_some()),
            ("size", r.size.is_some()),
            ("dims", r.dims.is_some()),
            ("sizes", r.sizes.is_some()),
            ("vendors", r.vendors.is_some()),
            ("from", r.from.is_some()),
            ("to", r.to.is_some()),
            ("coin", r.coin.is_some()),
            ("chain", r.chain.is_some()),
            ("amount", r.amount.is_some()),
            ("offline", r.offline.is_some()),
            ("commitment", r.commitment.is_some()),
            ("account", r.account.is_some()),
            ("credited", r.credited.is_some()),
            ("debited", r.debited.is_some()),
        ];
        set.iter().filter(|(_, present)| *present).map(|(n, _)| *n).collect()
    }
}

fn build_action(kind: ActionKind, f: &mut Fields<'_>) -> Result<Action, ScenarioError> {
    let action = match kind {
        ActionKind::Mint => {
            let scheme = need!(f, scheme);
            let customer = need!(f, customer);
            let name = need!(f, name);
            let vendor = take!(f, vendor);
            match scheme {
                SchemeKind::S1 => Action::Mint {
                    scheme,
                    customer,
                    name,
                    count: take!(f, count),
                    length: 1,
                    vendor,
                },
                SchemeKind::S2 => {
                    let length = need!(f, length);
                    if length == 0 || length > crate::scheme_s2::MAX_CHAIN_LENGTH {
                        return Err(f.err(format!(
                            "chain length must be between 1 and {}",
                            crate::scheme_s2::MAX_CHAIN_LENGTH
                        )));
                    }
                    Action::Mint {
                        scheme,
                        customer,
                        name,
                        count: None,
                        length,
                        vendor,
                    }
                }
            }
        }
        ActionKind::Commit => {
            let name = need!(f, name);
            let spec = match need!(f, purpose) {
                PurposeKind::Denomination => CommitSpec::Denomination {
                    size: need!(f, size),
                    dims: need!(f, dims),
                },
                PurposeKind::Multivendor => {
                    let vendors: Vec<String> = need!(f, vendors);
                    let sizes = match take!(f, sizes) {
                        Some(s) => s,
                        None => vec![need!(f, size); vendors.len()],
                    };
                    if sizes.len() != vendors.len() {
                        return Err(f.err("`sizes` needs one entry per vendor"));
                    }
                    CommitSpec::Multivendor { vendors, sizes }
                }
            };
            Action::Commit { name, spec }
        }
        ActionKind::Pay => Action::Pay {
            from: need!(f, from),
            to: need!(f, to),
            coin: take!(f, coin),
            chain: take!(f, chain),
            amount: take!(f, amount),
        },
        ActionKind::Verify => Action::Verify {
            offline: take!(f, offline).unwrap_or(false),
        },
        ActionKind::Deposit => Action::Deposit,
        ActionKind::Redeem => Action::Redeem,
        ActionKind::Settle => Action::Settle {
            commitment: need!(f, commitment),
        },
        ActionKind::Audit => {
            let account = need!(f, account);
            let (credited, debited) = (take!(f, credited), take!(f, debited));
            if credited.is_none() && debited.is_none() {
                return Err(f.err("audit needs `credited` or `debited`"));
            }
            Action::Audit {
                account,
                credited,
                debited,
            }
        }
    };
    let left = f.leftovers();
    if let Some(first) = left.first() {
        return Err(f.err(format!("field `{first}` is not used by action {}", action.name())));
    }
    Ok(action)
}

impl ScenarioScript {
    pub fn parse(text: &str) -> Result<Self, ScenarioError> {
        let raw: RawScript = toml::from_str(text).map_err(|e| ScenarioError::Syntax(e.to_string()))?;
        let profile = Profile::by_name(&raw.profile)
            .ok_or_else(|| ScenarioError::Header(format!("unknown profile {:?}", raw.profile)))?;
        let seed = Seed::from_hex(&raw.seed).map_err(|e| ScenarioError::Header(format!("seed: {e}")))?;
        if raw.exponents < 2 {
            return Err(ScenarioError::Header("at least 2 exponents are needed".into()));
        }
        for name in raw.actors.keys() {
            check_name(name).map_err(ScenarioError::Header)?;
        }
        let banks = raw.actors.values().filter(|r| **r == Role::Bank).count();
        if banks != 1 {
            return Err(ScenarioError::Header(format!(
                "exactly one bank actor is needed, found {banks}"
            )));
        }
        let mut steps = Vec::with_capacity(raw.steps.len());
        let mut objects: BTreeMap<String, (ObjectKind, String)> = BTreeMap::new();
        for (i, mut raw_step) in raw.steps.into_iter().enumerate() {
            let step_no = i + 1;
            let err = |reason: String| ScenarioError::Step { step: step_no, reason };
            let kind = raw_step
                .action
                .take()
                .ok_or_else(|| err("missing field `action`".into()))?;
            let expect = match raw_step.expect.take() {
                Some(text) => Expect::parse(&text).map_err(err)?,
                None => Expect::Ok,
            };
            let actor = std::mem::take(&mut raw_step.actor);
            let action = build_action(
                kind,
                &mut Fields {
                    step: step_no,
                    raw: &mut raw_step,
                },
            )?;
            let role = *raw
                .actors
                .get(&actor)
                .ok_or_else(|| err(format!("actor {actor:?} is not declared")))?;
            if role != action.role() {
                return Err(err(format!(
                    "{actor:?} cannot {}: it is not a {:?}",
                    action.name(),
                    action.role()
                )));
            }
            let want_role = |name: &str, role: Role| -> Result<(), ScenarioError> {
                match raw.actors.get(name) {
                    Some(r) if *r == role => Ok(()),
                    Some(_) => Err(err(format!("{name:?} is not a {role:?}"))),
                    None => Err(err(format!("actor {name:?} is not declared"))),
                }
            };
            let mut define = |name: &str, kind: ObjectKind, owner: &str| -> Result<(), ScenarioError> {
                check_name(name).map_err(err)?;
                if objects.insert(name.to_string(), (kind, owner.to_string())).is_some() {
                    return Err(err(format!("object {name:?} is defined twice")));
                }
                Ok(())
            };
            match &action {
                Action::Mint {
                    scheme,
                    customer,
                    name,
                    count,
                    vendor,
                    ..
                } => {
                    want_role(customer, Role::Customer)?;
                    if let Some(v) = vendor {
                        want_role(v, Role::Vendor)?;
                    }
                    if let Some(c) = count {
                        if *c as usize > raw.exponents {
                            return Err(err(format!("count {c} exceeds the {} exponents", raw.exponents)));
                        }
                    }
                    let kind = if *scheme == SchemeKind::S1 {
                        ObjectKind::S1Batch
                    } else {
                        ObjectKind::S2Batch
                    };
                    define(name, kind, customer)?;
                }
                Action::Commit { name, spec } => {
                    let (kind, dims) = match spec {
                        CommitSpec::Denomination { dims, .. } => (ObjectKind::Denomination, *dims),
                        CommitSpec::Multivendor { vendors, .. } => {
                            for v in vendors {
                                want_role(v, Role::Vendor)?;
                            }
                            (ObjectKind::Multivendor, vendors.len())
                        }
                    };
                    if dims == 0 || dims > raw.exponents {
                        return Err(err(format!(
                            "{dims} dimensions, but the bank publishes {} exponents",
                            raw.exponents
                        )));
                    }
                    define(name, kind, &actor)?;
                }
                Action::Pay {
                    from,
                    to,
                    coin,
                    chain,
                    amount,
                } => {
                    want_role(to, Role::Vendor)?;
                    let (kind, owner) = objects
                        .get(from)
                        .ok_or_else(|| err(format!("object {from:?} is not defined yet")))?;
                    if *owner != actor {
                        return Err(err(format!("{from:?} belongs to {owner:?}")));
                    }
                    let allowed: &[&str] = match kind {
                        ObjectKind::S1Batch => &["coin"],
                        ObjectKind::S2Batch => &["chain"],
                        ObjectKind::Denomination => &["amount"],
                        ObjectKind::Multivendor => &[],
                    };
                    for (field, present) in [
                        ("coin", coin.is_some()),
                        ("chain", chain.is_some()),
                        ("amount", amount.is_some()),
                    ] {
                        if present && !allowed.contains(&field) {
                            return Err(err(format!("field `{field}` does not apply to {from:?}")));
                        }
                    }
                    if *kind == ObjectKind::Denomination && amount.is_none() {
                        return Err(err("missing field `amount`".into()));
                    }
                }
                Action::Settle { commitment } => match objects.get(commitment) {
                    Some((ObjectKind::Multivendor, _)) => {}
                    Some(_) => return Err(err(format!("{commitment:?} is not a multivendor commitment"))),
                    None => return Err(err(format!("object {commitment:?} is not defined yet"))),
                },
                Action::Audit { account, .. } => {
                    if !raw.actors.contains_key(account) {
                        return Err(err(format!("actor {account:?} is not declared")));
                    }
                }
                Action::Verify { .. } | Action::Deposit | Action::Redeem => {}
            }
            steps.push(Step { actor, action, expect });
        }
        Ok(ScenarioScript {
            name: raw.name,
            description: raw.description,
            profile,
            seed,
            exponents: raw.exponents,
            actors: raw.actors,
            steps,
        })
    }
}

/// What a step produced.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Outcome {
    Ok,
    Rejected(Rejection),
    Failed(String),
}

impl Outcome {
    pub fn matches(&self, expect: &Expect) -> bool {
        match (self, expect) {
            (Outcome::Ok, Expect::Ok) => true,
            (Outcome::Rejected(r), Expect::Reject(e)) => r == e,
            _ => false,
        }
    }
}

impl fmt::Display for Outcome {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Outcome::Ok => f.write_str("ok"),
            Outcome::Rejected(r) => f.write_str(r.name()),
            Outcome::Failed(msg) => write!(f, "error({msg})"),
        }
    }
}

impl From<Rejection> for Outcome {
    fn from(r: Rejection) -> Self {
        Outcome::Rejected(r)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TraceEntry {
    pub step: usize,
    pub actor: String,
    pub action: &'static str,
    pub outcome: Outcome,
    pub expect: Expect,
}

impl TraceEntry {
    pub fn matched(&self) -> bool {
        self.outcome.matches(&self.expect)
    }
}

impl fmt::Display for TraceEntry {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "step={} actor={} action={} outcome={} expect={} result={}",
            self.step,
            self.actor,
            self.action,
            self.outcome,
            self.expect,
            if self.matched() { "match" } else { "MISMATCH" }
        )
    }
}

#[derive(Debug)]
pub struct RunReport {
    pub trace: Vec<TraceEntry>,
    pub bank: Bank,
}

impl RunReport {
    pub fn passed(&self) -> bool {
        self.trace.iter().all(TraceEntry::matched)
    }

    pub fn render(&self) -> String {
        self.trace.iter().map(|t| format!("{t}\n")).collect()
    }
}

#[derive(Default)]
struct CustomerState {
    s1: BTreeMap<String, (Vec<CoinS1>, BTreeSet<usize>)>,
    s2: BTreeMap<String, Vec<CustomerChain>>,
    paywords: BTreeMap<String, (SecretChain, SpendState)>,
    key: Option<SignatureKeypair>,
}

enum Delivery {
    S1(CoinS1),
    S2(ChainCoin),
    Denominated { commitment: String, node: Node, total: u64 },
    Multivendor { commitment: String, node: Node },
}

struct VendorState {
    s1: S1Vendor,
    s2: S2Vendor,
    inbox: Vec<Delivery>,
    accepted_s1: Vec<CoinS1>,
    deposited: BTreeSet<CoinId>,
    denominated: BTreeMap<String, DenominatedVendor>,
    redeemed_totals: BTreeMap<String, u64>,
    multivendor: BTreeMap<String, MultivendorSession>,
}

/// Executes a script against a fresh bank.
pub struct Runner {
    script: ScenarioScript,
    bank: Bank,
    rng: ChaCha20Rng,
    customers: BTreeMap<String, CustomerState>,
    vendors: BTreeMap<String, VendorState>,
    commitments: BTreeMap<String, (PaywordCommitment, PublicKey)>,
}

impl Runner {
    pub fn new(script: ScenarioScript) -> Result<Self, ScenarioError> {
        let issuer = Issuer::generate(
            script.profile.prime_bits,
            script.exponents,
            script.seed.derive("issuer").as_bytes(),
        )?;
        let bank = Bank::new(issuer);
        let rng = script.seed.derive("run").rng();
        let mut customers = BTreeMap::new();
        let mut vendors = BTreeMap::new();
        for (name, role) in &script.actors {
            match role {
                Role::Customer => {
                    customers.insert(name.clone(), CustomerState::default());
                }
                Role::Vendor => {
                    let params = bank.public();
                    let state = VendorState {
                        s1: S1Vendor::new(name.clone(), params.clone(), Default::default()),
                        s2: S2Vendor::new(name.clone(), params, Default::default(), GapPolicy::Strict),
                        inbox: Vec::new(),
                        accepted_s1: Vec::new(),
                        deposited: BTreeSet::new(),
                        denominated: BTreeMap::new(),
                        redeemed_totals: BTreeMap::new(),
                        multivendor: BTreeMap::new(),
                    };
                    vendors.insert(name.clone(), state);
                }
                Role::Bank => {}
            }
        }
        Ok(Runner {
            script,
            bank,
            rng,
            customers,
            vendors,
            commitments: BTreeMap::new(),
        })
    }

    pub fn bank(&self) -> &Bank {
        &self.bank
    }

    pub fn run(mut self) -> RunReport {
        let steps = self.script.steps.clone();
        let mut trace = Vec::with_capacity(steps.len());
        for (i, step) in steps.iter().enumerate() {
            let outcome = match self.execute(step) {
                Ok(()) => Outcome::Ok,
                Err(outcome) => outcome,
            };
            trace.push(TraceEntry {
                step: i + 1,
                actor: step.actor.clone(),
                action: step.action.name(),
                outcome,
                expect: step.expect,
            });
        }
        RunReport { trace, bank: self.bank }
    }

    fn execute(&mut self, step: &Step) -> Result<(), Outcome> {
        let actor = step.actor.as_str();
        match &step.action {
            Action::Mint {
                scheme,
                customer,
                name,
                count,
                length,
                vendor,
            } => {
                let tags = CoinTags {
                    vendor: vendor.clone(),
                    customer: None,
                };
                let wallet = self.customers.get_mut(customer).expect("declared customer");
                match scheme {
                    SchemeKind::S1 => {
                        let count = count.map(|c| c as usize).unwrap_or(self.script.exponents);
                        let batch = self
                            .bank
                            .mint_coins_s1(&mut self.rng, count, tags, &mut OpCounter::new())
                            .map_err(|e| Outcome::Failed(e.to_string()))?;
                        wallet.s1.insert(name.clone(), (batch.coins, BTreeSet::new()));
                    }
                    SchemeKind::S2 => {
                        let batch = self
                            .bank
                            .mint_chains_s2(&mut self.rng, *length, tags, &mut OpCounter::new())
                            .map_err(|e| Outcome::Failed(e.to_string()))?;
                        let modulus = self.bank.issuer().modulus().clone();
                        let chains = batch
                            .chains
                            .into_iter()
                            .map(|h| CustomerChain::new(h, modulus.clone()))
                            .collect::<Result<Vec<_>, _>>()
                            .map_err(|e| Outcome::Failed(e.to_string()))?;
                        wallet.s2.insert(name.clone(), chains);
                    }
                }
                Ok(())
            }
            Action::Commit { name, spec } => self.commit(actor, name, spec),
            Action::Pay {
                from,
                to,
                coin,
                chain,
                amount,
            } => self.pay(actor, from, to, *coin, *chain, *amount),
            Action::Verify { offline } => self.verify(actor, *offline),
            Action::Deposit => {
                let vendor = self.vendors.get_mut(actor).expect("declared vendor");
                let mut pending: Vec<CoinS1> = std::mem::take(&mut vendor.accepted_s1);
                // a lazy vendor may deposit coins it never checked
                vendor.inbox.retain(|d| match d {
                    Delivery::S1(coin) => {
                        pending.push(coin.clone());
                        false
                    }
                    _ => true,
                });
                if pending.is_empty() {
                    return Err(Rejection::NothingToCredit.into());
                }
                let mut first_rejection = None;
                for coin in pending {
                    if vendor.deposited.contains(&coin.id()) {
                        first_rejection.get_or_insert(Rejection::DoubleSpent);
                        continue;
                    }
                    match self.bank.deposit_coin_s1(&coin, actor) {
                        Ok(_) => {
                            vendor.deposited.insert(coin.id());
                        }
                        Err(r) => {
                            first_rejection.get_or_insert(r);
                        }
                    }
                }
                first_rejection.map_or(Ok(()), |r| Err(r.into()))
            }
            Action::Redeem => {
                let vendor = self.vendors.get_mut(actor).expect("declared vendor");
                let mut redeemed = false;
                let mut first_rejection = None;
                let lasts: Vec<ChainCoin> = vendor.s2.chains().cloned().collect();
                for last in lasts {
                    redeemed = true;
                    if let Err(r) = self.bank.redeem_chain(&last, actor) {
                        first_rejection.get_or_insert(r);
                    }
                }
                for (name, session) in &vendor.denominated {
                    let Some(node) = session.last_node() else { continue };
                    let (commitment, key) = &self.commitments[name];
                    let done = vendor.redeemed_totals.get(name).copied().unwrap_or(0);
                    redeemed = true;
                    if session.total() <= done {
                        first_rejection.get_or_insert(Rejection::NothingToCredit);
                        continue;
                    }
                    match self
                        .bank
                        .redeem_denominated(commitment, key, actor, node, session.total())
                    {
                        Ok(_) => {
                            vendor.redeemed_totals.insert(name.clone(), session.total());
                        }
                        Err(r) => {
                            first_rejection.get_or_insert(r);
                        }
                    }
                }
                if !redeemed {
                    return Err(Rejection::NothingToCredit.into());
                }
                first_rejection.map_or(Ok(()), |r| Err(r.into()))
            }
            Action::Settle { commitment } => {
                let (c, key) = self.commitments[commitment].clone();
                let deposits: Vec<(String, Node)> = self
                    .vendors
                    .iter()
                    .filter_map(|(name, v)| {
                        v.multivendor
                            .get(commitment)
                            .and_then(|s| s.last_node())
                            .map(|n| (name.clone(), n.clone()))
                    })
                    .collect();
                self.bank
                    .settle_multivendor(&c, &key, &deposits)
                    .map(|_| ())
                    .map_err(Outcome::from)
            }
            Action::Audit {
                account,
                credited,
                debited,
            } => {
                let accounts = self.bank.accounts();
                if let Some(want) = credited {
                    let got = accounts.credited(account);
                    if got != *want {
                        return Err(Outcome::Failed(format!("{account} credited {got}, expected {want}")));
                    }
                }
                if let Some(want) = debited {
                    let got = accounts.debited(account);
                    if got != *want {
                        return Err(Outcome::Failed(format!("{account} debited {got}, expected {want}")));
                    }
                }
                Ok(())
            }
        }
    }

    fn commit(&mut self, actor: &str, name: &str, spec: &CommitSpec) -> Result<(), Outcome> {
        let failed = |e: &dyn fmt::Display| Outcome::Failed(e.to_string());
        let (sizes, purpose) = match spec {
            CommitSpec::Denomination { size, dims } => (vec![*size; *dims], Purpose::Denomination),
            CommitSpec::Multivendor { vendors, sizes } => (
                sizes.clone(),
                Purpose::Multivendor {
                    vendors: vendors.clone(),
                },
            ),
        };
        let public = self.bank.public();
        let exponents = public
            .exponents
            .prefix(sizes.len())
            .ok_or_else(|| Outcome::Failed("too few exponents".into()))?;
        let params = ChainParams::new(public.modulus.clone(), exponents, sizes).map_err(|e| failed(&e))?;
        let start = draw_start(&mut self.rng, &public.modulus);
        let chain = SecretChain::new(params, start, None).map_err(|e| failed(&e))?;
        let seed = self.script.seed.derive(&format!("key/{actor}"));
        let wallet = self.customers.get_mut(actor).expect("declared customer");
        if wallet.key.is_none() {
            wallet.key = Some(SignatureKeypair::generate(CUSTOMER_KEY_BITS, seed.as_bytes()).map_err(|e| failed(&e))?);
        }
        let key = wallet.key.as_ref().expect("key set above");
        let commitment = commit(key, actor, &chain, purpose, &mut OpCounter::new()).map_err(|e| failed(&e))?;
        let dims = chain.params().dims();
        self.commitments
            .insert(name.to_string(), (commitment, key.public().clone()));
        wallet.paywords.insert(name.to_string(), (chain, SpendState::new(dims)));
        Ok(())
    }

    fn pay(
        &mut self,
        actor: &str,
        from: &str,
        to: &str,
        coin: Option<u32>,
        chain: Option<u32>,
        amount: Option<u64>,
    ) -> Result<(), Outcome> {
        let wallet = self.customers.get_mut(actor).expect("declared customer");
        let delivery = if let Some((coins, spent)) = wallet.s1.get_mut(from) {
            // an explicit index may re-send a coin that was already paid
            let i = match coin {
                Some(i) => i as usize,
                None => (0..coins.len())
                    .find(|i| !spent.contains(i))
                    .ok_or_else(|| Outcome::Failed(format!("{from} is spent")))?,
            };
            let paid = coins
                .get(i)
                .cloned()
                .ok_or_else(|| Outcome::Failed(format!("{from} has no coin {i}")))?;
            spent.insert(i);
            Delivery::S1(paid)
        } else if let Some(chains) = wallet.s2.get_mut(from) {
            let i = chain.unwrap_or(0) as usize;
            let c = chains
                .get_mut(i)
                .ok_or_else(|| Outcome::Failed(format!("{from} has no chain {i}")))?;
            Delivery::S2(c.pay_next_coin().map_err(|e| Outcome::Failed(e.to_string()))?)
        } else {
            let (secret, state) = wallet.paywords.get_mut(from).expect("validated object");
            let (commitment, _) = &self.commitments[from];
            match amount {
                Some(amount) => {
                    let (node, next) =
                        pay_denominated(state, amount, secret).map_err(|e| Outcome::Failed(e.to_string()))?;
                    let total = next.total;
                    *state = next;
                    Delivery::Denominated {
                        commitment: from.to_string(),
                        node,
                        total,
                    }
                }
                None => {
                    let (node, next) =
                        pay_vendor(state, commitment, to, secret).map_err(|e| Outcome::Failed(e.to_string()))?;
                    *state = next;
                    Delivery::Multivendor {
                        commitment: from.to_string(),
                        node,
                    }
                }
            }
        };
        self.vendors.get_mut(to).expect("declared vendor").inbox.push(delivery);
        Ok(())
    }

    fn verify(&mut self, actor: &str, offline: bool) -> Result<(), Outcome> {
        let vendor = self.vendors.get_mut(actor).expect("declared vendor");
        vendor.s1.refresh_roots(self.bank.state().s1.roots());
        vendor.s2.refresh_roots(self.bank.state().s2.roots());
        let inbox = std::mem::take(&mut vendor.inbox);
        if inbox.is_empty() {
            return Err(Outcome::Failed("nothing to verify".into()));
        }
        let mut first_rejection = None;
        for delivery in inbox {
            let result = match delivery {
                Delivery::S1(coin) => {
                    let online = if offline { None } else { Some(&self.bank.state().s1) };
                    let r = vendor.s1.accept(&coin, online);
                    if r.is_ok() {
                        vendor.accepted_s1.push(coin);
                    }
                    r
                }
                Delivery::S2(coin) => vendor.s2.accept(&coin, &mut self.bank, &mut OpCounter::new()),
                Delivery::Denominated {
                    commitment,
                    node,
                    total,
                } => {
                    let (c, key) = &self.commitments[&commitment];
                    let session = match vendor.denominated.entry(commitment) {
                        std::collections::btree_map::Entry::Occupied(e) => Ok(e.into_mut()),
                        std::collections::btree_map::Entry::Vacant(e) => {
                            DenominatedVendor::new(c.clone(), key).map(|s| e.insert(s))
                        }
                    };
                    session.and_then(|s| s.accept(&node, total, &mut OpCounter::new()).map(|_| ()))
                }
                Delivery::Multivendor { commitment, node } => {
                    let (c, key) = &self.commitments[&commitment];
                    let session = match vendor.multivendor.entry(commitment) {
                        std::collections::btree_map::Entry::Occupied(e) => Ok(e.into_mut()),
                        std::collections::btree_map::Entry::Vacant(e) => {
                            MultivendorSession::new(actor, c.clone(), key).map(|s| e.insert(s))
                        }
                    };
                    session.and_then(|s| s.accept(&node, &mut OpCounter::new()))
                }
            };
            if let Err(r) = result {
                first_rejection.get_or_insert(r);
            }
        }
        first_rejection.map_or(Ok(()), |r| Err(r.into()))
    }
}

/// Parses and runs a script.
pub fn run_script(text: &str) -> Result<RunReport, ScenarioError> {
    let script = ScenarioScript::parse(text)?;
    Ok(Runner::new(script)?.run())
}

#[cfg(test)]
mod tests {
    use super::*;

    const HEADER: &str = "name = \"t\"\nprofile = \"toy\"\nseed = \"01\"\nexponents = 3\n\n[actors]\nbank = \"bank\"\nalice = \"customer\"\nshop = \"vendor\"\n";

    fn parse_steps(steps: &str) -> Result<ScenarioScript, ScenarioError> {
        ScenarioScript::parse(&format!("{HEADER}\n{steps}"))
    }

    #[test]
    fn bundled_scripts_pass() {
        for (name, text) in BUNDLED {
            let report = run_script(text).unwrap_or_else(|e| panic!("{name}: {e}"));
            assert!(report.passed(), "{name}:\n{}", report.render());
        }
    }

    #[test]
    fn runs_are_deterministic() {
        let text = bundled("s2-chain").unwrap();
        let a = run_script(text).unwrap();
        let b = run_script(text).unwrap();
        assert_eq!(a.render(), b.render());
        assert_eq!(a.bank.ledger(), b.bank.ledger());
    }

    #[test]
    fn unexpected_outcome_is_reported() {
        let script = "[[steps]]\nactor = \"bank\"\naction = \"mint\"\nscheme = \"s1\"\ncustomer = \"alice\"\nname = \"b\"\nexpect = \"double_spent\"\n";
        let report = run_script(&format!("{HEADER}\n{script}")).unwrap();
        assert!(!report.passed());
        assert_eq!(
            report.render(),
            "step=1 actor=bank action=mint outcome=ok expect=double_spent result=MISMATCH\n"
        );
    }

    #[test]
    fn undeclared_references_are_rejected() {
        let err = parse_steps("[[steps]]\nactor = \"mallory\"\naction = \"deposit\"\n").unwrap_err();
        assert_eq!(err.to_string(), "step 1: actor \"mallory\" is not declared");
        let err =
            parse_steps("[[steps]]\nactor = \"alice\"\naction = \"pay\"\nfrom = \"b9\"\nto = \"shop\"\n").unwrap_err();
        assert_eq!(err.to_string(), "step 1: object \"b9\" is not defined yet");
        let err = parse_steps(
            "[[steps]]\nactor = \"shop\"\naction = \"mint\"\nscheme = \"s1\"\ncustomer = \"alice\"\nname = \"b\"\n",
        )
        .unwrap_err();
        assert!(err.to_string().contains("cannot mint"), "{err}");
    }

    #[test]
    fn step_fields_are_checked() {
        let err = parse_steps("[[steps]]\nactor = \"shop\"\naction = \"deposit\"\ncoin = 1\n").unwrap_err();
        assert_eq!(err.to_string(), "step 1: field `coin` is not used by action deposit");
        let err = parse_steps(
            "[[steps]]\nactor = \"bank\"\naction = \"mint\"\nscheme = \"s2\"\ncustomer = \"alice\"\nname = \"b\"\n",
        )
        .unwrap_err();
        assert_eq!(err.to_string(), "step 1: missing field `length`");
        let err = parse_steps("[[steps]]\nactor = \"shop\"\naction = \"deposit\"\nexpect = \"maybe\"\n").unwrap_err();
        assert_eq!(err.to_string(), "step 1: unknown expected outcome \"maybe\"");
        assert!(matches!(
            parse_steps("[[steps]]\nactor = \"shop\"\nbogus = 1\n"),
            Err(ScenarioError::Syntax(_))
        ));
    }

    #[test]
    fn header_checks() {
        let two_banks = HEADER.replace("alice = \"customer\"", "alice = \"bank\"");
        assert!(matches!(
            ScenarioScript::parse(&two_banks),
            Err(ScenarioError::Header(_))
        ));
        let bad_profile = HEADER.replace("toy", "huge");
        assert!(matches!(
            ScenarioScript::parse(&bad_profile),
            Err(ScenarioError::Header(_))
        ));
    }
}
