//! Deterministic protocol objects shared by the golden-file and acceptance
//! tests. Everything is built on the 23 * 47 toy modulus so the files stay
//! small enough to read.

#![allow(dead_code)]

use std::fmt::Debug;
use std::path::{Path, PathBuf};

use mdhc::bank::CoinTags;
use mdhc::chain::{node_at, SecretChain};
use mdhc::payword::{commit, pay_denominated, pay_vendor, Purpose, SpendState};
use mdhc::scheme_s2::CustomerChain;
use mdhc::seed::seeded_rng;
use mdhc::signature::SignatureKeypair;
use mdhc::wallet_store::ledger::Ledger;
use mdhc::wallet_store::{decode, encode, Schema, Wallet};
use mdhc::{Bank, ChainParams, ExponentSet, Issuer, NodeIndex, OpCounter, TrapdoorModulus};
use num_bigint::BigUint;

pub const UPDATE_ENV: &str = "MDHC_UPDATE_GOLDEN";

pub fn golden_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/golden")
}

pub fn big(n: u64) -> BigUint {
    BigUint::from(n)
}

pub fn t1_trapdoor() -> TrapdoorModulus {
    TrapdoorModulus::new(big(23), big(47)).unwrap()
}

pub fn t1_issuer(exponents: &[u64]) -> Issuer {
    Issuer::new(t1_trapdoor(), ExponentSet::from_u64s(exponents).unwrap()).unwrap()
}

type Check = Box<dyn Fn(&str) -> Result<(), String>>;

/// One golden file: the expected text and a typed decode/re-encode check.
pub struct GoldenCase {
    pub file: String,
    pub text: String,
    check: Check,
}

impl GoldenCase {
    fn object<T: Schema + PartialEq + Debug + 'static>(name: &str, object: T) -> Self {
        let text = encode(&object).unwrap();
        let check: Check = Box::new(move |found: &str| {
            let decoded: T = decode(found).map_err(|e| format!("decode: {e}"))?;
            if decoded != object {
                return Err("decoded object differs from the fixture".into());
            }
            let again = encode(&decoded).map_err(|e| format!("encode: {e}"))?;
            if again != found {
                return Err("re-encoding changed the bytes".into());
            }
            Ok(())
        });
        GoldenCase {
            file: format!("{name}.json"),
            text,
            check,
        }
    }

    fn ledger(ledger: Ledger, bank: &Bank) -> Self {
        let live = bank.state().clone();
        let check: Check = Box::new(move |found: &str| {
            let parsed = Ledger::parse(found).map_err(|e| e.to_string())?;
            if parsed.render() != found {
                return Err("re-rendering changed the bytes".into());
            }
            match parsed.replay() {
                Ok(state) if state == live => Ok(()),
                Ok(_) => Err("replayed state differs from the live bank".into()),
                Err(e) => Err(e.to_string()),
            }
        });
        GoldenCase {
            file: "ledger.jsonl".into(),
            text: ledger.render(),
            check,
        }
    }

    /// Compares against the checked-in file, or rewrites it when
    /// `MDHC_UPDATE_GOLDEN` is set.
    pub fn verify(&self, dir: &Path) -> Result<(), String> {
        let path = dir.join(&self.file);
        if std::env::var_os(UPDATE_ENV).is_some() {
            std::fs::write(&path, &self.text).map_err(|e| e.to_string())?;
        }
        let found = std::fs::read_to_string(&path)
            .map_err(|e| format!("{}: {e} (set {UPDATE_ENV}=1 to create it)", path.display()))?;
        if found != self.text {
            return Err(format!("{} differs from the freshly encoded object", self.file));
        }
        (self.check)(&found)
    }
}

/// Every protocol object plus the ledger that produced the bank state.
pub fn golden_cases() -> Vec<GoldenCase> {
    let issuer = t1_issuer(&[3, 5, 7]);
    let mut bank = Bank::new(issuer.clone());
    let mut counter = OpCounter::new();
    let s1 = bank
        .mint_batch_s1_from_start(&big(123), 3, CoinTags::default(), &mut counter)
        .unwrap();
    let tagged = bank
        .mint_batch_s1_from_start(&big(200), 2, CoinTags::for_vendor("shop"), &mut counter)
        .unwrap();
    let s2 = (2u64..)
        .find_map(|start| {
            bank.mint_chains_s2_from_start(&big(start), 2, CoinTags::default(), &mut counter)
                .ok()
        })
        .unwrap();

    bank.deposit_coin_s1(&s1.coins[0], "shop").unwrap();
    bank.deposit_coin_s1(&tagged.coins[1], "shop").unwrap();
    bank.refund_unspent(&s1.coins[2..], &mut seeded_rng(b"golden-refund"))
        .unwrap();

    let mut chain = CustomerChain::new(s2.chains[0].clone(), issuer.modulus().clone()).unwrap();
    let first = chain.pay_next_coin().unwrap();
    bank.claim_chain(&first, "cafe").unwrap();
    let second = chain.pay_next_coin().unwrap();
    bank.redeem_chain(&second, "cafe").unwrap();

    let key = SignatureKeypair::generate(512, b"golden-key").unwrap();
    let denom_params = ChainParams::uniform(big(1081), ExponentSet::from_u64s(&[3, 5]).unwrap(), 2).unwrap();
    let denom_chain = SecretChain::new(denom_params, big(123), None).unwrap();
    let denom = commit(&key, "alice", &denom_chain, Purpose::Denomination, &mut counter).unwrap();
    let (paid, spend) = pay_denominated(&SpendState::new(2), 4, &denom_chain).unwrap();
    bank.redeem_denominated(&denom, key.public(), "shop", &paid, 4).unwrap();

    let multi_params = ChainParams::uniform(big(1081), ExponentSet::from_u64s(&[3, 5, 7]).unwrap(), 2).unwrap();
    let multi_chain = SecretChain::new(multi_params, big(321), None).unwrap();
    let vendors = vec!["shop".to_string(), "cafe".to_string(), "kiosk".to_string()];
    let multi = commit(
        &key,
        "alice",
        &multi_chain,
        Purpose::Multivendor { vendors },
        &mut counter,
    )
    .unwrap();
    let (to_shop, state) = pay_vendor(&SpendState::new(3), &multi, "shop", &multi_chain).unwrap();
    let (to_cafe, _) = pay_vendor(&state, &multi, "cafe", &multi_chain).unwrap();
    bank.settle_multivendor(
        &multi,
        key.public(),
        &[("shop".into(), to_shop), ("cafe".into(), to_cafe)],
    )
    .unwrap();

    let mut customer = Wallet::new("alice");
    customer.s1_coins = s1.coins[1..].to_vec();
    customer.s2_chains = vec![chain.clone()];
    let mut vendor = Wallet::new("cafe");
    vendor.inbox_s1 = vec![s1.coins[1].clone()];
    vendor.accepted_s1 = vec![s1.coins[0].clone()];
    vendor.inbox_s2 = vec![chain.coin(2).unwrap()];
    vendor.accepted_s2 = vec![second.clone()];

    let node = node_at(&denom_chain, &NodeIndex(vec![1, 2]), &mut counter).unwrap();
    let ledger = bank.ledger().clone();

    vec![
        GoldenCase::object("public_params", issuer.public()),
        GoldenCase::object("issuer", issuer.clone()),
        GoldenCase::object("trapdoor_modulus", issuer.trapdoor().clone()),
        GoldenCase::object("exponent_set", issuer.exponents().clone()),
        GoldenCase::object("chain_params", denom_chain.params().clone()),
        GoldenCase::object("node", node),
        GoldenCase::object("coin_s1", s1.coins[0].clone()),
        GoldenCase::object("coin_s1_tagged", tagged.coins[0].clone()),
        GoldenCase::object("s1_batch", s1),
        GoldenCase::object("coin_chain_handle", s2.chains[1].clone()),
        GoldenCase::object("chain_coin", first),
        GoldenCase::object("s2_batch", s2),
        GoldenCase::object("customer_chain", chain),
        GoldenCase::object("payword_commitment_denomination", denom),
        GoldenCase::object("payword_commitment_multivendor", multi),
        GoldenCase::object("spend_state", spend),
        GoldenCase::object("public_key", key.public().clone()),
        GoldenCase::object("signature_keypair", key),
        GoldenCase::object("wallet_customer", customer),
        GoldenCase::object("wallet_vendor", vendor),
        GoldenCase::ledger(ledger, &bank),
    ]
}
