#![no_main]

use libfuzzer_sys::fuzz_target;
use mdhc::bank::{Issuer, PublicParams};
use mdhc::payword::{PaywordCommitment, SpendState};
use mdhc::scheme_s1::{CoinS1, S1Batch};
use mdhc::scheme_s2::{ChainCoin, CoinChainHandle, CustomerChain, S2Batch};
use mdhc::signature::{PublicKey, SignatureKeypair};
use mdhc::wallet_store::{decode, encode, Schema, Wallet};
use mdhc::{ChainParams, ExponentSet, Node, TrapdoorModulus};

/// Anything that decodes must encode again and decode to the same value.
fn check<T: Schema + PartialEq + std::fmt::Debug>(text: &str) {
    if let Ok(object) = decode::<T>(text) {
        let again = encode(&object).expect("decoded objects encode");
        assert_eq!(decode::<T>(&again).expect("re-encoded text decodes"), object);
    }
}

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else {
        return;
    };
    check::<PublicParams>(text);
    check::<Issuer>(text);
    check::<TrapdoorModulus>(text);
    check::<ExponentSet>(text);
    check::<ChainParams>(text);
    check::<Node>(text);
    check::<CoinS1>(text);
    check::<S1Batch>(text);
    check::<CoinChainHandle>(text);
    check::<ChainCoin>(text);
    check::<S2Batch>(text);
    check::<CustomerChain>(text);
    check::<PaywordCommitment>(text);
    check::<SpendState>(text);
    check::<PublicKey>(text);
    check::<SignatureKeypair>(text);
    check::<Wallet>(text);
});
