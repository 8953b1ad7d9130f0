//! Acceptance checks for the whole library. Runs as a plain binary so every
//! criterion prints exactly one PASS/FAIL line; the process fails if any
//! criterion does.

mod common;

use std::fmt::Display;
use std::process::ExitCode;
use std::time::{Duration, Instant};

use mdhc::bank::{draw_start, CoinTags};
use mdhc::chain::{
    all_indices, apply_hash, measure_traversal, node_at, root_naive, root_trapdoor, verify_edge, verify_path_to_root,
    SecretChain,
};
use mdhc::payword::{
    commit, pay_denominated, pay_vendor, verify_denominated, DenominatedVendor, DenominationSchedule,
    MultivendorSession, Purpose, SpendState,
};
use mdhc::scheme_s1::{verify_coin_s1, S1Vendor};
use mdhc::scheme_s2::{CustomerChain, GapPolicy, S2Vendor};
use mdhc::seed::seeded_rng;
use mdhc::signature::SignatureKeypair;
use mdhc::wallet_store::ledger::Ledger;
use mdhc::{Bank, ChainParams, Issuer, Node, NodeIndex, OpCounter, Profile, Rejection, TraversalStrategy};
use num_bigint::{BigUint, RandBigInt};
use rand::Rng;

const COMMUTATIVITY_BUDGET: Duration = Duration::from_secs(10);
const TRAPDOOR_BUDGET: Duration = Duration::from_secs(30);
const FORGERIES: usize = 10_000;

/// Banks whose ledgers the serialization criterion replays.
#[derive(Default)]
struct Shared {
    s1_bank: Option<Bank>,
    s2_bank: Option<Bank>,
}

type Outcome = Result<String, String>;
type Criterion = fn(&mut Shared) -> Outcome;

fn err<E: Display>(e: E) -> String {
    e.to_string()
}

macro_rules! ensure {
    ($cond:expr, $($fmt:tt)+) => {
        if !$cond {
            return Err(format!($($fmt)+));
        }
    };
}

fn key(label: &str) -> SignatureKeypair {
    SignatureKeypair::generate(512, format!("acceptance/key/{label}").as_bytes()).unwrap()
}

fn commutativity(_: &mut Shared) -> Outcome {
    let started = Instant::now();
    let mut pairs = 0u64;
    for profile in [Profile::TOY, Profile::DEMO] {
        let issuer = Issuer::generate(
            profile.prime_bits,
            8,
            format!("acceptance/c1/{}", profile.name).as_bytes(),
        )
        .map_err(err)?;
        let params = ChainParams::uniform(issuer.modulus().clone(), issuer.exponents().clone(), 1).map_err(err)?;
        let mut rng = seeded_rng(format!("acceptance/c1/x/{}", profile.name).as_bytes());
        let mut scratch = OpCounter::new();
        for _ in 0..100 {
            let x = draw_start(&mut rng, issuer.modulus());
            for i in 0..params.dims() {
                for j in 0..params.dims() {
                    if i == j {
                        continue;
                    }
                    let ij = apply_hash(
                        &params,
                        i,
                        &apply_hash(&params, j, &x, &mut scratch).map_err(err)?,
                        &mut scratch,
                    )
                    .map_err(err)?;
                    let ji = apply_hash(
                        &params,
                        j,
                        &apply_hash(&params, i, &x, &mut scratch).map_err(err)?,
                        &mut scratch,
                    )
                    .map_err(err)?;
                    ensure!(
                        ij == ji,
                        "h_{i}(h_{j}(x)) != h_{j}(h_{i}(x)) for x = {x:x} ({})",
                        profile.name
                    );
                    pairs += 1;
                }
            }
        }
    }
    let elapsed = started.elapsed();
    ensure!(
        elapsed < COMMUTATIVITY_BUDGET,
        "took {elapsed:.2?}, limit {COMMUTATIVITY_BUDGET:?}"
    );
    Ok(format!(
        "{pairs} ordered pairs over toy and demo moduli in {elapsed:.2?}"
    ))
}

fn trapdoor_root(_: &mut Shared) -> Outcome {
    let started = Instant::now();
    let issuer = Issuer::generate(256, 4, b"acceptance/c2").map_err(err)?;
    ensure!(
        issuer.modulus().bits() == 512,
        "modulus has {} bits",
        issuer.modulus().bits()
    );
    let mut rng = seeded_rng(b"acceptance/c2/chains");
    for n in 0..50 {
        let m = rng.gen_range(1..=4usize);
        let sizes: Vec<u64> = (0..m).map(|_| rng.gen_range(1..=5)).collect();
        let exponents = issuer.exponents().prefix(m).ok_or("too few exponents")?;
        let params = ChainParams::new(issuer.modulus().clone(), exponents, sizes.clone()).map_err(err)?;
        let start = draw_start(&mut rng, issuer.modulus());
        let chain = SecretChain::new(params, start, Some(issuer.trapdoor().clone())).map_err(err)?;
        let naive = root_naive(&chain, &mut OpCounter::new());
        let mut counter = OpCounter::new();
        let fast = root_trapdoor(&chain, &mut counter).map_err(err)?;
        ensure!(fast == naive, "chain {n} sizes {sizes:?}: roots differ");
        ensure!(
            counter.modexp == 1,
            "chain {n}: trapdoor root cost {} modexps",
            counter.modexp
        );
    }
    let elapsed = started.elapsed();
    ensure!(
        elapsed < TRAPDOOR_BUDGET,
        "took {elapsed:.2?}, limit {TRAPDOOR_BUDGET:?}"
    );
    Ok(format!("50 chains, 512-bit modulus, 1 modexp each, {elapsed:.2?}"))
}

fn complexity(_: &mut Shared) -> Outcome {
    let issuer = Issuer::generate(Profile::TOY.prime_bits, 14, b"acceptance/c3").map_err(err)?;
    let start = draw_start(&mut seeded_rng(b"acceptance/c3/start"), issuer.modulus());

    let params = ChainParams::uniform(issuer.modulus().clone(), issuer.exponents().clone(), 1).map_err(err)?;
    let chain = SecretChain::new(params.clone(), start.clone(), None).map_err(err)?;
    let requests = all_indices(&params).map_err(err)?;
    let report = measure_traversal(&chain, TraversalStrategy::StoreRootOnly, &requests).map_err(err)?;
    let cube = report.worst_modexps();
    ensure!(requests.len() == 16_384, "{} nodes in the m=14 cube", requests.len());
    ensure!(cube == 14, "m=14, n=1 worst case is {cube} modexps");
    ensure!(report.peak_storage == 1, "stored {} nodes", report.peak_storage);

    let exponent = issuer.exponents().prefix(1).ok_or("no exponent")?;
    let params = ChainParams::new(issuer.modulus().clone(), exponent, vec![10_000]).map_err(err)?;
    let chain = SecretChain::new(params.clone(), start, None).map_err(err)?;
    // the root is the farthest node from the start, so it is the worst case
    let report = measure_traversal(&chain, TraversalStrategy::StoreRootOnly, &[params.root_index()]).map_err(err)?;
    let linear = report.worst_modexps();
    ensure!(linear == 10_000, "linear chain worst case is {linear} modexps");
    Ok(format!(
        "worst case {cube} modexps for the 16384-node cube vs {linear} for the linear chain"
    ))
}

fn s1_lifecycle(shared: &mut Shared) -> Outcome {
    let issuer = Issuer::generate(Profile::TOY.prime_bits, 8, b"acceptance/c4").map_err(err)?;
    let mut bank = Bank::new(issuer);
    let mut rng = seeded_rng(b"acceptance/c4/run");
    let batch = bank.mint_batch_s1(&mut rng, CoinTags::default()).map_err(err)?;
    ensure!(batch.coins.len() == 8, "minted {} coins", batch.coins.len());

    let mut vendor = S1Vendor::new("shop", bank.public(), bank.state().s1.roots().clone());
    for coin in &batch.coins {
        vendor.accept(coin, Some(&bank.state().s1)).map_err(err)?;
    }
    for coin in &batch.coins {
        let credit = bank.deposit_coin_s1(coin, "shop").map_err(err)?;
        ensure!(credit == 1, "deposit credited {credit}");
    }
    for coin in &batch.coins {
        let again = bank.deposit_coin_s1(coin, "cafe");
        ensure!(again == Err(Rejection::DoubleSpent), "re-deposit gave {again:?}");
    }
    let s1 = &bank.state().s1;
    let credited = bank.accounts().total_credited();
    ensure!(
        credited == 8 && s1.deposited_count() == 8 && s1.unspent_count() == 0,
        "credited {credited}, deposited {}, unspent {}",
        s1.deposited_count(),
        s1.unspent_count()
    );

    let target = bank.mint_batch_s1(&mut rng, CoinTags::default()).map_err(err)?;
    let public = bank.public();
    let before = bank.ledger().len();
    let mut accepted = 0;
    for _ in 0..FORGERIES {
        let mut coin = target.coins[rng.gen_range(0..target.coins.len())].clone();
        coin.value = rng.gen_biguint_below(&public.modulus);
        if verify_coin_s1(&public, bank.state().s1.roots(), &coin, &mut OpCounter::new()).is_ok() {
            accepted += 1;
        }
        if bank.deposit_coin_s1(&coin, "shop").is_ok() {
            accepted += 1;
        }
    }
    ensure!(accepted == 0, "{accepted} forged coins accepted");
    ensure!(bank.ledger().len() == before, "forgeries changed the ledger");
    shared.s1_bank = Some(bank);
    Ok(format!(
        "8 coins verified and deposited once, credits {credited}, 0 of {FORGERIES} forgeries accepted"
    ))
}

/// Step-by-step record of paying with single coins or one-coin chains.
#[derive(Debug, PartialEq, Eq)]
enum Step {
    Verified { coin: usize, value: BigUint, modexps: u64 },
    Credited { coin: usize, units: u64 },
    Refused { coin: usize, reason: Rejection },
}

fn s1_trace(issuer: &Issuer, seed: &[u8]) -> Result<Vec<Step>, String> {
    let mut bank = Bank::new(issuer.clone());
    let batch = bank
        .mint_batch_s1(&mut seeded_rng(seed), CoinTags::default())
        .map_err(err)?;
    let public = bank.public();
    let mut trace = Vec::new();
    for (i, coin) in batch.coins.iter().enumerate() {
        let mut counter = OpCounter::new();
        verify_coin_s1(&public, bank.state().s1.roots(), coin, &mut counter).map_err(err)?;
        trace.push(Step::Verified {
            coin: i,
            value: coin.value.clone(),
            modexps: counter.modexp,
        });
        let units = bank.deposit_coin_s1(coin, "shop").map_err(err)?;
        trace.push(Step::Credited { coin: i, units });
        let reason = bank.deposit_coin_s1(coin, "shop").unwrap_err();
        trace.push(Step::Refused { coin: i, reason });
    }
    Ok(trace)
}

fn s2_unit_trace(issuer: &Issuer, seed: &[u8]) -> Result<Vec<Step>, String> {
    let mut bank = Bank::new(issuer.clone());
    let batch = bank
        .mint_chains_s2(&mut seeded_rng(seed), 1, CoinTags::default(), &mut OpCounter::new())
        .map_err(err)?;
    let mut vendor = S2Vendor::new(
        "shop",
        bank.public(),
        bank.state().s2.roots().clone(),
        GapPolicy::Strict,
    );
    let mut trace = Vec::new();
    for (i, handle) in batch.chains.iter().enumerate() {
        let mut chain = CustomerChain::new(handle.clone(), issuer.modulus().clone()).map_err(err)?;
        let coin = chain.pay_next_coin().map_err(err)?;
        let mut counter = OpCounter::new();
        vendor.accept(&coin, &mut bank, &mut counter).map_err(err)?;
        trace.push(Step::Verified {
            coin: i,
            value: coin.value.clone(),
            modexps: counter.modexp,
        });
        let units = bank.redeem_chain(&coin, "shop").map_err(err)?;
        trace.push(Step::Credited { coin: i, units });
        let reason = bank.redeem_chain(&coin, "shop").unwrap_err();
        trace.push(Step::Refused { coin: i, reason });
    }
    Ok(trace)
}

fn s2_lifecycle(shared: &mut Shared) -> Outcome {
    let m = 4;
    let issuer = Issuer::generate(Profile::TOY.prime_bits, m, b"acceptance/c5").map_err(err)?;
    let mut bank = Bank::new(issuer.clone());
    let mut rng = seeded_rng(b"acceptance/c5/run");
    let batch = bank
        .mint_chains_s2(&mut rng, 10, CoinTags::default(), &mut OpCounter::new())
        .map_err(err)?;
    let mut chain = CustomerChain::new(batch.chains[0].clone(), issuer.modulus().clone()).map_err(err)?;
    let mut vendor = S2Vendor::new(
        "shop",
        bank.public(),
        bank.state().s2.roots().clone(),
        GapPolicy::Strict,
    );
    let mut last = None;
    for position in 1..=10u64 {
        let coin = chain.pay_next_coin().map_err(err)?;
        ensure!(coin.position == position, "paid position {}", coin.position);
        let mut counter = OpCounter::new();
        vendor.accept(&coin, &mut bank, &mut counter).map_err(err)?;
        ensure!(counter.modexp == 1, "coin {position} cost {} modexps", counter.modexp);
        last = Some(coin);
    }
    let credited = bank.redeem_chain(&last.ok_or("no coins paid")?, "shop").map_err(err)?;
    ensure!(credited == 10, "redemption credited {credited}");

    let s1 = s1_trace(&issuer, b"acceptance/c5/same-seed")?;
    let s2 = s2_unit_trace(&issuer, b"acceptance/c5/same-seed")?;
    ensure!(s1 == s2, "n=1 traces differ:\n{s1:?}\n{s2:?}");

    for n in [1u64, 10, 100] {
        let mut fresh = Bank::new(issuer.clone());
        fresh
            .mint_chains_s2(&mut rng, n, CoinTags::default(), &mut OpCounter::new())
            .map_err(err)?;
        let size = fresh.state().s2.len();
        ensure!(size == m, "n={n}: registry holds {size} entries for {m} chains");
    }
    shared.s2_bank = Some(bank);
    Ok(format!(
        "10 payments at 1 modexp each, credits {credited}; n=1 trace matches single coins ({} steps); registry size {m} for n in 1, 10, 100",
        s1.len()
    ))
}

fn denominations(_: &mut Shared) -> Outcome {
    let mut shapes = 0;
    let mut values = 0u64;
    for m in 1..=12usize {
        for n in 1u64.. {
            let schedule = match DenominationSchedule::new(n, m) {
                Ok(s) if s.capacity() < 4096 => s,
                _ => break,
            };
            for v in 0..=schedule.capacity() {
                let index = schedule.index_of_value(v).map_err(err)?;
                ensure!(
                    schedule.value_of_index(&index).map_err(err)? == v,
                    "n={n} m={m}: {v} does not round-trip"
                );
            }
            shapes += 1;
            values += schedule.capacity() + 1;
        }
    }

    let key = key("c6");
    let issuer = Issuer::generate(Profile::TOY.prime_bits, 14, b"acceptance/c6").map_err(err)?;
    let start = draw_start(&mut seeded_rng(b"acceptance/c6/start"), issuer.modulus());
    let params = ChainParams::uniform(issuer.modulus().clone(), issuer.exponents().clone(), 1).map_err(err)?;
    let capacity = DenominationSchedule::from_params(&params).map_err(err)?.capacity();
    ensure!(capacity == 16_383, "capacity {capacity}");
    let chain = SecretChain::new(params, start.clone(), None).map_err(err)?;
    let mut counter = OpCounter::new();
    commit(&key, "alice", &chain, Purpose::Denomination, &mut counter).map_err(err)?;
    ensure!(
        counter.modexp == 14,
        "generating the chain cost {} modexps",
        counter.modexp
    );

    let exponents = issuer.exponents().prefix(2).ok_or("no exponents")?;
    let params = ChainParams::uniform(issuer.modulus().clone(), exponents, 9).map_err(err)?;
    let chain = SecretChain::new(params, start, None).map_err(err)?;
    let commitment = commit(&key, "alice", &chain, Purpose::Denomination, &mut OpCounter::new()).map_err(err)?;
    let mut vendor = DenominatedVendor::new(commitment.clone(), key.public()).map_err(err)?;
    let (nine, state) = pay_denominated(&SpendState::new(2), 9, &chain).map_err(err)?;
    vendor.accept(&nine, 9, &mut OpCounter::new()).map_err(err)?;
    let (ten, _) = pay_denominated(&state, 1, &chain).map_err(err)?;
    ensure!(ten.index == NodeIndex(vec![0, 1]), "total 10 sits at {:?}", ten.index);
    ensure!(!nine.index.dominated_by(&ten.index), "carry should leave no edge path");
    verify_denominated(&commitment, &ten, 10, &mut OpCounter::new()).map_err(err)?;
    vendor.accept(&ten, 10, &mut OpCounter::new()).map_err(err)?;
    let mut bank = Bank::new(issuer);
    let credited = bank
        .redeem_denominated(&commitment, key.public(), "shop", &ten, 10)
        .map_err(err)?;
    ensure!(credited == 10, "carry case credited {credited}");
    Ok(format!(
        "{values} values over {shapes} shapes round-trip; 16383-unit chain costs 14 modexps; 9+1 carry credits {credited}"
    ))
}

fn multivendor(_: &mut Shared) -> Outcome {
    let key = key("c7");
    let issuer = Issuer::generate(Profile::TOY.prime_bits, 3, b"acceptance/c7").map_err(err)?;
    let mut rng = seeded_rng(b"acceptance/c7/run");
    let vendors: Vec<String> = ["shop", "cafe", "kiosk"].map(String::from).to_vec();
    let params = ChainParams::uniform(issuer.modulus().clone(), issuer.exponents().clone(), 3).map_err(err)?;
    let purpose = Purpose::Multivendor {
        vendors: vendors.clone(),
    };

    let chain = SecretChain::new(params.clone(), draw_start(&mut rng, issuer.modulus()), None).map_err(err)?;
    let commitment = commit(&key, "alice", &chain, purpose.clone(), &mut OpCounter::new()).map_err(err)?;
    let mut sessions: Vec<MultivendorSession> = vendors
        .iter()
        .map(|v| MultivendorSession::new(v.clone(), commitment.clone(), key.public()))
        .collect::<Result<_, _>>()
        .map_err(err)?;
    let mut state = SpendState::new(3);
    for dim in [0usize, 1, 0] {
        let (node, next) = pay_vendor(&state, &commitment, &vendors[dim], &chain).map_err(err)?;
        sessions[dim].accept(&node, &mut OpCounter::new()).map_err(err)?;
        state = next;
    }
    ensure!(state.index == NodeIndex(vec![2, 1, 0]), "final index {:?}", state.index);
    let deposits: Vec<(String, Node)> = sessions
        .iter()
        .filter_map(|s| s.last_node().map(|n| (s.vendor().to_string(), n.clone())))
        .collect();
    let mut bank = Bank::new(issuer.clone());
    let settlement = bank
        .settle_multivendor(&commitment, key.public(), &deposits)
        .map_err(err)?;
    let credits: Vec<u64> = vendors.iter().map(|v| bank.accounts().credited(v)).collect();
    let debit = bank.accounts().debited("alice");
    ensure!(
        settlement.index == NodeIndex(vec![2, 1, 0]),
        "settled on {:?}",
        settlement.index
    );
    ensure!(credits == [2, 1, 0] && debit == 3, "credits {credits:?}, debit {debit}");

    let chain = SecretChain::new(params, draw_start(&mut rng, issuer.modulus()), None).map_err(err)?;
    let cheat = commit(&key, "alice", &chain, purpose, &mut OpCounter::new()).map_err(err)?;
    let first = node_at(&chain, &NodeIndex(vec![1, 0, 0]), &mut OpCounter::new()).map_err(err)?;
    let second = node_at(&chain, &NodeIndex(vec![0, 1, 0]), &mut OpCounter::new()).map_err(err)?;
    let refused = bank.settle_multivendor(&cheat, key.public(), &[("shop".into(), first), ("cafe".into(), second)]);
    ensure!(
        refused == Err(Rejection::Inconsistent),
        "incomparable deposits gave {refused:?}"
    );

    let exponent = issuer.exponents().prefix(1).ok_or("no exponent")?;
    let params = ChainParams::uniform(issuer.modulus().clone(), exponent, 5).map_err(err)?;
    let chain = SecretChain::new(params, draw_start(&mut rng, issuer.modulus()), None).map_err(err)?;
    let single = commit(
        &key,
        "bob",
        &chain,
        Purpose::Multivendor {
            vendors: vec!["shop".into()],
        },
        &mut OpCounter::new(),
    )
    .map_err(err)?;
    let linear = commit(&key, "bob", &chain, Purpose::Denomination, &mut OpCounter::new()).map_err(err)?;
    ensure!(single.root == linear.root, "degenerate and linear roots differ");
    let (mut multi_state, mut linear_state) = (SpendState::new(1), SpendState::new(1));
    let (mut multi_node, mut linear_node) = (None, None);
    for _ in 0..4 {
        let (node, next) = pay_vendor(&multi_state, &single, "shop", &chain).map_err(err)?;
        multi_state = next;
        multi_node = Some(node);
        let (node, next) = pay_denominated(&linear_state, 1, &chain).map_err(err)?;
        linear_state = next;
        linear_node = Some(node);
    }
    let (multi_node, linear_node) = (multi_node.ok_or("no payment")?, linear_node.ok_or("no payment")?);
    ensure!(multi_node == linear_node, "degenerate paywords differ from linear ones");
    let mut multi_bank = Bank::new(issuer.clone());
    multi_bank
        .settle_multivendor(&single, key.public(), &[("shop".into(), multi_node)])
        .map_err(err)?;
    let mut linear_bank = Bank::new(issuer);
    let linear_credit = linear_bank
        .redeem_denominated(&linear, key.public(), "shop", &linear_node, 4)
        .map_err(err)?;
    let multi_credit = multi_bank.accounts().credited("shop");
    ensure!(
        multi_credit == linear_credit && multi_credit == 4,
        "single vendor credited {multi_credit}, linear {linear_credit}"
    );
    Ok(format!(
        "settled (2,1,0): credits {credits:?}, debit {debit}; incomparable deposits refused; single vendor = linear ({multi_credit})"
    ))
}

fn small_lattice(_: &mut Shared) -> Outcome {
    let params = ChainParams::new(
        common::big(1081),
        mdhc::ExponentSet::from_u64s(&[3, 5]).map_err(err)?,
        vec![2, 2],
    )
    .map_err(err)?;
    let chain = SecretChain::new(params.clone(), common::big(123), None).map_err(err)?;
    let root = root_naive(&chain, &mut OpCounter::new()).value;
    let indices = all_indices(&params).map_err(err)?;
    ensure!(indices.len() == 9, "{} nodes", indices.len());
    let mut edges = 0;
    for index in &indices {
        let node = node_at(&chain, index, &mut OpCounter::new()).map_err(err)?;
        ensure!(
            verify_path_to_root(&params, &node, &root, &mut OpCounter::new()),
            "{index:?} fails the root path"
        );
        for dim in 0..params.dims() {
            if index.coords()[dim] == params.sizes()[dim] {
                continue;
            }
            let child = node_at(&chain, &index.step_up(dim), &mut OpCounter::new()).map_err(err)?;
            ensure!(
                verify_edge(&params, &child, &node, dim).map_err(err)?,
                "edge {:?} -> {index:?} fails",
                child.index
            );
            edges += 1;
        }
    }
    ensure!(edges == 12, "{edges} edges");
    Ok(format!("{} nodes and {edges} edges verified", indices.len()))
}

fn serialization(shared: &mut Shared) -> Outcome {
    let dir = common::golden_dir();
    let cases = common::golden_cases();
    for case in &cases {
        case.verify(&dir).map_err(|e| format!("{}: {e}", case.file))?;
    }
    let mut events = 0;
    for (label, bank) in [("s1", &shared.s1_bank), ("s2", &shared.s2_bank)] {
        let bank = bank.as_ref().ok_or(format!("{label} lifecycle did not run"))?;
        let text = bank.ledger().render();
        let replayed = Ledger::parse(&text).map_err(err)?.replay().map_err(err)?;
        ensure!(
            &replayed == bank.state(),
            "{label} ledger replay differs from live state"
        );
        events += bank.ledger().len();
    }
    Ok(format!(
        "{} golden files round-trip; {events} ledger events replay to the live state",
        cases.len()
    ))
}

fn main() -> ExitCode {
    let criteria: [(&str, Criterion); 9] = [
        ("commutativity", commutativity),
        ("trapdoor root", trapdoor_root),
        ("traversal complexity", complexity),
        ("single-coin lifecycle", s1_lifecycle),
        ("coin-chain lifecycle", s2_lifecycle),
        ("denominations", denominations),
        ("multi-vendor settlement", multivendor),
        ("small lattice", small_lattice),
        ("serialization", serialization),
    ];
    let mut shared = Shared::default();
    let mut failed = 0;
    for (n, (name, check)) in criteria.iter().enumerate() {
        match check(&mut shared) {
            Ok(detail) => println!("criterion {} {name}: PASS ({detail})", n + 1),
            Err(detail) => {
                failed += 1;
                println!("criterion {} {name}: FAIL ({detail})", n + 1);
            }
        }
    }
    println!("acceptance: {} passed, {failed} failed", criteria.len() - failed);
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
