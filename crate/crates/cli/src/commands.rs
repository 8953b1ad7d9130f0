use std::cell::OnceCell;
use std::fmt::Write as _;
use std::path::PathBuf;

use mdhc::bank::{draw_start, CoinTags};
use mdhc::chain::{all_indices, measure_traversal, ChainParams, SecretChain};
use mdhc::scenario::{bundled, run_script};
use mdhc::scheme_s1::S1Vendor;
use mdhc::scheme_s2::{ChainState, CustomerChain, GapPolicy, S2Vendor};
use mdhc::wallet_store::hex::to_hex as to_hex_string;
use mdhc::wallet_store::{check_name, StoreDir, StoreError};
use mdhc::{Bank, Issuer, OpCounter, Profile, PublicParams, Seed};

use crate::{
    BenchArgs, Failure, MintArgs, ParamsArgs, PayArgs, RedeemArgs, Requests, ScenarioArgs, Scheme, Shape, VerifyArgs,
};

pub struct Context {
    pub profile: Profile,
    pub dir: PathBuf,
    seed: OnceCell<Seed>,
}

impl Context {
    pub fn new(profile: Profile, seed: Option<Seed>, dir: PathBuf) -> Self {
        let cell = OnceCell::new();
        if let Some(seed) = seed {
            cell.set(seed).expect("fresh cell");
        }
        Context {
            profile,
            dir,
            seed: cell,
        }
    }

    /// The `--seed` value, or a fresh one announced on stderr so the run can
    /// be repeated.
    fn seed(&self) -> &Seed {
        self.seed.get_or_init(|| {
            let seed = Seed::from_entropy();
            eprintln!("seed {}", seed.to_hex());
            seed
        })
    }
}

type Outcome = Result<String, Failure>;

impl From<StoreError> for Failure {
    fn from(e: StoreError) -> Self {
        Failure::Usage(e.to_string())
    }
}

fn usage(msg: impl Into<String>) -> Failure {
    Failure::Usage(msg.into())
}

fn name(text: &str) -> Result<&str, Failure> {
    check_name(text).map_err(Failure::Usage)?;
    Ok(text)
}

/// Bank state rebuilt from the private parameters and the ledger.
struct LoadedBank {
    bank: Bank,
    persisted: usize,
}

impl LoadedBank {
    fn open(store: &StoreDir) -> Result<Self, Failure> {
        let path = store.params_private();
        if !path.exists() {
            return Err(usage(format!("{} not found; run `mdhc params` first", path.display())));
        }
        let issuer: Issuer = store.read(&path)?;
        let ledger = store.load_ledger()?;
        let persisted = ledger.len();
        Ok(LoadedBank {
            bank: Bank::from_ledger(issuer, ledger)?,
            persisted,
        })
    }

    fn save(&self, store: &StoreDir) -> Result<(), Failure> {
        store.append_ledger(self.bank.ledger(), self.persisted)?;
        Ok(())
    }
}

pub fn params(ctx: &Context, args: &ParamsArgs) -> Outcome {
    let store = StoreDir::new(&ctx.dir);
    store.create()?;
    if store.params_private().exists() {
        return Err(usage(format!("{} already exists", store.params_private().display())));
    }
    if args.exponents == 0 {
        return Err(usage("at least one exponent is needed"));
    }
    let bits = args.bits.unwrap_or(ctx.profile.prime_bits);
    let issuer = Issuer::generate(bits, args.exponents, ctx.seed().derive("params").as_bytes())
        .map_err(|e| usage(e.to_string()))?;
    let public = issuer.public();
    store.write(&store.params_private(), &issuer)?;
    store.write(&store.params_public(), &public)?;
    let mut out = String::new();
    writeln!(out, "modulus_bits={}", public.modulus.bits()).unwrap();
    writeln!(out, "modulus={}", to_hex_string(&public.modulus)).unwrap();
    writeln!(
        out,
        "exponents={}",
        join(public.exponents.iter().map(|c| c.to_string()))
    )
    .unwrap();
    writeln!(out, "wrote=params.public.json").unwrap();
    writeln!(out, "wrote=params.private.json").unwrap();
    Ok(out)
}

fn join(items: impl Iterator<Item = String>) -> String {
    items.collect::<Vec<_>>().join(",")
}

pub fn mint(ctx: &Context, args: &MintArgs) -> Outcome {
    let store = StoreDir::new(&ctx.dir);
    let customer = name(&args.customer)?;
    let tags = match &args.vendor_tag {
        Some(v) => CoinTags::for_vendor(name(v)?),
        None => CoinTags::default(),
    };
    let mut loaded = LoadedBank::open(&store)?;
    let batch_id = loaded.bank.state().next_batch_id();
    let mut rng = ctx.seed().derive(&format!("mint/{batch_id}")).rng();
    let mut wallet = store.load_wallet(customer)?;
    let mut out = String::new();
    match args.scheme {
        Scheme::S1 => {
            if args.length.is_some() {
                return Err(usage("--length applies to s2 only"));
            }
            let count = args.count.unwrap_or(loaded.bank.issuer().exponents().len());
            if count > loaded.bank.issuer().exponents().len() {
                return Err(usage(format!("--count {count} exceeds the published exponents")));
            }
            let batch = loaded
                .bank
                .mint_coins_s1(&mut rng, count, tags, &mut OpCounter::new())
                .map_err(|e| usage(e.to_string()))?;
            store.write(&store.batch(batch.batch_id), &batch)?;
            writeln!(
                out,
                "batch={} scheme=s1 root_id={} coins={}",
                batch.batch_id,
                batch.root_id,
                batch.coins.len()
            )
            .unwrap();
            for coin in &batch.coins {
                writeln!(
                    out,
                    "coin index={} exponent={} value={}",
                    coin.exponent_index,
                    coin.exponent,
                    to_hex_string(&coin.value)
                )
                .unwrap();
            }
            wallet.s1_coins.extend(batch.coins);
        }
        Scheme::S2 => {
            if args.count.is_some() {
                return Err(usage("--count applies to s1 only; s2 mints one chain per exponent"));
            }
            let length = args.length.ok_or_else(|| usage("s2 needs --length"))?;
            let batch = loaded
                .bank
                .mint_chains_s2(&mut rng, length, tags, &mut OpCounter::new())
                .map_err(|e| usage(e.to_string()))?;
            store.write(&store.batch(batch.batch_id), &batch)?;
            writeln!(
                out,
                "batch={} scheme=s2 root_id={} chains={} length={}",
                batch.batch_id,
                batch.root_id,
                batch.chains.len(),
                length
            )
            .unwrap();
            let modulus = loaded.bank.issuer().modulus().clone();
            for handle in &batch.chains {
                writeln!(
                    out,
                    "chain index={} exponent={} start={}",
                    handle.exponent_index,
                    handle.exponent,
                    to_hex_string(&handle.start)
                )
                .unwrap();
                let chain = CustomerChain::new(handle.clone(), modulus.clone()).map_err(|e| usage(e.to_string()))?;
                wallet.s2_chains.push(chain);
            }
        }
    }
    loaded.save(&store)?;
    store.write(&store.wallet(customer), &wallet)?;
    Ok(out)
}

pub fn pay(ctx: &Context, args: &PayArgs) -> Outcome {
    let store = StoreDir::new(&ctx.dir);
    let (customer, vendor) = (name(&args.customer)?, name(&args.vendor)?);
    if customer == vendor {
        return Err(usage("customer and vendor must differ"));
    }
    let mut payer = store.load_wallet(customer)?;
    let mut payee = store.load_wallet(vendor)?;
    let line = match args.scheme {
        Scheme::S1 => {
            if payer.s1_coins.is_empty() {
                return Err(usage(format!("{customer} holds no s1 coins")));
            }
            let coin = payer.s1_coins.remove(0);
            let line = format!("paid scheme=s1 coin={} to={vendor}\n", coin.id());
            payee.inbox_s1.push(coin);
            line
        }
        Scheme::S2 => {
            let chain = payer
                .s2_chains
                .get_mut(args.chain)
                .ok_or_else(|| usage(format!("{customer} has no chain {}", args.chain)))?;
            let coin = chain.pay_next_coin().map_err(|e| usage(e.to_string()))?;
            let line = format!(
                "paid scheme=s2 chain={} position={} to={vendor}\n",
                coin.chain_id(),
                coin.position
            );
            payee.inbox_s2.push(coin);
            line
        }
    };
    store.write(&store.wallet(customer), &payer)?;
    store.write(&store.wallet(vendor), &payee)?;
    Ok(line)
}

fn public_params(store: &StoreDir) -> Result<PublicParams, Failure> {
    Ok(store.read(&store.params_public())?)
}

pub fn verify(ctx: &Context, args: &VerifyArgs) -> Outcome {
    let store = StoreDir::new(&ctx.dir);
    let vendor = name(&args.vendor)?;
    let mut loaded = LoadedBank::open(&store)?;
    let public = public_params(&store)?;
    let mut wallet = store.load_wallet(vendor)?;
    let mut out = String::new();
    let mut rejected = 0;

    let state = loaded.bank.state().clone();
    let mut s1 = S1Vendor::new(vendor, public.clone(), state.s1.roots().clone())
        .with_received(wallet.accepted_s1.iter().map(|c| c.id()));
    for coin in std::mem::take(&mut wallet.inbox_s1) {
        let online = if args.offline { None } else { Some(&state.s1) };
        let result = s1.accept(&coin, online);
        writeln!(
            out,
            "verify scheme=s1 coin={} result={}",
            coin.id(),
            result.map_or_else(|r| r.name(), |_| "ok")
        )
        .unwrap();
        match result {
            Ok(()) => wallet.accepted_s1.push(coin),
            Err(_) => rejected += 1,
        }
    }

    let mut s2 = S2Vendor::new(vendor, public, state.s2.roots().clone(), GapPolicy::Strict)
        .with_sessions(wallet.accepted_s2.iter().cloned());
    for coin in std::mem::take(&mut wallet.inbox_s2) {
        let result = s2.accept(&coin, &mut loaded.bank, &mut OpCounter::new());
        writeln!(
            out,
            "verify scheme=s2 chain={} position={} result={}",
            coin.chain_id(),
            coin.position,
            result.map_or_else(|r| r.name(), |_| "ok")
        )
        .unwrap();
        if result.is_err() {
            rejected += 1;
        }
    }
    wallet.accepted_s2 = s2.chains().cloned().collect();

    if out.is_empty() {
        out.push_str("nothing to verify\n");
    }
    loaded.save(&store)?;
    store.write(&store.wallet(vendor), &wallet)?;
    if rejected > 0 {
        return Err(Failure::Violation(out));
    }
    Ok(out)
}

pub fn redeem(ctx: &Context, args: &RedeemArgs) -> Outcome {
    let store = StoreDir::new(&ctx.dir);
    let vendor = name(&args.vendor)?;
    let mut loaded = LoadedBank::open(&store)?;
    let mut wallet = store.load_wallet(vendor)?;
    let mut out = String::new();
    let mut rejected = 0;

    for coin in std::mem::take(&mut wallet.accepted_s1) {
        let result = loaded.bank.deposit_coin_s1(&coin, vendor);
        writeln!(
            out,
            "deposit scheme=s1 coin={} result={}",
            coin.id(),
            result.map_or_else(|r| r.name(), |_| "ok")
        )
        .unwrap();
        if result.is_err() {
            rejected += 1;
        }
    }
    for coin in &wallet.accepted_s2 {
        let already = match loaded.bank.state().s2.chain(&coin.chain_id()) {
            Some(ChainState::Redeemed { highest, .. }) => *highest,
            _ => 0,
        };
        if already >= coin.position {
            continue;
        }
        let result = loaded.bank.redeem_chain(coin, vendor);
        let shown = match result {
            Ok(credited) => format!("ok credited={credited}"),
            Err(r) => {
                rejected += 1;
                r.name().to_string()
            }
        };
        writeln!(
            out,
            "redeem scheme=s2 chain={} position={} result={shown}",
            coin.chain_id(),
            coin.position
        )
        .unwrap();
    }
    writeln!(
        out,
        "credited vendor={vendor} total={}",
        loaded.bank.accounts().credited(vendor)
    )
    .unwrap();
    loaded.save(&store)?;
    store.write(&store.wallet(vendor), &wallet)?;
    if rejected > 0 {
        return Err(Failure::Violation(out));
    }
    Ok(out)
}

pub fn scenario(args: &ScenarioArgs) -> Outcome {
    let text = if args.bundled {
        bundled(&args.script)
            .ok_or_else(|| usage(format!("no bundled script named {:?}", args.script)))?
            .to_string()
    } else {
        std::fs::read_to_string(&args.script).map_err(|e| usage(format!("{}: {e}", args.script)))?
    };
    let report = run_script(&text).map_err(|e| usage(e.to_string()))?;
    let mismatches = report.trace.iter().filter(|t| !t.matched()).count();
    let mut out = report.render();
    writeln!(out, "steps={} mismatches={mismatches}", report.trace.len()).unwrap();
    if mismatches > 0 {
        return Err(Failure::Violation(out));
    }
    Ok(out)
}

pub fn bench(ctx: &Context, args: &BenchArgs) -> Outcome {
    let m = match args.shape {
        Shape::Linear if args.m != 1 => return Err(usage("a linear chain has one dimension; drop -m")),
        Shape::Linear => 1,
        Shape::Mdhc => args.m,
    };
    if m == 0 || args.n == 0 {
        return Err(usage("-n and -m must be positive"));
    }
    let issuer = Issuer::generate(ctx.profile.prime_bits, m, ctx.seed().derive("bench").as_bytes())
        .map_err(|e| usage(e.to_string()))?;
    let params = ChainParams::uniform(issuer.modulus().clone(), issuer.exponents().clone(), args.n)
        .map_err(|e| usage(e.to_string()))?;
    let start = draw_start(&mut ctx.seed().derive("bench/start").rng(), issuer.modulus());
    let requests = match args.requests {
        Requests::All => all_indices(&params).map_err(|e| usage(format!("{e}; try --requests root")))?,
        Requests::Root => vec![params.root_index()],
    };
    let chain = SecretChain::new(params, start, None).map_err(|e| usage(e.to_string()))?;
    let report = measure_traversal(&chain, args.strategy, &requests).map_err(|e| usage(e.to_string()))?;
    let shape = match args.shape {
        Shape::Linear => "linear",
        Shape::Mdhc => "mdhc",
    };
    let mut out = String::from("shape N_nodes storage_nodes worst_modexps product\n");
    writeln!(
        out,
        "{shape} {} {} {} {}",
        report.node_count,
        report.peak_storage,
        report.worst_modexps(),
        report.product()
    )
    .unwrap();
    Ok(out)
}
