use std::io::Write;

use mdhc::scenario::{run_script, BUNDLED};
use mdhc::wallet_store::ledger::Ledger;
use mdhc::wallet_store::StoreDir;
use mdhc::Bank;

#[test]
fn bundled_scenarios_replay_to_their_live_state() {
    for (name, text) in BUNDLED {
        let report = run_script(text).unwrap();
        assert!(report.passed(), "{name}\n{}", report.render());
        let text = report.bank.ledger().render();
        let replayed = Ledger::parse(&text).unwrap().replay().unwrap();
        assert_eq!(&replayed, report.bank.state(), "{name}");
    }
}

#[test]
fn ledger_persisted_in_pieces_reloads_whole() {
    let dir = tempfile::tempdir().unwrap();
    let store = StoreDir::new(dir.path());
    store.create().unwrap();
    let report = run_script(BUNDLED[0].1).unwrap();
    let ledger = report.bank.ledger();
    let half = ledger.len() / 2;

    let mut partial = Ledger::default();
    for event in ledger.events().take(half) {
        partial.push(event.clone());
    }
    store.append_ledger(&partial, 0).unwrap();
    store.append_ledger(ledger, half).unwrap();
    let loaded = store.load_ledger().unwrap();
    assert_eq!(&loaded, ledger);

    let issuer = report.bank.issuer().clone();
    let reopened = Bank::from_ledger(issuer, loaded).unwrap();
    assert_eq!(reopened.state(), report.bank.state());

    let mut file = std::fs::OpenOptions::new().append(true).open(store.ledger()).unwrap();
    file.write_all(b"{\"seq\":").unwrap();
    drop(file);
    assert_eq!(&store.load_ledger().unwrap(), ledger);
}
