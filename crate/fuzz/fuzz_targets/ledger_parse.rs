#![no_main]

use libfuzzer_sys::fuzz_target;
use mdhc::wallet_store::ledger::Ledger;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else {
        return;
    };
    if let Ok(ledger) = Ledger::parse_prefix(text) {
        let rendered = ledger.render();
        assert_eq!(Ledger::parse(&rendered).expect("rendered ledger parses"), ledger);
        let _ = ledger.replay();
    }
});
