mod common;

use common::{golden_cases, golden_dir};

#[test]
fn golden_files_round_trip_byte_for_byte() {
    let dir = golden_dir();
    let failures: Vec<String> = golden_cases()
        .iter()
        .filter_map(|case| case.verify(&dir).err().map(|e| format!("{}: {e}", case.file)))
        .collect();
    assert!(failures.is_empty(), "{failures:#?}");
}

#[test]
fn every_checked_in_file_has_a_fixture() {
    let known: Vec<String> = golden_cases().into_iter().map(|c| c.file).collect();
    for entry in std::fs::read_dir(golden_dir()).unwrap() {
        let name = entry.unwrap().file_name().into_string().unwrap();
        assert!(known.contains(&name), "stray golden file {name}");
    }
}
