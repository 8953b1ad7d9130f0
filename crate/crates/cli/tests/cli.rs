use std::path::Path;
use std::process::{Command, Output};

fn mdhc(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_mdhc"))
        .arg("--dir")
        .arg(dir)
        .args(args)
        .output()
        .expect("binary runs")
}

fn stdout(out: &Output) -> String {
    String::from_utf8(out.stdout.clone()).unwrap()
}

fn ok(dir: &Path, args: &[&str]) -> String {
    let out = mdhc(dir, args);
    assert!(
        out.status.success(),
        "{args:?} exited {:?}\n{}{}",
        out.status.code(),
        stdout(&out),
        String::from_utf8_lossy(&out.stderr)
    );
    stdout(&out)
}

/// Params, two mints, payments, verification and redemption in one directory.
fn lifecycle(dir: &Path) -> String {
    let mut log = String::new();
    for args in [
        &["--seed", "5eed", "params", "-m", "4"][..],
        &["--seed", "5eed", "mint", "--scheme", "s1", "--customer", "alice"],
        &[
            "--seed",
            "5eed",
            "mint",
            "--scheme",
            "s2",
            "-n",
            "3",
            "--customer",
            "alice",
        ],
        &["pay", "--scheme", "s1", "--customer", "alice", "--vendor", "shop"],
        &["pay", "--scheme", "s2", "--customer", "alice", "--vendor", "shop"],
        &["pay", "--scheme", "s2", "--customer", "alice", "--vendor", "shop"],
        &["verify", "--vendor", "shop"],
        &["redeem", "--vendor", "shop"],
    ] {
        log.push_str(&ok(dir, args));
    }
    log
}

fn golden(name: &str, actual: &str) {
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/golden").join(name);
    if std::env::var_os("MDHC_UPDATE_GOLDEN").is_some() {
        std::fs::write(&path, actual).unwrap();
    }
    let expected = std::fs::read_to_string(&path).unwrap_or_else(|e| panic!("{}: {e}", path.display()));
    assert_eq!(actual, expected, "{name}");
}

#[test]
fn seeded_lifecycle_is_reproducible() {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    let log = lifecycle(a.path());
    assert_eq!(log, lifecycle(b.path()));
    assert!(log.contains("credited vendor=shop total=3"), "{log}");
    golden("lifecycle.txt", &log);
    for file in [
        "params.private.json",
        "batch.1.json",
        "wallet.alice.json",
        "ledger.jsonl",
    ] {
        let left = std::fs::read(a.path().join(file)).unwrap();
        assert_eq!(left, std::fs::read(b.path().join(file)).unwrap(), "{file}");
    }
}

#[test]
fn double_spend_fails_verification() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    ok(d, &["--seed", "01", "params", "-m", "4"]);
    ok(d, &["--seed", "01", "mint", "--scheme", "s1", "--customer", "alice"]);
    let wallet = std::fs::read(d.join("wallet.alice.json")).unwrap();
    ok(d, &["pay", "--scheme", "s1", "--customer", "alice", "--vendor", "shop"]);
    ok(d, &["verify", "--vendor", "shop"]);
    ok(d, &["redeem", "--vendor", "shop"]);

    std::fs::write(d.join("wallet.alice.json"), wallet).unwrap();
    ok(d, &["pay", "--scheme", "s1", "--customer", "alice", "--vendor", "cafe"]);
    let out = mdhc(d, &["verify", "--vendor", "cafe"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(stdout(&out).contains("result=double_spent"), "{}", stdout(&out));
}

#[test]
fn bench_reports_the_cube_and_linear_worst_cases() {
    let dir = tempfile::tempdir().unwrap();
    let cube = ok(
        dir.path(),
        &[
            "--seed",
            "01",
            "bench",
            "--shape",
            "mdhc",
            "-n",
            "1",
            "-m",
            "14",
            "--strategy",
            "store-root-only",
        ],
    );
    assert_eq!(
        cube,
        "shape N_nodes storage_nodes worst_modexps product\nmdhc 16384 1 14 14\n"
    );
    let linear = ok(
        dir.path(),
        &[
            "--seed",
            "01",
            "bench",
            "--shape",
            "linear",
            "-n",
            "10000",
            "--strategy",
            "store-root-only",
            "--requests",
            "root",
        ],
    );
    assert!(linear.ends_with("linear 10001 1 10000 10000\n"), "{linear}");
    let all = ok(
        dir.path(),
        &[
            "--seed",
            "01",
            "bench",
            "--shape",
            "linear",
            "-n",
            "100",
            "--strategy",
            "store-all",
        ],
    );
    assert!(all.ends_with("linear 101 101 0 0\n"), "{all}");
}

#[test]
fn bundled_scenario_matches_its_trace() {
    let dir = tempfile::tempdir().unwrap();
    let out = ok(dir.path(), &["scenario", "--bundled", "s1-double-spend"]);
    assert!(out.contains("mismatches=0"), "{out}");
    golden("s1-double-spend.txt", &out);
}

#[test]
fn unexpected_scenario_outcome_exits_one() {
    let dir = tempfile::tempdir().unwrap();
    let script = dir.path().join("wrong.toml");
    let text = mdhc::scenario::bundled("s2-chain")
        .unwrap()
        .replacen("expect = \"double_spent\"", "expect = \"ok\"", 1);
    std::fs::write(&script, text).unwrap();
    let out = mdhc(dir.path(), &["scenario", script.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1), "{}", stdout(&out));
    assert!(stdout(&out).contains("MISMATCH"));
}

#[test]
fn usage_errors_exit_two() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    for args in [
        &["mint", "--scheme", "s1"][..],
        &["bench", "--shape", "linear", "-n", "5", "--strategy", "checkpoint:0"],
        &["--seed", "zz", "params"],
        &["scenario", "--bundled", "no-such-script"],
        &["pay", "--scheme", "s1", "--customer", "alice", "--vendor", "shop"],
    ] {
        let out = mdhc(d, args);
        assert_eq!(out.status.code(), Some(2), "{args:?}");
        assert!(!out.stderr.is_empty(), "{args:?}");
    }
    ok(d, &["--seed", "01", "params", "-m", "3"]);
    assert_eq!(mdhc(d, &["--seed", "01", "params"]).status.code(), Some(2));
}
