use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn corpus(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../core/tests/corpus").join(name)
}

fn netqir(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_netqir"))
        .args(args)
        .env_remove("NETQIR_QUBIT_CAP")
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8(o.stderr.clone()).unwrap()
}

fn path(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn analyze_row_for_five_qpus() {
    let o = netqir(&[
        "analyze", "--circuit", "qft", "--qpus", "5", "--protocol", "teledata", "--topology", "direct",
        "--format", "csv",
    ]);
    assert_eq!(o.status.code(), Some(0));
    let text = stdout(&o);
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("protocol,topology,n_qpus,consumed,needed_per_qpu,syncs"));
    let row: Vec<&str> = lines.next().unwrap().split(',').collect();
    assert_eq!(row[..4], ["teledata", "direct", "5", "40"]);
}

#[test]
fn analyze_rejects_auto_and_small_counts() {
    let o = netqir(&["analyze", "--qpus", "4", "--protocol", "auto"]);
    assert_eq!(o.status.code(), Some(2));
    let o = netqir(&["analyze", "--qpus", "1"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn analyze_json_lists_every_pair() {
    let o = netqir(&["analyze", "--qpus", "3", "--format", "json"]);
    assert_eq!(o.status.code(), Some(0));
    let rows: Vec<serde_json::Value> = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(rows.len(), 6);
}

#[test]
fn parse_teleport_is_canonical() {
    let file = corpus("teleport.nqir");
    let o = netqir(&["parse", path(&file)]);
    assert_eq!(o.status.code(), Some(0));
    let dir = tempfile::tempdir().unwrap();
    let again = dir.path().join("again.nqir");
    std::fs::write(&again, &o.stdout).unwrap();
    let o2 = netqir(&["parse", again.to_str().unwrap()]);
    assert_eq!(o2.stdout, o.stdout);
}

#[test]
fn parse_reports_unknown_intrinsic_with_position() {
    let o = netqir(&["parse", path(&corpus("invalid/unknown_intrinsic.nqir"))]);
    assert_eq!(o.status.code(), Some(1));
    let err = stderr(&o);
    assert!(err.contains("unknown-intrinsic"), "{err}");
    assert!(err.contains("__netqir__broadcast"), "{err}");
}

#[test]
fn validate_exit_codes() {
    let ok = netqir(&["validate", path(&corpus("scatter_gather.nqir"))]);
    assert_eq!(ok.status.code(), Some(0));
    let bad = netqir(&["validate", path(&corpus("invalid/arity_mismatch.nqir"))]);
    assert_eq!(bad.status.code(), Some(1));
    assert!(stderr(&bad).contains("error[arity]"));
}

#[test]
fn missing_input_is_a_usage_error() {
    let o = netqir(&["parse", "/nonexistent/file.nqir"]);
    assert_eq!(o.status.code(), Some(2));
    let o = netqir(&["frobnicate"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn lower_writes_ledger_to_file() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("teleport.lowered");
    let o = netqir(&["lower", path(&corpus("teleport.nqir")), "-o", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let text = std::fs::read_to_string(out).unwrap();
    assert!(text.starts_with("world 2 topology direct"), "{text}");
    assert!(text.contains("ledger:"));
}

#[test]
fn lower_rejects_protocol_mismatch() {
    let o = netqir(&["lower", path(&corpus("invalid/protocol_mismatch.nqir"))]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("protocol-mismatch"));
}

#[test]
fn deadlock_exits_three_and_names_ranks() {
    let o = netqir(&["simulate", path(&corpus("deadlock.nqir")), "--seed", "1"]);
    assert_eq!(o.status.code(), Some(3));
    let err = stderr(&o);
    assert!(err.contains("deadlock"), "{err}");
    assert!(err.contains("rank0"), "{err}");
}

#[test]
fn capacity_exceeded_exits_three() {
    let o = Command::new(env!("CARGO_BIN_EXE_netqir"))
        .args(["simulate", path(&corpus("ghz_chain.nqir")), "--qpus", "4"])
        .env("NETQIR_QUBIT_CAP", "2")
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(3));
    assert!(stderr(&o).contains("capacity"));
}

#[test]
fn simulate_is_deterministic() {
    let file = corpus("scatter_gather.nqir");
    let args = [
        "simulate",
        path(&file),
        "--qpus",
        "4",
        "--topology",
        "communicator",
        "--seed",
        "7",
        "--full-state",
    ];
    let a = netqir(&args);
    let b = netqir(&args);
    assert_eq!(a.status.code(), Some(0), "{}", stderr(&a));
    assert_eq!(a.stdout, b.stdout);
    let text = stdout(&a);
    assert!(text.lines().next().unwrap().starts_with("step 1 rank "));
    assert!(text.contains("final state"));
    assert!(text.contains("amplitudes over"));
}

#[test]
fn curves_sweep_has_sixty_rows() {
    let o = netqir(&["curves"]);
    assert_eq!(o.status.code(), Some(0));
    assert_eq!(stdout(&o).lines().count(), 61);
}

#[test]
fn curves_prints_the_library_dataset() {
    let o = netqir(&["curves"]);
    let want = netqir::topology::curves_csv(&netqir::topology::default_curves());
    assert_eq!(stdout(&o), want);
    let o = netqir(&["curves", "--format", "json"]);
    assert_eq!(stdout(&o), netqir::topology::curves_json(&netqir::topology::default_curves()));
}
