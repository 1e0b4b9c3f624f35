use std::fs;
use std::process::{Command, Output};

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_blockdesign")).args(args).output().unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

#[test]
fn usage_errors_exit_one() {
    assert_eq!(run(&[]).status.code(), Some(1));
    assert_eq!(run(&["design", "--bogus"]).status.code(), Some(1));
    assert_eq!(run(&["--help"]).status.code(), Some(0));
}

#[test]
fn block_design_reports_block_size() {
    let o = run(&["design", "--family", "block", "--n", "48", "--nT", "48", "--B", "8"]);
    assert!(o.status.success());
    assert!(stdout(&o).contains("blocks 8 of size 12 with 6 treated each"));
}

#[test]
fn enumeration_lists_full_support() {
    let o = run(&["design", "--family", "crd", "--n", "3", "--nT", "1", "--enumerate"]);
    assert!(o.status.success());
    let text = stdout(&o);
    let rows: Vec<&str> = text.lines().filter(|l| !l.starts_with('#')).skip(1).collect();
    assert_eq!(rows.len(), 6);
    assert!(rows.iter().all(|r| r.matches('+').count() == 1));
}

#[test]
fn invalid_block_count_is_a_validation_error() {
    let o = run(&["design", "--family", "block", "--n", "24", "--B", "5"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(!o.stderr.is_empty());
}

#[test]
fn unknown_config_key_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bad.toml");
    fs::write(&path, "n = 4\nblocks_typo = 2\n").unwrap();
    let o = run(&["design", "--config", path.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("blocks_typo"));
}

#[test]
fn verify_passes_and_selects_suites() {
    let o = run(&["verify"]);
    assert!(o.status.success(), "{}", stdout(&o));
    let o = run(&["verify", "--suite", "unbiasedness"]);
    assert!(o.status.success());
    let text = stdout(&o);
    assert!(text.contains("unbiasedness"));
    assert!(!text.contains("enumeration"));
}

#[test]
fn mutated_closed_form_fails_verification() {
    let o = run(&["verify", "--mutate-closed-form", "1.01"]);
    assert_eq!(o.status.code(), Some(3));
}

#[test]
fn criteria_table_has_expected_columns() {
    let o = run(&["criteria", "--n", "8", "--kind", "incidence"]);
    assert!(o.status.success());
    let text = stdout(&o);
    let header = text.lines().find(|l| !l.starts_with('#')).unwrap();
    assert_eq!(header, "design,B,B1,B2,S,R,mean_mse,var_mse,Q_q,worst_case");
    assert!(text.lines().any(|l| l.starts_with("PB,")));
}

#[test]
fn simulation_is_reproducible_from_config_and_seed() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a.csv");
    let b = dir.path().join("b.csv");
    let args = ["simulate", "--n", "8", "--kind", "count", "--Ny", "2000", "--seed", "99", "--out"];
    assert!(run(&[&args[..], &[a.to_str().unwrap()]].concat()).status.success());
    let meta = dir.path().join("a.csv.meta.toml");
    let o = run(&["simulate", "--config", meta.to_str().unwrap(), "--out", b.to_str().unwrap()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let (x, y) = (fs::read_to_string(&a).unwrap(), fs::read_to_string(&b).unwrap());
    assert_eq!(x, y);
    assert!(x.lines().nth(1).unwrap().contains(",99,"));
    assert!(fs::read_to_string(&meta).unwrap().contains("seed = 99"));
}
