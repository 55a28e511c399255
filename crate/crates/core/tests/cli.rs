use std::path::Path;
use std::process::{Command, Output};

const EXE: &str = env!("CARGO_BIN_EXE_nmr-qec");

const SMALL: &str = "\
[system]
builtin: malonic

[channel]
kind = dephasing
t2_ms = 1.0

[sweep]
modes = unencoded, corrected, two_rounds
delays = 0:0.4:0.2

[two_rounds]
ideal_ancillae = true
";

fn nmr_qec(args: &[&str], config: &Path) -> Output {
    let (before, after) = args.split_at(1);
    Command::new(EXE).args(before).arg(config).args(after).output().unwrap()
}

#[test]
fn run_writes_csv() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("small.conf");
    std::fs::write(&cfg, SMALL).unwrap();
    let out = dir.path().join("out.csv");
    let res = nmr_qec(&["run", "--out", out.to_str().unwrap()], &cfg);
    assert_eq!(res.status.code(), Some(0), "{}", String::from_utf8_lossy(&res.stderr));
    let text = std::fs::read_to_string(&out).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("delay_ms,mode,f_x,f_y,f_z,F_e,s00,s10,s01,s11"));
    assert_eq!(lines.count(), 9);
}

#[test]
fn run_without_destination_prints_csv() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("small.conf");
    std::fs::write(&cfg, SMALL).unwrap();
    let res = nmr_qec(&["run"], &cfg);
    assert_eq!(res.status.code(), Some(0));
    assert!(String::from_utf8_lossy(&res.stdout).starts_with("delay_ms,mode"));
}

#[test]
fn config_errors_exit_with_one() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.conf");
    std::fs::write(&cfg, "[system]\nbuiltin: malonic\n[channel]\nkind = sideways\n").unwrap();
    let res = nmr_qec(&["run"], &cfg);
    assert_eq!(res.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&res.stderr).contains("line 4"));

    let missing = nmr_qec(&["run"], &dir.path().join("absent.conf"));
    assert_eq!(missing.status.code(), Some(1));

    // no [grape] section
    std::fs::write(&cfg, SMALL).unwrap();
    assert_eq!(nmr_qec(&["grape"], &cfg).status.code(), Some(1));
}

#[test]
fn numerical_failures_exit_with_two() {
    let dir = tempfile::tempdir().unwrap();
    // the configuration is valid; the pulse it points at is not
    let pulse = dir.path().join("start.pulse");
    std::fs::write(&pulse, "# n_slices=2\n# dt_ms=0.1\n1 0\nNaN 0\n").unwrap();
    let cfg = dir.path().join("grape.conf");
    std::fs::write(
        &cfg,
        format!(
            "[system]\nlabels = a\nshift.a = 0.3\n[grape]\ntarget = identity\nduration_ms = 0.2\nstages = 2\ninitial_pulse = {}\n",
            pulse.display()
        ),
    )
    .unwrap();
    let res = nmr_qec(&["grape", "--out", dir.path().join("out.pulse").to_str().unwrap()], &cfg);
    assert_eq!(res.status.code(), Some(2), "{}", String::from_utf8_lossy(&res.stderr));
}

#[test]
fn grape_writes_pulse_file() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("grape.conf");
    std::fs::write(
        &cfg,
        "[system]\nlabels = a\nshift.a = 0.3\n[grape]\ntarget = identity\nduration_ms = 0.2\nstages = 10\n",
    )
    .unwrap();
    let out = dir.path().join("id.pulse");
    let res = nmr_qec(&["grape", "--out", out.to_str().unwrap()], &cfg);
    assert_eq!(res.status.code(), Some(0), "{}", String::from_utf8_lossy(&res.stderr));
    let text = std::fs::read_to_string(&out).unwrap();
    assert!(text.starts_with("# n_slices=10"));
}

#[test]
fn unknown_subcommand_is_a_usage_error() {
    let res = Command::new(EXE).arg("frobnicate").output().unwrap();
    assert_eq!(res.status.code(), Some(1));
}
