use std::io::Write;
use std::path::Path;
use std::process::{Command, Output, Stdio};

use tempfile::TempDir;

fn mcsched(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_mcsched")).current_dir(dir).args(args).output().unwrap()
}

fn code(out: &Output) -> i32 {
    out.status.code().unwrap()
}

const QUEUE: &str = r#"{"senders":[{"id":1,"T":10,"C":2,"D":10},{"id":2,"T":15,"C":3,"D":12}],"receiver":{"id":3,"T":20,"C":4,"D":20}}"#;

#[test]
fn gen_sched_check_round_trip() {
    let dir = TempDir::new().unwrap();
    let d = dir.path();
    let gen = ["gen", "--u", "1.5", "--dags", "2", "--vertices", "6", "--cores", "4", "--seed", "7", "-o", "sys.json"];
    assert_eq!(code(&mcsched(d, &gen)), 0);
    for policy in ["llf", "edf"] {
        let out = mcsched(d, &["sched", "sys.json", "--policy", policy, "--lo", "lo.json", "--hi", "hi.json"]);
        assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
        let out = mcsched(d, &["check", "sys.json", "lo.json", "hi.json"]);
        assert_eq!(code(&out), 0);
        assert_eq!(String::from_utf8_lossy(&out.stdout).trim(), "MC-correct");
        assert_eq!(code(&mcsched(d, &["switch-sim", "sys.json", "lo.json", "hi.json"])), 0);
    }

    // The same seed gives the same system.
    let again = [&gen[..gen.len() - 1], &["sys2.json"]].concat();
    assert_eq!(code(&mcsched(d, &again)), 0);
    assert_eq!(std::fs::read(d.join("sys.json")).unwrap(), std::fs::read(d.join("sys2.json")).unwrap());
}

#[test]
fn system_json_round_trips_through_stdin() {
    let dir = TempDir::new().unwrap();
    let d = dir.path();
    let out = mcsched(d, &["gen", "--u", "1.0", "--cores", "2", "--seed", "3"]);
    assert_eq!(code(&out), 0);
    let sys = mcsched::model::McSystem::from_json_validated(std::str::from_utf8(&out.stdout).unwrap()).unwrap();
    assert_eq!(sys.to_json() + "\n", String::from_utf8(out.stdout.clone()).unwrap());

    let mut child = Command::new(env!("CARGO_BIN_EXE_mcsched"))
        .current_dir(d)
        .args(["sched", "-", "--lo", "lo.json", "--hi", "hi.json"])
        .stdin(Stdio::piped())
        .stderr(Stdio::null())
        .spawn()
        .unwrap();
    child.stdin.take().unwrap().write_all(&out.stdout).unwrap();
    assert!(child.wait().unwrap().success());
    let lo = std::fs::read_to_string(d.join("lo.json")).unwrap();
    let table = mcsched::sched::ScheduleTable::from_json(&lo).unwrap();
    assert_eq!(table.to_json() + "\n", lo);
}

#[test]
fn unschedulable_and_broken_tables_exit_one() {
    let dir = TempDir::new().unwrap();
    let d = dir.path();
    let gen = ["gen", "--u", "1.8", "--dags", "2", "--vertices", "4", "--cores", "2", "--seed", "2", "-o", "t.json"];
    assert_eq!(code(&mcsched(d, &gen)), 0);
    let out = mcsched(d, &["sched", "t.json"]);
    assert_eq!(code(&out), 1);
    assert!(String::from_utf8_lossy(&out.stderr).contains("unschedulable"));

    // Emptying the LO table breaks budgets.
    let gen = ["gen", "--u", "1.0", "--cores", "2", "--seed", "5", "-o", "s.json"];
    assert_eq!(code(&mcsched(d, &gen)), 0);
    assert_eq!(code(&mcsched(d, &["sched", "s.json"])), 0);
    let lo = std::fs::read_to_string(d.join("lo.json")).unwrap();
    let mut v: serde_json::Value = serde_json::from_str(&lo).unwrap();
    v["alloc"] = serde_json::json!([]);
    std::fs::write(d.join("lo.json"), v.to_string()).unwrap();
    let out = mcsched(d, &["check", "s.json", "lo.json", "hi.json"]);
    assert_eq!(code(&out), 1);
    assert!(String::from_utf8_lossy(&out.stderr).contains("Condition LO-Mode"));
}

#[test]
fn usage_and_input_errors_exit_two() {
    let dir = TempDir::new().unwrap();
    let d = dir.path();
    assert_eq!(code(&mcsched(d, &["check", "missing.json", "a", "b"])), 2);
    assert_eq!(code(&mcsched(d, &["sched", "x.json", "--policy", "fifo"])), 2);
    assert_eq!(code(&mcsched(d, &["frobnicate"])), 2);

    std::fs::write(d.join("bad.json"), r#"{"cores":2,"dags":[{"id":0,"period":0,"vertices":[],"edges":[]}]}"#).unwrap();
    let out = mcsched(d, &["sched", "bad.json"]);
    assert_eq!(code(&out), 2);
    assert!(String::from_utf8_lossy(&out.stderr).contains("period"));

    std::fs::write(d.join("bad.cfg"), "cores = x\n").unwrap();
    let out = mcsched(d, &["bench", "bad.cfg"]);
    assert_eq!(code(&out), 2);
    assert!(String::from_utf8_lossy(&out.stderr).contains("cores"));

    std::fs::write(d.join("q.json"), r#"{"senders":[],"receiver":{"id":3,"T":20,"C":30,"D":20}}"#).unwrap();
    assert_eq!(code(&mcsched(d, &["pdq-sim", "q.json"])), 2);
}

#[test]
fn pdq_sim_three_tasks() {
    let dir = TempDir::new().unwrap();
    let d = dir.path();
    std::fs::write(d.join("q.json"), QUEUE).unwrap();
    let out = mcsched(d, &["pdq-sim", "q.json", "--horizon", "60", "--seed", "1"]);
    assert_eq!(code(&out), 0);
    let csv = String::from_utf8(out.stdout).unwrap();
    let rows: Vec<Vec<u64>> =
        csv.lines().skip(1).map(|l| l.split(',').map(|f| f.parse().unwrap()).collect()).collect();
    assert_eq!(csv.lines().next().unwrap(), "receiver_job,seq,sender,sender_job,send_deadline,delivery_time,slot");
    // Sequence numbers are dense and deliveries follow deadline order.
    for (i, r) in rows.iter().enumerate() {
        assert_eq!(r[1], i as u64 + 1);
        assert!(r[5] >= r[4]);
    }
    assert!(rows.windows(2).all(|w| w[0][4] <= w[1][4]));
    assert_eq!(&rows[0], &[1, 1, 1, 0, 10, 20, 1]);

    // Fixed seed, fixed output.
    let again = mcsched(d, &["pdq-sim", "q.json", "--horizon", "60", "--seed", "1"]);
    assert_eq!(String::from_utf8(again.stdout).unwrap(), csv);
}

#[test]
fn bench_without_timing_is_reproducible() {
    let dir = TempDir::new().unwrap();
    let d = dir.path();
    std::fs::write(d.join("b.cfg"), "cores = 2\ndags = 2\nvertices = 4\nn_systems = 5\nu_norm = 0.3, 0.6\nseed = 3\n")
        .unwrap();
    let a = mcsched(d, &["bench", "b.cfg", "--no-timing", "--jobs", "1"]);
    let b = mcsched(d, &["bench", "b.cfg", "--no-timing", "--jobs", "3"]);
    assert_eq!(code(&a), 0);
    assert_eq!(a.stdout, b.stdout);
    assert_eq!(String::from_utf8(a.stdout).unwrap().lines().count(), 3);
}
