//! End-to-end tests of the `pear` binary.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn pear() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_pear"));
    c.env_remove("PEAR_SEED");
    c
}

fn scenario(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("scenarios").join(name)
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exited normally")
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8(o.stderr.clone()).unwrap()
}

fn run(scn: &Path, out: &Path, extra: &[&str]) -> Output {
    pear().arg("run").arg(scn).arg("-o").arg(out).args(extra).output().unwrap()
}

fn read(dir: &Path, file: &str) -> String {
    fs::read_to_string(dir.join(file)).unwrap()
}

#[test]
fn run_writes_outputs_and_exits_zero() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(&scenario("two_flows.scn"), dir.path(), &[]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    assert!(stdout(&o).starts_with("4 traces, 4 delivered, 0 dropped"));
    let trace = read(dir.path(), "trace.txt");
    assert_eq!(trace.lines().count(), 20);
    assert!(trace.starts_with("t=0 link=g->q src="));
    assert!(trace.contains("t=1 link=q->i src=15 dst=167772161 ttl=3 oid=15 id=0\n"));
    assert_eq!(read(dir.path(), "verdicts.txt").lines().count(), 4);
    assert!(read(dir.path(), "metrics.txt").contains("\ndelivered=4\n"));
}

#[test]
fn run_twice_is_byte_identical() {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    for d in [&a, &b] {
        assert_eq!(code(&run(&scenario("adversary.scn"), d.path(), &[])), 0);
    }
    for f in ["trace.txt", "verdicts.txt", "metrics.txt", "snapshot.txt"] {
        assert_eq!(read(a.path(), f), read(b.path(), f), "{f}");
    }
}

#[test]
fn validate_reports_errors_with_exit_one() {
    let dir = tempfile::tempdir().unwrap();
    let empty = dir.path().join("empty.scn");
    fs::write(&empty, "").unwrap();
    let o = pear().arg("validate").arg(&empty).output().unwrap();
    assert_eq!(code(&o), 1);
    assert!(stderr(&o).contains("empty scenario"));

    let overlap = dir.path().join("overlap.scn");
    fs::write(&overlap, "interval_len 100\nrouter a start=0 eps=1\nrouter b start=50 eps=2\nlink a b\n").unwrap();
    let o = pear().arg("validate").arg(&overlap).output().unwrap();
    assert_eq!(code(&o), 1);
    let err = stderr(&o);
    assert!(err.contains("interval-plan") && err.contains("`a`") && err.contains("`b`"), "{err}");

    let unknown = dir.path().join("unknown.scn");
    fs::write(&unknown, "interval_len 100\nrouter a start=0 eps=1\nhost h router=zz role=client\n").unwrap();
    let o = pear().arg("validate").arg(&unknown).output().unwrap();
    assert_eq!(code(&o), 1);
    assert!(stderr(&o).contains("line 3: reference: unknown router `zz`"));

    let many = dir.path().join("many.scn");
    fs::write(&many, "interval_len 100\nrouter a start=0 eps=1\nlink a q\nhost h router=zz role=client\n").unwrap();
    let o = pear().arg("validate").arg(&many).output().unwrap();
    assert_eq!(
        stderr(&o),
        "error: line 3: reference: unknown router `q`\nerror: line 4: reference: unknown router `zz`\n"
    );

    let o = pear().arg("validate").arg(scenario("two_flows.scn")).output().unwrap();
    assert_eq!(code(&o), 0);
    assert!(stdout(&o).ends_with(": ok\n"));
}

#[test]
fn run_of_invalid_scenario_exits_one() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(&dir.path().join("missing.scn"), &dir.path().join("out"), &[]);
    assert_eq!(code(&o), 1);
}

#[test]
fn usage_errors_exit_one() {
    let o = pear().arg("bogus").output().unwrap();
    assert_eq!(code(&o), 1);
    let o = pear().arg("--help").output().unwrap();
    assert_eq!(code(&o), 0);
}

#[test]
fn traceback_names_both_flows() {
    // Both flows reach y with the same origin ID, so y's DRT entry for the
    // first flow only survives until the second one arrives.
    let early = tempfile::tempdir().unwrap();
    assert_eq!(code(&run(&scenario("two_flows.scn"), early.path(), &["--until", "6"])), 0);
    let o = pear().arg("traceback").arg(early.path()).args(["y", "6980"]).output().unwrap();
    assert_eq!((code(&o), stdout(&o).as_str()), (0, "y n i q host=g\n"));

    let late = tempfile::tempdir().unwrap();
    assert_eq!(code(&run(&scenario("two_flows.scn"), late.path(), &[])), 0);
    let o = pear().arg("traceback").arg(late.path()).args(["y", "0.0.27.68"]).output().unwrap();
    assert_eq!((code(&o), stdout(&o).as_str()), (0, "y n i p host=h\n"));

    let o = pear().arg("traceback").arg(late.path()).args(["y", "1234"]).output().unwrap();
    assert_eq!(code(&o), 1);
    assert!(stderr(&o).contains("no DRT entry for origin 1234"));
    let o = pear().arg("traceback").arg(late.path()).args(["zz", "6980"]).output().unwrap();
    assert_eq!(code(&o), 1);
    let o = pear().arg("traceback").arg(late.path()).args(["y", "ten"]).output().unwrap();
    assert_eq!(code(&o), 1);
}

#[test]
fn traceback_stops_at_untrusted_neighbor() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(code(&run(&scenario("untrusted.scn"), dir.path(), &[])), 0);
    let o = pear().arg("traceback").arg(dir.path()).args(["y", "4515"]).output().unwrap();
    assert_eq!((code(&o), stdout(&o).as_str()), (0, "y n i k untrusted\n"));
    let o = pear().arg("traceback").arg(dir.path()).args(["y", "4527"]).output().unwrap();
    assert_eq!(stdout(&o), "y n i a host=h\n");
}

#[test]
fn traceback_needs_a_matching_run() {
    let dir = tempfile::tempdir().unwrap();
    let o = pear().arg("traceback").arg(dir.path()).args(["y", "1"]).output().unwrap();
    assert_eq!(code(&o), 1);

    // Editing the scenario after the run invalidates the output directory.
    let scn = dir.path().join("s.scn");
    fs::copy(scenario("two_flows.scn"), &scn).unwrap();
    let out = dir.path().join("out");
    assert_eq!(code(&run(&scn, &out, &[])), 0);
    let edited = fs::read_to_string(&scn).unwrap().replace("eps=10", "eps=11");
    fs::write(&scn, edited).unwrap();
    let o = pear().arg("traceback").arg(&out).args(["y", "6980"]).output().unwrap();
    assert_eq!(code(&o), 1);
    assert!(stderr(&o).contains("no longer reproduces"));
}

#[test]
fn dump_tables_sections() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(code(&run(&scenario("two_flows.scn"), dir.path(), &[])), 0);
    let o = pear().arg("dump-tables").arg(dir.path()).arg("i").output().unwrap();
    assert_eq!(code(&o), 0);
    let text = stdout(&o);
    for header in [
        "[list]\nrole\trouter\tstart\tlen\n",
        "[fib]\nprefix\tnext_hop\tdistance\n",
        "[hrt]\nhip\tnext_hop\tmap\tlast_used\n",
    ] {
        assert!(text.contains(header), "{text}");
    }
    assert!(text.contains("\n15\tq\t15\t"));
    assert!(text.contains("\n765\tp\t15\t"));
    assert!(text.ends_with("[drt]\norigin\thip\tlast_used\n"), "i is not an egress");

    let o = pear().arg("dump-tables").arg(dir.path()).arg("zz").output().unwrap();
    assert_eq!(code(&o), 1);
    // Hosts are not routers.
    let o = pear().arg("dump-tables").arg(dir.path()).arg("g").output().unwrap();
    assert_eq!(code(&o), 1);
}

#[test]
fn seed_flag_beats_env() {
    let scn = scenario("two_flows.scn");
    let seed_of =
        |dir: &Path| read(dir, "snapshot.txt").lines().find_map(|l| l.strip_prefix("seed=").map(String::from)).unwrap();
    let plain = tempfile::tempdir().unwrap();
    assert_eq!(code(&run(&scn, plain.path(), &[])), 0);
    assert_eq!(seed_of(plain.path()), "2024");

    let env = tempfile::tempdir().unwrap();
    let o = pear().env("PEAR_SEED", "77").arg("run").arg(&scn).arg("-o").arg(env.path()).output().unwrap();
    assert_eq!(code(&o), 0);
    assert_eq!(seed_of(env.path()), "77");

    let both = tempfile::tempdir().unwrap();
    let o = pear()
        .env("PEAR_SEED", "77")
        .arg("run")
        .arg(&scn)
        .arg("-o")
        .arg(both.path())
        .args(["--seed", "78"])
        .output()
        .unwrap();
    assert_eq!(code(&o), 0);
    assert_eq!(seed_of(both.path()), "78");
}

#[test]
fn dotted_and_baseline_flags() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(code(&run(&scenario("two_flows.scn"), dir.path(), &["--dotted"])), 0);
    assert!(read(dir.path(), "trace.txt").contains("t=1 link=q->i src=0.0.0.15 dst=10.0.0.1 ttl=3 oid=0.0.0.15 id=0\n"));

    let base = tempfile::tempdir().unwrap();
    assert_eq!(code(&run(&scenario("loop.scn"), base.path(), &["--mode", "baseline"])), 0);
    let metrics = read(base.path(), "metrics.txt");
    assert!(metrics.contains("\nloop_hops=36\n") && metrics.contains("\nreason.ttl_expired=3\n"), "{metrics}");
    assert!(read(base.path(), "snapshot.txt").contains("mode=baseline\n"));
}

/// Secret offsets must never reach any output. The offsets are chosen so
/// they cannot collide with any address, tick or count in these files.
#[test]
fn secret_offsets_never_printed() {
    let secrets = ["48271", "39119", "52727", "61043"];
    let dir = tempfile::tempdir().unwrap();
    let scn = dir.path().join("secret.scn");
    let base = 0x0100_0000u32;
    let text = format!(
        "seed 3\ninterval_len 65536\nlimits until=200\n\
         router a start={} eps={}\nrouter b start={} eps={}\nrouter c start={} eps={}\nrouter e start={} eps={}\n\
         link a b\nlink b c\nlink c e\nprefix 10.0.0.0/8 e\n\
         host h router=a role=client\nhost d router=e role=server addr=10.0.0.1 reply=yes\n\
         send 0 h d\nsend 3 h d\n\
         adversary k kind=spoofing-router attach=b interval=1.0.0.0 target=d forge=in start=2\n",
        base + 65536,
        secrets[0],
        base + 2 * 65536,
        secrets[1],
        base + 3 * 65536,
        secrets[2],
        base + 4 * 65536,
        secrets[3],
    );
    fs::write(&scn, text).unwrap();
    let out = dir.path().join("out");
    let mut printed = String::new();
    for dotted in [false, true] {
        let flag: &[&str] = if dotted { &["--dotted"] } else { &[] };
        let o = run(&scn, &out, flag);
        assert_eq!(code(&o), 0, "{}", stderr(&o));
        printed += &stdout(&o);
        for f in ["trace.txt", "verdicts.txt", "metrics.txt", "snapshot.txt"] {
            printed += &read(&out, f);
        }
        for r in ["a", "b", "c", "e"] {
            let o = pear().arg("dump-tables").arg(&out).arg(r).output().unwrap();
            assert_eq!(code(&o), 0);
            printed += &stdout(&o);
        }
    }
    assert!(printed.contains("[hrt]"));
    let tokens: Vec<&str> = printed.split(|c: char| !c.is_ascii_digit()).filter(|t| !t.is_empty()).collect();
    for s in secrets {
        assert!(!tokens.contains(&s), "secret {s} appears in output");
    }
}
