mod common;

use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use sdmp::cli::SWEEP_HEADER;
use tempfile::TempDir;

const DIAMOND: &str = "\
# two branches of different risk
node s STA
node a STA 0.1
node b STA 0.3
node d STA
link s a wireless
link a d wireless
link s b wireless
link b d wireless
";

fn sdmp(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_sdmp"))
        .args(args)
        .env_remove("SDMP_KEY")
        .output()
        .expect("binary runs")
}

fn stdout(out: &Output) -> String {
    String::from_utf8_lossy(&out.stdout).into_owned()
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

fn path_str(p: &Path) -> &str {
    p.to_str().unwrap()
}

struct Workspace {
    dir: TempDir,
}

impl Workspace {
    fn new() -> Self {
        Workspace {
            dir: tempfile::tempdir().unwrap(),
        }
    }

    fn file(&self, name: &str, contents: &[u8]) -> PathBuf {
        let path = self.dir.path().join(name);
        fs::write(&path, contents).unwrap();
        path
    }

    fn path(&self, name: &str) -> PathBuf {
        self.dir.path().join(name)
    }

    fn share(&self, stem: &str, i: usize) -> PathBuf {
        self.path(&format!("{stem}.share{i}.sdmp"))
    }
}

#[test]
fn threshold_split_and_any_two_rejoin() {
    let ws = Workspace::new();
    let input = ws.file("doc.bin", b"two of three is enough");
    let out = sdmp(&[
        "split",
        path_str(&input),
        "--mode",
        "threshold",
        "-t",
        "2",
        "-n",
        "3",
    ]);
    assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
    for pair in [(1, 2), (1, 3), (2, 3)] {
        let target = ws.path("joined.bin");
        let out = sdmp(&[
            "join",
            path_str(&ws.share("doc", pair.0)),
            path_str(&ws.share("doc", pair.1)),
            "--out",
            path_str(&target),
        ]);
        assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
        assert_eq!(fs::read(&target).unwrap(), b"two of three is enough");
    }
    let out = sdmp(&[
        "join",
        path_str(&ws.share("doc", 2)),
        "--out",
        path_str(&ws.path("x")),
    ]);
    assert_eq!(out.status.code(), Some(4));
}

#[test]
fn degenerate_chain_and_missing_chain_share() {
    let ws = Workspace::new();
    let input = ws.file("one.txt", b"single fragment");
    assert_eq!(
        sdmp(&["split", path_str(&input), "--mode", "chain", "-k", "1"])
            .status
            .code(),
        Some(0)
    );
    assert!(!ws.share("one", 2).exists());
    let target = ws.path("back.txt");
    let out = sdmp(&[
        "join",
        path_str(&ws.share("one", 1)),
        "--out",
        path_str(&target),
    ]);
    assert_eq!(out.status.code(), Some(0));
    assert_eq!(fs::read(&target).unwrap(), b"single fragment");

    let input = ws.file("three.txt", b"needs every piece");
    assert_eq!(
        sdmp(&["split", path_str(&input), "--mode", "chain", "-k", "3"])
            .status
            .code(),
        Some(0)
    );
    let out = sdmp(&[
        "join",
        path_str(&ws.share("three", 1)),
        path_str(&ws.share("three", 3)),
        "--out",
        path_str(&target),
    ]);
    assert_eq!(out.status.code(), Some(4));
}

#[test]
fn policy_errors_exit_2() {
    let ws = Workspace::new();
    let input = ws.file("m", b"x");
    let out = sdmp(&[
        "split",
        path_str(&input),
        "--mode",
        "threshold",
        "-t",
        "4",
        "-n",
        "3",
    ]);
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("t exceeds n"));
    for args in [
        vec!["--mode", "chain", "-t", "2"],
        vec!["--mode", "threshold", "-k", "2"],
        vec!["--mode", "chain"],
        vec!["-k", "2"],
        vec!["--mode", "chain", "-k", "0"],
    ] {
        let mut full = vec!["split", path_str(&input)];
        full.extend(args.iter().copied());
        assert_eq!(sdmp(&full).status.code(), Some(2), "{args:?}");
    }
    let out = sdmp(&[
        "split",
        path_str(&input),
        "--mode",
        "chain",
        "-k",
        "2",
        "--key",
        "abc",
    ]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn io_errors_exit_3() {
    let ws = Workspace::new();
    let missing = ws.path("nope");
    let out = sdmp(&["split", path_str(&missing), "--mode", "chain", "-k", "2"]);
    assert_eq!(out.status.code(), Some(3));
    let out = sdmp(&["join", path_str(&missing), "--out", path_str(&ws.path("o"))]);
    assert_eq!(out.status.code(), Some(3));
}

#[test]
fn corruption_and_wrong_key_exit_5() {
    let ws = Workspace::new();
    let input = ws.file("c.dat", &[0x42; 500]);
    let key = "11".repeat(32);
    let out = sdmp(&[
        "split",
        path_str(&input),
        "--mode",
        "chain",
        "-k",
        "3",
        "--key",
        &key,
    ]);
    assert_eq!(out.status.code(), Some(0));
    let shares: Vec<String> = (1..=3)
        .map(|i| path_str(&ws.share("c", i)).to_string())
        .collect();
    let target = ws.path("c.out");

    let mut args = vec!["join"];
    args.extend(shares.iter().map(String::as_str));
    args.extend(["--out", path_str(&target)]);
    assert_eq!(
        sdmp(&args).status.code(),
        Some(5),
        "zero key must not decrypt"
    );

    let mut keyed = args.clone();
    keyed.extend(["--key", &key]);
    assert_eq!(sdmp(&keyed).status.code(), Some(0));

    let env_run = Command::new(env!("CARGO_BIN_EXE_sdmp"))
        .args(&args)
        .env("SDMP_KEY", &key)
        .output()
        .unwrap();
    assert_eq!(
        env_run.status.code(),
        Some(0),
        "key taken from the environment"
    );

    let mut bytes = fs::read(&shares[1]).unwrap();
    let last = bytes.len() - 1;
    bytes[last] ^= 0x01;
    fs::write(&shares[1], bytes).unwrap();
    let out = sdmp(&keyed);
    assert_eq!(out.status.code(), Some(5));
    assert!(stderr(&out).contains("integrity"));

    fs::write(&shares[1], b"garbage").unwrap();
    assert_eq!(sdmp(&keyed).status.code(), Some(5));
}

#[test]
fn mixed_messages_exit_6() {
    let ws = Workspace::new();
    let a = ws.file("a.txt", b"first");
    let b = ws.file("b.txt", b"second");
    for input in [&a, &b] {
        let out = sdmp(&[
            "split",
            path_str(input),
            "--mode",
            "threshold",
            "-t",
            "2",
            "-n",
            "2",
        ]);
        assert_eq!(out.status.code(), Some(0));
    }
    let out = sdmp(&[
        "join",
        path_str(&ws.share("a", 1)),
        path_str(&ws.share("b", 2)),
        "--out",
        path_str(&ws.path("mix")),
    ]);
    assert_eq!(out.status.code(), Some(6));
}

#[test]
fn seeded_split_is_deterministic() {
    let ws = Workspace::new();
    let input = ws.file("s.txt", b"reproducible");
    let mut runs = Vec::new();
    for dir in ["one", "two"] {
        fs::create_dir(ws.path(dir)).unwrap();
        let out_dir = ws.path(dir);
        let out = sdmp(&[
            "split",
            path_str(&input),
            "--mode",
            "threshold",
            "-t",
            "2",
            "-n",
            "3",
            "--seed",
            "5",
            "--out",
            path_str(&out_dir),
        ]);
        assert_eq!(out.status.code(), Some(0));
        runs.push(
            (1..=3)
                .map(|i| fs::read(out_dir.join(format!("s.share{i}.sdmp"))).unwrap())
                .collect::<Vec<_>>(),
        );
    }
    assert_eq!(runs[0], runs[1]);
}

#[test]
fn paths_lists_diamond_branches() {
    let ws = Workspace::new();
    let topo = ws.file("diamond.topo", DIAMOND.as_bytes());
    let csv = ws.path("paths.csv");
    let out = sdmp(&[
        "paths",
        "--topology",
        path_str(&topo),
        "--source",
        "s",
        "--dest",
        "d",
        "--out",
        path_str(&csv),
    ]);
    assert_eq!(out.status.code(), Some(0));
    let text = stdout(&out);
    assert!(text.starts_with("2 paths\n"), "{text}");
    assert!(
        text.contains("1: s -> a -> d  hops=2 cost=0.105361 p_compromise=0.100000"),
        "{text}"
    );
    assert!(
        text.contains("2: s -> b -> d  hops=2 cost=0.356675 p_compromise=0.300000"),
        "{text}"
    );
    let csv = fs::read_to_string(csv).unwrap();
    assert_eq!(
        csv.lines().next(),
        Some("rank,hops,cost,p_compromise,nodes")
    );
    assert_eq!(csv.lines().count(), 3);

    let out = sdmp(&[
        "paths",
        "--topology",
        path_str(&topo),
        "--source",
        "s",
        "--dest",
        "d",
        "--max",
        "1",
    ]);
    assert!(stdout(&out).starts_with("1 paths\n"));
}

#[test]
fn paths_unreachable_and_malformed() {
    let ws = Workspace::new();
    let topo = ws.file(
        "split.topo",
        b"node s STA\nnode d STA\nnode a STA\nlink s a wireless\n",
    );
    let out = sdmp(&[
        "paths",
        "--topology",
        path_str(&topo),
        "--source",
        "s",
        "--dest",
        "d",
    ]);
    assert_eq!(out.status.code(), Some(0));
    assert_eq!(stdout(&out), "0 paths\n");

    let bad = ws.file(
        "bad.topo",
        b"node s STA\nnode d STA\nlink s d carrier-pigeon\n",
    );
    let out = sdmp(&[
        "paths",
        "--topology",
        path_str(&bad),
        "--source",
        "s",
        "--dest",
        "d",
    ]);
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("line 3"), "{}", stderr(&out));

    let out = sdmp(&[
        "paths",
        "--topology",
        path_str(&topo),
        "--source",
        "s",
        "--dest",
        "zz",
    ]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn simulate_reports_and_replays() {
    let ws = Workspace::new();
    let topo = ws.file("diamond.topo", DIAMOND.as_bytes());
    let msg = ws.file("msg.txt", b"over the air");
    let events = ws.path("events.csv");
    let args = [
        "simulate",
        "--topology",
        path_str(&topo),
        "--source",
        "s",
        "--dest",
        "d",
        "--message",
        path_str(&msg),
        "--seed",
        "7",
        "--mobility",
        "0.2",
        "--p-compromise",
        "0.5",
        "--out",
        path_str(&events),
    ];
    let first = sdmp(&args);
    assert_eq!(first.status.code(), Some(0), "{}", stderr(&first));
    let first_events = fs::read(&events).unwrap();
    let second = sdmp(&args);
    assert_eq!(stdout(&first), stdout(&second));
    assert_eq!(first_events, fs::read(&events).unwrap());
    assert!(String::from_utf8(first_events)
        .unwrap()
        .starts_with("round,node,event,detail\n"));

    let calm = sdmp(&[
        "simulate",
        "--topology",
        path_str(&topo),
        "--source",
        "s",
        "--dest",
        "d",
        "--message",
        path_str(&msg),
    ]);
    assert_eq!(calm.status.code(), Some(0));
    assert!(
        stdout(&calm).contains("reconstructed: true"),
        "{}",
        stdout(&calm)
    );

    let forced = sdmp(&[
        "simulate",
        "--topology",
        path_str(&topo),
        "--source",
        "s",
        "--dest",
        "d",
        "--message",
        path_str(&msg),
        "--mode",
        "threshold",
        "-t",
        "2",
        "-n",
        "2",
        "--compromised",
        "a,b",
    ]);
    assert!(
        stdout(&forced).contains("adversary: captured 2 shares, reconstructs: true"),
        "{}",
        stdout(&forced)
    );
}

#[test]
fn simulate_without_route_and_bad_config() {
    let ws = Workspace::new();
    let topo = ws.file(
        "split.topo",
        b"node s STA\nnode d STA\nnode a STA\nlink s a wireless\n",
    );
    let msg = ws.file("m", b"lost");
    let base = [
        "simulate",
        "--topology",
        path_str(&topo),
        "--source",
        "s",
        "--dest",
        "d",
        "--message",
        path_str(&msg),
    ];
    let out = sdmp(&base);
    assert_eq!(out.status.code(), Some(0));
    assert!(stdout(&out).contains("reconstructed: false, reason: no-route"));

    let mut bad = base.to_vec();
    bad.extend(["--mobility", "1.5"]);
    assert_eq!(sdmp(&bad).status.code(), Some(2));
    let mut bad = base.to_vec();
    bad.extend(["--rounds", "0"]);
    assert_eq!(sdmp(&bad).status.code(), Some(2));
    let mut bad = base.to_vec();
    bad.extend(["--compromised", "d"]);
    let diamond = ws.file("diamond.topo", DIAMOND.as_bytes());
    bad[2] = path_str(&diamond);
    assert_eq!(sdmp(&bad).status.code(), Some(2));
    let mut bad = base.to_vec();
    bad[8] = "/definitely/not/here";
    assert_eq!(sdmp(&bad).status.code(), Some(3));
}

#[test]
fn sweep_emits_geometric_column() {
    let ws = Workspace::new();
    let topo = ws.file("three.topo", common::parallel_relays(3, 0.1).as_bytes());
    let out = sdmp(&[
        "sweep",
        "--topology",
        path_str(&topo),
        "--source",
        "s",
        "--dest",
        "d",
        "--paths",
        "4",
        "--trials",
        "2000",
        "--seed",
        "3",
    ]);
    assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
    assert!(stderr(&out).contains("n_paths=4 skipped"));
    let text = stdout(&out);
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some(SWEEP_HEADER));
    let rows: Vec<Vec<&str>> = lines.map(|l| l.split(',').collect()).collect();
    assert_eq!(rows.len(), 3);
    for (i, row) in rows.iter().enumerate() {
        let n = i + 1;
        assert_eq!(row[0], n.to_string());
        assert_eq!(row[1], n.to_string());
        assert_eq!(row[2], "threshold");
        let analytic: f64 = row[3].parse().unwrap();
        assert!((analytic - 0.1f64.powi(n as i32)).abs() <= 1e-15);
        assert_eq!(row[6], "2000");
        assert_eq!(row[7], "3");
    }

    let csv = ws.path("sweep.csv");
    let out = sdmp(&[
        "sweep",
        "--topology",
        path_str(&topo),
        "--source",
        "s",
        "--dest",
        "d",
        "--paths",
        "3",
        "--trials",
        "2000",
        "--seed",
        "3",
        "--out",
        path_str(&csv),
    ]);
    assert_eq!(out.status.code(), Some(0));
    assert_eq!(fs::read_to_string(&csv).unwrap(), text);

    let out = sdmp(&[
        "sweep",
        "--topology",
        path_str(&topo),
        "--source",
        "s",
        "--dest",
        "d",
        "--paths",
        "2",
        "--trials",
        "0",
    ]);
    assert_eq!(out.status.code(), Some(2));

    let out = sdmp(&[
        "sweep",
        "--topology",
        path_str(&topo),
        "--source",
        "s",
        "--dest",
        "d",
        "--paths",
        "3",
        "--mode",
        "chain",
        "--key-known",
        "--p-compromise",
        "0.2",
        "--trials",
        "100",
    ]);
    let text = stdout(&out);
    let last = text.lines().last().unwrap();
    assert!(last.starts_with("3,3,chain,"), "{last}");
    let analytic: f64 = last.split(',').nth(3).unwrap().parse().unwrap();
    assert!((analytic - 0.008).abs() < 1e-15);
}
