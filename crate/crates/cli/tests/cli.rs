use std::io::{BufRead, BufReader};
use std::net::TcpListener;
use std::path::Path;
use std::process::{Child, Command, Output, Stdio};

fn krbccn(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_krbccn")).args(args).output().unwrap()
}

fn ok(args: &[&str]) -> Output {
    let out = krbccn(args);
    assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
    out
}

/// A run of free consecutive ports, probed by binding them.
fn free_ports(count: u16) -> u16 {
    for base in (20000..60000).step_by(97) {
        let held: Vec<_> = (0..count).map_while(|i| TcpListener::bind(("127.0.0.1", base + i)).ok()).collect();
        if held.len() == count as usize {
            return base;
        }
    }
    panic!("no free ports");
}

struct Running(Child);

impl Drop for Running {
    fn drop(&mut self) {
        let _ = self.0.kill();
        let _ = self.0.wait();
    }
}

fn start_realm(dir: &Path) -> Running {
    let mut child = Command::new(env!("CARGO_BIN_EXE_krbccn"))
        .args(["realm", "run", dir.join("realm.toml").to_str().unwrap()])
        .stderr(Stdio::piped())
        .spawn()
        .unwrap();
    let mut line = String::new();
    BufReader::new(child.stderr.take().unwrap()).read_line(&mut line).unwrap();
    assert!(line.contains("router listening"), "realm run said: {line}");
    Running(child)
}

#[test]
fn demo_realm_over_sockets() {
    let dir = tempfile::tempdir().unwrap();
    let base = free_ports(6).to_string();
    ok(&["realm", "init", dir.path().to_str().unwrap(), "--base-port", &base]);
    std::fs::write(dir.path().join("public/notes.txt"), "hello\n").unwrap();
    let _realm = start_realm(dir.path());

    let alice = dir.path().join("consumers/alice.toml");
    let alice = alice.to_str().unwrap();
    let out = ok(&["consumer", "get", "/edu/uni-X/ics/cs/students/alice/a.pdf", "--config", alice]);
    assert_eq!(out.stdout.len(), 10240);
    let log = String::from_utf8_lossy(&out.stderr);
    assert!(log.contains("authentication=1 authorization=1 content=1"), "{log}");

    let out = ok(&["consumer", "get", "/edu/uni-X/ics/cs/private/p.txt", "--config", alice]);
    assert!(String::from_utf8_lossy(&out.stderr).contains("challenge=1"));

    let out = ok(&["consumer", "get", "/public/notes.txt", "--config", alice]);
    assert_eq!(out.stdout, b"hello\n");

    let bob = dir.path().join("consumers/bob.toml");
    let out = krbccn(&["consumer", "get", "/edu/uni-X/ics/cs/students/alice/a.pdf", "--config", bob.to_str().unwrap()]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("E_NOT_AUTHORIZED"));

    let dave = dir.path().join("consumers/dave.toml");
    let out = ok(&["consumer", "get", "/edu/uni-X/ics/cs/students/x/y", "--config", dave.to_str().unwrap()]);
    assert_eq!(out.stdout.len(), 10240);
}

#[test]
fn admin_edits_stores_and_realm() {
    let dir = tempfile::tempdir().unwrap();
    let p = |f: &str| dir.path().join(f).to_str().unwrap().to_owned();
    ok(&["realm", "init", &p(""), "--base-port", "7100"]);

    let out = ok(&["admin", "add-user", &p("users.txt"), "erin"]);
    assert!(String::from_utf8_lossy(&out.stdout).starts_with("secret_key = \""));
    let out = ok(&["admin", "add-user", &p("users.txt"), "frank", "--password", "pw", "--kdf", "m=256,t=1,p=1"]);
    assert!(String::from_utf8_lossy(&out.stdout).contains("kdf = \"m=256,t=1,p=1\""));
    let users = std::fs::read_to_string(p("users.txt")).unwrap();
    assert!(users.contains("erin pk ") && users.contains("frank password "), "{users}");
    assert!(!krbccn(&["admin", "add-user", &p("users.txt"), "erin"]).status.success());

    ok(&["admin", "add-policy", &p("policies.txt"), "erin", "/edu/uni-X/ics/cs/students/erin/*"]);
    assert!(std::fs::read_to_string(p("policies.txt")).unwrap().contains("erin\n  /edu/uni-X/ics/cs/students/erin/*"));

    ok(&["admin", "register-producer", &p("realm.toml"), "/labs/*", "--mode", "mutual", "--listen", "127.0.0.1:7199"]);
    let realm = std::fs::read_to_string(p("realm.toml")).unwrap();
    assert!(realm.contains("namespace = \"/labs/*\"") && realm.contains("mode = \"mutual\""), "{realm}");
    // A second producer for the same namespace is refused and the file left alone.
    assert!(!krbccn(&["admin", "register-producer", &p("realm.toml"), "/labs/*"]).status.success());
    assert_eq!(std::fs::read_to_string(p("realm.toml")).unwrap(), realm);
}

#[test]
fn bench_writes_json() {
    let dir = tempfile::tempdir().unwrap();
    let json = dir.path().join("r.json");
    let out = ok(&["bench", "caching", "--requests", "50", "--out", json.to_str().unwrap()]);
    let table = String::from_utf8_lossy(&out.stdout);
    assert!(table.contains("tgt-only"), "{table}");
    let report = std::fs::read_to_string(json).unwrap();
    assert!(report.contains("\"krbccn-bench/1\"") && report.contains("\"total_exchanges\": 52"), "{report}");
    ok(&["bench", "handlers", "--samples", "20"]);
}
