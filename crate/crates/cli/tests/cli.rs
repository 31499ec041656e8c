use std::io::Write;
use std::net::{TcpListener, TcpStream};
use std::path::Path;
use std::process::{Child, Command, Output, Stdio};
use std::time::{Duration, Instant};

const BIN: &str = env!("CARGO_BIN_EXE_rulemesh");

const DRL_DECLS: &str = "declare Person\n  name: string\n  age: integer\nend\ndeclare Adult\n  name: string\nend\n";
const CLIPS_DECLS: &str =
    "(deftemplate Person (slot name (type STRING)) (slot age (type INTEGER)))\n(deftemplate Adult (slot name (type STRING)))\n";
const DRL_ADULT: &str = "rule \"adult\"\nwhen\n  Person(age >= 18, name : $n)\nthen\n  insert Adult(name: $n);\nend\n";
const CLIPS_NOT: &str = "(defrule lonely (not (Person (age 1))) => (assert (Adult (name \"x\"))))\n";

struct Proc(Child);

impl Drop for Proc {
    fn drop(&mut self) {
        let _ = self.0.kill();
        let _ = self.0.wait();
    }
}

fn free_port() -> u16 {
    TcpListener::bind("127.0.0.1:0").unwrap().local_addr().unwrap().port()
}

fn start(args: &[&str], port: u16) -> Proc {
    let child = Command::new(BIN).args(args).stdout(Stdio::null()).stderr(Stdio::null()).spawn().unwrap();
    let deadline = Instant::now() + Duration::from_secs(10);
    while TcpStream::connect(("127.0.0.1", port)).is_err() {
        assert!(Instant::now() < deadline, "{args:?} did not start");
        std::thread::sleep(Duration::from_millis(20));
    }
    Proc(child)
}

fn rulemesh(registry: &str, args: &[&str]) -> Output {
    Command::new(BIN).args(args).env("RULEMESH_REGISTRY_URL", registry).output().unwrap()
}

fn write(dir: &Path, name: &str, text: &str) -> String {
    let p = dir.join(name);
    std::fs::File::create(&p).unwrap().write_all(text.as_bytes()).unwrap();
    p.to_str().unwrap().to_owned()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

#[test]
fn translate_is_offline() {
    let dir = tempfile::tempdir().unwrap();
    let adult = write(dir.path(), "adult.drl", DRL_ADULT);
    let out = rulemesh("http://127.0.0.1:1", &["translate", "--from", "drl-mini", "--to", "clips-mini", &adult]);
    assert_eq!(out.status.code(), Some(0));
    assert!(stdout(&out).starts_with("(defrule adult"));

    let not = write(dir.path(), "not.clp", CLIPS_NOT);
    let out = rulemesh("http://127.0.0.1:1", &["translate", "--from", "clips-mini", "--to", "drl-mini", &not]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("E_UNSUPPORTED"));

    let out = rulemesh("http://127.0.0.1:1", &["translate", "--from", "jess", "--to", "drl-mini", &not]);
    assert_eq!(out.status.code(), Some(2), "usage errors come from clap");
}

#[test]
fn unreachable_registry_exits_2() {
    let port = free_port();
    let out = rulemesh(&format!("http://127.0.0.1:{port}"), &["list"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn end_to_end() {
    let dir = tempfile::tempdir().unwrap();
    let (rp, dp, cp) = (free_port(), free_port(), free_port());
    let reg_url = format!("http://127.0.0.1:{rp}");
    let data = dir.path().join("data");
    let _registry = start(&["registry", "serve", "--port", &rp.to_string(), "--data-dir", data.to_str().unwrap()], rp);
    let _drl = start(
        &["engine", "serve", "--dialect", "drl-mini", "--port", &dp.to_string(), "--title", "drools", "--registry-url", &reg_url, "--replica-group", "g"],
        dp,
    );
    let clips = start(
        &["engine", "serve", "--dialect", "clips-mini", "--port", &cp.to_string(), "--title", "jess", "--registry-url", &reg_url, "--replica-group", "g"],
        cp,
    );
    let run = |args: &[&str]| rulemesh(&reg_url, args);

    let out = run(&["list"]);
    assert_eq!(out.status.code(), Some(0));
    let listing = stdout(&out);
    assert!(listing.contains("drools") && listing.contains("jess") && listing.contains("live"), "{listing}");

    let drl_decls = write(dir.path(), "decls.drl", DRL_DECLS);
    let clips_decls = write(dir.path(), "decls.clp", CLIPS_DECLS);
    assert_eq!(run(&["ks", "create", "--engine", "drools", "--declarations", &drl_decls, "demo"]).status.code(), Some(0));
    assert_eq!(run(&["ks", "create", "--engine", "jess", "--declarations", &clips_decls, "demo"]).status.code(), Some(0));
    assert_eq!(run(&["ks", "create", "--engine", "jess", "demo"]).status.code(), Some(1));

    let adult = write(dir.path(), "adult.drl", DRL_ADULT);
    let out = run(&["rules", "put", "--engine", "drools", "--ks", "demo", &adult]);
    assert_eq!(out.status.code(), Some(0), "{}", stdout(&out));
    let out = run(&["rules", "get", "--engine", "jess", "--ks", "demo"]);
    assert!(stdout(&out).starts_with("(defrule adult"), "{}", stdout(&out));

    let broken = write(dir.path(), "broken.drl", "rule \"b\" when Ghost(x : $x) then insert Adult(name: $x); end\n");
    let out = run(&["rules", "put", "--engine", "drools", "--ks", "demo", "--no-propagate", &broken]);
    assert_eq!(out.status.code(), Some(1));
    assert!(stdout(&out).contains("E_UNKNOWN_TYPE"));
    assert_eq!(run(&["validate", "--engine", "drools", "--ks", "demo", &broken]).status.code(), Some(1));
    let other = write(dir.path(), "other.drl", &DRL_ADULT.replace("adult", "other"));
    assert_eq!(run(&["validate", "--engine", "drools", "--ks", "demo", &other]).status.code(), Some(0));

    let facts = write(dir.path(), "facts.json", r#"[{"type":"Person","values":{"name":"ann","age":20}},{"type":"Person","values":{"name":"bob","age":15}}]"#);
    assert_eq!(run(&["facts", "put", "--engine", "jess", "--ks", "demo", &facts]).status.code(), Some(0));
    let out = run(&["--json", "run", "--engine", "jess", "--ks", "demo"]);
    let report: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(report["firings"], 1);
    assert_eq!(report["new_facts"][0]["values"]["name"], "ann");
    let out = run(&["facts", "get", "--engine", "jess", "--ks", "demo"]);
    assert!(stdout(&out).contains("Adult"));

    let out = run(&["rules", "delete", "--engine", "jess", "--ks", "demo", "--no-propagate", "adult"]);
    assert_eq!(out.status.code(), Some(0));
    assert!(stdout(&run(&["rules", "get", "--engine", "jess", "--ks", "demo"])).is_empty());
    assert!(stdout(&run(&["rules", "get", "--engine", "drools", "--ks", "demo"])).contains("rule \"adult\""));
    assert_eq!(run(&["rules", "delete", "--engine", "drools", "--ks", "demo", "adult"]).status.code(), Some(1));

    drop(clips);
    let out = run(&["run", "--engine", "jess", "--ks", "demo"]);
    assert_eq!(out.status.code(), Some(2));
}
