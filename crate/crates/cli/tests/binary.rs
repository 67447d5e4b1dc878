use std::path::Path;
use std::process::{Child, Command, Output, Stdio};
use std::time::{Duration, Instant};

use serpaudit_core::fleet::{read_health_log, HealthEvent, PlannedAgent};
use serpaudit_core::sim::survey_for;
use serpaudit_core::{Condition, Region};

const EXE: &str = env!("CARGO_BIN_EXE_serpaudit");

struct Killed(Child);

impl Drop for Killed {
    fn drop(&mut self) {
        let _ = self.0.kill();
        let _ = self.0.wait();
    }
}

fn free_port() -> u16 {
    std::net::TcpListener::bind("127.0.0.1:0").unwrap().local_addr().unwrap().port()
}

fn daemon(args: &[&str]) -> (Killed, String) {
    let port = free_port();
    let listen = format!("127.0.0.1:{port}");
    let mut full: Vec<&str> = args.to_vec();
    full.extend(["--listen", &listen]);
    let child = Command::new(EXE).args(&full).stdout(Stdio::null()).stderr(Stdio::null()).spawn().unwrap();
    let base = format!("http://{listen}");
    let deadline = Instant::now() + Duration::from_secs(20);
    while reqwest::blocking::get(format!("{base}/health")).is_err() {
        assert!(Instant::now() < deadline, "{args:?} did not come up");
        std::thread::sleep(Duration::from_millis(100));
    }
    (Killed(child), base)
}

fn run(args: &[&str]) -> Output {
    let out = Command::new(EXE).args(args).output().unwrap();
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

#[test]
fn register_run_export_analyze() {
    let dir = tempfile::tempdir().unwrap();
    let db = dir.path().join("server.db");
    let (_server, base) = daemon(&["server", "--db", p(&db), "--admin-token", "tok"]);
    let (_mock, mock) = daemon(&["mock-ise"]);

    let survey = dir.path().join("survey.json");
    std::fs::write(&survey, serde_json::to_string(&survey_for(Some(Condition::Diabetes), Region::UnitedKingdom)).unwrap()).unwrap();
    let profile = dir.path().join("agent").join("agent.json");
    let out = run(&[
        "agent", "register", "--survey", p(&survey), "--server", &base, "--profile", p(&profile),
        "--mock-url", &mock, "--delay-ms", "0-0",
    ]);
    let reply: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(reply["study_id"], 5);
    assert!(profile.exists());

    let out = run(&[
        "agent", "run", "--server", &base, "--region", "uk", "--mode", "mock", "--profile", p(&profile),
        "--mock-url", &mock, "--once", "--events", "--retain-raw",
    ]);
    let stdout = String::from_utf8(out.stdout).unwrap();
    assert!(stdout.lines().any(|l| l.contains("\"cycle_finished\"")), "{stdout}");
    assert!(stdout.lines().any(|l| l.contains("\"delivered\"")), "{stdout}");

    let corpus = dir.path().join("corpus.csv");
    run(&["export", "--server", &base, "--token", "tok", "--groups", "5", "--out", p(&corpus)]);
    let text = std::fs::read_to_string(&corpus).unwrap();
    assert_eq!(text.lines().count(), 1 + 14);

    let taxonomy = dir.path().join("taxonomy.csv");
    std::fs::write(&taxonomy, "host;category;critical\nglyco-cell-therapy.com;commercial clinic;true\n").unwrap();
    let report = dir.path().join("report");
    run(&[
        "analyze", "--corpus", p(&corpus), "--taxonomy", p(&taxonomy), "--out", p(&report),
        "--groups", "5", "--kw-on", "ads_per_entry",
    ]);
    for f in ["group_metrics.csv", "hosts.csv", "summary.json"] {
        assert!(report.join(f).exists(), "{f} missing");
    }
}

#[test]
fn fleet_plan_and_short_run() {
    let dir = tempfile::tempdir().unwrap();
    let spec = dir.path().join("fleet.toml");
    std::fs::write(
        &spec,
        format!(
            "state_root = {:?}\nseed = 4\n[regions]\nau = 3\nca = 3\nuk = 3\nus = 3\n[[extras]]\nregion = \"us\"\n",
            dir.path().join("state")
        ),
    )
    .unwrap();
    let out = run(&["fleet", "plan", "--spec", p(&spec)]);
    let plan: Vec<PlannedAgent> = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(plan.len(), 13);

    let small = dir.path().join("plan.json");
    std::fs::write(&small, serde_json::to_string(&plan[..2]).unwrap()).unwrap();
    let db = dir.path().join("server.db");
    let (_server, base) = daemon(&["server", "--db", p(&db), "--admin-token", "tok"]);
    let log = dir.path().join("health.log");
    run(&[
        "fleet", "run", "--plan", p(&small), "--server", &base, "--mode", "mock", "--health-log", p(&log),
        "--duration-secs", "4", "--delay-ms", "0-0",
    ]);
    let records = read_health_log(&std::fs::read_to_string(&log).unwrap());
    for agent in &plan[..2] {
        let mine: Vec<_> = records.iter().filter(|r| r.agent == agent.name).collect();
        assert_eq!(mine.first().map(|r| &r.event), Some(&HealthEvent::Launched { attempt: 1 }));
        assert_eq!(mine.last().map(|r| &r.event), Some(&HealthEvent::Stopped));
        assert!(agent.state_dir.join("agent.json").exists());
    }
}
