//! Fleet agents as child processes of this executable.

use std::io::{BufRead, BufReader};
use std::path::PathBuf;
use std::process::{Child, Command, Stdio};
use std::sync::mpsc::{channel, Receiver};
use std::time::{Duration, Instant};

use serpaudit_core::agent::AgentEvent;
use serpaudit_core::fleet::{AgentProcess, Launcher, PlannedAgent, ProcessPoll};

#[derive(Debug, Clone)]
pub struct ProcessLauncher {
    pub exe: PathBuf,
    pub server_url: String,
    pub mock_url: Option<String>,
}

pub struct ChildAgent {
    child: Child,
    events: Receiver<AgentEvent>,
}

impl Launcher for ProcessLauncher {
    type Process = ChildAgent;

    fn launch(&mut self, agent: &PlannedAgent) -> std::io::Result<ChildAgent> {
        let profile = agent.state_dir.join("agent.json");
        let mut cmd = Command::new(&self.exe);
        cmd.arg("agent")
            .arg("run")
            .arg("--server")
            .arg(&self.server_url)
            .arg("--region")
            .arg(agent.region.code())
            .arg("--profile")
            .arg(&profile)
            .arg("--events");
        match &self.mock_url {
            Some(url) => cmd.args(["--mode", "mock", "--mock-url", url]),
            None => cmd.args(["--mode", "live"]),
        };
        if agent.settings.retention {
            cmd.arg("--retain-raw");
        }
        let mut child = cmd.stdin(Stdio::null()).stdout(Stdio::piped()).stderr(Stdio::inherit()).spawn()?;
        let stdout = child.stdout.take().expect("piped stdout");
        let (tx, rx) = channel();
        std::thread::spawn(move || {
            for line in BufReader::new(stdout).lines().map_while(Result::ok) {
                if let Ok(event) = serde_json::from_str::<AgentEvent>(&line) {
                    if tx.send(event).is_err() {
                        break;
                    }
                }
            }
        });
        Ok(ChildAgent { child, events: rx })
    }
}

/// Resident set size from procfs, where available.
fn rss_bytes(pid: u32) -> Option<u64> {
    let status = std::fs::read_to_string(format!("/proc/{pid}/status")).ok()?;
    let line = status.lines().find(|l| l.starts_with("VmRSS:"))?;
    let kb: u64 = line.split_whitespace().nth(1)?.parse().ok()?;
    Some(kb * 1024)
}

impl AgentProcess for ChildAgent {
    fn poll(&mut self) -> ProcessPoll {
        let events = self.events.try_iter().collect();
        let exited = match self.child.try_wait() {
            Ok(Some(status)) => Some(status.code()),
            Ok(None) => None,
            Err(_) => Some(None),
        };
        ProcessPoll {
            events,
            exited,
            rss_bytes: rss_bytes(self.child.id()),
        }
    }

    fn terminate(&mut self) {
        let _ = self.child.kill();
        let deadline = Instant::now() + Duration::from_secs(10);
        while Instant::now() < deadline {
            if matches!(self.child.try_wait(), Ok(Some(_))) {
                return;
            }
            std::thread::sleep(Duration::from_millis(50));
        }
        let _ = self.child.wait();
    }
}
