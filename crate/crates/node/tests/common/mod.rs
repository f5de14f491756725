#![allow(dead_code)]

use std::io::{BufRead, BufReader};
use std::path::{Path, PathBuf};
use std::process::{Child, ChildStdout, Command, Stdio};
use std::sync::mpsc;
use std::time::Duration;

use p1451_core::teds::SecurityLevel;
use p1451_node::auth::{Credential, CredentialStore};
use p1451_node::broker::{self, BrokerConfig, BrokerHandle};
use p1451_node::client::ClientOptions;
use p1451_node::transport::TlsClientOptions;
use rcgen::{BasicConstraints, CertificateParams, IsCa, KeyPair};

pub const BIN: &str = env!("CARGO_BIN_EXE_p1451");

/// A scratch directory with a CA, a server certificate for
/// localhost/127.0.0.1, and a password file.
pub struct Fixture {
    pub dir: tempfile::TempDir,
    pub ca: PathBuf,
    pub cert: PathBuf,
    pub key: PathBuf,
    pub passwords: PathBuf,
    pub acl: PathBuf,
}

pub const USERS: [(&str, &str); 4] =
    [("ncap01", "ncap-secret"), ("app01", "app-secret"), ("acs", "acs-secret"), ("nobody", "nobody-secret")];

impl Fixture {
    pub fn new() -> Self {
        let dir = tempfile::tempdir().unwrap();
        let mut ca_params = CertificateParams::new(Vec::<String>::new()).unwrap();
        ca_params.is_ca = IsCa::Ca(BasicConstraints::Unconstrained);
        let ca_key = KeyPair::generate().unwrap();
        let ca_cert = ca_params.self_signed(&ca_key).unwrap();
        let leaf_params = CertificateParams::new(vec!["localhost".to_string(), "127.0.0.1".to_string()]).unwrap();
        let leaf_key = KeyPair::generate().unwrap();
        let leaf = leaf_params.signed_by(&leaf_key, &ca_cert, &ca_key).unwrap();

        let path = |n: &str| dir.path().join(n);
        std::fs::write(path("ca.pem"), ca_cert.pem()).unwrap();
        std::fs::write(path("cert.pem"), leaf.pem()).unwrap();
        std::fs::write(path("key.pem"), leaf_key.serialize_pem()).unwrap();
        let store = CredentialStore::from_credentials(USERS.iter().map(|(u, p)| Credential::new(*u, p.as_bytes())));
        std::fs::write(path("passwd"), store.to_file_text()).unwrap();
        std::fs::write(path("acl"), "").unwrap();
        Fixture {
            ca: path("ca.pem"),
            cert: path("cert.pem"),
            key: path("key.pem"),
            passwords: path("passwd"),
            acl: path("acl"),
            dir,
        }
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.dir.path().join(name)
    }

    pub fn write_acl(&self, text: &str) {
        std::fs::write(&self.acl, text).unwrap();
    }

    /// Broker config using every file the fixture has, so any level starts.
    pub fn broker_config(&self, level: SecurityLevel) -> BrokerConfig {
        let mut c = BrokerConfig::new("127.0.0.1:0", level);
        c.password_file = Some(self.passwords.clone());
        c.acl_file = Some(self.acl.clone());
        c.tls_cert = Some(self.cert.clone());
        c.tls_key = Some(self.key.clone());
        c.acl_poll_interval = Duration::from_millis(50);
        c.retransmit_interval = Duration::from_millis(300);
        c
    }

    pub async fn broker(&self, level: SecurityLevel) -> BrokerHandle {
        broker::start(self.broker_config(level)).await.unwrap()
    }

    pub fn tls_options(&self) -> TlsClientOptions {
        TlsClientOptions { ca_cert: Some(self.ca.clone()), insecure: false, server_name: Some("localhost".into()) }
    }

    /// Client options matching the broker's level: TLS when the level
    /// encrypts, and the named user's credentials when `user` is given.
    pub fn client(&self, broker: &BrokerHandle, id: &str, user: Option<&str>) -> ClientOptions {
        let creds = user.map(|u| {
            let pw = USERS.iter().find(|(n, _)| *n == u).map(|(_, p)| p.to_string()).expect("known user");
            (u.to_string(), pw)
        });
        let tls = broker.level().has(p1451_core::teds::Policy::Encryption).then(|| self.tls_options());
        let mut o = ClientOptions::new(broker.local_addr().to_string(), id)
            .credentials(creds.as_ref().map(|c| c.0.clone()), creds.map(|c| c.1))
            .tls(tls);
        o.retransmit_interval = Duration::from_millis(300);
        o.connect_timeout = Duration::from_secs(3);
        o
    }
}

/// A child process whose stdout lines are forwarded over a channel.
pub struct Proc {
    pub child: Child,
    lines: mpsc::Receiver<String>,
}

impl Proc {
    pub fn spawn(args: &[&str]) -> Proc {
        Self::spawn_in(args, None)
    }

    pub fn spawn_in(args: &[&str], cwd: Option<&Path>) -> Proc {
        let mut cmd = Command::new(BIN);
        cmd.args(args).stdout(Stdio::piped()).stderr(Stdio::null());
        if let Some(d) = cwd {
            cmd.current_dir(d);
        }
        let mut child = cmd.spawn().expect("spawn p1451");
        let stdout: ChildStdout = child.stdout.take().unwrap();
        let (tx, lines) = mpsc::channel();
        std::thread::spawn(move || {
            for line in BufReader::new(stdout).lines().map_while(Result::ok) {
                if tx.send(line).is_err() {
                    break;
                }
            }
        });
        Proc { child, lines }
    }

    /// Waits for a stdout line starting with `prefix` and returns the rest.
    pub fn wait_line(&self, prefix: &str, limit: Duration) -> Option<String> {
        let deadline = std::time::Instant::now() + limit;
        loop {
            let left = deadline.checked_duration_since(std::time::Instant::now())?;
            match self.lines.recv_timeout(left) {
                Ok(l) if l.starts_with(prefix) => return Some(l[prefix.len()..].to_string()),
                Ok(_) => continue,
                Err(_) => return None,
            }
        }
    }

    pub fn kill(&mut self) {
        let _ = self.child.kill();
        let _ = self.child.wait();
    }

    /// Waits up to `limit` for the process to exit on its own.
    pub fn wait_exit(&mut self, limit: Duration) -> Option<std::process::ExitStatus> {
        let deadline = std::time::Instant::now() + limit;
        loop {
            if let Ok(Some(status)) = self.child.try_wait() {
                return Some(status);
            }
            if std::time::Instant::now() >= deadline {
                return None;
            }
            std::thread::sleep(Duration::from_millis(5));
        }
    }
}

impl Drop for Proc {
    fn drop(&mut self) {
        self.kill();
    }
}

/// Starts `p1451 broker` and returns it with its bound address.
pub fn spawn_broker(extra: &[&str]) -> (Proc, String) {
    let mut args = vec!["broker", "--listen", "127.0.0.1:0"];
    args.extend_from_slice(extra);
    let p = Proc::spawn(&args);
    let addr = p.wait_line("listening on ", Duration::from_secs(10)).expect("broker did not start");
    (p, addr)
}

/// Rules letting the NCAP, APP and ACS users run the read and update flows.
pub const SERVICE_ACL: &str = "\
user ncap01
topic read 1451.1.6/cmd/#
topic write 1451.1.6/reply/#

user app01
topic write 1451.1.6/cmd/#
topic read 1451.1.6/reply/#
topic write 1451.1.6/ACL/CONFIG
topic read 1451.1.6/ACL/RESULT

user acs
topic read 1451.1.6/ACL/CONFIG
topic write 1451.1.6/ACL/RESULT
";

pub fn topic(s: &str) -> p1451_core::mqtt::TopicName {
    p1451_core::mqtt::TopicName::new(s).unwrap()
}

pub fn filter(s: &str) -> p1451_core::mqtt::TopicFilter {
    p1451_core::mqtt::TopicFilter::new(s).unwrap()
}

/// Receives the next message within `limit`, or `None`.
pub async fn next_message(
    rx: &mut tokio::sync::mpsc::UnboundedReceiver<p1451_node::client::Message>,
    limit: Duration,
) -> Option<p1451_node::client::Message> {
    tokio::time::timeout(limit, rx.recv()).await.ok().flatten()
}
