//! MQTT ACL client service: token-scoped ACL mutations delivered over MQTT.
//!
//! Requests and results are UTF-8 `key=value` lines. A request names a
//! token from the registry; the token's scope bounds which filters it may
//! touch. Accepted changes are written to a temporary file next to the ACL
//! file and renamed over it, so readers only ever see a complete document.

use std::collections::HashMap;
use std::fmt;
use std::fs::{self, File};
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicU64, Ordering};

use p1451_core::acl::{self, Access, AclDocument, AclRule};
use p1451_core::mqtt::{validate_filter, TopicFilter, TopicName};
use thiserror::Error;
use tracing::{info, warn};

use crate::broker::BrokerHandle;
use crate::client::{ClientOptions, Message};
use crate::service::{self, Handler, ServiceHandle};

pub const CONFIG_TOPIC: &str = "1451.1.6/ACL/CONFIG";
pub const RESULT_TOPIC: &str = "1451.1.6/ACL/RESULT";
pub const MIN_TOKEN_LEN: usize = 16;
/// Request id reported when a payload is too broken to carry one.
pub const UNKNOWN_REQUEST_ID: &str = "?";

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AccessToken {
    pub token: String,
    pub scope_prefix: String,
    /// Empty means any user.
    pub allowed_users: Vec<String>,
}

impl AccessToken {
    pub fn permits_user(&self, user: &str) -> bool {
        self.allowed_users.is_empty() || self.allowed_users.iter().any(|u| u == user)
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
#[error("token registry line {line}: {message}")]
pub struct RegistryError {
    pub line: usize,
    pub message: String,
}

#[derive(Debug, Clone, Default)]
pub struct TokenRegistry {
    tokens: HashMap<String, AccessToken>,
}

impl TokenRegistry {
    /// One token per line: `token=<value> scope=<prefix> users=<a,b|*>`.
    /// `users` may be omitted, which is the same as `*`.
    pub fn parse(text: &str) -> Result<Self, RegistryError> {
        let mut tokens = HashMap::new();
        for (idx, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let err = |message: String| RegistryError { line: idx + 1, message };
            let (mut token, mut scope, mut users) = (None, None, None);
            for word in line.split_whitespace() {
                let (k, v) = word.split_once('=').ok_or_else(|| err(format!("expected key=value, got {word:?}")))?;
                let slot = match k {
                    "token" => &mut token,
                    "scope" => &mut scope,
                    "users" => &mut users,
                    _ => return Err(err(format!("unknown key {k:?}"))),
                };
                if slot.replace(v.to_owned()).is_some() {
                    return Err(err(format!("duplicate key {k:?}")));
                }
            }
            let token = token.ok_or_else(|| err("missing token".into()))?;
            let scope = scope.ok_or_else(|| err("missing scope".into()))?;
            if token.chars().count() < MIN_TOKEN_LEN {
                return Err(err(format!("token shorter than {MIN_TOKEN_LEN} characters")));
            }
            if TopicName::new(scope.as_str()).is_err() {
                return Err(err(format!("scope {scope:?} is not a wildcard-free topic")));
            }
            let allowed_users = match users.as_deref() {
                None | Some("*") => Vec::new(),
                Some(list) => list.split(',').filter(|u| !u.is_empty()).map(str::to_owned).collect(),
            };
            let entry = AccessToken { token: token.clone(), scope_prefix: scope, allowed_users };
            if tokens.insert(token, entry).is_some() {
                return Err(err("duplicate token".into()));
            }
        }
        Ok(TokenRegistry { tokens })
    }

    pub fn from_tokens(tokens: impl IntoIterator<Item = AccessToken>) -> Self {
        TokenRegistry { tokens: tokens.into_iter().map(|t| (t.token.clone(), t)).collect() }
    }

    pub fn get(&self, token: &str) -> Option<&AccessToken> {
        self.tokens.get(token)
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Op {
    Add,
    Remove,
}

impl Op {
    pub fn keyword(self) -> &'static str {
        match self {
            Op::Add => "add",
            Op::Remove => "remove",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AclUpdateRequest {
    pub request_id: String,
    pub token: String,
    pub op: Op,
    pub user: String,
    pub access: Access,
    pub filter: TopicFilter,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("request {}: {message}", request_id.as_deref().unwrap_or(UNKNOWN_REQUEST_ID))]
pub struct RequestError {
    pub request_id: Option<String>,
    pub message: String,
}

const REQUEST_KEYS: [&str; 6] = ["request_id", "token", "op", "user", "access", "topic"];

fn key_values(text: &str) -> Result<HashMap<&str, &str>, String> {
    let mut map = HashMap::new();
    for line in text.lines().map(|l| l.trim_end_matches('\r')).filter(|l| !l.trim().is_empty()) {
        let (k, v) = line.split_once('=').ok_or_else(|| format!("line {line:?} is not key=value"))?;
        if map.insert(k.trim(), v.trim()).is_some() {
            return Err(format!("duplicate key {:?}", k.trim()));
        }
    }
    Ok(map)
}

pub fn parse_request(payload: &str) -> Result<AclUpdateRequest, RequestError> {
    // Recover the id first so even rejected requests can be answered by id.
    let id_guess = payload
        .lines()
        .filter_map(|l| l.split_once('='))
        .find(|(k, _)| k.trim() == "request_id")
        .map(|(_, v)| v.trim().to_owned());
    let fail = |message: String| RequestError { request_id: id_guess.clone(), message };
    let kv = key_values(payload).map_err(fail)?;
    if let Some(k) = kv.keys().find(|k| !REQUEST_KEYS.contains(k)) {
        return Err(fail(format!("unknown key {k:?}")));
    }
    let get = |k: &str| kv.get(k).copied().ok_or_else(|| fail(format!("missing key {k:?}")));
    let request_id = get("request_id")?;
    if request_id.is_empty() {
        return Err(fail("empty request_id".into()));
    }
    let op = match get("op")? {
        "add" => Op::Add,
        "remove" => Op::Remove,
        other => return Err(fail(format!("unknown op {other:?}"))),
    };
    let access = get("access")?;
    let access = Access::from_keyword(access).ok_or_else(|| fail(format!("unknown access {access:?}")))?;
    let topic = get("topic")?;
    validate_filter(topic).map_err(|e| fail(format!("invalid topic filter {topic:?}: {e}")))?;
    let user = get("user")?;
    if user.chars().any(char::is_whitespace) {
        return Err(fail("user must not contain whitespace".into()));
    }
    Ok(AclUpdateRequest {
        request_id: request_id.to_owned(),
        token: get("token")?.to_owned(),
        op,
        user: user.to_owned(),
        access,
        filter: TopicFilter::new(topic).map_err(|e| fail(e.to_string()))?,
    })
}

pub fn format_request(req: &AclUpdateRequest) -> String {
    format!(
        "request_id={}\ntoken={}\nop={}\nuser={}\naccess={}\ntopic={}\n",
        req.request_id,
        req.token,
        req.op.keyword(),
        req.user,
        req.access.keyword(),
        req.filter
    )
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Status {
    Ok,
    Denied,
    Invalid,
    Error,
}

impl Status {
    pub fn keyword(self) -> &'static str {
        match self {
            Status::Ok => "ok",
            Status::Denied => "denied",
            Status::Invalid => "invalid",
            Status::Error => "error",
        }
    }

    pub fn from_keyword(s: &str) -> Option<Status> {
        [Status::Ok, Status::Denied, Status::Invalid, Status::Error].into_iter().find(|st| st.keyword() == s)
    }
}

impl fmt::Display for Status {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.keyword())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AclUpdateResult {
    pub request_id: String,
    pub status: Status,
    pub detail: String,
}

impl AclUpdateResult {
    pub fn new(request_id: impl Into<String>, status: Status, detail: impl Into<String>) -> Self {
        AclUpdateResult { request_id: request_id.into(), status, detail: detail.into() }
    }

    pub fn to_payload(&self) -> String {
        let detail: String = self.detail.chars().map(|c| if c.is_control() { ' ' } else { c }).collect();
        format!("request_id={}\nstatus={}\ndetail={}\n", self.request_id, self.status, detail)
    }

    pub fn parse(payload: &str) -> Option<Self> {
        let kv = key_values(payload).ok()?;
        Some(AclUpdateResult {
            request_id: kv.get("request_id")?.to_string(),
            status: Status::from_keyword(kv.get("status")?)?,
            detail: kv.get("detail").copied().unwrap_or("").to_owned(),
        })
    }
}

/// Decides a request against the registry and the current document.
/// Returns the new document only when the status is `ok`.
///
/// The token's user list is checked against the user the rule is for:
/// the MQTT publish that carried the request does not reveal its sender.
pub fn handle_request(
    req: &AclUpdateRequest,
    registry: &TokenRegistry,
    doc: &AclDocument,
) -> (AclUpdateResult, Option<AclDocument>) {
    let result = |status, detail: String| AclUpdateResult::new(req.request_id.clone(), status, detail);
    let Some(token) = registry.get(&req.token) else {
        return (result(Status::Denied, "unknown token".into()), None);
    };
    if !token.permits_user(&req.user) {
        return (result(Status::Denied, format!("token does not cover user {:?}", req.user)), None);
    }
    if !acl::is_within_scope(&token.scope_prefix, &req.filter) {
        return (
            result(Status::Denied, format!("filter {} is not below scope {}", req.filter, token.scope_prefix)),
            None,
        );
    }
    let rule = AclRule::new(req.user.clone(), req.access, req.filter.clone());
    match req.op {
        Op::Add => (result(Status::Ok, "rule added".into()), Some(acl::add_rule(doc, rule))),
        Op::Remove => match acl::remove_rule(doc, &rule) {
            Ok(next) => (result(Status::Ok, "rule removed".into()), Some(next)),
            Err(_) => (result(Status::Invalid, "no such rule".into()), None),
        },
    }
}

/// Where a persist may be interrupted on purpose, to test crash safety.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FaultPoint {
    /// Half of the temporary file written.
    MidWrite,
    /// Temporary file complete and synced, not yet renamed.
    BeforeRename,
    /// Renamed into place, reload not yet triggered.
    BeforeReload,
}

impl FaultPoint {
    pub const ALL: [FaultPoint; 3] = [FaultPoint::MidWrite, FaultPoint::BeforeRename, FaultPoint::BeforeReload];

    pub fn keyword(self) -> &'static str {
        match self {
            FaultPoint::MidWrite => "mid-write",
            FaultPoint::BeforeRename => "before-rename",
            FaultPoint::BeforeReload => "before-reload",
        }
    }

    pub fn from_keyword(s: &str) -> Option<FaultPoint> {
        Self::ALL.into_iter().find(|f| f.keyword() == s)
    }
}

/// What to do on reaching the fault point.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FaultAction {
    /// Return [`PersistError::Injected`], leaving the disk as it is.
    Fail,
    /// Abort the process on the spot.
    Abort,
}

#[derive(Debug, Error)]
pub enum PersistError {
    #[error("writing ACL file: {0}")]
    Io(#[from] std::io::Error),
    #[error("fault injected at {}", .0.keyword())]
    Injected(FaultPoint),
}

#[derive(Debug, Clone, Copy, Default)]
pub struct FaultPlan(pub Option<(FaultPoint, FaultAction)>);

impl FaultPlan {
    fn hit(self, here: FaultPoint) -> Result<(), PersistError> {
        match self.0 {
            Some((p, FaultAction::Abort)) if p == here => std::process::abort(),
            Some((p, FaultAction::Fail)) if p == here => Err(PersistError::Injected(here)),
            _ => Ok(()),
        }
    }
}

const TEMP_MARKER: &str = ".tmp.";

fn temp_path(target: &Path) -> PathBuf {
    static COUNTER: AtomicU64 = AtomicU64::new(0);
    let name = target.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_else(|| "acl".into());
    let n = COUNTER.fetch_add(1, Ordering::Relaxed);
    target.with_file_name(format!(".{name}{TEMP_MARKER}{}.{n}", std::process::id()))
}

/// Writes `text` to a synced temporary file beside `target`.
pub fn write_temp(target: &Path, text: &str, faults: FaultPlan) -> Result<PathBuf, PersistError> {
    let tmp = temp_path(target);
    let mut f = File::create(&tmp)?;
    let bytes = text.as_bytes();
    let (first, second) = bytes.split_at(bytes.len() / 2);
    f.write_all(first)?;
    if let Err(e) = faults.hit(FaultPoint::MidWrite) {
        f.flush()?;
        return Err(e);
    }
    f.write_all(second)?;
    f.sync_all()?;
    Ok(tmp)
}

/// Atomically replaces `target` with `tmp`.
pub fn commit(tmp: &Path, target: &Path) -> Result<(), PersistError> {
    fs::rename(tmp, target)?;
    if let Some(dir) = target.parent().filter(|d| !d.as_os_str().is_empty()) {
        // Directory fsync makes the rename durable; not every platform allows it.
        if let Ok(d) = File::open(dir) {
            let _ = d.sync_all();
        }
    }
    Ok(())
}

pub fn persist(target: &Path, doc: &AclDocument, faults: FaultPlan) -> Result<(), PersistError> {
    let tmp = write_temp(target, &acl::serialize_acl(doc), faults)?;
    faults.hit(FaultPoint::BeforeRename)?;
    commit(&tmp, target)?;
    faults.hit(FaultPoint::BeforeReload)
}

/// Deletes temporary files a crashed writer left beside `target`.
pub fn remove_stale_temps(target: &Path) -> usize {
    let (Some(dir), Some(name)) = (target.parent(), target.file_name()) else { return 0 };
    let dir = if dir.as_os_str().is_empty() { Path::new(".") } else { dir };
    let prefix = format!(".{}{TEMP_MARKER}", name.to_string_lossy());
    let Ok(entries) = fs::read_dir(dir) else { return 0 };
    entries
        .flatten()
        .filter(|e| e.file_name().to_string_lossy().starts_with(&prefix))
        .filter(|e| fs::remove_file(e.path()).is_ok())
        .count()
}

/// How the broker learns about a new ACL file.
#[derive(Clone)]
pub enum ReloadTrigger {
    /// Same process: reload synchronously before answering.
    Broker(BrokerHandle),
    /// Separate process: the broker notices the file change by polling.
    FileWatch,
}

pub struct AcsConfig {
    pub registry: TokenRegistry,
    pub acl_path: PathBuf,
    pub trigger: ReloadTrigger,
    pub faults: FaultPlan,
}

/// Runs one request end to end against the ACL file on disk.
pub fn process_payload(payload: &[u8], cfg: &AcsConfig) -> AclUpdateResult {
    let text = match std::str::from_utf8(payload) {
        Ok(t) => t,
        Err(_) => return AclUpdateResult::new(UNKNOWN_REQUEST_ID, Status::Invalid, "payload is not UTF-8"),
    };
    let req = match parse_request(text) {
        Ok(r) => r,
        Err(e) => {
            let id = e.request_id.clone().unwrap_or_else(|| UNKNOWN_REQUEST_ID.into());
            return AclUpdateResult::new(id, Status::Invalid, e.message);
        }
    };
    let current = match fs::read_to_string(&cfg.acl_path) {
        Ok(t) => t,
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => String::new(),
        Err(e) => return AclUpdateResult::new(req.request_id, Status::Error, format!("reading ACL file: {e}")),
    };
    let doc = match acl::parse_acl(&current) {
        Ok(d) => d,
        Err(e) => return AclUpdateResult::new(req.request_id, Status::Error, format!("current ACL file: {e}")),
    };
    let (mut result, next) = handle_request(&req, &cfg.registry, &doc);
    info!(
        event = "acl_update",
        request_id = %req.request_id,
        op = req.op.keyword(),
        user = %req.user,
        topic = %req.filter,
        decision = %result.status,
    );
    let Some(next) = next else { return result };
    if let Err(e) = persist(&cfg.acl_path, &next, cfg.faults) {
        warn!(event = "acl_persist_failed", request_id = %req.request_id, error = %e);
        return AclUpdateResult::new(req.request_id, Status::Error, e.to_string());
    }
    if let ReloadTrigger::Broker(handle) = &cfg.trigger {
        if let Err(e) = handle.reload_acl() {
            result = AclUpdateResult::new(req.request_id, Status::Error, format!("saved, but reload failed: {e}"));
        }
    }
    result
}

struct AcsHandler {
    cfg: AcsConfig,
    result_topic: TopicName,
}

impl Handler for AcsHandler {
    async fn handle(&mut self, msg: Message) -> Vec<(TopicName, Vec<u8>)> {
        let result = process_payload(&msg.payload, &self.cfg);
        vec![(self.result_topic.clone(), result.to_payload().into_bytes())]
    }
}

pub fn serve(opts: ClientOptions, cfg: AcsConfig) -> ServiceHandle {
    let removed = remove_stale_temps(&cfg.acl_path);
    if removed > 0 {
        info!(event = "stale_temp_removed", count = removed);
    }
    let filter = TopicFilter::new(CONFIG_TOPIC).expect("constant filter");
    let result_topic = TopicName::new(RESULT_TOPIC).expect("constant topic");
    service::spawn("acs", opts, filter, AcsHandler { cfg, result_topic })
}
