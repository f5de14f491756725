//! Per-user topic access control in a subset of the Mosquitto ACL format.
//!
//! ```text
//! # comment
//! user ncap01
//! topic read 1451.1.6/cmd/#
//! topic write 1451.1.6/reply/#
//! ```
//!
//! Evaluation is default-deny. Subscriptions are allowed only when a rule's
//! filter covers every topic the requested filter could match.

use std::fmt;

use thiserror::Error;

use crate::mqtt::{filter_matches, TopicError, TopicFilter, TopicName};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Access {
    Read,
    Write,
    ReadWrite,
}

impl Access {
    pub fn can_read(self) -> bool {
        matches!(self, Access::Read | Access::ReadWrite)
    }

    pub fn can_write(self) -> bool {
        matches!(self, Access::Write | Access::ReadWrite)
    }

    pub fn keyword(self) -> &'static str {
        match self {
            Access::Read => "read",
            Access::Write => "write",
            Access::ReadWrite => "readwrite",
        }
    }

    pub fn from_keyword(s: &str) -> Option<Access> {
        match s {
            "read" => Some(Access::Read),
            "write" => Some(Access::Write),
            "readwrite" => Some(Access::ReadWrite),
            _ => None,
        }
    }
}

impl fmt::Display for Access {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.keyword())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct AclRule {
    /// Empty for anonymous clients.
    pub username: String,
    pub access: Access,
    pub filter: TopicFilter,
}

impl AclRule {
    pub fn new(username: impl Into<String>, access: Access, filter: TopicFilter) -> Self {
        AclRule { username: username.into(), access, filter }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct AclDocument {
    pub rules: Vec<AclRule>,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum AclParseError {
    #[error("line {0}: topic rule before any user line")]
    TopicBeforeUser(usize),
    #[error("line {line}: invalid topic filter {filter:?}: {source}")]
    InvalidFilter { line: usize, filter: String, source: TopicError },
    #[error("line {line}: unknown keyword {keyword:?}")]
    UnknownKeyword { line: usize, keyword: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Decision {
    Allow,
    Deny,
}

impl Decision {
    pub fn is_allow(self) -> bool {
        self == Decision::Allow
    }

    fn from_bool(b: bool) -> Self {
        if b {
            Decision::Allow
        } else {
            Decision::Deny
        }
    }
}

impl fmt::Display for Decision {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Decision::Allow => "allow",
            Decision::Deny => "deny",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Error)]
#[error("rule not found")]
pub struct RuleNotFound;

pub fn parse_acl(text: &str) -> Result<AclDocument, AclParseError> {
    let mut rules = Vec::new();
    let mut current_user: Option<String> = None;
    for (idx, raw) in text.lines().enumerate() {
        let line_no = idx + 1;
        let line = raw.strip_suffix('\r').unwrap_or(raw);
        let trimmed = line.trim_start();
        if trimmed.trim_end().is_empty() || trimmed.starts_with('#') {
            continue;
        }
        let (keyword, rest) = trimmed.split_once(' ').unwrap_or((trimmed, ""));
        match keyword {
            "user" => current_user = Some(rest.to_owned()),
            "topic" => {
                let username = current_user.clone().ok_or(AclParseError::TopicBeforeUser(line_no))?;
                let (access, filter) = match rest.split_once(' ') {
                    Some((kw, f)) => match Access::from_keyword(kw) {
                        Some(a) => (a, f),
                        None => (Access::ReadWrite, rest),
                    },
                    None => (Access::ReadWrite, rest),
                };
                let filter = TopicFilter::new(filter).map_err(|source| AclParseError::InvalidFilter {
                    line: line_no,
                    filter: filter.to_owned(),
                    source,
                })?;
                rules.push(AclRule { username, access, filter });
            }
            other => return Err(AclParseError::UnknownKeyword { line: line_no, keyword: other.to_owned() }),
        }
    }
    Ok(AclDocument { rules })
}

pub fn serialize_acl(doc: &AclDocument) -> String {
    let mut out = String::new();
    let mut current: Option<&str> = None;
    for rule in &doc.rules {
        if current != Some(rule.username.as_str()) {
            if current.is_some() {
                out.push('\n');
            }
            if rule.username.is_empty() {
                out.push_str("user\n");
            } else {
                out.push_str(&format!("user {}\n", rule.username));
            }
            current = Some(&rule.username);
        }
        out.push_str(&format!("topic {} {}\n", rule.access, rule.filter));
    }
    out
}

impl AclDocument {
    pub fn new(rules: Vec<AclRule>) -> Self {
        AclDocument { rules }
    }

    pub fn is_empty(&self) -> bool {
        self.rules.is_empty()
    }

    fn rules_for<'a>(&'a self, username: &'a str) -> impl Iterator<Item = &'a AclRule> + 'a {
        self.rules.iter().filter(move |r| r.username == username)
    }
}

pub fn check_publish(doc: &AclDocument, username: &str, topic: &TopicName) -> Decision {
    Decision::from_bool(doc.rules_for(username).any(|r| r.access.can_write() && filter_matches(&r.filter, topic)))
}

pub fn check_subscribe(doc: &AclDocument, username: &str, requested: &TopicFilter) -> Decision {
    Decision::from_bool(doc.rules_for(username).any(|r| r.access.can_read() && filter_covers(&r.filter, requested)))
}

/// Read access to a single concrete topic.
pub fn check_read(doc: &AclDocument, username: &str, topic: &TopicName) -> Decision {
    Decision::from_bool(doc.rules_for(username).any(|r| r.access.can_read() && filter_matches(&r.filter, topic)))
}

/// True iff every topic matched by `specific` is also matched by `general`.
pub fn filter_covers(general: &TopicFilter, specific: &TopicFilter) -> bool {
    // Topics starting with '$' are reachable from `specific` only through a
    // literal first level, and `general` cannot reach them through a wildcard.
    if general.starts_with_wildcard() && !specific.starts_with_wildcard() && specific.as_str().starts_with('$') {
        return false;
    }
    let g: Vec<&str> = general.levels().collect();
    let mut s: Vec<&str> = specific.levels().collect();
    // '#' also matches its parent level, unless that parent would be the
    // empty topic: a leading '#' is really '+/#', and '/#' is '/+/#'.
    match s.as_slice() {
        ["#", ..] => s.insert(0, "+"),
        ["", "#", ..] => s.insert(1, "+"),
        _ => {}
    }
    covers_levels(&g, &s)
}

fn covers_levels(g: &[&str], s: &[&str]) -> bool {
    match (g.first(), s.first()) {
        (Some(&"#"), _) => true,
        (None, None) => true,
        (None, Some(_)) | (Some(_), None) => false,
        (Some(_), Some(&"#")) => false,
        (Some(&"+"), Some(_)) => covers_levels(&g[1..], &s[1..]),
        (Some(_), Some(&"+")) => false,
        (Some(gl), Some(sl)) => gl == sl && covers_levels(&g[1..], &s[1..]),
    }
}

/// Appends `rule` unless an identical rule is already present.
pub fn add_rule(doc: &AclDocument, rule: AclRule) -> AclDocument {
    let mut next = doc.clone();
    if !next.rules.contains(&rule) {
        next.rules.push(rule);
    }
    next
}

/// Removes every rule equal to `rule`.
pub fn remove_rule(doc: &AclDocument, rule: &AclRule) -> Result<AclDocument, RuleNotFound> {
    if !doc.rules.contains(rule) {
        return Err(RuleNotFound);
    }
    let rules = doc.rules.iter().filter(|r| *r != rule).cloned().collect();
    Ok(AclDocument { rules })
}

/// True iff `filter` lies strictly below the wildcard-free `scope` topic:
/// it has the form `scope/<rest>` where the first level of `rest` is not
/// `#` (which would also match `scope` itself) and `rest` is non-empty.
pub fn is_within_scope(scope: &str, filter: &TopicFilter) -> bool {
    if scope.is_empty() || scope.contains(['+', '#']) {
        return false;
    }
    let Some(rest) = filter.as_str().strip_prefix(scope).and_then(|r| r.strip_prefix('/')) else {
        return false;
    };
    !rest.is_empty() && rest.split('/').next() != Some("#")
}

#[cfg(test)]
mod tests {
    use super::*;

    fn f(s: &str) -> TopicFilter {
        TopicFilter::new(s).unwrap()
    }

    fn t(s: &str) -> TopicName {
        TopicName::new(s).unwrap()
    }

    #[test]
    fn parse_single_rule() {
        let doc = parse_acl("user alice\ntopic read 1451.1.6/reply/#\n").unwrap();
        assert_eq!(doc.rules, vec![AclRule::new("alice", Access::Read, f("1451.1.6/reply/#"))]);
    }

    #[test]
    fn parse_edge_cases() {
        assert_eq!(parse_acl("").unwrap(), AclDocument::default());
        assert_eq!(parse_acl("topic read x\n"), Err(AclParseError::TopicBeforeUser(1)));
        let doc = parse_acl("# c\n\nuser bob\r\n  topic a/b\n").unwrap();
        assert_eq!(doc.rules, vec![AclRule::new("bob", Access::ReadWrite, f("a/b"))]);
        assert!(matches!(parse_acl("user a\ntopic read a/#/b\n"), Err(AclParseError::InvalidFilter { line: 2, .. })));
        assert!(matches!(parse_acl("pattern read %u/#\n"), Err(AclParseError::UnknownKeyword { line: 1, .. })));
        let doc = parse_acl("user\ntopic write x\n").unwrap();
        assert_eq!(doc.rules[0].username, "");
    }

    #[test]
    fn serialize_sections() {
        assert_eq!(serialize_acl(&AclDocument::default()), "");
        let doc = AclDocument::new(vec![
            AclRule::new("a", Access::Read, f("x/#")),
            AclRule::new("a", Access::Write, f("y")),
            AclRule::new("b", Access::ReadWrite, f("z/+")),
        ]);
        let text = serialize_acl(&doc);
        assert_eq!(text, "user a\ntopic read x/#\ntopic write y\n\nuser b\ntopic readwrite z/+\n");
        assert_eq!(parse_acl(&text).unwrap(), doc);
    }

    #[test]
    fn publish_checks() {
        let doc = AclDocument::new(vec![
            AclRule::new("n", Access::Write, f("1451.1.6/cmd/#")),
            AclRule::new("r", Access::Read, f("1451.1.6/cmd/#")),
        ]);
        assert_eq!(check_publish(&doc, "n", &t("1451.1.6/cmd/abc")), Decision::Allow);
        assert_eq!(check_publish(&doc, "r", &t("1451.1.6/cmd/abc")), Decision::Deny);
        assert_eq!(check_publish(&doc, "x", &t("1451.1.6/cmd/abc")), Decision::Deny);
        assert_eq!(check_publish(&AclDocument::default(), "n", &t("a")), Decision::Deny);
    }

    #[test]
    fn subscribe_checks() {
        let doc = AclDocument::new(vec![
            AclRule::new("n", Access::Read, f("a/#")),
            AclRule::new("m", Access::Read, f("a/b")),
            AclRule::new("w", Access::Write, f("#")),
        ]);
        assert_eq!(check_subscribe(&doc, "n", &f("a/+")), Decision::Allow);
        assert_eq!(check_subscribe(&doc, "m", &f("a/#")), Decision::Deny);
        assert_eq!(check_subscribe(&doc, "m", &f("a/b")), Decision::Allow);
        assert_eq!(check_subscribe(&doc, "w", &f("a")), Decision::Deny);
    }

    #[test]
    fn cover_examples() {
        assert!(filter_covers(&f("#"), &f("a/+/#")));
        assert!(filter_covers(&f("a/+"), &f("a/b")));
        assert!(!filter_covers(&f("a/b"), &f("a/+")));
        assert!(filter_covers(&f("a/#"), &f("a")));
        assert!(!filter_covers(&f("a/+/#"), &f("a/#")));
        assert!(filter_covers(&f("+/#"), &f("#")));
        assert!(filter_covers(&f("+/+/#"), &f("/#")));
        assert!(!filter_covers(&f("#"), &f("$SYS/x")));
        assert!(filter_covers(&f("$SYS/#"), &f("$SYS/x")));
    }

    #[test]
    fn add_and_remove() {
        let doc = AclDocument::new(vec![AclRule::new("a", Access::Read, f("x"))]);
        let rule = AclRule::new("b", Access::Write, f("y"));
        let added = add_rule(&doc, rule.clone());
        assert_eq!(added.rules.len(), 2);
        assert_eq!(add_rule(&added, rule.clone()), added);
        assert_eq!(remove_rule(&added, &rule).unwrap(), doc);
        assert_eq!(remove_rule(&doc, &rule), Err(RuleNotFound));
    }

    #[test]
    fn scope_checks() {
        let scope = "1451.1.6/greenhouse";
        assert!(is_within_scope(scope, &f("1451.1.6/greenhouse/temp/#")));
        assert!(is_within_scope(scope, &f("1451.1.6/greenhouse/+")));
        assert!(!is_within_scope(scope, &f("1451.1.6/greenhouse")));
        assert!(!is_within_scope(scope, &f("1451.1.6/greenhouse/#")));
        assert!(!is_within_scope(scope, &f("1451.1.6/greenhousex/a")));
        assert!(!is_within_scope(scope, &f("1451.1.6/greenhouse/")));
        assert!(!is_within_scope("a", &f("#")));
        assert!(!is_within_scope("a/+", &f("a/+/b")));
    }
}
