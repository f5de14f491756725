//! Password file: one `username:hexsalt:hexhash` entry per line, where the
//! hash is SHA-256 over `salt ‖ ":" ‖ password`.

use std::collections::HashMap;
use std::path::Path;

use rand::RngCore;
use sha2::{Digest, Sha256};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum PasswordFileError {
    #[error("reading password file: {0}")]
    Io(#[from] std::io::Error),
    #[error("password file line {line}: {message}")]
    Syntax { line: usize, message: String },
}

#[derive(Clone, PartialEq, Eq)]
pub struct Credential {
    pub username: String,
    pub salt: Vec<u8>,
    pub password_hash: [u8; 32],
}

impl std::fmt::Debug for Credential {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Credential").field("username", &self.username).finish_non_exhaustive()
    }
}

fn digest(salt: &[u8], password: &[u8]) -> [u8; 32] {
    let mut h = Sha256::new();
    h.update(salt);
    h.update(b":");
    h.update(password);
    h.finalize().into()
}

impl Credential {
    pub fn with_salt(username: impl Into<String>, password: &[u8], salt: Vec<u8>) -> Self {
        let password_hash = digest(&salt, password);
        Credential { username: username.into(), salt, password_hash }
    }

    /// Hashes `password` under a fresh random 16-octet salt.
    pub fn new(username: impl Into<String>, password: &[u8]) -> Self {
        let mut salt = vec![0u8; 16];
        rand::thread_rng().fill_bytes(&mut salt);
        Credential::with_salt(username, password, salt)
    }

    pub fn verify(&self, password: &[u8]) -> bool {
        let candidate = digest(&self.salt, password);
        // constant-time comparison
        candidate.iter().zip(self.password_hash.iter()).fold(0u8, |acc, (a, b)| acc | (a ^ b)) == 0
    }

    pub fn to_line(&self) -> String {
        format!("{}:{}:{}", self.username, hex::encode(&self.salt), hex::encode(self.password_hash))
    }
}

#[derive(Debug, Clone, Default)]
pub struct CredentialStore {
    by_user: HashMap<String, Credential>,
}

impl CredentialStore {
    pub fn parse(text: &str) -> Result<Self, PasswordFileError> {
        let mut by_user = HashMap::new();
        for (idx, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let syntax = |message: &str| PasswordFileError::Syntax { line: idx + 1, message: message.into() };
            let mut parts = line.split(':');
            let (Some(user), Some(salt), Some(hash), None) = (parts.next(), parts.next(), parts.next(), parts.next())
            else {
                return Err(syntax("expected username:hexsalt:hexhash"));
            };
            if user.is_empty() {
                return Err(syntax("empty username"));
            }
            let salt = hex::decode(salt).map_err(|_| syntax("salt is not hex"))?;
            let mut password_hash = [0u8; 32];
            hex::decode_to_slice(hash, &mut password_hash).map_err(|_| syntax("hash is not 32 hex octets"))?;
            let cred = Credential { username: user.to_owned(), salt, password_hash };
            if by_user.insert(user.to_owned(), cred).is_some() {
                return Err(syntax("duplicate username"));
            }
        }
        Ok(CredentialStore { by_user })
    }

    pub fn load(path: &Path) -> Result<Self, PasswordFileError> {
        Self::parse(&std::fs::read_to_string(path)?)
    }

    pub fn from_credentials(creds: impl IntoIterator<Item = Credential>) -> Self {
        CredentialStore { by_user: creds.into_iter().map(|c| (c.username.clone(), c)).collect() }
    }

    pub fn verify(&self, username: &str, password: &[u8]) -> bool {
        self.by_user.get(username).is_some_and(|c| c.verify(password))
    }

    pub fn len(&self) -> usize {
        self.by_user.len()
    }

    pub fn is_empty(&self) -> bool {
        self.by_user.is_empty()
    }

    /// Lines sorted by username.
    pub fn to_file_text(&self) -> String {
        let mut users: Vec<_> = self.by_user.values().collect();
        users.sort_by(|a, b| a.username.cmp(&b.username));
        users.iter().map(|c| c.to_line() + "\n").collect()
    }
}
