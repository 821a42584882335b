//! Accounts, password hashing and signed session tokens.
//!
//! A token is `base64url(claims).base64url(hmac_sha256(claims))`. Claims name
//! the user, an expiry and a session id; only the newest session id of a
//! user is accepted, so logging in again invalidates the previous token.

use std::collections::{BTreeSet, HashMap};
use std::sync::Arc;

use argon2::password_hash::{PasswordHash, PasswordHasher, PasswordVerifier, SaltString};
use argon2::Argon2;
use base64::engine::general_purpose::URL_SAFE_NO_PAD;
use base64::Engine as _;
use hmac::{Hmac, Mac};
use parking_lot::Mutex;
use rand::distr::{Alphanumeric, SampleString};
use serde::{Deserialize, Serialize};
use sha2::Sha256;

use crate::clock::{Clock, Timestamp};
use crate::store::{valid_username, Account, Store, StoreError};

pub const ADMIN: &str = "admin";
pub const BULK_PASSWORD_LEN: usize = 10;
pub const MAX_BULK_USERS: u32 = 999;

#[derive(Debug, thiserror::Error)]
pub enum AuthError {
    #[error("missing, invalid or expired token")]
    Unauthenticated,
    #[error("wrong username or password")]
    BadCredentials,
    #[error("administrator rights required")]
    Forbidden,
    #[error("account '{0}' already exists")]
    Exists(String),
    #[error("invalid username '{0}'")]
    InvalidName(String),
    #[error("{0}")]
    BadRequest(String),
    #[error(transparent)]
    Store(#[from] StoreError),
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct Claims {
    sub: String,
    sid: String,
    /// Expiry in epoch milliseconds.
    exp: i64,
}

/// The identity behind a verified token.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Session {
    pub username: String,
    pub expires_at: Timestamp,
}

impl Session {
    pub fn is_admin(&self) -> bool {
        self.username == ADMIN
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct IssuedToken {
    pub token: String,
    pub expires_at: Timestamp,
    pub is_admin: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Credential {
    pub username: String,
    pub password: String,
}

pub struct Auth {
    secret: Vec<u8>,
    ttl_secs: u64,
    clock: Arc<dyn Clock>,
    store: Arc<dyn Store>,
    accounts: Mutex<Vec<Account>>,
    sessions: Mutex<HashMap<String, String>>,
}

impl Auth {
    pub fn new(
        secret: &[u8],
        ttl_secs: u64,
        clock: Arc<dyn Clock>,
        store: Arc<dyn Store>,
    ) -> Result<Self, StoreError> {
        let accounts = store.load_accounts()?;
        Ok(Self {
            secret: secret.to_vec(),
            ttl_secs,
            clock,
            store,
            accounts: Mutex::new(accounts),
            sessions: Mutex::new(HashMap::new()),
        })
    }

    pub fn has_account(&self, username: &str) -> bool {
        self.accounts.lock().iter().any(|a| a.username == username)
    }

    pub fn usernames(&self) -> Vec<String> {
        self.accounts.lock().iter().map(|a| a.username.clone()).collect()
    }

    pub fn create_user(&self, username: &str, password: &str) -> Result<(), AuthError> {
        self.create_many(&[Credential {
            username: username.to_string(),
            password: password.to_string(),
        }])
    }

    /// Creates every account or none of them.
    pub fn create_many(&self, creds: &[Credential]) -> Result<(), AuthError> {
        let mut seen = BTreeSet::new();
        for c in creds {
            if !valid_username(&c.username) {
                return Err(AuthError::InvalidName(c.username.clone()));
            }
            if !seen.insert(c.username.as_str()) {
                return Err(AuthError::Exists(c.username.clone()));
            }
        }
        // hash outside the lock; it is the slow part
        let hashed: Vec<Account> = creds
            .iter()
            .map(|c| Account {
                username: c.username.clone(),
                password_hash: hash_password(&c.password),
            })
            .collect();
        let mut accounts = self.accounts.lock();
        if let Some(taken) = creds
            .iter()
            .find(|c| accounts.iter().any(|a| a.username == c.username))
        {
            return Err(AuthError::Exists(taken.username.clone()));
        }
        let mut next = accounts.clone();
        next.extend(hashed);
        self.store.save_accounts(&next)?;
        *accounts = next;
        Ok(())
    }

    /// `count` accounts named `prefix-001`, `prefix-002`, ... with random
    /// passwords.
    pub fn bulk_create(&self, prefix: &str, count: u32) -> Result<Vec<Credential>, AuthError> {
        if count == 0 || count > MAX_BULK_USERS {
            return Err(AuthError::BadRequest(format!(
                "count must be between 1 and {MAX_BULK_USERS}"
            )));
        }
        let mut rng = rand::rng();
        let creds: Vec<Credential> = (1..=count)
            .map(|i| Credential {
                username: format!("{prefix}-{i:03}"),
                password: Alphanumeric.sample_string(&mut rng, BULK_PASSWORD_LEN),
            })
            .collect();
        self.create_many(&creds)?;
        Ok(creds)
    }

    pub fn login(&self, username: &str, password: &str) -> Result<IssuedToken, AuthError> {
        let hash = self
            .accounts
            .lock()
            .iter()
            .find(|a| a.username == username)
            .map(|a| a.password_hash.clone());
        let ok = hash.is_some_and(|h| verify_password(password, &h));
        if !ok {
            return Err(AuthError::BadCredentials);
        }
        let sid = Alphanumeric.sample_string(&mut rand::rng(), 16);
        let expires_at = self.clock.now().plus_secs(self.ttl_secs);
        let claims = Claims {
            sub: username.to_string(),
            sid: sid.clone(),
            exp: expires_at.millis(),
        };
        self.sessions.lock().insert(username.to_string(), sid);
        Ok(IssuedToken {
            token: self.sign(&claims),
            expires_at,
            is_admin: username == ADMIN,
        })
    }

    pub fn verify(&self, token: &str) -> Result<Session, AuthError> {
        let (body, sig) = token.split_once('.').ok_or(AuthError::Unauthenticated)?;
        let sig = URL_SAFE_NO_PAD
            .decode(sig)
            .map_err(|_| AuthError::Unauthenticated)?;
        let mut mac = self.mac();
        mac.update(body.as_bytes());
        mac.verify_slice(&sig).map_err(|_| AuthError::Unauthenticated)?;
        let bytes = URL_SAFE_NO_PAD
            .decode(body)
            .map_err(|_| AuthError::Unauthenticated)?;
        let claims: Claims = serde_json::from_slice(&bytes).map_err(|_| AuthError::Unauthenticated)?;
        if self.clock.now().millis() >= claims.exp {
            return Err(AuthError::Unauthenticated);
        }
        if self.sessions.lock().get(&claims.sub) != Some(&claims.sid) {
            return Err(AuthError::Unauthenticated);
        }
        Ok(Session {
            username: claims.sub,
            expires_at: Timestamp(claims.exp),
        })
    }

    fn mac(&self) -> Hmac<Sha256> {
        Hmac::<Sha256>::new_from_slice(&self.secret).expect("HMAC accepts any key length")
    }

    fn sign(&self, claims: &Claims) -> String {
        let body = URL_SAFE_NO_PAD.encode(serde_json::to_vec(claims).expect("claims serialize"));
        let mut mac = self.mac();
        mac.update(body.as_bytes());
        let sig = URL_SAFE_NO_PAD.encode(mac.finalize().into_bytes());
        format!("{body}.{sig}")
    }
}

pub fn hash_password(password: &str) -> String {
    let salt_bytes: [u8; 16] = rand::random();
    let salt = SaltString::encode_b64(&salt_bytes).expect("16 bytes is a valid salt length");
    Argon2::default()
        .hash_password(password.as_bytes(), &salt)
        .expect("argon2 hashing with default parameters")
        .to_string()
}

pub fn verify_password(password: &str, hash: &str) -> bool {
    PasswordHash::new(hash)
        .is_ok_and(|h| Argon2::default().verify_password(password.as_bytes(), &h).is_ok())
}

/// A random password of the bulk-account length.
pub fn random_password() -> String {
    Alphanumeric.sample_string(&mut rand::rng(), BULK_PASSWORD_LEN)
}
