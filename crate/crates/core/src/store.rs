//! Persistence for accounts, player states and the event log.

use std::collections::BTreeMap;
use std::fs::{self, File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use parking_lot::Mutex;
use serde::{Deserialize, Serialize};

use crate::engine::PlayerState;
use crate::events::GameEvent;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct Account {
    pub username: String,
    pub password_hash: String,
}

impl Account {
    pub fn is_admin(&self) -> bool {
        self.username == "admin"
    }
}

#[derive(Debug, thiserror::Error)]
pub enum StoreError {
    #[error("storage I/O failed: {0}")]
    Io(#[from] std::io::Error),
    #[error("corrupt record in {0}: {1}")]
    Corrupt(String, String),
    #[error("invalid username '{0}'")]
    InvalidName(String),
}

pub trait Store: Send + Sync {
    fn load_events(&self) -> Result<Vec<GameEvent>, StoreError>;
    /// Must not return before the event is durable.
    fn append_event(&self, event: &GameEvent) -> Result<(), StoreError>;
    fn load_players(&self) -> Result<Vec<PlayerState>, StoreError>;
    fn save_player(&self, state: &PlayerState) -> Result<(), StoreError>;
    fn load_accounts(&self) -> Result<Vec<Account>, StoreError>;
    /// Replaces the whole account table in one step.
    fn save_accounts(&self, accounts: &[Account]) -> Result<(), StoreError>;
}

/// Usernames double as file names, so they are restricted.
pub fn valid_username(name: &str) -> bool {
    !name.is_empty()
        && name.len() <= 64
        && name
            .chars()
            .all(|c| c.is_ascii_alphanumeric() || c == '_' || c == '-' || c == '.')
        && !name.starts_with('.')
}

#[derive(Default)]
pub struct MemoryStore {
    events: Mutex<Vec<GameEvent>>,
    players: Mutex<BTreeMap<String, PlayerState>>,
    accounts: Mutex<Vec<Account>>,
}

impl Store for MemoryStore {
    fn load_events(&self) -> Result<Vec<GameEvent>, StoreError> {
        Ok(self.events.lock().clone())
    }

    fn append_event(&self, event: &GameEvent) -> Result<(), StoreError> {
        self.events.lock().push(event.clone());
        Ok(())
    }

    fn load_players(&self) -> Result<Vec<PlayerState>, StoreError> {
        Ok(self.players.lock().values().cloned().collect())
    }

    fn save_player(&self, state: &PlayerState) -> Result<(), StoreError> {
        self.players
            .lock()
            .insert(state.username.clone(), state.clone());
        Ok(())
    }

    fn load_accounts(&self) -> Result<Vec<Account>, StoreError> {
        Ok(self.accounts.lock().clone())
    }

    fn save_accounts(&self, accounts: &[Account]) -> Result<(), StoreError> {
        *self.accounts.lock() = accounts.to_vec();
        Ok(())
    }
}

/// Files below one data directory:
/// `accounts.json`, `players/<username>.json` and `events.jsonl`.
pub struct DirStore {
    root: PathBuf,
    events: Mutex<File>,
}

impl DirStore {
    pub fn open(root: impl Into<PathBuf>) -> Result<Self, StoreError> {
        let root = root.into();
        fs::create_dir_all(root.join("players"))?;
        drop_torn_tail(&root.join("events.jsonl"))?;
        let events = OpenOptions::new()
            .create(true)
            .append(true)
            .open(root.join("events.jsonl"))?;
        Ok(Self {
            root,
            events: Mutex::new(events),
        })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    fn write_atomic(&self, path: &Path, bytes: &[u8]) -> Result<(), StoreError> {
        let tmp = path.with_extension("tmp");
        {
            let mut f = File::create(&tmp)?;
            f.write_all(bytes)?;
            f.sync_all()?;
        }
        fs::rename(&tmp, path)?;
        Ok(())
    }
}

impl Store for DirStore {
    fn load_events(&self) -> Result<Vec<GameEvent>, StoreError> {
        let path = self.root.join("events.jsonl");
        let reader = BufReader::new(File::open(&path)?);
        let mut out = Vec::new();
        for (i, line) in reader.lines().enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let event = serde_json::from_str(&line).map_err(|e| {
                StoreError::Corrupt(format!("events.jsonl line {}", i + 1), e.to_string())
            })?;
            out.push(event);
        }
        Ok(out)
    }

    fn append_event(&self, event: &GameEvent) -> Result<(), StoreError> {
        let mut line = serde_json::to_string(event).expect("events serialize");
        line.push('\n');
        let mut f = self.events.lock();
        f.write_all(line.as_bytes())?;
        f.sync_data()?;
        Ok(())
    }

    fn load_players(&self) -> Result<Vec<PlayerState>, StoreError> {
        let mut out = Vec::new();
        let mut paths: Vec<PathBuf> = fs::read_dir(self.root.join("players"))?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.extension().is_some_and(|x| x == "json"))
            .collect();
        paths.sort();
        for path in paths {
            let text = fs::read_to_string(&path)?;
            let state = serde_json::from_str(&text)
                .map_err(|e| StoreError::Corrupt(path.display().to_string(), e.to_string()))?;
            out.push(state);
        }
        Ok(out)
    }

    fn save_player(&self, state: &PlayerState) -> Result<(), StoreError> {
        if !valid_username(&state.username) {
            return Err(StoreError::InvalidName(state.username.clone()));
        }
        let path = self.root.join("players").join(format!("{}.json", state.username));
        let bytes = serde_json::to_vec_pretty(state).expect("player state serializes");
        self.write_atomic(&path, &bytes)
    }

    fn load_accounts(&self) -> Result<Vec<Account>, StoreError> {
        let path = self.root.join("accounts.json");
        if !path.exists() {
            return Ok(Vec::new());
        }
        let text = fs::read_to_string(&path)?;
        serde_json::from_str(&text).map_err(|e| StoreError::Corrupt("accounts.json".into(), e.to_string()))
    }

    fn save_accounts(&self, accounts: &[Account]) -> Result<(), StoreError> {
        let bytes = serde_json::to_vec_pretty(accounts).expect("accounts serialize");
        self.write_atomic(&self.root.join("accounts.json"), &bytes)
    }
}

/// Cuts off a partial final line left by a crash during an append.
fn drop_torn_tail(path: &Path) -> Result<(), StoreError> {
    let Ok(bytes) = fs::read(path) else {
        return Ok(());
    };
    if bytes.is_empty() || bytes.ends_with(b"\n") {
        return Ok(());
    }
    let keep = bytes.iter().rposition(|b| *b == b'\n').map_or(0, |i| i + 1);
    let f = OpenOptions::new().write(true).open(path)?;
    f.set_len(keep as u64)?;
    f.sync_all()?;
    Ok(())
}
