//! The adverts, preferences, clients and SMS tables.
//!
//! All tables live in memory behind one lock and are mirrored to a data
//! directory as JSON Lines, one file per table. Every mutation rewrites the
//! touched files (write to a temp file, fsync, rename) before it returns, so
//! a reopened store always sees the last acknowledged state.

use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};
use std::fmt;
use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};

use chrono::{DateTime, Utc};
use indexmap::IndexMap;
use parking_lot::Mutex;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const MAX_SMS_CHARS: usize = 160;

const ADVERTS: &str = "adverts.jsonl";
const CLIENTS: &str = "clients.jsonl";
const PREFERENCES: &str = "preferences.jsonl";
const SUBSCRIPTIONS: &str = "subscriptions.jsonl";
const SMS: &str = "sms.jsonl";
const ANALYSIS: &str = "analysis.json";

#[derive(Debug, Error)]
pub enum StoreError {
    #[error("storage failure on {path}: {source}")]
    Storage { path: PathBuf, source: io::Error },
    #[error("corrupt table {file} line {line}: {message}")]
    Corrupt { file: String, line: usize, message: String },
    #[error("unknown client {0}")]
    UnknownClient(u64),
    #[error("unknown preference {0}")]
    UnknownPreference(u64),
    #[error("unknown advert {0}")]
    UnknownAdvert(u64),
    #[error("unknown message {0}")]
    UnknownMessage(u64),
    #[error("message {0} already sent")]
    AlreadySent(u64),
    #[error("validation failed: {0}")]
    Validation(String),
}

/// Result of an idempotent insert.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(tag = "result", content = "id", rename_all = "snake_case")]
pub enum Insertion {
    Inserted(u64),
    /// The row already existed; carries the existing id.
    Duplicate(u64),
}

impl Insertion {
    pub fn id(self) -> u64 {
        match self {
            Insertion::Inserted(id) | Insertion::Duplicate(id) => id,
        }
    }

    pub fn is_inserted(self) -> bool {
        matches!(self, Insertion::Inserted(_))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AdvertRecord {
    pub id: u64,
    pub category: String,
    pub fields: IndexMap<String, String>,
    pub source_url: String,
    pub content_hash: String,
    pub first_seen: DateTime<Utc>,
}

impl AdvertRecord {
    pub fn field(&self, name: &str) -> &str {
        self.fields.get(name).map(String::as_str).unwrap_or("")
    }

    pub fn is_blank(&self) -> bool {
        self.fields.values().all(|v| v.trim().is_empty())
    }
}

const FNV_OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
const FNV_PRIME: u64 = 0x0000_0100_0000_01b3;
const UNIT_SEPARATOR: u8 = 0x1f;

/// FNV-1a 64 over the category and each lowercased `(name, trimmed value)`
/// pair, all joined by the 0x1F unit separator; 16 lowercase hex digits.
pub fn content_hash<'a, I>(category: &str, fields: I) -> String
where
    I: IntoIterator<Item = (&'a str, &'a str)>,
{
    let mut hash = FNV_OFFSET;
    let mut feed = |bytes: &[u8]| {
        for &b in bytes {
            hash ^= u64::from(b);
            hash = hash.wrapping_mul(FNV_PRIME);
        }
    };
    feed(category.as_bytes());
    for (name, value) in fields {
        feed(&[UNIT_SEPARATOR]);
        feed(name.to_lowercase().as_bytes());
        feed(&[UNIT_SEPARATOR]);
        feed(value.trim().to_lowercase().as_bytes());
    }
    format!("{hash:016x}")
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MatchMode {
    Equals,
    Contains,
}

impl fmt::Display for MatchMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            MatchMode::Equals => "equals",
            MatchMode::Contains => "contains",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Constraint {
    pub field: String,
    pub mode: MatchMode,
    pub value: String,
}

impl Constraint {
    pub fn new(field: &str, mode: MatchMode, value: &str) -> Self {
        Constraint { field: field.to_string(), mode, value: value.to_string() }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Preference {
    pub id: u64,
    pub category: String,
    pub constraints: Vec<Constraint>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Client {
    pub id: u64,
    pub name: String,
    pub mobile: String,
    #[serde(default)]
    pub subscriptions: BTreeSet<u64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SmsState {
    Pending,
    Sent,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SmsMessage {
    pub id: u64,
    pub client_id: u64,
    pub advert_id: u64,
    pub text: String,
    pub state: SmsState,
    pub created_at: DateTime<Utc>,
    pub sent_at: Option<DateTime<Utc>>,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Counts {
    pub adverts: usize,
    pub clients: usize,
    pub preferences: usize,
    pub subscriptions: usize,
    pub pending: usize,
    pub sent: usize,
}

#[derive(Serialize, Deserialize)]
struct ClientRow {
    id: u64,
    name: String,
    mobile: String,
}

#[derive(Serialize, Deserialize)]
struct SubscriptionRow {
    client_id: u64,
    preference_id: u64,
}

#[derive(Serialize, Deserialize, Default)]
struct AnalysisState {
    high_water: u64,
}

/// Collapses whitespace runs to one space and trims.
pub fn normalize_ws(s: &str) -> String {
    s.split_whitespace().collect::<Vec<_>>().join(" ")
}

/// `+` optionally, then one or more ASCII digits.
pub fn valid_mobile(mobile: &str) -> bool {
    let digits = mobile.strip_prefix('+').unwrap_or(mobile);
    !digits.is_empty() && digits.bytes().all(|b| b.is_ascii_digit())
}

fn preference_key(category: &str, constraints: &[Constraint]) -> String {
    let mut parts: Vec<String> = constraints
        .iter()
        .map(|c| {
            format!(
                "{}\u{1f}{}\u{1f}{}",
                c.field.trim().to_lowercase(),
                c.mode,
                normalize_ws(&c.value).to_lowercase()
            )
        })
        .collect();
    parts.sort();
    parts.dedup();
    format!("{}\u{1e}{}", category.trim(), parts.join("\u{1e}"))
}

#[derive(Default, Clone, PartialEq, Eq, Debug)]
struct Tables {
    adverts: BTreeMap<u64, AdvertRecord>,
    by_hash: HashMap<String, u64>,
    clients: BTreeMap<u64, Client>,
    client_keys: HashMap<(String, String), u64>,
    preferences: BTreeMap<u64, Preference>,
    preference_keys: HashMap<String, u64>,
    sms: BTreeMap<u64, SmsMessage>,
    sms_pairs: HashSet<(u64, u64)>,
    high_water: u64,
}

fn next_id<V>(table: &BTreeMap<u64, V>) -> u64 {
    table.keys().next_back().map_or(1, |k| k + 1)
}

/// A snapshot of every table, for comparisons in tests and tooling.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Contents {
    pub adverts: Vec<AdvertRecord>,
    pub clients: Vec<Client>,
    pub preferences: Vec<Preference>,
    pub sms: Vec<SmsMessage>,
    pub high_water: u64,
}

pub struct Datastore {
    dir: Option<PathBuf>,
    tables: Mutex<Tables>,
}

impl fmt::Debug for Datastore {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Datastore").field("dir", &self.dir).finish_non_exhaustive()
    }
}

impl Datastore {
    /// A store with no backing directory.
    pub fn in_memory() -> Self {
        Datastore { dir: None, tables: Mutex::new(Tables::default()) }
    }

    /// Opens (creating if needed) the store in `dir`.
    pub fn open(dir: impl AsRef<Path>) -> Result<Self, StoreError> {
        let dir = dir.as_ref().to_path_buf();
        fs::create_dir_all(&dir).map_err(|source| StoreError::Storage { path: dir.clone(), source })?;
        let tables = load(&dir)?;
        Ok(Datastore { dir: Some(dir), tables: Mutex::new(tables) })
    }

    pub fn dir(&self) -> Option<&Path> {
        self.dir.as_deref()
    }

    /// Inserts an advert unless one with the same content hash exists.
    /// The hash is recomputed from the record's fields; its id is assigned.
    pub fn put_advert(&self, mut record: AdvertRecord) -> Result<Insertion, StoreError> {
        if record.category.trim().is_empty() {
            return Err(StoreError::Validation("advert category is empty".into()));
        }
        record.content_hash =
            content_hash(&record.category, record.fields.iter().map(|(k, v)| (k.as_str(), v.as_str())));
        let mut t = self.tables.lock();
        if let Some(&existing) = t.by_hash.get(&record.content_hash) {
            return Ok(Insertion::Duplicate(existing));
        }
        let id = next_id(&t.adverts);
        record.id = id;
        t.by_hash.insert(record.content_hash.clone(), id);
        t.adverts.insert(id, record);
        if let Err(e) = self.persist(&t, &[ADVERTS]) {
            let rec = t.adverts.remove(&id).unwrap();
            t.by_hash.remove(&rec.content_hash);
            return Err(e);
        }
        Ok(Insertion::Inserted(id))
    }

    pub fn get_advert(&self, id: u64) -> Option<AdvertRecord> {
        self.tables.lock().adverts.get(&id).cloned()
    }

    /// Adverts with id greater than `since`, optionally of one category,
    /// in id order.
    pub fn list_adverts(&self, category: Option<&str>, since: u64) -> Vec<AdvertRecord> {
        self.tables
            .lock()
            .adverts
            .range(since + 1..)
            .map(|(_, a)| a)
            .filter(|a| category.is_none_or(|c| a.category == c))
            .cloned()
            .collect()
    }

    /// Registers a client; an identical (name, mobile) pair returns the
    /// existing id.
    pub fn put_client(&self, name: &str, mobile: &str) -> Result<Insertion, StoreError> {
        let name = name.trim();
        let mobile = mobile.trim();
        if name.is_empty() {
            return Err(StoreError::Validation("client name is empty".into()));
        }
        if !valid_mobile(mobile) {
            return Err(StoreError::Validation(format!("invalid mobile number {mobile:?}")));
        }
        let key = (name.to_string(), mobile.to_string());
        let mut t = self.tables.lock();
        if let Some(&id) = t.client_keys.get(&key) {
            return Ok(Insertion::Duplicate(id));
        }
        let id = next_id(&t.clients);
        t.clients.insert(
            id,
            Client { id, name: key.0.clone(), mobile: key.1.clone(), subscriptions: BTreeSet::new() },
        );
        t.client_keys.insert(key.clone(), id);
        if let Err(e) = self.persist(&t, &[CLIENTS]) {
            t.clients.remove(&id);
            t.client_keys.remove(&key);
            return Err(e);
        }
        Ok(Insertion::Inserted(id))
    }

    pub fn get_client(&self, id: u64) -> Option<Client> {
        self.tables.lock().clients.get(&id).cloned()
    }

    pub fn list_clients(&self) -> Vec<Client> {
        self.tables.lock().clients.values().cloned().collect()
    }

    /// Registers a preference; a canonically equal one returns the
    /// existing id.
    pub fn put_preference(
        &self,
        category: &str,
        constraints: Vec<Constraint>,
    ) -> Result<Insertion, StoreError> {
        let category = category.trim();
        if category.is_empty() {
            return Err(StoreError::Validation("preference category is empty".into()));
        }
        if constraints.is_empty() {
            return Err(StoreError::Validation("preference has no constraints".into()));
        }
        if constraints.iter().any(|c| c.field.trim().is_empty()) {
            return Err(StoreError::Validation("constraint field name is empty".into()));
        }
        let key = preference_key(category, &constraints);
        let mut t = self.tables.lock();
        if let Some(&id) = t.preference_keys.get(&key) {
            return Ok(Insertion::Duplicate(id));
        }
        let id = next_id(&t.preferences);
        t.preferences.insert(id, Preference { id, category: category.to_string(), constraints });
        t.preference_keys.insert(key.clone(), id);
        if let Err(e) = self.persist(&t, &[PREFERENCES]) {
            t.preferences.remove(&id);
            t.preference_keys.remove(&key);
            return Err(e);
        }
        Ok(Insertion::Inserted(id))
    }

    pub fn get_preference(&self, id: u64) -> Option<Preference> {
        self.tables.lock().preferences.get(&id).cloned()
    }

    pub fn list_preferences(&self) -> Vec<Preference> {
        self.tables.lock().preferences.values().cloned().collect()
    }

    /// Adds `preference_id` to the client's subscriptions. Returns whether
    /// the subscription is new; repeating it is a no-op.
    pub fn subscribe(&self, client_id: u64, preference_id: u64) -> Result<bool, StoreError> {
        let mut t = self.tables.lock();
        if !t.preferences.contains_key(&preference_id) {
            return Err(StoreError::UnknownPreference(preference_id));
        }
        let client = t.clients.get_mut(&client_id).ok_or(StoreError::UnknownClient(client_id))?;
        if !client.subscriptions.insert(preference_id) {
            return Ok(false);
        }
        if let Err(e) = self.persist(&t, &[SUBSCRIPTIONS]) {
            t.clients.get_mut(&client_id).unwrap().subscriptions.remove(&preference_id);
            return Err(e);
        }
        Ok(true)
    }

    /// Ids of clients subscribed to a preference, ascending.
    pub fn subscribers(&self, preference_id: u64) -> Vec<u64> {
        self.tables
            .lock()
            .clients
            .values()
            .filter(|c| c.subscriptions.contains(&preference_id))
            .map(|c| c.id)
            .collect()
    }

    /// Whether a pending or sent message exists for the pair.
    pub fn already_notified(&self, client_id: u64, advert_id: u64) -> Result<bool, StoreError> {
        let t = self.tables.lock();
        if !t.clients.contains_key(&client_id) {
            return Err(StoreError::UnknownClient(client_id));
        }
        if !t.adverts.contains_key(&advert_id) {
            return Err(StoreError::UnknownAdvert(advert_id));
        }
        Ok(t.sms_pairs.contains(&(client_id, advert_id)))
    }

    /// Queues a pending message unless one already exists for the pair.
    pub fn enqueue_sms(
        &self,
        client_id: u64,
        advert_id: u64,
        text: &str,
        created_at: DateTime<Utc>,
    ) -> Result<Insertion, StoreError> {
        let chars = text.chars().count();
        if chars > MAX_SMS_CHARS {
            return Err(StoreError::Validation(format!(
                "message is {chars} characters, limit is {MAX_SMS_CHARS}"
            )));
        }
        let mut t = self.tables.lock();
        if !t.clients.contains_key(&client_id) {
            return Err(StoreError::UnknownClient(client_id));
        }
        if !t.adverts.contains_key(&advert_id) {
            return Err(StoreError::UnknownAdvert(advert_id));
        }
        if t.sms_pairs.contains(&(client_id, advert_id)) {
            let existing = t
                .sms
                .values()
                .find(|m| m.client_id == client_id && m.advert_id == advert_id)
                .map(|m| m.id)
                .expect("pair index out of sync");
            return Ok(Insertion::Duplicate(existing));
        }
        let id = next_id(&t.sms);
        t.sms.insert(
            id,
            SmsMessage {
                id,
                client_id,
                advert_id,
                text: text.to_string(),
                state: SmsState::Pending,
                created_at,
                sent_at: None,
            },
        );
        t.sms_pairs.insert((client_id, advert_id));
        if let Err(e) = self.persist(&t, &[SMS]) {
            t.sms.remove(&id);
            t.sms_pairs.remove(&(client_id, advert_id));
            return Err(e);
        }
        Ok(Insertion::Inserted(id))
    }

    /// Moves a pending message to the sent table.
    pub fn mark_sent(&self, sms_id: u64, sent_at: DateTime<Utc>) -> Result<(), StoreError> {
        let mut t = self.tables.lock();
        let msg = t.sms.get_mut(&sms_id).ok_or(StoreError::UnknownMessage(sms_id))?;
        if msg.state == SmsState::Sent {
            return Err(StoreError::AlreadySent(sms_id));
        }
        msg.state = SmsState::Sent;
        msg.sent_at = Some(sent_at);
        if let Err(e) = self.persist(&t, &[SMS]) {
            let msg = t.sms.get_mut(&sms_id).unwrap();
            msg.state = SmsState::Pending;
            msg.sent_at = None;
            return Err(e);
        }
        Ok(())
    }

    pub fn list_pending(&self) -> Vec<SmsMessage> {
        self.list_sms(SmsState::Pending)
    }

    pub fn list_sent(&self) -> Vec<SmsMessage> {
        self.list_sms(SmsState::Sent)
    }

    fn list_sms(&self, state: SmsState) -> Vec<SmsMessage> {
        self.tables.lock().sms.values().filter(|m| m.state == state).cloned().collect()
    }

    pub fn counts(&self) -> Counts {
        let t = self.tables.lock();
        let pending = t.sms.values().filter(|m| m.state == SmsState::Pending).count();
        Counts {
            adverts: t.adverts.len(),
            clients: t.clients.len(),
            preferences: t.preferences.len(),
            subscriptions: t.clients.values().map(|c| c.subscriptions.len()).sum(),
            pending,
            sent: t.sms.len() - pending,
        }
    }

    /// Largest advert id already examined by the analysis step.
    pub fn high_water(&self) -> u64 {
        self.tables.lock().high_water
    }

    pub fn set_high_water(&self, value: u64) -> Result<(), StoreError> {
        let mut t = self.tables.lock();
        let previous = t.high_water;
        t.high_water = value;
        if let Err(e) = self.persist(&t, &[ANALYSIS]) {
            t.high_water = previous;
            return Err(e);
        }
        Ok(())
    }

    pub fn contents(&self) -> Contents {
        let t = self.tables.lock();
        Contents {
            adverts: t.adverts.values().cloned().collect(),
            clients: t.clients.values().cloned().collect(),
            preferences: t.preferences.values().cloned().collect(),
            sms: t.sms.values().cloned().collect(),
            high_water: t.high_water,
        }
    }

    fn persist(&self, t: &Tables, files: &[&str]) -> Result<(), StoreError> {
        let Some(dir) = &self.dir else {
            return Ok(());
        };
        for &file in files {
            let body = render(t, file);
            write_atomic(&dir.join(file), body.as_bytes())
                .map_err(|source| StoreError::Storage { path: dir.join(file), source })?;
        }
        Ok(())
    }
}

fn json_line<T: Serialize>(out: &mut String, row: &T) {
    out.push_str(&serde_json::to_string(row).expect("rows always serialize"));
    out.push('\n');
}

fn render(t: &Tables, file: &str) -> String {
    let mut out = String::new();
    match file {
        ADVERTS => t.adverts.values().for_each(|a| json_line(&mut out, a)),
        CLIENTS => t.clients.values().for_each(|c| {
            json_line(&mut out, &ClientRow { id: c.id, name: c.name.clone(), mobile: c.mobile.clone() })
        }),
        PREFERENCES => t.preferences.values().for_each(|p| json_line(&mut out, p)),
        SUBSCRIPTIONS => t.clients.values().for_each(|c| {
            for &preference_id in &c.subscriptions {
                json_line(&mut out, &SubscriptionRow { client_id: c.id, preference_id });
            }
        }),
        SMS => t.sms.values().for_each(|m| json_line(&mut out, m)),
        ANALYSIS => json_line(&mut out, &AnalysisState { high_water: t.high_water }),
        _ => unreachable!("unknown table {file}"),
    }
    out
}

fn write_atomic(path: &Path, bytes: &[u8]) -> io::Result<()> {
    let tmp = path.with_extension("tmp");
    {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
    }
    fs::rename(&tmp, path)
}

fn read_rows<T: for<'de> Deserialize<'de>>(dir: &Path, file: &str) -> Result<Vec<T>, StoreError> {
    let path = dir.join(file);
    let text = match fs::read_to_string(&path) {
        Ok(t) => t,
        Err(e) if e.kind() == io::ErrorKind::NotFound => return Ok(Vec::new()),
        Err(source) => return Err(StoreError::Storage { path, source }),
    };
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            serde_json::from_str(l).map_err(|e| StoreError::Corrupt {
                file: file.to_string(),
                line: i + 1,
                message: e.to_string(),
            })
        })
        .collect()
}

fn corrupt(file: &str, message: String) -> StoreError {
    StoreError::Corrupt { file: file.to_string(), line: 0, message }
}

fn load(dir: &Path) -> Result<Tables, StoreError> {
    let mut t = Tables::default();
    for a in read_rows::<AdvertRecord>(dir, ADVERTS)? {
        if t.by_hash.insert(a.content_hash.clone(), a.id).is_some() {
            return Err(corrupt(ADVERTS, format!("duplicate content hash {}", a.content_hash)));
        }
        t.adverts.insert(a.id, a);
    }
    for row in read_rows::<ClientRow>(dir, CLIENTS)? {
        t.client_keys.insert((row.name.clone(), row.mobile.clone()), row.id);
        t.clients.insert(
            row.id,
            Client { id: row.id, name: row.name, mobile: row.mobile, subscriptions: BTreeSet::new() },
        );
    }
    for p in read_rows::<Preference>(dir, PREFERENCES)? {
        t.preference_keys.insert(preference_key(&p.category, &p.constraints), p.id);
        t.preferences.insert(p.id, p);
    }
    for s in read_rows::<SubscriptionRow>(dir, SUBSCRIPTIONS)? {
        let client = t
            .clients
            .get_mut(&s.client_id)
            .ok_or_else(|| corrupt(SUBSCRIPTIONS, format!("unknown client {}", s.client_id)))?;
        client.subscriptions.insert(s.preference_id);
    }
    for m in read_rows::<SmsMessage>(dir, SMS)? {
        if !t.sms_pairs.insert((m.client_id, m.advert_id)) {
            return Err(corrupt(SMS, format!("duplicate pair ({}, {})", m.client_id, m.advert_id)));
        }
        t.sms.insert(m.id, m);
    }
    if let Some(state) = read_rows::<AnalysisState>(dir, ANALYSIS)?.pop() {
        t.high_water = state.high_water;
    }
    Ok(t)
}
