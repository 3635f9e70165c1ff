//! Signed, hash-chained audit log.
//!
//! Entry encoding (all integers little-endian):
//!
//! ```text
//! u8      record version (1)
//! u64     timestamp, ms
//! f64     latitude
//! f64     longitude
//! u32     channel index
//! f64     EIRP cap, dBm (-inf when denied)
//! u8      grant status   0 Valid, 1 Expired, 2 None, 3 WaiverActive
//! u8      basis          0 ValidGrant, 1 WaiverSensing, 2 Denied
//! u8      flags          bit0 allowed, bit1 sensing conflict,
//!                        bit2 confidence present, bit3 prior present
//! f64     sensing confidence (0 when absent)
//! f64     twin occupancy prior (0 when absent)
//! [u8;32] prev_hash
//! u8      scheme id length, then the scheme id bytes ("ed25519")
//! ---- end of signed body ----
//! u16     signature length, then the signature bytes
//! ```
//!
//! `prev_hash` is the SHA-256 of the predecessor's complete encoded entry; the
//! first entry uses 32 zero bytes. The signature covers the body.
//!
//! A log file is the header `"SIDA"`, u16 version, u8 scheme id length, scheme
//! id, u16 key length and the public key, followed by entries each prefixed
//! with a u32 byte length.

use std::fmt;
use std::fs::{File, OpenOptions};
use std::io::{self, Cursor, Read, Write};
use std::path::Path;

use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};
use ed25519_dalek::{Signature, Signer, SigningKey, VerifyingKey};
use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};
use thiserror::Error;

use super::{ComplianceDecision, DecisionBasis, DecisionContext, GrantStatus};
use crate::paws::GeoLocation;
use crate::spectrum::ChannelId;
use crate::time::Timestamp;

pub const SCHEME_ED25519: &str = "ed25519";
pub const GENESIS_HASH: [u8; 32] = [0; 32];

const FILE_MAGIC: &[u8; 4] = b"SIDA";
const FILE_VERSION: u16 = 1;
const RECORD_VERSION: u8 = 1;
const MAX_ENTRY_LEN: u32 = 1 << 16;

const FLAG_ALLOWED: u8 = 1;
const FLAG_CONFLICT: u8 = 2;
const FLAG_CONFIDENCE: u8 = 4;
const FLAG_PRIOR: u8 = 8;

#[derive(Debug, Error)]
pub enum AuditError {
    #[error("signing key unavailable")]
    SigningKeyUnavailable,
    #[error("audit log io: {0}")]
    Io(#[from] io::Error),
    #[error("bad audit log header: {0}")]
    BadHeader(String),
    #[error("signing key does not match the log's public key")]
    KeyMismatch,
    #[error("{0}")]
    Chain(ChainFailure),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum FailureReason {
    Truncated,
    Malformed(String),
    UnsupportedScheme(String),
    HashMismatch,
    BadSignature,
}

impl fmt::Display for FailureReason {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            FailureReason::Truncated => f.write_str("truncated entry"),
            FailureReason::Malformed(m) => write!(f, "malformed entry: {m}"),
            FailureReason::UnsupportedScheme(s) => write!(f, "unsupported signature scheme {s:?}"),
            FailureReason::HashMismatch => f.write_str("prev_hash does not match predecessor"),
            FailureReason::BadSignature => f.write_str("signature does not verify"),
        }
    }
}

/// First entry that failed verification.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("entry {index} at byte offset {offset}: {reason}")]
pub struct ChainFailure {
    pub index: usize,
    /// Offset of the entry's length prefix within the log file.
    pub offset: u64,
    pub reason: FailureReason,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AuditRecord {
    pub timestamp: Timestamp,
    pub gps: GeoLocation,
    pub channel: ChannelId,
    pub eirp_dbm: f64,
    pub grant_status: GrantStatus,
    pub sensing_confidence: Option<f64>,
    pub basis: DecisionBasis,
    pub allowed: bool,
    pub sensing_conflict: bool,
    pub prior_occupancy: Option<f64>,
}

impl AuditRecord {
    pub fn from_decision(d: &ComplianceDecision, ctx: DecisionContext) -> Self {
        AuditRecord {
            timestamp: d.decided_at,
            gps: ctx.gps,
            channel: d.channel,
            eirp_dbm: d.eirp_cap_dbm,
            grant_status: d.grant_status,
            sensing_confidence: d.sensing_confidence,
            basis: d.basis,
            allowed: d.allowed,
            sensing_conflict: d.sensing_conflict,
            prior_occupancy: ctx.prior_occupancy,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AuditEntry {
    pub record: AuditRecord,
    pub prev_hash: [u8; 32],
    pub scheme: String,
    pub signature: Vec<u8>,
}

fn status_code(s: GrantStatus) -> u8 {
    match s {
        GrantStatus::Valid => 0,
        GrantStatus::Expired => 1,
        GrantStatus::None => 2,
        GrantStatus::WaiverActive => 3,
    }
}

fn basis_code(b: DecisionBasis) -> u8 {
    match b {
        DecisionBasis::ValidGrant => 0,
        DecisionBasis::WaiverSensing => 1,
        DecisionBasis::Denied => 2,
    }
}

impl AuditEntry {
    /// The bytes the signature covers.
    pub fn signed_bytes(&self) -> Vec<u8> {
        let r = &self.record;
        let mut b = Vec::with_capacity(128);
        let mut flags = 0;
        if r.allowed {
            flags |= FLAG_ALLOWED;
        }
        if r.sensing_conflict {
            flags |= FLAG_CONFLICT;
        }
        if r.sensing_confidence.is_some() {
            flags |= FLAG_CONFIDENCE;
        }
        if r.prior_occupancy.is_some() {
            flags |= FLAG_PRIOR;
        }
        // writes into a Vec cannot fail
        b.push(RECORD_VERSION);
        b.write_u64::<LittleEndian>(r.timestamp.as_millis()).unwrap();
        b.write_f64::<LittleEndian>(r.gps.lat).unwrap();
        b.write_f64::<LittleEndian>(r.gps.lon).unwrap();
        b.write_u32::<LittleEndian>(r.channel.0).unwrap();
        b.write_f64::<LittleEndian>(r.eirp_dbm).unwrap();
        b.push(status_code(r.grant_status));
        b.push(basis_code(r.basis));
        b.push(flags);
        b.write_f64::<LittleEndian>(r.sensing_confidence.unwrap_or(0.0)).unwrap();
        b.write_f64::<LittleEndian>(r.prior_occupancy.unwrap_or(0.0)).unwrap();
        b.extend_from_slice(&self.prev_hash);
        b.push(self.scheme.len() as u8);
        b.extend_from_slice(self.scheme.as_bytes());
        b
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut b = self.signed_bytes();
        b.write_u16::<LittleEndian>(self.signature.len() as u16).unwrap();
        b.extend_from_slice(&self.signature);
        b
    }

    pub fn digest(&self) -> [u8; 32] {
        Sha256::digest(self.to_bytes()).into()
    }

    /// Strict decoding; returns the entry and the length of its signed body.
    pub fn from_bytes(bytes: &[u8]) -> Result<(AuditEntry, usize), FailureReason> {
        let mut c = Cursor::new(bytes);
        let eof = |_| FailureReason::Truncated;
        let version = c.read_u8().map_err(eof)?;
        if version != RECORD_VERSION {
            return Err(FailureReason::Malformed(format!("record version {version}")));
        }
        let timestamp = Timestamp(c.read_u64::<LittleEndian>().map_err(eof)?);
        let lat = c.read_f64::<LittleEndian>().map_err(eof)?;
        let lon = c.read_f64::<LittleEndian>().map_err(eof)?;
        let channel = ChannelId(c.read_u32::<LittleEndian>().map_err(eof)?);
        let eirp_dbm = c.read_f64::<LittleEndian>().map_err(eof)?;
        let grant_status = match c.read_u8().map_err(eof)? {
            0 => GrantStatus::Valid,
            1 => GrantStatus::Expired,
            2 => GrantStatus::None,
            3 => GrantStatus::WaiverActive,
            x => return Err(FailureReason::Malformed(format!("grant status {x}"))),
        };
        let basis = match c.read_u8().map_err(eof)? {
            0 => DecisionBasis::ValidGrant,
            1 => DecisionBasis::WaiverSensing,
            2 => DecisionBasis::Denied,
            x => return Err(FailureReason::Malformed(format!("basis {x}"))),
        };
        let flags = c.read_u8().map_err(eof)?;
        if flags & !(FLAG_ALLOWED | FLAG_CONFLICT | FLAG_CONFIDENCE | FLAG_PRIOR) != 0 {
            return Err(FailureReason::Malformed(format!("flags {flags:#04x}")));
        }
        let optional = |value: f64, present: bool, what: &str| {
            if present {
                Ok(Some(value))
            } else if value.to_bits() == 0 {
                Ok(None)
            } else {
                Err(FailureReason::Malformed(format!("absent {what} is not zero")))
            }
        };
        let conf = c.read_f64::<LittleEndian>().map_err(eof)?;
        let prior = c.read_f64::<LittleEndian>().map_err(eof)?;
        let sensing_confidence = optional(conf, flags & FLAG_CONFIDENCE != 0, "confidence")?;
        let prior_occupancy = optional(prior, flags & FLAG_PRIOR != 0, "prior")?;
        let mut prev_hash = [0u8; 32];
        c.read_exact(&mut prev_hash).map_err(eof)?;
        let scheme_len = c.read_u8().map_err(eof)? as usize;
        let mut scheme = vec![0u8; scheme_len];
        c.read_exact(&mut scheme).map_err(eof)?;
        let scheme = String::from_utf8(scheme).map_err(|_| FailureReason::Malformed("scheme id not utf-8".into()))?;
        let body_len = c.position() as usize;
        let sig_len = c.read_u16::<LittleEndian>().map_err(eof)? as usize;
        let mut signature = vec![0u8; sig_len];
        c.read_exact(&mut signature).map_err(eof)?;
        if c.position() as usize != bytes.len() {
            return Err(FailureReason::Malformed("trailing bytes".into()));
        }
        let record = AuditRecord {
            timestamp,
            gps: GeoLocation { lat, lon },
            channel,
            eirp_dbm,
            grant_status,
            sensing_confidence,
            basis,
            allowed: flags & FLAG_ALLOWED != 0,
            sensing_conflict: flags & FLAG_CONFLICT != 0,
            prior_occupancy,
        };
        Ok((AuditEntry { record, prev_hash, scheme, signature }, body_len))
    }
}

/// Deterministic key for seeded simulations.
pub fn signing_key_from_seed(seed: u64) -> SigningKey {
    let mut secret = [0u8; 32];
    ChaCha8Rng::seed_from_u64(seed ^ 0xA0D1_7000).fill_bytes(&mut secret);
    SigningKey::from_bytes(&secret)
}

/// Parses a hex-encoded Ed25519 public key.
pub fn verifying_key_from_hex(text: &str) -> Result<VerifyingKey, AuditError> {
    let bytes: [u8; 32] = hex::decode(text.trim())
        .ok()
        .and_then(|b| b.try_into().ok())
        .ok_or_else(|| AuditError::BadHeader("public key must be 32 hex-encoded bytes".into()))?;
    VerifyingKey::from_bytes(&bytes).map_err(|e| AuditError::BadHeader(e.to_string()))
}

fn header_bytes(key: &VerifyingKey) -> Vec<u8> {
    let mut h = Vec::with_capacity(48);
    h.extend_from_slice(FILE_MAGIC);
    h.write_u16::<LittleEndian>(FILE_VERSION).unwrap();
    h.push(SCHEME_ED25519.len() as u8);
    h.extend_from_slice(SCHEME_ED25519.as_bytes());
    let key = key.as_bytes();
    h.write_u16::<LittleEndian>(key.len() as u16).unwrap();
    h.extend_from_slice(key);
    h
}

fn parse_header(c: &mut Cursor<&[u8]>) -> Result<VerifyingKey, AuditError> {
    let bad = |m: &str| AuditError::BadHeader(m.to_string());
    let mut magic = [0u8; 4];
    c.read_exact(&mut magic).map_err(|_| bad("truncated"))?;
    if &magic != FILE_MAGIC {
        return Err(bad("not an audit log"));
    }
    let version = c.read_u16::<LittleEndian>().map_err(|_| bad("truncated"))?;
    if version != FILE_VERSION {
        return Err(AuditError::BadHeader(format!("version {version}")));
    }
    let n = c.read_u8().map_err(|_| bad("truncated"))? as usize;
    let mut scheme = vec![0u8; n];
    c.read_exact(&mut scheme).map_err(|_| bad("truncated"))?;
    if scheme != SCHEME_ED25519.as_bytes() {
        return Err(AuditError::BadHeader(format!("scheme {}", String::from_utf8_lossy(&scheme))));
    }
    let n = c.read_u16::<LittleEndian>().map_err(|_| bad("truncated"))? as usize;
    let mut key = [0u8; 32];
    if n != key.len() {
        return Err(AuditError::BadHeader(format!("key length {n}")));
    }
    c.read_exact(&mut key).map_err(|_| bad("truncated"))?;
    VerifyingKey::from_bytes(&key).map_err(|_| bad("invalid public key"))
}

/// Checks one stored entry against its predecessor's digest.
fn check_entry(raw: &[u8], expected_prev: &[u8; 32], key: &VerifyingKey) -> Result<AuditEntry, FailureReason> {
    let (entry, body_len) = AuditEntry::from_bytes(raw)?;
    if entry.scheme != SCHEME_ED25519 {
        return Err(FailureReason::UnsupportedScheme(entry.scheme));
    }
    if &entry.prev_hash != expected_prev {
        return Err(FailureReason::HashMismatch);
    }
    let sig = Signature::from_slice(&entry.signature).map_err(|_| FailureReason::BadSignature)?;
    key.verify_strict(&raw[..body_len], &sig).map_err(|_| FailureReason::BadSignature)?;
    Ok(entry)
}

/// Verifies in-memory entries; offsets are those the entries would have in a log file.
pub fn verify_entries(entries: &[AuditEntry], key: &VerifyingKey) -> Result<(), ChainFailure> {
    let mut prev = GENESIS_HASH;
    let mut offset = header_bytes(key).len() as u64;
    for (index, e) in entries.iter().enumerate() {
        let raw = e.to_bytes();
        check_entry(&raw, &prev, key).map_err(|reason| ChainFailure { index, offset, reason })?;
        prev = Sha256::digest(&raw).into();
        offset += 4 + raw.len() as u64;
    }
    Ok(())
}

/// Verifies a complete log image. `key` overrides the key stored in the header.
/// Returns the number of entries.
pub fn verify_log_bytes(bytes: &[u8], key: Option<&VerifyingKey>) -> Result<usize, AuditError> {
    let mut c = Cursor::new(bytes);
    let stored = parse_header(&mut c)?;
    let key = key.unwrap_or(&stored);
    let mut prev = GENESIS_HASH;
    let mut index = 0;
    while (c.position() as usize) < bytes.len() {
        let offset = c.position();
        let fail = |reason| AuditError::Chain(ChainFailure { index, offset, reason });
        let len = c.read_u32::<LittleEndian>().map_err(|_| fail(FailureReason::Truncated))?;
        if len > MAX_ENTRY_LEN {
            return Err(fail(FailureReason::Malformed(format!("length {len}"))));
        }
        let start = c.position() as usize;
        let end = start + len as usize;
        if end > bytes.len() {
            return Err(fail(FailureReason::Truncated));
        }
        let raw = &bytes[start..end];
        check_entry(raw, &prev, key).map_err(fail)?;
        prev = Sha256::digest(raw).into();
        c.set_position(end as u64);
        index += 1;
    }
    Ok(index)
}

pub fn verify_log_file(path: &Path, key: Option<&VerifyingKey>) -> Result<usize, AuditError> {
    verify_log_bytes(&std::fs::read(path)?, key)
}

/// Append-only log. Entries are signed as they are appended and, when backed
/// by a file, written through before `append` returns.
pub struct AuditLog {
    verifying_key: VerifyingKey,
    signing_key: Option<SigningKey>,
    entries: Vec<AuditEntry>,
    head: [u8; 32],
    file: Option<File>,
}

impl fmt::Debug for AuditLog {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("AuditLog")
            .field("verifying_key", &hex::encode(self.verifying_key.as_bytes()))
            .field("entries", &self.entries.len())
            .field("head", &hex::encode(self.head))
            .field("can_sign", &self.signing_key.is_some())
            .finish()
    }
}

impl AuditLog {
    pub fn in_memory(signing_key: SigningKey) -> Self {
        AuditLog {
            verifying_key: signing_key.verifying_key(),
            signing_key: Some(signing_key),
            entries: Vec::new(),
            head: GENESIS_HASH,
            file: None,
        }
    }

    /// A log that can be read and verified but not extended.
    pub fn read_only(verifying_key: VerifyingKey) -> Self {
        AuditLog { verifying_key, signing_key: None, entries: Vec::new(), head: GENESIS_HASH, file: None }
    }

    /// Creates a new log file; fails if `path` exists.
    pub fn create(path: &Path, signing_key: SigningKey) -> Result<Self, AuditError> {
        let mut file = OpenOptions::new().write(true).create_new(true).open(path)?;
        let mut log = Self::in_memory(signing_key);
        file.write_all(&header_bytes(&log.verifying_key))?;
        file.flush()?;
        log.file = Some(file);
        Ok(log)
    }

    /// Loads an existing log, verifying it. Without a key the log is read-only.
    pub fn open(path: &Path, signing_key: Option<SigningKey>) -> Result<Self, AuditError> {
        let bytes = std::fs::read(path)?;
        verify_log_bytes(&bytes, None)?;
        let mut c = Cursor::new(&bytes[..]);
        let stored = parse_header(&mut c)?;
        if let Some(k) = &signing_key {
            if k.verifying_key() != stored {
                return Err(AuditError::KeyMismatch);
            }
        }
        let mut entries = Vec::new();
        while (c.position() as usize) < bytes.len() {
            let len = c.read_u32::<LittleEndian>()? as usize;
            let start = c.position() as usize;
            let (entry, _) = AuditEntry::from_bytes(&bytes[start..start + len])
                .map_err(|r| AuditError::BadHeader(r.to_string()))?;
            entries.push(entry);
            c.set_position((start + len) as u64);
        }
        let head = entries.last().map_or(GENESIS_HASH, AuditEntry::digest);
        let file = OpenOptions::new().append(true).open(path)?;
        Ok(AuditLog { verifying_key: stored, signing_key, entries, head, file: Some(file) })
    }

    /// Appends and signs `record`; returns the new head digest.
    pub fn append(&mut self, record: AuditRecord) -> Result<[u8; 32], AuditError> {
        let key = self.signing_key.as_ref().ok_or(AuditError::SigningKeyUnavailable)?;
        let mut entry = AuditEntry { record, prev_hash: self.head, scheme: SCHEME_ED25519.to_string(), signature: Vec::new() };
        entry.signature = key.sign(&entry.signed_bytes()).to_bytes().to_vec();
        let raw = entry.to_bytes();
        if let Some(f) = &mut self.file {
            let mut framed = Vec::with_capacity(4 + raw.len());
            framed.write_u32::<LittleEndian>(raw.len() as u32)?;
            framed.extend_from_slice(&raw);
            f.write_all(&framed)?;
            f.flush()?;
        }
        self.head = Sha256::digest(&raw).into();
        self.entries.push(entry);
        Ok(self.head)
    }

    pub fn entries(&self) -> &[AuditEntry] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn head(&self) -> [u8; 32] {
        self.head
    }

    pub fn verifying_key(&self) -> VerifyingKey {
        self.verifying_key
    }

    pub fn verify(&self) -> Result<(), ChainFailure> {
        verify_entries(&self.entries, &self.verifying_key)
    }

    /// The complete file image: header then length-prefixed entries.
    pub fn to_file_bytes(&self) -> Vec<u8> {
        let mut out = header_bytes(&self.verifying_key);
        for e in &self.entries {
            let raw = e.to_bytes();
            out.write_u32::<LittleEndian>(raw.len() as u32).unwrap();
            out.extend_from_slice(&raw);
        }
        out
    }

    /// Writes a copy of the log to `path` (the shore export).
    pub fn export(&self, path: &Path) -> Result<(), AuditError> {
        std::fs::write(path, self.to_file_bytes())?;
        Ok(())
    }
}
