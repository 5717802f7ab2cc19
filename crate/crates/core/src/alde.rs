//! Application-layer block encryption.
//!
//! Endpoints derive a master key from an exporter secret, a subkey per stream,
//! and seal the stream into authenticated blocks that proxies forward without
//! decrypting. Wire layout of a block (big-endian):
//!
//! ```text
//! [length:2][tag:16][change_flag:1][ciphertext:length]
//! ```
//!
//! Each stream starts with the 32-byte id of its subkey. A block with
//! `change_flag = 1` carries the id of the next subkey in its first 32 plaintext
//! bytes; the receiver switches keys after that block.
//!
//! Primitives: AES-256-GCM, HKDF-SHA256, SHA-256. Nonces are the 64-bit block
//! sequence number, big-endian, left-padded to 96 bits. Associated data is
//! `stream_id:8 || generation:4 || change_flag:1`.

use std::collections::{HashMap, HashSet, VecDeque};
use std::fmt;
use std::sync::RwLock;

use aes_gcm::aead::{AeadInPlace, KeyInit};
use aes_gcm::{Aes256Gcm, Nonce, Tag};
use hkdf::Hkdf;
use sha2::{Digest, Sha256};
use thiserror::Error;

pub const MAX_PLAINTEXT: usize = 1 << 14;
pub const HEADER_LEN: usize = 2 + 16 + 1;
pub const KEY_ID_LEN: usize = 32;
/// Blocks per key before an update is mandatory.
pub const SEQ_LIMIT: u64 = 1 << 62;
/// Label used by the endpoints for the session master key.
pub const DEFAULT_LABEL: &[u8] = b"ntsp/alde/v1";

const MASTER_SALT: &[u8] = b"ipnpep alde master";
const SUBKEY_INFO: &[u8] = b"ipnpep alde stream ";
const UPDATE_INFO: &[u8] = b"ipnpep alde update";
const KEY_ID_PREFIX: &[u8] = b"ipnpep alde key id";
const REPLAY_MEMORY: usize = 4096;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum AldeError {
    #[error("exporter secret is empty")]
    EmptySecret,
    #[error("plaintext of {0} bytes exceeds the block limit")]
    Oversized(usize),
    #[error("sequence space exhausted; a key update is required")]
    KeyUpdateRequired,
    #[error("block failed authentication")]
    Tamper,
    #[error("block was already accepted")]
    Replay,
    #[error("no key for the announced key id")]
    NoKey,
    #[error("malformed block: {0}")]
    Malformed(String),
}

#[derive(Clone, PartialEq, Eq)]
pub struct MasterKey {
    key: [u8; 32],
    pub generation: u32,
}

impl MasterKey {
    pub fn material(&self) -> &[u8; 32] {
        &self.key
    }
}

impl fmt::Debug for MasterKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("MasterKey").field("generation", &self.generation).finish_non_exhaustive()
    }
}

#[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct KeyId(pub [u8; KEY_ID_LEN]);

impl fmt::Debug for KeyId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "KeyId(")?;
        for b in &self.0[..6] {
            write!(f, "{b:02x}")?;
        }
        write!(f, "..)")
    }
}

#[derive(Clone, PartialEq, Eq)]
pub struct StreamSubkey {
    key: [u8; 32],
    pub stream_id: u64,
    pub send_seq: u64,
    pub recv_seq: u64,
    pub generation: u32,
}

impl StreamSubkey {
    pub fn material(&self) -> &[u8; 32] {
        &self.key
    }

    /// Subkey with explicit material, for tests and key-guessing experiments.
    pub fn from_material(key: [u8; 32], stream_id: u64, generation: u32) -> Self {
        Self { key, stream_id, send_seq: 0, recv_seq: 0, generation }
    }
}

impl fmt::Debug for StreamSubkey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("StreamSubkey")
            .field("stream_id", &self.stream_id)
            .field("generation", &self.generation)
            .field("send_seq", &self.send_seq)
            .field("recv_seq", &self.recv_seq)
            .finish_non_exhaustive()
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AldeBlock {
    pub tag: [u8; 16],
    pub change_flag: bool,
    pub ciphertext: Vec<u8>,
}

fn expand(prk: &[u8; 32], info: &[&[u8]]) -> [u8; 32] {
    let hk = Hkdf::<Sha256>::from_prk(prk).expect("32-byte prk");
    let mut out = [0u8; 32];
    hk.expand_multi_info(info, &mut out).expect("32-byte output");
    out
}

pub fn derive_master(exporter_secret: &[u8], context_label: &[u8]) -> Result<MasterKey, AldeError> {
    if exporter_secret.is_empty() {
        return Err(AldeError::EmptySecret);
    }
    let hk = Hkdf::<Sha256>::new(Some(MASTER_SALT), exporter_secret);
    let mut key = [0u8; 32];
    hk.expand(context_label, &mut key).expect("32-byte output");
    Ok(MasterKey { key, generation: 0 })
}

pub fn derive_subkey(master: &MasterKey, stream_id: u64) -> StreamSubkey {
    let key = expand(&master.key, &[SUBKEY_INFO, &stream_id.to_be_bytes()]);
    StreamSubkey { key, stream_id, send_seq: 0, recv_seq: 0, generation: 0 }
}

pub fn ratchet(subkey: &StreamSubkey) -> StreamSubkey {
    StreamSubkey {
        key: expand(&subkey.key, &[UPDATE_INFO]),
        stream_id: subkey.stream_id,
        send_seq: 0,
        recv_seq: 0,
        generation: subkey.generation + 1,
    }
}

pub fn key_id(subkey: &StreamSubkey) -> KeyId {
    key_id_of(&subkey.key)
}

fn key_id_of(key: &[u8; 32]) -> KeyId {
    let mut h = Sha256::new();
    h.update(KEY_ID_PREFIX);
    h.update(key);
    KeyId(h.finalize().into())
}

fn nonce(seq: u64) -> [u8; 12] {
    let mut n = [0u8; 12];
    n[4..].copy_from_slice(&seq.to_be_bytes());
    n
}

fn associated_data(stream_id: u64, generation: u32, change_flag: bool) -> [u8; 13] {
    let mut ad = [0u8; 13];
    ad[..8].copy_from_slice(&stream_id.to_be_bytes());
    ad[8..12].copy_from_slice(&generation.to_be_bytes());
    ad[12] = change_flag as u8;
    ad
}

pub fn seal(subkey: &mut StreamSubkey, plaintext: &[u8], change_flag: bool) -> Result<AldeBlock, AldeError> {
    if plaintext.len() > MAX_PLAINTEXT {
        return Err(AldeError::Oversized(plaintext.len()));
    }
    if subkey.send_seq >= SEQ_LIMIT {
        return Err(AldeError::KeyUpdateRequired);
    }
    let cipher = Aes256Gcm::new(&subkey.key.into());
    let mut buf = plaintext.to_vec();
    let ad = associated_data(subkey.stream_id, subkey.generation, change_flag);
    let tag = cipher
        .encrypt_in_place_detached(Nonce::from_slice(&nonce(subkey.send_seq)), &ad, &mut buf)
        .map_err(|_| AldeError::Oversized(plaintext.len()))?;
    subkey.send_seq += 1;
    Ok(AldeBlock { tag: tag.into(), change_flag, ciphertext: buf })
}

/// Seals `data` under the current key announcing `next`, then switches the
/// sender to `next`.
pub fn seal_key_switch(subkey: &mut StreamSubkey, next: StreamSubkey, data: &[u8]) -> Result<AldeBlock, AldeError> {
    if data.len() + KEY_ID_LEN > MAX_PLAINTEXT {
        return Err(AldeError::Oversized(data.len() + KEY_ID_LEN));
    }
    let mut pt = Vec::with_capacity(KEY_ID_LEN + data.len());
    pt.extend_from_slice(&key_id(&next).0);
    pt.extend_from_slice(data);
    let block = seal(subkey, &pt, true)?;
    *subkey = next;
    Ok(block)
}

impl AldeBlock {
    pub fn wire_len(&self) -> usize {
        HEADER_LEN + self.ciphertext.len()
    }

    pub fn encode(&self, out: &mut Vec<u8>) {
        out.extend_from_slice(&(self.ciphertext.len() as u16).to_be_bytes());
        out.extend_from_slice(&self.tag);
        out.push(self.change_flag as u8);
        out.extend_from_slice(&self.ciphertext);
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut v = Vec::with_capacity(self.wire_len());
        self.encode(&mut v);
        v
    }

    /// Parses one block from the front of `buf`, returning it and the bytes
    /// consumed, or `None` if `buf` does not yet hold a whole block.
    pub fn parse(buf: &[u8]) -> Result<Option<(AldeBlock, usize)>, AldeError> {
        if buf.len() < HEADER_LEN {
            return Ok(None);
        }
        let len = u16::from_be_bytes([buf[0], buf[1]]) as usize;
        if len > MAX_PLAINTEXT {
            return Err(AldeError::Malformed(format!("length field {len}")));
        }
        let flag = match buf[18] {
            0 => false,
            1 => true,
            f => return Err(AldeError::Malformed(format!("change flag {f}"))),
        };
        if buf.len() < HEADER_LEN + len {
            return Ok(None);
        }
        let block = AldeBlock {
            tag: buf[2..18].try_into().unwrap(),
            change_flag: flag,
            ciphertext: buf[HEADER_LEN..HEADER_LEN + len].to_vec(),
        };
        Ok(Some((block, HEADER_LEN + len)))
    }

    pub fn from_bytes(buf: &[u8]) -> Result<AldeBlock, AldeError> {
        match AldeBlock::parse(buf)? {
            Some((b, n)) if n == buf.len() => Ok(b),
            Some(_) => Err(AldeError::Malformed("trailing bytes".into())),
            None => Err(AldeError::Malformed("truncated block".into())),
        }
    }
}

/// Receiver-side key table indexed by key id. Readers may run concurrently;
/// insertion takes the write lock.
#[derive(Debug, Default)]
pub struct KeyCache {
    keys: RwLock<HashMap<KeyId, StreamSubkey>>,
}

impl KeyCache {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&self, subkey: &StreamSubkey) -> KeyId {
        let id = key_id(subkey);
        let mut fresh = subkey.clone();
        fresh.send_seq = 0;
        fresh.recv_seq = 0;
        self.keys.write().expect("key cache poisoned").insert(id, fresh);
        id
    }

    pub fn get(&self, id: &KeyId) -> Option<StreamSubkey> {
        self.keys.read().expect("key cache poisoned").get(id).cloned()
    }

    pub fn len(&self) -> usize {
        self.keys.read().expect("key cache poisoned").len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Receive state of one stream: the current subkey plus the tags of recently
/// accepted blocks.
#[derive(Debug, Clone)]
pub struct StreamReceiver {
    pub subkey: StreamSubkey,
    seen: HashSet<[u8; 16]>,
    order: VecDeque<[u8; 16]>,
}

impl StreamReceiver {
    pub fn new(subkey: StreamSubkey) -> Self {
        Self { subkey, seen: HashSet::new(), order: VecDeque::new() }
    }

    /// Looks up the key announced in a stream header.
    pub fn from_header(cache: &KeyCache, id: &KeyId) -> Result<Self, AldeError> {
        cache.get(id).map(Self::new).ok_or(AldeError::NoKey)
    }

    fn remember(&mut self, tag: [u8; 16]) {
        if self.seen.insert(tag) {
            self.order.push_back(tag);
            if self.order.len() > REPLAY_MEMORY {
                let old = self.order.pop_front().unwrap();
                self.seen.remove(&old);
            }
        }
    }
}

/// Authenticates and decrypts the next block of a stream.
///
/// For a key-switch block the announced id is resolved against the cache, then
/// against the ratchet of the current key; the returned plaintext excludes the
/// 32-byte id.
pub fn open(cache: &KeyCache, stream: &mut StreamReceiver, block: &AldeBlock) -> Result<Vec<u8>, AldeError> {
    if stream.seen.contains(&block.tag) {
        return Err(AldeError::Replay);
    }
    let sk = &stream.subkey;
    let cipher = Aes256Gcm::new(&sk.key.into());
    let ad = associated_data(sk.stream_id, sk.generation, block.change_flag);
    let mut buf = block.ciphertext.clone();
    cipher
        .decrypt_in_place_detached(Nonce::from_slice(&nonce(sk.recv_seq)), &ad, &mut buf, Tag::from_slice(&block.tag))
        .map_err(|_| AldeError::Tamper)?;
    if !block.change_flag {
        stream.subkey.recv_seq += 1;
        stream.remember(block.tag);
        return Ok(buf);
    }
    if buf.len() < KEY_ID_LEN {
        return Err(AldeError::Malformed("key-switch block shorter than a key id".into()));
    }
    let announced = KeyId(buf[..KEY_ID_LEN].try_into().unwrap());
    let next = match cache.get(&announced) {
        Some(k) => k,
        None => {
            let r = ratchet(&stream.subkey);
            if key_id(&r) != announced {
                return Err(AldeError::NoKey);
            }
            cache.insert(&r);
            r
        }
    };
    stream.remember(block.tag);
    stream.subkey = next;
    Ok(buf.split_off(KEY_ID_LEN))
}

/// Incremental parser for a received stream: the key-id header, then blocks.
#[derive(Debug, Default)]
pub struct BlockReader {
    buf: Vec<u8>,
    header: Option<KeyId>,
}

impl BlockReader {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, bytes: &[u8]) {
        self.buf.extend_from_slice(bytes);
    }

    pub fn header(&mut self) -> Option<KeyId> {
        if self.header.is_none() && self.buf.len() >= KEY_ID_LEN {
            let id = KeyId(self.buf[..KEY_ID_LEN].try_into().unwrap());
            self.buf.drain(..KEY_ID_LEN);
            self.header = Some(id);
        }
        self.header
    }

    /// Next complete block, once the header has been consumed.
    pub fn next_block(&mut self) -> Result<Option<AldeBlock>, AldeError> {
        if self.header().is_none() {
            return Ok(None);
        }
        match AldeBlock::parse(&self.buf)? {
            Some((b, n)) => {
                self.buf.drain(..n);
                Ok(Some(b))
            }
            None => Ok(None),
        }
    }

    pub fn pending(&self) -> usize {
        self.buf.len()
    }
}
