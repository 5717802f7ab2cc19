//! C ABI over the ipnpep FEC codec, ALDE block encryption and queue models.
//!
//! Every object is an opaque handle created by a `*_new` function and
//! released with the matching `*_free`. Functions return an [`IpnpepStatus`];
//! outputs go through caller-provided pointers. Byte outputs are written to a
//! caller buffer of `cap` bytes, and the required length is always stored in
//! `out_len`, so a call that fails with `IPNPEP_STATUS_BUFFER_TOO_SMALL` can be
//! retried with a larger buffer.

use std::collections::VecDeque;
use std::ffi::c_char;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;
use std::slice;

use ipnpep::alde::{self, AldeBlock, AldeError, KeyCache, StreamReceiver, StreamSubkey};
use ipnpep::fec::{self, Decoder, DecoderConfig, Encoder, EncoderConfig, FecError, Frame, RepairDecision};
use ipnpep::galois;
use ipnpep::queueing::{self, QueueParams};

/// Result code of every fallible call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum IpnpepStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    BufferTooSmall = 3,
    /// Nothing to return, e.g. no repair due or no delivered symbol queued.
    Empty = 4,
    MalformedFrame = 5,
    HighWater = 6,
    Tamper = 7,
    Replay = 8,
    NoKey = 9,
    KeyUpdateRequired = 10,
    Numeric = 11,
    Panic = 255,
}

/// Repair kind reported by [`ipnpep_encoder_repair_due`].
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum IpnpepRepairKind {
    None = 0,
    Normal = 1,
    Tail = 2,
}

/// Queue model parameters; see [`ipnpep_queue_k_opt`].
#[repr(C)]
#[derive(Debug, Clone, Copy)]
pub struct IpnpepQueueParams {
    pub bw_in: f64,
    pub bw_out: f64,
    pub rtt_in: f64,
    pub rtt_out: f64,
    pub n_streams: u32,
    pub k_bytes: f64,
    pub packet_bytes: f64,
}

/// Sliding-window FEC encoder.
pub struct IpnpepEncoder {
    inner: Encoder,
}

/// Sliding-window FEC decoder with a queue of delivered source symbols.
pub struct IpnpepDecoder {
    inner: Decoder,
    ready: VecDeque<(u64, Vec<u8>)>,
}

/// Sending half of one ALDE stream.
pub struct IpnpepAldeSender {
    subkey: StreamSubkey,
}

/// Receiving half of one ALDE stream.
pub struct IpnpepAldeReceiver {
    cache: KeyCache,
    stream: StreamReceiver,
}

impl From<FecError> for IpnpepStatus {
    fn from(e: FecError) -> Self {
        match e {
            FecError::Oversized(_) => IpnpepStatus::InvalidArgument,
            FecError::EmptyWindow => IpnpepStatus::Empty,
            FecError::Frame(_) => IpnpepStatus::MalformedFrame,
            FecError::HighWater { .. } => IpnpepStatus::HighWater,
        }
    }
}

impl From<AldeError> for IpnpepStatus {
    fn from(e: AldeError) -> Self {
        match e {
            AldeError::EmptySecret | AldeError::Oversized(_) => IpnpepStatus::InvalidArgument,
            AldeError::KeyUpdateRequired => IpnpepStatus::KeyUpdateRequired,
            AldeError::Tamper => IpnpepStatus::Tamper,
            AldeError::Replay => IpnpepStatus::Replay,
            AldeError::NoKey => IpnpepStatus::NoKey,
            AldeError::Malformed(_) => IpnpepStatus::MalformedFrame,
        }
    }
}

fn guard(f: impl FnOnce() -> Result<(), IpnpepStatus>) -> IpnpepStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => IpnpepStatus::Ok,
        Ok(Err(s)) => s,
        Err(_) => IpnpepStatus::Panic,
    }
}

unsafe fn input<'a>(data: *const u8, len: usize) -> Result<&'a [u8], IpnpepStatus> {
    if len == 0 {
        return Ok(&[]);
    }
    if data.is_null() {
        return Err(IpnpepStatus::NullPointer);
    }
    Ok(slice::from_raw_parts(data, len))
}

unsafe fn handle<'a, T>(p: *mut T) -> Result<&'a mut T, IpnpepStatus> {
    p.as_mut().ok_or(IpnpepStatus::NullPointer)
}

unsafe fn store<T>(out: *mut T, value: T) -> Result<(), IpnpepStatus> {
    if out.is_null() {
        return Err(IpnpepStatus::NullPointer);
    }
    out.write(value);
    Ok(())
}

unsafe fn emit(bytes: &[u8], out: *mut u8, cap: usize, out_len: *mut usize) -> Result<(), IpnpepStatus> {
    store(out_len, bytes.len())?;
    if bytes.len() > cap {
        return Err(IpnpepStatus::BufferTooSmall);
    }
    if !bytes.is_empty() {
        if out.is_null() {
            return Err(IpnpepStatus::NullPointer);
        }
        ptr::copy_nonoverlapping(bytes.as_ptr(), out, bytes.len());
    }
    Ok(())
}

/// Fails before any state changes when `needed` bytes will not fit.
unsafe fn reserve(needed: usize, cap: usize, out_len: *mut usize) -> Result<(), IpnpepStatus> {
    if needed > cap {
        store(out_len, needed)?;
        return Err(IpnpepStatus::BufferTooSmall);
    }
    Ok(())
}

unsafe fn into_handle<T>(out: *mut *mut T, value: T) -> Result<(), IpnpepStatus> {
    store(out, Box::into_raw(Box::new(value)))
}

unsafe fn free_handle<T>(p: *mut T) {
    if !p.is_null() {
        drop(Box::from_raw(p));
    }
}

fn probability(p: f64) -> Result<f64, IpnpepStatus> {
    if (0.0..=1.0).contains(&p) {
        Ok(p)
    } else {
        Err(IpnpepStatus::InvalidArgument)
    }
}

/// Static description of a status code. Never null.
#[no_mangle]
pub extern "C" fn ipnpep_status_str(status: IpnpepStatus) -> *const c_char {
    let s: &'static [u8] = match status {
        IpnpepStatus::Ok => b"ok\0",
        IpnpepStatus::NullPointer => b"null pointer\0",
        IpnpepStatus::InvalidArgument => b"invalid argument\0",
        IpnpepStatus::BufferTooSmall => b"buffer too small\0",
        IpnpepStatus::Empty => b"nothing available\0",
        IpnpepStatus::MalformedFrame => b"malformed frame\0",
        IpnpepStatus::HighWater => b"decoder buffer limit exceeded\0",
        IpnpepStatus::Tamper => b"authentication failed\0",
        IpnpepStatus::Replay => b"replayed block\0",
        IpnpepStatus::NoKey => b"unknown key id\0",
        IpnpepStatus::KeyUpdateRequired => b"key update required\0",
        IpnpepStatus::Numeric => b"numerically unstable\0",
        IpnpepStatus::Panic => b"internal error\0",
    };
    s.as_ptr().cast()
}

/// GF(2^8) coefficient for repair `k` and source `i`.
#[no_mangle]
pub extern "C" fn ipnpep_gf_coefficient(seed: u64, k: u64, i: u64) -> u8 {
    galois::coefficient(seed, k, i)
}

// ---- FEC encoder ----

/// # Safety
/// `out` must be a valid pointer to a handle slot.
#[no_mangle]
pub unsafe extern "C" fn ipnpep_encoder_new(seed: u64, delta: f64, initial_pe: f64, out: *mut *mut IpnpepEncoder) -> IpnpepStatus {
    guard(|| {
        let delta = probability(delta)?;
        let initial_pe = probability(initial_pe)?;
        into_handle(out, IpnpepEncoder { inner: Encoder::new(EncoderConfig { seed, delta, initial_pe }) })
    })
}

/// # Safety
/// `enc` must be null or a handle from [`ipnpep_encoder_new`] not yet freed.
#[no_mangle]
pub unsafe extern "C" fn ipnpep_encoder_free(enc: *mut IpnpepEncoder) {
    free_handle(enc)
}

/// Adds a source symbol and writes its wire frame.
///
/// # Safety
/// `payload` must point to `len` readable bytes and `out` to `cap` writable bytes.
#[no_mangle]
pub unsafe extern "C" fn ipnpep_encoder_source(
    enc: *mut IpnpepEncoder,
    payload: *const u8,
    len: usize,
    out: *mut u8,
    cap: usize,
    out_len: *mut usize,
) -> IpnpepStatus {
    guard(|| {
        let enc = handle(enc)?;
        let payload = input(payload, len)?;
        reserve(fec::SOURCE_HEADER_LEN + payload.len(), cap, out_len)?;
        let frame = enc.inner.encode_source(payload)?;
        emit(&Frame::Source(frame).to_bytes(), out, cap, out_len)
    })
}

/// Reports which repair, if any, the scheduling rule asks for.
///
/// # Safety
/// `enc` must be a live encoder handle and `kind` writable.
#[no_mangle]
pub unsafe extern "C" fn ipnpep_encoder_repair_due(
    enc: *mut IpnpepEncoder,
    send_buffer_nonempty: bool,
    kind: *mut IpnpepRepairKind,
) -> IpnpepStatus {
    guard(|| {
        let enc = handle(enc)?;
        let k = match enc.inner.should_send_repair(send_buffer_nonempty) {
            RepairDecision::None => IpnpepRepairKind::None,
            RepairDecision::Normal => IpnpepRepairKind::Normal,
            RepairDecision::TailProtection => IpnpepRepairKind::Tail,
        };
        store(kind, k)
    })
}

/// Builds a repair frame of the given kind over the current window.
///
/// # Safety
/// `out` must point to `cap` writable bytes.
#[no_mangle]
pub unsafe extern "C" fn ipnpep_encoder_repair(
    enc: *mut IpnpepEncoder,
    kind: IpnpepRepairKind,
    out: *mut u8,
    cap: usize,
    out_len: *mut usize,
) -> IpnpepStatus {
    guard(|| {
        let enc = handle(enc)?;
        let kind = match kind {
            IpnpepRepairKind::None => return Err(IpnpepStatus::InvalidArgument),
            IpnpepRepairKind::Normal => RepairDecision::Normal,
            IpnpepRepairKind::Tail => RepairDecision::TailProtection,
        };
        reserve(fec::REPAIR_FRAME_LEN, cap, out_len)?;
        let frame = enc.inner.make_repair(kind)?;
        emit(&Frame::Repair(frame).to_bytes(), out, cap, out_len)
    })
}

/// Applies a cumulative acknowledgement up to and including `acked`.
///
/// # Safety
/// `enc` must be a live encoder handle.
#[no_mangle]
pub unsafe extern "C" fn ipnpep_encoder_ack(enc: *mut IpnpepEncoder, acked: u64) -> IpnpepStatus {
    guard(|| {
        handle(enc)?.inner.on_ack(acked);
        Ok(())
    })
}

/// Replaces the encoder's loss estimate.
///
/// # Safety
/// `enc` must be a live encoder handle.
#[no_mangle]
pub unsafe extern "C" fn ipnpep_encoder_set_loss(enc: *mut IpnpepEncoder, p_e: f64) -> IpnpepStatus {
    guard(|| {
        let p = probability(p_e)?;
        handle(enc)?.inner.set_loss_estimate(p);
        Ok(())
    })
}

/// Fraction of sent frames that were repairs.
///
/// # Safety
/// `enc` must be a live encoder handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn ipnpep_encoder_redundancy(enc: *mut IpnpepEncoder, out: *mut f64) -> IpnpepStatus {
    guard(|| {
        let r = handle(enc)?.inner.redundancy_ratio();
        store(out, r)
    })
}

// ---- FEC decoder ----

/// # Safety
/// `out` must be a valid pointer to a handle slot.
#[no_mangle]
pub unsafe extern "C" fn ipnpep_decoder_new(seed: u64, high_water: usize, out: *mut *mut IpnpepDecoder) -> IpnpepStatus {
    guard(|| {
        if high_water == 0 {
            return Err(IpnpepStatus::InvalidArgument);
        }
        let inner = Decoder::new(DecoderConfig { seed, high_water });
        into_handle(out, IpnpepDecoder { inner, ready: VecDeque::new() })
    })
}

/// # Safety
/// `dec` must be null or a handle from [`ipnpep_decoder_new`] not yet freed.
#[no_mangle]
pub unsafe extern "C" fn ipnpep_decoder_free(dec: *mut IpnpepDecoder) {
    free_handle(dec)
}

/// Feeds one wire frame. Source symbols that become available are queued for
/// [`ipnpep_decoder_next`].
///
/// # Safety
/// `frame` must point to `len` readable bytes.
#[no_mangle]
pub unsafe extern "C" fn ipnpep_decoder_ingest(dec: *mut IpnpepDecoder, frame: *const u8, len: usize) -> IpnpepStatus {
    guard(|| {
        let dec = handle(dec)?;
        let frame = Frame::decode(input(frame, len)?)?;
        let report = dec.inner.ingest(frame)?;
        dec.ready.extend(report.delivered_now);
        Ok(())
    })
}

/// Pops the next delivered source symbol. Returns `IPNPEP_STATUS_EMPTY` when none is
/// queued; on `IPNPEP_STATUS_BUFFER_TOO_SMALL` the symbol stays queued.
///
/// # Safety
/// `id` and `out_len` must be writable and `out` must point to `cap` bytes.
#[no_mangle]
pub unsafe extern "C" fn ipnpep_decoder_next(
    dec: *mut IpnpepDecoder,
    id: *mut u64,
    out: *mut u8,
    cap: usize,
    out_len: *mut usize,
) -> IpnpepStatus {
    guard(|| {
        let dec = handle(dec)?;
        let Some((sid, payload)) = dec.ready.front() else { return Err(IpnpepStatus::Empty) };
        store(id, *sid)?;
        emit(payload, out, cap, out_len)?;
        dec.ready.pop_front();
        Ok(())
    })
}

/// Highest id below which every source has been delivered, or -1.
///
/// # Safety
/// `dec` must be a live decoder handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn ipnpep_decoder_in_order(dec: *mut IpnpepDecoder, out: *mut i64) -> IpnpepStatus {
    guard(|| {
        let i = handle(dec)?.inner.i_ord();
        store(out, i)
    })
}

// ---- ALDE ----

fn subkey_from(secret: &[u8], stream_id: u64) -> Result<StreamSubkey, IpnpepStatus> {
    let master = alde::derive_master(secret, alde::DEFAULT_LABEL)?;
    Ok(alde::derive_subkey(&master, stream_id))
}

/// Sender for `stream_id` under an exporter secret.
///
/// # Safety
/// `secret` must point to `secret_len` readable bytes.
#[no_mangle]
pub unsafe extern "C" fn ipnpep_alde_sender_new(
    secret: *const u8,
    secret_len: usize,
    stream_id: u64,
    out: *mut *mut IpnpepAldeSender,
) -> IpnpepStatus {
    guard(|| {
        let subkey = subkey_from(input(secret, secret_len)?, stream_id)?;
        into_handle(out, IpnpepAldeSender { subkey })
    })
}

/// # Safety
/// `s` must be null or a live sender handle.
#[no_mangle]
pub unsafe extern "C" fn ipnpep_alde_sender_free(s: *mut IpnpepAldeSender) {
    free_handle(s)
}

/// Writes the 32-byte key id that opens a stream.
///
/// # Safety
/// `out` must point to `cap` writable bytes.
#[no_mangle]
pub unsafe extern "C" fn ipnpep_alde_key_id(
    s: *mut IpnpepAldeSender,
    out: *mut u8,
    cap: usize,
    out_len: *mut usize,
) -> IpnpepStatus {
    guard(|| {
        let s = handle(s)?;
        emit(&alde::key_id(&s.subkey).0, out, cap, out_len)
    })
}

/// Encrypts one block of at most 16384 bytes and writes its wire form.
///
/// # Safety
/// `plaintext` must point to `len` readable bytes and `out` to `cap` writable bytes.
#[no_mangle]
pub unsafe extern "C" fn ipnpep_alde_seal(
    s: *mut IpnpepAldeSender,
    plaintext: *const u8,
    len: usize,
    out: *mut u8,
    cap: usize,
    out_len: *mut usize,
) -> IpnpepStatus {
    guard(|| {
        let s = handle(s)?;
        let pt = input(plaintext, len)?;
        reserve(pt.len() + alde::HEADER_LEN, cap, out_len)?;
        let block = alde::seal(&mut s.subkey, pt, false)?;
        emit(&block.to_bytes(), out, cap, out_len)
    })
}

/// Receiver for `stream_id` under an exporter secret.
///
/// # Safety
/// `secret` must point to `secret_len` readable bytes.
#[no_mangle]
pub unsafe extern "C" fn ipnpep_alde_receiver_new(
    secret: *const u8,
    secret_len: usize,
    stream_id: u64,
    out: *mut *mut IpnpepAldeReceiver,
) -> IpnpepStatus {
    guard(|| {
        let subkey = subkey_from(input(secret, secret_len)?, stream_id)?;
        let cache = KeyCache::new();
        let id = cache.insert(&subkey);
        let stream = StreamReceiver::from_header(&cache, &id)?;
        into_handle(out, IpnpepAldeReceiver { cache, stream })
    })
}

/// # Safety
/// `r` must be null or a live receiver handle.
#[no_mangle]
pub unsafe extern "C" fn ipnpep_alde_receiver_free(r: *mut IpnpepAldeReceiver) {
    free_handle(r)
}

/// Authenticates and decrypts one wire block.
///
/// # Safety
/// `block` must point to `len` readable bytes and `out` to `cap` writable bytes.
#[no_mangle]
pub unsafe extern "C" fn ipnpep_alde_open(
    r: *mut IpnpepAldeReceiver,
    block: *const u8,
    len: usize,
    out: *mut u8,
    cap: usize,
    out_len: *mut usize,
) -> IpnpepStatus {
    guard(|| {
        let r = handle(r)?;
        let block = AldeBlock::from_bytes(input(block, len)?)?;
        reserve(block.ciphertext.len(), cap, out_len)?;
        let pt = alde::open(&r.cache, &mut r.stream, &block)?;
        emit(&pt, out, cap, out_len)
    })
}

// ---- queueing ----

impl From<IpnpepQueueParams> for QueueParams {
    fn from(p: IpnpepQueueParams) -> Self {
        QueueParams {
            bw_in: p.bw_in,
            bw_out: p.bw_out,
            rtt_in: p.rtt_in,
            rtt_out: p.rtt_out,
            n_streams: p.n_streams,
            k_bytes: p.k_bytes,
            packet_bytes: p.packet_bytes,
        }
    }
}

/// Per-stream buffer size in bytes that covers the bandwidth-delay product.
///
/// # Safety
/// `params` must be readable and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn ipnpep_queue_k_opt(params: *const IpnpepQueueParams, out: *mut f64) -> IpnpepStatus {
    guard(|| {
        let p: QueueParams = params.as_ref().ok_or(IpnpepStatus::NullPointer)?.to_owned().into();
        p.validate().map_err(|_| IpnpepStatus::InvalidArgument)?;
        store(out, queueing::k_opt(&p))
    })
}

/// M/M/1/K utilisation at load `rho` with `k` slots.
///
/// # Safety
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn ipnpep_queue_mm1k_utilisation(rho: f64, k: u32, out: *mut f64) -> IpnpepStatus {
    guard(|| {
        if !(rho > 0.0 && rho.is_finite()) || k == 0 {
            return Err(IpnpepStatus::InvalidArgument);
        }
        store(out, queueing::mm1k_at(rho, k, 1.0).u)
    })
}

/// M/D/1/K utilisation at load `rho` with `k` slots.
///
/// # Safety
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn ipnpep_queue_md1k_utilisation(rho: f64, k: u32, out: *mut f64) -> IpnpepStatus {
    guard(|| {
        if !(rho > 0.0 && rho.is_finite()) || k == 0 {
            return Err(IpnpepStatus::InvalidArgument);
        }
        match queueing::md1k_at(rho, k, 1.0) {
            Ok(r) => store(out, r.u),
            Err(queueing::QueueError::NumericInstability { .. }) => Err(IpnpepStatus::Numeric),
            Err(queueing::QueueError::Invalid(_)) => Err(IpnpepStatus::InvalidArgument),
        }
    })
}
