//! Split-connection transport acceleration for long-delay, lossy links.
//!
//! The crate is organised bottom-up:
//!
//! * [`galois`]: GF(2^8) arithmetic and coding-coefficient generation.
//! * [`fec`]: sliding-window random linear streaming code with on-the-fly elimination.
//! * [`alde`]: end-to-end block encryption that proxies forward without decrypting.
//! * [`transport`]: rate-based congestion control, pacing, acks and loss estimation.
//! * [`queueing`]: finite-buffer queue models and a discrete-event oracle.
//! * [`ntsp`]: proxy sessions, stream mapping, backpressure and store-and-forward.
//! * [`netsim`]: deterministic discrete-event link simulator.
//! * [`harness`]: experiment runner, metrics and CSV artifacts.

pub mod alde;
pub mod fec;
pub mod galois;
pub mod harness;
pub mod netsim;
pub mod ntsp;
pub mod queueing;
pub mod transport;
