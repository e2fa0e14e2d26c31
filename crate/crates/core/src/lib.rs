//! Zero-trust authentication for multi-UAV networks.
//!
//! A single-packet-authorization (SPA) flow where each UAV's key pair is
//! bound to its hardware through a PUF challenge-response at registration,
//! access requests are signcrypted under identity-based keys on a bilinear
//! pairing, an SDP controller gates registration on an on-chain reputation
//! score, and every reputation change lands on an append-only hash-chained
//! ledger. A default-deny gateway opens connections only on controller
//! policy.
//!
//! Modules:
//! - [`crypto`]: pairing-group algebra, the three hash oracles, the stream
//!   cipher and the operation counter.
//! - [`puf`]: software challenge-response function standing in for the
//!   physical device.
//! - [`ledger`]: the hash-chained reputation ledger.
//! - [`protocol`]: KGC, UAV, controller and gateway state machines plus the
//!   wire formats.
//! - [`sim`]: deterministic in-memory network with a scripted Dolev-Yao
//!   adversary.
//! - [`bench`]: primitive timings, per-phase operation counts and byte
//!   accounting.

pub mod bench;
pub mod crypto;
pub mod ledger;
pub mod protocol;
pub mod puf;
pub mod sim;
