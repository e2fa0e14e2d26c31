//! Append-only hash-chained ledger of `<uav_id, public key, reputation>`
//! tuples. Single trusted writer, no consensus: the chain is an audit store.
//! Latest-record retrieval scans newest-to-oldest.

use crate::crypto::G1Elem;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

/// Fixed identity width on the wire and in storage.
pub const UAV_ID_BYTES: usize = 20;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum LedgerError {
    #[error("a block must carry at least one transaction")]
    EmptyTransactionList,
    #[error("reputation may only move by one unit per update (prior {prior}, proposed {proposed})")]
    ReputationDelta { prior: i64, proposed: i64 },
    #[error("first reputation record must be zero, got {0}")]
    NonZeroInitialReputation(i64),
    #[error("malformed chain encoding: {0}")]
    MalformedEncoding(String),
}

/// 20-byte UAV identity. Arbitrary labels are folded down by hashing.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct UavId(pub [u8; UAV_ID_BYTES]);

impl UavId {
    pub fn from_label(label: &str) -> Self {
        let digest = Sha256::digest(label.as_bytes());
        let mut id = [0u8; UAV_ID_BYTES];
        id.copy_from_slice(&digest[..UAV_ID_BYTES]);
        UavId(id)
    }

    pub fn as_bytes(&self) -> &[u8] {
        &self.0
    }
}

impl Serialize for UavId {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&hex::encode(self.0))
    }
}

impl<'de> Deserialize<'de> for UavId {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let text = String::deserialize(d)?;
        let bytes = hex::decode(&text).map_err(serde::de::Error::custom)?;
        let arr: [u8; UAV_ID_BYTES] = bytes
            .try_into()
            .map_err(|_| serde::de::Error::custom("bad UavId width"))?;
        Ok(UavId(arr))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LedgerRecord {
    pub uav_id: UavId,
    pub pk_u: G1Elem,
    pub rep: i64,
}

impl LedgerRecord {
    fn canonical_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(self.uav_id.as_bytes());
        out.extend_from_slice(&self.pk_u.to_bytes());
        out.extend_from_slice(&self.rep.to_be_bytes());
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Block {
    pub index: u64,
    pub prev_hash: [u8; 32],
    pub timestamp_ms: u64,
    pub txs: Vec<LedgerRecord>,
    pub hash: [u8; 32],
}

impl Block {
    fn compute_hash(
        digest_algo: &str,
        index: u64,
        prev_hash: &[u8; 32],
        timestamp_ms: u64,
        txs: &[LedgerRecord],
    ) -> [u8; 32] {
        // only sha-256 is wired up; the algorithm tag recorded at genesis is
        // still hashed so a relabeled chain fails validation
        let mut hasher = Sha256::new();
        hasher.update(digest_algo.as_bytes());
        hasher.update(index.to_be_bytes());
        hasher.update(prev_hash);
        hasher.update(timestamp_ms.to_be_bytes());
        hasher.update((txs.len() as u32).to_be_bytes());
        for tx in txs {
            hasher.update(tx.canonical_bytes());
        }
        hasher.finalize().into()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Chain {
    digest_algo: String,
    blocks: Vec<Block>,
}

impl Default for Chain {
    fn default() -> Self {
        Self::new()
    }
}

impl Chain {
    /// Creates a chain holding only the genesis block. The digest algorithm
    /// is fixed per chain and recorded at genesis.
    pub fn new() -> Self {
        let digest_algo = "sha-256".to_string();
        let prev_hash = [0u8; 32];
        let hash = Block::compute_hash(&digest_algo, 0, &prev_hash, 0, &[]);
        Chain {
            digest_algo,
            blocks: vec![Block {
                index: 0,
                prev_hash,
                timestamp_ms: 0,
                txs: Vec::new(),
                hash,
            }],
        }
    }

    /// Reassembles a chain from raw blocks without validation; callers are
    /// expected to run `validate_chain`. Used by import paths and by
    /// tamper-detection experiments.
    pub fn from_parts(digest_algo: String, blocks: Vec<Block>) -> Self {
        Chain { digest_algo, blocks }
    }

    pub fn blocks(&self) -> &[Block] {
        &self.blocks
    }

    pub fn blocks_mut(&mut self) -> &mut Vec<Block> {
        &mut self.blocks
    }

    pub fn digest_algo(&self) -> &str {
        &self.digest_algo
    }

    pub fn head(&self) -> &Block {
        self.blocks.last().expect("genesis always present")
    }

    pub fn append_block(
        &mut self,
        txs: Vec<LedgerRecord>,
        timestamp_ms: u64,
    ) -> Result<&Block, LedgerError> {
        if txs.is_empty() {
            return Err(LedgerError::EmptyTransactionList);
        }
        let index = self.head().index + 1;
        let prev_hash = self.head().hash;
        let hash = Block::compute_hash(&self.digest_algo, index, &prev_hash, timestamp_ms, &txs);
        self.blocks.push(Block {
            index,
            prev_hash,
            timestamp_ms,
            txs,
            hash,
        });
        Ok(self.head())
    }

    /// Newest-to-oldest scan for the most recent record of `uav_id`.
    pub fn latest_record(&self, uav_id: &UavId) -> Option<&LedgerRecord> {
        self.blocks
            .iter()
            .rev()
            .flat_map(|b| b.txs.iter().rev())
            .find(|r| &r.uav_id == uav_id)
    }

    /// Appends a one-transaction reputation update. The new value must sit
    /// exactly one unit away from the prior record; a first record must be
    /// zero.
    pub fn record_reputation(
        &mut self,
        uav_id: UavId,
        pk_u: G1Elem,
        new_rep: i64,
        timestamp_ms: u64,
    ) -> Result<&Block, LedgerError> {
        match self.latest_record(&uav_id) {
            Some(prior) => {
                if (new_rep - prior.rep).abs() != 1 {
                    return Err(LedgerError::ReputationDelta {
                        prior: prior.rep,
                        proposed: new_rep,
                    });
                }
            }
            None => {
                if new_rep != 0 {
                    return Err(LedgerError::NonZeroInitialReputation(new_rep));
                }
            }
        }
        self.append_block(
            vec![LedgerRecord {
                uav_id,
                pk_u,
                rep: new_rep,
            }],
            timestamp_ms,
        )
    }

    /// Registration record: a fresh identity starts at reputation zero; a
    /// re-registration carries the prior reputation forward unchanged.
    pub fn record_registration(
        &mut self,
        uav_id: UavId,
        pk_u: G1Elem,
        timestamp_ms: u64,
    ) -> Result<&Block, LedgerError> {
        let rep = self.latest_record(&uav_id).map(|r| r.rep).unwrap_or(0);
        self.append_block(vec![LedgerRecord { uav_id, pk_u, rep }], timestamp_ms)
    }

    /// Recomputes every hash and link. Any single-byte mutation of committed
    /// content makes this return false.
    pub fn validate_chain(&self) -> bool {
        for (i, block) in self.blocks.iter().enumerate() {
            let expected = Block::compute_hash(
                &self.digest_algo,
                block.index,
                &block.prev_hash,
                block.timestamp_ms,
                &block.txs,
            );
            if block.hash != expected || block.index != i as u64 {
                return false;
            }
            if i == 0 {
                if block.prev_hash != [0u8; 32] {
                    return false;
                }
            } else if block.prev_hash != self.blocks[i - 1].hash {
                return false;
            }
        }
        true
    }

    /// Replays the chain and returns the UAV's reputation values in block
    /// order.
    pub fn reputation_history(&self, uav_id: &UavId) -> Vec<i64> {
        self.blocks
            .iter()
            .flat_map(|b| b.txs.iter())
            .filter(|r| &r.uav_id == uav_id)
            .map(|r| r.rep)
            .collect()
    }

    // -- export / import ----------------------------------------------------

    /// Length-prefixed binary export; round-trips losslessly.
    pub fn export_binary(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(b"ZTLG");
        write_bytes(&mut out, self.digest_algo.as_bytes());
        out.extend_from_slice(&(self.blocks.len() as u32).to_be_bytes());
        for b in &self.blocks {
            out.extend_from_slice(&b.index.to_be_bytes());
            out.extend_from_slice(&b.prev_hash);
            out.extend_from_slice(&b.timestamp_ms.to_be_bytes());
            out.extend_from_slice(&(b.txs.len() as u32).to_be_bytes());
            for tx in &b.txs {
                out.extend_from_slice(tx.uav_id.as_bytes());
                out.extend_from_slice(&tx.pk_u.to_bytes());
                out.extend_from_slice(&tx.rep.to_be_bytes());
            }
            out.extend_from_slice(&b.hash);
        }
        out
    }

    pub fn import_binary(bytes: &[u8]) -> Result<Chain, LedgerError> {
        let mut cur = Cursor { bytes, pos: 0 };
        let magic = cur.take(4)?;
        if magic != b"ZTLG" {
            return Err(LedgerError::MalformedEncoding("bad magic".into()));
        }
        let algo = String::from_utf8(cur.take_prefixed()?.to_vec())
            .map_err(|_| LedgerError::MalformedEncoding("digest algo".into()))?;
        let n_blocks = cur.take_u32()? as usize;
        let mut blocks = Vec::with_capacity(n_blocks);
        for _ in 0..n_blocks {
            let index = cur.take_u64()?;
            let prev_hash: [u8; 32] = cur.take(32)?.try_into().unwrap();
            let timestamp_ms = cur.take_u64()?;
            let n_txs = cur.take_u32()? as usize;
            let mut txs = Vec::with_capacity(n_txs);
            for _ in 0..n_txs {
                let uav_id: [u8; UAV_ID_BYTES] =
                    cur.take(UAV_ID_BYTES)?.try_into().unwrap();
                let pk_bytes = cur.take(crate::crypto::G1_BYTES)?;
                let pk_u = G1Elem::from_bytes(pk_bytes)
                    .map_err(|e| LedgerError::MalformedEncoding(e.to_string()))?;
                let rep = cur.take_i64()?;
                txs.push(LedgerRecord {
                    uav_id: UavId(uav_id),
                    pk_u,
                    rep,
                });
            }
            let hash: [u8; 32] = cur.take(32)?.try_into().unwrap();
            blocks.push(Block {
                index,
                prev_hash,
                timestamp_ms,
                txs,
                hash,
            });
        }
        if cur.pos != bytes.len() {
            return Err(LedgerError::MalformedEncoding("trailing bytes".into()));
        }
        Ok(Chain::from_parts(algo, blocks))
    }

    /// JSON debug dump; round-trips through `from_json`.
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("chain JSON")
    }

    pub fn from_json(text: &str) -> Result<Chain, LedgerError> {
        serde_json::from_str(text).map_err(|e| LedgerError::MalformedEncoding(e.to_string()))
    }
}

fn write_bytes(out: &mut Vec<u8>, bytes: &[u8]) {
    out.extend_from_slice(&(bytes.len() as u32).to_be_bytes());
    out.extend_from_slice(bytes);
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], LedgerError> {
        if self.pos + n > self.bytes.len() {
            return Err(LedgerError::MalformedEncoding("truncated".into()));
        }
        let out = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(out)
    }

    fn take_prefixed(&mut self) -> Result<&'a [u8], LedgerError> {
        let n = self.take_u32()? as usize;
        self.take(n)
    }

    fn take_u32(&mut self) -> Result<u32, LedgerError> {
        Ok(u32::from_be_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn take_u64(&mut self) -> Result<u64, LedgerError> {
        Ok(u64::from_be_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn take_i64(&mut self) -> Result<i64, LedgerError> {
        Ok(i64::from_be_bytes(self.take(8)?.try_into().unwrap()))
    }
}
