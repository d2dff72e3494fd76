//! Ledger and identity types shared by every layer of the simulator.
//!
//! Blocks are hashed over a fixed canonical encoding so golden traces stay
//! bit-stable:
//!
//! ```text
//! height      u64 big-endian
//! parent_hash 32 bytes
//! proposer    u64 big-endian
//! view        u64 big-endian
//! tx_id*      u64 big-endian, one per transaction, in block order
//! ```
//!
//! Signatures are simulation-grade records. [`verify`] is the only place that
//! decides validity, so real signatures can be dropped in behind it.

use std::fmt;

use serde::{Deserialize, Deserializer, Serialize, Serializer};
use sha2::{Digest as _, Sha256};
use thiserror::Error;

/// Default transaction payload when a scenario does not override it.
pub const DEFAULT_PAYLOAD_BITS: u32 = 2048;

/// 256-bit SHA-256 digest.
#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
pub struct Digest(pub [u8; 32]);

impl Digest {
    pub const ZERO: Digest = Digest([0u8; 32]);

    pub fn to_hex(&self) -> String {
        hex::encode(self.0)
    }

    pub fn from_hex(s: &str) -> Result<Self, hex::FromHexError> {
        let mut out = [0u8; 32];
        hex::decode_to_slice(s, &mut out)?;
        Ok(Digest(out))
    }

    /// Hash arbitrary bytes.
    pub fn of(bytes: &[u8]) -> Self {
        Digest(Sha256::digest(bytes).into())
    }
}

impl fmt::Debug for Digest {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Digest({})", &self.to_hex()[..16])
    }
}

impl fmt::Display for Digest {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.to_hex())
    }
}

impl Serialize for Digest {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&self.to_hex())
    }
}

impl<'de> Deserialize<'de> for Digest {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        Digest::from_hex(&s).map_err(serde::de::Error::custom)
    }
}

/// Identity of a UAV. The total order is used for every tie-break.
#[derive(
    Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Debug, Default, Serialize, Deserialize,
)]
#[serde(transparent)]
pub struct NodeId(pub u32);

impl fmt::Display for NodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "n{}", self.0)
    }
}

#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Debug, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TxKind {
    StatusReport,
    TaskAssignment,
    SupplyRequest,
    DamageReport,
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum TxError {
    #[error("payload_bits must be positive")]
    EmptyPayload,
    #[error("created_at must be a finite, non-negative time")]
    BadTimestamp,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Transaction {
    pub tx_id: u64,
    pub origin: NodeId,
    pub created_at: f64,
    pub payload_bits: u32,
    pub kind: TxKind,
}

impl Transaction {
    pub fn new(
        tx_id: u64,
        origin: NodeId,
        created_at: f64,
        payload_bits: u32,
        kind: TxKind,
    ) -> Result<Self, TxError> {
        if payload_bits == 0 {
            return Err(TxError::EmptyPayload);
        }
        if !(created_at.is_finite() && created_at >= 0.0) {
            return Err(TxError::BadTimestamp);
        }
        Ok(Self { tx_id, origin, created_at, payload_bits, kind })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Signature {
    pub signer: NodeId,
    pub digest: Digest,
    pub valid: bool,
}

pub fn sign(digest: Digest, signer: NodeId) -> Signature {
    Signature { signer, digest, valid: true }
}

pub fn verify(sig: &Signature, digest: &Digest, signer: NodeId) -> bool {
    sig.valid && sig.signer == signer && sig.digest == *digest
}

/// Canonical header encoding; see the module docs for the layout.
pub fn canonical_header_bytes(
    height: u64,
    parent_hash: &Digest,
    proposer: NodeId,
    view: u64,
    tx_ids: impl IntoIterator<Item = u64>,
) -> Vec<u8> {
    let mut buf = Vec::with_capacity(56);
    buf.extend_from_slice(&height.to_be_bytes());
    buf.extend_from_slice(&parent_hash.0);
    buf.extend_from_slice(&u64::from(proposer.0).to_be_bytes());
    buf.extend_from_slice(&view.to_be_bytes());
    for id in tx_ids {
        buf.extend_from_slice(&id.to_be_bytes());
    }
    buf
}

pub fn hash_block(
    height: u64,
    parent_hash: &Digest,
    proposer: NodeId,
    view: u64,
    tx_ids: impl IntoIterator<Item = u64>,
) -> Digest {
    Digest::of(&canonical_header_bytes(height, parent_hash, proposer, view, tx_ids))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Block {
    pub height: u64,
    pub parent_hash: Digest,
    pub proposer: NodeId,
    pub view: u64,
    pub transactions: Vec<Transaction>,
    pub block_hash: Digest,
    pub proposer_signature: Signature,
}

#[derive(Debug, Error, Clone, Copy, PartialEq, Eq)]
pub enum BlockError {
    #[error("block hash does not match its contents")]
    BadHash,
    #[error("parent hash does not extend the expected tip")]
    BadParent,
    #[error("unexpected block height")]
    BadHeight,
    #[error("proposer signature does not verify")]
    BadSignature,
    #[error("duplicate transaction id inside block")]
    DuplicateTx,
}

impl Block {
    pub fn genesis() -> Self {
        Block::new(0, Digest::ZERO, NodeId(0), 0, Vec::new())
    }

    /// Builds, hashes and signs a block on behalf of `proposer`.
    pub fn new(
        height: u64,
        parent_hash: Digest,
        proposer: NodeId,
        view: u64,
        transactions: Vec<Transaction>,
    ) -> Self {
        let block_hash = hash_block(
            height,
            &parent_hash,
            proposer,
            view,
            transactions.iter().map(|t| t.tx_id),
        );
        Block {
            height,
            parent_hash,
            proposer,
            view,
            transactions,
            block_hash,
            proposer_signature: sign(block_hash, proposer),
        }
    }

    pub fn recompute_hash(&self) -> Digest {
        hash_block(
            self.height,
            &self.parent_hash,
            self.proposer,
            self.view,
            self.transactions.iter().map(|t| t.tx_id),
        )
    }

    /// Approximate on-air size: header, signature, and transaction payloads.
    pub fn wire_bits(&self) -> u64 {
        let header = (8 + 32 + 8 + 8 + 32) * 8;
        let sig = SIGNATURE_BITS;
        let txs: u64 = self
            .transactions
            .iter()
            .map(|t| u64::from(t.payload_bits) + 64)
            .sum();
        header + sig + txs
    }
}

pub const SIGNATURE_BITS: u64 = (4 + 32 + 1) * 8;

pub fn validate_block(
    block: &Block,
    expected_parent: &Digest,
    expected_height: u64,
) -> Result<(), BlockError> {
    if block.recompute_hash() != block.block_hash {
        return Err(BlockError::BadHash);
    }
    if block.parent_hash != *expected_parent {
        return Err(BlockError::BadParent);
    }
    if block.height != expected_height {
        return Err(BlockError::BadHeight);
    }
    if !verify(&block.proposer_signature, &block.block_hash, block.proposer) {
        return Err(BlockError::BadSignature);
    }
    let mut ids: Vec<u64> = block.transactions.iter().map(|t| t.tx_id).collect();
    ids.sort_unstable();
    if ids.windows(2).any(|w| w[0] == w[1]) {
        return Err(BlockError::DuplicateTx);
    }
    Ok(())
}

/// Which vote a signature attests to.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VoteKind {
    Prepare,
    Commit,
}

/// Digest signed by a PREPARE or COMMIT vote.
pub fn vote_digest(kind: VoteKind, block_hash: &Digest, height: u64, view: u64) -> Digest {
    let mut buf = Vec::with_capacity(56);
    buf.extend_from_slice(match kind {
        VoteKind::Prepare => b"prepare:",
        VoteKind::Commit => b"commit::",
    });
    buf.extend_from_slice(&block_hash.0);
    buf.extend_from_slice(&height.to_be_bytes());
    buf.extend_from_slice(&view.to_be_bytes());
    Digest::of(&buf)
}

/// A quorum of PREPARE signatures for one block in one view.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PreparedCert {
    pub block: Block,
    pub view: u64,
    pub votes: Vec<Signature>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum MessageBody {
    /// Proposal for `(block.height, view)`. A block re-proposed after a view
    /// change keeps its original `block.view` and carries the certificate
    /// that justifies it.
    PrePrepare {
        block: Block,
        view: u64,
        justification: Option<PreparedCert>,
    },
    Prepare { block_hash: Digest, height: u64, view: u64 },
    Commit { block_hash: Digest, height: u64, view: u64 },
    ViewChange {
        new_view: u64,
        height: u64,
        prepared: Option<PreparedCert>,
    },
    /// State transfer: a committed block plus the COMMIT quorum that decided it.
    Decided { block: Block, view: u64, commits: Vec<Signature> },
    /// Asks the receiver for decided blocks starting at `height`.
    SyncRequest { height: u64 },
}

impl MessageBody {
    pub fn kind(&self) -> &'static str {
        match self {
            MessageBody::PrePrepare { .. } => "pre_prepare",
            MessageBody::Prepare { .. } => "prepare",
            MessageBody::Commit { .. } => "commit",
            MessageBody::ViewChange { .. } => "view_change",
            MessageBody::Decided { .. } => "decided",
            MessageBody::SyncRequest { .. } => "sync_request",
        }
    }

    pub fn height(&self) -> u64 {
        match self {
            MessageBody::PrePrepare { block, .. } | MessageBody::Decided { block, .. } => {
                block.height
            }
            MessageBody::Prepare { height, .. }
            | MessageBody::Commit { height, .. }
            | MessageBody::ViewChange { height, .. }
            | MessageBody::SyncRequest { height } => *height,
        }
    }

    /// View the message belongs to, for ordering against the receiver's view.
    /// View changes and state transfer are not bound to the current view.
    pub fn view(&self) -> Option<u64> {
        match self {
            MessageBody::PrePrepare { view, .. }
            | MessageBody::Prepare { view, .. }
            | MessageBody::Commit { view, .. } => Some(*view),
            _ => None,
        }
    }

    /// Block hash the message refers to, if any.
    pub fn block_hash(&self) -> Option<Digest> {
        match self {
            MessageBody::PrePrepare { block, .. } | MessageBody::Decided { block, .. } => {
                Some(block.block_hash)
            }
            MessageBody::Prepare { block_hash, .. } | MessageBody::Commit { block_hash, .. } => {
                Some(*block_hash)
            }
            _ => None,
        }
    }

    /// The digest the sender signs. Votes sign [`vote_digest`] so their
    /// signatures can be collected into certificates.
    pub fn signing_digest(&self) -> Digest {
        match self {
            MessageBody::Prepare { block_hash, height, view } => {
                vote_digest(VoteKind::Prepare, block_hash, *height, *view)
            }
            MessageBody::Commit { block_hash, height, view } => {
                vote_digest(VoteKind::Commit, block_hash, *height, *view)
            }
            MessageBody::PrePrepare { block, view, .. } => {
                let mut buf = b"preprep:".to_vec();
                buf.extend_from_slice(&block.block_hash.0);
                buf.extend_from_slice(&view.to_be_bytes());
                Digest::of(&buf)
            }
            MessageBody::ViewChange { new_view, height, prepared } => {
                let mut buf = b"viewchg:".to_vec();
                buf.extend_from_slice(&new_view.to_be_bytes());
                buf.extend_from_slice(&height.to_be_bytes());
                if let Some(cert) = prepared {
                    buf.extend_from_slice(&cert.block.block_hash.0);
                    buf.extend_from_slice(&cert.view.to_be_bytes());
                }
                Digest::of(&buf)
            }
            MessageBody::Decided { block, view, .. } => {
                let mut buf = b"decided:".to_vec();
                buf.extend_from_slice(&block.block_hash.0);
                buf.extend_from_slice(&view.to_be_bytes());
                Digest::of(&buf)
            }
            MessageBody::SyncRequest { height } => {
                let mut buf = b"syncreq:".to_vec();
                buf.extend_from_slice(&height.to_be_bytes());
                Digest::of(&buf)
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConsensusMessage {
    pub body: MessageBody,
    pub sender: NodeId,
    pub signature: Signature,
}

/// Size of a bare vote on the air.
pub const VOTE_BITS: u64 = (32 + 8 + 8 + 4) * 8 + SIGNATURE_BITS;

impl ConsensusMessage {
    pub fn signed(body: MessageBody, sender: NodeId) -> Self {
        let signature = sign(body.signing_digest(), sender);
        ConsensusMessage { body, sender, signature }
    }

    pub fn verify(&self) -> bool {
        verify(&self.signature, &self.body.signing_digest(), self.sender)
    }

    pub fn prepare(block_hash: Digest, height: u64, view: u64, sender: NodeId) -> Self {
        Self::signed(MessageBody::Prepare { block_hash, height, view }, sender)
    }

    pub fn commit(block_hash: Digest, height: u64, view: u64, sender: NodeId) -> Self {
        Self::signed(MessageBody::Commit { block_hash, height, view }, sender)
    }

    pub fn wire_bits(&self) -> u64 {
        let cert_bits = |c: &Option<PreparedCert>| {
            c.as_ref()
                .map(|c| c.block.wire_bits() + c.votes.len() as u64 * SIGNATURE_BITS)
                .unwrap_or(0)
        };
        match &self.body {
            MessageBody::PrePrepare { block, justification, .. } => {
                block.wire_bits() + SIGNATURE_BITS + cert_bits(justification)
            }
            MessageBody::ViewChange { prepared, .. } => VOTE_BITS + cert_bits(prepared),
            MessageBody::Decided { block, commits, .. } => {
                block.wire_bits() + (commits.len() as u64 + 1) * SIGNATURE_BITS
            }
            _ => VOTE_BITS,
        }
    }
}
