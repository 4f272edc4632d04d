use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use super::crypto::{Hash32, Signature, SignatureScheme, ToyKeyring};
use super::tx::{canonical_json, digest_json, Transaction};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct QuorumSignature {
    pub delegate: String,
    pub signature: Signature,
}

/// One committed block. Field order here is the canonical dump order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Block {
    pub height: u64,
    pub round: u64,
    pub prev_hash: Hash32,
    pub tx_root: Hash32,
    pub proposer: String,
    pub transactions: Vec<Transaction>,
    pub quorum: Vec<QuorumSignature>,
}

#[derive(Serialize)]
struct Header<'a> {
    height: u64,
    round: u64,
    prev_hash: &'a Hash32,
    tx_root: &'a Hash32,
    proposer: &'a str,
}

impl Block {
    /// Hash of the header; delegates sign this and the next block links to it.
    pub fn hash(&self) -> Hash32 {
        digest_json(&Header {
            height: self.height,
            round: self.round,
            prev_hash: &self.prev_hash,
            tx_root: &self.tx_root,
            proposer: &self.proposer,
        })
    }
}

/// Binary Merkle root over transaction hashes; an odd node is paired with
/// itself.
pub fn tx_root(transactions: &[Transaction]) -> Hash32 {
    if transactions.is_empty() {
        return Hash32::of(b"");
    }
    let mut level: Vec<Hash32> = transactions.iter().map(Transaction::hash).collect();
    while level.len() > 1 {
        level = level
            .chunks(2)
            .map(|pair| {
                let right = pair.get(1).unwrap_or(&pair[0]);
                Hash32::of_parts(&[&pair[0].0, &right.0])
            })
            .collect();
    }
    level[0]
}

/// Who may propose and sign blocks, and how signatures are checked.
#[derive(Debug, Clone, PartialEq)]
pub struct ChainParams {
    pub delegates: Vec<String>,
    pub keyring: ToyKeyring,
}

impl ChainParams {
    pub fn new(n_delegates: usize, key_seed: u64) -> Self {
        Self {
            delegates: (0..n_delegates).map(|k| format!("rsu-{k}")).collect(),
            keyring: ToyKeyring::new(key_seed),
        }
    }

    /// `ceil(2/3 * |delegates|)`.
    pub fn quorum_size(&self) -> usize {
        (2 * self.delegates.len()).div_ceil(3)
    }

    pub fn proposer(&self, round: u64) -> &str {
        &self.delegates[(round % self.delegates.len() as u64) as usize]
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("chain invalid at height {height}: {reason}")]
pub struct ChainFault {
    pub height: u64,
    pub reason: String,
}

/// Checks every link, root, signature and quorum, stopping at the first
/// violation.
pub fn verify_chain(chain: &[Block], params: &ChainParams) -> Result<(), ChainFault> {
    let mut nonces = BTreeSet::new();
    let mut prev: Option<&Block> = None;
    for (k, block) in chain.iter().enumerate() {
        let fault = |reason: String| ChainFault {
            height: k as u64,
            reason,
        };
        if block.height != k as u64 {
            return Err(fault(format!("height field says {}", block.height)));
        }
        let expected_prev = prev.map_or(Hash32::ZERO, Block::hash);
        if block.prev_hash != expected_prev {
            return Err(fault("previous-hash link broken".into()));
        }
        if let Some(p) = prev {
            if block.round <= p.round {
                return Err(fault("round does not advance".into()));
            }
        }
        if params.delegates.is_empty() || block.proposer != params.proposer(block.round) {
            return Err(fault(format!("{} is not the proposer for round {}", block.proposer, block.round)));
        }
        if block.tx_root != tx_root(&block.transactions) {
            return Err(fault("transaction root mismatch".into()));
        }
        for tx in &block.transactions {
            tx.validate(&params.keyring)
                .map_err(|e| fault(format!("transaction by {}: {e}", tx.author)))?;
            if !nonces.insert((tx.author.clone(), tx.nonce)) {
                return Err(fault(format!("nonce {} of {} reused", tx.nonce, tx.author)));
            }
        }
        let header = block.hash();
        let mut signers = BTreeSet::new();
        for q in &block.quorum {
            if !params.delegates.contains(&q.delegate) {
                return Err(fault(format!("unknown delegate {}", q.delegate)));
            }
            if !signers.insert(q.delegate.as_str()) {
                return Err(fault(format!("duplicate signature from {}", q.delegate)));
            }
            if !params.keyring.verify(&q.delegate, &header, &q.signature) {
                return Err(fault(format!("bad quorum signature from {}", q.delegate)));
            }
        }
        if signers.len() < params.quorum_size() {
            return Err(fault(format!(
                "{} quorum signatures, {} required",
                signers.len(),
                params.quorum_size()
            )));
        }
        prev = Some(block);
    }
    Ok(())
}

/// One canonical JSON block per line, each line terminated by `\n`.
pub fn dump_chain(chain: &[Block]) -> String {
    let mut out = String::new();
    for block in chain {
        out.push_str(&canonical_json(block));
        out.push('\n');
    }
    out
}

/// Parses a dump, rejecting any line that is not the exact canonical
/// encoding of the block it decodes to.
pub fn load_chain(text: &str) -> Result<Vec<Block>, ChainFault> {
    let mut chain = Vec::new();
    if text.is_empty() {
        return Ok(chain);
    }
    let body = text.strip_suffix('\n');
    let lines: Vec<&str> = body.unwrap_or(text).split('\n').collect();
    for (k, line) in lines.iter().enumerate() {
        let fault = |reason: String| ChainFault {
            height: k as u64,
            reason,
        };
        let block: Block = serde_json::from_str(line).map_err(|e| fault(format!("unparseable: {e}")))?;
        if canonical_json(&block) != *line {
            return Err(fault("line is not in canonical form".into()));
        }
        chain.push(block);
    }
    if body.is_none() {
        return Err(ChainFault {
            height: lines.len() as u64 - 1,
            reason: "missing final newline".into(),
        });
    }
    Ok(chain)
}

/// `load_chain` followed by `verify_chain`.
pub fn verify_dump(text: &str, params: &ChainParams) -> Result<Vec<Block>, ChainFault> {
    let chain = load_chain(text)?;
    verify_chain(&chain, params)?;
    Ok(chain)
}
