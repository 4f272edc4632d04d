use std::collections::BTreeSet;

use super::block::{tx_root, verify_chain, Block, ChainFault, ChainParams, QuorumSignature};
use super::crypto::{Hash32, SignatureScheme};
use super::tx::{ModelListing, Payload, ReputationRating, Rejection, TradeRecord, Transaction};
use crate::reputation::InteractionEvent;

/// What the three contract handlers have stored, in commit order.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ContractState {
    pub listings: Vec<ModelListing>,
    pub trades: Vec<TradeRecord>,
    pub ratings: Vec<ReputationRating>,
}

impl ContractState {
    fn apply(&mut self, tx: &Transaction) {
        match &tx.payload {
            Payload::ModelInfo(l) => self.listings.push(l.clone()),
            Payload::TradeRecord(t) => self.trades.push(t.clone()),
            Payload::ReputationRating(r) => self.ratings.push(r.clone()),
        }
    }

    pub fn from_chain(chain: &[Block]) -> Self {
        let mut state = ContractState::default();
        for tx in chain.iter().flat_map(|b| &b.transactions) {
            state.apply(tx);
        }
        state
    }

    /// Committed listings with the given task tag (all tags for `None`),
    /// newest first.
    pub fn listings(&self, task: Option<&str>) -> Vec<&ModelListing> {
        self.listings
            .iter()
            .rev()
            .filter(|l| task.is_none_or(|t| l.task == t))
            .collect()
    }

    pub fn reputation_events(&self, seller: &str) -> Vec<InteractionEvent> {
        self.ratings
            .iter()
            .filter(|r| r.seller == seller)
            .map(ReputationRating::event)
            .collect()
    }

    pub fn all_events(&self) -> Vec<InteractionEvent> {
        self.ratings.iter().map(ReputationRating::event).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CommitResult {
    /// Nothing pending; no block produced.
    Empty,
    Committed { height: u64 },
    /// Too few delegates approved; the block is dropped and the mempool kept.
    QuorumFailed { approvals: usize, required: usize },
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum LedgerError {
    #[error("round {got} does not advance past the last committed round {last}")]
    RoundNotAdvancing { last: u64, got: u64 },
    #[error("no delegates configured")]
    NoDelegates,
    #[error(transparent)]
    Fault(#[from] ChainFault),
}

/// The consortium chain as a single serialized state machine.
#[derive(Debug, Clone)]
pub struct Ledger {
    params: ChainParams,
    chain: Vec<Block>,
    mempool: Vec<Transaction>,
    nonces: BTreeSet<(String, u64)>,
    contracts: ContractState,
    rejecting: BTreeSet<String>,
}

impl Ledger {
    pub fn new(params: ChainParams) -> Result<Self, LedgerError> {
        if params.delegates.is_empty() {
            return Err(LedgerError::NoDelegates);
        }
        Ok(Self {
            params,
            chain: Vec::new(),
            mempool: Vec::new(),
            nonces: BTreeSet::new(),
            contracts: ContractState::default(),
            rejecting: BTreeSet::new(),
        })
    }

    /// Verifies `chain` and rebuilds the ledger that produced it.
    pub fn replay(params: ChainParams, chain: Vec<Block>) -> Result<Self, LedgerError> {
        verify_chain(&chain, &params)?;
        let mut ledger = Ledger::new(params)?;
        for tx in chain.iter().flat_map(|b| &b.transactions) {
            ledger.nonces.insert((tx.author.clone(), tx.nonce));
            ledger.contracts.apply(tx);
        }
        ledger.chain = chain;
        Ok(ledger)
    }

    pub fn params(&self) -> &ChainParams {
        &self.params
    }

    pub fn chain(&self) -> &[Block] {
        &self.chain
    }

    pub fn mempool(&self) -> &[Transaction] {
        &self.mempool
    }

    pub fn contracts(&self) -> &ContractState {
        &self.contracts
    }

    pub fn signer(&self) -> &dyn SignatureScheme {
        &self.params.keyring
    }

    /// Makes a delegate refuse (or stop refusing) every proposal.
    pub fn set_rejecting(&mut self, delegate: &str, rejecting: bool) {
        if rejecting {
            self.rejecting.insert(delegate.to_string());
        } else {
            self.rejecting.remove(delegate);
        }
    }

    pub fn submit(&mut self, tx: Transaction) -> Result<(), Rejection> {
        tx.validate(&self.params.keyring)?;
        let key = (tx.author.clone(), tx.nonce);
        if self.nonces.contains(&key) {
            return Err(Rejection::ReplayedNonce {
                author: key.0,
                nonce: key.1,
            });
        }
        self.nonces.insert(key);
        self.mempool.push(tx);
        Ok(())
    }

    pub fn propose_and_commit(&mut self, round: u64) -> Result<CommitResult, LedgerError> {
        if self.mempool.is_empty() {
            return Ok(CommitResult::Empty);
        }
        let prev = self.chain.last();
        if let Some(p) = prev {
            if round <= p.round {
                return Err(LedgerError::RoundNotAdvancing { last: p.round, got: round });
            }
        }
        let mut block = Block {
            height: self.chain.len() as u64,
            round,
            prev_hash: prev.map_or(Hash32::ZERO, Block::hash),
            tx_root: tx_root(&self.mempool),
            proposer: self.params.proposer(round).to_string(),
            transactions: self.mempool.clone(),
            quorum: Vec::new(),
        };
        let header = block.hash();
        for delegate in &self.params.delegates {
            let approves = !self.rejecting.contains(delegate)
                && block
                    .transactions
                    .iter()
                    .all(|tx| tx.validate(&self.params.keyring).is_ok());
            if approves {
                block.quorum.push(QuorumSignature {
                    delegate: delegate.clone(),
                    signature: self.params.keyring.sign(delegate, &header),
                });
            }
        }
        let required = self.params.quorum_size();
        if block.quorum.len() < required {
            return Ok(CommitResult::QuorumFailed {
                approvals: block.quorum.len(),
                required,
            });
        }
        for tx in &block.transactions {
            self.contracts.apply(tx);
        }
        self.mempool.clear();
        let height = block.height;
        self.chain.push(block);
        Ok(CommitResult::Committed { height })
    }

    pub fn query_model_listings(&self, task: Option<&str>) -> Vec<&ModelListing> {
        self.contracts.listings(task)
    }

    pub fn query_reputation_events(&self, seller: &str) -> Vec<InteractionEvent> {
        self.contracts.reputation_events(seller)
    }

    pub fn verify(&self) -> Result<(), ChainFault> {
        verify_chain(&self.chain, &self.params)
    }
}
