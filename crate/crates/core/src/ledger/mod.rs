//! Simulated consortium chain: signed transactions, hash-linked blocks,
//! round-robin proposers with a two-thirds quorum, and the contract handlers
//! for model listings, trade records and reputation ratings.
//!
//! Dumps are one canonical JSON block per line with fields in this order:
//! `height`, `round`, `prev_hash`, `tx_root`, `proposer`, `transactions`,
//! `quorum`. Digests and signatures are lowercase hex SHA-256.

mod block;
mod crypto;
mod state;
mod tx;

pub use block::{
    dump_chain, load_chain, tx_root, verify_chain, verify_dump, Block, ChainFault, ChainParams,
    QuorumSignature,
};
pub use crypto::{Hash32, Signature, SignatureScheme, ToyKeyring};
pub use state::{CommitResult, ContractState, Ledger, LedgerError};
pub use tx::{ModelListing, Payload, Rejection, ReputationRating, TradeRecord, Transaction};
