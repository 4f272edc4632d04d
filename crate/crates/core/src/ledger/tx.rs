use serde::{Deserialize, Serialize};

use super::crypto::{Hash32, Signature, SignatureScheme};
use crate::reputation::{InteractionEvent, Outcome};

/// Metadata a seller publishes about a pre-trained model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelListing {
    pub owner: String,
    pub task: String,
    pub claimed_accuracy: f64,
    pub model_size_kb: u64,
    pub ask_price: f64,
    pub timestamp: u64,
    /// Owner's signature over every other field.
    pub signature: Signature,
}

#[derive(Serialize)]
struct ListingBody<'a> {
    owner: &'a str,
    task: &'a str,
    claimed_accuracy: f64,
    model_size_kb: u64,
    ask_price: f64,
    timestamp: u64,
}

impl ModelListing {
    pub fn signed(
        scheme: &dyn SignatureScheme,
        owner: &str,
        task: &str,
        claimed_accuracy: f64,
        model_size_kb: u64,
        ask_price: f64,
        timestamp: u64,
    ) -> Self {
        let mut listing = ModelListing {
            owner: owner.to_string(),
            task: task.to_string(),
            claimed_accuracy,
            model_size_kb,
            ask_price,
            timestamp,
            signature: Hash32::ZERO,
        };
        listing.signature = scheme.sign(owner, &listing.body_digest());
        listing
    }

    pub fn body_digest(&self) -> Hash32 {
        digest_json(&ListingBody {
            owner: &self.owner,
            task: &self.task,
            claimed_accuracy: self.claimed_accuracy,
            model_size_kb: self.model_size_kb,
            ask_price: self.ask_price,
            timestamp: self.timestamp,
        })
    }

    pub fn verify(&self, scheme: &dyn SignatureScheme) -> bool {
        scheme.verify(&self.owner, &self.body_digest(), &self.signature)
    }
}

/// One executed trade: the buyer won the seller's model at `price`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TradeRecord {
    pub round: u64,
    pub buyer: String,
    pub seller: String,
    pub price: f64,
    /// Target accuracy the buyer measured after fine-tuning.
    pub accuracy: f64,
}

/// A buyer's rating of a seller after a trade, with the buyer's integrated
/// reputation for that seller once the event is counted.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReputationRating {
    pub round: u64,
    pub buyer: String,
    pub seller: String,
    pub outcome: Outcome,
    pub reputation: f64,
}

impl ReputationRating {
    pub fn event(&self) -> InteractionEvent {
        InteractionEvent {
            buyer: self.buyer.clone(),
            seller: self.seller.clone(),
            round: self.round,
            outcome: self.outcome,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "data", deny_unknown_fields)]
pub enum Payload {
    ModelInfo(ModelListing),
    TradeRecord(TradeRecord),
    ReputationRating(ReputationRating),
}

impl Payload {
    pub fn kind(&self) -> &'static str {
        match self {
            Payload::ModelInfo(_) => "ModelInfo",
            Payload::TradeRecord(_) => "TradeRecord",
            Payload::ReputationRating(_) => "ReputationRating",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Transaction {
    pub author: String,
    pub nonce: u64,
    pub payload: Payload,
    pub signature: Signature,
}

#[derive(Serialize)]
struct TxBody<'a> {
    author: &'a str,
    nonce: u64,
    payload: &'a Payload,
}

/// Why a transaction was refused.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Rejection {
    #[error("signature does not verify")]
    BadSignature,
    #[error("malformed payload: {0}")]
    Malformed(String),
    #[error("nonce {nonce} already used by {author}")]
    ReplayedNonce { author: String, nonce: u64 },
}

impl Transaction {
    pub fn signed(scheme: &dyn SignatureScheme, author: &str, nonce: u64, payload: Payload) -> Self {
        let mut tx = Transaction {
            author: author.to_string(),
            nonce,
            payload,
            signature: Hash32::ZERO,
        };
        tx.signature = scheme.sign(author, &tx.body_digest());
        tx
    }

    pub fn body_digest(&self) -> Hash32 {
        digest_json(&TxBody {
            author: &self.author,
            nonce: self.nonce,
            payload: &self.payload,
        })
    }

    /// Digest of the full canonical encoding, signature included.
    pub fn hash(&self) -> Hash32 {
        digest_json(self)
    }

    /// Signature and schema checks; nonce freshness is the ledger's job.
    pub fn validate(&self, scheme: &dyn SignatureScheme) -> Result<(), Rejection> {
        if !scheme.verify(&self.author, &self.body_digest(), &self.signature) {
            return Err(Rejection::BadSignature);
        }
        let bad = |msg: &str| Err(Rejection::Malformed(msg.to_string()));
        let unit = |x: f64| (0.0..=1.0).contains(&x);
        if self.author.is_empty() {
            return bad("empty author");
        }
        match &self.payload {
            Payload::ModelInfo(l) => {
                if l.owner != self.author {
                    return bad("listing owner differs from author");
                }
                if l.task.is_empty() || l.model_size_kb == 0 {
                    return bad("listing needs a task tag and a positive size");
                }
                if !unit(l.claimed_accuracy) || !(l.ask_price.is_finite() && l.ask_price >= 0.0) {
                    return bad("listing accuracy or price out of range");
                }
                if !l.verify(scheme) {
                    return Err(Rejection::BadSignature);
                }
            }
            Payload::TradeRecord(t) => {
                if t.buyer != self.author || t.seller.is_empty() {
                    return bad("trade must be authored by its buyer");
                }
                if !(t.price.is_finite() && t.price >= 0.0) || !unit(t.accuracy) {
                    return bad("trade price or accuracy out of range");
                }
            }
            Payload::ReputationRating(r) => {
                if r.buyer != self.author || r.seller.is_empty() {
                    return bad("rating must be authored by its buyer");
                }
                if !unit(r.reputation) {
                    return bad("rating reputation outside [0, 1]");
                }
            }
        }
        Ok(())
    }
}

pub(crate) fn canonical_json<T: Serialize + ?Sized>(value: &T) -> String {
    serde_json::to_string(value).expect("ledger records always serialize")
}

pub(crate) fn digest_json<T: Serialize + ?Sized>(value: &T) -> Hash32 {
    Hash32::of(canonical_json(value).as_bytes())
}
