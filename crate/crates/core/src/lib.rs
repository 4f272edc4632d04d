pub mod nn;
pub mod auction;
pub mod ledger;
pub mod market;
pub mod reputation;
pub mod tltask;
