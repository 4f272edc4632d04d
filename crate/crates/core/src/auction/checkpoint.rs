//! Text checkpoint for trained auction nets.
//!
//! ```text
//! tlmarket-dla 1
//! market <n_buyers> <n_items>
//! layer <input> <output> <activation>     (one line per layer)
//! params <count>
//! <value>                                 (one per line, `{:e}` formatting)
//! end
//! ```
//!
//! Values are written in shortest round-trip exponent form, so a reload is
//! bit-exact.

use std::fmt::Write as _;

use super::{AuctionError, DlaNet, MarketShape};
use crate::nn::{Activation, DenseNet, LayerSpec};

const MAGIC: &str = "tlmarket-dla 1";

pub fn write_checkpoint(net: &DlaNet) -> String {
    let shape = net.market();
    let mut out = String::new();
    let _ = writeln!(out, "{MAGIC}");
    let _ = writeln!(out, "market {} {}", shape.n_buyers, shape.n_items);
    for spec in net.net().layer_specs() {
        let _ = writeln!(
            out,
            "layer {} {} {}",
            spec.input,
            spec.output,
            spec.activation.name()
        );
    }
    let params = net.net().params();
    let _ = writeln!(out, "params {}", params.len());
    for p in params {
        let _ = writeln!(out, "{p:e}");
    }
    out.push_str("end\n");
    out
}

fn bad(msg: impl Into<String>) -> AuctionError {
    AuctionError::Checkpoint(msg.into())
}

fn parse_usize(tok: Option<&str>, what: &str) -> Result<usize, AuctionError> {
    tok.ok_or_else(|| bad(format!("missing {what}")))?
        .parse()
        .map_err(|_| bad(format!("bad {what}")))
}

pub fn read_checkpoint(text: &str) -> Result<DlaNet, AuctionError> {
    let mut lines = text.lines();
    if lines.next() != Some(MAGIC) {
        return Err(bad("missing or unsupported header"));
    }
    let mut market = lines
        .next()
        .ok_or_else(|| bad("missing market line"))?
        .split_whitespace();
    if market.next() != Some("market") {
        return Err(bad("expected market line"));
    }
    let shape = MarketShape::new(
        parse_usize(market.next(), "n_buyers")?,
        parse_usize(market.next(), "n_items")?,
    )?;
    let mut specs = Vec::new();
    let count = loop {
        let line = lines.next().ok_or_else(|| bad("truncated layer list"))?;
        let mut toks = line.split_whitespace();
        match toks.next() {
            Some("layer") => {
                let input = parse_usize(toks.next(), "layer input")?;
                let output = parse_usize(toks.next(), "layer output")?;
                let activation = toks
                    .next()
                    .and_then(Activation::parse)
                    .ok_or_else(|| bad("bad activation"))?;
                specs.push(LayerSpec {
                    input,
                    output,
                    activation,
                });
            }
            Some("params") => break parse_usize(toks.next(), "parameter count")?,
            _ => return Err(bad(format!("unexpected line {line:?}"))),
        }
    };
    let mut params = Vec::with_capacity(count);
    for _ in 0..count {
        let line = lines.next().ok_or_else(|| bad("truncated parameters"))?;
        params.push(
            line.trim()
                .parse::<f64>()
                .map_err(|_| bad(format!("bad parameter {line:?}")))?,
        );
    }
    if lines.next() != Some("end") || lines.next().is_some() {
        return Err(bad("missing end marker or trailing data"));
    }
    DlaNet::from_net(shape, DenseNet::from_parameters(specs, params)?)
}
