//! Direct, recommended, referenced and integrated reputation of sellers, as
//! seen by each buyer, computed from committed rating events.
//!
//! All components use the same sliding window of rounds `(now - window, now]`.
//! A component with no supporting events is absent; the integrated value
//! renormalises the weights over the present components and falls back to a
//! prior when none are present.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

pub type BuyerId = String;
pub type SellerId = String;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Outcome {
    Positive,
    Negative,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct InteractionEvent {
    pub buyer: BuyerId,
    pub seller: SellerId,
    pub round: u64,
    pub outcome: Outcome,
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ReputationError {
    #[error("aggregation weights must be in [0, 1] and sum to 1, got {0:?}")]
    Weights([f64; 3]),
    #[error("window must be positive")]
    Window,
    #[error("prior must lie in [0, 1], got {0}")]
    Prior(f64),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AggregationWeights {
    pub direct: f64,
    pub recommended: f64,
    pub referenced: f64,
}

impl AggregationWeights {
    pub fn new(direct: f64, recommended: f64, referenced: f64) -> Result<Self, ReputationError> {
        let w = [direct, recommended, referenced];
        let in_range = w.iter().all(|x| (0.0..=1.0).contains(x));
        if !in_range || (w.iter().sum::<f64>() - 1.0).abs() > 1e-12 {
            return Err(ReputationError::Weights(w));
        }
        Ok(Self {
            direct,
            recommended,
            referenced,
        })
    }
}

impl Default for AggregationWeights {
    fn default() -> Self {
        Self {
            direct: 0.6,
            recommended: 0.25,
            referenced: 0.15,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ReputationParams {
    pub weights: AggregationWeights,
    pub window: u64,
    pub prior: f64,
}

impl ReputationParams {
    pub fn new(weights: AggregationWeights, window: u64, prior: f64) -> Result<Self, ReputationError> {
        if window == 0 {
            return Err(ReputationError::Window);
        }
        if !(0.0..=1.0).contains(&prior) {
            return Err(ReputationError::Prior(prior));
        }
        Ok(Self {
            weights,
            window,
            prior,
        })
    }
}

impl Default for ReputationParams {
    fn default() -> Self {
        Self {
            weights: AggregationWeights::default(),
            window: 20,
            prior: 0.5,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IntegratedReputation {
    pub value: f64,
    pub direct: Option<f64>,
    pub recommended: Option<f64>,
    pub referenced: Option<f64>,
    pub window: u64,
}

fn in_window(round: u64, window: u64, now: u64) -> bool {
    round <= now && round + window > now
}

/// Share of positive events among those with `round` in `(now - window, now]`.
/// The caller filters events to one (buyer, seller) pair.
pub fn direct_reputation<'a>(
    events: impl IntoIterator<Item = &'a InteractionEvent>,
    window: u64,
    now: u64,
) -> Option<f64> {
    let (mut positive, mut total) = (0u64, 0u64);
    for e in events {
        if in_window(e.round, window, now) {
            total += 1;
            if e.outcome == Outcome::Positive {
                positive += 1;
            }
        }
    }
    (total > 0).then(|| positive as f64 / total as f64)
}

/// Trust-weighted mean of friends' opinions; absent when no friend with an
/// opinion has positive trust. Input pairs are `(trust, opinion)`.
pub fn recommended_reputation(weighted_opinions: &[(f64, f64)]) -> Option<f64> {
    let total: f64 = weighted_opinions.iter().map(|(t, _)| t).sum();
    if total <= 0.0 {
        return None;
    }
    let sum: f64 = weighted_opinions.iter().map(|(t, o)| t * o).sum();
    Some((sum / total).clamp(0.0, 1.0))
}

/// Plain mean of strangers' opinions; absent when there are none.
pub fn referenced_reputation(opinions: &[f64]) -> Option<f64> {
    if opinions.is_empty() {
        return None;
    }
    Some(opinions.iter().sum::<f64>() / opinions.len() as f64)
}

/// Weighted sum of the present components with weights renormalised over
/// them; `prior` when every component is absent.
pub fn integrated_reputation(
    direct: Option<f64>,
    recommended: Option<f64>,
    referenced: Option<f64>,
    weights: &AggregationWeights,
    prior: f64,
) -> f64 {
    let parts = [
        (weights.direct, direct),
        (weights.recommended, recommended),
        (weights.referenced, referenced),
    ];
    let (mut acc, mut mass) = (0.0, 0.0);
    for (w, value) in parts {
        if let Some(v) = value {
            acc += w * v;
            mass += w;
        }
    }
    if mass > 0.0 {
        (acc / mass).clamp(0.0, 1.0)
    } else {
        prior
    }
}

/// Sellers with reputation at least `permitted`, in their original order.
pub fn filter_sellers<T: Clone>(sellers: &[T], reputations: &[f64], permitted: f64) -> Vec<T> {
    sellers
        .iter()
        .zip(reputations)
        .filter(|(_, &r)| r >= permitted)
        .map(|(s, _)| s.clone())
        .collect()
}

/// Rating events grouped for reputation queries, in commit order.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ReputationBook {
    /// (buyer, seller) -> events
    pairs: BTreeMap<(BuyerId, SellerId), Vec<InteractionEvent>>,
    /// seller -> buyers holding any event on it
    raters: BTreeMap<SellerId, BTreeSet<BuyerId>>,
}

impl ReputationBook {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn from_events<'a>(events: impl IntoIterator<Item = &'a InteractionEvent>) -> Self {
        let mut book = Self::new();
        for e in events {
            book.record(e.clone());
        }
        book
    }

    pub fn record(&mut self, event: InteractionEvent) {
        self.raters
            .entry(event.seller.clone())
            .or_default()
            .insert(event.buyer.clone());
        self.pairs
            .entry((event.buyer.clone(), event.seller.clone()))
            .or_default()
            .push(event);
    }

    pub fn events(&self, buyer: &str, seller: &str) -> &[InteractionEvent] {
        self.pairs
            .get(&(buyer.to_string(), seller.to_string()))
            .map(Vec::as_slice)
            .unwrap_or(&[])
    }

    pub fn direct(&self, buyer: &str, seller: &str, window: u64, now: u64) -> Option<f64> {
        direct_reputation(self.events(buyer, seller), window, now)
    }

    fn sellers_rated_by(&self, buyer: &str) -> impl Iterator<Item = &SellerId> + '_ {
        let buyer = buyer.to_string();
        self.raters
            .iter()
            .filter(move |(_, set)| set.contains(&buyer))
            .map(|(s, _)| s)
    }

    /// Trust of buyer `a` in buyer `b`: among pairs of in-window events the
    /// two hold on a common seller, the fraction with matching outcomes.
    /// `None` when `b` is not a friend, i.e. they share no matching pair.
    pub fn trust(&self, a: &str, b: &str, window: u64, now: u64) -> Option<f64> {
        if a == b {
            return None;
        }
        let (mut agree, mut total) = (0u64, 0u64);
        for seller in self.sellers_rated_by(a) {
            let mine = self.events(a, seller);
            let theirs = self.events(b, seller);
            for x in mine.iter().filter(|e| in_window(e.round, window, now)) {
                for y in theirs.iter().filter(|e| in_window(e.round, window, now)) {
                    total += 1;
                    if x.outcome == y.outcome {
                        agree += 1;
                    }
                }
            }
        }
        (agree > 0).then(|| agree as f64 / total as f64)
    }

    /// Every component of buyer `buyer`'s view of `seller`. `buyers` is the
    /// full buyer population.
    pub fn integrated(
        &self,
        buyer: &str,
        seller: &str,
        buyers: &[BuyerId],
        params: &ReputationParams,
        now: u64,
    ) -> IntegratedReputation {
        let window = params.window;
        let direct = self.direct(buyer, seller, window, now);
        let mut friend_opinions = Vec::new();
        let mut stranger_opinions = Vec::new();
        for other in buyers.iter().filter(|b| b.as_str() != buyer) {
            let Some(opinion) = self.direct(other, seller, window, now) else {
                continue;
            };
            match self.trust(buyer, other, window, now) {
                Some(t) => friend_opinions.push((t, opinion)),
                None => stranger_opinions.push(opinion),
            }
        }
        let recommended = recommended_reputation(&friend_opinions);
        let referenced = referenced_reputation(&stranger_opinions);
        IntegratedReputation {
            value: integrated_reputation(direct, recommended, referenced, &params.weights, params.prior),
            direct,
            recommended,
            referenced,
            window,
        }
    }

    /// Mean integrated reputation of `seller` across all buyers.
    pub fn market_reputation(
        &self,
        seller: &str,
        buyers: &[BuyerId],
        params: &ReputationParams,
        now: u64,
    ) -> f64 {
        if buyers.is_empty() {
            return params.prior;
        }
        buyers
            .iter()
            .map(|b| self.integrated(b, seller, buyers, params, now).value)
            .sum::<f64>()
            / buyers.len() as f64
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn ev(buyer: &str, seller: &str, round: u64, positive: bool) -> InteractionEvent {
        InteractionEvent {
            buyer: buyer.into(),
            seller: seller.into(),
            round,
            outcome: if positive { Outcome::Positive } else { Outcome::Negative },
        }
    }

    #[test]
    fn direct_is_positive_share_in_window() {
        let events = [ev("b", "s", 1, true), ev("b", "s", 2, true), ev("b", "s", 3, false), ev("b", "s", 4, true)];
        assert_eq!(direct_reputation(&events, 10, 4), Some(0.75));
        assert_eq!(direct_reputation(&[], 10, 4), None);
        // Window (5, 10] keeps only rounds 9 and 10.
        let straddle = [
            ev("b", "s", 2, false),
            ev("b", "s", 4, false),
            ev("b", "s", 5, false),
            ev("b", "s", 9, true),
            ev("b", "s", 10, true),
        ];
        assert_eq!(direct_reputation(&straddle, 5, 10), Some(1.0));
    }

    #[test]
    fn recommended_cases() {
        assert_eq!(recommended_reputation(&[(1.0, 0.8)]), Some(0.8));
        assert_eq!(recommended_reputation(&[(0.5, 1.0), (0.5, 0.0)]), Some(0.5));
        let r = recommended_reputation(&[(0.9, 0.8), (0.1, 0.2)]).unwrap();
        assert!((r - 0.74).abs() < 1e-12);
        assert_eq!(recommended_reputation(&[]), None);
        assert_eq!(recommended_reputation(&[(0.0, 0.9)]), None);
    }

    #[test]
    fn referenced_cases() {
        assert_eq!(referenced_reputation(&[0.4, 0.6]), Some(0.5));
        assert_eq!(referenced_reputation(&[]), None);
        assert_eq!(referenced_reputation(&[1.0, 0.0, 0.5, 0.5]), Some(0.5));
    }

    #[test]
    fn integrated_cases() {
        let w = AggregationWeights::new(0.6, 0.25, 0.15).unwrap();
        let r = integrated_reputation(Some(1.0), Some(0.8), Some(0.5), &w, 0.5);
        assert!((r - 0.875).abs() < 1e-12);
        assert!((integrated_reputation(Some(0.9), None, None, &w, 0.5) - 0.9).abs() < 1e-12);
        assert_eq!(integrated_reputation(None, None, None, &w, 0.5), 0.5);
        assert!(AggregationWeights::new(0.5, 0.5, 0.5).is_err());
    }

    #[test]
    fn filter_cases() {
        let sellers = ["s1", "s2", "s3"];
        assert_eq!(filter_sellers(&sellers, &[0.9, 0.3, 0.7], 0.5), vec!["s1", "s3"]);
        assert_eq!(filter_sellers(&sellers, &[0.9, 0.3, 0.7], 0.0).len(), 3);
        assert!(filter_sellers(&sellers, &[0.9, 0.3, 0.7], 1.0).is_empty());
    }

    #[test]
    fn friends_and_strangers() {
        let buyers: Vec<BuyerId> = ["a", "b", "c"].iter().map(|s| s.to_string()).collect();
        let mut book = ReputationBook::new();
        // a and b agree on s1, so b is a's friend with trust 1.
        book.record(ev("a", "s1", 1, true));
        book.record(ev("b", "s1", 2, true));
        // b and c hold opinions on s2; c never overlaps with a.
        book.record(ev("b", "s2", 2, false));
        book.record(ev("c", "s2", 3, true));
        let params = ReputationParams::default();
        assert_eq!(book.trust("a", "b", 20, 3), Some(1.0));
        assert_eq!(book.trust("a", "c", 20, 3), None);
        let view = book.integrated("a", "s2", &buyers, &params, 3);
        assert_eq!(view.direct, None);
        assert_eq!(view.recommended, Some(0.0));
        assert_eq!(view.referenced, Some(1.0));
        let expected = (0.25 * 0.0 + 0.15 * 1.0) / 0.4;
        assert!((view.value - expected).abs() < 1e-12);
    }

    fn arb_events() -> impl Strategy<Value = Vec<InteractionEvent>> {
        prop::collection::vec((0usize..3, 0usize..3, 0u64..30, any::<bool>()), 0..60).prop_map(|raw| {
            raw.into_iter()
                .map(|(b, s, r, p)| ev(&format!("b{b}"), &format!("s{s}"), r, p))
                .collect()
        })
    }

    proptest! {
        #[test]
        fn reputations_stay_in_unit_interval(events in arb_events(), now in 0u64..35, window in 1u64..25) {
            let book = ReputationBook::from_events(&events);
            let buyers: Vec<BuyerId> = (0..3).map(|i| format!("b{i}")).collect();
            let params = ReputationParams::new(AggregationWeights::default(), window, 0.5).unwrap();
            for b in &buyers {
                for s in 0..3 {
                    let r = book.integrated(b, &format!("s{s}"), &buyers, &params, now);
                    prop_assert!((0.0..=1.0).contains(&r.value));
                    for c in [r.direct, r.recommended, r.referenced].into_iter().flatten() {
                        prop_assert!((0.0..=1.0).contains(&c));
                    }
                }
            }
        }

        #[test]
        fn direct_ignores_event_order(mut events in arb_events(), now in 0u64..35, window in 1u64..25, seed in any::<u64>()) {
            let before = direct_reputation(&events, window, now);
            let len = events.len();
            if len > 1 {
                events.swap(0, (seed as usize) % len);
                events.reverse();
            }
            prop_assert_eq!(before, direct_reputation(&events, window, now));
        }

        #[test]
        fn integrated_is_monotone(d in 0.0f64..1.0, r in 0.0f64..1.0, f in 0.0f64..1.0, bump in 0.0f64..1.0, which in 0usize..3) {
            let w = AggregationWeights::default();
            let mut parts = [Some(d), Some(r), Some(f)];
            let base = integrated_reputation(parts[0], parts[1], parts[2], &w, 0.5);
            parts[which] = parts[which].map(|x| (x + bump).min(1.0));
            prop_assert!(integrated_reputation(parts[0], parts[1], parts[2], &w, 0.5) >= base - 1e-15);
        }
    }
}
