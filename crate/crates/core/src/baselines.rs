//! Non-learning link predictors: the intersection-rule model, the
//! Cartesian-product predictor and the train-frequency fallback they share.
//!
//! Every predictor answers a [`Query`] with a [`RankedPrediction`], a total
//! order over all interned entities made of a short candidate prefix followed
//! by the shared fallback order (train frequency desc, entity id asc) with the
//! prefix entities removed.

use std::collections::HashMap;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::audit::{overlap_counts, AuditConfig, FindingKind, OverlapMode, RedundancyFinding};
use crate::store::{Dataset, Direction, EntityId, RelationId, Triple};

/// A link-prediction query: complete `direction` of a triple given `anchor`
/// on the other side.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Query {
    pub anchor: EntityId,
    pub relation: RelationId,
    pub direction: Direction,
}

impl Query {
    /// The query that asks for `triple`'s entity on side `direction`.
    pub fn for_triple(triple: &Triple, direction: Direction) -> Self {
        Query {
            anchor: triple.entity(direction.opposite()),
            relation: triple.relation,
            direction,
        }
    }

    /// The triple this query forms with `answer`.
    pub fn complete(&self, answer: EntityId) -> Triple {
        match self.direction {
            Direction::Tail => Triple::new(self.anchor, self.relation, answer),
            Direction::Head => Triple::new(answer, self.relation, self.anchor),
        }
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum OrderError {
    #[error("ordering has {found} entries, expected {expected}")]
    WrongLength { found: usize, expected: usize },
    #[error("entity {0} appears twice or is out of range")]
    NotAPermutation(u32),
}

/// A full permutation of the entity set with O(1) position lookup.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct FallbackOrder {
    order: Vec<EntityId>,
    position: Vec<u32>,
}

impl FallbackOrder {
    /// Train frequency descending, entity id ascending.
    pub fn by_frequency(ds: &Dataset) -> Self {
        let mut order: Vec<EntityId> = ds.entity_ids().collect();
        order.sort_by(|a, b| ds.entity_frequency(*b).cmp(&ds.entity_frequency(*a)).then(a.cmp(b)));
        Self::from_order_unchecked(order)
    }

    /// Wraps an arbitrary permutation of `0..num_entities`.
    pub fn from_order(order: Vec<EntityId>, num_entities: usize) -> Result<Self, OrderError> {
        if order.len() != num_entities {
            return Err(OrderError::WrongLength {
                found: order.len(),
                expected: num_entities,
            });
        }
        let mut seen = vec![false; num_entities];
        for e in &order {
            match seen.get_mut(e.index()) {
                Some(slot) if !*slot => *slot = true,
                _ => return Err(OrderError::NotAPermutation(e.0)),
            }
        }
        Ok(Self::from_order_unchecked(order))
    }

    fn from_order_unchecked(order: Vec<EntityId>) -> Self {
        let mut position = vec![0u32; order.len()];
        for (i, e) in order.iter().enumerate() {
            position[e.index()] = i as u32;
        }
        FallbackOrder { order, position }
    }

    pub fn len(&self) -> usize {
        self.order.len()
    }

    pub fn is_empty(&self) -> bool {
        self.order.is_empty()
    }

    pub fn as_slice(&self) -> &[EntityId] {
        &self.order
    }

    pub fn position(&self, e: EntityId) -> Option<usize> {
        self.position.get(e.index()).map(|&p| p as usize)
    }
}

/// Ranked answer to one query.
#[derive(Clone, Debug)]
pub struct RankedPrediction {
    query: Query,
    prefix: Vec<EntityId>,
    fallback: Arc<FallbackOrder>,
}

impl RankedPrediction {
    /// `prefix` followed by the rest of `fallback`. Duplicate and
    /// out-of-range prefix entries are dropped.
    pub fn new(query: Query, prefix: Vec<EntityId>, fallback: Arc<FallbackOrder>) -> Self {
        let mut seen = vec![false; fallback.len()];
        let prefix = prefix
            .into_iter()
            .filter(|e| match seen.get_mut(e.index()) {
                Some(slot) if !*slot => {
                    *slot = true;
                    true
                }
                _ => false,
            })
            .collect();
        RankedPrediction {
            query,
            prefix,
            fallback,
        }
    }

    pub fn query(&self) -> &Query {
        &self.query
    }

    /// Number of entities ranked by the predictor itself rather than by the
    /// fallback order.
    pub fn prefix_len(&self) -> usize {
        self.prefix.len()
    }

    pub fn prefix(&self) -> &[EntityId] {
        &self.prefix
    }

    pub fn len(&self) -> usize {
        self.fallback.len()
    }

    pub fn is_empty(&self) -> bool {
        self.fallback.is_empty()
    }

    /// The full ordering, best first.
    pub fn iter(&self) -> impl Iterator<Item = EntityId> + '_ {
        let mut in_prefix = vec![false; self.fallback.len()];
        for e in &self.prefix {
            in_prefix[e.index()] = true;
        }
        self.prefix.iter().copied().chain(
            self.fallback
                .as_slice()
                .iter()
                .copied()
                .filter(move |e| !in_prefix[e.index()]),
        )
    }

    pub fn to_vec(&self) -> Vec<EntityId> {
        self.iter().collect()
    }

    /// Position lookups without materialising the ordering.
    pub fn positions(&self) -> Positions<'_> {
        let in_prefix = self.prefix.iter().enumerate().map(|(i, e)| (*e, i)).collect();
        let mut prefix_fallback: Vec<usize> = self.prefix.iter().filter_map(|e| self.fallback.position(*e)).collect();
        prefix_fallback.sort_unstable();
        Positions {
            prediction: self,
            in_prefix,
            prefix_fallback,
        }
    }
}

/// Zero-based positions within a [`RankedPrediction`].
pub struct Positions<'a> {
    prediction: &'a RankedPrediction,
    in_prefix: HashMap<EntityId, usize>,
    prefix_fallback: Vec<usize>,
}

impl Positions<'_> {
    pub fn position(&self, e: EntityId) -> Option<usize> {
        if let Some(&i) = self.in_prefix.get(&e) {
            return Some(i);
        }
        let p = self.prediction.fallback.position(e)?;
        let moved_ahead = self.prefix_fallback.partition_point(|&q| q < p);
        Some(self.prediction.prefix.len() + p - moved_ahead)
    }
}

/// Anything that ranks entities for a query.
pub trait Predictor: Sync {
    fn predict(&self, query: &Query) -> RankedPrediction;

    fn name(&self) -> &str;
}

/// Orders scored candidates: score descending, then support descending,
/// then fallback position.
pub(crate) fn order_candidates(scores: HashMap<EntityId, (f64, u32)>, fallback: &FallbackOrder) -> Vec<EntityId> {
    let mut scored: Vec<(EntityId, f64, u32, usize)> = scores
        .into_iter()
        .map(|(e, (s, n))| (e, s, n, fallback.position(e).unwrap_or(usize::MAX)))
        .collect();
    scored.sort_by(|a, b| {
        b.1.total_cmp(&a.1)
            .then(b.2.cmp(&a.2))
            .then(a.3.cmp(&b.3))
            .then(a.0.cmp(&b.0))
    });
    scored.into_iter().map(|c| c.0).collect()
}

/// Ranks every query by train frequency alone.
pub struct FrequencyPredictor {
    fallback: Arc<FallbackOrder>,
}

impl FrequencyPredictor {
    pub fn new(ds: &Dataset) -> Self {
        FrequencyPredictor {
            fallback: Arc::new(FallbackOrder::by_frequency(ds)),
        }
    }
}

impl Predictor for FrequencyPredictor {
    fn predict(&self, query: &Query) -> RankedPrediction {
        RankedPrediction::new(*query, Vec::new(), self.fallback.clone())
    }

    fn name(&self) -> &str {
        "frequency"
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Orientation {
    /// `(h, source, t) ⇒ (h, target, t)`
    Same,
    /// `(h, source, t) ⇒ (t, target, h)`
    Reversed,
}

/// A single-atom implication mined from pair-set intersections.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IntersectionRule {
    pub source: RelationId,
    pub target: RelationId,
    pub orientation: Orientation,
    /// `|T_source ∩ T_target^(±1)| / |target|`
    pub confidence: f64,
}

/// Name-resolved rule for JSON export.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IntersectionRuleRecord {
    pub source: String,
    pub target: String,
    pub orientation: Orientation,
    pub confidence: f64,
}

impl IntersectionRule {
    pub fn to_record(&self, ds: &Dataset) -> IntersectionRuleRecord {
        IntersectionRuleRecord {
            source: ds.relation_name(self.source).to_owned(),
            target: ds.relation_name(self.target).to_owned(),
            orientation: self.orientation,
            confidence: self.confidence,
        }
    }
}

/// Rules `source ⇒ target` whose share of the target's instances explained
/// by the source (same or reversed orientation) exceeds `θ1`. Symmetric
/// self-rules are included; trivial `r ⇒ r` same-orientation rules are not.
///
/// Reads the train split only. Sorted by target, source, orientation.
pub fn build_intersection_rules(ds: &Dataset, config: &AuditConfig) -> Vec<IntersectionRule> {
    let index = ds.train_index();
    let count = |r: RelationId| index.profile(r).triple_count as f64;
    let mut rules = Vec::new();
    for (mode, orientation) in [
        (OverlapMode::Forward, Orientation::Same),
        (OverlapMode::Reversed, Orientation::Reversed),
    ] {
        for ((a, b), shared) in overlap_counts(index, mode) {
            let shared = shared as f64;
            let directions: &[(RelationId, RelationId)] = if a == b { &[(a, a)] } else { &[(a, b), (b, a)] };
            for &(source, target) in directions {
                let confidence = shared / count(target);
                if confidence > config.theta1 {
                    rules.push(IntersectionRule {
                        source,
                        target,
                        orientation,
                        confidence,
                    });
                }
            }
        }
    }
    rules.sort_by_key(|x| (x.target, x.source, x.orientation));
    rules
}

/// Entities that `rule` proposes for `query`, read from the train split.
pub fn instantiate_rule<'a>(
    ds: &'a Dataset,
    rule: &IntersectionRule,
    query: &Query,
) -> impl Iterator<Item = EntityId> + 'a {
    let wanted = match rule.orientation {
        Orientation::Same => query.direction,
        Orientation::Reversed => query.direction.opposite(),
    };
    // a reversed self-rule must not prove (a, r, a) from itself
    let self_loop = rule.orientation == Orientation::Reversed && rule.source == query.relation;
    let anchor = query.anchor;
    ds.train_index()
        .neighbors(anchor, rule.source, wanted)
        .iter()
        .copied()
        .filter(move |&e| !(self_loop && e == anchor))
}

/// The intersection-rule model.
pub struct RulePredictor<'a> {
    ds: &'a Dataset,
    by_target: HashMap<RelationId, Vec<IntersectionRule>>,
    fallback: Arc<FallbackOrder>,
}

impl<'a> RulePredictor<'a> {
    pub fn new(ds: &'a Dataset, rules: &[IntersectionRule]) -> Self {
        let mut by_target: HashMap<RelationId, Vec<IntersectionRule>> = HashMap::new();
        for rule in rules {
            by_target.entry(rule.target).or_default().push(rule.clone());
        }
        RulePredictor {
            ds,
            by_target,
            fallback: Arc::new(FallbackOrder::by_frequency(ds)),
        }
    }

    pub fn rules_for(&self, relation: RelationId) -> &[IntersectionRule] {
        self.by_target.get(&relation).map(Vec::as_slice).unwrap_or(&[])
    }
}

impl Predictor for RulePredictor<'_> {
    fn predict(&self, query: &Query) -> RankedPrediction {
        let mut scores: HashMap<EntityId, (f64, u32)> = HashMap::new();
        for rule in self.rules_for(query.relation) {
            for e in instantiate_rule(self.ds, rule, query) {
                let entry = scores.entry(e).or_insert((0.0, 0));
                entry.0 = entry.0.max(rule.confidence);
                entry.1 += 1;
            }
        }
        let prefix = order_candidates(scores, &self.fallback);
        RankedPrediction::new(*query, prefix, self.fallback.clone())
    }

    fn name(&self) -> &str {
        "rule"
    }
}

/// Convenience wrapper for a single query.
pub fn predict_rule(ds: &Dataset, rules: &[IntersectionRule], query: &Query) -> RankedPrediction {
    RulePredictor::new(ds, rules).predict(query)
}

/// Predicts any subject (object) of a flagged Cartesian relation.
pub struct CartesianPredictor {
    /// Per flagged relation: ranked subjects and ranked objects.
    ranked: HashMap<RelationId, (Vec<EntityId>, Vec<EntityId>)>,
    fallback: Arc<FallbackOrder>,
}

impl CartesianPredictor {
    /// Uses the train-split `S_r` and `O_r` of every Cartesian finding.
    pub fn new(ds: &Dataset, findings: &[RedundancyFinding]) -> Self {
        let fallback = Arc::new(FallbackOrder::by_frequency(ds));
        let mut ranked = HashMap::new();
        for f in findings.iter().filter(|f| f.kind == FindingKind::Cartesian) {
            if f.first.index() >= ds.num_relations() {
                continue;
            }
            let profile = ds.train_index().profile(f.first);
            let mut subj_count: HashMap<EntityId, u32> = HashMap::new();
            let mut obj_count: HashMap<EntityId, u32> = HashMap::new();
            for &(h, t) in &profile.pairs {
                *subj_count.entry(h).or_default() += 1;
                *obj_count.entry(t).or_default() += 1;
            }
            let rank = |counts: HashMap<EntityId, u32>| {
                let scores = counts.into_iter().map(|(e, n)| (e, (n as f64, 0))).collect();
                order_candidates(scores, &fallback)
            };
            ranked.insert(f.first, (rank(subj_count), rank(obj_count)));
        }
        CartesianPredictor { ranked, fallback }
    }

    pub fn is_flagged(&self, relation: RelationId) -> bool {
        self.ranked.contains_key(&relation)
    }
}

impl Predictor for CartesianPredictor {
    fn predict(&self, query: &Query) -> RankedPrediction {
        let prefix = match (self.ranked.get(&query.relation), query.direction) {
            (Some((subjects, _)), Direction::Head) => subjects.clone(),
            (Some((_, objects)), Direction::Tail) => objects.clone(),
            (None, _) => Vec::new(),
        };
        RankedPrediction::new(*query, prefix, self.fallback.clone())
    }

    fn name(&self) -> &str {
        "cartesian"
    }
}

pub fn predict_cartesian(ds: &Dataset, findings: &[RedundancyFinding], query: &Query) -> RankedPrediction {
    CartesianPredictor::new(ds, findings).predict(query)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::audit::cartesian_finding;
    use crate::store::{DatasetBuilder, Split, SplitSet};

    fn ds_from(train: &[(&str, &str, &str)]) -> Dataset {
        let mut b = DatasetBuilder::new();
        for (h, r, t) in train {
            b.push(Split::Train, h, r, t);
        }
        b.build(SplitSet::TRAIN).unwrap()
    }

    fn is_permutation(order: &[EntityId], n: usize) -> bool {
        let mut seen = vec![false; n];
        order.len() == n
            && order.iter().all(|e| {
                let fresh = !seen[e.index()];
                seen[e.index()] = true;
                fresh
            })
    }

    #[test]
    fn fallback_orders_by_frequency_then_id() {
        let ds = ds_from(&[("a", "r", "b"), ("c", "r", "b"), ("d", "r", "c")]);
        let order: Vec<&str> = FallbackOrder::by_frequency(&ds)
            .as_slice()
            .iter()
            .map(|e| ds.entity_name(*e))
            .collect();
        assert_eq!(order, vec!["b", "c", "a", "d"]);
    }

    #[test]
    fn from_order_rejects_non_permutations() {
        let e = |i| EntityId(i);
        assert!(FallbackOrder::from_order(vec![e(1), e(0)], 2).is_ok());
        assert_eq!(
            FallbackOrder::from_order(vec![e(0), e(0)], 2),
            Err(OrderError::NotAPermutation(0))
        );
        assert!(FallbackOrder::from_order(vec![e(0)], 2).is_err());
        assert!(FallbackOrder::from_order(vec![e(0), e(5)], 2).is_err());
    }

    #[test]
    fn positions_match_materialised_order() {
        let fallback = Arc::new(FallbackOrder::from_order((0..8).rev().map(EntityId).collect(), 8).unwrap());
        let q = Query {
            anchor: EntityId(0),
            relation: RelationId(0),
            direction: Direction::Tail,
        };
        let p = RankedPrediction::new(q, vec![EntityId(3), EntityId(6), EntityId(3), EntityId(1)], fallback);
        let order = p.to_vec();
        assert!(is_permutation(&order, 8));
        assert_eq!(p.prefix_len(), 3);
        let pos = p.positions();
        for (i, e) in order.iter().enumerate() {
            assert_eq!(pos.position(*e), Some(i));
        }
        assert_eq!(pos.position(EntityId(99)), None);
    }

    #[test]
    fn empty_rule_set_gives_fallback_order() {
        let ds = ds_from(&[("a", "r", "b"), ("b", "r", "c")]);
        let q = Query {
            anchor: EntityId(0),
            relation: RelationId(0),
            direction: Direction::Tail,
        };
        let p = predict_rule(&ds, &[], &q);
        assert_eq!(p.to_vec(), FallbackOrder::by_frequency(&ds).as_slice());
        assert_eq!(p.prefix_len(), 0);
    }

    #[test]
    fn single_non_symmetric_relation_has_no_rules() {
        let ds = ds_from(&[("a", "r", "b"), ("b", "r", "c")]);
        assert!(build_intersection_rules(&ds, &AuditConfig::default()).is_empty());
    }

    #[test]
    fn ninety_percent_reversed_overlap() {
        // fwd(x_i, y_i) for i in 0..10; bwd(y_i, x_i) for i in 0..9 plus one stray.
        let mut owned = Vec::new();
        for i in 0..10 {
            owned.push((format!("x{i}"), "fwd", format!("y{i}")));
        }
        for i in 0..9 {
            owned.push((format!("y{i}"), "bwd", format!("x{i}")));
        }
        owned.push(("s".to_string(), "bwd", "z".to_string()));
        let train: Vec<(&str, &str, &str)> = owned.iter().map(|(h, r, t)| (h.as_str(), *r, t.as_str())).collect();
        let ds = ds_from(&train);
        let rules = build_intersection_rules(&ds, &AuditConfig::default());
        assert_eq!(rules.len(), 2);
        for rule in &rules {
            assert_eq!(rule.orientation, Orientation::Reversed);
            assert!((rule.confidence - 0.9).abs() < 1e-12);
            assert_ne!(rule.source, rule.target);
        }
    }

    #[test]
    fn rule_prediction_orders_candidates() {
        let ds = ds_from(&[
            ("a", "has_part", "b"),
            ("b", "part_of", "a"),
            ("c", "has_part", "d"),
            ("d", "part_of", "c"),
            ("e", "has_part", "f"),
            ("f", "part_of", "e"),
        ]);
        let rules = build_intersection_rules(&ds, &AuditConfig::default());
        assert_eq!(rules.len(), 2);
        let part_of = ds.relation_id("part_of").unwrap();
        let q = Query {
            anchor: ds.entity_id("a").unwrap(),
            relation: part_of,
            direction: Direction::Head,
        };
        // (?, part_of, a) ← (a, has_part, ?)
        let p = predict_rule(&ds, &rules, &q);
        assert_eq!(p.prefix(), &[ds.entity_id("b").unwrap()]);
        assert!(is_permutation(&p.to_vec(), ds.num_entities()));
    }

    #[test]
    fn cartesian_prefix_and_fallback() {
        let ds = ds_from(&[
            ("tokyo", "climate", "jan"),
            ("tokyo", "climate", "feb"),
            ("paris", "climate", "jan"),
            ("paris", "climate", "feb"),
            ("rome", "climate", "jan"),
            ("tokyo", "capital_of", "japan"),
        ]);
        let climate = ds.relation_id("climate").unwrap();
        let findings = vec![cartesian_finding(&ds, climate).unwrap()];
        let q = Query {
            anchor: ds.entity_id("rome").unwrap(),
            relation: climate,
            direction: Direction::Tail,
        };
        let p = predict_cartesian(&ds, &findings, &q);
        let names: Vec<&str> = p.prefix().iter().map(|e| ds.entity_name(*e)).collect();
        assert_eq!(names, vec!["jan", "feb"]);

        let other = Query {
            relation: ds.relation_id("capital_of").unwrap(),
            ..q
        };
        let p = predict_cartesian(&ds, &findings, &other);
        assert_eq!(p.to_vec(), FallbackOrder::by_frequency(&ds).as_slice());
    }
}
