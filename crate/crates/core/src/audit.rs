//! Statistical redundancy detection.
//!
//! Covers near-duplicate and reverse-duplicate relation pairs (pair-set
//! overlap against both relations' instance counts), symmetric relations,
//! Cartesian-product relations (fill ratio of `S_r × O_r`), relation
//! cardinality categories, and the 4-bit per-test-triple redundancy code.
//!
//! Everything here is a pure function of a [`Dataset`]. Pair overlaps are
//! computed from an inverted pair → relations index, so the cost is
//! proportional to the number of co-occurring pairs rather than to
//! `|R|²` set intersections.

use std::collections::{BTreeMap, HashMap};
use std::fmt;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::store::{Dataset, EntityId, GraphIndex, RelationId, Split, Triple};

#[derive(Debug, Error, PartialEq)]
pub enum AuditError {
    #[error("relation {0} has no triples in the indexed scope")]
    EmptyRelation(String),
    #[error("invalid audit config: {0}")]
    InvalidConfig(String),
    #[error("finding references unknown relation id {0}")]
    UnknownRelation(u32),
}

/// Detection thresholds.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AuditConfig {
    /// Overlap threshold against the first relation's instance count.
    pub theta1: f64,
    /// Overlap threshold against the second relation's instance count.
    pub theta2: f64,
    /// Minimum fill ratio for a Cartesian-product relation.
    pub cartesian_threshold: f64,
    /// Relations with fewer instance triples are never reported as Cartesian.
    pub min_triples: usize,
    /// Average heads-per-tail / tails-per-head below this marks a "1" side.
    pub category_cutoff: f64,
}

impl Default for AuditConfig {
    fn default() -> Self {
        AuditConfig {
            theta1: 0.8,
            theta2: 0.8,
            cartesian_threshold: 0.8,
            min_triples: 2,
            category_cutoff: 1.5,
        }
    }
}

impl AuditConfig {
    pub fn validate(&self) -> Result<(), AuditError> {
        for (name, v) in [
            ("theta1", self.theta1),
            ("theta2", self.theta2),
            ("cartesian_threshold", self.cartesian_threshold),
        ] {
            if !(v > 0.0 && v <= 1.0) {
                return Err(AuditError::InvalidConfig(format!("{name} must be in (0, 1], got {v}")));
            }
        }
        if self.min_triples < 1 {
            return Err(AuditError::InvalidConfig("min_triples must be >= 1".into()));
        }
        if self.category_cutoff.is_nan() || self.category_cutoff <= 0.0 {
            return Err(AuditError::InvalidConfig(format!(
                "category_cutoff must be > 0, got {}",
                self.category_cutoff
            )));
        }
        Ok(())
    }
}

/// Whether the second relation's pair set is intersected as-is or inverted.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OverlapMode {
    Forward,
    Reversed,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FindingKind {
    Duplicate,
    ReverseDuplicate,
    Symmetric,
    Cartesian,
}

impl fmt::Display for FindingKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            FindingKind::Duplicate => "duplicate",
            FindingKind::ReverseDuplicate => "reverse-duplicate",
            FindingKind::Symmetric => "symmetric",
            FindingKind::Cartesian => "cartesian",
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RedundancyFinding {
    pub kind: FindingKind,
    pub first: RelationId,
    /// Present for duplicate and reverse-duplicate findings only.
    pub second: Option<RelationId>,
    /// Overlap over `|first|`, or the fill ratio for Cartesian findings.
    pub ratio1: f64,
    /// Overlap over `|second|`; equal to `ratio1` for symmetric findings and
    /// absent for Cartesian ones.
    pub ratio2: Option<f64>,
}

impl RedundancyFinding {
    pub fn relations(&self) -> impl Iterator<Item = RelationId> {
        std::iter::once(self.first).chain(self.second)
    }

    pub fn to_record(&self, ds: &Dataset) -> FindingRecord {
        FindingRecord {
            kind: self.kind,
            relations: self.relations().map(|r| ds.relation_name(r).to_owned()).collect(),
            ratio1: self.ratio1,
            ratio2: self.ratio2,
        }
    }
}

/// Name-resolved finding, as written to JSON and CSV.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FindingRecord {
    pub kind: FindingKind,
    pub relations: Vec<String>,
    pub ratio1: f64,
    pub ratio2: Option<f64>,
}

/// `(|T_r1 ∩ T_r2^(±1)| / |r1|, |T_r1 ∩ T_r2^(±1)| / |r2|)` over the
/// indexed scope.
pub fn overlap_ratio(
    ds: &Dataset,
    r1: RelationId,
    r2: RelationId,
    mode: OverlapMode,
) -> Result<(f64, f64), AuditError> {
    let p1 = ds.relation_profile(r1);
    let p2 = ds.relation_profile(r2);
    for p in [p1, p2] {
        if p.is_empty() {
            return Err(AuditError::EmptyRelation(ds.relation_name(p.relation).to_owned()));
        }
    }
    let shared = p1
        .pairs
        .iter()
        .filter(|&&(h, t)| match mode {
            OverlapMode::Forward => p2.contains_pair(h, t),
            OverlapMode::Reversed => p2.contains_pair(t, h),
        })
        .count() as f64;
    Ok((shared / p1.triple_count as f64, shared / p2.triple_count as f64))
}

/// Intersection sizes `|T_a ∩ T_b^(±1)|` for every relation pair with a
/// non-empty intersection, keyed by `(a, b)` with `a < b` (`a <= b` in
/// reversed mode, where `a == b` measures symmetry).
pub fn overlap_counts(index: &GraphIndex, mode: OverlapMode) -> BTreeMap<(RelationId, RelationId), usize> {
    let mut by_pair: HashMap<(EntityId, EntityId), Vec<RelationId>> = HashMap::new();
    for profile in index.profiles() {
        for &pair in &profile.pairs {
            by_pair.entry(pair).or_default().push(profile.relation);
        }
    }

    let partial: Vec<Vec<((RelationId, RelationId), usize)>> = index
        .profiles()
        .par_iter()
        .map(|profile| {
            let a = profile.relation;
            let mut counts: HashMap<RelationId, usize> = HashMap::new();
            for &(h, t) in &profile.pairs {
                let key = match mode {
                    OverlapMode::Forward => (h, t),
                    OverlapMode::Reversed => (t, h),
                };
                let Some(partners) = by_pair.get(&key) else {
                    continue;
                };
                for &b in partners {
                    let keep = match mode {
                        OverlapMode::Forward => b > a,
                        OverlapMode::Reversed => b >= a,
                    };
                    if keep {
                        *counts.entry(b).or_default() += 1;
                    }
                }
            }
            counts.into_iter().map(|(b, c)| ((a, b), c)).collect()
        })
        .collect();
    partial.into_iter().flatten().collect()
}

fn exceeds(a: f64, b: f64, config: &AuditConfig) -> bool {
    (a > config.theta1 && b > config.theta2) || (b > config.theta1 && a > config.theta2)
}

/// All relation pairs whose overlap ratios both exceed `(θ1, θ2)`.
///
/// Pairs are unordered: a pair is flagged when either assignment of its two
/// relations to `(r1, r2)` passes. In reversed mode a relation paired with
/// itself is reported as [`FindingKind::Symmetric`]. Output is sorted by
/// relation ids.
pub fn detect_redundant_pairs(ds: &Dataset, config: &AuditConfig, mode: OverlapMode) -> Vec<RedundancyFinding> {
    let index = ds.index();
    overlap_counts(index, mode)
        .into_iter()
        .filter_map(|((a, b), shared)| {
            let na = index.profile(a).triple_count as f64;
            let nb = index.profile(b).triple_count as f64;
            let (ra, rb) = (shared as f64 / na, shared as f64 / nb);
            if !exceeds(ra, rb, config) {
                return None;
            }
            let kind = match (mode, a == b) {
                (OverlapMode::Forward, _) => FindingKind::Duplicate,
                (OverlapMode::Reversed, false) => FindingKind::ReverseDuplicate,
                (OverlapMode::Reversed, true) => FindingKind::Symmetric,
            };
            Some(RedundancyFinding {
                kind,
                first: a,
                second: (a != b).then_some(b),
                ratio1: ra,
                ratio2: Some(rb),
            })
        })
        .collect()
}

/// Relations whose fill ratio `|T_r| / (|S_r|·|O_r|)` exceeds the Cartesian
/// threshold, skipping relations with fewer than `min_triples` instances.
pub fn detect_cartesian(ds: &Dataset, config: &AuditConfig) -> Vec<RedundancyFinding> {
    ds.index()
        .profiles()
        .iter()
        .filter(|p| p.triple_count >= config.min_triples)
        .filter_map(|p| {
            let fill = p.fill_ratio()?;
            (fill > config.cartesian_threshold).then(|| cartesian_finding_from(p.relation, fill))
        })
        .collect()
}

/// A Cartesian finding for `relation` regardless of its fill ratio, for
/// callers that already know which relations to treat as Cartesian.
pub fn cartesian_finding(ds: &Dataset, relation: RelationId) -> Result<RedundancyFinding, AuditError> {
    let fill = ds
        .relation_profile(relation)
        .fill_ratio()
        .ok_or_else(|| AuditError::EmptyRelation(ds.relation_name(relation).to_owned()))?;
    Ok(cartesian_finding_from(relation, fill))
}

fn cartesian_finding_from(relation: RelationId, fill: f64) -> RedundancyFinding {
    RedundancyFinding {
        kind: FindingKind::Cartesian,
        first: relation,
        second: None,
        ratio1: fill,
        ratio2: None,
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum RelationCategory {
    #[serde(rename = "1-1")]
    OneToOne,
    #[serde(rename = "1-n")]
    OneToMany,
    #[serde(rename = "n-1")]
    ManyToOne,
    #[serde(rename = "n-m")]
    ManyToMany,
}

impl RelationCategory {
    pub const ALL: [RelationCategory; 4] = [
        RelationCategory::OneToOne,
        RelationCategory::OneToMany,
        RelationCategory::ManyToOne,
        RelationCategory::ManyToMany,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            RelationCategory::OneToOne => "1-1",
            RelationCategory::OneToMany => "1-n",
            RelationCategory::ManyToOne => "n-1",
            RelationCategory::ManyToMany => "n-m",
        }
    }
}

impl fmt::Display for RelationCategory {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Cardinality class from train-split statistics.
///
/// The head side is "1" when the average number of distinct heads per
/// distinct tail is below `cutoff`; the tail side likewise with tails per
/// head.
pub fn classify_relation_category(
    ds: &Dataset,
    relation: RelationId,
    cutoff: f64,
) -> Result<RelationCategory, AuditError> {
    let p = ds.train_index().profile(relation);
    if p.is_empty() {
        return Err(AuditError::EmptyRelation(ds.relation_name(relation).to_owned()));
    }
    let pairs = p.pair_count() as f64;
    let heads_per_tail = pairs / p.objects.len() as f64;
    let tails_per_head = pairs / p.subjects.len() as f64;
    Ok(match (heads_per_tail < cutoff, tails_per_head < cutoff) {
        (true, true) => RelationCategory::OneToOne,
        (true, false) => RelationCategory::OneToMany,
        (false, true) => RelationCategory::ManyToOne,
        (false, false) => RelationCategory::ManyToMany,
    })
}

/// Categories of every relation that has train triples.
pub fn relation_categories(ds: &Dataset, cutoff: f64) -> BTreeMap<RelationId, RelationCategory> {
    ds.relation_ids()
        .filter_map(|r| classify_relation_category(ds, r, cutoff).ok().map(|c| (r, c)))
        .collect()
}

/// 4-bit redundancy label of a test triple.
///
/// bit 3: reverse triple in train, bit 2: (reverse-)duplicate triple in
/// train, bit 1: reverse triple in test, bit 0: (reverse-)duplicate triple in
/// test.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct RedundancyCode(u8);

impl RedundancyCode {
    pub const REVERSE_IN_TRAIN: u8 = 0b1000;
    pub const DUPLICATE_IN_TRAIN: u8 = 0b0100;
    pub const REVERSE_IN_TEST: u8 = 0b0010;
    pub const DUPLICATE_IN_TEST: u8 = 0b0001;

    pub fn new(bits: u8) -> Option<Self> {
        (bits < 16).then_some(RedundancyCode(bits))
    }

    pub fn bits(self) -> u8 {
        self.0
    }

    pub fn has(self, flag: u8) -> bool {
        self.0 & flag != 0
    }

    pub fn parse(s: &str) -> Option<Self> {
        if s.len() != 4 {
            return None;
        }
        u8::from_str_radix(s, 2).ok().and_then(Self::new)
    }
}

impl fmt::Display for RedundancyCode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:04b}", self.0)
    }
}

/// How reverse-duplicate findings between two distinct relations feed the
/// redundancy code.
///
/// Without an external reverse-relation oracle, every statistically detected
/// reverse pair is the best available notion of "reverse". `ReverseOnly`
/// counts such matches under the reverse bits alone; `Both` additionally
/// sets the duplicate bits, treating them as "reverse duplicates" too.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ReverseDuplicatePolicy {
    #[default]
    ReverseOnly,
    Both,
}

/// Per-relation partner lists derived from findings, used to label triples.
#[derive(Clone, Debug)]
pub struct RedundancyIndex {
    /// Relations whose swapped triples count as reverses (incl. self for
    /// symmetric relations).
    reverse: Vec<Vec<RelationId>>,
    /// `(partner, swapped)` whose triples count as duplicates.
    duplicate: Vec<Vec<(RelationId, bool)>>,
}

impl RedundancyIndex {
    pub fn new(
        ds: &Dataset,
        findings: &[RedundancyFinding],
        policy: ReverseDuplicatePolicy,
    ) -> Result<Self, AuditError> {
        let n = ds.num_relations();
        let mut reverse = vec![Vec::new(); n];
        let mut duplicate = vec![Vec::new(); n];
        for f in findings {
            for r in f.relations() {
                if r.index() >= n {
                    return Err(AuditError::UnknownRelation(r.0));
                }
            }
            match (f.kind, f.second) {
                (FindingKind::Symmetric, _) => reverse[f.first.index()].push(f.first),
                (FindingKind::ReverseDuplicate, Some(b)) => {
                    let a = f.first;
                    reverse[a.index()].push(b);
                    reverse[b.index()].push(a);
                    if policy == ReverseDuplicatePolicy::Both {
                        duplicate[a.index()].push((b, true));
                        duplicate[b.index()].push((a, true));
                    }
                }
                (FindingKind::Duplicate, Some(b)) => {
                    let a = f.first;
                    duplicate[a.index()].push((b, false));
                    duplicate[b.index()].push((a, false));
                }
                _ => {}
            }
        }
        for list in &mut reverse {
            list.sort_unstable();
            list.dedup();
        }
        for list in &mut duplicate {
            list.sort_unstable();
            list.dedup();
        }
        Ok(RedundancyIndex { reverse, duplicate })
    }

    fn reverse_candidates<'a>(&'a self, t: &'a Triple) -> impl Iterator<Item = Triple> + 'a {
        self.reverse
            .get(t.relation.index())
            .into_iter()
            .flatten()
            .map(move |&r| Triple::new(t.tail, r, t.head))
    }

    fn duplicate_candidates<'a>(&'a self, t: &'a Triple) -> impl Iterator<Item = Triple> + 'a {
        self.duplicate
            .get(t.relation.index())
            .into_iter()
            .flatten()
            .map(move |&(r, swapped)| {
                if swapped {
                    Triple::new(t.tail, r, t.head)
                } else {
                    Triple::new(t.head, r, t.tail)
                }
            })
    }

    /// Whether `triple` has a reverse triple in `split` (the triple itself
    /// never counts).
    pub fn has_reverse(&self, ds: &Dataset, triple: &Triple, split: Split) -> bool {
        self.reverse_candidates(triple)
            .any(|c| c != *triple && ds.contains(&c, split.into()))
    }

    /// Whether `triple` has a (reverse-)duplicate triple in `split`.
    pub fn has_duplicate(&self, ds: &Dataset, triple: &Triple, split: Split) -> bool {
        self.duplicate_candidates(triple)
            .any(|c| c != *triple && ds.contains(&c, split.into()))
    }

    pub fn code(&self, ds: &Dataset, triple: &Triple) -> RedundancyCode {
        let mut bits = 0;
        if self.has_reverse(ds, triple, Split::Train) {
            bits |= RedundancyCode::REVERSE_IN_TRAIN;
        }
        if self.has_duplicate(ds, triple, Split::Train) {
            bits |= RedundancyCode::DUPLICATE_IN_TRAIN;
        }
        if self.has_reverse(ds, triple, Split::Test) {
            bits |= RedundancyCode::REVERSE_IN_TEST;
        }
        if self.has_duplicate(ds, triple, Split::Test) {
            bits |= RedundancyCode::DUPLICATE_IN_TEST;
        }
        RedundancyCode(bits)
    }
}

/// The redundancy code of one test triple.
pub fn redundancy_code(ds: &Dataset, index: &RedundancyIndex, test_triple: &Triple) -> RedundancyCode {
    index.code(ds, test_triple)
}

/// Code counts over every test triple line. Counts sum to `|test|`.
pub fn code_histogram(ds: &Dataset, index: &RedundancyIndex) -> BTreeMap<RedundancyCode, usize> {
    let mut hist = BTreeMap::new();
    for t in ds.test() {
        *hist.entry(index.code(ds, t)).or_insert(0) += 1;
    }
    hist
}

/// Codes sorted by descending count, ties by code.
pub fn ranked_codes(hist: &BTreeMap<RedundancyCode, usize>) -> Vec<(RedundancyCode, usize)> {
    let mut v: Vec<_> = hist.iter().map(|(c, n)| (*c, *n)).collect();
    v.sort_by(|a, b| b.1.cmp(&a.1).then(a.0.cmp(&b.0)));
    v
}

/// Reverse-triple leakage counts.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct LeakageStats {
    pub train_triples: usize,
    /// Train triples whose reverse is also in train.
    pub train_in_reverse_pairs: usize,
    pub test_triples: usize,
    pub test_with_reverse_in_train: usize,
    pub test_with_duplicate_in_train: usize,
    pub test_with_reverse_in_test: usize,
    pub test_with_duplicate_in_test: usize,
}

pub fn leakage_stats(ds: &Dataset, index: &RedundancyIndex) -> LeakageStats {
    let train_in_reverse_pairs = ds
        .train()
        .par_iter()
        .filter(|t| index.has_reverse(ds, t, Split::Train))
        .count();
    let codes: Vec<RedundancyCode> = ds.test().par_iter().map(|t| index.code(ds, t)).collect();
    let count = |flag| codes.iter().filter(|c| c.has(flag)).count();
    LeakageStats {
        train_triples: ds.train().len(),
        train_in_reverse_pairs,
        test_triples: ds.test().len(),
        test_with_reverse_in_train: count(RedundancyCode::REVERSE_IN_TRAIN),
        test_with_duplicate_in_train: count(RedundancyCode::DUPLICATE_IN_TRAIN),
        test_with_reverse_in_test: count(RedundancyCode::REVERSE_IN_TEST),
        test_with_duplicate_in_test: count(RedundancyCode::DUPLICATE_IN_TEST),
    }
}

/// Everything the `audit` command reports.
#[derive(Clone, Debug)]
pub struct AuditReport {
    pub duplicates: Vec<RedundancyFinding>,
    pub reversed: Vec<RedundancyFinding>,
    pub cartesian: Vec<RedundancyFinding>,
    pub categories: BTreeMap<RelationId, RelationCategory>,
    pub histogram: BTreeMap<RedundancyCode, usize>,
    pub leakage: LeakageStats,
}

impl AuditReport {
    /// Duplicate, reverse-duplicate and symmetric findings.
    pub fn pair_findings(&self) -> Vec<RedundancyFinding> {
        self.duplicates.iter().chain(&self.reversed).cloned().collect()
    }

    pub fn all_findings(&self) -> Vec<RedundancyFinding> {
        let mut all = self.pair_findings();
        all.extend(self.cartesian.iter().cloned());
        all
    }

    pub fn cartesian_triples(&self, ds: &Dataset) -> usize {
        self.cartesian
            .iter()
            .map(|f| ds.relation_profile(f.first).triple_count)
            .sum()
    }
}

pub fn run_audit(
    ds: &Dataset,
    config: &AuditConfig,
    policy: ReverseDuplicatePolicy,
) -> Result<AuditReport, AuditError> {
    config.validate()?;
    let duplicates = detect_redundant_pairs(ds, config, OverlapMode::Forward);
    let reversed = detect_redundant_pairs(ds, config, OverlapMode::Reversed);
    let cartesian = detect_cartesian(ds, config);
    let pairs: Vec<RedundancyFinding> = duplicates.iter().chain(&reversed).cloned().collect();
    let index = RedundancyIndex::new(ds, &pairs, policy)?;
    Ok(AuditReport {
        histogram: code_histogram(ds, &index),
        leakage: leakage_stats(ds, &index),
        categories: relation_categories(ds, config.category_cutoff),
        duplicates,
        reversed,
        cartesian,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::store::{DatasetBuilder, SplitSet};

    fn build(train: &[(&str, &str, &str)], test: &[(&str, &str, &str)]) -> Dataset {
        let mut b = DatasetBuilder::new();
        for (h, r, t) in train {
            b.push(Split::Train, h, r, t);
        }
        for (h, r, t) in test {
            b.push(Split::Test, h, r, t);
        }
        b.build(SplitSet::TRAIN).unwrap()
    }

    #[test]
    fn self_overlap_is_one() {
        let ds = build(&[("a", "r", "b"), ("c", "r", "d")], &[]);
        let r = RelationId(0);
        assert_eq!(overlap_ratio(&ds, r, r, OverlapMode::Forward).unwrap(), (1.0, 1.0));
    }

    #[test]
    fn empty_relation_is_an_error() {
        let ds = build(&[("a", "r", "b")], &[("a", "q", "b")]);
        let q = ds.relation_id("q").unwrap();
        assert_eq!(
            overlap_ratio(&ds, RelationId(0), q, OverlapMode::Forward),
            Err(AuditError::EmptyRelation("q".into()))
        );
        assert!(classify_relation_category(&ds, q, 1.5).is_err());
    }

    #[test]
    fn exact_threshold_is_not_flagged() {
        // 5 pairs each, 4 shared: both ratios are exactly 0.8.
        let mut train = Vec::new();
        let names: Vec<String> = (0..12).map(|i| format!("e{i}")).collect();
        for i in 0..5 {
            train.push((names[i].as_str(), "r1", names[i + 6].as_str()));
        }
        for i in 0..4 {
            train.push((names[i].as_str(), "r2", names[i + 6].as_str()));
        }
        train.push(("e5", "r2", "e11"));
        let ds = build(&train, &[]);
        let (a, b) = overlap_ratio(&ds, RelationId(0), RelationId(1), OverlapMode::Forward).unwrap();
        assert_eq!((a, b), (0.8, 0.8));
        let cfg = AuditConfig::default();
        assert!(detect_redundant_pairs(&ds, &cfg, OverlapMode::Forward).is_empty());
        let looser = AuditConfig {
            theta1: 0.79,
            theta2: 0.79,
            ..cfg
        };
        assert_eq!(detect_redundant_pairs(&ds, &looser, OverlapMode::Forward).len(), 1);
    }

    #[test]
    fn disjoint_relations_are_not_reported() {
        let ds = build(&[("a", "r", "b"), ("c", "s", "d")], &[]);
        let cfg = AuditConfig::default();
        assert!(detect_redundant_pairs(&ds, &cfg, OverlapMode::Forward).is_empty());
        assert!(detect_redundant_pairs(&ds, &cfg, OverlapMode::Reversed).is_empty());
    }

    #[test]
    fn symmetric_relation_detected_in_reversed_mode() {
        let ds = build(
            &[
                ("a", "sim", "b"),
                ("b", "sim", "a"),
                ("c", "sim", "d"),
                ("d", "sim", "c"),
            ],
            &[],
        );
        let found = detect_redundant_pairs(&ds, &AuditConfig::default(), OverlapMode::Reversed);
        assert_eq!(found.len(), 1);
        assert_eq!(found[0].kind, FindingKind::Symmetric);
        assert_eq!(found[0].second, None);
        assert_eq!(found[0].ratio1, 1.0);
    }

    #[test]
    fn cartesian_single_triple_and_three_by_three() {
        let ds = build(&[("a", "r", "x")], &[]);
        let cfg = AuditConfig {
            min_triples: 1,
            ..AuditConfig::default()
        };
        let found = detect_cartesian(&ds, &cfg);
        assert_eq!(found.len(), 1);
        assert_eq!(found[0].ratio1, 1.0);
        // the default minimum excludes single-instance relations
        assert!(detect_cartesian(&ds, &AuditConfig::default()).is_empty());

        let mut train = Vec::new();
        for h in ["a", "b", "c"] {
            for t in ["x", "y", "z"] {
                if (h, t) != ("c", "z") {
                    train.push((h, "r", t));
                }
            }
        }
        let ds = build(&train, &[]);
        let found = detect_cartesian(&ds, &AuditConfig::default());
        assert_eq!(found.len(), 1);
        assert!((found[0].ratio1 - 8.0 / 9.0).abs() < 1e-12);
        let strict = AuditConfig {
            cartesian_threshold: 0.9,
            ..AuditConfig::default()
        };
        assert!(detect_cartesian(&ds, &strict).is_empty());
    }

    #[test]
    fn categories() {
        let ds = build(
            &[
                ("a", "nm", "x"),
                ("a", "nm", "y"),
                ("b", "nm", "x"),
                ("b", "nm", "y"),
                ("p", "one", "q"),
                ("p", "fan", "1"),
                ("p", "fan", "2"),
                ("p", "fan", "3"),
            ],
            &[],
        );
        let cat = |name| classify_relation_category(&ds, ds.relation_id(name).unwrap(), 1.5).unwrap();
        assert_eq!(cat("nm"), RelationCategory::ManyToMany);
        assert_eq!(cat("one"), RelationCategory::OneToOne);
        assert_eq!(cat("fan"), RelationCategory::OneToMany);
    }

    #[test]
    fn code_formatting() {
        assert_eq!(RedundancyCode::new(0b1000).unwrap().to_string(), "1000");
        assert_eq!(RedundancyCode::parse("0010"), RedundancyCode::new(2));
        assert!(RedundancyCode::new(16).is_none());
        assert!(RedundancyCode::parse("10").is_none());
    }

    #[test]
    fn no_findings_gives_all_zero_codes() {
        let ds = build(&[("a", "r", "b")], &[("b", "r", "a"), ("a", "r", "c")]);
        let idx = RedundancyIndex::new(&ds, &[], ReverseDuplicatePolicy::default()).unwrap();
        let hist = code_histogram(&ds, &idx);
        assert_eq!(hist.len(), 1);
        assert_eq!(hist[&RedundancyCode::default()], 2);
    }

    #[test]
    fn micro_graph_codes() {
        // has_part / part_of are reverse; r and r_copy are duplicates.
        let ds = build(
            &[
                ("europe", "has_part", "estonia"),
                ("estonia", "part_of", "europe"),
                ("asia", "has_part", "japan"),
                ("japan", "part_of", "asia"),
                ("x", "r", "y"),
                ("x", "r_copy", "y"),
                ("u", "r", "v"),
                ("u", "r_copy", "v"),
            ],
            &[
                ("africa", "has_part", "kenya"),
                ("kenya", "part_of", "africa"),
                ("europe", "has_part", "estonia"),
                ("x", "r", "y"),
                ("p", "r", "q"),
            ],
        );
        let cfg = AuditConfig::default();
        let report = run_audit(&ds, &cfg, ReverseDuplicatePolicy::ReverseOnly).unwrap();
        assert_eq!(report.duplicates.len(), 1);
        assert_eq!(report.reversed.len(), 1);
        let idx = RedundancyIndex::new(&ds, &report.pair_findings(), ReverseDuplicatePolicy::ReverseOnly).unwrap();
        let code = |h, r, t| idx.code(&ds, &ds.lookup(h, r, t).unwrap()).to_string();
        assert_eq!(code("africa", "has_part", "kenya"), "0010");
        assert_eq!(code("kenya", "part_of", "africa"), "0010");
        assert_eq!(code("europe", "has_part", "estonia"), "1000");
        assert_eq!(code("x", "r", "y"), "0100");
        assert_eq!(code("p", "r", "q"), "0000");

        let hist: Vec<(String, usize)> = report.histogram.iter().map(|(c, n)| (c.to_string(), *n)).collect();
        assert_eq!(
            hist,
            vec![
                ("0000".to_string(), 1),
                ("0010".to_string(), 2),
                ("0100".to_string(), 1),
                ("1000".to_string(), 1)
            ]
        );
        assert_eq!(report.leakage.train_in_reverse_pairs, 4);
        assert_eq!(report.leakage.test_with_reverse_in_train, 1);

        let both = RedundancyIndex::new(&ds, &report.pair_findings(), ReverseDuplicatePolicy::Both).unwrap();
        assert_eq!(
            both.code(&ds, &ds.lookup("europe", "has_part", "estonia").unwrap())
                .to_string(),
            "1100"
        );
    }

    #[test]
    fn symmetric_self_loop_is_not_its_own_reverse() {
        let ds = build(
            &[("a", "sim", "b"), ("b", "sim", "a"), ("c", "sim", "c")],
            &[("d", "sim", "d")],
        );
        let findings = detect_redundant_pairs(&ds, &AuditConfig::default(), OverlapMode::Reversed);
        let idx = RedundancyIndex::new(&ds, &findings, ReverseDuplicatePolicy::default()).unwrap();
        let c = ds.lookup("c", "sim", "c").unwrap();
        assert!(!idx.has_reverse(&ds, &c, Split::Train));
        let d = ds.lookup("d", "sim", "d").unwrap();
        assert_eq!(idx.code(&ds, &d).bits(), 0);
    }

    #[test]
    fn config_validation() {
        assert!(AuditConfig::default().validate().is_ok());
        for bad in [
            AuditConfig {
                theta1: 0.0,
                ..Default::default()
            },
            AuditConfig {
                theta2: 1.5,
                ..Default::default()
            },
            AuditConfig {
                min_triples: 0,
                ..Default::default()
            },
            AuditConfig {
                category_cutoff: 0.0,
                ..Default::default()
            },
        ] {
            assert!(bad.validate().is_err());
        }
    }

    #[test]
    fn unknown_relation_in_findings() {
        let ds = build(&[("a", "r", "b")], &[]);
        let f = RedundancyFinding {
            kind: FindingKind::Duplicate,
            first: RelationId(0),
            second: Some(RelationId(7)),
            ratio1: 1.0,
            ratio2: Some(1.0),
        };
        assert_eq!(
            RedundancyIndex::new(&ds, &[f], ReverseDuplicatePolicy::default()).unwrap_err(),
            AuditError::UnknownRelation(7)
        );
    }
}
