//! Random micro-graphs and brute-force oracles that read only the raw split
//! lists, never the library's indices.
#![allow(dead_code)]

use std::collections::{BTreeSet, HashSet};

use kg_audit::audit::{AuditConfig, FindingKind, OverlapMode, RedundancyFinding};
use kg_audit::baselines::{IntersectionRule, Orientation, Query};
use kg_audit::store::{Dataset, DatasetBuilder, Direction, EntityId, RelationId, Split, SplitSet, Triple};
use proptest::prelude::*;

#[derive(Clone, Debug)]
pub struct MicroGraph {
    pub train: Vec<(u8, u8, u8)>,
    pub valid: Vec<(u8, u8, u8)>,
    pub test: Vec<(u8, u8, u8)>,
}

impl MicroGraph {
    pub fn build(&self, scope: SplitSet) -> Dataset {
        let mut b = DatasetBuilder::new();
        for (split, rows) in [
            (Split::Train, &self.train),
            (Split::Valid, &self.valid),
            (Split::Test, &self.test),
        ] {
            for &(h, r, t) in rows {
                b.push(split, &format!("e{h}"), &format!("r{r}"), &format!("e{t}"));
            }
        }
        b.build(scope).expect("train is never empty")
    }
}

fn rows(n_e: u8, n_r: u8, len: std::ops::RangeInclusive<usize>) -> impl Strategy<Value = Vec<(u8, u8, u8)>> {
    prop::collection::vec((0..n_e, 0..n_r, 0..n_e), len)
}

/// Up to 8 entities and 4 relations. Optionally relation 1 mirrors part of
/// relation 0 and relation 2 copies part of it, so redundancy findings
/// actually occur.
pub fn micro_graph() -> impl Strategy<Value = MicroGraph> {
    (2u8..=8, 1u8..=4)
        .prop_flat_map(|(n_e, n_r)| {
            (
                rows(n_e, n_r, 1..=24),
                rows(n_e, n_r, 0..=4),
                rows(n_e, n_r, 1..=6),
                any::<bool>(),
                any::<bool>(),
                0usize..=3,
                Just(n_r),
            )
        })
        .prop_map(|(mut train, valid, test, mirror, copy, skip, n_r)| {
            let base: Vec<_> = train.iter().filter(|t| t.1 == 0).copied().collect();
            for (i, &(h, _, t)) in base.iter().enumerate() {
                if i < skip {
                    continue;
                }
                if mirror && n_r > 1 {
                    train.push((t, 1, h));
                }
                if copy && n_r > 2 {
                    train.push((h, 2, t));
                }
            }
            MicroGraph { train, valid, test }
        })
}

pub fn scope_triples(ds: &Dataset, scope: SplitSet) -> Vec<Triple> {
    scope.iter().flat_map(|s| ds.split(s).iter().copied()).collect()
}

pub fn pair_set(triples: &[Triple], r: RelationId, inverted: bool) -> HashSet<(EntityId, EntityId)> {
    triples
        .iter()
        .filter(|t| t.relation == r)
        .map(|t| if inverted { (t.tail, t.head) } else { (t.head, t.tail) })
        .collect()
}

pub fn line_count(triples: &[Triple], r: RelationId) -> usize {
    triples.iter().filter(|t| t.relation == r).count()
}

/// `(|T_a ∩ T_b^(±1)| / |a|, … / |b|)`, `None` if either relation is empty.
pub fn overlap(triples: &[Triple], a: RelationId, b: RelationId, mode: OverlapMode) -> Option<(f64, f64)> {
    let (na, nb) = (line_count(triples, a), line_count(triples, b));
    if na == 0 || nb == 0 {
        return None;
    }
    let pa = pair_set(triples, a, false);
    let pb = pair_set(triples, b, mode == OverlapMode::Reversed);
    let shared = pa.intersection(&pb).count() as f64;
    Some((shared / na as f64, shared / nb as f64))
}

/// Flagged pairs as `(min id, max id, kind)`.
pub fn redundant_pairs(
    ds: &Dataset,
    triples: &[Triple],
    config: &AuditConfig,
    mode: OverlapMode,
) -> BTreeSet<(u32, u32, FindingKind)> {
    let mut out = BTreeSet::new();
    let n = ds.num_relations() as u32;
    for a in 0..n {
        for b in a..n {
            if a == b && mode == OverlapMode::Forward {
                continue;
            }
            let Some((x, y)) = overlap(triples, RelationId(a), RelationId(b), mode) else {
                continue;
            };
            let pass = (x > config.theta1 && y > config.theta2) || (y > config.theta1 && x > config.theta2);
            if pass {
                let kind = match (mode, a == b) {
                    (OverlapMode::Forward, _) => FindingKind::Duplicate,
                    (OverlapMode::Reversed, false) => FindingKind::ReverseDuplicate,
                    (OverlapMode::Reversed, true) => FindingKind::Symmetric,
                };
                out.insert((a, b, kind));
            }
        }
    }
    out
}

pub fn finding_keys(findings: &[RedundancyFinding]) -> BTreeSet<(u32, u32, FindingKind)> {
    findings
        .iter()
        .map(|f| {
            let second = f.second.unwrap_or(f.first);
            (f.first.0.min(second.0), f.first.0.max(second.0), f.kind)
        })
        .collect()
}

/// `|T_r| / (|S_r|·|O_r|)` over distinct pairs.
pub fn fill_ratio(triples: &[Triple], r: RelationId) -> Option<f64> {
    let pairs = pair_set(triples, r, false);
    if pairs.is_empty() {
        return None;
    }
    let s: HashSet<_> = pairs.iter().map(|p| p.0).collect();
    let o: HashSet<_> = pairs.iter().map(|p| p.1).collect();
    Some(pairs.len() as f64 / (s.len() * o.len()) as f64)
}

/// Answers of an intersection rule, read by scanning the train list.
pub fn rule_answers(ds: &Dataset, rule: &IntersectionRule, q: &Query) -> BTreeSet<EntityId> {
    let mut out = BTreeSet::new();
    for t in ds.train().iter().filter(|t| t.relation == rule.source) {
        // the source triple implies target triple `implied`
        let implied = match rule.orientation {
            Orientation::Same => (t.head, t.tail),
            Orientation::Reversed => (t.tail, t.head),
        };
        let (known, answer) = match q.direction {
            Direction::Tail => (implied.0, implied.1),
            Direction::Head => (implied.1, implied.0),
        };
        if known != q.anchor {
            continue;
        }
        let self_proof = rule.source == q.relation && Triple::new(t.head, t.relation, t.tail) == q.complete(answer);
        if !self_proof {
            out.insert(answer);
        }
    }
    out
}

/// Exhaustive raw and filtered rank of `truth` in `ordering`.
pub fn rank(ds: &Dataset, ordering: &[EntityId], q: &Query, truth: EntityId, scope: SplitSet) -> Option<(u32, u32)> {
    let known = scope_triples(ds, scope);
    let mut filtered = 1;
    for (raw, &e) in (1..).zip(ordering) {
        if e == truth {
            return Some((raw, filtered));
        }
        if !known.contains(&q.complete(e)) {
            filtered += 1;
        }
    }
    None
}

pub fn within_pct(actual: f64, target: f64, pct: f64) -> bool {
    (actual - target).abs() <= target.abs() * pct / 100.0
}

/// 4-bit redundancy code of `t`, recomputed from finding keys by scanning
/// the train and test lists.
pub fn code_oracle(ds: &Dataset, keys: &BTreeSet<(u32, u32, FindingKind)>, both: bool, t: &Triple) -> u8 {
    let r = t.relation.0;
    let mut reverse = Vec::new();
    let mut duplicate = Vec::new();
    for &(a, b, kind) in keys {
        let other = if a == r {
            Some(b)
        } else if b == r {
            Some(a)
        } else {
            None
        };
        let Some(other) = other else { continue };
        match kind {
            FindingKind::Symmetric => reverse.push(other),
            FindingKind::ReverseDuplicate => {
                reverse.push(other);
                if both {
                    duplicate.push((other, true));
                }
            }
            FindingKind::Duplicate => duplicate.push((other, false)),
            FindingKind::Cartesian => {}
        }
    }
    let found = |split: &[Triple], rev: bool| {
        split.iter().any(|s| {
            s != t
                && if rev {
                    reverse.contains(&s.relation.0) && s.head == t.tail && s.tail == t.head
                } else {
                    duplicate.iter().any(|&(o, swapped)| {
                        s.relation.0 == o
                            && if swapped {
                                s.head == t.tail && s.tail == t.head
                            } else {
                                s.head == t.head && s.tail == t.tail
                            }
                    })
                }
        })
    };
    (found(ds.train(), true) as u8) << 3
        | (found(ds.train(), false) as u8) << 2
        | (found(ds.test(), true) as u8) << 1
        | found(ds.test(), false) as u8
}

/// Every library result on `g` against its oracle. Returns the number of
/// individual comparisons made.
pub fn check_micro_graph(g: &MicroGraph) -> Result<usize, TestCaseError> {
    use kg_audit::audit::{detect_cartesian, detect_redundant_pairs, overlap_ratio, run_audit, ReverseDuplicatePolicy};
    use kg_audit::baselines::{
        build_intersection_rules, instantiate_rule, CartesianPredictor, FrequencyPredictor, Predictor, RulePredictor,
    };
    use kg_audit::eval::{Evaluator, FilterScope};
    use kg_audit::rules::{instantiate, HornRule};

    let ds = g.build(SplitSet::TRAIN);
    let train = ds.train().to_vec();
    let n_r = ds.num_relations() as u32;
    let mut checks = 0;

    for mode in [OverlapMode::Forward, OverlapMode::Reversed] {
        for a in 0..n_r {
            for b in 0..n_r {
                let (ra, rb) = (RelationId(a), RelationId(b));
                let got = overlap_ratio(&ds, ra, rb, mode).ok();
                prop_assert_eq!(got, overlap(&train, ra, rb, mode), "overlap r{} r{} {:?}", a, b, mode);
                checks += 1;
            }
        }
    }

    let configs = [
        AuditConfig::default(),
        AuditConfig {
            theta1: 0.5,
            theta2: 0.6,
            cartesian_threshold: 0.5,
            ..AuditConfig::default()
        },
    ];
    for cfg in &configs {
        for mode in [OverlapMode::Forward, OverlapMode::Reversed] {
            let got = finding_keys(&detect_redundant_pairs(&ds, cfg, mode));
            prop_assert_eq!(got, redundant_pairs(&ds, &train, cfg, mode));
            checks += 1;
        }
        let cartesian: BTreeSet<u32> = detect_cartesian(&ds, cfg).iter().map(|f| f.first.0).collect();
        let expected: BTreeSet<u32> = (0..n_r)
            .filter(|&r| {
                line_count(&train, RelationId(r)) >= cfg.min_triples
                    && fill_ratio(&train, RelationId(r)).is_some_and(|f| f > cfg.cartesian_threshold)
            })
            .collect();
        prop_assert_eq!(cartesian, expected);
        checks += 1;
    }
    for r in 0..n_r {
        let r = RelationId(r);
        prop_assert_eq!(ds.train_index().profile(r).fill_ratio(), fill_ratio(&train, r));
        checks += 1;
    }

    // redundancy codes and leakage
    for (policy, both) in [
        (ReverseDuplicatePolicy::ReverseOnly, false),
        (ReverseDuplicatePolicy::Both, true),
    ] {
        let report = run_audit(&ds, &configs[1], policy).unwrap();
        let keys = finding_keys(&report.pair_findings());
        let mut hist = std::collections::BTreeMap::new();
        for t in ds.test() {
            *hist.entry(code_oracle(&ds, &keys, both, t)).or_insert(0usize) += 1;
        }
        let got: std::collections::BTreeMap<u8, usize> = report.histogram.iter().map(|(c, n)| (c.bits(), *n)).collect();
        prop_assert_eq!(got, hist);
        let reverse_in_train = ds.train().iter().filter(|t| {
            let only_reverse: BTreeSet<_> = keys.iter().filter(|k| k.2 != FindingKind::Duplicate).copied().collect();
            code_oracle(&ds, &only_reverse, false, t) & 0b1000 != 0
        });
        prop_assert_eq!(report.leakage.train_in_reverse_pairs, reverse_in_train.count());
        checks += 2;
    }

    // rule set and rule instantiation
    let cfg = AuditConfig::default();
    let rules = build_intersection_rules(&ds, &cfg);
    let mut expected_rules = BTreeSet::new();
    for src in 0..n_r {
        for tgt in 0..n_r {
            for (orientation, mode) in [
                (Orientation::Same, OverlapMode::Forward),
                (Orientation::Reversed, OverlapMode::Reversed),
            ] {
                if src == tgt && orientation == Orientation::Same {
                    continue;
                }
                if let Some((_, conf)) = overlap(&train, RelationId(src), RelationId(tgt), mode) {
                    if conf > cfg.theta1 {
                        expected_rules.insert((src, tgt, orientation));
                    }
                }
            }
        }
    }
    let got_rules: BTreeSet<_> = rules.iter().map(|r| (r.source.0, r.target.0, r.orientation)).collect();
    prop_assert_eq!(got_rules, expected_rules);
    checks += 1;
    for rule in &rules {
        let horn = HornRule::from_intersection(rule);
        for anchor in ds.entity_ids() {
            for direction in Direction::BOTH {
                let q = Query {
                    anchor,
                    relation: rule.target,
                    direction,
                };
                let got: BTreeSet<EntityId> = instantiate_rule(&ds, rule, &q).collect();
                let expected = rule_answers(&ds, rule, &q);
                prop_assert_eq!(&got, &expected);
                let joined: BTreeSet<EntityId> = instantiate(&ds, &horn, &q).into_iter().collect();
                prop_assert_eq!(&joined, &expected);
                checks += 2;
            }
        }
    }

    // predictions, ranks and aggregate invariants
    let n_e = ds.num_entities() as u32;
    let mut ks = vec![1, 2, 3, 5, 10, n_e];
    ks.sort_unstable();
    ks.dedup();
    let all: Vec<EntityId> = ds.entity_ids().collect();
    let rule_p = RulePredictor::new(&ds, &rules);
    let freq_p = FrequencyPredictor::new(&ds);
    let cart_p = CartesianPredictor::new(&ds, &detect_cartesian(&ds, &configs[1]));
    let predictors: [&dyn Predictor; 3] = [&rule_p, &freq_p, &cart_p];
    for scope in [FilterScope::All, FilterScope::TrainTest] {
        let evaluator = Evaluator::new(&ds, scope, &ks).unwrap();
        for p in predictors {
            for t in ds.test() {
                for d in Direction::BOTH {
                    let q = Query::for_triple(t, d);
                    let prediction = p.predict(&q);
                    let order = prediction.to_vec();
                    let mut sorted = order.clone();
                    sorted.sort_unstable();
                    prop_assert_eq!(&sorted, &all, "not a permutation");
                    let positions = prediction.positions();
                    for (i, e) in order.iter().enumerate() {
                        prop_assert_eq!(positions.position(*e), Some(i));
                    }
                    let truth = t.entity(d);
                    let got = evaluator.rank_query(&prediction, truth).unwrap();
                    let expected = rank(&ds, &order, &q, truth, scope.splits()).unwrap();
                    prop_assert_eq!((got.raw_rank, got.filtered_rank), expected);
                    prop_assert!(1 <= got.filtered_rank && got.filtered_rank <= got.raw_rank && got.raw_rank <= n_e);
                    checks += 3;
                }
            }
            let m = evaluator.evaluate(p).unwrap().metrics;
            prop_assert!(m.fmr <= m.mr && m.fmrr >= m.mrr);
            prop_assert!(m.mrr * m.mr >= 1.0 - 1e-12, "MRR {} < 1/MR {}", m.mrr, 1.0 / m.mr);
            let mut prev = (0.0, 0.0);
            for k in &ks {
                let (h, fh) = (m.hits[k], m.fhits[k]);
                prop_assert!(fh >= h);
                prop_assert!(h >= prev.0 && fh >= prev.1, "hits not monotone in k");
                prev = (h, fh);
            }
            prop_assert_eq!(m.hits[&n_e], 100.0);
            checks += 4;
        }
    }
    Ok(checks)
}
