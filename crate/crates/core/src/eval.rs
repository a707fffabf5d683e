//! Raw and filtered ranking metrics.
//!
//! Every test triple is asked in both directions. A query's raw rank is one
//! plus the number of entities ordered ahead of the true answer; its filtered
//! rank additionally skips entities that would form a triple already known
//! in the filter scope. Aggregates divide by the number of queries (twice the
//! test size), and hits are percentages.

use std::collections::{BTreeMap, HashMap};
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::audit::{RedundancyCode, RedundancyIndex, RelationCategory};
use crate::baselines::{Predictor, Query, RankedPrediction};
use crate::store::{Dataset, Direction, EntityId, GraphIndex, RelationId, SplitSet, Triple};

pub const DEFAULT_HITS: [u32; 3] = [1, 3, 10];

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("true answer {0} is not part of the ranked prediction")]
    TruthMissing(u32),
    #[error("hits cutoffs must be positive")]
    InvalidCutoff,
    #[error("{path}:{line}: {message}")]
    Malformed {
        path: PathBuf,
        line: usize,
        message: String,
    },
    #[error("{path}:{line}: triple ({head}, {relation}, {tail}) is not in the test split")]
    UnknownTriple {
        path: PathBuf,
        line: usize,
        head: String,
        relation: String,
        tail: String,
    },
    #[error("{path}:{line}: rank outside [1, {max}] or filtered rank above raw rank")]
    RankOutOfRange { path: PathBuf, line: usize, max: usize },
    #[error("{path}:{line}: duplicate record for ({head}, {relation}, {tail}) {direction}")]
    Duplicate {
        path: PathBuf,
        line: usize,
        head: String,
        relation: String,
        tail: String,
        direction: Direction,
    },
    #[error("no ranking for ({head}, {relation}, {tail}) {direction}")]
    MissingRecord {
        head: String,
        relation: String,
        tail: String,
        direction: Direction,
    },
    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

/// Which splits count as known-true when filtering.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FilterScope {
    #[default]
    All,
    TrainTest,
}

impl FilterScope {
    pub fn splits(self) -> SplitSet {
        match self {
            FilterScope::All => SplitSet::ALL,
            FilterScope::TrainTest => SplitSet::TRAIN_TEST,
        }
    }
}

/// Ranks of one test triple in one direction.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct RankResult {
    pub triple: Triple,
    pub direction: Direction,
    pub raw_rank: u32,
    pub filtered_rank: u32,
}

/// Aggregated metrics over a set of rank results.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub count: usize,
    pub mr: f64,
    pub fmr: f64,
    pub mrr: f64,
    pub fmrr: f64,
    /// Raw hits@k in percent.
    pub hits: BTreeMap<u32, f64>,
    /// Filtered hits@k in percent.
    pub fhits: BTreeMap<u32, f64>,
}

/// Exact running sums behind [`Metrics`]. Rank sums and hit counts are
/// integers, so merging partitions reproduces the global totals exactly.
#[derive(Clone, Debug, PartialEq)]
pub struct Accumulator {
    ks: Vec<u32>,
    pub count: u64,
    pub rank_sum: u64,
    pub filtered_rank_sum: u64,
    pub reciprocal_sum: f64,
    pub filtered_reciprocal_sum: f64,
    pub hits: Vec<u64>,
    pub filtered_hits: Vec<u64>,
}

impl Accumulator {
    pub fn new(ks: &[u32]) -> Self {
        let mut ks = ks.to_vec();
        ks.sort_unstable();
        ks.dedup();
        Accumulator {
            hits: vec![0; ks.len()],
            filtered_hits: vec![0; ks.len()],
            ks,
            count: 0,
            rank_sum: 0,
            filtered_rank_sum: 0,
            reciprocal_sum: 0.0,
            filtered_reciprocal_sum: 0.0,
        }
    }

    pub fn push(&mut self, r: &RankResult) {
        self.count += 1;
        self.rank_sum += u64::from(r.raw_rank);
        self.filtered_rank_sum += u64::from(r.filtered_rank);
        self.reciprocal_sum += 1.0 / f64::from(r.raw_rank);
        self.filtered_reciprocal_sum += 1.0 / f64::from(r.filtered_rank);
        for (i, &k) in self.ks.iter().enumerate() {
            self.hits[i] += u64::from(r.raw_rank <= k);
            self.filtered_hits[i] += u64::from(r.filtered_rank <= k);
        }
    }

    pub fn finish(&self) -> Metrics {
        let n = self.count as f64;
        let mean = |s: f64| if self.count == 0 { 0.0 } else { s / n };
        let pct = |h: u64| if self.count == 0 { 0.0 } else { 100.0 * h as f64 / n };
        Metrics {
            count: self.count as usize,
            mr: mean(self.rank_sum as f64),
            fmr: mean(self.filtered_rank_sum as f64),
            mrr: mean(self.reciprocal_sum),
            fmrr: mean(self.filtered_reciprocal_sum),
            hits: self.ks.iter().zip(&self.hits).map(|(k, h)| (*k, pct(*h))).collect(),
            fhits: self
                .ks
                .iter()
                .zip(&self.filtered_hits)
                .map(|(k, h)| (*k, pct(*h)))
                .collect(),
        }
    }
}

/// Aggregates results in slice order.
pub fn aggregate(results: &[RankResult], ks: &[u32]) -> Metrics {
    let mut acc = Accumulator::new(ks);
    results.iter().for_each(|r| acc.push(r));
    acc.finish()
}

/// Overall metrics plus optional grouped breakdowns.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub overall: Metrics,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub groups: BTreeMap<Grouping, BTreeMap<String, Metrics>>,
}

/// Per-query ranks plus their aggregate.
#[derive(Clone, Debug)]
pub struct Evaluation {
    pub results: Vec<RankResult>,
    pub metrics: Metrics,
}

/// All test queries in evaluation order: for each test line, the head query
/// then the tail query.
pub fn test_queries(ds: &Dataset) -> impl Iterator<Item = (Triple, Direction)> + '_ {
    ds.test()
        .iter()
        .flat_map(|t| Direction::BOTH.into_iter().map(move |d| (*t, d)))
}

/// Ranks predictions against a fixed filter.
pub struct Evaluator<'a> {
    ds: &'a Dataset,
    filter: std::borrow::Cow<'a, GraphIndex>,
    ks: Vec<u32>,
}

impl<'a> Evaluator<'a> {
    pub fn new(ds: &'a Dataset, scope: FilterScope, ks: &[u32]) -> Result<Self, EvalError> {
        if ks.contains(&0) {
            return Err(EvalError::InvalidCutoff);
        }
        Ok(Evaluator {
            ds,
            filter: ds.index_for(scope.splits()),
            ks: ks.to_vec(),
        })
    }

    pub fn ks(&self) -> &[u32] {
        &self.ks
    }

    pub fn rank_query(&self, prediction: &RankedPrediction, truth: EntityId) -> Result<RankResult, EvalError> {
        let q = prediction.query();
        let positions = prediction.positions();
        let p = positions.position(truth).ok_or(EvalError::TruthMissing(truth.0))?;
        let known_ahead = self
            .filter
            .neighbors(q.anchor, q.relation, q.direction)
            .iter()
            .filter(|&&e| e != truth && positions.position(e).is_some_and(|pe| pe < p))
            .count();
        Ok(RankResult {
            triple: q.complete(truth),
            direction: q.direction,
            raw_rank: (p + 1) as u32,
            filtered_rank: (p + 1 - known_ahead) as u32,
        })
    }

    /// Ranks every test query in parallel; results keep evaluation order.
    pub fn evaluate<P: Predictor + ?Sized>(&self, predictor: &P) -> Result<Evaluation, EvalError> {
        let queries: Vec<(Triple, Direction)> = test_queries(self.ds).collect();
        self.evaluate_queries(predictor, &queries)
    }

    /// Ranks the given `(truth, direction)` queries in parallel, keeping
    /// their order.
    pub fn evaluate_queries<P: Predictor + ?Sized>(
        &self,
        predictor: &P,
        queries: &[(Triple, Direction)],
    ) -> Result<Evaluation, EvalError> {
        let results = queries
            .par_iter()
            .map(|(t, d)| {
                let prediction = predictor.predict(&Query::for_triple(t, *d));
                self.rank_query(&prediction, t.entity(*d))
            })
            .collect::<Result<Vec<_>, _>>()?;
        let metrics = aggregate(&results, &self.ks);
        Ok(Evaluation { results, metrics })
    }

    /// Reads externally computed ranks; see [`ingest_rankings`].
    pub fn ingest(&self, path: impl AsRef<Path>) -> Result<Evaluation, EvalError> {
        let results = read_rankings(path.as_ref(), self.ds)?;
        let metrics = aggregate(&results, &self.ks);
        Ok(Evaluation { results, metrics })
    }
}

pub fn evaluate_predictor<P: Predictor + ?Sized>(
    ds: &Dataset,
    predictor: &P,
    ks: &[u32],
    scope: FilterScope,
) -> Result<Evaluation, EvalError> {
    Evaluator::new(ds, scope, ks)?.evaluate(predictor)
}

/// One line of a rankings file.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct RankingRecord {
    pub head: String,
    pub relation: String,
    pub tail: String,
    pub direction: Direction,
    pub raw_rank: u32,
    pub filtered_rank: u32,
}

/// Writes one JSON line per distinct (test triple, direction), in evaluation
/// order.
pub fn write_rankings(path: impl AsRef<Path>, ds: &Dataset, results: &[RankResult]) -> Result<(), EvalError> {
    let path = path.as_ref();
    let io = |source| EvalError::Io {
        path: path.to_owned(),
        source,
    };
    let mut out = BufWriter::new(File::create(path).map_err(io)?);
    let mut seen = std::collections::HashSet::new();
    for r in results {
        if !seen.insert((r.triple, r.direction)) {
            continue;
        }
        let (head, relation, tail) = ds.names(&r.triple);
        let record = RankingRecord {
            head: head.to_owned(),
            relation: relation.to_owned(),
            tail: tail.to_owned(),
            direction: r.direction,
            raw_rank: r.raw_rank,
            filtered_rank: r.filtered_rank,
        };
        let line = serde_json::to_string(&record).expect("records always serialise");
        writeln!(out, "{line}").map_err(io)?;
    }
    out.flush().map_err(io)
}

/// Reads a rankings file and returns one result per test query in evaluation
/// order. A test triple listed several times in the test split reuses its
/// single record.
pub fn read_rankings(path: &Path, ds: &Dataset) -> Result<Vec<RankResult>, EvalError> {
    let io = |source| EvalError::Io {
        path: path.to_owned(),
        source,
    };
    let reader = BufReader::new(File::open(path).map_err(io)?);
    let max = ds.num_entities();
    let mut records: HashMap<(Triple, Direction), (u32, u32)> = HashMap::new();
    for (n, line) in reader.lines().enumerate() {
        let line_no = n + 1;
        let line = line.map_err(io)?;
        if line.trim().is_empty() {
            continue;
        }
        let rec: RankingRecord = serde_json::from_str(&line).map_err(|e| EvalError::Malformed {
            path: path.to_owned(),
            line: line_no,
            message: e.to_string(),
        })?;
        let triple = ds
            .lookup(&rec.head, &rec.relation, &rec.tail)
            .filter(|t| ds.contains(t, SplitSet::TEST))
            .ok_or_else(|| EvalError::UnknownTriple {
                path: path.to_owned(),
                line: line_no,
                head: rec.head.clone(),
                relation: rec.relation.clone(),
                tail: rec.tail.clone(),
            })?;
        let (raw, filtered) = (rec.raw_rank, rec.filtered_rank);
        if raw == 0 || filtered == 0 || raw as usize > max || filtered > raw {
            return Err(EvalError::RankOutOfRange {
                path: path.to_owned(),
                line: line_no,
                max,
            });
        }
        if records.insert((triple, rec.direction), (raw, filtered)).is_some() {
            return Err(EvalError::Duplicate {
                path: path.to_owned(),
                line: line_no,
                head: rec.head,
                relation: rec.relation,
                tail: rec.tail,
                direction: rec.direction,
            });
        }
    }
    test_queries(ds)
        .map(|(triple, direction)| match records.get(&(triple, direction)) {
            Some(&(raw_rank, filtered_rank)) => Ok(RankResult {
                triple,
                direction,
                raw_rank,
                filtered_rank,
            }),
            None => {
                let (h, r, t) = ds.names(&triple);
                Err(EvalError::MissingRecord {
                    head: h.to_owned(),
                    relation: r.to_owned(),
                    tail: t.to_owned(),
                    direction,
                })
            }
        })
        .collect()
}

pub fn ingest_rankings(
    path: impl AsRef<Path>,
    ds: &Dataset,
    ks: &[u32],
    scope: FilterScope,
) -> Result<Evaluation, EvalError> {
    Evaluator::new(ds, scope, ks)?.ingest(path)
}

/// How to split results for a breakdown.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Grouping {
    Relation,
    Category,
    RedundancyCode,
    Direction,
}

impl Grouping {
    pub const ALL: [Grouping; 4] = [
        Grouping::Relation,
        Grouping::Category,
        Grouping::RedundancyCode,
        Grouping::Direction,
    ];
}

/// Lookup tables needed to label a result with its group.
pub struct GroupKeys<'a> {
    pub ds: &'a Dataset,
    pub categories: &'a BTreeMap<RelationId, RelationCategory>,
    pub redundancy: &'a RedundancyIndex,
}

impl GroupKeys<'_> {
    pub fn key(&self, grouping: Grouping, r: &RankResult) -> String {
        match grouping {
            Grouping::Relation => self.ds.relation_name(r.triple.relation).to_owned(),
            Grouping::Category => self
                .categories
                .get(&r.triple.relation)
                .map(|c| c.as_str().to_owned())
                .unwrap_or_else(|| "unknown".to_owned()),
            Grouping::RedundancyCode => {
                let code: RedundancyCode = self.redundancy.code(self.ds, &r.triple);
                code.to_string()
            }
            Grouping::Direction => r.direction.as_str().to_owned(),
        }
    }
}

/// Metrics recomputed within each group, keyed and sorted by group label.
pub fn breakdown_report(
    results: &[RankResult],
    keys: &GroupKeys<'_>,
    grouping: Grouping,
    ks: &[u32],
) -> BTreeMap<String, Metrics> {
    let mut groups: BTreeMap<String, Accumulator> = BTreeMap::new();
    for r in results {
        groups
            .entry(keys.key(grouping, r))
            .or_insert_with(|| Accumulator::new(ks))
            .push(r);
    }
    groups.into_iter().map(|(k, acc)| (k, acc.finish())).collect()
}

/// Overall metrics plus the requested breakdowns.
pub fn full_report(evaluation: &Evaluation, keys: &GroupKeys<'_>, groupings: &[Grouping], ks: &[u32]) -> MetricsReport {
    MetricsReport {
        overall: evaluation.metrics.clone(),
        groups: groupings
            .iter()
            .map(|g| (*g, breakdown_report(&evaluation.results, keys, *g, ks)))
            .collect(),
    }
}

/// Per-group CSV: `relation,n,MR,FMR,MRR,FMRR,H@1,FH@1,H@10,FH@10` with the
/// first column named after the grouping. Means get one decimal (three for
/// reciprocal ranks) and hits one decimal.
pub fn write_breakdown_csv<W: Write>(
    out: W,
    grouping: Grouping,
    groups: &BTreeMap<String, Metrics>,
) -> Result<(), csv::Error> {
    let first = match grouping {
        Grouping::Relation => "relation",
        Grouping::Category => "category",
        Grouping::RedundancyCode => "code",
        Grouping::Direction => "direction",
    };
    let mut w = csv::Writer::from_writer(out);
    w.write_record([first, "n", "MR", "FMR", "MRR", "FMRR", "H@1", "FH@1", "H@10", "FH@10"])?;
    let hit = |m: &BTreeMap<u32, f64>, k| m.get(&k).map(|v| format!("{v:.1}")).unwrap_or_default();
    for (key, m) in groups {
        w.write_record([
            key.clone(),
            m.count.to_string(),
            format!("{:.1}", m.mr),
            format!("{:.1}", m.fmr),
            format!("{:.3}", m.mrr),
            format!("{:.3}", m.fmrr),
            hit(&m.hits, 1),
            hit(&m.fhits, 1),
            hit(&m.hits, 10),
            hit(&m.fhits, 10),
        ])?;
    }
    w.flush()?;
    Ok(())
}
