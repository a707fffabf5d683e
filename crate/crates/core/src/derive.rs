//! Deduplicated dataset variants.
//!
//! Given the redundant relation pairs and symmetric relations found by an
//! audit, a derivation drops one relation of every redundant pair, keeps a
//! single orientation of each mirrored train pair of a symmetric relation,
//! and removes valid/test triples of symmetric relations whose entity pair
//! is already linked in train. Entities left without triples disappear.

use std::collections::{BTreeMap, BTreeSet};
use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::audit::{FindingKind, RedundancyFinding};
use crate::store::{Dataset, DatasetBuilder, DatasetStats, RelationId, Split, StoreError, Triple};

#[derive(Debug, Error)]
pub enum DeriveError {
    #[error("finding references unknown relation id {0}")]
    UnknownRelation(u32),
    #[error("relation {0:?} listed for dropping is not in the dataset")]
    UnknownListedRelation(String),
    #[error(transparent)]
    Store(#[from] StoreError),
    #[error("cannot write {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

/// Which relation of a redundant pair goes.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DropRule {
    /// The one with fewer train triples; on a tie the name that sorts later.
    #[default]
    FewerTriples,
    LexicographicallyLater,
    /// Drop exactly these relations. Pairs with neither member listed fall
    /// back to [`DropRule::FewerTriples`].
    Explicit(Vec<String>),
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct DedupPolicy {
    pub drop_rule: DropRule,
    /// Keep one orientation of mirrored train pairs in symmetric relations.
    pub symmetric_handling: bool,
    /// Remove valid/test triples of symmetric relations linked in train.
    pub leakage_removal: bool,
}

impl Default for DedupPolicy {
    fn default() -> Self {
        DedupPolicy {
            drop_rule: DropRule::default(),
            symmetric_handling: true,
            leakage_removal: true,
        }
    }
}

/// Relations to drop and relations to treat as symmetric, by name, so a plan
/// can be applied to a re-interned dataset.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct DedupPlan {
    pub dropped: BTreeSet<String>,
    pub symmetric: BTreeSet<String>,
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitCounts {
    pub train: usize,
    pub valid: usize,
    pub test: usize,
}

impl SplitCounts {
    fn bump(&mut self, split: Split) {
        match split {
            Split::Train => self.train += 1,
            Split::Valid => self.valid += 1,
            Split::Test => self.test += 1,
        }
    }

    pub fn total(&self) -> usize {
        self.train + self.valid + self.test
    }
}

/// What a derivation did.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct DerivationManifest {
    pub policy: DedupPolicy,
    pub plan: DedupPlan,
    pub removed_dropped_relations: SplitCounts,
    pub removed_mirrored_orientation: usize,
    pub removed_leaked: SplitCounts,
    pub orphaned_entities: usize,
    pub before: DatasetStats,
    pub after: DatasetStats,
}

fn relation(ds: &Dataset, id: RelationId) -> Result<&str, DeriveError> {
    if id.index() < ds.num_relations() {
        Ok(ds.relation_name(id))
    } else {
        Err(DeriveError::UnknownRelation(id.0))
    }
}

/// Resolves findings into a [`DedupPlan`]. Pairs are visited in relation-id
/// order and a pair already broken by an earlier drop is left alone.
pub fn plan(ds: &Dataset, findings: &[RedundancyFinding], policy: &DedupPolicy) -> Result<DedupPlan, DeriveError> {
    let mut out = DedupPlan::default();
    if let DropRule::Explicit(listed) = &policy.drop_rule {
        for name in listed {
            if ds.relation_id(name).is_none() {
                return Err(DeriveError::UnknownListedRelation(name.clone()));
            }
            out.dropped.insert(name.clone());
        }
    }

    let mut pairs = Vec::new();
    for f in findings {
        let first = relation(ds, f.first)?;
        if let Some(second) = f.second {
            relation(ds, second)?;
        }
        match (f.kind, f.second) {
            (FindingKind::Symmetric, _) => {
                out.symmetric.insert(first.to_owned());
            }
            (FindingKind::Duplicate | FindingKind::ReverseDuplicate, Some(second)) => {
                pairs.push((f.first.min(second), f.first.max(second)));
            }
            _ => {}
        }
    }
    pairs.sort_unstable();
    pairs.dedup();

    let train_count = |r: RelationId| ds.train_index().profile(r).triple_count;
    for (a, b) in pairs {
        let (na, nb) = (ds.relation_name(a), ds.relation_name(b));
        if out.dropped.contains(na) || out.dropped.contains(nb) {
            continue;
        }
        let later = if na > nb { na } else { nb };
        let victim = match policy.drop_rule {
            DropRule::LexicographicallyLater => later,
            DropRule::FewerTriples | DropRule::Explicit(_) => match train_count(a).cmp(&train_count(b)) {
                std::cmp::Ordering::Less => na,
                std::cmp::Ordering::Greater => nb,
                std::cmp::Ordering::Equal => later,
            },
        };
        out.dropped.insert(victim.to_owned());
    }
    out.symmetric.retain(|r| !out.dropped.contains(r));
    Ok(out)
}

/// Applies a plan. Names in the plan that the dataset lacks are ignored.
pub fn apply_plan(
    ds: &Dataset,
    plan: &DedupPlan,
    policy: &DedupPolicy,
) -> Result<(Dataset, DerivationManifest), DeriveError> {
    let flags = |names: &BTreeSet<String>| {
        let mut v = vec![false; ds.num_relations()];
        for r in names.iter().filter_map(|n| ds.relation_id(n)) {
            v[r.index()] = true;
        }
        v
    };
    let dropped = flags(&plan.dropped);
    let symmetric = flags(&plan.symmetric);
    let train = ds.train_index();

    let mut removed_dropped = SplitCounts::default();
    let mut removed_mirrored = 0;
    let mut removed_leaked = SplitCounts::default();
    let mut builder = DatasetBuilder::new();
    for split in Split::ALL {
        for t in ds.split(split) {
            let r = t.relation.index();
            if dropped[r] {
                removed_dropped.bump(split);
                continue;
            }
            if symmetric[r] {
                let mirrored = train.contains_pair(t.relation, t.tail, t.head);
                match split {
                    Split::Train if policy.symmetric_handling && mirrored && t.head > t.tail => {
                        removed_mirrored += 1;
                        continue;
                    }
                    Split::Valid | Split::Test
                        if policy.leakage_removal && (mirrored || train.contains_pair(t.relation, t.head, t.tail)) =>
                    {
                        removed_leaked.bump(split);
                        continue;
                    }
                    _ => {}
                }
            }
            push(&mut builder, ds, split, t);
        }
    }
    let out = builder.build(ds.index_scope())?;
    let before = ds.stats();
    let after = out.stats();
    let manifest = DerivationManifest {
        policy: policy.clone(),
        plan: plan.clone(),
        removed_dropped_relations: removed_dropped,
        removed_mirrored_orientation: removed_mirrored,
        removed_leaked,
        orphaned_entities: before.entities - after.entities,
        before,
        after,
    };
    Ok((out, manifest))
}

fn push(builder: &mut DatasetBuilder, ds: &Dataset, split: Split, t: &Triple) {
    let (h, r, tl) = ds.names(t);
    builder.push(split, h, r, tl);
}

pub fn derive_deduplicated(
    ds: &Dataset,
    findings: &[RedundancyFinding],
    policy: &DedupPolicy,
) -> Result<(Dataset, DerivationManifest), DeriveError> {
    let plan = plan(ds, findings, policy)?;
    apply_plan(ds, &plan, policy)
}

/// Writes `train.txt`, `valid.txt` and `test.txt` into `dir`, creating it if
/// needed.
pub fn write_dataset(ds: &Dataset, dir: impl AsRef<Path>) -> Result<(), DeriveError> {
    let dir = dir.as_ref();
    let io = |path: &Path| {
        let path = path.to_owned();
        move |source| DeriveError::Io { path, source }
    };
    fs::create_dir_all(dir).map_err(io(dir))?;
    for split in Split::ALL {
        let path = dir.join(split.file_name());
        let mut out = BufWriter::new(File::create(&path).map_err(io(&path))?);
        for t in ds.split(split) {
            let (h, r, tl) = ds.names(t);
            writeln!(out, "{h}\t{r}\t{tl}").map_err(io(&path))?;
        }
        out.flush().map_err(io(&path))?;
    }
    Ok(())
}

/// Train-pair counts of symmetric relations that still hold both
/// orientations, keyed by relation name.
pub fn mirrored_train_pairs(ds: &Dataset, relations: &BTreeSet<String>) -> BTreeMap<String, usize> {
    let index = ds.train_index();
    relations
        .iter()
        .filter_map(|name| ds.relation_id(name).map(|r| (name, r)))
        .map(|(name, r)| {
            let n = index
                .profile(r)
                .pairs
                .iter()
                .filter(|(h, t)| h < t && index.contains_pair(r, *t, *h))
                .count();
            (name.clone(), n)
        })
        .collect()
}
