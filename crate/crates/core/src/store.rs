//! Triple datasets: loading, interning, and the lookup indices shared by the
//! audit, derivation, prediction and evaluation code.
//!
//! A [`Dataset`] owns three ordered triple lists (train/valid/test), the
//! entity and relation dictionaries, and a set of indices built once at
//! construction. It is never mutated afterwards, so a `&Dataset` can be handed
//! to any number of worker threads.

use std::borrow::Cow;
use std::collections::{HashMap, HashSet};
use std::fmt;
use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::{Path, PathBuf};

use indexmap::IndexSet;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

/// Dense entity identifier, assigned in order of first appearance.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct EntityId(pub u32);

/// Dense relation identifier, assigned in order of first appearance.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct RelationId(pub u32);

impl EntityId {
    #[inline]
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

impl RelationId {
    #[inline]
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Triple {
    pub head: EntityId,
    pub relation: RelationId,
    pub tail: EntityId,
}

impl Triple {
    pub fn new(head: EntityId, relation: RelationId, tail: EntityId) -> Self {
        Triple { head, relation, tail }
    }

    /// The same relation with head and tail swapped.
    pub fn swapped(&self) -> Triple {
        Triple::new(self.tail, self.relation, self.head)
    }

    /// The entity on the given side of the triple.
    pub fn entity(&self, side: Direction) -> EntityId {
        match side {
            Direction::Head => self.head,
            Direction::Tail => self.tail,
        }
    }

    /// Replaces the entity on `side` with `entity`.
    pub fn with_entity(&self, side: Direction, entity: EntityId) -> Triple {
        match side {
            Direction::Head => Triple::new(entity, self.relation, self.tail),
            Direction::Tail => Triple::new(self.head, self.relation, entity),
        }
    }
}

/// Which side of a triple a query asks for.
///
/// `Tail` is the query `(h, r, ?)`, `Head` is `(?, r, t)`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Direction {
    Head,
    Tail,
}

impl Direction {
    pub const BOTH: [Direction; 2] = [Direction::Head, Direction::Tail];

    /// The side that is known when this side is asked for.
    pub fn opposite(self) -> Direction {
        match self {
            Direction::Head => Direction::Tail,
            Direction::Tail => Direction::Head,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Direction::Head => "head",
            Direction::Tail => "tail",
        }
    }
}

impl fmt::Display for Direction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Valid,
    Test,
}

impl Split {
    pub const ALL: [Split; 3] = [Split::Train, Split::Valid, Split::Test];

    pub fn file_name(self) -> &'static str {
        match self {
            Split::Train => "train.txt",
            Split::Valid => "valid.txt",
            Split::Test => "test.txt",
        }
    }

    fn bit(self) -> u8 {
        match self {
            Split::Train => 0b001,
            Split::Valid => 0b010,
            Split::Test => 0b100,
        }
    }

    fn slot(self) -> usize {
        match self {
            Split::Train => 0,
            Split::Valid => 1,
            Split::Test => 2,
        }
    }
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Split::Train => "train",
            Split::Valid => "valid",
            Split::Test => "test",
        })
    }
}

/// A subset of {train, valid, test}.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Default)]
pub struct SplitSet(u8);

impl SplitSet {
    pub const EMPTY: SplitSet = SplitSet(0);
    pub const TRAIN: SplitSet = SplitSet(0b001);
    pub const VALID: SplitSet = SplitSet(0b010);
    pub const TEST: SplitSet = SplitSet(0b100);
    pub const TRAIN_TEST: SplitSet = SplitSet(0b101);
    pub const ALL: SplitSet = SplitSet(0b111);

    pub fn contains(self, split: Split) -> bool {
        self.0 & split.bit() != 0
    }

    pub fn with(self, split: Split) -> SplitSet {
        SplitSet(self.0 | split.bit())
    }

    pub fn union(self, other: SplitSet) -> SplitSet {
        SplitSet(self.0 | other.0)
    }

    pub fn is_empty(self) -> bool {
        self.0 == 0
    }

    pub fn iter(self) -> impl Iterator<Item = Split> {
        Split::ALL.into_iter().filter(move |s| self.contains(*s))
    }
}

impl From<Split> for SplitSet {
    fn from(split: Split) -> Self {
        SplitSet(split.bit())
    }
}

impl FromIterator<Split> for SplitSet {
    fn from_iter<I: IntoIterator<Item = Split>>(iter: I) -> Self {
        iter.into_iter().fold(SplitSet::EMPTY, SplitSet::with)
    }
}

impl fmt::Display for SplitSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let names: Vec<String> = self.iter().map(|s| s.to_string()).collect();
        write!(f, "{{{}}}", names.join(","))
    }
}

#[derive(Debug, Error)]
pub enum StoreError {
    #[error("missing triple file {0}")]
    MissingFile(PathBuf),
    #[error("{path}:{line}: expected 3 tab-separated fields, found {fields}")]
    MalformedLine { path: PathBuf, line: usize, fields: usize },
    #[error("empty train split")]
    EmptyTrain,
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

/// Bidirectional name ↔ dense id map.
#[derive(Clone, Debug, Default)]
pub struct Dictionary {
    names: IndexSet<String>,
}

impl Dictionary {
    fn intern(&mut self, name: &str) -> u32 {
        if let Some(idx) = self.names.get_index_of(name) {
            return idx as u32;
        }
        let (idx, _) = self.names.insert_full(name.to_owned());
        idx as u32
    }

    pub fn id(&self, name: &str) -> Option<u32> {
        self.names.get_index_of(name).map(|i| i as u32)
    }

    pub fn name(&self, id: u32) -> Option<&str> {
        self.names.get_index(id as usize).map(String::as_str)
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (u32, &str)> {
        self.names.iter().enumerate().map(|(i, n)| (i as u32, n.as_str()))
    }
}

/// Per-relation view over the indexed splits: the distinct subject-object
/// pairs, their projections, and the raw instance count.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RelationProfile {
    pub relation: RelationId,
    /// Distinct `(head, tail)` pairs, sorted.
    pub pairs: Vec<(EntityId, EntityId)>,
    /// Distinct heads, sorted.
    pub subjects: Vec<EntityId>,
    /// Distinct tails, sorted.
    pub objects: Vec<EntityId>,
    /// Number of triple lines, duplicates included.
    pub triple_count: usize,
}

impl RelationProfile {
    fn from_pairs(relation: RelationId, mut pairs: Vec<(EntityId, EntityId)>) -> Self {
        let triple_count = pairs.len();
        pairs.sort_unstable();
        pairs.dedup();
        let mut subjects: Vec<EntityId> = pairs.iter().map(|p| p.0).collect();
        subjects.dedup();
        let mut objects: Vec<EntityId> = pairs.iter().map(|p| p.1).collect();
        objects.sort_unstable();
        objects.dedup();
        RelationProfile {
            relation,
            pairs,
            subjects,
            objects,
            triple_count,
        }
    }

    pub fn pair_count(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.triple_count == 0
    }

    pub fn contains_pair(&self, head: EntityId, tail: EntityId) -> bool {
        self.pairs.binary_search(&(head, tail)).is_ok()
    }

    /// `|T_r| / (|S_r| · |O_r|)`, or `None` for an empty relation.
    pub fn fill_ratio(&self) -> Option<f64> {
        if self.pairs.is_empty() {
            return None;
        }
        let cells = self.subjects.len() as f64 * self.objects.len() as f64;
        Some(self.pairs.len() as f64 / cells)
    }
}

/// Adjacency lists and relation profiles for one choice of splits.
#[derive(Clone, Debug)]
pub struct GraphIndex {
    scope: SplitSet,
    tails: HashMap<(EntityId, RelationId), Vec<EntityId>>,
    heads: HashMap<(RelationId, EntityId), Vec<EntityId>>,
    profiles: Vec<RelationProfile>,
}

impl GraphIndex {
    fn build<'a>(scope: SplitSet, triples: impl Iterator<Item = &'a Triple>, num_relations: usize) -> Self {
        let mut tails: HashMap<(EntityId, RelationId), Vec<EntityId>> = HashMap::new();
        let mut heads: HashMap<(RelationId, EntityId), Vec<EntityId>> = HashMap::new();
        let mut raw_pairs: Vec<Vec<(EntityId, EntityId)>> = vec![Vec::new(); num_relations];
        for t in triples {
            tails.entry((t.head, t.relation)).or_default().push(t.tail);
            heads.entry((t.relation, t.tail)).or_default().push(t.head);
            raw_pairs[t.relation.index()].push((t.head, t.tail));
        }
        for list in tails.values_mut().chain(heads.values_mut()) {
            list.sort_unstable();
            list.dedup();
        }
        let profiles = raw_pairs
            .into_iter()
            .enumerate()
            .map(|(r, pairs)| RelationProfile::from_pairs(RelationId(r as u32), pairs))
            .collect();
        GraphIndex {
            scope,
            tails,
            heads,
            profiles,
        }
    }

    pub fn scope(&self) -> SplitSet {
        self.scope
    }

    /// Sorted distinct `t` with `(head, relation, t)` indexed.
    pub fn tails(&self, head: EntityId, relation: RelationId) -> &[EntityId] {
        self.tails.get(&(head, relation)).map(Vec::as_slice).unwrap_or(&[])
    }

    /// Sorted distinct `h` with `(h, relation, tail)` indexed.
    pub fn heads(&self, relation: RelationId, tail: EntityId) -> &[EntityId] {
        self.heads.get(&(relation, tail)).map(Vec::as_slice).unwrap_or(&[])
    }

    /// Entities on side `wanted` of triples whose other side is `anchor`.
    pub fn neighbors(&self, anchor: EntityId, relation: RelationId, wanted: Direction) -> &[EntityId] {
        match wanted {
            Direction::Tail => self.tails(anchor, relation),
            Direction::Head => self.heads(relation, anchor),
        }
    }

    pub fn contains_pair(&self, relation: RelationId, head: EntityId, tail: EntityId) -> bool {
        self.tails(head, relation).binary_search(&tail).is_ok()
    }

    pub fn profile(&self, relation: RelationId) -> &RelationProfile {
        &self.profiles[relation.index()]
    }

    pub fn profiles(&self) -> &[RelationProfile] {
        &self.profiles
    }
}

/// Table-1 style counts.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct DatasetStats {
    pub entities: usize,
    pub relations: usize,
    pub train: usize,
    pub valid: usize,
    pub test: usize,
}

/// Incrementally interns named triples, then freezes them into a [`Dataset`].
#[derive(Debug, Default)]
pub struct DatasetBuilder {
    entities: Dictionary,
    relations: Dictionary,
    splits: [Vec<Triple>; 3],
}

impl DatasetBuilder {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, split: Split, head: &str, relation: &str, tail: &str) -> Triple {
        let h = EntityId(self.entities.intern(head));
        let r = RelationId(self.relations.intern(relation));
        let t = EntityId(self.entities.intern(tail));
        let triple = Triple::new(h, r, t);
        self.splits[split.slot()].push(triple);
        triple
    }

    pub fn build(self, index_scope: SplitSet) -> Result<Dataset, StoreError> {
        let [train, valid, test] = self.splits;
        if train.is_empty() {
            return Err(StoreError::EmptyTrain);
        }
        let num_entities = self.entities.len();
        let num_relations = self.relations.len();

        let mut frequency = vec![0u64; num_entities];
        for t in &train {
            frequency[t.head.index()] += 1;
            frequency[t.tail.index()] += 1;
        }
        let members = [
            train.iter().copied().collect::<HashSet<_>>(),
            valid.iter().copied().collect::<HashSet<_>>(),
            test.iter().copied().collect::<HashSet<_>>(),
        ];
        let train_index = GraphIndex::build(SplitSet::TRAIN, train.iter(), num_relations);
        let scope = if index_scope.is_empty() {
            SplitSet::TRAIN
        } else {
            index_scope
        };
        let scoped_index = (scope != SplitSet::TRAIN).then(|| {
            let splits = [&train, &valid, &test];
            let iter = Split::ALL
                .into_iter()
                .filter(|s| scope.contains(*s))
                .flat_map(|s| splits[s.slot()].iter());
            GraphIndex::build(scope, iter, num_relations)
        });

        Ok(Dataset {
            entities: self.entities,
            relations: self.relations,
            splits: [train, valid, test],
            members,
            frequency,
            train_index,
            scoped_index,
        })
    }
}

/// An immutable, fully indexed benchmark.
#[derive(Clone, Debug)]
pub struct Dataset {
    entities: Dictionary,
    relations: Dictionary,
    splits: [Vec<Triple>; 3],
    members: [HashSet<Triple>; 3],
    frequency: Vec<u64>,
    train_index: GraphIndex,
    scoped_index: Option<GraphIndex>,
}

/// Reads `train.txt`, `valid.txt` and `test.txt` from `dir`.
///
/// `index_scope` selects which splits feed [`Dataset::index`]; the train-only
/// index is always built as well.
pub fn load_dataset(dir: impl AsRef<Path>, index_scope: SplitSet) -> Result<Dataset, StoreError> {
    let dir = dir.as_ref();
    let mut builder = DatasetBuilder::new();
    for split in Split::ALL {
        let path = dir.join(split.file_name());
        if !path.is_file() {
            return Err(StoreError::MissingFile(path));
        }
        read_split(&path, split, &mut builder)?;
    }
    let dataset = builder.build(index_scope)?;
    let stats = dataset.stats();
    log::info!(
        "loaded {}: {} entities, {} relations, {}/{}/{} triples",
        dir.display(),
        stats.entities,
        stats.relations,
        stats.train,
        stats.valid,
        stats.test
    );
    Ok(dataset)
}

fn read_split(path: &Path, split: Split, builder: &mut DatasetBuilder) -> Result<(), StoreError> {
    let io_err = |source| StoreError::Io {
        path: path.to_owned(),
        source,
    };
    let file = File::open(path).map_err(io_err)?;
    for (n, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(io_err)?;
        let line = line.strip_suffix('\r').unwrap_or(&line);
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split('\t').collect();
        if fields.len() != 3 {
            return Err(StoreError::MalformedLine {
                path: path.to_owned(),
                line: n + 1,
                fields: fields.len(),
            });
        }
        builder.push(split, fields[0], fields[1], fields[2]);
    }
    Ok(())
}

impl Dataset {
    pub fn num_entities(&self) -> usize {
        self.entities.len()
    }

    pub fn num_relations(&self) -> usize {
        self.relations.len()
    }

    pub fn entities(&self) -> &Dictionary {
        &self.entities
    }

    pub fn relations(&self) -> &Dictionary {
        &self.relations
    }

    pub fn entity_ids(&self) -> impl Iterator<Item = EntityId> {
        (0..self.num_entities() as u32).map(EntityId)
    }

    pub fn relation_ids(&self) -> impl Iterator<Item = RelationId> {
        (0..self.num_relations() as u32).map(RelationId)
    }

    pub fn entity_name(&self, id: EntityId) -> &str {
        self.entities.name(id.0).expect("entity id out of range")
    }

    pub fn relation_name(&self, id: RelationId) -> &str {
        self.relations.name(id.0).expect("relation id out of range")
    }

    pub fn entity_id(&self, name: &str) -> Option<EntityId> {
        self.entities.id(name).map(EntityId)
    }

    pub fn relation_id(&self, name: &str) -> Option<RelationId> {
        self.relations.id(name).map(RelationId)
    }

    pub fn split(&self, split: Split) -> &[Triple] {
        &self.splits[split.slot()]
    }

    pub fn train(&self) -> &[Triple] {
        self.split(Split::Train)
    }

    pub fn valid(&self) -> &[Triple] {
        self.split(Split::Valid)
    }

    pub fn test(&self) -> &[Triple] {
        self.split(Split::Test)
    }

    /// The index over the configured scope (train-only by default).
    pub fn index(&self) -> &GraphIndex {
        self.scoped_index.as_ref().unwrap_or(&self.train_index)
    }

    /// The index over the train split, regardless of the configured scope.
    pub fn train_index(&self) -> &GraphIndex {
        &self.train_index
    }

    pub fn index_scope(&self) -> SplitSet {
        self.index().scope()
    }

    /// An index over `scope`, borrowed when one is already built.
    pub fn index_for(&self, scope: SplitSet) -> Cow<'_, GraphIndex> {
        if scope == SplitSet::TRAIN {
            return Cow::Borrowed(&self.train_index);
        }
        if let Some(index) = self.scoped_index.as_ref().filter(|i| i.scope() == scope) {
            return Cow::Borrowed(index);
        }
        let iter = scope.iter().flat_map(|s| self.split(s).iter());
        Cow::Owned(GraphIndex::build(scope, iter, self.num_relations()))
    }

    /// Entities on side `wanted` that complete `anchor` under `relation`
    /// within the indexed scope.
    pub fn neighbors(&self, anchor: EntityId, relation: RelationId, wanted: Direction) -> &[EntityId] {
        self.index().neighbors(anchor, relation, wanted)
    }

    pub fn contains(&self, triple: &Triple, scope: SplitSet) -> bool {
        scope.iter().any(|s| self.members[s.slot()].contains(triple))
    }

    /// Number of train triples with `entity` as head or tail; a self-loop
    /// counts twice.
    pub fn entity_frequency(&self, entity: EntityId) -> u64 {
        self.frequency.get(entity.index()).copied().unwrap_or(0)
    }

    pub fn relation_profile(&self, relation: RelationId) -> &RelationProfile {
        self.index().profile(relation)
    }

    pub fn stats(&self) -> DatasetStats {
        DatasetStats {
            entities: self.num_entities(),
            relations: self.num_relations(),
            train: self.train().len(),
            valid: self.valid().len(),
            test: self.test().len(),
        }
    }

    pub fn names(&self, triple: &Triple) -> (&str, &str, &str) {
        (
            self.entity_name(triple.head),
            self.relation_name(triple.relation),
            self.entity_name(triple.tail),
        )
    }

    /// Resolves a named triple; `None` if any name is not interned.
    pub fn lookup(&self, head: &str, relation: &str, tail: &str) -> Option<Triple> {
        Some(Triple::new(
            self.entity_id(head)?,
            self.relation_id(relation)?,
            self.entity_id(tail)?,
        ))
    }

    /// SHA-256 over the name-resolved triple lines of all three splits.
    pub fn content_hash(&self) -> String {
        let mut hasher = Sha256::new();
        for split in Split::ALL {
            hasher.update(split.file_name().as_bytes());
            hasher.update(b"\n");
            for t in self.split(split) {
                let (h, r, tl) = self.names(t);
                hasher.update(h.as_bytes());
                hasher.update(b"\t");
                hasher.update(r.as_bytes());
                hasher.update(b"\t");
                hasher.update(tl.as_bytes());
                hasher.update(b"\n");
            }
        }
        hasher.finalize().iter().map(|b| format!("{b:02x}")).collect()
    }
}
