//! Application of externally mined Horn rules.
//!
//! Rules come from a file (mining is someone else's job) and are applied to
//! the train split: for a query `(a, r, ?)` every rule with head relation `r`
//! is instantiated with the known argument bound, body atoms are joined
//! through the train indices, and each answer entity is scored by the
//! maximum confidence of the rules producing it, ties broken by how many
//! rules produce it.

use std::collections::{HashMap, HashSet};
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use thiserror::Error;

use crate::baselines::{
    order_candidates, FallbackOrder, IntersectionRule, Orientation, Predictor, Query, RankedPrediction,
};
use crate::store::{Dataset, Direction, EntityId, RelationId, Triple};

pub const MAX_BODY_LEN: usize = 3;

#[derive(Debug, Error)]
pub enum RuleError {
    #[error("line {line}: {message}")]
    Syntax { line: usize, message: String },
    #[error("cannot read rule file {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Term {
    Var(u8),
    Const(EntityId),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Atom {
    pub relation: RelationId,
    pub subject: Term,
    pub object: Term,
}

impl Atom {
    fn arg(&self, side: Direction) -> Term {
        match side {
            Direction::Head => self.subject,
            Direction::Tail => self.object,
        }
    }

    fn mentions(&self, var: u8) -> bool {
        self.subject == Term::Var(var) || self.object == Term::Var(var)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct HornRule {
    pub body: Vec<Atom>,
    pub head: Atom,
    pub confidence: f64,
}

impl HornRule {
    /// The body-length-1 form of an intersection rule.
    pub fn from_intersection(rule: &IntersectionRule) -> Self {
        let (a, b) = (Term::Var(0), Term::Var(1));
        let body = match rule.orientation {
            Orientation::Same => Atom {
                relation: rule.source,
                subject: a,
                object: b,
            },
            Orientation::Reversed => Atom {
                relation: rule.source,
                subject: b,
                object: a,
            },
        };
        HornRule {
            body: vec![body],
            head: Atom {
                relation: rule.target,
                subject: a,
                object: b,
            },
            confidence: rule.confidence,
        }
    }

    fn num_vars(&self) -> usize {
        self.body
            .iter()
            .chain(std::iter::once(&self.head))
            .flat_map(|a| [a.subject, a.object])
            .filter_map(|t| match t {
                Term::Var(v) => Some(v as usize + 1),
                Term::Const(_) => None,
            })
            .max()
            .unwrap_or(0)
    }

    /// Renders the rule in the TSV rule-file format.
    pub fn display<'a>(&'a self, ds: &'a Dataset) -> impl fmt::Display + 'a {
        RuleDisplay { rule: self, ds }
    }
}

struct RuleDisplay<'a> {
    rule: &'a HornRule,
    ds: &'a Dataset,
}

impl fmt::Display for RuleDisplay<'_> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let term = |t: Term| match t {
            Term::Var(v) => format!("?{}", (b'a' + v) as char),
            Term::Const(e) => self.ds.entity_name(e).to_owned(),
        };
        let atom = |a: &Atom| {
            format!(
                "{}({},{})",
                self.ds.relation_name(a.relation),
                term(a.subject),
                term(a.object)
            )
        };
        let body: Vec<String> = self.rule.body.iter().map(atom).collect();
        write!(
            f,
            "{}\t{}\t{}",
            body.join(" & "),
            atom(&self.rule.head),
            self.rule.confidence
        )
    }
}

#[derive(Clone, Debug, Default)]
pub struct ParsedRules {
    pub rules: Vec<HornRule>,
    /// Rules dropped because a relation or constant is not in the dataset.
    pub skipped: usize,
}

pub fn parse_rules(path: impl AsRef<Path>, ds: &Dataset) -> Result<ParsedRules, RuleError> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|source| RuleError::Io {
        path: path.to_owned(),
        source,
    })?;
    parse_rules_str(&text, ds)
}

/// Parses rule lines in either of two layouts:
///
/// * `body<TAB>head<TAB>confidence`, atoms written `rel(?x,?y)` and body
///   atoms joined by ` & `;
/// * AMIE output, `?a rel ?b ... => ?x rel ?y` followed by tab-separated
///   measures, of which the standard confidence (third column) is used.
///
/// Lines with neither a tab nor an arrow are treated as commentary and
/// skipped, as are `#` comments, the AMIE column header and arrow lines that
/// do not start with a variable.
pub fn parse_rules_str(text: &str, ds: &Dataset) -> Result<ParsedRules, RuleError> {
    let mut out = ParsedRules::default();
    for (n, line) in text.lines().enumerate() {
        let line_no = n + 1;
        let line = line.trim_end_matches('\r');
        let is_rule = line.contains('\t') || line.contains("=>") || line.contains('⇒');
        if !is_rule || line.starts_with('#') || line.starts_with("Rule\t") {
            continue;
        }
        let raw = if line.contains("=>") || line.contains('⇒') {
            if !line.trim_start().starts_with('?') {
                continue;
            }
            parse_amie_line(line, line_no)?
        } else {
            parse_tsv_line(line, line_no)?
        };
        if raw.body.is_empty() || raw.body.len() > MAX_BODY_LEN {
            return Err(syntax(
                line_no,
                format!("body length {} outside [1, {MAX_BODY_LEN}]", raw.body.len()),
            ));
        }
        match raw.resolve(ds) {
            Some(rule) => {
                validate(&rule, line_no)?;
                out.rules.push(rule);
            }
            None => {
                log::warn!("line {line_no}: rule mentions unknown names, skipped");
                out.skipped += 1;
            }
        }
    }
    Ok(out)
}

struct RawAtom {
    relation: String,
    subject: String,
    object: String,
}

struct RawRule {
    body: Vec<RawAtom>,
    head: RawAtom,
    confidence: f64,
}

fn syntax(line: usize, message: impl Into<String>) -> RuleError {
    RuleError::Syntax {
        line,
        message: message.into(),
    }
}

fn parse_confidence(s: &str, line: usize) -> Result<f64, RuleError> {
    let c: f64 = s
        .trim()
        .parse()
        .map_err(|_| syntax(line, format!("invalid confidence {s:?}")))?;
    if !(0.0..=1.0).contains(&c) {
        return Err(syntax(line, format!("confidence {c} outside [0, 1]")));
    }
    Ok(c)
}

fn parse_atom(s: &str, line: usize) -> Result<RawAtom, RuleError> {
    let s = s.trim();
    let open = s
        .rfind('(')
        .filter(|_| s.ends_with(')'))
        .ok_or_else(|| syntax(line, format!("invalid atom {s:?}")))?;
    let relation = s[..open].trim();
    let args: Vec<&str> = s[open + 1..s.len() - 1].split(',').map(str::trim).collect();
    if relation.is_empty() || args.len() != 2 || args.iter().any(|a| a.is_empty()) {
        return Err(syntax(line, format!("invalid atom {s:?}")));
    }
    Ok(RawAtom {
        relation: relation.to_owned(),
        subject: args[0].to_owned(),
        object: args[1].to_owned(),
    })
}

fn parse_tsv_line(line: &str, line_no: usize) -> Result<RawRule, RuleError> {
    let cols: Vec<&str> = line.split('\t').collect();
    if cols.len() != 3 {
        return Err(syntax(
            line_no,
            format!("expected 3 tab-separated columns, found {}", cols.len()),
        ));
    }
    let body = cols[0]
        .split(" & ")
        .map(|a| parse_atom(a, line_no))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(RawRule {
        body,
        head: parse_atom(cols[1], line_no)?,
        confidence: parse_confidence(cols[2], line_no)?,
    })
}

fn parse_amie_line(line: &str, line_no: usize) -> Result<RawRule, RuleError> {
    let mut cols = line.split('\t');
    let rule = cols.next().unwrap_or_default();
    let measures: Vec<&str> = cols.collect();
    let (body, head) = rule
        .split_once("=>")
        .or_else(|| rule.split_once('⇒'))
        .ok_or_else(|| syntax(line_no, "missing =>"))?;
    let triples = |s: &str| -> Result<Vec<RawAtom>, RuleError> {
        let tokens: Vec<&str> = s.split_whitespace().collect();
        if tokens.is_empty() || !tokens.len().is_multiple_of(3) {
            return Err(syntax(
                line_no,
                format!("atoms must be subject relation object triples: {s:?}"),
            ));
        }
        Ok(tokens
            .chunks(3)
            .map(|c| RawAtom {
                subject: c[0].to_owned(),
                relation: c[1].to_owned(),
                object: c[2].to_owned(),
            })
            .collect())
    };
    let body = triples(body)?;
    let mut head = triples(head)?;
    if head.len() != 1 {
        return Err(syntax(line_no, "rule head must be a single atom"));
    }
    let confidence = match measures.get(1) {
        Some(c) => parse_confidence(c, line_no)?,
        None => return Err(syntax(line_no, "missing confidence column")),
    };
    Ok(RawRule {
        body,
        head: head.remove(0),
        confidence,
    })
}

impl RawRule {
    /// Interns variables and resolves names. `None` if a name is unknown.
    fn resolve(self, ds: &Dataset) -> Option<HornRule> {
        let mut vars: Vec<String> = Vec::new();
        let mut term = |s: &str| -> Option<Term> {
            if s.starts_with('?') {
                let idx = match vars.iter().position(|v| v == s) {
                    Some(i) => i,
                    None => {
                        vars.push(s.to_owned());
                        vars.len() - 1
                    }
                };
                Some(Term::Var(idx as u8))
            } else {
                ds.entity_id(s).map(Term::Const)
            }
        };
        let mut atom = |a: &RawAtom| -> Option<Atom> {
            Some(Atom {
                relation: ds.relation_id(&a.relation)?,
                subject: term(&a.subject)?,
                object: term(&a.object)?,
            })
        };
        let head = atom(&self.head)?;
        let body = self.body.iter().map(&mut atom).collect::<Option<Vec<_>>>()?;
        Some(HornRule {
            body,
            head,
            confidence: self.confidence,
        })
    }
}

fn validate(rule: &HornRule, line: usize) -> Result<(), RuleError> {
    if rule.body.is_empty() || rule.body.len() > MAX_BODY_LEN {
        return Err(syntax(
            line,
            format!("body length {} outside [1, {MAX_BODY_LEN}]", rule.body.len()),
        ));
    }
    let unbound = [rule.head.subject, rule.head.object]
        .into_iter()
        .filter_map(|t| match t {
            Term::Var(v) => Some(v),
            Term::Const(_) => None,
        })
        .filter(|&v| !rule.body.iter().any(|a| a.mentions(v)))
        .count();
    if unbound > 1 {
        return Err(syntax(line, "both head variables are missing from the body"));
    }
    Ok(())
}

/// Answers for one rule and query, with the known argument bound.
pub fn instantiate(ds: &Dataset, rule: &HornRule, query: &Query) -> HashSet<EntityId> {
    let mut answers = HashSet::new();
    if rule.head.relation != query.relation {
        return answers;
    }
    let mut bindings: Vec<Option<EntityId>> = vec![None; rule.num_vars()];
    match rule.head.arg(query.direction.opposite()) {
        Term::Const(c) if c != query.anchor => return answers,
        Term::Const(_) => {}
        Term::Var(v) => bindings[v as usize] = Some(query.anchor),
    }
    let answer = rule.head.arg(query.direction);
    if let Term::Var(v) = answer {
        if bindings[v as usize].is_none() && !rule.body.iter().any(|a| a.mentions(v)) {
            // the answer would be unconstrained
            return answers;
        }
    }
    let mut search = Search {
        ds,
        rule,
        query,
        answer,
        answers: &mut answers,
    };
    let pending: Vec<usize> = (0..rule.body.len()).collect();
    search.solve(&pending, &mut bindings);
    answers
}

struct Search<'a> {
    ds: &'a Dataset,
    rule: &'a HornRule,
    query: &'a Query,
    answer: Term,
    answers: &'a mut HashSet<EntityId>,
}

fn value(t: Term, bindings: &[Option<EntityId>]) -> Option<EntityId> {
    match t {
        Term::Const(c) => Some(c),
        Term::Var(v) => bindings[v as usize],
    }
}

impl Search<'_> {
    fn estimate(&self, atom: &Atom, bindings: &[Option<EntityId>]) -> usize {
        let index = self.ds.train_index();
        match (value(atom.subject, bindings), value(atom.object, bindings)) {
            (Some(_), Some(_)) => 0,
            (Some(s), None) => index.tails(s, atom.relation).len(),
            (None, Some(o)) => index.heads(atom.relation, o).len(),
            (None, None) => index.profile(atom.relation).pair_count(),
        }
    }

    fn solve(&mut self, pending: &[usize], bindings: &mut Vec<Option<EntityId>>) {
        if let Some(found) = value(self.answer, bindings) {
            if self.answers.contains(&found) {
                return;
            }
        }
        if pending.is_empty() {
            self.accept(bindings);
            return;
        }
        let (slot, &next) = pending
            .iter()
            .enumerate()
            .min_by_key(|(_, &i)| self.estimate(&self.rule.body[i], bindings))
            .expect("pending is non-empty");
        let rest: Vec<usize> = pending
            .iter()
            .enumerate()
            .filter(|(j, _)| *j != slot)
            .map(|(_, &i)| i)
            .collect();
        let atom = self.rule.body[next];
        let index = self.ds.train_index();
        match (value(atom.subject, bindings), value(atom.object, bindings)) {
            (Some(s), Some(o)) => {
                if index.contains_pair(atom.relation, s, o) {
                    self.solve(&rest, bindings);
                }
            }
            (Some(s), None) => {
                for &o in index.tails(s, atom.relation) {
                    self.bind_and_solve(&rest, bindings, &[(atom.object, o)]);
                }
            }
            (None, Some(o)) => {
                for &s in index.heads(atom.relation, o) {
                    self.bind_and_solve(&rest, bindings, &[(atom.subject, s)]);
                }
            }
            (None, None) => {
                for &(s, o) in &index.profile(atom.relation).pairs {
                    self.bind_and_solve(&rest, bindings, &[(atom.subject, s), (atom.object, o)]);
                }
            }
        }
    }

    fn bind_and_solve(&mut self, rest: &[usize], bindings: &mut Vec<Option<EntityId>>, assign: &[(Term, EntityId)]) {
        let mut set = Vec::new();
        for &(term, e) in assign {
            let Term::Var(v) = term else { continue };
            match bindings[v as usize] {
                Some(existing) if existing != e => {
                    for &u in &set {
                        bindings[u] = None;
                    }
                    return;
                }
                Some(_) => {}
                None => {
                    bindings[v as usize] = Some(e);
                    set.push(v as usize);
                }
            }
        }
        self.solve(rest, bindings);
        for u in set {
            bindings[u] = None;
        }
    }

    fn accept(&mut self, bindings: &[Option<EntityId>]) {
        let Some(answer) = value(self.answer, bindings) else {
            return;
        };
        let conclusion: Triple = self.query.complete(answer);
        let self_proof = self
            .rule
            .body
            .iter()
            .any(|a| match (value(a.subject, bindings), value(a.object, bindings)) {
                (Some(s), Some(o)) => Triple::new(s, a.relation, o) == conclusion,
                _ => false,
            });
        if !self_proof {
            self.answers.insert(answer);
        }
    }
}

/// Applies parsed Horn rules as a [`Predictor`].
pub struct RuleEngine<'a> {
    ds: &'a Dataset,
    rules: Vec<HornRule>,
    by_head: HashMap<RelationId, Vec<usize>>,
    fallback: Arc<FallbackOrder>,
}

impl<'a> RuleEngine<'a> {
    pub fn new(ds: &'a Dataset, rules: Vec<HornRule>) -> Result<Self, RuleError> {
        for rule in &rules {
            validate(rule, 0)?;
        }
        let mut by_head: HashMap<RelationId, Vec<usize>> = HashMap::new();
        for (i, rule) in rules.iter().enumerate() {
            by_head.entry(rule.head.relation).or_default().push(i);
        }
        Ok(RuleEngine {
            ds,
            rules,
            by_head,
            fallback: Arc::new(FallbackOrder::by_frequency(ds)),
        })
    }

    pub fn rules(&self) -> &[HornRule] {
        &self.rules
    }

    /// Per-candidate `(max confidence, number of producing rules)`.
    pub fn score(&self, query: &Query) -> HashMap<EntityId, (f64, u32)> {
        let mut scores: HashMap<EntityId, (f64, u32)> = HashMap::new();
        for &i in self.by_head.get(&query.relation).into_iter().flatten() {
            let rule = &self.rules[i];
            for e in instantiate(self.ds, rule, query) {
                let entry = scores.entry(e).or_insert((0.0, 0));
                entry.0 = entry.0.max(rule.confidence);
                entry.1 += 1;
            }
        }
        scores
    }
}

impl Predictor for RuleEngine<'_> {
    fn predict(&self, query: &Query) -> RankedPrediction {
        let prefix = order_candidates(self.score(query), &self.fallback);
        RankedPrediction::new(*query, prefix, self.fallback.clone())
    }

    fn name(&self) -> &str {
        "horn-rules"
    }
}

pub fn apply_rules(ds: &Dataset, rules: &[HornRule], query: &Query) -> Result<RankedPrediction, RuleError> {
    Ok(RuleEngine::new(ds, rules.to_vec())?.predict(query))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::store::{DatasetBuilder, Split, SplitSet};

    fn ds() -> Dataset {
        let mut b = DatasetBuilder::new();
        for (h, r, t) in [
            ("bill", "places_lived/location", "seattle"),
            ("bill", "places_lived/location", "medina"),
            ("ann", "places_lived/location", "paris"),
            ("ann", "place_of_birth", "paris"),
            ("seattle", "located_in", "usa"),
            ("paris", "located_in", "france"),
        ] {
            b.push(Split::Train, h, r, t);
        }
        b.build(SplitSet::TRAIN).unwrap()
    }

    fn query(ds: &Dataset, anchor: &str, rel: &str, dir: Direction) -> Query {
        Query {
            anchor: ds.entity_id(anchor).unwrap(),
            relation: ds.relation_id(rel).unwrap(),
            direction: dir,
        }
    }

    #[test]
    fn parses_tsv_and_amie_lines() {
        let ds = ds();
        let text = "# comment\n\
            places_lived/location(?a,?b)\tplace_of_birth(?a,?b)\t0.7\n\
            ?a  places_lived/location  ?b   => ?a  place_of_birth  ?b\t0.1\t0.7\t0.8\n\
            Rule\tHead Coverage\tStd Confidence\n";
        let parsed = parse_rules_str(text, &ds).unwrap();
        assert_eq!(parsed.rules.len(), 2);
        assert_eq!(parsed.skipped, 0);
        assert_eq!(parsed.rules[0], parsed.rules[1]);
        assert_eq!(parsed.rules[0].body.len(), 1);
        assert_eq!(parsed.rules[0].confidence, 0.7);
        assert_eq!(
            parsed.rules[0].display(&ds).to_string(),
            "places_lived/location(?a,?b)\tplace_of_birth(?a,?b)\t0.7"
        );
    }

    #[test]
    fn empty_and_unknown() {
        let ds = ds();
        assert!(parse_rules_str("", &ds).unwrap().rules.is_empty());
        let parsed = parse_rules_str("nope(?a,?b)\tplace_of_birth(?a,?b)\t0.5\n", &ds).unwrap();
        assert_eq!((parsed.rules.len(), parsed.skipped), (0, 1));
    }

    #[test]
    fn syntax_errors() {
        let ds = ds();
        for bad in [
            "located_in(?a)\tplace_of_birth(?a,?b)\t0.5",
            "located_in(?a,?b)\tplace_of_birth(?a,?b)",
            "located_in(?a,?b)\tplace_of_birth(?a,?b)\t1.5",
            "located_in ?a ?b\tplace_of_birth(?a,?b)\t0.5",
        ] {
            assert!(
                matches!(parse_rules_str(bad, &ds), Err(RuleError::Syntax { line: 1, .. })),
                "{bad}"
            );
        }
    }

    #[test]
    fn body_length_is_bounded() {
        let ds = ds();
        let r = ds.relation_id("located_in").unwrap();
        let atom = Atom {
            relation: r,
            subject: Term::Var(0),
            object: Term::Var(1),
        };
        let rule = HornRule {
            body: vec![atom; 4],
            head: atom,
            confidence: 0.5,
        };
        assert!(RuleEngine::new(&ds, vec![rule]).is_err());
    }

    #[test]
    fn single_rule_ranks_instantiation_first() {
        let ds = ds();
        let parsed = parse_rules_str("places_lived/location(?a,?b)\tplace_of_birth(?a,?b)\t0.7", &ds).unwrap();
        let q = query(&ds, "bill", "place_of_birth", Direction::Tail);
        let p = apply_rules(&ds, &parsed.rules, &q).unwrap();
        let names: Vec<&str> = p.prefix().iter().map(|e| ds.entity_name(*e)).collect();
        assert_eq!(names, vec!["seattle", "medina"]);
    }

    #[test]
    fn two_hop_join() {
        let ds = ds();
        let parsed = parse_rules_str(
            "place_of_birth(?a,?c) & located_in(?c,?b)\tplaces_lived/location(?a,?b)\t0.4",
            &ds,
        )
        .unwrap();
        let q = query(&ds, "ann", "places_lived/location", Direction::Tail);
        let answers = instantiate(&ds, &parsed.rules[0], &q);
        assert_eq!(answers, HashSet::from([ds.entity_id("france").unwrap()]));
        let q = query(&ds, "france", "places_lived/location", Direction::Head);
        let answers = instantiate(&ds, &parsed.rules[0], &q);
        assert_eq!(answers, HashSet::from([ds.entity_id("ann").unwrap()]));
    }

    #[test]
    fn max_confidence_and_support() {
        let ds = ds();
        let parsed = parse_rules_str(
            "places_lived/location(?a,?b)\tplace_of_birth(?a,?b)\t0.6\n\
             places_lived/location(?a,?b)\tplace_of_birth(?a,?b)\t0.9\n",
            &ds,
        )
        .unwrap();
        let engine = RuleEngine::new(&ds, parsed.rules).unwrap();
        let q = query(&ds, "ann", "place_of_birth", Direction::Tail);
        let scores = engine.score(&q);
        assert_eq!(scores[&ds.entity_id("paris").unwrap()], (0.9, 2));
    }

    #[test]
    fn support_breaks_confidence_ties() {
        let mut b = DatasetBuilder::new();
        for (h, r, t) in [
            ("a", "p1", "x"),
            ("a", "p2", "x"),
            ("a", "p3", "x"),
            ("a", "p1", "y"),
            ("z", "target", "z"),
        ] {
            b.push(Split::Train, h, r, t);
        }
        // make y more frequent than x so fallback alone would favour y
        for i in 0..5 {
            b.push(Split::Train, "y", "other", &format!("o{i}"));
        }
        let ds = b.build(SplitSet::TRAIN).unwrap();
        let rules = "p1(?a,?b)\ttarget(?a,?b)\t0.5\np2(?a,?b)\ttarget(?a,?b)\t0.5\np3(?a,?b)\ttarget(?a,?b)\t0.5\n";
        let parsed = parse_rules_str(rules, &ds).unwrap();
        let q = query(&ds, "a", "target", Direction::Tail);
        let p = apply_rules(&ds, &parsed.rules, &q).unwrap();
        let names: Vec<&str> = p.prefix().iter().map(|e| ds.entity_name(*e)).collect();
        assert_eq!(names, vec!["x", "y"]);
    }

    #[test]
    fn no_self_proof() {
        let mut b = DatasetBuilder::new();
        b.push(Split::Train, "a", "sim", "a");
        b.push(Split::Train, "a", "sim", "b");
        let ds = b.build(SplitSet::TRAIN).unwrap();
        let parsed = parse_rules_str("sim(?b,?a)\tsim(?a,?b)\t0.9", &ds).unwrap();
        let q = query(&ds, "a", "sim", Direction::Tail);
        // (a, sim, a) would only follow from itself
        assert!(instantiate(&ds, &parsed.rules[0], &q).is_empty());
        let q = query(&ds, "b", "sim", Direction::Tail);
        assert_eq!(
            instantiate(&ds, &parsed.rules[0], &q),
            HashSet::from([ds.entity_id("a").unwrap()])
        );
    }

    #[test]
    fn constants_in_rules() {
        let ds = ds();
        let parsed = parse_rules_str("located_in(?a,usa)\tplace_of_birth(bill,?a)\t0.3", &ds).unwrap();
        let rule = &parsed.rules[0];
        let q = query(&ds, "bill", "place_of_birth", Direction::Tail);
        assert_eq!(
            instantiate(&ds, rule, &q),
            HashSet::from([ds.entity_id("seattle").unwrap()])
        );
        let q = query(&ds, "ann", "place_of_birth", Direction::Tail);
        assert!(instantiate(&ds, rule, &q).is_empty());
    }
}
