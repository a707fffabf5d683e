//! The `kg-audit` command line.
//!
//! Settings come from three layers: built-in defaults, an optional TOML file
//! given with `--config`, and command-line flags, later layers winning.
//! Every artifact a command writes is accompanied by the resolved settings
//! and the input dataset's content hash, either embedded (JSON reports) or in
//! a `provenance.json` next to it (TSV, CSV and JSONL files).

use std::collections::BTreeMap;
use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};

use crate::audit::{run_audit, AuditConfig, AuditReport, RedundancyIndex, ReverseDuplicatePolicy};
use crate::baselines::{build_intersection_rules, CartesianPredictor, FrequencyPredictor, Predictor, RulePredictor};
use crate::derive::{derive_deduplicated, write_dataset, DedupPolicy, DropRule};
use crate::eval::{
    full_report, write_breakdown_csv, write_rankings, Evaluation, Evaluator, FilterScope, GroupKeys, Grouping,
    MetricsReport, DEFAULT_HITS,
};
use crate::rules::{parse_rules, RuleEngine};
use crate::store::{load_dataset, Dataset, SplitSet};

pub const THREADS_ENV: &str = "KG_AUDIT_THREADS";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum PredictorKind {
    /// Intersection rules, or Horn rules when `--rules` is given.
    Rule,
    Cartesian,
    Frequency,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum AuditScope {
    /// Detect redundancy on the train split only.
    #[default]
    Train,
    /// Detect redundancy on train, valid and test together.
    All,
}

impl AuditScope {
    fn splits(self) -> SplitSet {
        match self {
            AuditScope::Train => SplitSet::TRAIN,
            AuditScope::All => SplitSet::ALL,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum FilterScopeArg {
    All,
    TrainTest,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum PolicyArg {
    ReverseOnly,
    Both,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum DropRuleArg {
    FewerTriples,
    LexicographicallyLater,
}

/// Fully resolved settings for one invocation.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub data: Option<PathBuf>,
    pub out: Option<PathBuf>,
    pub audit: AuditConfig,
    pub audit_scope: AuditScope,
    pub reverse_duplicate_policy: ReverseDuplicatePolicy,
    pub predictor: Option<PredictorKind>,
    pub rules: Option<PathBuf>,
    pub rankings: Option<PathBuf>,
    pub hits: Vec<u32>,
    pub filter_scope: FilterScope,
    pub dedup: DedupPolicy,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            data: None,
            out: None,
            audit: AuditConfig::default(),
            audit_scope: AuditScope::default(),
            reverse_duplicate_policy: ReverseDuplicatePolicy::default(),
            predictor: None,
            rules: None,
            rankings: None,
            hits: DEFAULT_HITS.to_vec(),
            filter_scope: FilterScope::default(),
            dedup: DedupPolicy::default(),
        }
    }
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        Ok(toml::from_str(text)?)
    }

    fn data_dir(&self) -> Result<&Path> {
        self.data.as_deref().context("--data is required")
    }

    fn out_dir(&self) -> Result<&Path> {
        self.out.as_deref().context("--out is required for this command")
    }
}

#[derive(Debug, Parser)]
#[command(
    name = "kg-audit",
    version,
    about = "Audit and evaluate knowledge-graph link-prediction benchmarks"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    #[command(flatten)]
    flags: Flags,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Subcommand)]
pub enum Command {
    /// Entity, relation and split counts.
    Stats,
    /// Redundant, symmetric and Cartesian-product relations plus test-triple codes.
    Audit,
    /// Write a deduplicated copy of the dataset.
    Dedupe,
    /// Rank every test query with a baseline and write the ranks as JSONL.
    Predict,
    /// Compute raw and filtered metrics with breakdowns.
    Evaluate,
}

impl Command {
    fn name(self) -> &'static str {
        match self {
            Command::Stats => "stats",
            Command::Audit => "audit",
            Command::Dedupe => "dedupe",
            Command::Predict => "predict",
            Command::Evaluate => "evaluate",
        }
    }
}

#[derive(Debug, Default, Args)]
struct Flags {
    /// TOML file with default settings; flags override it.
    #[arg(long, global = true, value_name = "FILE")]
    config: Option<PathBuf>,
    /// Directory holding train.txt, valid.txt and test.txt.
    #[arg(long, global = true, value_name = "DIR")]
    data: Option<PathBuf>,
    #[arg(long, global = true, value_name = "DIR")]
    out: Option<PathBuf>,
    #[arg(long, global = true, value_name = "F")]
    theta1: Option<f64>,
    #[arg(long, global = true, value_name = "F")]
    theta2: Option<f64>,
    #[arg(long, global = true, value_name = "F")]
    cartesian_threshold: Option<f64>,
    #[arg(long, global = true, value_name = "F")]
    category_cutoff: Option<f64>,
    #[arg(long, global = true, value_enum)]
    audit_scope: Option<AuditScope>,
    #[arg(long, global = true, value_enum)]
    reverse_duplicate_policy: Option<PolicyArg>,
    #[arg(long, global = true, value_enum)]
    predictor: Option<PredictorKind>,
    /// Horn rule file (TSV or AMIE output) for `--predictor rule`.
    #[arg(long, global = true, value_name = "FILE")]
    rules: Option<PathBuf>,
    /// Externally computed ranks to evaluate instead of a predictor.
    #[arg(long, global = true, value_name = "FILE")]
    rankings: Option<PathBuf>,
    #[arg(long, global = true, value_name = "K[,K...]", value_delimiter = ',')]
    hits: Option<Vec<u32>>,
    #[arg(long, global = true, value_enum)]
    filter_scope: Option<FilterScopeArg>,
    #[arg(long, global = true, value_enum)]
    drop_rule: Option<DropRuleArg>,
    /// Relation to drop during dedupe; repeatable.
    #[arg(long = "drop", global = true, value_name = "RELATION")]
    drop: Vec<String>,
}

impl Flags {
    fn apply(self, mut cfg: RunConfig) -> RunConfig {
        macro_rules! set {
            ($($field:ident => $target:expr),* $(,)?) => {
                $(if let Some(v) = self.$field { $target = v.into(); })*
            };
        }
        set!(
            theta1 => cfg.audit.theta1,
            theta2 => cfg.audit.theta2,
            cartesian_threshold => cfg.audit.cartesian_threshold,
            category_cutoff => cfg.audit.category_cutoff,
            audit_scope => cfg.audit_scope,
            hits => cfg.hits,
        );
        if self.data.is_some() {
            cfg.data = self.data;
        }
        if self.out.is_some() {
            cfg.out = self.out;
        }
        if self.predictor.is_some() {
            cfg.predictor = self.predictor;
        }
        if self.rules.is_some() {
            cfg.rules = self.rules;
        }
        if self.rankings.is_some() {
            cfg.rankings = self.rankings;
        }
        if let Some(p) = self.reverse_duplicate_policy {
            cfg.reverse_duplicate_policy = match p {
                PolicyArg::ReverseOnly => ReverseDuplicatePolicy::ReverseOnly,
                PolicyArg::Both => ReverseDuplicatePolicy::Both,
            };
        }
        if let Some(s) = self.filter_scope {
            cfg.filter_scope = match s {
                FilterScopeArg::All => FilterScope::All,
                FilterScopeArg::TrainTest => FilterScope::TrainTest,
            };
        }
        if let Some(d) = self.drop_rule {
            cfg.dedup.drop_rule = match d {
                DropRuleArg::FewerTriples => DropRule::FewerTriples,
                DropRuleArg::LexicographicallyLater => DropRule::LexicographicallyLater,
            };
        }
        if !self.drop.is_empty() {
            cfg.dedup.drop_rule = DropRule::Explicit(self.drop);
        }
        cfg
    }
}

impl Cli {
    /// Merges defaults, the config file and flags.
    pub fn resolve(self) -> Result<(Command, RunConfig)> {
        let mut flags = self.flags;
        let base = match flags.config.take() {
            Some(path) => {
                let text = fs::read_to_string(&path).with_context(|| format!("reading {}", path.display()))?;
                RunConfig::from_toml(&text).with_context(|| format!("parsing {}", path.display()))?
            }
            None => RunConfig::default(),
        };
        Ok((self.command, flags.apply(base)))
    }
}

/// Embedded in or written next to every artifact.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub tool: String,
    pub version: String,
    pub command: String,
    pub dataset_hash: String,
    pub config: RunConfig,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub artifacts: Vec<String>,
}

impl Provenance {
    fn new(command: Command, ds: &Dataset, config: &RunConfig) -> Self {
        Provenance {
            tool: env!("CARGO_PKG_NAME").to_owned(),
            version: env!("CARGO_PKG_VERSION").to_owned(),
            command: command.name().to_owned(),
            dataset_hash: ds.content_hash(),
            config: config.clone(),
            artifacts: Vec::new(),
        }
    }
}

#[derive(Serialize)]
struct Document<'a, T: Serialize> {
    provenance: &'a Provenance,
    #[serde(flatten)]
    body: T,
}

fn write_json<T: Serialize>(path: &Path, provenance: &Provenance, body: T) -> Result<()> {
    let doc = Document { provenance, body };
    let mut text = serde_json::to_string_pretty(&doc)?;
    text.push('\n');
    fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

fn write_sidecar(dir: &Path, provenance: &Provenance, artifacts: &[&str]) -> Result<()> {
    let mut p = provenance.clone();
    p.artifacts = artifacts.iter().map(|s| s.to_string()).collect();
    let mut text = serde_json::to_string_pretty(&p)?;
    text.push('\n');
    let path = dir.join("provenance.json");
    fs::write(&path, text).with_context(|| format!("writing {}", path.display()))
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    Ok(BufWriter::new(
        File::create(path).with_context(|| format!("creating {}", path.display()))?,
    ))
}

/// Caps the global worker pool from `KG_AUDIT_THREADS`, if set.
pub fn configure_threads() -> Result<()> {
    let Ok(value) = std::env::var(THREADS_ENV) else {
        return Ok(());
    };
    let n: usize = value
        .trim()
        .parse()
        .ok()
        .filter(|n| *n > 0)
        .with_context(|| format!("{THREADS_ENV} must be a positive integer, got {value:?}"))?;
    // a second initialisation (e.g. in tests) keeps the first pool
    if rayon::ThreadPoolBuilder::new().num_threads(n).build_global().is_err() {
        log::debug!("global thread pool already initialised");
    }
    Ok(())
}

/// Runs one command and prints a human-readable summary to `stdout`.
pub fn run(command: Command, config: &RunConfig, stdout: &mut dyn Write) -> Result<()> {
    config.audit.validate()?;
    if config.hits.is_empty() || config.hits.contains(&0) {
        bail!("--hits needs one or more positive cutoffs");
    }
    let scope = match command {
        Command::Audit | Command::Dedupe => config.audit_scope.splits(),
        _ => SplitSet::TRAIN,
    };
    let data = config.data_dir()?;
    let ds = load_dataset(data, scope).with_context(|| format!("loading {}", data.display()))?;
    let provenance = Provenance::new(command, &ds, config);
    match command {
        Command::Stats => stats(&ds, config, &provenance, stdout),
        Command::Audit => audit(&ds, config, &provenance, stdout),
        Command::Dedupe => dedupe(&ds, config, &provenance, stdout),
        Command::Predict => predict(&ds, config, &provenance, stdout),
        Command::Evaluate => evaluate(&ds, config, &provenance, stdout),
    }
}

fn stats(ds: &Dataset, config: &RunConfig, provenance: &Provenance, stdout: &mut dyn Write) -> Result<()> {
    let s = ds.stats();
    writeln!(stdout, "entities\trelations\ttrain\tvalid\ttest")?;
    writeln!(
        stdout,
        "{}\t{}\t{}\t{}\t{}",
        s.entities, s.relations, s.train, s.valid, s.test
    )?;
    if let Some(out) = &config.out {
        fs::create_dir_all(out)?;
        write_json(&out.join("stats.json"), provenance, &s)?;
    }
    Ok(())
}

#[derive(Serialize)]
struct AuditDocument {
    findings: Vec<crate::audit::FindingRecord>,
    cartesian_triples: usize,
    categories: BTreeMap<String, crate::audit::RelationCategory>,
    histogram: BTreeMap<String, usize>,
    leakage: crate::audit::LeakageStats,
}

fn audit(ds: &Dataset, config: &RunConfig, provenance: &Provenance, stdout: &mut dyn Write) -> Result<()> {
    let report = run_audit(ds, &config.audit, config.reverse_duplicate_policy)?;
    let findings = report.all_findings();
    let doc = AuditDocument {
        findings: findings.iter().map(|f| f.to_record(ds)).collect(),
        cartesian_triples: report.cartesian_triples(ds),
        categories: report
            .categories
            .iter()
            .map(|(r, c)| (ds.relation_name(*r).to_owned(), *c))
            .collect(),
        histogram: report.histogram.iter().map(|(c, n)| (c.to_string(), *n)).collect(),
        leakage: report.leakage.clone(),
    };

    writeln!(
        stdout,
        "duplicate pairs: {}  reversed pairs/symmetric: {}  cartesian relations: {} ({} triples)",
        report.duplicates.len(),
        report.reversed.len(),
        report.cartesian.len(),
        doc.cartesian_triples
    )?;
    let l = &report.leakage;
    writeln!(
        stdout,
        "train triples in reverse pairs: {} / {}",
        l.train_in_reverse_pairs, l.train_triples
    )?;
    writeln!(
        stdout,
        "test triples with reverse in train: {} / {}",
        l.test_with_reverse_in_train, l.test_triples
    )?;
    writeln!(
        stdout,
        "test triples with duplicate in train: {} / {}",
        l.test_with_duplicate_in_train, l.test_triples
    )?;
    for (code, n) in crate::audit::ranked_codes(&report.histogram) {
        writeln!(stdout, "code {code}: {n}")?;
    }

    if let Some(out) = &config.out {
        fs::create_dir_all(out)?;
        write_json(&out.join("audit.json"), provenance, &doc)?;

        let mut w = csv::Writer::from_writer(create(&out.join("findings.csv"))?);
        w.write_record(["kind", "relation1", "relation2", "ratio1", "ratio2"])?;
        for f in &doc.findings {
            w.write_record([
                f.kind.to_string(),
                f.relations[0].clone(),
                f.relations.get(1).cloned().unwrap_or_default(),
                f.ratio1.to_string(),
                f.ratio2.map(|r| r.to_string()).unwrap_or_default(),
            ])?;
        }
        w.flush()?;

        let mut w = csv::Writer::from_writer(create(&out.join("histogram.csv"))?);
        w.write_record(["code", "count"])?;
        for (code, n) in &doc.histogram {
            w.write_record([code.clone(), n.to_string()])?;
        }
        w.flush()?;
        write_sidecar(out, provenance, &["findings.csv", "histogram.csv"])?;
    }
    Ok(())
}

fn dedupe(ds: &Dataset, config: &RunConfig, provenance: &Provenance, stdout: &mut dyn Write) -> Result<()> {
    let out = config.out_dir()?;
    let report = run_audit(ds, &config.audit, config.reverse_duplicate_policy)?;
    let (derived, manifest) = derive_deduplicated(ds, &report.pair_findings(), &config.dedup)?;
    write_dataset(&derived, out)?;
    write_json(&out.join("manifest.json"), provenance, &manifest)?;
    write_sidecar(out, provenance, &["train.txt", "valid.txt", "test.txt"])?;
    let dropped: Vec<&str> = manifest.plan.dropped.iter().map(String::as_str).collect();
    writeln!(stdout, "dropped relations: {}", dropped.join(", "))?;
    let s = &manifest.after;
    writeln!(stdout, "entities\trelations\ttrain\tvalid\ttest")?;
    writeln!(
        stdout,
        "{}\t{}\t{}\t{}\t{}",
        s.entities, s.relations, s.train, s.valid, s.test
    )?;
    Ok(())
}

/// Builds the predictor selected by `config` and hands it to `f`.
fn with_predictor<T>(ds: &Dataset, config: &RunConfig, f: impl FnOnce(&dyn Predictor) -> Result<T>) -> Result<T> {
    match config.predictor.unwrap_or(PredictorKind::Rule) {
        PredictorKind::Rule => match &config.rules {
            Some(path) => {
                let parsed = parse_rules(path, ds)?;
                if parsed.skipped > 0 {
                    log::warn!("{} rules mention names absent from the dataset", parsed.skipped);
                }
                f(&RuleEngine::new(ds, parsed.rules)?)
            }
            None => {
                let rules = build_intersection_rules(ds, &config.audit);
                f(&RulePredictor::new(ds, &rules))
            }
        },
        PredictorKind::Cartesian => {
            let report = run_audit(ds, &config.audit, config.reverse_duplicate_policy)?;
            f(&CartesianPredictor::new(ds, &report.cartesian))
        }
        PredictorKind::Frequency => f(&FrequencyPredictor::new(ds)),
    }
}

fn predict(ds: &Dataset, config: &RunConfig, provenance: &Provenance, stdout: &mut dyn Write) -> Result<()> {
    if config.rankings.is_some() {
        bail!("predict produces rankings; --rankings only applies to evaluate");
    }
    let out = config.out_dir()?;
    fs::create_dir_all(out)?;
    let evaluator = Evaluator::new(ds, config.filter_scope, &config.hits)?;
    let evaluation = with_predictor(ds, config, |p| Ok(evaluator.evaluate(p)?))?;
    write_rankings(out.join("rankings.jsonl"), ds, &evaluation.results)?;
    write_sidecar(out, provenance, &["rankings.jsonl"])?;
    writeln!(stdout, "ranked {} queries", evaluation.results.len())?;
    Ok(())
}

fn evaluate(ds: &Dataset, config: &RunConfig, provenance: &Provenance, stdout: &mut dyn Write) -> Result<()> {
    let evaluator = Evaluator::new(ds, config.filter_scope, &config.hits)?;
    let evaluation: Evaluation = match (&config.rankings, config.predictor) {
        (Some(_), Some(_)) => bail!("give either --predictor or --rankings, not both"),
        (Some(path), None) => evaluator.ingest(path)?,
        (None, _) => with_predictor(ds, config, |p| Ok(evaluator.evaluate(p)?))?,
    };
    let audit: AuditReport = run_audit(ds, &config.audit, config.reverse_duplicate_policy)?;
    let redundancy = RedundancyIndex::new(ds, &audit.pair_findings(), config.reverse_duplicate_policy)?;
    let keys = GroupKeys {
        ds,
        categories: &audit.categories,
        redundancy: &redundancy,
    };
    let report: MetricsReport = full_report(&evaluation, &keys, &Grouping::ALL, &config.hits);
    print_metrics(stdout, &report)?;

    if let Some(out) = &config.out {
        fs::create_dir_all(out)?;
        write_json(&out.join("report.json"), provenance, &report)?;
        let mut names = Vec::new();
        for (grouping, groups) in &report.groups {
            let name = format!("breakdown_{}.csv", grouping_name(*grouping));
            write_breakdown_csv(create(&out.join(&name))?, *grouping, groups)?;
            names.push(name);
        }
        let refs: Vec<&str> = names.iter().map(String::as_str).collect();
        write_sidecar(out, provenance, &refs)?;
    }
    Ok(())
}

fn grouping_name(g: Grouping) -> &'static str {
    match g {
        Grouping::Relation => "relation",
        Grouping::Category => "category",
        Grouping::RedundancyCode => "code",
        Grouping::Direction => "direction",
    }
}

fn print_metrics(stdout: &mut dyn Write, report: &MetricsReport) -> Result<()> {
    let m = &report.overall;
    writeln!(stdout, "queries: {}", m.count)?;
    writeln!(
        stdout,
        "MR {:.1}  FMR {:.1}  MRR {:.3}  FMRR {:.3}",
        m.mr, m.fmr, m.mrr, m.fmrr
    )?;
    for (k, h) in &m.hits {
        writeln!(stdout, "Hits@{k} {h:.1}  FHits@{k} {:.1}", m.fhits[k])?;
    }
    Ok(())
}

/// Entry point used by the binary; returns the process exit code.
pub fn main() -> std::process::ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let result = configure_threads()
        .and_then(|_| cli.resolve())
        .and_then(|(command, config)| run(command, &config, &mut std::io::stdout().lock()));
    match result {
        Ok(()) => std::process::ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            std::process::ExitCode::FAILURE
        }
    }
}
