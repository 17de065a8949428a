//! Self-training pipeline: propose novel meaning representations, decode
//! candidate utterances with noise injection, parse each candidate back to
//! an MR, and keep the pairs whose parses are valid. The surviving pairs
//! form an augmentation set that joins the original corpus for retraining.

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::fmt::Write as _;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::corpus::delex::placeholder_name;
use crate::corpus::linearize::linearize;
use crate::corpus::mr::MeaningRepresentation;
use crate::corpus::schema::{AttributeDef, AttributeKind, DomainSchema, DONT_CARE};
use crate::corpus::types::{Dataset, Example, Utterance};
use crate::corpus::vocab::build_vocab;
use crate::error::{Error, Result};
use crate::mrparse::{clf_parse, rule_parse, ClassifierSet, ParseOutcome, RulePack};
use crate::nn::rng::RngStream;
use crate::seq2seq::{
    sample_batch_topk, train, ModelConfig, SampleBatchConfig, Seq2SeqModel, TrainConfig, TrainLog,
};

/// Stream ids at or above this base are reserved for MR proposal draws;
/// ids below it index the noise draws of individual decode samples.
const MR_STREAM_BASE: u64 = 1 << 48;

/// Per-attribute value counts over a training corpus. Every schema value is
/// present, including the don't-care value where the attribute admits it, so
/// unseen values stay proposable (their sampling weight uses a count floor
/// of 1).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AttributeFrequencyTable {
    counts: BTreeMap<String, BTreeMap<String, u64>>,
}

impl AttributeFrequencyTable {
    pub fn from_dataset(ds: &Dataset) -> AttributeFrequencyTable {
        let mut counts: BTreeMap<String, BTreeMap<String, u64>> = BTreeMap::new();
        for attr in &ds.schema.attributes {
            let mut values: BTreeMap<String, u64> = BTreeMap::new();
            for v in &attr.values {
                values.insert(v.clone(), 0);
            }
            if attr.kind == AttributeKind::DontCare {
                values.insert(DONT_CARE.to_string(), 0);
            }
            counts.insert(attr.name.clone(), values);
        }
        for ex in &ds.examples {
            for (attr, value) in &ex.mr.slots {
                let Some(def) = ds.schema.attribute(attr) else { continue };
                if def.delexicalizable && def.is_placeholder_value(value) {
                    continue;
                }
                if let Some(c) = counts.get_mut(&def.name).and_then(|m| m.get_mut(value)) {
                    *c += 1;
                }
            }
        }
        AttributeFrequencyTable { counts }
    }

    /// Raw count for a value; zero counts are kept raw here and floored only
    /// when converted to sampling weights.
    pub fn count(&self, attr: &str, value: &str) -> Option<u64> {
        self.counts.get(attr).and_then(|m| m.get(value)).copied()
    }

    /// Value-to-count map for one attribute.
    pub fn values(&self, attr: &str) -> Option<&BTreeMap<String, u64>> {
        self.counts.get(attr)
    }

    /// Draw a value for `def` with probability proportional to 1/count,
    /// counts floored at 1.
    pub fn sample_value(&self, def: &AttributeDef, rng: &mut RngStream) -> Result<String> {
        let values = self
            .counts
            .get(&def.name)
            .ok_or_else(|| Error::Config(format!("attribute `{}` missing from frequency table", def.name)))?;
        if values.is_empty() {
            return Err(Error::Config(format!("attribute `{}` has no values to sample", def.name)));
        }
        let pool: Vec<&String> = values.keys().collect();
        let weights: Vec<f64> = values.values().map(|&c| 1.0 / c.max(1) as f64).collect();
        Ok(pool[rng.weighted_index(&weights)].clone())
    }
}

/// The (act, slot count) combinations observed in a training corpus. A
/// combination is proposable only if some training MR exhibits it.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ActSizeTable {
    observed: BTreeSet<(String, usize)>,
}

impl ActSizeTable {
    pub fn from_dataset(ds: &Dataset) -> ActSizeTable {
        let mut observed = BTreeSet::new();
        for ex in &ds.examples {
            observed.insert((ex.mr.act.clone(), ex.mr.slots.len()));
        }
        ActSizeTable { observed }
    }

    pub fn is_legal(&self, act: &str, size: usize) -> bool {
        self.observed.contains(&(act.to_string(), size))
    }

    /// Observed combinations in sorted order.
    pub fn pairs(&self) -> impl Iterator<Item = (&str, usize)> {
        self.observed.iter().map(|(a, s)| (a.as_str(), *s))
    }

    pub fn len(&self) -> usize {
        self.observed.len()
    }

    pub fn is_empty(&self) -> bool {
        self.observed.is_empty()
    }
}

/// Propose an `inform` MR of the given size: every domain-required attribute
/// plus a uniform subset of the rest, values drawn inversely proportional to
/// their training frequency so rare combinations are favored.
pub fn sample_e2e_mr(
    schema: &DomainSchema,
    size: usize,
    freq: &AttributeFrequencyTable,
    rng: &mut RngStream,
) -> Result<MeaningRepresentation> {
    let n = schema.attributes.len();
    if size < 2 || size > n {
        return Err(Error::Config(format!("MR size {size} outside the valid range 2..={n}")));
    }
    let required: Vec<usize> = (0..n)
        .filter(|&i| schema.is_required(&schema.attributes[i].name))
        .collect();
    if size < required.len() {
        return Err(Error::Config(format!(
            "MR size {size} cannot hold the {} required attributes",
            required.len()
        )));
    }
    let mut optional: Vec<usize> = (0..n).filter(|i| !required.contains(i)).collect();
    rng.shuffle(&mut optional);
    let mut chosen = required;
    chosen.extend(optional.into_iter().take(size - chosen.len()));
    chosen.sort_unstable();

    let mut slots = Vec::with_capacity(size);
    for i in chosen {
        let def = &schema.attributes[i];
        slots.push((def.name.clone(), freq.sample_value(def, rng)?));
    }
    let mut mr = MeaningRepresentation::new("inform", slots);
    mr.validate_and_canonicalize(schema, None)?;
    Ok(mr)
}

/// Propose an MR for a dialogue act with exactly `size` slots. The (act,
/// size) combination must be observed in training data. Required attributes
/// are always included; the rest are drawn uniformly without replacement.
/// Values are uniform over the attribute's vocabulary; delexicalizable slots
/// carry placeholders instead of values. Acts that allow repeats fill their
/// slots in per-item pairs (required attributes and paired extras appear
/// once per compared item, with distinct values where the vocabulary
/// permits).
pub fn sample_da_mr(
    schema: &DomainSchema,
    observed: &ActSizeTable,
    act: &str,
    size: usize,
    rng: &mut RngStream,
) -> Result<MeaningRepresentation> {
    if !observed.is_legal(act, size) {
        return Err(Error::Config(format!(
            "no training MR has act `{act}` with {size} slots"
        )));
    }
    let act_def = schema
        .act(act)
        .ok_or_else(|| Error::Config(format!("unknown act `{act}`")))?;
    let required: Vec<usize> = schema
        .required_for_act(act)
        .iter()
        .filter_map(|name| schema.attribute_index(name))
        .collect();
    let mut pool: Vec<usize> = (0..schema.attributes.len())
        .filter(|i| !required.contains(i))
        .collect();

    // (attribute index, occurrences) for every attribute in the proposal.
    let mut occupancy: Vec<(usize, usize)> = Vec::new();
    if act_def.allows_repeats {
        let base = 2 * required.len();
        if size < base {
            return Err(Error::Config(format!(
                "size {size} cannot hold two occurrences of each of the {} required attributes",
                required.len()
            )));
        }
        let extra = size - base;
        let full_pairs = extra / 2;
        let leftover = extra % 2;
        if full_pairs + leftover > pool.len() {
            return Err(Error::Config(format!(
                "size {size} needs more attributes than act `{act}` has available"
            )));
        }
        rng.shuffle(&mut pool);
        for i in &required {
            occupancy.push((*i, 2));
        }
        for (rank, idx) in pool.iter().take(full_pairs + leftover).enumerate() {
            let occ = if rank < full_pairs { 2 } else { 1 };
            occupancy.push((*idx, occ));
        }
    } else {
        if size < required.len() || size > schema.attributes.len() {
            return Err(Error::Config(format!(
                "size {size} is impossible for act `{act}` without repeats"
            )));
        }
        rng.shuffle(&mut pool);
        for i in &required {
            occupancy.push((*i, 1));
        }
        for idx in pool.iter().take(size - required.len()) {
            occupancy.push((*idx, 1));
        }
    }
    occupancy.sort_unstable();

    let mut slots = Vec::with_capacity(size);
    for (idx, occ) in occupancy {
        let def = &schema.attributes[idx];
        if def.delexicalizable && def.kind != AttributeKind::Binary {
            let base = def.placeholder();
            for o in 0..occ {
                slots.push((def.name.clone(), placeholder_name(&base, o, occ)));
            }
        } else {
            let mut values: Vec<String> = def.values.clone();
            if def.kind == AttributeKind::DontCare {
                values.push(DONT_CARE.to_string());
            }
            if values.is_empty() {
                return Err(Error::Config(format!("attribute `{}` has no values to sample", def.name)));
            }
            rng.shuffle(&mut values);
            for o in 0..occ {
                slots.push((def.name.clone(), values[o % values.len()].clone()));
            }
        }
    }
    let mut mr = MeaningRepresentation::new(act, slots);
    mr.validate_and_canonicalize(schema, None)?;
    Ok(mr)
}

/// Which parser checks candidate utterances.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ParserChoice {
    Rules,
    Classifier,
}

/// A loaded parser, dispatched by [`ParserChoice`].
pub enum MrParser<'a> {
    Rules(&'a RulePack),
    Classifier { set: &'a ClassifierSet, threshold: f64 },
}

impl MrParser<'_> {
    pub fn choice(&self) -> ParserChoice {
        match self {
            MrParser::Rules(_) => ParserChoice::Rules,
            MrParser::Classifier { .. } => ParserChoice::Classifier,
        }
    }

    pub fn parse(&self, utt: &Utterance, schema: &DomainSchema) -> ParseOutcome {
        match self {
            MrParser::Rules(pack) => rule_parse(utt, pack, schema),
            MrParser::Classifier { set, threshold } => clf_parse(utt, set, schema, *threshold),
        }
    }
}

/// How candidate MRs are proposed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MrProposal {
    /// Fixed `inform` act, sizes from config, inverse-frequency values.
    InverseFrequency,
    /// One bucket per observed (act, size) combination, uniform values.
    DialogueActs,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SelfTrainConfig {
    /// Proposal iterations per size bucket.
    pub iterations_per_size: usize,
    /// Noise-injection samples drawn per proposed MR.
    pub samples_per_mr: usize,
    /// Top-k samples retained per proposed MR, ranked by avg log-likelihood.
    pub keep_k: usize,
    pub sigma0: f64,
    /// MR sizes to propose. Used by the inverse-frequency proposal; for
    /// dialogue-act proposals a nonempty list restricts the observed (act,
    /// size) buckets to these sizes.
    pub sizes: Vec<usize>,
    pub proposal: MrProposal,
    pub parser: ParserChoice,
    /// Minimum winning class probability for classifier parses.
    pub classifier_threshold: f64,
    pub seed: u64,
    /// Drop candidates whose surface already appeared earlier in this run.
    pub dedup_within_run: bool,
    /// Drop candidates whose surface equals a training reference.
    pub dedup_against_training: bool,
    /// Score samples under the clean model instead of the perturbed one.
    pub rescore_clean: bool,
}

impl Default for SelfTrainConfig {
    fn default() -> SelfTrainConfig {
        SelfTrainConfig {
            iterations_per_size: 25_000,
            samples_per_mr: 200,
            keep_k: 20,
            sigma0: 1.0,
            sizes: (3..=8).collect(),
            proposal: MrProposal::InverseFrequency,
            parser: ParserChoice::Rules,
            classifier_threshold: 0.5,
            seed: 0,
            dedup_within_run: true,
            dedup_against_training: true,
            rescore_clean: false,
        }
    }
}

impl SelfTrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.keep_k == 0 || self.samples_per_mr < self.keep_k {
            return Err(Error::Config(format!(
                "need samples_per_mr >= keep_k >= 1, got {} and {}",
                self.samples_per_mr, self.keep_k
            )));
        }
        if !(self.sigma0 >= 0.0) {
            return Err(Error::Config(format!("sigma0 must be nonnegative, got {}", self.sigma0)));
        }
        if !(0.0..=1.0).contains(&self.classifier_threshold) {
            return Err(Error::Config(format!(
                "classifier threshold {} outside [0, 1]",
                self.classifier_threshold
            )));
        }
        Ok(())
    }
}

/// Where an augmented pair came from: the run seed, the global iteration
/// index its rng streams derive from, the noise scale, the proposed MR, and
/// the sample's average token log-likelihood.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub seed: u64,
    pub iteration: u64,
    pub sigma0: f64,
    pub source_mr: String,
    pub avg_ll: f64,
}

/// One kept pair: the parsed-back MR (not the proposal) and the sampled
/// utterance. Re-parsing `utt` with the parser used at creation time yields
/// `mr` again.
#[derive(Debug, Clone, PartialEq)]
pub struct AugmentedExample {
    pub mr: MeaningRepresentation,
    pub utt: Utterance,
    pub provenance: Provenance,
}

/// Candidate accounting for one proposal bucket.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct BucketCounts {
    pub label: String,
    pub iterations: usize,
    /// Samples drawn: samples_per_mr x iterations.
    pub drawn: usize,
    /// Samples surviving top-k ranking: keep_k x iterations.
    pub retained: usize,
    /// Retained samples dropped as duplicates (within a batch, across the
    /// run, or against training references).
    pub deduped: usize,
    /// Retained samples whose parse was invalid.
    pub parse_rejected: usize,
    /// Pairs added to the augmentation set.
    pub kept: usize,
}

#[derive(Debug, Clone, Serialize)]
pub struct AugmentationReport {
    pub seed: u64,
    pub sigma0: f64,
    pub parser: ParserChoice,
    pub buckets: Vec<BucketCounts>,
    pub kept_total: usize,
}

impl AugmentationReport {
    /// Plain-text table, one row per bucket plus a total row.
    pub fn render(&self) -> String {
        let width = self
            .buckets
            .iter()
            .map(|b| b.label.len())
            .chain(["bucket".len(), "TOTAL".len()])
            .max()
            .unwrap_or(6);
        let mut out = String::new();
        let _ = writeln!(
            out,
            "{:width$}  {:>10} {:>10} {:>10} {:>10} {:>10}",
            "bucket", "drawn", "retained", "deduped", "rejected", "kept"
        );
        let mut total = BucketCounts::default();
        for b in &self.buckets {
            let _ = writeln!(
                out,
                "{:width$}  {:>10} {:>10} {:>10} {:>10} {:>10}",
                b.label, b.drawn, b.retained, b.deduped, b.parse_rejected, b.kept
            );
            total.drawn += b.drawn;
            total.retained += b.retained;
            total.deduped += b.deduped;
            total.parse_rejected += b.parse_rejected;
            total.kept += b.kept;
        }
        let _ = writeln!(
            out,
            "{:width$}  {:>10} {:>10} {:>10} {:>10} {:>10}",
            "TOTAL", total.drawn, total.retained, total.deduped, total.parse_rejected, total.kept
        );
        out
    }
}

enum Bucket {
    Size(usize),
    ActSize(String, usize),
}

impl Bucket {
    fn label(&self) -> String {
        match self {
            Bucket::Size(s) => format!("size {s}"),
            Bucket::ActSize(act, s) => format!("{act}/{s}"),
        }
    }
}

struct IterationOutput {
    mr: MeaningRepresentation,
    samples: Vec<crate::seq2seq::DecodedSample>,
    in_batch_deduped: usize,
}

/// Run the sample-parse-filter loop: for every bucket and iteration, propose
/// an MR, draw `samples_per_mr` noise-injection samples, keep the top
/// `keep_k` by average log-likelihood, drop duplicates, parse the rest, and
/// keep the pairs whose parses are valid. Rejections are counted, never
/// raised. The result is bit-reproducible from the config: iteration `g`
/// draws its proposal from rng stream `MR_STREAM_BASE + g` and its samples
/// from streams `g * samples_per_mr ..`, so worker scheduling cannot change
/// the output, and examples are emitted in iteration order.
pub fn build_augmentation(
    model: &Seq2SeqModel,
    train_ds: &Dataset,
    parser: &MrParser,
    cfg: &SelfTrainConfig,
) -> Result<(Vec<AugmentedExample>, AugmentationReport)> {
    cfg.validate()?;
    if parser.choice() != cfg.parser {
        return Err(Error::Config(format!(
            "config expects the {:?} parser but a {:?} parser was supplied",
            cfg.parser,
            parser.choice()
        )));
    }
    let schema = &train_ds.schema;

    let mut buckets: Vec<Bucket> = Vec::new();
    let mut freq = None;
    let mut act_sizes = None;
    match cfg.proposal {
        MrProposal::InverseFrequency => {
            let n = schema.attributes.len();
            for &s in &cfg.sizes {
                if s < 2 || s > n {
                    return Err(Error::Config(format!("MR size {s} outside the valid range 2..={n}")));
                }
                buckets.push(Bucket::Size(s));
            }
            freq = Some(AttributeFrequencyTable::from_dataset(train_ds));
        }
        MrProposal::DialogueActs => {
            let table = ActSizeTable::from_dataset(train_ds);
            for (act, size) in table.pairs() {
                if cfg.sizes.is_empty() || cfg.sizes.contains(&size) {
                    buckets.push(Bucket::ActSize(act.to_string(), size));
                }
            }
            act_sizes = Some(table);
        }
    }

    let iters = cfg.iterations_per_size;
    let total = buckets.len() * iters;
    let outputs: Vec<IterationOutput> = (0..total)
        .into_par_iter()
        .map(|g| {
            let bucket = &buckets[g / iters];
            let mut mr_rng = RngStream::new(cfg.seed, MR_STREAM_BASE + g as u64);
            let mr = match bucket {
                Bucket::Size(s) => {
                    sample_e2e_mr(schema, *s, freq.as_ref().expect("frequency table"), &mut mr_rng)?
                }
                Bucket::ActSize(act, s) => {
                    sample_da_mr(schema, act_sizes.as_ref().expect("act-size table"), act, *s, &mut mr_rng)?
                }
            };
            let input = linearize(&mr, schema, model.config.mode);
            let batch_cfg = SampleBatchConfig {
                n: cfg.samples_per_mr,
                k: cfg.keep_k,
                sigma0: cfg.sigma0,
                seed: cfg.seed,
                stream_base: (g * cfg.samples_per_mr) as u64,
                rescore_clean: cfg.rescore_clean,
            };
            let mut batch_seen = HashSet::new();
            let samples = sample_batch_topk(model, &input, &batch_cfg, &mut batch_seen)?;
            let in_batch_deduped = cfg.keep_k - samples.len();
            Ok(IterationOutput { mr, samples, in_batch_deduped })
        })
        .collect::<Result<Vec<_>>>()?;

    let train_refs: HashSet<Vec<String>> = if cfg.dedup_against_training {
        train_ds
            .examples
            .iter()
            .flat_map(|ex| ex.refs.iter().map(|r| r.tokens.clone()))
            .collect()
    } else {
        HashSet::new()
    };

    let mut counts: Vec<BucketCounts> = buckets
        .iter()
        .map(|b| BucketCounts { label: b.label(), iterations: iters, ..BucketCounts::default() })
        .collect();
    let mut seen_run: HashSet<Vec<String>> = HashSet::new();
    let mut kept: Vec<AugmentedExample> = Vec::new();
    for (g, out) in outputs.into_iter().enumerate() {
        let c = &mut counts[g / iters];
        c.drawn += cfg.samples_per_mr;
        c.retained += cfg.keep_k;
        c.deduped += out.in_batch_deduped;
        for sample in out.samples {
            if cfg.dedup_against_training && train_refs.contains(&sample.tokens) {
                c.deduped += 1;
                continue;
            }
            if cfg.dedup_within_run && !seen_run.insert(sample.tokens.clone()) {
                c.deduped += 1;
                continue;
            }
            let utt = Utterance::from_tokens(sample.tokens);
            let outcome = parser.parse(&utt, schema);
            match outcome.mr {
                Some(mr) if outcome.valid => {
                    c.kept += 1;
                    kept.push(AugmentedExample {
                        mr,
                        utt,
                        provenance: Provenance {
                            seed: cfg.seed,
                            iteration: g as u64,
                            sigma0: cfg.sigma0,
                            source_mr: out.mr.canonical_string(schema),
                            avg_ll: sample.avg_ll,
                        },
                    });
                }
                _ => c.parse_rejected += 1,
            }
        }
    }

    let report = AugmentationReport {
        seed: cfg.seed,
        sigma0: cfg.sigma0,
        parser: cfg.parser,
        kept_total: kept.len(),
        buckets: counts,
    };
    Ok((kept, report))
}

/// Wrap augmented pairs as a dataset of single-reference examples.
pub fn augmentation_to_dataset(aug: &[AugmentedExample], ds: &Dataset) -> Dataset {
    let mut out = Dataset::new(ds.schema.clone(), ds.split);
    for a in aug {
        out.examples.push(Example { mr: a.mr.clone(), refs: vec![a.utt.clone()] });
    }
    out
}

/// Write one JSON provenance record per augmented pair, aligned line-for-line
/// with the pairs' order in the persisted corpus.
pub fn save_provenance(aug: &[AugmentedExample], path: &Path) -> Result<()> {
    let mut out = String::new();
    for a in aug {
        let line = serde_json::to_string(&a.provenance).map_err(Error::Json)?;
        out.push_str(&line);
        out.push('\n');
    }
    std::fs::write(path, out).map_err(|e| Error::io(path, e))
}

/// Union of the base corpus and the augmentation set, with exact duplicates
/// of base (MR, reference) pairs removed. Each surviving augmented pair
/// becomes a single-reference example, so the union holds |base| + |aug|
/// examples when nothing collides.
pub fn merge_augmentation(base: &Dataset, aug: &[AugmentedExample]) -> Dataset {
    let mut base_pairs: HashSet<(String, Vec<String>)> = HashSet::new();
    for ex in &base.examples {
        let mr = ex.mr.canonical_string(&base.schema);
        for r in &ex.refs {
            base_pairs.insert((mr.clone(), r.tokens.clone()));
        }
    }
    let mut out = base.clone();
    for a in aug {
        let key = (a.mr.canonical_string(&base.schema), a.utt.tokens.clone());
        if base_pairs.insert(key) {
            out.examples.push(Example { mr: a.mr.clone(), refs: vec![a.utt.clone()] });
        }
    }
    out
}

/// Train a successor model from fresh initialization on the union of the
/// base corpus and the augmentation set, using the same architecture and
/// optimizer recipe as the base model's training run.
pub fn retrain(
    base: &Dataset,
    valid: &Dataset,
    aug: &[AugmentedExample],
    model_cfg: &ModelConfig,
    train_cfg: &TrainConfig,
    model_seed: u64,
) -> Result<(Seq2SeqModel, TrainLog)> {
    let merged = merge_augmentation(base, aug);
    let (input_vocab, output_vocab) = build_vocab(&merged, model_cfg.mode);
    let mut model = Seq2SeqModel::new(model_cfg.clone(), input_vocab, output_vocab, model_seed)?;
    let log = train(&mut model, &merged, valid, train_cfg)?;
    Ok((model, log))
}
