//! Per-attribute convolutional text classifiers: each attribute gets an
//! independent model predicting its value (or n/a) from the utterance, used
//! as an alternative parser to the rule engine.
//!
//! Architecture per attribute: learned embeddings, parallel n-gram
//! convolution banks max-pooled over time, one hidden projection, softmax
//! over the attribute's classes.

use std::collections::{BTreeSet, HashMap};
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::corpus::mr::MeaningRepresentation;
use crate::corpus::schema::{AttributeDef, AttributeKind, DomainSchema, DONT_CARE};
use crate::corpus::types::Utterance;
use crate::corpus::vocab::{Vocab, PAD};
use crate::error::{Error, Result};
use crate::mrparse::fscore::PrfCounts;
use crate::mrparse::rulepack::{AttributeEvidence, ParseOutcome};
use crate::nn::checkpoint::{load_params, save_params};
use crate::nn::graph::Graph;
use crate::nn::kernels;
use crate::nn::params::ParamStore;
use crate::nn::rng::RngStream;
use crate::nn::NodeId;

/// Class label for "attribute not asserted".
pub const NA_LABEL: &str = "n/a";

/// Network shape; training hyperparameters live in `ClassifierConfig`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ClassifierArch {
    pub embed_dim: usize,
    pub feature_maps: usize,
    pub windows: Vec<usize>,
    pub hidden_dim: usize,
}

impl Default for ClassifierArch {
    fn default() -> Self {
        ClassifierArch { embed_dim: 50, feature_maps: 50, windows: vec![1, 2, 3], hidden_dim: 50 }
    }
}

impl ClassifierArch {
    fn validate(&self) -> Result<()> {
        if self.embed_dim == 0 || self.feature_maps == 0 || self.hidden_dim == 0 {
            return Err(Error::Config("classifier dimensions must be positive".into()));
        }
        if self.windows.is_empty() || self.windows.iter().any(|&w| w == 0) {
            return Err(Error::Config("classifier windows must be positive".into()));
        }
        Ok(())
    }

    fn feature_dim(&self) -> usize {
        self.feature_maps * self.windows.len()
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ClassifierConfig {
    pub arch: ClassifierArch,
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub weight_decay: f64,
    pub dropout: f64,
    pub seed: u64,
}

impl Default for ClassifierConfig {
    fn default() -> Self {
        ClassifierConfig {
            arch: ClassifierArch::default(),
            epochs: 30,
            batch_size: 16,
            lr: 0.25,
            weight_decay: 1e-4,
            dropout: 0.25,
            seed: 0,
        }
    }
}

impl ClassifierConfig {
    pub fn validate(&self) -> Result<()> {
        self.arch.validate()?;
        if self.batch_size == 0 {
            return Err(Error::Config("batch_size must be positive".into()));
        }
        if !(self.lr > 0.0) || !self.lr.is_finite() {
            return Err(Error::Config(format!("lr {} must be positive", self.lr)));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(Error::Config(format!("dropout {} outside [0, 1)", self.dropout)));
        }
        if self.weight_decay < 0.0 {
            return Err(Error::Config("weight_decay must be nonnegative".into()));
        }
        Ok(())
    }
}

/// One attribute's classifier. `constant` marks a degenerate model that
/// always predicts one label (single observed training class).
pub struct AttributeClassifier {
    pub attribute: String,
    /// Value classes then `n/a` last.
    pub labels: Vec<String>,
    pub constant: Option<usize>,
    arch: ClassifierArch,
    params: ParamStore,
}

/// All attribute classifiers for one schema, sharing a token vocabulary.
pub struct ClassifierSet {
    pub vocab: Vocab,
    pub classifiers: Vec<AttributeClassifier>,
}

/// Per-attribute training outcome.
#[derive(Debug, Clone)]
pub struct AttributeTrainReport {
    pub attribute: String,
    /// 1-based epoch whose parameters were kept; None when untrained.
    pub best_epoch: Option<usize>,
    pub best_f1: f64,
    /// Items dropped because the attribute repeats with distinct values.
    pub skipped_train: usize,
    pub warning: Option<String>,
}

pub struct ClassifierTrainReport {
    pub per_attribute: Vec<AttributeTrainReport>,
}

/// Classes an attribute's classifier distinguishes: dictionary values, the
/// placeholder for delexicalized surfaces, don't-care where legal, n/a last.
fn label_set(def: &AttributeDef) -> Vec<String> {
    let mut labels = def.values.clone();
    if def.delexicalizable && def.kind != AttributeKind::Binary {
        labels.push(def.placeholder());
    }
    if def.kind == AttributeKind::DontCare {
        labels.push(DONT_CARE.to_string());
    }
    labels.push(NA_LABEL.to_string());
    labels
}

/// Label index for one MR, or None when the attribute repeats with distinct
/// values (no single-label reading exists).
fn label_of(mr: &MeaningRepresentation, attr: &str, labels: &[String]) -> Option<usize> {
    let values: BTreeSet<&str> = mr
        .slots
        .iter()
        .filter(|(a, _)| a == attr)
        .map(|(_, v)| v.as_str())
        .collect();
    match values.len() {
        0 => Some(labels.len() - 1),
        1 => {
            let v = values.iter().next().unwrap();
            labels.iter().position(|l| l.eq_ignore_ascii_case(v))
        }
        _ => None,
    }
}

fn param_shapes(arch: &ClassifierArch, vocab_len: usize, n_classes: usize) -> Vec<(String, Vec<usize>)> {
    let mut shapes = vec![("emb".to_string(), vec![vocab_len, arch.embed_dim])];
    for &w in &arch.windows {
        shapes.push((format!("conv{w}.w"), vec![arch.feature_maps, w * arch.embed_dim]));
        shapes.push((format!("conv{w}.b"), vec![arch.feature_maps]));
    }
    shapes.push(("fc1.w".to_string(), vec![arch.hidden_dim, arch.feature_dim()]));
    shapes.push(("fc1.b".to_string(), vec![arch.hidden_dim]));
    shapes.push(("out.w".to_string(), vec![n_classes, arch.hidden_dim]));
    shapes.push(("out.b".to_string(), vec![n_classes]));
    shapes
}

fn init_params(arch: &ClassifierArch, vocab_len: usize, n_classes: usize, rng: &mut RngStream) -> Result<ParamStore> {
    let mut params = ParamStore::new();
    for (name, shape) in param_shapes(arch, vocab_len, n_classes) {
        if name == "emb" {
            params.init_uniform(&name, &shape, rng)?;
        } else if shape.len() == 2 {
            params.init_glorot(&name, &shape, rng)?;
        } else {
            params.init_zeros(&name, &shape)?;
        }
    }
    Ok(params)
}

fn check_shapes(params: &ParamStore, arch: &ClassifierArch, vocab_len: usize, n_classes: usize) -> Result<()> {
    for (name, shape) in param_shapes(arch, vocab_len, n_classes) {
        let t = params.get(&name)?;
        if t.shape() != shape.as_slice() {
            return Err(Error::Invalid(format!(
                "classifier param `{name}` has shape {:?}, expected {:?}",
                t.shape(),
                shape
            )));
        }
    }
    Ok(())
}

struct BoundClassifier {
    emb: NodeId,
    convs: Vec<(usize, NodeId, NodeId)>,
    fc1_w: NodeId,
    fc1_b: NodeId,
    out_w: NodeId,
    out_b: NodeId,
}

fn bind(g: &mut Graph, params: &ParamStore, arch: &ClassifierArch) -> Result<BoundClassifier> {
    let mut convs = Vec::with_capacity(arch.windows.len());
    for &w in &arch.windows {
        convs.push((w, g.param(params, &format!("conv{w}.w"))?, g.param(params, &format!("conv{w}.b"))?));
    }
    Ok(BoundClassifier {
        emb: g.param(params, "emb")?,
        convs,
        fc1_w: g.param(params, "fc1.w")?,
        fc1_b: g.param(params, "fc1.b")?,
        out_w: g.param(params, "out.w")?,
        out_b: g.param(params, "out.b")?,
    })
}

/// Pad with the pad token up to the widest window so every bank has at
/// least one position.
fn padded_ids(vocab: &Vocab, tokens: &[String], arch: &ClassifierArch) -> Vec<u32> {
    let mut ids = vocab.encode_lossy(tokens);
    let max_w = arch.windows.iter().copied().max().unwrap_or(1);
    while ids.len() < max_w {
        ids.push(PAD);
    }
    ids
}

fn build_logits(
    g: &mut Graph,
    bound: &BoundClassifier,
    ids: &[u32],
    dropout: f64,
    training: bool,
    rng: &mut RngStream,
) -> Result<NodeId> {
    let mut emb_nodes = Vec::with_capacity(ids.len());
    for &id in ids {
        let row = g.row(bound.emb, id as usize)?;
        emb_nodes.push(g.dropout(row, dropout, training, rng)?);
    }
    let mut window_feats = Vec::with_capacity(bound.convs.len());
    for &(w, w_node, b_node) in &bound.convs {
        let mut positions = Vec::with_capacity(ids.len().saturating_sub(w) + 1);
        for t in 0..=ids.len() - w {
            let x = if w == 1 { emb_nodes[t] } else { g.concat(&emb_nodes[t..t + w])? };
            let a = g.matvec(w_node, x)?;
            let a = g.add(a, b_node)?;
            positions.push(g.relu(a)?);
        }
        let pooled = g.max_elem(&positions)?;
        window_feats.push(g.dropout(pooled, dropout, training, rng)?);
    }
    let feats = g.concat(&window_feats)?;
    let h = g.matvec(bound.fc1_w, feats)?;
    let h = g.add(h, bound.fc1_b)?;
    let h = g.relu(h)?;
    let h = g.dropout(h, dropout, training, rng)?;
    let logits = g.matvec(bound.out_w, h)?;
    g.add(logits, bound.out_b)
}

impl AttributeClassifier {
    /// Class logits via the pure kernel path (no tape).
    fn logits(&self, vocab: &Vocab, tokens: &[String]) -> Vec<f64> {
        let arch = &self.arch;
        let ids = padded_ids(vocab, tokens, arch);
        let emb = self.params.get("emb").expect("shape-checked");
        let embs: Vec<&[f64]> = ids.iter().map(|&id| emb.row(id as usize)).collect();
        let mut feats = Vec::with_capacity(arch.feature_dim());
        for &w in &arch.windows {
            let w_m = self.params.get(&format!("conv{w}.w")).expect("shape-checked");
            let b = self.params.get(&format!("conv{w}.b")).expect("shape-checked");
            let mut pooled = vec![f64::NEG_INFINITY; arch.feature_maps];
            for t in 0..=ids.len() - w {
                let mut x = Vec::with_capacity(w * arch.embed_dim);
                for e in &embs[t..t + w] {
                    x.extend_from_slice(e);
                }
                let mut a = kernels::matvec(w_m, &x);
                for (ai, bi) in a.iter_mut().zip(b.values()) {
                    *ai = (*ai + bi).max(0.0);
                }
                for (p, v) in pooled.iter_mut().zip(&a) {
                    if *v > *p {
                        *p = *v;
                    }
                }
            }
            feats.extend(pooled);
        }
        let fc1_w = self.params.get("fc1.w").expect("shape-checked");
        let fc1_b = self.params.get("fc1.b").expect("shape-checked");
        let mut h = kernels::matvec(fc1_w, &feats);
        for (hi, bi) in h.iter_mut().zip(fc1_b.values()) {
            *hi = (*hi + bi).max(0.0);
        }
        let out_w = self.params.get("out.w").expect("shape-checked");
        let out_b = self.params.get("out.b").expect("shape-checked");
        let mut logits = kernels::matvec(out_w, &h);
        for (li, bi) in logits.iter_mut().zip(out_b.values()) {
            *li += bi;
        }
        logits
    }

    /// Probability per label, labels in `self.labels` order.
    pub fn predict_probs(&self, vocab: &Vocab, tokens: &[String]) -> Vec<f64> {
        if let Some(c) = self.constant {
            let mut probs = vec![0.0; self.labels.len()];
            probs[c] = 1.0;
            return probs;
        }
        kernels::softmax(&self.logits(vocab, tokens))
    }
}

/// Unweighted mean F1 over classes with any mass (tp+fp+fn > 0).
fn macro_f1(pred: &[usize], gold: &[usize], n_classes: usize) -> f64 {
    let mut counts = vec![PrfCounts::default(); n_classes];
    for (&p, &g) in pred.iter().zip(gold) {
        if p == g {
            counts[p].tp += 1;
        } else {
            counts[p].fp += 1;
            counts[g].fn_ += 1;
        }
    }
    let live: Vec<&PrfCounts> = counts.iter().filter(|c| c.tp + c.fp + c.fn_ > 0).collect();
    if live.is_empty() {
        return 0.0;
    }
    live.iter().map(|c| c.f1()).sum::<f64>() / live.len() as f64
}

struct LabeledItem {
    ids: Vec<u32>,
    label: usize,
}

fn train_one(
    def: &AttributeDef,
    attr_index: usize,
    vocab: &Vocab,
    train: &[(MeaningRepresentation, Utterance)],
    valid: &[(MeaningRepresentation, Utterance)],
    cfg: &ClassifierConfig,
) -> Result<(AttributeClassifier, AttributeTrainReport)> {
    let labels = label_set(def);
    let collect = |pairs: &[(MeaningRepresentation, Utterance)]| -> (Vec<LabeledItem>, usize) {
        let mut items = Vec::with_capacity(pairs.len());
        let mut skipped = 0;
        for (mr, utt) in pairs {
            match label_of(mr, &def.name, &labels) {
                Some(label) => items.push(LabeledItem {
                    ids: padded_ids(vocab, &utt.tokens, &cfg.arch),
                    label,
                }),
                None => skipped += 1,
            }
        }
        (items, skipped)
    };
    let (train_items, skipped_train) = collect(train);
    let (valid_items, _) = collect(valid);
    if train_items.is_empty() {
        return Err(Error::Invalid(format!("attribute `{}` has no usable training items", def.name)));
    }

    let observed: BTreeSet<usize> = train_items.iter().map(|i| i.label).collect();
    if observed.len() == 1 {
        let only = *observed.iter().next().unwrap();
        let warning = format!(
            "attribute `{}` has a single observed class `{}`; using a constant classifier",
            def.name, labels[only]
        );
        let clf = AttributeClassifier {
            attribute: def.name.clone(),
            labels,
            constant: Some(only),
            arch: cfg.arch.clone(),
            params: ParamStore::new(),
        };
        let report = AttributeTrainReport {
            attribute: def.name.clone(),
            best_epoch: None,
            best_f1: 0.0,
            skipped_train,
            warning: Some(warning),
        };
        return Ok((clf, report));
    }

    let n_classes = labels.len();
    let mut init_rng = RngStream::new(cfg.seed, 2 * attr_index as u64);
    let mut train_rng = RngStream::new(cfg.seed, 2 * attr_index as u64 + 1);
    let mut params = init_params(&cfg.arch, vocab.len(), n_classes, &mut init_rng)?;

    let mut clf = AttributeClassifier {
        attribute: def.name.clone(),
        labels: labels.clone(),
        constant: None,
        arch: cfg.arch.clone(),
        params: params.clone(),
    };
    let evaluate = |clf: &AttributeClassifier| -> f64 {
        if valid_items.is_empty() {
            return 0.0;
        }
        let gold: Vec<usize> = valid_items.iter().map(|i| i.label).collect();
        let pred: Vec<usize> = valid_items
            .iter()
            .map(|i| {
                let tokens: Vec<String> =
                    i.ids.iter().map(|&id| vocab.token(id).to_string()).collect();
                let probs = clf.predict_probs(vocab, &tokens);
                probs
                    .iter()
                    .enumerate()
                    .max_by(|a, b| a.1.partial_cmp(b.1).unwrap().then(b.0.cmp(&a.0)))
                    .map(|(i, _)| i)
                    .unwrap()
            })
            .collect();
        macro_f1(&pred, &gold, n_classes)
    };

    let mut best_f1 = f64::NEG_INFINITY;
    let mut best_epoch = None;
    let mut best_params = params.clone();
    let mut order: Vec<usize> = (0..train_items.len()).collect();
    for epoch in 1..=cfg.epochs {
        train_rng.shuffle(&mut order);
        for batch in order.chunks(cfg.batch_size) {
            let mut g = Graph::new();
            let bound = bind(&mut g, &params, &cfg.arch)?;
            let mut losses = Vec::with_capacity(batch.len());
            for &i in batch {
                let item = &train_items[i];
                let logits =
                    build_logits(&mut g, &bound, &item.ids, cfg.dropout, true, &mut train_rng)?;
                losses.push(g.cross_entropy(logits, item.label)?);
            }
            let loss = g.mean(&losses)?;
            g.backward(loss)?;
            g.flush_grads(&mut params)?;
            params.sgd_step(cfg.lr, cfg.weight_decay);
            params.zero_grads();
        }
        clf.params = params.clone();
        let f1 = evaluate(&clf);
        if f1 > best_f1 {
            best_f1 = f1;
            best_epoch = Some(epoch);
            best_params = params.clone();
        }
    }
    clf.params = if cfg.epochs > 0 { best_params } else { params };
    let report = AttributeTrainReport {
        attribute: def.name.clone(),
        best_epoch,
        best_f1: if best_f1.is_finite() { best_f1 } else { 0.0 },
        skipped_train,
        warning: None,
    };
    Ok((clf, report))
}

/// Train one classifier per schema attribute. Attributes train in parallel;
/// each draws from its own seeded streams, so results do not depend on
/// scheduling. Labels come from the paired MRs (absent attribute → n/a).
pub fn train_classifiers(
    train: &[(MeaningRepresentation, Utterance)],
    valid: &[(MeaningRepresentation, Utterance)],
    schema: &DomainSchema,
    cfg: &ClassifierConfig,
) -> Result<(ClassifierSet, ClassifierTrainReport)> {
    cfg.validate()?;
    if train.is_empty() || valid.is_empty() {
        return Err(Error::Invalid("classifier training needs nonempty train and valid splits".into()));
    }
    let mut counts: HashMap<String, u64> = HashMap::new();
    for (_, utt) in train {
        for tok in &utt.tokens {
            *counts.entry(tok.clone()).or_default() += 1;
        }
    }
    let vocab = Vocab::from_counts(&counts);

    let results: Result<Vec<_>> = schema
        .attributes
        .par_iter()
        .enumerate()
        .map(|(i, def)| train_one(def, i, &vocab, train, valid, cfg))
        .collect();
    let mut classifiers = Vec::with_capacity(schema.attributes.len());
    let mut reports = Vec::with_capacity(schema.attributes.len());
    for (clf, report) in results? {
        classifiers.push(clf);
        reports.push(report);
    }
    Ok((ClassifierSet { vocab, classifiers }, ClassifierTrainReport { per_attribute: reports }))
}

/// Parse by classifier vote: per attribute take the argmax class; any argmax
/// probability below the threshold invalidates the parse; n/a means absent.
/// The resulting MR still must pass schema validation. Total like the rule
/// parser; classifier sets carry no act cues, so the act is `inform`.
pub fn clf_parse(
    utt: &Utterance,
    set: &ClassifierSet,
    schema: &DomainSchema,
    threshold: f64,
) -> ParseOutcome {
    let mut evidence = Vec::new();
    let mut reasons = Vec::new();
    let mut slots = Vec::new();
    for clf in &set.classifiers {
        let probs = clf.predict_probs(&set.vocab, &utt.tokens);
        let (argmax, prob) = probs
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.partial_cmp(b.1).unwrap().then(b.0.cmp(&a.0)))
            .map(|(i, &p)| (i, p))
            .unwrap();
        let label = clf.labels[argmax].clone();
        evidence.push((
            clf.attribute.clone(),
            AttributeEvidence::ClassProbs {
                probs: clf.labels.iter().cloned().zip(probs).collect(),
                argmax: label.clone(),
                prob,
            },
        ));
        if prob < threshold {
            reasons.push(format!(
                "attribute `{}` best class `{label}` at {prob:.3} is below threshold {threshold}",
                clf.attribute
            ));
        } else if label != NA_LABEL {
            slots.push((clf.attribute.clone(), label));
        }
    }
    let mut valid = reasons.is_empty();
    let mut mr = None;
    if valid {
        let mut candidate = MeaningRepresentation::new("inform", slots);
        match candidate.validate_and_canonicalize(schema, None) {
            Ok(()) => mr = Some(candidate),
            Err(e) => {
                valid = false;
                reasons.push(e.to_string());
            }
        }
    }
    ParseOutcome { mr, valid, evidence, acts_matched: Vec::new(), reasons }
}

const META_FILE: &str = "classifiers.toml";
const VOCAB_FILE: &str = "vocab.txt";

#[derive(Serialize, Deserialize)]
struct AttrMeta {
    name: String,
    labels: Vec<String>,
    constant: Option<usize>,
}

#[derive(Serialize, Deserialize)]
struct SetMeta {
    arch: ClassifierArch,
    attributes: Vec<AttrMeta>,
}

impl ClassifierSet {
    pub fn classifier(&self, attribute: &str) -> Option<&AttributeClassifier> {
        self.classifiers.iter().find(|c| c.attribute.eq_ignore_ascii_case(attribute))
    }

    pub fn save(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let arch = self
            .classifiers
            .iter()
            .find(|c| c.constant.is_none())
            .map(|c| c.arch.clone())
            .unwrap_or_default();
        let meta = SetMeta {
            arch,
            attributes: self
                .classifiers
                .iter()
                .map(|c| AttrMeta {
                    name: c.attribute.clone(),
                    labels: c.labels.clone(),
                    constant: c.constant,
                })
                .collect(),
        };
        let text = toml::to_string_pretty(&meta)
            .map_err(|e| Error::Config(format!("classifier meta: {e}")))?;
        std::fs::write(dir.join(META_FILE), text).map_err(|e| Error::io(dir.join(META_FILE), e))?;
        self.vocab.save(&dir.join(VOCAB_FILE))?;
        for c in &self.classifiers {
            if c.constant.is_none() {
                save_params(&c.params, &dir.join(format!("{}.bin", c.attribute)))?;
            }
        }
        Ok(())
    }

    pub fn load(dir: &Path) -> Result<ClassifierSet> {
        let meta_path = dir.join(META_FILE);
        let text = std::fs::read_to_string(&meta_path).map_err(|e| Error::io(&meta_path, e))?;
        let meta: SetMeta =
            toml::from_str(&text).map_err(|e| Error::Config(format!("classifier meta: {e}")))?;
        meta.arch.validate()?;
        let vocab = Vocab::load(&dir.join(VOCAB_FILE))?;
        let mut classifiers = Vec::with_capacity(meta.attributes.len());
        for attr in meta.attributes {
            if attr.labels.is_empty() || attr.labels.last().map(String::as_str) != Some(NA_LABEL) {
                return Err(Error::Invalid(format!(
                    "classifier `{}` labels must end with `{NA_LABEL}`",
                    attr.name
                )));
            }
            if let Some(c) = attr.constant {
                if c >= attr.labels.len() {
                    return Err(Error::Invalid(format!(
                        "classifier `{}` constant index {c} out of range",
                        attr.name
                    )));
                }
                classifiers.push(AttributeClassifier {
                    attribute: attr.name,
                    labels: attr.labels,
                    constant: Some(c),
                    arch: meta.arch.clone(),
                    params: ParamStore::new(),
                });
            } else {
                let params = load_params(&dir.join(format!("{}.bin", attr.name)))?;
                check_shapes(&params, &meta.arch, vocab.len(), attr.labels.len())?;
                classifiers.push(AttributeClassifier {
                    attribute: attr.name,
                    labels: attr.labels,
                    constant: None,
                    arch: meta.arch.clone(),
                    params,
                });
            }
        }
        Ok(ClassifierSet { vocab, classifiers })
    }
}
