//! Minibatch SGD training with validation-BLEU model selection.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::corpus::linearize::linearize;
use crate::corpus::types::Dataset;
use crate::error::{Error, Result};
use crate::eval::bleu::corpus_bleu;
use crate::nn::graph::Graph;
use crate::nn::rng::RngStream;

use super::decode::greedy;
use super::model::{build_example_loss, BoundModel, Seq2SeqModel};

/// Stream id for epoch shuffling draws.
pub const STREAM_SHUFFLE: u64 = 1;
/// Stream id for dropout mask draws.
pub const STREAM_DROPOUT: u64 = 2;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SelectionMetric {
    ValidationBleu,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub weight_decay: f64,
    pub dropout: f64,
    pub seed: u64,
    #[serde(default)]
    pub max_grad_norm: Option<f64>,
    #[serde(default = "default_selection")]
    pub selection: SelectionMetric,
}

fn default_selection() -> SelectionMetric {
    SelectionMetric::ValidationBleu
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 {
            return Err(Error::Config("batch size must be positive".into()));
        }
        if !(self.lr > 0.0) {
            return Err(Error::Config(format!("learning rate must be positive, got {}", self.lr)));
        }
        if !(self.weight_decay >= 0.0) {
            return Err(Error::Config(format!(
                "weight decay must be nonnegative, got {}",
                self.weight_decay
            )));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(Error::Config(format!("dropout {} outside [0, 1)", self.dropout)));
        }
        if let Some(m) = self.max_grad_norm {
            if !(m > 0.0) {
                return Err(Error::Config(format!("max grad norm must be positive, got {m}")));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochLog {
    pub epoch: usize,
    pub train_loss: f64,
    pub valid_bleu: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainLog {
    pub epochs: Vec<EpochLog>,
    /// 1-based epoch whose parameters the model carries after training;
    /// absent when no epochs ran.
    pub selected_epoch: Option<usize>,
}

/// One teacher-forcing pair: encoded input ids and output ids.
struct TrainPair {
    input: Vec<u32>,
    output: Vec<u32>,
}

/// Train in place. Each (MR, reference) pair is one example; per epoch the
/// pairs are reshuffled, losses are batch means of per-example token-NLL
/// sums, and updates are plain SGD with L2 weight decay (optionally
/// norm-clipped). After the last epoch the parameters with the best
/// validation BLEU are restored (ties favor the earliest epoch).
pub fn train(
    model: &mut Seq2SeqModel,
    train_ds: &Dataset,
    valid_ds: &Dataset,
    cfg: &TrainConfig,
) -> Result<TrainLog> {
    cfg.validate()?;
    if train_ds.examples.is_empty() {
        return Err(Error::Invalid("training split is empty".into()));
    }
    if valid_ds.examples.is_empty() {
        return Err(Error::Invalid("validation split is empty".into()));
    }

    let mode = model.config.mode;
    let mut pairs = Vec::new();
    for ex in &train_ds.examples {
        let lin = linearize(&ex.mr, &train_ds.schema, mode);
        let input = model.input_vocab.encode_strict(&lin.tokens)?;
        for r in &ex.refs {
            if r.tokens.is_empty() {
                return Err(Error::Invalid(format!(
                    "empty reference for MR {}",
                    ex.mr.canonical_string(&train_ds.schema)
                )));
            }
            pairs.push(TrainPair { input: input.clone(), output: model.output_vocab.encode_lossy(&r.tokens) });
        }
    }

    // Validation items: one greedy decode per distinct MR, scored against
    // the union of its references.
    let valid_groups = valid_ds.grouped_by_mr();
    let valid_inputs: Vec<_> = valid_groups
        .iter()
        .map(|(mr, _)| linearize(mr, &valid_ds.schema, mode))
        .collect();
    let valid_refs: Vec<Vec<Vec<String>>> = valid_groups
        .iter()
        .map(|(_, refs)| refs.iter().map(|u| u.tokens.clone()).collect())
        .collect();

    let mut shuffle_rng = RngStream::new(cfg.seed, STREAM_SHUFFLE);
    let mut dropout_rng = RngStream::new(cfg.seed, STREAM_DROPOUT);
    let hidden = model.config.hidden_dim;

    let mut log = TrainLog { epochs: Vec::new(), selected_epoch: None };
    let mut best: Option<(f64, usize, crate::nn::params::ParamStore)> = None;

    for epoch in 1..=cfg.epochs {
        let mut order: Vec<usize> = (0..pairs.len()).collect();
        shuffle_rng.shuffle(&mut order);

        let mut loss_sum = 0.0;
        for batch in order.chunks(cfg.batch_size) {
            let mut g = Graph::new();
            let bound = BoundModel::bind(&mut g, &model.params)?;
            let mut example_losses = Vec::with_capacity(batch.len());
            for &idx in batch {
                let pair = &pairs[idx];
                let loss = build_example_loss(
                    &mut g,
                    &bound,
                    &pair.input,
                    &pair.output,
                    hidden,
                    cfg.dropout,
                    &mut dropout_rng,
                )
                .map_err(|e| {
                    Error::Invalid(format!("epoch {epoch}: building batch loss failed: {e}"))
                })?;
                example_losses.push(loss);
            }
            let batch_loss = g.mean(&example_losses)?;
            let batch_value = g.value(batch_loss).item();
            if !batch_value.is_finite() {
                return Err(Error::Invalid(format!(
                    "training diverged at epoch {epoch}: batch loss {batch_value}"
                )));
            }
            loss_sum += batch_value * batch.len() as f64;
            g.backward(batch_loss)?;
            g.flush_grads(&mut model.params)?;
            model.params.sgd_step_clipped(cfg.lr, cfg.weight_decay, cfg.max_grad_norm);
            model.params.zero_grads();
        }
        let train_loss = loss_sum / pairs.len() as f64;

        let valid_bleu = validation_bleu(model, &valid_inputs, &valid_refs)?;
        log.epochs.push(EpochLog { epoch, train_loss, valid_bleu });
        let improved = match &best {
            Some((b, _, _)) => valid_bleu > *b,
            None => true,
        };
        if improved {
            best = Some((valid_bleu, epoch, model.params.clone()));
        }
    }

    if let Some((_, epoch, params)) = best {
        model.params = params;
        log.selected_epoch = Some(epoch);
    }
    Ok(log)
}

/// Corpus BLEU of greedy decodes over frozen parameters; decoding fans out
/// across workers, scoring happens once on the collected outputs.
fn validation_bleu(
    model: &Seq2SeqModel,
    inputs: &[crate::corpus::linearize::LinearizedInput],
    refs: &[Vec<Vec<String>>],
) -> Result<f64> {
    let hyps: Vec<Vec<String>> = inputs
        .par_iter()
        .map(|input| greedy(model, input).map(|s| s.tokens))
        .collect::<Result<Vec<_>>>()?;
    corpus_bleu(&hyps, refs, 4)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::mr::MeaningRepresentation;
    use crate::corpus::schema::DomainSchema;
    use crate::corpus::types::{Example, Split, Utterance};
    use crate::corpus::vocab::build_vocab;
    use crate::corpus::linearize::LinMode;
    use crate::seq2seq::model::{ModelConfig, LAYERS};

    fn toy_schema() -> DomainSchema {
        DomainSchema::from_toml_str(
            r#"
            name = "boxes"
            required_attributes = []
            report_order = ["color", "size"]

            [[acts]]
            name = "inform"
            allows_repeats = false

            [[attributes]]
            name = "color"
            token = "color"
            kind = "dictionary"
            values = ["red", "blue", "green"]
            delexicalizable = false

            [[attributes]]
            name = "size"
            token = "size"
            kind = "dictionary"
            values = ["small", "large"]
            delexicalizable = false
            "#,
        )
        .unwrap()
    }

    /// Deterministic toy grammar: every (color, size) pair gets a couple of
    /// templated realizations.
    fn toy_dataset(split: Split, schema: &DomainSchema) -> Dataset {
        let mut examples = Vec::new();
        for color in ["red", "blue", "green"] {
            for size in ["small", "large"] {
                let mr = MeaningRepresentation::parse(
                    &format!("inform(color[{color}], size[{size}])"),
                    schema,
                )
                .unwrap();
                let refs = vec![
                    Utterance::from_raw(&format!("the {color} box is {size} .")),
                    Utterance::from_raw(&format!("a {size} box in {color} .")),
                ];
                match split {
                    Split::Train => {
                        // 50-ish examples: repeat each pair several times so
                        // batches mix MRs.
                        for _ in 0..4 {
                            examples.push(Example { mr: mr.clone(), refs: refs.clone() });
                        }
                    }
                    _ => examples.push(Example { mr: mr.clone(), refs: refs.clone() }),
                }
            }
        }
        Dataset { schema: schema.clone(), examples, split }
    }

    fn toy_model(schema: &DomainSchema, train: &Dataset, dim: usize, seed: u64) -> Seq2SeqModel {
        let _ = schema;
        let (input_vocab, output_vocab) = build_vocab(train, LinMode::E2eLex);
        let config = ModelConfig {
            embed_dim: dim,
            hidden_dim: dim,
            layers: LAYERS,
            dropout: 0.1,
            max_decode_len: 20,
            mode: LinMode::E2eLex,
        };
        Seq2SeqModel::new(config, input_vocab, output_vocab, seed).unwrap()
    }

    fn base_cfg() -> TrainConfig {
        TrainConfig {
            epochs: 2,
            batch_size: 8,
            lr: 0.25,
            weight_decay: 1e-4,
            dropout: 0.1,
            seed: 1,
            max_grad_norm: Some(5.0),
            selection: SelectionMetric::ValidationBleu,
        }
    }

    #[test]
    fn zero_epochs_returns_parameters_unchanged() {
        let schema = toy_schema();
        let train_ds = toy_dataset(Split::Train, &schema);
        let valid_ds = toy_dataset(Split::Valid, &schema);
        let mut model = toy_model(&schema, &train_ds, 16, 5);
        let before = model.params.clone();
        let cfg = TrainConfig { epochs: 0, ..base_cfg() };
        let log = train(&mut model, &train_ds, &valid_ds, &cfg).unwrap();
        assert!(log.epochs.is_empty());
        assert_eq!(log.selected_epoch, None);
        assert!(model.params.bit_equal(&before));
    }

    #[test]
    fn toy_grammar_training_halves_the_loss() {
        let schema = toy_schema();
        let train_ds = toy_dataset(Split::Train, &schema);
        let valid_ds = toy_dataset(Split::Valid, &schema);
        let mut model = toy_model(&schema, &train_ds, 32, 9);
        let cfg = TrainConfig { epochs: 20, dropout: 0.0, ..base_cfg() };
        let log = train(&mut model, &train_ds, &valid_ds, &cfg).unwrap();
        assert_eq!(log.epochs.len(), 20);
        let first = log.epochs.first().unwrap().train_loss;
        let last = log.epochs.last().unwrap().train_loss;
        assert!(
            last < 0.5 * first,
            "train loss should at least halve: first {first}, last {last}"
        );
    }

    #[test]
    fn training_is_bit_reproducible() {
        let schema = toy_schema();
        let train_ds = toy_dataset(Split::Train, &schema);
        let valid_ds = toy_dataset(Split::Valid, &schema);
        let cfg = TrainConfig { epochs: 3, ..base_cfg() };

        let mut m1 = toy_model(&schema, &train_ds, 16, 7);
        let log1 = train(&mut m1, &train_ds, &valid_ds, &cfg).unwrap();
        let mut m2 = toy_model(&schema, &train_ds, 16, 7);
        let log2 = train(&mut m2, &train_ds, &valid_ds, &cfg).unwrap();

        assert!(m1.params.bit_equal(&m2.params));
        assert_eq!(log1, log2);
        for (a, b) in log1.epochs.iter().zip(&log2.epochs) {
            assert_eq!(a.train_loss.to_bits(), b.train_loss.to_bits());
            assert_eq!(a.valid_bleu.to_bits(), b.valid_bleu.to_bits());
        }
    }

    #[test]
    fn selected_epoch_has_the_maximum_logged_bleu() {
        let schema = toy_schema();
        let train_ds = toy_dataset(Split::Train, &schema);
        let valid_ds = toy_dataset(Split::Valid, &schema);
        let mut model = toy_model(&schema, &train_ds, 16, 13);
        let cfg = TrainConfig { epochs: 6, ..base_cfg() };
        let log = train(&mut model, &train_ds, &valid_ds, &cfg).unwrap();
        let selected = log.selected_epoch.unwrap();
        let max = log.epochs.iter().map(|e| e.valid_bleu).fold(f64::NEG_INFINITY, f64::max);
        let entry = log.epochs.iter().find(|e| e.epoch == selected).unwrap();
        assert_eq!(entry.valid_bleu, max);
        // Earliest epoch achieving the max wins ties.
        let earliest = log.epochs.iter().find(|e| e.valid_bleu == max).unwrap();
        assert_eq!(earliest.epoch, selected);
    }

    #[test]
    fn eval_nll_is_batch_invariant() {
        // Two examples evaluated in one graph match their singleton losses.
        let schema = toy_schema();
        let train_ds = toy_dataset(Split::Train, &schema);
        let model = toy_model(&schema, &train_ds, 16, 21);
        let lin_a = linearize(&train_ds.examples[0].mr, &schema, LinMode::E2eLex);
        let lin_b = linearize(&train_ds.examples[5].mr, &schema, LinMode::E2eLex);
        let in_a = model.input_vocab.encode_strict(&lin_a.tokens).unwrap();
        let in_b = model.input_vocab.encode_strict(&lin_b.tokens).unwrap();
        let out_a = model.output_vocab.encode_lossy(&train_ds.examples[0].refs[0].tokens);
        let out_b = model.output_vocab.encode_lossy(&train_ds.examples[5].refs[1].tokens);
        let h = model.config.hidden_dim;

        let single = |inp: &[u32], out: &[u32]| -> f64 {
            let mut g = Graph::new();
            let bound = BoundModel::bind(&mut g, &model.params).unwrap();
            let mut rng = RngStream::new(0, 0);
            let l = build_example_loss(&mut g, &bound, inp, out, h, 0.0, &mut rng).unwrap();
            g.value(l).item()
        };
        let solo_a = single(&in_a, &out_a);
        let solo_b = single(&in_b, &out_b);

        let mut g = Graph::new();
        let bound = BoundModel::bind(&mut g, &model.params).unwrap();
        let mut rng = RngStream::new(0, 0);
        let la = build_example_loss(&mut g, &bound, &in_a, &out_a, h, 0.0, &mut rng).unwrap();
        let lb = build_example_loss(&mut g, &bound, &in_b, &out_b, h, 0.0, &mut rng).unwrap();
        assert!((g.value(la).item() - solo_a).abs() < 1e-10);
        assert!((g.value(lb).item() - solo_b).abs() < 1e-10);
    }

    #[test]
    fn config_validation_rejects_bad_values() {
        let ok = base_cfg();
        assert!(ok.validate().is_ok());
        assert!(TrainConfig { batch_size: 0, ..base_cfg() }.validate().is_err());
        assert!(TrainConfig { lr: 0.0, ..base_cfg() }.validate().is_err());
        assert!(TrainConfig { weight_decay: -0.1, ..base_cfg() }.validate().is_err());
        assert!(TrainConfig { dropout: 1.0, ..base_cfg() }.validate().is_err());
        assert!(TrainConfig { max_grad_norm: Some(0.0), ..base_cfg() }.validate().is_err());
    }

    #[test]
    fn empty_splits_are_rejected() {
        let schema = toy_schema();
        let train_ds = toy_dataset(Split::Train, &schema);
        let valid_ds = toy_dataset(Split::Valid, &schema);
        let empty = Dataset { schema: schema.clone(), examples: vec![], split: Split::Train };
        let mut model = toy_model(&schema, &train_ds, 16, 3);
        assert!(train(&mut model, &empty, &valid_ds, &base_cfg()).is_err());
        assert!(train(&mut model, &train_ds, &empty, &base_cfg()).is_err());
    }
}
