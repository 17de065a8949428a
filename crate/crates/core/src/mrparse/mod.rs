//! Utterance-to-MR parsing: a high-precision rule engine and per-attribute
//! convolutional classifiers, both feeding the self-training filter.

pub mod classifier;
pub mod fscore;
pub mod rulepack;
pub mod templates;

pub use classifier::{
    clf_parse, train_classifiers, AttributeClassifier, ClassifierArch, ClassifierConfig,
    ClassifierSet, ClassifierTrainReport, NA_LABEL,
};
pub use fscore::{parser_fscore, predictions_from_outcomes, ParserScore, PrfCounts, SlotPrediction};
pub use rulepack::{rule_parse, AttributeEvidence, ParseOutcome, RulePack};
pub use templates::{combinatorial_corpus, expand, value_coverage_corpus, TemplateSet};
