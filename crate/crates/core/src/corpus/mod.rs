//! Corpus handling: meaning representations, schemas, tokenization,
//! delexicalization, linearization, vocabularies, and dataset loading.

pub mod delex;
pub mod linearize;
pub mod load;
pub mod mr;
pub mod normalize;
pub mod schema;
pub mod tokenizer;
pub mod types;
pub mod vocab;

pub use delex::{delexicalize, relexicalize, DelexMapping};
pub use linearize::{linearize, LinMode, LinearizedInput};
pub use load::{load_da_corpus, load_e2e_corpus, save_da_corpus, save_e2e_corpus};
pub use mr::MeaningRepresentation;
pub use normalize::{normalize_dataset, NormalizationConfig, NormalizationEdit};
pub use schema::{value_slug, ActDef, AttributeDef, AttributeKind, DomainSchema, DONT_CARE};
pub use tokenizer::{detokenize, is_sentence_terminal, is_word, tokenize};
pub use types::{Dataset, Example, Split, Utterance};
pub use vocab::{build_vocab, schema_token_universe, Vocab, BOS, EOS, PAD, UNK};
