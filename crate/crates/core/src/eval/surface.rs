//! Surface statistics: words and sentences per utterance.

use crate::corpus::tokenizer::{is_sentence_terminal, is_word};
use crate::corpus::types::Utterance;

#[derive(Debug, Clone, PartialEq)]
pub struct SurfaceStats {
    pub items: usize,
    pub mean_words: f64,
    pub mean_sentences: f64,
}

/// Words in one utterance: tokens containing at least one alphanumeric
/// character, so standalone punctuation is excluded.
pub fn word_count(utt: &Utterance) -> usize {
    utt.tokens.iter().filter(|t| is_word(t)).count()
}

/// Sentences in one utterance: segments produced by splitting on terminal
/// punctuation (. ! ?) that contain at least one word; a nonempty utterance
/// counts as at least one sentence even without a terminator.
pub fn sentence_count(utt: &Utterance) -> usize {
    let mut sentences = 0;
    let mut words_in_segment = 0;
    for tok in &utt.tokens {
        if is_sentence_terminal(tok) {
            if words_in_segment > 0 {
                sentences += 1;
            }
            words_in_segment = 0;
        } else if is_word(tok) {
            words_in_segment += 1;
        }
    }
    if words_in_segment > 0 {
        sentences += 1;
    }
    if sentences == 0 && !utt.tokens.is_empty() {
        sentences = 1;
    }
    sentences
}

/// Mean words and sentences per utterance. An empty list reports zeroed
/// means with item count 0.
pub fn surface_stats(utts: &[Utterance]) -> SurfaceStats {
    if utts.is_empty() {
        return SurfaceStats { items: 0, mean_words: 0.0, mean_sentences: 0.0 };
    }
    let n = utts.len() as f64;
    let words: usize = utts.iter().map(word_count).sum();
    let sentences: usize = utts.iter().map(sentence_count).sum();
    SurfaceStats {
        items: utts.len(),
        mean_words: words as f64 / n,
        mean_sentences: sentences as f64 / n,
    }
}
