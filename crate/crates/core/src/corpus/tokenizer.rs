//! Surface tokenization for reference and generated utterances.
//!
//! The canonical token form is lowercase with punctuation split into
//! standalone tokens. Two exceptions keep the corpora's printed forms intact:
//! the pound sign becomes its own token (`less than £ 20`) and the plural
//! marker `-s` stays attached (`laptop -s`).

/// Characters that are always split out as standalone tokens.
const SPLIT_PUNCT: &[char] = &[
    '.', ',', '!', '?', ';', ':', '(', ')', '"', '£', '-',
];

fn is_split_punct(c: char) -> bool {
    SPLIT_PUNCT.contains(&c)
}

/// Lowercase `raw` and split it into tokens.
///
/// Idempotent on already-tokenized text: `tokenize(&detokenize(&t)) == t`
/// for any token stream this function can produce.
pub fn tokenize(raw: &str) -> Vec<String> {
    let lowered = raw.to_lowercase();
    let chars: Vec<char> = lowered.chars().collect();
    let mut tokens = Vec::new();
    let mut cur = String::new();
    let mut i = 0;
    while i < chars.len() {
        let c = chars[i];
        if c.is_whitespace() {
            flush(&mut tokens, &mut cur);
            i += 1;
            continue;
        }
        if c == '-' {
            // Keep the plural marker "-s" as one token when it stands at a
            // word boundary ("laptop -s"), otherwise split the hyphen.
            let at_start = cur.is_empty();
            let next_is_s = chars.get(i + 1) == Some(&'s');
            let after_boundary = match chars.get(i + 2) {
                None => true,
                Some(c2) => c2.is_whitespace() || is_split_punct(*c2),
            };
            if at_start && next_is_s && after_boundary {
                flush(&mut tokens, &mut cur);
                tokens.push("-s".to_string());
                i += 2;
                continue;
            }
        }
        if is_split_punct(c) {
            flush(&mut tokens, &mut cur);
            tokens.push(c.to_string());
            i += 1;
            continue;
        }
        cur.push(c);
        i += 1;
    }
    flush(&mut tokens, &mut cur);
    tokens
}

fn flush(tokens: &mut Vec<String>, cur: &mut String) {
    if !cur.is_empty() {
        tokens.push(std::mem::take(cur));
    }
}

/// Join tokens with single spaces: the canonical surface form.
pub fn detokenize(tokens: &[String]) -> String {
    tokens.join(" ")
}

/// Tokens that count as words: anything containing an alphanumeric character.
pub fn is_word(token: &str) -> bool {
    token.chars().any(|c| c.is_alphanumeric())
}

/// Terminal punctuation for sentence counting.
pub fn is_sentence_terminal(token: &str) -> bool {
    matches!(token, "." | "!" | "?")
}
