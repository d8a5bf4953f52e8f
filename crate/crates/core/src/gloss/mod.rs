//! Gloss notation: parsing, rendering, stemming and CTC tokenization.
//!
//! Annotation lines are whitespace separated tokens using the conventions
//!
//! | notation      | kind          |
//! |---------------|---------------|
//! | `CAT`         | gloss         |
//! | `fs-WORD`     | fingerspelled |
//! | `ns-NAME`     | name sign     |
//! | `#WORD`       | lexicalized   |
//! | `CL:X(TEXT)`  | classifier    |
//!
//! Prefixes are matched case-insensitively (`FS-23` and `fs-23` are the same
//! token) and rendered in lowercase. Token text is canonically uppercase,
//! except classifier motion text which is kept verbatim.

mod porter;

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ctc::{Alphabet, TokenId};

pub use porter::porter_stem;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GlossKind {
    Gloss,
    Fingerspelled,
    NameSign,
    Lexicalized,
    Classifier,
}

impl GlossKind {
    /// Kinds that are produced with the hand alphabet and are therefore
    /// candidates for fingerspelling alignment.
    pub fn is_hand_spelled(self) -> bool {
        matches!(
            self,
            GlossKind::Fingerspelled | GlossKind::NameSign | GlossKind::Lexicalized
        )
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct GlossToken {
    kind: GlossKind,
    text: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    handshape: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    motion: Option<String>,
}

impl GlossToken {
    pub fn gloss(text: &str) -> Self {
        Self::plain(GlossKind::Gloss, text)
    }

    pub fn fingerspelled(text: &str) -> Self {
        Self::plain(GlossKind::Fingerspelled, text)
    }

    pub fn name_sign(text: &str) -> Self {
        Self::plain(GlossKind::NameSign, text)
    }

    pub fn lexicalized(text: &str) -> Self {
        Self::plain(GlossKind::Lexicalized, text)
    }

    /// `CL:handshape(motion)`. The token text is the uppercased canonical
    /// rendering; handshape is uppercased, motion is kept as written.
    pub fn classifier(handshape: &str, motion: &str) -> Self {
        let handshape = handshape.to_uppercase();
        let text = format!("CL:{}({})", handshape, motion).to_uppercase();
        GlossToken {
            kind: GlossKind::Classifier,
            text,
            handshape: Some(handshape),
            motion: Some(motion.to_string()),
        }
    }

    fn plain(kind: GlossKind, text: &str) -> Self {
        GlossToken {
            kind,
            text: text.to_uppercase(),
            handshape: None,
            motion: None,
        }
    }

    pub fn kind(&self) -> GlossKind {
        self.kind
    }

    pub fn text(&self) -> &str {
        &self.text
    }

    pub fn handshape(&self) -> Option<&str> {
        self.handshape.as_deref()
    }

    pub fn motion(&self) -> Option<&str> {
        self.motion.as_deref()
    }

    pub fn with_text(&self, text: &str) -> Self {
        match self.kind {
            GlossKind::Classifier => self.clone(),
            kind => Self::plain(kind, text),
        }
    }
}

impl fmt::Display for GlossToken {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.kind {
            GlossKind::Gloss => write!(f, "{}", self.text),
            GlossKind::Fingerspelled => write!(f, "fs-{}", self.text),
            GlossKind::NameSign => write!(f, "ns-{}", self.text),
            GlossKind::Lexicalized => write!(f, "#{}", self.text),
            GlossKind::Classifier => write!(
                f,
                "CL:{}({})",
                self.handshape.as_deref().unwrap_or_default(),
                self.motion.as_deref().unwrap_or_default()
            ),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct GlossSequence {
    pub tokens: Vec<GlossToken>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub source_text: Option<String>,
}

impl GlossSequence {
    pub fn new(tokens: Vec<GlossToken>) -> Self {
        GlossSequence {
            tokens,
            source_text: None,
        }
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn iter(&self) -> std::slice::Iter<'_, GlossToken> {
        self.tokens.iter()
    }
}

impl fmt::Display for GlossSequence {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&render(self))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ParseError {
    #[error("empty token at byte {offset}")]
    EmptyToken { offset: usize },
    #[error("unbalanced parentheses in classifier at byte {offset}")]
    UnbalancedClassifier { offset: usize },
    #[error("malformed classifier at byte {offset}: {reason}")]
    MalformedClassifier { offset: usize, reason: &'static str },
    #[error("invalid character {ch:?} in gloss at byte {offset}")]
    InvalidCharacter { offset: usize, ch: char },
}

impl ParseError {
    pub fn offset(&self) -> usize {
        match *self {
            ParseError::EmptyToken { offset }
            | ParseError::UnbalancedClassifier { offset }
            | ParseError::MalformedClassifier { offset, .. }
            | ParseError::InvalidCharacter { offset, .. } => offset,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum TokenizeError {
    #[error("character {ch:?} in word {word:?} is not in the alphabet")]
    Unmapped { ch: char, word: String },
    #[error("word {word:?} has no characters left after normalization")]
    EmptyWord { word: String },
}

fn strip_prefix_ci<'a>(s: &'a str, prefix: &str) -> Option<&'a str> {
    let head = s.get(..prefix.len())?;
    head.eq_ignore_ascii_case(prefix).then(|| &s[prefix.len()..])
}

/// Parses one annotation line into a [`GlossSequence`].
pub fn parse_gloss_sequence(line: &str) -> Result<GlossSequence, ParseError> {
    let mut tokens = Vec::new();
    let bytes = line.as_bytes();
    let mut pos = 0;
    while pos < line.len() {
        let ch = line[pos..].chars().next().unwrap();
        if ch.is_whitespace() {
            pos += ch.len_utf8();
            continue;
        }
        let (token, next) = if let Some(rest) = strip_prefix_ci(&line[pos..], "CL:") {
            parse_classifier(line, pos, pos + (line.len() - pos - rest.len()))?
        } else {
            let end = line[pos..]
                .find(char::is_whitespace)
                .map_or(line.len(), |i| pos + i);
            (parse_simple(&line[pos..end], pos)?, end)
        };
        debug_assert!(next > pos && next <= bytes.len());
        tokens.push(token);
        pos = next;
    }
    Ok(GlossSequence {
        tokens,
        source_text: Some(line.to_string()),
    })
}

/// `start` points at `C` of `CL:`, `body` just after the colon.
fn parse_classifier(
    line: &str,
    start: usize,
    body: usize,
) -> Result<(GlossToken, usize), ParseError> {
    let open = match line[body..].find(|c: char| c == '(' || c.is_whitespace()) {
        Some(i) if line[body + i..].starts_with('(') => body + i,
        _ => {
            return Err(ParseError::MalformedClassifier {
                offset: start,
                reason: "expected '(' after handshape",
            })
        }
    };
    let handshape = &line[body..open];
    if handshape.is_empty() {
        return Err(ParseError::MalformedClassifier {
            offset: body,
            reason: "empty handshape",
        });
    }
    if let Some((i, ch)) = handshape.char_indices().find(|(_, c)| !valid_gloss_char(*c)) {
        return Err(ParseError::InvalidCharacter {
            offset: body + i,
            ch,
        });
    }
    let motion_start = open + 1;
    let close = match line[motion_start..].find(['(', ')']) {
        Some(i) if line.as_bytes()[motion_start + i] == b')' => motion_start + i,
        // Nested '(' is rejected: no escaping convention exists for it.
        Some(i) => {
            return Err(ParseError::UnbalancedClassifier {
                offset: motion_start + i,
            })
        }
        None => return Err(ParseError::UnbalancedClassifier { offset: open }),
    };
    let motion = line[motion_start..close]
        .split_whitespace()
        .collect::<Vec<_>>()
        .join(" ");
    if motion.is_empty() {
        return Err(ParseError::MalformedClassifier {
            offset: motion_start,
            reason: "empty motion text",
        });
    }
    let end = close + 1;
    if let Some(ch) = line[end..].chars().next() {
        if !ch.is_whitespace() {
            return Err(ParseError::MalformedClassifier {
                offset: end,
                reason: "unexpected text after ')'",
            });
        }
    }
    Ok((GlossToken::classifier(handshape, &motion), end))
}

fn valid_gloss_char(c: char) -> bool {
    !(c.is_whitespace() || c.is_control() || (c.is_alphabetic() && !c.is_ascii()))
}

fn parse_simple(raw: &str, offset: usize) -> Result<GlossToken, ParseError> {
    let (kind, text, text_offset) = if let Some(rest) = strip_prefix_ci(raw, "fs-") {
        (GlossKind::Fingerspelled, rest, offset + 3)
    } else if let Some(rest) = strip_prefix_ci(raw, "ns-") {
        (GlossKind::NameSign, rest, offset + 3)
    } else if let Some(rest) = raw.strip_prefix('#') {
        (GlossKind::Lexicalized, rest, offset + 1)
    } else {
        (GlossKind::Gloss, raw, offset)
    };
    if text.is_empty() {
        return Err(ParseError::EmptyToken { offset });
    }
    if let Some((i, ch)) = text.char_indices().find(|(_, c)| !valid_gloss_char(*c)) {
        return Err(ParseError::InvalidCharacter {
            offset: text_offset + i,
            ch,
        });
    }
    Ok(GlossToken::plain(kind, text))
}

/// Renders a sequence back to its canonical single-spaced line.
pub fn render(seq: &GlossSequence) -> String {
    let mut out = String::new();
    for (i, token) in seq.tokens.iter().enumerate() {
        if i > 0 {
            out.push(' ');
        }
        out.push_str(&token.to_string());
    }
    out
}

/// Canonical form of a raw line: tokens re-rendered with single spaces,
/// prefixes lowercased and text uppercased.
pub fn canonicalize(line: &str) -> Result<String, ParseError> {
    parse_gloss_sequence(line).map(|seq| render(&seq))
}

/// Stems plain glosses so inflected forms share a key (`DAYS` and `DAY`).
///
/// Each alphabetic run of a gloss is stemmed with [`porter_stem`], repeated
/// until the stem stops changing so that the normalization is idempotent.
pub fn stem_normalize(seq: &GlossSequence) -> GlossSequence {
    GlossSequence {
        tokens: seq
            .tokens
            .iter()
            .map(|t| match t.kind {
                GlossKind::Gloss => t.with_text(&stem_text(&t.text)),
                _ => t.clone(),
            })
            .collect(),
        source_text: seq.source_text.clone(),
    }
}

/// Stem key for a single gloss string (used for vocabulary lookup).
pub fn stem_text(text: &str) -> String {
    let mut out = String::with_capacity(text.len());
    let mut run = String::new();
    let flush = |run: &mut String, out: &mut String| {
        if !run.is_empty() {
            let mut cur = run.to_ascii_lowercase();
            loop {
                let next = porter_stem(&cur);
                if next == cur {
                    break;
                }
                cur = next;
            }
            out.push_str(&cur.to_ascii_uppercase());
            run.clear();
        }
    };
    for c in text.chars() {
        if c.is_ascii_alphabetic() {
            run.push(c);
        } else {
            flush(&mut run, &mut out);
            out.push(c);
        }
    }
    flush(&mut run, &mut out);
    out
}

/// Case-folds a word and maps it onto the alphabet. Characters outside the
/// alphabet are dropped, or rejected when `strict`.
pub fn normalize_word(word: &str, alphabet: &Alphabet, strict: bool) -> Result<String, TokenizeError> {
    let mut out = String::with_capacity(word.len());
    for c in word.chars().flat_map(char::to_uppercase) {
        if alphabet.index_of(c).is_some_and(|id| id != alphabet.separator()) {
            out.push(c);
        } else if strict {
            return Err(TokenizeError::Unmapped {
                ch: c,
                word: word.to_string(),
            });
        }
    }
    if out.is_empty() {
        return Err(TokenizeError::EmptyWord {
            word: word.to_string(),
        });
    }
    Ok(out)
}

/// Encodes words as `| W O R D | W O R D |` token ids.
pub fn to_ctc_tokens<S: AsRef<str>>(
    words: &[S],
    alphabet: &Alphabet,
) -> Result<Vec<TokenId>, TokenizeError> {
    let sep = alphabet.separator();
    let mut out = vec![sep];
    for word in words {
        let word = word.as_ref();
        for c in word.chars().flat_map(char::to_uppercase) {
            let id = alphabet
                .index_of(c)
                .filter(|&id| id != sep)
                .ok_or_else(|| TokenizeError::Unmapped {
                ch: c,
                word: word.to_string(),
            })?;
            out.push(id);
        }
        out.push(sep);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn kinds(seq: &GlossSequence) -> Vec<(GlossKind, &str)> {
        seq.iter().map(|t| (t.kind(), t.text())).collect()
    }

    #[test]
    fn fingerspelling_is_per_word() {
        let seq = parse_gloss_sequence("fs-NEW fs-YORK").unwrap();
        assert_eq!(
            kinds(&seq),
            vec![
                (GlossKind::Fingerspelled, "NEW"),
                (GlossKind::Fingerspelled, "YORK")
            ]
        );
    }

    #[test]
    fn classifier_fields() {
        let seq = parse_gloss_sequence("CL:4(list)").unwrap();
        let t = &seq.tokens[0];
        assert_eq!(t.kind(), GlossKind::Classifier);
        assert_eq!(t.handshape(), Some("4"));
        assert_eq!(t.motion(), Some("list"));
        assert_eq!(render(&seq), "CL:4(list)");
    }

    #[test]
    fn classifier_motion_may_contain_spaces() {
        let seq = parse_gloss_sequence("CL:4(list) CL:1(point finger) ITEM").unwrap();
        assert_eq!(seq.len(), 3);
        assert_eq!(seq.tokens[1].motion(), Some("point finger"));
        assert_eq!(render(&seq), "CL:4(list) CL:1(point finger) ITEM");
    }

    #[test]
    fn empty_line_is_empty_sequence() {
        assert!(parse_gloss_sequence("").unwrap().is_empty());
        assert!(parse_gloss_sequence("   \t ").unwrap().is_empty());
    }

    #[test]
    fn lexicalized_and_name_signs() {
        let seq = parse_gloss_sequence("#BANK ns-SEATTLE").unwrap();
        assert_eq!(
            kinds(&seq),
            vec![
                (GlossKind::Lexicalized, "BANK"),
                (GlossKind::NameSign, "SEATTLE")
            ]
        );
    }

    #[test]
    fn compound_hyphens_are_kept() {
        let seq = parse_gloss_sequence("SELF-CONTROL SHUT-DOWN").unwrap();
        assert_eq!(seq.tokens[0].text(), "SELF-CONTROL");
        assert_eq!(seq.tokens[0].kind(), GlossKind::Gloss);
    }

    #[test]
    fn uppercase_prefix_is_folded() {
        let seq = parse_gloss_sequence("FS-23 FS-KIEV").unwrap();
        assert_eq!(render(&seq), "fs-23 fs-KIEV");
    }

    #[test]
    fn render_examples() {
        assert_eq!(
            render(&GlossSequence::new(vec![GlossToken::fingerspelled("23")])),
            "fs-23"
        );
        assert_eq!(render(&GlossSequence::default()), "");
        assert_eq!(
            render(&GlossSequence::new(vec![GlossToken::classifier(
                "1",
                "point finger"
            )])),
            "CL:1(point finger)"
        );
    }

    #[test]
    fn malformed_classifiers_report_offsets() {
        let err = parse_gloss_sequence("CAT CL:4(list").unwrap_err();
        assert!(matches!(err, ParseError::UnbalancedClassifier { .. }));
        assert_eq!(err.offset(), 8);

        let err = parse_gloss_sequence("CL:4(a(b))").unwrap_err();
        assert_eq!(err, ParseError::UnbalancedClassifier { offset: 6 });

        assert!(parse_gloss_sequence("CL:4 list").is_err());
        assert!(parse_gloss_sequence("CL:(list)").is_err());
        assert!(parse_gloss_sequence("CL:4(list)X").is_err());
    }

    #[test]
    fn empty_prefixed_token_is_an_error() {
        assert_eq!(
            parse_gloss_sequence("CAT fs-").unwrap_err(),
            ParseError::EmptyToken { offset: 4 }
        );
        assert!(parse_gloss_sequence("#").is_err());
    }

    #[test]
    fn stem_examples() {
        let seq = GlossSequence::new(vec![
            GlossToken::gloss("DAYS"),
            GlossToken::gloss("RUNNING"),
            GlossToken::fingerspelled("DAYS"),
        ]);
        let stemmed = stem_normalize(&seq);
        assert_eq!(stemmed.tokens[0], GlossToken::gloss("DAY"));
        assert_eq!(stemmed.tokens[1], GlossToken::gloss("RUN"));
        assert_eq!(stemmed.tokens[2], GlossToken::fingerspelled("DAYS"));
    }

    #[test]
    fn stem_keeps_non_letters() {
        assert_eq!(stem_text("SHUT-DOWN"), "SHUT-DOWN");
        assert_eq!(stem_text("CONTROL+PERSONS"), "CONTROL+PERSON");
        assert_eq!(stem_text("23"), "23");
    }

    #[test]
    fn ctc_token_layout() {
        let alphabet = Alphabet::default();
        let ids = to_ctc_tokens(&["CAT", "AND", "DOG"], &alphabet).unwrap();
        assert_eq!(alphabet.render(&ids), "| C A T | A N D | D O G |");
        let empty: [&str; 0] = [];
        assert_eq!(alphabet.render(&to_ctc_tokens(&empty, &alphabet).unwrap()), "|");
        let ids = to_ctc_tokens(&["12.34"], &alphabet).unwrap();
        assert_eq!(alphabet.render(&ids), "| 1 2 . 3 4 |");
    }

    #[test]
    fn ctc_tokens_are_case_folded() {
        let alphabet = Alphabet::default();
        assert_eq!(
            to_ctc_tokens(&["cat"], &alphabet).unwrap(),
            to_ctc_tokens(&["CAT"], &alphabet).unwrap()
        );
    }

    #[test]
    fn unmapped_character_names_the_word() {
        let alphabet = Alphabet::default();
        let err = to_ctc_tokens(&["OK", "CAFÉ!"], &alphabet).unwrap_err();
        assert_eq!(
            err,
            TokenizeError::Unmapped {
                ch: 'É',
                word: "CAFÉ!".into()
            }
        );
    }

    #[test]
    fn normalize_word_strips_or_rejects() {
        let alphabet = Alphabet::default();
        assert_eq!(normalize_word("Kiev,", &alphabet, false).unwrap(), "KIEV");
        assert!(normalize_word("Kiev,", &alphabet, true).is_err());
        assert!(matches!(
            normalize_word("!!", &alphabet, false),
            Err(TokenizeError::EmptyWord { .. })
        ));
    }

    proptest! {
        #[test]
        fn parse_never_panics(bytes in proptest::collection::vec(any::<u8>(), 0..64)) {
            let line = String::from_utf8_lossy(&bytes);
            match parse_gloss_sequence(&line) {
                Ok(seq) => {
                    // Accepted lines are stable under re-parsing.
                    let canon = render(&seq);
                    prop_assert_eq!(canonicalize(&canon).unwrap(), canon);
                }
                Err(e) => prop_assert!(e.offset() <= line.len()),
            }
        }

        #[test]
        fn stem_normalize_is_idempotent(words in proptest::collection::vec("[A-Z]{1,12}", 1..6)) {
            let seq = GlossSequence::new(words.iter().map(|w| GlossToken::gloss(w)).collect());
            let once = stem_normalize(&seq);
            prop_assert_eq!(stem_normalize(&once), once);
        }

        #[test]
        fn ctc_token_length(words in proptest::collection::vec("[A-Z0-9.]{1,8}", 0..6)) {
            let alphabet = Alphabet::default();
            let ids = to_ctc_tokens(&words, &alphabet).unwrap();
            let expected = 1 + words.iter().map(|w| w.len() + 1).sum::<usize>();
            prop_assert_eq!(ids.len(), expected);
        }
    }
}
