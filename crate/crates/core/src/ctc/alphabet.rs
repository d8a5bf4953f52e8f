use std::collections::HashMap;

use thiserror::Error;

/// Output class index. Class 0 is the CTC blank, class 1 the word separator.
pub type TokenId = usize;

pub const BLANK: TokenId = 0;
pub const SEPARATOR: TokenId = 1;

const BLANK_LABEL: &str = "<blank>";

#[derive(Debug, Error, PartialEq)]
pub enum AlphabetError {
    #[error("symbol {0:?} appears twice")]
    Duplicate(char),
    #[error("symbol {0:?} is reserved or whitespace")]
    Reserved(char),
    #[error("label list must start with {BLANK_LABEL:?} and \"|\"")]
    BadLabels,
    #[error("label {0:?} is not a single character")]
    BadLabel(String),
}

/// Fingerspelling output classes: blank, `|`, then the symbols in order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Alphabet {
    symbols: Vec<char>,
    index: HashMap<char, TokenId>,
}

impl Alphabet {
    /// Alphabet over the given symbols (excluding blank and `|`, which are
    /// always present). Lowercase letters are stored uppercase.
    pub fn new(symbols: impl IntoIterator<Item = char>) -> Result<Self, AlphabetError> {
        let mut list = vec!['|'];
        let mut index = HashMap::from([('|', SEPARATOR)]);
        for c in symbols {
            let c = c.to_ascii_uppercase();
            if c == '|' || c.is_whitespace() || c.is_control() {
                return Err(AlphabetError::Reserved(c));
            }
            if index.insert(c, list.len() + 1).is_some() {
                return Err(AlphabetError::Duplicate(c));
            }
            list.push(c);
        }
        Ok(Alphabet {
            symbols: list,
            index,
        })
    }

    /// Letters, then the given extra symbols.
    pub fn letters_with(extra: &str) -> Self {
        Self::new(('A'..='Z').chain(extra.chars())).expect("distinct symbols")
    }

    /// 26 letters and four punctuation symbols; the desk-scale training set.
    pub fn toy() -> Self {
        Self::letters_with(".-/@")
    }

    /// Rebuilds an alphabet from [`Alphabet::labels`] output.
    pub fn from_labels(labels: &[String]) -> Result<Self, AlphabetError> {
        if labels.len() < 2 || labels[0] != BLANK_LABEL || labels[1] != "|" {
            return Err(AlphabetError::BadLabels);
        }
        let chars = labels[2..]
            .iter()
            .map(|l| {
                let mut it = l.chars();
                match (it.next(), it.next()) {
                    (Some(c), None) => Ok(c),
                    _ => Err(AlphabetError::BadLabel(l.clone())),
                }
            })
            .collect::<Result<Vec<_>, _>>()?;
        Self::new(chars)
    }

    /// Class labels in output order, blank first.
    pub fn labels(&self) -> Vec<String> {
        std::iter::once(BLANK_LABEL.to_string())
            .chain(self.symbols.iter().map(|c| c.to_string()))
            .collect()
    }

    /// Number of output classes including blank.
    pub fn len(&self) -> usize {
        self.symbols.len() + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn blank(&self) -> TokenId {
        BLANK
    }

    pub fn separator(&self) -> TokenId {
        SEPARATOR
    }

    /// Class of a character, after ASCII upper-casing.
    pub fn index_of(&self, c: char) -> Option<TokenId> {
        self.index.get(&c.to_ascii_uppercase()).copied()
    }

    /// Character of a class; `None` for blank or out of range.
    pub fn symbol(&self, id: TokenId) -> Option<char> {
        id.checked_sub(1).and_then(|i| self.symbols.get(i)).copied()
    }

    pub fn label(&self, id: TokenId) -> String {
        match self.symbol(id) {
            Some(c) => c.to_string(),
            None => BLANK_LABEL.to_string(),
        }
    }

    /// Space-joined symbols, e.g. `| C A T |`.
    pub fn render(&self, ids: &[TokenId]) -> String {
        ids.iter()
            .map(|&i| self.label(i))
            .collect::<Vec<_>>()
            .join(" ")
    }

    /// Symbols other than the separator.
    pub fn symbols(&self) -> &[char] {
        &self.symbols[1..]
    }
}

impl Default for Alphabet {
    /// Letters, digits and `. - / : @ + #`.
    fn default() -> Self {
        Self::new(('A'..='Z').chain('0'..='9').chain(".-/:@+#".chars())).expect("distinct symbols")
    }
}
