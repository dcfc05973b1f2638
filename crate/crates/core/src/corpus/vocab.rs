use std::collections::HashMap;

use sha2::{Digest, Sha256};

pub const VOCAB_SIZE: usize = 128;
pub const PAD_INDEX: usize = 0;
pub const UNK_INDEX: usize = 1;
pub const PAD_CHAR: char = '\0';
pub const UNK_CHAR: char = '\u{FFFD}';

const ACCENTED: &str = "àâäçèéêëîïôöùûüñáíóúìòßœ";
const EXTRA: &str = "æøåãõýÿ¿¡€£°µºª«»’‘“”–—…×½";

pub const DEFAULT_TITLE_MAX_LEN: usize = 256;
pub const DEFAULT_MAX_LEN: usize = 512;

/// Fixed 128-entry character inventory.
///
/// Layout: pad, unknown, space, `a-z`, `0-9`, the 32 printable ASCII
/// punctuation marks, Western European accented letters, a handful of common
/// typographic symbols, and private-use placeholders filling the rest.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CharVocab {
    entries: Vec<char>,
    index: HashMap<char, usize>,
}

impl Default for CharVocab {
    fn default() -> Self {
        Self::new()
    }
}

/// Lowercases one character without changing the character count.
pub fn fold_char(c: char) -> char {
    match c {
        '\n' | '\r' | '\t' => ' ',
        c if c.is_ascii() => c.to_ascii_lowercase(),
        c => c.to_lowercase().next().unwrap_or(c),
    }
}

/// Lowercased copy with one output char per input char, so char offsets
/// computed on either string agree.
pub fn fold_text(text: &str) -> String {
    text.chars().map(fold_char).collect()
}

impl CharVocab {
    pub fn new() -> Self {
        let mut entries = vec![PAD_CHAR, UNK_CHAR, ' '];
        entries.extend('a'..='z');
        entries.extend('0'..='9');
        entries.extend((b'!'..=b'~').map(char::from).filter(|c| c.is_ascii_punctuation()));
        entries.extend(ACCENTED.chars());
        entries.extend(EXTRA.chars());
        let mut reserved = 0xE000u32;
        while entries.len() < VOCAB_SIZE {
            entries.push(char::from_u32(reserved).expect("private-use code point"));
            reserved += 1;
        }
        debug_assert_eq!(entries.len(), VOCAB_SIZE);
        let index = entries.iter().enumerate().map(|(i, &c)| (c, i)).collect();
        CharVocab { entries, index }
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn entries(&self) -> &[char] {
        &self.entries
    }

    /// Index of a character after case folding; unknown characters map to
    /// [`UNK_INDEX`].
    pub fn index_of(&self, c: char) -> usize {
        self.index.get(&fold_char(c)).copied().unwrap_or(UNK_INDEX)
    }

    pub fn char_at(&self, index: usize) -> Option<char> {
        self.entries.get(index).copied()
    }

    /// Lowercases, maps and truncates `text`. Returns the ids and the
    /// (pre-padding) length, which equals `ids.len()`.
    pub fn encode(&self, text: &str, max_len: usize) -> (Vec<usize>, usize) {
        let ids: Vec<usize> = text.chars().take(max_len.max(1)).map(|c| self.index_of(c)).collect();
        let len = ids.len();
        (ids, len)
    }

    pub fn decode(&self, ids: &[usize]) -> String {
        ids.iter()
            .filter(|&&i| i != PAD_INDEX)
            .map(|&i| self.char_at(i).unwrap_or(UNK_CHAR))
            .collect()
    }

    /// Hex SHA-256 over the entry list; stored in checkpoints.
    pub fn fingerprint(&self) -> String {
        let s: String = self.entries.iter().collect();
        hex::encode(Sha256::digest(s.as_bytes()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn has_exactly_128_unique_entries() {
        let v = CharVocab::new();
        assert_eq!(v.len(), 128);
        let mut seen = std::collections::HashSet::new();
        assert!(v.entries().iter().all(|c| seen.insert(*c)));
        for c in ['ç', 'é', 'ñ'] {
            assert_ne!(v.index_of(c), UNK_INDEX);
        }
    }

    #[test]
    fn encode_examples() {
        let v = CharVocab::new();
        assert_eq!(v.encode("", 10), (vec![], 0));
        let (ids, n) = v.encode("a", 10);
        assert_eq!(n, 1);
        assert_eq!(v.char_at(ids[0]), Some('a'));
        assert_eq!(v.encode("Ç", 4).0, v.encode("ç", 4).0);
        assert_eq!(v.encode("abcdef", 3).1, 3);
        assert_eq!(v.encode("漢", 3).0, vec![UNK_INDEX]);
    }

    #[test]
    fn folding_preserves_char_count() {
        for s in ["İstanbul", "ẞig", "A\tB\nC", "ÉTÉ"] {
            assert_eq!(fold_text(s).chars().count(), s.chars().count());
        }
    }

    proptest! {
        #[test]
        fn members_round_trip(i in 1usize..128) {
            let v = CharVocab::new();
            let c = v.char_at(i).unwrap();
            let (ids, _) = v.encode(&c.to_string(), 4);
            prop_assert_eq!(v.decode(&ids), c.to_string());
        }
    }
}
