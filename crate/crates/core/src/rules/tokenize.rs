use crate::corpus::fold_char;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum TokenKind {
    Word,
    Number,
    Punct,
}

/// A token with char offsets `[start, end)` into the original text.
///
/// `text` is case-folded; for numbers it is the normalized decimal literal
/// (comma decimal separators rewritten to `.`).
#[derive(Clone, Debug, PartialEq)]
pub struct Token {
    pub kind: TokenKind,
    pub text: String,
    pub start: usize,
    pub end: usize,
}

/// Splits text into letter runs, decimal numerals and single punctuation
/// marks; whitespace is dropped.
///
/// A numeral is a digit run with at most one inner `.` or `,` followed by
/// more digits. Digits glued to a preceding letter (as in "b12") form part of
/// a word, except after `x` so that "2x200" still yields two numerals.
pub fn tokenize(text: &str) -> Vec<Token> {
    let chars: Vec<char> = text.chars().map(fold_char).collect();
    let mut out = Vec::new();
    let mut i = 0;
    while i < chars.len() {
        let c = chars[i];
        if c.is_whitespace() {
            i += 1;
        } else if c.is_ascii_digit() {
            let glued = i > 0 && chars[i - 1].is_alphabetic() && chars[i - 1] != 'x';
            let start = i;
            while i < chars.len() && chars[i].is_ascii_digit() {
                i += 1;
            }
            let mut norm: String = chars[start..i].iter().collect();
            if i + 1 < chars.len()
                && (chars[i] == '.' || chars[i] == ',')
                && chars[i + 1].is_ascii_digit()
            {
                norm.push('.');
                i += 1;
                while i < chars.len() && chars[i].is_ascii_digit() {
                    norm.push(chars[i]);
                    i += 1;
                }
            }
            if glued {
                match out.last_mut() {
                    Some(Token { kind: TokenKind::Word, text, end, .. }) if *end == start => {
                        text.extend(&chars[start..i]);
                        *end = i;
                    }
                    _ => out.push(Token {
                        kind: TokenKind::Word,
                        text: chars[start..i].iter().collect(),
                        start,
                        end: i,
                    }),
                }
            } else {
                out.push(Token {
                    kind: TokenKind::Number,
                    text: norm,
                    start,
                    end: i,
                });
            }
        } else if c.is_alphabetic() {
            let start = i;
            while i < chars.len() && chars[i].is_alphabetic() {
                i += 1;
            }
            out.push(Token {
                kind: TokenKind::Word,
                text: chars[start..i].iter().collect(),
                start,
                end: i,
            });
        } else {
            out.push(Token {
                kind: TokenKind::Punct,
                text: c.to_string(),
                start: i,
                end: i + 1,
            });
            i += 1;
        }
    }
    out
}

/// Lowercased word tokens (numbers and punctuation dropped).
pub fn words(text: &str) -> Vec<String> {
    tokenize(text)
        .into_iter()
        .filter(|t| t.kind == TokenKind::Word)
        .map(|t| t.text)
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn kinds(text: &str) -> Vec<(TokenKind, String)> {
        tokenize(text).into_iter().map(|t| (t.kind, t.text)).collect()
    }

    #[test]
    fn numerals_and_units() {
        use TokenKind::*;
        assert_eq!(
            kinds("42.5 oz (2 Pack)"),
            vec![
                (Number, "42.5".into()),
                (Word, "oz".into()),
                (Punct, "(".into()),
                (Number, "2".into()),
                (Word, "pack".into()),
                (Punct, ")".into()),
            ]
        );
        assert_eq!(kinds("1,5 l")[0], (Number, "1.5".into()));
        assert_eq!(kinds("500ml")[1], (Word, "ml".into()));
        assert_eq!(kinds("2x200")[2], (Number, "200".into()));
        assert_eq!(kinds("vitamin b12"), vec![(Word, "vitamin".into()), (Word, "b12".into())]);
        assert_eq!(kinds("5."), vec![(Number, "5".into()), (Punct, ".".into())]);
    }

    #[test]
    fn offsets_are_chars() {
        let t = tokenize("café 250 g");
        assert_eq!((t[1].start, t[1].end), (5, 8));
    }
}
