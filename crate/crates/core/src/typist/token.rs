use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

/// A generalized token. The serialized form is a tagged string such as
/// `"NUM:5"`, `"CONST:FL"`, `"PUNCT:-"` or `"CAPWORD"`.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(into = "String", try_from = "String")]
pub enum TokenClass {
    Const(String),
    CapWord,
    UpperWord,
    LowerWord,
    MixedWord,
    Num(usize),
    Alnum,
    Punct(char),
    Whitespace,
}

impl fmt::Display for TokenClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            TokenClass::Const(s) => write!(f, "CONST:{s}"),
            TokenClass::CapWord => f.write_str("CAPWORD"),
            TokenClass::UpperWord => f.write_str("UPPERWORD"),
            TokenClass::LowerWord => f.write_str("LOWERWORD"),
            TokenClass::MixedWord => f.write_str("MIXEDWORD"),
            TokenClass::Num(n) => write!(f, "NUM:{n}"),
            TokenClass::Alnum => f.write_str("ALNUM"),
            TokenClass::Punct(c) => write!(f, "PUNCT:{c}"),
            TokenClass::Whitespace => f.write_str("WS"),
        }
    }
}

#[derive(Debug, thiserror::Error)]
#[error("unrecognised token class `{0}`")]
pub struct ParseTokenError(String);

impl FromStr for TokenClass {
    type Err = ParseTokenError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let err = || ParseTokenError(s.to_string());
        let (tag, arg) = match s.split_once(':') {
            Some((t, a)) => (t, Some(a)),
            None => (s, None),
        };
        Ok(match (tag, arg) {
            ("CONST", Some(a)) => TokenClass::Const(a.to_string()),
            ("CAPWORD", None) => TokenClass::CapWord,
            ("UPPERWORD", None) => TokenClass::UpperWord,
            ("LOWERWORD", None) => TokenClass::LowerWord,
            ("MIXEDWORD", None) => TokenClass::MixedWord,
            ("NUM", Some(a)) => TokenClass::Num(a.parse().map_err(|_| err())?),
            ("ALNUM", None) => TokenClass::Alnum,
            ("PUNCT", Some(a)) => {
                let mut chars = a.chars();
                match (chars.next(), chars.next()) {
                    (Some(c), None) => TokenClass::Punct(c),
                    _ => return Err(err()),
                }
            }
            ("WS", None) => TokenClass::Whitespace,
            _ => return Err(err()),
        })
    }
}

impl From<TokenClass> for String {
    fn from(t: TokenClass) -> String {
        t.to_string()
    }
}

impl TryFrom<String> for TokenClass {
    type Error = ParseTokenError;

    fn try_from(s: String) -> Result<Self, Self::Error> {
        s.parse()
    }
}

/// A sequence of generalized tokens describing one value.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct TokenPattern(pub Vec<TokenClass>);

impl fmt::Display for TokenPattern {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("[")?;
        for (i, t) in self.0.iter().enumerate() {
            if i > 0 {
                f.write_str(", ")?;
            }
            write!(f, "{t}")?;
        }
        f.write_str("]")
    }
}

/// A raw token: its generalized class plus the literal text it covers.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Token {
    pub class: TokenClass,
    pub text: String,
}

#[derive(Clone, Copy, PartialEq, Eq)]
enum CharKind {
    Alnum,
    Space,
    Other,
}

fn kind(c: char) -> CharKind {
    if c.is_alphanumeric() {
        CharKind::Alnum
    } else if c.is_whitespace() {
        CharKind::Space
    } else {
        CharKind::Other
    }
}

fn classify_alnum(run: &str) -> TokenClass {
    let has_digit = run.chars().any(|c| c.is_ascii_digit());
    let has_alpha = run.chars().any(|c| !c.is_ascii_digit());
    match (has_digit, has_alpha) {
        (true, false) => TokenClass::Num(run.chars().count()),
        (true, true) => TokenClass::Alnum,
        _ => {
            let mut chars = run.chars();
            let first = chars.next().expect("non-empty run");
            let rest: Vec<char> = chars.collect();
            if rest.is_empty() {
                if first.is_uppercase() {
                    TokenClass::CapWord
                } else if first.is_lowercase() {
                    TokenClass::LowerWord
                } else {
                    TokenClass::MixedWord
                }
            } else if first.is_uppercase() && rest.iter().all(|c| c.is_lowercase()) {
                TokenClass::CapWord
            } else if first.is_uppercase() && rest.iter().all(|c| c.is_uppercase()) {
                TokenClass::UpperWord
            } else if first.is_lowercase() && rest.iter().all(|c| c.is_lowercase()) {
                TokenClass::LowerWord
            } else {
                TokenClass::MixedWord
            }
        }
    }
}

/// Splits a value into maximal runs of alphanumerics and whitespace; every
/// other character is a token of its own.
pub fn raw_tokens(value: &str) -> Vec<Token> {
    let mut out = Vec::new();
    let mut chars = value.char_indices().peekable();
    while let Some((start, c)) = chars.next() {
        let k = kind(c);
        let mut end = start + c.len_utf8();
        if k != CharKind::Other {
            while let Some(&(i, next)) = chars.peek() {
                // digits and letters of one alnum run stay together
                if kind(next) != k {
                    break;
                }
                end = i + next.len_utf8();
                chars.next();
            }
        }
        let text = &value[start..end];
        let class = match k {
            CharKind::Alnum => classify_alnum(text),
            CharKind::Space => TokenClass::Whitespace,
            CharKind::Other => TokenClass::Punct(c),
        };
        out.push(Token {
            class,
            text: text.to_string(),
        });
    }
    out
}

/// Generalized token pattern of a value. The empty string maps to the single
/// marker token `CONST:` so that tokenization stays total.
pub fn tokenize(value: &str) -> TokenPattern {
    if value.is_empty() {
        return TokenPattern(vec![TokenClass::Const(String::new())]);
    }
    TokenPattern(raw_tokens(value).into_iter().map(|t| t.class).collect())
}

#[cfg(test)]
mod tests {
    use super::TokenClass::*;
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn zip_is_one_number() {
        assert_eq!(tokenize("19104"), TokenPattern(vec![Num(5)]));
    }

    #[test]
    fn city_with_two_words() {
        assert_eq!(
            tokenize("Coconut Creek"),
            TokenPattern(vec![CapWord, Whitespace, CapWord])
        );
    }

    #[test]
    fn state_prefixed_zip() {
        assert_eq!(
            tokenize("FL-33063"),
            TokenPattern(vec![UpperWord, Punct('-'), Num(5)])
        );
    }

    #[test]
    fn mixed_classes() {
        assert_eq!(tokenize("1st"), TokenPattern(vec![Alnum]));
        assert_eq!(tokenize("McDonald"), TokenPattern(vec![MixedWord]));
        assert_eq!(tokenize("st"), TokenPattern(vec![LowerWord]));
        assert_eq!(tokenize("A"), TokenPattern(vec![CapWord]));
        assert_eq!(
            tokenize("(215) 555"),
            TokenPattern(vec![Punct('('), Num(3), Punct(')'), Whitespace, Num(3)])
        );
        assert_eq!(tokenize("a  \t b"), TokenPattern(vec![LowerWord, Whitespace, LowerWord]));
    }

    #[test]
    fn empty_maps_to_marker() {
        assert_eq!(tokenize(""), TokenPattern(vec![Const(String::new())]));
    }

    #[test]
    fn tagged_string_encoding() {
        for t in [Const("FL".into()), Num(5), Punct('-'), CapWord, Whitespace, Alnum] {
            let s = t.to_string();
            assert_eq!(s.parse::<TokenClass>().unwrap(), t);
        }
        assert_eq!(serde_json::to_string(&Num(5)).unwrap(), "\"NUM:5\"");
        assert!("NUM:x".parse::<TokenClass>().is_err());
        assert!("PUNCT:ab".parse::<TokenClass>().is_err());
    }

    proptest! {
        #[test]
        fn tokenization_is_total_and_deterministic(s in "\\PC{0,24}") {
            let a = tokenize(&s);
            let b = tokenize(&s);
            prop_assert!(!a.0.is_empty());
            prop_assert_eq!(&a, &b);
            if !s.is_empty() {
                let joined: String = raw_tokens(&s).into_iter().map(|t| t.text).collect();
                prop_assert_eq!(joined, s);
            }
        }
    }
}
