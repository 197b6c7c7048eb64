//! The input/output format mini-grammar.
//!
//! ```text
//! FORMAT := VALUE
//! OBJECT := '{' PAIR (',' PAIR)* '}'
//! PAIR   := '"' key '"' ':' VALUE
//! VALUE  := OBJECT | LIST | SCALARREF
//! LIST   := '[' VALUE ('for' IDENT 'in' RANGE)? ']'
//! RANGE  := BOUND '..' BOUND | BOUND 'to' BOUND | BOUND
//! ```
//!
//! Format strings are semi-natural language, so the parser is lenient: words
//! in value position become scalar references, prose between structural
//! tokens is skipped and an empty value position becomes [`FormatNode::Any`].
//! Unbalanced `{}`/`[]` are always rejected.

use std::fmt;
use std::ops::Range;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum FormatError {
    #[error("unbalanced bracket at bytes {}..{}", .0.start, .0.end)]
    UnbalancedBracket(Range<usize>),
    #[error("duplicate key \"{0}\"")]
    DuplicateKey(String),
    #[error("comprehension index `{0}` shadows an enclosing index")]
    DuplicateIndex(String),
    #[error("format string contains no value")]
    Empty,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RangeBound {
    Int(i64),
    Ident(String),
}

impl fmt::Display for RangeBound {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            RangeBound::Int(n) => write!(f, "{n}"),
            RangeBound::Ident(s) => f.write_str(s),
        }
    }
}

/// Inclusive index range, `1..N` or `1 to N`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct IndexRange {
    pub start: RangeBound,
    pub end: RangeBound,
}

impl IndexRange {
    /// The identifier that fixes the list length, if the end is symbolic.
    pub fn bound_ident(&self) -> Option<&str> {
        match &self.end {
            RangeBound::Ident(s) => Some(s),
            RangeBound::Int(_) => None,
        }
    }

    /// Length when both ends are literal integers.
    pub fn fixed_len(&self) -> Option<usize> {
        match (&self.start, &self.end) {
            (RangeBound::Int(a), RangeBound::Int(b)) if b >= a => Some((b - a + 1) as usize),
            (RangeBound::Int(_), RangeBound::Int(_)) => Some(0),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Comprehension {
    pub index: String,
    pub range: IndexRange,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FormatNode {
    Object(Vec<(String, FormatNode)>),
    List {
        element: Box<FormatNode>,
        comprehension: Option<Comprehension>,
    },
    ScalarRef(String),
    /// Empty value position; matches any document value.
    Any,
}

impl FormatNode {
    pub fn kind_name(&self) -> &'static str {
        match self {
            FormatNode::Object(_) => "object",
            FormatNode::List { .. } => "list",
            FormatNode::ScalarRef(_) => "scalar",
            FormatNode::Any => "any",
        }
    }

    pub fn get(&self, key: &str) -> Option<&FormatNode> {
        match self {
            FormatNode::Object(pairs) => pairs.iter().find(|(k, _)| k == key).map(|(_, v)| v),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FormatTree {
    pub root: FormatNode,
}

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    LBrace,
    RBrace,
    LBracket,
    RBracket,
    Comma,
    Colon,
    DotDot,
    Str(String),
    Word(String),
    Noise,
}

#[derive(Debug, Clone)]
struct Token {
    tok: Tok,
    span: Range<usize>,
}

fn is_word_byte(b: u8) -> bool {
    b.is_ascii_alphanumeric() || b == b'_'
}

fn tokenize(src: &str) -> Vec<Token> {
    let bytes = src.as_bytes();
    let mut out = Vec::new();
    let mut i = 0;
    while i < bytes.len() {
        let start = i;
        let b = bytes[i];
        let tok = match b {
            b'{' => Tok::LBrace,
            b'}' => Tok::RBrace,
            b'[' => Tok::LBracket,
            b']' => Tok::RBracket,
            b',' => Tok::Comma,
            b':' => Tok::Colon,
            b'.' if bytes.get(i + 1) == Some(&b'.') => {
                i += 1;
                Tok::DotDot
            }
            b'"' => {
                let body_start = i + 1;
                let body_end = src[body_start..]
                    .find('"')
                    .map(|p| body_start + p)
                    .unwrap_or(src.len());
                i = body_end;
                Tok::Str(src[body_start..body_end].to_string())
            }
            b'\\' if src[i..].starts_with("\\param{") => {
                let name_start = i + "\\param{".len();
                match src[name_start..].find('}') {
                    Some(p) => {
                        i = name_start + p;
                        Tok::Word(src[name_start..name_start + p].to_string())
                    }
                    None => Tok::Noise,
                }
            }
            b if b.is_ascii_whitespace() => {
                i += 1;
                continue;
            }
            b if is_word_byte(b) => {
                while i + 1 < bytes.len() && is_word_byte(bytes[i + 1]) {
                    i += 1;
                }
                Tok::Word(src[start..=i].to_string())
            }
            _ => {
                // Skip the rest of a multi-byte char as one noise token.
                let ch_len = src[i..].chars().next().map(char::len_utf8).unwrap_or(1);
                i += ch_len - 1;
                Tok::Noise
            }
        };
        i += 1;
        out.push(Token {
            tok,
            span: start..i.min(src.len()),
        });
    }
    out
}

fn check_balance(tokens: &[Token]) -> Result<(), FormatError> {
    let mut stack: Vec<&Token> = Vec::new();
    for t in tokens {
        match t.tok {
            Tok::LBrace | Tok::LBracket => stack.push(t),
            Tok::RBrace | Tok::RBracket => {
                let want = if t.tok == Tok::RBrace {
                    Tok::LBrace
                } else {
                    Tok::LBracket
                };
                match stack.pop() {
                    Some(open) if open.tok == want => {}
                    _ => return Err(FormatError::UnbalancedBracket(t.span.clone())),
                }
            }
            _ => {}
        }
    }
    match stack.pop() {
        Some(open) => Err(FormatError::UnbalancedBracket(open.span.clone())),
        None => Ok(()),
    }
}

/// Parses a format string into a tree.
pub fn parse_format(src: &str) -> Result<FormatTree, FormatError> {
    let tokens = tokenize(src);
    check_balance(&tokens)?;
    let mut p = Parser {
        toks: &tokens,
        pos: 0,
    };
    // Leading prose: start at the first bracket, else at the first word.
    let start = tokens
        .iter()
        .position(|t| matches!(t.tok, Tok::LBrace | Tok::LBracket))
        .or_else(|| {
            tokens
                .iter()
                .position(|t| matches!(t.tok, Tok::Str(_) | Tok::Word(_)))
        })
        .ok_or(FormatError::Empty)?;
    p.pos = start;
    let root = p.value()?;
    check_indices(&root, &mut Vec::new())?;
    Ok(FormatTree { root })
}

fn check_indices<'a>(node: &'a FormatNode, path: &mut Vec<&'a str>) -> Result<(), FormatError> {
    match node {
        FormatNode::Object(pairs) => pairs.iter().try_for_each(|(_, v)| check_indices(v, path)),
        FormatNode::List {
            element,
            comprehension,
        } => {
            let pushed = match comprehension {
                Some(c) if path.contains(&c.index.as_str()) => {
                    return Err(FormatError::DuplicateIndex(c.index.clone()))
                }
                Some(c) => {
                    path.push(&c.index);
                    true
                }
                None => false,
            };
            check_indices(element, path)?;
            if pushed {
                path.pop();
            }
            Ok(())
        }
        FormatNode::ScalarRef(_) | FormatNode::Any => Ok(()),
    }
}

struct Parser<'a> {
    toks: &'a [Token],
    pos: usize,
}

impl Parser<'_> {
    fn peek(&self) -> Option<&Tok> {
        self.toks.get(self.pos).map(|t| &t.tok)
    }

    fn peek_at(&self, offset: usize) -> Option<&Tok> {
        self.toks.get(self.pos + offset).map(|t| &t.tok)
    }

    fn bump(&mut self) -> Option<&Tok> {
        let t = self.toks.get(self.pos).map(|t| &t.tok);
        self.pos += 1;
        t
    }

    /// Skips one token, or a whole balanced group when it opens one.
    fn skip_one(&mut self) {
        let mut depth = 0usize;
        while let Some(t) = self.bump() {
            match t {
                Tok::LBrace | Tok::LBracket => depth += 1,
                Tok::RBrace | Tok::RBracket => depth = depth.saturating_sub(1),
                _ => {}
            }
            if depth == 0 {
                break;
            }
        }
    }

    fn value(&mut self) -> Result<FormatNode, FormatError> {
        while matches!(self.peek(), Some(Tok::Noise | Tok::Colon | Tok::DotDot)) {
            self.pos += 1;
        }
        match self.peek().cloned() {
            Some(Tok::LBrace) => {
                self.pos += 1;
                self.object()
            }
            Some(Tok::LBracket) => {
                self.pos += 1;
                self.list()
            }
            Some(Tok::Word(w)) if w != "for" => {
                self.pos += 1;
                Ok(FormatNode::ScalarRef(w))
            }
            Some(Tok::Str(s)) => {
                self.pos += 1;
                Ok(FormatNode::ScalarRef(s))
            }
            _ => Ok(FormatNode::Any),
        }
    }

    fn object(&mut self) -> Result<FormatNode, FormatError> {
        let mut pairs: Vec<(String, FormatNode)> = Vec::new();
        loop {
            // Seek a `key :` pair start or the closing brace.
            let key = loop {
                match self.peek() {
                    None => return Ok(FormatNode::Object(pairs)),
                    Some(Tok::RBrace) => {
                        self.pos += 1;
                        return Ok(FormatNode::Object(pairs));
                    }
                    Some(Tok::Str(k) | Tok::Word(k)) if self.peek_at(1) == Some(&Tok::Colon) => {
                        let k = k.clone();
                        self.pos += 2;
                        break k;
                    }
                    Some(_) => self.skip_one(),
                }
            };
            if pairs.iter().any(|(k, _)| *k == key) {
                return Err(FormatError::DuplicateKey(key));
            }
            let value = self.value()?;
            pairs.push((key, value));
            // Skip trailing prose up to `,` or `}`.
            loop {
                match self.peek() {
                    None | Some(Tok::RBrace) => break,
                    Some(Tok::Comma) => {
                        self.pos += 1;
                        break;
                    }
                    Some(_) => self.skip_one(),
                }
            }
        }
    }

    fn list(&mut self) -> Result<FormatNode, FormatError> {
        let element = self.value()?;
        let mut comprehension = None;
        loop {
            match self.peek().cloned() {
                None => break,
                Some(Tok::RBracket) => {
                    self.pos += 1;
                    break;
                }
                Some(Tok::Word(w)) if w == "for" && comprehension.is_none() => {
                    self.pos += 1;
                    comprehension = self.comprehension()?;
                }
                Some(_) => self.skip_one(),
            }
        }
        Ok(FormatNode::List {
            element: Box::new(element),
            comprehension,
        })
    }

    /// After `for`: `IDENT in RANGE`. Leaves the closing `]` unconsumed.
    fn comprehension(&mut self) -> Result<Option<Comprehension>, FormatError> {
        let Some(Tok::Word(index)) = self.peek().cloned() else {
            return Ok(None);
        };
        self.pos += 1;
        if matches!(self.peek(), Some(Tok::Word(w)) if w == "in") {
            self.pos += 1;
        }
        // Collect the range words up to the closing bracket.
        let mut words: Vec<String> = Vec::new();
        let mut saw_dots = false;
        while let Some(t) = self.peek() {
            match t {
                Tok::RBracket => break,
                Tok::Word(w) => {
                    words.push(w.clone());
                    self.pos += 1;
                }
                Tok::DotDot => {
                    saw_dots = true;
                    self.pos += 1;
                }
                _ => self.skip_one(),
            }
        }
        let bound = |w: &str| match w.parse::<i64>() {
            Ok(n) => RangeBound::Int(n),
            Err(_) => RangeBound::Ident(w.to_string()),
        };
        let words: Vec<&str> = words
            .iter()
            .map(String::as_str)
            .filter(|w| *w != "range" && *w != "len")
            .collect();
        let range = match words.as_slice() {
            [a, "to", b, ..] => IndexRange {
                start: bound(a),
                end: bound(b),
            },
            [a, b, ..] if saw_dots => IndexRange {
                start: bound(a),
                end: bound(b),
            },
            [b, ..] => IndexRange {
                start: RangeBound::Int(1),
                end: bound(b),
            },
            [] => return Ok(None),
        };
        Ok(Some(Comprehension { index, range }))
    }
}
