//! Bracketed constituency trees: reading, writing, preprocessing, and the
//! span / word-position views used by the decoder and the metrics.

use std::collections::BTreeSet;
use std::fmt;
use std::fs;
use std::path::Path;

use thiserror::Error;

/// Node labels that mark disfluent material in Switchboard-style trees.
pub const EDITED: &str = "EDITED";
pub const INTJ: &str = "INTJ";
pub const PRN: &str = "PRN";

/// The reparandum label alone.
pub const EDITED_LABELS: &[&str] = &[EDITED];
/// Reparanda, filled pauses and parentheticals.
pub const EIP_LABELS: &[&str] = &[EDITED, INTJ, PRN];

/// Treebank punctuation tags removed by default preprocessing.
pub const DEFAULT_PUNCT_TAGS: &[&str] = &[",", ".", "``", "''", ":", "-LRB-", "-RRB-", "?", "!"];

/// Tag used for partial words.
pub const PARTIAL_TAG: &str = "XX";

#[derive(Debug, Error)]
pub enum TreebankError {
    #[error("line {line}, offset {offset}: {message}")]
    Parse {
        line: usize,
        offset: usize,
        message: String,
    },
    #[error("invalid tree: {0}")]
    Invalid(String),
    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

/// An n-ary labeled constituency tree. Leaves are preterminals and carry
/// both the POS tag and the word.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum Tree {
    Internal { label: String, children: Vec<Tree> },
    Leaf { pos: String, word: String },
}

/// One token of a sentence.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Token {
    pub word: String,
    pub pos: String,
}

impl Token {
    pub fn new(word: impl Into<String>, pos: impl Into<String>) -> Self {
        Token {
            word: word.into(),
            pos: pos.into(),
        }
    }
}

/// A labeled constituent over token positions `start..end`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct LabeledSpan {
    pub start: usize,
    pub end: usize,
    pub label: String,
}

impl LabeledSpan {
    pub fn new(start: usize, end: usize, label: impl Into<String>) -> Self {
        debug_assert!(start < end);
        LabeledSpan {
            start,
            end,
            label: label.into(),
        }
    }
}

/// A token sequence with an optional gold tree over it.
#[derive(Debug, Clone, PartialEq)]
pub struct Sentence {
    pub tokens: Vec<Token>,
    pub gold: Option<Tree>,
}

impl Sentence {
    pub fn from_tree(tree: Tree) -> Self {
        Sentence {
            tokens: tree.fringe(),
            gold: Some(tree),
        }
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn words(&self) -> Vec<&str> {
        self.tokens.iter().map(|t| t.word.as_str()).collect()
    }
}

impl Tree {
    pub fn leaf(pos: impl Into<String>, word: impl Into<String>) -> Tree {
        Tree::Leaf {
            pos: pos.into(),
            word: word.into(),
        }
    }

    pub fn internal(label: impl Into<String>, children: Vec<Tree>) -> Tree {
        debug_assert!(!children.is_empty());
        Tree::Internal {
            label: label.into(),
            children,
        }
    }

    /// Node label for internal nodes, POS tag for leaves.
    pub fn label(&self) -> &str {
        match self {
            Tree::Internal { label, .. } => label,
            Tree::Leaf { pos, .. } => pos,
        }
    }

    pub fn is_leaf(&self) -> bool {
        matches!(self, Tree::Leaf { .. })
    }

    pub fn children(&self) -> &[Tree] {
        match self {
            Tree::Internal { children, .. } => children,
            Tree::Leaf { .. } => &[],
        }
    }

    /// Number of leaves.
    pub fn len(&self) -> usize {
        match self {
            Tree::Leaf { .. } => 1,
            Tree::Internal { children, .. } => children.iter().map(Tree::len).sum(),
        }
    }

    /// Always false for a valid tree; present for API symmetry with `len`.
    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn fringe(&self) -> Vec<Token> {
        let mut out = Vec::new();
        self.visit_leaves(&mut |pos, word| out.push(Token::new(word, pos)));
        out
    }

    pub fn words(&self) -> Vec<String> {
        let mut out = Vec::new();
        self.visit_leaves(&mut |_, word| out.push(word.to_string()));
        out
    }

    /// Borrowed leaf words, left to right.
    pub fn fringe_words(&self) -> Vec<&str> {
        let mut out = Vec::new();
        self.visit_leaves(&mut |_, word| out.push(word));
        out
    }

    fn visit_leaves<'a>(&'a self, f: &mut impl FnMut(&'a str, &'a str)) {
        match self {
            Tree::Leaf { pos, word } => f(pos, word),
            Tree::Internal { children, .. } => {
                for c in children {
                    c.visit_leaves(f);
                }
            }
        }
    }

    /// Number of internal (non-preterminal) nodes.
    pub fn internal_count(&self) -> usize {
        match self {
            Tree::Leaf { .. } => 0,
            Tree::Internal { children, .. } => {
                1 + children.iter().map(Tree::internal_count).sum::<usize>()
            }
        }
    }

    /// Checks the structural invariants of a tree.
    pub fn validate(&self) -> Result<(), TreebankError> {
        fn atom_ok(s: &str) -> bool {
            !s.is_empty() && !s.chars().any(|c| c.is_whitespace() || c == '(' || c == ')')
        }
        match self {
            Tree::Leaf { pos, word } => {
                if !atom_ok(pos) || !atom_ok(word) {
                    return Err(TreebankError::Invalid(format!("bad leaf ({pos:?} {word:?})")));
                }
                Ok(())
            }
            Tree::Internal { label, children } => {
                if !atom_ok(label) {
                    return Err(TreebankError::Invalid(format!("bad label {label:?}")));
                }
                if children.is_empty() {
                    return Err(TreebankError::Invalid(format!("empty constituent {label}")));
                }
                children.iter().try_for_each(Tree::validate)
            }
        }
    }
}

impl fmt::Display for Tree {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Tree::Leaf { pos, word } => write!(f, "({pos} {word})"),
            Tree::Internal { label, children } => {
                write!(f, "({label}")?;
                for c in children {
                    write!(f, " {c}")?;
                }
                write!(f, ")")
            }
        }
    }
}

/// Canonical single-line bracketed form.
pub fn serialize(tree: &Tree) -> String {
    tree.to_string()
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Tok<'a> {
    Open,
    Close,
    Atom(&'a str),
}

struct Lexer<'a> {
    text: &'a str,
    pos: usize,
}

impl<'a> Lexer<'a> {
    fn new(text: &'a str) -> Self {
        Lexer { text, pos: 0 }
    }

    fn skip_ws(&mut self) {
        let rest = &self.text[self.pos..];
        let trimmed = rest.trim_start();
        self.pos += rest.len() - trimmed.len();
    }

    /// Next token with its byte offset.
    fn next(&mut self) -> Option<(usize, Tok<'a>)> {
        self.skip_ws();
        let start = self.pos;
        let mut chars = self.text[start..].char_indices();
        let (_, c) = chars.next()?;
        match c {
            '(' => {
                self.pos += 1;
                Some((start, Tok::Open))
            }
            ')' => {
                self.pos += 1;
                Some((start, Tok::Close))
            }
            _ => {
                let len = self.text[start..]
                    .find(|c: char| c.is_whitespace() || c == '(' || c == ')')
                    .unwrap_or(self.text.len() - start);
                self.pos += len;
                Some((start, Tok::Atom(&self.text[start..start + len])))
            }
        }
    }

    fn peek(&mut self) -> Option<(usize, Tok<'a>)> {
        let saved = self.pos;
        let t = self.next();
        self.pos = saved;
        t
    }
}

struct Parser<'a> {
    lex: Lexer<'a>,
}

type PResult<T> = Result<T, (usize, String)>;

impl<'a> Parser<'a> {
    fn expect_open(&mut self) -> PResult<usize> {
        match self.lex.next() {
            Some((off, Tok::Open)) => Ok(off),
            Some((off, t)) => Err((off, format!("expected '(', found {}", describe(t)))),
            None => Err((self.lex.text.len(), "unexpected end of input".into())),
        }
    }

    /// Parses one bracketed expression; an unlabeled wrapper yields its child.
    fn expr(&mut self) -> PResult<Tree> {
        let open = self.expect_open()?;
        match self.lex.next() {
            Some((_, Tok::Open)) => {
                // unlabeled wrapper "( (S ...) )"
                self.lex.pos = open + 1;
                let inner = self.expr()?;
                match self.lex.next() {
                    Some((_, Tok::Close)) => Ok(inner),
                    Some((off, _)) => Err((off, "unlabeled wrapper with more than one child".into())),
                    None => Err((self.lex.text.len(), "unclosed bracket".into())),
                }
            }
            Some((off, Tok::Close)) => Err((off, "empty constituent".into())),
            Some((_, Tok::Atom(label))) => match self.lex.peek() {
                Some((_, Tok::Atom(word))) => {
                    self.lex.next();
                    match self.lex.next() {
                        Some((_, Tok::Close)) => Ok(Tree::leaf(label, word)),
                        Some((off, t)) => Err((
                            off,
                            format!("leaf ({label} {word}) followed by {}", describe(t)),
                        )),
                        None => Err((self.lex.text.len(), "unclosed bracket".into())),
                    }
                }
                Some((off, Tok::Close)) => Err((off, format!("empty constituent ({label})"))),
                Some((_, Tok::Open)) => {
                    let mut children = Vec::new();
                    loop {
                        match self.lex.peek() {
                            Some((_, Tok::Open)) => children.push(self.expr()?),
                            Some((_, Tok::Close)) => {
                                self.lex.next();
                                break;
                            }
                            Some((off, Tok::Atom(a))) => {
                                return Err((
                                    off,
                                    format!("word {a:?} in a position where a constituent is expected"),
                                ))
                            }
                            None => return Err((self.lex.text.len(), "unclosed bracket".into())),
                        }
                    }
                    Ok(Tree::internal(label, children))
                }
                None => Err((self.lex.text.len(), "unclosed bracket".into())),
            },
            None => Err((self.lex.text.len(), "unclosed bracket".into())),
        }
    }
}

fn describe(t: Tok<'_>) -> String {
    match t {
        Tok::Open => "'('".into(),
        Tok::Close => "')'".into(),
        Tok::Atom(a) => format!("{a:?}"),
    }
}

fn line_of(text: &str, offset: usize) -> usize {
    text[..offset.min(text.len())].matches('\n').count() + 1
}

/// Parses a single bracketed expression.
pub fn parse_bracketed(text: &str) -> Result<Tree, TreebankError> {
    let mut p = Parser {
        lex: Lexer::new(text),
    };
    let err = |(offset, message): (usize, String)| TreebankError::Parse {
        line: line_of(text, offset),
        offset,
        message,
    };
    let tree = p.expr().map_err(err)?;
    if let Some((off, t)) = p.lex.next() {
        return Err(err((off, format!("trailing input starting with {}", describe(t)))));
    }
    Ok(tree)
}

/// Parses any number of bracketed trees; trees may span several lines.
pub fn parse_many(text: &str) -> Result<Vec<Tree>, TreebankError> {
    let mut p = Parser {
        lex: Lexer::new(text),
    };
    let mut out = Vec::new();
    while let Some((start, _)) = p.lex.peek() {
        let tree = p.expr().map_err(|(offset, message)| {
            // Running off the end is reported where the unfinished tree began.
            let (offset, message) = if offset == text.len() {
                (start, format!("{message} (tree starting here never closes)"))
            } else {
                (offset, message)
            };
            TreebankError::Parse {
                line: line_of(text, offset),
                offset,
                message,
            }
        })?;
        out.push(tree);
    }
    Ok(out)
}

pub fn read_trees(path: impl AsRef<Path>) -> Result<Vec<Tree>, TreebankError> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|source| TreebankError::Io {
        path: path.display().to_string(),
        source,
    })?;
    parse_many(&text)
}

/// Writes one canonical tree per line.
pub fn write_trees(path: impl AsRef<Path>, trees: &[Tree]) -> Result<(), TreebankError> {
    let path = path.as_ref();
    fs::write(path, trees_to_string(trees)).map_err(|source| TreebankError::Io {
        path: path.display().to_string(),
        source,
    })
}

pub fn trees_to_string(trees: &[Tree]) -> String {
    let mut out = String::new();
    for t in trees {
        out.push_str(&serialize(t));
        out.push('\n');
    }
    out
}

/// Token-level preprocessing: removal of punctuation and partial words.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(default)]
pub struct Preprocess {
    pub drop_punct: bool,
    pub drop_partial: bool,
    pub punct_tags: Vec<String>,
}

impl Default for Preprocess {
    fn default() -> Self {
        Preprocess {
            drop_punct: true,
            drop_partial: true,
            punct_tags: DEFAULT_PUNCT_TAGS.iter().map(|s| s.to_string()).collect(),
        }
    }
}

impl Preprocess {
    pub fn keep_all() -> Self {
        Preprocess {
            drop_punct: false,
            drop_partial: false,
            ..Default::default()
        }
    }

    pub fn is_partial(pos: &str, word: &str) -> bool {
        pos == PARTIAL_TAG || word.ends_with('-')
    }

    fn drops(&self, pos: &str, word: &str) -> bool {
        (self.drop_partial && Self::is_partial(pos, word))
            || (self.drop_punct && self.punct_tags.iter().any(|t| t == pos))
    }

    /// Removes matching leaves; internal nodes left empty are spliced out.
    /// Returns `None` when nothing survives.
    pub fn apply(&self, tree: &Tree) -> Option<Tree> {
        match tree {
            Tree::Leaf { pos, word } => (!self.drops(pos, word)).then(|| tree.clone()),
            Tree::Internal { label, children } => {
                let kept: Vec<Tree> = children.iter().filter_map(|c| self.apply(c)).collect();
                (!kept.is_empty()).then(|| Tree::internal(label.clone(), kept))
            }
        }
    }

    /// Applies preprocessing to a corpus, dropping (and logging) trees that
    /// become empty.
    pub fn apply_corpus(&self, trees: &[Tree]) -> Vec<Tree> {
        let mut out = Vec::with_capacity(trees.len());
        for (i, t) in trees.iter().enumerate() {
            match self.apply(t) {
                Some(t) => out.push(t),
                None => log::warn!("tree {} is empty after preprocessing; dropped", i + 1),
            }
        }
        out
    }
}

/// Removes punctuation and/or partial words using the default punctuation tags.
pub fn strip_tokens(tree: &Tree, drop_punct: bool, drop_partial: bool) -> Option<Tree> {
    Preprocess {
        drop_punct,
        drop_partial,
        ..Default::default()
    }
    .apply(tree)
}

/// One labeled span per internal node, in preorder. Preterminals are not
/// spans; unary chains yield one span per node.
pub fn spans(tree: &Tree) -> Vec<LabeledSpan> {
    fn go(t: &Tree, start: usize, out: &mut Vec<LabeledSpan>) -> usize {
        match t {
            Tree::Leaf { .. } => start + 1,
            Tree::Internal { label, children } => {
                let slot = out.len();
                out.push(LabeledSpan::new(start, start + 1, label.clone()));
                let mut end = start;
                for c in children {
                    end = go(c, end, out);
                }
                out[slot].end = end;
                end
            }
        }
    }
    let mut out = Vec::new();
    go(tree, 0, &mut out);
    out
}

/// Fringe positions with at least one ancestor labeled with one of `labels`.
pub fn disfluency_word_positions<S: AsRef<str>>(tree: &Tree, labels: &[S]) -> BTreeSet<usize> {
    fn go<S: AsRef<str>>(
        t: &Tree,
        labels: &[S],
        inside: bool,
        pos: &mut usize,
        out: &mut BTreeSet<usize>,
    ) {
        match t {
            Tree::Leaf { .. } => {
                if inside {
                    out.insert(*pos);
                }
                *pos += 1;
            }
            Tree::Internal { label, children } => {
                let inside = inside || labels.iter().any(|l| l.as_ref() == label);
                for c in children {
                    go(c, labels, inside, pos, out);
                }
            }
        }
    }
    let mut out = BTreeSet::new();
    go(tree, labels, false, &mut 0, &mut out);
    out
}


#[cfg(test)]
mod tests {
    use super::fixtures::{arb_tree, figure1};
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn single_leaf() {
        assert_eq!(parse_bracketed("(NN dog)").unwrap(), Tree::leaf("NN", "dog"));
        assert_eq!(serialize(&Tree::leaf("NN", "dog")), "(NN dog)");
    }

    #[test]
    fn small_tree() {
        let t = parse_bracketed("(S (NP (PRP I)) (VP (VBP enjoy)))").unwrap();
        let expect = Tree::internal(
            "S",
            vec![
                Tree::internal("NP", vec![Tree::leaf("PRP", "I")]),
                Tree::internal("VP", vec![Tree::leaf("VBP", "enjoy")]),
            ],
        );
        assert_eq!(t, expect);
        assert_eq!(
            spans(&t),
            vec![
                LabeledSpan::new(0, 2, "S"),
                LabeledSpan::new(0, 1, "NP"),
                LabeledSpan::new(1, 2, "VP"),
            ]
        );
    }

    #[test]
    fn wrapper_and_whitespace() {
        let t = parse_bracketed("( (S\n  (NP (PRP I))\n\t(VP (VBP enjoy))) )").unwrap();
        assert_eq!(serialize(&t), "(S (NP (PRP I)) (VP (VBP enjoy)))");
    }

    #[test]
    fn parse_errors_carry_offsets() {
        let cases = [
            ("(S (NP (PRP I))", "unclosed"),
            ("()", "empty"),
            ("(NP)", "empty"),
            ("(S (NP (PRP I)) dog)", "constituent is expected"),
            ("(NN dog cat)", "followed by"),
            ("(S (NP (PRP I))))", "trailing"),
            ("NN dog", "expected '('"),
        ];
        for (text, needle) in cases {
            match parse_bracketed(text) {
                Err(TreebankError::Parse { message, .. }) => {
                    assert!(message.contains(needle), "{text}: {message}")
                }
                other => panic!("{text}: {other:?}"),
            }
        }
        match parse_bracketed("(S (NP (PRP I)) dog)") {
            Err(TreebankError::Parse { offset, .. }) => assert_eq!(offset, 16),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn parse_many_multiline() {
        let text = "(S (NP (PRP I))\n   (VP (VBP enjoy)))\n\n(NN dog)\n";
        let trees = parse_many(text).unwrap();
        assert_eq!(trees.len(), 2);
        // an unclosed tree is reported where it starts, not at end of input
        let err = parse_many("(NN dog)\n(S (NP (PRP I)\n").unwrap_err();
        assert!(matches!(err, TreebankError::Parse { line: 2, .. }), "{err:?}");
    }

    #[test]
    fn figure1_round_trip() {
        let t = figure1();
        assert_eq!(parse_bracketed(&serialize(&t)).unwrap(), t);
        assert_eq!(t.len(), 13);
    }

    #[test]
    fn strip_partial_words() {
        let t = parse_bracketed("(S (EDITED (XX wou-)) (MD would) (NP (PRP you)))").unwrap();
        let s = strip_tokens(&t, false, true).unwrap();
        assert_eq!(serialize(&s), "(S (MD would) (NP (PRP you)))");
        let t2 = parse_bracketed("(S (VB wou-) (MD would) (. .))").unwrap();
        assert_eq!(serialize(&strip_tokens(&t2, true, true).unwrap()), "(S (MD would))");
        assert_eq!(serialize(&strip_tokens(&t2, true, false).unwrap()), "(S (VB wou-) (MD would))");
        assert_eq!(strip_tokens(&t, false, false).unwrap(), t);
        assert_eq!(strip_tokens(&Tree::leaf("XX", "wou-"), false, true), None);
        let only = parse_bracketed("(S (EDITED (XX wou-)))").unwrap();
        assert_eq!(strip_tokens(&only, false, true), None);
    }

    #[test]
    fn leaf_only_has_no_spans() {
        assert!(spans(&Tree::leaf("NN", "dog")).is_empty());
    }

    #[test]
    fn unary_chain_spans() {
        let t = parse_bracketed("(S (VP (VB go)))").unwrap();
        assert_eq!(
            spans(&t),
            vec![LabeledSpan::new(0, 1, "S"), LabeledSpan::new(0, 1, "VP")]
        );
    }

    #[test]
    fn figure1_disfluent_words() {
        let t = figure1();
        let words = t.words();
        let e: Vec<_> = disfluency_word_positions(&t, EDITED_LABELS)
            .into_iter()
            .map(|i| words[i].as_str())
            .collect();
        assert_eq!(e, ["We", "don't"]);
        let eip: Vec<_> = disfluency_word_positions(&t, EIP_LABELS)
            .into_iter()
            .map(|i| words[i].as_str())
            .collect();
        assert_eq!(eip, ["We", "don't", "uh", "I", "mean"]);
        let fluent = parse_bracketed("(S (NP (PRP I)) (VP (VBP enjoy)))").unwrap();
        assert!(disfluency_word_positions(&fluent, EIP_LABELS).is_empty());
    }

    proptest! {
        #[test]
        fn round_trip(t in arb_tree()) {
            let s = serialize(&t);
            let back = parse_bracketed(&s).unwrap();
            prop_assert_eq!(&back, &t);
            prop_assert_eq!(serialize(&back), s);
        }

        #[test]
        fn span_count_is_internal_count(t in arb_tree()) {
            prop_assert_eq!(spans(&t).len(), t.internal_count());
            for s in spans(&t) {
                prop_assert!(s.start < s.end && s.end <= t.len());
            }
        }

        #[test]
        fn word_positions_union(t in arb_tree()) {
            let a = disfluency_word_positions(&t, &["EDITED"]);
            let b = disfluency_word_positions(&t, &["INTJ", "PRN"]);
            let ab = disfluency_word_positions(&t, EIP_LABELS);
            prop_assert_eq!(ab, a.union(&b).cloned().collect::<BTreeSet<_>>());
        }

        #[test]
        fn strip_keeps_order_and_labels(t in arb_tree(), punct in any::<bool>(), partial in any::<bool>()) {
            let pre = Preprocess { drop_punct: punct, drop_partial: partial, ..Default::default() };
            let kept: Vec<Token> = t.fringe().into_iter()
                .filter(|tok| !pre.drops(&tok.pos, &tok.word)).collect();
            match pre.apply(&t) {
                None => prop_assert!(kept.is_empty()),
                Some(s) => {
                    prop_assert_eq!(s.fringe(), kept);
                    prop_assert!(s.validate().is_ok());
                    // surviving labels form a subsequence of the original preorder labels
                    let orig: Vec<String> = spans(&t).into_iter().map(|x| x.label).collect();
                    let mut it = orig.iter();
                    for l in spans(&s).into_iter().map(|x| x.label) {
                        prop_assert!(it.any(|o| *o == l));
                    }
                }
            }
        }
    }
}
