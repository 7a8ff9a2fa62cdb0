//! Deterministic synthetic treebank of disfluent speech.
//!
//! Fluent trees come from a small PCFG. Disfluencies are then injected:
//! a reparandum under `EDITED` placed right before its repair, with an
//! optional interregnum, plus standalone filled pauses (`INTJ`) and
//! parentheticals (`PRN`) among the top-level constituents.

use std::collections::{BTreeMap, HashSet};
use std::fs;
use std::path::{Path, PathBuf};

use rand::distributions::WeightedIndex;
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::derive_seed;
use crate::treebank::{parse_bracketed, serialize, trees_to_string, Tree, EDITED, INTJ, PRN};

#[derive(Debug, Error)]
pub enum GenError {
    #[error("invalid grammar: {0}")]
    Grammar(String),
    #[error("invalid generator config: {0}")]
    Config(String),
    #[error("gave up after {0} attempts to sample a sentence within the length cap")]
    Exhausted(usize),
    #[error("could only produce {got} of {want} distinct {split} sentences")]
    TooFewDistinct {
        split: &'static str,
        got: usize,
        want: usize,
    },
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Rule {
    pub lhs: String,
    pub rhs: Vec<String>,
    pub weight: f64,
}

/// A PCFG. Symbols may carry a `-SUFFIX` to distinguish rule sets; trees
/// use the part before the first `-`. Words of a preterminal are uniform.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Grammar {
    pub start: String,
    pub rules: Vec<Rule>,
    pub lexicon: BTreeMap<String, Vec<String>>,
}

fn base_label(sym: &str) -> &str {
    match sym.find('-') {
        Some(i) if i > 0 => &sym[..i],
        _ => sym,
    }
}

impl Grammar {
    pub fn builtin() -> Self {
        let r = |lhs: &str, rhs: &[&str], weight: f64| Rule {
            lhs: lhs.to_string(),
            rhs: rhs.iter().map(|s| s.to_string()).collect(),
            weight,
        };
        let rules = vec![
            r("S", &["NP", "VP"], 7.0),
            r("S", &["ADVP", "NP", "VP"], 1.0),
            r("NP", &["PRP"], 4.0),
            r("NP", &["DT", "NN"], 3.0),
            r("NP", &["DT", "JJ", "NN"], 1.0),
            r("NP", &["NNS"], 2.0),
            r("NP", &["JJ", "NNS"], 0.5),
            r("NP", &["NP-BASE", "PP-OF"], 0.8),
            r("NP-BASE", &["DT", "NN"], 2.0),
            r("NP-BASE", &["DT", "JJ", "NN"], 1.0),
            r("PP-OF", &["IN-OF", "NP-OBJ"], 1.0),
            r("NP-OBJ", &["NNS"], 1.0),
            r("NP-OBJ", &["DT", "NN"], 1.0),
            r("VP", &["VBP", "NP"], 4.0),
            r("VP", &["VBP"], 0.7),
            r("VP", &["VBP", "NP", "PP"], 1.5),
            r("VP", &["VBD", "NP"], 2.0),
            r("VP", &["VBD", "PP"], 0.8),
            r("VP", &["VBP", "ADVP"], 0.6),
            r("VP", &["MD", "VP-BASE"], 1.2),
            r("VP", &["VBP-THINK", "SBAR"], 0.6),
            r("VP-BASE", &["VB", "NP"], 2.0),
            r("VP-BASE", &["VB"], 0.5),
            r("PP", &["IN", "NP"], 1.0),
            r("ADVP", &["RB"], 1.0),
            r("SBAR", &["IN-THAT", "S"], 1.0),
        ];
        let words = |ws: &[&str]| ws.iter().map(|s| s.to_string()).collect::<Vec<_>>();
        let lexicon = BTreeMap::from([
            ("PRP".to_string(), words(&["I", "you", "we", "they", "he", "she"])),
            ("DT".to_string(), words(&["the", "a", "this", "some"])),
            (
                "NN".to_string(),
                words(&["dog", "house", "car", "job", "school", "week", "city", "book"]),
            ),
            (
                "NNS".to_string(),
                words(&["dogs", "cats", "kids", "states", "people", "books"]),
            ),
            ("JJ".to_string(), words(&["big", "old", "good", "new", "small"])),
            ("VBP".to_string(), words(&["like", "have", "need", "want", "see", "love"])),
            ("VBD".to_string(), words(&["liked", "had", "saw", "bought", "found"])),
            ("VB".to_string(), words(&["buy", "sell", "take", "make", "get"])),
            ("MD".to_string(), words(&["can", "will", "would", "should"])),
            ("VBP-THINK".to_string(), words(&["think", "guess", "believe"])),
            ("IN-THAT".to_string(), words(&["that"])),
            ("IN-OF".to_string(), words(&["of"])),
            ("IN".to_string(), words(&["in", "on", "with", "at", "for"])),
            ("RB".to_string(), words(&["really", "just", "now", "probably", "usually"])),
        ]);
        Grammar {
            start: "S".to_string(),
            rules,
            lexicon,
        }
    }

    pub fn validate(&self) -> Result<(), GenError> {
        let err = |m: String| Err(GenError::Grammar(m));
        if self.lexicon.values().all(|w| w.is_empty()) {
            return err("grammar has no terminals".into());
        }
        let lhs: HashSet<&str> = self.rules.iter().map(|r| r.lhs.as_str()).collect();
        if !lhs.contains(self.start.as_str()) {
            return err(format!("start symbol {} has no rules", self.start));
        }
        for r in &self.rules {
            if r.rhs.is_empty() {
                return err(format!("rule for {} has an empty right-hand side", r.lhs));
            }
            if !(r.weight > 0.0 && r.weight.is_finite()) {
                return err(format!("rule for {} has weight {}", r.lhs, r.weight));
            }
            if self.lexicon.contains_key(&r.lhs) {
                return err(format!("{} is both a phrase and a preterminal", r.lhs));
            }
            for s in &r.rhs {
                if !lhs.contains(s.as_str()) && !self.lexicon.contains_key(s) {
                    return err(format!("symbol {s} has neither rules nor words"));
                }
            }
        }
        for (pos, words) in &self.lexicon {
            if words.is_empty() {
                return err(format!("preterminal {pos} has no words"));
            }
        }
        for sym in lhs.iter().copied().chain(self.lexicon.keys().map(String::as_str)) {
            if [EDITED, INTJ, PRN].contains(&base_label(sym)) {
                return err(format!("fluent grammar may not use {sym}"));
            }
        }
        // every phrase must be able to finish: fixed point of productive symbols
        let mut productive: HashSet<&str> = self.lexicon.keys().map(String::as_str).collect();
        loop {
            let before = productive.len();
            for r in &self.rules {
                if r.rhs.iter().all(|s| productive.contains(s.as_str())) {
                    productive.insert(&r.lhs);
                }
            }
            if productive.len() == before {
                break;
            }
        }
        if let Some(bad) = lhs.iter().find(|s| !productive.contains(**s)) {
            return err(format!("{bad} can never derive a finite string"));
        }
        Ok(())
    }

    /// Every word with its (base) part of speech, in a fixed order.
    fn tagged_words(&self) -> Vec<(String, String)> {
        self.lexicon
            .iter()
            .flat_map(|(pos, ws)| ws.iter().map(|w| (base_label(pos).to_string(), w.clone())))
            .collect()
    }
}

/// Rules and lexicon prepared for sampling.
struct Sampler<'g> {
    grammar: &'g Grammar,
    rules: BTreeMap<&'g str, (Vec<&'g Rule>, WeightedIndex<f64>)>,
}

const MAX_DEPTH: usize = 40;
const MAX_ATTEMPTS: usize = 10_000;

impl<'g> Sampler<'g> {
    fn new(grammar: &'g Grammar) -> Result<Self, GenError> {
        grammar.validate()?;
        let mut by_lhs: BTreeMap<&str, Vec<&Rule>> = BTreeMap::new();
        for r in &grammar.rules {
            by_lhs.entry(&r.lhs).or_default().push(r);
        }
        let rules = by_lhs
            .into_iter()
            .map(|(k, rs)| {
                let w = WeightedIndex::new(rs.iter().map(|r| r.weight)).expect("positive weights");
                (k, (rs, w))
            })
            .collect();
        Ok(Sampler { grammar, rules })
    }

    fn expand(&self, sym: &str, rng: &mut impl Rng, depth: usize, budget: &mut usize) -> Option<Tree> {
        if depth > MAX_DEPTH {
            return None;
        }
        if let Some(words) = self.grammar.lexicon.get(sym) {
            if *budget == 0 {
                return None;
            }
            *budget -= 1;
            let w = words.choose(rng).expect("nonempty lexicon entry");
            return Some(Tree::leaf(base_label(sym), w.as_str()));
        }
        let (rules, dist) = &self.rules[sym];
        let rule = rules[dist.sample(rng)];
        let mut children = Vec::with_capacity(rule.rhs.len());
        for s in &rule.rhs {
            children.push(self.expand(s, rng, depth + 1, budget)?);
        }
        Some(Tree::internal(base_label(sym), children))
    }

    fn fluent(&self, max_len: usize, rng: &mut impl Rng) -> Result<Tree, GenError> {
        for _ in 0..MAX_ATTEMPTS {
            let mut budget = max_len;
            if let Some(t) = self.expand(&self.grammar.start, rng, 0, &mut budget) {
                return Ok(t);
            }
        }
        Err(GenError::Exhausted(MAX_ATTEMPTS))
    }
}

/// A fluent tree with at most `max_len` words; overlong derivations are
/// abandoned and resampled.
pub fn generate_fluent(grammar: &Grammar, max_len: usize, rng: &mut impl Rng) -> Result<Tree, GenError> {
    Sampler::new(grammar)?.fluent(max_len, rng)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GenConfig {
    pub seed: u64,
    pub train: usize,
    pub dev: usize,
    pub test: usize,
    /// Built-in grammar when absent.
    pub grammar: Option<Grammar>,
    /// Probability that a sentence contains a repair.
    pub repair_rate: f64,
    /// Probability of a standalone filled pause.
    pub intj_rate: f64,
    /// Probability of a standalone parenthetical.
    pub prn_rate: f64,
    /// Probability that a reparandum word copies the repair word exactly.
    pub copy_rate: f64,
    /// Probability that a reparandum contains a nested one.
    pub nested_rate: f64,
    /// Probability that a repair has interregnum material.
    pub interregnum_rate: f64,
    /// Filled pauses, as bracketed `INTJ` trees.
    pub interjections: Vec<String>,
    /// Discourse markers, as bracketed `PRN` trees.
    pub parentheticals: Vec<String>,
    pub include_partial: bool,
    /// Probability that the last reparandum word is cut off, when enabled.
    pub partial_rate: f64,
    pub include_punct: bool,
    pub max_len: usize,
}

impl Default for GenConfig {
    fn default() -> Self {
        GenConfig {
            seed: 7,
            train: 1600,
            dev: 200,
            test: 200,
            grammar: None,
            repair_rate: 0.35,
            intj_rate: 0.15,
            prn_rate: 0.1,
            copy_rate: 0.6,
            nested_rate: 0.05,
            interregnum_rate: 0.3,
            interjections: vec!["(INTJ (UH uh))".into(), "(INTJ (UH um))".into()],
            parentheticals: vec![
                "(PRN (S (NP (PRP I)) (VP (VBP mean))))".into(),
                "(PRN (S (NP (PRP you)) (VP (VBP know))))".into(),
            ],
            include_partial: false,
            partial_rate: 0.2,
            include_punct: false,
            max_len: 20,
        }
    }
}

impl GenConfig {
    /// All rates zero: the generator emits fluent trees only.
    pub fn fluent_only() -> Self {
        GenConfig {
            repair_rate: 0.0,
            intj_rate: 0.0,
            prn_rate: 0.0,
            nested_rate: 0.0,
            interregnum_rate: 0.0,
            ..Self::default()
        }
    }

    pub fn grammar(&self) -> Grammar {
        self.grammar.clone().unwrap_or_else(Grammar::builtin)
    }

    pub fn validate(&self) -> Result<(), GenError> {
        let err = |m: String| Err(GenError::Config(m));
        for (name, p) in [
            ("repair_rate", self.repair_rate),
            ("intj_rate", self.intj_rate),
            ("prn_rate", self.prn_rate),
            ("copy_rate", self.copy_rate),
            ("nested_rate", self.nested_rate),
            ("interregnum_rate", self.interregnum_rate),
            ("partial_rate", self.partial_rate),
        ] {
            if !(0.0..=1.0).contains(&p) {
                return err(format!("{name} = {p} is not a probability"));
            }
        }
        if self.max_len == 0 {
            return err("max_len must be at least 1".into());
        }
        self.inventory()?;
        self.grammar().validate()
    }

    fn inventory(&self) -> Result<(Vec<Tree>, Vec<Tree>), GenError> {
        let load = |items: &[String], label: &str| -> Result<Vec<Tree>, GenError> {
            let trees = items
                .iter()
                .map(|s| {
                    let t = parse_bracketed(s).map_err(|e| GenError::Config(format!("{s}: {e}")))?;
                    if t.label() != label {
                        return Err(GenError::Config(format!("{s} is not rooted in {label}")));
                    }
                    Ok(t)
                })
                .collect::<Result<Vec<_>, _>>()?;
            if trees.is_empty() {
                return Err(GenError::Config(format!("no {label} items configured")));
            }
            Ok(trees)
        };
        Ok((
            load(&self.interjections, INTJ)?,
            load(&self.parentheticals, PRN)?,
        ))
    }
}

/// Which disfluencies one sentence receives; drawn before the fluent tree
/// so that resampling for length does not bias the rates.
#[derive(Debug, Clone, Copy, PartialEq)]
struct Plan {
    repair: bool,
    intj: bool,
    prn: bool,
}

impl Plan {
    fn draw(c: &GenConfig, rng: &mut impl Rng) -> Self {
        Plan {
            repair: rng.gen_bool(c.repair_rate),
            intj: rng.gen_bool(c.intj_rate),
            prn: rng.gen_bool(c.prn_rate),
        }
    }
}

struct Injector<'a> {
    config: &'a GenConfig,
    interjections: Vec<Tree>,
    parentheticals: Vec<Tree>,
    by_pos: BTreeMap<String, Vec<String>>,
    all_words: Vec<(String, String)>,
}

impl<'a> Injector<'a> {
    fn new(config: &'a GenConfig, grammar: &Grammar) -> Result<Self, GenError> {
        let (interjections, parentheticals) = config.inventory()?;
        let all_words = grammar.tagged_words();
        let mut by_pos: BTreeMap<String, Vec<String>> = BTreeMap::new();
        for (pos, w) in &all_words {
            let e = by_pos.entry(pos.clone()).or_default();
            if !e.contains(w) {
                e.push(w.clone());
            }
        }
        Ok(Injector {
            config,
            interjections,
            parentheticals,
            by_pos,
            all_words,
        })
    }

    /// Same-POS replacement different from `word`; any other word when the
    /// tag has no alternative.
    fn substitute(&self, pos: &str, word: &str, rng: &mut impl Rng) -> (String, String) {
        let same: Vec<&String> = self
            .by_pos
            .get(pos)
            .map(|ws| ws.iter().filter(|w| *w != word).collect())
            .unwrap_or_default();
        if let Some(w) = same.choose(rng) {
            return (pos.to_string(), (*w).clone());
        }
        let others: Vec<&(String, String)> = self.all_words.iter().filter(|(_, w)| w != word).collect();
        match others.choose(rng) {
            Some((p, w)) => (p.clone(), w.clone()),
            None => (pos.to_string(), word.to_string()),
        }
    }

    /// Rough copy of the first `k` words of `repair`, keeping its structure.
    fn reparandum(&self, repair: &Tree, k: usize, rng: &mut impl Rng) -> Tree {
        let prefix = truncate(repair, k).expect("k >= 1");
        let mut copied = map_leaves(&prefix, &mut |pos, word| {
            if rng.gen_bool(self.config.copy_rate) {
                (pos.to_string(), word.to_string())
            } else {
                self.substitute(pos, word, rng)
            }
        });
        if self.config.nested_rate > 0.0 && rng.gen_bool(self.config.nested_rate) {
            if let Tree::Internal { children, .. } = &mut copied {
                let inner = truncate(&children[0], 1).expect("nonempty child");
                children.insert(0, Tree::internal(EDITED, vec![inner]));
            }
        }
        if self.config.include_partial && rng.gen_bool(self.config.partial_rate) {
            copied = cut_last_word(&copied);
        }
        Tree::internal(EDITED, vec![copied])
    }

    fn interregnum(&self, rng: &mut impl Rng) -> Tree {
        if rng.gen_bool(0.5) {
            self.interjections.choose(rng).unwrap().clone()
        } else {
            self.parentheticals.choose(rng).unwrap().clone()
        }
    }

    fn apply(&self, fluent: &Tree, plan: Plan, rng: &mut impl Rng) -> Tree {
        let mut tree = fluent.clone();
        if plan.repair {
            let paths = internal_paths(&tree);
            if !paths.is_empty() {
                let path = paths.choose(rng).unwrap().clone();
                let repair = node_at(&tree, &path).clone();
                let k = rng.gen_range(1..=3).min(repair.len());
                let mut inserted = vec![self.reparandum(&repair, k, rng)];
                if rng.gen_bool(self.config.interregnum_rate) {
                    inserted.push(self.interregnum(rng));
                }
                let (last, parent_path) = path.split_last().unwrap();
                if let Tree::Internal { children, .. } = node_at_mut(&mut tree, parent_path) {
                    for (off, t) in inserted.into_iter().enumerate() {
                        children.insert(last + off, t);
                    }
                }
            }
        }
        for (wanted, pool) in [(plan.intj, &self.interjections), (plan.prn, &self.parentheticals)] {
            if wanted {
                let item = pool.choose(rng).unwrap().clone();
                if let Tree::Internal { children, .. } = &mut tree {
                    let at = rng.gen_range(0..=children.len());
                    children.insert(at, item);
                }
            }
        }
        if self.config.include_punct {
            if let Tree::Internal { children, .. } = &mut tree {
                children.push(Tree::leaf(".", "."));
            }
        }
        tree
    }
}

/// Child-index paths of every non-root internal node, in preorder.
fn internal_paths(t: &Tree) -> Vec<Vec<usize>> {
    fn go(t: &Tree, path: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        for (i, c) in t.children().iter().enumerate() {
            if !c.is_leaf() {
                path.push(i);
                out.push(path.clone());
                go(c, path, out);
                path.pop();
            }
        }
    }
    let mut out = Vec::new();
    go(t, &mut Vec::new(), &mut out);
    out
}

fn node_at<'t>(t: &'t Tree, path: &[usize]) -> &'t Tree {
    path.iter().fold(t, |n, &i| &n.children()[i])
}

fn node_at_mut<'t>(t: &'t mut Tree, path: &[usize]) -> &'t mut Tree {
    let mut n = t;
    for &i in path {
        n = match n {
            Tree::Internal { children, .. } => &mut children[i],
            Tree::Leaf { .. } => unreachable!("paths only visit internal nodes"),
        };
    }
    n
}

/// The tree restricted to its first `k` leaves; `None` when `k == 0`.
fn truncate(t: &Tree, k: usize) -> Option<Tree> {
    fn go(t: &Tree, left: &mut usize) -> Option<Tree> {
        if *left == 0 {
            return None;
        }
        match t {
            Tree::Leaf { .. } => {
                *left -= 1;
                Some(t.clone())
            }
            Tree::Internal { label, children } => {
                let kept: Vec<Tree> = children.iter().map_while(|c| go(c, left)).collect();
                (!kept.is_empty()).then(|| Tree::internal(label.clone(), kept))
            }
        }
    }
    let mut left = k;
    go(t, &mut left)
}

fn map_leaves(t: &Tree, f: &mut impl FnMut(&str, &str) -> (String, String)) -> Tree {
    match t {
        Tree::Leaf { pos, word } => {
            let (p, w) = f(pos, word);
            Tree::leaf(p, w)
        }
        Tree::Internal { label, children } => Tree::internal(
            label.clone(),
            children.iter().map(|c| map_leaves(c, f)).collect(),
        ),
    }
}

/// Replaces the last word by a truncated form tagged as a partial word.
fn cut_last_word(t: &Tree) -> Tree {
    let n = t.len();
    let mut seen = 0;
    map_leaves(t, &mut |pos, word| {
        seen += 1;
        if seen == n {
            let keep: String = word.chars().take((word.chars().count() / 2).max(1)).collect();
            (crate::treebank::PARTIAL_TAG.to_string(), format!("{keep}-"))
        } else {
            (pos.to_string(), word.to_string())
        }
    })
}

/// Adds disfluencies to a fluent tree according to the configured rates.
/// All rates zero leaves the tree unchanged.
pub fn inject_disfluencies(tree: &Tree, config: &GenConfig, rng: &mut impl Rng) -> Result<Tree, GenError> {
    let injector = Injector::new(config, &config.grammar())?;
    let plan = Plan::draw(config, rng);
    Ok(injector.apply(tree, plan, rng))
}

/// Sentence generator for one configuration.
pub struct Generator<'c> {
    config: &'c GenConfig,
    grammar: Grammar,
}

impl<'c> Generator<'c> {
    pub fn new(config: &'c GenConfig) -> Result<Self, GenError> {
        config.validate()?;
        Ok(Generator {
            config,
            grammar: config.grammar(),
        })
    }

    /// One sentence within the length cap. Returns the fluent source tree
    /// and the disfluent result.
    pub fn sentence(&self, rng: &mut impl Rng) -> Result<(Tree, Tree), GenError> {
        let sampler = Sampler::new(&self.grammar)?;
        let injector = Injector::new(self.config, &self.grammar)?;
        let plan = Plan::draw(self.config, rng);
        for _ in 0..MAX_ATTEMPTS {
            let fluent = sampler.fluent(self.config.max_len, rng)?;
            let t = injector.apply(&fluent, plan, rng);
            if t.len() <= self.config.max_len {
                return Ok((fluent, t));
            }
        }
        Err(GenError::Exhausted(MAX_ATTEMPTS))
    }

    /// `count` sentences from `rng`.
    pub fn sentences(&self, count: usize, rng: &mut impl Rng) -> Result<Vec<Tree>, GenError> {
        (0..count).map(|_| self.sentence(rng).map(|(_, t)| t)).collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Splits {
    pub train: Vec<Tree>,
    pub dev: Vec<Tree>,
    pub test: Vec<Tree>,
}

/// Three disjoint splits. Each split draws from its own derived seed;
/// sentences already emitted by an earlier split are redrawn.
pub fn generate_splits(config: &GenConfig) -> Result<Splits, GenError> {
    let gen = Generator::new(config)?;
    let mut seen: HashSet<String> = HashSet::new();
    let mut run = |split: &'static str, idx: u64, want: usize| -> Result<Vec<Tree>, GenError> {
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(config.seed, idx, 0));
        let mut out = Vec::with_capacity(want);
        let mut attempts = 0;
        while out.len() < want {
            attempts += 1;
            if attempts > want.saturating_mul(50) + 1000 {
                return Err(GenError::TooFewDistinct {
                    split,
                    got: out.len(),
                    want,
                });
            }
            let (_, t) = gen.sentence(&mut rng)?;
            // duplicates are allowed inside a split but never across splits
            let key = serialize(&t);
            if idx == 0 || !seen.contains(&key) {
                out.push(t);
            }
            if idx == 0 {
                seen.insert(key);
            }
        }
        if idx > 0 {
            seen.extend(out.iter().map(serialize));
        }
        Ok(out)
    };
    let train = run("train", 0, config.train)?;
    let dev = run("dev", 1, config.dev)?;
    let test = run("test", 2, config.test)?;
    Ok(Splits { train, dev, test })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub seed: u64,
    pub config: GenConfig,
    pub counts: BTreeMap<String, usize>,
    /// Sentences containing an EDITED node, per split.
    pub disfluent: BTreeMap<String, usize>,
    pub files: BTreeMap<String, String>,
}

pub const SPLIT_FILES: [(&str, &str); 3] =
    [("train", "train.trees"), ("dev", "dev.trees"), ("test", "test.trees")];

/// Writes `train.trees`, `dev.trees`, `test.trees` (one tree per line)
/// and `manifest.json` into `out`.
pub fn generate_corpus(config: &GenConfig, out: &Path) -> Result<Manifest, GenError> {
    let splits = generate_splits(config)?;
    let io = |p: &Path| {
        let p = p.to_path_buf();
        move |source| GenError::Io { path: p, source }
    };
    fs::create_dir_all(out).map_err(io(out))?;
    let mut manifest = Manifest {
        seed: config.seed,
        config: config.clone(),
        counts: BTreeMap::new(),
        disfluent: BTreeMap::new(),
        files: BTreeMap::new(),
    };
    for ((name, file), trees) in SPLIT_FILES.iter().zip([&splits.train, &splits.dev, &splits.test]) {
        let path = out.join(file);
        fs::write(&path, trees_to_string(trees)).map_err(io(&path))?;
        manifest.counts.insert(name.to_string(), trees.len());
        manifest.disfluent.insert(
            name.to_string(),
            trees.iter().filter(|t| has_label(t, EDITED)).count(),
        );
        manifest.files.insert(name.to_string(), file.to_string());
    }
    let path = out.join("manifest.json");
    let json = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
    fs::write(&path, json + "\n").map_err(io(&path))?;
    Ok(manifest)
}

fn has_label(t: &Tree, label: &str) -> bool {
    !t.is_leaf() && (t.label() == label || t.children().iter().any(|c| has_label(c, label)))
}
