//! Alternative encodings of disfluency and syntactic structure.
//!
//! Every transform is built from one primitive, splicing (replacing a node
//! by its children in its parent's child list), so the fringe never changes.

use std::fmt;
use std::str::FromStr;

use crate::treebank::{Tree, EIP_LABELS};

/// Root label added by the NoSyntax variants.
pub const TOP: &str = "TOP";

fn is_disfluency(label: &str) -> bool {
    EIP_LABELS.contains(&label)
}

fn wrap_forest(mut forest: Vec<Tree>) -> Tree {
    if forest.len() == 1 {
        forest.pop().unwrap()
    } else {
        Tree::internal(TOP, forest)
    }
}

/// Pushes disfluency labels down to the words: every word dominated by an
/// EDITED/INTJ/PRN node gets a unary parent carrying the innermost such
/// label, and the original disfluency nodes are spliced out.
pub fn pos_disfl(tree: &Tree) -> Tree {
    fn go(t: &Tree, ctx: Option<&str>, out: &mut Vec<Tree>) {
        match t {
            Tree::Leaf { .. } => match ctx {
                Some(l) => out.push(Tree::internal(l, vec![t.clone()])),
                None => out.push(t.clone()),
            },
            Tree::Internal { label, children } if is_disfluency(label) => {
                for c in children {
                    go(c, Some(label), out);
                }
            }
            Tree::Internal { label, children } => {
                let mut kids = Vec::with_capacity(children.len());
                for c in children {
                    go(c, ctx, &mut kids);
                }
                out.push(Tree::internal(label.clone(), kids));
            }
        }
    }
    let mut forest = Vec::new();
    go(tree, None, &mut forest);
    wrap_forest(forest)
}

/// Splices out every non-disfluency internal node and puts the remaining
/// forest under a synthetic TOP root.
pub fn no_syntax(tree: &Tree) -> Tree {
    fn go(t: &Tree, out: &mut Vec<Tree>) {
        match t {
            Tree::Leaf { .. } => out.push(t.clone()),
            Tree::Internal { label, children } => {
                if is_disfluency(label) {
                    let mut kids = Vec::with_capacity(children.len());
                    for c in children {
                        go(c, &mut kids);
                    }
                    out.push(Tree::internal(label.clone(), kids));
                } else {
                    for c in children {
                        go(c, out);
                    }
                }
            }
        }
    }
    let mut forest = Vec::new();
    go(tree, &mut forest);
    Tree::internal(TOP, forest)
}

pub fn pos_disfl_no_syntax(tree: &Tree) -> Tree {
    no_syntax(&pos_disfl(tree))
}

/// Keeps only the topmost disfluency nodes, each flattened over the
/// preterminals it dominates. Other syntax is left alone.
pub fn top_disfl(tree: &Tree) -> Tree {
    fn flat_leaves(t: &Tree, out: &mut Vec<Tree>) {
        match t {
            Tree::Leaf { .. } => out.push(t.clone()),
            Tree::Internal { children, .. } => children.iter().for_each(|c| flat_leaves(c, out)),
        }
    }
    match tree {
        Tree::Leaf { .. } => tree.clone(),
        Tree::Internal { label, .. } if is_disfluency(label) => {
            let mut leaves = Vec::new();
            flat_leaves(tree, &mut leaves);
            Tree::internal(label.clone(), leaves)
        }
        Tree::Internal { label, children } => {
            Tree::internal(label.clone(), children.iter().map(top_disfl).collect())
        }
    }
}

pub fn top_disfl_no_syntax(tree: &Tree) -> Tree {
    no_syntax(&top_disfl(tree))
}

/// A named tree encoding; `Baseline` is the identity.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, serde::Serialize, serde::Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum TransformMode {
    Baseline,
    PosDisfl,
    NoSyntax,
    PosDisflNoSyntax,
    TopDisfl,
    TopDisflNoSyntax,
}

impl TransformMode {
    pub const ALL: [TransformMode; 6] = [
        TransformMode::Baseline,
        TransformMode::PosDisfl,
        TransformMode::NoSyntax,
        TransformMode::PosDisflNoSyntax,
        TransformMode::TopDisfl,
        TransformMode::TopDisflNoSyntax,
    ];

    pub fn apply(self, tree: &Tree) -> Tree {
        match self {
            TransformMode::Baseline => tree.clone(),
            TransformMode::PosDisfl => pos_disfl(tree),
            TransformMode::NoSyntax => no_syntax(tree),
            TransformMode::PosDisflNoSyntax => pos_disfl_no_syntax(tree),
            TransformMode::TopDisfl => top_disfl(tree),
            TransformMode::TopDisflNoSyntax => top_disfl_no_syntax(tree),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            TransformMode::Baseline => "baseline",
            TransformMode::PosDisfl => "posdisfl",
            TransformMode::NoSyntax => "nosyntax",
            TransformMode::PosDisflNoSyntax => "posdisfl-nosyntax",
            TransformMode::TopDisfl => "topdisfl",
            TransformMode::TopDisflNoSyntax => "topdisfl-nosyntax",
        }
    }
}

impl fmt::Display for TransformMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for TransformMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        TransformMode::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| format!("unknown transform mode {s:?}"))
    }
}

impl TryFrom<String> for TransformMode {
    type Error = String;

    fn try_from(s: String) -> Result<Self, Self::Error> {
        s.parse()
    }
}

impl From<TransformMode> for String {
    fn from(m: TransformMode) -> String {
        m.name().to_string()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::treebank::fixtures::{arb_tree, figure1};
    use crate::treebank::{disfluency_word_positions, parse_bracketed, serialize, EDITED_LABELS};
    use proptest::prelude::*;

    fn t(s: &str) -> Tree {
        parse_bracketed(s).unwrap()
    }

    #[test]
    fn pos_disfl_figure1() {
        let out = pos_disfl(&figure1());
        assert_eq!(
            serialize(&out),
            "(S (S (NP (EDITED (PRP We))) (VP (EDITED (VBP don't)))) (INTJ (UH uh)) \
             (S (NP (PRN (PRP I))) (VP (PRN (VBP mean)))) \
             (NP (NP (DT a) (NN lot)) (PP (IN of) (NP (NNS states)))) \
             (VP (VBP don't) (VP (VB have) (NP (JJ capital) (NN punishment)))))"
        );
    }

    #[test]
    fn pos_disfl_innermost_label_wins() {
        let out = pos_disfl(&t("(S (EDITED (INTJ (UH uh)) (NN dog)) (NN dog))"));
        assert_eq!(serialize(&out), "(S (INTJ (UH uh)) (EDITED (NN dog)) (NN dog))");
    }

    #[test]
    fn fluent_trees_unchanged() {
        let fluent = t("(S (NP (PRP I)) (VP (VBP enjoy) (NP (NNS dogs))))");
        assert_eq!(pos_disfl(&fluent), fluent);
        assert_eq!(top_disfl(&fluent), fluent);
        assert_eq!(
            serialize(&no_syntax(&fluent)),
            "(TOP (PRP I) (VBP enjoy) (NNS dogs))"
        );
        assert_eq!(pos_disfl_no_syntax(&fluent), no_syntax(&fluent));
        assert_eq!(top_disfl_no_syntax(&fluent), no_syntax(&fluent));
    }

    #[test]
    fn no_syntax_figure1() {
        assert_eq!(
            serialize(&no_syntax(&figure1())),
            "(TOP (EDITED (PRP We) (VBP don't)) (INTJ (UH uh)) (PRN (PRP I) (VBP mean)) \
             (DT a) (NN lot) (IN of) (NNS states) (VBP don't) (VB have) (JJ capital) (NN punishment))"
        );
    }

    #[test]
    fn pos_disfl_no_syntax_figure1() {
        assert_eq!(
            serialize(&pos_disfl_no_syntax(&figure1())),
            "(TOP (EDITED (PRP We)) (EDITED (VBP don't)) (INTJ (UH uh)) (PRN (PRP I)) (PRN (VBP mean)) \
             (DT a) (NN lot) (IN of) (NNS states) (VBP don't) (VB have) (JJ capital) (NN punishment))"
        );
    }

    #[test]
    fn top_disfl_flattens_nested() {
        let tree = t("(S (EDITED (EDITED (DT the)) (NP (DT the) (JJ big))) (NP (DT the) (JJ big) (NN dog)))");
        assert_eq!(
            serialize(&top_disfl(&tree)),
            "(S (EDITED (DT the) (DT the) (JJ big)) (NP (DT the) (JJ big) (NN dog)))"
        );
        assert_eq!(
            serialize(&top_disfl(&figure1())),
            "(S (EDITED (PRP We) (VBP don't)) (INTJ (UH uh)) (PRN (PRP I) (VBP mean)) \
             (NP (NP (DT a) (NN lot)) (PP (IN of) (NP (NNS states)))) \
             (VP (VBP don't) (VP (VB have) (NP (JJ capital) (NN punishment)))))"
        );
    }

    #[test]
    fn top_disfl_no_syntax_figure1() {
        assert_eq!(
            serialize(&top_disfl_no_syntax(&figure1())),
            "(TOP (EDITED (PRP We) (VBP don't)) (INTJ (UH uh)) (PRN (PRP I) (VBP mean)) \
             (DT a) (NN lot) (IN of) (NNS states) (VBP don't) (VB have) (JJ capital) (NN punishment))"
        );
    }

    #[test]
    fn mode_names_round_trip() {
        for m in TransformMode::ALL {
            assert_eq!(m.name().parse::<TransformMode>().unwrap(), m);
        }
        assert!("bogus".parse::<TransformMode>().is_err());
    }

    proptest! {
        #[test]
        fn fringe_preserved(tree in arb_tree()) {
            for m in TransformMode::ALL {
                let out = m.apply(&tree);
                prop_assert_eq!(out.fringe(), tree.fringe());
                prop_assert!(out.validate().is_ok());
            }
        }

        #[test]
        fn idempotent(tree in arb_tree()) {
            let td = top_disfl(&tree);
            prop_assert_eq!(top_disfl(&td), td);
            let ns = no_syntax(&tree);
            prop_assert_eq!(no_syntax(&ns), ns);
        }

        #[test]
        fn eip_words_preserved(tree in arb_tree()) {
            let eip = disfluency_word_positions(&tree, EIP_LABELS);
            for m in TransformMode::ALL {
                prop_assert_eq!(&disfluency_word_positions(&m.apply(&tree), EIP_LABELS), &eip);
            }
        }

        #[test]
        fn compositions(tree in arb_tree()) {
            prop_assert_eq!(pos_disfl_no_syntax(&tree), no_syntax(&pos_disfl(&tree)));
            prop_assert_eq!(top_disfl_no_syntax(&tree), no_syntax(&top_disfl(&tree)));
        }
    }

    #[test]
    fn edited_words_preserved_without_nested_mixtures() {
        let tree = t("(S (EDITED (S (NP (PRP I)) (EDITED (VBP do)))) (PRN (S (NP (PRP you)) (VP (VBP know)))) (NP (PRP I)) (VP (VBP do)))");
        let e = disfluency_word_positions(&tree, EDITED_LABELS);
        for m in TransformMode::ALL {
            assert_eq!(disfluency_word_positions(&m.apply(&tree), EDITED_LABELS), e, "{m}");
        }
    }
}
