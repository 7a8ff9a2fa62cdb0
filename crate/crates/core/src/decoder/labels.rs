use std::collections::{BTreeSet, HashMap};

use serde::{Deserialize, Serialize};

use crate::treebank::{Tree, EDITED};

/// The label inventory of the chart. Each chart label is a unary chain of
/// treebank labels, outermost first; index 0 is the empty chain, the null
/// label used for implicit binarization.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(from = "Vec<Vec<String>>", into = "Vec<Vec<String>>")]
pub struct LabelSet {
    chains: Vec<Vec<String>>,
    index: HashMap<Vec<String>, usize>,
}

pub const NULL_LABEL: usize = 0;

impl LabelSet {
    /// Builds a label set from non-null chains; order is preserved and
    /// duplicates are dropped.
    pub fn new(chains: impl IntoIterator<Item = Vec<String>>) -> Self {
        let mut all = vec![Vec::new()];
        for c in chains {
            if !c.is_empty() && !all.contains(&c) {
                all.push(c);
            }
        }
        Self::from(all)
    }

    /// Single-label chains, one per name.
    pub fn simple(names: &[&str]) -> Self {
        Self::new(names.iter().map(|n| vec![n.to_string()]))
    }

    /// All chains occurring in `trees`, sorted for determinism.
    pub fn from_trees<'a>(trees: impl IntoIterator<Item = &'a Tree>) -> Self {
        let mut set = BTreeSet::new();
        for t in trees {
            collect_chains(t, &mut set);
        }
        Self::new(set)
    }

    /// Number of labels including the null label.
    pub fn len(&self) -> usize {
        self.chains.len()
    }

    pub fn is_empty(&self) -> bool {
        self.chains.len() <= 1
    }

    pub fn chain(&self, idx: usize) -> &[String] {
        &self.chains[idx]
    }

    pub fn index_of(&self, chain: &[String]) -> Option<usize> {
        self.index.get(chain).copied()
    }

    /// Display name, e.g. `S+VP`; the null label is `∅`.
    pub fn name(&self, idx: usize) -> String {
        if idx == NULL_LABEL {
            "∅".to_string()
        } else {
            self.chains[idx].join("+")
        }
    }

    pub fn contains_edited(&self, idx: usize) -> bool {
        self.chains[idx].iter().any(|l| l == EDITED)
    }
}

impl From<Vec<Vec<String>>> for LabelSet {
    fn from(mut chains: Vec<Vec<String>>) -> Self {
        if chains.first().is_none_or(|c| !c.is_empty()) {
            chains.insert(0, Vec::new());
        }
        let index = chains.iter().cloned().enumerate().map(|(i, c)| (c, i)).collect();
        LabelSet { chains, index }
    }
}

impl From<LabelSet> for Vec<Vec<String>> {
    fn from(l: LabelSet) -> Self {
        l.chains
    }
}

/// Collapses the unary chain starting at `t`; returns the chain labels and
/// the node whose children continue the tree.
pub(crate) fn unary_chain(t: &Tree) -> (Vec<String>, &Tree) {
    let mut chain = Vec::new();
    let mut cur = t;
    loop {
        match cur {
            Tree::Internal { label, children } => {
                chain.push(label.clone());
                match children.as_slice() {
                    [only @ Tree::Internal { .. }] => cur = only,
                    _ => return (chain, cur),
                }
            }
            Tree::Leaf { .. } => return (chain, cur),
        }
    }
}

fn collect_chains(t: &Tree, out: &mut BTreeSet<Vec<String>>) {
    if t.is_leaf() {
        return;
    }
    let (chain, bottom) = unary_chain(t);
    out.insert(chain);
    for c in bottom.children() {
        collect_chains(c, out);
    }
}
