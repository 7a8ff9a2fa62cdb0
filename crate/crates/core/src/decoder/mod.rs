//! Chart decoding over span score tables.
//!
//! The decoder searches binary trees whose nodes carry either a chart label
//! (a unary chain of treebank labels) or the null label. Null nodes are
//! spliced out and chains expanded, which yields n-ary trees. A tree's score
//! is the (label-weighted) sum of its non-null span scores.

mod labels;

use std::collections::HashMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use self::labels::{LabelSet, NULL_LABEL};
use self::labels::unary_chain;
use crate::metrics::{check_fringe, span_counts, MetricsError};
use crate::model::SpanScoreTable;
use crate::scalar::Scalar;
use crate::treebank::{spans, Token, Tree};

#[derive(Debug, Error, PartialEq)]
pub enum DecodeError {
    #[error("tree has {tree} tokens but the score table covers {table}")]
    LengthMismatch { tree: usize, table: usize },
    #[error("score table has {table} labels but the label set has {labels}")]
    LabelCount { table: usize, labels: usize },
    #[error("label chain {0:?} is not in the label set")]
    UnknownLabel(String),
    #[error("cannot decode an empty sentence")]
    Empty,
    #[error(transparent)]
    Fringe(#[from] MetricsError),
}

/// Per-label multipliers of span scores: one weight for labels containing
/// EDITED and one for everything else.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LabelWeights {
    pub edited_weight: f64,
    pub default_weight: f64,
}

impl Default for LabelWeights {
    fn default() -> Self {
        Self::UNIT
    }
}

impl LabelWeights {
    pub const UNIT: LabelWeights = LabelWeights {
        edited_weight: 1.0,
        default_weight: 1.0,
    };

    /// EDITED 2, everything else 0.7.
    pub const EDITED_EMPHASIS: LabelWeights = LabelWeights {
        edited_weight: 2.0,
        default_weight: 0.7,
    };

    pub fn new(edited_weight: f64, default_weight: f64) -> Self {
        assert!(
            edited_weight > 0.0 && default_weight > 0.0,
            "label weights must be positive"
        );
        LabelWeights {
            edited_weight,
            default_weight,
        }
    }

    pub fn weight(&self, labels: &LabelSet, idx: usize) -> f64 {
        if labels.contains_edited(idx) {
            self.edited_weight
        } else {
            self.default_weight
        }
    }

    fn table<F: Scalar>(&self, labels: &LabelSet) -> Vec<F> {
        (0..labels.len()).map(|l| F::of(self.weight(labels, l))).collect()
    }
}

/// A labeled node of a chart tree.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ChartNode {
    pub start: usize,
    pub end: usize,
    pub label: usize,
}

/// A decoded tree, its labeled chart nodes in preorder, and the objective
/// value the decoder maximized.
#[derive(Debug, Clone, PartialEq)]
pub struct Decoded<F> {
    pub tree: Tree,
    pub nodes: Vec<ChartNode>,
    pub score: F,
}

/// Maps an n-ary tree to chart nodes by collapsing unary chains. Preorder.
pub fn chart_nodes(tree: &Tree, labels: &LabelSet) -> Result<Vec<ChartNode>, DecodeError> {
    fn go(
        t: &Tree,
        start: usize,
        labels: &LabelSet,
        out: &mut Vec<ChartNode>,
    ) -> Result<usize, DecodeError> {
        if t.is_leaf() {
            return Ok(start + 1);
        }
        let (chain, bottom) = unary_chain(t);
        let label = labels
            .index_of(&chain)
            .ok_or_else(|| DecodeError::UnknownLabel(chain.join("+")))?;
        let slot = out.len();
        out.push(ChartNode {
            start,
            end: start,
            label,
        });
        let mut end = start;
        for c in bottom.children() {
            end = go(c, end, labels, out)?;
        }
        out[slot].end = end;
        Ok(end)
    }
    let mut out = Vec::new();
    go(tree, 0, labels, &mut out)?;
    Ok(out)
}

/// Rebuilds the n-ary tree from laminar non-null chart nodes.
pub fn tree_from_chart(nodes: &[ChartNode], tokens: &[Token], labels: &LabelSet) -> Tree {
    fn build(
        nodes: &[ChartNode],
        next: &mut usize,
        start: usize,
        end: usize,
        tokens: &[Token],
        labels: &LabelSet,
    ) -> Vec<Tree> {
        let mut out = Vec::new();
        let mut i = start;
        while i < end {
            match nodes.get(*next) {
                Some(node) if node.start == i && node.end <= end => {
                    *next += 1;
                    let mut kids = build(nodes, next, node.start, node.end, tokens, labels);
                    for l in labels.chain(node.label).iter().rev() {
                        kids = vec![Tree::internal(l.clone(), kids)];
                    }
                    out.extend(kids);
                    i = node.end;
                }
                _ => {
                    out.push(Tree::leaf(tokens[i].pos.clone(), tokens[i].word.clone()));
                    i += 1;
                }
            }
        }
        out
    }
    let mut sorted: Vec<ChartNode> = nodes
        .iter()
        .copied()
        .filter(|n| n.label != NULL_LABEL)
        .collect();
    sorted.sort_by(|a, b| a.start.cmp(&b.start).then(b.end.cmp(&a.end)));
    let mut forest = build(&sorted, &mut 0, 0, tokens.len(), tokens, labels);
    if forest.len() == 1 {
        forest.pop().unwrap()
    } else {
        // only reachable when the root span is unlabeled
        Tree::internal(crate::transforms::TOP, forest)
    }
}

fn check_table<F: Scalar>(table: &SpanScoreTable<F>, labels: &LabelSet) -> Result<(), DecodeError> {
    if table.num_labels() != labels.len() {
        return Err(DecodeError::LabelCount {
            table: table.num_labels(),
            labels: labels.len(),
        });
    }
    if table.is_empty() {
        return Err(DecodeError::Empty);
    }
    Ok(())
}

fn nodes_score<F: Scalar>(nodes: &[ChartNode], table: &SpanScoreTable<F>, w: &[F]) -> F {
    nodes
        .iter()
        .map(|n| w[n.label] * table.get(n.start, n.end, n.label))
        .fold(F::zero(), |a, b| a + b)
}

/// Weighted sum of the tree's span scores; unit weights give the plain sum.
pub fn tree_score<F: Scalar>(
    tree: &Tree,
    table: &SpanScoreTable<F>,
    labels: &LabelSet,
    weights: &LabelWeights,
) -> Result<F, DecodeError> {
    check_table(table, labels)?;
    if tree.len() != table.len() {
        return Err(DecodeError::LengthMismatch {
            tree: tree.len(),
            table: table.len(),
        });
    }
    let nodes = chart_nodes(tree, labels)?;
    Ok(nodes_score(&nodes, table, &weights.table(labels)))
}

/// CYK over binary trees with null labels. `score(i, j, l)` gives the value
/// of labeling span `(i, j)` with `l`; the root span must be non-null.
/// Ties go to the lowest split point, then the lowest label index.
fn chart_argmax<F: Scalar>(
    n: usize,
    num_labels: usize,
    score: impl Fn(usize, usize, usize) -> F,
) -> (F, Vec<ChartNode>) {
    assert!(n >= 1 && num_labels >= 2);
    let idx = |i: usize, j: usize| crate::model::span_index(n, i, j);
    let m = crate::model::span_count(n);
    let mut best = vec![F::zero(); m];
    let mut best_label = vec![0usize; m];
    let mut best_split = vec![0usize; m];
    for len in 1..=n {
        for i in 0..=n - len {
            let j = i + len;
            let first = if len == n { 1 } else { 0 };
            let mut lab = first;
            let mut lab_score = score(i, j, first);
            for l in first + 1..num_labels {
                let s = score(i, j, l);
                if s > lab_score {
                    lab = l;
                    lab_score = s;
                }
            }
            let mut total = lab_score;
            if len > 1 {
                let mut k_best = i + 1;
                let mut split_score = best[idx(i, i + 1)] + best[idx(i + 1, j)];
                for k in i + 2..j {
                    let s = best[idx(i, k)] + best[idx(k, j)];
                    if s > split_score {
                        k_best = k;
                        split_score = s;
                    }
                }
                best_split[idx(i, j)] = k_best;
                total = lab_score + split_score;
            }
            best[idx(i, j)] = total;
            best_label[idx(i, j)] = lab;
        }
    }
    let mut nodes = Vec::new();
    let mut stack = vec![(0, n)];
    while let Some((i, j)) = stack.pop() {
        let l = best_label[idx(i, j)];
        if l != NULL_LABEL {
            nodes.push(ChartNode {
                start: i,
                end: j,
                label: l,
            });
        }
        if j - i > 1 {
            let k = best_split[idx(i, j)];
            stack.push((k, j));
            stack.push((i, k));
        }
    }
    (best[idx(0, n)], nodes)
}

/// Highest-scoring tree under `weights`. `tokens` supply the leaves.
pub fn cyk_decode<F: Scalar>(
    table: &SpanScoreTable<F>,
    tokens: &[Token],
    labels: &LabelSet,
    weights: &LabelWeights,
) -> Result<Decoded<F>, DecodeError> {
    check_table(table, labels)?;
    if tokens.len() != table.len() {
        return Err(DecodeError::LengthMismatch {
            tree: tokens.len(),
            table: table.len(),
        });
    }
    let w = weights.table::<F>(labels);
    let (score, nodes) = chart_argmax(table.len(), labels.len(), |i, j, l| {
        w[l] * table.get(i, j, l)
    });
    Ok(Decoded {
        tree: tree_from_chart(&nodes, tokens, labels),
        nodes,
        score,
    })
}

/// Size of the symmetric difference of the two labeled-span multisets.
pub fn hamming(pred: &Tree, gold: &Tree) -> Result<usize, MetricsError> {
    check_fringe(0, gold, pred)?;
    let c = span_counts(gold, pred, None);
    Ok(c.gold - c.correct + c.predicted - c.correct)
}

/// Per-span Hamming augmentation. For a chart label with chain `c` on span
/// `(i, j)` whose gold labels form the multiset `G`, the node contributes
/// `|c| - 2 |c ∩ G|`; summed over a tree's nodes and offset by the number of
/// gold spans this equals the Hamming distance to gold exactly.
struct HammingAugment {
    gold_spans: usize,
    gold_at: HashMap<(usize, usize), Vec<String>>,
}

impl HammingAugment {
    fn new(gold: &Tree) -> Self {
        let all = spans(gold);
        let gold_spans = all.len();
        let mut gold_at: HashMap<(usize, usize), Vec<String>> = HashMap::new();
        for s in all {
            gold_at.entry((s.start, s.end)).or_default().push(s.label);
        }
        HammingAugment { gold_spans, gold_at }
    }

    fn cost(&self, i: usize, j: usize, chain: &[String]) -> i64 {
        if chain.is_empty() {
            return 0;
        }
        let matched = match self.gold_at.get(&(i, j)) {
            None => 0,
            Some(g) => {
                let mut pool: Vec<&String> = g.iter().collect();
                chain
                    .iter()
                    .filter(|l| match pool.iter().position(|p| p == l) {
                        Some(k) => {
                            pool.swap_remove(k);
                            true
                        }
                        None => false,
                    })
                    .count()
            }
        };
        chain.len() as i64 - 2 * matched as i64
    }
}

/// The tree maximizing weighted score plus Hamming distance to `gold`.
/// The returned `score` is that objective value.
pub fn loss_augmented_decode<F: Scalar>(
    table: &SpanScoreTable<F>,
    gold: &Tree,
    labels: &LabelSet,
    weights: &LabelWeights,
) -> Result<Decoded<F>, DecodeError> {
    check_table(table, labels)?;
    if gold.len() != table.len() {
        return Err(DecodeError::LengthMismatch {
            tree: gold.len(),
            table: table.len(),
        });
    }
    let w = weights.table::<F>(labels);
    let aug = HammingAugment::new(gold);
    let n = table.len();
    let num_labels = labels.len();
    let mut cost = vec![F::zero(); crate::model::span_count(n) * num_labels];
    for (i, j) in table.spans() {
        let base = crate::model::span_index(n, i, j) * num_labels;
        for l in 1..num_labels {
            cost[base + l] = F::of(aug.cost(i, j, labels.chain(l)) as f64);
        }
    }
    let (dp, nodes) = chart_argmax(n, num_labels, |i, j, l| {
        w[l] * table.get(i, j, l) + cost[crate::model::span_index(n, i, j) * num_labels + l]
    });
    let tokens = gold.fringe();
    Ok(Decoded {
        tree: tree_from_chart(&nodes, &tokens, labels),
        nodes,
        score: dp + F::of(aug.gold_spans as f64),
    })
}

/// Structured hinge loss and its gradient with respect to the table.
#[derive(Debug, Clone)]
pub struct Hinge<F> {
    pub loss: F,
    pub grad: SpanScoreTable<F>,
    pub predicted: Decoded<F>,
    pub gold_score: F,
}

/// `max(0, max_T [s(T) + Δ(T, gold)] - s(gold))` with weighted scores.
pub fn hinge_loss<F: Scalar>(
    table: &SpanScoreTable<F>,
    gold: &Tree,
    labels: &LabelSet,
    weights: &LabelWeights,
) -> Result<Hinge<F>, DecodeError> {
    let gold_nodes = {
        check_table(table, labels)?;
        if gold.len() != table.len() {
            return Err(DecodeError::LengthMismatch {
                tree: gold.len(),
                table: table.len(),
            });
        }
        chart_nodes(gold, labels)?
    };
    let w = weights.table::<F>(labels);
    let gold_score = nodes_score(&gold_nodes, table, &w);
    let predicted = loss_augmented_decode(table, gold, labels, weights)?;
    let margin = predicted.score - gold_score;
    let mut grad = SpanScoreTable::zeros(table.len(), table.num_labels());
    let loss = if margin > F::zero() {
        for n in &predicted.nodes {
            grad.add(n.start, n.end, n.label, w[n.label]);
        }
        for n in &gold_nodes {
            grad.add(n.start, n.end, n.label, -w[n.label]);
        }
        margin
    } else {
        F::zero()
    };
    Ok(Hinge {
        loss,
        grad,
        predicted,
        gold_score,
    })
}
