//! Independent oracles shared by the integration and acceptance tests.
//! Nothing here calls the decoder or the metrics code under test.

#![allow(dead_code)]

use jointparse::model::{backward, forward, ModelConfig, ModelParams, SpanScoreTable};
use jointparse::treebank::Tree;
use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// All unlabeled binary bracketings of `(i, j)` as lists of spans.
pub fn bracketings(i: usize, j: usize) -> Vec<Vec<(usize, usize)>> {
    if j - i == 1 {
        return vec![vec![(i, j)]];
    }
    let mut out = Vec::new();
    for k in i + 1..j {
        for left in bracketings(i, k) {
            for right in bracketings(k, j) {
                let mut v = vec![(i, j)];
                v.extend(left.iter().copied());
                v.extend(right.iter().copied());
                out.push(v);
            }
        }
    }
    out
}

/// Optimum over all labeled binary trees with a non-null root, where
/// each node contributes `score(i, j, l)`. Node labels are chosen
/// independently, so per-bracketing maximization is exhaustive.
pub fn brute_force_best(
    n: usize,
    num_labels: usize,
    score: impl Fn(usize, usize, usize) -> f64,
) -> f64 {
    let mut best = f64::NEG_INFINITY;
    for br in bracketings(0, n) {
        let mut total = 0.0;
        for &(i, j) in &br {
            let first = if (i, j) == (0, n) { 1 } else { 0 };
            let m = (first..num_labels)
                .map(|l| score(i, j, l))
                .fold(f64::NEG_INFINITY, f64::max);
            total += m;
        }
        best = best.max(total);
    }
    best
}

/// Every labeled binary tree over `n` words with a non-null root.
pub fn all_labeled_trees(n: usize, num_labels: usize) -> Vec<Vec<(usize, usize, usize)>> {
    let mut out = Vec::new();
    for br in bracketings(0, n) {
        let total = (num_labels - 1) * num_labels.pow(br.len() as u32 - 1);
        for mut code in 0..total {
            let mut nodes = Vec::with_capacity(br.len());
            for (k, &(i, j)) in br.iter().enumerate() {
                let l = if k == 0 {
                    let l = 1 + code % (num_labels - 1);
                    code /= num_labels - 1;
                    l
                } else {
                    let l = code % num_labels;
                    code /= num_labels;
                    l
                };
                nodes.push((i, j, l));
            }
            out.push(nodes);
        }
    }
    out
}

/// Builds the n-ary tree of a labeled binary tree (preorder node list) by
/// splicing out null nodes. `names[l]` is the label name of `l`.
pub fn nary_from_nodes(nodes: &[(usize, usize, usize)], names: &[&str], words: &[&str]) -> Tree {
    fn build(
        nodes: &[(usize, usize, usize)],
        pos: &mut usize,
        names: &[&str],
        words: &[&str],
    ) -> Vec<Tree> {
        let (i, j, l) = nodes[*pos];
        *pos += 1;
        let children = if j - i == 1 {
            vec![Tree::leaf("X", words[i])]
        } else {
            let mut c = build(nodes, pos, names, words);
            c.extend(build(nodes, pos, names, words));
            c
        };
        if l == 0 {
            children
        } else {
            vec![Tree::internal(names[l], children)]
        }
    }
    let mut pos = 0;
    let mut forest = build(nodes, &mut pos, names, words);
    assert_eq!(forest.len(), 1);
    forest.pop().unwrap()
}

/// Labeled spans of every internal node, sorted.
pub fn span_multiset(t: &Tree) -> Vec<(usize, usize, String)> {
    fn go(t: &Tree, start: usize, out: &mut Vec<(usize, usize, String)>) -> usize {
        match t {
            Tree::Leaf { .. } => start + 1,
            Tree::Internal { label, children } => {
                let mut end = start;
                for c in children {
                    end = go(c, end, out);
                }
                out.push((start, end, label.clone()));
                end
            }
        }
    }
    let mut out = Vec::new();
    go(t, 0, &mut out);
    out.sort();
    out
}

/// Symmetric multiset difference size of the labeled spans.
pub fn hamming_oracle(a: &Tree, b: &Tree) -> usize {
    let (x, y) = (span_multiset(a), span_multiset(b));
    let (mut i, mut j, mut common) = (0, 0, 0);
    while i < x.len() && j < y.len() {
        match x[i].cmp(&y[j]) {
            std::cmp::Ordering::Less => i += 1,
            std::cmp::Ordering::Greater => j += 1,
            std::cmp::Ordering::Equal => {
                common += 1;
                i += 1;
                j += 1;
            }
        }
    }
    x.len() + y.len() - 2 * common
}

pub fn words(n: usize) -> Vec<String> {
    (0..n).map(|i| format!("w{i}")).collect()
}

/// A random labeled binary tree, converted to n-ary form.
pub fn random_tree(rng: &mut impl Rng, n: usize, names: &[&str], words: &[&str]) -> Tree {
    fn go(rng: &mut impl Rng, i: usize, j: usize, n: usize, k: usize, out: &mut Vec<(usize, usize, usize)>) {
        let l = if (i, j) == (0, n) {
            rng.gen_range(1..k)
        } else {
            rng.gen_range(0..k)
        };
        out.push((i, j, l));
        if j - i > 1 {
            let m = rng.gen_range(i + 1..j);
            go(rng, i, m, n, k, out);
            go(rng, m, j, n, k, out);
        }
    }
    let mut nodes = Vec::new();
    go(rng, 0, n, n, names.len(), &mut nodes);
    nary_from_nodes(&nodes, names, words)
}

/// Scalar objective used by the gradient check: a fixed random linear
/// functional of the score table.
pub fn table_functional(table: &SpanScoreTable<f64>, coef: &SpanScoreTable<f64>) -> f64 {
    let mut s = 0.0;
    for (i, j) in table.spans() {
        for l in 1..table.num_labels() {
            s += table.get(i, j, l) * coef.get(i, j, l);
        }
    }
    s
}

pub struct GradCheck {
    pub max_rel_err: f64,
    pub worst: String,
    pub checked: usize,
}

/// Compares analytic gradients of a random functional of the table against
/// central differences for every parameter. Dropout masks are fixed by
/// reseeding the mask stream identically for every forward pass.
pub fn grad_check(params: &ModelParams<f64>, config: &ModelConfig, words: &[usize], seed: u64) -> GradCheck {
    let h = 1e-5;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = words.len();
    let coef = SpanScoreTable::from_fn(n, config.label_count, |_, _, _| rng.gen_range(-1.0..1.0));
    let dropout = config.dropout.attention + config.dropout.relu + config.dropout.residual + config.dropout.embedding > 0.0;
    let eval = |p: &ModelParams<f64>| {
        let mut mask_rng = ChaCha8Rng::seed_from_u64(seed ^ 0xD5);
        let r: Option<&mut dyn RngCore> = if dropout { Some(&mut mask_rng) } else { None };
        let (t, cache) = forward(p, config, words, r).unwrap();
        (table_functional(&t, &coef), cache)
    };
    let (_, cache) = eval(params);
    let grad = backward(params, &cache, &coef).unwrap();
    let names: Vec<String> = grad.tensors().into_iter().map(|(n, _, _)| n).collect();
    let analytic: Vec<Vec<f64>> = grad.tensors().into_iter().map(|(_, _, d)| d.to_vec()).collect();
    let mut out = GradCheck { max_rel_err: 0.0, worst: String::new(), checked: 0 };
    let mut p = params.clone();
    for (t, name) in names.iter().enumerate() {
        for k in 0..analytic[t].len() {
            let orig = p.tensors_mut()[t][k];
            p.tensors_mut()[t][k] = orig + h;
            let (plus, _) = eval(&p);
            p.tensors_mut()[t][k] = orig - h;
            let (minus, _) = eval(&p);
            p.tensors_mut()[t][k] = orig;
            let numeric = (plus - minus) / (2.0 * h);
            let a = analytic[t][k];
            let rel = (a - numeric).abs() / a.abs().max(numeric.abs()).max(1e-5);
            out.checked += 1;
            if rel > out.max_rel_err {
                out.max_rel_err = rel;
                out.worst = format!("{name}[{k}]: analytic {a:e} numeric {numeric:e}");
            }
        }
    }
    out
}

/// A random small model configuration.
pub fn random_tiny_config(rng: &mut impl Rng) -> ModelConfig {
    let heads = rng.gen_range(1..=2);
    let d_model = 2 * heads * rng.gen_range(1..=3);
    let dropout = if rng.gen_bool(0.5) {
        jointparse::model::Dropout {
            attention: rng.gen_range(0.0..0.3),
            relu: rng.gen_range(0.0..0.3),
            residual: rng.gen_range(0.0..0.3),
            embedding: rng.gen_range(0.0..0.3),
        }
    } else {
        jointparse::model::Dropout::NONE
    };
    ModelConfig {
        vocab_size: rng.gen_range(4..=10),
        label_count: rng.gen_range(2..=5),
        d_model,
        d_ff: rng.gen_range(2..=8),
        heads,
        head_dim: if rng.gen_bool(0.3) { Some(rng.gen_range(1..=3)) } else { None },
        layers: rng.gen_range(1..=2),
        label_hidden: rng.gen_range(2..=6),
        max_len: 8,
        dropout,
        seed: rng.gen(),
    }
}
