use ndarray::{s, Array1, Array2, ArrayView1, Axis, Zip};
use rand::{Rng, RngCore};

use super::{ModelConfig, ModelError, ModelParams, SpanScoreTable, Vocab};
use crate::scalar::Scalar;

const LN_EPS: f64 = 1e-9;

struct NormCache<F> {
    xhat: Array2<F>,
    inv_std: Array1<F>,
}

fn layer_norm<F: Scalar>(
    x: &Array2<F>,
    gain: &Array1<F>,
    bias: &Array1<F>,
) -> (Array2<F>, NormCache<F>) {
    let d = F::of(x.ncols() as f64);
    let eps = F::of(LN_EPS);
    let mut xhat = x.clone();
    let mut inv_std = Array1::zeros(x.nrows());
    for (mut row, inv) in xhat.rows_mut().into_iter().zip(inv_std.iter_mut()) {
        let mean = row.sum() / d;
        row.mapv_inplace(|v| v - mean);
        let var = row.iter().map(|v| *v * *v).sum::<F>() / d;
        *inv = F::one() / (var + eps).sqrt();
        let k = *inv;
        row.mapv_inplace(|v| v * k);
    }
    let y = &xhat * gain + bias;
    (y, NormCache { xhat, inv_std })
}

fn layer_norm_backward<F: Scalar>(
    dy: &Array2<F>,
    cache: &NormCache<F>,
    gain: &Array1<F>,
    dgain: &mut Array1<F>,
    dbias: &mut Array1<F>,
) -> Array2<F> {
    *dgain += &(dy * &cache.xhat).sum_axis(Axis(0));
    *dbias += &dy.sum_axis(Axis(0));
    let d = F::of(dy.ncols() as f64);
    let mut dx = dy * gain;
    for ((mut row, xh), inv) in dx
        .rows_mut()
        .into_iter()
        .zip(cache.xhat.rows())
        .zip(cache.inv_std.iter())
    {
        let mean_d = row.sum() / d;
        let mean_dx = row.iter().zip(xh.iter()).map(|(a, b)| *a * *b).sum::<F>() / d;
        Zip::from(&mut row)
            .and(&xh)
            .for_each(|g, &h| *g = (*g - mean_d - h * mean_dx) * *inv);
    }
    dx
}

/// Inverted dropout mask: entries are 0 or `1 / (1 - p)`.
fn dropout_mask<F: Scalar>(
    rng: &mut Option<&mut dyn RngCore>,
    shape: (usize, usize),
    p: f64,
) -> Option<Array2<F>> {
    let rng = rng.as_deref_mut()?;
    if p <= 0.0 {
        return None;
    }
    let keep = F::of(1.0 / (1.0 - p));
    Some(Array2::from_shape_fn(shape, |_| {
        if rng.gen::<f64>() < p {
            F::zero()
        } else {
            keep
        }
    }))
}

fn apply_mask<F: Scalar>(x: &mut Array2<F>, mask: &Option<Array2<F>>) {
    if let Some(m) = mask {
        *x *= m;
    }
}

fn row_bias<F: Scalar>(x: &mut Array2<F>, b: &Array1<F>) {
    *x += &b.view().insert_axis(Axis(0));
}

struct LayerCache<F> {
    attn_norm: NormCache<F>,
    attn_in: Array2<F>,
    q: Array2<F>,
    k: Array2<F>,
    v: Array2<F>,
    probs: Vec<Array2<F>>,
    attn_masks: Vec<Option<Array2<F>>>,
    heads_out: Array2<F>,
    attn_res_mask: Option<Array2<F>>,
    ff_norm: NormCache<F>,
    ff_in: Array2<F>,
    ff_pre: Array2<F>,
    relu_mask: Option<Array2<F>>,
    ff_act: Array2<F>,
    ff_res_mask: Option<Array2<F>>,
}

/// Activations of one encoder pass, kept for backpropagation.
pub struct EncoderCache<F> {
    ids: Vec<usize>,
    heads: usize,
    head_dim: usize,
    emb_mask: Option<Array2<F>>,
    layers: Vec<LayerCache<F>>,
    final_norm: NormCache<F>,
    /// One row per padded position (boundary, words, boundary).
    pub output: Array2<F>,
}

impl<F: Scalar> EncoderCache<F> {
    /// Sentence length in words.
    pub fn len(&self) -> usize {
        self.ids.len() - 2
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Attention distribution of `head` in `layer`, before dropout.
    pub fn attention(&self, layer: usize, head: usize) -> &Array2<F> {
        &self.layers[layer].probs[head]
    }
}

/// Runs the encoder over word ids. The sequence is padded with boundary
/// markers, so the output has `len + 2` rows. Dropout is applied only when
/// `rng` is given; masks are drawn from it in a fixed order.
pub fn encode<F: Scalar>(
    params: &ModelParams<F>,
    config: &ModelConfig,
    words: &[usize],
    mut rng: Option<&mut dyn RngCore>,
) -> Result<EncoderCache<F>, ModelError> {
    if words.is_empty() {
        return Err(ModelError::Empty);
    }
    if words.len() > config.max_len {
        return Err(ModelError::TooLong {
            len: words.len(),
            max: config.max_len,
        });
    }
    let vocab = params.word_embedding.nrows();
    let mut ids = Vec::with_capacity(words.len() + 2);
    ids.push(Vocab::BOS);
    ids.extend(words.iter().map(|&w| if w < vocab { w } else { Vocab::UNK }));
    ids.push(Vocab::EOS);

    let t = ids.len();
    let d = config.d_model;
    let (heads, hd) = (config.heads, config.head_dim());
    let dp = &config.dropout;

    let mut x = Array2::zeros((t, d));
    for (pos, (&id, mut row)) in ids.iter().zip(x.rows_mut()).enumerate() {
        row.assign(&(&params.word_embedding.row(id) + &params.position_embedding.row(pos)));
    }
    let emb_mask = dropout_mask(&mut rng, (t, d), dp.embedding);
    apply_mask(&mut x, &emb_mask);

    let scale = F::one() / F::of(hd as f64).sqrt();
    let mut layers = Vec::with_capacity(params.layers.len());
    for lp in &params.layers {
        let (attn_in, attn_norm) = layer_norm(&x, &lp.attn_norm_gain, &lp.attn_norm_bias);
        let q = attn_in.dot(&lp.query);
        let k = attn_in.dot(&lp.key);
        let v = attn_in.dot(&lp.value);
        let mut heads_out = Array2::zeros((t, heads * hd));
        let mut probs = Vec::with_capacity(heads);
        let mut attn_masks = Vec::with_capacity(heads);
        for h in 0..heads {
            let cols = s![.., h * hd..(h + 1) * hd];
            let mut p = q.slice(cols).dot(&k.slice(cols).t()) * scale;
            for mut row in p.rows_mut() {
                let max = row.fold(F::neg_infinity(), |m, &v| m.max(v));
                row.mapv_inplace(|v| (v - max).exp());
                let z = row.sum();
                row.mapv_inplace(|v| v / z);
            }
            let mask = dropout_mask(&mut rng, (t, t), dp.attention);
            let mut pd = p.clone();
            apply_mask(&mut pd, &mask);
            heads_out.slice_mut(cols).assign(&pd.dot(&v.slice(cols)));
            probs.push(p);
            attn_masks.push(mask);
        }
        let mut z = heads_out.dot(&lp.output);
        let attn_res_mask = dropout_mask(&mut rng, (t, d), dp.residual);
        apply_mask(&mut z, &attn_res_mask);
        x += &z;

        let (ff_in, ff_norm) = layer_norm(&x, &lp.ff_norm_gain, &lp.ff_norm_bias);
        let mut ff_pre = ff_in.dot(&lp.ff_in);
        row_bias(&mut ff_pre, &lp.ff_in_bias);
        let mut ff_act = ff_pre.mapv(|v| v.max(F::zero()));
        let relu_mask = dropout_mask(&mut rng, ff_act.dim(), dp.relu);
        apply_mask(&mut ff_act, &relu_mask);
        let mut y = ff_act.dot(&lp.ff_out);
        row_bias(&mut y, &lp.ff_out_bias);
        let ff_res_mask = dropout_mask(&mut rng, (t, d), dp.residual);
        apply_mask(&mut y, &ff_res_mask);
        x += &y;

        layers.push(LayerCache {
            attn_norm,
            attn_in,
            q,
            k,
            v,
            probs,
            attn_masks,
            heads_out,
            attn_res_mask,
            ff_norm,
            ff_in,
            ff_pre,
            relu_mask,
            ff_act,
            ff_res_mask,
        });
    }
    let (output, final_norm) = layer_norm(&x, &params.final_norm_gain, &params.final_norm_bias);
    Ok(EncoderCache {
        ids,
        heads,
        head_dim: hd,
        emb_mask,
        layers,
        final_norm,
        output,
    })
}

/// Span classifier activations.
pub struct SpanCache<F> {
    n: usize,
    reps: Array2<F>,
    hidden_pre: Array2<F>,
    hidden: Array2<F>,
}

fn span_list(n: usize) -> impl Iterator<Item = (usize, usize)> {
    (0..n).flat_map(move |i| (i + 1..=n).map(move |j| (i, j)))
}

/// Scores every span of the sentence. A span `(i, j)` is represented by
/// the difference of forward halves at fenceposts `j` and `i` concatenated
/// with the difference of backward halves at `i + 1` and `j + 1`, then fed
/// through one ReLU layer and a linear layer over the non-null labels.
pub fn span_scores<F: Scalar>(
    encoded: &Array2<F>,
    params: &ModelParams<F>,
) -> (SpanScoreTable<F>, SpanCache<F>) {
    let n = encoded.nrows() - 2;
    let d = encoded.ncols();
    let half = d / 2;
    let num_spans = super::span_count(n);
    let mut reps = Array2::zeros((num_spans, d));
    for (row, (i, j)) in reps.rows_mut().into_iter().zip(span_list(n)) {
        let mut row = row;
        let fw = &encoded.slice(s![j, ..half]) - &encoded.slice(s![i, ..half]);
        let bw = &encoded.slice(s![i + 1, half..]) - &encoded.slice(s![j + 1, half..]);
        row.slice_mut(s![..half]).assign(&fw);
        row.slice_mut(s![half..]).assign(&bw);
    }
    let mut hidden_pre = reps.dot(&params.span_hidden);
    row_bias(&mut hidden_pre, &params.span_hidden_bias);
    let hidden = hidden_pre.mapv(|v| v.max(F::zero()));
    let mut out = hidden.dot(&params.span_out);
    row_bias(&mut out, &params.span_out_bias);
    let num_labels = out.ncols() + 1;
    let mut table = SpanScoreTable::zeros(n, num_labels);
    for (row, (i, j)) in out.rows().into_iter().zip(span_list(n)) {
        for (l, &v) in row.iter().enumerate() {
            table.set(i, j, l + 1, v);
        }
    }
    (
        table,
        SpanCache {
            n,
            reps,
            hidden_pre,
            hidden,
        },
    )
}

/// Everything needed to backpropagate one sentence.
pub struct ForwardCache<F> {
    pub encoder: EncoderCache<F>,
    pub spans: SpanCache<F>,
}

/// Encoder plus span classifier.
pub fn forward<F: Scalar>(
    params: &ModelParams<F>,
    config: &ModelConfig,
    words: &[usize],
    rng: Option<&mut dyn RngCore>,
) -> Result<(SpanScoreTable<F>, ForwardCache<F>), ModelError> {
    let encoder = encode(params, config, words, rng)?;
    let (table, spans) = span_scores(&encoder.output, params);
    Ok((table, ForwardCache { encoder, spans }))
}

fn relu_grad<F: Scalar>(upstream: &mut Array2<F>, pre: &Array2<F>) {
    Zip::from(upstream).and(pre).for_each(|g, &p| {
        if p <= F::zero() {
            *g = F::zero()
        }
    });
}

fn add_outer<F: Scalar>(acc: &mut Array2<F>, a: &Array2<F>, b: &Array2<F>) {
    ndarray::linalg::general_mat_mul(F::one(), &a.t(), b, F::one(), acc);
}

fn add_rows<F: Scalar>(acc: &mut Array1<F>, g: &Array2<F>) {
    *acc += &g.sum_axis(Axis(0));
}

fn add_row<F: Scalar>(acc: &mut Array2<F>, row: usize, g: ArrayView1<F>) {
    let mut r = acc.row_mut(row);
    r += &g;
}

/// Gradients of all parameters given the gradient of some scalar with
/// respect to every entry of the score table (null entries are ignored).
pub fn backward<F: Scalar>(
    params: &ModelParams<F>,
    cache: &ForwardCache<F>,
    dtable: &SpanScoreTable<F>,
) -> Result<ModelParams<F>, ModelError> {
    let sc = &cache.spans;
    let ec = &cache.encoder;
    let num_labels = params.span_out.ncols() + 1;
    if dtable.len() != sc.n || dtable.num_labels() != num_labels {
        return Err(ModelError::CacheMismatch {
            got: (dtable.len(), dtable.num_labels()),
            want: (sc.n, num_labels),
        });
    }
    let mut g = zeros_like(params);

    // span classifier
    let mut dout = Array2::zeros((sc.reps.nrows(), num_labels - 1));
    for (mut row, (i, j)) in dout.rows_mut().into_iter().zip(span_list(sc.n)) {
        for (l, v) in row.iter_mut().enumerate() {
            *v = dtable.get(i, j, l + 1);
        }
    }
    add_outer(&mut g.span_out, &sc.hidden, &dout);
    add_rows(&mut g.span_out_bias, &dout);
    let mut dhidden = dout.dot(&params.span_out.t());
    relu_grad(&mut dhidden, &sc.hidden_pre);
    add_outer(&mut g.span_hidden, &sc.reps, &dhidden);
    add_rows(&mut g.span_hidden_bias, &dhidden);
    let dreps = dhidden.dot(&params.span_hidden.t());

    let d = ec.output.ncols();
    let half = d / 2;
    let mut dencoded = Array2::<F>::zeros(ec.output.dim());
    for (row, (i, j)) in dreps.rows().into_iter().zip(span_list(sc.n)) {
        let fw = row.slice(s![..half]);
        let bw = row.slice(s![half..]);
        {
            let mut r = dencoded.slice_mut(s![j, ..half]);
            r += &fw;
        }
        {
            let mut r = dencoded.slice_mut(s![i, ..half]);
            r -= &fw;
        }
        {
            let mut r = dencoded.slice_mut(s![i + 1, half..]);
            r += &bw;
        }
        {
            let mut r = dencoded.slice_mut(s![j + 1, half..]);
            r -= &bw;
        }
    }

    // encoder
    let mut dx = layer_norm_backward(
        &dencoded,
        &ec.final_norm,
        &params.final_norm_gain,
        &mut g.final_norm_gain,
        &mut g.final_norm_bias,
    );
    let (heads, hd) = (ec.heads, ec.head_dim);
    let scale = F::one() / F::of(hd as f64).sqrt();
    for (li, lc) in ec.layers.iter().enumerate().rev() {
        let lp = &params.layers[li];
        let lg = &mut g.layers[li];

        // feed-forward sublayer
        let mut dy = dx.clone();
        apply_mask(&mut dy, &lc.ff_res_mask);
        add_outer(&mut lg.ff_out, &lc.ff_act, &dy);
        add_rows(&mut lg.ff_out_bias, &dy);
        let mut dact = dy.dot(&lp.ff_out.t());
        apply_mask(&mut dact, &lc.relu_mask);
        relu_grad(&mut dact, &lc.ff_pre);
        add_outer(&mut lg.ff_in, &lc.ff_in, &dact);
        add_rows(&mut lg.ff_in_bias, &dact);
        let dffin = dact.dot(&lp.ff_in.t());
        dx += &layer_norm_backward(
            &dffin,
            &lc.ff_norm,
            &lp.ff_norm_gain,
            &mut lg.ff_norm_gain,
            &mut lg.ff_norm_bias,
        );

        // attention sublayer
        let mut dz = dx.clone();
        apply_mask(&mut dz, &lc.attn_res_mask);
        add_outer(&mut lg.output, &lc.heads_out, &dz);
        let dheads = dz.dot(&lp.output.t());
        let mut dq = Array2::zeros(lc.q.dim());
        let mut dk = Array2::zeros(lc.k.dim());
        let mut dv = Array2::zeros(lc.v.dim());
        for h in 0..heads {
            let cols = s![.., h * hd..(h + 1) * hd];
            let p = &lc.probs[h];
            let mut pd = p.clone();
            apply_mask(&mut pd, &lc.attn_masks[h]);
            let dho = dheads.slice(cols);
            let vh = lc.v.slice(cols);
            let mut dp = dho.dot(&vh.t());
            dv.slice_mut(cols).assign(&pd.t().dot(&dho));
            apply_mask(&mut dp, &lc.attn_masks[h]);
            // softmax backward, then the 1/sqrt(head_dim) scale
            let mut ds = dp;
            for (mut drow, prow) in ds.rows_mut().into_iter().zip(p.rows()) {
                let dot = drow.iter().zip(prow.iter()).map(|(a, b)| *a * *b).sum::<F>();
                Zip::from(&mut drow)
                    .and(&prow)
                    .for_each(|g, &pv| *g = pv * (*g - dot) * scale);
            }
            dq.slice_mut(cols).assign(&ds.dot(&lc.k.slice(cols)));
            dk.slice_mut(cols).assign(&ds.t().dot(&lc.q.slice(cols)));
        }
        add_outer(&mut lg.query, &lc.attn_in, &dq);
        add_outer(&mut lg.key, &lc.attn_in, &dk);
        add_outer(&mut lg.value, &lc.attn_in, &dv);
        let mut dattn_in = dq.dot(&lp.query.t());
        ndarray::linalg::general_mat_mul(F::one(), &dk, &lp.key.t(), F::one(), &mut dattn_in);
        ndarray::linalg::general_mat_mul(F::one(), &dv, &lp.value.t(), F::one(), &mut dattn_in);
        dx += &layer_norm_backward(
            &dattn_in,
            &lc.attn_norm,
            &lp.attn_norm_gain,
            &mut lg.attn_norm_gain,
            &mut lg.attn_norm_bias,
        );
    }

    apply_mask(&mut dx, &ec.emb_mask);
    for (pos, (&id, row)) in ec.ids.iter().zip(dx.rows()).enumerate() {
        add_row(&mut g.word_embedding, id, row);
        add_row(&mut g.position_embedding, pos, row);
    }
    Ok(g)
}

fn zeros_like<F: Scalar>(p: &ModelParams<F>) -> ModelParams<F> {
    let mut z = p.clone();
    z.visit_mut(|s| s.iter_mut().for_each(|x| *x = F::zero()));
    z
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::Dropout;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    pub(crate) fn tiny(seed: u64) -> ModelConfig {
        ModelConfig {
            vocab_size: 9,
            label_count: 4,
            d_model: 8,
            d_ff: 10,
            heads: 2,
            head_dim: None,
            layers: 2,
            label_hidden: 6,
            max_len: 8,
            dropout: Dropout::NONE,
            seed,
        }
    }

    #[test]
    fn shapes_and_normalization() {
        let c = tiny(3);
        let p = ModelParams::<f64>::init(&c).unwrap();
        let words = [3, 4, 5, 8, 3];
        let enc = encode(&p, &c, &words, None).unwrap();
        assert_eq!(enc.output.dim(), (7, 8));
        for l in 0..2 {
            for h in 0..2 {
                for row in enc.attention(l, h).rows() {
                    assert!((row.sum() - 1.0).abs() < 1e-6);
                }
            }
        }
        // unit gain, zero bias: the final norm output itself is normalized
        for row in enc.output.rows() {
            let mean = row.mean().unwrap();
            let var = row.mapv(|v| (v - mean) * (v - mean)).mean().unwrap();
            assert!(mean.abs() < 1e-5 && (var - 1.0).abs() < 1e-5, "{mean} {var}");
        }
        let (table, _) = span_scores(&enc.output, &p);
        assert_eq!(table.span_count(), 15);
        assert!(table.is_finite());
        for (i, j) in table.spans() {
            assert_eq!(table.get(i, j, 0), 0.0);
        }
    }

    #[test]
    fn errors() {
        let c = tiny(3);
        let p = ModelParams::<f64>::init(&c).unwrap();
        assert!(matches!(encode(&p, &c, &[], None), Err(ModelError::Empty)));
        assert!(matches!(
            encode(&p, &c, &[3; 9], None),
            Err(ModelError::TooLong { len: 9, max: 8 })
        ));
        // out-of-vocabulary ids fall back to UNK
        let a = encode(&p, &c, &[100], None).unwrap();
        let b = encode(&p, &c, &[Vocab::UNK], None).unwrap();
        assert_eq!(a.output, b.output);
        let (_, cache) = forward(&p, &c, &[3, 4], None).unwrap();
        let wrong = SpanScoreTable::zeros(3, 4);
        assert!(matches!(
            backward(&p, &cache, &wrong),
            Err(ModelError::CacheMismatch { .. })
        ));
    }

    #[test]
    fn deterministic_without_dropout() {
        let c = tiny(5);
        let p = ModelParams::<f64>::init(&c).unwrap();
        let (a, _) = forward(&p, &c, &[3, 4, 5], None).unwrap();
        let (b, _) = forward(&p, &c, &[3, 4, 5], None).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn dropout_depends_only_on_rng_state() {
        let mut c = tiny(5);
        c.dropout = Dropout { attention: 0.2, relu: 0.2, residual: 0.2, embedding: 0.2 };
        let p = ModelParams::<f64>::init(&c).unwrap();
        let mut r1 = ChaCha8Rng::seed_from_u64(9);
        let mut r2 = ChaCha8Rng::seed_from_u64(9);
        let (a, _) = forward(&p, &c, &[3, 4, 5], Some(&mut r1)).unwrap();
        let (b, _) = forward(&p, &c, &[3, 4, 5], Some(&mut r2)).unwrap();
        assert_eq!(a, b);
        let (e, _) = forward(&p, &c, &[3, 4, 5], None).unwrap();
        assert_ne!(a, e);
    }

    #[test]
    fn zero_upstream_gives_zero_gradients() {
        let c = tiny(2);
        let p = ModelParams::<f64>::init(&c).unwrap();
        let (table, cache) = forward(&p, &c, &[3, 4, 5, 6], None).unwrap();
        let zero = SpanScoreTable::zeros(table.len(), table.num_labels());
        assert!(backward(&p, &cache, &zero).unwrap().is_zero());
    }

    #[test]
    fn unused_embedding_rows_get_no_gradient() {
        let c = tiny(2);
        let p = ModelParams::<f64>::init(&c).unwrap();
        let words = [3, 5];
        let (table, cache) = forward(&p, &c, &words, None).unwrap();
        let ones = SpanScoreTable::from_fn(table.len(), table.num_labels(), |_, _, _| 1.0);
        let g = backward(&p, &cache, &ones).unwrap();
        for id in 0..c.vocab_size {
            let used = id == Vocab::BOS || id == Vocab::EOS || words.contains(&id);
            let norm: f64 = g.word_embedding.row(id).iter().map(|v| v * v).sum();
            assert_eq!(norm > 0.0, used, "row {id}");
        }
        for pos in 4..c.max_len + 2 {
            assert!(g.position_embedding.row(pos).iter().all(|v| *v == 0.0));
        }
    }

    #[test]
    fn vocabulary_permutation_invariance() {
        let c = tiny(4);
        let p = ModelParams::<f64>::init(&c).unwrap();
        // swap ids 3 and 7 together with their embedding rows
        let mut q = p.clone();
        let r3 = p.word_embedding.row(3).to_owned();
        let r7 = p.word_embedding.row(7).to_owned();
        q.word_embedding.row_mut(3).assign(&r7);
        q.word_embedding.row_mut(7).assign(&r3);
        let (a, _) = forward(&p, &c, &[3, 4, 7, 3], None).unwrap();
        let (b, _) = forward(&q, &c, &[7, 4, 3, 7], None).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn f32_forward_runs() {
        let c = tiny(1);
        let p = ModelParams::<f32>::init(&c).unwrap();
        let (t, cache) = forward(&p, &c, &[3, 4, 5], None).unwrap();
        assert!(t.is_finite());
        let g = backward(&p, &cache, &t).unwrap();
        assert!(g.is_finite());
    }
}
