use ndarray::{Array1, Array2, ArrayD, IxDyn};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{ModelConfig, ModelError};
use crate::scalar::Scalar;

/// Parameters of one pre-norm encoder layer.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerParams<F> {
    pub attn_norm_gain: Array1<F>,
    pub attn_norm_bias: Array1<F>,
    /// `d_model x attn_dim`; head `h` owns columns `h*head_dim..(h+1)*head_dim`.
    pub query: Array2<F>,
    pub key: Array2<F>,
    pub value: Array2<F>,
    /// `attn_dim x d_model`.
    pub output: Array2<F>,
    pub ff_norm_gain: Array1<F>,
    pub ff_norm_bias: Array1<F>,
    pub ff_in: Array2<F>,
    pub ff_in_bias: Array1<F>,
    pub ff_out: Array2<F>,
    pub ff_out_bias: Array1<F>,
}

/// Every trainable tensor. Gradients use the same type.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams<F> {
    pub word_embedding: Array2<F>,
    /// One row per padded position: boundary, words, boundary.
    pub position_embedding: Array2<F>,
    pub layers: Vec<LayerParams<F>>,
    pub final_norm_gain: Array1<F>,
    pub final_norm_bias: Array1<F>,
    /// `d_model x label_hidden`.
    pub span_hidden: Array2<F>,
    pub span_hidden_bias: Array1<F>,
    /// `label_hidden x (label_count - 1)`; the null label has no column.
    pub span_out: Array2<F>,
    pub span_out_bias: Array1<F>,
}

macro_rules! layer_fields {
    ($m:ident) => {
        $m!(
            attn_norm_gain,
            attn_norm_bias,
            query,
            key,
            value,
            output,
            ff_norm_gain,
            ff_norm_bias,
            ff_in,
            ff_in_bias,
            ff_out,
            ff_out_bias
        )
    };
}

impl<F: Scalar> LayerParams<F> {
    fn zeros(c: &ModelConfig) -> Self {
        let (d, a, ff) = (c.d_model, c.attn_dim(), c.d_ff);
        LayerParams {
            attn_norm_gain: Array1::zeros(d),
            attn_norm_bias: Array1::zeros(d),
            query: Array2::zeros((d, a)),
            key: Array2::zeros((d, a)),
            value: Array2::zeros((d, a)),
            output: Array2::zeros((a, d)),
            ff_norm_gain: Array1::zeros(d),
            ff_norm_bias: Array1::zeros(d),
            ff_in: Array2::zeros((d, ff)),
            ff_in_bias: Array1::zeros(ff),
            ff_out: Array2::zeros((ff, d)),
            ff_out_bias: Array1::zeros(d),
        }
    }
}

fn uniform2<F: Scalar>(rng: &mut impl Rng, rows: usize, cols: usize, bound: f64) -> Array2<F> {
    Array2::from_shape_fn((rows, cols), |_| F::of(rng.gen_range(-bound..bound)))
}

fn glorot<F: Scalar>(rng: &mut impl Rng, rows: usize, cols: usize) -> Array2<F> {
    uniform2(rng, rows, cols, (6.0 / (rows + cols) as f64).sqrt())
}

impl<F: Scalar> ModelParams<F> {
    /// All-zero tensors with the shapes implied by `config`.
    pub fn zeros(c: &ModelConfig) -> Self {
        let d = c.d_model;
        ModelParams {
            word_embedding: Array2::zeros((c.vocab_size, d)),
            position_embedding: Array2::zeros((c.max_len + 2, d)),
            layers: (0..c.layers).map(|_| LayerParams::zeros(c)).collect(),
            final_norm_gain: Array1::zeros(d),
            final_norm_bias: Array1::zeros(d),
            span_hidden: Array2::zeros((d, c.label_hidden)),
            span_hidden_bias: Array1::zeros(c.label_hidden),
            span_out: Array2::zeros((c.label_hidden, c.label_count - 1)),
            span_out_bias: Array1::zeros(c.label_count - 1),
        }
    }

    /// Random initialization from `config.seed`.
    pub fn init(c: &ModelConfig) -> Result<Self, ModelError> {
        c.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(c.seed);
        let d = c.d_model;
        let emb_bound = (3.0 / d as f64).sqrt();
        let mut p = Self::zeros(c);
        p.word_embedding = uniform2(&mut rng, c.vocab_size, d, emb_bound);
        p.position_embedding = uniform2(&mut rng, c.max_len + 2, d, emb_bound);
        for layer in &mut p.layers {
            layer.attn_norm_gain.fill(F::one());
            layer.ff_norm_gain.fill(F::one());
            layer.query = glorot(&mut rng, d, c.attn_dim());
            layer.key = glorot(&mut rng, d, c.attn_dim());
            layer.value = glorot(&mut rng, d, c.attn_dim());
            layer.output = glorot(&mut rng, c.attn_dim(), d);
            layer.ff_in = glorot(&mut rng, d, c.d_ff);
            layer.ff_out = glorot(&mut rng, c.d_ff, d);
        }
        p.final_norm_gain.fill(F::one());
        p.span_hidden = glorot(&mut rng, d, c.label_hidden);
        p.span_out = glorot(&mut rng, c.label_hidden, c.label_count - 1);
        Ok(p)
    }

    /// Every tensor in declaration order: name, shape and flat data.
    pub fn tensors(&self) -> Vec<(String, &[usize], &[F])> {
        let mut out: Vec<(String, &[usize], &[F])> = Vec::new();
        macro_rules! v {
            ($name:expr, $t:expr) => {
                out.push(($name.to_string(), $t.shape(), $t.as_slice().expect("standard layout")))
            };
        }
        v!("word_embedding", self.word_embedding);
        v!("position_embedding", self.position_embedding);
        for (i, layer) in self.layers.iter().enumerate() {
            macro_rules! each {
                ($($field:ident),*) => {
                    $( v!(format!("layers.{i}.{}", stringify!($field)), layer.$field); )*
                };
            }
            layer_fields!(each);
        }
        v!("final_norm_gain", self.final_norm_gain);
        v!("final_norm_bias", self.final_norm_bias);
        v!("span_hidden", self.span_hidden);
        v!("span_hidden_bias", self.span_hidden_bias);
        v!("span_out", self.span_out);
        v!("span_out_bias", self.span_out_bias);
        out
    }

    /// Mutable flat views of every tensor, in the order of [`tensors`](Self::tensors).
    pub fn tensors_mut(&mut self) -> Vec<&mut [F]> {
        let mut out: Vec<&mut [F]> = Vec::new();
        macro_rules! v {
            ($t:expr) => {
                out.push($t.as_slice_mut().expect("standard layout"))
            };
        }
        v!(self.word_embedding);
        v!(self.position_embedding);
        for layer in self.layers.iter_mut() {
            macro_rules! each {
                ($($field:ident),*) => {
                    $( v!(layer.$field); )*
                };
            }
            layer_fields!(each);
        }
        v!(self.final_norm_gain);
        v!(self.final_norm_bias);
        v!(self.span_hidden);
        v!(self.span_hidden_bias);
        v!(self.span_out);
        v!(self.span_out_bias);
        out
    }

    pub fn visit(&self, mut f: impl FnMut(&str, &[usize], &[F])) {
        for (name, shape, data) in self.tensors() {
            f(&name, shape, data);
        }
    }

    pub fn visit_mut(&mut self, mut f: impl FnMut(&mut [F])) {
        for t in self.tensors_mut() {
            f(t);
        }
    }

    /// Visits matching tensors of `self` (mutably) and `other` in lockstep.
    pub fn zip_mut(&mut self, other: &ModelParams<F>, mut f: impl FnMut(&mut [F], &[F])) {
        let theirs = other.tensors();
        let mine = self.tensors_mut();
        assert_eq!(mine.len(), theirs.len(), "same structure");
        for (a, (_, _, b)) in mine.into_iter().zip(theirs) {
            assert_eq!(a.len(), b.len(), "same shape");
            f(a, b);
        }
    }

    pub fn tensor_count(&self) -> usize {
        let mut n = 0;
        self.visit(|_, _, _| n += 1);
        n
    }

    pub fn param_count(&self) -> usize {
        let mut n = 0;
        self.visit(|_, _, s| n += s.len());
        n
    }

    /// Tensors as owned n-dimensional arrays, in declaration order.
    pub fn to_tensors(&self) -> Vec<(String, ArrayD<F>)> {
        let mut out = Vec::new();
        self.visit(|name, shape, data| {
            out.push((
                name.to_string(),
                ArrayD::from_shape_vec(IxDyn(shape), data.to_vec()).expect("shape"),
            ))
        });
        out
    }

    pub fn is_finite(&self) -> bool {
        let mut ok = true;
        self.visit(|_, _, s| ok &= s.iter().all(|x| x.is_finite()));
        ok
    }

    pub fn add_assign(&mut self, other: &ModelParams<F>) {
        self.zip_mut(other, |a, b| a.iter_mut().zip(b).for_each(|(x, y)| *x += *y));
    }

    pub fn scale(&mut self, k: F) {
        self.visit_mut(|s| s.iter_mut().for_each(|x| *x *= k));
    }

    pub fn sum_squares(&self) -> F {
        let mut acc = F::zero();
        self.visit(|_, _, s| acc += s.iter().map(|x| *x * *x).sum::<F>());
        acc
    }

    pub fn is_zero(&self) -> bool {
        let mut z = true;
        self.visit(|_, _, s| z &= s.iter().all(|x| x.is_zero()));
        z
    }
}
