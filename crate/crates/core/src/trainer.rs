//! Mini-batch training with a structured hinge loss, Adam, linear warmup
//! and step decay driven by dev-set F(S_E).

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::PathBuf;

use rand::seq::SliceRandom;
use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::decoder::{cyk_decode, hinge_loss, DecodeError, LabelSet, LabelWeights};
use crate::metrics::{corpus_report, MetricReport, MetricsError};
use crate::model::{
    backward, forward, save_checkpoint, Checkpoint, CheckpointError, Header, ModelConfig,
    ModelError, ModelParams, Vocab,
};
use crate::transforms::TransformMode;
use crate::treebank::{serialize, Preprocess, Token, Tree};
use crate::{derive_seed, Params};

#[derive(Debug, Error)]
pub enum TrainError {
    #[error("invalid training config: {0}")]
    Config(String),
    #[error("{0} corpus is empty")]
    EmptyCorpus(&'static str),
    #[error("non-finite loss at step {step} on sentence {sentence}")]
    NonFinite { step: u64, sentence: String },
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Decode(#[from] DecodeError),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
    #[error(transparent)]
    Checkpoint(#[from] CheckpointError),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub warmup_steps: u64,
    pub decay_factor: f64,
    /// Evaluations without a dev F(S_E) improvement before the rate decays.
    pub patience: usize,
    pub batch_size: usize,
    pub max_epochs: usize,
    pub weights: LabelWeights,
    /// Evaluate every this many updates; once per epoch when absent.
    pub eval_every: Option<u64>,
    pub seed: u64,
    /// Training stops once decay pushes the rate below this floor.
    pub min_learning_rate: f64,
    /// Where `log.jsonl`, `step-N.bin` and `best.bin` go; nothing is
    /// written when absent.
    pub out_dir: Option<PathBuf>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self::desk()
    }
}

impl TrainConfig {
    /// Learning rate 0.0006, 110 warmup steps, decay factor 0.52 and label
    /// weights (2, 0.7).
    pub fn paper() -> Self {
        TrainConfig {
            learning_rate: 0.0006,
            warmup_steps: 110,
            decay_factor: 0.52,
            patience: 2,
            batch_size: 32,
            max_epochs: 30,
            weights: LabelWeights::EDITED_EMPHASIS,
            eval_every: None,
            seed: 1,
            min_learning_rate: 1e-6,
            out_dir: None,
        }
    }

    /// Settings that reach high dev accuracy on the synthetic corpus with
    /// the desk model in a couple of CPU minutes.
    pub fn desk() -> Self {
        TrainConfig {
            learning_rate: 0.003,
            warmup_steps: 100,
            patience: 5,
            batch_size: 16,
            max_epochs: 80,
            min_learning_rate: 1e-5,
            ..Self::paper()
        }
    }

    pub fn validate(&self) -> Result<(), TrainError> {
        let err = |m: &str| Err(TrainError::Config(m.to_string()));
        if !(self.learning_rate > 0.0) {
            return err("learning_rate must be positive");
        }
        if !(self.decay_factor > 0.0 && self.decay_factor < 1.0) {
            return err("decay_factor must be in (0, 1)");
        }
        if self.batch_size == 0 {
            return err("batch_size must be at least 1");
        }
        if self.eval_every == Some(0) {
            return err("eval_every must be at least 1");
        }
        if !(self.weights.edited_weight > 0.0 && self.weights.default_weight > 0.0) {
            return err("label weights must be positive");
        }
        Ok(())
    }
}

/// Learning rate for the 1-based update `step`, before decay.
pub fn warmup_rate(base: f64, warmup: u64, step: u64) -> f64 {
    if warmup == 0 || step >= warmup {
        base
    } else {
        base * step as f64 / warmup as f64
    }
}

/// Adam with β1 = 0.9, β2 = 0.999, ε = 1e-8.
#[derive(Debug, Clone)]
pub struct Adam {
    m: Params,
    v: Params,
    t: i32,
}

impl Adam {
    const BETA1: f64 = 0.9;
    const BETA2: f64 = 0.999;
    const EPS: f64 = 1e-8;

    pub fn new(config: &ModelConfig) -> Self {
        Adam {
            m: ModelParams::zeros(config),
            v: ModelParams::zeros(config),
            t: 0,
        }
    }

    pub fn step(&mut self, params: &mut Params, grad: &Params, lr: f64) {
        self.t += 1;
        let c1 = 1.0 - Self::BETA1.powi(self.t);
        let c2 = 1.0 - Self::BETA2.powi(self.t);
        let grads = grad.tensors();
        for (((p, m), v), (_, _, g)) in params
            .tensors_mut()
            .into_iter()
            .zip(self.m.tensors_mut())
            .zip(self.v.tensors_mut())
            .zip(grads)
        {
            for k in 0..p.len() {
                m[k] = Self::BETA1 * m[k] + (1.0 - Self::BETA1) * g[k];
                v[k] = Self::BETA2 * v[k] + (1.0 - Self::BETA2) * g[k] * g[k];
                p[k] -= lr * (m[k] / c1) / ((v[k] / c2).sqrt() + Self::EPS);
            }
        }
    }
}

/// One record of `log.jsonl`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogRecord {
    pub step: u64,
    pub epoch: usize,
    pub learning_rate: f64,
    /// Mean per-sentence training loss since the previous evaluation.
    pub train_loss: f64,
    pub f_s: f64,
    pub p_se: f64,
    pub r_se: f64,
    pub f_se: f64,
    pub f_we: f64,
    pub f_weip: f64,
    /// Dev sentences skipped for exceeding the model's maximum length.
    pub skipped: usize,
}

impl LogRecord {
    /// Selection key: dev F(S_E), with F(S) breaking ties. While no EDITED
    /// span is found yet F(S_E) is flat at zero; F(S) still tracks progress.
    pub fn selection_key(&self) -> (f64, f64) {
        (self.f_se, self.f_s)
    }
}

fn beats(a: (f64, f64), b: (f64, f64)) -> bool {
    a.0 > b.0 || (a.0 == b.0 && a.1 > b.1)
}

/// The record with the highest dev F(S_E), then F(S); the earliest wins
/// exact ties.
pub fn select_best(log: &[LogRecord]) -> Option<&LogRecord> {
    let mut best: Option<&LogRecord> = None;
    for r in log {
        if best.is_none_or(|b| beats(r.selection_key(), b.selection_key())) {
            best = Some(r);
        }
    }
    best
}

/// Hinge loss and parameter gradient of one sentence. Dropout is active
/// when `dropout_seed` is given.
pub fn sentence_gradient(
    params: &Params,
    config: &ModelConfig,
    vocab: &Vocab,
    labels: &LabelSet,
    weights: &LabelWeights,
    gold: &Tree,
    dropout_seed: Option<u64>,
) -> Result<(f64, Params), TrainError> {
    let words = gold.words();
    let ids = vocab.encode(words.iter().map(String::as_str));
    let mut rng = dropout_seed.map(ChaCha8Rng::seed_from_u64);
    let r = rng.as_mut().map(|r| r as &mut dyn RngCore);
    let (table, cache) = forward(params, config, &ids, r)?;
    let h = hinge_loss(&table, gold, labels, weights)?;
    let grad = backward(params, &cache, &h.grad)?;
    Ok((h.loss, grad))
}

/// Summed loss and gradient over a batch. Sentences run in parallel; the
/// reduction is sequential in batch order.
pub fn batch_gradient(
    params: &Params,
    config: &ModelConfig,
    vocab: &Vocab,
    labels: &LabelSet,
    weights: &LabelWeights,
    batch: &[&Tree],
    dropout_seeds: Option<&[u64]>,
) -> Result<(f64, Params), TrainError> {
    let results: Vec<Result<(f64, Params), TrainError>> = batch
        .par_iter()
        .enumerate()
        .map(|(k, gold)| {
            sentence_gradient(
                params,
                config,
                vocab,
                labels,
                weights,
                gold,
                dropout_seeds.map(|s| s[k]),
            )
        })
        .collect();
    let mut total = 0.0;
    let mut grad = ModelParams::zeros(config);
    for r in results {
        let (loss, g) = r?;
        total += loss;
        grad.add_assign(&g);
    }
    Ok((total, grad))
}

/// Decodes one sentence with unit label weights.
pub fn predict(
    params: &Params,
    config: &ModelConfig,
    vocab: &Vocab,
    labels: &LabelSet,
    tokens: &[Token],
) -> Result<Tree, TrainError> {
    let ids = vocab.encode(tokens.iter().map(|t| t.word.as_str()));
    let (table, _) = forward(params, config, &ids, None)?;
    Ok(cyk_decode(&table, tokens, labels, &LabelWeights::UNIT)?.tree)
}

/// Parses a batch of sentences in parallel; output order matches input.
/// Sentences longer than the model's maximum are `None`.
pub fn predict_all(
    params: &Params,
    config: &ModelConfig,
    vocab: &Vocab,
    labels: &LabelSet,
    sentences: &[Vec<Token>],
) -> Result<Vec<Option<Tree>>, TrainError> {
    sentences
        .par_iter()
        .map(|toks| {
            if toks.len() > config.max_len {
                Ok(None)
            } else {
                predict(params, config, vocab, labels, toks).map(Some)
            }
        })
        .collect()
}

#[derive(Debug, Clone)]
pub struct Evaluation {
    pub report: MetricReport,
    pub predicted: Vec<Option<Tree>>,
    pub skipped: usize,
}

/// Decodes every gold sentence and scores the predictions. Overlength
/// sentences are skipped with a warning and excluded from the counts.
pub fn evaluate(
    params: &Params,
    config: &ModelConfig,
    vocab: &Vocab,
    labels: &LabelSet,
    gold: &[Tree],
) -> Result<Evaluation, TrainError> {
    let sentences: Vec<Vec<Token>> = gold.iter().map(Tree::fringe).collect();
    let predicted = predict_all(params, config, vocab, labels, &sentences)?;
    let mut g = Vec::new();
    let mut p = Vec::new();
    for (gt, pt) in gold.iter().zip(&predicted) {
        if let Some(pt) = pt {
            g.push(gt.clone());
            p.push(pt.clone());
        }
    }
    let skipped = gold.len() - g.len();
    if skipped > 0 {
        log::warn!("skipped {skipped} sentences longer than {} words", config.max_len);
    }
    Ok(Evaluation {
        report: corpus_report(&g, &p)?,
        predicted,
        skipped,
    })
}

/// Training inputs: trees are already preprocessed and transformed.
/// `transform` and `preprocess` are recorded in saved checkpoints.
pub struct TrainData<'a> {
    pub train: &'a [Tree],
    pub dev: &'a [Tree],
    pub transform: TransformMode,
    pub preprocess: Preprocess,
}

pub struct TrainOutcome {
    pub best: Checkpoint,
    pub best_step: u64,
    pub log: Vec<LogRecord>,
}

fn io_err(path: PathBuf) -> impl FnOnce(std::io::Error) -> TrainError {
    move |source| TrainError::Io { path, source }
}

/// Trains from scratch. `model.vocab_size` and `model.label_count` are
/// overwritten from the training corpus.
pub fn train(
    data: &TrainData,
    model: &ModelConfig,
    tc: &TrainConfig,
) -> Result<TrainOutcome, TrainError> {
    tc.validate()?;
    if data.train.is_empty() {
        return Err(TrainError::EmptyCorpus("training"));
    }
    if data.dev.is_empty() {
        return Err(TrainError::EmptyCorpus("dev"));
    }
    let vocab = Vocab::build(data.train.iter().flat_map(|t| t.fringe_words()));
    let labels = LabelSet::from_trees(data.train);
    let mut config = model.clone();
    config.vocab_size = vocab.len();
    config.label_count = labels.len();
    config.validate()?;

    let train: Vec<&Tree> = data
        .train
        .iter()
        .filter(|t| {
            let ok = t.len() <= config.max_len;
            if !ok {
                log::warn!("skipping training sentence of {} words", t.len());
            }
            ok
        })
        .collect();
    if train.is_empty() {
        return Err(TrainError::EmptyCorpus("training"));
    }

    let mut log_file = match &tc.out_dir {
        Some(dir) => {
            fs::create_dir_all(dir).map_err(io_err(dir.clone()))?;
            let path = dir.join("log.jsonl");
            Some((BufWriter::new(File::create(&path).map_err(io_err(path.clone()))?), path))
        }
        None => None,
    };

    let mut params = ModelParams::init(&config)?;
    let mut adam = Adam::new(&config);
    let header = |step: u64| Header {
        config: config.clone(),
        vocab: vocab.clone(),
        labels: labels.clone(),
        transform: data.transform,
        preprocess: data.preprocess.clone(),
        step,
    };
    let train_dropout = {
        let d = &config.dropout;
        d.attention + d.relu + d.residual + d.embedding > 0.0
    };

    let mut order: Vec<usize> = (0..train.len()).collect();
    let mut shuffle_rng = ChaCha8Rng::seed_from_u64(derive_seed(tc.seed, 0, u64::MAX));
    let mut step: u64 = 0;
    let mut decay = 1.0;
    let mut stale = 0;
    let mut best: Option<((f64, f64), u64, Params)> = None;
    let mut log = Vec::new();
    let mut loss_sum = 0.0;
    let mut loss_count = 0usize;

    'epochs: for epoch in 1..=tc.max_epochs {
        order.shuffle(&mut shuffle_rng);
        let batches: Vec<&[usize]> = order.chunks(tc.batch_size).collect();
        let last_batch = batches.len() - 1;
        for (bi, chunk) in batches.into_iter().enumerate() {
            step += 1;
            let batch: Vec<&Tree> = chunk.iter().map(|&i| train[i]).collect();
            let seeds: Vec<u64> = (0..batch.len())
                .map(|k| derive_seed(tc.seed, step, k as u64))
                .collect();
            let (loss, grad) = batch_gradient(
                &params,
                &config,
                &vocab,
                &labels,
                &tc.weights,
                &batch,
                train_dropout.then_some(seeds.as_slice()),
            )?;
            if !loss.is_finite() || !grad.is_finite() {
                // find the first offending sentence for the diagnostic
                let culprit = batch
                    .iter()
                    .zip(&seeds)
                    .find(|(t, s)| {
                        sentence_gradient(
                            &params,
                            &config,
                            &vocab,
                            &labels,
                            &tc.weights,
                            t,
                            train_dropout.then_some(**s),
                        )
                        .map_or(true, |(l, g)| !l.is_finite() || !g.is_finite())
                    })
                    .map(|(t, _)| serialize(t))
                    .unwrap_or_else(|| serialize(batch[0]));
                return Err(TrainError::NonFinite {
                    step,
                    sentence: culprit,
                });
            }
            loss_sum += loss;
            loss_count += batch.len();
            let lr = warmup_rate(tc.learning_rate, tc.warmup_steps, step) * decay;
            adam.step(&mut params, &grad, lr);

            let due = match tc.eval_every {
                Some(k) => step.is_multiple_of(k),
                None => bi == last_batch,
            };
            if !due {
                continue;
            }
            let ev = evaluate(&params, &config, &vocab, &labels, data.dev)?;
            let r = &ev.report;
            let record = LogRecord {
                step,
                epoch,
                learning_rate: lr,
                train_loss: loss_sum / loss_count.max(1) as f64,
                f_s: r.span.f1,
                p_se: r.edited_span.precision,
                r_se: r.edited_span.recall,
                f_se: r.edited_span.f1,
                f_we: r.edited_word.f1,
                f_weip: r.eip_word.f1,
                skipped: ev.skipped,
            };
            log::info!(
                "step {step} epoch {epoch} lr {lr:.2e} loss {:.4} F(S) {:.4} F(S_E) {:.4} F(W_E) {:.4}",
                record.train_loss,
                record.f_s,
                record.f_se,
                record.f_we
            );
            loss_sum = 0.0;
            loss_count = 0;
            if let Some((w, path)) = &mut log_file {
                let line = serde_json::to_string(&record).expect("log record serializes");
                writeln!(w, "{line}")
                    .and_then(|_| w.flush())
                    .map_err(io_err(path.clone()))?;
            }
            if let Some(dir) = &tc.out_dir {
                let ckpt = Checkpoint {
                    header: header(step),
                    params: params.clone(),
                };
                save_checkpoint(&dir.join(format!("step-{step}.bin")), &ckpt)?;
            }
            let improved = best.as_ref().is_none_or(|(k, _, _)| beats(record.selection_key(), *k));
            if improved {
                best = Some((record.selection_key(), step, params.clone()));
                stale = 0;
                if let Some(dir) = &tc.out_dir {
                    let ckpt = Checkpoint {
                        header: header(step),
                        params: params.clone(),
                    };
                    save_checkpoint(&dir.join("best.bin"), &ckpt)?;
                }
            } else {
                stale += 1;
                if stale >= tc.patience.max(1) {
                    decay *= tc.decay_factor;
                    stale = 0;
                    log::info!("decaying learning rate to {:.2e}", tc.learning_rate * decay);
                }
            }
            log.push(record);
            if tc.learning_rate * decay < tc.min_learning_rate {
                break 'epochs;
            }
        }
    }

    let (best_step, best_params) = match best {
        Some((_, s, p)) => (s, p),
        None => {
            // no evaluation happened (eval_every larger than the run)
            (step, params)
        }
    };
    Ok(TrainOutcome {
        best: Checkpoint {
            header: header(best_step),
            params: best_params,
        },
        best_step,
        log,
    })
}
