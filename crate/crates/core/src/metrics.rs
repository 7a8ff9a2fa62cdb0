//! Precision / recall / F for labeled spans and for disfluent word positions,
//! micro-averaged over a corpus.

use std::collections::HashMap;
use std::fmt;
use std::ops::{Add, AddAssign};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::treebank::{disfluency_word_positions, spans, Tree, EDITED_LABELS, EIP_LABELS};

#[derive(Debug, Error, PartialEq)]
pub enum MetricsError {
    #[error("sentence {sentence}: token {index} differs (gold {gold:?}, predicted {pred:?})")]
    FringeMismatch {
        sentence: usize,
        index: usize,
        gold: String,
        pred: String,
    },
    #[error("corpus length mismatch: {gold} gold trees vs {pred} predicted trees")]
    CorpusLength { gold: usize, pred: usize },
}

/// Raw predicted / gold / correct counts. Addition is the micro-average.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Counts {
    pub predicted: usize,
    pub gold: usize,
    pub correct: usize,
}

impl Add for Counts {
    type Output = Counts;
    fn add(self, o: Counts) -> Counts {
        Counts {
            predicted: self.predicted + o.predicted,
            gold: self.gold + o.gold,
            correct: self.correct + o.correct,
        }
    }
}

impl AddAssign for Counts {
    fn add_assign(&mut self, o: Counts) {
        *self = *self + o;
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Prf {
    pub predicted_count: usize,
    pub gold_count: usize,
    pub correct_count: usize,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

impl From<Counts> for Prf {
    /// P is 1 when nothing is predicted, R is 1 when nothing is gold.
    fn from(c: Counts) -> Prf {
        debug_assert!(c.correct <= c.predicted.min(c.gold));
        let precision = if c.predicted == 0 {
            1.0
        } else {
            c.correct as f64 / c.predicted as f64
        };
        let recall = if c.gold == 0 {
            1.0
        } else {
            c.correct as f64 / c.gold as f64
        };
        let f1 = if precision + recall == 0.0 {
            0.0
        } else {
            2.0 * precision * recall / (precision + recall)
        };
        Prf {
            predicted_count: c.predicted,
            gold_count: c.gold,
            correct_count: c.correct,
            precision,
            recall,
            f1,
        }
    }
}

impl Prf {
    pub fn counts(&self) -> Counts {
        Counts {
            predicted: self.predicted_count,
            gold: self.gold_count,
            correct: self.correct_count,
        }
    }
}

/// Checks that two trees share the same word sequence.
pub fn check_fringe(sentence: usize, gold: &Tree, pred: &Tree) -> Result<(), MetricsError> {
    let g = gold.words();
    let p = pred.words();
    for i in 0..g.len().max(p.len()) {
        let gw = g.get(i).map(String::as_str).unwrap_or("<end>");
        let pw = p.get(i).map(String::as_str).unwrap_or("<end>");
        if gw != pw {
            return Err(MetricsError::FringeMismatch {
                sentence,
                index: i,
                gold: gw.to_string(),
                pred: pw.to_string(),
            });
        }
    }
    Ok(())
}

/// Multiset intersection counts of labeled spans, optionally restricted to
/// spans whose label is in `filter`. Fringes are assumed equal.
pub fn span_counts(gold: &Tree, pred: &Tree, filter: Option<&[&str]>) -> Counts {
    let keep = |l: &str| filter.is_none_or(|f| f.contains(&l));
    let mut bag: HashMap<(usize, usize, String), usize> = HashMap::new();
    let mut counts = Counts::default();
    for s in spans(gold).into_iter().filter(|s| keep(&s.label)) {
        counts.gold += 1;
        *bag.entry((s.start, s.end, s.label)).or_default() += 1;
    }
    for s in spans(pred).into_iter().filter(|s| keep(&s.label)) {
        counts.predicted += 1;
        if let Some(n) = bag.get_mut(&(s.start, s.end, s.label)) {
            if *n > 0 {
                *n -= 1;
                counts.correct += 1;
            }
        }
    }
    counts
}

pub fn word_counts(gold: &Tree, pred: &Tree, labels: &[&str]) -> Counts {
    let g = disfluency_word_positions(gold, labels);
    let p = disfluency_word_positions(pred, labels);
    Counts {
        predicted: p.len(),
        gold: g.len(),
        correct: g.intersection(&p).count(),
    }
}

pub fn span_prf(gold: &Tree, pred: &Tree, label_filter: Option<&[&str]>) -> Result<Prf, MetricsError> {
    check_fringe(0, gold, pred)?;
    Ok(span_counts(gold, pred, label_filter).into())
}

pub fn word_prf(gold: &Tree, pred: &Tree, labels: &[&str]) -> Result<Prf, MetricsError> {
    check_fringe(0, gold, pred)?;
    Ok(word_counts(gold, pred, labels).into())
}

/// The four scores reported for a corpus: all spans (S), EDITED spans (S_E),
/// EDITED words (W_E) and EDITED/INTJ/PRN words (W_EIP).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub span: Prf,
    pub edited_span: Prf,
    pub edited_word: Prf,
    pub eip_word: Prf,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct ReportCounts {
    pub span: Counts,
    pub edited_span: Counts,
    pub edited_word: Counts,
    pub eip_word: Counts,
}

impl Add for ReportCounts {
    type Output = ReportCounts;
    fn add(self, o: ReportCounts) -> ReportCounts {
        ReportCounts {
            span: self.span + o.span,
            edited_span: self.edited_span + o.edited_span,
            edited_word: self.edited_word + o.edited_word,
            eip_word: self.eip_word + o.eip_word,
        }
    }
}

impl From<ReportCounts> for MetricReport {
    fn from(c: ReportCounts) -> Self {
        MetricReport {
            span: c.span.into(),
            edited_span: c.edited_span.into(),
            edited_word: c.edited_word.into(),
            eip_word: c.eip_word.into(),
        }
    }
}

/// Counts for one sentence pair. `edited_span_labels` selects the labels of
/// the S_E row (normally just EDITED).
pub fn sentence_counts(gold: &Tree, pred: &Tree, edited_span_labels: &[&str]) -> ReportCounts {
    ReportCounts {
        span: span_counts(gold, pred, None),
        edited_span: span_counts(gold, pred, Some(edited_span_labels)),
        edited_word: word_counts(gold, pred, EDITED_LABELS),
        eip_word: word_counts(gold, pred, EIP_LABELS),
    }
}

pub fn corpus_report(gold: &[Tree], pred: &[Tree]) -> Result<MetricReport, MetricsError> {
    corpus_report_with(gold, pred, EDITED_LABELS)
}

/// Micro-averaged report: counts are summed over sentences before P/R/F.
pub fn corpus_report_with(
    gold: &[Tree],
    pred: &[Tree],
    edited_span_labels: &[&str],
) -> Result<MetricReport, MetricsError> {
    if gold.len() != pred.len() {
        return Err(MetricsError::CorpusLength {
            gold: gold.len(),
            pred: pred.len(),
        });
    }
    let mut total = ReportCounts::default();
    for (i, (g, p)) in gold.iter().zip(pred).enumerate() {
        check_fringe(i + 1, g, p)?;
        total = total + sentence_counts(g, p, edited_span_labels);
    }
    Ok(total.into())
}

impl MetricReport {
    pub fn rows(&self) -> [(&'static str, &Prf); 4] {
        [
            ("S", &self.span),
            ("S_E", &self.edited_span),
            ("W_E", &self.edited_word),
            ("W_EIP", &self.eip_word),
        ]
    }
}

impl fmt::Display for MetricReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(
            f,
            "{:<6} {:>8} {:>8} {:>8} {:>7} {:>7} {:>7}",
            "metric", "pred", "gold", "correct", "P", "R", "F"
        )?;
        for (name, p) in self.rows() {
            writeln!(
                f,
                "{:<6} {:>8} {:>8} {:>8} {:>7.4} {:>7.4} {:>7.4}",
                name, p.predicted_count, p.gold_count, p.correct_count, p.precision, p.recall, p.f1
            )?;
        }
        Ok(())
    }
}

#[cfg(test)]
pub(crate) mod fixtures {
    use crate::treebank::{parse_bracketed, Tree};

    /// Gold tree for "I I 've uh I mean I enjoy".
    pub const WORKED_GOLD: &str = "(S (EDITED (S (EDITED (NP (PRP I))) (NP (PRP I)) (VP (VBP 've)))) \
        (INTJ (UH uh)) (PRN (S (NP (PRP I)) (VP (VBP mean)))) (NP (PRP I)) (VP (VBP enjoy)))";
    /// Predicted tree for the same sentence.
    pub const WORKED_PRED: &str = "(S (EDITED (NP (PRP I))) (S (NP (PRP I)) (VP (VBP 've))) \
        (INTJ (UH uh)) (PRN (S (NP (PRP I)) (VP (VBP mean)))) (NP (PRP I)) (VP (VBP enjoy)))";

    pub fn worked_pair() -> (Tree, Tree) {
        (
            parse_bracketed(WORKED_GOLD).unwrap(),
            parse_bracketed(WORKED_PRED).unwrap(),
        )
    }
}
