//! Run configuration and the two comparison harnesses: label weighting
//! and tree representation.

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::corpus_gen::Splits;
use crate::decoder::LabelWeights;
use crate::model::ModelConfig;
use crate::trainer::{evaluate, train, TrainConfig, TrainData, TrainError};
use crate::transforms::TransformMode;
use crate::treebank::{Preprocess, Tree};

/// Everything `train` needs besides the data.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RunConfig {
    pub model: ModelConfig,
    pub train: TrainConfig,
    pub preprocess: Preprocess,
    pub transform: TransformMode,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self::desk()
    }
}

impl RunConfig {
    pub fn desk() -> Self {
        RunConfig {
            model: ModelConfig::desk(),
            train: TrainConfig::desk(),
            preprocess: Preprocess::default(),
            transform: TransformMode::Baseline,
        }
    }

    pub fn paper() -> Self {
        RunConfig {
            model: ModelConfig::paper(),
            train: TrainConfig::paper(),
            ..Self::desk()
        }
    }

    /// Preprocessing followed by the configured transform.
    pub fn prepare(&self, trees: &[Tree]) -> Vec<Tree> {
        self.preprocess
            .apply_corpus(trees)
            .iter()
            .map(|t| self.transform.apply(t))
            .collect()
    }
}

/// Scores of one trained model on the held-out split.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunScores {
    pub best_step: u64,
    pub p_se: f64,
    pub r_se: f64,
    pub f_se: f64,
    pub f_s: f64,
    pub f_we: f64,
    pub f_weip: f64,
}

/// Trains on `splits.train` (model selection on dev) and scores the best
/// checkpoint on test. Artifacts go to `out` when given.
pub fn train_and_test(
    splits: &Splits,
    run: &RunConfig,
    out: Option<&Path>,
) -> Result<RunScores, TrainError> {
    let train_set = run.prepare(&splits.train);
    let dev = run.prepare(&splits.dev);
    let test = run.prepare(&splits.test);
    let mut tc = run.train.clone();
    tc.out_dir = out.map(Path::to_path_buf);
    let data = TrainData {
        train: &train_set,
        dev: &dev,
        transform: run.transform,
        preprocess: run.preprocess.clone(),
    };
    let outcome = train(&data, &run.model, &tc)?;
    let h = &outcome.best.header;
    let ev = evaluate(&outcome.best.params, &h.config, &h.vocab, &h.labels, &test)?;
    let r = ev.report;
    Ok(RunScores {
        best_step: outcome.best_step,
        p_se: r.edited_span.precision,
        r_se: r.edited_span.recall,
        f_se: r.edited_span.f1,
        f_s: r.span.f1,
        f_we: r.edited_word.f1,
        f_weip: r.eip_word.f1,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeightsRow {
    pub weights: LabelWeights,
    pub scores: RunScores,
}

/// Side-by-side scores of unit and EDITED-emphasizing label weights.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeightsReport {
    pub rows: Vec<WeightsRow>,
}

fn direction(d: f64) -> &'static str {
    if d > 0.0 {
        "up"
    } else if d < 0.0 {
        "down"
    } else {
        "same"
    }
}

impl fmt::Display for WeightsReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(
            f,
            "{:<12} {:>7} {:>7} {:>7} {:>7} {:>7}",
            "weights", "P(S_E)", "R(S_E)", "F(S_E)", "F(S)", "F(W_E)"
        )?;
        for r in &self.rows {
            let s = &r.scores;
            writeln!(
                f,
                "{:<12} {:>7.4} {:>7.4} {:>7.4} {:>7.4} {:>7.4}",
                format!("({}, {})", r.weights.edited_weight, r.weights.default_weight),
                s.p_se,
                s.r_se,
                s.f_se,
                s.f_s,
                s.f_we
            )?;
        }
        if let [a, b] = self.rows.as_slice() {
            let (a, b) = (&a.scores, &b.scores);
            for (name, x, y) in [
                ("P(S_E)", a.p_se, b.p_se),
                ("R(S_E)", a.r_se, b.r_se),
                ("F(S_E)", a.f_se, b.f_se),
                ("F(S)", a.f_s, b.f_s),
                ("F(W_E)", a.f_we, b.f_we),
            ] {
                writeln!(f, "delta {name:<7} {:+.4} ({})", y - x, direction(y - x))?;
            }
        }
        Ok(())
    }
}

fn write_report<T: Serialize + fmt::Display>(out: &Path, stem: &str, report: &T) -> Result<(), TrainError> {
    let io = |p: PathBuf| move |source| TrainError::Io { path: p, source };
    fs::create_dir_all(out).map_err(io(out.to_path_buf()))?;
    let txt = out.join(format!("{stem}.txt"));
    fs::write(&txt, report.to_string()).map_err(io(txt.clone()))?;
    let json = out.join(format!("{stem}.json"));
    let body = serde_json::to_string_pretty(report).expect("report serializes") + "\n";
    fs::write(&json, body).map_err(io(json.clone()))?;
    Ok(())
}

/// Trains with weights (1, 1) and (2, 0.7) on the same data and seed.
/// Writes `weights.txt` and `weights.json` when `out` is given.
pub fn compare_weights(splits: &Splits, run: &RunConfig, out: Option<&Path>) -> Result<WeightsReport, TrainError> {
    let mut rows = Vec::new();
    for (tag, w) in [("unit", LabelWeights::UNIT), ("edited", LabelWeights::EDITED_EMPHASIS)] {
        let mut r = run.clone();
        r.train.weights = w;
        let dir = out.map(|o| o.join(format!("weights-{tag}")));
        let scores = train_and_test(splits, &r, dir.as_deref())?;
        rows.push(WeightsRow { weights: w, scores });
    }
    let report = WeightsReport { rows };
    if let Some(o) = out {
        write_report(o, "weights", &report)?;
    }
    Ok(report)
}

/// Allowed slack when checking that removing syntax does not help F(W_E).
pub const NO_SYNTAX_MARGIN: f64 = 0.01;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransformRow {
    pub mode: TransformMode,
    pub seed: u64,
    pub scores: RunScores,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransformReport {
    pub rows: Vec<TransformRow>,
    /// Seeds where NoSyntax beat Baseline on F(W_E) by more than the margin.
    pub warnings: Vec<String>,
}

impl TransformReport {
    pub fn mean_f_we(&self, mode: TransformMode) -> Option<f64> {
        let v: Vec<f64> = self
            .rows
            .iter()
            .filter(|r| r.mode == mode)
            .map(|r| r.scores.f_we)
            .collect();
        (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64)
    }

    fn f_we(&self, mode: TransformMode, seed: u64) -> Option<f64> {
        self.rows
            .iter()
            .find(|r| r.mode == mode && r.seed == seed)
            .map(|r| r.scores.f_we)
    }
}

impl fmt::Display for TransformReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut seeds: Vec<u64> = self.rows.iter().map(|r| r.seed).collect();
        seeds.dedup();
        let mut modes: Vec<TransformMode> = Vec::new();
        for r in &self.rows {
            if !modes.contains(&r.mode) {
                modes.push(r.mode);
            }
        }
        write!(f, "{:<20}", "F(W_E)")?;
        for s in &seeds {
            write!(f, " {:>8}", format!("seed {s}"))?;
        }
        writeln!(f, " {:>8}", "mean")?;
        for m in &modes {
            write!(f, "{:<20}", m.name())?;
            for s in &seeds {
                match self.f_we(*m, *s) {
                    Some(v) => write!(f, " {v:>8.4}")?,
                    None => write!(f, " {:>8}", "-")?,
                }
            }
            writeln!(f, " {:>8.4}", self.mean_f_we(*m).unwrap_or(f64::NAN))?;
        }
        for w in &self.warnings {
            writeln!(f, "warning: {w}")?;
        }
        Ok(())
    }
}

/// Trains one model per mode and seed; the seed drives model
/// initialization, shuffling and dropout. Writes `transforms.txt` and
/// `transforms.json` when `out` is given.
pub fn compare_transforms(
    splits: &Splits,
    run: &RunConfig,
    modes: &[TransformMode],
    seeds: &[u64],
    out: Option<&Path>,
) -> Result<TransformReport, TrainError> {
    let mut rows = Vec::new();
    for &seed in seeds {
        for &mode in modes {
            let mut r = run.clone();
            r.transform = mode;
            r.model.seed = seed;
            r.train.seed = seed;
            let dir = out.map(|o| o.join(format!("{}-seed{seed}", mode.name())));
            let scores = train_and_test(splits, &r, dir.as_deref())?;
            log::info!("{} seed {seed}: F(W_E) {:.4}", mode.name(), scores.f_we);
            rows.push(TransformRow { mode, seed, scores });
        }
    }
    let mut report = TransformReport {
        rows,
        warnings: Vec::new(),
    };
    for &seed in seeds {
        if let (Some(base), Some(flat)) = (
            report.f_we(TransformMode::Baseline, seed),
            report.f_we(TransformMode::NoSyntax, seed),
        ) {
            if flat > base + NO_SYNTAX_MARGIN {
                report.warnings.push(format!(
                    "seed {seed}: nosyntax F(W_E) {flat:.4} exceeds baseline {base:.4} by more than {NO_SYNTAX_MARGIN}"
                ));
            }
        }
    }
    if let Some(o) = out {
        write_report(o, "transforms", &report)?;
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus_gen::{generate_splits, GenConfig};
    use crate::model::Dropout;

    fn quick() -> (Splits, RunConfig) {
        let splits = generate_splits(&GenConfig {
            train: 40,
            dev: 10,
            test: 10,
            ..GenConfig::default()
        })
        .unwrap();
        let mut run = RunConfig::desk();
        run.model = ModelConfig {
            d_model: 8,
            d_ff: 8,
            layers: 1,
            label_hidden: 8,
            dropout: Dropout::NONE,
            ..ModelConfig::desk()
        };
        run.train.max_epochs = 1;
        (splits, run)
    }

    #[test]
    fn run_config_json_defaults() {
        let r: RunConfig = serde_json::from_str(r#"{"transform": "nosyntax", "train": {"batch_size": 4}}"#).unwrap();
        assert_eq!(r.transform, TransformMode::NoSyntax);
        assert_eq!(r.train.batch_size, 4);
        assert_eq!(r.train.learning_rate, TrainConfig::desk().learning_rate);
        assert_eq!(r.model, ModelConfig::desk());
    }

    #[test]
    fn weights_report_is_well_formed() {
        let (splits, run) = quick();
        let dir = tempfile::tempdir().unwrap();
        let rep = compare_weights(&splits, &run, Some(dir.path())).unwrap();
        assert_eq!(rep.rows.len(), 2);
        assert_eq!(rep.rows[1].weights, LabelWeights::EDITED_EMPHASIS);
        let text = rep.to_string();
        assert!(text.contains("(2, 0.7)") && text.contains("delta F(W_E)"));
        let back: WeightsReport =
            serde_json::from_str(&fs::read_to_string(dir.path().join("weights.json")).unwrap()).unwrap();
        assert_eq!(back, rep);
        assert!(dir.path().join("weights-unit/best.bin").exists());
    }

    #[test]
    fn transform_report_is_well_formed() {
        let (splits, run) = quick();
        let modes = [TransformMode::Baseline, TransformMode::NoSyntax];
        let rep = compare_transforms(&splits, &run, &modes, &[1, 2], None).unwrap();
        assert_eq!(rep.rows.len(), 4);
        let text = rep.to_string();
        assert!(text.lines().next().unwrap().contains("seed 2"));
        assert!(text.contains("nosyntax"));
        assert!(rep.mean_f_we(TransformMode::PosDisfl).is_none());
    }
}
