use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::metrics::{auc, roc_curve, RocPoint};
use super::split::{forward_chain_split, WindowMode};
use crate::error::{Error, Result};
use crate::featurizer::{build_dataset, Dataset, EmitPolicy, FeaturizerConfig, Normalizer};
use crate::ingest::ValidatedLog;
use crate::models::{fit_rows, ModelConfig, Variant};
use crate::seed::derive_seed;
use crate::sessionizer::SessionizerConfig;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalConfig {
    pub seed: u64,
    pub sessionizer: SessionizerConfig,
    pub emit_policy: EmitPolicy,
    pub window_mode: WindowMode,
    /// Hyperparameters shared by every cell; `variant`, `M` and `seed` are
    /// replaced per cell.
    pub models: ModelConfig,
    /// Keep each fold's ROC curve in its [`FoldOutcome`].
    #[serde(default)]
    pub collect_roc: bool,
}

impl EvalConfig {
    pub fn new(seed: u64) -> Self {
        EvalConfig {
            seed,
            sessionizer: SessionizerConfig::default(),
            emit_policy: EmitPolicy::RequireFullWindow,
            window_mode: WindowMode::Expanding,
            models: ModelConfig::new(Variant::LstmNet, 1, seed),
            collect_roc: false,
        }
    }

    /// Fully resolved configuration of one trained model.
    pub fn model_config(
        &self,
        variant: Variant,
        window: usize,
        gamma: u32,
        fold: usize,
    ) -> ModelConfig {
        ModelConfig {
            variant,
            window,
            seed: derive_seed(
                self.seed,
                &format!("M{window}/g{gamma}/fold{fold}/{}", variant.key()),
            ),
            ..self.models.clone()
        }
    }
}

/// One fold's normalized training and test rows.
#[derive(Debug, Clone, Copy)]
pub struct FoldInputs<'a> {
    pub window: usize,
    pub gamma: u32,
    /// 1-based.
    pub fold: usize,
    pub normalizer: &'a Normalizer,
    pub train_rows: &'a [f64],
    pub train_labels: &'a [bool],
    pub test_rows: &'a [f64],
}

/// Trains one model on a fold and scores its test rows.
pub trait Scorer: Sync {
    fn fit_and_score(&self, config: &ModelConfig, fold: &FoldInputs<'_>) -> Result<Vec<f64>>;
}

/// The real models, optionally saving every fitted model.
#[derive(Debug, Clone, Default)]
pub struct ModelScorer {
    pub save_dir: Option<std::path::PathBuf>,
}

impl Scorer for ModelScorer {
    fn fit_and_score(&self, config: &ModelConfig, fold: &FoldInputs<'_>) -> Result<Vec<f64>> {
        let model = fit_rows(
            config,
            fold.normalizer.clone(),
            fold.train_rows,
            fold.train_labels,
        )?;
        if let Some(dir) = &self.save_dir {
            let name =
                crate::models::model_file_name(config.variant, fold.window, fold.gamma, fold.fold);
            let file = std::io::BufWriter::new(std::fs::File::create(dir.join(name))?);
            crate::models::save_model(&model, file)?;
        }
        model.score_rows(fold.test_rows)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FoldOutcome {
    /// 1-based.
    pub fold: usize,
    pub train_items: usize,
    pub test_items: usize,
    pub test_positives: usize,
    /// `None` when the test part holds a single class.
    pub auc: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub roc: Option<Vec<RocPoint>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalCell {
    pub variant: Variant,
    pub gamma: u32,
    #[serde(rename = "M")]
    pub window: usize,
    pub folds: Vec<FoldOutcome>,
    /// Mean and population standard deviation over the folds with a defined AUC.
    pub mean_auc: Option<f64>,
    pub std_auc: Option<f64>,
    pub degenerate_folds: Vec<usize>,
}

impl EvalCell {
    fn new(variant: Variant, gamma: u32, window: usize, folds: Vec<FoldOutcome>) -> Self {
        let defined: Vec<f64> = folds.iter().filter_map(|f| f.auc).collect();
        let degenerate_folds = folds
            .iter()
            .filter(|f| f.auc.is_none())
            .map(|f| f.fold)
            .collect();
        let (mean_auc, std_auc) = if defined.is_empty() {
            (None, None)
        } else {
            let n = defined.len() as f64;
            let mean = defined.iter().sum::<f64>() / n;
            let var = defined.iter().map(|a| (a - mean) * (a - mean)).sum::<f64>() / n;
            (Some(mean), Some(var.sqrt()))
        };
        EvalCell {
            variant,
            gamma,
            window,
            folds,
            mean_auc,
            std_auc,
            degenerate_folds,
        }
    }

    pub fn fold_aucs(&self) -> Vec<Option<f64>> {
        self.folds.iter().map(|f| f.auc).collect()
    }

    pub fn is_degenerate(&self) -> bool {
        !self.degenerate_folds.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetInfo {
    #[serde(rename = "M")]
    pub window: usize,
    pub items: usize,
    pub part_sizes: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalRun {
    pub config: EvalConfig,
    pub datasets: Vec<DatasetInfo>,
    pub cells: Vec<EvalCell>,
}

fn sorted_unique<T: Ord + Copy>(xs: &[T]) -> Vec<T> {
    let mut v = xs.to_vec();
    v.sort_unstable();
    v.dedup();
    v
}

struct PreparedFold {
    normalizer: Normalizer,
    train_rows: Vec<f64>,
    test_rows: Vec<f64>,
    train: std::ops::Range<usize>,
    test: std::ops::Range<usize>,
}

/// Every (gamma, variant) cell for one dataset. Labels are recomputed from
/// `raw_y` for each gamma; normalizers are fitted per fold on training items
/// only and shared by all models of that fold.
pub fn evaluate_dataset<S: Scorer>(
    dataset: &Dataset,
    gammas: &[u32],
    variants: &[Variant],
    config: &EvalConfig,
    scorer: &S,
) -> Result<(DatasetInfo, Vec<EvalCell>)> {
    let gammas = sorted_unique(gammas);
    let variants = sorted_unique(variants);
    if gammas.is_empty() || variants.is_empty() {
        return Err(Error::invalid("gamma and model lists must not be empty"));
    }
    if gammas.contains(&0) {
        return Err(Error::invalid("gamma must be at least 1"));
    }
    let window = dataset.config.window;
    let plan = forward_chain_split(dataset.len(), config.window_mode)?;
    let items = &dataset.items;

    let folds = plan
        .folds
        .iter()
        .map(|f| {
            let normalizer = Normalizer::fit(&items[f.train.clone()])?;
            Ok(PreparedFold {
                train_rows: normalizer.apply_all(&items[f.train.clone()])?,
                test_rows: normalizer.apply_all(&items[f.test.clone()])?,
                normalizer,
                train: f.train.clone(),
                test: f.test.clone(),
            })
        })
        .collect::<Result<Vec<_>>>()?;

    let labels: Vec<Vec<bool>> = gammas
        .iter()
        .map(|&g| items.iter().map(|i| i.raw_y > g as usize).collect())
        .collect();

    let mut tasks: Vec<(usize, usize, Variant)> = Vec::new();
    for g in 0..gammas.len() {
        for k in 0..folds.len() {
            tasks.extend(variants.iter().map(|&v| (g, k, v)));
        }
    }
    let results: Vec<Result<FoldOutcome>> = tasks
        .par_iter()
        .map(|&(g, k, variant)| {
            let fold = &folds[k];
            let gamma = gammas[g];
            let test_labels = &labels[g][fold.test.clone()];
            let test_positives = test_labels.iter().filter(|&&l| l).count();
            let mut outcome = FoldOutcome {
                fold: k + 1,
                train_items: fold.train.len(),
                test_items: fold.test.len(),
                test_positives,
                auc: None,
                roc: None,
            };
            if test_positives == 0 || test_positives == test_labels.len() {
                return Ok(outcome);
            }
            let inputs = FoldInputs {
                window,
                gamma,
                fold: k + 1,
                normalizer: &fold.normalizer,
                train_rows: &fold.train_rows,
                train_labels: &labels[g][fold.train.clone()],
                test_rows: &fold.test_rows,
            };
            let model_config = config.model_config(variant, window, gamma, k + 1);
            let scores = scorer.fit_and_score(&model_config, &inputs)?;
            outcome.auc = Some(auc(&scores, test_labels)?);
            if config.collect_roc {
                outcome.roc = Some(roc_curve(&scores, test_labels)?);
            }
            Ok(outcome)
        })
        .collect();

    // sequential collect: the first failing task in grid order is reported
    let per_task: Vec<FoldOutcome> = results.into_iter().collect::<Result<_>>()?;

    let mut cells = Vec::with_capacity(gammas.len() * variants.len());
    for (g, &gamma) in gammas.iter().enumerate() {
        for (vi, &variant) in variants.iter().enumerate() {
            let fold_outcomes = (0..folds.len())
                .map(|k| per_task[(g * folds.len() + k) * variants.len() + vi].clone())
                .collect();
            cells.push(EvalCell::new(variant, gamma, window, fold_outcomes));
        }
    }
    let info = DatasetInfo {
        window,
        items: dataset.len(),
        part_sizes: plan.parts.iter().map(|p| p.len()).collect(),
    };
    Ok((info, cells))
}

/// The full (M x gamma x variant) grid over a log. Cells are ordered by M,
/// then gamma, then variant; the result does not depend on the thread count.
pub fn evaluate_matrix<S: Scorer>(
    log: &ValidatedLog,
    gammas: &[u32],
    windows: &[usize],
    variants: &[Variant],
    config: &EvalConfig,
    scorer: &S,
) -> Result<EvalRun> {
    let windows = sorted_unique(windows);
    if windows.is_empty() {
        return Err(Error::invalid("M list must not be empty"));
    }
    let first_gamma = gammas.iter().copied().min().unwrap_or(1).max(1);
    let mut datasets = Vec::new();
    let mut cells = Vec::new();
    for &window in &windows {
        let fconfig = FeaturizerConfig::new(window, first_gamma)?.with_policy(config.emit_policy);
        let dataset = build_dataset(log, &config.sessionizer, &fconfig)?;
        let (info, mut c) = evaluate_dataset(&dataset, gammas, variants, config, scorer)?;
        datasets.push(info);
        cells.append(&mut c);
    }
    Ok(EvalRun {
        config: config.clone(),
        datasets,
        cells,
    })
}
