//! The four classifiers behind one interface: train on dataset items, score
//! items to `[0, 1]`, save and load.
//!
//! Every model stores the [`Normalizer`] fitted on its training items and
//! applies it before scoring, so callers always pass raw items.

mod forest;
mod persist;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::featurizer::{DatasetItem, Normalizer, ENGINEERED_FEATURES};
use crate::nn::{
    fit, predict_rows, AdamConfig, DnnNet, LogisticNet, LstmNet, Network, TrainOptions,
};
use crate::seed::derive_seed;

pub use forest::{DecisionTree, Forest, TreeNode};
pub use persist::{load_model, model_file_name, save_model, SCHEMA_VERSION};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Variant {
    LstmNet,
    DnnNet,
    RandomForest,
    LogisticRegression,
}

impl Variant {
    pub const ALL: [Variant; 4] = [
        Variant::LstmNet,
        Variant::DnnNet,
        Variant::RandomForest,
        Variant::LogisticRegression,
    ];

    /// Identifier used in configs, file names and JSON.
    pub fn key(self) -> &'static str {
        match self {
            Variant::LstmNet => "lstm_net",
            Variant::DnnNet => "dnn_net",
            Variant::RandomForest => "random_forest",
            Variant::LogisticRegression => "logistic_regression",
        }
    }

    /// Column heading in reports.
    pub fn display_name(self) -> &'static str {
        match self {
            Variant::LstmNet => "LSTM-net",
            Variant::DnnNet => "DNN-net",
            Variant::RandomForest => "RF",
            Variant::LogisticRegression => "LR",
        }
    }

    /// Accepts the full key or the short CLI names `lstm`, `dnn`, `rf`, `lr`.
    pub fn parse(name: &str) -> Result<Self> {
        match name {
            "lstm_net" | "lstm" => Ok(Variant::LstmNet),
            "dnn_net" | "dnn" => Ok(Variant::DnnNet),
            "random_forest" | "rf" => Ok(Variant::RandomForest),
            "logistic_regression" | "lr" => Ok(Variant::LogisticRegression),
            other => Err(Error::UnknownVariant(other.to_string())),
        }
    }
}

impl std::fmt::Display for Variant {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.key())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForestConfig {
    pub tree_count: usize,
    pub max_depth: usize,
    pub min_leaf: usize,
    /// Candidate features per split; `None` means `ceil(sqrt(d))`.
    pub features_per_split: Option<usize>,
    /// Train each tree on a bootstrap resample of the items.
    pub bootstrap: bool,
}

impl Default for ForestConfig {
    fn default() -> Self {
        ForestConfig {
            tree_count: 50,
            max_depth: 16,
            min_leaf: 2,
            features_per_split: None,
            bootstrap: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogRegConfig {
    /// Weight of the `0.5 * lambda * |w|^2` penalty; the intercept is not penalized.
    pub l2_lambda: f64,
    pub epochs: usize,
    pub adam: AdamConfig,
}

impl Default for LogRegConfig {
    fn default() -> Self {
        LogRegConfig {
            l2_lambda: 1e-4,
            epochs: 200,
            adam: AdamConfig {
                learning_rate: 0.01,
                ..AdamConfig::default()
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub variant: Variant,
    #[serde(rename = "M")]
    pub window: usize,
    pub lstm_hidden: usize,
    pub feature_dense: usize,
    pub head: Vec<usize>,
    pub dnn_layers: Vec<usize>,
    pub epochs: usize,
    pub batch_size: usize,
    pub adam: AdamConfig,
    pub rf: ForestConfig,
    pub lr: LogRegConfig,
    pub seed: u64,
}

impl ModelConfig {
    pub fn new(variant: Variant, window: usize, seed: u64) -> Self {
        ModelConfig {
            variant,
            window,
            lstm_hidden: 32,
            feature_dense: 32,
            head: vec![32, 16],
            dnn_layers: vec![64, 32, 16],
            epochs: 10,
            batch_size: 32,
            adam: AdamConfig::default(),
            rf: ForestConfig::default(),
            lr: LogRegConfig::default(),
            seed,
        }
    }

    pub fn width(&self) -> usize {
        self.window + ENGINEERED_FEATURES
    }

    pub fn validate(&self) -> Result<()> {
        let sizes_ok = self.window >= 1
            && self.lstm_hidden >= 1
            && self.feature_dense >= 1
            && !self.head.is_empty()
            && !self.dnn_layers.is_empty()
            && self.head.iter().chain(&self.dnn_layers).all(|&s| s >= 1)
            && self.batch_size >= 1
            && self.rf.tree_count >= 1
            && self.rf.max_depth >= 1
            && self.rf.min_leaf >= 1
            && self.rf.features_per_split != Some(0);
        if !sizes_ok {
            return Err(Error::invalid(
                "model sizes, batch size and tree count must be at least 1",
            ));
        }
        if !(self.lr.l2_lambda >= 0.0 && self.lr.l2_lambda.is_finite()) {
            return Err(Error::invalid("l2_lambda must be finite and non-negative"));
        }
        self.adam.validate()?;
        self.lr.adam.validate()
    }

    fn net_seed(&self, stream: &str) -> u64 {
        derive_seed(self.seed, &format!("{}/{stream}", self.variant.key()))
    }
}

/// The fitted part of a model.
#[derive(Debug, Clone, PartialEq)]
pub enum Body {
    Lstm(LstmNet),
    Dnn(DnnNet),
    Forest(Forest),
    Logistic(LogisticNet),
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainedModel {
    pub config: ModelConfig,
    pub normalizer: Normalizer,
    pub body: Body,
}

fn check_items(items: &[DatasetItem], config: &ModelConfig) -> Result<()> {
    config.validate()?;
    if items.is_empty() {
        return Err(Error::invalid("cannot train on an empty set"));
    }
    if let Some(bad) = items.iter().find(|i| i.deltas.len() != config.window) {
        return Err(Error::Shape(format!(
            "item has {} deltas, model expects M = {}",
            bad.deltas.len(),
            config.window
        )));
    }
    Ok(())
}

fn labels_of(items: &[DatasetItem]) -> Vec<bool> {
    items.iter().map(|i| i.label).collect()
}

fn minibatch_options(config: &ModelConfig) -> TrainOptions {
    TrainOptions {
        epochs: config.epochs,
        batch_size: Some(config.batch_size),
        adam: config.adam,
        seed: config.net_seed("shuffle"),
    }
}

fn with_variant(config: &ModelConfig, variant: Variant) -> ModelConfig {
    ModelConfig {
        variant,
        ..config.clone()
    }
}

pub(crate) fn init_lstm(config: &ModelConfig) -> LstmNet {
    let mut rng = ChaCha8Rng::seed_from_u64(config.net_seed("init"));
    LstmNet::new(
        config.window,
        config.lstm_hidden,
        config.feature_dense,
        &config.head,
        &mut rng,
    )
}

pub(crate) fn init_dnn(config: &ModelConfig) -> DnnNet {
    let mut rng = ChaCha8Rng::seed_from_u64(config.net_seed("init"));
    DnnNet::new(config.width(), &config.dnn_layers, &mut rng)
}

pub(crate) fn init_logistic(config: &ModelConfig) -> LogisticNet {
    LogisticNet::new(config.width(), config.lr.l2_lambda)
}

/// Trains `config.variant` on rows already transformed by `normalizer`.
///
/// This is the entry point when several models share one normalization,
/// as in cross-validation; [`train`] fits the normalizer itself.
pub fn fit_rows(
    config: &ModelConfig,
    normalizer: Normalizer,
    rows: &[f64],
    labels: &[bool],
) -> Result<TrainedModel> {
    config.validate()?;
    let width = config.width();
    if labels.is_empty() {
        return Err(Error::invalid("cannot train on an empty set"));
    }
    if rows.len() != labels.len() * width || normalizer.width() != width {
        return Err(Error::Shape(format!(
            "{} values and a width-{} normalizer for {} rows of width {width}",
            rows.len(),
            normalizer.width(),
            labels.len()
        )));
    }
    let targets: Vec<f64> = labels.iter().map(|&l| if l { 1.0 } else { 0.0 }).collect();
    let body = match config.variant {
        Variant::LstmNet => {
            let mut net = init_lstm(config);
            fit(&mut net, rows, &targets, &minibatch_options(config))?;
            Body::Lstm(net)
        }
        Variant::DnnNet => {
            let mut net = init_dnn(config);
            fit(&mut net, rows, &targets, &minibatch_options(config))?;
            Body::Dnn(net)
        }
        Variant::LogisticRegression => {
            let mut net = init_logistic(config);
            let options = TrainOptions {
                epochs: config.lr.epochs,
                batch_size: None,
                adam: config.lr.adam,
                seed: config.net_seed("shuffle"),
            };
            fit(&mut net, rows, &targets, &options)?;
            Body::Logistic(net)
        }
        Variant::RandomForest => Body::Forest(Forest::fit(
            rows,
            labels,
            width,
            &config.rf,
            derive_seed(config.seed, "random_forest"),
        )),
    };
    Ok(TrainedModel {
        config: config.clone(),
        normalizer,
        body,
    })
}

/// Fits the normalizer on `train`, then the model selected by `config.variant`.
pub fn train(train: &[DatasetItem], config: &ModelConfig) -> Result<TrainedModel> {
    check_items(train, config)?;
    let normalizer = Normalizer::fit(train)?;
    let rows = normalizer.apply_all(train)?;
    fit_rows(config, normalizer, &rows, &labels_of(train))
}

/// Recurrent two-input net: deltas through the LSTM, engineered features
/// through a ReLU layer, joined and passed through the ReLU head.
pub fn train_lstm_net(items: &[DatasetItem], config: &ModelConfig) -> Result<TrainedModel> {
    train(items, &with_variant(config, Variant::LstmNet))
}

/// Feedforward ReLU net over the whole feature vector.
pub fn train_dnn_net(items: &[DatasetItem], config: &ModelConfig) -> Result<TrainedModel> {
    train(items, &with_variant(config, Variant::DnnNet))
}

/// L2-penalized logistic regression fitted by full-batch Adam.
pub fn train_logreg(items: &[DatasetItem], config: &ModelConfig) -> Result<TrainedModel> {
    train(items, &with_variant(config, Variant::LogisticRegression))
}

/// Bagged CART trees with Gini splits.
pub fn train_random_forest(items: &[DatasetItem], config: &ModelConfig) -> Result<TrainedModel> {
    train(items, &with_variant(config, Variant::RandomForest))
}

impl TrainedModel {
    pub fn variant(&self) -> Variant {
        self.config.variant
    }

    /// Scores already-normalized rows of width `M + 7`.
    pub fn score_rows(&self, rows: &[f64]) -> Result<Vec<f64>> {
        let width = self.config.width();
        if !rows.len().is_multiple_of(width) {
            return Err(Error::Shape(format!(
                "{} values are not rows of width {width}",
                rows.len()
            )));
        }
        let n = rows.len() / width;
        let scores = match &self.body {
            Body::Lstm(net) => predict_rows(net, rows, n),
            Body::Dnn(net) => predict_rows(net, rows, n),
            Body::Logistic(net) => predict_rows(net, rows, n),
            Body::Forest(forest) => rows.chunks_exact(width).map(|r| forest.score(r)).collect(),
        };
        if let Some(bad) = scores.iter().position(|s| !s.is_finite()) {
            return Err(Error::NonFinite(format!("score of row {bad}")));
        }
        Ok(scores)
    }

    /// Probability that more than `gamma` annotations remain.
    pub fn predict_proba(&self, item: &DatasetItem) -> Result<f64> {
        Ok(self.predict_many(std::slice::from_ref(item))?[0])
    }

    pub fn predict_many(&self, items: &[DatasetItem]) -> Result<Vec<f64>> {
        if let Some(bad) = items.iter().find(|i| i.deltas.len() != self.config.window) {
            return Err(Error::Shape(format!(
                "item has {} deltas, model expects M = {}",
                bad.deltas.len(),
                self.config.window
            )));
        }
        let rows = self.normalizer.apply_all(items)?;
        self.score_rows(&rows)
    }

    /// Parameter count of a net, node count of a forest.
    pub fn size(&self) -> usize {
        match &self.body {
            Body::Lstm(net) => net.params().parameter_count(),
            Body::Dnn(net) => net.params().parameter_count(),
            Body::Logistic(net) => net.params().parameter_count(),
            Body::Forest(forest) => forest.trees.iter().map(|t| t.nodes.len()).sum(),
        }
    }
}
