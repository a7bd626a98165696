//! Versioned JSON model files.

use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use super::{
    init_dnn, init_logistic, init_lstm, Body, DecisionTree, Forest, ModelConfig, TrainedModel,
    Variant,
};
use crate::error::{Error, Result};
use crate::featurizer::Normalizer;
use crate::nn::{Network, ParamStore, Tensor};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct Envelope {
    schema_version: u32,
    variant: Variant,
    config: ModelConfig,
    normalizer: Normalizer,
    #[serde(default)]
    parameters: Vec<Tensor>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    trees: Vec<DecisionTree>,
}

/// `<variant>_M<M>_g<gamma>_fold<k>.model.json`
pub fn model_file_name(variant: Variant, window: usize, gamma: u32, fold: usize) -> String {
    format!("{}_M{window}_g{gamma}_fold{fold}.model.json", variant.key())
}

pub fn save_model<W: Write>(model: &TrainedModel, mut sink: W) -> Result<()> {
    let (parameters, trees) = match &model.body {
        Body::Lstm(net) => (net.params().tensors().to_vec(), Vec::new()),
        Body::Dnn(net) => (net.params().tensors().to_vec(), Vec::new()),
        Body::Logistic(net) => (net.params().tensors().to_vec(), Vec::new()),
        Body::Forest(forest) => (Vec::new(), forest.trees.clone()),
    };
    let envelope = Envelope {
        schema_version: SCHEMA_VERSION,
        variant: model.variant(),
        config: model.config.clone(),
        normalizer: model.normalizer.clone(),
        parameters,
        trees,
    };
    serde_json::to_writer_pretty(&mut sink, &envelope)?;
    sink.write_all(b"\n")?;
    Ok(())
}

fn restore<N: Network>(mut net: N, tensors: Vec<Tensor>) -> Result<N> {
    let mut store = ParamStore::new();
    for t in tensors {
        if t.shape.iter().product::<usize>() != t.values.len() {
            return Err(Error::Shape(format!(
                "tensor `{}` length disagrees with its shape",
                t.name
            )));
        }
        store.push(t.name, t.shape, t.values);
    }
    store.validate()?;
    if !store.same_layout(net.params()) {
        return Err(Error::Shape(
            "stored parameters do not match the configured architecture".into(),
        ));
    }
    *net.params_mut() = store;
    Ok(net)
}

pub fn load_model<R: Read>(source: R) -> Result<TrainedModel> {
    let raw: serde_json::Value = serde_json::from_reader(source)?;
    let version = raw
        .get("schema_version")
        .and_then(serde_json::Value::as_u64)
        .ok_or_else(|| Error::invalid("model file has no schema_version"))?;
    if version != u64::from(SCHEMA_VERSION) {
        return Err(Error::SchemaVersion(
            u32::try_from(version).unwrap_or(u32::MAX),
        ));
    }
    let variant = raw
        .get("variant")
        .and_then(serde_json::Value::as_str)
        .ok_or_else(|| Error::invalid("model file has no variant"))?;
    let variant = Variant::parse(variant)?;

    let envelope: Envelope = serde_json::from_value(raw)?;
    let config = envelope.config;
    if config.variant != variant {
        return Err(Error::invalid(format!(
            "envelope variant `{variant}` disagrees with config variant `{}`",
            config.variant
        )));
    }
    config.validate()?;
    if envelope.normalizer.width() != config.width() {
        return Err(Error::Shape("normalizer width does not match M + 7".into()));
    }

    let body = match variant {
        Variant::LstmNet => Body::Lstm(restore(init_lstm(&config), envelope.parameters)?),
        Variant::DnnNet => Body::Dnn(restore(init_dnn(&config), envelope.parameters)?),
        Variant::LogisticRegression => {
            Body::Logistic(restore(init_logistic(&config), envelope.parameters)?)
        }
        Variant::RandomForest => {
            if envelope.trees.is_empty() {
                return Err(Error::invalid("forest model has no trees"));
            }
            for tree in &envelope.trees {
                check_tree(tree, config.width())?;
            }
            Body::Forest(Forest {
                width: config.width(),
                trees: envelope.trees,
            })
        }
    };
    Ok(TrainedModel {
        config,
        normalizer: envelope.normalizer,
        body,
    })
}

/// Children must point forward so traversal always terminates.
fn check_tree(tree: &DecisionTree, width: usize) -> Result<()> {
    use super::TreeNode;
    let n = tree.nodes.len();
    if n == 0 {
        return Err(Error::invalid("empty tree"));
    }
    for (i, node) in tree.nodes.iter().enumerate() {
        match *node {
            TreeNode::Split {
                feature,
                threshold,
                left,
                right,
            } => {
                if feature >= width
                    || !threshold.is_finite()
                    || left <= i
                    || right <= i
                    || left >= n
                    || right >= n
                {
                    return Err(Error::invalid(format!("malformed split node {i}")));
                }
            }
            TreeNode::Leaf {
                positive_fraction, ..
            } => {
                if !(0.0..=1.0).contains(&positive_fraction) {
                    return Err(Error::invalid(format!("leaf {i} fraction outside [0, 1]")));
                }
            }
        }
    }
    Ok(())
}
