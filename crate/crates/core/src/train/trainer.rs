use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::bptt::bptt_backward;
use super::data::{LabeledRasters, TrainData};
use super::optim::{flatten_params, AdamW};
use super::schedule::{cosine_lr, curriculum_k, TrainConfig};
use crate::error::{validation_err, Error, Result};
use crate::rng;
use crate::snn::{build_network, forward_dense, ArchDescriptor, NetworkParams};

/// One row of the training history.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub lr: f64,
    pub k: f64,
    pub loss: f64,
    pub ce: f64,
    pub activity: f64,
    pub l2: f64,
    pub val_accuracy: f64,
    /// Mean hidden firing rate on the validation split.
    pub mean_rate: f64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct History {
    pub epochs: Vec<EpochRecord>,
}

impl History {
    pub fn last(&self) -> Option<&EpochRecord> {
        self.epochs.last()
    }

    pub fn final_accuracy(&self) -> f64 {
        self.last().map_or(0.0, |r| r.val_accuracy)
    }

    pub fn final_rate(&self) -> f64 {
        self.last().map_or(0.0, |r| r.mean_rate)
    }
}

/// Accuracy and mean hidden firing rate of a network on a labelled set.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Evaluation {
    pub accuracy: f64,
    pub mean_rate: f64,
}

/// Evaluation-mode pass over a labelled set.
pub fn evaluate(net: &NetworkParams, data: &LabeledRasters) -> Result<Evaluation> {
    if data.is_empty() {
        return validation_err("evaluation set is empty");
    }
    let mut correct = 0usize;
    let mut rate = 0.0;
    for (r, &y) in data.rasters.iter().zip(&data.labels) {
        let out = forward_dense(net, r)?;
        correct += (out.prediction() == y) as usize;
        rate += out.rates.iter().sum::<f64>() / out.rates.len() as f64;
    }
    let n = data.len() as f64;
    Ok(Evaluation {
        accuracy: correct as f64 / n,
        mean_rate: rate / n,
    })
}

/// Builds a network for `descriptor` and trains it from scratch.
pub fn train_model(
    data: &TrainData,
    descriptor: &ArchDescriptor,
    config: &TrainConfig,
) -> Result<(NetworkParams, History)> {
    let mut net = build_network(descriptor, config.seed)?;
    let history = fine_tune(&mut net, data, config)?;
    Ok((net, history))
}

/// Trains an existing network in place for `config.epochs` epochs.
pub fn fine_tune(net: &mut NetworkParams, data: &TrainData, config: &TrainConfig) -> Result<History> {
    config.validate()?;
    if data.train.is_empty() || data.val.is_empty() {
        return validation_err("training and validation splits must be non-empty");
    }
    if config.bntt_enabled {
        net.enable_bntt();
    }
    let mut opt = AdamW::new(
        flatten_params(net).values.len(),
        config.adam_beta1,
        config.adam_beta2,
        config.adam_eps,
    );
    let mut history = History::default();
    let mut order: Vec<usize> = (0..data.train.len()).collect();

    for epoch in 0..config.epochs {
        let lr = cosine_lr(epoch, config);
        let k = curriculum_k(epoch, config);
        order.sort_unstable();
        order.shuffle(&mut rng::stream(config.seed, &format!("shuffle/{epoch}")));

        let mut sums = [0.0; 4];
        let mut batches = 0usize;
        for chunk in order.chunks(config.batch_size) {
            let batch: Vec<_> = chunk
                .iter()
                .map(|&i| (&data.train.rasters[i], data.train.labels[i]))
                .collect();
            let pass = bptt_backward(net, &batch, config, epoch).map_err(|e| match e {
                Error::Numeric(detail) => Error::Divergence { epoch, detail },
                other => other,
            })?;
            if !pass.loss.is_finite() {
                return Err(Error::Divergence {
                    epoch,
                    detail: format!("non-finite loss {}", pass.loss.total),
                });
            }
            for (layer, stats) in net.hidden.iter_mut().zip(&pass.bn_stats) {
                if let (Some(bn), Some(stats)) = (&mut layer.bntt, stats) {
                    for (t, st) in stats.iter().enumerate() {
                        bn.update_running(t, st);
                    }
                }
            }
            opt.step_network(net, &pass.grads, lr, config.lambda_w)?;
            sums[0] += pass.loss.total;
            sums[1] += pass.loss.ce;
            sums[2] += pass.loss.activity;
            sums[3] += pass.loss.l2;
            batches += 1;
        }

        let eval = evaluate(net, &data.val)?;
        let b = batches as f64;
        history.epochs.push(EpochRecord {
            epoch,
            lr,
            k,
            loss: sums[0] / b,
            ce: sums[1] / b,
            activity: sums[2] / b,
            l2: sums[3] / b,
            val_accuracy: eval.accuracy,
            mean_rate: eval.mean_rate,
        });
    }
    Ok(history)
}
