use std::collections::BTreeMap;

use crate::error::{shape_err, Error, Result};
use crate::snn::SpikeRaster;

/// Encoded samples with class labels.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct LabeledRasters {
    pub rasters: Vec<SpikeRaster>,
    pub labels: Vec<usize>,
}

impl LabeledRasters {
    pub fn new(rasters: Vec<SpikeRaster>, labels: Vec<usize>) -> Result<Self> {
        if rasters.len() != labels.len() {
            return shape_err(format!(
                "{} rasters but {} labels",
                rasters.len(),
                labels.len()
            ));
        }
        Ok(Self { rasters, labels })
    }

    pub fn len(&self) -> usize {
        self.rasters.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rasters.is_empty()
    }

    /// Samples at the given indices, in that order.
    pub fn subset(&self, idx: &[usize]) -> Self {
        Self {
            rasters: idx.iter().map(|&i| self.rasters[i].clone()).collect(),
            labels: idx.iter().map(|&i| self.labels[i]).collect(),
        }
    }
}

/// Training and validation splits for one encoding window.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct TrainData {
    pub train: LabeledRasters,
    pub val: LabeledRasters,
}

/// Splits of one task encoded at several window lengths.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct TaskData {
    pub input_dim: usize,
    pub num_classes: usize,
    pub by_steps: BTreeMap<usize, TrainData>,
}

impl TaskData {
    pub fn for_steps(&self, time_steps: usize) -> Result<&TrainData> {
        self.by_steps.get(&time_steps).ok_or_else(|| {
            Error::Validation(format!("task has no encoding with {time_steps} time steps"))
        })
    }
}
