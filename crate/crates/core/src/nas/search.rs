//! Candidate evaluation and the search driver.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::constraints::{memory_footprint, prune_infeasible_with, ConstraintSet, Footprint};
use super::pareto::{knee_index, pareto_front_indices, ParetoPoint};
use super::rho::{estimate_rho, RhoEstimate, RHO_BATCHES};
use super::space::{enumerate_space, SearchSpace};
use super::supernet::{supernet_covers, Supernet};
use crate::energy::{proxy_energy_with, EnergyBreakdown, HardwareProfile, ProxyMode};
use crate::error::{validation_err, Error, Result};
use crate::rng;
use crate::snn::{build_network, ArchDescriptor, SpikeRaster};
use crate::train::{evaluate, fine_tune, LabeledRasters, TaskData, TrainConfig, TrainData};

/// Search settings.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct NasConfig {
    pub proxy_epochs: usize,
    /// Fraction of the training split used for proxy fine-tuning.
    pub proxy_fraction: f64,
    /// Uniform activity assumed before training.
    pub rho_prior: f64,
    /// Samples per activity-estimate batch.
    pub rho_batch_size: usize,
    pub proxy_mode: ProxyMode,
    pub use_supernet: bool,
    pub seed: u64,
    /// Base training settings (epochs and BNTT are set per candidate).
    pub train: TrainConfig,
}

impl Default for NasConfig {
    fn default() -> Self {
        Self {
            proxy_epochs: 10,
            proxy_fraction: 0.2,
            rho_prior: 0.25,
            rho_batch_size: 16,
            proxy_mode: ProxyMode::Verbatim,
            use_supernet: false,
            seed: 0,
            train: TrainConfig::default(),
        }
    }
}

impl NasConfig {
    pub fn validate(&self) -> Result<()> {
        if self.proxy_epochs == 0 || self.rho_batch_size == 0 {
            return validation_err("proxy_epochs and rho_batch_size must be positive");
        }
        if !(self.proxy_fraction > 0.0 && self.proxy_fraction <= 1.0) {
            return validation_err("proxy_fraction must lie in (0, 1]");
        }
        if !(0.0..=1.0).contains(&self.rho_prior) {
            return validation_err("rho_prior must lie in [0, 1]");
        }
        Ok(())
    }

    /// Training settings for one candidate.
    pub fn candidate_train_config(&self, descriptor: &ArchDescriptor, epochs: usize) -> TrainConfig {
        TrainConfig {
            epochs,
            bntt_enabled: descriptor.time_steps >= 8,
            seed: candidate_seed(self.seed, descriptor),
            ..self.train.clone()
        }
    }
}

/// Per-candidate seed derived from the global seed and the descriptor.
pub fn candidate_seed(global: u64, descriptor: &ArchDescriptor) -> u64 {
    rng::derive_seed(global, &descriptor.key())
}

/// Deterministic subset of `fraction` of the training split.
pub fn proxy_split(data: &TrainData, fraction: f64, seed: u64) -> TrainData {
    use rand::seq::SliceRandom;
    let n = data.train.len();
    let k = ((n as f64 * fraction).round() as usize).clamp(1.min(n), n);
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut rng::stream(seed, "proxy-split"));
    idx.truncate(k);
    idx.sort_unstable();
    TrainData {
        train: data.train.subset(&idx),
        val: data.val.clone(),
    }
}

/// Five batches of validation samples for the activity estimate (wrapping
/// around when the split is small).
fn rho_batches(val: &LabeledRasters, batch: usize) -> Vec<Vec<SpikeRaster>> {
    (0..RHO_BATCHES)
        .map(|b| {
            (0..batch)
                .map(|i| val.rasters[(b * batch + i) % val.len()].clone())
                .collect()
        })
        .collect()
}

/// Outcome of one candidate evaluation.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CandidateResult {
    /// Position in the enumeration.
    pub index: usize,
    pub descriptor: ArchDescriptor,
    pub predicted_energy: f64,
    /// Measured values; `None` when pruned before training or failed.
    pub accuracy: Option<f64>,
    pub energy: Option<EnergyBreakdown>,
    pub rho_input: Vec<f64>,
    pub rho_layer: Vec<f64>,
    pub footprint: Footprint,
    /// Passed the pre-training screen.
    pub screened: bool,
    /// Measured point satisfies every constraint.
    pub feasible: bool,
    pub failure: Option<String>,
}

impl CandidateResult {
    pub fn point(&self) -> Option<ParetoPoint> {
        match (self.accuracy, self.energy) {
            (Some(accuracy), Some(e)) if self.feasible => Some(ParetoPoint {
                descriptor: self.descriptor.clone(),
                accuracy,
                energy: e.total,
                footprint: self.footprint,
            }),
            _ => None,
        }
    }
}

/// Measured accuracy, activity and energy of a trained candidate.
#[derive(Clone, Debug, PartialEq)]
pub struct ProxyOutcome {
    pub accuracy: f64,
    pub rho: RhoEstimate,
    pub energy: EnergyBreakdown,
    pub footprint: Footprint,
}

/// Fine-tunes one candidate for `epochs` on the proxy split (from a
/// supernet slice when given, else from fresh initialisation) and measures
/// its point.
pub fn proxy_eval(
    descriptor: &ArchDescriptor,
    task: &TaskData,
    config: &NasConfig,
    profile: &HardwareProfile,
    supernet: Option<&Supernet>,
) -> Result<ProxyOutcome> {
    let seed = candidate_seed(config.seed, descriptor);
    let data = proxy_split(task.for_steps(descriptor.time_steps)?, config.proxy_fraction, seed);
    let tc = config.candidate_train_config(descriptor, config.proxy_epochs);
    evaluate_candidate(descriptor, &data, &tc, config, profile, supernet)
}

/// Trains a candidate on `data` with `tc` and measures it.
pub fn evaluate_candidate(
    descriptor: &ArchDescriptor,
    data: &TrainData,
    tc: &TrainConfig,
    config: &NasConfig,
    profile: &HardwareProfile,
    supernet: Option<&Supernet>,
) -> Result<ProxyOutcome> {
    let mut net = match supernet {
        Some(s) if supernet_covers(s.envelope(), descriptor) => s.extract(descriptor, tc.seed)?,
        _ => build_network(descriptor, tc.seed)?,
    };
    fine_tune(&mut net, data, tc)?;
    let accuracy = evaluate(&net, &data.val)?.accuracy;
    let batches = rho_batches(&data.val, config.rho_batch_size);
    let refs: Vec<&[SpikeRaster]> = batches.iter().map(Vec::as_slice).collect();
    let rho = estimate_rho(&net, &refs)?;
    let energy = proxy_energy_with(descriptor, &rho.input, profile, config.proxy_mode)?;
    Ok(ProxyOutcome {
        accuracy,
        rho,
        energy,
        footprint: memory_footprint(descriptor)?,
    })
}

/// Full search output.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SearchReport {
    pub candidates: Vec<CandidateResult>,
    pub front: Vec<ParetoPoint>,
    pub knee: Option<ParetoPoint>,
}

/// Enumerates, screens, evaluates (in parallel) and extracts the front.
pub fn run_search(
    space: &SearchSpace,
    task: &TaskData,
    constraints: &ConstraintSet,
    profile: &HardwareProfile,
    config: &NasConfig,
    supernet: Option<&Supernet>,
) -> Result<SearchReport> {
    config.validate()?;
    if task.input_dim != space.input_dim || task.num_classes != space.num_classes {
        return validation_err("task I/O sizes do not match the search space");
    }
    let all = enumerate_space(space)?;
    let screened = prune_infeasible_with(&all, constraints, profile, config.rho_prior, config.proxy_mode)?;
    let mut results: Vec<CandidateResult> = all
        .iter()
        .enumerate()
        .map(|(index, d)| -> Result<CandidateResult> {
            let rho = vec![config.rho_prior; d.depth];
            Ok(CandidateResult {
                index,
                descriptor: d.clone(),
                predicted_energy: proxy_energy_with(d, &rho, profile, config.proxy_mode)?.total,
                accuracy: None,
                energy: None,
                rho_input: Vec::new(),
                rho_layer: Vec::new(),
                footprint: memory_footprint(d)?,
                screened: false,
                feasible: false,
                failure: None,
            })
        })
        .collect::<Result<_>>()?;

    let evaluated: Vec<(usize, Result<ProxyOutcome>)> = screened
        .par_iter()
        .map(|c| (c.index, proxy_eval(&c.descriptor, task, config, profile, supernet)))
        .collect();

    for (index, outcome) in evaluated {
        let r = &mut results[index];
        r.screened = true;
        match outcome {
            Ok(o) => {
                r.feasible = constraints.admits(o.energy.total, &o.footprint, &r.descriptor);
                r.accuracy = Some(o.accuracy);
                r.energy = Some(o.energy);
                r.rho_input = o.rho.input;
                r.rho_layer = o.rho.layer;
            }
            Err(e @ (Error::Divergence { .. } | Error::Numeric(_))) => r.failure = Some(e.to_string()),
            Err(e) => return Err(e),
        }
    }

    let points: Vec<ParetoPoint> = results.iter().filter_map(CandidateResult::point).collect();
    let pairs: Vec<(f64, f64)> = points.iter().map(|p| (p.energy, p.accuracy)).collect();
    let front: Vec<ParetoPoint> = pareto_front_indices(&pairs)
        .into_iter()
        .map(|i| points[i].clone())
        .collect();
    let front_pairs: Vec<(f64, f64)> = front.iter().map(|p| (p.energy, p.accuracy)).collect();
    let knee = knee_index(&front_pairs).map(|i| front[i].clone());
    Ok(SearchReport {
        candidates: results,
        front,
        knee,
    })
}

/// Spearman rank correlation with average ranks for ties.
pub fn spearman(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() || a.len() < 2 {
        return validation_err("rank correlation needs two equal-length series of length >= 2");
    }
    let ranks = |v: &[f64]| -> Vec<f64> {
        let mut idx: Vec<usize> = (0..v.len()).collect();
        idx.sort_by(|&i, &j| v[i].total_cmp(&v[j]));
        let mut r = vec![0.0; v.len()];
        let mut i = 0;
        while i < idx.len() {
            let mut j = i;
            while j + 1 < idx.len() && v[idx[j + 1]] == v[idx[i]] {
                j += 1;
            }
            let avg = (i + j) as f64 / 2.0 + 1.0;
            for &k in &idx[i..=j] {
                r[k] = avg;
            }
            i = j + 1;
        }
        r
    };
    let (ra, rb) = (ranks(a), ranks(b));
    let n = a.len() as f64;
    let (ma, mb) = (ra.iter().sum::<f64>() / n, rb.iter().sum::<f64>() / n);
    let cov: f64 = ra.iter().zip(&rb).map(|(x, y)| (x - ma) * (y - mb)).sum();
    let va: f64 = ra.iter().map(|x| (x - ma).powi(2)).sum();
    let vb: f64 = rb.iter().map(|y| (y - mb).powi(2)).sum();
    if va == 0.0 || vb == 0.0 {
        return Ok(0.0);
    }
    Ok(cov / (va * vb).sqrt())
}
