//! Multi-node deployment simulation under seasonal input drift.
//!
//! Every node draws Poisson-triggered samples from the synthetic task,
//! drifts them by month and runs two arms on the identical stream: a
//! frozen copy of the deployed network and a copy adapting its first layer
//! on device.

use rand::Rng;
use rand_distr::{Distribution, Exp, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::energy::{daily_energy, BudgetParams, DailyEnergy, HardwareProfile};
use crate::error::{shape_err, validation_err, Error, Result};
use crate::io::{encode_sample, EncodingParams, SyntheticTask};
use crate::plasticity::{CountingSink, PlasticityConfig, PlasticityEngine};
use crate::rng::{self, derive_seed};
use crate::runtime::{infer_sparse, FixedNetwork, OpCounter};

/// Per-month drift schedules.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DriftModel {
    pub months: usize,
    /// Multiplier on every feature.
    pub gain: Vec<f64>,
    /// Standard deviation of additive Gaussian noise.
    pub noise: Vec<f64>,
    /// Relative inflation of the encoder thresholds.
    pub sensitivity_loss: Vec<f64>,
}

impl DriftModel {
    pub fn identity(months: usize) -> Self {
        Self {
            months,
            gain: vec![1.0; months],
            noise: vec![0.0; months],
            sensitivity_loss: vec![0.0; months],
        }
    }

    /// Linear ramp from no drift in the first month to the given values in
    /// the last.
    pub fn linear(months: usize, final_gain: f64, final_noise: f64, final_loss: f64) -> Self {
        let frac = |m: usize| if months > 1 { m as f64 / (months - 1) as f64 } else { 0.0 };
        Self {
            months,
            gain: (0..months).map(|m| 1.0 + (final_gain - 1.0) * frac(m)).collect(),
            noise: (0..months).map(|m| final_noise * frac(m)).collect(),
            sensitivity_loss: (0..months).map(|m| final_loss * frac(m)).collect(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let m = self.months;
        if m == 0 {
            return validation_err("drift model needs at least one month");
        }
        if self.gain.len() != m || self.noise.len() != m || self.sensitivity_loss.len() != m {
            return shape_err(format!("drift schedules must have {m} entries"));
        }
        if self.gain.iter().any(|&g| !(g > 0.0 && g.is_finite())) {
            return validation_err("gain multipliers must be positive");
        }
        if self.noise.iter().any(|&s| !(s >= 0.0 && s.is_finite())) {
            return validation_err("noise levels must be non-negative");
        }
        if self.sensitivity_loss.iter().any(|&s| !(s > -1.0 && s.is_finite())) {
            return validation_err("sensitivity loss must exceed -1");
        }
        Ok(())
    }
}

/// Homogeneous Poisson arrival times in hours over `days` days.
pub fn trigger_schedule(rate_per_hour: f64, days: usize, r: &mut impl Rng) -> Result<Vec<f64>> {
    if !(rate_per_hour > 0.0 && rate_per_hour.is_finite()) {
        return validation_err("trigger rate must be positive");
    }
    let horizon = 24.0 * days as f64;
    let gap = Exp::new(rate_per_hour).map_err(|e| Error::Validation(e.to_string()))?;
    let mut times = Vec::new();
    let mut t = gap.sample(r);
    while t < horizon {
        times.push(t);
        t += gap.sample(r);
    }
    Ok(times)
}

/// The sample scaled by the month's gain plus the month's noise.
pub fn drift_apply(sample: &[f64], month: usize, model: &DriftModel, r: &mut impl Rng) -> Result<Vec<f64>> {
    if month >= model.months {
        return validation_err(format!("month {month} is outside a {}-month model", model.months));
    }
    let g = model.gain[month];
    let sigma = model.noise[month];
    if sigma == 0.0 {
        return Ok(sample.iter().map(|&x| x * g).collect());
    }
    let n = Normal::new(0.0, sigma).map_err(|e| Error::Validation(e.to_string()))?;
    Ok(sample.iter().map(|&x| x * g + n.sample(r)).collect())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FieldConfig {
    pub nodes: usize,
    pub days_per_month: usize,
    /// Triggered inferences per node per hour.
    pub trigger_rate: f64,
    /// Run the adapting arm next to the frozen one.
    pub adaptation: bool,
    pub plasticity: PlasticityConfig,
    pub encoding: EncodingParams,
    /// Radio, idle and battery terms; `n_inf`, `e_inf` and `n_tx` are
    /// replaced by measured values.
    pub budget: BudgetParams,
    pub seed: u64,
}

impl Default for FieldConfig {
    fn default() -> Self {
        Self {
            nodes: 8,
            days_per_month: 30,
            trigger_rate: 8.2,
            adaptation: true,
            plasticity: PlasticityConfig::default(),
            encoding: EncodingParams::default(),
            budget: BudgetParams::field_node(),
            seed: 0,
        }
    }
}

impl FieldConfig {
    pub fn validate(&self) -> Result<()> {
        if self.nodes == 0 || self.days_per_month == 0 {
            return validation_err("need at least one node and one day per month");
        }
        if !(self.trigger_rate > 0.0 && self.trigger_rate.is_finite()) {
            return validation_err("trigger rate must be positive");
        }
        self.plasticity.validate()?;
        self.budget.validate()
    }
}

/// One arm of one node over one month.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ArmMonth {
    pub correct: u64,
    pub accuracy: f64,
    /// Joules spent on inference during the month.
    pub compute_joules: f64,
    pub energy: DailyEnergy,
    pub flushes: u64,
    pub ac_count: u64,
    pub neuron_updates: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NodeMonth {
    pub node: usize,
    pub inferences: u64,
    pub frozen: ArmMonth,
    pub adapt: Option<ArmMonth>,
}

/// Monthly aggregate over nodes; `month` counts from 1.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TelemetryRecord {
    pub month: usize,
    pub accuracy_adapt: Option<f64>,
    pub accuracy_frozen: f64,
    /// Mean daily energy of the deployed arm (adapting when enabled).
    pub energy_mwh: f64,
    pub energy_frozen_mwh: f64,
    pub flushes: u64,
    pub nodes: Vec<NodeMonth>,
}

#[derive(Default)]
struct ArmTally {
    correct: u64,
    counter: OpCounter,
}

impl ArmTally {
    fn close(&self, inferences: u64, days: usize, profile: &HardwareProfile, budget: &BudgetParams, flushes: u64) -> Result<ArmMonth> {
        let compute_joules = self.counter.ac_count as f64 * profile.e_ac()
            + self.counter.neuron_updates as f64 * profile.e_neuron()
            + inferences as f64 * profile.e_io();
        let n_inf = inferences as f64 / days as f64;
        let energy = daily_energy(&BudgetParams {
            n_inf,
            e_inf: if inferences > 0 { compute_joules / inferences as f64 } else { 0.0 },
            n_tx: n_inf,
            ..budget.clone()
        })?;
        Ok(ArmMonth {
            correct: self.correct,
            accuracy: if inferences > 0 { self.correct as f64 / inferences as f64 } else { 0.0 },
            compute_joules,
            energy,
            flushes,
            ac_count: self.counter.ac_count,
            neuron_updates: self.counter.neuron_updates,
        })
    }
}

fn simulate_node(
    node: usize,
    config: &FieldConfig,
    model: &DriftModel,
    network: &FixedNetwork,
    task: &SyntheticTask,
    profile: &HardwareProfile,
) -> Result<Vec<NodeMonth>> {
    let p = &task.params;
    let base_th = config.encoding.thresholds(p.channels)?;
    let mut stream = rng::stream(config.seed, &format!("fieldsim/node{node}"));
    let mut adapted = config.adaptation.then(|| network.clone());
    let mut engine = match &adapted {
        Some(net) => {
            let pc = PlasticityConfig {
                seed: derive_seed(config.seed, &format!("plasticity/node{node}")),
                ..config.plasticity.clone()
            };
            Some(PlasticityEngine::new(net, 0, pc)?)
        }
        None => None,
    };
    let mut sink = CountingSink::default();
    let mut months = Vec::with_capacity(model.months);

    for month in 0..model.months {
        let th: Vec<f64> = base_th.iter().map(|t| t * (1.0 + model.sensitivity_loss[month])).collect();
        let events = trigger_schedule(config.trigger_rate, config.days_per_month, &mut stream)?.len();
        let mut frozen = ArmTally::default();
        let mut adapt = ArmTally::default();
        let flushes_before = engine.as_ref().map_or(0, |e| e.flushes);

        for _ in 0..events {
            let label = stream.random_range(0..p.num_classes);
            let sample = task.sample(label, &mut stream);
            let drifted = drift_apply(&sample, month, model, &mut stream)?;
            let raster = encode_sample(&drifted, p.channels, p.length, network.descriptor.time_steps, &th)?;

            let out = infer_sparse(network, &raster)?;
            frozen.correct += (out.prediction == label) as u64;
            frozen.counter.merge(&out.counter);

            if let (Some(net), Some(eng)) = (adapted.as_mut(), engine.as_mut()) {
                let out = infer_sparse(net, &raster)?;
                adapt.correct += (out.prediction == label) as u64;
                adapt.counter.merge(&out.counter);
                eng.step_inference(net, &raster, &out.hidden[0], &mut sink)?;
            }
        }

        let n = events as u64;
        let days = config.days_per_month;
        let adapt_month = match &engine {
            Some(e) => Some(adapt.close(n, days, profile, &config.budget, e.flushes - flushes_before)?),
            None => None,
        };
        months.push(NodeMonth {
            node,
            inferences: n,
            frozen: frozen.close(n, days, profile, &config.budget, 0)?,
            adapt: adapt_month,
        });
    }
    Ok(months)
}

/// Runs every node over every month of `model`; deterministic per seed
/// whatever the thread count.
pub fn simulate_deployment(
    config: &FieldConfig,
    model: &DriftModel,
    network: &FixedNetwork,
    task: &SyntheticTask,
    profile: &HardwareProfile,
) -> Result<Vec<TelemetryRecord>> {
    config.validate()?;
    model.validate()?;
    let d = &network.descriptor;
    if d.input_dim != task.params.channels || d.num_classes != task.params.num_classes {
        return shape_err(format!(
            "network expects {} inputs and {} classes, task has {} and {}",
            d.input_dim, d.num_classes, task.params.channels, task.params.num_classes
        ));
    }
    let per_node: Vec<Vec<NodeMonth>> = (0..config.nodes)
        .into_par_iter()
        .map(|n| simulate_node(n, config, model, network, task, profile))
        .collect::<Result<_>>()?;

    let k = config.nodes as f64;
    Ok((0..model.months)
        .map(|m| {
            let nodes: Vec<NodeMonth> = per_node.iter().map(|v| v[m].clone()).collect();
            let mean = |f: &dyn Fn(&NodeMonth) -> f64| nodes.iter().map(f).sum::<f64>() / k;
            let accuracy_adapt = config.adaptation.then(|| mean(&|n| n.adapt.as_ref().map_or(0.0, |a| a.accuracy)));
            let energy_frozen_mwh = mean(&|n| n.frozen.energy.total);
            TelemetryRecord {
                month: m + 1,
                accuracy_adapt,
                accuracy_frozen: mean(&|n| n.frozen.accuracy),
                energy_mwh: if config.adaptation {
                    mean(&|n| n.adapt.as_ref().map_or(0.0, |a| a.energy.total))
                } else {
                    energy_frozen_mwh
                },
                energy_frozen_mwh,
                flushes: nodes.iter().map(|n| n.adapt.as_ref().map_or(0, |a| a.flushes)).sum(),
                nodes,
            }
        })
        .collect())
}

/// Share of the frozen arm's accuracy loss won back by adaptation in the
/// final month, clamped to `[0, 1.5]`.
pub fn recovery_fraction(telemetry: &[TelemetryRecord]) -> Result<f64> {
    let (first, last) = match (telemetry.first(), telemetry.last()) {
        (Some(f), Some(l)) => (f, l),
        _ => return validation_err("telemetry is empty"),
    };
    let adapt = last
        .accuracy_adapt
        .ok_or_else(|| Error::Validation("telemetry has no adapting arm".into()))?;
    let loss = first.accuracy_frozen - last.accuracy_frozen;
    if loss == 0.0 {
        return Err(Error::Undefined("frozen arm shows no accuracy change".into()));
    }
    Ok(((adapt - last.accuracy_frozen) / loss).clamp(0.0, 1.5))
}

/// Accuracy drop from the first to the last month of one arm.
pub fn degradation(telemetry: &[TelemetryRecord], adapt: bool) -> Option<f64> {
    let acc = |r: &TelemetryRecord| if adapt { r.accuracy_adapt } else { Some(r.accuracy_frozen) };
    Some(acc(telemetry.first()?)? - acc(telemetry.last()?)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::energy::CORTEX_M4;
    use crate::io::GeneratorParams;
    use crate::runtime::quantize_weights;
    use crate::snn::{build_network, ArchDescriptor, Connectivity, DecayMode, SkipPattern};

    #[test]
    fn poisson_daily_count() {
        let mut r = rng::stream(5, "t");
        let counts: Vec<f64> = (0..100).map(|_| trigger_schedule(8.2, 1, &mut r).unwrap().len() as f64).collect();
        let mean = counts.iter().sum::<f64>() / 100.0;
        // standard error of the mean is sqrt(196.8 / 100)
        assert!((mean - 196.8).abs() < 3.0 * (196.8f64 / 100.0).sqrt(), "{mean}");
        let sparse = trigger_schedule(1e-4, 1, &mut r).unwrap();
        assert!(sparse.len() <= 1);
        let a = trigger_schedule(8.2, 2, &mut rng::stream(1, "x")).unwrap();
        let b = trigger_schedule(8.2, 2, &mut rng::stream(1, "x")).unwrap();
        assert_eq!(a, b);
        assert!(a.windows(2).all(|w| w[0] <= w[1]));
        assert!(trigger_schedule(0.0, 1, &mut r).is_err());
    }

    #[test]
    fn drift_identity_and_gain() {
        let s = [0.1, 0.5, -0.3];
        let mut r = rng::stream(0, "d");
        assert_eq!(drift_apply(&s, 0, &DriftModel::identity(2), &mut r).unwrap(), s);
        let mut m = DriftModel::identity(2);
        m.gain[1] = 2.0;
        assert_eq!(drift_apply(&s, 1, &m, &mut r).unwrap(), vec![0.2, 1.0, -0.6]);
        assert!(drift_apply(&s, 2, &m, &mut r).is_err());
        m.gain[0] = 0.0;
        assert!(m.validate().is_err());
    }

    #[test]
    fn linear_schedule_endpoints() {
        let m = DriftModel::linear(7, 0.8, 0.1, 0.2);
        assert_eq!(m.gain[0], 1.0);
        assert!((m.gain[6] - 0.8).abs() < 1e-12);
        assert_eq!(m.noise[0], 0.0);
        assert!(m.gain.windows(2).all(|w| w[1] < w[0]));
    }

    fn record(frozen: f64, adapt: f64) -> TelemetryRecord {
        TelemetryRecord {
            month: 1,
            accuracy_adapt: Some(adapt),
            accuracy_frozen: frozen,
            energy_mwh: 0.0,
            energy_frozen_mwh: 0.0,
            flushes: 0,
            nodes: vec![],
        }
    }

    #[test]
    fn recovery_examples() {
        let t = [record(0.910, 0.910), record(0.889, 0.903)];
        assert!((recovery_fraction(&t).unwrap() - 0.014 / 0.021).abs() < 1e-9);
        let t = [record(0.91, 0.91), record(0.88, 0.88)];
        assert_eq!(recovery_fraction(&t).unwrap(), 0.0);
        let t = [record(0.91, 0.91), record(0.88, 0.91)];
        assert!((recovery_fraction(&t).unwrap() - 1.0).abs() < 1e-12);
        let t = [record(0.91, 0.91), record(0.91, 0.95)];
        assert!(matches!(recovery_fraction(&t), Err(Error::Undefined(_))));
    }

    fn small_setup() -> (FixedNetwork, SyntheticTask) {
        let p = GeneratorParams {
            channels: 6,
            length: 4,
            num_classes: 3,
            ..GeneratorParams::default()
        };
        let task = SyntheticTask::new(p, 2).unwrap();
        let d = ArchDescriptor::uniform(2, 10, 4, DecayMode::Fixed, Connectivity::Dense, SkipPattern::None, 6, 3);
        (quantize_weights(&build_network(&d, 4).unwrap()).unwrap(), task)
    }

    fn small_config() -> FieldConfig {
        FieldConfig {
            nodes: 3,
            days_per_month: 2,
            plasticity: PlasticityConfig {
                flush_interval: 50,
                ..PlasticityConfig::default()
            },
            seed: 11,
            ..FieldConfig::default()
        }
    }

    fn profile() -> HardwareProfile {
        crate::energy::ProfileRegistry::default().get(CORTEX_M4).unwrap().clone()
    }

    #[test]
    fn deterministic_across_thread_counts() {
        let (net, task) = small_setup();
        let model = DriftModel::linear(3, 0.8, 0.1, 0.1);
        let run = |threads| {
            rayon::ThreadPoolBuilder::new()
                .num_threads(threads)
                .build()
                .unwrap()
                .install(|| simulate_deployment(&small_config(), &model, &net, &task, &profile()).unwrap())
        };
        let a = run(1);
        assert_eq!(a, run(4));
        assert_eq!(a.len(), 3);
        assert!(a.iter().all(|r| (0.0..=1.0).contains(&r.accuracy_frozen)));
        assert!(a.iter().any(|r| r.flushes > 0));
    }

    #[test]
    fn arms_agree_without_adaptation_updates() {
        let (net, task) = small_setup();
        let mut cfg = small_config();
        cfg.plasticity.flush_interval = 1_000_000;
        let t = simulate_deployment(&cfg, &DriftModel::identity(1), &net, &task, &profile()).unwrap();
        for n in &t[0].nodes {
            let a = n.adapt.as_ref().unwrap();
            assert_eq!(a.correct, n.frozen.correct);
            assert_eq!(a.ac_count, n.frozen.ac_count);
        }
    }

    #[test]
    fn energy_closes_over_counters() {
        let (net, task) = small_setup();
        let cfg = FieldConfig {
            adaptation: false,
            ..small_config()
        };
        let prof = profile();
        let t = simulate_deployment(&cfg, &DriftModel::identity(2), &net, &task, &prof).unwrap();
        for r in &t {
            assert!(r.accuracy_adapt.is_none());
            for n in &r.nodes {
                let days = cfg.days_per_month as f64;
                let b = &cfg.budget;
                let joules = n.frozen.ac_count as f64 * prof.e_ac()
                    + n.frozen.neuron_updates as f64 * prof.e_neuron()
                    + n.inferences as f64 * prof.e_io();
                let expect = (joules / days + n.inferences as f64 / days * b.lora_tx + b.i_q * b.v * b.dt) / 3.6;
                assert!((n.frozen.energy.total - expect).abs() <= 1e-12 * expect);
            }
        }
    }
}
