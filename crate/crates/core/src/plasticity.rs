//! On-device trace-based Hebbian adaptation of the first layer.
//!
//! Pre- and post-synaptic traces are exponential moving averages of
//! spikes. Every time step adds `eta * (x_i[t-1] * y_j[t] - lambda_d * w)`
//! to a saturating 16-bit accumulator per synapse (units of 2^-16); every
//! `flush_interval` inferences the accumulated deltas are logged and then
//! folded into the fixed-point weights.

use std::fs::{File, OpenOptions};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{shape_err, validation_err, Error, Result};
use crate::rng::{self, StreamRng};
use crate::runtime::{FixedNetwork, FixedWeights};
use crate::snn::SpikeRaster;

/// Fractional bits of accumulated deltas.
pub const DELTA_FRAC_BITS: u32 = 16;

/// How per-step deltas are rounded into accumulator units.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DeltaRounding {
    /// Round to nearest; deltas below half a unit are lost.
    #[default]
    Nearest,
    /// Round up with probability equal to the fractional part, so the
    /// expected accumulated value equals the exact sum.
    Stochastic,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PlasticityConfig {
    pub eta: f64,
    pub lambda_d: f64,
    /// Post-trace lag in time steps (only 1 is supported).
    pub delta: usize,
    pub trace_decay: f64,
    pub flush_interval: u32,
    pub rounding: DeltaRounding,
    /// Seed of the stochastic-rounding stream.
    pub seed: u64,
}

impl Default for PlasticityConfig {
    fn default() -> Self {
        Self {
            eta: 1e-4,
            lambda_d: 5e-4,
            delta: 1,
            trace_decay: 0.9,
            flush_interval: 1000,
            rounding: DeltaRounding::Nearest,
            seed: 0,
        }
    }
}

impl PlasticityConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.trace_decay > 0.0 && self.trace_decay < 1.0) {
            return validation_err("trace_decay must lie in (0, 1)");
        }
        if self.flush_interval == 0 {
            return validation_err("flush_interval must be at least 1");
        }
        if self.delta != 1 {
            return validation_err("only a one-step post-trace lag is supported");
        }
        if !(self.eta >= 0.0) || !(self.lambda_d >= 0.0) {
            return validation_err("eta and lambda_d must be non-negative");
        }
        Ok(())
    }
}

/// Pre- and post-synaptic traces.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TraceState {
    pub pre: Vec<f64>,
    pub post: Vec<f64>,
}

impl TraceState {
    pub fn zeros(inputs: usize, neurons: usize) -> Self {
        Self {
            pre: vec![0.0; inputs],
            post: vec![0.0; neurons],
        }
    }
}

/// One EMA step of both traces.
pub fn update_traces(pre_spikes: &[u8], post_spikes: &[u8], state: &mut TraceState, config: &PlasticityConfig) -> Result<()> {
    if pre_spikes.len() != state.pre.len() || post_spikes.len() != state.post.len() {
        return shape_err("spike vectors do not match trace widths");
    }
    let g = config.trace_decay;
    for (x, &s) in state.pre.iter_mut().zip(pre_spikes) {
        *x = g * *x + (1.0 - g) * s as f64;
    }
    for (y, &s) in state.post.iter_mut().zip(post_spikes) {
        *y = g * *y + (1.0 - g) * s as f64;
    }
    Ok(())
}

#[inline]
pub fn hebbian_delta(x: f64, y: f64, w: f64, config: &PlasticityConfig) -> f64 {
    config.eta * (x * y - config.lambda_d * w)
}

/// Saturating 16-bit delta buffer, one entry per adapted synapse.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DeltaAccumulator {
    pub acc: Vec<i16>,
    /// Inferences since the last flush.
    pub counter: u32,
    pub overflow: Vec<bool>,
}

impl DeltaAccumulator {
    pub fn zeros(len: usize) -> Self {
        Self {
            acc: vec![0; len],
            counter: 0,
            overflow: vec![false; len],
        }
    }

    pub fn any_overflow(&self) -> bool {
        self.overflow.iter().any(|&o| o)
    }
}

/// Saturating element-wise addition.
pub fn accumulate(acc: &mut DeltaAccumulator, deltas: &[i32]) -> Result<()> {
    if deltas.len() != acc.acc.len() {
        return shape_err("delta vector does not match accumulator");
    }
    for ((a, f), &d) in acc.acc.iter_mut().zip(&mut acc.overflow).zip(deltas) {
        add_saturating(a, f, d);
    }
    Ok(())
}

#[inline]
fn add_saturating(a: &mut i16, flag: &mut bool, d: i32) {
    let s = *a as i32 + d;
    if s > i16::MAX as i32 || s < -(i16::MAX as i32) {
        *flag = true;
    }
    *a = s.clamp(-(i16::MAX as i32), i16::MAX as i32) as i16;
}

/// State memory of an adapted layer: 8 bytes per group of `group_size`
/// synapses.
pub fn state_bytes(nnz: usize, group_size: usize) -> Result<usize> {
    if group_size == 0 {
        return validation_err("group size must be at least 1");
    }
    Ok(8 * nnz.div_ceil(group_size))
}

/// One write-ahead record.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FlushRecord {
    pub sequence: u64,
    pub inferences: u64,
    pub deltas: Vec<i16>,
}

/// Persistent store of flush records.
pub trait FlushSink {
    fn write(&mut self, record: &FlushRecord) -> Result<()>;
}

/// Counts records without storing them; can be told to fail.
#[derive(Clone, Debug, Default)]
pub struct CountingSink {
    pub writes: u64,
    /// Fail every write once this many have succeeded.
    pub fail_after: Option<u64>,
}

impl FlushSink for CountingSink {
    fn write(&mut self, _record: &FlushRecord) -> Result<()> {
        if self.fail_after.is_some_and(|n| self.writes >= n) {
            return Err(Error::Persistence("flush store rejected the write".into()));
        }
        self.writes += 1;
        Ok(())
    }
}

/// Appends records as JSON lines to a file.
pub struct FileWal {
    path: PathBuf,
    out: BufWriter<File>,
}

impl FileWal {
    pub fn open(path: &Path) -> Result<Self> {
        let file = OpenOptions::new().create(true).append(true).open(path)?;
        Ok(Self {
            path: path.to_path_buf(),
            out: BufWriter::new(file),
        })
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    /// Reads every record of a log file.
    pub fn read_all(path: &Path) -> Result<Vec<FlushRecord>> {
        let text = std::fs::read_to_string(path)?;
        text.lines()
            .filter(|l| !l.trim().is_empty())
            .map(|l| serde_json::from_str(l).map_err(Error::from))
            .collect()
    }
}

impl FlushSink for FileWal {
    fn write(&mut self, record: &FlushRecord) -> Result<()> {
        let line = serde_json::to_string(record)?;
        let io = |e: std::io::Error| Error::Persistence(format!("{}: {e}", self.path.display()));
        writeln!(self.out, "{line}").map_err(io)?;
        self.out.flush().map_err(io)?;
        self.out.get_ref().sync_data().map_err(io)
    }
}

/// Outcome of one adapted inference.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct StepReport {
    pub flushed: bool,
    pub paused: bool,
}

/// Adaptation state of one node.
#[derive(Clone, Debug)]
pub struct PlasticityEngine {
    pub config: PlasticityConfig,
    pub traces: TraceState,
    pub acc: DeltaAccumulator,
    pub flushes: u64,
    pub inferences: u64,
    /// Set when a flush could not be persisted; adaptation stops.
    pub paused: Option<String>,
    rng: StreamRng,
    deltas: Vec<f64>,
}

impl PlasticityEngine {
    /// Adaptation of `layer` of `net`; only the first layer is adaptable.
    pub fn new(net: &FixedNetwork, layer: usize, config: PlasticityConfig) -> Result<Self> {
        config.validate()?;
        if layer != 0 {
            return validation_err(format!(
                "only the first layer can adapt on device, layer {layer} requested"
            ));
        }
        let w = &net.layers[0].weights;
        Ok(Self {
            traces: TraceState::zeros(w.fan_in, w.width),
            acc: DeltaAccumulator::zeros(w.nnz()),
            flushes: 0,
            inferences: 0,
            paused: None,
            rng: rng::stream(config.seed, "plasticity"),
            deltas: vec![0.0; w.nnz()],
            config,
        })
    }

    fn quantize_delta(&mut self, d: f64) -> i32 {
        let scaled = d * (1u64 << DELTA_FRAC_BITS) as f64;
        match self.config.rounding {
            DeltaRounding::Nearest => scaled.round_ties_even() as i32,
            DeltaRounding::Stochastic => {
                let floor = scaled.floor();
                let up = self.rng.random::<f64>() < scaled - floor;
                floor as i32 + up as i32
            }
        }
    }

    /// Adapts on one inference: `input` is the first layer's input raster
    /// and `output` its spikes. Flushes when the interval is reached.
    pub fn step_inference(
        &mut self,
        net: &mut FixedNetwork,
        input: &SpikeRaster,
        output: &SpikeRaster,
        sink: &mut dyn FlushSink,
    ) -> Result<StepReport> {
        if self.paused.is_some() {
            return Ok(StepReport {
                flushed: false,
                paused: true,
            });
        }
        let w = &net.layers[0].weights;
        if input.neurons() != w.fan_in || output.neurons() != w.width || input.time_steps() != output.time_steps() {
            return shape_err("adaptation rasters do not match the first layer");
        }
        if self.acc.acc.len() != w.nnz() {
            return shape_err("accumulator does not match the first layer");
        }
        let weights: Vec<f64> = w.values.iter().map(|&q| w.dequantize(q)).collect();
        let posts = w.posts.clone();
        let offsets = w.offsets.clone();
        let mut prev_pre = self.traces.pre.clone();

        // deltas of one inference are summed in float and rounded once
        self.deltas.iter_mut().for_each(|d| *d = 0.0);
        for t in 0..input.time_steps() {
            update_traces(input.frame(t), output.frame(t), &mut self.traces, &self.config)?;
            for j in 0..offsets.len() - 1 {
                let x = prev_pre[j];
                for k in offsets[j] as usize..offsets[j + 1] as usize {
                    let y = self.traces.post[posts[k] as usize];
                    self.deltas[k] += hebbian_delta(x, y, weights[k], &self.config);
                }
            }
            prev_pre.copy_from_slice(&self.traces.pre);
        }
        for k in 0..self.deltas.len() {
            let u = self.quantize_delta(self.deltas[k]);
            add_saturating(&mut self.acc.acc[k], &mut self.acc.overflow[k], u);
        }
        self.acc.counter += 1;
        self.inferences += 1;

        if self.acc.counter < self.config.flush_interval {
            return Ok(StepReport::default());
        }
        let record = FlushRecord {
            sequence: self.flushes,
            inferences: self.inferences,
            deltas: self.acc.acc.clone(),
        };
        if let Err(e) = sink.write(&record) {
            self.paused = Some(e.to_string());
            return Err(e);
        }
        apply_deltas(&mut net.layers[0].weights, &self.acc.acc);
        self.acc.acc.iter_mut().for_each(|a| *a = 0);
        self.acc.counter = 0;
        self.flushes += 1;
        Ok(StepReport {
            flushed: true,
            paused: false,
        })
    }

    /// Clears a paused state so adaptation continues.
    pub fn resume(&mut self) {
        self.paused = None;
    }
}

/// Folds accumulated deltas (units of 2^-16) into stored weights.
pub fn apply_deltas(weights: &mut FixedWeights, deltas: &[i16]) {
    // stored unit is 2^(scale_exp - 12); delta unit is 2^-16
    let shift = DELTA_FRAC_BITS - crate::runtime::fixed::FRAC_BITS + weights.scale_exp;
    let half = 1i64 << (shift - 1);
    for (v, &d) in weights.values.iter_mut().zip(deltas) {
        let d = d as i64;
        let step = if d >= 0 { (d + half) >> shift } else { -((-d + half) >> shift) };
        *v = (*v as i64 + step).clamp(i16::MIN as i64, i16::MAX as i64) as i16;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::runtime::quantize_weights;
    use crate::snn::{build_network, ArchDescriptor, Connectivity, DecayMode, SkipPattern};

    fn cfg() -> PlasticityConfig {
        PlasticityConfig::default()
    }

    #[test]
    fn trace_closed_form() {
        let mut s = TraceState::zeros(1, 1);
        update_traces(&[1], &[0], &mut s, &cfg()).unwrap();
        for k in 1..10 {
            assert!((s.pre[0] - 0.1 * 0.9f64.powi(k - 1)).abs() < 1e-15);
            update_traces(&[0], &[0], &mut s, &cfg()).unwrap();
        }
        let mut s = TraceState::zeros(1, 1);
        for _ in 0..500 {
            update_traces(&[1], &[1], &mut s, &cfg()).unwrap();
        }
        assert!((s.post[0] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn delta_examples() {
        let c = cfg();
        assert_eq!(hebbian_delta(0.0, 0.0, 0.0, &c), 0.0);
        assert!((hebbian_delta(1.0, 1.0, 0.0, &c) - 1e-4).abs() < 1e-20);
        assert!((hebbian_delta(0.0, 0.7, 1.0, &c) + 5e-8).abs() < 1e-20);
    }

    #[test]
    fn accumulator_saturates_and_round_trips() {
        let mut a = DeltaAccumulator::zeros(2);
        accumulate(&mut a, &[0, 0]).unwrap();
        assert_eq!(a.acc, vec![0, 0]);
        accumulate(&mut a, &[123, -7]).unwrap();
        accumulate(&mut a, &[-123, 7]).unwrap();
        assert_eq!(a.acc, vec![0, 0]);
        for _ in 0..10 {
            accumulate(&mut a, &[10_000, 0]).unwrap();
        }
        assert_eq!(a.acc[0], 32_767);
        assert!(a.overflow[0] && !a.overflow[1]);
        assert!(accumulate(&mut a, &[1]).is_err());
    }

    #[test]
    fn byte_accounting() {
        assert_eq!(state_bytes(400, 1).unwrap(), 3200);
        assert_eq!(state_bytes(100, 1).unwrap(), 800);
        assert_eq!(state_bytes(777, 777).unwrap(), 8);
        assert!(state_bytes(10, 0).is_err());
    }

    fn fixed() -> FixedNetwork {
        let d = ArchDescriptor::uniform(2, 8, 4, DecayMode::Fixed, Connectivity::Sparse50, SkipPattern::None, 6, 2);
        quantize_weights(&build_network(&d, 1).unwrap()).unwrap()
    }

    #[test]
    fn only_first_layer() {
        let net = fixed();
        assert!(PlasticityEngine::new(&net, 1, cfg()).is_err());
        assert!(PlasticityEngine::new(&net, 0, cfg()).is_ok());
    }

    #[test]
    fn flush_cadence_and_pause() {
        let mut net = fixed();
        let c = PlasticityConfig {
            flush_interval: 10,
            eta: 0.05,
            ..cfg()
        };
        let mut eng = PlasticityEngine::new(&net, 0, c).unwrap();
        let input = SpikeRaster::from_vec(4, 6, vec![1; 24]).unwrap();
        let output = SpikeRaster::from_vec(4, 8, vec![1; 32]).unwrap();
        let mut sink = CountingSink::default();
        for i in 1..=25 {
            let r = eng.step_inference(&mut net, &input, &output, &mut sink).unwrap();
            assert_eq!(r.flushed, i % 10 == 0);
        }
        assert_eq!(sink.writes, 2);
        assert_eq!(eng.acc.counter, 5);

        let before = net.layers[0].weights.clone();
        let mut failing = CountingSink {
            writes: 0,
            fail_after: Some(0),
        };
        let mut err = None;
        for _ in 0..5 {
            if let Err(e) = eng.step_inference(&mut net, &input, &output, &mut failing) {
                err = Some(e);
            }
        }
        assert!(matches!(err, Some(Error::Persistence(_))));
        assert!(eng.paused.is_some());
        assert_eq!(net.layers[0].weights, before);
        assert!(eng.step_inference(&mut net, &input, &output, &mut sink).unwrap().paused);
    }

    #[test]
    fn flush_moves_weights_by_dequantised_delta() {
        let mut w = fixed().layers[0].weights.clone();
        let before = w.values.clone();
        let unit = 1i16 << (4 + w.scale_exp);
        let deltas: Vec<i16> = (0..w.nnz()).map(|k| if k % 2 == 0 { unit * 3 } else { -unit }).collect();
        apply_deltas(&mut w, &deltas);
        for (k, (a, b)) in w.values.iter().zip(&before).enumerate() {
            let expect = if k % 2 == 0 { 3 } else { -1 };
            assert_eq!(*a as i32 - *b as i32, expect);
        }
    }

    #[test]
    fn wal_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("wal.jsonl");
        let mut wal = FileWal::open(&path).unwrap();
        let rec = FlushRecord {
            sequence: 0,
            inferences: 1000,
            deltas: vec![1, -2, 3],
        };
        wal.write(&rec).unwrap();
        wal.write(&rec).unwrap();
        assert_eq!(FileWal::read_all(&path).unwrap(), vec![rec.clone(), rec]);
    }
}
