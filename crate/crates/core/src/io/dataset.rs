//! Datasets: synthetic generator, binary/CSV storage and spike encoding.
//!
//! A sample is a `length x channels` feature matrix stored row-major by
//! time. On disk, features are little-endian f32 in (sample, time,
//! channel) order next to a little-endian u32 label file, described by a
//! JSON manifest.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{shape_err, validation_err, Error, Result};
use crate::rng::{self, StreamRng};
use crate::snn::{threshold_encode, SpikeRaster};
use crate::train::{LabeledRasters, TaskData, TrainData};

pub const TRAIN: &str = "train";
pub const VAL: &str = "val";

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DataFormat {
    #[default]
    BinaryF32,
    Csv,
}

/// Parameters of the synthetic template task.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GeneratorParams {
    pub num_classes: usize,
    pub channels: usize,
    pub length: usize,
    /// Standard deviation of the circular time shift, in samples.
    pub jitter_sigma: f64,
    pub noise_sigma: f64,
    pub train_per_class: usize,
    pub val_per_class: usize,
}

impl Default for GeneratorParams {
    fn default() -> Self {
        Self {
            num_classes: 4,
            channels: 16,
            length: 8,
            jitter_sigma: 0.5,
            noise_sigma: 0.1,
            train_per_class: 100,
            val_per_class: 50,
        }
    }
}

impl GeneratorParams {
    pub fn validate(&self) -> Result<()> {
        if self.num_classes < 2 || self.channels == 0 || self.length == 0 {
            return validation_err("generator needs >= 2 classes and positive channels/length");
        }
        if self.train_per_class == 0 || self.val_per_class == 0 {
            return validation_err("generator needs samples in both splits");
        }
        if !(self.jitter_sigma >= 0.0) || !(self.noise_sigma >= 0.0) {
            return validation_err("jitter and noise must be non-negative");
        }
        Ok(())
    }
}

/// Files of one split, relative to the manifest.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SplitFiles {
    pub samples: usize,
    pub features: String,
    pub labels: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub name: String,
    pub channels: usize,
    pub length: usize,
    pub num_classes: usize,
    pub format: DataFormat,
    pub splits: BTreeMap<String, SplitFiles>,
    pub generator: Option<GeneratorParams>,
    pub seed: Option<u64>,
}

impl DatasetManifest {
    pub fn feature_dim(&self) -> usize {
        self.channels * self.length
    }
}

/// Feature matrices and labels of one split.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct RawSplit {
    pub samples: Vec<Vec<f64>>,
    pub labels: Vec<usize>,
}

impl RawSplit {
    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    pub name: String,
    pub channels: usize,
    pub length: usize,
    pub num_classes: usize,
    pub train: RawSplit,
    pub val: RawSplit,
    pub generator: Option<GeneratorParams>,
    pub seed: Option<u64>,
}

/// Class templates of the synthetic task.
#[derive(Clone, Debug, PartialEq)]
pub struct SyntheticTask {
    pub params: GeneratorParams,
    /// One `length x channels` template per class.
    pub templates: Vec<Vec<f64>>,
}

impl SyntheticTask {
    pub fn new(params: GeneratorParams, seed: u64) -> Result<Self> {
        params.validate()?;
        let mut r = rng::stream(seed, "gen/templates");
        let n = params.length * params.channels;
        let templates = (0..params.num_classes)
            .map(|_| (0..n).map(|_| r.random::<f64>()).collect())
            .collect();
        Ok(Self { params, templates })
    }

    /// One sample of `class`: the template shifted circularly in time by
    /// `round(N(0, jitter))`, plus Gaussian noise. Values are rounded to
    /// f32 so stored datasets reproduce them exactly.
    pub fn sample(&self, class: usize, r: &mut impl Rng) -> Vec<f64> {
        let p = &self.params;
        let (len, ch) = (p.length as i64, p.channels);
        let shift = if p.jitter_sigma > 0.0 {
            let n: f64 = Normal::new(0.0, p.jitter_sigma).expect("validated sigma").sample(r);
            n.round() as i64
        } else {
            0
        };
        let noise = (p.noise_sigma > 0.0).then(|| Normal::new(0.0, p.noise_sigma).expect("validated sigma"));
        let tpl = &self.templates[class];
        let mut out = Vec::with_capacity(tpl.len());
        for t in 0..len {
            let src = (t - shift).rem_euclid(len) as usize;
            for c in 0..ch {
                let e = noise.as_ref().map_or(0.0, |d| d.sample(r));
                out.push((tpl[src * ch + c] + e) as f32 as f64);
            }
        }
        out
    }

    fn split(&self, per_class: usize, r: &mut StreamRng) -> RawSplit {
        let k = self.params.num_classes;
        let mut split = RawSplit::default();
        for i in 0..per_class * k {
            let class = i % k;
            split.samples.push(self.sample(class, r));
            split.labels.push(class);
        }
        split
    }

    pub fn generate(&self, name: &str, seed: u64) -> Dataset {
        let p = &self.params;
        Dataset {
            name: name.to_string(),
            channels: p.channels,
            length: p.length,
            num_classes: p.num_classes,
            train: self.split(p.train_per_class, &mut rng::stream(seed, "gen/train")),
            val: self.split(p.val_per_class, &mut rng::stream(seed, "gen/val")),
            generator: Some(p.clone()),
            seed: Some(seed),
        }
    }
}

/// Synthetic dataset with balanced labels, deterministic per seed.
pub fn generate_synthetic(name: &str, params: &GeneratorParams, seed: u64) -> Result<Dataset> {
    Ok(SyntheticTask::new(params.clone(), seed)?.generate(name, seed))
}

impl Dataset {
    pub fn validate(&self) -> Result<()> {
        let dim = self.channels * self.length;
        for (name, split) in [(TRAIN, &self.train), (VAL, &self.val)] {
            if split.samples.len() != split.labels.len() {
                return shape_err(format!("{name}: sample and label counts differ"));
            }
            if split.samples.iter().any(|s| s.len() != dim) {
                return shape_err(format!("{name}: sample size does not match {dim}"));
            }
            if split.labels.iter().any(|&l| l >= self.num_classes) {
                return validation_err(format!("{name}: label out of range"));
            }
        }
        Ok(())
    }

    /// Writes the manifest and split files into `dir`; returns the
    /// manifest path.
    pub fn save(&self, dir: &Path, format: DataFormat) -> Result<PathBuf> {
        self.validate()?;
        fs::create_dir_all(dir)?;
        let mut splits = BTreeMap::new();
        for (name, split) in [(TRAIN, &self.train), (VAL, &self.val)] {
            let files = match format {
                DataFormat::BinaryF32 => {
                    let features = format!("{}_{name}.f32", self.name);
                    let labels = format!("{}_{name}.labels.u32", self.name);
                    write_f32(&dir.join(&features), split)?;
                    write_u32(&dir.join(&labels), &split.labels)?;
                    SplitFiles {
                        samples: split.len(),
                        features,
                        labels,
                    }
                }
                DataFormat::Csv => {
                    let features = format!("{}_{name}.csv", self.name);
                    write_csv(&dir.join(&features), split, self.channels, self.length)?;
                    SplitFiles {
                        samples: split.len(),
                        labels: features.clone(),
                        features,
                    }
                }
            };
            splits.insert(name.to_string(), files);
        }
        let manifest = DatasetManifest {
            name: self.name.clone(),
            channels: self.channels,
            length: self.length,
            num_classes: self.num_classes,
            format,
            splits,
            generator: self.generator.clone(),
            seed: self.seed,
        };
        let path = dir.join(format!("{}.json", self.name));
        fs::write(&path, serde_json::to_string_pretty(&manifest)?)?;
        Ok(path)
    }

    /// Reads a dataset through its manifest.
    pub fn load(manifest_path: &Path) -> Result<Self> {
        let manifest: DatasetManifest = serde_json::from_str(&fs::read_to_string(manifest_path)?)?;
        let dir = manifest_path.parent().unwrap_or(Path::new("."));
        let dim = manifest.feature_dim();
        if dim == 0 || manifest.num_classes < 2 {
            return validation_err("manifest declares empty features or fewer than 2 classes");
        }
        let read = |name: &str| -> Result<RawSplit> {
            let files = manifest
                .splits
                .get(name)
                .ok_or_else(|| Error::Format(format!("manifest has no '{name}' split")))?;
            let split = match manifest.format {
                DataFormat::BinaryF32 => RawSplit {
                    samples: read_f32(&dir.join(&files.features), dim)?,
                    labels: read_u32(&dir.join(&files.labels))?,
                },
                DataFormat::Csv => read_csv(&dir.join(&files.features), dim)?,
            };
            if split.samples.len() != files.samples || split.labels.len() != files.samples {
                return shape_err(format!(
                    "{name}: manifest declares {} samples, files hold {} features and {} labels",
                    files.samples,
                    split.samples.len(),
                    split.labels.len()
                ));
            }
            Ok(split)
        };
        let train = read(TRAIN)?;
        let val = read(VAL)?;
        let ds = Dataset {
            name: manifest.name.clone(),
            channels: manifest.channels,
            length: manifest.length,
            num_classes: manifest.num_classes,
            train,
            val,
            generator: manifest.generator.clone(),
            seed: manifest.seed,
        };
        ds.validate()?;
        Ok(ds)
    }
}

fn write_f32(path: &Path, split: &RawSplit) -> Result<()> {
    let mut bytes = Vec::with_capacity(split.samples.iter().map(Vec::len).sum::<usize>() * 4);
    for s in &split.samples {
        for &v in s {
            bytes.extend_from_slice(&(v as f32).to_le_bytes());
        }
    }
    Ok(fs::write(path, bytes)?)
}

fn read_f32(path: &Path, dim: usize) -> Result<Vec<Vec<f64>>> {
    let bytes = fs::read(path)?;
    if bytes.len() % (4 * dim) != 0 {
        return Err(Error::Format(format!(
            "{}: {} bytes is not a whole number of {dim}-feature samples",
            path.display(),
            bytes.len()
        )));
    }
    Ok(bytes
        .chunks_exact(4 * dim)
        .map(|s| {
            s.chunks_exact(4)
                .map(|b| f32::from_le_bytes([b[0], b[1], b[2], b[3]]) as f64)
                .collect()
        })
        .collect())
}

fn write_u32(path: &Path, labels: &[usize]) -> Result<()> {
    let bytes: Vec<u8> = labels.iter().flat_map(|&l| (l as u32).to_le_bytes()).collect();
    Ok(fs::write(path, bytes)?)
}

fn read_u32(path: &Path) -> Result<Vec<usize>> {
    let bytes = fs::read(path)?;
    if bytes.len() % 4 != 0 {
        return Err(Error::Format(format!("{}: truncated label file", path.display())));
    }
    Ok(bytes
        .chunks_exact(4)
        .map(|b| u32::from_le_bytes([b[0], b[1], b[2], b[3]]) as usize)
        .collect())
}

/// CSV layout: `label,f0,f1,...` with features in (time, channel) order.
fn write_csv(path: &Path, split: &RawSplit, channels: usize, length: usize) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    let mut header = vec!["label".to_string()];
    for t in 0..length {
        for c in 0..channels {
            header.push(format!("t{t}_c{c}"));
        }
    }
    w.write_record(&header)?;
    for (s, &l) in split.samples.iter().zip(&split.labels) {
        let mut row = vec![l.to_string()];
        row.extend(s.iter().map(|&v| (v as f32).to_string()));
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

fn read_csv(path: &Path, dim: usize) -> Result<RawSplit> {
    let mut r = csv::Reader::from_path(path)?;
    let mut split = RawSplit::default();
    for (i, rec) in r.records().enumerate() {
        let rec = rec?;
        if rec.len() != dim + 1 {
            return shape_err(format!("{} row {i}: expected {} columns", path.display(), dim + 1));
        }
        let parse_err = |e: &dyn std::fmt::Display| Error::Format(format!("{} row {i}: {e}", path.display()));
        split.labels.push(rec[0].trim().parse::<usize>().map_err(|e| parse_err(&e))?);
        split.samples.push(
            rec.iter()
                .skip(1)
                .map(|v| v.trim().parse::<f32>().map(f64::from).map_err(|e| parse_err(&e)))
                .collect::<Result<_>>()?,
        );
    }
    Ok(split)
}

/// Threshold-crossing encoding settings.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EncodingParams {
    pub threshold: f64,
    /// Per-channel thresholds overriding `threshold`.
    pub per_channel: Option<Vec<f64>>,
}

impl Default for EncodingParams {
    fn default() -> Self {
        Self {
            threshold: 0.5,
            per_channel: None,
        }
    }
}

impl EncodingParams {
    pub fn thresholds(&self, channels: usize) -> Result<Vec<f64>> {
        match &self.per_channel {
            Some(v) if v.len() != channels => shape_err(format!("{} thresholds for {channels} channels", v.len())),
            Some(v) => Ok(v.clone()),
            None => Ok(vec![self.threshold; channels]),
        }
    }
}

/// Encodes one sample into `time_steps` frames; frame `t` reads time index
/// `floor(t * length / time_steps)`.
pub fn encode_sample(
    sample: &[f64],
    channels: usize,
    length: usize,
    time_steps: usize,
    thresholds: &[f64],
) -> Result<SpikeRaster> {
    if sample.len() != channels * length || thresholds.len() != channels {
        return shape_err("sample does not match channels x length");
    }
    if time_steps == 0 {
        return validation_err("time_steps must be positive");
    }
    let mut frames = Vec::with_capacity(time_steps * channels);
    for t in 0..time_steps {
        let src = t * length / time_steps;
        frames.extend_from_slice(&sample[src * channels..(src + 1) * channels]);
    }
    threshold_encode(&frames, thresholds)
}

fn encode_split(ds: &Dataset, split: &RawSplit, time_steps: usize, thresholds: &[f64]) -> Result<LabeledRasters> {
    let rasters = split
        .samples
        .iter()
        .map(|s| encode_sample(s, ds.channels, ds.length, time_steps, thresholds))
        .collect::<Result<Vec<_>>>()?;
    LabeledRasters::new(rasters, split.labels.clone())
}

impl Dataset {
    /// Both splits encoded at one window length.
    pub fn encode(&self, time_steps: usize, encoding: &EncodingParams) -> Result<TrainData> {
        let th = encoding.thresholds(self.channels)?;
        Ok(TrainData {
            train: encode_split(self, &self.train, time_steps, &th)?,
            val: encode_split(self, &self.val, time_steps, &th)?,
        })
    }

    /// Encodings at every requested window length.
    pub fn task_data(&self, steps: &[usize], encoding: &EncodingParams) -> Result<TaskData> {
        let mut by_steps = BTreeMap::new();
        for &t in steps {
            by_steps.insert(t, self.encode(t, encoding)?);
        }
        Ok(TaskData {
            input_dim: self.channels,
            num_classes: self.num_classes,
            by_steps,
        })
    }
}
