use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, bail, Context, Result};
use clap::{Parser, Subcommand};
use rand::{Rng, SeedableRng};
use serde::{Deserialize, Serialize};

use edgespike::energy::{
    cortexm_reduction_curve, daily_energy, lifetime_days, BudgetParams, DailyEnergy, HardwareProfile, ProfileRegistry,
    ProxyMode, CORTEX_M4, JOULES_PER_MWH,
};
use edgespike::fieldsim::{degradation, recovery_fraction, simulate_deployment, DriftModel, FieldConfig};
use edgespike::io::{
    encode_sample, generate_synthetic, load_model, save_candidates, save_front, save_history, save_model,
    save_telemetry, write_json, DataFormat, Dataset, EncodingParams, GeneratorParams, ModelContainer, ModelMetadata,
    SyntheticTask,
};
use edgespike::nas::{run_search, supernet_build, ConstraintSet, NasConfig, SearchSpace};
use edgespike::plasticity::{DeltaRounding, PlasticityConfig};
use edgespike::runtime::{infer_dense_fixed, infer_sparse, quantize_weights, OpCounter};
use edgespike::snn::{build_network, ArchDescriptor, Connectivity, DecayMode, SkipPattern, SpikeRaster};
use edgespike::train::{train_model, TrainConfig};

#[derive(Parser)]
#[command(name = "edgespike", version, about = "Spiking networks for low-power sensing")]
struct Cli {
    /// Root seed for every random stream.
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    /// Flat JSON configuration file.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory.
    #[arg(long, global = true, default_value = ".")]
    out: PathBuf,
    /// Hardware profile name.
    #[arg(long, global = true, default_value = CORTEX_M4)]
    profile: String,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic dataset.
    Gen {
        #[arg(long, default_value = "synthetic")]
        name: String,
        #[arg(long, value_parser = parse_format)]
        format: Option<DataFormat>,
    },
    /// Train a network and write the model container and history.
    Train {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        epochs: Option<usize>,
    },
    /// Run one sample through the event-driven runtime.
    Infer {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        data: PathBuf,
        #[arg(long, default_value_t = 0)]
        index: usize,
    },
    /// Energy-constrained architecture search.
    Search {
        #[arg(long)]
        data: PathBuf,
    },
    /// Daily energy budget and battery lifetime.
    Energy {
        /// Derive the components from raw budget parameters.
        #[arg(long)]
        raw: bool,
    },
    /// Multi-node deployment simulation under drift.
    Fieldsim {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        data: PathBuf,
    },
    /// Sparse against dense operation counts over input activity.
    Bench {
        #[arg(long)]
        model: Option<PathBuf>,
    },
}

fn parse_format(s: &str) -> std::result::Result<DataFormat, String> {
    match s {
        "binary-f32" => Ok(DataFormat::BinaryF32),
        "csv" => Ok(DataFormat::Csv),
        _ => Err(format!("unknown format '{s}' (binary-f32 or csv)")),
    }
}

/// Every key is optional; commands read the keys they need.
#[derive(Debug, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct FileConfig {
    format: Option<DataFormat>,
    num_classes: Option<usize>,
    channels: Option<usize>,
    length: Option<usize>,
    jitter_sigma: Option<f64>,
    noise_sigma: Option<f64>,
    train_per_class: Option<usize>,
    val_per_class: Option<usize>,
    threshold: Option<f64>,

    depth: Option<usize>,
    width: Option<usize>,
    time_steps: Option<usize>,
    decay_mode: Option<DecayMode>,
    connectivity: Option<Connectivity>,
    skip: Option<SkipPattern>,

    epochs: Option<usize>,
    batch_size: Option<usize>,
    lambda_r: Option<f64>,
    lambda_w: Option<f64>,
    eta0: Option<f64>,
    eta_min: Option<f64>,
    bntt: Option<bool>,

    depths: Option<Vec<usize>>,
    widths: Option<Vec<usize>>,
    time_step_values: Option<Vec<usize>>,
    decay_modes: Option<Vec<DecayMode>>,
    connectivities: Option<Vec<Connectivity>>,
    skips: Option<Vec<SkipPattern>>,
    e_max_j: Option<f64>,
    m_max_bytes: Option<u64>,
    proxy_epochs: Option<usize>,
    proxy_fraction: Option<f64>,
    proxy_mode: Option<ProxyMode>,
    use_supernet: Option<bool>,

    compute_mwh: Option<f64>,
    radio_mwh: Option<f64>,
    idle_mwh: Option<f64>,
    capacity_wh: Option<f64>,
    n_inf: Option<f64>,
    e_inf: Option<f64>,
    lora_tx: Option<f64>,
    n_tx: Option<f64>,
    i_q: Option<f64>,
    v: Option<f64>,

    nodes: Option<usize>,
    months: Option<usize>,
    days_per_month: Option<usize>,
    trigger_rate: Option<f64>,
    final_gain: Option<f64>,
    final_noise: Option<f64>,
    final_sensitivity_loss: Option<f64>,
    adaptation: Option<bool>,
    plasticity_eta: Option<f64>,
    plasticity_lambda_d: Option<f64>,
    flush_interval: Option<u32>,
    rounding: Option<DeltaRounding>,

    profiles_file: Option<PathBuf>,
}

impl FileConfig {
    fn load(path: Option<&Path>) -> Result<Self> {
        match path {
            None => Ok(Self::default()),
            Some(p) => {
                let text = fs::read_to_string(p).with_context(|| format!("reading config {}", p.display()))?;
                Ok(serde_json::from_str(&text).map_err(edgespike::Error::from)?)
            }
        }
    }

    fn generator(&self) -> GeneratorParams {
        let d = GeneratorParams::default();
        GeneratorParams {
            num_classes: self.num_classes.unwrap_or(d.num_classes),
            channels: self.channels.unwrap_or(d.channels),
            length: self.length.unwrap_or(d.length),
            jitter_sigma: self.jitter_sigma.unwrap_or(d.jitter_sigma),
            noise_sigma: self.noise_sigma.unwrap_or(d.noise_sigma),
            train_per_class: self.train_per_class.unwrap_or(d.train_per_class),
            val_per_class: self.val_per_class.unwrap_or(d.val_per_class),
        }
    }

    fn encoding(&self) -> EncodingParams {
        EncodingParams {
            threshold: self.threshold.unwrap_or(EncodingParams::default().threshold),
            per_channel: None,
        }
    }

    fn descriptor(&self, input_dim: usize, num_classes: usize) -> ArchDescriptor {
        ArchDescriptor::uniform(
            self.depth.unwrap_or(2),
            self.width.unwrap_or(64),
            self.time_steps.unwrap_or(8),
            self.decay_mode.unwrap_or(DecayMode::LearnableShared),
            self.connectivity.unwrap_or(Connectivity::Dense),
            self.skip.unwrap_or(SkipPattern::None),
            input_dim,
            num_classes,
        )
    }

    fn train(&self, seed: u64) -> TrainConfig {
        let d = TrainConfig::default();
        TrainConfig {
            epochs: self.epochs.unwrap_or(d.epochs),
            batch_size: self.batch_size.unwrap_or(d.batch_size),
            lambda_r: self.lambda_r.unwrap_or(d.lambda_r),
            lambda_w: self.lambda_w.unwrap_or(d.lambda_w),
            eta0: self.eta0.unwrap_or(d.eta0),
            eta_min: self.eta_min.unwrap_or(d.eta_min),
            bntt_enabled: self.bntt.unwrap_or(d.bntt_enabled),
            seed,
            ..d
        }
    }

    fn space(&self, input_dim: usize, num_classes: usize) -> SearchSpace {
        SearchSpace {
            depths: self.depths.clone().unwrap_or_else(|| vec![2, 3]),
            widths: self.widths.clone().unwrap_or_else(|| vec![64, 128]),
            time_steps: self.time_step_values.clone().unwrap_or_else(|| vec![4, 8]),
            decay_modes: self
                .decay_modes
                .clone()
                .unwrap_or_else(|| vec![DecayMode::Fixed, DecayMode::LearnableShared]),
            connectivities: self
                .connectivities
                .clone()
                .unwrap_or_else(|| vec![Connectivity::Dense, Connectivity::Sparse50]),
            skips: self
                .skips
                .clone()
                .unwrap_or_else(|| vec![SkipPattern::None, SkipPattern::Residual]),
            input_dim,
            num_classes,
        }
    }

    fn budget(&self) -> BudgetParams {
        let d = BudgetParams::field_node();
        BudgetParams {
            n_inf: self.n_inf.unwrap_or(d.n_inf),
            e_inf: self.e_inf.unwrap_or(d.e_inf),
            lora_tx: self.lora_tx.unwrap_or(d.lora_tx),
            n_tx: self.n_tx.unwrap_or(d.n_tx),
            i_q: self.i_q.unwrap_or(d.i_q),
            v: self.v.unwrap_or(d.v),
            dt: d.dt,
            capacity_wh: self.capacity_wh.unwrap_or(d.capacity_wh),
        }
    }
}

fn profile(cli: &Cli, cfg: &FileConfig) -> Result<HardwareProfile> {
    let mut reg = ProfileRegistry::default();
    if let Some(p) = &cfg.profiles_file {
        reg.load_file(p)?;
    }
    Ok(reg.get(&cli.profile)?.clone())
}

fn load_data(path: &Path) -> Result<Dataset> {
    Dataset::load(path).with_context(|| format!("loading dataset {}", path.display()))
}

fn read_model(path: &Path) -> Result<ModelContainer> {
    load_model(path).with_context(|| format!("loading model {}", path.display()))
}

fn counter_energy(c: &OpCounter, inferences: u64, p: &HardwareProfile) -> f64 {
    c.ac_count as f64 * p.e_ac() + c.neuron_updates as f64 * p.e_neuron() + inferences as f64 * p.e_io()
}

#[derive(Serialize)]
struct InferRecord<'a> {
    profile: &'a str,
    index: usize,
    label: usize,
    prediction: usize,
    counts: &'a [u32],
    input_rate: f64,
    layer_rates: &'a [f64],
    counter: &'a OpCounter,
    savings: f64,
    energy_j: f64,
    energy_uj: f64,
}

#[derive(Serialize)]
struct FieldSummary {
    nodes: usize,
    months: usize,
    trigger_rate: f64,
    accuracy_first_month: f64,
    accuracy_final_frozen: f64,
    accuracy_final_adapt: Option<f64>,
    degradation_frozen: Option<f64>,
    degradation_adapt: Option<f64>,
    recovery_fraction: Option<f64>,
    recovery_status: String,
    mean_daily_energy_mwh: f64,
    mean_daily_energy_j: f64,
    lifetime_days: f64,
    total_flushes: u64,
}

fn run(cli: &Cli) -> Result<()> {
    let cfg = FileConfig::load(cli.config.as_deref())?;
    fs::create_dir_all(&cli.out).with_context(|| format!("creating {}", cli.out.display()))?;
    match &cli.command {
        Command::Gen { name, format } => {
            let ds = generate_synthetic(name, &cfg.generator(), cli.seed)?;
            let fmt = format.or(cfg.format).unwrap_or_default();
            let path = ds.save(&cli.out, fmt)?;
            println!("manifest={}", path.display());
            println!("train_samples={} val_samples={}", ds.train.len(), ds.val.len());
        }
        Command::Train { data, epochs } => {
            let ds = load_data(data)?;
            let desc = cfg.descriptor(ds.channels, ds.num_classes);
            let mut tc = cfg.train(cli.seed);
            if let Some(e) = epochs {
                tc.epochs = *e;
            }
            let encoded = ds.encode(desc.time_steps, &cfg.encoding())?;
            let (net, history) = train_model(&encoded, &desc, &tc)?;
            let acc = history.final_accuracy();
            let model = ModelContainer::new(net, ModelMetadata::from_config(&tc, Some(acc))?)?;
            save_model(&model, &cli.out.join("model.espk"))?;
            save_history(&cli.out.join("history.csv"), &history)?;
            println!("architecture={}", desc.key());
            println!("val_accuracy={acc:.4} mean_rate={:.4}", history.final_rate());
        }
        Command::Infer { model, data, index } => {
            let m = read_model(model)?;
            let ds = load_data(data)?;
            let sample = ds
                .val
                .samples
                .get(*index)
                .ok_or_else(|| anyhow!(edgespike::Error::Validation(format!("no validation sample {index}"))))?;
            let th = cfg.encoding().thresholds(ds.channels)?;
            let raster = encode_sample(sample, ds.channels, ds.length, m.fixed.descriptor.time_steps, &th)?;
            let out = infer_sparse(&m.fixed, &raster)?;
            let p = profile(cli, &cfg)?;
            let energy = counter_energy(&out.counter, 1, &p);
            let rec = InferRecord {
                profile: &p.name,
                index: *index,
                label: ds.val.labels[*index],
                prediction: out.prediction,
                counts: &out.counts,
                input_rate: raster.rate(),
                layer_rates: &out.layer_rates,
                counter: &out.counter,
                savings: out.counter.savings(),
                energy_j: energy,
                energy_uj: energy * 1e6,
            };
            println!("{}", serde_json::to_string(&rec)?);
        }
        Command::Search { data } => {
            let ds = load_data(data)?;
            let space = cfg.space(ds.channels, ds.num_classes);
            space.validate()?;
            let task = ds.task_data(&space.time_steps, &cfg.encoding())?;
            let d = NasConfig::default();
            let nas = NasConfig {
                proxy_epochs: cfg.proxy_epochs.unwrap_or(d.proxy_epochs),
                proxy_fraction: cfg.proxy_fraction.unwrap_or(d.proxy_fraction),
                proxy_mode: cfg.proxy_mode.unwrap_or(d.proxy_mode),
                use_supernet: cfg.use_supernet.unwrap_or(d.use_supernet),
                seed: cli.seed,
                train: cfg.train(cli.seed),
                ..d
            };
            let dc = ConstraintSet::default();
            let constraints = ConstraintSet {
                e_max: cfg.e_max_j.unwrap_or(dc.e_max),
                m_max: cfg.m_max_bytes.unwrap_or(dc.m_max),
                max_dense_ops: None,
            };
            let p = profile(cli, &cfg)?;
            let supernet = if nas.use_supernet {
                Some(supernet_build(&space, &task, &nas.train)?.0)
            } else {
                None
            };
            let report = run_search(&space, &task, &constraints, &p, &nas, supernet.as_ref())?;
            save_candidates(&cli.out.join("candidates.csv"), &report.candidates)?;
            save_front(&cli.out.join("front.json"), &report)?;
            println!("candidates={} front={}", report.candidates.len(), report.front.len());
            match &report.knee {
                Some(k) => println!(
                    "knee={} accuracy={:.4} energy_uj={:.4}",
                    k.descriptor.key(),
                    k.accuracy,
                    k.energy * 1e6
                ),
                None => println!("knee=none"),
            }
        }
        Command::Energy { raw } => {
            let budget = cfg.budget();
            let daily = if *raw {
                daily_energy(&budget)?
            } else {
                DailyEnergy::from_components(
                    cfg.compute_mwh.unwrap_or(0.634),
                    cfg.radio_mwh.unwrap_or(0.121),
                    cfg.idle_mwh.unwrap_or(0.883),
                )
            };
            let days = lifetime_days(budget.capacity_wh, daily.total)?;
            println!("path={}", if *raw { "raw" } else { "components" });
            for (name, v) in [
                ("compute", daily.compute),
                ("radio", daily.radio),
                ("idle", daily.idle),
                ("total", daily.total),
            ] {
                println!("{name}_mwh={v:.3} {name}_j={:.4}", v * JOULES_PER_MWH);
            }
            println!("capacity_wh={} lifetime_days={days:.0}", budget.capacity_wh);
        }
        Command::Fieldsim { model, data } => {
            let m = read_model(model)?;
            let ds = load_data(data)?;
            let (Some(gp), Some(gen_seed)) = (ds.generator.clone(), ds.seed) else {
                bail!(edgespike::Error::Validation(
                    "field simulation needs a synthetic dataset with generator parameters".into()
                ));
            };
            let task = SyntheticTask::new(gp, gen_seed)?;
            let months = cfg.months.unwrap_or(7);
            let drift = DriftModel::linear(
                months,
                cfg.final_gain.unwrap_or(0.92),
                cfg.final_noise.unwrap_or(0.0),
                cfg.final_sensitivity_loss.unwrap_or(0.0),
            );
            let d = FieldConfig::default();
            let pd = PlasticityConfig::default();
            let fc = FieldConfig {
                nodes: cfg.nodes.unwrap_or(d.nodes),
                days_per_month: cfg.days_per_month.unwrap_or(d.days_per_month),
                trigger_rate: cfg.trigger_rate.unwrap_or(d.trigger_rate),
                adaptation: cfg.adaptation.unwrap_or(d.adaptation),
                plasticity: PlasticityConfig {
                    eta: cfg.plasticity_eta.unwrap_or(pd.eta),
                    lambda_d: cfg.plasticity_lambda_d.unwrap_or(pd.lambda_d),
                    flush_interval: cfg.flush_interval.unwrap_or(pd.flush_interval),
                    rounding: cfg.rounding.unwrap_or(pd.rounding),
                    ..pd
                },
                encoding: cfg.encoding(),
                budget: cfg.budget(),
                seed: cli.seed,
            };
            let p = profile(cli, &cfg)?;
            let telemetry = simulate_deployment(&fc, &drift, &m.fixed, &task, &p)?;
            save_telemetry(&cli.out.join("telemetry.csv"), &telemetry)?;
            let first = &telemetry[0];
            let last = telemetry.last().expect("at least one month");
            let (recovery, status) = match recovery_fraction(&telemetry) {
                Ok(r) => (Some(r), "ok".to_string()),
                Err(e) => (None, e.kind().to_string()),
            };
            let mean_mwh = telemetry.iter().map(|r| r.energy_mwh).sum::<f64>() / telemetry.len() as f64;
            let summary = FieldSummary {
                nodes: fc.nodes,
                months,
                trigger_rate: fc.trigger_rate,
                accuracy_first_month: first.accuracy_frozen,
                accuracy_final_frozen: last.accuracy_frozen,
                accuracy_final_adapt: last.accuracy_adapt,
                degradation_frozen: degradation(&telemetry, false),
                degradation_adapt: degradation(&telemetry, true),
                recovery_fraction: recovery,
                recovery_status: status,
                mean_daily_energy_mwh: mean_mwh,
                mean_daily_energy_j: mean_mwh * JOULES_PER_MWH,
                lifetime_days: lifetime_days(fc.budget.capacity_wh, mean_mwh)?,
                total_flushes: telemetry.iter().map(|r| r.flushes).sum(),
            };
            write_json(&cli.out.join("summary.json"), &summary)?;
            println!("{}", serde_json::to_string(&summary)?);
        }
        Command::Bench { model } => {
            let fixed = match model {
                Some(p) => read_model(p)?.fixed,
                None => {
                    let g = cfg.generator();
                    let desc = cfg.descriptor(g.channels, g.num_classes);
                    quantize_weights(&build_network(&desc, cli.seed)?)?
                }
            };
            let d = &fixed.descriptor;
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(edgespike::rng::derive_seed(cli.seed, "bench"));
            let mut w = csv::Writer::from_path(cli.out.join("bench.csv")).map_err(edgespike::Error::from)?;
            w.write_record([
                "target_rho",
                "input_rho",
                "sparse_ac",
                "dense_ac",
                "dense_macs",
                "savings",
                "identical",
                "cortexm_curve",
            ])
            .map_err(edgespike::Error::from)?;
            println!("target_rho input_rho sparse_ac dense_macs savings identical");
            for step in 1..=10 {
                let rho = step as f64 * 0.05;
                let data = (0..d.time_steps * d.input_dim).map(|_| rng.random_bool(rho) as u8).collect();
                let raster = SpikeRaster::from_vec(d.time_steps, d.input_dim, data)?;
                let s = infer_sparse(&fixed, &raster)?;
                let r = infer_dense_fixed(&fixed, &raster)?;
                let same = s.hidden == r.hidden && s.output == r.output;
                let row = [
                    format!("{rho:.2}"),
                    format!("{:.4}", raster.rate()),
                    s.counter.ac_count.to_string(),
                    r.counter.ac_count.to_string(),
                    s.counter.dense_equivalent_macs.to_string(),
                    format!("{:.4}", s.counter.savings()),
                    same.to_string(),
                    format!("{:.4}", cortexm_reduction_curve(rho * 100.0)),
                ];
                w.write_record(&row).map_err(edgespike::Error::from)?;
                println!("{} {} {} {} {} {}", row[0], row[1], row[2], row[4], row[5], row[6]);
            }
            w.flush()?;
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let kind = e
                .chain()
                .find_map(|c| c.downcast_ref::<edgespike::Error>())
                .map_or("io", |k| k.kind());
            let msg = format!("{e:#}").replace('"', "'");
            eprintln!("error: kind={kind} msg=\"{msg}\"");
            ExitCode::FAILURE
        }
    }
}
