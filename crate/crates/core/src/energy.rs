//! Per-inference energy proxy, Cortex-M reduction curve and node budget.
//!
//! All internal quantities are joules; milliwatt-hours appear only in the
//! daily budget.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{validation_err, Error, Result};
use crate::snn::{out_degree, ArchDescriptor};

const PICO: f64 = 1e-12;
const MICRO: f64 = 1e-6;
/// Joules per milliwatt-hour.
pub const JOULES_PER_MWH: f64 = 3.6;
pub const SECONDS_PER_DAY: f64 = 86_400.0;

/// Calibrated per-event costs of one hardware target.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HardwareProfile {
    pub name: String,
    /// Energy per accumulate, picojoules.
    pub e_ac_pj: f64,
    /// Energy per neuron state update per step, picojoules.
    pub e_neuron_pj: f64,
    /// Fixed front-end energy per inference, microjoules.
    pub e_io_uj: f64,
}

impl HardwareProfile {
    pub fn new(name: &str, e_ac_pj: f64, e_neuron_pj: f64, e_io_uj: f64) -> Result<Self> {
        let p = Self {
            name: name.to_string(),
            e_ac_pj,
            e_neuron_pj,
            e_io_uj,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        for (field, v) in [
            ("e_ac_pj", self.e_ac_pj),
            ("e_neuron_pj", self.e_neuron_pj),
            ("e_io_uj", self.e_io_uj),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return validation_err(format!("profile {}: {field} must be positive", self.name));
            }
        }
        Ok(())
    }

    pub fn e_ac(&self) -> f64 {
        self.e_ac_pj * PICO
    }

    pub fn e_neuron(&self) -> f64 {
        self.e_neuron_pj * PICO
    }

    pub fn e_io(&self) -> f64 {
        self.e_io_uj * MICRO
    }
}

pub const LOIHI2: &str = "loihi-2";
pub const SPINNAKER2: &str = "spinnaker-2";
pub const CORTEX_M4: &str = "cortex-m4-rle";

/// The three calibrated targets.
pub fn builtin_profiles() -> [HardwareProfile; 3] {
    let p = |name: &str, ac, neuron, io| HardwareProfile {
        name: name.to_string(),
        e_ac_pj: ac,
        e_neuron_pj: neuron,
        e_io_uj: io,
    };
    [
        p(LOIHI2, 8.1, 0.4, 22.0),
        p(SPINNAKER2, 11.4, 0.7, 31.0),
        p(CORTEX_M4, 6.3, 1.2, 54.0),
    ]
}

fn normalise_name(name: &str) -> String {
    name.to_ascii_lowercase()
        .chars()
        .filter(|c| c.is_ascii_alphanumeric())
        .collect()
}

/// Set of named profiles: builtins plus any loaded from configuration.
#[derive(Clone, Debug, PartialEq)]
pub struct ProfileRegistry {
    profiles: BTreeMap<String, HardwareProfile>,
}

impl Default for ProfileRegistry {
    fn default() -> Self {
        let mut profiles = BTreeMap::new();
        for p in builtin_profiles() {
            profiles.insert(normalise_name(&p.name), p);
        }
        Self { profiles }
    }
}

#[derive(Deserialize)]
struct ProfileEntry {
    e_ac_pj: f64,
    e_neuron_pj: f64,
    e_io_uj: f64,
}

impl ProfileRegistry {
    /// Looks a profile up by name, ignoring case and punctuation
    /// (`Loihi-2`, `loihi2` and `LOIHI_2` are the same). `cortex-m4` is
    /// accepted for the Cortex-M target.
    pub fn get(&self, name: &str) -> Result<&HardwareProfile> {
        let mut key = normalise_name(name);
        if key == "cortexm4" || key == "cortexm" {
            key = normalise_name(CORTEX_M4);
        }
        self.profiles
            .get(&key)
            .ok_or_else(|| Error::Validation(format!("unknown hardware profile '{name}'")))
    }

    pub fn insert(&mut self, profile: HardwareProfile) -> Result<()> {
        profile.validate()?;
        self.profiles.insert(normalise_name(&profile.name), profile);
        Ok(())
    }

    pub fn names(&self) -> Vec<&str> {
        self.profiles.values().map(|p| p.name.as_str()).collect()
    }

    /// Adds or overrides profiles from a JSON object keyed by name, e.g.
    /// `{"my-mcu": {"e_ac_pj": 5.0, "e_neuron_pj": 1.0, "e_io_uj": 40.0}}`.
    pub fn load_json(&mut self, text: &str) -> Result<()> {
        let entries: BTreeMap<String, ProfileEntry> = serde_json::from_str(text)?;
        for (name, e) in entries {
            self.insert(HardwareProfile::new(&name, e.e_ac_pj, e.e_neuron_pj, e.e_io_uj)?)?;
        }
        Ok(())
    }

    pub fn load_file(&mut self, path: &Path) -> Result<()> {
        let text = std::fs::read_to_string(path)?;
        self.load_json(&text)
    }
}

/// Per-inference energy split, joules.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EnergyBreakdown {
    pub synaptic: f64,
    pub neuron: f64,
    pub io: f64,
    pub total: f64,
}

impl EnergyBreakdown {
    pub fn new(synaptic: f64, neuron: f64, io: f64) -> Self {
        Self {
            synaptic,
            neuron,
            io,
            total: synaptic + neuron + io,
        }
    }
}

/// Form of the synaptic term.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ProxyMode {
    /// `sum_l rho_l N_l N_{l-1} E_AC`, per inference without `T` or density.
    #[default]
    Verbatim,
    /// `sum_l T rho_l fan_in_l out_degree_l E_AC`: counts exactly the
    /// accumulates the event-driven runtime performs.
    Physical,
}

/// Energy proxy with the verbatim synaptic term.
pub fn proxy_energy(descriptor: &ArchDescriptor, rho: &[f64], profile: &HardwareProfile) -> Result<EnergyBreakdown> {
    proxy_energy_with(descriptor, rho, profile, ProxyMode::Verbatim)
}

/// Energy proxy. `rho[l]` is the activity of hidden layer `l`'s input
/// (the encoder output for `l = 0`).
pub fn proxy_energy_with(
    descriptor: &ArchDescriptor,
    rho: &[f64],
    profile: &HardwareProfile,
    mode: ProxyMode,
) -> Result<EnergyBreakdown> {
    descriptor.validate()?;
    if rho.len() != descriptor.depth {
        return validation_err(format!(
            "{} rates given for depth {}",
            rho.len(),
            descriptor.depth
        ));
    }
    if let Some(r) = rho.iter().find(|r| !(0.0..=1.0).contains(*r)) {
        return validation_err(format!("rate {r} outside [0, 1]"));
    }
    let t = descriptor.time_steps as f64;
    let synaptic_events: f64 = rho
        .iter()
        .enumerate()
        .map(|(l, &r)| match mode {
            ProxyMode::Verbatim => {
                let prev = descriptor.source_width(l) as f64;
                r * descriptor.widths[l] as f64 * prev
            }
            ProxyMode::Physical => {
                let k = out_degree(descriptor.widths[l], descriptor.connectivity) as f64;
                t * r * descriptor.fan_in(l) as f64 * k
            }
        })
        .sum();
    let neuron_updates = descriptor.depth as f64 * descriptor.mean_width() * t;
    Ok(EnergyBreakdown::new(
        synaptic_events * profile.e_ac(),
        neuron_updates * profile.e_neuron(),
        profile.e_io(),
    ))
}

/// Synaptic energy implied by a measured number of accumulates.
pub fn counter_synaptic_energy(ac_count: u64, profile: &HardwareProfile) -> f64 {
    ac_count as f64 * profile.e_ac()
}

/// Predicted Cortex-M energy reduction factor at spike rate `rho_percent`.
pub fn cortexm_reduction_curve(rho_percent: f64) -> f64 {
    1.0 / (0.0099 * rho_percent * 0.15 + 0.07)
}

/// Daily node energy inputs.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BudgetParams {
    /// Inferences per day.
    pub n_inf: f64,
    /// Joules per inference.
    pub e_inf: f64,
    /// Joules per radio transmission.
    pub lora_tx: f64,
    /// Transmissions per day.
    pub n_tx: f64,
    /// Quiescent current, amperes.
    pub i_q: f64,
    /// Supply voltage.
    pub v: f64,
    /// Seconds per day.
    pub dt: f64,
    /// Usable battery capacity, watt-hours.
    pub capacity_wh: f64,
}

impl Default for BudgetParams {
    fn default() -> Self {
        Self {
            n_inf: 0.0,
            e_inf: 0.0,
            lora_tx: 0.0,
            n_tx: 0.0,
            i_q: 0.0,
            v: 0.0,
            dt: SECONDS_PER_DAY,
            capacity_wh: 0.0,
        }
    }
}

impl BudgetParams {
    /// Raw parameters of the reference field node.
    pub fn field_node() -> Self {
        Self {
            n_inf: 197.0,
            e_inf: 3.22e-3,
            lora_tx: 0.616e-6,
            n_tx: 197.0,
            i_q: 11.15e-6,
            v: 3.3,
            dt: SECONDS_PER_DAY,
            capacity_wh: 2.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let fields = [
            ("n_inf", self.n_inf),
            ("e_inf", self.e_inf),
            ("lora_tx", self.lora_tx),
            ("n_tx", self.n_tx),
            ("i_q", self.i_q),
            ("v", self.v),
            ("dt", self.dt),
            ("capacity_wh", self.capacity_wh),
        ];
        for (name, v) in fields {
            if !(v >= 0.0 && v.is_finite()) {
                return validation_err(format!("budget parameter {name} must be non-negative"));
            }
        }
        Ok(())
    }
}

/// Daily energy split, milliwatt-hours.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DailyEnergy {
    pub compute: f64,
    pub radio: f64,
    pub idle: f64,
    pub total: f64,
}

impl DailyEnergy {
    /// Sum of components already expressed in mWh.
    pub fn from_components(compute: f64, radio: f64, idle: f64) -> Self {
        Self {
            compute,
            radio,
            idle,
            total: compute + radio + idle,
        }
    }

    /// Components given in joules per day.
    pub fn from_joules(compute: f64, radio: f64, idle: f64) -> Self {
        Self::from_components(
            compute / JOULES_PER_MWH,
            radio / JOULES_PER_MWH,
            idle / JOULES_PER_MWH,
        )
    }
}

/// Daily energy from raw parameters.
pub fn daily_energy(params: &BudgetParams) -> Result<DailyEnergy> {
    params.validate()?;
    Ok(DailyEnergy::from_joules(
        params.n_inf * params.e_inf,
        params.n_tx * params.lora_tx,
        params.i_q * params.v * params.dt,
    ))
}

/// Battery lifetime in days.
pub fn lifetime_days(capacity_wh: f64, daily_mwh: f64) -> Result<f64> {
    if !(daily_mwh > 0.0) {
        return validation_err("daily energy must be positive");
    }
    if !(capacity_wh >= 0.0) {
        return validation_err("capacity must be non-negative");
    }
    Ok(1000.0 * capacity_wh / daily_mwh)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::snn::{Connectivity, DecayMode, SkipPattern};

    fn loihi() -> HardwareProfile {
        builtin_profiles()[0].clone()
    }

    fn desc() -> ArchDescriptor {
        ArchDescriptor::uniform(2, 64, 8, DecayMode::Fixed, Connectivity::Dense, SkipPattern::None, 40, 4)
    }

    #[test]
    fn verbatim_hand_example() {
        let e = proxy_energy(&desc(), &[0.2, 0.2], &loihi()).unwrap();
        let syn = (0.2 * 64.0 * 40.0 + 0.2 * 64.0 * 64.0) * 8.1e-12;
        assert!((e.synaptic - syn).abs() <= 1e-9 * syn);
        assert!((e.synaptic - 10_782.72e-12).abs() < 1e-18);
        assert!((e.neuron - 409.6e-12).abs() < 1e-20);
        assert_eq!(e.total, e.synaptic + e.neuron + e.io);
        assert!((e.total - 22.011_192_32e-6).abs() < 1e-15);
    }

    #[test]
    fn zero_rates_and_linearity() {
        let p = loihi();
        let z = proxy_energy(&desc(), &[0.0, 0.0], &p).unwrap();
        assert_eq!(z.synaptic, 0.0);
        assert_eq!(z.total, z.neuron + z.io);
        let a = proxy_energy(&desc(), &[0.1, 0.3], &p).unwrap();
        let b = proxy_energy(&desc(), &[0.2, 0.6], &p).unwrap();
        assert!((b.synaptic - 2.0 * a.synaptic).abs() <= 1e-12 * b.synaptic);
        assert!(proxy_energy(&desc(), &[0.1], &p).is_err());
        assert!(proxy_energy(&desc(), &[0.1, 1.1], &p).is_err());
    }

    #[test]
    fn physical_mode_counts_steps_and_density() {
        let mut d = desc();
        d.connectivity = Connectivity::Sparse25;
        let e = proxy_energy_with(&d, &[0.5, 0.25], &loihi(), ProxyMode::Physical).unwrap();
        let events = 8.0 * (0.5 * 40.0 * 16.0 + 0.25 * 64.0 * 16.0);
        assert!((e.synaptic - events * 8.1e-12).abs() < 1e-18);
    }

    #[test]
    fn registry_lookup_and_loading() {
        let mut r = ProfileRegistry::default();
        assert_eq!(r.get("Loihi2").unwrap().e_ac_pj, 8.1);
        assert_eq!(r.get("cortex-m4").unwrap().e_neuron_pj, 1.2);
        assert!(r.get("tpu").is_err());
        r.load_json(r#"{"tiny-mcu": {"e_ac_pj": 2.0, "e_neuron_pj": 0.5, "e_io_uj": 10}}"#).unwrap();
        assert_eq!(r.get("tiny_mcu").unwrap().e_io_uj, 10.0);
        assert!(r
            .load_json(r#"{"bad": {"e_ac_pj": 0.0, "e_neuron_pj": 0.5, "e_io_uj": 10}}"#)
            .is_err());
    }

    #[test]
    fn curve_is_decreasing() {
        assert!((cortexm_reduction_curve(0.0) - 1.0 / 0.07).abs() < 1e-12);
        let mut prev = f64::INFINITY;
        for i in 0..100 {
            let v = cortexm_reduction_curve(i as f64);
            assert!(v < prev);
            prev = v;
        }
    }

    #[test]
    fn budget_paths_agree() {
        let p = BudgetParams::field_node();
        let raw = daily_energy(&p).unwrap();
        let comp = DailyEnergy::from_components(raw.compute, raw.radio, raw.idle);
        assert_eq!(raw, comp);
        assert!((raw.idle - 11.15e-6 * 3.3 * 86400.0 / 3.6).abs() < 1e-15);
        assert_eq!(daily_energy(&BudgetParams::default()).unwrap().total, 0.0);
        assert_eq!(lifetime_days(0.0, 1.0).unwrap(), 0.0);
        assert!(lifetime_days(2.0, 0.0).is_err());
    }
}
