//! Experiment orchestration: a declarative spec expands into a grid of
//! simulation jobs (sweep point x attack scenario x variation map), runs
//! them, and writes `runs.csv`, `aggregate.json`, and `manifest.json`.
//!
//! Job results land in spec order regardless of execution order, so output
//! files are byte-stable for a given spec. Key derivation uses the single
//! `sim.seed` across all maps: permutations stay fixed while the variation
//! map (and therefore every key) changes per map seed.

use crate::attacks::AttackScenario;
use crate::engine::{run, RunReport, SimConfig};
use crate::error::{Error, Result};
use crate::fabric::{build_by_name, Fabric, FabricParams};
use crate::ids::ChannelId;
use crate::keyforge::{build_keystores, KeyStoreSet};
use crate::photonics::{profile_by_name, Profile};
use crate::pvmap::{generate_batch, DieSpec, PvMap, PvParams};
use serde::{Deserialize, Serialize};
use std::collections::BTreeSet;
use std::path::Path;
use std::sync::Arc;

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default)]
pub struct FabricSection {
    pub architecture: String,
    pub scale: usize,
    pub n_wavelengths: usize,
    pub die: DieSpec,
}

impl Default for FabricSection {
    fn default() -> Self {
        Self {
            architecture: "swiftnoc".into(),
            scale: 8,
            n_wavelengths: 64,
            die: DieSpec::default(),
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default)]
pub struct PvSection {
    pub n_maps: usize,
    pub base_seed: u64,
    pub params: PvParams,
}

impl Default for PvSection {
    fn default() -> Self {
        Self {
            n_maps: 1,
            base_seed: 9000,
            params: PvParams::default(),
        }
    }
}

/// One sweep point: which channels are secured and which defenses are on.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SweepPoint {
    pub label: String,
    /// Secure the first N channels; mutually exclusive with
    /// `secured_channels`.
    #[serde(default)]
    pub secured_count: Option<usize>,
    #[serde(default)]
    pub secured_channels: Option<Vec<u32>>,
    #[serde(default = "default_true")]
    pub pdes: bool,
    #[serde(default = "default_true")]
    pub ramps: bool,
}

fn default_true() -> bool {
    true
}

impl SweepPoint {
    fn resolve_channels(&self, fabric: &Fabric) -> Result<BTreeSet<ChannelId>> {
        match (&self.secured_count, &self.secured_channels) {
            (Some(_), Some(_)) => Err(Error::InvalidSpec(format!(
                "sweep point {:?} sets both secured_count and secured_channels",
                self.label
            ))),
            (Some(n), None) => {
                if *n > fabric.channels.len() {
                    return Err(Error::InvalidSpec(format!(
                        "sweep point {:?} secures {n} of {} channels",
                        self.label,
                        fabric.channels.len()
                    )));
                }
                Ok((0..*n as u32).map(ChannelId).collect())
            }
            (None, Some(ids)) => {
                let set: BTreeSet<ChannelId> = ids.iter().copied().map(ChannelId).collect();
                for id in &set {
                    if id.index() >= fabric.channels.len() {
                        return Err(Error::InvalidSpec(format!(
                            "sweep point {:?} secures unknown channel {id}",
                            self.label
                        )));
                    }
                }
                Ok(set)
            }
            (None, None) => Ok(BTreeSet::new()),
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct NamedScenario {
    pub name: String,
    #[serde(flatten)]
    pub scenario: AttackScenario,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default)]
pub struct ExperimentSpec {
    pub name: String,
    pub fabric: FabricSection,
    pub pv: PvSection,
    /// Named loss/energy profile.
    pub profile: String,
    pub sim: SimConfig,
    pub sweep: Vec<SweepPoint>,
    pub scenarios: Vec<NamedScenario>,
    /// Also write per-run report JSON and per-map artifacts.
    pub emit_artifacts: bool,
}

impl Default for ExperimentSpec {
    fn default() -> Self {
        Self {
            name: "experiment".into(),
            fabric: FabricSection::default(),
            pv: PvSection::default(),
            profile: "table3_default".into(),
            sim: SimConfig::default(),
            sweep: Vec::new(),
            scenarios: Vec::new(),
            emit_artifacts: false,
        }
    }
}

impl ExperimentSpec {
    pub fn validate(&self) -> Result<()> {
        if self.name.is_empty()
            || !self
                .name
                .chars()
                .all(|c| c.is_ascii_alphanumeric() || c == '-' || c == '_' || c == '.')
        {
            return Err(Error::InvalidSpec(format!(
                "experiment name {:?} must be non-empty and filesystem-safe",
                self.name
            )));
        }
        if self.pv.n_maps == 0 {
            return Err(Error::InvalidSpec("pv.n_maps must be at least 1".into()));
        }
        if self.sweep.is_empty() {
            return Err(Error::InvalidSpec("sweep must have at least one point".into()));
        }
        let mut labels = BTreeSet::new();
        for p in &self.sweep {
            if !labels.insert(&p.label) {
                return Err(Error::InvalidSpec(format!(
                    "duplicate sweep label {:?}",
                    p.label
                )));
            }
        }
        if profile_by_name(&self.profile).is_none() {
            return Err(Error::InvalidSpec(format!(
                "unknown profile {:?}",
                self.profile
            )));
        }
        Ok(())
    }

    pub fn map_seeds(&self) -> Vec<u64> {
        (0..self.pv.n_maps as u64)
            .map(|i| self.pv.base_seed + i)
            .collect()
    }
}

/// One flat row of `runs.csv`.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct RunRecord {
    pub schema_version: u32,
    pub experiment: String,
    pub architecture: String,
    pub scale: usize,
    pub sweep_label: String,
    pub pdes: bool,
    pub ramps: bool,
    /// Secured channel ids joined with ';'.
    pub secured_channels: String,
    pub scenario: String,
    pub strategy: String,
    pub map_seed: u64,
    pub run_seed: u64,
    pub injection_rate: f64,
    pub traffic_mode: String,
    pub packets_injected: u64,
    pub packets_delivered: u64,
    pub measured_packets: u64,
    pub avg_latency_cycles: f64,
    pub total_energy_j: f64,
    pub dynamic_energy_j: f64,
    pub static_power_w: f64,
    pub edp_js: f64,
    pub worst_loss_db: f64,
    pub photonic_laser_w: f64,
    pub electrical_laser_w: f64,
    pub packets_snooped: u64,
    pub packets_deciphered: u64,
    pub decipher_rate: f64,
    pub metadata_leaks: u64,
    pub empty_measurement: bool,
}

struct Job {
    fabric: Arc<Fabric>,
    map: Arc<PvMap>,
    stores: Arc<KeyStoreSet>,
    cfg: SimConfig,
    scenario: Option<NamedScenario>,
    sweep_label: String,
    map_seed: u64,
    profile_name: String,
}

fn record_of(spec: &ExperimentSpec, job: &Job, report: &RunReport) -> RunRecord {
    let (snooped, deciphered, rate, leaks, strategy) = match &report.security {
        Some(s) => (
            s.packets_snooped,
            s.packets_deciphered,
            s.decipher_rate,
            s.metadata_leaks,
            s.strategy.to_string(),
        ),
        None => (0, 0, 0.0, 0, "none".into()),
    };
    RunRecord {
        schema_version: 1,
        experiment: spec.name.clone(),
        architecture: spec.fabric.architecture.clone(),
        scale: spec.fabric.scale,
        sweep_label: job.sweep_label.clone(),
        pdes: job.cfg.pdes_enabled,
        ramps: job.cfg.ramps_enabled,
        secured_channels: job
            .cfg
            .secured_channels
            .iter()
            .map(|c| c.0.to_string())
            .collect::<Vec<_>>()
            .join(";"),
        scenario: job
            .scenario
            .as_ref()
            .map(|s| s.name.clone())
            .unwrap_or_else(|| "none".into()),
        strategy,
        map_seed: job.map_seed,
        run_seed: job.cfg.seed,
        injection_rate: job.cfg.traffic.injection_rate,
        traffic_mode: format!("{:?}", job.cfg.traffic.mode),
        packets_injected: report.packets_injected,
        packets_delivered: report.packets_delivered,
        measured_packets: report.measured_packets,
        avg_latency_cycles: report.avg_latency_cycles,
        total_energy_j: report.total_energy_j,
        dynamic_energy_j: report.dynamic_energy_j,
        static_power_w: report.static_power.total_w,
        edp_js: report.edp_js,
        worst_loss_db: report.static_power.worst_loss_db,
        photonic_laser_w: report.static_power.photonic_laser_w,
        electrical_laser_w: report.static_power.electrical_laser_w,
        packets_snooped: snooped,
        packets_deciphered: deciphered,
        decipher_rate: rate,
        metadata_leaks: leaks,
        empty_measurement: report.empty_measurement,
    }
}

#[derive(Clone, Copy, Debug, Default, Serialize, Deserialize)]
pub struct Stat {
    pub mean: f64,
    pub min: f64,
    pub max: f64,
}

impl Stat {
    fn over(values: impl Iterator<Item = f64>) -> Self {
        let mut n = 0usize;
        let mut sum = 0.0;
        let mut min = f64::INFINITY;
        let mut max = f64::NEG_INFINITY;
        for v in values {
            n += 1;
            sum += v;
            min = min.min(v);
            max = max.max(v);
        }
        if n == 0 {
            Self::default()
        } else {
            Self {
                mean: sum / n as f64,
                min,
                max,
            }
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct AggregateGroup {
    pub sweep_label: String,
    pub scenario: String,
    pub runs: usize,
    pub avg_latency_cycles: Stat,
    pub total_energy_j: Stat,
    pub edp_js: Stat,
    pub decipher_rate: Stat,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ExperimentSummary {
    pub experiment: String,
    pub rows: Vec<RunRecord>,
    pub groups: Vec<AggregateGroup>,
}

fn execute_jobs(jobs: &[Job]) -> Vec<Result<RunReport>> {
    let exec = |job: &Job| {
        let profile = profile_by_name_checked(job);
        run(
            &job.fabric,
            &job.map,
            &job.stores,
            &profile.loss,
            &profile.energy,
            &job.cfg,
            job.scenario.as_ref().map(|s| &s.scenario),
        )
    };
    #[cfg(feature = "parallel")]
    {
        use rayon::prelude::*;
        jobs.par_iter().map(exec).collect()
    }
    #[cfg(not(feature = "parallel"))]
    {
        jobs.iter().map(exec).collect()
    }
}

// Jobs are only built after spec validation, so the profile always resolves.
fn profile_by_name_checked(job: &Job) -> Profile {
    profile_by_name(&job.profile_name).expect("validated profile")
}

impl Job {
    fn cartesian(spec: &ExperimentSpec) -> Result<Vec<Job>> {
        let maps = generate_batch(&spec.map_seeds(), spec.fabric.die, spec.pv.params)?;
        let maps: Vec<Arc<PvMap>> = maps.into_iter().map(Arc::new).collect();
        let mut jobs = Vec::new();
        for point in &spec.sweep {
            let params = FabricParams {
                n_wavelengths: spec.fabric.n_wavelengths,
                die: spec.fabric.die,
                clock_ghz: spec.sim.clock_ghz,
                ramps: point.ramps,
                ..Default::default()
            };
            let mut fabric = build_by_name(&spec.fabric.architecture, spec.fabric.scale, &params)?;
            let secured = point.resolve_channels(&fabric)?;
            let ids: Vec<ChannelId> = secured.iter().copied().collect();
            fabric.secure_channels(&ids)?;
            let fabric = Arc::new(fabric);
            let scenarios: Vec<Option<NamedScenario>> = if spec.scenarios.is_empty() {
                vec![None]
            } else {
                spec.scenarios.iter().cloned().map(Some).collect()
            };
            for scenario in &scenarios {
                for (map, &map_seed) in maps.iter().zip(&spec.map_seeds()) {
                    let stores =
                        Arc::new(build_keystores(&fabric, map, spec.sim.seed)?);
                    let cfg = SimConfig {
                        secured_channels: secured.clone(),
                        pdes_enabled: point.pdes,
                        ramps_enabled: point.ramps,
                        ..spec.sim.clone()
                    };
                    jobs.push(Job {
                        fabric: Arc::clone(&fabric),
                        map: Arc::clone(map),
                        stores,
                        cfg,
                        scenario: scenario.clone(),
                        sweep_label: point.label.clone(),
                        map_seed,
                        profile_name: spec.profile.clone(),
                    });
                }
            }
        }
        Ok(jobs)
    }
}

fn aggregate(rows: &[RunRecord]) -> Vec<AggregateGroup> {
    let mut keys: Vec<(String, String)> = Vec::new();
    for r in rows {
        let key = (r.sweep_label.clone(), r.scenario.clone());
        if !keys.contains(&key) {
            keys.push(key);
        }
    }
    keys.into_iter()
        .map(|(label, scenario)| {
            let group: Vec<&RunRecord> = rows
                .iter()
                .filter(|r| r.sweep_label == label && r.scenario == scenario)
                .collect();
            AggregateGroup {
                runs: group.len(),
                avg_latency_cycles: Stat::over(group.iter().map(|r| r.avg_latency_cycles)),
                total_energy_j: Stat::over(group.iter().map(|r| r.total_energy_j)),
                edp_js: Stat::over(group.iter().map(|r| r.edp_js)),
                decipher_rate: Stat::over(group.iter().map(|r| r.decipher_rate)),
                sweep_label: label,
                scenario,
            }
        })
        .collect()
}

/// Expands and executes a spec, writing `runs.csv`, `aggregate.json`, and
/// `manifest.json` under `out_dir`. On partial failure the completed rows
/// are still written before the first error is returned.
pub fn run_experiment(spec: &ExperimentSpec, out_dir: &Path) -> Result<ExperimentSummary> {
    spec.validate()?;
    let profile = profile_by_name(&spec.profile).expect("validated");
    std::fs::create_dir_all(out_dir)?;

    let jobs = Job::cartesian(spec)?;
    let results = execute_jobs(&jobs);

    let mut rows = Vec::with_capacity(jobs.len());
    let mut first_err: Option<Error> = None;
    for (job, result) in jobs.iter().zip(results) {
        match result {
            Ok(report) => {
                if spec.emit_artifacts {
                    let name = format!(
                        "report-{}-{}-map{}.json",
                        job.sweep_label,
                        job.scenario
                            .as_ref()
                            .map(|s| s.name.as_str())
                            .unwrap_or("none"),
                        job.map_seed
                    );
                    report.save_json(&out_dir.join(name))?;
                }
                rows.push(record_of(spec, job, &report));
            }
            Err(e) => {
                if first_err.is_none() {
                    first_err = Some(e);
                }
            }
        }
    }

    let mut writer = csv::Writer::from_path(out_dir.join("runs.csv"))?;
    for row in &rows {
        writer.serialize(row)?;
    }
    writer.flush()?;

    let groups = aggregate(&rows);
    std::fs::write(
        out_dir.join("aggregate.json"),
        serde_json::to_string_pretty(&serde_json::json!({
            "kind": "aggregate",
            "version": 1,
            "experiment": spec.name,
            "groups": groups,
        }))?,
    )?;
    std::fs::write(
        out_dir.join("manifest.json"),
        serde_json::to_string_pretty(&serde_json::json!({
            "kind": "manifest",
            "version": 1,
            "experiment": spec.name,
            "crate_version": env!("CARGO_PKG_VERSION"),
            "architecture": spec.fabric.architecture,
            "scale": spec.fabric.scale,
            "profile": profile,
            "map_seeds": spec.map_seeds(),
            "sweep_labels": spec.sweep.iter().map(|p| p.label.clone()).collect::<Vec<_>>(),
            "scenarios": spec.scenarios.iter().map(|s| s.name.clone()).collect::<Vec<_>>(),
            "sim": spec.sim,
        }))?,
    )?;

    if spec.emit_artifacts {
        let params = FabricParams {
            n_wavelengths: spec.fabric.n_wavelengths,
            die: spec.fabric.die,
            clock_ghz: spec.sim.clock_ghz,
            ..Default::default()
        };
        let fabric = build_by_name(&spec.fabric.architecture, spec.fabric.scale, &params)?;
        fabric.save_json(&out_dir.join("fabric.json"))?;
        let maps = generate_batch(&spec.map_seeds(), spec.fabric.die, spec.pv.params)?;
        for map in &maps {
            map.save_json(&out_dir.join(format!("pvmap-{}.json", map.seed)))?;
        }
    }

    match first_err {
        Some(e) => Err(e),
        None => Ok(ExperimentSummary {
            experiment: spec.name.clone(),
            rows,
            groups,
        }),
    }
}
