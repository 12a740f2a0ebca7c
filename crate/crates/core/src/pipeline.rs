//! Config-driven experiment stages and their on-disk artifacts.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::audit::{evaluate_schedule, AuditReport};
use crate::dataset::{
    estimate_domain_box, label_dataset, read_samples_csv, sample_inputs, write_samples_csv,
    DomainBox, Sample, SamplingRanges, DEFAULT_MARGIN,
};
use crate::error::{Error, Result};
use crate::gridsim::RadialNetwork;
use crate::mlp::{train, MlpParams, TrainConfig};
use crate::optimize::lp::SolveStatus;
use crate::optimize::milp::MilpOptions;
use crate::optimize::schedule::{build_schedule_problem, Mode, ScheduleModels, StepInternal};
use crate::pwl::{collect_sample_regions, read_regions, write_regions, Region};
use crate::scenario::{Scenario, ScenarioFile, Schedule};
use crate::simplify::{prune_regions, remove_redundant_rows};

pub const SAMPLES: &str = "samples.csv";
pub const DATA_SUMMARY: &str = "data_summary.json";
pub const DOMAIN: &str = "domain.json";
pub const VIO_WEIGHTS: &str = "vio_mlp.json";
pub const LOSS_WEIGHTS: &str = "loss_mlp.json";
pub const TRAINING: &str = "training.json";
pub const REGIONS: &str = "regions.json";
pub const PRUNING: &str = "pruning.json";
pub const SIMPLIFIED: &str = "regions_simplified.json";
pub const SIMPLIFY_STATS: &str = "simplify.json";
pub const PRUNING_TABLE: &str = "report_pruning.csv";
pub const SCENARIO_TABLE: &str = "report_scenarios.csv";
pub const SUMMARY: &str = "report_summary.json";

pub fn solution_file(mode: Mode, scenario: &str) -> String {
    format!("solution_{mode}_{scenario}.json")
}

pub fn schedule_file(mode: Mode, scenario: &str) -> String {
    format!("schedule_{mode}_{scenario}.csv")
}

pub fn timing_file(mode: Mode) -> String {
    format!("timing_{mode}.json")
}

pub fn audit_file(mode: Mode, scenario: &str) -> String {
    format!("audit_{mode}_{scenario}.json")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DrgScenario {
    pub name: String,
    pub scale: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Window {
    pub start: usize,
    pub len: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainSettings {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
}

impl Default for TrainSettings {
    fn default() -> Self {
        let d = TrainConfig::default();
        Self {
            epochs: d.epochs,
            batch_size: d.batch_size,
            learning_rate: d.learning_rate,
        }
    }
}

impl TrainSettings {
    fn with_seed(&self, seed: u64) -> TrainConfig {
        TrainConfig {
            epochs: self.epochs,
            batch_size: self.batch_size,
            learning_rate: self.learning_rate,
            seed,
        }
    }
}

/// Experiment configuration. Relative paths resolve against the config file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PipelineConfig {
    /// Network JSON; the built-in 33-bus feeder when absent.
    pub network: Option<PathBuf>,
    /// Scenario JSON; the bundled reference scenario when absent.
    pub scenario: Option<PathBuf>,
    pub seed: u64,
    pub samples: usize,
    pub vio_hidden: Vec<usize>,
    pub loss_hidden: Vec<usize>,
    pub train: TrainSettings,
    pub domain_margin: f64,
    pub drg_scenarios: Vec<DrgScenario>,
    /// Scheduling horizon; the full scenario horizon when absent.
    pub window: Option<Window>,
    pub node_limit: usize,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            network: None,
            scenario: None,
            seed: 7,
            samples: 20_000,
            vio_hidden: vec![6, 6, 6],
            loss_hidden: vec![3, 3, 3],
            train: TrainSettings::default(),
            domain_margin: DEFAULT_MARGIN,
            drg_scenarios: [0.5, 1.0, 1.5, 2.0, 2.5, 3.0]
                .iter()
                .enumerate()
                .map(|(i, &scale)| DrgScenario {
                    name: format!("S{}", i + 1),
                    scale,
                })
                .collect(),
            window: Some(Window { start: 10, len: 4 }),
            node_limit: MilpOptions::default().node_limit,
        }
    }
}

impl PipelineConfig {
    pub fn from_json_file(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        let mut cfg: Self = serde_json::from_str(&text)?;
        let base = path.parent().unwrap_or(Path::new("."));
        for p in [&mut cfg.network, &mut cfg.scenario].into_iter().flatten() {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.samples == 0 {
            return Err(Error::Config("samples must be positive".into()));
        }
        if self.vio_hidden.is_empty() || self.vio_hidden.contains(&0) {
            return Err(Error::Config("vio_hidden needs positive layer sizes".into()));
        }
        if self.loss_hidden.contains(&0) {
            return Err(Error::Config("loss_hidden needs positive layer sizes".into()));
        }
        if self.drg_scenarios.iter().any(|s| !(s.scale >= 0.0)) {
            return Err(Error::Config("DRG scales must be non-negative".into()));
        }
        let mut names: Vec<&str> = self.drg_scenarios.iter().map(|s| s.name.as_str()).collect();
        names.sort_unstable();
        names.dedup();
        if names.len() != self.drg_scenarios.len() {
            return Err(Error::Config("DRG scenario names must be unique".into()));
        }
        if self.window.is_some_and(|w| w.len == 0) {
            return Err(Error::Config("window length must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DataSummary {
    pub requested: usize,
    pub labeled: usize,
    pub dropped: usize,
    pub infeasible_fraction: f64,
    pub ranges: SamplingRanges,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelTraining {
    pub hidden: Vec<usize>,
    pub best_epoch: usize,
    pub initial_validation_mse: f64,
    pub best_validation_mse: f64,
    pub final_train_mse: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingSummary {
    pub vio: ModelTraining,
    pub loss: ModelTraining,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PruningSummary {
    pub neurons: usize,
    pub total_regions: f64,
    pub rows_per_region: usize,
    pub sampled_regions: usize,
    pub dropped_infeasible: usize,
    pub retained: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimplifySummary {
    pub regions: usize,
    pub mean_rows_before: f64,
    pub mean_rows_after: f64,
    pub rows_removed: usize,
    pub max_soundness_excess: f64,
    pub all_sound: bool,
    pub lp_solves: usize,
}

/// Deterministic part of a solve; wall times go to a separate sidecar.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolutionRecord {
    pub scenario: String,
    pub mode: Mode,
    pub status: SolveStatus,
    pub objective: Option<f64>,
    pub node_count: usize,
    pub lp_iterations: usize,
    pub binaries: usize,
    pub binaries_per_step: Vec<usize>,
    pub active_regions_per_step: Vec<usize>,
    pub schedule: Option<Schedule>,
    pub internal: Vec<StepInternal>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioRow {
    pub scenario: String,
    pub mode: Mode,
    pub status: Option<SolveStatus>,
    pub objective: Option<f64>,
    pub audited_cost: Option<f64>,
    pub max_voltage_violation: Option<f64>,
    pub max_apparent_flow_mva: Option<f64>,
    pub max_h_true: Option<f64>,
    pub solve_time_s: Option<f64>,
    pub node_count: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportSummary {
    pub pruning: Option<PruningSummary>,
    pub simplify: Option<SimplifySummary>,
    pub scenarios: Vec<ScenarioRow>,
    pub missing: Vec<String>,
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text)?;
    Ok(())
}

fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    Ok(serde_json::from_str(&fs::read_to_string(path)?)?)
}

pub struct Pipeline {
    pub config: PipelineConfig,
    pub out_dir: PathBuf,
}

impl Pipeline {
    pub fn new(config: PipelineConfig, out_dir: impl Into<PathBuf>) -> Result<Self> {
        config.validate()?;
        let out_dir = out_dir.into();
        fs::create_dir_all(&out_dir)?;
        Ok(Self { config, out_dir })
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.out_dir.join(name)
    }

    fn require(&self, name: &str, artifact: &str) -> Result<PathBuf> {
        let p = self.path(name);
        if p.is_file() {
            Ok(p)
        } else {
            Err(Error::MissingArtifact(artifact.to_string()))
        }
    }

    pub fn network(&self) -> Result<RadialNetwork> {
        match &self.config.network {
            Some(p) => RadialNetwork::from_json_file(p),
            None => Ok(RadialNetwork::ieee33()),
        }
    }

    pub fn base_scenario(&self, net: &RadialNetwork) -> Result<Scenario> {
        let file = match &self.config.scenario {
            Some(p) => ScenarioFile::from_json_file(p)?,
            None => ScenarioFile::reference(),
        };
        file.resolve(net)
    }

    /// The scheduling scenarios: scaled generator profiles over the window.
    pub fn scenarios(&self, net: &RadialNetwork) -> Result<Vec<Scenario>> {
        let base = self.base_scenario(net)?;
        let base = match self.config.window {
            Some(w) => base.window(w.start, w.len, None)?,
            None => base,
        };
        Ok(self
            .config
            .drg_scenarios
            .iter()
            .map(|s| base.with_dg_scale(&s.name, s.scale))
            .collect())
    }

    fn dg_scale_max(&self) -> f64 {
        self.config
            .drg_scenarios
            .iter()
            .map(|s| s.scale)
            .fold(1.0, f64::max)
    }

    pub fn generate_data(&self) -> Result<DataSummary> {
        let net = self.network()?;
        let scn = self.base_scenario(&net)?;
        let ranges = SamplingRanges::from_scenario(&scn, self.dg_scale_max())?;
        let xs = sample_inputs(&ranges, self.config.samples, self.config.seed)?;
        let set = label_dataset(&net, &scn.layout, &xs)?;
        if set.samples.is_empty() {
            return Err(Error::NotConverged);
        }
        let feature_xs: Vec<Vec<f64>> = set.samples.iter().map(|s| s.x.clone()).collect();
        let domain = estimate_domain_box(&feature_xs, self.config.domain_margin)?;
        write_samples_csv(&set.samples, fs::File::create(self.path(SAMPLES))?)?;
        write_json(&self.path(DOMAIN), &domain)?;
        let infeasible = set.samples.iter().filter(|s| s.h > 0.0).count();
        let summary = DataSummary {
            requested: self.config.samples,
            labeled: set.samples.len(),
            dropped: set.dropped,
            infeasible_fraction: infeasible as f64 / set.samples.len() as f64,
            ranges,
        };
        write_json(&self.path(DATA_SUMMARY), &summary)?;
        Ok(summary)
    }

    pub fn load_samples(&self) -> Result<Vec<Sample>> {
        read_samples_csv(fs::File::open(self.require(SAMPLES, "samples")?)?)
    }

    pub fn load_domain(&self) -> Result<DomainBox> {
        read_json(&self.require(DOMAIN, "domain box")?)
    }

    pub fn load_models(&self) -> Result<(MlpParams, MlpParams)> {
        let vio = MlpParams::from_json_file(self.require(VIO_WEIGHTS, "weights")?)?;
        let loss = MlpParams::from_json_file(self.require(LOSS_WEIGHTS, "weights")?)?;
        Ok((vio, loss))
    }

    pub fn train(&self) -> Result<TrainingSummary> {
        let samples = self.load_samples()?;
        let net = self.network()?;
        let names = self.base_scenario(&net)?.layout.feature_names();
        let xs: Vec<Vec<f64>> = samples.iter().map(|s| s.x.clone()).collect();
        let fit = |target: &str, ys: Vec<f64>, hidden: &[usize], seed: u64, file: &str| {
            let out = train(&xs, &ys, hidden, &self.config.train.with_seed(seed))?;
            let mut params = out.params;
            params.meta.feature_names = names.clone();
            params.meta.target = target.to_string();
            params.to_json_file(self.path(file))?;
            Ok::<_, Error>(ModelTraining {
                hidden: hidden.to_vec(),
                best_epoch: out.best_epoch,
                initial_validation_mse: out.initial_validation_mse,
                best_validation_mse: out.best_validation_mse,
                final_train_mse: out.train_loss.last().copied().unwrap_or(f64::NAN),
            })
        };
        let seed = self.config.seed;
        let vio = fit(
            "h",
            samples.iter().map(|s| s.h).collect(),
            &self.config.vio_hidden,
            seed.wrapping_add(1),
            VIO_WEIGHTS,
        )?;
        let loss = fit(
            "p_loss",
            samples.iter().map(|s| s.p_loss).collect(),
            &self.config.loss_hidden,
            seed.wrapping_add(2),
            LOSS_WEIGHTS,
        )?;
        let summary = TrainingSummary { vio, loss };
        write_json(&self.path(TRAINING), &summary)?;
        Ok(summary)
    }

    pub fn extract_regions(&self) -> Result<PruningSummary> {
        let (vio, _) = self.load_models()?;
        let domain = self.load_domain()?;
        let xs: Vec<Vec<f64>> = self.load_samples()?.into_iter().map(|s| s.x).collect();
        let sampled = collect_sample_regions(&vio, &xs)?;
        let sampled_regions = sampled.len();
        let regions = sampled
            .into_iter()
            .map(|(pat, count)| Region::build(&vio, pat, count, Some(&domain)))
            .collect::<Result<Vec<_>>>()?;
        let outcome = prune_regions(regions)?;
        write_regions(self.path(REGIONS), &outcome.retained)?;
        let neurons = vio.num_hidden_neurons();
        let summary = PruningSummary {
            neurons,
            total_regions: 2f64.powi(neurons as i32),
            rows_per_region: neurons + 1,
            sampled_regions,
            dropped_infeasible: outcome.dropped_infeasible,
            retained: outcome.retained.len(),
        };
        write_json(&self.path(PRUNING), &summary)?;
        Ok(summary)
    }

    pub fn simplify(&self) -> Result<SimplifySummary> {
        let (vio, _) = self.load_models()?;
        let domain = self.load_domain()?;
        let regions = read_regions(self.require(REGIONS, "regions")?, &vio, Some(&domain))?;
        let mut out = Vec::with_capacity(regions.len());
        let (mut before, mut after, mut removed, mut lp_solves) = (0, 0, 0, 0);
        let mut excess = f64::NEG_INFINITY;
        for mut region in regions {
            let s = remove_redundant_rows(&region.polytope)?;
            before += region.polytope.num_rows();
            after += s.polytope.num_rows();
            removed += s.removed.len();
            lp_solves += s.lp_solves;
            excess = excess.max(s.soundness_excess);
            region.rows_removed = Some(s.removed.len());
            region.polytope = s.polytope;
            out.push(region);
        }
        write_regions(self.path(SIMPLIFIED), &out)?;
        let n = out.len().max(1) as f64;
        let summary = SimplifySummary {
            regions: out.len(),
            mean_rows_before: before as f64 / n,
            mean_rows_after: after as f64 / n,
            rows_removed: removed,
            max_soundness_excess: if removed == 0 { 0.0 } else { excess },
            all_sound: removed == 0 || excess <= crate::simplify::REDUNDANCY_TOL,
            lp_solves,
        };
        write_json(&self.path(SIMPLIFY_STATS), &summary)?;
        Ok(summary)
    }

    pub fn load_simplified_regions(&self, vio: &MlpParams, domain: &DomainBox) -> Result<Vec<Region>> {
        read_regions(self.require(SIMPLIFIED, "simplified regions")?, vio, Some(domain))
    }

    pub fn solve(&self, mode: Mode) -> Result<Vec<SolutionRecord>> {
        let (vio, loss) = self.load_models()?;
        let (domain, regions) = match mode {
            Mode::P2 => (None, Vec::new()),
            Mode::P3 => {
                let d = self.load_domain()?;
                let r = self.load_simplified_regions(&vio, &d)?;
                (Some(d), r)
            }
        };
        let net = self.network()?;
        let opts = MilpOptions {
            node_limit: self.config.node_limit,
            ..MilpOptions::default()
        };
        let mut records = Vec::new();
        let mut timing = BTreeMap::new();
        for scn in self.scenarios(&net)? {
            let models = ScheduleModels {
                vio: &vio,
                loss: &loss,
                regions: &regions,
                domain: domain.as_ref(),
            };
            let problem = build_schedule_problem(&scn, models, mode)?;
            let sol = problem.solve(&scn, &opts)?;
            let has_point = !sol.result.values.is_empty();
            if has_point {
                sol.schedule
                    .write_csv(&scn, fs::File::create(self.path(&schedule_file(mode, &scn.name)))?)?;
            }
            let record = SolutionRecord {
                scenario: scn.name.clone(),
                mode,
                status: sol.result.status,
                objective: has_point.then_some(sol.result.objective),
                node_count: sol.result.node_count,
                lp_iterations: sol.result.lp_iterations,
                binaries: problem.num_binaries(),
                binaries_per_step: problem.steps.iter().map(|s| s.num_binaries()).collect(),
                active_regions_per_step: problem.steps.iter().map(|s| s.active_regions).collect(),
                schedule: has_point.then(|| sol.schedule.clone()),
                internal: sol.internal.clone(),
            };
            write_json(&self.path(&solution_file(mode, &scn.name)), &record)?;
            timing.insert(scn.name.clone(), sol.result.wall_time_s);
            records.push(record);
        }
        write_json(&self.path(&timing_file(mode)), &timing)?;
        Ok(records)
    }

    /// Audits every solution on disk; returns `(scenario, mode, report)`.
    pub fn evaluate(&self) -> Result<Vec<(String, Mode, AuditReport)>> {
        let net = self.network()?;
        let models = self.load_models().ok();
        let mut out = Vec::new();
        for scn in self.scenarios(&net)? {
            for mode in [Mode::P2, Mode::P3] {
                let path = self.path(&solution_file(mode, &scn.name));
                if !path.is_file() {
                    continue;
                }
                let record: SolutionRecord = read_json(&path)?;
                let Some(sched) = record.schedule else { continue };
                let report = evaluate_schedule(
                    &net,
                    &scn,
                    &sched,
                    models.as_ref().map(|m| &m.0),
                    models.as_ref().map(|m| &m.1),
                )?;
                write_json(&self.path(&audit_file(mode, &scn.name)), &report)?;
                out.push((scn.name.clone(), mode, report));
            }
        }
        if out.is_empty() {
            return Err(Error::MissingArtifact("solutions".into()));
        }
        Ok(out)
    }

    /// Writes the pruning and scenario tables; fails after writing when
    /// nothing could be reported.
    pub fn report(&self) -> Result<ReportSummary> {
        let mut missing = Vec::new();
        let mut load = |name: &str| -> Option<PathBuf> {
            let p = self.path(name);
            if p.is_file() {
                Some(p)
            } else {
                missing.push(name.to_string());
                None
            }
        };
        let pruning: Option<PruningSummary> = load(PRUNING).map(|p| read_json(&p)).transpose()?;
        let simplify: Option<SimplifySummary> = load(SIMPLIFY_STATS).map(|p| read_json(&p)).transpose()?;

        let mut w = csv::Writer::from_path(self.path(PRUNING_TABLE))?;
        w.write_record(["case", "activation_regions", "average_constraints"])?;
        if let Some(p) = &pruning {
            w.write_record([
                "without pruning".to_string(),
                format!("{}", p.total_regions),
                p.rows_per_region.to_string(),
            ])?;
            let avg = simplify
                .as_ref()
                .map(|s| format!("{:.4}", s.mean_rows_after))
                .unwrap_or_default();
            w.write_record(["with pruning".to_string(), p.retained.to_string(), avg])?;
        }
        w.flush()?;

        let names: Vec<String> = self.config.drg_scenarios.iter().map(|s| s.name.clone()).collect();
        let mut rows = Vec::new();
        for mode in [Mode::P2, Mode::P3] {
            let timing: Option<BTreeMap<String, f64>> =
                load(&timing_file(mode)).map(|p| read_json(&p)).transpose()?;
            for name in &names {
                let record: Option<SolutionRecord> =
                    load(&solution_file(mode, name)).map(|p| read_json(&p)).transpose()?;
                let audit: Option<AuditReport> =
                    load(&audit_file(mode, name)).map(|p| read_json(&p)).transpose()?;
                if record.is_none() && audit.is_none() {
                    continue;
                }
                rows.push(ScenarioRow {
                    scenario: name.clone(),
                    mode,
                    status: record.as_ref().map(|r| r.status),
                    objective: record.as_ref().and_then(|r| r.objective),
                    audited_cost: audit.as_ref().map(|a| a.total_cost),
                    max_voltage_violation: audit.as_ref().map(|a| a.max_voltage_violation),
                    max_apparent_flow_mva: audit.as_ref().map(|a| a.max_apparent_flow_mva),
                    max_h_true: audit.as_ref().map(|a| a.max_h_true),
                    solve_time_s: timing.as_ref().and_then(|t| t.get(name).copied()),
                    node_count: record.as_ref().map(|r| r.node_count),
                });
            }
        }
        let mut w = csv::Writer::from_path(self.path(SCENARIO_TABLE))?;
        w.write_record([
            "scenario",
            "mode",
            "status",
            "objective",
            "audited_cost",
            "max_voltage_violation",
            "max_apparent_flow_mva",
            "max_h_true",
            "solve_time_s",
            "node_count",
        ])?;
        let cell = |v: Option<f64>| v.map(|v| format!("{v:.6}")).unwrap_or_default();
        for r in &rows {
            w.write_record([
                r.scenario.clone(),
                r.mode.to_string(),
                r.status
                    .map(|s| serde_json::to_value(s).map(|v| v.as_str().unwrap_or_default().to_string()))
                    .transpose()?
                    .unwrap_or_default(),
                cell(r.objective),
                cell(r.audited_cost),
                cell(r.max_voltage_violation),
                cell(r.max_apparent_flow_mva),
                cell(r.max_h_true),
                cell(r.solve_time_s),
                r.node_count.map(|n| n.to_string()).unwrap_or_default(),
            ])?;
        }
        w.flush()?;

        let summary = ReportSummary {
            pruning,
            simplify,
            scenarios: rows,
            missing,
        };
        write_json(&self.path(SUMMARY), &summary)?;
        if summary.pruning.is_none() && summary.simplify.is_none() && summary.scenarios.is_empty() {
            return Err(Error::MissingArtifact("any stage output".into()));
        }
        Ok(summary)
    }

    pub fn run_all(&self) -> Result<ReportSummary> {
        self.generate_data()?;
        self.train()?;
        self.extract_regions()?;
        self.simplify()?;
        self.solve(Mode::P2)?;
        self.solve(Mode::P3)?;
        self.evaluate()?;
        self.report()
    }
}
