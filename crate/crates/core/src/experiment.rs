//! Experiment driver behind the `qosrank` binary: load or synthesize a
//! matrix, split it, rank every active user with every configured arm, and
//! emit CSV reports.
//!
//! All randomness is derived from `base_seed`: trial `t` uses
//! `derive_seed(base_seed, [t])`, and every split, active-user draw and
//! random-baseline shuffle hangs off that trial seed. Trials run in
//! parallel; output is identical to a serial run.

use std::fmt;
use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::allocsim::{synth_matrix, AllocPolicy, ScenarioConfig, Synthesis};
use crate::error::{Error, Result};
use crate::matrix::{
    load_matrix, split_train_test, MetricOrientation, QoSMatrix, ServiceId, SplitSpec, UserId,
};
use crate::metrics::{aggregate, kendall_tau_score, ExperimentReport, ScoreRow};
use crate::ranker::{rank_with_neighbors, RankOptions, RankerKind, Ranking};
use crate::rng;
use crate::similarity::{self, Neighborhood, DEFAULT_K};

pub const ROWS_FILE: &str = "report.csv";
pub const SUMMARY_FILE: &str = "summary.csv";
pub const PERFORMANCE_FILE: &str = "qos_performance.csv";
pub const PERFORMANCE_HEADER: [&str; 4] = ["density", "kind", "mean_top1_qos", "users"];

/// A ranker evaluated on a particular matrix.
///
/// `cloudrank2_modify` is CloudRank2 run on the matrix synthesized with
/// best-fit-decreasing placement; every other arm uses the scenario's own
/// policy.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Arm {
    #[serde(rename = "cloudrank1")]
    CloudRank1,
    #[serde(rename = "cloudrank2")]
    CloudRank2,
    #[serde(rename = "cloudrank2_modify")]
    CloudRank2Modify,
    #[serde(rename = "random", alias = "random-baseline")]
    Random,
}

impl Arm {
    pub fn as_str(self) -> &'static str {
        match self {
            Arm::CloudRank1 => "cloudrank1",
            Arm::CloudRank2 => "cloudrank2",
            Arm::CloudRank2Modify => "cloudrank2_modify",
            Arm::Random => "random",
        }
    }

    pub fn ranker(self) -> RankerKind {
        match self {
            Arm::CloudRank1 => RankerKind::CloudRank1,
            Arm::CloudRank2 | Arm::CloudRank2Modify => RankerKind::CloudRank2,
            Arm::Random => RankerKind::RandomBaseline,
        }
    }

    fn uses_best_fit(self) -> bool {
        matches!(self, Arm::CloudRank2Modify)
    }
}

impl fmt::Display for Arm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for Arm {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        serde_json::from_value(serde_json::Value::String(s.to_string()))
            .map_err(|_| Error::Config(format!("unknown kind `{s}`")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DataSource {
    /// A `user_id,service_id,qos_value` file.
    Csv {
        path: PathBuf,
        orientation: MetricOrientation,
    },
    /// A scenario JSON file to synthesize from.
    Scenario(PathBuf),
    /// An inline scenario.
    Synthetic(ScenarioConfig),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub source: DataSource,
    #[serde(default = "default_densities")]
    pub densities: Vec<f64>,
    #[serde(default = "default_k")]
    pub k: usize,
    pub kinds: Vec<Arm>,
    /// Active users drawn per trial.
    pub active_users: usize,
    pub trials: usize,
    pub base_seed: u64,
    #[serde(default = "default_true")]
    pub correct_observed: bool,
}

fn default_densities() -> Vec<f64> {
    vec![0.1, 0.2, 0.3]
}

fn default_k() -> usize {
    DEFAULT_K
}

fn default_true() -> bool {
    true
}

impl ExperimentConfig {
    /// The committed default fixture: 50 users × 30 services synthesized
    /// from [`ScenarioConfig::default`], 100 trials.
    pub fn default_fixture() -> Self {
        ExperimentConfig {
            source: DataSource::Synthetic(ScenarioConfig::default()),
            densities: default_densities(),
            k: DEFAULT_K,
            kinds: vec![
                Arm::CloudRank1,
                Arm::CloudRank2,
                Arm::CloudRank2Modify,
                Arm::Random,
            ],
            active_users: 10,
            trials: 100,
            base_seed: 2013,
            correct_observed: true,
        }
    }

    /// Reads a config file; relative paths inside it resolve against the
    /// file's directory.
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut cfg: ExperimentConfig = serde_json::from_str(&text)
            .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        let dir = path.parent().unwrap_or_else(|| Path::new("."));
        match &mut cfg.source {
            DataSource::Csv { path, .. } | DataSource::Scenario(path) if path.is_relative() => {
                *path = dir.join(&*path);
            }
            _ => {}
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.kinds.is_empty() {
            return Err(Error::Config("at least one kind is required".into()));
        }
        if self.densities.is_empty() {
            return Err(Error::Config("at least one density is required".into()));
        }
        if let Some(d) = self.densities.iter().find(|&&d| !(d > 0.0 && d <= 1.0)) {
            return Err(Error::Config(format!("density {d} outside (0, 1]")));
        }
        if self.trials == 0 || self.active_users == 0 {
            return Err(Error::Config("trials and active_users must be positive".into()));
        }
        let synthetic = !matches!(self.source, DataSource::Csv { .. });
        if !synthetic && self.kinds.iter().any(|a| a.uses_best_fit()) {
            return Err(Error::Config(
                "cloudrank2_modify needs a synthetic source".into(),
            ));
        }
        Ok(())
    }

    pub fn rank_options(&self) -> RankOptions {
        RankOptions {
            k: self.k,
            correct_observed: self.correct_observed,
        }
    }

    pub fn trial_seeds(&self) -> Vec<u64> {
        (0..self.trials as u64)
            .map(|t| rng::derive_seed(self.base_seed, &[t]))
            .collect()
    }
}

/// Matrices an experiment runs on.
#[derive(Debug, Clone)]
pub struct Datasets {
    /// Used by every arm except `cloudrank2_modify`.
    pub primary: QoSMatrix,
    /// Best-fit-decreasing synthesis, present when a scenario is the source.
    pub best_fit: Option<QoSMatrix>,
    pub orientation: MetricOrientation,
}

impl Datasets {
    pub fn load(source: &DataSource) -> Result<Self> {
        match source {
            DataSource::Csv { path, orientation } => Ok(Datasets {
                primary: load_matrix(path, *orientation)?,
                best_fit: None,
                orientation: *orientation,
            }),
            DataSource::Scenario(path) => Self::synthesize(&load_scenario(path)?),
            DataSource::Synthetic(s) => Self::synthesize(s),
        }
    }

    fn synthesize(scenario: &ScenarioConfig) -> Result<Self> {
        let primary: Synthesis = synth_matrix(scenario, scenario.policy)?;
        let best_fit = synth_matrix(scenario, AllocPolicy::BestFitDecreasing)?;
        Ok(Datasets {
            primary: primary.matrix,
            best_fit: Some(best_fit.matrix),
            orientation: primary.orientation,
        })
    }

    pub fn for_arm(&self, arm: Arm) -> Result<&QoSMatrix> {
        if arm.uses_best_fit() {
            self.best_fit
                .as_ref()
                .ok_or_else(|| Error::Config("cloudrank2_modify needs a synthetic source".into()))
        } else {
            Ok(&self.primary)
        }
    }
}

pub fn load_scenario(path: &Path) -> Result<ScenarioConfig> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let scenario: ScenarioConfig = serde_json::from_str(&text)
        .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
    scenario.validate()?;
    Ok(scenario)
}

/// Mean ground-truth QoS of the top-ranked service, canonical orientation.
#[derive(Debug, Clone, PartialEq)]
pub struct QoSPerformanceRow {
    pub density: f64,
    pub kind: String,
    pub mean_top1_qos: f64,
    pub users: usize,
}

#[derive(Debug, Clone)]
pub struct Evaluation {
    pub report: ExperimentReport,
    pub performance: Vec<QoSPerformanceRow>,
    pub orientation: MetricOrientation,
    /// (trial, user) pairs whose active row was empty.
    pub skipped: usize,
}

struct TrialOutput {
    rows: Vec<ScoreRow>,
    /// (density index, arm index, top-1 QoS).
    top1: Vec<(usize, usize, f64)>,
    skipped: usize,
}

fn run_trial(
    cfg: &ExperimentConfig,
    data: &Datasets,
    trial: usize,
    seed: u64,
) -> Result<TrialOutput> {
    let users: Vec<UserId> = data.primary.users().collect();
    let mut active = rng::sample(
        &mut rng::seeded(rng::derive_seed(seed, &[0])),
        &users,
        cfg.active_users,
    );
    active.sort();
    let candidates: Vec<ServiceId> = data.primary.services().collect();
    let opts = cfg.rank_options();

    let mut out = TrialOutput {
        rows: Vec::new(),
        top1: Vec::new(),
        skipped: 0,
    };
    for (di, &density) in cfg.densities.iter().enumerate() {
        let spec = SplitSpec {
            density,
            seed: rng::derive_seed(seed, &[1, di as u64]),
            active_users: active.clone(),
        };
        let primary = split_train_test(&data.primary, &spec)?;
        let best_fit = data
            .best_fit
            .as_ref()
            .filter(|_| cfg.kinds.iter().any(|a| a.uses_best_fit()))
            .map(|m| split_train_test(m, &spec))
            .transpose()?;
        out.skipped += primary.skipped.len();

        for &u in &active {
            if primary.skipped.contains(&u) {
                continue;
            }
            // Neighborhoods depend only on the train matrix, so each is
            // computed once and shared by the arms that use it.
            let mut nbr_primary: Option<Neighborhood> = None;
            let mut nbr_best_fit: Option<Neighborhood> = None;
            for (ai, &arm) in cfg.kinds.iter().enumerate() {
                let (split, cache, full) = if arm.uses_best_fit() {
                    (
                        best_fit.as_ref().expect("validated"),
                        &mut nbr_best_fit,
                        data.best_fit.as_ref().expect("validated"),
                    )
                } else {
                    (&primary, &mut nbr_primary, &data.primary)
                };
                let nbrs = match (arm.ranker(), cache.as_ref()) {
                    (RankerKind::RandomBaseline, _) => Neighborhood::empty(u),
                    (_, Some(n)) => n.clone(),
                    (_, None) => {
                        let n = similarity::neighborhood(&split.train, u, cfg.k)?;
                        *cache = Some(n.clone());
                        n
                    }
                };
                let shuffle_seed = rng::derive_seed(seed, &[2, di as u64, u.0 as u64]);
                let ranking: Ranking = rank_with_neighbors(
                    arm.ranker(),
                    &split.train,
                    u,
                    &nbrs,
                    &candidates,
                    &opts,
                    shuffle_seed,
                )?;
                if let Some(score) = kendall_tau_score(&ranking, &split.truth, u)? {
                    out.rows.push(ScoreRow {
                        density,
                        kind: arm.as_str().to_string(),
                        trial,
                        user: u,
                        score,
                    });
                }
                if let Some(q) = ranking.top().and_then(|s| full.get(u, s)) {
                    out.top1.push((di, ai, q));
                }
            }
        }
    }
    Ok(out)
}

/// Runs every (trial, density, arm, active user) cell.
pub fn evaluate(cfg: &ExperimentConfig) -> Result<Evaluation> {
    cfg.validate()?;
    let data = Datasets::load(&cfg.source)?;
    evaluate_on(cfg, &data)
}

pub fn evaluate_on(cfg: &ExperimentConfig, data: &Datasets) -> Result<Evaluation> {
    cfg.validate()?;
    if cfg.kinds.iter().any(|a| a.uses_best_fit()) && data.best_fit.is_none() {
        return Err(Error::Config("cloudrank2_modify needs a synthetic source".into()));
    }
    if data.primary.num_services() == 0 {
        return Err(Error::domain("dataset has no services"));
    }
    let seeds = cfg.trial_seeds();
    let outputs = seeds
        .par_iter()
        .enumerate()
        .map(|(t, &seed)| run_trial(cfg, data, t, seed))
        .collect::<Result<Vec<_>>>()?;

    let arm_index = |kind: &str| cfg.kinds.iter().position(|a| a.as_str() == kind);
    let density_index = |d: f64| cfg.densities.iter().position(|&x| x == d);
    let mut rows: Vec<ScoreRow> = Vec::new();
    let mut top1: Vec<Vec<Vec<f64>>> = vec![vec![Vec::new(); cfg.kinds.len()]; cfg.densities.len()];
    let mut skipped = 0;
    for out in outputs {
        rows.extend(out.rows);
        for (di, ai, q) in out.top1 {
            top1[di][ai].push(q);
        }
        skipped += out.skipped;
    }
    // Stable: trial and user order survive within a (density, kind) block.
    rows.sort_by_key(|r| (density_index(r.density), arm_index(&r.kind)));

    let performance = cfg
        .densities
        .iter()
        .enumerate()
        .flat_map(|(di, &density)| {
            let top1 = &top1;
            cfg.kinds.iter().enumerate().filter_map(move |(ai, arm)| {
                let values = &top1[di][ai];
                (!values.is_empty()).then(|| QoSPerformanceRow {
                    density,
                    kind: arm.as_str().to_string(),
                    mean_top1_qos: values.iter().sum::<f64>() / values.len() as f64,
                    users: values.len(),
                })
            })
        })
        .collect();

    let report = aggregate(rows, seeds)?;
    Ok(Evaluation {
        report,
        performance,
        orientation: data.orientation,
        skipped,
    })
}

impl Evaluation {
    pub fn performance_for(&self, density: f64, kind: &str) -> Option<&QoSPerformanceRow> {
        self.performance
            .iter()
            .find(|p| p.density == density && p.kind == kind)
    }

    /// Performance CSV; QoS is written in the dataset's source orientation.
    pub fn write_performance<W: Write>(&self, writer: W) -> Result<()> {
        let mut wtr = csv::Writer::from_writer(writer);
        wtr.write_record(PERFORMANCE_HEADER)?;
        for p in &self.performance {
            wtr.write_record([
                p.density.to_string(),
                p.kind.clone(),
                self.orientation.to_source(p.mean_top1_qos).to_string(),
                p.users.to_string(),
            ])?;
        }
        wtr.flush().map_err(|e| Error::io("<performance csv>", e))?;
        Ok(())
    }

    /// Writes the detail, summary and performance CSVs into `dir`.
    pub fn write_to(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let open = |name: &str| -> Result<BufWriter<File>> {
            let path = dir.join(name);
            File::create(&path)
                .map(BufWriter::new)
                .map_err(|e| Error::io(path, e))
        };
        self.report.write_rows(open(ROWS_FILE)?)?;
        self.report.write_summary(open(SUMMARY_FILE)?)?;
        self.write_performance(open(PERFORMANCE_FILE)?)?;
        Ok(())
    }
}

/// Ranks every service for `user` on the full (unsplit) matrix.
pub fn rank_user(cfg: &ExperimentConfig, arm: Arm, user: UserId) -> Result<Ranking> {
    let data = Datasets::load(&cfg.source)?;
    let m = data.for_arm(arm)?;
    m.check_user(user)?;
    let candidates: Vec<ServiceId> = m.services().collect();
    if candidates.is_empty() {
        return Err(Error::domain("dataset has no services"));
    }
    crate::ranker::rank(
        arm.ranker(),
        m,
        user,
        &candidates,
        &cfg.rank_options(),
        rng::derive_seed(cfg.base_seed, &[user.0 as u64]),
    )
}
