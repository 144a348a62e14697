//! Property experiments: bias insensitivity, reliability monotonicity,
//! and the pointwise deviation identity, certified by Monte Carlo and by
//! deterministic replay on frozen draws.

use crate::assignment::{AssignmentPlan, EvaluatorBundle, EvaluatorId, PaperId};
use crate::config::{CheckKind, ExamConfig, PropertiesSection};
use crate::estimation::EstimationConfig;
use crate::model::{EvaluatorStrategy, Prior};
use crate::rng::RngStream;
use crate::scoring::score_papers;
use crate::sim::{
    build_environment, replica_utility, ConditioningMode, FrozenEnvironment, SimError,
    StrategyPrior, WelfareMode,
};
use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("sweep grid is empty")]
    EmptyGrid,
    #[error("bias sweep must hold reliability fixed; grid mixes reliabilities")]
    MixedReliabilityInBiasSweep,
    #[error("reliability sweep must hold bias fixed; grid mixes biases")]
    MixedBiasInReliabilitySweep,
    #[error("sweep target {sweep} does not match environment target {env}")]
    TargetMismatch {
        sweep: EvaluatorId,
        env: EvaluatorId,
    },
    #[error("statistical branch needs >= {need} replicas, got {got}")]
    TooFewReplicas { got: u64, need: u64 },
    #[error("common random numbers must be enabled for this check")]
    CrnRequired,
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error("cannot write report {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
}

/// A strategy grid swept for one target evaluator inside a frozen
/// environment.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StrategySweep {
    pub target: EvaluatorId,
    /// (bias, reliability) points.
    pub grid: Vec<(f64, f64)>,
    pub replicas: u64,
    /// Reuse the target's standardized draws across grid points.
    pub common_random_numbers: bool,
    pub mode: ConditioningMode,
    pub welfare_mode: WelfareMode,
    pub alpha: f64,
}

/// One replica's utility sample; serialized as a CSV row.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplicaRow {
    pub check: String,
    /// The swept coordinate: bias for EPBI, reliability for EPRM, noise
    /// standard deviation for the pointwise check.
    pub grid_point: f64,
    pub replica: u64,
    /// Target's total transfer; absolute deviation |r* - y| for the
    /// pointwise check.
    pub utility: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridPointReport {
    pub point: f64,
    pub mean: f64,
    pub ci_halfwidth: f64,
}

/// One named pass/fail with the number it was judged on: `passed` iff
/// `observed <= allowed`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Verdict {
    pub name: String,
    pub passed: bool,
    pub observed: f64,
    pub allowed: f64,
}

impl Verdict {
    fn judge(name: &str, observed: f64, allowed: f64) -> Self {
        Self {
            name: name.to_string(),
            passed: observed <= allowed,
            observed,
            allowed,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PropertyReport {
    pub check: CheckKind,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mode: Option<ConditioningMode>,
    pub seed: u64,
    pub replicas: u64,
    pub grid: Vec<GridPointReport>,
    pub verdicts: Vec<Verdict>,
    /// Per-replica samples the verdicts were computed from.
    #[serde(skip)]
    pub rows: Vec<ReplicaRow>,
}

impl PropertyReport {
    pub fn passed(&self) -> bool {
        self.verdicts.iter().all(|v| v.passed)
    }
}

/// CSV header shared by all checks.
pub const SAMPLES_CSV_HEADER: &str = "check,grid_point,replica,utility";

pub fn rows_to_csv(rows: &[ReplicaRow]) -> String {
    let mut out = String::from(SAMPLES_CSV_HEADER);
    out.push('\n');
    for r in rows {
        out.push_str(&format!(
            "{},{},{},{}\n",
            r.check, r.grid_point, r.replica, r.utility
        ));
    }
    out
}

const DETERMINISTIC_TOLERANCE: f64 = 1e-9;
const EPRM_MIN_REPLICAS: u64 = 1_000;

fn mean_and_ci(samples: &[f64]) -> (f64, f64) {
    let n = samples.len() as f64;
    let mean = samples.iter().sum::<f64>() / n;
    if samples.len() < 2 {
        return (mean, f64::INFINITY);
    }
    let var = samples.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, 1.96 * (var / n).sqrt())
}

fn sweep_utilities(
    env: &FrozenEnvironment,
    sweep: &StrategySweep,
    grid_idx: usize,
    independent_streams: bool,
) -> Result<Vec<f64>, HarnessError> {
    let (bias, reliability) = sweep.grid[grid_idx];
    let strategy = EvaluatorStrategy { bias, reliability };
    let mut out = Vec::with_capacity(sweep.replicas as usize);
    for r in 0..sweep.replicas {
        // With common random numbers the replica index (hence the target's
        // noise stream) is shared across grid points; otherwise each grid
        // point gets its own block of streams.
        let replica = if independent_streams {
            (grid_idx as u64 + 1) * sweep.replicas + r
        } else {
            r
        };
        out.push(replica_utility(
            env,
            &strategy,
            sweep.mode,
            sweep.welfare_mode,
            replica,
            sweep.alpha,
        )?);
    }
    Ok(out)
}

fn validate_sweep(env: &FrozenEnvironment, sweep: &StrategySweep) -> Result<(), HarnessError> {
    if sweep.grid.is_empty() {
        return Err(HarnessError::EmptyGrid);
    }
    if sweep.target != env.target {
        return Err(HarnessError::TargetMismatch {
            sweep: sweep.target,
            env: env.target,
        });
    }
    Ok(())
}

/// Bias insensitivity. Two branches: (a) deterministic, with common
/// random numbers, per-replica utility must be identical across all bias
/// points to 1e-9; (b) statistical, with independent draws per point,
/// all mean utilities must lie within overlapping 95% confidence
/// intervals.
pub fn check_epbi(
    env: &FrozenEnvironment,
    sweep: &StrategySweep,
) -> Result<PropertyReport, HarnessError> {
    validate_sweep(env, sweep)?;
    if !sweep.common_random_numbers {
        return Err(HarnessError::CrnRequired);
    }
    let tau0 = sweep.grid[0].1;
    if sweep.grid.iter().any(|&(_, tau)| tau != tau0) {
        return Err(HarnessError::MixedReliabilityInBiasSweep);
    }

    let mut rows = Vec::new();
    let mut grid_reports = Vec::new();

    // Branch (a): shared draws, exact flatness.
    let mut det: Vec<Vec<f64>> = Vec::new();
    for gi in 0..sweep.grid.len() {
        let utilities = sweep_utilities(env, sweep, gi, false)?;
        for (r, &u) in utilities.iter().enumerate() {
            rows.push(ReplicaRow {
                check: "epbi-det".into(),
                grid_point: sweep.grid[gi].0,
                replica: r as u64,
                utility: u,
            });
        }
        det.push(utilities);
    }
    let mut max_spread: f64 = 0.0;
    for r in 0..sweep.replicas as usize {
        let base = det[0][r];
        for series in &det[1..] {
            max_spread = max_spread.max((series[r] - base).abs());
        }
    }
    let deterministic = Verdict::judge("epbi-deterministic", max_spread, DETERMINISTIC_TOLERANCE);

    // Branch (b): independent draws, overlapping confidence intervals.
    let mut stats: Vec<(f64, f64)> = Vec::new();
    for gi in 0..sweep.grid.len() {
        let utilities = sweep_utilities(env, sweep, gi, true)?;
        for (r, &u) in utilities.iter().enumerate() {
            rows.push(ReplicaRow {
                check: "epbi-stat".into(),
                grid_point: sweep.grid[gi].0,
                replica: r as u64,
                utility: u,
            });
        }
        let (mean, ci) = mean_and_ci(&utilities);
        grid_reports.push(GridPointReport {
            point: sweep.grid[gi].0,
            mean,
            ci_halfwidth: ci,
        });
        stats.push((mean, ci));
    }
    let mut worst_gap: f64 = 0.0;
    for i in 0..stats.len() {
        for j in (i + 1)..stats.len() {
            let gap = (stats[i].0 - stats[j].0).abs() - (stats[i].1 + stats[j].1);
            worst_gap = worst_gap.max(gap);
        }
    }
    let statistical = Verdict::judge("epbi-statistical", worst_gap, 0.0);

    Ok(PropertyReport {
        check: CheckKind::Epbi,
        mode: Some(sweep.mode),
        seed: env.seed,
        replicas: sweep.replicas,
        grid: grid_reports,
        verdicts: vec![deterministic, statistical],
        rows,
    })
}

/// Reliability monotonicity: mean utility must be non-decreasing in
/// reliability, judged adjacent-pair-wise with a pooled 95% confidence
/// tolerance (a decrease only fails if it exceeds the pooled half-width).
pub fn check_eprm(
    env: &FrozenEnvironment,
    sweep: &StrategySweep,
) -> Result<PropertyReport, HarnessError> {
    validate_sweep(env, sweep)?;
    if sweep.replicas < EPRM_MIN_REPLICAS {
        return Err(HarnessError::TooFewReplicas {
            got: sweep.replicas,
            need: EPRM_MIN_REPLICAS,
        });
    }
    let b0 = sweep.grid[0].0;
    if sweep.grid.iter().any(|&(b, _)| b != b0) {
        return Err(HarnessError::MixedBiasInReliabilitySweep);
    }

    let mut order: Vec<usize> = (0..sweep.grid.len()).collect();
    order.sort_by(|&a, &b| sweep.grid[a].1.total_cmp(&sweep.grid[b].1));

    let mut rows = Vec::new();
    let mut grid_reports = Vec::new();
    for &gi in &order {
        let utilities = sweep_utilities(env, sweep, gi, !sweep.common_random_numbers)?;
        for (r, &u) in utilities.iter().enumerate() {
            rows.push(ReplicaRow {
                check: "eprm".into(),
                grid_point: sweep.grid[gi].1,
                replica: r as u64,
                utility: u,
            });
        }
        let (mean, ci) = mean_and_ci(&utilities);
        grid_reports.push(GridPointReport {
            point: sweep.grid[gi].1,
            mean,
            ci_halfwidth: ci,
        });
    }

    let mut worst_drop: f64 = 0.0;
    for pair in grid_reports.windows(2) {
        let pooled = (pair[0].ci_halfwidth.powi(2) + pair[1].ci_halfwidth.powi(2)).sqrt();
        let drop = (pair[0].mean - pair[1].mean) - pooled;
        worst_drop = worst_drop.max(drop);
    }
    let verdict = Verdict::judge("eprm-monotone", worst_drop, 0.0);

    Ok(PropertyReport {
        check: CheckKind::Eprm,
        mode: Some(sweep.mode),
        seed: env.seed,
        replicas: sweep.replicas,
        grid: grid_reports,
        verdicts: vec![verdict],
        rows,
    })
}

/// A grader other than the target in a pointwise instance.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct OtherGrader {
    pub bias: f64,
    pub reliability: f64,
    /// Standardized noise on each probe, in probe order.
    pub probe_draws: Vec<f64>,
    /// Standardized noise on the regular paper.
    pub paper_draw: f64,
}

/// One frozen single-paper instance: a target evaluator with fixed
/// standardized draws grading `x` probes plus one regular paper, alongside
/// co-graders whose reports are fully determined. Only the target's noise
/// scale sigma is varied.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PointwiseInstance {
    pub prior: Prior,
    pub probe_truth: Vec<f64>,
    /// True score of the regular paper.
    pub y: f64,
    pub target_bias: f64,
    pub target_probe_draws: Vec<f64>,
    pub target_paper_draw: f64,
    pub others: Vec<OtherGrader>,
    pub estimation: EstimationConfig,
}

impl PointwiseInstance {
    /// Randomized instance with `probes >= 2` probe papers and `others`
    /// co-graders. Draws are redrawn until the target's standardized
    /// residual spread is comfortably positive, keeping the reliability
    /// estimate away from its cap for every sigma in the usual grids.
    pub fn random(seed: u64, probes: u32, others: u32, prior: &Prior) -> Self {
        let x = probes as usize;
        for attempt in 0..64 {
            let mut rng = RngStream::new(seed, 3_000_000 + attempt);
            let sd = prior.stddev();
            let probe_truth: Vec<f64> =
                (0..x).map(|_| prior.mu + sd * rng.standard_normal()).collect();
            let y = prior.mu + sd * rng.standard_normal();
            let target_bias = 2.0 * rng.standard_normal();
            let target_probe_draws = rng.standard_normals(x);
            let target_paper_draw = rng.standard_normal();
            let others: Vec<OtherGrader> = (0..others)
                .map(|_| OtherGrader {
                    bias: 2.0 * rng.standard_normal(),
                    reliability: (0.25 + 3.75 * rand::Rng::random_range(&mut rng, 0.0..1.0f64)),
                    probe_draws: rng.standard_normals(x),
                    paper_draw: rng.standard_normal(),
                })
                .collect();
            let instance = Self {
                prior: *prior,
                probe_truth,
                y,
                target_bias,
                target_probe_draws,
                target_paper_draw,
                others,
                estimation: EstimationConfig::default(),
            };
            if instance.residual_spread() > 0.05 {
                return instance;
            }
        }
        unreachable!("could not draw a non-degenerate instance in 64 attempts");
    }

    /// Sample standard deviation of the target's standardized probe draws
    /// (the s-hat in the closed form).
    pub fn residual_spread(&self) -> f64 {
        let x = self.target_probe_draws.len();
        let mean = self.target_probe_draws.iter().sum::<f64>() / x as f64;
        let ss: f64 = self
            .target_probe_draws
            .iter()
            .map(|m| (m - mean).powi(2))
            .sum();
        (ss / (x as f64 - 1.0)).sqrt()
    }

    fn paper_id(&self) -> PaperId {
        PaperId(self.probe_truth.len() as u32)
    }

    /// Absolute deviation |r* - y| computed through the real estimation and
    /// aggregation pipeline at a given target noise scale.
    pub fn pipeline_deviation(&self, sigma: f64) -> Result<f64, SimError> {
        let x = self.probe_truth.len();
        let paper = self.paper_id();
        let probe_ids: BTreeSet<PaperId> = (0..x as u32).map(PaperId).collect();

        let mut per_evaluator = BTreeMap::new();
        let mut reports: BTreeMap<EvaluatorId, BTreeMap<PaperId, f64>> = BTreeMap::new();
        let graders = std::iter::once((self.target_bias, sigma, &self.target_probe_draws, self.target_paper_draw))
            .chain(self.others.iter().map(|o| {
                (
                    o.bias,
                    1.0 / o.reliability.sqrt(),
                    &o.probe_draws,
                    o.paper_draw,
                )
            }));
        for (idx, (bias, noise_sd, probe_draws, paper_draw)) in graders.enumerate() {
            let e = EvaluatorId(idx as u32);
            let mut mine = BTreeMap::new();
            for (k, &truth) in self.probe_truth.iter().enumerate() {
                mine.insert(PaperId(k as u32), truth + bias + noise_sd * probe_draws[k]);
            }
            mine.insert(paper, self.y + bias + noise_sd * paper_draw);
            reports.insert(e, mine);
            per_evaluator.insert(
                e,
                EvaluatorBundle {
                    probes: probe_ids.clone(),
                    nonprobes: BTreeSet::from([paper]),
                    bundle_order: probe_ids.iter().copied().chain([paper]).collect(),
                },
            );
        }
        let plan = AssignmentPlan {
            n_papers: x as u32 + 1,
            k: x as u32 + 1,
            probe_ids,
            per_evaluator,
        };

        let probe_truth: BTreeMap<PaperId, f64> = self
            .probe_truth
            .iter()
            .enumerate()
            .map(|(k, &t)| (PaperId(k as u32), t))
            .collect();
        let mut params = BTreeMap::new();
        for (&e, bundle) in &plan.per_evaluator {
            let mine = &reports[&e];
            let on_probes: BTreeMap<PaperId, f64> =
                bundle.probes.iter().map(|&p| (p, mine[&p])).collect();
            params.insert(
                e,
                crate::estimation::estimate_params(&on_probes, &probe_truth, &self.estimation)?,
            );
        }
        let records = score_papers(&plan, &reports, &params, &self.prior, &probe_truth)?;
        let rec = records
            .iter()
            .find(|r| r.paper_id == paper)
            .expect("regular paper scored");
        Ok((rec.aggregated - self.y).abs())
    }

    /// The environment aggregates of the closed form: A and B in
    /// sigma*|A| / (sigma*B + 1).
    pub fn a_b(&self) -> (f64, f64) {
        let x = self.probe_truth.len();
        let s_hat = self.residual_spread();
        let m_bar = self.target_probe_draws.iter().sum::<f64>() / x as f64;

        let root_gamma = self.prior.gamma.sqrt();
        let mut z = root_gamma * (self.prior.mu - self.y);
        let mut xw = root_gamma;
        for o in &self.others {
            let sigma_l = 1.0 / o.reliability.sqrt();
            let errors: Vec<f64> = o.probe_draws.iter().map(|m| o.bias + sigma_l * m).collect();
            let b_hat = errors.iter().sum::<f64>() / x as f64;
            let ss: f64 = errors.iter().map(|e| (e - b_hat).powi(2)).sum();
            let tau_hat = if ss < self.estimation.epsilon_var {
                self.estimation.tau_cap
            } else {
                ((x as f64 - 1.0) / ss).min(self.estimation.tau_cap)
            };
            let debiased = (self.y + o.bias + sigma_l * o.paper_draw) - b_hat;
            let w = tau_hat.sqrt();
            z += w * (debiased - self.y);
            xw += w;
        }
        let a = z * s_hat + (self.target_paper_draw - m_bar);
        let b = s_hat * xw;
        (a, b)
    }

    /// Closed-form deviation sigma*|A| / (sigma*B + 1).
    pub fn closed_form_deviation(&self, sigma: f64) -> f64 {
        let (a, b) = self.a_b();
        sigma * a.abs() / (sigma * b + 1.0)
    }
}

/// Deterministic identity check: across `sigma_grid` (ascending), the
/// pipeline deviation |r* - y| of each instance must match the closed form
/// to 1e-9 and be non-decreasing (strictly increasing when A != 0).
pub fn check_pointwise_monotonicity(
    instances: &[PointwiseInstance],
    sigma_grid: &[f64],
    seed: u64,
) -> Result<PropertyReport, HarnessError> {
    if sigma_grid.is_empty() || instances.is_empty() {
        return Err(HarnessError::EmptyGrid);
    }
    let mut sigmas = sigma_grid.to_vec();
    sigmas.sort_by(f64::total_cmp);

    let mut rows = Vec::new();
    let mut per_sigma: Vec<Vec<f64>> = vec![Vec::new(); sigmas.len()];
    let mut worst_mismatch: f64 = 0.0;
    let mut worst_decrease: f64 = 0.0;

    for (idx, inst) in instances.iter().enumerate() {
        let (a, _) = inst.a_b();
        let mut previous: Option<f64> = None;
        for (si, &sigma) in sigmas.iter().enumerate() {
            let dev = inst.pipeline_deviation(sigma)?;
            let closed = inst.closed_form_deviation(sigma);
            worst_mismatch = worst_mismatch.max((dev - closed).abs());
            if let Some(prev) = previous {
                if a.abs() > 1e-9 {
                    worst_decrease = worst_decrease.max(prev - dev + f64::MIN_POSITIVE);
                } else {
                    worst_decrease = worst_decrease.max(prev - dev);
                }
            }
            previous = Some(dev);
            per_sigma[si].push(dev);
            rows.push(ReplicaRow {
                check: "pointwise".into(),
                grid_point: sigma,
                replica: idx as u64,
                utility: dev,
            });
        }
    }

    let grid = sigmas
        .iter()
        .zip(&per_sigma)
        .map(|(&sigma, devs)| {
            let (mean, ci) = mean_and_ci(devs);
            GridPointReport {
                point: sigma,
                mean,
                ci_halfwidth: ci,
            }
        })
        .collect();

    Ok(PropertyReport {
        check: CheckKind::Pointwise,
        mode: None,
        seed,
        replicas: instances.len() as u64,
        grid,
        verdicts: vec![
            Verdict::judge("pointwise-closed-form", worst_mismatch, DETERMINISTIC_TOLERANCE),
            Verdict::judge("pointwise-monotone", worst_decrease, 0.0),
        ],
        rows,
    })
}

/// All reports from one experiment run plus where they were written.
#[derive(Debug)]
pub struct ExperimentSummary {
    pub reports: Vec<PropertyReport>,
    pub csv_path: std::path::PathBuf,
    pub json_path: std::path::PathBuf,
}

impl ExperimentSummary {
    pub fn passed(&self) -> bool {
        self.reports.iter().all(|r| r.passed())
    }
}

fn write_file(path: &Path, contents: &str) -> Result<(), HarnessError> {
    std::fs::write(path, contents).map_err(|source| HarnessError::Io {
        path: path.display().to_string(),
        source,
    })
}

/// Run the configured checks and return their reports, newest last, in the
/// order `props.checks` lists them.
pub fn run_checks(
    exam: &ExamConfig,
    props: &PropertiesSection,
    seed: u64,
) -> Result<Vec<PropertyReport>, HarnessError> {
    let needs_env = props
        .checks
        .iter()
        .any(|c| matches!(c, CheckKind::Epbi | CheckKind::Eprm));
    let env = if needs_env {
        Some(build_environment(
            exam.shape,
            exam.prior,
            &StrategyPrior::default(),
            EvaluatorId(props.target),
            seed,
        )?)
    } else {
        None
    };

    let mut reports = Vec::new();
    for check in &props.checks {
        match check {
            CheckKind::Epbi => {
                let sweep = StrategySweep {
                    target: EvaluatorId(props.target),
                    grid: props
                        .bias_grid
                        .iter()
                        .map(|&b| (b, props.epbi_reliability))
                        .collect(),
                    replicas: props.replicas,
                    common_random_numbers: true,
                    mode: props.mode,
                    welfare_mode: WelfareMode::RegradeAware,
                    alpha: props.alpha,
                };
                reports.push(check_epbi(env.as_ref().unwrap(), &sweep)?);
            }
            CheckKind::Eprm => {
                let sweep = StrategySweep {
                    target: EvaluatorId(props.target),
                    grid: props
                        .reliability_grid
                        .iter()
                        .map(|&t| (props.eprm_bias, t))
                        .collect(),
                    replicas: props.replicas,
                    common_random_numbers: true,
                    mode: props.mode,
                    welfare_mode: WelfareMode::RegradeAware,
                    alpha: props.alpha,
                };
                reports.push(check_eprm(env.as_ref().unwrap(), &sweep)?);
            }
            CheckKind::Pointwise => {
                let instances: Vec<PointwiseInstance> = (0..props.pointwise_instances)
                    .map(|i| {
                        PointwiseInstance::random(
                            seed.wrapping_add(i),
                            props.pointwise_probes,
                            props.pointwise_others,
                            &exam.prior,
                        )
                    })
                    .collect();
                reports.push(check_pointwise_monotonicity(
                    &instances,
                    &props.sigma_grid,
                    seed,
                )?);
            }
        }
    }
    Ok(reports)
}

/// All per-replica rows of an experiment as one CSV document.
pub fn experiment_csv(reports: &[PropertyReport]) -> String {
    let mut all_rows = Vec::new();
    for r in reports {
        all_rows.extend(r.rows.iter().cloned());
    }
    rows_to_csv(&all_rows)
}

/// The verdict summary document written as `verdicts.json`.
pub fn experiment_verdicts_json(reports: &[PropertyReport]) -> String {
    let json = serde_json::json!({
        "passed": reports.iter().all(|r| r.passed()),
        "reports": reports,
    });
    format!("{:#}\n", json)
}

/// Run the configured checks and write `samples.csv` (per-replica rows)
/// and `verdicts.json` (verdict summaries) into `out_dir`.
pub fn run_experiment(
    exam: &ExamConfig,
    props: &PropertiesSection,
    seed: u64,
    out_dir: &Path,
) -> Result<ExperimentSummary, HarnessError> {
    std::fs::create_dir_all(out_dir).map_err(|source| HarnessError::Io {
        path: out_dir.display().to_string(),
        source,
    })?;
    let reports = run_checks(exam, props, seed)?;

    let csv_path = out_dir.join("samples.csv");
    write_file(&csv_path, &experiment_csv(&reports))?;

    let json_path = out_dir.join("verdicts.json");
    write_file(&json_path, &experiment_verdicts_json(&reports))?;

    Ok(ExperimentSummary {
        reports,
        csv_path,
        json_path,
    })
}
