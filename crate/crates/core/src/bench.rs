//! Experiment orchestration with seeded, order-independent repetitions.
//!
//! Seeds: repetition `r` draws its data from `derive_seed(seed, [DATA, r])` and
//! its perturbations from `derive_seed(seed, [PERTURB, r])`. Every mechanism
//! and budget in a repetition replays the same perturbation stream, so the
//! comparison between mechanisms uses common random numbers and reordering
//! the mechanism list changes nothing.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::io::Write;
use std::time::{Duration, Instant};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::data::{synth_classification, synth_gaussian, synth_regression, DataError, Dataset};
use crate::discretize::bits_per_sample;
use crate::error::LdpError;
use crate::fedsgd::{
    self, examples_from, GroupSchedule, LossKind, ModelState, Privatizer, TraceRow,
};
use crate::mechanisms::{MechanismKind, RandomStream};
use crate::multidim::{MeanAccumulator, TuplePerturber};
use crate::params::{worst_case_variance, PrivacyBudget};

const DATA: u64 = 1;
const PERTURB: u64 = 2;
const ROUNDING: u64 = 3;
const SPLIT: u64 = 4;
const TRAIN: u64 = 5;

#[derive(Debug, Error)]
pub enum BenchError {
    #[error(transparent)]
    Ldp(#[from] LdpError),
    #[error(transparent)]
    Data(#[from] DataError),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("cannot write report: {0}")]
    Io(#[from] std::io::Error),
    #[error("cannot write report: {0}")]
    Csv(#[from] csv::Error),
    #[error("cannot write report: {0}")]
    Json(#[from] serde_json::Error),
}

pub type BenchResult<T> = std::result::Result<T, BenchError>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Task {
    VarianceTable,
    MeanEstimation,
    DiscretizeSweep,
    Erm,
}

/// Federated training settings for [`Task::Erm`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ErmSettings {
    pub loss: LossKind,
    pub eta: f64,
    pub lambda: f64,
    pub group_size: usize,
    pub max_iterations: usize,
    pub convergence_tol: f64,
    pub train_fraction: f64,
    /// Label noise of the synthetic regression task used when no dataset is given.
    pub synth_noise: f64,
    /// Keep per-iteration traces on the test split (costly for long runs).
    pub record_trace: bool,
}

impl Default for ErmSettings {
    fn default() -> Self {
        Self {
            loss: LossKind::SquaredError,
            eta: 0.1,
            lambda: 1e-4,
            group_size: 100,
            max_iterations: 100_000,
            convergence_tol: 0.0,
            train_fraction: 0.8,
            synth_noise: 0.1,
            record_trace: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub task: Task,
    pub mechanisms: Vec<MechanismKind>,
    pub epsilons: Vec<f64>,
    pub n_users: usize,
    pub d: usize,
    pub repetitions: usize,
    pub seed: u64,
    pub grid_m: Option<u32>,
    /// Resolutions compared by the discretization sweep; empty means `[grid_m]`.
    pub grid_sweep: Vec<u32>,
    /// Mean and spread of the truncated Gaussian attributes.
    pub data_mean: f64,
    pub data_sigma: f64,
    /// Every user holds this value in every coordinate instead of Gaussian data.
    pub fixed_input: Option<f64>,
    pub erm: ErmSettings,
}

impl ExperimentConfig {
    pub fn new(task: Task) -> Self {
        Self {
            task,
            mechanisms: MechanismKind::ALL.to_vec(),
            epsilons: vec![0.5, 1.0, 2.0, 4.0],
            n_users: 100_000,
            d: 16,
            repetitions: 100,
            seed: 0,
            grid_m: None,
            grid_sweep: Vec::new(),
            data_mean: 1.0 / 3.0,
            data_sigma: 0.25,
            fixed_input: None,
            erm: ErmSettings::default(),
        }
    }

    pub fn validate(&self) -> BenchResult<()> {
        let fail = |m: &str| Err(BenchError::Config(m.into()));
        if self.mechanisms.is_empty() {
            return fail("no mechanisms listed");
        }
        if self.epsilons.is_empty() {
            return fail("no privacy budgets listed");
        }
        for &e in &self.epsilons {
            PrivacyBudget::new(e)?;
        }
        if self.repetitions == 0 {
            return fail("repetitions must be at least 1");
        }
        if self.task != Task::VarianceTable && (self.n_users == 0 || self.d == 0) {
            return fail("n-users and dims must be positive");
        }
        if let Some(x) = self.fixed_input {
            crate::error::check_unit(x)?;
        }
        if self.task == Task::DiscretizeSweep && self.sweep().is_empty() {
            return fail("the discretization sweep needs --grid-m");
        }
        if self.grid_m == Some(0) || self.grid_sweep.contains(&0) {
            return fail("grid resolution must be positive");
        }
        Ok(())
    }

    fn sweep(&self) -> Vec<u32> {
        if self.grid_sweep.is_empty() {
            self.grid_m.into_iter().collect()
        } else {
            self.grid_sweep.clone()
        }
    }

    fn require(&self, task: Task) -> BenchResult<()> {
        if self.task != task {
            return Err(BenchError::Config(format!(
                "expected task {task:?}, found {:?}",
                self.task
            )));
        }
        self.validate()
    }
}

/// One (mechanism, ε, repetition) outcome; `mechanism` is `non-private` for the control arm.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Record {
    pub mechanism: String,
    pub epsilon: Option<f64>,
    pub repetition: usize,
    pub grid_m: Option<u32>,
    pub bits_per_sample: Option<u32>,
    pub mse: Option<f64>,
    /// MSE of the same draws before rounding, for the discretization sweep.
    pub continuous_mse: Option<f64>,
    pub worst_var: Option<f64>,
    pub loss: Option<f64>,
    pub misclassification: Option<f64>,
    /// Excluded from report files, which must be identical across runs.
    #[serde(skip)]
    pub wall_time: Duration,
}

impl Record {
    fn new(mechanism: impl Into<String>, epsilon: Option<f64>, repetition: usize) -> Self {
        Self {
            mechanism: mechanism.into(),
            epsilon,
            repetition,
            grid_m: None,
            bits_per_sample: None,
            mse: None,
            continuous_mse: None,
            worst_var: None,
            loss: None,
            misclassification: None,
            wall_time: Duration::ZERO,
        }
    }

    /// MSE when present, otherwise the misclassification rate, otherwise the worst-case variance.
    pub fn metric(&self) -> Option<f64> {
        self.mse.or(self.misclassification).or(self.worst_var)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub config: ExperimentConfig,
    pub records: Vec<Record>,
    /// Training traces, when [`ErmSettings::record_trace`] is set.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub traces: Vec<RunTrace>,
}

/// Per-iteration trace of one training run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunTrace {
    pub mechanism: String,
    pub epsilon: Option<f64>,
    pub repetition: usize,
    pub seed: u64,
    pub rows: Vec<TraceRow>,
}

const CSV_COLUMNS: [&str; 10] = [
    "mechanism",
    "epsilon",
    "repetition",
    "grid_m",
    "bits_per_sample",
    "mse",
    "continuous_mse",
    "worst_var",
    "loss",
    "misclassification",
];

fn opt<T: ToString>(v: Option<T>) -> String {
    v.map(|v| v.to_string()).unwrap_or_default()
}

/// Aggregate of one (mechanism, ε, grid) cell across repetitions.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SummaryRow {
    pub mechanism: String,
    pub epsilon: Option<f64>,
    pub grid_m: Option<u32>,
    pub repetitions: usize,
    pub mean: f64,
    pub std_error: f64,
}

impl ExperimentReport {
    /// Long-format CSV, one row per record:
    /// `mechanism,epsilon,repetition,grid_m,bits_per_sample,mse,continuous_mse,worst_var,loss,misclassification`.
    pub fn write_csv<W: Write>(&self, out: W) -> BenchResult<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(CSV_COLUMNS)?;
        for r in &self.records {
            w.write_record([
                r.mechanism.clone(),
                opt(r.epsilon),
                r.repetition.to_string(),
                opt(r.grid_m),
                opt(r.bits_per_sample),
                opt(r.mse),
                opt(r.continuous_mse),
                opt(r.worst_var),
                opt(r.loss),
                opt(r.misclassification),
            ])?;
        }
        w.flush()?;
        Ok(())
    }

    /// Wide CSV: an `epsilon` column, then one column per mechanism holding the
    /// repetition-mean of [`Record::metric`].
    pub fn write_wide_csv<W: Write>(&self, out: W) -> BenchResult<()> {
        let mut w = csv::Writer::from_writer(out);
        let mut names: Vec<String> = Vec::new();
        for r in &self.records {
            if !names.contains(&r.mechanism) {
                names.push(r.mechanism.clone());
            }
        }
        let mut header = vec!["epsilon".to_string()];
        header.extend(names.iter().cloned());
        w.write_record(&header)?;
        let summary = self.summary();
        for &eps in &self.config.epsilons {
            let mut row = vec![eps.to_string()];
            for name in &names {
                let cell = summary
                    .iter()
                    .find(|s| &s.mechanism == name && s.epsilon == Some(eps));
                row.push(opt(cell.map(|s| s.mean)));
            }
            w.write_record(&row)?;
        }
        w.flush()?;
        Ok(())
    }

    /// All [`RunTrace`]s as one CSV with the [`fedsgd::TRACE_COLUMNS`] header.
    pub fn write_traces_csv<W: Write>(&self, out: W) -> BenchResult<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(fedsgd::TRACE_COLUMNS)?;
        for t in &self.traces {
            fedsgd::write_trace_rows(&mut w, &t.rows, &t.mechanism, t.epsilon, t.seed)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn write_json<W: Write>(&self, out: W) -> BenchResult<()> {
        serde_json::to_writer_pretty(out, self)?;
        Ok(())
    }

    /// Mean and standard error of [`Record::metric`] per (mechanism, ε, grid), in first-seen order.
    pub fn summary(&self) -> Vec<SummaryRow> {
        let mut order = Vec::new();
        let mut cells: BTreeMap<usize, Vec<f64>> = BTreeMap::new();
        for r in &self.records {
            let key = (r.mechanism.clone(), r.epsilon.map(f64::to_bits), r.grid_m);
            let idx = match order.iter().position(|k| *k == key) {
                Some(i) => i,
                None => {
                    order.push(key);
                    order.len() - 1
                }
            };
            if let Some(v) = r.metric() {
                cells.entry(idx).or_default().push(v);
            }
        }
        order
            .into_iter()
            .enumerate()
            .map(|(i, (mechanism, eps, grid_m))| {
                let vals = cells.remove(&i).unwrap_or_default();
                let n = vals.len();
                let mean = vals.iter().sum::<f64>() / n.max(1) as f64;
                let var = if n > 1 {
                    vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64
                } else {
                    0.0
                };
                SummaryRow {
                    mechanism,
                    epsilon: eps.map(f64::from_bits),
                    grid_m,
                    repetitions: n,
                    mean,
                    std_error: (var / n.max(1) as f64).sqrt(),
                }
            })
            .collect()
    }

    /// Human-readable summary table.
    pub fn summary_table(&self) -> String {
        let mut s = format!(
            "{:<14} {:>8} {:>7} {:>5} {:>14} {:>12}\n",
            "mechanism", "epsilon", "grid_m", "reps", "mean", "std_err"
        );
        for row in self.summary() {
            let _ = writeln!(
                s,
                "{:<14} {:>8} {:>7} {:>5} {:>14.6e} {:>12.3e}",
                row.mechanism,
                opt(row.epsilon),
                opt(row.grid_m),
                row.repetitions,
                row.mean,
                row.std_error
            );
        }
        s
    }

    /// Records matching a mechanism name, budget and grid, in repetition order.
    pub fn select(
        &self,
        mechanism: &str,
        epsilon: Option<f64>,
        grid_m: Option<u32>,
    ) -> Vec<&Record> {
        self.records
            .iter()
            .filter(|r| r.mechanism == mechanism && r.epsilon == epsilon && r.grid_m == grid_m)
            .collect()
    }

    /// [`Record::metric`] values of [`Self::select`].
    pub fn metrics(&self, mechanism: &str, epsilon: Option<f64>, grid_m: Option<u32>) -> Vec<f64> {
        self.select(mechanism, epsilon, grid_m)
            .iter()
            .filter_map(|r| r.metric())
            .collect()
    }

    pub fn total_wall_time(&self) -> Duration {
        self.records.iter().map(|r| r.wall_time).sum()
    }
}

/// Outcome of a paired one-sided sign test that the first sample tends to be smaller.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SignTest {
    pub wins: usize,
    pub losses: usize,
    pub ties: usize,
    /// `P[Bin(wins + losses, 1/2) ≥ wins]`.
    pub p_value: f64,
}

pub fn sign_test(first: &[f64], second: &[f64]) -> SignTest {
    let (mut wins, mut losses, mut ties) = (0, 0, 0);
    for (a, b) in first.iter().zip(second) {
        match a.partial_cmp(b) {
            Some(std::cmp::Ordering::Less) => wins += 1,
            Some(std::cmp::Ordering::Greater) => losses += 1,
            _ => ties += 1,
        }
    }
    SignTest {
        wins,
        losses,
        ties,
        p_value: binomial_upper_tail(wins + losses, wins),
    }
}

/// `P[Bin(n, 1/2) ≥ k]`.
pub fn binomial_upper_tail(n: usize, k: usize) -> f64 {
    if k == 0 {
        return 1.0;
    }
    if k > n {
        return 0.0;
    }
    // Sum C(n, i)/2^n in log space to avoid overflow at large n.
    let ln_half_n = -(n as f64) * std::f64::consts::LN_2;
    let mut ln_c = 0.0f64;
    let mut total = 0.0;
    for i in 0..=n {
        if i > 0 {
            ln_c += ((n - i + 1) as f64).ln() - (i as f64).ln();
        }
        if i >= k {
            total += (ln_c + ln_half_n).exp();
        }
    }
    total.min(1.0)
}

fn budget(eps: f64) -> BenchResult<PrivacyBudget> {
    Ok(PrivacyBudget::new(eps)?)
}

/// Worst-case variance for every (mechanism, ε); no sampling.
pub fn run_variance_table(config: &ExperimentConfig) -> BenchResult<ExperimentReport> {
    config.require(Task::VarianceTable)?;
    let mut records = Vec::new();
    for &kind in &config.mechanisms {
        for &eps in &config.epsilons {
            let start = Instant::now();
            let mut r = Record::new(kind.name(), Some(eps), 0);
            r.worst_var = Some(worst_case_variance(kind, budget(eps)?)?);
            r.wall_time = start.elapsed();
            records.push(r);
        }
    }
    Ok(ExperimentReport {
        config: config.clone(),
        records,
        traces: Vec::new(),
    })
}

fn repetition_data(config: &ExperimentConfig, rep: usize) -> BenchResult<Dataset> {
    let mut stream = RandomStream::derived(config.seed, &[DATA, rep as u64]);
    Ok(match config.fixed_input {
        Some(x) => Dataset {
            rows: vec![vec![x; config.d]; config.n_users],
            labels: None,
            columns: (0..config.d)
                .map(|j| crate::data::ColumnMeta::numeric(format!("x{j}"), -1.0, 1.0))
                .collect(),
            label_meta: None,
        },
        None => synth_gaussian(
            config.n_users,
            config.d,
            config.data_mean,
            config.data_sigma,
            &mut stream,
        )?,
    })
}

fn squared_error(estimate: &[f64], truth: &[f64]) -> f64 {
    estimate
        .iter()
        .zip(truth)
        .map(|(e, t)| (e - t) * (e - t))
        .sum::<f64>()
        / truth.len() as f64
}

/// Estimated coordinate means from one perturbation pass over `rows`.
fn estimate(
    perturber: &TuplePerturber,
    rows: &[Vec<f64>],
    stream: &mut RandomStream,
    mut rounding: Option<&mut RandomStream>,
) -> BenchResult<Vec<f64>> {
    let d = perturber.plan().d;
    let mut acc = MeanAccumulator::new(d);
    let mut out = vec![0.0; d];
    let mut scratch = Vec::with_capacity(d);
    for row in rows {
        match rounding.as_deref_mut() {
            Some(r) => perturber.perturb_into_split(row, &mut out, &mut scratch, stream, r)?,
            None => perturber.perturb_into(row, &mut out, &mut scratch, stream)?,
        }
        acc.push(&out)?;
    }
    Ok(acc.means()?)
}

fn per_repetition<F>(config: &ExperimentConfig, run: F) -> BenchResult<Vec<Record>>
where
    F: Fn(usize) -> BenchResult<Vec<Record>> + Sync + Send,
{
    let chunks: Vec<BenchResult<Vec<Record>>> =
        (0..config.repetitions).into_par_iter().map(run).collect();
    let mut records = Vec::new();
    for c in chunks {
        records.extend(c?);
    }
    Ok(records)
}

/// Mean-estimation MSE against the data's own column means, per (mechanism, ε, repetition).
pub fn run_mean_estimation(config: &ExperimentConfig) -> BenchResult<ExperimentReport> {
    config.require(Task::MeanEstimation)?;
    let records = per_repetition(config, |rep| {
        let data = repetition_data(config, rep)?;
        let truth = data.column_means()?;
        let mut out = Vec::new();
        for &kind in &config.mechanisms {
            for &eps in &config.epsilons {
                let start = Instant::now();
                let perturber = TuplePerturber::new(kind, config.d, budget(eps)?, config.grid_m)?;
                let mut stream = RandomStream::derived(config.seed, &[PERTURB, rep as u64]);
                let est = estimate(&perturber, &data.rows, &mut stream, None)?;
                let mut r = Record::new(kind.name(), Some(eps), rep);
                r.grid_m = config.grid_m;
                r.bits_per_sample = config.grid_m.map(bits_per_sample);
                r.mse = Some(squared_error(&est, &truth));
                r.worst_var = Some(worst_case_variance(kind, budget(eps)?)?);
                r.wall_time = start.elapsed();
                out.push(r);
            }
        }
        Ok(out)
    })?;
    Ok(ExperimentReport {
        config: config.clone(),
        records,
        traces: Vec::new(),
    })
}

/// Mean-estimation MSE with rounding at each grid resolution, alongside the MSE of
/// the same pre-rounding draws. Mechanisms without a bounded continuous output are rejected.
pub fn run_discretize_sweep(config: &ExperimentConfig) -> BenchResult<ExperimentReport> {
    config.require(Task::DiscretizeSweep)?;
    for &k in &config.mechanisms {
        crate::mechanisms::require_discretizable(k)?;
    }
    let sweep = config.sweep();
    let records = per_repetition(config, |rep| {
        let data = repetition_data(config, rep)?;
        let truth = data.column_means()?;
        let mut out = Vec::new();
        for &kind in &config.mechanisms {
            for &eps in &config.epsilons {
                let continuous = TuplePerturber::new(kind, config.d, budget(eps)?, None)?;
                let mut stream = RandomStream::derived(config.seed, &[PERTURB, rep as u64]);
                let base = squared_error(
                    &estimate(&continuous, &data.rows, &mut stream, None)?,
                    &truth,
                );
                for &m in &sweep {
                    let start = Instant::now();
                    let rounded = TuplePerturber::new(kind, config.d, budget(eps)?, Some(m))?;
                    let mut stream = RandomStream::derived(config.seed, &[PERTURB, rep as u64]);
                    let mut rounding =
                        RandomStream::derived(config.seed, &[ROUNDING, rep as u64, m as u64]);
                    let est = estimate(&rounded, &data.rows, &mut stream, Some(&mut rounding))?;
                    let mut r = Record::new(kind.name(), Some(eps), rep);
                    r.grid_m = Some(m);
                    r.bits_per_sample = Some(bits_per_sample(m));
                    r.mse = Some(squared_error(&est, &truth));
                    r.continuous_mse = Some(base);
                    r.worst_var = Some(worst_case_variance(kind, budget(eps)?)?);
                    r.wall_time = start.elapsed();
                    out.push(r);
                }
            }
        }
        Ok(out)
    })?;
    Ok(ExperimentReport {
        config: config.clone(),
        records,
        traces: Vec::new(),
    })
}

/// Synthetic task for [`run_erm`] when no dataset is given: regression for squared
/// loss, a separable binary task otherwise.
pub fn synthetic_erm_data(config: &ExperimentConfig) -> BenchResult<Dataset> {
    let mut stream = RandomStream::derived(config.seed, &[DATA]);
    let weight_seed = RandomStream::derive_seed(config.seed, &[DATA, DATA]);
    Ok(if config.erm.loss.is_classification() {
        synth_classification(config.n_users, config.d, weight_seed, 0.05, &mut stream)?.0
    } else {
        synth_regression(
            config.n_users,
            config.d,
            weight_seed,
            config.erm.synth_noise,
            &mut stream,
        )?
        .0
    })
}

/// Federated training per (mechanism, ε, repetition) plus a non-private control per repetition,
/// scored on a fixed held-out split.
///
/// With `data` absent, [`synthetic_erm_data`] supplies the task.
pub fn run_erm(config: &ExperimentConfig, data: Option<&Dataset>) -> BenchResult<ExperimentReport> {
    config.require(Task::Erm)?;
    let owned;
    let data = match data {
        Some(d) => d,
        None => {
            owned = synthetic_erm_data(config)?;
            &owned
        }
    };
    let settings = config.erm;
    if let Some(labels) = &data.labels {
        if settings.loss.is_classification() && labels.iter().any(|&y| y != 1.0 && y != -1.0) {
            return Err(BenchError::Config(
                "classification losses need ±1 labels".into(),
            ));
        }
    }
    let (train, test) = data.split(
        settings.train_fraction,
        &mut RandomStream::derived(config.seed, &[SPLIT]),
    )?;
    let train = examples_from(&train)?;
    let test = examples_from(&test)?;
    if train.is_empty() || test.is_empty() {
        return Err(BenchError::Config(
            "train/test split leaves an empty side".into(),
        ));
    }
    let schedule = GroupSchedule {
        group_size: settings.group_size,
        max_iterations: settings.max_iterations,
        convergence_tol: settings.convergence_tol,
    };
    let state0 = ModelState::zeros(data.dim(), settings.eta, settings.loss, settings.lambda)?;

    let mut arms: Vec<(Privatizer, Option<f64>, Option<f64>)> =
        vec![(Privatizer::NonPrivate, None, None)];
    for &kind in &config.mechanisms {
        for &eps in &config.epsilons {
            let b = budget(eps)?;
            let worst = worst_case_variance(kind, b)?;
            arms.push((
                Privatizer::Ldp {
                    kind,
                    budget: b,
                    grid_m: config.grid_m,
                },
                Some(eps),
                Some(worst),
            ));
        }
    }

    let probe: &[fedsgd::ClientExample] = if settings.record_trace { &test } else { &[] };
    let seed_of = |rep: usize| RandomStream::derive_seed(config.seed, &[TRAIN, rep as u64]);
    let runs: Vec<BenchResult<Vec<(Record, RunTrace)>>> = (0..config.repetitions)
        .into_par_iter()
        .map(|rep| {
            let mut out = Vec::new();
            for (privatizer, eps, worst) in &arms {
                let start = Instant::now();
                let mut stream = RandomStream::new(seed_of(rep));
                let outcome = fedsgd::train(
                    &train,
                    privatizer,
                    &schedule,
                    state0.clone(),
                    probe,
                    &mut stream,
                )?;
                let m = fedsgd::evaluate(&outcome.state, &test)?;
                let mut r = Record::new(privatizer.label(), *eps, rep);
                r.grid_m = if matches!(privatizer, Privatizer::NonPrivate) {
                    None
                } else {
                    config.grid_m
                };
                r.mse = m.mse;
                r.misclassification = m.misclassification;
                r.loss = Some(m.loss);
                r.worst_var = *worst;
                r.wall_time = start.elapsed();
                let trace = RunTrace {
                    mechanism: r.mechanism.clone(),
                    epsilon: *eps,
                    repetition: rep,
                    seed: seed_of(rep),
                    rows: outcome.trace,
                };
                out.push((r, trace));
            }
            Ok(out)
        })
        .collect();
    let mut records = Vec::new();
    let mut traces = Vec::new();
    for run in runs {
        for (r, t) in run? {
            records.push(r);
            if settings.record_trace {
                traces.push(t);
            }
        }
    }
    Ok(ExperimentReport {
        config: config.clone(),
        records,
        traces,
    })
}

/// Runs the configured task; `data` is only used by [`Task::Erm`].
pub fn run(config: &ExperimentConfig, data: Option<&Dataset>) -> BenchResult<ExperimentReport> {
    match config.task {
        Task::VarianceTable => run_variance_table(config),
        Task::MeanEstimation => run_mean_estimation(config),
        Task::DiscretizeSweep => run_discretize_sweep(config),
        Task::Erm => run_erm(config, data),
    }
}
