//! Federated SGD where every client uploads one locally perturbed gradient.
//!
//! Clients are shuffled once and consumed in groups; each group yields one
//! server step `θ ← θ − η·mean(uploads)`. Gradients are clipped to `[−1, 1]`
//! per coordinate before perturbation, which biases large gradients.

use std::io::Write;
use std::str::FromStr;

use rand::RngCore;
use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{check_unit, LdpError, Result};
use crate::mechanisms::{MechanismKind, RandomStream};
use crate::multidim::{TuplePerturber, TupleSample};
use crate::params::PrivacyBudget;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LossKind {
    /// `½(θᵀx̃ − y)²`.
    SquaredError,
    /// `ln(1 + e^{−yθᵀx̃})`.
    Logistic,
    /// `max(0, 1 − yθᵀx̃)`.
    Hinge,
}

impl LossKind {
    pub fn is_classification(self) -> bool {
        !matches!(self, Self::SquaredError)
    }

    pub fn name(self) -> &'static str {
        match self {
            Self::SquaredError => "squared",
            Self::Logistic => "logistic",
            Self::Hinge => "hinge",
        }
    }
}

impl FromStr for LossKind {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s.trim().to_ascii_lowercase().as_str() {
            "squared" | "squared-error" | "linear" => Ok(Self::SquaredError),
            "logistic" => Ok(Self::Logistic),
            "hinge" | "svm" => Ok(Self::Hinge),
            other => Err(format!("unknown loss '{other}' (squared, logistic, hinge)")),
        }
    }
}

/// Model parameters and optimizer settings. The last coordinate of `theta` is the bias.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelState {
    pub theta: Vec<f64>,
    pub eta: f64,
    pub loss: LossKind,
    pub lambda: f64,
}

impl ModelState {
    /// All-zero parameters for `features` inputs plus a bias.
    pub fn zeros(features: usize, eta: f64, loss: LossKind, lambda: f64) -> Result<Self> {
        if !(eta.is_finite() && eta > 0.0) {
            return Err(LdpError::InvalidParameter(format!("learning rate {eta}")));
        }
        if !(lambda.is_finite() && lambda >= 0.0) {
            return Err(LdpError::InvalidParameter(format!(
                "regularization {lambda}"
            )));
        }
        Ok(Self {
            theta: vec![0.0; features + 1],
            eta,
            loss,
            lambda,
        })
    }

    /// `θᵀx̃` with `x̃ = (features, 1)`.
    pub fn score(&self, features: &[f64]) -> Result<f64> {
        let p = self.theta.len();
        if features.len() + 1 != p {
            return Err(LdpError::DimensionMismatch {
                expected: p - 1,
                found: features.len(),
            });
        }
        Ok(self.theta[..p - 1]
            .iter()
            .zip(features)
            .map(|(w, x)| w * x)
            .sum::<f64>()
            + self.theta[p - 1])
    }

    fn penalty(&self) -> f64 {
        0.5 * self.lambda * self.theta.iter().map(|w| w * w).sum::<f64>()
    }
}

/// One client's example. Features lie in `[−1, 1]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClientExample {
    pub features: Vec<f64>,
    pub label: f64,
}

impl ClientExample {
    pub fn new(features: Vec<f64>, label: f64) -> Result<Self> {
        for &v in &features {
            check_unit(v)?;
        }
        if !label.is_finite() {
            return Err(LdpError::InvalidParameter(format!("label {label}")));
        }
        Ok(Self { features, label })
    }
}

/// One example per labelled row.
pub fn examples_from(data: &Dataset) -> Result<Vec<ClientExample>> {
    let labels = data
        .labels
        .as_ref()
        .ok_or(LdpError::Empty("dataset labels"))?;
    data.rows
        .iter()
        .zip(labels)
        .map(|(r, &y)| ClientExample::new(r.clone(), y))
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GroupSchedule {
    pub group_size: usize,
    pub max_iterations: usize,
    /// Stop once `‖θ_t − θ_{t−1}‖∞` falls below this; 0 disables the check.
    pub convergence_tol: f64,
}

/// What a client uploads.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Privatizer {
    /// The exact gradient, unclipped.
    NonPrivate,
    /// The clipped gradient perturbed as a tuple under budget ε.
    Ldp {
        kind: MechanismKind,
        budget: PrivacyBudget,
        grid_m: Option<u32>,
    },
}

impl Privatizer {
    pub fn label(&self) -> String {
        match self {
            Self::NonPrivate => "non-private".into(),
            Self::Ldp { kind, .. } => kind.name().into(),
        }
    }
}

/// `∇_θ [loss(θ; ex) + (λ/2)‖θ‖²]`.
pub fn gradient(state: &ModelState, ex: &ClientExample) -> Result<Vec<f64>> {
    let s = state.score(&ex.features)?;
    let y = ex.label;
    let factor = match state.loss {
        LossKind::SquaredError => s - y,
        LossKind::Logistic => -y / (1.0 + (y * s).exp()),
        LossKind::Hinge => {
            if y * s < 1.0 {
                -y
            } else {
                0.0
            }
        }
    };
    let p = state.theta.len();
    Ok((0..p)
        .map(|j| {
            let x = if j + 1 == p { 1.0 } else { ex.features[j] };
            factor * x + state.lambda * state.theta[j]
        })
        .collect())
}

/// Per-example objective matching [`gradient`].
pub fn loss_value(state: &ModelState, ex: &ClientExample) -> Result<f64> {
    let s = state.score(&ex.features)?;
    let y = ex.label;
    let data = match state.loss {
        LossKind::SquaredError => 0.5 * (s - y) * (s - y),
        // ln(1 + e^{-m}) computed without overflow for large |m|.
        LossKind::Logistic => {
            let m = y * s;
            if m > 0.0 {
                (-m).exp().ln_1p()
            } else {
                -m + m.exp().ln_1p()
            }
        }
        LossKind::Hinge => (1.0 - y * s).max(0.0),
    };
    Ok(data + state.penalty())
}

/// Coordinate-wise clip to `[−1, 1]`.
pub fn clamp_gradient(g: &[f64]) -> Result<TupleSample> {
    TupleSample::new(g.iter().map(|v| v.clamp(-1.0, 1.0)).collect())
}

/// Client-side upload logic with the tuple mechanism solved once.
#[derive(Debug, Clone)]
pub struct Uploader {
    perturber: Option<TuplePerturber>,
}

impl Uploader {
    pub fn new(privatizer: &Privatizer, params: usize) -> Result<Self> {
        let perturber = match *privatizer {
            Privatizer::NonPrivate => None,
            Privatizer::Ldp {
                kind,
                budget,
                grid_m,
            } => Some(TuplePerturber::new(kind, params, budget, grid_m)?),
        };
        Ok(Self { perturber })
    }

    /// The vector this client sends for the current model.
    pub fn upload(
        &self,
        state: &ModelState,
        ex: &ClientExample,
        stream: &mut RandomStream,
    ) -> Result<Vec<f64>> {
        let g = gradient(state, ex)?;
        match &self.perturber {
            None => Ok(g),
            Some(p) => p.perturb(&clamp_gradient(&g)?, stream),
        }
    }
}

/// Stream for member `member` of group `iteration` in a run seeded with `run_seed`.
pub fn client_stream(run_seed: u64, iteration: usize, member: usize) -> RandomStream {
    RandomStream::derived(run_seed, &[iteration as u64, member as u64])
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TraceRow {
    pub iteration: usize,
    /// Mean objective on the probe set.
    pub loss: f64,
    /// MSE for regression, misclassification rate for classification, on the probe set.
    pub metric: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum StopReason {
    Converged,
    ClientsExhausted,
    MaxIterations,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TrainOutcome {
    pub state: ModelState,
    pub trace: Vec<TraceRow>,
    pub stop: StopReason,
    /// Seed from which every client stream of the run was derived.
    pub run_seed: u64,
}

/// Runs grouped federated SGD over `clients`.
///
/// Clients are shuffled with `stream`; member `j` of group `t` perturbs with
/// [`client_stream`]`(run_seed, t, j)`, where `run_seed` is the next draw of
/// `stream`. The trace is evaluated on `probe` after every step and left empty
/// when `probe` is empty.
pub fn train(
    clients: &[ClientExample],
    privatizer: &Privatizer,
    schedule: &GroupSchedule,
    state0: ModelState,
    probe: &[ClientExample],
    stream: &mut RandomStream,
) -> Result<TrainOutcome> {
    if clients.is_empty() {
        return Err(LdpError::Empty("client collection"));
    }
    if schedule.group_size == 0 || schedule.max_iterations == 0 {
        return Err(LdpError::InvalidParameter(
            "group size and iteration cap must be positive".into(),
        ));
    }
    let uploader = Uploader::new(privatizer, state0.theta.len())?;
    let run_seed = stream.next_u64();
    let mut order: Vec<usize> = (0..clients.len()).collect();
    for i in (1..order.len()).rev() {
        order.swap(i, stream.below(i + 1));
    }

    let mut state = state0;
    let mut trace = Vec::new();
    let mut stop = StopReason::ClientsExhausted;
    let mut sum = vec![0.0; state.theta.len()];
    for (t, group) in order.chunks(schedule.group_size).enumerate() {
        if t == schedule.max_iterations {
            stop = StopReason::MaxIterations;
            break;
        }
        sum.fill(0.0);
        for (j, &c) in group.iter().enumerate() {
            let up = uploader.upload(&state, &clients[c], &mut client_stream(run_seed, t, j))?;
            for (s, u) in sum.iter_mut().zip(&up) {
                *s += u;
            }
        }
        let step = state.eta / group.len() as f64;
        let mut moved = 0.0f64;
        for (w, s) in state.theta.iter_mut().zip(&sum) {
            let delta = step * s;
            *w -= delta;
            moved = moved.max(delta.abs());
        }
        if !probe.is_empty() {
            let m = evaluate(&state, probe)?;
            trace.push(TraceRow {
                iteration: t + 1,
                loss: m.loss,
                metric: m.primary(),
            });
        }
        if moved < schedule.convergence_tol {
            stop = StopReason::Converged;
            break;
        }
    }
    Ok(TrainOutcome {
        state,
        trace,
        stop,
        run_seed,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    /// Mean objective including the regularization term.
    pub loss: f64,
    /// Mean of `(θᵀx̃ − y)²`, for regression.
    pub mse: Option<f64>,
    /// Fraction with `sign(θᵀx̃) ≠ y` (a zero score predicts +1), for classification.
    pub misclassification: Option<f64>,
}

impl Metrics {
    /// MSE for regression, misclassification rate for classification.
    pub fn primary(&self) -> f64 {
        self.mse.or(self.misclassification).unwrap_or(f64::NAN)
    }
}

pub fn evaluate(state: &ModelState, test: &[ClientExample]) -> Result<Metrics> {
    if test.is_empty() {
        return Err(LdpError::Empty("test collection"));
    }
    let n = test.len() as f64;
    let mut loss = 0.0;
    let mut err = 0.0;
    for ex in test {
        loss += loss_value(state, ex)?;
        let s = state.score(&ex.features)?;
        err += if state.loss.is_classification() {
            let predicted = if s >= 0.0 { 1.0 } else { -1.0 };
            f64::from(predicted != ex.label)
        } else {
            (s - ex.label) * (s - ex.label)
        };
    }
    let err = err / n;
    let (mse, misclassification) = if state.loss.is_classification() {
        (None, Some(err))
    } else {
        (Some(err), None)
    };
    Ok(Metrics {
        loss: loss / n,
        mse,
        misclassification,
    })
}

/// Writes a trace as CSV with columns `iteration,loss,metric,mechanism,epsilon,seed`.
pub fn write_trace_csv<W: Write>(
    out: W,
    trace: &[TraceRow],
    mechanism: &str,
    epsilon: Option<f64>,
    seed: u64,
) -> std::result::Result<(), csv::Error> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(TRACE_COLUMNS)?;
    write_trace_rows(&mut w, trace, mechanism, epsilon, seed)?;
    w.flush()?;
    Ok(())
}

pub const TRACE_COLUMNS: [&str; 6] = [
    "iteration",
    "loss",
    "metric",
    "mechanism",
    "epsilon",
    "seed",
];

/// Appends trace rows without a header.
pub fn write_trace_rows<W: Write>(
    w: &mut csv::Writer<W>,
    trace: &[TraceRow],
    mechanism: &str,
    epsilon: Option<f64>,
    seed: u64,
) -> std::result::Result<(), csv::Error> {
    let eps = epsilon.map(|e| e.to_string()).unwrap_or_default();
    for row in trace {
        w.write_record([
            row.iteration.to_string(),
            row.loss.to_string(),
            row.metric.to_string(),
            mechanism.to_string(),
            eps.clone(),
            seed.to_string(),
        ])?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn ex(features: &[f64], label: f64) -> ClientExample {
        ClientExample::new(features.to_vec(), label).unwrap()
    }

    #[test]
    fn zero_gradient_cases() {
        let s = ModelState::zeros(2, 0.1, LossKind::SquaredError, 1e-4).unwrap();
        assert_eq!(gradient(&s, &ex(&[0.3, -0.2], 0.0)).unwrap(), vec![0.0; 3]);
        let mut h = ModelState::zeros(1, 0.1, LossKind::Hinge, 0.5).unwrap();
        h.theta = vec![2.0, 1.0];
        let g = gradient(&h, &ex(&[1.0], 1.0)).unwrap();
        assert_eq!(g, vec![1.0, 0.5]);
    }

    #[test]
    fn dimension_mismatch_rejected() {
        let s = ModelState::zeros(2, 0.1, LossKind::Logistic, 0.0).unwrap();
        assert!(gradient(&s, &ex(&[0.3], 1.0)).is_err());
        assert!(ModelState::zeros(2, 0.0, LossKind::Logistic, 0.0).is_err());
        assert!(ModelState::zeros(2, 0.1, LossKind::Logistic, -1.0).is_err());
    }

    #[test]
    fn clamp_examples() {
        assert_eq!(clamp_gradient(&[0.3, -0.9]).unwrap().values(), &[0.3, -0.9]);
        assert_eq!(clamp_gradient(&[2.0, -3.1]).unwrap().values(), &[1.0, -1.0]);
    }

    #[test]
    fn evaluate_examples() {
        let mut s = ModelState::zeros(1, 0.1, LossKind::SquaredError, 0.0).unwrap();
        s.theta = vec![0.5, 0.1];
        let data: Vec<_> = [-1.0, 0.0, 0.6]
            .iter()
            .map(|&x| ex(&[x], 0.5 * x + 0.1))
            .collect();
        assert_eq!(evaluate(&s, &data).unwrap().mse, Some(0.0));
        let c = ModelState::zeros(1, 0.1, LossKind::Logistic, 0.0).unwrap();
        let data: Vec<_> = (0..100)
            .map(|i| ex(&[0.0], if i % 2 == 0 { 1.0 } else { -1.0 }))
            .collect();
        assert_eq!(evaluate(&c, &data).unwrap().misclassification, Some(0.5));
        assert!(evaluate(&c, &[]).is_err());
    }

    #[test]
    fn zero_gradients_leave_theta_unchanged() {
        let clients: Vec<_> = (0..50).map(|i| ex(&[i as f64 / 50.0], 0.0)).collect();
        let s0 = ModelState::zeros(1, 0.1, LossKind::SquaredError, 1e-4).unwrap();
        let sched = GroupSchedule {
            group_size: 5,
            max_iterations: 100,
            convergence_tol: 0.0,
        };
        let out = train(
            &clients,
            &Privatizer::NonPrivate,
            &sched,
            s0.clone(),
            &clients,
            &mut RandomStream::new(1),
        )
        .unwrap();
        assert_eq!(out.state.theta, s0.theta);
        assert_eq!(out.trace.len(), 10);
        assert_eq!(out.stop, StopReason::ClientsExhausted);
    }

    #[test]
    fn stopping_rules() {
        let clients: Vec<_> = (0..50).map(|i| ex(&[i as f64 / 50.0], 0.3)).collect();
        let s0 = ModelState::zeros(1, 0.1, LossKind::SquaredError, 0.0).unwrap();
        let sched = GroupSchedule {
            group_size: 5,
            max_iterations: 3,
            convergence_tol: 0.0,
        };
        let out = train(
            &clients,
            &Privatizer::NonPrivate,
            &sched,
            s0.clone(),
            &clients,
            &mut RandomStream::new(1),
        )
        .unwrap();
        assert_eq!((out.trace.len(), out.stop), (3, StopReason::MaxIterations));
        let sched = GroupSchedule {
            group_size: 5,
            max_iterations: 100,
            convergence_tol: 10.0,
        };
        let out = train(
            &clients,
            &Privatizer::NonPrivate,
            &sched,
            s0,
            &[],
            &mut RandomStream::new(1),
        )
        .unwrap();
        assert_eq!(out.stop, StopReason::Converged);
        assert!(out.trace.is_empty());
    }

    #[test]
    fn trace_csv_columns() {
        let mut buf = Vec::new();
        let rows = [TraceRow {
            iteration: 1,
            loss: 0.5,
            metric: 0.25,
        }];
        write_trace_csv(&mut buf, &rows, "pm-sub", Some(2.0), 9).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(
            text,
            "iteration,loss,metric,mechanism,epsilon,seed\n1,0.5,0.25,pm-sub,2,9\n"
        );
    }

    #[test]
    fn loss_names_parse() {
        assert_eq!(
            "squared".parse::<LossKind>().unwrap(),
            LossKind::SquaredError
        );
        assert_eq!("SVM".parse::<LossKind>().unwrap(), LossKind::Hinge);
        assert!("l1".parse::<LossKind>().is_err());
    }

    proptest! {
        #[test]
        fn clamp_is_idempotent_and_bounded(g in proptest::collection::vec(-10.0f64..10.0, 1..12)) {
            let once = clamp_gradient(&g).unwrap();
            let twice = clamp_gradient(once.values()).unwrap();
            prop_assert_eq!(&once, &twice);
            prop_assert!(once.values().iter().all(|v| v.abs() <= 1.0));
        }

        #[test]
        fn logistic_loss_is_finite(s in -800.0f64..800.0) {
            let mut st = ModelState::zeros(1, 0.1, LossKind::Logistic, 0.0).unwrap();
            st.theta = vec![0.0, s];
            prop_assert!(loss_value(&st, &ex(&[0.0], 1.0)).unwrap().is_finite());
            prop_assert!(gradient(&st, &ex(&[0.0], -1.0)).unwrap().iter().all(|v| v.is_finite()));
        }
    }
}
