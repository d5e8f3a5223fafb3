//! Derived constants for every mechanism and their analytic variances.
//!
//! All variances here are conditional on the input: `Var[Y | x]` for an
//! unbiased output `Y`. Every mechanism in this crate has a variance of the
//! form `c0 + c1·|x| + c2·x²`, captured by [`VarianceProfile`].

use std::f64::consts::LN_2;
use std::fmt;
use std::sync::OnceLock;

use serde::{Deserialize, Serialize};

use crate::error::{check_unit, LdpError, Result};
use crate::mechanisms::{Mechanism, MechanismKind};
use crate::roots::{bisect_polish, golden_section_min};

/// Budget below which the hybrid with three outputs never mixes in PM-SUB.
pub const EPS_STAR: f64 = 0.610986;

/// Budget above which the zero-output probability sits at its upper bound `e^ε/(e^ε+2)`.
pub fn eps_prime() -> f64 {
    ((3.0 + 65f64.sqrt()) / 2.0).ln()
}

/// A positive, finite privacy budget ε.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize, Deserialize)]
#[serde(try_from = "f64", into = "f64")]
pub struct PrivacyBudget(f64);

impl PrivacyBudget {
    pub fn new(epsilon: f64) -> Result<Self> {
        if epsilon.is_finite() && epsilon > 0.0 {
            Ok(Self(epsilon))
        } else {
            Err(LdpError::InvalidBudget(epsilon))
        }
    }

    pub fn epsilon(self) -> f64 {
        self.0
    }

    /// `e^ε`.
    pub fn exp(self) -> f64 {
        self.0.exp()
    }

    /// The budget `ε / parts`, used when a tuple spends ε across several coordinates.
    pub fn split(self, parts: usize) -> Result<Self> {
        if parts == 0 {
            return Err(LdpError::InvalidParameter(
                "cannot split a budget into zero parts".into(),
            ));
        }
        Self::new(self.0 / parts as f64)
    }
}

impl TryFrom<f64> for PrivacyBudget {
    type Error = LdpError;
    fn try_from(value: f64) -> Result<Self> {
        Self::new(value)
    }
}

impl From<PrivacyBudget> for f64 {
    fn from(b: PrivacyBudget) -> f64 {
        b.0
    }
}

impl fmt::Display for PrivacyBudget {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// `Var[Y|x] = constant + linear·|x| + quadratic·x²`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VarianceProfile {
    pub constant: f64,
    pub linear: f64,
    pub quadratic: f64,
}

impl VarianceProfile {
    pub fn at(&self, x: f64) -> f64 {
        let u = x.abs();
        self.constant + self.linear * u + self.quadratic * u * u
    }

    /// Maximum over `x ∈ [-1, 1]`: an endpoint, or the vertex when the parabola
    /// in `|x|` is concave with its vertex strictly inside `(0, 1)`.
    pub fn worst_case(&self) -> f64 {
        let ends = self.at(0.0).max(self.at(1.0));
        if self.quadratic < 0.0 {
            let vertex = -self.linear / (2.0 * self.quadratic);
            if vertex > 0.0 && vertex < 1.0 {
                return ends.max(self.at(vertex));
            }
        }
        ends
    }

    /// The `|x|` maximizing the variance (first maximizer when tied).
    pub fn worst_input(&self) -> f64 {
        if self.quadratic < 0.0 {
            let vertex = -self.linear / (2.0 * self.quadratic);
            if vertex > 0.0 && vertex < 1.0 {
                return vertex;
            }
        }
        if self.at(1.0) > self.at(0.0) {
            1.0
        } else {
            0.0
        }
    }

    /// `w·self + (1−w)·other`.
    pub fn mix(&self, w: f64, other: &Self) -> Self {
        Self {
            constant: w * self.constant + (1.0 - w) * other.constant,
            linear: w * self.linear + (1.0 - w) * other.linear,
            quadratic: w * self.quadratic + (1.0 - w) * other.quadratic,
        }
    }
}

/// Constants of the three-output mechanism with support `{−C, 0, C}`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ThreeOutputsParams {
    pub epsilon: f64,
    /// Probability of outputting 0 when the input is 0.
    pub a: f64,
    /// `a(1 − e^{−ε})`: slope of the variance in `|x|` per unit `C²`.
    pub b: f64,
    /// Output magnitude C.
    pub c_mag: f64,
}

/// Output probabilities of a three-atom mechanism at one input.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AtomProbabilities {
    pub neg: f64,
    pub zero: f64,
    pub pos: f64,
}

impl AtomProbabilities {
    pub fn as_array(&self) -> [f64; 3] {
        [self.neg, self.zero, self.pos]
    }
}

impl ThreeOutputsParams {
    fn from_a(budget: PrivacyBudget, a: f64) -> Self {
        let c = budget.exp();
        Self {
            epsilon: budget.epsilon(),
            a,
            b: a * (1.0 - 1.0 / c),
            c_mag: (c + 1.0) / ((c - 1.0) * (1.0 - a / c)),
        }
    }

    /// Probabilities of `−C`, `0`, `C` at input `x`.
    ///
    /// The zero-output probability depends on `|x|`; for negative inputs the
    /// outer atoms swap (`P[C|x] = P[−C|−x]`).
    pub fn probabilities(&self, x: f64) -> Result<AtomProbabilities> {
        let x = check_unit(x)?;
        let c = self.epsilon.exp();
        let a = self.a;
        let u = x.abs();
        let zero = a + (a / c - a) * u;
        let same_sign = (1.0 - a) / 2.0 + ((c - a) / (c + 1.0) - (1.0 - a) / 2.0) * u;
        // Computed as a remainder so the three always sum to one.
        let opposite = 1.0 - same_sign - zero;
        Ok(if x >= 0.0 {
            AtomProbabilities {
                neg: opposite,
                zero,
                pos: same_sign,
            }
        } else {
            AtomProbabilities {
                neg: same_sign,
                zero,
                pos: opposite,
            }
        })
    }

    pub fn variance_profile(&self) -> VarianceProfile {
        let c2 = self.c_mag * self.c_mag;
        VarianceProfile {
            constant: c2 * (1.0 - self.a),
            linear: c2 * self.b,
            quadratic: -1.0,
        }
    }
}

/// `2a³ + a²(−e^{2ε}−5−4e^ε) + a(7e^ε−4e^{2ε}−e^{3ε}) + (2e^{3ε}−4e^{2ε})`,
/// whose root in the middle budget regime is the variance-optimal `a`.
pub fn p00_residual(budget: PrivacyBudget, a: f64) -> f64 {
    let c = budget.exp();
    let c2 = c * c;
    let c3 = c2 * c;
    ((2.0 * a + (-c2 - 5.0 - 4.0 * c)) * a + (7.0 * c - 4.0 * c2 - c3)) * a + (2.0 * c3 - 4.0 * c2)
}

fn p00_residual_slope(c: f64, a: f64) -> f64 {
    let c2 = c * c;
    6.0 * a * a + 2.0 * a * (-c2 - 5.0 - 4.0 * c) + (7.0 * c - 4.0 * c2 - c2 * c)
}

/// Variance-optimal zero-output probability and the derived three-output constants.
pub fn solve_p00(budget: PrivacyBudget) -> ThreeOutputsParams {
    let eps = budget.epsilon();
    let c = budget.exp();
    let upper = c / (c + 2.0);
    let a = if eps < LN_2 {
        0.0
    } else if eps > eps_prime() {
        upper
    } else {
        bisect_polish(
            |a| p00_residual(budget, a),
            |a| p00_residual_slope(c, a),
            0.0,
            upper,
        )
    };
    ThreeOutputsParams::from_a(budget, a)
}

/// Constants of a piecewise mechanism with shape parameter `t`.
///
/// The output density is `c_hi` on `[L(x), R(x)]` and `d_lo` on the rest of
/// `[−A, A]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PiecewiseParams {
    pub epsilon: f64,
    pub t: f64,
    pub c_hi: f64,
    pub d_lo: f64,
    pub a_bound: f64,
}

impl PiecewiseParams {
    pub fn new(budget: PrivacyBudget, t: f64) -> Result<Self> {
        if !(t.is_finite() && t > 0.0) {
            return Err(LdpError::InvalidShape(t));
        }
        let c = budget.exp();
        let d_lo = t * (c - 1.0) / (2.0 * (t + c) * (t + c));
        Ok(Self {
            epsilon: budget.epsilon(),
            t,
            c_hi: c * d_lo,
            d_lo,
            a_bound: (c + t) * (t + 1.0) / (t * (c - 1.0)),
        })
    }

    fn scale(&self) -> f64 {
        let c = self.epsilon.exp();
        (c + self.t) / (self.t * (c - 1.0))
    }

    /// Left end of the high-density piece.
    pub fn left(&self, x: f64) -> f64 {
        self.scale() * (x * self.t - 1.0)
    }

    /// Right end of the high-density piece.
    pub fn right(&self, x: f64) -> f64 {
        self.scale() * (x * self.t + 1.0)
    }

    /// Width of the high-density piece, independent of `x`.
    pub fn center_width(&self) -> f64 {
        2.0 * self.scale()
    }

    /// Probability that the output falls in the high-density piece.
    pub fn center_probability(&self) -> f64 {
        let c = self.epsilon.exp();
        c / (self.t + c)
    }

    /// Output density at `y` given input `x`; zero outside `[−A, A]`.
    pub fn density(&self, x: f64, y: f64) -> f64 {
        if y.abs() > self.a_bound {
            0.0
        } else if y >= self.left(x) && y <= self.right(x) {
            self.c_hi
        } else {
            self.d_lo
        }
    }

    pub fn variance_profile(&self) -> VarianceProfile {
        let c = self.epsilon.exp();
        let t = self.t;
        VarianceProfile {
            constant: (t + c) * ((t + 1.0).powi(3) + c - 1.0)
                / (3.0 * t * t * (c - 1.0) * (c - 1.0)),
            linear: 0.0,
            quadratic: (t + 1.0) / (c - 1.0),
        }
    }
}

/// Shape parameter of the original piecewise mechanism, `e^{ε/2}`.
pub fn t_pm(budget: PrivacyBudget) -> f64 {
    (budget.epsilon() / 2.0).exp()
}

/// Shape parameter of PM-SUB, `e^{ε/3}`.
pub fn t_pm_sub(budget: PrivacyBudget) -> f64 {
    (budget.epsilon() / 3.0).exp()
}

/// `t⁴ + 2e^ε t³ − 2e^ε t − e^{2ε}`.
pub fn t_opt_residual(budget: PrivacyBudget, t: f64) -> f64 {
    let c = budget.exp();
    ((t + 2.0 * c) * t * t - 2.0 * c) * t - c * c
}

/// Derivative of [`t_opt_residual`] in `t`.
pub fn t_opt_residual_slope(budget: PrivacyBudget, t: f64) -> f64 {
    let c = budget.exp();
    (4.0 * t + 6.0 * c) * t * t - 2.0 * c
}

/// The unique positive root of [`t_opt_residual`]: the shape minimizing the
/// worst-case variance of the piecewise family.
pub fn solve_t_opt(budget: PrivacyBudget) -> f64 {
    let c = budget.exp();
    // Negative at 0 and positive at e^ε because e^ε > 1.
    bisect_polish(
        |t| t_opt_residual(budget, t),
        |t| t_opt_residual_slope(budget, t),
        0.0,
        c,
    )
}

fn eps_star_polynomial(x: f64) -> f64 {
    (((3.0 * x * x - 2.0) * x + 3.0) * x - 5.0) * x - 3.0
}

/// Confirms once per process that [`EPS_STAR`] is consistent with the quintic it comes from.
fn check_eps_star() {
    static CHECKED: OnceLock<f64> = OnceLock::new();
    let root = *CHECKED.get_or_init(|| {
        bisect_polish(
            eps_star_polynomial,
            |x| (15.0 * x * x - 6.0) * x * x + 6.0 * x - 5.0,
            1.2,
            1.25,
        )
    });
    assert!(
        (root - (EPS_STAR / 3.0).exp()).abs() < 1e-4,
        "EPS_STAR {EPS_STAR} does not match quintic root {root}"
    );
}

/// Mixing weight of the hybrid of PM-SUB and the three-output mechanism.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HmTpParams {
    /// Probability of invoking PM-SUB.
    pub beta: f64,
    /// Coefficient quantities used in the `ε ≥ ln 2` regime.
    pub quant_a: Option<f64>,
    pub quant_b: Option<f64>,
}

/// Variance-optimal probability of invoking PM-SUB in the hybrid mechanism.
pub fn solve_beta(budget: PrivacyBudget) -> Result<HmTpParams> {
    check_eps_star();
    let eps = budget.epsilon();
    let c = budget.exp();
    let t = t_pm_sub(budget);
    let a = solve_p00(budget).a;
    let params = if eps < EPS_STAR {
        HmTpParams {
            beta: 0.0,
            quant_a: None,
            quant_b: None,
        }
    } else if eps < LN_2 {
        let m = 2.0 * (c - a) * (c - a);
        let n = a * c * (c + 1.0) * (c + 1.0);
        let beta = (m * (c - 1.0) - n) / (m * (c + t) - n);
        HmTpParams {
            beta,
            quant_a: None,
            quant_b: None,
        }
    } else {
        let ca4 = (c - a).powi(4);
        let cp4 = (c + 1.0).powi(4);
        let ct2 = (c + t) * (c + t);
        let a2c2 = a * a * c * c;
        let quant_a = a2c2 * cp4 / (4.0 * ct2 * ca4 * (c - 1.0))
            - a2c2 * cp4 / (2.0 * ct2 * (c - 1.0) * ca4)
            + ((t + 1.0).powi(3) + c - 1.0) / (3.0 * t * t * (c - 1.0) * (c - 1.0))
            - (1.0 - a) * c * c * (c + 1.0) * (c + 1.0)
                / ((c + t) * (c - 1.0) * (c - 1.0) * (c - a) * (c - a));
        let quant_b = -(1.0 + t) * (1.0 + t) * a2c2 * cp4 / (4.0 * ct2 * ca4 * (c - 1.0));
        // At ε = ln 2 exactly a = 0, so B = 0 and the formula reduces to the previous regime.
        if quant_a >= 0.0 || quant_b > 0.0 {
            return Err(LdpError::SolverInconsistency(format!(
                "hybrid coefficients must be negative at ε = {eps}: A = {quant_a}, B = {quant_b}"
            )));
        }
        let beta = (-(quant_b / quant_a).sqrt() + c - 1.0) / (c + t);
        HmTpParams {
            beta,
            quant_a: Some(quant_a),
            quant_b: Some(quant_b),
        }
    };
    if !(0.0..=1.0).contains(&params.beta) {
        return Err(LdpError::SolverInconsistency(format!(
            "hybrid weight {} outside [0, 1] at ε = {eps}",
            params.beta
        )));
    }
    Ok(params)
}

/// Number of inputs on `[0, 1]` scanned when optimizing the PM/Duchi mixture weight.
const HM_GRID: usize = 201;

/// Mixture weight `q` on PM (with Duchi taking `1 − q`) minimizing the
/// worst-case variance over a grid of inputs, by golden-section search.
pub fn hm_mixing_weight(budget: PrivacyBudget) -> f64 {
    let pm = PiecewiseParams::new(budget, t_pm(budget))
        .expect("e^(ε/2) is a valid shape")
        .variance_profile();
    let duchi = duchi_variance_profile(budget);
    let worst = |q: f64| {
        let mixed = pm.mix(q, &duchi);
        (0..HM_GRID)
            .map(|i| mixed.at(i as f64 / (HM_GRID - 1) as f64))
            .fold(f64::NEG_INFINITY, f64::max)
    };
    golden_section_min(worst, 0.0, 1.0, 1e-10)
}

pub(crate) fn duchi_magnitude(budget: PrivacyBudget) -> f64 {
    let c = budget.exp();
    (c + 1.0) / (c - 1.0)
}

pub(crate) fn duchi_variance_profile(budget: PrivacyBudget) -> VarianceProfile {
    let m = duchi_magnitude(budget);
    VarianceProfile {
        constant: m * m,
        linear: 0.0,
        quadratic: -1.0,
    }
}

/// `Var[Y|x]` of a piecewise mechanism with shape `t`.
pub fn variance_piecewise(budget: PrivacyBudget, t: f64, x: f64) -> Result<f64> {
    let x = check_unit(x)?;
    Ok(PiecewiseParams::new(budget, t)?.variance_profile().at(x))
}

/// `Var[Y|x]` of the three-output mechanism with the optimal zero probability.
pub fn variance_three_outputs(budget: PrivacyBudget, x: f64) -> Result<f64> {
    let x = check_unit(x)?;
    Ok(solve_p00(budget).variance_profile().at(x))
}

/// `Var[Y|x]` for any mechanism kind.
pub fn variance(kind: MechanismKind, budget: PrivacyBudget, x: f64) -> Result<f64> {
    let x = check_unit(x)?;
    Ok(Mechanism::new(kind, budget)?.variance_profile().at(x))
}

/// `max_{x ∈ [−1,1]} Var[Y|x]` for any mechanism kind.
pub fn worst_case_variance(kind: MechanismKind, budget: PrivacyBudget) -> Result<f64> {
    Ok(Mechanism::new(kind, budget)?
        .variance_profile()
        .worst_case())
}

/// All derived constants at one budget, as reported by the `params` command.
#[derive(Debug, Clone, Serialize)]
pub struct ParamSummary {
    pub epsilon: f64,
    pub three_outputs: ThreeOutputsParams,
    pub t_opt: f64,
    pub t_pm_sub: f64,
    pub hm_tp: HmTpParams,
    pub hm_q: f64,
    pub worst_case: Vec<(MechanismKind, f64)>,
}

pub fn summarize(budget: PrivacyBudget) -> Result<ParamSummary> {
    let worst_case = MechanismKind::ALL
        .iter()
        .map(|&k| worst_case_variance(k, budget).map(|v| (k, v)))
        .collect::<Result<Vec<_>>>()?;
    Ok(ParamSummary {
        epsilon: budget.epsilon(),
        three_outputs: solve_p00(budget),
        t_opt: solve_t_opt(budget),
        t_pm_sub: t_pm_sub(budget),
        hm_tp: solve_beta(budget)?,
        hm_q: hm_mixing_weight(budget),
        worst_case,
    })
}
