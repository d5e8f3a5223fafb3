//! One-dimensional ε-LDP perturbers for inputs in `[−1, 1]`.

use std::fmt;
use std::str::FromStr;

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha12Rng;
use serde::{Deserialize, Serialize};

use crate::error::{check_unit, LdpError, Result};
use crate::params::{
    duchi_magnitude, duchi_variance_profile, hm_mixing_weight, solve_beta, solve_p00, solve_t_opt,
    t_pm, t_pm_sub, PiecewiseParams, PrivacyBudget, ThreeOutputsParams, VarianceProfile,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MechanismKind {
    Laplace,
    Duchi,
    Pm,
    PmOpt,
    PmSub,
    ThreeOutputs,
    Hm,
    HmTp,
}

impl MechanismKind {
    pub const ALL: [MechanismKind; 8] = [
        Self::Laplace,
        Self::Duchi,
        Self::Pm,
        Self::PmOpt,
        Self::PmSub,
        Self::ThreeOutputs,
        Self::Hm,
        Self::HmTp,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Self::Laplace => "laplace",
            Self::Duchi => "duchi",
            Self::Pm => "pm",
            Self::PmOpt => "pm-opt",
            Self::PmSub => "pm-sub",
            Self::ThreeOutputs => "three-outputs",
            Self::Hm => "hm",
            Self::HmTp => "hm-tp",
        }
    }

    /// Piecewise mechanisms: continuous output on a bounded range.
    pub fn is_piecewise(self) -> bool {
        matches!(self, Self::Pm | Self::PmOpt | Self::PmSub)
    }

    /// Mechanisms whose output takes finitely many values.
    pub fn is_discrete(self) -> bool {
        matches!(self, Self::Duchi | Self::ThreeOutputs)
    }

    /// Mechanisms that can be followed by grid discretization.
    pub fn is_discretizable(self) -> bool {
        self.is_piecewise() || matches!(self, Self::Hm | Self::HmTp)
    }
}

impl fmt::Display for MechanismKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Error for an unrecognized mechanism name.
#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("unknown mechanism '{0}' (expected one of laplace, duchi, pm, pm-opt, pm-sub, three-outputs, hm, hm-tp)")]
pub struct UnknownMechanism(pub String);

impl FromStr for MechanismKind {
    type Err = UnknownMechanism;
    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        let norm = s.trim().to_ascii_lowercase().replace('_', "-");
        Self::ALL
            .into_iter()
            .find(|k| k.name() == norm || k.name().replace('-', "") == norm)
            .ok_or_else(|| UnknownMechanism(s.to_string()))
    }
}

/// Seeded, counted random source. Identical seed and call sequence give identical draws.
#[derive(Debug, Clone)]
pub struct RandomStream {
    seed: u64,
    position: u64,
    rng: ChaCha12Rng,
}

const GOLDEN_GAMMA: u64 = 0x9E37_79B9_7F4A_7C15;

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(GOLDEN_GAMMA);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

impl RandomStream {
    pub fn new(seed: u64) -> Self {
        Self {
            seed,
            position: 0,
            rng: ChaCha12Rng::seed_from_u64(seed),
        }
    }

    /// Child seed for a labelled sub-task: `s ← splitmix64(s ⊕ splitmix64(label))` folded over the labels.
    pub fn derive_seed(seed: u64, labels: &[u64]) -> u64 {
        labels
            .iter()
            .fold(splitmix64(seed), |s, &l| splitmix64(s ^ splitmix64(l)))
    }

    /// Stream seeded with [`Self::derive_seed`].
    pub fn derived(seed: u64, labels: &[u64]) -> Self {
        Self::new(Self::derive_seed(seed, labels))
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Number of 32- or 64-bit words drawn so far.
    pub fn position(&self) -> u64 {
        self.position
    }

    /// Uniform on `[0, 1)` with 53 random bits.
    pub fn uniform(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Uniform on the open interval `(0, 1)`.
    pub fn uniform_open(&mut self) -> f64 {
        ((self.next_u64() >> 11) as f64 + 0.5) * (1.0 / (1u64 << 53) as f64)
    }

    /// Uniform on `[lo, hi)`.
    pub fn uniform_in(&mut self, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * self.uniform()
    }

    /// Uniform integer in `0..n`; `n` must be positive.
    pub fn below(&mut self, n: usize) -> usize {
        self.random_range(0..n)
    }

    pub fn bernoulli(&mut self, p: f64) -> bool {
        self.uniform() < p
    }
}

impl RngCore for RandomStream {
    fn next_u32(&mut self) -> u32 {
        self.position += 1;
        self.rng.next_u32()
    }

    fn next_u64(&mut self) -> u64 {
        self.position += 1;
        self.rng.next_u64()
    }

    fn fill_bytes(&mut self, dst: &mut [u8]) {
        self.position += dst.len().div_ceil(4) as u64;
        self.rng.fill_bytes(dst)
    }
}

/// Constants of the two-output baseline with support `{−C, C}`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DuchiParams {
    pub epsilon: f64,
    pub c_mag: f64,
}

impl DuchiParams {
    pub fn new(budget: PrivacyBudget) -> Self {
        Self {
            epsilon: budget.epsilon(),
            c_mag: duchi_magnitude(budget),
        }
    }

    /// Probability of outputting `+C`.
    pub fn prob_positive(&self, x: f64) -> f64 {
        let c = self.epsilon.exp();
        0.5 + x * (c - 1.0) / (2.0 * (c + 1.0))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LaplaceParams {
    pub epsilon: f64,
    pub scale: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Sampler {
    Laplace(LaplaceParams),
    Duchi(DuchiParams),
    Piecewise(PiecewiseParams),
    ThreeOutputs(ThreeOutputsParams),
    /// PM with probability `q`, Duchi otherwise.
    Hm {
        q: f64,
        pm: PiecewiseParams,
        duchi: DuchiParams,
    },
    /// PM-SUB with probability `beta`, three outputs otherwise.
    HmTp {
        beta: f64,
        pm_sub: PiecewiseParams,
        three: ThreeOutputsParams,
    },
}

/// Which component produced a draw; discretization depends on it.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Branch {
    /// Continuous output on `[−half_range, half_range]`.
    Continuous { half_range: f64 },
    /// Output already one of finitely many atoms.
    Atomic,
    /// Continuous output with unbounded support.
    Unbounded,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Draw {
    pub value: f64,
    pub branch: Branch,
}

/// A mechanism with all constants precomputed for one budget.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Mechanism {
    kind: MechanismKind,
    budget: PrivacyBudget,
    sampler: Sampler,
}

impl Mechanism {
    pub fn new(kind: MechanismKind, budget: PrivacyBudget) -> Result<Self> {
        let piecewise = |t| PiecewiseParams::new(budget, t);
        let sampler = match kind {
            MechanismKind::Laplace => Sampler::Laplace(LaplaceParams {
                epsilon: budget.epsilon(),
                scale: 2.0 / budget.epsilon(),
            }),
            MechanismKind::Duchi => Sampler::Duchi(DuchiParams::new(budget)),
            MechanismKind::Pm => Sampler::Piecewise(piecewise(t_pm(budget))?),
            MechanismKind::PmOpt => Sampler::Piecewise(piecewise(solve_t_opt(budget))?),
            MechanismKind::PmSub => Sampler::Piecewise(piecewise(t_pm_sub(budget))?),
            MechanismKind::ThreeOutputs => Sampler::ThreeOutputs(solve_p00(budget)),
            MechanismKind::Hm => Sampler::Hm {
                q: hm_mixing_weight(budget),
                pm: piecewise(t_pm(budget))?,
                duchi: DuchiParams::new(budget),
            },
            MechanismKind::HmTp => Sampler::HmTp {
                beta: solve_beta(budget)?.beta,
                pm_sub: piecewise(t_pm_sub(budget))?,
                three: solve_p00(budget),
            },
        };
        Ok(Self {
            kind,
            budget,
            sampler,
        })
    }

    pub fn kind(&self) -> MechanismKind {
        self.kind
    }

    pub fn budget(&self) -> PrivacyBudget {
        self.budget
    }

    pub fn piecewise_params(&self) -> Option<&PiecewiseParams> {
        match &self.sampler {
            Sampler::Piecewise(p) => Some(p),
            Sampler::Hm { pm, .. } => Some(pm),
            Sampler::HmTp { pm_sub, .. } => Some(pm_sub),
            _ => None,
        }
    }

    pub fn three_outputs_params(&self) -> Option<&ThreeOutputsParams> {
        match &self.sampler {
            Sampler::ThreeOutputs(p) | Sampler::HmTp { three: p, .. } => Some(p),
            _ => None,
        }
    }

    pub fn duchi_params(&self) -> Option<&DuchiParams> {
        match &self.sampler {
            Sampler::Duchi(p) | Sampler::Hm { duchi: p, .. } => Some(p),
            _ => None,
        }
    }

    /// Probability of invoking the continuous component, for the two hybrids.
    pub fn mixing_weight(&self) -> Option<f64> {
        match self.sampler {
            Sampler::Hm { q, .. } => Some(q),
            Sampler::HmTp { beta, .. } => Some(beta),
            _ => None,
        }
    }

    pub fn variance_profile(&self) -> VarianceProfile {
        match &self.sampler {
            Sampler::Laplace(p) => VarianceProfile {
                constant: 2.0 * p.scale * p.scale,
                linear: 0.0,
                quadratic: 0.0,
            },
            Sampler::Duchi(_) => duchi_variance_profile(self.budget),
            Sampler::Piecewise(p) => p.variance_profile(),
            Sampler::ThreeOutputs(p) => p.variance_profile(),
            Sampler::Hm { q, pm, .. } => pm
                .variance_profile()
                .mix(*q, &duchi_variance_profile(self.budget)),
            Sampler::HmTp {
                beta,
                pm_sub,
                three,
            } => pm_sub
                .variance_profile()
                .mix(*beta, &three.variance_profile()),
        }
    }

    /// One noisy output for `x ∈ [−1, 1]`.
    pub fn perturb(&self, x: f64, stream: &mut RandomStream) -> Result<f64> {
        Ok(self.perturb_tagged(x, stream)?.value)
    }

    /// One noisy output plus the component that produced it.
    pub fn perturb_tagged(&self, x: f64, stream: &mut RandomStream) -> Result<Draw> {
        let x = check_unit(x)?;
        let continuous = |p: &PiecewiseParams, s: &mut RandomStream| Draw {
            value: sample_piecewise(p, x, s),
            branch: Branch::Continuous {
                half_range: p.a_bound,
            },
        };
        let atomic = |value| Draw {
            value,
            branch: Branch::Atomic,
        };
        Ok(match &self.sampler {
            Sampler::Laplace(p) => Draw {
                value: x + sample_laplace(p.scale, stream),
                branch: Branch::Unbounded,
            },
            Sampler::Duchi(p) => atomic(sample_duchi(p, x, stream)),
            Sampler::Piecewise(p) => continuous(p, stream),
            Sampler::ThreeOutputs(p) => atomic(sample_three_outputs(p, x, stream)),
            Sampler::Hm { q, pm, duchi } => {
                if stream.bernoulli(*q) {
                    continuous(pm, stream)
                } else {
                    atomic(sample_duchi(duchi, x, stream))
                }
            }
            Sampler::HmTp {
                beta,
                pm_sub,
                three,
            } => {
                if stream.bernoulli(*beta) {
                    continuous(pm_sub, stream)
                } else {
                    atomic(sample_three_outputs(three, x, stream))
                }
            }
        })
    }

    /// Perturbs `x` and packages the result for auditing.
    pub fn record(&self, x: f64, stream: &mut RandomStream) -> Result<PerturbationRecord> {
        let y = self.perturb(x, stream)?;
        Ok(PerturbationRecord {
            x,
            y,
            kind: self.kind,
            epsilon: self.budget.epsilon(),
        })
    }

    /// Whether `y` is a possible output of this mechanism.
    pub fn in_support(&self, y: f64) -> bool {
        let atom = |c: f64| y == c || y == -c;
        match &self.sampler {
            Sampler::Laplace(_) => y.is_finite(),
            Sampler::Duchi(p) => atom(p.c_mag),
            Sampler::Piecewise(p) => y.abs() <= p.a_bound,
            Sampler::ThreeOutputs(p) => y == 0.0 || atom(p.c_mag),
            Sampler::Hm { pm, duchi, .. } => y.abs() <= pm.a_bound || atom(duchi.c_mag),
            Sampler::HmTp { pm_sub, three, .. } => y.abs() <= pm_sub.a_bound || atom(three.c_mag),
        }
    }
}

/// One perturbation event: input, output, mechanism and budget.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PerturbationRecord {
    pub x: f64,
    pub y: f64,
    pub kind: MechanismKind,
    pub epsilon: f64,
}

/// Convenience wrapper building the mechanism for a single draw.
///
/// Building a [`Mechanism`] solves for its constants; reuse one when drawing repeatedly.
pub fn perturb(
    kind: MechanismKind,
    x: f64,
    budget: PrivacyBudget,
    stream: &mut RandomStream,
) -> Result<f64> {
    Mechanism::new(kind, budget)?.perturb(x, stream)
}

/// One draw of the three-output mechanism.
pub fn perturb_three_outputs(
    x: f64,
    budget: PrivacyBudget,
    stream: &mut RandomStream,
) -> Result<f64> {
    let x = check_unit(x)?;
    Ok(sample_three_outputs(&solve_p00(budget), x, stream))
}

/// One draw of the piecewise mechanism with shape `t`.
pub fn perturb_piecewise(
    x: f64,
    budget: PrivacyBudget,
    t: f64,
    stream: &mut RandomStream,
) -> Result<f64> {
    let x = check_unit(x)?;
    Ok(sample_piecewise(
        &PiecewiseParams::new(budget, t)?,
        x,
        stream,
    ))
}

fn sample_laplace(scale: f64, stream: &mut RandomStream) -> f64 {
    // Inverse CDF on u ∈ (−1/2, 1/2); the open interval keeps the log finite.
    let u = stream.uniform_open() - 0.5;
    -scale * u.signum() * (1.0 - 2.0 * u.abs()).ln()
}

fn sample_duchi(p: &DuchiParams, x: f64, stream: &mut RandomStream) -> f64 {
    if stream.bernoulli(p.prob_positive(x)) {
        p.c_mag
    } else {
        -p.c_mag
    }
}

fn sample_three_outputs(p: &ThreeOutputsParams, x: f64, stream: &mut RandomStream) -> f64 {
    let probs = p.probabilities(x).expect("input validated by caller");
    let u = stream.uniform();
    if u < probs.neg {
        -p.c_mag
    } else if u < probs.neg + probs.zero {
        0.0
    } else {
        p.c_mag
    }
}

fn sample_piecewise(p: &PiecewiseParams, x: f64, stream: &mut RandomStream) -> f64 {
    let left = p.left(x);
    let right = p.right(x);
    if stream.bernoulli(p.center_probability()) {
        return stream.uniform_in(left, right);
    }
    let left_len = (left + p.a_bound).max(0.0);
    let right_len = (p.a_bound - right).max(0.0);
    let total = left_len + right_len;
    // Position along the concatenated tails; choosing by length weights each tail correctly.
    let s = stream.uniform() * total;
    if s < left_len {
        -p.a_bound + s
    } else {
        right + (s - left_len)
    }
}

/// `Err` for kinds without a bounded continuous component.
pub(crate) fn require_discretizable(kind: MechanismKind) -> Result<()> {
    if kind.is_discretizable() {
        Ok(())
    } else {
        Err(LdpError::NotDiscretizable(kind))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn b(eps: f64) -> PrivacyBudget {
        PrivacyBudget::new(eps).unwrap()
    }

    #[test]
    fn kind_names_round_trip() {
        for k in MechanismKind::ALL {
            assert_eq!(k.name().parse::<MechanismKind>().unwrap(), k);
            assert_eq!(k.to_string(), k.name());
        }
        assert_eq!(
            "HM_TP".parse::<MechanismKind>().unwrap(),
            MechanismKind::HmTp
        );
        assert_eq!(
            "pmsub".parse::<MechanismKind>().unwrap(),
            MechanismKind::PmSub
        );
        assert!("four-outputs".parse::<MechanismKind>().is_err());
    }

    #[test]
    fn stream_is_deterministic_and_counts() {
        let mut a = RandomStream::new(7);
        let mut b = RandomStream::new(7);
        let xs: Vec<f64> = (0..10).map(|_| a.uniform()).collect();
        let ys: Vec<f64> = (0..10).map(|_| b.uniform()).collect();
        assert_eq!(xs, ys);
        assert_eq!(a.position(), 10);
        assert_ne!(
            RandomStream::derive_seed(7, &[1]),
            RandomStream::derive_seed(7, &[2])
        );
        assert_ne!(
            RandomStream::derive_seed(7, &[1, 2]),
            RandomStream::derive_seed(7, &[2, 1])
        );
    }

    #[test]
    fn duchi_positive_probability_at_one() {
        let d = DuchiParams::new(b(1.0));
        let e = std::f64::consts::E;
        assert!((d.prob_positive(1.0) - e / (e + 1.0)).abs() < 1e-15);
        let three = solve_p00(b(0.6)).probabilities(1.0).unwrap();
        let d = DuchiParams::new(b(0.6));
        assert!((three.pos - d.prob_positive(1.0)).abs() < 1e-15);
    }

    #[test]
    fn hm_tp_below_threshold_is_three_outputs() {
        let m = Mechanism::new(MechanismKind::HmTp, b(0.4)).unwrap();
        assert_eq!(m.mixing_weight(), Some(0.0));
        let t = Mechanism::new(MechanismKind::ThreeOutputs, b(0.4)).unwrap();
        let mut s1 = RandomStream::new(3);
        let mut s2 = RandomStream::new(3);
        for i in 0..1000 {
            let x = (i as f64 / 500.0) - 1.0;
            // The hybrid spends one draw on the branch coin.
            s2.uniform();
            assert_eq!(
                m.perturb(x, &mut s1).unwrap(),
                t.perturb(x, &mut s2).unwrap()
            );
        }
    }

    #[test]
    fn piecewise_center_probability_for_pm_sub() {
        let eps = 1.2f64;
        let m = Mechanism::new(MechanismKind::PmSub, b(eps)).unwrap();
        let p = m.piecewise_params().unwrap();
        assert!(
            (p.center_probability() - eps.exp() / ((eps / 3.0).exp() + eps.exp())).abs() < 1e-15
        );
    }

    #[test]
    fn rejects_out_of_range_input() {
        let mut s = RandomStream::new(1);
        for k in MechanismKind::ALL {
            let m = Mechanism::new(k, b(1.0)).unwrap();
            assert_eq!(
                m.perturb(1.01, &mut s),
                Err(LdpError::InputOutOfRange(1.01))
            );
        }
    }

    #[test]
    fn free_functions_match_mechanism() {
        let mut s1 = RandomStream::new(11);
        let mut s2 = RandomStream::new(11);
        let m = Mechanism::new(MechanismKind::PmSub, b(2.0)).unwrap();
        assert_eq!(
            perturb_piecewise(0.3, b(2.0), t_pm_sub(b(2.0)), &mut s1).unwrap(),
            m.perturb(0.3, &mut s2).unwrap()
        );
        let m = Mechanism::new(MechanismKind::ThreeOutputs, b(2.0)).unwrap();
        assert_eq!(
            perturb_three_outputs(-0.3, b(2.0), &mut s1).unwrap(),
            m.perturb(-0.3, &mut s2).unwrap()
        );
        assert_eq!(
            perturb(MechanismKind::Duchi, 0.1, b(2.0), &mut s1).unwrap(),
            Mechanism::new(MechanismKind::Duchi, b(2.0))
                .unwrap()
                .perturb(0.1, &mut s2)
                .unwrap()
        );
    }

    proptest! {
        #[test]
        fn outputs_stay_in_support(seed in any::<u64>(), eps in 0.05f64..8.0, x in -1.0f64..=1.0) {
            let mut s = RandomStream::new(seed);
            for k in MechanismKind::ALL {
                let m = Mechanism::new(k, b(eps)).unwrap();
                let r = m.record(x, &mut s).unwrap();
                prop_assert!(m.in_support(r.y), "{k} produced {} at x={x}", r.y);
            }
        }

        #[test]
        fn same_seed_same_sequence(seed in any::<u64>(), eps in 0.1f64..6.0) {
            for k in MechanismKind::ALL {
                let m = Mechanism::new(k, b(eps)).unwrap();
                let mut s1 = RandomStream::new(seed);
                let mut s2 = RandomStream::new(seed);
                for i in 0..20 {
                    let x = -1.0 + i as f64 / 10.0;
                    prop_assert_eq!(m.perturb(x, &mut s1).unwrap().to_bits(), m.perturb(x, &mut s2).unwrap().to_bits());
                }
            }
        }
    }
}
