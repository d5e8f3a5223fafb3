//! Unbiased rounding of a bounded continuous output onto a grid of `2m+1` atoms.

use serde::{Deserialize, Serialize};

use crate::error::{LdpError, Result};
use crate::mechanisms::{
    require_discretizable, Branch, Draw, Mechanism, MechanismKind, RandomStream,
};
use crate::params::PrivacyBudget;

/// Distance from an integer, in grid units, below which a value counts as an atom.
const ATOM_TOLERANCE: f64 = 1e-12;

/// Atoms `i·C/m` for `i ∈ {−m, …, m}`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    half_range: f64,
    m: u32,
}

impl GridSpec {
    pub fn new(half_range: f64, m: u32) -> Result<Self> {
        if m == 0 || !(half_range.is_finite() && half_range > 0.0) {
            return Err(LdpError::InvalidGrid { half_range, m });
        }
        Ok(Self { half_range, m })
    }

    pub fn half_range(&self) -> f64 {
        self.half_range
    }

    pub fn m(&self) -> u32 {
        self.m
    }

    pub fn step(&self) -> f64 {
        self.half_range / self.m as f64
    }

    pub fn atom(&self, i: i64) -> f64 {
        // Multiplying before dividing makes the endpoints exactly ±C.
        self.half_range * i as f64 / self.m as f64
    }

    pub fn atoms(&self) -> impl Iterator<Item = f64> + '_ {
        let m = self.m as i64;
        (-m..=m).map(|i| self.atom(i))
    }

    /// Whether `z` is an atom, up to `1e-12·C`.
    pub fn contains(&self, z: f64) -> bool {
        let i = (z / self.step()).round();
        i.abs() <= self.m as f64 && (z - i * self.step()).abs() <= 1e-12 * self.half_range
    }
}

/// The exact two-point law of the rounded value given `y`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TwoPoint {
    pub lower: f64,
    pub upper: f64,
    /// Probability of `upper`; zero when `y` is an atom.
    pub p_upper: f64,
}

impl TwoPoint {
    pub fn mean(&self) -> f64 {
        self.lower + self.p_upper * (self.upper - self.lower)
    }

    pub fn second_moment(&self) -> f64 {
        (1.0 - self.p_upper) * self.lower * self.lower + self.p_upper * self.upper * self.upper
    }
}

/// Rounding law of `y` on `grid`: lower atom `k·C/m` with probability `k+1−ym/C`.
pub fn two_point(y: f64, grid: &GridSpec) -> Result<TwoPoint> {
    if !(y.is_finite() && y.abs() <= grid.half_range) {
        return Err(LdpError::OutsideGrid {
            value: y,
            half_range: grid.half_range,
        });
    }
    let scaled = y * grid.m as f64 / grid.half_range;
    let nearest = scaled.round();
    if (scaled - nearest).abs() < ATOM_TOLERANCE {
        let z = grid.atom(nearest as i64);
        return Ok(TwoPoint {
            lower: z,
            upper: z,
            p_upper: 0.0,
        });
    }
    let k = scaled.floor();
    Ok(TwoPoint {
        lower: grid.atom(k as i64),
        upper: grid.atom(k as i64 + 1),
        p_upper: scaled - k,
    })
}

/// Rounds `y` to a neighbouring atom so that `E[Z|y] = y`.
pub fn discretize(y: f64, grid: &GridSpec, stream: &mut RandomStream) -> Result<f64> {
    let law = two_point(y, grid)?;
    if law.p_upper == 0.0 {
        return Ok(law.lower);
    }
    Ok(if stream.bernoulli(law.p_upper) {
        law.upper
    } else {
        law.lower
    })
}

/// Bits needed to index one of `2m+1` atoms.
pub fn bits_per_sample(m: u32) -> u32 {
    let atoms = 2 * m as u64 + 1;
    u64::BITS - (atoms - 1).leading_zeros()
}

impl Mechanism {
    /// Perturbs `x`, then rounds continuous draws onto the `2m+1`-atom grid over the
    /// component's output range. Draws from a discrete component pass through.
    pub fn perturb_discrete(&self, x: f64, m: u32, stream: &mut RandomStream) -> Result<f64> {
        require_discretizable(self.kind())?;
        let draw = self.perturb_tagged(x, stream)?;
        round_draw(self.kind(), draw, m, stream)
    }

    /// [`Self::perturb_discrete`] with the rounding coin drawn from a separate stream,
    /// so the pre-rounding output matches [`Self::perturb`] on `stream`.
    pub fn perturb_discrete_split(
        &self,
        x: f64,
        m: u32,
        stream: &mut RandomStream,
        rounding: &mut RandomStream,
    ) -> Result<f64> {
        require_discretizable(self.kind())?;
        let draw = self.perturb_tagged(x, stream)?;
        round_draw(self.kind(), draw, m, rounding)
    }
}

fn round_draw(kind: MechanismKind, draw: Draw, m: u32, stream: &mut RandomStream) -> Result<f64> {
    match draw.branch {
        Branch::Continuous { half_range } => {
            // Floating rounding in the sampler can leave y a hair past A.
            let y = draw.value.clamp(-half_range, half_range);
            discretize(y, &GridSpec::new(half_range, m)?, stream)
        }
        Branch::Atomic => Ok(draw.value),
        Branch::Unbounded => Err(LdpError::NotDiscretizable(kind)),
    }
}

/// [`Mechanism::perturb_discrete`] for a single draw.
pub fn perturb_discrete(
    kind: MechanismKind,
    x: f64,
    budget: PrivacyBudget,
    grid_m: u32,
    stream: &mut RandomStream,
) -> Result<f64> {
    require_discretizable(kind)?;
    Mechanism::new(kind, budget)?.perturb_discrete(x, grid_m, stream)
}
