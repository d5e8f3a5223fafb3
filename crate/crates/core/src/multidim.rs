//! Perturbation of `d`-dimensional tuples by coordinate sampling.
//!
//! Each tuple reports `k` randomly chosen coordinates, each perturbed with
//! budget `ε/k` and scaled by `d/k`; the other coordinates report 0.

use serde::{Deserialize, Serialize};

use crate::error::{check_unit, LdpError, Result};
use crate::mechanisms::{Mechanism, MechanismKind, RandomStream};
use crate::params::PrivacyBudget;

/// Coordinates per tuple are roughly `ε / SAMPLING_DIVISOR`.
pub const SAMPLING_DIVISOR: f64 = 2.5;

/// A validated tuple with every coordinate in `[−1, 1]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TupleSample(Vec<f64>);

impl TupleSample {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(LdpError::Empty("tuple"));
        }
        for &v in &values {
            check_unit(v)?;
        }
        Ok(Self(values))
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }
}

impl AsRef<[f64]> for TupleSample {
    fn as_ref(&self) -> &[f64] {
        &self.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SamplingPlan {
    pub d: usize,
    pub k: usize,
    pub per_coord_budget: PrivacyBudget,
}

impl SamplingPlan {
    /// Sum of the per-coordinate budgets actually spent.
    pub fn total_budget(&self) -> f64 {
        self.k as f64 * self.per_coord_budget.epsilon()
    }

    pub fn scale(&self) -> f64 {
        self.d as f64 / self.k as f64
    }
}

/// `k = max(1, min(d, ⌊ε/2.5⌋))`.
pub fn choose_k(d: usize, budget: PrivacyBudget) -> Result<SamplingPlan> {
    if d == 0 {
        return Err(LdpError::Empty("tuple dimension"));
    }
    let by_budget = (budget.epsilon() / SAMPLING_DIVISOR).floor();
    let k = if by_budget >= d as f64 {
        d
    } else {
        (by_budget as usize).max(1)
    };
    Ok(SamplingPlan {
        d,
        k,
        per_coord_budget: budget.split(k)?,
    })
}

/// A tuple perturber with its mechanism constants solved once.
#[derive(Debug, Clone)]
pub struct TuplePerturber {
    plan: SamplingPlan,
    mechanism: Mechanism,
    grid_m: Option<u32>,
}

impl TuplePerturber {
    pub fn new(
        kind: MechanismKind,
        d: usize,
        budget: PrivacyBudget,
        grid_m: Option<u32>,
    ) -> Result<Self> {
        let plan = choose_k(d, budget)?;
        if grid_m.is_some() {
            crate::mechanisms::require_discretizable(kind)?;
        }
        Ok(Self {
            plan,
            mechanism: Mechanism::new(kind, plan.per_coord_budget)?,
            grid_m,
        })
    }

    pub fn plan(&self) -> &SamplingPlan {
        &self.plan
    }

    pub fn mechanism(&self) -> &Mechanism {
        &self.mechanism
    }

    /// Writes the perturbed tuple into `out`; `scratch` is reused index storage.
    pub fn perturb_into(
        &self,
        x: &[f64],
        out: &mut [f64],
        scratch: &mut Vec<usize>,
        stream: &mut RandomStream,
    ) -> Result<()> {
        self.perturb_inner(x, out, scratch, stream, None)
    }

    /// [`Self::perturb_into`] drawing grid-rounding coins from `rounding` instead of `stream`.
    ///
    /// Two perturbers that differ only in their grid then see identical
    /// coordinate choices and pre-rounding outputs on the same `stream`.
    pub fn perturb_into_split(
        &self,
        x: &[f64],
        out: &mut [f64],
        scratch: &mut Vec<usize>,
        stream: &mut RandomStream,
        rounding: &mut RandomStream,
    ) -> Result<()> {
        self.perturb_inner(x, out, scratch, stream, Some(rounding))
    }

    fn perturb_inner(
        &self,
        x: &[f64],
        out: &mut [f64],
        scratch: &mut Vec<usize>,
        stream: &mut RandomStream,
        mut rounding: Option<&mut RandomStream>,
    ) -> Result<()> {
        let d = self.plan.d;
        if x.len() != d {
            return Err(LdpError::DimensionMismatch {
                expected: d,
                found: x.len(),
            });
        }
        if out.len() != d {
            return Err(LdpError::DimensionMismatch {
                expected: d,
                found: out.len(),
            });
        }
        for &v in x {
            check_unit(v)?;
        }
        out.fill(0.0);
        scratch.clear();
        scratch.extend(0..d);
        let scale = self.plan.scale();
        // Partial Fisher–Yates: the first k slots end up a uniform k-subset.
        for i in 0..self.plan.k {
            let j = i + stream.below(d - i);
            scratch.swap(i, j);
            let coord = scratch[i];
            let y = match (self.grid_m, rounding.as_deref_mut()) {
                (Some(m), Some(r)) => self
                    .mechanism
                    .perturb_discrete_split(x[coord], m, stream, r)?,
                (Some(m), None) => self.mechanism.perturb_discrete(x[coord], m, stream)?,
                (None, _) => self.mechanism.perturb(x[coord], stream)?,
            };
            out[coord] = scale * y;
        }
        Ok(())
    }

    pub fn perturb(&self, x: &TupleSample, stream: &mut RandomStream) -> Result<Vec<f64>> {
        let mut out = vec![0.0; self.plan.d];
        self.perturb_into(
            x.values(),
            &mut out,
            &mut Vec::with_capacity(self.plan.d),
            stream,
        )?;
        Ok(out)
    }
}

/// Perturbs one tuple; builds the mechanism on every call.
pub fn perturb_tuple(
    kind: MechanismKind,
    x: &TupleSample,
    budget: PrivacyBudget,
    stream: &mut RandomStream,
    grid_m: Option<u32>,
) -> Result<Vec<f64>> {
    TuplePerturber::new(kind, x.dim(), budget, grid_m)?.perturb(x, stream)
}

/// Streaming coordinate-wise mean.
#[derive(Debug, Clone, PartialEq)]
pub struct MeanAccumulator {
    sums: Vec<f64>,
    count: usize,
}

impl MeanAccumulator {
    pub fn new(d: usize) -> Self {
        Self {
            sums: vec![0.0; d],
            count: 0,
        }
    }

    pub fn push(&mut self, v: &[f64]) -> Result<()> {
        if v.len() != self.sums.len() {
            return Err(LdpError::DimensionMismatch {
                expected: self.sums.len(),
                found: v.len(),
            });
        }
        for (s, x) in self.sums.iter_mut().zip(v) {
            *s += x;
        }
        self.count += 1;
        Ok(())
    }

    pub fn count(&self) -> usize {
        self.count
    }

    pub fn means(&self) -> Result<Vec<f64>> {
        if self.count == 0 {
            return Err(LdpError::Empty("perturbed collection"));
        }
        Ok(self.sums.iter().map(|s| s / self.count as f64).collect())
    }
}

/// Coordinate-wise mean of the perturbed vectors.
pub fn estimate_means<V: AsRef<[f64]>>(perturbed: &[V]) -> Result<Vec<f64>> {
    let first = perturbed
        .first()
        .ok_or(LdpError::Empty("perturbed collection"))?;
    let mut acc = MeanAccumulator::new(first.as_ref().len());
    for v in perturbed {
        acc.push(v.as_ref())?;
    }
    acc.means()
}
