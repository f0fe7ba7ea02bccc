//! Impulse instants and jump maps.

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum JumpKind {
    /// `x+ = x * ln(1 + lambda_k)`.
    LogScale,
    /// `y+ = (1 + lambda_k) * y`.
    MultiplyY,
    /// `x+ = d_k * x + b_k`.
    AffineLinear,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ImpulseSchedule {
    instants: Vec<f64>,
    kind: JumpKind,
    /// `lambda_k` for the log/multiply maps, `d_k` for the affine map.
    params: Vec<f64>,
    /// `b_k` for the affine map, zeros otherwise.
    offsets: Vec<f64>,
}

impl ImpulseSchedule {
    pub fn none() -> Self {
        ImpulseSchedule {
            instants: Vec::new(),
            kind: JumpKind::AffineLinear,
            params: Vec::new(),
            offsets: Vec::new(),
        }
    }

    pub fn log_scale(instants: Vec<f64>, lambda: Vec<f64>) -> Result<Self> {
        Self::build(instants, JumpKind::LogScale, lambda, None)
    }

    pub fn multiply_y(instants: Vec<f64>, lambda: Vec<f64>) -> Result<Self> {
        Self::build(instants, JumpKind::MultiplyY, lambda, None)
    }

    pub fn affine(instants: Vec<f64>, d: Vec<f64>, b: Vec<f64>) -> Result<Self> {
        Self::build(instants, JumpKind::AffineLinear, d, Some(b))
    }

    fn build(
        instants: Vec<f64>,
        kind: JumpKind,
        params: Vec<f64>,
        offsets: Option<Vec<f64>>,
    ) -> Result<Self> {
        let offsets = offsets.unwrap_or_else(|| vec![0.0; instants.len()]);
        if params.len() != instants.len() || offsets.len() != instants.len() {
            return Err(Error::InvalidSchedule(format!(
                "{} instants but {} parameters and {} offsets",
                instants.len(),
                params.len(),
                offsets.len()
            )));
        }
        if instants.iter().chain(&params).chain(&offsets).any(|v| !v.is_finite()) {
            return Err(Error::InvalidSchedule("non-finite instant or parameter".into()));
        }
        if instants.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::InvalidSchedule("instants must be strictly increasing".into()));
        }
        if matches!(kind, JumpKind::LogScale | JumpKind::MultiplyY) {
            if let Some(l) = params.iter().find(|&&l| l <= -1.0) {
                return Err(Error::InvalidSchedule(format!("lambda = {l} must exceed -1")));
            }
        }
        Ok(ImpulseSchedule {
            instants,
            kind,
            params,
            offsets,
        })
    }

    pub fn kind(&self) -> JumpKind {
        self.kind
    }

    pub fn instants(&self) -> &[f64] {
        &self.instants
    }

    pub fn len(&self) -> usize {
        self.instants.len()
    }

    pub fn is_empty(&self) -> bool {
        self.instants.is_empty()
    }

    /// `lambda_k` for log/multiply schedules.
    pub fn lambda(&self, k: usize) -> Option<f64> {
        match self.kind {
            JumpKind::AffineLinear => None,
            _ => Some(self.params[k]),
        }
    }

    pub fn lambdas(&self) -> Option<&[f64]> {
        match self.kind {
            JumpKind::AffineLinear => None,
            _ => Some(&self.params),
        }
    }

    /// Linear part of the `k`-th jump: `ln(1 + lambda_k)`, `1 + lambda_k`, or `d_k`.
    pub fn factor(&self, k: usize) -> f64 {
        match self.kind {
            JumpKind::LogScale => self.params[k].ln_1p(),
            JumpKind::MultiplyY => 1.0 + self.params[k],
            JumpKind::AffineLinear => self.params[k],
        }
    }

    /// Constant part of the `k`-th jump (`b_k`; zero for the multiplicative maps).
    pub fn offset(&self, k: usize) -> f64 {
        self.offsets[k]
    }

    pub fn apply(&self, k: usize, x: f64) -> f64 {
        match self.kind {
            JumpKind::AffineLinear => self.params[k] * x + self.offsets[k],
            _ => self.factor(k) * x,
        }
    }

    /// `inf_k (t_{k+1} - t_k)`, or `None` with fewer than two instants.
    pub fn theta(&self) -> Option<f64> {
        self.instants
            .windows(2)
            .map(|w| w[1] - w[0])
            .reduce(f64::min)
    }

    /// The same instants and `lambda_k` with the multiplicative `y` map.
    pub fn to_multiply_y(&self) -> Result<Self> {
        match self.kind {
            JumpKind::AffineLinear => Err(Error::InvalidSchedule(
                "affine schedules have no lambda to reuse".into(),
            )),
            _ => Self::multiply_y(self.instants.clone(), self.params.clone()),
        }
    }

    /// Keeps only the impulses with `lo < t_k <= hi`.
    pub fn restricted(&self, lo: f64, hi: f64) -> Self {
        let keep: Vec<usize> = (0..self.len())
            .filter(|&k| self.instants[k] > lo && self.instants[k] <= hi)
            .collect();
        ImpulseSchedule {
            instants: keep.iter().map(|&k| self.instants[k]).collect(),
            kind: self.kind,
            params: keep.iter().map(|&k| self.params[k]).collect(),
            offsets: keep.iter().map(|&k| self.offsets[k]).collect(),
        }
    }
}

/// `first, first + period, ...` up to and including `end`.
pub fn arithmetic_instants(first: f64, period: f64, end: f64) -> Result<Vec<f64>> {
    if !(period > 0.0) || !first.is_finite() || !end.is_finite() {
        return Err(Error::InvalidSchedule(format!(
            "arithmetic schedule needs a positive period, got {period}"
        )));
    }
    let mut out = Vec::new();
    let mut k = 0u64;
    loop {
        let t = first + k as f64 * period;
        if t > end + 1e-9 * period {
            break;
        }
        out.push(t);
        k += 1;
    }
    Ok(out)
}

/// `lambda_k = exp(base^(2^-k)) - 1`, so `ln(1 + lambda_k) = base^(2^-k)`.
/// `k` counts from 1.
pub fn nested_power_lambda(base: f64, k: usize) -> f64 {
    base.powf((-(k as f64)).exp2()).exp_m1()
}
