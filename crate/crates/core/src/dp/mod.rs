//! Sequential sublinear expectations by backward dynamic programming.
//!
//! A [`SequentialModel`] is driven by scalar noises `ξ_1, ξ_2, ...` that are
//! sequentially independent and identically distributed: the law of each
//! noise is picked by a control from a finite [`ControlSet`], and the control
//! may depend on everything observed before. Observations `X_k` read a window
//! of consecutive noises through a [`StateMap`]. Expectations are evaluated
//! backward: the last noise is maximized first, then substituted, and so on.

mod engine;
mod lattice;

use serde::{Deserialize, Serialize};

use crate::error::{domain, Result};
use crate::scenario::GammaSet;

pub use engine::DEFAULT_STATE_BUDGET;
pub use lattice::{
    g_normal_step, v_n_recursion, EvalMode, GridSpec, LatticeTable, MeanExpectation,
};

/// Interior grid points used to discretize a maximal step law.
pub const DEFAULT_MAXIMAL_INTERIOR: usize = 33;

/// Finite set of control points.
///
/// Points are `dim × dim` symmetric matrices stored row-major; in one
/// dimension they are scalars kept in ascending order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ControlSet {
    dim: usize,
    points: Vec<Vec<f64>>,
    extreme: Vec<bool>,
}

impl ControlSet {
    /// Scalar controls; the smallest and largest value are flagged extreme.
    pub fn scalars(mut values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return domain("control set must be nonempty");
        }
        if values.iter().any(|v| !v.is_finite()) {
            return domain("control values must be finite");
        }
        values.sort_by(|a, b| a.total_cmp(b));
        values.dedup();
        let n = values.len();
        let extreme = (0..n).map(|i| i == 0 || i == n - 1).collect();
        Ok(ControlSet {
            dim: 1,
            points: values.into_iter().map(|v| vec![v]).collect(),
            extreme,
        })
    }

    /// Interval `[lo, hi]` represented by its endpoints plus `interior` points.
    pub fn interval(lo: f64, hi: f64, interior: usize) -> Result<Self> {
        if lo > hi {
            return domain(format!("empty control interval [{lo}, {hi}]"));
        }
        if lo == hi {
            return ControlSet::scalars(vec![lo]);
        }
        let cells = interior + 1;
        ControlSet::scalars(
            (0..=cells)
                .map(|i| lo + (hi - lo) * i as f64 / cells as f64)
                .collect(),
        )
    }

    /// Symmetric matrix controls; every supplied point is flagged extreme.
    pub fn matrices(dim: usize, points: Vec<Vec<f64>>) -> Result<Self> {
        if points.is_empty() {
            return domain("control set must be nonempty");
        }
        for p in &points {
            if p.len() != dim * dim {
                return domain(format!("control matrix needs {} entries", dim * dim));
            }
            for i in 0..dim {
                for j in 0..dim {
                    if (p[i * dim + j] - p[j * dim + i]).abs() > 1e-12 {
                        return domain("control matrix is not symmetric");
                    }
                }
            }
        }
        let extreme = vec![true; points.len()];
        Ok(ControlSet {
            dim,
            points,
            extreme,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn points(&self) -> &[Vec<f64>] {
        &self.points
    }

    pub fn scalar(&self, i: usize) -> f64 {
        self.points[i][0]
    }

    pub fn is_extreme(&self, i: usize) -> bool {
        self.extreme[i]
    }

    pub fn extremes(&self) -> ControlSet {
        let pts: Vec<Vec<f64>> = self
            .points
            .iter()
            .zip(&self.extreme)
            .filter(|(_, e)| **e)
            .map(|(p, _)| p.clone())
            .collect();
        let extreme = vec![true; pts.len()];
        ControlSet {
            dim: self.dim,
            points: pts,
            extreme,
        }
    }

    /// Scalar bounds `[min, max]` of a one-dimensional set.
    pub fn scalar_range(&self) -> (f64, f64) {
        (self.points[0][0], self.points[self.points.len() - 1][0])
    }

    /// Whether `q` lies in the convex hull of a scalar set, or equals a
    /// listed matrix within `tol`.
    pub fn admits(&self, q: &[f64], tol: f64) -> bool {
        if self.dim == 1 {
            let (lo, hi) = self.scalar_range();
            q.len() == 1 && q[0] >= lo - tol && q[0] <= hi + tol
        } else {
            self.points
                .iter()
                .any(|p| p.len() == q.len() && p.iter().zip(q).all(|(a, b)| (a - b).abs() <= tol))
        }
    }
}

/// One classical law on the real line with finitely many atoms.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FiniteLaw {
    pub values: Vec<f64>,
    pub weights: Vec<f64>,
}

impl FiniteLaw {
    pub fn new(values: Vec<f64>, weights: Vec<f64>) -> Result<Self> {
        if values.is_empty() || values.len() != weights.len() {
            return domain("finite law needs matching nonempty values and weights");
        }
        if weights.iter().any(|w| *w < 0.0 || !w.is_finite()) {
            return domain("finite law weights must be nonnegative");
        }
        let total: f64 = weights.iter().sum();
        if (total - 1.0).abs() > 1e-12 {
            return domain(format!("finite law weights sum to {total}"));
        }
        Ok(FiniteLaw { values, weights })
    }

    pub fn dirac(v: f64) -> Self {
        FiniteLaw {
            values: vec![v],
            weights: vec![1.0],
        }
    }

    pub fn mean(&self) -> f64 {
        self.values.iter().zip(&self.weights).map(|(v, w)| v * w).sum()
    }

    /// Three-point law matching the first five moments of `N(0, var)`.
    pub fn gauss_hermite3(var: f64) -> Self {
        let s = (3.0 * var).sqrt();
        if s == 0.0 {
            return FiniteLaw::dirac(0.0);
        }
        FiniteLaw {
            values: vec![-s, 0.0, s],
            weights: vec![1.0 / 6.0, 2.0 / 3.0, 1.0 / 6.0],
        }
    }
}

/// A control value together with the noise law it selects.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CustomControl {
    pub label: f64,
    pub law: FiniteLaw,
}

/// Law of one noise step as a function of the control.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum StepLaw {
    /// Maximal distribution on `[lo, hi]`: every control is a Dirac mass.
    Maximal {
        lo: f64,
        hi: f64,
        #[serde(default = "default_interior")]
        interior: usize,
    },
    /// G-normal law with variance uncertainty `[var_low, var_high]`.
    GNormal { var_low: f64, var_high: f64 },
    /// Explicit finite laws, one per control.
    Custom { controls: Vec<CustomControl> },
}

fn default_interior() -> usize {
    DEFAULT_MAXIMAL_INTERIOR
}

impl StepLaw {
    pub fn maximal(lo: f64, hi: f64) -> Result<Self> {
        StepLaw::maximal_with_interior(lo, hi, DEFAULT_MAXIMAL_INTERIOR)
    }

    pub fn maximal_with_interior(lo: f64, hi: f64, interior: usize) -> Result<Self> {
        let law = StepLaw::Maximal { lo, hi, interior };
        law.validate()?;
        Ok(law)
    }

    pub fn g_normal(var_low: f64, var_high: f64) -> Result<Self> {
        let law = StepLaw::GNormal { var_low, var_high };
        law.validate()?;
        Ok(law)
    }

    pub fn custom(controls: Vec<(f64, FiniteLaw)>) -> Result<Self> {
        let law = StepLaw::Custom {
            controls: controls
                .into_iter()
                .map(|(label, law)| CustomControl { label, law })
                .collect(),
        };
        law.validate()?;
        Ok(law)
    }

    /// Single classical law (no ambiguity).
    pub fn classical(law: FiniteLaw) -> Result<Self> {
        StepLaw::custom(vec![(0.0, law)])
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            StepLaw::Maximal { lo, hi, .. } => {
                GammaSet::interval(*lo, *hi)?;
            }
            StepLaw::GNormal { var_low, var_high } => {
                if !(*var_low >= 0.0 && var_low <= var_high && var_high.is_finite()) {
                    return domain(format!(
                        "G-normal needs 0 <= var_low <= var_high, got [{var_low}, {var_high}]"
                    ));
                }
            }
            StepLaw::Custom { controls } => {
                if controls.is_empty() {
                    return domain("custom step law needs at least one control");
                }
                for c in controls {
                    FiniteLaw::new(c.law.values.clone(), c.law.weights.clone())?;
                }
            }
        }
        Ok(())
    }

    pub fn control_set(&self) -> ControlSet {
        match self {
            StepLaw::Maximal { lo, hi, interior } => {
                ControlSet::interval(*lo, *hi, *interior).expect("validated")
            }
            StepLaw::GNormal { var_low, var_high } => {
                ControlSet::scalars(vec![*var_low, *var_high]).expect("validated")
            }
            StepLaw::Custom { controls } => {
                ControlSet::scalars(controls.iter().map(|c| c.label).collect()).expect("validated")
            }
        }
    }

    /// The maximal step's Γ.
    pub fn gamma(&self) -> Option<GammaSet> {
        match self {
            StepLaw::Maximal { lo, hi, .. } => GammaSet::interval(*lo, *hi).ok(),
            _ => None,
        }
    }

    /// One finite law per control.
    ///
    /// G-normal steps use the extreme variances only, each through a
    /// three-point moment-matched law.
    pub fn finite_laws(&self) -> Vec<FiniteLaw> {
        match self {
            StepLaw::Maximal { .. } => self
                .control_set()
                .points()
                .iter()
                .map(|p| FiniteLaw::dirac(p[0]))
                .collect(),
            StepLaw::GNormal { var_low, var_high } => {
                let mut laws = vec![FiniteLaw::gauss_hermite3(*var_low)];
                if var_high > var_low {
                    laws.push(FiniteLaw::gauss_hermite3(*var_high));
                }
                laws
            }
            StepLaw::Custom { controls } => controls.iter().map(|c| c.law.clone()).collect(),
        }
    }

    pub fn is_exact_finite(&self) -> bool {
        !matches!(self, StepLaw::GNormal { .. })
    }

    /// `(min, max)` of the noise support over all controls.
    pub fn support_range(&self) -> (f64, f64) {
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for law in self.finite_laws() {
            for v in law.values {
                lo = lo.min(v);
                hi = hi.max(v);
            }
        }
        (lo, hi)
    }

    /// `Ê[ξ]` and `-Ê[-ξ]` of one step.
    pub fn mean_bounds(&self) -> (f64, f64) {
        let means: Vec<f64> = self.finite_laws().iter().map(FiniteLaw::mean).collect();
        (
            means.iter().copied().fold(f64::INFINITY, f64::min),
            means.iter().copied().fold(f64::NEG_INFINITY, f64::max),
        )
    }
}

/// How an observation `X_k` reads the noises `ξ_k, ..., ξ_{k+lag}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum StateMap {
    /// `X_k = ξ_k`.
    Identity,
    /// `X_k = Σ_l coeffs[l] ξ_{k+l} + offset`.
    Linear {
        coeffs: Vec<f64>,
        #[serde(default)]
        offset: f64,
    },
    /// `X_k = a ξ_k + b ξ_{k+1} + c ξ_k ξ_{k+1} + offset`.
    Bilinear {
        a: f64,
        b: f64,
        c: f64,
        #[serde(default)]
        offset: f64,
    },
    /// Vector observation, one scalar map per coordinate.
    Components { maps: Vec<StateMap> },
}

impl StateMap {
    pub fn lag(&self) -> usize {
        match self {
            StateMap::Identity => 0,
            StateMap::Linear { coeffs, .. } => coeffs.len().saturating_sub(1),
            StateMap::Bilinear { .. } => 1,
            StateMap::Components { maps } => maps.iter().map(StateMap::lag).max().unwrap_or(0),
        }
    }

    pub fn dim(&self) -> usize {
        match self {
            StateMap::Components { maps } => maps.len(),
            _ => 1,
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            StateMap::Linear { coeffs, .. } if coeffs.is_empty() => {
                domain("linear state map needs at least one coefficient")
            }
            StateMap::Components { maps } => {
                if maps.is_empty() {
                    return domain("component map needs at least one coordinate");
                }
                for m in maps {
                    if matches!(m, StateMap::Components { .. }) {
                        return domain("component maps cannot nest");
                    }
                    m.validate()?;
                }
                Ok(())
            }
            _ => Ok(()),
        }
    }

    /// Evaluate on the window `ξ_k, ..., ξ_{k+lag}`.
    pub fn eval(&self, window: &[f64], out: &mut [f64]) {
        match self {
            StateMap::Components { maps } => {
                for (m, o) in maps.iter().zip(out.iter_mut()) {
                    *o = m.eval_scalar(window);
                }
            }
            _ => out[0] = self.eval_scalar(window),
        }
    }

    fn eval_scalar(&self, w: &[f64]) -> f64 {
        match self {
            StateMap::Identity => w[0],
            StateMap::Linear { coeffs, offset } => {
                coeffs.iter().zip(w).map(|(c, x)| c * x).sum::<f64>() + offset
            }
            StateMap::Bilinear { a, b, c, offset } => {
                a * w[0] + b * w[1] + c * w[0] * w[1] + offset
            }
            StateMap::Components { .. } => unreachable!("nested component map"),
        }
    }

    /// `(coeffs, offset)` of `<p, X_k>` when it is affine in the noises.
    pub fn affine_form(&self, p: &[f64]) -> Option<(Vec<f64>, f64)> {
        let lag = self.lag();
        let scalar = |m: &StateMap| -> Option<(Vec<f64>, f64)> {
            let mut c = vec![0.0; lag + 1];
            let off = match m {
                StateMap::Identity => {
                    c[0] = 1.0;
                    0.0
                }
                StateMap::Linear { coeffs, offset } => {
                    c[..coeffs.len()].copy_from_slice(coeffs);
                    *offset
                }
                StateMap::Bilinear { a, b, c: cc, offset } if *cc == 0.0 => {
                    c[0] = *a;
                    c[1] = *b;
                    *offset
                }
                _ => return None,
            };
            Some((c, off))
        };
        match self {
            StateMap::Components { maps } => {
                let mut coeffs = vec![0.0; lag + 1];
                let mut offset = 0.0;
                for (m, pi) in maps.iter().zip(p) {
                    let (c, o) = scalar(m)?;
                    for (acc, ci) in coeffs.iter_mut().zip(c) {
                        *acc += pi * ci;
                    }
                    offset += pi * o;
                }
                Some((coeffs, offset))
            }
            m => {
                let (c, o) = scalar(m)?;
                Some((c.iter().map(|x| x * p[0]).collect(), o * p[0]))
            }
        }
    }
}

/// Horizon-indexed observations of an i.i.d. controlled noise sequence.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SequentialModel {
    pub horizon: usize,
    pub step: StepLaw,
    pub map: StateMap,
}

impl SequentialModel {
    pub fn new(horizon: usize, step: StepLaw, map: StateMap) -> Result<Self> {
        if horizon == 0 {
            return domain("model horizon must be at least 1");
        }
        step.validate()?;
        map.validate()?;
        Ok(SequentialModel { horizon, step, map })
    }

    /// i.i.d. observations `X_k = ξ_k`.
    pub fn iid(horizon: usize, step: StepLaw) -> Result<Self> {
        SequentialModel::new(horizon, step, StateMap::Identity)
    }

    /// `X_k = -ξ_k (ξ_{k+1} + 2)` with `ξ` maximal on `[-1, 1]`.
    pub fn remark_smaller(horizon: usize) -> Result<Self> {
        SequentialModel::new(
            horizon,
            StepLaw::maximal(-1.0, 1.0)?,
            StateMap::Bilinear {
                a: -2.0,
                b: 0.0,
                c: -1.0,
                offset: 0.0,
            },
        )
    }

    /// `X_k = ξ_k + ξ_{k+1}` for an arbitrary step law.
    pub fn one_dependent(horizon: usize, step: StepLaw) -> Result<Self> {
        SequentialModel::new(
            horizon,
            step,
            StateMap::Linear {
                coeffs: vec![1.0, 1.0],
                offset: 0.0,
            },
        )
    }

    /// Zero-mean step with variance uncertainty: `±1` or `±2` with equal weights.
    pub fn zero_mean_step() -> StepLaw {
        StepLaw::custom(vec![
            (1.0, FiniteLaw::new(vec![-1.0, 1.0], vec![0.5, 0.5]).unwrap()),
            (4.0, FiniteLaw::new(vec![-2.0, 2.0], vec![0.5, 0.5]).unwrap()),
        ])
        .unwrap()
    }

    pub fn dim(&self) -> usize {
        self.map.dim()
    }

    pub fn lag(&self) -> usize {
        self.map.lag()
    }

    pub fn with_horizon(&self, horizon: usize) -> Result<Self> {
        SequentialModel::new(horizon, self.step.clone(), self.map.clone())
    }

    fn check_indices(&self, obs: &[usize]) -> Result<()> {
        if obs.is_empty() {
            return domain("at least one observation index is required");
        }
        if obs.windows(2).any(|w| w[0] >= w[1]) {
            return domain(format!("observation indices must increase strictly: {obs:?}"));
        }
        if obs[0] == 0 || *obs.last().unwrap() > self.horizon {
            return domain(format!(
                "observation indices {obs:?} outside 1..={}",
                self.horizon
            ));
        }
        Ok(())
    }

    /// `Ê[φ(X_{t_1}, ..., X_{t_m})]`; `φ` receives the observations
    /// concatenated in index order.
    pub fn eval_cylinder(&self, obs: &[usize], phi: &dyn Fn(&[f64]) -> f64) -> Result<f64> {
        self.check_indices(obs)?;
        engine::cylinder(self, obs, engine::Accumulate::Each, phi, DEFAULT_STATE_BUDGET)
    }

    /// `Ê[φ(Σ_{k ∈ obs} X_k)]` with `φ` applied to the raw sum.
    pub fn eval_sum(&self, obs: &[usize], phi: &dyn Fn(&[f64]) -> f64) -> Result<MeanExpectation> {
        self.check_indices(obs)?;
        if self.dim() == 1 {
            if let Some(r) = lattice::linear_sum(self, obs, &[1.0], &|s| phi(&[s]))? {
                return Ok(r);
            }
        }
        let value =
            engine::cylinder(self, obs, engine::Accumulate::Sum, phi, DEFAULT_STATE_BUDGET)?;
        Ok(MeanExpectation {
            value,
            mode: if self.step.is_exact_finite() {
                EvalMode::ExactStates
            } else {
                EvalMode::MomentMatched
            },
        })
    }

    /// `Ê[φ(S_n)]` with `S_n = (1/n) Σ_{k=1}^n X_k`.
    pub fn lln_expectation(&self, n: usize, phi: &dyn Fn(&[f64]) -> f64) -> Result<MeanExpectation> {
        if n == 0 {
            return domain("n must be positive");
        }
        if n > self.horizon {
            return domain(format!("n = {n} exceeds horizon {}", self.horizon));
        }
        let obs: Vec<usize> = (1..=n).collect();
        let inv = 1.0 / n as f64;
        let d = self.dim();
        self.eval_sum(&obs, &|s| {
            let mean: Vec<f64> = s[..d].iter().map(|v| v * inv).collect();
            phi(&mean)
        })
    }

    /// `Ê[<p, S>]` for `S` the average over `obs`.
    pub fn projected_mean(&self, obs: &[usize], p: &[f64]) -> Result<f64> {
        self.check_indices(obs)?;
        if p.len() != self.dim() {
            return domain(format!("direction has {} entries for dim {}", p.len(), self.dim()));
        }
        let inv = 1.0 / obs.len() as f64;
        let total = engine::additive(
            self,
            obs,
            &|x| x.iter().zip(p).map(|(a, b)| a * b).sum::<f64>(),
            DEFAULT_STATE_BUDGET,
        )?;
        Ok(total * inv)
    }
}
