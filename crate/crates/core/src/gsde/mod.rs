//! Dissipative G-SDEs
//! `dX = b(X) dt + Σ h_ij(X) d<B^i, B^j> + σ(X) dB`.
//!
//! Paths are simulated per control with the Euler scheme, `d<B>` replaced
//! by `q dt`. Sublinear expectations estimated from paths are maxima over a
//! finite policy family and therefore lower bounds; in one dimension a
//! backward lattice gives the Markov semigroup directly.

mod lattice;
mod stationary;

use std::fmt;
use std::io::Write;
use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dp::ControlSet;
use crate::error::{domain, Error, Result};
use crate::gbm::{mean_se, ControlCheck, PathEnsemble, Policy};
use crate::rng::{uniform_at, NoiseStream};

pub use lattice::{DpConfig, DpOperator};
pub use stationary::{
    invariance_decay_fit, non_independence_test, pullback_stationary, DecayFit, DecayRow,
    NonIndependence, PullbackConfig, StationaryEstimate,
};

/// `|X|` beyond which integration is declared to have blown up.
pub const BLOWUP: f64 = 1e8;

pub type Field = Arc<dyn Fn(&[f64], &mut [f64]) + Send + Sync>;
pub type PairField = Arc<dyn Fn(usize, usize, &[f64], &mut [f64]) + Send + Sync>;

/// Coefficients, ambiguity set and claimed dissipativity rate.
#[derive(Clone)]
pub struct GsdeModel {
    pub name: String,
    /// State dimension.
    pub n: usize,
    /// Noise dimension.
    pub d: usize,
    b: Field,
    h: Option<PairField>,
    /// `n × d`, row-major.
    sigma: Field,
    pub q: ControlSet,
    pub claimed_alpha: f64,
    pub kappa: f64,
    pub sigma_bound: f64,
}

impl fmt::Debug for GsdeModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("GsdeModel")
            .field("name", &self.name)
            .field("n", &self.n)
            .field("d", &self.d)
            .field("q", &self.q)
            .field("claimed_alpha", &self.claimed_alpha)
            .finish()
    }
}

/// Probe points for the finiteness and bound checks.
fn probe_points(n: usize) -> Vec<Vec<f64>> {
    let grid: Vec<f64> = (-20..=20).map(|i| i as f64 * 0.5).collect();
    if n == 1 {
        return grid.iter().map(|x| vec![*x]).collect();
    }
    let mut out = Vec::new();
    for (k, x) in grid.iter().enumerate() {
        for i in 0..n {
            let mut p = vec![0.0; n];
            p[i] = *x;
            p[(i + 1) % n] += grid[(k * 7) % grid.len()] * 0.5;
            out.push(p);
        }
    }
    out
}

impl GsdeModel {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        name: impl Into<String>,
        n: usize,
        d: usize,
        b: Field,
        h: Option<PairField>,
        sigma: Field,
        q: ControlSet,
        claimed_alpha: f64,
        sigma_bound: f64,
    ) -> Result<Self> {
        if n == 0 || d == 0 {
            return domain("state and noise dimensions must be positive");
        }
        if q.dim() != d {
            return domain(format!("control set has dim {} for noise dim {d}", q.dim()));
        }
        let m = GsdeModel {
            name: name.into(),
            n,
            d,
            b,
            h,
            sigma,
            q,
            claimed_alpha,
            kappa: 1.0,
            sigma_bound,
        };
        m.probe()?;
        Ok(m)
    }

    pub fn with_kappa(mut self, kappa: f64) -> Self {
        self.kappa = kappa;
        self
    }

    fn probe(&self) -> Result<()> {
        let mut bv = vec![0.0; self.n];
        let mut sv = vec![0.0; self.n * self.d];
        let mut hv = vec![0.0; self.n];
        for x in probe_points(self.n) {
            (self.b)(&x, &mut bv);
            (self.sigma)(&x, &mut sv);
            if bv.iter().chain(&sv).any(|v| !v.is_finite()) {
                return domain(format!("coefficients are not finite at {x:?}"));
            }
            let norm = sv.iter().map(|v| v * v).sum::<f64>().sqrt();
            if norm > self.sigma_bound + 1e-12 {
                return domain(format!(
                    "|σ({x:?})| = {norm} exceeds the declared bound {}",
                    self.sigma_bound
                ));
            }
            if let Some(h) = &self.h {
                for i in 0..self.d {
                    for j in 0..self.d {
                        h(i, j, &x, &mut hv);
                        let mut hw = vec![0.0; self.n];
                        h(j, i, &x, &mut hw);
                        if hv.iter().zip(&hw).any(|(a, b)| (a - b).abs() > 1e-12) {
                            return domain("h_ij must equal h_ji");
                        }
                    }
                }
            }
        }
        Ok(())
    }

    /// `dX = -a X dt + σ dB`, `Q = [q_low, q_high]`.
    pub fn gou(a: f64, sigma: f64, q_low: f64, q_high: f64) -> Result<Self> {
        GsdeModel::new(
            "gou",
            1,
            1,
            Arc::new(move |x, out| out[0] = -a * x[0]),
            None,
            Arc::new(move |_, out| out[0] = sigma),
            ControlSet::interval(q_low, q_high, 0)?,
            a,
            sigma.abs(),
        )
    }

    /// `dX = -(X + X³) dt + dB`, `Q = [q_low, q_high]`.
    pub fn cubic(q_low: f64, q_high: f64) -> Result<Self> {
        GsdeModel::new(
            "cubic",
            1,
            1,
            Arc::new(|x, out| out[0] = -(x[0] + x[0].powi(3))),
            None,
            Arc::new(|_, out| out[0] = 1.0),
            ControlSet::interval(q_low, q_high, 0)?,
            1.0,
            1.0,
        )
        .map(|m| m.with_kappa(3.0))
    }

    /// Scalar model from piecewise-linear coefficient tables.
    pub fn from_table(table: &CoefficientTable) -> Result<Self> {
        let b = table.drift.checked()?;
        let s = table.sigma.checked()?;
        let h = table.h.as_ref().map(PiecewiseLinear::checked).transpose()?;
        let bound = s.y.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        let sb = s.clone();
        let hf: Option<PairField> =
            h.map(|h| Arc::new(move |_, _, x: &[f64], out: &mut [f64]| out[0] = h.eval(x[0], true)) as PairField);
        GsdeModel::new(
            table.name.clone().unwrap_or_else(|| "custom".into()),
            1,
            1,
            Arc::new(move |x, out| out[0] = b.eval(x[0], true)),
            hf,
            Arc::new(move |x, out| out[0] = sb.eval(x[0], false)),
            ControlSet::interval(table.q_low, table.q_high, 0)?,
            table.alpha,
            bound,
        )
    }

    pub fn drift(&self, x: &[f64], out: &mut [f64]) {
        (self.b)(x, out)
    }

    pub fn diffusion(&self, x: &[f64], out: &mut [f64]) {
        (self.sigma)(x, out)
    }

    pub fn has_h(&self) -> bool {
        self.h.is_some()
    }

    pub fn h(&self, i: usize, j: usize, x: &[f64], out: &mut [f64]) {
        match &self.h {
            Some(h) => h(i, j, x, out),
            None => out.iter_mut().for_each(|v| *v = 0.0),
        }
    }

    /// `G(A) = ½ max_{q ∈ Q} tr(A q)` over the stored control points.
    pub fn g(&self, a: &[f64]) -> f64 {
        0.5 * self
            .q
            .points()
            .iter()
            .map(|q| a.iter().zip(q).map(|(x, y)| x * y).sum::<f64>())
            .fold(f64::NEG_INFINITY, f64::max)
    }

    /// Drift including the `h q` correction for control `c`.
    pub(crate) fn total_drift(&self, x: &[f64], c: &[f64], out: &mut [f64], scratch: &mut [f64]) {
        (self.b)(x, out);
        if let Some(h) = &self.h {
            for i in 0..self.d {
                for j in 0..self.d {
                    let qij = c[i * self.d + j];
                    if qij != 0.0 {
                        h(i, j, x, scratch);
                        for (o, v) in out.iter_mut().zip(scratch.iter()) {
                            *o += qij * v;
                        }
                    }
                }
            }
        }
    }

    /// Extreme constant controls, the default policy family.
    pub fn extreme_policies(&self) -> Vec<Policy> {
        Policy::extremes(&self.q)
    }
}

/// Piecewise-linear function through breakpoints.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PiecewiseLinear {
    pub x: Vec<f64>,
    pub y: Vec<f64>,
}

impl PiecewiseLinear {
    fn checked(&self) -> Result<PiecewiseLinear> {
        if self.x.len() < 2 || self.x.len() != self.y.len() {
            return domain("piecewise-linear table needs at least two matching breakpoints");
        }
        if self.x.windows(2).any(|w| w[0] >= w[1]) {
            return domain("breakpoints must increase strictly");
        }
        Ok(self.clone())
    }

    /// Linear interpolation; outside the breakpoints the end segments are
    /// extended when `extend` is set, otherwise the end values are held.
    pub fn eval(&self, x: f64, extend: bool) -> f64 {
        let n = self.x.len();
        let seg = if x <= self.x[0] {
            if !extend {
                return self.y[0];
            }
            0
        } else if x >= self.x[n - 1] {
            if !extend {
                return self.y[n - 1];
            }
            n - 2
        } else {
            self.x.partition_point(|v| *v <= x) - 1
        };
        let (x0, x1) = (self.x[seg], self.x[seg + 1]);
        let (y0, y1) = (self.y[seg], self.y[seg + 1]);
        y0 + (y1 - y0) * (x - x0) / (x1 - x0)
    }
}

/// Table-driven scalar model: drift and `h` extend linearly beyond their
/// breakpoints, `σ` is held constant.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CoefficientTable {
    #[serde(default)]
    pub name: Option<String>,
    pub drift: PiecewiseLinear,
    pub sigma: PiecewiseLinear,
    #[serde(default)]
    pub h: Option<PiecewiseLinear>,
    pub q_low: f64,
    pub q_high: f64,
    pub alpha: f64,
}

/// Result of the sampled dissipativity probe.
#[derive(Debug, Clone, PartialEq)]
pub struct DissipativityReport {
    /// `min -LHS / |x1 - x2|²` over the sampled pairs.
    pub min_margin: f64,
    pub worst: (Vec<f64>, Vec<f64>),
    pub pairs: usize,
    pub skipped: usize,
    pub claimed_alpha: f64,
    pub passes: bool,
}

/// Samples pairs uniformly in the ball of `radius` and evaluates the
/// dissipativity inequality with `G` maximized over the stored controls.
pub fn check_dissipativity(
    model: &GsdeModel,
    n_pairs: usize,
    radius: f64,
    seed: u64,
) -> Result<DissipativityReport> {
    if n_pairs == 0 {
        return domain("need at least one pair");
    }
    let (n, d) = (model.n, model.d);
    let sample = |stream: u64| -> Vec<f64> {
        let mut z = vec![0.0; n];
        let mut s = NoiseStream::new(seed, stream, 0, n);
        s.normals(&mut z);
        let norm = z.iter().map(|v| v * v).sum::<f64>().sqrt().max(1e-300);
        let r = radius * uniform_at(seed ^ 0x5eed, stream, 0).powf(1.0 / n as f64);
        z.iter().map(|v| v / norm * r).collect()
    };
    let mut min_margin = f64::INFINITY;
    let mut worst = (Vec::new(), Vec::new());
    let mut skipped = 0;
    let (mut b1, mut b2) = (vec![0.0; n], vec![0.0; n]);
    let (mut s1, mut s2) = (vec![0.0; n * d], vec![0.0; n * d]);
    let (mut h1, mut h2) = (vec![0.0; n], vec![0.0; n]);
    for k in 0..n_pairs {
        let x1 = sample(2 * k as u64);
        let x2 = sample(2 * k as u64 + 1);
        let dx: Vec<f64> = x1.iter().zip(&x2).map(|(a, b)| a - b).collect();
        let dist2: f64 = dx.iter().map(|v| v * v).sum();
        if dist2 < 1e-24 {
            skipped += 1;
            continue;
        }
        model.drift(&x1, &mut b1);
        model.drift(&x2, &mut b2);
        let mut lhs: f64 = dx.iter().zip(b1.iter().zip(&b2)).map(|(a, (p, q))| a * (p - q)).sum();
        model.diffusion(&x1, &mut s1);
        model.diffusion(&x2, &mut s2);
        let ds: Vec<f64> = s1.iter().zip(&s2).map(|(a, b)| a - b).collect();
        let mut a = vec![0.0; d * d];
        for i in 0..d {
            for j in 0..d {
                let mut v = 0.0;
                for r in 0..n {
                    v += ds[r * d + i] * ds[r * d + j];
                }
                if model.has_h() {
                    model.h(i, j, &x1, &mut h1);
                    model.h(i, j, &x2, &mut h2);
                    v += 2.0 * dx.iter().zip(h1.iter().zip(&h2)).map(|(x, (p, q))| x * (p - q)).sum::<f64>();
                }
                a[i * d + j] = v;
            }
        }
        lhs += model.g(&a);
        let margin = -lhs / dist2;
        if margin < min_margin {
            min_margin = margin;
            worst = (x1, x2);
        }
    }
    Ok(DissipativityReport {
        min_margin,
        worst,
        pairs: n_pairs - skipped,
        skipped,
        claimed_alpha: model.claimed_alpha,
        passes: min_margin >= model.claimed_alpha - 1e-9,
    })
}

/// One Euler step for all coordinates.
pub(crate) struct Stepper<'a> {
    model: &'a GsdeModel,
    drift: Vec<f64>,
    scratch: Vec<f64>,
    sig: Vec<f64>,
}

impl<'a> Stepper<'a> {
    pub(crate) fn new(model: &'a GsdeModel) -> Self {
        Stepper {
            model,
            drift: vec![0.0; model.n],
            scratch: vec![0.0; model.n],
            sig: vec![0.0; model.n * model.d],
        }
    }

    /// `x ← x + (b + h q) dt + σ √q z √dt`.
    pub(crate) fn step(&mut self, x: &mut [f64], c: &[f64], root: &[f64], z: &[f64], dt: f64) {
        let (n, d) = (self.model.n, self.model.d);
        self.model.total_drift(x, c, &mut self.drift, &mut self.scratch);
        self.model.diffusion(x, &mut self.sig);
        let sq = dt.sqrt();
        for r in 0..n {
            let mut noise = 0.0;
            for j in 0..d {
                let mut w = 0.0;
                for k in 0..d {
                    w += root[j * d + k] * z[k];
                }
                noise += self.sig[r * d + j] * w;
            }
            x[r] += self.drift[r] * dt + noise * sq;
        }
    }
}

/// Where each step draws its noise.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum NoiseIds {
    /// Step `k` uses noise id `offset + k`.
    Forward(u64),
    /// Path of `n` steps ending at time 0: step `k` uses id `n - 1 - k`, so
    /// the last step before 0 always draws id 0.
    Pullback,
}

/// Euler path of one trajectory; `observe(k, x)` sees the state after `k` steps.
#[allow(clippy::too_many_arguments)]
pub(crate) fn run_path(
    model: &GsdeModel,
    policy: &Policy,
    x0: &[f64],
    t0: f64,
    dt: f64,
    n_steps: usize,
    seed: u64,
    path: u64,
    ids: NoiseIds,
    mut observe: impl FnMut(usize, &[f64]),
) -> Result<Vec<f64>> {
    let d = model.d;
    let mut check = ControlCheck::new(&model.q);
    let mut stepper = Stepper::new(model);
    let mut x = x0.to_vec();
    let mut z = vec![0.0; d];
    let noise_block: Option<Vec<f64>> = match ids {
        NoiseIds::Pullback => {
            let mut s = NoiseStream::new(seed, path, 0, d);
            let mut all = vec![0.0; n_steps * d];
            for chunk in all.chunks_mut(d) {
                s.normals(chunk);
            }
            Some(all)
        }
        NoiseIds::Forward(_) => None,
    };
    let mut stream = match ids {
        NoiseIds::Forward(off) => Some(NoiseStream::new(seed, path, off, d)),
        NoiseIds::Pullback => None,
    };
    let fixed = match policy {
        Policy::Constant(c) => Some((c.clone(), check.root(c)?.to_vec())),
        _ => None,
    };
    let mut owned: (Vec<f64>, Vec<f64>);
    observe(0, &x);
    for k in 0..n_steps {
        let (c, root) = match &fixed {
            Some((fc, fr)) => (fc, fr),
            None => {
                let c = policy.control(t0 + k as f64 * dt, &x);
                let root = check.root(&c)?.to_vec();
                owned = (c, root);
                (&owned.0, &owned.1)
            }
        };
        match (&mut stream, &noise_block) {
            (Some(s), _) => s.normals(&mut z),
            (None, Some(block)) => {
                let id = n_steps - 1 - k;
                z.copy_from_slice(&block[id * d..(id + 1) * d]);
            }
            _ => unreachable!(),
        }
        stepper.step(&mut x, c, root, &z, dt);
        let mag = x.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        if !(mag <= BLOWUP) {
            return Err(Error::Integration {
                step: k + 1,
                magnitude: mag,
            });
        }
        observe(k + 1, &x);
    }
    Ok(x)
}

fn step_count(dt: f64, horizon: f64) -> Result<usize> {
    if !(dt > 0.0) || !(horizon >= 0.0) {
        return domain(format!("need dt > 0 and T >= 0, got dt = {dt}, T = {horizon}"));
    }
    Ok((horizon / dt).round() as usize)
}

/// Euler ensemble from `x0` over `[0, T]` under `policy`.
pub fn integrate(
    model: &GsdeModel,
    policy: &Policy,
    x0: &[f64],
    dt: f64,
    horizon: f64,
    n_paths: usize,
    seed: u64,
) -> Result<PathEnsemble> {
    if x0.len() != model.n {
        return domain(format!("x0 has {} entries for state dim {}", x0.len(), model.n));
    }
    if n_paths == 0 {
        return domain("need at least one path");
    }
    let n_steps = step_count(dt, horizon)?;
    let n = model.n;
    let per: Vec<Result<(Vec<f64>, Vec<f64>)>> = (0..n_paths)
        .into_par_iter()
        .map(|p| {
            let mut vals = Vec::with_capacity((n_steps + 1) * n);
            let mut ctrl = Vec::with_capacity(n_steps * model.d * model.d);
            let mut last = x0.to_vec();
            run_path(model, policy, x0, 0.0, dt, n_steps, seed, p as u64, NoiseIds::Forward(0), |k, x| {
                vals.extend_from_slice(x);
                if k > 0 {
                    ctrl.extend(policy.control((k - 1) as f64 * dt, &last));
                }
                last.copy_from_slice(x);
            })?;
            Ok((vals, ctrl))
        })
        .collect();
    let mut values = Vec::with_capacity(n_paths * (n_steps + 1) * n);
    let mut controls = Vec::new();
    for r in per {
        let (v, c) = r?;
        values.extend(v);
        controls.extend(c);
    }
    Ok(PathEnsemble {
        dt,
        dim: n,
        n_steps,
        seed,
        values,
        controls,
        control_len: model.d * model.d,
    })
}

/// Evaluation route for `T_t φ(x)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum MarkovMethod {
    /// Backward lattice, `n = d = 1` only.
    Dp(DpConfig),
    /// Max over the extreme constant controls of Monte Carlo means.
    PolicyMax { dt: f64, n_paths: usize, seed: u64 },
}

/// `T_t φ(x)` with its standard error (zero for the lattice) and whether
/// the value is only a lower bound.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MarkovValue {
    pub value: f64,
    pub se: f64,
    pub lower_bound: bool,
}

/// `T_t φ(x) = Ê[φ(X_t^x)]`.
pub fn markov_t(
    model: &GsdeModel,
    t: f64,
    phi: &(dyn Fn(&[f64]) -> f64 + Sync),
    x: &[f64],
    method: MarkovMethod,
) -> Result<MarkovValue> {
    if t < 0.0 {
        return domain("t must be nonnegative");
    }
    if t == 0.0 {
        return Ok(MarkovValue {
            value: phi(x),
            se: 0.0,
            lower_bound: false,
        });
    }
    match method {
        MarkovMethod::Dp(cfg) => {
            let op = DpOperator::new(model, cfg, &[x[0]])?;
            let values = op.evolve(&op.sample(&|y| phi(&[y])), t);
            Ok(MarkovValue {
                value: op.interpolate(&values, x[0]),
                se: 0.0,
                lower_bound: false,
            })
        }
        MarkovMethod::PolicyMax { dt, n_paths, seed } => {
            let mut best = (f64::NEG_INFINITY, 0.0);
            for policy in model.extreme_policies() {
                let ens = integrate(model, &policy, x, dt, t, n_paths, seed)?;
                let vals: Vec<f64> = (0..n_paths).map(|i| phi(ens.terminal(i))).collect();
                let (m, se) = mean_se(&vals);
                if m > best.0 {
                    best = (m, se);
                }
            }
            Ok(MarkovValue {
                value: best.0,
                se: best.1,
                lower_bound: true,
            })
        }
    }
}

/// Coupled contraction ratio for one control policy at one time.
#[derive(Debug, Clone, PartialEq)]
pub struct ContractionRow {
    pub t: f64,
    pub policy: String,
    pub ratio: f64,
    pub se: f64,
    /// `e^{-2αt}` with the claimed rate.
    pub bound: f64,
}

impl ContractionRow {
    /// `ratio <= bound (1 + 3 SE)`, the SE taken relative to the ratio.
    pub fn within_bound(&self) -> bool {
        let rel = if self.ratio > 0.0 { self.se / self.ratio } else { 0.0 };
        self.ratio <= self.bound * (1.0 + 3.0 * rel) + 1e-12
    }
}

/// `mean |X_t^x - X_t^y|² / |x - y|²` with shared noise and shared control,
/// per policy. The control is computed from the `x` trajectory.
#[allow(clippy::too_many_arguments)]
pub fn contraction_test(
    model: &GsdeModel,
    x: &[f64],
    y: &[f64],
    t_grid: &[f64],
    policies: &[Policy],
    dt: f64,
    n_paths: usize,
    seed: u64,
) -> Result<Vec<ContractionRow>> {
    let dist2: f64 = x.iter().zip(y).map(|(a, b)| (a - b).powi(2)).sum();
    if dist2 == 0.0 {
        return domain("contraction test needs x != y");
    }
    if x.len() != model.n || y.len() != model.n {
        return domain("start points must match the state dimension");
    }
    if n_paths == 0 || t_grid.is_empty() {
        return domain("need paths and a nonempty t grid");
    }
    let marks: Vec<usize> = t_grid
        .iter()
        .map(|t| step_count(dt, *t))
        .collect::<Result<_>>()?;
    let n_steps = *marks.iter().max().unwrap();
    let d = model.d;
    let mut rows = Vec::new();
    for policy in policies {
        let per: Vec<Result<Vec<f64>>> = (0..n_paths)
            .into_par_iter()
            .map(|p| {
                let mut check = ControlCheck::new(&model.q);
                let mut sx = Stepper::new(model);
                let mut sy = Stepper::new(model);
                let mut a = x.to_vec();
                let mut b = y.to_vec();
                let mut z = vec![0.0; d];
                let mut noise = NoiseStream::new(seed, p as u64, 0, d);
                let mut out = vec![f64::NAN; marks.len()];
                for k in 0..=n_steps {
                    for (slot, &m) in out.iter_mut().zip(&marks) {
                        if m == k {
                            *slot = a.iter().zip(&b).map(|(u, v)| (u - v).powi(2)).sum::<f64>() / dist2;
                        }
                    }
                    if k == n_steps {
                        break;
                    }
                    let c = policy.control(k as f64 * dt, &a);
                    let root = check.root(&c)?.to_vec();
                    noise.normals(&mut z);
                    sx.step(&mut a, &c, &root, &z, dt);
                    sy.step(&mut b, &c, &root, &z, dt);
                    if a.iter().chain(&b).any(|v| !(v.abs() <= BLOWUP)) {
                        return Err(Error::Integration {
                            step: k + 1,
                            magnitude: f64::INFINITY,
                        });
                    }
                }
                Ok(out)
            })
            .collect();
        let mut cols: Vec<Vec<f64>> = vec![Vec::with_capacity(n_paths); marks.len()];
        for r in per {
            for (c, v) in cols.iter_mut().zip(r?) {
                c.push(v);
            }
        }
        for (i, &t) in t_grid.iter().enumerate() {
            let (m, se) = mean_se(&cols[i]);
            rows.push(ContractionRow {
                t,
                policy: policy.label(),
                ratio: m,
                se: if se.is_finite() { se } else { 0.0 },
                bound: (-2.0 * model.claimed_alpha * t).exp(),
            });
        }
    }
    Ok(rows)
}

/// `t,gap,se` rows.
pub fn write_decay_csv<W: Write>(rows: &[DecayRow], mut w: W) -> std::io::Result<()> {
    writeln!(w, "t,gap,se")?;
    for r in rows {
        writeln!(w, "{},{},{}", r.t, r.gap, r.se)?;
    }
    Ok(())
}
