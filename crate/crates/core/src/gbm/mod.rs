//! G-Brownian motion through its control representation `B_t = ∫ √η_s dW_s`.

mod cache;

use std::fmt;
use std::io::Write;
use std::sync::Arc;

use nalgebra::{DMatrix, SymmetricEigen};
use rayon::prelude::*;

use crate::dp::ControlSet;
use crate::error::{domain, Result};
use crate::rng::NoiseStream;

pub use cache::{read_cache, write_cache, CACHE_MAGIC, CACHE_VERSION};

/// Tolerance on negative eigenvalues of a control matrix.
pub const PSD_TOL: f64 = 1e-12;

/// Symmetric square root of a `dim × dim` control (row-major) with
/// eigenvalues clamped at zero.
pub fn sqrt_psd(q: &[f64], dim: usize) -> Result<Vec<f64>> {
    if dim == 1 {
        if q[0] < -PSD_TOL {
            return domain(format!("control {} is negative", q[0]));
        }
        return Ok(vec![q[0].max(0.0).sqrt()]);
    }
    let m = DMatrix::from_row_slice(dim, dim, q);
    let eig = SymmetricEigen::new(m);
    if let Some(l) = eig.eigenvalues.iter().find(|l| **l < -PSD_TOL) {
        return domain(format!("control matrix is not PSD (eigenvalue {l})"));
    }
    let root = DMatrix::from_diagonal(&eig.eigenvalues.map(|l| l.max(0.0).sqrt()));
    let s = &eig.eigenvectors * root * eig.eigenvectors.transpose();
    let mut out = Vec::with_capacity(dim * dim);
    for i in 0..dim {
        for j in 0..dim {
            out.push(s[(i, j)]);
        }
    }
    Ok(out)
}

/// Control policy: the control used on `[t_k, t_k + dt)` is a function of
/// `t_k` and the state at `t_k`, hence adapted.
#[derive(Clone)]
pub enum Policy {
    Constant(Vec<f64>),
    /// `values[i]` applies from `breakpoints[i]` until the next breakpoint.
    Schedule {
        breakpoints: Vec<f64>,
        values: Vec<Vec<f64>>,
    },
    /// `high` while `state[coordinate] > threshold`, `low` otherwise.
    BangBang {
        low: Vec<f64>,
        high: Vec<f64>,
        coordinate: usize,
        threshold: f64,
    },
    Feedback(Arc<dyn Fn(f64, &[f64]) -> Vec<f64> + Send + Sync>),
}

impl fmt::Debug for Policy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.label())
    }
}

impl Policy {
    pub fn constant_scalar(q: f64) -> Self {
        Policy::Constant(vec![q])
    }

    pub fn label(&self) -> String {
        match self {
            Policy::Constant(q) => format!("constant{q:?}"),
            Policy::Schedule { breakpoints, .. } => format!("schedule{breakpoints:?}"),
            Policy::BangBang {
                coordinate,
                threshold,
                ..
            } => format!("bang-bang(x{coordinate} > {threshold})"),
            Policy::Feedback(_) => "feedback".into(),
        }
    }

    pub fn control(&self, t: f64, state: &[f64]) -> Vec<f64> {
        match self {
            Policy::Constant(q) => q.clone(),
            Policy::Schedule {
                breakpoints,
                values,
            } => {
                let i = breakpoints
                    .iter()
                    .rposition(|b| *b <= t + 1e-12)
                    .unwrap_or(0);
                values[i].clone()
            }
            Policy::BangBang {
                low,
                high,
                coordinate,
                threshold,
            } => {
                if state[*coordinate] > *threshold {
                    high.clone()
                } else {
                    low.clone()
                }
            }
            Policy::Feedback(f) => f(t, state),
        }
    }

    /// Constant policies at every extreme point of `q`.
    pub fn extremes(q: &ControlSet) -> Vec<Policy> {
        q.extremes()
            .points()
            .iter()
            .map(|p| Policy::Constant(p.clone()))
            .collect()
    }
}

/// Control values are checked against `q` once per distinct value.
pub(crate) struct ControlCheck<'a> {
    q: &'a ControlSet,
    dim: usize,
    last: Vec<f64>,
    root: Vec<f64>,
}

impl<'a> ControlCheck<'a> {
    pub(crate) fn new(q: &'a ControlSet) -> Self {
        ControlCheck {
            q,
            dim: q.dim(),
            last: Vec::new(),
            root: Vec::new(),
        }
    }

    /// Square root of an admissible control.
    pub(crate) fn root(&mut self, c: &[f64]) -> Result<&[f64]> {
        if c != self.last.as_slice() {
            if c.len() != self.dim * self.dim || !self.q.admits(c, 1e-12) {
                return domain(format!("policy control {c:?} lies outside Q"));
            }
            self.root = sqrt_psd(c, self.dim)?;
            self.last = c.to_vec();
        }
        Ok(&self.root)
    }
}

/// Seeded batch of simulated paths with their control records.
#[derive(Debug, Clone, PartialEq)]
pub struct PathEnsemble {
    pub dt: f64,
    pub dim: usize,
    pub n_steps: usize,
    pub seed: u64,
    /// `[path][point][coordinate]`, `n_steps + 1` points per path.
    pub values: Vec<f64>,
    /// `[path][step][control entry]`; empty when not recorded.
    pub controls: Vec<f64>,
    pub control_len: usize,
}

impl PathEnsemble {
    pub fn n_paths(&self) -> usize {
        self.values.len() / ((self.n_steps + 1) * self.dim)
    }

    pub fn n_points(&self) -> usize {
        self.n_steps + 1
    }

    pub fn horizon(&self) -> f64 {
        self.dt * self.n_steps as f64
    }

    fn stride(&self) -> usize {
        (self.n_steps + 1) * self.dim
    }

    pub fn point(&self, path: usize, k: usize) -> &[f64] {
        let base = path * self.stride() + k * self.dim;
        &self.values[base..base + self.dim]
    }

    pub fn terminal(&self, path: usize) -> &[f64] {
        self.point(path, self.n_steps)
    }

    pub fn path(&self, i: usize) -> Path {
        let s = self.stride();
        Path {
            dt: self.dt,
            dim: self.dim,
            values: Arc::new(self.values[i * s..(i + 1) * s].to_vec()),
            origin: 0,
        }
    }

    pub fn control(&self, path: usize, k: usize) -> &[f64] {
        let base = (path * self.n_steps + k) * self.control_len;
        &self.controls[base..base + self.control_len]
    }

    /// `path,time,value` rows (`value_0, value_1, ...` when `dim > 1`).
    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        if self.dim == 1 {
            writeln!(w, "path,time,value")?;
        } else {
            let cols: Vec<String> = (0..self.dim).map(|i| format!("value_{i}")).collect();
            writeln!(w, "path,time,{}", cols.join(","))?;
        }
        for p in 0..self.n_paths() {
            for k in 0..self.n_points() {
                let vals: Vec<String> = self.point(p, k).iter().map(f64::to_string).collect();
                writeln!(w, "{p},{},{}", k as f64 * self.dt, vals.join(","))?;
            }
        }
        Ok(())
    }
}

/// One path seen from a moving origin: `value(j) = ω(origin + j) - ω(origin)`.
///
/// Shifts only move the origin, so `θ_s ∘ θ_t = θ_{s+t}` holds bit for bit.
#[derive(Debug, Clone, PartialEq)]
pub struct Path {
    pub dt: f64,
    pub dim: usize,
    values: Arc<Vec<f64>>,
    origin: usize,
}

impl Path {
    pub fn new(dt: f64, dim: usize, values: Vec<f64>) -> Result<Self> {
        if dim == 0 || values.is_empty() || values.len() % dim != 0 {
            return domain("path values must hold whole points");
        }
        Ok(Path {
            dt,
            dim,
            values: Arc::new(values),
            origin: 0,
        })
    }

    pub fn len(&self) -> usize {
        self.values.len() / self.dim - self.origin
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn horizon(&self) -> f64 {
        (self.len() - 1) as f64 * self.dt
    }

    /// Coordinate `i` at point `j`.
    pub fn value(&self, j: usize, i: usize) -> f64 {
        let a = self.values[(self.origin + j) * self.dim + i];
        if self.origin == 0 {
            a
        } else {
            a - self.values[self.origin * self.dim + i]
        }
    }

    /// Value at time `t`, which must be a grid time.
    pub fn at(&self, t: f64, i: usize) -> f64 {
        self.value((t / self.dt).round() as usize, i)
    }

    pub fn points(&self) -> Vec<f64> {
        (0..self.len())
            .flat_map(|j| (0..self.dim).map(move |i| (j, i)))
            .map(|(j, i)| self.value(j, i))
            .collect()
    }
}

/// `θ_t ω(·) = ω(· + t) - ω(t)`; `t` must be a multiple of `dt`.
pub fn theta_shift(path: &Path, t: f64) -> Result<Path> {
    let k = t / path.dt;
    if t < 0.0 || (k - k.round()).abs() > 1e-9 {
        return domain(format!("shift {t} is not a nonnegative multiple of dt = {}", path.dt));
    }
    let k = k.round() as usize;
    if k >= path.len() {
        return domain(format!("shift {t} beyond path horizon {}", path.horizon()));
    }
    Ok(Path {
        dt: path.dt,
        dim: path.dim,
        values: path.values.clone(),
        origin: path.origin + k,
    })
}

/// Running `Σ ΔB^i ΔB^j`, one `dim × dim` block per point.
pub fn quadratic_variation(path: &Path) -> Result<Vec<f64>> {
    if path.len() < 2 {
        return domain("quadratic variation needs at least two points");
    }
    let d = path.dim;
    let mut out = vec![0.0; path.len() * d * d];
    let mut inc = vec![0.0; d];
    for j in 1..path.len() {
        for (i, v) in inc.iter_mut().enumerate() {
            *v = path.value(j, i) - path.value(j - 1, i);
        }
        let (prev, cur) = out.split_at_mut(j * d * d);
        let prev = &prev[(j - 1) * d * d..];
        for a in 0..d {
            for b in 0..d {
                cur[a * d + b] = prev[a * d + b] + inc[a] * inc[b];
            }
        }
    }
    Ok(out)
}

fn step_count(dt: f64, horizon: f64) -> Result<usize> {
    if !(dt > 0.0) || !(horizon >= dt) {
        return domain(format!("need dt > 0 and T >= dt, got dt = {dt}, T = {horizon}"));
    }
    Ok((horizon / dt).round() as usize)
}

/// Simulate `B^η_t = Σ √q_k ΔW_k` under `policy`, recording the controls.
pub fn simulate_gbm(
    policy: &Policy,
    q: &ControlSet,
    dt: f64,
    horizon: f64,
    n_paths: usize,
    seed: u64,
) -> Result<PathEnsemble> {
    let n_steps = step_count(dt, horizon)?;
    if n_paths == 0 {
        return domain("need at least one path");
    }
    let d = q.dim();
    let sq = dt.sqrt();
    let per_path: Vec<Result<(Vec<f64>, Vec<f64>)>> = (0..n_paths)
        .into_par_iter()
        .map(|p| {
            let mut check = ControlCheck::new(q);
            let mut noise = NoiseStream::new(seed, p as u64, 0, d);
            let mut vals = vec![0.0; (n_steps + 1) * d];
            let mut ctrl = Vec::with_capacity(n_steps * d * d);
            let mut z = vec![0.0; d];
            for k in 0..n_steps {
                let (head, tail) = vals.split_at_mut((k + 1) * d);
                let x = &head[k * d..];
                let c = policy.control(k as f64 * dt, x);
                let root = check.root(&c)?;
                noise.normals(&mut z);
                for i in 0..d {
                    let mut inc = 0.0;
                    for j in 0..d {
                        inc += root[i * d + j] * z[j];
                    }
                    tail[i] = x[i] + inc * sq;
                }
                ctrl.extend_from_slice(&c);
            }
            Ok((vals, ctrl))
        })
        .collect();
    let mut values = Vec::with_capacity(n_paths * (n_steps + 1) * d);
    let mut controls = Vec::with_capacity(n_paths * n_steps * d * d);
    for r in per_path {
        let (v, c) = r?;
        values.extend(v);
        controls.extend(c);
    }
    Ok(PathEnsemble {
        dt,
        dim: d,
        n_steps,
        seed,
        values,
        controls,
        control_len: d * d,
    })
}

/// Sample mean and standard error.
pub fn mean_se(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let m = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (m, f64::INFINITY);
    }
    let v = xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1.0);
    (m, (v / n).sqrt())
}

/// Best Monte Carlo mean of `φ(B_T)` over a finite policy family.
#[derive(Debug, Clone, PartialEq)]
pub struct PolicyMax {
    pub value: f64,
    pub se: f64,
    pub best: usize,
    pub per_policy: Vec<(f64, f64)>,
}

/// `max_policy mean[φ(B_T)]`, a lower bound for `Ê[φ(B_T)]` up to MC error.
pub fn policy_max(
    policies: &[Policy],
    q: &ControlSet,
    phi: &(dyn Fn(&[f64]) -> f64 + Sync),
    horizon: f64,
    dt: f64,
    n_paths: usize,
    seed: u64,
) -> Result<PolicyMax> {
    if policies.is_empty() {
        return domain("policy family is empty");
    }
    let mut per_policy = Vec::new();
    for p in policies {
        let ens = simulate_gbm(p, q, dt, horizon, n_paths, seed)?;
        let xs: Vec<f64> = (0..n_paths).map(|i| phi(ens.terminal(i))).collect();
        per_policy.push(mean_se(&xs));
    }
    let best = per_policy
        .iter()
        .enumerate()
        .fold(0, |b, (i, v)| if v.0 > per_policy[b].0 { i } else { b });
    Ok(PolicyMax {
        value: per_policy[best].0,
        se: per_policy[best].1,
        best,
        per_policy,
    })
}

/// Covariance estimate `Ĉ(t)` with its standard error.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CovarianceRow {
    pub t: f64,
    pub cov: f64,
    pub se: f64,
}

/// `Ĉ(t) = mean[X∘θ_t · Y] - mean[X∘θ_t]·mean[Y]` for functionals on the
/// window `[0, w]`, under a constant control `q`.
///
/// Paths are simulated one at a time and only the functionals are kept.
pub fn bm_mixing_estimate(
    x: &(dyn Fn(&Path) -> f64 + Sync),
    y: &(dyn Fn(&Path) -> f64 + Sync),
    window: f64,
    t_grid: &[f64],
    q: f64,
    dt: f64,
    n_paths: usize,
    seed: u64,
) -> Result<Vec<CovarianceRow>> {
    if t_grid.is_empty() || n_paths < 2 {
        return domain("need a nonempty t grid and at least two paths");
    }
    if q < 0.0 {
        return domain("variance control must be nonnegative");
    }
    let t_max = t_grid.iter().copied().fold(0.0, f64::max);
    let n_steps = step_count(dt, t_max + window)?;
    let sq = (q * dt).sqrt();
    let samples: Vec<Result<(f64, Vec<f64>)>> = (0..n_paths)
        .into_par_iter()
        .map(|p| {
            let mut noise = NoiseStream::new(seed, p as u64, 0, 1);
            let mut vals = vec![0.0; n_steps + 1];
            let mut z = [0.0];
            for k in 0..n_steps {
                noise.normals(&mut z);
                vals[k + 1] = vals[k] + sq * z[0];
            }
            let path = Path::new(dt, 1, vals)?;
            let yv = y(&path);
            let xs = t_grid
                .iter()
                .map(|&t| theta_shift(&path, t).map(|s| x(&s)))
                .collect::<Result<Vec<f64>>>()?;
            Ok((yv, xs))
        })
        .collect();
    let mut ys = Vec::with_capacity(n_paths);
    let mut xs: Vec<Vec<f64>> = vec![Vec::with_capacity(n_paths); t_grid.len()];
    for s in samples {
        let (yv, xv) = s?;
        ys.push(yv);
        for (col, v) in xs.iter_mut().zip(xv) {
            col.push(v);
        }
    }
    let n = n_paths as f64;
    let my = ys.iter().sum::<f64>() / n;
    Ok(t_grid
        .iter()
        .zip(&xs)
        .map(|(&t, col)| {
            let mx = col.iter().sum::<f64>() / n;
            let prods: Vec<f64> = col
                .iter()
                .zip(&ys)
                .map(|(a, b)| (a - mx) * (b - my))
                .collect();
            let (c, se) = mean_se(&prods);
            CovarianceRow {
                t,
                cov: c * n / (n - 1.0),
                se,
            }
        })
        .collect())
}
