//! Pullback stationary solution, invariant expectation and the tests built on it.

use rayon::prelude::*;

use super::{run_path, step_count, GsdeModel, MarkovMethod, NoiseIds};
use crate::error::{domain, Result};
use crate::gbm::{mean_se, Policy};

pub type Observable<'a> = (&'a str, &'a (dyn Fn(&[f64]) -> f64 + Sync));

#[derive(Debug, Clone, PartialEq)]
pub struct PullbackConfig {
    pub dt: f64,
    pub n_paths: usize,
    pub seed: u64,
    /// Increasing horizons; empty means burn-in from the contraction rate,
    /// then three doublings.
    pub schedule: Vec<f64>,
    pub tol: f64,
    pub x0: Vec<f64>,
}

impl PullbackConfig {
    pub fn new(n: usize, dt: f64, n_paths: usize, seed: u64) -> Self {
        PullbackConfig {
            dt,
            n_paths,
            seed,
            schedule: Vec::new(),
            tol: 1e-3,
            x0: vec![0.0; n],
        }
    }

    /// `T` with `e^{-αT}|x0| < tol/10`, at least 1.
    pub fn burn_in(&self, alpha: f64) -> f64 {
        let x0 = self.x0.iter().map(|v| v * v).sum::<f64>().sqrt();
        if alpha <= 0.0 || x0 == 0.0 {
            return 1.0;
        }
        ((10.0 * x0 / self.tol).ln() / alpha).max(1.0)
    }

    fn horizons(&self, alpha: f64) -> Vec<f64> {
        if !self.schedule.is_empty() {
            return self.schedule.clone();
        }
        let t0 = self.burn_in(alpha);
        (0..4).map(|k| t0 * f64::powi(2.0, k)).collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StationaryEstimate {
    pub functions: Vec<String>,
    pub horizons: Vec<f64>,
    /// Horizon of the final ensemble.
    pub horizon: f64,
    pub converged: bool,
    /// Gap between successive summaries; one fewer than `horizons`.
    pub cauchy_gaps: Vec<f64>,
    pub policies: Vec<String>,
    /// `[policy][function]` mean and SE at the final horizon.
    pub means: Vec<Vec<(f64, f64)>>,
    /// `T̃[φ]` per function: max over policies, with the SE of the maximizer.
    pub values: Vec<(f64, f64)>,
    /// `[policy]` terminal states, flattened.
    pub samples: Vec<Vec<f64>>,
    pub dim: usize,
}

impl StationaryEstimate {
    pub fn value(&self, name: &str) -> Option<(f64, f64)> {
        self.functions.iter().position(|f| f == name).map(|i| self.values[i])
    }

    /// `max_policy mean[f(ξ)]` over the stored terminal samples.
    pub fn apply(&self, f: &(dyn Fn(&[f64]) -> f64 + Sync)) -> (f64, f64) {
        let mut best = (f64::NEG_INFINITY, 0.0);
        for s in &self.samples {
            let v: Vec<f64> = s.chunks(self.dim).map(f).collect();
            let (m, se) = mean_se(&v);
            if m > best.0 {
                best = (m, se);
            }
        }
        best
    }
}

/// Terminal states at time 0 of paths started at `-T` from `x0`; the noise
/// of the step ending at 0 is shared across horizons.
fn pullback_terminals(
    model: &GsdeModel,
    policy: &Policy,
    cfg: &PullbackConfig,
    horizon: f64,
) -> Result<Vec<f64>> {
    let n_steps = step_count(cfg.dt, horizon)?;
    let per: Vec<Result<Vec<f64>>> = (0..cfg.n_paths)
        .into_par_iter()
        .map(|p| {
            run_path(
                model,
                policy,
                &cfg.x0,
                -horizon,
                cfg.dt,
                n_steps,
                cfg.seed,
                p as u64,
                NoiseIds::Pullback,
                |_, _| {},
            )
        })
        .collect();
    let mut out = Vec::with_capacity(cfg.n_paths * model.n);
    for r in per {
        out.extend(r?);
    }
    Ok(out)
}

/// Runs the horizon schedule until successive summaries (per-policy means
/// of every φ) differ by less than `tol`. Values are lower bounds for the
/// invariant expectation over the extreme constant controls.
pub fn pullback_stationary(
    model: &GsdeModel,
    phis: &[Observable],
    cfg: &PullbackConfig,
) -> Result<StationaryEstimate> {
    if phis.is_empty() {
        return domain("register at least one observable");
    }
    if cfg.n_paths < 2 {
        return domain("need at least two paths");
    }
    if cfg.x0.len() != model.n {
        return domain("x0 must match the state dimension");
    }
    let horizons = cfg.horizons(model.claimed_alpha);
    if horizons.windows(2).any(|w| w[0] >= w[1]) || horizons[0] <= 0.0 {
        return domain("horizon schedule must be positive and increasing");
    }
    let policies = model.extreme_policies();
    let mut prev: Option<Vec<Vec<(f64, f64)>>> = None;
    let mut gaps = Vec::new();
    let mut used = Vec::new();
    let mut converged = false;
    let mut last = (Vec::new(), Vec::new());
    for &h in &horizons {
        used.push(h);
        let mut means = Vec::new();
        let mut samples = Vec::new();
        for p in &policies {
            let s = pullback_terminals(model, p, cfg, h)?;
            means.push(
                phis.iter()
                    .map(|(_, f)| {
                        let v: Vec<f64> = s.chunks(model.n).map(|x| f(x)).collect();
                        mean_se(&v)
                    })
                    .collect::<Vec<_>>(),
            );
            samples.push(s);
        }
        if let Some(prev) = &prev {
            let gap = means
                .iter()
                .flatten()
                .zip(prev.iter().flatten())
                .map(|(a, b)| (a.0 - b.0).abs())
                .fold(0.0, f64::max);
            gaps.push(gap);
            if gap < cfg.tol {
                converged = true;
            }
        }
        prev = Some(means.clone());
        last = (means, samples);
        if converged {
            break;
        }
    }
    let (means, samples) = last;
    let values = (0..phis.len())
        .map(|j| {
            means
                .iter()
                .map(|m| m[j])
                .fold((f64::NEG_INFINITY, 0.0), |b, v| if v.0 > b.0 { v } else { b })
        })
        .collect();
    Ok(StationaryEstimate {
        functions: phis.iter().map(|(n, _)| n.to_string()).collect(),
        horizon: *used.last().unwrap(),
        horizons: used,
        converged,
        cauchy_gaps: gaps,
        policies: policies.iter().map(Policy::label).collect(),
        means,
        values,
        samples,
        dim: model.n,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DecayRow {
    pub t: f64,
    pub gap: f64,
    pub se: f64,
}

/// Fit of `|T_t φ(x) - T̃[φ]| ≈ c l_φ (1 + |x|) e^{-α̂ t}`.
#[derive(Debug, Clone, PartialEq)]
pub struct DecayFit {
    pub rows: Vec<DecayRow>,
    pub c: f64,
    pub alpha_hat: f64,
    /// Two-standard-error interval for `α̂`.
    pub ci: (f64, f64),
    /// Rows above the noise floor that entered the fit.
    pub used: usize,
    /// Fewer than two rows above the noise floor; `c` and `α̂` are NaN.
    pub degenerate: bool,
}

/// Noise floor: three combined standard errors, never below `1e-12`.
pub fn invariance_decay_fit(
    model: &GsdeModel,
    phi: &(dyn Fn(&[f64]) -> f64 + Sync),
    lip: f64,
    x: &[f64],
    t_grid: &[f64],
    t_tilde: (f64, f64),
    method: MarkovMethod,
) -> Result<DecayFit> {
    if t_grid.is_empty() {
        return domain("empty t grid");
    }
    let values: Vec<(f64, f64)> = match method {
        MarkovMethod::Dp(cfg) => {
            let op = super::DpOperator::new(model, cfg, x)?;
            let mut u = op.sample(&|y| phi(&[y]));
            let mut done = 0;
            let mut order: Vec<usize> = (0..t_grid.len()).collect();
            order.sort_by(|a, b| t_grid[*a].total_cmp(&t_grid[*b]));
            let mut out = vec![(0.0, 0.0); t_grid.len()];
            for i in order {
                let k = op.steps_for(t_grid[i]);
                u = op.apply(&u, k.saturating_sub(done));
                done = done.max(k);
                out[i] = (op.interpolate(&u, x[0]), 0.0);
            }
            out
        }
        MarkovMethod::PolicyMax { .. } => t_grid
            .iter()
            .map(|t| super::markov_t(model, *t, phi, x, method).map(|v| (v.value, v.se)))
            .collect::<Result<_>>()?,
    };
    let rows: Vec<DecayRow> = t_grid
        .iter()
        .zip(&values)
        .map(|(t, (v, se))| DecayRow {
            t: *t,
            gap: (v - t_tilde.0).abs(),
            se: (se * se + t_tilde.1 * t_tilde.1).sqrt(),
        })
        .collect();
    let pts: Vec<(f64, f64)> = rows
        .iter()
        .filter(|r| r.gap > (3.0 * r.se).max(1e-12))
        .map(|r| (r.t, r.gap.ln()))
        .collect();
    let scale = lip * (1.0 + x.iter().map(|v| v * v).sum::<f64>().sqrt());
    if pts.len() < 2 {
        return Ok(DecayFit {
            rows,
            c: f64::NAN,
            alpha_hat: f64::NAN,
            ci: (f64::NAN, f64::NAN),
            used: pts.len(),
            degenerate: true,
        });
    }
    let n = pts.len() as f64;
    let mt = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let stt: f64 = pts.iter().map(|p| (p.0 - mt).powi(2)).sum();
    if stt == 0.0 {
        return domain("decay fit needs distinct times");
    }
    let slope = pts.iter().map(|p| (p.0 - mt) * (p.1 - my)).sum::<f64>() / stt;
    let intercept = my - slope * mt;
    let half = if pts.len() > 2 {
        let rss: f64 = pts.iter().map(|p| (p.1 - intercept - slope * p.0).powi(2)).sum();
        2.0 * (rss / (n - 2.0) / stt).sqrt()
    } else {
        0.0
    };
    Ok(DecayFit {
        rows,
        c: intercept.exp() / scale,
        alpha_hat: -slope,
        ci: (-slope - half, -slope + half),
        used: pts.len(),
        degenerate: false,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct NonIndependence {
    pub lhs: f64,
    pub rhs: f64,
    pub se: f64,
    /// `|lhs - rhs| / se`; zero when the two sides agree to rounding.
    pub z: f64,
    pub refuted: bool,
    /// Per policy: `mean[φ₁(ξ_s)φ₂(ξ_t)]`, `mean φ₁(ξ_s)`, `mean φ₂(ξ_t)`.
    pub per_policy: Vec<(f64, f64, f64)>,
}

/// Compares `max mean[φ₁(ξ_s) φ₂(ξ_t)]` with `T̃[φ₁] T̃[φ₂]`, all from one
/// ensemble started `burn_in` before `s`.
#[allow(clippy::too_many_arguments)]
pub fn non_independence_test(
    model: &GsdeModel,
    s: f64,
    t: f64,
    phi1: &(dyn Fn(&[f64]) -> f64 + Sync),
    phi2: &(dyn Fn(&[f64]) -> f64 + Sync),
    burn_in: f64,
    dt: f64,
    n_paths: usize,
    seed: u64,
) -> Result<NonIndependence> {
    if !(s < t) {
        return domain("need s < t");
    }
    if n_paths < 2 {
        return domain("need at least two paths");
    }
    let ks = step_count(dt, burn_in.max(0.0) + s.max(0.0))?;
    let kt = ks + step_count(dt, t - s)?;
    let x0 = vec![0.0; model.n];
    let mut per = Vec::new();
    let mut cols = Vec::new();
    for policy in model.extreme_policies() {
        let pairs: Vec<Result<(f64, f64)>> = (0..n_paths)
            .into_par_iter()
            .map(|p| {
                let mut a = 0.0;
                let mut b = 0.0;
                run_path(model, &policy, &x0, 0.0, dt, kt, seed, p as u64, NoiseIds::Forward(0), |k, x| {
                    if k == ks {
                        a = phi1(x);
                    }
                    if k == kt {
                        b = phi2(x);
                    }
                })?;
                Ok((a, b))
            })
            .collect();
        let pairs = pairs.into_iter().collect::<Result<Vec<_>>>()?;
        let n = n_paths as f64;
        let m1 = pairs.iter().map(|p| p.0).sum::<f64>() / n;
        let m2 = pairs.iter().map(|p| p.1).sum::<f64>() / n;
        let m12 = pairs.iter().map(|p| p.0 * p.1).sum::<f64>() / n;
        per.push((m12, m1, m2));
        cols.push(pairs);
    }
    let argmax = |f: &dyn Fn(&(f64, f64, f64)) -> f64| {
        (0..per.len()).fold(0, |b, i| if f(&per[i]) > f(&per[b]) { i } else { b })
    };
    let (i12, i1, i2) = (argmax(&|p| p.0), argmax(&|p| p.1), argmax(&|p| p.2));
    let lhs = per[i12].0;
    let (m1, m2) = (per[i1].1, per[i2].2);
    let rhs = m1 * m2;
    let var = |xs: &mut dyn Iterator<Item = f64>| {
        let v: Vec<f64> = xs.collect();
        let (_, se) = mean_se(&v);
        se * se
    };
    let se2 = if i12 == i1 && i1 == i2 {
        // influence function of m12 - m1 m2 on one ensemble
        var(&mut cols[i12]
            .iter()
            .map(|(a, b)| a * b - m2 * a - m1 * b))
    } else {
        var(&mut cols[i12].iter().map(|(a, b)| a * b))
            + m2 * m2 * var(&mut cols[i1].iter().map(|p| p.0))
            + m1 * m1 * var(&mut cols[i2].iter().map(|p| p.1))
    };
    let se = se2.max(0.0).sqrt();
    let diff = (lhs - rhs).abs();
    let scale = lhs.abs().max(rhs.abs()).max(1.0);
    let z = if diff <= 1e-12 * scale {
        0.0
    } else if se > 0.0 {
        diff / se
    } else {
        f64::INFINITY
    };
    Ok(NonIndependence {
        lhs,
        rhs,
        se,
        z,
        refuted: z >= 4.0,
        per_policy: per,
    })
}
