//! Convergence experiments: α-mixing coefficients, LLN and SLLN tables,
//! subsequence LLN and mean-certain convergence.
//!
//! Rows are computed by the exact sequential recursion whenever the model
//! has finite atoms; every row carries its evaluation mode.

mod slln;

use std::io::Write;

use rayon::prelude::*;

use crate::dp::{EvalMode, SequentialModel, StepLaw};
use crate::ergodic::SubsequenceSpec;
use crate::error::{domain, Error, Result};
use crate::scenario::{GammaSet, TestFunction};

pub use slln::{slln_experiment, Selection, SllnReport, SllnTrial};

/// Blocks `Λ¹ ≤ Λ²` and a test function of `(X̄_{Λ¹}, X̄_{Λ²})`.
#[derive(Debug, Clone)]
pub struct MixingProbe {
    pub lambda1: Vec<usize>,
    pub lambda2: Vec<usize>,
    pub phi: TestFunction,
}

impl MixingProbe {
    pub fn new(mut lambda1: Vec<usize>, mut lambda2: Vec<usize>, phi: TestFunction) -> Result<Self> {
        lambda1.sort_unstable();
        lambda1.dedup();
        lambda2.sort_unstable();
        lambda2.dedup();
        if lambda1.is_empty() || lambda2.is_empty() {
            return domain("mixing blocks must be nonempty");
        }
        if lambda1.last() > lambda2.first() {
            return domain(format!("need max Λ¹ <= min Λ², got {lambda1:?} and {lambda2:?}"));
        }
        Ok(MixingProbe {
            lambda1,
            lambda2,
            phi,
        })
    }

    /// `min Λ² - max Λ¹`.
    pub fn gap(&self) -> usize {
        self.lambda2[0] - self.lambda1[self.lambda1.len() - 1]
    }
}

/// `|Ê[φ(X̄_{Λ¹}, X̄_{Λ²})] - Ê[Ê[φ(x, X̄_{Λ²})]_{x = X̄_{Λ¹}}]|`, exact for
/// finite-atom models.
pub fn alpha_mixing_lhs(model: &SequentialModel, probe: &MixingProbe) -> Result<f64> {
    if matches!(model.step, StepLaw::GNormal { .. }) {
        return Err(Error::Unsupported(
            "α-mixing coefficients need finite step laws; fit decay rates instead".into(),
        ));
    }
    let d = model.dim();
    let (n1, n2) = (probe.lambda1.len(), probe.lambda2.len());
    let phi = |xs: &[f64]| {
        let mut means = vec![0.0; 2 * d];
        for (k, chunk) in xs.chunks(d).enumerate() {
            let (slot, w) = if k < n1 { (0, n1) } else { (d, n2) };
            for (m, v) in means[slot..slot + d].iter_mut().zip(chunk) {
                *m += v / w as f64;
            }
        }
        probe.phi.eval(&means)
    };
    crate::scenario::nested_gap(model, &probe.lambda1, &probe.lambda2, &phi)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RateRow {
    pub n: usize,
    pub value: f64,
    pub target: f64,
    pub abs_error: f64,
    pub mode: EvalMode,
}

/// Least squares on `(ln n, ln error)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RateFit {
    pub slope: f64,
    pub intercept: f64,
    /// Root mean square residual.
    pub residual: f64,
    pub used: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RateTable {
    pub rows: Vec<RateRow>,
    /// Fit over the upper half of the grid; `None` when degenerate.
    pub fit: Option<RateFit>,
    pub full_fit: Option<RateFit>,
}

impl RateTable {
    pub fn new(rows: Vec<RateRow>) -> Result<Self> {
        if rows.windows(2).any(|w| w[0].n >= w[1].n) {
            return domain("rate table rows must have strictly increasing n");
        }
        let half = &rows[rows.len() / 2..];
        Ok(RateTable {
            fit: rate_fit(half).ok(),
            full_fit: rate_fit(&rows).ok(),
            rows,
        })
    }

    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "n,value,target,abs_error,mode")?;
        for r in &self.rows {
            writeln!(w, "{},{},{},{},{}", r.n, r.value, r.target, r.abs_error, r.mode.as_str())?;
        }
        Ok(())
    }

    pub fn row(&self, n: usize) -> Option<&RateRow> {
        self.rows.iter().find(|r| r.n == n)
    }
}

/// Rows with error below `1e-12` are skipped; fewer than three usable rows
/// is a degenerate fit.
pub fn rate_fit(rows: &[RateRow]) -> Result<RateFit> {
    let pts: Vec<(f64, f64)> = rows
        .iter()
        .filter(|r| r.abs_error >= 1e-12)
        .map(|r| ((r.n as f64).ln(), r.abs_error.ln()))
        .collect();
    if pts.len() < 3 {
        return domain(format!("degenerate fit: {} usable rows, need 3", pts.len()));
    }
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    if sxx == 0.0 {
        return domain("degenerate fit: all rows share one n");
    }
    let slope = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum::<f64>() / sxx;
    let intercept = my - slope * mx;
    let residual = (pts.iter().map(|p| (p.1 - intercept - slope * p.0).powi(2)).sum::<f64>() / n).sqrt();
    Ok(RateFit {
        slope,
        intercept,
        residual,
        used: pts.len(),
    })
}

fn check_grid(n_grid: &[usize]) -> Result<()> {
    if n_grid.is_empty() || n_grid[0] == 0 || n_grid.windows(2).any(|w| w[0] >= w[1]) {
        return domain("n grid must be positive and strictly increasing");
    }
    Ok(())
}

/// `|Ê[φ(S_n / n)] - max_{Γ} φ|` per `n`, where `gamma` is typically `Γ_*`.
pub fn lln_experiment(
    model: &SequentialModel,
    phi: &(dyn Fn(&[f64]) -> f64 + Sync),
    n_grid: &[usize],
    gamma: &GammaSet,
) -> Result<RateTable> {
    check_grid(n_grid)?;
    let target = gamma.maximize(phi)?;
    let model = model.with_horizon(model.horizon.max(*n_grid.last().unwrap()))?;
    let rows: Vec<Result<RateRow>> = n_grid
        .par_iter()
        .map(|&n| {
            let e = model.lln_expectation(n, phi)?;
            Ok(RateRow {
                n,
                value: e.value,
                target,
                abs_error: (e.value - target).abs(),
                mode: e.mode,
            })
        })
        .collect();
    RateTable::new(rows.into_iter().collect::<Result<_>>()?)
}

/// LLN along `t_k = ⌊P(k)⌋ ∨ 1` with `deg P ≥ 2`, against `max_{Γ} φ`.
pub fn subsequence_lln_experiment(
    model: &SequentialModel,
    phi: &(dyn Fn(&[f64]) -> f64 + Sync),
    spec: &SubsequenceSpec,
    n_grid: &[usize],
    gamma: &GammaSet,
) -> Result<RateTable> {
    check_grid(n_grid)?;
    match (spec.degree(), spec.leading_coefficient()) {
        (Some(deg), Some(lead)) if deg >= 2 && lead > 0.0 => {}
        _ => {
            return domain(
                "the subsequence LLN needs a polynomial of degree at least 2 with positive leading coefficient",
            )
        }
    }
    let target = gamma.maximize(phi)?;
    let n_max = *n_grid.last().unwrap();
    let times: Vec<usize> = spec.times(n_max)?.into_iter().map(|t| t as usize).collect();
    if times.windows(2).any(|w| w[0] >= w[1]) {
        return domain("subsequence times repeat; shift the polynomial so they increase");
    }
    let model = model.with_horizon(model.horizon.max(times[n_max - 1]))?;
    let d = model.dim();
    let rows: Vec<Result<RateRow>> = n_grid
        .par_iter()
        .map(|&n| {
            let inv = 1.0 / n as f64;
            let e = model.eval_sum(&times[..n], &|s| {
                let mean: Vec<f64> = s[..d].iter().map(|v| v * inv).collect();
                phi(&mean)
            })?;
            Ok(RateRow {
                n,
                value: e.value,
                target,
                abs_error: (e.value - target).abs(),
                mode: e.mode,
            })
        })
        .collect();
    RateTable::new(rows.into_iter().collect::<Result<_>>()?)
}

/// `Ê[|S_n / n - Ê[X_1]|]` for a model without mean uncertainty.
pub fn mean_certain_convergence(model: &SequentialModel, n_grid: &[usize]) -> Result<RateTable> {
    check_grid(n_grid)?;
    let d = model.dim();
    let mut mu = vec![0.0; d];
    for (i, m) in mu.iter_mut().enumerate() {
        let up = model.eval_cylinder(&[1], &|x| x[i])?;
        let down = -model.eval_cylinder(&[1], &|x| -x[i])?;
        if (up - down).abs() > 1e-9 {
            return domain(format!(
                "X_1 has mean uncertainty in coordinate {i}: [{down}, {up}]"
            ));
        }
        *m = up;
    }
    let model = model.with_horizon(model.horizon.max(*n_grid.last().unwrap()))?;
    let rows: Vec<Result<RateRow>> = n_grid
        .par_iter()
        .map(|&n| {
            let e = model.lln_expectation(n, &|s| {
                s.iter().zip(&mu).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt()
            })?;
            Ok(RateRow {
                n,
                value: e.value,
                target: 0.0,
                abs_error: e.value.abs(),
                mode: e.mode,
            })
        })
        .collect();
    RateTable::new(rows.into_iter().collect::<Result<_>>()?)
}
