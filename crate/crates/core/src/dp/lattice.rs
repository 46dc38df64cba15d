//! One-dimensional grid dynamic programming.
//!
//! Three evaluators share this module: the running-sum recursion for affine
//! observation maps, the `v_n` recursion for a one-step law, and the
//! binomial variance-control lattice for the G-normal distribution.

use std::collections::BTreeMap;
use std::io::Write;

use serde::{Deserialize, Serialize};

use super::{FiniteLaw, SequentialModel, StepLaw};
use crate::error::{domain, Result};

/// Upper bound on nodes of one lattice layer.
const NODE_BUDGET: usize = 20_000_000;

/// How a value was obtained.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EvalMode {
    /// Exact recursion on an integer lattice of partial sums.
    ExactLattice,
    /// Exact recursion over enumerated reachable states.
    ExactStates,
    /// Partial sums off any common lattice, linear interpolation on a grid.
    Interpolated,
    /// G-normal steps replaced by three-point moment-matched laws.
    MomentMatched,
    /// Monte Carlo estimate.
    MonteCarlo,
}

impl EvalMode {
    pub fn as_str(&self) -> &'static str {
        match self {
            EvalMode::ExactLattice => "exact_lattice",
            EvalMode::ExactStates => "exact_states",
            EvalMode::Interpolated => "interpolated",
            EvalMode::MomentMatched => "moment_matched",
            EvalMode::MonteCarlo => "monte_carlo",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MeanExpectation {
    pub value: f64,
    pub mode: EvalMode,
}

/// Largest `h` with every value an integer multiple of `h`, if one exists
/// at reasonable resolution.
fn float_gcd(values: &[f64]) -> Option<f64> {
    let scale = values.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let tol = 1e-9 * scale.max(1.0);
    let mut g = 0.0f64;
    for &v in values {
        let (mut a, mut b) = (g.max(v.abs()), g.min(v.abs()));
        let mut guard = 0;
        while b > tol && guard < 200 {
            let r = a - b * (a / b).floor();
            let r = if r > b - tol { 0.0 } else { r };
            a = b;
            b = r;
            guard += 1;
        }
        g = a;
    }
    if g <= tol || scale / g > 1e7 {
        return None;
    }
    let ok = values.iter().all(|v| {
        let r = v / g;
        (r - r.round()).abs() <= 1e-9 * r.abs().max(1.0)
    });
    ok.then_some(g)
}

/// `Ê[g(Σ_{k ∈ obs} <p, X_k>)]` when the projected map is affine in the
/// noises; `None` when it is not.
pub(crate) fn linear_sum(
    model: &SequentialModel,
    obs: &[usize],
    p: &[f64],
    g: &dyn Fn(f64) -> f64,
) -> Result<Option<MeanExpectation>> {
    let Some((coeffs, offset)) = model.map.affine_form(p) else {
        return Ok(None);
    };
    let mut terms: BTreeMap<usize, f64> = BTreeMap::new();
    for &k in obs {
        for (l, c) in coeffs.iter().enumerate() {
            *terms.entry(k + l).or_insert(0.0) += c;
        }
    }
    let terms: Vec<f64> = terms.into_values().filter(|c| *c != 0.0).collect();
    let shift = offset * obs.len() as f64;
    let laws = model.step.finite_laws();
    let exact_law = model.step.is_exact_finite();

    let mut products: Vec<f64> = Vec::new();
    for c in &terms {
        for law in &laws {
            for v in &law.values {
                let x = c * v;
                if x != 0.0 {
                    products.push(x);
                }
            }
        }
    }
    if products.is_empty() {
        return Ok(Some(MeanExpectation {
            value: g(shift),
            mode: if exact_law {
                EvalMode::ExactLattice
            } else {
                EvalMode::MomentMatched
            },
        }));
    }
    let (h, exact) = match float_gcd(&products) {
        Some(h) => (h, true),
        None => {
            let min = products.iter().fold(f64::INFINITY, |m, v| m.min(v.abs()));
            (min / 8.0, false)
        }
    };

    // per-stage offsets in units of h, and their reachable ranges
    let steps: Vec<Vec<(Vec<f64>, &FiniteLaw)>> = terms
        .iter()
        .map(|c| {
            laws.iter()
                .map(|law| (law.values.iter().map(|v| c * v / h).collect(), law))
                .collect()
        })
        .collect();
    let mut lo = vec![0i64];
    let mut hi = vec![0i64];
    for stage in &steps {
        let mut smin = f64::INFINITY;
        let mut smax = f64::NEG_INFINITY;
        for (offs, _) in stage {
            for &o in offs {
                smin = smin.min(o);
                smax = smax.max(o);
            }
        }
        let pad = if exact { 0 } else { 1 };
        lo.push(lo.last().unwrap() + smin.floor() as i64 - pad);
        hi.push(hi.last().unwrap() + smax.ceil() as i64 + pad);
    }
    let m = steps.len();
    let width = (hi[m] - lo[m] + 1) as usize;
    if width > NODE_BUDGET {
        return domain(format!("running-sum lattice needs {width} nodes"));
    }

    let mut values: Vec<f64> = (lo[m]..=hi[m]).map(|k| g(k as f64 * h + shift)).collect();
    for stage in (0..m).rev() {
        let (clo, chi) = (lo[stage + 1], hi[stage + 1]);
        let child = &values;
        let read = |pos: f64| -> f64 {
            if exact {
                let idx = (pos.round() as i64 - clo) as usize;
                child[idx]
            } else {
                let x = pos - clo as f64;
                let i = x.floor().clamp(0.0, (chi - clo - 1) as f64);
                let f = x - i;
                let i = i as usize;
                child[i] * (1.0 - f) + child[i + 1] * f
            }
        };
        let next: Vec<f64> = (lo[stage]..=hi[stage])
            .map(|k| {
                let mut best = f64::NEG_INFINITY;
                for (offs, law) in &steps[stage] {
                    let e: f64 = offs
                        .iter()
                        .zip(&law.weights)
                        .map(|(o, w)| w * read(k as f64 + o))
                        .sum();
                    if e > best {
                        best = e;
                    }
                }
                best
            })
            .collect();
        values = next;
    }
    let mode = if !exact_law {
        EvalMode::MomentMatched
    } else if exact {
        EvalMode::ExactLattice
    } else {
        EvalMode::Interpolated
    };
    let idx = (-lo[0]) as usize;
    Ok(Some(MeanExpectation {
        value: values[idx],
        mode,
    }))
}

/// Uniform one-dimensional grid.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub x_min: f64,
    pub dx: f64,
    pub len: usize,
}

impl GridSpec {
    pub fn new(x_min: f64, x_max: f64, dx: f64) -> Result<Self> {
        if !(dx > 0.0) || x_max <= x_min {
            return domain("grid needs dx > 0 and x_max > x_min");
        }
        let len = ((x_max - x_min) / dx).round() as usize + 1;
        Ok(GridSpec { x_min, dx, len })
    }

    /// Symmetric grid `[-half, half]` with spacing `dx`.
    pub fn centered(half: f64, dx: f64) -> Result<Self> {
        let cells = (half / dx).ceil();
        GridSpec::new(-cells * dx, cells * dx, dx)
    }

    pub fn x(&self, i: usize) -> f64 {
        self.x_min + self.dx * i as f64
    }

    pub fn x_max(&self) -> f64 {
        self.x(self.len - 1)
    }
}

/// Layered grid values, `layers[k]` holding the `k`-th recursion step.
#[derive(Debug, Clone, PartialEq)]
pub struct LatticeTable {
    pub grid: GridSpec,
    /// Number of recursion steps per unit time.
    pub steps: usize,
    pub layers: Vec<Vec<f64>>,
    pub clipped_reads: u64,
    pub total_reads: u64,
}

impl LatticeTable {
    pub fn clipped_fraction(&self) -> f64 {
        if self.total_reads == 0 {
            0.0
        } else {
            self.clipped_reads as f64 / self.total_reads as f64
        }
    }

    /// Linear interpolation inside layer `k`; reads outside are clamped.
    pub fn interpolate(&self, k: usize, x: f64) -> f64 {
        interpolate(&self.grid, &self.layers[k], x).0
    }

    /// `v(t, x)`, piecewise constant in `t` on `((k-1)/n, k/n]`.
    pub fn value(&self, t: f64, x: f64) -> f64 {
        let k = if t <= 0.0 {
            0
        } else {
            ((t * self.steps as f64) - 1e-12).ceil().max(1.0) as usize
        };
        self.interpolate(k.min(self.layers.len() - 1), x)
    }

    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "layer,x,value")?;
        for (k, layer) in self.layers.iter().enumerate() {
            for (i, v) in layer.iter().enumerate() {
                writeln!(w, "{k},{},{v}", self.grid.x(i))?;
            }
        }
        Ok(())
    }
}

/// Returns the interpolated value and whether the read was clipped.
pub(crate) fn interpolate(grid: &GridSpec, values: &[f64], x: f64) -> (f64, bool) {
    let pos = (x - grid.x_min) / grid.dx;
    let last = (grid.len - 1) as f64;
    if pos < -1e-9 || pos > last + 1e-9 {
        let v = if pos < 0.0 { values[0] } else { values[grid.len - 1] };
        return (v, true);
    }
    let pos = pos.clamp(0.0, last);
    let i = pos.floor();
    let f = pos - i;
    let i = i as usize;
    if f < 1e-12 || i + 1 >= grid.len {
        (values[i], false)
    } else {
        (values[i] * (1.0 - f) + values[i + 1] * f, false)
    }
}

/// Grid step `dx = s_hi / K` making `s_lo / dx` an integer when possible.
fn commensurate(s_hi: f64, s_lo: f64) -> (usize, f64) {
    if s_lo == 0.0 {
        return (1, 0.0);
    }
    for k in 1..=64usize {
        let r = k as f64 * s_lo / s_hi;
        if (r - r.round()).abs() < 1e-9 {
            return (k, r.round());
        }
    }
    (64, 64.0 * s_lo / s_hi)
}

/// `v(0, ·) = φ`, `v(k/n, x) = Ê[v((k-1)/n, x + Z/n)]` for `k = 1..=n`.
///
/// Finite step laws use their atoms directly; a G-normal `Z` is propagated
/// by the variance-control lattice over the time `1/n²` carried by `Z/n`.
pub fn v_n_recursion(
    z: &StepLaw,
    phi: &dyn Fn(f64) -> f64,
    n: usize,
    grid: Option<GridSpec>,
) -> Result<LatticeTable> {
    if n == 0 {
        return domain("v_n recursion needs n >= 1");
    }
    z.validate()?;
    match z {
        StepLaw::GNormal { var_low, var_high } => {
            let tau = 1.0 / (n * n) as f64;
            let sd = var_high.sqrt();
            let sub = 16usize;
            let s_hi = (var_high * tau / sub as f64).sqrt();
            let s_lo = (var_low * tau / sub as f64).sqrt();
            let (grid, k, r) = match grid {
                Some(g) => (g, f64::NAN, f64::NAN),
                None => {
                    if sd == 0.0 {
                        (GridSpec::centered(1.0, 0.01)?, 0.0, 0.0)
                    } else {
                        let (k, r) = commensurate(s_hi, s_lo);
                        let dx = s_hi / k as f64;
                        (GridSpec::centered(6.0 * sd + 1.0, dx)?, k as f64, r)
                    }
                }
            };
            let mut table = LatticeTable {
                grid,
                steps: n,
                layers: vec![(0..grid.len).map(|i| phi(grid.x(i))).collect()],
                clipped_reads: 0,
                total_reads: 0,
            };
            let offsets: Vec<f64> = if k.is_nan() {
                vec![s_lo / grid.dx, s_hi / grid.dx]
            } else {
                vec![r, k]
            };
            for _ in 0..n {
                let mut cur = table.layers.last().unwrap().clone();
                for _ in 0..sub {
                    cur = two_point_step(&grid, &cur, &offsets, &mut table);
                }
                table.layers.push(cur);
            }
            Ok(table)
        }
        _ => {
            let laws = z.finite_laws();
            let (zmin, zmax) = z.support_range();
            let sd = laws
                .iter()
                .map(|l| {
                    let m = l.mean();
                    l.values
                        .iter()
                        .zip(&l.weights)
                        .map(|(v, w)| w * (v - m).powi(2))
                        .sum::<f64>()
                        .sqrt()
                })
                .fold(0.0, f64::max);
            let grid = match grid {
                Some(g) => g,
                None => {
                    let half = zmin.abs().max(zmax.abs()) + 3.0 * sd + 1.0;
                    GridSpec::centered(half, half / 2000.0)?
                }
            };
            let mut table = LatticeTable {
                grid,
                steps: n,
                layers: vec![(0..grid.len).map(|i| phi(grid.x(i))).collect()],
                clipped_reads: 0,
                total_reads: 0,
            };
            let inv = 1.0 / n as f64;
            for _ in 0..n {
                let prev = table.layers.last().unwrap();
                let mut clipped = 0u64;
                let mut reads = 0u64;
                let next: Vec<f64> = (0..grid.len)
                    .map(|i| {
                        let x = grid.x(i);
                        let mut best = f64::NEG_INFINITY;
                        for law in &laws {
                            let mut e = 0.0;
                            for (v, w) in law.values.iter().zip(&law.weights) {
                                let (val, clip) = interpolate(&grid, prev, x + v * inv);
                                reads += 1;
                                clipped += clip as u64;
                                e += w * val;
                            }
                            best = best.max(e);
                        }
                        best
                    })
                    .collect();
                table.clipped_reads += clipped;
                table.total_reads += reads;
                table.layers.push(next);
            }
            Ok(table)
        }
    }
}

/// `u(x) ← max_q ½[u(x + s_q) + u(x - s_q)]` with offsets in grid units.
fn two_point_step(
    grid: &GridSpec,
    cur: &[f64],
    offsets: &[f64],
    table: &mut LatticeTable,
) -> Vec<f64> {
    let mut clipped = 0u64;
    let mut reads = 0u64;
    let out = (0..grid.len)
        .map(|i| {
            let mut best = f64::NEG_INFINITY;
            for &o in offsets {
                let (a, ca) = read_offset(cur, i, o);
                let (b, cb) = read_offset(cur, i, -o);
                reads += 2;
                clipped += ca as u64 + cb as u64;
                best = best.max(0.5 * (a + b));
            }
            best
        })
        .collect();
    table.clipped_reads += clipped;
    table.total_reads += reads;
    out
}

fn read_offset(values: &[f64], i: usize, offset: f64) -> (f64, bool) {
    let pos = i as f64 + offset;
    let last = (values.len() - 1) as f64;
    if pos < -1e-9 || pos > last + 1e-9 {
        return (if pos < 0.0 { values[0] } else { values[values.len() - 1] }, true);
    }
    let pos = pos.clamp(0.0, last);
    let j = pos.floor();
    let f = pos - j;
    let j = j as usize;
    if f < 1e-12 || j + 1 >= values.len() {
        (values[j], false)
    } else {
        (values[j] * (1.0 - f) + values[j + 1] * f, false)
    }
}

/// `Ê[φ(B_1)]` for a G-normal `B_1` with variances `[var_low, var_high]`
/// by `steps` rounds of the binomial variance-control lattice.
///
/// The grid spacing makes both step sizes whole numbers of nodes whenever
/// `sqrt(var_high / var_low)` is rational with denominator at most 64, and
/// spans the full domain of dependence, so no read is clipped.
pub fn g_normal_step(
    var_low: f64,
    var_high: f64,
    steps: usize,
    phi: &dyn Fn(f64) -> f64,
) -> Result<f64> {
    if steps == 0 {
        return domain("G-normal lattice needs at least one step");
    }
    if !(var_low >= 0.0 && var_low <= var_high && var_high.is_finite()) {
        return domain(format!(
            "G-normal needs 0 <= var_low <= var_high, got [{var_low}, {var_high}]"
        ));
    }
    if var_high == 0.0 {
        return Ok(phi(0.0));
    }
    let s_hi = (var_high / steps as f64).sqrt();
    let s_lo = (var_low / steps as f64).sqrt();
    let (k, r) = commensurate(s_hi, s_lo);
    let dx = s_hi / k as f64;
    let half_nodes = steps * k;
    let len = 2 * half_nodes + 1;
    if len > NODE_BUDGET {
        return domain(format!("G-normal lattice needs {len} nodes"));
    }
    let mut u: Vec<f64> = (0..len)
        .map(|i| phi((i as f64 - half_nodes as f64) * dx))
        .collect();
    let exact_lo = (r - r.round()).abs() < 1e-12;
    let mut next = vec![0.0; len];
    for step in 0..steps {
        // nodes further than (steps - step - 1) * k from the centre never reach it
        let reach = (steps - step - 1) * k;
        let from = half_nodes - reach;
        let to = half_nodes + reach;
        for i in from..=to {
            let hi = 0.5 * (u[i + k] + u[i - k]);
            let lo = if exact_lo {
                let o = r as usize;
                0.5 * (u[i + o] + u[i - o])
            } else {
                0.5 * (read_offset(&u, i, r).0 + read_offset(&u, i, -r).0)
            };
            next[i] = hi.max(lo);
        }
        std::mem::swap(&mut u, &mut next);
    }
    Ok(u[half_nodes])
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gcd_of_floats() {
        assert_eq!(float_gcd(&[2.0, 4.0, -6.0]), Some(2.0));
        let h = float_gcd(&[1.0 / 17.0, 2.0 / 17.0, 34.0 / 17.0]).unwrap();
        assert!((h - 1.0 / 17.0).abs() < 1e-15);
        let s3 = 3f64.sqrt();
        let h = float_gcd(&[s3, 2.0 * s3]).unwrap();
        assert!((h - s3).abs() < 1e-12);
        assert!(float_gcd(&[1.0, std::f64::consts::PI]).is_none());
    }

    #[test]
    fn commensurate_grid() {
        assert_eq!(commensurate(2.0, 1.0), (2, 1.0));
        assert_eq!(commensurate(1.0, 0.0), (1, 0.0));
        let (k, r) = commensurate(3.0, 2.0);
        assert_eq!((k, r), (3, 2.0));
    }

    #[test]
    fn g_normal_square_exact() {
        for steps in [1, 7, 100] {
            let v = g_normal_step(1.0, 4.0, steps, &|x| x * x).unwrap();
            assert!((v - 4.0).abs() < 1e-9, "steps {steps}: {v}");
            let w = -g_normal_step(1.0, 4.0, steps, &|x| -x * x).unwrap();
            assert!((w - 1.0).abs() < 1e-9, "steps {steps}: {w}");
        }
    }

    #[test]
    fn g_normal_identity_zero() {
        for steps in [1, 10, 333] {
            assert!(g_normal_step(0.5, 2.0, steps, &|x| x).unwrap().abs() < 1e-12);
        }
        assert!(g_normal_step(4.0, 1.0, 10, &|x| x).is_err());
        assert!(g_normal_step(1.0, 4.0, 0, &|x| x).is_err());
    }

    #[test]
    fn vn_layer_zero_is_phi() {
        let z = StepLaw::maximal(-1.0, 1.0).unwrap();
        let t = v_n_recursion(&z, &|x| x.sin(), 3, None).unwrap();
        for i in (0..t.grid.len).step_by(97) {
            assert_eq!(t.layers[0][i], t.grid.x(i).sin());
        }
        assert_eq!(t.layers.len(), 4);
        let mut buf = Vec::new();
        t.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("layer,x,value\n0,"));
    }
}
