//! Classical systems behind the examples: the full shift on `{0,1}^ℕ`
//! and circle rotations.
//!
//! Symbolic points are generated lazily up to a declared window; an
//! observable reads a fixed number of coordinates starting at the current
//! position.

mod admissible;
mod capacity;

use std::fmt;
use std::sync::Arc;

use rayon::prelude::*;

use crate::error::{domain, Result};
use crate::rng::uniform_at;

pub use admissible::{is_admissible, AdmissibilityReport, AdmissibilityRow, Generator, SubsequenceSpec};
pub use capacity::{
    bernoulli_window, capacity_ergodicity_check, window_space, CapacityReport, CandidateVerdict,
};

pub const DEFAULT_WINDOW: usize = 1 << 20;

/// How coordinates of a point are produced.
#[derive(Debug, Clone, PartialEq)]
pub enum Generator01 {
    /// `word` repeated forever when `periodic`, otherwise followed by `fill`.
    Explicit { word: Vec<u8>, periodic: bool, fill: u8 },
    /// I.i.d. coordinates with `P(ω_i = 0) = p0`, keyed by `(seed, i)`.
    Bernoulli { p0: f64, seed: u64 },
    /// `ω_0 = 0, ω_1 = 1`, then on `[2^n, 2^{n+1})` the first half zeros and
    /// the second half ones.
    Block,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SymbolicPoint {
    pub generator: Generator01,
    pub window: usize,
}

impl SymbolicPoint {
    pub fn explicit(word: Vec<u8>, periodic: bool, fill: u8) -> Result<Self> {
        if word.iter().chain([&fill]).any(|b| *b > 1) {
            return domain("symbols must be 0 or 1");
        }
        if periodic && word.is_empty() {
            return domain("a periodic word must be nonempty");
        }
        Ok(SymbolicPoint {
            generator: Generator01::Explicit { word, periodic, fill },
            window: DEFAULT_WINDOW,
        })
    }

    pub fn bernoulli(p0: f64, seed: u64) -> Result<Self> {
        if !(0.0..=1.0).contains(&p0) {
            return domain(format!("P(0) = {p0} is not a probability"));
        }
        Ok(SymbolicPoint {
            generator: Generator01::Bernoulli { p0, seed },
            window: DEFAULT_WINDOW,
        })
    }

    /// The non-convergent point of the shift example (`exA-block`).
    pub fn block() -> Self {
        SymbolicPoint {
            generator: Generator01::Block,
            window: DEFAULT_WINDOW,
        }
    }

    pub fn with_window(mut self, window: usize) -> Self {
        self.window = window;
        self
    }

    fn raw(&self, i: usize) -> u8 {
        match &self.generator {
            Generator01::Explicit { word, periodic, fill } => {
                if i < word.len() {
                    word[i]
                } else if *periodic {
                    word[i % word.len()]
                } else {
                    *fill
                }
            }
            Generator01::Bernoulli { p0, seed } => (uniform_at(*seed, 0, i as u64) > *p0) as u8,
            Generator01::Block => match i {
                0 => 0,
                1 => 1,
                _ => {
                    let n = usize::BITS - 1 - i.leading_zeros();
                    let start = 1usize << n;
                    (i >= start + start / 2) as u8
                }
            },
        }
    }

    pub fn coord(&self, i: usize) -> Result<u8> {
        if i >= self.window {
            return domain(format!("coordinate {i} lies beyond the window {}", self.window));
        }
        Ok(self.raw(i))
    }

    /// `ω_0 … ω_{len-1}`.
    pub fn prefix(&self, len: usize) -> Result<Vec<u8>> {
        if len > self.window {
            return domain(format!("prefix of {len} exceeds the window {}", self.window));
        }
        Ok((0..len).into_par_iter().map(|i| self.raw(i)).collect())
    }
}

/// Function of the coordinates `ω_0 … ω_{footprint-1}`.
#[derive(Clone)]
pub struct Observable {
    pub name: String,
    pub footprint: usize,
    pub sup_norm: f64,
    f: Arc<dyn Fn(&[u8]) -> f64 + Send + Sync>,
}

impl fmt::Debug for Observable {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Observable({}, footprint {})", self.name, self.footprint)
    }
}

impl Observable {
    pub fn new(
        name: impl Into<String>,
        footprint: usize,
        sup_norm: f64,
        f: impl Fn(&[u8]) -> f64 + Send + Sync + 'static,
    ) -> Self {
        Observable {
            name: name.into(),
            footprint: footprint.max(1),
            sup_norm,
            f: Arc::new(f),
        }
    }

    /// `1{ω_0 = 0}`.
    pub fn first_is_zero() -> Self {
        Observable::new("1{w0=0}", 1, 1.0, |w| (w[0] == 0) as u8 as f64)
    }

    pub fn constant(c: f64) -> Self {
        Observable::new(format!("const {c}"), 1, c.abs(), move |_| c)
    }

    /// Indicator of the cylinder starting with `word`.
    pub fn cylinder(word: Vec<u8>) -> Self {
        let n = word.len();
        Observable::new(format!("[{word:?}]"), n, 1.0, move |w| (w[..n] == word[..]) as u8 as f64)
    }

    pub fn eval(&self, w: &[u8]) -> f64 {
        (self.f)(w)
    }

    /// `X ∘ f`: the same function read one coordinate later.
    pub fn shifted(&self) -> Self {
        let inner = self.clone();
        Observable::new(
            format!("{}∘f", self.name),
            self.footprint + 1,
            self.sup_norm,
            move |w| inner.eval(&w[1..]),
        )
    }
}

/// Running Birkhoff averages `A_1, …, A_n` and their sums.
#[derive(Debug, Clone, PartialEq)]
pub struct BirkhoffSeries {
    /// `S_k = Σ_{i<k} X(f^i ω)` for `k = 1..=n`.
    pub sums: Vec<f64>,
}

impl BirkhoffSeries {
    pub fn average(&self, k: usize) -> f64 {
        self.sums[k - 1] / k as f64
    }

    pub fn last(&self) -> f64 {
        self.average(self.sums.len())
    }

    pub fn averages(&self) -> Vec<f64> {
        (1..=self.sums.len()).map(|k| self.average(k)).collect()
    }
}

fn check_n(n: usize) -> Result<()> {
    if n == 0 {
        return domain("n must be at least 1");
    }
    Ok(())
}

pub fn birkhoff_series(x: &Observable, omega: &SymbolicPoint, n: usize) -> Result<BirkhoffSeries> {
    check_n(n)?;
    let w = omega.prefix(n - 1 + x.footprint)?;
    let vals: Vec<f64> = (0..n)
        .into_par_iter()
        .map(|i| x.eval(&w[i..i + x.footprint]))
        .collect();
    let mut acc = 0.0;
    let sums = vals
        .iter()
        .map(|v| {
            acc += v;
            acc
        })
        .collect();
    Ok(BirkhoffSeries { sums })
}

/// `(1/n) Σ_{i<n} X(f^i ω)`.
pub fn birkhoff_average(x: &Observable, omega: &SymbolicPoint, n: usize) -> Result<f64> {
    Ok(birkhoff_series(x, omega, n)?.last())
}

/// `(1/n) Σ_{k=1}^{n} X(f^{t_k} ω)` with `t_k` from the spec.
pub fn subsequence_average(
    x: &Observable,
    omega: &SymbolicPoint,
    spec: &SubsequenceSpec,
    n: usize,
) -> Result<f64> {
    check_n(n)?;
    let times = spec.times(n)?;
    let mut acc = 0.0;
    for t in times {
        let t = t as usize;
        let mut w = Vec::with_capacity(x.footprint);
        for j in 0..x.footprint {
            w.push(omega.coord(t + j)?);
        }
        acc += x.eval(&w);
    }
    Ok(acc / n as f64)
}

/// Averages of `1{ω_0 = 0}` along points sampled from `(1/2, 1/2)^ℕ` and
/// `(1/3, 2/3)^ℕ`.
pub fn two_bernoulli_divergence(n: usize, seed: u64) -> Result<(f64, f64)> {
    check_n(n)?;
    let x = Observable::first_is_zero();
    let mu = SymbolicPoint::bernoulli(0.5, seed)?;
    let nu = SymbolicPoint::bernoulli(1.0 / 3.0, seed ^ 0x9e37_79b9_7f4a_7c15)?;
    let window = n.max(DEFAULT_WINDOW);
    Ok((
        birkhoff_average(&x, &mu.with_window(window), n)?,
        birkhoff_average(&x, &nu.with_window(window), n)?,
    ))
}

/// `ω ↦ ω + α mod 1`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RotationSystem {
    pub alpha: f64,
}

pub const HAAR_NODES: usize = 10_000;

impl RotationSystem {
    pub fn new(alpha: f64) -> Result<Self> {
        if !(alpha > 0.0 && alpha < 1.0) {
            return domain(format!("rotation number {alpha} must lie in (0, 1)"));
        }
        Ok(RotationSystem { alpha })
    }

    pub fn golden() -> Self {
        RotationSystem {
            alpha: (5f64.sqrt() - 1.0) / 2.0,
        }
    }

    pub fn orbit(&self, omega: f64, i: usize) -> f64 {
        (omega + i as f64 * self.alpha).rem_euclid(1.0)
    }

    pub fn birkhoff_average(&self, x: &dyn Fn(f64) -> f64, omega: f64, n: usize) -> Result<f64> {
        check_n(n)?;
        Ok((0..n).map(|i| x(self.orbit(omega, i))).sum::<f64>() / n as f64)
    }
}

/// Midpoint rule on the circle with [`HAAR_NODES`] nodes.
pub fn haar_integral(x: &(dyn Fn(f64) -> f64 + Sync)) -> f64 {
    let h = 1.0 / HAAR_NODES as f64;
    (0..HAAR_NODES).map(|i| x((i as f64 + 0.5) * h)).sum::<f64>() * h
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DeviationRow {
    pub n: usize,
    /// `sup_ω |A_n X(ω) - ∫ X dm|` over the point grid.
    pub sup_deviation: f64,
    pub worst_point: f64,
}

/// Sup-norm distance of Birkhoff averages from the Haar integral.
pub fn unique_ergodicity_test(
    rotation: &RotationSystem,
    x: &(dyn Fn(f64) -> f64 + Sync),
    n_grid: &[usize],
    point_grid: &[f64],
) -> Result<Vec<DeviationRow>> {
    if point_grid.is_empty() {
        return domain("point grid is empty");
    }
    for &n in n_grid {
        check_n(n)?;
    }
    let integral = haar_integral(x);
    let n_max = n_grid.iter().copied().max().unwrap_or(0);
    // per point: averages at every requested n
    let per_point: Vec<Vec<f64>> = point_grid
        .par_iter()
        .map(|&w| {
            let mut out = vec![0.0; n_grid.len()];
            let mut acc = 0.0;
            for i in 0..n_max {
                acc += x(rotation.orbit(w, i));
                for (slot, &n) in out.iter_mut().zip(n_grid) {
                    if n == i + 1 {
                        *slot = (acc / n as f64 - integral).abs();
                    }
                }
            }
            out
        })
        .collect();
    Ok(n_grid
        .iter()
        .enumerate()
        .map(|(j, &n)| {
            let (k, dev) = per_point
                .iter()
                .enumerate()
                .map(|(k, row)| (k, row[j]))
                .fold((0, f64::NEG_INFINITY), |b, v| if v.1 > b.1 { v } else { b });
            DeviationRow {
                n,
                sup_deviation: dev,
                worst_point: point_grid[k],
            }
        })
        .collect())
}

/// `2 / (n |1 - e^{2πiα}|)`, the bound for `cos 2πω`.
pub fn rotation_cos_bound(alpha: f64, n: usize) -> f64 {
    2.0 / (n as f64 * 2.0 * (std::f64::consts::PI * alpha).sin().abs())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn block_point_matches_its_definition() {
        let w = SymbolicPoint::block().prefix(16).unwrap();
        assert_eq!(w, vec![0, 1, 0, 1, 0, 0, 1, 1, 0, 0, 0, 0, 1, 1, 1, 1]);
    }

    #[test]
    fn block_point_averages() {
        let x = Observable::first_is_zero();
        let s = birkhoff_series(&x, &SymbolicPoint::block(), 3 << 12).unwrap();
        for n in 2..=13 {
            let a = s.average(1 << n);
            assert_eq!(a, 0.5);
            assert_eq!(s.average(3 << (n - 1)), 2.0 / 3.0);
        }
    }

    #[test]
    fn constants_and_window() {
        let p = SymbolicPoint::bernoulli(0.3, 5).unwrap().with_window(100);
        let c = Observable::constant(2.5);
        assert_eq!(birkhoff_average(&c, &p, 50).unwrap(), 2.5);
        assert!(birkhoff_average(&c, &p, 101).is_err());
        assert!(birkhoff_average(&c, &p, 0).is_err());
        assert!(SymbolicPoint::explicit(vec![2], false, 0).is_err());
    }

    #[test]
    fn periodic_explicit_point() {
        let p = SymbolicPoint::explicit(vec![0, 0, 1], true, 0).unwrap();
        let a = birkhoff_average(&Observable::first_is_zero(), &p, 300).unwrap();
        assert!((a - 2.0 / 3.0).abs() < 1e-15);
        let tail = SymbolicPoint::explicit(vec![1, 1], false, 0).unwrap();
        assert_eq!(tail.prefix(4).unwrap(), vec![1, 1, 0, 0]);
    }

    #[test]
    fn bernoulli_is_deterministic() {
        assert_eq!(two_bernoulli_divergence(1000, 4).unwrap(), two_bernoulli_divergence(1000, 4).unwrap());
        let (a, b) = two_bernoulli_divergence(1, 4).unwrap();
        assert!(a == 0.0 || a == 1.0);
        assert!(b == 0.0 || b == 1.0);
    }

    #[test]
    fn haar_quadrature() {
        let v = haar_integral(&|w| (2.0 * std::f64::consts::PI * w).cos());
        assert!(v.abs() < 1e-12);
        let v = haar_integral(&|w| w * w);
        assert!((v - 1.0 / 3.0).abs() < 1e-8);
        assert!(RotationSystem::new(1.0).is_err());
    }
}
