//! Subsequence generators and the `(γ, δ)`-admissibility check.

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use crate::error::{domain, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Generator {
    /// `t_k = ⌊P(k)⌋ ∨ 1`, coefficients from the constant term up.
    Polynomial { coeffs: Vec<f64> },
    /// `t_k = values[k - 1]`.
    Explicit { values: Vec<f64> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubsequenceSpec {
    pub generator: Generator,
    pub gamma: f64,
    pub delta: f64,
    pub c1: f64,
    pub c2: f64,
    pub n0: usize,
}

impl SubsequenceSpec {
    pub fn polynomial(coeffs: Vec<f64>) -> Self {
        SubsequenceSpec {
            generator: Generator::Polynomial { coeffs },
            gamma: 0.5,
            delta: 1.0,
            c1: 1.0,
            c2: 0.5,
            n0: 2,
        }
    }

    /// Polynomial degree ignoring vanishing leading coefficients.
    pub fn degree(&self) -> Option<usize> {
        match &self.generator {
            Generator::Polynomial { coeffs } => coeffs.iter().rposition(|c| *c != 0.0),
            Generator::Explicit { .. } => None,
        }
    }

    pub fn leading_coefficient(&self) -> Option<f64> {
        match &self.generator {
            Generator::Polynomial { coeffs } => self.degree().map(|d| coeffs[d]),
            Generator::Explicit { .. } => None,
        }
    }

    pub fn g(&self, k: usize) -> Result<f64> {
        match &self.generator {
            Generator::Polynomial { coeffs } => {
                let x = k as f64;
                let p = coeffs.iter().rev().fold(0.0, |acc, c| acc * x + c);
                Ok(p.floor().max(1.0))
            }
            Generator::Explicit { values } => values
                .get(k.wrapping_sub(1))
                .copied()
                .ok_or_else(|| crate::Error::Domain(format!("explicit sequence has no term {k}"))),
        }
    }

    /// `t_1 … t_n`.
    pub fn times(&self, n: usize) -> Result<Vec<f64>> {
        (1..=n).map(|k| self.g(k)).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdmissibilityRow {
    pub n: usize,
    /// `|Π_n| = ⌊n^γ⌋`.
    pub pi_size: usize,
    pub pi_bound: f64,
    /// Smallest gap between retained times; infinite with fewer than two.
    pub min_gap: f64,
    /// `c₂ (ln n)^{1+δ}`.
    pub gap_bound: f64,
    pub pass: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AdmissibilityReport {
    pub rows: Vec<AdmissibilityRow>,
    pub all_pass: bool,
    pub first_failure: Option<usize>,
}

/// Checks both admissibility inequalities for every `n` in
/// `[max(N₀, lo), hi]` with `Π_n = {1, …, ⌊n^γ⌋}`. The times must be
/// nondecreasing, so the smallest gap is between neighbours.
pub fn is_admissible(spec: &SubsequenceSpec, lo: usize, hi: usize) -> Result<AdmissibilityReport> {
    if spec.gamma < 0.0 || spec.gamma > 1.0 || spec.delta < 0.0 {
        return domain("need 0 <= γ <= 1 and δ >= 0");
    }
    let start = lo.max(spec.n0).max(1);
    if hi < start {
        return Ok(AdmissibilityReport {
            rows: Vec::new(),
            all_pass: true,
            first_failure: None,
        });
    }
    let t = spec.times(hi)?;
    if let Some(k) = t.windows(2).position(|w| w[1] < w[0]) {
        return domain(format!("generator decreases at k = {}", k + 1));
    }
    // diffs[k] = t_{k+2} - t_{k+1} in 1-based terms: gap between k+1 and k+2
    let diffs: Vec<f64> = t.windows(2).map(|w| w[1] - w[0]).collect();
    let mut deque: VecDeque<usize> = VecDeque::new();
    let mut pushed = 0;
    let mut rows = Vec::with_capacity(hi - start + 1);
    for n in start..=hi {
        let m = (n as f64).powf(spec.gamma).floor() as usize;
        // retained indices m+1..=n, neighbour gaps diffs[m..n-1]
        while pushed < n - 1 {
            while deque.back().is_some_and(|&j| diffs[j] >= diffs[pushed]) {
                deque.pop_back();
            }
            deque.push_back(pushed);
            pushed += 1;
        }
        while deque.front().is_some_and(|&j| j < m) {
            deque.pop_front();
        }
        let min_gap = deque.front().map_or(f64::INFINITY, |&j| diffs[j]);
        let pi_bound = spec.c1 * (n as f64).powf(spec.gamma);
        let gap_bound = spec.c2 * (n as f64).ln().powf(1.0 + spec.delta);
        rows.push(AdmissibilityRow {
            n,
            pi_size: m,
            pi_bound,
            min_gap,
            gap_bound,
            pass: m as f64 <= pi_bound && min_gap >= gap_bound,
        });
    }
    let first_failure = rows.iter().find(|r| !r.pass).map(|r| r.n);
    Ok(AdmissibilityReport {
        all_pass: first_failure.is_none(),
        first_failure,
        rows,
    })
}
