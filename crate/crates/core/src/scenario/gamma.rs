//! Bounded closed convex sets in `R^d` stored through their support function.
//!
//! In one dimension the set is an interval. In higher dimensions it is the
//! polytope `{x : <p, x> <= h(p)}` over a fixed grid of unit directions, which
//! is an outer approximation that is exact at every stored direction.

use serde::{Deserialize, Serialize};

use crate::error::{domain, Result};

/// Directions per great circle of the grid.
pub const DIRECTIONS_PER_CIRCLE: usize = 64;

/// Membership tolerance.
pub const MEMBERSHIP_TOL: f64 = 1e-9;

/// Unit directions used for support-function samples.
///
/// `d = 2` gives 64 equally spaced directions. For `d >= 3` every coordinate
/// plane contributes its own 64-direction circle; duplicated axis directions
/// are kept once.
pub fn direction_grid(dim: usize) -> Vec<Vec<f64>> {
    assert!(dim >= 2, "direction grids are for d >= 2");
    let mut out: Vec<Vec<f64>> = Vec::new();
    for i in 0..dim {
        for j in (i + 1)..dim {
            for k in 0..DIRECTIONS_PER_CIRCLE {
                let angle = 2.0 * std::f64::consts::PI * k as f64 / DIRECTIONS_PER_CIRCLE as f64;
                let mut p = vec![0.0; dim];
                p[i] = angle.cos();
                p[j] = angle.sin();
                // snap round-off so that axis directions dedupe exactly
                for v in p.iter_mut() {
                    if v.abs() < 1e-15 {
                        *v = 0.0;
                    }
                }
                let dup = out
                    .iter()
                    .any(|q| q.iter().zip(&p).all(|(a, b)| (a - b).abs() < 1e-12));
                if !dup {
                    out.push(p);
                }
            }
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum GammaSet {
    Interval { lo: f64, hi: f64 },
    Support {
        dim: usize,
        directions: Vec<Vec<f64>>,
        values: Vec<f64>,
    },
}

impl GammaSet {
    pub fn interval(lo: f64, hi: f64) -> Result<Self> {
        if !(lo.is_finite() && hi.is_finite()) || lo > hi + MEMBERSHIP_TOL {
            return domain(format!("invalid interval [{lo}, {hi}]"));
        }
        Ok(GammaSet::Interval { lo, hi: hi.max(lo) })
    }

    /// Build from support values sampled on [`direction_grid`].
    pub fn from_support(dim: usize, values: Vec<f64>) -> Result<Self> {
        let directions = direction_grid(dim);
        if directions.len() != values.len() {
            return domain(format!(
                "expected {} support values, got {}",
                directions.len(),
                values.len()
            ));
        }
        Ok(GammaSet::Support {
            dim,
            directions,
            values,
        })
    }

    /// Support samples `h(p) = max_{x} <p, x>` of a finite point cloud.
    pub fn hull_of_points(dim: usize, points: &[Vec<f64>]) -> Result<Self> {
        if points.is_empty() {
            return domain("empty point cloud");
        }
        if dim == 1 {
            let lo = points.iter().map(|p| p[0]).fold(f64::INFINITY, f64::min);
            let hi = points.iter().map(|p| p[0]).fold(f64::NEG_INFINITY, f64::max);
            return GammaSet::interval(lo, hi);
        }
        let directions = direction_grid(dim);
        let values = directions
            .iter()
            .map(|p| {
                points
                    .iter()
                    .map(|x| dot(p, x))
                    .fold(f64::NEG_INFINITY, f64::max)
            })
            .collect();
        Ok(GammaSet::Support {
            dim,
            directions,
            values,
        })
    }

    pub fn dim(&self) -> usize {
        match self {
            GammaSet::Interval { .. } => 1,
            GammaSet::Support { dim, .. } => *dim,
        }
    }

    /// Stored `(direction, support value)` pairs. An interval reports `p = -1, +1`.
    pub fn support_samples(&self) -> Vec<(Vec<f64>, f64)> {
        match self {
            GammaSet::Interval { lo, hi } => vec![(vec![-1.0], -lo), (vec![1.0], *hi)],
            GammaSet::Support {
                directions, values, ..
            } => directions.iter().cloned().zip(values.iter().copied()).collect(),
        }
    }

    /// `h(p) + h(-p) >= 0` for every stored pair, i.e. the body is nonempty.
    pub fn is_nonempty(&self) -> bool {
        match self {
            GammaSet::Interval { lo, hi } => lo <= hi,
            GammaSet::Support {
                directions, values, ..
            } => directions.iter().enumerate().all(|(i, p)| {
                match directions
                    .iter()
                    .position(|q| q.iter().zip(p).all(|(a, b)| (a + b).abs() < 1e-12))
                {
                    Some(j) => values[i] + values[j] >= -MEMBERSHIP_TOL,
                    None => true,
                }
            }),
        }
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        match self {
            GammaSet::Interval { lo, hi } => {
                x[0] >= lo - MEMBERSHIP_TOL && x[0] <= hi + MEMBERSHIP_TOL
            }
            GammaSet::Support {
                directions, values, ..
            } => directions
                .iter()
                .zip(values)
                .all(|(p, h)| dot(p, x) <= h + MEMBERSHIP_TOL),
        }
    }

    /// Distance to the set: exact for intervals, the largest violated
    /// half-space for polytopes.
    pub fn distance(&self, x: &[f64]) -> f64 {
        match self {
            GammaSet::Interval { lo, hi } => {
                if x[0] < *lo {
                    lo - x[0]
                } else if x[0] > *hi {
                    x[0] - hi
                } else {
                    0.0
                }
            }
            GammaSet::Support {
                directions, values, ..
            } => directions
                .iter()
                .zip(values)
                .map(|(p, h)| dot(p, x) - h)
                .fold(0.0, f64::max),
        }
    }

    /// Intersection; both operands must live on the same grid.
    pub fn intersect(&self, other: &GammaSet) -> Result<GammaSet> {
        match (self, other) {
            (GammaSet::Interval { lo: a, hi: b }, GammaSet::Interval { lo: c, hi: d }) => {
                Ok(GammaSet::Interval {
                    lo: a.max(*c),
                    hi: b.min(*d),
                })
            }
            (
                GammaSet::Support {
                    dim,
                    directions,
                    values,
                },
                GammaSet::Support {
                    dim: d2,
                    values: v2,
                    ..
                },
            ) if dim == d2 && values.len() == v2.len() => Ok(GammaSet::Support {
                dim: *dim,
                directions: directions.clone(),
                values: values.iter().zip(v2).map(|(a, b)| a.min(*b)).collect(),
            }),
            _ => domain("intersection of Γ sets with different dimensions"),
        }
    }

    /// `self ⊆ other` as a support-value inequality at every stored direction.
    pub fn is_subset_of(&self, other: &GammaSet, tol: f64) -> bool {
        match (self, other) {
            (GammaSet::Interval { lo: a, hi: b }, GammaSet::Interval { lo: c, hi: d }) => {
                *a >= c - tol && *b <= d + tol
            }
            (GammaSet::Support { values, .. }, GammaSet::Support { values: v2, .. }) => {
                values.len() == v2.len() && values.iter().zip(v2).all(|(a, b)| *a <= b + tol)
            }
            _ => false,
        }
    }

    /// Largest change of a support value between two sets on the same grid.
    pub fn support_gap(&self, other: &GammaSet) -> f64 {
        match (self, other) {
            (GammaSet::Interval { lo: a, hi: b }, GammaSet::Interval { lo: c, hi: d }) => {
                (a - c).abs().max((b - d).abs())
            }
            (GammaSet::Support { values, .. }, GammaSet::Support { values: v2, .. }) => values
                .iter()
                .zip(v2)
                .map(|(a, b)| (a - b).abs())
                .fold(0.0, f64::max),
            _ => f64::INFINITY,
        }
    }

    /// `max_{x in Γ} φ(x)`.
    ///
    /// Intervals are searched over both endpoints and 4096 equal cells;
    /// polytopes in `d = 2` over a 257×257 grid of the bounding box. The
    /// search error is at most `l_φ` times half the cell width.
    pub fn maximize(&self, phi: &dyn Fn(&[f64]) -> f64) -> Result<f64> {
        match self {
            GammaSet::Interval { lo, hi } => {
                if lo > hi {
                    return domain("maximize over an empty interval");
                }
                let cells = 4096;
                let mut best = phi(&[*lo]).max(phi(&[*hi]));
                for i in 1..cells {
                    let x = lo + (hi - lo) * i as f64 / cells as f64;
                    best = best.max(phi(&[x]));
                }
                Ok(best)
            }
            GammaSet::Support {
                dim,
                directions,
                values,
            } => {
                if *dim != 2 {
                    return domain("maximize over Γ is implemented for d <= 2");
                }
                // bounding box from the axis directions
                let h = |target: [f64; 2]| {
                    directions
                        .iter()
                        .zip(values)
                        .find(|(p, _)| (p[0] - target[0]).abs() < 1e-12 && (p[1] - target[1]).abs() < 1e-12)
                        .map(|(_, v)| *v)
                };
                let (xmax, xmin, ymax, ymin) = match (
                    h([1.0, 0.0]),
                    h([-1.0, 0.0]),
                    h([0.0, 1.0]),
                    h([0.0, -1.0]),
                ) {
                    (Some(a), Some(b), Some(c), Some(d)) => (a, -b, c, -d),
                    _ => return domain("direction grid lacks axis directions"),
                };
                let cells = 256;
                let mut best = f64::NEG_INFINITY;
                for i in 0..=cells {
                    for j in 0..=cells {
                        let x = [
                            xmin + (xmax - xmin) * i as f64 / cells as f64,
                            ymin + (ymax - ymin) * j as f64 / cells as f64,
                        ];
                        if self.contains(&x) {
                            best = best.max(phi(&x));
                        }
                    }
                }
                if best == f64::NEG_INFINITY {
                    return domain("Γ has empty interior on the search grid");
                }
                Ok(best)
            }
        }
    }
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grid_sizes() {
        assert_eq!(direction_grid(2).len(), 64);
        // three circles of 64 share the six axis directions pairwise
        assert_eq!(direction_grid(3).len(), 3 * 64 - 6);
        for p in direction_grid(3) {
            assert!((dot(&p, &p) - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn interval_distance_and_intersection() {
        let a = GammaSet::interval(-3.0, 3.0).unwrap();
        let b = GammaSet::interval(-3.0, 2.0).unwrap();
        let c = a.intersect(&b).unwrap();
        assert_eq!(c, b);
        assert!(c.is_subset_of(&a, 0.0));
        assert_eq!(c.distance(&[2.5]), 0.5);
        assert_eq!(c.distance(&[-4.0]), 1.0);
        assert!(GammaSet::interval(1.0, 0.0).is_err());
    }

    #[test]
    fn square_hull_support() {
        let pts: Vec<Vec<f64>> = [[-1.0, -1.0], [-1.0, 1.0], [1.0, -1.0], [1.0, 1.0]]
            .iter()
            .map(|p| p.to_vec())
            .collect();
        let g = GammaSet::hull_of_points(2, &pts).unwrap();
        for (p, h) in g.support_samples() {
            assert!((h - (p[0].abs() + p[1].abs())).abs() < 1e-12);
        }
        assert!(g.contains(&[0.9, -0.9]));
        assert!(!g.contains(&[1.1, 0.0]));
        assert!(g.is_nonempty());
        let m = g.maximize(&|x| x[0] + 2.0 * x[1]).unwrap();
        assert!((m - 3.0).abs() < 1e-9);
    }
}
