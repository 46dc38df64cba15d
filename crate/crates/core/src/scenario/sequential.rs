//! Distribution-level checks on sequential models.

use std::cell::RefCell;
use std::collections::HashMap;

use super::{direction_grid, standard_basis, BasisVerdict, GammaSet, TestFunction, EXACT_TOL};
use crate::dp::SequentialModel;
use crate::error::{domain, Error, Result};

/// `Γ_n`, the set of averages `(1/n) Σ E[X_k]`, through its support function
/// `h_n(p) = Ê[<p, S_n>]`.
pub fn gamma_n(model: &SequentialModel, n: usize) -> Result<GammaSet> {
    if n == 0 {
        return domain("gamma_n needs n >= 1");
    }
    if n > model.horizon {
        return domain(format!("n = {n} exceeds horizon {}", model.horizon));
    }
    let obs: Vec<usize> = (1..=n).collect();
    let d = model.dim();
    if d == 1 {
        let hi = model.projected_mean(&obs, &[1.0])?;
        let lo = -model.projected_mean(&obs, &[-1.0])?;
        return GammaSet::interval(lo, hi);
    }
    let values = direction_grid(d)
        .iter()
        .map(|p| model.projected_mean(&obs, p))
        .collect::<Result<Vec<_>>>()?;
    GammaSet::from_support(d, values)
}

/// Intersection of `Γ_n` over a schedule of `n`.
#[derive(Debug, Clone, PartialEq)]
pub struct GammaStar {
    pub set: GammaSet,
    /// The two last intersections agree within `1e-9`.
    pub converged: bool,
    /// Indices `n` whose `Γ_n` entered the intersection.
    pub schedule: Vec<usize>,
    /// Support change caused by the last schedule entry.
    pub last_change: f64,
}

/// Every `n <= 32` followed by the powers of two up to `n_max`.
pub fn gamma_star_schedule(n_max: usize) -> Vec<usize> {
    let mut s: Vec<usize> = (1..=n_max.min(32)).collect();
    let mut p = 64;
    while p <= n_max {
        s.push(p);
        p *= 2;
    }
    if n_max > 32 && *s.last().unwrap() != n_max {
        s.push(n_max);
    }
    s
}

/// `Γ_* ≈ ∩_{n <= n_max} Γ_n`, sampled on [`gamma_star_schedule`].
pub fn gamma_star(model: &SequentialModel, n_max: usize) -> Result<GammaStar> {
    if n_max == 0 {
        return domain("gamma_star needs n_max >= 1");
    }
    let schedule = gamma_star_schedule(n_max);
    let mut set = gamma_n(model, schedule[0])?;
    let mut last_change = f64::INFINITY;
    for &n in &schedule[1..] {
        let next = set.intersect(&gamma_n(model, n)?)?;
        last_change = next.support_gap(&set);
        set = next;
    }
    Ok(GammaStar {
        set,
        converged: last_change <= EXACT_TOL,
        schedule,
        last_change,
    })
}

fn check_disjoint(a: &[usize], b: &[usize]) -> Result<()> {
    if a.is_empty() || b.is_empty() {
        return domain("independence blocks must be nonempty");
    }
    if a.iter().any(|i| b.contains(i)) {
        return domain(format!("index blocks {a:?} and {b:?} overlap"));
    }
    Ok(())
}

/// `|Ê[φ(X, Y)] - Ê[Ê[φ(x, Y)]_{x = X}]|` with `X` the observations at
/// `outer` and `Y` those at `inner`.
///
/// `φ` receives the `outer` observations followed by the `inner` ones, each
/// block in increasing index order. The blocks may come in either model
/// order but must not share an index.
pub fn independence_gap(
    model: &SequentialModel,
    outer: &[usize],
    inner: &[usize],
    phi: &dyn Fn(&[f64]) -> f64,
) -> Result<f64> {
    check_disjoint(outer, inner)?;
    nested_gap(model, outer, inner, phi)
}

/// `|Ê[φ(X, Y)] - Ê[Ê[φ(x, Y)]_{x=X}]|` where `X` observes `outer` and `Y`
/// observes `inner`. An index may appear in both blocks: the joint term
/// sees one draw, the nested term an independent copy.
pub(crate) fn nested_gap(
    model: &SequentialModel,
    outer: &[usize],
    inner: &[usize],
    phi: &dyn Fn(&[f64]) -> f64,
) -> Result<f64> {
    let d = model.dim();
    let mut all: Vec<usize> = outer.iter().chain(inner).copied().collect();
    all.sort_unstable();
    all.dedup();
    // positions of each sorted observation in the (outer, inner) layout
    let slots: Vec<Vec<usize>> = all
        .iter()
        .map(|k| {
            let a = outer.iter().enumerate().filter(|(_, o)| *o == k).map(|(i, _)| i);
            let b = inner
                .iter()
                .enumerate()
                .filter(|(_, o)| *o == k)
                .map(|(i, _)| outer.len() + i);
            a.chain(b).collect()
        })
        .collect();
    let width = (outer.len() + inner.len()) * d;
    let joint = model.eval_cylinder(&all, &|xs| {
        let mut arranged = vec![0.0; width];
        for (ss, chunk) in slots.iter().zip(xs.chunks(d)) {
            for s in ss {
                arranged[s * d..(s + 1) * d].copy_from_slice(chunk);
            }
        }
        phi(&arranged)
    })?;

    let cache: RefCell<HashMap<Vec<i64>, f64>> = RefCell::new(HashMap::new());
    let failure: RefCell<Option<Error>> = RefCell::new(None);
    let nested = model.eval_cylinder(outer, &|x| {
        let key: Vec<i64> = x.iter().map(|v| (v * 1e11).round() as i64).collect();
        if let Some(v) = cache.borrow().get(&key) {
            return *v;
        }
        let v = model.eval_cylinder(inner, &|y| {
            let mut z = x.to_vec();
            z.extend_from_slice(y);
            phi(&z)
        });
        match v {
            Ok(v) => {
                cache.borrow_mut().insert(key, v);
                v
            }
            Err(e) => {
                failure.borrow_mut().get_or_insert(e);
                0.0
            }
        }
    })?;
    if let Some(e) = failure.into_inner() {
        return Err(e);
    }
    Ok((joint - nested).abs())
}

/// Whether the block `later` is independent from the earlier block `earlier`
/// for every function of the basis.
pub fn check_independent(
    model: &SequentialModel,
    earlier: &[usize],
    later: &[usize],
    basis: &[TestFunction],
) -> Result<BasisVerdict> {
    check_disjoint(earlier, later)?;
    if basis.is_empty() {
        return domain("empty test-function basis");
    }
    if earlier.iter().max() >= later.iter().min() {
        return domain(format!(
            "block {later:?} must come after {earlier:?} in model order"
        ));
    }
    let mut verdict = BasisVerdict::start();
    for phi in basis {
        let gap = independence_gap(model, earlier, later, &|z| phi.eval(z))?;
        verdict.record(&phi.name, gap);
    }
    Ok(verdict.finish())
}

/// Compares `Ê[φ(X_a)]` and `Ê[φ(X_b)]` for two equally long index blocks.
pub fn check_sequence_identically_distributed(
    model: &SequentialModel,
    a: &[usize],
    b: &[usize],
    basis: &[TestFunction],
) -> Result<BasisVerdict> {
    if a.len() != b.len() {
        return domain("blocks must have the same length");
    }
    if basis.is_empty() {
        return domain("empty test-function basis");
    }
    let mut verdict = BasisVerdict::start();
    for phi in basis {
        let x = model.eval_cylinder(a, &|z| phi.eval(z))?;
        let y = model.eval_cylinder(b, &|z| phi.eval(z))?;
        verdict.record(&phi.name, (x - y).abs());
    }
    Ok(verdict.finish())
}

/// Outcome of the variance inequality `Ê[|X - Ê[X]|²] <= Ê[|X - Y|²]`.
#[derive(Debug, Clone, PartialEq)]
pub struct VarianceCheck {
    pub lhs: f64,
    pub rhs: f64,
    pub holds: bool,
    pub identical: BasisVerdict,
    pub independent: BasisVerdict,
    /// Set when a precondition failed; `lhs` and `rhs` are then NaN.
    pub skipped: Option<String>,
}

/// Variance inequality for `X = X_x` and its candidate copy `Y = X_y`.
///
/// `Y` must come after `X`. Identical distribution and independence are
/// verified first on [`standard_basis`] with knots spread over `range`.
pub fn variance_inequality_check(
    model: &SequentialModel,
    x: usize,
    y: usize,
    range: (f64, f64),
) -> Result<VarianceCheck> {
    let d = model.dim();
    let identical = check_sequence_identically_distributed(
        model,
        &[x],
        &[y],
        &standard_basis(d, range.0, range.1),
    )?;
    let independent =
        check_independent(model, &[x], &[y], &standard_basis(2 * d, range.0, range.1))?;
    let reason = if !identical.holds {
        Some(format!("Y is not a copy of X (gap {} at {})", identical.max_gap, identical.worst))
    } else if !independent.holds {
        Some(format!(
            "Y is not independent from X (gap {} at {})",
            independent.max_gap, independent.worst
        ))
    } else {
        None
    };
    if reason.is_some() {
        return Ok(VarianceCheck {
            lhs: f64::NAN,
            rhs: f64::NAN,
            holds: false,
            identical,
            independent,
            skipped: reason,
        });
    }
    let mean: Vec<f64> = (0..d)
        .map(|i| model.eval_cylinder(&[x], &|z| z[i]))
        .collect::<Result<_>>()?;
    let lhs = model.eval_cylinder(&[x], &|z| {
        z.iter().zip(&mean).map(|(a, m)| (a - m).powi(2)).sum()
    })?;
    let rhs = model.eval_cylinder(&[x, y], &|z| {
        (0..d).map(|i| (z[i] - z[d + i]).powi(2)).sum()
    })?;
    Ok(VarianceCheck {
        lhs,
        rhs,
        holds: lhs <= rhs + EXACT_TOL,
        identical,
        independent,
        skipped: None,
    })
}
