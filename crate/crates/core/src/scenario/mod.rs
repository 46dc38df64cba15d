//! Finite scenario sets and the sublinear expectation they induce.
//!
//! A sublinear expectation on a finite sample space is represented as the
//! upper envelope `Ê[X] = max_m Σ_ω X(ω) P_m(ω)` of finitely many
//! probability vectors sharing one atom list.

mod basis;
mod gamma;
pub mod io;
mod sequential;

use std::collections::HashSet;
use std::sync::Arc;

pub use basis::{standard_basis, TestFunction};
pub use gamma::{direction_grid, GammaSet, DIRECTIONS_PER_CIRCLE, MEMBERSHIP_TOL};
pub use sequential::{
    check_independent, check_sequence_identically_distributed, gamma_n, gamma_star,
    gamma_star_schedule, independence_gap, variance_inequality_check, GammaStar, VarianceCheck,
};
pub(crate) use sequential::nested_gap;

use crate::error::{domain, Result};

/// Tolerance for probability weights summing to one.
pub const WEIGHT_TOL: f64 = 1e-12;
/// Absolute tolerance for claims that hold exactly in rational arithmetic.
pub const EXACT_TOL: f64 = 1e-9;

/// Labelled atoms of a finite sample space.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleSpace {
    atoms: Vec<String>,
}

impl SampleSpace {
    pub fn new(atoms: Vec<String>) -> Result<Arc<Self>> {
        if atoms.is_empty() {
            return domain("sample space needs at least one atom");
        }
        let mut seen = HashSet::new();
        for a in &atoms {
            if !seen.insert(a.as_str()) {
                return domain(format!("duplicate atom `{a}`"));
            }
        }
        Ok(Arc::new(SampleSpace { atoms }))
    }

    /// Atoms named `0, 1, ..., n-1`.
    pub fn indexed(n: usize) -> Result<Arc<Self>> {
        SampleSpace::new((0..n).map(|i| i.to_string()).collect())
    }

    pub fn atoms(&self) -> &[String] {
        &self.atoms
    }

    pub fn len(&self) -> usize {
        self.atoms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.atoms.is_empty()
    }

    pub fn index_of(&self, atom: &str) -> Option<usize> {
        self.atoms.iter().position(|a| a == atom)
    }
}

fn same_space(a: &Arc<SampleSpace>, b: &Arc<SampleSpace>) -> bool {
    Arc::ptr_eq(a, b) || a.atoms == b.atoms
}

/// Probability weights over a sample space.
#[derive(Debug, Clone, PartialEq)]
pub struct DiscreteMeasure {
    weights: Vec<f64>,
}

impl DiscreteMeasure {
    pub fn new(weights: Vec<f64>) -> Result<Self> {
        if weights.iter().any(|w| !w.is_finite() || *w < 0.0) {
            return domain("weights must be finite and nonnegative");
        }
        let total: f64 = weights.iter().sum();
        if (total - 1.0).abs() > WEIGHT_TOL {
            return domain(format!("weights sum to {total}, not 1"));
        }
        Ok(DiscreteMeasure { weights })
    }

    pub fn dirac(n: usize, at: usize) -> Self {
        let mut weights = vec![0.0; n];
        weights[at] = 1.0;
        DiscreteMeasure { weights }
    }

    pub fn uniform(n: usize) -> Self {
        DiscreteMeasure {
            weights: vec![1.0 / n as f64; n],
        }
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// Linear expectation of a scalar table indexed by atom.
    pub fn expect(&self, values: &[f64]) -> f64 {
        self.weights.iter().zip(values).map(|(w, v)| w * v).sum()
    }
}

/// Nonempty finite family of measures on a shared sample space.
#[derive(Debug, Clone)]
pub struct ScenarioSet {
    space: Arc<SampleSpace>,
    measures: Vec<DiscreteMeasure>,
}

/// Value of `Ê[X]` together with the first measure attaining it.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Evaluation {
    pub value: f64,
    pub argmax: usize,
}

impl ScenarioSet {
    pub fn new(space: Arc<SampleSpace>, measures: Vec<DiscreteMeasure>) -> Result<Self> {
        if measures.is_empty() {
            return domain("scenario set must contain at least one measure");
        }
        if let Some(m) = measures.iter().find(|m| m.weights.len() != space.len()) {
            return domain(format!(
                "measure has {} weights for {} atoms",
                m.weights.len(),
                space.len()
            ));
        }
        Ok(ScenarioSet { space, measures })
    }

    /// All Dirac masses on the space: `Ê[X] = max_ω X(ω)`.
    pub fn all_diracs(space: Arc<SampleSpace>) -> Self {
        let n = space.len();
        let measures = (0..n).map(|i| DiscreteMeasure::dirac(n, i)).collect();
        ScenarioSet { space, measures }
    }

    pub fn space(&self) -> &Arc<SampleSpace> {
        &self.space
    }

    pub fn measures(&self) -> &[DiscreteMeasure] {
        &self.measures
    }

    fn check_space(&self, x: &RandomVector) -> Result<()> {
        if !same_space(&self.space, &x.space) {
            return domain("random vector lives on a different sample space");
        }
        Ok(())
    }

    /// `Ê[X]` for a scalar random variable; ties go to the lowest index.
    pub fn eval(&self, x: &RandomVector) -> Result<Evaluation> {
        self.check_space(x)?;
        if x.dim != 1 {
            return domain(format!("eval needs a scalar variable, got dim {}", x.dim));
        }
        Ok(self.eval_table(&x.values))
    }

    /// `Ê[φ(X)]`.
    pub fn eval_fn(&self, x: &RandomVector, phi: &dyn Fn(&[f64]) -> f64) -> Result<Evaluation> {
        self.check_space(x)?;
        let table: Vec<f64> = x.points().map(phi).collect();
        Ok(self.eval_table(&table))
    }

    fn eval_table(&self, table: &[f64]) -> Evaluation {
        let mut best = Evaluation {
            value: f64::NEG_INFINITY,
            argmax: 0,
        };
        for (i, m) in self.measures.iter().enumerate() {
            let v = m.expect(table);
            if v > best.value {
                best = Evaluation { value: v, argmax: i };
            }
        }
        best
    }

    /// Characterizing set Γ of `X`: an interval for `d = 1`, support samples otherwise.
    pub fn gamma_of(&self, x: &RandomVector) -> Result<GammaSet> {
        self.check_space(x)?;
        if x.dim == 1 {
            let hi = self.eval_table(&x.values).value;
            let neg: Vec<f64> = x.values.iter().map(|v| -v).collect();
            let lo = -self.eval_table(&neg).value;
            return GammaSet::interval(lo, hi);
        }
        let values = direction_grid(x.dim)
            .iter()
            .map(|p| {
                let table: Vec<f64> = x.points().map(|pt| gamma::dot(p, pt)).collect();
                self.eval_table(&table).value
            })
            .collect();
        GammaSet::from_support(x.dim, values)
    }

    /// `Ê[-X] = -Ê[X]` within [`EXACT_TOL`].
    pub fn has_no_mean_uncertainty(&self, x: &RandomVector) -> Result<bool> {
        let hi = self.eval(x)?.value;
        let lo = -self.eval(&x.map(1, |p, out| out[0] = -p[0]))?.value;
        Ok((hi - lo).abs() <= EXACT_TOL)
    }

    /// Compares `Ê[φ(X)]` with `Ê[φ(Y)]` over a test-function basis.
    pub fn check_identically_distributed(
        &self,
        x: &RandomVector,
        y: &RandomVector,
        basis: &[TestFunction],
    ) -> Result<BasisVerdict> {
        if basis.is_empty() {
            return domain("empty test-function basis");
        }
        if x.dim != y.dim {
            return domain(format!("dimensions differ: {} vs {}", x.dim, y.dim));
        }
        self.check_space(x)?;
        self.check_space(y)?;
        let mut verdict = BasisVerdict::start();
        for phi in basis {
            let a = self.eval_fn(x, &|p| phi.eval(p))?.value;
            let b = self.eval_fn(y, &|p| phi.eval(p))?.value;
            verdict.record(&phi.name, (a - b).abs());
        }
        Ok(verdict.finish())
    }
}

/// Outcome of a basis-wide comparison.
#[derive(Debug, Clone, PartialEq)]
pub struct BasisVerdict {
    pub holds: bool,
    pub max_gap: f64,
    pub worst: String,
}

impl BasisVerdict {
    pub(crate) fn start() -> Self {
        BasisVerdict {
            holds: true,
            max_gap: 0.0,
            worst: String::new(),
        }
    }

    pub(crate) fn record(&mut self, name: &str, gap: f64) {
        if gap > self.max_gap || self.worst.is_empty() {
            if gap > self.max_gap {
                self.max_gap = gap;
            }
            self.worst = name.to_string();
        }
    }

    pub(crate) fn finish(mut self) -> Self {
        self.holds = self.max_gap <= EXACT_TOL;
        self
    }
}

/// Map from atoms to points of `R^d`.
#[derive(Debug, Clone)]
pub struct RandomVector {
    space: Arc<SampleSpace>,
    dim: usize,
    values: Vec<f64>,
}

impl RandomVector {
    /// `values` is row-major: `dim` entries per atom.
    pub fn new(space: Arc<SampleSpace>, dim: usize, values: Vec<f64>) -> Result<Self> {
        if dim == 0 {
            return domain("random vector dimension must be at least 1");
        }
        if values.len() != dim * space.len() {
            return domain(format!(
                "expected {} entries ({} atoms × dim {}), got {}",
                dim * space.len(),
                space.len(),
                dim,
                values.len()
            ));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return domain("random vector entries must be finite");
        }
        Ok(RandomVector { space, dim, values })
    }

    pub fn scalar(space: Arc<SampleSpace>, values: Vec<f64>) -> Result<Self> {
        RandomVector::new(space, 1, values)
    }

    pub fn constant(space: Arc<SampleSpace>, c: f64) -> Self {
        let n = space.len();
        RandomVector {
            space,
            dim: 1,
            values: vec![c; n],
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn space(&self) -> &Arc<SampleSpace> {
        &self.space
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn point(&self, atom: usize) -> &[f64] {
        &self.values[atom * self.dim..(atom + 1) * self.dim]
    }

    pub fn points(&self) -> impl Iterator<Item = &[f64]> {
        self.values.chunks(self.dim)
    }

    /// Pointwise transform into `R^out_dim`.
    pub fn map(&self, out_dim: usize, f: impl Fn(&[f64], &mut [f64])) -> RandomVector {
        let mut values = vec![0.0; out_dim * self.space.len()];
        for (p, out) in self.points().zip(values.chunks_mut(out_dim)) {
            f(p, out);
        }
        RandomVector {
            space: self.space.clone(),
            dim: out_dim,
            values,
        }
    }

    /// Stack `(X, Y)` into one vector.
    pub fn join(&self, other: &RandomVector) -> Result<RandomVector> {
        if !same_space(&self.space, &other.space) {
            return domain("cannot join vectors on different spaces");
        }
        let dim = self.dim + other.dim;
        let mut values = Vec::with_capacity(dim * self.space.len());
        for (a, b) in self.points().zip(other.points()) {
            values.extend_from_slice(a);
            values.extend_from_slice(b);
        }
        Ok(RandomVector {
            space: self.space.clone(),
            dim,
            values,
        })
    }
}
