use std::fmt;
use std::sync::Arc;

/// Named Lipschitz test function on `R^d`.
#[derive(Clone)]
pub struct TestFunction {
    pub name: String,
    /// Lipschitz constant with respect to the Euclidean norm.
    pub lip: f64,
    f: Arc<dyn Fn(&[f64]) -> f64 + Send + Sync>,
}

impl TestFunction {
    pub fn new(
        name: impl Into<String>,
        lip: f64,
        f: impl Fn(&[f64]) -> f64 + Send + Sync + 'static,
    ) -> Self {
        TestFunction {
            name: name.into(),
            lip,
            f: Arc::new(f),
        }
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        (self.f)(x)
    }
}

impl fmt::Debug for TestFunction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "TestFunction({}, lip={})", self.name, self.lip)
    }
}

fn ramp(z: f64) -> f64 {
    z.max(0.0).min(1.0)
}

/// Fixed test-function family used by the distribution and independence checks.
///
/// Members: the constant 1; `±x_i`; `|x_i - c|` for nine equally spaced `c`
/// in `[lo, hi]`; and for every coordinate pair `i < j` the products
/// `r(s(x_i - c)) · r(t(x_j - c'))` with `r(z) = z⁺ ∧ 1`, signs `s, t = ±1`
/// and `c, c'` on the same nine-point grid.
pub fn standard_basis(dim: usize, lo: f64, hi: f64) -> Vec<TestFunction> {
    let grid: Vec<f64> = (0..9).map(|k| lo + (hi - lo) * k as f64 / 8.0).collect();
    let mut out = vec![TestFunction::new("1", 0.0, |_| 1.0)];
    for i in 0..dim {
        out.push(TestFunction::new(format!("x{i}"), 1.0, move |x| x[i]));
        out.push(TestFunction::new(format!("-x{i}"), 1.0, move |x| -x[i]));
        for &c in &grid {
            out.push(TestFunction::new(format!("|x{i}-{c}|"), 1.0, move |x| {
                (x[i] - c).abs()
            }));
        }
    }
    for i in 0..dim {
        for j in (i + 1)..dim {
            for &s in &[1.0, -1.0] {
                for &t in &[1.0, -1.0] {
                    for &c in &grid {
                        for &c2 in &grid {
                            out.push(TestFunction::new(
                                format!("r({s}(x{i}-{c}))*r({t}(x{j}-{c2}))"),
                                std::f64::consts::SQRT_2,
                                move |x| ramp(s * (x[i] - c)) * ramp(t * (x[j] - c2)),
                            ));
                        }
                    }
                }
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn basis_sizes() {
        assert_eq!(standard_basis(1, -2.0, 2.0).len(), 1 + 2 + 9);
        assert_eq!(standard_basis(2, -2.0, 2.0).len(), 1 + 2 * 11 + 4 * 81);
    }

    #[test]
    fn lipschitz_constants_hold_on_samples() {
        let basis = standard_basis(2, -1.0, 1.0);
        let pts: [[f64; 2]; 5] = [[-1.3, 0.2], [0.4, -0.9], [0.0, 0.0], [2.0, 1.5], [0.3, 0.31]];
        for f in &basis {
            for a in &pts {
                for b in &pts {
                    let d = ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2)).sqrt();
                    assert!((f.eval(a) - f.eval(b)).abs() <= f.lip * d + 1e-12, "{}", f.name);
                }
            }
        }
    }
}
