//! Backward lattice for scalar G-SDEs.
//!
//! One step of length `dt` maps `u` to
//! `max_q ½[u(x + μ_q dt + σ√(q dt)) + u(x + μ_q dt − σ√(q dt))]`
//! with linear interpolation between nodes and linear extension past the
//! ends. The step is a fixed operator, so `t` is rounded to a multiple of
//! `dt` and compositions agree exactly.

use rayon::prelude::*;

use super::GsdeModel;
use crate::dp::GridSpec;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DpConfig {
    pub dx: f64,
    /// The largest noise displacement spans this many nodes; fixes `dt`.
    pub spread_nodes: usize,
    /// Half-width of the grid; by default the query points plus six
    /// stationary standard deviations.
    pub half_width: Option<f64>,
}

impl Default for DpConfig {
    fn default() -> Self {
        DpConfig {
            dx: 0.01,
            spread_nodes: 4,
            half_width: None,
        }
    }
}

#[derive(Debug, Clone)]
pub struct DpOperator {
    pub grid: GridSpec,
    pub dt: f64,
    /// Per node, per control: the two read positions in node units.
    reads: Vec<(f64, f64)>,
    n_controls: usize,
}

impl DpOperator {
    /// Grid covering `queries`.
    pub fn new(model: &GsdeModel, cfg: DpConfig, queries: &[f64]) -> Result<Self> {
        if model.n != 1 || model.d != 1 {
            return Err(Error::Unsupported(format!(
                "lattice evaluator needs n = d = 1, model has n = {}, d = {}",
                model.n, model.d
            )));
        }
        if !(cfg.dx > 0.0) || cfg.spread_nodes == 0 {
            return Err(Error::Domain("lattice needs dx > 0 and spread_nodes ≥ 1".into()));
        }
        let qs: Vec<f64> = model.q.points().iter().map(|p| p[0]).collect();
        let q_hi = qs.iter().fold(0.0f64, |m, v| m.max(*v));
        let spread2 = model.sigma_bound.powi(2) * q_hi;
        let half = cfg.half_width.unwrap_or_else(|| {
            let reach = queries.iter().fold(0.0f64, |m, v| m.max(v.abs()));
            let sd = (spread2 / (2.0 * model.claimed_alpha.max(0.1))).sqrt();
            reach + 6.0 * sd + 2.0
        });
        let grid = GridSpec::centered(half, cfg.dx)?;
        let step = cfg.spread_nodes as f64 * cfg.dx;
        let dt = if spread2 > 0.0 { step * step / spread2 } else { step };
        let mut reads = Vec::with_capacity(grid.len * qs.len());
        let (mut mu, mut scratch, mut sig) = ([0.0], [0.0], [0.0]);
        for i in 0..grid.len {
            let x = [grid.x(i)];
            model.diffusion(&x, &mut sig);
            for &q in &qs {
                model.total_drift(&x, &[q], &mut mu, &mut scratch);
                let centre = x[0] + mu[0] * dt;
                let s = sig[0].abs() * (q * dt).sqrt();
                reads.push((
                    (centre + s - grid.x_min) / grid.dx,
                    (centre - s - grid.x_min) / grid.dx,
                ));
            }
        }
        Ok(DpOperator {
            grid,
            dt,
            reads,
            n_controls: qs.len(),
        })
    }

    pub fn sample(&self, phi: &dyn Fn(f64) -> f64) -> Vec<f64> {
        (0..self.grid.len).map(|i| phi(self.grid.x(i))).collect()
    }

    pub fn steps_for(&self, t: f64) -> usize {
        (t / self.dt).round() as usize
    }

    /// `steps` applications of the one-step operator.
    pub fn apply(&self, values: &[f64], steps: usize) -> Vec<f64> {
        let mut cur = values.to_vec();
        let mut next = vec![0.0; cur.len()];
        for _ in 0..steps {
            next.par_iter_mut().enumerate().for_each(|(i, out)| {
                let row = &self.reads[i * self.n_controls..(i + 1) * self.n_controls];
                *out = row
                    .iter()
                    .map(|(a, b)| 0.5 * (read(&cur, *a) + read(&cur, *b)))
                    .fold(f64::NEG_INFINITY, f64::max);
            });
            std::mem::swap(&mut cur, &mut next);
        }
        cur
    }

    /// `T_t` on grid values, `t` rounded to the step.
    pub fn evolve(&self, values: &[f64], t: f64) -> Vec<f64> {
        self.apply(values, self.steps_for(t))
    }

    pub fn interpolate(&self, values: &[f64], x: f64) -> f64 {
        read(values, (x - self.grid.x_min) / self.grid.dx)
    }
}

/// Linear interpolation at a position in node units, extended linearly.
fn read(values: &[f64], pos: f64) -> f64 {
    let last = values.len() - 1;
    let i = (pos.floor().max(0.0) as usize).min(last - 1);
    let f = pos - i as f64;
    values[i] + (values[i + 1] - values[i]) * f
}

#[cfg(test)]
mod tests {
    use super::*;

    fn gou() -> GsdeModel {
        GsdeModel::gou(1.0, 1.0, 1.0, 4.0).unwrap()
    }

    #[test]
    fn identity_decays_at_euler_rate() {
        let op = DpOperator::new(&gou(), DpConfig::default(), &[1.0]).unwrap();
        let u = op.evolve(&op.sample(&|x| x), 1.0);
        let k = op.steps_for(1.0) as i32;
        let exact = (1.0 - op.dt).powi(k);
        assert!((op.interpolate(&u, 1.0) - exact).abs() < 1e-9);
        assert!((exact - (-1.0f64).exp()).abs() < 1e-3);
    }

    #[test]
    fn chapman_is_exact() {
        let op = DpOperator::new(&gou(), DpConfig::default(), &[0.5]).unwrap();
        let phi = op.sample(&|x| x.abs().min(2.0));
        let both = op.apply(&phi, 300);
        let split = op.apply(&op.apply(&phi, 100), 200);
        assert_eq!(both, split);
    }

    #[test]
    fn higher_dimension_is_unsupported() {
        let q = crate::dp::ControlSet::matrices(2, vec![vec![1.0, 0.0, 0.0, 1.0]]).unwrap();
        let m = GsdeModel::new(
            "plane",
            2,
            2,
            std::sync::Arc::new(|x, o| {
                o[0] = -x[0];
                o[1] = -x[1]
            }),
            None,
            std::sync::Arc::new(|_, o| {
                o.copy_from_slice(&[1.0, 0.0, 0.0, 1.0]);
            }),
            q,
            1.0,
            2.0,
        )
        .unwrap();
        assert!(matches!(
            DpOperator::new(&m, DpConfig::default(), &[0.0]),
            Err(Error::Unsupported(_))
        ));
    }
}
