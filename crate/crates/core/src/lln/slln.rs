//! Sampled SLLN trajectories under explicit selection measures.
//!
//! "Quasi-surely" is replaced by "for every encoded selection and every
//! trial": each selection fixes which control's law drives each step, and
//! trials are independent samples of the resulting product measure.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::dp::{FiniteLaw, SequentialModel};
use crate::error::{domain, Result};
use crate::scenario::GammaSet;

/// Rule choosing the control index at step `k` (1-based).
#[derive(Debug, Clone, PartialEq)]
pub enum Selection {
    Constant(usize),
    Cycle(Vec<usize>),
    /// Uniformly random control at every step.
    Uniform,
    /// `even` on `[2^j, 2^{j+1})` for even `j`, `odd` otherwise.
    DyadicBlocks { even: usize, odd: usize },
}

impl Selection {
    fn pick(&self, k: usize, n_controls: usize, rng: &mut ChaCha8Rng) -> usize {
        match self {
            Selection::Constant(c) => *c,
            Selection::Cycle(cs) => cs[(k - 1) % cs.len()],
            Selection::Uniform => rng.gen_range(0..n_controls),
            Selection::DyadicBlocks { even, odd } => {
                let j = usize::BITS - 1 - k.leading_zeros();
                if j % 2 == 0 {
                    *even
                } else {
                    *odd
                }
            }
        }
    }

    fn max_index(&self) -> usize {
        match self {
            Selection::Constant(c) => *c,
            Selection::Cycle(cs) => cs.iter().copied().max().unwrap_or(0),
            Selection::Uniform => 0,
            Selection::DyadicBlocks { even, odd } => *even.max(odd),
        }
    }

    pub fn label(&self) -> String {
        match self {
            Selection::Constant(c) => format!("constant({c})"),
            Selection::Cycle(cs) => format!("cycle{cs:?}"),
            Selection::Uniform => "uniform".into(),
            Selection::DyadicBlocks { even, odd } => format!("dyadic({even},{odd})"),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SllnTrial {
    pub selection: String,
    pub trial: usize,
    /// `S_n / n` at each checkpoint.
    pub means: Vec<Vec<f64>>,
    /// `dist(S_n / n, Γ)` at each checkpoint.
    pub dist: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SllnReport {
    /// Powers of two up to `N`, then `N`.
    pub checkpoints: Vec<usize>,
    pub trials: Vec<SllnTrial>,
    /// Max over trials of the distance, then the running max from the end,
    /// so the envelope is non-increasing.
    pub envelope: Vec<f64>,
    /// Max over trials of the distance at `N`.
    pub final_max: f64,
    /// `(-Ê[-X_1], Ê[X_1])` for scalar sequences.
    pub bracket: Option<(f64, f64)>,
    /// Tail infima and suprema of every scalar trajectory stay in the
    /// bracket at every checkpoint.
    pub bracket_holds: bool,
}

fn draw(law: &FiniteLaw, u: f64) -> f64 {
    let mut acc = 0.0;
    for (v, w) in law.values.iter().zip(&law.weights) {
        acc += w;
        if u < acc {
            return *v;
        }
    }
    *law.values.last().unwrap()
}

fn checkpoints(n: usize) -> Vec<usize> {
    let mut out: Vec<usize> = (0..usize::BITS).map(|j| 1usize << j).take_while(|p| *p <= n).collect();
    if out.last() != Some(&n) {
        out.push(n);
    }
    out
}

pub fn slln_experiment(
    model: &SequentialModel,
    selections: &[Selection],
    horizon: usize,
    n_trials: usize,
    seed: u64,
    gamma: &GammaSet,
) -> Result<SllnReport> {
    if horizon == 0 || n_trials == 0 || selections.is_empty() {
        return domain("need a positive horizon, trials and at least one selection");
    }
    let laws = model.step.finite_laws();
    if let Some(s) = selections.iter().find(|s| s.max_index() >= laws.len()) {
        return domain(format!("selection {} refers to a missing control", s.label()));
    }
    let d = model.dim();
    if gamma.dim() != d {
        return domain("Γ dimension differs from the model dimension");
    }
    let lag = model.lag();
    let marks = checkpoints(horizon);
    let jobs: Vec<(usize, usize)> = (0..selections.len())
        .flat_map(|s| (0..n_trials).map(move |t| (s, t)))
        .collect();
    let trials: Vec<SllnTrial> = jobs
        .par_iter()
        .map(|&(s, t)| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(((s as u64) << 32) | t as u64);
            let sel = &selections[s];
            let mut noise: Vec<f64> = Vec::with_capacity(lag + 1);
            let mut sum = vec![0.0; d];
            let mut x = vec![0.0; d];
            let mut means = Vec::new();
            let mut dist = Vec::new();
            let mut next_noise = 1;
            let mut mark = 0;
            for k in 1..=horizon {
                while next_noise <= k + lag {
                    let c = sel.pick(next_noise, laws.len(), &mut rng);
                    let u: f64 = rng.gen();
                    if noise.len() == lag + 1 {
                        noise.remove(0);
                    }
                    noise.push(draw(&laws[c], u));
                    next_noise += 1;
                }
                model.map.eval(&noise, &mut x);
                for (a, b) in sum.iter_mut().zip(&x) {
                    *a += b;
                }
                if marks[mark] == k {
                    let m: Vec<f64> = sum.iter().map(|v| v / k as f64).collect();
                    dist.push(gamma.distance(&m));
                    means.push(m);
                    mark += 1;
                }
            }
            SllnTrial {
                selection: sel.label(),
                trial: t,
                means,
                dist,
            }
        })
        .collect();
    let mut envelope: Vec<f64> = (0..marks.len())
        .map(|j| trials.iter().map(|t| t.dist[j]).fold(0.0, f64::max))
        .collect();
    for j in (0..envelope.len().saturating_sub(1)).rev() {
        envelope[j] = envelope[j].max(envelope[j + 1]);
    }
    let final_max = trials.iter().map(|t| *t.dist.last().unwrap()).fold(0.0, f64::max);
    let (bracket, bracket_holds) = if d == 1 {
        let hi = model.eval_cylinder(&[1], &|x| x[0])?;
        let lo = -model.eval_cylinder(&[1], &|x| -x[0])?;
        let holds = trials.iter().all(|t| {
            let mut tail_min = f64::INFINITY;
            let mut tail_max = f64::NEG_INFINITY;
            t.means.iter().rev().all(|m| {
                tail_min = tail_min.min(m[0]);
                tail_max = tail_max.max(m[0]);
                tail_min >= lo - 1e-12 && tail_max <= hi + 1e-12
            })
        });
        (Some((lo, hi)), holds)
    } else {
        (None, true)
    };
    Ok(SllnReport {
        checkpoints: marks,
        trials,
        envelope,
        final_max,
        bracket,
        bracket_holds,
    })
}
