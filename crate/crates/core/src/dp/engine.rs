//! Exact backward induction over the reachable states of a finite-atom model.
//!
//! The state after each relevant noise holds what the terminal functional
//! still needs: either every completed observation or only their running
//! sum, plus the noises that incomplete observations will read later.

use std::collections::HashMap;

use super::{FiniteLaw, SequentialModel};
use crate::error::{Error, Result};

/// Maximum number of states kept in one layer.
pub const DEFAULT_STATE_BUDGET: usize = 4_000_000;

/// States whose coordinates agree after rounding to this grid are merged.
const KEY_QUANTUM: f64 = 1e-11;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum Accumulate {
    Each,
    Sum,
}

struct Plan {
    /// Relevant noise indices in increasing order.
    noises: Vec<usize>,
    /// Observations completed when each noise is drawn.
    completes: Vec<Vec<usize>>,
    /// Noise indices retained after each layer (`retained[0]` is empty).
    retained: Vec<Vec<usize>>,
}

fn plan(obs: &[usize], lag: usize) -> Plan {
    let mut noises: Vec<usize> = obs.iter().flat_map(|&k| k..=k + lag).collect();
    noises.sort_unstable();
    noises.dedup();
    let completes = noises
        .iter()
        .map(|&j| obs.iter().copied().filter(|&k| k + lag == j).collect())
        .collect();
    let mut retained = vec![Vec::new()];
    for &j in &noises {
        let keep: Vec<usize> = noises
            .iter()
            .copied()
            .filter(|&i| i <= j && obs.iter().any(|&k| k <= i && i <= k + lag && k + lag > j))
            .collect();
        retained.push(keep);
    }
    Plan {
        noises,
        completes,
        retained,
    }
}

fn key_of(state: &[f64]) -> Vec<i64> {
    state
        .iter()
        .map(|v| (v / KEY_QUANTUM).round() as i64)
        .collect()
}

struct Layer {
    states: Vec<Vec<f64>>,
    index: HashMap<Vec<i64>, usize>,
}

impl Layer {
    fn new() -> Self {
        Layer {
            states: Vec::new(),
            index: HashMap::new(),
        }
    }

    fn insert(&mut self, state: Vec<f64>) -> usize {
        let key = key_of(&state);
        if let Some(&i) = self.index.get(&key) {
            return i;
        }
        let i = self.states.len();
        self.index.insert(key, i);
        self.states.push(state);
        i
    }

    fn lookup(&self, state: &[f64]) -> usize {
        self.index[&key_of(state)]
    }
}

struct Transition<'a> {
    model: &'a SequentialModel,
    plan: &'a Plan,
    acc: Accumulate,
    acc_len_before: Vec<usize>,
    dim: usize,
    lag: usize,
}

impl Transition<'_> {
    /// Successor state after drawing `z` as noise number `layer`.
    fn next(&self, layer: usize, state: &[f64], z: f64, scratch: &mut Vec<f64>) -> Vec<f64> {
        let j = self.plan.noises[layer];
        let acc_len = self.acc_len_before[layer];
        let before = &self.plan.retained[layer];
        let after = &self.plan.retained[layer + 1];
        let noise_of = |i: usize| -> f64 {
            if i == j {
                z
            } else {
                let pos = before.iter().position(|&r| r == i).expect("noise retained");
                state[acc_len + pos]
            }
        };
        let mut acc: Vec<f64> = state[..acc_len].to_vec();
        for &k in &self.plan.completes[layer] {
            let window: Vec<f64> = (k..=k + self.lag).map(noise_of).collect();
            scratch.resize(self.dim, 0.0);
            self.model.map.eval(&window, &mut scratch[..]);
            match self.acc {
                Accumulate::Each => acc.extend_from_slice(scratch),
                Accumulate::Sum => {
                    if acc.is_empty() {
                        acc.resize(self.dim, 0.0);
                    }
                    for (a, x) in acc.iter_mut().zip(scratch.iter()) {
                        *a += x;
                    }
                }
            }
        }
        if self.acc == Accumulate::Sum && acc.is_empty() {
            acc.resize(self.dim, 0.0);
        }
        for &i in after {
            acc.push(noise_of(i));
        }
        acc
    }
}

/// `Ê[φ(...)]` over the observations `obs` by exhaustive state DP.
pub(crate) fn cylinder(
    model: &SequentialModel,
    obs: &[usize],
    acc: Accumulate,
    phi: &dyn Fn(&[f64]) -> f64,
    budget: usize,
) -> Result<f64> {
    let lag = model.lag();
    let dim = model.dim();
    let plan = plan(obs, lag);
    let laws: Vec<FiniteLaw> = model.step.finite_laws();

    // accumulator length before each layer
    let mut acc_len_before = Vec::with_capacity(plan.noises.len() + 1);
    let mut completed = 0usize;
    for l in 0..=plan.noises.len() {
        acc_len_before.push(match acc {
            Accumulate::Each => completed * dim,
            Accumulate::Sum => {
                if l == 0 {
                    0
                } else {
                    dim
                }
            }
        });
        if l < plan.noises.len() {
            completed += plan.completes[l].len();
        }
    }
    let tr = Transition {
        model,
        plan: &plan,
        acc,
        acc_len_before,
        dim,
        lag,
    };

    let mut layers = vec![Layer::new()];
    layers[0].insert(Vec::new());
    let mut scratch = Vec::new();
    for layer in 0..plan.noises.len() {
        let mut next = Layer::new();
        for state in &layers[layer].states {
            for law in &laws {
                for &z in &law.values {
                    next.insert(tr.next(layer, state, z, &mut scratch));
                }
            }
            if next.states.len() > budget {
                return Err(Error::StateBudget {
                    stage: layer + 1,
                    states: next.states.len(),
                    limit: budget,
                });
            }
        }
        layers.push(next);
    }

    let acc_len = tr.acc_len_before[plan.noises.len()];
    let mut values: Vec<f64> = layers
        .last()
        .unwrap()
        .states
        .iter()
        .map(|s| phi(&s[..acc_len]))
        .collect();
    for layer in (0..plan.noises.len()).rev() {
        let child = &layers[layer + 1];
        values = layers[layer]
            .states
            .iter()
            .map(|state| {
                let mut best = f64::NEG_INFINITY;
                for law in &laws {
                    let mut e = 0.0;
                    for (&z, &w) in law.values.iter().zip(&law.weights) {
                        let c = child.lookup(&tr.next(layer, state, z, &mut scratch));
                        e += w * values[c];
                    }
                    if e > best {
                        best = e;
                    }
                }
                best
            })
            .collect();
    }
    Ok(values[0])
}

/// `Ê[Σ_{k ∈ obs} f(X_k)]`.
///
/// The value function is the collected reward plus a function of the pending
/// noises alone, so only the retained noises form the state.
pub(crate) fn additive(
    model: &SequentialModel,
    obs: &[usize],
    f: &dyn Fn(&[f64]) -> f64,
    budget: usize,
) -> Result<f64> {
    let lag = model.lag();
    let dim = model.dim();
    let plan = plan(obs, lag);
    let laws: Vec<FiniteLaw> = model.step.finite_laws();
    let mut out = vec![0.0; dim];
    let step = |layer: usize, state: &[f64], z: f64, out: &mut Vec<f64>| -> (f64, Vec<f64>) {
        let j = plan.noises[layer];
        let before = &plan.retained[layer];
        let noise_of = |i: usize| -> f64 {
            if i == j {
                z
            } else {
                state[before.iter().position(|&r| r == i).expect("noise retained")]
            }
        };
        let mut reward = 0.0;
        for &k in &plan.completes[layer] {
            let window: Vec<f64> = (k..=k + lag).map(noise_of).collect();
            model.map.eval(&window, out);
            reward += f(out);
        }
        let next = plan.retained[layer + 1].iter().map(|&i| noise_of(i)).collect();
        (reward, next)
    };

    let mut layers = vec![Layer::new()];
    layers[0].insert(Vec::new());
    for layer in 0..plan.noises.len() {
        let mut next = Layer::new();
        for state in &layers[layer].states {
            for law in &laws {
                for &z in &law.values {
                    next.insert(step(layer, state, z, &mut out).1);
                }
            }
        }
        if next.states.len() > budget {
            return Err(Error::StateBudget {
                stage: layer + 1,
                states: next.states.len(),
                limit: budget,
            });
        }
        layers.push(next);
    }
    let mut values = vec![0.0; layers.last().unwrap().states.len()];
    for layer in (0..plan.noises.len()).rev() {
        let child = &layers[layer + 1];
        values = layers[layer]
            .states
            .iter()
            .map(|state| {
                let mut best = f64::NEG_INFINITY;
                for law in &laws {
                    let mut e = 0.0;
                    for (&z, &w) in law.values.iter().zip(&law.weights) {
                        let (r, s) = step(layer, state, z, &mut out);
                        e += w * (r + values[child.lookup(&s)]);
                    }
                    best = best.max(e);
                }
                best
            })
            .collect();
    }
    Ok(values[0])
}
