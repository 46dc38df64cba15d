//! Randomized invariants shared by the `properties` and `acceptance` targets.
//!
//! Every property runs 200 instances from a fixed-seed runner and returns
//! the first counterexample as a message.

#![allow(dead_code)]

use std::collections::HashMap;

use proptest::prelude::*;
use proptest::sample::subsequence;
use proptest::test_runner::{Config, RngAlgorithm, TestCaseError, TestRng, TestRunner};

use sublinergo::dp::{v_n_recursion, g_normal_step, ControlSet, FiniteLaw, GridSpec, SequentialModel, StateMap, StepLaw};
use sublinergo::ergodic::{
    birkhoff_average, birkhoff_series, is_admissible, Observable, SubsequenceSpec, SymbolicPoint,
};
use sublinergo::gbm::{mean_se, policy_max, simulate_gbm, theta_shift, Policy};
use sublinergo::gsde::{
    contraction_test, pullback_stationary, DpConfig, DpOperator, GsdeModel, PullbackConfig,
};
use sublinergo::lln::{alpha_mixing_lhs, lln_experiment, slln_experiment, MixingProbe, Selection};
use sublinergo::scenario::{
    gamma_n, independence_gap, check_independent, standard_basis, DiscreteMeasure, RandomVector,
    SampleSpace, ScenarioSet, TestFunction,
};

pub const CASES: u32 = 200;

pub type Outcome = Result<(), String>;

fn run<S: Strategy>(
    strategy: S,
    test: impl Fn(S::Value) -> Result<(), TestCaseError>,
) -> Outcome
where
    S::Value: std::fmt::Debug,
{
    let config = Config {
        cases: CASES,
        failure_persistence: None,
        max_shrink_iters: 64,
        ..Config::default()
    };
    let mut runner = TestRunner::new_with_rng(config, TestRng::deterministic_rng(RngAlgorithm::ChaCha));
    runner.run(&strategy, test).map_err(|e| e.to_string())
}

macro_rules! check {
    ($cond:expr, $($arg:tt)*) => {
        if !$cond {
            return Err(TestCaseError::fail(format!($($arg)*)));
        }
    };
}

fn ok<T, E: std::fmt::Display>(r: Result<T, E>) -> Result<T, TestCaseError> {
    r.map_err(|e| TestCaseError::fail(e.to_string()))
}

// ---------------------------------------------------------------------------
// generators

fn weights(n: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(1u32..=6, n).prop_map(|w| {
        let s: u32 = w.iter().sum();
        w.iter().map(|v| *v as f64 / s as f64).collect()
    })
}

fn finite_law(max_atoms: usize) -> impl Strategy<Value = FiniteLaw> {
    subsequence(vec![-2.0, -1.0, -0.5, 0.0, 0.5, 1.0, 2.0], 1..=max_atoms)
        .prop_flat_map(|vals| {
            let n = vals.len();
            (Just(vals), weights(n))
        })
        .prop_map(|(v, w)| FiniteLaw::new(v, w).unwrap())
}

fn custom_step(max_controls: usize, max_atoms: usize) -> impl Strategy<Value = StepLaw> {
    prop::collection::vec(finite_law(max_atoms), 1..=max_controls).prop_map(|laws| {
        StepLaw::custom(laws.into_iter().enumerate().map(|(i, l)| (i as f64, l)).collect()).unwrap()
    })
}

fn small_int() -> impl Strategy<Value = f64> {
    (-2i32..=2).prop_map(|v| v as f64)
}

fn state_map() -> impl Strategy<Value = StateMap> {
    prop_oneof![
        Just(StateMap::Identity),
        (small_int(), small_int()).prop_map(|(a, b)| StateMap::Linear {
            coeffs: vec![a, b],
            offset: 0.0
        }),
        (small_int(), small_int(), small_int(), small_int()).prop_map(|(a, b, c, o)| {
            StateMap::Bilinear { a, b, c, offset: o * 0.5 }
        }),
    ]
}

/// Model with at most `max_noises` noise steps in total.
fn small_model(max_noises: usize, max_controls: usize, max_atoms: usize) -> impl Strategy<Value = SequentialModel> {
    (custom_step(max_controls, max_atoms), state_map()).prop_flat_map(move |(step, map)| {
        let lag = map.lag();
        (1..=max_noises - lag).prop_map(move |h| SequentialModel::new(h, step.clone(), map.clone()).unwrap())
    })
}

/// Nonempty strictly increasing subset of `1..=h`.
fn obs_subset(h: usize) -> impl Strategy<Value = Vec<usize>> {
    subsequence((1..=h).collect::<Vec<_>>(), 1..=h)
}

/// `Σ a_j |x_j' - c_j| + b x_first x_last` on the concatenated observations.
#[derive(Debug, Clone)]
struct Payoff {
    a: Vec<f64>,
    c: Vec<f64>,
    b: f64,
}

impl Payoff {
    fn eval(&self, xs: &[f64]) -> f64 {
        let mut v = self.b * xs[0] * xs[xs.len() - 1];
        for (j, (a, c)) in self.a.iter().zip(&self.c).enumerate() {
            v += a * (xs[j % xs.len()] - c).abs();
        }
        v
    }
}

fn payoff() -> impl Strategy<Value = Payoff> {
    (
        prop::collection::vec(-2.0..2.0f64, 1..4),
        prop::collection::vec(-1.5..1.5f64, 3),
        -1.0..1.0f64,
    )
        .prop_map(|(a, c, b)| Payoff { a, c, b })
}

// ---------------------------------------------------------------------------
// scenario-core

fn scenario_instance() -> impl Strategy<Value = (ScenarioSet, Vec<f64>, Vec<f64>, f64, f64)> {
    (1usize..=6, 1usize..=4)
        .prop_flat_map(|(n, m)| {
            (
                prop::collection::vec(weights(n), m),
                prop::collection::vec(-5.0..5.0f64, n),
                prop::collection::vec(-5.0..5.0f64, n),
                -5.0..5.0f64,
                0.0..3.0f64,
            )
        })
        .prop_map(|(ws, x, y, c, lam)| {
            let n = x.len();
            let set = ScenarioSet::new(
                SampleSpace::indexed(n).unwrap(),
                ws.into_iter().map(|w| DiscreteMeasure::new(w).unwrap()).collect(),
            )
            .unwrap();
            (set, x, y, c, lam)
        })
}

fn scalar(set: &ScenarioSet, v: Vec<f64>) -> RandomVector {
    RandomVector::scalar(set.space().clone(), v).unwrap()
}

pub fn sublinear_axioms() -> Outcome {
    run(scenario_instance(), |(set, x, y, c, lam)| {
        let e = |v: Vec<f64>| set.eval(&scalar(&set, v)).map(|r| r.value);
        let ex = ok(e(x.clone()))?;
        let ey = ok(e(y.clone()))?;
        let dominating: Vec<f64> = x.iter().zip(&y).map(|(a, b)| a + b.abs()).collect();
        check!(ok(e(dominating))? >= ex - 1e-12, "monotonicity");
        let ec = ok(set.eval(&RandomVector::constant(set.space().clone(), c)))?.value;
        check!((ec - c).abs() <= 1e-12, "constant {c} evaluates to {ec}");
        let sum: Vec<f64> = x.iter().zip(&y).map(|(a, b)| a + b).collect();
        check!(ok(e(sum))? <= ex + ey + 1e-9, "sub-additivity");
        let scaled: Vec<f64> = x.iter().map(|a| lam * a).collect();
        check!((ok(e(scaled))? - lam * ex).abs() <= 1e-9, "positive homogeneity at λ = {lam}");
        Ok(())
    })
}

pub fn eval_matches_brute_force() -> Outcome {
    run(scenario_instance(), |(set, x, _, _, _)| {
        let brute = set
            .measures()
            .iter()
            .map(|m| m.weights().iter().zip(&x).map(|(w, v)| w * v).sum::<f64>())
            .fold(f64::NEG_INFINITY, f64::max);
        let r = ok(set.eval(&scalar(&set, x.clone())))?;
        check!((r.value - brute).abs() <= 1e-12, "eval {} vs brute force {brute}", r.value);
        let at_argmax: f64 = set.measures()[r.argmax].weights().iter().zip(&x).map(|(w, v)| w * v).sum();
        check!((at_argmax - brute).abs() <= 1e-12, "argmax does not attain the maximum");
        Ok(())
    })
}

pub fn support_function_sublinear() -> Outcome {
    let strategy = (1usize..=6, 1usize..=4)
        .prop_flat_map(|(n, m)| {
            (
                prop::collection::vec(weights(n), m),
                prop::collection::vec(-3.0..3.0f64, 2 * n),
                0usize..1000,
                0usize..1000,
                0.0..4.0f64,
            )
        });
    run(strategy, |(ws, vals, i, j, lam)| {
        let n = vals.len() / 2;
        let space = SampleSpace::indexed(n).unwrap();
        let set = ScenarioSet::new(space.clone(), ws.into_iter().map(|w| DiscreteMeasure::new(w).unwrap()).collect()).unwrap();
        let x = RandomVector::new(space, 2, vals).unwrap();
        let g = ok(set.gamma_of(&x))?;
        let samples = g.support_samples();
        let h = |p: &[f64]| set.eval_fn(&x, &|v| p[0] * v[0] + p[1] * v[1]).map(|r| r.value);
        let (p, hp) = &samples[i % samples.len()];
        let (q, hq) = &samples[j % samples.len()];
        check!((ok(h(p))? - hp).abs() <= 1e-9, "stored support value differs from Ê[<p, X>]");
        let pq = [p[0] + q[0], p[1] + q[1]];
        check!(ok(h(&pq))? <= hp + hq + 1e-9, "h(p + q) > h(p) + h(q)");
        let lp = [lam * p[0], lam * p[1]];
        check!((ok(h(&lp))? - lam * hp).abs() <= 1e-9, "h(λp) != λ h(p)");
        Ok(())
    })
}

pub fn gamma_n_shrinks_under_doubling() -> Outcome {
    let map = prop_oneof![
        state_map(),
        Just(StateMap::Components {
            maps: vec![
                StateMap::Identity,
                StateMap::Bilinear { a: 0.0, b: 1.0, c: 1.0, offset: 0.0 },
            ]
        }),
    ];
    run((custom_step(3, 3), map, 1usize..=6), |(step, map, n)| {
        let model = ok(SequentialModel::new(2 * n, step, map))?;
        let a = ok(gamma_n(&model, n))?.support_samples();
        let b = ok(gamma_n(&model, 2 * n))?.support_samples();
        for ((p, ha), (_, hb)) in a.iter().zip(&b) {
            check!(*hb <= ha + 1e-9, "h_2n({p:?}) = {hb} > h_n = {ha}");
        }
        Ok(())
    })
}

/// Exhaustive search over two-control laws on `{-1, 0, 1}` with weights in
/// thirds for a model whose later observation is independent from the
/// earlier one while the reverse fails.
pub fn independence_is_order_sensitive() -> Outcome {
    let thirds: Vec<Vec<f64>> = (0..=3)
        .flat_map(|a| (0..=3 - a).map(move |b| vec![a as f64 / 3.0, b as f64 / 3.0, (3 - a - b) as f64 / 3.0]))
        .collect();
    // products of nonnegative ramps cannot separate the two nestings, so
    // the family adds sign-changing products
    let mut basis = standard_basis(2, -1.0, 1.0);
    basis.push(TestFunction::new("x*y^2", 2.0, |z| z[0] * z[1] * z[1]));
    basis.push(TestFunction::new("x*|y|", 2.0, |z| z[0] * z[1].abs()));
    for (i, w1) in thirds.iter().enumerate() {
        for w2 in &thirds[i + 1..] {
            let law = |w: &Vec<f64>| FiniteLaw::new(vec![-1.0, 0.0, 1.0], w.clone()).unwrap();
            let step = StepLaw::custom(vec![(0.0, law(w1)), (1.0, law(w2))]).unwrap();
            let model = SequentialModel::iid(2, step).unwrap();
            for phi in &basis {
                let reverse = independence_gap(&model, &[2], &[1], &|z| phi.eval(&[z[1], z[0]]))
                    .map_err(|e| e.to_string())?;
                if reverse > 1e-3 {
                    let forward = check_independent(&model, &[1], &[2], &basis).map_err(|e| e.to_string())?;
                    if forward.holds {
                        return Ok(());
                    }
                }
            }
        }
    }
    Err("no order-sensitive model found in the search space".into())
}

// ---------------------------------------------------------------------------
// sequential-dp

fn brute_cylinder(model: &SequentialModel, obs: &[usize], phi: &dyn Fn(&[f64]) -> f64) -> f64 {
    let laws = model.step.finite_laws();
    let lag = model.lag();
    let d = model.dim();
    let total = obs.last().unwrap() + lag;
    fn go(
        hist: &mut Vec<f64>,
        total: usize,
        laws: &[FiniteLaw],
        leaf: &dyn Fn(&[f64]) -> f64,
    ) -> f64 {
        if hist.len() == total {
            return leaf(hist);
        }
        laws.iter()
            .map(|law| {
                law.values
                    .iter()
                    .zip(&law.weights)
                    .map(|(v, w)| {
                        hist.push(*v);
                        let r = w * go(hist, total, laws, leaf);
                        hist.pop();
                        r
                    })
                    .sum::<f64>()
            })
            .fold(f64::NEG_INFINITY, f64::max)
    }
    let leaf = |xi: &[f64]| {
        let mut xs = vec![0.0; obs.len() * d];
        for (j, k) in obs.iter().enumerate() {
            model.map.eval(&xi[k - 1..k + lag], &mut xs[j * d..(j + 1) * d]);
        }
        phi(&xs)
    };
    go(&mut Vec::new(), total, &laws, &leaf)
}

fn cylinder_instance() -> impl Strategy<Value = (SequentialModel, Vec<usize>, Payoff, Payoff)> {
    small_model(6, 5, 2).prop_flat_map(|m| {
        let h = m.horizon;
        (Just(m), obs_subset(h), payoff(), payoff())
    })
}

pub fn cylinder_matches_enumeration() -> Outcome {
    run(cylinder_instance(), |(model, obs, f, _)| {
        let phi = |x: &[f64]| f.eval(x);
        let v = ok(model.eval_cylinder(&obs, &phi))?;
        let b = brute_cylinder(&model, &obs, &phi);
        check!((v - b).abs() <= 1e-9 * (1.0 + b.abs()), "eval_cylinder {v} vs enumeration {b}");
        Ok(())
    })
}

pub fn cylinder_subadditive() -> Outcome {
    run(cylinder_instance(), |(model, obs, f, g)| {
        let a = ok(model.eval_cylinder(&obs, &|x| f.eval(x)))?;
        let b = ok(model.eval_cylinder(&obs, &|x| g.eval(x)))?;
        let s = ok(model.eval_cylinder(&obs, &|x| f.eval(x) + g.eval(x)))?;
        check!(s <= a + b + 1e-9, "Ê[φ + ψ] = {s} > {a} + {b}");
        Ok(())
    })
}

/// `Σ a_j |x - c_j|` with its Lipschitz constant.
fn lipschitz_1d() -> impl Strategy<Value = (Vec<f64>, Vec<f64>)> {
    (
        prop::collection::vec(-1.5..1.5f64, 1..4),
        prop::collection::vec(-2.0..2.0f64, 3),
    )
}

fn kinks(a: &[f64], c: &[f64], x: f64) -> f64 {
    a.iter().zip(c.iter().cycle()).map(|(a, c)| a * (x - c).abs()).sum()
}

fn vn_step() -> impl Strategy<Value = StepLaw> {
    prop_oneof![
        custom_step(3, 3),
        (-1.5..0.0f64, 0.0..1.5f64).prop_map(|(lo, hi)| StepLaw::maximal(lo, hi).unwrap()),
    ]
}

pub fn vn_monotone_and_stable() -> Outcome {
    let strategy = (vn_step(), 1usize..=6, lipschitz_1d(), lipschitz_1d(), 0.0..1.0f64);
    run(strategy, |(z, n, (a1, c1), (a2, c2), shift)| {
        let grid = GridSpec::centered(4.0, 0.05).unwrap();
        let phi1 = |x: f64| kinks(&a1, &c1, x);
        // dominates phi1 by a bounded amount
        let bump = |x: f64| shift + kinks(&a2, &c2, x).sin().abs();
        let phi2 = |x: f64| phi1(x) + bump(x);
        let t1 = ok(v_n_recursion(&z, &phi1, n, Some(grid)))?;
        let t2 = ok(v_n_recursion(&z, &phi2, n, Some(grid)))?;
        let sup0 = (0..grid.len).map(|i| bump(grid.x(i))).fold(0.0, f64::max);
        for (k, (l1, l2)) in t1.layers.iter().zip(&t2.layers).enumerate() {
            for (u, v) in l1.iter().zip(l2) {
                check!(*v >= u - 1e-12, "layer {k}: not monotone");
                check!((v - u).abs() <= sup0 + 1e-12, "layer {k}: sup-norm grows");
            }
        }
        Ok(())
    })
}

pub fn vn_layers_lipschitz() -> Outcome {
    run((vn_step(), 1usize..=6, lipschitz_1d()), |(z, n, (a, c))| {
        let lip: f64 = a.iter().map(|v| v.abs()).sum();
        let grid = GridSpec::centered(4.0, 0.05).unwrap();
        let t = ok(v_n_recursion(&z, &|x| kinks(&a, &c, x), n, Some(grid)))?;
        for (k, layer) in t.layers.iter().enumerate() {
            for w in layer.windows(2) {
                check!((w[1] - w[0]).abs() <= lip * grid.dx + 1e-9, "layer {k} breaks the Lipschitz bound {lip}");
            }
        }
        Ok(())
    })
}

fn binomial_mean(var: f64, steps: usize, phi: &dyn Fn(f64) -> f64) -> f64 {
    let s = (var / steps as f64).sqrt();
    let mut ln_fact = vec![0.0; steps + 1];
    for k in 1..=steps {
        ln_fact[k] = ln_fact[k - 1] + (k as f64).ln();
    }
    (0..=steps)
        .map(|k| {
            let lw = ln_fact[steps] - ln_fact[k] - ln_fact[steps - k] - steps as f64 * std::f64::consts::LN_2;
            lw.exp() * phi(s * (2.0 * k as f64 - steps as f64))
        })
        .sum()
}

pub fn g_normal_monotone_and_classical() -> Outcome {
    let strategy = (0.25..2.0f64, 1usize..=5, 1usize..=5, 1usize..=60, 0.0..2.0f64, 0.0..1.0f64, -1.0..1.0f64, -1.0..1.0f64);
    run(strategy, |(v, k1, k2, steps, a, b, slope, c)| {
        let (k1, k2) = (k1.min(k2), k1.max(k2));
        let convex = |x: f64| a * (x - c).abs() + b * x * x + slope * x;
        let lo = ok(g_normal_step(v, v * (k1 * k1) as f64, steps, &convex))?;
        let hi = ok(g_normal_step(v, v * (k2 * k2) as f64, steps, &convex))?;
        check!(lo <= hi + 1e-9 * (1.0 + hi.abs()), "not monotone in the upper variance: {lo} > {hi}");
        let wavy = |x: f64| (2.0 * x + c).sin() + slope * x.abs();
        let g = ok(g_normal_step(v, v, steps, &wavy))?;
        let oracle = binomial_mean(v, steps, &wavy);
        check!((g - oracle).abs() <= 1e-9 * (1.0 + oracle.abs()), "single variance {g} vs binomial {oracle}");
        Ok(())
    })
}

// ---------------------------------------------------------------------------
// g-bm

fn policy_in(lo: f64, hi: f64) -> impl Strategy<Value = Policy> {
    prop_oneof![
        (0.0..1.0f64).prop_map(move |u| Policy::constant_scalar(lo + u * (hi - lo))),
        (0.1..0.9f64).prop_map(move |b| Policy::Schedule {
            breakpoints: vec![0.0, b],
            values: vec![vec![hi], vec![lo]],
        }),
        (-0.5..0.5f64).prop_map(move |t| Policy::BangBang {
            low: vec![lo],
            high: vec![hi],
            coordinate: 0,
            threshold: t,
        }),
    ]
}

pub fn gbm_reproducible() -> Outcome {
    let strategy = (0.1..1.0f64, 1.0..3.0f64)
        .prop_flat_map(|(lo, r)| (Just(lo), Just(lo * r), policy_in(lo, lo * r), any::<u64>(), 1usize..6));
    run(strategy, |(lo, hi, policy, seed, n)| {
        let q = ControlSet::interval(lo, hi, 0).unwrap();
        let a = ok(simulate_gbm(&policy, &q, 0.05, 1.0, n, seed))?;
        let b = ok(simulate_gbm(&policy, &q, 0.05, 1.0, n, seed))?;
        check!(a == b, "same seed, different ensembles");
        Ok(())
    })
}

fn var_se(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let m = xs.iter().sum::<f64>() / n;
    let v = xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1.0);
    let m4 = xs.iter().map(|x| (x - m).powi(4)).sum::<f64>() / n;
    (v, ((m4 - v * v).max(0.0) / n).sqrt())
}

pub fn gbm_shift_preserves_increments() -> Outcome {
    let strategy = (0.2..2.0f64, 1usize..20, 0usize..20, any::<u64>());
    run(strategy, |(q, k, j, seed)| {
        let dt = 0.05;
        let n_paths = 400;
        let ens = ok(simulate_gbm(&Policy::constant_scalar(q), &ControlSet::scalars(vec![q]).unwrap(), dt, 2.0, n_paths, seed))?;
        let mut base = Vec::with_capacity(n_paths);
        let mut moved = Vec::with_capacity(n_paths);
        for i in 0..n_paths {
            let p = ens.path(i);
            let s = ok(theta_shift(&p, k as f64 * dt))?;
            base.push(p.value(j + 1, 0) - p.value(j, 0));
            moved.push(s.value(j + 1, 0) - s.value(j, 0));
        }
        let (m1, s1) = mean_se(&base);
        let (m2, s2) = mean_se(&moved);
        check!((m1 - m2).abs() <= 3.0 * s1.hypot(s2), "increment means {m1} vs {m2}");
        let (v1, e1) = var_se(&base);
        let (v2, e2) = var_se(&moved);
        check!((v1 - v2).abs() <= 3.0 * e1.hypot(e2), "increment variances {v1} vs {v2}");
        Ok(())
    })
}

pub fn policy_family_under_approximates() -> Outcome {
    let strategy = (
        0.3..1.5f64,
        prop::sample::select(vec![1.0, 2.25, 4.0, 9.0]),
        0usize..3,
        -1.0..1.0f64,
        0.5..2.0f64,
        any::<u64>(),
    );
    run(strategy, |(lo, ratio, kind, c, a, seed)| {
        let hi = lo * ratio;
        let q = ControlSet::interval(lo, hi, 0).unwrap();
        let phi = move |x: f64| match kind {
            0 => a * (x - c).abs(),
            1 => -a * (x - c).abs(),
            _ => (a * x + c).sin(),
        };
        let mut policies = Policy::extremes(&q);
        policies.push(Policy::BangBang { low: vec![lo], high: vec![hi], coordinate: 0, threshold: c });
        let pm = ok(policy_max(&policies, &q, &|x| phi(x[0]), 1.0, 0.05, 1000, seed))?;
        let exact = ok(g_normal_step(lo, hi, 400, &phi))?;
        check!(pm.value <= exact + 3.0 * pm.se, "policy max {} above {exact} + 3 SE", pm.value);
        Ok(())
    })
}

// ---------------------------------------------------------------------------
// gsde

fn gou() -> impl Strategy<Value = GsdeModel> {
    (0.5..2.0f64, 0.5..1.5f64, 0.2..1.0f64, 1.0..4.0f64)
        .prop_map(|(a, s, lo, r)| GsdeModel::gou(a, s, lo, lo * r).unwrap())
}

pub fn markov_chapman() -> Outcome {
    run((gou(), 1usize..200, 1usize..200, lipschitz_1d()), |(model, k1, k2, (a, c))| {
        let op = ok(DpOperator::new(&model, DpConfig { dx: 0.02, ..DpConfig::default() }, &[1.0]))?;
        let u = op.sample(&|x| kinks(&a, &c, x));
        let once = op.apply(&u, k1 + k2);
        let twice = op.apply(&op.apply(&u, k2), k1);
        let err = once.iter().zip(&twice).map(|(p, q)| (p - q).abs()).fold(0.0, f64::max);
        check!(err <= 1e-12, "Chapman defect {err}");
        Ok(())
    })
}

pub fn markov_lipschitz() -> Outcome {
    let strategy = (gou(), 0.05..1.0f64, -2.0..2.0f64, -2.0..2.0f64, lipschitz_1d());
    run(strategy, |(model, t, x, y, (a, c))| {
        let lip: f64 = a.iter().map(|v| v.abs()).sum();
        let op = ok(DpOperator::new(&model, DpConfig { dx: 0.02, ..DpConfig::default() }, &[x, y]))?;
        let v = op.evolve(&op.sample(&|z| kinks(&a, &c, z)), t);
        let (tx, ty) = (op.interpolate(&v, x), op.interpolate(&v, y));
        check!((tx - ty).abs() <= lip * (x - y).abs() + 1e-9, "|T φ(x) - T φ(y)| = {} > {}", (tx - ty).abs(), lip * (x - y).abs());
        Ok(())
    })
}

/// Registered functions: each convex or concave, so constant controls are optimal.
fn registered(kind: usize, c: f64) -> impl Fn(f64) -> f64 + Sync {
    move |x| match kind {
        0 => x,
        1 => x * x,
        2 => (x - c).abs(),
        3 => -x * x,
        4 => -(x - c).abs(),
        _ => (x - c).max(0.0),
    }
}

pub fn markov_invariance() -> Outcome {
    let model = GsdeModel::gou(1.0, 1.0, 1.0, 4.0).unwrap();
    let mut cfg = PullbackConfig::new(1, 0.01, 20_000, 41);
    cfg.schedule = vec![4.0, 8.0];
    let id = |x: &[f64]| x[0];
    let est = pullback_stationary(&model, &[("x", &id)], &cfg).map_err(|e| e.to_string())?;
    let op = DpOperator::new(&model, DpConfig { dx: 0.02, ..DpConfig::default() }, &[0.0]).map_err(|e| e.to_string())?;
    run((0usize..6, -1.0..1.0f64, 0.05..1.5f64), |(kind, c, t)| {
        let phi = registered(kind, c);
        let moved = op.evolve(&op.sample(&phi), t);
        let (a, sa) = est.apply(&|x| op.interpolate(&moved, x[0]));
        let (b, sb) = est.apply(&|x| phi(x[0]));
        let tol = 3.0 * sa.hypot(sb) + 2e-2;
        check!((a - b).abs() <= tol, "|T̃[T_t φ] - T̃[φ]| = {} > {tol}", (a - b).abs());
        Ok(())
    })
}

pub fn contraction_non_increasing() -> Outcome {
    let model = prop_oneof![gou(), (0.2..1.0f64).prop_map(|lo| GsdeModel::cubic(lo, 2.0 * lo).unwrap())];
    let strategy = (model, -2.0..2.0f64, 0.05..2.0f64, prop::collection::vec(0.0..2.0f64, 2..6), any::<u64>());
    run(strategy, |(model, x, d, mut ts, seed)| {
        ts.sort_by(f64::total_cmp);
        let policies = model.extreme_policies();
        let rows = ok(contraction_test(&model, &[x], &[x + d], &ts, &policies, 1e-3, 8, seed))?;
        for chunk in rows.chunks(ts.len()) {
            for w in chunk.windows(2) {
                check!(w[1].ratio <= w[0].ratio + 1e-12, "{}: ratio rises from {} to {}", w[0].policy, w[0].ratio, w[1].ratio);
            }
        }
        Ok(())
    })
}

// ---------------------------------------------------------------------------
// ergodic

fn symbolic_point() -> impl Strategy<Value = SymbolicPoint> {
    prop_oneof![
        (prop::collection::vec(0u8..2, 1..12), any::<bool>())
            .prop_map(|(w, periodic)| SymbolicPoint::explicit(w, periodic, 1).unwrap()),
        (0.05..0.95f64, any::<u64>()).prop_map(|(p, s)| SymbolicPoint::bernoulli(p, s).unwrap().with_window(1 << 12)),
        Just(SymbolicPoint::block()),
    ]
}

fn symbolic_observable() -> impl Strategy<Value = Observable> {
    prop_oneof![
        Just(Observable::first_is_zero()),
        prop::collection::vec(0u8..2, 1..4).prop_map(Observable::cylinder),
        (-3.0..3.0f64).prop_map(|c| Observable::new("weighted", 2, c.abs() * 3.0, move |w| c * (w[0] as f64 + 2.0 * w[1] as f64))),
    ]
}

pub fn birkhoff_telescopes() -> Outcome {
    run((symbolic_point(), symbolic_observable(), 2usize..2000), |(omega, x, n)| {
        let s = ok(birkhoff_series(&x, &omega, n))?;
        let w = ok(omega.prefix(n - 1 + x.footprint))?;
        for k in 2..=n {
            let lhs = k as f64 * s.average(k) - (k - 1) as f64 * s.average(k - 1);
            let rhs = x.eval(&w[k - 1..k - 1 + x.footprint]);
            check!((lhs - rhs).abs() <= 1e-9 * (1.0 + k as f64 * x.sup_norm), "k = {k}: {lhs} vs {rhs}");
        }
        Ok(())
    })
}

pub fn cesaro_shift_bound() -> Outcome {
    run((symbolic_point(), symbolic_observable(), 1usize..3000), |(omega, x, n)| {
        let a = ok(birkhoff_average(&x, &omega, n))?;
        let b = ok(birkhoff_average(&x.shifted(), &omega, n))?;
        let bound = 2.0 * x.sup_norm / n as f64;
        check!((a - b).abs() <= bound + 1e-12, "|A_n(X∘f) - A_n(X)| = {} > {bound}", (a - b).abs());
        Ok(())
    })
}

pub fn block_point_oscillates() -> Outcome {
    run(6u32..=16, |m| {
        let n = 1usize << m;
        let s = ok(birkhoff_series(&Observable::first_is_zero(), &SymbolicPoint::block(), n))?;
        let avg = s.averages();
        for j in 1..m - 1 {
            let tail = &avg[(1 << j) - 1..];
            let sup = tail.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let inf = tail.iter().copied().fold(f64::INFINITY, f64::min);
            check!(sup >= 2.0 / 3.0 - 1e-12, "sup over n >= 2^{j} is {sup}");
            check!(inf <= 0.5 + 1e-12, "inf over n >= 2^{j} is {inf}");
        }
        Ok(())
    })
}

pub fn admissibility_monotone_in_c2() -> Outcome {
    let strategy = (
        prop::collection::vec(0.0..3.0f64, 1..4),
        0.5..3.0f64,
        0.01..1.0f64,
        0.0..2.0f64,
        10usize..3000,
    );
    run(strategy, |(mut coeffs, lead, c2, extra, hi)| {
        coeffs.push(lead);
        let mut spec = SubsequenceSpec::polynomial(coeffs);
        spec.c2 = c2;
        let a = ok(is_admissible(&spec, 1, hi))?;
        spec.c2 = c2 + extra;
        let b = ok(is_admissible(&spec, 1, hi))?;
        for (ra, rb) in a.rows.iter().zip(&b.rows) {
            check!(ra.pass || !rb.pass, "n = {}: fails at c2 = {c2} but passes at {}", ra.n, c2 + extra);
        }
        Ok(())
    })
}

// ---------------------------------------------------------------------------
// lln

fn mixing_instance() -> impl Strategy<Value = (SequentialModel, Vec<usize>, Vec<usize>, usize)> {
    small_model(6, 3, 2).prop_flat_map(|m| {
        let h = m.horizon;
        (Just(m), 1..=h).prop_flat_map(move |(m, split)| {
            (
                Just(m),
                subsequence((1..=split).collect::<Vec<_>>(), 1..=split),
                subsequence((split..=h).collect::<Vec<_>>(), 1..=h - split + 1),
                0usize..347,
            )
        })
    })
}

pub fn mixing_value_bounded() -> Outcome {
    let basis = standard_basis(2, -2.0, 2.0);
    run(mixing_instance(), |(model, l1, l2, k)| {
        let phi = basis[k % basis.len()].clone();
        let lip = phi.lip;
        let probe = ok(MixingProbe::new(l1.clone(), l2.clone(), phi))?;
        let v = ok(alpha_mixing_lhs(&model, &probe))?;
        let mut all: Vec<usize> = l1.iter().chain(&l2).copied().collect();
        all.sort_unstable();
        all.dedup();
        let pos: HashMap<usize, usize> = all.iter().enumerate().map(|(i, k)| (*k, i)).collect();
        let mean = |xs: &[f64], block: &[usize]| block.iter().map(|k| xs[pos[k]]).sum::<f64>() / block.len() as f64;
        let scale = ok(model.eval_cylinder(&all, &|xs| mean(xs, &l1).abs() + mean(xs, &l2).abs()))?;
        check!(v >= 0.0, "negative mixing value");
        check!(v <= 2.0 * lip * scale + 1e-9, "mixing value {v} above 2 l Ê[|X̄¹| + |X̄²|] = {}", 2.0 * lip * scale);
        Ok(())
    })
}

pub fn mixing_structural_zero() -> Outcome {
    let basis = standard_basis(2, -2.0, 2.0);
    let strategy = small_model(7, 3, 2)
        .prop_filter("room for a gap", |m| m.horizon >= m.lag() + 2)
        .prop_flat_map(|m| {
            let h = m.horizon;
            let lag = m.lag();
            (Just(m), 1..=h - lag - 1).prop_flat_map(move |(m, last1)| {
                (
                    Just(m),
                    subsequence((1..=last1).collect::<Vec<_>>(), 1..=last1),
                    subsequence((last1 + lag + 1..=h).collect::<Vec<_>>(), 1..=h - last1 - lag),
                    subsequence((0..347).collect::<Vec<_>>(), 5),
                )
            })
        });
    run(strategy, |(model, l1, l2, picks)| {
        for k in picks {
            let probe = ok(MixingProbe::new(l1.clone(), l2.clone(), basis[k].clone()))?;
            let v = ok(alpha_mixing_lhs(&model, &probe))?;
            check!(v <= 1e-9, "{} on {l1:?} / {l2:?}: {v}", basis[k].name);
        }
        Ok(())
    })
}

pub fn lln_errors_scale_with_phi() -> Outcome {
    let strategy = (custom_step(3, 3), state_map(), -2.0..2.0f64, -1.0..1.0f64, -1.0..1.0f64);
    run(strategy, |(step, map, a, c, b)| {
        let model = ok(SequentialModel::new(8, step, map))?;
        let gamma = ok(gamma_n(&model, 8))?;
        let phi = move |x: &[f64]| a * (x[0] - c).abs() + b * x[0];
        let twice = move |x: &[f64]| 2.0 * phi(x);
        let grid = [1, 2, 3, 5, 8];
        let one = ok(lln_experiment(&model, &phi, &grid, &gamma))?;
        let two = ok(lln_experiment(&model, &twice, &grid, &gamma))?;
        for (r1, r2) in one.rows.iter().zip(&two.rows) {
            check!(r2.abs_error == 2.0 * r1.abs_error, "n = {}: {} vs 2 × {}", r1.n, r2.abs_error, r1.abs_error);
        }
        Ok(())
    })
}

pub fn slln_envelope_monotone() -> Outcome {
    let selection = (0usize..3, 0usize..3).prop_flat_map(|(a, b)| {
        prop_oneof![
            Just(Selection::Constant(a)),
            Just(Selection::Cycle(vec![a, b])),
            Just(Selection::Uniform),
            Just(Selection::DyadicBlocks { even: a, odd: b }),
        ]
    });
    let strategy = (
        prop::collection::vec(finite_law(3), 3),
        prop::collection::vec(selection, 1..3),
        10usize..3000,
        any::<u64>(),
    );
    run(strategy, |(laws, selections, n, seed)| {
        let step = StepLaw::custom(laws.into_iter().enumerate().map(|(i, l)| (i as f64, l)).collect()).unwrap();
        let model = SequentialModel::iid(1, step).unwrap();
        let gamma = ok(gamma_n(&model, 1))?;
        let r = ok(slln_experiment(&model, &selections, n, 3, seed, &gamma))?;
        check!(r.envelope.windows(2).all(|w| w[0] >= w[1]), "envelope increases");
        Ok(())
    })
}

/// `(name, property)` in module order.
pub fn all() -> Vec<(&'static str, fn() -> Outcome)> {
    vec![
        ("sublinear_axioms", sublinear_axioms),
        ("eval_matches_brute_force", eval_matches_brute_force),
        ("support_function_sublinear", support_function_sublinear),
        ("gamma_n_shrinks_under_doubling", gamma_n_shrinks_under_doubling),
        ("independence_is_order_sensitive", independence_is_order_sensitive),
        ("cylinder_matches_enumeration", cylinder_matches_enumeration),
        ("cylinder_subadditive", cylinder_subadditive),
        ("vn_monotone_and_stable", vn_monotone_and_stable),
        ("vn_layers_lipschitz", vn_layers_lipschitz),
        ("g_normal_monotone_and_classical", g_normal_monotone_and_classical),
        ("gbm_reproducible", gbm_reproducible),
        ("gbm_shift_preserves_increments", gbm_shift_preserves_increments),
        ("policy_family_under_approximates", policy_family_under_approximates),
        ("markov_chapman", markov_chapman),
        ("markov_lipschitz", markov_lipschitz),
        ("markov_invariance", markov_invariance),
        ("contraction_non_increasing", contraction_non_increasing),
        ("birkhoff_telescopes", birkhoff_telescopes),
        ("cesaro_shift_bound", cesaro_shift_bound),
        ("block_point_oscillates", block_point_oscillates),
        ("admissibility_monotone_in_c2", admissibility_monotone_in_c2),
        ("mixing_value_bounded", mixing_value_bounded),
        ("mixing_structural_zero", mixing_structural_zero),
        ("lln_errors_scale_with_phi", lln_errors_scale_with_phi),
        ("slln_envelope_monotone", slln_envelope_monotone),
    ]
}
