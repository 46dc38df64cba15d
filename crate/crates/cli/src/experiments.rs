//! One function per experiment. Each returns tables, summary values and the
//! acceptance checks that decide the exit code.

use std::f64::consts::PI;

use anyhow::{Context, Result};
use sublinergo::dp::{g_normal_step, ControlSet, SequentialModel};
use sublinergo::ergodic::{birkhoff_series, rotation_cos_bound, unique_ergodicity_test, Observable, RotationSystem, SymbolicPoint};
use sublinergo::gbm::{bm_mixing_estimate, mean_se, policy_max, quadratic_variation, read_cache, simulate_gbm, write_cache, Path, Policy};
use sublinergo::gsde::{
    check_dissipativity, contraction_test, invariance_decay_fit, markov_t, pullback_stationary, write_decay_csv, DpConfig, GsdeModel,
    MarkovMethod, PullbackConfig,
};
use sublinergo::lln::{alpha_mixing_lhs, lln_experiment, slln_experiment, MixingProbe, Selection};
use sublinergo::scenario::io::read_scenario;
use sublinergo::scenario::{gamma_star, standard_basis};

use crate::config::{input, Experiment, ExperimentConfig, ModelSource};
use crate::presets;

pub struct Check {
    pub name: String,
    pub pass: bool,
    pub detail: String,
}

#[derive(Default)]
pub struct Outcome {
    /// File name and contents.
    pub files: Vec<(String, Vec<u8>)>,
    pub values: Vec<(String, toml::Value)>,
    pub checks: Vec<Check>,
}

impl Outcome {
    fn table(&mut self, name: &str, body: String) {
        self.files.push((name.to_string(), body.into_bytes()));
    }

    fn value(&mut self, key: &str, v: impl Into<toml::Value>) {
        self.values.push((key.to_string(), v.into()));
    }

    fn check(&mut self, name: &str, pass: bool, detail: String) {
        self.checks.push(Check {
            name: name.to_string(),
            pass,
            detail,
        });
    }
}

type Phi = fn(f64) -> f64;

/// Largest `n` entering `Γ_*`.
const STAR_HORIZON: usize = 64;

fn test_function(name: &str) -> Result<Phi> {
    Ok(match name {
        "identity" => |x| x,
        "square" => |x| x * x,
        "neg-square" => |x| -x * x,
        "abs" => |x: f64| x.abs(),
        "neg-abs" => |x: f64| -x.abs(),
        "pos-part" => |x: f64| x.max(0.0),
        _ => {
            return input(format!(
                "field `phi`: unknown test function `{name}` (identity, square, neg-square, abs, neg-abs, pos-part)"
            ))
        }
    })
}

/// `Ê[φ(B_1)]` for G-normal `B_1` with variance bounds `[lo, hi]`; convex
/// functions pick `hi`, concave ones `lo`.
fn g_normal_oracle(name: &str, lo: f64, hi: f64) -> f64 {
    match name {
        "identity" => 0.0,
        "square" => hi,
        "neg-square" => -lo,
        "abs" => (2.0 * hi / PI).sqrt(),
        "neg-abs" => -(2.0 * lo / PI).sqrt(),
        "pos-part" => (hi / (2.0 * PI)).sqrt(),
        _ => unreachable!("validated by test_function"),
    }
}

fn preset_for(cfg: &ExperimentConfig, exp: Experiment, default: &str, allowed: &[&str]) -> Result<String> {
    let id = cfg.preset.clone().unwrap_or_else(|| default.to_string());
    if presets::find(&id).is_none() {
        return input(format!("field `preset`: unknown preset `{id}`; see `list-presets`"));
    }
    if !allowed.contains(&id.as_str()) {
        return input(format!("field `preset`: `{id}` does not apply to `{exp}` (use one of {allowed:?})"));
    }
    Ok(id)
}

fn sequential_model(cfg: &ExperimentConfig, exp: Experiment) -> Result<(String, SequentialModel)> {
    match &cfg.model {
        Some(ModelSource::Inline(m)) => Ok(("inline".into(), m.clone())),
        Some(ModelSource::File(path)) => {
            let doc = read_scenario(path).map_err(|e| crate::config::InputError(format!("{}: {e}", path.display())))?;
            match doc.model {
                Some(m) => Ok((path.display().to_string(), m)),
                None => input(format!("{}: the scenario file has no [model] section", path.display())),
            }
        }
        None => {
            let default = if exp == Experiment::Mixing { "one-dependent" } else { "remark-smaller" };
            let id = preset_for(cfg, exp, default, &["remark-smaller", "one-dependent"])?;
            let m = if id == "remark-smaller" {
                SequentialModel::remark_smaller(1)?
            } else {
                SequentialModel::one_dependent(1, SequentialModel::zero_mean_step())?
            };
            Ok((id, m))
        }
    }
}

fn scalar_model(model: &SequentialModel) -> Result<()> {
    if model.dim() != 1 {
        return input(format!("the model has dimension {}; this experiment needs scalar observations", model.dim()));
    }
    Ok(())
}

fn grid<T: Copy>(v: &Option<Vec<T>>, default: &[T]) -> Vec<T> {
    v.clone().unwrap_or_else(|| default.to_vec())
}

fn increasing(name: &str, n: &[usize]) -> Result<()> {
    if n.is_empty() || n[0] == 0 || n.windows(2).any(|w| w[0] >= w[1]) {
        return input(format!("field `{name}`: need positive, strictly increasing values, got {n:?}"));
    }
    Ok(())
}

pub fn lln(cfg: &ExperimentConfig) -> Result<Outcome> {
    let (source, model) = sequential_model(cfg, Experiment::Lln)?;
    scalar_model(&model)?;
    let n = grid(&cfg.n, &[1, 2, 4]);
    increasing("n", &n)?;
    let phi_name = cfg.phi.clone().unwrap_or_else(|| "identity".into());
    let phi = test_function(&phi_name)?;
    let tol = cfg.tolerance.unwrap_or(1e-9);
    let n_max = *n.last().unwrap();
    // Γ_* from far beyond the grid, so the last row is not trivially exact
    let star_n = n_max.max(STAR_HORIZON);
    let model = model.with_horizon(star_n + model.lag())?;

    let star = gamma_star(&model, star_n)?;
    let rates = lln_experiment(&model, &|m| phi(m[0]), &n, &star.set)?;
    let mut means = String::from("n,upper_mean,lower_mean\n");
    let mut ordered = true;
    for &k in &n {
        let up = model.lln_expectation(k, &|m| m[0])?.value;
        let lo = -model.lln_expectation(k, &|m| -m[0])?.value;
        ordered &= lo <= up + tol;
        means.push_str(&format!("{k},{up},{lo}\n"));
    }
    let mut out = Outcome::default();
    out.table("means.csv", means);
    let mut csv = Vec::new();
    rates.write_csv(&mut csv)?;
    out.files.push(("rates.csv".into(), csv));

    out.value("model", source);
    out.value("phi", phi_name);
    out.value("target", rates.rows[0].target);
    out.value("gamma_star_horizon", star_n as i64);
    out.value("gamma_star_converged", star.converged);
    if let Some(f) = rates.full_fit {
        out.value("slope", f.slope);
    }
    out.check("lower mean below upper mean", ordered, format!("tolerance {tol:e}"));
    let (first, last) = (rates.rows[0].abs_error, rates.rows.last().unwrap().abs_error);
    out.check(
        "error does not grow over the grid",
        last <= first + tol,
        format!("|error| {first:.6} at n = {} and {last:.6} at n = {n_max}", n[0]),
    );
    Ok(out)
}

pub fn slln(cfg: &ExperimentConfig, seed: u64) -> Result<Outcome> {
    let (source, model) = sequential_model(cfg, Experiment::Slln)?;
    scalar_model(&model)?;
    let horizon = cfg.n.as_ref().and_then(|v| v.last().copied()).unwrap_or(100_000);
    let trials = cfg.trials.unwrap_or(10);
    let top = model.step.finite_laws().len() - 1;
    let selections = [
        Selection::Constant(0),
        Selection::Constant(top),
        Selection::Cycle(vec![0, top]),
        Selection::Uniform,
        Selection::DyadicBlocks { even: 0, odd: top },
    ];
    let star = gamma_star(&model.with_horizon(STAR_HORIZON + model.lag())?, STAR_HORIZON)?;
    let r = slln_experiment(&model, &selections, horizon, trials, seed, &star.set)?;
    let (lo, hi) = r.bracket.expect("scalar model");
    let nf = horizon.max(16) as f64;
    // iterated-logarithm scale, five-fold, times the size of an observation
    let tol = cfg
        .tolerance
        .unwrap_or(5.0 * lo.abs().max(hi.abs()) * (2.0 * nf.ln().ln() / nf).sqrt());

    let mut env = String::from("n,envelope\n");
    for (k, e) in r.checkpoints.iter().zip(&r.envelope) {
        env.push_str(&format!("{k},{e}\n"));
    }
    let mut tr = String::from("selection,trial,n,mean,dist\n");
    for t in &r.trials {
        for ((k, m), d) in r.checkpoints.iter().zip(&t.means).zip(&t.dist) {
            tr.push_str(&format!("{},{},{k},{},{d}\n", t.selection, t.trial, m[0]));
        }
    }
    let mut out = Outcome::default();
    out.table("envelope.csv", env);
    out.table("trials.csv", tr);
    out.value("model", source);
    out.value("horizon", horizon as i64);
    out.value("trials", trials as i64);
    out.value("lower_mean", lo);
    out.value("upper_mean", hi);
    out.value("tolerance", tol);
    out.check(
        "averages stay between the lower and upper mean",
        r.bracket_holds,
        format!("bracket [{lo}, {hi}]"),
    );
    out.check(
        "distance to Γ at the horizon",
        r.final_max <= tol,
        format!("max distance {:.4e} against {tol:.4e}", r.final_max),
    );
    Ok(out)
}

pub fn gnormal(cfg: &ExperimentConfig) -> Result<Outcome> {
    let lo = cfg.sigma_low.unwrap_or(1.0);
    let hi = cfg.sigma_high.unwrap_or(4.0);
    let phi_name = cfg.phi.clone().unwrap_or_else(|| "square".into());
    let phi = test_function(&phi_name)?;
    let steps = grid(&cfg.steps, &[100]);
    increasing("steps", &steps)?;
    let tol = cfg.tolerance.unwrap_or(1e-2);
    let oracle = g_normal_oracle(&phi_name, lo, hi);
    let mut out = Outcome::default();
    let mut csv = String::from("steps,value,oracle,abs_error\n");
    let mut worst: f64 = 0.0;
    let mut last = f64::NAN;
    for &s in &steps {
        let v = g_normal_step(lo, hi, s, &phi)?;
        worst = worst.max((v - oracle).abs());
        last = v;
        csv.push_str(&format!("{s},{v},{oracle},{}\n", (v - oracle).abs()));
    }
    out.table("gnormal.csv", csv);
    out.value("phi", phi_name);
    out.value("sigma_low", lo);
    out.value("sigma_high", hi);
    out.value("value", last);
    out.value("oracle", oracle);
    out.check("lattice matches the closed form", worst <= tol, format!("max |error| {worst:.3e}, tolerance {tol:e}"));
    Ok(out)
}

pub fn gbm(cfg: &ExperimentConfig, seed: u64) -> Result<Outcome> {
    let lo = cfg.sigma_low.unwrap_or(1.0);
    let hi = cfg.sigma_high.unwrap_or(4.0);
    let dt = cfg.dt.unwrap_or(0.01);
    let horizon = cfg.horizon.unwrap_or(1.0);
    let paths = cfg.paths.unwrap_or(200);
    let phi_name = cfg.phi.clone().unwrap_or_else(|| "pos-part".into());
    let phi = test_function(&phi_name)?;
    let tol = cfg.tolerance.unwrap_or(1e-2);
    let q = ControlSet::interval(lo, hi, 0)?;
    let mut out = Outcome::default();

    let mut qv = String::from("q,mean_qv,se,expected\n");
    let mut qv_ok = true;
    let mut top = None;
    for &c in &[lo, hi] {
        let ens = simulate_gbm(&Policy::constant_scalar(c), &q, dt, horizon, paths, seed)?;
        let finals: Vec<f64> = (0..ens.n_paths())
            .map(|i| quadratic_variation(&ens.path(i)).map(|v| *v.last().unwrap()))
            .collect::<sublinergo::Result<_>>()?;
        let (m, se) = mean_se(&finals);
        let expected = c * ens.n_steps as f64 * dt;
        qv_ok &= (m - expected).abs() <= 3.0 * se + 1e-12;
        qv.push_str(&format!("{c},{m},{se},{expected}\n"));
        top = Some(ens);
    }
    let ens = top.expect("two policies ran");
    let mut csv = Vec::new();
    ens.write_csv(&mut csv)?;
    out.files.push(("paths.csv".into(), csv));
    let mut bin = Vec::new();
    write_cache(&ens, &mut bin)?;
    let back = read_cache(bin.as_slice())?;
    let cache_ok = back.values == ens.values && back.dt == ens.dt && back.seed == ens.seed;
    out.files.push(("paths.bin".into(), bin));
    out.table("qv.csv", qv);

    let pm = policy_max(&Policy::extremes(&q), &q, &|x| phi(x[0]), horizon, dt, paths, seed)?;
    // the lattice runs on the unit horizon; rescale through the variance
    let lattice = g_normal_step(lo * horizon, hi * horizon, 400, &phi)?;
    out.value("policy_max", pm.value);
    out.value("policy_max_se", pm.se);
    out.value("lattice", lattice);

    let t_grid = grid(&cfg.t, &[1.0, 2.0, 4.0]);
    let incr = |p: &Path| p.at(1.0, 0) - p.at(0.0, 0);
    let rows = bm_mixing_estimate(&incr, &incr, 1.0, &t_grid, hi, dt, paths.max(2), seed)?;
    let mut mix = String::from("t,cov,se\n");
    let mut mix_ok = true;
    for r in &rows {
        if r.t >= 1.0 {
            mix_ok &= r.cov.abs() <= 3.0 * r.se + 1e-12;
        }
        mix.push_str(&format!("{},{},{}\n", r.t, r.cov, r.se));
    }
    out.table("mixing.csv", mix);

    out.check("quadratic variation equals q T", qv_ok, "within three standard errors".into());
    out.check("binary cache round trip", cache_ok, format!("{} paths", ens.n_paths()));
    out.check(
        "policy family stays below the G-expectation",
        pm.value <= lattice + 3.0 * pm.se + tol,
        format!("{:.5} ± {:.5} against {lattice:.5}", pm.value, pm.se),
    );
    out.check("increments decorrelate beyond the window", mix_ok, "within three standard errors".into());
    Ok(out)
}

fn gsde_model(cfg: &ExperimentConfig) -> Result<(String, GsdeModel)> {
    if let Some(table) = &cfg.coefficients {
        let m = GsdeModel::from_table(table).map_err(|e| crate::config::InputError(format!("field `coefficients`: {e}")))?;
        return Ok(("coefficients".into(), m));
    }
    let id = preset_for(cfg, Experiment::Gsde, "gou", &["gou", "cubic"])?;
    let m = if id == "gou" {
        GsdeModel::gou(1.0, 1.0, 1.0, 4.0)?
    } else {
        GsdeModel::cubic(1.0, 4.0)?
    };
    Ok((id, m))
}

pub fn gsde(cfg: &ExperimentConfig, seed: u64) -> Result<Outcome> {
    let (source, model) = gsde_model(cfg)?;
    let dt = cfg.dt.unwrap_or(0.01);
    let paths = cfg.paths.unwrap_or(5000);
    let t_grid = grid(&cfg.t, &[0.25, 0.5, 0.75, 1.0, 1.5, 2.0, 2.5, 3.0]);
    let tol = cfg.tolerance.unwrap_or(0.25);
    let mut out = Outcome::default();
    let n = model.n;

    let dis = check_dissipativity(&model, 1000, 5.0, seed)?;
    let x: Vec<f64> = vec![1.0; n];
    let y: Vec<f64> = vec![-1.0; n];
    let rows = contraction_test(&model, &x, &y, &t_grid, &model.extreme_policies(), dt, paths.min(64), seed)?;
    let mut csv = String::from("t,policy,ratio,se,bound\n");
    for r in &rows {
        csv.push_str(&format!("{},\"{}\",{},{},{}\n", r.t, r.policy, r.ratio, r.se, r.bound));
    }
    out.table("contraction.csv", csv);

    let id = |x: &[f64]| x[0];
    let sq = |x: &[f64]| x[0] * x[0];
    let est = pullback_stationary(&model, &[("x", &id), ("x^2", &sq)], &PullbackConfig::new(n, dt, paths, seed))?;
    let mut st = String::from("function,value,se\n");
    for (f, (v, se)) in est.functions.iter().zip(&est.values) {
        st.push_str(&format!("{f},{v},{se}\n"));
    }
    out.table("stationary.csv", st);

    let method = if n == 1 && model.d == 1 {
        MarkovMethod::Dp(DpConfig::default())
    } else {
        MarkovMethod::PolicyMax { dt, n_paths: paths, seed }
    };
    // constant extreme controls only bound the invariant value from below;
    // the lattice reaches it directly when it applies
    let t_tilde = match method {
        MarkovMethod::Dp(_) => {
            let far = 4.0 * t_grid.iter().copied().fold(0.0, f64::max) + 8.0 / model.claimed_alpha;
            (markov_t(&model, far, &id, &[0.0], method)?.value, 0.0)
        }
        MarkovMethod::PolicyMax { .. } => est.value("x").expect("registered"),
    };
    let fit = invariance_decay_fit(&model, &id, 1.0, &x, &t_grid, t_tilde, method)?;
    let mut dec = Vec::new();
    write_decay_csv(&fit.rows, &mut dec)?;
    out.files.push(("decay.csv".into(), dec));

    out.value("model", source);
    out.value("claimed_alpha", model.claimed_alpha);
    out.value("min_margin", dis.min_margin);
    out.value("stationary_converged", est.converged);
    out.value("invariant_x", t_tilde.0);
    out.value("alpha_hat", fit.alpha_hat);
    out.check(
        "dissipativity",
        dis.passes,
        format!("min margin {:.4} against {}", dis.min_margin, model.claimed_alpha),
    );
    out.check(
        "contraction below exp(-2αt)",
        rows.iter().all(|r| r.within_bound()),
        format!("{} rows", rows.len()),
    );
    out.check(
        "decay rate reaches the claimed rate",
        !fit.degenerate && fit.alpha_hat >= model.claimed_alpha * (1.0 - tol),
        format!("α̂ = {:.4}, relative tolerance {tol}", fit.alpha_hat),
    );
    Ok(out)
}

pub fn ergodic(cfg: &ExperimentConfig) -> Result<Outcome> {
    let mut out = Outcome::default();
    if cfg.point.is_none() && cfg.preset.as_deref() == Some("rotation-golden") {
        let rot = RotationSystem::golden();
        let n = grid(&cfg.n, &[10, 100, 1000, 10_000]);
        increasing("n", &n)?;
        let points: Vec<f64> = (0..1000).map(|k| k as f64 / 1000.0).collect();
        let cos = |w: f64| (2.0 * PI * w).cos();
        let rows = unique_ergodicity_test(&rot, &cos, &n, &points)?;
        let mut csv = String::from("n,sup_deviation,worst_point,bound\n");
        let mut ok = true;
        for r in &rows {
            let b = rotation_cos_bound(rot.alpha, r.n);
            ok &= r.sup_deviation <= b + 1e-9;
            csv.push_str(&format!("{},{},{},{b}\n", r.n, r.sup_deviation, r.worst_point));
        }
        out.table("deviation.csv", csv);
        out.value("system", "rotation-golden");
        out.check("uniform convergence of cos 2πω", ok, "sup deviation within the geometric bound".into());
        return Ok(out);
    }
    let (label, omega) = match &cfg.point {
        Some(w) => ("word".to_string(), SymbolicPoint::explicit(w.word.clone(), w.periodic, w.fill).context("field `point`")?),
        None => {
            preset_for(cfg, Experiment::Ergodic, "exA-block", &["exA-block", "rotation-golden"])?;
            ("exA-block".to_string(), SymbolicPoint::block())
        }
    };
    let n_top = cfg.n.as_ref().and_then(|v| v.iter().copied().max()).unwrap_or(1024);
    if n_top < 2 {
        return input("field `n`: need at least 2");
    }
    let s = birkhoff_series(&Observable::first_is_zero(), &omega, 2 * n_top)?;
    let mut csv = String::from("n,average\n");
    let mut block_ok = true;
    let (mut low, mut high) = (f64::INFINITY, f64::NEG_INFINITY);
    let mut k = 2;
    while k <= n_top {
        let (a, b) = (s.average(k), s.average(3 * k / 2));
        csv.push_str(&format!("{k},{a}\n{},{b}\n", 3 * k / 2));
        if k >= 4 {
            block_ok &= (a - 0.5).abs() < 1e-9 && (b - 2.0 / 3.0).abs() < 1e-9;
        }
        low = low.min(a);
        high = high.max(b);
        k *= 2;
    }
    out.table("birkhoff.csv", csv);
    out.value("point", label.clone());
    out.value("min_at_powers_of_two", low);
    out.value("max_at_three_halves", high);
    if label == "exA-block" {
        out.check(
            "averages oscillate between 1/2 and 2/3",
            block_ok,
            format!("min {low:.6}, max {high:.6}"),
        );
    }
    Ok(out)
}

/// Range of `X_1` over the corners of the noise box; exact for the
/// multilinear maps used here.
fn observation_range(model: &SequentialModel) -> (f64, f64) {
    let (lo, hi) = model.step.support_range();
    let k = model.lag() + 1;
    let mut x = [0.0];
    let (mut a, mut b) = (f64::INFINITY, f64::NEG_INFINITY);
    for mask in 0..1usize << k {
        let w: Vec<f64> = (0..k).map(|i| if mask >> i & 1 == 1 { hi } else { lo }).collect();
        model.map.eval(&w, &mut x);
        a = a.min(x[0]);
        b = b.max(x[0]);
    }
    (a, b)
}

pub fn mixing(cfg: &ExperimentConfig) -> Result<Outcome> {
    let (source, model) = sequential_model(cfg, Experiment::Mixing)?;
    scalar_model(&model)?;
    let gaps = grid(&cfg.n, &[1, 2, 3]);
    increasing("n", &gaps)?;
    let tol = cfg.tolerance.unwrap_or(1e-9);
    let (lo, hi) = observation_range(&model);
    let basis = standard_basis(2, lo, hi);
    let lag = model.lag();
    let mut csv = String::from("gap,value,phi\n");
    let mut ok = true;
    let mut out = Outcome::default();
    for &g in &gaps {
        let m = model.with_horizon(1 + g + lag)?;
        let mut best = (0.0, "1".to_string());
        for phi in &basis {
            let probe = MixingProbe::new(vec![1], vec![1 + g], phi.clone())?;
            let v = alpha_mixing_lhs(&m, &probe)?;
            if v > best.0 {
                best = (v, phi.name.clone());
            }
        }
        if g > lag {
            ok &= best.0 <= tol;
        }
        csv.push_str(&format!("{g},{},\"{}\"\n", best.0, best.1));
    }
    out.table("mixing.csv", csv);
    out.value("model", source);
    out.value("lag", lag as i64);
    out.value("basis_size", basis.len() as i64);
    out.check(
        "no mixing gap beyond the dependence lag",
        ok,
        format!("tolerance {tol:e} for gaps > {lag}"),
    );
    Ok(out)
}
