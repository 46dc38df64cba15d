use sublinergo::dp::{EvalMode, FiniteLaw, SequentialModel, StepLaw};
use sublinergo::ergodic::SubsequenceSpec;
use sublinergo::lln::{
    alpha_mixing_lhs, lln_experiment, mean_certain_convergence, rate_fit, slln_experiment,
    subsequence_lln_experiment, MixingProbe, RateRow, RateTable, Selection,
};
use sublinergo::scenario::{standard_basis, GammaSet};

fn coin() -> StepLaw {
    StepLaw::classical(FiniteLaw::new(vec![-1.0, 1.0], vec![0.5, 0.5]).unwrap()).unwrap()
}

/// `E|S_n| / n` for a simple random walk, summed over the binomial law.
fn coin_abs_mean(n: usize) -> f64 {
    let mut log_c = 0.0f64; // ln C(n, k)
    let mut acc = 0.0;
    for k in 0..=n {
        if k > 0 {
            log_c += ((n - k + 1) as f64).ln() - (k as f64).ln();
        }
        let s = (2.0 * k as f64 - n as f64).abs();
        acc += s * (log_c - n as f64 * std::f64::consts::LN_2).exp();
    }
    acc / n as f64
}

#[test]
fn iid_blocks_do_not_mix() {
    let model = SequentialModel::iid(5, StepLaw::maximal_with_interior(-1.0, 1.0, 0).unwrap()).unwrap();
    for phi in standard_basis(2, -1.0, 1.0).into_iter().step_by(7) {
        for (a, b) in [(vec![1], vec![2]), (vec![1, 2], vec![4, 5])] {
            let probe = MixingProbe::new(a, b, phi.clone()).unwrap();
            assert!(alpha_mixing_lhs(&model, &probe).unwrap() < 1e-12, "{}", phi.name);
        }
    }
    assert!(MixingProbe::new(vec![3], vec![2], standard_basis(2, -1.0, 1.0)[0].clone()).is_err());
}

#[test]
fn iid_maximal_lln_is_exact() {
    let model = SequentialModel::iid(1, StepLaw::maximal(-1.0, 1.0).unwrap()).unwrap();
    let gamma = GammaSet::interval(-1.0, 1.0).unwrap();
    let phis: [(&str, fn(&[f64]) -> f64); 3] = [
        ("x", |x| x[0]),
        ("x^2", |x| x[0] * x[0]),
        ("|x-0.3|", |x| (x[0] - 0.3).abs()),
    ];
    for (name, phi) in phis {
        let t = lln_experiment(&model, &phi, &[1, 2, 5, 20], &gamma).unwrap();
        assert!(t.rows.iter().all(|r| r.abs_error < 1e-9), "{name}: {:?}", t.rows);
        assert!(t.fit.is_none());
    }
}

#[test]
fn mean_uncertainty_is_rejected() {
    let e = mean_certain_convergence(&SequentialModel::remark_smaller(4).unwrap(), &[1, 2]).unwrap_err();
    assert!(e.to_string().contains("mean uncertainty"));
}

#[test]
fn square_subsequence_of_iid_is_plain_lln() {
    let model = SequentialModel::iid(1, SequentialModel::zero_mean_step()).unwrap();
    let gamma = GammaSet::interval(0.0, 0.0).unwrap();
    let phi = |x: &[f64]| x[0].abs();
    let grid = [2, 4, 8, 16];
    let spec = SubsequenceSpec::polynomial(vec![0.0, 0.0, 1.0]);
    let sub = subsequence_lln_experiment(&model, &phi, &spec, &grid, &gamma).unwrap();
    let plain = lln_experiment(&model, &phi, &grid, &gamma).unwrap();
    for (a, b) in sub.rows.iter().zip(&plain.rows) {
        assert!((a.value - b.value).abs() < 1e-12);
    }
    let flat = subsequence_lln_experiment(&model, &|_| 0.25, &spec, &grid, &gamma).unwrap();
    assert!(flat.rows.iter().all(|r| r.abs_error == 0.0));
}

#[test]
fn square_subsequence_decouples_one_dependence() {
    // along k^2 the summands ξ_t + ξ_{t+1} share no noise, and a sum of two
    // independent maximal variables on [-1, 1] is maximal on [-2, 2]
    let model = SequentialModel::one_dependent(1, StepLaw::maximal(-1.0, 1.0).unwrap()).unwrap();
    let gamma = GammaSet::interval(-2.0, 2.0).unwrap();
    let spec = SubsequenceSpec::polynomial(vec![0.0, 0.0, 1.0]);
    let phis: [fn(&[f64]) -> f64; 2] = [|x| x[0] * x[0], |x| (x[0] - 0.5).abs()];
    for phi in phis {
        let t = subsequence_lln_experiment(&model, &phi, &spec, &[1, 3, 6], &gamma).unwrap();
        assert!(t.rows.iter().all(|r| r.abs_error < 1e-9), "{:?}", t.rows);
    }
    assert!(subsequence_lln_experiment(&model, &|x| x[0], &SubsequenceSpec::polynomial(vec![0.0, 1.0]), &[2], &gamma).is_err());
}

#[test]
fn single_measure_slln_follows_the_iterated_log() {
    let model = SequentialModel::iid(1, coin()).unwrap();
    let gamma = GammaSet::interval(0.0, 0.0).unwrap();
    let n = 100_000;
    let r = slln_experiment(&model, &[Selection::Constant(0)], n, 20, 7, &gamma).unwrap();
    assert!(r.envelope.windows(2).all(|w| w[0] >= w[1]));
    let lil = (2.0 * (n as f64).ln().ln() / n as f64).sqrt();
    assert!(r.final_max <= 5.0 * lil, "{} vs {lil}", r.final_max);
    assert_eq!(r.bracket, Some((0.0, 0.0)));
    assert_eq!(r.checkpoints.last(), Some(&n));
}

#[test]
fn dirac_selection_sits_on_the_upper_mean() {
    let model = SequentialModel::iid(1, StepLaw::maximal(-1.0, 1.0).unwrap()).unwrap();
    let top = model.step.finite_laws().len() - 1;
    let gamma = GammaSet::interval(-1.0, 1.0).unwrap();
    let r = slln_experiment(&model, &[Selection::Constant(top)], 1000, 3, 1, &gamma).unwrap();
    for t in &r.trials {
        assert!(t.means.iter().all(|m| m[0] == 1.0));
        assert!(t.dist.iter().all(|d| *d == 0.0));
    }
    assert!(slln_experiment(&model, &[Selection::Constant(top + 1)], 10, 1, 1, &gamma).is_err());
}

#[test]
fn remark_model_trajectories_stay_in_the_bracket() {
    // Ê[X_1] = max_ξ (|ξ| - 2ξ) = 3 and the lower mean is -3 by symmetry
    let model = SequentialModel::remark_smaller(1).unwrap();
    let top = model.step.finite_laws().len() - 1;
    let gamma = GammaSet::interval(-3.0, 3.0).unwrap();
    let sels = [Selection::Uniform, Selection::Cycle(vec![0, top]), Selection::DyadicBlocks { even: 0, odd: top }];
    let r = slln_experiment(&model, &sels, 4096, 4, 3, &gamma).unwrap();
    let (lo, hi) = r.bracket.unwrap();
    assert!((lo + 3.0).abs() < 1e-12 && (hi - 3.0).abs() < 1e-12);
    assert!(r.bracket_holds);
}

#[test]
fn fair_coin_mean_certain_rate() {
    let model = SequentialModel::iid(1, coin()).unwrap();
    let grid = [1, 10, 100, 1000];
    let t = mean_certain_convergence(&model, &grid).unwrap();
    for r in &t.rows {
        assert!((r.value - coin_abs_mean(r.n)).abs() < 1e-9, "n = {}", r.n);
    }
    for n in [100, 1000] {
        let asym = (2.0 / (std::f64::consts::PI * n as f64)).sqrt();
        assert!((t.row(n).unwrap().value / asym - 1.0).abs() < 0.1);
    }
    let flat = SequentialModel::iid(1, StepLaw::classical(FiniteLaw::dirac(0.4)).unwrap()).unwrap();
    let t = mean_certain_convergence(&flat, &grid).unwrap();
    assert!(t.rows.iter().all(|r| r.value.abs() < 1e-12));
}

#[test]
fn one_dependent_mean_certain_rate() {
    let model = SequentialModel::one_dependent(1, SequentialModel::zero_mean_step()).unwrap();
    let t = mean_certain_convergence(&model, &[16, 32, 64, 128, 256, 512]).unwrap();
    let slope = t.full_fit.unwrap().slope;
    assert!(slope <= -0.4, "{slope}");
}

fn row(n: usize, err: f64) -> RateRow {
    RateRow {
        n,
        value: err,
        target: 0.0,
        abs_error: err,
        mode: EvalMode::ExactLattice,
    }
}

#[test]
fn rate_fit_on_synthetic_rows() {
    let rows: Vec<RateRow> = [4, 16, 64, 256].iter().map(|&n| row(n, 3.0 / (n as f64).sqrt())).collect();
    let f = rate_fit(&rows).unwrap();
    assert!((f.slope + 0.5).abs() < 1e-12 && (f.intercept - 3f64.ln()).abs() < 1e-12);
    assert!(f.residual < 1e-12 && f.used == 4);

    let mut with_zero = rows.clone();
    with_zero.push(row(1024, 0.0));
    assert_eq!(rate_fit(&with_zero).unwrap().used, 4);
    assert!(rate_fit(&rows[..2]).is_err());
    assert!(RateTable::new(vec![row(4, 1.0), row(4, 0.5)]).is_err());

    let mut csv = Vec::new();
    RateTable::new(rows).unwrap().write_csv(&mut csv).unwrap();
    let text = String::from_utf8(csv).unwrap();
    assert!(text.starts_with("n,value,target,abs_error,mode\n4,"));
    assert!(text.lines().nth(1).unwrap().ends_with(",exact_lattice"));
}
