"""Smoke test for the Python bindings; run after `pip install`."""

import math
import os
import tempfile

import sublinergo_py as sg


def close(a, b, tol=1e-9):
    assert abs(a - b) <= tol, (a, b)


def main():
    remark = sg.SequentialModel.remark_smaller(4)
    close(remark.lln_expectation(2, lambda x: x), 2.0)
    close(remark.lln_expectation(2, lambda x: -x), 3.0)
    assert remark.gamma_n(1) == (-3.0, 3.0)
    lo, hi = remark.gamma_n(2)
    close(lo, -3.0)
    close(hi, 2.0)

    iid = sg.SequentialModel.iid_maximal(-1.0, 1.0)
    for n, value, target, err in sg.lln_table(iid, lambda x: x * x, [1, 2, 4]):
        close(value, 1.0)
        close(err, 0.0)

    dep = sg.SequentialModel.one_dependent(6)
    assert sg.alpha_mixing(dep, [1], [3], lambda v: max(v[0], 0.0) * max(v[1], 0.0)) < 1e-12

    close(sg.g_normal(1.0, 4.0, lambda x: x * x, steps=100), 4.0)
    close(sg.g_normal(1.0, 4.0, lambda x: max(x, 0.0)), math.sqrt(4.0 / (2 * math.pi)), 1e-2)

    ens = sg.simulate_gbm_constant(2.0, 0.01, 1.0, 50, seed=7)
    assert (ens.n_paths, ens.n_points) == (50, 101)
    with tempfile.TemporaryDirectory() as d:
        path = os.path.join(d, "paths.bin")
        ens.write_cache(path)
        back = sg.PathEnsemble.read_cache(path)
        assert back.terminal() == ens.terminal()
        with open(path, "rb") as f:
            assert f.read(16) == b"SUBLINERGO-PATHS"

    gou = sg.GsdeModel.gou()
    margin, passes = gou.check_dissipativity()
    assert passes
    close(margin, 1.0)
    close(gou.markov_t(1.0, lambda x: x, 1.5), 1.5 * math.exp(-1.0), 1e-3)

    avg = sg.block_point_averages(1536)
    close(avg[1023], 0.5)
    close(avg[1535], 2.0 / 3.0)
    a, b = sg.two_bernoulli_divergence(100_000, 2024)
    assert abs(a - 0.5) <= 0.005 and abs(b - 1.0 / 3.0) <= 0.005

    golden = (math.sqrt(5) - 1) / 2
    rows = sg.rotation_deviation(golden, lambda w: math.cos(2 * math.pi * w), [10, 1000], [k / 100 for k in range(100)])
    assert rows[1][1] < rows[0][1] < 1.0

    try:
        remark.eval_cylinder([1], lambda x: 1 / 0)
    except ZeroDivisionError:
        pass
    else:
        raise AssertionError("callback errors must propagate")
    try:
        sg.SequentialModel.remark_smaller(0)
    except ValueError:
        pass
    else:
        raise AssertionError("horizon 0 must be rejected")
    print("smoke test passed")


if __name__ == "__main__":
    main()
