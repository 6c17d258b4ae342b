import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from errcal.error_models import get_scenario
from errcal.errors import AllReplicatesFailed, InvalidScenario
from errcal.montecarlo import CSV_COLUMNS, RunSpec, mc_tolerance, run, summarize, to_csv, to_json

from conftest import zero_error


def small_run(**kw):
    base = dict(scenario="scenario2", methods=["true", "naive", "rc_case1"], replicates=12,
                base_seed=5, subset_sizes=[50, 200])
    base.update(kw)
    return RunSpec(**base)


@settings(deadline=None)
@given(arrays(float, (7, 3), elements=st.floats(-100, 100)),
       arrays(float, (7, 3), elements=st.floats(0.01, 10)))
def test_mse_decomposition(est, ses):
    beta = np.array([1.0, -2.0, 0.5])
    s = summarize(est, ses, beta, scenario="x", n_subset=1, method="m", coef=["a", "b", "c"])
    R = est.shape[0]
    bias = est.mean(axis=0) - beta
    np.testing.assert_allclose(s.mse, bias**2 + s.se**2 * (R - 1) / R, rtol=1e-10, atol=1e-10)
    np.testing.assert_allclose(bias, s.pct_bias * beta / 100, rtol=1e-10, atol=1e-9)
    assert np.all((s.cp >= 0) & (s.cp <= 1))


def test_summary_by_hand():
    est = np.array([[1.0], [3.0]])
    ses = np.array([[1.0], [0.5]])
    s = summarize(est, ses, [2.0], n_failed=1, scenario="x", n_subset=1, method="m", coef=["b"])
    assert s.pct_bias[0] == 0.0
    assert s.se[0] == pytest.approx(np.sqrt(2))
    assert s.ase[0] == 0.75
    assert s.mse[0] == 1.0
    assert s.cp[0] == 0.5
    assert s.replicates == 3 and s.n_success == 2


def test_summary_nan_se_gives_nan_ase_and_cp():
    s = summarize([[1.0], [2.0]], [[np.nan], [np.nan]], [1.0], scenario="x", n_subset=1, method="m", coef=["b"])
    assert np.isnan(s.ase[0]) and np.isnan(s.cp[0])
    assert np.isfinite(s.mse[0])


def test_mc_tolerance_values():
    s = summarize([[1.0], [1.1]], [[0.1], [0.1]], [1.0], scenario="x", n_subset=1, method="m", coef=["b"])
    assert mc_tolerance(s, 1000)["cp"] == pytest.approx(0.0135, abs=1e-4)
    assert mc_tolerance(s, 100)["cp"] == pytest.approx(0.0427, abs=1e-4)
    s.se = np.array([0.33])
    assert mc_tolerance(s, 1000)["pct_bias"][0] == pytest.approx(2.05, abs=0.01)
    with pytest.raises(ValueError):
        mc_tolerance(s, 99)


def test_run_shape_and_truth_shared_across_sizes():
    out = run(small_run(), threads=1)
    assert [(s.n_subset, s.method) for s in out] == [
        (50, "true"), (50, "naive"), (50, "rc_case1"), (200, "true"), (200, "naive"), (200, "rc_case1")]
    np.testing.assert_array_equal(out[0].estimates, out[3].estimates)
    np.testing.assert_array_equal(out[1].estimates, out[4].estimates)
    assert not np.array_equal(out[2].estimates, out[5].estimates)


def test_run_deterministic_and_thread_invariant():
    a = run(small_run(), threads=1)
    b = run(small_run(), threads=1)
    c = run(small_run(), threads=2, chunk=5)
    assert to_csv(a) == to_csv(b) == to_csv(c)
    for x, y in zip(a, c):
        np.testing.assert_array_equal(x.estimates, y.estimates)


def test_zero_error_methods_identical():
    spec = zero_error(get_scenario("scenario2"))
    out = run(RunSpec(spec, ["true", "naive", "rc_case1", "mm_case1"], 10, base_seed=1), threads=1)
    ref = out[0].estimates
    for s in out[1:]:
        np.testing.assert_allclose(s.estimates, ref, atol=1e-10)
        np.testing.assert_allclose(s.pct_bias, out[0].pct_bias, atol=1e-8)


def test_failed_replicates_counted():
    spec = get_scenario("scenario1_bx1").with_overrides({"subset_n": 3, "sigma_x": [[0.05]]})
    out = run(RunSpec(spec, ["rc_case1"], 40, base_seed=2), threads=1)
    s = out[0]
    assert s.n_failed > 0
    assert s.estimates.shape[0] == 40 - s.n_failed


def test_all_failed_raises():
    spec = get_scenario("whi").with_overrides({"cohort_n": 200, "subset_n": 3})
    with pytest.raises(AllReplicatesFailed):
        run(RunSpec(spec, ["rc_case3"], 3), threads=1)


def test_runspec_validation():
    with pytest.raises(InvalidScenario):
        run(small_run(methods=["rc_case3"]), threads=1)
    with pytest.raises(ValueError):
        run(small_run(replicates=0), threads=1)
    with pytest.raises(InvalidScenario):
        run(small_run(subset_sizes=[1000]), threads=1)


def test_csv_and_json_layout():
    out = run(small_run(replicates=4, subset_sizes=None), threads=1)
    lines = to_csv(out).splitlines()
    assert lines[0] == ",".join(CSV_COLUMNS)
    assert len(lines) == 1 + 3 * 3
    first = lines[1].split(",")
    assert first[:4] == ["scenario2", "200", "true", "beta0"]
    docs = json.loads(to_json(out))
    assert docs[2]["method"] == "rc_case1" and docs[2]["coef"] == ["beta0", "beta_x", "beta_z"]


def test_bootstrap_variance_in_run():
    out = run(small_run(methods=["mm_case1"], replicates=3, subset_sizes=[100],
                        variance_method="bootstrap:10"), threads=1)
    assert np.all(np.isfinite(out[0].ase))
