import csv

import numpy as np
import pytest

from hhcompliance import analyze, synth
from hhcompliance.exceptions import InferenceError, LookupFailure
from hhcompliance.model import Hypothesis
from oracles import paired_t, student_t_two_sided


def _hyp(names, coef, intercept=0.0):
    return Hypothesis(list(names), coef, intercept, [0.01] * len(names))


def test_marginal_direct_substitution():
    # x2 averages to 0.5; evaluating x1 = 0.3 gives 1*0.3 + 1*0.5
    X = np.array([[0.3, 0.0], [0.7, 1.0], [0.5, 0.25], [0.1, 0.75]])
    curve = analyze.marginal_effect(_hyp(["x1", "x2"], [1.0, 1.0]), X, ["x1", "x2"], "x1")
    i = int(np.flatnonzero(curve.values == 0.3)[0])
    assert curve.predicted_rate[i] == pytest.approx(0.8, abs=1e-15)


def test_marginal_slope_equals_coefficient():
    rng = np.random.default_rng(0)
    X = rng.normal(size=(300, 3))
    X[:, 2] = rng.integers(0, 2, 300)
    hyp = _hyp(["a", "b", "c"], [0.37, -1.25, 0.08], 0.4)
    for name, h in zip(hyp.feature_names, hyp.coefficients):
        curve = analyze.marginal_effect(hyp, X, ["a", "b", "c"], name)
        assert curve.slope() == pytest.approx(h, rel=1e-10)


def test_marginal_ignores_unretained_columns():
    rng = np.random.default_rng(1)
    X = rng.normal(size=(50, 3))
    hyp = _hyp(["c"], [0.5], 0.1)
    curve = analyze.marginal_effect(hyp, X, ["a", "b", "c"], "c")
    np.testing.assert_allclose(curve.predicted_rate, 0.1 + 0.5 * curve.values, rtol=1e-14)


def test_marginal_binary_two_point_curve():
    rng = np.random.default_rng(2)
    X = np.column_stack([rng.normal(size=100), rng.integers(0, 2, 100)])
    curve = analyze.marginal_effect(_hyp(["x", "fac"], [0.2, -0.07]), X, ["x", "fac"], "fac")
    assert curve.is_binary and curve.values.tolist() == [0.0, 1.0]
    assert curve.predicted_rate[1] - curve.predicted_rate[0] == pytest.approx(-0.07, rel=1e-12)


def test_marginal_unknown_feature():
    X = np.zeros((5, 2))
    with pytest.raises(LookupFailure):
        analyze.marginal_effect(_hyp(["a"], [1.0]), X, ["a", "b"], "b")
    with pytest.raises(LookupFailure):
        analyze.marginal_effect(_hyp(["z"], [1.0]), X, ["a", "b"], "z")


def test_kde_matches_gaussian_mixture_and_integrates_to_one():
    rng = np.random.default_rng(3)
    col = rng.gamma(2.0, 1.0, 400)
    X = col[:, None]
    curve = analyze.marginal_effect(_hyp(["t"], [0.1]), X, ["t"], "t")
    n = len(col)
    bw = col.std(ddof=1) * (n * 3 / 4) ** (-1 / 5)
    assert curve.bandwidth == pytest.approx(bw, rel=1e-12)

    def mixture(x):
        z = (np.asarray(x)[:, None] - col[None, :]) / bw
        return np.exp(-0.5 * z**2).sum(axis=1) / (n * bw * np.sqrt(2 * np.pi))

    np.testing.assert_allclose(curve.density, mixture(curve.values), rtol=1e-10)
    grid = np.linspace(col.min() - 5 * bw, col.max() + 5 * bw, 20001)
    assert np.trapezoid(mixture(grid), grid) == pytest.approx(1.0, abs=1e-3)


def test_write_curve(tmp_path):
    X = np.column_stack([np.linspace(0, 1, 20)])
    curve = analyze.marginal_effect(_hyp(["t"], [2.0]), X, ["t"], "t")
    path = tmp_path / "t.csv"
    analyze.write_curve(path, curve)
    rows = list(csv.reader(open(path)))
    assert rows[0] == ["value", "predicted_rate", "density"]
    assert len(rows) == 21


def test_paired_ttest_hand_example():
    diffs = [0.1, 0.1, 0.2, 0.0, 0.1]
    mean, t, p, degenerate = analyze.paired_ttest(diffs)
    ref_t, df = paired_t(diffs)
    assert not degenerate and df == 4
    assert mean == pytest.approx(0.1, abs=1e-12)
    assert t == pytest.approx(3.1623, abs=1e-4)
    assert t == pytest.approx(ref_t, rel=1e-12)
    assert p == pytest.approx(0.0341, abs=1e-4)
    assert p == pytest.approx(student_t_two_sided(ref_t, df), rel=1e-9)


def test_paired_ttest_degenerate():
    assert analyze.paired_ttest([0.0, 0.0, 0.0]) == (0.0, 0.0, 1.0, True)
    mean, t, p, degenerate = analyze.paired_ttest([0.25, 0.25])
    assert (mean, p, degenerate) == (0.25, 0.0, True) and t == np.inf
    with pytest.raises(InferenceError):
        analyze.paired_ttest([0.1])


def _facility(seed, n=200, coupling=0.0):
    rng = np.random.default_rng(seed)
    temp = rng.uniform(250, 300, n)
    comp = 0.3 + coupling * (temp - 275) / 50 + 0.05 * rng.normal(size=n)
    return comp, temp


def test_decile_identical_values_is_degenerate():
    comp = np.linspace(0.1, 0.9, 40)
    res = analyze.decile_ttest(comp, np.full(40, 280.0))
    assert res.mean_diff == 0.0 and res.p_value == 1.0 and res.degenerate
    assert res.sample_size == 4


def test_decile_needs_twenty_shifts():
    with pytest.raises(InferenceError):
        analyze.decile_ttest(np.arange(19.0), np.arange(19.0))
    assert analyze.decile_ttest(np.arange(20.0), np.arange(20.0)).sample_size == 2


def test_decile_matches_direct_computation():
    comp, temp = _facility(4, n=137)
    res = analyze.decile_ttest(comp, temp)
    order = np.argsort(comp)
    q = 13
    scaled = (temp - temp.min()) / (temp.max() - temp.min())
    diffs = scaled[order[-q:]] - scaled[order[:q]]
    t, df = paired_t(diffs.tolist())
    assert res.sample_size == q
    assert res.t_statistic == pytest.approx(t, rel=1e-10)
    assert res.p_value == pytest.approx(student_t_two_sided(t, df), rel=1e-8)


def test_decile_shuffle_invariant_and_negation_flips():
    comp, temp = _facility(5)
    base = analyze.decile_ttest(comp, temp)
    perm = np.random.default_rng(0).permutation(len(comp))
    shuffled = analyze.decile_ttest(comp[perm], temp[perm])
    assert (shuffled.mean_diff, shuffled.t_statistic, shuffled.p_value) == (
        base.mean_diff,
        base.t_statistic,
        base.p_value,
    )
    neg = analyze.decile_ttest(-comp, temp)
    assert neg.mean_diff == pytest.approx(-base.mean_diff, abs=1e-15)
    assert neg.p_value == pytest.approx(base.p_value, rel=1e-12)


def test_decile_affine_rescaling():
    rng = np.random.default_rng(6)
    comp = rng.uniform(0.1, 0.9, 150)
    temp = rng.integers(-40, 40, 150).astype(float)
    base = analyze.decile_ttest(comp, temp)
    # power-of-two scale and integer shift keep every intermediate exact
    exact = analyze.decile_ttest(comp, 4.0 * temp + 273.0)
    assert (exact.t_statistic, exact.p_value) == (base.t_statistic, base.p_value)
    # Kelvin to Fahrenheit is not exactly representable
    other = analyze.decile_ttest(comp, 1.8 * (temp + 273.15) - 459.67)
    assert other.t_statistic == pytest.approx(base.t_statistic, rel=1e-12)
    assert other.p_value == pytest.approx(base.p_value, rel=1e-12)


def test_planted_temperature_coupling_is_flagged(tmp_path):
    from conftest import load_corpus

    spec = synth.SynthSpec(facility_count=2, days=150, coefficients={"air_temp": 0.06}, noise_sd=0.05, seed=5)
    paths = synth.generate(spec).write(tmp_path)
    facilities, _, _, joined, _ = load_corpus(paths)
    results, skipped = analyze.facility_ttests(joined, facilities)
    assert not skipped
    temps = [r for r in results if r.feature == "temperature"]
    assert len(temps) == 2
    for r in temps:
        assert r.mean_diff > 0 and r.p_value < 0.05 and r.flagged


def test_write_ttests(tmp_path, small_corpus):
    from conftest import load_corpus

    _, paths = small_corpus
    facilities, _, _, joined, _ = load_corpus(paths)
    results, _ = analyze.facility_ttests(joined, facilities)
    path = tmp_path / "ttest.csv"
    analyze.write_ttests(path, results, facilities)
    rows = list(csv.DictReader(open(path)))
    assert list(rows[0]) == analyze.TTEST_FIELDS
    assert len(rows) == 2 * len(facilities)
    assert all(r["state"] == facilities[r["facility"]].state for r in rows)
