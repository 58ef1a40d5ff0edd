from __future__ import annotations

import numpy as np
import pytest

from causalfair.dataset import ColumnSpec, Dataset, SfmRoles
from causalfair.effects import Contrast, effect_ledger
from causalfair.errors import ConfigError
from causalfair.estimator import SfmEstimator
from causalfair.extensions import (
    ThresholdCurve,
    UtilitySpec,
    binarize,
    expected_effect,
    group_average_effect,
    group_average_vectors,
    per_state_effects,
    stepwise_decompose,
    threshold_sweep,
)

from .conftest import adult_dataset, random_dataset

KINDS = ("tv", "te", "se", "de", "ie")


def _numeric_y(seed: int = 0, n: int = 400) -> tuple[Dataset, SfmRoles]:
    d, r = random_dataset(seed, 1, 1, n=n, y_card=4, x_card=3)
    return d, r


def test_per_state_effects_sum_to_zero():
    d, r = _numeric_y()
    est = SfmEstimator.fit(d, r)
    for k in KINDS:
        vals = per_state_effects(est, 0, 1, k)
        assert list(vals) == [0, 1, 2, 3]
        assert abs(sum(vals.values())) < 1e-12


def test_binary_per_state_conjugate(toy, toy_roles):
    est = SfmEstimator.fit(toy, toy_roles)
    vals = per_state_effects(est, "a", "b", "tv")
    assert vals[0] == pytest.approx(-vals[1], abs=1e-15)


def test_indicator_utility_equals_state_effect():
    d, r = random_dataset(5, 1, 1, n=200)
    est = SfmEstimator.fit(d, r)
    for k in KINDS:
        got = expected_effect(est, 0, 1, k, UtilitySpec({0: 0.0, 1: 1.0}))
        assert got == pytest.approx(per_state_effects(est, 0, 1, k)[1], abs=1e-15)


def test_constant_utility_is_zero():
    d, r = _numeric_y(1)
    est = SfmEstimator.fit(d, r)
    for k in KINDS:
        assert abs(expected_effect(est, 0, 2, k, UtilitySpec({s: 3.5 for s in range(4)}))) < 1e-12


def test_utility_affine_invariance():
    d, r = _numeric_y(2)
    est = SfmEstimator.fit(d, r)
    base = {0: 0.3, 1: -1.0, 2: 2.0, 3: 0.5}
    shifted = UtilitySpec({s: 2.5 * v - 7.0 for s, v in base.items()})
    for k in KINDS:
        assert expected_effect(est, 0, 1, k, shifted) == pytest.approx(
            2.5 * expected_effect(est, 0, 1, k, UtilitySpec(base)), abs=1e-12
        )


def test_identity_utility_is_expectation():
    d, r = _numeric_y(3)
    est = SfmEstimator.fit(d, r)
    vals = per_state_effects(est, 0, 1, "te")
    assert expected_effect(est, 0, 1, "te") == pytest.approx(sum(s * v for s, v in vals.items()), abs=1e-12)


def test_utility_errors(toy, toy_roles):
    est = SfmEstimator.fit(toy, toy_roles)
    with pytest.raises(ConfigError):
        UtilitySpec({0: 1.0}).vector(est)
    with pytest.raises(ConfigError):
        UtilitySpec({0: 1.0, 1: float("inf")}).vector(est)
    with pytest.raises(ConfigError):
        expected_effect(est, "a", "b", "bogus")


# ---------------------------------------------------------------- group averages


def test_singleton_groups_equal_pairwise():
    d, r = random_dataset(7, 1, 1, n=300, x_card=4)
    est = SfmEstimator.fit(d, r)
    led = effect_ledger(est, Contrast(1, 3, 1))
    for weighting in ("arithmetic", "marginal-weighted"):
        avg = group_average_effect(est, [1], [3], "de", weighting, y=1)
        assert avg.value == pytest.approx(led.de, abs=1e-15)
        assert len(avg.pairs) == 1


def test_uniform_marginals_weighted_equals_arithmetic():
    rng = np.random.default_rng(4)
    x = np.repeat(np.arange(4), 50)
    z = rng.integers(0, 2, 200)
    y = rng.integers(0, 2, 200)
    cols = tuple(ColumnSpec(nm, "integer", tuple(range(k))) for nm, k in (("z", 2), ("x", 4), ("y", 2)))
    est = SfmEstimator.fit(Dataset(cols, np.column_stack([z, x, y])), SfmRoles("x", "y", ("z",), (), (0,), (1,), 1))
    for k in KINDS:
        a = group_average_effect(est, [0, 1], [2, 3], k, "arithmetic", y=1).value
        w = group_average_effect(est, [0, 1], [2, 3], k, "marginal-weighted", y=1).value
        assert a == pytest.approx(w, abs=1e-12)


def test_group_average_preserves_identities():
    d, r = random_dataset(8, 2, 2, n=400, x_card=4)
    est = SfmEstimator.fit(d, r)
    for weighting in ("arithmetic", "marginal"):
        v = {k: vec[1] for k, vec in group_average_vectors(est, [0, 1], [2, 3], weighting).items()}
        assert v["tv"] == pytest.approx(v["te"] + v["se"], abs=1e-9)
        assert v["te"] == pytest.approx(v["de"] - v["ie_rev"], abs=1e-9)


def test_group_average_weights_and_errors():
    d, r = random_dataset(9, 1, 0, n=300, x_card=4)
    est = SfmEstimator.fit(d, r)
    avg = group_average_effect(est, [0, 1], [2, 3], "te", "marginal-weighted", y=1)
    assert sum(p["weight"] for p in avg.pairs) == pytest.approx(1.0)
    assert avg.value == pytest.approx(sum(p["weight"] * p["value"] for p in avg.pairs))
    with pytest.raises(ConfigError):
        group_average_effect(est, [], [2], "te", y=1)
    with pytest.raises(ConfigError):
        group_average_effect(est, [0, 2], [2], "te", y=1)
    with pytest.raises(ConfigError):
        group_average_effect(est, [0], [2], "te", "median", y=1)


# ---------------------------------------------------------------- stepwise


@pytest.mark.parametrize("seed", range(4))
def test_stepwise_telescopes(seed):
    d, r = random_dataset(seed, 2, 1, n=300, x_card=5)
    est = SfmEstimator.fit(d, r)
    order = [3, 0, 4, 1, 2]
    s = stepwise_decompose(est, order, 1)
    assert len(s.steps) == 4
    for k in ("tv", "te", "se"):
        assert s.cumulative(k)[-1] == pytest.approx(s.endpoint[k], abs=1e-9)
        assert s.residuals[k] <= 1e-9
    assert set(s.non_additive) == {"de", "ie_rev"}


def test_stepwise_two_states_single_step():
    d, r = random_dataset(3, 1, 1, n=200, x_card=3)
    est = SfmEstimator.fit(d, r)
    s = stepwise_decompose(est, [0, 2], 1)
    led = effect_ledger(est, Contrast(0, 2, 1))
    assert s.steps[0]["te"] == led.te and s.steps[0]["de"] == led.de
    counts = np.bincount(d.codes_of("x"), minlength=3)
    assert s.steps[0]["n_rows"] == counts[0] + counts[2]
    with pytest.raises(ConfigError):
        stepwise_decompose(est, [0], 1)


@pytest.mark.slow
def test_adult_education_stepwise(adult_csv):
    d, cfg = adult_dataset(adult_csv, "education")
    est = SfmEstimator.fit(d, cfg.roles)
    s = stepwise_decompose(est, cfg.stepwise_states, ">50K")
    cum = s.cumulative("te")
    assert cum[-1] == pytest.approx(0.47, abs=0.05)
    assert all(b > a for a, b in zip(cum, cum[1:]))
    jumps = [st["te"] for st in s.steps]
    assert sorted(range(len(jumps)), key=jumps.__getitem__)[-2:] in ([6, 7], [7, 6])


# ---------------------------------------------------------------- threshold sweep


def _hours_like(n: int = 300) -> tuple[Dataset, SfmRoles]:
    rng = np.random.default_rng(1)
    x = rng.integers(0, 2, n)
    w = rng.integers(0, 3, n)
    h = np.clip(rng.normal(35 + 5 * x + 2 * w, 8).round(), 1, 80).astype(int)
    states = tuple(sorted(set(h.tolist())))
    cols = (
        ColumnSpec("x", "integer", (0, 1)),
        ColumnSpec("w", "integer", (0, 1, 2)),
        ColumnSpec("h", "integer", states),
    )
    codes = np.column_stack([x, w, np.searchsorted(states, h)])
    return Dataset(cols, codes), SfmRoles("x", "h", (), ("w",), (0,), (1,))


def test_binarize_strictness():
    d, _ = _hours_like()
    h = np.asarray(d.column("h").states)[d.codes_of("h")]
    strict = binarize(d, "h", 40, strict=True)
    inclusive = binarize(d, "h", 40, strict=False)
    assert strict.codes_of("h").sum() == (h > 40).sum()
    assert inclusive.codes_of("h").sum() == (h >= 40).sum()


def test_sweep_identities_and_range():
    d, r = _hours_like()
    curve = threshold_sweep(d, r, [20, 30, 35, 40, 45, 50])
    for i in range(len(curve.grid)):
        v = {k: curve.values[k][i] for k in curve.values}
        assert v["tv"] == pytest.approx(v["te"] + v["se"], abs=1e-12)
        assert v["te"] == pytest.approx(v["de"] - v["ie"], abs=1e-9)
        assert all(-1 <= x <= 1 for x in v.values())
    assert set(curve.argmax) == {"tv", "te", "de", "ie", "se"}
    assert len(curve.rows()) == 6


def test_sweep_degenerate_thresholds_zero():
    d, r = _hours_like()
    curve = threshold_sweep(d, r, [-5.0, 1000.0])
    for vals in curve.values.values():
        assert vals == [0.0, 0.0]


def test_sweep_default_grid_and_errors(toy, toy_roles):
    d, r = _hours_like(60)
    curve = threshold_sweep(d, r)
    assert curve.grid == sorted({float(v) for v in d.column("h").states})
    with pytest.raises(ConfigError):
        ThresholdCurve([2.0, 1.0], {"te": [0.0, 0.0]}, 0, 1, True)
    with pytest.raises(ConfigError):
        threshold_sweep(d, r, [])
    with pytest.raises(ConfigError):
        threshold_sweep(d, r, [10], kinds=("nope",))
    cat = Dataset((ColumnSpec("x", "categorical", ("a", "b")), ColumnSpec("y", "categorical", ("p", "q"))), np.array([[0, 0], [1, 1]]))
    with pytest.raises(ConfigError):
        threshold_sweep(cat, SfmRoles("x", "y", (), (), ("a",), ("b",)), [1])


@pytest.mark.slow
def test_adult_hours_sweep(adult_csv):
    d, cfg = adult_dataset(adult_csv, "hours_sweep")
    curve = threshold_sweep(d, cfg.roles, cfg.sweep_grid)
    assert 38 <= curve.argmax["te"] <= 40
    te, de = curve.values["te"], curve.values["de"]
    assert all(b <= a for a, b in zip(te, de))
    i39, i40 = curve.grid.index(39.0), curve.grid.index(40.0)
    assert te[i39] == pytest.approx(0.2088, abs=0.03)
    assert te[i40] < te[i39]


@pytest.mark.slow
def test_adult_race_averages_cancel(adult_frame, tmp_path):
    cols = ["race", "income", "sex", "age", "occupation"]
    sub = adult_frame[cols]
    sub = sub[(sub != "").all(axis=1)].copy()
    path = tmp_path / "race.csv"
    sub.to_csv(path, index=False)
    from causalfair.pipeline import AnalysisConfig, load_dataset

    cfg = AnalysisConfig.from_dict(
        {
            "x": "race",
            "y": "income",
            "z": ["sex", "age"],
            "w": ["occupation"],
            "x0_states": ["Caucasian", "Asian-American"],
            "x1_states": ["African-American", "Indigenous", "Others"],
            "y_target": ">50K",
            "bins": {"age": {"edges": [30, 40, 50, 60]}},
        }
    )
    d = load_dataset(path, cfg)
    est = SfmEstimator.fit(d, cfg.roles)
    avg = group_average_effect(est, cfg.roles.x0_states, cfg.roles.x1_states, "de", y=">50K")
    assert len(avg.pairs) == 6
    assert avg.mixed_signs or abs(avg.value) < max(abs(p["value"]) for p in avg.pairs)
