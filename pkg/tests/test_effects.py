from __future__ import annotations

import numpy as np
import pytest

from causalfair.dataset import ColumnSpec, Dataset, SfmRoles
from causalfair.effects import (
    Contrast,
    direct_effect,
    effect_ledger,
    effect_vectors,
    indirect_effect,
    spurious_effect,
    total_effect,
    total_variation,
)
from causalfair.errors import ConfigError, UnidentifiableCellError
from causalfair.estimator import SfmEstimator
from causalfair.scm import Endogenous, Exogenous, ScmSpec, exact_observational, ground_truth_ledger, random_sfm_scm

from .conftest import random_dataset


def test_toy_total_variation(toy, toy_roles):
    est = SfmEstimator.fit(toy, toy_roles, alpha=1.0)
    c = Contrast("a", "b", 1)
    assert total_variation(est, c) == pytest.approx(0.25, abs=1e-15)
    led = effect_ledger(est, c)
    assert led.tv == led.te == led.de == pytest.approx(0.25)
    assert led.se == 0 and led.ie == 0 and led.ie_reversed == 0


def test_identical_groups_zero(toy, toy_roles):
    est = SfmEstimator.fit(toy, toy_roles)
    led = effect_ledger(est, Contrast("b", "b", 1))
    assert all(v == 0 for v in led.values().values())


def test_alpha_zero_unobserved_contrast_state():
    cols = (ColumnSpec("x", "categorical", ("a", "b", "c")), ColumnSpec("y", "integer", (0, 1)))
    d = Dataset(cols, np.array([[0, 0], [1, 1]]))
    est = SfmEstimator.fit(d, SfmRoles("x", "y", (), (), ("a",), ("c",), 1), alpha=0.0)
    with pytest.raises(UnidentifiableCellError):
        total_variation(est, Contrast("a", "c", 1))


def test_missing_target_state(toy, toy_roles):
    est = SfmEstimator.fit(toy, toy_roles)
    with pytest.raises(ConfigError):
        effect_ledger(est, Contrast("a", "b", None))


def _y_equals_x() -> ScmSpec:
    exo = [Exogenous("U_X", (0.3, 0.7))]
    endo = [
        Endogenous("X", (0, 1), ("U_X",), np.array([0, 1])),
        Endogenous("Y", (0, 1), ("X",), np.array([0, 1])),
    ]
    return ScmSpec(exo, endo, SfmRoles("X", "Y", (), (), (0,), (1,), 1))


def test_direct_path_only_scm():
    s = _y_equals_x()
    truth = ground_truth_ledger(s, Contrast(0, 1, 1))
    assert truth.tv == truth.te == truth.de == pytest.approx(1.0)
    assert truth.ie == truth.se == 0
    est = exact_observational(s).estimator(s.roles)
    led = effect_ledger(est, Contrast(0, 1, 1))
    for k, v in truth.values().items():
        assert led.values()[k] == pytest.approx(v, abs=1e-12)


def test_empty_z_te_equals_tv():
    d, r = random_dataset(11, 0, 2, n=200)
    est = SfmEstimator.fit(d, r)
    c = Contrast(0, 1, 1)
    assert total_effect(est, c) == pytest.approx(total_variation(est, c), abs=1e-12)
    assert spurious_effect(est, c) == pytest.approx(0, abs=1e-12)


def test_empty_w_de_equals_te():
    d, r = random_dataset(12, 2, 0, n=200)
    est = SfmEstimator.fit(d, r)
    c = Contrast(0, 1, 1)
    assert direct_effect(est, c) == pytest.approx(total_effect(est, c), abs=1e-12)
    assert indirect_effect(est, c) == 0
    assert indirect_effect(est, c, reversed=True) == 0


@pytest.mark.parametrize("seed", range(6))
def test_identities_and_range(seed):
    d, r = random_dataset(seed, 2, 2, n=150, y_card=3, x_card=3)
    est = SfmEstimator.fit(d, r)
    for y in (0, 1, 2):
        led = effect_ledger(est, Contrast(0, 2, y))
        assert led.se == led.tv - led.te
        assert abs(led.te - (led.de - led.ie_reversed)) <= 1e-9
        assert all(-1 <= v <= 1 for v in led.values().values())


def test_independent_x_effects_small():
    rng = np.random.default_rng(0)
    n = 20000
    cols = tuple(ColumnSpec(nm, "integer", (0, 1)) for nm in ("z", "x", "w", "y"))
    z = rng.integers(0, 2, n)
    w = (rng.random(n) < 0.3 + 0.4 * z).astype(int)
    y = (rng.random(n) < 0.2 + 0.3 * z + 0.3 * w).astype(int)
    x = rng.integers(0, 2, n)
    d = Dataset(cols, np.column_stack([z, x, w, y]))
    est = SfmEstimator.fit(d, SfmRoles("x", "y", ("z",), ("w",), (0,), (1,), 1))
    led = effect_ledger(est, Contrast(0, 1, 1))
    assert all(abs(v) < 0.03 for v in led.values().values())


@pytest.mark.parametrize("seed", range(40))
def test_oracle_equivalence(seed):
    s = random_sfm_scm(seed)
    est = exact_observational(s).estimator(s.roles)
    for y in s.variable("Y").states:
        c = Contrast(0, 1, y)
        truth = ground_truth_ledger(s, c)
        got = effect_ledger(est, c)
        for k, v in truth.values().items():
            assert got.values()[k] == pytest.approx(v, abs=1e-9), k


def test_vectors_sum_to_zero_over_y():
    d, r = random_dataset(3, 1, 1, n=100, y_card=4)
    vecs = effect_vectors(SfmEstimator.fit(d, r), 0, 1)
    for v in vecs.values():
        assert abs(v.sum()) < 1e-12
